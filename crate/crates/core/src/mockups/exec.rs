use super::scratch::Arena;
use super::{
    check_kind, chunk_bound, chunk_counts, effective_root, extra_memory_required, pad_count,
    rank_requirement, MockupConfig, MockupId, ScratchBuffers,
};
use crate::collectives::{self as coll, CollectiveCall, CollectiveKind, DefaultAlgorithms};
use crate::error::{Error, Result};
use crate::runtime::{Comm, Datatype, ReduceOp};

/// Runs `call` through mock-up `id` on this rank.
///
/// The constituent collectives use the algorithms in `defaults`. Scratch
/// space comes from `scratch`; if the requirement does not fit, the call
/// fails with [`Error::InsufficientScratch`] before touching any buffer, on
/// every rank alike as long as all ranks have equal arenas.
#[allow(clippy::too_many_arguments)]
pub async fn execute_mockup(
    comm: &Comm,
    id: MockupId,
    call: &CollectiveCall,
    send: &[u8],
    recv: &mut [u8],
    scratch: &mut ScratchBuffers,
    cfg: &MockupConfig,
    defaults: &DefaultAlgorithms,
) -> Result<()> {
    check_kind(id, call)?;
    let p = comm.size();
    let rank = comm.rank();
    call.check_buffers(p, rank, send, recv)?;
    let need = extra_memory_required(id, call, p, cfg)?;
    if need.msg_bytes > scratch.msg_capacity() {
        return Err(Error::InsufficientScratch {
            arena: "message",
            needed: need.msg_bytes,
            capacity: scratch.msg_capacity(),
        });
    }
    if need.int_elems > scratch.int_capacity() {
        return Err(Error::InsufficientScratch {
            arena: "integer",
            needed: need.int_bytes(),
            capacity: scratch.int_capacity() * crate::runtime::INT_EXTENT,
        });
    }
    let root = effective_root(call);
    let mine = rank_requirement(id, call, p, rank == root, cfg);
    let (mut msg, mut ints) = scratch.arenas();
    let ctx = Ctx {
        comm,
        call,
        defaults,
        p,
        rank,
        root,
        n: call.count,
        e: call.datatype.extent(),
    };
    ctx.run(id, send, recv, &mut msg, &mut ints, cfg).await?;
    debug_assert_eq!(
        (msg.used(), ints.used()),
        (mine.msg_bytes, mine.int_elems),
        "{id} allocated a different amount than it accounts for"
    );
    Ok(())
}

struct Ctx<'c> {
    comm: &'c Comm,
    call: &'c CollectiveCall,
    defaults: &'c DefaultAlgorithms,
    p: usize,
    rank: usize,
    root: usize,
    n: usize,
    e: usize,
}

fn fill_regular(counts: &mut [i32], displs: &mut [i32], count: usize) {
    for (i, (c, d)) in counts.iter_mut().zip(displs.iter_mut()).enumerate() {
        *c = count as i32;
        *d = (i * count) as i32;
    }
}

impl Ctx<'_> {
    fn alg(&self, kind: CollectiveKind) -> coll::Variant {
        self.defaults.variant(kind)
    }

    fn op(&self) -> Result<ReduceOp> {
        self.call.op.ok_or_else(|| {
            Error::InvalidCall(format!("{} needs a reduction operator", self.call.kind))
        })
    }

    /// Counts and displacements of `count` elements per rank.
    fn regular_layout<'a>(
        &self,
        ints: &mut Arena<'a, i32>,
        count: usize,
    ) -> Result<(&'a mut [i32], &'a mut [i32])> {
        let counts = ints.alloc(self.p)?;
        let displs = ints.alloc(self.p)?;
        fill_regular(counts, displs, count);
        Ok((counts, displs))
    }

    /// Round-robin chunk counts for the reduce-scatter based mock-ups,
    /// with prefix-sum displacements.
    fn chunk_layout<'a>(
        &self,
        ints: &mut Arena<'a, i32>,
        cfg: &MockupConfig,
    ) -> Result<(&'a mut [i32], &'a mut [i32])> {
        let counts = ints.alloc(self.p)?;
        let displs = ints.alloc(self.p)?;
        let mut offset = 0;
        for (i, c) in chunk_counts(self.n, self.p, cfg.effective_chunk(self.n))
            .into_iter()
            .enumerate()
        {
            counts[i] = c as i32;
            displs[i] = offset as i32;
            offset += c;
        }
        Ok((counts, displs))
    }

    async fn run(
        &self,
        id: MockupId,
        send: &[u8],
        recv: &mut [u8],
        msg: &mut Arena<'_, u8>,
        ints: &mut Arena<'_, i32>,
        cfg: &MockupConfig,
    ) -> Result<()> {
        use CollectiveKind as K;
        use MockupId::*;
        let Ctx {
            comm,
            p,
            rank,
            root,
            n,
            e,
            ..
        } = *self;
        let dt = self.call.datatype;
        let m = n * e;
        let is_root = rank == root;

        match id {
            AllgatherAsGatherBcast => {
                coll::gather(comm, self.alg(K::Gather), 0, send, recv).await?;
                coll::bcast(comm, self.alg(K::Bcast), 0, None, recv).await
            }
            AllgatherAsAlltoall => {
                let big = msg.alloc(p * m)?;
                for block in big.chunks_exact_mut(m.max(1)).take(p) {
                    block.copy_from_slice(send);
                }
                coll::alltoall(comm, self.alg(K::Alltoall), big, recv).await
            }
            AllgatherAsAllreduce => {
                let big = msg.alloc(p * m)?;
                big[rank * m..(rank + 1) * m].copy_from_slice(send);
                coll::allreduce(
                    comm,
                    self.alg(K::Allreduce),
                    ReduceOp::Bor,
                    Datatype::Byte,
                    big,
                    recv,
                )
                .await
            }
            AllgatherAsAllgatherv => {
                let (counts, displs) = self.regular_layout(ints, n)?;
                coll::allgatherv(comm, send, recv, counts, displs, e).await
            }
            AllreduceAsReduceBcast => {
                coll::reduce(comm, self.alg(K::Reduce), 0, self.op()?, dt, send, recv).await?;
                coll::bcast(comm, self.alg(K::Bcast), 0, None, recv).await
            }
            AllreduceAsReducescatterblockAllgather => {
                let padded_n = pad_count(n, p);
                let padded = msg.alloc(padded_n * e)?;
                let block = msg.alloc(padded_n / p * e)?;
                padded[..m].copy_from_slice(send);
                coll::reduce_scatter_block(
                    comm,
                    self.alg(K::ReduceScatterBlock),
                    self.op()?,
                    dt,
                    padded,
                    block,
                )
                .await?;
                coll::allgather(comm, self.alg(K::Allgather), block, padded).await?;
                recv.copy_from_slice(&padded[..m]);
                Ok(())
            }
            AllreduceAsReducescatterAllgatherv => {
                let chunk = msg.alloc(chunk_bound(n, p, cfg.effective_chunk(n)) * e)?;
                let (counts, displs) = self.chunk_layout(ints, cfg)?;
                let mine = &mut chunk[..counts[rank] as usize * e];
                coll::reduce_scatter(
                    comm,
                    self.alg(K::ReduceScatter),
                    self.op()?,
                    dt,
                    send,
                    mine,
                    counts,
                )
                .await?;
                coll::allgatherv(comm, mine, recv, counts, displs, e).await
            }
            AlltoallAsAlltoallv => {
                let (counts, displs) = self.regular_layout(ints, n)?;
                coll::alltoallv(comm, send, counts, displs, recv, counts, displs, e).await
            }
            BcastAsAllgatherv => {
                let counts = ints.alloc(p)?;
                let displs = ints.alloc(p)?;
                counts[root] = n as i32;
                if is_root {
                    coll::allgatherv(comm, send, recv, counts, displs, e).await
                } else {
                    let tmp = msg.alloc(m)?;
                    coll::allgatherv(comm, &[], tmp, counts, displs, e).await?;
                    recv.copy_from_slice(tmp);
                    Ok(())
                }
            }
            BcastAsScatterAllgather => {
                let padded_n = pad_count(n, p);
                let padded = msg.alloc(padded_n * e)?;
                let block = msg.alloc(padded_n / p * e)?;
                if is_root {
                    padded[..m].copy_from_slice(send);
                }
                coll::scatter(comm, self.alg(K::Scatter), root, padded, block).await?;
                coll::allgather(comm, self.alg(K::Allgather), block, padded).await?;
                recv.copy_from_slice(&padded[..m]);
                Ok(())
            }
            GatherAsAllgather => {
                if is_root {
                    coll::allgather(comm, self.alg(K::Allgather), send, recv).await
                } else {
                    let tmp = msg.alloc(p * m)?;
                    coll::allgather(comm, self.alg(K::Allgather), send, tmp).await
                }
            }
            GatherAsGatherv => {
                let (counts, displs) = self.regular_layout(ints, n)?;
                coll::gatherv(comm, root, send, recv, counts, displs, e).await
            }
            GatherAsReduce => {
                let big = msg.alloc(p * m)?;
                big[rank * m..(rank + 1) * m].copy_from_slice(send);
                coll::reduce(
                    comm,
                    self.alg(K::Reduce),
                    root,
                    ReduceOp::Bor,
                    Datatype::Byte,
                    big,
                    recv,
                )
                .await
            }
            ReduceAsAllreduce => {
                let op = self.op()?;
                if is_root {
                    coll::allreduce(comm, self.alg(K::Allreduce), op, dt, send, recv).await
                } else {
                    let tmp = msg.alloc(m)?;
                    coll::allreduce(comm, self.alg(K::Allreduce), op, dt, send, tmp).await
                }
            }
            ReduceAsReducescatterblockGather => {
                let padded_n = pad_count(n, p);
                let padded = msg.alloc(padded_n * e)?;
                let block = msg.alloc(padded_n / p * e)?;
                padded[..m].copy_from_slice(send);
                coll::reduce_scatter_block(
                    comm,
                    self.alg(K::ReduceScatterBlock),
                    self.op()?,
                    dt,
                    padded,
                    block,
                )
                .await?;
                coll::gather(comm, self.alg(K::Gather), root, block, padded).await?;
                if is_root {
                    recv.copy_from_slice(&padded[..m]);
                }
                Ok(())
            }
            ReduceAsReducescatterGatherv => {
                let chunk = msg.alloc(chunk_bound(n, p, cfg.effective_chunk(n)) * e)?;
                let (counts, displs) = self.chunk_layout(ints, cfg)?;
                let mine = &mut chunk[..counts[rank] as usize * e];
                coll::reduce_scatter(
                    comm,
                    self.alg(K::ReduceScatter),
                    self.op()?,
                    dt,
                    send,
                    mine,
                    counts,
                )
                .await?;
                coll::gatherv(comm, root, mine, recv, counts, displs, e).await
            }
            ReducescatterblockAsReduceScatter => {
                let tmp = if is_root { msg.alloc(m)? } else { &mut [][..] };
                coll::reduce(comm, self.alg(K::Reduce), root, self.op()?, dt, send, tmp).await?;
                coll::scatter(comm, self.alg(K::Scatter), root, tmp, recv).await
            }
            ReducescatterblockAsReducescatter => {
                let counts = ints.alloc(p)?;
                counts.fill((n / p) as i32);
                coll::reduce_scatter(
                    comm,
                    self.alg(K::ReduceScatter),
                    self.op()?,
                    dt,
                    send,
                    recv,
                    counts,
                )
                .await
            }
            ReducescatterblockAsAllreduce => {
                let tmp = msg.alloc(m)?;
                coll::allreduce(comm, self.alg(K::Allreduce), self.op()?, dt, send, tmp).await?;
                let block = recv.len();
                recv.copy_from_slice(&tmp[rank * block..(rank + 1) * block]);
                Ok(())
            }
            ScanAsExscanReducelocal => {
                let op = self.op()?;
                coll::exscan(comm, op, dt, send, recv).await?;
                if rank == 0 {
                    recv.copy_from_slice(send);
                    Ok(())
                } else {
                    comm.reduce_local(op, dt, send, recv)
                }
            }
            ScatterAsBcast => {
                let block = recv.len();
                if is_root {
                    coll::bcast(comm, self.alg(K::Bcast), root, Some(send), &mut []).await?;
                    recv.copy_from_slice(&send[rank * block..(rank + 1) * block]);
                } else {
                    let tmp = msg.alloc(m)?;
                    coll::bcast(comm, self.alg(K::Bcast), root, None, tmp).await?;
                    recv.copy_from_slice(&tmp[rank * block..(rank + 1) * block]);
                }
                Ok(())
            }
            ScatterAsScatterv => {
                let (counts, displs) = self.regular_layout(ints, n / p)?;
                coll::scatterv(comm, root, send, counts, displs, e, recv).await
            }
        }
    }
}
