//! Message schedules of the default collective algorithms.
//!
//! Buffers are raw bytes; counts and displacements of the irregular kinds are
//! in elements of `extent` bytes. Buffers a rank does not use (the receive
//! buffer of a non-root in a gather, say) are ignored.

use std::ops::Range;

use super::{extent as layout_extent, Variant};
use crate::error::{Error, Result};
use crate::runtime::{Comm, Datatype, ReduceOp};

fn unsupported(kind: &str, v: Variant) -> Error {
    Error::InvalidCall(format!("{kind} has no `{v}` algorithm"))
}

fn block(i: usize, m: usize) -> Range<usize> {
    i * m..(i + 1) * m
}

fn segment(counts: &[i32], displs: &[i32], i: usize, e: usize) -> Range<usize> {
    let start = displs[i] as usize * e;
    start..start + counts[i] as usize * e
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::SizeMismatch {
            what,
            expected,
            actual,
        })
    }
}

/// Broadcasts from `root`. The root sends `root_data` if given and `buf`
/// otherwise; every other rank receives into `buf`.
pub async fn bcast(
    comm: &Comm,
    v: Variant,
    root: usize,
    root_data: Option<&[u8]>,
    buf: &mut [u8],
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    match v {
        Variant::Linear => {
            if rank == root {
                let data = root_data.unwrap_or(&*buf);
                for i in 1..p {
                    comm.send((root + i) % p, data)?;
                }
                Ok(())
            } else {
                comm.recv_into(root, buf).await
            }
        }
        Variant::Binomial => {
            let vr = (rank + p - root) % p;
            let mut mask = 1;
            if rank == root {
                while mask < p {
                    mask <<= 1;
                }
            } else {
                while mask < p {
                    if vr & mask != 0 {
                        comm.recv_into((vr - mask + root) % p, buf).await?;
                        break;
                    }
                    mask <<= 1;
                }
            }
            let data = match root_data {
                Some(d) if rank == root => d,
                _ => &*buf,
            };
            mask >>= 1;
            while mask > 0 {
                if vr + mask < p {
                    comm.send((vr + mask + root) % p, data)?;
                }
                mask >>= 1;
            }
            Ok(())
        }
        v => Err(unsupported("BCAST", v)),
    }
}

/// Gathers equal blocks at `root`; `recv` is only used there.
pub async fn gather(
    comm: &Comm,
    v: Variant,
    root: usize,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    let m = send.len();
    match v {
        Variant::Linear => {
            if rank != root {
                return comm.send(root, send);
            }
            recv[block(root, m)].copy_from_slice(send);
            for i in 1..p {
                let src = (root + i) % p;
                comm.recv_into(src, &mut recv[block(src, m)]).await?;
            }
            Ok(())
        }
        Variant::Binomial => {
            // `acc` holds the blocks of relative ranks vr, vr+1, ... gathered so far.
            let vr = (rank + p - root) % p;
            let mut acc = send.to_vec();
            let mut mask = 1;
            while mask < p {
                if vr & mask == 0 {
                    let child = vr | mask;
                    if child < p {
                        let data = comm.recv((child + root) % p).await?;
                        check_len("gathered subtree", mask.min(p - child) * m, data.len())?;
                        acc.extend_from_slice(&data);
                    }
                } else {
                    return comm.send((vr - mask + root) % p, &acc);
                }
                mask <<= 1;
            }
            for j in 0..p {
                recv[block((j + root) % p, m)].copy_from_slice(&acc[block(j, m)]);
            }
            Ok(())
        }
        v => Err(unsupported("GATHER", v)),
    }
}

pub async fn gatherv(
    comm: &Comm,
    root: usize,
    send: &[u8],
    recv: &mut [u8],
    counts: &[i32],
    displs: &[i32],
    e: usize,
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    if rank != root {
        return comm.send(root, send);
    }
    recv[segment(counts, displs, root, e)].copy_from_slice(send);
    for i in 1..p {
        let src = (root + i) % p;
        comm.recv_into(src, &mut recv[segment(counts, displs, src, e)])
            .await?;
    }
    Ok(())
}

/// Scatters equal blocks of the root's `send`, one per rank in rank order.
pub async fn scatter(
    comm: &Comm,
    v: Variant,
    root: usize,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    if v != Variant::Linear {
        return Err(unsupported("SCATTER", v));
    }
    let p = comm.size();
    let rank = comm.rank();
    let m = recv.len();
    if rank != root {
        return comm.recv_into(root, recv).await;
    }
    for i in 1..p {
        let dst = (root + i) % p;
        comm.send(dst, &send[block(dst, m)])?;
    }
    recv.copy_from_slice(&send[block(root, m)]);
    Ok(())
}

pub async fn scatterv(
    comm: &Comm,
    root: usize,
    send: &[u8],
    counts: &[i32],
    displs: &[i32],
    e: usize,
    recv: &mut [u8],
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    if rank != root {
        return comm.recv_into(root, recv).await;
    }
    for i in 1..p {
        let dst = (root + i) % p;
        comm.send(dst, &send[segment(counts, displs, dst, e)])?;
    }
    recv.copy_from_slice(&send[segment(counts, displs, root, e)]);
    Ok(())
}

pub async fn allgather(comm: &Comm, v: Variant, send: &[u8], recv: &mut [u8]) -> Result<()> {
    if v != Variant::Ring {
        return Err(unsupported("ALLGATHER", v));
    }
    let p = comm.size();
    let rank = comm.rank();
    let m = send.len();
    recv[block(rank, m)].copy_from_slice(send);
    let right = (rank + 1) % p;
    let left = (rank + p - 1) % p;
    for r in 0..p - 1 {
        let outgoing = (rank + p - r) % p;
        let incoming = (rank + p - r - 1) % p;
        comm.send(right, &recv[block(outgoing, m)])?;
        comm.recv_into(left, &mut recv[block(incoming, m)]).await?;
    }
    Ok(())
}

/// Every rank sends its block directly to every other rank.
pub async fn allgatherv(
    comm: &Comm,
    send: &[u8],
    recv: &mut [u8],
    counts: &[i32],
    displs: &[i32],
    e: usize,
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    recv[segment(counts, displs, rank, e)].copy_from_slice(send);
    for d in 1..p {
        comm.send((rank + d) % p, send)?;
    }
    for d in 1..p {
        let src = (rank + p - d) % p;
        comm.recv_into(src, &mut recv[segment(counts, displs, src, e)])
            .await?;
    }
    Ok(())
}

pub async fn alltoall(comm: &Comm, v: Variant, send: &[u8], recv: &mut [u8]) -> Result<()> {
    if v != Variant::Pairwise {
        return Err(unsupported("ALLTOALL", v));
    }
    let p = comm.size();
    let rank = comm.rank();
    let m = send.len() / p;
    recv[block(rank, m)].copy_from_slice(&send[block(rank, m)]);
    for r in 1..p {
        let dst = (rank + r) % p;
        let src = (rank + p - r) % p;
        comm.send(dst, &send[block(dst, m)])?;
        comm.recv_into(src, &mut recv[block(src, m)]).await?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub async fn alltoallv(
    comm: &Comm,
    send: &[u8],
    send_counts: &[i32],
    send_displs: &[i32],
    recv: &mut [u8],
    recv_counts: &[i32],
    recv_displs: &[i32],
    e: usize,
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    debug_assert!(layout_extent(send_counts, send_displs) * e <= send.len());
    recv[segment(recv_counts, recv_displs, rank, e)]
        .copy_from_slice(&send[segment(send_counts, send_displs, rank, e)]);
    for r in 1..p {
        let dst = (rank + r) % p;
        let src = (rank + p - r) % p;
        comm.send(dst, &send[segment(send_counts, send_displs, dst, e)])?;
        comm.recv_into(src, &mut recv[segment(recv_counts, recv_displs, src, e)])
            .await?;
    }
    Ok(())
}

/// Reduces every rank's `send` into `recv` at `root`.
pub async fn reduce(
    comm: &Comm,
    v: Variant,
    root: usize,
    op: ReduceOp,
    dt: Datatype,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    match v {
        Variant::Binomial => {
            let vr = (rank + p - root) % p;
            let mut acc = send.to_vec();
            let mut mask = 1;
            while mask < p {
                if vr & mask == 0 {
                    let child = vr | mask;
                    if child < p {
                        let data = comm.recv((child + root) % p).await?;
                        comm.reduce_local(op, dt, &data, &mut acc)?;
                    }
                } else {
                    return comm.send((vr - mask + root) % p, &acc);
                }
                mask <<= 1;
            }
            recv.copy_from_slice(&acc);
            Ok(())
        }
        Variant::Linear => {
            if rank != root {
                return comm.send(root, send);
            }
            recv.copy_from_slice(send);
            for i in 1..p {
                let data = comm.recv((root + i) % p).await?;
                comm.reduce_local(op, dt, &data, recv)?;
            }
            Ok(())
        }
        v => Err(unsupported("REDUCE", v)),
    }
}

pub async fn allreduce(
    comm: &Comm,
    v: Variant,
    op: ReduceOp,
    dt: Datatype,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    match v {
        Variant::RecursiveDoubling => recursive_doubling(comm, op, dt, send, recv).await,
        Variant::ReduceBcast => {
            reduce(comm, Variant::Binomial, 0, op, dt, send, recv).await?;
            bcast(comm, Variant::Binomial, 0, None, recv).await
        }
        v => Err(unsupported("ALLREDUCE", v)),
    }
}

/// Recursive doubling over the largest power of two `p' <= p`. The first
/// `2 (p - p')` ranks pair up: even ones hand their data to their odd
/// neighbour before the exchange and get the result back afterwards.
async fn recursive_doubling(
    comm: &Comm,
    op: ReduceOp,
    dt: Datatype,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    let pof2 = if p == 0 {
        0
    } else {
        1 << (usize::BITS - 1 - p.leading_zeros())
    };
    let rem = p - pof2;
    let mut acc = send.to_vec();

    let new_rank = if rank < 2 * rem {
        if rank.is_multiple_of(2) {
            comm.send(rank + 1, &acc)?;
            None
        } else {
            let data = comm.recv(rank - 1).await?;
            comm.reduce_local(op, dt, &data, &mut acc)?;
            Some(rank / 2)
        }
    } else {
        Some(rank - rem)
    };

    if let Some(new_rank) = new_rank {
        let mut mask = 1;
        while mask < pof2 {
            let peer = new_rank ^ mask;
            let partner = if peer < rem { peer * 2 + 1 } else { peer + rem };
            comm.send(partner, &acc)?;
            let data = comm.recv(partner).await?;
            comm.reduce_local(op, dt, &data, &mut acc)?;
            mask <<= 1;
        }
    }

    if rank < 2 * rem {
        if rank % 2 == 1 {
            comm.send(rank - 1, &acc)?;
        } else {
            comm.recv_into(rank + 1, &mut acc).await?;
        }
    }
    recv.copy_from_slice(&acc);
    Ok(())
}

/// Reduce-scatter with per-rank counts: reduce to rank 0, then scatter.
pub async fn reduce_scatter(
    comm: &Comm,
    v: Variant,
    op: ReduceOp,
    dt: Datatype,
    send: &[u8],
    recv: &mut [u8],
    counts: &[i32],
) -> Result<()> {
    if v != Variant::ReduceScatterv {
        return Err(unsupported("REDUCE_SCATTER", v));
    }
    let mut displs = Vec::with_capacity(counts.len());
    let mut offset = 0;
    for &c in counts {
        displs.push(offset);
        offset += c;
    }
    let mut tmp = if comm.rank() == 0 {
        vec![0u8; send.len()]
    } else {
        Vec::new()
    };
    reduce(comm, Variant::Binomial, 0, op, dt, send, &mut tmp).await?;
    scatterv(comm, 0, &tmp, counts, &displs, dt.extent(), recv).await
}

pub async fn reduce_scatter_block(
    comm: &Comm,
    v: Variant,
    op: ReduceOp,
    dt: Datatype,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    if v != Variant::ReduceScatter {
        return Err(unsupported("REDUCE_SCATTER_BLOCK", v));
    }
    let mut tmp = if comm.rank() == 0 {
        vec![0u8; send.len()]
    } else {
        Vec::new()
    };
    reduce(comm, Variant::Binomial, 0, op, dt, send, &mut tmp).await?;
    scatter(comm, Variant::Linear, 0, &tmp, recv).await
}

/// Inclusive prefix reduction passed along the chain 0, 1, ..., p-1.
pub async fn scan(
    comm: &Comm,
    op: ReduceOp,
    dt: Datatype,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    recv.copy_from_slice(send);
    if rank > 0 {
        let prefix = comm.recv(rank - 1).await?;
        comm.reduce_local(op, dt, &prefix, recv)?;
    }
    if rank + 1 < p {
        comm.send(rank + 1, recv)?;
    }
    Ok(())
}

/// Exclusive prefix reduction; `recv` on rank 0 is left untouched.
pub async fn exscan(
    comm: &Comm,
    op: ReduceOp,
    dt: Datatype,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    if rank == 0 {
        if p > 1 {
            comm.send(1, send)?;
        }
        return Ok(());
    }
    comm.recv_into(rank - 1, recv).await?;
    if rank + 1 < p {
        let mut acc = send.to_vec();
        comm.reduce_local(op, dt, recv, &mut acc)?;
        comm.send(rank + 1, &acc)?;
    }
    Ok(())
}
