use super::{CollectiveCall, CollectiveKind};
use crate::error::{Error, Result};

/// Computes every rank's receive buffer for `call` without any communication.
///
/// `sends[r]` is rank `r`'s send buffer. Reductions combine contributions in
/// strict rank order `0, 1, ..., p-1`. Entries are `None` where the kind
/// leaves the receive buffer undefined (non-roots of rooted kinds, rank 0 of
/// an exclusive scan).
pub fn sequential_oracle(
    call: &CollectiveCall,
    p: usize,
    sends: &[Vec<u8>],
) -> Result<Vec<Option<Vec<u8>>>> {
    call.validate(p)?;
    if sends.len() != p {
        return Err(Error::SizeMismatch {
            what: "send buffers",
            expected: p,
            actual: sends.len(),
        });
    }
    for (rank, send) in sends.iter().enumerate() {
        if let (Some(len), _) = call.buffer_sizes(p, rank)? {
            if send.len() != len {
                return Err(Error::SizeMismatch {
                    what: "send buffer",
                    expected: len,
                    actual: send.len(),
                });
            }
        }
    }
    let e = call.datatype.extent();
    let root = call.root;
    let fold = |upto: usize| -> Result<Vec<u8>> {
        let mut acc = sends[0].clone();
        for s in &sends[1..upto] {
            call.op()?.apply(call.datatype, s, &mut acc)?;
        }
        Ok(acc)
    };
    let only_root = |buf: Vec<u8>| -> Vec<Option<Vec<u8>>> {
        (0..p).map(|r| (r == root).then(|| buf.clone())).collect()
    };
    let everyone = |buf: Vec<u8>| -> Vec<Option<Vec<u8>>> { vec![Some(buf); p] };

    let out = match call.kind {
        CollectiveKind::Bcast => everyone(sends[root].clone()),
        CollectiveKind::Gather => only_root(sends.concat()),
        CollectiveKind::Allgather => everyone(sends.concat()),
        CollectiveKind::Scatter => {
            let m = call.count / p * e;
            (0..p)
                .map(|r| Some(sends[root][r * m..(r + 1) * m].to_vec()))
                .collect()
        }
        CollectiveKind::Alltoall => {
            let m = call.count * e;
            (0..p)
                .map(|dst| {
                    Some(
                        (0..p)
                            .flat_map(|src| sends[src][dst * m..(dst + 1) * m].iter().copied())
                            .collect(),
                    )
                })
                .collect()
        }
        CollectiveKind::Reduce => only_root(fold(p)?),
        CollectiveKind::Allreduce => everyone(fold(p)?),
        CollectiveKind::ReduceScatterBlock => {
            let total = fold(p)?;
            let m = call.count / p * e;
            (0..p)
                .map(|r| Some(total[r * m..(r + 1) * m].to_vec()))
                .collect()
        }
        CollectiveKind::Scan => (0..p)
            .map(|r| fold(r + 1).map(Some))
            .collect::<Result<_>>()?,
        CollectiveKind::Exscan => (0..p)
            .map(|r| if r == 0 { Ok(None) } else { fold(r).map(Some) })
            .collect::<Result<_>>()?,
        CollectiveKind::Gatherv | CollectiveKind::Allgatherv => {
            let (counts, displs) = call.vector(p)?;
            let mut recv = vec![0u8; super::extent(counts, displs) * e];
            for (r, send) in sends.iter().enumerate() {
                let start = displs[r] as usize * e;
                recv[start..start + send.len()].copy_from_slice(send);
            }
            if call.kind == CollectiveKind::Gatherv {
                only_root(recv)
            } else {
                everyone(recv)
            }
        }
        CollectiveKind::Scatterv => {
            let (counts, displs) = call.vector(p)?;
            (0..p)
                .map(|r| {
                    let start = displs[r] as usize * e;
                    Some(sends[root][start..start + counts[r] as usize * e].to_vec())
                })
                .collect()
        }
        CollectiveKind::ReduceScatter => {
            let (counts, _) = call.vector(p)?;
            let total = fold(p)?;
            let mut start = 0;
            counts
                .iter()
                .map(|&c| {
                    let len = c as usize * e;
                    let block = total[start..start + len].to_vec();
                    start += len;
                    Some(block)
                })
                .collect()
        }
        CollectiveKind::Alltoallv => {
            let (counts, sd, rd) = call.matrix(p)?;
            (0..p)
                .map(|dst| {
                    let (_, recv_len) = call.buffer_sizes(p, dst)?;
                    let mut recv = vec![0u8; recv_len.unwrap_or(0)];
                    for src in 0..p {
                        let len = counts[src][dst] as usize * e;
                        let from = sd[src][dst] as usize * e;
                        let to = rd[dst][src] as usize * e;
                        recv[to..to + len].copy_from_slice(&sends[src][from..from + len]);
                    }
                    Ok(Some(recv))
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(out)
}
