use super::spmd::Comm;
use crate::error::Result;

/// Number of dissemination rounds for `p` ranks, `ceil(log2 p)`.
pub fn dissemination_rounds(p: usize) -> u32 {
    if p <= 1 {
        0
    } else {
        usize::BITS - (p - 1).leading_zeros()
    }
}

/// Dissemination barrier: in round `k` rank `i` signals `(i + 2^k) mod p` and
/// waits for `(i - 2^k) mod p`, with zero-byte tokens.
///
/// In virtual mode the ranks also leave at a common instant, the latest
/// natural exit time, so that timed regions start from aligned clocks.
pub async fn dissemination_barrier(comm: &Comm) -> Result<()> {
    let p = comm.size();
    let rank = comm.rank();
    let mut distance = 1;
    while distance < p {
        comm.send((rank + distance) % p, &[])?;
        comm.recv((rank + p - distance) % p).await?;
        distance <<= 1;
    }
    comm.align_clocks().await
}
