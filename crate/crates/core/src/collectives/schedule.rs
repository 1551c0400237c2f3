//! Closed-form and recurrence costs of each algorithm under a jitter-free
//! cost model. Every message costs `T(b) = alpha + beta * b`, every local
//! reduction `G(b) = gamma * b`, and a rank's sends leave one after the other.

use super::{AlgorithmId, CollectiveKind, Variant};
use crate::runtime::CostModel;

/// Predicted latency in nanoseconds of `alg` on `p` ranks with count `n` of
/// elements of `e` bytes: the time at which the last rank finishes, starting
/// from aligned clocks. Irregular kinds are evaluated with regular layouts,
/// and reduce-scatter with counts split as evenly as possible.
pub fn algorithm_cost_schedule(
    alg: AlgorithmId,
    p: usize,
    n: usize,
    e: usize,
    model: &CostModel,
) -> u64 {
    if p <= 1 {
        return 0;
    }
    let t = |bytes: usize| model.message_ns(bytes, 0.0);
    let g = |bytes: usize| model.reduce_ns(bytes);
    let m = n * e;
    let steps = (p - 1) as u64;
    match (alg.kind, alg.variant) {
        (CollectiveKind::Bcast, Variant::Linear) => steps * t(m),
        (CollectiveKind::Bcast, _) => max(&binomial_bcast(p, 0, &vec![0; p], t(m))),
        (CollectiveKind::Gather, Variant::Binomial) => binomial_gather(p, m, &t),
        (CollectiveKind::Gather | CollectiveKind::Gatherv, _) => t(m),
        (CollectiveKind::Scatter, _) => steps * t(n / p * e),
        (CollectiveKind::Scatterv, _)
        | (CollectiveKind::Allgather, _)
        | (CollectiveKind::Allgatherv, _)
        | (CollectiveKind::Alltoall, _)
        | (CollectiveKind::Alltoallv, _) => steps * t(m),
        (CollectiveKind::Reduce, Variant::Linear) => t(m) + steps * g(m),
        (CollectiveKind::Reduce, _) => binomial_reduce(p, t(m), g(m)).0[0],
        (CollectiveKind::Allreduce, Variant::ReduceBcast) => {
            let (done, _) = binomial_reduce(p, t(m), g(m));
            max(&binomial_bcast(p, done[0], &done, t(m)))
        }
        (CollectiveKind::Allreduce, _) => recursive_doubling(p, t(m), g(m)),
        (CollectiveKind::ReduceScatter, _) => {
            let blocks: Vec<usize> = (0..p)
                .map(|i| (n / p + usize::from(i < n % p)) * e)
                .collect();
            reduce_then_scatter(p, m, &blocks, &t, &g)
        }
        (CollectiveKind::ReduceScatterBlock, _) => {
            reduce_then_scatter(p, m, &vec![n / p * e; p], &t, &g)
        }
        (CollectiveKind::Scan, _) => steps * (t(m) + g(m)),
        (CollectiveKind::Exscan, _) => steps * t(m) + (steps - 1) * g(m),
    }
}

fn max(times: &[u64]) -> u64 {
    times.iter().copied().max().unwrap_or(0)
}

/// Binomial broadcast from rank 0 where rank `r` is ready at `ready[r]` and
/// the root starts at `root_start`. A node sends to its children from the
/// largest subtree down, so its `i`-th child receives `i * t` after it.
fn binomial_bcast(p: usize, root_start: u64, ready: &[u64], t: u64) -> Vec<u64> {
    let mut done = ready.to_vec();
    done[0] = root_start;
    let top = p.next_power_of_two();
    // Parents have smaller ranks than their children, so one ascending pass works.
    for r in 0..p {
        let limit = if r == 0 { top } else { r & r.wrapping_neg() };
        let mut mask = limit >> 1;
        let mut sent = 0;
        while mask > 0 {
            if r + mask < p {
                sent += 1;
                let child = r + mask;
                done[child] = done[child].max(done[r] + sent * t);
            }
            mask >>= 1;
        }
    }
    done
}

/// Binomial gather to rank 0: a node forwards its subtree once every child's
/// subtree has arrived.
fn binomial_gather(p: usize, m: usize, t: &dyn Fn(usize) -> u64) -> u64 {
    let mut ready = vec![0u64; p];
    for r in (0..p).rev() {
        let mut mask = 1;
        while mask < p && r & mask == 0 {
            let child = r + mask;
            if child < p {
                ready[r] = ready[r].max(ready[child] + t(mask.min(p - child) * m));
            }
            mask <<= 1;
        }
    }
    ready[0]
}

/// Binomial reduce to rank 0. Returns each rank's finishing time (for a
/// non-root, when it hands its partial result to its parent) and the time
/// at which that message arrives.
fn binomial_reduce(p: usize, t: u64, g: u64) -> (Vec<u64>, Vec<u64>) {
    let mut done = vec![0u64; p];
    let mut arrival = vec![0u64; p];
    for r in (0..p).rev() {
        let mut mask = 1;
        while mask < p && r & mask == 0 {
            let child = r + mask;
            if child < p {
                done[r] = done[r].max(arrival[child]) + g;
            }
            mask <<= 1;
        }
        arrival[r] = done[r] + t;
    }
    (done, arrival)
}

fn reduce_then_scatter(
    p: usize,
    m: usize,
    blocks: &[usize],
    t: &dyn Fn(usize) -> u64,
    g: &dyn Fn(usize) -> u64,
) -> u64 {
    let (mut done, _) = binomial_reduce(p, t(m), g(m));
    let mut port = done[0];
    for dst in 1..p {
        port += t(blocks[dst]);
        done[dst] = done[dst].max(port);
    }
    max(&done)
}

/// Recursive doubling with the pre- and post-steps for non-powers of two,
/// tracking each rank's clock and when its outgoing link frees up.
fn recursive_doubling(p: usize, t: u64, g: u64) -> u64 {
    let pof2 = 1usize << (usize::BITS - 1 - p.leading_zeros());
    let rem = p - pof2;
    let mut clock = vec![0u64; p];
    let mut port = vec![0u64; p];
    let send = |port: &mut Vec<u64>, clock: &[u64], r: usize| -> u64 {
        let arrival = clock[r].max(port[r]) + t;
        port[r] = arrival;
        arrival
    };

    for r in (0..2 * rem).step_by(2) {
        let arrival = send(&mut port, &clock, r);
        clock[r + 1] = clock[r + 1].max(arrival) + g;
    }
    let active: Vec<usize> = (0..p).filter(|&r| r >= 2 * rem || r % 2 == 1).collect();
    let mut mask = 1;
    while mask < pof2 {
        let arrivals: Vec<u64> = active.iter().map(|&r| send(&mut port, &clock, r)).collect();
        let next: Vec<u64> = (0..pof2)
            .map(|i| clock[active[i]].max(arrivals[i ^ mask]) + g)
            .collect();
        for (i, &r) in active.iter().enumerate() {
            clock[r] = next[i];
        }
        mask <<= 1;
    }
    for r in (1..2 * rem).step_by(2) {
        let arrival = send(&mut port, &clock, r);
        clock[r - 1] = clock[r - 1].max(arrival);
    }
    max(&clock)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alg(s: &str) -> AlgorithmId {
        s.parse().unwrap()
    }

    #[test]
    fn broadcast_costs() {
        let m = CostModel::hockney(100.0, 0.0);
        assert_eq!(
            algorithm_cost_schedule(alg("BCAST:binomial"), 8, 13, 1, &m),
            300_000
        );
        assert_eq!(
            algorithm_cost_schedule(alg("BCAST:linear"), 8, 13, 1, &m),
            700_000
        );
        for p in 2..=64usize {
            let k = (usize::BITS - (p - 1).leading_zeros()) as u64;
            assert_eq!(
                algorithm_cost_schedule(alg("BCAST:binomial"), p, 1, 1, &m),
                k * 100_000,
                "p={p}"
            );
        }
    }

    #[test]
    fn ring_allgather() {
        let m = CostModel::hockney(10.0, 1.0);
        assert_eq!(
            algorithm_cost_schedule(alg("ALLGATHER:ring"), 4, 5, 1, &m),
            45_000
        );
    }

    #[test]
    fn single_rank_is_free() {
        let m = CostModel::hockney(10.0, 1.0);
        for a in AlgorithmId::all() {
            assert_eq!(algorithm_cost_schedule(a, 1, 7, 4, &m), 0);
        }
    }

    #[test]
    fn power_of_two_recursive_doubling() {
        let m = CostModel {
            gamma_us_per_byte: 1.0,
            ..CostModel::hockney(10.0, 0.0)
        };
        // log2(8) rounds of one message plus one reduction of 2 bytes.
        assert_eq!(
            algorithm_cost_schedule(alg("ALLREDUCE:recursive_doubling"), 8, 2, 1, &m),
            36_000
        );
    }

    #[test]
    fn binomial_gather_and_reduce() {
        let m = CostModel::hockney(10.0, 1.0);
        // p=4, 1 byte: rank 2 receives 1 block from 3 (11), then rank 0 gets
        // rank 1 at 11 and ranks 2..3 at 11 + 12.
        assert_eq!(
            algorithm_cost_schedule(alg("GATHER:binomial"), 4, 1, 1, &m),
            23_000
        );
        assert_eq!(
            algorithm_cost_schedule(alg("REDUCE:binomial"), 4, 1, 1, &m),
            22_000
        );
    }
}
