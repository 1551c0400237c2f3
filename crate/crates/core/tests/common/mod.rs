#![allow(dead_code)]

use pgtune::collectives::{CollectiveCall, CollectiveKind, Layout};
use pgtune::runtime::{Datatype, ReduceOp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SENTINEL: u8 = 0xA5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Datatype/operator combinations worth exercising for `kind`.
pub fn combos(kind: CollectiveKind) -> Vec<(Datatype, Option<ReduceOp>)> {
    if kind.is_reduction() {
        vec![
            (Datatype::Byte, Some(ReduceOp::Bor)),
            (Datatype::Int32, Some(ReduceOp::Sum)),
            (Datatype::Int32, Some(ReduceOp::Max)),
            (Datatype::Int32, Some(ReduceOp::Bor)),
            (Datatype::Float64, Some(ReduceOp::Sum)),
            (Datatype::Float64, Some(ReduceOp::Max)),
        ]
    } else {
        vec![
            (Datatype::Byte, None),
            (Datatype::Int32, None),
            (Datatype::Float64, None),
        ]
    }
}

/// Counts exercised for `p` ranks, made divisible by `p` where the kind needs it.
pub fn counts_for(kind: CollectiveKind, p: usize) -> Vec<usize> {
    let base = [0, 1, 2, 7, 16, p, 3 * p + 1];
    let mut out: Vec<usize> = if kind.needs_divisible_count() {
        base.iter().map(|&n| n * p).collect()
    } else {
        base.to_vec()
    };
    out.sort_unstable();
    out.dedup();
    out
}

pub fn random_elements(rng: &mut ChaCha8Rng, dt: Datatype, count: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(count * dt.extent());
    for _ in 0..count {
        match dt {
            Datatype::Byte => out.push(rng.gen()),
            Datatype::Int32 => out.extend_from_slice(&rng.gen::<i32>().to_le_bytes()),
            // Positive values keep sums well-conditioned.
            Datatype::Float64 => out.extend_from_slice(&rng.gen_range(0.5..2.0f64).to_le_bytes()),
        }
    }
    out
}

fn prefix(counts: &[i32], rng: &mut ChaCha8Rng, gaps: bool) -> Vec<i32> {
    let mut displs = Vec::with_capacity(counts.len());
    let mut at = 0;
    for &c in counts {
        if gaps {
            at += rng.gen_range(0..2);
        }
        displs.push(at);
        at += c;
    }
    displs
}

/// A random call of `kind` for `p` ranks with count `n`. Irregular kinds get
/// random per-rank counts in `0..=n` unless `regular` is set.
pub fn make_call(
    kind: CollectiveKind,
    p: usize,
    n: usize,
    dt: Datatype,
    op: Option<ReduceOp>,
    regular: bool,
    rng: &mut ChaCha8Rng,
) -> CollectiveCall {
    let mut call = CollectiveCall::new(kind, n, dt);
    call.op = op;
    if kind.is_rooted() {
        call.root = rng.gen_range(0..p);
    }
    let count = |rng: &mut ChaCha8Rng| {
        if regular {
            n as i32
        } else {
            rng.gen_range(0..=n as i32)
        }
    };
    call.layout = match kind {
        CollectiveKind::Alltoallv => {
            let counts: Vec<Vec<i32>> = (0..p)
                .map(|_| (0..p).map(|_| count(rng)).collect())
                .collect();
            let send_displs = counts
                .iter()
                .map(|row| prefix(row, rng, !regular))
                .collect();
            let recv_displs = (0..p)
                .map(|dst| {
                    let col: Vec<i32> = (0..p).map(|src| counts[src][dst]).collect();
                    prefix(&col, rng, !regular)
                })
                .collect();
            Layout::Matrix {
                counts,
                send_displs,
                recv_displs,
            }
        }
        CollectiveKind::ReduceScatter => {
            let counts: Vec<i32> = if regular {
                (0..p)
                    .map(|i| (n / p + usize::from(i < n % p)) as i32)
                    .collect()
            } else {
                (0..p).map(|_| count(rng)).collect()
            };
            call.count = counts.iter().sum::<i32>() as usize;
            Layout::Vector {
                displs: prefix(&counts, rng, false),
                counts,
            }
        }
        k if k.is_irregular() => {
            let counts: Vec<i32> = (0..p).map(|_| count(rng)).collect();
            Layout::Vector {
                displs: prefix(&counts, rng, !regular),
                counts,
            }
        }
        _ => Layout::Regular,
    };
    call
}

/// Random send buffers and receive buffers for every rank. Receive buffers
/// start as [`SENTINEL`] bytes, or zeros for irregular kinds whose layouts
/// may leave gaps the oracle fills with zeros.
pub fn make_buffers(
    call: &CollectiveCall,
    p: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<u8>>, Vec<Vec<u8>>) {
    let e = call.datatype.extent();
    let mut sends = Vec::with_capacity(p);
    let mut recvs = Vec::with_capacity(p);
    for rank in 0..p {
        let (send, recv) = call.buffer_sizes(p, rank).unwrap();
        sends.push(random_elements(rng, call.datatype, send.unwrap_or(0) / e));
        let fill = if call.kind.is_irregular() {
            0
        } else {
            SENTINEL
        };
        recvs.push(vec![fill; recv.unwrap_or(0)]);
    }
    (sends, recvs)
}

/// Compares a computed receive buffer with the oracle's. Float sums may be
/// reassociated and are compared with a relative tolerance of 1e-12.
pub fn check_result(
    call: &CollectiveCall,
    expected: &Option<Vec<u8>>,
    actual: &[u8],
    initial: &[u8],
) -> Result<(), String> {
    let Some(expected) = expected else {
        return if actual == initial {
            Ok(())
        } else {
            Err("undefined receive buffer was modified".into())
        };
    };
    if expected.len() != actual.len() {
        return Err(format!("length {} != {}", actual.len(), expected.len()));
    }
    if call.datatype == Datatype::Float64 && call.op == Some(ReduceOp::Sum) {
        for (i, (a, b)) in actual.chunks(8).zip(expected.chunks(8)).enumerate() {
            let a = f64::from_le_bytes(a.try_into().unwrap());
            let b = f64::from_le_bytes(b.try_into().unwrap());
            if (a - b).abs() > 1e-12 * b.abs() {
                return Err(format!("element {i}: {a} vs {b}"));
            }
        }
        Ok(())
    } else if actual == expected.as_slice() {
        Ok(())
    } else {
        Err("contents differ from the oracle".into())
    }
}

#[derive(Debug)]
pub struct MockupRun {
    pub recv: Vec<u8>,
    pub msg_high_water: usize,
    pub int_high_water: usize,
}

/// Runs mock-up `id` on `p` virtual ranks, each with arenas of the given capacity.
pub fn run_mockup(
    id: pgtune::mockups::MockupId,
    call: &CollectiveCall,
    p: usize,
    sends: &[Vec<u8>],
    recvs: &[Vec<u8>],
    capacity: (usize, usize),
    cfg: &pgtune::mockups::MockupConfig,
) -> pgtune::Result<Vec<MockupRun>> {
    use pgtune::collectives::DefaultAlgorithms;
    use pgtune::mockups::{execute_mockup, ScratchBuffers};
    use pgtune::runtime::{run_spmd, CostModel, Mode};
    let defaults = DefaultAlgorithms::default();
    let defaults = &defaults;
    let out = run_spmd(p, &CostModel::default(), Mode::Virtual, |comm| async move {
        let mut scratch = ScratchBuffers::new(capacity.0, capacity.1);
        let mut recv = recvs[comm.rank()].clone();
        execute_mockup(
            &comm,
            id,
            call,
            &sends[comm.rank()],
            &mut recv,
            &mut scratch,
            cfg,
            defaults,
        )
        .await?;
        Ok(MockupRun {
            recv,
            msg_high_water: scratch.msg_high_water(),
            int_high_water: scratch.int_high_water(),
        })
    })?;
    Ok(out.outputs)
}
