mod common;

use common::*;
use pgtune::collectives::{sequential_oracle, CollectiveCall, CollectiveKind};
use pgtune::mockups::{chunk_counts, extra_memory_required, pad_count, MockupConfig, MockupId};
use pgtune::runtime::{Datatype, ReduceOp};
use pgtune::Error;
use proptest::prelude::*;

const ROOMY: (usize, usize) = (1 << 20, 1 << 12);

fn i32s(v: &[i32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

#[test]
fn mockups_match_the_oracle_on_small_groups() {
    let cfg = MockupConfig::default();
    let mut rng = rng(21);
    for id in MockupId::ALL {
        let kind = id.replaces();
        for p in [1, 2, 3, 5] {
            for n in counts_for(kind, p) {
                for (dt, op) in combos(kind) {
                    let call = make_call(kind, p, n, dt, op, true, &mut rng);
                    let (sends, recvs) = make_buffers(&call, p, &mut rng);
                    let expected = sequential_oracle(&call, p, &sends).unwrap();
                    let runs = run_mockup(id, &call, p, &sends, &recvs, ROOMY, &cfg)
                        .unwrap_or_else(|e| panic!("{id} p={p} n={n} {dt}: {e}"));
                    for (r, run) in runs.iter().enumerate() {
                        check_result(&call, &expected[r], &run.recv, &recvs[r])
                            .unwrap_or_else(|e| panic!("{id} p={p} n={n} {dt} rank {r}: {e}"));
                    }
                }
            }
        }
    }
}

#[test]
fn high_water_marks_equal_the_requirement() {
    let mut rng = rng(22);
    for chunk_size in [1, 3, 100] {
        let cfg = MockupConfig { chunk_size };
        for id in MockupId::ALL {
            let kind = id.replaces();
            for p in [1, 2, 4, 7] {
                for n in counts_for(kind, p) {
                    let (dt, op) = combos(kind)[1];
                    let call = make_call(kind, p, n, dt, op, true, &mut rng);
                    let need = extra_memory_required(id, &call, p, &cfg).unwrap();
                    let (sends, recvs) = make_buffers(&call, p, &mut rng);
                    let runs = run_mockup(id, &call, p, &sends, &recvs, ROOMY, &cfg).unwrap();
                    let msg = runs.iter().map(|r| r.msg_high_water).max().unwrap();
                    let ints = runs.iter().map(|r| r.int_high_water).max().unwrap();
                    assert_eq!(
                        (msg, ints),
                        (need.msg_bytes, need.int_elems),
                        "{id} p={p} n={n}"
                    );
                }
            }
        }
    }
}

#[test]
fn insufficient_scratch_iff_requirement_exceeds_capacity() {
    let cfg = MockupConfig::default();
    let mut rng = rng(23);
    for id in MockupId::ALL {
        let kind = id.replaces();
        let p = 4;
        let (dt, op) = combos(kind)[0];
        let n = if kind.needs_divisible_count() {
            3 * p
        } else {
            5
        };
        let call = make_call(kind, p, n, dt, op, true, &mut rng);
        let need = extra_memory_required(id, &call, p, &cfg).unwrap();
        let (sends, recvs) = make_buffers(&call, p, &mut rng);
        let exact = (need.msg_bytes, need.int_bytes());
        assert!(
            run_mockup(id, &call, p, &sends, &recvs, exact, &cfg).is_ok(),
            "{id}"
        );
        if need.msg_bytes > 0 {
            let err = run_mockup(
                id,
                &call,
                p,
                &sends,
                &recvs,
                (need.msg_bytes - 1, exact.1),
                &cfg,
            )
            .unwrap_err();
            assert!(
                matches!(err, Error::InsufficientScratch { .. }),
                "{id}: {err}"
            );
        }
        if need.int_elems > 0 {
            let err =
                run_mockup(id, &call, p, &sends, &recvs, (exact.0, exact.1 - 4), &cfg).unwrap_err();
            assert!(
                matches!(err, Error::InsufficientScratch { .. }),
                "{id}: {err}"
            );
        }
    }
}

#[test]
fn memoryless_mockups_run_without_arenas() {
    let mut rng = rng(24);
    for id in [
        MockupId::AllgatherAsGatherBcast,
        MockupId::AllreduceAsReduceBcast,
        MockupId::ScanAsExscanReducelocal,
    ] {
        let kind = id.replaces();
        let (dt, op) = combos(kind)[0];
        let call = make_call(kind, 6, 9, dt, op, true, &mut rng);
        let (sends, recvs) = make_buffers(&call, 6, &mut rng);
        let expected = sequential_oracle(&call, 6, &sends).unwrap();
        let runs = run_mockup(
            id,
            &call,
            6,
            &sends,
            &recvs,
            (0, 0),
            &MockupConfig::default(),
        )
        .unwrap();
        for (r, run) in runs.iter().enumerate() {
            check_result(&call, &expected[r], &run.recv, &recvs[r]).unwrap();
        }
    }
}

#[test]
fn mismatched_kind_is_rejected() {
    let call = CollectiveCall::new(CollectiveKind::Bcast, 2, Datatype::Byte);
    let err = run_mockup(
        MockupId::ScatterAsBcast,
        &call,
        2,
        &[vec![1, 2], vec![]],
        &[vec![0; 2], vec![0; 2]],
        ROOMY,
        &MockupConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::KindMismatch { .. }));
}

#[test]
fn documented_examples() {
    let cfg = MockupConfig::default();

    let call = CollectiveCall::new(CollectiveKind::Scan, 1, Datatype::Int32).with_op(ReduceOp::Sum);
    let sends = vec![i32s(&[1]), i32s(&[2]), i32s(&[3])];
    let runs = run_mockup(
        MockupId::ScanAsExscanReducelocal,
        &call,
        3,
        &sends,
        &vec![vec![0; 4]; 3],
        ROOMY,
        &cfg,
    )
    .unwrap();
    let got: Vec<Vec<u8>> = runs.into_iter().map(|r| r.recv).collect();
    assert_eq!(got, vec![i32s(&[1]), i32s(&[3]), i32s(&[6])]);

    let call = CollectiveCall::new(CollectiveKind::Gather, 1, Datatype::Int32);
    let sends = vec![i32s(&[5]), i32s(&[9])];
    let runs = run_mockup(
        MockupId::GatherAsReduce,
        &call,
        2,
        &sends,
        &[vec![0; 8], vec![]],
        ROOMY,
        &cfg,
    )
    .unwrap();
    assert_eq!(runs[0].recv, i32s(&[5, 9]));

    let call = CollectiveCall::new(CollectiveKind::Allgather, 3, Datatype::Byte);
    let runs = run_mockup(
        MockupId::AllgatherAsAllreduce,
        &call,
        1,
        &[vec![4, 5, 6]],
        &[vec![0; 3]],
        ROOMY,
        &cfg,
    )
    .unwrap();
    assert_eq!(runs[0].recv, vec![4, 5, 6]);

    let call = CollectiveCall::new(CollectiveKind::Bcast, 6, Datatype::Int32);
    let payload = i32s(&[1, 2, 3, 4, 5, 6]);
    let mut sends = vec![Vec::new(); 4];
    sends[0] = payload.clone();
    let runs = run_mockup(
        MockupId::BcastAsScatterAllgather,
        &call,
        4,
        &sends,
        &vec![vec![0; 24]; 4],
        ROOMY,
        &cfg,
    )
    .unwrap();
    assert!(runs.iter().all(|r| r.recv == payload));
    assert_eq!(runs[0].msg_high_water, (8 + 2) * 4);
}

proptest! {
    #[test]
    fn chunk_counts_conserve_and_respect_the_bound(n in 0usize..5000, p in 1usize..64, c in 1usize..200) {
        let counts = chunk_counts(n, p, c);
        prop_assert_eq!(counts.len(), p);
        prop_assert_eq!(counts.iter().sum::<usize>(), n);
        prop_assert!(counts.iter().all(|&k| k <= (n / p + c).max(c)));
    }

    #[test]
    fn padding_is_minimal(n in 0usize..100_000, p in 1usize..1000) {
        let padded = pad_count(n, p);
        prop_assert_eq!(padded % p, 0);
        prop_assert!(padded >= n && padded - n < p);
    }
}
