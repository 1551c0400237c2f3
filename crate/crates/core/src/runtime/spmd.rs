//! In-memory point-to-point transport and the SPMD executor.
//!
//! Every rank runs the same async program. In virtual mode all ranks are
//! polled from the calling thread in rank order, and each rank owns a virtual
//! clock that only moves forward: a receive sets it to
//! `max(clock, arrival)`, a local reduction adds the gamma cost. A send never
//! advances the sender clock, but each rank has a single injection port, so
//! consecutive sends from one rank leave back to back. In wall-clock mode each
//! rank runs on its own OS thread and time comes from a monotonic clock.
//!
//! Matching is by ordered `(src, dst)` pair in FIFO order; there are no tags.

use std::collections::VecDeque;
use std::future::Future;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::pin::Pin;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::task::{Context, Poll, Waker};
use std::time::Instant;

use futures::task::{waker_ref, ArcWake};

use super::cost::{ns_to_us, CostModel};
use super::datatype::{Datatype, ReduceOp};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Virtual,
    Wallclock,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "virtual" => Ok(Mode::Virtual),
            "wallclock" => Ok(Mode::Wallclock),
            other => Err(format!(
                "unknown mode `{other}` (expected virtual or wallclock)"
            )),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Virtual => "virtual",
            Mode::Wallclock => "wallclock",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Message {
    pub src: usize,
    pub dst: usize,
    pub payload: Vec<u8>,
    pub sent_ns: u64,
    pub arrival_ns: u64,
}

#[derive(Default)]
struct SyncPoint {
    arrived: usize,
    max_ns: u64,
    generation: u64,
    release_ns: u64,
}

struct State {
    queues: Vec<VecDeque<Message>>,
    ordinals: Vec<u64>,
    port_free_ns: Vec<u64>,
    recv_waiters: Vec<Option<(usize, Waker)>>,
    sync_waiters: Vec<Option<Waker>>,
    blocked: usize,
    finished: usize,
    deadlock: bool,
    sync: SyncPoint,
    messages: u64,
}

impl State {
    fn new(size: usize) -> Self {
        State {
            queues: (0..size * size).map(|_| VecDeque::new()).collect(),
            ordinals: vec![0; size * size],
            port_free_ns: vec![0; size],
            recv_waiters: vec![None; size],
            sync_waiters: vec![None; size],
            blocked: 0,
            finished: 0,
            deadlock: false,
            sync: SyncPoint::default(),
            messages: 0,
        }
    }

    fn check_deadlock(&mut self, size: usize) {
        if !self.deadlock && self.finished < size && self.blocked + self.finished == size {
            self.deadlock = true;
            for waiter in self.recv_waiters.iter_mut() {
                if let Some((_, w)) = waiter.take() {
                    w.wake();
                }
            }
            for waiter in self.sync_waiters.iter_mut() {
                if let Some(w) = waiter.take() {
                    w.wake();
                }
            }
        }
    }
}

pub(crate) struct Shared {
    size: usize,
    mode: Mode,
    model: CostModel,
    clocks: Vec<AtomicU64>,
    origin: Instant,
    state: Mutex<State>,
}

impl Shared {
    fn new(size: usize, mode: Mode, model: CostModel) -> Self {
        Shared {
            size,
            mode,
            model,
            clocks: (0..size).map(|_| AtomicU64::new(0)).collect(),
            origin: Instant::now(),
            state: Mutex::new(State::new(size)),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // A rank that panicked while holding the lock leaves the queues intact.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn finish(&self) {
        let mut st = self.lock();
        st.finished += 1;
        st.check_deadlock(self.size);
    }
}

/// A rank's handle on the group: point-to-point operations and its clock.
pub struct Comm {
    rank: usize,
    shared: Arc<Shared>,
}

impl Comm {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.shared.size
    }

    pub fn mode(&self) -> Mode {
        self.shared.mode
    }

    pub fn model(&self) -> &CostModel {
        &self.shared.model
    }

    /// Current time of this rank in nanoseconds.
    pub fn now_ns(&self) -> u64 {
        match self.shared.mode {
            Mode::Virtual => self.shared.clocks[self.rank].load(Ordering::Relaxed),
            Mode::Wallclock => self.shared.origin.elapsed().as_nanos() as u64,
        }
    }

    pub fn now_us(&self) -> f64 {
        ns_to_us(self.now_ns())
    }

    fn raise_clock(&self, to_ns: u64) {
        if self.shared.mode == Mode::Virtual {
            self.shared.clocks[self.rank].fetch_max(to_ns, Ordering::Relaxed);
        }
    }

    fn advance_clock(&self, by_ns: u64) {
        if self.shared.mode == Mode::Virtual {
            self.shared.clocks[self.rank].fetch_add(by_ns, Ordering::Relaxed);
        }
    }

    fn check_peer(&self, peer: usize) -> Result<()> {
        if peer >= self.size() {
            return Err(Error::UnknownRank {
                rank: peer,
                size: self.size(),
            });
        }
        if peer == self.rank {
            return Err(Error::SelfSend(self.rank));
        }
        Ok(())
    }

    /// Enqueues `payload` for `dst`. Never blocks.
    pub fn send(&self, dst: usize, payload: &[u8]) -> Result<()> {
        self.check_peer(dst)?;
        let size = self.size();
        let src = self.rank;
        let now = self.now_ns();
        let mut st = self.shared.lock();
        let pair = src * size + dst;
        let ordinal = st.ordinals[pair];
        st.ordinals[pair] += 1;
        let arrival_ns = match self.shared.mode {
            Mode::Virtual => {
                let depart = now.max(st.port_free_ns[src]);
                let jitter = self.shared.model.jitter_sample(src, dst, ordinal);
                let arrival = depart + self.shared.model.message_ns(payload.len(), jitter);
                st.port_free_ns[src] = arrival;
                arrival
            }
            Mode::Wallclock => now,
        };
        st.queues[pair].push_back(Message {
            src,
            dst,
            payload: payload.to_vec(),
            sent_ns: now,
            arrival_ns,
        });
        st.messages += 1;
        if matches!(st.recv_waiters[dst], Some((waiting_on, _)) if waiting_on == src) {
            let (_, waker) = st.recv_waiters[dst].take().unwrap();
            st.blocked -= 1;
            waker.wake();
        }
        Ok(())
    }

    /// Receives the next message from `src`.
    pub fn recv(&self, src: usize) -> Recv<'_> {
        Recv { comm: self, src }
    }

    /// Receives the next message from `src` into `buf`, which must match its length.
    pub async fn recv_into(&self, src: usize, buf: &mut [u8]) -> Result<()> {
        let payload = self.recv(src).await?;
        if payload.len() != buf.len() {
            return Err(Error::SizeMismatch {
                what: "received message",
                expected: buf.len(),
                actual: payload.len(),
            });
        }
        buf.copy_from_slice(&payload);
        Ok(())
    }

    /// Element-wise `inout = op(input, inout)`, charging the gamma cost.
    pub fn reduce_local(
        &self,
        op: ReduceOp,
        dt: Datatype,
        input: &[u8],
        inout: &mut [u8],
    ) -> Result<()> {
        op.apply(dt, input, inout)?;
        self.advance_clock(self.shared.model.reduce_ns(inout.len()));
        Ok(())
    }

    /// Rendezvous of all ranks that leaves every virtual clock at the group
    /// maximum. A no-op in wall-clock mode.
    pub(crate) fn align_clocks(&self) -> AlignClocks<'_> {
        AlignClocks {
            comm: self,
            generation: None,
        }
    }
}

pub struct Recv<'a> {
    comm: &'a Comm,
    src: usize,
}

impl Future for Recv<'_> {
    type Output = Result<Vec<u8>>;

    fn poll(self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Self::Output> {
        let comm = self.comm;
        if let Err(e) = comm.check_peer(self.src) {
            return Poll::Ready(Err(e));
        }
        let dst = comm.rank;
        let size = comm.size();
        let mut st = comm.shared.lock();
        if let Some(msg) = st.queues[self.src * size + dst].pop_front() {
            if st.recv_waiters[dst].take().is_some() {
                st.blocked -= 1;
            }
            drop(st);
            comm.raise_clock(msg.arrival_ns);
            return Poll::Ready(Ok(msg.payload));
        }
        if st.deadlock {
            if st.recv_waiters[dst].take().is_some() {
                st.blocked -= 1;
            }
            return Poll::Ready(Err(Error::Deadlock));
        }
        match &mut st.recv_waiters[dst] {
            Some((_, waker)) => waker.clone_from(cx.waker()),
            slot @ None => {
                *slot = Some((self.src, cx.waker().clone()));
                st.blocked += 1;
                st.check_deadlock(size);
            }
        }
        Poll::Pending
    }
}

pub(crate) struct AlignClocks<'a> {
    comm: &'a Comm,
    generation: Option<u64>,
}

impl Future for AlignClocks<'_> {
    type Output = Result<()>;

    fn poll(mut self: Pin<&mut Self>, cx: &mut Context<'_>) -> Poll<Self::Output> {
        let comm = self.comm;
        if comm.mode() == Mode::Wallclock {
            return Poll::Ready(Ok(()));
        }
        let rank = comm.rank;
        let size = comm.size();
        let mut st = comm.shared.lock();
        if st.deadlock {
            if st.sync_waiters[rank].take().is_some() {
                st.blocked -= 1;
            }
            return Poll::Ready(Err(Error::Deadlock));
        }
        match self.generation {
            None => {
                st.sync.arrived += 1;
                st.sync.max_ns = st.sync.max_ns.max(comm.now_ns());
                if st.sync.arrived == size {
                    let release = st.sync.max_ns;
                    st.sync = SyncPoint {
                        arrived: 0,
                        max_ns: 0,
                        generation: st.sync.generation + 1,
                        release_ns: release,
                    };
                    for waiter in st.sync_waiters.iter_mut() {
                        if let Some(w) = waiter.take() {
                            w.wake();
                        }
                    }
                    st.blocked -= size - 1;
                    drop(st);
                    comm.raise_clock(release);
                    Poll::Ready(Ok(()))
                } else {
                    self.generation = Some(st.sync.generation);
                    st.sync_waiters[rank] = Some(cx.waker().clone());
                    st.blocked += 1;
                    st.check_deadlock(size);
                    Poll::Pending
                }
            }
            Some(generation) if st.sync.generation > generation => {
                let release = st.sync.release_ns;
                drop(st);
                comm.raise_clock(release);
                Poll::Ready(Ok(()))
            }
            Some(_) => {
                if let Some(w) = st.sync_waiters[rank].as_mut() {
                    w.clone_from(cx.waker());
                }
                Poll::Pending
            }
        }
    }
}

/// Per-rank results of one SPMD execution.
#[derive(Debug, Clone)]
pub struct SpmdOutput<R> {
    pub outputs: Vec<R>,
    pub elapsed_ns: Vec<u64>,
    /// Point-to-point messages sent during the run.
    pub messages: u64,
}

impl<R> SpmdOutput<R> {
    pub fn elapsed_us(&self) -> Vec<f64> {
        self.elapsed_ns.iter().map(|&ns| ns_to_us(ns)).collect()
    }
}

struct ReadyFlag(AtomicBool);

impl ArcWake for ReadyFlag {
    fn wake_by_ref(arc_self: &Arc<Self>) {
        arc_self.0.store(true, Ordering::Release);
    }
}

/// Runs `program` on `p` ranks.
///
/// Fails with the first non-deadlock rank error (in rank order) if any rank
/// failed, otherwise with [`Error::Deadlock`] if ranks were left waiting.
pub fn run_spmd<F, Fut, R>(
    p: usize,
    model: &CostModel,
    mode: Mode,
    program: F,
) -> Result<SpmdOutput<R>>
where
    F: Fn(Comm) -> Fut + Sync,
    Fut: Future<Output = Result<R>>,
    R: Send,
{
    if p == 0 {
        return Err(Error::EmptyGroup);
    }
    let shared = Arc::new(Shared::new(p, mode, model.clone()));
    let (results, elapsed_ns) = match mode {
        Mode::Virtual => run_virtual(&shared, &program),
        Mode::Wallclock => run_threads(&shared, &program),
    };
    let messages = shared.lock().messages;
    collect(results).map(|outputs| SpmdOutput {
        outputs,
        elapsed_ns,
        messages,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic payload".to_string()
    }
}

fn run_virtual<F, Fut, R>(shared: &Arc<Shared>, program: &F) -> (Vec<Result<R>>, Vec<u64>)
where
    F: Fn(Comm) -> Fut,
    Fut: Future<Output = Result<R>>,
{
    let p = shared.size;
    let mut tasks: Vec<Option<Pin<Box<Fut>>>> = (0..p)
        .map(|rank| {
            Some(Box::pin(program(Comm {
                rank,
                shared: Arc::clone(shared),
            })))
        })
        .collect();
    let flags: Vec<Arc<ReadyFlag>> = (0..p)
        .map(|_| Arc::new(ReadyFlag(AtomicBool::new(true))))
        .collect();
    let mut results: Vec<Option<Result<R>>> = (0..p).map(|_| None).collect();
    let mut remaining = p;

    while remaining > 0 {
        let mut polled = false;
        for rank in 0..p {
            let Some(task) = tasks[rank].as_mut() else {
                continue;
            };
            if !flags[rank].0.swap(false, Ordering::AcqRel) {
                continue;
            }
            polled = true;
            let waker = waker_ref(&flags[rank]);
            let mut cx = Context::from_waker(&waker);
            let outcome = catch_unwind(AssertUnwindSafe(|| task.as_mut().poll(&mut cx)));
            let result = match outcome {
                Ok(Poll::Pending) => continue,
                Ok(Poll::Ready(result)) => result,
                Err(payload) => Err(Error::RankPanic {
                    rank,
                    message: panic_message(payload),
                }),
            };
            results[rank] = Some(result);
            tasks[rank] = None;
            remaining -= 1;
            shared.finish();
        }
        if !polled && remaining > 0 {
            // Every live rank is parked but the deadlock check has not fired;
            // treat it as a deadlock rather than spin.
            let mut st = shared.lock();
            st.deadlock = true;
            drop(st);
            for flag in &flags {
                flag.0.store(true, Ordering::Release);
            }
        }
    }
    let elapsed = shared
        .clocks
        .iter()
        .map(|c| c.load(Ordering::Relaxed))
        .collect();
    (results.into_iter().map(Option::unwrap).collect(), elapsed)
}

fn run_threads<F, Fut, R>(shared: &Arc<Shared>, program: &F) -> (Vec<Result<R>>, Vec<u64>)
where
    F: Fn(Comm) -> Fut + Sync,
    Fut: Future<Output = Result<R>>,
    R: Send,
{
    let p = shared.size;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..p)
            .map(|rank| {
                let comm = Comm {
                    rank,
                    shared: Arc::clone(shared),
                };
                let shared = Arc::clone(shared);
                scope.spawn(move || {
                    let start = Instant::now();
                    let outcome = catch_unwind(AssertUnwindSafe(|| {
                        futures::executor::block_on(program(comm))
                    }));
                    let elapsed = start.elapsed().as_nanos() as u64;
                    shared.finish();
                    let result = outcome.unwrap_or_else(|payload| {
                        Err(Error::RankPanic {
                            rank,
                            message: panic_message(payload),
                        })
                    });
                    (result, elapsed)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rank thread panicked outside catch_unwind"))
            .unzip()
    })
}

fn collect<R>(results: Vec<Result<R>>) -> Result<Vec<R>> {
    let mut deadlocked = false;
    let mut first_error = None;
    let mut outputs = Vec::with_capacity(results.len());
    for result in results {
        match result {
            Ok(r) => outputs.push(r),
            Err(Error::Deadlock) => deadlocked = true,
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    match (first_error, deadlocked) {
        (Some(e), _) => Err(e),
        (None, true) => Err(Error::Deadlock),
        (None, false) => Ok(outputs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hockney(alpha: f64, beta: f64) -> CostModel {
        CostModel::hockney(alpha, beta)
    }

    #[test]
    fn arrival_follows_the_hockney_formula() {
        let out = run_spmd(2, &hockney(100.0, 1.0), Mode::Virtual, |comm| async move {
            if comm.rank() == 0 {
                comm.send(1, &[0u8; 10])?;
                Ok(0)
            } else {
                comm.recv(0).await?;
                Ok(comm.now_ns())
            }
        })
        .unwrap();
        assert_eq!(out.outputs[1], 110_000);
        assert_eq!(out.elapsed_ns, vec![0, 110_000]);
    }

    #[test]
    fn zero_cost_model_delivers_at_sender_clock() {
        let out = run_spmd(2, &CostModel::zero(), Mode::Virtual, |comm| async move {
            if comm.rank() == 0 {
                comm.send(1, &[1, 2, 3])?;
            } else {
                comm.recv(0).await?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.elapsed_ns, vec![0, 0]);
    }

    #[test]
    fn receive_clock_uses_the_max_rule() {
        // Receiver is already past the arrival time: its clock stays put.
        let out = run_spmd(2, &hockney(100.0, 1.0), Mode::Virtual, |comm| async move {
            if comm.rank() == 0 {
                comm.send(1, &[0u8; 10])?;
            } else {
                comm.reduce_local(ReduceOp::Bor, Datatype::Byte, &[0], &mut [0])?;
                comm.recv(0).await?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.elapsed_ns[1], 110_000);

        let model = CostModel {
            gamma_us_per_byte: 200.0,
            ..hockney(100.0, 1.0)
        };
        let out = run_spmd(2, &model, Mode::Virtual, |comm| async move {
            if comm.rank() == 0 {
                comm.send(1, &[0u8; 10])?;
            } else {
                comm.reduce_local(ReduceOp::Bor, Datatype::Byte, &[0], &mut [0])?;
                comm.recv(0).await?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.elapsed_ns[1], 200_000);
    }

    #[test]
    fn fifo_per_pair() {
        let out = run_spmd(2, &hockney(1.0, 1.0), Mode::Virtual, |comm| async move {
            if comm.rank() == 0 {
                comm.send(1, &[7])?;
                comm.send(1, &[8, 9])?;
                Ok(vec![])
            } else {
                let a = comm.recv(0).await?;
                let b = comm.recv(0).await?;
                Ok(vec![a, b])
            }
        })
        .unwrap();
        assert_eq!(out.outputs[1], vec![vec![7], vec![8, 9]]);
    }

    #[test]
    fn sends_from_one_rank_share_an_injection_port() {
        let out = run_spmd(3, &hockney(100.0, 0.0), Mode::Virtual, |comm| async move {
            match comm.rank() {
                0 => {
                    comm.send(1, &[])?;
                    comm.send(2, &[])?;
                }
                r => {
                    comm.recv(0).await?;
                    assert_eq!(comm.now_ns(), r as u64 * 100_000);
                }
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(out.elapsed_ns, vec![0, 100_000, 200_000]);
    }

    #[test]
    fn missing_sender_is_a_deadlock() {
        let err = run_spmd(2, &CostModel::zero(), Mode::Virtual, |comm| async move {
            if comm.rank() == 1 {
                comm.recv(0).await?;
            }
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, Error::Deadlock));

        let err = run_spmd(3, &CostModel::zero(), Mode::Wallclock, |comm| async move {
            comm.recv((comm.rank() + 1) % 3).await?;
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, Error::Deadlock));
    }

    #[test]
    fn bad_peers_are_rejected() {
        let err = run_spmd(2, &CostModel::zero(), Mode::Virtual, |comm| async move {
            comm.send(5, &[])?;
            Ok(())
        })
        .unwrap_err();
        assert!(matches!(err, Error::UnknownRank { rank: 5, size: 2 }));
        let err = run_spmd(1, &CostModel::zero(), Mode::Virtual, |comm| async move {
            comm.send(0, &[])
        })
        .unwrap_err();
        assert!(matches!(err, Error::SelfSend(0)));
    }

    #[test]
    fn panicking_rank_is_reported() {
        let err = run_spmd(2, &CostModel::zero(), Mode::Virtual, |comm| async move {
            if comm.rank() == 1 {
                panic!("boom");
            }
            comm.recv(1).await?;
            Ok(())
        })
        .unwrap_err();
        match err {
            Error::RankPanic { rank, message } => {
                assert_eq!(rank, 1);
                assert_eq!(message, "boom");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_rank_noop_takes_no_time() {
        let out = run_spmd(1, &hockney(100.0, 1.0), Mode::Virtual, |_comm| async {
            Ok(())
        })
        .unwrap();
        assert_eq!(out.elapsed_ns, vec![0]);
        assert_eq!(out.messages, 0);
        assert!(matches!(
            run_spmd(0, &CostModel::zero(), Mode::Virtual, |_c| async { Ok(()) }),
            Err(Error::EmptyGroup)
        ));
    }

    #[test]
    fn jittered_runs_are_reproducible() {
        let model = CostModel {
            jitter_fraction: 0.1,
            seed: 42,
            ..hockney(100.0, 0.5)
        };
        let program = |comm: Comm| async move {
            let p = comm.size();
            let r = comm.rank();
            for round in 0..5 {
                comm.send((r + 1) % p, &vec![0u8; round * 3])?;
                comm.recv((r + p - 1) % p).await?;
            }
            Ok(())
        };
        let a = run_spmd(5, &model, Mode::Virtual, program).unwrap();
        let b = run_spmd(5, &model, Mode::Virtual, program).unwrap();
        assert_eq!(a.elapsed_ns, b.elapsed_ns);
        let c = run_spmd(5, &model.with_seed(43), Mode::Virtual, program).unwrap();
        assert_ne!(a.elapsed_ns, c.elapsed_ns);
    }

    #[test]
    fn wallclock_mode_moves_data() {
        let out = run_spmd(4, &CostModel::zero(), Mode::Wallclock, |comm| async move {
            let p = comm.size();
            let r = comm.rank();
            comm.send((r + 1) % p, &[r as u8])?;
            let got = comm.recv((r + p - 1) % p).await?;
            Ok(got[0])
        })
        .unwrap();
        assert_eq!(out.outputs, vec![3, 0, 1, 2]);
    }
}
