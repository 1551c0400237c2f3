//! Latency measurement: barrier-separated observations, the repetition
//! count estimation, and raw CSV output.

mod csv_io;

use std::fmt;
use std::sync::Mutex;

pub use csv_io::{format_latency, parse_latency, read_csv, write_csv, BenchData};

use crate::collectives::{
    self as coll, execute_collective, CollectiveCall, CollectiveKind, DefaultAlgorithms, Variant,
};
use crate::dispatch::TunedRuntime;
use crate::error::{Error, Result};
use crate::mockups::{
    execute_mockup, extra_memory_required, MockupConfig, MockupId, ScratchBuffers,
};
use crate::runtime::{
    derive_seed, dissemination_barrier, ns_to_us, run_spmd, Comm, CostModel, Datatype, Mode,
    ReduceOp,
};

/// Something that can be benchmarked: a collective's Default algorithm, a
/// mock-up, or a collective routed through the tuned runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Function {
    Default(CollectiveKind),
    Mockup(MockupId),
    Tuned(CollectiveKind),
}

impl Function {
    pub fn kind(self) -> CollectiveKind {
        match self {
            Function::Default(k) | Function::Tuned(k) => k,
            Function::Mockup(id) => id.replaces(),
        }
    }

    /// Name used in benchmark output: the MPI name for Default and tuned
    /// runs, the mock-up name otherwise.
    pub fn name(self) -> &'static str {
        match self {
            Function::Default(k) | Function::Tuned(k) => k.mpi_name(),
            Function::Mockup(id) => id.name(),
        }
    }

    fn tag(self) -> u64 {
        match self {
            Function::Default(k) => k.index() as u64,
            Function::Mockup(id) => 100 + id as u64,
            Function::Tuned(k) => 200 + k.index() as u64,
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw latencies of one run of one function at one message size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub function: String,
    pub msize: usize,
    pub nprocs: usize,
    pub mpirun: usize,
    /// Latencies in nanoseconds, in execution order.
    pub latencies_ns: Vec<u64>,
}

impl SampleSet {
    pub fn latencies_us(&self) -> Vec<f64> {
        self.latencies_ns.iter().map(|&ns| ns_to_us(ns)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NrepConfig {
    pub rse_threshold_1byte: f64,
    pub rse_threshold_batch: f64,
    pub b1: usize,
    pub b2: usize,
    /// Minimum number of repetitions.
    pub k: usize,
    pub nmpiruns: usize,
    /// Observation cap for the 1-byte estimation.
    pub t1_cap: usize,
}

impl Default for NrepConfig {
    fn default() -> Self {
        NrepConfig {
            rse_threshold_1byte: 0.01,
            rse_threshold_batch: 0.05,
            b1: 5,
            b2: 5,
            k: 10,
            nmpiruns: 5,
            t1_cap: 10_000,
        }
    }
}

impl NrepConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, t) in [
            ("rse_threshold_1byte", self.rse_threshold_1byte),
            ("rse_threshold_batch", self.rse_threshold_batch),
        ] {
            if !(t > 0.0 && t < 1.0) {
                return Err(format!("{name} must lie strictly between 0 and 1, got {t}"));
            }
        }
        if self.b1 == 0 || self.k == 0 || self.nmpiruns == 0 {
            return Err("b1, K and nmpiruns must be at least 1".into());
        }
        if self.t1_cap < 2 {
            return Err("the observation cap must be at least 2".into());
        }
        Ok(())
    }
}

/// Relative standard error of the mean: `(s / sqrt(N)) / mean` with the
/// sample standard deviation `s`.
pub fn rse(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateSamples("at least two samples are needed"));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return Err(Error::DegenerateSamples("mean latency is not positive"));
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(var.sqrt() / (n as f64).sqrt() / mean)
}

fn rse_ns(samples: &[u64]) -> Result<f64> {
    let us: Vec<f64> = samples.iter().map(|&ns| ns_to_us(ns)).collect();
    rse(&us)
}

/// `max(ceil(t1 / t), k)`: enough repetitions to spend about as long as the
/// 1-byte estimation did, but never fewer than `k`.
pub fn required_nrep(t1_ns: u64, t_ns: u64, k: usize) -> usize {
    let ratio = t1_ns.div_ceil(t_ns.max(1));
    (ratio as usize).max(k)
}

/// Everything a benchmark run needs to know besides the plan.
#[derive(Debug, Clone)]
pub struct BenchSettings {
    pub nprocs: usize,
    pub mode: Mode,
    pub model: CostModel,
    pub nrep: NrepConfig,
    pub defaults: DefaultAlgorithms,
    pub mockup: MockupConfig,
    pub msg_buffer_bytes: usize,
    pub int_buffer_bytes: usize,
}

impl BenchSettings {
    pub fn new(nprocs: usize, model: CostModel) -> Self {
        BenchSettings {
            nprocs,
            mode: Mode::Virtual,
            model,
            nrep: NrepConfig::default(),
            defaults: DefaultAlgorithms::default(),
            mockup: MockupConfig::default(),
            msg_buffer_bytes: 4 << 20,
            int_buffer_bytes: 64 << 10,
        }
    }
}

/// A point of the plan that was not measured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skipped {
    pub function: Function,
    pub msize: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutput {
    pub samples: Vec<SampleSet>,
    pub skipped: Vec<Skipped>,
}

type StopRule<'a> = dyn Fn(&[u64]) -> Result<bool> + Sync + 'a;

/// Benchmark driver. Mock-up scratch arenas are allocated once, when the
/// driver is created, and reused by every run.
pub struct Bench<'a> {
    settings: &'a BenchSettings,
    tuned: Option<&'a TunedRuntime>,
    scratch: Vec<Mutex<ScratchBuffers>>,
}

impl<'a> Bench<'a> {
    pub fn new(settings: &'a BenchSettings) -> Self {
        let scratch = (0..settings.nprocs)
            .map(|_| {
                Mutex::new(ScratchBuffers::new(
                    settings.msg_buffer_bytes,
                    settings.int_buffer_bytes,
                ))
            })
            .collect();
        Bench {
            settings,
            tuned: None,
            scratch,
        }
    }

    /// A driver whose [`Function::Tuned`] entries go through `tuned`.
    pub fn with_tuned(settings: &'a BenchSettings, tuned: &'a TunedRuntime) -> Self {
        Bench {
            settings,
            tuned: Some(tuned),
            scratch: Vec::new(),
        }
    }

    /// Why `func` cannot be measured at `msize`, if it cannot.
    pub fn unsupported(&self, func: Function, msize: usize) -> Result<Option<String>> {
        let p = self.settings.nprocs;
        let call = CollectiveCall::for_msize(func.kind(), msize, p)?;
        match func {
            Function::Mockup(id) => {
                let need = extra_memory_required(id, &call, p, &self.settings.mockup)?;
                let fits = need.msg_bytes <= self.settings.msg_buffer_bytes
                    && need.int_bytes() <= self.settings.int_buffer_bytes;
                Ok((!fits).then(|| {
                    format!(
                        "needs {} message bytes and {} integer bytes of scratch",
                        need.msg_bytes,
                        need.int_bytes()
                    )
                }))
            }
            Function::Tuned(_) if self.tuned.is_none() => {
                Ok(Some("no tuned runtime configured".into()))
            }
            _ => Ok(None),
        }
    }

    /// One run of barrier-separated observations of `func` at `msize`,
    /// continuing until `stop` says so. Each observation is the maximum
    /// elapsed time over all ranks, so all ranks see the same list.
    fn observe(
        &self,
        func: Function,
        msize: usize,
        seed: u64,
        stop: &StopRule<'_>,
    ) -> Result<Vec<u64>> {
        let s = self.settings;
        let p = s.nprocs;
        let call = CollectiveCall::for_msize(func.kind(), msize, p)?;
        if let Some(reason) = self.unsupported(func, msize)? {
            return Err(Error::InvalidCall(format!(
                "{func} at {msize} bytes: {reason}"
            )));
        }
        let model = s.model.with_seed(seed);
        let call = &call;
        let out = run_spmd(p, &model, s.mode, |comm| async move {
            let rank = comm.rank();
            let (send_len, recv_len) = call.buffer_sizes(p, rank)?;
            let send: Vec<u8> = (0..send_len.unwrap_or(0))
                .map(|i| (rank + i) as u8)
                .collect();
            let mut recv = vec![0u8; recv_len.unwrap_or(0)];
            let mut latencies = Vec::new();
            loop {
                dissemination_barrier(&comm).await?;
                let start = comm.now_ns();
                self.invoke(&comm, func, call, &send, &mut recv).await?;
                let local = comm.now_ns() - start;
                latencies.push(max_over_ranks(&comm, local).await?);
                if stop(&latencies)? {
                    return Ok(latencies);
                }
            }
        })?;
        Ok(out.outputs.into_iter().next().unwrap_or_default())
    }

    // Each arena belongs to one rank, so nothing else waits on its lock.
    #[allow(clippy::await_holding_lock)]
    async fn invoke(
        &self,
        comm: &Comm,
        func: Function,
        call: &CollectiveCall,
        send: &[u8],
        recv: &mut [u8],
    ) -> Result<()> {
        let s = self.settings;
        match func {
            Function::Default(kind) => {
                execute_collective(comm, call, s.defaults.algorithm(kind), send, recv).await
            }
            Function::Mockup(id) => {
                let mut scratch = self.scratch[comm.rank()]
                    .lock()
                    .unwrap_or_else(|e| e.into_inner());
                execute_mockup(
                    comm,
                    id,
                    call,
                    send,
                    recv,
                    &mut scratch,
                    &s.mockup,
                    &s.defaults,
                )
                .await
            }
            Function::Tuned(_) => {
                let tuned = self
                    .tuned
                    .ok_or_else(|| Error::InvalidCall("no tuned runtime".into()))?;
                tuned.dispatch(comm, call, send, recv).await
            }
        }
    }

    /// Exactly `nrep` observations of `func` at `msize`.
    pub fn time_function(
        &self,
        func: Function,
        msize: usize,
        nrep: usize,
        seed: u64,
    ) -> Result<Vec<u64>> {
        if nrep == 0 {
            return Err(Error::InvalidCall("nrep must be at least 1".into()));
        }
        self.observe(func, msize, seed, &|l| Ok(l.len() >= nrep))
    }

    /// Time spent measuring `func` at 1 byte until the relative standard
    /// error drops below the 1-byte threshold, maximized over the runs.
    /// Only the timed calls count, not the barriers between them.
    pub fn estimate_t1(&self, func: Function, seed: u64) -> Result<u64> {
        let cfg = &self.settings.nrep;
        let stop = |l: &[u64]| -> Result<bool> {
            if l.len() >= 2 && rse_ns(l)? < cfg.rse_threshold_1byte {
                Ok(true)
            } else if l.len() >= cfg.t1_cap {
                Err(Error::NonConvergence { cap: cfg.t1_cap })
            } else {
                Ok(false)
            }
        };
        let mut t1 = 0;
        for run in 0..cfg.nmpiruns {
            let latencies = self.observe(
                func,
                1,
                derive_seed(seed, &[1, func.tag(), run as u64]),
                &stop,
            )?;
            t1 = t1.max(latencies.iter().sum());
        }
        Ok(t1)
    }

    /// Repetitions for `func` at `msize` given the 1-byte budget `t1_ns`.
    pub fn estimate_nrep(
        &self,
        func: Function,
        msize: usize,
        t1_ns: u64,
        seed: u64,
    ) -> Result<usize> {
        let cfg = &self.settings.nrep;
        let stop = |l: &[u64]| -> Result<bool> {
            Ok(if l.len() < cfg.b1 {
                false
            } else if l.len() == cfg.b1 {
                cfg.b2 == 0 || rse_ns(l).is_ok_and(|r| r < cfg.rse_threshold_batch)
            } else {
                l.len() >= cfg.b1 + cfg.b2
            })
        };
        let tag = [2, func.tag(), msize as u64];
        let latencies = self.observe(func, msize, derive_seed(seed, &tag), &stop)?;
        let t = latencies.iter().copied().min().unwrap_or(0);
        if t == 0 {
            return Err(Error::DegenerateSamples("all batch latencies are zero"));
        }
        Ok(required_nrep(t1_ns, t, cfg.k))
    }

    /// Runs the plan: per function, the 1-byte budget; per message size, the
    /// repetition count and then `nmpiruns` independent runs.
    pub fn run_benchmark(&self, plan: &[(Function, Vec<usize>)]) -> Result<BenchOutput> {
        if plan.is_empty() {
            return Err(Error::EmptyInput("benchmark plan"));
        }
        let seed = self.settings.model.seed;
        let mut out = BenchOutput::default();
        for &(func, ref msizes) in plan {
            let mut sizes = Vec::new();
            for &msize in msizes {
                match self.unsupported(func, msize)? {
                    Some(reason) => out.skipped.push(Skipped {
                        function: func,
                        msize,
                        reason,
                    }),
                    None => sizes.push(msize),
                }
            }
            if sizes.is_empty() {
                continue;
            }
            let t1 = self.estimate_t1(func, seed)?;
            for msize in sizes {
                let nrep = self.estimate_nrep(func, msize, t1, seed)?;
                for run in 0..self.settings.nrep.nmpiruns {
                    let tag = [3, func.tag(), msize as u64, run as u64];
                    let latencies_ns =
                        self.time_function(func, msize, nrep, derive_seed(seed, &tag))?;
                    out.samples.push(SampleSet {
                        function: func.name().to_string(),
                        msize,
                        nprocs: self.settings.nprocs,
                        mpirun: run,
                        latencies_ns,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Maximum of `local` over all ranks.
async fn max_over_ranks(comm: &Comm, local: u64) -> Result<u64> {
    let mut out = [0u8; 8];
    coll::allreduce(
        comm,
        Variant::RecursiveDoubling,
        ReduceOp::Max,
        Datatype::Float64,
        &(local as f64).to_le_bytes(),
        &mut out,
    )
    .await?;
    Ok(f64::from_le_bytes(out) as u64)
}
