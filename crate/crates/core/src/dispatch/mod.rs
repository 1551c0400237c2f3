//! The tuned runtime: routes collective calls to a mock-up when a profile
//! says so and the scratch arenas are large enough, and to the Default
//! algorithm otherwise.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Mutex;

use crate::bench::BenchSettings;
use crate::collectives::{execute_collective, CollectiveCall, CollectiveKind, DefaultAlgorithms};
use crate::error::{Error, Result};
use crate::mockups::{
    execute_mockup, extra_memory_required, MockupConfig, MockupId, ScratchBuffers,
};
use crate::profile::Profile;
use crate::runtime::Comm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Default,
    Mockup(MockupId),
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Default => f.write_str("Default"),
            Choice::Mockup(id) => write!(f, "{id}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reason {
    ProfileHit,
    /// No profile for the collective, or no range containing the size.
    NoProfile,
    /// Profiles exist for the collective, but none for this process count.
    NprocsMismatch,
    InsufficientScratch,
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reason::ProfileHit => "profile-hit",
            Reason::NoProfile => "no-profile",
            Reason::NprocsMismatch => "nprocs-mismatch",
            Reason::InsufficientScratch => "insufficient-scratch",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DispatchDecision {
    pub collective: CollectiveKind,
    pub msize: usize,
    pub chosen: Choice,
    pub reason: Reason,
}

pub struct TunedRuntime {
    profiles: HashMap<(CollectiveKind, usize), Profile>,
    profiled_kinds: HashSet<CollectiveKind>,
    scratch: Vec<Mutex<ScratchBuffers>>,
    msg_buffer_bytes: usize,
    int_buffer_bytes: usize,
    mockup: MockupConfig,
    defaults: DefaultAlgorithms,
    log: Mutex<Vec<DispatchDecision>>,
}

impl TunedRuntime {
    /// Runtime over `profiles`, with scratch arenas for `settings.nprocs`
    /// ranks allocated here, once.
    pub fn new(profiles: Vec<Profile>, settings: &BenchSettings) -> Result<Self> {
        let mut index = HashMap::new();
        for p in profiles {
            p.validate()?;
            let key = (p.collective, p.nprocs);
            if index.insert(key, p).is_some() {
                return Err(Error::InvariantViolation(format!(
                    "two profiles for {} on {} processes",
                    key.0.mpi_name(),
                    key.1
                )));
            }
        }
        let profiled_kinds = index.keys().map(|&(k, _)| k).collect();
        let scratch = (0..settings.nprocs)
            .map(|_| {
                Mutex::new(ScratchBuffers::new(
                    settings.msg_buffer_bytes,
                    settings.int_buffer_bytes,
                ))
            })
            .collect();
        Ok(TunedRuntime {
            profiles: index,
            profiled_kinds,
            scratch,
            msg_buffer_bytes: settings.msg_buffer_bytes,
            int_buffer_bytes: settings.int_buffer_bytes,
            mockup: settings.mockup,
            defaults: settings.defaults.clone(),
            log: Mutex::new(Vec::new()),
        })
    }

    /// Loads every `*.profile` file in `dir`, in name order. A missing
    /// directory counts as empty.
    pub fn init_tuned(dir: &Path, settings: &BenchSettings) -> Result<Self> {
        let mut paths = Vec::new();
        if dir.exists() {
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "profile") {
                    paths.push(path);
                }
            }
        }
        paths.sort();
        let profiles = paths
            .iter()
            .map(|p| Profile::read(p))
            .collect::<Result<Vec<_>>>()?;
        TunedRuntime::new(profiles, settings)
    }

    pub fn profile(&self, kind: CollectiveKind, nprocs: usize) -> Option<&Profile> {
        self.profiles.get(&(kind, nprocs))
    }

    /// What a call would run, without running it.
    pub fn decide(&self, call: &CollectiveCall, p: usize) -> Result<DispatchDecision> {
        let msize = call.msize_bytes(p);
        let decision = |chosen, reason| DispatchDecision {
            collective: call.kind,
            msize,
            chosen,
            reason,
        };
        let Some(profile) = self.profile(call.kind, p) else {
            let reason = if self.profiled_kinds.contains(&call.kind) {
                Reason::NprocsMismatch
            } else {
                Reason::NoProfile
            };
            return Ok(decision(Choice::Default, reason));
        };
        let Some(id) = profile.lookup(msize as u64) else {
            return Ok(decision(Choice::Default, Reason::NoProfile));
        };
        let need = extra_memory_required(id, call, p, &self.mockup)?;
        if need.msg_bytes > self.msg_buffer_bytes || need.int_bytes() > self.int_buffer_bytes {
            return Ok(decision(Choice::Default, Reason::InsufficientScratch));
        }
        Ok(decision(Choice::Mockup(id), Reason::ProfileHit))
    }

    /// Runs `call` on this rank through the tuned selection. Rank 0 records
    /// the decision. Every rank reaches the same decision, since it depends
    /// only on the call and on state shared by all ranks.
    // Arenas are per rank, so no other task waits on the held lock.
    #[allow(clippy::await_holding_lock)]
    pub async fn dispatch(
        &self,
        comm: &Comm,
        call: &CollectiveCall,
        send: &[u8],
        recv: &mut [u8],
    ) -> Result<()> {
        let p = comm.size();
        let rank = comm.rank();
        call.validate(p)?;
        let decision = self.decide(call, p)?;
        if rank == 0 {
            self.log
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(decision);
        }
        match decision.chosen {
            Choice::Default => {
                execute_collective(comm, call, self.defaults.algorithm(call.kind), send, recv).await
            }
            Choice::Mockup(id) => {
                let scratch = self.scratch.get(rank).ok_or_else(|| {
                    Error::InvalidCall(format!(
                        "tuned runtime has arenas for {} ranks, called on {p}",
                        self.scratch.len()
                    ))
                })?;
                let mut scratch = scratch.lock().unwrap_or_else(|e| e.into_inner());
                execute_mockup(
                    comm,
                    id,
                    call,
                    send,
                    recv,
                    &mut scratch,
                    &self.mockup,
                    &self.defaults,
                )
                .await
            }
        }
    }

    /// Decisions so far, in call order.
    pub fn decisions(&self) -> Vec<DispatchDecision> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }

    /// One line per distinct (collective, size) in first-seen order, then
    /// the arena capacities.
    pub fn replacement_footer(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        let mut lines: Vec<String> = self
            .decisions()
            .into_iter()
            .filter(|d| seen.insert((d.collective, d.msize)))
            .map(|d| format!("# {} {} {}", d.collective.mpi_name(), d.msize, d.chosen))
            .collect();
        lines.push(format!("# msg_buffer_bytes={}", self.msg_buffer_bytes));
        lines.push(format!("# int_buffer_bytes={}", self.int_buffer_bytes));
        lines
    }
}
