//! Mock-up implementations: each regular collective re-expressed through
//! other collectives that should never be faster, with exact accounting of
//! the extra memory each replacement needs.

mod exec;
mod scratch;

use std::fmt;
use std::str::FromStr;

pub use exec::execute_mockup;
pub use scratch::ScratchBuffers;

use crate::collectives::{CollectiveCall, CollectiveKind};
use crate::error::{Error, Result};
use crate::runtime::INT_EXTENT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MockupId {
    AllgatherAsGatherBcast,
    AllgatherAsAlltoall,
    AllgatherAsAllreduce,
    AllgatherAsAllgatherv,
    AllreduceAsReduceBcast,
    AllreduceAsReducescatterblockAllgather,
    AllreduceAsReducescatterAllgatherv,
    AlltoallAsAlltoallv,
    BcastAsAllgatherv,
    BcastAsScatterAllgather,
    GatherAsAllgather,
    GatherAsGatherv,
    GatherAsReduce,
    ReduceAsAllreduce,
    ReduceAsReducescatterblockGather,
    ReduceAsReducescatterGatherv,
    ReducescatterblockAsReduceScatter,
    ReducescatterblockAsReducescatter,
    ReducescatterblockAsAllreduce,
    ScanAsExscanReducelocal,
    ScatterAsBcast,
    ScatterAsScatterv,
}

impl MockupId {
    pub const ALL: [MockupId; 22] = [
        MockupId::AllgatherAsGatherBcast,
        MockupId::AllgatherAsAlltoall,
        MockupId::AllgatherAsAllreduce,
        MockupId::AllgatherAsAllgatherv,
        MockupId::AllreduceAsReduceBcast,
        MockupId::AllreduceAsReducescatterblockAllgather,
        MockupId::AllreduceAsReducescatterAllgatherv,
        MockupId::AlltoallAsAlltoallv,
        MockupId::BcastAsAllgatherv,
        MockupId::BcastAsScatterAllgather,
        MockupId::GatherAsAllgather,
        MockupId::GatherAsGatherv,
        MockupId::GatherAsReduce,
        MockupId::ReduceAsAllreduce,
        MockupId::ReduceAsReducescatterblockGather,
        MockupId::ReduceAsReducescatterGatherv,
        MockupId::ReducescatterblockAsReduceScatter,
        MockupId::ReducescatterblockAsReducescatter,
        MockupId::ReducescatterblockAsAllreduce,
        MockupId::ScanAsExscanReducelocal,
        MockupId::ScatterAsBcast,
        MockupId::ScatterAsScatterv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MockupId::AllgatherAsGatherBcast => "allgather_as_gather_bcast",
            MockupId::AllgatherAsAlltoall => "allgather_as_alltoall",
            MockupId::AllgatherAsAllreduce => "allgather_as_allreduce",
            MockupId::AllgatherAsAllgatherv => "allgather_as_allgatherv",
            MockupId::AllreduceAsReduceBcast => "allreduce_as_reduce_bcast",
            MockupId::AllreduceAsReducescatterblockAllgather => {
                "allreduce_as_reducescatterblock_allgather"
            }
            MockupId::AllreduceAsReducescatterAllgatherv => "allreduce_as_reducescatter_allgatherv",
            MockupId::AlltoallAsAlltoallv => "alltoall_as_alltoallv",
            MockupId::BcastAsAllgatherv => "bcast_as_allgatherv",
            MockupId::BcastAsScatterAllgather => "bcast_as_scatter_allgather",
            MockupId::GatherAsAllgather => "gather_as_allgather",
            MockupId::GatherAsGatherv => "gather_as_gatherv",
            MockupId::GatherAsReduce => "gather_as_reduce",
            MockupId::ReduceAsAllreduce => "reduce_as_allreduce",
            MockupId::ReduceAsReducescatterblockGather => "reduce_as_reducescatterblock_gather",
            MockupId::ReduceAsReducescatterGatherv => "reduce_as_reducescatter_gatherv",
            MockupId::ReducescatterblockAsReduceScatter => "reducescatterblock_as_reduce_scatter",
            MockupId::ReducescatterblockAsReducescatter => "reducescatterblock_as_reducescatter",
            MockupId::ReducescatterblockAsAllreduce => "reducescatterblock_as_allreduce",
            MockupId::ScanAsExscanReducelocal => "scan_as_exscan_reducelocal",
            MockupId::ScatterAsBcast => "scatter_as_bcast",
            MockupId::ScatterAsScatterv => "scatter_as_scatterv",
        }
    }

    /// The collective this mock-up replaces.
    pub fn replaces(self) -> CollectiveKind {
        use MockupId::*;
        match self {
            AllgatherAsGatherBcast
            | AllgatherAsAlltoall
            | AllgatherAsAllreduce
            | AllgatherAsAllgatherv => CollectiveKind::Allgather,
            AllreduceAsReduceBcast
            | AllreduceAsReducescatterblockAllgather
            | AllreduceAsReducescatterAllgatherv => CollectiveKind::Allreduce,
            AlltoallAsAlltoallv => CollectiveKind::Alltoall,
            BcastAsAllgatherv | BcastAsScatterAllgather => CollectiveKind::Bcast,
            GatherAsAllgather | GatherAsGatherv | GatherAsReduce => CollectiveKind::Gather,
            ReduceAsAllreduce | ReduceAsReducescatterblockGather | ReduceAsReducescatterGatherv => {
                CollectiveKind::Reduce
            }
            ReducescatterblockAsReduceScatter
            | ReducescatterblockAsReducescatter
            | ReducescatterblockAsAllreduce => CollectiveKind::ReduceScatterBlock,
            ScanAsExscanReducelocal => CollectiveKind::Scan,
            ScatterAsBcast | ScatterAsScatterv => CollectiveKind::Scatter,
        }
    }

    /// Mock-ups of `kind`, in their canonical order.
    pub fn for_kind(kind: CollectiveKind) -> Vec<MockupId> {
        MockupId::ALL
            .into_iter()
            .filter(|m| m.replaces() == kind)
            .collect()
    }

    pub fn valid_names() -> String {
        MockupId::ALL.map(MockupId::name).join(", ")
    }
}

impl fmt::Display for MockupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MockupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MockupId::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::UnknownMockup {
                name: s.to_string(),
                valid: MockupId::valid_names(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockupConfig {
    /// Minimum chunk size, in elements, for the reduce-scatter based mock-ups.
    pub chunk_size: usize,
}

impl Default for MockupConfig {
    fn default() -> Self {
        MockupConfig { chunk_size: 1 }
    }
}

impl MockupConfig {
    /// Chunk size clamped to `1..=max(n, 1)`.
    pub fn effective_chunk(&self, n: usize) -> usize {
        self.chunk_size.clamp(1, n.max(1))
    }
}

/// Extra memory a mock-up needs on top of the caller's buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemoryRequirement {
    pub msg_bytes: usize,
    /// Integer slots of 4 bytes each.
    pub int_elems: usize,
}

impl MemoryRequirement {
    pub fn int_bytes(&self) -> usize {
        self.int_elems * INT_EXTENT
    }

    pub fn fits(&self, scratch: &ScratchBuffers) -> bool {
        self.msg_bytes <= scratch.msg_capacity() && self.int_elems <= scratch.int_capacity()
    }

    fn max(self, other: MemoryRequirement) -> MemoryRequirement {
        MemoryRequirement {
            msg_bytes: self.msg_bytes.max(other.msg_bytes),
            int_elems: self.int_elems.max(other.int_elems),
        }
    }
}

/// Smallest multiple of `p` that is at least `n`.
pub fn pad_count(n: usize, p: usize) -> usize {
    n + (p - n % p) % p
}

/// Splits `n` elements into chunks of `c` (the last one possibly shorter)
/// dealt to ranks `0..p` round-robin, and returns each rank's total.
pub fn chunk_counts(n: usize, p: usize, c: usize) -> Vec<usize> {
    let mut counts = vec![0; p];
    let mut start = 0;
    let mut rank = 0;
    while start < n {
        let len = c.min(n - start);
        counts[rank] += len;
        start += len;
        rank = (rank + 1) % p;
    }
    counts
}

/// Upper bound on any rank's share under [`chunk_counts`].
fn chunk_bound(n: usize, p: usize, c: usize) -> usize {
    (n / p + c).max(c)
}

/// What a rank with the given role needs for `id`.
fn rank_requirement(
    id: MockupId,
    call: &CollectiveCall,
    p: usize,
    is_root: bool,
    cfg: &MockupConfig,
) -> MemoryRequirement {
    use MockupId::*;
    let e = call.datatype.extent();
    let n = call.count;
    let padded = pad_count(n, p);
    let padded_pair = (padded + padded / p) * e;
    let (msg, ints) = match id {
        AllgatherAsGatherBcast | AllreduceAsReduceBcast | ScanAsExscanReducelocal => (0, 0),
        AllgatherAsAlltoall | AllgatherAsAllreduce | GatherAsReduce => (p * n * e, 0),
        AllgatherAsAllgatherv | AlltoallAsAlltoallv | GatherAsGatherv | ScatterAsScatterv => {
            (0, 2 * p)
        }
        AllreduceAsReducescatterblockAllgather
        | BcastAsScatterAllgather
        | ReduceAsReducescatterblockGather => (padded_pair, 0),
        AllreduceAsReducescatterAllgatherv | ReduceAsReducescatterGatherv => {
            (chunk_bound(n, p, cfg.effective_chunk(n)) * e, 2 * p)
        }
        BcastAsAllgatherv => (if is_root { 0 } else { n * e }, 2 * p),
        GatherAsAllgather => (if is_root { 0 } else { p * n * e }, 0),
        ReduceAsAllreduce | ScatterAsBcast => (if is_root { 0 } else { n * e }, 0),
        ReducescatterblockAsReduceScatter => (if is_root { n * e } else { 0 }, 0),
        ReducescatterblockAsReducescatter => (0, p),
        ReducescatterblockAsAllreduce => (n * e, 0),
    };
    MemoryRequirement {
        msg_bytes: msg,
        int_elems: ints,
    }
}

/// Rank that plays the root in `call` for mock-up purposes (rank 0 for kinds
/// without one).
fn effective_root(call: &CollectiveCall) -> usize {
    if call.kind.is_rooted() {
        call.root
    } else {
        0
    }
}

fn check_kind(id: MockupId, call: &CollectiveCall) -> Result<()> {
    if id.replaces() == call.kind {
        Ok(())
    } else {
        Err(Error::KindMismatch {
            mockup: id.name(),
            expected: id.replaces().mpi_name(),
            actual: call.kind.mpi_name(),
        })
    }
}

/// Extra memory `id` needs for `call` on `p` ranks: the maximum over all ranks.
pub fn extra_memory_required(
    id: MockupId,
    call: &CollectiveCall,
    p: usize,
    cfg: &MockupConfig,
) -> Result<MemoryRequirement> {
    check_kind(id, call)?;
    call.validate(p)?;
    let root = rank_requirement(id, call, p, true, cfg);
    Ok(if p > 1 {
        root.max(rank_requirement(id, call, p, false, cfg))
    } else {
        root
    })
}
