//! Default implementations of the collective operations, a sequential oracle
//! for their results and closed-form costs of each algorithm.

mod algorithms;
mod oracle;
mod schedule;

use std::fmt;
use std::str::FromStr;

pub use algorithms::{
    allgather, allgatherv, allreduce, alltoall, alltoallv, bcast, exscan, gather, gatherv, reduce,
    reduce_scatter, reduce_scatter_block, scan, scatter, scatterv,
};
pub use oracle::sequential_oracle;
pub use schedule::algorithm_cost_schedule;

use crate::error::{Error, Result};
use crate::runtime::{Comm, Datatype, ReduceOp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollectiveKind {
    Bcast,
    Gather,
    Gatherv,
    Scatter,
    Scatterv,
    Allgather,
    Allgatherv,
    Alltoall,
    Alltoallv,
    Reduce,
    Allreduce,
    ReduceScatter,
    ReduceScatterBlock,
    Scan,
    Exscan,
}

impl CollectiveKind {
    pub const ALL: [CollectiveKind; 15] = [
        CollectiveKind::Bcast,
        CollectiveKind::Gather,
        CollectiveKind::Gatherv,
        CollectiveKind::Scatter,
        CollectiveKind::Scatterv,
        CollectiveKind::Allgather,
        CollectiveKind::Allgatherv,
        CollectiveKind::Alltoall,
        CollectiveKind::Alltoallv,
        CollectiveKind::Reduce,
        CollectiveKind::Allreduce,
        CollectiveKind::ReduceScatter,
        CollectiveKind::ReduceScatterBlock,
        CollectiveKind::Scan,
        CollectiveKind::Exscan,
    ];

    /// Kinds that have mock-up replacements, in the order their guidelines are listed.
    pub const TUNABLE: [CollectiveKind; 9] = [
        CollectiveKind::Allgather,
        CollectiveKind::Allreduce,
        CollectiveKind::Alltoall,
        CollectiveKind::Bcast,
        CollectiveKind::Gather,
        CollectiveKind::Reduce,
        CollectiveKind::ReduceScatterBlock,
        CollectiveKind::Scan,
        CollectiveKind::Scatter,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lower-case identifier used in configuration keys and `--module` flags.
    pub fn short_name(self) -> &'static str {
        match self {
            CollectiveKind::Bcast => "bcast",
            CollectiveKind::Gather => "gather",
            CollectiveKind::Gatherv => "gatherv",
            CollectiveKind::Scatter => "scatter",
            CollectiveKind::Scatterv => "scatterv",
            CollectiveKind::Allgather => "allgather",
            CollectiveKind::Allgatherv => "allgatherv",
            CollectiveKind::Alltoall => "alltoall",
            CollectiveKind::Alltoallv => "alltoallv",
            CollectiveKind::Reduce => "reduce",
            CollectiveKind::Allreduce => "allreduce",
            CollectiveKind::ReduceScatter => "reducescatter",
            CollectiveKind::ReduceScatterBlock => "reducescatterblock",
            CollectiveKind::Scan => "scan",
            CollectiveKind::Exscan => "exscan",
        }
    }

    pub fn mpi_name(self) -> &'static str {
        match self {
            CollectiveKind::Bcast => "MPI_Bcast",
            CollectiveKind::Gather => "MPI_Gather",
            CollectiveKind::Gatherv => "MPI_Gatherv",
            CollectiveKind::Scatter => "MPI_Scatter",
            CollectiveKind::Scatterv => "MPI_Scatterv",
            CollectiveKind::Allgather => "MPI_Allgather",
            CollectiveKind::Allgatherv => "MPI_Allgatherv",
            CollectiveKind::Alltoall => "MPI_Alltoall",
            CollectiveKind::Alltoallv => "MPI_Alltoallv",
            CollectiveKind::Reduce => "MPI_Reduce",
            CollectiveKind::Allreduce => "MPI_Allreduce",
            CollectiveKind::ReduceScatter => "MPI_Reduce_scatter",
            CollectiveKind::ReduceScatterBlock => "MPI_Reduce_scatter_block",
            CollectiveKind::Scan => "MPI_Scan",
            CollectiveKind::Exscan => "MPI_Exscan",
        }
    }

    /// Upper-case label used in algorithm identifiers, e.g. `REDUCE_SCATTER_BLOCK`.
    pub fn label(self) -> &'static str {
        match self {
            CollectiveKind::Bcast => "BCAST",
            CollectiveKind::Gather => "GATHER",
            CollectiveKind::Gatherv => "GATHERV",
            CollectiveKind::Scatter => "SCATTER",
            CollectiveKind::Scatterv => "SCATTERV",
            CollectiveKind::Allgather => "ALLGATHER",
            CollectiveKind::Allgatherv => "ALLGATHERV",
            CollectiveKind::Alltoall => "ALLTOALL",
            CollectiveKind::Alltoallv => "ALLTOALLV",
            CollectiveKind::Reduce => "REDUCE",
            CollectiveKind::Allreduce => "ALLREDUCE",
            CollectiveKind::ReduceScatter => "REDUCE_SCATTER",
            CollectiveKind::ReduceScatterBlock => "REDUCE_SCATTER_BLOCK",
            CollectiveKind::Scan => "SCAN",
            CollectiveKind::Exscan => "EXSCAN",
        }
    }

    /// Accepts the short name, the MPI name or the label, ignoring case and underscores.
    pub fn from_name(name: &str) -> Result<Self> {
        let norm: String = name
            .trim()
            .to_ascii_lowercase()
            .trim_start_matches("mpi_")
            .chars()
            .filter(|c| *c != '_')
            .collect();
        CollectiveKind::ALL
            .into_iter()
            .find(|k| k.short_name() == norm)
            .ok_or_else(|| Error::UnknownCollective(name.to_string()))
    }

    pub fn is_reduction(self) -> bool {
        matches!(
            self,
            CollectiveKind::Reduce
                | CollectiveKind::Allreduce
                | CollectiveKind::ReduceScatter
                | CollectiveKind::ReduceScatterBlock
                | CollectiveKind::Scan
                | CollectiveKind::Exscan
        )
    }

    pub fn is_rooted(self) -> bool {
        matches!(
            self,
            CollectiveKind::Bcast
                | CollectiveKind::Gather
                | CollectiveKind::Gatherv
                | CollectiveKind::Scatter
                | CollectiveKind::Scatterv
                | CollectiveKind::Reduce
        )
    }

    pub fn is_irregular(self) -> bool {
        matches!(
            self,
            CollectiveKind::Gatherv
                | CollectiveKind::Scatterv
                | CollectiveKind::Allgatherv
                | CollectiveKind::Alltoallv
                | CollectiveKind::ReduceScatter
        )
    }

    /// Kinds whose count must be a multiple of the group size.
    pub fn needs_divisible_count(self) -> bool {
        matches!(
            self,
            CollectiveKind::Scatter | CollectiveKind::ReduceScatterBlock
        )
    }

    pub fn variants(self) -> &'static [Variant] {
        use Variant::*;
        match self {
            CollectiveKind::Bcast => &[Linear, Binomial],
            CollectiveKind::Gather => &[Linear, Binomial],
            CollectiveKind::Allgather => &[Ring],
            CollectiveKind::Alltoall => &[Pairwise],
            CollectiveKind::Reduce => &[Binomial, Linear],
            CollectiveKind::Allreduce => &[RecursiveDoubling, ReduceBcast],
            CollectiveKind::ReduceScatter => &[ReduceScatterv],
            CollectiveKind::ReduceScatterBlock => &[ReduceScatter],
            CollectiveKind::Scatter
            | CollectiveKind::Gatherv
            | CollectiveKind::Scatterv
            | CollectiveKind::Allgatherv
            | CollectiveKind::Alltoallv
            | CollectiveKind::Scan
            | CollectiveKind::Exscan => &[Linear],
        }
    }
}

impl fmt::Display for CollectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mpi_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    Linear,
    Binomial,
    Ring,
    Pairwise,
    RecursiveDoubling,
    /// Allreduce as a binomial reduce to rank 0 followed by a binomial broadcast.
    ReduceBcast,
    /// Reduce-scatter as a binomial reduce to rank 0 followed by a linear scatterv.
    ReduceScatterv,
    /// Block reduce-scatter as a binomial reduce to rank 0 followed by a linear scatter.
    ReduceScatter,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Linear => "linear",
            Variant::Binomial => "binomial",
            Variant::Ring => "ring",
            Variant::Pairwise => "pairwise",
            Variant::RecursiveDoubling => "recursive_doubling",
            Variant::ReduceBcast => "reduce_bcast",
            Variant::ReduceScatterv => "reduce_scatterv",
            Variant::ReduceScatter => "reduce_scatter",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Variant::*;
        [
            Linear,
            Binomial,
            Ring,
            Pairwise,
            RecursiveDoubling,
            ReduceBcast,
            ReduceScatterv,
            ReduceScatter,
        ]
        .into_iter()
        .find(|v| v.name() == s.trim())
        .ok_or_else(|| Error::Config(format!("unknown algorithm variant `{s}`")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A collective kind paired with one of its algorithm variants, e.g. `BCAST:binomial`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlgorithmId {
    pub kind: CollectiveKind,
    pub variant: Variant,
}

impl AlgorithmId {
    pub fn new(kind: CollectiveKind, variant: Variant) -> Result<Self> {
        if kind.variants().contains(&variant) {
            Ok(AlgorithmId { kind, variant })
        } else {
            Err(Error::Config(format!(
                "{} has no `{}` variant (available: {})",
                kind.label(),
                variant,
                kind.variants()
                    .iter()
                    .map(|v| v.name())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }

    /// Every supported algorithm, kind by kind.
    pub fn all() -> impl Iterator<Item = AlgorithmId> {
        CollectiveKind::ALL.into_iter().flat_map(|kind| {
            kind.variants()
                .iter()
                .map(move |&variant| AlgorithmId { kind, variant })
        })
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.label(), self.variant)
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, variant) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("expected <kind>:<variant>, got `{s}`")))?;
        AlgorithmId::new(CollectiveKind::from_name(kind)?, variant.parse()?)
    }
}

/// The algorithm each collective kind uses when it is not replaced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefaultAlgorithms {
    table: [Variant; 15],
}

impl Default for DefaultAlgorithms {
    /// Shipped defaults. Broadcast is linear so that guideline violations
    /// show up under the cost model.
    fn default() -> Self {
        let mut table = [Variant::Linear; 15];
        table[CollectiveKind::Allgather.index()] = Variant::Ring;
        table[CollectiveKind::Alltoall.index()] = Variant::Pairwise;
        table[CollectiveKind::Reduce.index()] = Variant::Binomial;
        table[CollectiveKind::Allreduce.index()] = Variant::RecursiveDoubling;
        table[CollectiveKind::ReduceScatter.index()] = Variant::ReduceScatterv;
        table[CollectiveKind::ReduceScatterBlock.index()] = Variant::ReduceScatter;
        DefaultAlgorithms { table }
    }
}

impl DefaultAlgorithms {
    pub fn variant(&self, kind: CollectiveKind) -> Variant {
        self.table[kind.index()]
    }

    pub fn algorithm(&self, kind: CollectiveKind) -> AlgorithmId {
        AlgorithmId {
            kind,
            variant: self.variant(kind),
        }
    }

    pub fn set(&mut self, alg: AlgorithmId) {
        self.table[alg.kind.index()] = alg.variant;
    }

    pub fn with(mut self, alg: AlgorithmId) -> Self {
        self.set(alg);
        self
    }
}

/// Explicit counts and displacements (in elements) for the irregular kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layout {
    Regular,
    /// Per-rank counts and displacements for gatherv, scatterv and allgatherv;
    /// reduce-scatter uses only the counts.
    Vector {
        counts: Vec<i32>,
        displs: Vec<i32>,
    },
    /// Alltoallv: `counts[src][dst]` elements travel from `src` to `dst`;
    /// `send_displs[src][dst]` and `recv_displs[dst][src]` locate them.
    Matrix {
        counts: Vec<Vec<i32>>,
        send_displs: Vec<Vec<i32>>,
        recv_displs: Vec<Vec<i32>>,
    },
}

/// One invocation of a collective, as seen identically by every rank.
///
/// `count` follows the convention used for memory accounting: elements per
/// rank for most kinds, the root's total for scatter, and the full input
/// vector for both reduce-scatter kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveCall {
    pub kind: CollectiveKind,
    pub count: usize,
    pub datatype: Datatype,
    pub op: Option<ReduceOp>,
    pub root: usize,
    pub layout: Layout,
}

impl CollectiveCall {
    pub fn new(kind: CollectiveKind, count: usize, datatype: Datatype) -> Self {
        CollectiveCall {
            kind,
            count,
            datatype,
            op: None,
            root: 0,
            layout: Layout::Regular,
        }
    }

    pub fn with_op(mut self, op: ReduceOp) -> Self {
        self.op = Some(op);
        self
    }

    pub fn with_root(mut self, root: usize) -> Self {
        self.root = root;
        self
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        self.layout = layout;
        self
    }

    /// The call a benchmark issues for a message size of `msize` bytes.
    ///
    /// Message size is the per-rank block for scatter and block
    /// reduce-scatter, and the per-rank contribution otherwise. Reductions use
    /// bit-wise or on bytes.
    pub fn for_msize(kind: CollectiveKind, msize: usize, p: usize) -> Result<Self> {
        if kind.is_irregular() {
            return Err(Error::InvalidCall(format!(
                "{kind} is irregular and is not benchmarked directly"
            )));
        }
        let count = if kind.needs_divisible_count() {
            msize * p
        } else {
            msize
        };
        let mut call = CollectiveCall::new(kind, count, Datatype::Byte);
        if kind.is_reduction() {
            call.op = Some(ReduceOp::Bor);
        }
        Ok(call)
    }

    /// Message size in bytes, the key used by profiles.
    pub fn msize_bytes(&self, p: usize) -> usize {
        let e = self.datatype.extent();
        if self.kind.needs_divisible_count() {
            self.count / p.max(1) * e
        } else {
            self.count * e
        }
    }

    fn op(&self) -> Result<ReduceOp> {
        let op = self.op.ok_or_else(|| {
            Error::InvalidCall(format!("{} needs a reduction operator", self.kind))
        })?;
        op.check(self.datatype)?;
        Ok(op)
    }

    fn vector(&self, p: usize) -> Result<(&[i32], &[i32])> {
        match &self.layout {
            Layout::Vector { counts, displs }
                if counts.len() == p
                    && (displs.len() == p || self.kind == CollectiveKind::ReduceScatter) =>
            {
                if counts.iter().chain(displs.iter()).any(|&c| c < 0) {
                    return Err(Error::InvalidCall("negative count or displacement".into()));
                }
                Ok((counts, displs))
            }
            _ => Err(Error::InvalidCall(format!(
                "{} needs a vector layout with {p} counts and displacements",
                self.kind
            ))),
        }
    }

    fn matrix(&self, p: usize) -> Result<(&[Vec<i32>], &[Vec<i32>], &[Vec<i32>])> {
        match &self.layout {
            Layout::Matrix {
                counts,
                send_displs,
                recv_displs,
            } if [counts, send_displs, recv_displs]
                .iter()
                .all(|m| m.len() == p && m.iter().all(|row| row.len() == p)) =>
            {
                if [counts, send_displs, recv_displs]
                    .iter()
                    .any(|m| m.iter().flatten().any(|&c| c < 0))
                {
                    return Err(Error::InvalidCall("negative count or displacement".into()));
                }
                Ok((counts, send_displs, recv_displs))
            }
            _ => Err(Error::InvalidCall(format!(
                "{} needs a {p}x{p} count matrix with displacements",
                self.kind
            ))),
        }
    }

    /// Validates the call for a group of `p` ranks, independent of buffers.
    pub fn validate(&self, p: usize) -> Result<()> {
        if p == 0 {
            return Err(Error::EmptyGroup);
        }
        if self.kind.is_rooted() && self.root >= p {
            return Err(Error::RootOutOfRange {
                root: self.root,
                size: p,
            });
        }
        if self.kind.is_reduction() {
            self.op()?;
        }
        if self.kind.needs_divisible_count() && !self.count.is_multiple_of(p) {
            return Err(Error::InvalidCall(format!(
                "{} count {} is not divisible by {p}",
                self.kind, self.count
            )));
        }
        match self.kind {
            CollectiveKind::Alltoallv => {
                self.matrix(p)?;
            }
            k if k.is_irregular() => {
                self.vector(p)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// Expected `(send, recv)` buffer lengths in bytes on `rank`; `None`
    /// marks a buffer the kind does not use there.
    pub fn buffer_sizes(&self, p: usize, rank: usize) -> Result<(Option<usize>, Option<usize>)> {
        self.validate(p)?;
        let e = self.datatype.extent();
        let n = self.count;
        let is_root = rank == self.root;
        let root_only = |len: usize| if is_root { Some(len) } else { None };
        let sizes = match self.kind {
            CollectiveKind::Bcast => (root_only(n * e), Some(n * e)),
            CollectiveKind::Gather => (Some(n * e), root_only(p * n * e)),
            CollectiveKind::Scatter => (root_only(n * e), Some(n / p * e)),
            CollectiveKind::Allgather => (Some(n * e), Some(p * n * e)),
            CollectiveKind::Alltoall => (Some(p * n * e), Some(p * n * e)),
            CollectiveKind::Reduce => (Some(n * e), root_only(n * e)),
            CollectiveKind::Allreduce | CollectiveKind::Scan | CollectiveKind::Exscan => {
                (Some(n * e), Some(n * e))
            }
            CollectiveKind::ReduceScatterBlock => (Some(n * e), Some(n / p * e)),
            CollectiveKind::Gatherv => {
                let (counts, displs) = self.vector(p)?;
                (
                    Some(counts[rank] as usize * e),
                    root_only(extent(counts, displs) * e),
                )
            }
            CollectiveKind::Scatterv => {
                let (counts, displs) = self.vector(p)?;
                (
                    root_only(extent(counts, displs) * e),
                    Some(counts[rank] as usize * e),
                )
            }
            CollectiveKind::Allgatherv => {
                let (counts, displs) = self.vector(p)?;
                (
                    Some(counts[rank] as usize * e),
                    Some(extent(counts, displs) * e),
                )
            }
            CollectiveKind::ReduceScatter => {
                let (counts, _) = self.vector(p)?;
                let total: usize = counts.iter().map(|&c| c as usize).sum();
                (Some(total * e), Some(counts[rank] as usize * e))
            }
            CollectiveKind::Alltoallv => {
                let (counts, sd, rd) = self.matrix(p)?;
                let send_extent = (0..p)
                    .map(|dst| (sd[rank][dst] + counts[rank][dst]) as usize)
                    .max()
                    .unwrap_or(0);
                let recv_extent = (0..p)
                    .map(|src| (rd[rank][src] + counts[src][rank]) as usize)
                    .max()
                    .unwrap_or(0);
                (Some(send_extent * e), Some(recv_extent * e))
            }
        };
        Ok(sizes)
    }

    pub(crate) fn check_buffers(
        &self,
        p: usize,
        rank: usize,
        send: &[u8],
        recv: &[u8],
    ) -> Result<()> {
        let (send_len, recv_len) = self.buffer_sizes(p, rank)?;
        if let Some(len) = send_len.filter(|&len| len != send.len()) {
            return Err(Error::SizeMismatch {
                what: "send buffer",
                expected: len,
                actual: send.len(),
            });
        }
        if let Some(len) = recv_len.filter(|&len| len != recv.len()) {
            return Err(Error::SizeMismatch {
                what: "receive buffer",
                expected: len,
                actual: recv.len(),
            });
        }
        Ok(())
    }
}

/// One past the last element addressed by a counts/displacements pair.
pub(crate) fn extent(counts: &[i32], displs: &[i32]) -> usize {
    counts
        .iter()
        .zip(displs)
        .map(|(&c, &d)| (c + d) as usize)
        .max()
        .unwrap_or(0)
}

/// Runs `call` with algorithm `alg` on this rank.
///
/// For a broadcast the root's payload is read from `send` and every rank,
/// the root included, ends with it in `recv`.
pub async fn execute_collective(
    comm: &Comm,
    call: &CollectiveCall,
    alg: AlgorithmId,
    send: &[u8],
    recv: &mut [u8],
) -> Result<()> {
    if alg.kind != call.kind {
        return Err(Error::InvalidCall(format!(
            "algorithm {alg} cannot run a {} call",
            call.kind
        )));
    }
    let p = comm.size();
    let rank = comm.rank();
    call.check_buffers(p, rank, send, recv)?;
    let e = call.datatype.extent();
    let dt = call.datatype;
    let v = alg.variant;
    match call.kind {
        CollectiveKind::Bcast => {
            if rank == call.root {
                bcast(comm, v, call.root, Some(send), &mut []).await?;
                recv.copy_from_slice(send);
                Ok(())
            } else {
                bcast(comm, v, call.root, None, recv).await
            }
        }
        CollectiveKind::Gather => gather(comm, v, call.root, send, recv).await,
        CollectiveKind::Scatter => scatter(comm, v, call.root, send, recv).await,
        CollectiveKind::Allgather => allgather(comm, v, send, recv).await,
        CollectiveKind::Alltoall => alltoall(comm, v, send, recv).await,
        CollectiveKind::Reduce => reduce(comm, v, call.root, call.op()?, dt, send, recv).await,
        CollectiveKind::Allreduce => allreduce(comm, v, call.op()?, dt, send, recv).await,
        CollectiveKind::ReduceScatterBlock => {
            reduce_scatter_block(comm, v, call.op()?, dt, send, recv).await
        }
        CollectiveKind::Scan => scan(comm, call.op()?, dt, send, recv).await,
        CollectiveKind::Exscan => exscan(comm, call.op()?, dt, send, recv).await,
        CollectiveKind::Gatherv => {
            let (counts, displs) = call.vector(p)?;
            gatherv(comm, call.root, send, recv, counts, displs, e).await
        }
        CollectiveKind::Scatterv => {
            let (counts, displs) = call.vector(p)?;
            scatterv(comm, call.root, send, counts, displs, e, recv).await
        }
        CollectiveKind::Allgatherv => {
            let (counts, displs) = call.vector(p)?;
            allgatherv(comm, send, recv, counts, displs, e).await
        }
        CollectiveKind::ReduceScatter => {
            let (counts, _) = call.vector(p)?;
            reduce_scatter(comm, v, call.op()?, dt, send, recv, counts).await
        }
        CollectiveKind::Alltoallv => {
            let (counts, sd, rd) = call.matrix(p)?;
            let send_counts = &counts[rank];
            let recv_counts: Vec<i32> = (0..p).map(|src| counts[src][rank]).collect();
            alltoallv(
                comm,
                send,
                send_counts,
                &sd[rank],
                recv,
                &recv_counts,
                &rd[rank],
                e,
            )
            .await
        }
    }
}
