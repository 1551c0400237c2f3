use std::collections::BTreeMap;

use super::Profile;
use crate::bench::SampleSet;
use crate::collectives::CollectiveKind;
use crate::error::{Error, Result};
use crate::mockups::MockupId;

pub const DEFAULT_REPLACEMENT_THRESHOLD: f64 = 0.10;

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("median of no values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Median over runs of the per-run median latency.
pub fn median_of_medians<S: AsRef<[f64]>>(runs: &[S]) -> Result<f64> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("median of medians over no runs"));
    }
    let medians = runs
        .iter()
        .map(|r| median(r.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    median(&medians)
}

/// Comparison of one collective at one size and process count.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationEntry {
    pub collective: CollectiveKind,
    pub nprocs: usize,
    pub msize: usize,
    /// Median of medians of the Default algorithm, µs.
    pub default_us: f64,
    /// Median of medians of each measured mock-up, µs, in mock-up order.
    pub mockups: Vec<(MockupId, f64)>,
    pub winner: Option<MockupId>,
    /// `1 - best / default` for the fastest mock-up.
    pub improvement: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViolationReport {
    pub entries: Vec<ViolationEntry>,
}

impl ViolationReport {
    pub fn violations(&self) -> impl Iterator<Item = &ViolationEntry> {
        self.entries.iter().filter(|e| e.winner.is_some())
    }
}

#[derive(Default)]
struct Group {
    default: Vec<Vec<f64>>,
    mockups: BTreeMap<MockupId, Vec<Vec<f64>>>,
}

/// Compares every mock-up against the Default algorithm at every measured
/// size. The fastest mock-up wins if it is at least `threshold` faster; one
/// profile per collective and process count collects the winners.
pub fn detect_violations(
    samples: &[SampleSet],
    threshold: f64,
) -> Result<(ViolationReport, Vec<Profile>)> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(Error::Config(format!(
            "replacement threshold must lie in [0, 1), got {threshold}"
        )));
    }
    let mut groups: BTreeMap<(CollectiveKind, usize, usize), Group> = BTreeMap::new();
    for set in samples {
        let lat = set.latencies_us();
        if let Ok(kind) = CollectiveKind::from_name(&set.function) {
            groups
                .entry((kind, set.nprocs, set.msize))
                .or_default()
                .default
                .push(lat);
        } else {
            let id: MockupId = set.function.parse()?;
            groups
                .entry((id.replaces(), set.nprocs, set.msize))
                .or_default()
                .mockups
                .entry(id)
                .or_default()
                .push(lat);
        }
    }

    let mut report = ViolationReport::default();
    let mut winners: BTreeMap<(CollectiveKind, usize), Vec<(u64, MockupId)>> = BTreeMap::new();
    for ((kind, nprocs, msize), g) in groups {
        if g.default.is_empty() {
            return Err(Error::MissingDefault {
                collective: kind.mpi_name().to_string(),
                msize: msize as u64,
            });
        }
        let default_us = median_of_medians(&g.default)?;
        let mut mockups = Vec::with_capacity(g.mockups.len());
        let mut best: Option<(MockupId, f64)> = None;
        for (id, runs) in &g.mockups {
            let t = median_of_medians(runs)?;
            mockups.push((*id, t));
            if best.is_none_or(|(_, b)| t < b) {
                best = Some((*id, t));
            }
        }
        let (winner, improvement) = match best {
            Some((id, t)) => {
                let selected = t <= (1.0 - threshold) * default_us;
                (selected.then_some(id), 1.0 - t / default_us)
            }
            None => (None, 0.0),
        };
        if let Some(id) = winner {
            winners
                .entry((kind, nprocs))
                .or_default()
                .push((msize as u64, id));
        }
        report.entries.push(ViolationEntry {
            collective: kind,
            nprocs,
            msize,
            default_us,
            mockups,
            winner,
            improvement,
        });
    }

    let profiles = winners
        .into_iter()
        .map(|((kind, nprocs), w)| Profile::from_winners(kind, nprocs, &w))
        .collect::<Result<Vec<_>>>()?;
    Ok((report, profiles))
}
