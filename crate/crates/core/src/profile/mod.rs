//! Performance profiles: which mock-up replaces a collective at which
//! message sizes, how to find violations in benchmark data, and the profile
//! text format.

mod format;
mod violations;

use std::path::Path;

pub use violations::{
    detect_violations, median, median_of_medians, ViolationEntry, ViolationReport,
    DEFAULT_REPLACEMENT_THRESHOLD,
};

use crate::collectives::CollectiveKind;
use crate::error::{Error, Result};
use crate::mockups::MockupId;

/// Inclusive range of message sizes in bytes mapped to a local mock-up id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MessageRange {
    pub start: u64,
    pub end: u64,
    pub alg_id: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    pub collective: CollectiveKind,
    pub nprocs: usize,
    /// Local id to mock-up table, in file order.
    pub mockups: Vec<(u32, MockupId)>,
    /// Sorted, disjoint ranges.
    pub ranges: Vec<MessageRange>,
}

impl Profile {
    /// Local id of a mock-up in profiles: 2 plus its position among the
    /// mock-ups of the same collective.
    pub fn local_id(id: MockupId) -> u32 {
        let pos = MockupId::for_kind(id.replaces())
            .iter()
            .position(|&m| m == id)
            .expect("every mock-up belongs to its own collective");
        2 + pos as u32
    }

    /// Profile replacing `collective` on `nprocs` ranks with the given
    /// mock-up at each listed message size.
    pub fn from_winners(
        collective: CollectiveKind,
        nprocs: usize,
        winners: &[(u64, MockupId)],
    ) -> Result<Profile> {
        let mut used: Vec<MockupId> = winners.iter().map(|&(_, id)| id).collect();
        used.sort();
        used.dedup();
        let mut sizes: Vec<(u64, MockupId)> = winners.to_vec();
        sizes.sort();
        let profile = Profile {
            collective,
            nprocs,
            mockups: used.iter().map(|&id| (Profile::local_id(id), id)).collect(),
            ranges: sizes
                .into_iter()
                .map(|(msize, id)| MessageRange {
                    start: msize,
                    end: msize,
                    alg_id: Profile::local_id(id),
                })
                .collect(),
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn mockup(&self, alg_id: u32) -> Option<MockupId> {
        self.mockups
            .iter()
            .find(|&&(id, _)| id == alg_id)
            .map(|&(_, m)| m)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, &(id, m)) in self.mockups.iter().enumerate() {
            if self.mockups[..i].iter().any(|&(other, _)| other == id) {
                return Err(Error::InvariantViolation(format!(
                    "duplicate mock-up id {id}"
                )));
            }
            if m.replaces() != self.collective {
                return Err(Error::InvariantViolation(format!(
                    "{m} does not replace {}",
                    self.collective
                )));
            }
        }
        for (i, r) in self.ranges.iter().enumerate() {
            if r.start > r.end {
                return Err(Error::InvariantViolation(format!(
                    "range {} {} ends before it starts",
                    r.start, r.end
                )));
            }
            if i > 0 && self.ranges[i - 1].end >= r.start {
                return Err(Error::InvariantViolation(format!(
                    "range {} {} overlaps or precedes the one before it",
                    r.start, r.end
                )));
            }
            if self.mockup(r.alg_id).is_none() {
                return Err(Error::InvariantViolation(format!(
                    "range {} {} uses unknown mock-up id {}",
                    r.start, r.end, r.alg_id
                )));
            }
        }
        Ok(())
    }

    /// Mock-up for `msize`, by binary search over the ranges.
    pub fn lookup(&self, msize: u64) -> Option<MockupId> {
        let i = self.ranges.partition_point(|r| r.end < msize);
        let r = self.ranges.get(i)?;
        if r.start <= msize {
            self.mockup(r.alg_id)
        } else {
            None
        }
    }

    /// File name under which the profile is stored.
    pub fn file_name(&self) -> String {
        format!("{}.{}.profile", self.collective.mpi_name(), self.nprocs)
    }

    /// Canonical text form.
    pub fn render(&self) -> String {
        format::render(self)
    }

    pub fn parse(text: &str) -> Result<Profile> {
        format::parse(text)
    }

    pub fn read(path: &Path) -> Result<Profile> {
        let text = std::fs::read_to_string(path)?;
        Profile::parse(&text).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        std::fs::write(path, self.render())?;
        Ok(())
    }
}
