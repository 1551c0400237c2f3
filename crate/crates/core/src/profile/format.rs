use std::fmt::Write;

use super::{MessageRange, Profile};
use crate::collectives::CollectiveKind;
use crate::error::{Error, Result};
use crate::mockups::MockupId;

const HEADER: &str = "# pgtune profile";

pub(super) fn render(p: &Profile) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{HEADER}");
    let _ = writeln!(s, "{}", p.collective.mpi_name());
    let _ = writeln!(s, "{} # nb. of. processes", p.nprocs);
    let _ = writeln!(s, "{:<4} # nb. of mock-up impl.", p.mockups.len());
    for (id, m) in &p.mockups {
        let _ = writeln!(s, "{id} {m}");
    }
    let _ = writeln!(s, "{:<4} # nb. of ranges", p.ranges.len());
    for (i, r) in p.ranges.iter().enumerate() {
        let _ = write!(s, "{} {} {}", r.start, r.end, r.alg_id);
        if i == 0 {
            let _ = write!(s, " # byte_range_start byte_range_end alg_id");
        }
        s.push('\n');
    }
    s
}

/// Non-empty lines with comments removed, as (line number, tokens).
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        for (i, raw) in self.inner.by_ref() {
            self.last = i + 1;
            let content = raw.split('#').next().unwrap_or_default();
            let tokens: Vec<&str> = content.split_whitespace().collect();
            if !tokens.is_empty() {
                return Ok((i + 1, tokens));
            }
        }
        Err(Error::parse(
            self.last + 1,
            format!("unexpected end of file, expected {what}"),
        ))
    }

    fn fields<const N: usize>(&mut self, what: &str) -> Result<(usize, [&'a str; N])> {
        let (line, tokens) = self.next_tokens(what)?;
        let fields: [&str; N] = tokens.as_slice().try_into().map_err(|_| {
            Error::parse(
                line,
                format!(
                    "expected {what} ({N} fields), found {} fields",
                    tokens.len()
                ),
            )
        })?;
        Ok((line, fields))
    }
}

fn number<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("{what}: not a number: `{s}`")))
}

pub(super) fn parse(text: &str) -> Result<Profile> {
    let mut raw = text.lines().enumerate();
    match raw.by_ref().find(|(_, l)| !l.trim().is_empty()) {
        Some((_, l)) if l.trim() == HEADER => {}
        Some((i, _)) => return Err(Error::parse(i + 1, format!("expected `{HEADER}`"))),
        None => return Err(Error::parse(1, "empty profile")),
    }
    let mut lines = Lines {
        inner: raw,
        last: 0,
    };

    let (line, [name]) = lines.fields("collective name")?;
    let collective = CollectiveKind::from_name(name)
        .map_err(|_| Error::parse(line, format!("unknown collective `{name}`")))?;
    let (line, [p]) = lines.fields("number of processes")?;
    let nprocs = number(line, "number of processes", p)?;

    let (line, [k]) = lines.fields("number of mock-up implementations")?;
    let k: usize = number(line, "number of mock-up implementations", k)?;
    let mut mockups = Vec::with_capacity(k.min(64));
    for _ in 0..k {
        let (line, [id, mname]) = lines.fields("mock-up id and name")?;
        let id = number(line, "mock-up id", id)?;
        let m: MockupId = mname
            .parse()
            .map_err(|_| Error::parse(line, format!("unknown mock-up `{mname}`")))?;
        mockups.push((id, m));
    }

    let (line, [m]) = lines.fields("number of ranges")?;
    let m: usize = number(line, "number of ranges", m)?;
    let mut ranges = Vec::with_capacity(m.min(4096));
    for _ in 0..m {
        let (line, [start, end, id]) = lines.fields("range start, end and id")?;
        ranges.push(MessageRange {
            start: number(line, "range start", start)?,
            end: number(line, "range end", end)?,
            alg_id: number(line, "range id", id)?,
        });
    }
    if let Ok((line, _)) = lines.next_tokens("") {
        return Err(Error::parse(
            line,
            format!("content after the {m} declared ranges"),
        ));
    }

    let profile = Profile {
        collective,
        nprocs,
        mockups,
        ranges,
    };
    profile.validate()?;
    Ok(profile)
}
