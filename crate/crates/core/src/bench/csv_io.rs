use std::io::{Read, Write};

use super::SampleSet;
use crate::error::{Error, Result};

const COLUMNS: [&str; 6] = [
    "function",
    "msize_bytes",
    "nprocs",
    "mpirun_idx",
    "rep_idx",
    "latency_us",
];

/// Microseconds with exactly three decimals, straight from nanoseconds.
pub fn format_latency(ns: u64) -> String {
    format!("{}.{:03}", ns / 1000, ns % 1000)
}

/// Inverse of [`format_latency`]; accepts up to three decimals.
pub fn parse_latency(s: &str) -> Option<u64> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 3 || int.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let int: u64 = int.parse().ok()?;
    let frac: u64 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<3}").parse().ok()?
    };
    int.checked_mul(1000)?.checked_add(frac)
}

/// Writes `# pgtune benchmark`, one `# key=value` line per metadata entry,
/// the sample rows, and finally the footer lines verbatim.
pub fn write_csv<W: Write>(
    mut out: W,
    meta: &[(String, String)],
    samples: &[SampleSet],
    footer: &[String],
) -> Result<()> {
    writeln!(out, "# pgtune benchmark")?;
    for (key, value) in meta {
        writeln!(out, "# {key}={value}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(COLUMNS)?;
        for set in samples {
            for (rep, &ns) in set.latencies_ns.iter().enumerate() {
                w.write_record([
                    set.function.clone(),
                    set.msize.to_string(),
                    set.nprocs.to_string(),
                    set.mpirun.to_string(),
                    rep.to_string(),
                    format_latency(ns),
                ])?;
            }
        }
        w.flush()?;
    }
    for line in footer {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchData {
    /// `key=value` pairs from `#` lines, in file order.
    pub meta: Vec<(String, String)>,
    pub samples: Vec<SampleSet>,
}

impl BenchData {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Reads benchmark CSV. Consecutive rows with the same function, size,
/// process count and run form one sample set, whose repetition indices
/// must count up from zero.
pub fn read_csv<R: Read>(mut input: R) -> Result<BenchData> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let meta = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.trim().split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.iter().ne(COLUMNS) {
        return Err(Error::parse(
            reader.position().line() as usize,
            format!("expected columns {}", COLUMNS.join(",")),
        ));
    }

    let mut samples: Vec<SampleSet> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line()) as usize;
        let field = |i: usize| record.get(i).unwrap_or_default();
        let number = |i: usize| -> Result<usize> {
            field(i).parse().map_err(|_| {
                Error::parse(line, format!("{}: not a count: `{}`", COLUMNS[i], field(i)))
            })
        };
        let function = field(0).to_string();
        let (msize, nprocs, mpirun, rep) = (number(1)?, number(2)?, number(3)?, number(4)?);
        let ns = parse_latency(field(5)).ok_or_else(|| {
            Error::parse(line, format!("latency_us: not a latency: `{}`", field(5)))
        })?;
        let same_set = samples.last().is_some_and(|s| {
            s.function == function && s.msize == msize && s.nprocs == nprocs && s.mpirun == mpirun
        });
        if !same_set {
            samples.push(SampleSet {
                function,
                msize,
                nprocs,
                mpirun,
                latencies_ns: Vec::new(),
            });
        }
        let set = samples.last_mut().expect("a sample set was just ensured");
        if rep != set.latencies_ns.len() {
            return Err(Error::parse(
                line,
                format!(
                    "rep_idx {rep} out of sequence, expected {}",
                    set.latencies_ns.len()
                ),
            ));
        }
        set.latencies_ns.push(ns);
    }
    Ok(BenchData { meta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latency_formatting() {
        assert_eq!(format_latency(0), "0.000");
        assert_eq!(format_latency(1), "0.001");
        assert_eq!(format_latency(123_456_789), "123456.789");
        assert_eq!(parse_latency("123456.789"), Some(123_456_789));
        assert_eq!(parse_latency("1.5"), Some(1500));
        assert_eq!(parse_latency("7"), Some(7000));
        assert_eq!(parse_latency("1.2345"), None);
        assert_eq!(parse_latency("x"), None);
    }

    #[test]
    fn round_trip() {
        let samples = vec![
            SampleSet {
                function: "MPI_Bcast".into(),
                msize: 8,
                nprocs: 4,
                mpirun: 0,
                latencies_ns: vec![1000, 2500, 3001],
            },
            SampleSet {
                function: "bcast_as_allgatherv".into(),
                msize: 8,
                nprocs: 4,
                mpirun: 0,
                latencies_ns: vec![4],
            },
        ];
        let meta = vec![("nprocs".to_string(), "4".to_string())];
        let mut buf = Vec::new();
        write_csv(
            &mut buf,
            &meta,
            &samples,
            &["# MPI_Bcast 8 Default".to_string()],
        )
        .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# pgtune benchmark\n# nprocs=4\nfunction,msize_bytes"));
        assert!(text.contains("MPI_Bcast,8,4,0,1,2.500\n"));
        let data = read_csv(buf.as_slice()).unwrap();
        assert_eq!(data.samples, samples);
        assert_eq!(data.meta("nprocs"), Some("4"));
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = "# pgtune benchmark\nfunction,msize_bytes,nprocs,mpirun_idx,rep_idx,latency_us\nMPI_Bcast,8,4,0,0,1.0\nMPI_Bcast,8,4,0,2,1.0\n";
        let err = read_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
        let text =
            "function,msize_bytes,nprocs,mpirun_idx,rep_idx,latency_us\nMPI_Bcast,8,4,0,0,fast\n";
        assert!(matches!(
            read_csv(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
