//! The `bench`, `tune`, `run` and `report` pipeline steps.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::{read_csv, write_csv, Bench, Function, SampleSet, Skipped};
use crate::collectives::CollectiveKind;
use crate::config::RunConfig;
use crate::dispatch::TunedRuntime;
use crate::error::{Error, Result};
use crate::mockups::MockupId;
use crate::profile::{detect_violations, median, Profile, ViolationReport};

/// A `<collective>:alg=<mockup>` selection pinning one mock-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModuleSpec {
    pub collective: CollectiveKind,
    pub mockup: MockupId,
}

impl FromStr for ModuleSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (coll, alg) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("expected <collective>:alg=<name>, got `{s}`")))?;
        let name = alg.strip_prefix("alg=").ok_or_else(|| {
            Error::Config(format!("expected alg=<name> after `{coll}:`, got `{alg}`"))
        })?;
        let collective = CollectiveKind::from_name(coll)?;
        let unknown = || Error::UnknownMockup {
            name: name.to_string(),
            valid: MockupId::for_kind(collective)
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(", "),
        };
        let mockup: MockupId = name.parse().map_err(|_| unknown())?;
        if mockup.replaces() != collective {
            return Err(unknown());
        }
        Ok(ModuleSpec { collective, mockup })
    }
}

/// Functions to measure: without modules, each configured collective's
/// Default and all its mock-ups; with modules, only the named collectives'
/// Default and the pinned mock-ups.
pub fn bench_plan(cfg: &RunConfig, modules: &[ModuleSpec]) -> Vec<(Function, Vec<usize>)> {
    let mut funcs: Vec<Function> = Vec::new();
    if modules.is_empty() {
        for &kind in &cfg.collectives {
            funcs.push(Function::Default(kind));
            funcs.extend(MockupId::for_kind(kind).into_iter().map(Function::Mockup));
        }
    } else {
        for m in modules {
            for f in [Function::Default(m.collective), Function::Mockup(m.mockup)] {
                if !funcs.contains(&f) {
                    funcs.push(f);
                }
            }
        }
    }
    funcs.into_iter().map(|f| (f, cfg.msizes.clone())).collect()
}

/// Benchmarks the plan and writes raw CSV to `out`. Returns the points that
/// were skipped for lack of scratch space.
pub fn cmd_bench(
    cfg: &RunConfig,
    modules: &[ModuleSpec],
    out: &mut dyn Write,
) -> Result<Vec<Skipped>> {
    let settings = cfg.bench_settings();
    let result = Bench::new(&settings).run_benchmark(&bench_plan(cfg, modules))?;
    write_csv(out, &cfg.metadata(), &result.samples, &[])?;
    Ok(result.skipped)
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub report: ViolationReport,
    pub written: Vec<PathBuf>,
    pub summary: String,
}

fn read_samples(paths: &[PathBuf]) -> Result<Vec<SampleSet>> {
    let mut samples = Vec::new();
    for path in paths {
        let file = std::fs::File::open(path)?;
        samples.extend(read_csv(file).map_err(|e| e.in_file(path))?.samples);
    }
    Ok(samples)
}

/// Finds guideline violations in benchmark CSV files and writes one profile
/// per violated collective and process count into the profile directory.
pub fn cmd_tune(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<TuneOutcome> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("no benchmark files given"));
    }
    let samples = read_samples(inputs)?;
    let (report, profiles) = detect_violations(&samples, cfg.replacement_threshold)?;
    let mut written = Vec::new();
    if !profiles.is_empty() {
        std::fs::create_dir_all(&cfg.profile_dir)?;
    }
    for profile in &profiles {
        let path = cfg.profile_dir.join(profile.file_name());
        profile.write(&path)?;
        written.push(path);
    }
    let summary = summarize(&report, &profiles);
    Ok(TuneOutcome {
        report,
        written,
        summary,
    })
}

fn summarize(report: &ViolationReport, profiles: &[Profile]) -> String {
    if profiles.is_empty() {
        return "no violations\n".to_string();
    }
    let mut s = String::new();
    for profile in profiles {
        let entries: Vec<_> = report
            .entries
            .iter()
            .filter(|e| e.collective == profile.collective && e.nprocs == profile.nprocs)
            .collect();
        let violated: Vec<_> = entries.iter().filter(|e| e.winner.is_some()).collect();
        let _ = writeln!(
            s,
            "{} on {} processes: {} of {} sizes violated",
            profile.collective.mpi_name(),
            profile.nprocs,
            violated.len(),
            entries.len()
        );
        for e in violated {
            let winner = e.winner.expect("filtered on winners");
            let t = e
                .mockups
                .iter()
                .find(|m| m.0 == winner)
                .map_or(0.0, |m| m.1);
            let _ = writeln!(
                s,
                "  {} B: {} {:.3} us vs Default {:.3} us ({:.1}% faster)",
                e.msize,
                winner,
                t,
                e.default_us,
                100.0 * e.improvement
            );
        }
    }
    s
}

/// Benchmarks every configured collective through the tuned runtime and
/// writes CSV with the replacement footer.
pub fn cmd_run(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<Skipped>> {
    let settings = cfg.bench_settings();
    let tuned = TunedRuntime::init_tuned(&cfg.profile_dir, &settings)?;
    let plan: Vec<_> = cfg
        .collectives
        .iter()
        .map(|&k| (Function::Tuned(k), cfg.msizes.clone()))
        .collect();
    let result = Bench::with_tuned(&settings, &tuned).run_benchmark(&plan)?;
    write_csv(
        out,
        &cfg.metadata(),
        &result.samples,
        &tuned.replacement_footer(),
    )?;
    Ok(result.skipped)
}

/// Per-run medians of the sample sets of one function at one point.
struct Point {
    kind: CollectiveKind,
    function: String,
    nprocs: usize,
    msize: usize,
    run_medians: Vec<f64>,
}

fn function_kind(name: &str) -> Result<CollectiveKind> {
    match CollectiveKind::from_name(name) {
        Ok(kind) => Ok(kind),
        Err(_) => Ok(name.parse::<MockupId>()?.replaces()),
    }
}

fn points(samples: &[SampleSet]) -> Result<Vec<Point>> {
    let mut out: Vec<Point> = Vec::new();
    let mut index: HashMap<(String, usize, usize), usize> = HashMap::new();
    for set in samples {
        let key = (set.function.clone(), set.nprocs, set.msize);
        let i = *index.entry(key).or_insert_with(|| {
            out.push(Point {
                kind: CollectiveKind::Bcast,
                function: set.function.clone(),
                nprocs: set.nprocs,
                msize: set.msize,
                run_medians: Vec::new(),
            });
            out.len() - 1
        });
        out[i].kind = function_kind(&set.function)?;
        out[i].run_medians.push(median(&set.latencies_us())?);
    }
    Ok(out)
}

/// Relative latencies against the Default measurements in `default`: one
/// row per function and point of every input, Default rows first.
pub fn cmd_report(default: &Path, inputs: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let reference = points(&read_samples(&[default.to_path_buf()])?)?;
    let baseline: HashMap<(CollectiveKind, usize, usize), f64> = reference
        .iter()
        .filter(|p| CollectiveKind::from_name(&p.function).is_ok())
        .map(|p| Ok(((p.kind, p.nprocs, p.msize), median(&p.run_medians)?)))
        .collect::<Result<_>>()?;
    if baseline.is_empty() {
        return Err(Error::EmptyInput(
            "no Default measurements in the reference file",
        ));
    }

    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "collective",
        "msize",
        "nprocs",
        "function",
        "source",
        "relative",
        "median_of_medians",
        "min_run_median",
        "max_run_median",
    ])?;
    let mut sources = vec![(default.to_path_buf(), reference)];
    for path in inputs {
        sources.push((
            path.clone(),
            points(&read_samples(std::slice::from_ref(path))?)?,
        ));
    }
    for (path, pts) in &sources {
        for p in pts {
            let base = baseline.get(&(p.kind, p.nprocs, p.msize)).ok_or_else(|| {
                Error::KeyMismatch(format!(
                    "{} on {} processes at {} bytes (from {})",
                    p.kind.mpi_name(),
                    p.nprocs,
                    p.msize,
                    path.display()
                ))
            })?;
            let mom = median(&p.run_medians)?;
            let min = p.run_medians.iter().copied().fold(f64::INFINITY, f64::min);
            let max = p
                .run_medians
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            w.write_record([
                p.kind.mpi_name().to_string(),
                p.msize.to_string(),
                p.nprocs.to_string(),
                p.function.clone(),
                path.display().to_string(),
                format!("{:.6}", mom / base),
                format!("{mom:.3}"),
                format!("{min:.3}"),
                format!("{max:.3}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
