//! Run configuration: `key=value` files with `#` comments, overridable key by
//! key from the command line.

use std::path::{Path, PathBuf};

use crate::bench::{BenchSettings, NrepConfig};
use crate::collectives::{AlgorithmId, CollectiveKind, DefaultAlgorithms};
use crate::error::{Error, Result};
use crate::mockups::MockupConfig;
use crate::profile::DEFAULT_REPLACEMENT_THRESHOLD;
use crate::runtime::{CostModel, Mode};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: CostModel,
    pub mode: Mode,
    pub nprocs: usize,
    pub msizes: Vec<usize>,
    pub collectives: Vec<CollectiveKind>,
    pub nrep: NrepConfig,
    pub defaults: DefaultAlgorithms,
    pub mockup: MockupConfig,
    pub msg_buffer_bytes: usize,
    pub int_buffer_bytes: usize,
    pub profile_dir: PathBuf,
    pub replacement_threshold: f64,
}

/// Powers of two from 1 B to 64 KiB, plus 100 B and 10000 B.
pub fn default_msizes() -> Vec<usize> {
    let mut sizes: Vec<usize> = (0..=16).map(|i| 1 << i).chain([100, 10_000]).collect();
    sizes.sort_unstable();
    sizes
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: CostModel {
                jitter_fraction: 0.02,
                ..CostModel::default()
            },
            mode: Mode::Virtual,
            nprocs: 8,
            msizes: default_msizes(),
            collectives: CollectiveKind::TUNABLE.to_vec(),
            nrep: NrepConfig::default(),
            defaults: DefaultAlgorithms::default(),
            mockup: MockupConfig::default(),
            msg_buffer_bytes: 4 << 20,
            int_buffer_bytes: 64 << 10,
            profile_dir: PathBuf::from("profiles"),
            replacement_threshold: DEFAULT_REPLACEMENT_THRESHOLD,
        }
    }
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: invalid value `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| value(key, s))
        .collect()
}

impl RunConfig {
    /// Defaults overridden by `path`, if given, and then by `overrides`
    /// (`key=value` strings), and validated.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            cfg.apply_text(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        }
        for kv in overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies every `key=value` line of a configuration file.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if let Some(kind) = key.strip_prefix("default_alg.") {
            let alg: AlgorithmId = format!("{kind}:{v}").parse()?;
            self.defaults.set(alg);
            return Ok(());
        }
        match key {
            "alpha_us" => self.model.alpha_us = value(key, v)?,
            "beta_us_per_byte" => self.model.beta_us_per_byte = value(key, v)?,
            "gamma_us_per_byte" => self.model.gamma_us_per_byte = value(key, v)?,
            "jitter_fraction" => self.model.jitter_fraction = value(key, v)?,
            "seed" => self.model.seed = value(key, v)?,
            "mode" => self.mode = v.parse().map_err(Error::Config)?,
            "nprocs" => self.nprocs = value(key, v)?,
            "msizes" => self.msizes = list(key, v)?,
            "collectives" if v == "all" => self.collectives = CollectiveKind::TUNABLE.to_vec(),
            "collectives" => {
                self.collectives = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(CollectiveKind::from_name)
                    .collect::<Result<_>>()?
            }
            "rse_threshold_1byte" => self.nrep.rse_threshold_1byte = value(key, v)?,
            "rse_threshold_batch" => self.nrep.rse_threshold_batch = value(key, v)?,
            "b1" => self.nrep.b1 = value(key, v)?,
            "b2" => self.nrep.b2 = value(key, v)?,
            "K" => self.nrep.k = value(key, v)?,
            "nmpiruns" => self.nrep.nmpiruns = value(key, v)?,
            "t1_cap" => self.nrep.t1_cap = value(key, v)?,
            "size_msg_buffer_bytes" => self.msg_buffer_bytes = value(key, v)?,
            "size_int_buffer_bytes" => self.int_buffer_bytes = value(key, v)?,
            "chunk_size_C" => self.mockup.chunk_size = value(key, v)?,
            "profile_dir" => self.profile_dir = PathBuf::from(v),
            "replacement_threshold" => self.replacement_threshold = value(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(Error::Config)?;
        self.nrep.validate().map_err(Error::Config)?;
        if self.nprocs == 0 {
            return Err(Error::Config("nprocs must be at least 1".into()));
        }
        if self.msizes.is_empty() {
            return Err(Error::Config("msizes must not be empty".into()));
        }
        if self.collectives.is_empty() {
            return Err(Error::Config("collectives must not be empty".into()));
        }
        if let Some(k) = self.collectives.iter().find(|k| k.is_irregular()) {
            return Err(Error::Config(format!(
                "{} takes per-rank counts and cannot be benchmarked by message size",
                k.mpi_name()
            )));
        }
        if !(0.0..1.0).contains(&self.replacement_threshold) {
            return Err(Error::Config(format!(
                "replacement_threshold must lie in [0, 1), got {}",
                self.replacement_threshold
            )));
        }
        Ok(())
    }

    pub fn bench_settings(&self) -> BenchSettings {
        BenchSettings {
            nprocs: self.nprocs,
            mode: self.mode,
            model: self.model.clone(),
            nrep: self.nrep.clone(),
            defaults: self.defaults.clone(),
            mockup: self.mockup,
            msg_buffer_bytes: self.msg_buffer_bytes,
            int_buffer_bytes: self.int_buffer_bytes,
        }
    }

    /// Settings recorded in the header of benchmark output.
    pub fn metadata(&self) -> Vec<(String, String)> {
        let m = &self.model;
        [
            ("nprocs", self.nprocs.to_string()),
            ("mode", self.mode.to_string()),
            ("alpha_us", m.alpha_us.to_string()),
            ("beta_us_per_byte", m.beta_us_per_byte.to_string()),
            ("gamma_us_per_byte", m.gamma_us_per_byte.to_string()),
            ("jitter_fraction", m.jitter_fraction.to_string()),
            ("seed", m.seed.to_string()),
            ("nmpiruns", self.nrep.nmpiruns.to_string()),
            ("K", self.nrep.k.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}
