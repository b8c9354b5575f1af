//! Flat key-value experiment configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment lines start with '#'
//! key = value
//! ```
//!
//! Keys are kebab-case and match the command-line flags; values are
//! integers, reals, names, paths, or comma-separated lists. Blank lines
//! are ignored, duplicate keys are rejected, and unknown keys are errors.
//! Command-line overrides are applied on top of the file through the same
//! [`ExperimentBuilder::set`] path.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::experiment::{Algorithm, ExperimentSpec, Scenario};
use crate::model::ModelConfig;
use crate::simulate::SimConfig;

/// Every recognized configuration key.
pub const KEYS: &[&str] = &[
    "scenario",
    "algorithms",
    "out",
    "seed",
    "repeats",
    "workers",
    "dim",
    "tasks",
    "groups",
    "clusters",
    "sparsity",
    "undersampling",
    "sigma",
    "overlap",
    "iterations",
    "num-probes",
    "cg-steps",
    "cg-rel-tol",
    "alpha-max",
    "dense-limit",
    "f-grid",
    "dim-grid",
    "task-grid",
    "cluster-grid",
    "data",
];

/// Execution knobs that steer the runtime but are deliberately not part of
/// the manifest: results must not depend on them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecOptions {
    pub workers: Option<usize>,
}

/// Parses config text into ordered (key, value) pairs, enforcing the line
/// grammar and rejecting duplicates.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut entries = Vec::new();
    let mut seen = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::ConfigSyntax {
                line: idx + 1,
                message: format!("expected 'key = value', got '{line}'"),
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return Err(Error::ConfigSyntax {
                line: idx + 1,
                message: "empty key".into(),
            });
        }
        if value.is_empty() {
            return Err(Error::ConfigSyntax {
                line: idx + 1,
                message: format!("key '{key}' has an empty value"),
            });
        }
        if let Some(previous) = seen.insert(key.clone(), idx + 1) {
            return Err(Error::ConfigSyntax {
                line: idx + 1,
                message: format!("key '{key}' already set on line {previous}"),
            });
        }
        entries.push((key, value));
    }
    Ok(entries)
}

/// Accumulates file entries and command-line overrides, then resolves the
/// full experiment description.
#[derive(Clone, Debug, Default)]
pub struct ExperimentBuilder {
    entries: BTreeMap<String, String>,
}

impl ExperimentBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Merges a config file; later [`set`](Self::set) calls override it.
    pub fn apply_config(&mut self, text: &str) -> Result<()> {
        for (key, value) in parse_config(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::InvalidConfig(format!(
                "unknown configuration key '{key}'"
            )));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                Error::InvalidConfig(format!("cannot parse '{raw}' for key '{key}'"))
            }),
        }
    }

    fn get_list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.entries.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .split(',')
                .map(|item| {
                    item.trim().parse().map_err(|_| {
                        Error::InvalidConfig(format!(
                            "cannot parse list item '{}' for key '{key}'",
                            item.trim()
                        ))
                    })
                })
                .collect(),
        }
    }

    /// Resolves defaults, derives the noise precision from sigma, and
    /// assembles the spec plus execution options.
    pub fn build(&self) -> Result<(ExperimentSpec, ExecOptions)> {
        let scenario = match self.entries.get("scenario") {
            None => Scenario::OverlapSweep,
            Some(raw) => raw.parse()?,
        };

        let algorithms = match self.entries.get("algorithms") {
            None => match scenario {
                Scenario::OverlapSweep => vec![
                    Algorithm::SingleTask,
                    Algorithm::MultiTask,
                    Algorithm::ClusteredCofem,
                ],
                _ => vec![Algorithm::ClusteredEm, Algorithm::ClusteredCofem],
            },
            Some(raw) => raw
                .split(',')
                .map(|item| item.trim().parse())
                .collect::<Result<_>>()?,
        };

        let dim = self.get("dim", 512usize)?;
        let tasks = self.get("tasks", 8usize)?;
        let groups = self.get("groups", 2usize)?;
        let clusters = self.get("clusters", 2usize)?;
        let seed = self.get("seed", 0u64)?;
        let overlap = self.get("overlap", 0.5f64)?;

        let mut sim = SimConfig::new(dim, tasks, groups, overlap, seed);
        sim.sparsity = self.get("sparsity", sim.sparsity)?;
        sim.undersampling = self.get("undersampling", sim.undersampling)?;
        sim.sigma = self.get("sigma", sim.sigma)?;

        if !(sim.sigma > 0.0) {
            return Err(Error::InvalidConfig(
                "sigma must be positive: the noise precision is derived as 1/sigma^2".into(),
            ));
        }
        let beta = 1.0 / (sim.sigma * sim.sigma);

        let mut model = ModelConfig::new(tasks, clusters, dim, beta, seed);
        model.iterations = self.get("iterations", model.iterations)?;
        model.num_probes = self.get("num-probes", model.num_probes)?;
        model.cg_steps = self.get("cg-steps", model.cg_steps)?;
        model.cg_rel_tol = self.get("cg-rel-tol", model.cg_rel_tol)?;
        model.alpha_max = self.get("alpha-max", model.alpha_max)?;
        model.dense_limit = self.get("dense-limit", model.dense_limit)?;

        let spec = ExperimentSpec {
            scenario,
            algorithms,
            sim,
            model,
            out_dir: PathBuf::from(self.get("out", "cofem-out".to_string())?),
            repeats: self.get("repeats", 1usize)?,
            f_grid: self.get_list("f-grid", vec![0.0, 0.25, 0.5, 0.75, 1.0])?,
            dim_grid: self.get_list("dim-grid", vec![512, 1024, 2048, 4096, 8192])?,
            task_grid: self.get_list("task-grid", vec![2, 4, 8, 16])?,
            cluster_grid: self.get_list("cluster-grid", vec![1, 2, 4])?,
            data_file: self.entries.get("data").map(PathBuf::from),
        };
        let exec = ExecOptions {
            workers: match self.entries.get("workers") {
                None => None,
                Some(raw) => Some(raw.parse().map_err(|_| {
                    Error::InvalidConfig(format!("cannot parse '{raw}' for key 'workers'"))
                })?),
            },
        };
        Ok((spec, exec))
    }
}
