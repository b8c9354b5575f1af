//! Experiment scenarios and the machine-readable run ledger.
//!
//! A scenario expands into a list of (parameter point, repeat, algorithm)
//! runs. Every run is summarized as a [`RunRecord`] and written to two CSV
//! files plus a JSON manifest that pins the fully resolved configuration,
//! so any row can be reproduced from the manifest alone.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::read_simdata;
use crate::model::{run_cofem, run_em, FitResult, ModelConfig};
use crate::simulate::{generate, normalized_error, SimConfig, SimData};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Reconstruction error across support-overlap fractions.
    OverlapSweep,
    /// Wall time and memory as the signal dimension grows.
    DimScaling,
    /// Per-iteration error of both solvers on identical data and init.
    Convergence,
    /// Wall time as the task count grows.
    TaskScaling,
    /// Wall time as the model's cluster count grows.
    ClusterScaling,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::OverlapSweep,
        Scenario::DimScaling,
        Scenario::Convergence,
        Scenario::TaskScaling,
        Scenario::ClusterScaling,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::OverlapSweep => "overlap_sweep",
            Scenario::DimScaling => "dim_scaling",
            Scenario::Convergence => "convergence",
            Scenario::TaskScaling => "task_scaling",
            Scenario::ClusterScaling => "cluster_scaling",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown scenario '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// One single-cluster model per task, fitted independently.
    SingleTask,
    /// One single-cluster model shared by every task.
    MultiTask,
    /// The clustered model fitted with dense EM.
    ClusteredEm,
    /// The clustered model fitted with the covariance-free solver.
    ClusteredCofem,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::SingleTask,
        Algorithm::MultiTask,
        Algorithm::ClusteredEm,
        Algorithm::ClusteredCofem,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::SingleTask => "single_task",
            Algorithm::MultiTask => "multi_task",
            Algorithm::ClusteredEm => "clustered_em",
            Algorithm::ClusteredCofem => "clustered_cofem",
        }
    }

    fn is_clustered(&self) -> bool {
        matches!(self, Algorithm::ClusteredEm | Algorithm::ClusteredCofem)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

/// Fully resolved experiment description; the manifest serializes this.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub algorithms: Vec<Algorithm>,
    /// Base simulation layout; scenarios override dim/tasks per point.
    pub sim: SimConfig,
    /// Base model settings; scenarios override dim/tasks/clusters per point.
    pub model: ModelConfig,
    pub out_dir: PathBuf,
    pub repeats: usize,
    pub f_grid: Vec<f64>,
    pub dim_grid: Vec<usize>,
    pub task_grid: Vec<usize>,
    pub cluster_grid: Vec<usize>,
    /// Optional pre-generated data file, honored by the convergence
    /// scenario instead of simulating.
    pub data_file: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.model.validate()?;
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one algorithm must be selected".into(),
            ));
        }
        if self.scenario != Scenario::OverlapSweep {
            if let Some(a) = self.algorithms.iter().find(|a| !a.is_clustered()) {
                return Err(Error::InvalidConfig(format!(
                    "algorithm '{a}' is only valid for the overlap_sweep scenario"
                )));
            }
        }
        match self.scenario {
            Scenario::OverlapSweep if self.f_grid.is_empty() => Err(Error::InvalidConfig(
                "overlap_sweep needs a nonempty f-grid".into(),
            )),
            Scenario::DimScaling if self.dim_grid.is_empty() => Err(Error::InvalidConfig(
                "dim_scaling needs a nonempty dim-grid".into(),
            )),
            Scenario::TaskScaling if self.task_grid.is_empty() => Err(Error::InvalidConfig(
                "task_scaling needs a nonempty task-grid".into(),
            )),
            Scenario::ClusterScaling if self.cluster_grid.is_empty() => Err(Error::InvalidConfig(
                "cluster_scaling needs a nonempty cluster-grid".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Manifest pinning a run: library version plus the resolved spec.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub spec: ExperimentSpec,
}

impl Manifest {
    pub fn new(spec: ExperimentSpec) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            spec,
        }
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_json_bytes(&bytes)
    }
}

/// Outcome of one (scenario point, repeat, algorithm) run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub algorithm: Algorithm,
    pub dim: usize,
    pub num_tasks: usize,
    pub num_clusters: usize,
    pub num_probes: usize,
    pub cg_steps: usize,
    pub overlap: f64,
    pub repeat: usize,
    pub seed: u64,
    pub iteration_seconds: Vec<f64>,
    pub iteration_errors: Vec<f64>,
    pub total_seconds: f64,
    /// Analytic size of the major numeric buffers, in bytes.
    pub peak_bytes: u64,
    pub normalized_error: f64,
    /// Agreement with planted groups, best over cluster relabelings; only
    /// meaningful for clustered algorithms.
    pub assignment_accuracy: Option<f64>,
}

/// Analytic count of major buffer bytes at 8 bytes per real.
///
/// The dense path stores one D-by-D covariance per (task, cluster) pair
/// plus mean/variance vectors; the covariance-free path stores `K + 1`
/// solver vectors and a `gamma`/`xi` transcript per probe. Both carry the
/// `C` regularization vectors. Single-task runs fit tasks sequentially, so
/// their peak is a single-pair model; multi-task pools every task into one
/// cluster.
pub fn memory_estimate(
    algorithm: Algorithm,
    dim: usize,
    num_tasks: usize,
    num_clusters: usize,
    num_probes: usize,
    cg_steps: usize,
) -> u64 {
    let (d, t, c, k, u) = (
        dim as u64,
        num_tasks as u64,
        num_clusters as u64,
        num_probes as u64,
        cg_steps as u64,
    );
    let em = |t: u64, c: u64| 8 * (t * c * (d * d + 2 * d) + c * d);
    let cofem = |t: u64, c: u64| 8 * (t * c * ((k + 1) * d + 2 * k * u) + c * d);
    match algorithm {
        Algorithm::SingleTask => cofem(1, 1),
        Algorithm::MultiTask => cofem(t, 1),
        Algorithm::ClusteredEm => em(t, c),
        Algorithm::ClusteredCofem => cofem(t, c),
    }
}

/// Fraction of tasks whose assignment matches the planted group, maximized
/// over relabelings: permutations when cluster and group counts agree,
/// otherwise a per-cluster majority vote.
pub fn assignment_accuracy(assignments: &[usize], labels: &[usize]) -> f64 {
    assert_eq!(assignments.len(), labels.len());
    let total = assignments.len();
    if total == 0 {
        return 0.0;
    }
    let clusters = assignments.iter().max().unwrap() + 1;
    let groups = labels.iter().max().unwrap() + 1;

    if clusters == groups && clusters <= 8 {
        let mut perm: Vec<usize> = (0..clusters).collect();
        let mut best = 0usize;
        permute(&mut perm, 0, &mut |p| {
            let hits = assignments
                .iter()
                .zip(labels)
                .filter(|(&a, &l)| p[a] == l)
                .count();
            best = best.max(hits);
        });
        best as f64 / total as f64
    } else {
        let mut hits = 0usize;
        for c in 0..clusters {
            let mut counts = vec![0usize; groups];
            for (&a, &l) in assignments.iter().zip(labels) {
                if a == c {
                    counts[l] += 1;
                }
            }
            hits += counts.into_iter().max().unwrap_or(0);
        }
        hits as f64 / total as f64
    }
}

fn permute(values: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == values.len() {
        visit(values);
        return;
    }
    for i in k..values.len() {
        values.swap(k, i);
        permute(values, k + 1, visit);
        values.swap(k, i);
    }
}

/// Iteration-level fit summary in a shape that is uniform across
/// algorithms, including the per-task single-task composite.
struct RunOutcome {
    iteration_seconds: Vec<f64>,
    iteration_errors: Vec<f64>,
    normalized_error: f64,
    assignments: Option<Vec<usize>>,
}

fn fit_outcome(fit: &FitResult, truth: &[Vec<f64>], clustered: bool) -> Result<RunOutcome> {
    Ok(RunOutcome {
        iteration_seconds: fit.history.iter().map(|h| h.seconds).collect(),
        iteration_errors: fit
            .history
            .iter()
            .map(|h| h.error_vs_truth.expect("truth supplied to every run"))
            .collect(),
        normalized_error: normalized_error(truth, &fit.reconstructions)?,
        assignments: clustered.then(|| fit.assignments.clone()),
    })
}

fn run_single_task(data: &SimData, base: &ModelConfig) -> Result<RunOutcome> {
    let iterations = base.iterations;
    let mut per_task_fits = Vec::with_capacity(data.tasks.len());
    for (t, task) in data.tasks.iter().enumerate() {
        let mut cfg = base.clone();
        cfg.num_tasks = 1;
        cfg.num_clusters = 1;
        cfg.priors = vec![1.0];
        let tasks = std::slice::from_ref(task);
        let truth = std::slice::from_ref(&data.true_signals[t]);
        per_task_fits.push(run_cofem(tasks, &cfg, Some(truth))?);
    }

    // Combine per-task histories into the error of the concatenated
    // reconstruction: per-task normalized errors scale back up by the
    // per-task truth norms.
    let truth_sq: Vec<f64> = data
        .true_signals
        .iter()
        .map(|z| z.iter().map(|v| v * v).sum())
        .collect();
    let total_sq: f64 = truth_sq.iter().sum();
    let mut iteration_seconds = vec![0.0; iterations];
    let mut iteration_errors = vec![0.0; iterations];
    for i in 0..iterations {
        let mut err_sq = 0.0;
        for (fit, tsq) in per_task_fits.iter().zip(&truth_sq) {
            let stats = &fit.history[i];
            iteration_seconds[i] += stats.seconds;
            let e = stats.error_vs_truth.expect("truth supplied");
            err_sq += e * e * tsq;
        }
        iteration_errors[i] = (err_sq / total_sq).sqrt();
    }

    let reconstructions: Vec<Vec<f64>> = per_task_fits
        .iter()
        .map(|fit| fit.reconstructions[0].clone())
        .collect();
    Ok(RunOutcome {
        iteration_seconds,
        iteration_errors,
        normalized_error: normalized_error(&data.true_signals, &reconstructions)?,
        assignments: None,
    })
}

fn run_algorithm(algorithm: Algorithm, data: &SimData, base: &ModelConfig) -> Result<RunOutcome> {
    match algorithm {
        Algorithm::SingleTask => run_single_task(data, base),
        Algorithm::MultiTask => {
            let mut cfg = base.clone();
            cfg.num_clusters = 1;
            cfg.priors = vec![1.0];
            let fit = run_cofem(&data.tasks, &cfg, Some(&data.true_signals))?;
            fit_outcome(&fit, &data.true_signals, false)
        }
        Algorithm::ClusteredEm => {
            let fit = run_em(&data.tasks, base, Some(&data.true_signals))?;
            fit_outcome(&fit, &data.true_signals, true)
        }
        Algorithm::ClusteredCofem => {
            let fit = run_cofem(&data.tasks, base, Some(&data.true_signals))?;
            fit_outcome(&fit, &data.true_signals, true)
        }
    }
}

/// One scenario grid point.
#[derive(Clone, Copy, Debug)]
struct Point {
    dim: usize,
    num_tasks: usize,
    num_clusters: usize,
    overlap: f64,
}

fn scenario_points(spec: &ExperimentSpec) -> Vec<Point> {
    let base = Point {
        dim: spec.sim.dim,
        num_tasks: spec.sim.num_tasks,
        num_clusters: spec.model.num_clusters,
        overlap: spec.sim.overlap,
    };
    match spec.scenario {
        Scenario::OverlapSweep => spec
            .f_grid
            .iter()
            .map(|&overlap| Point { overlap, ..base })
            .collect(),
        Scenario::DimScaling => spec.dim_grid.iter().map(|&dim| Point { dim, ..base }).collect(),
        Scenario::Convergence => vec![base],
        Scenario::TaskScaling => spec
            .task_grid
            .iter()
            .map(|&num_tasks| Point { num_tasks, ..base })
            .collect(),
        Scenario::ClusterScaling => spec
            .cluster_grid
            .iter()
            .map(|&num_clusters| Point { num_clusters, ..base })
            .collect(),
    }
}

fn point_configs(spec: &ExperimentSpec, point: Point, seed: u64) -> (SimConfig, ModelConfig) {
    let mut sim = spec.sim.clone();
    sim.dim = point.dim;
    sim.num_tasks = point.num_tasks;
    sim.overlap = point.overlap;
    sim.seed = seed;

    let mut model = spec.model.clone();
    model.dim = point.dim;
    model.num_tasks = point.num_tasks;
    model.num_clusters = point.num_clusters;
    model.priors = vec![1.0 / point.num_clusters as f64; point.num_clusters];
    model.seed = seed;
    (sim, model)
}

fn load_or_generate(spec: &ExperimentSpec, sim: &SimConfig) -> Result<SimData> {
    if spec.scenario == Scenario::Convergence {
        if let Some(path) = &spec.data_file {
            let data = read_simdata(path)?;
            if data.dim() != sim.dim || data.tasks.len() != sim.num_tasks {
                return Err(Error::InvalidConfig(format!(
                    "data file holds {} tasks of dimension {}, spec expects {} of {}",
                    data.tasks.len(),
                    data.dim(),
                    sim.num_tasks,
                    sim.dim
                )));
            }
            return Ok(data);
        }
    }
    generate(sim)
}

/// Executes every run of the spec, writes `manifest.json`, `results.csv`
/// and `iterations.csv` into the output directory, and returns the records.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let manifest = Manifest::new(spec.clone());
    fs::write(
        spec.out_dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;

    let mut records = Vec::new();
    for point in scenario_points(spec) {
        for repeat in 0..spec.repeats {
            let seed = spec.sim.seed.wrapping_add(repeat as u64);
            let (sim, model) = point_configs(spec, point, seed);
            let data = load_or_generate(spec, &sim)?;
            for &algorithm in &spec.algorithms {
                if spec.scenario == Scenario::DimScaling
                    && algorithm == Algorithm::ClusteredEm
                    && point.dim > model.dense_limit
                {
                    eprintln!(
                        "skipping {algorithm} at dimension {} (dense limit {}); \
                         the dense path would exhaust memory",
                        point.dim, model.dense_limit
                    );
                    continue;
                }
                let start = Instant::now();
                let outcome = run_algorithm(algorithm, &data, &model)?;
                let total_seconds = start.elapsed().as_secs_f64();
                let accuracy = outcome
                    .assignments
                    .as_ref()
                    .map(|a| assignment_accuracy(a, &data.group_labels));
                eprintln!(
                    "[{}] dim={} tasks={} clusters={} f={} repeat={repeat} {algorithm}: \
                     {total_seconds:.2}s error={:.4}",
                    spec.scenario,
                    point.dim,
                    point.num_tasks,
                    point.num_clusters,
                    point.overlap,
                    outcome.normalized_error
                );
                records.push(RunRecord {
                    scenario: spec.scenario,
                    algorithm,
                    dim: point.dim,
                    num_tasks: point.num_tasks,
                    num_clusters: point.num_clusters,
                    num_probes: model.num_probes,
                    cg_steps: model.cg_steps,
                    overlap: point.overlap,
                    repeat,
                    seed,
                    iteration_seconds: outcome.iteration_seconds,
                    iteration_errors: outcome.iteration_errors,
                    total_seconds,
                    peak_bytes: memory_estimate(
                        algorithm,
                        point.dim,
                        point.num_tasks,
                        point.num_clusters,
                        model.num_probes,
                        model.cg_steps,
                    ),
                    normalized_error: outcome.normalized_error,
                    assignment_accuracy: accuracy,
                });
            }
        }
    }

    write_results_csv(&spec.out_dir.join("results.csv"), &records)?;
    write_iterations_csv(&spec.out_dir.join("iterations.csv"), &records)?;
    Ok(records)
}

pub const RESULTS_HEADER: &str = "scenario,algorithm,D,T,C,K,U,f,repeat,seed,\
total_seconds,peak_bytes,normalized_error,assignment_accuracy";

pub const ITERATIONS_HEADER: &str =
    "scenario,algorithm,D,T,C,K,U,f,repeat,seed,iteration,seconds,error";

fn record_key(r: &RunRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        r.scenario,
        r.algorithm,
        r.dim,
        r.num_tasks,
        r.num_clusters,
        r.num_probes,
        r.cg_steps,
        r.overlap,
        r.repeat,
        r.seed
    )
}

fn write_results_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{RESULTS_HEADER}")?;
    for r in records {
        let accuracy = r
            .assignment_accuracy
            .map(|a| a.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{},{:.6},{},{},{}",
            record_key(r),
            r.total_seconds,
            r.peak_bytes,
            r.normalized_error,
            accuracy
        )?;
    }
    Ok(())
}

fn write_iterations_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{ITERATIONS_HEADER}")?;
    for r in records {
        for (i, (seconds, error)) in r
            .iteration_seconds
            .iter()
            .zip(&r.iteration_errors)
            .enumerate()
        {
            writeln!(out, "{},{},{seconds:.6},{error}", record_key(r), i)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec(dir: &Path) -> ExperimentSpec {
        let mut sim = SimConfig::new(64, 4, 2, 1.0, 5);
        sim.sigma = 0.05;
        let mut model = ModelConfig::new(4, 2, 64, 1.0 / (0.05f64 * 0.05), 5);
        model.iterations = 3;
        model.num_probes = 4;
        model.cg_steps = 20;
        ExperimentSpec {
            scenario: Scenario::OverlapSweep,
            algorithms: vec![Algorithm::SingleTask, Algorithm::ClusteredCofem],
            sim,
            model,
            out_dir: dir.to_path_buf(),
            repeats: 2,
            f_grid: vec![0.0, 1.0],
            dim_grid: vec![],
            task_grid: vec![],
            cluster_grid: vec![],
            data_file: None,
        }
    }

    #[test]
    fn memory_estimate_reference_points() {
        // The covariance alone exceeds 8 MB at dimension 1000.
        let em = memory_estimate(Algorithm::ClusteredEm, 1000, 1, 1, 15, 50);
        assert!(em >= 8 * 1000 * 1000);

        // The covariance-free footprint is solver vectors plus transcripts.
        let cofem = memory_estimate(Algorithm::ClusteredCofem, 1000, 1, 1, 15, 50);
        let expected = 8 * (16 * 1000 + 15 * 50 * 2) + 8 * 1000;
        assert_eq!(cofem, expected);

        // The dense/matrix-free ratio grows linearly in the dimension.
        let ratio_at = |d: u64| {
            memory_estimate(Algorithm::ClusteredEm, d as usize, 2, 2, 15, 50) as f64
                / memory_estimate(Algorithm::ClusteredCofem, d as usize, 2, 2, 15, 50) as f64
        };
        let (r1, r2, r4) = (ratio_at(1000), ratio_at(2000), ratio_at(4000));
        assert!(r2 / r1 > 1.6 && r2 / r1 < 2.4, "ratio growth {}", r2 / r1);
        assert!(r4 / r2 > 1.6 && r4 / r2 < 2.4, "ratio growth {}", r4 / r2);
    }

    #[test]
    fn accuracy_is_invariant_to_relabeling() {
        let labels = [0, 0, 1, 1];
        assert_eq!(assignment_accuracy(&[0, 0, 1, 1], &labels), 1.0);
        assert_eq!(assignment_accuracy(&[1, 1, 0, 0], &labels), 1.0);
        assert_eq!(assignment_accuracy(&[0, 1, 0, 1], &labels), 0.5);
        // Three clusters over two groups fall back to majority vote.
        assert_eq!(assignment_accuracy(&[0, 2, 1, 1], &labels), 1.0);
    }

    #[test]
    fn overlap_sweep_produces_expected_rows_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let spec = base_spec(dir.path());
        let records = run_experiment(&spec).unwrap();
        // 2 f-values x 2 repeats x 2 algorithms.
        assert_eq!(records.len(), 8);
        for r in &records {
            assert_eq!(r.iteration_errors.len(), 3);
            assert!(r.normalized_error.is_finite());
            match r.algorithm {
                Algorithm::SingleTask => assert!(r.assignment_accuracy.is_none()),
                Algorithm::ClusteredCofem => assert!(r.assignment_accuracy.is_some()),
                _ => {}
            }
        }
        let results = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        assert_eq!(results.lines().count(), 9);
        assert!(results.starts_with(RESULTS_HEADER));
        let iterations = fs::read_to_string(dir.path().join("iterations.csv")).unwrap();
        assert_eq!(iterations.lines().count(), 1 + 8 * 3);

        let manifest = Manifest::load(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.spec.repeats, 2);
        assert_eq!(manifest.version, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn rerun_from_manifest_is_byte_identical_modulo_timing() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let spec = base_spec(dir_a.path());
        run_experiment(&spec).unwrap();

        let manifest = Manifest::load(&dir_a.path().join("manifest.json")).unwrap();
        let mut spec_b = manifest.spec;
        spec_b.out_dir = dir_b.path().to_path_buf();
        run_experiment(&spec_b).unwrap();

        let strip_timing = |path: &Path, time_col: usize| -> Vec<String> {
            fs::read_to_string(path)
                .unwrap()
                .lines()
                .map(|line| {
                    line.split(',')
                        .enumerate()
                        .filter(|(i, _)| *i != time_col)
                        .map(|(_, f)| f)
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect()
        };
        assert_eq!(
            strip_timing(&dir_a.path().join("results.csv"), 10),
            strip_timing(&dir_b.path().join("results.csv"), 10)
        );
        assert_eq!(
            strip_timing(&dir_a.path().join("iterations.csv"), 11),
            strip_timing(&dir_b.path().join("iterations.csv"), 11)
        );
    }

    #[test]
    fn non_overlap_scenarios_reject_baseline_algorithms() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = base_spec(dir.path());
        spec.scenario = Scenario::DimScaling;
        spec.dim_grid = vec![64];
        assert!(matches!(
            run_experiment(&spec),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn dim_scaling_skips_oversized_dense_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = base_spec(dir.path());
        spec.scenario = Scenario::DimScaling;
        spec.algorithms = vec![Algorithm::ClusteredEm, Algorithm::ClusteredCofem];
        spec.dim_grid = vec![64, 128];
        spec.repeats = 1;
        spec.model.dense_limit = 64;
        let records = run_experiment(&spec).unwrap();
        // EM runs only at 64; the covariance-free solver runs at both.
        assert_eq!(records.len(), 3);
        assert!(records
            .iter()
            .all(|r| !(r.algorithm == Algorithm::ClusteredEm && r.dim > 64)));
    }

    #[test]
    fn convergence_scenario_honors_data_file() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&SimConfig::new(64, 4, 2, 1.0, 5)).unwrap();
        let data_path = dir.path().join("bench.simdata");
        crate::io::write_simdata(&data, &data_path).unwrap();

        let mut spec = base_spec(dir.path());
        spec.scenario = Scenario::Convergence;
        spec.algorithms = vec![Algorithm::ClusteredEm, Algorithm::ClusteredCofem];
        spec.repeats = 1;
        spec.data_file = Some(data_path);
        let records = run_experiment(&spec).unwrap();
        assert_eq!(records.len(), 2);
        // Same data and init: the two solvers end close to each other.
        assert!((records[0].normalized_error - records[1].normalized_error).abs() < 0.2);
    }
}
