//! The clustered multi-task compressive sensing model and its two
//! inference paths.
//!
//! Tasks are assigned to latent clusters; each cluster shares one
//! per-dimension regularization vector `alpha`. Fitting alternates an
//! E-step, which summarizes every per-(task, cluster) Gaussian posterior,
//! with an M-step that re-estimates `alpha` from those summaries.
//!
//! The E-step comes in two interchangeable flavors:
//!
//! * [`exact_e_step`] densifies the posterior precision and factorizes it —
//!   the cubic-cost baseline, guarded by `dense_limit`;
//! * [`cofem_e_step`] solves `K + 1` linear systems per pair with conjugate
//!   gradient and estimates the posterior diagonal and log-determinant from
//!   the solutions and transcripts, never touching a D-by-D matrix.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, Side};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_diagonal, estimate_logdet, logdet_term_from_transcript, ProbeSet,
};
use crate::krylov::{conjugate_gradient, CgConfig};
use crate::operators::{NormalOperator, SensingOperator};
use crate::rng::{self, stream, Domain};
use crate::simulate::normalized_error;

/// Sample variances are clamped to this floor before the M-step divides by
/// them; Monte Carlo diagonal estimates can dip below zero.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Responsibility mass below which a cluster keeps its previous parameters
/// instead of evaluating a 0/0 update.
const EMPTY_CLUSTER_MASS: f64 = 1e-10;

/// One measurement/operator pair with a latent signal to reconstruct.
#[derive(Clone, Debug)]
pub struct Task {
    pub operator: SensingOperator,
    pub measurements: Vec<f64>,
}

/// Fitting configuration shared by both inference paths.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_tasks: usize,
    pub num_clusters: usize,
    pub dim: usize,
    /// Noise precision; the experiments supply `1 / sigma^2`.
    pub beta: f64,
    /// Prior cluster probabilities, summing to one.
    pub priors: Vec<f64>,
    pub iterations: usize,
    /// Probes per (task, cluster) pair on the covariance-free path.
    pub num_probes: usize,
    /// CG step cap per linear system.
    pub cg_steps: usize,
    /// CG residual tolerance; zero disables early stopping so every solve
    /// runs exactly `cg_steps` steps.
    pub cg_rel_tol: f64,
    /// Upper clamp for regularization parameters; coordinates at the cap
    /// are effectively pruned to zero.
    pub alpha_max: f64,
    /// Largest dimension the dense EM path will densify.
    pub dense_limit: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// A configuration with the experiment defaults: uniform priors,
    /// 50 iterations, 15 probes, 50 fixed CG steps.
    pub fn new(num_tasks: usize, num_clusters: usize, dim: usize, beta: f64, seed: u64) -> Self {
        Self {
            num_tasks,
            num_clusters,
            dim,
            beta,
            priors: vec![1.0 / num_clusters.max(1) as f64; num_clusters],
            iterations: 50,
            num_probes: 15,
            cg_steps: 50,
            cg_rel_tol: 0.0,
            alpha_max: 1e12,
            dense_limit: 4096,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_tasks == 0 || self.num_clusters == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(
                "task count, cluster count and dimension must be positive".into(),
            ));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise precision must be positive, got {}",
                self.beta
            )));
        }
        if self.priors.len() != self.num_clusters {
            return Err(Error::InvalidConfig(format!(
                "expected {} priors, got {}",
                self.num_clusters,
                self.priors.len()
            )));
        }
        if self.priors.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::InvalidConfig("priors must lie in [0, 1]".into()));
        }
        let total: f64 = self.priors.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(format!(
                "priors must sum to 1, got {total}"
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.num_probes == 0 || self.cg_steps == 0 {
            return Err(Error::InvalidConfig(
                "probe count and CG step cap must be at least 1".into(),
            ));
        }
        if !(self.alpha_max.is_finite() && self.alpha_max > 0.0) {
            return Err(Error::InvalidConfig("alpha_max must be positive".into()));
        }
        Ok(())
    }
}

/// Per-cluster regularization vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterParams {
    /// `alpha[c][d]`, positive and at most `alpha_max`.
    pub alpha: Vec<Vec<f64>>,
}

/// E-step output for every (task, cluster) pair.
#[derive(Clone, Debug)]
pub struct PosteriorSummary {
    /// Posterior means, `mu[t][c]` of length D.
    pub mu: Vec<Vec<Vec<f64>>>,
    /// Posterior variances (exact diagonal or Monte Carlo estimate).
    pub var_diag: Vec<Vec<Vec<f64>>>,
    /// Log-determinant of the posterior covariance (exact or estimated).
    pub logdet: Vec<Vec<f64>>,
    /// Responsibilities `q[t][c]`; each row sums to one.
    pub resp: Vec<Vec<f64>>,
}

/// Wall time and reconstruction quality of one EM iteration.
#[derive(Clone, Debug)]
pub struct IterationStats {
    pub seconds: f64,
    /// Normalized error against the supplied ground truth, if any.
    pub error_vs_truth: Option<f64>,
}

/// Final state of a fit.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: ClusterParams,
    /// Hard cluster assignment per task (ties go to the lowest index).
    pub assignments: Vec<usize>,
    /// `mu[t][assignments[t]]` for every task.
    pub reconstructions: Vec<Vec<f64>>,
    pub history: Vec<IterationStats>,
}

/// Draws every `alpha[c][d]` independently from Uniform(0, 1). Clusters get
/// independent streams, which breaks the symmetry between them.
pub fn init_params(cfg: &ModelConfig) -> ClusterParams {
    use rand::RngExt;
    let alpha = (0..cfg.num_clusters)
        .map(|c| {
            let mut rng = stream(cfg.seed, Domain::ParamInit, c as u64, 0);
            (0..cfg.dim)
                .map(|_| loop {
                    let v: f64 = rng.random();
                    if v > 0.0 {
                        break v;
                    }
                })
                .collect()
        })
        .collect();
    ClusterParams { alpha }
}

/// Softmax over `0.5 * ell_c + log prior_c`, computed with max subtraction.
pub fn responsibilities(ell: &[f64], priors: &[f64]) -> Result<Vec<f64>> {
    if ell.len() != priors.len() {
        return Err(Error::DimensionMismatch {
            context: "responsibilities",
            expected: priors.len(),
            got: ell.len(),
        });
    }
    if ell.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "log-evidence terms must be finite".into(),
        ));
    }
    let scores: Vec<f64> = ell
        .iter()
        .zip(priors)
        .map(|(&l, &p)| 0.5 * l + p.ln())
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateResponsibilities);
    }
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.iter().map(|w| w / total).collect())
}

/// M-step: `alpha[c][d] = sum_t q / sum_t q * (mu^2 + var)`, with variances
/// clamped at [`VARIANCE_FLOOR`] and the result capped at `alpha_max`.
/// Clusters with vanishing responsibility mass keep their previous vector.
pub fn m_step_update(
    post: &PosteriorSummary,
    prev: &ClusterParams,
    cfg: &ModelConfig,
) -> ClusterParams {
    let mut alpha = Vec::with_capacity(cfg.num_clusters);
    for c in 0..cfg.num_clusters {
        let mass: f64 = (0..cfg.num_tasks).map(|t| post.resp[t][c]).sum();
        if mass < EMPTY_CLUSTER_MASS {
            alpha.push(prev.alpha[c].clone());
            continue;
        }
        let mut vec_c = vec![0.0; cfg.dim];
        for (d, out) in vec_c.iter_mut().enumerate() {
            let mut denom = 0.0;
            for t in 0..cfg.num_tasks {
                let mu = post.mu[t][c][d];
                let var = post.var_diag[t][c][d].max(VARIANCE_FLOOR);
                denom += post.resp[t][c] * (mu * mu + var);
            }
            *out = (mass / denom).min(cfg.alpha_max);
        }
        alpha.push(vec_c);
    }
    ClusterParams { alpha }
}

/// Precomputed dense quantities for one task, reused across EM iterations.
pub(crate) struct DenseTaskCache {
    /// `Phi' Phi`, D-by-D.
    gram: Mat<f64>,
    /// `Phi' y`.
    phi_t_y: Vec<f64>,
}

pub(crate) fn build_dense_caches(tasks: &[Task]) -> Result<Vec<DenseTaskCache>> {
    tasks
        .iter()
        .map(|task| {
            let d = task.operator.signal_dim();
            let m = task.operator.measurement_dim();
            let dense = task.operator.to_dense();
            let phi = Mat::from_fn(m, d, |i, j| dense[i * d + j]);
            let gram = phi.transpose() * &phi;
            let phi_t_y = task.operator.adjoint(&task.measurements)?;
            Ok(DenseTaskCache { gram, phi_t_y })
        })
        .collect()
}

/// Exact E-step through Cholesky factorizations of every posterior
/// precision. Baseline path; refuses dimensions above `dense_limit`.
pub fn exact_e_step(
    tasks: &[Task],
    params: &ClusterParams,
    cfg: &ModelConfig,
) -> Result<PosteriorSummary> {
    if cfg.dim > cfg.dense_limit {
        return Err(Error::DenseLimitExceeded {
            dim: cfg.dim,
            limit: cfg.dense_limit,
        });
    }
    let caches = build_dense_caches(tasks)?;
    exact_e_step_cached(&caches, params, cfg)
}

struct PairSummary {
    mu: Vec<f64>,
    var: Vec<f64>,
    logdet: f64,
    ell: f64,
}

fn assemble_summary(pair_results: Vec<PairSummary>, cfg: &ModelConfig) -> Result<PosteriorSummary> {
    let (t_count, c_count) = (cfg.num_tasks, cfg.num_clusters);
    let mut iter = pair_results.into_iter();
    let mut mu = Vec::with_capacity(t_count);
    let mut var_diag = Vec::with_capacity(t_count);
    let mut logdet = Vec::with_capacity(t_count);
    let mut resp = Vec::with_capacity(t_count);
    for _ in 0..t_count {
        let mut mu_t = Vec::with_capacity(c_count);
        let mut var_t = Vec::with_capacity(c_count);
        let mut logdet_t = Vec::with_capacity(c_count);
        let mut ell_t = Vec::with_capacity(c_count);
        for _ in 0..c_count {
            let pair = iter.next().expect("one summary per (task, cluster) pair");
            mu_t.push(pair.mu);
            var_t.push(pair.var);
            logdet_t.push(pair.logdet);
            ell_t.push(pair.ell);
        }
        resp.push(responsibilities(&ell_t, &cfg.priors)?);
        mu.push(mu_t);
        var_diag.push(var_t);
        logdet.push(logdet_t);
    }
    Ok(PosteriorSummary {
        mu,
        var_diag,
        logdet,
        resp,
    })
}

pub(crate) fn exact_e_step_cached(
    caches: &[DenseTaskCache],
    params: &ClusterParams,
    cfg: &ModelConfig,
) -> Result<PosteriorSummary> {
    let d = cfg.dim;
    let pairs: Vec<(usize, usize)> = (0..cfg.num_tasks)
        .flat_map(|t| (0..cfg.num_clusters).map(move |c| (t, c)))
        .collect();

    let pair_results: Vec<PairSummary> = pairs
        .par_iter()
        .map(|&(t, c)| {
            let cache = &caches[t];
            let alpha = &params.alpha[c];
            let precision = Mat::from_fn(d, d, |i, j| {
                let g = cfg.beta * cache.gram[(i, j)];
                if i == j {
                    g + alpha[i]
                } else {
                    g
                }
            });
            let llt = precision
                .llt(Side::Lower)
                .map_err(|_| Error::FactorizationFailed.at_task_cluster(t, c))?;

            // log det Sigma = -log det A, from the factor's pivots.
            let factor = llt.L();
            let mut logdet = 0.0;
            for i in 0..d {
                logdet -= 2.0 * factor[(i, i)].ln();
            }

            let rhs = Mat::from_fn(d, 1, |i, _| cfg.beta * cache.phi_t_y[i]);
            let mu_mat = llt.solve(&rhs);
            let mu: Vec<f64> = (0..d).map(|i| mu_mat[(i, 0)]).collect();

            let covariance = llt.inverse();
            let var: Vec<f64> = (0..d).map(|i| covariance[(i, i)]).collect();

            let log_alpha: f64 = alpha.iter().map(|a| a.ln()).sum();
            let fit: f64 = cache
                .phi_t_y
                .iter()
                .zip(&mu)
                .map(|(g, m)| g * m)
                .sum::<f64>()
                * cfg.beta;
            let ell = logdet + log_alpha + fit;
            Ok(PairSummary {
                mu,
                var,
                logdet,
                ell,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    assemble_summary(pair_results, cfg)
}

/// Covariance-free E-step: per (task, cluster) pair, solve `K` probe
/// systems and one mean system with CG, estimate the posterior diagonal
/// from the probe solutions and the log-determinant from the transcripts.
pub fn cofem_e_step(
    tasks: &[Task],
    params: &ClusterParams,
    cfg: &ModelConfig,
    iteration: usize,
) -> Result<PosteriorSummary> {
    let d = cfg.dim;
    let cg_cfg = CgConfig {
        max_steps: cfg.cg_steps,
        rel_tol: cfg.cg_rel_tol,
    };
    let pairs: Vec<(usize, usize)> = (0..cfg.num_tasks)
        .flat_map(|t| (0..cfg.num_clusters).map(move |c| (t, c)))
        .collect();

    let pair_results: Vec<PairSummary> = pairs
        .par_iter()
        .map(|&(t, c)| {
            let run = || -> Result<PairSummary> {
                let task = &tasks[t];
                let alpha = &params.alpha[c];
                let normal = NormalOperator::new(cfg.beta, &task.operator, alpha)?;

                let probe_seed = rng::mix(cfg.seed, &[iteration as u64, t as u64, c as u64]);
                let probes = ProbeSet::sample(d, cfg.num_probes, probe_seed)?;

                let mut solutions = Vec::with_capacity(cfg.num_probes);
                let mut terms = Vec::with_capacity(cfg.num_probes);
                for probe in probes.probes() {
                    let transcript = conjugate_gradient(&normal, probe, &cg_cfg)?;
                    terms.push(logdet_term_from_transcript(&transcript, d)?);
                    solutions.push(transcript.solution);
                }

                let mut rhs = task.operator.adjoint(&task.measurements)?;
                for v in &mut rhs {
                    *v *= cfg.beta;
                }
                let mu = conjugate_gradient(&normal, &rhs, &cg_cfg)?.solution;

                let diag = estimate_diagonal(&probes, &solutions)?;
                let logdet = estimate_logdet(&terms)?.log_det;

                let log_alpha: f64 = alpha.iter().map(|a| a.ln()).sum();
                let fit: f64 = rhs.iter().zip(&mu).map(|(g, m)| g * m).sum();
                let ell = logdet + log_alpha + fit;
                Ok(PairSummary {
                    mu,
                    var: diag.values,
                    logdet,
                    ell,
                })
            };
            run().map_err(|e| e.at_task_cluster(t, c))
        })
        .collect::<Result<Vec<_>>>()?;

    assemble_summary(pair_results, cfg)
}

fn validate_tasks(tasks: &[Task], cfg: &ModelConfig, truth: Option<&[Vec<f64>]>) -> Result<()> {
    cfg.validate()?;
    if tasks.len() != cfg.num_tasks {
        return Err(Error::InvalidConfig(format!(
            "configuration names {} tasks but {} were supplied",
            cfg.num_tasks,
            tasks.len()
        )));
    }
    for (t, task) in tasks.iter().enumerate() {
        if task.operator.signal_dim() != cfg.dim {
            return Err(Error::InvalidConfig(format!(
                "task {t} has signal dimension {}, expected {}",
                task.operator.signal_dim(),
                cfg.dim
            )));
        }
        if task.measurements.len() != task.operator.measurement_dim() {
            return Err(Error::DimensionMismatch {
                context: "task measurements",
                expected: task.operator.measurement_dim(),
                got: task.measurements.len(),
            });
        }
    }
    if let Some(truth) = truth {
        if truth.len() != tasks.len() || truth.iter().any(|z| z.len() != cfg.dim) {
            return Err(Error::InvalidConfig(
                "ground truth shape does not match the task set".into(),
            ));
        }
    }
    Ok(())
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn iteration_error(
    post: &PosteriorSummary,
    truth: Option<&[Vec<f64>]>,
    cfg: &ModelConfig,
) -> Result<Option<f64>> {
    let Some(truth) = truth else {
        return Ok(None);
    };
    let recon: Vec<Vec<f64>> = (0..cfg.num_tasks)
        .map(|t| post.mu[t][argmax_lowest(&post.resp[t])].clone())
        .collect();
    Ok(Some(normalized_error(truth, &recon)?))
}

fn finish(
    post: PosteriorSummary,
    params: ClusterParams,
    history: Vec<IterationStats>,
) -> FitResult {
    let assignments: Vec<usize> = post.resp.iter().map(|q| argmax_lowest(q)).collect();
    let reconstructions: Vec<Vec<f64>> = assignments
        .iter()
        .enumerate()
        .map(|(t, &c)| post.mu[t][c].clone())
        .collect();
    FitResult {
        params,
        assignments,
        reconstructions,
        history,
    }
}

fn run_loop<F>(
    tasks: &[Task],
    cfg: &ModelConfig,
    truth: Option<&[Vec<f64>]>,
    mut e_step: F,
) -> Result<FitResult>
where
    F: FnMut(&ClusterParams, usize) -> Result<PosteriorSummary>,
{
    validate_tasks(tasks, cfg, truth)?;
    let mut params = init_params(cfg);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut last_post = None;
    for iteration in 0..cfg.iterations {
        let start = std::time::Instant::now();
        let post = e_step(&params, iteration)?;
        params = m_step_update(&post, &params, cfg);
        let seconds = start.elapsed().as_secs_f64();
        history.push(IterationStats {
            seconds,
            error_vs_truth: iteration_error(&post, truth, cfg)?,
        });
        last_post = Some(post);
    }
    let post = last_post.expect("at least one iteration");
    Ok(finish(post, params, history))
}

/// Fits the model with the exact (dense) E-step.
pub fn run_em(tasks: &[Task], cfg: &ModelConfig, truth: Option<&[Vec<f64>]>) -> Result<FitResult> {
    if cfg.dim > cfg.dense_limit {
        return Err(Error::DenseLimitExceeded {
            dim: cfg.dim,
            limit: cfg.dense_limit,
        });
    }
    validate_tasks(tasks, cfg, truth)?;
    let caches = build_dense_caches(tasks)?;
    run_loop(tasks, cfg, truth, |params, _| {
        exact_e_step_cached(&caches, params, cfg)
    })
}

/// Fits the model with the covariance-free E-step.
pub fn run_cofem(
    tasks: &[Task],
    cfg: &ModelConfig,
    truth: Option<&[Vec<f64>]>,
) -> Result<FitResult> {
    run_loop(tasks, cfg, truth, |params, iteration| {
        cofem_e_step(tasks, params, cfg, iteration)
    })
}
