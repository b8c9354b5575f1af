//! Synthetic benchmark generation: sparse signals with planted group
//! structure, partial Fourier sensing, and noisy measurements.
//!
//! Groups of tasks share a support set. The overlap parameter `f` controls
//! how much the groups disagree: at `f = 0` every group has the same
//! support, at `f = 1` supports are pairwise disjoint.

use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Task;
use crate::operators::SensingOperator;
use crate::rng::{stream, Domain};

/// Benchmark layout and noise level.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    pub dim: usize,
    pub num_tasks: usize,
    /// Number of planted groups; must divide `num_tasks`.
    pub groups: usize,
    /// Fraction of nonzero signal components.
    pub sparsity: f64,
    /// Ratio of selected Fourier rows to `dim`.
    pub undersampling: f64,
    /// Measurement noise standard deviation, per real component.
    pub sigma: f64,
    /// Support disagreement fraction in `[0, 1]`.
    pub overlap: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Benchmark defaults: 5% sparsity, quarter undersampling, sigma 0.05.
    pub fn new(dim: usize, num_tasks: usize, groups: usize, overlap: f64, seed: u64) -> Self {
        Self {
            dim,
            num_tasks,
            groups,
            sparsity: 0.05,
            undersampling: 0.25,
            sigma: 0.05,
            overlap,
            seed,
        }
    }

    /// Nonzeros per signal, rounded half away from zero.
    pub fn support_size(&self) -> usize {
        (self.sparsity * self.dim as f64).round() as usize
    }

    /// Selected Fourier rows per task.
    pub fn fourier_rows(&self) -> usize {
        (self.undersampling * self.dim as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_tasks == 0 || self.groups == 0 {
            return Err(Error::InvalidConfig(
                "dimension, task count and group count must be positive".into(),
            ));
        }
        if self.num_tasks % self.groups != 0 {
            return Err(Error::InvalidConfig(format!(
                "group count {} must divide task count {}",
                self.groups, self.num_tasks
            )));
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            return Err(Error::InvalidConfig(format!(
                "overlap must lie in [0, 1], got {}",
                self.overlap
            )));
        }
        if !(self.sparsity > 0.0 && self.sparsity < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sparsity must lie in (0, 1), got {}",
                self.sparsity
            )));
        }
        if !(self.undersampling > 0.0 && self.undersampling <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "undersampling must lie in (0, 1], got {}",
                self.undersampling
            )));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise level must be nonnegative, got {}",
                self.sigma
            )));
        }
        if self.support_size() == 0 {
            return Err(Error::InvalidConfig(format!(
                "sparsity {} rounds to an empty support at dimension {}",
                self.sparsity, self.dim
            )));
        }
        if self.fourier_rows() == 0 {
            return Err(Error::InvalidConfig(format!(
                "undersampling {} rounds to zero rows at dimension {}",
                self.undersampling, self.dim
            )));
        }
        Ok(())
    }
}

/// A generated benchmark instance.
#[derive(Clone, Debug)]
pub struct SimData {
    pub true_signals: Vec<Vec<f64>>,
    pub tasks: Vec<Task>,
    /// Planted group index per task.
    pub group_labels: Vec<usize>,
}

impl SimData {
    pub fn dim(&self) -> usize {
        self.tasks
            .first()
            .map(|t| t.operator.signal_dim())
            .unwrap_or(0)
    }
}

fn sample_distinct(rng: &mut ChaCha8Rng, pool: usize, count: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, pool, count).into_vec()
}

/// Plants one support set per group: a shared core of `round((1 - f) * s)`
/// indices plus per-group private remainders drawn disjointly across
/// groups. Every support has exactly `s = round(sparsity * dim)` indices.
pub fn plant_supports(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let s = cfg.support_size();
    let core_size = ((1.0 - cfg.overlap) * s as f64).round() as usize;
    let private_size = s - core_size;
    let needed = core_size + cfg.groups * private_size;
    if needed > cfg.dim {
        return Err(Error::InfeasibleSupports(format!(
            "need {needed} distinct indices (core {core_size} + {} groups x {private_size}) \
             but the dimension is only {}",
            cfg.groups, cfg.dim
        )));
    }

    // One draw of `needed` distinct dimensions: the first `core_size` form
    // the shared core, the rest split into per-group private blocks.
    let chosen = sample_distinct(rng, cfg.dim, needed);
    let core = &chosen[..core_size];
    let mut supports = Vec::with_capacity(cfg.groups);
    for g in 0..cfg.groups {
        let start = core_size + g * private_size;
        let mut support: Vec<usize> = core
            .iter()
            .chain(&chosen[start..start + private_size])
            .copied()
            .collect();
        support.sort_unstable();
        supports.push(support);
    }
    Ok(supports)
}

/// Generates signals, sensing operators and noisy measurements.
///
/// Tasks are laid out group-by-group: task `t` belongs to group
/// `t / (num_tasks / groups)`. Within a group every signal has the same
/// support but fresh values; every task gets its own undersampling mask.
pub fn generate(cfg: &SimConfig) -> Result<SimData> {
    cfg.validate()?;
    let mut support_rng = stream(cfg.seed, Domain::SimSupports, 0, 0);
    let supports = plant_supports(cfg, &mut support_rng)?;

    let per_group = cfg.num_tasks / cfg.groups;
    let rows = cfg.fourier_rows();
    let mut true_signals = Vec::with_capacity(cfg.num_tasks);
    let mut tasks = Vec::with_capacity(cfg.num_tasks);
    let mut group_labels = Vec::with_capacity(cfg.num_tasks);

    for t in 0..cfg.num_tasks {
        let group = t / per_group;
        group_labels.push(group);

        let mut value_rng = stream(cfg.seed, Domain::SimValues, t as u64, 0);
        let mut signal = vec![0.0; cfg.dim];
        for &d in &supports[group] {
            signal[d] = value_rng.sample(StandardNormal);
        }

        let mut mask_rng = stream(cfg.seed, Domain::SimMask, t as u64, 0);
        let mut mask = sample_distinct(&mut mask_rng, cfg.dim, rows);
        mask.sort_unstable();
        let operator = SensingOperator::partial_fourier(cfg.dim, mask)?;

        let mut measurements = operator.apply(&signal)?;
        if cfg.sigma > 0.0 {
            let mut noise_rng = stream(cfg.seed, Domain::SimNoise, t as u64, 0);
            for y in &mut measurements {
                *y += cfg.sigma * noise_rng.sample::<f64, _>(StandardNormal);
            }
        }

        true_signals.push(signal);
        tasks.push(Task {
            operator,
            measurements,
        });
    }

    Ok(SimData {
        true_signals,
        tasks,
        group_labels,
    })
}

/// `|truth - recon| / |truth|` over the concatenation of all tasks.
pub fn normalized_error(truth: &[Vec<f64>], recon: &[Vec<f64>]) -> Result<f64> {
    if truth.len() != recon.len() {
        return Err(Error::DimensionMismatch {
            context: "normalized error task count",
            expected: truth.len(),
            got: recon.len(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (z, m) in truth.iter().zip(recon) {
        if z.len() != m.len() {
            return Err(Error::DimensionMismatch {
                context: "normalized error signal length",
                expected: z.len(),
                got: m.len(),
            });
        }
        for (a, b) in z.iter().zip(m) {
            num += (a - b) * (a - b);
            den += a * a;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroTruthNorm);
    }
    Ok((num / den).sqrt())
}
