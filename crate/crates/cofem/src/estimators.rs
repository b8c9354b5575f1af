//! Monte Carlo estimators over the implicit posterior covariance.
//!
//! Solving `A x = p` for Rademacher probes `p` gives everything the E-step
//! needs without forming `Sigma = A^{-1}`: averaging `p .* x` estimates the
//! diagonal of `Sigma`, and the Lanczos tridiagonal matrix assembled from
//! each CG transcript yields a quadrature estimate of `p' log(A) p`, hence
//! of `log det Sigma` via the Hutchinson trace estimator.

use crate::error::{Error, Result};
use crate::krylov::{assemble_tridiagonal, CgTranscript, TridiagonalSpectrum};
use crate::rng::{stream, Domain};
use rand::RngExt;

/// A batch of Rademacher probe vectors.
#[derive(Clone, Debug)]
pub struct ProbeSet {
    probes: Vec<Vec<f64>>,
    seed: u64,
}

impl ProbeSet {
    /// Draws `count` probes of length `dim`, each entry +1 or -1 with equal
    /// probability. Probe `k` comes from its own counter-derived stream, so
    /// the set is reproducible and can be regenerated entry-wise in any
    /// order.
    pub fn sample(dim: usize, count: usize, seed: u64) -> Result<Self> {
        if dim == 0 || count == 0 {
            return Err(Error::InvalidConfig(
                "probe sets need dim >= 1 and count >= 1".into(),
            ));
        }
        let probes = (0..count)
            .map(|k| {
                let mut rng = stream(seed, Domain::Probes, k as u64, 0);
                (0..dim)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect()
            })
            .collect();
        Ok(Self { probes, seed })
    }

    pub fn probes(&self) -> &[Vec<f64>] {
        &self.probes
    }

    pub fn count(&self) -> usize {
        self.probes.len()
    }

    pub fn dim(&self) -> usize {
        self.probes[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Estimated diagonal of the posterior covariance. Entries are sample means
/// and may dip below zero for small probe counts; consumers clamp before
/// dividing.
#[derive(Clone, Debug)]
pub struct DiagonalEstimate {
    pub values: Vec<f64>,
}

/// Estimated `log det Sigma`.
#[derive(Clone, Copy, Debug)]
pub struct LogDetEstimate {
    pub log_det: f64,
}

/// Diagonal estimation rule: averages `p^(k) .* x^(k)` over probes, where
/// `x^(k)` solves `A x = p^(k)`.
pub fn estimate_diagonal(probes: &ProbeSet, solutions: &[Vec<f64>]) -> Result<DiagonalEstimate> {
    if solutions.len() != probes.count() {
        return Err(Error::DimensionMismatch {
            context: "diagonal estimator solutions",
            expected: probes.count(),
            got: solutions.len(),
        });
    }
    let dim = probes.dim();
    for x in solutions {
        if x.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "diagonal estimator solution length",
                expected: dim,
                got: x.len(),
            });
        }
    }
    let inv_count = 1.0 / probes.count() as f64;
    let mut values = vec![0.0; dim];
    for (p, x) in probes.probes().iter().zip(solutions) {
        for d in 0..dim {
            values[d] += p[d] * x[d];
        }
    }
    for v in &mut values {
        *v *= inv_count;
    }
    Ok(DiagonalEstimate { values })
}

/// Lanczos quadrature for one probe: `D * sum_u (S_u1)^2 * log(lambda_u)`,
/// an estimate of `p' log(A) p` from the truncated tridiagonal spectrum.
pub fn quadrature_logdet_term(spectrum: &TridiagonalSpectrum, dim: usize) -> Result<f64> {
    let mut acc = 0.0;
    for (&value, &first) in spectrum
        .eigenvalues
        .iter()
        .zip(&spectrum.first_components)
    {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveRitzValue { value });
        }
        acc += first * first * value.ln();
    }
    Ok(dim as f64 * acc)
}

/// Hutchinson average of the per-probe quadrature terms; estimates
/// `log det Sigma = -tr(log A)`.
pub fn estimate_logdet(terms: &[f64]) -> Result<LogDetEstimate> {
    if terms.is_empty() {
        return Err(Error::InvalidConfig(
            "log-det estimation needs at least one probe term".into(),
        ));
    }
    let log_det = -terms.iter().sum::<f64>() / terms.len() as f64;
    Ok(LogDetEstimate { log_det })
}

/// Quadrature pipeline for one solved probe system: assemble the Lanczos
/// tridiagonal matrix, eigendecompose it, and evaluate the log quadrature.
pub fn logdet_term_from_transcript(transcript: &CgTranscript, dim: usize) -> Result<f64> {
    let tri = assemble_tridiagonal(transcript)?;
    let spectrum = crate::krylov::tridiag_eigen(&tri)?;
    quadrature_logdet_term(&spectrum, dim)
}
