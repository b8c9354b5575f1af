//! Conjugate gradient with a Lanczos transcript, plus the symmetric
//! tridiagonal eigensolver that turns transcripts into quadrature nodes.
//!
//! Running CG from a zero initial iterate implicitly tridiagonalizes the
//! operator in the Krylov basis of normalized residuals. The step sizes
//! `gamma` and residual ratios `xi` recorded here are exactly the
//! coefficients needed to assemble that tridiagonal matrix, whose
//! eigendecomposition drives the log-determinant quadrature.

use crate::error::{Error, Result};
use crate::operators::LinearOperator;

/// Solver limits. `rel_tol = 0` disables early stopping, so the solver runs
/// exactly `max_steps` steps (the fixed-step mode used by the experiments).
#[derive(Clone, Copy, Debug)]
pub struct CgConfig {
    pub max_steps: usize,
    pub rel_tol: f64,
}

impl CgConfig {
    pub fn fixed_steps(max_steps: usize) -> Self {
        Self {
            max_steps,
            rel_tol: 0.0,
        }
    }

    pub fn with_tolerance(max_steps: usize, rel_tol: f64) -> Self {
        Self { max_steps, rel_tol }
    }
}

/// A CG solution together with the Lanczos byproducts of the iteration.
#[derive(Clone, Debug)]
pub struct CgTranscript {
    pub solution: Vec<f64>,
    /// Step sizes, one per executed step.
    pub gammas: Vec<f64>,
    /// Residual-norm ratios, one per executed step; the last entry is
    /// recorded even though no further search direction consumes it.
    pub xis: Vec<f64>,
    pub steps_taken: usize,
    pub final_rel_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from the
/// zero iterate (required so the first Krylov basis vector is `b / |b|`).
pub fn conjugate_gradient<A>(a: &A, b: &[f64], cfg: &CgConfig) -> Result<CgTranscript>
where
    A: LinearOperator + ?Sized,
{
    if cfg.max_steps == 0 {
        return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
    }
    if b.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            context: "conjugate gradient rhs",
            expected: a.dim(),
            got: b.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "right-hand side must be finite".into(),
        ));
    }

    let dim = b.len();
    let mut x = vec![0.0; dim];
    let mut residual = b.to_vec();
    let mut direction = residual.clone();
    let mut a_dir = vec![0.0; dim];

    let mut rho = dot(&residual, &residual);
    let b_norm = rho.sqrt();
    if rho == 0.0 {
        return Ok(CgTranscript {
            solution: x,
            gammas: Vec::new(),
            xis: Vec::new(),
            steps_taken: 0,
            final_rel_residual: 0.0,
        });
    }

    let mut gammas = Vec::with_capacity(cfg.max_steps);
    let mut xis = Vec::with_capacity(cfg.max_steps);
    let mut rel = 1.0;

    for step in 1..=cfg.max_steps {
        a.apply_into(&direction, &mut a_dir);
        let curvature = dot(&direction, &a_dir);
        if curvature <= 0.0 || !curvature.is_finite() {
            return Err(Error::CgBreakdown { step, curvature });
        }
        let gamma = rho / curvature;
        for i in 0..dim {
            x[i] += gamma * direction[i];
            residual[i] -= gamma * a_dir[i];
        }
        let rho_next = dot(&residual, &residual);
        let xi = rho_next / rho;
        gammas.push(gamma);
        xis.push(xi);
        rho = rho_next;
        rel = rho.sqrt() / b_norm;

        // An exactly zero residual leaves no Krylov direction to continue
        // with; stop regardless of the configured tolerance.
        if rho == 0.0 || (cfg.rel_tol > 0.0 && rel <= cfg.rel_tol) {
            break;
        }
        for i in 0..dim {
            direction[i] = residual[i] + xi * direction[i];
        }
    }

    let steps_taken = gammas.len();
    Ok(CgTranscript {
        solution: x,
        gammas,
        xis,
        steps_taken,
        final_rel_residual: rel,
    })
}

/// A symmetric tridiagonal matrix stored by its diagonals.
#[derive(Clone, Debug)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    /// Entries `(u, u-1)`; one fewer than `diag`.
    pub offdiag: Vec<f64>,
}

/// Assembles the Lanczos tridiagonal matrix of a CG run from its recorded
/// step sizes: diagonal `1/gamma_u + xi_{u-1}/gamma_{u-1}` (first entry
/// `1/gamma_1`), off-diagonal `sqrt(xi_{u-1})/gamma_{u-1}`.
pub fn assemble_tridiagonal(transcript: &CgTranscript) -> Result<SymTridiagonal> {
    let steps = transcript.steps_taken;
    if steps == 0 {
        return Err(Error::EmptyTranscript);
    }
    for (index, &value) in transcript.gammas.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::NonPositiveGamma { index, value });
        }
    }
    for (index, &value) in transcript.xis.iter().enumerate() {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::NegativeXi { index, value });
        }
    }

    let gammas = &transcript.gammas;
    let xis = &transcript.xis;
    let mut diag = vec![0.0; steps];
    let mut offdiag = vec![0.0; steps.saturating_sub(1)];
    diag[0] = 1.0 / gammas[0];
    for u in 1..steps {
        diag[u] = 1.0 / gammas[u] + xis[u - 1] / gammas[u - 1];
        offdiag[u - 1] = xis[u - 1].sqrt() / gammas[u - 1];
    }
    Ok(SymTridiagonal { diag, offdiag })
}

/// Eigenvalues (ascending) and first eigenvector components of a symmetric
/// tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct TridiagonalSpectrum {
    pub eigenvalues: Vec<f64>,
    /// First component of the eigenvector belonging to each eigenvalue.
    pub first_components: Vec<f64>,
}

/// Implicit-shift QL iteration with eigenvector accumulation, after
/// EISPACK's tql2. Cubic in the matrix size, which is capped by the CG step
/// count and therefore small.
pub fn tridiag_eigen(tri: &SymTridiagonal) -> Result<TridiagonalSpectrum> {
    let n = tri.diag.len();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "cannot eigendecompose an empty matrix".into(),
        ));
    }
    if tri.offdiag.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            context: "tridiagonal off-diagonal",
            expected: n - 1,
            got: tri.offdiag.len(),
        });
    }
    if tri.diag.iter().chain(tri.offdiag.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "tridiagonal entries must be finite".into(),
        ));
    }

    let mut d = tri.diag.clone();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&tri.offdiag);

    // Column j of `v` accumulates the eigenvector for d[j].
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut shift = 0.0;
    let mut tst1: f64 = 0.0;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 50 {
                    return Err(Error::EigenNoConvergence { index: l });
                }

                // Implicit shift from the leading 2x2 block.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                shift += h;

                // One QL sweep with Givens rotations.
                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[k * n + i + 1];
                        v[k * n + i + 1] = s * v[k * n + i] + c * h;
                        v[k * n + i] = c * v[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift;
        e[l] = 0.0;
    }

    // Sort ascending, carrying the first eigenvector component along.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&j| d[j]).collect();
    let first_components: Vec<f64> = order.iter().map(|&j| v[j]).collect();
    Ok(TridiagonalSpectrum {
        eigenvalues,
        first_components,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::operators::{NormalOperator, SensingOperator};
    use nalgebra::{DMatrix, DVector};
    use rand::RngExt;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Explicit symmetric matrix used as a matrix-free operator in tests.
    pub(crate) struct DenseOp {
        pub n: usize,
        pub data: Vec<f64>,
    }

    impl LinearOperator for DenseOp {
        fn dim(&self) -> usize {
            self.n
        }
        fn apply_into(&self, input: &[f64], output: &mut [f64]) {
            for r in 0..self.n {
                output[r] = dot(&self.data[r * self.n..(r + 1) * self.n], input);
            }
        }
    }

    /// Well-conditioned random SPD test matrix `B B' / n + diag_boost * I`.
    pub(crate) fn random_spd(n: usize, diag_boost: f64, rng: &mut ChaCha8Rng) -> DenseOp {
        let b: Vec<f64> = (0..n * n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += b[i * n + k] * b[j * n + k];
                }
                data[i * n + j] = acc / n as f64;
            }
            data[i * n + i] += diag_boost;
        }
        DenseOp { n, data }
    }

    #[test]
    fn scaled_identity_converges_in_one_step() {
        let phi = SensingOperator::dense(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let alpha = [1.0, 1.0];
        let a = NormalOperator::new(1.0, &phi, &alpha).unwrap();
        let t = conjugate_gradient(&a, &[6., 8.], &CgConfig::fixed_steps(5)).unwrap();
        assert_eq!(t.steps_taken, 1);
        assert!((t.gammas[0] - 0.5).abs() < 1e-15);
        assert!((t.solution[0] - 3.0).abs() < 1e-12);
        assert!((t.solution[1] - 4.0).abs() < 1e-12);
        assert_eq!(t.final_rel_residual, 0.0);
    }

    #[test]
    fn diagonal_system_converges_in_two_steps() {
        let phi = SensingOperator::dense(1, 2, vec![0., 0.]).unwrap();
        let alpha = [1.0, 4.0];
        let a = NormalOperator::new(1.0, &phi, &alpha).unwrap();
        let t =
            conjugate_gradient(&a, &[1., 1.], &CgConfig::with_tolerance(10, 1e-14)).unwrap();
        assert!(t.steps_taken <= 2);
        assert!((t.solution[0] - 1.0).abs() < 1e-12);
        assert!((t.solution[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn matches_dense_solver_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 32;
        let a = random_spd(n, 0.5, &mut rng);
        let b: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let t = conjugate_gradient(&a, &b, &CgConfig::with_tolerance(n, 1e-10)).unwrap();

        let a_mat = DMatrix::from_row_slice(n, n, &a.data);
        let x_ref = a_mat.lu().solve(&DVector::from_column_slice(&b)).unwrap();
        let num: f64 = t
            .solution
            .iter()
            .zip(x_ref.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let den = x_ref.norm();
        assert!(num / den < 1e-8, "relative error {}", num / den);
    }

    #[test]
    fn residual_history_is_nonincreasing() {
        // xi_u = |r_{u+1}|^2 / |r_u|^2, so monotone residual norms mean
        // every xi is at most one.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..10 {
            let n = 24;
            let a = random_spd(n, 1.0, &mut rng);
            let b: Vec<f64> = (0..n)
                .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect();
            let t = conjugate_gradient(&a, &b, &CgConfig::fixed_steps(n)).unwrap();
            for (u, &xi) in t.xis.iter().enumerate() {
                assert!(
                    xi <= 1.0 + 1e-12,
                    "trial {trial}: residual grew at step {u} (xi = {xi})"
                );
            }
        }
    }

    #[test]
    fn first_residual_is_rhs_and_zero_rhs_short_circuits() {
        // With a zero initial iterate the first residual equals b, so the
        // first gamma is |b|^2 / b'Ab.
        let phi = SensingOperator::dense(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let alpha = [3.0, 1.0];
        let a = NormalOperator::new(1.0, &phi, &alpha).unwrap();
        let b = [2.0, 1.0];
        let t = conjugate_gradient(&a, &b, &CgConfig::fixed_steps(4)).unwrap();
        let expected = (4.0 + 1.0) / (4.0 * 4.0 + 2.0 * 1.0);
        assert!((t.gammas[0] - expected).abs() < 1e-15);

        let z = conjugate_gradient(&a, &[0., 0.], &CgConfig::fixed_steps(4)).unwrap();
        assert_eq!(z.steps_taken, 0);
        assert!(z.solution.iter().all(|&v| v == 0.0));
        assert!(matches!(
            assemble_tridiagonal(&z),
            Err(Error::EmptyTranscript)
        ));
    }

    #[test]
    fn breakdown_on_indefinite_operator() {
        let a = DenseOp {
            n: 2,
            data: vec![-1., 0., 0., -1.],
        };
        let err = conjugate_gradient(&a, &[1., 1.], &CgConfig::fixed_steps(3)).unwrap_err();
        assert!(matches!(err, Error::CgBreakdown { step: 1, .. }));
    }

    #[test]
    fn assemble_single_step() {
        let t = CgTranscript {
            solution: vec![0.0],
            gammas: vec![0.5],
            xis: vec![0.0],
            steps_taken: 1,
            final_rel_residual: 0.0,
        };
        let tri = assemble_tridiagonal(&t).unwrap();
        assert_eq!(tri.diag, vec![2.0]);
        assert!(tri.offdiag.is_empty());
    }

    #[test]
    fn assemble_two_steps_by_direct_substitution() {
        let t = CgTranscript {
            solution: vec![],
            gammas: vec![1.0, 1.0],
            xis: vec![0.25, 0.7],
            steps_taken: 2,
            final_rel_residual: 0.1,
        };
        let tri = assemble_tridiagonal(&t).unwrap();
        assert_eq!(tri.diag, vec![1.0, 1.25]);
        assert_eq!(tri.offdiag, vec![0.5]);
    }

    #[test]
    fn assemble_rejects_nonpositive_gamma() {
        let t = CgTranscript {
            solution: vec![],
            gammas: vec![1.0, -0.2],
            xis: vec![0.25, 0.1],
            steps_taken: 2,
            final_rel_residual: 0.1,
        };
        assert!(matches!(
            assemble_tridiagonal(&t),
            Err(Error::NonPositiveGamma { index: 1, .. })
        ));
    }

    #[test]
    fn full_run_tridiagonal_is_similar_to_operator() {
        // A full-length CG run tridiagonalizes A, so the assembled matrix
        // must have the same spectrum.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 16;
        let a = random_spd(n, 1.0, &mut rng);
        let b: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let t = conjugate_gradient(&a, &b, &CgConfig::fixed_steps(n)).unwrap();
        assert_eq!(t.steps_taken, n);
        let tri = assemble_tridiagonal(&t).unwrap();
        let spec = tridiag_eigen(&tri).unwrap();

        let a_mat = DMatrix::from_row_slice(n, n, &a.data);
        let mut a_eigs: Vec<f64> = a_mat.symmetric_eigen().eigenvalues.iter().copied().collect();
        a_eigs.sort_by(f64::total_cmp);
        for (got, want) in spec.eigenvalues.iter().zip(&a_eigs) {
            assert!(
                ((got - want) / want).abs() < 1e-6,
                "eigenvalue mismatch: {got} vs {want}"
            );
        }
    }

    #[test]
    fn truncated_spectra_bracket_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 64;
        let a = random_spd(n, 1.0, &mut rng);
        let b: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
        let t = conjugate_gradient(&a, &b, &CgConfig::fixed_steps(40)).unwrap();
        let mut last_max = f64::NEG_INFINITY;
        let mut last_min = f64::INFINITY;
        for steps in [5usize, 10, 20, 40] {
            let prefix = CgTranscript {
                solution: Vec::new(),
                gammas: t.gammas[..steps].to_vec(),
                xis: t.xis[..steps].to_vec(),
                steps_taken: steps,
                final_rel_residual: 0.0,
            };
            let spec = tridiag_eigen(&assemble_tridiagonal(&prefix).unwrap()).unwrap();
            let lo = spec.eigenvalues[0];
            let hi = *spec.eigenvalues.last().unwrap();
            assert!(hi >= last_max - 1e-10, "max Ritz value shrank: {hi} < {last_max}");
            assert!(lo <= last_min + 1e-10, "min Ritz value grew: {lo} > {last_min}");
            last_max = hi;
            last_min = lo;
        }
    }

    #[test]
    fn eigen_one_by_one() {
        let tri = SymTridiagonal {
            diag: vec![3.5],
            offdiag: vec![],
        };
        let spec = tridiag_eigen(&tri).unwrap();
        assert_eq!(spec.eigenvalues, vec![3.5]);
        assert!((spec.first_components[0].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_matches_dense_oracle() {
        let tri = SymTridiagonal {
            diag: vec![1.0, 1.25],
            offdiag: vec![0.5],
        };
        let spec = tridiag_eigen(&tri).unwrap();
        let dense = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.25]);
        let eig = dense.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(j, &val)| (val, f64::abs(eig.eigenvectors[(0, j)])))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (j, (val, first)) in pairs.iter().enumerate() {
            assert!((spec.eigenvalues[j] - val).abs() < 1e-10);
            assert!((spec.first_components[j].abs() - first).abs() < 1e-10);
        }
    }

    #[test]
    fn eigen_first_components_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 20;
        let tri = SymTridiagonal {
            diag: (0..n).map(|_| rng.random::<f64>() * 4.0 + 1.0).collect(),
            offdiag: (0..n - 1).map(|_| rng.random::<f64>() - 0.5).collect(),
        };
        let spec = tridiag_eigen(&tri).unwrap();
        let total: f64 = spec.first_components.iter().map(|c| c * c).sum();
        assert!((total - 1.0).abs() < 1e-8, "sum of squares {total}");
    }

    #[test]
    fn eigen_large_random_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 24;
        let tri = SymTridiagonal {
            diag: (0..n).map(|_| rng.random::<f64>() * 3.0).collect(),
            offdiag: (0..n - 1).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
        };
        let spec = tridiag_eigen(&tri).unwrap();
        let mut dense = DMatrix::zeros(n, n);
        for i in 0..n {
            dense[(i, i)] = tri.diag[i];
            if i + 1 < n {
                dense[(i, i + 1)] = tri.offdiag[i];
                dense[(i + 1, i)] = tri.offdiag[i];
            }
        }
        let mut want: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        for (got, want) in spec.eigenvalues.iter().zip(&want) {
            assert!((got - want).abs() < 1e-9 * (1.0 + want.abs()));
        }
    }
}
