//! Implicit linear operators for compressive sensing tasks.
//!
//! A [`SensingOperator`] is the forward map of one CS task. It is either an
//! explicit dense matrix or a partial Fourier operator, which selects N rows
//! of the unitary DFT and stacks their real and imaginary parts so the whole
//! solver stays in real arithmetic. The [`NormalOperator`] is the posterior
//! precision `beta * Phi' * Phi + diag(alpha)`; it is only ever applied to
//! vectors, so no D-by-D matrix is materialized on the covariance-free path.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

use crate::error::{Error, Result};

thread_local! {
    // Reused FFT work buffers. Applications run inside tight CG loops, so
    // per-call allocation would dominate at large dimensions.
    static REAL_BUF: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
    static SPECTRUM: RefCell<Vec<Complex<f64>>> = const { RefCell::new(Vec::new()) };
    static FFT_SCRATCH: RefCell<Vec<Complex<f64>>> = const { RefCell::new(Vec::new()) };
    static PROJECTED: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
    static BACK: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// A square linear map applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    /// Writes `A * input` into `output`. Both slices must have length `dim()`.
    fn apply_into(&self, input: &[f64], output: &mut [f64]);

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.apply_into(input, &mut out);
        out
    }
}

#[derive(Clone)]
enum Kind {
    Dense {
        rows: usize,
        /// Row-major `rows x signal_dim`.
        data: Vec<f64>,
    },
    PartialFourier {
        /// Strictly increasing DFT row indices in `[0, signal_dim)`.
        mask: Vec<usize>,
        forward: Arc<dyn RealToComplex<f64>>,
        inverse: Arc<dyn ComplexToReal<f64>>,
    },
}

/// The forward map `Phi` of one compressive sensing task.
#[derive(Clone)]
pub struct SensingOperator {
    signal_dim: usize,
    kind: Kind,
}

impl fmt::Debug for SensingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::Dense { rows, .. } => f
                .debug_struct("Dense")
                .field("rows", rows)
                .field("cols", &self.signal_dim)
                .finish(),
            Kind::PartialFourier { mask, .. } => f
                .debug_struct("PartialFourier")
                .field("dim", &self.signal_dim)
                .field("rows", &mask.len())
                .finish(),
        }
    }
}

impl SensingOperator {
    /// Wraps an explicit `rows x cols` matrix given in row-major order.
    pub fn dense(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidOperator(
                "dense operator must have at least one row and column".into(),
            ));
        }
        if rows > cols {
            return Err(Error::InvalidOperator(format!(
                "measurement count {rows} exceeds signal dimension {cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidOperator(format!(
                "dense operator needs {} entries for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidOperator(
                "dense operator entries must be finite".into(),
            ));
        }
        Ok(Self {
            signal_dim: cols,
            kind: Kind::Dense { rows, data },
        })
    }

    /// Selects `mask` rows of the unitary DFT of size `dim`.
    ///
    /// The realized operator maps R^D to R^(2N): the real parts of the
    /// selected coefficients followed by their imaginary parts. With the
    /// unitary 1/sqrt(D) scaling the operator norm is independent of `dim`.
    pub fn partial_fourier(dim: usize, mask: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidOperator(
                "partial Fourier operator needs a positive dimension".into(),
            ));
        }
        if mask.is_empty() || mask.len() > dim {
            return Err(Error::InvalidOperator(format!(
                "mask must select between 1 and {dim} rows, got {}",
                mask.len()
            )));
        }
        if mask.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidOperator(
                "mask indices must be strictly increasing".into(),
            ));
        }
        if *mask.last().unwrap() >= dim {
            return Err(Error::InvalidOperator(format!(
                "mask index {} is out of range for dimension {dim}",
                mask.last().unwrap()
            )));
        }
        let mut planner = RealFftPlanner::new();
        let forward = planner.plan_fft_forward(dim);
        let inverse = planner.plan_fft_inverse(dim);
        Ok(Self {
            signal_dim: dim,
            kind: Kind::PartialFourier {
                mask,
                forward,
                inverse,
            },
        })
    }

    /// Signal dimension D (the number of columns).
    pub fn signal_dim(&self) -> usize {
        self.signal_dim
    }

    /// Number of selected rows N (before the real embedding).
    pub fn rows(&self) -> usize {
        match &self.kind {
            Kind::Dense { rows, .. } => *rows,
            Kind::PartialFourier { mask, .. } => mask.len(),
        }
    }

    /// Length of `apply`'s output: N for dense, 2N for partial Fourier.
    pub fn measurement_dim(&self) -> usize {
        match &self.kind {
            Kind::Dense { rows, .. } => *rows,
            Kind::PartialFourier { mask, .. } => 2 * mask.len(),
        }
    }

    /// The DFT row mask, if this is a partial Fourier operator.
    pub fn mask(&self) -> Option<&[usize]> {
        match &self.kind {
            Kind::Dense { .. } => None,
            Kind::PartialFourier { mask, .. } => Some(mask),
        }
    }

    /// The row-major matrix entries, if this is a dense operator.
    pub fn dense_data(&self) -> Option<&[f64]> {
        match &self.kind {
            Kind::Dense { data, .. } => Some(data),
            Kind::PartialFourier { .. } => None,
        }
    }

    /// Computes `Phi * v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.signal_dim {
            return Err(Error::DimensionMismatch {
                context: "sensing apply",
                expected: self.signal_dim,
                got: v.len(),
            });
        }
        Ok(self.apply_raw(v))
    }

    /// Computes `Phi' * w`, the exact transpose of [`apply`](Self::apply).
    pub fn adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.measurement_dim() {
            return Err(Error::DimensionMismatch {
                context: "sensing adjoint",
                expected: self.measurement_dim(),
                got: w.len(),
            });
        }
        Ok(self.adjoint_raw(w))
    }

    pub(crate) fn apply_raw(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.measurement_dim()];
        self.apply_into_raw(v, &mut out);
        out
    }

    pub(crate) fn adjoint_raw(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.signal_dim];
        self.adjoint_into_raw(w, &mut out);
        out
    }

    pub(crate) fn apply_into_raw(&self, v: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::Dense { rows: _, data } => {
                let cols = self.signal_dim;
                for (r, out_r) in out.iter_mut().enumerate() {
                    let row = &data[r * cols..(r + 1) * cols];
                    *out_r = row.iter().zip(v).map(|(a, b)| a * b).sum();
                }
            }
            Kind::PartialFourier { mask, forward, .. } => {
                let d = self.signal_dim;
                let scale = 1.0 / (d as f64).sqrt();
                let n = mask.len();
                let spec_len = d / 2 + 1;
                REAL_BUF.with_borrow_mut(|input| {
                    SPECTRUM.with_borrow_mut(|spec| {
                        FFT_SCRATCH.with_borrow_mut(|scratch| {
                            input.clear();
                            input.extend_from_slice(v);
                            spec.resize(spec_len, Complex::new(0.0, 0.0));
                            scratch.resize(
                                forward.get_scratch_len(),
                                Complex::new(0.0, 0.0),
                            );
                            forward
                                .process_with_scratch(input, spec, scratch)
                                .expect("real FFT on validated buffer lengths");
                            // The input is real, so rows past d/2 are the
                            // conjugates of their mirrored counterparts.
                            for (j, &row) in mask.iter().enumerate() {
                                let c = if row < spec_len {
                                    spec[row]
                                } else {
                                    spec[d - row].conj()
                                };
                                out[j] = c.re * scale;
                                out[n + j] = c.im * scale;
                            }
                        })
                    })
                });
            }
        }
    }

    pub(crate) fn adjoint_into_raw(&self, w: &[f64], out: &mut [f64]) {
        match &self.kind {
            Kind::Dense { rows, data } => {
                let cols = self.signal_dim;
                out.fill(0.0);
                for r in 0..*rows {
                    let row = &data[r * cols..(r + 1) * cols];
                    let wr = w[r];
                    for (o, a) in out.iter_mut().zip(row) {
                        *o += a * wr;
                    }
                }
            }
            Kind::PartialFourier { mask, inverse, .. } => {
                let d = self.signal_dim;
                let scale = 1.0 / (d as f64).sqrt();
                let n = mask.len();
                let spec_len = d / 2 + 1;
                SPECTRUM.with_borrow_mut(|spec| {
                    FFT_SCRATCH.with_borrow_mut(|scratch| {
                        spec.clear();
                        spec.resize(spec_len, Complex::new(0.0, 0.0));
                        // Fold the mask coefficients into a Hermitian
                        // half-spectrum: row m carries u/2 and its mirror
                        // carries conj(u)/2, so the inverse real FFT yields
                        // exactly the real part of the full-spectrum adjoint.
                        for (j, &row) in mask.iter().enumerate() {
                            let u = Complex::new(w[j], w[n + j]) * 0.5;
                            if row < spec_len {
                                spec[row] += u;
                            }
                            let mirror = (d - row) % d;
                            if mirror < spec_len {
                                spec[mirror] += u.conj();
                            }
                        }
                        scratch.resize(inverse.get_scratch_len(), Complex::new(0.0, 0.0));
                        REAL_BUF.with_borrow_mut(|real_out| {
                            real_out.resize(d, 0.0);
                            inverse
                                .process_with_scratch(spec, real_out, scratch)
                                .expect("inverse real FFT on validated buffer lengths");
                            for (o, r) in out.iter_mut().zip(real_out.iter()) {
                                *o = r * scale;
                            }
                        })
                    })
                });
            }
        }
    }

    /// Materializes the operator as a row-major `measurement_dim x signal_dim`
    /// matrix. Used by the dense EM baseline; the covariance-free path never
    /// calls this.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Dense { data, .. } => data.clone(),
            Kind::PartialFourier { .. } => {
                let d = self.signal_dim;
                let m = self.measurement_dim();
                let mut out = vec![0.0; m * d];
                let mut basis = vec![0.0; d];
                for col in 0..d {
                    basis[col] = 1.0;
                    let column = self.apply_raw(&basis);
                    basis[col] = 0.0;
                    for (r, val) in column.iter().enumerate() {
                        out[r * d + col] = *val;
                    }
                }
                out
            }
        }
    }
}

/// The posterior precision `A = beta * Phi' * Phi + diag(alpha)`.
///
/// Symmetric positive definite whenever `beta > 0` and every `alpha` entry is
/// positive, which the constructor enforces. Application never forms a
/// D-by-D matrix.
pub struct NormalOperator<'a> {
    beta: f64,
    phi: &'a SensingOperator,
    alpha: &'a [f64],
}

impl<'a> NormalOperator<'a> {
    pub fn new(beta: f64, phi: &'a SensingOperator, alpha: &'a [f64]) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidOperator(format!(
                "noise precision must be positive and finite, got {beta}"
            )));
        }
        if alpha.len() != phi.signal_dim() {
            return Err(Error::DimensionMismatch {
                context: "normal operator alpha",
                expected: phi.signal_dim(),
                got: alpha.len(),
            });
        }
        for (index, &value) in alpha.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::NonPositiveAlpha { index, value });
            }
        }
        Ok(Self { beta, phi, alpha })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl LinearOperator for NormalOperator<'_> {
    fn dim(&self) -> usize {
        self.phi.signal_dim()
    }

    fn apply_into(&self, input: &[f64], output: &mut [f64]) {
        assert_eq!(input.len(), self.dim(), "normal operator input length");
        assert_eq!(output.len(), self.dim(), "normal operator output length");
        PROJECTED.with_borrow_mut(|projected| {
            BACK.with_borrow_mut(|back| {
                projected.resize(self.phi.measurement_dim(), 0.0);
                back.resize(self.dim(), 0.0);
                self.phi.apply_into_raw(input, projected);
                self.phi.adjoint_into_raw(projected, back);
                for i in 0..input.len() {
                    output[i] = self.beta * back[i] + self.alpha[i] * input[i];
                }
            })
        });
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Reference partial-Fourier forward map via an O(D^2) textbook DFT.
    fn dft_oracle(dim: usize, mask: &[usize], v: &[f64]) -> Vec<f64> {
        let scale = 1.0 / (dim as f64).sqrt();
        let n = mask.len();
        let mut out = vec![0.0; 2 * n];
        for (j, &row) in mask.iter().enumerate() {
            let mut re = 0.0;
            let mut im = 0.0;
            for (d, &x) in v.iter().enumerate() {
                let angle = -2.0 * std::f64::consts::PI * (row * d) as f64 / dim as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            out[j] = re * scale;
            out[n + j] = im * scale;
        }
        out
    }

    #[test]
    fn dense_identity_apply_and_adjoint() {
        let eye = SensingOperator::dense(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap();
        assert_eq!(eye.apply(&[1., 2., 3.]).unwrap(), vec![1., 2., 3.]);
        assert_eq!(eye.adjoint(&[1., 2., 3.]).unwrap(), vec![1., 2., 3.]);
    }

    #[test]
    fn dense_rectangular_matches_hand_multiply() {
        let phi = SensingOperator::dense(2, 3, vec![1., 0., 2., 0., 1., 0.]).unwrap();
        assert_eq!(phi.apply(&[1., 1., 1.]).unwrap(), vec![3., 1.]);
    }

    #[test]
    fn dc_row_of_constant_signal() {
        let phi = SensingOperator::partial_fourier(4, vec![0]).unwrap();
        let out = phi.apply(&[1., 1., 1., 1.]).unwrap();
        // Unitary scaling: the DC coefficient of the all-ones vector is
        // 4 / sqrt(4) = 2, with zero imaginary part.
        assert!((out[0] - 2.0).abs() < 1e-12);
        assert!(out[1].abs() < 1e-12);
    }

    #[test]
    fn partial_fourier_matches_dense_dft_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 8;
        let mask = vec![0, 1];
        let phi = SensingOperator::partial_fourier(dim, mask.clone()).unwrap();
        for _ in 0..20 {
            let v = randn(&mut rng, dim);
            let got = phi.apply(&v).unwrap();
            let want = dft_oracle(dim, &mask, &v);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10, "got {g}, want {w}");
            }
            // Phi' Phi v against the same oracle applied twice.
            let round = phi.adjoint(&got).unwrap();
            let mut want_round = vec![0.0; dim];
            for (d, wr) in want_round.iter_mut().enumerate() {
                let mut basis = vec![0.0; dim];
                basis[d] = 1.0;
                *wr = dot(&dft_oracle(dim, &mask, &basis), &want);
            }
            for (g, w) in round.iter().zip(&want_round) {
                assert!((g - w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn adjoint_identity_holds_for_both_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dense = {
            let data = randn(&mut rng, 4 * 8);
            SensingOperator::dense(4, 8, data).unwrap()
        };
        let fourier = SensingOperator::partial_fourier(16, vec![0, 3, 7, 8, 15]).unwrap();
        for op in [&dense, &fourier] {
            for _ in 0..100 {
                let v = randn(&mut rng, op.signal_dim());
                let w = randn(&mut rng, op.measurement_dim());
                let lhs = dot(&w, &op.apply(&v).unwrap());
                let rhs = dot(&op.adjoint(&w).unwrap(), &v);
                let denom = lhs.abs().max(rhs.abs()).max(1e-30);
                assert!(
                    ((lhs - rhs) / denom).abs() < 1e-10,
                    "adjoint identity broken: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn to_dense_reproduces_apply() {
        let phi = SensingOperator::partial_fourier(8, vec![1, 4]).unwrap();
        let mat = phi.to_dense();
        let m = phi.measurement_dim();
        let d = phi.signal_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = randn(&mut rng, d);
        let fast = phi.apply(&v).unwrap();
        for r in 0..m {
            let slow = dot(&mat[r * d..(r + 1) * d], &v);
            assert!((slow - fast[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn normal_apply_diagonal_only() {
        // A zero sensing matrix reduces A to diag(alpha).
        let phi = SensingOperator::dense(1, 2, vec![0., 0.]).unwrap();
        let alpha = [2.0, 2.0];
        let a = NormalOperator::new(1.0, &phi, &alpha).unwrap();
        assert_eq!(a.apply(&[1., 3.]), vec![2., 6.]);
    }

    #[test]
    fn normal_apply_identity_sensing() {
        let phi = SensingOperator::dense(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let alpha = [1.0, 1.0];
        let a = NormalOperator::new(1.0, &phi, &alpha).unwrap();
        assert_eq!(a.apply(&[5., 7.]), vec![10., 14.]);
    }

    #[test]
    fn normal_apply_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, d) = (6, 12);
        let data = randn(&mut rng, n * d);
        let phi = SensingOperator::dense(n, d, data.clone()).unwrap();
        let alpha: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.1).collect();
        let beta = 4.0;
        let a = NormalOperator::new(beta, &phi, &alpha).unwrap();

        // Densify beta * Phi' Phi + diag(alpha) by hand.
        let mut dense = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for r in 0..n {
                    acc += data[r * d + i] * data[r * d + j];
                }
                dense[i * d + j] = beta * acc;
            }
            dense[i * d + i] += alpha[i];
        }

        let v = randn(&mut rng, d);
        let fast = a.apply(&v);
        for i in 0..d {
            let slow = dot(&dense[i * d..(i + 1) * d], &v);
            let denom = slow.abs().max(1e-12);
            assert!(((fast[i] - slow) / denom).abs() < 1e-10);
        }
    }

    #[test]
    fn normal_operator_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let phi = SensingOperator::partial_fourier(32, (0..8).map(|i| i * 3).collect()).unwrap();
        let alpha: Vec<f64> = (0..32).map(|_| rng.random::<f64>() + 0.05).collect();
        let a = NormalOperator::new(2.5, &phi, &alpha).unwrap();
        for _ in 0..100 {
            let v = randn(&mut rng, 32);
            let w = randn(&mut rng, 32);
            let lhs = dot(&w, &a.apply(&v));
            let rhs = dot(&a.apply(&w), &v);
            assert!(((lhs - rhs) / lhs.abs().max(1e-30)).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_and_parameter_errors() {
        let phi = SensingOperator::dense(2, 3, vec![0.; 6]).unwrap();
        assert!(matches!(
            phi.apply(&[1., 2.]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            phi.adjoint(&[1., 2., 3.]),
            Err(Error::DimensionMismatch { .. })
        ));
        let alpha_bad = [1.0, -1.0, 1.0];
        assert!(matches!(
            NormalOperator::new(1.0, &phi, &alpha_bad),
            Err(Error::NonPositiveAlpha { index: 1, .. })
        ));
        let alpha_short = [1.0];
        assert!(NormalOperator::new(1.0, &phi, &alpha_short).is_err());
        assert!(SensingOperator::dense(3, 2, vec![0.; 6]).is_err());
        assert!(SensingOperator::partial_fourier(8, vec![3, 3]).is_err());
        assert!(SensingOperator::partial_fourier(8, vec![9]).is_err());
    }

    #[test]
    fn fourier_apply_scales_quasilinearly() {
        // Cost model check: going from D = 2^12 to D = 2^16 (16x) must cost
        // no more than 32x, which allows the log factor plus timer noise.
        let time_apply = |dim: usize| {
            let mask: Vec<usize> = (0..dim / 4).collect();
            let op = SensingOperator::partial_fourier(dim, mask).unwrap();
            let v = vec![1.0; dim];
            let mut out = vec![0.0; op.measurement_dim()];
            // Warm up plans and caches.
            op.apply_into_raw(&v, &mut out);
            let reps = 8;
            let mut best = f64::INFINITY;
            for _ in 0..10 {
                let start = std::time::Instant::now();
                for _ in 0..reps {
                    op.apply_into_raw(std::hint::black_box(&v), std::hint::black_box(&mut out));
                }
                best = best.min(start.elapsed().as_secs_f64() / reps as f64);
            }
            best
        };
        let small = time_apply(1 << 12);
        let large = time_apply(1 << 16);
        let ratio = large / small;
        assert!(
            ratio <= 32.0,
            "apply at 2^16 took {ratio:.1}x the time of 2^12"
        );
    }
}
