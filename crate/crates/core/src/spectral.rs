//! Dense eigendecomposition, Fermi–Dirac matrix functions and Green's functions.
//!
//! The spectral decomposition is the reference route for every matrix function
//! in the crate. [`contour_fermi_diag`] evaluates the same diagonal through the
//! resolvent-difference integral
//!
//! ```text
//! F(H) = 1/(2πi) ∫ [ (H + t - iη)^{-1} - (H + t + iη)^{-1} ] w(t) dt
//! ```
//!
//! whose kernel is the Poisson kernel `D_η(H + t)`. The weight that reproduces
//! `F` is `w(t) = f(-t)` with `f = F(· + iη) + F(· - iη) - D_η * F`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HamiltonianMatrix;
use crate::special::digamma;

/// Ascending eigenvalues with orthonormal eigenvectors (as columns).
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
    /// FNV-1a hash of the source matrix entries.
    pub fingerprint: u64,
}

fn fingerprint(m: &DMatrix<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for x in m.iter() {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a: f64, x| a.max(x.abs()))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut r: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..i {
            r = r.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    r
}

/// Symmetric eigendecomposition of a real-symmetric matrix.
pub fn eig_matrix(h: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    if !h.is_square() {
        return Err(Error::invalid("matrix", "must be square"));
    }
    let res = asymmetry(h);
    if res > 1e-14 * (1.0 + max_abs(h)) {
        return Err(Error::NotHermitian { residual: res });
    }
    let n = h.nrows();
    let se = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| se.eigenvalues[k]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vecs.set_column(col, &se.eigenvectors.column(k));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors: vecs,
        fingerprint: fingerprint(h),
    })
}

pub fn eig(h: &HamiltonianMatrix) -> Result<SpectralDecomposition> {
    eig_matrix(&h.matrix)
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Σ_k φ(E_k) ψ_k ψ_kᵀ`
    pub fn apply_function(&self, phi: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let w = DVector::from_iterator(self.dim(), self.eigenvalues.iter().map(|&e| phi(e)));
        let scaled = &self.eigenvectors * DMatrix::from_diagonal(&w);
        scaled * self.eigenvectors.transpose()
    }

    /// max |H - Σ_k E_k ψ_k ψ_kᵀ|
    pub fn reconstruction_residual(&self, h: &DMatrix<f64>) -> f64 {
        max_abs(&(h - self.apply_function(|e| e)))
    }

    /// max |ΨᵀΨ - I|
    pub fn gram_residual(&self) -> f64 {
        let g = self.eigenvectors.transpose() * &self.eigenvectors;
        max_abs(&(g - DMatrix::identity(self.dim(), self.dim())))
    }

    /// Number of eigenvalues strictly below `e`.
    pub fn count_below(&self, e: f64) -> usize {
        self.eigenvalues.partition_point(|&x| x < e)
    }
}

/// `1 / (1 + e^{β(z-κ)})`, evaluated through `e^{-|x|}` so it never overflows.
pub fn fermi_dirac(z: f64, beta: f64, kappa: f64) -> f64 {
    let x = beta * (z - kappa);
    if x > 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `F'(z) = -β F(z)(1 - F(z))`.
pub fn fermi_dirac_derivative(z: f64, beta: f64, kappa: f64) -> f64 {
    let e = (-(beta * (z - kappa)).abs()).exp();
    -beta * e / ((1.0 + e) * (1.0 + e))
}

/// Fermi–Dirac function at complex argument.
pub fn fermi_dirac_complex(z: Complex64, beta: f64, kappa: f64) -> Complex64 {
    let x = (z - kappa) * beta;
    if x.re > 0.0 {
        let e = (-x).exp();
        e / (e + 1.0)
    } else {
        (x.exp() + 1.0).inv()
    }
}

/// Divided difference `(F(a) - F(b)) / (a - b)`, with `F'(a)` when `|a - b| < 1e-12`.
///
/// For `|β(a-b)| < 1` it uses `F(a) - F(b) = -expm1(β(a-b)) F(a)(1 - F(b))`,
/// which has no cancellation for close arguments.
pub fn fermi_divided_difference(a: f64, b: f64, beta: f64, kappa: f64) -> f64 {
    let d = a - b;
    if d.abs() < 1e-12 {
        return fermi_dirac_derivative(0.5 * (a + b), beta, kappa);
    }
    if (beta * d).abs() < 1.0 {
        let fa = fermi_dirac(a, beta, kappa);
        let one_minus_fb = fermi_dirac(-(b - kappa) + kappa, beta, kappa);
        -(beta * d).exp_m1() * fa * one_minus_fb / d
    } else {
        (fermi_dirac(a, beta, kappa) - fermi_dirac(b, beta, kappa)) / d
    }
}

/// Diagonal of `F(H)`: `Σ_k F(E_k) |ψ_k(n)|²`.
pub fn matrix_function_diag(spec: &SpectralDecomposition, beta: f64, kappa: f64) -> Vec<f64> {
    let occ: Vec<f64> = spec
        .eigenvalues
        .iter()
        .map(|&e| fermi_dirac(e, beta, kappa))
        .collect();
    let n = spec.dim();
    (0..n)
        .map(|site| {
            let row = spec.eigenvectors.row(site);
            row.iter().zip(&occ).map(|(p, f)| f * p * p).sum()
        })
        .collect()
}

/// Poisson kernel `D_η(u) = η / (π(η² + u²))`.
pub fn poisson_kernel(u: f64, eta: f64) -> f64 {
    eta / (PI * (eta * eta + u * u))
}

/// `(D_η * F)(u)`, the Poisson smoothing of the Fermi–Dirac function.
///
/// Summing the Matsubara expansion of `F` against the Poisson kernel shifts every
/// Matsubara frequency away from the axis by `η`, giving
/// `1/2 - Im ψ(1/2 + βη/(2π) + iβ(u-κ)/(2π)) / π`.
pub fn poisson_smoothed_fermi(u: f64, beta: f64, kappa: f64, eta: f64) -> f64 {
    let c = 0.5 + beta * eta / (2.0 * PI);
    let y = beta * (u - kappa) / (2.0 * PI);
    0.5 - digamma(Complex64::new(c, y)).im / PI
}

/// Weight `f(u) = F(u+iη) + F(u-iη) - (D_η * F)(u)` of the resolvent-difference representation.
pub fn contour_weight(u: f64, beta: f64, kappa: f64, eta: f64) -> f64 {
    let fp = fermi_dirac_complex(Complex64::new(u, eta), beta, kappa);
    2.0 * fp.re - poisson_smoothed_fermi(u, beta, kappa, eta)
}

/// Quadrature for the resolvent-difference integral over `t ∈ ℝ`.
///
/// Nodes are `t = center + half_width · tan θ` with a midpoint rule of step
/// `step` in `θ ∈ (-π/2, π/2)`, so the whole real line is covered and half of
/// the nodes fall in `[center - half_width, center + half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub center: f64,
    pub half_width: f64,
    pub step: f64,
    /// Margin required around the (negated) spectrum and around `-κ`.
    pub tail: f64,
}

impl QuadratureSpec {
    pub const DEFAULT_STEP: f64 = 2e-3;

    /// Window centred on `-spectrum` (Gershgorin bounds) with margin `tail = 4η + 20/β`.
    pub fn for_matrix(h: &DMatrix<f64>, beta: f64, kappa: f64, eta: f64) -> Self {
        let (lo, hi) = gershgorin(h);
        let tail = 4.0 * eta + 20.0 / beta;
        let lo_t = (-hi).min(-kappa) - tail;
        let hi_t = (-lo).max(-kappa) + tail;
        QuadratureSpec {
            center: 0.5 * (lo_t + hi_t),
            half_width: 0.5 * (hi_t - lo_t),
            step: Self::DEFAULT_STEP,
            tail,
        }
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let count = (PI / self.step).round().max(1.0) as usize;
        let h = PI / count as f64;
        (0..count).map(move |j| {
            let theta = -0.5 * PI + (j as f64 + 0.5) * h;
            let (s, c) = theta.sin_cos();
            let t = self.center + self.half_width * s / c;
            let w = self.half_width * h / (c * c);
            (t, w)
        })
    }

    fn covers(&self, lo: f64, hi: f64) -> bool {
        self.center - self.half_width <= lo && hi <= self.center + self.half_width
    }
}

/// Lower and upper Gershgorin bounds of a symmetric matrix.
pub fn gershgorin(h: &DMatrix<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..h.nrows() {
        let r: f64 = (0..h.ncols()).filter(|&j| j != i).map(|j| h[(i, j)].abs()).sum();
        lo = lo.min(h[(i, i)] - r);
        hi = hi.max(h[(i, i)] + r);
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourDiag {
    pub diag: Vec<f64>,
    /// False when the quadrature window misses the spectrum or `-κ` by more than the tail margin.
    pub converged: bool,
}

/// Diagonal of `F(H)` from the resolvent-difference integral.
pub fn contour_fermi_diag(
    h: &DMatrix<f64>,
    beta: f64,
    kappa: f64,
    eta: f64,
    quad: &QuadratureSpec,
) -> Result<ContourDiag> {
    if !(eta > 0.0 && eta < PI / beta) {
        return Err(Error::invalid("eta", "must lie strictly inside (0, π/β)"));
    }
    if !(quad.step > 0.0 && quad.half_width > 0.0) {
        return Err(Error::invalid("quadrature", "step and half_width must be positive"));
    }
    let n = h.nrows();
    let (lo, hi) = gershgorin(h);
    let converged = quad.covers(-hi - quad.tail, -lo + quad.tail)
        && quad.covers(-kappa - quad.tail, -kappa + quad.tail);
    let hc: DMatrix<Complex64> = h.map(|x| Complex64::new(x, 0.0));
    let mut diag = vec![0.0; n];
    for (t, w) in quad.nodes() {
        let weight = w * contour_weight(-t, beta, kappa, eta);
        if weight == 0.0 {
            continue;
        }
        let shift = Complex64::new(t, eta);
        let mut a = hc.clone();
        for i in 0..n {
            a[(i, i)] += shift;
        }
        let inv = a
            .try_inverse()
            .ok_or(Error::Singular { smallest_singular_value: 0.0 })?;
        // 1/(2πi) [conj(R) - R] = -Im R / π
        for (i, d) in diag.iter_mut().enumerate() {
            *d += weight * (-inv[(i, i)].im / PI);
        }
    }
    Ok(ContourDiag { diag, converged })
}

/// Sup of `|F(t + iy)|` over a `t`-grid and `y ∈ {-η, -η/2, 0, η/2, η}`.
pub fn fermi_strip_sup(beta: f64, kappa: f64, eta: f64, t_grid: &[f64]) -> f64 {
    let ys = [-eta, -0.5 * eta, 0.0, 0.5 * eta, eta];
    t_grid
        .iter()
        .flat_map(|&t| ys.iter().map(move |&y| Complex64::new(t, y)))
        .map(|z| fermi_dirac_complex(z, beta, kappa).norm())
        .fold(0.0, f64::max)
}

fn check_upper(z: Complex64) -> Result<()> {
    if z.im > 0.0 {
        Ok(())
    } else {
        Err(Error::NotInUpperHalfPlane { im: z.im })
    }
}

fn shifted(h: &DMatrix<f64>, z: Complex64) -> DMatrix<Complex64> {
    let mut a: DMatrix<Complex64> = h.map(|x| Complex64::new(x, 0.0));
    for i in 0..a.nrows() {
        a[(i, i)] -= z;
    }
    a
}

/// Full Green's matrix `(H - z)^{-1}`.
pub fn green_matrix(h: &DMatrix<f64>, z: Complex64) -> Result<DMatrix<Complex64>> {
    check_upper(z)?;
    shifted(h, z)
        .lu()
        .try_inverse()
        .ok_or(Error::Singular { smallest_singular_value: 0.0 })
}

/// Column `(H - z)^{-1} δ_n`, i.e. `G(·, n; z)`.
pub fn green_column(h: &DMatrix<f64>, n: usize, z: Complex64) -> Result<Vec<Complex64>> {
    check_upper(z)?;
    let mut rhs = DVector::zeros(h.nrows());
    rhs[n] = Complex64::new(1.0, 0.0);
    let x = shifted(h, z)
        .lu()
        .solve(&rhs)
        .ok_or(Error::Singular { smallest_singular_value: 0.0 })?;
    Ok(x.iter().copied().collect())
}

/// `G(m, n; z)`; a single column solve.
pub fn green(h: &DMatrix<f64>, m: usize, n: usize, z: Complex64) -> Result<Complex64> {
    Ok(green_column(h, n, z)?[m])
}

/// `G(m,n;z) = Σ_k ψ_k(m) ψ_k(n) / (E_k - z)`.
pub fn green_spectral(spec: &SpectralDecomposition, m: usize, n: usize, z: Complex64) -> Complex64 {
    spec.eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let num = spec.eigenvectors[(m, k)] * spec.eigenvectors[(n, k)];
            Complex64::new(num, 0.0) / (Complex64::new(e, 0.0) - z)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_rng;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    pub(crate) fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = sample_rng(seed, 0);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rng.random_range(-2.0..2.0);
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    #[test]
    fn eig_scalar() {
        let s = eig_matrix(&DMatrix::from_element(1, 1, 2.5)).unwrap();
        assert_eq!(s.eigenvalues, vec![2.5]);
        assert_abs_diff_eq!(s.eigenvectors[(0, 0)].abs(), 1.0);
    }

    #[test]
    fn eig_two_by_two() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let s = eig_matrix(&h).unwrap();
        assert_abs_diff_eq!(s.eigenvalues[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.eigenvalues[1], 3.0, epsilon = 1e-14);
        let r = 0.5f64.sqrt();
        let v0 = s.eigenvectors.column(0);
        let v1 = s.eigenvectors.column(1);
        assert_abs_diff_eq!((v0[0] * v0[1]), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(v0[0].abs(), r, epsilon = 1e-14);
        assert_abs_diff_eq!((v1[0] * v1[1]), -0.5, epsilon = 1e-14);
    }

    #[test]
    fn eig_random_reconstruction() {
        let h = random_symmetric(8, 11);
        let s = eig_matrix(&h).unwrap();
        assert!(s.reconstruction_residual(&h) < 1e-10 * (1.0 + max_abs(&h)));
        assert!(s.gram_residual() < 1e-10);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(eig_matrix(&h), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn fermi_values() {
        assert_eq!(fermi_dirac(0.7, 3.0, 0.7), 0.5);
        assert_abs_diff_eq!(fermi_dirac(3f64.ln(), 1.0, 0.0), 0.25, epsilon = 1e-15);
        let s = fermi_dirac(1.7, 2.0, 1.0) + fermi_dirac(2.0 * 1.0 - 1.7, 2.0, 1.0);
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
        // no overflow
        assert_eq!(fermi_dirac(1e6, 10.0, 0.0), 0.0);
        assert_eq!(fermi_dirac(-1e6, 10.0, 0.0), 1.0);
        assert!(fermi_dirac_derivative(1e6, 10.0, 0.0).is_finite());
    }

    #[test]
    fn fermi_open_range_and_monotone() {
        let grid: Vec<f64> = (0..200).map(|i| -10.0 + 0.1 * i as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&z| fermi_dirac(z, 1.3, 0.4)).collect();
        assert!(vals.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn divided_difference_matches_direct() {
        for (a, b) in [(0.3, 0.30001), (1.0, 3.0), (2.0, 2.0 + 1e-13), (-5.0, 9.0)] {
            let dd = fermi_divided_difference(a, b, 1.0, 2.0);
            let direct = if (a - b).abs() < 1e-12 {
                fermi_dirac_derivative(a, 1.0, 2.0)
            } else {
                (fermi_dirac(a, 1.0, 2.0) - fermi_dirac(b, 1.0, 2.0)) / (a - b)
            };
            assert_abs_diff_eq!(dd, direct, epsilon = 1e-10);
        }
        // symmetric in its arguments
        assert_abs_diff_eq!(
            fermi_divided_difference(1.2, 1.9, 1.0, 2.0),
            fermi_divided_difference(1.9, 1.2, 1.0, 2.0),
            epsilon = 1e-15
        );
    }

    #[test]
    fn diag_scalar_and_two_site() {
        let s = eig_matrix(&DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_abs_diff_eq!(matrix_function_diag(&s, 1.0, 2.0)[0], 0.5);
        let h = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let s = eig_matrix(&h).unwrap();
        let d = matrix_function_diag(&s, 200.0, 2.0);
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn diag_trace_identity() {
        let h = random_symmetric(9, 5);
        let s = eig_matrix(&h).unwrap();
        let d = matrix_function_diag(&s, 0.8, 0.3);
        let tr: f64 = s.eigenvalues.iter().map(|&e| fermi_dirac(e, 0.8, 0.3)).sum();
        assert_abs_diff_eq!(d.iter().sum::<f64>(), tr, epsilon = 1e-10);
        assert!(d.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn poisson_smoothing_against_direct_quadrature() {
        // independent route: trapezoid on u = tan(θ) substitution
        let (beta, kappa, eta) = (1.0, 2.0, PI / 2.0);
        for u in [-3.0, 0.0, 1.7, 2.0, 6.5] {
            let n = 200_000;
            let h = PI / n as f64;
            let mut acc = 0.0;
            for j in 0..n {
                let th = -0.5 * PI + (j as f64 + 0.5) * h;
                // v = u + η tan θ  ⇒  D_η(u - v) dv = dθ / π
                let v = u + eta * th.tan();
                acc += fermi_dirac(v, beta, kappa) * h / PI;
            }
            let got = poisson_smoothed_fermi(u, beta, kappa, eta);
            assert_abs_diff_eq!(got, acc, epsilon = 1e-8);
        }
        // η → 0 recovers F
        assert_abs_diff_eq!(
            poisson_smoothed_fermi(1.3, 2.0, 0.5, 1e-12),
            fermi_dirac(1.3, 2.0, 0.5),
            epsilon = 1e-10
        );
    }

    #[test]
    fn contour_scalar() {
        let h = DMatrix::from_element(1, 1, 2.0);
        let q = QuadratureSpec::for_matrix(&h, 1.0, 2.0, PI / 2.0);
        let r = contour_fermi_diag(&h, 1.0, 2.0, PI / 2.0, &q).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.diag[0], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn contour_matches_spectral_on_random_matrix() {
        let h = random_symmetric(8, 21);
        let (beta, kappa, eta) = (1.0, 0.3, PI / 2.0);
        let spec = eig_matrix(&h).unwrap();
        let exact = matrix_function_diag(&spec, beta, kappa);
        let q = QuadratureSpec::for_matrix(&h, beta, kappa, eta);
        let r = contour_fermi_diag(&h, beta, kappa, eta, &q).unwrap();
        let dev = exact
            .iter()
            .zip(&r.diag)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-6, "deviation {dev}");
    }

    #[test]
    fn contour_converges_under_step_halving() {
        let h = random_symmetric(8, 21);
        let (beta, kappa, eta) = (1.0, 0.3, PI / 2.0);
        let exact = matrix_function_diag(&eig_matrix(&h).unwrap(), beta, kappa);
        let base = QuadratureSpec::for_matrix(&h, beta, kappa, eta);
        let devs: Vec<f64> = [0.04, 0.02, 0.01, 0.005]
            .iter()
            .map(|&s| {
                let r = contour_fermi_diag(&h, beta, kappa, eta, &base.with_step(s)).unwrap();
                exact.iter().zip(&r.diag).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .collect();
        assert!(devs.windows(2).all(|w| w[1] < w[0]), "{devs:?}");
    }

    #[test]
    fn contour_flags_narrow_window() {
        let h = random_symmetric(4, 2);
        let q = QuadratureSpec {
            center: 50.0,
            half_width: 1.0,
            step: 0.01,
            tail: 1.0,
        };
        let r = contour_fermi_diag(&h, 1.0, 0.0, 1.0, &q).unwrap();
        assert!(!r.converged);
        assert!(contour_fermi_diag(&h, 1.0, 0.0, PI, &q).is_err());
    }

    #[test]
    fn strip_bound() {
        let beta = 1.7;
        let grid: Vec<f64> = (0..4001).map(|i| -20.0 + 0.01 * i as f64).collect();
        let sup = fermi_strip_sup(beta, 0.3, PI / (2.0 * beta), &grid);
        assert!(sup <= 1.0 + 1e-12, "{sup}");
    }

    #[test]
    fn green_scalar() {
        let h = DMatrix::from_element(1, 1, 2.0);
        let g = green(&h, 0, 0, Complex64::new(0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(g.re, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(g.im, 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(g.norm(), 1.0 / 5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn green_two_site_against_spectral() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let z = Complex64::new(2.0, 1.0);
        let direct = green(&h, 0, 1, z).unwrap();
        let spec = green_spectral(&eig_matrix(&h).unwrap(), 0, 1, z);
        assert!((direct - spec).norm() < 1e-12);
        // (1/2)/(1-z) - (1/2)/(3-z) evaluated by hand at z = 2+i
        let hand = 0.5 / (Complex64::new(1.0, 0.0) - z) - 0.5 / (Complex64::new(3.0, 0.0) - z);
        assert!((direct - hand).norm() < 1e-14);
    }

    #[test]
    fn green_rejects_real_axis() {
        let h = DMatrix::from_element(1, 1, 2.0);
        assert!(matches!(
            green(&h, 0, 0, Complex64::new(2.0, 0.0)),
            Err(Error::NotInUpperHalfPlane { .. })
        ));
        assert!(green_matrix(&h, Complex64::new(2.0, -1.0)).is_err());
    }

    #[test]
    fn green_symmetry_herglotz_and_spectral_match() {
        let h = random_symmetric(7, 3);
        let z = Complex64::new(0.4, 0.05);
        let g = green_matrix(&h, z).unwrap();
        let spec = eig_matrix(&h).unwrap();
        for m in 0..7 {
            assert!(g[(m, m)].im > 0.0);
            for n in 0..7 {
                assert!((g[(m, n)] - g[(n, m)]).norm() < 1e-12);
                assert!((g[(m, n)] - green_spectral(&spec, m, n, z)).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn resolvent_identity() {
        for seed in 0..5 {
            let a = random_symmetric(6, 100 + seed);
            let b = random_symmetric(6, 200 + seed);
            let z = Complex64::new(0.3, 0.7);
            let ga = green_matrix(&a, z).unwrap();
            let gb = green_matrix(&b, z).unwrap();
            let diff = (&b - &a).map(|x| Complex64::new(x, 0.0));
            let rhs = &ga * diff * &gb;
            let res = (&ga - &gb - rhs).iter().fold(0.0f64, |m, x| m.max(x.norm()));
            assert!(res < 1e-9, "{res}");
        }
    }
}
