//! Sensitivity of the effective potential to the disorder.
//!
//! Differentiating `V = Φ(V; ω)` gives `(I - gM) ∂V/∂ω = λM`, where
//! `M(n,l) = ∂⟨n|F(H)|n⟩/∂H(l,l)` is evaluated exactly from the spectral
//! decomposition with divided differences of `F` (first-order perturbation
//! theory). The same matrix enters the change of variables
//! `U = ω + (g/λ)V_eff(ω)`, whose Jacobian is `I + (g/λ)∂V/∂ω`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DisorderField, LatticeBox, ModelParams};
use crate::scf::{fermi_diagonal, scf_single, sup_diff, EffectivePotential, ScfOptions, FERMI_SUP_NORM};
use crate::spectral::{fermi_divided_difference, SpectralDecomposition};
use crate::stats::{line_fit, LineFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMethod {
    ImplicitSolve,
    FiniteDifference,
}

/// `entries[(n, m)] = ∂V_eff(n)/∂ω(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeMatrix {
    pub entries: DMatrix<f64>,
    pub method: DerivativeMethod,
}

impl DerivativeMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn max_abs_diff(&self, other: &DerivativeMatrix) -> f64 {
        (&self.entries - &other.entries)
            .iter()
            .fold(0.0, |a: f64, x| a.max(x.abs()))
    }
}

/// `M(n,l) = Σ_{j,k} ψ_j(n)ψ_k(n) F[E_j,E_k] ψ_j(l)ψ_k(l)`.
pub fn fermi_diagonal_jacobian(spec: &SpectralDecomposition, beta: f64, kappa: f64) -> DMatrix<f64> {
    let n = spec.dim();
    let e = &spec.eigenvalues;
    let kernel = DMatrix::from_fn(n, n, |j, k| fermi_divided_difference(e[j], e[k], beta, kappa));
    let w = &spec.eigenvectors;
    let mut out = DMatrix::zeros(n, n);
    for site in 0..n {
        // x[(l, j)] = ψ_j(l) ψ_j(site)
        let x = DMatrix::from_fn(n, n, |l, j| w[(l, j)] * w[(site, j)]);
        let y = &x * &kernel;
        for l in 0..n {
            out[(site, l)] = y.row(l).dot(&x.row(l));
        }
    }
    out
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(f64::INFINITY, |a, &s| a.min(s))
}

/// `∂V_eff/∂ω` at a converged single-component solution, by the implicit linear system.
pub fn dv_domega(
    solution: &EffectivePotential,
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
) -> Result<DerivativeMatrix> {
    if !solution.converged {
        return Err(Error::invalid("solution", "SCF solution is not converged"));
    }
    let (_, spec) = fermi_diagonal(lattice, params, disorder, Some(solution.values()))?;
    let m = fermi_diagonal_jacobian(&spec, params.beta, params.kappa);
    let n = lattice.len();
    let system = DMatrix::identity(n, n) - &m * params.g;
    let smin = smallest_singular_value(&system);
    if smin < 1e-12 {
        return Err(Error::Singular {
            smallest_singular_value: smin,
        });
    }
    let rhs = &m * params.lambda;
    let entries = system.lu().solve(&rhs).ok_or(Error::Singular {
        smallest_singular_value: smin,
    })?;
    Ok(DerivativeMatrix {
        entries,
        method: DerivativeMethod::ImplicitSolve,
    })
}

fn tight(opts: &ScfOptions) -> ScfOptions {
    ScfOptions {
        tol: opts.tol.min(1e-13),
        max_iter: opts.max_iter,
    }
}

fn solve_converged(
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    start: Option<&[f64]>,
    opts: &ScfOptions,
) -> Result<Vec<f64>> {
    let sol = scf_single(lattice, params, disorder, start, opts)?;
    if !sol.converged {
        return Err(Error::NotConverged {
            what: "SCF".into(),
            iterations: sol.iterations,
            residual: sol.final_residual(),
        });
    }
    Ok(sol.values().to_vec())
}

/// Central finite differences of full SCF re-solves, step `h`.
pub fn dv_domega_finite_difference(
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    h: f64,
    opts: &ScfOptions,
) -> Result<DerivativeMatrix> {
    let opts = tight(opts);
    let base = solve_converged(lattice, params, disorder, None, &opts)?;
    let n = lattice.len();
    let mut entries = DMatrix::zeros(n, n);
    for m in 0..n {
        let plus = disorder.resampled(m, disorder.values[m] + h);
        let minus = disorder.resampled(m, disorder.values[m] - h);
        let vp = solve_converged(lattice, params, &plus, Some(&base), &opts)?;
        let vm = solve_converged(lattice, params, &minus, Some(&base), &opts)?;
        for site in 0..n {
            entries[(site, m)] = (vp[site] - vm[site]) / (2.0 * h);
        }
    }
    Ok(DerivativeMatrix {
        entries,
        method: DerivativeMethod::FiniteDifference,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayNormReport {
    /// `sup_m Σ_n e^{ν|n-m|} |∂V(n)/∂ω(m)|`
    pub c1_row: f64,
    /// `sup_n Σ_m e^{ν|n-m|} |∂V(n)/∂ω(m)|`
    pub c1_col: f64,
    /// `Σ_{l,m,n} e^{ν(|l-n|+|n-m|+|l-m|)} |∂²V(n)/∂ω(m)∂ω(l)|`, small boxes only
    pub c2_est: Option<f64>,
    /// `sup_{m≠n} max{|ω(n)|,|ω(m)|} |∂V(n)/∂ω(m)| e^{2ν|m-n|}`
    pub weighted_c7: f64,
}

impl DecayNormReport {
    /// The constant bounding both weighted sums.
    pub fn c1(&self) -> f64 {
        self.c1_row.max(self.c1_col)
    }
}

/// Largest box on which the second-derivative sum is estimated.
pub const C2_MAX_SITES: usize = 12;

pub fn decay_norms(
    deriv: &DerivativeMatrix,
    lattice: &LatticeBox,
    disorder: &DisorderField,
    params: &ModelParams,
) -> DecayNormReport {
    let n = deriv.dim();
    let nu = params.nu;
    let x = &deriv.entries;
    let weight = |a: usize, b: usize| (nu * lattice.dist(a, b) as f64).exp();
    let c1_row = (0..n)
        .map(|m| (0..n).map(|s| weight(s, m) * x[(s, m)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let c1_col = (0..n)
        .map(|s| (0..n).map(|m| weight(s, m) * x[(s, m)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut weighted_c7: f64 = 0.0;
    for s in 0..n {
        for m in 0..n {
            if s != m {
                let w = disorder.values[s].abs().max(disorder.values[m].abs());
                weighted_c7 = weighted_c7.max(w * x[(s, m)].abs() * weight(s, m).powi(2));
            }
        }
    }
    DecayNormReport {
        c1_row,
        c1_col,
        c2_est: None,
        weighted_c7,
    }
}

/// Adds the second-derivative estimate from central differences of `V_eff` with step `h`.
pub fn decay_norms_with_second_order(
    deriv: &DerivativeMatrix,
    lattice: &LatticeBox,
    disorder: &DisorderField,
    params: &ModelParams,
    h: f64,
    opts: &ScfOptions,
) -> Result<DecayNormReport> {
    let mut report = decay_norms(deriv, lattice, disorder, params);
    let n = lattice.len();
    if n > C2_MAX_SITES {
        return Ok(report);
    }
    let opts = tight(opts);
    let base = solve_converged(lattice, params, disorder, None, &opts)?;
    let shifted = |pairs: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut w = disorder.clone();
        for &(site, d) in pairs {
            w.values[site] += d;
        }
        solve_converged(lattice, params, &w, Some(&base), &opts)
    };
    let nu = params.nu;
    let dist = |a: usize, b: usize| lattice.dist(a, b) as f64;
    let mut total = 0.0;
    for m in 0..n {
        for l in m..n {
            let second: Vec<f64> = if l == m {
                let p = shifted(&[(m, h)])?;
                let q = shifted(&[(m, -h)])?;
                (0..n).map(|s| (p[s] - 2.0 * base[s] + q[s]) / (h * h)).collect()
            } else {
                let pp = shifted(&[(m, h), (l, h)])?;
                let pm = shifted(&[(m, h), (l, -h)])?;
                let mp = shifted(&[(m, -h), (l, h)])?;
                let mm = shifted(&[(m, -h), (l, -h)])?;
                (0..n)
                    .map(|s| (pp[s] - pm[s] - mp[s] + mm[s]) / (4.0 * h * h))
                    .collect()
            };
            let mult = if l == m { 1.0 } else { 2.0 };
            for (s, d2) in second.iter().enumerate() {
                let w = (nu * (dist(l, s) + dist(s, m) + dist(l, m))).exp();
                total += mult * w * d2.abs();
            }
        }
    }
    report.c2_est = Some(total);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianReport {
    /// `I + (g/λ) ∂V/∂ω`
    pub matrix: DMatrix<f64>,
    pub det: f64,
    /// `ln |det|`
    pub log_det: f64,
}

/// Jacobian of `ω ↦ U = ω + (g/λ)V_eff(ω)`.
pub fn jacobian_t(deriv: &DerivativeMatrix, params: &ModelParams) -> Result<JacobianReport> {
    if !(params.lambda > 0.0) {
        return Err(Error::invalid("lambda", "change of variables needs λ > 0"));
    }
    let n = deriv.dim();
    let matrix = DMatrix::identity(n, n) + &deriv.entries * (params.g / params.lambda);
    let det = matrix.clone().lu().determinant();
    Ok(JacobianReport {
        log_det: det.abs().ln(),
        det,
        matrix,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetRatioCheck {
    /// `|det(I+A) / det(I+B)|`
    pub ratio: f64,
    /// `exp(‖(A-B)(I+B)^{-1}‖_1)`, trace norm
    pub bound: f64,
    pub ok: bool,
}

/// Sum of singular values.
pub fn trace_norm(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().iter().sum()
}

pub fn det_ratio_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DetRatioCheck> {
    if !a.is_square() || a.shape() != b.shape() {
        return Err(Error::invalid("A, B", "must be square matrices of equal size"));
    }
    let n = a.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let ipb = &id + b;
    let smin = smallest_singular_value(&ipb);
    if smin < 1e-14 {
        return Err(Error::Singular {
            smallest_singular_value: smin,
        });
    }
    let inv = ipb.clone().try_inverse().ok_or(Error::Singular {
        smallest_singular_value: smin,
    })?;
    let det_a = (&id + a).lu().determinant();
    let det_b = ipb.lu().determinant();
    let ratio = (det_a / det_b).abs();
    let bound = trace_norm(&((a - b) * inv)).exp();
    Ok(DetRatioCheck {
        ratio,
        bound,
        ok: ratio <= bound * (1.0 + 1e-9),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResamplingShift {
    /// `ω_α - ω`
    pub shift: Vec<f64>,
    /// `U(n0)` before resampling
    pub u_site: f64,
    /// `Σ_{n≠n0} e^{ν|n-n0|} |ω_α(n) - ω(n)|`
    pub weighted_sum: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `(C1|g|/λ)(|α - U(n0)| + 2|g|‖F‖/λ) / (1 - |g|C1/λ)`; infinite when `|g|C1/λ ≥ 1`.
pub fn resampling_bound(c1: f64, params: &ModelParams, alpha_gap: f64) -> f64 {
    let q = params.g.abs() * c1 / params.lambda;
    if q >= 1.0 {
        return f64::INFINITY;
    }
    q * (alpha_gap.abs() + 2.0 * params.g.abs() * FERMI_SUP_NORM / params.lambda) / (1.0 - q)
}

/// Resamples the full potential `U = ω + (g/λ)V_eff` at `n0` to `α` and solves
/// `𝒯(ω_α) = U_α` by the damped iteration `ω ← (1-θ)ω + θ(U_α - (g/λ)V_eff(ω))`.
#[allow(clippy::too_many_arguments)]
pub fn resampling_shift(
    solution: &EffectivePotential,
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    site: usize,
    alpha: f64,
    damping: f64,
    opts: &ScfOptions,
) -> Result<ResamplingShift> {
    if !(params.lambda > 0.0) {
        return Err(Error::invalid("lambda", "resampling needs λ > 0"));
    }
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::invalid("damping", "must lie in (0, 1]"));
    }
    let ratio = params.g / params.lambda;
    let v = solution.values();
    let mut target: Vec<f64> = disorder
        .values
        .iter()
        .zip(v)
        .map(|(w, vv)| w + ratio * vv)
        .collect();
    let u_site = target[site];
    target[site] = alpha;
    let inner = tight(opts);
    let mut omega = disorder.clone();
    let mut pot = v.to_vec();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        iterations += 1;
        pot = solve_converged(lattice, params, &omega, Some(&pot), &inner)?;
        let next: Vec<f64> = omega
            .values
            .iter()
            .zip(&target)
            .zip(&pot)
            .map(|((w, u), vv)| (1.0 - damping) * w + damping * (u - ratio * vv))
            .collect();
        let step = sup_diff(&next, &omega.values);
        omega.values = next;
        if step < opts.tol {
            converged = true;
            break;
        }
    }
    let shift: Vec<f64> = omega
        .values
        .iter()
        .zip(&disorder.values)
        .map(|(a, b)| a - b)
        .collect();
    let weighted_sum = shift
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != site)
        .map(|(n, d)| (params.nu * lattice.dist(n, site) as f64).exp() * d.abs())
        .sum();
    Ok(ResamplingShift {
        shift,
        u_site,
        weighted_sum,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub sup_difference: f64,
    /// `sup_difference / |g - g'|` when `λ = λ'` and `g ≠ g'`
    pub lipschitz_ratio: Option<f64>,
}

/// `sup_n |V_{λ,g}(n) - V_{λ',g'}(n)|` for one disorder realisation.
pub fn potential_sensitivity(
    lattice: &LatticeBox,
    disorder: &DisorderField,
    params: &ModelParams,
    other: (f64, f64),
    opts: &ScfOptions,
) -> Result<Sensitivity> {
    let (lambda2, g2) = other;
    let p2 = params.clone().with_lambda(lambda2).with_g(g2);
    let a = solve_converged(lattice, params, disorder, None, opts)?;
    let b = solve_converged(lattice, &p2, disorder, Some(&a), opts)?;
    let sup_difference = sup_diff(&a, &b);
    let lipschitz_ratio =
        (params.lambda == lambda2 && params.g != g2).then(|| sup_difference / (params.g - g2).abs());
    Ok(Sensitivity {
        sup_difference,
        lipschitz_ratio,
    })
}

/// Least-squares slope of the sample-averaged `log|∂V(n)/∂ω(m)|` against `|n - m|`.
///
/// Exact zeros are skipped; the average is taken per distance over all pairs and samples.
pub fn derivative_decay_fit(derivs: &[DerivativeMatrix], lattice: &LatticeBox) -> Option<LineFit> {
    let n = lattice.len();
    let mut sums: Vec<(f64, usize)> = Vec::new();
    for d in derivs {
        for s in 0..n {
            for m in 0..n {
                let x = d.entries[(s, m)].abs();
                if x > 0.0 {
                    let r = lattice.dist(s, m);
                    if sums.len() <= r {
                        sums.resize(r + 1, (0.0, 0));
                    }
                    sums[r].0 += x.ln();
                    sums[r].1 += 1;
                }
            }
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = sums
        .iter()
        .enumerate()
        .filter(|(_, (_, c))| *c > 0)
        .map(|(r, (s, c))| (r as f64, s / *c as f64))
        .unzip();
    (xs.len() >= 2).then(|| line_fit(&xs, &ys))
}

/// `|∂V(n)/∂ω(m)|` on the full chain minus the same entry on the chain cut at
/// distance `r` beyond `n` (sites farther than `r` to the right of `n` removed), per `r`.
pub fn locality_audit(
    chain_len: usize,
    params: &ModelParams,
    disorder: &DisorderField,
    site: usize,
    source: usize,
    radii: &[usize],
    opts: &ScfOptions,
) -> Result<Vec<f64>> {
    let full_box = LatticeBox::chain(chain_len)?;
    let full_sol = scf_single(&full_box, params, disorder, None, opts)?;
    let full = dv_domega(&full_sol, &full_box, params, disorder)?.entries[(site, source)];
    radii
        .iter()
        .map(|&r| {
            let len = (site + r + 1).min(chain_len);
            if source >= len {
                return Err(Error::invalid("radii", "cut removes the source site"));
            }
            let (sub, map) = full_box.sub_box(&[0], &[len])?;
            let w = disorder.restrict(&map);
            let sol = scf_single(&sub, params, &w, None, opts)?;
            let d = dv_domega(&sol, &sub, params, &w)?;
            Ok((d.entries[(site, source)] - full).abs())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_disorder, sample_rng};
    use crate::scf::contraction_bound;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn params(lambda: f64, g: f64) -> ModelParams {
        ModelParams::default().with_lambda(lambda).with_g(g)
    }

    fn g1() -> f64 {
        contraction_bound(&params(1.0, 0.0), 1).g_threshold
    }

    fn solved(len: usize, p: &ModelParams, seed: u64) -> (LatticeBox, DisorderField, EffectivePotential) {
        let b = LatticeBox::chain(len).unwrap();
        let w = sample_disorder(&b, &p.distribution, seed, 0).unwrap();
        let sol = scf_single(&b, p, &w, None, &ScfOptions::default()).unwrap();
        (b, w, sol)
    }

    #[test]
    fn jacobian_kernel_matches_finite_difference_of_fermi_diagonal() {
        let p = params(1.0, 0.0);
        let b = LatticeBox::chain(6).unwrap();
        let w = sample_disorder(&b, &p.distribution, 2, 0).unwrap();
        let v: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let (_, spec) = fermi_diagonal(&b, &p.clone().with_g(1.0), &w, Some(&v)).unwrap();
        let m = fermi_diagonal_jacobian(&spec, 1.0, 2.0);
        let h = 1e-6;
        for l in 0..6 {
            let mut vp = v.clone();
            vp[l] += h;
            let mut vm = v.clone();
            vm[l] -= h;
            let (dp, _) = fermi_diagonal(&b, &p.clone().with_g(1.0), &w, Some(&vp)).unwrap();
            let (dm, _) = fermi_diagonal(&b, &p.clone().with_g(1.0), &w, Some(&vm)).unwrap();
            for s in 0..6 {
                assert_abs_diff_eq!(m[(s, l)], (dp[s] - dm[s]) / (2.0 * h), epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn zero_disorder_strength_gives_zero_derivative() {
        let p = params(0.0, 0.5 * g1());
        let (b, w, sol) = solved(5, &p, 1);
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        assert!(d.entries.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_site_chain_rule() {
        let p = params(1.0, 0.0);
        let b = LatticeBox::chain(1).unwrap();
        let w = DisorderField::zeros(1);
        let sol = scf_single(&b, &p, &w, None, &ScfOptions::default()).unwrap();
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        assert_abs_diff_eq!(d.entries[(0, 0)], -0.25, epsilon = 1e-12);
        let r = decay_norms(&d, &b, &w, &p);
        assert_abs_diff_eq!(r.c1_row, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(r.c1_col, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn implicit_matches_finite_difference_twelve_chain() {
        let p = params(1.0, 0.5 * g1());
        let (b, w, sol) = solved(12, &p, 3);
        let imp = dv_domega(&sol, &b, &p, &w).unwrap();
        let fd = dv_domega_finite_difference(&b, &p, &w, 1e-5, &ScfOptions::default()).unwrap();
        assert!(imp.max_abs_diff(&fd) < 1e-6, "{}", imp.max_abs_diff(&fd));
    }

    #[test]
    fn implicit_matches_finite_difference_strong_coupling() {
        // far above the provable threshold the linear system still has to agree
        let p = params(1.0, 0.5);
        let (b, w, sol) = solved(8, &p, 4);
        assert!(sol.converged);
        let imp = dv_domega(&sol, &b, &p, &w).unwrap();
        let fd = dv_domega_finite_difference(&b, &p, &w, 1e-5, &ScfOptions::default()).unwrap();
        assert!(imp.max_abs_diff(&fd) < 1e-6, "{}", imp.max_abs_diff(&fd));
    }

    #[test]
    fn unweighted_norm_is_max_column_sum() {
        let p = params(1.0, 0.5 * g1()).with_nu(1e-300);
        let (b, w, sol) = solved(7, &p, 5);
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        let r = decay_norms(&d, &b, &w, &p);
        let max_col = (0..7)
            .map(|m| (0..7).map(|s| d.entries[(s, m)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        assert_abs_diff_eq!(r.c1_row, max_col, epsilon = 1e-15);
        assert!(r.weighted_c7.is_finite() && r.weighted_c7 >= 0.0);
    }

    #[test]
    fn second_order_estimate_small_box() {
        let p = params(1.0, 0.5 * g1());
        let (b, w, sol) = solved(5, &p, 6);
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        let r = decay_norms_with_second_order(&d, &b, &w, &p, 1e-3, &ScfOptions::default()).unwrap();
        let c2 = r.c2_est.unwrap();
        assert!(c2.is_finite() && c2 > 0.0);
        let (b, w, sol) = solved(13, &p, 6);
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        let r = decay_norms_with_second_order(&d, &b, &w, &p, 1e-3, &ScfOptions::default()).unwrap();
        assert!(r.c2_est.is_none());
    }

    #[test]
    fn jacobian_identity_at_zero_coupling() {
        let p = params(1.0, 0.0);
        let (b, w, sol) = solved(6, &p, 7);
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        let j = jacobian_t(&d, &p).unwrap();
        assert_abs_diff_eq!(j.det, 1.0, epsilon = 1e-15);
        assert!(jacobian_t(&d, &params(0.0, 0.0)).is_err());
    }

    #[test]
    fn jacobian_log_det_bound() {
        let p = params(1.0, 0.5 * g1());
        let (b, w, sol) = solved(8, &p, 8);
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        let j = jacobian_t(&d, &p).unwrap();
        let r = decay_norms(&d, &b, &w, &p);
        assert!(p.g.abs() / p.lambda * r.c1_row < 1.0);
        assert!(j.det > 0.0);
        let l1: f64 = d.entries.iter().map(|x| (p.g / p.lambda * x).abs()).sum();
        assert!(j.log_det.abs() <= l1 + 1e-9);
    }

    #[test]
    fn det_ratio_trivial_and_random() {
        let a = DMatrix::from_fn(4, 4, |i, j| 0.01 * (i as f64 - j as f64));
        let r = det_ratio_check(&a, &a).unwrap();
        assert_abs_diff_eq!(r.ratio, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r.bound, 1.0, epsilon = 1e-14);
        assert!(r.ok);
        let mut rng = sample_rng(99, 0);
        let zero = DMatrix::zeros(4, 4);
        for _ in 0..50 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.1..0.1));
            let r = det_ratio_check(&a, &zero).unwrap();
            assert!(r.ok);
            assert!(r.ratio <= trace_norm(&a).exp() * (1.0 + 1e-9));
        }
    }

    #[test]
    fn det_ratio_rejects_singular() {
        let b = -DMatrix::<f64>::identity(3, 3);
        let a = DMatrix::zeros(3, 3);
        assert!(matches!(det_ratio_check(&a, &b), Err(Error::Singular { .. })));
    }

    #[test]
    fn resampling_trivial_cases() {
        let p = params(1.0, 0.0);
        let (b, w, sol) = solved(6, &p, 9);
        let opts = ScfOptions::default();
        let r = resampling_shift(&sol, &b, &p, &w, 2, 1.7, 1.0, &opts).unwrap();
        assert!(r.converged);
        for (n, d) in r.shift.iter().enumerate() {
            if n == 2 {
                assert_abs_diff_eq!(*d, 1.7 - r.u_site, epsilon = 1e-14);
            } else {
                assert_eq!(*d, 0.0);
            }
        }
        let p = params(1.0, 0.5 * g1());
        let (b, w, sol) = solved(6, &p, 9);
        let u = w.values[3] + p.g / p.lambda * sol.values()[3];
        let r = resampling_shift(&sol, &b, &p, &w, 3, u, 1.0, &opts).unwrap();
        assert!(r.shift.iter().all(|d| d.abs() < 1e-9), "{:?}", r.shift);
    }

    #[test]
    fn resampling_respects_bound() {
        let p = params(1.0, 0.5 * g1());
        let (b, w, sol) = solved(12, &p, 10);
        let opts = ScfOptions::default();
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        let c1 = decay_norms(&d, &b, &w, &p).c1();
        let n0 = 5;
        let u = w.values[n0] + p.g / p.lambda * sol.values()[n0];
        let r = resampling_shift(&sol, &b, &p, &w, n0, u + 1.0, 1.0, &opts).unwrap();
        assert!(r.converged);
        let bound = resampling_bound(c1, &p, 1.0);
        assert!(r.weighted_sum <= bound * 1.1, "{} vs {}", r.weighted_sum, bound);
        assert!(r.weighted_sum > 0.0);
    }

    #[test]
    fn sensitivity_cases() {
        let p = params(1.0, 0.0);
        let b = LatticeBox::chain(12).unwrap();
        let w = sample_disorder(&b, &p.distribution, 11, 0).unwrap();
        let opts = ScfOptions::default();
        let same = potential_sensitivity(&b, &w, &p, (1.0, 0.0), &opts).unwrap();
        assert_eq!(same.sup_difference, 0.0);
        let ratios: Vec<f64> = [0.2, 0.25, 0.3]
            .iter()
            .map(|f| {
                potential_sensitivity(&b, &w, &p, (1.0, f * g1()), &opts)
                    .unwrap()
                    .lipschitz_ratio
                    .unwrap()
            })
            .collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, c), &r| (a.min(r), c.max(r)));
        assert!(lo > 0.0 && hi / lo < 3.0, "{ratios:?}");
        // λ-perturbation against the mean value bound from the derivative
        let sol = scf_single(&b, &p, &w, None, &opts).unwrap();
        let d = dv_domega(&sol, &b, &p, &w).unwrap();
        let c1 = decay_norms(&d, &b, &w, &p).c1_col;
        let wmax = w.values.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let s = potential_sensitivity(&b, &w, &p, (1.1, 0.0), &opts).unwrap();
        assert!(s.sup_difference <= c1 / p.lambda * wmax * 0.1 * 1.5);
    }

    #[test]
    fn locality_decreases_with_cut_distance() {
        let p = params(1.0, 0.5 * g1());
        let len = 24;
        let b = LatticeBox::chain(len).unwrap();
        let w = sample_disorder(&b, &p.distribution, 12, 0).unwrap();
        let diffs = locality_audit(len, &p, &w, 8, 7, &[2, 4, 6], &ScfOptions::default()).unwrap();
        assert!(diffs.windows(2).all(|x| x[1] < x[0]), "{diffs:?}");
    }

    #[test]
    fn decay_slope_negative() {
        let p = params(1.0, 0.5 * g1());
        let derivs: Vec<DerivativeMatrix> = (0..3)
            .map(|s| {
                let (b, w, sol) = solved(16, &p, 20 + s);
                dv_domega(&sol, &b, &p, &w).unwrap()
            })
            .collect();
        let fit = derivative_decay_fit(&derivs, &LatticeBox::chain(16).unwrap()).unwrap();
        assert!(fit.slope <= -p.nu / 2.0, "{fit:?}");
    }
}
