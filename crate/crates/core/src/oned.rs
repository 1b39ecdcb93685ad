//! One-dimensional chains: Riccati recursion, Lyapunov exponents, the moment
//! generating function of end-to-end Green's functions and decoupling audits.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{build_system, run_samples, ModelKind, Sampling};
use crate::error::{Error, Result};
use crate::model::{mix_seed, sample_disorder, LatticeBox, ModelParams};
use crate::scf::{picard, ScfOptions};
use crate::stats::{bootstrap_ci, line_fit, mean_stderr, slope_weights};

fn check_z(z: Complex64) -> Result<()> {
    if z.im > 0.0 {
        Ok(())
    } else {
        Err(Error::NotInUpperHalfPlane { im: z.im })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiccatiTrace {
    pub z: Complex64,
    /// full diagonal `2 + λω(n) + gV(n)`
    pub potential: Vec<f64>,
    /// `g_n`: diagonal Green's function of the chain restricted to `[n, N]`
    pub g_seq: Vec<Complex64>,
}

impl RiccatiTrace {
    /// `ln |G(0, N; z)| = Σ_n ln |g_n|` for the whole chain (unit hopping).
    pub fn log_end_to_end(&self) -> f64 {
        self.g_seq.iter().map(|g| g.norm().ln()).sum()
    }
}

/// Backward recursion `g_N = 1/(v_N - z)`, `g_n = 1/(v_n - z - g_{n+1})`.
pub fn riccati_diagonal(potential: &[f64], z: Complex64) -> Result<RiccatiTrace> {
    check_z(z)?;
    if potential.is_empty() {
        return Err(Error::invalid("potential", "chain is empty"));
    }
    let mut g_seq = vec![Complex64::new(0.0, 0.0); potential.len()];
    let mut next = Complex64::new(0.0, 0.0);
    for (k, &v) in potential.iter().enumerate().rev() {
        next = (v - z - next).inv();
        g_seq[k] = next;
    }
    Ok(RiccatiTrace {
        z,
        potential: potential.to_vec(),
        g_seq,
    })
}

/// Number of Matsubara poles for a chain whose shifted spectrum lies in `[-radius, radius]`:
/// the neglected fifth-order tail `(4/β) R^5 Σ_{n≥N} ω_n^{-6}` is kept below `1e-12`.
fn pole_count(beta: f64, radius: f64) -> usize {
    let tail = |n: f64| 4.0 / beta * radius.powi(5) * (beta / (2.0 * PI)).powi(6) / (5.0 * n.powi(5));
    let mut n = 64.0;
    while tail(n) > 1e-12 {
        n *= 1.25;
    }
    n.ceil() as usize
}

/// Diagonal of `F(H)` for the tridiagonal chain with diagonal `diag` and hopping `-1`.
///
/// Sums the Matsubara expansion
/// `F(H)_jj = 1/2 - (2/β) Σ_n Re G_jj(κ + iω_n)` over the first poles, with
/// `G_jj` from two Riccati sweeps, and adds the first two terms of the tail
/// in powers of `H - κ`. Linear cost in the chain length.
pub fn tridiagonal_fermi_diagonal(diag: &[f64], beta: f64, kappa: f64) -> Vec<f64> {
    let n = diag.len();
    if n == 0 {
        return Vec::new();
    }
    let a: Vec<f64> = diag.iter().map(|d| d - kappa).collect();
    let radius = a.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 2.0;
    let poles = pole_count(beta, radius);
    let mut acc = vec![0.0; n];
    let mut right = vec![Complex64::new(0.0, 0.0); n];
    let mut c1 = beta * beta / 8.0;
    let mut c3 = beta.powi(4) / 96.0;
    for p in 0..poles {
        let w = (2 * p + 1) as f64 * PI / beta;
        c1 -= 1.0 / (w * w);
        c3 -= 1.0 / w.powi(4);
        let iw = Complex64::new(0.0, w);
        // right[j]: chain [j, n) at site j, energies measured from κ
        let mut next = Complex64::new(0.0, 0.0);
        for j in (0..n).rev() {
            next = (a[j] - iw - next).inv();
            right[j] = next;
        }
        let mut left = Complex64::new(0.0, 0.0);
        for j in 0..n {
            let r = if j + 1 < n { right[j + 1] } else { Complex64::new(0.0, 0.0) };
            acc[j] += (a[j] - iw - left - r).inv().re;
            left = (a[j] - iw - left).inv();
        }
    }
    (0..n)
        .map(|j| {
            let mut cube = a[j].powi(3);
            if j > 0 {
                cube += a[j - 1] + 2.0 * a[j];
            }
            if j + 1 < n {
                cube += a[j + 1] + 2.0 * a[j];
            }
            0.5 - (2.0 / beta) * (acc[j] + c1 * a[j] - c3 * cube)
        })
        .collect()
}

/// Single-component SCF on a chain through [`tridiagonal_fermi_diagonal`].
/// Returns the potential and whether it converged.
pub fn chain_scf(params: &ModelParams, disorder: &[f64], opts: &ScfOptions) -> Result<(Vec<f64>, usize, bool)> {
    params.validate()?;
    opts.validate()?;
    let base: Vec<f64> = disorder.iter().map(|w| 2.0 + params.lambda * w).collect();
    let map = |v: &[f64]| -> Result<Vec<f64>> {
        let d: Vec<f64> = base.iter().zip(v).map(|(b, x)| b + params.g * x).collect();
        Ok(tridiagonal_fermi_diagonal(&d, params.beta, params.kappa))
    };
    let start = vec![0.5; disorder.len()];
    if params.g == 0.0 {
        let v = map(&start)?;
        return Ok((v, 1, true));
    }
    let (v, history, converged) = picard(map, start, opts)?;
    Ok((v, history.len(), converged))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovModel {
    #[default]
    Anderson,
    HartreeFock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub z: Complex64,
    pub value: f64,
    pub stderr: f64,
    pub chain_length: usize,
    pub buffer: usize,
    pub n_realizations: usize,
    pub failures: usize,
    pub per_realization: Vec<f64>,
}

/// Smallest buffer with `e^{-νB} < 1e-8`.
pub fn default_buffer(nu: f64) -> usize {
    (1e8f64.ln() / nu).floor() as usize + 1
}

/// Full chain diagonal of one realisation on `L + 2B` sites.
fn chain_potential(
    params: &ModelParams,
    model: LyapunovModel,
    total: usize,
    seed: u64,
    index: u64,
    opts: &ScfOptions,
) -> Result<Vec<f64>> {
    let lattice = LatticeBox::chain(total)?;
    let w = sample_disorder(&lattice, &params.distribution, seed, index)?;
    match model {
        LyapunovModel::HartreeFock if params.g != 0.0 => {
            let (v, iterations, converged) = chain_scf(params, &w.values, opts)?;
            if !converged {
                return Err(Error::NotConverged {
                    what: "chain SCF".into(),
                    iterations,
                    residual: f64::NAN,
                });
            }
            Ok(w.values
                .iter()
                .zip(&v)
                .map(|(x, vv)| 2.0 + params.lambda * x + params.g * vv)
                .collect())
        }
        _ => Ok(w.values.iter().map(|x| 2.0 + params.lambda * x).collect()),
    }
}

/// `-⟨ln |g_n|⟩` over the middle `chain_length` sites of a chain with `buffer` extra sites per end.
fn window_lyapunov(potential: &[f64], z: Complex64, buffer: usize, length: usize) -> Result<f64> {
    let tr = riccati_diagonal(potential, z)?;
    let sum: f64 = tr.g_seq[buffer..buffer + length].iter().map(|g| -g.norm().ln()).sum();
    Ok(sum / length as f64)
}

fn check_lengths(chain_length: usize, buffer: usize) -> Result<()> {
    if chain_length == 0 || chain_length < 10 * buffer {
        return Err(Error::invalid("chain_length", "must be positive and at least 10 × buffer"));
    }
    Ok(())
}

pub fn lyapunov(
    params: &ModelParams,
    model: LyapunovModel,
    z: Complex64,
    chain_length: usize,
    buffer: usize,
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<LyapunovEstimate> {
    check_z(z)?;
    check_lengths(chain_length, buffer)?;
    let total = chain_length + 2 * buffer;
    let out = run_samples(sampling, |idx| {
        let pot = chain_potential(params, model, total, sampling.seed, idx, opts)?;
        window_lyapunov(&pot, z, buffer, chain_length)
    })?;
    let (value, stderr) = mean_stderr(&out.results);
    Ok(LyapunovEstimate {
        z,
        value,
        stderr,
        chain_length,
        buffer,
        n_realizations: out.results.len(),
        failures: out.failures,
        per_realization: out.results,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovGapPoint {
    pub g: f64,
    pub hartree_fock: f64,
    pub anderson: f64,
    /// `|𝓛_HF(g) - 𝓛_And|`
    pub gap: f64,
    /// standard error of the per-realisation differences
    pub stderr: f64,
}

/// Gap to the Anderson exponent per coupling, realisations shared across the sweep.
pub fn lyapunov_gap(
    params: &ModelParams,
    g_values: &[f64],
    z: Complex64,
    chain_length: usize,
    buffer: usize,
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<Vec<LyapunovGapPoint>> {
    check_z(z)?;
    check_lengths(chain_length, buffer)?;
    let total = chain_length + 2 * buffer;
    let out = run_samples(sampling, |idx| {
        let pot = chain_potential(params, LyapunovModel::Anderson, total, sampling.seed, idx, opts)?;
        let and = window_lyapunov(&pot, z, buffer, chain_length)?;
        let hf = g_values
            .iter()
            .map(|&g| {
                let p = params.clone().with_g(g);
                let pot = chain_potential(&p, LyapunovModel::HartreeFock, total, sampling.seed, idx, opts)?;
                window_lyapunov(&pot, z, buffer, chain_length)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((and, hf))
    })?;
    let and: Vec<f64> = out.results.iter().map(|r| r.0).collect();
    let (and_mean, _) = mean_stderr(&and);
    Ok(g_values
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            let hf: Vec<f64> = out.results.iter().map(|r| r.1[k]).collect();
            let diff: Vec<f64> = out.results.iter().map(|r| r.1[k] - r.0).collect();
            let (hf_mean, _) = mean_stderr(&hf);
            let (d, se) = mean_stderr(&diff);
            LyapunovGapPoint {
                g,
                hartree_fock: hf_mean,
                anderson: and_mean,
                gap: d.abs(),
                stderr: se,
            }
        })
        .collect())
}

/// Gaps ordered by decreasing `|g|` do not increase beyond twice the combined standard error.
pub fn gaps_non_increasing(points: &[LyapunovGapPoint]) -> bool {
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| b.g.abs().total_cmp(&a.g.abs()));
    sorted.windows(2).all(|w| {
        let tol = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[1].gap <= w[0].gap + tol
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGenEstimate {
    pub s: f64,
    pub z: Complex64,
    pub lengths: Vec<usize>,
    /// `ln E|G(0,n;z)|^s` on the box `[0, n]`
    pub a_n: Vec<f64>,
    pub a_stderr: Vec<f64>,
    /// fitted slope of `a_n` against `n`
    pub phi: f64,
    pub phi_stderr: f64,
    pub intercept: f64,
    /// `a_n - φ n`
    pub residuals: Vec<f64>,
    pub n_effective: usize,
    pub failures: usize,
}

/// `|G(0,n;z)|^s` on the boxes `[0, n]`, one value per length, for the realisation `index`.
/// Spin components of the Hubbard pair are averaged.
#[allow(clippy::too_many_arguments)]
fn end_to_end_moments(
    params: &ModelParams,
    kind: ModelKind,
    z: Complex64,
    s: f64,
    lengths: &[usize],
    seed: u64,
    index: u64,
    opts: &ScfOptions,
) -> Result<Vec<f64>> {
    let longest = *lengths.iter().max().expect("non-empty lengths");
    let full = LatticeBox::chain(longest + 1)?;
    let w = sample_disorder(&full, &params.distribution, seed, index)?;
    lengths
        .iter()
        .map(|&n| {
            let (sub, map) = full.sub_box(&[0], &[n + 1])?;
            let sys = build_system(&sub, params, kind, w.restrict(&map), opts)?;
            let k = sys.hamiltonians.len() as f64;
            let mut total = 0.0;
            for h in &sys.hamiltonians {
                let tr = riccati_diagonal(&h.diagonal(), z)?;
                total += (s * tr.log_end_to_end()).exp() / k;
            }
            Ok(total)
        })
        .collect()
}

fn check_moment_inputs(z: Complex64, s: f64, lengths: &[usize]) -> Result<()> {
    check_z(z)?;
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid("s", "must lie in [0, 1)"));
    }
    if lengths.is_empty() || lengths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("lengths", "must be non-empty and strictly increasing"));
    }
    Ok(())
}

pub fn moment_gen(
    params: &ModelParams,
    kind: ModelKind,
    z: Complex64,
    s: f64,
    lengths: &[usize],
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<MomentGenEstimate> {
    check_moment_inputs(z, s, lengths)?;
    if lengths.len() < 2 {
        return Err(Error::invalid("lengths", "a slope needs at least two lengths"));
    }
    let out = run_samples(sampling, |idx| {
        end_to_end_moments(params, kind, z, s, lengths, sampling.seed, idx, opts)
    })?;
    let k = lengths.len();
    let means: Vec<f64> = (0..k)
        .map(|j| mean_stderr(&out.results.iter().map(|r| r[j]).collect::<Vec<_>>()).0)
        .collect();
    let a_n: Vec<f64> = means.iter().map(|m| m.ln()).collect();
    let a_stderr: Vec<f64> = (0..k)
        .map(|j| {
            let col: Vec<f64> = out.results.iter().map(|r| r[j] / means[j]).collect();
            mean_stderr(&col).1
        })
        .collect();
    let xs: Vec<f64> = lengths.iter().map(|&n| n as f64).collect();
    let fit = line_fit(&xs, &a_n);
    // delta method: the slope is linear in a_n, a_n is linear in the sample mean to first order
    let weights = slope_weights(&xs);
    let influence: Vec<f64> = out
        .results
        .iter()
        .map(|r| (0..k).map(|j| weights[j] * r[j] / means[j]).sum())
        .collect();
    let phi_stderr = mean_stderr(&influence).1;
    let residuals = xs.iter().zip(&a_n).map(|(x, a)| a - fit.slope * x).collect();
    Ok(MomentGenEstimate {
        s,
        z,
        lengths: lengths.to_vec(),
        a_n,
        a_stderr,
        phi: fit.slope,
        phi_stderr,
        intercept: fit.intercept,
        residuals,
        n_effective: out.results.len(),
        failures: out.failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecouplingTriple {
    pub n: usize,
    pub m: usize,
    pub r: usize,
}

/// Default multiplier in the separation schedule `r = ⌈δ ln max(n, m)⌉`.
pub const DEFAULT_DELTA: f64 = 2.0;

pub fn r_schedule(n: usize, m: usize, delta: f64) -> usize {
    (delta * (n.max(m) as f64).ln()).ceil().max(0.0) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingEstimate {
    pub triple: DecouplingTriple,
    /// `E|G(0,n+m+r)|^s / (E|G(0,n)|^s E|G(0,m)|^s)`
    pub c_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub numerator: f64,
    pub denominators: (f64, f64),
    pub failures: usize,
}

/// Bootstrap replicates for the decoupling interval.
pub const BOOTSTRAP_REPS: usize = 1000;

/// The numerator and each denominator use their own sub-ensemble.
pub fn decoupling_audit(
    params: &ModelParams,
    kind: ModelKind,
    z: Complex64,
    s: f64,
    triples: &[DecouplingTriple],
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<Vec<DecouplingEstimate>> {
    check_z(z)?;
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid("s", "must lie in [0, 1)"));
    }
    triples
        .iter()
        .enumerate()
        .map(|(t, tr)| {
            if tr.n == 0 || tr.m == 0 {
                return Err(Error::invalid("triples", "n and m must be positive"));
            }
            let lengths = [tr.n + tr.m + tr.r, tr.n, tr.m];
            let mut groups: Vec<Vec<f64>> = Vec::with_capacity(3);
            let mut failures = 0;
            for (j, &len) in lengths.iter().enumerate() {
                let sub = Sampling {
                    seed: mix_seed(sampling.seed, (3 * t + j) as u64),
                    ..*sampling
                };
                let out = run_samples(&sub, |idx| {
                    Ok(end_to_end_moments(params, kind, z, s, &[len], sub.seed, idx, opts)?[0])
                })?;
                failures += out.failures;
                groups.push(out.results);
            }
            let ratio = |g: &[Vec<f64>]| {
                let m = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
                m(&g[0]) / (m(&g[1]) * m(&g[2]))
            };
            let c_hat = ratio(&groups);
            let refs: Vec<&[f64]> = groups.iter().map(|g| g.as_slice()).collect();
            let (ci_low, ci_high) = bootstrap_ci(
                &refs,
                BOOTSTRAP_REPS,
                0.95,
                mix_seed(sampling.seed, 0xB00 + t as u64),
                ratio,
            );
            let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
            Ok(DecouplingEstimate {
                triple: *tr,
                c_hat,
                ci_low,
                ci_high,
                numerator: mean(&groups[0]),
                denominators: (mean(&groups[1]), mean(&groups[2])),
                failures,
            })
        })
        .collect()
}
