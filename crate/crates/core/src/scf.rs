//! Self-consistent effective potentials.
//!
//! Single component: `V = Φ(V)`, `Φ(V)(n) = ⟨n|F(H_0 + λω + gV)|n⟩`.
//! Two-spin Hubbard: `(V↑, V↓) = (diag F(H_0 + λω + gV↓), diag F(H_0 + λω + gV↑))`.
//!
//! Iteration is plain Picard (no mixing or acceleration), so the recorded
//! residual ratios are the contraction rates of the map itself.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{assemble_hamiltonian, DisorderField, LatticeBox, ModelParams};
use crate::spectral::{eig, matrix_function_diag, SpectralDecomposition};

/// `‖F‖_∞` on the strip of half-width `π/(2β)`.
pub const FERMI_SUP_NORM: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScfOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ScfOptions {
    fn default() -> Self {
        ScfOptions {
            tol: 1e-10,
            max_iter: 500,
        }
    }
}

impl ScfOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Potential {
    Single { v: Vec<f64> },
    Hubbard { up: Vec<f64>, down: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectivePotential {
    pub potential: Potential,
    pub iterations: usize,
    /// `‖V_{k+1} - V_k‖_∞` per iteration.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl EffectivePotential {
    /// The single-component potential, or `V↑` for the Hubbard pair.
    pub fn values(&self) -> &[f64] {
        match &self.potential {
            Potential::Single { v } => v,
            Potential::Hubbard { up, .. } => up,
        }
    }

    pub fn pair(&self) -> Option<(&[f64], &[f64])> {
        match &self.potential {
            Potential::Single { .. } => None,
            Potential::Hubbard { up, down } => Some((up, down)),
        }
    }

    /// Consecutive residual ratios `r_{k+1} / r_k`.
    pub fn measured_rates(&self) -> Vec<f64> {
        self.residual_history
            .windows(2)
            .filter(|w| w[0] > 0.0)
            .map(|w| w[1] / w[0])
            .collect()
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub g_threshold: f64,
    pub theoretical_rate: f64,
    pub measured_rates: Vec<f64>,
}

impl ContractionReport {
    /// Every measured rate is at most `theoretical_rate + slack`.
    pub fn holds(&self, slack: f64) -> bool {
        self.measured_rates
            .iter()
            .all(|&r| r <= self.theoretical_rate + slack)
    }

    pub fn with_measured(mut self, potential: &EffectivePotential) -> Self {
        self.measured_rates = potential.measured_rates();
        self
    }
}

fn threshold(params: &ModelParams, dim: usize, factor: f64) -> ContractionReport {
    let g_threshold =
        params.eta * (-(-params.nu).exp_m1()).powi(dim as i32) / (factor * SQRT_2 * FERMI_SUP_NORM);
    ContractionReport {
        g_threshold,
        theoretical_rate: params.g.abs() / g_threshold,
        measured_rates: Vec::new(),
    }
}

/// `g_d = η(1 - e^{-ν})^d / (72√2 ‖F‖_∞)` and the contraction factor `|g| / g_d`.
pub fn contraction_bound(params: &ModelParams, dim: usize) -> ContractionReport {
    threshold(params, dim, 72.0)
}

/// Two-component threshold, with `144√2` in place of `72√2`.
pub fn contraction_bound_hubbard(params: &ModelParams, dim: usize) -> ContractionReport {
    threshold(params, dim, 144.0)
}

/// Diagonal of `F(H_0 + λω + gV)` with the decomposition it came from.
pub fn fermi_diagonal(
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    potential: Option<&[f64]>,
) -> Result<(Vec<f64>, SpectralDecomposition)> {
    let h = assemble_hamiltonian(lattice, params, disorder, potential)?;
    let spec = eig(&h)?;
    let diag = matrix_function_diag(&spec, params.beta, params.kappa);
    Ok((diag, spec))
}

/// The single-component map `Φ`.
pub fn effective_map(
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    v: &[f64],
) -> Result<Vec<f64>> {
    Ok(fermi_diagonal(lattice, params, disorder, Some(v))?.0)
}

pub(crate) fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Picard iteration `v ← map(v)` until the sup-norm step drops below `tol`.
pub fn picard<F>(mut map: F, v0: Vec<f64>, opts: &ScfOptions) -> Result<(Vec<f64>, Vec<f64>, bool)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut v = v0;
    let mut history = Vec::new();
    for _ in 0..opts.max_iter {
        let next = map(&v)?;
        let res = sup_diff(&next, &v);
        history.push(res);
        v = next;
        if res < opts.tol {
            return Ok((v, history, true));
        }
    }
    Ok((v, history, false))
}

fn initial_guess(n: usize, v0: Option<&[f64]>) -> Result<Vec<f64>> {
    match v0 {
        Some(v) if v.len() != n => Err(Error::BoxMismatch {
            expected: n,
            got: v.len(),
        }),
        Some(v) => Ok(v.to_vec()),
        None => Ok(vec![0.5; n]),
    }
}

fn warn_above(params: &ModelParams, report: &ContractionReport) {
    if params.g.abs() >= report.g_threshold {
        log::warn!(
            "|g| = {} is not below the contraction threshold {}; convergence is not guaranteed",
            params.g.abs(),
            report.g_threshold
        );
    }
}

/// Single-component self-consistent potential. Initial guess defaults to `1/2`.
pub fn scf_single(
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    v0: Option<&[f64]>,
    opts: &ScfOptions,
) -> Result<EffectivePotential> {
    params.validate()?;
    opts.validate()?;
    warn_above(params, &contraction_bound(params, lattice.dim()));
    let start = initial_guess(lattice.len(), v0)?;
    if params.g == 0.0 {
        // Φ does not depend on V
        let v = effective_map(lattice, params, disorder, &start)?;
        let res = sup_diff(&v, &start);
        return Ok(EffectivePotential {
            potential: Potential::Single { v },
            iterations: 1,
            residual_history: vec![res],
            converged: true,
        });
    }
    let (v, history, converged) =
        picard(|v| effective_map(lattice, params, disorder, v), start, opts)?;
    Ok(EffectivePotential {
        potential: Potential::Single { v },
        iterations: history.len(),
        residual_history: history,
        converged,
    })
}

/// Coupled two-spin fixed point from `(X0, Y0) = (V↑, V↓)` initial guesses.
pub fn scf_hubbard(
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    start: Option<(&[f64], &[f64])>,
    opts: &ScfOptions,
) -> Result<EffectivePotential> {
    params.validate()?;
    opts.validate()?;
    warn_above(params, &contraction_bound_hubbard(params, lattice.dim()));
    let n = lattice.len();
    let (x0, y0) = match start {
        Some((x, y)) => (initial_guess(n, Some(x))?, initial_guess(n, Some(y))?),
        None => (vec![0.5; n], vec![0.5; n]),
    };
    // stack (X, Y) into one vector so the generic driver can be reused
    let stacked: Vec<f64> = x0.into_iter().chain(y0).collect();
    let map = |xy: &[f64]| -> Result<Vec<f64>> {
        let (x, y) = xy.split_at(n);
        let up = effective_map(lattice, params, disorder, y)?;
        let down = effective_map(lattice, params, disorder, x)?;
        Ok(up.into_iter().chain(down).collect())
    };
    let (xy, history, converged) = picard(map, stacked, opts)?;
    let (up, down) = xy.split_at(n);
    Ok(EffectivePotential {
        potential: Potential::Hubbard {
            up: up.to_vec(),
            down: down.to_vec(),
        },
        iterations: history.len(),
        residual_history: history,
        converged,
    })
}

/// `V^{Λ_R}(m)` for nested boxes around a centre site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxConvergence {
    pub radii: Vec<usize>,
    pub values: Vec<f64>,
    /// `|V^{Λ_{R_{k+1}}}(m) - V^{Λ_{R_k}}(m)|`
    pub differences: Vec<f64>,
}

impl BoxConvergence {
    pub fn differences_decay(&self) -> bool {
        self.differences.windows(2).all(|w| w[1] <= w[0])
    }
}

/// Solves the single-component SCF on the cubes `[m - R, m + R]^d` cut out of
/// `outer` (disorder restricted from the outer field) and records the value at `m`.
pub fn box_convergence_study(
    outer: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    center: usize,
    radii: &[usize],
    opts: &ScfOptions,
) -> Result<BoxConvergence> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radii", "must be strictly increasing"));
    }
    let c = outer.coords(center);
    let mut values = Vec::with_capacity(radii.len());
    for &r in radii {
        if c.iter().any(|&x| x < r) {
            return Err(Error::invalid("radii", format!("radius {r} leaves the outer box")));
        }
        let origin: Vec<usize> = c.iter().map(|&x| x - r).collect();
        let ext = vec![2 * r + 1; outer.dim()];
        let (sub, map) = outer.sub_box(&origin, &ext)?;
        let local = disorder.restrict(&map);
        let sol = scf_single(&sub, params, &local, None, opts)?;
        if !sol.converged {
            return Err(Error::NotConverged {
                what: format!("SCF on box of radius {r}"),
                iterations: sol.iterations,
                residual: sol.final_residual(),
            });
        }
        let mid = sub.index(&vec![r; outer.dim()]).expect("centre inside");
        values.push(sol.values()[mid]);
    }
    let differences = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    Ok(BoxConvergence {
        radii: radii.to_vec(),
        values,
        differences,
    })
}
