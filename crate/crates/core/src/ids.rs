//! Integrated density of states, Wegner ratios and empirical Hölder moduli.

use serde::{Deserialize, Serialize};

use crate::ensemble::{columnwise_mean_stderr, run_samples, sample_system, ModelKind, Sampling};
use crate::error::{Error, Result};
use crate::model::{mix_seed, LatticeBox, ModelParams};
use crate::scf::ScfOptions;
use crate::spectral::eig;
use crate::stats::{bootstrap_ci, line_fit, mean_stderr};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    /// `E[#{E_k < E}] / |Λ|`, averaged over spin components
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// per spin component means (one entry unless the model is the spin pair)
    pub components: Vec<Vec<f64>>,
    pub box_sites: usize,
    pub n_effective: usize,
    pub failures: usize,
    /// per sample counting function at `energies`
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

impl IdsCurve {
    /// A deterministic curve `N(E)` sampled on `energies`, stored as a single sample.
    pub fn from_function(energies: &[f64], n: impl Fn(f64) -> f64) -> Self {
        let row: Vec<f64> = energies.iter().map(|&e| n(e)).collect();
        IdsCurve {
            energies: energies.to_vec(),
            mean: row.clone(),
            stderr: vec![0.0; energies.len()],
            components: vec![row.clone()],
            box_sites: 0,
            n_effective: 1,
            failures: 0,
            samples: vec![row],
        }
    }

    pub fn in_range(&self) -> bool {
        self.mean.iter().all(|&x| (0.0..=1.0).contains(&x))
            && self.components.iter().flatten().all(|&x| (0.0..=1.0).contains(&x))
    }

    /// Non-decreasing in energy within twice the combined standard error of neighbours.
    pub fn is_monotone(&self) -> bool {
        let mut order: Vec<usize> = (0..self.energies.len()).collect();
        order.sort_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
        order.windows(2).all(|w| {
            let tol = 2.0 * (self.stderr[w[0]].powi(2) + self.stderr[w[1]].powi(2)).sqrt();
            self.mean[w[1]] >= self.mean[w[0]] - tol
        })
    }

    fn position(&self, e: f64) -> Result<usize> {
        self.energies
            .iter()
            .position(|&x| (x - e).abs() <= 1e-12 * (1.0 + e.abs()))
            .ok_or_else(|| Error::invalid("energies", format!("energy {e} is not on the curve grid")))
    }
}

fn counting(eigenvalues: &[f64], e: f64, sites: usize) -> f64 {
    eigenvalues.iter().filter(|&&x| x < e).count() as f64 / sites as f64
}

pub fn ids_curve(
    lattice: &LatticeBox,
    params: &ModelParams,
    kind: ModelKind,
    energies: &[f64],
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<IdsCurve> {
    if energies.is_empty() {
        return Err(Error::invalid("energies", "grid is empty"));
    }
    let sites = lattice.len();
    let out = run_samples(sampling, |idx| {
        let sys = sample_system(lattice, params, kind, sampling.seed, idx, opts)?;
        sys.hamiltonians
            .iter()
            .map(|h| {
                let spec = eig(h)?;
                Ok(energies
                    .iter()
                    .map(|&e| counting(&spec.eigenvalues, e, sites))
                    .collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<Vec<f64>>>>()
    })?;
    let n_comp = out.results.first().map_or(1, Vec::len);
    let components: Vec<Vec<f64>> = (0..n_comp)
        .map(|c| {
            let rows: Vec<Vec<f64>> = out.results.iter().map(|r| r[c].clone()).collect();
            columnwise_mean_stderr(&rows).0
        })
        .collect();
    let samples: Vec<Vec<f64>> = out
        .results
        .iter()
        .map(|r| {
            (0..energies.len())
                .map(|j| r.iter().map(|c| c[j]).sum::<f64>() / r.len() as f64)
                .collect()
        })
        .collect();
    let (mean, stderr) = columnwise_mean_stderr(&samples);
    Ok(IdsCurve {
        energies: energies.to_vec(),
        mean,
        stderr,
        components,
        box_sites: sites,
        n_effective: samples.len(),
        failures: out.failures,
        samples,
    })
}

/// Box-doubling consistency: the pointwise maximum difference between two curves on
/// the same grid and the tolerance `2/√n + 2/|Λ|` of the smaller box.
pub fn box_doubling_check(small: &IdsCurve, large: &IdsCurve) -> Result<(f64, f64)> {
    if small.energies != large.energies {
        return Err(Error::invalid("energies", "curves must share the energy grid"));
    }
    let diff = small
        .mean
        .iter()
        .zip(&large.mean)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let n = small.n_effective.min(large.n_effective) as f64;
    let tol = 2.0 / n.sqrt() + 2.0 / small.box_sites as f64;
    Ok((diff, tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WegnerEstimate {
    /// `E[Tr P_Λ(I)] / (|I| |Λ|)`
    pub ratio: f64,
    pub stderr: f64,
    pub interval: (f64, f64),
    pub n_effective: usize,
    pub failures: usize,
}

/// Window `[lo, hi)`; eigenvalues of both spin components are averaged for the pair.
pub fn wegner_ratio(
    lattice: &LatticeBox,
    params: &ModelParams,
    kind: ModelKind,
    interval: (f64, f64),
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<WegnerEstimate> {
    let (lo, hi) = interval;
    if !(hi > lo) {
        return Err(Error::invalid("interval", "must have positive length"));
    }
    let sites = lattice.len() as f64;
    let out = run_samples(sampling, |idx| {
        let sys = sample_system(lattice, params, kind, sampling.seed, idx, opts)?;
        let mut total = 0.0;
        for h in &sys.hamiltonians {
            let spec = eig(h)?;
            let count = spec.eigenvalues.iter().filter(|&&e| e >= lo && e < hi).count();
            total += count as f64 / sys.hamiltonians.len() as f64;
        }
        Ok(total / ((hi - lo) * sites))
    })?;
    let (ratio, stderr) = mean_stderr(&out.results);
    Ok(WegnerEstimate {
        ratio,
        stderr,
        interval,
        n_effective: out.results.len(),
        failures: out.failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderVariable {
    #[serde(rename = "E")]
    Energy,
    Lambda,
    G,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderReport {
    pub variable: HolderVariable,
    /// `(δ, sup |ΔN|)`
    pub pairs: Vec<(f64, f64)>,
    pub alpha_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha_floor: f64,
}

impl HolderReport {
    /// `alpha_hat ≥ alpha_floor - (CI half width)`.
    pub fn passes(&self) -> bool {
        self.alpha_hat >= self.alpha_floor - (self.ci_high - self.ci_low) / 2.0
    }

    /// The confidence interval lies strictly above zero.
    pub fn excludes_zero(&self) -> bool {
        self.ci_low > 0.0
    }
}

/// Bootstrap replicates for Hölder intervals.
pub const HOLDER_BOOTSTRAP_REPS: usize = 1000;

fn loglog_slope(deltas: &[f64], moduli: &[f64]) -> f64 {
    let xs: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = moduli.iter().map(|m| m.ln()).collect();
    line_fit(&xs, &ys).slope
}

fn column_means(rows: &[Vec<f64>], cols: &[usize]) -> Vec<f64> {
    cols.iter()
        .map(|&c| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64)
        .collect()
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.len() < 3 {
        return Err(Error::invalid("deltas", "at least 3 offsets are needed"));
    }
    if deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::invalid("deltas", "offsets must be positive"));
    }
    Ok(())
}

fn finish(
    variable: HolderVariable,
    deltas: &[f64],
    moduli: Vec<f64>,
    alpha_floor: f64,
    ci: (f64, f64),
) -> Result<HolderReport> {
    if moduli.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::invalid("deltas", "a zero increment has no logarithm; widen the offsets"));
    }
    Ok(HolderReport {
        variable,
        alpha_hat: loglog_slope(deltas, &moduli),
        pairs: deltas.iter().copied().zip(moduli).collect(),
        ci_low: ci.0,
        ci_high: ci.1,
        alpha_floor,
    })
}

/// Energy modulus `sup_{E0} |N(E0 + δ) - N(E0)|` over `base_energies`; the curve grid must
/// contain every `E0` and `E0 + δ`. The interval resamples the curve's samples.
pub fn holder_energy(
    curve: &IdsCurve,
    base_energies: &[f64],
    deltas: &[f64],
    alpha_floor: f64,
    seed: u64,
) -> Result<HolderReport> {
    check_deltas(deltas)?;
    if base_energies.is_empty() {
        return Err(Error::invalid("base_energies", "no base energy given"));
    }
    let mut pairs_idx: Vec<Vec<(usize, usize)>> = Vec::new();
    for &d in deltas {
        pairs_idx.push(
            base_energies
                .iter()
                .map(|&e| Ok((curve.position(e)?, curve.position(e + d)?)))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let all: Vec<usize> = (0..curve.energies.len()).collect();
    let moduli_of = |mean: &[f64]| -> Vec<f64> {
        pairs_idx
            .iter()
            .map(|ps| ps.iter().map(|&(a, b)| (mean[b] - mean[a]).abs()).fold(0.0, f64::max))
            .collect()
    };
    let moduli = moduli_of(&curve.mean);
    let rows: Vec<f64> = (0..curve.samples.len()).map(|i| i as f64).collect();
    let ci = bootstrap_ci(&[&rows], HOLDER_BOOTSTRAP_REPS, 0.95, mix_seed(seed, 0x401d), |g| {
        let picked: Vec<Vec<f64>> = g[0].iter().map(|&i| curve.samples[i as usize].clone()).collect();
        let m = moduli_of(&column_means(&picked, &all));
        if m.iter().any(|&x| !(x > 0.0)) {
            return f64::NAN;
        }
        loglog_slope(deltas, &m)
    });
    finish(HolderVariable::Energy, deltas, moduli, alpha_floor, ci)
}

/// Parameter modulus `sup_E |N_{p+δ}(E) - N_p(E)|` from curves computed with common
/// random numbers (sample `i` of every curve uses the same disorder).
pub fn holder_parameter(
    variable: HolderVariable,
    base: &IdsCurve,
    perturbed: &[(f64, IdsCurve)],
    alpha_floor: f64,
    seed: u64,
) -> Result<HolderReport> {
    let deltas: Vec<f64> = perturbed.iter().map(|(d, _)| *d).collect();
    check_deltas(&deltas)?;
    for (_, c) in perturbed {
        if c.energies != base.energies || c.samples.len() != base.samples.len() {
            return Err(Error::invalid(
                "perturbed",
                "curves must share the energy grid and the sample set",
            ));
        }
    }
    let all: Vec<usize> = (0..base.energies.len()).collect();
    let sup = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let moduli: Vec<f64> = perturbed.iter().map(|(_, c)| sup(&c.mean, &base.mean)).collect();
    let rows: Vec<f64> = (0..base.samples.len()).map(|i| i as f64).collect();
    let ci = bootstrap_ci(&[&rows], HOLDER_BOOTSTRAP_REPS, 0.95, mix_seed(seed, 0x401e), |g| {
        let idx: Vec<usize> = g[0].iter().map(|&i| i as usize).collect();
        let pick = |c: &IdsCurve| {
            let rows: Vec<Vec<f64>> = idx.iter().map(|&i| c.samples[i].clone()).collect();
            column_means(&rows, &all)
        };
        let b = pick(base);
        let m: Vec<f64> = perturbed.iter().map(|(_, c)| sup(&pick(c), &b)).collect();
        if m.iter().any(|&x| !(x > 0.0)) {
            return f64::NAN;
        }
        loglog_slope(&deltas, &m)
    });
    finish(variable, &deltas, moduli, alpha_floor, ci)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn free(n: usize) -> (LatticeBox, ModelParams) {
        (LatticeBox::chain(n).unwrap(), ModelParams::default().with_lambda(0.0))
    }

    #[test]
    fn free_chain_values() {
        let (b, p) = free(128);
        let c = ids_curve(&b, &p, ModelKind::Anderson, &[-1.0, 1.0, 2.0, 5.0], &Sampling::new(1, 0), &ScfOptions::default())
            .unwrap();
        assert_eq!(c.mean[0], 0.0);
        assert!((c.mean[1] - 1.0 / 3.0).abs() < 0.02);
        assert!((c.mean[2] - 0.5).abs() <= 1.0 / 128.0);
        assert_eq!(c.mean[3], 1.0);
        assert!(c.in_range() && c.is_monotone());
    }

    #[test]
    fn hubbard_components_match_anderson_at_zero_coupling() {
        let b = LatticeBox::chain(12).unwrap();
        let p = ModelParams::default();
        let grid: Vec<f64> = (0..9).map(|i| i as f64 * 0.5).collect();
        let s = Sampling::new(5, 9);
        let a = ids_curve(&b, &p, ModelKind::Anderson, &grid, &s, &ScfOptions::default()).unwrap();
        let h = ids_curve(&b, &p, ModelKind::Hubbard, &grid, &s, &ScfOptions::default()).unwrap();
        assert_eq!(h.components.len(), 2);
        for comp in &h.components {
            for (x, y) in comp.iter().zip(&a.mean) {
                assert!((x - y).abs() <= 1.0 / 12.0 + 1e-15);
            }
        }
    }

    #[test]
    fn wegner_trivial_windows() {
        let b = LatticeBox::chain(10).unwrap();
        let p = ModelParams::default().with_lambda(0.1);
        let s = Sampling::new(4, 1);
        let all = wegner_ratio(&b, &p, ModelKind::Anderson, (-3.0, 7.0), &s, &ScfOptions::default()).unwrap();
        assert_abs_diff_eq!(all.ratio, 0.1, epsilon = 1e-15);
        let none = wegner_ratio(&b, &p, ModelKind::Anderson, (50.0, 51.0), &s, &ScfOptions::default()).unwrap();
        assert_eq!(none.ratio, 0.0);
        assert!(wegner_ratio(&b, &p, ModelKind::Anderson, (1.0, 1.0), &s, &ScfOptions::default()).is_err());
    }

    #[test]
    fn synthetic_holder() {
        let deltas = [0.1, 0.05, 0.025];
        let grid: Vec<f64> = (0..=400).map(|i| i as f64 / 400.0).collect();
        let base: Vec<f64> = grid.iter().copied().filter(|&e| e <= 0.5).collect();
        let lin = IdsCurve::from_function(&grid, |e| e);
        let r = holder_energy(&lin, &base, &deltas, 0.9, 0).unwrap();
        assert_abs_diff_eq!(r.alpha_hat, 1.0, epsilon = 1e-9);
        assert!(r.passes());
        let step = IdsCurve::from_function(&grid, |e| if e >= 0.3 { 1.0 } else { 0.0 });
        let r = holder_energy(&step, &base, &deltas, 0.0, 0).unwrap();
        assert_abs_diff_eq!(r.alpha_hat, 0.0, epsilon = 1e-12);
        assert!(holder_energy(&lin, &base, &deltas[..2], 0.0, 0).is_err());
    }

    #[test]
    fn free_band_edge_exponent() {
        let (b, p) = free(400);
        let deltas = [0.1, 0.05, 0.025];
        let grid = [0.0, 0.025, 0.05, 0.1];
        let c = ids_curve(&b, &p, ModelKind::Anderson, &grid, &Sampling::new(1, 0), &ScfOptions::default()).unwrap();
        let r = holder_energy(&c, &[0.0], &deltas, 0.4, 0).unwrap();
        assert!((r.alpha_hat - 0.5).abs() < 0.1, "{}", r.alpha_hat);
    }

    #[test]
    fn parameter_holder_runs() {
        let b = LatticeBox::chain(16).unwrap();
        let p = ModelParams::default();
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.2).collect();
        let s = Sampling::new(20, 4);
        let opts = ScfOptions::default();
        let base = ids_curve(&b, &p, ModelKind::Anderson, &grid, &s, &opts).unwrap();
        let perturbed: Vec<(f64, IdsCurve)> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&d| {
                let q = p.clone().with_lambda(1.0 + d);
                (d, ids_curve(&b, &q, ModelKind::Anderson, &grid, &s, &opts).unwrap())
            })
            .collect();
        let r = holder_parameter(HolderVariable::Lambda, &base, &perturbed, 0.0, 1).unwrap();
        assert!(r.alpha_hat.is_finite());
        assert!(r.ci_low <= r.alpha_hat && r.alpha_hat <= r.ci_high + 1e-12);
    }

    #[test]
    fn doubling_check() {
        let p = ModelParams::default();
        let grid: Vec<f64> = (0..=8).map(|i| i as f64 * 0.5).collect();
        let s = Sampling::new(30, 2);
        let opts = ScfOptions::default();
        let a = ids_curve(&LatticeBox::chain(64).unwrap(), &p, ModelKind::Anderson, &grid, &s, &opts).unwrap();
        let c = ids_curve(&LatticeBox::chain(128).unwrap(), &p, ModelKind::Anderson, &grid, &s, &opts).unwrap();
        let (diff, tol) = box_doubling_check(&a, &c).unwrap();
        assert!(diff < tol, "{diff} vs {tol}");
    }
}
