//! Localization observables on finite boxes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{columnwise_mean_stderr, run_samples, sample_system, ModelKind, Sampling};
use crate::error::{Error, Result};
use crate::model::{hopping_decay_audit, LatticeBox, ModelParams};
use crate::scf::ScfOptions;
use crate::spectral::{eig, eig_matrix, green_column, SpectralDecomposition};
use crate::stats::line_fit;

/// Energy window `lo <= E < hi`; a missing bound is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Interval {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl Interval {
    pub fn full() -> Self {
        Interval { lo: None, hi: None }
    }

    pub fn new(lo: f64, hi: f64) -> Self {
        Interval {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn below(hi: f64) -> Self {
        Interval { lo: None, hi: Some(hi) }
    }

    pub fn contains(&self, e: f64) -> bool {
        self.lo.is_none_or(|lo| e >= lo) && self.hi.is_none_or(|hi| e < hi)
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        let lo_ok = match (self.lo, other.lo) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a >= b,
        };
        let hi_ok = match (self.hi, other.hi) {
            (_, None) => true,
            (None, Some(_)) => false,
            (Some(a), Some(b)) => a <= b,
        };
        lo_ok && hi_ok
    }
}

/// `Q_I(m,n) = Σ_{E_k ∈ I} |ψ_k(m) ψ_k(n)|`.
pub fn correlator(spec: &SpectralDecomposition, interval: &Interval, m: usize, n: usize) -> f64 {
    let w = &spec.eigenvectors;
    spec.eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &e)| interval.contains(e))
        .map(|(k, _)| (w[(m, k)] * w[(n, k)]).abs())
        .sum()
}

/// Sum over spin components of [`correlator`].
pub fn correlator_components(specs: &[SpectralDecomposition], interval: &Interval, m: usize, n: usize) -> f64 {
    specs.iter().map(|s| correlator(s, interval, m, n)).sum()
}

/// Ensemble estimate per distance from the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceProfile {
    pub origin: usize,
    pub distances: Vec<usize>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_effective: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProfile {
    pub z: Complex64,
    pub s: f64,
    pub profile: DistanceProfile,
}

/// Sites grouped by `dist(origin, ·)`, distance ascending.
fn shells(lattice: &LatticeBox, origin: usize) -> Vec<Vec<usize>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    for site in 0..lattice.len() {
        let r = lattice.dist(origin, site);
        if out.len() <= r {
            out.resize(r + 1, Vec::new());
        }
        out[r].push(site);
    }
    out
}

fn shell_average(shells: &[Vec<usize>], values: impl Fn(usize) -> f64) -> Vec<f64> {
    shells
        .iter()
        .map(|sh| sh.iter().map(|&i| values(i)).sum::<f64>() / sh.len() as f64)
        .collect()
}

fn check_origin(lattice: &LatticeBox, origin: usize) -> Result<()> {
    if origin >= lattice.len() {
        return Err(Error::invalid("origin", "outside the box"));
    }
    Ok(())
}

/// `E|G(0,n;z)|^s` per distance, averaged over sites at equal distance and over
/// spin components for the Hubbard pair.
#[allow(clippy::too_many_arguments)]
pub fn fractional_moment_profile(
    lattice: &LatticeBox,
    params: &ModelParams,
    kind: ModelKind,
    z: Complex64,
    s: f64,
    origin: usize,
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<MomentProfile> {
    if !(z.im > 0.0) {
        return Err(Error::NotInUpperHalfPlane { im: z.im });
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid("s", "must lie in [0, 1)"));
    }
    check_origin(lattice, origin)?;
    let sh = shells(lattice, origin);
    let out = run_samples(sampling, |idx| {
        let sys = sample_system(lattice, params, kind, sampling.seed, idx, opts)?;
        let mut acc = vec![0.0; sh.len()];
        for h in &sys.hamiltonians {
            let col = green_column(&h.matrix, origin, z)?;
            let row = shell_average(&sh, |i| col[i].norm().powf(s));
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r / sys.hamiltonians.len() as f64;
            }
        }
        Ok(acc)
    })?;
    let (mean, stderr) = columnwise_mean_stderr(&out.results);
    Ok(MomentProfile {
        z,
        s,
        profile: DistanceProfile {
            origin,
            distances: (0..sh.len()).collect(),
            mean,
            stderr,
            n_effective: out.results.len(),
            failures: out.failures,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// decay rate, minus the fitted slope
    pub mu: f64,
    pub log_prefactor: f64,
    pub r2: f64,
    pub window: (usize, usize),
    pub slope_stderr: f64,
}

/// Least squares of `log value` against distance over `window` (inclusive).
pub fn decay_fit(distances: &[usize], values: &[f64], window: (usize, usize)) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = distances
        .iter()
        .zip(values)
        .filter(|(&d, _)| d >= window.0 && d <= window.1)
        .map(|(&d, &v)| (d as f64, v))
        .collect();
    if pts.len() < 4 {
        return Err(Error::invalid("window", "needs at least 4 distances"));
    }
    if pts.iter().any(|&(_, v)| !(v > 0.0)) {
        return Err(Error::invalid("window", "non-positive estimate inside the fit window"));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let f = line_fit(&xs, &ys);
    Ok(DecayFit {
        mu: -f.slope,
        log_prefactor: f.intercept,
        r2: f.r2,
        window,
        slope_stderr: f.slope_stderr,
    })
}

impl DistanceProfile {
    pub fn decay_fit(&self, window: (usize, usize)) -> Result<DecayFit> {
        decay_fit(&self.distances, &self.mean, window)
    }
}

/// `E[Q_I(origin, n)]` per distance; spin components are summed.
pub fn correlator_ensemble(
    lattice: &LatticeBox,
    params: &ModelParams,
    kind: ModelKind,
    interval: &Interval,
    origin: usize,
    sampling: &Sampling,
    opts: &ScfOptions,
) -> Result<DistanceProfile> {
    check_origin(lattice, origin)?;
    let sh = shells(lattice, origin);
    let out = run_samples(sampling, |idx| {
        let sys = sample_system(lattice, params, kind, sampling.seed, idx, opts)?;
        let specs = sys.hamiltonians.iter().map(eig).collect::<Result<Vec<_>>>()?;
        Ok(shell_average(&sh, |n| correlator_components(&specs, interval, origin, n)))
    })?;
    let (mean, stderr) = columnwise_mean_stderr(&out.results);
    Ok(DistanceProfile {
        origin,
        distances: (0..sh.len()).collect(),
        mean,
        stderr,
        n_effective: out.results.len(),
        failures: out.failures,
    })
}

/// `max_{m≠n, t} |G(m,n;t+iη)| (η/2) e^{ν|m-n|}`; at most 1 when the deterministic bound holds.
pub fn combes_thomas_audit(
    h: &DMatrix<f64>,
    lattice: &LatticeBox,
    params: &ModelParams,
    t_grid: &[f64],
) -> Result<f64> {
    let audit = hopping_decay_audit(lattice, params);
    if !audit.admissible {
        return Err(Error::invalid(
            "nu",
            format!("hopping decay ζ = {} is not below η/2 = {}", audit.zeta, params.eta / 2.0),
        ));
    }
    if h.nrows() != lattice.len() {
        return Err(Error::BoxMismatch {
            expected: lattice.len(),
            got: h.nrows(),
        });
    }
    let spec = eig_matrix(h)?;
    let n = lattice.len();
    let eta = params.eta;
    let w = &spec.eigenvectors;
    let mut stat: f64 = 0.0;
    for &t in t_grid {
        let z = Complex64::new(t, eta);
        let inv: Vec<Complex64> = spec.eigenvalues.iter().map(|&e| (e - z).inv()).collect();
        for a in 0..n {
            for b in (a + 1)..n {
                let g: Complex64 = (0..n).map(|k| inv[k] * (w[(a, k)] * w[(b, k)])).sum();
                let weight = (params.nu * lattice.dist(a, b) as f64).exp();
                stat = stat.max(g.norm() * eta / 2.0 * weight);
            }
        }
    }
    Ok(stat)
}
