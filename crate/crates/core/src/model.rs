//! Lattice boxes, model parameters, disorder sampling and Hamiltonian assembly.
//!
//! Hamiltonians are built with the restriction convention `1_Λ H 1_Λ`: the
//! on-site term `2d` of `-Δ` is kept at every site (boundary sites included)
//! and only hoppings leaving the box are dropped. No periodic wraparound.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite rectangular subset of `Z^d` with a row-major site enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    extents: Vec<usize>,
}

impl LatticeBox {
    pub fn new(dim: usize, extents: &[usize]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "dimension must be at least 1"));
        }
        if extents.len() != dim {
            return Err(Error::invalid(
                "extents",
                format!("expected {dim} extents, got {}", extents.len()),
            ));
        }
        if let Some(i) = extents.iter().position(|&e| e == 0) {
            return Err(Error::invalid(
                "extents",
                format!("extent along axis {i} must be positive"),
            ));
        }
        Ok(LatticeBox {
            extents: extents.to_vec(),
        })
    }

    /// One-dimensional chain `{0, .., len-1}`.
    pub fn chain(len: usize) -> Result<Self> {
        Self::new(1, &[len])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Coordinates of the site with enumeration index `site`. The last axis varies fastest.
    pub fn coords(&self, site: usize) -> Vec<usize> {
        debug_assert!(site < self.len());
        let mut rem = site;
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = rem % self.extents[axis];
            rem /= self.extents[axis];
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.dim() {
            return None;
        }
        let mut idx = 0;
        for (c, e) in coords.iter().zip(&self.extents) {
            if c >= e {
                return None;
            }
            idx = idx * e + c;
        }
        Some(idx)
    }

    /// ℓ¹ distance between two sites.
    pub fn dist(&self, a: usize, b: usize) -> usize {
        self.coords(a)
            .iter()
            .zip(self.coords(b))
            .map(|(x, y)| x.abs_diff(y))
            .sum()
    }

    /// Nearest neighbours of `site` inside the box.
    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let c = self.coords(site);
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            let mut n = c.clone();
            if c[axis] > 0 {
                n[axis] = c[axis] - 1;
                out.push(self.index(&n).expect("inside box"));
            }
            if c[axis] + 1 < self.extents[axis] {
                n[axis] = c[axis] + 1;
                out.push(self.index(&n).expect("inside box"));
            }
        }
        out
    }

    /// Sub-box with lower corner `origin` and the given extents, together with
    /// the map from sub-box enumeration to the enumeration of `self`.
    pub fn sub_box(&self, origin: &[usize], extents: &[usize]) -> Result<(LatticeBox, Vec<usize>)> {
        let sub = LatticeBox::new(self.dim(), extents)?;
        if origin.len() != self.dim() {
            return Err(Error::invalid("origin", "dimension mismatch"));
        }
        for axis in 0..self.dim() {
            if origin[axis] + extents[axis] > self.extents[axis] {
                return Err(Error::invalid(
                    "extents",
                    format!("sub-box leaves the parent box along axis {axis}"),
                ));
            }
        }
        let map = (0..sub.len())
            .map(|s| {
                let c: Vec<usize> = sub
                    .coords(s)
                    .iter()
                    .zip(origin)
                    .map(|(x, o)| x + o)
                    .collect();
                self.index(&c).expect("inside parent")
            })
            .collect();
        Ok((sub, map))
    }
}

/// Single-site density of the i.i.d. disorder variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DisorderDistribution {
    Gaussian { sigma: f64 },
    Cauchy { gamma: f64 },
    /// Two-sided exponential with the given scale.
    Laplace { scale: f64 },
}

impl Default for DisorderDistribution {
    fn default() -> Self {
        DisorderDistribution::Gaussian { sigma: 1.0 }
    }
}

impl DisorderDistribution {
    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            DisorderDistribution::Gaussian { sigma } => ("distribution.sigma", sigma),
            DisorderDistribution::Cauchy { gamma } => ("distribution.gamma", gamma),
            DisorderDistribution::Laplace { scale } => ("distribution.scale", scale),
        };
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(name, format!("must be positive and finite, got {v}")));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DisorderDistribution::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            DisorderDistribution::Cauchy { gamma } => {
                let u: f64 = rng.random::<f64>();
                gamma * (PI * (u - 0.5)).tan()
            }
            DisorderDistribution::Laplace { scale } => {
                // inverse CDF on (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
        }
    }

    /// Probability density at `x`.
    pub fn density(&self, x: f64) -> f64 {
        match *self {
            DisorderDistribution::Gaussian { sigma } => {
                (-(x * x) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt())
            }
            DisorderDistribution::Cauchy { gamma } => gamma / (PI * (gamma * gamma + x * x)),
            DisorderDistribution::Laplace { scale } => (-x.abs() / scale).exp() / (2.0 * scale),
        }
    }
}

/// Physical and numerical parameters of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// disorder strength λ
    pub lambda: f64,
    /// interaction strength g
    pub g: f64,
    /// inverse temperature β
    pub beta: f64,
    /// chemical potential κ
    pub kappa: f64,
    /// Combes–Thomas rate ν
    pub nu: f64,
    /// strip half-width η; defaults to π/(2β)
    pub eta: f64,
    pub distribution: DisorderDistribution,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::new(1.0, 0.0, 1.0, 2.0, 0.1, DisorderDistribution::default())
    }
}

impl ModelParams {
    /// Parameters with η set to π/(2β).
    pub fn new(
        lambda: f64,
        g: f64,
        beta: f64,
        kappa: f64,
        nu: f64,
        distribution: DisorderDistribution,
    ) -> Self {
        ModelParams {
            lambda,
            g,
            beta,
            kappa,
            nu,
            eta: PI / (2.0 * beta),
            distribution,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.g = g;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self.eta = PI / (2.0 * beta);
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn with_distribution(mut self, distribution: DisorderDistribution) -> Self {
        self.distribution = distribution;
        self
    }

    /// Largest strip half-width on which the Fermi–Dirac function is bounded by one.
    pub fn max_eta(&self) -> f64 {
        PI / (2.0 * self.beta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be positive, got {}", self.beta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(
                "lambda",
                format!("must be nonnegative, got {}", self.lambda),
            ));
        }
        if !self.g.is_finite() {
            return Err(Error::invalid("g", "must be finite"));
        }
        if !self.kappa.is_finite() {
            return Err(Error::invalid("kappa", "must be finite"));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(Error::invalid("nu", format!("must be positive, got {}", self.nu)));
        }
        if !(self.eta > 0.0 && self.eta <= self.max_eta() * (1.0 + 1e-12)) {
            return Err(Error::invalid(
                "eta",
                format!("must lie in (0, π/(2β)] = (0, {}], got {}", self.max_eta(), self.eta),
            ));
        }
        self.distribution.validate()
    }
}

/// One realisation `{ω(n)}` of the disorder on a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderField {
    pub values: Vec<f64>,
    pub seed: u64,
    pub sample_index: u64,
}

impl DisorderField {
    /// Field with explicitly given values (seed and index recorded as zero).
    pub fn from_values(values: Vec<f64>) -> Self {
        DisorderField {
            values,
            seed: 0,
            sample_index: 0,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_values(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy with `ω(site)` replaced by `value`.
    pub fn resampled(&self, site: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.values[site] = value;
        out
    }

    /// Restriction to a sub-box through the enumeration map returned by [`LatticeBox::sub_box`].
    pub fn restrict(&self, map: &[usize]) -> Self {
        DisorderField {
            values: map.iter().map(|&i| self.values[i]).collect(),
            seed: self.seed,
            sample_index: self.sample_index,
        }
    }
}

/// splitmix64 finaliser, used to derive independent master seeds from tags.
pub fn mix_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random stream for one ensemble member: the ChaCha key comes from the master
/// seed and the stream id is the sample index, so draws do not depend on the
/// order in which samples are processed.
pub fn sample_rng(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

pub fn sample_disorder(
    lattice: &LatticeBox,
    distribution: &DisorderDistribution,
    seed: u64,
    sample_index: u64,
) -> Result<DisorderField> {
    distribution.validate()?;
    let mut rng = sample_rng(seed, sample_index);
    let values = (0..lattice.len()).map(|_| distribution.sample(&mut rng)).collect();
    Ok(DisorderField {
        values,
        seed,
        sample_index,
    })
}

/// Dense real-symmetric matrix of `H = -Δ + λω + gV` restricted to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub matrix: DMatrix<f64>,
}

impl HamiltonianMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Max |H - Hᵀ|.
    pub fn hermiticity_residual(&self) -> f64 {
        let m = &self.matrix;
        let mut r: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..i {
                r = r.max((m[(i, j)] - m[(j, i)]).abs());
            }
        }
        r
    }

    /// Diagonal entries `H(n,n)`.
    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().copied().collect()
    }
}

/// Assembles `H = H_0 + λω + gV` on the box, with `H_0 = -Δ` (diagonal `2d`,
/// hopping `-1` between nearest neighbours inside the box).
pub fn assemble_hamiltonian(
    lattice: &LatticeBox,
    params: &ModelParams,
    disorder: &DisorderField,
    potential: Option<&[f64]>,
) -> Result<HamiltonianMatrix> {
    let n = lattice.len();
    if disorder.len() != n {
        return Err(Error::BoxMismatch {
            expected: n,
            got: disorder.len(),
        });
    }
    if let Some(v) = potential {
        if v.len() != n {
            return Err(Error::BoxMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    let onsite = 2.0 * lattice.dim() as f64;
    let mut h = DMatrix::zeros(n, n);
    for site in 0..n {
        let v = potential.map_or(0.0, |v| v[site]);
        h[(site, site)] = onsite + params.lambda * disorder.values[site] + params.g * v;
        for nb in lattice.neighbors(site) {
            h[(site, nb)] = -1.0;
        }
    }
    Ok(HamiltonianMatrix { matrix: h })
}

/// Combes–Thomas admissibility of the hopping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoppingAudit {
    /// ζ(ν) = sup_m Σ_n |H_0(m,n)| (e^{ν|m-n|} - 1)
    pub zeta: f64,
    pub admissible: bool,
}

/// ζ(ν) for the nearest-neighbour Laplacian on `Z^d` (its bulk value `2d(e^ν - 1)`,
/// which dominates every restriction) and whether ζ(ν) < η/2.
pub fn hopping_decay_audit(lattice: &LatticeBox, params: &ModelParams) -> HoppingAudit {
    let zeta = 2.0 * lattice.dim() as f64 * params.nu.exp_m1();
    HoppingAudit {
        zeta,
        admissible: zeta < params.eta / 2.0,
    }
}
