//! Experiment configuration: JSON document, default resolution and fingerprint.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ensemble::{ModelKind, Sampling};
use crate::error::{Error, Result};
use crate::ids::HolderVariable;
use crate::model::{DisorderDistribution, LatticeBox, ModelParams};
use crate::observables::Interval;
use crate::oned::{default_buffer, r_schedule, DecouplingTriple, DEFAULT_DELTA};
use crate::scf::{contraction_bound, ScfOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Scf,
    Moments,
    Correlators,
    Lyapunov,
    Momentgen,
    Decoupling,
    Ids,
    Wegner,
    Holder,
    Audits,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Scf => "scf",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Correlators => "correlators",
            ExperimentKind::Lyapunov => "lyapunov",
            ExperimentKind::Momentgen => "momentgen",
            ExperimentKind::Decoupling => "decoupling",
            ExperimentKind::Ids => "ids",
            ExperimentKind::Wegner => "wegner",
            ExperimentKind::Holder => "holder",
            ExperimentKind::Audits => "audits",
        }
    }

    /// Experiments on chains built internally rather than on the configured box.
    fn chain_only(self) -> bool {
        matches!(
            self,
            ExperimentKind::Lyapunov | ExperimentKind::Momentgen | ExperimentKind::Decoupling
        )
    }

    fn default_extent(self) -> usize {
        match self {
            ExperimentKind::Scf | ExperimentKind::Audits => 16,
            ExperimentKind::Moments => 64,
            ExperimentKind::Correlators => 48,
            _ => 32,
        }
    }

    fn default_samples(self) -> usize {
        match self {
            ExperimentKind::Scf => 1,
            ExperimentKind::Lyapunov => 20,
            _ => 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub extents: Vec<usize>,
}

impl BoxSpec {
    pub fn lattice(&self) -> Result<LatticeBox> {
        LatticeBox::new(self.extents.len(), &self.extents)
    }
}

/// Model parameters as written in a config; missing entries take library defaults
/// and `g_over_g1` expresses `g` in units of the contraction threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_over_g1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DisorderDistribution>,
}

impl ParamsSpec {
    pub fn from_params(p: &ModelParams) -> Self {
        ParamsSpec {
            lambda: Some(p.lambda),
            g: Some(p.g),
            g_over_g1: None,
            beta: Some(p.beta),
            kappa: Some(p.kappa),
            nu: Some(p.nu),
            eta: Some(p.eta),
            distribution: Some(p.distribution),
        }
    }

    /// Concrete parameters for a box of dimension `dim`.
    pub fn to_params(&self, dim: usize) -> Result<ModelParams> {
        let d = ModelParams::default();
        let mut p = ModelParams::new(
            self.lambda.unwrap_or(d.lambda),
            self.g.unwrap_or(d.g),
            self.beta.unwrap_or(d.beta),
            self.kappa.unwrap_or(d.kappa),
            self.nu.unwrap_or(d.nu),
            self.distribution.unwrap_or(d.distribution),
        );
        if let Some(eta) = self.eta {
            p.eta = eta;
        }
        if let Some(frac) = self.g_over_g1 {
            if self.g.is_some() {
                return Err(Error::invalid("params.g_over_g1", "give either g or g_over_g1, not both"));
            }
            p.g = frac * contraction_bound(&p, dim).g_threshold;
        }
        p.validate().map_err(|e| match e {
            Error::InvalidInput { field, reason } => Error::InvalidInput {
                field: format!("params.{field}"),
                reason,
            },
            other => other,
        })?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    pub seed: u64,
}

/// Experiment-specific options; only those relevant to the experiment are kept on resolution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    /// complex energy as `[re, im]`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Complex64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interval: Option<Interval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buffer: Option<usize>,
    /// couplings of a Lyapunov gap sweep; empty for a single estimate
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triples: Option<Vec<DecouplingTriple>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Wegner window `[lo, hi)`
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    /// disorder strengths of a Wegner sweep
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variable: Option<HolderVariable>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_energies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<BoxSpec>,
    #[serde(default)]
    pub params: ParamsSpec,
    #[serde(default)]
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub scf: ScfOptions,
    #[serde(default)]
    pub options: ExperimentOptions,
    /// not part of the fingerprint
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn need<T: Clone>(o: &Option<T>, field: &str) -> Result<T> {
    o.clone()
        .ok_or_else(|| Error::invalid(field, "missing after resolution"))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        need(&self.experiment, "experiment")
    }

    pub fn lattice(&self) -> Result<LatticeBox> {
        need(&self.lattice, "lattice")?.lattice()
    }

    /// Dimension used for the contraction threshold.
    fn dim(&self) -> usize {
        self.lattice.as_ref().map_or(1, |b| b.extents.len())
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        self.params.to_params(self.dim())
    }

    pub fn sampling(&self, workers: usize) -> Result<Sampling> {
        Ok(Sampling {
            n_samples: need(&self.sampling.n_samples, "sampling.n_samples")?,
            seed: self.sampling.seed,
            workers,
        })
    }

    /// Fills every default relevant to the experiment, drops irrelevant options and
    /// validates the result. `kind` comes from the command line when given.
    pub fn resolve(mut self, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
        let kind = match (self.experiment, kind) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::invalid(
                    "experiment",
                    format!("config says `{}` but `{}` was requested", a.name(), b.name()),
                ))
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => return Err(Error::invalid("experiment", "no experiment given")),
        };
        self.experiment = Some(kind);
        if kind.chain_only() {
            self.lattice = None;
        } else {
            let b = self.lattice.take().unwrap_or(BoxSpec {
                extents: vec![kind.default_extent()],
            });
            b.lattice().map_err(|e| match e {
                Error::InvalidInput { reason, .. } => Error::invalid("lattice.extents", reason),
                other => other,
            })?;
            self.lattice = Some(b);
        }
        let params = self.model_params()?;
        self.params = ParamsSpec::from_params(&params);
        self.scf.validate().map_err(|e| match e {
            Error::InvalidInput { field, reason } => Error::invalid(&format!("scf.{field}"), reason),
            other => other,
        })?;
        let n_samples = self.sampling.n_samples.unwrap_or(kind.default_samples());
        if n_samples == 0 {
            return Err(Error::invalid("sampling.n_samples", "must be at least 1"));
        }
        self.sampling.n_samples = Some(n_samples);
        if kind.chain_only() && self.model == ModelKind::Hubbard && kind == ExperimentKind::Lyapunov {
            return Err(Error::invalid("model", "lyapunov supports `anderson` and `single` only"));
        }

        let o = std::mem::take(&mut self.options);
        let mut r = ExperimentOptions::default();
        let sites_extent = self.lattice.as_ref().map(|b| b.extents.clone());
        let max_dist = sites_extent
            .as_ref()
            .map(|e| e.iter().map(|x| x - 1).sum::<usize>())
            .unwrap_or(0);
        let d = self.dim() as f64;
        let full_grid = || linspace(-1.0, 4.0 * d + 1.0, 4 * self.dim() * 10 + 21);
        match kind {
            ExperimentKind::Scf => {}
            ExperimentKind::Moments | ExperimentKind::Correlators => {
                if kind == ExperimentKind::Moments {
                    r.z = Some(o.z.unwrap_or(Complex64::new(2.0, 0.01)));
                    r.s = Some(o.s.unwrap_or(1.0 / 3.0));
                } else {
                    r.interval = Some(o.interval.unwrap_or_default());
                }
                r.origin = Some(o.origin.unwrap_or(0));
                r.fit_window = Some(o.fit_window.unwrap_or((1, max_dist.min(12))));
            }
            ExperimentKind::Lyapunov => {
                r.z = Some(o.z.unwrap_or(Complex64::new(2.0, 1e-6)));
                r.chain_length = Some(o.chain_length.unwrap_or(100_000));
                r.buffer = Some(o.buffer.unwrap_or(default_buffer(params.nu)));
                r.g_values = Some(o.g_values.unwrap_or_default());
            }
            ExperimentKind::Momentgen => {
                r.z = Some(o.z.unwrap_or(Complex64::new(2.0, 1e-4)));
                r.s = Some(o.s.unwrap_or(1.0 / 3.0));
                r.lengths = Some(o.lengths.unwrap_or(vec![16, 24, 32, 48]));
            }
            ExperimentKind::Decoupling => {
                r.z = Some(o.z.unwrap_or(Complex64::new(2.0, 1e-4)));
                r.s = Some(o.s.unwrap_or(1.0 / 3.0));
                let delta = o.delta.unwrap_or(DEFAULT_DELTA);
                r.delta = Some(delta);
                r.triples = Some(o.triples.unwrap_or_else(|| {
                    [6, 10, 16]
                        .iter()
                        .map(|&n| DecouplingTriple {
                            n,
                            m: n,
                            r: r_schedule(n, n, delta),
                        })
                        .collect()
                }));
            }
            ExperimentKind::Ids => {
                r.energies = Some(o.energies.unwrap_or_else(full_grid));
            }
            ExperimentKind::Wegner => {
                r.window = Some(o.window.unwrap_or((1.9, 2.1)));
                r.lambdas = Some(o.lambdas.unwrap_or(vec![params.lambda]));
            }
            ExperimentKind::Holder => {
                let variable = o.variable.unwrap_or(HolderVariable::Energy);
                r.variable = Some(variable);
                r.deltas = Some(o.deltas.unwrap_or(vec![0.2, 0.1, 0.05]));
                r.alpha_floor = Some(o.alpha_floor.unwrap_or(0.0));
                match variable {
                    HolderVariable::Energy => {
                        r.base_energies = Some(o.base_energies.unwrap_or_else(|| linspace(1.5, 2.3, 9)));
                    }
                    _ => {
                        r.energies = Some(o.energies.unwrap_or_else(full_grid));
                    }
                }
            }
            ExperimentKind::Audits => {
                r.t_grid = Some(o.t_grid.unwrap_or_else(|| linspace(-2.0, 4.0 * d + 2.0, 401)));
            }
        }
        self.options = r;
        Ok(self)
    }

    /// sha256 of the resolved config without the output location.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serialises");
        hex::encode(Sha256::digest(&bytes))
    }
}
