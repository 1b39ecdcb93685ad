//! Seeded disorder ensembles: per-sample Hamiltonians and the failure policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::parallel::{parallel_map, TaskFailure};
use crate::model::{assemble_hamiltonian, sample_disorder, DisorderField, HamiltonianMatrix, LatticeBox, ModelParams};
use crate::scf::{scf_hubbard, scf_single, EffectivePotential, ScfOptions};

/// Which Hamiltonian a sample produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `H_0 + λω + gV_eff` with the single-component potential.
    #[default]
    Single,
    /// Spin pair `H↑ = H_0 + λω + gV↓`, `H↓ = H_0 + λω + gV↑`.
    Hubbard,
    /// `H_0 + λω`, no self-consistency.
    Anderson,
}

/// Largest tolerated fraction of failed samples.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub n_samples: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Sampling {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Sampling {
            n_samples,
            seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

/// The Hamiltonians of one disorder sample (one, or two for the spin pair).
#[derive(Debug, Clone)]
pub struct SampleSystem {
    pub disorder: DisorderField,
    pub hamiltonians: Vec<HamiltonianMatrix>,
    pub scf: Option<EffectivePotential>,
}

/// Builds the Hamiltonian(s) for a given disorder field; SCF non-convergence is an error.
pub fn build_system(
    lattice: &LatticeBox,
    params: &ModelParams,
    kind: ModelKind,
    disorder: DisorderField,
    opts: &ScfOptions,
) -> Result<SampleSystem> {
    let check = |sol: EffectivePotential| -> Result<EffectivePotential> {
        if sol.converged {
            Ok(sol)
        } else {
            Err(Error::NotConverged {
                what: "SCF".into(),
                iterations: sol.iterations,
                residual: sol.final_residual(),
            })
        }
    };
    match kind {
        ModelKind::Anderson => {
            let p = params.clone().with_g(0.0);
            let h = assemble_hamiltonian(lattice, &p, &disorder, None)?;
            Ok(SampleSystem {
                disorder,
                hamiltonians: vec![h],
                scf: None,
            })
        }
        ModelKind::Single => {
            let sol = check(scf_single(lattice, params, &disorder, None, opts)?)?;
            let h = assemble_hamiltonian(lattice, params, &disorder, Some(sol.values()))?;
            Ok(SampleSystem {
                disorder,
                hamiltonians: vec![h],
                scf: Some(sol),
            })
        }
        ModelKind::Hubbard => {
            let sol = check(scf_hubbard(lattice, params, &disorder, None, opts)?)?;
            let (up, down) = sol.pair().expect("hubbard solution");
            let h_up = assemble_hamiltonian(lattice, params, &disorder, Some(down))?;
            let h_down = assemble_hamiltonian(lattice, params, &disorder, Some(up))?;
            Ok(SampleSystem {
                disorder,
                hamiltonians: vec![h_up, h_down],
                scf: Some(sol),
            })
        }
    }
}

/// Draws sample `index` of the ensemble seeded by `seed` and builds its Hamiltonian(s).
pub fn sample_system(
    lattice: &LatticeBox,
    params: &ModelParams,
    kind: ModelKind,
    seed: u64,
    index: u64,
    opts: &ScfOptions,
) -> Result<SampleSystem> {
    let disorder = sample_disorder(lattice, &params.distribution, seed, index)?;
    build_system(lattice, params, kind, disorder, opts)
}

/// Successful per-sample results in index order plus the failure count.
#[derive(Debug, Clone)]
pub struct EnsembleOutcome<T> {
    pub results: Vec<T>,
    pub failures: usize,
    pub total: usize,
}

/// Runs `task` over sample indices `0..n_samples`, drops failed samples and
/// aborts if more than 5% fail.
pub fn run_samples<T, F>(sampling: &Sampling, task: F) -> Result<EnsembleOutcome<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let indices: Vec<u64> = (0..sampling.n_samples as u64).collect();
    let raw = parallel_map(&indices, sampling.workers, task);
    let total = raw.len();
    let mut results = Vec::with_capacity(total);
    let mut failures = 0;
    for (i, r) in raw.into_iter().enumerate() {
        match r {
            Ok(v) => results.push(v),
            Err(e) => {
                failures += 1;
                match e {
                    TaskFailure::Error(err) => log::warn!("sample {i} failed: {err}"),
                    TaskFailure::Panic(msg) => log::warn!("sample {i} panicked: {msg}"),
                }
            }
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::TooManyFailures { failures, total });
    }
    Ok(EnsembleOutcome {
        results,
        failures,
        total,
    })
}

/// Per-index mean and standard error of equally long sample vectors.
pub fn columnwise_mean_stderr(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            crate::stats::mean_stderr(&col)
        })
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anderson_ignores_coupling() {
        let b = LatticeBox::chain(5).unwrap();
        let p = ModelParams::default().with_g(0.3);
        let s = sample_system(&b, &p, ModelKind::Anderson, 4, 2, &ScfOptions::default()).unwrap();
        assert_eq!(s.hamiltonians.len(), 1);
        let d = s.hamiltonians[0].diagonal();
        for (x, w) in d.iter().zip(&s.disorder.values) {
            assert_eq!(*x, 2.0 + w);
        }
    }

    #[test]
    fn hubbard_gives_two_hamiltonians() {
        let b = LatticeBox::chain(4).unwrap();
        let p = ModelParams::default().with_g(1e-3);
        let s = sample_system(&b, &p, ModelKind::Hubbard, 4, 0, &ScfOptions::default()).unwrap();
        assert_eq!(s.hamiltonians.len(), 2);
    }

    #[test]
    fn failure_policy() {
        let ok = run_samples(&Sampling::new(100, 0), |i| {
            if i == 13 {
                Err(Error::invalid("x", "boom"))
            } else {
                Ok(i)
            }
        })
        .unwrap();
        assert_eq!(ok.results.len(), 99);
        assert_eq!(ok.failures, 1);
        let bad = run_samples(&Sampling::new(100, 0), |i| {
            if i % 10 == 0 {
                Err(Error::invalid("x", "boom"))
            } else {
                Ok(i)
            }
        });
        assert!(matches!(bad, Err(Error::TooManyFailures { failures: 10, total: 100 })));
    }
}
