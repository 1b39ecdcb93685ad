//! Experiment dispatch and on-disk outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::ensemble::{run_samples, sample_system, ModelKind};
use crate::error::{Error, Result};
use crate::ids::{holder_energy, holder_parameter, ids_curve, wegner_ratio, HolderVariable, IdsCurve};
use crate::model::hopping_decay_audit;
use crate::observables::{combes_thomas_audit, correlator_ensemble, fractional_moment_profile, DistanceProfile};
use crate::oned::{decoupling_audit, gaps_non_increasing, lyapunov, lyapunov_gap, moment_gen, LyapunovModel};
use crate::scf::{contraction_bound, contraction_bound_hubbard, ScfOptions};

/// A CSV cell; floats are written with 17 significant digits.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) => format!("{x:.16e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Table {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::render)).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn audit(name: &str, passed: bool, detail: impl Into<String>) -> AuditVerdict {
    AuditVerdict {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

/// What an experiment hands to the writer.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub table: Table,
    pub results: Value,
    pub audits: Vec<AuditVerdict>,
    pub failures: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    AuditViolations,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::AuditViolations => 2,
            RunStatus::Failed => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub fingerprint: String,
    pub version: String,
    pub wall_time_seconds: f64,
    pub failures: usize,
    pub total_samples: usize,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub files: Vec<FileEntry>,
}

pub const DATA_FILE: &str = "data.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn write_hashed(dir: &Path, name: &str, bytes: &[u8], files: &mut Vec<FileEntry>) -> Result<()> {
    std::fs::write(dir.join(name), bytes)?;
    files.push(FileEntry {
        name: name.into(),
        sha256: hex::encode(Sha256::digest(bytes)),
    });
    Ok(())
}

/// Resolved output directory: the explicit argument, else the config's, else `./out/<experiment>`.
pub fn output_dir(config: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    Ok(match (out, &config.output_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => PathBuf::from("out").join(config.kind()?.name()),
    })
}

/// Runs a resolved config and writes `config.json`, `data.csv`, `summary.json` and
/// `manifest.json` into `out_dir`. Runtime failures are recorded in the manifest;
/// only I/O problems are returned as errors.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<RunManifest> {
    let start = Instant::now();
    let kind = config.kind()?;
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    write_hashed(out_dir, CONFIG_FILE, config.to_json().as_bytes(), &mut files)?;
    let fingerprint = config.fingerprint();
    let outcome = dispatch(config, kind, workers);
    let (status, error, failures, total) = match outcome {
        Ok(out) => {
            write_hashed(out_dir, DATA_FILE, &out.table.to_csv()?, &mut files)?;
            let summary = json!({
                "experiment": kind.name(),
                "fingerprint": fingerprint,
                "columns": out.table.columns,
                "results": out.results,
                "audits": out.audits,
                "failures": out.failures,
                "total_samples": out.total,
            });
            let text = serde_json::to_string_pretty(&summary).expect("summary serialises");
            write_hashed(out_dir, SUMMARY_FILE, text.as_bytes(), &mut files)?;
            let status = if out.audits.iter().all(|a| a.passed) {
                RunStatus::Ok
            } else {
                RunStatus::AuditViolations
            };
            (status, None, out.failures, out.total)
        }
        Err(e) => {
            let (failures, total) = match e {
                Error::TooManyFailures { failures, total } => (failures, total),
                _ => (0, 0),
            };
            (RunStatus::Failed, Some(e.to_string()), failures, total)
        }
    };
    let manifest = RunManifest {
        experiment: kind.name().into(),
        fingerprint,
        version: env!("CARGO_PKG_VERSION").into(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        failures,
        total_samples: total,
        status,
        error,
        files,
    };
    std::fs::write(
        out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest).expect("manifest serialises"),
    )?;
    Ok(manifest)
}

fn dispatch(c: &ExperimentConfig, kind: ExperimentKind, workers: usize) -> Result<ExperimentOutput> {
    match kind {
        ExperimentKind::Scf => run_scf(c, workers),
        ExperimentKind::Moments => run_moments(c, workers),
        ExperimentKind::Correlators => run_correlators(c, workers),
        ExperimentKind::Lyapunov => run_lyapunov(c, workers),
        ExperimentKind::Momentgen => run_momentgen(c, workers),
        ExperimentKind::Decoupling => run_decoupling(c, workers),
        ExperimentKind::Ids => run_ids(c, workers),
        ExperimentKind::Wegner => run_wegner(c, workers),
        ExperimentKind::Holder => run_holder(c, workers),
        ExperimentKind::Audits => run_audits(c, workers),
    }
}

fn opt<T: Clone>(o: &Option<T>, field: &str) -> Result<T> {
    o.clone()
        .ok_or_else(|| Error::invalid(&format!("options.{field}"), "required for this experiment"))
}

fn run_scf(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let lattice = c.lattice()?;
    let params = c.model_params()?;
    let sampling = c.sampling(workers)?;
    let kind = c.model;
    let out = run_samples(&sampling, |idx| {
        let sys = sample_system(&lattice, &params, kind, sampling.seed, idx, &c.scf)?;
        Ok((idx, sys.scf))
    })?;
    let hubbard = kind == ModelKind::Hubbard;
    let mut table = if hubbard {
        Table::new(&["sample", "site", "v_up", "v_down", "iterations", "residual"])
    } else {
        Table::new(&["sample", "site", "v", "iterations", "residual"])
    };
    let report = if hubbard {
        contraction_bound_hubbard(&params, lattice.dim())
    } else {
        contraction_bound(&params, lattice.dim())
    };
    let mut worst_rate: f64 = 0.0;
    let mut max_iter = 0;
    for (idx, sol) in &out.results {
        let (iterations, residual) = sol
            .as_ref()
            .map_or((0, 0.0), |s| (s.iterations, s.final_residual()));
        max_iter = max_iter.max(iterations);
        if let Some(s) = sol {
            worst_rate = s.measured_rates().into_iter().fold(worst_rate, f64::max);
        }
        for site in 0..lattice.len() {
            let mut row: Vec<Cell> = vec![(*idx as usize).into(), site.into()];
            match sol.as_ref().map(|s| (s.values(), s.pair())) {
                Some((_, Some((up, down)))) => {
                    row.push(up[site].into());
                    row.push(down[site].into());
                }
                Some((v, None)) => row.push(v[site].into()),
                // the Anderson model has no potential
                None => row.push(0.0.into()),
            }
            row.push(iterations.into());
            row.push(residual.into());
            table.push(row);
        }
    }
    let mut audits = vec![];
    if report.theoretical_rate < 1.0 && kind != ModelKind::Anderson {
        audits.push(audit(
            "contraction_rate",
            worst_rate <= report.theoretical_rate + 0.05,
            format!("worst measured rate {worst_rate:e}, bound {:e}", report.theoretical_rate),
        ));
    }
    Ok(ExperimentOutput {
        table,
        results: json!({
            "g_threshold": report.g_threshold,
            "theoretical_rate": report.theoretical_rate,
            "worst_measured_rate": worst_rate,
            "max_iterations": max_iter,
        }),
        audits,
        failures: out.failures,
        total: out.total,
    })
}

fn profile_table(p: &DistanceProfile) -> Table {
    let mut t = Table::new(&["distance", "mean", "stderr", "n_effective"]);
    for (k, &d) in p.distances.iter().enumerate() {
        t.push(vec![d.into(), p.mean[k].into(), p.stderr[k].into(), p.n_effective.into()]);
    }
    t
}

fn fit_value(p: &DistanceProfile, window: (usize, usize)) -> Value {
    match p.decay_fit(window) {
        Ok(f) => serde_json::to_value(f).expect("fit serialises"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn run_moments(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let o = &c.options;
    let prof = fractional_moment_profile(
        &c.lattice()?,
        &c.model_params()?,
        c.model,
        opt(&o.z, "z")?,
        opt(&o.s, "s")?,
        opt(&o.origin, "origin")?,
        &c.sampling(workers)?,
        &c.scf,
    )?;
    let p = &prof.profile;
    let audits = vec![
        audit("estimates_positive", p.mean.iter().all(|&x| x > 0.0), ""),
        audit("stderr_finite", p.stderr.iter().all(|x| x.is_finite()), ""),
    ];
    Ok(ExperimentOutput {
        table: profile_table(p),
        results: json!({ "fit": fit_value(p, opt(&o.fit_window, "fit_window")?) }),
        audits,
        failures: p.failures,
        total: p.n_effective + p.failures,
    })
}

fn run_correlators(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let o = &c.options;
    let interval = opt(&o.interval, "interval")?;
    let p = correlator_ensemble(
        &c.lattice()?,
        &c.model_params()?,
        c.model,
        &interval,
        opt(&o.origin, "origin")?,
        &c.sampling(workers)?,
        &c.scf,
    )?;
    let comps = if c.model == ModelKind::Hubbard { 2.0 } else { 1.0 };
    let mut audits = vec![];
    if interval == Default::default() {
        audits.push(audit(
            "completeness",
            (p.mean[0] - comps).abs() <= 1e-10,
            format!("E[Q(0,0)] = {}", p.mean[0]),
        ));
    } else {
        audits.push(audit("bounded_by_full_line", p.mean[0] <= comps + 1e-10, ""));
    }
    Ok(ExperimentOutput {
        table: profile_table(&p),
        results: json!({ "fit": fit_value(&p, opt(&o.fit_window, "fit_window")?) }),
        audits,
        failures: p.failures,
        total: p.n_effective + p.failures,
    })
}

fn lyapunov_model(kind: ModelKind) -> Result<LyapunovModel> {
    match kind {
        ModelKind::Anderson => Ok(LyapunovModel::Anderson),
        ModelKind::Single => Ok(LyapunovModel::HartreeFock),
        ModelKind::Hubbard => Err(Error::invalid("model", "lyapunov supports `anderson` and `single` only")),
    }
}

fn run_lyapunov(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let o = &c.options;
    let params = c.model_params()?;
    let sampling = c.sampling(workers)?;
    let z = opt(&o.z, "z")?;
    let len = opt(&o.chain_length, "chain_length")?;
    let buffer = opt(&o.buffer, "buffer")?;
    let g_values = opt(&o.g_values, "g_values")?;
    if g_values.is_empty() {
        let e = lyapunov(&params, lyapunov_model(c.model)?, z, len, buffer, &sampling, &c.scf)?;
        let mut t = Table::new(&["realization", "value"]);
        for (k, v) in e.per_realization.iter().enumerate() {
            t.push(vec![k.into(), (*v).into()]);
        }
        Ok(ExperimentOutput {
            table: t,
            results: json!({ "value": e.value, "stderr": e.stderr, "n_realizations": e.n_realizations }),
            audits: vec![audit("finite", e.value.is_finite(), "")],
            failures: e.failures,
            total: e.n_realizations + e.failures,
        })
    } else {
        let pts = lyapunov_gap(&params, &g_values, z, len, buffer, &sampling, &c.scf)?;
        let mut t = Table::new(&["g", "hartree_fock", "anderson", "gap", "stderr"]);
        for p in &pts {
            t.push(vec![p.g.into(), p.hartree_fock.into(), p.anderson.into(), p.gap.into(), p.stderr.into()]);
        }
        let mut audits = vec![audit("gaps_non_increasing", gaps_non_increasing(&pts), "")];
        if let Some(p0) = pts.iter().find(|p| p.g == 0.0) {
            audits.push(audit("zero_coupling_gap", p0.gap == 0.0, format!("{}", p0.gap)));
        }
        Ok(ExperimentOutput {
            table: t,
            results: serde_json::to_value(&pts).expect("serialises"),
            audits,
            failures: 0,
            total: sampling.n_samples,
        })
    }
}

fn run_momentgen(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let o = &c.options;
    let e = moment_gen(
        &c.model_params()?,
        c.model,
        opt(&o.z, "z")?,
        opt(&o.s, "s")?,
        &opt(&o.lengths, "lengths")?,
        &c.sampling(workers)?,
        &c.scf,
    )?;
    let mut t = Table::new(&["length", "a_n", "a_stderr", "residual"]);
    for k in 0..e.lengths.len() {
        t.push(vec![e.lengths[k].into(), e.a_n[k].into(), e.a_stderr[k].into(), e.residuals[k].into()]);
    }
    Ok(ExperimentOutput {
        table: t,
        results: json!({ "phi": e.phi, "phi_stderr": e.phi_stderr, "intercept": e.intercept }),
        audits: vec![audit(
            "phi_nonpositive",
            e.phi <= 2.0 * e.phi_stderr,
            format!("phi = {} ± {}", e.phi, e.phi_stderr),
        )],
        failures: e.failures,
        total: e.n_effective + e.failures,
    })
}

fn run_decoupling(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let o = &c.options;
    let est = decoupling_audit(
        &c.model_params()?,
        c.model,
        opt(&o.z, "z")?,
        opt(&o.s, "s")?,
        &opt(&o.triples, "triples")?,
        &c.sampling(workers)?,
        &c.scf,
    )?;
    let mut t = Table::new(&["n", "m", "r", "c_hat", "ci_low", "ci_high"]);
    for e in &est {
        t.push(vec![
            e.triple.n.into(),
            e.triple.m.into(),
            e.triple.r.into(),
            e.c_hat.into(),
            e.ci_low.into(),
            e.ci_high.into(),
        ]);
    }
    let (lo, hi) = est
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), e| (a.min(e.c_hat), b.max(e.c_hat)));
    let failures = est.iter().map(|e| e.failures).sum();
    Ok(ExperimentOutput {
        table: t,
        results: json!({ "max_c_hat": hi, "min_c_hat": lo }),
        audits: vec![audit(
            "stable_band",
            hi.is_finite() && lo > 0.0 && hi / lo <= 10.0,
            format!("max/min = {}", hi / lo),
        )],
        failures,
        total: 3 * est.len() * c.sampling(workers)?.n_samples,
    })
}

fn curve_audits(curve: &IdsCurve) -> Vec<AuditVerdict> {
    vec![
        audit("range", curve.in_range(), ""),
        audit("monotone", curve.is_monotone(), ""),
    ]
}

fn run_ids(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let energies = opt(&c.options.energies, "energies")?;
    let curve = ids_curve(&c.lattice()?, &c.model_params()?, c.model, &energies, &c.sampling(workers)?, &c.scf)?;
    let hubbard = curve.components.len() == 2;
    let mut t = if hubbard {
        Table::new(&["energy", "mean", "stderr", "mean_up", "mean_down"])
    } else {
        Table::new(&["energy", "mean", "stderr"])
    };
    for (k, &e) in energies.iter().enumerate() {
        let mut row: Vec<Cell> = vec![e.into(), curve.mean[k].into(), curve.stderr[k].into()];
        if hubbard {
            row.push(curve.components[0][k].into());
            row.push(curve.components[1][k].into());
        }
        t.push(row);
    }
    Ok(ExperimentOutput {
        table: t,
        results: json!({ "normalization": "per spin component", "box_sites": curve.box_sites }),
        audits: curve_audits(&curve),
        failures: curve.failures,
        total: curve.n_effective + curve.failures,
    })
}

fn run_wegner(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let o = &c.options;
    let lattice = c.lattice()?;
    let params = c.model_params()?;
    let sampling = c.sampling(workers)?;
    let window = opt(&o.window, "window")?;
    let mut t = Table::new(&["lambda", "ratio", "stderr", "ratio_times_lambda"]);
    let mut scaled = Vec::new();
    let mut failures = 0;
    let mut total = 0;
    for &lambda in &opt(&o.lambdas, "lambdas")? {
        let p = params.clone().with_lambda(lambda);
        let w = wegner_ratio(&lattice, &p, c.model, window, &sampling, &c.scf)?;
        t.push(vec![lambda.into(), w.ratio.into(), w.stderr.into(), (w.ratio * lambda).into()]);
        scaled.push(w.ratio * lambda);
        failures += w.failures;
        total += w.n_effective + w.failures;
    }
    let (lo, hi) = scaled
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let mut audits = vec![audit("finite", scaled.iter().all(|x| x.is_finite()), "")];
    if scaled.len() > 1 {
        audits.push(audit("lambda_scaling", lo > 0.0 && hi / lo <= 3.0, format!("max/min = {}", hi / lo)));
    }
    Ok(ExperimentOutput {
        table: t,
        results: json!({ "ratio_times_lambda": scaled }),
        audits,
        failures,
        total,
    })
}

fn run_holder(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let o = &c.options;
    let lattice = c.lattice()?;
    let params = c.model_params()?;
    let sampling = c.sampling(workers)?;
    let variable = opt(&o.variable, "variable")?;
    let deltas = opt(&o.deltas, "deltas")?;
    let floor = opt(&o.alpha_floor, "alpha_floor")?;
    let mut failures = 0;
    let report = match variable {
        HolderVariable::Energy => {
            let base = opt(&o.base_energies, "base_energies")?;
            let mut grid: Vec<f64> = base.clone();
            for &d in &deltas {
                grid.extend(base.iter().map(|e| e + d));
            }
            grid.sort_by(f64::total_cmp);
            grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
            let curve = ids_curve(&lattice, &params, c.model, &grid, &sampling, &c.scf)?;
            failures += curve.failures;
            holder_energy(&curve, &base, &deltas, floor, sampling.seed)?
        }
        HolderVariable::Lambda | HolderVariable::G => {
            let energies = opt(&o.energies, "energies")?;
            let base = ids_curve(&lattice, &params, c.model, &energies, &sampling, &c.scf)?;
            failures += base.failures;
            let mut perturbed = Vec::new();
            for &d in &deltas {
                let p = if variable == HolderVariable::Lambda {
                    params.clone().with_lambda(params.lambda + d)
                } else {
                    params.clone().with_g(params.g + d)
                };
                let curve = ids_curve(&lattice, &p, c.model, &energies, &sampling, &c.scf)?;
                failures += curve.failures;
                perturbed.push((d, curve));
            }
            holder_parameter(variable, &base, &perturbed, floor, sampling.seed)?
        }
    };
    let mut t = Table::new(&["delta", "modulus"]);
    for &(d, m) in &report.pairs {
        t.push(vec![d.into(), m.into()]);
    }
    Ok(ExperimentOutput {
        table: t,
        results: serde_json::to_value(&report).expect("serialises"),
        audits: vec![audit(
            "alpha_floor",
            report.passes(),
            format!("alpha_hat = {} in [{}, {}]", report.alpha_hat, report.ci_low, report.ci_high),
        )],
        failures,
        total: sampling.n_samples,
    })
}

fn run_audits(c: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let lattice = c.lattice()?;
    let params = c.model_params()?;
    let sampling = c.sampling(workers)?;
    let grid = opt(&c.options.t_grid, "t_grid")?;
    let hop = hopping_decay_audit(&lattice, &params);
    let report = if c.model == ModelKind::Hubbard {
        contraction_bound_hubbard(&params, lattice.dim())
    } else {
        contraction_bound(&params, lattice.dim())
    };
    let opts: ScfOptions = c.scf;
    let out = run_samples(&sampling, |idx| {
        let sys = sample_system(&lattice, &params, c.model, sampling.seed, idx, &opts)?;
        let (iterations, rate) = sys.scf.as_ref().map_or((0, 0.0), |s| {
            (s.iterations, s.measured_rates().into_iter().fold(0.0, f64::max))
        });
        let ct = if hop.admissible {
            sys.hamiltonians
                .iter()
                .map(|h| combes_thomas_audit(&h.matrix, &lattice, &params, &grid))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max)
        } else {
            f64::NAN
        };
        Ok((idx, iterations, rate, ct))
    })?;
    let mut t = Table::new(&["sample", "scf_iterations", "max_rate", "combes_thomas"]);
    for &(idx, it, rate, ct) in &out.results {
        t.push(vec![(idx as usize).into(), it.into(), rate.into(), ct.into()]);
    }
    let worst_ct = out.results.iter().map(|r| r.3).fold(0.0, f64::max);
    let worst_rate = out.results.iter().map(|r| r.2).fold(0.0, f64::max);
    let mut audits = vec![audit(
        "hopping_decay_admissible",
        hop.admissible,
        format!("zeta = {}, eta/2 = {}", hop.zeta, params.eta / 2.0),
    )];
    if hop.admissible {
        audits.push(audit("combes_thomas", worst_ct <= 1.0, format!("max statistic {worst_ct}")));
    }
    if report.theoretical_rate < 1.0 && c.model != ModelKind::Anderson {
        audits.push(audit(
            "contraction_rate",
            worst_rate <= report.theoretical_rate + 0.05,
            format!("worst measured rate {worst_rate:e}, bound {:e}", report.theoretical_rate),
        ));
    }
    Ok(ExperimentOutput {
        table: t,
        results: json!({
            "max_combes_thomas": worst_ct,
            "max_contraction_rate": worst_rate,
            "theoretical_rate": report.theoretical_rate,
            "hopping_zeta": hop.zeta,
        }),
        audits,
        failures: out.failures,
        total: out.total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolved(text: &str, kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig::from_json(text).unwrap().resolve(Some(kind)).unwrap()
    }

    #[test]
    fn single_site_scf_run() {
        let c = resolved(
            r#"{"lattice": {"extents": [1]}, "params": {"lambda": 0.0, "g": 0.0, "beta": 1.0, "kappa": 2.0}}"#,
            ExperimentKind::Scf,
        );
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&c, dir.path(), 1).unwrap();
        assert_eq!(m.status, RunStatus::Ok);
        let csv = std::fs::read_to_string(dir.path().join(DATA_FILE)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: f64 = lines[1].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(v, 0.5);
        assert!(dir.path().join(MANIFEST_FILE).exists());
        let echoed = ExperimentConfig::load(&dir.path().join(CONFIG_FILE)).unwrap();
        assert_eq!(echoed, c);
    }

    #[test]
    fn failed_run_still_writes_manifest() {
        let c = resolved(r#"{"params": {"g": 50.0}, "scf": {"max_iter": 2}, "sampling": {"n_samples": 3}}"#, ExperimentKind::Scf);
        let dir = tempfile::tempdir().unwrap();
        let m = run_experiment(&c, dir.path(), 1).unwrap();
        assert_eq!(m.status, RunStatus::Failed);
        assert_eq!((m.failures, m.total_samples), (3, 3));
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn float_cells_round_trip() {
        let x = 0.1 + 0.2;
        let s = Cell::Float(x).render();
        assert_eq!(s.parse::<f64>().unwrap(), x);
    }
}
