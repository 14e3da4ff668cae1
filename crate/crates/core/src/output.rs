//! Result rows, CSV/JSON emission and the exact reference curves in the same
//! row schema.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentConfig, Format};
use crate::error::{Error, Result};
use crate::model::{build_h_target, Observable, SpinModel};
use crate::nonherm::build_dilation_with_shift;
use crate::numerics::MAX_EXPM_DIM;
use crate::reference::{evolve_nonhermitian, gksl_curve, pure_density};
use crate::bounds::{BoundInputs, BoundReport, CommutatorNorms};
use crate::channel::Scheme;
use crate::qem::{basis_channels, basis_condition_number};
use crate::runner::{Experiment, RunOutput};

pub const CSV_HEADER: [&str; 8] = ["time", "observable", "estimate", "jackknife_se", "sum_num", "sum_den", "n_traj", "mode"];

/// One `(time, observable)` line. Undefined values stay `None` and are
/// written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub time: f64,
    pub observable: String,
    pub estimate: Option<f64>,
    pub jackknife_se: Option<f64>,
    pub sum_num: f64,
    pub sum_den: f64,
    pub n_traj: u64,
    pub mode: String,
}

pub fn rows_from_run(out: &RunOutput) -> Vec<ResultRow> {
    let r = &out.result;
    let mut rows = Vec::with_capacity(r.cells.len());
    for (s, &time) in out.times.iter().enumerate() {
        for (o, name) in out.observables.iter().enumerate() {
            let cell = r.cell(s, o);
            rows.push(ResultRow {
                time,
                observable: name.clone(),
                estimate: cell.estimate,
                jackknife_se: cell.jackknife_se,
                sum_num: cell.sum_num,
                sum_den: cell.sum_den,
                n_traj: r.n_traj,
                mode: out.mode.to_string(),
            });
        }
    }
    rows
}

fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            float(r.time),
            r.observable.clone(),
            opt(r.estimate),
            opt(r.jackknife_se),
            float(r.sum_num),
            float(r.sum_den),
            r.n_traj.to_string(),
            r.mode.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a file written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    if rdr.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::ConfigInvalid(format!("{} does not have the result header", path.display())));
    }
    let parse = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::ConfigInvalid(format!("bad number {s:?}")))
    };
    let parse_opt = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { parse(s).map(Some) } };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        rows.push(ResultRow {
            time: parse(&rec[0])?,
            observable: rec[1].to_string(),
            estimate: parse_opt(&rec[2])?,
            jackknife_se: parse_opt(&rec[3])?,
            sum_num: parse(&rec[4])?,
            sum_den: parse(&rec[5])?,
            n_traj: rec[6].parse().map_err(|_| Error::ConfigInvalid("bad n_traj".into()))?,
            mode: rec[7].to_string(),
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct JsonDocument<'a, M: Serialize> {
    rows: &'a [ResultRow],
    manifest: &'a M,
}

/// Write rows in the requested format. CSV output gets the manifest as a
/// sibling `<path>.manifest.json`; JSON output embeds it.
pub fn emit<M: Serialize>(rows: &[ResultRow], manifest: &M, path: &Path, format: Format) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    match format {
        Format::Csv => {
            write_csv(rows, std::fs::File::create(path)?)?;
            let mut side = path.as_os_str().to_owned();
            side.push(".manifest.json");
            std::fs::write(side, serde_json::to_string_pretty(manifest)?)?;
        }
        Format::Json => {
            std::fs::write(path, serde_json::to_string_pretty(&JsonDocument { rows, manifest })?)?;
        }
    }
    Ok(())
}

/// Exact curves on the configured snapshot grid: the non-Hermitian target,
/// the GKSL solution (when `4^L` fits the dense limit) and the symmetric
/// `g = 0` baseline. `sum_num` and `sum_den` hold `Tr[Oρ]` and `Tr ρ`.
pub fn reference_rows(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let model = config.spin_model()?;
    let times = config.snapshots()?.times(&config.noise_config()?);
    let observables = config.observables(&model)?;
    let psi0 = config.initial_state(&model)?;
    let mut rows = Vec::new();

    let pure = |label: &str, m: &SpinModel, rows: &mut Vec<ResultRow>| -> Result<()> {
        let h = build_h_target(m);
        for &t in &times {
            let st = evolve_nonhermitian(&psi0, &h, t, &observables)?;
            push_rows(rows, t, &observables, label, st.norm_sqr, |k| st.normalized[k]);
        }
        Ok(())
    };
    pure("reference_nh", &model, &mut rows)?;

    let d = model.dim();
    if d * d <= MAX_EXPM_DIM {
        let gamma = config.gamma(&model)?;
        let dil = build_dilation_with_shift(&model, &gamma, config.noise.extra_shift)?;
        let curve = gksl_curve(&pure_density(&psi0), &dil, &times)?;
        for (k, &t) in times.iter().enumerate() {
            push_rows(&mut rows, t, &observables, "reference_gksl", curve.trace(k), |o| {
                curve.normalized(k, &observables[o])
            });
        }
    }

    let symm = SpinModel { g: 0.0, ..model.clone() };
    pure("reference_symm", &symm, &mut rows)?;
    Ok(rows)
}

/// What the `bounds` subcommand prints.
#[derive(Debug, Clone, Serialize)]
pub struct BoundsDocument {
    pub scheme: Scheme,
    /// Bound for the configured scheme.
    pub scheme_nstep: f64,
    pub st_eo_sqrt_coefficient: f64,
    pub report: BoundReport,
    pub norms: CommutatorNorms,
}

/// Evaluate every bound for the configured model at `T`, with `‖O‖` the
/// largest observable norm, `p_succ = 1` and `Tr ρ_NH(T)` from the shifted
/// non-Hermitian generator.
pub fn bounds_document(config: &ExperimentConfig) -> Result<BoundsDocument> {
    let exp = Experiment::new(config)?;
    let norms = CommutatorNorms::new(&exp.ham)?;
    let t = exp.noise.horizon;
    let h_eff = exp.dilation.effective_hamiltonian();
    let trace_nh = evolve_nonhermitian(&exp.psi0, &h_eff, t, &[])?.norm_sqr;
    let inputs = BoundInputs {
        t,
        dt: exp.noise.dt,
        n_traj: config.run.total_trajectories() as usize,
        o_norm: exp.observables.iter().map(Observable::op_norm).fold(0.0, f64::max),
        lambda: exp.qpd.overhead(t),
        p_succ: 1.0,
        trace_nh,
    };
    Ok(BoundsDocument {
        scheme: exp.noise.scheme,
        scheme_nstep: norms.nstep(exp.noise.scheme, t, exp.noise.dt),
        st_eo_sqrt_coefficient: norms.st_eo_nstep(t, exp.noise.dt).sqrt_coefficient,
        report: BoundReport::new(&norms, inputs)?,
        norms,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct QpdEntryDoc {
    pub pair: usize,
    pub left: &'static str,
    pub right: &'static str,
    pub q: f64,
    pub parity: i8,
}

#[derive(Debug, Clone, Serialize)]
pub struct QpdBondDoc {
    pub bond: usize,
    pub residual: f64,
    pub entries: Vec<QpdEntryDoc>,
}

/// What the `qpd` subcommand prints.
#[derive(Debug, Clone, Serialize)]
pub struct QpdDocument {
    pub q0: f64,
    pub kappa: f64,
    pub gamma_tot: f64,
    #[serde(rename = "Lambda_T")]
    pub lambda_t: f64,
    pub basis_condition_number: f64,
    pub prune_threshold: f64,
    pub bonds: Vec<QpdBondDoc>,
}

pub fn qpd_document(config: &ExperimentConfig) -> Result<QpdDocument> {
    let exp = Experiment::new(config)?;
    let q = &exp.qpd;
    let table = basis_channels();
    let bonds = (0..exp.model.n_bonds())
        .map(|bond| QpdBondDoc {
            bond,
            residual: q.bond_residuals[bond],
            entries: q
                .entries_for_bond(bond)
                .map(|e| QpdEntryDoc {
                    pair: e.pair,
                    left: table[e.pair / 16].label,
                    right: table[e.pair % 16].label,
                    q: e.q,
                    parity: e.parity(),
                })
                .collect(),
        })
        .collect();
    Ok(QpdDocument {
        q0: q.q0,
        kappa: q.kappa,
        gamma_tot: q.gamma_tot,
        lambda_t: q.overhead(exp.noise.horizon),
        basis_condition_number: basis_condition_number(),
        prune_threshold: q.prune_threshold,
        bonds,
    })
}

fn push_rows(
    rows: &mut Vec<ResultRow>,
    t: f64,
    observables: &[Observable],
    label: &str,
    trace: f64,
    value: impl Fn(usize) -> f64,
) {
    for (k, o) in observables.iter().enumerate() {
        let v = value(k);
        rows.push(ResultRow {
            time: t,
            observable: o.name.clone(),
            estimate: Some(v),
            jackknife_se: None,
            sum_num: v * trace,
            sum_den: trace,
            n_traj: 0,
            mode: label.to_string(),
        });
    }
}
