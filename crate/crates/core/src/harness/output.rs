//! On-disk layout of an experiment:
//!
//! ```text
//! manifest.json          config, seeds, code version, one entry per run
//! runs.csv               one summary row per run
//! instances/<id>.json    sampled instance and derived constants
//! central/<id>.json      reference solution
//! traces/<id>.csv        every realized demand of the safe method
//! metrics/<id>.csv       per-iteration regret, distance and infeasibility
//! baseline/<id>.csv      dual-gradient trajectory
//! figures/<name>.csv     aggregated curves in long format
//! ```
//!
//! Floats are written with 17 significant digits so that they read back bit-exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Study};
use super::instance::{InstanceRecord, SweepCell};
use super::run::{
    aggregate, aggregate_curves, Failure, ResultBundle, RunCurves, RunOutcome, Series,
};
use crate::error::{Error, Result};
use crate::geometry::TOL_PROJ;
use crate::linalg::Vector;
use crate::metrics::CentralSolution;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// `17` significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub id: String,
    pub seed: u64,
    pub cell: Option<SweepCell>,
    pub hash: Option<String>,
    pub completed: bool,
    pub safety_ok: bool,
    pub failure: Option<Failure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub safety_ok: bool,
    pub runs: Vec<ManifestRun>,
}

impl Manifest {
    pub fn of(bundle: &ResultBundle) -> Self {
        Self {
            code_version: CODE_VERSION.to_string(),
            config: bundle.config.clone(),
            seeds: bundle.config.seeds.clone(),
            safety_ok: bundle.safety_ok(),
            runs: bundle
                .runs
                .iter()
                .map(|r| ManifestRun {
                    id: r.id.clone(),
                    seed: r.job.seed,
                    cell: r.job.cell,
                    hash: r.instance.as_ref().map(|i| i.hash.clone()),
                    completed: r.completed(),
                    safety_ok: r.safety_ok(),
                    failure: r.failure.clone(),
                })
                .collect(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join("manifest.json"))
    }
}

fn parse_err(path: &Path, reason: impl ToString) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| parse_err(path, e))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    csv::Writer::from_path(path).map_err(|e| parse_err(path, e))
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = |e: csv::Error| parse_err(path, e);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

fn indexed(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}{i}"))
}

fn trace_header(d: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "stage".into()];
    h.extend(indexed("x", d));
    h.extend(indexed("p", d));
    h.extend(["margin", "delta_t", "gamma_t", "eta_t", "f", "feasible"].map(String::from));
    h
}

fn write_trace(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let Some(trace) = &outcome.trace else {
        return Ok(());
    };
    let d = trace.schedule.d;
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            let mut row = vec![r.t.to_string(), r.stage.to_string()];
            row.extend(r.x.iter().map(|v| fmt_f64(*v)));
            row.extend(r.p.iter().map(|v| fmt_f64(*v)));
            row.extend([r.margin, r.delta_t, r.gamma_t, r.eta_t, r.f].map(fmt_f64));
            row.push(r.feasible.to_string());
            row
        })
        .collect();
    write_rows(path, &trace_header(d), &rows)
}

const METRICS_HEADER: [&str; 6] = [
    "k",
    "regret",
    "regret_over_log",
    "dist_sq",
    "infeasibility",
    "violation",
];

fn write_metrics(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let Some(m) = &outcome.metrics else {
        return Ok(());
    };
    let rows: Vec<Vec<String>> = (0..m.dist_sq.len())
        .map(|k| {
            let (regret, rol) = if k == 0 {
                (Some(0.0), None)
            } else {
                (
                    m.regret_curve.get(k - 1).copied(),
                    m.regret_over_log.get(k - 1).copied(),
                )
            };
            vec![
                k.to_string(),
                fmt_opt_f64(regret),
                fmt_opt_f64(rol),
                fmt_f64(m.dist_sq[k]),
                fmt_f64(m.infeasibility[k]),
                m.violations[k].to_string(),
            ]
        })
        .collect();
    write_rows(path, &METRICS_HEADER.map(String::from), &rows)
}

fn write_baseline(path: &Path, outcome: &RunOutcome) -> Result<()> {
    let Some(b) = &outcome.baseline else {
        return Ok(());
    };
    let Some(first) = b.trace.records.first() else {
        return Ok(());
    };
    let (d, m) = (first.x.len(), first.lambda.len());
    let mut header = vec!["t".to_string()];
    header.extend(indexed("x", d));
    header.extend(indexed("p", d));
    header.extend(indexed("lambda", m));
    header.extend(["f", "infeasibility", "dist_sq"].map(String::from));
    let rows: Vec<Vec<String>> = b
        .trace
        .records
        .iter()
        .zip(&b.dist_sq)
        .map(|(r, dist)| {
            let mut row = vec![r.t.to_string()];
            row.extend(
                r.x.iter()
                    .chain(r.p.iter())
                    .chain(r.lambda.iter())
                    .map(|v| fmt_f64(*v)),
            );
            row.extend([r.f, r.infeasibility, *dist].map(fmt_f64));
            row
        })
        .collect();
    write_rows(path, &header, &rows)
}

const RUNS_HEADER: [&str; 18] = [
    "id",
    "study",
    "seed",
    "n",
    "m",
    "omega",
    "gamma",
    "beta",
    "completed",
    "safety_ok",
    "regret",
    "initial_gap",
    "last_iterate_err",
    "max_infeasibility",
    "violation_count",
    "dg_max_infeasibility",
    "dg_final_dist_sq",
    "failure",
];

fn runs_row(study: Study, r: &RunOutcome) -> Vec<String> {
    let inst = r.instance.as_ref();
    let m = r.metrics.as_ref();
    let b = r.baseline.as_ref();
    vec![
        r.id.clone(),
        study.to_string(),
        r.job.seed.to_string(),
        fmt_opt(inst.map(|i| i.n)),
        fmt_opt(inst.and_then(|i| i.m)),
        fmt_opt(r.job.cell.map(|c| c.omega)),
        fmt_opt(r.job.cell.map(|c| c.gamma)),
        fmt_opt_f64(inst.map(|i| i.constants.beta)),
        r.completed().to_string(),
        r.safety_ok().to_string(),
        fmt_opt_f64(m.map(|m| m.regret)),
        fmt_opt_f64(m.map(|m| m.initial_gap)),
        fmt_opt_f64(m.map(|m| m.last_iterate_err)),
        fmt_opt_f64(m.map(|m| m.max_infeasibility)),
        fmt_opt(m.map(|m| m.violation_count)),
        fmt_opt_f64(b.map(|b| b.trace.max_infeasibility())),
        fmt_opt_f64(b.and_then(|b| b.dist_sq.last().copied())),
        r.failure
            .as_ref()
            .map(|f| f.message.clone())
            .unwrap_or_default(),
    ]
}

const FIGURE_HEADER: [&str; 8] = ["method", "beta", "gamma", "n", "k", "mean", "std", "count"];

/// Writes `figures/<name>.csv`, one file per figure.
pub fn write_figures(dir: &Path, series: &[Series]) -> Result<Vec<PathBuf>> {
    let mut by_figure: BTreeMap<&str, Vec<Vec<String>>> = BTreeMap::new();
    for s in series {
        let rows = by_figure.entry(s.figure.as_str()).or_default();
        for b in &s.bands {
            rows.push(vec![
                s.method.clone(),
                fmt_opt_f64(s.beta),
                fmt_opt(s.gamma),
                fmt_opt(s.n),
                b.k.to_string(),
                fmt_f64(b.mean),
                fmt_f64(b.std),
                b.count.to_string(),
            ]);
        }
    }
    let mut written = Vec::new();
    for (figure, rows) in by_figure {
        let path = dir.join("figures").join(format!("{figure}.csv"));
        write_rows(&path, &FIGURE_HEADER.map(String::from), &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes the whole bundle under `out_dir`. An empty bundle produces the manifest only.
pub fn emit_outputs(bundle: &ResultBundle, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("manifest.json"), &Manifest::of(bundle))?;
    if bundle.runs.is_empty() {
        return Ok(());
    }
    let study = bundle.config.study;
    let runs: Vec<Vec<String>> = bundle.runs.iter().map(|r| runs_row(study, r)).collect();
    write_rows(
        &out_dir.join("runs.csv"),
        &RUNS_HEADER.map(String::from),
        &runs,
    )?;
    for r in &bundle.runs {
        if let Some(inst) = &r.instance {
            fs::create_dir_all(out_dir.join("instances"))?;
            write_json(
                &out_dir.join("instances").join(format!("{}.json", r.id)),
                inst,
            )?;
        }
        if let Some(central) = &r.central {
            fs::create_dir_all(out_dir.join("central"))?;
            write_json(
                &out_dir.join("central").join(format!("{}.json", r.id)),
                central,
            )?;
        }
        write_trace(&out_dir.join("traces").join(format!("{}.csv", r.id)), r)?;
        write_metrics(&out_dir.join("metrics").join(format!("{}.csv", r.id)), r)?;
        write_baseline(&out_dir.join("baseline").join(format!("{}.csv", r.id)), r)?;
    }
    write_figures(out_dir, &aggregate(bundle))?;
    Ok(())
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| parse_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| parse_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<std::result::Result<Vec<Vec<String>>, _>>()
        .map_err(|e| parse_err(path, e))?;
    Ok((header, rows))
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| parse_err(path, format!("missing column {name}")))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| parse_err(path, format!("bad number {s:?}")))
}

/// One row of a trace file.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: i64,
    pub stage: crate::spnum::Stage,
    pub x: Vector,
    pub p: Vector,
    pub margin: f64,
    pub delta_t: f64,
    pub gamma_t: f64,
    pub eta_t: f64,
    pub f: f64,
    pub feasible: bool,
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let (header, rows) = read_table(path)?;
    let d = header.iter().filter(|h| h.starts_with('x')).count();
    if header != trace_header(d) {
        return Err(parse_err(path, "unexpected trace header"));
    }
    rows.iter()
        .map(|r| {
            let num = |j: usize| parse_f64(path, &r[j]);
            let vec = |from: usize| -> Result<Vector> {
                Ok(Vector::from_vec(
                    (from..from + d).map(num).collect::<Result<Vec<_>>>()?,
                ))
            };
            let base = 2 + 2 * d;
            Ok(TraceRow {
                t: r[0].parse().map_err(|_| parse_err(path, "bad t"))?,
                stage: r[1].parse()?,
                x: vec(2)?,
                p: vec(2 + d)?,
                margin: num(base)?,
                delta_t: num(base + 1)?,
                gamma_t: num(base + 2)?,
                eta_t: num(base + 3)?,
                f: num(base + 4)?,
                feasible: r[base + 5]
                    .parse()
                    .map_err(|_| parse_err(path, "bad feasible flag"))?,
            })
        })
        .collect()
}

/// Columns of a metrics file. `regret` and `regret_over_log` start at `k = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRows {
    pub regret: Vec<f64>,
    pub regret_over_log: Vec<f64>,
    pub dist_sq: Vec<f64>,
    pub infeasibility: Vec<f64>,
    pub violations: Vec<bool>,
}

pub fn read_metrics(path: &Path) -> Result<MetricsRows> {
    let (header, rows) = read_table(path)?;
    if header != METRICS_HEADER.map(String::from) {
        return Err(parse_err(path, "unexpected metrics header"));
    }
    let mut out = MetricsRows {
        regret: Vec::new(),
        regret_over_log: Vec::new(),
        dist_sq: Vec::new(),
        infeasibility: Vec::new(),
        violations: Vec::new(),
    };
    for (k, r) in rows.iter().enumerate() {
        if k > 0 {
            out.regret.push(parse_f64(path, &r[1])?);
            out.regret_over_log.push(parse_f64(path, &r[2])?);
        }
        out.dist_sq.push(parse_f64(path, &r[3])?);
        out.infeasibility.push(parse_f64(path, &r[4])?);
        out.violations.push(
            r[5].parse()
                .map_err(|_| parse_err(path, "bad violation flag"))?,
        );
    }
    Ok(out)
}

/// `(dist_sq, infeasibility)` columns of a baseline file.
pub fn read_baseline(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let (header, rows) = read_table(path)?;
    let dist = column(path, &header, "dist_sq")?;
    let infeas = column(path, &header, "infeasibility")?;
    let mut d = Vec::with_capacity(rows.len());
    let mut i = Vec::with_capacity(rows.len());
    for r in &rows {
        d.push(parse_f64(path, &r[dist])?);
        i.push(parse_f64(path, &r[infeas])?);
    }
    Ok((d, i))
}

fn load_curves(dir: &Path, manifest: &Manifest) -> Result<Vec<RunCurves>> {
    let mut out = Vec::new();
    for run in manifest.runs.iter().filter(|r| r.completed) {
        let inst: InstanceRecord =
            read_json(&dir.join("instances").join(format!("{}.json", run.id)))?;
        let m = read_metrics(&dir.join("metrics").join(format!("{}.csv", run.id)))?;
        let base_path = dir.join("baseline").join(format!("{}.csv", run.id));
        let baseline = if base_path.exists() {
            Some(read_baseline(&base_path)?)
        } else {
            None
        };
        out.push(RunCurves {
            beta: inst.constants.beta,
            cell: run.cell,
            regret: m.regret,
            regret_over_log: m.regret_over_log,
            dist_sq: m.dist_sq,
            infeasibility: m.infeasibility,
            dg_dist_sq: baseline.as_ref().map(|b| b.0.clone()),
            dg_infeasibility: baseline.map(|b| b.1),
        });
    }
    Ok(out)
}

/// Recomputes the figure data of an output directory from its per-run files and rewrites
/// `figures/`.
pub fn report(dir: &Path) -> Result<Vec<Series>> {
    let manifest = Manifest::read(dir)?;
    let series = aggregate_curves(manifest.config.study, &load_curves(dir, &manifest)?);
    write_figures(dir, &series)?;
    Ok(series)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub runs_checked: usize,
    pub rows_checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Re-checks a trace directory: instance hashes, feasibility and margins of every trace row,
/// the sampling radius, regret against the stored central value, and that the figure files
/// are the fold of the per-run files.
pub fn verify(dir: &Path) -> Result<VerifyReport> {
    let manifest = Manifest::read(dir)?;
    let mut rep = VerifyReport::default();
    for run in &manifest.runs {
        if !run.safety_ok {
            rep.problems
                .push(format!("{}: run reported a safety failure", run.id));
        }
        if !run.completed {
            continue;
        }
        let inst: InstanceRecord =
            read_json(&dir.join("instances").join(format!("{}.json", run.id)))?;
        check_run(dir, &run.id, &inst, &mut rep)?;
        rep.runs_checked += 1;
    }
    if manifest.runs.iter().any(|r| r.completed) {
        let series = aggregate_curves(manifest.config.study, &load_curves(dir, &manifest)?);
        let scratch = tempdir_in(dir)?;
        let fresh = write_figures(&scratch, &series);
        let compare = fresh.and_then(|paths| {
            for p in paths {
                let name = p.file_name().expect("figure file name");
                let stored = dir.join("figures").join(name);
                if fs::read(&stored).ok() != Some(fs::read(&p)?) {
                    rep.problems.push(format!(
                        "{} differs from its recomputation",
                        stored.display()
                    ));
                }
            }
            Ok(())
        });
        fs::remove_dir_all(&scratch)?;
        compare?;
    }
    Ok(rep)
}

fn tempdir_in(dir: &Path) -> Result<PathBuf> {
    let path = dir.join(".verify-scratch");
    if path.exists() {
        fs::remove_dir_all(&path)?;
    }
    fs::create_dir_all(&path)?;
    Ok(path)
}

fn check_run(dir: &Path, id: &str, inst: &InstanceRecord, rep: &mut VerifyReport) -> Result<()> {
    let bad = |rep: &mut VerifyReport, msg: String| rep.problems.push(format!("{id}: {msg}"));
    if inst.compute_hash() != inst.hash {
        bad(rep, "instance hash does not match its contents".into());
    }
    let set = inst.build_set()?;
    let s = &inst.schedule;
    let rows = read_trace(&dir.join("traces").join(format!("{id}.csv")))?;
    let mut current: Option<&TraceRow> = None;
    for row in &rows {
        rep.rows_checked += 1;
        let depth = set.depth(&row.x);
        if !row.feasible || depth < -TOL_PROJ {
            bad(
                rep,
                format!(
                    "row t={} ({}) is infeasible, depth {depth:e}",
                    row.t, row.stage
                ),
            );
        }
        if !close(depth, row.margin, 1e-12) {
            bad(
                rep,
                format!(
                    "row t={} stores margin {:e}, recomputed {depth:e}",
                    row.t, row.margin
                ),
            );
        }
        use crate::spnum::Stage;
        match row.stage {
            Stage::Update => {
                if !close(row.delta_t, s.shrinkage(row.t - 1), 1e-14) {
                    bad(
                        rep,
                        format!("row t={} has delta_t inconsistent with the schedule", row.t),
                    );
                }
                if depth < row.delta_t / 4.0 - TOL_PROJ {
                    bad(
                        rep,
                        format!("x^{} has depth {depth:e} below Delta/4", row.t),
                    );
                }
                current = Some(row);
            }
            Stage::Sample => {
                let Some(x) = current else {
                    bad(rep, format!("sample row t={} without an update row", row.t));
                    continue;
                };
                let dev = (&row.x - &x.x).norm();
                if dev > row.delta_t / 4.0 * (1.0 + 1e-9) + 1e-15 {
                    bad(
                        rep,
                        format!("sample t={} moved {dev:e}, more than Delta/4", row.t),
                    );
                }
                if !(depth > 0.0) {
                    bad(rep, format!("sample t={} is on the boundary", row.t));
                }
            }
            Stage::Init | Stage::Probe => {
                if row.t == 0 {
                    current = Some(row);
                }
            }
        }
    }

    let central: CentralSolution = read_json(&dir.join("central").join(format!("{id}.json")))?;
    if central.instance_hash.as_deref() != Some(inst.hash.as_str()) {
        bad(
            rep,
            "central solution belongs to a different instance".into(),
        );
    }
    let m = read_metrics(&dir.join("metrics").join(format!("{id}.csv")))?;
    let n = inst.n as f64;
    let updates = rows
        .iter()
        .filter(|r| r.stage == crate::spnum::Stage::Update);
    let samples = rows
        .iter()
        .filter(|r| r.stage == crate::spnum::Stage::Sample);
    let mut total = 0.0;
    for (k, (u, smp)) in updates.zip(samples).enumerate() {
        total += (2.0 * central.f_star - u.f - smp.f) / n;
        match m.regret.get(k) {
            Some(&r) if close(r, total, 1e-12) => {}
            other => bad(
                rep,
                format!("regret at k={} is {other:?}, recomputed {total:e}", k + 1),
            ),
        }
    }
    if m.violations.iter().any(|v| *v) {
        bad(rep, "metrics flag an infeasible iterate".into());
    }
    Ok(())
}
