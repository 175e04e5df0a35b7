//! Experiment orchestration: dispatch a run configuration, persist the
//! fixed-schema diagnostics CSV, state snapshots and a JSON run record, run
//! inequality surveys and amplitude sweeps, and summarize records.
//!
//! Contracts:
//! * Diagnostics CSV: one row per sample, fixed column order (see
//!   [`CSV_COLUMNS`]), floats with 17 significant digits. Identical
//!   configuration and seed produce a byte-identical file.
//! * Run record: JSON with the byte-exact configuration echo, final
//!   functionals, worst-case monitors, decay fits, abort reason and artifact
//!   checksums.
//! * Exit codes (mapped by the CLI): 0 success, 2 configuration error,
//!   3 numerical-validity abort, 4 I/O error.

use crate::config::{Mode, RunConfig};
use crate::diagnostics::{self, EnergyFunctionals, SampleRow};
use crate::dynamics::{simulate, AbortReason, State, Trajectory};
use crate::error::Error;
use crate::fields::random_symmetric_field;
use crate::inequality::{ensemble_survey, preset_registry, InequalityReport};
use crate::snapshot;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Fixed diagnostics CSV schema (column order is part of the contract).
pub const CSV_COLUMNS: &[&str] = &[
    "t", "L2_u", "L2_b", "H2_u", "H2_b", "Hs_top_u", "Hs_top_b", "Hneg_u", "Hneg_b",
    "dtheta_H1_u", "dtheta_H1_b", "ut_L2", "bt_L2", "energy_law_drift", "parity_err_u",
    "parity_err_b", "zero_mode_max", "leakage", "E0", "E1", "e0", "e1", "E_total",
];

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_row(r: &SampleRow) -> String {
    let vals = [
        r.t,
        r.l2_u,
        r.l2_b,
        r.h2_u,
        r.h2_b,
        r.hs_top_u,
        r.hs_top_b,
        r.hneg_u,
        r.hneg_b,
        r.dtheta_h1_u,
        r.dtheta_h1_b,
        r.ut_l2,
        r.bt_l2,
        r.energy_law_drift,
        r.parity_err_u,
        r.parity_err_b,
        r.zero_mode_max,
        r.leakage,
        r.e_big0,
        r.e_big1,
        r.e_small0,
        r.e_small1,
        r.e_total,
    ];
    let mut line = String::with_capacity(32 * vals.len());
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        line.push_str(&fmt17(*v));
    }
    line
}

/// Render a trajectory as the fixed-schema CSV text.
pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    out.push_str(&CSV_COLUMNS.join(","));
    out.push('\n');
    for r in &traj.rows {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// Parse a diagnostics CSV back into rows of floats. Validates the header
/// and the column count; total over malformed input.
pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<Vec<f64>>, Error> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("diagnostics csv: empty".to_string()))?;
    if header != CSV_COLUMNS.join(",") {
        return Err(Error::Format("diagnostics csv: unexpected header".to_string()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.parse::<f64>()).collect();
        let vals = vals.map_err(|_| {
            Error::Format(format!("diagnostics csv: bad float on data line {}", i + 1))
        })?;
        if vals.len() != CSV_COLUMNS.len() {
            return Err(Error::Format(format!(
                "diagnostics csv: line {} has {} columns, expected {}",
                i + 1,
                vals.len(),
                CSV_COLUMNS.len()
            )));
        }
        rows.push(vals);
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArtifactChecksum {
    pub name: String,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFitRecord {
    pub series: String,
    pub exponent: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SurveySummary {
    pub inequality_id: String,
    pub trials: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub violations: usize,
}

/// Everything a run leaves behind, beyond the CSV and snapshots.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunRecord {
    /// Byte-identical echo of the configuration text that was executed.
    pub config_echo: String,
    pub mode: Mode,
    pub seed: u64,
    pub grid_n: usize,
    pub dt: f64,
    pub amplitude: f64,
    pub t_final: f64,
    pub sample_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functionals: Option<serde_json::Value>,
    pub max_energy_drift: f64,
    pub max_parity_error: f64,
    pub max_leakage: f64,
    pub max_zero_mode: f64,
    pub under_resolved: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub decay_fits: Vec<DecayFitRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub surveys: Vec<SurveySummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub children: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abort: Option<AbortReason>,
    pub wall_seconds: f64,
    pub artifacts: Vec<ArtifactChecksum>,
}

fn write_artifact(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    artifacts: &mut Vec<ArtifactChecksum>,
) -> Result<(), Error> {
    std::fs::write(dir.join(name), bytes)?;
    artifacts.push(ArtifactChecksum {
        name: name.to_string(),
        sha256: snapshot::sha256_hex(bytes),
    });
    Ok(())
}

/// Build the initial state a configuration describes.
pub fn initial_state(config: &RunConfig) -> Result<State, Error> {
    let grid = config.grid()?;
    let u = random_symmetric_field(&grid, &config.field_spec(config.u_class))?;
    let b = random_symmetric_field(&grid, &config.field_spec(config.b_class))?;
    State::new(u, b, 0.0)
}

/// Execute a configuration, writing artifacts under `out_dir`.
///
/// Numerical-validity aborts are recorded in the returned record (the CLI
/// maps them to exit 3); configuration and I/O problems are errors.
pub fn run(config: &RunConfig, out_dir: &Path, quiet: bool) -> Result<RunRecord, Error> {
    let started = std::time::Instant::now();
    std::fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::new();
    let config_echo = config.to_config_text();
    write_artifact(out_dir, "config.echo", config_echo.as_bytes(), &mut artifacts)?;

    let mut record = RunRecord {
        config_echo,
        mode: config.mode,
        seed: config.seed,
        grid_n: config.grid_n,
        dt: config.dt,
        amplitude: config.amplitude,
        t_final: 0.0,
        sample_rows: 0,
        functionals: None,
        max_energy_drift: 0.0,
        max_parity_error: 0.0,
        max_leakage: 0.0,
        max_zero_mode: 0.0,
        under_resolved: false,
        decay_fits: Vec::new(),
        surveys: Vec::new(),
        children: Vec::new(),
        abort: None,
        wall_seconds: 0.0,
        artifacts: Vec::new(),
    };

    match config.mode {
        Mode::Simulate | Mode::Linear => {
            let initial = initial_state(config)?;
            write_artifact(
                out_dir,
                "initial.snap",
                &snapshot::encode_snapshot(&initial),
                &mut artifacts,
            )?;
            if !quiet {
                eprintln!(
                    "mhd-lab: {} run, n = {}, dt = {}, t_end = {}, seed = {}",
                    config.mode, config.grid_n, config.dt, config.t_end, config.seed
                );
            }
            let traj = simulate(&initial, &config.solver_config())?;
            let csv = diagnostics_csv(&traj);
            write_artifact(out_dir, "diagnostics.csv", csv.as_bytes(), &mut artifacts)?;
            if let Some(final_state) = &traj.final_state {
                write_artifact(
                    out_dir,
                    "final.snap",
                    &snapshot::encode_snapshot(final_state),
                    &mut artifacts,
                )?;
            }
            record.abort = traj.abort.clone();
            record.t_final = traj.rows.last().map(|r| r.t).unwrap_or(0.0);
            record.sample_rows = traj.rows.len();
            let fx = diagnostics::energy_functionals(&traj)?;
            record.under_resolved = fx.under_resolved;
            record.functionals = Some(serde_json::to_value(&fx).expect("serializable"));
            record.max_energy_drift = fold_max(&traj, |r| r.energy_law_drift);
            record.max_parity_error = fold_max(&traj, |r| r.parity_err_u.max(r.parity_err_b));
            record.max_leakage = fold_max(&traj, |r| r.leakage);
            record.max_zero_mode = fold_max(&traj, |r| r.zero_mode_max);
            record.decay_fits = decay_fits(&traj);
            if !quiet {
                eprintln!(
                    "mhd-lab: {} samples, max drift {:.3e}, max leakage {:.3e}{}",
                    record.sample_rows,
                    record.max_energy_drift,
                    record.max_leakage,
                    record
                        .abort
                        .as_ref()
                        .map(|a| format!(", ABORT: {a}"))
                        .unwrap_or_default()
                );
            }
        }
        Mode::Inequalities => {
            let grid = config.grid()?;
            let params = config.survey_params();
            let ids = expand_survey_ids(&config.ineq_ids);
            for id in &ids {
                let report = ensemble_survey(&grid, id, &params, config.ineq_trials, config.seed)?;
                let fname = format!("ineq_{}.json", id.replace(':', "_"));
                write_artifact(
                    out_dir,
                    &fname,
                    serde_json::to_string_pretty(&report)
                        .expect("serializable")
                        .as_bytes(),
                    &mut artifacts,
                )?;
                let mut csv = String::from("trial,ratio\n");
                for (i, r) in report.ratios.iter().enumerate() {
                    let _ = writeln!(csv, "{i},{}", fmt17(*r));
                }
                write_artifact(
                    out_dir,
                    &format!("ineq_{}.csv", id.replace(':', "_")),
                    csv.as_bytes(),
                    &mut artifacts,
                )?;
                if !quiet {
                    eprintln!(
                        "mhd-lab: {id}: max ratio {:.6}, median {:.6}, violations {}",
                        report.max_ratio, report.median_ratio, report.violations
                    );
                }
                record.surveys.push(summarize_survey(&report));
            }
        }
        Mode::Sweep => {
            // Children run fully independently, each in its own directory,
            // with seeds derived from the parent seed.
            let jobs: Vec<(usize, f64)> = config
                .sweep_amplitudes
                .iter()
                .copied()
                .enumerate()
                .collect();
            let results: Vec<Result<(String, Option<AbortReason>), Error>> = jobs
                .par_iter()
                .map(|(idx, amplitude)| {
                    let mut child = config.clone();
                    child.mode = Mode::Simulate;
                    child.amplitude = *amplitude;
                    child.seed = config.seed.wrapping_add(*idx as u64 + 1);
                    child.sweep_amplitudes = Vec::new();
                    let name = format!("sweep_{idx:02}_amp_{amplitude:e}");
                    let child_dir = out_dir.join(&name);
                    let rec = run(&child, &child_dir, true)?;
                    write_record(&child_dir, &rec)?;
                    Ok((name, rec.abort))
                })
                .collect();
            for res in results {
                let (name, abort) = res?;
                if !quiet {
                    eprintln!(
                        "mhd-lab: sweep child {name}{}",
                        abort.as_ref().map(|a| format!(" ABORT: {a}")).unwrap_or_default()
                    );
                }
                if record.abort.is_none() {
                    record.abort = abort;
                }
                record.children.push(name);
            }
        }
    }

    record.wall_seconds = started.elapsed().as_secs_f64();
    record.artifacts = artifacts;
    Ok(record)
}

fn fold_max(traj: &Trajectory, f: impl Fn(&SampleRow) -> f64) -> f64 {
    traj.rows.iter().map(f).fold(0.0, f64::max)
}

fn decay_fits(traj: &Trajectory) -> Vec<DecayFitRecord> {
    let mut fits = Vec::new();
    let t_final = traj.rows.last().map(|r| r.t).unwrap_or(0.0);
    let t_min = 0.1 * t_final;
    let mut push = |series: &str, f: &dyn Fn(&SampleRow) -> f64| {
        let s = traj.series(series, f);
        if let Ok((exponent, r2)) = diagnostics::decay_fit(&s, t_min) {
            fits.push(DecayFitRecord {
                series: series.to_string(),
                exponent,
                r2,
            });
        }
    };
    push("u_hdot4", &|r: &SampleRow| {
        r.hdot_u.get(4).copied().unwrap_or(0.0)
    });
    push("u_hs_top", &|r: &SampleRow| r.hs_top_u);
    push("u_l2", &|r: &SampleRow| r.l2_u);
    fits
}

fn summarize_survey(r: &InequalityReport) -> SurveySummary {
    SurveySummary {
        inequality_id: r.inequality_id.clone(),
        trials: r.trials,
        max_ratio: r.max_ratio,
        median_ratio: r.median_ratio,
        violations: r.violations,
    }
}

/// Expand survey identifiers; "all" covers the Poincaré levels, the product
/// and commutator families, and every registry preset.
pub fn expand_survey_ids(ids: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for id in ids {
        if id == "all" {
            out.extend(
                ["poincare:l2", "poincare:h1", "poincare:h2"]
                    .iter()
                    .map(|s| s.to_string()),
            );
            for k in 1..=4 {
                out.push(format!("product:k{k}"));
                out.push(format!("commutator:k{k}"));
            }
            for p in preset_registry() {
                out.push(format!("gn:{}", p.id));
            }
        } else {
            out.push(id.clone());
        }
    }
    out.dedup();
    out
}

/// Persist a run record next to its artifacts.
pub fn write_record(out_dir: &Path, record: &RunRecord) -> Result<PathBuf, Error> {
    let path = out_dir.join("record.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(record).expect("serializable"),
    )?;
    Ok(path)
}

pub fn read_record(path: &Path) -> Result<RunRecord, Error> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("record {path:?}: {e}")))
}

/// Per-record summary row plus long-form series output.
#[derive(Debug, Serialize)]
pub struct ReportSummary {
    pub rows: Vec<SummaryRow>,
    pub skipped: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub record: String,
    pub mode: Mode,
    pub grid_n: usize,
    pub dt: f64,
    pub seed: u64,
    pub amplitude: f64,
    pub t_final: f64,
    pub e_total: f64,
    pub max_energy_drift: f64,
    pub max_parity_error: f64,
    pub max_leakage: f64,
    pub max_zero_mode: f64,
    /// Decay exponent of the top-order norm, recomputed from the stored CSV
    /// series (the recomputation oracle for the recorded fit).
    pub decay_exponent_recomputed: Option<f64>,
    pub decay_r2: Option<f64>,
    pub abort: Option<String>,
}

/// Summarize a set of run records: per-run summary table and a long-form
/// (record, t, variable, value) time-series file for plotting tools.
/// Missing or corrupt records are listed and skipped.
pub fn report(record_paths: &[PathBuf], out_dir: &Path) -> Result<ReportSummary, Error> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    let mut long = String::from("record,t,variable,value\n");

    for path in record_paths {
        let record = match read_record(path) {
            Ok(r) => r,
            Err(e) => {
                skipped.push(format!("{}: {e}", path.display()));
                continue;
            }
        };
        let name = path
            .parent()
            .and_then(|p| p.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());

        // Recompute the decay fit from the persisted CSV when present.
        let mut decay = None;
        let csv_path = path.parent().map(|p| p.join("diagnostics.csv"));
        if let Some(csv_path) = csv_path {
            if let Ok(text) = std::fs::read_to_string(&csv_path) {
                match parse_diagnostics_csv(&text) {
                    Ok(data) if data.len() >= 2 => {
                        let times: Vec<f64> = data.iter().map(|r| r[0]).collect();
                        let ht: Vec<f64> = data.iter().map(|r| r[5]).collect();
                        let t_final = *times.last().expect("nonempty");
                        if let Ok(series) =
                            diagnostics::NormSeries::new(times.clone(), ht, "Hs_top_u")
                        {
                            decay = diagnostics::decay_fit(&series, 0.1 * t_final).ok();
                        }
                        for row in &data {
                            for (ci, col) in CSV_COLUMNS.iter().enumerate().skip(1) {
                                let _ = writeln!(
                                    long,
                                    "{name},{},{col},{}",
                                    fmt17(row[0]),
                                    fmt17(row[ci])
                                );
                            }
                        }
                    }
                    Ok(_) => {}
                    Err(e) => skipped.push(format!("{}: {e}", csv_path.display())),
                }
            }
        }

        rows.push(SummaryRow {
            record: name,
            mode: record.mode,
            grid_n: record.grid_n,
            dt: record.dt,
            seed: record.seed,
            amplitude: record.amplitude,
            t_final: record.t_final,
            e_total: record
                .functionals
                .as_ref()
                .and_then(|f| f.get("E_total"))
                .and_then(|v| v.as_f64())
                .unwrap_or(0.0),
            max_energy_drift: record.max_energy_drift,
            max_parity_error: record.max_parity_error,
            max_leakage: record.max_leakage,
            max_zero_mode: record.max_zero_mode,
            decay_exponent_recomputed: decay.map(|d| d.0),
            decay_r2: decay.map(|d| d.1),
            abort: record.abort.as_ref().map(|a| a.to_string()),
        });
    }

    // Summary CSV.
    let mut summary = String::from(
        "record,mode,n,dt,seed,amplitude,t_final,E_total,max_energy_drift,max_parity_error,\
         max_leakage,max_zero_mode,decay_exponent,decay_r2,abort\n",
    );
    for r in &rows {
        let _ = writeln!(
            summary,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.record,
            r.mode,
            r.grid_n,
            fmt17(r.dt),
            r.seed,
            fmt17(r.amplitude),
            fmt17(r.t_final),
            fmt17(r.e_total),
            fmt17(r.max_energy_drift),
            fmt17(r.max_parity_error),
            fmt17(r.max_leakage),
            fmt17(r.max_zero_mode),
            r.decay_exponent_recomputed.map(fmt17).unwrap_or_default(),
            r.decay_r2.map(fmt17).unwrap_or_default(),
            r.abort.clone().unwrap_or_default(),
        );
    }
    std::fs::write(out_dir.join("summary.csv"), summary)?;
    std::fs::write(out_dir.join("series_long.csv"), long)?;
    Ok(ReportSummary { rows, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn quick_config(extra: &str) -> RunConfig {
        let base = "grid.n = 32\nsolver.dt = 0.002\nsolver.t_end = 0.02\nsolver.sample_stride = 2\n\
                    solver.leakage_abort_threshold = 1.0\ninitial.mode_band = 8\n";
        parse_config(&format!("{base}{extra}")).unwrap()
    }

    #[test]
    fn simulate_run_writes_consistent_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config("");
        let record = run(&cfg, dir.path(), true).unwrap();
        assert!(record.abort.is_none());
        assert!(record.sample_rows >= 2);
        assert_eq!(record.config_echo, cfg.to_config_text());

        // CSV parses back and matches the schema.
        let text = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        let rows = parse_diagnostics_csv(&text).unwrap();
        assert_eq!(rows.len(), record.sample_rows);

        // Checksums match file contents.
        for a in &record.artifacts {
            let bytes = std::fs::read(dir.path().join(&a.name)).unwrap();
            assert_eq!(snapshot::sha256_hex(&bytes), a.sha256, "{}", a.name);
        }

        // Snapshots decode.
        let st = snapshot::read_snapshot(&dir.path().join("final.snap")).unwrap();
        assert_eq!(st.grid().n(), 32);
    }

    #[test]
    fn identical_configs_give_byte_identical_csv() {
        let cfg = quick_config("seed = 9\n");
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run(&cfg, d1.path(), true).unwrap();
        run(&cfg, d2.path(), true).unwrap();
        let a = std::fs::read(d1.path().join("diagnostics.csv")).unwrap();
        let b = std::fs::read(d2.path().join("diagnostics.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inequalities_mode_emits_reports_per_entry() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config(
            "mode = inequalities\ninequalities.trials = 3\ninequalities.ids = poincare:l2, gn:hdot_midpoint\n",
        );
        let record = run(&cfg, dir.path(), true).unwrap();
        assert_eq!(record.surveys.len(), 2);
        assert!(dir.path().join("ineq_poincare_l2.json").exists());
        assert!(dir.path().join("ineq_gn_hdot_midpoint.csv").exists());
        assert_eq!(record.surveys[0].violations, 0);
    }

    #[test]
    fn sweep_runs_children_with_independent_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config("mode = sweep\nsweep.amplitudes = 0.001, 0.01\n");
        let record = run(&cfg, dir.path(), true).unwrap();
        assert_eq!(record.children.len(), 2);
        for child in &record.children {
            let rec = read_record(&dir.path().join(child).join("record.json")).unwrap();
            assert!(rec.sample_rows >= 2);
        }
        // Child seeds differ from each other.
        let r1 = read_record(&dir.path().join(&record.children[0]).join("record.json")).unwrap();
        let r2 = read_record(&dir.path().join(&record.children[1]).join("record.json")).unwrap();
        assert_ne!(r1.seed, r2.seed);
    }

    #[test]
    fn report_summarizes_and_skips_corrupt_records() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_config("");
        let record = run(&cfg, dir.path(), true).unwrap();
        let rec_path = write_record(dir.path(), &record).unwrap();

        let bogus = dir.path().join("missing.json");
        let out = tempfile::tempdir().unwrap();
        let summary = report(&[rec_path, bogus], out.path()).unwrap();
        assert_eq!(summary.rows.len(), 1);
        assert_eq!(summary.skipped.len(), 1);
        assert!(out.path().join("summary.csv").exists());
        let long = std::fs::read_to_string(out.path().join("series_long.csv")).unwrap();
        assert!(long.lines().count() > CSV_COLUMNS.len());

        // Empty input → empty summary.
        let empty = report(&[], out.path()).unwrap();
        assert!(empty.rows.is_empty());
    }

    #[test]
    fn csv_floats_carry_17_significant_digits() {
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
        assert_eq!(fmt17(3.0 / 23.0), "1.3043478260869565e-1");
    }
}
