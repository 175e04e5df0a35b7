//! Run configuration: a flat, human-readable `key = value` text format.
//!
//! Lines are `key = value`, `#` starts a comment, blank lines are ignored.
//! Every key has a default, so the empty file is a valid configuration.
//! Parsing validates everything and reports *all* violations, not just the
//! first; the canonical serializer round-trips exactly.

use crate::dynamics::{RhsKind, SolverConfig};
use crate::error::Error;
use crate::fields::{ParityClass, RandomFieldSpec};
use crate::grid::Grid;
use crate::inequality::SurveyParams;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Linear,
    Inequalities,
    Sweep,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Simulate => "simulate",
            Mode::Linear => "linear",
            Mode::Inequalities => "inequalities",
            Mode::Sweep => "sweep",
        };
        write!(f, "{s}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: String,
    // grid
    pub grid_n: usize,
    pub box_half_length: f64,
    pub dealias_fraction: f64,
    pub window_core_fraction: f64,
    // solver
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub parity_enforcement: bool,
    pub sample_stride: usize,
    pub leakage_abort_threshold: f64,
    pub store_fields: bool,
    // functionals
    pub s: usize,
    pub sigma: f64,
    // initial data
    pub amplitude: f64,
    pub envelope_k0: f64,
    pub mode_band: usize,
    pub taper_sigma: f64,
    pub u_class: ParityClass,
    pub b_class: ParityClass,
    // inequality surveys
    pub ineq_trials: usize,
    pub ineq_ids: Vec<String>,
    pub ineq_envelope_k0: f64,
    pub ineq_mode_band: usize,
    pub ineq_taper_sigma: f64,
    // sweep
    pub sweep_amplitudes: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Simulate,
            seed: 0,
            out_dir: "out".to_string(),
            grid_n: 256,
            box_half_length: 1.0,
            dealias_fraction: 2.0 / 3.0,
            window_core_fraction: 0.8,
            dt: 1e-3,
            t_end: 10.0,
            cfl_safety: 0.9,
            parity_enforcement: true,
            sample_stride: 5,
            leakage_abort_threshold: 1e-4,
            store_fields: false,
            s: 2,
            sigma: 3.0 / 23.0,
            amplitude: 1e-2,
            envelope_k0: 2.0,
            mode_band: 24,
            taper_sigma: 0.6,
            u_class: ParityClass::VelocityLike,
            b_class: ParityClass::MagneticLike,
            ineq_trials: 100,
            ineq_ids: vec!["all".to_string()],
            ineq_envelope_k0: 3.0,
            ineq_mode_band: 12,
            ineq_taper_sigma: 0.55,
            sweep_amplitudes: vec![1e-3, 1e-2, 1e-1],
        }
    }
}

/// Documented key names, in canonical serialization order.
pub const KEYS: &[&str] = &[
    "mode",
    "seed",
    "output.dir",
    "grid.n",
    "grid.box_half_length",
    "grid.dealias_fraction",
    "grid.window_core_fraction",
    "solver.dt",
    "solver.t_end",
    "solver.cfl_safety",
    "solver.parity_enforcement",
    "solver.sample_stride",
    "solver.leakage_abort_threshold",
    "solver.store_fields",
    "functionals.s",
    "functionals.sigma",
    "initial.amplitude",
    "initial.envelope_k0",
    "initial.mode_band",
    "initial.taper_sigma",
    "initial.u_class",
    "initial.b_class",
    "inequalities.trials",
    "inequalities.ids",
    "inequalities.envelope_k0",
    "inequalities.mode_band",
    "inequalities.taper_sigma",
    "sweep.amplitudes",
];

fn parse_class(v: &str) -> Result<ParityClass, String> {
    match v {
        "velocity_like" => Ok(ParityClass::VelocityLike),
        "magnetic_like" => Ok(ParityClass::MagneticLike),
        other => Err(format!("expected velocity_like or magnetic_like, got '{other}'")),
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        other => Err(format!("expected true/false, got '{other}'")),
    }
}

/// Parse configuration text. Reports every violation found.
pub fn parse_config(text: &str) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    let mut problems: Vec<String> = Vec::new();
    let mut seen: Vec<String> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {}: expected 'key = value', got '{line}'", lineno + 1));
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            problems.push(format!("line {}: duplicate key '{key}'", lineno + 1));
            continue;
        }
        seen.push(key.to_string());

        macro_rules! set {
            ($field:expr, $ty:ty) => {
                match value.parse::<$ty>() {
                    Ok(v) => $field = v,
                    Err(_) => problems.push(format!(
                        "line {}: key '{key}': cannot parse '{value}' as {}",
                        lineno + 1,
                        stringify!($ty)
                    )),
                }
            };
        }

        match key {
            "mode" => match value {
                "simulate" => cfg.mode = Mode::Simulate,
                "linear" => cfg.mode = Mode::Linear,
                "inequalities" => cfg.mode = Mode::Inequalities,
                "sweep" => cfg.mode = Mode::Sweep,
                other => problems.push(format!(
                    "line {}: mode '{other}' is not one of simulate | linear | inequalities | sweep",
                    lineno + 1
                )),
            },
            "seed" => set!(cfg.seed, u64),
            "output.dir" => cfg.out_dir = value.to_string(),
            "grid.n" => set!(cfg.grid_n, usize),
            "grid.box_half_length" => set!(cfg.box_half_length, f64),
            "grid.dealias_fraction" => set!(cfg.dealias_fraction, f64),
            "grid.window_core_fraction" => set!(cfg.window_core_fraction, f64),
            "solver.dt" => set!(cfg.dt, f64),
            "solver.t_end" => set!(cfg.t_end, f64),
            "solver.cfl_safety" => set!(cfg.cfl_safety, f64),
            "solver.parity_enforcement" => match parse_bool(value) {
                Ok(v) => cfg.parity_enforcement = v,
                Err(e) => problems.push(format!("line {}: key '{key}': {e}", lineno + 1)),
            },
            "solver.sample_stride" => set!(cfg.sample_stride, usize),
            "solver.leakage_abort_threshold" => set!(cfg.leakage_abort_threshold, f64),
            "solver.store_fields" => match parse_bool(value) {
                Ok(v) => cfg.store_fields = v,
                Err(e) => problems.push(format!("line {}: key '{key}': {e}", lineno + 1)),
            },
            "functionals.s" => set!(cfg.s, usize),
            "functionals.sigma" => set!(cfg.sigma, f64),
            "initial.amplitude" => set!(cfg.amplitude, f64),
            "initial.envelope_k0" => set!(cfg.envelope_k0, f64),
            "initial.mode_band" => set!(cfg.mode_band, usize),
            "initial.taper_sigma" => set!(cfg.taper_sigma, f64),
            "initial.u_class" => match parse_class(value) {
                Ok(v) => cfg.u_class = v,
                Err(e) => problems.push(format!("line {}: key '{key}': {e}", lineno + 1)),
            },
            "initial.b_class" => match parse_class(value) {
                Ok(v) => cfg.b_class = v,
                Err(e) => problems.push(format!("line {}: key '{key}': {e}", lineno + 1)),
            },
            "inequalities.trials" => set!(cfg.ineq_trials, usize),
            "inequalities.ids" => {
                cfg.ineq_ids = value.split(',').map(|s| s.trim().to_string()).collect();
            }
            "inequalities.envelope_k0" => set!(cfg.ineq_envelope_k0, f64),
            "inequalities.mode_band" => set!(cfg.ineq_mode_band, usize),
            "inequalities.taper_sigma" => set!(cfg.ineq_taper_sigma, f64),
            "sweep.amplitudes" => {
                let mut vals = Vec::new();
                let mut ok = true;
                for part in value.split(',') {
                    match part.trim().parse::<f64>() {
                        Ok(v) => vals.push(v),
                        Err(_) => {
                            problems.push(format!(
                                "line {}: sweep.amplitudes: cannot parse '{}' as a real",
                                lineno + 1,
                                part.trim()
                            ));
                            ok = false;
                        }
                    }
                }
                if ok {
                    cfg.sweep_amplitudes = vals;
                }
            }
            other => problems.push(format!("line {}: unknown key '{other}'", lineno + 1)),
        }
    }

    // Range validation, delegated to the owning modules where possible.
    if let Err(Error::Config(mut v)) = Grid::new(
        cfg.grid_n,
        cfg.box_half_length,
        cfg.dealias_fraction,
        cfg.window_core_fraction,
    )
    .map(|_| ())
    {
        problems.append(&mut v);
    }
    if let Err(Error::Config(mut v)) = cfg.solver_config().validate() {
        problems.append(&mut v);
    }
    if !(cfg.amplitude > 0.0 && cfg.amplitude.is_finite()) {
        problems.push(format!("initial.amplitude = {}: must be > 0", cfg.amplitude));
    }
    if !(cfg.envelope_k0 > 0.0 && cfg.envelope_k0.is_finite()) {
        problems.push(format!("initial.envelope_k0 = {}: must be > 0", cfg.envelope_k0));
    }
    if !(cfg.taper_sigma > 0.0 && cfg.taper_sigma.is_finite()) {
        problems.push(format!("initial.taper_sigma = {}: must be > 0", cfg.taper_sigma));
    }
    if cfg.mode_band == 0 {
        problems.push("initial.mode_band must be >= 1".to_string());
    }
    for &a in &cfg.sweep_amplitudes {
        if !(a > 0.0 && a.is_finite()) {
            problems.push(format!("sweep.amplitudes entry {a}: must be > 0"));
        }
    }
    if cfg.mode == Mode::Sweep && cfg.sweep_amplitudes.is_empty() {
        problems.push("sweep mode needs a non-empty sweep.amplitudes list".to_string());
    }

    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems))
    }
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

impl RunConfig {
    /// Canonical serialized form; parses back to an identical configuration.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output.dir = {}", self.out_dir);
        let _ = writeln!(s, "grid.n = {}", self.grid_n);
        let _ = writeln!(s, "grid.box_half_length = {:?}", self.box_half_length);
        let _ = writeln!(s, "grid.dealias_fraction = {:?}", self.dealias_fraction);
        let _ = writeln!(s, "grid.window_core_fraction = {:?}", self.window_core_fraction);
        let _ = writeln!(s, "solver.dt = {:?}", self.dt);
        let _ = writeln!(s, "solver.t_end = {:?}", self.t_end);
        let _ = writeln!(s, "solver.cfl_safety = {:?}", self.cfl_safety);
        let _ = writeln!(s, "solver.parity_enforcement = {}", self.parity_enforcement);
        let _ = writeln!(s, "solver.sample_stride = {}", self.sample_stride);
        let _ = writeln!(s, "solver.leakage_abort_threshold = {:?}", self.leakage_abort_threshold);
        let _ = writeln!(s, "solver.store_fields = {}", self.store_fields);
        let _ = writeln!(s, "functionals.s = {}", self.s);
        let _ = writeln!(s, "functionals.sigma = {:?}", self.sigma);
        let _ = writeln!(s, "initial.amplitude = {:?}", self.amplitude);
        let _ = writeln!(s, "initial.envelope_k0 = {:?}", self.envelope_k0);
        let _ = writeln!(s, "initial.mode_band = {}", self.mode_band);
        let _ = writeln!(s, "initial.taper_sigma = {:?}", self.taper_sigma);
        let _ = writeln!(s, "initial.u_class = {}", self.u_class);
        let _ = writeln!(s, "initial.b_class = {}", self.b_class);
        let _ = writeln!(s, "inequalities.trials = {}", self.ineq_trials);
        let _ = writeln!(s, "inequalities.ids = {}", self.ineq_ids.join(", "));
        let _ = writeln!(s, "inequalities.envelope_k0 = {:?}", self.ineq_envelope_k0);
        let _ = writeln!(s, "inequalities.mode_band = {}", self.ineq_mode_band);
        let _ = writeln!(s, "inequalities.taper_sigma = {:?}", self.ineq_taper_sigma);
        let amps: Vec<String> = self.sweep_amplitudes.iter().map(|a| format!("{a:?}")).collect();
        let _ = writeln!(s, "sweep.amplitudes = {}", amps.join(", "));
        s
    }

    pub fn grid(&self) -> Result<Grid, Error> {
        Grid::new(
            self.grid_n,
            self.box_half_length,
            self.dealias_fraction,
            self.window_core_fraction,
        )
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            t_end: self.t_end,
            cfl_safety: self.cfl_safety,
            parity_enforcement: self.parity_enforcement,
            sample_stride: self.sample_stride,
            leakage_abort_threshold: self.leakage_abort_threshold,
            store_fields: self.store_fields,
            rhs_kind: if self.mode == Mode::Linear {
                RhsKind::Linearized
            } else {
                RhsKind::Full
            },
            s: self.s,
            sigma: self.sigma,
        }
    }

    pub fn field_spec(&self, class: ParityClass) -> RandomFieldSpec {
        RandomFieldSpec {
            seed: self.seed,
            class,
            amplitude: self.amplitude,
            envelope_k0: self.envelope_k0,
            mode_band: self.mode_band,
            taper_sigma: self.taper_sigma,
            s: self.s,
            sigma: self.sigma,
        }
    }

    pub fn survey_params(&self) -> SurveyParams {
        SurveyParams {
            class: self.u_class,
            envelope_k0: self.ineq_envelope_k0,
            mode_band: self.ineq_mode_band,
            taper_sigma: self.ineq_taper_sigma,
            sigma: self.sigma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_applies_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.grid_n, 256);
        assert_eq!(cfg.s, 2);
        assert!((cfg.sigma - 3.0 / 23.0).abs() < 1e-15);
        assert!((cfg.dt - 1e-3).abs() < 1e-18);

        let cfg = parse_config("# just a comment\n\n").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn sigma_below_theorem_range_is_rejected_with_bound() {
        let err = parse_config("functionals.sigma = 0.05").unwrap_err();
        match err {
            Error::Config(v) => {
                assert!(v.iter().any(|m| m.contains("[3/23, 1)")), "messages: {v:?}");
            }
            other => panic!("expected Config, got {other:?}"),
        }
    }

    #[test]
    fn all_violations_reported_at_once() {
        let text = "grid.n = 7\nsolver.dt = -1\nfunctionals.sigma = 2.0\nbogus.key = 1\nmode = nope\n";
        match parse_config(text) {
            Err(Error::Config(v)) => {
                assert!(v.len() >= 5, "expected >= 5 violations, got {v:?}");
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_and_malformed_lines_are_diagnosed() {
        let text = "seed = 1\nseed = 2\nnot a kv line\n";
        match parse_config(text) {
            Err(Error::Config(v)) => {
                assert!(v.iter().any(|m| m.contains("duplicate")));
                assert!(v.iter().any(|m| m.contains("expected 'key = value'")));
            }
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_identical() {
        let text = "mode = sweep\nseed = 42\ngrid.n = 96\nsolver.dt = 0.002\nfunctionals.sigma = 0.25\nsweep.amplitudes = 0.001, 0.01, 0.1\ninitial.u_class = velocity_like\n";
        let cfg = parse_config(text).unwrap();
        let canon = cfg.to_config_text();
        let cfg2 = parse_config(&canon).unwrap();
        assert_eq!(cfg, cfg2);
        // And the canonical form is a fixed point.
        assert_eq!(canon, cfg2.to_config_text());
    }

    #[test]
    fn parser_never_panics_on_junk(){
        for junk in [
            "= = =",
            "grid.n = 999999999999999999999999",
            "solver.dt = nan",
            "sweep.amplitudes = a,b,c",
            "initial.u_class = sideways",
            "\u{0}\u{1}\u{2}",
            "functionals.s = -3",
        ] {
            let _ = parse_config(junk);
        }
    }
}
