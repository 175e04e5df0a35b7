//! Sobolev norms of all flavors, the energy functionals and total energy,
//! decay-rate fitting, and the support-leakage monitor.
//!
//! Norm conventions on the box of area A = (2πL)²:
//! homogeneous  ‖f‖²_{Ḣ^s} = A·Σ_k |k|^{2s} |f̂(k)|²,
//! inhomogeneous ‖f‖²_{H^s} = A·Σ_k (1+|k|²)^s |f̂(k)|².
//! Vector fields take the root-sum-square over components, and pair norms
//! ‖f,g‖² are implemented as ‖f‖² + ‖g‖².

use crate::dynamics::Trajectory;
use crate::error::Error;
use crate::fields::VectorField;
use crate::grid::Grid;
use crate::spectral::ScalarField;
use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

/// Homogeneous Ḣ^j norms for every integer order j = 0..=max_order in one
/// pass over the spectrum. Ḣ⁰ is the full L² norm (zero mode included);
/// higher orders annihilate the zero mode through the |k|^{2j} weight.
pub(crate) fn hdot_ladder_raw(data: &Array2<Complex64>, grid: &Grid, max_order: usize) -> Vec<f64> {
    let k2 = grid.k2();
    let mut sums = vec![0.0; max_order + 1];
    for (c, &kk) in data.iter().zip(k2.iter()) {
        let mag = c.norm_sqr();
        if mag == 0.0 {
            continue;
        }
        let mut p = mag;
        sums[0] += p;
        for s in sums.iter_mut().skip(1) {
            p *= kk;
            *s += p;
        }
    }
    let area = grid.area();
    sums.iter().map(|&v| (v * area).sqrt()).collect()
}

/// Ladder of Ḣ^j norms of a vector field (rss over components).
pub(crate) fn hdot_ladder_vector(v: &VectorField, max_order: usize) -> Vec<f64> {
    let a = hdot_ladder_raw(v.components[0].to_spectral().data(), v.grid(), max_order);
    let b = hdot_ladder_raw(v.components[1].to_spectral().data(), v.grid(), max_order);
    a.iter().zip(&b).map(|(x, y)| (x * x + y * y).sqrt()).collect()
}

/// Sobolev norm of a scalar field.
///
/// Negative homogeneous orders require a mean-free field.
pub fn sobolev_norm_scalar(f: &ScalarField, s: f64, homogeneous: bool) -> Result<f64, Error> {
    let sp = f.to_spectral();
    let grid = sp.grid().clone();
    if homogeneous && s < 0.0 {
        let z = sp.data()[(0, 0)].norm();
        let scale = sp.l2_norm();
        if z > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::pre(format!(
                "negative-index norm Ḣ^{s} requires a mean-free field (|zero mode| = {z:.3e})"
            )));
        }
    }
    let mut sum = 0.0;
    for (c, &kk) in sp.data().iter().zip(grid.k2().iter()) {
        let mag = c.norm_sqr();
        if mag == 0.0 {
            continue;
        }
        let w = if homogeneous {
            if kk == 0.0 {
                if s == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                kk.powf(s)
            }
        } else {
            (1.0 + kk).powf(s)
        };
        sum += w * mag;
    }
    Ok((sum * grid.area()).sqrt())
}

/// Sobolev norm of a vector field: root-sum-square of component norms.
pub fn sobolev_norm(v: &VectorField, s: f64, homogeneous: bool) -> Result<f64, Error> {
    let a = sobolev_norm_scalar(&v.components[0], s, homogeneous)?;
    let b = sobolev_norm_scalar(&v.components[1], s, homogeneous)?;
    Ok((a * a + b * b).sqrt())
}

/// ‖∇f‖_{H^s} = (A·Σ |k|²(1+|k|²)^s |f̂|²)^{1/2}, the dissipation flavor used
/// by the high-order functional.
pub fn grad_sobolev_norm_scalar(f: &ScalarField, s: f64) -> f64 {
    let sp = f.to_spectral();
    let grid = sp.grid().clone();
    let mut sum = 0.0;
    for (c, &kk) in sp.data().iter().zip(grid.k2().iter()) {
        let mag = c.norm_sqr();
        if mag == 0.0 {
            continue;
        }
        sum += kk * (1.0 + kk).powf(s) * mag;
    }
    (sum * grid.area()).sqrt()
}

pub fn grad_sobolev_norm(v: &VectorField, s: f64) -> f64 {
    let a = grad_sobolev_norm_scalar(&v.components[0], s);
    let b = grad_sobolev_norm_scalar(&v.components[1], s);
    (a * a + b * b).sqrt()
}

/// L^p norm by grid quadrature (p ≥ 1). For vectors, |v(x)| is the pointwise
/// Euclidean magnitude.
pub fn lp_norm(v: &VectorField, p: f64) -> f64 {
    let a = v.components[0].to_physical();
    let b = v.components[1].to_physical();
    let mut sum = 0.0;
    for (x, y) in a.data().iter().zip(b.data().iter()) {
        let speed2 = x.re * x.re + y.re * y.re;
        sum += speed2.powf(p / 2.0);
    }
    (sum * v.grid().cell_area()).powf(1.0 / p)
}

pub fn lp_norm_scalar(f: &ScalarField, p: f64) -> f64 {
    let a = f.to_physical();
    let mut sum = 0.0;
    for x in a.data().iter() {
        sum += x.re.abs().powf(p);
    }
    (sum * f.grid().cell_area()).powf(1.0 / p)
}

/// Fraction of L² mass outside the window core region.
pub fn support_leakage_scalar(f: &ScalarField) -> f64 {
    let p = f.to_physical();
    let grid = f.grid().clone();
    let core = &grid.window().core_mask;
    let mut inside = 0.0;
    let mut outside = 0.0;
    for (c, &is_core) in p.data().iter().zip(core.iter()) {
        let m = c.norm_sqr();
        if is_core {
            inside += m;
        } else {
            outside += m;
        }
    }
    let total = inside + outside;
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

pub fn support_leakage(v: &VectorField) -> f64 {
    let p0 = v.components[0].to_physical();
    let p1 = v.components[1].to_physical();
    let grid = v.grid().clone();
    let core = &grid.window().core_mask;
    let mut inside = 0.0;
    let mut outside = 0.0;
    for ((a, b), &is_core) in p0.data().iter().zip(p1.data().iter()).zip(core.iter()) {
        let m = a.norm_sqr() + b.norm_sqr();
        if is_core {
            inside += m;
        } else {
            outside += m;
        }
    }
    let total = inside + outside;
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

/// A labelled time series of nonnegative norm values.
#[derive(Clone, Debug, Serialize)]
pub struct NormSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl NormSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self, Error> {
        if times.len() != values.len() {
            return Err(Error::pre("series lengths differ".to_string()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::pre("series times must be strictly increasing".to_string()));
        }
        Ok(NormSeries {
            times,
            values,
            label: label.into(),
        })
    }
}

/// Least-squares slope of log(value) against log(1+t) for t ≥ t_min, with
/// the quality of fit r². Needs at least 10 positive samples.
pub fn decay_fit(series: &NormSeries, t_min: f64) -> Result<(f64, f64), Error> {
    let pts: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.values)
        .filter(|(&t, &v)| t >= t_min && v > 0.0)
        .map(|(&t, &v)| ((1.0 + t).ln(), v.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::Sampling(format!(
            "decay fit needs >= 10 positive samples beyond t_min = {t_min}, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::Sampling("degenerate time range for decay fit".to_string()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let r2 = if ss_tot <= 1e-300 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok((slope, r2))
}

/// One sample of the per-run diagnostics: the fixed CSV schema plus the
/// norm ladders the functionals consume.
#[derive(Clone, Debug, Serialize)]
pub struct SampleRow {
    pub t: f64,
    pub l2_u: f64,
    pub l2_b: f64,
    pub h2_u: f64,
    pub h2_b: f64,
    pub hs_top_u: f64,
    pub hs_top_b: f64,
    pub hneg_u: f64,
    pub hneg_b: f64,
    pub dtheta_h1_u: f64,
    pub dtheta_h1_b: f64,
    pub ut_l2: f64,
    pub bt_l2: f64,
    pub energy_law_drift: f64,
    pub parity_err_u: f64,
    pub parity_err_b: f64,
    pub zero_mode_max: f64,
    pub leakage: f64,
    pub e_big0: f64,
    pub e_big1: f64,
    pub e_small0: f64,
    pub e_small1: f64,
    pub e_total: f64,
    // Norm ladders (not part of the CSV schema).
    pub hdot_u: Vec<f64>,
    pub hdot_b: Vec<f64>,
    pub hdot_ut: Vec<f64>,
    pub hdot_bt: Vec<f64>,
    pub hdot_dthu: Vec<f64>,
    pub hdot_dthb: Vec<f64>,
    pub h1msig_u: f64,
    pub grad_htop_u: f64,
    pub under_resolved: bool,
}

fn trapezoid(rows: &[SampleRow], f: impl Fn(&SampleRow) -> f64) -> f64 {
    let mut acc = 0.0;
    for w in rows.windows(2) {
        let dt = w[1].t - w[0].t;
        acc += 0.5 * dt * (f(&w[0]) + f(&w[1]));
    }
    acc
}

fn check_orders(traj: &Trajectory, s: usize) -> Result<(), Error> {
    if s != traj.s {
        return Err(Error::pre(format!(
            "trajectory diagnostics were recorded for s = {}, requested s = {s}",
            traj.s
        )));
    }
    if traj.rows.is_empty() {
        return Err(Error::Sampling("empty trajectory".to_string()));
    }
    Ok(())
}

/// High-order functional: sup(‖u‖²_{H^{2s+6}}+‖b‖²_{H^{2s+6}}) + ∫‖∇u‖²_{H^{2s+6}}.
pub fn energy_e0_high(traj: &Trajectory, s: usize) -> Result<f64, Error> {
    check_orders(traj, s)?;
    let rows = &traj.rows;
    let sup = rows
        .iter()
        .map(|r| r.hs_top_u * r.hs_top_u + r.hs_top_b * r.hs_top_b)
        .fold(0.0, f64::max);
    Ok(sup + trapezoid(rows, |r| r.grad_htop_u * r.grad_htop_u))
}

/// Negative-index functional: sup(‖u‖²_{Ḣ^{−σ}}+‖b‖²_{Ḣ^{−σ}}) + ∫‖u‖²_{Ḣ^{1−σ}}.
pub fn energy_e1_neg(traj: &Trajectory, sigma: f64) -> Result<f64, Error> {
    if (sigma - traj.sigma).abs() > 1e-12 {
        return Err(Error::pre(format!(
            "trajectory diagnostics were recorded for sigma = {}, requested {sigma}",
            traj.sigma
        )));
    }
    if traj.rows.is_empty() {
        return Err(Error::Sampling("empty trajectory".to_string()));
    }
    let rows = &traj.rows;
    let sup = rows
        .iter()
        .map(|r| r.hneg_u * r.hneg_u + r.hneg_b * r.hneg_b)
        .fold(0.0, f64::max);
    Ok(sup + trapezoid(rows, |r| r.h1msig_u * r.h1msig_u))
}

fn wave_level_sup(r: &SampleRow, m: usize) -> f64 {
    r.hdot_ut[2 * m] * r.hdot_ut[2 * m]
        + r.hdot_bt[2 * m] * r.hdot_bt[2 * m]
        + r.hdot_dthu[2 * m] * r.hdot_dthu[2 * m]
        + r.hdot_dthb[2 * m] * r.hdot_dthb[2 * m]
        + r.hdot_u[2 * m + 2] * r.hdot_u[2 * m + 2]
        + r.hdot_b[2 * m + 2] * r.hdot_b[2 * m + 2]
}

fn wave_level_diss(r: &SampleRow, m: usize) -> f64 {
    r.hdot_ut[2 * m + 1] * r.hdot_ut[2 * m + 1]
        + r.hdot_bt[2 * m + 1] * r.hdot_bt[2 * m + 1]
        + r.hdot_dthu[2 * m + 1] * r.hdot_dthu[2 * m + 1]
        + r.hdot_dthb[2 * m + 1] * r.hdot_dthb[2 * m + 1]
}

/// Wave-level functional: Σ_{m=0..s} of sup(‖u_t,b_t‖²_{Ḣ^{2m}} +
/// ‖∂_θu,∂_θb‖²_{Ḣ^{2m}} + ‖u,b‖²_{Ḣ^{2m+2}}) plus the dissipation integral
/// ∫(‖u_t,b_t‖²_{Ḣ^{2m+1}} + ‖∂_θu,∂_θb‖²_{Ḣ^{2m+1}}).
pub fn energy_e0_wave(traj: &Trajectory, s: usize) -> Result<f64, Error> {
    check_orders(traj, s)?;
    let rows = &traj.rows;
    let mut total = 0.0;
    for m in 0..=s {
        let sup = rows.iter().map(|r| wave_level_sup(r, m)).fold(0.0, f64::max);
        let int = trapezoid(rows, |r| wave_level_diss(r, m));
        total += sup + int;
    }
    Ok(total)
}

/// Time-weighted wave-level functional: the (1+τ)²-weighted analogue over
/// m = 1..s−1. Definition-empty for s < 2.
pub fn energy_e1_wave(traj: &Trajectory, s: usize) -> Result<f64, Error> {
    if s < 2 {
        return Err(Error::DefinitionEmpty(format!(
            "weighted wave functional needs s >= 2 (sum over m = 1..s-1 empty for s = {s})"
        )));
    }
    check_orders(traj, s)?;
    let rows = &traj.rows;
    let w = |t: f64| (1.0 + t) * (1.0 + t);
    let mut total = 0.0;
    for m in 1..s {
        let sup = rows
            .iter()
            .map(|r| w(r.t) * wave_level_sup(r, m))
            .fold(0.0, f64::max);
        let int = trapezoid(rows, |r| w(r.t) * wave_level_diss(r, m));
        total += sup + int;
    }
    Ok(total)
}

/// The four functionals and the total energy for a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyFunctionals {
    pub s: usize,
    pub sigma: f64,
    #[serde(rename = "E0")]
    pub high_order: f64,
    #[serde(rename = "E1")]
    pub negative_index: f64,
    #[serde(rename = "e0")]
    pub wave_levels: f64,
    #[serde(rename = "e1")]
    pub weighted_wave_levels: f64,
    #[serde(rename = "E_total")]
    pub total: f64,
    /// Sticky resolution-guard flag: true if the H^{2s+6} norm was ever
    /// dominated (> 10%) by the top third of the kept spectrum.
    pub under_resolved: bool,
}

pub fn energy_functionals(traj: &Trajectory) -> Result<EnergyFunctionals, Error> {
    let s = traj.s;
    let sigma = traj.sigma;
    let high = energy_e0_high(traj, s)?;
    let neg = energy_e1_neg(traj, sigma)?;
    let wave = energy_e0_wave(traj, s)?;
    let weighted = if s >= 2 { energy_e1_wave(traj, s)? } else { 0.0 };
    Ok(EnergyFunctionals {
        s,
        sigma,
        high_order: high,
        negative_index: neg,
        wave_levels: wave,
        weighted_wave_levels: weighted,
        total: high + neg + wave + weighted,
        under_resolved: traj.rows.iter().any(|r| r.under_resolved),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::with_defaults(n).unwrap()
    }

    #[test]
    fn single_mode_eigenvalue_relation() {
        let g = grid(32);
        let f = ScalarField::from_physical_fn(&g, |x, y| (3.0 * x + 4.0 * y).cos());
        let l2 = f.l2_norm();
        for s in [0.5, 1.0, 2.0, 3.5] {
            let hs = sobolev_norm_scalar(&f, s, true).unwrap();
            let want = 25.0f64.powf(s / 2.0) * l2;
            assert!((hs - want).abs() < 1e-10 * want, "s={s}: {hs} vs {want}");
        }
        // s = 0 is the L² norm.
        assert!((sobolev_norm_scalar(&f, 0.0, true).unwrap() - l2).abs() < 1e-12 * l2);
    }

    #[test]
    fn lambda_multiplier_matches_hdot_norm() {
        let g = grid(32);
        let f = ScalarField::from_physical_fn(&g, |x, y| {
            (x.sin() + 0.5 * (2.0 * x + y).cos()) * (1.0 + 0.1 * (3.0 * y).sin())
        });
        let f = {
            let mut sp = f.to_spectral();
            sp.data_mut()[(0, 0)] = Complex64::default();
            sp
        };
        for s in [0.7, 1.0, 2.3] {
            let via_mult = f.fractional_multiplier(s).unwrap().l2_norm();
            let via_norm = sobolev_norm_scalar(&f, s, true).unwrap();
            assert!((via_mult - via_norm).abs() < 1e-12 * via_norm.max(1e-300));
        }
    }

    #[test]
    fn hdot_interpolation_inequality_on_random_fields() {
        // ‖f‖_{Ḣ¹} ≤ ‖f‖^{1/2}_{Ḣ⁰}‖f‖^{1/2}_{Ḣ²}: Cauchy–Schwarz in mode space.
        let g = grid(32);
        for seed in 0..8 {
            let f = ScalarField::from_physical_fn(&g, |x, y| {
                ((seed as f64 + 1.0) * 0.3 * x).sin() * (y + seed as f64).cos()
                    + 0.2 * ((2.0 - seed as f64 * 0.1) * (x - y)).sin()
            });
            let h0 = sobolev_norm_scalar(&f, 0.0, true).unwrap();
            let h1 = sobolev_norm_scalar(&f, 1.0, true).unwrap();
            let h2 = sobolev_norm_scalar(&f, 2.0, true).unwrap();
            assert!(h1 * h1 <= h0 * h2 * (1.0 + 1e-12), "seed {seed}");
        }
    }

    #[test]
    fn hdot_ladder_agrees_with_norms() {
        let g = grid(32);
        let f = ScalarField::from_physical_fn(&g, |x, y| (x + 0.3 * y).sin() * (0.5 * y).cos());
        let sp = f.to_spectral();
        let ladder = hdot_ladder_raw(sp.data(), &g, 5);
        for (j, &v) in ladder.iter().enumerate() {
            let want = sobolev_norm_scalar(&f, j as f64, true).unwrap();
            assert!((v - want).abs() < 1e-10 * want.max(1e-300), "order {j}");
        }
    }

    #[test]
    fn negative_index_norm_requires_zero_mean() {
        let g = grid(32);
        let f = ScalarField::from_physical_fn(&g, |_, _| 1.0);
        assert!(sobolev_norm_scalar(&f, -0.3, true).is_err());
        // Inhomogeneous negative index is fine.
        assert!(sobolev_norm_scalar(&f, -0.3, false).is_ok());
    }

    #[test]
    fn leakage_geometry() {
        let g = grid(64);
        // Core-supported bump leaks nothing.
        let f = ScalarField::from_physical_fn(&g, |x, y| (-(x * x + y * y) / 0.18).exp());
        assert!(support_leakage_scalar(&f) < 1e-12);
        // Uniform field: leakage equals the outside point fraction.
        let u = ScalarField::from_physical_fn(&g, |_, _| 1.0);
        let want = 1.0 - g.window().core_point_fraction;
        assert!((support_leakage_scalar(&u) - want).abs() < 1e-14);
        // Which itself approximates 1 − π r_core²/(2πL)² on a fine grid.
        let analytic = 1.0 - std::f64::consts::PI * g.window().r_core.powi(2) / g.area();
        assert!((want - analytic).abs() < 0.05);
        // Vector version: zero field has zero leakage by convention.
        let z = crate::fields::VectorField::zeros(&g, crate::spectral::Space::Spectral);
        assert_eq!(support_leakage(&z), 0.0);
    }

    #[test]
    fn decay_fit_recovers_synthetic_exponents() {
        let times: Vec<f64> = (0..60).map(|i| i as f64 * 0.5).collect();
        let values: Vec<f64> = times.iter().map(|&t| 3.0 / (1.0 + t)).collect();
        let s = NormSeries::new(times.clone(), values, "synthetic").unwrap();
        let (ex, r2) = decay_fit(&s, 1.0).unwrap();
        assert!((ex + 1.0).abs() < 1e-6, "exponent {ex}");
        assert!(r2 > 1.0 - 1e-12);

        let flat = NormSeries::new(times.clone(), vec![2.0; times.len()], "const").unwrap();
        let (ex, _) = decay_fit(&flat, 0.0).unwrap();
        assert!(ex.abs() < 1e-12);

        let short = NormSeries::new(vec![0.0, 1.0], vec![1.0, 1.0], "short").unwrap();
        assert!(decay_fit(&short, 0.0).is_err());
    }

    #[test]
    fn norm_series_validates() {
        assert!(NormSeries::new(vec![0.0, 1.0], vec![1.0], "bad").is_err());
        assert!(NormSeries::new(vec![0.0, 0.0], vec![1.0, 1.0], "bad").is_err());
    }

    #[test]
    fn norms_are_homogeneous_of_degree_one() {
        let g = grid(32);
        let f = ScalarField::from_physical_fn(&g, |x, y| (x + y).sin() * (x - 0.3).cos());
        let scaled = f.scale(2.5);
        for (s, hom) in [(1.5, true), (2.0, false), (0.0, true)] {
            let a = sobolev_norm_scalar(&f, s, hom).unwrap();
            let b = sobolev_norm_scalar(&scaled, s, hom).unwrap();
            assert!((b - 2.5 * a).abs() < 1e-12 * b);
        }
    }
}
