//! Periodic box discretization: wavenumbers, dealias mask, window tables.

use crate::error::Error;
use crate::fft::FftEngine;
use ndarray::Array2;
use std::sync::{Arc, OnceLock};

/// Windowed-coordinate tables shared by the background field, the angular
/// derivative and the leakage monitor.
///
/// The taper χ(r) is identity for r ≤ r_core, zero for r ≥ r_outer, and a
/// 9th-order polynomial blend in between (C⁴ at both knots). The windowed
/// coordinates are w = χ(|x|)·x, so the rotational transport field
/// (−w₂, w₁) is divergence-free everywhere.
#[derive(Debug)]
pub struct WindowTables {
    pub chi: Array2<f64>,
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    /// Points with |x| ≤ r_core (the region where w ≡ x).
    pub core_mask: Array2<bool>,
    pub r_core: f64,
    pub r_outer: f64,
    /// max |w(x)| over the grid: the transport-speed cap entering the CFL bound.
    pub wmax: f64,
    /// Fraction of grid points inside the core.
    pub core_point_fraction: f64,
}

/// 9th-order smoothstep: s(0)=0, s(1)=1, with four vanishing derivatives at
/// both ends (s'(t) = 630 t⁴(1−t)⁴).
fn smoothstep4(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        ((((70.0 * t - 315.0) * t + 540.0) * t - 420.0) * t + 126.0) * t.powi(5)
    }
}

/// Radial taper value at radius r.
pub fn taper(r: f64, r_core: f64, r_outer: f64) -> f64 {
    if r <= r_core {
        1.0
    } else if r >= r_outer {
        0.0
    } else {
        1.0 - smoothstep4((r - r_core) / (r_outer - r_core))
    }
}

#[derive(Debug)]
struct GridInner {
    n: usize,
    box_half_length: f64,
    dealias_fraction: f64,
    window_core_fraction: f64,
    engine: FftEngine,
    /// Signed integer frequency for each index.
    freq: Vec<i64>,
    /// Physical coordinate for each index, bit-exactly antisymmetric:
    /// coord[n−j] == −coord[j].
    coord: Vec<f64>,
    /// Spectral derivative multiplier m/L per index, Nyquist zeroed.
    dk: Vec<f64>,
    /// |k|² = (m₁²+m₂²)/L² per mode.
    k2: Array2<f64>,
    /// Radial 2/3-rule mask (true = keep). Keeps the zero mode.
    mask: Array2<bool>,
    window: OnceLock<WindowTables>,
}

/// Periodic box [−πL, πL)² with n points per side.
#[derive(Clone, Debug)]
pub struct Grid(Arc<GridInner>);

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.n() == other.n()
                && self.box_half_length() == other.box_half_length()
                && self.dealias_fraction() == other.dealias_fraction()
                && self.window_core_fraction() == other.window_core_fraction())
    }
}

impl Grid {
    /// The collar width between the exact core and the zero set of the window,
    /// as a fraction of πL.
    const TAPER_WIDTH_FRACTION: f64 = 0.15;

    pub fn new(
        n: usize,
        box_half_length: f64,
        dealias_fraction: f64,
        window_core_fraction: f64,
    ) -> Result<Grid, Error> {
        let mut problems = Vec::new();
        if n < 32 || n % 2 != 0 {
            problems.push(format!("grid.n = {n}: must be even and >= 32"));
        }
        if !(box_half_length > 0.0 && box_half_length.is_finite()) {
            problems.push(format!("grid.box_half_length = {box_half_length}: must be > 0"));
        }
        if !(dealias_fraction > 0.0 && dealias_fraction <= 1.0) {
            problems.push(format!(
                "grid.dealias_fraction = {dealias_fraction}: must lie in (0, 1]"
            ));
        }
        if !(window_core_fraction > 0.0 && window_core_fraction < 1.0) {
            problems.push(format!(
                "grid.window_core_fraction = {window_core_fraction}: must lie in (0, 1)"
            ));
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        let l = box_half_length;
        let dx = 2.0 * std::f64::consts::PI * l / n as f64;
        let half = n as i64 / 2;
        let freq: Vec<i64> = (0..n as i64).map(|j| if j < half { j } else { j - n as i64 }).collect();
        // Built from the signed integer offset so reflection j ↦ n−j negates
        // coordinates bit-exactly.
        let coord: Vec<f64> = (0..n as i64).map(|j| dx * (j - half) as f64).collect();
        let dk: Vec<f64> = freq
            .iter()
            .map(|&m| if m == -half { 0.0 } else { m as f64 / l })
            .collect();
        let k2 = Array2::from_shape_fn((n, n), |(i, j)| {
            let m1 = freq[i] as f64;
            let m2 = freq[j] as f64;
            (m1 * m1 + m2 * m2) / (l * l)
        });
        let cut2 = {
            let cut = dealias_fraction * n as f64 / 2.0;
            cut * cut
        };
        let mask = Array2::from_shape_fn((n, n), |(i, j)| {
            let m1 = freq[i] as f64;
            let m2 = freq[j] as f64;
            m1 * m1 + m2 * m2 < cut2
        });

        Ok(Grid(Arc::new(GridInner {
            n,
            box_half_length,
            dealias_fraction,
            window_core_fraction,
            engine: FftEngine::new(n),
            freq,
            coord,
            dk,
            k2,
            mask,
            window: OnceLock::new(),
        })))
    }

    /// Grid with the lab defaults (L = 1, 2/3 dealiasing, 0.8 core).
    pub fn with_defaults(n: usize) -> Result<Grid, Error> {
        Grid::new(n, 1.0, 2.0 / 3.0, 0.8)
    }

    pub fn n(&self) -> usize {
        self.0.n
    }
    pub fn box_half_length(&self) -> f64 {
        self.0.box_half_length
    }
    pub fn dealias_fraction(&self) -> f64 {
        self.0.dealias_fraction
    }
    pub fn window_core_fraction(&self) -> f64 {
        self.0.window_core_fraction
    }
    pub fn dx(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.0.box_half_length / self.0.n as f64
    }
    /// Box area (2πL)².
    pub fn area(&self) -> f64 {
        let s = 2.0 * std::f64::consts::PI * self.0.box_half_length;
        s * s
    }
    /// Quadrature weight Δx² of one grid point.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }
    pub(crate) fn engine(&self) -> &FftEngine {
        &self.0.engine
    }
    pub fn freq(&self, idx: usize) -> i64 {
        self.0.freq[idx]
    }
    pub fn coord(&self, idx: usize) -> f64 {
        self.0.coord[idx]
    }
    /// Spectral derivative multiplier (m/L, Nyquist zeroed).
    pub fn dk(&self, idx: usize) -> f64 {
        self.0.dk[idx]
    }
    pub fn k2(&self) -> &Array2<f64> {
        &self.0.k2
    }
    pub fn mask(&self) -> &Array2<bool> {
        &self.0.mask
    }
    /// Radius of the dealias cut in |k| units.
    pub fn k_cut(&self) -> f64 {
        self.0.dealias_fraction * self.0.n as f64 / (2.0 * self.0.box_half_length)
    }

    pub fn window(&self) -> &WindowTables {
        self.0.window.get_or_init(|| self.build_window())
    }

    fn build_window(&self) -> WindowTables {
        let n = self.0.n;
        let pi_l = std::f64::consts::PI * self.0.box_half_length;
        let r_core = self.0.window_core_fraction * pi_l;
        let r_outer = (self.0.window_core_fraction + Self::TAPER_WIDTH_FRACTION).min(0.99) * pi_l;
        let mut chi = Array2::zeros((n, n));
        let mut w1 = Array2::zeros((n, n));
        let mut w2 = Array2::zeros((n, n));
        let mut core_mask = Array2::from_elem((n, n), false);
        let mut wmax: f64 = 0.0;
        let mut core_count = 0usize;
        for i in 0..n {
            for j in 0..n {
                let x1 = self.0.coord[i];
                let x2 = self.0.coord[j];
                let r = (x1 * x1 + x2 * x2).sqrt();
                let c = taper(r, r_core, r_outer);
                chi[(i, j)] = c;
                w1[(i, j)] = c * x1;
                w2[(i, j)] = c * x2;
                wmax = wmax.max(c * r);
                if r <= r_core {
                    core_mask[(i, j)] = true;
                    core_count += 1;
                }
            }
        }
        WindowTables {
            chi,
            w1,
            w2,
            core_mask,
            r_core,
            r_outer,
            wmax,
            core_point_fraction: core_count as f64 / (n * n) as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        assert!(Grid::new(31, 1.0, 2.0 / 3.0, 0.8).is_err());
        assert!(Grid::new(16, 1.0, 2.0 / 3.0, 0.8).is_err());
        assert!(Grid::new(64, -1.0, 2.0 / 3.0, 0.8).is_err());
        assert!(Grid::new(64, 1.0, 0.0, 0.8).is_err());
        assert!(Grid::new(64, 1.0, 2.0 / 3.0, 1.0).is_err());
        // All violations reported at once.
        match Grid::new(17, 0.0, 2.0, 0.0) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 4),
            other => panic!("expected Config error, got {other:?}"),
        }
    }

    #[test]
    fn coordinates_reflect_bit_exactly() {
        let g = Grid::with_defaults(64).unwrap();
        for j in 1..64 {
            assert_eq!(g.coord(64 - j), -g.coord(j));
        }
        assert_eq!(g.coord(32), 0.0);
    }

    #[test]
    fn mask_is_radial_and_keeps_zero_mode() {
        let g = Grid::with_defaults(32).unwrap();
        assert!(g.mask()[(0, 0)]);
        let cut2 = (2.0 / 3.0 * 16.0) * (2.0 / 3.0 * 16.0);
        for i in 0..32 {
            for j in 0..32 {
                let m1 = g.freq(i) as f64;
                let m2 = g.freq(j) as f64;
                assert_eq!(g.mask()[(i, j)], m1 * m1 + m2 * m2 < cut2);
            }
        }
    }

    #[test]
    fn window_is_exact_on_core_and_zero_outside() {
        let g = Grid::with_defaults(64).unwrap();
        let w = g.window();
        assert!((w.r_core - 0.8 * std::f64::consts::PI).abs() < 1e-15);
        for i in 0..64 {
            for j in 0..64 {
                let x1 = g.coord(i);
                let x2 = g.coord(j);
                let r = (x1 * x1 + x2 * x2).sqrt();
                if r <= w.r_core {
                    assert_eq!(w.w1[(i, j)], x1);
                    assert_eq!(w.w2[(i, j)], x2);
                } else if r >= w.r_outer {
                    assert_eq!(w.w1[(i, j)], 0.0);
                    assert_eq!(w.w2[(i, j)], 0.0);
                }
            }
        }
        // Window tables inherit the exact grid symmetry.
        for i in 1..64 {
            for j in 0..64 {
                assert_eq!(w.w1[(64 - i, j)], -w.w1[(i, j)]);
            }
        }
    }

    #[test]
    fn taper_blend_is_monotone() {
        let mut prev = 1.0;
        for k in 0..=100 {
            let r = 2.0 + k as f64 * 0.01;
            let v = taper(r, 2.0, 3.0);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert_eq!(taper(1.9, 2.0, 3.0), 1.0);
        assert_eq!(taper(3.1, 2.0, 3.0), 0.0);
    }
}
