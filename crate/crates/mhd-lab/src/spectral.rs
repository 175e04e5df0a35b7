//! Scalar fields on the periodic box and the Fourier-side operator toolbox:
//! transforms, |k|^s multipliers, dealiasing, Helmholtz solves.
//!
//! Fields are immutable values; every operation returns a new field. A field
//! carries its grid and a space tag. Real-valued fields in spectral space
//! satisfy conjugate symmetry c(−k) = c̄(k).

use crate::error::Error;
use crate::grid::Grid;
use ndarray::Array2;
use num_complex::Complex64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Space {
    Physical,
    Spectral,
}

#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Grid,
    space: Space,
    data: Array2<Complex64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid, space: Space) -> Self {
        let n = grid.n();
        ScalarField {
            grid: grid.clone(),
            space,
            data: Array2::default((n, n)),
        }
    }

    /// Sample a real-valued function of (x₁, x₂) on the grid.
    pub fn from_physical_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let data = Array2::from_shape_fn((n, n), |(i, j)| {
            Complex64::new(f(grid.coord(i), grid.coord(j)), 0.0)
        });
        ScalarField {
            grid: grid.clone(),
            space: Space::Physical,
            data,
        }
    }

    /// Wrap existing physical samples; the size must match the grid.
    pub fn from_physical_array(grid: &Grid, values: Array2<f64>) -> Result<Self, Error> {
        if values.dim() != (grid.n(), grid.n()) {
            return Err(Error::config(format!(
                "field size {:?} does not match grid n = {}",
                values.dim(),
                grid.n()
            )));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            space: Space::Physical,
            data: values.mapv(|v| Complex64::new(v, 0.0)),
        })
    }

    /// Build a field directly from spectral coefficients indexed by signed
    /// integer modes. The caller is responsible for conjugate symmetry when a
    /// real field is intended (see [`ScalarField::hermitize`]).
    pub fn from_spectral_fn(grid: &Grid, f: impl Fn(i64, i64) -> Complex64) -> Self {
        let n = grid.n();
        let data = Array2::from_shape_fn((n, n), |(i, j)| f(grid.freq(i), grid.freq(j)));
        ScalarField {
            grid: grid.clone(),
            space: Space::Spectral,
            data,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn space(&self) -> Space {
        self.space
    }
    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.data
    }
    pub(crate) fn from_parts(grid: Grid, space: Space, data: Array2<Complex64>) -> Self {
        ScalarField { grid, space, data }
    }

    pub fn is_spectral(&self) -> bool {
        self.space == Space::Spectral
    }

    /// Forward transform (no-op if already spectral). Invertible to roundoff;
    /// Parseval holds against the physical quadrature.
    pub fn to_spectral(&self) -> Self {
        match self.space {
            Space::Spectral => self.clone(),
            Space::Physical => {
                let mut data = self.data.clone();
                self.grid.engine().forward_spectral(&mut data);
                ScalarField {
                    grid: self.grid.clone(),
                    space: Space::Spectral,
                    data,
                }
            }
        }
    }

    pub fn to_physical(&self) -> Self {
        match self.space {
            Space::Physical => self.clone(),
            Space::Spectral => {
                let mut data = self.data.clone();
                self.grid.engine().inverse_physical(&mut data);
                ScalarField {
                    grid: self.grid.clone(),
                    space: Space::Physical,
                    data,
                }
            }
        }
    }

    /// Real parts of the physical samples.
    pub fn real_values(&self) -> Array2<f64> {
        self.to_physical().data.mapv(|c| c.re)
    }

    pub fn zero_mode(&self) -> Complex64 {
        self.to_spectral().data[(0, 0)]
    }

    /// Project onto the conjugate-symmetric (real-field) part.
    pub fn hermitize(&self) -> Self {
        let s = self.to_spectral();
        let n = self.grid.n();
        let data = Array2::from_shape_fn((n, n), |(i, j)| {
            let m = s.data[((n - i) % n, (n - j) % n)].conj();
            0.5 * (s.data[(i, j)] + m)
        });
        ScalarField {
            grid: self.grid.clone(),
            space: Space::Spectral,
            data,
        }
    }

    /// Fractional derivative multiplier Λ^s: each mode scaled by |k|^s.
    ///
    /// For s > 0 the zero mode is annihilated; for s < 0 the field must be
    /// (numerically) mean-free, and the zero mode maps to zero.
    pub fn fractional_multiplier(&self, s: f64) -> Result<Self, Error> {
        let f = self.to_spectral();
        if s == 0.0 {
            return Ok(f);
        }
        if s < 0.0 {
            let scale = l2_of_spectral(&f.data, f.grid.area());
            let z = f.data[(0, 0)].norm();
            if z > 1e-10 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::pre(format!(
                    "fractional multiplier with s = {s} requires a mean-free field \
                     (|zero mode| = {z:.3e}, ||f||_L2 = {scale:.3e})"
                )));
            }
        }
        let k2 = f.grid.k2();
        let half = s / 2.0;
        let mut data = f.data;
        for (c, &kk) in data.iter_mut().zip(k2.iter()) {
            *c = if kk == 0.0 {
                Complex64::default()
            } else {
                *c * kk.powf(half)
            };
        }
        Ok(ScalarField {
            grid: f.grid,
            space: Space::Spectral,
            data,
        })
    }

    /// (I − αΔ)⁻¹ via division by 1 + α|k|².
    pub fn helmholtz_solve(&self, alpha: f64) -> Result<Self, Error> {
        if !(alpha >= 0.0) {
            return Err(Error::pre(format!("helmholtz_solve needs alpha >= 0, got {alpha}")));
        }
        let f = self.to_spectral();
        let k2 = f.grid.k2();
        let mut data = f.data;
        for (c, &kk) in data.iter_mut().zip(k2.iter()) {
            *c /= 1.0 + alpha * kk;
        }
        Ok(ScalarField {
            grid: f.grid,
            space: Space::Spectral,
            data,
        })
    }

    /// Zero every mode outside the radial 2/3-rule mask (idempotent).
    pub fn dealias(&self) -> Self {
        let f = self.to_spectral();
        let mask = f.grid.mask();
        let mut data = f.data;
        for (c, &keep) in data.iter_mut().zip(mask.iter()) {
            if !keep {
                *c = Complex64::default();
            }
        }
        ScalarField {
            grid: f.grid,
            space: Space::Spectral,
            data,
        }
    }

    /// Spectral partial derivative along `axis` (0 → ∂₁, 1 → ∂₂).
    /// The Nyquist line is annihilated.
    pub fn derivative(&self, axis: usize) -> Self {
        assert!(axis < 2, "axis must be 0 or 1");
        let f = self.to_spectral();
        let n = f.grid.n();
        let mut data = f.data;
        for i in 0..n {
            for j in 0..n {
                let k = f.grid.dk(if axis == 0 { i } else { j });
                data[(i, j)] *= Complex64::new(0.0, k);
            }
        }
        ScalarField {
            grid: f.grid,
            space: Space::Spectral,
            data,
        }
    }

    /// L² norm of the field over the box.
    pub fn l2_norm(&self) -> f64 {
        match self.space {
            Space::Spectral => l2_of_spectral(&self.data, self.grid.area()),
            Space::Physical => {
                let sum: f64 = self.data.iter().map(|c| c.norm_sqr()).sum();
                (sum * self.grid.cell_area()).sqrt()
            }
        }
    }

    /// Max |f| over grid points.
    pub fn linf_norm(&self) -> f64 {
        self.to_physical().data.iter().map(|c| c.re.abs()).fold(0.0, f64::max)
    }

    /// Pointwise product computed in physical space (no dealiasing applied).
    pub fn pointwise_mul(&self, other: &Self) -> Result<Self, Error> {
        self.check_same_grid(other)?;
        let a = self.to_physical();
        let b = other.to_physical();
        let data = Array2::from_shape_fn(a.data.dim(), |idx| {
            Complex64::new(a.data[idx].re * b.data[idx].re, 0.0)
        });
        Ok(ScalarField {
            grid: self.grid.clone(),
            space: Space::Physical,
            data,
        })
    }

    pub fn check_same_grid(&self, other: &Self) -> Result<(), Error> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "n = {} vs n = {}",
                self.grid.n(),
                other.grid.n()
            )));
        }
        Ok(())
    }

    /// self + c·other, in a common space.
    pub fn add_scaled(&self, c: f64, other: &Self) -> Result<Self, Error> {
        self.check_same_grid(other)?;
        let (a, b) = match (self.space, other.space) {
            (Space::Spectral, _) | (_, Space::Spectral) => (self.to_spectral(), other.to_spectral()),
            _ => (self.clone(), other.clone()),
        };
        let mut data = a.data;
        for (x, y) in data.iter_mut().zip(b.data.iter()) {
            *x += c * y;
        }
        Ok(ScalarField {
            grid: self.grid.clone(),
            space: a.space,
            data,
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        for x in out.data.iter_mut() {
            *x *= c;
        }
        out
    }
}

pub(crate) fn l2_of_spectral(data: &Array2<Complex64>, area: f64) -> f64 {
    let sum: f64 = data.iter().map(|c| c.norm_sqr()).sum();
    (sum * area).sqrt()
}
