//! Vector fields, reflection parity classes, the windowed background field,
//! the angular derivative ∂_θ = x₁∂₂ − x₂∂₁, and symmetry-respecting random
//! initial data.
//!
//! The two parity classes are the component-wise reflection symmetries that
//! persist under the perturbation dynamics: `VelocityLike` means (v₁ odd in
//! x₁ & even in x₂, v₂ even in x₁ & odd in x₂); `MagneticLike` is the
//! mirrored assignment. Both force every angular Fourier mode on circles
//! about the origin to be odd, hence a vanishing zeroth angular mode.
//!
//! ∂_θ exchanges the two classes (e.g. ∂_θ(x₁ g(r)) = −x₂ g(r)), which is
//! exactly what makes the coupled system parity-consistent: ∂_θ b is
//! velocity-like and sits in the u-equation, ∂_θ u is magnetic-like and sits
//! in the b-equation.

use crate::diagnostics;
use crate::error::Error;
use crate::grid::Grid;
use crate::spectral::{ScalarField, Space};
use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Leakage above this hard threshold invalidates the windowed ∂_θ entirely.
pub const HARD_LEAKAGE_THRESHOLD: f64 = 1e-2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParityClass {
    VelocityLike,
    MagneticLike,
}

impl ParityClass {
    /// The class ∂_θ maps this class onto.
    pub fn conjugate(self) -> Self {
        match self {
            ParityClass::VelocityLike => ParityClass::MagneticLike,
            ParityClass::MagneticLike => ParityClass::VelocityLike,
        }
    }

    /// Reflection signs (under x₁ ↦ −x₁, under x₂ ↦ −x₂) of component `comp`:
    /// −1 odd, +1 even.
    pub fn component_signs(self, comp: usize) -> (f64, f64) {
        match (self, comp) {
            (ParityClass::VelocityLike, 0) => (-1.0, 1.0),
            (ParityClass::VelocityLike, 1) => (1.0, -1.0),
            (ParityClass::MagneticLike, 0) => (1.0, -1.0),
            (ParityClass::MagneticLike, 1) => (-1.0, 1.0),
            _ => unreachable!("component index out of range"),
        }
    }

    /// Parity of the stream function generating this class via ∇⊥.
    pub fn stream_signs(self) -> (f64, f64) {
        match self {
            ParityClass::VelocityLike => (-1.0, -1.0),
            ParityClass::MagneticLike => (1.0, 1.0),
        }
    }
}

impl std::fmt::Display for ParityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParityClass::VelocityLike => write!(f, "velocity_like"),
            ParityClass::MagneticLike => write!(f, "magnetic_like"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VectorField {
    pub components: [ScalarField; 2],
    /// Asserted symmetry class, if any.
    pub parity: Option<ParityClass>,
    /// Asserted spectral divergence-freeness.
    pub divergence_free: bool,
}

impl VectorField {
    pub fn zeros(grid: &Grid, space: Space) -> Self {
        VectorField {
            components: [ScalarField::zeros(grid, space), ScalarField::zeros(grid, space)],
            parity: None,
            divergence_free: true,
        }
    }

    pub fn from_components(c1: ScalarField, c2: ScalarField) -> Result<Self, Error> {
        c1.check_same_grid(&c2)?;
        Ok(VectorField {
            components: [c1, c2],
            parity: None,
            divergence_free: false,
        })
    }

    pub fn grid(&self) -> &Grid {
        self.components[0].grid()
    }

    pub fn to_spectral(&self) -> Self {
        self.map(|c| c.to_spectral())
    }

    pub fn to_physical(&self) -> Self {
        self.map(|c| c.to_physical())
    }

    pub fn map(&self, f: impl Fn(&ScalarField) -> ScalarField) -> Self {
        VectorField {
            components: [f(&self.components[0]), f(&self.components[1])],
            parity: self.parity,
            divergence_free: self.divergence_free,
        }
    }

    pub fn dealias(&self) -> Self {
        self.map(|c| c.dealias())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|c| c.scale(s))
    }

    pub fn add_scaled(&self, s: f64, other: &Self) -> Result<Self, Error> {
        Ok(VectorField {
            components: [
                self.components[0].add_scaled(s, &other.components[0])?,
                self.components[1].add_scaled(s, &other.components[1])?,
            ],
            parity: if self.parity == other.parity { self.parity } else { None },
            divergence_free: self.divergence_free && other.divergence_free,
        })
    }

    /// Root-sum-square of component L² norms.
    pub fn l2_norm(&self) -> f64 {
        let a = self.components[0].l2_norm();
        let b = self.components[1].l2_norm();
        (a * a + b * b).sqrt()
    }

    /// Max pointwise speed |v(x)| over the grid.
    pub fn linf_norm(&self) -> f64 {
        let p0 = self.components[0].to_physical();
        let p1 = self.components[1].to_physical();
        p0.data()
            .iter()
            .zip(p1.data().iter())
            .map(|(a, b)| (a.re * a.re + b.re * b.re).sqrt())
            .fold(0.0, f64::max)
    }

    /// Spectral divergence ∂₁v₁ + ∂₂v₂.
    pub fn divergence(&self) -> ScalarField {
        let d1 = self.components[0].derivative(0);
        let d2 = self.components[1].derivative(1);
        d1.add_scaled(1.0, &d2).expect("same grid")
    }

    /// Scalar curl ∂₁v₂ − ∂₂v₁.
    pub fn curl(&self) -> ScalarField {
        let a = self.components[1].derivative(0);
        let b = self.components[0].derivative(1);
        a.add_scaled(-1.0, &b).expect("same grid")
    }

    /// Relative spectral divergence ‖∇·v‖ / ‖Λv‖ (0 for the zero field).
    pub fn relative_divergence(&self) -> f64 {
        let div = self.divergence().l2_norm();
        let grad = {
            let g1 = self.components[0].fractional_multiplier(1.0).expect("s > 0");
            let g2 = self.components[1].fractional_multiplier(1.0).expect("s > 0");
            (g1.l2_norm().powi(2) + g2.l2_norm().powi(2)).sqrt()
        };
        if grad == 0.0 {
            0.0
        } else {
            div / grad
        }
    }
}

/// Scalar parity projection: group average over the four reflections with
/// the given signs, done in spectral space (reflection is k ↦ −k per axis).
pub fn scalar_parity_project(f: &ScalarField, s1: f64, s2: f64) -> ScalarField {
    let sp = f.to_spectral();
    let n = sp.grid().n();
    let d = sp.data();
    let data = Array2::from_shape_fn((n, n), |(i, j)| {
        let im = (n - i) % n;
        let jm = (n - j) % n;
        0.25 * (d[(i, j)] + s1 * d[(im, j)] + s2 * d[(i, jm)] + s1 * s2 * d[(im, jm)])
    });
    ScalarField::from_parts(sp.grid().clone(), Space::Spectral, data)
}

/// Orthogonal projection of a vector field onto a parity class.
/// Idempotent, L²-contractive, and preserves divergence-freeness.
pub fn parity_project(v: &VectorField, class: ParityClass) -> VectorField {
    let (s1a, s2a) = class.component_signs(0);
    let (s1b, s2b) = class.component_signs(1);
    VectorField {
        components: [
            scalar_parity_project(&v.components[0], s1a, s2a),
            scalar_parity_project(&v.components[1], s1b, s2b),
        ],
        parity: Some(class),
        divergence_free: v.divergence_free,
    }
}

/// Relative distance to the parity class: ‖v − P v‖_{L²} / ‖v‖_{L²}.
pub fn parity_error(v: &VectorField, class: ParityClass) -> f64 {
    let norm = v.l2_norm();
    if norm == 0.0 {
        return 0.0;
    }
    let p = parity_project(v, class);
    let d = v.to_spectral().add_scaled(-1.0, &p).expect("same grid");
    d.l2_norm() / norm
}

/// Leray projection onto divergence-free fields: v̂ − k (k·v̂)/|k|².
/// Annihilates gradients, keeps the (constant) zero mode, idempotent.
pub fn leray_project(v: &VectorField) -> VectorField {
    let a = v.components[0].to_spectral();
    let b = v.components[1].to_spectral();
    let grid = a.grid().clone();
    let n = grid.n();
    let mut da = a.data().clone();
    let mut db = b.data().clone();
    for i in 0..n {
        let k1 = grid.freq(i) as f64;
        for j in 0..n {
            let k2 = grid.freq(j) as f64;
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                continue;
            }
            let dot = (k1 * da[(i, j)] + k2 * db[(i, j)]) / kk;
            da[(i, j)] -= k1 * dot;
            db[(i, j)] -= k2 * dot;
        }
    }
    VectorField {
        components: [
            ScalarField::from_parts(grid.clone(), Space::Spectral, da),
            ScalarField::from_parts(grid, Space::Spectral, db),
        ],
        parity: v.parity,
        divergence_free: true,
    }
}

/// Velocity field of a scalar stream function: v = ∇⊥φ = (−∂₂φ, ∂₁φ).
/// The mean of φ is gauge; it is dropped. The result is divergence-free to
/// roundoff and its curl equals Δφ.
pub fn from_stream(phi: &ScalarField) -> VectorField {
    let mut p = phi.to_spectral();
    p.data_mut()[(0, 0)] = Complex64::default();
    let c1 = p.derivative(1).scale(-1.0);
    let c2 = p.derivative(0);
    VectorField {
        components: [c1, c2],
        parity: None,
        divergence_free: true,
    }
}

/// The windowed background magnetic field χ(|x|)·(x₂, −x₁)ᵀ.
///
/// Equal to (x₂, −x₁)ᵀ exactly on the core region, zero in a collar near the
/// box boundary, divergence-free everywhere (radial taper times a rotational
/// field), with curl −2χ − rχ′ ≡ −2 on the core.
#[derive(Clone, Debug)]
pub struct BackgroundField {
    grid: Grid,
}

impl BackgroundField {
    pub fn new(grid: &Grid) -> Self {
        BackgroundField { grid: grid.clone() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// The windowed equilibrium as a (spectral) vector field.
    pub fn windowed_field(&self) -> VectorField {
        let w = self.grid.window();
        let n = self.grid.n();
        let c1 = ScalarField::from_physical_array(
            &self.grid,
            Array2::from_shape_fn((n, n), |idx| w.w2[idx]),
        )
        .expect("grid-sized");
        let c2 = ScalarField::from_physical_array(
            &self.grid,
            Array2::from_shape_fn((n, n), |idx| -w.w1[idx]),
        )
        .expect("grid-sized");
        VectorField {
            components: [c1.to_spectral(), c2.to_spectral()],
            parity: Some(ParityClass::MagneticLike),
            divergence_free: true,
        }
    }
}

/// Full magnetic field from a perturbation: background + b on the core region.
pub fn full_from_perturbation(b: &VectorField, bg: &BackgroundField) -> Result<VectorField, Error> {
    if *b.grid() != *bg.grid() {
        return Err(Error::GridMismatch("perturbation vs background".into()));
    }
    bg.windowed_field().add_scaled(1.0, &b.to_spectral())
}

/// Inverse of [`full_from_perturbation`].
pub fn perturbation_from_full(full: &VectorField, bg: &BackgroundField) -> Result<VectorField, Error> {
    if *full.grid() != *bg.grid() {
        return Err(Error::GridMismatch("full field vs background".into()));
    }
    full.to_spectral().add_scaled(-1.0, &bg.windowed_field())
}

fn leakage_guard(f: &ScalarField) -> Result<(), Error> {
    let leak = diagnostics::support_leakage_scalar(f);
    if leak > HARD_LEAKAGE_THRESHOLD {
        return Err(Error::TruncationInvalid(format!(
            "support leakage {leak:.3e} exceeds hard threshold {HARD_LEAKAGE_THRESHOLD:.0e}; \
             the windowed angular derivative is not a valid truncation for this field"
        )));
    }
    Ok(())
}

/// Windowed angular derivative, advective form: w₁∂₂f − w₂∂₁f, dealiased and
/// mean-free. Exact wherever the window equals the identity; fields must be
/// essentially core-supported (hard leakage guard).
pub fn d_theta(f: &ScalarField) -> Result<ScalarField, Error> {
    leakage_guard(f)?;
    Ok(d_theta_unchecked(f, false))
}

/// Windowed angular derivative in skew-symmetrized form: ½(advective +
/// divergence form of the transport field (−w₂, w₁)). Pointwise-exactly
/// antisymmetric under the collocation inner product, which is what makes the
/// ⟨u, ∂_θb⟩ + ⟨b, ∂_θu⟩ cancellation hold to roundoff in the dynamics.
pub fn d_theta_skew(f: &ScalarField) -> Result<ScalarField, Error> {
    leakage_guard(f)?;
    Ok(d_theta_unchecked(f, true))
}

pub(crate) fn d_theta_unchecked(f: &ScalarField, skew: bool) -> ScalarField {
    let grid = f.grid().clone();
    let w = grid.window();
    let d1 = f.derivative(0).to_physical();
    let d2 = f.derivative(1).to_physical();
    let adv = Array2::from_shape_fn((grid.n(), grid.n()), |idx| {
        Complex64::new(w.w1[idx] * d2.data()[idx].re - w.w2[idx] * d1.data()[idx].re, 0.0)
    });
    let adv = ScalarField::from_parts(grid.clone(), Space::Physical, adv).to_spectral();
    let combined = if skew {
        let p = f.to_physical();
        let g1 = Array2::from_shape_fn((grid.n(), grid.n()), |idx| {
            Complex64::new(-w.w2[idx] * p.data()[idx].re, 0.0)
        });
        let g2 = Array2::from_shape_fn((grid.n(), grid.n()), |idx| {
            Complex64::new(w.w1[idx] * p.data()[idx].re, 0.0)
        });
        let div = ScalarField::from_parts(grid.clone(), Space::Physical, g1)
            .to_spectral()
            .derivative(0)
            .add_scaled(
                1.0,
                &ScalarField::from_parts(grid.clone(), Space::Physical, g2)
                    .to_spectral()
                    .derivative(1),
            )
            .expect("same grid");
        adv.scale(0.5).add_scaled(0.5, &div).expect("same grid")
    } else {
        adv
    };
    let mut out = combined.dealias();
    out.data_mut()[(0, 0)] = Complex64::default();
    out
}

/// Componentwise ∂_θ of a vector field. The parity tag moves to the
/// conjugate class; exact divergence-freeness is not preserved
/// (∇·(∂_θ v) = −curl v for divergence-free v).
pub fn d_theta_vector(v: &VectorField) -> Result<VectorField, Error> {
    Ok(VectorField {
        components: [d_theta(&v.components[0])?, d_theta(&v.components[1])?],
        parity: v.parity.map(ParityClass::conjugate),
        divergence_free: false,
    })
}

pub(crate) fn d_theta_vector_unchecked(v: &VectorField, skew: bool) -> VectorField {
    VectorField {
        components: [
            d_theta_unchecked(&v.components[0], skew),
            d_theta_unchecked(&v.components[1], skew),
        ],
        parity: v.parity.map(ParityClass::conjugate),
        divergence_free: false,
    }
}

/// Zeroth angular Fourier mode on circles: for each radius, the max over
/// components of |(1/2π) ∮ v dθ|.
///
/// The mean of a trigonometric polynomial over the circle of radius r is
/// Σ_k c_k J₀(|k| r); coefficients are binned by |k|² so the Bessel factor is
/// evaluated once per distinct modulus. This agrees with equispaced-point
/// trigonometric interpolation of the same circle integral to far below
/// roundoff for |k|r ≪ number of points (see tests).
pub fn zero_angular_mode(v: &VectorField, radii: &[f64]) -> Result<Vec<f64>, Error> {
    let grid = v.grid();
    let r_core = grid.window().r_core;
    for &r in radii {
        if !(r >= 0.0 && r <= r_core) {
            return Err(Error::pre(format!(
                "radius {r} outside the window core region [0, {r_core}]"
            )));
        }
    }
    // BTreeMap: the summation order must be deterministic so identical runs
    // produce byte-identical diagnostics.
    let mut bins: [std::collections::BTreeMap<i64, Complex64>; 2] =
        [std::collections::BTreeMap::new(), std::collections::BTreeMap::new()];
    for (c, bin) in v.components.iter().zip(bins.iter_mut()) {
        let s = c.to_spectral();
        let n = grid.n();
        for i in 0..n {
            for j in 0..n {
                let val = s.data()[(i, j)];
                if val.norm_sqr() == 0.0 {
                    continue;
                }
                let m1 = grid.freq(i);
                let m2 = grid.freq(j);
                *bin.entry(m1 * m1 + m2 * m2).or_default() += val;
            }
        }
    }
    let l = grid.box_half_length();
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst: f64 = 0.0;
        for bin in &bins {
            let mut mean = Complex64::default();
            for (&q, &s) in bin {
                let kr = (q as f64).sqrt() / l * r;
                mean += s * libm::j0(kr);
            }
            worst = worst.max(mean.norm());
        }
        out.push(worst);
    }
    Ok(out)
}

/// Circle mean by direct evaluation of the trigonometric polynomial on
/// `points` equispaced angles — the quadrature oracle for
/// [`zero_angular_mode`]. O(modes·points); intended for tests.
pub fn circle_mean_quadrature(f: &ScalarField, r: f64, points: usize) -> Complex64 {
    let s = f.to_spectral();
    let grid = f.grid();
    let n = grid.n();
    let l = grid.box_half_length();
    let mut acc = Complex64::default();
    for p in 0..points {
        let th = 2.0 * std::f64::consts::PI * p as f64 / points as f64;
        let (x1, x2) = (r * th.cos(), r * th.sin());
        let mut val = Complex64::default();
        for i in 0..n {
            for j in 0..n {
                let c = s.data()[(i, j)];
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                let phase = (grid.freq(i) as f64 * x1 + grid.freq(j) as f64 * x2) / l;
                val += c * Complex64::new(phase.cos(), phase.sin());
            }
        }
        acc += val;
    }
    acc / points as f64
}

/// Deterministic generator of divergence-free, parity-exact, core-supported
/// random fields, built as ∇⊥ of a parity-appropriate random stream function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomFieldSpec {
    pub seed: u64,
    pub class: ParityClass,
    /// Target value of ‖v‖_{Ḣ^{−σ}} + ‖v‖_{H^{2s+6}} after scaling.
    pub amplitude: f64,
    /// Gaussian spectral envelope scale k₀.
    pub envelope_k0: f64,
    /// Modes are drawn for m₁, m₂ ≤ band, independent of the grid
    /// resolution, so the same seed describes the same field on any grid
    /// whose dealias mask contains the band.
    pub mode_band: usize,
    /// Physical Gaussian taper scale confining support to the core.
    pub taper_sigma: f64,
    /// Sobolev orders used for the amplitude normalization.
    pub s: usize,
    pub sigma: f64,
}

impl Default for RandomFieldSpec {
    fn default() -> Self {
        RandomFieldSpec {
            seed: 0,
            class: ParityClass::VelocityLike,
            amplitude: 1e-2,
            envelope_k0: 2.0,
            mode_band: 24,
            taper_sigma: 0.6,
            s: 2,
            sigma: 3.0 / 23.0,
        }
    }
}

/// Standard-normal draw via Box–Muller (keeps the dependency set small).
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_symmetric_field(grid: &Grid, spec: &RandomFieldSpec) -> Result<VectorField, Error> {
    if !(spec.amplitude > 0.0) {
        return Err(Error::pre(format!("amplitude must be > 0, got {}", spec.amplitude)));
    }
    let n = grid.n();
    let l = grid.box_half_length();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(match spec.class {
        ParityClass::VelocityLike => 1,
        ParityClass::MagneticLike => 2,
    });

    // Stream function with the class parity, drawn in fixed mode order.
    let mut psi = Array2::<Complex64>::default((n, n));
    let band = spec.mode_band as i64;
    let odd = spec.class == ParityClass::VelocityLike;
    let lo = if odd { 1 } else { 0 };
    {
        let mut add = |m1: i64, m2: i64, c: Complex64| {
            let i = m1.rem_euclid(n as i64) as usize;
            let j = m2.rem_euclid(n as i64) as usize;
            psi[(i, j)] += c;
        };
        for m1 in lo..=band {
            for m2 in lo..=band {
                if m1 == 0 && m2 == 0 {
                    continue;
                }
                let kk = ((m1 * m1 + m2 * m2) as f64) / (l * l);
                let a = normal(&mut rng) * (-kk / (2.0 * spec.envelope_k0 * spec.envelope_k0)).exp();
                if odd {
                    // a·sin(m₁x₁/L)·sin(m₂x₂/L)
                    let q = Complex64::new(-a / 4.0, 0.0);
                    add(m1, m2, q);
                    add(-m1, -m2, q);
                    add(m1, -m2, -q);
                    add(-m1, m2, -q);
                } else {
                    // a·cos(m₁x₁/L)·cos(m₂x₂/L); coincident entries accumulate.
                    let q = Complex64::new(a / 4.0, 0.0);
                    add(m1, m2, q);
                    add(m1, -m2, q);
                    add(-m1, m2, q);
                    add(-m1, -m2, q);
                }
            }
        }
    }
    let psi = ScalarField::from_parts(grid.clone(), Space::Spectral, psi);

    // Confine to the core with a radial Gaussian taper of the stream function
    // (keeps ∇⊥ exactly divergence-free), then drop the gauge mean.
    let sig2 = 2.0 * spec.taper_sigma * spec.taper_sigma;
    let psi_phys = psi.to_physical();
    let tapered = Array2::from_shape_fn((n, n), |(i, j)| {
        let x1 = grid.coord(i);
        let x2 = grid.coord(j);
        psi_phys.data()[(i, j)] * (-(x1 * x1 + x2 * x2) / sig2).exp()
    });
    let tapered = ScalarField::from_parts(grid.clone(), Space::Physical, tapered);

    let v = from_stream(&tapered.to_spectral());
    let v = parity_project(&v.dealias(), spec.class);

    // Scale the combined negative-index + high-order norm to the amplitude.
    let scale = diagnostics::sobolev_norm(&v, -spec.sigma, true)?
        + diagnostics::sobolev_norm(&v, (2 * spec.s + 6) as f64, false)?;
    if !(scale > 0.0) {
        return Err(Error::pre("degenerate random field: zero norm".to_string()));
    }
    let mut out = v.scale(spec.amplitude / scale);
    out.parity = Some(spec.class);
    out.divergence_free = true;
    Ok(out)
}
