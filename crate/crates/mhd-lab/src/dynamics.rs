//! Time integration of the perturbation dynamics
//!
//!   u_t = P[Δu + b·∇b − u·∇u − ∂_θ b],   b_t = P[b·∇u − u·∇b − ∂_θ u],
//!
//! with P the Leray projection (pressure and stream gradients are never
//! formed), plus the linearized evolution, the damped-wave residual check and
//! the scalar dispersion model.
//!
//! Discretization notes:
//! * Diffusion is trapezoidal (Crank–Nicolson) through Helmholtz solves; all
//!   transport, forcing and ∂_θ terms are explicit via a midpoint
//!   predictor–corrector. Dealiasing and the projection are applied at every
//!   stage; second order overall.
//! * The ∂_θ transport uses the skew-symmetrized form of the windowed
//!   operator, so ⟨u,∂_θb⟩+⟨b,∂_θu⟩ vanishes to roundoff. The quadratic
//!   terms need no such treatment: with 2/3-dealiased inputs the collocation
//!   quadrature of their energy pairings is already exact.
//! * The energy-law dissipation integral is accumulated every step from the
//!   Crank–Nicolson midpoint state, which closes the linear part of the
//!   discrete energy balance exactly.

use crate::diagnostics::{self, SampleRow};
use crate::error::Error;
use crate::fields::{self, ParityClass, VectorField};
use crate::grid::Grid;
use crate::spectral::{ScalarField, Space};
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// One snapshot of the perturbation state.
#[derive(Clone, Debug)]
pub struct State {
    pub u: VectorField,
    pub b: VectorField,
    pub t: f64,
}

impl State {
    pub fn new(u: VectorField, b: VectorField, t: f64) -> Result<Self, Error> {
        if u.grid() != b.grid() {
            return Err(Error::GridMismatch("u vs b".into()));
        }
        Ok(State { u, b, t })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsKind {
    /// The full perturbation system.
    Full,
    /// F and G dropped: u_t = P[Δu − ∂_θb], b_t = P[−∂_θu].
    Linearized,
    /// Transport and ∂_θ off entirely (u_t = Δu); for scheme verification.
    DiffusionOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub parity_enforcement: bool,
    pub sample_stride: usize,
    pub leakage_abort_threshold: f64,
    /// Keep full fields (u, b, u_t, b_t) at every sample; needed by the
    /// damped-wave residual.
    pub store_fields: bool,
    pub rhs_kind: RhsKind,
    /// Sobolev ladder parameter for the recorded diagnostics.
    pub s: usize,
    /// Negative index for the recorded diagnostics.
    pub sigma: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt: 1e-3,
            t_end: 10.0,
            cfl_safety: 0.9,
            parity_enforcement: true,
            sample_stride: 5,
            leakage_abort_threshold: 1e-4,
            store_fields: false,
            rhs_kind: RhsKind::Full,
            s: 2,
            sigma: 3.0 / 23.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let mut problems = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            problems.push(format!("solver.dt = {}: must be > 0", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            problems.push(format!("solver.t_end = {}: must be >= 0", self.t_end));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            problems.push(format!("solver.cfl_safety = {}: must lie in (0, 1]", self.cfl_safety));
        }
        if self.sample_stride == 0 {
            problems.push("solver.sample_stride must be >= 1".to_string());
        }
        if !(self.leakage_abort_threshold > 0.0) {
            problems.push(format!(
                "solver.leakage_abort_threshold = {}: must be > 0",
                self.leakage_abort_threshold
            ));
        }
        if self.s < 1 {
            problems.push("functionals.s must be >= 1".to_string());
        }
        if !(self.sigma >= 3.0 / 23.0 && self.sigma < 1.0) {
            problems.push(format!(
                "functionals.sigma = {}: must lie in [3/23, 1)",
                self.sigma
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Why a simulation stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AbortReason {
    Nan { t: f64 },
    Blowup { t: f64, h2_ratio: f64 },
    Leakage { t: f64, value: f64 },
    Cfl { t: f64, dt: f64, suggested: f64 },
}

impl std::fmt::Display for AbortReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AbortReason::Nan { t } => write!(f, "NaN detected at t = {t}"),
            AbortReason::Blowup { t, h2_ratio } => {
                write!(f, "H2 norm grew {h2_ratio:.1}x past the initial value at t = {t}")
            }
            AbortReason::Leakage { t, value } => {
                write!(f, "support leakage {value:.3e} exceeded the abort threshold at t = {t}")
            }
            AbortReason::Cfl { t, dt, suggested } => {
                write!(f, "CFL violation at t = {t}: dt = {dt}, suggested dt <= {suggested:.3e}")
            }
        }
    }
}

/// Full fields retained at a sample (when `store_fields` is on).
#[derive(Clone, Debug)]
pub struct SampleFields {
    pub u: VectorField,
    pub b: VectorField,
    pub ut: VectorField,
    pub bt: VectorField,
}

/// Sampled time history of a run: diagnostics rows, optional full fields,
/// and abort metadata. Time derivatives are always RHS evaluations, never
/// finite differences of states.
#[derive(Debug)]
pub struct Trajectory {
    pub rows: Vec<SampleRow>,
    pub fields: Vec<Option<SampleFields>>,
    pub dt: f64,
    pub sample_dt: f64,
    pub s: usize,
    pub sigma: f64,
    pub initial_energy: f64,
    pub abort: Option<AbortReason>,
    pub final_state: Option<State>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Norm series for a column extractor, e.g. decay fitting.
    pub fn series(&self, label: &str, f: impl Fn(&SampleRow) -> f64) -> diagnostics::NormSeries {
        diagnostics::NormSeries::new(self.times(), self.rows.iter().map(f).collect(), label)
            .expect("trajectory rows are time-ordered")
    }
}

// ---------------------------------------------------------------------------
// Internal spectral workspace
// ---------------------------------------------------------------------------

type C2 = Array2<Complex64>;
type R2 = Array2<f64>;

struct Workspace {
    grid: Grid,
    // physical fields and derivatives
    up: [R2; 2],
    bp: [R2; 2],
    du: [[R2; 2]; 2], // du[c][axis]
    db: [[R2; 2]; 2],
    ru: [R2; 2],
    rb: [R2; 2],
    pa: R2,
    pb: R2,
    // spectral scratch
    cwork: C2,
    sa: C2,
    sb: C2,
    sc: C2,
    sd: C2,
}

impl Workspace {
    fn new(grid: &Grid) -> Self {
        let n = grid.n();
        let z = || Array2::<f64>::zeros((n, n));
        let c = || Array2::<Complex64>::default((n, n));
        Workspace {
            grid: grid.clone(),
            up: [z(), z()],
            bp: [z(), z()],
            du: [[z(), z()], [z(), z()]],
            db: [[z(), z()], [z(), z()]],
            ru: [z(), z()],
            rb: [z(), z()],
            pa: z(),
            pb: z(),
            cwork: c(),
            sa: c(),
            sb: c(),
            sc: c(),
            sd: c(),
        }
    }
}

/// Spectral state as raw coefficient arrays (u1, u2, b1, b2).
#[derive(Clone)]
struct RawState {
    u: [C2; 2],
    b: [C2; 2],
    t: f64,
}

impl RawState {
    fn from_state(state: &State) -> Self {
        RawState {
            u: [
                state.u.components[0].to_spectral().data().clone(),
                state.u.components[1].to_spectral().data().clone(),
            ],
            b: [
                state.b.components[0].to_spectral().data().clone(),
                state.b.components[1].to_spectral().data().clone(),
            ],
            t: state.t,
        }
    }

    fn to_state(&self, grid: &Grid) -> State {
        let field = |d: &[C2; 2], class: ParityClass| VectorField {
            components: [
                ScalarField::from_parts(grid.clone(), Space::Spectral, d[0].clone()),
                ScalarField::from_parts(grid.clone(), Space::Spectral, d[1].clone()),
            ],
            parity: Some(class),
            divergence_free: true,
        };
        State {
            u: field(&self.u, ParityClass::VelocityLike),
            b: field(&self.b, ParityClass::MagneticLike),
            t: self.t,
        }
    }
}

/// Products of one RHS evaluation.
struct RhsEval {
    nu: [C2; 2],
    nb: [C2; 2],
    /// Skew-form ∂_θu and ∂_θb (only when diagnostics are requested).
    dtheta_u: Option<[C2; 2]>,
    dtheta_b: Option<[C2; 2]>,
    max_speed_u: f64,
    leak_u: f64,
    leak_b: f64,
    linf_u: f64,
    linf_b: f64,
}

fn derivative_spectra(grid: &Grid, src: &C2, out1: &mut C2, out2: &mut C2) {
    let n = grid.n();
    for i in 0..n {
        let k1 = grid.dk(i);
        for j in 0..n {
            let k2 = grid.dk(j);
            let v = src[(i, j)];
            out1[(i, j)] = Complex64::new(-k1 * v.im, k1 * v.re);
            out2[(i, j)] = Complex64::new(-k2 * v.im, k2 * v.re);
        }
    }
}

fn leakage_of(grid: &Grid, a: &R2, b: &R2) -> f64 {
    let core = &grid.window().core_mask;
    let mut inside = 0.0;
    let mut outside = 0.0;
    for ((&x, &y), &is_core) in a.iter().zip(b.iter()).zip(core.iter()) {
        let m = x * x + y * y;
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

fn max_speed(a: &R2, b: &R2) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| x * x + y * y)
        .fold(0.0, f64::max)
        .sqrt()
}

/// Evaluate the explicit part N of the dynamics (everything except Δu),
/// masked, mean-free and Leray-projected.
fn rhs_core(ws: &mut Workspace, st: &RawState, kind: RhsKind, want_diag: bool) -> RhsEval {
    let grid = ws.grid.clone();
    let n = grid.n();
    let eng = grid.engine();

    // Physical fields and derivatives: packed inverse transforms.
    {
        let (a, b) = ws.up.split_at_mut(1);
        eng.inverse_pair(&st.u[0], &st.u[1], &mut a[0], &mut b[0], &mut ws.cwork);
        let (a, b) = ws.bp.split_at_mut(1);
        eng.inverse_pair(&st.b[0], &st.b[1], &mut a[0], &mut b[0], &mut ws.cwork);
    }
    for c in 0..2 {
        derivative_spectra(&grid, &st.u[c], &mut ws.sa, &mut ws.sb);
        let (d0, d1) = ws.du[c].split_at_mut(1);
        eng.inverse_pair(&ws.sa, &ws.sb, &mut d0[0], &mut d1[0], &mut ws.cwork);
        derivative_spectra(&grid, &st.b[c], &mut ws.sa, &mut ws.sb);
        let (e0, e1) = ws.db[c].split_at_mut(1);
        eng.inverse_pair(&ws.sa, &ws.sb, &mut e0[0], &mut e1[0], &mut ws.cwork);
    }

    let max_speed_u = max_speed(&ws.up[0], &ws.up[1]);
    let leak_u = leakage_of(&grid, &ws.up[0], &ws.up[1]);
    let leak_b = leakage_of(&grid, &ws.bp[0], &ws.bp[1]);
    let linf_u = max_speed_u;
    let linf_b = max_speed(&ws.bp[0], &ws.bp[1]);

    let w = grid.window();

    // Physical combines: advective F/G terms and the advective half of ∂_θ.
    let nonlinear = kind == RhsKind::Full;
    let with_theta = kind != RhsKind::DiffusionOnly;
    let mut atheta_u: Option<[C2; 2]> = None;
    let mut atheta_b: Option<[C2; 2]> = None;
    for c in 0..2 {
        let (u1, u2) = (&ws.up[0], &ws.up[1]);
        let (b1, b2) = (&ws.bp[0], &ws.bp[1]);
        let (duc, dbc) = (&ws.du[c], &ws.db[c]);
        for idx in 0..n * n {
            let i = idx / n;
            let j = idx % n;
            let id = (i, j);
            let adv_f = if nonlinear {
                b1[id] * dbc[0][id] + b2[id] * dbc[1][id] - u1[id] * duc[0][id] - u2[id] * duc[1][id]
            } else {
                0.0
            };
            let adv_g = if nonlinear {
                b1[id] * duc[0][id] + b2[id] * duc[1][id] - u1[id] * dbc[0][id] - u2[id] * dbc[1][id]
            } else {
                0.0
            };
            let (th_b, th_u) = if with_theta {
                (
                    w.w1[id] * dbc[1][id] - w.w2[id] * dbc[0][id],
                    w.w1[id] * duc[1][id] - w.w2[id] * duc[0][id],
                )
            } else {
                (0.0, 0.0)
            };
            ws.ru[c][id] = adv_f - 0.5 * th_b;
            ws.rb[c][id] = adv_g - 0.5 * th_u;
            if want_diag && with_theta {
                ws.pa[id] = th_u;
                ws.pb[id] = th_b;
            }
        }
        if want_diag && with_theta {
            let mut su = Array2::default((n, n));
            let mut sb2 = Array2::default((n, n));
            eng.forward_pair(&ws.pa, &ws.pb, &mut su, &mut sb2, &mut ws.cwork);
            // Halved: the advective half of the skew form; the divergence
            // half is added below.
            match (atheta_u.as_mut(), atheta_b.as_mut()) {
                (None, None) => {
                    atheta_u = Some([su.mapv(|z| 0.5 * z), Array2::default((n, n))]);
                    atheta_b = Some([sb2.mapv(|z| 0.5 * z), Array2::default((n, n))]);
                }
                (Some(au), Some(ab)) => {
                    au[1] = su.mapv(|z| 0.5 * z);
                    ab[1] = sb2.mapv(|z| 0.5 * z);
                }
                _ => unreachable!(),
            }
        }
    }

    // Forward transforms of the combined physical right-hand sides.
    let mut nu: [C2; 2] = [Array2::default((n, n)), Array2::default((n, n))];
    let mut nb: [C2; 2] = [Array2::default((n, n)), Array2::default((n, n))];
    {
        let (a, b) = nu.split_at_mut(1);
        eng.forward_pair(&ws.ru[0], &ws.ru[1], &mut a[0], &mut b[0], &mut ws.cwork);
        let (a, b) = nb.split_at_mut(1);
        eng.forward_pair(&ws.rb[0], &ws.rb[1], &mut a[0], &mut b[0], &mut ws.cwork);
    }

    // Divergence half of the skew ∂_θ: the u-equation gets the b products,
    // the b-equation the u products.
    if with_theta {
        for c in 0..2 {
            add_theta_div_half(
                &grid,
                &w.w1,
                &w.w2,
                &ws.bp[c],
                &mut nu[c],
                atheta_b.as_mut().map(|a| &mut a[c]),
                &mut ws.pa,
                &mut ws.pb,
                &mut ws.sc,
                &mut ws.sd,
                &mut ws.cwork,
            );
            add_theta_div_half(
                &grid,
                &w.w1,
                &w.w2,
                &ws.up[c],
                &mut nb[c],
                atheta_u.as_mut().map(|a| &mut a[c]),
                &mut ws.pa,
                &mut ws.pb,
                &mut ws.sc,
                &mut ws.sd,
                &mut ws.cwork,
            );
        }
    }

    // Mask, drop means, project.
    let mask = grid.mask();
    for arr in nu.iter_mut().chain(nb.iter_mut()) {
        for (v, &keep) in arr.iter_mut().zip(mask.iter()) {
            if !keep {
                *v = Complex64::default();
            }
        }
        arr[(0, 0)] = Complex64::default();
    }
    leray_pair(&grid, &mut nu);
    leray_pair(&grid, &mut nb);
    if let (Some(au), Some(ab)) = (atheta_u.as_mut(), atheta_b.as_mut()) {
        for arr in au.iter_mut().chain(ab.iter_mut()) {
            for (v, &keep) in arr.iter_mut().zip(mask.iter()) {
                if !keep {
                    *v = Complex64::default();
                }
            }
            arr[(0, 0)] = Complex64::default();
        }
    }

    RhsEval {
        nu,
        nb,
        dtheta_u: atheta_u,
        dtheta_b: atheta_b,
        max_speed_u,
        leak_u,
        leak_b,
        linf_u,
        linf_b,
    }
}

/// Add the divergence half of −∂_θ^skew f to `out`:
/// −½∇·(v_θ f) with v_θ = (−w₂, w₁), i.e. +½[ik₁(w₂f)^ − ik₂(w₁f)^].
/// When `diag` is given, the skew ∂_θf itself is completed there:
/// D_θf = ½·advective − ½(ik₁(w₂f)^ − ik₂(w₁f)^).
#[allow(clippy::too_many_arguments)]
fn add_theta_div_half(
    grid: &Grid,
    w1: &R2,
    w2: &R2,
    phys: &R2,
    out: &mut C2,
    diag: Option<&mut C2>,
    pa: &mut R2,
    pb: &mut R2,
    sc: &mut C2,
    sd: &mut C2,
    cwork: &mut C2,
) {
    let n = grid.n();
    for ((t, &f), &a) in pa.iter_mut().zip(phys.iter()).zip(w2.iter()) {
        *t = a * f;
    }
    for ((t, &f), &b) in pb.iter_mut().zip(phys.iter()).zip(w1.iter()) {
        *t = b * f;
    }
    grid.engine().forward_pair(pa, pb, sc, sd, cwork);
    for i in 0..n {
        let k1 = grid.dk(i);
        for j in 0..n {
            let k2 = grid.dk(j);
            let p = sc[(i, j)];
            let q = sd[(i, j)];
            // ik₁p − ik₂q
            let div = Complex64::new(-k1 * p.im + k2 * q.im, k1 * p.re - k2 * q.re);
            out[(i, j)] += 0.5 * div;
        }
    }
    if let Some(d) = diag {
        for i in 0..n {
            let k1 = grid.dk(i);
            for j in 0..n {
                let k2 = grid.dk(j);
                let p = sc[(i, j)];
                let q = sd[(i, j)];
                let div = Complex64::new(-k1 * p.im + k2 * q.im, k1 * p.re - k2 * q.re);
                d[(i, j)] -= 0.5 * div;
            }
        }
    }
}

fn leray_pair(grid: &Grid, v: &mut [C2; 2]) {
    let n = grid.n();
    for i in 0..n {
        let k1 = grid.freq(i) as f64;
        for j in 0..n {
            let k2 = grid.freq(j) as f64;
            let kk = k1 * k1 + k2 * k2;
            if kk == 0.0 {
                continue;
            }
            let dot = (k1 * v[0][(i, j)] + k2 * v[1][(i, j)]) / kk;
            v[0][(i, j)] -= k1 * dot;
            v[1][(i, j)] -= k2 * dot;
        }
    }
}

fn parity_project_raw(grid: &Grid, arr: &mut C2, s1: f64, s2: f64) {
    let n = grid.n();
    let src = arr.clone();
    for i in 0..n {
        let im = (n - i) % n;
        for j in 0..n {
            let jm = (n - j) % n;
            arr[(i, j)] = 0.25
                * (src[(i, j)] + s1 * src[(im, j)] + s2 * src[(i, jm)] + s1 * s2 * src[(im, jm)]);
        }
    }
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// F := b·∇b − u·∇u, evaluated pseudo-spectrally and dealiased.
/// Velocity-like when (u, b) carry the standard class tags.
pub fn compute_f(u: &VectorField, b: &VectorField) -> Result<VectorField, Error> {
    advective_combo(u, b, true)
}

/// G := b·∇u − u·∇b; antisymmetric under (u, b) swap.
pub fn compute_g(u: &VectorField, b: &VectorField) -> Result<VectorField, Error> {
    advective_combo(u, b, false)
}

fn advective_combo(u: &VectorField, b: &VectorField, is_f: bool) -> Result<VectorField, Error> {
    if u.grid() != b.grid() {
        return Err(Error::GridMismatch("u vs b".into()));
    }
    let grid = u.grid().clone();
    let up = u.to_physical();
    let bp = b.to_physical();
    let mut out = Vec::with_capacity(2);
    for c in 0..2 {
        // F_c = Σ_j b_j ∂_j b_c − u_j ∂_j u_c ; G_c = Σ_j b_j ∂_j u_c − u_j ∂_j b_c.
        let dc_u = [
            u.components[c].derivative(0).to_physical(),
            u.components[c].derivative(1).to_physical(),
        ];
        let dc_b = [
            b.components[c].derivative(0).to_physical(),
            b.components[c].derivative(1).to_physical(),
        ];
        let n = grid.n();
        let data = Array2::from_shape_fn((n, n), |idx| {
            let bv = [bp.components[0].data()[idx].re, bp.components[1].data()[idx].re];
            let uv = [up.components[0].data()[idx].re, up.components[1].data()[idx].re];
            let val = if is_f {
                bv[0] * dc_b[0].data()[idx].re + bv[1] * dc_b[1].data()[idx].re
                    - uv[0] * dc_u[0].data()[idx].re
                    - uv[1] * dc_u[1].data()[idx].re
            } else {
                bv[0] * dc_u[0].data()[idx].re + bv[1] * dc_u[1].data()[idx].re
                    - uv[0] * dc_b[0].data()[idx].re
                    - uv[1] * dc_b[1].data()[idx].re
            };
            Complex64::new(val, 0.0)
        });
        out.push(
            ScalarField::from_parts(grid.clone(), Space::Physical, data)
                .to_spectral()
                .dealias(),
        );
    }
    let c2 = out.pop().expect("two components");
    let c1 = out.pop().expect("two components");
    let parity = match (u.parity, b.parity, is_f) {
        (Some(ParityClass::VelocityLike), Some(ParityClass::MagneticLike), true) => {
            Some(ParityClass::VelocityLike)
        }
        (Some(ParityClass::VelocityLike), Some(ParityClass::MagneticLike), false) => {
            Some(ParityClass::MagneticLike)
        }
        _ => None,
    };
    Ok(VectorField {
        components: [c1, c2],
        parity,
        divergence_free: false,
    })
}

/// Full right-hand side: (u_t, b_t) = (P[Δu + F − ∂_θb], P[G − ∂_θu]).
pub fn rhs(state: &State) -> Result<(VectorField, VectorField), Error> {
    rhs_with_kind(state, RhsKind::Full)
}

/// Linearized right-hand side: u_t = P[Δu − ∂_θb], b_t = P[−∂_θu].
pub fn linearized_rhs(state: &State) -> Result<(VectorField, VectorField), Error> {
    rhs_with_kind(state, RhsKind::Linearized)
}

fn rhs_with_kind(state: &State, kind: RhsKind) -> Result<(VectorField, VectorField), Error> {
    let grid = state.grid().clone();
    let mut ws = Workspace::new(&grid);
    let raw = RawState::from_state(state);
    let eval = rhs_core(&mut ws, &raw, kind, false);
    let worst_leak = eval.leak_u.max(eval.leak_b);
    if worst_leak > fields::HARD_LEAKAGE_THRESHOLD {
        return Err(Error::TruncationInvalid(format!(
            "state leakage {worst_leak:.3e} exceeds the hard threshold; windowed ∂_θ invalid"
        )));
    }
    let (ut, bt) = assemble_time_derivatives(&grid, &raw, &eval);
    Ok((ut, bt))
}

fn assemble_time_derivatives(grid: &Grid, raw: &RawState, eval: &RhsEval) -> (VectorField, VectorField) {
    let n = grid.n();
    let k2 = grid.k2();
    let mut ut: [C2; 2] = [eval.nu[0].clone(), eval.nu[1].clone()];
    for c in 0..2 {
        for i in 0..n {
            for j in 0..n {
                ut[c][(i, j)] -= k2[(i, j)] * raw.u[c][(i, j)];
            }
        }
    }
    let mk = |d: [C2; 2], parity: ParityClass| VectorField {
        components: [
            ScalarField::from_parts(grid.clone(), Space::Spectral, d[0].clone()),
            ScalarField::from_parts(grid.clone(), Space::Spectral, d[1].clone()),
        ],
        parity: Some(parity),
        divergence_free: true,
    };
    (
        mk(ut, ParityClass::VelocityLike),
        mk([eval.nb[0].clone(), eval.nb[1].clone()], ParityClass::MagneticLike),
    )
}

/// Midpoint corrector sweeps per step. Each sweep re-evaluates the explicit
/// terms at the state average; two sweeps make the scheme second order with
/// a contractive amplification for the oscillatory ∂_θ coupling.
const CORRECTOR_SWEEPS: usize = 2;

struct StepOutput {
    next: RawState,
    diss_increment: f64,
}

/// One IMEX step from the raw state, given the already-evaluated explicit
/// part of the starting state.
fn imex_step(
    ws: &mut Workspace,
    st: &RawState,
    cfg: &SolverConfig,
    eval0: &RhsEval,
) -> Result<StepOutput, Error> {
    let grid = ws.grid.clone();
    let n = grid.n();
    let dt = cfg.dt;
    let k2 = grid.k2().clone();

    // Advective CFL with the window-capped transport speed.
    let speed = eval0.max_speed_u + grid.window().wmax;
    let bound = cfg.cfl_safety * grid.dx() / speed.max(f64::MIN_POSITIVE);
    if dt > bound {
        return Err(Error::CflViolation {
            t: st.t,
            dt,
            suggested: bound,
        });
    }

    // Trapezoidal update driven by a given explicit-part evaluation:
    // (1 + a)u⁺ = (1 − a)u⁰ + dt·Nu, b⁺ = b⁰ + dt·Nb, a = dt|k|²/2.
    let apply = |ev: &RhsEval| {
        let mut next = RawState {
            u: [Array2::default((n, n)), Array2::default((n, n))],
            b: [Array2::default((n, n)), Array2::default((n, n))],
            t: st.t + dt,
        };
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    let a = 0.5 * dt * k2[(i, j)];
                    next.u[c][(i, j)] = ((1.0 - a) * st.u[c][(i, j)] + dt * ev.nu[c][(i, j)])
                        / (1.0 + a);
                    next.b[c][(i, j)] = st.b[c][(i, j)] + dt * ev.nb[c][(i, j)];
                }
            }
        }
        next
    };

    // Predictor from N(y⁰), then midpoint correctors: each sweep evaluates
    // the explicit terms at the state average ȳ = (y⁰ + y⁺)/2 and reapplies
    // the trapezoidal update. Two sweeps give second order; evaluating at
    // the state average (rather than a half-step predictor state) is what
    // lets the skew cancellations hold in the discrete energy balance.
    let mut next = apply(eval0);
    for _ in 0..CORRECTOR_SWEEPS {
        let mut avg = RawState {
            u: [Array2::default((n, n)), Array2::default((n, n))],
            b: [Array2::default((n, n)), Array2::default((n, n))],
            t: st.t + 0.5 * dt,
        };
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    avg.u[c][(i, j)] = 0.5 * (st.u[c][(i, j)] + next.u[c][(i, j)]);
                    avg.b[c][(i, j)] = 0.5 * (st.b[c][(i, j)] + next.b[c][(i, j)]);
                }
            }
        }
        let evalm = rhs_core(ws, &avg, cfg.rhs_kind, false);
        next = apply(&evalm);
    }

    if cfg.parity_enforcement {
        for c in 0..2 {
            let (s1, s2) = ParityClass::VelocityLike.component_signs(c);
            parity_project_raw(&grid, &mut next.u[c], s1, s2);
            let (s1, s2) = ParityClass::MagneticLike.component_signs(c);
            parity_project_raw(&grid, &mut next.b[c], s1, s2);
        }
    }

    // Crank–Nicolson midpoint dissipation: 2·dt·‖∇((uⁿ+uⁿ⁺¹)/2)‖².
    let mut diss = 0.0;
    for c in 0..2 {
        for i in 0..n {
            for j in 0..n {
                let m = 0.5 * (st.u[c][(i, j)] + next.u[c][(i, j)]);
                diss += k2[(i, j)] * m.norm_sqr();
            }
        }
    }
    let diss_increment = 2.0 * dt * diss * grid.area();

    // NaN guard (cheap: check one representative entry per array plus sums).
    let finite = next
        .u
        .iter()
        .chain(next.b.iter())
        .all(|a| a.iter().take(4).all(|z| z.is_finite()) && a.sum().is_finite());
    if !finite {
        return Err(Error::Diverged(format!("NaN detected at t = {}", next.t)));
    }

    Ok(StepOutput {
        next,
        diss_increment,
    })
}

/// One public time step (constructs a fresh workspace).
pub fn step(state: &State, cfg: &SolverConfig) -> Result<State, Error> {
    cfg.validate()?;
    let grid = state.grid().clone();
    let mut ws = Workspace::new(&grid);
    let raw = RawState::from_state(state);
    let eval0 = rhs_core(&mut ws, &raw, cfg.rhs_kind, false);
    let out = imex_step(&mut ws, &raw, cfg, &eval0)?;
    Ok(out.next.to_state(&grid))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Fused per-field norm bundle for a sample.
struct FieldNorms {
    ladder: Vec<f64>,
    h2: f64,
    h_top: f64,
    grad_h_top: f64,
    h_neg: f64,
    h_1msig: f64,
    top_share: f64,
    l2: f64,
}

fn fused_field_norms(grid: &Grid, v: &[C2; 2], s: usize, sigma: f64, negative_ok: bool) -> FieldNorms {
    let max_order = 2 * s + 2;
    let top_order = (2 * s + 6) as f64;
    let k_cut = grid.k_cut();
    let top_third = (2.0 / 3.0) * k_cut;
    let mut ladder_sums = vec![0.0; max_order + 1];
    let (mut h2, mut htop, mut gtop, mut hneg, mut h1ms, mut top_part) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for arr in v {
        for (c, &kk) in arr.iter().zip(grid.k2().iter()) {
            let mag = c.norm_sqr();
            if mag == 0.0 {
                continue;
            }
            let mut p = mag;
            ladder_sums[0] += p;
            for s in ladder_sums.iter_mut().skip(1) {
                p *= kk;
                *s += p;
            }
            let ik = 1.0 + kk;
            h2 += ik * ik * mag;
            let wt = ik.powi(2 * s as i32 + 6);
            htop += wt * mag;
            gtop += kk * wt * mag;
            if kk > top_third * top_third {
                top_part += wt * mag;
            }
            if kk > 0.0 {
                if negative_ok {
                    hneg += kk.powf(-sigma) * mag;
                }
                h1ms += kk.powf(1.0 - sigma) * mag;
            }
        }
    }
    let _ = top_order;
    let area = grid.area();
    FieldNorms {
        ladder: ladder_sums.iter().map(|&v| (v * area).sqrt()).collect(),
        h2: (h2 * area).sqrt(),
        h_top: (htop * area).sqrt(),
        grad_h_top: (gtop * area).sqrt(),
        h_neg: (hneg * area).sqrt(),
        h_1msig: (h1ms * area).sqrt(),
        top_share: if htop > 0.0 { top_part / htop } else { 0.0 },
        l2: (ladder_sums[0] * area).sqrt(),
    }
}

fn parity_error_raw(grid: &Grid, v: &[C2; 2], class: ParityClass) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let n = grid.n();
    for c in 0..2 {
        let (s1, s2) = class.component_signs(c);
        for i in 0..n {
            let im = (n - i) % n;
            for j in 0..n {
                let jm = (n - j) % n;
                let val = v[c][(i, j)];
                let proj = 0.25
                    * (val + s1 * v[c][(im, j)] + s2 * v[c][(i, jm)] + s1 * s2 * v[c][(im, jm)]);
                num += (val - proj).norm_sqr();
                den += val.norm_sqr();
            }
        }
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Running trapezoid accumulators for the four functionals.
struct RunningFunctionals {
    sup_high: f64,
    int_high: f64,
    prev_high: f64,
    sup_neg: f64,
    int_neg: f64,
    prev_neg: f64,
    sup_wave: Vec<f64>,
    int_wave: Vec<f64>,
    prev_wave: Vec<f64>,
    sup_wwave: Vec<f64>,
    int_wwave: Vec<f64>,
    prev_wwave: Vec<f64>,
    prev_t: f64,
    started: bool,
}

impl RunningFunctionals {
    fn new(s: usize) -> Self {
        RunningFunctionals {
            sup_high: 0.0,
            int_high: 0.0,
            prev_high: 0.0,
            sup_neg: 0.0,
            int_neg: 0.0,
            prev_neg: 0.0,
            sup_wave: vec![0.0; s + 1],
            int_wave: vec![0.0; s + 1],
            prev_wave: vec![0.0; s + 1],
            sup_wwave: vec![0.0; s.saturating_sub(1)],
            int_wwave: vec![0.0; s.saturating_sub(1)],
            prev_wwave: vec![0.0; s.saturating_sub(1)],
            prev_t: 0.0,
            started: false,
        }
    }
}

/// Integrate the system and sample diagnostics every `sample_stride` steps.
///
/// Step errors abort the run and are recorded in the trajectory metadata
/// rather than propagated, so partial runs stay inspectable.
pub fn simulate(initial: &State, cfg: &SolverConfig) -> Result<Trajectory, Error> {
    cfg.validate()?;
    let grid = initial.grid().clone();
    let mut ws = Workspace::new(&grid);

    // Sanitize: dealias + project + drop means, as the dynamics assumes.
    let mut raw = RawState::from_state(initial);
    let mask = grid.mask().clone();
    for arr in raw.u.iter_mut().chain(raw.b.iter_mut()) {
        for (v, &keep) in arr.iter_mut().zip(mask.iter()) {
            if !keep {
                *v = Complex64::default();
            }
        }
        arr[(0, 0)] = Complex64::default();
    }
    leray_pair(&grid, &mut raw.u);
    leray_pair(&grid, &mut raw.b);

    let e_init: f64 = {
        let area = grid.area();
        let s: f64 = raw
            .u
            .iter()
            .chain(raw.b.iter())
            .map(|a| a.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum();
        s * area
    };

    let n_steps = (cfg.t_end / cfg.dt).round() as usize;
    let s = cfg.s;
    let mut traj = Trajectory {
        rows: Vec::new(),
        fields: Vec::new(),
        dt: cfg.dt,
        sample_dt: cfg.dt * cfg.sample_stride as f64,
        s,
        sigma: cfg.sigma,
        initial_energy: e_init,
        abort: None,
        final_state: None,
    };
    let mut running = RunningFunctionals::new(s);
    let mut dissipation = 0.0;
    let mut h2_initial: Option<f64> = None;

    let radii: Vec<f64> = {
        let r_core = grid.window().r_core;
        (1..=8).map(|i| r_core * i as f64 / 9.0).collect()
    };

    let mut record_sample = |raw: &RawState,
                             eval: &RhsEval,
                             dissipation: f64,
                             running: &mut RunningFunctionals,
                             traj: &mut Trajectory,
                             ws: &Workspace| {
        let t = raw.t;
        // u_t = Nu + Δu, b_t = Nb.
        let n = grid.n();
        let k2 = grid.k2();
        let mut ut: [C2; 2] = [eval.nu[0].clone(), eval.nu[1].clone()];
        for c in 0..2 {
            for i in 0..n {
                for j in 0..n {
                    ut[c][(i, j)] -= k2[(i, j)] * raw.u[c][(i, j)];
                }
            }
        }
        let bt = [eval.nb[0].clone(), eval.nb[1].clone()];
        let zero_pair: [C2; 2] = [Array2::default((n, n)), Array2::default((n, n))];
        let dthu = eval.dtheta_u.as_ref().unwrap_or(&zero_pair);
        let dthb = eval.dtheta_b.as_ref().unwrap_or(&zero_pair);

        let nu_norms = fused_field_norms(&grid, &raw.u, s, cfg.sigma, true);
        let nb_norms = fused_field_norms(&grid, &raw.b, s, cfg.sigma, true);
        let ut_ladder = vector_ladder(&grid, &ut, 2 * s + 1);
        let bt_ladder = vector_ladder(&grid, &bt, 2 * s + 1);
        let dthu_ladder = vector_ladder(&grid, dthu, 2 * s + 1);
        let dthb_ladder = vector_ladder(&grid, dthb, 2 * s + 1);

        let e_now = nu_norms.l2 * nu_norms.l2 + nb_norms.l2 * nb_norms.l2;
        let drift = if e_init > 0.0 {
            ((e_now + dissipation - e_init) / e_init).abs()
        } else {
            0.0
        };

        // Zero angular mode via Bessel-binned circle averages.
        let vf = |d: &[C2; 2]| VectorField {
            components: [
                ScalarField::from_parts(grid.clone(), Space::Spectral, d[0].clone()),
                ScalarField::from_parts(grid.clone(), Space::Spectral, d[1].clone()),
            ],
            parity: None,
            divergence_free: false,
        };
        let zm_u = fields::zero_angular_mode(&vf(&raw.u), &radii).unwrap_or_default();
        let zm_b = fields::zero_angular_mode(&vf(&raw.b), &radii).unwrap_or_default();
        let linf = eval.linf_u.max(eval.linf_b).max(f64::MIN_POSITIVE);
        let zero_mode_max = zm_u
            .iter()
            .chain(zm_b.iter())
            .fold(0.0f64, |a, &b| a.max(b))
            / linf;

        let _ = ws;

        // Functional updates (trapezoid at sample times).
        let high_sup_val = nu_norms.h_top * nu_norms.h_top + nb_norms.h_top * nb_norms.h_top;
        let high_int_val = nu_norms.grad_h_top * nu_norms.grad_h_top;
        let neg_sup_val = nu_norms.h_neg * nu_norms.h_neg + nb_norms.h_neg * nb_norms.h_neg;
        let neg_int_val = nu_norms.h_1msig * nu_norms.h_1msig;
        let wave_sup_vals: Vec<f64> = (0..=s)
            .map(|m| {
                ut_ladder[2 * m].powi(2)
                    + bt_ladder[2 * m].powi(2)
                    + dthu_ladder[2 * m].powi(2)
                    + dthb_ladder[2 * m].powi(2)
                    + nu_norms.ladder[2 * m + 2].powi(2)
                    + nb_norms.ladder[2 * m + 2].powi(2)
            })
            .collect();
        let wave_int_vals: Vec<f64> = (0..=s)
            .map(|m| {
                ut_ladder[2 * m + 1].powi(2)
                    + bt_ladder[2 * m + 1].powi(2)
                    + dthu_ladder[2 * m + 1].powi(2)
                    + dthb_ladder[2 * m + 1].powi(2)
            })
            .collect();
        let wgt = (1.0 + t) * (1.0 + t);

        if running.started {
            let dt_s = t - running.prev_t;
            running.int_high += 0.5 * dt_s * (running.prev_high + high_int_val);
            running.int_neg += 0.5 * dt_s * (running.prev_neg + neg_int_val);
            for m in 0..=s {
                running.int_wave[m] += 0.5 * dt_s * (running.prev_wave[m] + wave_int_vals[m]);
            }
            for m in 1..s {
                running.int_wwave[m - 1] +=
                    0.5 * dt_s * (running.prev_wwave[m - 1] + wgt * wave_int_vals[m]);
            }
        }
        running.sup_high = running.sup_high.max(high_sup_val);
        running.sup_neg = running.sup_neg.max(neg_sup_val);
        for m in 0..=s {
            running.sup_wave[m] = running.sup_wave[m].max(wave_sup_vals[m]);
        }
        for m in 1..s {
            running.sup_wwave[m - 1] = running.sup_wwave[m - 1].max(wgt * wave_sup_vals[m]);
        }
        running.prev_high = high_int_val;
        running.prev_neg = neg_int_val;
        running.prev_wave = wave_int_vals.clone();
        for m in 1..s {
            running.prev_wwave[m - 1] = wgt * wave_int_vals[m];
        }
        running.prev_t = t;
        running.started = true;

        let e0_val = running.sup_high + running.int_high;
        let e1_val = running.sup_neg + running.int_neg;
        let es0_val: f64 = (0..=s).map(|m| running.sup_wave[m] + running.int_wave[m]).sum();
        let es1_val: f64 = (1..s)
            .map(|m| running.sup_wwave[m - 1] + running.int_wwave[m - 1])
            .sum();

        let row = SampleRow {
            t,
            l2_u: nu_norms.l2,
            l2_b: nb_norms.l2,
            h2_u: nu_norms.h2,
            h2_b: nb_norms.h2,
            hs_top_u: nu_norms.h_top,
            hs_top_b: nb_norms.h_top,
            hneg_u: nu_norms.h_neg,
            hneg_b: nb_norms.h_neg,
            dtheta_h1_u: dthu_ladder[1],
            dtheta_h1_b: dthb_ladder[1],
            ut_l2: ut_ladder[0],
            bt_l2: bt_ladder[0],
            energy_law_drift: drift,
            parity_err_u: parity_error_raw(&grid, &raw.u, ParityClass::VelocityLike),
            parity_err_b: parity_error_raw(&grid, &raw.b, ParityClass::MagneticLike),
            zero_mode_max,
            leakage: eval.leak_u.max(eval.leak_b),
            e_big0: e0_val,
            e_big1: e1_val,
            e_small0: es0_val,
            e_small1: es1_val,
            e_total: e0_val + e1_val + es0_val + es1_val,
            hdot_u: nu_norms.ladder.clone(),
            hdot_b: nb_norms.ladder.clone(),
            hdot_ut: ut_ladder,
            hdot_bt: bt_ladder,
            hdot_dthu: dthu_ladder,
            hdot_dthb: dthb_ladder,
            h1msig_u: nu_norms.h_1msig,
            grad_htop_u: nu_norms.grad_h_top,
            under_resolved: nu_norms.top_share > 0.1 || nb_norms.top_share > 0.1,
        };
        traj.rows.push(row);
        if cfg.store_fields {
            traj.fields.push(Some(SampleFields {
                u: vf(&raw.u),
                b: vf(&raw.b),
                ut: vf(&ut),
                bt: vf(&bt),
            }));
        } else {
            traj.fields.push(None);
        }
        nu_norms.h2
    };

    let mut step_idx = 0usize;
    loop {
        let is_sample = step_idx % cfg.sample_stride == 0;
        let last = step_idx == n_steps;
        // One RHS evaluation serves the leakage monitor, the sample
        // diagnostics, and the predictor stage of the step.
        let eval = rhs_core(&mut ws, &raw, cfg.rhs_kind, last || is_sample);
        let worst_leak = eval.leak_u.max(eval.leak_b);
        if worst_leak > cfg.leakage_abort_threshold {
            traj.abort = Some(AbortReason::Leakage {
                t: raw.t,
                value: worst_leak,
            });
            if last || is_sample {
                record_sample(&raw, &eval, dissipation, &mut running, &mut traj, &ws);
            }
            break;
        }
        if last || is_sample {
            let h2 = record_sample(&raw, &eval, dissipation, &mut running, &mut traj, &ws);
            let h2_0 = *h2_initial.get_or_insert(h2);
            if h2_0 > 0.0 && h2 > 1e3 * h2_0 {
                traj.abort = Some(AbortReason::Blowup {
                    t: raw.t,
                    h2_ratio: h2 / h2_0,
                });
                break;
            }
        }
        if last {
            break;
        }
        match imex_step(&mut ws, &raw, cfg, &eval) {
            Ok(out) => {
                dissipation += out.diss_increment;
                raw = out.next;
                // Keep sampled times exact multiples of dt.
                raw.t = (step_idx as f64 + 1.0) * cfg.dt;
            }
            Err(Error::CflViolation { t, dt, suggested }) => {
                traj.abort = Some(AbortReason::Cfl { t, dt, suggested });
                break;
            }
            Err(Error::Diverged(_)) => {
                traj.abort = Some(AbortReason::Nan { t: raw.t });
                break;
            }
            Err(e) => return Err(e),
        }
        step_idx += 1;
    }

    traj.final_state = Some(raw.to_state(&grid));
    Ok(traj)
}

fn vector_ladder(grid: &Grid, v: &[C2; 2], max_order: usize) -> Vec<f64> {
    let a = diagnostics::hdot_ladder_raw(&v[0], grid, max_order);
    let b = diagnostics::hdot_ladder_raw(&v[1], grid, max_order);
    a.iter().zip(&b).map(|(x, y)| (x * x + y * y).sqrt()).collect()
}

// ---------------------------------------------------------------------------
// Damped-wave residual and dispersion model
// ---------------------------------------------------------------------------

/// Residual of the second-order (damped-wave) form of the u-equation at an
/// interior sample, normalized by ‖u‖_{H²}.
///
/// The exact identity for the simulated flow is
/// u_tt = Δu_t + P[F_t − ∂_θ b_t]; expanding ∂_θ b_t recovers the familiar
/// −∂_θθu − ∂_θG terms plus a divergence-free zeroth-order piece
/// ([∂_θ,∇]ψ = ∇⊥ψ = u) that the projection keeps, so the residual is
/// computed as ‖ü − Δu̇ − P[Ḟ] + P[∂_θ b_t]‖ with ü, Ḟ centered differences
/// of RHS-derived samples. Second-order small in the sample spacing.
pub fn wave_residual(traj: &Trajectory, index: usize) -> Result<f64, Error> {
    if index == 0 || index + 1 >= traj.rows.len() {
        return Err(Error::Sampling(format!(
            "wave residual needs both neighbors: index {index} of {}",
            traj.rows.len()
        )));
    }
    let (tm, t0, tp) = (
        traj.rows[index - 1].t,
        traj.rows[index].t,
        traj.rows[index + 1].t,
    );
    let dt_minus = t0 - tm;
    let dt_plus = tp - t0;
    if (dt_plus - dt_minus).abs() > 1e-9 * dt_plus.max(dt_minus) {
        return Err(Error::Sampling(format!(
            "non-uniform sample spacing around index {index}: {dt_minus} vs {dt_plus}"
        )));
    }
    let delta = dt_plus;
    let get = |i: usize| -> Result<&SampleFields, Error> {
        traj.fields[i]
            .as_ref()
            .ok_or_else(|| Error::Sampling("wave residual requires store_fields".to_string()))
    };
    let fm = get(index - 1)?;
    let f0 = get(index)?;
    let fp = get(index + 1)?;

    let u_h2 = diagnostics::sobolev_norm(&f0.u, 2.0, false)?;
    if u_h2 == 0.0 {
        return Ok(0.0);
    }

    // ü by centered difference of RHS-derived u_t samples.
    let uddot = fp.ut.add_scaled(-1.0, &fm.ut)?.scale(1.0 / (2.0 * delta));
    // Δu̇ from the RHS-derived u_t at the center.
    let lap_udot = f0.ut.map(|c| c.fractional_multiplier(2.0).expect("s > 0").scale(-1.0));
    // Ḟ by centered difference of F samples.
    let f_plus = compute_f(&fp.u, &fp.b)?;
    let f_minus = compute_f(&fm.u, &fm.b)?;
    let fdot = fields::leray_project(&f_plus.add_scaled(-1.0, &f_minus)?).scale(1.0 / (2.0 * delta));
    // ∂_θ b_t (skew form, consistent with the dynamics), projected.
    let th_bt = fields::leray_project(&fields::d_theta_vector_unchecked(&f0.bt, true));

    let mut resid = uddot.add_scaled(-1.0, &lap_udot)?;
    resid = resid.add_scaled(-1.0, &fdot)?;
    resid = resid.add_scaled(1.0, &th_bt)?;
    Ok(resid.l2_norm() / u_h2)
}

/// Roots of λ² + k2·λ + n² = 0: the scalar surrogate of the linearized
/// damped-wave dynamics with Δ → −k2 and ∂_θθ → −n².
///
/// Returned with the larger real part first. For n = 0 the roots are exactly
/// {0, −k2}: the zeroth angular mode exhibits no decay, which is what the
/// symmetry class rules out.
pub fn dispersion_roots(k2: f64, n: i64) -> (Complex64, Complex64) {
    let nn = (n * n) as f64;
    let disc = k2 * k2 - 4.0 * nn;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let r1 = (-k2 + sq) / 2.0;
        let r2 = (-k2 - sq) / 2.0;
        (Complex64::new(r1, 0.0), Complex64::new(r2, 0.0))
    } else {
        let im = (-disc).sqrt() / 2.0;
        (
            Complex64::new(-k2 / 2.0, im),
            Complex64::new(-k2 / 2.0, -im),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_symmetric_field, RandomFieldSpec};

    fn grid(n: usize) -> Grid {
        Grid::with_defaults(n).unwrap()
    }

    fn small_state(g: &Grid, seed: u64, amplitude: f64) -> State {
        let u = random_symmetric_field(
            g,
            &RandomFieldSpec {
                seed,
                amplitude,
                ..RandomFieldSpec::default()
            },
        )
        .unwrap();
        let b = random_symmetric_field(
            g,
            &RandomFieldSpec {
                seed,
                amplitude,
                class: ParityClass::MagneticLike,
                ..RandomFieldSpec::default()
            },
        )
        .unwrap();
        State::new(u, b, 0.0).unwrap()
    }

    #[test]
    fn f_and_g_cancellations() {
        let g = grid(64);
        let st = small_state(&g, 3, 1e-2);
        let z = VectorField::zeros(&g, Space::Spectral);
        // Scale of a generic advective product, for relative comparisons.
        let scale = compute_f(&z, &st.u).unwrap().l2_norm();
        assert!(scale > 0.0);

        // u = b ⇒ F = 0 and G = 0 (to roundoff in the mixed products).
        let f = compute_f(&st.u, &st.u).unwrap();
        assert!(f.l2_norm() <= 1e-12 * scale, "{} vs {scale}", f.l2_norm());
        let gg = compute_g(&st.u, &st.u).unwrap();
        assert!(gg.l2_norm() <= 1e-12 * scale);

        // Swapping inputs negates G.
        let g1 = compute_g(&st.u, &st.b).unwrap();
        let g2 = compute_g(&st.b, &st.u).unwrap();
        let sum = g1.add_scaled(1.0, &g2).unwrap().l2_norm();
        assert!(sum <= 1e-12 * g1.l2_norm().max(scale));

        // F(0, b) = −F(b, 0) = b·∇b.
        let fa = compute_f(&z, &st.b).unwrap();
        let fb = compute_f(&st.b, &z).unwrap();
        let diff = fa.add_scaled(1.0, &fb).unwrap().l2_norm();
        assert!(diff <= 1e-12 * fa.l2_norm());
        assert!(fa.l2_norm() > 0.0);
    }

    #[test]
    fn f_matches_fine_grid_convolution() {
        // b = 0, u a single-stream-mode field: −u·∇u against the exact
        // convolution on a 2× finer grid.
        let coarse = grid(32);
        let fine = grid(64);
        let stream = |x: f64, y: f64| (3.0 * x).sin() * (2.0 * y).sin();
        let uc = fields::from_stream(&ScalarField::from_physical_fn(&coarse, stream));
        let uf = fields::from_stream(&ScalarField::from_physical_fn(&fine, stream));
        let zc = VectorField::zeros(&coarse, Space::Spectral);
        let zf = VectorField::zeros(&fine, Space::Spectral);
        let f_coarse = compute_f(&uc, &zc).unwrap();
        let f_fine = compute_f(&uf, &zf).unwrap();
        for c in 0..2 {
            let a = f_coarse.components[c].to_spectral();
            let b = f_fine.components[c].to_spectral();
            for i in 0..coarse.n() {
                for j in 0..coarse.n() {
                    let (m1, m2) = (coarse.freq(i), coarse.freq(j));
                    let fi = (m1.rem_euclid(64) as usize, m2.rem_euclid(64) as usize);
                    let want = if coarse.mask()[(i, j)] {
                        b.data()[fi]
                    } else {
                        Complex64::default()
                    };
                    assert!(
                        (a.data()[(i, j)] - want).norm() < 1e-12,
                        "component {c}, mode ({m1},{m2})"
                    );
                }
            }
        }
    }

    #[test]
    fn rhs_equilibrium_and_term_isolation() {
        let g = grid(64);
        let z = VectorField::zeros(&g, Space::Spectral);
        let st = State::new(z.clone(), z.clone(), 0.0).unwrap();
        let (ut, bt) = rhs(&st).unwrap();
        assert_eq!(ut.l2_norm(), 0.0);
        assert_eq!(bt.l2_norm(), 0.0);

        // b = 0, core-supported u: b_t = P[−∂_θ u] (skew form).
        let stu = small_state(&g, 5, 1e-2);
        let st = State::new(stu.u.clone(), z, 0.0).unwrap();
        let (_, bt) = rhs(&st).unwrap();
        let want = fields::leray_project(&fields::d_theta_vector_unchecked(&st.u, true)).scale(-1.0);
        let diff = bt.add_scaled(-1.0, &want).unwrap().l2_norm();
        assert!(diff < 1e-12 * want.l2_norm().max(1e-300), "diff {diff}");
    }

    #[test]
    fn linearized_is_rhs_minus_projected_nonlinear_terms() {
        let g = grid(64);
        let st = small_state(&g, 7, 1e-1);
        let (ut_full, bt_full) = rhs(&st).unwrap();
        let (ut_lin, bt_lin) = linearized_rhs(&st).unwrap();
        let f = fields::leray_project(&compute_f(&st.u, &st.b).unwrap());
        let gg = fields::leray_project(&compute_g(&st.u, &st.b).unwrap());
        let du = ut_full
            .add_scaled(-1.0, &ut_lin)
            .unwrap()
            .add_scaled(-1.0, &f)
            .unwrap()
            .l2_norm();
        let db = bt_full
            .add_scaled(-1.0, &bt_lin)
            .unwrap()
            .add_scaled(-1.0, &gg)
            .unwrap()
            .l2_norm();
        assert!(du < 1e-13 * ut_full.l2_norm().max(1e-300));
        assert!(db < 1e-13 * bt_full.l2_norm().max(1e-300));
    }

    /// ⟨u, u_t⟩ + ⟨b, b_t⟩ = −‖∇u‖²: the semi-discrete energy law, exact to
    /// roundoff by the skew-symmetrized ∂_θ and dealias-exact quadratic terms.
    #[test]
    fn semi_discrete_energy_identity() {
        let g = grid(64);
        let st = small_state(&g, 11, 1e-1);
        for kind in [RhsKind::Full, RhsKind::Linearized] {
            let (ut, bt) = rhs_with_kind(&st, kind).unwrap();
            let mut lhs = 0.0;
            for c in 0..2 {
                let a = st.u.components[c].to_spectral();
                let t = ut.components[c].to_spectral();
                lhs += a
                    .data()
                    .iter()
                    .zip(t.data().iter())
                    .map(|(x, y)| (x.conj() * y).re)
                    .sum::<f64>();
                let a = st.b.components[c].to_spectral();
                let t = bt.components[c].to_spectral();
                lhs += a
                    .data()
                    .iter()
                    .zip(t.data().iter())
                    .map(|(x, y)| (x.conj() * y).re)
                    .sum::<f64>();
            }
            lhs *= g.area();
            let grad = diagnostics::sobolev_norm(&st.u, 1.0, true).unwrap();
            let rhs_val = -grad * grad;
            assert!(
                (lhs - rhs_val).abs() < 1e-12 * grad * grad,
                "{kind:?}: {lhs} vs {rhs_val}"
            );
        }
    }

    #[test]
    fn zero_state_is_fixed_point() {
        let g = grid(32);
        let z = VectorField::zeros(&g, Space::Spectral);
        let st = State::new(z.clone(), z, 0.0).unwrap();
        let cfg = SolverConfig {
            dt: 1e-2,
            ..SolverConfig::default()
        };
        let next = step(&st, &cfg).unwrap();
        assert_eq!(next.u.l2_norm(), 0.0);
        assert_eq!(next.b.l2_norm(), 0.0);
        assert!((next.t - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn pure_diffusion_matches_trapezoidal_decay() {
        let g = grid(32);
        // Single mode k with |k|² = 5.
        let u = fields::from_stream(&ScalarField::from_physical_fn(&g, |x, y| (2.0 * x).sin() * y.sin()));
        let st = State::new(u, VectorField::zeros(&g, Space::Spectral), 0.0).unwrap();
        let dt = 1e-2;
        let cfg = SolverConfig {
            dt,
            rhs_kind: RhsKind::DiffusionOnly,
            parity_enforcement: false,
            ..SolverConfig::default()
        };
        let next = step(&st, &cfg).unwrap();
        let kk = 5.0;
        let factor = (1.0 - dt * kk / 2.0) / (1.0 + dt * kk / 2.0);
        let got = next.u.l2_norm() / st.u.l2_norm();
        assert!(
            (got - factor).abs() < 1e-14,
            "decay {got} vs trapezoidal {factor}"
        );
    }

    #[test]
    fn cfl_violation_reports_suggested_dt() {
        let g = grid(32);
        let st = small_state(&g, 1, 1e-2);
        let cfg = SolverConfig {
            dt: 1.0,
            ..SolverConfig::default()
        };
        match step(&st, &cfg) {
            Err(Error::CflViolation { suggested, .. }) => {
                assert!(suggested > 0.0 && suggested < 1.0);
            }
            other => panic!("expected CFL violation, got {other:?}"),
        }
    }

    #[test]
    fn simulate_t_end_zero_gives_single_sample() {
        let g = grid(32);
        let st = small_state(&g, 2, 1e-2);
        let cfg = SolverConfig {
            t_end: 0.0,
            ..SolverConfig::default()
        };
        let traj = simulate(&st, &cfg).unwrap();
        assert_eq!(traj.rows.len(), 1);
        assert!(traj.abort.is_none());
        assert_eq!(traj.rows[0].t, 0.0);
    }

    #[test]
    fn restart_consistency() {
        let g = grid(32);
        let st = small_state(&g, 9, 1e-2);
        let cfg = SolverConfig {
            dt: 2e-3,
            t_end: 0.05,
            sample_stride: 5,
            leakage_abort_threshold: 1.0,
            ..SolverConfig::default()
        };
        let direct = simulate(
            &st,
            &SolverConfig {
                t_end: 0.1,
                ..cfg
            },
        )
        .unwrap();
        let first = simulate(&st, &cfg).unwrap();
        let mid = first.final_state.unwrap();
        let second = simulate(&mid, &SolverConfig { t_end: 0.05, ..cfg }).unwrap();
        let fa = second.final_state.unwrap();
        let fb = direct.final_state.unwrap();
        let du = fa.u.add_scaled(-1.0, &fb.u).unwrap().l2_norm();
        assert!(du <= 1e-10 * fb.u.l2_norm().max(1e-300), "restart drift {du}");
    }

    #[test]
    fn short_run_energy_law_and_parity() {
        let g = grid(64);
        let st = small_state(&g, 13, 1e-2);
        let cfg = SolverConfig {
            dt: 1e-3,
            t_end: 0.25,
            sample_stride: 5,
            parity_enforcement: false,
            leakage_abort_threshold: 1.0,
            ..SolverConfig::default()
        };
        let traj = simulate(&st, &cfg).unwrap();
        assert!(traj.abort.is_none(), "abort: {:?}", traj.abort);
        let worst_drift = traj
            .rows
            .iter()
            .map(|r| r.energy_law_drift)
            .fold(0.0, f64::max);
        assert!(worst_drift < 1e-7, "energy drift {worst_drift}");
        let worst_parity = traj
            .rows
            .iter()
            .map(|r| r.parity_err_u.max(r.parity_err_b))
            .fold(0.0, f64::max);
        assert!(worst_parity < 1e-12, "parity drift {worst_parity}");
    }

    #[test]
    fn running_functionals_match_recomputation() {
        let g = grid(32);
        let st = small_state(&g, 4, 1e-2);
        let cfg = SolverConfig {
            dt: 2e-3,
            t_end: 0.1,
            sample_stride: 2,
            leakage_abort_threshold: 1.0,
            ..SolverConfig::default()
        };
        let traj = simulate(&st, &cfg).unwrap();
        let last = traj.rows.last().unwrap();
        let e0 = diagnostics::energy_e0_high(&traj, 2).unwrap();
        let e1 = diagnostics::energy_e1_neg(&traj, cfg.sigma).unwrap();
        let w0 = diagnostics::energy_e0_wave(&traj, 2).unwrap();
        let w1 = diagnostics::energy_e1_wave(&traj, 2).unwrap();
        assert!((last.e_big0 - e0).abs() <= 1e-12 * e0.max(1e-300));
        assert!((last.e_big1 - e1).abs() <= 1e-12 * e1.max(1e-300));
        assert!((last.e_small0 - w0).abs() <= 1e-12 * w0.max(1e-300));
        assert!((last.e_small1 - w1).abs() <= 1e-12 * w1.max(1e-300));
        assert!((last.e_total - (e0 + e1 + w0 + w1)).abs() <= 1e-12 * last.e_total.max(1e-300));
    }

    #[test]
    fn functional_zero_trajectory_and_prefix_monotonicity() {
        let g = grid(32);
        let z = VectorField::zeros(&g, Space::Spectral);
        let st = State::new(z.clone(), z, 0.0).unwrap();
        let cfg = SolverConfig {
            dt: 1e-2,
            t_end: 0.1,
            sample_stride: 2,
            leakage_abort_threshold: 1.0,
            ..SolverConfig::default()
        };
        let traj = simulate(&st, &cfg).unwrap();
        assert_eq!(diagnostics::energy_e0_high(&traj, 2).unwrap(), 0.0);
        assert_eq!(diagnostics::energy_e0_wave(&traj, 2).unwrap(), 0.0);
        assert_eq!(diagnostics::energy_e1_wave(&traj, 2).unwrap(), 0.0);

        // On a nontrivial run the running functional columns are monotone.
        let st = small_state(&g, 21, 1e-2);
        let traj = simulate(&st, &cfg).unwrap();
        for w in traj.rows.windows(2) {
            assert!(w[1].e_big0 >= w[0].e_big0 - 1e-15);
            assert!(w[1].e_small0 >= w[0].e_small0 - 1e-15);
            assert!(w[1].e_total >= w[0].e_total - 1e-15);
        }
    }

    #[test]
    fn e0_wave_m0_assembly_matches_definition() {
        // Linearized zero-b evolution: the m = 0 sup term at t = 0 is
        // ‖P[Δu₀]‖² + ‖P[∂_θu₀]‖² + ‖∂_θu₀,∂_θb₀‖² + ‖u₀,b₀‖²_{Ḣ²}.
        let g = grid(64);
        let u0 = random_symmetric_field(&g, &RandomFieldSpec::default()).unwrap();
        let z = VectorField::zeros(&g, Space::Spectral);
        let st = State::new(u0.clone(), z, 0.0).unwrap();
        let cfg = SolverConfig {
            t_end: 0.0,
            rhs_kind: RhsKind::Linearized,
            ..SolverConfig::default()
        };
        let traj = simulate(&st, &cfg).unwrap();
        let r = &traj.rows[0];
        let m0 = r.hdot_ut[0].powi(2)
            + r.hdot_bt[0].powi(2)
            + r.hdot_dthu[0].powi(2)
            + r.hdot_dthb[0].powi(2)
            + r.hdot_u[2].powi(2)
            + r.hdot_b[2].powi(2);

        // Direct assembly from the definition.
        let u0d = u0.dealias();
        let lap = u0d.map(|c| c.fractional_multiplier(2.0).unwrap().scale(-1.0));
        let p_lap = fields::leray_project(&lap);
        let dth = fields::d_theta_vector_unchecked(&u0d, true);
        let p_dth = fields::leray_project(&dth);
        let want = p_lap.l2_norm().powi(2)
            + p_dth.l2_norm().powi(2)
            + dth.l2_norm().powi(2)
            + diagnostics::sobolev_norm(&u0d, 2.0, true).unwrap().powi(2);
        assert!(
            (m0 - want).abs() < 1e-10 * want,
            "m0 part {m0} vs definition {want}"
        );
    }

    #[test]
    fn dispersion_model_checks() {
        // Double root at discriminant zero.
        let (r1, r2) = dispersion_roots(2.0, 1);
        assert!((r1 - Complex64::new(-1.0, 0.0)).norm() < 1e-14);
        assert!((r2 - Complex64::new(-1.0, 0.0)).norm() < 1e-14);

        // n = 0 factorization: roots exactly {0, −k2}.
        let (r1, r2) = dispersion_roots(3.7, 0);
        assert_eq!(r1, Complex64::new(0.0, 0.0));
        assert_eq!(r2, Complex64::new(-3.7, 0.0));

        // Vieta for assorted inputs, and root sign structure.
        for (k2, n) in [(0.0, 0), (0.5, 2), (3.0, 1), (10.0, 4), (7.3, 0)] {
            let (a, b) = dispersion_roots(k2, n);
            let sum = a + b;
            let prod = a * b;
            assert!((sum - Complex64::new(-k2, 0.0)).norm() < 1e-13 * (1.0 + k2));
            assert!(
                (prod - Complex64::new((n * n) as f64, 0.0)).norm() < 1e-13 * (1.0 + (n * n) as f64)
            );
            assert!(a.re <= 1e-15 && b.re <= 1e-15);
            if n != 0 && k2 > 0.0 {
                assert!(a.re < 0.0 && b.re < 0.0);
            }
        }
    }

    #[test]
    fn wave_residual_zero_trajectory() {
        let g = grid(32);
        let z = VectorField::zeros(&g, Space::Spectral);
        let st = State::new(z.clone(), z, 0.0).unwrap();
        let cfg = SolverConfig {
            dt: 1e-2,
            t_end: 0.1,
            sample_stride: 2,
            store_fields: true,
            ..SolverConfig::default()
        };
        let traj = simulate(&st, &cfg).unwrap();
        assert_eq!(wave_residual(&traj, 2).unwrap(), 0.0);
        assert!(wave_residual(&traj, 0).is_err());
    }

    #[test]
    fn temporal_self_convergence_is_second_order() {
        let g = grid(32);
        let st = small_state(&g, 17, 1e-2);
        let run = |dt: f64| {
            let cfg = SolverConfig {
                dt,
                t_end: 0.2,
                sample_stride: 1_000_000,
                parity_enforcement: false,
                leakage_abort_threshold: 1.0,
                ..SolverConfig::default()
            };
            simulate(&st, &cfg).unwrap().final_state.unwrap()
        };
        let reference = run(2.5e-4);
        let err = |s: &State| {
            s.u
                .add_scaled(-1.0, &reference.u)
                .unwrap()
                .l2_norm()
                .hypot(s.b.add_scaled(-1.0, &reference.b).unwrap().l2_norm())
        };
        let e1 = err(&run(4e-3));
        let e2 = err(&run(2e-3));
        let order = (e1 / e2).log2();
        assert!(
            (1.6..=2.4).contains(&order),
            "observed order {order} (e1={e1:.3e}, e2={e2:.3e})"
        );
    }
}
