//! Scratch study: how do leakage, parity and the energy-law drift evolve on a
//! small-data run? Run with: cargo run --example leakage_study -p mhd-lab

use mhd_lab::dynamics::{simulate, SolverConfig};
use mhd_lab::fields::{random_symmetric_field, ParityClass, RandomFieldSpec};
use mhd_lab::grid::Grid;

fn main() {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(64);
    let t_end: f64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let dt: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(2e-3);
    let taper: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(0.6);
    let zero_u: bool = std::env::args().nth(5).map(|s| s == "zero_u").unwrap_or(false);

    let g = Grid::with_defaults(n).unwrap();
    let mut uspec = RandomFieldSpec {
        seed: 7,
        taper_sigma: taper,
        ..RandomFieldSpec::default()
    };
    let u = if zero_u {
        uspec.amplitude = 1e-30;
        random_symmetric_field(&g, &uspec).unwrap().scale(0.0)
    } else {
        random_symmetric_field(&g, &uspec).unwrap()
    };
    let b = random_symmetric_field(
        &g,
        &RandomFieldSpec {
            seed: 7,
            class: ParityClass::MagneticLike,
            taper_sigma: taper,
            ..RandomFieldSpec::default()
        },
    )
    .unwrap();
    let st = mhd_lab::dynamics::State::new(u, b, 0.0).unwrap();
    let cfg = SolverConfig {
        dt,
        t_end,
        sample_stride: ((0.1 / dt) as usize).max(1),
        leakage_abort_threshold: 1.0,
        parity_enforcement: false,
        ..SolverConfig::default()
    };
    let start = std::time::Instant::now();
    let traj = simulate(&st, &cfg).unwrap();
    eprintln!("wall: {:.1}s  abort: {:?}", start.elapsed().as_secs_f64(), traj.abort);
    println!("t,leakage,drift,parity_u,parity_b,zero_mode,l2_u,l2_b,h4_u");
    for r in &traj.rows {
        println!(
            "{:.3},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e}",
            r.t,
            r.leakage,
            r.energy_law_drift,
            r.parity_err_u,
            r.parity_err_b,
            r.zero_mode_max,
            r.l2_u,
            r.l2_b,
            r.hdot_u[4]
        );
    }
}
