//! 2D FFT engine on the centered periodic box.
//!
//! Conventions: a field on the grid x_j = Δx·(j − n/2), Δx = 2πL/n, is
//! expanded as f(x) = Σ_m c_m e^{i m·x/L} over integer modes m ∈ [−n/2, n/2)².
//! Because the grid origin sits at the box center, the plain DFT picks up a
//! checkerboard phase: c_m = (−1)^{m₁+m₂}·DFT[f]_m / n². Both directions fold
//! that twist in, so callers only ever see centered-grid coefficients.
//!
//! Real fields travel in pairs: two real arrays are packed into one complex
//! transform and unpacked via conjugate symmetry, halving the transform count
//! in the solver hot path.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Row-parallelism threshold: below this, threading overhead dominates.
const PAR_MIN_N: usize = 256;

pub struct FftEngine {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftEngine").field("n", &self.n).finish()
    }
}

impl FftEngine {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftEngine {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn rows_fft(&self, data: &mut [Complex64], forward: bool) {
        let n = self.n;
        let plan = if forward { &self.fwd } else { &self.inv };
        let scratch_len = plan.get_inplace_scratch_len();
        if n >= PAR_MIN_N {
            data.par_chunks_exact_mut(n).for_each_init(
                || vec![Complex64::default(); scratch_len],
                |scratch, row| plan.process_with_scratch(row, scratch),
            );
        } else {
            let mut scratch = vec![Complex64::default(); scratch_len];
            for row in data.chunks_exact_mut(n) {
                plan.process_with_scratch(row, &mut scratch);
            }
        }
    }

    /// Raw unnormalized 2D DFT over both axes, in place.
    fn dft2(&self, data: &mut Array2<Complex64>, forward: bool) {
        let n = self.n;
        debug_assert_eq!(data.dim(), (n, n));
        let mut work = Array2::default((n, n));
        self.rows_fft(data.as_slice_mut().expect("contiguous"), forward);
        transpose_into(data, &mut work);
        self.rows_fft(work.as_slice_mut().expect("contiguous"), forward);
        transpose_into(&work, data);
    }

    /// Physical samples (complex storage) → centered-grid coefficients.
    pub fn forward_spectral(&self, data: &mut Array2<Complex64>) {
        self.dft2(data, true);
        self.apply_twist(data, 1.0 / (self.n * self.n) as f64);
    }

    /// Centered-grid coefficients → physical samples.
    pub fn inverse_physical(&self, data: &mut Array2<Complex64>) {
        self.apply_twist(data, 1.0);
        self.dft2(data, false);
    }

    fn apply_twist(&self, data: &mut Array2<Complex64>, scale: f64) {
        let n = self.n;
        let slice = data.as_slice_mut().expect("contiguous");
        for i in 0..n {
            let row = &mut slice[i * n..(i + 1) * n];
            for (j, v) in row.iter_mut().enumerate() {
                let s = if (i + j) & 1 == 0 { scale } else { -scale };
                *v *= s;
            }
        }
    }

    /// Forward-transform two real fields with one complex FFT.
    pub fn forward_pair(
        &self,
        a: &Array2<f64>,
        b: &Array2<f64>,
        out_a: &mut Array2<Complex64>,
        out_b: &mut Array2<Complex64>,
        work: &mut Array2<Complex64>,
    ) {
        let n = self.n;
        {
            let w = work.as_slice_mut().expect("contiguous");
            let av = a.as_slice().expect("contiguous");
            let bv = b.as_slice().expect("contiguous");
            for (wi, (&ai, &bi)) in w.iter_mut().zip(av.iter().zip(bv)) {
                *wi = Complex64::new(ai, bi);
            }
        }
        self.forward_spectral(work);
        // a real ⇒ â(k) = (z(k)+z̄(−k))/2; b real ⇒ b̂(k) = (z(k)−z̄(−k))/(2i).
        for i in 0..n {
            let im = (n - i) % n;
            for j in 0..n {
                let jm = (n - j) % n;
                let z = work[(i, j)];
                let zm = work[(im, jm)].conj();
                out_a[(i, j)] = 0.5 * (z + zm);
                let d = z - zm;
                out_b[(i, j)] = Complex64::new(0.5 * d.im, -0.5 * d.re);
            }
        }
    }

    /// Inverse-transform two conjugate-symmetric spectra into real fields
    /// with one complex FFT.
    pub fn inverse_pair(
        &self,
        a_hat: &Array2<Complex64>,
        b_hat: &Array2<Complex64>,
        out_a: &mut Array2<f64>,
        out_b: &mut Array2<f64>,
        work: &mut Array2<Complex64>,
    ) {
        {
            let w = work.as_slice_mut().expect("contiguous");
            let av = a_hat.as_slice().expect("contiguous");
            let bv = b_hat.as_slice().expect("contiguous");
            for (wi, (&ai, &bi)) in w.iter_mut().zip(av.iter().zip(bv)) {
                *wi = ai + Complex64::new(0.0, 1.0) * bi;
            }
        }
        self.inverse_physical(work);
        let w = work.as_slice().expect("contiguous");
        let oa = out_a.as_slice_mut().expect("contiguous");
        let ob = out_b.as_slice_mut().expect("contiguous");
        for ((&wi, a), b) in w.iter().zip(oa.iter_mut()).zip(ob.iter_mut()) {
            *a = wi.re;
            *b = wi.im;
        }
    }
}

/// Cache-blocked out-of-place transpose of a square matrix.
fn transpose_into(src: &Array2<Complex64>, dst: &mut Array2<Complex64>) {
    const BLOCK: usize = 32;
    let n = src.dim().0;
    let s = src.as_slice().expect("contiguous");
    let d = dst.as_slice_mut().expect("contiguous");
    let mut bi = 0;
    while bi < n {
        let iend = (bi + BLOCK).min(n);
        let mut bj = 0;
        while bj < n {
            let jend = (bj + BLOCK).min(n);
            for i in bi..iend {
                for j in bj..jend {
                    d[j * n + i] = s[i * n + j];
                }
            }
            bj += BLOCK;
        }
        bi += BLOCK;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn engine_roundtrip(n: usize) {
        let eng = FftEngine::new(n);
        let mut data = Array2::from_shape_fn((n, n), |(i, j)| {
            Complex64::new((i * 7 + j * 3) as f64 % 5.0 - 2.0, 0.0)
        });
        let orig = data.clone();
        eng.forward_spectral(&mut data);
        eng.inverse_physical(&mut data);
        for (a, b) in data.iter().zip(orig.iter()) {
            assert!((a - b).norm() < 1e-12, "roundtrip failed at n={n}");
        }
    }

    #[test]
    fn roundtrip_various_sizes() {
        engine_roundtrip(32);
        engine_roundtrip(48);
        engine_roundtrip(64);
    }

    #[test]
    fn centered_single_mode() {
        // cos(m·x) on the centered grid must land exactly on modes ±m.
        let n = 32;
        let eng = FftEngine::new(n);
        let dx = 2.0 * std::f64::consts::PI / n as f64;
        let (m1, m2) = (3i64, 5i64);
        let mut data = Array2::from_shape_fn((n, n), |(i, j)| {
            let x1 = dx * (i as f64 - n as f64 / 2.0);
            let x2 = dx * (j as f64 - n as f64 / 2.0);
            Complex64::new((m1 as f64 * x1 + m2 as f64 * x2).cos(), 0.0)
        });
        eng.forward_spectral(&mut data);
        for i in 0..n {
            for j in 0..n {
                let mi = if i < n / 2 { i as i64 } else { i as i64 - n as i64 };
                let mj = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
                let expect = if (mi == m1 && mj == m2) || (mi == -m1 && mj == -m2) {
                    0.5
                } else {
                    0.0
                };
                assert!(
                    (data[(i, j)] - Complex64::new(expect, 0.0)).norm() < 1e-12,
                    "mode ({mi},{mj}) = {}",
                    data[(i, j)]
                );
            }
        }
    }

    #[test]
    fn pair_transforms_match_single() {
        let n = 32;
        let eng = FftEngine::new(n);
        let a = Array2::from_shape_fn((n, n), |(i, j)| ((i * 13 + j * 7) as f64).sin());
        let b = Array2::from_shape_fn((n, n), |(i, j)| ((i as f64 - j as f64) * 0.17).cos());
        let mut ah = Array2::default((n, n));
        let mut bh = Array2::default((n, n));
        let mut work = Array2::default((n, n));
        eng.forward_pair(&a, &b, &mut ah, &mut bh, &mut work);

        // Reference: transform each separately as a complex field.
        for (field, packed) in [(&a, &ah), (&b, &bh)] {
            let mut c = field.mapv(|v| Complex64::new(v, 0.0));
            eng.forward_spectral(&mut c);
            for (x, y) in c.iter().zip(packed.iter()) {
                assert!((x - y).norm() < 1e-12);
            }
        }

        // And back again through the packed inverse.
        let mut ar = Array2::zeros((n, n));
        let mut br = Array2::zeros((n, n));
        eng.inverse_pair(&ah, &bh, &mut ar, &mut br, &mut work);
        for (x, y) in ar.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in br.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
