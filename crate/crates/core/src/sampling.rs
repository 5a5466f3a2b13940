//! Random and structured target unitaries.
//!
//! Haar sampling follows the QR-of-a-Gaussian construction with the
//! R-diagonal phase fix, so the distribution is exactly the unitarily
//! invariant one. The generator is pinned to SplitMix64 with Box–Muller
//! Gaussians, which makes streams reproducible from the 64-bit seed alone
//! and easy to match from other languages.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::numerics::ComplexMatrix;

/// Seed of the pinned pseudo-random stream. Identical seeds reproduce
/// identical matrices on a given build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

impl RngSeed {
    /// Seed of the k-th derived stream, `seed + k`. SplitMix64 is the hash
    /// of a counter, so consecutive seeds give decorrelated streams; this
    /// is the splitting rule used for parallel trials.
    pub fn derive(self, k: u64) -> RngSeed {
        RngSeed(self.0.wrapping_add(k))
    }
}

/// SplitMix64 (Steele, Lea & Flood 2014). State advances by the golden
/// ratio increment 0x9E3779B97F4A7C15; each output is finalized with the
/// murmur-style constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn from_seed(seed: RngSeed) -> Self {
        SplitMix64::new(seed.0)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in the half-open phase interval (0, 2π].
    pub fn next_phase(&mut self) -> f64 {
        2.0 * PI * (1.0 - self.next_f64())
    }

    /// Standard normal pair via Box–Muller on 53-bit uniforms.
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.next_f64(); // (0, 1], keeps the log finite
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        (r * theta.cos(), r * theta.sin())
    }

    /// Complex standard Gaussian (x + iy)/√2.
    pub fn next_complex_gaussian(&mut self) -> Complex64 {
        let (x, y) = self.next_gaussian_pair();
        Complex64::new(x, y).unscale(2.0f64.sqrt())
    }
}

/// Haar-distributed random unitary: QR of a complex Gaussian matrix with
/// the Q ← Q·diag(r_kk/|r_kk|) phase correction.
pub fn haar_unitary(n: usize, seed: RngSeed) -> ComplexMatrix {
    let mut rng = SplitMix64::from_seed(seed);
    let g = ComplexMatrix::from_fn(n, n, |_, _| rng.next_complex_gaussian());
    let qr = g.qr();
    let r = qr.r();
    let mut phases = DVector::<Complex64>::zeros(n);
    for k in 0..n {
        let d = r[(k, k)];
        phases[k] = if d.norm() > 0.0 {
            d.unscale(d.norm())
        } else {
            Complex64::new(1.0, 0.0)
        };
    }
    let mut q = qr.q();
    for k in 0..n {
        let w = phases[k];
        for i in 0..n {
            q[(i, k)] *= w;
        }
    }
    q
}

/// The fixed 3×3 target of the logic-gate design: rows are the
/// orthonormal vectors (1,−1,0)/√2, (1,1,−√2)/2, (1,1,√2)/2.
pub fn logic_gate_target() -> ComplexMatrix {
    let s2 = 2.0f64.sqrt();
    let rows = [
        [1.0 / s2, -1.0 / s2, 0.0],
        [0.5, 0.5, -s2 / 2.0],
        [0.5, 0.5, s2 / 2.0],
    ];
    ComplexMatrix::from_fn(3, 3, |i, j| Complex64::new(rows[i][j], 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius_norm, is_unitary};

    #[test]
    fn splitmix_reference_stream() {
        // First outputs for seed 0, from the published SplitMix64 constants.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220A8397B1DCDAF);
        assert_eq!(rng.next_u64(), 0x6E789E6AA1B965F4);
        assert_eq!(rng.next_u64(), 0x06C45D188009454F);
    }

    #[test]
    fn haar_is_deterministic_per_seed() {
        let a = haar_unitary(4, RngSeed(123));
        let b = haar_unitary(4, RngSeed(123));
        assert_eq!(a, b);
        let c = haar_unitary(4, RngSeed(124));
        assert!(frobenius_norm(&(&a - &c)) > 1e-3);
    }

    #[test]
    fn haar_is_unitary() {
        for n in [1, 2, 3, 5, 8] {
            let u = haar_unitary(n, RngSeed(7 + n as u64));
            assert!(is_unitary(&u, 1e-10), "n = {n}");
        }
    }

    #[test]
    fn haar_n1_is_unit_modulus() {
        let u = haar_unitary(1, RngSeed(3));
        assert!((u[(0, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn phases_live_in_half_open_interval() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..10_000 {
            let p = rng.next_phase();
            assert!(p > 0.0 && p <= 2.0 * PI);
        }
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = SplitMix64::new(11);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let (a, b) = rng.next_gaussian_pair();
            sum += a + b;
            sum_sq += a * a + b * b;
        }
        let samples = (2 * n) as f64;
        assert!((sum / samples).abs() < 0.01);
        assert!((sum_sq / samples - 1.0).abs() < 0.01);
    }

    #[test]
    fn logic_gate_target_is_orthonormal() {
        let t = logic_gate_target();
        assert!(is_unitary(&t, 1e-15));
        // v1 · v2† = 0 and unit row norms.
        for i in 0..3 {
            let mut dot = Complex64::new(0.0, 0.0);
            let mut norm = 0.0;
            for j in 0..3 {
                dot += t[(0, j)] * t[(1, j)].conj();
                norm += t[(i, j)].norm_sqr();
            }
            assert!((norm - 1.0).abs() < 1e-15);
            if i == 0 {
                assert!(dot.norm() < 1e-15);
            }
        }
    }

    #[test]
    fn logic_gate_target_maps_first_port() {
        let t = logic_gate_target();
        let e1 = DVector::from_fn(3, |i, _| {
            Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0)
        });
        let z = &t * e1;
        let s2 = 2.0f64.sqrt();
        let expect = [1.0 / s2, 0.5, 0.5];
        for i in 0..3 {
            assert!((z[i].re - expect[i]).abs() < 1e-15);
            assert!(z[i].im.abs() < 1e-15);
        }
    }

    /// Exact Haar moment: E|U_ij|² = 1/N.
    #[test]
    fn haar_second_moment_matches_1_over_n() {
        let n = 4;
        let trials = 10_000;
        let mut acc = vec![0.0f64; n * n];
        for t in 0..trials {
            let u = haar_unitary(n, RngSeed(1000).derive(t));
            for i in 0..n {
                for j in 0..n {
                    acc[i * n + j] += u[(i, j)].norm_sqr();
                }
            }
        }
        for v in &acc {
            let mean = v / trials as f64;
            assert!(
                (mean - 1.0 / n as f64).abs() < 0.01,
                "entry moment {mean} vs {}",
                1.0 / n as f64
            );
        }
    }

    /// Left-invariance smoke test: eigenangle distribution of V·U matches
    /// that of U (two-sample Kolmogorov–Smirnov below the 1% critical value).
    #[test]
    fn haar_left_invariance_eigenangles() {
        let n = 4;
        let samples = 2000;
        let v = haar_unitary(n, RngSeed(999));
        let mut base = Vec::with_capacity(samples * n);
        let mut rotated = Vec::with_capacity(samples * n);
        for t in 0..samples {
            let u = haar_unitary(n, RngSeed(5000).derive(t as u64));
            base.extend(eigenangles(&u));
            let w = &v * haar_unitary(n, RngSeed(90_000).derive(t as u64));
            rotated.extend(eigenangles(&w));
        }
        let d = ks_statistic(&mut base, &mut rotated);
        // c(0.01) = 1.628 for the two-sample test.
        let m = (samples * n) as f64;
        let critical = 1.628 * (2.0 / m).sqrt();
        assert!(d < critical, "KS {d:.4} >= {critical:.4}");
    }

    fn eigenangles(u: &ComplexMatrix) -> Vec<f64> {
        let schur = u.clone().schur();
        schur
            .eigenvalues()
            .expect("triangular complex Schur form")
            .iter()
            .map(|z| z.arg())
            .collect()
    }

    fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (na, nb) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            d = d.max((i as f64 / na - j as f64 / nb).abs());
        }
        d
    }
}
