//! Dense complex matrix arithmetic shared by every other module.
//!
//! All matrices in this crate are square, and every propagator is the
//! exponential of a Hermitian generator, so the matrix exponential is
//! computed through the spectral decomposition rather than Padé or
//! scaling-and-squaring. That keeps the result unitary up to rounding.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense square complex matrix, the carrier type for Hamiltonians,
/// unitaries and phase layers.
pub type ComplexMatrix = DMatrix<Complex64>;

/// Per-entry tolerance for the A = A† check.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Default Frobenius tolerance for unitarity checks.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Spectral decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Real eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, ordered like `eigenvalues`.
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    /// Dimension of the decomposed matrix.
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// V diag(f(λ)) V† for an arbitrary complex function of the spectrum.
    fn apply_spectral(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let n = self.dim();
        let v = &self.eigenvectors;
        // Scale columns of V by f(λ_k), then multiply by V†.
        let mut scaled = v.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            for i in 0..n {
                scaled[(i, k)] *= w;
            }
        }
        scaled * v.adjoint()
    }

    /// e^{itA} = V diag(e^{itλ}) V†. Unitary for real `t` by construction.
    pub fn unitary_exp(&self, t: f64) -> ComplexMatrix {
        self.apply_spectral(|lambda| Complex64::from_polar(1.0, t * lambda))
    }

    /// d/dt e^{itA} = V diag(iλ e^{itλ}) V†.
    pub fn unitary_exp_derivative(&self, t: f64) -> ComplexMatrix {
        self.apply_spectral(|lambda| {
            Complex64::new(0.0, lambda) * Complex64::from_polar(1.0, t * lambda)
        })
    }

    /// V diag(λ) V†, the matrix that was decomposed.
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.apply_spectral(|lambda| Complex64::new(lambda, 0.0))
    }
}

/// Largest per-entry deviation from Hermitian symmetry, max |A_ij - conj(A_ji)|.
pub fn hermiticity_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut max = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let dev = (a[(i, j)] - a[(j, i)].conj()).norm();
            max = max.max(dev);
        }
    }
    max
}

/// Spectral decomposition of a Hermitian matrix with ascending eigenvalues.
///
/// Fails with [`Error::NotHermitian`] when any entry violates A = A† by
/// more than [`HERMITICITY_TOL`], and with [`Error::NonConvergence`] when
/// the iterative eigensolver gives up.
pub fn hermitian_eigendecompose(a: &ComplexMatrix) -> Result<HermitianEigen> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            left: a.nrows(),
            right: a.ncols(),
        });
    }
    let dev = hermiticity_deviation(a);
    if dev > HERMITICITY_TOL {
        return Err(Error::NotHermitian {
            max_deviation: dev,
            tolerance: HERMITICITY_TOL,
        });
    }
    let n = a.nrows();
    // Symmetrize before solving so rounding in the input cannot leak into
    // the eigenvectors.
    let sym = (a + a.adjoint()).scale(0.5);
    let eig = nalgebra::linalg::SymmetricEigen::try_new(sym, f64::EPSILON, 200 * n.max(4))
        .ok_or(Error::NonConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());

    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// e^{itA} for Hermitian A, computed through the spectral decomposition.
pub fn expm_i_scaled(a: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    Ok(hermitian_eigendecompose(a)?.unitary_exp(t))
}

/// Frobenius norm, sqrt(Σ|a_ij|²) = sqrt(trace(A A†)).
pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Whether ‖A†A − I‖_F ≤ tol.
pub fn is_unitary(a: &ComplexMatrix, tol: f64) -> bool {
    unitarity_deviation(a) <= tol
}

/// ‖A†A − I‖_F.
pub fn unitarity_deviation(a: &ComplexMatrix) -> f64 {
    let n = a.ncols();
    let mut g = a.adjoint() * a;
    for i in 0..n {
        g[(i, i)] -= Complex64::new(1.0, 0.0);
    }
    frobenius_norm(&g)
}

/// Identity matrix helper.
pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// On-disk matrix format: `{"n": N, "re": [[..]], "im": [[..]]}`, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(a: &ComplexMatrix) -> Self {
        let n = a.nrows();
        let re = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)].re).collect())
            .collect();
        let im = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)].im).collect())
            .collect();
        MatrixJson { n, re, im }
    }

    /// Validate squareness and finiteness, then build the matrix.
    pub fn into_matrix(self) -> Result<ComplexMatrix> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Invalid {
                what: "matrix json",
                reason: "field 'n' must be positive".into(),
            });
        }
        for (name, part) in [("re", &self.re), ("im", &self.im)] {
            if part.len() != n {
                return Err(Error::Invalid {
                    what: "matrix json",
                    reason: format!("field '{name}' has {} rows, expected {n}", part.len()),
                });
            }
            for (i, row) in part.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Invalid {
                        what: "matrix json",
                        reason: format!("field '{name}' row {i} has {} entries, expected {n}", row.len()),
                    });
                }
                if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Invalid {
                        what: "matrix json",
                        reason: format!("field '{name}' entry ({i},{j}) is not finite"),
                    });
                }
            }
        }
        Ok(ComplexMatrix::from_fn(n, n, |i, j| {
            Complex64::new(self.re[i][j], self.im[i][j])
        }))
    }
}

/// Parse a matrix from its JSON file format.
pub fn matrix_from_json(text: &str) -> Result<ComplexMatrix> {
    let raw: MatrixJson = serde_json::from_str(text)?;
    raw.into_matrix()
}

/// Serialize a matrix to its JSON file format.
pub fn matrix_to_json(a: &ComplexMatrix) -> String {
    serde_json::to_string_pretty(&MatrixJson::from_matrix(a)).expect("matrix json")
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Brute-force Taylor series of e^{itA}, truncated at `terms`.
    /// Independent of the spectral route used by the implementation.
    pub fn taylor_expm_i(a: &ComplexMatrix, t: f64, terms: usize) -> ComplexMatrix {
        let n = a.nrows();
        let x = a.map(|c| c * Complex64::new(0.0, t));
        let mut sum = ComplexMatrix::identity(n, n);
        let mut term = ComplexMatrix::identity(n, n);
        for k in 1..=terms {
            term = (&term * &x).unscale(k as f64);
            sum += &term;
        }
        sum
    }

    pub fn max_entry_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    /// Deterministic pseudo-random Hermitian matrix for tests.
    pub fn test_hermitian(n: usize, seed: u64) -> ComplexMatrix {
        let mut rng = crate::sampling::SplitMix64::new(seed);
        let mut a = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = Complex64::new(rng.next_f64() * 2.0 - 1.0, 0.0);
            for j in (i + 1)..n {
                let z = Complex64::new(rng.next_f64() * 2.0 - 1.0, rng.next_f64() * 2.0 - 1.0);
                a[(i, j)] = z;
                a[(j, i)] = z.conj();
            }
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_eigendecomposition() {
        let a = identity(3);
        let eig = hermitian_eigendecompose(&a).unwrap();
        for &l in &eig.eigenvalues {
            assert!((l - 1.0).abs() < 1e-14);
        }
        // Any orthonormal basis is acceptable; check V†V = I per entry.
        let gram = eig.eigenvectors.adjoint() * &eig.eigenvectors;
        let dev = max_entry_diff(&gram, &identity(3));
        assert!(dev < 1e-12, "V not orthonormal: {dev:.3e}");
    }

    #[test]
    fn jx_n3_has_integer_spectrum() {
        let h = crate::lattice::LatticeSpec::jx(3).hamiltonian();
        let eig = hermitian_eigendecompose(&h).unwrap();
        for (got, want) in eig.eigenvalues.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn homogeneous_n3_spectrum() {
        let h = crate::lattice::LatticeSpec::homogeneous(3).hamiltonian();
        let eig = hermitian_eigendecompose(&h).unwrap();
        let sqrt2 = 2.0f64.sqrt();
        for (got, want) in eig.eigenvalues.iter().zip([-sqrt2, 0.0, sqrt2]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn eigendecomposition_reconstructs_input() {
        for seed in 0..5 {
            let a = test_hermitian(5, seed);
            let eig = hermitian_eigendecompose(&a).unwrap();
            let diff = frobenius_norm(&(eig.reconstruct() - &a));
            assert!(diff < 1e-10, "reconstruction error {diff:.3e}");
            let gram = eig.eigenvectors.adjoint() * &eig.eigenvectors;
            assert!(max_entry_diff(&gram, &identity(5)) < 1e-12);
            for w in eig.eigenvalues.windows(2) {
                assert!(w[0] <= w[1], "eigenvalues not ascending");
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut a = identity(2);
        a[(0, 1)] = Complex64::new(0.5, 0.0);
        match hermitian_eigendecompose(&a) {
            Err(Error::NotHermitian { .. }) => {}
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let a = ComplexMatrix::zeros(4, 4);
        let u = expm_i_scaled(&a, 5.0).unwrap();
        assert!(max_entry_diff(&u, &identity(4)) < 1e-14);
    }

    #[test]
    fn expm_jx_full_period_is_identity() {
        let h = crate::lattice::LatticeSpec::jx(3).hamiltonian();
        let u = expm_i_scaled(&h, 2.0 * PI).unwrap();
        assert!(frobenius_norm(&(u - identity(3))) < 1e-10);
    }

    #[test]
    fn expm_matches_taylor_oracle() {
        let h = crate::lattice::LatticeSpec::homogeneous(2).hamiltonian();
        let u = expm_i_scaled(&h, PI / 4.0).unwrap();
        let oracle = taylor_expm_i(&h, PI / 4.0, 50);
        assert!(max_entry_diff(&u, &oracle) < 1e-14);

        let a = test_hermitian(4, 9);
        let u = expm_i_scaled(&a, 0.7).unwrap();
        let oracle = taylor_expm_i(&a, 0.7, 60);
        assert!(max_entry_diff(&u, &oracle) < 1e-12);
    }

    #[test]
    fn expm_one_parameter_group_law() {
        let a = test_hermitian(4, 3);
        let eig = hermitian_eigendecompose(&a).unwrap();
        for (s, t) in [(0.3, 1.1), (-2.0, 0.5), (4.0, -4.0)] {
            let lhs = eig.unitary_exp(s) * eig.unitary_exp(t);
            let rhs = eig.unitary_exp(s + t);
            assert!(frobenius_norm(&(lhs - rhs)) < 1e-9);
        }
    }

    #[test]
    fn expm_adjoint_is_negative_parameter() {
        let a = test_hermitian(5, 11);
        let eig = hermitian_eigendecompose(&a).unwrap();
        let lhs = eig.unitary_exp(1.3).adjoint();
        let rhs = eig.unitary_exp(-1.3);
        assert!(frobenius_norm(&(lhs - rhs)) < 1e-10);
    }

    #[test]
    fn expm_is_unitary() {
        let a = test_hermitian(6, 21);
        let u = expm_i_scaled(&a, 2.7).unwrap();
        assert!(is_unitary(&u, 1e-10));
    }

    #[test]
    fn frobenius_basics() {
        assert_eq!(frobenius_norm(&ComplexMatrix::zeros(3, 3)), 0.0);
        for n in 1..6 {
            let d = (frobenius_norm(&identity(n)) - (n as f64).sqrt()).abs();
            assert!(d < 1e-15);
        }
    }

    #[test]
    fn frobenius_matches_trace_oracle() {
        // Independent route: sqrt(trace(A A†)).
        let a = test_hermitian(4, 17).map(|c| c * Complex64::new(0.3, 0.9));
        let trace: f64 = (&a * a.adjoint())
            .diagonal()
            .iter()
            .map(|c| c.re)
            .sum();
        assert!((frobenius_norm(&a) - trace.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn frobenius_unitary_invariance() {
        let a = test_hermitian(4, 5);
        let u = crate::sampling::haar_unitary(4, crate::sampling::RngSeed(77));
        let base = frobenius_norm(&a);
        let left = frobenius_norm(&(&u * &a));
        let right = frobenius_norm(&(&a * &u));
        assert!((left - base).abs() / base < 1e-10);
        assert!((right - base).abs() / base < 1e-10);
    }

    #[test]
    fn is_unitary_examples() {
        assert!(is_unitary(&identity(4), 1e-12));
        let mut d = identity(2);
        d[(1, 1)] = Complex64::new(2.0, 0.0);
        assert!(!is_unitary(&d, 1e-6));
        let u = crate::sampling::haar_unitary(5, crate::sampling::RngSeed(1));
        assert!(is_unitary(&u, 1e-10));
    }

    #[test]
    fn matrix_json_round_trip() {
        let u = crate::sampling::haar_unitary(3, crate::sampling::RngSeed(42));
        let text = matrix_to_json(&u);
        let back = matrix_from_json(&text).unwrap();
        assert!(max_entry_diff(&u, &back) < 1e-16);
    }

    #[test]
    fn matrix_json_rejects_bad_shapes() {
        let text = r#"{"n": 2, "re": [[1.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]}"#;
        match matrix_from_json(text) {
            Err(Error::Invalid { reason, .. }) => assert!(reason.contains("'re'")),
            other => panic!("expected Invalid, got {other:?}"),
        }
    }
}
