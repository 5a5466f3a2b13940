//! Numeric probe of the algebra generated by the phase-layer generators
//! and the lattice Hamiltonian.
//!
//! Starting from the anti-Hermitian set {i e_j e_j†} ∪ {iH}, pairwise real
//! Lie brackets are adjoined level by level until the spanned dimension
//! stabilizes. Dimension N² means the generated group is all of U(N);
//! a decoupled lattice (some κ = 0) caps the dimension below that. The
//! probe confirms these statements on concrete instances, it does not
//! prove them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{frobenius_norm, hermiticity_deviation, ComplexMatrix, HERMITICITY_TOL};

/// Cost guard for the closure search.
pub const MAX_PROBE_SIZE: usize = 8;

/// Relative singular-value cutoff for the span rank.
const RANK_TOL: f64 = 1e-9;
/// Novelty prefilter: looser than the rank cutoff, so the final SVD stays
/// authoritative.
const PREFILTER_TOL: f64 = 1e-7;
/// Numerical-zero threshold of the nilpotency test (on a normalized matrix).
const NILPOTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct LieBasisReport {
    pub n: usize,
    /// Real dimension of the bracket closure of the generator set.
    pub generated_dimension: usize,
    /// Whether the dimension stabilized (or reached the N² maximum).
    pub closed: bool,
    /// Whether the two-level bracket span contains a matrix conjugate to a
    /// single Jordan block of size N (nilpotency index exactly N).
    pub jordan_witness: bool,
    pub bracket_depth_used: usize,
}

/// Anti-Hermitian seed set {i e_j e_j†, j = 1..N} ∪ {iH}.
pub fn phase_and_lattice_generators(h: &ComplexMatrix) -> Vec<ComplexMatrix> {
    let n = h.nrows();
    let i = Complex64::new(0.0, 1.0);
    let mut gens = Vec::with_capacity(n + 1);
    for j in 0..n {
        let mut d = ComplexMatrix::zeros(n, n);
        d[(j, j)] = i;
        gens.push(d);
    }
    gens.push(h.map(|z| z * i));
    gens
}

/// Dimension of the real Lie algebra generated by the phase projectors
/// and iH, via bracket levels with an SVD rank oracle.
pub fn lie_closure_dimension(h: &ComplexMatrix, max_depth: usize) -> Result<LieBasisReport> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(Error::DimensionMismatch {
            left: n,
            right: h.ncols(),
        });
    }
    if n > MAX_PROBE_SIZE {
        return Err(Error::ProbeSizeExceeded {
            n,
            max: MAX_PROBE_SIZE,
        });
    }
    let dev = hermiticity_deviation(h);
    if dev > HERMITICITY_TOL {
        return Err(Error::NotHermitian {
            max_deviation: dev,
            tolerance: HERMITICITY_TOL,
        });
    }

    let closure = closure_from_generators(&phase_and_lattice_generators(h), n, max_depth);
    let jordan_witness = jordan_block_witness(h)?;
    let report = LieBasisReport {
        n,
        generated_dimension: *closure.dims_per_level.last().unwrap(),
        closed: closure.closed,
        jordan_witness,
        bracket_depth_used: closure.depth_used,
    };
    if !report.closed {
        return Err(Error::DepthExceeded {
            depth: closure.depth_used,
            dimension: report.generated_dimension,
        });
    }
    Ok(report)
}

pub(crate) struct ClosureOutcome {
    /// Span dimension after the seed level and after each bracket level.
    pub dims_per_level: Vec<usize>,
    pub closed: bool,
    pub depth_used: usize,
}

/// Worklist closure over real spans: each level brackets the elements
/// added at the previous level against everything kept so far.
pub(crate) fn closure_from_generators(
    generators: &[ComplexMatrix],
    n: usize,
    max_depth: usize,
) -> ClosureOutcome {
    let max_dim = n * n;
    let mut kept: Vec<ComplexMatrix> = Vec::new();
    let mut ortho: Vec<DVector<f64>> = Vec::new();

    for g in generators {
        try_add(&mut kept, &mut ortho, g);
    }
    let mut dims = vec![svd_rank(&kept, n)];
    let mut closed = dims[0] >= max_dim;
    let mut depth_used = 0;
    let mut new_start = 0;

    while !closed && depth_used < max_depth {
        depth_used += 1;
        let level_start = kept.len();
        let mut added = false;
        for a in 0..level_start {
            for b in new_start.max(a + 1)..level_start {
                let bracket = &kept[a] * &kept[b] - &kept[b] * &kept[a];
                if try_add(&mut kept, &mut ortho, &bracket) {
                    added = true;
                }
            }
        }
        new_start = level_start;
        let dim = svd_rank(&kept, n);
        dims.push(dim);
        if dim >= max_dim || !added {
            closed = true;
        }
    }

    ClosureOutcome {
        dims_per_level: dims,
        closed,
        depth_used,
    }
}

/// Keep `g` when its normalized vectorization has a component outside the
/// current span. Gram–Schmidt is only a prefilter; the reported dimension
/// comes from `svd_rank`.
fn try_add(kept: &mut Vec<ComplexMatrix>, ortho: &mut Vec<DVector<f64>>, g: &ComplexMatrix) -> bool {
    let norm = frobenius_norm(g);
    if norm < 1e-14 {
        return false;
    }
    let normalized = g.map(|z| z.unscale(norm));
    let mut v = vectorize_real(&normalized);
    for _ in 0..2 {
        for b in ortho.iter() {
            let coeff = b.dot(&v);
            v -= b * coeff;
        }
    }
    let rem = v.norm();
    if rem > PREFILTER_TOL {
        ortho.push(v.unscale(rem));
        kept.push(normalized);
        true
    } else {
        false
    }
}

/// Real span dimension of the vectorized set: singular values above
/// `RANK_TOL`·σ_max of the stacked matrix.
fn svd_rank(kept: &[ComplexMatrix], n: usize) -> usize {
    if kept.is_empty() {
        return 0;
    }
    let mut stacked = DMatrix::zeros(kept.len(), 2 * n * n);
    for (row, g) in kept.iter().enumerate() {
        stacked.set_row(row, &vectorize_real(g).transpose());
    }
    let svd = stacked.svd(false, false);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        return 0;
    }
    svd.singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * sigma_max)
        .count()
}

fn vectorize_real(g: &ComplexMatrix) -> DVector<f64> {
    let mut v = DVector::zeros(2 * g.len());
    for (k, z) in g.iter().enumerate() {
        v[2 * k] = z.re;
        v[2 * k + 1] = z.im;
    }
    v
}

fn vectorize_complex(g: &ComplexMatrix) -> DVector<Complex64> {
    DVector::from_iterator(g.len(), g.iter().copied())
}

/// Whether the complex span of the first- and second-level brackets of H
/// with the diagonal projectors contains a matrix conjugate to a single
/// Jordan block of size N.
///
/// The candidate is the strictly-upper-triangular part of H (for a
/// tridiagonal lattice, its superdiagonal): membership in the bracket
/// span is checked by projection, and "conjugate to a single N-Jordan
/// block" by nilpotency of index exactly N.
pub fn jordan_block_witness(h: &ComplexMatrix) -> Result<bool> {
    let n = h.nrows();
    let dev = hermiticity_deviation(h);
    if dev > HERMITICITY_TOL {
        return Err(Error::NotHermitian {
            max_deviation: dev,
            tolerance: HERMITICITY_TOL,
        });
    }

    // First- and second-level brackets with the projectors e_j e_j†.
    let mut brackets: Vec<ComplexMatrix> = Vec::new();
    let mut level1 = Vec::with_capacity(n);
    for j in 0..n {
        let a = commutator_with_projector(h, j);
        level1.push(a.clone());
        brackets.push(a);
    }
    for a in &level1 {
        for k in 0..n {
            brackets.push(commutator_with_projector(a, k));
        }
    }

    // Complex orthonormal basis of the bracket span.
    let mut basis: Vec<DVector<Complex64>> = Vec::new();
    for b in &brackets {
        let norm = frobenius_norm(b);
        if norm < 1e-14 {
            continue;
        }
        let mut v = vectorize_complex(b).unscale(norm);
        for _ in 0..2 {
            for e in &basis {
                let coeff = e.dotc(&v);
                v -= e * coeff;
            }
        }
        let rem = v.norm();
        if rem > 1e-10 {
            basis.push(v.unscale(rem));
        }
    }

    // Candidate: strictly upper triangle of H.
    let mut upper = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            upper[(i, j)] = h[(i, j)];
        }
    }
    let norm = frobenius_norm(&upper);
    if norm < 1e-14 {
        return Ok(false);
    }
    let v = vectorize_complex(&upper).unscale(norm);
    let mut residual = v.clone();
    for e in &basis {
        let coeff = e.dotc(&residual);
        residual -= e * coeff;
    }
    if residual.norm() > NILPOTENCY_TOL {
        return Ok(false);
    }

    // Nilpotency index N on the normalized candidate.
    let m = upper.map(|z| z.unscale(norm));
    let mut power = ComplexMatrix::identity(n, n);
    for _ in 0..n - 1 {
        power = &power * &m;
    }
    if frobenius_norm(&power) <= NILPOTENCY_TOL {
        return Ok(false);
    }
    power = &power * &m;
    Ok(frobenius_norm(&power) <= NILPOTENCY_TOL)
}

/// [e_j e_j†, A] = e_j (row j of A) − (column j of A) e_j†.
fn commutator_with_projector(a: &ComplexMatrix, j: usize) -> ComplexMatrix {
    let n = a.nrows();
    let mut out = ComplexMatrix::zeros(n, n);
    for q in 0..n {
        out[(j, q)] += a[(j, q)];
    }
    for p in 0..n {
        out[(p, j)] -= a[(p, j)];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;
    use crate::sampling::{haar_unitary, RngSeed, SplitMix64};

    #[test]
    fn jx_closure_fills_u3() {
        let h = LatticeSpec::jx(3).hamiltonian();
        let report = lie_closure_dimension(&h, 6).unwrap();
        assert_eq!(report.generated_dimension, 9);
        assert!(report.closed);
        assert!(report.jordan_witness);
    }

    #[test]
    fn homogeneous_n2_closure() {
        let h = LatticeSpec::homogeneous(2).hamiltonian();
        let report = lie_closure_dimension(&h, 6).unwrap();
        assert_eq!(report.generated_dimension, 4);
        assert!(report.closed);
    }

    #[test]
    fn nonzero_couplings_fill_un() {
        let mut rng = SplitMix64::new(31);
        for n in 2..=6 {
            let kappa: Vec<f64> = (0..n - 1).map(|_| 0.3 + rng.next_f64()).collect();
            let nu: Vec<f64> = (0..n).map(|_| rng.next_f64() - 0.5).collect();
            let h = LatticeSpec::custom(kappa, nu).unwrap().hamiltonian();
            let report = lie_closure_dimension(&h, 8).unwrap();
            assert_eq!(report.generated_dimension, n * n, "n = {n}");
        }
    }

    #[test]
    fn decoupled_lattice_stays_below_un() {
        let h = LatticeSpec::custom(vec![1.0, 0.0, 1.0], vec![0.0; 4])
            .unwrap()
            .hamiltonian();
        let report = lie_closure_dimension(&h, 8).unwrap();
        assert_eq!(report.generated_dimension, 8);
        assert!(report.closed);
        assert!(!report.jordan_witness);
    }

    #[test]
    fn dimension_grows_monotonically() {
        let h = LatticeSpec::jx(4).hamiltonian();
        let closure = closure_from_generators(&phase_and_lattice_generators(&h), 4, 8);
        for w in closure.dims_per_level.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert_eq!(*closure.dims_per_level.last().unwrap(), 16);
    }

    #[test]
    fn insufficient_depth_is_an_error() {
        let h = LatticeSpec::jx(3).hamiltonian();
        match lie_closure_dimension(&h, 1) {
            Err(Error::DepthExceeded { dimension, .. }) => assert!(dimension < 9),
            other => panic!("expected DepthExceeded, got {other:?}"),
        }
    }

    #[test]
    fn rank_is_invariant_under_conjugation() {
        let h = LatticeSpec::jx(3).hamiltonian();
        let gens = phase_and_lattice_generators(&h);
        let base = closure_from_generators(&gens, 3, 6);
        let w = haar_unitary(3, RngSeed(77));
        let conjugated: Vec<ComplexMatrix> =
            gens.iter().map(|g| &w * g * w.adjoint()).collect();
        let rotated = closure_from_generators(&conjugated, 3, 6);
        assert_eq!(
            base.dims_per_level.last().unwrap(),
            rotated.dims_per_level.last().unwrap()
        );
    }

    #[test]
    fn probe_rejects_oversize_and_non_hermitian() {
        let h = LatticeSpec::jx(9).hamiltonian();
        assert!(matches!(
            lie_closure_dimension(&h, 4),
            Err(Error::ProbeSizeExceeded { .. })
        ));
        let mut bad = LatticeSpec::jx(3).hamiltonian();
        bad[(0, 1)] += Complex64::new(0.0, 0.5);
        assert!(matches!(
            lie_closure_dimension(&bad, 4),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn jordan_witness_examples() {
        for n in 2..=5 {
            let h = LatticeSpec::jx(n).hamiltonian();
            assert!(jordan_block_witness(&h).unwrap(), "jx n = {n}");
            let h = LatticeSpec::homogeneous(n).hamiltonian();
            assert!(jordan_block_witness(&h).unwrap(), "homogeneous n = {n}");
        }
        // A broken bond caps the nilpotency index below N.
        let h = LatticeSpec::custom(vec![1.0, 0.0], vec![0.0; 3])
            .unwrap()
            .hamiltonian();
        assert!(!jordan_block_witness(&h).unwrap());
        // Diagonal H has no off-diagonal bracket content at all.
        let h = LatticeSpec::custom(vec![0.0], vec![1.0, -1.0])
            .unwrap()
            .hamiltonian();
        assert!(!jordan_block_witness(&h).unwrap());
    }

    #[test]
    fn projector_commutator_matches_direct_product() {
        let h = crate::numerics::test_support::test_hermitian(4, 5);
        for j in 0..4 {
            let mut d = ComplexMatrix::zeros(4, 4);
            d[(j, j)] = Complex64::new(1.0, 0.0);
            let direct = &d * &h - &h * &d;
            let fast = commutator_with_projector(&h, j);
            assert!(frobenius_norm(&(direct - fast)) < 1e-15);
        }
    }
}
