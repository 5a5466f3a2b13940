//! The interlaced factorization
//! U(x) = e^{iQ(M)} e^{iℓ_{M−1}H} ··· e^{iℓ_1 H} e^{iQ(1)}
//! of an N-port unitary: M diagonal phase layers of N phases each,
//! alternating with M−1 propagators of a fixed lattice Hamiltonian.
//! The first phase layer acts first (rightmost factor).

use std::collections::HashMap;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{self, LatticeKind, LatticeSpec};
use crate::numerics::{hermitian_eigendecompose, ComplexMatrix, HermitianEigen};
use crate::sampling::SplitMix64;

/// Free parameters of the factorization: M·N phases plus M−1 lengths,
/// stored unconstrained in ℝ. `canonicalized` gives the wrapped view.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterTuple {
    n: usize,
    m: usize,
    phases: Vec<Vec<f64>>,
    lengths: Vec<f64>,
}

/// Total parameter count M·N + (M−1) = M(N+1) − 1.
pub fn parameter_count(n: usize, m: usize) -> usize {
    assert!(n >= 2 && m >= 1);
    m * n + (m - 1)
}

impl ParameterTuple {
    pub fn new(phases: Vec<Vec<f64>>, lengths: Vec<f64>) -> Result<ParameterTuple> {
        let m = phases.len();
        if m == 0 {
            return Err(Error::Invalid {
                what: "parameter tuple",
                reason: "at least one phase layer is required".into(),
            });
        }
        let n = phases[0].len();
        if n < 2 {
            return Err(Error::Invalid {
                what: "parameter tuple",
                reason: "phase layers need at least two ports".into(),
            });
        }
        for (i, layer) in phases.iter().enumerate() {
            if layer.len() != n {
                return Err(Error::BadDimensions {
                    what: "phase layer",
                    expected: n,
                    got: layer.len(),
                });
            }
            if let Some(j) = layer.iter().position(|x| !x.is_finite()) {
                return Err(Error::Invalid {
                    what: "parameter tuple",
                    reason: format!("phases[{i}][{j}] is not finite"),
                });
            }
        }
        if lengths.len() != m - 1 {
            return Err(Error::BadDimensions {
                what: "length vector",
                expected: m - 1,
                got: lengths.len(),
            });
        }
        if let Some(i) = lengths.iter().position(|x| !x.is_finite()) {
            return Err(Error::Invalid {
                what: "parameter tuple",
                reason: format!("lengths[{i}] is not finite"),
            });
        }
        Ok(ParameterTuple {
            n,
            m,
            phases,
            lengths,
        })
    }

    pub fn zeros(n: usize, m: usize) -> ParameterTuple {
        ParameterTuple {
            n,
            m,
            phases: vec![vec![0.0; n]; m],
            lengths: vec![0.0; m - 1],
        }
    }

    /// Uniform draw over one period: phases and lengths in (0, 2π].
    pub fn random(n: usize, m: usize, rng: &mut SplitMix64) -> ParameterTuple {
        let phases = (0..m)
            .map(|_| (0..n).map(|_| rng.next_phase()).collect())
            .collect();
        let lengths = (0..m - 1).map(|_| rng.next_phase()).collect();
        ParameterTuple {
            n,
            m,
            phases,
            lengths,
        }
    }

    pub fn ports(&self) -> usize {
        self.n
    }

    pub fn layers(&self) -> usize {
        self.m
    }

    pub fn phases(&self) -> &[Vec<f64>] {
        &self.phases
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        parameter_count(self.n, self.m)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flatten in the canonical parameter order
    /// (φ(1)_1..φ(1)_N, ℓ_1, φ(2)_1.., ℓ_2, ..., φ(M)_N).
    pub fn to_flat(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.len());
        let mut k = 0;
        for layer in 0..self.m {
            for j in 0..self.n {
                x[k] = self.phases[layer][j];
                k += 1;
            }
            if layer + 1 < self.m {
                x[k] = self.lengths[layer];
                k += 1;
            }
        }
        x
    }

    pub fn from_flat(n: usize, m: usize, x: &DVector<f64>) -> ParameterTuple {
        assert_eq!(x.len(), parameter_count(n, m));
        let mut t = ParameterTuple::zeros(n, m);
        t.assign_flat(x);
        t
    }

    pub(crate) fn assign_flat(&mut self, x: &DVector<f64>) {
        let mut k = 0;
        for layer in 0..self.m {
            for j in 0..self.n {
                self.phases[layer][j] = x[k];
                k += 1;
            }
            if layer + 1 < self.m {
                self.lengths[layer] = x[k];
                k += 1;
            }
        }
    }

    /// Wrapped view: phases in (0, 2π]; lengths in (0, 2π] for the Jx
    /// lattice, untouched otherwise. The evaluated unitary is unchanged.
    /// For even-N Jx lattices each removed period flips the propagator
    /// sign, so an odd total wrap count is compensated by adding π to
    /// every phase of the first layer.
    pub fn canonicalized(&self, lattice: &LatticeSpec) -> ParameterTuple {
        let mut out = self.clone();
        if lattice.kind() == LatticeKind::Jx {
            let mut wraps: i64 = 0;
            for l in &mut out.lengths {
                wraps += lattice::wrap_count(*l);
                *l = lattice::wrap_to_period(*l);
            }
            if self.n % 2 == 0 && wraps.rem_euclid(2) == 1 {
                for p in &mut out.phases[0] {
                    *p += std::f64::consts::PI;
                }
            }
        }
        for layer in &mut out.phases {
            for p in layer {
                *p = lattice::wrap_to_period(*p);
            }
        }
        out
    }
}

/// JSON form `{"n": N, "m": M, "phases": [[..]×M], "lengths": [..]}`.
#[derive(Debug, Deserialize)]
struct ParameterTupleJson {
    n: usize,
    m: usize,
    phases: Vec<Vec<f64>>,
    lengths: Vec<f64>,
}

impl<'de> Deserialize<'de> for ParameterTuple {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = ParameterTupleJson::deserialize(deserializer)?;
        let t = ParameterTuple::new(raw.phases, raw.lengths).map_err(serde::de::Error::custom)?;
        if t.ports() != raw.n || t.layers() != raw.m {
            return Err(serde::de::Error::custom(format!(
                "declared {}x{} but phases describe {}x{}",
                raw.n,
                raw.m,
                t.ports(),
                t.layers()
            )));
        }
        Ok(t)
    }
}

/// A lattice plus a parameter tuple of matching size. The Hamiltonian is
/// eigendecomposed once at construction; every propagator and propagator
/// derivative reuses that spectral data.
#[derive(Debug, Clone)]
pub struct FactorizationModel {
    lattice: LatticeSpec,
    eigen: HermitianEigen,
    params: ParameterTuple,
}

impl FactorizationModel {
    pub fn new(lattice: LatticeSpec, params: ParameterTuple) -> Result<FactorizationModel> {
        if lattice.size() != params.ports() {
            return Err(Error::DimensionMismatch {
                left: lattice.size(),
                right: params.ports(),
            });
        }
        let eigen = hermitian_eigendecompose(&lattice.hamiltonian())?;
        Ok(FactorizationModel {
            lattice,
            eigen,
            params,
        })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn params(&self) -> &ParameterTuple {
        &self.params
    }

    pub fn set_params(&mut self, params: ParameterTuple) -> Result<()> {
        if params.ports() != self.lattice.size() {
            return Err(Error::DimensionMismatch {
                left: self.lattice.size(),
                right: params.ports(),
            });
        }
        self.params = params;
        Ok(())
    }

    pub(crate) fn assign_flat_params(&mut self, x: &DVector<f64>) {
        self.params.assign_flat(x);
    }

    fn phase_factor(&self, layer: usize) -> ComplexMatrix {
        let n = self.params.ports();
        let mut d = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            d[(j, j)] = Complex64::from_polar(1.0, self.params.phases[layer][j]);
        }
        d
    }

    /// The 2M−1 factors of the chain, rightmost (applied first) at index 0.
    /// Even slots are phase layers, odd slots are propagators.
    fn factors(&self) -> Vec<ComplexMatrix> {
        let m = self.params.layers();
        // One propagator per distinct length; repeated values share it.
        let mut propagators: HashMap<u64, ComplexMatrix> = HashMap::new();
        for &l in self.params.lengths() {
            propagators
                .entry(l.to_bits())
                .or_insert_with(|| self.eigen.unitary_exp(l));
        }
        let mut factors = Vec::with_capacity(2 * m - 1);
        for layer in 0..m {
            factors.push(self.phase_factor(layer));
            if layer + 1 < m {
                factors.push(propagators[&self.params.lengths[layer].to_bits()].clone());
            }
        }
        factors
    }

    /// Evaluate U(x). A product of unitaries, so unitary by construction.
    pub fn evaluate(&self) -> ComplexMatrix {
        let factors = self.factors();
        let n = self.params.ports();
        let mut u = ComplexMatrix::identity(n, n);
        for f in &factors {
            u = f * u;
        }
        u
    }

    /// Analytic derivative of U with respect to every parameter, in flat
    /// parameter order. Built from prefix/suffix partial products of the
    /// factor chain (2(2M−1) products total):
    ///   ∂U/∂φ_j  = L · (i e_j e_jᵀ e^{iQ}) · R,
    ///   ∂U/∂ℓ    = L' · (iH e^{iℓH}) · R'.
    pub fn jacobian(&self) -> Vec<ComplexMatrix> {
        let factors = self.factors();
        let k_total = factors.len();
        let n = self.params.ports();
        let m = self.params.layers();

        // suffix[k] = F_{k-1} ··· F_0, prefix[k] = F_{K-1} ··· F_{k+1}.
        let mut suffix = Vec::with_capacity(k_total);
        suffix.push(ComplexMatrix::identity(n, n));
        for k in 1..k_total {
            let next = &factors[k - 1] * &suffix[k - 1];
            suffix.push(next);
        }
        let mut prefix = vec![ComplexMatrix::identity(n, n); k_total];
        for k in (0..k_total - 1).rev() {
            prefix[k] = &prefix[k + 1] * &factors[k + 1];
        }

        let mut derivs = Vec::with_capacity(self.params.len());
        for layer in 0..m {
            let k = 2 * layer;
            for j in 0..n {
                // Single nonzero entry makes L · dF · R a scaled outer
                // product of L's column j with R's row j.
                let w = Complex64::new(0.0, 1.0)
                    * Complex64::from_polar(1.0, self.params.phases[layer][j]);
                let mut d = ComplexMatrix::zeros(n, n);
                for p in 0..n {
                    let lpj = prefix[k][(p, j)] * w;
                    for q in 0..n {
                        d[(p, q)] = lpj * suffix[k][(j, q)];
                    }
                }
                derivs.push(d);
            }
            if layer + 1 < m {
                let k = 2 * layer + 1;
                let df = self
                    .eigen
                    .unitary_exp_derivative(self.params.lengths[layer]);
                derivs.push(&prefix[k] * df * &suffix[k]);
            }
        }
        derivs
    }
}
