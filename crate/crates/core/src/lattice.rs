//! Tridiagonal coupled-waveguide Hamiltonians and their propagators.
//!
//! A lattice is defined by nearest-neighbour couplings κ and onsite terms
//! ν. Two named profiles are built in: the Jx lattice with
//! κ_n = √((N−n)n)/2, whose spectrum is equally spaced so the propagator
//! is periodic in the length parameter, and the homogeneous lattice with
//! κ_n = 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeKind {
    Jx,
    Homogeneous,
    Custom,
}

impl LatticeKind {
    pub fn name(&self) -> &'static str {
        match self {
            LatticeKind::Jx => "jx",
            LatticeKind::Homogeneous => "homogeneous",
            LatticeKind::Custom => "custom",
        }
    }
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jx" => Ok(LatticeKind::Jx),
            "homogeneous" => Ok(LatticeKind::Homogeneous),
            "custom" => Ok(LatticeKind::Custom),
            other => Err(Error::Invalid {
                what: "lattice kind",
                reason: format!("unknown kind {other:?}, expected jx|homogeneous|custom"),
            }),
        }
    }
}

/// Coupling profile of an N-site lattice: N−1 couplings, N onsite terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeSpec {
    kind: LatticeKind,
    n: usize,
    kappa: Vec<f64>,
    nu: Vec<f64>,
}

impl LatticeSpec {
    /// Jx profile: κ_n = √((N−n)n)/2, ν = 0. Equally spaced spectrum.
    pub fn jx(n: usize) -> LatticeSpec {
        assert!(n >= 2, "lattice needs at least two sites");
        let kappa = (1..n)
            .map(|k| ((n - k) as f64 * k as f64).sqrt() / 2.0)
            .collect();
        LatticeSpec {
            kind: LatticeKind::Jx,
            n,
            kappa,
            nu: vec![0.0; n],
        }
    }

    /// Homogeneous profile: κ_n = 1, ν = 0. Spectrum 2cos(πm/(N+1)).
    pub fn homogeneous(n: usize) -> LatticeSpec {
        assert!(n >= 2, "lattice needs at least two sites");
        LatticeSpec {
            kind: LatticeKind::Homogeneous,
            n,
            kappa: vec![1.0; n - 1],
            nu: vec![0.0; n],
        }
    }

    /// Arbitrary coupling/onsite vectors. Zero couplings are allowed so a
    /// decoupled lattice can be probed.
    pub fn custom(kappa: Vec<f64>, nu: Vec<f64>) -> Result<LatticeSpec> {
        let n = nu.len();
        if n < 2 {
            return Err(Error::BadDimensions {
                what: "onsite vector",
                expected: 2,
                got: n,
            });
        }
        if kappa.len() != n - 1 {
            return Err(Error::BadDimensions {
                what: "coupling vector",
                expected: n - 1,
                got: kappa.len(),
            });
        }
        for (name, v) in [("kappa", &kappa), ("nu", &nu)] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::Invalid {
                    what: "lattice spec",
                    reason: format!("{name}[{i}] is not finite"),
                });
            }
        }
        Ok(LatticeSpec {
            kind: LatticeKind::Custom,
            n,
            kappa,
            nu,
        })
    }

    /// Named profile by kind; `Custom` is rejected here since it needs vectors.
    pub fn named(kind: LatticeKind, n: usize) -> Result<LatticeSpec> {
        match kind {
            LatticeKind::Jx => Ok(LatticeSpec::jx(n)),
            LatticeKind::Homogeneous => Ok(LatticeSpec::homogeneous(n)),
            LatticeKind::Custom => Err(Error::Invalid {
                what: "lattice spec",
                reason: "custom lattices need explicit kappa and nu vectors".into(),
            }),
        }
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn couplings(&self) -> &[f64] {
        &self.kappa
    }

    pub fn onsite(&self) -> &[f64] {
        &self.nu
    }

    /// Precondition of the universality argument: every κ_n ≠ 0.
    pub fn all_couplings_nonzero(&self) -> bool {
        self.kappa.iter().all(|&k| k != 0.0)
    }

    /// The tridiagonal Hamiltonian: H[p][p] = ν_p, H[p][p±1] = κ.
    pub fn hamiltonian(&self) -> ComplexMatrix {
        let n = self.n;
        let mut h = ComplexMatrix::zeros(n, n);
        for p in 0..n {
            h[(p, p)] = Complex64::new(self.nu[p], 0.0);
        }
        for p in 0..n - 1 {
            let k = Complex64::new(self.kappa[p], 0.0);
            h[(p, p + 1)] = k;
            h[(p + 1, p)] = k;
        }
        h
    }

    /// e^{iℓH}, unitary by construction.
    pub fn propagator(&self, length: f64) -> Result<ComplexMatrix> {
        numerics::expm_i_scaled(&self.hamiltonian(), length)
    }

    /// Reduce a Jx length into (0, 2π]. The Jx spectrum is equally spaced
    /// with unit steps, so the propagator is periodic in the length; for
    /// even N the levels sit at half-integers and one period flips the
    /// propagator by a global sign (compensated by a π phase shift in an
    /// adjacent layer, see `factorization::canonicalize`).
    pub fn canonical_length(&self, length: f64) -> Result<f64> {
        if self.kind != LatticeKind::Jx {
            return Err(Error::NotPeriodic {
                kind: self.kind.name(),
            });
        }
        Ok(wrap_to_period(length))
    }

    /// Eigenvalues plus a best-effort rationality classification of their
    /// pairwise ratios. Diagnostic only; floating point cannot decide
    /// rationality, so the verdict is a continued-fraction heuristic with
    /// denominators bounded by 10⁶.
    pub fn eigenvalue_ratio_rationality(&self) -> RationalityReport {
        let eig = numerics::hermitian_eigendecompose(&self.hamiltonian())
            .expect("tridiagonal Hamiltonian is Hermitian by construction");
        let eigenvalues = eig.eigenvalues;
        let max_abs = eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        let nonzero: Vec<f64> = eigenvalues
            .iter()
            .copied()
            .filter(|x| x.abs() > 1e-9 * max_abs.max(1.0))
            .collect();

        let mut classification = RatioClass::Rational;
        for i in 0..nonzero.len() {
            for j in (i + 1)..nonzero.len() {
                match classify_ratio(nonzero[i] / nonzero[j]) {
                    RatioClass::Rational => {}
                    RatioClass::Irrational => {
                        classification = RatioClass::Irrational;
                    }
                    RatioClass::Inconclusive => {
                        if classification == RatioClass::Rational {
                            classification = RatioClass::Inconclusive;
                        }
                    }
                }
            }
        }
        RationalityReport {
            eigenvalues,
            nonzero_count: nonzero.len(),
            classification,
        }
    }
}

/// Value in (0, 2π] congruent to `x` modulo 2π.
pub fn wrap_to_period(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r == 0.0 {
        TAU
    } else {
        r
    }
}

/// Number of whole periods removed by `wrap_to_period`.
pub fn wrap_count(x: f64) -> i64 {
    ((x - wrap_to_period(x)) / TAU).round() as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RatioClass {
    Rational,
    Irrational,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct RationalityReport {
    pub eigenvalues: Vec<f64>,
    pub nonzero_count: usize,
    pub classification: RatioClass,
}

/// Continued-fraction heuristic: a ratio counts as rational when the
/// expansion terminates (a huge partial quotient, i.e. the remainder is
/// numerical noise) while the denominator is still ≤ 10⁶, and as
/// irrational when the denominator outgrows 10⁶ with modest quotients.
fn classify_ratio(ratio: f64) -> RatioClass {
    const Q_MAX: f64 = 1e6;
    const HUGE_QUOTIENT: f64 = 1e7;

    let mut x = ratio.abs();
    if !x.is_finite() {
        return RatioClass::Inconclusive;
    }
    // Convergent denominators q_{k} = a_k q_{k-1} + q_{k-2}.
    let (mut q_prev, mut q) = (0.0f64, 1.0f64);
    for _ in 0..64 {
        let a = x.floor();
        let frac = x - a;
        if frac < 1e-12 {
            return RatioClass::Rational;
        }
        let next = 1.0 / frac;
        if next > HUGE_QUOTIENT {
            return RatioClass::Rational;
        }
        let a_next = next.floor();
        let q_new = a_next * q + q_prev;
        if q_new > Q_MAX {
            return RatioClass::Irrational;
        }
        q_prev = q;
        q = q_new;
        x = next;
    }
    RatioClass::Inconclusive
}

/// External JSON form: kappa/nu are only required for `custom`.
#[derive(Debug, Deserialize)]
struct LatticeSpecJson {
    kind: LatticeKind,
    n: usize,
    #[serde(default)]
    kappa: Option<Vec<f64>>,
    #[serde(default)]
    nu: Option<Vec<f64>>,
}

impl<'de> Deserialize<'de> for LatticeSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = LatticeSpecJson::deserialize(deserializer)?;
        LatticeSpec::try_from(raw).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<LatticeSpecJson> for LatticeSpec {
    type Error = Error;

    fn try_from(raw: LatticeSpecJson) -> Result<LatticeSpec> {
        if raw.kind == LatticeKind::Custom {
            let kappa = raw.kappa.ok_or(Error::Invalid {
                what: "lattice spec",
                reason: "custom lattice requires field 'kappa'".into(),
            })?;
            let nu = raw.nu.ok_or(Error::Invalid {
                what: "lattice spec",
                reason: "custom lattice requires field 'nu'".into(),
            })?;
            let spec = LatticeSpec::custom(kappa, nu)?;
            if spec.size() != raw.n {
                return Err(Error::BadDimensions {
                    what: "custom lattice 'n'",
                    expected: spec.size(),
                    got: raw.n,
                });
            }
            return Ok(spec);
        }
        let spec = LatticeSpec::named(raw.kind, raw.n)?;
        // Vectors are redundant for named kinds; reject them if inconsistent.
        if let Some(kappa) = raw.kappa {
            if kappa.len() != spec.kappa.len()
                || kappa
                    .iter()
                    .zip(&spec.kappa)
                    .any(|(a, b)| (a - b).abs() > 1e-12)
            {
                return Err(Error::Invalid {
                    what: "lattice spec",
                    reason: format!("'kappa' does not match the {} profile", raw.kind.name()),
                });
            }
        }
        if let Some(nu) = raw.nu {
            if nu.len() != spec.nu.len() || nu.iter().any(|&x| x != 0.0) {
                return Err(Error::Invalid {
                    what: "lattice spec",
                    reason: format!("'nu' does not match the {} profile", raw.kind.name()),
                });
            }
        }
        Ok(spec)
    }
}
