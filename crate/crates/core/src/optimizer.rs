//! Damped least-squares fitting of the factorization against a target
//! unitary, and the layer-sweep experiment around it.
//!
//! The objective is the normalized error norm L = ‖U(x) − U_t‖²_F / N².
//! Each Levenberg–Marquardt step solves (JᵀJ + λI)Δ = −Jᵀr on the real
//! residual vector; a step is accepted only when L decreases, with the
//! damping factor moving down on accept and up on reject.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factorization::{FactorizationModel, ParameterTuple};
use crate::lattice::{LatticeKind, LatticeSpec};
use crate::numerics::{unitarity_deviation, ComplexMatrix};
use crate::sampling::{haar_unitary, RngSeed, SplitMix64};

/// Unitarity budget for fit targets.
const TARGET_UNITARITY_TOL: f64 = 1e-8;
/// A rejected-step damping above this aborts the run.
const DAMPING_OVERFLOW: f64 = 1e14;
/// Damping never decays below this, keeping the normal matrix positive
/// definite despite the per-layer global-phase null directions.
const DAMPING_FLOOR: f64 = 1e-12;
/// Relative residual budget for the normal-equation solve.
const SOLVE_RESIDUAL_TOL: f64 = 1e-8;
/// Salt of the initialization stream, so init draws never overlap the
/// target-generation stream of the same seed.
const INIT_STREAM_SALT: u64 = 0xBF58_476D_1CE4_E5B9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Phases and lengths uniform in (0, 2π].
    UniformPeriod,
    /// All parameters zero; the first step leaves the identity.
    Zero,
}

/// Knobs of the fit loop. Defaults put the acceptance threshold at the
/// numerical-noise regime and are all overridable.
#[derive(Debug, Clone, Serialize)]
pub struct FitConfig {
    /// Acceptance threshold δ on the error norm.
    pub tolerance: f64,
    /// Iteration budget per restart.
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_up: f64,
    pub damping_down: f64,
    /// Independent random initializations; the best run is reported.
    pub restarts: usize,
    pub init_strategy: InitStrategy,
    /// Downgrade the target unitarity check from an error to a pass-through.
    pub allow_nonunitary_target: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            tolerance: 1e-10,
            max_iterations: 2000,
            initial_damping: 1e-3,
            damping_up: 10.0,
            damping_down: 0.1,
            restarts: 5,
            init_strategy: InitStrategy::UniformPeriod,
            allow_nonunitary_target: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.tolerance > 0.0, "tolerance must be positive"),
            (self.max_iterations >= 1, "max_iterations must be at least 1"),
            (self.initial_damping > 0.0, "initial_damping must be positive"),
            (self.damping_up > 1.0, "damping_up must exceed 1"),
            (
                self.damping_down > 0.0 && self.damping_down < 1.0,
                "damping_down must lie in (0, 1)",
            ),
            (self.restarts >= 1, "restarts must be at least 1"),
        ];
        for (ok, reason) in checks {
            if !ok {
                return Err(Error::Invalid {
                    what: "fit config",
                    reason: reason.into(),
                });
            }
        }
        Ok(())
    }
}

/// Outcome of a fit: the best parameters over all restarts.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub lattice: LatticeSpec,
    pub best_params: ParameterTuple,
    pub final_l: f64,
    /// Candidate steps evaluated, summed over restarts.
    pub iterations_used: usize,
    pub converged: bool,
    /// Error norm after each accepted step of the best restart,
    /// starting at the initial value. Non-increasing.
    pub trace: Vec<f64>,
}

/// Error norm L = ‖U − target‖²_F / N² (zero iff equal).
pub fn error_norm(u: &ComplexMatrix, target: &ComplexMatrix) -> Result<f64> {
    if u.nrows() != target.nrows() || u.ncols() != target.ncols() {
        return Err(Error::DimensionMismatch {
            left: u.nrows(),
            right: target.nrows(),
        });
    }
    let n = u.nrows() as f64;
    let sum: f64 = u
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    Ok(sum / (n * n))
}

/// Real residual vector of length 2N²: real and imaginary parts of
/// U(x) − target, row-major, interleaved per entry. ‖r‖²/N² equals the
/// error norm.
pub fn residual_vector(
    model: &FactorizationModel,
    target: &ComplexMatrix,
) -> Result<DVector<f64>> {
    let n = model.lattice().size();
    if target.nrows() != n || target.ncols() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: target.nrows(),
        });
    }
    let u = model.evaluate();
    Ok(residuals_from_evaluated(&u, target))
}

fn residuals_from_evaluated(u: &ComplexMatrix, target: &ComplexMatrix) -> DVector<f64> {
    let n = u.nrows();
    let mut r = DVector::zeros(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let d = u[(i, j)] - target[(i, j)];
            r[2 * (i * n + j)] = d.re;
            r[2 * (i * n + j) + 1] = d.im;
        }
    }
    r
}

/// Real Jacobian of the residual vector, 2N² rows by P columns.
fn residual_jacobian(model: &FactorizationModel) -> DMatrix<f64> {
    let n = model.lattice().size();
    let derivs = model.jacobian();
    let mut j = DMatrix::zeros(2 * n * n, derivs.len());
    for (p, d) in derivs.iter().enumerate() {
        for row in 0..n {
            for col in 0..n {
                let z = d[(row, col)];
                j[(2 * (row * n + col), p)] = z.re;
                j[(2 * (row * n + col) + 1, p)] = z.im;
            }
        }
    }
    j
}

struct RunOutcome {
    params: ParameterTuple,
    final_l: f64,
    iterations: usize,
    trace: Vec<f64>,
}

/// One LM run from a fixed initialization.
fn lm_single_run(
    model: &mut FactorizationModel,
    target: &ComplexMatrix,
    config: &FitConfig,
    init: ParameterTuple,
) -> RunOutcome {
    let n = model.lattice().size() as f64;
    let nn = n * n;
    model
        .set_params(init)
        .expect("initialization matches the model size");

    let mut x = model.params().to_flat();
    let mut r = residuals_from_evaluated(&model.evaluate(), target);
    let mut l = r.norm_squared() / nn;
    let mut damping = config.initial_damping;
    let mut trace = vec![l];
    let mut iterations = 0;
    let p = x.len();

    'outer: while iterations < config.max_iterations && l > config.tolerance {
        let jac = residual_jacobian(model);
        let jtj = jac.tr_mul(&jac);
        let g = jac.tr_mul(&r);
        let g_norm = g.norm();

        // Retry with increasing damping until a step is accepted; the
        // Jacobian stays valid because the parameters did not move.
        loop {
            if iterations >= config.max_iterations {
                break 'outer;
            }
            iterations += 1;

            let mut a = jtj.clone();
            for i in 0..p {
                a[(i, i)] += damping;
            }
            let step = match a.clone().cholesky() {
                Some(chol) => {
                    let d = chol.solve(&(-&g));
                    let solve_residual = (&a * &d + &g).norm();
                    if solve_residual <= SOLVE_RESIDUAL_TOL * g_norm.max(f64::MIN_POSITIVE) {
                        Some(d)
                    } else {
                        None
                    }
                }
                None => None,
            };

            let accepted = match step {
                Some(d) => {
                    let x_new = &x + &d;
                    model.assign_flat_params(&x_new);
                    let r_new = residuals_from_evaluated(&model.evaluate(), target);
                    let l_new = r_new.norm_squared() / nn;
                    if l_new < l {
                        x = x_new;
                        r = r_new;
                        l = l_new;
                        true
                    } else {
                        false
                    }
                }
                None => false,
            };

            if accepted {
                damping = (damping * config.damping_down).max(DAMPING_FLOOR);
                trace.push(l);
                break;
            }
            damping *= config.damping_up;
            if damping > DAMPING_OVERFLOW {
                break 'outer;
            }
        }
    }

    model.assign_flat_params(&x);
    RunOutcome {
        params: model.params().clone(),
        final_l: l,
        iterations,
        trace,
    }
}

/// Fit the M-layer factorization over `lattice` to a target unitary.
///
/// Runs up to `config.restarts` LM descents from fresh initializations
/// (stopping early once one converges) and reports the best; ties go to
/// the earliest restart. The initialization stream is derived from `seed`
/// with a fixed salt, so a target generated from the same seed shares no
/// random draws with the fit.
pub fn lm_fit(
    target: &ComplexMatrix,
    lattice: &LatticeSpec,
    layers: usize,
    config: &FitConfig,
    seed: RngSeed,
) -> Result<FitReport> {
    config.validate()?;
    if layers == 0 {
        return Err(Error::Invalid {
            what: "fit request",
            reason: "layer count must be at least 1".into(),
        });
    }
    let n = lattice.size();
    if target.nrows() != n || target.ncols() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: target.nrows(),
        });
    }
    let deviation = unitarity_deviation(target);
    if deviation > TARGET_UNITARITY_TOL && !config.allow_nonunitary_target {
        return Err(Error::BadTarget { deviation });
    }

    let mut model = FactorizationModel::new(lattice.clone(), ParameterTuple::zeros(n, layers))?;
    let mut rng = SplitMix64::new(seed.0 ^ INIT_STREAM_SALT);
    let mut best: Option<RunOutcome> = None;
    let mut total_iterations = 0;

    for _ in 0..config.restarts {
        let init = match config.init_strategy {
            InitStrategy::UniformPeriod => ParameterTuple::random(n, layers, &mut rng),
            InitStrategy::Zero => ParameterTuple::zeros(n, layers),
        };
        let run = lm_single_run(&mut model, target, config, init);
        total_iterations += run.iterations;
        let better = best
            .as_ref()
            .map(|b| run.final_l < b.final_l)
            .unwrap_or(true);
        if better {
            best = Some(run);
        }
        if best.as_ref().unwrap().final_l <= config.tolerance {
            break;
        }
    }

    let best = best.expect("at least one restart ran");
    Ok(FitReport {
        lattice: lattice.clone(),
        converged: best.final_l <= config.tolerance,
        best_params: best.params,
        final_l: best.final_l,
        iterations_used: total_iterations,
        trace: best.trace,
    })
}

/// One fit of the sweep: a fresh Haar target, fitted from the trial seed.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    pub final_l: f64,
}

/// Aggregated trials of one (lattice, N, M) configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub lattice: LatticeKind,
    pub n: usize,
    pub m: usize,
    pub trials: Vec<TrialRecord>,
    pub log10_l_q25: f64,
    pub log10_l_median: f64,
    pub log10_l_q75: f64,
}

impl SweepResult {
    pub fn converged_count(&self) -> usize {
        self.trials.iter().filter(|t| t.converged).count()
    }

    /// log10 of a trial's final error norm, floored away from -inf.
    pub fn log10_l(record: &TrialRecord) -> f64 {
        record.final_l.max(1e-300).log10()
    }
}

/// Run N_T independent fits of fresh Haar targets for every combination
/// of lattice kind, size N, and layer count N + offset. Per-trial seeds
/// are `seed + global_trial_index` in enumeration order, so the output is
/// independent of scheduling and reproducible from the master seed alone.
pub fn layer_sweep(
    ns: &[usize],
    m_offsets: &[i64],
    kinds: &[LatticeKind],
    n_t: usize,
    config: &FitConfig,
    seed: RngSeed,
) -> Result<Vec<SweepResult>> {
    config.validate()?;
    for &n in ns {
        if n < 2 {
            return Err(Error::Invalid {
                what: "sweep config",
                reason: format!("port count {n} is below 2"),
            });
        }
    }
    let mut results = Vec::new();
    let mut config_index = 0u64;
    for &kind in kinds {
        for &n in ns {
            let lattice = LatticeSpec::named(kind, n)?;
            for &offset in m_offsets {
                let m = n as i64 + offset;
                if m < 1 {
                    return Err(Error::Invalid {
                        what: "sweep config",
                        reason: format!("layer offset {offset} gives non-positive M for N={n}"),
                    });
                }
                let m = m as usize;
                let base = seed.derive(config_index * n_t as u64);
                let trials = run_trials(n_t, |trial| {
                    let trial_seed = base.derive(trial as u64);
                    let target = haar_unitary(n, trial_seed);
                    match lm_fit(&target, &lattice, m, config, trial_seed) {
                        Ok(report) => TrialRecord {
                            trial,
                            seed: trial_seed.0,
                            iterations: report.iterations_used,
                            converged: report.converged,
                            final_l: report.final_l,
                        },
                        // Recorded, not fatal: the sweep keeps going.
                        Err(_) => TrialRecord {
                            trial,
                            seed: trial_seed.0,
                            iterations: 0,
                            converged: false,
                            final_l: f64::NAN,
                        },
                    }
                });
                let mut logs: Vec<f64> = trials
                    .iter()
                    .map(SweepResult::log10_l)
                    .filter(|x| x.is_finite())
                    .collect();
                logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                results.push(SweepResult {
                    lattice: kind,
                    n,
                    m,
                    trials,
                    log10_l_q25: quantile(&logs, 0.25),
                    log10_l_median: quantile(&logs, 0.5),
                    log10_l_q75: quantile(&logs, 0.75),
                });
                config_index += 1;
            }
        }
    }
    Ok(results)
}

fn run_trials(n_t: usize, f: impl Fn(usize) -> TrialRecord + Send + Sync) -> Vec<TrialRecord> {
    #[cfg(feature = "parallel")]
    {
        (0..n_t).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_t).map(f).collect()
    }
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// 17 significant digits, enough to round-trip any f64.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV rows of a sweep, one line per trial:
/// `lattice,N,M,trial,seed,iterations,converged,log10_L`.
pub fn sweep_csv(results: &[SweepResult]) -> String {
    let mut out = String::from("lattice,N,M,trial,seed,iterations,converged,log10_L\n");
    for r in results {
        for t in &r.trials {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.lattice.name(),
                r.n,
                r.m,
                t.trial,
                t.seed,
                t.iterations,
                t.converged,
                fmt_f64(SweepResult::log10_l(t)),
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::identity;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn quick_config() -> FitConfig {
        FitConfig {
            restarts: 3,
            ..FitConfig::default()
        }
    }

    #[test]
    fn error_norm_examples() {
        let u = haar_unitary(3, RngSeed(1));
        assert_eq!(error_norm(&u, &u).unwrap(), 0.0);
        for n in [2usize, 4] {
            let id = identity(n);
            let neg = id.map(|z| -z);
            let got = error_norm(&id, &neg).unwrap();
            assert!((got - 4.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn error_norm_matches_elementwise_oracle() {
        let a = haar_unitary(3, RngSeed(2));
        let b = haar_unitary(3, RngSeed(3));
        let mut sum = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = a[(i, j)] - b[(i, j)];
                sum += d.re * d.re + d.im * d.im;
            }
        }
        assert!((error_norm(&a, &b).unwrap() - sum / 9.0).abs() < 1e-14);
    }

    #[test]
    fn error_norm_rejects_mismatched_sizes() {
        let a = identity(2);
        let b = identity(3);
        assert!(matches!(
            error_norm(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn residuals_of_exact_model_vanish() {
        let mut rng = SplitMix64::new(4);
        let params = ParameterTuple::random(3, 2, &mut rng);
        let model = FactorizationModel::new(LatticeSpec::jx(3), params).unwrap();
        let target = model.evaluate();
        let r = residual_vector(&model, &target).unwrap();
        assert_eq!(r.len(), 18);
        assert!(r.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn residual_norm_equals_error_norm() {
        let mut rng = SplitMix64::new(5);
        let params = ParameterTuple::random(4, 3, &mut rng);
        let model = FactorizationModel::new(LatticeSpec::homogeneous(4), params).unwrap();
        let target = haar_unitary(4, RngSeed(6));
        let r = residual_vector(&model, &target).unwrap();
        let via_residuals = r.norm_squared() / 16.0;
        let direct = error_norm(&model.evaluate(), &target).unwrap();
        assert!((via_residuals - direct).abs() < 1e-14);
    }

    #[test]
    fn residual_pattern_for_pi_phases() {
        let params = ParameterTuple::new(vec![vec![PI, PI]], vec![]).unwrap();
        let model = FactorizationModel::new(LatticeSpec::jx(2), params).unwrap();
        let r = residual_vector(&model, &identity(2)).unwrap();
        // U = diag(-1, -1): diagonal residuals are -2 + 0i.
        assert!((r[0] + 2.0).abs() < 1e-12);
        assert!(r[1].abs() < 1e-12);
        assert!((r[6] + 2.0).abs() < 1e-12);
        assert!(r[7].abs() < 1e-12);
        for k in [2, 3, 4, 5] {
            assert!(r[k].abs() < 1e-15);
        }
    }

    #[test]
    fn fit_recovers_representable_target() {
        let mut rng = SplitMix64::new(7);
        let params = ParameterTuple::random(3, 3, &mut rng);
        let truth = FactorizationModel::new(LatticeSpec::jx(3), params).unwrap();
        let target = truth.evaluate();
        let report = lm_fit(&target, &LatticeSpec::jx(3), 3, &quick_config(), RngSeed(8)).unwrap();
        assert!(report.converged, "final L = {:.3e}", report.final_l);
        assert!(report.final_l <= 1e-10);
    }

    #[test]
    fn fit_trace_is_non_increasing() {
        let target = haar_unitary(3, RngSeed(9));
        let report = lm_fit(&target, &LatticeSpec::jx(3), 3, &quick_config(), RngSeed(10)).unwrap();
        for w in report.trace.windows(2) {
            assert!(w[1] <= w[0], "trace increased: {} -> {}", w[0], w[1]);
        }
        assert!(report.iterations_used >= report.trace.len() - 1);
    }

    #[test]
    fn fit_haar_at_m_equals_n() {
        let target = haar_unitary(4, RngSeed(11));
        let report = lm_fit(&target, &LatticeSpec::jx(4), 4, &quick_config(), RngSeed(12)).unwrap();
        assert!(report.converged, "final L = {:.3e}", report.final_l);
    }

    #[test]
    fn fit_haar_below_transition_plateaus() {
        let target = haar_unitary(4, RngSeed(13));
        let report = lm_fit(&target, &LatticeSpec::jx(4), 3, &quick_config(), RngSeed(14)).unwrap();
        assert!(!report.converged);
        assert!(report.final_l > 1e-4, "final L = {:.3e}", report.final_l);
    }

    #[test]
    fn fit_rejects_nonunitary_target() {
        let mut bad = identity(3);
        bad[(0, 0)] = Complex64::new(2.0, 0.0);
        match lm_fit(&bad, &LatticeSpec::jx(3), 3, &FitConfig::default(), RngSeed(15)) {
            Err(Error::BadTarget { .. }) => {}
            other => panic!("expected BadTarget, got {other:?}"),
        }
        let tolerant = FitConfig {
            allow_nonunitary_target: true,
            max_iterations: 5,
            restarts: 1,
            ..FitConfig::default()
        };
        assert!(lm_fit(&bad, &LatticeSpec::jx(3), 3, &tolerant, RngSeed(15)).is_ok());
    }

    #[test]
    fn sweep_single_trial_shape() {
        let config = FitConfig {
            max_iterations: 50,
            restarts: 1,
            ..FitConfig::default()
        };
        let results = layer_sweep(
            &[2],
            &[-1, 0, 1],
            &[LatticeKind::Jx],
            1,
            &config,
            RngSeed(16),
        )
        .unwrap();
        assert_eq!(results.len(), 3);
        for r in &results {
            assert_eq!(r.trials.len(), 1);
            assert_eq!(r.trials[0].trial, 0);
        }
    }

    #[test]
    fn sweep_csv_is_deterministic() {
        let config = FitConfig {
            max_iterations: 120,
            restarts: 2,
            ..FitConfig::default()
        };
        let run = || {
            sweep_csv(
                &layer_sweep(
                    &[2, 3],
                    &[0],
                    &[LatticeKind::Jx, LatticeKind::Homogeneous],
                    3,
                    &config,
                    RngSeed(17),
                )
                .unwrap(),
            )
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 1 + 2 * 2 * 3);
        assert!(a.starts_with("lattice,N,M,trial,seed,iterations,converged,log10_L\n"));
    }

    #[test]
    fn quantiles_interpolate() {
        let data = [1.0, 2.0, 3.0, 4.0];
        assert!((quantile(&data, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile(&data, 0.25) - 1.75).abs() < 1e-15);
        assert!((quantile(&data, 0.75) - 3.25).abs() < 1e-15);
        assert_eq!(quantile(&[5.0], 0.5), 5.0);
    }

    #[test]
    fn config_validation() {
        let mut c = FitConfig::default();
        c.damping_down = 1.5;
        assert!(c.validate().is_err());
        c = FitConfig::default();
        c.tolerance = 0.0;
        assert!(c.validate().is_err());
        assert!(FitConfig::default().validate().is_ok());
    }
}
