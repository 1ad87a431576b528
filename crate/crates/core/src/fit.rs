//! Exponential-tilting (MAIC) weights.
//!
//! With `d_i = y_i - x` the weights are `w_i ∝ exp(d_i'β)` and the moment
//! condition `sum w_i d_i = 0` is the first-order condition of the convex
//! objective `Q(β) = sum_i exp(d_i'β)`. `Q` is minimized by Newton's method
//! with Armijo backtracking on covariates scaled by their IPD standard
//! deviations; the returned coefficients are in original covariate units.
//!
//! A finite minimizer exists only when the aggregate means are interior to
//! the convex hull of the patients, so every fit is gated on the hull check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{AdVector, IpdMatrix};
use crate::error::{Error, Result};
use crate::hull::{self, HullStatus};
use crate::stats;

pub use crate::stats::{effective_sample_size, weighted_outcome_mean};

const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_CONDITION: f64 = 1e12;
const MIN_STEP: f64 = 1e-20;
const FLAT_TOL: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Bound on `||∇(Q/n)||_∞` in standardized units.
    pub tolerance: f64,
    /// Bound on the standardized moment residual.
    pub moment_tolerance: f64,
    pub max_iterations: usize,
    /// Starting coefficients in original covariate units; zero when absent.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            moment_tolerance: 1e-6,
            max_iterations: 500,
            start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaicFit {
    /// Coefficients on the centered covariates, original units.
    pub beta: Vec<f64>,
    /// Patient weights rescaled to sum to `n`.
    pub weights: Vec<f64>,
    pub ess: f64,
    pub ess_fraction: f64,
    /// `||sum w_i y_i / sum w_i - x||_∞` in standardized units.
    pub moment_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `Q(β) = sum_i exp((y_i - x)'β)` over a fixed set of centered points.
#[derive(Debug, Clone)]
pub struct MomentObjective {
    centered: DMatrix<f64>,
}

impl MomentObjective {
    /// Objective on raw covariates: columns `y_i - x`.
    pub fn new(ipd: &IpdMatrix, ad: &AdVector) -> Result<Self> {
        hull::check_aligned(ipd, ad)?;
        let mut centered = ipd.values().clone();
        for mut col in centered.column_iter_mut() {
            col -= ad.values();
        }
        Ok(Self { centered })
    }

    fn from_centered(centered: DMatrix<f64>) -> Self {
        Self { centered }
    }

    pub fn exponents(&self, beta: &DVector<f64>) -> DVector<f64> {
        self.centered.tr_mul(beta)
    }

    pub fn value(&self, beta: &DVector<f64>) -> f64 {
        self.exponents(beta).iter().map(|s| s.exp()).sum()
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let e = self.exponents(beta).map(f64::exp);
        &self.centered * e
    }

    pub fn hessian(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let e = self.exponents(beta).map(f64::exp);
        let mut scaled = self.centered.clone();
        for (mut col, ei) in scaled.column_iter_mut().zip(e.iter()) {
            col *= *ei;
        }
        &scaled * self.centered.transpose()
    }
}

struct State {
    beta: DVector<f64>,
    value: f64,
    gradient: DVector<f64>,
}

impl State {
    fn at(obj: &MomentObjective, n: f64, beta: DVector<f64>) -> Self {
        let value = obj.value(&beta) / n;
        let gradient = obj.gradient(&beta) / n;
        Self {
            beta,
            value,
            gradient,
        }
    }

    fn moment_residual(&self) -> f64 {
        self.gradient.amax() / self.value
    }
}

/// Newton direction, or steepest descent when the Hessian is ill-conditioned.
fn search_direction(obj: &MomentObjective, n: f64, state: &State) -> DVector<f64> {
    let h = obj.hessian(&state.beta) / n;
    let eig = SymmetricEigen::new(h);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || max / min > MAX_CONDITION || !max.is_finite() {
        return -&state.gradient;
    }
    let v = &eig.eigenvectors;
    let mut coef = v.tr_mul(&state.gradient);
    for (c, l) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= *l;
    }
    -(v * coef)
}

/// Fits the weights; refuses unless the aggregate means are interior.
pub fn fit_maic(ipd: &IpdMatrix, ad: &AdVector, options: &FitOptions) -> Result<MaicFit> {
    let verdict = hull::check_in_hull(ipd, ad)?;
    if verdict.status != HullStatus::Interior {
        return Err(Error::NotInterior(Box::new(verdict)));
    }
    fit_unchecked(ipd, ad, options)
}

/// Newton iterations without the hull gate. On a non-interior target this
/// either fails to converge or converges to a meaningless point.
pub(crate) fn fit_unchecked(ipd: &IpdMatrix, ad: &AdVector, options: &FitOptions) -> Result<MaicFit> {
    let (z, x, scales) = hull::hull_coordinates(ipd, ad);
    let mut centered = z;
    for mut col in centered.column_iter_mut() {
        col -= &x;
    }
    let obj = MomentObjective::from_centered(centered);
    let n = ipd.n() as f64;
    let p = ipd.p();

    let start = match &options.start {
        Some(s) if s.len() == p => DVector::from_iterator(p, s.iter().zip(scales.iter()).map(|(b, sc)| b * sc)),
        Some(s) => {
            return Err(Error::DimensionMismatch {
                what: "starting coefficients",
                expected: p,
                found: s.len(),
            })
        }
        None => DVector::zeros(p),
    };
    let mut state = State::at(&obj, n, start);
    if !state.value.is_finite() {
        return Err(Error::InvalidInput("objective overflows at the starting point".into()));
    }

    let mut iterations = 0;
    let converged = loop {
        if state.gradient.amax() <= options.tolerance && state.moment_residual() <= options.moment_tolerance {
            break true;
        }
        if iterations >= options.max_iterations {
            break false;
        }
        iterations += 1;
        let mut dir = search_direction(&obj, n, &state);
        let mut slope = state.gradient.dot(&dir);
        if !(slope < 0.0) {
            dir = -&state.gradient;
            slope = state.gradient.dot(&dir);
        }
        let mut step = 1.0;
        let next = loop {
            let trial = State::at(&obj, n, &state.beta + &dir * step);
            if trial.value.is_finite() && trial.value <= state.value + ARMIJO_C * step * slope {
                break Some(trial);
            }
            // Near the optimum the decrease falls below rounding; fall back on the gradient.
            let flat = (trial.value - state.value).abs() <= FLAT_TOL * state.value;
            if flat && trial.gradient.norm() < state.gradient.norm() {
                break Some(trial);
            }
            step *= BACKTRACK;
            if step < MIN_STEP {
                break None;
            }
        };
        match next {
            Some(next) => state = next,
            None => break false,
        }
    };
    if !converged {
        return Err(Error::NoConvergence {
            iterations,
            gradient_norm: state.gradient.amax(),
            moment_residual: state.moment_residual(),
        });
    }

    let s = obj.exponents(&state.beta);
    let shift = s.max();
    let raw: Vec<f64> = s.iter().map(|v| (v - shift).exp()).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w * n / total).collect();
    let ess = stats::effective_sample_size(&weights)?;
    let w = DVector::from_column_slice(&weights);
    let moment_residual = (&obj.centered * &w / weights.iter().sum::<f64>()).amax();
    Ok(MaicFit {
        beta: state.beta.iter().zip(scales.iter()).map(|(b, sc)| b / sc).collect(),
        weights,
        ess,
        ess_fraction: ess / n,
        moment_residual,
        iterations,
        converged,
    })
}

/// Weight profile along the steepest-ascent direction of the fitted weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteepestAscentDiagnostic {
    /// Set when `β = 0`: all weights equal and no direction exists.
    pub uniform_weights: bool,
    /// `β / ||β||`, original units.
    pub direction: Option<Vec<f64>>,
    /// `(y_i - x)' direction` per patient.
    pub projections: Vec<f64>,
    /// Spearman correlation between projection and log-weight.
    pub rank_correlation: Option<f64>,
    /// Index (0-based) of the patient with the largest weight.
    pub max_weight_patient: usize,
}

pub fn steepest_ascent_diagnostic(fit: &MaicFit, ipd: &IpdMatrix, ad: &AdVector) -> Result<SteepestAscentDiagnostic> {
    hull::check_aligned(ipd, ad)?;
    if fit.weights.len() != ipd.n() || fit.beta.len() != ipd.p() {
        return Err(Error::DimensionMismatch {
            what: "fit",
            expected: ipd.n(),
            found: fit.weights.len(),
        });
    }
    let max_weight_patient = fit
        .weights
        .iter()
        .enumerate()
        .fold(0, |best, (i, w)| if *w > fit.weights[best] { i } else { best });
    let beta = DVector::from_column_slice(&fit.beta);
    let norm = beta.norm();
    if norm == 0.0 {
        return Ok(SteepestAscentDiagnostic {
            uniform_weights: true,
            direction: None,
            projections: vec![0.0; ipd.n()],
            rank_correlation: None,
            max_weight_patient,
        });
    }
    let direction = beta / norm;
    let projections: Vec<f64> = ipd
        .values()
        .column_iter()
        .map(|y| (y - ad.values()).dot(&direction))
        .collect();
    let log_weights: Vec<f64> = fit.weights.iter().map(|w| w.ln()).collect();
    Ok(SteepestAscentDiagnostic {
        uniform_weights: false,
        direction: Some(direction.iter().copied().collect()),
        rank_correlation: stats::spearman(&projections, &log_weights),
        projections,
        max_weight_patient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud() -> IpdMatrix {
        IpdMatrix::from_patient_rows(
            &["a", "b"],
            &[
                vec![0.0, 0.0],
                vec![2.0, 0.3],
                vec![0.4, 1.8],
                vec![1.9, 2.1],
                vec![1.0, 0.9],
                vec![0.7, 0.2],
                vec![1.4, 1.5],
            ],
        )
        .unwrap()
    }

    #[test]
    fn mean_target_gives_uniform_weights() {
        let y = cloud();
        let mean: Vec<f64> = y.means().iter().copied().collect();
        let ad = AdVector::for_ipd(&y, &mean, None).unwrap();
        let fit = fit_maic(&y, &ad, &FitOptions::default()).unwrap();
        assert!(fit.beta.iter().all(|b| *b == 0.0));
        assert!(fit.weights.iter().all(|w| *w == 1.0));
        assert_eq!(fit.ess, 7.0);
        assert_eq!(fit.ess_fraction, 1.0);
        assert_eq!(fit.iterations, 0);
        let diag = steepest_ascent_diagnostic(&fit, &y, &ad).unwrap();
        assert!(diag.uniform_weights);
        assert!(diag.direction.is_none());
    }

    #[test]
    fn interior_target_matches_moments() {
        let y = cloud();
        let ad = AdVector::for_ipd(&y, &[1.3, 1.2], None).unwrap();
        let fit = fit_maic(&y, &ad, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.moment_residual <= 1e-6);
        assert!(fit.ess < 7.0 && fit.ess >= 1.0);
        assert!((fit.weights.iter().sum::<f64>() - 7.0).abs() < 1e-10);
        let w = DVector::from_column_slice(&fit.weights);
        let matched = y.values() * &w / 7.0;
        assert!((matched - ad.values()).amax() < 1e-6);
        let diag = steepest_ascent_diagnostic(&fit, &y, &ad).unwrap();
        assert_eq!(diag.rank_correlation, Some(1.0));
    }

    #[test]
    fn exterior_target_is_refused() {
        let y = cloud();
        let ad = AdVector::for_ipd(&y, &[2.5, 2.5], None).unwrap();
        match fit_maic(&y, &ad, &FitOptions::default()) {
            Err(Error::NotInterior(v)) => assert_eq!(v.status, HullStatus::Infeasible),
            other => panic!("unexpected {other:?}"),
        }
        let ad = AdVector::for_ipd(&y, &[0.0, 0.0], None).unwrap();
        match fit_maic(&y, &ad, &FitOptions::default()) {
            Err(Error::NotInterior(v)) => assert_eq!(v.status, HullStatus::Boundary),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exterior_target_does_not_converge_without_gate() {
        let y = cloud();
        let ad = AdVector::for_ipd(&y, &[2.5, 2.5], None).unwrap();
        let opts = FitOptions {
            max_iterations: 50,
            ..FitOptions::default()
        };
        assert!(matches!(fit_unchecked(&y, &ad, &opts), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn objective_derivatives_are_consistent() {
        let y = cloud();
        let ad = AdVector::for_ipd(&y, &[1.1, 0.8], None).unwrap();
        let obj = MomentObjective::new(&y, &ad).unwrap();
        let beta = DVector::from_vec(vec![0.3, -0.7]);
        let h = 1e-6;
        let g = obj.gradient(&beta);
        let hess = obj.hessian(&beta);
        for j in 0..2 {
            let mut e = DVector::zeros(2);
            e[j] = h;
            let fd = (obj.value(&(&beta + &e)) - obj.value(&(&beta - &e))) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-6 * g[j].abs().max(1.0));
            let fdg = (obj.gradient(&(&beta + &e)) - obj.gradient(&(&beta - &e))) / (2.0 * h);
            for i in 0..2 {
                assert!((fdg[i] - hess[(i, j)]).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn bad_start_length_is_rejected() {
        let y = cloud();
        let ad = AdVector::for_ipd(&y, &[1.1, 0.8], None).unwrap();
        let opts = FitOptions {
            start: Some(vec![0.0]),
            ..FitOptions::default()
        };
        assert!(matches!(fit_maic(&y, &ad, &opts), Err(Error::DimensionMismatch { .. })));
    }
}
