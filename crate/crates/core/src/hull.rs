//! Convex-hull membership of the aggregate means, decided by phase-one simplex.
//!
//! The aggregate vector `x` lies in the hull of the patient columns iff
//! `Y v = x, 1'v = 1, v >= 0` has a solution. The check runs on covariates
//! standardized with the IPD means and sample standard deviations (scale 1
//! for constant covariates) so the feasibility tolerance is scale-free.
//! Feasible points are further classified as interior or boundary by
//! perturbing the target along every standardized axis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{AdVector, IpdMatrix};
use crate::error::{Error, Result};
use crate::lp::{PhaseOne, Simplex};

/// Accepted sum of artificial values (standardized units).
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Default axis perturbation used to separate interior from boundary points.
pub const PROBE_EPSILON: f64 = 1e-6;

/// Exit codes reported by the feasibility check.
pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_BOUNDARY: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HullStatus {
    Interior,
    Boundary,
    Infeasible,
}

impl HullStatus {
    pub fn describe(&self) -> &'static str {
        match self {
            HullStatus::Interior => "inside the convex hull of the patient data",
            HullStatus::Boundary => {
                "on the boundary of the convex hull of the patient data \
                 (some patients would need weight exactly zero, which exponential weights cannot reach)"
            }
            HullStatus::Infeasible => {
                "outside the convex hull of the patient data (no reweighting can reproduce them)"
            }
        }
    }

    /// Process exit code: 0 interior, 3 boundary, 2 infeasible.
    pub fn process_exit_code(&self) -> i32 {
        match self {
            HullStatus::Interior => EXIT_FEASIBLE,
            HullStatus::Boundary => EXIT_BOUNDARY,
            HullStatus::Infeasible => EXIT_INFEASIBLE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interiority {
    Interior,
    Boundary,
}

/// Outcome of the hull membership check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub status: HullStatus,
    /// Convex weights reproducing the aggregate means (feasible cases only).
    pub witness: Option<Vec<f64>>,
    /// Direction `c` in original covariate units with `c'x > max_i c'y_i` (infeasible only).
    pub certificate: Option<Vec<f64>>,
    /// `c'x - max_i c'y_i` for the certificate, original units.
    pub separation_margin: Option<f64>,
    /// Minimal sum of constraint violations found by phase one (standardized units).
    pub infeasibility: f64,
    /// 0 when a solution exists, 2 otherwise.
    pub exit_code: i32,
    pub pivots: usize,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        self.status != HullStatus::Infeasible
    }

    pub fn process_exit_code(&self) -> i32 {
        self.status.process_exit_code()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HullOptions {
    pub tolerance: f64,
    pub epsilon: f64,
}

impl Default for HullOptions {
    fn default() -> Self {
        Self {
            tolerance: FEASIBILITY_TOL,
            epsilon: PROBE_EPSILON,
        }
    }
}

pub(crate) fn check_aligned(ipd: &IpdMatrix, ad: &AdVector) -> Result<()> {
    if ad.len() != ipd.p() {
        return Err(Error::DimensionMismatch {
            what: "aggregate means",
            expected: ipd.p(),
            found: ad.len(),
        });
    }
    if ad.covariate_names() != ipd.covariate_names() {
        return ad.align_to(ipd).and(Err(Error::InvalidInput(
            "aggregate covariates are not in patient-data order; align them first".into(),
        )));
    }
    Ok(())
}

/// Standardization used by the hull check: IPD mean and sample sd, with
/// scale 1 for constant covariates.
pub(crate) fn hull_coordinates(ipd: &IpdMatrix, ad: &AdVector) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let means = ipd.means();
    let scales = ipd.sample_sds().map(|s| if s > 0.0 { s } else { 1.0 });
    let mut z = ipd.values().clone();
    for (j, mut row) in z.row_iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v = (*v - means[j]) / scales[j];
        }
    }
    let x = (ad.values() - &means).component_div(&scales);
    (z, x, scales)
}

/// Equality system `[Z; 1'] v = [x; 1]`.
pub(crate) fn convex_combination_system(z: &DMatrix<f64>, x: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let (p, n) = z.shape();
    let mut a = DMatrix::from_element(p + 1, n, 1.0);
    a.rows_mut(0, p).copy_from(z);
    let mut b = DVector::from_element(p + 1, 1.0);
    b.rows_mut(0, p).copy_from(x);
    (a, b)
}

fn is_feasible_point(z: &DMatrix<f64>, x: &DVector<f64>, tol: f64) -> Result<bool> {
    let (a, b) = convex_combination_system(z, x);
    let mut lp = Simplex::new(&a, &b);
    Ok(matches!(lp.phase_one(tol)?, PhaseOne::Feasible))
}

fn probe(z: &DMatrix<f64>, x: &DVector<f64>, opts: &HullOptions) -> Result<Interiority> {
    for j in 0..x.len() {
        for sign in [1.0, -1.0] {
            let mut shifted = x.clone();
            shifted[j] += sign * opts.epsilon;
            if !is_feasible_point(z, &shifted, opts.tolerance)? {
                return Ok(Interiority::Boundary);
            }
        }
    }
    Ok(Interiority::Interior)
}

fn validate(ipd: &IpdMatrix, ad: &AdVector) -> Result<()> {
    check_aligned(ipd, ad)?;
    if ipd.values().iter().chain(ad.values().iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("hull check input".into()));
    }
    Ok(())
}

/// Decides whether the aggregate means lie in the convex hull of the patients.
pub fn check_in_hull(ipd: &IpdMatrix, ad: &AdVector) -> Result<FeasibilityVerdict> {
    check_in_hull_with(ipd, ad, &HullOptions::default())
}

pub fn check_in_hull_with(ipd: &IpdMatrix, ad: &AdVector, opts: &HullOptions) -> Result<FeasibilityVerdict> {
    validate(ipd, ad)?;
    let (z, x, scales) = hull_coordinates(ipd, ad);
    let (a, b) = convex_combination_system(&z, &x);
    let mut lp = Simplex::new(&a, &b);
    match lp.phase_one(opts.tolerance)? {
        PhaseOne::Infeasible {
            dual,
            infeasibility,
        } => {
            let p = ipd.p();
            let certificate: Vec<f64> = (0..p).map(|j| dual[j] / scales[j]).collect();
            let c = DVector::from_column_slice(&certificate);
            let max_ipd = ipd
                .values()
                .column_iter()
                .map(|y| c.dot(&y))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(FeasibilityVerdict {
                status: HullStatus::Infeasible,
                witness: None,
                separation_margin: Some(c.dot(ad.values()) - max_ipd),
                certificate: Some(certificate),
                infeasibility,
                exit_code: EXIT_INFEASIBLE,
                pivots: lp.pivots(),
            })
        }
        PhaseOne::Feasible => {
            let n = ipd.n();
            // Prefer the uniform witness when it already reproduces the target.
            let uniform_residual = (z.column_sum() / n as f64 - &x).amax();
            let witness = if uniform_residual <= opts.tolerance {
                vec![1.0 / n as f64; n]
            } else {
                normalize(lp.solution())
            };
            let status = match probe(&z, &x, opts)? {
                Interiority::Interior => HullStatus::Interior,
                Interiority::Boundary => HullStatus::Boundary,
            };
            Ok(FeasibilityVerdict {
                status,
                witness: Some(witness),
                certificate: None,
                separation_margin: None,
                infeasibility: 0.0,
                exit_code: EXIT_FEASIBLE,
                pivots: lp.pivots(),
            })
        }
    }
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for v in &mut w {
            *v /= total;
        }
    }
    w
}

/// Classifies a feasible target as interior or boundary by testing the
/// `2p` standardized axis perturbations `x +/- epsilon e_j`.
pub fn interiority_probe(ipd: &IpdMatrix, ad: &AdVector, epsilon: f64) -> Result<Interiority> {
    validate(ipd, ad)?;
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!("probe epsilon must be positive, got {epsilon}")));
    }
    let (z, x, _) = hull_coordinates(ipd, ad);
    probe(
        &z,
        &x,
        &HullOptions {
            epsilon,
            ..HullOptions::default()
        },
    )
}
