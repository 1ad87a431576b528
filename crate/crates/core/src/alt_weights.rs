//! Alternative (non-exponential) weights that reproduce the aggregate means
//! exactly.
//!
//! With patients centered at the aggregate means, every feasible weight
//! vector lies in the null space of the centered matrix. Maximizing the
//! `k`-th column of the null-space projector over the feasible polytope
//! therefore maximizes patient `k`'s own weight, giving one sparse basic
//! solution per patient. These are blended with coefficients inversely
//! proportional to each patient's squared distance from the aggregate
//! means, which tends to favour patients close to the target.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{AdVector, IpdMatrix};
use crate::error::{Error, Result};
use crate::hotelling::CovarianceFactor;
use crate::hull::{self, HullStatus};
use crate::lp::{PhaseOne, Simplex};
use crate::stats;

/// Relative eigenvalue cut-off for the Gram matrix pseudo-inverse.
pub const RANK_TOL: f64 = 1e-10;
/// Floor applied to squared distances before inversion.
pub const DISTANCE_FLOOR: f64 = 1e-12;
/// Projector columns with smaller max-norm are treated as zero.
const ZERO_COLUMN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Mahalanobis,
}

/// Orthogonal projector onto the complement of the row space of `Y`.
#[derive(Debug, Clone)]
pub struct ProjectionMatrix {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Set when `YY'` was singular and a pseudo-inverse was used.
    pub rank_deficient: bool,
}

/// `I - Y'(YY')⁻¹Y` for the raw patient matrix.
pub fn projection_matrix(ipd: &IpdMatrix) -> ProjectionMatrix {
    projection_matrix_of(ipd.values())
}

/// Projector for an arbitrary `p x n` matrix, via the eigendecomposition of
/// the Gram matrix `YY'`.
pub fn projection_matrix_of(y: &DMatrix<f64>) -> ProjectionMatrix {
    let (p, n) = y.shape();
    let gram = y * y.transpose();
    let gram = (&gram + gram.transpose()) * 0.5;
    let eig = gram.symmetric_eigen();
    let top = eig.eigenvalues.max().max(0.0);
    let keep: Vec<usize> = (0..p)
        .filter(|&k| top > 0.0 && eig.eigenvalues[k] > RANK_TOL * top)
        .collect();
    // Orthonormal basis of the row space: Y' v_k / sqrt(λ_k).
    let mut q = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        let col = y.tr_mul(&eig.eigenvectors.column(k)) / eig.eigenvalues[k].sqrt();
        q.set_column(c, &col);
    }
    let matrix = DMatrix::identity(n, n) - &q * q.transpose();
    ProjectionMatrix {
        matrix: (&matrix + matrix.transpose()) * 0.5,
        rank: keep.len(),
        rank_deficient: keep.len() < p,
    }
}

/// One feasible weight vector per patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltWeightBasis {
    /// `columns[k]` is the solution for patient `k`'s objective.
    pub columns: Vec<Vec<f64>>,
    /// Patients whose projector column vanished; their column is the phase-one solution.
    pub substituted: Vec<usize>,
    pub rank_deficient: bool,
}

impl AltWeightBasis {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.columns.len();
        DMatrix::from_fn(n, n, |i, k| self.columns[k][i])
    }
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Solves `n` linear programs, one per projector column, sharing a single phase one.
pub fn alt_weight_basis(ipd: &IpdMatrix, ad: &AdVector) -> Result<AltWeightBasis> {
    let verdict = hull::check_in_hull(ipd, ad)?;
    if verdict.status == HullStatus::Infeasible {
        return Err(Error::Infeasible(Box::new(verdict)));
    }
    let (z, x, _) = hull::hull_coordinates(ipd, ad);
    let mut centered = z.clone();
    for mut col in centered.column_iter_mut() {
        col -= &x;
    }
    let projector = projection_matrix_of(&centered);

    let (a, b) = hull::convex_combination_system(&z, &x);
    let mut phase_one = Simplex::new(&a, &b);
    if let PhaseOne::Infeasible { .. } = phase_one.phase_one(hull::FEASIBILITY_TOL)? {
        return Err(Error::Infeasible(Box::new(verdict)));
    }
    let fallback = normalized(phase_one.solution());

    let n = ipd.n();
    let mut columns = Vec::with_capacity(n);
    let mut substituted = Vec::new();
    for k in 0..n {
        let c = projector.matrix.column(k);
        if c.amax() < ZERO_COLUMN {
            substituted.push(k);
            columns.push(fallback.clone());
            continue;
        }
        let mut lp = phase_one.clone();
        lp.maximize(c.as_slice())?;
        columns.push(normalized(lp.solution()));
    }
    Ok(AltWeightBasis {
        columns,
        substituted,
        rank_deficient: projector.rank_deficient,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltWeightSet {
    pub basis: AltWeightBasis,
    /// Blend coefficients, non-negative and summing to 1.
    pub blend: Vec<f64>,
    /// `basis × blend`; sums to 1.
    #[serde(rename = "final")]
    pub final_weights: Vec<f64>,
    pub distance_metric: DistanceMetric,
    /// Patients at (numerically) zero distance from the aggregate means.
    pub coincident_patients: Vec<usize>,
}

impl AltWeightSet {
    /// Final weights rescaled to sum to `n`, matching the MAIC convention.
    pub fn rescaled(&self) -> Vec<f64> {
        let n = self.final_weights.len() as f64;
        self.final_weights.iter().map(|w| w * n).collect()
    }

    pub fn ess(&self) -> Result<f64> {
        stats::effective_sample_size(&self.final_weights)
    }
}

/// Squared distances of each patient from the aggregate means.
pub fn squared_distances(ipd: &IpdMatrix, ad: &AdVector, metric: DistanceMetric) -> Result<Vec<f64>> {
    hull::check_aligned(ipd, ad)?;
    match metric {
        DistanceMetric::Euclidean => Ok(ipd
            .values()
            .column_iter()
            .map(|y| (y - ad.values()).norm_squared())
            .collect()),
        DistanceMetric::Mahalanobis => {
            let factor = CovarianceFactor::new(stats::sample_covariance(ipd.values()), ipd.covariate_names())?;
            Ok(ipd
                .values()
                .column_iter()
                .map(|y| factor.quadratic(&(y - ad.values())))
                .collect())
        }
    }
}

/// Blends the basis with `d_k ∝ 1 / dist²(y_k, x)`.
pub fn blend_by_distance(
    basis: AltWeightBasis,
    ipd: &IpdMatrix,
    ad: &AdVector,
    metric: DistanceMetric,
) -> Result<AltWeightSet> {
    let n = ipd.n();
    if basis.columns.len() != n || basis.columns.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "weight basis",
            expected: n,
            found: basis.columns.len(),
        });
    }
    let dist = squared_distances(ipd, ad, metric)?;
    let coincident_patients: Vec<usize> = (0..n).filter(|&k| dist[k] < DISTANCE_FLOOR).collect();
    let inverse: Vec<f64> = dist.iter().map(|d| 1.0 / d.max(DISTANCE_FLOOR)).collect();
    let total: f64 = inverse.iter().sum();
    let blend: Vec<f64> = inverse.iter().map(|v| v / total).collect();
    let combined = basis.matrix() * DVector::from_column_slice(&blend);
    let final_weights = normalized(combined.iter().map(|v| v.max(0.0)).collect());
    Ok(AltWeightSet {
        basis,
        blend,
        final_weights,
        distance_metric: metric,
        coincident_patients,
    })
}

/// Basis followed by the distance blend.
pub fn alternative_weights(ipd: &IpdMatrix, ad: &AdVector, metric: DistanceMetric) -> Result<AltWeightSet> {
    let basis = alt_weight_basis(ipd, ad)?;
    blend_by_distance(basis, ipd, ad, metric)
}

/// `||Y w - x||_∞` in the standardized coordinates used by the hull check.
pub fn standardized_residual(ipd: &IpdMatrix, ad: &AdVector, w: &[f64]) -> f64 {
    let (z, x, _) = hull::hull_coordinates(ipd, ad);
    (z * DVector::from_column_slice(w) - x).amax()
}
