//! Locates the aggregate means in principal-component coordinates of the
//! standardized patient data.
//!
//! Components come from the eigendecomposition of the IPD correlation
//! matrix. Each loading vector is signed so that its largest-magnitude entry
//! is positive (lowest index on ties). If the aggregate score on any
//! non-degenerate component lies outside the range of the patient scores,
//! the aggregate means are certainly outside the convex hull; the converse
//! does not hold.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{self, AdVector, IpdMatrix};
use crate::error::Result;
use crate::hull;

/// Components with smaller eigenvalues are excluded from the range test.
pub const DEGENERATE_EIGENVALUE: f64 = 1e-10;
/// An aggregate score must clear the patient range by more than this to count as outside.
pub const RANGE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: f64,
    pub max: f64,
}

impl ScoreRange {
    pub fn contains(&self, v: f64) -> bool {
        v >= self.min - RANGE_TOL && v <= self.max + RANGE_TOL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub covariate_names: Vec<String>,
    /// Row-major `p x p`: `loadings[j][k]` is the weight of covariate `j` on component `k + 1`.
    pub loadings: Vec<Vec<f64>>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `ipd_scores[k][i]`: score of patient `i` on component `k + 1`.
    pub ipd_scores: Vec<Vec<f64>>,
    pub ad_scores: Vec<f64>,
    pub per_pc_range: Vec<ScoreRange>,
    /// 1-based component numbers on which the aggregate score is out of range.
    pub ad_outside: Vec<usize>,
    /// 1-based component numbers with eigenvalue below the degeneracy threshold.
    pub degenerate: Vec<usize>,
    pub warnings: Vec<String>,
}

impl PcaProjection {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn loadings_matrix(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |j, k| self.loadings[j][k])
    }

    pub fn scores_matrix(&self) -> DMatrix<f64> {
        let n = self.ipd_scores.first().map_or(0, Vec::len);
        DMatrix::from_fn(self.p(), n, |k, i| self.ipd_scores[k][i])
    }
}

/// Sorted, sign-normalized eigenpairs of a symmetric matrix.
pub(crate) fn sorted_eigen(m: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m);
    let p = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(p, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = eig.eigenvectors.select_columns(order.iter());
    for mut col in vectors.column_iter_mut() {
        let lead = col
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > col[best].abs() { j } else { best });
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }
    (values, vectors)
}

pub fn pca_locate(ipd: &IpdMatrix, ad: &AdVector) -> Result<PcaProjection> {
    hull::check_aligned(ipd, ad)?;
    let (z, x, _) = data::standardize(ipd, ad)?;
    let (p, n) = (ipd.p(), ipd.n());
    let z = z.values();
    let corr = z * z.transpose() / (n as f64 - 1.0);
    let corr = (&corr + corr.transpose()) * 0.5;
    let (eigenvalues, loadings) = sorted_eigen(corr);

    let scores = loadings.tr_mul(z);
    let ad_scores = loadings.tr_mul(x.values());
    let per_pc_range: Vec<ScoreRange> = scores
        .row_iter()
        .map(|r| ScoreRange {
            min: r.min(),
            max: r.max(),
        })
        .collect();
    let degenerate: Vec<usize> = (0..p)
        .filter(|&k| eigenvalues[k] < DEGENERATE_EIGENVALUE)
        .map(|k| k + 1)
        .collect();
    let ad_outside: Vec<usize> = (0..p)
        .filter(|k| !degenerate.contains(&(k + 1)) && !per_pc_range[*k].contains(ad_scores[*k]))
        .map(|k| k + 1)
        .collect();

    let mut warnings = Vec::new();
    if p > n {
        warnings.push(format!(
            "more covariates than patients (p = {p}, n = {n}); trailing components are degenerate"
        ));
    }
    if !degenerate.is_empty() {
        warnings.push(format!(
            "components {:?} have near-zero variance and are excluded from the range check",
            degenerate
        ));
    }

    Ok(PcaProjection {
        covariate_names: ipd.covariate_names().to_vec(),
        loadings: loadings.row_iter().map(|r| r.iter().copied().collect()).collect(),
        eigenvalues: eigenvalues.iter().map(|v| v.max(0.0)).collect(),
        ipd_scores: scores.row_iter().map(|r| r.iter().copied().collect()).collect(),
        ad_scores: ad_scores.iter().copied().collect(),
        per_pc_range,
        ad_outside,
        degenerate,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn sample() -> IpdMatrix {
        IpdMatrix::from_patient_rows(
            &["a", "b", "c"],
            &[
                vec![1.0, 2.0, 0.5],
                vec![2.0, 2.9, 1.5],
                vec![3.0, 4.2, 0.0],
                vec![4.0, 5.1, 2.0],
                vec![5.0, 5.8, 1.0],
                vec![2.5, 3.0, 3.0],
            ],
        )
        .unwrap()
    }

    #[test]
    fn mean_target_sits_at_origin() {
        let y = sample();
        let mean: Vec<f64> = y.means().iter().copied().collect();
        let proj = pca_locate(&y, &AdVector::for_ipd(&y, &mean, None).unwrap()).unwrap();
        assert!(proj.ad_scores.iter().all(|s| s.abs() < 1e-14));
        assert!(proj.ad_outside.is_empty());
    }

    #[test]
    fn structure_invariants() {
        let y = sample();
        let proj = pca_locate(&y, &AdVector::for_ipd(&y, &[2.0, 3.0, 1.0], None).unwrap()).unwrap();
        let v = proj.loadings_matrix();
        assert!((v.tr_mul(&v) - DMatrix::identity(3, 3)).amax() < 1e-10);
        assert!(proj.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        assert!((proj.eigenvalues.iter().sum::<f64>() - 3.0).abs() < 1e-8);
        for col in v.column_iter() {
            let lead = col.iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m });
            assert!(lead > 0.0);
        }
    }

    #[test]
    fn uncorrelated_pair_has_unit_eigenvalues() {
        let y = IpdMatrix::from_patient_rows(
            &["a", "b"],
            &[vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]],
        )
        .unwrap();
        let proj = pca_locate(&y, &AdVector::for_ipd(&y, &[0.0, 0.0], None).unwrap()).unwrap();
        assert!((proj.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!((proj.eigenvalues[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_covariate_rejected() {
        let y = IpdMatrix::from_patient_rows(&["a", "k"], &[vec![1.0, 2.0], vec![3.0, 2.0]]).unwrap();
        assert!(matches!(
            pca_locate(&y, &AdVector::for_ipd(&y, &[2.0, 2.0], None).unwrap()),
            Err(Error::ConstantCovariate(_))
        ));
    }

    #[test]
    fn more_covariates_than_patients_is_flagged() {
        let y = IpdMatrix::from_patient_rows(
            &["a", "b", "c"],
            &[vec![1.0, 2.0, 0.0], vec![2.0, 1.0, 1.0]],
        )
        .unwrap();
        let proj = pca_locate(&y, &AdVector::for_ipd(&y, &[1.5, 1.5, 0.5], None).unwrap()).unwrap();
        assert_eq!(proj.degenerate, vec![2, 3]);
        assert!(proj.warnings.iter().any(|w| w.contains("more covariates than patients")));
    }
}
