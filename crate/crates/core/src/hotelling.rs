//! Hotelling's T² for "could the patient data and the aggregate means come
//! from the same sampling mechanism?"
//!
//! The fixed-target statistic is `n (ȳ - x)' Σ̂⁻¹ (ȳ - x)`; the two-sample
//! variant replaces `n` by `n n_AD / (n + n_AD)`. Both are referred to
//! `F(p, n - p)` after scaling by `(n - p) / (p n - p)`, with `Σ̂` estimated
//! from the patient data alone (denominator `n - 1`). Note that for the
//! two-sample variant this reference differs from the textbook two-sample
//! test because `Σ̂` ignores the aggregate sample.
//!
//! A large p-value suggests the two sources are already similar; it is
//! reported as guidance, never acted upon automatically.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AdVector, IpdMatrix};
use crate::error::{Error, Result};
use crate::hull;
use crate::special;
use crate::stats;

/// Largest accepted condition estimate of the sample covariance.
pub const MAX_CONDITION: f64 = 1e12;
pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FixedAd,
    TwoSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FDistribution,
    Resampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotellingResult {
    pub statistic: f64,
    pub variant: Variant,
    pub f_statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
    pub method: Method,
    pub resample_draws: Option<usize>,
    pub seed: Option<u64>,
    /// Bootstrap samples whose covariance was singular; counted as exceeding the observed statistic.
    pub degenerate_draws: Option<usize>,
}

impl HotellingResult {
    pub fn interpretation(&self) -> String {
        if self.p_value > 0.1 {
            format!(
                "p = {:.4}: no evidence that patient and aggregate means differ; \
                 matching may be unnecessary and pooling may be acceptable",
                self.p_value
            )
        } else {
            format!(
                "p = {:.4}: patient and aggregate means differ; matching of baseline covariates is indicated",
                self.p_value
            )
        }
    }
}

/// Mahalanobis distances from the IPD mean. Informational only: an
/// ellipsoid is a poor stand-in for the hull with non-elliptical covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MahalanobisSummary {
    /// Squared distance of the aggregate means.
    pub ad_distance: f64,
    /// Largest squared distance among patients.
    pub max_ipd_distance: f64,
}

pub(crate) struct CovarianceFactor {
    chol: Cholesky<f64, Dyn>,
}

impl CovarianceFactor {
    pub(crate) fn new(cov: DMatrix<f64>, names: &[String]) -> Result<Self> {
        let eig = cov.clone().symmetric_eigen();
        let (mut kmin, mut kmax) = (0, 0);
        for k in 0..eig.eigenvalues.len() {
            if eig.eigenvalues[k] < eig.eigenvalues[kmin] {
                kmin = k;
            }
            if eig.eigenvalues[k] > eig.eigenvalues[kmax] {
                kmax = k;
            }
        }
        let (lmin, lmax) = (eig.eigenvalues[kmin], eig.eigenvalues[kmax]);
        let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            let v = eig.eigenvectors.column(kmin);
            let top = v.amax();
            let mut involved: Vec<(usize, f64)> = v
                .iter()
                .enumerate()
                .filter(|(_, x)| x.abs() >= 0.25 * top)
                .map(|(j, x)| (j, x.abs()))
                .collect();
            involved.sort_by(|a, b| b.1.total_cmp(&a.1));
            return Err(Error::SingularCovariance {
                covariates: involved.into_iter().map(|(j, _)| names[j].clone()).collect(),
                condition,
            });
        }
        let chol = Cholesky::new(cov).ok_or_else(|| Error::SingularCovariance {
            covariates: names.to_vec(),
            condition,
        })?;
        Ok(Self { chol })
    }

    /// `d' Σ⁻¹ d`.
    pub(crate) fn quadratic(&self, d: &DVector<f64>) -> f64 {
        let l = self.chol.l();
        let y = l.solve_lower_triangular(d).expect("Cholesky factor is nonsingular");
        y.norm_squared()
    }
}

fn variant_factor(variant: Variant, n: usize, n_ad: Option<u64>) -> Result<f64> {
    match variant {
        Variant::FixedAd => Ok(n as f64),
        Variant::TwoSample => {
            let m = n_ad.ok_or(Error::MissingAdSampleSize)? as f64;
            Ok(n as f64 * m / (n as f64 + m))
        }
    }
}

fn validate(ipd: &IpdMatrix, ad: &AdVector) -> Result<()> {
    hull::check_aligned(ipd, ad)?;
    if ipd.n() <= ipd.p() {
        return Err(Error::TooFewPatients {
            n: ipd.n(),
            p: ipd.p(),
        });
    }
    Ok(())
}

fn statistic(values: &DMatrix<f64>, target: &DVector<f64>, factor: f64, names: &[String]) -> Result<f64> {
    let cov = stats::sample_covariance(values);
    let chol = CovarianceFactor::new(cov, names)?;
    let d = stats::row_means(values) - target;
    Ok(factor * chol.quadratic(&d))
}

fn f_reference(statistic: f64, n: usize, p: usize) -> (f64, f64) {
    let scale = (n - p) as f64 / (p * n - p) as f64;
    let f = statistic * scale;
    let p_value = special::f_sf(f, p as f64, (n - p) as f64).clamp(0.0, 1.0);
    (f, p_value)
}

fn parametric(ipd: &IpdMatrix, ad: &AdVector, variant: Variant) -> Result<HotellingResult> {
    validate(ipd, ad)?;
    let (n, p) = (ipd.n(), ipd.p());
    let factor = variant_factor(variant, n, ad.n_ad())?;
    let t2 = statistic(ipd.values(), ad.values(), factor, ipd.covariate_names())?;
    let (f_statistic, p_value) = f_reference(t2, n, p);
    Ok(HotellingResult {
        statistic: t2,
        variant,
        f_statistic,
        df1: p,
        df2: n - p,
        p_value,
        method: Method::FDistribution,
        resample_draws: None,
        seed: None,
        degenerate_draws: None,
    })
}

/// T² treating the aggregate means as fixed.
pub fn hotelling_fixed_ad(ipd: &IpdMatrix, ad: &AdVector) -> Result<HotellingResult> {
    parametric(ipd, ad, Variant::FixedAd)
}

/// T²_AD using the aggregate sample size `n_ad`.
pub fn hotelling_two_sample(ipd: &IpdMatrix, ad: &AdVector) -> Result<HotellingResult> {
    parametric(ipd, ad, Variant::TwoSample)
}

pub fn hotelling(ipd: &IpdMatrix, ad: &AdVector, variant: Variant) -> Result<HotellingResult> {
    parametric(ipd, ad, variant)
}

/// Shift-to-null bootstrap: patients are translated so their mean equals
/// the aggregate means, resampled with replacement, and the statistic is
/// recomputed against the aggregate means. The p-value is
/// `(1 + #{T*² >= T²}) / (draws + 1)`.
pub fn hotelling_resampled(
    ipd: &IpdMatrix,
    ad: &AdVector,
    variant: Variant,
    draws: usize,
    seed: u64,
) -> Result<HotellingResult> {
    if draws < MIN_DRAWS {
        return Err(Error::InvalidDraws(draws));
    }
    let mut result = parametric(ipd, ad, variant)?;
    let (n, p) = (ipd.n(), ipd.p());
    let factor = variant_factor(variant, n, ad.n_ad())?;
    let shift = ad.values() - ipd.means();
    let mut shifted = ipd.values().clone();
    for mut col in shifted.column_iter_mut() {
        col += &shift;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = DMatrix::zeros(p, n);
    let mut exceed = 0usize;
    let mut degenerate = 0usize;
    for _ in 0..draws {
        for i in 0..n {
            let k = rng.random_range(0..n);
            sample.set_column(i, &shifted.column(k));
        }
        match statistic(&sample, ad.values(), factor, ipd.covariate_names()) {
            Ok(t) => {
                if t >= result.statistic {
                    exceed += 1;
                }
            }
            Err(Error::SingularCovariance { .. }) => {
                degenerate += 1;
                exceed += 1;
            }
            Err(e) => return Err(e),
        }
    }
    result.p_value = (1 + exceed) as f64 / (draws + 1) as f64;
    result.method = Method::Resampling;
    result.resample_draws = Some(draws);
    result.seed = Some(seed);
    result.degenerate_draws = Some(degenerate);
    Ok(result)
}

pub fn mahalanobis_summary(ipd: &IpdMatrix, ad: &AdVector) -> Result<MahalanobisSummary> {
    validate(ipd, ad)?;
    let cov = stats::sample_covariance(ipd.values());
    let chol = CovarianceFactor::new(cov, ipd.covariate_names())?;
    let mean = ipd.means();
    let max_ipd_distance = ipd
        .values()
        .column_iter()
        .map(|y| chol.quadratic(&(y - &mean)))
        .fold(0.0, f64::max);
    Ok(MahalanobisSummary {
        ad_distance: chol.quadratic(&(ad.values() - &mean)),
        max_ipd_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> IpdMatrix {
        IpdMatrix::from_patient_rows(
            &["a", "b"],
            &[
                vec![1.0, 2.0],
                vec![2.0, 2.9],
                vec![3.0, 4.2],
                vec![4.0, 3.1],
                vec![5.0, 5.8],
                vec![2.5, 3.0],
            ],
        )
        .unwrap()
    }

    fn at(ipd: &IpdMatrix, x: &[f64], n_ad: Option<u64>) -> AdVector {
        AdVector::for_ipd(ipd, x, n_ad).unwrap()
    }

    #[test]
    fn zero_distance() {
        let y = sample();
        let mean: Vec<f64> = y.means().iter().copied().collect();
        let r = hotelling_fixed_ad(&y, &at(&y, &mean, None)).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let r = hotelling_two_sample(&y, &at(&y, &mean, Some(40))).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn f_scaling_as_written() {
        let y = sample();
        let r = hotelling_fixed_ad(&y, &at(&y, &[3.5, 3.0], None)).unwrap();
        assert_eq!((r.df1, r.df2), (2, 4));
        assert!((r.f_statistic - r.statistic * 4.0 / 10.0).abs() < 1e-15 * r.statistic);
        assert!(r.p_value > 0.0 && r.p_value < 1.0);
    }

    #[test]
    fn two_sample_factor() {
        let y = sample();
        let fixed = hotelling_fixed_ad(&y, &at(&y, &[3.5, 3.0], None)).unwrap();
        let equal = hotelling_two_sample(&y, &at(&y, &[3.5, 3.0], Some(6))).unwrap();
        assert!((equal.statistic - fixed.statistic / 2.0).abs() < 1e-12 * fixed.statistic);
        let huge = hotelling_two_sample(&y, &at(&y, &[3.5, 3.0], Some(1_000_000_000))).unwrap();
        assert!((huge.statistic / fixed.statistic - 1.0).abs() < 1e-6);
        assert!(matches!(
            hotelling_two_sample(&y, &at(&y, &[3.5, 3.0], None)),
            Err(Error::MissingAdSampleSize)
        ));
    }

    #[test]
    fn too_few_patients() {
        let y = IpdMatrix::from_patient_rows(&["a", "b"], &[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            hotelling_fixed_ad(&y, &at(&y, &[1.0, 1.0], None)),
            Err(Error::TooFewPatients { n: 2, p: 2 })
        ));
    }

    #[test]
    fn collinear_covariates_are_named() {
        let y = IpdMatrix::from_patient_rows(
            &["x", "twice_x", "z"],
            &[
                vec![1.0, 2.0, 0.3],
                vec![2.0, 4.0, 0.1],
                vec![3.0, 6.0, 0.9],
                vec![4.0, 8.0, 0.4],
                vec![0.0, 0.0, 0.5],
            ],
        )
        .unwrap();
        match hotelling_fixed_ad(&y, &at(&y, &[1.0, 2.0, 0.5], None)) {
            Err(Error::SingularCovariance { covariates, .. }) => {
                assert!(covariates.contains(&"x".to_string()));
                assert!(covariates.contains(&"twice_x".to_string()));
                assert!(!covariates.contains(&"z".to_string()));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn resampling_basics() {
        let y = sample();
        let mean: Vec<f64> = y.means().iter().copied().collect();
        let r = hotelling_resampled(&y, &at(&y, &mean, None), Variant::FixedAd, 200, 7).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.method, Method::Resampling);
        let a = hotelling_resampled(&y, &at(&y, &[3.5, 3.0], None), Variant::FixedAd, 300, 11).unwrap();
        let b = hotelling_resampled(&y, &at(&y, &[3.5, 3.0], None), Variant::FixedAd, 300, 11).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            hotelling_resampled(&y, &at(&y, &mean, None), Variant::FixedAd, 99, 1),
            Err(Error::InvalidDraws(99))
        ));
    }

    #[test]
    fn mahalanobis_of_mean_is_zero() {
        let y = sample();
        let mean: Vec<f64> = y.means().iter().copied().collect();
        let m = mahalanobis_summary(&y, &at(&y, &mean, None)).unwrap();
        assert_eq!(m.ad_distance, 0.0);
        assert!(m.max_ipd_distance > 0.0);
    }
}
