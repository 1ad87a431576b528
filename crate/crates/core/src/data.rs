//! Covariate containers, file ingestion, standardization and
//! variance-column augmentation.
//!
//! Patient data are held column-per-patient: a `p x n` matrix whose column
//! `i` is the covariate vector of patient `i`. Aggregate data are a
//! `p`-vector of published means, aligned to the patient data by covariate
//! name. Sample standard deviations use the `n - 1` denominator throughout.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats;

/// Reserved name in an aggregate-data file carrying the comparator sample size.
pub const N_AD_KEY: &str = "n_ad";

/// Suffix given to appended squared-residual rows.
pub const VARIANCE_SUFFIX: &str = "__var";

/// Individual patient data, one column per patient.
#[derive(Debug, Clone, PartialEq)]
pub struct IpdMatrix {
    values: DMatrix<f64>,
    covariate_names: Vec<String>,
}

impl IpdMatrix {
    pub fn new(values: DMatrix<f64>, covariate_names: Vec<String>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "patient data must have at least one covariate and one patient (got {}x{})",
                values.nrows(),
                values.ncols()
            )));
        }
        if covariate_names.len() != values.nrows() {
            return Err(Error::DimensionMismatch {
                what: "covariate names",
                expected: values.nrows(),
                found: covariate_names.len(),
            });
        }
        check_distinct(&covariate_names)?;
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            let (row, col) = (idx % values.nrows(), idx / values.nrows());
            return Err(Error::NonFinite(format!(
                "patient data (covariate `{}`, patient {})",
                covariate_names[row],
                col + 1
            )));
        }
        Ok(Self {
            values,
            covariate_names,
        })
    }

    /// Builds the matrix from patient-major rows, the layout of a data file.
    pub fn from_patient_rows<S: AsRef<str>>(names: &[S], rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::InvalidInput(format!(
                    "patient {} has {} values, expected {p}",
                    i + 1,
                    row.len()
                )));
            }
        }
        let values = DMatrix::from_fn(p, rows.len(), |j, i| rows[i][j]);
        Self::new(values, names.iter().map(|s| s.as_ref().to_string()).collect())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    /// Number of patients.
    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    /// Number of covariates.
    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn patient(&self, i: usize) -> DVector<f64> {
        self.values.column(i).into_owned()
    }

    /// Covariate means across patients (the IPD counterpart of the AD vector).
    pub fn means(&self) -> DVector<f64> {
        stats::row_means(&self.values)
    }

    /// Sample standard deviations with denominator `n - 1`; zero when `n = 1`.
    pub fn sample_sds(&self) -> DVector<f64> {
        let means = self.means();
        let n = self.n();
        DVector::from_iterator(
            self.p(),
            self.values.row_iter().zip(means.iter()).map(|(r, m)| {
                if n < 2 {
                    0.0
                } else {
                    (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
            }),
        )
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.covariate_names.iter().position(|c| c == name)
    }

    /// A copy with the named covariates removed.
    pub fn without_covariates(&self, drop: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.p()).filter(|j| !drop.contains(j)).collect();
        let values = self.values.select_rows(keep.iter());
        let names = keep.iter().map(|&j| self.covariate_names[j].clone()).collect();
        Self::new(values, names)
    }

    /// A copy with extra patient columns appended on the right.
    pub fn with_patients(&self, extra: &DMatrix<f64>) -> Result<Self> {
        if extra.nrows() != self.p() {
            return Err(Error::DimensionMismatch {
                what: "appended patients",
                expected: self.p(),
                found: extra.nrows(),
            });
        }
        let mut values = DMatrix::zeros(self.p(), self.n() + extra.ncols());
        values.columns_mut(0, self.n()).copy_from(&self.values);
        values.columns_mut(self.n(), extra.ncols()).copy_from(extra);
        Self::new(values, self.covariate_names.clone())
    }
}

/// Published aggregate means, aligned to a patient matrix by name.
#[derive(Debug, Clone, PartialEq)]
pub struct AdVector {
    values: DVector<f64>,
    covariate_names: Vec<String>,
    n_ad: Option<u64>,
}

impl AdVector {
    pub fn new(values: DVector<f64>, covariate_names: Vec<String>, n_ad: Option<u64>) -> Result<Self> {
        if values.len() != covariate_names.len() {
            return Err(Error::DimensionMismatch {
                what: "aggregate covariate names",
                expected: values.len(),
                found: covariate_names.len(),
            });
        }
        check_distinct(&covariate_names)?;
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "aggregate data (covariate `{}`)",
                covariate_names[j]
            )));
        }
        if n_ad == Some(0) {
            return Err(Error::InvalidInput("n_ad must be a positive integer".into()));
        }
        Ok(Self {
            values,
            covariate_names,
            n_ad,
        })
    }

    /// Aggregate vector carrying the names of `ipd`, in its order.
    pub fn for_ipd(ipd: &IpdMatrix, values: &[f64], n_ad: Option<u64>) -> Result<Self> {
        if values.len() != ipd.p() {
            return Err(Error::DimensionMismatch {
                what: "aggregate means",
                expected: ipd.p(),
                found: values.len(),
            });
        }
        Self::new(
            DVector::from_column_slice(values),
            ipd.covariate_names().to_vec(),
            n_ad,
        )
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn n_ad(&self) -> Option<u64> {
        self.n_ad
    }

    pub fn with_n_ad(mut self, n_ad: Option<u64>) -> Self {
        self.n_ad = n_ad;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reorders to the covariate order of `ipd`; names must match as sets.
    pub fn align_to(&self, ipd: &IpdMatrix) -> Result<Self> {
        let pairs: Vec<(String, f64)> = self
            .covariate_names
            .iter()
            .cloned()
            .zip(self.values.iter().copied())
            .collect();
        align_pairs(&pairs, self.n_ad, ipd)
    }

    pub fn without_covariates(&self, drop: &[usize]) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|j| !drop.contains(j)).collect();
        Self::new(
            DVector::from_iterator(keep.len(), keep.iter().map(|&j| self.values[j])),
            keep.iter().map(|&j| self.covariate_names[j].clone()).collect(),
            self.n_ad,
        )
    }
}

/// Per-patient outcomes in the patient order of the companion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeVector {
    values: DVector<f64>,
    label: String,
}

impl OutcomeVector {
    pub fn new(values: DVector<f64>, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("outcome `{label}`")));
        }
        Ok(Self { values, label })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Location and scale used to standardize covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationParams {
    pub means: DVector<f64>,
    pub sds: DVector<f64>,
}

impl StandardizationParams {
    pub fn apply_vector(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.means).component_div(&self.sds)
    }

    pub fn apply_matrix(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = y.clone();
        for (j, mut row) in out.row_iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = (*v - self.means[j]) / self.sds[j];
            }
        }
        out
    }

    pub fn invert_matrix(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = z.clone();
        for (j, mut row) in out.row_iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v = *v * self.sds[j] + self.means[j];
            }
        }
        out
    }

    pub fn invert_vector(&self, z: &DVector<f64>) -> DVector<f64> {
        z.component_mul(&self.sds) + &self.means
    }
}

/// Delimited-text options shared by the readers and writers.
#[derive(Debug, Clone, Copy)]
pub struct FormatSpec {
    pub delimiter: u8,
}

impl Default for FormatSpec {
    fn default() -> Self {
        Self { delimiter: b',' }
    }
}

fn check_distinct(names: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateName(name.clone()));
        }
    }
    Ok(())
}

fn reader(path: &Path, format: FormatSpec, has_headers: bool) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(has_headers)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: err.to_string(),
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    if is_missing(cell) {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::ParseCell {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

/// Reads patient data: a header row naming the covariates, then one row per patient.
pub fn load_ipd(path: impl AsRef<Path>, format: FormatSpec) -> Result<IpdMatrix> {
    let path = path.as_ref();
    let mut rdr = reader(path, format, true)?;
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(String::is_empty) {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    check_distinct(&names)?;
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let row = record
            .iter()
            .zip(&names)
            .map(|(cell, name)| parse_cell(cell, r + 1, name))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    IpdMatrix::from_patient_rows(&names, &rows)
}

/// Writes patient data in the layout [`load_ipd`] reads.
pub fn save_ipd(ipd: &IpdMatrix, path: impl AsRef<Path>, format: FormatSpec) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(format.delimiter)
        .from_writer(file);
    wtr.write_record(ipd.covariate_names())
        .map_err(|e| csv_error(path, e))?;
    for col in ipd.values().column_iter() {
        wtr.write_record(col.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Raw `name,value` pairs from an aggregate-data file plus the optional `n_ad`.
pub fn read_ad_pairs(path: impl AsRef<Path>, format: FormatSpec) -> Result<(Vec<(String, f64)>, Option<u64>)> {
    let path = path.as_ref();
    let mut rdr = reader(path, format, false)?;
    let mut pairs = Vec::new();
    let mut n_ad = None;
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != 2 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("line {} has {} fields, expected `name,value`", r + 1, record.len()),
            });
        }
        let (name, cell) = (&record[0], &record[1]);
        if r == 0 && name.eq_ignore_ascii_case("name") && cell.eq_ignore_ascii_case("value") {
            continue;
        }
        if name == N_AD_KEY {
            let v = parse_cell(cell, r + 1, name)?;
            if v < 1.0 || v.fract() != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "`{N_AD_KEY}` must be a positive integer, got {cell}"
                )));
            }
            n_ad = Some(v as u64);
            continue;
        }
        pairs.push((name.to_string(), parse_cell(cell, r + 1, name)?));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyFile {
            path: path.to_path_buf(),
        });
    }
    Ok((pairs, n_ad))
}

fn align_pairs(pairs: &[(String, f64)], n_ad: Option<u64>, ipd: &IpdMatrix) -> Result<AdVector> {
    let mut by_name = HashMap::new();
    for (name, value) in pairs {
        if by_name.insert(name.as_str(), *value).is_some() {
            return Err(Error::DuplicateName(name.clone()));
        }
    }
    let only_in_ad: Vec<String> = pairs
        .iter()
        .filter(|(name, _)| ipd.index_of(name).is_none())
        .map(|(name, _)| name.clone())
        .collect();
    let only_in_ipd: Vec<String> = ipd
        .covariate_names()
        .iter()
        .filter(|name| !by_name.contains_key(name.as_str()))
        .cloned()
        .collect();
    if !only_in_ad.is_empty() || !only_in_ipd.is_empty() {
        return Err(Error::Alignment {
            only_in_ad,
            only_in_ipd,
        });
    }
    let values: Vec<f64> = ipd
        .covariate_names()
        .iter()
        .map(|name| by_name[name.as_str()])
        .collect();
    AdVector::for_ipd(ipd, &values, n_ad)
}

/// Reads an aggregate-data file and aligns it by name to `ipd`.
pub fn load_ad(path: impl AsRef<Path>, format: FormatSpec, ipd: &IpdMatrix) -> Result<AdVector> {
    let (pairs, n_ad) = read_ad_pairs(path, format)?;
    align_pairs(&pairs, n_ad, ipd)
}

/// Reads a single-column outcome file (header = label, one row per patient).
pub fn load_outcome(path: impl AsRef<Path>, format: FormatSpec, ipd: &IpdMatrix) -> Result<OutcomeVector> {
    let path = path.as_ref();
    let mut rdr = reader(path, format, true)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 1 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("outcome file must have one column, found {}", headers.len()),
        });
    }
    let label = headers[0].to_string();
    let mut values = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        values.push(parse_cell(&record[0], r + 1, &label)?);
    }
    if values.len() != ipd.n() {
        return Err(Error::DimensionMismatch {
            what: "outcome rows",
            expected: ipd.n(),
            found: values.len(),
        });
    }
    OutcomeVector::new(DVector::from_vec(values), label)
}

/// Appends one squared-residual row per `(covariate, ad_variance)` target.
///
/// The new IPD entries are `(sqrt(n/(n-1)) * (y_ij - mean_j))^2`, whose mean is
/// the `n - 1` sample variance, and the supplied variance is appended to the
/// aggregate vector unchanged.
pub fn augment_variance_columns(
    ipd: &IpdMatrix,
    ad: &AdVector,
    targets: &[(String, f64)],
) -> Result<(IpdMatrix, AdVector)> {
    if targets.is_empty() {
        return Ok((ipd.clone(), ad.clone()));
    }
    if ad.covariate_names() != ipd.covariate_names() {
        return Err(Error::InvalidInput(
            "aggregate data must be aligned to the patient data before augmentation".into(),
        ));
    }
    let n = ipd.n();
    if n < 2 {
        return Err(Error::InvalidInput(
            "variance augmentation needs at least two patients".into(),
        ));
    }
    let factor = (n as f64 / (n - 1) as f64).sqrt();
    let means = ipd.means();
    let p = ipd.p();
    let mut values = ipd.values().clone().resize_vertically(p + targets.len(), 0.0);
    let mut names = ipd.covariate_names().to_vec();
    let mut ad_values: Vec<f64> = ad.values().iter().copied().collect();
    for (k, (name, variance)) in targets.iter().enumerate() {
        let j = ipd
            .index_of(name)
            .ok_or_else(|| Error::UnknownCovariate(name.clone()))?;
        if !(*variance > 0.0) || !variance.is_finite() {
            return Err(Error::NonPositiveVariance {
                name: name.clone(),
                value: *variance,
            });
        }
        for i in 0..n {
            values[(p + k, i)] = (factor * (ipd.values()[(j, i)] - means[j])).powi(2);
        }
        names.push(format!("{name}{VARIANCE_SUFFIX}"));
        ad_values.push(*variance);
    }
    let ipd = IpdMatrix::new(values, names)?;
    let ad = AdVector::for_ipd(&ipd, &ad_values, ad.n_ad())?;
    Ok((ipd, ad))
}

/// Standardizes both inputs with the IPD means and sample standard deviations.
pub fn standardize(ipd: &IpdMatrix, ad: &AdVector) -> Result<(IpdMatrix, AdVector, StandardizationParams)> {
    if ad.len() != ipd.p() {
        return Err(Error::DimensionMismatch {
            what: "aggregate means",
            expected: ipd.p(),
            found: ad.len(),
        });
    }
    let params = standardization_params(ipd)?;
    let z = IpdMatrix::new(params.apply_matrix(ipd.values()), ipd.covariate_names().to_vec())?;
    let x = AdVector::new(
        params.apply_vector(ad.values()),
        ad.covariate_names().to_vec(),
        ad.n_ad(),
    )?;
    Ok((z, x, params))
}

/// IPD means and sample standard deviations; errors on constant covariates.
pub fn standardization_params(ipd: &IpdMatrix) -> Result<StandardizationParams> {
    let sds = ipd.sample_sds();
    let constant: Vec<String> = sds
        .iter()
        .zip(ipd.covariate_names())
        .filter(|(sd, _)| !(**sd > 0.0))
        .map(|(_, name)| name.clone())
        .collect();
    if !constant.is_empty() {
        return Err(Error::ConstantCovariate(constant));
    }
    Ok(StandardizationParams {
        means: ipd.means(),
        sds,
    })
}

/// Maps standardized patient data back to the original scale.
pub fn destandardize(ipd: &IpdMatrix, params: &StandardizationParams) -> Result<IpdMatrix> {
    IpdMatrix::new(params.invert_matrix(ipd.values()), ipd.covariate_names().to_vec())
}

/// Writes per-patient weights as `patient_id,weight` (1-based ids in file order).
pub fn write_weights_csv(path: impl AsRef<Path>, weights: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = String::from("patient_id,weight\n");
    for (i, w) in weights.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, w));
    }
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
