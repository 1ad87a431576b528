//! The combined workflow: feasibility, PCA location, Hotelling's T², the
//! weight fit and optional alternative weights, collected in one report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alt_weights::{self, AltWeightSet, DistanceMetric};
use crate::data::{self, AdVector, FormatSpec, IpdMatrix, OutcomeVector};
use crate::error::{Error, Result};
use crate::fit::{self, FitOptions, MaicFit, SteepestAscentDiagnostic};
use crate::hotelling::{self, HotellingResult, MahalanobisSummary, Variant};
use crate::hull::{self, FeasibilityVerdict, HullStatus};
use crate::pca::{self, PcaProjection, ScoreRange};
use crate::plot;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const PC_DOTPLOT: &str = "pc_dotplot.svg";
pub const SCATTER_WEIGHTS: &str = "scatter_weights.svg";
pub const WEIGHTS_CSV: &str = "weights.csv";
pub const ALT_WEIGHTS_CSV: &str = "alt_weights.csv";
/// Exit code for unreadable or malformed input and usage errors.
pub const EXIT_INPUT_ERROR: i32 = 1;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub format: FormatSpec,
    pub outcome: Option<PathBuf>,
    /// `(covariate, aggregate variance)` pairs matched as extra moments.
    pub variances: Vec<(String, f64)>,
    pub resample: Option<usize>,
    pub seed: u64,
    pub altweights: bool,
    pub metric: DistanceMetric,
    pub out_dir: Option<PathBuf>,
    pub record_timestamp: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            format: FormatSpec::default(),
            outcome: None,
            variances: Vec::new(),
            resample: None,
            seed: 0,
            altweights: false,
            metric: DistanceMetric::Euclidean,
            out_dir: None,
            record_timestamp: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub ipd: FileDigest,
    pub ad: FileDigest,
    pub outcome: Option<FileDigest>,
    pub seed: u64,
    /// Seconds since the Unix epoch; excluded from the determinism hash.
    pub generated_unix: Option<u64>,
}

/// PCA location without the per-patient scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaSummary {
    pub eigenvalues: Vec<f64>,
    pub loadings: Vec<Vec<f64>>,
    pub ad_scores: Vec<f64>,
    pub per_pc_range: Vec<ScoreRange>,
    pub ad_outside: Vec<usize>,
    pub degenerate: Vec<usize>,
    pub warnings: Vec<String>,
}

impl From<&PcaProjection> for PcaSummary {
    fn from(p: &PcaProjection) -> Self {
        Self {
            eigenvalues: p.eigenvalues.clone(),
            loadings: p.loadings.clone(),
            ad_scores: p.ad_scores.clone(),
            per_pc_range: p.per_pc_range.clone(),
            ad_outside: p.ad_outside.clone(),
            degenerate: p.degenerate.clone(),
            warnings: p.warnings.clone(),
        }
    }
}

/// Alternative weights without the `n x n` basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltWeightSummary {
    pub distance_metric: DistanceMetric,
    /// Final weights rescaled to sum to `n`.
    pub weights: Vec<f64>,
    pub ess: f64,
    /// Largest number of positive entries in any basis column.
    pub max_support: usize,
    /// 0-based patients whose basis column was replaced by the phase-one solution.
    pub substituted: Vec<usize>,
    /// 0-based patients coinciding with the aggregate means.
    pub coincident_patients: Vec<usize>,
    pub rank_deficient: bool,
}

impl AltWeightSummary {
    pub fn from_set(set: &AltWeightSet) -> Result<Self> {
        Ok(Self {
            distance_metric: set.distance_metric,
            weights: set.rescaled(),
            ess: set.ess()?,
            max_support: set
                .basis
                .columns
                .iter()
                .map(|c| c.iter().filter(|v| **v > 0.0).count())
                .max()
                .unwrap_or(0),
            substituted: set.basis.substituted.clone(),
            coincident_patients: set.coincident_patients.clone(),
            rank_deficient: set.basis.rank_deficient,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Feasibility,
    Pca,
    Hotelling,
    Fit,
    Altweights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub covariates: Vec<String>,
    pub n: usize,
    pub n_ad: Option<u64>,
    pub feasibility: FeasibilityVerdict,
    pub pca: Option<PcaSummary>,
    pub hotelling: Vec<HotellingResult>,
    pub mahalanobis: Option<MahalanobisSummary>,
    pub fit: Option<MaicFit>,
    pub steepest_ascent: Option<SteepestAscentDiagnostic>,
    pub weighted_outcome_mean: Option<f64>,
    pub altweights: Option<AltWeightSummary>,
    /// Stages not run, with the reason.
    pub skipped: Vec<StageError>,
    /// The stage that failed; later stages were not run.
    pub error: Option<StageError>,
    pub exit_code: i32,
    pub provenance: Provenance,
    /// SHA-256 of the report JSON with this field empty and no timestamp.
    pub determinism_hash: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn file_digest(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

impl CheckReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("cannot serialize report: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("cannot parse report: {e}")))
    }

    pub fn compute_hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.determinism_hash.clear();
        canonical.provenance.generated_unix = None;
        let json = serde_json::to_string(&canonical)
            .map_err(|e| Error::InvalidInput(format!("cannot serialize report: {e}")))?;
        Ok(hex(&Sha256::digest(json.as_bytes())))
    }

    /// Human-readable summary derived from the report.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "maicfeas {}", self.provenance.tool_version);
        let _ = writeln!(s, "patients: {}  covariates: {}", self.n, self.covariates.join(", "));
        let _ = writeln!(s);
        let _ = writeln!(s, "Feasibility: aggregate means are {}.", self.feasibility.status.describe());
        if let (Some(c), Some(m)) = (&self.feasibility.certificate, self.feasibility.separation_margin) {
            let terms: Vec<String> = self
                .covariates
                .iter()
                .zip(c)
                .map(|(name, v)| format!("{v:+.4}*{name}"))
                .collect();
            let _ = writeln!(s, "  separating direction: {} (margin {m:.4e})", terms.join(" "));
        }
        if let Some(pca) = &self.pca {
            let _ = writeln!(s);
            let _ = writeln!(s, "PCA (correlation matrix):");
            for (k, ev) in pca.eigenvalues.iter().enumerate() {
                let r = pca.per_pc_range[k];
                let flag = if pca.ad_outside.contains(&(k + 1)) {
                    "  OUTSIDE"
                } else if pca.degenerate.contains(&(k + 1)) {
                    "  degenerate"
                } else {
                    ""
                };
                let _ = writeln!(
                    s,
                    "  PC{}: eigenvalue {ev:.4}, patients [{:.4}, {:.4}], aggregate {:.4}{flag}",
                    k + 1,
                    r.min,
                    r.max,
                    pca.ad_scores[k]
                );
            }
            for w in &pca.warnings {
                let _ = writeln!(s, "  warning: {w}");
            }
        }
        if !self.hotelling.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "Hotelling's T²:");
            for h in &self.hotelling {
                let variant = match h.variant {
                    Variant::FixedAd => "fixed aggregate means",
                    Variant::TwoSample => "two-sample",
                };
                let method = match h.resample_draws {
                    Some(b) => format!("bootstrap, {b} draws"),
                    None => format!("F({}, {})", h.df1, h.df2),
                };
                let _ = writeln!(s, "  {variant}: T² = {:.4}, {method}; {}", h.statistic, h.interpretation());
            }
        }
        if let Some(m) = &self.mahalanobis {
            let _ = writeln!(
                s,
                "  squared Mahalanobis distance of aggregate means {:.4} (largest patient {:.4})",
                m.ad_distance, m.max_ipd_distance
            );
        }
        if let Some(fit) = &self.fit {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "Weights: ESS {:.2} ({:.1}% of n), moment residual {:.2e}, {} iterations",
                fit.ess,
                100.0 * fit.ess_fraction,
                fit.moment_residual,
                fit.iterations
            );
            let beta: Vec<String> = self
                .covariates
                .iter()
                .zip(&fit.beta)
                .map(|(name, b)| format!("{name} {b:.6}"))
                .collect();
            let _ = writeln!(s, "  coefficients: {}", beta.join(", "));
        }
        if let Some(m) = self.weighted_outcome_mean {
            let _ = writeln!(s, "  weighted outcome mean: {m:.6}");
        }
        if let Some(alt) = &self.altweights {
            let _ = writeln!(s);
            let _ = writeln!(
                s,
                "Alternative weights ({:?} distance): ESS {:.2}, basis support at most {}",
                alt.distance_metric, alt.ess, alt.max_support
            );
        }
        for skip in &self.skipped {
            let _ = writeln!(s, "skipped {:?}: {}", skip.stage, skip.message);
        }
        if let Some(err) = &self.error {
            let _ = writeln!(s, "stopped at {:?}: {}", err.stage, err.message);
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "exit code {}", self.exit_code);
        s
    }
}

/// Everything computed by the pipeline, including pieces left out of the report.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: CheckReport,
    pub ipd: IpdMatrix,
    pub ad: AdVector,
    pub projection: Option<PcaProjection>,
    pub altweights: Option<AltWeightSet>,
}

struct Inputs {
    ipd: IpdMatrix,
    ad: AdVector,
    outcome: Option<OutcomeVector>,
    provenance: Provenance,
}

fn load_inputs(ipd_path: &Path, ad_path: &Path, options: &PipelineOptions) -> Result<Inputs> {
    let ipd = data::load_ipd(ipd_path, options.format)?;
    let ad = data::load_ad(ad_path, options.format, &ipd)?;
    let outcome = options
        .outcome
        .as_deref()
        .map(|p| data::load_outcome(p, options.format, &ipd))
        .transpose()?;
    let (ipd, ad) = data::augment_variance_columns(&ipd, &ad, &options.variances)?;
    let provenance = Provenance {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        ipd: file_digest(ipd_path)?,
        ad: file_digest(ad_path)?,
        outcome: options.outcome.as_deref().map(file_digest).transpose()?,
        seed: options.seed,
        generated_unix: options
            .record_timestamp
            .then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())),
    };
    Ok(Inputs {
        ipd,
        ad,
        outcome,
        provenance,
    })
}

fn hotelling_stage(ipd: &IpdMatrix, ad: &AdVector, options: &PipelineOptions) -> Result<Vec<HotellingResult>> {
    let mut variants = vec![Variant::FixedAd];
    if ad.n_ad().is_some() {
        variants.push(Variant::TwoSample);
    }
    let mut out = Vec::new();
    for v in variants {
        out.push(hotelling::hotelling(ipd, ad, v)?);
        if let Some(draws) = options.resample {
            out.push(hotelling::hotelling_resampled(ipd, ad, v, draws, options.seed)?);
        }
    }
    Ok(out)
}

/// Runs every stage in memory. Input errors are returned; stage errors are
/// recorded in the report and stop the pipeline.
pub fn execute(ipd_path: &Path, ad_path: &Path, options: &PipelineOptions) -> Result<PipelineRun> {
    let Inputs {
        ipd,
        ad,
        outcome,
        provenance,
    } = load_inputs(ipd_path, ad_path, options)?;
    let feasibility = hull::check_in_hull(&ipd, &ad)?;
    let report = CheckReport {
        covariates: ipd.covariate_names().to_vec(),
        n: ipd.n(),
        n_ad: ad.n_ad(),
        exit_code: feasibility.process_exit_code(),
        feasibility,
        pca: None,
        hotelling: Vec::new(),
        mahalanobis: None,
        fit: None,
        steepest_ascent: None,
        weighted_outcome_mean: None,
        altweights: None,
        skipped: Vec::new(),
        error: None,
        provenance,
        determinism_hash: String::new(),
    };
    let mut run = PipelineRun {
        report,
        ipd,
        ad,
        projection: None,
        altweights: None,
    };
    stages(&mut run, outcome.as_ref(), options);
    run.report.determinism_hash = run.report.compute_hash()?;
    Ok(run)
}

fn stages(run: &mut PipelineRun, outcome: Option<&OutcomeVector>, options: &PipelineOptions) {
    let PipelineRun {
        report,
        ipd,
        ad,
        projection,
        altweights,
    } = run;
    let fail = |report: &mut CheckReport, stage, e: Error| {
        report.error = Some(StageError {
            stage,
            message: e.to_string(),
        });
    };

    match pca::pca_locate(ipd, ad) {
        Ok(p) => {
            report.pca = Some(PcaSummary::from(&p));
            *projection = Some(p);
        }
        Err(e) => return fail(report, Stage::Pca, e),
    }

    match hotelling_stage(ipd, ad, options).and_then(|h| Ok((h, hotelling::mahalanobis_summary(ipd, ad)?))) {
        Ok((h, m)) => {
            report.hotelling = h;
            report.mahalanobis = Some(m);
        }
        Err(e) => return fail(report, Stage::Hotelling, e),
    }

    if report.feasibility.status == HullStatus::Interior {
        let fitted = fit::fit_maic(ipd, ad, &FitOptions::default()).and_then(|f| {
            let diag = fit::steepest_ascent_diagnostic(&f, ipd, ad)?;
            let mean = outcome.map(|o| fit::weighted_outcome_mean(o, &f.weights)).transpose()?;
            Ok((f, diag, mean))
        });
        match fitted {
            Ok((f, diag, mean)) => {
                report.fit = Some(f);
                report.steepest_ascent = Some(diag);
                report.weighted_outcome_mean = mean;
            }
            Err(e) => return fail(report, Stage::Fit, e),
        }
    } else {
        report.skipped.push(StageError {
            stage: Stage::Fit,
            message: format!("aggregate means are {}", report.feasibility.status.describe()),
        });
    }

    if options.altweights {
        if report.feasibility.status == HullStatus::Infeasible {
            report.skipped.push(StageError {
                stage: Stage::Altweights,
                message: "no convex weights reproduce the aggregate means".into(),
            });
        } else {
            match alt_weights::alternative_weights(ipd, ad, options.metric)
                .and_then(|set| Ok((AltWeightSummary::from_set(&set)?, set)))
            {
                Ok((summary, set)) => {
                    report.altweights = Some(summary);
                    *altweights = Some(set);
                }
                Err(e) => fail(report, Stage::Altweights, e),
            }
        }
    }
}

/// Writes the JSON report, the text summary, weights and plots into `dir`.
pub fn write_outputs(run: &PipelineRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let report = &run.report;
    let json_path = dir.join(REPORT_JSON);
    std::fs::write(&json_path, report.to_json()? + "\n").map_err(|e| Error::io(&json_path, e))?;
    let text_path = dir.join(REPORT_TEXT);
    std::fs::write(&text_path, report.summary_text()).map_err(|e| Error::io(&text_path, e))?;
    if let Some(p) = &run.projection {
        plot::render_pc_dotplot(p, dir.join(PC_DOTPLOT))?;
    }
    if let Some(f) = &report.fit {
        data::write_weights_csv(dir.join(WEIGHTS_CSV), &f.weights)?;
        if run.ipd.p() == 2 {
            plot::render_scatter_with_weights(&run.ipd, &run.ad, f, dir.join(SCATTER_WEIGHTS))?;
        }
    }
    if let Some(alt) = &report.altweights {
        data::write_weights_csv(dir.join(ALT_WEIGHTS_CSV), &alt.weights)?;
    }
    Ok(())
}

/// [`execute`] followed by [`write_outputs`] when an output directory is set.
pub fn run_pipeline(ipd_path: &Path, ad_path: &Path, options: &PipelineOptions) -> Result<CheckReport> {
    let run = execute(ipd_path, ad_path, options)?;
    if let Some(dir) = &options.out_dir {
        write_outputs(&run, dir)?;
    }
    Ok(run.report)
}
