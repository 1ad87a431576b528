use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use maicfeas::alt_weights::{self, DistanceMetric};
use maicfeas::data::{self, AdVector, FormatSpec, IpdMatrix};
use maicfeas::fit::{self, FitOptions};
use maicfeas::hotelling::{self, Variant};
use maicfeas::hull::{self, HullStatus};
use maicfeas::report::{self, PipelineOptions, EXIT_INPUT_ERROR};
use maicfeas::{pca, plot, Error, Result};

/// Feasibility checks, weight fitting and diagnostics for matching-adjusted
/// indirect comparisons.
///
/// Exit codes: 0 aggregate means inside the hull, 3 on its boundary,
/// 2 outside it, 1 input or usage error. Every option can also be set with a
/// MAICFEAS_ environment variable (e.g. MAICFEAS_IPD); flags take precedence.
#[derive(Parser)]
#[command(name = "maicfeas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether any convex reweighting reproduces the aggregate means.
    Check(CommonArgs),
    /// Locate the aggregate means in principal-component coordinates.
    Pca {
        #[command(flatten)]
        common: CommonArgs,
        /// Write the per-component dot plot here.
        #[arg(long, env = "MAICFEAS_PLOT")]
        plot: Option<PathBuf>,
    },
    /// Hotelling's T² test of the patient means against the aggregate means.
    T2 {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "fixed", env = "MAICFEAS_VARIANT")]
        variant: VariantArg,
        /// Use a shift-to-null bootstrap with this many draws.
        #[arg(long, env = "MAICFEAS_RESAMPLE")]
        resample: Option<usize>,
        #[arg(long, default_value_t = 0, env = "MAICFEAS_SEED")]
        seed: u64,
    },
    /// Fit exponential-tilting weights (only when the means are interior).
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Single-column outcome file; reports the weighted outcome mean.
        #[arg(long, env = "MAICFEAS_OUTCOME")]
        outcome: Option<PathBuf>,
        /// Write `patient_id,weight` here.
        #[arg(long, env = "MAICFEAS_WEIGHTS")]
        weights: Option<PathBuf>,
        /// Write the weighted scatter plot here (two covariates only).
        #[arg(long, env = "MAICFEAS_PLOT")]
        plot: Option<PathBuf>,
    },
    /// Sparse alternative weights blended by distance to the aggregate means.
    Altweights {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value = "euclidean", env = "MAICFEAS_METRIC")]
        metric: MetricArg,
        /// Write the final weights (rescaled to sum to n) here.
        #[arg(long, env = "MAICFEAS_WEIGHTS")]
        weights: Option<PathBuf>,
        /// Write the full n x n basis here (large for big n).
        #[arg(long, env = "MAICFEAS_BASIS")]
        basis: Option<PathBuf>,
    },
    /// Run the whole workflow and write a combined report.
    Report {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, env = "MAICFEAS_OUTCOME")]
        outcome: Option<PathBuf>,
        #[arg(long, env = "MAICFEAS_RESAMPLE")]
        resample: Option<usize>,
        #[arg(long, default_value_t = 0, env = "MAICFEAS_SEED")]
        seed: u64,
        /// Also compute alternative weights.
        #[arg(long, env = "MAICFEAS_ALTWEIGHTS")]
        altweights: bool,
        #[arg(long, value_enum, default_value = "euclidean", env = "MAICFEAS_METRIC")]
        metric: MetricArg,
        /// Output directory for report.json, report.txt, plots and weights.
        #[arg(long, env = "MAICFEAS_OUT")]
        out: Option<PathBuf>,
        /// Leave the generation time out of the report.
        #[arg(long, env = "MAICFEAS_NO_TIMESTAMP")]
        no_timestamp: bool,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Patient data: header of covariate names, one row per patient.
    #[arg(long, env = "MAICFEAS_IPD")]
    ipd: PathBuf,
    /// Aggregate means as `name,value` rows; an optional `n_ad` row gives the sample size.
    #[arg(long, env = "MAICFEAS_AD")]
    ad: PathBuf,
    /// Match a published variance as an extra moment: `name=value`.
    #[arg(long = "variance", value_parser = parse_variance, env = "MAICFEAS_VARIANCE", value_delimiter = ' ', num_args = 1..)]
    variances: Vec<(String, f64)>,
    /// Field delimiter of the input files.
    #[arg(long, default_value_t = ',', env = "MAICFEAS_DELIMITER")]
    delimiter: char,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Fixed,
    TwoSample,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    Mahalanobis,
}

impl From<MetricArg> for DistanceMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => DistanceMetric::Euclidean,
            MetricArg::Mahalanobis => DistanceMetric::Mahalanobis,
        }
    }
}

fn parse_variance(s: &str) -> std::result::Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value: f64 = value.trim().parse().map_err(|_| format!("invalid variance `{value}`"))?;
    Ok((name.trim().to_string(), value))
}

impl CommonArgs {
    fn format(&self) -> Result<FormatSpec> {
        u8::try_from(self.delimiter)
            .map(|delimiter| FormatSpec { delimiter })
            .map_err(|_| Error::InvalidInput(format!("delimiter `{}` is not a single byte", self.delimiter)))
    }

    fn load(&self) -> Result<(IpdMatrix, AdVector)> {
        let format = self.format()?;
        let ipd = data::load_ipd(&self.ipd, format)?;
        let ad = data::load_ad(&self.ad, format, &ipd)?;
        data::augment_variance_columns(&ipd, &ad, &self.variances)
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Check(common) => {
            let (ipd, ad) = common.load()?;
            let verdict = hull::check_in_hull(&ipd, &ad)?;
            print_json(&verdict)?;
            eprintln!("aggregate means are {}", verdict.status.describe());
            Ok(verdict.process_exit_code())
        }
        Command::Pca { common, plot: out } => {
            let (ipd, ad) = common.load()?;
            let projection = pca::pca_locate(&ipd, &ad)?;
            if let Some(path) = out {
                plot::render_pc_dotplot(&projection, path)?;
            }
            for w in &projection.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&projection)?;
            Ok(0)
        }
        Command::T2 {
            common,
            variant,
            resample,
            seed,
        } => {
            let (ipd, ad) = common.load()?;
            let variant = match variant {
                VariantArg::Fixed => Variant::FixedAd,
                VariantArg::TwoSample => Variant::TwoSample,
            };
            let result = match resample {
                Some(draws) => hotelling::hotelling_resampled(&ipd, &ad, variant, draws, seed)?,
                None => hotelling::hotelling(&ipd, &ad, variant)?,
            };
            print_json(&result)?;
            eprintln!("{}", result.interpretation());
            Ok(0)
        }
        Command::Fit {
            common,
            outcome,
            weights,
            plot: out,
        } => {
            let (ipd, ad) = common.load()?;
            let verdict = hull::check_in_hull(&ipd, &ad)?;
            if verdict.status != HullStatus::Interior {
                eprintln!("error: {}", Error::NotInterior(Box::new(verdict.clone())));
                return Ok(verdict.process_exit_code());
            }
            let result = fit::fit_maic(&ipd, &ad, &FitOptions::default())?;
            if let Some(path) = &outcome {
                let y = data::load_outcome(path, common.format()?, &ipd)?;
                eprintln!("weighted outcome mean: {}", fit::weighted_outcome_mean(&y, &result.weights)?);
            }
            if let Some(path) = weights {
                data::write_weights_csv(path, &result.weights)?;
            }
            if let Some(path) = out {
                plot::render_scatter_with_weights(&ipd, &ad, &result, path)?;
            }
            print_json(&result)?;
            Ok(0)
        }
        Command::Altweights {
            common,
            metric,
            weights,
            basis,
        } => {
            let (ipd, ad) = common.load()?;
            let set = match alt_weights::alternative_weights(&ipd, &ad, metric.into()) {
                Err(Error::Infeasible(verdict)) => {
                    eprintln!("error: {}", Error::Infeasible(verdict.clone()));
                    return Ok(verdict.process_exit_code());
                }
                other => other?,
            };
            if let Some(path) = weights {
                data::write_weights_csv(path, &set.rescaled())?;
            }
            if let Some(path) = basis {
                write_json(&set.basis, &path)?;
            }
            print_json(&report::AltWeightSummary::from_set(&set)?)?;
            Ok(0)
        }
        Command::Report {
            common,
            outcome,
            resample,
            seed,
            altweights,
            metric,
            out,
            no_timestamp,
        } => {
            let options = PipelineOptions {
                format: common.format()?,
                outcome,
                variances: common.variances,
                resample,
                seed,
                altweights,
                metric: metric.into(),
                out_dir: out,
                record_timestamp: !no_timestamp,
            };
            let result = report::run_pipeline(&common.ipd, &common.ad, &options)?;
            if let Some(err) = &result.error {
                eprintln!("warning: {:?} stage failed: {}", err.stage, err.message);
            }
            print_json(&result)?;
            Ok(result.exit_code)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_INPUT_ERROR as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT_ERROR as u8)
        }
    }
}
