//! Command-line front end: validate ledgers, fit calibrations, forecast
//! harvests, simulate seasons and render figures.
//!
//! Exit codes: 0 clean, 1 domain failure (error violations, nothing
//! fittable, unknown stage, empty plot input), 2 usage or I/O failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use phenoyield::forecast::{
    calibrate, forecast_branch, forecast_tree, CalibrationTable, Forecast, ForecastError,
    ForecastScope, TreeMode,
};
use phenoyield::ingest::{emit_csv, parse_csv_str, parse_flex_date};
use phenoyield::phenology::{build_ledger, has_errors, ObjectType, SeasonLedger, Violation};
use phenoyield::plot::{
    render_regression_grid, render_trajectory, render_tree_aggregate, PlotKind, PlotSpec,
};
use phenoyield::sim::{default_schedule, simulate_season, SimulationParams};

#[derive(Parser)]
#[command(
    name = "phenoyield",
    version,
    about = "Turn phenological count ledgers into yield calibrations and harvest forecasts"
)]
struct Cli {
    /// Report format for command output
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TreeModeArg {
    Sum,
    Whole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlotKindArg {
    Trajectory,
    TreeAggregate,
    RegressionGrid,
}

#[derive(Subcommand)]
enum Command {
    /// Check a ledger CSV; exit 0 only when no error-level violations remain
    Validate {
        /// Ledger CSV file
        input: PathBuf,
        /// Season year the campaign dates belong to
        #[arg(long)]
        season: i32,
    },
    /// Fit per-stage regressions against harvest counts and print the
    /// calibration table
    Fit {
        /// Ledger CSV file
        input: PathBuf,
        #[arg(long)]
        season: i32,
        /// Harvest target: totalCrops or goodCrops
        #[arg(long, default_value = "totalCrops")]
        target: String,
    },
    /// Forecast a harvest from a calibration file and a fresh count
    Predict {
        /// Calibration CSV file (as produced by `fit`)
        calibration: PathBuf,
        /// Stage date: ISO (2023-07-06) or campaign style (Jul-6)
        #[arg(long)]
        stage: String,
        /// Count, or comma-separated branch counts for a tree forecast
        #[arg(long, value_delimiter = ',', required = true)]
        count: Vec<f64>,
        /// Coverage level of the prediction interval
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Tree scaling mode; implied `sum` when several counts are given
        #[arg(long, value_enum)]
        tree_mode: Option<TreeModeArg>,
        /// Season the counts were taken in, to flag cross-season use
        #[arg(long)]
        season: Option<i32>,
        /// Mean fruit weight for a weight estimate, in kg per fruit
        #[arg(long)]
        fruit_weight_kg: Option<f64>,
    },
    /// Generate a synthetic season ledger CSV on standard output
    Simulate {
        /// Key-value params file; defaults apply when omitted
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        trees: u32,
        #[arg(long, default_value_t = 6)]
        branches: u32,
        /// Overrides the seed from the params file
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 2023)]
        season: i32,
    },
    /// Render a ledger figure as SVG
    Plot {
        /// Ledger CSV file
        input: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKindArg,
        #[arg(long)]
        season: i32,
        /// Output SVG path
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 900)]
        width: u32,
        #[arg(long, default_value_t = 600)]
        height: u32,
        /// Coverage level of regression-grid prediction bands
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Harvest target for the regression grid
        #[arg(long, default_value = "totalCrops")]
        target: String,
    },
}

/// A failed run: what to print and which exit code to use.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure {
            code: 2,
            message: message.to_string(),
        }
    }

    fn domain(message: impl ToString) -> Self {
        Failure {
            code: 1,
            message: message.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Validate { input, season } => cmd_validate(&input, season, cli.format),
        Command::Fit {
            input,
            season,
            target,
        } => cmd_fit(&input, season, &target, cli.format),
        Command::Predict {
            calibration,
            stage,
            count,
            level,
            tree_mode,
            season,
            fruit_weight_kg,
        } => cmd_predict(
            &calibration,
            &stage,
            &count,
            level,
            tree_mode,
            season,
            fruit_weight_kg,
            cli.format,
        ),
        Command::Simulate {
            params,
            trees,
            branches,
            seed,
            season,
        } => cmd_simulate(params.as_deref(), trees, branches, seed, season, cli.format),
        Command::Plot {
            input,
            kind,
            season,
            output,
            width,
            height,
            level,
            target,
        } => cmd_plot(&input, kind, season, &output, width, height, level, &target),
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))
}

fn load_ledger(path: &Path, season: i32) -> Result<(SeasonLedger, Vec<Violation>), Failure> {
    let text = read_file(path)?;
    let (records, mut violations) =
        parse_csv_str(&text, season).map_err(|e| Failure::usage(e.to_string()))?;
    let (ledger, build_violations) = build_ledger(records);
    violations.extend(build_violations);
    Ok((ledger, violations))
}

fn parse_target(target: &str) -> Result<ObjectType, Failure> {
    let parsed = ObjectType::parse(target)
        .map_err(|_| Failure::usage(format!("unknown target {target:?}")))?;
    if !matches!(parsed, ObjectType::TotalCrops | ObjectType::GoodCrops) {
        return Err(Failure::usage("target must be totalCrops or goodCrops"));
    }
    Ok(parsed)
}

fn print_violations(violations: &[Violation], format: Format) {
    match format {
        Format::Text => {
            for v in violations {
                println!("{v}");
            }
        }
        Format::Csv => {
            println!("severity,rule,message,offending_keys");
            let mut writer = csv::writer();
            for v in violations {
                writer.row(&[
                    v.severity.to_string(),
                    v.rule.to_string(),
                    v.message.clone(),
                    v.offending_keys.join("; "),
                ]);
            }
            print!("{}", writer.finish());
        }
        Format::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(violations).expect("violations serialize")
            );
        }
    }
}

fn cmd_validate(input: &Path, season: i32, format: Format) -> Result<u8, Failure> {
    let (_, violations) = load_ledger(input, season)?;
    if !(format == Format::Text && violations.is_empty()) {
        print_violations(&violations, format);
    }
    Ok(if has_errors(&violations) { 1 } else { 0 })
}

fn cmd_fit(input: &Path, season: i32, target: &str, format: Format) -> Result<u8, Failure> {
    let target = parse_target(target)?;
    let (ledger, violations) = load_ledger(input, season)?;
    for v in &violations {
        eprintln!("{v}");
    }
    let table = match calibrate(&ledger, target) {
        Ok(table) => table,
        Err(e @ ForecastError::NoTargetData(_)) => return Err(Failure::domain(e)),
        Err(e) => return Err(Failure::usage(e)),
    };
    for note in &table.notes {
        eprintln!("note: {note}");
    }
    if table.is_empty() {
        return Err(Failure::domain("no fittable stages"));
    }
    match format {
        Format::Text | Format::Csv => print!("{}", table.to_csv()),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&table).expect("calibration serializes")
        ),
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_predict(
    calibration: &Path,
    stage: &str,
    counts: &[f64],
    level: f64,
    tree_mode: Option<TreeModeArg>,
    obs_season: Option<i32>,
    fruit_weight_kg: Option<f64>,
    format: Format,
) -> Result<u8, Failure> {
    let text = read_file(calibration)?;
    let table = CalibrationTable::from_csv(&text).map_err(|e| Failure::usage(e.to_string()))?;
    let stage_date = parse_flex_date(stage, table.season)
        .map_err(|e| Failure::usage(format!("bad stage date: {e}")))?;

    let result = if counts.len() == 1 && tree_mode.is_none() {
        forecast_branch(&table, stage_date, counts[0], level)
    } else {
        let mode = match tree_mode.unwrap_or(TreeModeArg::Sum) {
            TreeModeArg::Sum => TreeMode::SumOfBranches,
            TreeModeArg::Whole => TreeMode::WholeTree,
        };
        forecast_tree(&table, stage_date, counts, mode, level)
    };
    let mut forecast = match result {
        Ok(forecast) => forecast,
        Err(e @ ForecastError::UnknownStage { .. }) => return Err(Failure::domain(e)),
        Err(e) => return Err(Failure::usage(e)),
    };

    if let Some(season) = obs_season {
        if season != table.season {
            forecast.annotations.push(format!(
                "cross-season application: calibration from {} applied to {} counts",
                table.season, season
            ));
        }
    }
    if let Some(weight) = fruit_weight_kg {
        forecast = forecast.with_mean_fruit_weight(weight);
    }

    print_forecast(&forecast, format);
    Ok(0)
}

fn print_forecast(forecast: &Forecast, format: Format) {
    match format {
        Format::Text => {
            println!(
                "forecast: {:.2} fruit ({:.0}% interval {:.2} to {:.2})",
                forecast.point,
                forecast.level * 100.0,
                forecast.lower,
                forecast.upper
            );
            println!("stage: {}", forecast.stage_used);
            println!(
                "scope: {}",
                match forecast.scope {
                    ForecastScope::Branch => "branch",
                    ForecastScope::Tree => "tree",
                }
            );
            if let Some(kg) = forecast.weight_estimate_kg {
                println!("weight estimate: {kg:.3} kg");
            }
            for a in &forecast.annotations {
                println!("note: {a}");
            }
        }
        Format::Csv => {
            println!(
                "point,lower,upper,level,stage_date,bbch,scope,weight_estimate_kg,annotations"
            );
            let mut writer = csv::writer();
            writer.row(&[
                forecast.point.to_string(),
                forecast.lower.to_string(),
                forecast.upper.to_string(),
                forecast.level.to_string(),
                forecast.stage_used.date.to_string(),
                forecast.stage_used.bbch.to_string(),
                format!("{:?}", forecast.scope).to_lowercase(),
                forecast
                    .weight_estimate_kg
                    .map(|w| w.to_string())
                    .unwrap_or_default(),
                forecast.annotations.join("; "),
            ]);
            print!("{}", writer.finish());
        }
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(forecast).expect("forecast serializes")
        ),
    }
}

fn cmd_simulate(
    params_path: Option<&Path>,
    trees: u32,
    branches: u32,
    seed: Option<u64>,
    season: i32,
    format: Format,
) -> Result<u8, Failure> {
    let mut params = match params_path {
        Some(path) => {
            let text = read_file(path)?;
            SimulationParams::from_key_value(&text).map_err(|e| Failure::usage(e.to_string()))?
        }
        None => SimulationParams::default(),
    };
    if let Some(seed) = seed {
        params.seed = seed;
    }
    let schedule = default_schedule(season);
    let ledger = simulate_season(&params, trees, branches, &schedule)
        .map_err(|e| Failure::usage(e.to_string()))?;
    match format {
        Format::Text | Format::Csv => print!("{}", emit_csv(&ledger)),
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(ledger.records()).expect("records serialize")
        ),
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_plot(
    input: &Path,
    kind: PlotKindArg,
    season: i32,
    output: &Path,
    width: u32,
    height: u32,
    level: f64,
    target: &str,
) -> Result<u8, Failure> {
    let (ledger, violations) = load_ledger(input, season)?;
    for v in &violations {
        eprintln!("{v}");
    }
    let spec = PlotSpec {
        kind: match kind {
            PlotKindArg::Trajectory => PlotKind::Trajectory,
            PlotKindArg::TreeAggregate => PlotKind::TreeAggregate,
            PlotKindArg::RegressionGrid => PlotKind::RegressionGrid,
        },
        width,
        height,
        level,
    };
    let svg = match kind {
        PlotKindArg::Trajectory => render_trajectory(&ledger, &spec),
        PlotKindArg::TreeAggregate => render_tree_aggregate(&ledger, &spec),
        PlotKindArg::RegressionGrid => {
            let target = parse_target(target)?;
            let table = match calibrate(&ledger, target) {
                Ok(table) => table,
                Err(e @ ForecastError::NoTargetData(_)) => return Err(Failure::domain(e)),
                Err(e) => return Err(Failure::usage(e)),
            };
            if table.is_empty() {
                return Err(Failure::domain("no fittable stages"));
            }
            render_regression_grid(&ledger, &table, &spec)
        }
    }
    .map_err(|e| Failure::domain(e.to_string()))?;
    fs::write(output, svg)
        .map_err(|e| Failure::usage(format!("cannot write {}: {e}", output.display())))?;
    eprintln!("wrote {}", output.display());
    Ok(0)
}

/// Minimal CSV row writer for report output; quotes only when needed.
mod csv {
    pub struct Writer {
        out: String,
    }

    pub fn writer() -> Writer {
        Writer { out: String::new() }
    }

    impl Writer {
        pub fn row(&mut self, fields: &[String]) {
            let encoded: Vec<String> = fields
                .iter()
                .map(|f| {
                    if f.contains([',', '"', '\n']) {
                        format!("\"{}\"", f.replace('"', "\"\""))
                    } else {
                        f.clone()
                    }
                })
                .collect();
            self.out.push_str(&encoded.join(","));
            self.out.push('\n');
        }

        pub fn finish(self) -> String {
            self.out
        }
    }
}
