//! Stage-indexed yield calibration and forecasting.
//!
//! A calibration regresses, for every observation day of a season, the
//! branch counts taken that day against the branches' harvest totals. The
//! per-stage fits go into a [`CalibrationTable`] which can then turn a new
//! count into a harvest forecast with a prediction interval, and rank the
//! observation days under the earliness-versus-risk trade-off.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phenology::{BbchStage, ObjectType, SeasonLedger, WHOLE_TREE};
use crate::regression::{
    fit_ols, p_value_band, predict_with_interval, Fit, RegressionError, SignificanceBand,
};

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("no target data: ledger has no {0} records on any branch")]
    NoTargetData(ObjectType),
    #[error("no calibration for stage {stage}; available: {}", format_dates(.available))]
    UnknownStage {
        stage: NaiveDate,
        available: Vec<NaiveDate>,
    },
    #[error("branch counts must not be empty")]
    EmptyCounts,
    #[error("no weight data: no totalCrops record carries both a count and a weight")]
    NoWeightData,
    #[error("bad calibration file: {0}")]
    CalibrationFormat(String),
    #[error(transparent)]
    Regression(#[from] RegressionError),
}

fn format_dates(dates: &[NaiveDate]) -> String {
    dates
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Identity of one measurement campaign day: its date plus the dominant
/// growth stage and object type counted that day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageKey {
    pub date: NaiveDate,
    pub bbch: BbchStage,
    pub object_type: ObjectType,
    pub label: String,
}

impl StageKey {
    pub fn new(date: NaiveDate, bbch: BbchStage, object_type: ObjectType) -> Self {
        StageKey {
            date,
            bbch,
            object_type,
            label: bbch.description().to_string(),
        }
    }
}

impl fmt::Display for StageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (BBCH {}, {})", self.date, self.bbch, self.label)
    }
}

/// Per-stage regression summary stored in a calibration table.
///
/// `interval` is present for fits computed by this toolkit; tables typed in
/// from published summaries carry only slope/intercept/R²/n, and forecasts
/// from them are point-only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: Option<f64>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub interval: Option<IntervalStats>,
}

/// Sufficient statistics for prediction intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalStats {
    pub residual_se: f64,
    pub sxx: f64,
    pub mean_x: f64,
    pub mean_y: f64,
}

impl From<Fit<f64>> for StageFit {
    fn from(fit: Fit<f64>) -> Self {
        StageFit {
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            p_value: fit.p_value,
            n: fit.n,
            interval: Some(IntervalStats {
                residual_se: fit.residual_se,
                sxx: fit.sxx,
                mean_x: fit.mean_x,
                mean_y: fit.mean_y,
            }),
        }
    }
}

impl StageFit {
    pub fn point(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    fn to_fit(&self) -> Option<Fit<f64>> {
        self.interval.map(|iv| Fit {
            slope: self.slope,
            intercept: self.intercept,
            r_squared: self.r_squared,
            p_value: self.p_value,
            n: self.n,
            residual_se: iv.residual_se,
            sxx: iv.sxx,
            mean_x: iv.mean_x,
            mean_y: iv.mean_y,
        })
    }

    pub fn band(&self) -> Option<SignificanceBand> {
        self.p_value.map(p_value_band)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub stage: StageKey,
    pub fit: StageFit,
}

/// Stage-indexed calibration for one season and one harvest target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub season: i32,
    pub target: ObjectType,
    /// Entries in date order, one per fittable measurement day.
    pub entries: Vec<CalibrationEntry>,
    /// Stages that could not be fitted and why.
    pub notes: Vec<String>,
}

impl CalibrationTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry_for_date(&self, date: NaiveDate) -> Option<&CalibrationEntry> {
        self.entries.iter().find(|e| e.stage.date == date)
    }

    pub fn stage_dates(&self) -> Vec<NaiveDate> {
        self.entries.iter().map(|e| e.stage.date).collect()
    }
}

/// One branch's `(stage count, harvest count)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedObservation {
    pub tree_id: String,
    pub branch_id: String,
    pub x: f64,
    pub y: f64,
}

/// Pair each branch's developmental count on the stage's date with its
/// harvest count of the target type.
///
/// Deletion is pairwise-complete: a branch missing either side (it was
/// skipped that day, pruned, or never harvested) is simply omitted, so
/// different stages may regress over different branch subsets. Whole-tree
/// records never pair (trees are only counted at harvest).
pub fn pair_stage_with_harvest(
    ledger: &SeasonLedger,
    stage: &StageKey,
    target: ObjectType,
) -> Vec<PairedObservation> {
    let mut pairs = Vec::new();
    for (tree_id, branch_id) in ledger.branches() {
        if branch_id == WHOLE_TREE {
            continue;
        }
        let records = ledger.records_for(&tree_id, &branch_id);
        let stage_count: Option<i64> = {
            let counts: Vec<i64> = records
                .iter()
                .filter(|r| r.date == stage.date && r.object_type.is_developmental())
                .map(|r| r.object_count)
                .collect();
            if counts.is_empty() {
                None
            } else {
                Some(counts.iter().sum())
            }
        };
        let harvest_date = ledger.harvest_date(&tree_id, &branch_id);
        let harvest_count = harvest_date.and_then(|d| {
            records
                .iter()
                .find(|r| r.date == d && r.object_type == target)
                .map(|r| r.object_count)
        });
        if let (Some(x), Some(y)) = (stage_count, harvest_count) {
            pairs.push(PairedObservation {
                tree_id,
                branch_id,
                x: x as f64,
                y: y as f64,
            });
        }
    }
    pairs
}

/// Collect the measurement campaign days of a ledger: every date carrying
/// developmental counts, keyed by the modal growth stage and object type
/// counted that day.
pub fn stage_keys(ledger: &SeasonLedger) -> Vec<StageKey> {
    let mut by_date: BTreeMap<NaiveDate, BTreeMap<(BbchStage, ObjectType), usize>> =
        BTreeMap::new();
    for r in ledger.records() {
        if r.object_type.is_developmental() && r.branch_id != WHOLE_TREE {
            *by_date
                .entry(r.date)
                .or_default()
                .entry((r.bbch, r.object_type))
                .or_insert(0) += 1;
        }
    }
    by_date
        .into_iter()
        .map(|(date, tallies)| {
            let ((bbch, object_type), _) = tallies
                .into_iter()
                .max_by_key(|&((bbch, ty), count)| (count, bbch, ty))
                .expect("date present implies at least one tally");
            StageKey::new(date, bbch, object_type)
        })
        .collect()
}

/// Build the stage-indexed calibration of a season ledger against a harvest
/// target (`totalCrops` by default, `goodCrops` for sellable yield).
///
/// Each measurement day with at least three complete pairs gets a fit; days
/// with fewer are skipped with a note, as are days where every branch shows
/// the same count.
pub fn calibrate(
    ledger: &SeasonLedger,
    target: ObjectType,
) -> Result<CalibrationTable, ForecastError> {
    if !matches!(target, ObjectType::TotalCrops | ObjectType::GoodCrops) {
        return Err(ForecastError::Domain(
            "calibration target must be totalCrops or goodCrops",
        ));
    }
    if !ledger.records().iter().any(|r| r.object_type == target) {
        return Err(ForecastError::NoTargetData(target));
    }
    let season = ledger.season().unwrap_or(0);

    let mut entries = Vec::new();
    let mut notes = Vec::new();
    for stage in stage_keys(ledger) {
        let pairs = pair_stage_with_harvest(ledger, &stage, target);
        if pairs.len() < 3 {
            notes.push(format!(
                "skipped {}: only {} complete branch pairs (need 3)",
                stage.date,
                pairs.len()
            ));
            continue;
        }
        let points: Vec<(f64, f64)> = pairs.iter().map(|p| (p.x, p.y)).collect();
        match fit_ols(&points) {
            Ok(fit) => entries.push(CalibrationEntry {
                stage,
                fit: fit.into(),
            }),
            Err(RegressionError::DegeneratePredictor) => {
                notes.push(format!(
                    "skipped {}: all branches counted the same value",
                    stage.date
                ));
            }
            Err(e) => return Err(e.into()),
        }
    }

    Ok(CalibrationTable {
        season,
        target,
        entries,
        notes,
    })
}

/// Scope of a forecast: a single branch or a whole tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastScope {
    Branch,
    Tree,
}

/// How to scale a branch-level calibration to a whole tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeMode {
    /// Forecast each branch and add up points and interval bounds. The
    /// summed interval ignores error cancellation across branches, so it is
    /// conservative.
    SumOfBranches,
    /// Apply the slope to the summed count, with the intercept multiplied by
    /// the number of branch units. Same point as summing for a linear fit,
    /// different interval.
    WholeTree,
}

/// A harvest forecast: point, interval at the stated coverage level, and
/// everything a reader needs to judge it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub stage_used: StageKey,
    pub scope: ForecastScope,
    pub weight_estimate_kg: Option<f64>,
    pub annotations: Vec<String>,
}

impl Forecast {
    /// Attach a weight estimate derived from a mean per-fruit weight.
    pub fn with_mean_fruit_weight(mut self, kg_per_fruit: f64) -> Self {
        self.weight_estimate_kg = Some(self.point * kg_per_fruit);
        self
    }
}

fn lookup_entry(
    cal: &CalibrationTable,
    stage_date: NaiveDate,
) -> Result<&CalibrationEntry, ForecastError> {
    cal.entry_for_date(stage_date)
        .ok_or_else(|| ForecastError::UnknownStage {
            stage: stage_date,
            available: cal.stage_dates(),
        })
}

/// Raw (possibly negative) prediction for one count, with annotations for
/// interval availability.
fn raw_branch_prediction(
    entry: &CalibrationEntry,
    count: f64,
    level: f64,
) -> Result<(f64, f64, f64, Vec<String>), ForecastError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(ForecastError::Domain("coverage level must lie in (0, 1)"));
    }
    let mut annotations = Vec::new();
    match entry.fit.to_fit() {
        Some(fit) => {
            let pred = predict_with_interval(&fit, count, level)?;
            if pred.degenerate {
                annotations.push(
                    "degenerate fit: zero residual variance, interval width is 0".to_string(),
                );
            }
            Ok((pred.point, pred.lower, pred.upper, annotations))
        }
        None => {
            let point = entry.fit.point(count);
            annotations
                .push("interval unavailable: calibration lacks residual statistics".to_string());
            Ok((point, point, point, annotations))
        }
    }
}

/// Clamp a forecast triple at zero; fruit counts cannot be negative, but a
/// silent clamp would hide calibration misuse, so the annotation keeps the
/// raw value visible.
fn clamp_non_negative(
    point: &mut f64,
    lower: &mut f64,
    upper: &mut f64,
    annotations: &mut Vec<String>,
) {
    if *point < 0.0 {
        annotations.push(format!("raw prediction {:.2} clamped to 0", point));
    }
    *point = point.max(0.0);
    *lower = lower.max(0.0);
    *upper = upper.max(0.0);
}

/// Forecast the harvest of one branch from its count at a calibrated stage.
pub fn forecast_branch(
    cal: &CalibrationTable,
    stage_date: NaiveDate,
    count: f64,
    level: f64,
) -> Result<Forecast, ForecastError> {
    if count < 0.0 {
        return Err(ForecastError::Domain("count must be non-negative"));
    }
    let entry = lookup_entry(cal, stage_date)?;
    let (mut point, mut lower, mut upper, mut annotations) =
        raw_branch_prediction(entry, count, level)?;
    clamp_non_negative(&mut point, &mut lower, &mut upper, &mut annotations);
    Ok(Forecast {
        point,
        lower,
        upper,
        level,
        stage_used: entry.stage.clone(),
        scope: ForecastScope::Branch,
        weight_estimate_kg: None,
        annotations,
    })
}

/// Forecast a whole tree from its branch counts at a calibrated stage.
pub fn forecast_tree(
    cal: &CalibrationTable,
    stage_date: NaiveDate,
    branch_counts: &[f64],
    mode: TreeMode,
    level: f64,
) -> Result<Forecast, ForecastError> {
    if branch_counts.is_empty() {
        return Err(ForecastError::EmptyCounts);
    }
    if branch_counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(ForecastError::Domain("counts must be finite and non-negative"));
    }
    let entry = lookup_entry(cal, stage_date)?;
    let mut annotations: Vec<String>;
    let (mut point, mut lower, mut upper);
    match mode {
        TreeMode::SumOfBranches => {
            point = 0.0;
            lower = 0.0;
            upper = 0.0;
            annotations = Vec::new();
            for &count in branch_counts {
                let branch = forecast_branch(cal, stage_date, count, level)?;
                point += branch.point;
                lower += branch.lower;
                upper += branch.upper;
                for a in branch.annotations {
                    if !annotations.contains(&a) {
                        annotations.push(a);
                    }
                }
            }
            annotations.push(format!(
                "sum over {} branches; interval bounds summed (conservative)",
                branch_counts.len()
            ));
        }
        TreeMode::WholeTree => {
            let units = branch_counts.len() as f64;
            let total: f64 = branch_counts.iter().sum();
            let (raw_point, raw_lower, raw_upper, mut notes) =
                raw_branch_prediction(entry, total, level)?;
            // The branch-level intercept enters once per branch unit.
            let shift = (units - 1.0) * entry.fit.intercept;
            point = raw_point + shift;
            lower = raw_lower + shift;
            upper = raw_upper + shift;
            notes.push(format!(
                "branch-level calibration extrapolated to tree scale (intercept x {})",
                branch_counts.len()
            ));
            annotations = notes;
            clamp_non_negative(&mut point, &mut lower, &mut upper, &mut annotations);
        }
    }
    Ok(Forecast {
        point,
        lower,
        upper,
        level,
        stage_used: entry.stage.clone(),
        scope: ForecastScope::Tree,
        weight_estimate_kg: None,
        annotations,
    })
}

/// Mean fruit weight over all weighted totalCrops records, in kilograms per
/// fruit: total weight divided by total count.
pub fn mean_fruit_weight(ledger: &SeasonLedger) -> Result<f64, ForecastError> {
    let mut total_count = 0_i64;
    let mut total_weight = 0.0_f64;
    for r in ledger.records() {
        if r.object_type == ObjectType::TotalCrops {
            if let Some(w) = r.crop_weight_kg {
                total_count += r.object_count;
                total_weight += w;
            }
        }
    }
    if total_count <= 0 {
        return Err(ForecastError::NoWeightData);
    }
    Ok(total_weight / total_count as f64)
}

/// A window of elevated loss risk on the BBCH axis, such as night frost
/// during flowering or drought during fruit growth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskWindow {
    pub label: String,
    pub bbch_range: (BbchStage, BbchStage),
    /// Ordinal severity; higher means a bigger expected hit to the count.
    pub severity: u8,
}

impl RiskWindow {
    pub fn new(label: &str, from: u8, to: u8, severity: u8) -> Self {
        RiskWindow {
            label: label.to_string(),
            bbch_range: (
                BbchStage::new(from as i64).expect("valid BBCH code"),
                BbchStage::new(to as i64).expect("valid BBCH code"),
            ),
            severity,
        }
    }

    /// A window still threatens a prediction made at `stage` if any part of
    /// it lies strictly after that stage.
    pub fn is_ahead_of(&self, stage: BbchStage) -> bool {
        self.bbch_range.1 > stage
    }
}

/// Default risk model: frost over flowering hits hardest (it can wipe a
/// season), drought over fruit growth is the lesser threat.
pub fn default_risk_windows() -> Vec<RiskWindow> {
    vec![
        RiskWindow::new("night frost during flowering", 60, 69, 2),
        RiskWindow::new("drought during fruit growth", 71, 85, 1),
    ]
}

/// Weights of the timepoint score
/// `fit * R² + early * earliness − risk * (severity mass ahead)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub fit: f64,
    pub early: f64,
    pub risk: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights {
            fit: 1.0,
            early: 0.5,
            risk: 0.5,
        }
    }
}

/// One ranked timepoint candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedStage {
    pub stage: StageKey,
    pub score: f64,
    pub rationale: String,
}

/// Score for one stage given its fit quality, normalized earliness and the
/// severity mass of risk windows still ahead.
pub fn stage_score(r_squared: f64, earliness: f64, risk_mass: f64, weights: &ScoreWeights) -> f64 {
    weights.fit * r_squared + weights.early * earliness - weights.risk * risk_mass
}

/// Rank the calibration's observation days for use as prediction timepoints.
///
/// The score trades fit quality against earliness and against the risk
/// windows still ahead of the stage; the result is a permutation of the
/// calibration entries, deterministic with ties broken by earlier date.
pub fn recommend_timepoints(
    cal: &CalibrationTable,
    risks: &[RiskWindow],
    weights: &ScoreWeights,
) -> Vec<RankedStage> {
    let dates: Vec<NaiveDate> = cal.stage_dates();
    let (first, last) = match (dates.first(), dates.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Vec::new(),
    };
    let span = (last - first).num_days().max(0) as f64;

    let mut ranked: Vec<RankedStage> = cal
        .entries
        .iter()
        .map(|entry| {
            let r_squared = entry.fit.r_squared.unwrap_or(0.0);
            let earliness = if span > 0.0 {
                (last - entry.stage.date).num_days() as f64 / span
            } else {
                0.0
            };
            let ahead: Vec<&RiskWindow> = risks
                .iter()
                .filter(|w| w.is_ahead_of(entry.stage.bbch))
                .collect();
            let risk_mass: f64 = ahead.iter().map(|w| w.severity as f64).sum();
            let score = stage_score(r_squared, earliness, risk_mass, weights);
            let risk_text = if ahead.is_empty() {
                "no risk windows ahead".to_string()
            } else {
                format!(
                    "risks ahead: {}",
                    ahead
                        .iter()
                        .map(|w| format!("{} (severity {})", w.label, w.severity))
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            };
            let rationale = format!(
                "R²={}, earliness {:.2}, {}",
                entry
                    .fit
                    .r_squared
                    .map(|r| format!("{r:.2}"))
                    .unwrap_or_else(|| "undefined".to_string()),
                earliness,
                risk_text
            );
            RankedStage {
                stage: entry.stage.clone(),
                score,
                rationale,
            }
        })
        .collect();

    ranked.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.stage.date.cmp(&b.stage.date))
    });
    ranked
}

/// Best-scoring stage before flowering starts (BBCH < 60): the early,
/// higher-uncertainty prediction timepoint.
pub fn best_pre_flowering(ranking: &[RankedStage]) -> Option<&RankedStage> {
    ranking.iter().find(|r| r.stage.bbch.code() < 60)
}

/// Earliest cherry-stage calibration entry: the first day the count has
/// settled after the fruit drops, so predictions from here on are robust.
pub fn earliest_post_drop_stage(cal: &CalibrationTable) -> Option<&CalibrationEntry> {
    cal.entries
        .iter()
        .find(|e| e.stage.object_type == ObjectType::Cherry || e.stage.bbch.code() >= 71)
}

// ---------------------------------------------------------------------------
// Calibration CSV format
// ---------------------------------------------------------------------------

/// Header of the calibration CSV. The first nine columns mirror a printed
/// regression table; the rest carry machine-precision statistics so a
/// reloaded calibration forecasts identically.
pub const CALIBRATION_COLUMNS: [&str; 18] = [
    "Date",
    "Object",
    "DevelopmentStage",
    "BBCH",
    "Slope",
    "Intercept",
    "R2",
    "PValue",
    "N",
    "Target",
    "SlopeExact",
    "InterceptExact",
    "R2Exact",
    "PExact",
    "ResidualSE",
    "Sxx",
    "MeanX",
    "MeanY",
];

impl CalibrationTable {
    /// Serialize in the printed-table-plus-machine-fields format.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
        writer
            .write_record(CALIBRATION_COLUMNS)
            .expect("writing to memory cannot fail");
        for entry in &self.entries {
            let fit = &entry.fit;
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let iv = fit.interval;
            writer
                .write_record([
                    entry.stage.date.format("%Y-%m-%d").to_string(),
                    entry.stage.object_type.to_string(),
                    entry.stage.label.clone(),
                    entry.stage.bbch.to_string(),
                    format!("{:.2}", fit.slope),
                    format!("{:.2}", fit.intercept),
                    fit.r_squared
                        .map(|r| format!("{r:.2}"))
                        .unwrap_or_else(|| "degenerate".to_string()),
                    fit.band()
                        .map(|b| b.label().to_string())
                        .unwrap_or_else(|| "degenerate".to_string()),
                    fit.n.to_string(),
                    self.target.to_string(),
                    fit.slope.to_string(),
                    fit.intercept.to_string(),
                    opt(fit.r_squared),
                    opt(fit.p_value),
                    opt(iv.map(|v| v.residual_se)),
                    opt(iv.map(|v| v.sxx)),
                    opt(iv.map(|v| v.mean_x)),
                    opt(iv.map(|v| v.mean_y)),
                ])
                .expect("writing to memory cannot fail");
        }
        String::from_utf8(writer.into_inner().expect("flush to memory"))
            .expect("csv output is valid utf-8")
    }

    /// Load a calibration CSV.
    ///
    /// Only the nine printed columns are required; that makes a table typed
    /// in from a published summary loadable. When the machine-precision
    /// columns are present they take priority, and interval statistics are
    /// restored so predictions come with intervals again.
    pub fn from_csv(text: &str) -> Result<Self, ForecastError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut rows = reader.records();
        let header = rows
            .next()
            .ok_or_else(|| ForecastError::CalibrationFormat("empty file".into()))?
            .map_err(|e| ForecastError::CalibrationFormat(e.to_string()))?;
        let names: Vec<String> = header.iter().map(|h| h.trim().to_string()).collect();
        let col = |name: &str| names.iter().position(|n| n.eq_ignore_ascii_case(name));
        let need = |name: &str| {
            col(name)
                .ok_or_else(|| ForecastError::CalibrationFormat(format!("missing column {name:?}")))
        };

        let idx_date = need("Date")?;
        let idx_object = need("Object")?;
        let idx_label = need("DevelopmentStage")?;
        let idx_bbch = need("BBCH")?;
        let idx_slope = need("Slope")?;
        let idx_intercept = need("Intercept")?;
        let idx_r2 = need("R2")?;
        let idx_n = need("N")?;
        let idx_target = col("Target");
        let idx_slope_exact = col("SlopeExact");
        let idx_intercept_exact = col("InterceptExact");
        let idx_r2_exact = col("R2Exact");
        let idx_p_exact = col("PExact");
        let idx_se = col("ResidualSE");
        let idx_sxx = col("Sxx");
        let idx_mean_x = col("MeanX");
        let idx_mean_y = col("MeanY");

        let mut entries = Vec::new();
        let mut target = ObjectType::TotalCrops;
        for (i, row) in rows.enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| ForecastError::CalibrationFormat(e.to_string()))?;
            let get = |idx: usize| row.get(idx).unwrap_or("").trim().to_string();
            let get_opt =
                |idx: Option<usize>| -> Option<String> { idx.map(&get).filter(|s| !s.is_empty()) };
            let bad =
                |what: &str| ForecastError::CalibrationFormat(format!("row {line}: bad {what}"));

            let date = NaiveDate::parse_from_str(&get(idx_date), "%Y-%m-%d")
                .map_err(|_| bad("date (expected YYYY-MM-DD)"))?;
            let object_type =
                ObjectType::parse(&get(idx_object)).map_err(|_| bad("object type"))?;
            let bbch = get(idx_bbch)
                .parse::<i64>()
                .ok()
                .and_then(|c| BbchStage::new(c).ok())
                .ok_or_else(|| bad("BBCH code"))?;
            let label = get(idx_label);
            let n = get(idx_n).parse::<usize>().map_err(|_| bad("n"))?;
            if n < 3 {
                return Err(bad("n (must be at least 3)"));
            }

            let parse_f64 = |s: &str, what: &str| {
                s.parse::<f64>().map_err(|_| {
                    ForecastError::CalibrationFormat(format!("row {line}: bad {what}"))
                })
            };
            let slope = match get_opt(idx_slope_exact) {
                Some(s) => parse_f64(&s, "SlopeExact")?,
                None => parse_f64(&get(idx_slope), "Slope")?,
            };
            let intercept = match get_opt(idx_intercept_exact) {
                Some(s) => parse_f64(&s, "InterceptExact")?,
                None => parse_f64(&get(idx_intercept), "Intercept")?,
            };
            let r_squared = match get_opt(idx_r2_exact) {
                Some(s) => Some(parse_f64(&s, "R2Exact")?),
                None => {
                    let printed = get(idx_r2);
                    if printed.is_empty() || printed == "degenerate" {
                        None
                    } else {
                        Some(parse_f64(&printed, "R2")?)
                    }
                }
            };
            let p_value = match get_opt(idx_p_exact) {
                Some(s) => Some(parse_f64(&s, "PExact")?),
                None => None,
            };
            let interval = match (
                get_opt(idx_se),
                get_opt(idx_sxx),
                get_opt(idx_mean_x),
                get_opt(idx_mean_y),
            ) {
                (Some(se), Some(sxx), Some(mx), Some(my)) => Some(IntervalStats {
                    residual_se: parse_f64(&se, "ResidualSE")?,
                    sxx: parse_f64(&sxx, "Sxx")?,
                    mean_x: parse_f64(&mx, "MeanX")?,
                    mean_y: parse_f64(&my, "MeanY")?,
                }),
                (None, None, None, None) => None,
                _ => {
                    return Err(ForecastError::CalibrationFormat(format!(
                        "row {line}: interval statistics must be all present or all absent"
                    )))
                }
            };
            if let Some(t) = get_opt(idx_target) {
                target = ObjectType::parse(&t).map_err(|_| {
                    ForecastError::CalibrationFormat(format!("row {line}: bad target"))
                })?;
            }

            entries.push(CalibrationEntry {
                stage: StageKey {
                    date,
                    bbch,
                    object_type,
                    label,
                },
                fit: StageFit {
                    slope,
                    intercept,
                    r_squared,
                    p_value,
                    n,
                    interval,
                },
            });
        }

        entries.sort_by_key(|e| e.stage.date);
        let season = entries.first().map(|e| e.stage.date.year()).unwrap_or(0);
        Ok(CalibrationTable {
            season,
            target,
            entries,
            notes: Vec::new(),
        })
    }
}
