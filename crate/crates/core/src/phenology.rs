//! Domain types for phenological count observations and the validation and
//! aggregation rules that turn a raw record set into a trustworthy season
//! ledger.
//!
//! The unit of data is a [`CountRecord`]: one dated count of one object type
//! (buds, blossoms, cherries, or harvest crop categories) on one branch or
//! whole tree. A [`SeasonLedger`] is the validated, deduplicated collection of
//! such records for a single season. Validation never panics on bad field
//! data; problems are reported as [`Violation`] values so that callers can
//! decide what to surface and what to drop.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved branch identifier for whole-tree harvest totals.
///
/// Trees are only counted in full at harvest; storing those totals under a
/// reserved branch id keeps them in the same ledger as the branch records.
pub const WHOLE_TREE: &str = "WHOLE_TREE";

/// Absolute tolerance for crop-weight consistency checks, in kilograms.
/// Input weights are two-decimal kilograms, so this is lossless.
pub const WEIGHT_TOLERANCE_KG: f64 = 1e-9;

/// Errors raised by phenology constructors and lookups.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PhenologyError {
    #[error("BBCH code {0} outside [0, 99]")]
    BbchOutOfRange(i64),
    #[error("unknown object type {0:?}")]
    UnknownObjectType(String),
    #[error("branch not found: tree {tree_id:?}, branch {branch_id:?}")]
    BranchNotFound { tree_id: String, branch_id: String },
}

/// A BBCH growth-stage code in `[0, 99]`, totally ordered by numeric value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BbchStage(u8);

impl BbchStage {
    pub fn new(code: i64) -> Result<Self, PhenologyError> {
        if (0..=99).contains(&code) {
            Ok(BbchStage(code as u8))
        } else {
            Err(PhenologyError::BbchOutOfRange(code))
        }
    }

    pub fn code(&self) -> u8 {
        self.0
    }

    /// True once the fruit is ripe enough that the next observation is a
    /// harvest count rather than a developmental count.
    pub fn is_harvest_ripe(&self) -> bool {
        self.0 >= 87
    }

    /// Human-readable stage name for the codes used in sweet-cherry
    /// campaigns, with principal-stage fallbacks for the rest of the scale.
    pub fn description(&self) -> &'static str {
        match self.0 {
            51 => "Swelling",
            53 => "Bud burst",
            56 => "Open cluster",
            60 => "First bloom",
            65 => "Full bloom",
            69 => "End of flowering",
            75 => "Development of fruit",
            81 => "Beginning of fruit coloring",
            85 => "Advanced fruit coloring",
            89 => "Ripe for harvest",
            0..=9 => "Bud development",
            10..=19 => "Leaf development",
            20..=39 => "Shoot development",
            40..=49 => "Vegetative propagation",
            50..=59 => "Inflorescence emergence",
            61..=68 => "Flowering",
            70..=79 => "Development of fruit",
            80..=88 => "Ripening",
            _ => "Senescence",
        }
    }
}

impl fmt::Display for BbchStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// What was counted: a developmental object or a harvest crop category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ObjectType {
    Bud,
    Blossom,
    Cherry,
    GoodCrops,
    BadCrops,
    TotalCrops,
}

impl ObjectType {
    pub const ALL: [ObjectType; 6] = [
        ObjectType::Bud,
        ObjectType::Blossom,
        ObjectType::Cherry,
        ObjectType::GoodCrops,
        ObjectType::BadCrops,
        ObjectType::TotalCrops,
    ];

    /// Developmental counts taken during the season (bud, blossom, cherry).
    pub fn is_developmental(&self) -> bool {
        matches!(
            self,
            ObjectType::Bud | ObjectType::Blossom | ObjectType::Cherry
        )
    }

    /// Harvest crop categories, only valid at the final observation of a
    /// branch or tree in a season.
    pub fn is_harvest(&self) -> bool {
        !self.is_developmental()
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectType::Bud => "bud",
            ObjectType::Blossom => "blossom",
            ObjectType::Cherry => "cherry",
            ObjectType::GoodCrops => "goodCrops",
            ObjectType::BadCrops => "badCrops",
            ObjectType::TotalCrops => "totalCrops",
        }
    }

    pub fn parse(s: &str) -> Result<Self, PhenologyError> {
        let trimmed = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(trimmed))
            .ok_or_else(|| PhenologyError::UnknownObjectType(trimmed.to_string()))
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One dated observation of one object type on one branch or tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub date: NaiveDate,
    /// Season year; campaign dates without an explicit year resolve into it.
    pub season: i32,
    pub bbch: BbchStage,
    pub tree_id: String,
    /// Branch identifier, or [`WHOLE_TREE`] for tree-level harvest totals.
    pub branch_id: String,
    pub branch_color: Option<String>,
    pub object_type: ObjectType,
    /// Count is stored signed so invalid inputs stay representable and get
    /// reported as violations instead of being silently rejected.
    pub object_count: i64,
    pub crop_weight_kg: Option<f64>,
}

impl CountRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            date: self.date,
            tree_id: self.tree_id.clone(),
            branch_id: self.branch_id.clone(),
            object_type: self.object_type,
        }
    }

    pub fn is_whole_tree(&self) -> bool {
        self.branch_id == WHOLE_TREE
    }
}

/// Uniqueness key of a ledger record.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub date: NaiveDate,
    pub tree_id: String,
    pub branch_id: String,
    pub object_type: ObjectType,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}",
            self.date, self.tree_id, self.branch_id, self.object_type
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

/// Closed set of validation and ingestion rules a record can violate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    NegativeCount,
    NegativeWeight,
    UnexpectedWeight,
    HarvestCountMismatch,
    HarvestWeightMismatch,
    MissingTotalCrops,
    DuplicateKey,
    PossibleMiscount,
    UnknownObjectType,
    MalformedRow,
    InvalidDate,
    InvalidNumber,
    BbchOutOfRange,
}

impl RuleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::NegativeCount => "negative_count",
            RuleId::NegativeWeight => "negative_weight",
            RuleId::UnexpectedWeight => "unexpected_weight",
            RuleId::HarvestCountMismatch => "harvest_count_mismatch",
            RuleId::HarvestWeightMismatch => "harvest_weight_mismatch",
            RuleId::MissingTotalCrops => "missing_total_crops",
            RuleId::DuplicateKey => "duplicate_key",
            RuleId::PossibleMiscount => "possible_miscount",
            RuleId::UnknownObjectType => "unknown_object_type",
            RuleId::MalformedRow => "malformed_row",
            RuleId::InvalidDate => "invalid_date",
            RuleId::InvalidNumber => "invalid_number",
            RuleId::BbchOutOfRange => "bbch_out_of_range",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A reported problem with the data. Violations are data, not failures:
/// operations that produce them always return normally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    pub rule: RuleId,
    pub message: String,
    pub offending_keys: Vec<String>,
}

impl Violation {
    pub fn error(rule: RuleId, message: impl Into<String>, keys: Vec<String>) -> Self {
        Violation {
            severity: Severity::Error,
            rule,
            message: message.into(),
            offending_keys: keys,
        }
    }

    pub fn warning(rule: RuleId, message: impl Into<String>, keys: Vec<String>) -> Self {
        Violation {
            severity: Severity::Warning,
            rule,
            message: message.into(),
            offending_keys: keys,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.severity, self.rule, self.message)?;
        if !self.offending_keys.is_empty() {
            write!(f, " [{}]", self.offending_keys.join(", "))?;
        }
        Ok(())
    }
}

/// True if any violation in the slice has error severity.
pub fn has_errors(violations: &[Violation]) -> bool {
    violations.iter().any(|v| v.severity == Severity::Error)
}

/// Check a single record against the per-record invariants.
///
/// Returns an empty list iff the record is valid. Group-level rules (harvest
/// sums, duplicates, count increases) are checked by [`build_ledger`].
pub fn validate_record(record: &CountRecord) -> Vec<Violation> {
    let mut violations = Vec::new();
    let keys = vec![record.key().to_string()];
    if record.object_count < 0 {
        violations.push(Violation::error(
            RuleId::NegativeCount,
            format!("negative count {}", record.object_count),
            keys.clone(),
        ));
    }
    if let Some(weight) = record.crop_weight_kg {
        if !record.object_type.is_harvest() {
            violations.push(Violation::error(
                RuleId::UnexpectedWeight,
                format!(
                    "crop weight given for developmental object type {}",
                    record.object_type
                ),
                keys.clone(),
            ));
        }
        if weight < 0.0 {
            violations.push(Violation::error(
                RuleId::NegativeWeight,
                format!("negative crop weight {weight} kg"),
                keys,
            ));
        }
    }
    violations
}

/// Check one harvest group (records sharing date, tree and branch) for
/// internal consistency: good + bad must equal total, in counts exactly and
/// in weights to [`WEIGHT_TOLERANCE_KG`] when all weights are present.
pub fn check_harvest_consistency(group: &[CountRecord]) -> Vec<Violation> {
    let mut violations = Vec::new();
    let good = group
        .iter()
        .find(|r| r.object_type == ObjectType::GoodCrops);
    let bad = group.iter().find(|r| r.object_type == ObjectType::BadCrops);
    let total = group
        .iter()
        .find(|r| r.object_type == ObjectType::TotalCrops);

    let (good, bad) = match (good, bad) {
        (Some(g), Some(b)) => (g, b),
        _ => return violations,
    };
    let keys: Vec<String> = [Some(good), Some(bad), total]
        .iter()
        .flatten()
        .map(|r| r.key().to_string())
        .collect();

    let total = match total {
        Some(t) => t,
        None => {
            violations.push(Violation::error(
                RuleId::MissingTotalCrops,
                "harvest group has goodCrops and badCrops but no totalCrops",
                keys,
            ));
            return violations;
        }
    };

    if good.object_count + bad.object_count != total.object_count {
        violations.push(Violation::error(
            RuleId::HarvestCountMismatch,
            format!(
                "count mismatch: goodCrops {} + badCrops {} != totalCrops {}",
                good.object_count, bad.object_count, total.object_count
            ),
            keys.clone(),
        ));
    }
    if let (Some(gw), Some(bw), Some(tw)) = (
        good.crop_weight_kg,
        bad.crop_weight_kg,
        total.crop_weight_kg,
    ) {
        if (gw + bw - tw).abs() > WEIGHT_TOLERANCE_KG {
            violations.push(Violation::error(
                RuleId::HarvestWeightMismatch,
                format!("weight mismatch: {gw} + {bw} != {tw} kg"),
                keys,
            ));
        }
    }
    violations
}

/// One point of a branch trajectory: a developmental count or the harvest
/// total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub date: NaiveDate,
    pub bbch: BbchStage,
    pub object_type: ObjectType,
    pub count: i64,
}

/// Validated, deduplicated record set for one season.
///
/// Records are sorted by `(tree_id, branch_id, date, object_type)` and unique
/// on `(date, tree_id, branch_id, object_type)`. Construct with
/// [`build_ledger`]; the struct itself offers only read access, so a ledger
/// can be shared freely across threads.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeasonLedger {
    records: Vec<CountRecord>,
}

impl SeasonLedger {
    pub fn records(&self) -> &[CountRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Season year of the ledger's records, if any.
    pub fn season(&self) -> Option<i32> {
        self.records.first().map(|r| r.season)
    }

    /// Distinct `(tree_id, branch_id)` pairs in sorted order, including the
    /// whole-tree pseudo-branch when present.
    pub fn branches(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for r in &self.records {
            let pair = (r.tree_id.clone(), r.branch_id.clone());
            if out.last() != Some(&pair) && !out.contains(&pair) {
                out.push(pair);
            }
        }
        out
    }

    pub fn records_for(&self, tree_id: &str, branch_id: &str) -> Vec<&CountRecord> {
        self.records
            .iter()
            .filter(|r| r.tree_id == tree_id && r.branch_id == branch_id)
            .collect()
    }

    /// Latest observation date carrying harvest object types for one branch.
    pub fn harvest_date(&self, tree_id: &str, branch_id: &str) -> Option<NaiveDate> {
        self.records_for(tree_id, branch_id)
            .iter()
            .filter(|r| r.object_type.is_harvest())
            .map(|r| r.date)
            .max()
    }

    /// Ordered developmental series for one branch plus its totalCrops
    /// harvest point; the good/bad split is excluded. Dates are strictly
    /// increasing.
    pub fn trajectory(
        &self,
        tree_id: &str,
        branch_id: &str,
    ) -> Result<Vec<TrajectoryPoint>, PhenologyError> {
        let records = self.records_for(tree_id, branch_id);
        if records.is_empty() {
            return Err(PhenologyError::BranchNotFound {
                tree_id: tree_id.to_string(),
                branch_id: branch_id.to_string(),
            });
        }
        let mut by_date: BTreeMap<NaiveDate, TrajectoryPoint> = BTreeMap::new();
        for r in &records {
            if !r.object_type.is_developmental() {
                continue;
            }
            by_date
                .entry(r.date)
                .and_modify(|p| {
                    // Mixed object types on one campaign day: counts add up,
                    // the later stage labels the point.
                    p.count += r.object_count;
                    if r.bbch > p.bbch {
                        p.bbch = r.bbch;
                        p.object_type = r.object_type;
                    }
                })
                .or_insert(TrajectoryPoint {
                    date: r.date,
                    bbch: r.bbch,
                    object_type: r.object_type,
                    count: r.object_count,
                });
        }
        for r in &records {
            if r.object_type == ObjectType::TotalCrops {
                by_date.insert(
                    r.date,
                    TrajectoryPoint {
                        date: r.date,
                        bbch: r.bbch,
                        object_type: r.object_type,
                        count: r.object_count,
                    },
                );
            }
        }
        Ok(by_date.into_values().collect())
    }

    /// Per-tree date series: for each tree and date, the sum of branch
    /// trajectory values (developmental counts plus totalCrops harvest
    /// points) over the branches measured that date. Whole-tree records are
    /// excluded so branch sums are not double counted.
    pub fn aggregate_by_tree(&self) -> BTreeMap<String, Vec<(NaiveDate, i64)>> {
        let mut sums: BTreeMap<String, BTreeMap<NaiveDate, i64>> = BTreeMap::new();
        for (tree_id, branch_id) in self.branches() {
            if branch_id == WHOLE_TREE {
                continue;
            }
            let points = self
                .trajectory(&tree_id, &branch_id)
                .expect("branch listed by branches() must resolve");
            let tree = sums.entry(tree_id).or_default();
            for p in points {
                *tree.entry(p.date).or_insert(0) += p.count;
            }
        }
        sums.into_iter()
            .map(|(tree, by_date)| (tree, by_date.into_iter().collect()))
            .collect()
    }
}

/// Build a validated ledger out of raw records.
///
/// Records failing per-record validation are dropped with error violations.
/// Duplicate keys keep the first occurrence and produce a warning. Harvest
/// groups failing the good/bad/total consistency checks are dropped as a
/// group so every ledger that comes out of here satisfies its invariants;
/// the violations list says exactly what was removed. Count increases
/// between cherry-stage observations are reported as warnings and kept:
/// they happen in real field data through miscounts.
pub fn build_ledger(records: Vec<CountRecord>) -> (SeasonLedger, Vec<Violation>) {
    let mut violations = Vec::new();

    // Per-record invariants.
    let mut kept: Vec<CountRecord> = Vec::with_capacity(records.len());
    for record in records {
        let record_violations = validate_record(&record);
        if record_violations.is_empty() {
            kept.push(record);
        } else {
            violations.extend(record_violations);
        }
    }

    // Deduplicate on key, first occurrence wins.
    kept.sort_by(|a, b| {
        (&a.tree_id, &a.branch_id, a.date, a.object_type).cmp(&(
            &b.tree_id,
            &b.branch_id,
            b.date,
            b.object_type,
        ))
    });
    let mut deduped: Vec<CountRecord> = Vec::with_capacity(kept.len());
    for record in kept {
        if deduped.last().map(|prev: &CountRecord| prev.key()) == Some(record.key()) {
            violations.push(Violation::warning(
                RuleId::DuplicateKey,
                "duplicate record key, keeping first occurrence",
                vec![record.key().to_string()],
            ));
        } else {
            deduped.push(record);
        }
    }

    // Harvest-group consistency; inconsistent groups are dropped whole.
    let mut bad_groups: Vec<(NaiveDate, String, String)> = Vec::new();
    {
        let mut groups: BTreeMap<(NaiveDate, &str, &str), Vec<&CountRecord>> = BTreeMap::new();
        for r in deduped.iter().filter(|r| r.object_type.is_harvest()) {
            groups
                .entry((r.date, &r.tree_id, &r.branch_id))
                .or_default()
                .push(r);
        }
        for ((date, tree, branch), group) in groups {
            let owned: Vec<CountRecord> = group.into_iter().cloned().collect();
            let group_violations = check_harvest_consistency(&owned);
            if has_errors(&group_violations) {
                bad_groups.push((date, tree.to_string(), branch.to_string()));
            }
            violations.extend(group_violations);
        }
    }
    deduped.retain(|r| {
        !(r.object_type.is_harvest()
            && bad_groups
                .iter()
                .any(|(d, t, b)| *d == r.date && *t == r.tree_id && *b == r.branch_id))
    });

    let ledger = SeasonLedger { records: deduped };
    violations.extend(miscount_warnings(&ledger));
    (ledger, violations)
}

/// Late-season plausibility check: between the first cherry-stage
/// observation and harvest, a count increase on the same branch is flagged
/// as a possible miscount. The harvest total itself is exempt since branch
/// totals are recounted fruit by fruit at harvest.
fn miscount_warnings(ledger: &SeasonLedger) -> Vec<Violation> {
    let mut warnings = Vec::new();
    for (tree_id, branch_id) in ledger.branches() {
        let cherries: Vec<&CountRecord> = ledger
            .records_for(&tree_id, &branch_id)
            .into_iter()
            .filter(|r| r.object_type == ObjectType::Cherry)
            .collect();
        for pair in cherries.windows(2) {
            if pair[1].object_count > pair[0].object_count {
                warnings.push(Violation::warning(
                    RuleId::PossibleMiscount,
                    format!(
                        "cherry count rose from {} to {} after fruit set",
                        pair[0].object_count, pair[1].object_count
                    ),
                    vec![pair[0].key().to_string(), pair[1].key().to_string()],
                ));
            }
        }
    }
    warnings
}
