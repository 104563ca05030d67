//! Synthetic branch-trajectory generator.
//!
//! A branch starts the season as a bud count and every later observation is
//! that count times a chain of survival and multiplication factors: the
//! flower/leaf bud split when clusters open, the blossoms-per-cluster burst
//! at bloom, fruit set and the fruit drops going into the first cherry
//! count, then a small attrition factor per remaining step (birds, losses).
//! An optional frost event multiplies the count at its stage.
//!
//! Because the model is multiplicative, the regression of any stage's count
//! against the harvest count has an exact analytic answer in the noiseless
//! case: slope equal to the survival product between stage and harvest
//! ([`expected_survival_slope`]), intercept zero, R² one. That makes
//! simulated seasons an independent oracle for the calibration pipeline.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::forecast::StageKey;
use crate::phenology::{build_ledger, BbchStage, CountRecord, ObjectType, SeasonLedger};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid parameter {name}: {message}")]
    InvalidParam { name: &'static str, message: String },
    #[error("empty schedule")]
    EmptySchedule,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("unknown stage {0}: not in the schedule")]
    UnknownStage(NaiveDate),
    #[error("bad params file: {0}")]
    Config(String),
}

/// Frost event: at the first scheduled stage at or past `stage`, the count
/// is multiplied by `1 − kill_fraction` and stays down from there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrostEvent {
    pub stage: BbchStage,
    pub kill_fraction: f64,
}

/// Parameters of the multiplicative survival model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationParams {
    /// Buds on the branch at the first observation.
    pub initial_buds: u32,
    /// Share of buds that are flower buds rather than leaf buds; applied
    /// when the clusters open.
    pub flower_bud_fraction: f64,
    /// Blossoms per opened cluster; the bloom-peak multiplier.
    pub blossoms_per_cluster: f64,
    /// Share of blossoms that set fruit.
    pub fruit_set_fraction: f64,
    /// One shedding fraction per fruit-drop event; all drops land before the
    /// first cherry count.
    pub drop_fractions: Vec<f64>,
    /// Per-step survival loss after the first cherry count (birds, losses).
    pub attrition_rate: f64,
    /// Share of the harvest that is sellable; splits totalCrops into
    /// goodCrops and badCrops.
    pub good_fraction: f64,
    /// Mean fruit weight used to emit harvest weights; 0 disables weights.
    pub fruit_weight_kg: f64,
    pub frost: Option<FrostEvent>,
    /// Standard deviation of additive count noise; 0 makes the run
    /// deterministic with counts equal to rounded expectations.
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SimulationParams {
    fn default() -> Self {
        SimulationParams {
            initial_buds: 175,
            flower_bud_fraction: 0.55,
            blossoms_per_cluster: 2.7,
            fruit_set_fraction: 0.30,
            drop_fractions: vec![0.20, 0.15],
            attrition_rate: 0.01,
            good_fraction: 0.6,
            fruit_weight_kg: 0.0087,
            frost: None,
            noise_sd: 0.0,
            seed: 42,
        }
    }
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), SimError> {
    if !(0.0..=1.0).contains(&value) || value.is_nan() {
        return Err(SimError::InvalidParam {
            name,
            message: format!("{value} is not a fraction in [0, 1]"),
        });
    }
    Ok(())
}

impl SimulationParams {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.initial_buds == 0 {
            return Err(SimError::InvalidParam {
                name: "initial_buds",
                message: "must be positive".into(),
            });
        }
        check_fraction("flower_bud_fraction", self.flower_bud_fraction)?;
        check_fraction("fruit_set_fraction", self.fruit_set_fraction)?;
        for &drop in &self.drop_fractions {
            check_fraction("drop_fractions", drop)?;
        }
        check_fraction("attrition_rate", self.attrition_rate)?;
        check_fraction("good_fraction", self.good_fraction)?;
        if let Some(frost) = &self.frost {
            check_fraction("frost_kill_fraction", frost.kill_fraction)?;
        }
        if !self.blossoms_per_cluster.is_finite() || self.blossoms_per_cluster <= 0.0 {
            return Err(SimError::InvalidParam {
                name: "blossoms_per_cluster",
                message: format!("{} must be a positive number", self.blossoms_per_cluster),
            });
        }
        if self.noise_sd < 0.0 || self.noise_sd.is_nan() {
            return Err(SimError::InvalidParam {
                name: "noise_sd",
                message: "must be non-negative".into(),
            });
        }
        if self.fruit_weight_kg < 0.0 || self.fruit_weight_kg.is_nan() {
            return Err(SimError::InvalidParam {
                name: "fruit_weight_kg",
                message: "must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Parse a plain `key = value` params file. Unknown keys are rejected,
    /// missing keys keep their defaults, `#` starts a comment.
    pub fn from_key_value(text: &str) -> Result<Self, SimError> {
        let mut params = SimulationParams::default();
        let mut frost_stage: Option<BbchStage> = None;
        let mut frost_kill: Option<f64> = None;
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SimError::Config(format!("line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad =
                |what: &str| SimError::Config(format!("line {}: bad {what}: {value:?}", i + 1));
            match key {
                "initial_buds" => {
                    params.initial_buds = value.parse().map_err(|_| bad("integer"))?
                }
                "flower_bud_fraction" => {
                    params.flower_bud_fraction = value.parse().map_err(|_| bad("number"))?
                }
                "blossoms_per_cluster" => {
                    params.blossoms_per_cluster = value.parse().map_err(|_| bad("number"))?
                }
                "fruit_set_fraction" => {
                    params.fruit_set_fraction = value.parse().map_err(|_| bad("number"))?
                }
                "drop_fractions" => {
                    params.drop_fractions = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("comma-separated numbers"))?
                }
                "attrition_rate" => {
                    params.attrition_rate = value.parse().map_err(|_| bad("number"))?
                }
                "good_fraction" => {
                    params.good_fraction = value.parse().map_err(|_| bad("number"))?
                }
                "fruit_weight_kg" => {
                    params.fruit_weight_kg = value.parse().map_err(|_| bad("number"))?
                }
                "frost_bbch" => {
                    let code: i64 = value.parse().map_err(|_| bad("integer"))?;
                    frost_stage =
                        Some(BbchStage::new(code).map_err(|_| bad("BBCH code in [0, 99]"))?)
                }
                "frost_kill_fraction" => {
                    frost_kill = Some(value.parse().map_err(|_| bad("number"))?)
                }
                "noise_sd" => params.noise_sd = value.parse().map_err(|_| bad("number"))?,
                "seed" => params.seed = value.parse().map_err(|_| bad("integer"))?,
                other => {
                    return Err(SimError::Config(format!(
                        "line {}: unknown key {other:?}",
                        i + 1
                    )))
                }
            }
        }
        params.frost = match (frost_stage, frost_kill) {
            (Some(stage), Some(kill_fraction)) => Some(FrostEvent {
                stage,
                kill_fraction,
            }),
            (None, None) => None,
            _ => {
                return Err(SimError::Config(
                    "frost_bbch and frost_kill_fraction must be given together".into(),
                ))
            }
        };
        Ok(params)
    }

    /// Parameters of one branch of a simulated season: a seed of its own and
    /// a bud count scaled by a seeded percentage, both drawn in a fixed
    /// order from the master stream so any branch can be re-derived.
    pub fn derive_for_branch(
        &self,
        branches_per_tree: u32,
        tree_number: u32,
        branch_number: u32,
    ) -> SimulationParams {
        let index = (tree_number - 1) * branches_per_tree + (branch_number - 1);
        let mut master = ChaCha12Rng::seed_from_u64(self.seed);
        let mut seed = 0;
        let mut scale_percent = 100;
        for _ in 0..=index {
            seed = master.random::<u64>();
            scale_percent = master.random_range(50..=150u32);
        }
        let scaled = (self.initial_buds as u64 * scale_percent as u64 + 50) / 100;
        SimulationParams {
            initial_buds: scaled.max(1) as u32,
            seed,
            ..self.clone()
        }
    }
}

/// Observation phase of a schedule entry, derived from its object type and
/// stage code.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    DormantBud,
    OpenCluster,
    Bloom,
    Fruit,
    Harvest,
}

fn phase_of(stage: &StageKey) -> Phase {
    if stage.bbch.is_harvest_ripe() {
        Phase::Harvest
    } else {
        match stage.object_type {
            ObjectType::Bud if stage.bbch.code() >= 53 => Phase::OpenCluster,
            ObjectType::Bud => Phase::DormantBud,
            ObjectType::Blossom => Phase::Bloom,
            _ => Phase::Fruit,
        }
    }
}

fn validate_schedule(schedule: &[StageKey]) -> Result<(), SimError> {
    if schedule.is_empty() {
        return Err(SimError::EmptySchedule);
    }
    for pair in schedule.windows(2) {
        if pair[1].date <= pair[0].date {
            return Err(SimError::InvalidSchedule(format!(
                "dates must be strictly ascending, got {} then {}",
                pair[0].date, pair[1].date
            )));
        }
    }
    let last = schedule.last().expect("non-empty");
    if phase_of(last) != Phase::Harvest {
        return Err(SimError::InvalidSchedule(format!(
            "schedule must end in a harvest stage (BBCH 87+), last is BBCH {}",
            last.bbch
        )));
    }
    if schedule[..schedule.len() - 1]
        .iter()
        .any(|s| phase_of(s) == Phase::Harvest)
    {
        return Err(SimError::InvalidSchedule(
            "harvest stage before the end of the schedule".into(),
        ));
    }
    Ok(())
}

/// Cumulative multiplicative factor in effect at each schedule index.
/// `expected count = initial_buds × factor[i]`.
fn cumulative_factors(params: &SimulationParams, schedule: &[StageKey]) -> Vec<f64> {
    let mut factors = Vec::with_capacity(schedule.len());
    let mut factor = 1.0;
    let mut cluster_applied = false;
    let mut bloom_applied = false;
    let mut fruit_applied = false;
    let mut frost_applied = false;

    for stage in schedule {
        let phase = phase_of(stage);
        if matches!(
            phase,
            Phase::OpenCluster | Phase::Bloom | Phase::Fruit | Phase::Harvest
        ) && !cluster_applied
        {
            factor *= params.flower_bud_fraction;
            cluster_applied = true;
        }
        if matches!(phase, Phase::Bloom | Phase::Fruit | Phase::Harvest) && !bloom_applied {
            factor *= params.blossoms_per_cluster;
            bloom_applied = true;
        }
        if matches!(phase, Phase::Fruit | Phase::Harvest) {
            if !fruit_applied {
                factor *= params.fruit_set_fraction;
                for &drop in &params.drop_fractions {
                    factor *= 1.0 - drop;
                }
                fruit_applied = true;
            } else {
                factor *= 1.0 - params.attrition_rate;
            }
        }
        if let Some(frost) = &params.frost {
            if !frost_applied && stage.bbch >= frost.stage {
                factor *= 1.0 - frost.kill_fraction;
                frost_applied = true;
            }
        }
        factors.push(factor);
    }
    factors
}

fn simulate_branch_records(
    params: &SimulationParams,
    schedule: &[StageKey],
    tree_id: &str,
    branch_id: &str,
    branch_color: Option<&str>,
) -> Vec<CountRecord> {
    let factors = cumulative_factors(params, schedule);
    let mut rng = ChaCha12Rng::seed_from_u64(params.seed);
    let noise = (params.noise_sd > 0.0)
        .then(|| Normal::new(0.0, params.noise_sd).expect("validated noise_sd"));
    let season = schedule[0].date.year();
    let buds = params.initial_buds as f64;

    let mut records = Vec::new();
    let mut make_record =
        |stage: &StageKey, object_type: ObjectType, count: i64, weight: Option<f64>| {
            records.push(CountRecord {
                date: stage.date,
                season,
                bbch: stage.bbch,
                tree_id: tree_id.to_string(),
                branch_id: branch_id.to_string(),
                branch_color: branch_color.map(str::to_string),
                object_type,
                object_count: count,
                crop_weight_kg: weight,
            });
        };

    for (stage, factor) in schedule.iter().zip(factors) {
        let expected = buds * factor;
        let count = match &noise {
            None => expected.round() as i64,
            Some(dist) => (expected + dist.sample(&mut rng)).round().max(0.0) as i64,
        };
        if phase_of(stage) == Phase::Harvest {
            let good = ((count as f64) * params.good_fraction).round() as i64;
            let bad = count - good;
            let weight_of = |c: i64| {
                (params.fruit_weight_kg > 0.0).then_some(c as f64 * params.fruit_weight_kg)
            };
            make_record(stage, ObjectType::GoodCrops, good, weight_of(good));
            make_record(stage, ObjectType::BadCrops, bad, weight_of(bad));
            make_record(stage, ObjectType::TotalCrops, count, weight_of(count));
        } else {
            make_record(stage, stage.object_type, count, None);
        }
    }
    records
}

/// Simulate one branch through the schedule. Deterministic for a given
/// params value; identical inputs give identical records.
pub fn simulate_branch(
    params: &SimulationParams,
    schedule: &[StageKey],
) -> Result<Vec<CountRecord>, SimError> {
    params.validate()?;
    validate_schedule(schedule)?;
    Ok(simulate_branch_records(
        params,
        schedule,
        "sim_1",
        "1s1",
        Some(BRANCH_COLORS[0]),
    ))
}

const BRANCH_COLORS: [&str; 6] = ["pink", "blue", "green", "yellow", "red", "white"];

/// Simulate a whole season: every branch of every tree runs the schedule
/// with its own derived seed and bud count (branches differ in size, which
/// is where the regression's predictor spread comes from).
pub fn simulate_season(
    params: &SimulationParams,
    n_trees: u32,
    n_branches: u32,
    schedule: &[StageKey],
) -> Result<SeasonLedger, SimError> {
    params.validate()?;
    validate_schedule(schedule)?;
    if n_trees == 0 {
        return Err(SimError::InvalidParam {
            name: "n_trees",
            message: "must be at least 1".into(),
        });
    }
    if n_branches == 0 {
        return Err(SimError::InvalidParam {
            name: "n_branches",
            message: "must be at least 1".into(),
        });
    }

    let mut records = Vec::new();
    for tree in 1..=n_trees {
        for branch in 1..=n_branches {
            let branch_params = params.derive_for_branch(n_branches, tree, branch);
            let tree_id = format!("sim_{tree}");
            let branch_id = format!("{tree}s{branch}");
            let color = BRANCH_COLORS[(branch as usize - 1) % BRANCH_COLORS.len()];
            records.extend(simulate_branch_records(
                &branch_params,
                schedule,
                &tree_id,
                &branch_id,
                Some(color),
            ));
        }
    }

    let (ledger, violations) = build_ledger(records);
    debug_assert!(
        !crate::phenology::has_errors(&violations),
        "simulated records must validate: {violations:?}"
    );
    Ok(ledger)
}

/// Product of all multiplicative factors applied between `stage_date` and
/// harvest in the noiseless model — the exact slope a noiseless simulated
/// season regresses to at that stage.
pub fn expected_survival_slope(
    params: &SimulationParams,
    schedule: &[StageKey],
    stage_date: NaiveDate,
) -> Result<f64, SimError> {
    validate_schedule(schedule)?;
    let index = schedule
        .iter()
        .position(|s| s.date == stage_date)
        .ok_or(SimError::UnknownStage(stage_date))?;
    let factors = cumulative_factors(params, schedule);
    Ok(factors[schedule.len() - 1] / factors[index])
}

/// The standard eight-observation campaign: bud swelling in early March
/// through harvest in mid July.
pub fn default_schedule(season: i32) -> Vec<StageKey> {
    let stage = |m: u32, d: u32, bbch: i64, ty: ObjectType| {
        StageKey::new(
            NaiveDate::from_ymd_opt(season, m, d).expect("valid campaign date"),
            BbchStage::new(bbch).expect("valid BBCH code"),
            ty,
        )
    };
    vec![
        stage(3, 2, 51, ObjectType::Bud),
        stage(4, 14, 56, ObjectType::Bud),
        stage(4, 25, 60, ObjectType::Blossom),
        stage(5, 25, 65, ObjectType::Blossom),
        stage(6, 6, 75, ObjectType::Cherry),
        stage(6, 16, 81, ObjectType::Cherry),
        stage(7, 6, 85, ObjectType::Cherry),
        stage(7, 14, 89, ObjectType::Cherry),
    ]
}
