//! Acceptance suite: one test per acceptance criterion, each printing a
//! single pass line (run with `--nocapture` to see them). Every tolerance is
//! pinned here in code.
//!
//! Criterion 9 needs the external full-season dataset and is skipped with a
//! message unless `CHERRYSET_CSV` points at it.

mod common;

use std::time::Instant;

use chrono::NaiveDate;

use phenoyield::forecast::{calibrate, forecast_branch, CalibrationTable};
use phenoyield::ingest::{emit_csv, parse_csv_str, season_of};
use phenoyield::phenology::{build_ledger, ObjectType};
use phenoyield::plot::{
    count_elements, render_regression_grid, render_trajectory, PlotKind, PlotSpec,
};
use phenoyield::regression::{fit_ols, p_value_two_sided, regularized_incomplete_beta};
use phenoyield::sim::{
    default_schedule, expected_survival_slope, simulate_season, SimulationParams,
};

const EXAMPLE_LEDGER: &str = include_str!("fixtures/example_branch_ledger.csv");
const PUBLISHED_CALIBRATION: &str = include_str!("fixtures/published_calibration.csv");

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn pass(criterion: u32, what: &str, started: Instant) {
    println!(
        "acceptance {criterion} PASS - {what} ({} ms)",
        started.elapsed().as_millis()
    );
}

/// Criterion 1: the example-branch ledger validates cleanly and its harvest
/// sums hold, counts exactly and weights to 1e-9 kg. Budget: under 1 s.
#[test]
fn criterion_1_harvest_consistency_fixture() {
    let started = Instant::now();
    let (records, parse_violations) = parse_csv_str(EXAMPLE_LEDGER, 2023).unwrap();
    assert!(parse_violations.is_empty(), "{parse_violations:?}");
    let (ledger, violations) = build_ledger(records);
    assert!(violations.is_empty(), "{violations:?}");
    assert_eq!(ledger.len(), 10);

    let by_type = |ty: ObjectType| {
        ledger
            .records()
            .iter()
            .find(|r| r.object_type == ty)
            .expect("harvest record")
    };
    let good = by_type(ObjectType::GoodCrops);
    let bad = by_type(ObjectType::BadCrops);
    let total = by_type(ObjectType::TotalCrops);
    assert_eq!(good.object_count + bad.object_count, 54);
    assert_eq!(total.object_count, 54);
    let weight_gap =
        good.crop_weight_kg.unwrap() + bad.crop_weight_kg.unwrap() - total.crop_weight_kg.unwrap();
    assert!(weight_gap.abs() <= 1e-9, "weight gap {weight_gap}");

    assert!(started.elapsed().as_secs_f64() < 1.0, "budget is 1 s");
    pass(1, "harvest consistency fixture", started);
}

/// Criterion 2: on 100 seeded random instances (n in [3, 50], values in
/// [0, 500]) the fit matches an independent normal-equations oracle to
/// 1e-10 in slope, intercept and R², and the p-value matches a
/// numeric-integration t-density oracle to 1e-6. Budget: under 5 s.
#[test]
fn criterion_2_ols_oracle_equivalence() {
    let started = Instant::now();
    let mut lcg = common::Lcg::new(20230314);
    for instance in 0..100 {
        let n = 3 + (lcg.next_unit() * 48.0) as usize;
        let mix = lcg.in_range(0.0, 0.95);
        let points: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x = lcg.in_range(0.0, 500.0);
                let y = mix * x + (1.0 - mix) * lcg.in_range(0.0, 500.0);
                (x, y)
            })
            .collect();

        let fit = fit_ols(&points).unwrap();
        let (slope, intercept, r_squared) = common::ols_normal_equations(&points);
        assert!(
            (fit.slope - slope).abs() <= 1e-10,
            "instance {instance}: slope {} vs oracle {slope}",
            fit.slope
        );
        assert!(
            (fit.intercept - intercept).abs() <= 1e-10,
            "instance {instance}: intercept {} vs oracle {intercept}",
            fit.intercept
        );
        assert!(
            (fit.r_squared.unwrap() - r_squared).abs() <= 1e-10,
            "instance {instance}: r² {:?} vs oracle {r_squared}",
            fit.r_squared
        );
        let t = common::t_statistic_from_correlation(&points);
        let p_oracle = common::t_p_value_by_quadrature(t, n - 2);
        assert!(
            (fit.p_value.unwrap() - p_oracle).abs() <= 1e-6,
            "instance {instance}: p {:?} vs oracle {p_oracle}",
            fit.p_value
        );
    }
    assert!(started.elapsed().as_secs_f64() < 5.0, "budget is 5 s");
    pass(
        2,
        "100-instance OLS and p-value oracle equivalence",
        started,
    );
}

/// Criterion 3: special functions. Uniform case on a 1000-point grid to
/// 1e-12, the reflection symmetry to 1e-12 on seeded random arguments, the
/// t-table spot value and the df = 1 closed form.
#[test]
fn criterion_3_special_functions() {
    let started = Instant::now();
    for i in 0..=1000 {
        let x = i as f64 / 1000.0;
        let v = regularized_incomplete_beta(x, 1.0, 1.0).unwrap();
        assert!((v - x).abs() <= 1e-12, "I_{x}(1,1) = {v}");
    }
    let mut lcg = common::Lcg::new(77);
    for _ in 0..2000 {
        let x = lcg.next_unit();
        let a = lcg.in_range(0.05, 50.0);
        let b = lcg.in_range(0.05, 50.0);
        let forward = regularized_incomplete_beta(x, a, b).unwrap();
        let reflected = regularized_incomplete_beta(1.0 - x, b, a).unwrap();
        assert!(
            (forward + reflected - 1.0).abs() <= 1e-12,
            "x={x} a={a} b={b}: {forward} + {reflected}"
        );
    }
    let p = p_value_two_sided(2.1788_f64, 12).unwrap();
    assert!((p - 0.0500).abs() <= 0.0005, "p(2.1788, 12) = {p}");
    let p_cauchy = p_value_two_sided(1.0_f64, 1).unwrap();
    assert!((p_cauchy - 0.5).abs() <= 1e-12, "p(1, 1) = {p_cauchy}");
    pass(3, "incomplete beta and t-distribution checks", started);
}

/// Criterion 4: loading the published calibration summary and predicting at
/// (Jul-6, count 52) gives 53.97 ± 0.01, within 1.1 fruit of the real
/// harvest of 54; (Apr-14, count 0) gives the intercept 2.03 ± 0.01.
#[test]
fn criterion_4_forecast_fixture() {
    let started = Instant::now();
    let table = CalibrationTable::from_csv(PUBLISHED_CALIBRATION).unwrap();
    assert_eq!(table.entries.len(), 7);

    let july = forecast_branch(&table, date(2023, 7, 6), 52.0, 0.95).unwrap();
    assert!((july.point - 53.97).abs() <= 0.01, "point {}", july.point);
    assert!(
        (july.point - 54.0).abs() <= 1.1,
        "harvest gap {}",
        july.point - 54.0
    );

    let april = forecast_branch(&table, date(2023, 4, 14), 0.0, 0.95).unwrap();
    assert!((april.point - 2.03).abs() <= 0.01, "point {}", april.point);
    pass(4, "published-table forecast fixture", started);
}

/// Criterion 5: a noiseless simulated season calibrates to the analytic
/// ground truth at every stage: slope equal to the survival product between
/// stage and harvest to 1e-9, intercept 0 to 1e-6, R² = 1. Counts run in
/// the tens of thousands and the fractions are chosen so every expected
/// count is an integer, which removes rounding from the comparison.
/// Budget: under 1 s.
#[test]
fn criterion_5_simulator_analytic_oracle() {
    let started = Instant::now();
    let params = SimulationParams {
        initial_buds: 16_000,
        flower_bud_fraction: 0.5,
        blossoms_per_cluster: 2.5,
        fruit_set_fraction: 0.4,
        drop_fractions: vec![0.25, 0.5],
        attrition_rate: 0.0,
        good_fraction: 0.6,
        fruit_weight_kg: 0.0,
        frost: None,
        noise_sd: 0.0,
        seed: 99,
    };
    let schedule = default_schedule(2023);
    let ledger = simulate_season(&params, 3, 6, &schedule).unwrap();
    assert_eq!(ledger.branches().len(), 18);

    let table = calibrate(&ledger, ObjectType::TotalCrops).unwrap();
    assert_eq!(table.entries.len(), 7, "one entry per developmental stage");
    for entry in &table.entries {
        let expected = expected_survival_slope(&params, &schedule, entry.stage.date).unwrap();
        let fit = &entry.fit;
        assert!(
            (fit.slope - expected).abs() <= 1e-9,
            "{}: slope {} vs analytic {expected}",
            entry.stage.date,
            fit.slope
        );
        assert!(
            fit.intercept.abs() <= 1e-6,
            "{}: intercept {}",
            entry.stage.date,
            fit.intercept
        );
        let r_squared = fit.r_squared.expect("branch sizes vary, R² defined");
        assert!(
            (r_squared - 1.0).abs() <= 1e-12,
            "{}: R² {r_squared}",
            entry.stage.date
        );
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "budget is 1 s");
    pass(
        5,
        "noiseless simulator calibrates to analytic slopes",
        started,
    );
}

/// Criterion 6: 200 seeded random affine transforms x -> a x + b,
/// y -> c y + d leave R² and the p-value unchanged to 1e-9 and scale the
/// slope by c/a to 1e-9.
#[test]
fn criterion_6_affine_invariance() {
    let started = Instant::now();
    let mut lcg = common::Lcg::new(424242);
    for instance in 0..200 {
        let n = 5 + (lcg.next_unit() * 35.0) as usize;
        let mix = lcg.in_range(0.1, 0.9);
        let base: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                let x = lcg.in_range(0.0, 500.0);
                let y = mix * x + (1.0 - mix) * lcg.in_range(0.0, 500.0);
                (x, y)
            })
            .collect();
        let sign_a = if lcg.next_unit() < 0.5 { -1.0 } else { 1.0 };
        let sign_c = if lcg.next_unit() < 0.5 { -1.0 } else { 1.0 };
        let a = sign_a * lcg.in_range(0.1, 10.0);
        let b = lcg.in_range(-100.0, 100.0);
        let c = sign_c * lcg.in_range(0.1, 10.0);
        let d = lcg.in_range(-100.0, 100.0);
        let mapped: Vec<(f64, f64)> = base.iter().map(|&(x, y)| (a * x + b, c * y + d)).collect();

        let fit = fit_ols(&base).unwrap();
        let mapped_fit = fit_ols(&mapped).unwrap();
        assert!(
            (mapped_fit.r_squared.unwrap() - fit.r_squared.unwrap()).abs() <= 1e-9,
            "instance {instance}: R² changed"
        );
        assert!(
            (mapped_fit.p_value.unwrap() - fit.p_value.unwrap()).abs() <= 1e-9,
            "instance {instance}: p changed"
        );
        assert!(
            (mapped_fit.slope - (c / a) * fit.slope).abs() <= 1e-9,
            "instance {instance}: slope {} vs scaled {}",
            mapped_fit.slope,
            (c / a) * fit.slope
        );
    }
    pass(6, "200-transform affine invariance", started);
}

/// Criterion 7: the example file with decimal-comma weights and campaign
/// dates parses, emits canonically and reparses to an identical ledger;
/// the same holds for 50 seeded simulated ledgers.
#[test]
fn criterion_7_csv_round_trip() {
    let started = Instant::now();
    let (records, _) = parse_csv_str(EXAMPLE_LEDGER, 2023).unwrap();
    let (ledger, _) = build_ledger(records);
    let emitted = emit_csv(&ledger);
    assert!(
        emitted.contains("2023-07-14"),
        "ISO dates in canonical form"
    );
    assert!(emitted.contains("0.29") && !emitted.contains("0,29"));
    let (reparsed, violations) = parse_csv_str(&emitted, season_of(&ledger)).unwrap();
    assert!(violations.is_empty());
    assert_eq!(build_ledger(reparsed).0, ledger);

    let mut lcg = common::Lcg::new(7777);
    for round in 0..50 {
        let params = SimulationParams {
            initial_buds: 50 + (lcg.next_unit() * 300.0) as u32,
            flower_bud_fraction: lcg.in_range(0.3, 0.9),
            blossoms_per_cluster: lcg.in_range(1.0, 3.5),
            fruit_set_fraction: lcg.in_range(0.1, 0.6),
            drop_fractions: vec![lcg.in_range(0.0, 0.4)],
            attrition_rate: lcg.in_range(0.0, 0.05),
            good_fraction: lcg.in_range(0.3, 0.9),
            fruit_weight_kg: lcg.in_range(0.002, 0.012),
            frost: None,
            noise_sd: lcg.in_range(0.0, 6.0),
            seed: round,
        };
        let trees = 1 + (lcg.next_unit() * 3.0) as u32;
        let branches = 1 + (lcg.next_unit() * 6.0) as u32;
        let ledger = simulate_season(&params, trees, branches, &default_schedule(2023)).unwrap();
        let emitted = emit_csv(&ledger);
        let (records, violations) = parse_csv_str(&emitted, season_of(&ledger)).unwrap();
        assert!(violations.is_empty(), "round {round}: {violations:?}");
        assert_eq!(build_ledger(records).0, ledger, "round {round}");
    }
    pass(
        7,
        "CSV round-trip identity (fixture + 50 simulated)",
        started,
    );
}

/// Criterion 8: structural plot checks. The 18-branch trajectory figure has
/// exactly 18 polylines, the 7-entry regression grid exactly 7 panels.
#[test]
fn criterion_8_plot_structure() {
    let started = Instant::now();
    let ledger =
        simulate_season(&SimulationParams::default(), 3, 6, &default_schedule(2023)).unwrap();
    let svg = render_trajectory(&ledger, &PlotSpec::default()).unwrap();
    assert_eq!(count_elements(&svg, "<polyline"), 18);

    let table = calibrate(&ledger, ObjectType::TotalCrops).unwrap();
    assert_eq!(table.entries.len(), 7);
    let spec = PlotSpec {
        kind: PlotKind::RegressionGrid,
        ..PlotSpec::default()
    };
    let grid = render_regression_grid(&ledger, &table, &spec).unwrap();
    assert_eq!(count_elements(&grid, "class=\"panel\""), 7);
    pass(8, "plot structure (18 polylines, 7 panels)", started);
}

/// Criterion 9: reproducing the published per-stage R² values needs the
/// external full-season dataset (only one branch's raw counts are public).
/// When `CHERRYSET_CSV` names that file, check n in {14, 15} and R² within
/// ±0.02 of the published column per stage; otherwise skip.
#[test]
fn criterion_9_external_dataset_if_supplied() {
    let started = Instant::now();
    let path = match std::env::var("CHERRYSET_CSV") {
        Ok(path) if !path.is_empty() => path,
        _ => {
            println!("acceptance 9 SKIP - external dataset not supplied (set CHERRYSET_CSV)");
            return;
        }
    };
    let text = std::fs::read_to_string(&path).expect("readable dataset file");
    let (records, _) = parse_csv_str(&text, 2023).unwrap();
    let (ledger, violations) = build_ledger(records);
    assert!(
        !phenoyield::phenology::has_errors(&violations),
        "{violations:?}"
    );
    let table = calibrate(&ledger, ObjectType::TotalCrops).unwrap();

    // Published per-stage R² keyed by BBCH code.
    let published: [(u8, f64); 7] = [
        (51, 0.39),
        (56, 0.84),
        (60, 0.76),
        (65, 0.85),
        (75, 0.72),
        (81, 0.94),
        (85, 0.99),
    ];
    for (bbch, r_squared) in published {
        let entry = table
            .entries
            .iter()
            .find(|e| e.stage.bbch.code() == bbch)
            .unwrap_or_else(|| panic!("no calibration entry for BBCH {bbch}"));
        assert!(
            entry.fit.n == 14 || entry.fit.n == 15,
            "BBCH {bbch}: n = {}",
            entry.fit.n
        );
        let fitted = entry.fit.r_squared.expect("defined R²");
        assert!(
            (fitted - r_squared).abs() <= 0.02,
            "BBCH {bbch}: R² {fitted} vs published {r_squared}"
        );
    }
    pass(9, "external-dataset structural check", started);
}
