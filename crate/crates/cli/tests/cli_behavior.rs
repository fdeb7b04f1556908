//! Behavior of the figure commands: library/CLI equality, determinism
//! across worker counts, manifest structure, and output formats.

use cgcat_cli::{
    fmt_float, run, ExponentConvention, GridSettings, RunConfig, SliceState, SweepRange,
};
use cgcat_core::bell::{bell_resolution, bell_series};
use cgcat_core::coarse::{GaussianExponent, ResolutionWeights, DEFAULT_WEIGHT_TAIL};

const PI: f64 = std::f64::consts::PI;

fn small_grid() -> GridSettings {
    GridSettings {
        points: 31,
        extent: Some(5.2),
        inner_factor: 2,
        refine_factor: 2,
    }
}

#[test]
fn bell_res_rows_match_library_bit_for_bit() {
    let config = RunConfig::BellRes {
        alpha: 1.0,
        delta: SweepRange {
            min: 0.2,
            max: 1.8,
            steps: 3,
        },
        convention: ExponentConvention::Printed,
    };
    let out = run(&config).unwrap();
    let mut lines = out.csv.lines();
    assert_eq!(lines.next(), Some("delta,B_delta"));
    for delta in [0.2, 1.0, 1.8] {
        let weights =
            ResolutionWeights::new(delta, DEFAULT_WEIGHT_TAIL, GaussianExponent::Printed).unwrap();
        let expect = bell_resolution(&bell_series(1.0, &weights).unwrap());
        let row = lines.next().unwrap();
        assert_eq!(row, format!("{},{}", fmt_float(delta), fmt_float(expect)));
    }
}

#[test]
fn outputs_are_deterministic_across_worker_counts() {
    let mk = |workers: usize| RunConfig::NegRefCat {
        alphas: vec![1.5],
        theta_a: PI / 4.0,
        theta_b: 3.0 * PI / 4.0,
        delta_big: SweepRange {
            min: 0.0,
            max: 0.5,
            steps: 2,
        },
        grid: small_grid(),
        workers,
    };
    let one = run(&mk(1)).unwrap();
    let eight = run(&mk(8)).unwrap();
    assert_eq!(one.csv.as_bytes(), eight.csv.as_bytes());

    let mk_map = |workers: usize| RunConfig::NegMap {
        alpha: 1.2,
        theta_a: PI / 4.0,
        theta_b: 3.0 * PI / 4.0,
        k_min: -1,
        k_max: 1,
        m_min: -1,
        m_max: 1,
        n_max: 10,
        grid: small_grid(),
        workers,
    };
    let m1 = run(&mk_map(1)).unwrap();
    let m8 = run(&mk_map(8)).unwrap();
    assert_eq!(m1.csv.as_bytes(), m8.csv.as_bytes());
}

#[test]
fn identical_configs_reproduce_identical_bytes() {
    let config = RunConfig::NegRefNoon {
        ns: vec![1, 3],
        theta_a: 0.13 * PI,
        theta_b: 0.42 * PI,
        delta_big: SweepRange {
            min: 0.0,
            max: 0.4,
            steps: 2,
        },
        grid: small_grid(),
        workers: 2,
    };
    let a = run(&config).unwrap();
    let b = run(&config).unwrap();
    assert_eq!(a.csv.as_bytes(), b.csv.as_bytes());
    assert_eq!(a.manifest.as_bytes(), b.manifest.as_bytes());
}

#[test]
fn manifest_records_config_and_conventions() {
    let config = RunConfig::BellRes {
        alpha: 2.0,
        delta: SweepRange {
            min: 0.0,
            max: 1.0,
            steps: 2,
        },
        convention: ExponentConvention::Variance,
    };
    let out = run(&config).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&out.manifest).unwrap();
    assert_eq!(manifest["config"]["command"], "bell-res");
    assert_eq!(manifest["config"]["convention"], "variance");
    assert_eq!(manifest["library_version"], env!("CARGO_PKG_VERSION"));
    assert!(manifest["conventions"]["index_map"]
        .as_str()
        .unwrap()
        .contains("even-up-odd-down"));
    // Round trip the embedded config.
    let back: RunConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    assert_eq!(back, config);
}

#[test]
fn wigner_slice_initial_state_shape() {
    let config = RunConfig::WignerSlice {
        state: SliceState::Initial,
        alpha: 1.5,
        theta_a: PI / 4.0,
        theta_b: 3.0 * PI / 4.0,
        k: 0,
        m: 0,
        gamma_re: 1.5,
        gamma_im: 0.0,
        n_max: 16,
        points: 11,
        extent: Some(4.0),
    };
    let out = run(&config).unwrap();
    let lines: Vec<&str> = out.csv.lines().collect();
    assert_eq!(lines[0], "re_beta,im_beta,W");
    assert_eq!(lines.len(), 1 + 11 * 11);
    // Every W value parses and at least one is meaningfully nonzero.
    let mut max_abs = 0.0_f64;
    for line in &lines[1..] {
        let w: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        max_abs = max_abs.max(w.abs());
    }
    assert!(max_abs > 1e-3, "slice looks empty: max |W| = {max_abs}");
}

#[test]
fn wigner_slice_measured_state_differs_from_initial() {
    let base = |state: SliceState| RunConfig::WignerSlice {
        state,
        alpha: 1.5,
        theta_a: PI / 4.0,
        theta_b: 3.0 * PI / 4.0,
        k: 2,
        m: 2,
        gamma_re: 1.0,
        gamma_im: 0.0,
        n_max: 16,
        points: 7,
        extent: Some(3.0),
    };
    let initial = run(&base(SliceState::Initial)).unwrap();
    let measured = run(&base(SliceState::Measured)).unwrap();
    assert_ne!(initial.csv, measured.csv);
}

#[test]
fn neg_res_cat_columns_and_delta_zero_consistency() {
    let config = RunConfig::NegResCat {
        alpha: 1.2,
        theta_a: PI / 4.0,
        theta_b: 3.0 * PI / 4.0,
        delta: SweepRange {
            min: 0.0,
            max: 1.0,
            steps: 2,
        },
        n_maxes: vec![10],
        convention: ExponentConvention::Printed,
        grid: small_grid(),
        workers: 2,
    };
    let out = run(&config).unwrap();
    let lines: Vec<&str> = out.csv.lines().collect();
    assert_eq!(
        lines[0],
        "delta,weighted_sum_negativity,direct_mixture_negativity"
    );
    // At δ = 0 the weighted sum and the direct mixture are the same state.
    let cells: Vec<f64> = lines[1].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(cells[0], 0.0);
    assert!(
        (cells[1] - cells[2]).abs() < 1e-9,
        "δ→0 weighted {} vs direct {}",
        cells[1],
        cells[2]
    );
}

#[test]
fn undersized_grid_raises_reliability_warning() {
    // A phase-space box far too small for α = 2 loses Wigner mass; the run
    // still completes but carries the warning that strict mode turns into
    // exit code 3.
    let config = RunConfig::NegRefCat {
        alphas: vec![2.0],
        theta_a: PI / 4.0,
        theta_b: 3.0 * PI / 4.0,
        delta_big: SweepRange {
            min: 0.5,
            max: 0.5,
            steps: 1,
        },
        grid: GridSettings {
            points: 21,
            extent: Some(1.2),
            inner_factor: 2,
            refine_factor: 1,
        },
        workers: 1,
    };
    let out = run(&config).unwrap();
    assert!(
        !out.warnings.is_empty(),
        "expected a reliability warning from the undersized grid"
    );
    let manifest: serde_json::Value = serde_json::from_str(&out.manifest).unwrap();
    assert!(!manifest["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_configs_are_rejected() {
    let bad_range = RunConfig::BellRef {
        delta_big: SweepRange {
            min: 1.0,
            max: 0.0,
            steps: 5,
        },
    };
    assert!(run(&bad_range).is_err());

    let bad_noon = RunConfig::NegRefNoon {
        ns: vec![2],
        theta_a: 0.0,
        theta_b: 0.0,
        delta_big: SweepRange {
            min: 0.0,
            max: 1.0,
            steps: 2,
        },
        grid: small_grid(),
        workers: 1,
    };
    let err = run(&bad_noon).unwrap_err();
    assert_eq!(err.exit_code(), cgcat_cli::EXIT_CONFIG);
}
