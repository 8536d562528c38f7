//! Acceptance suite: one test per criterion, each printing a pass line.
//!
//! Run with `cargo test -p b3kit-cli --test acceptance -- --nocapture` to see
//! the per-criterion lines.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use b3kit::cdo::{CdoParams, ContractionReport};
use b3kit::field::ScalarField;
use b3kit::pbo::{ExtractorParams, PboConfig};
use b3kit::pfe::{self, PfeFeatures, PfeParams};
use b3kit::rng::RngStream;
use b3kit::synth::{self, FusionBenchConfig, FusionStrategy, NoiseModel};
use b3kit::verify::{
    suite_bridge_permutation, suite_closed_form_optimality, suite_contraction,
    suite_envelope_containment, suite_pfe_gradient_check, suite_precision_scale_invariance,
    suite_rule_normalization, suite_softplus_positivity, suite_task_permutation_equivariance,
    FaultInjection,
};

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_b3kit")
}

fn pass(number: usize, name: &str) {
    println!("acceptance {number} ({name}): pass");
}

fn run_metrics(table: &str, dir: &Path) -> (Vec<(String, f64)>, f64, Duration) {
    let input = dir.join("table.csv");
    std::fs::write(&input, table).unwrap();
    let started = Instant::now();
    let output = Command::new(binary())
        .args(["--out"])
        .arg(dir.join("out"))
        .arg("metrics")
        .arg(&input)
        .output()
        .unwrap();
    let elapsed = started.elapsed();
    assert!(output.status.success(), "metrics failed: {output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    let mut rows = Vec::new();
    let mut mtl = f64::NAN;
    for line in stdout.lines().skip(1) {
        let (task, value) = line.split_once(',').unwrap();
        let value: f64 = value.parse().unwrap();
        if task == "delta_mtl" {
            mtl = value;
        } else {
            rows.push((task.to_string(), value));
        }
    }
    (rows, mtl, elapsed)
}

/// Criterion 1: published four-task transfer gains reproduce within +-0.01
/// percentage points through the metrics command, in under a second.
#[test]
fn acceptance_1_transfer_gain_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let stl = [55.65, 0.4794, 19.60, 83.19];
    let table = |mt: [f64; 4]| {
        format!(
            "task,direction,st_value,mt_value\n\
             semseg,higher,{},{}\ndepth,lower,{},{}\nnormal,lower,{},{}\nedge,higher,{},{}\n",
            stl[0], mt[0], stl[1], mt[1], stl[2], mt[2], stl[3], mt[3]
        )
    };

    let (rows, mtl, elapsed) = run_metrics(&table([53.75, 0.4805, 19.96, 80.60]), dir.path());
    let expected = [-3.41, -0.23, -1.84, -3.11];
    for ((task, delta), want) in rows.iter().zip(expected) {
        assert!(
            (delta - want).abs() <= 0.01,
            "{task}: delta {delta} vs published {want}"
        );
    }
    assert!((mtl - -2.15).abs() <= 0.01, "baseline delta_mtl {mtl}");
    assert!(elapsed < Duration::from_secs(1), "metrics took {elapsed:?}");

    let (_, mtl_full, _) = run_metrics(&table([57.78, 0.4587, 17.22, 83.18]), dir.path());
    assert!((mtl_full - 5.07).abs() <= 0.01, "full-model delta_mtl {mtl_full}");

    let (_, mtl_mean, _) = run_metrics(&table([57.59, 0.4594, 17.37, 83.03]), dir.path());
    assert!((mtl_mean - 4.71).abs() <= 0.01, "mean-bridge delta_mtl {mtl_mean}");

    pass(1, "transfer-gain reproduction");
}

/// Criterion 2: on 100 random 8x8x4 instances with 1..5 tasks the closed
/// form matches the gradient-descent minimizer within 1e-6 max-norm and its
/// analytic gradient vanishes to 1e-9 per entry, in under five seconds.
#[test]
fn acceptance_2_closed_form_optimality() {
    let started = Instant::now();
    let report = suite_closed_form_optimality(20260808, 100);
    let elapsed = started.elapsed();
    assert!(
        report.passed(),
        "{} failures: {:?}",
        report.failures.len(),
        report.failures.first()
    );
    assert_eq!(report.cases, 100);
    assert!(elapsed < Duration::from_secs(5), "optimality took {elapsed:?}");
    pass(2, "closed-form optimality");
}

/// Criterion 3: over 100 seeded heteroscedastic trials (variance ratio >= 4)
/// oracle-precision fusion beats uniform averaging in at least 99, and both
/// MSEs match the two-task analytic values within Monte-Carlo 3 sigma.
#[test]
fn acceptance_3_heteroscedastic_dominance() {
    let started = Instant::now();
    let config = FusionBenchConfig::default();
    let mut wins = 0usize;
    let trials = 100usize;
    for trial in 0..trials {
        let scene =
            synth::generate_scene(16, 16, 6, 8, &RngStream::new(3000 + trial as u64, 0)).unwrap();
        // Redraw the noise model deterministically until the realized
        // per-region variance ratio reaches 4.
        let mut noise = None;
        for attempt in 0..64u64 {
            let candidate = NoiseModel::heteroscedastic(
                &scene,
                4,
                0.01,
                1.0,
                0.25,
                &RngStream::new(3000 + trial as u64, 1 + attempt),
            )
            .unwrap();
            if candidate.variance_ratio() >= 4.0 {
                noise = Some(candidate);
                break;
            }
        }
        let noise = noise.expect("heteroscedastic draw with ratio >= 4");
        let rng = RngStream::new(3000 + trial as u64, 101);
        let oracle =
            synth::run_fusion_bench(&scene, &noise, FusionStrategy::PosteriorOracle, &config, &rng)
                .unwrap();
        let mean =
            synth::run_fusion_bench(&scene, &noise, FusionStrategy::MeanBridge, &config, &rng)
                .unwrap();
        if oracle.latent_mse < mean.latent_mse {
            wins += 1;
        }
    }
    assert!(wins >= 99, "oracle won only {wins}/{trials} trials");

    // Two-task closed-form case: sigma^2 = {0.01, 1.0}, vanishing prior.
    let scene = synth::generate_scene(32, 32, 6, 8, &RngStream::new(3500, 0)).unwrap();
    let noise = NoiseModel::constant(&scene, &[0.01, 1.0], 0.25).unwrap();
    let config = FusionBenchConfig {
        pbo: PboConfig::new(1e-12, 0.5, false).unwrap(),
        fitted_pfe: None,
    };
    let rng = RngStream::new(3500, 1);
    let oracle =
        synth::run_fusion_bench(&scene, &noise, FusionStrategy::PosteriorOracle, &config, &rng)
            .unwrap();
    let mean = synth::run_fusion_bench(&scene, &noise, FusionStrategy::MeanBridge, &config, &rng)
        .unwrap();
    let samples = (32 * 32 * 8) as f64;
    let v_oracle = 0.01 * 1.0 / 1.01;
    let band = 3.0 * v_oracle * (2.0 / samples).sqrt();
    assert!(
        (oracle.latent_mse - v_oracle).abs() < band,
        "oracle mse {} vs {v_oracle} +- {band}",
        oracle.latent_mse
    );
    let v_mean = 0.2525;
    let band = 3.0 * v_mean * (2.0 / samples).sqrt();
    assert!(
        (mean.latent_mse - v_mean).abs() < band,
        "mean mse {} vs {v_mean} +- {band}",
        mean.latent_mse
    );

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(30), "dominance took {elapsed:?}");
    pass(3, "heteroscedastic dominance");
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(values: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let mut out = vec![0.0; values.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
                j += 1;
            }
            let rank = (i + j) as f64 / 2.0;
            for &idx in &order[i..=j] {
                out[idx] = rank;
            }
            i = j + 1;
        }
        out
    }
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Criterion 4: after fitting the estimator through the CLI on the default
/// synthetic data, ten equal-population precision bins show mean squared
/// error non-increasing across at least 8 of 9 adjacent pairs and a
/// bin-level Spearman correlation of -0.8 or stronger, within a minute.
#[test]
fn acceptance_4_pfe_reliability_trend() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let output = Command::new(binary())
        .args(["--out"])
        .arg(dir.path())
        .args(["--seed", "42", "fit-pfe"])
        .output()
        .unwrap();
    assert!(output.status.success(), "fit-pfe failed: {output:?}");
    let hash_dir = std::fs::read_dir(dir.path())
        .unwrap()
        .next()
        .unwrap()
        .unwrap()
        .path();
    let params_text = std::fs::read_to_string(hash_dir.join("pfe_params.toml")).unwrap();
    let fitted = PfeParams::from_toml_str(&params_text).unwrap();

    // Fresh evaluation draws from the trial streams (the fit used its own
    // dedicated stream), pooled across tasks and trials.
    let mut precision_values = Vec::new();
    let mut error_values = Vec::new();
    for trial in 0..2u64 {
        let root = RngStream::new(42, 0).derive(trial);
        let scene = synth::generate_scene(32, 32, 6, 8, &root.derive(1)).unwrap();
        let noise =
            NoiseModel::heteroscedastic(&scene, 4, 0.01, 1.0, 0.25, &root.derive(2)).unwrap();
        let (reference, evidences, _) = synth::emit_evidence(&scene, &noise, &root.derive(3));
        for evidence in &evidences {
            let features = PfeFeatures::from_evidence(evidence, &reference).unwrap();
            let precision = pfe::precision_field(&features, &fitted).unwrap();
            let err = synth::squared_error_map(evidence, scene.latent_truth()).unwrap();
            precision_values.extend_from_slice(precision.data());
            error_values.extend_from_slice(err.data());
        }
    }
    let n = precision_values.len();
    let pooled_precision = b3kit::PrecisionField::new(
        ScalarField::from_vec(n / 32, 32, precision_values).unwrap(),
    )
    .unwrap();
    let pooled_error = ScalarField::from_vec(n / 32, 32, error_values).unwrap();
    let table = synth::precision_error_bins(&pooled_precision, &pooled_error, 10).unwrap();

    let errs: Vec<f64> = table.bins.iter().map(|b| b.mean_sq_error).collect();
    let precs: Vec<f64> = table.bins.iter().map(|b| b.mean_precision).collect();
    let monotone_pairs = errs
        .windows(2)
        .filter(|pair| pair[1] <= pair[0] + 1e-12)
        .count();
    assert!(
        monotone_pairs >= 8,
        "only {monotone_pairs}/9 adjacent bin pairs are non-increasing: {errs:?}"
    );
    let rho = spearman(&precs, &errs);
    assert!(rho <= -0.8, "bin-level Spearman correlation {rho} (bins {errs:?})");

    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(60), "fit trend took {elapsed:?}");
    pass(4, "precision reliability trend");
}

/// Criterion 5: a thousand randomized dispatch invocations stay at or below
/// the 1 - min(beta) contraction bound (strictly below 1) and satisfy the
/// per-entry identity to 1e-12 relative error; the ratio histogram itself is
/// informational.
#[test]
fn acceptance_5_contraction_suite() {
    let (report, ratios) = suite_contraction(20260808, 1000, FaultInjection::None);
    assert!(
        report.passed(),
        "{} failures: {:?}",
        report.failures.len(),
        report.failures.first()
    );
    assert_eq!(ratios.len(), 1000);
    let histogram = ContractionReport::from_ratios(ratios).unwrap();
    assert!(histogram.max < 1.0);
    println!(
        "  contraction ratios: mean {:.4}, max {:.4}",
        histogram.mean, histogram.max
    );
    pass(5, "contraction suite");
}

/// Criterion 6: every analytic estimator partial matches a central finite
/// difference (step 1e-5) within 1e-4 relative error on 50 random instances.
#[test]
fn acceptance_6_gradient_checks() {
    let report = suite_pfe_gradient_check(20260808, 50);
    assert!(
        report.passed(),
        "{} failures: {:?}",
        report.failures.len(),
        report.failures.first()
    );
    assert_eq!(report.cases, 50);
    pass(6, "gradient checks");
}

/// Criterion 7: the fusion path is parameter-free and the gate accounting
/// formula holds for all tested channel/kernel combinations.
#[test]
fn acceptance_7_parameter_accounting() {
    assert_eq!(PboConfig::default().param_count(), 0);
    assert_eq!(ExtractorParams::identity().param_count(), 0);
    assert_eq!(
        ExtractorParams::attention_identity(8).unwrap().param_count(),
        256
    );
    for channels in [1usize, 2, 4, 8, 16] {
        for kernel in [1usize, 3] {
            let params = CdoParams::zeros(channels, kernel, 0.0).unwrap();
            assert_eq!(
                params.param_count(),
                (2 * channels + 1) * kernel * kernel + 2,
                "C={channels}, k={kernel}"
            );
        }
    }
    pass(7, "parameter accounting");
}

/// Criterion 8: two bench runs with identical config and seed produce
/// byte-identical CSV outputs, independent of the worker count.
#[test]
fn acceptance_8_bench_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.toml");
    std::fs::write(
        &config_path,
        "[scene]\nheight = 12\nwidth = 12\nregions = 4\nseed = 42\n\n[pfe.fit]\nsteps = 15\n\n[bench]\ntrials = 6\n",
    )
    .unwrap();
    let run = |out: &Path, jobs: &str| {
        let output = Command::new(binary())
            .args(["--config"])
            .arg(&config_path)
            .args(["--out"])
            .arg(out)
            .args(["--jobs", jobs, "bench"])
            .output()
            .unwrap();
        assert!(output.status.success(), "bench failed: {output:?}");
        
        std::fs::read_dir(out).unwrap().next().unwrap().unwrap().path()
    };
    let dir_a = run(&dir.path().join("a"), "1");
    let dir_b = run(&dir.path().join("b"), "4");
    for name in ["bench.csv", "bins.csv", "contraction.csv", "trace_trial0.csv"] {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    pass(8, "bench determinism");
}

/// Criterion 9: all randomized invariant suites pass at a thousand cases
/// each, and the verification command exits 0.
#[test]
fn acceptance_9_invariant_suites() {
    let seed = 20260808;
    for report in [
        suite_bridge_permutation(seed, 1000),
        suite_precision_scale_invariance(seed, 1000),
        suite_envelope_containment(seed, 1000),
        suite_softplus_positivity(seed, 1000),
        suite_rule_normalization(seed, 1000),
        suite_task_permutation_equivariance(seed, 1000),
    ] {
        assert!(
            report.passed(),
            "suite {} failed {} of {} cases: {:?}",
            report.suite,
            report.failures.len(),
            report.cases,
            report.failures.first()
        );
        assert_eq!(report.cases, 1000);
    }

    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(binary())
        .args(["--out"])
        .arg(dir.path())
        .args(["--seed", "20260808", "verify"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0), "verify must exit 0");
    pass(9, "invariant suites");
}
