//! The five CLI commands: verify, bench, fit-pfe, metrics, report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::json;

use b3kit::cdo::ContractionReport;
use b3kit::field::ScalarField;
use b3kit::metrics::{parse_transfer_csv, TransferReport};
use b3kit::pfe::{self, PfeFeatures};
use b3kit::synth::{self, FusionBenchConfig, FusionStrategy};
use b3kit::verify::{run_all_suites, FaultInjection};

use crate::pipeline::{
    decoder_config, fit_estimator, make_noise, make_scene, run_indexed, runtime_err,
    trial_stream, SALT_DECODER, SALT_EVIDENCE, SALT_NOISE, SALT_SCENE,
};
use crate::{CliError, CliResult, CommandContext, RunSummary, EXIT_PROPERTY_FAILURE, EXIT_SUCCESS};

/// Runs every property suite and writes a machine-readable report. Exit 0
/// only when all suites pass; failures carry replayable case coordinates.
pub fn cmd_verify(ctx: &CommandContext, fault: FaultInjection) -> CliResult<i32> {
    let started = Instant::now();
    ctx.ensure_out_dir()?;
    let suites = run_all_suites(ctx.master_seed, fault).map_err(runtime_err)?;
    let all_passed = suites.iter().all(|s| s.passed());

    let report = json!({
        "master_seed": ctx.master_seed,
        "config_hash": ctx.config.hash_hex(),
        "passed": all_passed,
        "suites": suites.iter().map(|s| json!({
            "suite": s.suite,
            "cases": s.cases,
            "failures": s.failures.iter().map(|f| json!({
                "case": f.case,
                "detail": f.detail,
                "replay": {
                    "master_seed": ctx.master_seed,
                    "suite": s.suite,
                    "case": f.case,
                },
            })).collect::<Vec<_>>(),
        })).collect::<Vec<_>>(),
    });
    let report_path = ctx.write_artifact(
        "verify_report.json",
        &serde_json::to_string_pretty(&report).expect("report encodes"),
    )?;

    for suite in &suites {
        if suite.passed() {
            println!("suite {}: pass ({} cases)", suite.suite, suite.cases);
        } else {
            println!(
                "suite {}: FAIL ({} of {} cases)",
                suite.suite,
                suite.failures.len(),
                suite.cases
            );
            for failure in suite.failures.iter().take(3) {
                println!("  case {}: {}", failure.case, failure.detail);
            }
        }
    }

    let exit = if all_passed {
        EXIT_SUCCESS
    } else {
        EXIT_PROPERTY_FAILURE
    };
    RunSummary::write(ctx, "verify", exit, &[report_path], started)?;
    Ok(exit)
}

struct TrialOutcome {
    entries: Vec<synth::BenchEntry>,
    ratios: Vec<f64>,
}

fn run_trial(
    ctx: &CommandContext,
    bench_config: &FusionBenchConfig,
    dec_config: &b3kit::decoder::DecoderConfig,
    trial: usize,
) -> CliResult<TrialOutcome> {
    let root = trial_stream(ctx.master_seed, trial);
    let scene = make_scene(&ctx.config, &root.derive(SALT_SCENE)).map_err(runtime_err)?;
    let noise = make_noise(&ctx.config, &scene, &root.derive(SALT_NOISE)).map_err(runtime_err)?;
    let evidence_rng = root.derive(SALT_EVIDENCE);

    let mut entries = Vec::with_capacity(FusionStrategy::ALL.len());
    for strategy in FusionStrategy::ALL {
        entries.push(
            synth::run_fusion_bench(&scene, &noise, strategy, bench_config, &evidence_rng)
                .map_err(runtime_err)?,
        );
    }

    // Multi-stage propagation from the raw evidences; collects the
    // stage-by-stage contraction ratios.
    let (_, evidences, _) = synth::emit_evidence(&scene, &noise, &evidence_rng);
    let (_, trace) =
        b3kit::decoder::propagate(&evidences, dec_config, &root.derive(SALT_DECODER))
            .map_err(runtime_err)?;
    let ratios = trace
        .stages
        .iter()
        .flat_map(|s| s.tasks.iter().map(|t| t.contraction_ratio))
        .collect();
    Ok(TrialOutcome { entries, ratios })
}

/// Seeded benchmark trials over all three fusion strategies plus the
/// decoder propagation loop; emits the bench CSV, the precision-error bin
/// table, the contraction CSV and a JSON summary.
pub fn cmd_bench(ctx: &CommandContext) -> CliResult<i32> {
    let started = Instant::now();
    ctx.ensure_out_dir()?;

    let (fitted, _) = fit_estimator(&ctx.config, ctx.master_seed).map_err(runtime_err)?;
    let bench_config = FusionBenchConfig {
        pbo: ctx.config.pbo_config().map_err(CliError::config)?,
        fitted_pfe: Some(fitted.clone()),
    };
    let dec_config = decoder_config(&ctx.config, fitted.clone()).map_err(runtime_err)?;

    let trials = ctx.config.bench.trials;
    let outcomes = run_indexed(trials, ctx.jobs, |trial| {
        run_trial(ctx, &bench_config, &dec_config, trial)
    })?;

    let mut bench_csv = String::from(synth::bench_csv_header());
    bench_csv.push('\n');
    let mut ratios = Vec::new();
    for (trial, outcome) in outcomes.iter().enumerate() {
        for entry in &outcome.entries {
            bench_csv.push_str(&entry.csv_row(trial));
            bench_csv.push('\n');
        }
        ratios.extend_from_slice(&outcome.ratios);
    }
    let bench_path = ctx.write_artifact("bench.csv", &bench_csv)?;

    let report = ContractionReport::from_ratios(ratios).map_err(runtime_err)?;
    let contraction_path = ctx.write_artifact("contraction.csv", &report.to_csv())?;

    // Precision-error bin table from trial 0: fitted precision against the
    // realized squared error, pooled over tasks by stacking rows.
    let root = trial_stream(ctx.master_seed, 0);
    let scene = make_scene(&ctx.config, &root.derive(SALT_SCENE)).map_err(runtime_err)?;
    let noise = make_noise(&ctx.config, &scene, &root.derive(SALT_NOISE)).map_err(runtime_err)?;
    let (reference, evidences, _) = synth::emit_evidence(&scene, &noise, &root.derive(SALT_EVIDENCE));
    let mut precision_rows = Vec::new();
    let mut error_rows = Vec::new();
    for evidence in &evidences {
        let features = PfeFeatures::from_evidence(evidence, &reference).map_err(runtime_err)?;
        let precision = pfe::precision_field(&features, &fitted).map_err(runtime_err)?;
        let err = synth::squared_error_map(evidence, scene.latent_truth()).map_err(runtime_err)?;
        precision_rows.extend_from_slice(precision.data());
        error_rows.extend_from_slice(err.data());
    }
    let stacked_h = scene.height() * evidences.len();
    let pooled_precision = b3kit::PrecisionField::new(
        ScalarField::from_vec(stacked_h, scene.width(), precision_rows).map_err(runtime_err)?,
    )
    .map_err(runtime_err)?;
    let pooled_error =
        ScalarField::from_vec(stacked_h, scene.width(), error_rows).map_err(runtime_err)?;
    let bins = synth::precision_error_bins(&pooled_precision, &pooled_error, 10)
        .map_err(runtime_err)?;
    let bins_path = ctx.write_artifact("bins.csv", &bins.to_csv())?;

    // Representative stage trace (and optional field dumps) from trial 0.
    let (_, trace) = b3kit::decoder::propagate(&evidences, &dec_config, &root.derive(SALT_DECODER))
        .map_err(runtime_err)?;
    let trace_path = ctx.write_artifact(
        "trace_trial0.csv",
        &trace.to_csv(scene.latent_truth()).map_err(runtime_err)?,
    )?;
    let mut artifacts = vec![bench_path, contraction_path, bins_path, trace_path];
    if ctx.config.output.dump_fields {
        let dump_dir = ctx.out_dir.join("fields");
        trace.dump_fields(&dump_dir).map_err(runtime_err)?;
        artifacts.push(dump_dir);
    }

    // Per-strategy means.
    let mut strategies = serde_json::Map::new();
    for strategy in FusionStrategy::ALL {
        let rows: Vec<&synth::BenchEntry> = outcomes
            .iter()
            .flat_map(|o| o.entries.iter())
            .filter(|e| e.strategy == strategy)
            .collect();
        let mean_mse = rows.iter().map(|e| e.latent_mse).sum::<f64>() / rows.len() as f64;
        let mean_delta = rows.iter().map(|e| e.delta_mtl).sum::<f64>() / rows.len() as f64;
        strategies.insert(
            strategy.name().to_string(),
            json!({ "mean_latent_mse": mean_mse, "mean_delta_mtl": mean_delta }),
        );
    }
    let summary = json!({
        "trials": trials,
        "strategies": strategies,
        "contraction": {
            "mean": report.mean,
            "max": report.max,
            "bins": report.bins.to_vec(),
        },
    });
    let summary_path = ctx.write_artifact(
        "bench_summary.json",
        &serde_json::to_string_pretty(&summary).expect("summary encodes"),
    )?;
    artifacts.push(summary_path);

    println!(
        "bench: {trials} trials, outputs in {}",
        ctx.out_dir.display()
    );
    RunSummary::write(ctx, "bench", EXIT_SUCCESS, &artifacts, started)?;
    Ok(EXIT_SUCCESS)
}

/// Fits the precision estimator and writes the parameter document plus the
/// per-step loss curve.
pub fn cmd_fit_pfe(ctx: &CommandContext) -> CliResult<i32> {
    let started = Instant::now();
    ctx.ensure_out_dir()?;
    let (fitted, curve) = fit_estimator(&ctx.config, ctx.master_seed).map_err(runtime_err)?;
    let params_path = ctx.write_artifact(
        "pfe_params.toml",
        &fitted.to_toml_string().map_err(runtime_err)?,
    )?;
    let mut curve_csv = String::from("step,loss\n");
    for (step, loss) in curve.iter().enumerate() {
        curve_csv.push_str(&format!("{step},{loss}\n"));
    }
    let curve_path = ctx.write_artifact("loss_curve.csv", &curve_csv)?;
    let summary = json!({
        "steps": ctx.config.pfe.fit.steps,
        "learning_rate": ctx.config.pfe.fit.lr,
        "initial_loss": curve.first(),
        "final_loss": curve.last(),
    });
    let fit_summary_path = ctx.write_artifact(
        "fit_summary.json",
        &serde_json::to_string_pretty(&summary).expect("summary encodes"),
    )?;
    println!(
        "fit-pfe: initial loss {:.6}, final loss {:.6}",
        curve.first().unwrap(),
        curve.last().unwrap()
    );
    RunSummary::write(
        ctx,
        "fit-pfe",
        EXIT_SUCCESS,
        &[params_path, curve_path, fit_summary_path],
        started,
    )?;
    Ok(EXIT_SUCCESS)
}

/// Computes transfer gains from an ingested `task,direction,st_value,mt_value`
/// table and prints the per-task deltas plus their mean.
pub fn cmd_metrics(ctx: &CommandContext, input: &Path) -> CliResult<i32> {
    let started = Instant::now();
    let text = std::fs::read_to_string(input)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", input.display())))?;
    let rows = parse_transfer_csv(&text).map_err(CliError::config)?;
    let report = TransferReport::from_rows(&rows).map_err(CliError::config)?;
    print!("{}", report.to_csv());
    ctx.ensure_out_dir()?;
    let table_path = ctx.write_artifact("transfer.csv", &report.to_csv())?;
    RunSummary::write(ctx, "metrics", EXIT_SUCCESS, &[table_path], started)?;
    Ok(EXIT_SUCCESS)
}

/// Prints the run summary (and bench summary, when present) of a previous
/// output directory.
pub fn cmd_report(dir: &Path) -> CliResult<i32> {
    let summary_path = dir.join("summary.json");
    let text = std::fs::read_to_string(&summary_path)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", summary_path.display())))?;
    let summary: RunSummary =
        serde_json::from_str(&text).map_err(|e| CliError::runtime(format!("summary decode: {e}")))?;
    println!("command:     {}", summary.command);
    println!("config hash: {}", summary.config_hash);
    println!("master seed: {}", summary.master_seed);
    println!("exit status: {}", summary.exit_status);
    println!("duration:    {:.3}s", summary.duration_seconds);
    for artifact in &summary.artifacts {
        println!("artifact:    {artifact}");
    }
    let bench_path = dir.join("bench_summary.json");
    if let Ok(bench_text) = std::fs::read_to_string(&bench_path) {
        let value: serde_json::Value = serde_json::from_str(&bench_text)
            .map_err(|e| CliError::runtime(format!("bench summary decode: {e}")))?;
        if let Some(strategies) = value.get("strategies").and_then(|s| s.as_object()) {
            for (name, stats) in strategies {
                println!(
                    "strategy {name}: mean latent mse {}, mean delta_mtl {}",
                    stats["mean_latent_mse"], stats["mean_delta_mtl"]
                );
            }
        }
    }
    Ok(EXIT_SUCCESS)
}

/// Parses the hidden fault-injection flag of `verify`.
pub fn parse_fault(name: Option<&str>) -> CliResult<FaultInjection> {
    match name {
        None => Ok(FaultInjection::None),
        Some("cdo-sign") => Ok(FaultInjection::CdoSignFlip),
        Some(other) => Err(CliError::config(format!("unknown fault `{other}`"))),
    }
}

/// Convenience wrapper so integration tests can drive a full command.
pub fn run_command(
    command: &str,
    ctx: &CommandContext,
    fault: Option<&str>,
    input: Option<&PathBuf>,
) -> CliResult<i32> {
    match command {
        "verify" => cmd_verify(ctx, parse_fault(fault)?),
        "bench" => cmd_bench(ctx),
        "fit-pfe" => cmd_fit_pfe(ctx),
        "metrics" => {
            let path = input.ok_or_else(|| CliError::config("metrics requires an input path"))?;
            cmd_metrics(ctx, path)
        }
        other => Err(CliError::config(format!("unknown command `{other}`"))),
    }
}
