//! Seeded assembly of scenes, noise, estimator fits and decoder runs.
//!
//! Stream layout: stream 0 of the master seed feeds the benchmark trials
//! (one derived child per trial index, with per-role grandchildren), and
//! stream 1 feeds the estimator fit ensemble. Gate weights and attention
//! projections come from their own config seeds, so they stay fixed across
//! trials.

use b3kit::decoder::{CdoSetup, DecoderConfig, ExtractorSetup, PfeSetup};
use b3kit::cdo::CdoParams;
use b3kit::error::Result;
use b3kit::field::ScalarField;
use b3kit::pbo::ExtractorParams;
use b3kit::pfe::{PfeFeatures, PfeParams};
use b3kit::rng::RngStream;
use b3kit::synth::{self, NoiseModel, SyntheticScene};

use crate::config::RunConfig;
use crate::{CliError, CliResult};

pub const TRIAL_STREAM: u64 = 0;
pub const FIT_STREAM: u64 = 1;
pub const SALT_SCENE: u64 = 1;
pub const SALT_NOISE: u64 = 2;
pub const SALT_EVIDENCE: u64 = 3;
pub const SALT_DECODER: u64 = 4;

/// Scenes in the estimator fit ensemble.
pub const FIT_ENSEMBLE_SCENES: usize = 2;

/// Per-trial root stream.
pub fn trial_stream(master_seed: u64, trial: usize) -> RngStream {
    RngStream::new(master_seed, TRIAL_STREAM).derive(trial as u64)
}

pub fn make_scene(config: &RunConfig, rng: &RngStream) -> Result<SyntheticScene> {
    synth::generate_scene(
        config.scene.height,
        config.scene.width,
        config.scene.regions,
        config.scene.channels,
        rng,
    )
}

pub fn make_noise(config: &RunConfig, scene: &SyntheticScene, rng: &RngStream) -> Result<NoiseModel> {
    NoiseModel::heteroscedastic(
        scene,
        config.scene.tasks,
        config.noise.var_min,
        config.noise.var_max,
        config.noise.ref_var,
        rng,
    )
}

/// Fit data drawn from the dedicated fit stream: `FIT_ENSEMBLE_SCENES`
/// scenes, every task of each contributing one (features, targets) pair.
pub fn build_fit_data(
    config: &RunConfig,
    master_seed: u64,
) -> Result<Vec<(PfeFeatures, ScalarField)>> {
    let base = RngStream::new(master_seed, FIT_STREAM);
    let mut data = Vec::new();
    for i in 0..FIT_ENSEMBLE_SCENES {
        let root = base.derive(i as u64);
        let scene = make_scene(config, &root.derive(SALT_SCENE))?;
        let noise = make_noise(config, &scene, &root.derive(SALT_NOISE))?;
        data.extend(synth::fit_instances(&scene, &noise, &root.derive(SALT_EVIDENCE))?);
    }
    Ok(data)
}

/// Grid-initialized rule bank sized per config, centered on the observed
/// feature ranges of the fit data.
pub fn initial_params(config: &RunConfig, data: &[(PfeFeatures, ScalarField)]) -> Result<PfeParams> {
    let mut sim_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut tv_range = (f64::INFINITY, f64::NEG_INFINITY);
    for (features, _) in data {
        let ((s_lo, s_hi), (t_lo, t_hi)) = features.ranges();
        sim_range = (sim_range.0.min(s_lo), sim_range.1.max(s_hi));
        tv_range = (tv_range.0.min(t_lo), tv_range.1.max(t_hi));
    }
    let mut params = PfeParams::grid_init(config.pfe_grid(), sim_range, tv_range)?;
    params.epsilon = config.pfe.epsilon;
    params.validate()?;
    Ok(params)
}

/// Fits the precision estimator on the configured ensemble; returns the
/// fitted bank and the loss curve.
pub fn fit_estimator(config: &RunConfig, master_seed: u64) -> Result<(PfeParams, Vec<f64>)> {
    let data = build_fit_data(config, master_seed)?;
    let initial = initial_params(config, &data)?;
    synth::fit_pfe(&data, &initial, config.pfe.fit.steps, config.pfe.fit.lr)
}

/// Decoder configuration with fully materialized operator state.
pub fn decoder_config(config: &RunConfig, pfe_params: PfeParams) -> Result<DecoderConfig> {
    let channels = config.scene.channels;
    let mut gate_rng = RngStream::new(config.cdo.weight_seed, 0);
    let cdo = CdoParams::seeded(channels, config.cdo.kernel, config.cdo.theta, &mut gate_rng)?;
    let extractor = match config.extractor.mode.as_str() {
        "attention" => {
            let mut rng = RngStream::new(config.extractor.seed, 0);
            ExtractorSetup::Explicit(ExtractorParams::attention_seeded(channels, &mut rng)?)
        }
        _ => ExtractorSetup::Identity,
    };
    Ok(DecoderConfig {
        num_stages: config.decoder.stages,
        num_tasks: config.scene.tasks,
        aggregation_weights: config.decoder.aggregation.clone(),
        dispatch_source: config.dispatch_source()?,
        pfe: PfeSetup::Shared(pfe_params),
        pbo: config.pbo_config()?,
        cdo: CdoSetup::Explicit(cdo),
        extractor,
    })
}

/// Runs `count` jobs across up to `jobs` worker threads and returns results
/// in index order regardless of completion order.
pub fn run_indexed<T, F>(count: usize, jobs: usize, f: F) -> CliResult<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> CliResult<T> + Sync,
{
    let jobs = jobs.max(1).min(count.max(1));
    if jobs <= 1 {
        return (0..count).map(&f).collect();
    }
    let mut slots: Vec<Option<CliResult<T>>> = (0..count).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots_mutex = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= count {
                    break;
                }
                let result = f(idx);
                let mut guard = slots_mutex.lock().expect("worker slot lock");
                guard[idx] = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.expect("every index computed"))
        .collect()
}

/// Maps library errors onto CLI exit semantics: everything at run time is a
/// runtime failure (config problems were rejected at load).
pub fn runtime_err(e: b3kit::Error) -> CliError {
    CliError::runtime(e)
}
