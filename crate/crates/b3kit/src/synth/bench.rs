//! Fusion-strategy benchmark over synthetic scenes.
//!
//! Three ways of forming the shared bridge are compared on identical
//! evidence draws: oracle precision weighting (`1 / sigma^2`), precision
//! predicted by a fitted estimator, and uniform evidence averaging. Each
//! strategy reports the latent mean squared error against the ground truth
//! and the decoded task metrics, with transfer gains measured against the
//! no-fusion baseline of decoding each task's own raw evidence.

use crate::error::{Error, Result};
use crate::field::{shape_mismatch, FieldTensor, PrecisionField, ScalarField};
use crate::metrics::{self, MetricDirection, TaskMetric};
use crate::pbo::{self, PboConfig};
use crate::pfe::{self, PfeFeatures, PfeParams};
use crate::rng::RngStream;

use super::scene::{emit_evidence, DecodedTasks, NoiseModel, SyntheticScene};

/// Pixel tolerance used by the edge F-measure throughout the benchmark.
pub const EDGE_TOLERANCE_RADIUS: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionStrategy {
    PosteriorOracle,
    PosteriorPfe,
    MeanBridge,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] = [
        FusionStrategy::PosteriorOracle,
        FusionStrategy::PosteriorPfe,
        FusionStrategy::MeanBridge,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::PosteriorOracle => "posterior_oracle",
            Self::PosteriorPfe => "posterior_pfe",
            Self::MeanBridge => "mean_bridge",
        }
    }
}

/// Benchmark configuration: fusion settings plus the fitted precision
/// estimator required by the `posterior_pfe` strategy.
#[derive(Debug, Clone, Default)]
pub struct FusionBenchConfig {
    pub pbo: PboConfig,
    pub fitted_pfe: Option<PfeParams>,
}

/// Decoded task metrics of one latent estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskScores {
    pub semseg_miou: f64,
    pub depth_rmse: f64,
    pub normal_merr: f64,
    pub edge_f: f64,
}

impl TaskScores {
    fn values(&self) -> [f64; 4] {
        [self.semseg_miou, self.depth_rmse, self.normal_merr, self.edge_f]
    }
}

const TASK_NAMES: [&str; 4] = ["semseg", "depth", "normal", "edge"];
const TASK_DIRECTIONS: [MetricDirection; 4] = [
    MetricDirection::HigherBetter,
    MetricDirection::LowerBetter,
    MetricDirection::LowerBetter,
    MetricDirection::HigherBetter,
];

/// One benchmark row.
#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub strategy: FusionStrategy,
    pub latent_mse: f64,
    pub scores: TaskScores,
    pub per_task_delta: [f64; 4],
    pub delta_mtl: f64,
}

pub fn bench_csv_header() -> &'static str {
    "trial,strategy,latent_mse,semseg_miou,depth_rmse,normal_merr,edge_f,delta_mtl"
}

impl BenchEntry {
    pub fn csv_row(&self, trial: usize) -> String {
        format!(
            "{trial},{},{},{},{},{},{},{}",
            self.strategy.name(),
            self.latent_mse,
            self.scores.semseg_miou,
            self.scores.depth_rmse,
            self.scores.normal_merr,
            self.scores.edge_f,
            self.delta_mtl
        )
    }
}

/// Mean squared deviation from the latent truth over all entries.
pub fn latent_mse(estimate: &FieldTensor, truth: &FieldTensor) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(shape_mismatch("latent_mse", truth.shape(), estimate.shape()));
    }
    let n = truth.data().len() as f64;
    Ok(estimate
        .data()
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Decoded task metrics of `decoded` against the scene's ground truth.
pub fn score_tasks(scene: &SyntheticScene, decoded: &DecodedTasks) -> Result<TaskScores> {
    Ok(TaskScores {
        semseg_miou: metrics::miou(&decoded.semantic, scene.semantic(), scene.class_count())?,
        depth_rmse: metrics::rmse(&decoded.depth, scene.depth())?,
        normal_merr: metrics::mean_angular_error(&decoded.normal, scene.normal())?,
        edge_f: metrics::edge_f_best(&decoded.edge_prob, &scene.edge_field(), EDGE_TOLERANCE_RADIUS)?.0,
    })
}

fn fused_precisions(
    strategy: FusionStrategy,
    reference: &FieldTensor,
    evidences: &[FieldTensor],
    oracle: &[PrecisionField],
    config: &FusionBenchConfig,
) -> Result<Vec<PrecisionField>> {
    match strategy {
        FusionStrategy::PosteriorOracle => Ok(oracle.to_vec()),
        FusionStrategy::MeanBridge => {
            let ones = ScalarField::filled(reference.height(), reference.width(), 1.0)?;
            Ok(vec![
                PrecisionField::new(ones).expect("positive");
                evidences.len()
            ])
        }
        FusionStrategy::PosteriorPfe => {
            let params = config.fitted_pfe.as_ref().ok_or_else(|| {
                Error::state("posterior_pfe strategy requested before fitting the estimator")
            })?;
            evidences
                .iter()
                .map(|evidence| {
                    let features = PfeFeatures::from_evidence(evidence, reference)?;
                    pfe::precision_field(&features, params)
                })
                .collect()
        }
    }
}

/// Runs one fusion trial with the given strategy. The evidence draw depends
/// only on `(scene, noise, rng)`, so different strategies called with the
/// same stream see identical observations.
pub fn run_fusion_bench(
    scene: &SyntheticScene,
    noise: &NoiseModel,
    strategy: FusionStrategy,
    config: &FusionBenchConfig,
    rng: &RngStream,
) -> Result<BenchEntry> {
    let (reference, evidences, oracle) = emit_evidence(scene, noise, rng);
    let precisions = fused_precisions(strategy, &reference, &evidences, &oracle, config)?;
    let bridge = pbo::posterior_bridge(
        &reference,
        &evidences.iter().collect::<Vec<_>>(),
        &precisions.iter().collect::<Vec<_>>(),
        &config.pbo,
    )?;
    let mse = latent_mse(&bridge, scene.latent_truth())?;
    let decoded = scene.decode_tasks(&bridge)?;
    let scores = score_tasks(scene, &decoded)?;

    // No-fusion baseline: each task type decodes its own raw evidence.
    let mut per_task_delta = [0.0; 4];
    for (task_idx, name) in TASK_NAMES.iter().enumerate() {
        let evidence = &evidences[task_idx % evidences.len()];
        let own = scene.decode_tasks(evidence)?;
        let baseline = score_tasks(scene, &own)?;
        let direction = TASK_DIRECTIONS[task_idx];
        let st = TaskMetric::new(*name, baseline.values()[task_idx], direction);
        let mt = TaskMetric::new(*name, scores.values()[task_idx], direction);
        per_task_delta[task_idx] = metrics::delta_tau(&mt, &st)?;
    }
    let delta_mtl = metrics::delta_mtl(&per_task_delta)?;
    Ok(BenchEntry {
        strategy,
        latent_mse: mse,
        scores,
        per_task_delta,
        delta_mtl,
    })
}

/// Per-task supervised fit data: evidence features against the oracle
/// log-precision targets `-ln sigma^2`.
pub fn fit_instances(
    scene: &SyntheticScene,
    noise: &NoiseModel,
    rng: &RngStream,
) -> Result<Vec<(PfeFeatures, ScalarField)>> {
    let (reference, evidences, _) = emit_evidence(scene, noise, rng);
    let mut out = Vec::with_capacity(evidences.len());
    for (t, evidence) in evidences.iter().enumerate() {
        let features = PfeFeatures::from_evidence(evidence, &reference)?;
        let targets = noise.variance(t).map(|v| -v.ln());
        out.push((features, targets));
    }
    Ok(out)
}

/// Rule bank seeded from the observed feature ranges of the fit data.
pub fn default_params_for(data: &[(PfeFeatures, ScalarField)]) -> Result<PfeParams> {
    if data.is_empty() {
        return Err(Error::EmptyInput {
            what: "fit instances",
        });
    }
    let mut sim_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut tv_range = (f64::INFINITY, f64::NEG_INFINITY);
    for (features, _) in data {
        let ((s_lo, s_hi), (t_lo, t_hi)) = features.ranges();
        sim_range = (sim_range.0.min(s_lo), sim_range.1.max(s_hi));
        tv_range = (tv_range.0.min(t_lo), tv_range.1.max(t_hi));
    }
    PfeParams::default_grid(sim_range, tv_range)
}

/// Full-batch gradient descent of the precision estimator on the supervised
/// log-precision objective. Returns the fitted parameters and the loss curve
/// (entry 0 is the initial loss, entry `steps` the final loss).
pub fn fit_pfe(
    data: &[(PfeFeatures, ScalarField)],
    initial: &PfeParams,
    steps: usize,
    learning_rate: f64,
) -> Result<(PfeParams, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput {
            what: "fit instances",
        });
    }
    if steps == 0 {
        return Err(Error::parameter("steps", "at least one step is required"));
    }
    if !learning_rate.is_finite() || learning_rate < 0.0 {
        return Err(Error::parameter(
            "learning_rate",
            format!("must be finite and >= 0, got {learning_rate}"),
        ));
    }
    let mut params = initial.clone();
    let mut curve = Vec::with_capacity(steps + 1);
    let batch = |p: &PfeParams| -> Result<(Vec<f64>, f64)> {
        let mut grad = vec![0.0; p.rule_count() * 7];
        let mut loss = 0.0;
        for (features, targets) in data {
            let (g, l) = pfe::pfe_fit_gradient(features, p, targets)?;
            for (acc, v) in grad.iter_mut().zip(&g.flat) {
                *acc += v / data.len() as f64;
            }
            loss += l / data.len() as f64;
        }
        Ok((grad, loss))
    };
    for step in 0..steps {
        let (grad, loss) = batch(&params)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("loss diverged to {loss}"),
            });
        }
        curve.push(loss);
        let mut flat = params.to_flat();
        for (p, g) in flat.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
        params = PfeParams::from_flat(&flat, params.epsilon)?;
    }
    let (_, final_loss) = batch(&params)?;
    if !final_loss.is_finite() {
        return Err(Error::Training {
            step: steps,
            message: format!("loss diverged to {final_loss}"),
        });
    }
    curve.push(final_loss);
    Ok((params, curve))
}

/// One equal-population precision bin.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionErrorBin {
    pub mean_precision: f64,
    pub mean_sq_error: f64,
    pub count: usize,
}

/// Equal-population binning of pixels by precision.
#[derive(Debug, Clone, PartialEq)]
pub struct BinTable {
    pub bins: Vec<PrecisionErrorBin>,
}

impl BinTable {
    /// CSV form `bin,mean_precision,mean_sq_error,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,mean_precision,mean_sq_error,count\n");
        for (i, b) in self.bins.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{}\n",
                b.mean_precision, b.mean_sq_error, b.count
            ));
        }
        out
    }
}

/// Sorts pixels by precision (stable in pixel order for ties) and splits
/// them into `num_bins` equal-population bins; bin counts partition the
/// pixel count exactly.
pub fn precision_error_bins(
    precision: &PrecisionField,
    squared_error: &ScalarField,
    num_bins: usize,
) -> Result<BinTable> {
    if !precision.as_field().same_shape(squared_error) {
        return Err(shape_mismatch(
            "precision_error_bins",
            (precision.height(), precision.width(), 1),
            (squared_error.height(), squared_error.width(), 1),
        ));
    }
    if num_bins < 2 {
        return Err(Error::parameter("num_bins", "at least two bins are required"));
    }
    let n = precision.data().len();
    if n < num_bins {
        return Err(Error::parameter(
            "num_bins",
            format!("{num_bins} bins for only {n} pixels"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| precision.data()[a].total_cmp(&precision.data()[b]));
    let base = n / num_bins;
    let remainder = n % num_bins;
    let mut bins = Vec::with_capacity(num_bins);
    let mut cursor = 0usize;
    for bin in 0..num_bins {
        let size = base + usize::from(bin < remainder);
        let members = &order[cursor..cursor + size];
        cursor += size;
        let mean_precision =
            members.iter().map(|&i| precision.data()[i]).sum::<f64>() / size as f64;
        let mean_sq_error =
            members.iter().map(|&i| squared_error.data()[i]).sum::<f64>() / size as f64;
        bins.push(PrecisionErrorBin {
            mean_precision,
            mean_sq_error,
            count: size,
        });
    }
    Ok(BinTable { bins })
}

/// Per-pixel squared deviation of an evidence tensor from the latent truth,
/// averaged over channels.
pub fn squared_error_map(evidence: &FieldTensor, truth: &FieldTensor) -> Result<ScalarField> {
    if evidence.shape() != truth.shape() {
        return Err(shape_mismatch("squared_error_map", truth.shape(), evidence.shape()));
    }
    let (h, w, c) = truth.shape();
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ch in 0..c {
                let d = evidence.get(y, x, ch) - truth.get(y, x, ch);
                acc += d * d;
            }
            data.push(acc / c as f64);
        }
    }
    Ok(ScalarField::from_op(h, w, data))
}
