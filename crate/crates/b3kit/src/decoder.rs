//! Multi-stage bridge propagation.
//!
//! Each stage extracts per-task evidence against a shared reference,
//! estimates precision, fuses the posterior bridge, optionally applies the
//! bounded correction, and dispatches the result back to every task state
//! through the contractive update. The stage-1 reference is the mean of the
//! initial task states; later stages reuse the previous stage's dispatched
//! bridge. Final outputs aggregate the per-stage states with scalar weights.
//!
//! All randomness (seeded gate weights, attention projections) is derived
//! from the caller's [`RngStream`], so a run is a pure function of
//! `(inputs, config, seed)`.

use std::path::Path;

use crate::cdo::{self, CdoParams};
use crate::error::{Error, Result};
use crate::field::{shape_mismatch, sum_value_ordered, FieldTensor, PrecisionField};
use crate::io;
use crate::pbo::{self, ExtractorParams, PboConfig};
use crate::pfe::{self, PfeFeatures, PfeParams};
use crate::rng::RngStream;

const SALT_CDO_WEIGHTS: u64 = 0x51;
const SALT_EXTRACTOR: u64 = 0x52;

/// Which bridge form the dispatch step consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchSource {
    ClosedForm,
    /// The corrected bridge when correction is enabled (the default); falls
    /// back to the closed form when correction is disabled.
    Corrected,
}

/// Precision estimator parameters, shared across tasks or one bank per task.
#[derive(Debug, Clone, PartialEq)]
pub enum PfeSetup {
    Shared(PfeParams),
    PerTask(Vec<PfeParams>),
}

/// Gate parameterization: explicit weights or a seeded draw at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum CdoSetup {
    Explicit(CdoParams),
    Seeded { kernel: usize, theta: f64 },
}

/// Evidence extractor choice; `Attention` draws seeded projections at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorSetup {
    Identity,
    Attention,
    Explicit(ExtractorParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub num_stages: usize,
    pub num_tasks: usize,
    /// One scalar weight per stage for the final aggregation.
    pub aggregation_weights: Vec<f64>,
    pub dispatch_source: DispatchSource,
    pub pfe: PfeSetup,
    pub pbo: PboConfig,
    pub cdo: CdoSetup,
    pub extractor: ExtractorSetup,
}

impl DecoderConfig {
    /// Three identity-weighted stages, shared PFE, seeded per-location gate,
    /// identity extractor, corrected-bridge dispatch.
    pub fn with_defaults(num_tasks: usize, pfe: PfeParams) -> Self {
        Self {
            num_stages: 3,
            num_tasks,
            aggregation_weights: vec![1.0; 3],
            dispatch_source: DispatchSource::Corrected,
            pfe: PfeSetup::Shared(pfe),
            pbo: PboConfig::default(),
            cdo: CdoSetup::Seeded {
                kernel: 1,
                theta: 0.0,
            },
            extractor: ExtractorSetup::Identity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 {
            return Err(Error::parameter("num_stages", "must be >= 1"));
        }
        if self.num_tasks == 0 {
            return Err(Error::parameter("num_tasks", "must be >= 1"));
        }
        if self.aggregation_weights.len() != self.num_stages {
            return Err(Error::parameter(
                "aggregation_weights",
                format!(
                    "{} weights for {} stages",
                    self.aggregation_weights.len(),
                    self.num_stages
                ),
            ));
        }
        if self.aggregation_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::parameter("aggregation_weights", "weights must be finite"));
        }
        match &self.pfe {
            PfeSetup::Shared(p) => p.validate()?,
            PfeSetup::PerTask(banks) => {
                if banks.len() != self.num_tasks {
                    return Err(Error::parameter(
                        "pfe",
                        format!("{} rule banks for {} tasks", banks.len(), self.num_tasks),
                    ));
                }
                for p in banks {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    fn pfe_for_task(&self, task: usize) -> &PfeParams {
        match &self.pfe {
            PfeSetup::Shared(p) => p,
            PfeSetup::PerTask(banks) => &banks[task],
        }
    }

    /// Resolves seeded operator state for fields with `channels` channels.
    fn materialize(&self, channels: usize, rng: &RngStream) -> Result<(CdoParams, ExtractorParams)> {
        let cdo_params = match &self.cdo {
            CdoSetup::Explicit(p) => {
                if p.channels() != channels {
                    return Err(Error::parameter(
                        "cdo",
                        format!("gate built for {} channels, fields have {channels}", p.channels()),
                    ));
                }
                p.clone()
            }
            CdoSetup::Seeded { kernel, theta } => {
                let mut stream = rng.derive(SALT_CDO_WEIGHTS);
                CdoParams::seeded(channels, *kernel, *theta, &mut stream)?
            }
        };
        let extractor = match &self.extractor {
            ExtractorSetup::Identity => ExtractorParams::identity(),
            ExtractorSetup::Attention => {
                let mut stream = rng.derive(SALT_EXTRACTOR);
                ExtractorParams::attention_seeded(channels, &mut stream)?
            }
            ExtractorSetup::Explicit(p) => p.clone(),
        };
        Ok((cdo_params, extractor))
    }
}

/// Per-task intermediates recorded for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskStageRecord {
    pub evidence: FieldTensor,
    pub precision: PrecisionField,
    pub state: FieldTensor,
    /// `||X+ - B|| / ||X - B||` against the dispatched bridge; 0 when the
    /// incoming state already coincides with the bridge.
    pub contraction_ratio: f64,
}

/// One stage of the trace: both bridge forms plus per-task records.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub bridge: FieldTensor,
    pub corrected_bridge: FieldTensor,
    pub tasks: Vec<TaskStageRecord>,
}

/// Complete propagation trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub dispatch_source: DispatchSource,
    pub stages: Vec<StageRecord>,
}

impl StageTrace {
    /// The bridge form that stage `k` (0-based) dispatched to the tasks.
    pub fn dispatched_bridge(&self, stage: usize) -> &FieldTensor {
        match self.dispatch_source {
            DispatchSource::ClosedForm => &self.stages[stage].bridge,
            DispatchSource::Corrected => &self.stages[stage].corrected_bridge,
        }
    }

    /// CSV rows `stage,task,contraction_ratio,bridge_mse_vs_truth` where the
    /// MSE column compares each stage's dispatched bridge against `truth`.
    pub fn to_csv(&self, truth: &FieldTensor) -> Result<String> {
        let mut out = String::from("stage,task,contraction_ratio,bridge_mse_vs_truth\n");
        for (k, stage) in self.stages.iter().enumerate() {
            let bridge = self.dispatched_bridge(k);
            if bridge.shape() != truth.shape() {
                return Err(shape_mismatch("trace_csv", truth.shape(), bridge.shape()));
            }
            let diff = bridge.sub(truth)?;
            let mse = diff.data().iter().map(|v| v * v).sum::<f64>() / diff.data().len() as f64;
            for (t, task) in stage.tasks.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", k + 1, t, task.contraction_ratio, mse));
            }
        }
        Ok(out)
    }

    /// Writes every intermediate field below `dir`:
    /// `stage<k>/task<t>/{evidence,precision,state}.b3f` and
    /// `stage<k>/bridge.b3f` (the dispatched form).
    pub fn dump_fields(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        for (k, stage) in self.stages.iter().enumerate() {
            let stage_dir = dir.join(format!("stage{}", k + 1));
            std::fs::create_dir_all(&stage_dir)?;
            io::write_field(stage_dir.join("bridge.b3f"), self.dispatched_bridge(k))?;
            for (t, task) in stage.tasks.iter().enumerate() {
                let task_dir = stage_dir.join(format!("task{t}"));
                std::fs::create_dir_all(&task_dir)?;
                io::write_field(task_dir.join("evidence.b3f"), &task.evidence)?;
                io::write_field(
                    task_dir.join("precision.b3f"),
                    &task.precision.as_field().to_tensor(),
                )?;
                io::write_field(task_dir.join("state.b3f"), &task.state)?;
            }
        }
        Ok(())
    }
}

/// Shared reference for a stage: the elementwise mean of the initial task
/// states at stage 1, the previous dispatched bridge afterwards. The mean is
/// reduced in canonical value order so it is exact under task permutation.
pub fn build_reference(
    stage_index: usize,
    initial_states: &[FieldTensor],
    previous_bridge: Option<&FieldTensor>,
) -> Result<FieldTensor> {
    if stage_index == 0 {
        return Err(Error::parameter("stage_index", "stages are numbered from 1"));
    }
    if initial_states.is_empty() {
        return Err(Error::EmptyInput {
            what: "initial task states",
        });
    }
    if stage_index > 1 {
        return previous_bridge.cloned().ok_or_else(|| {
            Error::state(format!("stage {stage_index} has no previous bridge to reference"))
        });
    }
    let first = &initial_states[0];
    for s in initial_states {
        if s.shape() != first.shape() {
            return Err(shape_mismatch("build_reference", first.shape(), s.shape()));
        }
    }
    let (h, w, c) = first.shape();
    let tasks = initial_states.len() as f64;
    let mut terms = vec![0.0; initial_states.len()];
    let mut data = Vec::with_capacity(h * w * c);
    for i in 0..h * w * c {
        for (t, s) in initial_states.iter().enumerate() {
            terms[t] = s.data()[i];
        }
        data.push(sum_value_ordered(&mut terms) / tasks);
    }
    Ok(FieldTensor::from_op(h, w, c, data))
}

struct StageOutcome {
    states: Vec<FieldTensor>,
    dispatched: FieldTensor,
    record: StageRecord,
}

fn stage_pass(
    states: &[FieldTensor],
    reference: &FieldTensor,
    config: &DecoderConfig,
    cdo_params: &CdoParams,
    extractor: &ExtractorParams,
) -> Result<StageOutcome> {
    let mut evidences = Vec::with_capacity(states.len());
    let mut precisions = Vec::with_capacity(states.len());
    for (t, state) in states.iter().enumerate() {
        let evidence = pbo::extract_evidence(state, reference, extractor)?;
        let features = PfeFeatures::from_evidence(&evidence, reference)?;
        let precision = pfe::precision_field(&features, config.pfe_for_task(t))?;
        evidences.push(evidence);
        precisions.push(precision);
    }
    let bridge = pbo::posterior_bridge(
        reference,
        &evidences.iter().collect::<Vec<_>>(),
        &precisions.iter().collect::<Vec<_>>(),
        &config.pbo,
    )?;
    let corrected = pbo::posterior_correction(reference, &bridge, &config.pbo)?;
    let dispatched = match config.dispatch_source {
        DispatchSource::ClosedForm => bridge.clone(),
        DispatchSource::Corrected => corrected.clone(),
    };

    let mut new_states = Vec::with_capacity(states.len());
    let mut task_records = Vec::with_capacity(states.len());
    for (t, state) in states.iter().enumerate() {
        let gate = cdo::dispatch_gate(state, &dispatched, &precisions[t], cdo_params)?;
        let beta = cdo::effective_coefficient(&gate, cdo_params.theta());
        let updated = cdo::cdo_update(state, &dispatched, &beta)?;
        let deviation = state.sub(&dispatched)?.frobenius_norm();
        let ratio = if deviation == 0.0 {
            // The state already sits on the bridge; the update is a no-op.
            0.0
        } else {
            cdo::contraction_ratio(state, &updated, &dispatched)?
        };
        task_records.push(TaskStageRecord {
            evidence: evidences[t].clone(),
            precision: precisions[t].clone(),
            state: updated.clone(),
            contraction_ratio: ratio,
        });
        new_states.push(updated);
    }
    Ok(StageOutcome {
        states: new_states,
        dispatched,
        record: StageRecord {
            bridge,
            corrected_bridge: corrected,
            tasks: task_records,
        },
    })
}

/// Runs a single stage against an explicit reference; seeded operator state
/// is derived from `rng` without advancing it.
pub fn run_stage(
    states: &[FieldTensor],
    reference: &FieldTensor,
    config: &DecoderConfig,
    rng: &RngStream,
) -> Result<(Vec<FieldTensor>, FieldTensor, StageRecord)> {
    config.validate()?;
    check_states(states, config)?;
    let (cdo_params, extractor) = config.materialize(states[0].channels(), rng)?;
    let outcome = stage_pass(states, reference, config, &cdo_params, &extractor)?;
    Ok((outcome.states, outcome.dispatched, outcome.record))
}

fn check_states(states: &[FieldTensor], config: &DecoderConfig) -> Result<()> {
    if states.len() != config.num_tasks {
        return Err(Error::parameter(
            "states",
            format!("{} states for {} tasks", states.len(), config.num_tasks),
        ));
    }
    let first = &states[0];
    for s in states {
        if s.shape() != first.shape() {
            return Err(shape_mismatch("propagate", first.shape(), s.shape()));
        }
    }
    Ok(())
}

/// Full multi-stage propagation: threads states and references through every
/// stage and aggregates the per-stage outputs with the configured weights.
pub fn propagate(
    initial_states: &[FieldTensor],
    config: &DecoderConfig,
    rng: &RngStream,
) -> Result<(Vec<FieldTensor>, StageTrace)> {
    config.validate()?;
    check_states(initial_states, config)?;
    let (cdo_params, extractor) = config.materialize(initial_states[0].channels(), rng)?;

    let mut states: Vec<FieldTensor> = initial_states.to_vec();
    let mut previous_bridge: Option<FieldTensor> = None;
    let mut stages = Vec::with_capacity(config.num_stages);
    for k in 1..=config.num_stages {
        let reference = build_reference(k, initial_states, previous_bridge.as_ref())?;
        let outcome = stage_pass(&states, &reference, config, &cdo_params, &extractor)?;
        states = outcome.states;
        previous_bridge = Some(outcome.dispatched);
        stages.push(outcome.record);
    }

    let (h, w, c) = initial_states[0].shape();
    let mut finals = Vec::with_capacity(config.num_tasks);
    for t in 0..config.num_tasks {
        let mut data = vec![0.0; h * w * c];
        for (k, stage) in stages.iter().enumerate() {
            let phi = config.aggregation_weights[k];
            for (out, v) in data.iter_mut().zip(stage.tasks[t].state.data()) {
                *out += phi * v;
            }
        }
        finals.push(FieldTensor::from_op(h, w, c, data));
    }
    Ok((
        finals,
        StageTrace {
            dispatch_source: config.dispatch_source,
            stages,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ScalarField;
    use crate::pfe::FuzzyRule;

    fn default_pfe() -> PfeParams {
        PfeParams::default_grid((-1.0, 1.0), (0.0, 2.0)).unwrap()
    }

    fn random_states(rng: &mut RngStream, tasks: usize, h: usize, w: usize, c: usize) -> Vec<FieldTensor> {
        (0..tasks)
            .map(|_| {
                FieldTensor::from_vec(h, w, c, rng.normal_vec(h * w * c, 0.0, 1.0).unwrap()).unwrap()
            })
            .collect()
    }

    #[test]
    fn reference_mean_of_equal_states() {
        let s = FieldTensor::filled(2, 2, 2, 1.5).unwrap();
        let g = build_reference(1, &[s.clone(), s.clone()], None).unwrap();
        assert_eq!(g, s);
    }

    #[test]
    fn reference_arithmetic_mean() {
        let a = FieldTensor::filled(1, 1, 1, 0.0).unwrap();
        let b = FieldTensor::filled(1, 1, 1, 2.0).unwrap();
        let g = build_reference(1, &[a, b], None).unwrap();
        assert_eq!(g.get(0, 0, 0), 1.0);
    }

    #[test]
    fn reference_later_stage_passes_previous_bridge() {
        let s = FieldTensor::filled(1, 1, 1, 0.0).unwrap();
        let prev = FieldTensor::filled(1, 1, 1, 7.5).unwrap();
        let g = build_reference(2, std::slice::from_ref(&s), Some(&prev)).unwrap();
        assert_eq!(g, prev);
        assert!(matches!(
            build_reference(2, &[s], None),
            Err(Error::State { .. })
        ));
    }

    #[test]
    fn stage_fixed_point_when_state_equals_reference() {
        let mut rng = RngStream::new(41, 0);
        let state =
            FieldTensor::from_vec(3, 3, 2, rng.normal_vec(18, 0.5, 1.0).unwrap()).unwrap();
        let config = DecoderConfig::with_defaults(1, default_pfe());
        let base = RngStream::new(41, 1);
        let (states, dispatched, record) =
            run_stage(std::slice::from_ref(&state), &state, &config, &base).unwrap();
        assert_eq!(record.bridge, state);
        assert_eq!(dispatched, state);
        assert_eq!(states[0], state);
        assert_eq!(record.tasks[0].contraction_ratio, 0.0);
    }

    #[test]
    fn stage_contraction_ratio_below_one() {
        let mut rng = RngStream::new(42, 0);
        for trial in 0..20 {
            let states = random_states(&mut rng, 3, 3, 3, 2);
            let config = DecoderConfig::with_defaults(3, default_pfe());
            let reference = build_reference(1, &states, None).unwrap();
            let base = RngStream::new(42, 100 + trial);
            let (_, _, record) = run_stage(&states, &reference, &config, &base).unwrap();
            for task in &record.tasks {
                assert!(task.contraction_ratio < 1.0);
            }
        }
    }

    #[test]
    fn stage_bridge_approaches_evidence_mean_under_large_precision() {
        // A single rule with a huge bias drives every precision to ~1e6,
        // which swamps the unit prior: the bridge must sit within 1e-3 of
        // the plain evidence mean, and the independent gradient-descent
        // minimizer must agree.
        let mut rng = RngStream::new(43, 0);
        let states = random_states(&mut rng, 3, 2, 2, 2);
        let pfe_params = PfeParams::new(
            vec![FuzzyRule {
                center: [0.0, 0.0],
                scale: [100.0, 100.0],
                a_sim: 0.0,
                a_tv: 0.0,
                bias: 1.0e6,
            }],
            1e-6,
        )
        .unwrap();
        let mut config = DecoderConfig::with_defaults(3, pfe_params);
        config.dispatch_source = DispatchSource::ClosedForm;
        let reference = build_reference(1, &states, None).unwrap();
        let base = RngStream::new(43, 1);
        let (_, _, record) = run_stage(&states, &reference, &config, &base).unwrap();

        let mean = build_reference(1, &states, None).unwrap();
        for (b, m) in record.bridge.data().iter().zip(mean.data()) {
            assert!((b - m).abs() < 1e-3, "bridge {b} vs evidence mean {m}");
        }

        let fields: Vec<ScalarField> = record
            .tasks
            .iter()
            .map(|t| t.precision.as_field().clone())
            .collect();
        let minimized = crate::verify::nlp_minimize(
            &reference,
            &states.iter().collect::<Vec<_>>(),
            &fields.iter().collect::<Vec<_>>(),
            &config.pbo,
            &reference,
            500,
        );
        for (b, m) in record.bridge.data().iter().zip(minimized.data()) {
            assert!((b - m).abs() < 1e-6);
        }
    }

    #[test]
    fn propagate_single_stage_identity_aggregation() {
        let mut rng = RngStream::new(44, 0);
        let states = random_states(&mut rng, 2, 2, 2, 2);
        let mut config = DecoderConfig::with_defaults(2, default_pfe());
        config.num_stages = 1;
        config.aggregation_weights = vec![1.0];
        let base = RngStream::new(44, 1);
        let (finals, trace) = propagate(&states, &config, &base).unwrap();
        assert_eq!(finals[0], trace.stages[0].tasks[0].state);
        assert_eq!(finals[1], trace.stages[0].tasks[1].state);
    }

    #[test]
    fn propagate_selector_weights_pick_last_stage() {
        let mut rng = RngStream::new(45, 0);
        let states = random_states(&mut rng, 2, 2, 2, 2);
        let mut config = DecoderConfig::with_defaults(2, default_pfe());
        config.aggregation_weights = vec![0.0, 0.0, 1.0];
        let base = RngStream::new(45, 1);
        let (finals, trace) = propagate(&states, &config, &base).unwrap();
        for t in 0..2 {
            let expected = &trace.stages[2].tasks[t].state;
            for (a, b) in finals[t].data().iter().zip(expected.data()) {
                assert_eq!(*a, *b);
            }
        }
    }

    #[test]
    fn propagate_stagewise_nonexpansive() {
        let mut rng = RngStream::new(46, 0);
        let states = random_states(&mut rng, 3, 3, 3, 2);
        let config = DecoderConfig::with_defaults(3, default_pfe());
        let base = RngStream::new(46, 1);
        let (_, trace) = propagate(&states, &config, &base).unwrap();
        for k in 0..trace.stages.len() {
            let bridge = trace.dispatched_bridge(k);
            for t in 0..3 {
                let before = if k == 0 {
                    &states[t]
                } else {
                    &trace.stages[k - 1].tasks[t].state
                };
                let after = &trace.stages[k].tasks[t].state;
                let d_before = before.sub(bridge).unwrap().frobenius_norm();
                let d_after = after.sub(bridge).unwrap().frobenius_norm();
                assert!(d_after <= d_before + 1e-12);
            }
        }
    }

    #[test]
    fn propagate_deterministic_given_seed() {
        let mut rng = RngStream::new(47, 0);
        let states = random_states(&mut rng, 2, 3, 3, 2);
        let mut config = DecoderConfig::with_defaults(2, default_pfe());
        config.extractor = ExtractorSetup::Attention;
        let run = |seed: u64| {
            let base = RngStream::new(seed, 9);
            propagate(&states, &config, &base).unwrap()
        };
        let (f1, t1) = run(7);
        let (f2, t2) = run(7);
        for (a, b) in f1.iter().zip(&f2) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(t1.stages.len(), t2.stages.len());
        let (f3, _) = run(8);
        assert!(f1
            .iter()
            .zip(&f3)
            .any(|(a, b)| a.data() != b.data()));
    }

    #[test]
    fn propagate_task_permutation_equivariance() {
        let mut rng = RngStream::new(48, 0);
        let states = random_states(&mut rng, 4, 2, 3, 2);
        let config = DecoderConfig::with_defaults(4, default_pfe());
        let base = RngStream::new(48, 1);
        let (finals, _) = propagate(&states, &config, &base).unwrap();
        let perm = [3usize, 1, 0, 2];
        let permuted_states: Vec<FieldTensor> = perm.iter().map(|&i| states[i].clone()).collect();
        let (permuted_finals, _) = propagate(&permuted_states, &config, &base).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            for (a, b) in permuted_finals[slot].data().iter().zip(finals[src].data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn trace_is_complete_and_exports() {
        let mut rng = RngStream::new(49, 0);
        let states = random_states(&mut rng, 2, 2, 2, 2);
        let config = DecoderConfig::with_defaults(2, default_pfe());
        let base = RngStream::new(49, 1);
        let (_, trace) = propagate(&states, &config, &base).unwrap();
        assert_eq!(trace.stages.len(), 3);
        for stage in &trace.stages {
            assert_eq!(stage.tasks.len(), 2);
            assert_eq!(stage.bridge.shape(), (2, 2, 2));
            assert_eq!(stage.corrected_bridge.shape(), (2, 2, 2));
            for task in &stage.tasks {
                assert_eq!(task.evidence.shape(), (2, 2, 2));
                assert_eq!(task.state.shape(), (2, 2, 2));
                assert!(task.contraction_ratio >= 0.0 && task.contraction_ratio < 1.0);
            }
        }

        let truth = FieldTensor::filled(2, 2, 2, 0.0).unwrap();
        let csv = trace.to_csv(&truth).unwrap();
        assert!(csv.starts_with("stage,task,contraction_ratio,bridge_mse_vs_truth\n"));
        assert_eq!(csv.lines().count(), 1 + 3 * 2);

        let dir = tempfile::tempdir().unwrap();
        trace.dump_fields(dir.path()).unwrap();
        for k in 1..=3 {
            assert!(dir.path().join(format!("stage{k}/bridge.b3f")).is_file());
            for t in 0..2 {
                for name in ["evidence", "precision", "state"] {
                    assert!(dir
                        .path()
                        .join(format!("stage{k}/task{t}/{name}.b3f"))
                        .is_file());
                }
            }
        }
        let loaded = io::read_field(dir.path().join("stage1/bridge.b3f")).unwrap();
        assert_eq!(&loaded, trace.dispatched_bridge(0));
    }

    #[test]
    fn config_validation_errors() {
        let mut config = DecoderConfig::with_defaults(2, default_pfe());
        config.aggregation_weights = vec![1.0];
        assert!(config.validate().is_err());
        let mut config = DecoderConfig::with_defaults(0, default_pfe());
        config.num_tasks = 0;
        assert!(config.validate().is_err());
        let mut config = DecoderConfig::with_defaults(2, default_pfe());
        config.pfe = PfeSetup::PerTask(vec![default_pfe()]);
        assert!(config.validate().is_err());
    }
}
