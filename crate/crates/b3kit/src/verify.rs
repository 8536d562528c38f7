//! Property suites and independent numerical oracles.
//!
//! Each suite draws seeded random instances, checks one mathematical claim
//! of the operator stack, and reports every violated case. The oracles here
//! deliberately avoid the closed-form implementation paths they certify:
//! the negative log-posterior minimizer runs plain per-entry gradient
//! descent, and the fit-gradient check differentiates the loss by central
//! finite differences.

use crate::cdo::{self, CdoParams};
use crate::decoder::{self, DecoderConfig};
use crate::error::Result;
use crate::field::{FieldTensor, PrecisionField, ScalarField};
use crate::pbo::{self, PboConfig};
use crate::pfe::{self, FuzzyRule, PfeFeatures, PfeParams};
use crate::rng::RngStream;

/// Outcome of one property suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: String,
    pub cases: usize,
    pub failures: Vec<CaseFailure>,
}

#[derive(Debug, Clone)]
pub struct CaseFailure {
    pub case: usize,
    pub detail: String,
}

impl SuiteReport {
    fn new(suite: &str, cases: usize) -> Self {
        Self {
            suite: suite.to_string(),
            cases,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, case: usize, detail: impl Into<String>) {
        self.failures.push(CaseFailure {
            case,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Test hook for the verification pipeline: optionally corrupts the dispatch
/// update so the contraction suite must catch it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    None,
    /// Flips the sign of the dispatch step, turning the contraction into an
    /// expansion.
    CdoSignFlip,
}

/// Analytic gradient of the negative log-posterior at `candidate`:
/// `2 w0 (B - G) + 2 sum_t a_t (B - E_t)` per entry.
pub fn nlp_gradient(
    candidate: &FieldTensor,
    reference: &FieldTensor,
    evidences: &[&FieldTensor],
    precisions: &[&ScalarField],
    config: &PboConfig,
) -> Vec<f64> {
    let (h, w, c) = candidate.shape();
    let mut grad = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let b = candidate.get(y, x, ch);
                let mut g = 2.0 * config.w0() * (b - reference.get(y, x, ch));
                for (e, p) in evidences.iter().zip(precisions) {
                    g += 2.0 * p.get(y, x) * (b - e.get(y, x, ch));
                }
                grad.push(g);
            }
        }
    }
    grad
}

/// Gradient-descent minimizer of the negative log-posterior, independent of
/// the closed-form fusion path. The per-location step is
/// `0.1 / (w0 + sum_t a_t)`, which contracts the quadratic strictly.
pub fn nlp_minimize(
    reference: &FieldTensor,
    evidences: &[&FieldTensor],
    precisions: &[&ScalarField],
    config: &PboConfig,
    start: &FieldTensor,
    iterations: usize,
) -> FieldTensor {
    let (h, w, c) = reference.shape();
    let mut current = start.data().to_vec();
    let mut steps = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let total: f64 = config.w0() + precisions.iter().map(|p| p.get(y, x)).sum::<f64>();
            steps[y * w + x] = 0.1 / total;
        }
    }
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let step = steps[y * w + x];
                for ch in 0..c {
                    let idx = (y * w + x) * c + ch;
                    let b = current[idx];
                    let mut g = 2.0 * config.w0() * (b - reference.get(y, x, ch));
                    for (e, p) in evidences.iter().zip(precisions) {
                        g += 2.0 * p.get(y, x) * (b - e.get(y, x, ch));
                    }
                    current[idx] = b - step * g;
                }
            }
        }
    }
    FieldTensor::from_op(h, w, c, current)
}

struct FusionInstance {
    reference: FieldTensor,
    evidences: Vec<FieldTensor>,
    precisions: Vec<PrecisionField>,
    config: PboConfig,
}

fn random_fusion_instance(rng: &mut RngStream, h: usize, w: usize, c: usize) -> FusionInstance {
    let tasks = 1 + rng.index_below(5);
    let n = h * w * c;
    let reference = FieldTensor::from_op(h, w, c, (0..n).map(|_| rng.normal(0.0, 1.0)).collect());
    let evidences = (0..tasks)
        .map(|_| FieldTensor::from_op(h, w, c, (0..n).map(|_| rng.normal(0.0, 1.0)).collect()))
        .collect();
    let precisions = (0..tasks)
        .map(|_| {
            // Log-uniform over [1e-2, 1e2].
            let field = ScalarField::from_op(
                h,
                w,
                (0..h * w)
                    .map(|_| 10f64.powf(rng.uniform(-2.0, 2.0)))
                    .collect(),
            );
            PrecisionField::new(field).expect("positive by construction")
        })
        .collect();
    let config = PboConfig::new(10f64.powf(rng.uniform(-1.0, 1.0)), 0.5, true)
        .expect("valid by construction");
    FusionInstance {
        reference,
        evidences,
        precisions,
        config,
    }
}

/// Closed-form optimality: the fused bridge matches the gradient-descent
/// minimizer within 1e-6 in the max norm, and the analytic gradient at the
/// bridge vanishes to 1e-9 per entry.
pub fn suite_closed_form_optimality(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("closed_form_optimality", cases);
    let base = RngStream::new(seed, 0x10);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let inst = random_fusion_instance(&mut rng, 8, 8, 4);
        let e_refs: Vec<&FieldTensor> = inst.evidences.iter().collect();
        let p_refs: Vec<&PrecisionField> = inst.precisions.iter().collect();
        let fields: Vec<&ScalarField> = inst.precisions.iter().map(|p| p.as_field()).collect();
        let bridge = match pbo::posterior_bridge(&inst.reference, &e_refs, &p_refs, &inst.config) {
            Ok(b) => b,
            Err(e) => {
                report.fail(case, format!("bridge construction failed: {e}"));
                continue;
            }
        };
        let start = FieldTensor::from_op(
            8,
            8,
            4,
            (0..8 * 8 * 4).map(|_| rng.normal(0.0, 2.0)).collect(),
        );
        let minimized = nlp_minimize(&inst.reference, &e_refs, &fields, &inst.config, &start, 500);
        let max_diff = bridge
            .data()
            .iter()
            .zip(minimized.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if max_diff > 1e-6 {
            report.fail(case, format!("descent disagrees with closed form by {max_diff:e}"));
        }
        let grad = nlp_gradient(&bridge, &inst.reference, &e_refs, &fields, &inst.config);
        let max_grad = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
        if max_grad > 1e-9 {
            report.fail(case, format!("gradient at bridge is {max_grad:e}"));
        }
    }
    report
}

/// Permuting the (evidence, precision) pairs leaves the bridge bit-identical.
pub fn suite_bridge_permutation(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("bridge_permutation_invariance", cases);
    let base = RngStream::new(seed, 0x11);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let inst = random_fusion_instance(&mut rng, 3, 3, 2);
        let tasks = inst.evidences.len();
        let mut perm: Vec<usize> = (0..tasks).collect();
        // Fisher-Yates with the case stream.
        for i in (1..tasks).rev() {
            perm.swap(i, rng.index_below(i + 1));
        }
        let forward = pbo::posterior_bridge(
            &inst.reference,
            &inst.evidences.iter().collect::<Vec<_>>(),
            &inst.precisions.iter().collect::<Vec<_>>(),
            &inst.config,
        );
        let permuted = pbo::posterior_bridge(
            &inst.reference,
            &perm.iter().map(|&i| &inst.evidences[i]).collect::<Vec<_>>(),
            &perm.iter().map(|&i| &inst.precisions[i]).collect::<Vec<_>>(),
            &inst.config,
        );
        match (forward, permuted) {
            (Ok(a), Ok(b)) => {
                if a.data()
                    .iter()
                    .zip(b.data())
                    .any(|(x, y)| x.to_bits() != y.to_bits())
                {
                    report.fail(case, format!("bridge changed under permutation {perm:?}"));
                }
            }
            (Err(e), _) | (_, Err(e)) => report.fail(case, format!("fusion failed: {e}")),
        }
    }
    report
}

/// Scaling `w0` and every precision by the same positive factor leaves the
/// bridge unchanged to 1e-12.
pub fn suite_precision_scale_invariance(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("precision_scale_invariance", cases);
    let base = RngStream::new(seed, 0x12);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let inst = random_fusion_instance(&mut rng, 3, 3, 2);
        let lambda = 10f64.powf(rng.uniform(-3.0, 3.0));
        let scaled_config = PboConfig::new(inst.config.w0() * lambda, 0.5, true).unwrap();
        let scaled_precisions: Vec<PrecisionField> = inst
            .precisions
            .iter()
            .map(|p| p.scaled(lambda).unwrap())
            .collect();
        let a = pbo::posterior_bridge(
            &inst.reference,
            &inst.evidences.iter().collect::<Vec<_>>(),
            &inst.precisions.iter().collect::<Vec<_>>(),
            &inst.config,
        )
        .unwrap();
        let b = pbo::posterior_bridge(
            &inst.reference,
            &inst.evidences.iter().collect::<Vec<_>>(),
            &scaled_precisions.iter().collect::<Vec<_>>(),
            &scaled_config,
        )
        .unwrap();
        let max_diff = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if max_diff > 1e-12 {
            report.fail(case, format!("bridge moved by {max_diff:e} under scale {lambda:e}"));
        }
    }
    report
}

/// Bridge entries stay inside the elementwise envelope of the inputs, and
/// the corrected bridge stays on the segment between reference and bridge.
pub fn suite_envelope_containment(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("envelope_containment", cases);
    let base = RngStream::new(seed, 0x13);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let inst = random_fusion_instance(&mut rng, 3, 3, 2);
        let bridge = pbo::posterior_bridge(
            &inst.reference,
            &inst.evidences.iter().collect::<Vec<_>>(),
            &inst.precisions.iter().collect::<Vec<_>>(),
            &inst.config,
        )
        .unwrap();
        let (h, w, c) = bridge.shape();
        'entries: for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let mut lo = inst.reference.get(y, x, ch);
                    let mut hi = lo;
                    for e in &inst.evidences {
                        lo = lo.min(e.get(y, x, ch));
                        hi = hi.max(e.get(y, x, ch));
                    }
                    let v = bridge.get(y, x, ch);
                    if v < lo || v > hi {
                        report.fail(case, format!("bridge entry {v} outside [{lo}, {hi}]"));
                        break 'entries;
                    }
                }
            }
        }
        let corrected = pbo::posterior_correction(&inst.reference, &bridge, &inst.config).unwrap();
        for ((g, b), cb) in inst
            .reference
            .data()
            .iter()
            .zip(bridge.data())
            .zip(corrected.data())
        {
            if *cb < g.min(*b) || *cb > g.max(*b) {
                report.fail(case, format!("correction {cb} left segment [{g}, {b}]"));
                break;
            }
        }
    }
    report
}

/// Randomized dispatch invocations: ratio bounded by `1 - min beta`, strict
/// contraction, the per-entry identity at 1e-12 relative error, and hull
/// containment. Returns the measured ratios alongside the report.
pub fn suite_contraction(seed: u64, cases: usize, fault: FaultInjection) -> (SuiteReport, Vec<f64>) {
    let mut report = SuiteReport::new("contraction", cases);
    let base = RngStream::new(seed, 0x14);
    let mut ratios = Vec::with_capacity(cases);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let (h, w, c) = (4, 4, 3);
        let n = h * w * c;
        let state = FieldTensor::from_op(h, w, c, (0..n).map(|_| rng.normal(0.0, 1.0)).collect());
        let bridge = FieldTensor::from_op(h, w, c, (0..n).map(|_| rng.normal(0.0, 1.0)).collect());
        let precision = PrecisionField::new(ScalarField::from_op(
            h,
            w,
            (0..h * w).map(|_| 10f64.powf(rng.uniform(-1.0, 1.0))).collect(),
        ))
        .unwrap();
        let kernel = if rng.index_below(2) == 0 { 1 } else { 3 };
        let theta = rng.uniform(-2.0, 2.0);
        let params = match CdoParams::seeded(c, kernel, theta, &mut rng) {
            Ok(p) => p,
            Err(e) => {
                report.fail(case, format!("gate construction failed: {e}"));
                continue;
            }
        };
        let gate = cdo::dispatch_gate(&state, &bridge, &precision, &params).unwrap();
        let beta = cdo::effective_coefficient(&gate, theta);
        let after = match fault {
            FaultInjection::None => cdo::cdo_update(&state, &bridge, &beta).unwrap(),
            FaultInjection::CdoSignFlip => {
                // Corrupted update: steps away from the bridge.
                let (hh, ww, cc) = state.shape();
                let mut data = Vec::with_capacity(hh * ww * cc);
                for y in 0..hh {
                    for x in 0..ww {
                        let b = beta.get(y, x);
                        for ch in 0..cc {
                            let xv = state.get(y, x, ch);
                            let bv = bridge.get(y, x, ch);
                            data.push(xv + b * (xv - bv));
                        }
                    }
                }
                FieldTensor::from_op(hh, ww, cc, data)
            }
        };
        let ratio = cdo::contraction_ratio(&state, &after, &bridge).unwrap();
        ratios.push(ratio);
        let bound = 1.0 - beta.min();
        if ratio > bound + 1e-12 {
            report.fail(case, format!("ratio {ratio} exceeds 1 - min beta = {bound}"));
            continue;
        }
        if ratio >= 1.0 {
            report.fail(case, format!("ratio {ratio} is not a strict contraction"));
            continue;
        }
        let mut worst = 0.0f64;
        let mut peak = 0.0f64;
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let lhs = after.get(y, x, ch) - bridge.get(y, x, ch);
                    let rhs = (1.0 - beta.get(y, x)) * (state.get(y, x, ch) - bridge.get(y, x, ch));
                    worst = worst.max((lhs - rhs).abs());
                    peak = peak.max(rhs.abs());
                }
            }
        }
        if worst > 1e-12 * peak.max(1e-30) {
            report.fail(
                case,
                format!("per-entry identity off by {worst:e} at deviation scale {peak:e}"),
            );
            continue;
        }
        for ((xv, bv), av) in state.data().iter().zip(bridge.data()).zip(after.data()) {
            if *av < xv.min(*bv) || *av > xv.max(*bv) {
                report.fail(case, format!("update {av} left hull [{xv}, {bv}]"));
                break;
            }
        }
    }
    (report, ratios)
}

/// The estimated precision field is strictly positive and finite for random
/// parameters and features.
pub fn suite_softplus_positivity(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("softplus_positivity", cases);
    let base = RngStream::new(seed, 0x15);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let (features, params) = random_pfe_instance(&mut rng);
        match pfe::precision_field(&features, &params) {
            Ok(alpha) => {
                if let Some(v) = alpha.data().iter().find(|v| !v.is_finite() || **v <= 0.0) {
                    report.fail(case, format!("precision entry {v} not strictly positive"));
                }
            }
            Err(e) => report.fail(case, format!("precision estimation failed: {e}")),
        }
    }
    report
}

/// Normalized activations stay strictly inside (0, 1) per rule and in sum.
pub fn suite_rule_normalization(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("rule_activation_normalization", cases);
    let base = RngStream::new(seed, 0x16);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let (features, params) = random_pfe_instance(&mut rng);
        let mubar = pfe::rule_activations(&features, &params).unwrap();
        let n = features.height() * features.width();
        for i in 0..n {
            let mut total = 0.0;
            for field in &mubar {
                let v = field.data()[i];
                if v.is_nan() || v <= 0.0 || v >= 1.0 {
                    report.fail(case, format!("activation {v} outside (0, 1)"));
                }
                total += v;
            }
            if total.is_nan() || total <= 0.0 || total >= 1.0 {
                report.fail(case, format!("activation sum {total} outside (0, 1)"));
                break;
            }
        }
    }
    report
}

/// Analytic fit gradient against central finite differences (step 1e-5,
/// relative error below 1e-4).
pub fn suite_pfe_gradient_check(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("pfe_gradient_check", cases);
    let base = RngStream::new(seed, 0x17);
    let step = 1e-5;
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let (features, params) = random_pfe_instance(&mut rng);
        let n = features.height() * features.width();
        let targets = ScalarField::from_op(
            features.height(),
            features.width(),
            (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect(),
        );
        let (grad, _) = pfe::pfe_fit_gradient(&features, &params, &targets).unwrap();
        let flat = params.to_flat();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += step;
            let mut minus = flat.clone();
            minus[i] -= step;
            let lp = pfe::pfe_fit_gradient(
                &features,
                &PfeParams::from_flat(&plus, params.epsilon).unwrap(),
                &targets,
            )
            .unwrap()
            .1;
            let lm = pfe::pfe_fit_gradient(
                &features,
                &PfeParams::from_flat(&minus, params.epsilon).unwrap(),
                &targets,
            )
            .unwrap()
            .1;
            let fd = (lp - lm) / (2.0 * step);
            let a = grad.flat[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            if rel > 1e-4 {
                report.fail(case, format!("entry {i}: analytic {a} vs fd {fd} (rel {rel:e})"));
                break;
            }
        }
    }
    report
}

fn random_pfe_instance(rng: &mut RngStream) -> (PfeFeatures, PfeParams) {
    let h = 2 + rng.index_below(3);
    let w = 2 + rng.index_below(3);
    let sim = ScalarField::from_op(h, w, (0..h * w).map(|_| rng.uniform(-1.0, 1.0)).collect());
    let tv = ScalarField::from_op(h, w, (0..h * w).map(|_| rng.uniform(0.0, 2.5)).collect());
    let features = PfeFeatures::new(sim, tv).expect("valid by construction");
    let rules = (0..1 + rng.index_below(4))
        .map(|_| FuzzyRule {
            center: [rng.uniform(-1.5, 1.5), rng.uniform(-0.5, 3.0)],
            scale: [rng.uniform(0.2, 1.5), rng.uniform(0.2, 1.5)],
            a_sim: rng.uniform(-3.0, 3.0),
            a_tv: rng.uniform(-3.0, 3.0),
            bias: rng.uniform(-3.0, 3.0),
        })
        .collect();
    let params = PfeParams::new(rules, pfe::DEFAULT_EPSILON).expect("valid by construction");
    (features, params)
}

/// Permuting the task list permutes decoder outputs bit-identically.
pub fn suite_task_permutation_equivariance(seed: u64, cases: usize) -> SuiteReport {
    let mut report = SuiteReport::new("task_permutation_equivariance", cases);
    let base = RngStream::new(seed, 0x18);
    for case in 0..cases {
        let mut rng = base.derive(case as u64);
        let tasks = 2 + rng.index_below(3);
        let (h, w, c) = (3, 3, 2);
        let states: Vec<FieldTensor> = (0..tasks)
            .map(|_| {
                FieldTensor::from_op(h, w, c, (0..h * w * c).map(|_| rng.normal(0.0, 1.0)).collect())
            })
            .collect();
        let mut config = DecoderConfig::with_defaults(
            tasks,
            PfeParams::default_grid((-1.0, 1.0), (0.0, 2.0)).unwrap(),
        );
        config.num_stages = 2;
        config.aggregation_weights = vec![1.0; 2];
        let runner = RngStream::new(seed ^ 0xABCD, case as u64);
        let (finals, _) = match decoder::propagate(&states, &config, &runner) {
            Ok(r) => r,
            Err(e) => {
                report.fail(case, format!("propagate failed: {e}"));
                continue;
            }
        };
        let mut perm: Vec<usize> = (0..tasks).collect();
        for i in (1..tasks).rev() {
            perm.swap(i, rng.index_below(i + 1));
        }
        let permuted_states: Vec<FieldTensor> = perm.iter().map(|&i| states[i].clone()).collect();
        let (permuted_finals, _) = decoder::propagate(&permuted_states, &config, &runner).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            if permuted_finals[slot]
                .data()
                .iter()
                .zip(finals[src].data())
                .any(|(a, b)| a.to_bits() != b.to_bits())
            {
                report.fail(case, format!("output for task {src} changed under {perm:?}"));
                break;
            }
        }
    }
    report
}

/// Full verification battery with the case counts used by the CLI.
pub fn run_all_suites(seed: u64, fault: FaultInjection) -> Result<Vec<SuiteReport>> {
    let (contraction, _) = suite_contraction(seed, 1000, fault);
    Ok(vec![
        suite_closed_form_optimality(seed, 100),
        suite_bridge_permutation(seed, 1000),
        suite_precision_scale_invariance(seed, 1000),
        suite_envelope_containment(seed, 1000),
        contraction,
        suite_softplus_positivity(seed, 1000),
        suite_rule_normalization(seed, 1000),
        suite_pfe_gradient_check(seed, 50),
        suite_task_permutation_equivariance(seed, 1000),
    ])
}
