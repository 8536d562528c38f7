//! Contractive dispatch of the bridge back to task states.
//!
//! A per-location gate is computed from the concatenated task state, bridge
//! and precision channels, squashed through a sigmoid, and scaled by the
//! global step `eta = sigmoid(theta)`:
//!
//! ```text
//! g(x)    = sigmoid(conv([X(x), B(x), a(x)]))
//! beta(x) = sigmoid(theta) * g(x),  0 < beta(x) < 1
//! X+(x)   = X(x) + beta(x) (B(x) - X(x))
//! ```
//!
//! Because `beta` stays inside the open unit interval, each update satisfies
//! `X+ - B = (1 - beta)(X - B)` per entry, so the bridge-to-task deviation
//! never grows: the dispatch is locally non-expansive with ratio at most
//! `1 - min beta`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{shape_mismatch, FieldTensor, PrecisionField, ScalarField};
use crate::rng::RngStream;

/// Largest representable double below 1; sigmoid outputs are clamped into
/// `[MIN_POSITIVE, SIGMOID_CEIL]` so gates stay strictly inside (0, 1).
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic sigmoid, clamped to the representable interior of (0, 1).
pub fn sigmoid(v: f64) -> f64 {
    let s = if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, SIGMOID_CEIL)
}

/// Gate parameters: an affine spatial map over the `2C + 1` concatenated
/// channels (kernel size 1 or 3, replicate padding) plus the global step
/// logit `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct CdoParams {
    channels: usize,
    kernel: usize,
    weights: Vec<f64>,
    bias: f64,
    theta: f64,
}

impl CdoParams {
    pub fn new(
        channels: usize,
        kernel: usize,
        weights: Vec<f64>,
        bias: f64,
        theta: f64,
    ) -> Result<Self> {
        if channels == 0 {
            return Err(Error::parameter("channels", "must be >= 1"));
        }
        if kernel != 1 && kernel != 3 {
            return Err(Error::parameter(
                "kernel",
                format!("gate kernel must be 1 or 3, got {kernel}"),
            ));
        }
        let expected = (2 * channels + 1) * kernel * kernel;
        if weights.len() != expected {
            return Err(Error::parameter(
                "weights",
                format!("expected {expected} gate weights, got {}", weights.len()),
            ));
        }
        if weights.iter().any(|v| !v.is_finite()) || !bias.is_finite() || !theta.is_finite() {
            return Err(Error::parameter("weights", "gate parameters must be finite"));
        }
        Ok(Self {
            channels,
            kernel,
            weights,
            bias,
            theta,
        })
    }

    /// All-zero gate weights and bias: the gate is 0.5 everywhere.
    pub fn zeros(channels: usize, kernel: usize, theta: f64) -> Result<Self> {
        let n = (2 * channels + 1) * kernel * kernel;
        Self::new(channels, kernel, vec![0.0; n], 0.0, theta)
    }

    /// Seeded Gaussian weights (std 0.1) with zero bias.
    pub fn seeded(channels: usize, kernel: usize, theta: f64, rng: &mut RngStream) -> Result<Self> {
        let n = (2 * channels + 1) * kernel * kernel;
        Self::new(channels, kernel, rng.normal_vec(n, 0.0, 0.1)?, 0.0, theta)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Trainable-state count: `(2C + 1) k^2` weights, the bias, and `theta`.
    pub fn param_count(&self) -> usize {
        (2 * self.channels + 1) * self.kernel * self.kernel + 2
    }

    /// Weight for input channel `ch` at kernel offset `(dy, dx)`.
    #[inline]
    fn weight(&self, ch: usize, dy: usize, dx: usize) -> f64 {
        self.weights[(ch * self.kernel + dy) * self.kernel + dx]
    }
}

/// Concatenated-channel lookup: task state channels first, then bridge
/// channels, then the precision channel.
#[inline]
fn stacked_value(
    task_state: &FieldTensor,
    bridge: &FieldTensor,
    precision: &PrecisionField,
    y: usize,
    x: usize,
    ch: usize,
) -> f64 {
    let c = task_state.channels();
    if ch < c {
        task_state.get(y, x, ch)
    } else if ch < 2 * c {
        bridge.get(y, x, ch - c)
    } else {
        precision.get(y, x)
    }
}

/// Per-location dispatch gate, strictly inside (0, 1).
pub fn dispatch_gate(
    task_state: &FieldTensor,
    bridge: &FieldTensor,
    precision: &PrecisionField,
    params: &CdoParams,
) -> Result<ScalarField> {
    if task_state.shape() != bridge.shape() {
        return Err(shape_mismatch("dispatch_gate", task_state.shape(), bridge.shape()));
    }
    if (precision.height(), precision.width()) != (task_state.height(), task_state.width()) {
        return Err(shape_mismatch(
            "dispatch_gate",
            task_state.shape(),
            (precision.height(), precision.width(), 1),
        ));
    }
    if task_state.channels() != params.channels {
        return Err(shape_mismatch(
            "dispatch_gate",
            (task_state.height(), task_state.width(), params.channels),
            task_state.shape(),
        ));
    }
    let (h, w, c) = task_state.shape();
    let k = params.kernel;
    let half = k / 2;
    let total_ch = 2 * c + 1;
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = params.bias;
            for ch in 0..total_ch {
                for dy in 0..k {
                    for dx in 0..k {
                        // Replicate padding at the borders.
                        let sy = (y + dy).saturating_sub(half).min(h - 1);
                        let sx = (x + dx).saturating_sub(half).min(w - 1);
                        acc += params.weight(ch, dy, dx)
                            * stacked_value(task_state, bridge, precision, sy, sx, ch);
                    }
                }
            }
            data.push(sigmoid(acc));
        }
    }
    Ok(ScalarField::from_op(h, w, data))
}

/// Effective local update coefficient `beta = sigmoid(theta) * gate`,
/// strictly inside (0, 1).
pub fn effective_coefficient(gate: &ScalarField, theta: f64) -> ScalarField {
    let eta = sigmoid(theta);
    gate.map(|g| (eta * g).clamp(f64::MIN_POSITIVE, SIGMOID_CEIL))
}

fn check_beta(beta: &ScalarField) -> Result<()> {
    if let Some(v) = beta.data().iter().find(|v| v.is_nan() || **v <= 0.0 || **v >= 1.0) {
        return Err(Error::parameter(
            "beta",
            format!("update coefficient must lie in (0, 1), found {v}"),
        ));
    }
    Ok(())
}

/// Bounded bridge-to-task update `X+ = X + beta (B - X)`. Each output entry
/// is clamped to the segment between the state and the bridge, so convex-hull
/// containment is exact.
pub fn cdo_update(
    task_state: &FieldTensor,
    bridge: &FieldTensor,
    beta: &ScalarField,
) -> Result<FieldTensor> {
    if task_state.shape() != bridge.shape() {
        return Err(shape_mismatch("cdo_update", task_state.shape(), bridge.shape()));
    }
    if (beta.height(), beta.width()) != (task_state.height(), task_state.width()) {
        return Err(shape_mismatch(
            "cdo_update",
            task_state.shape(),
            (beta.height(), beta.width(), 1),
        ));
    }
    check_beta(beta)?;
    let (h, w, c) = task_state.shape();
    let mut data = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let b = beta.get(y, x);
            for ch in 0..c {
                let xv = task_state.get(y, x, ch);
                let bv = bridge.get(y, x, ch);
                data.push((xv + b * (bv - xv)).clamp(xv.min(bv), xv.max(bv)));
            }
        }
    }
    Ok(FieldTensor::from_op(h, w, c, data))
}

/// Frobenius-norm contraction ratio `||after - B|| / ||before - B||`.
pub fn contraction_ratio(
    before: &FieldTensor,
    after: &FieldTensor,
    bridge: &FieldTensor,
) -> Result<f64> {
    if before.shape() != after.shape() || before.shape() != bridge.shape() {
        return Err(shape_mismatch("contraction_ratio", before.shape(), after.shape()));
    }
    let denom = before.sub(bridge)?.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::DegenerateInput {
            message: "before-state coincides with the bridge".into(),
        });
    }
    Ok(after.sub(bridge)?.frobenius_norm() / denom)
}

/// Batch contraction statistics: the raw ratio sequence, its mean and max,
/// and a 20-bin histogram over [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub per_batch_ratio: Vec<f64>,
    pub mean: f64,
    pub max: f64,
    pub bins: [usize; 20],
}

impl ContractionReport {
    pub fn from_ratios(ratios: Vec<f64>) -> Result<Self> {
        if ratios.is_empty() {
            return Err(Error::EmptyInput {
                what: "contraction ratios",
            });
        }
        if let Some(v) = ratios.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::parameter(
                "ratios",
                format!("contraction ratio must lie in [0, 1], found {v}"),
            ));
        }
        let mut bins = [0usize; 20];
        for &r in &ratios {
            let idx = ((r * 20.0) as usize).min(19);
            bins[idx] += 1;
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        let max = ratios.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            per_batch_ratio: ratios,
            mean,
            max,
            bins,
        })
    }

    /// CSV form with header `batch,ratio`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("batch,ratio\n");
        for (i, r) in self.per_batch_ratio.iter().enumerate() {
            out.push_str(&format!("{i},{r}\n"));
        }
        out
    }

    /// JSON summary `{mean, max, bins[20]}`.
    pub fn to_json_summary(&self) -> String {
        serde_json::json!({
            "mean": self.mean,
            "max": self.max,
            "bins": self.bins.to_vec(),
        })
        .to_string()
    }
}
