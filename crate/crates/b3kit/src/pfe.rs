//! Precision field estimation.
//!
//! Maps per-location evidence features to a strictly positive precision
//! field. The feature vector at each location is
//! `z(x) = [sim(E(x), G(x)), tv(E)(x)]`: cosine similarity between evidence
//! and reference over the channel axis, and the channel-averaged first
//! difference magnitude of the evidence. A bank of Gaussian fuzzy rules
//! turns `z` into normalized activations, each rule predicts an affine
//! log-precision, and the activation-weighted aggregate passes through a
//! stabilized softplus:
//!
//! ```text
//! mu_r(x)    = exp(-1/2 * ||(z(x) - c_r) / s_r||^2)
//! mubar_r(x) = mu_r(x) / (sum_j mu_j(x) + eps)
//! log a_r(x) = a_sim_r * sim(x) + a_tv_r * tv(x) + b_r
//! log a(x)   = sum_r mubar_r(x) * log a_r(x)
//! a(x)       = softplus(log a(x)) > 0
//! ```
//!
//! A supervised squared-error fit against oracle log-precision targets is
//! provided for the benchmark; its analytic gradient is checked against
//! central finite differences in the test suite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{shape_mismatch, FieldTensor, PrecisionField, ScalarField};

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Smallest scale a fit step may shrink a rule width to.
pub const MIN_RULE_SCALE: f64 = 1e-3;

/// Numerically stable softplus, floored at the smallest positive normal so
/// the output stays strictly positive even for very negative inputs.
pub fn softplus(v: f64) -> f64 {
    let sp = v.max(0.0) + (-v.abs()).exp().ln_1p();
    sp.max(f64::MIN_POSITIVE)
}

/// One Gaussian fuzzy rule over the (sim, tv) feature plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyRule {
    /// Rule center in feature space.
    pub center: [f64; 2],
    /// Per-axis width; strictly positive.
    pub scale: [f64; 2],
    /// Log-precision coefficient on the similarity feature.
    pub a_sim: f64,
    /// Log-precision coefficient on the variation feature.
    pub a_tv: f64,
    /// Log-precision bias.
    pub bias: f64,
}

/// Rule bank plus the activation-normalization guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfeParams {
    pub rules: Vec<FuzzyRule>,
    pub epsilon: f64,
}

impl PfeParams {
    pub fn new(rules: Vec<FuzzyRule>, epsilon: f64) -> Result<Self> {
        let params = Self { rules, epsilon };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::parameter("rules", "at least one rule is required"));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::parameter(
                "epsilon",
                format!("must be finite and > 0, got {}", self.epsilon),
            ));
        }
        for (i, rule) in self.rules.iter().enumerate() {
            for &s in &rule.scale {
                if !s.is_finite() || s <= 0.0 {
                    return Err(Error::parameter(
                        "scale",
                        format!("rule {i} scale must be finite and > 0, got {s}"),
                    ));
                }
            }
            let all = [
                rule.center[0],
                rule.center[1],
                rule.a_sim,
                rule.a_tv,
                rule.bias,
            ];
            if all.iter().any(|v| !v.is_finite()) {
                return Err(Error::parameter("rules", format!("rule {i} has non-finite entries")));
            }
        }
        Ok(())
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    /// `grid * grid` rules with centers at the cell midpoints of a uniform
    /// grid over `[sim_range] x [tv_range]`, widths at half the cell size,
    /// and zero-initialized linear coefficients. Deterministic.
    pub fn grid_init(grid: usize, sim_range: (f64, f64), tv_range: (f64, f64)) -> Result<Self> {
        if grid == 0 {
            return Err(Error::parameter("grid", "grid must be >= 1"));
        }
        let axis = |range: (f64, f64), i: usize| {
            let span = range.1 - range.0;
            let center = range.0 + span * (2 * i + 1) as f64 / (2 * grid) as f64;
            let scale = (span / (2 * grid) as f64).max(MIN_RULE_SCALE);
            (center, scale)
        };
        let mut rules = Vec::with_capacity(grid * grid);
        for i in 0..grid {
            for j in 0..grid {
                let (c0, s0) = axis(sim_range, i);
                let (c1, s1) = axis(tv_range, j);
                rules.push(FuzzyRule {
                    center: [c0, c1],
                    scale: [s0, s1],
                    a_sim: 0.0,
                    a_tv: 0.0,
                    bias: 0.0,
                });
            }
        }
        Self::new(rules, DEFAULT_EPSILON)
    }

    /// Default four-rule bank: a 2x2 grid over the given feature ranges.
    pub fn default_grid(sim_range: (f64, f64), tv_range: (f64, f64)) -> Result<Self> {
        Self::grid_init(2, sim_range, tv_range)
    }

    /// Structured-text (TOML) form with keys `rules[].{center, scale, a_sim,
    /// a_tv, bias}` and `epsilon`.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format(format!("pfe params encode: {e}")))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let params: Self =
            toml::from_str(s).map_err(|e| Error::format(format!("pfe params parse: {e}")))?;
        params.validate()?;
        Ok(params)
    }

    /// Flat view in rule order: `c0, c1, s0, s1, a_sim, a_tv, bias` per rule.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rules.len() * 7);
        for r in &self.rules {
            out.extend_from_slice(&[
                r.center[0], r.center[1], r.scale[0], r.scale[1], r.a_sim, r.a_tv, r.bias,
            ]);
        }
        out
    }

    /// Rebuilds params from the [`Self::to_flat`] layout, clamping scales to
    /// [`MIN_RULE_SCALE`] so gradient steps cannot invalidate the bank.
    pub fn from_flat(flat: &[f64], epsilon: f64) -> Result<Self> {
        if flat.is_empty() || !flat.len().is_multiple_of(7) {
            return Err(Error::parameter(
                "flat",
                format!("length {} is not a multiple of 7", flat.len()),
            ));
        }
        let rules = flat
            .chunks_exact(7)
            .map(|c| FuzzyRule {
                center: [c[0], c[1]],
                scale: [c[2].max(MIN_RULE_SCALE), c[3].max(MIN_RULE_SCALE)],
                a_sim: c[4],
                a_tv: c[5],
                bias: c[6],
            })
            .collect();
        Self::new(rules, epsilon)
    }
}

/// Per-location evidence features: similarity in `[-1, 1]`, variation `>= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfeFeatures {
    sim: ScalarField,
    tv: ScalarField,
}

impl PfeFeatures {
    /// Validates the variation map and clamps similarity into `[-1, 1]`.
    pub fn new(sim: ScalarField, tv: ScalarField) -> Result<Self> {
        if !sim.same_shape(&tv) {
            return Err(shape_mismatch(
                "pfe_features",
                (sim.height(), sim.width(), 1),
                (tv.height(), tv.width(), 1),
            ));
        }
        if let Some(v) = tv.data().iter().find(|v| **v < 0.0) {
            return Err(Error::parameter(
                "tv",
                format!("variation feature must be >= 0, found {v}"),
            ));
        }
        Ok(Self {
            sim: sim.map(|v| v.clamp(-1.0, 1.0)),
            tv,
        })
    }

    /// Computes both features from an evidence/reference pair.
    pub fn from_evidence(evidence: &FieldTensor, reference: &FieldTensor) -> Result<Self> {
        let sim = similarity_map(evidence, reference)?;
        let tv = total_variation_map(evidence)?;
        Self::new(sim, tv)
    }

    pub fn sim(&self) -> &ScalarField {
        &self.sim
    }

    pub fn tv(&self) -> &ScalarField {
        &self.tv
    }

    pub fn height(&self) -> usize {
        self.sim.height()
    }

    pub fn width(&self) -> usize {
        self.sim.width()
    }

    /// Observed (min, max) ranges of both features; used to seed rule grids.
    pub fn ranges(&self) -> ((f64, f64), (f64, f64)) {
        ((self.sim.min(), self.sim.max()), (self.tv.min(), self.tv.max()))
    }
}

/// Per-location cosine similarity between two tensors over the channel axis.
/// Locations where either vector is all-zero map to 0.
pub fn similarity_map(evidence: &FieldTensor, reference: &FieldTensor) -> Result<ScalarField> {
    if evidence.shape() != reference.shape() {
        return Err(shape_mismatch(
            "similarity_map",
            evidence.shape(),
            reference.shape(),
        ));
    }
    let (h, w, c) = evidence.shape();
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut dot = 0.0;
            let mut na = 0.0;
            let mut nb = 0.0;
            for ch in 0..c {
                let a = evidence.get(y, x, ch);
                let b = reference.get(y, x, ch);
                dot += a * b;
                na += a * a;
                nb += b * b;
            }
            let denom = na.sqrt() * nb.sqrt();
            data.push(if denom > 0.0 {
                (dot / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            });
        }
    }
    Ok(ScalarField::from_op(h, w, data))
}

/// Per-location anisotropic first-difference magnitude, averaged over
/// channels, with replicate padding at the last row and column:
/// `mean_c(|E(y, x+1, c) - E(y, x, c)| + |E(y+1, x, c) - E(y, x, c)|)`.
pub fn total_variation_map(evidence: &FieldTensor) -> Result<ScalarField> {
    let (h, w, c) = evidence.shape();
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let xn = (x + 1).min(w - 1);
            let yn = (y + 1).min(h - 1);
            let mut acc = 0.0;
            for ch in 0..c {
                let v = evidence.get(y, x, ch);
                acc += (evidence.get(y, xn, ch) - v).abs();
                acc += (evidence.get(yn, x, ch) - v).abs();
            }
            data.push(acc / c as f64);
        }
    }
    Ok(ScalarField::from_op(h, w, data))
}

struct ActivationPass {
    /// Raw Gaussian activations per rule.
    raw: Vec<Vec<f64>>,
    /// Per-location activation sum plus epsilon.
    denom: Vec<f64>,
}

fn activation_pass(features: &PfeFeatures, params: &PfeParams) -> ActivationPass {
    let n = features.sim().data().len();
    let r = params.rules.len();
    let mut raw = vec![vec![0.0; n]; r];
    let mut denom = vec![params.epsilon; n];
    for (ri, rule) in params.rules.iter().enumerate() {
        for i in 0..n {
            let z0 = features.sim().data()[i];
            let z1 = features.tv().data()[i];
            let u0 = (z0 - rule.center[0]) / rule.scale[0];
            let u1 = (z1 - rule.center[1]) / rule.scale[1];
            let m = (-0.5 * (u0 * u0 + u1 * u1)).exp();
            raw[ri][i] = m;
            denom[i] += m;
        }
    }
    ActivationPass { raw, denom }
}

/// Normalized rule activations `mubar_r = mu_r / (sum_j mu_j + eps)`;
/// one field per rule, each value strictly inside `(0, 1)`.
pub fn rule_activations(features: &PfeFeatures, params: &PfeParams) -> Result<Vec<ScalarField>> {
    params.validate()?;
    let pass = activation_pass(features, params);
    let (h, w) = (features.height(), features.width());
    Ok(pass
        .raw
        .iter()
        .map(|raw| {
            ScalarField::from_op(
                h,
                w,
                raw.iter().zip(&pass.denom).map(|(m, d)| m / d).collect(),
            )
        })
        .collect())
}

fn aggregate_log_precision(features: &PfeFeatures, params: &PfeParams) -> (ActivationPass, Vec<f64>) {
    let pass = activation_pass(features, params);
    let n = features.sim().data().len();
    let mut log_alpha = vec![0.0; n];
    for (ri, rule) in params.rules.iter().enumerate() {
        for i in 0..n {
            let z0 = features.sim().data()[i];
            let z1 = features.tv().data()[i];
            let rule_log = rule.a_sim * z0 + rule.a_tv * z1 + rule.bias;
            log_alpha[i] += pass.raw[ri][i] / pass.denom[i] * rule_log;
        }
    }
    (pass, log_alpha)
}

/// Activation-weighted aggregate log-precision before the softplus.
pub fn log_precision_field(features: &PfeFeatures, params: &PfeParams) -> Result<ScalarField> {
    params.validate()?;
    let (_, log_alpha) = aggregate_log_precision(features, params);
    Ok(ScalarField::from_op(
        features.height(),
        features.width(),
        log_alpha,
    ))
}

/// Full estimator: `softplus` of the aggregate log-precision. Strictly
/// positive everywhere.
pub fn precision_field(features: &PfeFeatures, params: &PfeParams) -> Result<PrecisionField> {
    let log_alpha = log_precision_field(features, params)?;
    PrecisionField::new(log_alpha.map(softplus))
}

/// Gradient of the fit loss in the [`PfeParams::to_flat`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PfeGradient {
    pub flat: Vec<f64>,
}

/// Squared-error fit objective against oracle log-precision targets:
/// `loss = mean_x (log a(x) - target(x))^2`, with analytic partials for
/// every rule center, scale, linear coefficient and bias.
pub fn pfe_fit_gradient(
    features: &PfeFeatures,
    params: &PfeParams,
    targets: &ScalarField,
) -> Result<(PfeGradient, f64)> {
    params.validate()?;
    if !targets.same_shape(features.sim()) {
        return Err(shape_mismatch(
            "pfe_fit_gradient",
            (features.height(), features.width(), 1),
            (targets.height(), targets.width(), 1),
        ));
    }
    let (pass, log_alpha) = aggregate_log_precision(features, params);
    let n = log_alpha.len();
    let r = params.rules.len();
    let inv_n = 1.0 / n as f64;

    let mut loss = 0.0;
    let mut flat = vec![0.0; r * 7];
    for i in 0..n {
        let residual = log_alpha[i] - targets.data()[i];
        loss += residual * residual * inv_n;
        let g = 2.0 * residual * inv_n;
        let z0 = features.sim().data()[i];
        let z1 = features.tv().data()[i];
        for (ri, rule) in params.rules.iter().enumerate() {
            let m = pass.raw[ri][i];
            let d = pass.denom[i];
            let mubar = m / d;
            let rule_log = rule.a_sim * z0 + rule.a_tv * z1 + rule.bias;
            // d log a / d m_r = (l_r - log a) / denom
            let dl_dm = (rule_log - log_alpha[i]) / d;
            let u0 = (z0 - rule.center[0]) / rule.scale[0];
            let u1 = (z1 - rule.center[1]) / rule.scale[1];
            let base = ri * 7;
            flat[base] += g * dl_dm * m * u0 / rule.scale[0];
            flat[base + 1] += g * dl_dm * m * u1 / rule.scale[1];
            flat[base + 2] += g * dl_dm * m * u0 * u0 / rule.scale[0];
            flat[base + 3] += g * dl_dm * m * u1 * u1 / rule.scale[1];
            flat[base + 4] += g * mubar * z0;
            flat[base + 5] += g * mubar * z1;
            flat[base + 6] += g * mubar;
        }
    }
    Ok((PfeGradient { flat }, loss))
}
