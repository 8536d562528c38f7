//! Posterior bridge construction.
//!
//! Task evidence is fused with a shared reference into a precision-weighted
//! bridge. With a prior of precision `w0` centered at the reference `G` and
//! per-task Gaussian evidence `E_t` of spatial precision `a_t(x)`, the
//! negative log-posterior (constants and the 1/2 factor dropped) is
//!
//! ```text
//! L(B) = w0 ||B - G||^2 + sum_t a_t ||B - E_t||^2
//! ```
//!
//! minimized in closed form by
//!
//! ```text
//! B = (w0 G + sum_t a_t E_t) / (w0 + sum_t a_t)
//! ```
//!
//! applied elementwise over locations, with the per-location precision
//! broadcast across channels. A bounded correction `B^ = G + eta_b (B - G)`
//! keeps the refined bridge on the segment between reference and posterior.
//!
//! Per-task contributions are summed in a canonical value order, so the
//! bridge is bit-identical under any permutation of the evidence list.

use crate::error::{Error, Result};
use crate::field::{shape_mismatch, sum_value_ordered, FieldTensor, PrecisionField, ScalarField};
use crate::rng::RngStream;

/// Fusion configuration: prior precision and correction step.
#[derive(Debug, Clone, PartialEq)]
pub struct PboConfig {
    w0: f64,
    eta_b: f64,
    correction_enabled: bool,
}

impl PboConfig {
    pub fn new(w0: f64, eta_b: f64, correction_enabled: bool) -> Result<Self> {
        if !w0.is_finite() || w0 <= 0.0 {
            return Err(Error::parameter(
                "w0",
                format!("prior precision must be finite and > 0, got {w0}"),
            ));
        }
        check_eta(eta_b)?;
        Ok(Self {
            w0,
            eta_b,
            correction_enabled,
        })
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn eta_b(&self) -> f64 {
        self.eta_b
    }

    pub fn correction_enabled(&self) -> bool {
        self.correction_enabled
    }

    /// The fusion and correction path carries no trainable state.
    pub fn param_count(&self) -> usize {
        0
    }
}

impl Default for PboConfig {
    fn default() -> Self {
        Self {
            w0: 1.0,
            eta_b: 0.5,
            correction_enabled: true,
        }
    }
}

fn check_eta(eta_b: f64) -> Result<()> {
    if eta_b.is_nan() || eta_b <= 0.0 || eta_b >= 1.0 {
        return Err(Error::parameter(
            "eta_b",
            format!("correction step must lie in (0, 1), got {eta_b}"),
        ));
    }
    Ok(())
}

/// Square projection stack of a single-head cross-attention extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProjections {
    channels: usize,
    query: Vec<f64>,
    key: Vec<f64>,
    value: Vec<f64>,
    output: Vec<f64>,
}

impl AttentionProjections {
    pub fn new(
        channels: usize,
        query: Vec<f64>,
        key: Vec<f64>,
        value: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<Self> {
        let n = channels * channels;
        for (name, m) in [
            ("query", &query),
            ("key", &key),
            ("value", &value),
            ("output", &output),
        ] {
            if m.len() != n {
                return Err(Error::parameter(
                    "projections",
                    format!("{name} projection must be {channels}x{channels}, got {} entries", m.len()),
                ));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::parameter(
                    "projections",
                    format!("{name} projection has non-finite entries"),
                ));
            }
        }
        Ok(Self {
            channels,
            query,
            key,
            value,
            output,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

/// Evidence extractor: identity pass-through or cross-attention with the
/// reference as query and the task state as key/value.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtractorParams {
    Identity,
    Attention(AttentionProjections),
}

impl ExtractorParams {
    pub fn identity() -> Self {
        Self::Identity
    }

    /// Attention stack with all four projections set to the identity matrix.
    pub fn attention_identity(channels: usize) -> Result<Self> {
        let mut eye = vec![0.0; channels * channels];
        for i in 0..channels {
            eye[i * channels + i] = 1.0;
        }
        Ok(Self::Attention(AttentionProjections::new(
            channels,
            eye.clone(),
            eye.clone(),
            eye.clone(),
            eye,
        )?))
    }

    /// Attention stack with seeded Gaussian projections, std `1/sqrt(C)`.
    pub fn attention_seeded(channels: usize, rng: &mut RngStream) -> Result<Self> {
        let std = 1.0 / (channels as f64).sqrt();
        let n = channels * channels;
        let query = rng.normal_vec(n, 0.0, std)?;
        let key = rng.normal_vec(n, 0.0, std)?;
        let value = rng.normal_vec(n, 0.0, std)?;
        let output = rng.normal_vec(n, 0.0, std)?;
        Ok(Self::Attention(AttentionProjections::new(
            channels, query, key, value, output,
        )?))
    }

    /// Trainable-state count: 0 for identity, `4 C^2` for attention.
    pub fn param_count(&self) -> usize {
        match self {
            Self::Identity => 0,
            Self::Attention(p) => 4 * p.channels * p.channels,
        }
    }
}

/// `tokens` is N rows of length C; multiplies by the C×C matrix on the right.
fn project(tokens: &[f64], n: usize, c: usize, m: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for t in 0..n {
        for j in 0..c {
            let mut acc = 0.0;
            for k in 0..c {
                acc += tokens[t * c + k] * m[k * c + j];
            }
            out[t * c + j] = acc;
        }
    }
    out
}

/// Row-softmaxed attention weights; each row sums to 1.
fn attention_rows(query: &[f64], key: &[f64], n: usize, c: usize) -> Vec<f64> {
    let scale = 1.0 / (c as f64).sqrt();
    let mut rows = vec![0.0; n * n];
    for q in 0..n {
        let row = &mut rows[q * n..(q + 1) * n];
        let mut max = f64::NEG_INFINITY;
        for k in 0..n {
            let mut dot = 0.0;
            for ch in 0..c {
                dot += query[q * c + ch] * key[k * c + ch];
            }
            let s = dot * scale;
            row[k] = s;
            max = max.max(s);
        }
        let mut denom = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom += *v;
        }
        for v in row.iter_mut() {
            *v /= denom;
        }
    }
    rows
}

/// Extracts task evidence against the shared reference. Identity mode
/// returns the task state unchanged; attention mode treats spatial
/// locations as tokens, queries with the reference, and attends over the
/// task state.
pub fn extract_evidence(
    task_state: &FieldTensor,
    reference: &FieldTensor,
    params: &ExtractorParams,
) -> Result<FieldTensor> {
    if task_state.shape() != reference.shape() {
        return Err(shape_mismatch(
            "extract_evidence",
            reference.shape(),
            task_state.shape(),
        ));
    }
    match params {
        ExtractorParams::Identity => Ok(task_state.clone()),
        ExtractorParams::Attention(p) => {
            let (h, w, c) = task_state.shape();
            if c != p.channels {
                return Err(shape_mismatch("extract_evidence", (h, w, p.channels), (h, w, c)));
            }
            let n = h * w;
            let query = project(reference.data(), n, c, &p.query);
            let key = project(task_state.data(), n, c, &p.key);
            let value = project(task_state.data(), n, c, &p.value);
            let rows = attention_rows(&query, &key, n, c);
            let mut attended = vec![0.0; n * c];
            for q in 0..n {
                for k in 0..n {
                    let wgt = rows[q * n + k];
                    for ch in 0..c {
                        attended[q * c + ch] += wgt * value[k * c + ch];
                    }
                }
            }
            let out = project(&attended, n, c, &p.output);
            Ok(FieldTensor::from_op(h, w, c, out))
        }
    }
}

fn check_fusion_shapes(
    reference: &FieldTensor,
    evidences: &[&FieldTensor],
    precisions: &[&ScalarField],
) -> Result<()> {
    if evidences.is_empty() {
        return Err(Error::EmptyInput {
            what: "evidence list",
        });
    }
    if evidences.len() != precisions.len() {
        return Err(Error::parameter(
            "precisions",
            format!(
                "{} precision fields for {} evidences",
                precisions.len(),
                evidences.len()
            ),
        ));
    }
    for e in evidences {
        if e.shape() != reference.shape() {
            return Err(shape_mismatch("posterior_bridge", reference.shape(), e.shape()));
        }
    }
    for p in precisions {
        if (p.height(), p.width()) != (reference.height(), reference.width()) {
            return Err(shape_mismatch(
                "posterior_bridge",
                reference.shape(),
                (p.height(), p.width(), 1),
            ));
        }
    }
    Ok(())
}

/// Closed-form precision-weighted fusion of the reference and all task
/// evidences. Each output entry is a convex combination of the inputs, so
/// it is clamped into their elementwise envelope to keep the containment
/// exact under floating-point rounding.
pub fn posterior_bridge(
    reference: &FieldTensor,
    evidences: &[&FieldTensor],
    precisions: &[&PrecisionField],
    config: &PboConfig,
) -> Result<FieldTensor> {
    let fields: Vec<&ScalarField> = precisions.iter().map(|p| p.as_field()).collect();
    check_fusion_shapes(reference, evidences, &fields)?;

    let (h, w, c) = reference.shape();
    let tasks = evidences.len();
    let mut data = Vec::with_capacity(h * w * c);
    let mut weight_terms = vec![0.0; tasks + 1];
    let mut value_terms = vec![0.0; tasks + 1];
    for y in 0..h {
        for x in 0..w {
            weight_terms[0] = config.w0;
            for (t, p) in precisions.iter().enumerate() {
                weight_terms[t + 1] = p.get(y, x);
            }
            let mut weights_sorted = weight_terms.clone();
            let denom = sum_value_ordered(&mut weights_sorted);
            for ch in 0..c {
                let g = reference.get(y, x, ch);
                value_terms[0] = config.w0 * g;
                let mut lo = g;
                let mut hi = g;
                for (t, e) in evidences.iter().enumerate() {
                    let v = e.get(y, x, ch);
                    value_terms[t + 1] = weight_terms[t + 1] * v;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                let num = sum_value_ordered(&mut value_terms);
                data.push((num / denom).clamp(lo, hi));
            }
        }
    }
    Ok(FieldTensor::from_op(h, w, c, data))
}

/// Negative log-posterior `L(B)` of a candidate bridge, summed over all
/// locations and channels. Accepts plain scalar precision maps (values may
/// be zero) so the oracle can probe degenerate corners.
pub fn nlp_oracle(
    candidate: &FieldTensor,
    reference: &FieldTensor,
    evidences: &[&FieldTensor],
    precisions: &[&ScalarField],
    config: &PboConfig,
) -> Result<f64> {
    check_fusion_shapes(reference, evidences, precisions)?;
    if candidate.shape() != reference.shape() {
        return Err(shape_mismatch("nlp_oracle", reference.shape(), candidate.shape()));
    }
    for p in precisions {
        if let Some(v) = p.data().iter().find(|v| **v < 0.0) {
            return Err(Error::parameter(
                "precisions",
                format!("precision must be >= 0 in the oracle, found {v}"),
            ));
        }
    }
    let (h, w, c) = reference.shape();
    let mut total = 0.0;
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let b = candidate.get(y, x, ch);
                let dg = b - reference.get(y, x, ch);
                total += config.w0 * dg * dg;
                for (e, p) in evidences.iter().zip(precisions) {
                    let de = b - e.get(y, x, ch);
                    total += p.get(y, x) * de * de;
                }
            }
        }
    }
    Ok(total)
}

/// Bounded correction toward the reference: `B^ = G + eta_b (B - G)`.
/// Disabled correction returns the bridge unchanged. Output is clamped to
/// the segment between `G` and `B` per entry.
pub fn posterior_correction(
    reference: &FieldTensor,
    bridge: &FieldTensor,
    config: &PboConfig,
) -> Result<FieldTensor> {
    if bridge.shape() != reference.shape() {
        return Err(shape_mismatch(
            "posterior_correction",
            reference.shape(),
            bridge.shape(),
        ));
    }
    check_eta(config.eta_b)?;
    if !config.correction_enabled {
        return Ok(bridge.clone());
    }
    let data = reference
        .data()
        .iter()
        .zip(bridge.data())
        .map(|(&g, &b)| (g + config.eta_b * (b - g)).clamp(g.min(b), g.max(b)))
        .collect();
    let (h, w, c) = reference.shape();
    Ok(FieldTensor::from_op(h, w, c, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::nlp_minimize;

    fn pixel(v: f64) -> FieldTensor {
        FieldTensor::from_vec(1, 1, 1, vec![v]).unwrap()
    }

    fn precision(v: f64) -> PrecisionField {
        PrecisionField::new(ScalarField::filled(1, 1, v).unwrap()).unwrap()
    }

    #[test]
    fn identity_extractor_passes_through() {
        let x = FieldTensor::from_vec(2, 2, 2, (0..8).map(|i| i as f64).collect()).unwrap();
        let g = FieldTensor::filled(2, 2, 2, 0.0).unwrap();
        let e = extract_evidence(&x, &g, &ExtractorParams::identity()).unwrap();
        assert_eq!(e, x);
    }

    #[test]
    fn attention_constant_field_is_fixed_point() {
        // Identity projections and a spatially constant task state: every
        // softmax row is uniform and averages identical values.
        let c = 3;
        let x = FieldTensor::from_vec(
            2,
            2,
            c,
            (0..4).flat_map(|_| [1.5, -0.5, 2.0]).collect(),
        )
        .unwrap();
        let mut rng = RngStream::new(1, 0);
        let g = FieldTensor::from_vec(2, 2, c, rng.normal_vec(12, 0.0, 1.0).unwrap()).unwrap();
        let params = ExtractorParams::attention_identity(c).unwrap();
        let e = extract_evidence(&x, &g, &params).unwrap();
        for y in 0..2 {
            for xx in 0..2 {
                assert!((e.get(y, xx, 0) - 1.5).abs() < 1e-12);
                assert!((e.get(y, xx, 1) + 0.5).abs() < 1e-12);
                assert!((e.get(y, xx, 2) - 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let mut rng = RngStream::new(2, 0);
        let n = 12;
        let c = 4;
        let q = rng.normal_vec(n * c, 0.0, 1.0).unwrap();
        let k = rng.normal_vec(n * c, 0.0, 1.0).unwrap();
        let rows = attention_rows(&q, &k, n, c);
        for r in 0..n {
            let sum: f64 = rows[r * n..(r + 1) * n].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "row {r} sums to {sum}");
        }
    }

    #[test]
    fn attention_shape_and_channel_checks() {
        let x = FieldTensor::filled(2, 2, 3, 1.0).unwrap();
        let g = FieldTensor::filled(2, 2, 3, 0.0).unwrap();
        let wrong = ExtractorParams::attention_identity(4).unwrap();
        assert!(extract_evidence(&x, &g, &wrong).is_err());
        let g_bad = FieldTensor::filled(2, 3, 3, 0.0).unwrap();
        assert!(extract_evidence(&x, &g_bad, &ExtractorParams::identity()).is_err());
    }

    #[test]
    fn bridge_prior_dominated_limit() {
        let g = pixel(3.0);
        let e = pixel(-5.0);
        let p = precision(1e-12);
        let config = PboConfig::new(1.0, 0.5, true).unwrap();
        let b = posterior_bridge(&g, &[&e], &[&p], &config).unwrap();
        assert!((b.get(0, 0, 0) - 3.0).abs() < 1e-10);
    }

    #[test]
    fn bridge_equal_weight_midpoint() {
        let g = pixel(0.0);
        let e = pixel(2.0);
        let p = precision(1.0);
        let config = PboConfig::new(1.0, 0.5, true).unwrap();
        let b = posterior_bridge(&g, &[&e], &[&p], &config).unwrap();
        assert_eq!(b.get(0, 0, 0), 1.0);
    }

    #[test]
    fn bridge_weighted_two_evidence_case() {
        // (1*0 + 3*1 + 1*(-1)) / (1 + 3 + 1) = 0.4, and the independent
        // gradient-descent minimizer of the negative log-posterior agrees.
        let g = pixel(0.0);
        let e1 = pixel(1.0);
        let e2 = pixel(-1.0);
        let p1 = precision(3.0);
        let p2 = precision(1.0);
        let config = PboConfig::new(1.0, 0.5, true).unwrap();
        let b = posterior_bridge(&g, &[&e1, &e2], &[&p1, &p2], &config).unwrap();
        assert!((b.get(0, 0, 0) - 0.4).abs() < 1e-15);

        let start = pixel(7.0);
        let minimized = nlp_minimize(
            &g,
            &[&e1, &e2],
            &[p1.as_field(), p2.as_field()],
            &config,
            &start,
            500,
        );
        assert!((minimized.get(0, 0, 0) - 0.4).abs() < 1e-9);
    }

    #[test]
    fn bridge_empty_evidence_is_arity_error() {
        let g = pixel(0.0);
        let config = PboConfig::default();
        assert!(matches!(
            posterior_bridge(&g, &[], &[], &config),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn nonpositive_w0_rejected() {
        assert!(PboConfig::new(0.0, 0.5, true).is_err());
        assert!(PboConfig::new(-1.0, 0.5, true).is_err());
    }

    #[test]
    fn nlp_zero_at_reference_with_zero_precision() {
        let g = pixel(2.0);
        let e = pixel(5.0);
        let zero = ScalarField::filled(1, 1, 0.0).unwrap();
        let config = PboConfig::default();
        let l = nlp_oracle(&g, &g, &[&e], &[&zero], &config).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn nlp_hand_arithmetic() {
        // w0 = 1, G = 0, alpha = 1, E = 2, candidate 1: 1 + 1 = 2.
        let config = PboConfig::new(1.0, 0.5, true).unwrap();
        let l = nlp_oracle(
            &pixel(1.0),
            &pixel(0.0),
            &[&pixel(2.0)],
            &[&ScalarField::filled(1, 1, 1.0).unwrap()],
            &config,
        )
        .unwrap();
        assert_eq!(l, 2.0);
    }

    #[test]
    fn bridge_minimizes_nlp_under_perturbations() {
        let mut rng = RngStream::new(5, 0);
        let g = FieldTensor::from_vec(2, 2, 2, rng.normal_vec(8, 0.0, 1.0).unwrap()).unwrap();
        let e1 = FieldTensor::from_vec(2, 2, 2, rng.normal_vec(8, 0.0, 1.0).unwrap()).unwrap();
        let e2 = FieldTensor::from_vec(2, 2, 2, rng.normal_vec(8, 0.0, 1.0).unwrap()).unwrap();
        let p1 = PrecisionField::new(
            ScalarField::from_vec(2, 2, (0..4).map(|_| rng.uniform(0.1, 5.0)).collect()).unwrap(),
        )
        .unwrap();
        let p2 = PrecisionField::new(
            ScalarField::from_vec(2, 2, (0..4).map(|_| rng.uniform(0.1, 5.0)).collect()).unwrap(),
        )
        .unwrap();
        let config = PboConfig::new(0.7, 0.5, true).unwrap();
        let b = posterior_bridge(&g, &[&e1, &e2], &[&p1, &p2], &config).unwrap();
        let fields = [p1.as_field(), p2.as_field()];
        let l_star = nlp_oracle(&b, &g, &[&e1, &e2], &fields, &config).unwrap();
        for _ in 0..100 {
            let delta = rng.normal_vec(8, 0.0, 0.3).unwrap();
            let perturbed = FieldTensor::from_vec(
                2,
                2,
                2,
                b.data().iter().zip(&delta).map(|(v, d)| v + d).collect(),
            )
            .unwrap();
            let l = nlp_oracle(&perturbed, &g, &[&e1, &e2], &fields, &config).unwrap();
            assert!(l > l_star, "perturbed loss {l} not above minimum {l_star}");
        }
    }

    #[test]
    fn correction_convex_combination() {
        let config = PboConfig::new(1.0, 0.3, true).unwrap();
        let out = posterior_correction(&pixel(0.0), &pixel(1.0), &config).unwrap();
        assert!((out.get(0, 0, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn correction_fixed_point_at_reference() {
        let g = pixel(4.2);
        for eta in [0.01, 0.5, 0.99] {
            let config = PboConfig::new(1.0, eta, true).unwrap();
            let out = posterior_correction(&g, &g, &config).unwrap();
            assert_eq!(out.get(0, 0, 0), 4.2);
        }
    }

    #[test]
    fn correction_endpoint_limit() {
        let config = PboConfig::new(1.0, 1.0 - 1e-9, true).unwrap();
        for b in [-10.0, -1.0, 0.5, 10.0] {
            let out = posterior_correction(&pixel(0.0), &pixel(b), &config).unwrap();
            assert!((out.get(0, 0, 0) - b).abs() < 1e-8);
        }
    }

    #[test]
    fn correction_disabled_returns_bridge() {
        let config = PboConfig::new(1.0, 0.3, false).unwrap();
        let b = pixel(1.0);
        let out = posterior_correction(&pixel(0.0), &b, &config).unwrap();
        assert_eq!(out, b);
    }

    #[test]
    fn invalid_eta_rejected() {
        assert!(PboConfig::new(1.0, 0.0, true).is_err());
        assert!(PboConfig::new(1.0, 1.0, true).is_err());
        assert!(PboConfig::new(1.0, 1.5, true).is_err());
    }

    #[test]
    fn param_counts() {
        let config = PboConfig::default();
        assert_eq!(config.param_count(), 0);
        assert_eq!(ExtractorParams::identity().param_count(), 0);
        let att = ExtractorParams::attention_identity(8).unwrap();
        assert_eq!(att.param_count(), 256);
    }

    #[test]
    fn bridge_permutation_invariance_is_bitwise() {
        let mut rng = RngStream::new(6, 0);
        let g = FieldTensor::from_vec(2, 3, 2, rng.normal_vec(12, 0.0, 1.0).unwrap()).unwrap();
        let evidences: Vec<FieldTensor> = (0..4)
            .map(|_| FieldTensor::from_vec(2, 3, 2, rng.normal_vec(12, 0.0, 1.0).unwrap()).unwrap())
            .collect();
        let precisions: Vec<PrecisionField> = (0..4)
            .map(|_| {
                PrecisionField::new(
                    ScalarField::from_vec(2, 3, (0..6).map(|_| rng.uniform(0.01, 10.0)).collect())
                        .unwrap(),
                )
                .unwrap()
            })
            .collect();
        let config = PboConfig::default();
        let forward = posterior_bridge(
            &g,
            &evidences.iter().collect::<Vec<_>>(),
            &precisions.iter().collect::<Vec<_>>(),
            &config,
        )
        .unwrap();
        let perm = [2usize, 0, 3, 1];
        let e_perm: Vec<&FieldTensor> = perm.iter().map(|&i| &evidences[i]).collect();
        let p_perm: Vec<&PrecisionField> = perm.iter().map(|&i| &precisions[i]).collect();
        let permuted = posterior_bridge(&g, &e_perm, &p_perm, &config).unwrap();
        for (a, b) in forward.data().iter().zip(permuted.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn bridge_precision_scale_invariance() {
        let mut rng = RngStream::new(7, 0);
        let g = FieldTensor::from_vec(2, 2, 1, rng.normal_vec(4, 0.0, 1.0).unwrap()).unwrap();
        let e = FieldTensor::from_vec(2, 2, 1, rng.normal_vec(4, 0.0, 1.0).unwrap()).unwrap();
        let p = PrecisionField::new(
            ScalarField::from_vec(2, 2, (0..4).map(|_| rng.uniform(0.1, 3.0)).collect()).unwrap(),
        )
        .unwrap();
        let lambda = 37.5;
        let c1 = PboConfig::new(2.0, 0.5, true).unwrap();
        let c2 = PboConfig::new(2.0 * lambda, 0.5, true).unwrap();
        let b1 = posterior_bridge(&g, &[&e], &[&p], &c1).unwrap();
        let b2 = posterior_bridge(&g, &[&e], &[&p.scaled(lambda).unwrap()], &c2).unwrap();
        for (a, b) in b1.data().iter().zip(b2.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bridge_envelope_containment() {
        let mut rng = RngStream::new(9, 0);
        for _ in 0..200 {
            let tasks = 1 + rng.index_below(4);
            let g = FieldTensor::from_vec(2, 2, 2, rng.normal_vec(8, 0.0, 2.0).unwrap()).unwrap();
            let evidences: Vec<FieldTensor> = (0..tasks)
                .map(|_| {
                    FieldTensor::from_vec(2, 2, 2, rng.normal_vec(8, 0.0, 2.0).unwrap()).unwrap()
                })
                .collect();
            let precisions: Vec<PrecisionField> = (0..tasks)
                .map(|_| {
                    PrecisionField::new(
                        ScalarField::from_vec(
                            2,
                            2,
                            (0..4).map(|_| rng.uniform(1e-3, 100.0)).collect(),
                        )
                        .unwrap(),
                    )
                    .unwrap()
                })
                .collect();
            let config = PboConfig::new(rng.uniform(0.01, 5.0), 0.5, true).unwrap();
            let b = posterior_bridge(
                &g,
                &evidences.iter().collect::<Vec<_>>(),
                &precisions.iter().collect::<Vec<_>>(),
                &config,
            )
            .unwrap();
            let (h, w, c) = g.shape();
            for y in 0..h {
                for x in 0..w {
                    for ch in 0..c {
                        let mut lo = g.get(y, x, ch);
                        let mut hi = lo;
                        for e in &evidences {
                            lo = lo.min(e.get(y, x, ch));
                            hi = hi.max(e.get(y, x, ch));
                        }
                        let v = b.get(y, x, ch);
                        assert!(v >= lo && v <= hi, "entry {v} outside [{lo}, {hi}]");
                    }
                }
            }
        }
    }
}
