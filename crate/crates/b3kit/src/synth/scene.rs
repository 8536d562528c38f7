//! Seeded synthetic multi-task scenes.
//!
//! A scene is built from Voronoi regions over the pixel grid. Each region
//! carries a planar depth ramp, the constant unit normal of that plane, and
//! a semantic class; edge pixels are those whose 4-neighborhood crosses a
//! semantic label boundary. The per-pixel task maps are stacked into
//! `class_count + 5` channels (class scores, normalized depth, normal,
//! edge), projected onto an orthonormal basis of the `channels`-dimensional
//! latent space to form the latent truth, and recovered exactly by the
//! transposed projection. Evidence generators add heteroscedastic Gaussian
//! noise on top of the latent truth with known per-region variance, so the
//! oracle precision `1 / sigma^2` is available everywhere.

use crate::error::{Error, Result};
use crate::field::{FieldTensor, PrecisionField, ScalarField};
use crate::rng::RngStream;

const SALT_SITES: u64 = 0x5C1;
const SALT_PLANES: u64 = 0x5C2;
const SALT_BASIS: u64 = 0x5C3;
const SALT_TASK_NOISE: u64 = 0x401;
const SALT_REF_NOISE: u64 = 0x402;

/// Ground-truth scene with its latent encoding.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    height: usize,
    width: usize,
    channels: usize,
    class_count: usize,
    region_map: Vec<usize>,
    semantic: Vec<usize>,
    depth: ScalarField,
    normal: FieldTensor,
    edge: Vec<bool>,
    latent_truth: FieldTensor,
    /// `stack_channels` orthonormal rows of length `channels`.
    basis: Vec<f64>,
    stack_channels: usize,
    depth_shift: f64,
    depth_scale: f64,
}

/// Task maps decoded from a latent field.
#[derive(Debug, Clone)]
pub struct DecodedTasks {
    pub semantic: Vec<usize>,
    pub depth: ScalarField,
    pub normal: FieldTensor,
    pub edge_prob: ScalarField,
}

/// Deterministically generates a scene. Requires `num_regions >= 2` and
/// `channels >= 7`: the latent space must hold the stacked task maps (at
/// least two class-score channels plus depth, normal and edge), otherwise
/// the exact encode/decode round trip is impossible.
pub fn generate_scene(
    height: usize,
    width: usize,
    num_regions: usize,
    channels: usize,
    rng: &RngStream,
) -> Result<SyntheticScene> {
    if height == 0 || width == 0 {
        return Err(Error::Dimension {
            message: format!("scene dimensions must be >= 1, got {height}x{width}"),
        });
    }
    if num_regions < 2 {
        return Err(Error::parameter("num_regions", "at least 2 regions are required"));
    }
    if height * width < num_regions {
        return Err(Error::parameter(
            "num_regions",
            format!("{num_regions} regions cannot fit {height}x{width} pixels"),
        ));
    }
    if channels < 7 {
        return Err(Error::Dimension {
            message: format!(
                "latent needs >= 7 channels to hold class scores, depth, normal and edge; got {channels}"
            ),
        });
    }
    let class_count = num_regions.min(channels - 5);
    let stack_channels = class_count + 5;

    // Voronoi sites; empty cells (shadowed or duplicate sites) trigger a
    // deterministic redraw from the next attempt substream.
    let site_base = rng.derive(SALT_SITES);
    let mut region_map = vec![0usize; height * width];
    for attempt in 0u64.. {
        let mut site_rng = site_base.derive(attempt);
        let sites: Vec<(usize, usize)> = (0..num_regions)
            .map(|_| (site_rng.index_below(height), site_rng.index_below(width)))
            .collect();
        let mut counts = vec![0usize; num_regions];
        for y in 0..height {
            for x in 0..width {
                let mut best = 0usize;
                let mut best_d = usize::MAX;
                for (r, &(sy, sx)) in sites.iter().enumerate() {
                    let dy = sy.abs_diff(y);
                    let dx = sx.abs_diff(x);
                    let d = dy * dy + dx * dx;
                    if d < best_d {
                        best_d = d;
                        best = r;
                    }
                }
                region_map[y * width + x] = best;
                counts[best] += 1;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            break;
        }
    }

    // Per-region depth planes; slopes bounded so depth stays positive.
    let mut plane_rng = rng.derive(SALT_PLANES);
    let slope_bound = 1.0 / (height + width) as f64;
    let planes: Vec<(f64, f64, f64)> = (0..num_regions)
        .map(|_| {
            (
                plane_rng.uniform(2.0, 5.0),
                plane_rng.uniform(-slope_bound, slope_bound),
                plane_rng.uniform(-slope_bound, slope_bound),
            )
        })
        .collect();
    let cy = (height as f64 - 1.0) / 2.0;
    let cx = (width as f64 - 1.0) / 2.0;
    let mut depth_data = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let (base, gx, gy) = planes[region_map[y * width + x]];
            depth_data.push(base + gx * (x as f64 - cx) + gy * (y as f64 - cy));
        }
    }
    let depth = ScalarField::from_op(height, width, depth_data);
    debug_assert!(depth.min() > 0.0);

    // Unit normals of the depth planes.
    let region_normals: Vec<[f64; 3]> = planes
        .iter()
        .map(|&(_, gx, gy)| {
            let norm = (gx * gx + gy * gy + 1.0).sqrt();
            [-gx / norm, -gy / norm, 1.0 / norm]
        })
        .collect();
    let mut normal_data = Vec::with_capacity(height * width * 3);
    for idx in 0..height * width {
        normal_data.extend_from_slice(&region_normals[region_map[idx]]);
    }
    let normal = FieldTensor::from_op(height, width, 3, normal_data);

    let semantic: Vec<usize> = region_map.iter().map(|&r| r % class_count).collect();
    let mut edge = vec![false; height * width];
    for y in 0..height {
        for x in 0..width {
            let label = semantic[y * width + x];
            let mut boundary = false;
            if y > 0 {
                boundary |= semantic[(y - 1) * width + x] != label;
            }
            if y + 1 < height {
                boundary |= semantic[(y + 1) * width + x] != label;
            }
            if x > 0 {
                boundary |= semantic[y * width + x - 1] != label;
            }
            if x + 1 < width {
                boundary |= semantic[y * width + x + 1] != label;
            }
            edge[y * width + x] = boundary;
        }
    }

    // Depth normalization for the stack; inverted exactly on decode.
    let n = (height * width) as f64;
    let depth_shift = depth.data().iter().sum::<f64>() / n;
    let var = depth
        .data()
        .iter()
        .map(|d| (d - depth_shift) * (d - depth_shift))
        .sum::<f64>()
        / n;
    let depth_scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };

    let basis = orthonormal_rows(stack_channels, channels, &mut rng.derive(SALT_BASIS));

    let mut scene = SyntheticScene {
        height,
        width,
        channels,
        class_count,
        region_map,
        semantic,
        depth,
        normal,
        edge,
        latent_truth: FieldTensor::from_op(1, 1, 1, vec![0.0]),
        basis,
        stack_channels,
        depth_shift,
        depth_scale,
    };
    let mut latent = Vec::with_capacity(height * width * channels);
    for idx in 0..height * width {
        let stack = scene.stack_at(idx);
        for c in 0..channels {
            let mut acc = 0.0;
            for (m, s) in stack.iter().enumerate() {
                acc += s * scene.basis[m * channels + c];
            }
            latent.push(acc);
        }
    }
    scene.latent_truth = FieldTensor::from_op(height, width, channels, latent);
    Ok(scene)
}

/// `rows` orthonormal vectors in `R^dim` (rows <= dim), built from seeded
/// Gaussian draws by modified Gram-Schmidt with one re-orthogonalization.
fn orthonormal_rows(rows: usize, dim: usize, rng: &mut RngStream) -> Vec<f64> {
    debug_assert!(rows <= dim);
    let mut basis = vec![0.0; rows * dim];
    let mut r = 0;
    while r < rows {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal(0.0, 1.0)).collect();
        for _ in 0..2 {
            for prev in 0..r {
                let dot: f64 = (0..dim).map(|i| v[i] * basis[prev * dim + i]).sum();
                for i in 0..dim {
                    v[i] -= dot * basis[prev * dim + i];
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-8 {
            // Degenerate draw; take another vector.
            continue;
        }
        for i in 0..dim {
            basis[r * dim + i] = v[i] / norm;
        }
        r += 1;
    }
    basis
}

impl SyntheticScene {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn num_regions(&self) -> usize {
        self.region_map.iter().copied().max().unwrap_or(0) + 1
    }

    pub fn region_map(&self) -> &[usize] {
        &self.region_map
    }

    pub fn semantic(&self) -> &[usize] {
        &self.semantic
    }

    pub fn depth(&self) -> &ScalarField {
        &self.depth
    }

    pub fn normal(&self) -> &FieldTensor {
        &self.normal
    }

    pub fn edge(&self) -> &[bool] {
        &self.edge
    }

    /// Edge map as a 0/1 scalar field (the `edge_f` ground-truth format).
    pub fn edge_field(&self) -> ScalarField {
        ScalarField::from_op(
            self.height,
            self.width,
            self.edge.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn latent_truth(&self) -> &FieldTensor {
        &self.latent_truth
    }

    /// Stacked normalized task maps at a pixel: one-hot class scores,
    /// normalized depth, unit normal, edge indicator.
    fn stack_at(&self, idx: usize) -> Vec<f64> {
        let mut stack = vec![0.0; self.stack_channels];
        stack[self.semantic[idx]] = 1.0;
        stack[self.class_count] = (self.depth.data()[idx] - self.depth_shift) / self.depth_scale;
        for c in 0..3 {
            stack[self.class_count + 1 + c] = self.normal.data()[idx * 3 + c];
        }
        stack[self.class_count + 4] = if self.edge[idx] { 1.0 } else { 0.0 };
        stack
    }

    /// Linear decode (the transposed encode basis) followed by the task-map
    /// readouts: argmax class scores, denormalized depth, renormalized unit
    /// normals, clamped edge probability.
    pub fn decode_tasks(&self, latent: &FieldTensor) -> Result<DecodedTasks> {
        if latent.shape() != (self.height, self.width, self.channels) {
            return Err(crate::field::shape_mismatch(
                "decode_tasks",
                (self.height, self.width, self.channels),
                latent.shape(),
            ));
        }
        let hw = self.height * self.width;
        let mut semantic = Vec::with_capacity(hw);
        let mut depth = Vec::with_capacity(hw);
        let mut normal = Vec::with_capacity(hw * 3);
        let mut edge_prob = Vec::with_capacity(hw);
        for idx in 0..hw {
            let latent_px = &latent.data()[idx * self.channels..(idx + 1) * self.channels];
            let mut stack = vec![0.0; self.stack_channels];
            for (m, out) in stack.iter_mut().enumerate() {
                let row = &self.basis[m * self.channels..(m + 1) * self.channels];
                *out = latent_px.iter().zip(row).map(|(a, b)| a * b).sum();
            }
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (c, &score) in stack[..self.class_count].iter().enumerate() {
                if score > best_score {
                    best_score = score;
                    best = c;
                }
            }
            semantic.push(best);
            depth.push(stack[self.class_count] * self.depth_scale + self.depth_shift);
            let nx = stack[self.class_count + 1];
            let ny = stack[self.class_count + 2];
            let nz = stack[self.class_count + 3];
            let norm = (nx * nx + ny * ny + nz * nz).sqrt();
            if norm > 1e-12 {
                normal.extend_from_slice(&[nx / norm, ny / norm, nz / norm]);
            } else {
                // Fully destroyed normal; fall back to the up vector.
                normal.extend_from_slice(&[0.0, 0.0, 1.0]);
            }
            edge_prob.push(stack[self.class_count + 4].clamp(0.0, 1.0));
        }
        Ok(DecodedTasks {
            semantic,
            depth: ScalarField::from_op(self.height, self.width, depth),
            normal: FieldTensor::from_op(self.height, self.width, 3, normal),
            edge_prob: ScalarField::from_op(self.height, self.width, edge_prob),
        })
    }
}

/// Per-task heteroscedastic noise variances, piecewise constant per region,
/// plus the reference variance of the shared prior observation.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    variance: Vec<ScalarField>,
    region_variances: Vec<Vec<f64>>,
    ref_variance: f64,
}

impl NoiseModel {
    /// Draws per-region, per-task variances log-uniformly from
    /// `[var_min, var_max]`.
    pub fn heteroscedastic(
        scene: &SyntheticScene,
        num_tasks: usize,
        var_min: f64,
        var_max: f64,
        ref_variance: f64,
        rng: &RngStream,
    ) -> Result<Self> {
        if num_tasks == 0 {
            return Err(Error::parameter("num_tasks", "at least one task is required"));
        }
        if !var_max.is_finite() || var_min.is_nan() || var_min <= 0.0 || var_max < var_min {
            return Err(Error::parameter(
                "variance",
                format!("need 0 < var_min <= var_max, got [{var_min}, {var_max}]"),
            ));
        }
        if !ref_variance.is_finite() || ref_variance <= 0.0 {
            return Err(Error::parameter(
                "ref_variance",
                format!("reference variance must be > 0, got {ref_variance}"),
            ));
        }
        let regions = scene.num_regions();
        let mut draw = rng.derive(0x403);
        let (ln_min, ln_max) = (var_min.ln(), var_max.ln());
        let region_variances: Vec<Vec<f64>> = (0..num_tasks)
            .map(|_| {
                (0..regions)
                    .map(|_| draw.uniform(ln_min, ln_max).exp())
                    .collect()
            })
            .collect();
        Ok(Self::from_region_variances(scene, region_variances, ref_variance))
    }

    /// Constant per-task variances (no spatial structure).
    pub fn constant(
        scene: &SyntheticScene,
        task_variances: &[f64],
        ref_variance: f64,
    ) -> Result<Self> {
        if task_variances.is_empty() {
            return Err(Error::EmptyInput {
                what: "task variances",
            });
        }
        if let Some(v) = task_variances.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::parameter(
                "variance",
                format!("task variance must be > 0, got {v}"),
            ));
        }
        let regions = scene.num_regions();
        let region_variances = task_variances
            .iter()
            .map(|&v| vec![v; regions])
            .collect();
        Ok(Self::from_region_variances(scene, region_variances, ref_variance))
    }

    fn from_region_variances(
        scene: &SyntheticScene,
        region_variances: Vec<Vec<f64>>,
        ref_variance: f64,
    ) -> Self {
        let variance = region_variances
            .iter()
            .map(|per_region| {
                ScalarField::from_op(
                    scene.height(),
                    scene.width(),
                    scene.region_map().iter().map(|&r| per_region[r]).collect(),
                )
            })
            .collect();
        Self {
            variance,
            region_variances,
            ref_variance,
        }
    }

    pub fn num_tasks(&self) -> usize {
        self.variance.len()
    }

    pub fn variance(&self, task: usize) -> &ScalarField {
        &self.variance[task]
    }

    pub fn ref_variance(&self) -> f64 {
        self.ref_variance
    }

    /// Largest over smallest variance across all tasks and regions.
    pub fn variance_ratio(&self) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for per_region in &self.region_variances {
            for &v in per_region {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        hi / lo
    }

    /// Exact oracle precision fields `1 / sigma^2`.
    pub fn oracle_precisions(&self) -> Vec<PrecisionField> {
        self.variance
            .iter()
            .map(|field| {
                PrecisionField::new(field.map(|v| 1.0 / v)).expect("positive by construction")
            })
            .collect()
    }
}

/// Draws the shared reference observation and all task evidences around the
/// latent truth, returning the oracle precisions alongside.
pub fn emit_evidence(
    scene: &SyntheticScene,
    noise: &NoiseModel,
    rng: &RngStream,
) -> (FieldTensor, Vec<FieldTensor>, Vec<PrecisionField>) {
    let (h, w, c) = scene.latent_truth().shape();
    let mut evidences = Vec::with_capacity(noise.num_tasks());
    for t in 0..noise.num_tasks() {
        let mut stream = rng.derive(SALT_TASK_NOISE + t as u64);
        let mut data = Vec::with_capacity(h * w * c);
        for y in 0..h {
            for x in 0..w {
                let std = noise.variance(t).get(y, x).sqrt();
                for ch in 0..c {
                    data.push(scene.latent_truth().get(y, x, ch) + stream.normal(0.0, std));
                }
            }
        }
        evidences.push(FieldTensor::from_op(h, w, c, data));
    }
    let mut ref_stream = rng.derive(SALT_REF_NOISE);
    let ref_std = noise.ref_variance().sqrt();
    let ref_data = scene
        .latent_truth()
        .data()
        .iter()
        .map(|v| v + ref_stream.normal(0.0, ref_std))
        .collect();
    let reference = FieldTensor::from_op(h, w, c, ref_data);
    (reference, evidences, noise.oracle_precisions())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene(seed: u64) -> SyntheticScene {
        generate_scene(16, 16, 4, 8, &RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn scene_is_deterministic() {
        let a = scene(5);
        let b = scene(5);
        assert_eq!(a.semantic(), b.semantic());
        assert_eq!(a.latent_truth().data(), b.latent_truth().data());
        let c = scene(6);
        assert_ne!(a.latent_truth().data(), c.latent_truth().data());
    }

    #[test]
    fn edge_map_matches_label_boundaries() {
        let s = generate_scene(16, 16, 2, 8, &RngStream::new(9, 0)).unwrap();
        assert!(s.edge().iter().any(|&e| e), "two regions must produce edges");
        let (h, w) = (s.height(), s.width());
        for y in 0..h {
            for x in 0..w {
                let label = s.semantic()[y * w + x];
                let mut expected = false;
                if y > 0 {
                    expected |= s.semantic()[(y - 1) * w + x] != label;
                }
                if y + 1 < h {
                    expected |= s.semantic()[(y + 1) * w + x] != label;
                }
                if x > 0 {
                    expected |= s.semantic()[y * w + x - 1] != label;
                }
                if x + 1 < w {
                    expected |= s.semantic()[y * w + x + 1] != label;
                }
                assert_eq!(s.edge()[y * w + x], expected);
            }
        }
    }

    #[test]
    fn normals_are_unit_and_depth_positive() {
        let s = scene(7);
        for idx in 0..s.height() * s.width() {
            let n = &s.normal().data()[idx * 3..idx * 3 + 3];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-9);
        }
        assert!(s.depth().min() > 0.0);
    }

    #[test]
    fn scene_preconditions() {
        let rng = RngStream::new(1, 0);
        assert!(generate_scene(8, 8, 1, 8, &rng).is_err());
        assert!(generate_scene(8, 8, 2, 6, &rng).is_err());
        assert!(generate_scene(0, 8, 2, 8, &rng).is_err());
        assert!(generate_scene(2, 2, 5, 8, &rng).is_err());
    }

    #[test]
    fn all_regions_nonempty() {
        for seed in 0..20 {
            let s = generate_scene(12, 12, 6, 12, &RngStream::new(seed, 0)).unwrap();
            let mut seen = [false; 6];
            for &r in s.region_map() {
                seen[r] = true;
            }
            assert!(seen.iter().all(|&b| b), "seed {seed} left a region empty");
        }
    }

    #[test]
    fn class_count_is_capacity_limited() {
        let s = generate_scene(16, 16, 6, 8, &RngStream::new(3, 0)).unwrap();
        assert_eq!(s.class_count(), 3);
        let s = generate_scene(16, 16, 2, 16, &RngStream::new(3, 0)).unwrap();
        assert_eq!(s.class_count(), 2);
    }

    #[test]
    fn decode_of_truth_reproduces_task_maps() {
        let s = scene(11);
        let decoded = s.decode_tasks(s.latent_truth()).unwrap();
        assert_eq!(decoded.semantic, s.semantic());
        let depth_err = crate::metrics::rmse(&decoded.depth, s.depth()).unwrap();
        assert!(depth_err < 1e-8, "depth rmse {depth_err}");
        let merr = crate::metrics::mean_angular_error(&decoded.normal, s.normal()).unwrap();
        assert!(merr < 1e-6, "normal error {merr}");
        for (p, &e) in decoded.edge_prob.data().iter().zip(s.edge()) {
            assert!((p - if e { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }

    #[test]
    fn decoded_normals_unit_length() {
        let s = scene(12);
        let mut rng = RngStream::new(12, 5);
        let noisy = s.latent_truth().map(|v| v + rng.normal(0.0, 0.5));
        let decoded = s.decode_tasks(&noisy).unwrap();
        for idx in 0..s.height() * s.width() {
            let n = &decoded.normal.data()[idx * 3..idx * 3 + 3];
            let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            assert!((len - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn argmax_stable_under_tiny_noise() {
        let s = scene(13);
        let mut rng = RngStream::new(13, 5);
        let jittered = s.latent_truth().map(|v| v + rng.normal(0.0, 1e-9));
        let decoded = s.decode_tasks(&jittered).unwrap();
        assert_eq!(decoded.semantic, s.semantic());
    }

    #[test]
    fn basis_rows_are_orthonormal() {
        let s = scene(14);
        let m = s.stack_channels;
        let c = s.channels();
        for i in 0..m {
            for j in 0..m {
                let dot: f64 = (0..c).map(|k| s.basis[i * c + k] * s.basis[j * c + k]).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12, "basis[{i}].basis[{j}] = {dot}");
            }
        }
    }

    #[test]
    fn noiseless_evidence_matches_truth() {
        let s = scene(15);
        let noise = NoiseModel::constant(&s, &[1e-18, 1e-18], 1e-18).unwrap();
        let (reference, evidences, _) = emit_evidence(&s, &noise, &RngStream::new(15, 1));
        for e in &evidences {
            for (a, b) in e.data().iter().zip(s.latent_truth().data()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        for (a, b) in reference.data().iter().zip(s.latent_truth().data()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn empirical_noise_variance_matches_model() {
        // 128x128x8 gives ~1.3e5 samples; the sample variance of a constant-
        // sigma evidence field must land within 5%.
        let s = generate_scene(128, 128, 4, 8, &RngStream::new(16, 0)).unwrap();
        let sigma_sq = 0.37;
        let noise = NoiseModel::constant(&s, &[sigma_sq], 0.25).unwrap();
        let (_, evidences, _) = emit_evidence(&s, &noise, &RngStream::new(16, 1));
        let diffs: Vec<f64> = evidences[0]
            .data()
            .iter()
            .zip(s.latent_truth().data())
            .map(|(a, b)| a - b)
            .collect();
        assert!(diffs.len() >= 100_000);
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / diffs.len() as f64;
        assert!(
            (var - sigma_sq).abs() < 0.05 * sigma_sq,
            "sample variance {var} vs {sigma_sq}"
        );
    }

    #[test]
    fn oracle_precision_is_reciprocal_variance() {
        let s = scene(17);
        let noise =
            NoiseModel::heteroscedastic(&s, 3, 0.01, 1.0, 0.25, &RngStream::new(17, 1)).unwrap();
        let precisions = noise.oracle_precisions();
        for t in 0..3 {
            for (p, v) in precisions[t].data().iter().zip(noise.variance(t).data()) {
                assert_eq!(*p, 1.0 / v);
            }
        }
    }

    #[test]
    fn heteroscedastic_model_is_regionwise_constant() {
        let s = scene(18);
        let noise =
            NoiseModel::heteroscedastic(&s, 2, 0.01, 1.0, 0.25, &RngStream::new(18, 1)).unwrap();
        let w = s.width();
        for t in 0..2 {
            let field = noise.variance(t);
            let mut per_region: Vec<Option<f64>> = vec![None; s.num_regions()];
            for (idx, &r) in s.region_map().iter().enumerate() {
                let v = field.get(idx / w, idx % w);
                match per_region[r] {
                    None => per_region[r] = Some(v),
                    Some(prev) => assert_eq!(prev, v),
                }
            }
        }
        assert!(noise.variance_ratio() >= 1.0);
    }
}
