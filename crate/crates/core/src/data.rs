//! Labeled image datasets: synthetic generation, CIFAR-style ingestion,
//! class-capped sampling, augmentation views and the `TUED` file format.
//!
//! Pixel values are kept at `f32` precision (stored in `f64`) so that the
//! on-disk format round-trips bit-exactly.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::binio::{q32, write_atomic, Reader, Writer};
use crate::error::{shape_mismatch, Error, Result};
use crate::numkernel::SeededRng;

const DATASET_MAGIC: &[u8; 4] = b"TUED";
const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 28;

const STREAM_TEMPLATES: u64 = 0x7e3a_0001;
const STREAM_TRAIN_NOISE: u64 = 0x7e3a_0002;
const STREAM_TEST_NOISE: u64 = 0x7e3a_0003;
const STREAM_CAP: u64 = 0x7e3a_0004;

/// Image geometry; pixels are laid out channel-major, then row, then column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Geometry {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn dim(&self) -> usize {
        self.width * self.height * self.channels
    }

    #[inline]
    pub fn index(&self, c: usize, r: usize, col: usize) -> usize {
        (c * self.height + r) * self.width + col
    }
}

/// Labeled collection of flat image vectors in `[0, 1]^d`.
#[derive(Debug, Clone)]
pub struct Dataset {
    images: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    geometry: Geometry,
    name: String,
}

impl PartialEq for Dataset {
    /// Content equality; the name tag is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.images == other.images
            && self.labels == other.labels
            && self.num_classes == other.num_classes
            && self.geometry == other.geometry
    }
}

impl Dataset {
    /// Validates and builds a dataset. Pixels are rounded to `f32` precision.
    pub fn new(
        images: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        geometry: Geometry,
        name: impl Into<String>,
    ) -> Result<Self> {
        let (n, d) = images.dim();
        if d != geometry.dim() {
            return Err(shape_mismatch(
                format!("{} columns", geometry.dim()),
                format!("{d} columns"),
            ));
        }
        if labels.len() != n {
            return Err(shape_mismatch(
                format!("{n} labels"),
                format!("{}", labels.len()),
            ));
        }
        if num_classes < 2 {
            return Err(Error::BadConfig(format!(
                "dataset needs at least 2 classes, got {num_classes}"
            )));
        }
        let mut counts = vec![0usize; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::BadConfig(format!(
                    "label {y} out of range for {num_classes} classes"
                )));
            }
            counts[y] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::BadConfig(format!("class {k} has no samples")));
        }
        if let Some(v) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::BadConfig(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            images: images.mapv(q32),
            labels,
            num_classes,
            geometry,
            name: name.into(),
        })
    }

    pub fn images(&self) -> &Array2<f64> {
        &self.images
    }

    pub fn image(&self, i: usize) -> ArrayView1<'_, f64> {
        self.images.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.ncols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Sample indices grouped by class, ascending within each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        group_by_class(&self.labels, self.num_classes)
    }

    /// Same images with replaced labels (used for label-shuffling controls).
    pub fn relabeled(&self, labels: Vec<usize>) -> Result<Self> {
        Self::new(
            self.images.clone(),
            labels,
            self.num_classes,
            self.geometry,
            self.name.clone(),
        )
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let images = self.images.select(ndarray::Axis(0), idx);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Self::new(
            images,
            labels,
            self.num_classes,
            self.geometry,
            self.name.clone(),
        )
    }
}

pub(crate) fn group_by_class(labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); num_classes];
    for (i, &y) in labels.iter().enumerate() {
        groups[y].push(i);
    }
    groups
}

/// Parameters of the class-patterned synthetic image generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub per_class: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Peak-to-peak amplitude of the class template around 0.5.
    pub pattern_strength: f64,
    /// Standard deviation of i.i.d. per-pixel noise.
    pub noise_std: f64,
    /// Amplitude of a per-sample random low-frequency pattern shared by all
    /// classes, with its component along the template differences removed so
    /// it varies instances without blurring classes. Zero disables it.
    pub nuisance_strength: f64,
    /// Side length of the coarse grid that templates are upsampled from.
    pub grid: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            per_class: 200,
            width: 8,
            height: 8,
            channels: 1,
            pattern_strength: 0.1,
            noise_std: 0.02,
            nuisance_strength: 0.6,
            grid: 3,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width, self.height, self.channels)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_string()));
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if self.per_class == 0 {
            return bad("per_class must be at least 1");
        }
        if self.width == 0 || self.height == 0 || self.channels == 0 {
            return bad("image dimensions must be positive");
        }
        if !(self.pattern_strength > 0.0 && self.pattern_strength <= 1.0) {
            return bad("pattern_strength must lie in (0, 1]");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative");
        }
        if !(self.nuisance_strength >= 0.0 && self.nuisance_strength <= 1.0) {
            return bad("nuisance_strength must lie in [0, 1]");
        }
        if self.grid < 2 {
            return bad("grid must be at least 2");
        }
        Ok(())
    }

    /// Class templates in `[0.5 - s/2, 0.5 + s/2]`, one row per class.
    pub fn templates(&self) -> Array2<f64> {
        let geom = self.geometry();
        let mut rng = SeededRng::new(self.seed, STREAM_TEMPLATES);
        let mut out = Array2::zeros((self.num_classes, geom.dim()));
        for k in 0..self.num_classes {
            let pattern = low_frequency_pattern(geom, self.grid, &mut rng);
            out.row_mut(k)
                .assign(&pattern.mapv(|p| 0.5 + 0.5 * self.pattern_strength * p));
        }
        out
    }
}

/// A smooth pattern in `[-1, 1]` bilinearly upsampled from a random grid,
/// rescaled so its largest magnitude is exactly 1.
fn low_frequency_pattern(geom: Geometry, grid: usize, rng: &mut SeededRng) -> ndarray::Array1<f64> {
    let mut out = ndarray::Array1::zeros(geom.dim());
    for c in 0..geom.channels {
        let coarse: Vec<f64> = (0..grid * grid)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect();
        let sample = |u: f64, v: f64| {
            let (x0, y0) = (u.floor() as usize, v.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(grid - 1), (y0 + 1).min(grid - 1));
            let (fx, fy) = (u - x0 as f64, v - y0 as f64);
            let g = |x: usize, y: usize| coarse[y * grid + x];
            (1.0 - fy) * ((1.0 - fx) * g(x0, y0) + fx * g(x1, y0))
                + fy * ((1.0 - fx) * g(x0, y1) + fx * g(x1, y1))
        };
        let scale = |len: usize| {
            if len > 1 {
                (grid - 1) as f64 / (len - 1) as f64
            } else {
                0.0
            }
        };
        let (sx, sy) = (scale(geom.width), scale(geom.height));
        for r in 0..geom.height {
            for col in 0..geom.width {
                out[geom.index(c, r, col)] = sample(col as f64 * sx, r as f64 * sy);
            }
        }
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.mapv_inplace(|v| v / peak);
    }
    out
}

/// Orthonormal basis (Gram-Schmidt) of the span of `t_k - t_0`.
fn difference_basis(templates: &Array2<f64>) -> Array2<f64> {
    let d = templates.ncols();
    let mut basis: Vec<ndarray::Array1<f64>> = Vec::new();
    for k in 1..templates.nrows() {
        let mut v = &templates.row(k) - &templates.row(0);
        for b in &basis {
            let c = v.dot(b);
            v.scaled_add(-c, b);
        }
        let norm = v.dot(&v).sqrt();
        if norm > 1e-9 {
            basis.push(v / norm);
        }
    }
    let mut out = Array2::zeros((basis.len(), d));
    for (mut row, b) in out.rows_mut().into_iter().zip(&basis) {
        row.assign(b);
    }
    out
}

fn synthesize(cfg: &SyntheticConfig, per_class: usize, stream: u64, name: &str) -> Result<Dataset> {
    cfg.validate()?;
    let geom = cfg.geometry();
    let templates = cfg.templates();
    let basis = difference_basis(&templates);
    let n = cfg.num_classes * per_class;
    let mut rng = SeededRng::new(cfg.seed, stream);
    let mut images = Array2::zeros((n, geom.dim()));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % cfg.num_classes;
        labels.push(k);
        let mut row = images.row_mut(i);
        row.assign(&templates.row(k));
        if cfg.nuisance_strength > 0.0 {
            let mut nuisance = low_frequency_pattern(geom, cfg.grid, &mut rng);
            for b in basis.rows() {
                let c = nuisance.dot(&b);
                nuisance.scaled_add(-c, &b);
            }
            row.scaled_add(0.5 * cfg.nuisance_strength, &nuisance);
        }
        for v in row.iter_mut() {
            *v = (*v + cfg.noise_std * rng.normal()).clamp(0.0, 1.0);
        }
    }
    Dataset::new(images, labels, cfg.num_classes, geom, name)
}

/// Draws `per_class` samples per class; labels cycle `0, 1, …, K-1`.
pub fn make_synthetic(cfg: &SyntheticConfig) -> Result<Dataset> {
    synthesize(cfg, cfg.per_class, STREAM_TRAIN_NOISE, "synthetic-train")
}

/// Train split plus a disjoint test draw from the same templates.
pub fn make_synthetic_split(
    cfg: &SyntheticConfig,
    test_per_class: usize,
) -> Result<(Dataset, Dataset)> {
    let train = make_synthetic(cfg)?;
    if test_per_class == 0 {
        return Err(Error::BadConfig("test_per_class must be at least 1".into()));
    }
    let test = synthesize(cfg, test_per_class, STREAM_TEST_NOISE, "synthetic-test")?;
    Ok((train, test))
}

/// Keeps at most `cap` uniformly chosen samples per class, preserving the
/// original order.
pub fn class_capped_sample(ds: &Dataset, cap: usize, seed: u64) -> Result<Dataset> {
    if cap == 0 {
        return Err(Error::BadConfig("cap must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed, STREAM_CAP);
    let mut keep = Vec::new();
    for members in ds.class_indices() {
        if members.len() <= cap {
            keep.extend(members);
        } else {
            let mut order = rng.permutation(members.len());
            order.truncate(cap);
            keep.extend(order.into_iter().map(|j| members[j]));
        }
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep)?.with_name(ds.name()))
}

/// Random view family: 3×3 box blur, pad-then-crop, horizontal flip,
/// Gaussian jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationPair {
    pub crop_pad: usize,
    pub flip_prob: f64,
    pub blur_prob: f64,
    pub jitter_std: f64,
    pub seed: u64,
}

impl Default for AugmentationPair {
    fn default() -> Self {
        Self {
            crop_pad: 2,
            flip_prob: 0.5,
            blur_prob: 0.5,
            jitter_std: 0.05,
            seed: 0,
        }
    }
}

impl AugmentationPair {
    pub fn identity() -> Self {
        Self {
            crop_pad: 0,
            flip_prob: 0.0,
            blur_prob: 0.0,
            jitter_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::BadConfig("flip_prob must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.blur_prob) {
            return Err(Error::BadConfig("blur_prob must lie in [0, 1]".into()));
        }
        if !(self.jitter_std >= 0.0 && self.jitter_std.is_finite()) {
            return Err(Error::BadConfig(
                "jitter_std must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn sample(&self, geom: Geometry, rng: &mut SeededRng) -> ViewTransform {
        let span = 2 * self.crop_pad + 1;
        let shift = |rng: &mut SeededRng| {
            if self.crop_pad == 0 {
                0
            } else {
                rng.below(span) as isize - self.crop_pad as isize
            }
        };
        let dx = shift(rng);
        let dy = shift(rng);
        let flip = self.flip_prob > 0.0 && rng.bernoulli(self.flip_prob);
        let blur = self.blur_prob > 0.0 && rng.bernoulli(self.blur_prob);
        let jitter = (self.jitter_std > 0.0).then(|| {
            (0..geom.dim())
                .map(|_| self.jitter_std * rng.normal())
                .collect()
        });
        ViewTransform {
            geometry: geom,
            dx,
            dy,
            flip,
            blur,
            jitter,
        }
    }
}

/// One drawn augmentation. Views are `clamp(crop_flip(blur(x)) + jitter, 0, 1)`
/// where out-of-frame pixels read as zero padding and the blur averages the
/// in-frame 3×3 neighbourhood of each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTransform {
    geometry: Geometry,
    dx: isize,
    dy: isize,
    flip: bool,
    blur: bool,
    jitter: Option<Vec<f64>>,
}

/// In-frame 3×3 neighbours of every pixel, per channel.
fn for_each_neighbour(g: Geometry, mut f: impl FnMut(usize, usize, f64)) {
    for c in 0..g.channels {
        for r in 0..g.height {
            for col in 0..g.width {
                let rows = r.saturating_sub(1)..=(r + 1).min(g.height - 1);
                let cols = col.saturating_sub(1)..=(col + 1).min(g.width - 1);
                let w = 1.0 / (rows.clone().count() * cols.clone().count()) as f64;
                for rr in rows {
                    for cc in cols.clone() {
                        f(g.index(c, r, col), g.index(c, rr, cc), w);
                    }
                }
            }
        }
    }
}

impl ViewTransform {
    /// Source pixel feeding output pixel `(c, r, col)`, if inside the frame.
    #[inline]
    fn source(&self, c: usize, r: usize, col: usize) -> Option<usize> {
        let g = self.geometry;
        let col = if self.flip { g.width - 1 - col } else { col };
        let sr = r as isize + self.dy;
        let sc = col as isize + self.dx;
        if sr < 0 || sc < 0 || sr >= g.height as isize || sc >= g.width as isize {
            None
        } else {
            Some(g.index(c, sr as usize, sc as usize))
        }
    }

    fn pre_clamp(&self, x: ArrayView1<f64>, out_idx: usize, src: Option<usize>) -> f64 {
        let base = src.map_or(0.0, |s| x[s]);
        match &self.jitter {
            Some(j) => base + j[out_idx],
            None => base,
        }
    }

    fn blurred(&self, x: ArrayView1<f64>) -> Option<ndarray::Array1<f64>> {
        self.blur.then(|| {
            let mut b = ndarray::Array1::zeros(x.len());
            for_each_neighbour(self.geometry, |o, s, w| b[o] += w * x[s]);
            b
        })
    }

    pub fn apply(&self, x: ArrayView1<f64>, mut out: ArrayViewMut1<f64>) {
        let blurred = self.blurred(x);
        let x = blurred.as_ref().map_or(x, |b| b.view());
        let g = self.geometry;
        for c in 0..g.channels {
            for r in 0..g.height {
                for col in 0..g.width {
                    let o = g.index(c, r, col);
                    let v = self.pre_clamp(x, o, self.source(c, r, col));
                    out[o] = v.clamp(0.0, 1.0);
                }
            }
        }
    }

    /// Accumulates `J^T dview` into `dx`; pixels clamped in the forward pass
    /// pass no gradient.
    pub fn backprop(&self, x: ArrayView1<f64>, dview: ArrayView1<f64>, mut dx: ArrayViewMut1<f64>) {
        let blurred = self.blurred(x);
        let src = blurred.as_ref().map_or(x, |b| b.view());
        let mut dsrc = ndarray::Array1::zeros(x.len());
        let g = self.geometry;
        for c in 0..g.channels {
            for r in 0..g.height {
                for col in 0..g.width {
                    let o = g.index(c, r, col);
                    if let Some(s) = self.source(c, r, col) {
                        let v = self.pre_clamp(src, o, Some(s));
                        if (0.0..=1.0).contains(&v) {
                            dsrc[s] += dview[o];
                        }
                    }
                }
            }
        }
        if self.blur {
            for_each_neighbour(g, |o, s, w| dx[s] += w * dsrc[o]);
        } else {
            dx += &dsrc;
        }
    }
}

/// Two independently drawn views of `x`.
pub fn augment(
    x: ArrayView1<f64>,
    geom: Geometry,
    aug: &AugmentationPair,
    rng: &mut SeededRng,
) -> (ndarray::Array1<f64>, ndarray::Array1<f64>) {
    let mut v1 = ndarray::Array1::zeros(x.len());
    let mut v2 = ndarray::Array1::zeros(x.len());
    aug.sample(geom, rng).apply(x, v1.view_mut());
    aug.sample(geom, rng).apply(x, v2.view_mut());
    (v1, v2)
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let g = ds.geometry;
    let narrow = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
    };
    let narrow16 = |v: usize, what: &str| {
        u16::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u16")))
    };
    let mut w = Writer::default();
    w.bytes(DATASET_MAGIC)
        .u32(DATASET_VERSION)
        .u32(narrow(ds.len(), "n")?)
        .u32(narrow(ds.dim(), "d")?)
        .u32(narrow(ds.num_classes, "K")?)
        .u16(narrow16(g.width, "width")?)
        .u16(narrow16(g.height, "height")?)
        .u16(narrow16(g.channels, "channels")?)
        .u16(0);
    for &y in &ds.labels {
        w.i32(y as i32);
    }
    for &v in ds.images.iter() {
        w.f32(v as f32);
    }
    Ok(w.into_inner())
}

pub fn decode_dataset(bytes: &[u8], name: &str) -> Result<Dataset> {
    let mut r = Reader::new(bytes, "dataset");
    r.magic(DATASET_MAGIC)?;
    r.version(DATASET_VERSION)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let geom = Geometry::new(r.u16()? as usize, r.u16()? as usize, r.u16()? as usize);
    let _pad = r.u16()?;
    if geom.dim() != d {
        return Err(Error::Format(format!(
            "geometry {}x{}x{} does not match d = {d}",
            geom.width, geom.height, geom.channels
        )));
    }
    let body = r.expect_len(n, 4)? + r.expect_len(n * d, 4)?;
    if bytes.len() != HEADER_LEN + body {
        return Err(Error::Format(format!(
            "dataset: expected {} bytes, found {}",
            HEADER_LEN + body,
            bytes.len()
        )));
    }
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = r.i32()?;
        if y < 0 || y as usize >= k {
            return Err(Error::Format(format!("label {y} out of range for K = {k}")));
        }
        labels.push(y as usize);
    }
    let mut pixels = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        pixels.push(r.f32()? as f64);
    }
    r.finish()?;
    let images = Array2::from_shape_vec((n, d), pixels).expect("length checked");
    Dataset::new(images, labels, k, geom, name).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(ds)?)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_dataset(&bytes, &name)
}

/// Reads CIFAR-style records: one label byte followed by `d` pixel bytes.
pub fn load_cifar_binary(path: &Path, geom: Geometry, num_classes: usize) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let d = geom.dim();
    let record = d + 1;
    if bytes.is_empty() || bytes.len() % record != 0 {
        return Err(Error::Format(format!(
            "cifar: {} bytes is not a multiple of record size {record}",
            bytes.len()
        )));
    }
    let n = bytes.len() / record;
    let mut labels = Vec::with_capacity(n);
    let mut images = Array2::zeros((n, d));
    for (i, rec) in bytes.chunks_exact(record).enumerate() {
        let y = rec[0] as usize;
        if y >= num_classes {
            return Err(Error::Format(format!(
                "cifar: label {y} in record {i} out of range"
            )));
        }
        labels.push(y);
        for (dst, &b) in images.row_mut(i).iter_mut().zip(&rec[1..]) {
            *dst = b as f64 / 255.0;
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(images, labels, num_classes, geom, name).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SyntheticConfig {
        SyntheticConfig {
            num_classes: 4,
            per_class: 10,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn synthetic_counts() {
        let ds = make_synthetic(&small_cfg()).unwrap();
        assert_eq!(ds.len(), 40);
        assert_eq!(ds.class_counts(), vec![10; 4]);
        assert!(ds.images().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = make_synthetic(&small_cfg()).unwrap();
        let b = make_synthetic(&small_cfg()).unwrap();
        assert_eq!(encode_dataset(&a).unwrap(), encode_dataset(&b).unwrap());
    }

    #[test]
    fn templates_pairwise_distinct() {
        let t = small_cfg().templates();
        for i in 0..t.nrows() {
            for j in i + 1..t.nrows() {
                let d = (&t.row(i) - &t.row(j)).mapv(|v| v * v).sum().sqrt();
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn split_test_differs_from_train() {
        let (train, test) = make_synthetic_split(&small_cfg(), 5).unwrap();
        assert_eq!(test.len(), 20);
        assert_ne!(train.image(0), test.image(0));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = SyntheticConfig {
            per_class: 0,
            ..small_cfg()
        };
        assert!(matches!(make_synthetic(&cfg), Err(Error::BadConfig(_))));
        let cfg = SyntheticConfig {
            num_classes: 1,
            ..small_cfg()
        };
        assert!(matches!(make_synthetic(&cfg), Err(Error::BadConfig(_))));
    }

    #[test]
    fn cap_behaviour() {
        let ds = make_synthetic(&small_cfg()).unwrap();
        assert_eq!(class_capped_sample(&ds, 10, 1).unwrap(), ds);
        assert_eq!(class_capped_sample(&ds, 100, 1).unwrap(), ds);
        let one = class_capped_sample(&ds, 1, 1).unwrap();
        assert_eq!(one.class_counts(), vec![1; 4]);
        let a = class_capped_sample(&ds, 3, 9).unwrap();
        let b = class_capped_sample(&ds, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![3; 4]);
    }

    #[test]
    fn identity_augmentation_is_exact() {
        let ds = make_synthetic(&small_cfg()).unwrap();
        let mut rng = SeededRng::new(1, 1);
        let (v1, v2) = augment(
            ds.image(3),
            ds.geometry(),
            &AugmentationPair::identity(),
            &mut rng,
        );
        assert_eq!(v1, ds.image(3));
        assert_eq!(v2, ds.image(3));
    }

    #[test]
    fn augmentation_views_clamped_and_replayable() {
        let ds = make_synthetic(&small_cfg()).unwrap();
        let aug = AugmentationPair {
            crop_pad: 2,
            flip_prob: 0.5,
            blur_prob: 0.5,
            jitter_std: 0.5,
            seed: 0,
        };
        let mut r1 = SeededRng::new(4, 2);
        let mut r2 = SeededRng::new(4, 2);
        for i in 0..ds.len() {
            let a = augment(ds.image(i), ds.geometry(), &aug, &mut r1);
            let b = augment(ds.image(i), ds.geometry(), &aug, &mut r2);
            assert!(a
                .0
                .iter()
                .chain(a.1.iter())
                .all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn blur_keeps_flat_images_flat() {
        let geom = Geometry::new(4, 3, 1);
        let aug = AugmentationPair {
            blur_prob: 1.0,
            ..AugmentationPair::identity()
        };
        let t = aug.sample(geom, &mut SeededRng::new(0, 0));
        let x = ndarray::Array1::from_elem(geom.dim(), 0.25);
        let mut out = ndarray::Array1::zeros(geom.dim());
        t.apply(x.view(), out.view_mut());
        assert!(out.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        // A bright corner pixel is averaged into each neighbour with that
        // neighbour's own in-frame count as the divisor.
        let mut spike = ndarray::Array1::zeros(geom.dim());
        spike[0] = 1.0;
        t.apply(spike.view(), out.view_mut());
        assert_eq!(out[geom.index(0, 0, 0)], 0.25);
        assert_eq!(out[geom.index(0, 1, 1)], 1.0 / 9.0);
        assert_eq!(out[geom.index(0, 2, 2)], 0.0);
    }

    #[test]
    fn view_backprop_is_transpose_of_apply() {
        // For pixels away from the clamp boundary the view map is affine, so
        // <dview, J dx> == <J^T dview, dx>.
        let geom = Geometry::new(5, 4, 2);
        let aug = AugmentationPair {
            crop_pad: 2,
            flip_prob: 0.5,
            blur_prob: 0.5,
            jitter_std: 0.01,
            seed: 0,
        };
        let mut rng = SeededRng::new(11, 0);
        for _ in 0..20 {
            let t = aug.sample(geom, &mut rng);
            let x = ndarray::Array1::from_shape_fn(geom.dim(), |_| rng.uniform_in(0.3, 0.7));
            let e = ndarray::Array1::from_shape_fn(geom.dim(), |_| rng.uniform_in(-1.0, 1.0));
            let dview = ndarray::Array1::from_shape_fn(geom.dim(), |_| rng.normal());
            let h = 1e-4;
            let mut up = ndarray::Array1::zeros(geom.dim());
            let mut down = ndarray::Array1::zeros(geom.dim());
            t.apply((&x + &(h * &e)).view(), up.view_mut());
            t.apply((&x - &(h * &e)).view(), down.view_mut());
            let jvp = (&up - &down) / (2.0 * h);
            let mut dx = ndarray::Array1::zeros(geom.dim());
            t.backprop(x.view(), dview.view(), dx.view_mut());
            assert!((dview.dot(&jvp) - dx.dot(&e)).abs() < 1e-8);
        }
    }

    #[test]
    fn dataset_round_trip_and_corruption() {
        let ds = make_synthetic(&small_cfg()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.tued");
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);

        let bytes = encode_dataset(&ds).unwrap();
        assert!(matches!(
            decode_dataset(&bytes[..bytes.len() - 3], "t"),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad, "t"), Err(Error::Format(_))));
        let mut bad = bytes;
        bad[4] = 2;
        assert!(matches!(decode_dataset(&bad, "t"), Err(Error::Format(_))));
    }

    #[test]
    fn cifar_records_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("batch.bin");
        let geom = Geometry::new(2, 1, 1);
        fs::write(&path, [1u8, 0, 255, 0, 51, 102]).unwrap();
        let ds = load_cifar_binary(&path, geom, 2).unwrap();
        assert_eq!(ds.labels(), &[1, 0]);
        assert_eq!(ds.image(0)[1], 1.0);
        assert_eq!(ds.image(1)[0], q32(0.2));

        fs::write(&path, [1u8, 0, 255, 0, 51]).unwrap();
        assert!(matches!(
            load_cifar_binary(&path, geom, 2),
            Err(Error::Format(_))
        ));
    }
}
