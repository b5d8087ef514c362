//! Perturbation sets under an L∞ budget: projection, signed PGD steps,
//! assignment to target samples, swap diagnostics, interpolation and the
//! synthetic-noise baseline.
//!
//! Every constructor of [`PerturbationSet`] enforces `max |δ| ≤ ε`. Values
//! are stored at `f32` precision so the `TUEP` format round-trips exactly.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1, Axis};

use crate::binio::{q32, q32_floor, write_atomic, Reader, Writer};
use crate::data::{group_by_class, Dataset, Geometry};
use crate::error::{shape_mismatch, Error, Result};
use crate::numkernel::{sign, SeededRng};

const PERTURB_MAGIC: &[u8; 4] = b"TUEP";
const PERTURB_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

const STREAM_ASSIGN: u64 = 0x5e7_0001;
const STREAM_SWAP_INTRA: u64 = 0x5e7_0002;
const STREAM_SWAP_INTER: u64 = 0x5e7_0003;
const STREAM_INTERP: u64 = 0x5e7_0004;
const STREAM_SN: u64 = 0x5e7_0005;

/// Default interpolation weights when several new samples are needed.
pub const ALPHA_GRID: [f64; 3] = [0.25, 0.5, 0.75];

/// Per-sample perturbations sharing one L∞ budget.
#[derive(Debug, Clone)]
pub struct PerturbationSet {
    deltas: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    epsilon: f64,
    source_name: String,
}

impl PartialEq for PerturbationSet {
    /// Content equality; the source tag is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.deltas == other.deltas
            && self.labels == other.labels
            && self.num_classes == other.num_classes
            && self.epsilon.to_bits() == other.epsilon.to_bits()
    }
}

impl PerturbationSet {
    /// Validates and builds a set. `epsilon` is rounded down to `f32`
    /// precision and entries are rounded to `f32` then clamped to it, so the
    /// stored budget never exceeds the requested one.
    pub fn new(
        deltas: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        epsilon: f64,
        source_name: impl Into<String>,
    ) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::BadConfig(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        if labels.len() != deltas.nrows() {
            return Err(shape_mismatch(
                format!("{} labels", deltas.nrows()),
                format!("{}", labels.len()),
            ));
        }
        if num_classes == 0 {
            return Err(Error::BadConfig(
                "perturbation set needs at least one class".into(),
            ));
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
            return Err(Error::BadConfig(format!("class {k} has no perturbations")));
        }
        if let Some(v) = deltas.iter().find(|v| !(v.abs() <= epsilon)) {
            return Err(Error::BadConfig(format!(
                "perturbation entry {v} exceeds budget {epsilon}"
            )));
        }
        let epsilon = q32_floor(epsilon);
        let deltas = deltas.mapv(|v| q32(v).clamp(-epsilon, epsilon));
        Ok(Self {
            deltas,
            labels,
            num_classes,
            epsilon,
            source_name: source_name.into(),
        })
    }

    /// All-zero perturbations for the given labels.
    pub fn zeros(labels: Vec<usize>, num_classes: usize, dim: usize, epsilon: f64) -> Result<Self> {
        let n = labels.len();
        Self::new(
            Array2::zeros((n, dim)),
            labels,
            num_classes,
            epsilon,
            "zeros",
        )
    }

    pub fn deltas(&self) -> &Array2<f64> {
        &self.deltas
    }

    pub fn delta(&self, i: usize) -> ArrayView1<'_, f64> {
        self.deltas.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn source_name(&self) -> &str {
        &self.source_name
    }

    pub fn with_source_name(mut self, name: impl Into<String>) -> Self {
        self.source_name = name.into();
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.deltas.ncols()
    }

    pub fn max_abs(&self) -> f64 {
        self.deltas.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        group_by_class(&self.labels, self.num_classes)
    }

    /// Same deltas with replaced labels.
    pub fn relabeled(&self, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(
            self.deltas.clone(),
            labels,
            num_classes,
            self.epsilon,
            self.source_name.clone(),
        )
    }

    /// Rows of the set in the order given by `map`.
    pub fn gather(&self, map: &AssignmentMap) -> Result<Array2<f64>> {
        map.validate(self.len())?;
        Ok(self.deltas.select(Axis(0), &map.source))
    }
}

/// Target sample `i` receives source perturbation `source[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentMap {
    pub source: Vec<usize>,
}

impl AssignmentMap {
    pub fn identity(n: usize) -> Self {
        Self {
            source: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn validate(&self, source_len: usize) -> Result<()> {
        match self.source.iter().find(|&&j| j >= source_len) {
            Some(j) => Err(Error::BadAssignment(format!(
                "index {j} out of range for {source_len} perturbations"
            ))),
            None => Ok(()),
        }
    }
}

/// Elementwise clamp to `[-ε, ε]`.
pub fn project_linf(delta: ArrayView1<f64>, epsilon: f64) -> Array1<f64> {
    let mut out = delta.to_owned();
    project_linf_inplace(out.view_mut(), epsilon);
    out
}

pub fn project_linf_inplace(mut delta: ArrayViewMut1<f64>, epsilon: f64) {
    let eps = epsilon.max(0.0);
    delta.mapv_inplace(|v| v.clamp(-eps, eps));
}

/// Smallest elementwise change that keeps `x + δ` inside `[0, 1]`.
pub fn clamp_valid(x: ArrayView1<f64>, delta: ArrayView1<f64>) -> Array1<f64> {
    let mut out = delta.to_owned();
    out.zip_mut_with(&x, |d, &xi| *d = d.clamp(-xi, 1.0 - xi));
    out
}

/// One signed descent step followed by projection onto the ε-ball.
pub fn pgd_minimize(
    delta: ArrayView1<f64>,
    gradient: ArrayView1<f64>,
    step_size: f64,
    epsilon: f64,
) -> Result<Array1<f64>> {
    let mut out = delta.to_owned();
    pgd_minimize_inplace(out.view_mut(), gradient, step_size, epsilon)?;
    Ok(out)
}

pub fn pgd_minimize_inplace(
    mut delta: ArrayViewMut1<f64>,
    gradient: ArrayView1<f64>,
    step_size: f64,
    epsilon: f64,
) -> Result<()> {
    if delta.len() != gradient.len() {
        return Err(shape_mismatch(
            format!("gradient of length {}", delta.len()),
            format!("{}", gradient.len()),
        ));
    }
    if !(step_size > 0.0) {
        return Err(Error::BadConfig(format!(
            "PGD step size must be positive, got {step_size}"
        )));
    }
    let eps = epsilon.max(0.0);
    delta.zip_mut_with(&gradient, |d, &g| {
        *d = (*d - step_size * sign(g)).clamp(-eps, eps);
    });
    Ok(())
}

/// For each target sample, a seeded uniform pick among source perturbations
/// whose class is `class_map[target label]`.
pub fn assign_classwise(
    source: &PerturbationSet,
    target: &Dataset,
    class_map: &[usize],
    seed: u64,
) -> Result<AssignmentMap> {
    if class_map.len() != target.num_classes() {
        return Err(Error::BadAssignment(format!(
            "class map covers {} classes, target has {}",
            class_map.len(),
            target.num_classes()
        )));
    }
    let groups = source.class_indices();
    let mut rng = SeededRng::new(seed, STREAM_ASSIGN);
    let mut out = Vec::with_capacity(target.len());
    for &y in target.labels() {
        let k = class_map[y];
        let members = groups
            .get(k)
            .filter(|m| !m.is_empty())
            .ok_or(Error::EmptySourceClass(k))?;
        out.push(members[rng.below(members.len())]);
    }
    Ok(AssignmentMap { source: out })
}

/// Random cyclic permutation (Sattolo); has no fixed points for `n >= 2`.
fn random_cycle(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut next = vec![0; n];
    for i in 0..n {
        next[order[i]] = order[(i + 1) % n];
    }
    next
}

/// Within-class derangement of the sample ↔ perturbation correspondence.
pub fn swap_intra(set: &PerturbationSet, seed: u64) -> Result<AssignmentMap> {
    let mut rng = SeededRng::new(seed, STREAM_SWAP_INTRA);
    let mut source = vec![0; set.len()];
    for (k, members) in set.class_indices().into_iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: k,
                size: members.len(),
                needed: 2,
            });
        }
        let cycle = random_cycle(members.len(), &mut rng);
        for (pos, &i) in members.iter().enumerate() {
            source[i] = members[cycle[pos]];
        }
    }
    Ok(AssignmentMap { source })
}

/// Whole-class swap: a derangement `π` over classes, and every sample of
/// class `k` receives a distinct perturbation of class `π(k)` (re-used in a
/// seeded order only when class `k` is the larger one).
pub fn swap_inter(set: &PerturbationSet, seed: u64) -> Result<AssignmentMap> {
    let k = set.num_classes();
    if k < 2 {
        return Err(Error::BadConfig(
            "inter-class swap needs at least 2 classes".into(),
        ));
    }
    let mut rng = SeededRng::new(seed, STREAM_SWAP_INTER);
    let pi = random_cycle(k, &mut rng);
    let groups = set.class_indices();
    let mut source = vec![0; set.len()];
    for (cls, members) in groups.iter().enumerate() {
        let donors = &groups[pi[cls]];
        let mut order = donors.clone();
        rng.shuffle(&mut order);
        for (j, &i) in members.iter().enumerate() {
            source[i] = order[j % order.len()];
        }
    }
    Ok(AssignmentMap { source })
}

/// The class permutation realised by an inter-class swap map.
pub fn swap_inter_classes(set: &PerturbationSet, map: &AssignmentMap) -> Vec<usize> {
    let mut pi = vec![usize::MAX; set.num_classes()];
    for (i, &j) in map.source.iter().enumerate() {
        pi[set.labels()[i]] = set.labels()[j];
    }
    pi
}

fn check_alpha(alpha: f64, open: bool) -> Result<()> {
    let ok = if open {
        alpha > 0.0 && alpha < 1.0
    } else {
        (0.0..=1.0).contains(&alpha)
    };
    if ok {
        Ok(())
    } else {
        Err(Error::BadConfig(format!(
            "interpolation weight {alpha} out of range"
        )))
    }
}

fn blend(a: ArrayView1<f64>, b: ArrayView1<f64>, alpha: f64, epsilon: f64) -> Array1<f64> {
    let mut out = Array1::zeros(a.len());
    ndarray::Zip::from(&mut out)
        .and(&a)
        .and(&b)
        .for_each(|o, &x, &y| *o = alpha * x + (1.0 - alpha) * y);
    // Convexity keeps the blend inside the ball; the clamp only absorbs
    // rounding at the boundary.
    project_linf(out.view(), epsilon)
}

/// Picks two distinct members of class `k` (seeded).
fn pick_pair(members: &[usize], rng: &mut SeededRng) -> (usize, usize) {
    let i = rng.below(members.len());
    let mut j = rng.below(members.len() - 1);
    if j >= i {
        j += 1;
    }
    (members[i], members[j])
}

/// `α δ_i + (1 − α) δ_j` for two seeded-chosen members of class `k`.
pub fn interpolate_within(
    set: &PerturbationSet,
    k: usize,
    alpha: f64,
    pair_seed: u64,
) -> Result<Array1<f64>> {
    check_alpha(alpha, false)?;
    let members = set
        .class_indices()
        .into_iter()
        .nth(k)
        .ok_or_else(|| Error::BadConfig(format!("class {k} does not exist")))?;
    if members.len() < 2 {
        return Err(Error::ClassTooSmall {
            class: k,
            size: members.len(),
            needed: 2,
        });
    }
    let mut rng = SeededRng::new(pair_seed, STREAM_INTERP);
    let (i, j) = pick_pair(&members, &mut rng);
    Ok(blend(set.delta(i), set.delta(j), alpha, set.epsilon()))
}

/// Appends a new class made of `count` blends `α δ_a + (1 − α) δ_b` of
/// seeded-chosen members of classes `a` and `b`; the new class id is `K`.
pub fn interpolate_across(
    set: &PerturbationSet,
    classes: (usize, usize),
    alpha: f64,
    count: usize,
    pair_seed: u64,
) -> Result<PerturbationSet> {
    check_alpha(alpha, true)?;
    let (a, b) = classes;
    let k = set.num_classes();
    if a == b || a >= k || b >= k {
        return Err(Error::BadConfig(format!(
            "need two distinct existing classes, got ({a}, {b})"
        )));
    }
    if count == 0 {
        return Err(Error::BadConfig(
            "interpolated class needs at least one member".into(),
        ));
    }
    let groups = set.class_indices();
    let mut rng = SeededRng::new(pair_seed, STREAM_INTERP);
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let i = groups[a][rng.below(groups[a].len())];
        let j = groups[b][rng.below(groups[b].len())];
        rows.push(blend(set.delta(i), set.delta(j), alpha, set.epsilon()));
    }
    let mut deltas = set.deltas().clone();
    for r in &rows {
        deltas.push_row(r.view()).expect("row length matches");
    }
    let mut labels = set.labels().to_vec();
    labels.extend(std::iter::repeat_n(k, count));
    PerturbationSet::new(
        deltas,
        labels,
        k + 1,
        set.epsilon(),
        set.source_name().to_string(),
    )
}

/// Grows the set to `target_classes` classes. New classes blend distinct
/// class pairs at `α = 0.5`, neighbours `(a, a + 1 mod K)` first; each gets
/// as many members as the smaller parent.
pub fn expand_classes(
    set: &PerturbationSet,
    target_classes: usize,
    seed: u64,
) -> Result<PerturbationSet> {
    let k = set.num_classes();
    if target_classes < k {
        return Err(Error::BadConfig(format!(
            "cannot shrink {k} classes to {target_classes}"
        )));
    }
    if target_classes > k * (k - 1) / 2 + k {
        return Err(Error::BadConfig(format!(
            "{k} classes admit at most {} distinct pairwise blends",
            k * (k - 1) / 2
        )));
    }
    let counts: Vec<usize> = set.class_indices().iter().map(Vec::len).collect();
    let mut pairs = Vec::new();
    for gap in 1..=k / 2 {
        for a in 0..k {
            let b = (a + gap) % k;
            let key = (a.min(b), a.max(b));
            if !pairs.contains(&key) {
                pairs.push(key);
            }
        }
    }
    let mut out = set.clone();
    for (t, &(a, b)) in pairs.iter().take(target_classes - k).enumerate() {
        let count = counts[a].min(counts[b]);
        out = interpolate_across(&out, (a, b), 0.5, count, seed.wrapping_add(t as u64))?;
    }
    Ok(out)
}

/// Adds within-class blends until every class has at least `per_class`
/// members, cycling through [`ALPHA_GRID`].
pub fn expand_within(
    set: &PerturbationSet,
    per_class: usize,
    seed: u64,
) -> Result<PerturbationSet> {
    let groups = set.class_indices();
    let mut deltas = set.deltas().clone();
    let mut labels = set.labels().to_vec();
    let mut draw = 0u64;
    for (k, members) in groups.iter().enumerate() {
        for t in members.len()..per_class {
            let alpha = ALPHA_GRID[t % ALPHA_GRID.len()];
            let row = interpolate_within(
                set,
                k,
                alpha,
                seed.wrapping_mul(0x9e37_79b9).wrapping_add(draw),
            )?;
            draw += 1;
            deltas.push_row(row.view()).expect("row length matches");
            labels.push(k);
        }
    }
    PerturbationSet::new(
        deltas,
        labels,
        set.num_classes(),
        set.epsilon(),
        set.source_name().to_string(),
    )
}

/// Classwise synthetic noise: one random patch per class with entries
/// uniform in `[-ε, ε]`, tiled over the image (tiles are cropped at the
/// border when the patch does not divide the side). Every sample of class
/// `k` receives exactly the class-`k` pattern.
pub fn synth_sn(
    labels: &[usize],
    num_classes: usize,
    geometry: Geometry,
    epsilon: f64,
    patch_size: usize,
    seed: u64,
) -> Result<PerturbationSet> {
    if patch_size == 0 {
        return Err(Error::BadConfig("patch size must be positive".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::BadConfig(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    let eps = q32_floor(epsilon);
    let mut rng = SeededRng::new(seed, STREAM_SN);
    let mut patterns = Array2::<f64>::zeros((num_classes, geometry.dim()));
    for k in 0..num_classes {
        let patch: Vec<f64> = (0..geometry.channels * patch_size * patch_size)
            .map(|_| q32(rng.uniform_in(-eps, eps)).clamp(-eps, eps))
            .collect();
        for c in 0..geometry.channels {
            for r in 0..geometry.height {
                for col in 0..geometry.width {
                    let p = (c * patch_size + r % patch_size) * patch_size + col % patch_size;
                    patterns[[k, geometry.index(c, r, col)]] = patch[p];
                }
            }
        }
    }
    let deltas = patterns.select(Axis(0), labels);
    PerturbationSet::new(deltas, labels.to_vec(), num_classes, epsilon, "sn")
}

pub fn encode_perturbations(set: &PerturbationSet) -> Result<Vec<u8>> {
    let narrow = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Format(format!("{what} {v} exceeds u32")))
    };
    let mut w = Writer::default();
    w.bytes(PERTURB_MAGIC)
        .u32(PERTURB_VERSION)
        .u32(narrow(set.len(), "n")?)
        .u32(narrow(set.dim(), "d")?)
        .u32(narrow(set.num_classes, "K")?)
        .f32(set.epsilon as f32);
    for &y in &set.labels {
        w.i32(y as i32);
    }
    for &v in set.deltas.iter() {
        w.f32(v as f32);
    }
    Ok(w.into_inner())
}

pub fn decode_perturbations(bytes: &[u8], name: &str) -> Result<PerturbationSet> {
    let mut r = Reader::new(bytes, "perturbations");
    r.magic(PERTURB_MAGIC)?;
    r.version(PERTURB_VERSION)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    let k = r.u32()? as usize;
    let eps = r.f32()? as f64;
    let body = r.expect_len(n, 4)? + r.expect_len(r.expect_len(n, d)?, 4)?;
    if bytes.len() != HEADER_LEN + body {
        return Err(Error::Format(format!(
            "perturbations: expected {} bytes, found {}",
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
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        values.push(r.f32()? as f64);
    }
    r.finish()?;
    let deltas = Array2::from_shape_vec((n, d), values).expect("length checked");
    PerturbationSet::new(deltas, labels, k, eps, name).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_perturbations(set: &PerturbationSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_perturbations(set)?)
}

pub fn load_perturbations(path: &Path) -> Result<PerturbationSet> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_perturbations(&fs::read(path)?, &name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticConfig};
    use crate::losses::{csd_value, CentroidFloor};
    use ndarray::array;

    fn random_set(seed: u64, per_class: usize, k: usize, d: usize, eps: f64) -> PerturbationSet {
        let mut rng = SeededRng::new(seed, 0);
        let n = per_class * k;
        let deltas = Array2::from_shape_fn((n, d), |_| rng.uniform_in(-eps, eps));
        let labels = (0..n).map(|i| i % k).collect();
        PerturbationSet::new(deltas, labels, k, eps, "test").unwrap()
    }

    #[test]
    fn projection_rules() {
        let inside = array![0.05, -0.02];
        assert_eq!(project_linf(inside.view(), 0.1), inside);
        assert_eq!(
            project_linf(array![0.9, -0.9].view(), 0.1),
            array![0.1, -0.1]
        );
        assert_eq!(
            project_linf(array![0.9, -0.9].view(), 0.0),
            array![0.0, 0.0]
        );
        let once = project_linf(array![0.3, -0.01].view(), 0.1);
        assert_eq!(project_linf(once.view(), 0.1), once);
    }

    #[test]
    fn clamp_valid_rules() {
        let x = Array1::from_elem(3, 0.5);
        let d = array![0.1, -0.1, 0.05];
        assert_eq!(clamp_valid(x.view(), d.view()), d);
        assert_eq!(
            clamp_valid(array![0.0].view(), array![-0.05].view())[0],
            0.0
        );
        assert_eq!(clamp_valid(array![1.0].view(), array![0.03].view())[0], 0.0);
    }

    #[test]
    fn pgd_sign_rule_and_boundary() {
        let zero = Array1::zeros(2);
        let d = array![0.3, -0.02];
        assert_eq!(
            pgd_minimize(d.view(), zero.view(), 0.01, 0.1).unwrap(),
            array![0.1, -0.02]
        );
        let g = array![2.0, -2.0];
        assert_eq!(
            pgd_minimize(zero.view(), g.view(), 0.01, 0.1).unwrap(),
            array![-0.01, 0.01]
        );
        let at_edge = array![0.1];
        assert_eq!(
            pgd_minimize(at_edge.view(), array![-5.0].view(), 0.01, 0.1).unwrap()[0],
            0.1
        );
        assert!(pgd_minimize(zero.view(), array![1.0].view(), 0.01, 0.1).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let deltas = array![[0.2, 0.0]];
        assert!(PerturbationSet::new(deltas, vec![0], 1, 0.1, "x").is_err());
    }

    #[test]
    fn classwise_assignment() {
        let ds = make_synthetic(&SyntheticConfig {
            per_class: 5,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let set = random_set(1, 3, 4, ds.dim(), 0.1);
        let map = assign_classwise(&set, &ds, &[0, 1, 2, 3], 7).unwrap();
        for (i, &j) in map.source.iter().enumerate() {
            assert_eq!(set.labels()[j], ds.labels()[i]);
        }
        assert_eq!(map, assign_classwise(&set, &ds, &[0, 1, 2, 3], 7).unwrap());

        let one = ds.subset(&[0, 1, 2, 3]).unwrap().subset(&[2]);
        assert!(
            one.is_err(),
            "single-class dataset is invalid by construction"
        );

        let small = random_set(1, 2, 2, ds.dim(), 0.1);
        assert!(matches!(
            assign_classwise(&small, &ds, &[0, 1, 2, 3], 7),
            Err(Error::EmptySourceClass(2))
        ));
    }

    #[test]
    fn intra_swap_is_a_classwise_derangement() {
        let set = random_set(2, 5, 3, 4, 0.1);
        let map = swap_intra(&set, 3).unwrap();
        let mut seen = map.source.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..set.len()).collect::<Vec<_>>());
        for (i, &j) in map.source.iter().enumerate() {
            assert_ne!(i, j);
            assert_eq!(set.labels()[i], set.labels()[j]);
        }
        assert_eq!(map, swap_intra(&set, 3).unwrap());

        let pair = random_set(2, 2, 1, 4, 0.1);
        assert_eq!(swap_intra(&pair, 0).unwrap().source, vec![1, 0]);

        let single = random_set(2, 1, 2, 4, 0.1);
        assert!(matches!(
            swap_intra(&single, 0),
            Err(Error::ClassTooSmall { .. })
        ));
    }

    #[test]
    fn inter_swap_moves_whole_classes() {
        let set = random_set(4, 6, 2, 3, 0.1);
        let map = swap_inter(&set, 1).unwrap();
        assert_eq!(swap_inter_classes(&set, &map), vec![1, 0]);

        let set = random_set(4, 6, 5, 3, 0.1);
        let map = swap_inter(&set, 9).unwrap();
        let pi = swap_inter_classes(&set, &map);
        for (i, &j) in map.source.iter().enumerate() {
            assert_ne!(set.labels()[i], set.labels()[j]);
            assert_eq!(set.labels()[j], pi[set.labels()[i]]);
        }
        let mut seen = map.source.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..set.len()).collect::<Vec<_>>());
    }

    #[test]
    fn interpolation_endpoints_and_budget() {
        let set = random_set(5, 4, 2, 6, 0.1);
        let a = interpolate_within(&set, 1, 1.0, 11).unwrap();
        let b = interpolate_within(&set, 1, 0.0, 11).unwrap();
        let members = &set.class_indices()[1];
        assert!(members.iter().any(|&i| set.delta(i) == a));
        assert!(members.iter().any(|&i| set.delta(i) == b));
        assert_ne!(a, b);
        for alpha in [0.1, 0.5, 0.9] {
            let m = interpolate_within(&set, 0, alpha, 3).unwrap();
            assert!(m.iter().all(|v| v.abs() <= set.epsilon()));
        }
    }

    #[test]
    fn across_midpoint_of_opposite_corners() {
        let eps = q32_floor(0.1);
        let deltas = array![[eps, eps], [-eps, -eps]];
        let set = PerturbationSet::new(deltas, vec![0, 1], 2, 0.1, "t").unwrap();
        let out = interpolate_across(&set, (0, 1), 0.5, 1, 0).unwrap();
        assert_eq!(out.num_classes(), 3);
        assert_eq!(out.delta(2), array![0.0, 0.0]);
    }

    #[test]
    fn expansion_bookkeeping() {
        let set = random_set(6, 5, 4, 8, 0.1);
        let wide = expand_classes(&set, 8, 1).unwrap();
        assert_eq!(wide.num_classes(), 8);
        assert!(wide.max_abs() <= wide.epsilon());
        assert!(csd_value(
            wide.deltas().view(),
            wide.labels(),
            8,
            CentroidFloor::default()
        )
        .unwrap()
        .is_finite());
        let deep = expand_within(&set, 10, 1).unwrap();
        assert_eq!(deep.len(), 40);
        assert!(deep.class_indices().iter().all(|m| m.len() == 10));
        assert!(deep.max_abs() <= deep.epsilon());
    }

    #[test]
    fn sn_is_classwise_constant() {
        let geom = Geometry::new(8, 8, 1);
        let labels: Vec<usize> = (0..20).map(|i| i % 4).collect();
        let sn = synth_sn(&labels, 4, geom, 0.1, 3, 5).unwrap();
        assert!(sn.max_abs() <= sn.epsilon());
        let (r, _) =
            crate::losses::csd(sn.deltas().view(), &labels, 4, CentroidFloor::default()).unwrap();
        assert_eq!(r.csd, 0.0);
        for a in 0..4 {
            for b in a + 1..4 {
                assert!(r.inter[[a, b]] > 0.0);
            }
        }
        assert_eq!(sn, synth_sn(&labels, 4, geom, 0.1, 3, 5).unwrap());
    }

    #[test]
    fn perturbation_file_round_trip_and_corruption() {
        let set = random_set(7, 3, 3, 5, 8.0 / 255.0);
        let bytes = encode_perturbations(&set).unwrap();
        assert_eq!(decode_perturbations(&bytes, "x").unwrap(), set);
        assert!(matches!(
            decode_perturbations(&bytes[..10], "x"),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[3] = b'Q';
        assert!(matches!(
            decode_perturbations(&bad, "x"),
            Err(Error::Format(_))
        ));
        let mut long = bytes;
        long.push(0);
        assert!(matches!(
            decode_perturbations(&long, "x"),
            Err(Error::Format(_))
        ));
    }
}
