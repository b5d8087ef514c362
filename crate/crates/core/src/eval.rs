//! Evaluation harness: supervised training, contrastive pre-training with a
//! linear probe, the separability probe on perturbations, and the swap and
//! transfer experiments.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::binio::write_atomic;
use crate::data::{AugmentationPair, Dataset};
use crate::error::{shape_mismatch, Error, Result};
use crate::exec;
use crate::generators::{contrastive_model_step, ModelDims};
use crate::losses::{csd_value, CentroidFloor};
use crate::models::{
    classifier_backward, classifier_forward, sgd_step, ClassifierModel, EncoderModel, LayerStack,
    Momentum, ProbeHead,
};
use crate::numkernel::{argmax_rows, SeededRng};
use crate::perturb::{
    assign_classwise, clamp_valid, expand_classes, expand_within, swap_inter, swap_intra,
    AssignmentMap, PerturbationSet,
};

const STREAM_SUPERVISED: u64 = 0xe7a1_0001;
const STREAM_PRETRAIN: u64 = 0xe7a1_0002;
const STREAM_PRETRAIN_VIEWS: u64 = 0xe7a1_0003;
const STREAM_PROBE: u64 = 0xe7a1_0004;
const STREAM_SPLIT: u64 = 0xe7a1_0005;
const STREAM_SWAP: u64 = 0xe7a1_0006;
const STREAM_TRANSFER: u64 = 0xe7a1_0007;
const STREAM_PROBE_VIEWS: u64 = 0xe7a1_0008;

/// Rows evaluated per task when scoring a model.
const SCORE_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Supervised,
    Unsupervised,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Supervised => "supervised",
            Mode::Unsupervised => "unsupervised",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Mode::Supervised),
            "unsupervised" => Ok(Mode::Unsupervised),
            other => Err(Error::BadConfig(format!(
                "unknown evaluation mode {other:?}"
            ))),
        }
    }
}

/// Hyperparameters for the victim's training runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub pretrain_epochs: usize,
    pub pretrain_batch_size: usize,
    pub pretrain_learning_rate: f64,
    /// Decoupled L2 shrinkage of encoder weights per pre-training step.
    pub pretrain_weight_decay: f64,
    pub temperature: f64,
    pub augmentation: AugmentationPair,
    pub probe_epochs: usize,
    pub probe_learning_rate: f64,
    /// Z-score features with training-set statistics before the probe.
    pub probe_standardize: bool,
    /// Views the probe is trained on; identity trains on the images as is.
    pub probe_augmentation: AugmentationPair,
    pub model: ModelDims,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.05,
            momentum: 0.9,
            pretrain_epochs: 200,
            pretrain_batch_size: 128,
            pretrain_learning_rate: 0.1,
            pretrain_weight_decay: 0.0,
            temperature: 0.5,
            augmentation: AugmentationPair::default(),
            probe_epochs: 100,
            probe_learning_rate: 0.1,
            probe_standardize: true,
            probe_augmentation: AugmentationPair::identity(),
            model: ModelDims::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.into()));
        if self.batch_size == 0 || self.pretrain_batch_size < 2 {
            return bad("batch sizes must be positive (contrastive batches at least 2)");
        }
        if !(self.learning_rate > 0.0
            && self.pretrain_learning_rate > 0.0
            && self.probe_learning_rate > 0.0)
        {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.temperature > 0.0) {
            return Err(Error::BadTemperature(self.temperature));
        }
        self.model.validate()?;
        self.probe_augmentation.validate()?;
        self.augmentation.validate()
    }
}

/// Clean-test accuracy of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mode: Mode,
    pub train_set: String,
    pub accuracy: f64,
    pub final_train_loss: f64,
    pub epochs: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityResult {
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    /// `None` when two class centroids coincide.
    pub csd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapReport {
    pub original: EvalResult,
    pub intra: EvalResult,
    pub inter: EvalResult,
}

impl SwapReport {
    /// Largest pairwise accuracy difference among the three runs.
    pub fn max_gap(&self) -> f64 {
        let a = [
            self.original.accuracy,
            self.intra.accuracy,
            self.inter.accuracy,
        ];
        let hi = a.iter().cloned().fold(f64::MIN, f64::max);
        let lo = a.iter().cloned().fold(f64::MAX, f64::min);
        hi - lo
    }
}

/// How a source perturbation set is mapped onto a target dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferPlan {
    /// Source class used for each target class; identity when absent.
    pub class_map: Option<Vec<usize>>,
    /// Synthesize missing classes and members by interpolation.
    pub interpolate: bool,
}

/// `x_i + δ_{map(i)}`, with each δ clamped so the pixel stays in `[0, 1]`.
pub fn apply_perturbations(
    ds: &Dataset,
    set: &PerturbationSet,
    map: Option<&AssignmentMap>,
) -> Result<Dataset> {
    if set.dim() != ds.dim() {
        return Err(shape_mismatch(
            format!("perturbations of dim {}", ds.dim()),
            format!("{}", set.dim()),
        ));
    }
    let deltas = match map {
        Some(m) => {
            if m.len() != ds.len() {
                return Err(Error::BadAssignment(format!(
                    "map covers {} samples, dataset has {}",
                    m.len(),
                    ds.len()
                )));
            }
            set.gather(m)?
        }
        None => {
            if set.len() != ds.len() {
                return Err(Error::BadAssignment(format!(
                    "identity map needs equal sizes, got {} perturbations for {} samples",
                    set.len(),
                    ds.len()
                )));
            }
            set.deltas().clone()
        }
    };
    let mut images = ds.images().clone();
    for ((mut x, d), x0) in images
        .rows_mut()
        .into_iter()
        .zip(deltas.rows())
        .zip(ds.images().rows())
    {
        x += &clamp_valid(x0, d);
    }
    Dataset::new(
        images,
        ds.labels().to_vec(),
        ds.num_classes(),
        ds.geometry(),
        format!("{}+{}", ds.name(), set.source_name()),
    )
}

fn fraction_correct(pred: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64
}

/// Applies `score` to row chunks in parallel and returns the argmax labels.
fn predict<F>(x: ArrayView2<f64>, score: F) -> Result<Vec<usize>>
where
    F: Fn(ArrayView2<f64>) -> Result<Array2<f64>> + Sync + Send,
{
    let ranges = exec::chunks(x.nrows(), SCORE_CHUNK);
    let parts = exec::map_indexed(ranges.len(), |c| {
        let (lo, hi) = ranges[c];
        score(x.slice(ndarray::s![lo..hi, ..])).map(|s| argmax_rows(s.view()))
    });
    let mut out = Vec::with_capacity(x.nrows());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn classifier_accuracy(model: &ClassifierModel, ds: &Dataset) -> Result<f64> {
    let pred = predict(ds.images().view(), |b| classifier_forward(model, b))?;
    Ok(fraction_correct(&pred, ds.labels()))
}

/// Minibatch SGD with momentum on cross-entropy; accuracy measured on `test`.
pub fn train_supervised(
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ClassifierModel, EvalResult)> {
    cfg.validate()?;
    if test.dim() != train.dim() || test.num_classes() != train.num_classes() {
        return Err(shape_mismatch(
            format!(
                "test set of dim {} with {} classes",
                train.dim(),
                train.num_classes()
            ),
            format!("dim {} with {} classes", test.dim(), test.num_classes()),
        ));
    }
    let mut model =
        ClassifierModel::new(train.dim(), cfg.model.hidden, train.num_classes(), cfg.seed);
    let mut state = Momentum::for_model(&model);
    let mut rng = SeededRng::new(cfg.seed, STREAM_SUPERVISED);
    let mut last_loss = f64::NAN;
    for _ in 0..cfg.epochs {
        let order = rng.permutation(train.len());
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let x = train.images().select(Axis(0), idx);
            let y: Vec<usize> = idx.iter().map(|&i| train.labels()[i]).collect();
            let g = classifier_backward(&model, x.view(), &y)?;
            total += g.loss * idx.len() as f64;
            sgd_step(
                model.layers_mut(),
                &g.params,
                cfg.learning_rate,
                &mut state,
                cfg.momentum,
            )?;
        }
        last_loss = total / train.len().max(1) as f64;
    }
    let accuracy = classifier_accuracy(&model, test)?;
    let result = EvalResult {
        mode: Mode::Supervised,
        train_set: train.name().to_string(),
        accuracy,
        final_train_loss: last_loss,
        epochs: cfg.epochs,
        seed: cfg.seed,
    };
    Ok((model, result))
}

/// NT-Xent pre-training on augmented pairs; labels are never read.
pub fn pretrain_contrastive(ds: &Dataset, cfg: &TrainConfig) -> Result<EncoderModel> {
    cfg.validate()?;
    let m = cfg.model;
    let mut encoder = EncoderModel::new(ds.dim(), m.hidden, m.feature, m.projection, cfg.seed);
    let mut state = Momentum::for_model(&encoder);
    let mut order_rng = SeededRng::new(cfg.seed, STREAM_PRETRAIN);
    let mut view_rng = SeededRng::new(cfg.seed, STREAM_PRETRAIN_VIEWS);
    for _ in 0..cfg.pretrain_epochs {
        let order = order_rng.permutation(ds.len());
        for idx in order.chunks(cfg.pretrain_batch_size) {
            if idx.len() < 2 {
                continue;
            }
            let x = ds.images().select(Axis(0), idx);
            contrastive_model_step(
                &mut encoder,
                &mut state,
                x.view(),
                ds.geometry(),
                &cfg.augmentation,
                cfg.temperature,
                cfg.pretrain_learning_rate,
                cfg.momentum,
                &mut view_rng,
            )?;
            if cfg.pretrain_weight_decay > 0.0 {
                let keep = 1.0 - cfg.pretrain_learning_rate * cfg.pretrain_weight_decay;
                for layer in encoder.layers_mut() {
                    layer.weights *= keep;
                }
            }
        }
    }
    Ok(encoder)
}

fn encoder_features(encoder: &EncoderModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let ranges = exec::chunks(x.nrows(), SCORE_CHUNK);
    let parts = exec::map_indexed(ranges.len(), |c| {
        let (lo, hi) = ranges[c];
        encoder.features(x.slice(ndarray::s![lo..hi, ..]))
    });
    let mut out = Array2::zeros((0, encoder.feature_dim()));
    for p in parts {
        out.append(Axis(0), p?.view())
            .expect("feature widths agree");
    }
    Ok(out)
}

/// Optimizer settings for a linear head.
struct LinearFit<'a> {
    labels: &'a [usize],
    num_classes: usize,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    momentum: f64,
    seed: u64,
}

impl LinearFit<'_> {
    /// Minibatch SGD on a linear head; `epoch_inputs(e)` supplies the input
    /// rows for epoch `e`. Returns the head and its last epoch loss.
    fn run<F>(&self, dim: usize, mut epoch_inputs: F) -> Result<(ProbeHead, f64)>
    where
        F: FnMut(usize) -> Result<Array2<f64>>,
    {
        let n = self.labels.len();
        let mut head = ProbeHead::new(dim, self.num_classes, self.seed);
        let mut state = Momentum::for_model(&head);
        let mut rng = SeededRng::new(self.seed, STREAM_PROBE);
        let mut last = f64::NAN;
        for epoch in 0..self.epochs {
            let x = epoch_inputs(epoch)?;
            let order = rng.permutation(n);
            let mut total = 0.0;
            for idx in order.chunks(self.batch_size.max(1)) {
                let xb = x.select(Axis(0), idx);
                let yb: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
                let (loss, grads) = head.backward(xb.view(), &yb)?;
                total += loss * idx.len() as f64;
                sgd_step(
                    head.layers_mut(),
                    &grads,
                    self.lr,
                    &mut state,
                    self.momentum,
                )?;
            }
            last = total / n.max(1) as f64;
        }
        Ok((head, last))
    }
}

/// Per-column mean and standard deviation (1 where a column is constant).
fn column_stats(x: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty features");
    let std = x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    (mean, std)
}

fn normalize_with(mut x: Array2<f64>, stats: Option<&(Array1<f64>, Array1<f64>)>) -> Array2<f64> {
    if let Some((mean, std)) = stats {
        x -= mean;
        x /= std;
    }
    x
}

/// Frozen-encoder linear probe: fit on `train` features, score on `test`.
///
/// With a non-identity `probe_augmentation`, every epoch sees features of a
/// fresh random view of each training image. With `probe_standardize`,
/// features are z-scored with the statistics of the un-augmented training
/// features (a parameter-free batch norm in front of the head).
pub fn linear_probe(
    encoder: &EncoderModel,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
) -> Result<EvalResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::BadConfig(
            "linear probe needs training samples".into(),
        ));
    }
    let ftrain = encoder_features(encoder, train.images().view())?;
    let stats = cfg.probe_standardize.then(|| column_stats(&ftrain));
    let ftest = normalize_with(
        encoder_features(encoder, test.images().view())?,
        stats.as_ref(),
    );
    let fit = LinearFit {
        labels: train.labels(),
        num_classes: train.num_classes(),
        epochs: cfg.probe_epochs,
        batch_size: cfg.batch_size,
        lr: cfg.probe_learning_rate,
        momentum: cfg.momentum,
        seed: cfg.seed,
    };
    let aug = &cfg.probe_augmentation;
    let (head, loss) = if *aug == AugmentationPair::identity() {
        let fixed = normalize_with(ftrain, stats.as_ref());
        fit.run(encoder.feature_dim(), |_| Ok(fixed.clone()))?
    } else {
        let geom = train.geometry();
        fit.run(encoder.feature_dim(), |epoch| {
            let views = exec::map_indexed(train.len(), |i| {
                let mut rng = SeededRng::new(cfg.seed, stream_for(STREAM_PROBE_VIEWS, epoch, i));
                let mut v = Array1::zeros(train.dim());
                aug.sample(geom, &mut rng)
                    .apply(train.image(i), v.view_mut());
                v
            });
            let mut x = Array2::zeros((train.len(), train.dim()));
            for (mut row, v) in x.rows_mut().into_iter().zip(&views) {
                row.assign(v);
            }
            Ok(normalize_with(
                encoder_features(encoder, x.view())?,
                stats.as_ref(),
            ))
        })?
    };
    let pred = predict(ftest.view(), |b| head.forward(b))?;
    Ok(EvalResult {
        mode: Mode::Unsupervised,
        train_set: train.name().to_string(),
        accuracy: fraction_correct(&pred, test.labels()),
        final_train_loss: loss,
        epochs: cfg.pretrain_epochs,
        seed: cfg.seed,
    })
}

fn stream_for(base: u64, epoch: usize, item: usize) -> u64 {
    base ^ ((epoch as u64) << 32) ^ item as u64
}

/// Supervised training or contrastive pre-training plus probe, both scored
/// on the clean `test` set.
pub fn evaluate(
    train: &Dataset,
    test: &Dataset,
    mode: Mode,
    cfg: &TrainConfig,
) -> Result<EvalResult> {
    match mode {
        Mode::Supervised => train_supervised(train, test, cfg).map(|(_, r)| r),
        Mode::Unsupervised => {
            let encoder = pretrain_contrastive(train, cfg)?;
            linear_probe(&encoder, train, test, cfg)
        }
    }
}

/// Stratified split: the first `round(fraction · n_k)` members of a seeded
/// shuffle of each class go to training, at least one on each side.
fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = SeededRng::new(seed, STREAM_SPLIT);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for mut members in crate::data::group_by_class(labels, num_classes) {
        rng.shuffle(&mut members);
        let cut = ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..cut]);
        held.extend_from_slice(&members[cut..]);
    }
    (train, held)
}

/// Multinomial linear classifier on `(δ_i, y_i)`. Perturbations are rescaled
/// by their largest magnitude first, so the result does not depend on ε.
pub fn separability_probe(
    set: &PerturbationSet,
    train_fraction: f64,
    cfg: &TrainConfig,
) -> Result<SeparabilityResult> {
    cfg.validate()?;
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::BadConfig(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    for (k, members) in set.class_indices().iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::ClassTooSmall {
                class: k,
                size: members.len(),
                needed: 2,
            });
        }
    }
    let scale = set.max_abs();
    let x = if scale > 0.0 {
        set.deltas() / scale
    } else {
        set.deltas().clone()
    };
    let (train_idx, held_idx) =
        stratified_split(set.labels(), set.num_classes(), train_fraction, cfg.seed);
    let pick = |idx: &[usize]| -> (Array2<f64>, Vec<usize>) {
        (
            x.select(Axis(0), idx),
            idx.iter().map(|&i| set.labels()[i]).collect(),
        )
    };
    let (xt, yt) = pick(&train_idx);
    let (xh, yh) = pick(&held_idx);
    let fit = LinearFit {
        labels: &yt,
        num_classes: set.num_classes(),
        epochs: cfg.probe_epochs,
        batch_size: cfg.batch_size,
        lr: cfg.probe_learning_rate,
        momentum: cfg.momentum,
        seed: cfg.seed,
    };
    let (head, _) = fit.run(xt.ncols(), |_| Ok(xt.clone()))?;
    let train_accuracy = fraction_correct(&predict(xt.view(), |b| head.forward(b))?, &yt);
    let heldout_accuracy = fraction_correct(&predict(xh.view(), |b| head.forward(b))?, &yh);
    let csd = csd_value(
        set.deltas().view(),
        set.labels(),
        set.num_classes(),
        CentroidFloor::default(),
    )
    .ok();
    Ok(SeparabilityResult {
        train_accuracy,
        heldout_accuracy,
        csd,
    })
}

/// Supervised accuracy under the original, intra-class-swapped and
/// class-swapped correspondences between `ds` and `set`.
pub fn swap_eval(
    ds: &Dataset,
    test: &Dataset,
    set: &PerturbationSet,
    cfg: &TrainConfig,
) -> Result<SwapReport> {
    if set.labels() != ds.labels() {
        return Err(Error::BadAssignment(
            "perturbation labels do not match the dataset".into(),
        ));
    }
    let swap_seed = SeededRng::new(cfg.seed, STREAM_SWAP).next_u64();
    let maps = [
        AssignmentMap::identity(ds.len()),
        swap_intra(set, swap_seed)?,
        swap_inter(set, swap_seed)?,
    ];
    let tags = ["original", "intra", "inter"];
    let mut runs = exec::map_indexed(maps.len(), |j| {
        let poisoned = apply_perturbations(ds, set, Some(&maps[j]))?;
        let name = format!("{}:{}", poisoned.name(), tags[j]);
        let poisoned = poisoned.with_name(name);
        train_supervised(&poisoned, test, cfg).map(|(_, r)| r)
    })
    .into_iter();
    let mut next = || runs.next().expect("three runs");
    Ok(SwapReport {
        original: next()?,
        intra: next()?,
        inter: next()?,
    })
}

/// Maps `source` onto `target` (interpolating if the plan allows), trains a
/// supervised model on the result and scores it on `target_test`.
pub fn transfer_eval(
    source: &PerturbationSet,
    target: &Dataset,
    target_test: &Dataset,
    plan: &TransferPlan,
    cfg: &TrainConfig,
) -> Result<EvalResult> {
    let poisoned = transfer_poison(source, target, plan, cfg.seed)?;
    train_supervised(&poisoned, target_test, cfg).map(|(_, r)| r)
}

/// The perturbed target dataset used by [`transfer_eval`].
pub fn transfer_poison(
    source: &PerturbationSet,
    target: &Dataset,
    plan: &TransferPlan,
    seed: u64,
) -> Result<Dataset> {
    let seed = SeededRng::new(seed, STREAM_TRANSFER).next_u64();
    let kt = target.num_classes();
    let mut pool = source.clone();
    if plan.class_map.is_none() && kt > pool.num_classes() {
        if !plan.interpolate {
            return Err(Error::BadAssignment(format!(
                "target has {kt} classes but the source only {}; enable interpolation or give a class map",
                pool.num_classes()
            )));
        }
        pool = expand_classes(&pool, kt, seed)?;
    }
    if plan.interpolate {
        let need = target.class_counts().into_iter().max().unwrap_or(0);
        if pool.class_indices().iter().any(|m| m.len() < need) {
            pool = expand_within(&pool, need, seed)?;
        }
    }
    let class_map = match &plan.class_map {
        Some(m) => m.clone(),
        None => (0..kt).collect(),
    };
    let map = assign_classwise(&pool, target, &class_map, seed)?;
    apply_perturbations(target, &pool, Some(&map))
}

/// One line of an aggregate experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub method: String,
    pub mode: String,
    pub correspondence: String,
    pub accuracy: f64,
    pub csd: Option<f64>,
    pub seed: u64,
}

pub fn write_report_csv(rows: &[ReportRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// One JSON document per line.
pub fn write_json_lines<T: Serialize>(records: &[T], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::Format(e.to_string()))?;
        buf.write_all(b"\n")?;
    }
    write_atomic(path, &buf)
}
