//! Bi-level perturbation generators.
//!
//! All three learned methods alternate between a model step and a
//! perturbation step, starting from `δ = 0`:
//!
//! * **EMN**: classifier trained with cross-entropy on `x + δ`, then PGD on
//!   every `δ_i` to *minimize* the same cross-entropy.
//! * **UCL**: encoder trained with NT-Xent on augmented views of `x + δ`,
//!   then PGD on every `δ_i` to minimize NT-Xent. Labels are never read.
//! * **TUE**: as UCL, with `λ · CSD(δ, y)` added to the perturbation step.
//!
//! Within a PGD step, disjoint batches are processed independently (and in
//! parallel with the `parallel` feature); each batch draws its augmentations
//! from its own `(seed, round, step, batch)` stream so the result does not
//! depend on scheduling.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{AugmentationPair, Dataset, Geometry, ViewTransform};
use crate::error::{Error, Result};
use crate::exec;
use crate::losses::{csd, csd_value, nt_xent, CentroidFloor, DEFAULT_CENTROID_FLOOR};
use crate::models::{
    classifier_backward, encoder_forward, sgd_step, ClassifierModel, EncoderModel, LayerStack,
    Momentum,
};
use crate::numkernel::SeededRng;
use crate::perturb::{pgd_minimize_inplace, synth_sn, PerturbationSet};

/// Default L∞ budget, 8/255.
pub const DEFAULT_EPSILON: f64 = 8.0 / 255.0;

const STREAM_MODEL_BATCHES: u64 = 0x6e_0001;
const STREAM_PGD_BATCHES: u64 = 0x6e_0002;
const STREAM_MODEL_VIEWS: u64 = 0x6e_0003;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Emn,
    Ucl,
    Tue,
    Sn,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Emn, Method::Ucl, Method::Tue, Method::Sn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Emn => "emn",
            Method::Ucl => "ucl",
            Method::Tue => "tue",
            Method::Sn => "sn",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Layer widths shared by generation and evaluation models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelDims {
    pub hidden: usize,
    pub feature: usize,
    pub projection: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            hidden: 128,
            feature: 128,
            projection: 32,
        }
    }
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.feature == 0 || self.projection == 0 {
            return Err(Error::BadConfig("model widths must be positive".into()));
        }
        Ok(())
    }
}

/// Hyperparameters of one generation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub method: Method,
    /// Number of model/perturbation alternations.
    pub epochs: usize,
    /// Model training per alternation, in (possibly fractional) epochs,
    /// rounded to whole batches.
    pub model_epochs_per_round: f64,
    pub pgd_steps: usize,
    /// Signed step size; `None` means `ε / 10`.
    pub pgd_step_size: Option<f64>,
    pub epsilon: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub model: ModelDims,
    pub augmentation: AugmentationPair,
    /// Coincident-centroid handling for the CSD term. Generation starts at
    /// `δ = 0`, where every centroid coincides, so the default clamps.
    pub csd_floor: CentroidFloor,
    /// Patch side for synthetic noise.
    pub sn_patch: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            method: Method::Tue,
            epochs: 10,
            model_epochs_per_round: 0.2,
            pgd_steps: 20,
            pgd_step_size: None,
            epsilon: DEFAULT_EPSILON,
            lambda: 1.0,
            temperature: 0.5,
            batch_size: 128,
            learning_rate: 0.1,
            momentum: 0.9,
            model: ModelDims::default(),
            augmentation: AugmentationPair::default(),
            csd_floor: CentroidFloor::Clamp(DEFAULT_CENTROID_FLOOR),
            sn_patch: 2,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn step_size(&self) -> f64 {
        self.pgd_step_size.unwrap_or(self.epsilon / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!(
                "epsilon must be finite and >= 0, got {}",
                self.epsilon
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            ));
        }
        if self.method == Method::Sn {
            if self.sn_patch == 0 {
                return bad("sn_patch must be positive".into());
            }
            return Ok(());
        }
        if !(self.model_epochs_per_round >= 0.0 && self.model_epochs_per_round.is_finite()) {
            return bad("model_epochs_per_round must be finite and >= 0".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)".into());
        }
        if !(self.temperature > 0.0) {
            return Err(Error::BadTemperature(self.temperature));
        }
        if self.pgd_step_size.is_some_and(|s| !(s > 0.0)) {
            return bad("pgd_step_size must be positive".into());
        }
        self.model.validate()?;
        self.augmentation.validate()
    }
}

/// One alternation of a generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRound {
    pub round: usize,
    /// Mean training loss of the model step.
    pub model_loss: f64,
    /// Mean objective over the last PGD step.
    pub perturbation_loss: f64,
    /// CSD of the perturbations after the round; `None` while centroids
    /// still coincide.
    pub csd: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenTrace {
    pub rounds: Vec<GenRound>,
}

impl GenTrace {
    pub fn csd_series(&self) -> Vec<Option<f64>> {
        self.rounds.iter().map(|r| r.csd).collect()
    }
}

/// Minibatch order that reshuffles at every epoch boundary and can be
/// consumed in fractional epochs.
struct BatchCursor {
    n: usize,
    batch: usize,
    order: Vec<usize>,
    pos: usize,
    rng: SeededRng,
}

impl BatchCursor {
    fn new(n: usize, batch: usize, rng: SeededRng) -> Self {
        Self {
            n,
            batch: batch.min(n).max(1),
            order: Vec::new(),
            pos: n,
            rng,
        }
    }

    fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch)
    }

    /// Whole batches for `epochs`; any positive amount trains at least one.
    fn steps_for(&self, epochs: f64) -> usize {
        let steps = (epochs * self.batches_per_epoch() as f64).round() as usize;
        if epochs > 0.0 {
            steps.max(1)
        } else {
            0
        }
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.n {
            self.order = self.rng.permutation(self.n);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.n);
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}

fn stream_id(base: u64, round: usize, step: usize, batch: usize) -> u64 {
    base ^ ((round as u64) << 40) ^ ((step as u64) << 20) ^ batch as u64
}

fn perturbed_rows(ds: &Dataset, deltas: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut x = ds.images().select(Axis(0), idx);
    x += &deltas.select(Axis(0), idx);
    x
}

fn trace_csd(deltas: &Array2<f64>, ds: &Dataset) -> Option<f64> {
    csd_value(
        deltas.view(),
        ds.labels(),
        ds.num_classes(),
        CentroidFloor::default(),
    )
    .ok()
}

fn finish(ds: &Dataset, deltas: Array2<f64>, cfg: &GenConfig) -> Result<PerturbationSet> {
    PerturbationSet::new(
        deltas,
        ds.labels().to_vec(),
        ds.num_classes(),
        cfg.epsilon,
        format!("{}:{}", cfg.method, ds.name()),
    )
}

/// Error-minimizing noise against a supervised classifier.
pub fn gen_emn(ds: &Dataset, cfg: &GenConfig) -> Result<(PerturbationSet, GenTrace)> {
    if cfg.method != Method::Emn {
        return Err(Error::BadConfig(format!(
            "gen_emn called with method {}",
            cfg.method
        )));
    }
    cfg.validate()?;
    let (n, d) = (ds.len(), ds.dim());
    let mut deltas = Array2::<f64>::zeros((n, d));
    let mut model = ClassifierModel::new(d, cfg.model.hidden, ds.num_classes(), cfg.seed);
    let mut state = Momentum::for_model(&model);
    let mut cursor = BatchCursor::new(
        n,
        cfg.batch_size,
        SeededRng::new(cfg.seed, STREAM_MODEL_BATCHES),
    );
    // A zero budget pins δ at zero whatever the step; keep the step valid.
    let step = cfg.step_size().max(f64::MIN_POSITIVE);
    let chunks = exec::chunks(n, cfg.batch_size);
    let mut trace = GenTrace::default();

    for round in 0..cfg.epochs {
        let steps = cursor.steps_for(cfg.model_epochs_per_round);
        let mut model_loss = 0.0;
        for _ in 0..steps {
            let idx = cursor.next_batch();
            let x = perturbed_rows(ds, &deltas, &idx);
            let labels: Vec<usize> = idx.iter().map(|&i| ds.labels()[i]).collect();
            let g = classifier_backward(&model, x.view(), &labels)?;
            model_loss += g.loss;
            sgd_step(
                model.layers_mut(),
                &g.params,
                cfg.learning_rate,
                &mut state,
                cfg.momentum,
            )?;
        }
        if steps > 0 {
            model_loss /= steps as f64;
        }

        let mut pert_loss = 0.0;
        for _ in 0..cfg.pgd_steps {
            let model_ref = &model;
            let deltas_ref = &deltas;
            let updates = exec::map_indexed(chunks.len(), |c| -> Result<(f64, Array2<f64>)> {
                let (lo, hi) = chunks[c];
                let idx: Vec<usize> = (lo..hi).collect();
                let x = perturbed_rows(ds, deltas_ref, &idx);
                let g = classifier_backward(model_ref, x.view(), &ds.labels()[lo..hi])?;
                let mut block = deltas_ref.slice(s![lo..hi, ..]).to_owned();
                for (row, grad) in block.rows_mut().into_iter().zip(g.input.rows()) {
                    pgd_minimize_inplace(row, grad, step, cfg.epsilon)?;
                }
                Ok((g.loss * (hi - lo) as f64, block))
            });
            pert_loss = 0.0;
            for (c, u) in updates.into_iter().enumerate() {
                let (loss, block) = u?;
                pert_loss += loss;
                let (lo, hi) = chunks[c];
                deltas.slice_mut(s![lo..hi, ..]).assign(&block);
            }
            pert_loss /= n as f64;
        }

        trace.rounds.push(GenRound {
            round,
            model_loss,
            perturbation_loss: pert_loss,
            csd: trace_csd(&deltas, ds),
        });
    }
    Ok((finish(ds, deltas, cfg)?, trace))
}

/// Views `2i`, `2i+1` of each row, interleaved, plus the transforms used.
fn contrastive_views(
    x: ArrayView2<f64>,
    geom: Geometry,
    aug: &AugmentationPair,
    rng: &mut SeededRng,
) -> (Array2<f64>, Vec<ViewTransform>) {
    let (b, d) = x.dim();
    let mut views = Array2::zeros((2 * b, d));
    let mut transforms = Vec::with_capacity(2 * b);
    for (i, row) in x.rows().into_iter().enumerate() {
        for v in 0..2 {
            let t = aug.sample(geom, rng);
            t.apply(row, views.row_mut(2 * i + v));
            transforms.push(t);
        }
    }
    (views, transforms)
}

/// One NT-Xent minibatch step on the encoder; returns the loss.
#[allow(clippy::too_many_arguments)]
pub(crate) fn contrastive_model_step(
    encoder: &mut EncoderModel,
    state: &mut Momentum,
    x: ArrayView2<f64>,
    geom: Geometry,
    aug: &AugmentationPair,
    temperature: f64,
    lr: f64,
    momentum: f64,
    rng: &mut SeededRng,
) -> Result<f64> {
    let (views, _) = contrastive_views(x, geom, aug, rng);
    let pass = encoder_forward(encoder, views.view())?;
    let (loss, dproj) = nt_xent(pass.projections.view(), temperature)?;
    let grads = pass.backward(encoder, dproj.view())?;
    sgd_step(encoder.layers_mut(), &grads.params, lr, state, momentum)?;
    Ok(loss)
}

/// NT-Xent of one batch and its gradient with respect to the batch inputs.
fn contrastive_input_grads(
    encoder: &EncoderModel,
    x: ArrayView2<f64>,
    geom: Geometry,
    aug: &AugmentationPair,
    temperature: f64,
    rng: &mut SeededRng,
) -> Result<(f64, Array2<f64>)> {
    let (views, transforms) = contrastive_views(x, geom, aug, rng);
    let pass = encoder_forward(encoder, views.view())?;
    let (loss, dproj) = nt_xent(pass.projections.view(), temperature)?;
    let grads = pass.backward(encoder, dproj.view())?;
    let mut dx = Array2::zeros(x.dim());
    for (j, t) in transforms.iter().enumerate() {
        let i = j / 2;
        t.backprop(x.row(i), grads.input.row(j), dx.row_mut(i));
    }
    Ok((loss, dx))
}

fn contrastive_generate(
    ds: &Dataset,
    cfg: &GenConfig,
    lambda: f64,
) -> Result<(PerturbationSet, GenTrace)> {
    cfg.validate()?;
    let (n, d) = (ds.len(), ds.dim());
    let geom = ds.geometry();
    let dims = cfg.model;
    let mut deltas = Array2::<f64>::zeros((n, d));
    let mut encoder = EncoderModel::new(d, dims.hidden, dims.feature, dims.projection, cfg.seed);
    let mut state = Momentum::for_model(&encoder);
    let mut cursor = BatchCursor::new(
        n,
        cfg.batch_size,
        SeededRng::new(cfg.seed, STREAM_MODEL_BATCHES),
    );
    let mut view_rng = SeededRng::new(cfg.seed, STREAM_MODEL_VIEWS);
    // NT-Xent needs at least one positive pair per batch; a trailing
    // singleton batch is merged into its predecessor.
    let batch = cfg.batch_size.min(n).max(1);
    // A zero budget pins δ at zero whatever the step; keep the step valid.
    let step = cfg.step_size().max(f64::MIN_POSITIVE);
    let mut trace = GenTrace::default();

    for round in 0..cfg.epochs {
        // S1: encoder parameters on the current perturbed data.
        let steps = cursor.steps_for(cfg.model_epochs_per_round);
        let mut model_loss = 0.0;
        let mut counted = 0;
        for _ in 0..steps {
            let idx = cursor.next_batch();
            if idx.len() < 2 {
                continue;
            }
            let x = perturbed_rows(ds, &deltas, &idx);
            model_loss += contrastive_model_step(
                &mut encoder,
                &mut state,
                x.view(),
                geom,
                &cfg.augmentation,
                cfg.temperature,
                cfg.learning_rate,
                cfg.momentum,
                &mut view_rng,
            )?;
            counted += 1;
        }
        if counted > 0 {
            model_loss /= counted as f64;
        }

        // S2: perturbations on contrastive loss (+ λ CSD).
        let mut pert_loss = 0.0;
        for pgd in 0..cfg.pgd_steps {
            let order = SeededRng::new(cfg.seed, stream_id(STREAM_PGD_BATCHES, round, pgd, 0))
                .permutation(n);
            let mut batches: Vec<&[usize]> = order.chunks(batch).collect();
            if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
                let merged = &order[(batches.len() - 2) * batch..];
                batches.pop();
                *batches.last_mut().expect("len > 1") = merged;
            }

            let (csd_val, csd_grad) = if lambda > 0.0 {
                let (report, g) = csd(deltas.view(), ds.labels(), ds.num_classes(), cfg.csd_floor)?;
                (report.csd, Some(g))
            } else {
                (0.0, None)
            };

            let enc = &encoder;
            let deltas_ref = &deltas;
            let results = exec::map_indexed(batches.len(), |b| -> Result<(f64, Array2<f64>)> {
                let idx = batches[b];
                if idx.len() < 2 {
                    return Ok((0.0, Array2::zeros((idx.len(), d))));
                }
                let mut rng =
                    SeededRng::new(cfg.seed, stream_id(STREAM_MODEL_VIEWS, round, pgd, b + 1));
                let x = perturbed_rows(ds, deltas_ref, idx);
                let (loss, dx) = contrastive_input_grads(
                    enc,
                    x.view(),
                    geom,
                    &cfg.augmentation,
                    cfg.temperature,
                    &mut rng,
                )?;
                Ok((loss * idx.len() as f64, dx))
            });

            pert_loss = 0.0;
            for (b, r) in results.into_iter().enumerate() {
                let (loss, mut dx) = r?;
                pert_loss += loss;
                let idx = batches[b];
                if let Some(g) = &csd_grad {
                    for (mut row, &i) in dx.rows_mut().into_iter().zip(idx) {
                        row.scaled_add(lambda, &g.row(i));
                    }
                }
                for (grad, &i) in dx.rows().into_iter().zip(idx) {
                    pgd_minimize_inplace(deltas.row_mut(i), grad, step, cfg.epsilon)?;
                }
            }
            pert_loss = pert_loss / n as f64 + lambda * csd_val;
        }

        trace.rounds.push(GenRound {
            round,
            model_loss,
            perturbation_loss: pert_loss,
            csd: trace_csd(&deltas, ds),
        });
    }
    Ok((finish(ds, deltas, cfg)?, trace))
}

/// Unlearnable contrastive noise: the perturbation step sees NT-Xent only.
pub fn gen_ucl(ds: &Dataset, cfg: &GenConfig) -> Result<(PerturbationSet, GenTrace)> {
    if cfg.method != Method::Ucl {
        return Err(Error::BadConfig(format!(
            "gen_ucl called with method {}",
            cfg.method
        )));
    }
    contrastive_generate(ds, cfg, 0.0)
}

/// Transferable unlearnable examples: NT-Xent plus `λ · CSD` in the
/// perturbation step.
pub fn gen_tue(ds: &Dataset, cfg: &GenConfig) -> Result<(PerturbationSet, GenTrace)> {
    if cfg.method != Method::Tue {
        return Err(Error::BadConfig(format!(
            "gen_tue called with method {}",
            cfg.method
        )));
    }
    contrastive_generate(ds, cfg, cfg.lambda)
}

/// Dispatches on `cfg.method`.
pub fn generate(ds: &Dataset, cfg: &GenConfig) -> Result<(PerturbationSet, GenTrace)> {
    match cfg.method {
        Method::Emn => gen_emn(ds, cfg),
        Method::Ucl => gen_ucl(ds, cfg),
        Method::Tue => gen_tue(ds, cfg),
        Method::Sn => {
            cfg.validate()?;
            let set = synth_sn(
                ds.labels(),
                ds.num_classes(),
                ds.geometry(),
                cfg.epsilon,
                cfg.sn_patch,
                cfg.seed,
            )?;
            Ok((
                set.with_source_name(format!("sn:{}", ds.name())),
                GenTrace::default(),
            ))
        }
    }
}

/// Parses a method name and dispatches.
pub fn generate_named(
    ds: &Dataset,
    method: &str,
    cfg: &GenConfig,
) -> Result<(PerturbationSet, GenTrace)> {
    let method: Method = method.parse()?;
    generate(
        ds,
        &GenConfig {
            method,
            ..cfg.clone()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, SyntheticConfig};

    fn tiny() -> Dataset {
        make_synthetic(&SyntheticConfig {
            per_class: 12,
            seed: 4,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn fractional_rounds_still_train_the_surrogate() {
        let cursor = BatchCursor::new(200, 128, SeededRng::new(0, 0));
        assert_eq!(cursor.steps_for(0.2), 1);
        assert_eq!(cursor.steps_for(0.0), 0);
        assert_eq!(cursor.steps_for(3.0), 6);
        let (_, trace) = generate(
            &tiny(),
            &GenConfig {
                model_epochs_per_round: 0.01,
                ..quick(Method::Emn)
            },
        )
        .unwrap();
        assert!(trace.rounds.iter().all(|r| r.model_loss > 0.0));
    }

    fn quick(method: Method) -> GenConfig {
        GenConfig {
            method,
            epochs: 2,
            pgd_steps: 3,
            batch_size: 16,
            epsilon: 0.1,
            model: ModelDims {
                hidden: 16,
                feature: 8,
                projection: 4,
            },
            seed: 1,
            ..Default::default()
        }
    }

    #[test]
    fn method_parsing() {
        assert_eq!("tue".parse::<Method>().unwrap(), Method::Tue);
        assert!(matches!(
            "pgd".parse::<Method>(),
            Err(Error::UnknownMethod(_))
        ));
        let ds = tiny();
        assert!(matches!(
            generate_named(&ds, "bogus", &quick(Method::Sn)),
            Err(Error::UnknownMethod(_))
        ));
    }

    #[test]
    fn zero_budget_gives_zero_perturbations() {
        let ds = tiny();
        for m in [Method::Emn, Method::Ucl, Method::Tue] {
            let cfg = GenConfig {
                epsilon: 0.0,
                pgd_step_size: Some(0.01),
                ..quick(m)
            };
            let (set, _) = generate(&ds, &cfg).unwrap();
            assert!(set.deltas().iter().all(|&v| v == 0.0), "{m}");
        }
    }

    #[test]
    fn zero_rounds_keep_initialization() {
        let ds = tiny();
        for m in [Method::Emn, Method::Ucl, Method::Tue] {
            let (set, trace) = generate(
                &ds,
                &GenConfig {
                    epochs: 0,
                    ..quick(m)
                },
            )
            .unwrap();
            assert!(set.deltas().iter().all(|&v| v == 0.0));
            assert!(trace.rounds.is_empty());
        }
    }

    #[test]
    fn budget_and_trace_shape() {
        let ds = tiny();
        for m in Method::ALL {
            let cfg = quick(m);
            let (set, trace) = generate(&ds, &cfg).unwrap();
            assert!(set.max_abs() <= set.epsilon());
            if m != Method::Sn {
                assert_eq!(trace.rounds.len(), cfg.epochs);
                assert!(set.max_abs() > 0.0);
            }
        }
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let ds = tiny();
        let cfg = quick(Method::Sn);
        let (via, _) = generate(&ds, &cfg).unwrap();
        let direct = synth_sn(
            ds.labels(),
            4,
            ds.geometry(),
            cfg.epsilon,
            cfg.sn_patch,
            cfg.seed,
        )
        .unwrap();
        assert_eq!(via, direct);
        let cfg = quick(Method::Emn);
        assert_eq!(
            generate(&ds, &cfg).unwrap().0,
            gen_emn(&ds, &cfg).unwrap().0
        );
    }

    #[test]
    fn tue_without_csd_term_equals_ucl() {
        let ds = tiny();
        let ucl = gen_ucl(&ds, &quick(Method::Ucl)).unwrap().0;
        let tue = gen_tue(
            &ds,
            &GenConfig {
                lambda: 0.0,
                ..quick(Method::Tue)
            },
        )
        .unwrap()
        .0;
        assert_eq!(ucl.deltas(), tue.deltas());
    }

    #[test]
    fn ucl_ignores_labels() {
        let ds = tiny();
        let mut labels = ds.labels().to_vec();
        labels.rotate_left(5);
        let shuffled = ds.relabeled(labels).unwrap();
        let a = gen_ucl(&ds, &quick(Method::Ucl)).unwrap().0;
        let b = gen_ucl(&shuffled, &quick(Method::Ucl)).unwrap().0;
        assert_eq!(a.deltas(), b.deltas());
    }

    #[test]
    fn strict_floor_surfaces_collapse() {
        let ds = tiny();
        let cfg = GenConfig {
            csd_floor: CentroidFloor::Strict(DEFAULT_CENTROID_FLOOR),
            ..quick(Method::Tue)
        };
        assert!(matches!(
            gen_tue(&ds, &cfg),
            Err(Error::CollapsedCentroids { .. })
        ));
    }

    #[test]
    fn wrong_method_rejected() {
        let ds = tiny();
        assert!(gen_emn(&ds, &quick(Method::Tue)).is_err());
        assert!(gen_ucl(&ds, &quick(Method::Tue)).is_err());
        assert!(gen_tue(&ds, &quick(Method::Ucl)).is_err());
    }
}
