//! One-hidden-layer tanh networks with hand-derived backward passes.
//!
//! Every model is a stack of [`Dense`] layers, which keeps the optimizer and
//! the `TUEM` checkpoint format independent of the architecture.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::binio::{write_atomic, Reader, Writer};
use crate::error::{shape_mismatch, Error, Result};
use crate::losses::cross_entropy;
use crate::numkernel::{SeededRng, ZERO_NORM};

const MODEL_MAGIC: &[u8; 4] = b"TUEM";
const MODEL_VERSION: u32 = 1;

/// Affine map `y = x W^T + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    /// Uniform init in `±1/sqrt(fan_in)` for weights and biases.
    pub fn init(input: usize, output: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (input.max(1) as f64).sqrt();
        let weights = Array2::from_shape_fn((output, input), |_| rng.uniform_in(-bound, bound));
        let bias = Array1::from_shape_fn(output, |_| rng.uniform_in(-bound, bound));
        Self { weights, bias }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.output_dim())
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + self.bias.view().insert_axis(Axis(0))
    }

    /// Parameter gradients given the layer input and `d(out)`; returns the
    /// gradient with respect to the input as well.
    fn backward(&self, x: ArrayView2<f64>, dout: ArrayView2<f64>) -> (Dense, Array2<f64>) {
        let grad = Dense {
            weights: dout.t().dot(&x),
            bias: dout.sum_axis(Axis(0)),
        };
        (grad, dout.dot(&self.weights))
    }

    fn same_shape(&self, other: &Dense) -> bool {
        self.weights.dim() == other.weights.dim() && self.bias.len() == other.bias.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn tanh_grad(act: &Array2<f64>, dact: Array2<f64>) -> Array2<f64> {
    let mut d = dact;
    ndarray::Zip::from(&mut d)
        .and(act)
        .for_each(|g, &a| *g *= 1.0 - a * a);
    d
}

fn check_input(x: ArrayView2<f64>, d: usize) -> Result<()> {
    if x.ncols() != d {
        return Err(shape_mismatch(
            format!("{d} input columns"),
            format!("{}", x.ncols()),
        ));
    }
    Ok(())
}

fn check_chain(layers: &[Dense]) -> Result<()> {
    for w in layers.windows(2) {
        if w[0].output_dim() != w[1].input_dim() {
            return Err(shape_mismatch(
                format!("layer input {}", w[0].output_dim()),
                format!("{}", w[1].input_dim()),
            ));
        }
    }
    for l in layers {
        if l.bias.len() != l.output_dim() {
            return Err(shape_mismatch(
                format!("bias length {}", l.output_dim()),
                format!("{}", l.bias.len()),
            ));
        }
    }
    Ok(())
}

/// Anything trained by [`sgd_step`].
pub trait LayerStack {
    fn layers(&self) -> &[Dense];
    fn layers_mut(&mut self) -> &mut [Dense];

    fn zero_grads(&self) -> Vec<Dense> {
        self.layers().iter().map(Dense::zeros_like).collect()
    }

    fn num_params(&self) -> usize {
        self.layers().iter().map(Dense::num_params).sum()
    }

    /// All parameters flattened layer by layer (weights then bias).
    fn flat_params(&self) -> Array1<f64> {
        flatten(self.layers())
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        unflatten_into(self.layers_mut(), flat);
    }
}

pub fn flatten(layers: &[Dense]) -> Array1<f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn unflatten_into(layers: &mut [Dense], flat: &[f64]) {
    let mut it = flat.iter();
    for l in layers {
        for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
            *w = *it.next().expect("flat parameter vector too short");
        }
    }
}

/// Supervised classifier `d → h (tanh) → K`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    layers: Vec<Dense>,
}

/// Output of [`classifier_backward`].
#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub params: Vec<Dense>,
    pub input: Array2<f64>,
    pub loss: f64,
}

impl ClassifierModel {
    pub fn new(input: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, 0xc1a5);
        Self {
            layers: vec![
                Dense::init(input, hidden, &mut rng),
                Dense::init(hidden, classes, &mut rng),
            ],
        }
    }

    pub fn zeros(input: usize, hidden: usize, classes: usize) -> Self {
        Self {
            layers: vec![Dense::zeros(input, hidden), Dense::zeros(hidden, classes)],
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() != 2 {
            return Err(Error::Format(format!(
                "classifier needs 2 layers, found {}",
                layers.len()
            )));
        }
        check_chain(&layers)?;
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.layers[1].output_dim()
    }
}

impl LayerStack for ClassifierModel {
    fn layers(&self) -> &[Dense] {
        &self.layers
    }
    fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }
}

pub fn classifier_forward(model: &ClassifierModel, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_input(batch, model.input_dim())?;
    let hidden = model.layers[0].forward(batch).mapv(f64::tanh);
    Ok(model.layers[1].forward(hidden.view()))
}

/// Mean cross-entropy with gradients for parameters and input pixels.
pub fn classifier_backward(
    model: &ClassifierModel,
    batch: ArrayView2<f64>,
    labels: &[usize],
) -> Result<ClassifierGrads> {
    check_input(batch, model.input_dim())?;
    let hidden = model.layers[0].forward(batch).mapv(f64::tanh);
    let logits = model.layers[1].forward(hidden.view());
    let (loss, dlogits) = cross_entropy(logits.view(), labels)?;
    let (g_out, dhidden) = model.layers[1].backward(hidden.view(), dlogits.view());
    let dpre = tanh_grad(&hidden, dhidden);
    let (g_hidden, dinput) = model.layers[0].backward(batch, dpre.view());
    Ok(ClassifierGrads {
        params: vec![g_hidden, g_out],
        input: dinput,
        loss,
    })
}

/// Contrastive encoder `d → h (tanh) → m (tanh)` with a linear head `m → p`
/// whose output rows are L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    layers: Vec<Dense>,
}

impl EncoderModel {
    pub fn new(input: usize, hidden: usize, feature: usize, projection: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, 0xe4c0);
        Self {
            layers: vec![
                Dense::init(input, hidden, &mut rng),
                Dense::init(hidden, feature, &mut rng),
                Dense::init(feature, projection, &mut rng),
            ],
        }
    }

    pub fn zeros(input: usize, hidden: usize, feature: usize, projection: usize) -> Self {
        Self {
            layers: vec![
                Dense::zeros(input, hidden),
                Dense::zeros(hidden, feature),
                Dense::zeros(feature, projection),
            ],
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.len() != 3 {
            return Err(Error::Format(format!(
                "encoder needs 3 layers, found {}",
                layers.len()
            )));
        }
        check_chain(&layers)?;
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[1].output_dim()
    }

    pub fn projection_dim(&self) -> usize {
        self.layers[2].output_dim()
    }

    /// Features only (the representation a linear probe sees).
    pub fn features(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_input(batch, self.input_dim())?;
        let hidden = self.layers[0].forward(batch).mapv(f64::tanh);
        Ok(self.layers[1].forward(hidden.view()).mapv(f64::tanh))
    }
}

impl LayerStack for EncoderModel {
    fn layers(&self) -> &[Dense] {
        &self.layers
    }
    fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }
}

/// Cached activations of one encoder forward pass.
#[derive(Debug, Clone)]
pub struct EncoderPass {
    input: Array2<f64>,
    hidden: Array2<f64>,
    pub features: Array2<f64>,
    raw_norms: Array1<f64>,
    pub projections: Array2<f64>,
}

/// Gradients of a scalar of the projections.
#[derive(Debug, Clone)]
pub struct EncoderGrads {
    pub params: Vec<Dense>,
    pub input: Array2<f64>,
}

pub fn encoder_forward(model: &EncoderModel, batch: ArrayView2<f64>) -> Result<EncoderPass> {
    check_input(batch, model.input_dim())?;
    let hidden = model.layers[0].forward(batch).mapv(f64::tanh);
    let features = model.layers[1].forward(hidden.view()).mapv(f64::tanh);
    let mut projections = model.layers[2].forward(features.view());
    let mut raw_norms = Array1::zeros(projections.nrows());
    for (mut row, norm) in projections.rows_mut().into_iter().zip(raw_norms.iter_mut()) {
        let n = row.dot(&row).sqrt();
        *norm = n;
        if n > ZERO_NORM {
            row.mapv_inplace(|v| v / n);
        } else {
            // Degenerate row: fixed first basis vector, no gradient flows.
            row.fill(0.0);
            if !row.is_empty() {
                row[0] = 1.0;
            }
        }
    }
    Ok(EncoderPass {
        input: batch.to_owned(),
        hidden,
        features,
        raw_norms,
        projections,
    })
}

impl EncoderPass {
    /// Back-propagates `d(scalar)/d(projections)` through the encoder.
    pub fn backward(&self, model: &EncoderModel, dproj: ArrayView2<f64>) -> Result<EncoderGrads> {
        if dproj.dim() != self.projections.dim() {
            return Err(shape_mismatch(
                format!("{:?}", self.projections.dim()),
                format!("{:?}", dproj.dim()),
            ));
        }
        // z = u/|u|  ⇒  du = (dz - z (z·dz)) / |u|
        let mut draw = dproj.to_owned();
        for ((mut g, z), &n) in draw
            .rows_mut()
            .into_iter()
            .zip(self.projections.rows())
            .zip(self.raw_norms.iter())
        {
            if n > ZERO_NORM {
                let along = z.dot(&g);
                g.zip_mut_with(&z, |gi, &zi| *gi = (*gi - zi * along) / n);
            } else {
                g.fill(0.0);
            }
        }
        let (g_head, dfeat) = model.layers[2].backward(self.features.view(), draw.view());
        let dfeat_pre = tanh_grad(&self.features, dfeat);
        let (g_feat, dhidden) = model.layers[1].backward(self.hidden.view(), dfeat_pre.view());
        let dhidden_pre = tanh_grad(&self.hidden, dhidden);
        let (g_hidden, dinput) = model.layers[0].backward(self.input.view(), dhidden_pre.view());
        Ok(EncoderGrads {
            params: vec![g_hidden, g_feat, g_head],
            input: dinput,
        })
    }
}

/// Linear classifier on frozen encoder features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeHead {
    layers: Vec<Dense>,
}

impl ProbeHead {
    pub fn new(feature: usize, classes: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, 0x9b0e);
        Self {
            layers: vec![Dense::init(feature, classes, &mut rng)],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn forward(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_input(features, self.feature_dim())?;
        Ok(self.layers[0].forward(features))
    }

    /// Mean cross-entropy and parameter gradients.
    pub fn backward(
        &self,
        features: ArrayView2<f64>,
        labels: &[usize],
    ) -> Result<(f64, Vec<Dense>)> {
        let logits = self.forward(features)?;
        let (loss, dlogits) = cross_entropy(logits.view(), labels)?;
        let (g, _) = self.layers[0].backward(features, dlogits.view());
        Ok((loss, vec![g]))
    }
}

impl LayerStack for ProbeHead {
    fn layers(&self) -> &[Dense] {
        &self.layers
    }
    fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }
}

/// Momentum buffers matching a layer stack.
#[derive(Debug, Clone)]
pub struct Momentum {
    velocity: Vec<Dense>,
}

impl Momentum {
    pub fn for_model(model: &impl LayerStack) -> Self {
        Self {
            velocity: model.zero_grads(),
        }
    }
}

/// Classical momentum: `v ← μ v + g`, `w ← w − lr · v`.
pub fn sgd_step(
    params: &mut [Dense],
    grads: &[Dense],
    lr: f64,
    state: &mut Momentum,
    momentum: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::BadConfig(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(shape_mismatch(
            format!("{} layers", params.len()),
            format!(
                "{} gradients / {} buffers",
                grads.len(),
                state.velocity.len()
            ),
        ));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        if !p.same_shape(g) || !p.same_shape(v) {
            return Err(shape_mismatch(
                format!("{:?}", p.weights.dim()),
                format!("{:?}", g.weights.dim()),
            ));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        v.weights
            .zip_mut_with(&g.weights, |vi, &gi| *vi = momentum * *vi + gi);
        v.bias
            .zip_mut_with(&g.bias, |vi, &gi| *vi = momentum * *vi + gi);
        p.weights.scaled_add(-lr, &v.weights);
        p.bias.scaled_add(-lr, &v.bias);
    }
    Ok(())
}

pub fn encode_layers(layers: &[Dense]) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MODEL_MAGIC)
        .u32(MODEL_VERSION)
        .u32(layers.len() as u32);
    for l in layers {
        w.u32(l.output_dim() as u32).u32(l.input_dim() as u32);
        for &v in l.weights.iter() {
            w.f64(v);
        }
        for &v in l.bias.iter() {
            w.f64(v);
        }
    }
    w.into_inner()
}

pub fn decode_layers(bytes: &[u8]) -> Result<Vec<Dense>> {
    let mut r = Reader::new(bytes, "checkpoint");
    r.magic(MODEL_MAGIC)?;
    r.version(MODEL_VERSION)?;
    let count = r.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..count {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let len = r.expect_len(rows, cols)?;
        // Reject absurd declared sizes before allocating.
        r.expect_len(len, 8)?;
        if len.saturating_add(rows).saturating_mul(8) > bytes.len() {
            return Err(Error::Format("checkpoint: truncated layer".into()));
        }
        let mut weights = Vec::with_capacity(len);
        for _ in 0..len {
            weights.push(r.f64()?);
        }
        let mut bias = Vec::with_capacity(rows);
        for _ in 0..rows {
            bias.push(r.f64()?);
        }
        layers.push(Dense {
            weights: Array2::from_shape_vec((rows, cols), weights).expect("length checked"),
            bias: Array1::from(bias),
        });
    }
    r.finish()?;
    check_chain(&layers).map_err(|e| Error::Format(e.to_string()))?;
    Ok(layers)
}

pub fn save_checkpoint(model: &impl LayerStack, path: &Path) -> Result<()> {
    write_atomic(path, &encode_layers(model.layers()))
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<Dense>> {
    decode_layers(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::{finite_diff_grad, max_rel_err};
    use ndarray::array;

    fn random_batch(rng: &mut SeededRng, b: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((b, d), |_| rng.uniform())
    }

    #[test]
    fn zero_classifier_gives_zero_logits() {
        let m = ClassifierModel::zeros(5, 3, 4);
        let x = Array2::from_elem((2, 5), 0.7);
        assert!(classifier_forward(&m, x.view())
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let empty = Array2::<f64>::zeros((0, 5));
        assert_eq!(classifier_forward(&m, empty.view()).unwrap().dim(), (0, 4));
    }

    #[test]
    fn classifier_shape_mismatch() {
        let m = ClassifierModel::new(5, 3, 4, 1);
        let x = Array2::zeros((2, 6));
        assert!(matches!(
            classifier_forward(&m, x.view()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn classifier_forward_is_deterministic() {
        let a = ClassifierModel::new(6, 8, 3, 42);
        let b = ClassifierModel::new(6, 8, 3, 42);
        let x = random_batch(&mut SeededRng::new(1, 0), 4, 6);
        assert_eq!(
            classifier_forward(&a, x.view()).unwrap(),
            classifier_forward(&b, x.view()).unwrap()
        );
    }

    #[test]
    fn classifier_param_and_input_grads_match_finite_differences() {
        for seed in 0..10 {
            let mut rng = SeededRng::new(seed, 7);
            let model = ClassifierModel::new(5, 6, 3, seed);
            let x = random_batch(&mut rng, 4, 5);
            let labels: Vec<usize> = (0..4).map(|_| rng.below(3)).collect();
            let g = classifier_backward(&model, x.view(), &labels).unwrap();

            let loss_at = |p: ndarray::ArrayView1<f64>| {
                let mut m = model.clone();
                m.set_flat_params(p.as_slice().unwrap());
                classifier_backward(&m, x.view(), &labels).unwrap().loss
            };
            let fd = finite_diff_grad(loss_at, model.flat_params().view(), 1e-6).unwrap();
            assert!(max_rel_err(flatten(&g.params).view(), fd.view(), 1e-6) < 1e-4);

            let flat_x = Array1::from_iter(x.iter().copied());
            let loss_x = |v: ndarray::ArrayView1<f64>| {
                let xb = v.to_owned().into_shape_with_order((4, 5)).unwrap();
                classifier_backward(&model, xb.view(), &labels)
                    .unwrap()
                    .loss
            };
            let fd = finite_diff_grad(loss_x, flat_x.view(), 1e-6).unwrap();
            let an = Array1::from_iter(g.input.iter().copied());
            assert!(max_rel_err(an.view(), fd.view(), 1e-6) < 1e-4);
        }
    }

    #[test]
    fn input_gradient_shrinks_with_margin() {
        // Output layer reads hidden unit 0 only; hidden unit 0 copies the
        // first pixel. The correct-class margin grows with the output weight.
        let norm_at = |margin: f64| {
            let mut m = ClassifierModel::zeros(3, 2, 2);
            m.layers[0].weights[[0, 0]] = 1.0;
            m.layers[1].weights[[0, 0]] = margin;
            m.layers[1].weights[[1, 0]] = -margin;
            let x = array![[0.5, 0.2, 0.3]];
            let g = classifier_backward(&m, x.view(), &[0]).unwrap();
            g.input.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let (a, b, c) = (norm_at(1.0), norm_at(5.0), norm_at(10.0));
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn duplicated_batch_has_same_mean_gradient() {
        let model = ClassifierModel::new(4, 5, 3, 2);
        let x = random_batch(&mut SeededRng::new(3, 0), 3, 4);
        let labels = vec![0, 2, 1];
        let xx = ndarray::concatenate![Axis(0), x, x];
        let ll: Vec<usize> = labels.iter().chain(labels.iter()).copied().collect();
        let a = classifier_backward(&model, x.view(), &labels).unwrap();
        let b = classifier_backward(&model, xx.view(), &ll).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        let diff = max_rel_err(flatten(&a.params).view(), flatten(&b.params).view(), 1e-12);
        assert!(diff < 1e-10);
    }

    #[test]
    fn encoder_projections_are_unit_norm() {
        let model = EncoderModel::new(6, 10, 5, 4, 3);
        let x = random_batch(&mut SeededRng::new(8, 0), 7, 6);
        let pass = encoder_forward(&model, x.view()).unwrap();
        for row in pass.projections.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-9);
        }
        assert_eq!(pass.features.dim(), (7, 5));
    }

    #[test]
    fn zero_encoder_falls_back_to_basis_vector() {
        let model = EncoderModel::zeros(6, 4, 3, 5);
        let x = random_batch(&mut SeededRng::new(8, 0), 3, 6);
        let pass = encoder_forward(&model, x.view()).unwrap();
        for row in pass.projections.rows() {
            assert_eq!(row.to_vec(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn encoder_grads_match_finite_differences() {
        for seed in 0..10 {
            let mut rng = SeededRng::new(seed, 9);
            let model = EncoderModel::new(4, 5, 4, 3, seed);
            let x = random_batch(&mut rng, 3, 4);
            // Scalar: random linear functional of the projections.
            let coeff = Array2::from_shape_fn((3, 3), |_| rng.normal());
            let scalar = |m: &EncoderModel, xb: ArrayView2<f64>| {
                let p = encoder_forward(m, xb).unwrap();
                (&p.projections * &coeff).sum()
            };
            let pass = encoder_forward(&model, x.view()).unwrap();
            let g = pass.backward(&model, coeff.view()).unwrap();

            let fd = finite_diff_grad(
                |p| {
                    let mut m = model.clone();
                    m.set_flat_params(p.as_slice().unwrap());
                    scalar(&m, x.view())
                },
                model.flat_params().view(),
                1e-6,
            )
            .unwrap();
            assert!(max_rel_err(flatten(&g.params).view(), fd.view(), 1e-6) < 1e-4);

            let flat_x = Array1::from_iter(x.iter().copied());
            let fd = finite_diff_grad(
                |v| {
                    let xb = v.to_owned().into_shape_with_order((3, 4)).unwrap();
                    scalar(&model, xb.view())
                },
                flat_x.view(),
                1e-6,
            )
            .unwrap();
            let an = Array1::from_iter(g.input.iter().copied());
            assert!(max_rel_err(an.view(), fd.view(), 1e-6) < 1e-4);
        }
    }

    #[test]
    fn sgd_step_rules() {
        let mut p = vec![Dense {
            weights: array![[1.0, 2.0]],
            bias: array![0.5],
        }];
        let model = ProbeHead { layers: p.clone() };
        let mut state = Momentum::for_model(&model);
        let zero = vec![p[0].zeros_like()];
        sgd_step(&mut p, &zero, 0.1, &mut state, 0.9).unwrap();
        assert_eq!(p[0].weights, array![[1.0, 2.0]]);

        let g = vec![Dense {
            weights: array![[1.0, -1.0]],
            bias: array![2.0],
        }];
        let mut state = Momentum::for_model(&model);
        let mut q = p.clone();
        sgd_step(&mut q, &g, 0.1, &mut state, 0.0).unwrap();
        assert_eq!(q[0].weights, array![[0.9, 2.1]]);
        assert!((q[0].bias[0] - 0.3).abs() < 1e-15);

        // Two momentum steps on a constant gradient move lr·g·(1 + 1.9).
        let mut state = Momentum::for_model(&model);
        let mut r = p.clone();
        sgd_step(&mut r, &g, 0.1, &mut state, 0.9).unwrap();
        sgd_step(&mut r, &g, 0.1, &mut state, 0.9).unwrap();
        let moved = &p[0].weights - &r[0].weights;
        let expected = &g[0].weights * (0.1 * 2.9);
        assert!(
            max_rel_err(
                Array1::from_iter(moved.iter().copied()).view(),
                Array1::from_iter(expected.iter().copied()).view(),
                1e-15
            ) < 1e-12
        );

        let bad = vec![Dense::zeros(3, 1)];
        assert!(matches!(
            sgd_step(&mut r, &bad, 0.1, &mut state, 0.9),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let model = EncoderModel::new(6, 5, 4, 3, 11);
        let bytes = encode_layers(model.layers());
        let back = EncoderModel::from_layers(decode_layers(&bytes).unwrap()).unwrap();
        assert_eq!(back, model);
        assert!(matches!(
            decode_layers(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(decode_layers(&bad), Err(Error::Format(_))));
        assert!(ClassifierModel::from_layers(decode_layers(&bytes).unwrap()).is_err());
    }
}
