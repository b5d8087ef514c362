//! Cross-entropy, NT-Xent, the classwise separability discriminant (CSD)
//! and the weighted contrastive + CSD objective, each with the gradient
//! that the optimizers downstream consume.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::numkernel::{log_sum_exp, ZERO_NORM};

/// Mean negative log-likelihood of the true class and its logit gradient.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (b, k) = logits.dim();
    if labels.len() != b {
        return Err(shape_mismatch(
            format!("{b} labels"),
            format!("{}", labels.len()),
        ));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= k) {
        return Err(shape_mismatch(format!("label < {k}"), format!("{y}")));
    }
    let mut grad = Array2::zeros((b, k));
    if b == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / b as f64;
    let mut total = 0.0;
    for ((row, mut g), &y) in logits.rows().into_iter().zip(grad.rows_mut()).zip(labels) {
        let lse = log_sum_exp(row.iter().copied());
        total += lse - row[y];
        for (gj, &l) in g.iter_mut().zip(row.iter()) {
            *gj = (l - lse).exp() * scale;
        }
        g[y] -= scale;
    }
    Ok((total * scale, grad))
}

/// SimCLR NT-Xent over `2b` rows where rows `2i` and `2i+1` are the two views
/// of sample `i`. Similarities are dot products, which equal cosine
/// similarities for the unit-norm rows the encoder produces.
pub fn nt_xent(projections: ArrayView2<f64>, temperature: f64) -> Result<(f64, Array2<f64>)> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::BadTemperature(temperature));
    }
    let n = projections.nrows();
    if n < 2 || !n.is_multiple_of(2) {
        return Err(shape_mismatch(
            "an even number (>= 2) of rows",
            format!("{n}"),
        ));
    }
    let sim = projections.dot(&projections.t()) / temperature;
    let inv_n = 1.0 / n as f64;
    // coeff[i][k] = d(loss)/d(sim[i][k]); the diagonal never enters.
    let mut coeff = Array2::<f64>::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        let pos = i ^ 1;
        let row = sim.row(i);
        let others = (0..n).filter(|&k| k != i).map(|k| row[k]);
        let lse = log_sum_exp(others);
        total += lse - row[pos];
        for k in (0..n).filter(|&k| k != i) {
            coeff[[i, k]] = (row[k] - lse).exp() * inv_n;
        }
        coeff[[i, pos]] -= inv_n;
    }
    let sym = &coeff + &coeff.t();
    let grad = sym.dot(&projections) / temperature;
    Ok((total * inv_n, grad))
}

/// How to treat coincident class centroids in [`csd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "floor")]
pub enum CentroidFloor {
    /// Fail with `CollapsedCentroids` when a centroid distance is below the floor.
    Strict(f64),
    /// Replace distances below the floor by the floor; no gradient flows
    /// through floored distances.
    Clamp(f64),
}

impl Default for CentroidFloor {
    fn default() -> Self {
        CentroidFloor::Strict(DEFAULT_CENTROID_FLOOR)
    }
}

pub const DEFAULT_CENTROID_FLOOR: f64 = 1e-8;

/// Class statistics behind a CSD value.
#[derive(Debug, Clone, PartialEq)]
pub struct CsdReport {
    /// `M × d` class means.
    pub centroids: Array2<f64>,
    /// Mean Euclidean distance of each class to its centroid.
    pub intra: Array1<f64>,
    /// `M × M` centroid distances; the diagonal is zero.
    pub inter: Array2<f64>,
    pub csd: f64,
    pub num_classes: usize,
}

/// Classwise separability discriminant
/// `(1/M) Σ_i (1/(M−1)) Σ_{j≠i} (σ_i + σ_j) / d_ij` and its gradient with
/// respect to every perturbation row.
pub fn csd(
    deltas: ArrayView2<f64>,
    labels: &[usize],
    num_classes: usize,
    floor: CentroidFloor,
) -> Result<(CsdReport, Array2<f64>)> {
    let (n, d) = deltas.dim();
    let m = num_classes;
    if labels.len() != n {
        return Err(shape_mismatch(
            format!("{n} labels"),
            format!("{}", labels.len()),
        ));
    }
    if m < 2 {
        return Err(Error::BadConfig(format!(
            "CSD needs at least 2 classes, got {m}"
        )));
    }
    let mut counts = vec![0usize; m];
    for &y in labels {
        if y >= m {
            return Err(shape_mismatch(format!("label < {m}"), format!("{y}")));
        }
        counts[y] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::ClassTooSmall {
            class: k,
            size: 0,
            needed: 1,
        });
    }

    let mut centroids = Array2::<f64>::zeros((m, d));
    for (row, &y) in deltas.rows().into_iter().zip(labels) {
        centroids.row_mut(y).scaled_add(1.0, &row);
    }
    for (mut c, &cnt) in centroids.rows_mut().into_iter().zip(&counts) {
        c.mapv_inplace(|v| v / cnt as f64);
    }

    // Unit offsets from the own centroid (zero at the centroid itself).
    let mut units = Array2::<f64>::zeros((n, d));
    let mut intra = Array1::<f64>::zeros(m);
    let mut unit_mean = Array2::<f64>::zeros((m, d));
    for (i, &y) in labels.iter().enumerate() {
        let diff = &deltas.row(i) - &centroids.row(y);
        let dist = diff.dot(&diff).sqrt();
        intra[y] += dist;
        if dist > ZERO_NORM {
            let u = diff / dist;
            unit_mean.row_mut(y).scaled_add(1.0, &u);
            units.row_mut(i).assign(&u);
        }
    }
    for k in 0..m {
        intra[k] /= counts[k] as f64;
        unit_mean.row_mut(k).mapv_inplace(|v| v / counts[k] as f64);
    }

    let (fl, strict) = match floor {
        CentroidFloor::Strict(f) => (f, true),
        CentroidFloor::Clamp(f) => (f, false),
    };
    let mut inter = Array2::<f64>::zeros((m, m));
    let mut effective = Array2::<f64>::zeros((m, m));
    for a in 0..m {
        for b in a + 1..m {
            let diff = &centroids.row(a) - &centroids.row(b);
            let dist = diff.dot(&diff).sqrt();
            if !(dist >= fl) && strict {
                return Err(Error::CollapsedCentroids {
                    a,
                    b,
                    distance: dist,
                    floor: fl,
                });
            }
            inter[[a, b]] = dist;
            inter[[b, a]] = dist;
            let eff = dist.max(fl);
            effective[[a, b]] = eff;
            effective[[b, a]] = eff;
        }
    }

    let norm = 1.0 / (m * (m - 1)) as f64;
    let mut value = 0.0;
    for a in 0..m {
        for b in 0..m {
            if a != b {
                value += (intra[a] + intra[b]) / effective[[a, b]];
            }
        }
    }
    value *= norm;

    // d(csd)/d(σ_k) and per-class centroid pull from the distance terms.
    let dsigma: Vec<f64> = (0..m)
        .map(|k| {
            2.0 * norm
                * (0..m)
                    .filter(|&j| j != k)
                    .map(|j| 1.0 / effective[[k, j]])
                    .sum::<f64>()
        })
        .collect();
    let mut dcentroid = Array2::<f64>::zeros((m, d));
    for a in 0..m {
        for b in 0..m {
            if a == b || inter[[a, b]] < fl || inter[[a, b]] <= 0.0 {
                continue;
            }
            let dist = inter[[a, b]];
            let coef = -2.0 * norm * (intra[a] + intra[b]) / (dist * dist);
            let dir = (&centroids.row(a) - &centroids.row(b)) / dist;
            dcentroid.row_mut(a).scaled_add(coef, &dir);
        }
    }

    let mut grad = Array2::<f64>::zeros((n, d));
    for (i, &y) in labels.iter().enumerate() {
        let inv = 1.0 / counts[y] as f64;
        let mut g = grad.row_mut(i);
        g.scaled_add(dsigma[y] * inv, &units.row(i));
        g.scaled_add(-dsigma[y] * inv, &unit_mean.row(y));
        g.scaled_add(inv, &dcentroid.row(y));
    }

    Ok((
        CsdReport {
            centroids,
            intra,
            inter,
            csd: value,
            num_classes: m,
        },
        grad,
    ))
}

/// CSD value only.
pub fn csd_value(
    deltas: ArrayView2<f64>,
    labels: &[usize],
    num_classes: usize,
    floor: CentroidFloor,
) -> Result<f64> {
    csd(deltas, labels, num_classes, floor).map(|(r, _)| r.csd)
}

/// `L_CL + λ · L_S` and its gradient with respect to the perturbations.
///
/// `contrastive_grads` is `d(L_CL)/d(δ)`, already chained through the encoder
/// and augmentations by the caller. With `λ = 0` the CSD term is not
/// evaluated at all.
#[allow(clippy::too_many_arguments)]
pub fn tue_objective(
    projections: ArrayView2<f64>,
    temperature: f64,
    deltas: ArrayView2<f64>,
    labels: &[usize],
    num_classes: usize,
    lambda: f64,
    contrastive_grads: ArrayView2<f64>,
    floor: CentroidFloor,
) -> Result<(f64, Array2<f64>)> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::BadConfig(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if contrastive_grads.dim() != deltas.dim() {
        return Err(shape_mismatch(
            format!("{:?}", deltas.dim()),
            format!("{:?}", contrastive_grads.dim()),
        ));
    }
    let (cl, _) = nt_xent(projections, temperature)?;
    if lambda == 0.0 {
        return Ok((cl, contrastive_grads.to_owned()));
    }
    let (report, g) = csd(deltas, labels, num_classes, floor)?;
    let mut grad = contrastive_grads.to_owned();
    grad.scaled_add(lambda, &g);
    Ok((cl + lambda * report.csd, grad))
}

/// Column means, used by callers that need centroids without a full report.
pub fn class_means(deltas: ArrayView2<f64>, labels: &[usize], num_classes: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((num_classes, deltas.ncols()));
    let mut counts = vec![0usize; num_classes];
    for (row, &y) in deltas.axis_iter(Axis(0)).zip(labels) {
        sums.row_mut(y).scaled_add(1.0, &row);
        counts[y] += 1;
    }
    for (mut r, c) in sums.rows_mut().into_iter().zip(counts) {
        if c > 0 {
            r.mapv_inplace(|v| v / c as f64);
        }
    }
    sums
}
