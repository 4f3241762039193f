//! Linear centered kernel alignment between activation matrices, and
//! the cross-scale encoder comparison built on it.

use igkit_core::gemm::matmul_tn;
use igkit_core::{CoreError, Result, Tensor};
use igkit_model::SrModel;

/// Linear CKA on column-centered features:
/// ||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F).
///
/// Inputs are [samples, features] with matching sample counts. A
/// constant (zero after centering) matrix has no defined similarity
/// and is an error rather than a NaN.
pub fn linear_cka(x: &Tensor, y: &Tensor) -> Result<f64> {
    if x.rank() != 2 || y.rank() != 2 {
        return Err(CoreError::dims("linear_cka", "inputs must be [samples, features]"));
    }
    let n = x.shape()[0];
    if y.shape()[0] != n {
        return Err(CoreError::dims(
            "linear_cka",
            format!("sample counts differ: {} vs {}", n, y.shape()[0]),
        ));
    }
    if n < 2 {
        return Err(CoreError::invalid("linear_cka", "need at least 2 samples"));
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    let fx = x.shape()[1];
    let fy = y.shape()[1];
    // Cross-covariance and the two self-covariances.
    let mut yx = vec![0.0; fy * fx];
    matmul_tn(&mut yx, yc.data(), xc.data(), fy, n, fx);
    let mut xx = vec![0.0; fx * fx];
    matmul_tn(&mut xx, xc.data(), xc.data(), fx, n, fx);
    let mut yy = vec![0.0; fy * fy];
    matmul_tn(&mut yy, yc.data(), yc.data(), fy, n, fy);
    let fro = |m: &[f64]| m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let denom_x = fro(&xx);
    let denom_y = fro(&yy);
    if denom_x == 0.0 || denom_y == 0.0 {
        return Err(CoreError::invalid(
            "linear_cka",
            "constant feature matrix has no defined similarity",
        ));
    }
    let num: f64 = yx.iter().map(|v| v * v).sum();
    Ok(num / (denom_x * denom_y))
}

fn center_columns(x: &Tensor) -> Tensor {
    let (n, f) = (x.shape()[0], x.shape()[1]);
    let mut means = vec![0.0; f];
    for row in x.data().chunks_exact(f) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut out = x.to_vec();
    for row in out.chunks_exact_mut(f) {
        for (v, m) in row.iter_mut().zip(&means) {
            *v -= m;
        }
    }
    Tensor::from_vec(x.shape(), out).expect("centered shape")
}

/// Per-layer similarity between encoders run on identical inputs.
#[derive(Clone, Debug)]
pub struct CkaReport {
    pub layers: Vec<String>,
    pub pair_labels: Vec<String>,
    /// values[layer][pair]
    pub values: Vec<Vec<f64>>,
}

impl CkaReport {
    pub fn layer_means(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len().max(1) as f64)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer");
        for p in &self.pair_labels {
            out.push(',');
            out.push_str(p);
        }
        out.push_str(",mean\n");
        for (i, layer) in self.layers.iter().enumerate() {
            out.push_str(layer);
            for v in &self.values[i] {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push_str(&format!(",{:.6}\n", self.layer_means()[i]));
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<10}", "layer");
        for p in &self.pair_labels {
            out.push_str(&format!(" {p:>12}"));
        }
        out.push_str(&format!(" {:>8}\n", "mean"));
        for (i, layer) in self.layers.iter().enumerate() {
            out.push_str(&format!("{layer:<10}"));
            for v in &self.values[i] {
                out.push_str(&format!(" {v:>12.4}"));
            }
            out.push_str(&format!(" {:>8.4}\n", self.layer_means()[i]));
        }
        out
    }
}

/// Flattens a [1, C, H, W] activation into [pixels, channels] rows.
fn activation_rows(t: &Tensor) -> Tensor {
    let (_, c, h, w) = t.dim4();
    let mut out = vec![0.0; h * w * c];
    for ci in 0..c {
        for p in 0..h * w {
            out[p * c + ci] = t.data()[ci * h * w + p];
        }
    }
    Tensor::from_vec(&[h * w, c], out).expect("activation rows")
}

/// Runs every model's encoder on the same probe inputs and compares
/// per-layer activations pairwise. A single model compares with itself
/// (all ones): the multi-scale setup shares one encoder by
/// construction.
pub fn cka_across_scales(
    models: &[(String, &SrModel)],
    probes: &[Tensor],
) -> Result<CkaReport> {
    if models.is_empty() {
        return Err(CoreError::invalid("cka", "no models given"));
    }
    if probes.is_empty() {
        return Err(CoreError::invalid("cka", "no probe images given"));
    }
    // Collect stacked activation matrices per model per layer.
    let mut layer_names: Vec<String> = Vec::new();
    let mut features: Vec<Vec<Tensor>> = Vec::new(); // [model][layer]
    for (_, model) in models {
        let mut per_layer: Vec<Vec<Tensor>> = Vec::new();
        for probe in probes {
            let (_, taps) = model.encode_with_taps(probe)?;
            if per_layer.is_empty() {
                per_layer = vec![Vec::new(); taps.len()];
                if layer_names.is_empty() {
                    layer_names = taps.iter().map(|(n, _)| n.clone()).collect();
                }
            }
            for (i, (_, t)) in taps.iter().enumerate() {
                per_layer[i].push(activation_rows(t));
            }
        }
        let stacked: Result<Vec<Tensor>> = per_layer
            .iter()
            .map(|parts| {
                let refs: Vec<&Tensor> = parts.iter().collect();
                Tensor::concat(&refs, 0)
            })
            .collect();
        features.push(stacked?);
    }
    let mut pair_labels = Vec::new();
    let mut pairs = Vec::new();
    if models.len() == 1 {
        pair_labels.push(format!("{}~{}", models[0].0, models[0].0));
        pairs.push((0usize, 0usize));
    } else {
        for i in 0..models.len() {
            for j in i + 1..models.len() {
                pair_labels.push(format!("{}~{}", models[i].0, models[j].0));
                pairs.push((i, j));
            }
        }
    }
    let mut values = Vec::with_capacity(layer_names.len());
    for layer in 0..layer_names.len() {
        let mut row = Vec::with_capacity(pairs.len());
        for &(i, j) in &pairs {
            // A model against itself shares the encoder; the similarity
            // is trivially one, no quotient arithmetic needed.
            if i == j {
                row.push(1.0);
            } else {
                row.push(linear_cka(&features[i][layer], &features[j][layer])?);
            }
        }
        values.push(row);
    }
    Ok(CkaReport { layers: layer_names, pair_labels, values })
}
