//! Two-layer feature transformer and its training machinery.
//!
//! The model is `H = Dropout(ReLU(X W0)) W1` with inverted-dropout
//! scaling, trained through a fixed propagation operator with exact
//! analytic gradients (the computation graph is shallow enough that no
//! autodiff is warranted). L2 regularization applies to the first layer's
//! weights only.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ppr::PropagationOperator;
use crate::sparse::SparseMatrix;

/// Weights of the two-layer transformer plus its regularization settings.
#[derive(Debug, Clone)]
pub struct MlpModel {
    /// First layer, `f x h`. The only L2-regularized parameter.
    pub w0: Array2<f64>,
    /// Second layer, `h x c`.
    pub w1: Array2<f64>,
    /// Hidden-layer dropout rate in `[0, 1)`.
    pub dropout_rate: f64,
    /// L2 coefficient on `w0`.
    pub l2_lambda: f64,
}

impl MlpModel {
    /// Glorot-uniform initialization with a seeded generator.
    pub fn glorot(
        n_features: usize,
        hidden: usize,
        n_outputs: usize,
        dropout_rate: f64,
        l2_lambda: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<MlpModel> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(Error::Domain(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        if l2_lambda < 0.0 {
            return Err(Error::Domain("l2 lambda must be nonnegative".into()));
        }
        let sample = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
        };
        Ok(MlpModel {
            w0: sample(n_features, hidden, rng),
            w1: sample(hidden, n_outputs, rng),
            dropout_rate,
            l2_lambda,
        })
    }

    pub fn n_features(&self) -> usize {
        self.w0.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w0.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.w1.ncols()
    }

    fn l2_term(&self) -> f64 {
        0.5 * self.l2_lambda * self.w0.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Feature matrix wrapper that keeps a CSR mirror when the matrix is
/// sparse enough for indexed products to win.
pub struct Features<'a> {
    dense: &'a Array2<f64>,
    sparse: Option<SparseMatrix>,
}

impl<'a> Features<'a> {
    pub fn new(dense: &'a Array2<f64>) -> Features<'a> {
        let total = dense.len();
        let nnz = dense.iter().filter(|&&v| v != 0.0).count();
        let sparse = if total > 0 && (nnz as f64) < 0.25 * total as f64 {
            SparseMatrix::from_dense(dense).ok()
        } else {
            None
        };
        Features { dense, sparse }
    }

    pub fn n_rows(&self) -> usize {
        self.dense.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.dense.ncols()
    }

    pub fn dense(&self) -> &Array2<f64> {
        self.dense
    }

    /// `X . W`.
    pub fn dot(&self, w: &Array2<f64>) -> Result<Array2<f64>> {
        match &self.sparse {
            Some(x) => x.mul_dense(w),
            None => {
                if self.dense.ncols() != w.nrows() {
                    return Err(Error::Shape(format!(
                        "features are {}x{}, weights {}x{}",
                        self.dense.nrows(),
                        self.dense.ncols(),
                        w.nrows(),
                        w.ncols()
                    )));
                }
                Ok(self.dense.dot(w))
            }
        }
    }

    /// `X^T . D`.
    pub fn transpose_dot(&self, d: &Array2<f64>) -> Result<Array2<f64>> {
        if d.nrows() != self.dense.nrows() {
            return Err(Error::Shape(format!(
                "gradient has {} rows, features {}",
                d.nrows(),
                self.dense.nrows()
            )));
        }
        match &self.sparse {
            Some(x) => {
                let mut out = Array2::zeros((self.dense.ncols(), d.ncols()));
                for r in 0..x.n_rows() {
                    let (cols, vals) = x.row(r);
                    let d_row = d.row(r);
                    for (&k, &v) in cols.iter().zip(vals) {
                        out.row_mut(k).scaled_add(v, &d_row);
                    }
                }
                Ok(out)
            }
            None => Ok(self.dense.t().dot(d)),
        }
    }
}

/// Intermediate tensors of a forward pass, kept for the backward pass.
/// `hidden` is post-ReLU, post-dropout; `mask` holds the inverted-dropout
/// factors (`0` or `1/(1-rate)`) when dropout was active.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub pre_activation: Array2<f64>,
    pub hidden: Array2<f64>,
    pub mask: Option<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Forward pass. `rng` drives the dropout draw; pass `None` for
/// evaluation mode (no masks, no scaling). With dropout rate zero the two
/// modes coincide.
pub fn mlp_forward(
    model: &MlpModel,
    x: &Features<'_>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<MlpTrace> {
    let mask = match rng {
        Some(rng) if model.dropout_rate > 0.0 => {
            let keep = 1.0 - model.dropout_rate;
            let scale = 1.0 / keep;
            Some(Array2::from_shape_fn(
                (x.n_rows(), model.hidden()),
                |_| if rng.gen::<f64>() < keep { scale } else { 0.0 },
            ))
        }
        _ => None,
    };
    mlp_forward_masked(model, x, mask)
}

/// Forward pass with a caller-supplied dropout mask; used to re-evaluate
/// the network at fixed masks (finite-difference checks, backward).
pub fn mlp_forward_masked(
    model: &MlpModel,
    x: &Features<'_>,
    mask: Option<Array2<f64>>,
) -> Result<MlpTrace> {
    if x.n_cols() != model.n_features() {
        return Err(Error::Shape(format!(
            "features have {} columns, model expects {}",
            x.n_cols(),
            model.n_features()
        )));
    }
    let pre_activation = x.dot(&model.w0)?;
    let mut hidden = pre_activation.mapv(|v| v.max(0.0));
    if let Some(ref m) = mask {
        if m.dim() != hidden.dim() {
            return Err(Error::Shape("dropout mask shape mismatch".into()));
        }
        hidden *= m;
    }
    let output = hidden.dot(&model.w1);
    Ok(MlpTrace {
        pre_activation,
        hidden,
        mask,
        output,
    })
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Cross-entropy value plus the number of probability clamps applied.
#[derive(Debug, Clone, Copy)]
pub struct NllLoss {
    pub value: f64,
    pub clamped: usize,
}

/// Negative log-likelihood `-sum_{v in mask} log P[v][y_v]`. Zero
/// probabilities at the true label are clamped at `1e-15` and counted.
pub fn nll_loss(
    probs: &Array2<f64>,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<NllLoss> {
    let mut value = 0.0;
    let mut clamped = 0usize;
    for &v in mask {
        if v >= probs.nrows() {
            return Err(Error::Index(format!("node {v} outside probability matrix")));
        }
        let y = labels
            .get(v)
            .copied()
            .flatten()
            .ok_or_else(|| Error::Domain(format!("node {v} in mask has no label")))?;
        if y >= probs.ncols() {
            return Err(Error::Index(format!("label {y} outside class range")));
        }
        let mut p = probs[(v, y)];
        if p < 1e-15 {
            p = 1e-15;
            clamped += 1;
        }
        value -= p.ln();
    }
    Ok(NllLoss { value, clamped })
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy over logits in the overflow-free form
/// `max(x, 0) - x*y + ln(1 + exp(-|x|))`, summed over pairs.
pub fn bce_loss(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} targets",
            logits.len(),
            targets.len()
        )));
    }
    Ok(logits
        .iter()
        .zip(targets)
        .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
        .sum())
}

/// Gradients of the training objective with respect to both weight
/// matrices, together with the objective value itself (data term plus the
/// L2 term on `w0`).
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub d_w0: Array2<f64>,
    pub d_w1: Array2<f64>,
    pub loss: f64,
    pub clamped: usize,
}

/// Loss attached to the propagated output `Z`.
pub enum LossGrad<'a> {
    /// Softmax cross-entropy over the masked rows of `Z`; when `mean` is
    /// set, both the loss and the gradient are averaged over the mask.
    NodeCrossEntropy {
        z: &'a Array2<f64>,
        labels: &'a [Option<usize>],
        mask: &'a [usize],
        mean: bool,
    },
    /// Sigmoid BCE over dot-product pair scores of the rows of `Z`.
    EdgeBce {
        z: &'a Array2<f64>,
        pairs: &'a [(usize, usize)],
        targets: &'a [f64],
    },
}

/// Exact backward pass: the upstream gradient at `Z` is pulled through
/// the propagation operator (`dH = Op^T dZ`; identity when `op` is
/// `None`), then through the second layer, the dropout mask, the ReLU,
/// and the first layer. The L2 term contributes `lambda * w0` to `d_w0`.
pub fn backward(
    model: &MlpModel,
    x: &Features<'_>,
    trace: &MlpTrace,
    op: Option<&PropagationOperator>,
    loss: LossGrad<'_>,
) -> Result<GradientSet> {
    let (d_z, data_loss, clamped) = match loss {
        LossGrad::NodeCrossEntropy {
            z,
            labels,
            mask,
            mean,
        } => {
            let probs = softmax_rows(z);
            let nll = nll_loss(&probs, labels, mask)?;
            let scale = if mean {
                1.0 / mask.len().max(1) as f64
            } else {
                1.0
            };
            let mut d_z = Array2::zeros(z.dim());
            for &v in mask {
                let y = labels[v].expect("mask checked by nll_loss");
                for c in 0..z.ncols() {
                    let indicator = if c == y { 1.0 } else { 0.0 };
                    d_z[(v, c)] = (probs[(v, c)] - indicator) * scale;
                }
            }
            (d_z, nll.value * scale, nll.clamped)
        }
        LossGrad::EdgeBce { z, pairs, targets } => {
            let logits = dot_scores(z, pairs)?;
            let value = bce_loss(&logits, targets)?;
            let mut d_z = Array2::zeros(z.dim());
            for ((&(u, v), &s), &y) in pairs.iter().zip(&logits).zip(targets) {
                let g = stable_sigmoid(s) - y;
                let zu = z.row(u).to_owned();
                let zv = z.row(v).to_owned();
                d_z.row_mut(u).scaled_add(g, &zv);
                d_z.row_mut(v).scaled_add(g, &zu);
            }
            (d_z, value, 0)
        }
    };

    let d_h = match op {
        Some(op) => op.propagate_transpose(&d_z)?,
        None => d_z,
    };
    if d_h.dim() != trace.output.dim() {
        return Err(Error::Shape("upstream gradient shape mismatch".into()));
    }
    let d_w1 = trace.hidden.t().dot(&d_h);
    let mut d_hidden = d_h.dot(&model.w1.t());
    if let Some(ref mask) = trace.mask {
        d_hidden *= mask;
    }
    let relu_gate = trace
        .pre_activation
        .mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    d_hidden *= &relu_gate;
    let mut d_w0 = x.transpose_dot(&d_hidden)?;
    if model.l2_lambda > 0.0 {
        d_w0.scaled_add(model.l2_lambda, &model.w0);
    }
    Ok(GradientSet {
        d_w0,
        d_w1,
        loss: data_loss + model.l2_term(),
        clamped,
    })
}

/// Dot-product scores `z_u . z_v` for a list of node pairs.
pub fn dot_scores(z: &Array2<f64>, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
    let n = z.nrows();
    pairs
        .iter()
        .map(|&(u, v)| {
            if u >= n || v >= n {
                return Err(Error::Index(format!(
                    "pair ({u}, {v}) outside embedding matrix with {n} rows"
                )));
            }
            Ok(z.row(u).dot(&z.row(v)))
        })
        .collect()
}

/// Logistic sigmoid, stable for large magnitudes.
pub fn sigmoid(x: f64) -> f64 {
    stable_sigmoid(x)
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates for both weight matrices.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    m_w0: Array2<f64>,
    v_w0: Array2<f64>,
    m_w1: Array2<f64>,
    v_w1: Array2<f64>,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> AdamState {
        AdamState {
            step: 0,
            m_w0: Array2::zeros(model.w0.dim()),
            v_w0: Array2::zeros(model.w0.dim()),
            m_w1: Array2::zeros(model.w1.dim()),
            v_w1: Array2::zeros(model.w1.dim()),
        }
    }
}

/// One Adam update (beta1 = 0.9, beta2 = 0.999, eps = 1e-8) with bias
/// correction; deterministic given the state.
pub fn adam_step(
    model: &mut MlpModel,
    grads: &GradientSet,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if grads.d_w0.dim() != model.w0.dim() || grads.d_w1.dim() != model.w1.dim() {
        return Err(Error::Shape("gradient shapes do not match weights".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let correction1 = 1.0 - ADAM_BETA1.powi(t);
    let correction2 = 1.0 - ADAM_BETA2.powi(t);
    let update = |w: &mut Array2<f64>,
                  g: &Array2<f64>,
                  m: &mut Array2<f64>,
                  v: &mut Array2<f64>| {
        ndarray::Zip::from(w)
            .and(g)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            });
    };
    update(&mut model.w0, &grads.d_w0, &mut state.m_w0, &mut state.v_w0);
    update(&mut model.w1, &grads.d_w1, &mut state.m_w1, &mut state.v_w1);
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MPPRCKPT";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes the model (and optimizer state, when given) as a versioned
/// binary blob, plus a JSON sidecar of hyper-parameters at `<path>.json`.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &MlpModel,
    adam: Option<&AdamState>,
    sidecar: &serde_json::Value,
) -> Result<()> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::create(path).map_err(|e| Error::io(&display, e))?;
    let mut w = BufWriter::new(file);

    fn write_matrix<W: Write>(w: &mut W, m: &Array2<f64>) -> std::io::Result<()> {
        for v in m.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    (|| -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for dim in [model.n_features(), model.hidden(), model.n_outputs()] {
            w.write_all(&(dim as u64).to_le_bytes())?;
        }
        w.write_all(&model.dropout_rate.to_le_bytes())?;
        w.write_all(&model.l2_lambda.to_le_bytes())?;
        write_matrix(&mut w, &model.w0)?;
        write_matrix(&mut w, &model.w1)?;
        match adam {
            Some(state) => {
                w.write_all(&[1u8])?;
                w.write_all(&state.step.to_le_bytes())?;
                for m in [&state.m_w0, &state.v_w0, &state.m_w1, &state.v_w1] {
                    write_matrix(&mut w, m)?;
                }
            }
            None => w.write_all(&[0u8])?,
        }
        w.flush()
    })()
    .map_err(|e| Error::io(&display, e))?;

    let sidecar_path = format!("{display}.json");
    let text = serde_json::to_string_pretty(sidecar)
        .map_err(|e| Error::Checkpoint(format!("sidecar serialization: {e}")))?;
    std::fs::write(&sidecar_path, text).map_err(|e| Error::io(&sidecar_path, e))?;
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]. Returns the model,
/// the optimizer state when present, and the sidecar JSON (null when the
/// sidecar file is missing).
pub fn load_checkpoint(
    path: impl AsRef<Path>,
) -> Result<(MlpModel, Option<AdamState>, serde_json::Value)> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&display, e))?;
    let mut r = BufReader::new(file);

    fn read_exact_buf<const N: usize, R: Read>(r: &mut R, path: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
        Ok(buf)
    }
    fn read_matrix<R: Read>(r: &mut R, path: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut data = vec![0u8; rows * cols * 8];
        r.read_exact(&mut data).map_err(|e| Error::io(path, e))?;
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("chunk size")))
            .collect();
        Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| Error::Checkpoint(format!("matrix shape: {e}")))
    }

    let magic: [u8; 8] = read_exact_buf(&mut r, &display)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(read_exact_buf::<4, _>(&mut r, &display)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let f = u64::from_le_bytes(read_exact_buf::<8, _>(&mut r, &display)?) as usize;
    let h = u64::from_le_bytes(read_exact_buf::<8, _>(&mut r, &display)?) as usize;
    let c = u64::from_le_bytes(read_exact_buf::<8, _>(&mut r, &display)?) as usize;
    let dropout_rate = f64::from_le_bytes(read_exact_buf::<8, _>(&mut r, &display)?);
    let l2_lambda = f64::from_le_bytes(read_exact_buf::<8, _>(&mut r, &display)?);
    let w0 = read_matrix(&mut r, &display, f, h)?;
    let w1 = read_matrix(&mut r, &display, h, c)?;
    let model = MlpModel {
        w0,
        w1,
        dropout_rate,
        l2_lambda,
    };

    let flag: [u8; 1] = read_exact_buf(&mut r, &display)?;
    let adam = if flag[0] == 1 {
        let step = u64::from_le_bytes(read_exact_buf::<8, _>(&mut r, &display)?);
        Some(AdamState {
            step,
            m_w0: read_matrix(&mut r, &display, f, h)?,
            v_w0: read_matrix(&mut r, &display, f, h)?,
            m_w1: read_matrix(&mut r, &display, h, c)?,
            v_w1: read_matrix(&mut r, &display, h, c)?,
        })
    } else {
        None
    };

    let sidecar_path = format!("{display}.json");
    let sidecar = match std::fs::read_to_string(&sidecar_path) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("sidecar parse: {e}")))?,
        Err(_) => serde_json::Value::Null,
    };
    Ok((model, adam, sidecar))
}
