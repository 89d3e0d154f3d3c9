//! From-scratch one-hidden-layer MLP: hand-derived backpropagation for CCE
//! and MAE at a softmax head, bias-corrected ADAM, mini-batch training with
//! seeded shuffling, validation-loss early stopping and binary checkpoints.

use crate::calibration::binned_reliability;
use crate::datasets::LabeledDataset;
use crate::error::{Error, Result};
use crate::losses::LossId;
use crate::rng::{derive_stream, Rng};
use crate::simplex::{LabelId, ProbVector};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::io::Read;
use std::path::Path;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Negative slope; 0.01 is the pinned default.
    LeakyRelu(f64),
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(slope) => {
                if z >= 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
        }
    }
}

/// One-hidden-layer network with a softmax output head.
#[derive(Debug, Clone)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
    /// input_dim x hidden_dim.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// hidden_dim x class_count.
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub activation: Activation,
}

impl MlpModel {
    /// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)), biases zero.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        class_count: usize,
        activation: Activation,
        rng: &mut Rng,
    ) -> Self {
        assert!(input_dim > 0 && hidden_dim > 0 && class_count >= 2);
        let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
        };
        MlpModel {
            input_dim,
            hidden_dim,
            class_count,
            w1: uniform(input_dim, hidden_dim, input_dim),
            b1: Array1::zeros(hidden_dim),
            w2: uniform(hidden_dim, class_count, hidden_dim),
            b2: Array1::zeros(class_count),
            activation,
        }
    }

    /// All-zero weights; test hook producing uniform softmax outputs.
    pub fn zeroed(input_dim: usize, hidden_dim: usize, class_count: usize, activation: Activation) -> Self {
        MlpModel {
            input_dim,
            hidden_dim,
            class_count,
            w1: Array2::zeros((input_dim, hidden_dim)),
            b1: Array1::zeros(hidden_dim),
            w2: Array2::zeros((hidden_dim, class_count)),
            b2: Array1::zeros(class_count),
            activation,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn hidden(&self, batch: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let pre = batch.dot(&self.w1) + &self.b1;
        let act = pre.mapv(|z| self.activation.apply(z));
        (pre, act)
    }

    fn logits_from_hidden(&self, hidden_act: &Array2<f64>) -> Array2<f64> {
        hidden_act.dot(&self.w2) + &self.b2
    }

    /// Affine -> activation -> affine -> max-subtracted softmax. Each output
    /// row is a valid probability vector.
    pub fn forward(&self, batch: &Array2<f64>) -> Array2<f64> {
        assert_eq!(batch.ncols(), self.input_dim, "feature width mismatch");
        assert!(batch.iter().all(|x| x.is_finite()), "non-finite inputs");
        let (_, act) = self.hidden(batch);
        softmax(&self.logits_from_hidden(&act))
    }
}

fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|e| e / sum);
    }
    out
}

/// Parameter-shaped gradient bundle.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Mean batch loss and exact gradients of that mean for the trainer-supported
/// losses (CCE, MAE in its sum form).
pub fn loss_and_grad(
    model: &MlpModel,
    batch: &Array2<f64>,
    labels: &[LabelId],
    loss: LossId,
) -> Result<(f64, Gradients)> {
    if !matches!(loss, LossId::Cce | LossId::Mae) {
        return Err(Error::Unsupported(format!("trainer supports cce and mae, not {loss}")));
    }
    assert_eq!(batch.nrows(), labels.len());
    let n = batch.nrows() as f64;
    let (pre, act) = model.hidden(batch);
    let probs = softmax(&model.logits_from_hidden(&act));

    let mut total_loss = 0.0;
    let mut dlogits = Array2::<f64>::zeros(probs.raw_dim());
    for (i, &y) in labels.iter().enumerate() {
        let fy = probs[(i, y.index())];
        match loss {
            LossId::Cce => {
                total_loss += -fy.max(crate::losses::CCE_CLAMP).ln();
                // d/dz of -ln softmax_y collapses to probs - onehot.
                for j in 0..model.class_count {
                    dlogits[(i, j)] = (probs[(i, j)] - f64::from(j == y.index())) / n;
                }
            }
            LossId::Mae => {
                // sum_k |e_k - f_k| = 2 (1 - f_y) on the simplex.
                total_loss += 2.0 * (1.0 - fy);
                // Chain through the softmax Jacobian with dL/df = -2 e_y.
                for j in 0..model.class_count {
                    dlogits[(i, j)] = 2.0 * fy * (probs[(i, j)] - f64::from(j == y.index())) / n;
                }
            }
            _ => unreachable!(),
        }
    }

    let grad_w2 = act.t().dot(&dlogits);
    let grad_b2 = dlogits.sum_axis(Axis(0));
    let dhidden = dlogits.dot(&model.w2.t());
    let mut dpre = dhidden;
    ndarray::Zip::from(&mut dpre)
        .and(&pre)
        .for_each(|d, &z| *d *= model.activation.derivative(z));
    let grad_w1 = batch.t().dot(&dpre);
    let grad_b1 = dpre.sum_axis(Axis(0));

    Ok((
        total_loss / n,
        Gradients {
            w1: grad_w1,
            b1: grad_b1,
            w2: grad_w2,
            b2: grad_b2,
        },
    ))
}

/// Bias-corrected ADAM with (beta1, beta2, eps) = (0.9, 0.999, 1e-8).
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(model: &MlpModel, learning_rate: f64) -> Self {
        let zeros = Gradients {
            w1: Array2::zeros(model.w1.raw_dim()),
            b1: Array1::zeros(model.b1.raw_dim()),
            w2: Array2::zeros(model.w2.raw_dim()),
            b2: Array1::zeros(model.b2.raw_dim()),
        };
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update; rejects non-finite gradients with diagnostics rather than
    /// corrupting the parameters.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) -> Result<()> {
        let finite = grads.w1.iter().all(|g| g.is_finite())
            && grads.b1.iter().all(|g| g.is_finite())
            && grads.w2.iter().all(|g| g.is_finite())
            && grads.b2.iter().all(|g| g.is_finite());
        if !finite {
            return Err(Error::Unsupported(format!(
                "non-finite gradients at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        let lr = self.learning_rate;
        let (b1c, b2c, eps) = (self.beta1, self.beta2, self.epsilon);
        let update = |param: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1c * *m + (1.0 - b1c) * g;
            *v = b2c * *v + (1.0 - b2c) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *param -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, m), v), g) in model
            .w1
            .iter_mut()
            .zip(self.m.w1.iter_mut())
            .zip(self.v.w1.iter_mut())
            .zip(grads.w1.iter())
        {
            update(p, m, v, *g);
        }
        for (((p, m), v), g) in model
            .b1
            .iter_mut()
            .zip(self.m.b1.iter_mut())
            .zip(self.v.b1.iter_mut())
            .zip(grads.b1.iter())
        {
            update(p, m, v, *g);
        }
        for (((p, m), v), g) in model
            .w2
            .iter_mut()
            .zip(self.m.w2.iter_mut())
            .zip(self.v.w2.iter_mut())
            .zip(grads.w2.iter())
        {
            update(p, m, v, *g);
        }
        for (((p, m), v), g) in model
            .b2
            .iter_mut()
            .zip(self.m.b2.iter_mut())
            .zip(self.v.b2.iter_mut())
            .zip(grads.b2.iter())
        {
            update(p, m, v, *g);
        }
        Ok(())
    }
}

/// Initial weights: fresh random draw or a checkpoint on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "path")]
pub enum InitSource {
    Random,
    Checkpoint(std::path::PathBuf),
}

/// Validation-loss early stopping: off, or stop at the first evaluation where
/// the current loss exceeds (1 + threshold) times the running minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "threshold")]
pub enum EarlyStopping {
    Off,
    Threshold(f64),
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossId,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub activation: Activation,
    pub init: InitSource,
    pub early_stopping: EarlyStopping,
    /// Metrics are recorded every this many epochs (and at the last epoch).
    pub eval_interval: usize,
}

impl TrainConfig {
    fn check(&self, train_len: usize) -> Result<()> {
        if !matches!(self.loss, LossId::Cce | LossId::Mae) {
            return Err(Error::Config(format!("trainer supports cce and mae, not {}", self.loss)));
        }
        if self.batch_size == 0 || self.batch_size > train_len {
            return Err(Error::Config(format!(
                "batch size {} invalid for {train_len} training rows",
                self.batch_size
            )));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be positive".into()));
        }
        if let EarlyStopping::Threshold(t) = self.early_stopping {
            if t <= 0.0 {
                return Err(Error::Config("early-stopping threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One metrics row per evaluation epoch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_acc: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub test_acc: f64,
    pub test_loss: f64,
    pub test_ece: f64,
    pub test_entropy: f64,
}

/// Pinned CSV header for metrics streams.
pub const METRICS_CSV_HEADER: &str =
    "epoch,train_acc,train_loss,val_loss,test_acc,test_loss,test_ece,test_entropy";

pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.train_acc, r.train_loss, val, r.test_acc, r.test_loss, r.test_ece, r.test_entropy
        ));
    }
    out
}

/// Single-pass metrics of a model on a dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub ece: f64,
    pub mean_entropy: f64,
}

fn to_matrix(data: &LabeledDataset) -> Array2<f64> {
    let d = data.dim();
    let mut out = Array2::zeros((data.len(), d));
    for (i, row) in data.features.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            out[(i, j)] = x;
        }
    }
    out
}

fn eval_on_matrix(
    model: &MlpModel,
    features: &Array2<f64>,
    labels: &[LabelId],
    loss: LossId,
) -> Result<EvalMetrics> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("empty evaluation dataset".into()));
    }
    let k = model.class_count;
    let mut correct = 0usize;
    let mut loss_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut predictions = Vec::with_capacity(labels.len());
    for (chunk, chunk_labels) in features
        .axis_chunks_iter(Axis(0), 1024)
        .zip(labels.chunks(1024))
    {
        let probs = model.forward(&chunk.to_owned());
        for (row, &y) in probs.rows().into_iter().zip(chunk_labels) {
            let p = ProbVector::new(row.to_vec())?;
            if crate::simplex::argmax_class(&p) == y {
                correct += 1;
            }
            let fy = p.get(y);
            loss_sum += match loss {
                LossId::Cce => -fy.max(crate::losses::CCE_CLAMP).ln(),
                LossId::Mae => 2.0 * (1.0 - fy),
                _ => return Err(Error::Unsupported("evaluation supports cce and mae".into())),
            };
            entropy_sum += crate::simplex::entropy(&p);
            predictions.push((p, y));
        }
    }
    let n = labels.len() as f64;
    let reliability = binned_reliability(&predictions, 15)?;
    let _ = k;
    Ok(EvalMetrics {
        accuracy: correct as f64 / n,
        mean_loss: loss_sum / n,
        ece: reliability.ece,
        mean_entropy: entropy_sum / n,
    })
}

/// Evaluates accuracy, mean loss, 15-bin ECE and mean predictive entropy.
pub fn evaluate_model(model: &MlpModel, data: &LabeledDataset, loss: LossId) -> Result<EvalMetrics> {
    eval_on_matrix(model, &to_matrix(data), &data.labels, loss)
}

/// Train/validation/test splits handed to [`train_run`]. Validation may be
/// empty when early stopping is off.
pub struct DataSplit<'a> {
    pub train: &'a LabeledDataset,
    pub val: Option<&'a LabeledDataset>,
    pub test: &'a LabeledDataset,
}

/// Result of a training run: the final model, the best-validation snapshot
/// when early stopping was active, and the metrics stream.
pub struct TrainOutcome {
    pub final_model: MlpModel,
    pub best_model: Option<MlpModel>,
    pub metrics: Vec<MetricsRecord>,
    /// Epoch at which early stopping fired, if it did.
    pub stopped_epoch: Option<usize>,
}

impl TrainOutcome {
    /// The model selected by the protocol: the best-validation snapshot when
    /// early stopping ran, otherwise the final model.
    pub fn selected_model(&self) -> &MlpModel {
        self.best_model.as_ref().unwrap_or(&self.final_model)
    }
}

/// Mini-batch training with seeded in-epoch shuffling. With early stopping
/// on, validation loss is tracked at every evaluation epoch; training halts
/// once the current value exceeds (1 + threshold) times the running minimum
/// and the min-loss snapshot is reported as the best model.
pub fn train_run(config: &TrainConfig, data: &DataSplit) -> Result<TrainOutcome> {
    config.check(data.train.len())?;
    if matches!(config.early_stopping, EarlyStopping::Threshold(_)) && data.val.is_none() {
        return Err(Error::Config("early stopping requires a validation set".into()));
    }

    let train_x = to_matrix(data.train);
    let test_x = to_matrix(data.test);
    let val_x = data.val.map(to_matrix);

    let mut init_rng = derive_stream(config.seed, 0);
    let mut model = match &config.init {
        InitSource::Random => MlpModel::init(
            data.train.dim(),
            config.hidden_dim,
            data.train.k,
            config.activation,
            &mut init_rng,
        ),
        InitSource::Checkpoint(path) => {
            let (model, _) = load_checkpoint(path)?;
            if model.input_dim != data.train.dim() || model.class_count != data.train.k {
                return Err(Error::Checkpoint(format!(
                    "checkpoint shape ({}, {}) does not match data ({}, {})",
                    model.input_dim,
                    model.class_count,
                    data.train.dim(),
                    data.train.k
                )));
            }
            model
        }
    };

    let mut optimizer = AdamState::new(&model, config.learning_rate);
    let mut shuffle_rng = derive_stream(config.seed, 1);
    let mut metrics = Vec::new();
    let mut best: Option<(f64, MlpModel, usize)> = None;
    let mut stopped_epoch = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = gather_rows(&train_x, chunk);
            let batch_labels: Vec<LabelId> = chunk.iter().map(|&i| data.train.labels[i]).collect();
            let (_, grads) = loss_and_grad(&model, &batch, &batch_labels, config.loss)?;
            optimizer.step(&mut model, &grads)?;
        }

        if epoch % config.eval_interval == 0 || epoch == config.epochs {
            let train_metrics = eval_on_matrix(&model, &train_x, &data.train.labels, config.loss)?;
            let test_metrics = eval_on_matrix(&model, &test_x, &data.test.labels, config.loss)?;
            let val_loss = match (&val_x, data.val) {
                (Some(x), Some(val)) => {
                    Some(eval_on_matrix(&model, x, &val.labels, config.loss)?.mean_loss)
                }
                _ => None,
            };
            metrics.push(MetricsRecord {
                epoch,
                train_acc: train_metrics.accuracy,
                train_loss: train_metrics.mean_loss,
                val_loss,
                test_acc: test_metrics.accuracy,
                test_loss: test_metrics.mean_loss,
                test_ece: test_metrics.ece,
                test_entropy: test_metrics.mean_entropy,
            });

            if let (EarlyStopping::Threshold(threshold), Some(current)) =
                (config.early_stopping, val_loss)
            {
                let running_min = best.as_ref().map(|(loss, _, _)| *loss);
                if running_min.is_none() || current < running_min.unwrap() {
                    best = Some((current, model.clone(), epoch));
                }
                if let Some(min) = running_min {
                    if current > (1.0 + threshold) * min {
                        stopped_epoch = Some(epoch);
                        break;
                    }
                }
            }
        }
    }

    Ok(TrainOutcome {
        final_model: model,
        best_model: best.map(|(_, m, _)| m),
        metrics,
        stopped_epoch,
    })
}

fn gather_rows(matrix: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((rows.len(), matrix.ncols()));
    for (dst, &src) in rows.iter().enumerate() {
        out.row_mut(dst).assign(&matrix.row(src));
    }
    out
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"NLCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CheckpointHeader {
    input_dim: usize,
    hidden_dim: usize,
    class_count: usize,
    activation: Activation,
    seed: u64,
    config_hash: String,
}

/// Byte layout: magic "NLCK", u32 LE version, u32 LE header length, JSON
/// header, then the weight payload as little-endian f64: w1 row-major, b1,
/// w2 row-major, b2.
pub fn save_checkpoint(path: &Path, model: &MlpModel, seed: u64, config_hash: &str) -> Result<()> {
    let header = serde_json::to_vec(&CheckpointHeader {
        input_dim: model.input_dim,
        hidden_dim: model.hidden_dim,
        class_count: model.class_count,
        activation: model.activation,
        seed,
        config_hash: config_hash.to_string(),
    })?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    out.write_u32::<LittleEndian>(header.len() as u32)?;
    out.extend_from_slice(&header);
    for &w in model.w1.iter().chain(model.b1.iter()).chain(model.w2.iter()).chain(model.b2.iter()) {
        out.write_f64::<LittleEndian>(w)?;
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a checkpoint; returns the model and the stored config hash.
pub fn load_checkpoint(path: &Path) -> Result<(MlpModel, String)> {
    let bytes = std::fs::read(path)?;
    let mut cursor = std::io::Cursor::new(&bytes);
    let mut magic = [0u8; 4];
    cursor.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = cursor.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = cursor.read_u32::<LittleEndian>()? as usize;
    let mut header_bytes = vec![0u8; header_len];
    cursor.read_exact(&mut header_bytes).map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
    let total = header.input_dim * header.hidden_dim
        + header.hidden_dim
        + header.hidden_dim * header.class_count
        + header.class_count;
    let mut weights = Vec::with_capacity(total);
    for _ in 0..total {
        weights.push(
            cursor
                .read_f64::<LittleEndian>()
                .map_err(|_| Error::Checkpoint("truncated weight payload".into()))?,
        );
    }
    let mut it = weights.into_iter();
    fn take2(it: &mut impl Iterator<Item = f64>, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_vec((rows, cols), it.take(rows * cols).collect()).expect("sized above")
    }
    let w1 = take2(&mut it.by_ref(), header.input_dim, header.hidden_dim);
    let b1 = Array1::from_vec(it.by_ref().take(header.hidden_dim).collect());
    let w2 = take2(&mut it.by_ref(), header.hidden_dim, header.class_count);
    let b2 = Array1::from_vec(it.by_ref().take(header.class_count).collect());
    Ok((
        MlpModel {
            input_dim: header.input_dim,
            hidden_dim: header.hidden_dim,
            class_count: header.class_count,
            w1,
            b1,
            w2,
            b2,
            activation: header.activation,
        },
        header.config_hash,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_circles, make_noisy_dataset, split, DatasetMeta};
    use crate::noise::NoiseModel;
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;

    fn tiny_batch(rng: &mut Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn init_deterministic_and_counted() {
        let a = MlpModel::init(784, 500, 10, Activation::LeakyRelu(0.01), &mut seeded(1));
        let b = MlpModel::init(784, 500, 10, Activation::LeakyRelu(0.01), &mut seeded(1));
        assert_eq!(a.w1, b.w1);
        assert_eq!(a.parameter_count(), 397_510);
    }

    #[test]
    fn zeroed_model_outputs_uniform() {
        let model = MlpModel::zeroed(4, 8, 3, Activation::Relu);
        let probs = model.forward(&tiny_batch(&mut seeded(2), 5, 4));
        for row in probs.rows() {
            for &p in row {
                assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn forward_rows_are_prob_vectors() {
        let model = MlpModel::init(6, 10, 4, Activation::LeakyRelu(0.01), &mut seeded(3));
        let probs = model.forward(&tiny_batch(&mut seeded(4), 32, 6));
        for row in probs.rows() {
            assert!(ProbVector::new(row.to_vec()).is_ok());
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let model = MlpModel::init(3, 5, 3, Activation::Relu, &mut seeded(5));
        let batch = tiny_batch(&mut seeded(6), 4, 3);
        let base = model.forward(&batch);
        let mut shifted = model.clone();
        shifted.b2 += 7.5;
        let out = shifted.forward(&batch);
        for (a, b) in base.iter().zip(out.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn softmax_handles_extreme_logits() {
        let mut model = MlpModel::zeroed(2, 2, 3, Activation::Relu);
        model.b2 = Array1::from_vec(vec![50.0, -50.0, 0.0]);
        let probs = model.forward(&tiny_batch(&mut seeded(7), 3, 2));
        for row in probs.rows() {
            assert!(ProbVector::new(row.to_vec()).is_ok());
        }
    }

    /// Central-difference gradient of the mean batch loss w.r.t. every
    /// parameter; the independent oracle for the analytic backward pass.
    fn finite_difference_check(loss: LossId, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        let mut model = MlpModel::init(5, 4, 3, Activation::LeakyRelu(0.01), &mut rng);
        let batch = tiny_batch(&mut rng, 6, 5);
        let labels: Vec<LabelId> = (0..6).map(|i| LabelId::new(i % 3 + 1, 3).unwrap()).collect();
        let (_, grads) = loss_and_grad(&model, &batch, &labels, loss).unwrap();
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        let coords: Vec<(usize, usize)> = (0..5).flat_map(|i| (0..4).map(move |j| (i, j))).collect();
        for &(i, j) in &coords {
            let orig = model.w1[(i, j)];
            model.w1[(i, j)] = orig + h;
            let (lp, _) = loss_and_grad(&model, &batch, &labels, loss).unwrap();
            model.w1[(i, j)] = orig - h;
            let (lm, _) = loss_and_grad(&model, &batch, &labels, loss).unwrap();
            model.w1[(i, j)] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads.w1[(i, j)];
            let denom = numeric.abs().max(analytic.abs()).max(1e-8);
            max_rel = max_rel.max((numeric - analytic).abs() / denom);
        }
        for j in 0..3 {
            let orig = model.b2[j];
            model.b2[j] = orig + h;
            let (lp, _) = loss_and_grad(&model, &batch, &labels, loss).unwrap();
            model.b2[j] = orig - h;
            let (lm, _) = loss_and_grad(&model, &batch, &labels, loss).unwrap();
            model.b2[j] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = numeric.abs().max(grads.b2[j].abs()).max(1e-8);
            max_rel = max_rel.max((numeric - grads.b2[j]).abs() / denom);
        }
        max_rel
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            assert!(finite_difference_check(LossId::Cce, 100 + seed) <= 1e-4);
            assert!(finite_difference_check(LossId::Mae, 200 + seed) <= 1e-4);
        }
    }

    #[test]
    fn perfect_prediction_has_zero_cce_gradient() {
        let mut model = MlpModel::zeroed(2, 2, 2, Activation::Relu);
        model.b2 = Array1::from_vec(vec![60.0, -60.0]);
        let batch = Array2::zeros((4, 2));
        let labels = vec![LabelId::new(1, 2).unwrap(); 4];
        let (loss, grads) = loss_and_grad(&model, &batch, &labels, LossId::Cce).unwrap();
        assert!(loss < 1e-9);
        let norm: f64 = grads.w2.iter().chain(grads.b2.iter()).map(|g| g * g).sum::<f64>().sqrt();
        assert!(norm <= 1e-9);
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let model0 = MlpModel::init(3, 4, 2, Activation::Relu, &mut seeded(8));
        let mut model = model0.clone();
        let mut adam = AdamState::new(&model, 0.01);
        let zeros = Gradients {
            w1: Array2::zeros(model.w1.raw_dim()),
            b1: Array1::zeros(model.b1.raw_dim()),
            w2: Array2::zeros(model.w2.raw_dim()),
            b2: Array1::zeros(model.b2.raw_dim()),
        };
        adam.step(&mut model, &zeros).unwrap();
        assert_eq!(model.w1, model0.w1);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_constant_gradient_approaches_lr_steps() {
        let mut model = MlpModel::zeroed(2, 2, 2, Activation::Relu);
        let lr = 0.003;
        let mut adam = AdamState::new(&model, lr);
        let grads = Gradients {
            w1: Array2::from_elem(model.w1.raw_dim(), 0.37),
            b1: Array1::from_elem(model.b1.raw_dim(), 0.37),
            w2: Array2::from_elem(model.w2.raw_dim(), 0.37),
            b2: Array1::from_elem(model.b2.raw_dim(), 0.37),
        };
        let mut prev = model.w1[(0, 0)];
        for _ in 0..500 {
            adam.step(&mut model, &grads).unwrap();
            let step = (model.w1[(0, 0)] - prev).abs();
            prev = model.w1[(0, 0)];
            if adam.step > 100 {
                assert_abs_diff_eq!(step, lr, epsilon = lr * 1e-3);
            }
        }
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut model = MlpModel::zeroed(2, 2, 2, Activation::Relu);
        let mut adam = AdamState::new(&model, 0.01);
        let mut grads = Gradients {
            w1: Array2::zeros(model.w1.raw_dim()),
            b1: Array1::zeros(model.b1.raw_dim()),
            w2: Array2::zeros(model.w2.raw_dim()),
            b2: Array1::zeros(model.b2.raw_dim()),
        };
        grads.w1[(0, 0)] = f64::NAN;
        assert!(adam.step(&mut model, &grads).is_err());
    }

    fn circle_split(seed: u64) -> (LabeledDataset, LabeledDataset, LabeledDataset) {
        let data = make_circles(600, 0.1, 0.5, &mut seeded(seed)).unwrap();
        split(&data, (400, 100, 100), &mut seeded(seed + 1)).unwrap()
    }
    use crate::datasets::LabeledDataset;

    fn quick_config(epochs: usize) -> TrainConfig {
        TrainConfig {
            loss: LossId::Cce,
            epochs,
            batch_size: 100,
            hidden_dim: 16,
            learning_rate: 0.05,
            seed: 99,
            activation: Activation::Relu,
            init: InitSource::Random,
            early_stopping: EarlyStopping::Off,
            eval_interval: 1,
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let (train, val, test) = circle_split(20);
        let outcome = train_run(
            &quick_config(0),
            &DataSplit { train: &train, val: Some(&val), test: &test },
        )
        .unwrap();
        assert!(outcome.metrics.is_empty());
        let reference = MlpModel::init(2, 16, 2, Activation::Relu, &mut derive_stream(99, 0));
        assert_eq!(outcome.final_model.w1, reference.w1);
    }

    #[test]
    fn training_is_deterministic() {
        let (train, val, test) = circle_split(21);
        let split = DataSplit { train: &train, val: Some(&val), test: &test };
        let a = train_run(&quick_config(5), &split).unwrap();
        let b = train_run(&quick_config(5), &split).unwrap();
        for (x, y) in a.metrics.iter().zip(&b.metrics) {
            assert_eq!(x.train_loss, y.train_loss);
            assert_eq!(x.test_acc, y.test_acc);
        }
        assert_eq!(a.final_model.w1, b.final_model.w1);
    }

    #[test]
    fn learns_circles_quickly() {
        let (train, val, test) = circle_split(22);
        let mut config = quick_config(40);
        config.early_stopping = EarlyStopping::Threshold(0.10);
        let outcome = train_run(
            &config,
            &DataSplit { train: &train, val: Some(&val), test: &test },
        )
        .unwrap();
        let metrics = evaluate_model(outcome.selected_model(), &test, LossId::Cce).unwrap();
        assert!(metrics.accuracy >= 0.9, "test accuracy {}", metrics.accuracy);
    }

    #[test]
    fn uniform_model_metrics() {
        let model = MlpModel::zeroed(2, 4, 2, Activation::Relu);
        let labels: Vec<LabelId> = (0..200).map(|i| LabelId::new(i % 2 + 1, 2).unwrap()).collect();
        let data = LabeledDataset {
            features: vec![vec![0.3, -0.4]; 200],
            labels,
            clean_labels: None,
            k: 2,
            meta: DatasetMeta::default(),
        };
        let metrics = evaluate_model(&model, &data, LossId::Cce).unwrap();
        assert_abs_diff_eq!(metrics.mean_entropy, std::f64::consts::LN_2, epsilon = 1e-9);
        assert_abs_diff_eq!(metrics.accuracy, 0.5, epsilon = 1e-12);
        let again = evaluate_model(&model, &data, LossId::Cce).unwrap();
        assert_eq!(metrics.accuracy, again.accuracy);
        assert_eq!(metrics.mean_loss, again.mean_loss);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.nlck");
        let model = MlpModel::init(7, 5, 3, Activation::LeakyRelu(0.01), &mut seeded(30));
        save_checkpoint(&path, &model, 30, "abc123").unwrap();
        let (back, hash) = load_checkpoint(&path).unwrap();
        assert_eq!(hash, "abc123");
        assert_eq!(back.w1, model.w1);
        assert_eq!(back.b2, model.b2);
        assert_eq!(back.activation, model.activation);
    }

    #[test]
    fn checkpoint_init_resumes_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("warm.nlck");
        let (train, val, test) = circle_split(23);
        let warm = train_run(
            &quick_config(3),
            &DataSplit { train: &train, val: Some(&val), test: &test },
        )
        .unwrap();
        save_checkpoint(&path, &warm.final_model, 99, "warm").unwrap();

        let mut config = quick_config(0);
        config.init = InitSource::Checkpoint(path);
        let resumed = train_run(
            &config,
            &DataSplit { train: &train, val: Some(&val), test: &test },
        )
        .unwrap();
        assert_eq!(resumed.final_model.w1, warm.final_model.w1);
    }

    #[test]
    fn noisy_training_keeps_clean_labels_for_eval() {
        let (train, _, _) = circle_split(24);
        let noise = NoiseModel::symmetric(0.2, 2).unwrap();
        let noisy = make_noisy_dataset(&train, &noise, &mut seeded(25), 25).unwrap();
        assert!(noisy.clean_labels.is_some());
        let flips = noisy
            .labels
            .iter()
            .zip(noisy.clean_labels.as_ref().unwrap())
            .filter(|(a, b)| a != b)
            .count();
        assert!(flips > 0);
    }

    #[test]
    fn metrics_csv_header_pinned() {
        let record = MetricsRecord {
            epoch: 1,
            train_acc: 0.5,
            train_loss: 0.7,
            val_loss: None,
            test_acc: 0.5,
            test_loss: 0.7,
            test_ece: 0.1,
            test_entropy: 0.6,
        };
        let csv = metrics_to_csv(&[record]);
        assert!(csv.starts_with(
            "epoch,train_acc,train_loss,val_loss,test_acc,test_loss,test_ece,test_entropy\n"
        ));
        assert!(csv.contains("1,0.5,0.7,,0.5,0.7,0.1,0.6"));
    }
}
