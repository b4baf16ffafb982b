//! Dense feedforward regression network, written out explicitly so the
//! gradients stay inspectable: affine -> ReLU -> inverted dropout per hidden
//! layer, a scalar affine output, squared-error loss, Adam updates, and
//! early stopping with best-epoch weight restoration.
//!
//! Everything is seed-determined: He-uniform initialization, epoch shuffles,
//! and dropout masks all draw from one ChaCha8 stream per training run.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::rng_from_seed;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {found} columns, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training set is empty or too small to reserve a validation slice")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Hyperparameters for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden_layers: Vec<usize>,
    pub dropout: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![256, 128],
            dropout: 0.0,
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 200,
            patience: 2,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn layers_label(&self) -> String {
        self.hidden_layers
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }

    /// Total parameter count for a given input width.
    pub fn param_count(&self, input_dim: usize) -> usize {
        let mut total = 0;
        let mut prev = input_dim;
        for &w in &self.hidden_layers {
            total += prev * w + w;
            prev = w;
        }
        total + prev + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    w: Array2<f64>, // out x in
    b: Array1<f64>,
}

/// The network: hidden layers then a scalar output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub config: MlpConfig,
    input_dim: usize,
    layers: Vec<Layer>,
}

/// Everything backward needs from the matching forward pass.
pub struct ForwardCache {
    /// Input to each layer (index 0 is the batch itself).
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    zs: Vec<Array2<f64>>,
    /// Inverted-dropout masks (scale baked in), one per hidden layer.
    masks: Vec<Option<Array2<f64>>>,
    batch: usize,
}

/// Per-parameter gradients in layer order.
pub struct Gradients {
    pub dw: Vec<Array2<f64>>,
    pub db: Vec<Array1<f64>>,
}

/// Summary of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_val_loss: f64,
    pub train_loss_history: Vec<f64>,
    pub val_loss_history: Vec<f64>,
}

impl Mlp {
    /// He-uniform initialization: weights ~ U(-b, b) with b = sqrt(6/fan_in),
    /// biases zero. Fully determined by the RNG state.
    pub fn init(config: MlpConfig, input_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(input_dim >= 1, "input_dim must be >= 1");
        assert!(config.dropout < 1.0 && config.dropout >= 0.0, "dropout must be in [0,1)");
        let mut dims = vec![input_dim];
        dims.extend(&config.hidden_layers);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..=bound));
                Layer {
                    w,
                    b: Array1::zeros(fan_out),
                }
            })
            .collect();
        Self {
            config,
            input_dim,
            layers,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Largest weight magnitude (used by init-bound checks).
    pub fn max_weight_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter())
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn biases_all_zero(&self) -> bool {
        self.layers.iter().all(|l| l.b.iter().all(|&v| v == 0.0))
    }

    /// Batched forward pass. In train mode hidden activations pass through
    /// inverted dropout (keep-prob 1-p, scale 1/(1-p)); eval mode applies
    /// neither the mask nor the scale.
    pub fn forward(
        &self,
        x: &Array2<f64>,
        train_mode: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array1<f64>, ForwardCache), ModelError> {
        if x.ncols() != self.input_dim {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim,
                found: x.ncols(),
            });
        }
        let n_hidden = self.layers.len() - 1;
        let p = self.config.dropout;
        let mut mask_rng = rng;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut zs = Vec::with_capacity(n_hidden);
        let mut masks = Vec::with_capacity(n_hidden);
        let mut a = x.clone();
        for (li, layer) in self.layers[..n_hidden].iter().enumerate() {
            inputs.push(a.clone());
            let z = a.dot(&layer.w.t()) + &layer.b;
            let mut act = z.mapv(|v| v.max(0.0));
            let mask = if train_mode && p > 0.0 {
                let rng = mask_rng
                    .as_mut()
                    .unwrap_or_else(|| panic!("dropout in train mode requires an RNG (layer {li})"));
                let keep = 1.0 - p;
                let m = Array2::from_shape_fn(act.raw_dim(), |_| {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                act *= &m;
                Some(m)
            } else {
                None
            };
            zs.push(z);
            masks.push(mask);
            a = act;
        }
        inputs.push(a.clone());
        let out_layer = &self.layers[n_hidden];
        let pred = a.dot(&out_layer.w.t()) + &out_layer.b;
        let pred = pred.index_axis(Axis(1), 0).to_owned();
        Ok((
            pred,
            ForwardCache {
                inputs,
                zs,
                masks,
                batch: x.nrows(),
            },
        ))
    }

    /// Gradients of the batch-mean loss L = (1/m) sum over rows of
    /// 0.5*(pred - y)^2, given `residual = pred - y` from the matching
    /// forward pass. Dropout masks recorded in the cache are respected.
    pub fn backward(&self, cache: &ForwardCache, residual: &Array1<f64>) -> Gradients {
        let m = cache.batch as f64;
        let n_layers = self.layers.len();
        let mut dw = Vec::with_capacity(n_layers);
        let mut db = Vec::with_capacity(n_layers);

        // output layer: delta has shape (batch, 1)
        let mut delta = residual.mapv(|r| r / m).insert_axis(Axis(1));
        for li in (0..n_layers).rev() {
            let input = &cache.inputs[li];
            dw.push(delta.t().dot(input));
            db.push(delta.sum_axis(Axis(0)));
            if li == 0 {
                break;
            }
            // propagate to the previous hidden layer
            let mut upstream = delta.dot(&self.layers[li].w);
            if let Some(mask) = &cache.masks[li - 1] {
                upstream *= mask;
            }
            let relu_gate = cache.zs[li - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            upstream *= &relu_gate;
            delta = upstream;
        }
        dw.reverse();
        db.reverse();
        Gradients { dw, db }
    }

    /// Eval-mode predictions, one score per row.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array1<f64>, ModelError> {
        Ok(self.forward(x, false, None)?.0)
    }

    fn snapshot(&self) -> Vec<Layer> {
        self.layers.clone()
    }

    fn restore(&mut self, snapshot: Vec<Layer>) {
        self.layers = snapshot;
    }

    fn params_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
    }
}

fn batch_loss(pred: &Array1<f64>, y: &Array1<f64>) -> f64 {
    let m = pred.len() as f64;
    pred.iter()
        .zip(y.iter())
        .map(|(p, t)| 0.5 * (p - t) * (p - t))
        .sum::<f64>()
        / m
}

struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: usize,
}

impl AdamState {
    fn new(mlp: &Mlp) -> Self {
        Self {
            m_w: mlp.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            v_w: mlp.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            m_b: mlp.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
            v_b: mlp.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, mlp: &mut Mlp, grads: &Gradients, lr: f64) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - BETA1.powi(self.t as i32);
        let bc2 = 1.0 - BETA2.powi(self.t as i32);
        for (li, layer) in mlp.layers.iter_mut().enumerate() {
            let gw = &grads.dw[li];
            self.m_w[li].zip_mut_with(gw, |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            self.v_w[li].zip_mut_with(gw, |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            let (mw, vw) = (&self.m_w[li], &self.v_w[li]);
            ndarray::Zip::from(&mut layer.w)
                .and(mw)
                .and(vw)
                .for_each(|w, &m, &v| {
                    *w -= lr * (m / bc1) / ((v / bc2).sqrt() + EPS);
                });
            let gb = &grads.db[li];
            self.m_b[li].zip_mut_with(gb, |m, &g| *m = BETA1 * *m + (1.0 - BETA1) * g);
            self.v_b[li].zip_mut_with(gb, |v, &g| *v = BETA2 * *v + (1.0 - BETA2) * g * g);
            let (mb, vb) = (&self.m_b[li], &self.v_b[li]);
            ndarray::Zip::from(&mut layer.b)
                .and(mb)
                .and(vb)
                .for_each(|b, &m, &v| {
                    *b -= lr * (m / bc1) / ((v / bc2).sqrt() + EPS);
                });
        }
    }
}

/// Mini-batch training with Adam and early stopping.
///
/// Targets are expected on the z-scored scale. The last 10% of a seeded
/// shuffle of the rows (at least one row) is reserved as the validation
/// slice for early stopping; training stops when validation loss has not
/// improved for `patience` consecutive epochs, and the best-epoch weights
/// are restored.
pub fn train(mlp: &mut Mlp, x: &Array2<f64>, y: &Array1<f64>) -> Result<TrainReport, ModelError> {
    if x.nrows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.ncols() != mlp.input_dim {
        return Err(ModelError::DimensionMismatch {
            expected: mlp.input_dim,
            found: x.ncols(),
        });
    }
    let n = x.nrows();
    let n_val = (n / 10).max(1);
    if n < 2 || n_val >= n {
        return Err(ModelError::EmptyTrainingSet);
    }

    let seed = crate::rng::derive_seed(mlp.config.seed, "train");
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    shuffle(&mut order, &mut rng);
    let (train_rows, val_rows) = order.split_at(n - n_val);
    let take = |rows: &[usize]| -> (Array2<f64>, Array1<f64>) {
        let xs = Array2::from_shape_fn((rows.len(), x.ncols()), |(i, j)| x[(rows[i], j)]);
        let ys = Array1::from_iter(rows.iter().map(|&i| y[i]));
        (xs, ys)
    };
    let (x_train, y_train) = take(train_rows);
    let (x_val, y_val) = take(val_rows);

    let mut adam = AdamState::new(mlp);
    let batch_size = mlp.config.batch_size.max(1);
    let lr = mlp.config.learning_rate;

    let mut best_val = f64::INFINITY;
    let mut best_state: Option<Vec<Layer>> = None;
    let mut bad_epochs = 0usize;
    let mut train_hist = Vec::new();
    let mut val_hist = Vec::new();
    let mut epochs_run = 0usize;

    let mut idx: Vec<usize> = (0..x_train.nrows()).collect();
    for epoch in 1..=mlp.config.max_epochs {
        epochs_run = epoch;
        shuffle(&mut idx, &mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in idx.chunks(batch_size).enumerate() {
            let xb = Array2::from_shape_fn((chunk.len(), x_train.ncols()), |(i, j)| {
                x_train[(chunk[i], j)]
            });
            let yb = Array1::from_iter(chunk.iter().map(|&i| y_train[i]));
            let (pred, cache) = mlp.forward(&xb, true, Some(&mut rng))?;
            let loss = batch_loss(&pred, &yb);
            if !loss.is_finite() {
                return Err(ModelError::NonFiniteLoss { epoch, batch: bi });
            }
            epoch_loss += loss;
            batches += 1;
            let residual = &pred - &yb;
            let grads = mlp.backward(&cache, &residual);
            adam.step(mlp, &grads, lr);
        }
        debug_assert!(mlp.params_finite(), "parameters diverged at epoch {epoch}");
        train_hist.push(epoch_loss / batches.max(1) as f64);

        let (val_pred, _) = mlp.forward(&x_val, false, None)?;
        let val_loss = batch_loss(&val_pred, &y_val);
        if !val_loss.is_finite() {
            return Err(ModelError::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        val_hist.push(val_loss);

        if val_loss < best_val {
            best_val = val_loss;
            best_state = Some(mlp.snapshot());
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= mlp.config.patience {
                break;
            }
        }
    }
    if let Some(state) = best_state {
        mlp.restore(state);
    }
    Ok(TrainReport {
        epochs_run,
        best_val_loss: best_val,
        train_loss_history: train_hist,
        val_loss_history: val_hist,
    })
}

/// Fisher-Yates on the given RNG so shuffles stay ChaCha-stable.
fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

// ---- checkpointing ----

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

/// Versioned JSON container for a trained model.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: MlpConfig,
    pub input_dim: usize,
    pub feature_space_hash: u64,
    layers: Vec<CheckpointLayer>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Mlp {
    pub fn to_checkpoint(&self, feature_space_hash: u64) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            input_dim: self.input_dim,
            feature_space_hash,
            layers: self
                .layers
                .iter()
                .map(|l| CheckpointLayer {
                    w: l.w.rows().into_iter().map(|r| r.to_vec()).collect(),
                    b: l.b.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self, ModelError> {
        if cp.version != CHECKPOINT_VERSION {
            return Err(ModelError::BadCheckpoint(format!(
                "unsupported checkpoint version {}",
                cp.version
            )));
        }
        let mut layers = Vec::with_capacity(cp.layers.len());
        for l in cp.layers {
            let rows = l.w.len();
            let cols = l.w.first().map_or(0, Vec::len);
            if l.w.iter().any(|r| r.len() != cols) || l.b.len() != rows {
                return Err(ModelError::BadCheckpoint("ragged layer arrays".into()));
            }
            let flat: Vec<f64> = l.w.into_iter().flatten().collect();
            let w = Array2::from_shape_vec((rows, cols), flat)
                .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
            layers.push(Layer {
                w,
                b: Array1::from_vec(l.b),
            });
        }
        if layers.is_empty() {
            return Err(ModelError::BadCheckpoint("no layers".into()));
        }
        Ok(Self {
            input_dim: cp.input_dim,
            config: cp.config,
            layers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cfg(layers: &[usize], dropout: f64, seed: u64) -> MlpConfig {
        MlpConfig {
            hidden_layers: layers.to_vec(),
            dropout,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Mlp::init(cfg(&[8, 4], 0.0, 7), 10, &mut rng_from_seed(7));
        let b = Mlp::init(cfg(&[8, 4], 0.0, 7), 10, &mut rng_from_seed(7));
        assert_eq!(a, b);
        assert!(a.biases_all_zero());
        // every layer bound is at most sqrt(6/min_fan_in); first layer dominates here
        assert!(a.max_weight_abs() <= (6.0f64 / 4.0).sqrt() + 1e-12);
    }

    #[test]
    fn constant_output_when_weights_zero() {
        let mut mlp = Mlp::init(cfg(&[3], 0.0, 1), 2, &mut rng_from_seed(1));
        for l in &mut mlp.layers {
            l.w.fill(0.0);
        }
        mlp.layers.last_mut().unwrap().b[0] = 4.5;
        let x = array![[1.0, -2.0], [100.0, 3.0]];
        let pred = mlp.predict(&x).unwrap();
        assert_abs_diff_eq!(pred[0], 4.5);
        assert_abs_diff_eq!(pred[1], 4.5);
    }

    #[test]
    fn dropout_zero_makes_train_and_eval_agree() {
        let mlp = Mlp::init(cfg(&[6, 3], 0.0, 3), 4, &mut rng_from_seed(3));
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i as f64) - (j as f64) / 2.0);
        let (train_pred, _) = mlp.forward(&x, true, Some(&mut rng_from_seed(9))).unwrap();
        let (eval_pred, _) = mlp.forward(&x, false, None).unwrap();
        for (a, b) in train_pred.iter().zip(eval_pred.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn hand_traced_tiny_net() {
        // 2 -> 1 -> 1 with fixed weights: hidden z = 1*x0 + 0.5*x1 + 0.25
        let mut mlp = Mlp::init(cfg(&[1], 0.0, 1), 2, &mut rng_from_seed(1));
        mlp.layers[0].w = array![[1.0, 0.5]];
        mlp.layers[0].b = array![0.25];
        mlp.layers[1].w = array![[2.0]];
        mlp.layers[1].b = array![-1.0];
        // x = [1, -2]: z = 1 - 1 + 0.25 = 0.25, relu 0.25, out = 0.5 - 1 = -0.5
        let pred = mlp.predict(&array![[1.0, -2.0]]).unwrap();
        assert_abs_diff_eq!(pred[0], -0.5, epsilon = 1e-15);
        // x = [-1, 0]: z = -0.75, relu 0 (dead), out = -1
        let pred = mlp.predict(&array![[-1.0, 0.0]]).unwrap();
        assert_abs_diff_eq!(pred[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_net_closed_form_gradient() {
        // no hidden layers: pred = w.x + b, L = 0.5*(pred-y)^2 for one row
        let mut mlp = Mlp::init(cfg(&[], 0.0, 1), 3, &mut rng_from_seed(1));
        mlp.layers[0].w = array![[0.5, -1.0, 2.0]];
        mlp.layers[0].b = array![0.1];
        let x = array![[1.0, 2.0, 3.0]];
        let y = array![1.0];
        let (pred, cache) = mlp.forward(&x, true, None).unwrap();
        let residual = &pred - &y;
        let grads = mlp.backward(&cache, &residual);
        let r = pred[0] - 1.0;
        for j in 0..3 {
            assert_abs_diff_eq!(grads.dw[0][(0, j)], r * x[(0, j)], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(grads.db[0][0], r, epsilon = 1e-12);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        let mut mlp = Mlp::init(cfg(&[1], 0.0, 1), 1, &mut rng_from_seed(1));
        mlp.layers[0].w = array![[1.0]];
        mlp.layers[0].b = array![0.0];
        mlp.layers[1].w = array![[1.0]];
        mlp.layers[1].b = array![0.0];
        let x = array![[-3.0]]; // pre-activation negative: unit is dead
        let y = array![5.0];
        let (pred, cache) = mlp.forward(&x, true, None).unwrap();
        let grads = mlp.backward(&cache, &(&pred - &y));
        assert_eq!(grads.dw[0][(0, 0)], 0.0);
        assert_eq!(grads.db[0][0], 0.0);
    }

    fn finite_diff_check(layers: &[usize], input_dim: usize, seed: u64) -> f64 {
        let mut mlp = Mlp::init(cfg(layers, 0.0, seed), input_dim, &mut rng_from_seed(seed));
        let mut data_rng = rng_from_seed(seed ^ 0xABCD);
        let x = Array2::from_shape_fn((4, input_dim), |_| data_rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(4, |_| data_rng.gen_range(-1.0..1.0));
        let (pred, cache) = mlp.forward(&x, true, None).unwrap();
        let grads = mlp.backward(&cache, &(&pred - &y));

        let eps = 1e-5;
        let mut max_rel = 0.0f64;
        let loss_of = |mlp: &Mlp| {
            let (p, _) = mlp.forward(&x, true, None).unwrap();
            batch_loss(&p, &y)
        };
        for li in 0..mlp.layers.len() {
            let shape = mlp.layers[li].w.raw_dim();
            for r in 0..shape[0] {
                for c in 0..shape[1] {
                    let orig = mlp.layers[li].w[(r, c)];
                    mlp.layers[li].w[(r, c)] = orig + eps;
                    let lp = loss_of(&mlp);
                    mlp.layers[li].w[(r, c)] = orig - eps;
                    let lm = loss_of(&mlp);
                    mlp.layers[li].w[(r, c)] = orig;
                    let fd = (lp - lm) / (2.0 * eps);
                    let bp = grads.dw[li][(r, c)];
                    let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-8);
                    max_rel = max_rel.max(rel);
                }
            }
            for r in 0..mlp.layers[li].b.len() {
                let orig = mlp.layers[li].b[r];
                mlp.layers[li].b[r] = orig + eps;
                let lp = loss_of(&mlp);
                mlp.layers[li].b[r] = orig - eps;
                let lm = loss_of(&mlp);
                mlp.layers[li].b[r] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let bp = grads.db[li][r];
                let rel = (fd - bp).abs() / fd.abs().max(bp.abs()).max(1e-8);
                max_rel = max_rel.max(rel);
            }
        }
        max_rel
    }

    #[test]
    fn gradients_match_finite_differences() {
        let err = finite_diff_check(&[8, 4], 10, 42);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn early_stopping_rules() {
        // strictly worsening validation loss stops after 1 best + patience bad epochs
        let mut mlp = Mlp::init(
            MlpConfig {
                hidden_layers: vec![4],
                learning_rate: 5.0, // aggressive lr makes validation worsen fast
                batch_size: 4,
                max_epochs: 50,
                patience: 2,
                seed: 11,
                ..Default::default()
            },
            2,
            &mut rng_from_seed(11),
        );
        let mut rng = rng_from_seed(5);
        let x = Array2::from_shape_fn((40, 2), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(40, |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let report = train(&mut mlp, &x, &y).unwrap();
        let best_idx = report
            .val_loss_history
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(report.epochs_run <= best_idx + mlp.config.patience + 1);
        assert_abs_diff_eq!(
            report.best_val_loss,
            report.val_loss_history.iter().cloned().fold(f64::INFINITY, f64::min)
        );
    }

    #[test]
    fn learns_linear_ground_truth() {
        let mut rng = rng_from_seed(100);
        let n = 500;
        let x = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
        let raw: Array1<f64> = Array1::from_shape_fn(n, |i| 3.0 * x[(i, 0)] + 1.0);
        // z-score targets as the training contract expects
        let mu = raw.mean().unwrap();
        let sd = raw.std(1.0);
        let y = raw.mapv(|v| (v - mu) / sd);
        let mut mlp = Mlp::init(
            MlpConfig {
                hidden_layers: vec![16, 8],
                seed: 2,
                ..Default::default()
            },
            3,
            &mut rng_from_seed(2),
        );
        let report = train(&mut mlp, &x, &y).unwrap();
        assert!(report.epochs_run <= 200);
        let pred = mlp.predict(&x).unwrap();
        let mae = pred
            .iter()
            .zip(y.iter())
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>()
            / n as f64;
        assert!(mae < 0.1, "z-scale MAE {mae}");
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = rng_from_seed(8);
        let x = Array2::from_shape_fn((60, 4), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(60, |i| (i as f64).sin());
        let run = |seed| {
            let mut mlp = Mlp::init(
                MlpConfig {
                    hidden_layers: vec![8],
                    dropout: 0.1,
                    max_epochs: 10,
                    seed,
                    ..Default::default()
                },
                4,
                &mut rng_from_seed(seed),
            );
            let report = train(&mut mlp, &x, &y).unwrap();
            (mlp, report)
        };
        let (m1, r1) = run(4);
        let (m2, r2) = run(4);
        assert_eq!(m1, m2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn batch_predict_equals_rowwise() {
        let mlp = Mlp::init(cfg(&[5], 0.0, 6), 3, &mut rng_from_seed(6));
        let x = Array2::from_shape_fn((7, 3), |(i, j)| (i * 3 + j) as f64 / 10.0);
        let batch = mlp.predict(&x).unwrap();
        for i in 0..x.nrows() {
            let row = x.row(i).insert_axis(Axis(0)).to_owned();
            let single = mlp.predict(&row).unwrap();
            assert_abs_diff_eq!(batch[i], single[0], epsilon = 1e-15);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mlp = Mlp::init(cfg(&[4, 2], 0.1, 9), 6, &mut rng_from_seed(9));
        let cp = mlp.to_checkpoint(1234);
        let json = serde_json::to_string(&cp).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.feature_space_hash, 1234);
        let restored = Mlp::from_checkpoint(back).unwrap();
        assert_eq!(restored, mlp);
    }

    #[test]
    fn dimension_mismatch_detected() {
        let mlp = Mlp::init(cfg(&[4], 0.0, 1), 5, &mut rng_from_seed(1));
        let x = Array2::zeros((2, 3));
        assert!(matches!(
            mlp.predict(&x),
            Err(ModelError::DimensionMismatch { expected: 5, found: 3 })
        ));
    }
}
