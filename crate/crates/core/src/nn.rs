//! Dense feedforward networks with reverse-mode gradients, Adam, and the
//! supervised training loops for the performance regressor and the
//! feasibility classifier.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Element-wise (or group-wise) output nonlinearity of a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
    /// Softmax over each `(start, len)` group. The groups partition the
    /// layer output. A group of length one is a two-class softmax against a
    /// fixed zero logit, i.e. a sigmoid. `temperature` divides the logits of
    /// groups with two or more entries.
    SoftmaxGroups {
        groups: Vec<(usize, usize)>,
        #[serde(default = "unit_temperature")]
        temperature: f64,
    },
}

fn unit_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl NetSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = NetSpec {
            widths,
            activations,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Multilayer perceptron with the same hidden activation everywhere.
    pub fn mlp(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = vec![hidden_activation; hidden.len()];
        activations.push(output_activation);
        NetSpec::new(widths, activations)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Parameter("a network needs at least one layer".into()));
        }
        if self.activations.len() != self.widths.len() - 1 {
            return Err(Error::Parameter(format!(
                "{} activations for {} layers",
                self.activations.len(),
                self.widths.len() - 1
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Parameter("layer widths must be >= 1".into()));
        }
        for (l, act) in self.activations.iter().enumerate() {
            if let Activation::SoftmaxGroups {
                groups,
                temperature,
            } = act
            {
                if !(*temperature > 0.0) {
                    return Err(Error::Parameter("softmax temperature must be > 0".into()));
                }
                let width = self.widths[l + 1];
                let mut sorted = groups.clone();
                sorted.sort_unstable();
                let mut next = 0;
                for &(start, len) in &sorted {
                    if start != next || len == 0 {
                        return Err(Error::Parameter(format!(
                            "softmax groups of layer {l} do not partition width {width}"
                        )));
                    }
                    next = start + len;
                }
                if next != width {
                    return Err(Error::Parameter(format!(
                        "softmax groups of layer {l} do not partition width {width}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn layer_count(&self) -> usize {
        self.activations.len()
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated spec")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `inputs x outputs`, row-major.
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Weights and biases of every layer. Also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetParams {
    pub layers: Vec<Layer>,
}

impl NetParams {
    pub fn zeros(spec: &NetSpec) -> Self {
        NetParams {
            layers: spec
                .widths
                .windows(2)
                .map(|w| Layer {
                    w: Matrix::zeros(w[0], w[1]),
                    b: vec![0.0; w[1]],
                })
                .collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(spec: &NetSpec, rng: &mut R) -> Self {
        let mut params = NetParams::zeros(spec);
        for layer in &mut params.layers {
            let (fan_in, fan_out) = (layer.w.rows(), layer.w.cols());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in layer.w.as_mut_slice() {
                *v = rng.random_range(-limit..limit);
            }
        }
        params
    }

    pub fn check_shapes(&self, spec: &NetSpec) -> Result<()> {
        if self.layers.len() != spec.layer_count() {
            return Err(Error::Dimension(format!(
                "params have {} layers, spec has {}",
                self.layers.len(),
                spec.layer_count()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let (i, o) = (spec.widths[l], spec.widths[l + 1]);
            if layer.w.rows() != i || layer.w.cols() != o || layer.b.len() != o {
                return Err(Error::Dimension(format!(
                    "layer {l} has shape {}x{} (+{}), spec says {i}x{o}",
                    layer.w.rows(),
                    layer.w.cols(),
                    layer.b.len()
                )));
            }
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.as_slice().iter().chain(l.b.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.as_mut_slice().iter_mut().chain(l.b.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.w.as_slice().len() + l.b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    /// FNV-1a over the bit patterns; ties a forward cache to the exact
    /// parameters it was computed with.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.values() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// Intermediate values recorded by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    outputs: Vec<Matrix>,
    fingerprint: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("at least one layer")
    }

    /// Pre-activation of every layer, in order.
    pub fn pre_activations(&self) -> &[Matrix] {
        &self.pre
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    // keep outputs strictly inside (0, 1)
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn activate(act: &Activation, z: &Matrix) -> Matrix {
    let mut a = z.clone();
    match act {
        Activation::Identity => {}
        Activation::Relu => a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Sigmoid => a.as_mut_slice().iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::SoftmaxGroups {
            groups,
            temperature,
        } => {
            for i in 0..a.rows() {
                let row = a.row_mut(i);
                for &(start, len) in groups {
                    let g = &mut row[start..start + len];
                    if len == 1 {
                        g[0] = sigmoid(g[0]);
                        continue;
                    }
                    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for v in g.iter_mut() {
                        *v = ((*v - max) / temperature).exp();
                        sum += *v;
                    }
                    g.iter_mut().for_each(|v| *v /= sum);
                }
            }
        }
    }
    a
}

/// Gradient with respect to the pre-activation given the gradient with
/// respect to the activation output.
fn activation_backward(act: &Activation, z: &Matrix, a: &Matrix, da: &Matrix) -> Matrix {
    let mut dz = da.clone();
    match act {
        Activation::Identity => {}
        Activation::Relu => {
            for (d, &zv) in dz.as_mut_slice().iter_mut().zip(z.as_slice()) {
                if zv <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        Activation::Sigmoid => {
            for (d, &av) in dz.as_mut_slice().iter_mut().zip(a.as_slice()) {
                *d *= av * (1.0 - av);
            }
        }
        Activation::SoftmaxGroups {
            groups,
            temperature,
        } => {
            for i in 0..dz.rows() {
                let a_row = a.row(i);
                let da_row = da.row(i);
                let dz_row = dz.row_mut(i);
                for &(start, len) in groups {
                    if len == 1 {
                        let av = a_row[start];
                        dz_row[start] = da_row[start] * av * (1.0 - av);
                        continue;
                    }
                    let span = start..start + len;
                    let inner: f64 = a_row[span.clone()]
                        .iter()
                        .zip(&da_row[span.clone()])
                        .map(|(x, y)| x * y)
                        .sum();
                    for j in span {
                        dz_row[j] = a_row[j] * (da_row[j] - inner) / temperature;
                    }
                }
            }
        }
    }
    dz
}

/// Runs the network on a `batch x input` matrix.
pub fn forward(params: &NetParams, spec: &NetSpec, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
    params.check_shapes(spec)?;
    if x.cols() != spec.input_width() {
        return Err(Error::Dimension(format!(
            "input has {} columns, network expects {}",
            x.cols(),
            spec.input_width()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Domain("network input contains non-finite values".into()));
    }
    let mut cache = ForwardCache {
        inputs: Vec::with_capacity(spec.layer_count()),
        pre: Vec::with_capacity(spec.layer_count()),
        outputs: Vec::with_capacity(spec.layer_count()),
        fingerprint: params.fingerprint(),
    };
    let mut h = x.clone();
    for (layer, act) in params.layers.iter().zip(&spec.activations) {
        let mut z = h.matmul(&layer.w)?;
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&layer.b) {
                *v += b;
            }
        }
        let a = activate(act, &z);
        cache.inputs.push(std::mem::replace(&mut h, a.clone()));
        cache.pre.push(z);
        cache.outputs.push(a);
    }
    Ok((h, cache))
}

/// Output only, no cache.
pub fn predict(params: &NetParams, spec: &NetSpec, x: &Matrix) -> Result<Matrix> {
    forward(params, spec, x).map(|(out, _)| out)
}

/// Back-propagates `upstream` (gradient of a scalar loss with respect to the
/// network output) and returns parameter and input gradients.
pub fn backward(
    params: &NetParams,
    spec: &NetSpec,
    cache: &ForwardCache,
    upstream: &Matrix,
) -> Result<(NetParams, Matrix)> {
    if cache.pre.len() != spec.layer_count() || cache.fingerprint != params.fingerprint() {
        return Err(Error::Contract(
            "forward cache does not belong to these parameters".into(),
        ));
    }
    let out = cache.output();
    if upstream.rows() != out.rows() || upstream.cols() != out.cols() {
        return Err(Error::Dimension(format!(
            "upstream gradient is {}x{}, output is {}x{}",
            upstream.rows(),
            upstream.cols(),
            out.rows(),
            out.cols()
        )));
    }
    let mut grads = NetParams::zeros(spec);
    let mut da = upstream.clone();
    for l in (0..spec.layer_count()).rev() {
        let dz = activation_backward(&spec.activations[l], &cache.pre[l], &cache.outputs[l], &da);
        grads.layers[l].w = cache.inputs[l].t_matmul(&dz)?;
        let gb = &mut grads.layers[l].b;
        for i in 0..dz.rows() {
            for (g, d) in gb.iter_mut().zip(dz.row(i)) {
                *g += d;
            }
        }
        da = dz.matmul_t(&params.layers[l].w)?;
    }
    Ok((grads, da))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    MeanSquaredError,
    BinaryCrossEntropy,
}

/// Mean loss over all output entries and its gradient with respect to the
/// network output.
pub fn loss_and_grad(loss: Loss, output: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if output.rows() != target.rows() || output.cols() != target.cols() {
        return Err(Error::Dimension(format!(
            "output {}x{} vs target {}x{}",
            output.rows(),
            output.cols(),
            target.rows(),
            target.cols()
        )));
    }
    let n = output.as_slice().len() as f64;
    let mut grad = Matrix::zeros(output.rows(), output.cols());
    let mut total = 0.0;
    for ((g, &a), &y) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(output.as_slice())
        .zip(target.as_slice())
    {
        match loss {
            Loss::MeanSquaredError => {
                total += (a - y) * (a - y);
                *g = 2.0 * (a - y) / n;
            }
            Loss::BinaryCrossEntropy => {
                total -= y * a.ln() + (1.0 - y) * (1.0 - a).ln();
                *g = (a - y) / (a * (1.0 - a)) / n;
            }
        }
    }
    Ok((total / n, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64) -> Result<Self> {
        if !(learning_rate > 0.0) || !learning_rate.is_finite() {
            return Err(Error::Parameter(format!(
                "learning rate must be > 0, got {learning_rate}"
            )));
        }
        for b in [beta1, beta2] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Parameter(format!(
                    "moment decay must lie in [0, 1), got {b}"
                )));
            }
        }
        Ok(AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon: 1e-8,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: NetParams,
    pub v: NetParams,
    pub step: u64,
}

impl AdamState {
    pub fn new(spec: &NetSpec) -> Self {
        AdamState {
            m: NetParams::zeros(spec),
            v: NetParams::zeros(spec),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut NetParams,
    grads: &NetParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Dimension(
            "gradient, state and parameter shapes differ".into(),
        ));
    }
    if !grads.is_finite() {
        return Err(Error::Divergence {
            step: state.step as usize,
            reason: "non-finite gradient".into(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (((p, &g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub loss: Loss,
}

impl TrainConfig {
    /// Learning rate 1e-3, default moments, batch 64, 6000 steps.
    pub fn with_loss(loss: Loss) -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            steps: 6000,
            seed: 0,
            loss,
        }
    }

    pub fn validate(&self) -> Result<AdamConfig> {
        if self.batch_size < 2 {
            return Err(Error::Parameter(format!(
                "batch size must be >= 2, got {}",
                self.batch_size
            )));
        }
        AdamConfig::new(self.learning_rate, self.beta1, self.beta2)
    }
}

/// A network together with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub spec: NetSpec,
    pub params: NetParams,
}

impl Network {
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        predict(&self.params, &self.spec, x)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        forward(&self.params, &self.spec, x)
    }

    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(NetParams, Matrix)> {
        backward(&self.params, &self.spec, cache, upstream)
    }
}

/// Minibatch Adam training from a seeded Glorot initialization. Batches are
/// drawn from a fresh seeded permutation each epoch.
pub fn train_network(spec: &NetSpec, x: &Matrix, y: &Matrix, cfg: &TrainConfig) -> Result<Network> {
    let adam = cfg.validate()?;
    if x.rows() != y.rows() || x.rows() == 0 {
        return Err(Error::Dimension(format!(
            "{} inputs vs {} targets",
            x.rows(),
            y.rows()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = NetParams::init(spec, &mut rng);
    let mut state = AdamState::new(spec);
    let n = x.rows();
    let batch = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut idx = Vec::with_capacity(batch);
    for step in 0..cfg.steps {
        idx.clear();
        while idx.len() < batch {
            if cursor == n {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let xb = x.select_rows(&idx);
        let yb = y.select_rows(&idx);
        let (out, cache) = forward(&params, spec, &xb)?;
        let (loss, grad) = loss_and_grad(cfg.loss, &out, &yb)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: format!("loss became {loss}"),
            });
        }
        let (grads, _) = backward(&params, spec, &cache, &grad)?;
        adam_step(&mut params, &grads, &mut state, &adam).map_err(|e| match e {
            Error::Divergence { reason, .. } => Error::Divergence { step, reason },
            other => other,
        })?;
    }
    Ok(Network {
        spec: spec.clone(),
        params,
    })
}

/// Pretrained performance regressor and feasibility classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Surrogates {
    /// Normalized designs to normalized performances, identity head.
    pub regressor: Network,
    /// Normalized designs to feasibility likelihood, sigmoid head.
    pub classifier: Network,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMetrics {
    /// Held-out RMSE in normalized performance units.
    pub regressor_rmse: Option<f64>,
    /// Held-out accuracy at threshold 0.5.
    pub classifier_accuracy: Option<f64>,
    pub regressor_train_rows: usize,
    pub classifier_train_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub hidden: Vec<usize>,
    /// Passes over the training rows; overrides each config's `steps`
    /// with `ceil(epochs * rows / batch_size)` when set.
    pub epochs: Option<usize>,
    pub regressor: TrainConfig,
    pub classifier: TrainConfig,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            hidden: vec![64, 64],
            epochs: Some(200),
            regressor: TrainConfig::with_loss(Loss::MeanSquaredError),
            classifier: TrainConfig::with_loss(Loss::BinaryCrossEntropy),
        }
    }
}

impl SurrogateConfig {
    fn steps_for(&self, train: &TrainConfig, rows: usize) -> TrainConfig {
        let mut out = train.clone();
        if let Some(e) = self.epochs {
            out.steps = (e * rows).div_ceil(train.batch_size.max(1));
        }
        out
    }

    /// Same config with both training seeds replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.regressor.seed = seed;
        out.classifier.seed = seed.wrapping_add(1);
        out
    }
}

/// Seeded 80/20 split of `0..n`: `(train, held_out)`.
pub fn holdout_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = (n / 5).min(n.saturating_sub(1));
    let train = idx.split_off(held);
    (train, idx)
}

pub fn train_surrogates(
    data: &Dataset,
    norm: &Normalizer,
    cfg: &SurrogateConfig,
) -> Result<(Surrogates, SurrogateMetrics)> {
    let feasible = data.feasible_indices();
    if feasible.is_empty() || feasible.len() == data.n_rows() {
        return Err(Error::InsufficientData(
            "classifier training needs both feasible and infeasible rows".into(),
        ));
    }
    let x_all = norm.normalize_designs(data.designs())?;
    let y_all = norm.normalize_performances(data.performances())?;
    let d = data.design_width();
    let t = data.objective_count();

    let reg_spec = NetSpec::mlp(d, &cfg.hidden, t, Activation::Relu, Activation::Identity)?;
    let (reg_train, reg_held) = holdout_split(feasible.len(), cfg.regressor.seed);
    let reg_train: Vec<usize> = reg_train.iter().map(|&i| feasible[i]).collect();
    let reg_held: Vec<usize> = reg_held.iter().map(|&i| feasible[i]).collect();
    let regressor = train_network(
        &reg_spec,
        &x_all.select_rows(&reg_train),
        &y_all.select_rows(&reg_train),
        &cfg.steps_for(&cfg.regressor, reg_train.len()),
    )?;
    let regressor_rmse = if reg_held.is_empty() {
        None
    } else {
        let pred = regressor.predict(&x_all.select_rows(&reg_held))?;
        let truth = y_all.select_rows(&reg_held);
        let mse = pred
            .as_slice()
            .iter()
            .zip(truth.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / pred.as_slice().len() as f64;
        Some(mse.sqrt())
    };

    let clf_spec = NetSpec::mlp(d, &cfg.hidden, 1, Activation::Relu, Activation::Sigmoid)?;
    let labels = Matrix::from_vec(
        data.n_rows(),
        1,
        data.feasible().iter().map(|&f| f as u8 as f64).collect(),
    )?;
    let (clf_train, clf_held) = holdout_split(data.n_rows(), cfg.classifier.seed);
    let classifier = train_network(
        &clf_spec,
        &x_all.select_rows(&clf_train),
        &labels.select_rows(&clf_train),
        &cfg.steps_for(&cfg.classifier, clf_train.len()),
    )?;
    let classifier_accuracy = if clf_held.is_empty() {
        None
    } else {
        let pred = classifier.predict(&x_all.select_rows(&clf_held))?;
        let hits = clf_held
            .iter()
            .zip(pred.as_slice())
            .filter(|(&i, &p)| (p >= 0.5) == data.feasible()[i])
            .count();
        Some(hits as f64 / clf_held.len() as f64)
    };

    Ok((
        Surrogates {
            regressor,
            classifier,
            normalizer: norm.clone(),
        },
        SurrogateMetrics {
            regressor_rmse,
            classifier_accuracy,
            regressor_train_rows: reg_train.len(),
            classifier_train_rows: clf_train.len(),
        },
    ))
}

/// Symmetric relative error with an absolute floor on the scale so that
/// vanishing gradients compare absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// Worst relative error between analytic and central-difference gradients
/// of the mean loss for a random instance of `spec`.
///
/// Purely affine nets are checked under a linear loss, other identity and
/// ReLU heads under mean squared error, sigmoid and softmax heads under
/// binary cross-entropy. Instances whose ReLU
/// pre-activations fall within 1e-3 of the kink are redrawn.
pub fn check_gradients(spec: &NetSpec, seed: u64, h: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Parameter(format!("step {h} outside [1e-7, 1e-3]")));
    }
    spec.validate()?;
    let loss = match spec.activations.last().expect("validated") {
        Activation::Sigmoid | Activation::SoftmaxGroups { .. } => Loss::BinaryCrossEntropy,
        _ => Loss::MeanSquaredError,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 4;
    let (params, x, target, cache) = loop {
        let params = NetParams::init(spec, &mut rng);
        let mut x = Matrix::zeros(batch, spec.input_width());
        x.as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-1.0..1.0));
        let mut target = Matrix::zeros(batch, spec.output_width());
        target
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(0.05..0.95));
        let (_, cache) = forward(&params, spec, &x)?;
        let near_kink = spec.activations.iter().enumerate().any(|(l, a)| {
            *a == Activation::Relu && cache.pre[l].as_slice().iter().any(|z| z.abs() < 1e-3)
        });
        if !near_kink {
            break (params, x, target, cache);
        }
    };
    // an all-affine net is checked under the linear loss mean(target * out),
    // for which central differences are exact up to rounding
    let affine = spec.activations.iter().all(|a| *a == Activation::Identity);
    let scale = 1.0 / target.as_slice().len() as f64;
    let target = if affine {
        // centered weights keep the loss, and so its rounding, small
        let mut c = target.clone();
        c.as_mut_slice().iter_mut().for_each(|v| *v = 2.0 * *v - 1.0);
        c
    } else {
        target
    };
    let upstream = if affine {
        let mut u = target.clone();
        u.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        u
    } else {
        loss_and_grad(loss, cache.output(), &target)?.1
    };
    let (grads, dx) = backward(&params, spec, &cache, &upstream)?;
    let eval = |p: &NetParams, x: &Matrix| -> Result<f64> {
        let out = predict(p, spec, x)?;
        if affine {
            Ok(crate::linalg::dot(out.as_slice(), target.as_slice()) * scale)
        } else {
            Ok(loss_and_grad(loss, &out, &target)?.0)
        }
    };

    let mut worst = 0.0f64;
    let mut probe = params.clone();
    let analytic: Vec<f64> = grads.values().copied().collect();
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *probe.values().nth(k).expect("index in range");
        *probe.values_mut().nth(k).expect("index in range") = orig + h;
        let up = eval(&probe, &x)?;
        *probe.values_mut().nth(k).expect("index in range") = orig - h;
        let down = eval(&probe, &x)?;
        *probe.values_mut().nth(k).expect("index in range") = orig;
        worst = worst.max(relative_error(a, (up - down) / (2.0 * h)));
    }
    let mut xp = x.clone();
    for k in 0..x.as_slice().len() {
        let orig = x.as_slice()[k];
        xp.as_mut_slice()[k] = orig + h;
        let up = eval(&params, &xp)?;
        xp.as_mut_slice()[k] = orig - h;
        let down = eval(&params, &xp)?;
        xp.as_mut_slice()[k] = orig;
        worst = worst.max(relative_error(dx.as_slice()[k], (up - down) / (2.0 * h)));
    }
    Ok(worst)
}

/// On-disk form of one network: flat row-major weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetCheckpoint {
    pub spec: NetSpec,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalizer: Option<Normalizer>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerRecord {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl NetCheckpoint {
    pub fn from_network(net: &Network, normalizer: Option<&Normalizer>, config_digest: &str) -> Self {
        NetCheckpoint {
            spec: net.spec.clone(),
            layers: net
                .params
                .layers
                .iter()
                .map(|l| LayerRecord {
                    w: l.w.as_slice().to_vec(),
                    b: l.b.clone(),
                })
                .collect(),
            normalizer: normalizer.cloned(),
            config_digest: config_digest.to_string(),
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.layer_count() {
            return Err(Error::Dimension(format!(
                "checkpoint has {} layers, spec has {}",
                self.layers.len(),
                self.spec.layer_count()
            )));
        }
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(l, rec)| {
                Ok(Layer {
                    w: Matrix::from_vec(self.spec.widths[l], self.spec.widths[l + 1], rec.w.clone())?,
                    b: rec.b.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let params = NetParams { layers };
        params.check_shapes(&self.spec)?;
        if !params.is_finite() {
            return Err(Error::Domain("checkpoint contains non-finite weights".into()));
        }
        Ok(Network {
            spec: self.spec.clone(),
            params,
        })
    }
}

/// On-disk form of a trained surrogate pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateCheckpoint {
    pub regressor: NetCheckpoint,
    pub classifier: NetCheckpoint,
    pub normalizer: Normalizer,
    pub metrics: SurrogateMetrics,
    pub config_digest: String,
    pub seed: u64,
}

impl SurrogateCheckpoint {
    pub fn new(s: &Surrogates, metrics: SurrogateMetrics, config_digest: &str, seed: u64) -> Self {
        SurrogateCheckpoint {
            regressor: NetCheckpoint::from_network(&s.regressor, None, config_digest),
            classifier: NetCheckpoint::from_network(&s.classifier, None, config_digest),
            normalizer: s.normalizer.clone(),
            metrics,
            config_digest: config_digest.to_string(),
            seed,
        }
    }

    pub fn to_surrogates(&self) -> Result<Surrogates> {
        Ok(Surrogates {
            regressor: self.regressor.to_network()?,
            classifier: self.classifier.to_network()?,
            normalizer: self.normalizer.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DesignColumn, Direction, ObjectiveSpec};

    fn affine(w: f64, b: f64) -> (NetSpec, NetParams) {
        let spec = NetSpec::new(vec![1, 1], vec![Activation::Identity]).unwrap();
        let params = NetParams {
            layers: vec![Layer {
                w: Matrix::from_vec(1, 1, vec![w]).unwrap(),
                b: vec![b],
            }],
        };
        (spec, params)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let spec = NetSpec::mlp(3, &[4], 2, Activation::Identity, Activation::Identity).unwrap();
        let out = predict(&NetParams::zeros(&spec), &spec, &Matrix::from_rows(&[[1.0, -2.0, 3.0]]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn affine_forward_and_backward() {
        let (spec, params) = affine(2.0, 1.0);
        let x = Matrix::from_vec(1, 1, vec![3.0]).unwrap();
        let (out, cache) = forward(&params, &spec, &x).unwrap();
        assert_eq!(out.as_slice(), &[7.0]);
        let (g, dx) = backward(&params, &spec, &cache, &Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.layers[0].w.as_slice(), &[3.0]);
        assert_eq!(g.layers[0].b, vec![1.0]);
        assert_eq!(dx.as_slice(), &[2.0]);
    }

    #[test]
    fn softmax_group_symmetry() {
        let spec = NetSpec::new(
            vec![1, 3],
            vec![Activation::SoftmaxGroups {
                groups: vec![(0, 2), (2, 1)],
                temperature: 1.0,
            }],
        )
        .unwrap();
        let out = predict(&NetParams::zeros(&spec), &spec, &Matrix::from_rows(&[[5.0]]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[0.5, 0.5, 0.5]);
        assert!(NetSpec::new(
            vec![1, 3],
            vec![Activation::SoftmaxGroups {
                groups: vec![(0, 2)],
                temperature: 1.0
            }]
        )
        .is_err());
    }

    #[test]
    fn relu_blocks_gradient_at_negative_preactivation() {
        let spec = NetSpec::new(vec![1, 1], vec![Activation::Relu]).unwrap();
        let params = NetParams {
            layers: vec![Layer {
                w: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
                b: vec![-5.0],
            }],
        };
        let (out, cache) = forward(&params, &spec, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(out.as_slice(), &[0.0]);
        let (g, dx) = backward(&params, &spec, &cache, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(g.layers[0].w.as_slice(), &[0.0]);
        assert_eq!(dx.as_slice(), &[0.0]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let (spec, params) = affine(2.0, 1.0);
        let (_, cache) = forward(&params, &spec, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        let (_, other) = affine(3.0, 1.0);
        let err = backward(&other, &spec, &cache, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
        let err = forward(&params, &spec, &Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn sigmoid_stays_open_interval() {
        for z in [-1000.0, -40.0, 0.0, 40.0, 1000.0] {
            let s = sigmoid(z);
            assert!(s > 0.0 && s < 1.0, "{z} -> {s}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let (spec, mut params) = affine(2.0, 1.0);
        let before = params.clone();
        let mut state = AdamState::new(&spec);
        let cfg = AdamConfig::new(1e-3, 0.9, 0.999).unwrap();
        adam_step(&mut params, &NetParams::zeros(&spec), &mut state, &cfg).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        // m_hat = g, v_hat = g^2 after one step, so the update is lr * g / (|g| + eps)
        for g in [1e-3, 0.5, -7.0] {
            let (spec, mut params) = affine(0.0, 0.0);
            let mut grads = NetParams::zeros(&spec);
            grads.layers[0].w.as_mut_slice()[0] = g;
            let mut state = AdamState::new(&spec);
            let cfg = AdamConfig::new(1e-2, 0.9, 0.999).unwrap();
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
            let expect = -1e-2 * g / (g.abs() + 1e-8);
            assert!((params.layers[0].w.as_slice()[0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_descends_against_constant_gradient() {
        let (spec, mut params) = affine(0.0, 0.0);
        let mut grads = NetParams::zeros(&spec);
        grads.layers[0].w.as_mut_slice()[0] = 0.3;
        let mut state = AdamState::new(&spec);
        let cfg = AdamConfig::new(1e-2, 0.9, 0.999).unwrap();
        for _ in 0..100 {
            adam_step(&mut params, &grads, &mut state, &cfg).unwrap();
        }
        assert!(params.layers[0].w.as_slice()[0] < -0.5);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let (spec, mut params) = affine(0.0, 0.0);
        let mut grads = NetParams::zeros(&spec);
        grads.layers[0].b[0] = f64::NAN;
        let mut state = AdamState::new(&spec);
        let cfg = AdamConfig::new(1e-2, 0.9, 0.999).unwrap();
        assert!(matches!(
            adam_step(&mut params, &grads, &mut state, &cfg),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn gradient_checks_pass() {
        let identity = NetSpec::new(vec![3, 2], vec![Activation::Identity]).unwrap();
        // h = 1e-5 puts the rounding floor of the difference quotient near 1e-10
        let err = (0..20).map(|s| check_gradients(&identity, s, 1e-5).unwrap()).fold(0.0, f64::max);
        assert!(err < 5e-9, "{err}");
        let clf = NetSpec::mlp(4, &[6], 1, Activation::Relu, Activation::Sigmoid).unwrap();
        assert!(check_gradients(&clf, 2, 1e-5).unwrap() < 1e-5);
        let deep = NetSpec::mlp(5, &[7, 6], 3, Activation::Relu, Activation::Identity).unwrap();
        for seed in 0..5 {
            assert!(check_gradients(&deep, seed, 1e-5).unwrap() < 1e-5);
        }
        let gen = NetSpec::mlp(
            3,
            &[5],
            5,
            Activation::Relu,
            Activation::SoftmaxGroups {
                groups: vec![(0, 1), (1, 3), (4, 1)],
                temperature: 0.7,
            },
        )
        .unwrap();
        assert!(check_gradients(&gen, 3, 1e-5).unwrap() < 1e-5);
        assert!(check_gradients(&gen, 3, 1e-2).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let spec = NetSpec::mlp(3, &[4], 2, Activation::Relu, Activation::Identity).unwrap();
        let net = Network {
            params: NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(9)),
            spec,
        };
        let json = serde_json::to_string(&NetCheckpoint::from_network(&net, None, "abc")).unwrap();
        let back: NetCheckpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_network().unwrap(), net);
    }

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n);
        let mut p = Vec::with_capacity(n);
        let mut f = Vec::with_capacity(n);
        for _ in 0..n {
            let v: f64 = rng.random();
            x.push(v);
            p.push(2.0 * v + 1.0);
            f.push(v > 0.5);
        }
        Dataset::new(
            vec![DesignColumn::Continuous {
                name: "x".into(),
                min: 0.0,
                max: 1.0,
            }],
            vec![ObjectiveSpec::new("y", Direction::Maximize)],
            Matrix::from_vec(n, 1, x).unwrap(),
            Matrix::from_vec(n, 1, p).unwrap(),
            f,
        )
        .unwrap()
    }

    fn cfg(steps: usize, seed: u64, loss: Loss) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            batch_size: 64,
            steps,
            seed,
            loss,
        }
    }

    #[test]
    fn zero_steps_returns_seeded_init() {
        let spec = NetSpec::mlp(1, &[8], 1, Activation::Relu, Activation::Identity).unwrap();
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let net = train_network(&spec, &x, &x, &cfg(0, 5, Loss::MeanSquaredError)).unwrap();
        let init = NetParams::init(&spec, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(net.params, init);
    }

    #[test]
    fn single_class_is_rejected() {
        let d = toy_dataset(50, 1);
        let all = Dataset::new(
            d.design_columns().to_vec(),
            d.performance_columns().to_vec(),
            d.designs().clone(),
            d.performances().clone(),
            vec![true; 50],
        )
        .unwrap();
        let norm = crate::data::fit_normalizer(&all).unwrap();
        let sc = SurrogateConfig {
            hidden: vec![4],
            epochs: None,
            regressor: cfg(1, 0, Loss::MeanSquaredError),
            classifier: cfg(1, 0, Loss::BinaryCrossEntropy),
        };
        assert!(matches!(
            train_surrogates(&all, &norm, &sc),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn holdout_is_a_seeded_partition() {
        let (a, b) = holdout_split(100, 3);
        assert_eq!((a.len(), b.len()), (80, 20));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(holdout_split(100, 3), (a, b));
    }
}
