//! Adversarial training with the auxiliary quality-diversity loss.
//!
//! The generator minimizes the non-saturating GAN loss plus
//! `gamma1 * dpp_loss(L)` where `L` is the similarity kernel of the generated
//! batch weighted by quality `q = performance_score * feasibility`. The
//! performance score is the DTAI of the regressor's predictions, or a random
//! simplex-weighted sum of min-max scaled predictions when DTAI is ablated.
//! Feasibility is the classifier's likelihood, or 1 when it is ablated.
//! Gradients flow through the frozen surrogates into the generator only.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    ratio, Dataset, DesignColumn, DesignLayout, Direction, Normalizer, RatioMatrix, TargetSpec,
};
use crate::dpp::{DppTerm, KernelConfig, Q_FLOOR};
use crate::dtai::{dtai_score, ratio_slope};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    adam_step, AdamConfig, AdamState, Activation, LayerRecord, NetCheckpoint, NetParams, NetSpec,
    Network, Surrogates,
};

/// Ablation lattice over the two quality ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Proposed,
    NoDtai,
    NoClf,
    NoDtaiNoClf,
    Vanilla,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Proposed,
        Variant::NoDtai,
        Variant::NoClf,
        Variant::NoDtaiNoClf,
        Variant::Vanilla,
    ];

    pub fn uses_dtai(self) -> bool {
        matches!(self, Variant::Proposed | Variant::NoClf | Variant::Vanilla)
    }

    pub fn uses_classifier(self) -> bool {
        matches!(self, Variant::Proposed | Variant::NoDtai | Variant::Vanilla)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::NoDtai => "no_dtai",
            Variant::NoClf => "no_clf",
            Variant::NoDtaiNoClf => "no_dtai_no_clf",
            Variant::Vanilla => "vanilla",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Parameter(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub generator_hidden: Vec<usize>,
    pub discriminator_hidden: Vec<usize>,
    pub batch_size: usize,
    pub steps: usize,
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Weight of the quality-diversity term in the generator loss.
    pub gamma1: f64,
    pub variant: Variant,
    /// `None` picks [`KernelConfig::default_for_width`].
    pub kernel: Option<KernelConfig>,
    pub temperature: f64,
    pub log_every: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            latent_dim: 16,
            generator_hidden: vec![64, 64],
            discriminator_hidden: vec![64, 64],
            batch_size: 32,
            steps: 5000,
            generator_lr: 1e-4,
            discriminator_lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            seed: 0,
            gamma1: 0.5,
            variant: Variant::Proposed,
            kernel: None,
            temperature: 1.0,
            log_every: 100,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Parameter("latent_dim must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Parameter("batch_size must be >= 2".into()));
        }
        if !(self.gamma1 >= 0.0) || !self.gamma1.is_finite() {
            return Err(Error::Parameter(format!("gamma1 must be >= 0, got {}", self.gamma1)));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Parameter("temperature must be > 0".into()));
        }
        if self.log_every == 0 {
            return Err(Error::Parameter("log_every must be >= 1".into()));
        }
        if let Some(k) = &self.kernel {
            k.validate()?;
        }
        AdamConfig::new(self.generator_lr, self.beta1, self.beta2)?;
        AdamConfig::new(self.discriminator_lr, self.beta1, self.beta2)?;
        Ok(())
    }

    /// Weight actually applied to the auxiliary term.
    pub fn effective_gamma1(&self) -> f64 {
        if self.variant == Variant::Vanilla {
            0.0
        } else {
            self.gamma1
        }
    }

    pub fn kernel_for(&self, design_width: usize) -> KernelConfig {
        self.kernel
            .unwrap_or_else(|| KernelConfig::default_for_width(design_width))
    }

    pub fn generator_spec(&self, layout: &DesignLayout) -> Result<NetSpec> {
        NetSpec::mlp(
            self.latent_dim,
            &self.generator_hidden,
            layout.width,
            Activation::Relu,
            Activation::SoftmaxGroups {
                groups: layout.output_groups(),
                temperature: self.temperature,
            },
        )
    }

    pub fn discriminator_spec(&self, design_width: usize) -> Result<NetSpec> {
        NetSpec::mlp(
            design_width,
            &self.discriminator_hidden,
            1,
            Activation::Relu,
            Activation::Sigmoid,
        )
    }
}

/// Predicted performance is held inside `[RATIO_FLOOR, 1 / RATIO_FLOOR]`
/// times the target while scoring, so ratios stay positive and finite.
pub const RATIO_FLOOR: f64 = 1e-3;

/// Per-batch quality with its row-wise Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct Quality {
    /// Clamped to `[Q_FLOOR, 1 - Q_FLOOR]`.
    pub q: Vec<f64>,
    /// Row `i` holds `dq_i / dx_i`.
    pub grad: Matrix,
    /// DTAI of the predicted performance, whatever the variant.
    pub dtai_hat: Vec<f64>,
    pub feasibility: Vec<f64>,
    pub performance_score: Vec<f64>,
}

/// Frozen surrogates plus everything needed to turn predictions into quality.
#[derive(Debug, Clone)]
pub struct QualityModel<'a> {
    pub surrogates: &'a Surrogates,
    pub targets: &'a TargetSpec,
    /// Raw per-objective `(min, max)` over the dataset, for the random
    /// weighting ablation.
    pub perf_range: Vec<(f64, f64)>,
}

impl<'a> QualityModel<'a> {
    pub fn new(surrogates: &'a Surrogates, targets: &'a TargetSpec, data: &Dataset) -> Result<Self> {
        targets.validate()?;
        let t = targets.objective_count();
        if surrogates.regressor.spec.output_width() != t
            || data.objective_count() != t
            || surrogates.normalizer.perf_mean.len() != t
        {
            return Err(Error::Contract(format!(
                "regressor predicts {} objectives, targets have {t}, dataset has {}",
                surrogates.regressor.spec.output_width(),
                data.objective_count()
            )));
        }
        if surrogates.regressor.spec.input_width() != data.design_width()
            || surrogates.classifier.spec.input_width() != data.design_width()
            || surrogates.normalizer.design_width != data.design_width()
        {
            return Err(Error::Contract(
                "surrogates were trained on a different design encoding".into(),
            ));
        }
        let perf_range = (0..t)
            .map(|k| {
                let col = data.performances().column(k);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        Ok(QualityModel {
            surrogates,
            targets,
            perf_range,
        })
    }

    /// Quality of a normalized design batch under `variant`. `weights` are
    /// the simplex weights of the random-weighting ablation; ignored when the
    /// variant scores with DTAI, equal weights when `None`.
    pub fn compute_quality(
        &self,
        x: &Matrix,
        variant: Variant,
        weights: Option<&[f64]>,
    ) -> Result<Quality> {
        let b = x.rows();
        let t = self.targets.objective_count();
        let reg = &self.surrogates.regressor;
        let norm = &self.surrogates.normalizer;
        if x.cols() != reg.spec.input_width() {
            return Err(Error::Contract(format!(
                "batch has {} design columns, surrogates expect {}",
                x.cols(),
                reg.spec.input_width()
            )));
        }
        let (z, reg_cache) = reg.forward(x)?;

        // DTAI of predictions, with d DTAI / d z (normalized prediction)
        let mut perf = Matrix::zeros(b, t);
        let mut dp_dz = Matrix::zeros(b, t);
        for i in 0..b {
            for k in 0..t {
                let raw = z[(i, k)] * norm.perf_std[k] + norm.perf_mean[k];
                let target = self.targets.targets[k];
                let held = raw.clamp(target * RATIO_FLOOR, target / RATIO_FLOOR);
                perf[(i, k)] = held;
                dp_dz[(i, k)] = if held == raw { norm.perf_std[k] } else { 0.0 };
            }
        }
        let mut ratios = Matrix::zeros(b, t);
        for i in 0..b {
            for k in 0..t {
                ratios[(i, k)] = ratio(perf[(i, k)], self.targets.targets[k], self.targets.directions[k]);
            }
        }
        let scores = dtai_score(&RatioMatrix::from_matrix(ratios)?, self.targets)?;

        let mut perf_score = vec![0.0; b];
        let mut dscore_dz = Matrix::zeros(b, t);
        if variant.uses_dtai() {
            for i in 0..b {
                perf_score[i] = scores.dtai[i];
                for k in 0..t {
                    let slope = ratio_slope(perf[(i, k)], self.targets.targets[k], self.targets.directions[k]);
                    dscore_dz[(i, k)] = scores.grad_wrt_ratio[(i, k)] * slope * dp_dz[(i, k)];
                }
            }
        } else {
            let equal = vec![1.0 / t as f64; t];
            let w = weights.unwrap_or(&equal);
            if w.len() != t {
                return Err(Error::Dimension(format!(
                    "{} objective weights for {t} objectives",
                    w.len()
                )));
            }
            for i in 0..b {
                for k in 0..t {
                    let raw = z[(i, k)] * norm.perf_std[k] + norm.perf_mean[k];
                    let (lo, hi) = self.perf_range[k];
                    let span = hi - lo;
                    let (scaled, d) = match self.targets.directions[k] {
                        Direction::Maximize => ((raw - lo) / span, 1.0 / span),
                        Direction::Minimize => ((hi - raw) / span, -1.0 / span),
                    };
                    perf_score[i] += w[k] * scaled;
                    dscore_dz[(i, k)] = w[k] * d * norm.perf_std[k];
                }
            }
        }

        let (feasibility, clf_cache) = if variant.uses_classifier() {
            let (f, cache) = self.surrogates.classifier.forward(x)?;
            (f.into_vec(), Some(cache))
        } else {
            (vec![1.0; b], None)
        };

        let mut q = vec![0.0; b];
        let mut active = vec![false; b];
        for i in 0..b {
            let raw = perf_score[i] * feasibility[i];
            q[i] = raw.clamp(Q_FLOOR, 1.0 - Q_FLOOR);
            active[i] = q[i] == raw;
        }

        let mut reg_up = Matrix::zeros(b, t);
        for i in 0..b {
            if !active[i] {
                continue;
            }
            for k in 0..t {
                reg_up[(i, k)] = feasibility[i] * dscore_dz[(i, k)];
            }
        }
        let (_, mut grad) = reg.backward(&reg_cache, &reg_up)?;
        if let Some(cache) = clf_cache {
            let mut clf_up = Matrix::zeros(b, 1);
            for i in 0..b {
                if active[i] {
                    clf_up[(i, 0)] = perf_score[i];
                }
            }
            let (_, g) = self.surrogates.classifier.backward(&cache, &clf_up)?;
            for (a, c) in grad.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *a += c;
            }
        }

        Ok(Quality {
            q,
            grad,
            dtai_hat: scores.dtai,
            feasibility,
            performance_score: perf_score,
        })
    }
}

/// Uniform draw from the probability simplex (normalized unit exponentials).
pub fn simplex_weights<R: Rng>(t: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..t).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Standard-normal latent batch.
pub fn latent_batch<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Matrix {
    let mut z = Matrix::zeros(n, dim);
    z.as_mut_slice()
        .iter_mut()
        .for_each(|v| *v = StandardNormal.sample(rng));
    z
}

/// Trained generator with everything needed to emit designs in data units.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorModel {
    pub network: Network,
    pub normalizer: Normalizer,
    pub design_columns: Vec<DesignColumn>,
    pub latent_dim: usize,
}

impl GeneratorModel {
    pub fn layout(&self) -> DesignLayout {
        DesignLayout::from_columns(&self.design_columns)
    }

    /// Emitted batch in data units (continuous) and one-hot (categorical).
    pub fn to_raw(&self, normalized: &Matrix) -> Result<Matrix> {
        self.normalizer.denormalize_designs(normalized)
    }
}

/// `n` normalized designs from a seeded latent draw. With `hard`, every
/// categorical group is replaced by the one-hot of its argmax.
pub fn sample_generator(model: &GeneratorModel, n: usize, seed: u64, hard: bool) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::Parameter("sample count must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = latent_batch(n, model.latent_dim, &mut rng);
    let mut x = model.network.predict(&z)?;
    if hard {
        harden(&mut x, &model.layout());
    }
    Ok(x)
}

/// Argmax one-hot of each categorical group, in place.
pub fn harden(x: &mut Matrix, layout: &DesignLayout) {
    for i in 0..x.rows() {
        let row = x.row_mut(i);
        for &(start, len) in &layout.categorical {
            let g = &mut row[start..start + len];
            let best = (0..len)
                .max_by(|&a, &b| g[a].total_cmp(&g[b]).then(b.cmp(&a)))
                .unwrap_or(0);
            g.iter_mut().enumerate().for_each(|(j, v)| *v = (j == best) as u8 as f64);
        }
    }
}

/// Mutable training state of the adversarial pair.
#[derive(Debug, Clone)]
pub struct GanState {
    pub generator: NetParams,
    pub discriminator: NetParams,
    pub generator_adam: AdamState,
    pub discriminator_adam: AdamState,
    pub rng: ChaCha8Rng,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub dpp_loss: f64,
    pub mean_q: f64,
    pub mean_dtai_hat: f64,
}

/// Network shapes, optimizers and the quality model of one training run.
pub struct GanTrainer<'a> {
    pub cfg: GanConfig,
    pub generator_spec: NetSpec,
    pub discriminator_spec: NetSpec,
    pub kernel: KernelConfig,
    pub quality: QualityModel<'a>,
    generator_adam: AdamConfig,
    discriminator_adam: AdamConfig,
}

impl<'a> GanTrainer<'a> {
    pub fn new(cfg: &GanConfig, layout: &DesignLayout, quality: QualityModel<'a>) -> Result<Self> {
        cfg.validate()?;
        Ok(GanTrainer {
            generator_spec: cfg.generator_spec(layout)?,
            discriminator_spec: cfg.discriminator_spec(layout.width)?,
            kernel: cfg.kernel_for(layout.width),
            quality,
            generator_adam: AdamConfig::new(cfg.generator_lr, cfg.beta1, cfg.beta2)?,
            discriminator_adam: AdamConfig::new(cfg.discriminator_lr, cfg.beta1, cfg.beta2)?,
            cfg: cfg.clone(),
        })
    }

    /// Seeded initial state: generator weights are drawn first, then the
    /// discriminator's, from the same stream that later drives sampling.
    pub fn init_state(&self) -> GanState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        let generator = NetParams::init(&self.generator_spec, &mut rng);
        let discriminator = NetParams::init(&self.discriminator_spec, &mut rng);
        GanState {
            generator,
            discriminator,
            generator_adam: AdamState::new(&self.generator_spec),
            discriminator_adam: AdamState::new(&self.discriminator_spec),
            rng,
            step: 0,
        }
    }

    fn diverged(&self, step: usize, what: &str, v: f64) -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(Error::Divergence {
                step,
                reason: format!("{what} became {v}"),
            })
        }
    }

    /// One discriminator update followed by one generator update.
    pub fn train_step(&self, state: &mut GanState, real: &Matrix) -> Result<StepDiagnostics> {
        let step = state.step;
        let b = self.cfg.batch_size;
        if real.rows() != b || real.cols() != self.generator_spec.output_width() {
            return Err(Error::Dimension(format!(
                "real batch is {}x{}, expected {b}x{}",
                real.rows(),
                real.cols(),
                self.generator_spec.output_width()
            )));
        }
        let tag = |e: Error| match e {
            Error::Divergence { reason, .. } => Error::Divergence { step, reason },
            other => other,
        };
        let inv_b = 1.0 / b as f64;

        // discriminator: ascend log D(real) + log(1 - D(fake))
        let z = latent_batch(b, self.cfg.latent_dim, &mut state.rng);
        let fake = crate::nn::predict(&state.generator, &self.generator_spec, &z)?;
        let (d_real, real_cache) =
            crate::nn::forward(&state.discriminator, &self.discriminator_spec, real)?;
        let (d_fake, fake_cache) =
            crate::nn::forward(&state.discriminator, &self.discriminator_spec, &fake)?;
        let mut d_loss = 0.0;
        let mut up_real = Matrix::zeros(b, 1);
        let mut up_fake = Matrix::zeros(b, 1);
        for i in 0..b {
            let (ar, af) = (d_real[(i, 0)], d_fake[(i, 0)]);
            d_loss -= inv_b * (ar.ln() + (1.0 - af).ln());
            up_real[(i, 0)] = -inv_b / ar;
            up_fake[(i, 0)] = inv_b / (1.0 - af);
        }
        self.diverged(step, "discriminator loss", d_loss)?;
        let (mut d_grads, _) = crate::nn::backward(
            &state.discriminator,
            &self.discriminator_spec,
            &real_cache,
            &up_real,
        )?;
        let (g_fake, _) = crate::nn::backward(
            &state.discriminator,
            &self.discriminator_spec,
            &fake_cache,
            &up_fake,
        )?;
        for (a, c) in d_grads.values_mut().zip(g_fake.values()) {
            *a += c;
        }
        adam_step(
            &mut state.discriminator,
            &d_grads,
            &mut state.discriminator_adam,
            &self.discriminator_adam,
        )
        .map_err(tag)?;

        // generator: descend -log D(G(z)) + gamma1 * dpp
        let z = latent_batch(b, self.cfg.latent_dim, &mut state.rng);
        let (x, g_cache) = crate::nn::forward(&state.generator, &self.generator_spec, &z)?;
        let (d_out, d_cache) =
            crate::nn::forward(&state.discriminator, &self.discriminator_spec, &x)?;
        let mut g_loss = 0.0;
        let mut up = Matrix::zeros(b, 1);
        for i in 0..b {
            let a = d_out[(i, 0)];
            g_loss -= inv_b * a.ln();
            up[(i, 0)] = -inv_b / a;
        }
        self.diverged(step, "generator loss", g_loss)?;
        let (_, mut dx) =
            crate::nn::backward(&state.discriminator, &self.discriminator_spec, &d_cache, &up)?;

        let gamma1 = self.cfg.effective_gamma1();
        let variant = self.cfg.variant;
        let (diag_dpp, mean_q, mean_dtai_hat) = if gamma1 > 0.0 {
            let weights = (!variant.uses_dtai())
                .then(|| simplex_weights(self.quality.targets.objective_count(), &mut state.rng));
            let quality = self.quality.compute_quality(&x, variant, weights.as_deref())?;
            let term = DppTerm::evaluate(&x, &quality.q, &self.kernel)?;
            self.diverged(step, "dpp loss", term.loss.loss)?;
            for i in 0..b {
                let dq = term.grad_q[i];
                for d in 0..x.cols() {
                    dx[(i, d)] += gamma1 * (term.grad_x[(i, d)] + dq * quality.grad[(i, d)]);
                }
            }
            (term.loss.loss, mean(&quality.q), mean(&quality.dtai_hat))
        } else {
            self.passive_diagnostics(&x)
        };

        let (g_grads, _) =
            crate::nn::backward(&state.generator, &self.generator_spec, &g_cache, &dx)?;
        adam_step(
            &mut state.generator,
            &g_grads,
            &mut state.generator_adam,
            &self.generator_adam,
        )
        .map_err(tag)?;
        state.step += 1;

        Ok(StepDiagnostics {
            step,
            d_loss,
            g_loss,
            dpp_loss: diag_dpp,
            mean_q,
            mean_dtai_hat,
        })
    }

    /// Quality-diversity readings for a run whose auxiliary term is off.
    /// Uses DTAI times feasibility and never touches the random stream.
    fn passive_diagnostics(&self, x: &Matrix) -> (f64, f64, f64) {
        let variant = match self.cfg.variant {
            Variant::Vanilla => Variant::Proposed,
            v => v,
        };
        match self.quality.compute_quality(x, variant, None) {
            Ok(q) => {
                let dpp = DppTerm::evaluate(x, &q.q, &self.kernel)
                    .map(|t| t.loss.loss)
                    .unwrap_or(f64::NAN);
                (dpp, mean(&q.q), mean(&q.dtai_hat))
            }
            Err(_) => (f64::NAN, f64::NAN, f64::NAN),
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Rows of the training log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<StepDiagnostics>,
}

impl TrainingLog {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W, preamble: &[String]) -> Result<()> {
        for line in preamble {
            writeln!(out, "# {line}").map_err(|e| Error::io("<log output>", e))?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "d_loss", "g_loss", "dpp_loss", "mean_q", "mean_dtai_hat"])?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                r.d_loss.to_string(),
                r.g_loss.to_string(),
                r.dpp_loss.to_string(),
                r.mean_q.to_string(),
                r.mean_dtai_hat.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<log output>", e))?;
        Ok(())
    }
}

/// Full training run over seeded minibatches of the normalized dataset.
pub fn train(
    data: &Dataset,
    surrogates: &Surrogates,
    targets: &TargetSpec,
    cfg: &GanConfig,
) -> Result<(GeneratorModel, TrainingLog)> {
    let layout = data.layout();
    let quality = QualityModel::new(surrogates, targets, data)?;
    let trainer = GanTrainer::new(cfg, &layout, quality)?;
    let x_all = surrogates.normalizer.normalize_designs(data.designs())?;
    let mut state = trainer.init_state();
    let mut log = TrainingLog::default();
    let n = x_all.rows();
    let mut idx = vec![0usize; cfg.batch_size];
    for step in 0..cfg.steps {
        idx.iter_mut()
            .for_each(|i| *i = state.rng.random_range(0..n));
        let real = x_all.select_rows(&idx);
        let diag = trainer.train_step(&mut state, &real)?;
        if step % cfg.log_every == 0 || step + 1 == cfg.steps {
            log.rows.push(diag);
        }
    }
    Ok((
        GeneratorModel {
            network: Network {
                spec: trainer.generator_spec.clone(),
                params: state.generator,
            },
            normalizer: surrogates.normalizer.clone(),
            design_columns: data.design_columns().to_vec(),
            latent_dim: cfg.latent_dim,
        },
        log,
    ))
}

/// On-disk generator: the network weight format plus schema and normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorCheckpoint {
    pub spec: NetSpec,
    pub layers: Vec<LayerRecord>,
    pub normalizer: Normalizer,
    pub design_columns: Vec<DesignColumn>,
    pub latent_dim: usize,
    pub variant: Variant,
    pub seed: u64,
    pub config_digest: String,
}

impl GeneratorCheckpoint {
    pub fn new(model: &GeneratorModel, variant: Variant, seed: u64, config_digest: &str) -> Self {
        let net = NetCheckpoint::from_network(&model.network, None, config_digest);
        GeneratorCheckpoint {
            spec: net.spec,
            layers: net.layers,
            normalizer: model.normalizer.clone(),
            design_columns: model.design_columns.clone(),
            latent_dim: model.latent_dim,
            variant,
            seed,
            config_digest: config_digest.to_string(),
        }
    }

    pub fn to_model(&self) -> Result<GeneratorModel> {
        let network = NetCheckpoint {
            spec: self.spec.clone(),
            layers: self.layers.clone(),
            normalizer: None,
            config_digest: self.config_digest.clone(),
        }
        .to_network()?;
        if network.spec.input_width() != self.latent_dim
            || network.spec.output_width() != DesignLayout::from_columns(&self.design_columns).width
        {
            return Err(Error::Contract(
                "generator checkpoint shapes disagree with its schema".into(),
            ));
        }
        Ok(GeneratorModel {
            network,
            normalizer: self.normalizer.clone(),
            design_columns: self.design_columns.clone(),
            latent_dim: self.latent_dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("no-dtai-no-clf".parse::<Variant>().unwrap(), Variant::NoDtaiNoClf);
        assert!("ctgan".parse::<Variant>().is_err());
        assert!(!Variant::NoDtaiNoClf.uses_dtai() && !Variant::NoDtaiNoClf.uses_classifier());
        assert!(Variant::Proposed.uses_dtai() && Variant::Proposed.uses_classifier());
    }

    #[test]
    fn vanilla_has_no_auxiliary_weight() {
        let cfg = GanConfig {
            variant: Variant::Vanilla,
            gamma1: 3.0,
            ..GanConfig::default()
        };
        assert_eq!(cfg.effective_gamma1(), 0.0);
    }

    #[test]
    fn simplex_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 1..6 {
            let w = simplex_weights(t, &mut rng);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn harden_picks_argmax() {
        let layout = DesignLayout {
            continuous: vec![0],
            categorical: vec![(1, 3)],
            width: 4,
        };
        let mut x = Matrix::from_rows(&[[0.3, 0.2, 0.5, 0.3], [0.9, 0.4, 0.4, 0.2]]).unwrap();
        harden(&mut x, &layout);
        assert_eq!(x.row(0), &[0.3, 0.0, 1.0, 0.0]);
        assert_eq!(x.row(1), &[0.9, 1.0, 0.0, 0.0]);
    }
}
