//! Projected-gradient training: SGD with momentum, a multi-step projection
//! cadence, structured sparse initialization, and plateau-based lr decay.
//!
//! Between projections the trajectory is exactly unconstrained SGD with
//! momentum; every `projection_interval` optimizer steps the constrained
//! tensors are projected in place (velocity is not reset). Epoch-end
//! validation always scores a projected copy, and the returned model is the
//! best-validation projected snapshot (strict improvement).

use crate::autodiff::{batch_forward, batch_gradient, batch_softmax_loss, GradientSet};
use crate::data::LabeledDataset;
use crate::encoder::{count_parameters, Arch, EncoderModel};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, Matrix, Vector};
use crate::pca::{pca_fit, PcaBasis};
use crate::projection::project_model;
use crate::rng::Rng;
use serde::{Deserialize, Serialize};

/// Scaling of the shared sparse init pattern S.
///
/// `Ones` places literal ones (the verbatim recipe); `InvSqrtS` scales by
/// 1/sqrt(s); `Spectral` rescales S to unit spectral norm so the effective
/// initial dictionary D0*S has spectral norm exactly 1 under an orthonormal
/// basis, which keeps the first forward pass inside the shrinkage's dynamic
/// range at large s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScaleMode {
    Ones,
    InvSqrtS,
    Spectral,
}

fn d_learning_rate() -> f64 {
    0.01
}
fn d_momentum() -> f64 {
    0.9
}
fn d_batch_size() -> usize {
    128
}
fn d_projection_interval() -> usize {
    15
}
fn d_max_epochs() -> usize {
    40
}
fn d_plateau_patience() -> usize {
    5
}
fn d_lr_decay_factor() -> f64 {
    0.1
}
fn d_max_lr_decays() -> usize {
    2
}
fn d_seed() -> u64 {
    0
}
fn d_s() -> usize {
    196
}
fn d_m() -> usize {
    256
}
fn d_k() -> usize {
    2
}
fn d_classes() -> usize {
    10
}
fn d_lambda_init() -> f64 {
    0.05
}
fn d_init_scale_mode() -> InitScaleMode {
    InitScaleMode::Ones
}
fn d_drop_ratio() -> f64 {
    0.5
}

/// Hyperparameters for one training run. Every field has a default so a
/// config file may specify only what it overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    /// Optimizer steps between projections.
    #[serde(default = "d_projection_interval")]
    pub projection_interval: usize,
    #[serde(default = "d_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "d_plateau_patience")]
    pub plateau_patience: usize,
    #[serde(default = "d_lr_decay_factor")]
    pub lr_decay_factor: f64,
    #[serde(default = "d_max_lr_decays")]
    pub max_lr_decays: usize,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_s")]
    pub s: usize,
    #[serde(default = "d_m")]
    pub m: usize,
    #[serde(default = "d_k")]
    pub k: usize,
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default = "d_lambda_init")]
    pub lambda_init: f64,
    #[serde(default = "d_init_scale_mode")]
    pub init_scale_mode: InitScaleMode,
    /// One threshold per coordinate instead of one scalar per layer.
    #[serde(default)]
    pub per_coord_thresholds: bool,
    #[serde(default = "d_drop_ratio")]
    pub drop_ratio: f64,
    #[serde(default)]
    pub no_shortcut_reinject: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: d_learning_rate(),
            momentum: d_momentum(),
            batch_size: d_batch_size(),
            projection_interval: d_projection_interval(),
            max_epochs: d_max_epochs(),
            plateau_patience: d_plateau_patience(),
            lr_decay_factor: d_lr_decay_factor(),
            max_lr_decays: d_max_lr_decays(),
            seed: d_seed(),
            s: d_s(),
            m: d_m(),
            k: d_k(),
            classes: d_classes(),
            lambda_init: d_lambda_init(),
            init_scale_mode: d_init_scale_mode(),
            per_coord_thresholds: false,
            drop_ratio: d_drop_ratio(),
            no_shortcut_reinject: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive and finite"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.projection_interval == 0 {
            return Err(Error::config("projection_interval must be at least 1"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::config("lr_decay_factor must lie in (0, 1)"));
        }
        if self.s == 0 || self.m == 0 {
            return Err(Error::config("s and m must be at least 1"));
        }
        if self.classes < 2 {
            return Err(Error::config("classes must be at least 2"));
        }
        if !(self.lambda_init >= 0.0 && self.lambda_init.is_finite()) {
            return Err(Error::config("lambda_init must be nonnegative and finite"));
        }
        if !(0.0..1.0).contains(&self.drop_ratio) {
            return Err(Error::config("drop_ratio must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// One row of the per-epoch metrics stream.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_error: f64,
    pub lr: f64,
    pub nonzeros: usize,
}

/// Full optimizer state; `model` is the live (unprojected between events)
/// iterate during training and the best-validation snapshot after
/// `pgd_train` returns.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: EncoderModel,
    pub velocity: GradientSet,
    pub step_count: u64,
    pub epoch: usize,
    pub best_val_error: f64,
    pub lr_current: f64,
    pub history: Vec<EpochRecord>,
}

/// Hooks for harnesses that audit the training trajectory.
pub enum TrainEvent<'a> {
    /// Fired immediately after an in-loop projection was applied.
    Projection {
        step: u64,
        epoch: usize,
        model: &'a EncoderModel,
    },
    /// Fired after epoch-end validation of the projected copy.
    EpochEnd {
        epoch: usize,
        model: &'a EncoderModel,
        val_error: f64,
    },
}

fn structured_sparse_init(
    arch: Arch,
    n: usize,
    m: usize,
    k: usize,
    s: usize,
    basis: &PcaBasis,
    rng: &mut Rng,
    config: &TrainConfig,
) -> Result<EncoderModel> {
    if s > n {
        return Err(Error::contract(
            "init_ddse",
            format!("s = {s} exceeds the input dimension n = {n}"),
        ));
    }
    if s == 0 || m == 0 || n == 0 {
        return Err(Error::contract("init_ddse", "n, m, s must be at least 1"));
    }
    if basis.basis.rows != n || basis.basis.cols != n {
        return Err(Error::shape(
            "init_ddse",
            format!(
                "basis is {}x{}, expected the full {n}x{n} component matrix",
                basis.basis.rows, basis.basis.cols
            ),
        ));
    }
    // S is n x m with exactly s nonzeros per column; draw order is fixed:
    // supports column by column, then the head entries.
    let mut s_mat = Matrix::zeros(n, m);
    let fill = match config.init_scale_mode {
        InitScaleMode::Ones | InitScaleMode::Spectral => 1.0,
        InitScaleMode::InvSqrtS => 1.0 / (s as f64).sqrt(),
    };
    for col in 0..m {
        for row in rng.choose(n, s) {
            s_mat.set(row, col, fill);
        }
    }
    if config.init_scale_mode == InitScaleMode::Spectral {
        let sigma = spectral_norm(&s_mat)?;
        s_mat.scale(1.0 / sigma);
    }
    let w1 = s_mat.transpose();
    let model = EncoderModel {
        arch,
        n,
        m,
        k,
        s,
        classes: config.classes,
        w1: w1.clone(),
        w2_list: vec![s_mat; k],
        w3_list: vec![w1; k],
        mm_list: Vec::new(),
        thresholds: init_thresholds(m, k, config),
        head_weight: init_head(m, config, rng),
        head_bias: Vector::zeros(config.classes),
        drop_ratio: 0.0,
        no_shortcut_reinject: config.no_shortcut_reinject,
    };
    model.validate()?;
    Ok(model)
}

fn init_thresholds(m: usize, k: usize, config: &TrainConfig) -> Vec<Vector> {
    let len = if config.per_coord_thresholds { m } else { 1 };
    (0..=k)
        .map(|_| Vector::from_fn(len, |_| config.lambda_init))
        .collect()
}

fn init_head(m: usize, config: &TrainConfig, rng: &mut Rng) -> Matrix {
    let hw = 1.0 / (m as f64).sqrt();
    Matrix::random_uniform(config.classes, m, -hw, hw, rng)
}

/// Structured initialization for the factorized encoder: one shared pattern
/// S with s ones per column, w1 = S^T, every w2 = S, every w3 = S^T.
pub fn init_ddse(
    n: usize,
    m: usize,
    k: usize,
    s: usize,
    basis: &PcaBasis,
    rng: &mut Rng,
    config: &TrainConfig,
) -> Result<EncoderModel> {
    structured_sparse_init(Arch::Ddse, n, m, k, s, basis, rng, config)
}

/// Architecture dispatcher. Factorized archs share the structured sparse
/// init; free-weight archs get Glorot-uniform dense tensors.
pub fn init_model(
    arch: Arch,
    n: usize,
    basis: Option<&PcaBasis>,
    rng: &mut Rng,
    config: &TrainConfig,
) -> Result<EncoderModel> {
    let (m, k) = (config.m, config.k);
    if arch.is_factorized() {
        let basis = basis.ok_or_else(|| {
            Error::contract("init_model", format!("{} needs a PCA basis", arch.tag()))
        })?;
        return structured_sparse_init(arch, n, m, k, config.s, basis, rng, config);
    }
    if n == 0 || m == 0 {
        return Err(Error::contract("init_model", "n and m must be at least 1"));
    }
    let hw1 = (6.0 / (n + m) as f64).sqrt();
    let hwm = (6.0 / (2 * m) as f64).sqrt();
    let w1 = Matrix::random_uniform(m, n, -hw1, hw1, rng);
    let mm_list: Vec<Matrix> = (0..k)
        .map(|_| Matrix::random_uniform(m, m, -hwm, hwm, rng))
        .collect();
    let model = EncoderModel {
        arch,
        n,
        m,
        k,
        s: config.s,
        classes: config.classes,
        w1,
        w2_list: Vec::new(),
        w3_list: Vec::new(),
        mm_list,
        thresholds: init_thresholds(m, k, config),
        head_weight: init_head(m, config, rng),
        head_bias: Vector::zeros(config.classes),
        drop_ratio: if arch.uses_dropout() { config.drop_ratio } else { 0.0 },
        no_shortcut_reinject: config.no_shortcut_reinject,
    };
    model.validate()?;
    Ok(model)
}

fn update_tensor(param: &mut Matrix, vel: &mut Matrix, grad: &Matrix, lr: f64, momentum: f64) {
    for ((v, g), p) in vel.data.iter_mut().zip(&grad.data).zip(param.data.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// One SGD-with-momentum update of every learnable tensor, thresholds
/// clamped at zero from below. Increments `step_count`.
pub fn sgd_momentum_step(state: &mut TrainState, grads: &GradientSet) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::contract(
            "sgd_momentum_step",
            format!("non-finite gradient at step {}", state.step_count),
        ));
    }
    let lr = state.lr_current;
    let momentum = state.config.momentum;
    let model = &mut state.model;
    let vel = &mut state.velocity;
    update_tensor(&mut model.w1, &mut vel.d_w1, &grads.d_w1, lr, momentum);
    for ((p, v), g) in model
        .w2_list
        .iter_mut()
        .zip(&mut vel.d_w2_list)
        .zip(&grads.d_w2_list)
    {
        update_tensor(p, v, g, lr, momentum);
    }
    for ((p, v), g) in model
        .w3_list
        .iter_mut()
        .zip(&mut vel.d_w3_list)
        .zip(&grads.d_w3_list)
    {
        update_tensor(p, v, g, lr, momentum);
    }
    for ((p, v), g) in model
        .mm_list
        .iter_mut()
        .zip(&mut vel.d_mm_list)
        .zip(&grads.d_mm_list)
    {
        update_tensor(p, v, g, lr, momentum);
    }
    for ((p, v), g) in model
        .thresholds
        .iter_mut()
        .zip(&mut vel.d_thresholds)
        .zip(&grads.d_thresholds)
    {
        for ((pv, vv), gv) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
            *vv = momentum * *vv + gv;
            *pv = (*pv - lr * *vv).max(0.0);
        }
    }
    update_tensor(
        &mut model.head_weight,
        &mut vel.d_head_weight,
        &grads.d_head_weight,
        lr,
        momentum,
    );
    for ((pv, vv), gv) in model
        .head_bias
        .iter_mut()
        .zip(vel.d_head_bias.iter_mut())
        .zip(grads.d_head_bias.iter())
    {
        *vv = momentum * *vv + gv;
        *pv -= lr * *vv;
    }
    state.step_count += 1;
    if !vel.is_finite() || !model.is_finite() {
        return Err(Error::contract(
            "sgd_momentum_step",
            format!("non-finite parameters or velocity after step {}", state.step_count),
        ));
    }
    Ok(())
}

fn projected_copy(model: &EncoderModel) -> Result<EncoderModel> {
    let mut copy = model.clone();
    if model.arch.is_constrained() {
        project_model(&mut copy)?;
    }
    Ok(copy)
}

fn gather(features: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(features.rows, idx.len());
    for (b, &col) in idx.iter().enumerate() {
        for row in 0..features.rows {
            out.set(row, b, features.at(row, col));
        }
    }
    out
}

fn check_dataset(op: &'static str, data: &LabeledDataset, classes: usize) -> Result<()> {
    if data.len() == 0 {
        return Err(Error::contract(op, "dataset is empty"));
    }
    if let Some(&bad) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::contract(
            op,
            format!("label {bad} out of range for {classes} classes"),
        ));
    }
    Ok(())
}

/// Error rate (argmax misclassification) and mean cross-entropy in eval
/// mode, computed in batched chunks.
pub fn evaluate(
    model: &EncoderModel,
    basis: Option<&PcaBasis>,
    data: &LabeledDataset,
) -> Result<(f64, f64)> {
    check_dataset("evaluate", data, model.classes)?;
    let t = data.len();
    let mut wrong = 0usize;
    let mut loss_sum = 0.0;
    let chunk = 512;
    let mut start = 0;
    while start < t {
        let end = (start + chunk).min(t);
        let idx: Vec<usize> = (start..end).collect();
        let xs = gather(&data.features, &idx);
        let labels = &data.labels[start..end];
        let trace = batch_forward(model, basis, &xs, false, None)?;
        let (mean_loss, _) = batch_softmax_loss(&trace.logits, labels)?;
        loss_sum += mean_loss * (end - start) as f64;
        for (col, &label) in labels.iter().enumerate() {
            let mut best = 0usize;
            let mut best_v = trace.logits.at(0, col);
            for c in 1..trace.logits.rows {
                let v = trace.logits.at(c, col);
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            if best != label {
                wrong += 1;
            }
        }
        start = end;
    }
    Ok((wrong as f64 / t as f64, loss_sum / t as f64))
}

/// Train per the recipe, fitting the PCA basis on the given training set
/// when the architecture consumes one.
pub fn pgd_train(
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainConfig,
    arch: Arch,
) -> Result<TrainState> {
    let basis = if arch.uses_pca() {
        Some(pca_fit(&train.features)?)
    } else {
        None
    };
    pgd_train_with_basis(train, val, config, arch, basis.as_ref())
}

/// Train with an externally fitted basis (e.g. one shared across subsample
/// fractions of the same pool).
pub fn pgd_train_with_basis(
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainConfig,
    arch: Arch,
    basis: Option<&PcaBasis>,
) -> Result<TrainState> {
    pgd_train_observed(train, val, config, arch, basis, &mut |_| {})
}

/// Training loop with an audit hook fired at every projection event and
/// every epoch end.
pub fn pgd_train_observed(
    train: &LabeledDataset,
    val: &LabeledDataset,
    config: &TrainConfig,
    arch: Arch,
    basis: Option<&PcaBasis>,
    observer: &mut dyn FnMut(TrainEvent<'_>),
) -> Result<TrainState> {
    config.validate()?;
    check_dataset("pgd_train", train, config.classes)?;
    check_dataset("pgd_train", val, config.classes)?;
    if train.features.rows != val.features.rows {
        return Err(Error::shape(
            "pgd_train",
            format!(
                "train dim {} != val dim {}",
                train.features.rows, val.features.rows
            ),
        ));
    }
    if arch.uses_pca() && basis.is_none() {
        return Err(Error::contract(
            "pgd_train",
            format!("{} needs a PCA basis", arch.tag()),
        ));
    }
    let n = train.features.rows;
    let base = Rng::new(config.seed);
    let mut init_rng = base.stream("init");
    let mut shuffle_rng = base.stream("shuffle");
    let mut dropout_rng = base.stream("dropout");

    let model = init_model(arch, n, basis, &mut init_rng, config)?;
    let velocity = GradientSet::zeros_like(&model);
    let mut state = TrainState {
        config: config.clone(),
        model,
        velocity,
        step_count: 0,
        epoch: 0,
        best_val_error: f64::INFINITY,
        lr_current: config.learning_rate,
        history: Vec::new(),
    };
    let mut best_model = projected_copy(&state.model)?;
    let mut bad_epochs = 0usize;
    let mut decays_done = 0usize;
    let t = train.len();

    for epoch in 0..config.max_epochs {
        state.epoch = epoch;
        let order = shuffle_rng.permutation(t);
        let mut loss_weighted = 0.0;
        for idx in order.chunks(config.batch_size) {
            let xs = gather(&train.features, idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train.labels[i]).collect();
            let (grads, loss) = batch_gradient(
                &state.model,
                basis,
                &xs,
                &labels,
                true,
                Some(&mut dropout_rng),
            )?;
            sgd_momentum_step(&mut state, &grads)?;
            loss_weighted += loss * idx.len() as f64;
            if arch.is_constrained() && state.step_count % config.projection_interval as u64 == 0 {
                project_model(&mut state.model)?;
                observer(TrainEvent::Projection {
                    step: state.step_count,
                    epoch,
                    model: &state.model,
                });
            }
        }
        let eval_model = projected_copy(&state.model)?;
        let (val_error, _) = evaluate(&eval_model, basis, val)?;
        let nonzeros = count_parameters(&eval_model).0;
        state.history.push(EpochRecord {
            epoch,
            train_loss: loss_weighted / t as f64,
            val_error,
            lr: state.lr_current,
            nonzeros,
        });
        observer(TrainEvent::EpochEnd {
            epoch,
            model: &eval_model,
            val_error,
        });
        if val_error < state.best_val_error {
            state.best_val_error = val_error;
            best_model = eval_model;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.plateau_patience && decays_done < config.max_lr_decays {
                state.lr_current *= config.lr_decay_factor;
                decays_done += 1;
                bad_epochs = 0;
            }
        }
    }

    state.model = best_model;
    if arch.is_constrained() {
        project_model(&mut state.model)?;
    }
    Ok(state)
}
