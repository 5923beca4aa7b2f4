//! Forward passes for the six architectures under comparison.
//!
//! All six share layer dimensions and the soft-shrinkage nonlinearity so the
//! controlled experiments isolate topology and constraints:
//!
//! - `ddse`: z¹ = 𝒩(W₁x_PCA); z^{j+1} = 𝒩(W₁x_PCA + z^j − W₃⁽ʲ⁾W₂⁽ʲ⁾z^j)
//! - `lista`: free dense W and per-iteration m×m matrices, no PCA,
//!   z^{j+1} = 𝒩(Wx + M⁽ʲ⁾z^j), dropout on the layer outputs while training
//! - `fc_plain` / `fc_dropout` / `fc_dropconnect`: a plain (k+1)-layer chain
//!   z^{j+1} = 𝒩(M⁽ʲ⁾z^j) with optional activation/weight masking
//! - `no_shortcut`: the ddse chain with the identity path and the W₁x_PCA
//!   re-injection both removed: z^{j+1} = 𝒩(W₃⁽ʲ⁾W₂⁽ʲ⁾z^j)
//!
//! Dropout semantics: while training, masks zero entries with probability
//! `drop_ratio` and nothing is rescaled; at evaluation the masked quantity is
//! scaled by (1 − drop_ratio) instead.

use crate::error::{Error, Result};
use crate::linalg::{matvec, Matrix, Vector};
use crate::pca::{pca_project, PcaBasis};
use crate::rng::Rng;

/// Architecture tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Ddse,
    Lista,
    FcPlain,
    FcDropout,
    FcDropconnect,
    NoShortcut,
}

impl Arch {
    pub const ALL: [Arch; 6] = [
        Arch::Ddse,
        Arch::Lista,
        Arch::FcPlain,
        Arch::FcDropout,
        Arch::FcDropconnect,
        Arch::NoShortcut,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Arch::Ddse => "ddse",
            Arch::Lista => "lista",
            Arch::FcPlain => "fc_plain",
            Arch::FcDropout => "fc_dropout",
            Arch::FcDropconnect => "fc_dropconnect",
            Arch::NoShortcut => "no_shortcut",
        }
    }

    pub fn parse(tag: &str) -> Result<Arch> {
        Arch::ALL
            .iter()
            .copied()
            .find(|a| a.tag() == tag)
            .ok_or_else(|| Error::config(format!("unknown architecture '{tag}'")))
    }

    /// Whether the forward pass projects inputs through the PCA basis.
    pub fn uses_pca(&self) -> bool {
        matches!(self, Arch::Ddse | Arch::NoShortcut)
    }

    /// Whether the weights carry cardinality constraints.
    pub fn is_constrained(&self) -> bool {
        matches!(self, Arch::Ddse | Arch::NoShortcut)
    }

    /// Whether w2_list/w3_list hold the factorized m×m map (vs mm_list).
    pub fn is_factorized(&self) -> bool {
        matches!(self, Arch::Ddse | Arch::NoShortcut)
    }

    pub fn uses_dropout(&self) -> bool {
        matches!(self, Arch::Lista | Arch::FcDropout | Arch::FcDropconnect)
    }
}

/// Parameters of one encoder. The factorized architectures (ddse,
/// no_shortcut) populate `w2_list`/`w3_list`; the free ones (lista, fc_*)
/// populate `mm_list` with k dense m×m matrices. Thresholds are one Vector
/// per shrinkage layer, of length 1 (scalar λ) or m (per-coordinate λ).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub arch: Arch,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub s: usize,
    pub classes: usize,
    pub w1: Matrix,              // m×n
    pub w2_list: Vec<Matrix>,    // k of n×m
    pub w3_list: Vec<Matrix>,    // k of m×n
    pub mm_list: Vec<Matrix>,    // k of m×m
    pub thresholds: Vec<Vector>, // k+1 of len 1 or m
    pub head_weight: Matrix,     // classes×m
    pub head_bias: Vector,       // classes
    pub drop_ratio: f64,
    /// Alternate no_shortcut reading: keep the W₁x_PCA re-injection and drop
    /// only the identity path, so z^{j+1} = 𝒩(W₁x_PCA − W₃⁽ʲ⁾W₂⁽ʲ⁾z^j).
    pub no_shortcut_reinject: bool,
}

impl EncoderModel {
    /// Structural validation: every tensor shape implied by (arch, n, m, k,
    /// classes) holds and thresholds are nonnegative.
    pub fn validate(&self) -> Result<()> {
        let err = |detail: String| Err(Error::contract("EncoderModel::validate", detail));
        if self.w1.rows != self.m || self.w1.cols != self.n {
            return err(format!("w1 is {}x{}, want {}x{}", self.w1.rows, self.w1.cols, self.m, self.n));
        }
        if self.arch.is_factorized() {
            if self.w2_list.len() != self.k || self.w3_list.len() != self.k || !self.mm_list.is_empty() {
                return err(format!(
                    "factorized arch wants {} w2/w3 and no mm, got {}/{}/{}",
                    self.k,
                    self.w2_list.len(),
                    self.w3_list.len(),
                    self.mm_list.len()
                ));
            }
            for w in &self.w2_list {
                if w.rows != self.n || w.cols != self.m {
                    return err(format!("w2 is {}x{}, want {}x{}", w.rows, w.cols, self.n, self.m));
                }
            }
            for w in &self.w3_list {
                if w.rows != self.m || w.cols != self.n {
                    return err(format!("w3 is {}x{}, want {}x{}", w.rows, w.cols, self.m, self.n));
                }
            }
        } else {
            if self.mm_list.len() != self.k || !self.w2_list.is_empty() || !self.w3_list.is_empty() {
                return err(format!(
                    "free arch wants {} mm and no w2/w3, got {}/{}/{}",
                    self.k,
                    self.mm_list.len(),
                    self.w2_list.len(),
                    self.w3_list.len()
                ));
            }
            for w in &self.mm_list {
                if w.rows != self.m || w.cols != self.m {
                    return err(format!("mm is {}x{}, want {0}x{0}", w.rows, w.cols));
                }
            }
        }
        if self.thresholds.len() != self.k + 1 {
            return err(format!("{} thresholds, want {}", self.thresholds.len(), self.k + 1));
        }
        for t in &self.thresholds {
            if t.len() != 1 && t.len() != self.m {
                return err(format!("threshold len {} is neither 1 nor m={}", t.len(), self.m));
            }
            if t.iter().any(|v| *v < 0.0) {
                return err("negative threshold".to_string());
            }
        }
        if self.head_weight.rows != self.classes || self.head_weight.cols != self.m {
            return err(format!(
                "head is {}x{}, want {}x{}",
                self.head_weight.rows, self.head_weight.cols, self.classes, self.m
            ));
        }
        if self.head_bias.len() != self.classes {
            return err(format!("head bias len {}, want {}", self.head_bias.len(), self.classes));
        }
        if !(0.0..1.0).contains(&self.drop_ratio) {
            return err(format!("drop_ratio {} outside [0,1)", self.drop_ratio));
        }
        Ok(())
    }

    /// True when every parameter entry is finite.
    pub fn is_finite(&self) -> bool {
        self.w1.is_finite()
            && self.w2_list.iter().all(Matrix::is_finite)
            && self.w3_list.iter().all(Matrix::is_finite)
            && self.mm_list.iter().all(Matrix::is_finite)
            && self.thresholds.iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.head_weight.is_finite()
            && self.head_bias.iter().all(|v| v.is_finite())
    }
}

/// Binary masks recorded during a training-mode forward so backward (and
/// finite-difference replays) see the identical network.
#[derive(Debug, Clone, PartialEq)]
pub enum DropoutMasks {
    /// One 0/1 vector of length m per shrinkage layer. For fc_dropout the
    /// mask zeroes activations after shrinkage; for lista it zeroes the
    /// layer's linear output before shrinkage.
    Activation(Vec<Vector>),
    /// fc_dropconnect: one 0/1 matrix per linear layer (w1 then the m×m's).
    Weight(Vec<Matrix>),
}

/// Record of one forward pass. `x_pca` is the vector the first layer
/// actually consumed: the PCA projection for ddse/no_shortcut, the raw input
/// otherwise. `pre_activations[i]` is the exact input to the i-th shrinkage.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub x_pca: Vector,
    pub pre_activations: Vec<Vector>,
    pub codes: Vec<Vector>,
    pub logits: Vector,
    pub dropout_masks: Option<DropoutMasks>,
}

/// Threshold lookup that is uniform over scalar and per-coordinate layers.
#[inline]
pub(crate) fn thr_at(thresholds: &Vector, i: usize) -> f64 {
    if thresholds.len() == 1 {
        thresholds[0]
    } else {
        thresholds[i]
    }
}

pub(crate) fn shrink_layer(u: &Vector, thresholds: &Vector) -> Vector {
    Vector::from_fn(u.len(), |i| {
        let lam = thr_at(thresholds, i);
        u[i].signum() * (u[i].abs() - lam).max(0.0)
    })
}

enum MaskSource<'a> {
    Eval,
    Draw(&'a mut Rng),
    Fixed(&'a DropoutMasks),
}

fn draw_activation_masks(k: usize, m: usize, keep: f64, rng: &mut Rng) -> DropoutMasks {
    let masks = (0..=k)
        .map(|_| Vector::from_fn(m, |_| if rng.bernoulli(keep) { 1.0 } else { 0.0 }))
        .collect();
    DropoutMasks::Activation(masks)
}

fn draw_weight_masks(model: &EncoderModel, keep: f64, rng: &mut Rng) -> DropoutMasks {
    let mut masks = Vec::with_capacity(model.k + 1);
    masks.push(Matrix::from_fn(model.m, model.n, |_, _| {
        if rng.bernoulli(keep) {
            1.0
        } else {
            0.0
        }
    }));
    for _ in 0..model.k {
        masks.push(Matrix::from_fn(model.m, model.m, |_, _| {
            if rng.bernoulli(keep) {
                1.0
            } else {
                0.0
            }
        }));
    }
    DropoutMasks::Weight(masks)
}

pub(crate) fn masked_weight(w: &Matrix, mask: &Matrix) -> Matrix {
    let mut out = w.clone();
    for (o, m) in out.data.iter_mut().zip(&mask.data) {
        *o *= m;
    }
    out
}

fn mul_mask(v: &mut Vector, mask: &Vector) {
    for (x, m) in v.iter_mut().zip(mask.iter()) {
        *x *= m;
    }
}

fn scale_vec(v: &mut Vector, c: f64) {
    for x in v.iter_mut() {
        *x *= c;
    }
}

fn forward_core(
    model: &EncoderModel,
    basis: Option<&PcaBasis>,
    x: &Vector,
    training: bool,
    masks: MaskSource<'_>,
) -> Result<ForwardTrace> {
    if x.len() != model.n {
        return Err(Error::shape(
            "forward",
            format!("input len {}, model expects n={}", x.len(), model.n),
        ));
    }
    let input = if model.arch.uses_pca() {
        let basis = basis.ok_or_else(|| {
            Error::contract("forward", format!("{} requires a PCA basis", model.arch.tag()))
        })?;
        pca_project(basis, x)?
    } else {
        x.clone()
    };

    let dropout_active = model.arch.uses_dropout() && model.drop_ratio > 0.0;
    let keep = 1.0 - model.drop_ratio;
    let masks: Option<DropoutMasks> = if dropout_active && training {
        match masks {
            MaskSource::Fixed(m) => Some(m.clone()),
            MaskSource::Draw(rng) => Some(match model.arch {
                Arch::FcDropconnect => draw_weight_masks(model, keep, rng),
                _ => draw_activation_masks(model.k, model.m, keep, rng),
            }),
            MaskSource::Eval => {
                return Err(Error::contract(
                    "forward",
                    "training-mode dropout needs an rng or fixed masks",
                ))
            }
        }
    } else {
        None
    };
    let eval_scale = dropout_active && !training;

    let weight_mask = |layer: usize| -> Option<&Matrix> {
        match &masks {
            Some(DropoutMasks::Weight(ws)) => Some(&ws[layer]),
            _ => None,
        }
    };
    let act_mask = |layer: usize| -> Option<&Vector> {
        match &masks {
            Some(DropoutMasks::Activation(vs)) => Some(&vs[layer]),
            _ => None,
        }
    };

    let mut pre_activations = Vec::with_capacity(model.k + 1);
    let mut codes = Vec::with_capacity(model.k + 1);

    // First layer: W₁ (or its masked/scaled variant) times the input.
    let mut a0 = match weight_mask(0) {
        Some(mask) => matvec(&masked_weight(&model.w1, mask), &input)?,
        None => matvec(&model.w1, &input)?,
    };
    if eval_scale && model.arch == Arch::FcDropconnect {
        scale_vec(&mut a0, keep);
    }
    let mut pre = a0.clone();
    if model.arch == Arch::Lista {
        if let Some(mask) = act_mask(0) {
            mul_mask(&mut pre, mask);
        }
        if eval_scale {
            scale_vec(&mut pre, keep);
        }
    }
    let mut z = shrink_layer(&pre, &model.thresholds[0]);
    if model.arch == Arch::FcDropout {
        if let Some(mask) = act_mask(0) {
            mul_mask(&mut z, mask);
        }
        if eval_scale {
            scale_vec(&mut z, keep);
        }
    }
    pre_activations.push(pre);
    codes.push(z.clone());

    for j in 0..model.k {
        let mut pre = match model.arch {
            Arch::Ddse | Arch::NoShortcut => {
                let u = matvec(&model.w2_list[j], &z)?;
                let w3u = matvec(&model.w3_list[j], &u)?;
                if model.arch == Arch::Ddse {
                    Vector::from_fn(model.m, |i| a0[i] + z[i] - w3u[i])
                } else if model.no_shortcut_reinject {
                    Vector::from_fn(model.m, |i| a0[i] - w3u[i])
                } else {
                    w3u
                }
            }
            Arch::Lista | Arch::FcPlain | Arch::FcDropout | Arch::FcDropconnect => {
                let mut mz = match weight_mask(j + 1) {
                    Some(mask) => matvec(&masked_weight(&model.mm_list[j], mask), &z)?,
                    None => matvec(&model.mm_list[j], &z)?,
                };
                if eval_scale && model.arch == Arch::FcDropconnect {
                    scale_vec(&mut mz, keep);
                }
                if model.arch == Arch::Lista {
                    Vector::from_fn(model.m, |i| a0[i] + mz[i])
                } else {
                    mz
                }
            }
        };
        if model.arch == Arch::Lista {
            if let Some(mask) = act_mask(j + 1) {
                mul_mask(&mut pre, mask);
            }
            if eval_scale {
                scale_vec(&mut pre, keep);
            }
        }
        z = shrink_layer(&pre, &model.thresholds[j + 1]);
        if model.arch == Arch::FcDropout {
            if let Some(mask) = act_mask(j + 1) {
                mul_mask(&mut z, mask);
            }
            if eval_scale {
                scale_vec(&mut z, keep);
            }
        }
        pre_activations.push(pre);
        codes.push(z.clone());
    }

    let mut logits = matvec(&model.head_weight, &z)?;
    for (l, b) in logits.iter_mut().zip(model.head_bias.iter()) {
        *l += b;
    }
    Ok(ForwardTrace {
        x_pca: input,
        pre_activations,
        codes,
        logits,
        dropout_masks: masks,
    })
}

/// Forward pass of the ddse architecture (pure: no masks are involved).
pub fn ddse_forward(model: &EncoderModel, basis: &PcaBasis, x: &Vector) -> Result<ForwardTrace> {
    if model.arch != Arch::Ddse {
        return Err(Error::contract(
            "ddse_forward",
            format!("architecture is {}", model.arch.tag()),
        ));
    }
    forward_core(model, Some(basis), x, false, MaskSource::Eval)
}

/// Forward pass of the lista architecture; dropout masks are drawn from
/// `rng` when `training` is set and `drop_ratio > 0`.
pub fn lista_forward(
    model: &EncoderModel,
    x: &Vector,
    training: bool,
    rng: Option<&mut Rng>,
) -> Result<ForwardTrace> {
    if model.arch != Arch::Lista {
        return Err(Error::contract(
            "lista_forward",
            format!("architecture is {}", model.arch.tag()),
        ));
    }
    let masks = match rng {
        Some(r) => MaskSource::Draw(r),
        None => MaskSource::Eval,
    };
    forward_core(model, None, x, training, masks)
}

/// Forward pass of the fc_* and no_shortcut baselines. `basis` is required
/// for no_shortcut (its first layer consumes x_PCA) and ignored otherwise.
pub fn baseline_forward(
    model: &EncoderModel,
    basis: Option<&PcaBasis>,
    x: &Vector,
    training: bool,
    rng: Option<&mut Rng>,
) -> Result<ForwardTrace> {
    if !matches!(
        model.arch,
        Arch::FcPlain | Arch::FcDropout | Arch::FcDropconnect | Arch::NoShortcut
    ) {
        return Err(Error::contract(
            "baseline_forward",
            format!("architecture is {}", model.arch.tag()),
        ));
    }
    let masks = match rng {
        Some(r) => MaskSource::Draw(r),
        None => MaskSource::Eval,
    };
    forward_core(model, basis, x, training, masks)
}

/// Architecture-dispatching forward.
pub fn forward(
    model: &EncoderModel,
    basis: Option<&PcaBasis>,
    x: &Vector,
    training: bool,
    rng: Option<&mut Rng>,
) -> Result<ForwardTrace> {
    let masks = match rng {
        Some(r) => MaskSource::Draw(r),
        None => MaskSource::Eval,
    };
    forward_core(model, basis, x, training, masks)
}

/// Training-mode forward that replays previously recorded masks; used by the
/// finite-difference harness so perturbed re-evaluations see the identical
/// network.
pub fn forward_with_masks(
    model: &EncoderModel,
    basis: Option<&PcaBasis>,
    x: &Vector,
    masks: &DropoutMasks,
) -> Result<ForwardTrace> {
    forward_core(model, basis, x, true, MaskSource::Fixed(masks))
}

/// Cross-entropy with log-sum-exp stabilization. Returns the loss and its
/// gradient with respect to the logits: softmax(logits) − onehot(label).
pub fn softmax_loss(logits: &Vector, label: usize) -> Result<(f64, Vector)> {
    if label >= logits.len() {
        return Err(Error::contract(
            "softmax_loss",
            format!("label {} out of range for {} classes", label, logits.len()),
        ));
    }
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
    let loss = sum.ln() + max - logits[label];
    let mut grad = Vector::from_fn(logits.len(), |i| (logits[i] - max).exp() / sum);
    grad[label] -= 1.0;
    Ok((loss, grad))
}

/// Counts actual nonzero weight entries (head excluded) and the dense
/// equivalent mn + km² of the unrolled layer shapes.
pub fn count_parameters(model: &EncoderModel) -> (usize, usize) {
    let nonzeros = model.w1.nnz()
        + model.w2_list.iter().map(Matrix::nnz).sum::<usize>()
        + model.w3_list.iter().map(Matrix::nnz).sum::<usize>()
        + model.mm_list.iter().map(Matrix::nnz).sum::<usize>();
    let dense_equivalent = model.m * model.n + model.k * model.m * model.m;
    (nonzeros, dense_equivalent)
}
