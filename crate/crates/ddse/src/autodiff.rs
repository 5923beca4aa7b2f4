//! Hand-derived reverse-mode gradients for every architecture.
//!
//! Shrinkage uses the almost-everywhere derivative: ∂𝒩(u)ᵢ/∂uᵢ = 1 if
//! |uᵢ| > λ else 0, and ∂𝒩(u)ᵢ/∂λ = −sign(uᵢ) on the same set; at the kink
//! the subgradient 0 is taken. Shortcut paths accumulate additively, and W₁
//! collects one contribution per re-injection (k+1 terms for ddse).
//!
//! `backward` is the per-sample reference; `batch_gradient` is the batched
//! training path over column-major sample matrices. The two are tied by an
//! equivalence property (batch mean of per-sample gradients within 1e-12).

use crate::encoder::{
    masked_weight, thr_at, Arch, DropoutMasks, EncoderModel, ForwardTrace,
};
use crate::error::{Error, Result};
use crate::linalg::{matmul, matmul_nt, matmul_tn, matvec_t, Matrix, Vector};
use crate::pca::{pca_project_batch, PcaBasis};
use crate::rng::Rng;

/// Gradients for every learnable tensor; shapes mirror `EncoderModel`.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub d_w1: Matrix,
    pub d_w2_list: Vec<Matrix>,
    pub d_w3_list: Vec<Matrix>,
    pub d_mm_list: Vec<Matrix>,
    pub d_thresholds: Vec<Vector>,
    pub d_head_weight: Matrix,
    pub d_head_bias: Vector,
}

impl GradientSet {
    pub fn zeros_like(model: &EncoderModel) -> Self {
        GradientSet {
            d_w1: Matrix::zeros(model.w1.rows, model.w1.cols),
            d_w2_list: model
                .w2_list
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            d_w3_list: model
                .w3_list
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            d_mm_list: model
                .mm_list
                .iter()
                .map(|w| Matrix::zeros(w.rows, w.cols))
                .collect(),
            d_thresholds: model.thresholds.iter().map(|t| Vector::zeros(t.len())).collect(),
            d_head_weight: Matrix::zeros(model.head_weight.rows, model.head_weight.cols),
            d_head_bias: Vector::zeros(model.head_bias.len()),
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.d_w1.scale(c);
        for w in &mut self.d_w2_list {
            w.scale(c);
        }
        for w in &mut self.d_w3_list {
            w.scale(c);
        }
        for w in &mut self.d_mm_list {
            w.scale(c);
        }
        for t in &mut self.d_thresholds {
            for v in t.iter_mut() {
                *v *= c;
            }
        }
        self.d_head_weight.scale(c);
        for v in self.d_head_bias.iter_mut() {
            *v *= c;
        }
    }

    /// self += alpha * other.
    pub fn add_scaled(&mut self, other: &GradientSet, alpha: f64) {
        self.d_w1.add_scaled(&other.d_w1, alpha);
        for (a, b) in self.d_w2_list.iter_mut().zip(&other.d_w2_list) {
            a.add_scaled(b, alpha);
        }
        for (a, b) in self.d_w3_list.iter_mut().zip(&other.d_w3_list) {
            a.add_scaled(b, alpha);
        }
        for (a, b) in self.d_mm_list.iter_mut().zip(&other.d_mm_list) {
            a.add_scaled(b, alpha);
        }
        for (a, b) in self.d_thresholds.iter_mut().zip(&other.d_thresholds) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += alpha * y;
            }
        }
        self.d_head_weight.add_scaled(&other.d_head_weight, alpha);
        for (a, b) in self.d_head_bias.iter_mut().zip(other.d_head_bias.iter()) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_w1.is_finite()
            && self.d_w2_list.iter().all(Matrix::is_finite)
            && self.d_w3_list.iter().all(Matrix::is_finite)
            && self.d_mm_list.iter().all(Matrix::is_finite)
            && self.d_thresholds.iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.d_head_weight.is_finite()
            && self.d_head_bias.iter().all(|v| v.is_finite())
    }
}

/// Derivative mask of one shrinkage layer and the matching λ gradient
/// accumulation, shared by the scalar and per-coordinate threshold forms.
fn shrink_backward(
    pre: &Vector,
    thresholds: &Vector,
    dz: &Vector,
    d_threshold: &mut Vector,
) -> Vector {
    let mut da = Vector::zeros(pre.len());
    for i in 0..pre.len() {
        let lam = thr_at(thresholds, i);
        if pre[i].abs() > lam {
            da[i] = dz[i];
            let contribution = -pre[i].signum() * dz[i];
            if d_threshold.len() == 1 {
                d_threshold[0] += contribution;
            } else {
                d_threshold[i] += contribution;
            }
        }
    }
    da
}

fn outer_into(acc: &mut Matrix, a: &Vector, b: &Vector, sign: f64) {
    debug_assert_eq!(acc.rows, a.len());
    debug_assert_eq!(acc.cols, b.len());
    for i in 0..a.len() {
        let ai = sign * a[i];
        if ai == 0.0 {
            continue;
        }
        let row = acc.row_mut(i);
        for (r, &bj) in row.iter_mut().zip(b.iter()) {
            *r += ai * bj;
        }
    }
}

/// Exact reverse-mode differentiation of one recorded forward pass.
pub fn backward(model: &EncoderModel, trace: &ForwardTrace, dlogits: &Vector) -> Result<GradientSet> {
    model.validate()?;
    if trace.codes.len() != model.k + 1 || trace.pre_activations.len() != model.k + 1 {
        return Err(Error::contract(
            "backward",
            format!(
                "trace has {} codes / {} pre-activations, model k = {}",
                trace.codes.len(),
                trace.pre_activations.len(),
                model.k
            ),
        ));
    }
    if trace.x_pca.len() != model.n || dlogits.len() != model.classes {
        return Err(Error::contract(
            "backward",
            "trace/dlogits dimensions do not match the model",
        ));
    }
    let dropout_active = model.arch.uses_dropout() && model.drop_ratio > 0.0;
    if dropout_active && trace.dropout_masks.is_none() {
        return Err(Error::contract(
            "backward",
            "dropout architecture needs a training-mode trace with recorded masks",
        ));
    }

    let act_mask = |layer: usize| -> Option<&Vector> {
        match &trace.dropout_masks {
            Some(DropoutMasks::Activation(vs)) => Some(&vs[layer]),
            _ => None,
        }
    };
    let weight_mask = |layer: usize| -> Option<&Matrix> {
        match &trace.dropout_masks {
            Some(DropoutMasks::Weight(ws)) => Some(&ws[layer]),
            _ => None,
        }
    };

    let mut g = GradientSet::zeros_like(model);
    let x = &trace.x_pca;
    let z_last = &trace.codes[model.k];

    outer_into(&mut g.d_head_weight, dlogits, z_last, 1.0);
    for (b, d) in g.d_head_bias.iter_mut().zip(dlogits.iter()) {
        *b = *d;
    }
    let mut dz = matvec_t(&model.head_weight, dlogits)?;

    for j in (1..=model.k).rev() {
        // fc_dropout masked codes[j] after shrinkage.
        if model.arch == Arch::FcDropout {
            if let Some(mask) = act_mask(j) {
                for (d, m) in dz.iter_mut().zip(mask.iter()) {
                    *d *= m;
                }
            }
        }
        let pre = &trace.pre_activations[j];
        let da = shrink_backward(pre, &model.thresholds[j], &dz, &mut g.d_thresholds[j]);
        let zprev = &trace.codes[j - 1];
        match model.arch {
            Arch::Ddse => {
                outer_into(&mut g.d_w1, &da, x, 1.0);
                let u = crate::linalg::matvec(&model.w2_list[j - 1], zprev)?;
                outer_into(&mut g.d_w3_list[j - 1], &da, &u, -1.0);
                let mut du = matvec_t(&model.w3_list[j - 1], &da)?;
                for v in du.iter_mut() {
                    *v = -*v;
                }
                outer_into(&mut g.d_w2_list[j - 1], &du, zprev, 1.0);
                let back = matvec_t(&model.w2_list[j - 1], &du)?;
                dz = Vector::from_fn(model.m, |i| da[i] + back[i]);
            }
            Arch::NoShortcut => {
                let sign = if model.no_shortcut_reinject { -1.0 } else { 1.0 };
                if model.no_shortcut_reinject {
                    outer_into(&mut g.d_w1, &da, x, 1.0);
                }
                let u = crate::linalg::matvec(&model.w2_list[j - 1], zprev)?;
                outer_into(&mut g.d_w3_list[j - 1], &da, &u, sign);
                let mut du = matvec_t(&model.w3_list[j - 1], &da)?;
                for v in du.iter_mut() {
                    *v *= sign;
                }
                outer_into(&mut g.d_w2_list[j - 1], &du, zprev, 1.0);
                dz = matvec_t(&model.w2_list[j - 1], &du)?;
            }
            Arch::Lista => {
                // pre was recorded after the mask, so the linear path sees
                // da gated by the same mask.
                let mut dl = da.clone();
                if let Some(mask) = act_mask(j) {
                    for (d, m) in dl.iter_mut().zip(mask.iter()) {
                        *d *= m;
                    }
                }
                outer_into(&mut g.d_w1, &dl, x, 1.0);
                outer_into(&mut g.d_mm_list[j - 1], &dl, zprev, 1.0);
                dz = matvec_t(&model.mm_list[j - 1], &dl)?;
            }
            Arch::FcPlain | Arch::FcDropout => {
                outer_into(&mut g.d_mm_list[j - 1], &da, zprev, 1.0);
                dz = matvec_t(&model.mm_list[j - 1], &da)?;
            }
            // Masks are absent when drop_ratio is zero; the layer is then a
            // plain linear map.
            Arch::FcDropconnect => match weight_mask(j) {
                Some(mask) => {
                    let mut d_mm = Matrix::zeros(model.m, model.m);
                    outer_into(&mut d_mm, &da, zprev, 1.0);
                    for (d, mv) in d_mm.data.iter_mut().zip(&mask.data) {
                        *d *= mv;
                    }
                    g.d_mm_list[j - 1] = d_mm;
                    dz = matvec_t(&masked_weight(&model.mm_list[j - 1], mask), &da)?;
                }
                None => {
                    outer_into(&mut g.d_mm_list[j - 1], &da, zprev, 1.0);
                    dz = matvec_t(&model.mm_list[j - 1], &da)?;
                }
            },
        }
    }

    if model.arch == Arch::FcDropout {
        if let Some(mask) = act_mask(0) {
            for (d, m) in dz.iter_mut().zip(mask.iter()) {
                *d *= m;
            }
        }
    }
    let pre0 = &trace.pre_activations[0];
    let da0 = shrink_backward(pre0, &model.thresholds[0], &dz, &mut g.d_thresholds[0]);
    match model.arch {
        Arch::Lista => {
            let mut dl = da0;
            if let Some(mask) = act_mask(0) {
                for (d, m) in dl.iter_mut().zip(mask.iter()) {
                    *d *= m;
                }
            }
            outer_into(&mut g.d_w1, &dl, x, 1.0);
        }
        Arch::FcDropconnect if weight_mask(0).is_some() => {
            let mask = weight_mask(0).expect("checked above");
            let mut d_w1 = Matrix::zeros(model.m, model.n);
            outer_into(&mut d_w1, &da0, x, 1.0);
            for (d, mv) in d_w1.data.iter_mut().zip(&mask.data) {
                *d *= mv;
            }
            g.d_w1.add_scaled(&d_w1, 1.0);
        }
        _ => {
            outer_into(&mut g.d_w1, &da0, x, 1.0);
        }
    }
    Ok(g)
}

/// Batched forward record used by training and evaluation. Matrices are
/// column-per-sample.
pub(crate) struct BatchTrace {
    pub input: Matrix,           // n×B, after any PCA projection
    pub pres: Vec<Matrix>,       // k+1 of m×B
    pub codes: Vec<Matrix>,      // k+1 of m×B
    pub logits: Matrix,          // classes×B
    pub masks: Option<DropoutMasks>,
}

fn shrink_batch(pre: &Matrix, thresholds: &Vector) -> Matrix {
    let mut out = Matrix::zeros(pre.rows, pre.cols);
    for i in 0..pre.rows {
        let lam = thr_at(thresholds, i);
        let src = pre.row(i);
        let dst = out.row_mut(i);
        for (d, &u) in dst.iter_mut().zip(src) {
            *d = u.signum() * (u.abs() - lam).max(0.0);
        }
    }
    out
}

fn mask_rows(mat: &mut Matrix, mask: &Vector) {
    for i in 0..mat.rows {
        let m = mask[i];
        if m == 1.0 {
            continue;
        }
        for v in mat.row_mut(i) {
            *v *= m;
        }
    }
}

fn add_assign(mat: &mut Matrix, other: &Matrix) {
    for (a, b) in mat.data.iter_mut().zip(&other.data) {
        *a += b;
    }
}

pub(crate) fn batch_forward(
    model: &EncoderModel,
    basis: Option<&PcaBasis>,
    xs: &Matrix,
    training: bool,
    rng: Option<&mut Rng>,
) -> Result<BatchTrace> {
    if xs.rows != model.n {
        return Err(Error::shape(
            "batch_forward",
            format!("batch has {} rows, model expects n={}", xs.rows, model.n),
        ));
    }
    if xs.cols == 0 {
        return Err(Error::contract("batch_forward", "empty batch"));
    }
    let input = if model.arch.uses_pca() {
        let basis = basis.ok_or_else(|| {
            Error::contract("batch_forward", format!("{} requires a PCA basis", model.arch.tag()))
        })?;
        pca_project_batch(basis, xs)?
    } else {
        xs.clone()
    };

    let dropout_active = model.arch.uses_dropout() && model.drop_ratio > 0.0;
    let keep = 1.0 - model.drop_ratio;
    // One mask set per batch, not per sample.
    let masks: Option<DropoutMasks> = if dropout_active && training {
        let rng = rng.ok_or_else(|| {
            Error::contract("batch_forward", "training-mode dropout needs an rng")
        })?;
        Some(match model.arch {
            Arch::FcDropconnect => {
                let mut ws = Vec::with_capacity(model.k + 1);
                ws.push(Matrix::from_fn(model.m, model.n, |_, _| {
                    if rng.bernoulli(keep) {
                        1.0
                    } else {
                        0.0
                    }
                }));
                for _ in 0..model.k {
                    ws.push(Matrix::from_fn(model.m, model.m, |_, _| {
                        if rng.bernoulli(keep) {
                            1.0
                        } else {
                            0.0
                        }
                    }));
                }
                DropoutMasks::Weight(ws)
            }
            _ => DropoutMasks::Activation(
                (0..=model.k)
                    .map(|_| Vector::from_fn(model.m, |_| if rng.bernoulli(keep) { 1.0 } else { 0.0 }))
                    .collect(),
            ),
        })
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

    let mut pres = Vec::with_capacity(model.k + 1);
    let mut codes: Vec<Matrix> = Vec::with_capacity(model.k + 1);

    let mut a0 = match weight_mask(0) {
        Some(mask) => matmul(&masked_weight(&model.w1, mask), &input)?,
        None => matmul(&model.w1, &input)?,
    };
    if eval_scale && model.arch == Arch::FcDropconnect {
        a0.scale(keep);
    }
    let mut pre = a0.clone();
    if model.arch == Arch::Lista {
        if let Some(mask) = act_mask(0) {
            mask_rows(&mut pre, mask);
        }
        if eval_scale {
            pre.scale(keep);
        }
    }
    let mut z = shrink_batch(&pre, &model.thresholds[0]);
    if model.arch == Arch::FcDropout {
        if let Some(mask) = act_mask(0) {
            mask_rows(&mut z, mask);
        }
        if eval_scale {
            z.scale(keep);
        }
    }
    pres.push(pre);
    codes.push(z);

    for j in 0..model.k {
        let z_prev = codes.last().expect("at least one code");
        let mut pre = match model.arch {
            Arch::Ddse | Arch::NoShortcut => {
                let u = matmul(&model.w2_list[j], z_prev)?;
                let mut w3u = matmul(&model.w3_list[j], &u)?;
                if model.arch == Arch::Ddse {
                    for i in 0..w3u.data.len() {
                        w3u.data[i] = a0.data[i] + z_prev.data[i] - w3u.data[i];
                    }
                } else if model.no_shortcut_reinject {
                    for i in 0..w3u.data.len() {
                        w3u.data[i] = a0.data[i] - w3u.data[i];
                    }
                }
                w3u
            }
            _ => {
                let mut mz = match weight_mask(j + 1) {
                    Some(mask) => matmul(&masked_weight(&model.mm_list[j], mask), z_prev)?,
                    None => matmul(&model.mm_list[j], z_prev)?,
                };
                if eval_scale && model.arch == Arch::FcDropconnect {
                    mz.scale(keep);
                }
                if model.arch == Arch::Lista {
                    add_assign(&mut mz, &a0);
                }
                mz
            }
        };
        if model.arch == Arch::Lista {
            if let Some(mask) = act_mask(j + 1) {
                mask_rows(&mut pre, mask);
            }
            if eval_scale {
                pre.scale(keep);
            }
        }
        let mut z = shrink_batch(&pre, &model.thresholds[j + 1]);
        if model.arch == Arch::FcDropout {
            if let Some(mask) = act_mask(j + 1) {
                mask_rows(&mut z, mask);
            }
            if eval_scale {
                z.scale(keep);
            }
        }
        pres.push(pre);
        codes.push(z);
    }

    let mut logits = matmul(&model.head_weight, codes.last().expect("codes nonempty"))?;
    for i in 0..logits.rows {
        let b = model.head_bias[i];
        for v in logits.row_mut(i) {
            *v += b;
        }
    }
    Ok(BatchTrace {
        input,
        pres,
        codes,
        logits,
        masks,
    })
}

/// Mean cross-entropy over the batch and the loss gradient w.r.t. logits
/// (already divided by the batch size).
pub(crate) fn batch_softmax_loss(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let classes = logits.rows;
    let b = logits.cols;
    if labels.len() != b {
        return Err(Error::shape(
            "batch_softmax_loss",
            format!("{} labels for batch of {}", labels.len(), b),
        ));
    }
    let mut dlogits = Matrix::zeros(classes, b);
    let mut loss_sum = 0.0;
    for col in 0..b {
        let label = labels[col];
        if label >= classes {
            return Err(Error::contract(
                "batch_softmax_loss",
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        let mut max = f64::NEG_INFINITY;
        for i in 0..classes {
            max = max.max(logits.at(i, col));
        }
        let mut sum = 0.0;
        for i in 0..classes {
            sum += (logits.at(i, col) - max).exp();
        }
        loss_sum += sum.ln() + max - logits.at(label, col);
        for i in 0..classes {
            let p = (logits.at(i, col) - max).exp() / sum;
            dlogits.set(i, col, p / b as f64);
        }
        dlogits.set(label, col, dlogits.at(label, col) - 1.0 / b as f64);
    }
    Ok((loss_sum / b as f64, dlogits))
}

fn shrink_backward_batch(
    pre: &Matrix,
    thresholds: &Vector,
    dz: &Matrix,
    d_threshold: &mut Vector,
) -> Matrix {
    let mut da = Matrix::zeros(pre.rows, pre.cols);
    for i in 0..pre.rows {
        let lam = thr_at(thresholds, i);
        let prow = pre.row(i);
        let drow = dz.row(i);
        let orow = da.row_mut(i);
        let mut acc = 0.0;
        for ((o, &u), &d) in orow.iter_mut().zip(prow).zip(drow) {
            if u.abs() > lam {
                *o = d;
                acc -= u.signum() * d;
            }
        }
        if d_threshold.len() == 1 {
            d_threshold[0] += acc;
        } else {
            d_threshold[i] += acc;
        }
    }
    da
}

/// Gradients averaged over a batch (columns of `xs`), plus the mean loss.
/// Dropout masks, when active, are drawn once for the whole batch.
pub fn batch_gradient(
    model: &EncoderModel,
    basis: Option<&PcaBasis>,
    xs: &Matrix,
    labels: &[usize],
    training: bool,
    rng: Option<&mut Rng>,
) -> Result<(GradientSet, f64)> {
    let trace = batch_forward(model, basis, xs, training, rng)?;
    let (loss, dlogits) = batch_softmax_loss(&trace.logits, labels)?;
    let g = batch_backward(model, &trace, &dlogits)?;
    Ok((g, loss))
}

pub(crate) fn batch_backward(
    model: &EncoderModel,
    trace: &BatchTrace,
    dlogits: &Matrix,
) -> Result<GradientSet> {
    let act_mask = |layer: usize| -> Option<&Vector> {
        match &trace.masks {
            Some(DropoutMasks::Activation(vs)) => Some(&vs[layer]),
            _ => None,
        }
    };
    let weight_mask = |layer: usize| -> Option<&Matrix> {
        match &trace.masks {
            Some(DropoutMasks::Weight(ws)) => Some(&ws[layer]),
            _ => None,
        }
    };

    let mut g = GradientSet::zeros_like(model);
    let z_last = &trace.codes[model.k];
    g.d_head_weight = matmul_nt(dlogits, z_last)?;
    for i in 0..dlogits.rows {
        g.d_head_bias[i] = dlogits.row(i).iter().sum();
    }
    let mut dz = matmul_tn(&model.head_weight, dlogits)?;

    for j in (1..=model.k).rev() {
        if model.arch == Arch::FcDropout {
            if let Some(mask) = act_mask(j) {
                mask_rows(&mut dz, mask);
            }
        }
        let pre = &trace.pres[j];
        let da = shrink_backward_batch(pre, &model.thresholds[j], &dz, &mut g.d_thresholds[j]);
        let zprev = &trace.codes[j - 1];
        match model.arch {
            Arch::Ddse => {
                let d_w1 = matmul_nt(&da, &trace.input)?;
                g.d_w1.add_scaled(&d_w1, 1.0);
                let u = matmul(&model.w2_list[j - 1], zprev)?;
                let mut d_w3 = matmul_nt(&da, &u)?;
                d_w3.scale(-1.0);
                g.d_w3_list[j - 1] = d_w3;
                let mut du = matmul_tn(&model.w3_list[j - 1], &da)?;
                du.scale(-1.0);
                g.d_w2_list[j - 1] = matmul_nt(&du, zprev)?;
                let back = matmul_tn(&model.w2_list[j - 1], &du)?;
                for i in 0..dz.data.len() {
                    dz.data[i] = da.data[i] + back.data[i];
                }
            }
            Arch::NoShortcut => {
                let sign = if model.no_shortcut_reinject { -1.0 } else { 1.0 };
                if model.no_shortcut_reinject {
                    let d_w1 = matmul_nt(&da, &trace.input)?;
                    g.d_w1.add_scaled(&d_w1, 1.0);
                }
                let u = matmul(&model.w2_list[j - 1], zprev)?;
                let mut d_w3 = matmul_nt(&da, &u)?;
                d_w3.scale(sign);
                g.d_w3_list[j - 1] = d_w3;
                let mut du = matmul_tn(&model.w3_list[j - 1], &da)?;
                du.scale(sign);
                g.d_w2_list[j - 1] = matmul_nt(&du, zprev)?;
                dz = matmul_tn(&model.w2_list[j - 1], &du)?;
            }
            Arch::Lista => {
                let mut dl = da;
                if let Some(mask) = act_mask(j) {
                    mask_rows(&mut dl, mask);
                }
                let d_w1 = matmul_nt(&dl, &trace.input)?;
                g.d_w1.add_scaled(&d_w1, 1.0);
                g.d_mm_list[j - 1] = matmul_nt(&dl, zprev)?;
                dz = matmul_tn(&model.mm_list[j - 1], &dl)?;
            }
            Arch::FcPlain | Arch::FcDropout => {
                g.d_mm_list[j - 1] = matmul_nt(&da, zprev)?;
                dz = matmul_tn(&model.mm_list[j - 1], &da)?;
            }
            // Masks are absent when drop_ratio is zero; the layer is then a
            // plain linear map.
            Arch::FcDropconnect => match weight_mask(j) {
                Some(mask) => {
                    let mut d_mm = matmul_nt(&da, zprev)?;
                    for (d, mv) in d_mm.data.iter_mut().zip(&mask.data) {
                        *d *= mv;
                    }
                    g.d_mm_list[j - 1] = d_mm;
                    dz = matmul_tn(&masked_weight(&model.mm_list[j - 1], mask), &da)?;
                }
                None => {
                    g.d_mm_list[j - 1] = matmul_nt(&da, zprev)?;
                    dz = matmul_tn(&model.mm_list[j - 1], &da)?;
                }
            },
        }
    }

    if model.arch == Arch::FcDropout {
        if let Some(mask) = act_mask(0) {
            mask_rows(&mut dz, mask);
        }
    }
    let pre0 = &trace.pres[0];
    let da0 = shrink_backward_batch(pre0, &model.thresholds[0], &dz, &mut g.d_thresholds[0]);
    match model.arch {
        Arch::Lista => {
            let mut dl = da0;
            if let Some(mask) = act_mask(0) {
                mask_rows(&mut dl, mask);
            }
            let d_w1 = matmul_nt(&dl, &trace.input)?;
            g.d_w1.add_scaled(&d_w1, 1.0);
        }
        Arch::FcDropconnect if weight_mask(0).is_some() => {
            let mask = weight_mask(0).expect("checked above");
            let mut d_w1 = matmul_nt(&da0, &trace.input)?;
            for (d, mv) in d_w1.data.iter_mut().zip(&mask.data) {
                *d *= mv;
            }
            g.d_w1.add_scaled(&d_w1, 1.0);
        }
        _ => {
            let d_w1 = matmul_nt(&da0, &trace.input)?;
            g.d_w1.add_scaled(&d_w1, 1.0);
        }
    }
    Ok(g)
}
