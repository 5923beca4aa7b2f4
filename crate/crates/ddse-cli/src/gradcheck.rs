//! `gradcheck`: central finite differences against the analytic backward
//! pass, reported per tensor. Dropout is disabled so the loss is a
//! deterministic function of the parameters; the library's own test suite
//! covers the masked paths.

use crate::GradcheckArgs;
use ddse::autodiff::{backward, GradientSet};
use ddse::encoder::{forward, softmax_loss, Arch, EncoderModel, ForwardTrace};
use ddse::pca::{pca_fit, PcaBasis};
use ddse::rng::Rng;
use ddse::{Error, Matrix, Result, Vector};

/// Setting this environment variable corrupts one analytic gradient entry
/// after the backward pass, which must make the check fail; it exists so
/// the checker itself can be tested end to end.
pub const CORRUPT_ENV: &str = "DDSE_GRADCHECK_CORRUPT";

#[derive(Clone, Copy, Debug)]
enum Slot {
    W1(usize),
    W2(usize, usize),
    W3(usize, usize),
    Mm(usize, usize),
    Thr(usize, usize),
    Head(usize),
    Bias(usize),
}

/// Slots grouped by tensor, in model order.
fn tensor_groups(model: &EncoderModel) -> Vec<(String, Vec<Slot>)> {
    let mut out = Vec::new();
    out.push((
        "w1".to_string(),
        (0..model.w1.data.len()).map(Slot::W1).collect(),
    ));
    for (l, w) in model.w2_list.iter().enumerate() {
        out.push((
            format!("w2[{l}]"),
            (0..w.data.len()).map(|i| Slot::W2(l, i)).collect(),
        ));
    }
    for (l, w) in model.w3_list.iter().enumerate() {
        out.push((
            format!("w3[{l}]"),
            (0..w.data.len()).map(|i| Slot::W3(l, i)).collect(),
        ));
    }
    for (l, w) in model.mm_list.iter().enumerate() {
        out.push((
            format!("mm[{l}]"),
            (0..w.data.len()).map(|i| Slot::Mm(l, i)).collect(),
        ));
    }
    for (l, t) in model.thresholds.iter().enumerate() {
        out.push((
            format!("thresholds[{l}]"),
            (0..t.len()).map(|i| Slot::Thr(l, i)).collect(),
        ));
    }
    out.push((
        "head_weight".to_string(),
        (0..model.head_weight.data.len()).map(Slot::Head).collect(),
    ));
    out.push((
        "head_bias".to_string(),
        (0..model.head_bias.len()).map(Slot::Bias).collect(),
    ));
    out
}

fn param_mut(model: &mut EncoderModel, s: Slot) -> &mut f64 {
    match s {
        Slot::W1(i) => &mut model.w1.data[i],
        Slot::W2(l, i) => &mut model.w2_list[l].data[i],
        Slot::W3(l, i) => &mut model.w3_list[l].data[i],
        Slot::Mm(l, i) => &mut model.mm_list[l].data[i],
        Slot::Thr(l, i) => &mut model.thresholds[l][i],
        Slot::Head(i) => &mut model.head_weight.data[i],
        Slot::Bias(i) => &mut model.head_bias[i],
    }
}

fn grad_at(g: &GradientSet, s: Slot) -> f64 {
    match s {
        Slot::W1(i) => g.d_w1.data[i],
        Slot::W2(l, i) => g.d_w2_list[l].data[i],
        Slot::W3(l, i) => g.d_w3_list[l].data[i],
        Slot::Mm(l, i) => g.d_mm_list[l].data[i],
        Slot::Thr(l, i) => g.d_thresholds[l][i],
        Slot::Head(i) => g.d_head_weight.data[i],
        Slot::Bias(i) => g.d_head_bias[i],
    }
}

/// Random dense model; factorized archs keep full w2/w3 so every tensor
/// coordinate carries signal.
fn random_model(arch: Arch, args: &GradcheckArgs, rng: &mut Rng) -> Result<EncoderModel> {
    let (n, m, k, s, classes) = (args.n, args.m, args.k, args.s, args.classes);
    let w_scale = 0.7 / (m.max(n) as f64).sqrt();
    let mut mat = |r, c| Matrix::from_fn(r, c, |_, _| w_scale * rng.normal());
    let (w2_list, w3_list, mm_list) = if arch.is_factorized() {
        (
            (0..k).map(|_| mat(n, m)).collect(),
            (0..k).map(|_| mat(m, n)).collect(),
            Vec::new(),
        )
    } else {
        (
            Vec::new(),
            Vec::new(),
            (0..k).map(|_| mat(m, m)).collect(),
        )
    };
    let model = EncoderModel {
        arch,
        n,
        m,
        k,
        s,
        classes,
        w1: mat(m, n),
        w2_list,
        w3_list,
        mm_list,
        thresholds: (0..=k)
            .map(|_| Vector::from_fn(m, |_| 0.01 + 0.04 * rng.uniform()))
            .collect(),
        head_weight: Matrix::from_fn(classes, m, |_, _| rng.normal() / (m as f64).sqrt()),
        head_bias: Vector::from_fn(classes, |_| 0.1 * rng.normal()),
        drop_ratio: 0.0,
        no_shortcut_reinject: false,
    };
    model.validate()?;
    Ok(model)
}

fn thr_of(t: &Vector, i: usize) -> f64 {
    if t.len() == 1 {
        t[0]
    } else {
        t[i]
    }
}

/// Finite differences are only trusted when no pre-activation sits within
/// `min_margin` of its shrinkage kink.
fn kink_safe(model: &EncoderModel, trace: &ForwardTrace, min_margin: f64) -> bool {
    trace.pre_activations.iter().enumerate().all(|(l, pre)| {
        (0..pre.len()).all(|i| (pre[i].abs() - thr_of(&model.thresholds[l], i)).abs() > min_margin)
    })
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    let arch = Arch::parse(&args.arch)?;
    let mut rng = Rng::new(args.seed);
    let model = random_model(arch, args, &mut rng)?;
    let basis: Option<PcaBasis> = if arch.uses_pca() {
        let samples = Matrix::from_fn(args.n, 4 * args.n + 8, |_, _| rng.normal());
        Some(pca_fit(&samples)?)
    } else {
        None
    };

    // Redraw the probe input until every unit clears the kink margin.
    let mut attempt = 0;
    let (x, trace) = loop {
        attempt += 1;
        if attempt >= 500 {
            return Err(Error::contract(
                "gradcheck",
                "no kink-safe probe input found in 500 draws",
            ));
        }
        let x = Vector::from_fn(args.n, |_| rng.normal());
        let trace = forward(&model, basis.as_ref(), &x, false, None)?;
        if kink_safe(&model, &trace, 1e-3) {
            break (x, trace);
        }
    };
    let label = rng.below(args.classes);
    let (_, dlogits) = softmax_loss(&trace.logits, label)?;
    let mut grads = backward(&model, &trace, &dlogits)?;
    if std::env::var_os(CORRUPT_ENV).is_some_and(|v| !v.is_empty()) {
        eprintln!("warning: {CORRUPT_ENV} set, corrupting one analytic gradient entry");
        grads.d_w1.data[0] += 1.0;
    }

    let loss_of = |m: &EncoderModel| -> Result<f64> {
        let t = forward(m, basis.as_ref(), &x, false, None)?;
        Ok(softmax_loss(&t.logits, label)?.0)
    };

    let h = 1e-5;
    let tol = 1e-4;
    let mut all_pass = true;
    println!("gradcheck: arch={} n={} m={} k={} s={} classes={} seed={}",
        arch.tag(), args.n, args.m, args.k, args.s, args.classes, args.seed);
    for (name, slots) in tensor_groups(&model) {
        let picked: Vec<Slot> = if args.samples > 0 && slots.len() > args.samples {
            let perm = rng.permutation(slots.len());
            perm[..args.samples].iter().map(|&i| slots[i]).collect()
        } else {
            slots
        };
        let mut max_rel = 0.0f64;
        for &slot in &picked {
            let mut plus = model.clone();
            *param_mut(&mut plus, slot) += h;
            let mut minus = model.clone();
            *param_mut(&mut minus, slot) -= h;
            let fd = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * h);
            let an = grad_at(&grads, slot);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-2);
            max_rel = max_rel.max(rel);
        }
        let pass = max_rel <= tol;
        all_pass &= pass;
        println!(
            "{name:<15} coords {:>5} max_rel {max_rel:.3e} {}",
            picked.len(),
            if pass { "PASS" } else { "FAIL" }
        );
    }
    if !all_pass {
        return Err(Error::contract(
            "gradcheck",
            format!("a tensor exceeded the {tol:e} relative-error bound"),
        ));
    }
    println!("gradcheck PASS");
    Ok(())
}
