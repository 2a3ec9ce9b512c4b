//! Central finite-difference oracle shared by the gradient tests and the
//! acceptance suite.

#![allow(dead_code)]

use daal::learner::ClassifierModel;
use daal::numerics::{self, Elementwise, ParamStore, Tape, Tensor, Var};
use daal::teacher::{self, DecoderFamily, VaeArch, VaeModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding do not divide by zero.
pub const FD_REL_FLOOR: f64 = 1e-6;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_REL_FLOOR)
}

/// Largest relative error between backward gradients and central differences
/// over every value of every parameter reachable through `store`.
pub fn max_rel_error<M>(
    model: &mut M,
    store: fn(&mut M) -> &mut ParamStore,
    loss: impl Fn(&M, &mut Tape) -> Var,
) -> f64 {
    let eval = |m: &M| {
        let mut tape = Tape::new();
        let out = loss(m, &mut tape);
        tape.value(out).data()[0]
    };
    {
        let s = store(model);
        s.zero_grad();
    }
    let mut tape = Tape::new();
    let out = loss(model, &mut tape);
    tape.backward(out, store(model)).expect("backward");
    let analytic: Vec<f64> = store(model)
        .iter()
        .flat_map(|(_, t)| {
            t.grad()
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.len()])
        })
        .collect();
    let base = store(model).flatten();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + FD_STEP;
        store(model).assign_flat(&p).unwrap();
        let up = eval(model);
        p[i] = base[i] - FD_STEP;
        store(model).assign_flat(&p).unwrap();
        let down = eval(model);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[i], numeric));
    }
    store(model).assign_flat(&base).unwrap();
    worst
}

fn this(s: &mut ParamStore) -> &mut ParamStore {
    s
}

/// Uniform values in `[lo, hi]` kept at least `gap` away from zero, so that
/// relu and clamp kinks stay out of the finite-difference stencil.
pub fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| loop {
            let v: f64 = rng.random_range(lo..hi);
            if v.abs() > 0.05 {
                break v;
            }
        })
        .collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Scalar loss `Σ w ⊙ out` with fixed random weights, so every output entry
/// contributes a distinct gradient.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let shape = tape.value(out).shape().to_vec();
    let (r, c) = match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[0], shape[1]),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(&mut rng, r, c, -1.0, 1.0);
    let w = Tensor::new(shape, w.into_data()).unwrap();
    let wv = tape.input(w);
    let prod = tape.mul(out, wv).unwrap();
    tape.sum(prod)
}

fn store_with(entries: &[(&str, Tensor)]) -> ParamStore {
    let mut s = ParamStore::new();
    for (name, t) in entries {
        s.insert(*name, t.clone()).unwrap();
    }
    s
}

/// Checks one op applied to parameters `a` (and `b`).
fn check_op(a: Tensor, b: Option<Tensor>, op: impl Fn(&mut Tape, Var, Option<Var>) -> Var) -> f64 {
    let mut entries = vec![("a", a)];
    if let Some(b) = b {
        entries.push(("b", b));
    }
    let mut s = store_with(&entries);
    max_rel_error(&mut s, this, |s, tape| {
        let a = tape.param(s, "a").unwrap();
        let b = s.id("b").ok().map(|_| tape.param(s, "b").unwrap());
        let out = op(tape, a, b);
        weighted_sum(tape, out, 99)
    })
}

/// `(name, max relative error)` for every differentiable op and both full losses.
pub fn gradient_suite() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut r = |rows, cols| random(&mut rng, rows, cols, -1.5, 1.5);
    let (a34, b34, b45, row4, s11) = (r(3, 4), r(3, 4), r(4, 5), r(1, 4), r(1, 1));
    let scalar = Tensor::scalar(s11.data()[0]);
    let positive = Tensor::new(
        vec![3, 4],
        a34.data().iter().map(|v| v.abs() + 0.2).collect(),
    )
    .unwrap();

    let mut out = vec![
        (
            "matmul",
            check_op(a34.clone(), Some(b45), |t, a, b| {
                t.matmul(a, b.unwrap()).unwrap()
            }),
        ),
        (
            "add",
            check_op(a34.clone(), Some(b34.clone()), |t, a, b| {
                t.add(a, b.unwrap()).unwrap()
            }),
        ),
        (
            "sub",
            check_op(a34.clone(), Some(b34.clone()), |t, a, b| {
                t.sub(a, b.unwrap()).unwrap()
            }),
        ),
        (
            "mul",
            check_op(a34.clone(), Some(b34.clone()), |t, a, b| {
                t.mul(a, b.unwrap()).unwrap()
            }),
        ),
        (
            "mul_scalar_broadcast",
            check_op(a34.clone(), Some(scalar.clone()), |t, a, b| {
                t.mul(b.unwrap(), a).unwrap()
            }),
        ),
        (
            "add_scalar_broadcast",
            check_op(a34.clone(), Some(scalar), |t, a, b| {
                t.add(a, b.unwrap()).unwrap()
            }),
        ),
        (
            "add_row",
            check_op(a34.clone(), Some(row4), |t, a, b| {
                t.add_row(a, b.unwrap()).unwrap()
            }),
        ),
        (
            "affine",
            check_op(a34.clone(), None, |t, a, _| t.affine(a, -1.7, 0.3)),
        ),
        ("relu", check_op(a34.clone(), None, |t, a, _| t.relu(a))),
        (
            "sigmoid",
            check_op(a34.clone(), None, |t, a, _| t.sigmoid(a)),
        ),
        ("exp", check_op(a34.clone(), None, |t, a, _| t.exp(a))),
        (
            "log",
            check_op(positive.clone(), None, |t, a, _| t.log(a).unwrap()),
        ),
        ("tanh", check_op(a34.clone(), None, |t, a, _| t.tanh(a))),
        (
            "clamp",
            check_op(a34.clone(), None, |t, a, _| t.clamp(a, -0.9, 0.9)),
        ),
        (
            "elementwise",
            check_op(a34.clone(), Some(b34), |t, a, b| {
                let m = t.elementwise(Elementwise::Mul, &[a, b.unwrap()]).unwrap();
                t.elementwise(Elementwise::Tanh, &[m]).unwrap()
            }),
        ),
        (
            "slice_cols",
            check_op(a34.clone(), None, |t, a, _| t.slice_cols(a, 1, 3).unwrap()),
        ),
        (
            "row_sum",
            check_op(a34.clone(), None, |t, a, _| t.row_sum(a).unwrap()),
        ),
        ("sum", check_op(a34.clone(), None, |t, a, _| t.sum(a))),
        ("mean", check_op(a34.clone(), None, |t, a, _| t.mean(a))),
        (
            "softmax_cross_entropy",
            check_op(a34, None, |t, a, _| {
                t.softmax_cross_entropy(a, &[0, 3, 2]).unwrap()
            }),
        ),
    ];

    let (mu, logvar) = (r(3, 2), r(3, 2));
    let noise = r(3, 2);
    let mut s = store_with(&[("mu", mu.clone()), ("logvar", logvar.clone())]);
    out.push((
        "reparameterize",
        max_rel_error(&mut s, this, |s, tape| {
            let m = tape.param(s, "mu").unwrap();
            let lv = tape.param(s, "logvar").unwrap();
            let e = tape.input(noise.clone());
            let z = teacher::reparameterize(tape, m, lv, e).unwrap();
            weighted_sum(tape, z, 7)
        }),
    ));

    out.push(("dense", {
        let mut s = ParamStore::new();
        numerics::init_dense(&mut s, "fc", 4, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x = r(5, 4);
        max_rel_error(&mut s, this, |s, tape| {
            let xv = tape.input(x.clone());
            let h = numerics::dense(tape, s, "fc", xv).unwrap();
            weighted_sum(tape, h, 3)
        })
    }));

    let x = r(6, 2);
    let labels = [0, 1, 1, 0, 1, 0];
    let mut clf = ClassifierModel::new(vec![2, 8, 4, 2], 5).unwrap();
    out.push((
        "classifier_loss",
        max_rel_error(&mut clf, ClassifierModel::params_mut, |m, tape| {
            m.loss(tape, &x, &labels).unwrap()
        }),
    ));

    let xg = r(5, 2);
    let eps = r(5, 2);
    let mut vae = VaeModel::new(VaeArch::toy(), 11).unwrap();
    out.push(("vae_gaussian_loss", vae_check(&mut vae, &xg, &eps)));

    let xb = Tensor::new(
        vec![4, 6],
        r(4, 6).data().iter().map(|v| (v + 1.5) / 3.0).collect(),
    )
    .unwrap();
    let eps_b = r(4, 2);
    let mut bern = VaeModel::new(
        VaeArch {
            input_dim: 6,
            hidden: vec![5],
            latent_dim: 2,
            family: DecoderFamily::Bernoulli,
        },
        12,
    )
    .unwrap();
    out.push(("vae_bernoulli_loss", vae_check(&mut bern, &xb, &eps_b)));
    out
}

/// Negative mean ELBO with fixed noise, the quantity the teacher minimises.
fn vae_check(vae: &mut VaeModel, x: &Tensor, noise: &Tensor) -> f64 {
    max_rel_error(vae, VaeModel::params_mut, |m, tape| {
        let elbo = m.elbo_graph(tape, x, noise).unwrap();
        let mean = tape.mean(elbo);
        tape.affine(mean, -1.0, 0.0)
    })
}
