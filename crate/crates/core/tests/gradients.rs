//! Analytic gradients of every layer against central finite differences (f64).

mod common;

use common::{layer_grad_error, random_tensor, random_tensor_off_zero, rel_err, rng, FD_REL_TOL, FD_STEP};
use glyphgan::nn::{
    bce_with_logits, BatchNorm2d, Conv2d, ConvTranspose2d, Embedding, Layer, LeakyRelu, Linear, Mode, Relu, Sigmoid,
    Tanh, Tensor4,
};
use rand::Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn small_dims(r: &mut impl Rng) -> [usize; 4] {
    [
        r.random_range(2..4),
        r.random_range(1..4),
        r.random_range(3..7),
        r.random_range(3..7),
    ]
}

#[test]
fn conv2d_gradients() {
    check_conv2d_gradients();
}

pub fn check_conv2d_gradients() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
        let (k, stride, pad) = [(4, 2, 1), (3, 1, 1), (2, 2, 0), (3, 2, 1), (1, 1, 0)][seed as usize % 5];
        let side = r.random_range(4..8);
        let mut layer = Conv2d::<f64>::new("c", cin, cout, k, stride, pad, 0.5, &mut r);
        let x = random_tensor([2, cin, side, side], &mut r);
        let err = layer_grad_error(&mut layer, &x, Mode::TRAIN, &mut r);
        assert!(err < FD_REL_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn deconv2d_gradients() {
    check_deconv2d_gradients();
}

pub fn check_deconv2d_gradients() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let (cin, cout) = (r.random_range(1..4), r.random_range(1..4));
        let (k, stride, pad) = [(4, 2, 1), (3, 1, 1), (2, 2, 0), (3, 2, 1), (4, 2, 1)][seed as usize % 5];
        let side = r.random_range(2..5);
        let mut layer = ConvTranspose2d::<f64>::new("d", cin, cout, k, stride, pad, 0.5, &mut r);
        let x = random_tensor([2, cin, side, side], &mut r);
        let err = layer_grad_error(&mut layer, &x, Mode::TRAIN, &mut r);
        assert!(err < FD_REL_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn batch_norm_gradients_train_and_eval() {
    check_batch_norm_gradients_train_and_eval();
}

pub fn check_batch_norm_gradients_train_and_eval() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let dims = small_dims(&mut r);
        let mut layer = BatchNorm2d::<f64>::new("bn", dims[1]);
        for p in layer.params_mut() {
            p.value.iter_mut().for_each(|v| *v = r.random_range(0.5..1.5));
        }
        let x = random_tensor(dims, &mut r);
        let err = layer_grad_error(&mut layer, &x, Mode::TRAIN, &mut r);
        assert!(err < FD_REL_TOL, "train seed {seed}: {err}");
        layer.forward(&x, Mode::TRAIN).unwrap();
        let err = layer_grad_error(&mut layer, &x, Mode::Eval, &mut r);
        assert!(err < FD_REL_TOL, "eval seed {seed}: {err}");
    }
}

#[test]
fn linear_gradients() {
    check_linear_gradients();
}

pub fn check_linear_gradients() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let (n_in, n_out) = (r.random_range(1..9), r.random_range(1..5));
        let mut layer = Linear::<f64>::new("l", n_in, n_out, 0.5, &mut r);
        let x = random_tensor([r.random_range(1..4), n_in, 1, 1], &mut r);
        let err = layer_grad_error(&mut layer, &x, Mode::TRAIN, &mut r);
        assert!(err < FD_REL_TOL, "seed {seed}: {err}");
    }
}

#[test]
fn activation_gradients() {
    check_activation_gradients();
}

pub fn check_activation_gradients() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let dims = small_dims(&mut r);
        let x = random_tensor_off_zero(dims, 1e-2, &mut r);
        let errs = [
            layer_grad_error(&mut LeakyRelu::<f64>::new(0.2), &x, Mode::TRAIN, &mut r),
            layer_grad_error(&mut Relu::<f64>::new(), &x, Mode::TRAIN, &mut r),
            layer_grad_error(&mut Tanh::<f64>::new(), &x, Mode::TRAIN, &mut r),
            layer_grad_error(&mut Sigmoid::<f64>::new(), &x, Mode::TRAIN, &mut r),
        ];
        for (name, err) in ["leaky", "relu", "tanh", "sigmoid"].iter().zip(errs) {
            assert!(err < FD_REL_TOL, "{name} seed {seed}: {err}");
        }
    }
}

#[test]
fn embedding_gradients() {
    check_embedding_gradients();
}

pub fn check_embedding_gradients() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let (rows, dim) = (r.random_range(2..6), r.random_range(1..5));
        let mut emb = Embedding::<f64>::new("e", rows, dim, 1.0, &mut r);
        let idx: Vec<usize> = (0..4).map(|_| r.random_range(0..rows)).collect();
        let y = emb.forward(&idx).unwrap();
        let g = random_tensor(y.dims(), &mut r);
        emb.table.zero_grad();
        emb.backward(&g).unwrap();
        for i in 0..emb.table.len() {
            let orig = emb.table.value[i];
            emb.table.value[i] = orig + FD_STEP;
            let up = emb.lookup(&idx).unwrap().dot(&g);
            emb.table.value[i] = orig - FD_STEP;
            let down = emb.lookup(&idx).unwrap().dot(&g);
            emb.table.value[i] = orig;
            let err = rel_err(emb.table.grad[i], (up - down) / (2.0 * FD_STEP));
            assert!(err < FD_REL_TOL, "seed {seed} elem {i}: {err}");
        }
    }
}

#[test]
fn bce_with_logits_gradient() {
    check_bce_with_logits_gradient();
}

pub fn check_bce_with_logits_gradient() {
    for seed in SEEDS {
        let mut r = rng(seed);
        let n = r.random_range(1..10);
        let logits: Vec<f64> = (0..n).map(|_| r.random_range(-4.0..4.0)).collect();
        let targets: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let (_, grad) = bce_with_logits(&logits, &targets);
        for i in 0..n {
            let mut l = logits.clone();
            l[i] += FD_STEP;
            let up = bce_with_logits(&l, &targets).0;
            l[i] -= 2.0 * FD_STEP;
            let down = bce_with_logits(&l, &targets).0;
            let err = rel_err(grad[i], (up - down) / (2.0 * FD_STEP));
            assert!(err < FD_REL_TOL, "seed {seed} elem {i}: {err}");
        }
    }
}

#[test]
fn constant_graph_gives_zero_gradients() {
    check_constant_graph_gives_zero_gradients();
}

pub fn check_constant_graph_gives_zero_gradients() {
    let mut r = rng(9);
    let mut layer = Conv2d::<f64>::new("c", 2, 3, 4, 2, 1, 0.5, &mut r);
    let x = random_tensor([2, 2, 8, 8], &mut r);
    let y = layer.forward(&x, Mode::TRAIN).unwrap();
    let dx = layer.backward(&Tensor4::zeros(y.dims())).unwrap();
    assert!(dx.data().iter().all(|&v| v == 0.0));
    assert!(layer.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
}

#[test]
fn backward_twice_is_rejected() {
    check_backward_twice_is_rejected();
}

pub fn check_backward_twice_is_rejected() {
    let mut r = rng(10);
    let mut bn = BatchNorm2d::<f64>::new("bn", 2);
    let x = random_tensor([3, 2, 2, 2], &mut r);
    let y = bn.forward(&x, Mode::TRAIN).unwrap();
    bn.backward(&y).unwrap();
    assert!(bn.backward(&y).is_err());
}

/// Whole-network check: the generator's parameter gradients through the
/// discriminator, and the discriminator's own gradients, against central
/// differences of the scalar BCE objective. Kinks in (leaky) ReLU make an
/// isolated element occasionally disagree, so the comparison is on the
/// gradient vector as a whole.
///
/// Weights are rescaled to std ~0.3 first: at the 0.02 init the batch-norm
/// inputs have variance near epsilon, the objective's curvature is huge and
/// h = 1e-4 differences stop approximating the derivative. The step here is
/// 1e-6 so that fewer activations straddle a kink between the two probes.
const WHOLE_STEP: f64 = 1e-6;

#[test]
fn full_model_gradients() {
    check_full_model_gradients();
}

pub fn check_full_model_gradients() {
    use glyphgan::data::Charset;
    use glyphgan::gan::{GanModel, ModelConfig};

    for seed in SEEDS {
        let mut r = rng(seed);
        let cfg = ModelConfig {
            base_channels: 2,
            noise_dim: 3,
            embed_dim: 2,
            head_hidden: 4,
            ..ModelConfig::new(Charset::digits())
        };
        let mut m = GanModel::<f64>::new(cfg, seed);
        m.discriminator.set_input_standardization(0.3, 0.4);
        let (mut gp, mut dp) = (m.generator.params_mut(), m.discriminator.params_mut());
        for p in gp
            .iter_mut()
            .chain(dp.iter_mut())
            .filter(|p| p.name.ends_with(".weight"))
        {
            p.value.iter_mut().for_each(|v| *v *= 15.0);
        }
        let b = 3;
        let chars: Vec<usize> = (0..b).map(|_| r.random_range(0..10)).collect();
        let noise = random_tensor([b, 3, 1, 1], &mut r);
        let targets: Vec<f64> = (0..b).map(|i| (i % 2) as f64).collect();
        let mode = Mode::Train { update_running: false };

        let loss = |m: &mut GanModel<f64>| {
            let img = m.generator.forward(&chars, &noise, mode).unwrap();
            let logits = m.discriminator.forward(&img, &chars, mode).unwrap();
            bce_with_logits(logits.data(), &targets)
        };
        m.generator.zero_grad();
        m.discriminator.zero_grad();
        let (_, g) = loss(&mut m);
        let dimg = m
            .discriminator
            .backward(&Tensor4::from_vec([b, 1, 1, 1], g).unwrap())
            .unwrap();
        m.generator.backward(&dimg).unwrap();

        let n_params = m.params().len();
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for pi in 0..n_params {
            let analytic = m.params()[pi].grad.clone();
            let (mut pd, mut pn) = (0.0f64, 0.0f64);
            for i in 0..analytic.len() {
                let set = |m: &mut GanModel<f64>, v: f64| {
                    let mut ps: Vec<_> = m.generator.params_mut();
                    ps.extend(m.discriminator.params_mut());
                    ps[pi].value[i] = v;
                };
                let orig = m.params()[pi].value[i];
                set(&mut m, orig + WHOLE_STEP);
                let up = loss(&mut m).0;
                set(&mut m, orig - WHOLE_STEP);
                let down = loss(&mut m).0;
                set(&mut m, orig);
                let numeric = (up - down) / (2.0 * WHOLE_STEP);
                diff += (analytic[i] - numeric).powi(2);
                norm += numeric.powi(2);
                pd += (analytic[i] - numeric).powi(2);
                pn += numeric.powi(2);
            }
            let name = &m.params()[pi].name;
            let (pd, pn) = (pd.sqrt(), pn.sqrt());
            assert!(
                pd <= FD_REL_TOL * pn + 1e-7,
                "seed {seed} {name}: error {pd:e}, gradient norm {pn:e}"
            );
        }
        let rel = diff.sqrt() / (norm.sqrt() + 1e-12);
        assert!(rel < FD_REL_TOL, "seed {seed}: relative gradient error {rel}");
    }
}

#[test]
fn conv_gradients_at_network_sizes() {
    check_conv_gradients_at_network_sizes();
}

pub fn check_conv_gradients_at_network_sizes() {
    let mut r = rng(21);
    for (cin, cout, side) in [(1, 2, 32), (2, 4, 16), (4, 8, 8)] {
        let mut conv = Conv2d::<f64>::new("c", cin, cout, 4, 2, 1, 0.5, &mut r);
        let x = random_tensor([2, cin, side, side], &mut r);
        let err = layer_grad_error(&mut conv, &x, Mode::TRAIN, &mut r);
        assert!(err < FD_REL_TOL, "conv {cin}->{cout} at {side}: {err}");
        let mut deconv = ConvTranspose2d::<f64>::new("d", cout, cin, 4, 2, 1, 0.5, &mut r);
        let y = random_tensor([2, cout, side / 2, side / 2], &mut r);
        let err = layer_grad_error(&mut deconv, &y, Mode::TRAIN, &mut r);
        assert!(err < FD_REL_TOL, "deconv {cout}->{cin} at {}: {err}", side / 2);
    }
}
