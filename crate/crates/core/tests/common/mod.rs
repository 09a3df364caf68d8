//! Independent oracles and fixtures shared by the integration tests.
//!
//! Nothing here calls into the code path it is used to check: convolution is a
//! nested loop, gradients come from central differences, ink boxes from a full
//! pixel scan, spacing from rendering onto a canvas and scanning columns.

#![allow(dead_code)]

use std::path::PathBuf;

use glyphgan::data::{GlyphImage, IdxDataset};
use glyphgan::nn::{Layer, Mode, Param, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(dims: [usize; 4], rng: &mut impl Rng) -> Tensor4<f64> {
    let n = dims.iter().product();
    Tensor4::from_vec(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Random values kept at least `margin` away from zero (for kinked activations).
pub fn random_tensor_off_zero(dims: [usize; 4], margin: f64, rng: &mut impl Rng) -> Tensor4<f64> {
    let mut t = random_tensor(dims, rng);
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin - v.abs() } else { margin + v.abs() };
        }
    }
    t
}

/// Direct nested-loop convolution, weight `[out, in, k, k]`.
pub fn naive_conv2d(
    x: &Tensor4<f64>,
    w: &[f64],
    bias: &[f64],
    out_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Tensor4<f64> {
    let [b, c, h, wd] = x.dims();
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wd + 2 * pad - k) / stride + 1;
    let mut out = Tensor4::zeros([b, out_c, oh, ow]);
    for n in 0..b {
        for o in 0..out_c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[o];
                    for i in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += w[((o * c + i) * k + ky) * k + kx] * x.at(n, i, iy as usize, ix as usize);
                            }
                        }
                    }
                    let idx = ((n * out_c + o) * oh + oy) * ow + ox;
                    out.data_mut()[idx] = acc;
                }
            }
        }
    }
    out
}

pub const FD_STEP: f64 = 1e-4;
pub const FD_REL_TOL: f64 = 1e-3;

/// `|analytic - numeric| / (|numeric| + 1e-8)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

/// Worst relative error between analytic and central-difference gradients of
/// `L = <r, layer(x)>` over the input and every parameter element.
pub fn layer_grad_error<L: Layer<f64>>(layer: &mut L, x: &Tensor4<f64>, mode: Mode, rng: &mut impl Rng) -> f64 {
    let probe_mode = match mode {
        Mode::Train { .. } => Mode::Train { update_running: false },
        Mode::Eval => Mode::Eval,
    };
    let y = layer.forward(x, probe_mode).unwrap();
    let r = random_tensor(y.dims(), rng);
    for p in layer.params_mut() {
        p.zero_grad();
    }
    let dx = layer.backward(&r).unwrap();
    let analytic: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let loss = |layer: &mut L, x: &Tensor4<f64>| layer.forward(x, probe_mode).unwrap().dot(&r);
    let mut worst = 0.0f64;

    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + FD_STEP;
        let up = loss(layer, &xp);
        xp.data_mut()[i] = orig - FD_STEP;
        let down = loss(layer, &xp);
        xp.data_mut()[i] = orig;
        worst = worst.max(rel_err(dx.data()[i], (up - down) / (2.0 * FD_STEP)));
    }
    for (pi, grads) in analytic.iter().enumerate() {
        for i in 0..grads.len() {
            let orig = layer.params()[pi].value[i];
            set_param(layer, pi, i, orig + FD_STEP);
            let up = loss(layer, x);
            set_param(layer, pi, i, orig - FD_STEP);
            let down = loss(layer, x);
            set_param(layer, pi, i, orig);
            worst = worst.max(rel_err(grads[i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn set_param<L: Layer<f64>>(layer: &mut L, pi: usize, i: usize, v: f64) {
    let mut ps: Vec<&mut Param<f64>> = layer.params_mut();
    ps[pi].value[i] = v;
}

/// Tightest box (left, right, top, bottom) of pixels strictly above `threshold`, by full scan.
pub fn scan_ink_box(img: &GlyphImage, threshold: f32) -> Option<(usize, usize, usize, usize)> {
    let mut found: Option<(usize, usize, usize, usize)> = None;
    for y in 0..img.height() {
        for x in 0..img.width() {
            if img.get(y, x) > threshold {
                found = Some(match found {
                    None => (x, x, y, y),
                    Some((l, r, t, b)) => (l.min(x), r.max(x), t.min(y), b.max(y)),
                });
            }
        }
    }
    found
}

/// Renders two glyphs on a shared canvas (right glyph shifted by `dx` columns)
/// and returns the count of empty columns between the last inked column of
/// the left glyph and the first inked column of the right glyph.
pub fn render_and_scan_gap(left: &GlyphImage, right: &GlyphImage, dx: usize, threshold: f32) -> i64 {
    let h = left.height().max(right.height());
    let w = (left.width()).max(dx + right.width());
    let mut left_cols = vec![false; w];
    let mut right_cols = vec![false; w];
    for y in 0..h {
        for x in 0..w {
            if y < left.height() && x < left.width() && left.get(y, x) > threshold {
                left_cols[x] = true;
            }
            if y < right.height() && x >= dx && x - dx < right.width() && right.get(y, x - dx) > threshold {
                right_cols[x] = true;
            }
        }
    }
    let last_left = left_cols.iter().rposition(|&b| b).unwrap() as i64;
    let first_right = right_cols.iter().position(|&b| b).unwrap() as i64;
    first_right - last_left - 1
}

pub fn random_sparse_image(h: usize, w: usize, density: f64, rng: &mut impl Rng) -> GlyphImage {
    let mut px = vec![0.0f32; h * w];
    for v in px.iter_mut() {
        if rng.random_bool(density) {
            *v = rng.random_range(0.0..=1.0);
        }
    }
    GlyphImage::new(h, w, px).unwrap()
}

/// Solid rectangle of ink; columns `[x0, x1)`, rows `[y0, y1)`.
pub fn block_glyph(h: usize, w: usize, x0: usize, x1: usize, y0: usize, y1: usize) -> GlyphImage {
    let mut img = GlyphImage::blank(h, w);
    for y in y0..y1 {
        for x in x0..x1 {
            img.set(y, x, 1.0);
        }
    }
    img
}

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn mnist_dir() -> PathBuf {
    std::env::var_os("GLYPHGAN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace_root().join("data/mnist"))
}

pub fn mnist_train() -> IdxDataset {
    let dir = mnist_dir();
    IdxDataset::load(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )
    .expect("bundled MNIST subset (data/mnist) is readable")
}

pub fn mnist_test() -> IdxDataset {
    let dir = mnist_dir();
    IdxDataset::load(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))
        .expect("bundled MNIST subset (data/mnist) is readable")
}

/// Two glyphs cut from one straight 3 px stroke at `angle_deg` (positive =
/// rising to the right), with a 4-column gap between them, and the right
/// glyph's origin relative to the left one.
pub fn ramp_pair(angle_deg: f64) -> (GlyphImage, GlyphImage, (i64, i64)) {
    let (size, gap) = (48usize, 4usize);
    let (s, c) = angle_deg.to_radians().sin_cos();
    let (jx, jy) = (size as f64 + gap as f64 / 2.0, size as f64 / 2.0);
    let mut left = GlyphImage::blank(size, size);
    let mut right = GlyphImage::blank(size, size);
    for y in 0..size {
        for x in 0..2 * size + gap {
            let (vx, vy) = (x as f64 - jx, y as f64 - jy);
            let along = vx * c - vy * s;
            let across = vx * s + vy * c;
            if along.abs() > 20.0 || across.abs() > 1.5 {
                continue;
            }
            if x < size {
                left.set(y, x, 1.0);
            } else if x >= size + gap {
                right.set(y, x - size - gap, 1.0);
            }
        }
    }
    (left, right, ((size + gap) as i64, 0))
}
