use rand::Rng;

use super::scalar::{matmul, MatRef};
use super::tensor::{check_finite, from_channel_major, to_channel_major};
use super::{Layer, Mode, NnError, Param, Scalar, Tensor4};

pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

pub fn deconv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input == 0 {
        return None;
    }
    ((input - 1) * stride + kernel).checked_sub(2 * pad).filter(|&s| s > 0)
}

/// Sliding-window geometry between a large map (`big_h x big_w`) and the
/// small map of window positions (`small_h x small_w`).
#[derive(Clone, Copy, Debug)]
struct Window {
    channels: usize,
    batch: usize,
    big_h: usize,
    big_w: usize,
    small_h: usize,
    small_w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn cols(&self) -> usize {
        self.batch * self.small_h * self.small_w
    }

    /// Big-map coordinate touched by window position `o` at kernel tap `k`.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let v = (o * self.stride + k) as isize - self.pad as isize;
        (v >= 0 && (v as usize) < limit).then_some(v as usize)
    }

    /// NCHW big map -> `[C*k*k, B*small_h*small_w]`.
    fn im2col<T: Scalar>(&self, big: &[T]) -> Vec<T> {
        let (sh, sw, k) = (self.small_h, self.small_w, self.kernel);
        let cols = self.cols();
        let mut out = vec![T::zero(); self.rows() * cols];
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut out[row * cols..(row + 1) * cols];
                    for n in 0..self.batch {
                        let plane = &big[(n * self.channels + c) * self.big_h * self.big_w..];
                        for oy in 0..sh {
                            let Some(iy) = self.source(oy, ki, self.big_h) else {
                                continue;
                            };
                            let base = (n * sh + oy) * sw;
                            for ox in 0..sw {
                                if let Some(ix) = self.source(ox, kj, self.big_w) {
                                    dst[base + ox] = plane[iy * self.big_w + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Adjoint of [`Window::im2col`]: scatter-add columns into an NCHW big map.
    fn col2im<T: Scalar>(&self, cols_data: &[T]) -> Vec<T> {
        let (sh, sw, k) = (self.small_h, self.small_w, self.kernel);
        let cols = self.cols();
        let plane_len = self.big_h * self.big_w;
        let mut out = vec![T::zero(); self.batch * self.channels * plane_len];
        for c in 0..self.channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols_data[row * cols..(row + 1) * cols];
                    for n in 0..self.batch {
                        let off = (n * self.channels + c) * plane_len;
                        let plane = &mut out[off..off + plane_len];
                        for oy in 0..sh {
                            let Some(iy) = self.source(oy, ki, self.big_h) else {
                                continue;
                            };
                            let base = (n * sh + oy) * sw;
                            for ox in 0..sw {
                                if let Some(ix) = self.source(ox, kj, self.big_w) {
                                    plane[iy * self.big_w + ix] = plane[iy * self.big_w + ix] + src[base + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn add_channel_bias<T: Scalar>(out: &mut Tensor4<T>, bias: &[T]) {
    let [b, c, h, w] = out.dims();
    let hw = h * w;
    let data = out.data_mut();
    for n in 0..b {
        for (ch, &bv) in bias.iter().enumerate().take(c) {
            data[(n * c + ch) * hw..(n * c + ch + 1) * hw]
                .iter_mut()
                .for_each(|v| *v = *v + bv);
        }
    }
}

fn accumulate_channel_sums<T: Scalar>(grad: &Tensor4<T>, into: &mut [T]) {
    let [b, c, h, w] = grad.dims();
    let hw = h * w;
    for n in 0..b {
        for (ch, acc) in into.iter_mut().enumerate().take(c) {
            let s: T = grad.data()[(n * c + ch) * hw..(n * c + ch + 1) * hw]
                .iter()
                .copied()
                .sum();
            *acc = *acc + s;
        }
    }
}

/// Strided 2-D convolution. Weight layout `[out, in, k, k]`.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<(Window, Vec<T>)>,
}

impl<T: Scalar> Conv2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(stride >= 1 && kernel >= 1);
        Self {
            weight: Param::normal(
                format!("{name}.weight"),
                &[out_channels, in_channels, kernel, kernel],
                init_std,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn name(&self) -> &str {
        self.weight.name.trim_end_matches(".weight")
    }

    pub fn output_dims(&self, input: [usize; 4]) -> Result<[usize; 4], NnError> {
        let [b, c, h, w] = input;
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "{}: expected {} input channels, got {c}",
                self.name(),
                self.in_channels
            )));
        }
        let oh = conv_output_size(h, self.kernel, self.stride, self.pad);
        let ow = conv_output_size(w, self.kernel, self.stride, self.pad);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok([b, self.out_channels, oh, ow]),
            _ => Err(NnError::ShapeMismatch(format!(
                "{}: kernel {} does not fit {h}x{w} with pad {}",
                self.name(),
                self.kernel,
                self.pad
            ))),
        }
    }

    fn window(&self, input: [usize; 4]) -> Result<(Window, [usize; 4]), NnError> {
        let out = self.output_dims(input)?;
        Ok((
            Window {
                channels: self.in_channels,
                batch: input[0],
                big_h: input[2],
                big_w: input[3],
                small_h: out[2],
                small_w: out[3],
                kernel: self.kernel,
                stride: self.stride,
                pad: self.pad,
            },
            out,
        ))
    }

    fn apply(&self, input: &Tensor4<T>) -> Result<(Tensor4<T>, Window, Vec<T>), NnError> {
        let (win, out_dims) = self.window(input.dims())?;
        let cols = win.im2col(input.data());
        let mut out_cm = vec![T::zero(); self.out_channels * win.cols()];
        matmul(
            MatRef::row_major(&self.weight.value, self.out_channels, win.rows()),
            MatRef::row_major(&cols, win.rows(), win.cols()),
            &mut out_cm,
            false,
        );
        let mut out = from_channel_major(&out_cm, out_dims);
        add_channel_bias(&mut out, &self.bias.value);
        check_finite(&out, self.name())?;
        Ok((out, win, cols))
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, input: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>, NnError> {
        let (out, win, cols) = self.apply(input)?;
        self.cache = Some((win, cols));
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let (win, cols) = self
            .cache
            .take()
            .ok_or_else(|| NnError::GraphNotRecorded(self.name().to_string()))?;
        let expect = [win.batch, self.out_channels, win.small_h, win.small_w];
        if grad_output.dims() != expect {
            return Err(NnError::ShapeMismatch(format!(
                "{}: gradient {:?}, expected {expect:?}",
                self.name(),
                grad_output.dims()
            )));
        }
        let grad_cm = to_channel_major(grad_output);
        // dW += dY * cols^T
        matmul(
            MatRef::row_major(&grad_cm, self.out_channels, win.cols()),
            MatRef::transposed(&cols, win.cols(), win.rows()),
            &mut self.weight.grad,
            true,
        );
        accumulate_channel_sums(grad_output, &mut self.bias.grad);
        // dcols = W^T * dY
        let mut dcols = vec![T::zero(); win.rows() * win.cols()];
        matmul(
            MatRef::transposed(&self.weight.value, win.rows(), self.out_channels),
            MatRef::row_major(&grad_cm, self.out_channels, win.cols()),
            &mut dcols,
            false,
        );
        Tensor4::from_vec([win.batch, self.in_channels, win.big_h, win.big_w], win.col2im(&dcols))
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.apply(input).map(|(out, _, _)| out)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Transposed (fractionally strided) convolution, the adjoint of [`Conv2d`]
/// for a shared kernel. Weight layout `[in, out, k, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<(Window, Vec<T>)>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        assert!(stride >= 1 && kernel >= 1);
        Self {
            weight: Param::normal(
                format!("{name}.weight"),
                &[in_channels, out_channels, kernel, kernel],
                init_std,
                rng,
            ),
            bias: Param::zeros(format!("{name}.bias"), &[out_channels]),
            in_channels,
            out_channels,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn name(&self) -> &str {
        self.weight.name.trim_end_matches(".weight")
    }

    pub fn output_dims(&self, input: [usize; 4]) -> Result<[usize; 4], NnError> {
        let [b, c, h, w] = input;
        if c != self.in_channels {
            return Err(NnError::ShapeMismatch(format!(
                "{}: expected {} input channels, got {c}",
                self.name(),
                self.in_channels
            )));
        }
        let oh = deconv_output_size(h, self.kernel, self.stride, self.pad);
        let ow = deconv_output_size(w, self.kernel, self.stride, self.pad);
        match (oh, ow) {
            (Some(oh), Some(ow)) => Ok([b, self.out_channels, oh, ow]),
            _ => Err(NnError::ShapeMismatch(format!(
                "{}: empty output for {h}x{w} input",
                self.name()
            ))),
        }
    }

    fn window(&self, input: [usize; 4]) -> Result<(Window, [usize; 4]), NnError> {
        let out = self.output_dims(input)?;
        Ok((
            Window {
                channels: self.out_channels,
                batch: input[0],
                big_h: out[2],
                big_w: out[3],
                small_h: input[2],
                small_w: input[3],
                kernel: self.kernel,
                stride: self.stride,
                pad: self.pad,
            },
            out,
        ))
    }

    fn apply(&self, input: &Tensor4<T>) -> Result<(Tensor4<T>, Window, Vec<T>), NnError> {
        let (win, out_dims) = self.window(input.dims())?;
        let x_cm = to_channel_major(input);
        // cols = W^T * X, W viewed as [in, out*k*k]
        let mut cols = vec![T::zero(); win.rows() * win.cols()];
        matmul(
            MatRef::transposed(&self.weight.value, win.rows(), self.in_channels),
            MatRef::row_major(&x_cm, self.in_channels, win.cols()),
            &mut cols,
            false,
        );
        let mut out = Tensor4::from_vec(out_dims, win.col2im(&cols))?;
        add_channel_bias(&mut out, &self.bias.value);
        check_finite(&out, self.name())?;
        Ok((out, win, x_cm))
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    fn forward(&mut self, input: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>, NnError> {
        let (out, win, x_cm) = self.apply(input)?;
        self.cache = Some((win, x_cm));
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let (win, x_cm) = self
            .cache
            .take()
            .ok_or_else(|| NnError::GraphNotRecorded(self.name().to_string()))?;
        let expect = [win.batch, self.out_channels, win.big_h, win.big_w];
        if grad_output.dims() != expect {
            return Err(NnError::ShapeMismatch(format!(
                "{}: gradient {:?}, expected {expect:?}",
                self.name(),
                grad_output.dims()
            )));
        }
        let dcols = win.im2col(grad_output.data());
        // dW += X * dcols^T
        matmul(
            MatRef::row_major(&x_cm, self.in_channels, win.cols()),
            MatRef::transposed(&dcols, win.cols(), win.rows()),
            &mut self.weight.grad,
            true,
        );
        accumulate_channel_sums(grad_output, &mut self.bias.grad);
        // dX = W * dcols
        let mut dx_cm = vec![T::zero(); self.in_channels * win.cols()];
        matmul(
            MatRef::row_major(&self.weight.value, self.in_channels, win.rows()),
            MatRef::row_major(&dcols, win.rows(), win.cols()),
            &mut dx_cm,
            false,
        );
        Ok(from_channel_major(
            &dx_cm,
            [win.batch, self.in_channels, win.small_h, win.small_w],
        ))
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.apply(input).map(|(out, _, _)| out)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
