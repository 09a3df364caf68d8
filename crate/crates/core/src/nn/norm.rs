use super::tensor::check_finite;
use super::{Layer, Mode, NnError, Param, Scalar, Tensor4, BN_EPS, BN_MOMENTUM};

/// Per-channel batch normalization with learned scale (`gamma`) and shift (`beta`).
///
/// Running statistics follow `running = momentum * running + (1 - momentum) * batch`,
/// using the unbiased batch variance.
#[derive(Clone, Debug)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    channels: usize,
    eps: T,
    momentum: T,
    cache: Option<Cache<T>>,
}

#[derive(Clone, Debug)]
enum Cache<T> {
    Batch {
        normalized: Vec<T>,
        inv_std: Vec<T>,
        dims: [usize; 4],
    },
    Running {
        normalized: Vec<T>,
        dims: [usize; 4],
    },
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.gamma"), &[channels], T::one()),
            beta: Param::zeros(format!("{name}.beta"), &[channels]),
            running_mean: Param::zeros(format!("{name}.running_mean"), &[channels]),
            running_var: Param::filled(format!("{name}.running_var"), &[channels], T::one()),
            channels,
            eps: T::lit(BN_EPS),
            momentum: T::lit(BN_MOMENTUM),
            cache: None,
        }
    }

    pub fn name(&self) -> &str {
        self.gamma.name.trim_end_matches(".gamma")
    }

    fn check(&self, input: &Tensor4<T>) -> Result<(), NnError> {
        if input.channels() != self.channels {
            return Err(NnError::ShapeMismatch(format!(
                "{}: expected {} channels, got {}",
                self.name(),
                self.channels,
                input.channels()
            )));
        }
        Ok(())
    }

    fn apply_running(&self, input: &Tensor4<T>) -> Tensor4<T> {
        let [b, c, h, w] = input.dims();
        let hw = h * w;
        let mut out = input.clone();
        for ch in 0..c {
            let scale = self.gamma.value[ch] / (self.running_var.value[ch] + self.eps).sqrt();
            let shift = self.beta.value[ch] - self.running_mean.value[ch] * scale;
            for n in 0..b {
                out.data_mut()[(n * c + ch) * hw..(n * c + ch + 1) * hw]
                    .iter_mut()
                    .for_each(|v| *v = *v * scale + shift);
            }
        }
        out
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, input: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>, NnError> {
        self.check(input)?;
        let update_running = match mode {
            Mode::Eval => {
                let out = self.apply_running(input);
                check_finite(&out, self.name())?;
                let [b, c, h, w] = input.dims();
                let mut normalized = input.data().to_vec();
                for ch in 0..c {
                    let mean = self.running_mean.value[ch];
                    let inv_std = T::one() / (self.running_var.value[ch] + self.eps).sqrt();
                    for n in 0..b {
                        normalized[(n * c + ch) * h * w..(n * c + ch + 1) * h * w]
                            .iter_mut()
                            .for_each(|v| *v = (*v - mean) * inv_std);
                    }
                }
                self.cache = Some(Cache::Running {
                    normalized,
                    dims: input.dims(),
                });
                return Ok(out);
            }
            Mode::Train { update_running } => update_running,
        };
        let [b, c, h, w] = input.dims();
        if b < 2 {
            return Err(NnError::DegenerateBatch(b));
        }
        let hw = h * w;
        let count = T::from_usize(b * hw).unwrap();
        let mut out = Tensor4::zeros(input.dims());
        let mut normalized = vec![T::zero(); input.len()];
        let mut inv_stds = vec![T::zero(); c];
        for ch in 0..c {
            let planes = (0..b).map(|n| &input.data()[(n * c + ch) * hw..(n * c + ch + 1) * hw]);
            let mean = planes.clone().flatten().copied().sum::<T>() / count;
            let var = planes.flatten().map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
            let inv_std = T::one() / (var + self.eps).sqrt();
            inv_stds[ch] = inv_std;
            let (g, bt) = (self.gamma.value[ch], self.beta.value[ch]);
            for n in 0..b {
                let range = (n * c + ch) * hw..(n * c + ch + 1) * hw;
                for i in range {
                    let xh = (input.data()[i] - mean) * inv_std;
                    normalized[i] = xh;
                    out.data_mut()[i] = g * xh + bt;
                }
            }
            if update_running {
                let unbiased = if b * hw > 1 {
                    var * count / (count - T::one())
                } else {
                    var
                };
                let keep = self.momentum;
                let rm = &mut self.running_mean.value[ch];
                *rm = keep * *rm + (T::one() - keep) * mean;
                let rv = &mut self.running_var.value[ch];
                *rv = keep * *rv + (T::one() - keep) * unbiased;
            }
        }
        check_finite(&out, self.name())?;
        self.cache = Some(Cache::Batch {
            normalized,
            inv_std: inv_stds,
            dims: input.dims(),
        });
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::GraphNotRecorded(self.name().to_string()))?;
        let dims = match &cache {
            Cache::Batch { dims, .. } | Cache::Running { dims, .. } => *dims,
        };
        if grad_output.dims() != dims {
            return Err(NnError::ShapeMismatch(format!(
                "{}: gradient {:?}, expected {dims:?}",
                self.name(),
                grad_output.dims()
            )));
        }
        let [b, c, h, w] = dims;
        let hw = h * w;
        let dy = grad_output.data();
        let mut dx = Tensor4::zeros(dims);
        match cache {
            Cache::Batch {
                normalized, inv_std, ..
            } => {
                let count = T::from_usize(b * hw).unwrap();
                for ch in 0..c {
                    let idx = || (0..b).flat_map(move |n| (n * c + ch) * hw..(n * c + ch + 1) * hw);
                    let sum_dy: T = idx().map(|i| dy[i]).sum();
                    let sum_dy_xh: T = idx().map(|i| dy[i] * normalized[i]).sum();
                    self.beta.grad[ch] = self.beta.grad[ch] + sum_dy;
                    self.gamma.grad[ch] = self.gamma.grad[ch] + sum_dy_xh;
                    let k = self.gamma.value[ch] * inv_std[ch] / count;
                    for i in idx() {
                        dx.data_mut()[i] = k * (count * dy[i] - sum_dy - normalized[i] * sum_dy_xh);
                    }
                }
            }
            Cache::Running { normalized, .. } => {
                for ch in 0..c {
                    let inv_std = T::one() / (self.running_var.value[ch] + self.eps).sqrt();
                    let scale = self.gamma.value[ch] * inv_std;
                    for n in 0..b {
                        for i in (n * c + ch) * hw..(n * c + ch + 1) * hw {
                            self.beta.grad[ch] = self.beta.grad[ch] + dy[i];
                            self.gamma.grad[ch] = self.gamma.grad[ch] + dy[i] * normalized[i];
                            dx.data_mut()[i] = scale * dy[i];
                        }
                    }
                }
            }
        }
        Ok(dx)
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.check(input)?;
        let out = self.apply_running(input);
        check_finite(&out, self.name())?;
        Ok(out)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&Param<T>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}
