use super::tensor::check_finite;
use super::{Layer, Mode, NnError, Scalar, Tensor4};

fn take_cache<T>(cache: &mut Option<Tensor4<T>>, name: &str) -> Result<Tensor4<T>, NnError> {
    cache.take().ok_or_else(|| NnError::GraphNotRecorded(name.to_string()))
}

fn same_dims<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>, name: &str) -> Result<(), NnError> {
    if a.dims() != b.dims() {
        return Err(NnError::ShapeMismatch(format!(
            "{name}: gradient {:?}, expected {:?}",
            b.dims(),
            a.dims()
        )));
    }
    Ok(())
}

/// `x` for `x >= 0`, `slope * x` otherwise.
#[derive(Clone, Debug)]
pub struct LeakyRelu<T> {
    slope: T,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> LeakyRelu<T> {
    pub fn new(slope: f64) -> Self {
        assert!(slope > 0.0 && slope < 1.0, "leaky slope must lie in (0, 1)");
        Self {
            slope: T::lit(slope),
            input: None,
        }
    }

    pub fn apply(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let s = self.slope;
        x.map(|v| if v >= T::zero() { v } else { s * v })
    }
}

impl<T: Scalar> Layer<T> for LeakyRelu<T> {
    fn forward(&mut self, input: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>, NnError> {
        let out = self.apply(input);
        check_finite(&out, "leaky_relu")?;
        self.input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let x = take_cache(&mut self.input, "leaky_relu")?;
        same_dims(&x, grad_output, "leaky_relu")?;
        let mut dx = grad_output.clone();
        for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v < T::zero() {
                *g = *g * self.slope;
            }
        }
        Ok(dx)
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(self.apply(input))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Relu<T> {
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn new() -> Self {
        Self { input: None }
    }
}

impl<T: Scalar> Layer<T> for Relu<T> {
    fn forward(&mut self, input: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>, NnError> {
        let out = self.infer(input)?;
        self.input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let x = take_cache(&mut self.input, "relu")?;
        same_dims(&x, grad_output, "relu")?;
        let mut dx = grad_output.clone();
        for (g, &v) in dx.data_mut().iter_mut().zip(x.data()) {
            if v <= T::zero() {
                *g = T::zero();
            }
        }
        Ok(dx)
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(input.map(|v| v.max(T::zero())))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Tanh<T> {
    output: Option<Tensor4<T>>,
}

impl<T: Scalar> Tanh<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

impl<T: Scalar> Layer<T> for Tanh<T> {
    fn forward(&mut self, input: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>, NnError> {
        let out = self.infer(input)?;
        self.output = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let y = take_cache(&mut self.output, "tanh")?;
        same_dims(&y, grad_output, "tanh")?;
        let mut dx = grad_output.clone();
        for (g, &t) in dx.data_mut().iter_mut().zip(y.data()) {
            *g = *g * (T::one() - t * t);
        }
        Ok(dx)
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(input.map(|v| v.tanh()))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sigmoid<T> {
    output: Option<Tensor4<T>>,
}

impl<T: Scalar> Sigmoid<T> {
    pub fn new() -> Self {
        Self { output: None }
    }
}

impl<T: Scalar> Layer<T> for Sigmoid<T> {
    fn forward(&mut self, input: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>, NnError> {
        let out = self.infer(input)?;
        self.output = Some(out.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let y = take_cache(&mut self.output, "sigmoid")?;
        same_dims(&y, grad_output, "sigmoid")?;
        let mut dx = grad_output.clone();
        for (g, &s) in dx.data_mut().iter_mut().zip(y.data()) {
            *g = *g * s * (T::one() - s);
        }
        Ok(dx)
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(input.map(super::sigmoid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor4<f64> {
        Tensor4::from_vec([1, 1, 1, 1], vec![v]).unwrap()
    }

    #[test]
    fn leaky_relu_values() {
        let act = LeakyRelu::<f64>::new(0.2);
        assert_eq!(act.apply(&scalar(2.0)).data()[0], 2.0);
        assert!((act.apply(&scalar(-1.0)).data()[0] + 0.2).abs() < 1e-15);
        assert_eq!(act.apply(&scalar(0.0)).data()[0], 0.0);
    }

    #[test]
    #[should_panic]
    fn leaky_relu_rejects_slope_one() {
        let _ = LeakyRelu::<f32>::new(1.0);
    }
}
