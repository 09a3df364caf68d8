use rand::Rng;

use super::scalar::{matmul, MatRef};
use super::tensor::check_finite;
use super::{Layer, Mode, NnError, Param, Scalar, Tensor4};

/// Affine projection of flattened batch items: `[B, in] -> [B, out, 1, 1]`.
/// Weight layout `[out, in]`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    in_features: usize,
    out_features: usize,
    cache: Option<Tensor4<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        in_features: usize,
        out_features: usize,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            weight: Param::normal(format!("{name}.weight"), &[out_features, in_features], init_std, rng),
            bias: Param::zeros(format!("{name}.bias"), &[out_features]),
            in_features,
            out_features,
            cache: None,
        }
    }

    pub fn name(&self) -> &str {
        self.weight.name.trim_end_matches(".weight")
    }

    fn apply(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        if input.item_len() != self.in_features {
            return Err(NnError::ShapeMismatch(format!(
                "{}: expected {} features, got {}",
                self.name(),
                self.in_features,
                input.item_len()
            )));
        }
        let b = input.batch();
        let mut out = vec![T::zero(); b * self.out_features];
        // Y = X W^T
        matmul(
            MatRef::row_major(input.data(), b, self.in_features),
            MatRef::transposed(&self.weight.value, self.in_features, self.out_features),
            &mut out,
            false,
        );
        for row in out.chunks_mut(self.out_features) {
            for (v, &bv) in row.iter_mut().zip(&self.bias.value) {
                *v = *v + bv;
            }
        }
        let out = Tensor4::from_vec([b, self.out_features, 1, 1], out)?;
        check_finite(&out, self.name())?;
        Ok(out)
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, input: &Tensor4<T>, _mode: Mode) -> Result<Tensor4<T>, NnError> {
        let out = self.apply(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| NnError::GraphNotRecorded(self.name().to_string()))?;
        let b = x.batch();
        if grad_output.dims() != [b, self.out_features, 1, 1] {
            return Err(NnError::ShapeMismatch(format!(
                "{}: gradient {:?}",
                self.name(),
                grad_output.dims()
            )));
        }
        let dy = grad_output.data();
        // dW += dY^T X
        matmul(
            MatRef::transposed(dy, self.out_features, b),
            MatRef::row_major(x.data(), b, self.in_features),
            &mut self.weight.grad,
            true,
        );
        for row in dy.chunks(self.out_features) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        let mut dx = vec![T::zero(); x.len()];
        matmul(
            MatRef::row_major(dy, b, self.out_features),
            MatRef::row_major(&self.weight.value, self.out_features, self.in_features),
            &mut dx,
            false,
        );
        Tensor4::from_vec(x.dims(), dx)
    }

    fn infer(&self, input: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.apply(input)
    }

    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Learned lookup table `[rows, dim]`, indexed by charset position.
#[derive(Clone, Debug)]
pub struct Embedding<T> {
    pub table: Param<T>,
    rows: usize,
    dim: usize,
    cache: Option<Vec<usize>>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, rows: usize, dim: usize, init_std: f64, rng: &mut R) -> Self {
        Self {
            table: Param::normal(format!("{name}.table"), &[rows, dim], init_std, rng),
            rows,
            dim,
            cache: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, index: usize) -> Option<&[T]> {
        (index < self.rows).then(|| &self.table.value[index * self.dim..(index + 1) * self.dim])
    }

    /// `[B] -> [B, dim, 1, 1]`.
    pub fn lookup(&self, indices: &[usize]) -> Result<Tensor4<T>, NnError> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            let row = self
                .row(i)
                .ok_or_else(|| NnError::ShapeMismatch(format!("embedding row {i} outside {} rows", self.rows)))?;
            data.extend_from_slice(row);
        }
        Tensor4::from_vec([indices.len(), self.dim, 1, 1], data)
    }

    pub fn forward(&mut self, indices: &[usize]) -> Result<Tensor4<T>, NnError> {
        let out = self.lookup(indices)?;
        self.cache = Some(indices.to_vec());
        Ok(out)
    }

    /// Scatter-adds the incoming gradient into the rows that were looked up.
    pub fn backward(&mut self, grad_output: &Tensor4<T>) -> Result<(), NnError> {
        let indices = self
            .cache
            .take()
            .ok_or_else(|| NnError::GraphNotRecorded(self.table.name.clone()))?;
        if grad_output.dims() != [indices.len(), self.dim, 1, 1] {
            return Err(NnError::ShapeMismatch(format!(
                "{}: gradient {:?}",
                self.table.name,
                grad_output.dims()
            )));
        }
        for (n, &i) in indices.iter().enumerate() {
            let g = grad_output.item(n);
            let dst = &mut self.table.grad[i * self.dim..(i + 1) * self.dim];
            for (d, &v) in dst.iter_mut().zip(g) {
                *d = *d + v;
            }
        }
        Ok(())
    }
}
