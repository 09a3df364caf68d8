use rand::Rng;

use crate::nn::{
    BatchNorm2d, ConvTranspose2d, Embedding, Layer, Linear, Mode, NnError, Param, Relu, Scalar, Tanh, Tensor4, INIT_STD,
};

use super::ModelConfig;

/// `z ⊕ embed(c)` -> linear -> 4x4 seed map -> three stride-2 transposed
/// convolutions -> tanh, mapped affinely onto `[0, 1]`.
#[derive(Clone, Debug)]
pub struct Generator<T> {
    pub embed: Embedding<T>,
    pub project: Linear<T>,
    pub bn0: BatchNorm2d<T>,
    act0: Relu<T>,
    pub deconv1: ConvTranspose2d<T>,
    pub bn1: BatchNorm2d<T>,
    act1: Relu<T>,
    pub deconv2: ConvTranspose2d<T>,
    pub bn2: BatchNorm2d<T>,
    act2: Relu<T>,
    pub deconv3: ConvTranspose2d<T>,
    out: Tanh<T>,
    seed_dims: [usize; 3],
    noise_dim: usize,
    trace: Vec<[usize; 4]>,
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.base_channels;
        let side = cfg.seed_side();
        let (z, e) = (cfg.noise_dim, cfg.embed_dim);
        Self {
            embed: Embedding::new("g.embed", cfg.charset.len(), e, 1.0, rng),
            project: Linear::new("g.project", z + e, 4 * c * side * side, INIT_STD, rng),
            bn0: BatchNorm2d::new("g.bn0", 4 * c),
            act0: Relu::new(),
            deconv1: ConvTranspose2d::new("g.deconv1", 4 * c, 2 * c, 4, 2, 1, INIT_STD, rng),
            bn1: BatchNorm2d::new("g.bn1", 2 * c),
            act1: Relu::new(),
            deconv2: ConvTranspose2d::new("g.deconv2", 2 * c, c, 4, 2, 1, INIT_STD, rng),
            bn2: BatchNorm2d::new("g.bn2", c),
            act2: Relu::new(),
            deconv3: ConvTranspose2d::new("g.deconv3", c, 1, 4, 2, 1, INIT_STD, rng),
            out: Tanh::new(),
            seed_dims: [4 * c, side, side],
            noise_dim: z,
            trace: Vec::new(),
        }
    }

    fn check_noise(&self, chars: &[usize], noise: &Tensor4<T>) -> Result<(), NnError> {
        if noise.batch() != chars.len() || noise.item_len() != self.noise_dim {
            return Err(NnError::ShapeMismatch(format!(
                "generator: noise {:?} for {} chars, noise dim {}",
                noise.dims(),
                chars.len(),
                self.noise_dim
            )));
        }
        Ok(())
    }

    fn seed_shape(&self, batch: usize) -> [usize; 4] {
        [batch, self.seed_dims[0], self.seed_dims[1], self.seed_dims[2]]
    }

    /// Training-path forward. Returns `[B, 1, S, S]` in `[0, 1]`.
    pub fn forward(&mut self, chars: &[usize], noise: &Tensor4<T>, mode: Mode) -> Result<Tensor4<T>, NnError> {
        self.check_noise(chars, noise)?;
        let b = chars.len();
        let emb = self.embed.forward(chars)?;
        let input = Tensor4::concat_features(noise, &emb)?;
        let mut trace = vec![input.dims()];
        let h = self.project.forward(&input, mode)?.reshape(self.seed_shape(b))?;
        trace.push(h.dims());
        let h = self.act0.forward(&self.bn0.forward(&h, mode)?, mode)?;
        let h = self.deconv1.forward(&h, mode)?;
        trace.push(h.dims());
        let h = self.act1.forward(&self.bn1.forward(&h, mode)?, mode)?;
        let h = self.deconv2.forward(&h, mode)?;
        trace.push(h.dims());
        let h = self.act2.forward(&self.bn2.forward(&h, mode)?, mode)?;
        let h = self.deconv3.forward(&h, mode)?;
        trace.push(h.dims());
        let h = self.out.forward(&h, mode)?;
        self.trace = trace;
        Ok(to_unit_range(&h))
    }

    /// Accumulates parameter gradients from `dL/d(image)`.
    pub fn backward(&mut self, grad_image: &Tensor4<T>) -> Result<(), NnError> {
        let half = T::lit(0.5);
        let g = grad_image.map(|v| v * half);
        let g = self.out.backward(&g)?;
        let g = self.deconv3.backward(&g)?;
        let g = self.bn2.backward(&self.act2.backward(&g)?)?;
        let g = self.deconv2.backward(&g)?;
        let g = self.bn1.backward(&self.act1.backward(&g)?)?;
        let g = self.deconv1.backward(&g)?;
        let g = self.bn0.backward(&self.act0.backward(&g)?)?;
        let b = g.batch();
        let g = self
            .project
            .backward(&g.reshape([b, self.project.weight.shape[0], 1, 1])?)?;
        let (_, g_emb) = g.split_features(self.noise_dim)?;
        self.embed.backward(&g_emb)
    }

    /// Inference with running batch-norm statistics; `&self` only.
    pub fn infer(&self, chars: &[usize], noise: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.check_noise(chars, noise)?;
        let emb = self.embed.lookup(chars)?;
        let input = Tensor4::concat_features(noise, &emb)?;
        let h = self.project.infer(&input)?.reshape(self.seed_shape(chars.len()))?;
        let h = self.act0.infer(&self.bn0.infer(&h)?)?;
        let h = self.act1.infer(&self.bn1.infer(&self.deconv1.infer(&h)?)?)?;
        let h = self.act2.infer(&self.bn2.infer(&self.deconv2.infer(&h)?)?)?;
        let h = self.out.infer(&self.deconv3.infer(&h)?)?;
        Ok(to_unit_range(&h))
    }

    /// Shapes seen by the last training forward: input, seed map, and the
    /// output of each transposed convolution.
    pub fn trace(&self) -> &[[usize; 4]] {
        &self.trace
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.embed.table];
        v.extend(self.project.params());
        v.extend(self.bn0.params());
        v.extend(self.deconv1.params());
        v.extend(self.bn1.params());
        v.extend(self.deconv2.params());
        v.extend(self.bn2.params());
        v.extend(self.deconv3.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.embed.table];
        v.extend(self.project.params_mut());
        v.extend(self.bn0.params_mut());
        v.extend(self.deconv1.params_mut());
        v.extend(self.bn1.params_mut());
        v.extend(self.deconv2.params_mut());
        v.extend(self.bn2.params_mut());
        v.extend(self.deconv3.params_mut());
        v
    }

    pub fn buffers(&self) -> Vec<&Param<T>> {
        [&self.bn0, &self.bn1, &self.bn2]
            .into_iter()
            .flat_map(|b| b.buffers())
            .collect()
    }

    /// Parameters followed by buffers, matching `params()` then `buffers()`.
    pub fn tensors_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.embed.table];
        v.extend(self.project.params_mut());
        let mut bufs = Vec::new();
        for (bn, deconv) in [
            (&mut self.bn0, &mut self.deconv1),
            (&mut self.bn1, &mut self.deconv2),
            (&mut self.bn2, &mut self.deconv3),
        ] {
            let BatchNorm2d {
                gamma,
                beta,
                running_mean,
                running_var,
                ..
            } = bn;
            v.push(gamma);
            v.push(beta);
            v.extend(deconv.params_mut());
            bufs.push(running_mean);
            bufs.push(running_var);
        }
        v.extend(bufs);
        v
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }
}

fn to_unit_range<T: Scalar>(t: &Tensor4<T>) -> Tensor4<T> {
    let half = T::lit(0.5);
    t.map(|v| (v + T::one()) * half)
}
