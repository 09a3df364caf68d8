use rand::Rng;

use crate::nn::{
    BatchNorm2d, Conv2d, Embedding, Layer, LeakyRelu, Mode, NnError, Param, Scalar, Tensor4, INIT_STD, LEAKY_SLOPE,
};

use super::ModelConfig;

/// Fixed input standardization, three stride-2 convolutions with leaky ReLU
/// (batch norm on the second and third), then the flattened 4x4 feature map
/// concatenated with the character embedding and mapped to one logit.
///
/// The head reads the joint vector as the feature map with the embedding
/// repeated at every position: a 1x1 convolution to `head_hidden` channels
/// with leaky ReLU mixes image and character features locally, and a
/// convolution over the whole map gives the logit. With `head_hidden` 0 the
/// head is linear and scores `f(image) + g(char)`, which cannot tell a real
/// image with the right character from the same image with a wrong one.
#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    /// `[mean, std]` applied to every input pixel before the first convolution.
    pub input_norm: Param<T>,
    pub conv1: Conv2d<T>,
    act1: LeakyRelu<T>,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    act2: LeakyRelu<T>,
    pub conv3: Conv2d<T>,
    pub bn3: BatchNorm2d<T>,
    act3: LeakyRelu<T>,
    pub embed: Embedding<T>,
    pub joint: Option<Conv2d<T>>,
    act_joint: LeakyRelu<T>,
    pub head: Conv2d<T>,
    feature_len: usize,
    image_size: usize,
    trace: Vec<[usize; 4]>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let c = cfg.base_channels;
        let side = cfg.seed_side();
        let feature_len = 4 * c * side * side;
        let joint_in = 4 * c + cfg.embed_dim;
        let head_in = if cfg.head_hidden > 0 { cfg.head_hidden } else { joint_in };
        let mut input_norm = Param::zeros("d.input_norm", &[2]);
        input_norm.value[1] = T::one();
        Self {
            input_norm,
            conv1: Conv2d::new("d.conv1", 1, c, 4, 2, 1, INIT_STD, rng),
            act1: LeakyRelu::new(LEAKY_SLOPE),
            conv2: Conv2d::new("d.conv2", c, 2 * c, 4, 2, 1, INIT_STD, rng),
            bn2: BatchNorm2d::new("d.bn2", 2 * c),
            act2: LeakyRelu::new(LEAKY_SLOPE),
            conv3: Conv2d::new("d.conv3", 2 * c, 4 * c, 4, 2, 1, INIT_STD, rng),
            bn3: BatchNorm2d::new("d.bn3", 4 * c),
            act3: LeakyRelu::new(LEAKY_SLOPE),
            embed: Embedding::new("d.embed", cfg.charset.len(), cfg.embed_dim, 1.0, rng),
            joint: (cfg.head_hidden > 0)
                .then(|| Conv2d::new("d.joint", joint_in, cfg.head_hidden, 1, 1, 0, INIT_STD, rng)),
            act_joint: LeakyRelu::new(LEAKY_SLOPE),
            head: Conv2d::new("d.head", head_in, 1, side, 1, 0, INIT_STD, rng),
            feature_len,
            image_size: cfg.image_size,
            trace: Vec::new(),
        }
    }

    pub fn set_input_standardization(&mut self, mean: T, std: T) {
        assert!(std > T::zero(), "standard deviation must be positive");
        self.input_norm.value = vec![mean, std];
    }

    fn check(&self, images: &Tensor4<T>, chars: &[usize]) -> Result<(), NnError> {
        let s = self.image_size;
        if images.dims()[1..] != [1, s, s] || images.batch() != chars.len() {
            return Err(NnError::ShapeMismatch(format!(
                "discriminator: images {:?} for {} chars, expected [_, 1, {s}, {s}]",
                images.dims(),
                chars.len()
            )));
        }
        Ok(())
    }

    fn standardize(&self, images: &Tensor4<T>) -> Tensor4<T> {
        let (mean, std) = (self.input_norm.value[0], self.input_norm.value[1]);
        images.map(|v| (v - mean) / std)
    }

    /// Training-path forward; returns logits `[B, 1, 1, 1]`.
    pub fn forward(&mut self, images: &Tensor4<T>, chars: &[usize], mode: Mode) -> Result<Tensor4<T>, NnError> {
        self.check(images, chars)?;
        let b = images.batch();
        let mut trace = vec![images.dims()];
        let x = self.standardize(images);
        let h = self.act1.forward(&self.conv1.forward(&x, mode)?, mode)?;
        trace.push(h.dims());
        let h = self
            .act2
            .forward(&self.bn2.forward(&self.conv2.forward(&h, mode)?, mode)?, mode)?;
        trace.push(h.dims());
        let h = self
            .act3
            .forward(&self.bn3.forward(&self.conv3.forward(&h, mode)?, mode)?, mode)?;
        trace.push(h.dims());
        let emb = self.embed.forward(chars)?;
        trace.push([b, self.feature_len + emb.item_len(), 1, 1]);
        let mut x = self.tile_join(&h, &emb)?;
        if let Some(j) = &mut self.joint {
            x = self.act_joint.forward(&j.forward(&x, mode)?, mode)?;
        }
        let logits = self.head.forward(&x, mode)?;
        trace.push(logits.dims());
        self.trace = trace;
        Ok(logits)
    }

    /// Accumulates parameter gradients from `dL/d(logits)` and returns `dL/d(images)`.
    pub fn backward(&mut self, grad_logits: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let mut g = self.head.backward(grad_logits)?;
        if let Some(j) = &mut self.joint {
            g = j.backward(&self.act_joint.backward(&g)?)?;
        }
        let [c, _, _] = self.map_dims();
        let (g, g_tiled) = g.split_channels(c)?;
        self.embed.backward(&g_tiled.sum_spatial())?;
        let g = self.conv3.backward(&self.bn3.backward(&self.act3.backward(&g)?)?)?;
        let g = self.conv2.backward(&self.bn2.backward(&self.act2.backward(&g)?)?)?;
        let g = self.conv1.backward(&self.act1.backward(&g)?)?;
        let std = self.input_norm.value[1];
        Ok(g.map(|v| v / std))
    }

    pub fn infer(&self, images: &Tensor4<T>, chars: &[usize]) -> Result<Tensor4<T>, NnError> {
        self.check(images, chars)?;
        let x = self.standardize(images);
        let h = self.act1.infer(&self.conv1.infer(&x)?)?;
        let h = self.act2.infer(&self.bn2.infer(&self.conv2.infer(&h)?)?)?;
        let h = self.act3.infer(&self.bn3.infer(&self.conv3.infer(&h)?)?)?;
        let mut x = self.tile_join(&h, &self.embed.lookup(chars)?)?;
        if let Some(j) = &self.joint {
            x = self.act_joint.infer(&j.infer(&x)?)?;
        }
        self.head.infer(&x)
    }

    /// Feature map with the embedding repeated over its positions as extra channels.
    fn tile_join(&self, map: &Tensor4<T>, emb: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Tensor4::concat_channels(map, &emb.tile_spatial(map.height(), map.width())?)
    }

    fn map_dims(&self) -> [usize; 3] {
        let c = self.bn3.gamma.len();
        let side = self.image_size / 8;
        [c, side, side]
    }

    /// Shapes seen by the last training forward: input, each conv block output,
    /// the concatenated feature vector, and the logit.
    pub fn trace(&self) -> &[[usize; 4]] {
        &self.trace
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv1.params();
        v.extend(self.conv2.params());
        v.extend(self.bn2.params());
        v.extend(self.conv3.params());
        v.extend(self.bn3.params());
        v.push(&self.embed.table);
        if let Some(j) = &self.joint {
            v.extend(j.params());
        }
        v.extend(self.head.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        v.extend(self.bn2.params_mut());
        v.extend(self.conv3.params_mut());
        v.extend(self.bn3.params_mut());
        v.push(&mut self.embed.table);
        if let Some(j) = &mut self.joint {
            v.extend(j.params_mut());
        }
        v.extend(self.head.params_mut());
        v
    }

    pub fn buffers(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.input_norm];
        v.extend(self.bn2.buffers());
        v.extend(self.bn3.buffers());
        v
    }

    /// Parameters followed by buffers, matching `params()` then `buffers()`.
    pub fn tensors_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        let BatchNorm2d {
            gamma: g2,
            beta: b2,
            running_mean: m2,
            running_var: v2,
            ..
        } = &mut self.bn2;
        v.push(g2);
        v.push(b2);
        v.extend(self.conv3.params_mut());
        let BatchNorm2d {
            gamma: g3,
            beta: b3,
            running_mean: m3,
            running_var: v3,
            ..
        } = &mut self.bn3;
        v.push(g3);
        v.push(b3);
        v.push(&mut self.embed.table);
        if let Some(j) = &mut self.joint {
            v.extend(j.params_mut());
        }
        v.extend(self.head.params_mut());
        v.extend([&mut self.input_norm, m2, v2, m3, v3]);
        v
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }
}
