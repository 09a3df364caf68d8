use super::{NnError, Scalar};

/// Dense NCHW tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    pub fn zeros(dims: [usize; 4]) -> Self {
        assert!(dims.iter().all(|&d| d >= 1), "tensor dims must be >= 1: {dims:?}");
        Self {
            dims,
            data: vec![T::zero(); dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<T>) -> Result<Self, NnError> {
        if dims.iter().any(|&d| d == 0) {
            return Err(NnError::ShapeMismatch(format!("zero dimension in {dims:?}")));
        }
        let want: usize = dims.iter().product();
        if want != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{dims:?} needs {want} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 4], value: T) -> Self {
        let mut t = Self::zeros(dims);
        t.data.iter_mut().for_each(|v| *v = value);
        t
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    /// Elements per batch item.
    pub fn item_len(&self) -> usize {
        self.dims[1] * self.dims[2] * self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        let [_, ch, h, w] = self.dims;
        self.data[((n * ch + c) * h + y) * w + x]
    }

    pub fn item(&self, n: usize) -> &[T] {
        let len = self.item_len();
        &self.data[n * len..(n + 1) * len]
    }

    /// Same buffer under new dims; the element count must match.
    pub fn reshape(self, dims: [usize; 4]) -> Result<Self, NnError> {
        Self::from_vec(dims, self.data)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of elementwise products.
    pub fn dot(&self, other: &Self) -> T {
        assert_eq!(self.dims, other.dims);
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }

    /// Concatenate two flat feature batches `[B, F1]` and `[B, F2]` into `[B, F1 + F2, 1, 1]`.
    pub fn concat_features(a: &Self, b: &Self) -> Result<Self, NnError> {
        if a.batch() != b.batch() {
            return Err(NnError::ShapeMismatch(format!(
                "concat batch {} vs {}",
                a.batch(),
                b.batch()
            )));
        }
        let (fa, fb) = (a.item_len(), b.item_len());
        let mut data = Vec::with_capacity(a.len() + b.len());
        for n in 0..a.batch() {
            data.extend_from_slice(a.item(n));
            data.extend_from_slice(b.item(n));
        }
        Self::from_vec([a.batch(), fa + fb, 1, 1], data)
    }

    /// `[B, C1, H, W]` and `[B, C2, H, W]` into `[B, C1 + C2, H, W]`.
    pub fn concat_channels(a: &Self, b: &Self) -> Result<Self, NnError> {
        if a.batch() != b.batch() || a.dims[2..] != b.dims[2..] {
            return Err(NnError::ShapeMismatch(format!("concat {:?} with {:?}", a.dims, b.dims)));
        }
        let joined = Self::concat_features(a, b)?;
        joined.reshape([a.batch(), a.channels() + b.channels(), a.height(), a.width()])
    }

    /// Inverse of [`Tensor4::concat_channels`].
    pub fn split_channels(&self, first: usize) -> Result<(Self, Self), NnError> {
        let [n, c, h, w] = self.dims;
        if first == 0 || first >= c {
            return Err(NnError::ShapeMismatch(format!("split at channel {first} of {c}")));
        }
        let (a, b) = self.split_features(first * h * w)?;
        Ok((a.reshape([n, first, h, w])?, b.reshape([n, c - first, h, w])?))
    }

    /// Repeats every `[B, C, 1, 1]` value over an `h x w` map.
    pub fn tile_spatial(&self, h: usize, w: usize) -> Result<Self, NnError> {
        if self.dims[2..] != [1, 1] {
            return Err(NnError::ShapeMismatch(format!("tile {:?}", self.dims)));
        }
        let data = self.data.iter().flat_map(|&v| std::iter::repeat_n(v, h * w)).collect();
        Self::from_vec([self.batch(), self.channels(), h, w], data)
    }

    /// Sums each channel's map: `[B, C, H, W]` to `[B, C, 1, 1]` (adjoint of tiling).
    pub fn sum_spatial(&self) -> Self {
        let hw = self.height() * self.width();
        let data = self
            .data
            .chunks(hw)
            .map(|c| c.iter().fold(T::zero(), |s, &v| s + v))
            .collect();
        Self {
            dims: [self.batch(), self.channels(), 1, 1],
            data,
        }
    }

    /// Inverse of [`Tensor4::concat_features`]: split `[B, F, ..]` after `first` features.
    pub fn split_features(&self, first: usize) -> Result<(Self, Self), NnError> {
        let f = self.item_len();
        if first == 0 || first >= f {
            return Err(NnError::ShapeMismatch(format!("split at {first} of {f} features")));
        }
        let mut a = Vec::with_capacity(self.batch() * first);
        let mut b = Vec::with_capacity(self.batch() * (f - first));
        for n in 0..self.batch() {
            let item = self.item(n);
            a.extend_from_slice(&item[..first]);
            b.extend_from_slice(&item[first..]);
        }
        Ok((
            Self::from_vec([self.batch(), first, 1, 1], a)?,
            Self::from_vec([self.batch(), f - first, 1, 1], b)?,
        ))
    }
}

/// Rejects non-finite values at layer boundaries when debug assertions are on.
pub(crate) fn check_finite<T: Scalar>(t: &Tensor4<T>, layer: &str) -> Result<(), NnError> {
    if cfg!(debug_assertions) && !t.all_finite() {
        return Err(NnError::NonFinite(layer.to_string()));
    }
    Ok(())
}

/// NCHW -> `[C, B*H*W]` row-major.
pub(crate) fn to_channel_major<T: Scalar>(t: &Tensor4<T>) -> Vec<T> {
    let [b, c, h, w] = t.dims();
    let hw = h * w;
    let mut out = vec![T::zero(); t.len()];
    for n in 0..b {
        for ch in 0..c {
            let src = &t.data()[(n * c + ch) * hw..(n * c + ch + 1) * hw];
            out[ch * b * hw + n * hw..ch * b * hw + (n + 1) * hw].copy_from_slice(src);
        }
    }
    out
}

/// `[C, B*H*W]` row-major -> NCHW.
pub(crate) fn from_channel_major<T: Scalar>(data: &[T], dims: [usize; 4]) -> Tensor4<T> {
    let [b, c, h, w] = dims;
    let hw = h * w;
    let mut out = Tensor4::zeros(dims);
    for n in 0..b {
        for ch in 0..c {
            out.data_mut()[(n * c + ch) * hw..(n * c + ch + 1) * hw]
                .copy_from_slice(&data[ch * b * hw + n * hw..ch * b * hw + (n + 1) * hw]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_major_round_trip() {
        let t = Tensor4::from_vec([2, 3, 2, 2], (0..24).map(|v| v as f64).collect()).unwrap();
        let cm = to_channel_major(&t);
        // channel 1 of item 0 starts at row 1, column 0
        assert_eq!(cm[8], t.at(0, 1, 0, 0));
        assert_eq!(from_channel_major(&cm, t.dims()), t);
    }

    #[test]
    fn concat_then_split() {
        let a = Tensor4::from_vec([2, 3, 1, 1], vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor4::from_vec([2, 1, 1, 1], vec![7.0f32, 8.0]).unwrap();
        let ab = Tensor4::concat_features(&a, &b).unwrap();
        assert_eq!(ab.data(), &[1.0, 2.0, 3.0, 7.0, 4.0, 5.0, 6.0, 8.0]);
        let (a2, b2) = ab.split_features(3).unwrap();
        assert_eq!(a2, a);
        assert_eq!(b2, b);
    }

    #[test]
    fn channel_concat_and_tiling() {
        let a = Tensor4::from_vec([1, 1, 2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let e = Tensor4::from_vec([1, 2, 1, 1], vec![5.0, 6.0]).unwrap();
        let t = e.tile_spatial(2, 2).unwrap();
        assert_eq!(t.data(), &[5.0, 5.0, 5.0, 5.0, 6.0, 6.0, 6.0, 6.0]);
        assert_eq!(t.sum_spatial().data(), &[20.0, 24.0]);
        let j = Tensor4::concat_channels(&a, &t).unwrap();
        assert_eq!(j.dims(), [1, 3, 2, 2]);
        assert_eq!(j.at(0, 2, 1, 0), 6.0);
        let (a2, t2) = j.split_channels(1).unwrap();
        assert_eq!((a2, t2), (a, t));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor4::<f32>::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor4::<f32>::from_vec([0, 1, 2, 2], vec![]).is_err());
    }
}
