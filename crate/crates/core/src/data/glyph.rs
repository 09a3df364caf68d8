use super::DataError;

/// Single-channel image, row-major, values in `[0, 1]` (0 = paper, 1 = full ink).
#[derive(Clone, Debug, PartialEq)]
pub struct GlyphImage {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl GlyphImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self, DataError> {
        if height == 0 || width == 0 {
            return Err(DataError::ZeroDimension);
        }
        if pixels.len() != height * width {
            return Err(DataError::PixelCount {
                expected: height * width,
                got: pixels.len(),
            });
        }
        if let Some(bad) = pixels.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(DataError::PixelRange(*bad));
        }
        Ok(Self { height, width, pixels })
    }

    pub fn blank(height: usize, width: usize) -> Self {
        assert!(height >= 1 && width >= 1);
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    /// Raw 8-bit grayscale scaled by 1/255.
    pub fn from_bytes(height: usize, width: usize, bytes: &[u8]) -> Result<Self, DataError> {
        Self::new(height, width, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.pixels[y * self.width + x]
    }

    /// Writes a pixel, clamping into `[0, 1]`.
    pub fn set(&mut self, y: usize, x: usize, value: f32) {
        self.pixels[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Pixels rounded to 8-bit grayscale.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn ink_sum(&self) -> f64 {
        self.pixels.iter().map(|&v| v as f64).sum()
    }

    /// Centers the image on a `size x size` zero background.
    pub fn pad_to(&self, size: usize) -> Result<Self, DataError> {
        if size < self.height.max(self.width) {
            return Err(DataError::TargetTooSmall {
                size,
                height: self.height,
                width: self.width,
            });
        }
        let top = (size - self.height) / 2;
        let left = (size - self.width) / 2;
        let mut out = Self::blank(size, size);
        for y in 0..self.height {
            let src = &self.pixels[y * self.width..(y + 1) * self.width];
            out.pixels[(top + y) * size + left..(top + y) * size + left + self.width].copy_from_slice(src);
        }
        Ok(out)
    }

    /// Mirror top-to-bottom.
    pub fn flip_vertical(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.height {
            let src = &self.pixels[(self.height - 1 - y) * self.width..(self.height - y) * self.width];
            out.pixels[y * self.width..(y + 1) * self.width].copy_from_slice(src);
        }
        out
    }

    /// Columns `[x0, x1)` over the full height.
    pub fn crop_columns(&self, x0: usize, x1: usize) -> Result<Self, DataError> {
        if x0 >= x1 || x1 > self.width {
            return Err(DataError::ZeroDimension);
        }
        let w = x1 - x0;
        let mut px = Vec::with_capacity(self.height * w);
        for y in 0..self.height {
            px.extend_from_slice(&self.pixels[y * self.width + x0..y * self.width + x1]);
        }
        Ok(Self {
            height: self.height,
            width: w,
            pixels: px,
        })
    }
}

pub fn pad_to(image: &GlyphImage, size: usize) -> Result<GlyphImage, DataError> {
    image.pad_to(size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pad_28_to_32_has_two_pixel_border() {
        let img = GlyphImage::new(28, 28, vec![1.0; 784]).unwrap();
        let p = img.pad_to(32).unwrap();
        assert_eq!((p.height(), p.width()), (32, 32));
        assert_eq!(p.get(1, 1), 0.0);
        assert_eq!(p.get(2, 2), 1.0);
        assert_eq!(p.get(29, 29), 1.0);
        assert_eq!(p.get(30, 30), 0.0);
        assert_eq!(p.ink_sum(), 784.0);
    }

    #[test]
    fn pad_same_size_is_identity() {
        let img = GlyphImage::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(img.pad_to(2).unwrap(), img);
    }

    #[test]
    fn pad_too_small() {
        let img = GlyphImage::blank(28, 28);
        assert!(matches!(img.pad_to(16), Err(DataError::TargetTooSmall { .. })));
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(matches!(
            GlyphImage::new(1, 1, vec![1.5]),
            Err(DataError::PixelRange(_))
        ));
        assert!(matches!(
            GlyphImage::new(1, 1, vec![f32::NAN]),
            Err(DataError::PixelRange(_))
        ));
        assert!(matches!(GlyphImage::new(0, 1, vec![]), Err(DataError::ZeroDimension)));
    }
}
