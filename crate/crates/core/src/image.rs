use serde::{Deserialize, Serialize};

use crate::error::{HenError, Result};

/// Height × width × channels, flattened row-major with channels last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

impl From<ImageShape> for String {
    fn from(shape: ImageShape) -> String {
        shape.to_string()
    }
}

impl TryFrom<String> for ImageShape {
    type Error = HenError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl std::str::FromStr for ImageShape {
    type Err = HenError;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(['x', 'X', ','])
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| HenError::InvalidParameter(format!("bad image shape `{s}`")))?;
        match parts.as_slice() {
            [h, w, c] if *h > 0 && *w > 0 && *c > 0 => Ok(Self::new(*h, *w, *c)),
            [h, w] if *h > 0 && *w > 0 => Ok(Self::new(*h, *w, 1)),
            _ => Err(HenError::InvalidParameter(format!("bad image shape `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: ImageShape,
    data: Vec<f64>,
}

impl Image {
    pub fn new(shape: ImageShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(HenError::DimensionMismatch {
                expected: shape.len(),
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: ImageShape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.shape.index(y, x, c)]
    }

    pub fn set(&mut self, y: usize, x: usize, c: usize, value: f64) {
        let i = self.shape.index(y, x, c);
        self.data[i] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Bilinear resampling with pixel-centre alignment and edge clamping.
    pub fn resample_bilinear(&self, height: usize, width: usize) -> Image {
        let src = self.shape;
        let shape = ImageShape::new(height, width, src.channels);
        if src.height == height && src.width == width {
            return self.clone();
        }
        let sy = src.height as f64 / height as f64;
        let sx = src.width as f64 / width as f64;
        let mut data = vec![0.0; shape.len()];
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (src.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(src.height - 1);
            let wy = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (src.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(src.width - 1);
                let wx = fx - x0 as f64;
                for c in 0..src.channels {
                    let top = self.get(y0, x0, c) * (1.0 - wx) + self.get(y0, x1, c) * wx;
                    let bottom = self.get(y1, x0, c) * (1.0 - wx) + self.get(y1, x1, c) * wx;
                    data[shape.index(y, x, c)] = top * (1.0 - wy) + bottom * wy;
                }
            }
        }
        Image { shape, data }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shapes() {
        assert_eq!("28x28x3".parse::<ImageShape>().unwrap(), ImageShape::new(28, 28, 3));
        assert_eq!("16,16".parse::<ImageShape>().unwrap(), ImageShape::new(16, 16, 1));
        assert!("0x4x1".parse::<ImageShape>().is_err());
        assert!("abc".parse::<ImageShape>().is_err());
    }

    #[test]
    fn downsampling_by_two_averages_blocks() {
        let shape = ImageShape::new(4, 4, 1);
        let data: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let img = Image::new(shape, data).unwrap();
        let small = img.resample_bilinear(2, 2);
        assert_eq!(small.shape(), ImageShape::new(2, 2, 1));
        // centre of the top-left 2x2 block {0, 1, 4, 5}
        assert!((small.get(0, 0, 0) - 2.5).abs() < 1e-12);
        assert!((small.get(1, 1, 0) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn constant_image_survives_resampling() {
        let img = Image::filled(ImageShape::new(7, 5, 3), 0.25);
        let out = img.resample_bilinear(28, 28);
        assert!(out.as_slice().iter().all(|v| (v - 0.25).abs() < 1e-15));
    }
}
