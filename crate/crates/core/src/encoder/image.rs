use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensorfile::Tensor;

/// Stream id for synthetic image noise; weights use stream 0.
pub(crate) const IMAGE_STREAM: u64 = 1;

/// Height × width × channels pixels, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(
                "Image::new",
                format!(
                    "{height}x{width}x{channels} needs {} values, got {}",
                    height * width * channels,
                    data.len()
                ),
            ));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "Image::new",
                index,
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(size: usize, channels: usize, value: f32) -> Self {
        Self {
            height: size,
            width: size,
            channels,
            data: vec![value; size * size * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

impl TryFrom<Tensor> for Image {
    type Error = Error;

    fn try_from(t: Tensor) -> Result<Self> {
        match *t.dims() {
            [h, w, c] => Image::new(h, w, c, t.into_data()),
            [h, w] => Image::new(h, w, 1, t.into_data()),
            _ => Err(Error::shape(
                "Tensor -> Image",
                format!("expected rank 2 or 3, got dims {:?}", t.dims()),
            )),
        }
    }
}

impl From<&Image> for Tensor {
    fn from(img: &Image) -> Self {
        Tensor::new(vec![img.height, img.width, img.channels], img.data.clone())
            .expect("image dims are valid tensor dims")
    }
}

/// Built-in test images, all with pixel values in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticPattern {
    /// Alternating 0/1 squares, eight cells per side.
    Checkerboard,
    /// Horizontal ramp in channel 0, vertical in channel 1, diagonal after.
    Gradient,
    /// Uniform noise from the config seed.
    Noise,
}

impl FromStr for SyntheticPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "checkerboard" => Ok(Self::Checkerboard),
            "gradient" => Ok(Self::Gradient),
            "noise" => Ok(Self::Noise),
            other => Err(Error::config(format!(
                "unknown synthetic pattern '{other}' (expected checkerboard, gradient or noise)"
            ))),
        }
    }
}

impl SyntheticPattern {
    pub fn name(self) -> &'static str {
        match self {
            Self::Checkerboard => "checkerboard",
            Self::Gradient => "gradient",
            Self::Noise => "noise",
        }
    }

    pub fn render(self, size: usize, channels: usize, seed: u64) -> Image {
        let mut data = Vec::with_capacity(size * size * channels);
        match self {
            Self::Checkerboard => {
                let cell = (size / 8).max(1);
                for y in 0..size {
                    for x in 0..size {
                        let v = ((y / cell + x / cell) % 2) as f32;
                        data.extend(std::iter::repeat_n(v, channels));
                    }
                }
            }
            Self::Gradient => {
                let span = (size.max(2) - 1) as f32;
                for y in 0..size {
                    for x in 0..size {
                        for c in 0..channels {
                            let v = match c {
                                0 => x as f32 / span,
                                1 => y as f32 / span,
                                _ => (x + y) as f32 / (2.0 * span),
                            };
                            data.push(v);
                        }
                    }
                }
            }
            Self::Noise => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(IMAGE_STREAM);
                data.extend((0..size * size * channels).map(|_| rng.random::<f32>()));
            }
        }
        Image {
            height: size,
            width: size,
            channels,
            data,
        }
    }
}
