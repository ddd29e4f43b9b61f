use crate::error::{invalid, Result};
use crate::grid::ScalarField;

/// Interleaved intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid("image has a zero dimension"));
        }
        if channels == 0 {
            return Err(invalid("image needs at least one channel"));
        }
        if data.len() != width * height * channels {
            return Err(invalid(format!(
                "image data has {} samples, expected {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_gray(field: &ScalarField) -> Self {
        Self {
            width: field.width(),
            height: field.height(),
            channels: 1,
            data: field.as_slice().to_vec(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Pixel lookup with replicate padding along x.
    #[inline]
    pub fn at_clamped_x(&self, x: isize, y: usize, c: usize) -> f64 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        self.at(xc, y, c)
    }

    /// Mean over channels.
    pub fn luminance(&self) -> ScalarField {
        let n = self.channels as f64;
        ScalarField::from_fn(self.width, self.height, |x, y| {
            (0..self.channels).map(|c| self.at(x, y, c)).sum::<f64>() / n
        })
    }
}

/// Rectified stereo pair sharing horizontal epipolar scanlines.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub left: Image,
    pub right: Image,
    pub d_max: usize,
}

impl ImagePair {
    pub fn new(left: Image, right: Image, d_max: usize) -> Result<Self> {
        if left.width != right.width || left.height != right.height || left.channels != right.channels {
            return Err(invalid(format!(
                "left {}x{}x{} and right {}x{}x{} differ in shape",
                left.width, left.height, left.channels, right.width, right.height, right.channels
            )));
        }
        if d_max < 1 {
            return Err(invalid("d_max must be at least 1"));
        }
        if 2 * d_max >= left.width {
            return Err(invalid(format!(
                "d_max {} must be below half the image width {}",
                d_max, left.width
            )));
        }
        Ok(Self { left, right, d_max })
    }

    pub fn width(&self) -> usize {
        self.left.width
    }

    pub fn height(&self) -> usize {
        self.left.height
    }

    pub fn num_disparities(&self) -> usize {
        self.d_max + 1
    }
}
