use super::image::GrayImage;
use crate::error::{Error, Result};

/// Summed-area table with a zero top row and left column, so entry `(x, y)`
/// is the sum of pixels in `[0, x) x [0, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    table: Vec<f64>,
}

impl IntegralImage {
    pub fn new(img: &GrayImage) -> Self {
        Self::from_values(img.width(), img.height(), img.pixels())
    }

    /// Builds the table for an arbitrary row-major value plane.
    pub(crate) fn from_values(width: usize, height: usize, values: &[f64]) -> Self {
        debug_assert_eq!(values.len(), width * height);
        let stride = width + 1;
        let mut table = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row_sum = 0.0;
            for x in 0..width {
                row_sum += values[y * width + x];
                table[(y + 1) * stride + x + 1] = table[y * stride + x + 1] + row_sum;
            }
        }
        IntegralImage {
            width,
            height,
            table,
        }
    }

    /// Width of the source image (the table is one wider).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Cumulative entry at table coordinates `(x, y)`, `x <= width`, `y <= height`.
    #[inline]
    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.table[y * (self.width + 1) + x]
    }

    /// Four-corner rectangle sum without bounds checking beyond debug asserts.
    #[inline]
    pub(crate) fn sum_unchecked(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        debug_assert!(x + w <= self.width && y + h <= self.height);
        let stride = self.width + 1;
        let top = y * stride;
        let bottom = (y + h) * stride;
        self.table[bottom + x + w] - self.table[bottom + x] - self.table[top + x + w]
            + self.table[top + x]
    }

    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> Result<f64> {
        self.check(x, y, w, h)?;
        Ok(self.sum_unchecked(x, y, w, h))
    }

    pub(crate) fn check(&self, x: usize, y: usize, w: usize, h: usize) -> Result<()> {
        if x + w > self.width || y + h > self.height {
            return Err(Error::BoundsError {
                x,
                y,
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

pub fn build_integral(img: &GrayImage) -> IntegralImage {
    IntegralImage::new(img)
}

pub fn rect_sum(ii: &IntegralImage, x: usize, y: usize, w: usize, h: usize) -> Result<f64> {
    ii.rect_sum(x, y, w, h)
}
