use std::f64::consts::PI;

use super::image::GrayImage;
use super::integral::IntegralImage;
use crate::error::{Error, Result};
use crate::linalg::{dot, invert_spd, SymMatrix, DEFAULT_TIKHONOV};

pub const HOG_BINS: usize = 9;
pub const HOG_CELLS: usize = 4;
pub const HOG_DIM: usize = HOG_BINS * HOG_CELLS;
const L1_SQRT_EPS: f64 = 1e-7;

/// One summed-area table of gradient magnitude per unsigned orientation bin.
#[derive(Clone, Debug)]
pub struct IntegralHistogram {
    bins: Vec<IntegralImage>,
}

impl IntegralHistogram {
    pub fn new(img: &GrayImage) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut planes = vec![vec![0.0; w * h]; HOG_BINS];
        for y in 0..h {
            for x in 0..w {
                let gx = img.get((x + 1).min(w - 1), y) - img.get(x.saturating_sub(1), y);
                let gy = img.get(x, (y + 1).min(h - 1)) - img.get(x, y.saturating_sub(1));
                let mag = (gx * gx + gy * gy).sqrt();
                if mag == 0.0 {
                    continue;
                }
                planes[orientation_bin(gx, gy)][y * w + x] = mag;
            }
        }
        IntegralHistogram {
            bins: planes
                .iter()
                .map(|p| IntegralImage::from_values(w, h, p))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.bins[0].width()
    }

    pub fn height(&self) -> usize {
        self.bins[0].height()
    }

    pub fn bin(&self, b: usize) -> &IntegralImage {
        &self.bins[b]
    }
}

/// Unsigned orientation in `[0, pi)` split into nine equal bins; hard
/// assignment to the nearest bin center is the same as flooring.
fn orientation_bin(gx: f64, gy: f64) -> usize {
    let mut theta = gy.atan2(gx);
    if theta < 0.0 {
        theta += PI;
    }
    if theta >= PI {
        theta -= PI;
    }
    ((theta / (PI / HOG_BINS as f64)) as usize).min(HOG_BINS - 1)
}

pub fn build_integral_histogram(img: &GrayImage) -> IntegralHistogram {
    IntegralHistogram::new(img)
}

/// Rectangular block split into a 2x2 cell grid.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct HogBlock {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl HogBlock {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        let b = HogBlock { x, y, w, h };
        if !b.is_well_formed() {
            return Err(Error::config(format!(
                "HOG block {w}x{h} needs even sides and a 1:1, 1:2, 2:1, 1:3 or 3:1 aspect"
            )));
        }
        Ok(b)
    }

    fn is_well_formed(&self) -> bool {
        let (w, h) = (self.w, self.h);
        w >= 2
            && h >= 2
            && w % 2 == 0
            && h % 2 == 0
            && (w == h || w == 2 * h || h == 2 * w || w == 3 * h || h == 3 * w)
    }

    pub fn fits(&self, window: (usize, usize)) -> bool {
        self.is_well_formed() && self.x + self.w <= window.0 && self.y + self.h <= window.1
    }

    /// Raw (unnormalized) cell histograms, cells in row-major order.
    fn raw_at(&self, ih: &IntegralHistogram, ox: usize, oy: usize) -> [f64; HOG_DIM] {
        let cw = self.w / 2;
        let ch = self.h / 2;
        let mut v = [0.0; HOG_DIM];
        for (cell, (dx, dy)) in [(0, 0), (cw, 0), (0, ch), (cw, ch)].into_iter().enumerate() {
            for b in 0..HOG_BINS {
                v[cell * HOG_BINS + b] =
                    ih.bin(b)
                        .sum_unchecked(ox + self.x + dx, oy + self.y + dy, cw, ch);
            }
        }
        v
    }

    pub(crate) fn descriptor_at(&self, ih: &IntegralHistogram, ox: usize, oy: usize) -> [f64; HOG_DIM] {
        let mut v = self.raw_at(ih, ox, oy);
        l1_sqrt_normalize(&mut v);
        v
    }
}

/// `v <- sqrt(v / (|v|_1 + eps))`; a zero vector stays zero.
pub fn l1_sqrt_normalize(v: &mut [f64]) {
    let norm: f64 = v.iter().map(|x| x.abs()).sum();
    let denom = norm + L1_SQRT_EPS;
    for x in v.iter_mut() {
        // Rounding can leave tiny negative sums; those carry no mass.
        *x = (x.max(0.0) / denom).sqrt();
    }
}

pub fn hog_descriptor(ih: &IntegralHistogram, block: &HogBlock) -> Result<[f64; HOG_DIM]> {
    if !block.is_well_formed() {
        return Err(Error::config(format!("malformed HOG block {block:?}")));
    }
    ih.bin(0).check(block.x, block.y, block.w, block.h)?;
    Ok(block.descriptor_at(ih, 0, 0))
}

/// All blocks inside `window` with sides starting at `min_side`, growing by
/// `step`, and anchored on a `step`-pixel grid.
pub fn enumerate_hog_blocks(window: (usize, usize), min_side: usize, step: usize) -> Vec<HogBlock> {
    let step = step.max(1);
    let mut sizes = Vec::new();
    let mut side = min_side.max(2);
    while side <= window.0.max(window.1) {
        for (w, h) in [
            (side, side),
            (side, 2 * side),
            (2 * side, side),
            (side, 3 * side),
            (3 * side, side),
        ] {
            if w <= window.0 && h <= window.1 && w % 2 == 0 && h % 2 == 0 && !sizes.contains(&(w, h)) {
                sizes.push((w, h));
            }
        }
        side += step;
    }
    let mut out = Vec::new();
    for (w, h) in sizes {
        for y in (0..=window.1 - h).step_by(step) {
            for x in (0..=window.0 - w).step_by(step) {
                out.push(HogBlock { x, y, w, h });
            }
        }
    }
    out
}

/// Fisher direction mapping descriptors onto a line.
#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// Unit-length direction with non-negative projected class gap.
    pub direction: Vec<f64>,
    /// Set when the class means coincide and any direction is as good as another.
    pub degenerate: bool,
}

/// Regularized two-class Fisher direction `(S1 + S2 + lambda I)^-1 (m1 - m2)`
/// with `lambda = 1e-6 * trace / dim`.
pub fn fit_projection(positives: &[Vec<f64>], negatives: &[Vec<f64>]) -> Result<Projection> {
    if positives.len() < 2 || negatives.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "projection needs two samples per class, got {} and {}",
            positives.len(),
            negatives.len()
        )));
    }
    let dim = positives[0].len();
    if dim == 0 {
        return Err(Error::DimensionError {
            expected: 1,
            got: 0,
        });
    }
    for s in positives.iter().chain(negatives) {
        if s.len() != dim {
            return Err(Error::DimensionError {
                expected: dim,
                got: s.len(),
            });
        }
    }
    let (m1, c1) = mean_and_cov(positives, dim);
    let (m2, c2) = mean_and_cov(negatives, dim);
    let gap: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| a - b).collect();
    let pooled = c1.combine(1.0, &c2, 1.0)?;
    let trace = pooled.trace();
    let lambda = if trace > 0.0 {
        DEFAULT_TIKHONOV * trace / dim as f64
    } else {
        DEFAULT_TIKHONOV
    };
    let inv = invert_spd(&pooled, lambda)?.inverse;
    let mut w = inv.mul_vec(&gap)?;
    let norm = dot(&w, &w).sqrt();
    if !(norm > 0.0) || gap.iter().all(|&g| g == 0.0) {
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        return Ok(Projection {
            direction,
            degenerate: true,
        });
    }
    for x in w.iter_mut() {
        *x /= norm;
    }
    if dot(&w, &gap) < 0.0 {
        for x in w.iter_mut() {
            *x = -*x;
        }
    }
    Ok(Projection {
        direction: w,
        degenerate: false,
    })
}

fn mean_and_cov(samples: &[Vec<f64>], dim: usize) -> (Vec<f64>, SymMatrix) {
    let n = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = SymMatrix::zeros(dim);
    for i in 0..dim {
        for j in 0..=i {
            let c: f64 = samples
                .iter()
                .map(|s| (s[i] - mean[i]) * (s[j] - mean[j]))
                .sum();
            cov.set(i, j, c / n);
        }
    }
    (mean, cov)
}

/// HOG block paired with its fitted projection; evaluates to a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct HogFeature {
    pub block: HogBlock,
    pub projection: Vec<f64>,
}

impl HogFeature {
    #[inline]
    pub(crate) fn evaluate_at(&self, ih: &IntegralHistogram, ox: usize, oy: usize) -> f64 {
        dot(&self.block.descriptor_at(ih, ox, oy), &self.projection)
    }
}
