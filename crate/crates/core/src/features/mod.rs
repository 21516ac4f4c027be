//! Image features: integral images, Haar-like rectangles and projected HOG blocks.

mod haar;
mod hog;
mod image;
mod integral;

pub use self::haar::{
    enumerate_all_haar, enumerate_haar, haar_feature_count, haar_response, HaarFeature, HaarKind,
};
pub use self::hog::{
    build_integral_histogram, enumerate_hog_blocks, fit_projection, hog_descriptor,
    l1_sqrt_normalize, HogBlock, HogFeature, IntegralHistogram, Projection, HOG_BINS, HOG_DIM,
};
pub use self::image::GrayImage;
pub use self::integral::{build_integral, rect_sum, IntegralImage};

/// Which low-level feature family a detector draws its weak learners from.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FeatureFamily {
    Haar,
    Hog,
}

impl std::str::FromStr for FeatureFamily {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "haar" => Ok(FeatureFamily::Haar),
            "hog" => Ok(FeatureFamily::Hog),
            other => Err(crate::Error::ConfigError(format!(
                "unknown feature family {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FeatureFamily::Haar => "haar",
            FeatureFamily::Hog => "hog",
        })
    }
}

/// Scalar-valued feature evaluated on a detection window.
#[derive(Clone, Debug, PartialEq)]
pub enum Feature {
    Haar(HaarFeature),
    Hog(HogFeature),
}

impl Feature {
    pub fn fits(&self, window: (usize, usize)) -> bool {
        match self {
            Feature::Haar(f) => f.fits(window),
            Feature::Hog(f) => f.block.fits(window),
        }
    }

    /// Evaluates the feature on the window anchored at `(ox, oy)` of `tables`.
    #[inline]
    pub fn evaluate(&self, tables: &WindowTables, ox: usize, oy: usize) -> f64 {
        match self {
            Feature::Haar(f) => f.evaluate_at(&tables.integral, ox, oy),
            Feature::Hog(f) => f.evaluate_at(
                tables
                    .histogram
                    .as_ref()
                    .expect("HOG feature evaluated without an integral histogram"),
                ox,
                oy,
            ),
        }
    }
}

/// Precomputed lookup tables for an image (a training patch or a pyramid level).
#[derive(Clone, Debug)]
pub struct WindowTables {
    pub integral: IntegralImage,
    pub histogram: Option<IntegralHistogram>,
}

impl WindowTables {
    pub fn new(img: &GrayImage, family: FeatureFamily) -> Self {
        WindowTables {
            integral: IntegralImage::new(img),
            histogram: (family == FeatureFamily::Hog).then(|| IntegralHistogram::new(img)),
        }
    }

    pub fn width(&self) -> usize {
        self.integral.width()
    }

    pub fn height(&self) -> usize {
        self.integral.height()
    }
}
