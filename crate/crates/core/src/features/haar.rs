use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::integral::IntegralImage;
use crate::error::{Error, Result};

/// The five classic rectangle layouts.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HaarKind {
    /// Left half positive, right half negative.
    TwoRectHorizontal,
    /// Top half positive, bottom half negative.
    TwoRectVertical,
    /// Outer thirds positive, middle third negative with weight 2.
    ThreeRectHorizontal,
    /// Same as [`HaarKind::ThreeRectHorizontal`] stacked vertically.
    ThreeRectVertical,
    /// Top-left and bottom-right positive, the other diagonal negative.
    FourRect,
}

impl HaarKind {
    pub const ALL: [HaarKind; 5] = [
        HaarKind::TwoRectHorizontal,
        HaarKind::TwoRectVertical,
        HaarKind::ThreeRectHorizontal,
        HaarKind::ThreeRectVertical,
        HaarKind::FourRect,
    ];

    /// Width and height granularity: feature sizes must be multiples of these.
    pub fn unit(self) -> (usize, usize) {
        match self {
            HaarKind::TwoRectHorizontal => (2, 1),
            HaarKind::TwoRectVertical => (1, 2),
            HaarKind::ThreeRectHorizontal => (3, 1),
            HaarKind::ThreeRectVertical => (1, 3),
            HaarKind::FourRect => (2, 2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HaarKind::TwoRectHorizontal => "two-h",
            HaarKind::TwoRectVertical => "two-v",
            HaarKind::ThreeRectHorizontal => "three-h",
            HaarKind::ThreeRectVertical => "three-v",
            HaarKind::FourRect => "four",
        }
    }
}

impl fmt::Display for HaarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HaarKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HaarKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown Haar kind {s:?}")))
    }
}

/// Haar-like feature in window-relative coordinates.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct HaarFeature {
    pub kind: HaarKind,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl HaarFeature {
    pub fn new(kind: HaarKind, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        let f = HaarFeature { kind, x, y, w, h };
        let (uw, uh) = kind.unit();
        if w == 0 || h == 0 || !w.is_multiple_of(uw) || !h.is_multiple_of(uh) {
            return Err(Error::config(format!(
                "{kind} feature size {w}x{h} is not a positive multiple of {uw}x{uh}"
            )));
        }
        Ok(f)
    }

    pub fn fits(&self, window: (usize, usize)) -> bool {
        let (uw, uh) = self.kind.unit();
        self.w > 0
            && self.h > 0
            && self.w.is_multiple_of(uw)
            && self.h.is_multiple_of(uh)
            && self.x + self.w <= window.0
            && self.y + self.h <= window.1
    }

    /// Response for the window whose top-left corner sits at `(ox, oy)`.
    /// The caller guarantees the window lies inside `ii`.
    #[inline]
    pub(crate) fn evaluate_at(&self, ii: &IntegralImage, ox: usize, oy: usize) -> f64 {
        let x = ox + self.x;
        let y = oy + self.y;
        let (w, h) = (self.w, self.h);
        match self.kind {
            HaarKind::TwoRectHorizontal => {
                let hw = w / 2;
                ii.sum_unchecked(x, y, hw, h) - ii.sum_unchecked(x + hw, y, hw, h)
            }
            HaarKind::TwoRectVertical => {
                let hh = h / 2;
                ii.sum_unchecked(x, y, w, hh) - ii.sum_unchecked(x, y + hh, w, hh)
            }
            HaarKind::ThreeRectHorizontal => {
                let tw = w / 3;
                ii.sum_unchecked(x, y, tw, h) + ii.sum_unchecked(x + 2 * tw, y, tw, h)
                    - 2.0 * ii.sum_unchecked(x + tw, y, tw, h)
            }
            HaarKind::ThreeRectVertical => {
                let th = h / 3;
                ii.sum_unchecked(x, y, w, th) + ii.sum_unchecked(x, y + 2 * th, w, th)
                    - 2.0 * ii.sum_unchecked(x, y + th, w, th)
            }
            HaarKind::FourRect => {
                let hw = w / 2;
                let hh = h / 2;
                ii.sum_unchecked(x, y, hw, hh) + ii.sum_unchecked(x + hw, y + hh, hw, hh)
                    - ii.sum_unchecked(x + hw, y, hw, hh)
                    - ii.sum_unchecked(x, y + hh, hw, hh)
            }
        }
    }
}

/// Response of `f` on a window anchored at the integral image origin.
pub fn haar_response(ii: &IntegralImage, f: &HaarFeature) -> Result<f64> {
    ii.check(f.x, f.y, f.w, f.h)?;
    if !f.fits((ii.width(), ii.height())) {
        return Err(Error::config(format!("malformed feature {f:?}")));
    }
    Ok(f.evaluate_at(ii, 0, 0))
}

/// Number of distinct features of every kind inside `window`.
pub fn haar_feature_count(window: (usize, usize)) -> usize {
    let (ww, wh) = window;
    HaarKind::ALL
        .into_iter()
        .map(|kind| {
            let (uw, uh) = kind.unit();
            let xs: usize = (1..=ww / uw).map(|a| ww - a * uw + 1).sum();
            let ys: usize = (1..=wh / uh).map(|b| wh - b * uh + 1).sum();
            xs * ys
        })
        .sum()
}

/// Every feature inside `window` in canonical `(kind, y, x, h, w)` order.
pub fn enumerate_all_haar(window: (usize, usize)) -> Vec<HaarFeature> {
    let (ww, wh) = window;
    let mut out = Vec::with_capacity(haar_feature_count(window));
    for kind in HaarKind::ALL {
        let (uw, uh) = kind.unit();
        for y in 0..wh {
            for x in 0..ww {
                for h in (uh..=wh - y).step_by(uh) {
                    for w in (uw..=ww - x).step_by(uw) {
                        out.push(HaarFeature { kind, x, y, w, h });
                    }
                }
            }
        }
    }
    out
}

/// Seeded uniform sample of `budget` features without replacement, returned
/// in canonical order. Budgets at or above the total return everything.
pub fn enumerate_haar(window: (usize, usize), budget: usize, seed: u64) -> Result<Vec<HaarFeature>> {
    if budget == 0 {
        return Err(Error::config("feature budget must be positive"));
    }
    let all = enumerate_all_haar(window);
    if all.is_empty() {
        return Err(Error::config(format!("window {window:?} holds no Haar feature")));
    }
    if budget >= all.len() {
        return Ok(all);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, all.len(), budget).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().map(|i| all[i]).collect())
}
