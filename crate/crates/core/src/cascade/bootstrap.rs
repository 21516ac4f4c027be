use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Cascade;
use crate::features::{GrayImage, WindowTables};
use crate::par;

const CHUNK: usize = 1024;

/// Scan position inside a background pool: image, pyramid level, and the
/// top-left corner of the next window to examine at that level.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct PyramidCursor {
    pub image: usize,
    pub level: usize,
    pub y: usize,
    pub x: usize,
}

/// Background images scanned in a fixed raster/pyramid order for hard negatives.
#[derive(Debug)]
pub struct BootstrapPool {
    images: Vec<GrayImage>,
    window: (usize, usize),
    stride: usize,
    scale_factor: f64,
    cursor: PyramidCursor,
    exhausted: bool,
    level_cache: Option<(usize, usize, GrayImage)>,
}

impl BootstrapPool {
    /// Pool scanned with stride 4 and pyramid factor 1.25.
    pub fn new(images: Vec<GrayImage>, window: (usize, usize)) -> Self {
        Self::with_scan(images, window, 4, 1.25)
    }

    pub fn with_scan(images: Vec<GrayImage>, window: (usize, usize), stride: usize, scale_factor: f64) -> Self {
        assert!(stride > 0, "stride must be positive");
        assert!(scale_factor > 1.0, "scale factor must exceed 1");
        let exhausted = images.is_empty();
        BootstrapPool {
            images,
            window,
            stride,
            scale_factor,
            cursor: PyramidCursor::default(),
            exhausted,
            level_cache: None,
        }
    }

    pub fn cursor(&self) -> PyramidCursor {
        self.cursor
    }

    pub fn is_exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn images(&self) -> &[GrayImage] {
        &self.images
    }

    /// Moves the cursor to the next pyramid level.
    fn next_level(&mut self) {
        self.cursor = PyramidCursor {
            image: self.cursor.image,
            level: self.cursor.level + 1,
            y: 0,
            x: 0,
        };
    }

    fn next_image(&mut self) {
        self.cursor = PyramidCursor {
            image: self.cursor.image + 1,
            ..Default::default()
        };
        self.level_cache = None;
        if self.cursor.image >= self.images.len() {
            self.exhausted = true;
        }
    }

    fn level_image(&mut self) -> Option<GrayImage> {
        let PyramidCursor { image, level, .. } = self.cursor;
        if let Some((i, l, img)) = &self.level_cache {
            if *i == image && *l == level {
                return Some(img.clone());
            }
        }
        let img = pyramid_level(&self.images[image], level, self.scale_factor, self.window)?;
        self.level_cache = Some((image, level, img.clone()));
        Some(img)
    }
}

impl BootstrapPool {
    /// Seeded uniform sample of `count` windows over every image, level and
    /// grid position, without replacement. Does not move the cursor.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<GrayImage> {
        // (image, level, positions at that level)
        let mut slots: Vec<(usize, usize, usize)> = Vec::new();
        for (i, img) in self.images.iter().enumerate() {
            for level in 0.. {
                let scale = self.scale_factor.powi(level as i32);
                let w = (img.width() as f64 / scale).floor() as usize;
                let h = (img.height() as f64 / scale).floor() as usize;
                let n = grid_count(w, h, self.window, self.stride);
                if n == 0 {
                    break;
                }
                slots.push((i, level, n));
            }
        }
        let total: usize = slots.iter().map(|s| s.2).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks = rand::seq::index::sample(&mut rng, total, count.min(total)).into_vec();
        picks.sort_unstable();
        // Group the sorted picks by slot.
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let (mut slot, mut start) = (0, 0);
        for p in picks {
            while p >= start + slots[slot].2 {
                start += slots[slot].2;
                slot += 1;
            }
            match groups.last_mut() {
                Some((s, v)) if *s == slot => v.push(p - start),
                _ => groups.push((slot, vec![p - start])),
            }
        }
        par::map_slice(&groups, |(slot, offsets)| {
            let (i, level, _) = slots[*slot];
            let img = pyramid_level(&self.images[i], level, self.scale_factor, self.window)
                .expect("slot levels fit the window");
            let positions = grid_positions(img.width(), img.height(), self.window, self.stride);
            offsets
                .iter()
                .map(|&k| {
                    let (x, y) = positions[k];
                    img.crop(x, y, self.window.0, self.window.1).expect("grid positions lie inside the level")
                })
                .collect::<Vec<_>>()
        })
        .into_iter()
        .flatten()
        .collect()
    }
}

fn grid_count(width: usize, height: usize, window: (usize, usize), stride: usize) -> usize {
    if width < window.0 || height < window.1 {
        return 0;
    }
    ((width - window.0) / stride + 1) * ((height - window.1) / stride + 1)
}

/// `level`-th pyramid image, or `None` once it would be smaller than `window`.
pub(crate) fn pyramid_level(
    img: &GrayImage,
    level: usize,
    scale_factor: f64,
    window: (usize, usize),
) -> Option<GrayImage> {
    let scale = scale_factor.powi(level as i32);
    let w = (img.width() as f64 / scale).floor() as usize;
    let h = (img.height() as f64 / scale).floor() as usize;
    if w < window.0 || h < window.1 {
        return None;
    }
    if level == 0 {
        Some(img.clone())
    } else {
        Some(img.resize_bilinear(w, h))
    }
}

/// Window corners of a `width x height` image in raster order.
pub(crate) fn grid_positions(width: usize, height: usize, window: (usize, usize), stride: usize) -> Vec<(usize, usize)> {
    if width < window.0 || height < window.1 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for y in (0..=height - window.1).step_by(stride) {
        for x in (0..=width - window.0).step_by(stride) {
            out.push((x, y));
        }
    }
    out
}

/// Returns up to `count` background windows that pass every node of
/// `cascade`, resuming from the pool's cursor. A short return means the pool
/// ran dry.
pub fn bootstrap(pool: &mut BootstrapPool, cascade: &Cascade, count: usize) -> Vec<GrayImage> {
    let mut out = Vec::with_capacity(count);
    let family = cascade.family();
    while out.len() < count && !pool.exhausted {
        let Some(level) = pool.level_image() else {
            pool.next_image();
            continue;
        };
        let tables = WindowTables::new(&level, family);
        let positions: Vec<(usize, usize)> = grid_positions(level.width(), level.height(), pool.window, pool.stride)
            .into_iter()
            .filter(|&(x, y)| (y, x) >= (pool.cursor.y, pool.cursor.x))
            .collect();
        for (c, chunk) in positions.chunks(CHUNK).enumerate() {
            let accepted = par::map_slice(chunk, |&(x, y)| cascade.evaluate(&tables, x, y).accepted);
            for (k, (&(x, y), ok)) in chunk.iter().zip(accepted).enumerate() {
                if !ok {
                    continue;
                }
                out.push(
                    level
                        .crop(x, y, pool.window.0, pool.window.1)
                        .expect("grid positions lie inside the level"),
                );
                if out.len() == count {
                    match positions.get(c * CHUNK + k + 1) {
                        Some(&(nx, ny)) => {
                            pool.cursor.x = nx;
                            pool.cursor.y = ny;
                        }
                        None => pool.next_level(),
                    }
                    return out;
                }
            }
        }
        pool.next_level();
    }
    out
}
