//! Seeded synthetic data: asymmetric Gaussian vectors, planted-motif patches,
//! background pools and test scenes.
//!
//! Every sample draws from its own ChaCha stream keyed by (kind, index), so
//! generation order and thread count never change the output.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::detect::{read_detections, write_detections, Detection};
use crate::error::{Error, Result};
use crate::features::GrayImage;
use crate::par;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SynthMode {
    Vectors,
    Patches,
}

impl fmt::Display for SynthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthMode::Vectors => "vectors",
            SynthMode::Patches => "patches",
        })
    }
}

impl FromStr for SynthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vectors" => Ok(SynthMode::Vectors),
            "patches" => Ok(SynthMode::Patches),
            _ => Err(Error::config(format!("unknown synth mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub mode: SynthMode,
    /// Vector dimension.
    pub dims: usize,
    /// Patch size.
    pub window: (usize, usize),
    pub background_size: (usize, usize),
    pub scene_size: (usize, usize),
    pub separation: f64,
    pub noise: f64,
    /// Loose motif parts, and separately border-clipped motifs, per window
    /// area of background.
    pub clutter: f64,
    pub positives: usize,
    /// Negative vectors, or background images in patch mode.
    pub negatives: usize,
    /// Test scenes with one planted motif each (patch mode).
    pub scenes: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn vectors(dims: usize, positives: usize, negatives: usize, separation: f64, noise: f64, seed: u64) -> Self {
        SynthSpec {
            mode: SynthMode::Vectors,
            dims,
            window: (24, 24),
            background_size: (256, 256),
            scene_size: (96, 96),
            separation,
            noise,
            clutter: 0.0,
            positives,
            negatives,
            scenes: 0,
            seed,
        }
    }

    pub fn patches(positives: usize, backgrounds: usize, noise: f64, seed: u64) -> Self {
        SynthSpec {
            mode: SynthMode::Patches,
            dims: 0,
            window: (24, 24),
            background_size: (96, 96),
            scene_size: (96, 96),
            separation: 1.0,
            noise,
            clutter: 0.2,
            positives,
            negatives: backgrounds,
            scenes: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positives < 2 || self.negatives < 2 {
            return Err(Error::config("need at least two samples per class"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::config("separation must be finite and non-negative"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("noise must be finite and non-negative"));
        }
        if !(self.clutter >= 0.0 && self.clutter.is_finite()) {
            return Err(Error::config("clutter must be finite and non-negative"));
        }
        match self.mode {
            SynthMode::Vectors if self.dims == 0 => Err(Error::config("vector dimension must be positive")),
            SynthMode::Patches if self.window.0 < 12 || self.window.1 < 12 => {
                Err(Error::config("patch window must be at least 12x12"))
            }
            SynthMode::Patches
                if [self.background_size, self.scene_size]
                    .iter()
                    .any(|s| s.0 < self.window.0 * 5 / 4 || s.1 < self.window.1 * 5 / 4) =>
            {
                Err(Error::config("backgrounds must be at least 1.25 windows on each side"))
            }
            _ => Ok(()),
        }
    }

    fn require(&self, mode: SynthMode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::config(format!("spec is in {} mode, expected {mode}", self.mode)));
        }
        self.validate()
    }
}

const POSITIVE: u64 = 1;
const NEGATIVE: u64 = 2;
const BACKGROUND: u64 = 3;
const SCENE: u64 = 4;

fn sample_rng(seed: u64, kind: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 48) | index as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Positives come first with label +1, then negatives with label -1.
///
/// Positives are `N(s/sqrt(d) * 1, noise^2 I)`; negatives are zero-mean with
/// the wider deviation `noise * (1 + s)`, so at zero separation the classes
/// coincide.
pub fn synth_vectors(spec: &SynthSpec) -> Result<(Vec<Vec<f64>>, Vec<i8>)> {
    spec.require(SynthMode::Vectors)?;
    let d = spec.dims;
    let mean = spec.separation / (d as f64).sqrt();
    let neg_sd = spec.noise * (1.0 + spec.separation);
    let mut samples = par::map_range(spec.positives, |i| {
        let mut rng = sample_rng(spec.seed, POSITIVE, i);
        (0..d).map(|_| mean + spec.noise * normal(&mut rng)).collect::<Vec<f64>>()
    });
    samples.extend(par::map_range(spec.negatives, |i| {
        let mut rng = sample_rng(spec.seed, NEGATIVE, i);
        (0..d).map(|_| neg_sd * normal(&mut rng)).collect::<Vec<f64>>()
    }));
    let labels = std::iter::repeat_n(1, spec.positives)
        .chain(std::iter::repeat_n(-1, spec.negatives))
        .collect();
    Ok((samples, labels))
}

/// Noise-free motif: a bright top bar over two bright legs with a dark gap
/// between them, on a mid-dark ground.
pub fn motif(window: (usize, usize)) -> GrayImage {
    let (w, h) = window;
    let inside = |v: usize, lo: usize, hi: usize| v >= lo && v < hi;
    GrayImage::from_fn(w, h, |x, y| {
        let bar = inside(y, h / 6, h / 3) && inside(x, w / 6, w - w / 6);
        let leg = inside(y, h / 2, h - h / 6) && (inside(x, w / 6, w / 3) || inside(x, w - w / 3, w - w / 6));
        let gap = inside(y, h / 2, 2 * h / 3) && inside(x, 5 * w / 12, w - 5 * w / 12);
        if bar || leg {
            0.85
        } else if gap {
            0.05
        } else {
            0.3
        }
    })
}

fn positive_patch(spec: &SynthSpec, kind: u64, index: usize) -> GrayImage {
    motif_instance(spec, &mut sample_rng(spec.seed, kind, index))
}

/// Motif with noise, contrast loss and a small shift; the last two vanish at
/// zero noise.
fn motif_instance(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> GrayImage {
    let base = motif(spec.window);
    let (w, h) = spec.window;
    let contrast = 1.0 - spec.noise * rng.random_range(0.0..1.5);
    let reach = (spec.noise * 10.0).round() as i64;
    let dx = rng.random_range(-reach..=reach);
    let dy = rng.random_range(-reach..=reach);
    let offset = 0.5 * spec.noise * normal(rng);
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let sx = (x - dx).clamp(0, w as i64 - 1) as usize;
            let sy = (y - dy).clamp(0, h as i64 - 1) as usize;
            let p = 0.3 + contrast * (base.get(sx, sy) - 0.3);
            pixels.push((p + offset + spec.noise * normal(rng)).clamp(0.0, 1.0));
        }
    }
    GrayImage::new(w, h, pixels).expect("finite pixels")
}

fn paint(pixels: &mut [f64], width: usize, (x0, y0, w, h): (usize, usize, usize, usize), v: f64) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            pixels[y * width + x] = 0.5 * (pixels[y * width + x] + v);
        }
    }
}

fn stochastic_round(v: f64, rng: &mut ChaCha8Rng) -> usize {
    let whole = v.floor();
    whole as usize + usize::from(rng.random_bool(v - whole))
}

fn lift(pixels: &mut [f64], width: usize, (x0, y0, w, h): (usize, usize, usize, usize), shift: f64) {
    for y in y0..y0 + h {
        for x in x0..x0 + w {
            pixels[y * width + x] += shift;
        }
    }
}

/// Textured background with flat rectangles, loose motif parts (bars, leg
/// pairs, dark blocks) and motifs cut off by the border. Each background
/// leaves out one loose part kind and every border motif loses at least a
/// third of its width or height, so no background holds the complete motif.
fn background(spec: &SynthSpec, size: (usize, usize), kind: u64, index: usize) -> GrayImage {
    let (bw, bh) = size;
    let (w, h) = spec.window;
    let mut rng = sample_rng(spec.seed, kind, index);
    let base: f64 = rng.random_range(0.2..0.7);
    let gx: f64 = rng.random_range(-0.2..0.2) / bw as f64;
    let gy: f64 = rng.random_range(-0.2..0.2) / bh as f64;
    let mut pixels: Vec<f64> = (0..bw * bh)
        .map(|i| base + gx * (i % bw) as f64 + gy * (i / bw) as f64 + spec.noise.max(0.05) * normal(&mut rng))
        .collect();
    for _ in 0..rng.random_range(0..=4) {
        let rw = rng.random_range(3..=w / 2);
        let rh = rng.random_range(3..=h / 2);
        let rect = (rng.random_range(0..=bw - rw), rng.random_range(0..=bh - rh), rw, rh);
        let v = rng.random_range(0.0..1.0);
        paint(&mut pixels, bw, rect, v);
    }
    let missing = rng.random_range(0..3);
    let windows = (bw * bh) as f64 / (w * h) as f64;
    for _ in 0..stochastic_round(spec.clutter * windows, &mut rng) {
        let part = rng.random_range(0..3);
        if part == missing {
            continue;
        }
        let v = if part == 2 { rng.random_range(0.0..0.15) } else { rng.random_range(0.7..1.0) };
        let (pw, ph) = match part {
            0 => (w - w / 3, h / 6),
            1 => (w - w / 3, h / 3),
            _ => (w / 6, h / 6),
        };
        let x0 = rng.random_range(0..=bw - pw);
        let y0 = rng.random_range(0..=bh - ph);
        // Parts replace the local level but keep the texture.
        let shift = v - base;
        if part == 1 {
            lift(&mut pixels, bw, (x0, y0, w / 6, ph), shift);
            lift(&mut pixels, bw, (x0 + pw - w / 6, y0, w / 6, ph), shift);
        } else {
            lift(&mut pixels, bw, (x0, y0, pw, ph), shift);
        }
    }
    // Motifs hanging off a border by a third to two thirds of their size;
    // windows near one look like off-centre views of a real motif.
    for _ in 0..stochastic_round(spec.clutter * windows, &mut rng) {
        let edge = rng.random_range(0..4);
        let m = motif_instance(spec, &mut rng);
        let (ox, oy): (i64, i64) = match edge {
            0 | 1 => {
                let hang = rng.random_range(w / 3..=2 * w / 3) as i64;
                let x = if edge == 0 { -hang } else { (bw + hang as usize - w) as i64 };
                (x, rng.random_range(0..=bh - h) as i64)
            }
            _ => {
                let hang = rng.random_range(h / 3..=2 * h / 3) as i64;
                let y = if edge == 2 { -hang } else { (bh + hang as usize - h) as i64 };
                (rng.random_range(0..=bw - w) as i64, y)
            }
        };
        for my in 0..h {
            for mx in 0..w {
                let (x, y) = (ox + mx as i64, oy + my as i64);
                if x >= 0 && y >= 0 && (x as usize) < bw && (y as usize) < bh {
                    pixels[y as usize * bw + x as usize] = m.get(mx, my);
                }
            }
        }
    }
    for p in &mut pixels {
        *p = p.clamp(0.0, 1.0);
    }
    GrayImage::new(bw, bh, pixels).expect("finite pixels")
}

/// Window-sized positives and larger background images.
pub fn synth_patches(spec: &SynthSpec) -> Result<(Vec<GrayImage>, Vec<GrayImage>)> {
    spec.require(SynthMode::Patches)?;
    let positives = par::map_range(spec.positives, |i| positive_patch(spec, POSITIVE, i));
    let backgrounds = par::map_range(spec.negatives, |i| background(spec, spec.background_size, BACKGROUND, i));
    Ok((positives, backgrounds))
}

/// `spec.scenes` fresh backgrounds, each with one fresh motif pasted at a
/// random place, at window size or 1.25 times it. Returns the images with
/// their ground-truth boxes.
pub fn synth_scenes(spec: &SynthSpec) -> Result<Vec<(GrayImage, Vec<Detection>)>> {
    spec.require(SynthMode::Patches)?;
    Ok(par::map_range(spec.scenes, |i| {
        let bg = background(spec, spec.scene_size, SCENE, i);
        let mut patch = positive_patch(spec, SCENE, i + (1 << 32));
        let mut rng = sample_rng(spec.seed, SCENE, i + (2 << 32));
        if rng.random_bool(0.5) {
            let (w, h) = spec.window;
            patch = patch.resize_bilinear(w * 5 / 4, h * 5 / 4);
        }
        let (pw, ph) = (patch.width(), patch.height());
        let x0 = rng.random_range(0..=bg.width() - pw);
        let y0 = rng.random_range(0..=bg.height() - ph);
        let scene = GrayImage::from_fn(bg.width(), bg.height(), |x, y| {
            if x >= x0 && x < x0 + pw && y >= y0 && y < y0 + ph {
                patch.get(x - x0, y - y0)
            } else {
                bg.get(x, y)
            }
        });
        let truth = Detection::new(x0 as f64, y0 as f64, pw as f64, ph as f64, 1.0);
        (scene, vec![truth])
    }))
}

/// Images listed in a dataset manifest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub positives: Vec<GrayImage>,
    pub backgrounds: Vec<GrayImage>,
    pub scenes: Vec<(String, GrayImage, Vec<Detection>)>,
}

pub const MANIFEST: &str = "manifest.txt";
pub const TRUTHS: &str = "truths.csv";

/// Writes PGM files under `dir` plus `manifest.txt` (lines `positive PATH`,
/// `background PATH`, `scene PATH`) and `truths.csv` for the scenes.
pub fn write_dataset(dir: &Path, positives: &[GrayImage], backgrounds: &[GrayImage], scenes: &[(GrayImage, Vec<Detection>)]) -> Result<()> {
    for sub in ["pos", "bg", "scenes"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut manifest = String::new();
    let mut truths = Vec::new();
    for (kind, sub, images) in [("positive", "pos", positives), ("background", "bg", backgrounds)] {
        for (i, img) in images.iter().enumerate() {
            let rel = format!("{sub}/{i:06}.pgm");
            img.write_pgm(dir.join(&rel))?;
            manifest.push_str(&format!("{kind} {rel}\n"));
        }
    }
    for (i, (img, boxes)) in scenes.iter().enumerate() {
        let rel = format!("scenes/{i:06}.pgm");
        img.write_pgm(dir.join(&rel))?;
        manifest.push_str(&format!("scene {rel}\n"));
        truths.extend(boxes.iter().map(|b| (rel.clone(), *b)));
    }
    fs::write(dir.join(MANIFEST), manifest)?;
    write_detections(fs::File::create(dir.join(TRUTHS))?, &truths)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let file = fs::File::open(dir.join(MANIFEST))?;
    let mut data = Dataset::default();
    let mut scene_paths: Vec<String> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (kind, rel) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| Error::parse(i + 1, "expected `KIND PATH`"))?;
        let rel = rel.trim();
        let path: PathBuf = dir.join(rel);
        match kind {
            "positive" => data.positives.push(GrayImage::read_pgm(&path)?),
            "background" => data.backgrounds.push(GrayImage::read_pgm(&path)?),
            "scene" => scene_paths.push(rel.to_string()),
            other => return Err(Error::parse(i + 1, format!("unknown entry kind {other:?}"))),
        }
    }
    if !scene_paths.is_empty() {
        let truths = read_detections(fs::File::open(dir.join(TRUTHS))?)?;
        for rel in scene_paths {
            let img = GrayImage::read_pgm(dir.join(&rel))?;
            let boxes = truths.iter().filter(|(n, _)| *n == rel).map(|(_, d)| *d).collect();
            data.scenes.push((rel, img, boxes));
        }
    }
    Ok(data)
}

/// Writes `label,x1,...,xd` rows.
pub fn write_vectors<W: Write>(out: W, samples: &[Vec<f64>], labels: &[i8]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(false).from_writer(out);
    for (s, &l) in samples.iter().zip(labels) {
        let mut rec = vec![l.to_string()];
        rec.extend(s.iter().map(|v| format!("{v:.17e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_vectors<R: Read>(input: R) -> Result<(Vec<Vec<f64>>, Vec<i8>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |s: &str| Error::parse(i + 1, format!("bad value {s:?}"));
        let label: i8 = rec[0].trim().parse().map_err(|_| bad(&rec[0]))?;
        if label != 1 && label != -1 {
            return Err(Error::parse(i + 1, "label must be 1 or -1"));
        }
        let v = rec
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| bad(s)))
            .collect::<Result<Vec<f64>>>()?;
        labels.push(label);
        samples.push(v);
    }
    Ok((samples, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{IntegralImage, HaarFeature, HaarKind, haar_response};
    use crate::weak::train_stump;

    #[test]
    fn vectors_are_deterministic_and_labelled() {
        let spec = SynthSpec::vectors(3, 5, 7, 2.0, 0.5, 11);
        let (a, la) = synth_vectors(&spec).unwrap();
        let (b, lb) = synth_vectors(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.iter().filter(|&&l| l == 1).count(), 5);
        assert_eq!(a.len(), 12);
        assert!(a.iter().all(|v| v.len() == 3));
        assert!(synth_vectors(&SynthSpec::vectors(3, 1, 7, 2.0, 0.5, 11)).is_err());
        assert!(synth_patches(&spec).is_err());
    }

    #[test]
    fn wide_separation_is_stump_separable() {
        let (x, y) = synth_vectors(&SynthSpec::vectors(4, 200, 200, 10.0, 0.1, 3)).unwrap();
        let col: Vec<f64> = x.iter().map(|v| v[0]).collect();
        let w = vec![1.0 / 400.0; 400];
        assert!(train_stump(&col, &y, &w).unwrap().weighted_error < 0.01);
    }

    #[test]
    fn noiseless_positives_are_identical_and_separable() {
        let spec = SynthSpec::patches(6, 3, 0.0, 5);
        let (pos, bgs) = synth_patches(&spec).unwrap();
        assert!(pos.iter().all(|p| *p == pos[0]));
        let m = motif((24, 24));
        assert!(pos[0].pixels().iter().zip(m.pixels()).all(|(a, b)| (a - b).abs() < 1e-12));
        // Horizontal two-rect across the left leg and the dark gap.
        let f = HaarFeature::new(HaarKind::TwoRectVertical, 4, 0, 16, 8).unwrap();
        let resp = |img: &GrayImage| haar_response(&IntegralImage::new(img), &f).unwrap();
        let pv = resp(&pos[0]);
        let negs: Vec<GrayImage> = bgs
            .iter()
            .flat_map(|b| (0..8).map(move |k| b.crop(k * 9, k * 8, 24, 24).unwrap()))
            .collect();
        let mut values = vec![pv; pos.len()];
        values.extend(negs.iter().map(resp));
        let mut labels = vec![1i8; pos.len()];
        labels.extend(vec![-1i8; negs.len()]);
        let w = crate::boost::balanced_weights(&labels).unwrap();
        assert_eq!(train_stump(&values, &labels, &w).unwrap().weighted_error, 0.0);
    }

    #[test]
    fn patch_pixels_stay_in_range() {
        let spec = SynthSpec::patches(10, 2, 0.8, 9);
        let (pos, bgs) = synth_patches(&spec).unwrap();
        for img in pos.iter().chain(&bgs) {
            assert!(img.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        }
        let scenes = synth_scenes(&spec).unwrap();
        assert_eq!(scenes.len(), 20);
        for (img, truth) in &scenes {
            let t = truth[0];
            assert!(t.x + t.w <= img.width() as f64 && t.y + t.h <= img.height() as f64);
        }
        assert_eq!(scenes, synth_scenes(&spec).unwrap());
    }

    #[test]
    fn dataset_round_trip() {
        let dir = std::env::temp_dir().join(format!("cascadeprune-synth-{}", std::process::id()));
        let mut spec = SynthSpec::patches(3, 2, 0.1, 1);
        spec.scenes = 2;
        let (pos, bgs) = synth_patches(&spec).unwrap();
        let scenes = synth_scenes(&spec).unwrap();
        write_dataset(&dir, &pos, &bgs, &scenes).unwrap();
        let data = read_dataset(&dir).unwrap();
        assert_eq!(data.positives.len(), 3);
        assert_eq!(data.backgrounds.len(), 2);
        assert_eq!(data.scenes.len(), 2);
        assert_eq!(data.scenes[1].2, scenes[1].1);
        // PGM quantizes to 8 bits.
        for (a, b) in data.positives[0].pixels().iter().zip(pos[0].pixels()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn vectors_csv_round_trip() {
        let (x, y) = synth_vectors(&SynthSpec::vectors(2, 3, 3, 1.0, 1.0, 0)).unwrap();
        let mut buf = Vec::new();
        write_vectors(&mut buf, &x, &y).unwrap();
        assert_eq!(read_vectors(buf.as_slice()).unwrap(), (x, y));
    }
}
