//! Sliding-window detection, window merging, PASCAL matching and ROC curves.

use std::io::{Read, Write};

use crate::cascade::{grid_positions, pyramid_level, Cascade};
use crate::error::{Error, Result};
use crate::features::{GrayImage, WindowTables};
use crate::par;

/// Box in original image coordinates with a confidence score.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

impl Detection {
    pub fn new(x: f64, y: f64, w: f64, h: f64, score: f64) -> Self {
        Detection { x, y, w, h, score }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &Detection, b: &Detection) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.area() + b.area() - inter)
}

/// PASCAL criterion: overlap ratio strictly above one half.
pub fn pascal_match(det: &Detection, truth: &Detection) -> bool {
    iou(det, truth) > 0.5
}

/// Pyramid levels of `image` with their scale relative to the original.
fn levels(image: &GrayImage, window: (usize, usize), scale_factor: f64) -> Vec<(f64, GrayImage)> {
    let mut out = Vec::new();
    for level in 0.. {
        match pyramid_level(image, level, scale_factor, window) {
            Some(img) => out.push((scale_factor.powi(level as i32), img)),
            None => break,
        }
    }
    out
}

fn to_original(image: &GrayImage, window: (usize, usize), scale: f64, x: usize, y: usize, score: f64) -> Detection {
    let ox = x as f64 * scale;
    let oy = y as f64 * scale;
    Detection {
        x: ox,
        y: oy,
        w: (window.0 as f64 * scale).min(image.width() as f64 - ox),
        h: (window.1 as f64 * scale).min(image.height() as f64 - oy),
        score,
    }
}

/// Runs `f` on every window of every pyramid level, keeping the `Some` results
/// in level then raster order.
fn scan_with<T: Send>(
    image: &GrayImage,
    cascade: &Cascade,
    scale_factor: f64,
    stride: usize,
    f: impl Fn(&WindowTables, usize, usize, f64) -> Option<T> + Sync,
) -> Vec<T> {
    assert!(scale_factor > 1.0, "scale factor must exceed 1");
    assert!(stride > 0, "stride must be positive");
    let family = cascade.family();
    let per_level = par::map_slice(&levels(image, cascade.window, scale_factor), |(scale, img)| {
        let tables = WindowTables::new(img, family);
        let positions = grid_positions(img.width(), img.height(), cascade.window, stride);
        par::map_slice(&positions, |&(x, y)| f(&tables, x, y, *scale))
            .into_iter()
            .flatten()
            .collect::<Vec<T>>()
    });
    per_level.into_iter().flatten().collect()
}

/// Every window the cascade accepts, mapped back to original coordinates.
/// The score is the last node's margin.
pub fn scan(image: &GrayImage, cascade: &Cascade, scale_factor: f64, stride: usize) -> Vec<Detection> {
    scan_with(image, cascade, scale_factor, stride, |tables, x, y, scale| {
        let v = cascade.evaluate(tables, x, y);
        v.accepted
            .then(|| to_original(image, cascade.window, scale, x, y, v.confidence))
    })
}

/// A window that passed at least the first node, with the margins of every
/// node it reached.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowHit {
    pub bbox: Detection,
    pub margins: Vec<f64>,
}

impl WindowHit {
    /// Number of leading nodes passed.
    pub fn depth(&self) -> usize {
        self.margins.iter().take_while(|&&m| m >= 0.0).count()
    }
}

/// Single scan recording how deep each window gets, so every prefix cascade
/// can be evaluated without rescanning.
pub fn scan_depths(image: &GrayImage, cascade: &Cascade, scale_factor: f64, stride: usize) -> Vec<WindowHit> {
    scan_with(image, cascade, scale_factor, stride, |tables, x, y, scale| {
        let margins = cascade.margins(tables, x, y);
        (margins.first().is_some_and(|&m| m >= 0.0)).then(|| WindowHit {
            bbox: to_original(image, cascade.window, scale, x, y, 0.0),
            margins,
        })
    })
}

/// Detections of the `k`-node prefix cascade.
pub fn prefix_detections(hits: &[WindowHit], k: usize) -> Vec<Detection> {
    assert!(k > 0, "prefix must keep at least one node");
    hits.iter()
        .filter(|h| h.depth() >= k)
        .map(|h| Detection {
            score: h.margins[k - 1],
            ..h.bbox
        })
        .collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// One pass of overlap-component merging with count weights.
fn merge_pass(items: &[(Detection, usize)]) -> Vec<(Detection, usize)> {
    let n = items.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if iou(&items[i].0, &items[j].0) >= 0.5 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // Components in order of their smallest member.
    let mut slot = vec![usize::MAX; n];
    let mut sums: Vec<([f64; 5], usize)> = Vec::new();
    for (i, (d, c)) in items.iter().enumerate() {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = sums.len();
            sums.push(([0.0; 5], 0));
        }
        let (s, count) = &mut sums[slot[r]];
        let cw = *c as f64;
        for (acc, v) in s.iter_mut().zip([d.x, d.y, d.w, d.h, d.score]) {
            *acc += cw * v;
        }
        *count += c;
    }
    sums.into_iter()
        .map(|(s, c)| {
            let k = c as f64;
            (Detection::new(s[0] / k, s[1] / k, s[2] / k, s[3] / k, s[4] / k), c)
        })
        .collect()
}

/// Merges windows whose overlap ratio is at least one half, transitively.
/// Each group becomes the mean box with the mean score. Merging repeats until
/// no two outputs overlap that much, so the result is a fixed point.
pub fn merge_detections(dets: &[Detection]) -> Vec<Detection> {
    let mut items: Vec<(Detection, usize)> = dets.iter().map(|&d| (d, 1)).collect();
    loop {
        let merged = merge_pass(&items);
        if merged.len() == items.len() {
            break;
        }
        items = merged;
    }
    items.into_iter().map(|(d, _)| d).collect()
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub truths: usize,
    pub matched: usize,
    pub detections: usize,
    pub false_positives: usize,
}

impl MatchCounts {
    /// Matched fraction of ground truths; 1 when there are none.
    pub fn detection_rate(&self) -> f64 {
        if self.truths == 0 {
            1.0
        } else {
            self.matched as f64 / self.truths as f64
        }
    }

    fn add(&mut self, o: MatchCounts) {
        self.truths += o.truths;
        self.matched += o.matched;
        self.detections += o.detections;
        self.false_positives += o.false_positives;
    }
}

/// Greedy one-to-one matching in decreasing score order; each detection takes
/// the best-overlapping unmatched truth that passes the PASCAL test.
pub fn match_detections(dets: &[Detection], truths: &[Detection]) -> MatchCounts {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut used = vec![false; truths.len()];
    let mut matched = 0;
    for i in order {
        let best = truths
            .iter()
            .enumerate()
            .filter(|(j, t)| !used[*j] && pascal_match(&dets[i], t))
            .max_by(|(ja, a), (jb, b)| iou(&dets[i], a).total_cmp(&iou(&dets[i], b)).then(jb.cmp(ja)));
        if let Some((j, _)) = best {
            used[j] = true;
            matched += 1;
        }
    }
    MatchCounts {
        truths: truths.len(),
        matched,
        detections: dets.len(),
        false_positives: dets.len() - matched,
    }
}

/// Sums per-image matches.
pub fn evaluate_images(dets: &[Vec<Detection>], truths: &[Vec<Detection>]) -> Result<MatchCounts> {
    if dets.len() != truths.len() {
        return Err(Error::DimensionError {
            expected: truths.len(),
            got: dets.len(),
        });
    }
    let mut total = MatchCounts::default();
    for (d, t) in dets.iter().zip(truths) {
        total.add(match_detections(d, t));
    }
    Ok(total)
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RocPoint {
    pub nodes: usize,
    pub detection_rate: f64,
    pub false_positives: usize,
    /// False positives per image.
    pub fp_rate: f64,
    /// Accepted windows before merging.
    pub raw_detections: usize,
}

/// One ROC point per prefix cascade, from all nodes down to one.
pub fn roc_by_node_removal(
    cascade: &Cascade,
    images: &[GrayImage],
    truths: &[Vec<Detection>],
    scale_factor: f64,
    stride: usize,
) -> Result<Vec<RocPoint>> {
    if cascade.is_empty() {
        return Err(Error::config("ROC needs a non-empty cascade"));
    }
    if images.len() != truths.len() {
        return Err(Error::DimensionError {
            expected: images.len(),
            got: truths.len(),
        });
    }
    let hits = par::map_slice(images, |img| scan_depths(img, cascade, scale_factor, stride));
    let mut points = Vec::with_capacity(cascade.len());
    for k in (1..=cascade.len()).rev() {
        let raw: Vec<Vec<Detection>> = hits.iter().map(|h| prefix_detections(h, k)).collect();
        let merged: Vec<Vec<Detection>> = raw.iter().map(|d| merge_detections(d)).collect();
        let counts = evaluate_images(&merged, truths)?;
        points.push(RocPoint {
            nodes: k,
            detection_rate: counts.detection_rate(),
            false_positives: counts.false_positives,
            fp_rate: counts.false_positives as f64 / images.len().max(1) as f64,
            raw_detections: raw.iter().map(Vec::len).sum(),
        });
    }
    Ok(points)
}

/// Writes `image,x,y,w,h,score` rows with a header.
pub fn write_detections<W: Write>(out: W, rows: &[(String, Detection)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["image", "x", "y", "w", "h", "score"])?;
    for (name, d) in rows {
        w.write_record([
            name.clone(),
            d.x.to_string(),
            d.y.to_string(),
            d.w.to_string(),
            d.h.to_string(),
            d.score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_detections`]. The score column may be
/// omitted (ground-truth files), in which case it is 1.
pub fn read_detections<R: Read>(input: R) -> Result<Vec<(String, Detection)>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 5 && rec.len() != 6 {
            return Err(Error::parse(line, format!("expected 5 or 6 fields, found {}", rec.len())));
        }
        let mut v = [1.0; 5];
        for (k, slot) in v.iter_mut().enumerate().take(rec.len() - 1) {
            let s = &rec[k + 1];
            *slot = s
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::parse(line, format!("bad number {s:?}")))?;
        }
        if v[2] <= 0.0 || v[3] <= 0.0 {
            return Err(Error::parse(line, "box sides must be positive"));
        }
        out.push((rec[0].to_string(), Detection::new(v[0], v[1], v[2], v[3], v[4])));
    }
    Ok(out)
}

/// Writes `nodes,detection_rate,false_positives,fp_rate` rows with a header.
pub fn write_roc<W: Write>(out: W, points: &[RocPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["nodes", "detection_rate", "false_positives", "fp_rate"])?;
    for p in points {
        w.write_record([
            p.nodes.to_string(),
            p.detection_rate.to_string(),
            p.false_positives.to_string(),
            p.fp_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
