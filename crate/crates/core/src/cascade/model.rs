//! Line-oriented text format for trained cascades.
//!
//! ```text
//! CASCADEPRUNE 1
//! window W H
//! gamma G
//! node K T B
//! haar KIND X Y W H theta P alpha
//! hog X Y W H p1 ... p36 theta P alpha
//! ```
//!
//! Reals are written with 17 significant digits so a round trip is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Cascade, NodeClassifier, WeakClassifier};
use crate::error::{Error, Result};
use crate::features::{Feature, HaarFeature, HogBlock, HogFeature, HOG_DIM};

pub const MODEL_VERSION: u32 = 1;
const MAGIC: &str = "CASCADEPRUNE";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn serialize_model(cascade: &Cascade) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {MODEL_VERSION}").unwrap();
    writeln!(out, "window {} {}", cascade.window.0, cascade.window.1).unwrap();
    writeln!(out, "gamma {}", real(cascade.gamma)).unwrap();
    for (k, node) in cascade.nodes.iter().enumerate() {
        writeln!(out, "node {k} {} {}", node.weak.len(), real(node.threshold)).unwrap();
        for w in &node.weak {
            match &w.feature {
                Feature::Haar(f) => {
                    write!(out, "haar {} {} {} {} {}", f.kind, f.x, f.y, f.w, f.h).unwrap();
                }
                Feature::Hog(f) => {
                    let b = f.block;
                    write!(out, "hog {} {} {} {}", b.x, b.y, b.w, b.h).unwrap();
                    for p in &f.projection {
                        write!(out, " {}", real(*p)).unwrap();
                    }
                }
            }
            writeln!(out, " {} {} {}", real(w.theta), w.polarity, real(w.coef)).unwrap();
        }
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line split into fields.
    fn next_fields(&mut self) -> Option<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if !fields.is_empty() {
                return Some(fields);
            }
        }
        None
    }

    fn expect(&mut self, key: &str, arity: usize) -> Result<Vec<&'a str>> {
        let fields = self
            .next_fields()
            .ok_or_else(|| Error::parse(self.line + 1, format!("missing `{key}` line")))?;
        if fields[0] != key || fields.len() != arity + 1 {
            return Err(Error::parse(
                self.line,
                format!("expected `{key}` with {arity} values, found {:?}", fields.join(" ")),
            ));
        }
        Ok(fields)
    }
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("bad number {s:?}")))
}

fn finite(s: &str, line: usize) -> Result<f64> {
    let v: f64 = num(s, line)?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value {s:?}")));
    }
    Ok(v)
}

pub fn parse_model(text: &str) -> Result<Cascade> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines
        .next_fields()
        .ok_or_else(|| Error::parse(1, "empty model file"))?;
    if header.len() != 2 || header[0] != MAGIC {
        return Err(Error::parse(lines.line, "not a cascade model file"));
    }
    let version: u32 = num(header[1], lines.line)?;
    if version != MODEL_VERSION {
        return Err(Error::parse(
            lines.line,
            format!("unsupported model version {version}"),
        ));
    }
    let f = lines.expect("window", 2)?;
    let window = (num(f[1], lines.line)?, num(f[2], lines.line)?);
    let f = lines.expect("gamma", 1)?;
    let gamma = finite(f[1], lines.line)?;
    let mut cascade = Cascade::new(window, gamma);

    while let Some(f) = lines.next_fields() {
        let line = lines.line;
        if f[0] != "node" || f.len() != 4 {
            return Err(Error::parse(line, format!("expected `node`, found {:?}", f.join(" "))));
        }
        let index: usize = num(f[1], line)?;
        if index != cascade.nodes.len() {
            return Err(Error::parse(line, format!("node {index} out of order")));
        }
        let count: usize = num(f[2], line)?;
        let threshold = finite(f[3], line)?;
        let mut weak = Vec::with_capacity(count);
        for _ in 0..count {
            let f = lines
                .next_fields()
                .ok_or_else(|| Error::parse(lines.line + 1, "truncated node"))?;
            weak.push(parse_weak(&f, lines.line, window)?);
        }
        cascade.nodes.push(NodeClassifier {
            weak,
            threshold,
            train_stats: None,
        });
    }
    Ok(cascade)
}

fn parse_weak(f: &[&str], line: usize, window: (usize, usize)) -> Result<WeakClassifier> {
    let (feature, rest) = match f[0] {
        "haar" if f.len() == 9 => {
            let feat = HaarFeature::new(
                f[1].parse().map_err(|_| Error::parse(line, format!("unknown Haar kind {:?}", f[1])))?,
                num(f[2], line)?,
                num(f[3], line)?,
                num(f[4], line)?,
                num(f[5], line)?,
            )
            .map_err(|e| Error::parse(line, e.to_string()))?;
            (Feature::Haar(feat), &f[6..])
        }
        "hog" if f.len() == 5 + HOG_DIM + 3 => {
            let block = HogBlock::new(num(f[1], line)?, num(f[2], line)?, num(f[3], line)?, num(f[4], line)?)
                .map_err(|e| Error::parse(line, e.to_string()))?;
            let projection = f[5..5 + HOG_DIM]
                .iter()
                .map(|s| finite(s, line))
                .collect::<Result<Vec<f64>>>()?;
            (Feature::Hog(HogFeature { block, projection }), &f[5 + HOG_DIM..])
        }
        other => {
            return Err(Error::parse(
                line,
                format!("malformed weak classifier line starting with {other:?}"),
            ))
        }
    };
    if !feature.fits(window) {
        return Err(Error::parse(line, "feature does not fit the window"));
    }
    let polarity: i8 = num(rest[1], line)?;
    if polarity != 1 && polarity != -1 {
        return Err(Error::parse(line, format!("polarity {polarity} is not +/-1")));
    }
    Ok(WeakClassifier {
        feature,
        theta: finite(rest[0], line)?,
        polarity,
        coef: finite(rest[2], line)?,
    })
}

pub fn write_model(cascade: &Cascade, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serialize_model(cascade))?;
    Ok(())
}

pub fn read_model(path: impl AsRef<Path>) -> Result<Cascade> {
    parse_model(&fs::read_to_string(path)?)
}
