use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use cascadeprune::boost::{adaboost_train, BoostConfig, FeatureColumns};
use cascadeprune::cascade::{
    detection_rate_at_fp, fit_node, read_model, train_cascade, write_model, BootstrapPool, CascadeConfig,
    NodeConfig, NodeReport, Trainer,
};
use cascadeprune::detect::{
    evaluate_images, merge_detections, read_detections, roc_by_node_removal, scan, write_detections, write_roc,
    Detection,
};
use cascadeprune::features::{Feature, FeatureFamily};
use cascadeprune::synth::{
    read_dataset, read_vectors, synth_patches, synth_scenes, synth_vectors, write_dataset, write_vectors, SynthMode,
    SynthSpec, TRUTHS,
};
use cascadeprune::{Cascade, Error, GrayImage, Result};

use crate::config::{parse_schedule, Resolver};
use crate::{DetectArgs, EvalArgs, InspectArgs, SynthArgs, TrainArgs, TrainNodeArgs};

const TRAIN_VECTORS: &str = "train.csv";
const TEST_VECTORS: &str = "test.csv";

/// Names the file in IO errors.
fn at<P: AsRef<Path>>(path: P) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::Io(io) => Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.as_ref().display()))),
        other => other,
    }
}

fn open(path: impl AsRef<Path>) -> Result<File> {
    File::open(path.as_ref()).map_err(|e| at(path)(e.into()))
}

/// Writes to `path`, or stdout when absent.
fn output(path: Option<&str>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn synth(args: SynthArgs, r: &mut Resolver, seed: u64) -> Result<()> {
    let mode: SynthMode = r.get("mode", args.mode, SynthMode::Patches)?;
    let out: String = r.require("out", args.out)?;
    let dir = Path::new(&out);
    match mode {
        SynthMode::Patches => {
            let mut spec = SynthSpec::patches(
                r.get("positives", args.positives, 500)?,
                r.get("backgrounds", args.backgrounds, 50)?,
                r.get("noise", args.noise, 0.2)?,
                seed,
            );
            spec.scenes = r.get("scenes", args.scenes, spec.scenes)?;
            spec.clutter = r.get("clutter", args.clutter, spec.clutter)?;
            r.log("synth");
            let (pos, bgs) = synth_patches(&spec)?;
            let scenes = synth_scenes(&spec)?;
            write_dataset(dir, &pos, &bgs, &scenes)?;
            log::info!(
                "wrote {} positives, {} backgrounds, {} scenes to {}",
                pos.len(),
                bgs.len(),
                scenes.len(),
                dir.display()
            );
        }
        SynthMode::Vectors => {
            let dims = r.get("dims", args.dims, 10)?;
            let sep = r.get("separation", args.separation, 1.0)?;
            let noise = r.get("noise", args.noise, 1.0)?;
            let train = SynthSpec::vectors(
                dims,
                r.get("positives", args.positives, 5000)?,
                r.get("negatives", args.negatives, 5000)?,
                sep,
                noise,
                seed,
            );
            let test = SynthSpec::vectors(
                dims,
                r.get("test-positives", args.test_positives, 4000)?,
                r.get("test-negatives", args.test_negatives, 20000)?,
                sep,
                noise,
                seed.wrapping_add(1000),
            );
            r.log("synth");
            fs::create_dir_all(dir)?;
            for (spec, name) in [(&train, TRAIN_VECTORS), (&test, TEST_VECTORS)] {
                let (x, y) = synth_vectors(spec)?;
                write_vectors(File::create(dir.join(name))?, &x, &y)?;
            }
            log::info!("wrote {TRAIN_VECTORS} and {TEST_VECTORS} to {}", dir.display());
        }
    }
    Ok(())
}

fn report_csv(reports: &[NodeReport]) -> String {
    let mut s = String::from("node,t1,t,threshold,detection_rate,false_positive_rate,positives,negatives\n");
    for r in reports {
        writeln!(
            s,
            "{},{},{},{:.16e},{},{},{},{}",
            r.index, r.t1, r.kept, r.threshold, r.detection_rate, r.false_positive_rate, r.positives, r.negatives
        )
        .unwrap();
    }
    s
}

pub fn train(args: TrainArgs, r: &mut Resolver, seed: u64) -> Result<()> {
    let data: String = r.require("data", args.data)?;
    let schedule = parse_schedule(&r.get("schedule", args.schedule, "5:10,10:20,15:30,20:40,25:50".to_string())?)?;
    let mut cfg = CascadeConfig::new((24, 24), schedule);
    cfg.gamma = r.get("gamma", args.gamma, cfg.gamma)?;
    cfg.target_fp = r.get("target-fp", args.target_fp, cfg.target_fp)?;
    cfg.negatives_per_node = r.get("negatives-per-node", args.negatives_per_node, 500)?;
    cfg.family = r.get("family", args.family, cfg.family)?;
    cfg.feature_budget = r.get("budget", args.budget, cfg.feature_budget)?;
    cfg.sample_fraction = r.get("sample-fraction", args.sample_fraction, cfg.sample_fraction)?;
    cfg.trainer = r.get("trainer", args.trainer, cfg.trainer)?;
    cfg.seed = seed;
    let out: String = r.require("out", args.out)?;
    let report: Option<String> = r.opt("report", args.report)?;
    r.log("train");

    let dataset = read_dataset(Path::new(&data)).map_err(at(&data))?;
    let first = dataset
        .positives
        .first()
        .ok_or_else(|| Error::InsufficientData("dataset has no positives".into()))?;
    cfg.window = (first.width(), first.height());
    cfg.validate()?;
    let mut pool = BootstrapPool::new(dataset.backgrounds, cfg.window);
    let trained = train_cascade(&cfg, &dataset.positives, &mut pool)?;
    write_model(&trained.cascade, &out)?;
    let csv = report_csv(&trained.reports);
    match report {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    if trained.depleted {
        log::warn!("background pool depleted; cascade has {} nodes", trained.cascade.len());
    }
    Ok(())
}

struct VectorSet {
    train: (Vec<Vec<f64>>, Vec<i8>),
    test: (Vec<Vec<f64>>, Vec<i8>),
}

fn vector_data(args: &TrainNodeArgs, r: &mut Resolver, seed: u64) -> Result<VectorSet> {
    if let Some(dir) = r.opt::<String>("data", args.data.clone())? {
        let dir = PathBuf::from(dir);
        return Ok(VectorSet {
            train: read_vectors(open(dir.join(TRAIN_VECTORS))?)?,
            test: read_vectors(open(dir.join(TEST_VECTORS))?)?,
        });
    }
    let dims = r.get("dims", args.dims, 10)?;
    let sep = r.get("separation", args.separation, 1.0)?;
    let noise = r.get("noise", args.noise, 1.0)?;
    let train = SynthSpec::vectors(
        dims,
        r.get("positives", args.positives, 5000)?,
        r.get("negatives", args.negatives, 5000)?,
        sep,
        noise,
        seed,
    );
    let test = SynthSpec::vectors(
        dims,
        r.get("test-positives", args.test_positives, 4000)?,
        r.get("test-negatives", args.test_negatives, 20000)?,
        sep,
        noise,
        seed.wrapping_add(1000),
    );
    Ok(VectorSet {
        train: synth_vectors(&train)?,
        test: synth_vectors(&test)?,
    })
}

/// Detection rate at `target_fp` test false positives for a node trained on
/// vector coordinates.
fn test_rate(node: &cascadeprune::cascade::NodeModel, test: &(Vec<Vec<f64>>, Vec<i8>), target_fp: f64) -> Result<f64> {
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (x, &l) in test.0.iter().zip(&test.1) {
        let v = node.margin(|f| x[f]) + node.threshold;
        if l > 0 {
            pos.push(v);
        } else {
            neg.push(v);
        }
    }
    detection_rate_at_fp(&pos, &neg, target_fp)
}

pub fn train_node(args: TrainNodeArgs, r: &mut Resolver, seed: u64) -> Result<()> {
    let t1: usize = r.get("t1", args.t1, 100)?;
    let t: usize = r.get("t", args.t, 20)?;
    let gamma: f64 = r.get("gamma", args.gamma, 0.5)?;
    let target_fp: f64 = r.get("target-fp", args.target_fp, 0.5)?;
    let trainers = if args.trainer.is_empty() {
        match r.opt::<Trainer>("trainer", None)? {
            Some(tr) => vec![tr],
            None => vec![Trainer::Pruning, Trainer::AdaBoost, Trainer::AdaBoostLda],
        }
    } else {
        args.trainer.clone()
    };
    let data = vector_data(&args, r, seed)?;
    let out: Option<String> = r.opt("out", args.out.clone())?;
    r.log("train-node");

    let dims = data.train.0.first().map_or(0, Vec::len);
    if dims == 0 || data.test.0.is_empty() {
        return Err(Error::InsufficientData("empty vector data".into()));
    }
    let columns = FeatureColumns::new((0..dims).map(|f| data.train.0.iter().map(|x| x[f]).collect()).collect())?;
    let labels = &data.train.1;
    // One boosting run shared by every trainer keeps the comparison paired.
    let boost = adaboost_train(
        &columns,
        labels,
        &BoostConfig {
            rounds: t1,
            sample_fraction: 1.0,
            seed,
        },
    )?;
    let mut table = String::from("stumps");
    for tr in &trainers {
        write!(table, ",{tr}").unwrap();
    }
    table.push('\n');
    for k in 1..=t {
        write!(table, "{k}").unwrap();
        for &trainer in &trainers {
            let mut cfg = NodeConfig::new(t1, k);
            cfg.trainer = trainer;
            cfg.gamma = gamma;
            cfg.target_fp = target_fp;
            cfg.seed = seed;
            let node = fit_node(&boost, labels, &cfg)?;
            write!(table, ",{:.6}", test_rate(&node, &data.test, target_fp)?).unwrap();
        }
        table.push('\n');
    }
    let mut w = output(out.as_deref())?;
    w.write_all(table.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Named images to scan: explicit paths, or the scenes of a dataset.
fn scan_targets(images: &[String], data: Option<&str>) -> Result<Vec<(String, GrayImage, Vec<Detection>)>> {
    if let Some(dir) = data {
        return Ok(read_dataset(Path::new(dir)).map_err(at(dir))?.scenes);
    }
    if images.is_empty() {
        return Err(Error::ConfigError("give --data or at least one image".into()));
    }
    images
        .iter()
        .map(|p| Ok((p.clone(), GrayImage::read_pgm(p).map_err(at(p))?, Vec::new())))
        .collect()
}

fn detect_all(cascade: &Cascade, targets: &[(String, GrayImage, Vec<Detection>)], sf: f64, stride: usize) -> Vec<(String, Detection)> {
    targets
        .iter()
        .flat_map(|(name, img, _)| {
            merge_detections(&scan(img, cascade, sf, stride))
                .into_iter()
                .map(move |d| (name.clone(), d))
        })
        .collect()
}

fn scan_params(r: &mut Resolver, sf: Option<f64>, stride: Option<usize>) -> Result<(f64, usize)> {
    let sf = r.get("scale-factor", sf, 1.25)?;
    let stride = r.get("stride", stride, 4)?;
    if !(sf > 1.0) || stride == 0 {
        return Err(Error::ConfigError("scale factor must exceed 1 and stride be positive".into()));
    }
    Ok((sf, stride))
}

pub fn detect(args: DetectArgs, r: &mut Resolver) -> Result<()> {
    let model: String = r.require("model", args.model)?;
    let data: Option<String> = r.opt("data", args.data)?;
    let (sf, stride) = scan_params(r, args.scale_factor, args.stride)?;
    let out: Option<String> = r.opt("out", args.out)?;
    r.log("detect");
    let cascade = read_model(&model).map_err(at(&model))?;
    let targets = scan_targets(&args.images, data.as_deref())?;
    let rows = detect_all(&cascade, &targets, sf, stride);
    log::info!("{} detections over {} images", rows.len(), targets.len());
    write_detections(output(out.as_deref())?, &rows)
}

fn group(rows: Vec<(String, Detection)>) -> BTreeMap<String, Vec<Detection>> {
    let mut map: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for (name, d) in rows {
        map.entry(name).or_default().push(d);
    }
    map
}

pub fn eval(args: EvalArgs, r: &mut Resolver) -> Result<()> {
    let data: Option<String> = r.opt("data", args.data)?;
    let truths_path: Option<String> = r.opt("truths", args.truths)?;
    let detections_path: Option<String> = r.opt("detections", args.detections)?;
    let model: Option<String> = r.opt("model", args.model)?;
    let roc: Option<String> = r.opt("roc", args.roc)?;
    let (sf, stride) = scan_params(r, args.scale_factor, args.stride)?;
    r.log("eval");

    let scenes = match &data {
        Some(d) => read_dataset(Path::new(d)).map_err(at(d))?.scenes,
        None => Vec::new(),
    };
    let truth_rows = match (&truths_path, &data) {
        (Some(p), _) => read_detections(open(p)?)?,
        (None, Some(d)) => read_detections(open(Path::new(d).join(TRUTHS))?)?,
        (None, None) => return Err(Error::ConfigError("give --truths or --data".into())),
    };
    let cascade = model.as_deref().map(|m| read_model(m).map_err(at(m))).transpose()?;
    let det_rows = match (&detections_path, &cascade) {
        (Some(p), _) => read_detections(open(p)?)?,
        (None, Some(c)) if !scenes.is_empty() => detect_all(c, &scenes, sf, stride),
        _ => return Err(Error::ConfigError("give --detections, or --model with --data".into())),
    };

    let truths = group(truth_rows);
    let dets = group(det_rows);
    let mut names: Vec<&String> = truths.keys().chain(dets.keys()).collect();
    names.extend(scenes.iter().map(|s| &s.0));
    names.sort();
    names.dedup();
    let empty = Vec::new();
    let d: Vec<Vec<Detection>> = names.iter().map(|n| dets.get(*n).unwrap_or(&empty).clone()).collect();
    let t: Vec<Vec<Detection>> = names.iter().map(|n| truths.get(*n).unwrap_or(&empty).clone()).collect();
    let counts = evaluate_images(&d, &t)?;
    println!("images {}", names.len());
    println!("truths {}", counts.truths);
    println!("detections {}", counts.detections);
    println!("detection_rate {:.6}", counts.detection_rate());
    println!("false_positives {}", counts.false_positives);
    println!(
        "false_positives_per_image {:.6}",
        counts.false_positives as f64 / names.len().max(1) as f64
    );

    if let Some(path) = roc {
        let cascade = cascade.ok_or_else(|| Error::ConfigError("--roc needs --model".into()))?;
        if scenes.is_empty() {
            return Err(Error::ConfigError("--roc needs --data with scenes".into()));
        }
        let images: Vec<GrayImage> = scenes.iter().map(|s| s.1.clone()).collect();
        let boxes: Vec<Vec<Detection>> = scenes.iter().map(|s| s.2.clone()).collect();
        let points = roc_by_node_removal(&cascade, &images, &boxes, sf, stride)?;
        write_roc(File::create(path)?, &points)?;
    }
    Ok(())
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let cascade = read_model(&args.model).map_err(at(&args.model))?;
    let mut s = String::new();
    writeln!(s, "window {}x{}", cascade.window.0, cascade.window.1).unwrap();
    writeln!(s, "gamma {}", cascade.gamma).unwrap();
    let family = match cascade.family() {
        FeatureFamily::Haar => "haar",
        FeatureFamily::Hog => "hog",
    };
    writeln!(s, "family {family}").unwrap();
    writeln!(s, "nodes {}", cascade.len()).unwrap();
    writeln!(
        s,
        "stumps {}",
        cascade.nodes.iter().map(|n| n.weak.len()).sum::<usize>()
    )
    .unwrap();
    for (k, node) in cascade.nodes.iter().enumerate() {
        writeln!(s, "\nnode {k}: {} stumps, threshold {:.6}", node.weak.len(), node.threshold).unwrap();
        let coefs: Vec<String> = node.weak.iter().map(|w| format!("{:.4}", w.coef)).collect();
        writeln!(s, "  coefficients [{}]", coefs.join(", ")).unwrap();
        for (j, w) in node.weak.iter().enumerate() {
            let what = match &w.feature {
                Feature::Haar(f) => format!("{} at ({}, {}) size {}x{}", f.kind, f.x, f.y, f.w, f.h),
                Feature::Hog(f) => format!("hog block at ({}, {}) size {}x{}", f.block.x, f.block.y, f.block.w, f.block.h),
            };
            let sign = if w.polarity > 0 { ">=" } else { "<=" };
            writeln!(s, "  {j:>3} {what}, fires when value {sign} {:.6}, coef {:.6}", w.theta, w.coef).unwrap();
        }
    }
    print!("{s}");
    Ok(())
}
