//! End-to-end orchestration behind the `nsci-cd` subcommands.
//!
//! Every command reads a [`PipelineConfig`], writes into an [`OutputDir`] and
//! returns a report value; printing is left to the caller.

mod config;
mod output;

use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::baselines::{self, CvaResult};
use crate::cfog::{extract_cfog_bands, FeatureStack};
use crate::error::{Error, Result};
use crate::eval::{self, ConfusionMatrix, Metrics};
use crate::forest::{self, DecisionTree, Forest, Sample};
use crate::neighborhood::{matching_error, nsci, MeMap, NsciMap};
use crate::raster::{self, BinaryMask, MultibandRaster, Scaling};
use crate::synth::{self, SceneSpec};

pub use config::{PipelineConfig, SamplingParams, SceneSource};
pub use output::OutputDir;

/// The two acquisitions and, when available, the reference change mask.
#[derive(Clone, Debug)]
pub struct Inputs {
    pub t1: MultibandRaster,
    pub t2: MultibandRaster,
    pub truth: Option<BinaryMask>,
}

impl Inputs {
    fn truth(&self) -> Result<&BinaryMask> {
        self.truth
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a truth mask ([input] truth)".into()))
    }
}

pub fn load_inputs(config: &PipelineConfig) -> Result<Inputs> {
    let inputs = match &config.source {
        SceneSource::Files { t1, t2, truth } => Inputs {
            t1: raster::load_raster(t1)?,
            t2: raster::load_raster(t2)?,
            truth: truth.as_ref().map(|p| raster::load_mask(p, None)).transpose()?,
        },
        SceneSource::Synthetic(spec) => {
            let scene = synth::generate(spec)?;
            Inputs {
                t1: scene.t1,
                t2: scene.t2,
                truth: Some(scene.truth),
            }
        }
    };
    if !inputs.t1.same_shape(&inputs.t2) {
        return Err(Error::Shape(format!(
            "t1 is {}x{}x{} but t2 is {}x{}x{}",
            inputs.t1.width(),
            inputs.t1.height(),
            inputs.t1.bands(),
            inputs.t2.width(),
            inputs.t2.height(),
            inputs.t2.bands()
        )));
    }
    if let Some(truth) = &inputs.truth {
        if truth.width() != inputs.t1.width() || truth.height() != inputs.t1.height() {
            return Err(Error::Shape(format!(
                "truth is {}x{} but the images are {}x{}",
                truth.width(),
                truth.height(),
                inputs.t1.width(),
                inputs.t1.height()
            )));
        }
    }
    Ok(inputs)
}

#[derive(Clone, Debug)]
pub struct Features {
    pub cfog1: FeatureStack,
    pub cfog2: FeatureStack,
    pub nsci: NsciMap,
    /// Absent when only the three-feature vector is needed.
    pub me: Option<MeMap>,
}

impl Features {
    /// Row-major `(r, a, b, ME)` vectors; ME is 0 when it was not computed.
    pub fn pixel_vectors(&self) -> Result<Vec<[f64; 4]>> {
        forest::pixel_features(&self.nsci, self.me.as_ref())
    }
}

pub fn compute_features(inputs: &Inputs, config: &PipelineConfig, with_me: bool) -> Result<Features> {
    let cfog1 = extract_cfog_bands(&inputs.t1, &config.cfog, config.band_mode)?;
    let cfog2 = extract_cfog_bands(&inputs.t2, &config.cfog, config.band_mode)?;
    let nsci = nsci(&cfog1, &cfog2, &config.neighborhood)?;
    let me = if with_me {
        Some(matching_error(&cfog1, &cfog2, &config.neighborhood)?)
    } else {
        None
    };
    Ok(Features { cfog1, cfog2, nsci, me })
}

/// Pixels chosen for training, in ascending index order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingPixels {
    pub indices: Vec<usize>,
    /// Drawn per class, `[unchanged, changed]`.
    pub counts: [usize; 2],
    pub warnings: Vec<String>,
}

/// Draws up to `per_class_count` pixels of each class without replacement.
/// A class with fewer pixels contributes all of them and a warning.
pub fn stratified_sample(truth: &BinaryMask, sampling: &SamplingParams) -> Result<TrainingPixels> {
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    let mut indices = Vec::new();
    let mut counts = [0; 2];
    let mut warnings = Vec::new();
    for class in [forest::UNCHANGED, forest::CHANGED] {
        let pool: Vec<usize> = truth
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        let name = class_name(class);
        if pool.is_empty() {
            return Err(Error::DegenerateTraining(format!("truth mask has no {name} pixels")));
        }
        let take = if pool.len() < sampling.per_class_count {
            warnings.push(format!(
                "only {} {name} pixels available, fewer than the requested {}; using all of them",
                pool.len(),
                sampling.per_class_count
            ));
            pool.len()
        } else {
            sampling.per_class_count
        };
        indices.extend(index::sample(&mut rng, pool.len(), take).into_iter().map(|i| pool[i]));
        counts[class as usize] = take;
    }
    indices.sort_unstable();
    Ok(TrainingPixels {
        indices,
        counts,
        warnings,
    })
}

fn class_name(class: u8) -> &'static str {
    if class == forest::CHANGED {
        "changed"
    } else {
        "unchanged"
    }
}

fn samples_at(vectors: &[[f64; 4]], dims: usize, truth: &BinaryMask, pixels: &TrainingPixels) -> Vec<Sample> {
    pixels
        .indices
        .iter()
        .map(|&i| Sample::new(vectors[i][..dims].to_vec(), truth.labels()[i]))
        .collect()
}

fn train_on(
    vectors: &[[f64; 4]],
    dims: usize,
    truth: &BinaryMask,
    pixels: &TrainingPixels,
    config: &PipelineConfig,
) -> Result<(Forest, f64)> {
    let samples = samples_at(vectors, dims, truth, pixels);
    let model = forest::train(&samples, &config.forest)?;
    let acc = forest::accuracy(&model, &samples)?;
    Ok((model, acc))
}

fn classify(model: &Forest, vectors: &[[f64; 4]], width: usize, height: usize) -> Result<BinaryMask> {
    let d = model.n_features();
    let rows: Vec<f64> = vectors.iter().flat_map(|v| v[..d].iter().copied()).collect();
    BinaryMask::new(width, height, model.predict_rows(&rows)?)
}

fn nci_vectors(nci: &NsciMap) -> Vec<[f64; 4]> {
    (0..nci.r.len()).map(|i| [nci.r[i], nci.a[i], nci.b[i], 0.0]).collect()
}

fn single_band(plane: &[f64], width: usize, height: usize) -> Result<MultibandRaster> {
    MultibandRaster::from_planes(width, height, &[plane])
}

// ---------------------------------------------------------------- features

#[derive(Clone, Debug)]
pub struct FeaturesReport {
    pub width: usize,
    pub height: usize,
    pub depth: usize,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for FeaturesReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "features: {}x{}, {} CFOG layers",
            self.width, self.height, self.depth
        )?;
        for p in &self.files {
            writeln!(f, "  wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Writes both CFOG stacks, the NSCI and ME maps, and 8-bit previews.
pub fn cmd_features(config: &PipelineConfig, out: &Path) -> Result<FeaturesReport> {
    let mut dir = OutputDir::open(out)?;
    let inputs = load_inputs(config)?;
    let feats = compute_features(&inputs, config, true)?;
    let me = feats.me.as_ref().expect("computed with ME");
    let (w, h) = (feats.nsci.width, feats.nsci.height);

    raster::save_raster(&feats.cfog1.to_raster()?, dir.file("cfog_t1.sdf"), Scaling::RawFloat)?;
    raster::save_raster(&feats.cfog2.to_raster()?, dir.file("cfog_t2.sdf"), Scaling::RawFloat)?;
    raster::save_raster(&feats.nsci.to_raster()?, dir.file("nsci.sdf"), Scaling::RawFloat)?;
    raster::save_raster(&me.to_raster()?, dir.file("me.sdf"), Scaling::RawFloat)?;

    // r and ME have fixed physical ranges, so a perfect match renders white
    // and black respectively instead of being stretched.
    let r = single_band(&feats.nsci.r, w, h)?;
    raster::save_raster(
        &raster::rescale_to_range(&r, -1.0, 1.0),
        dir.file("r.png"),
        Scaling::ClampTo8Bit,
    )?;
    let a = single_band(&feats.nsci.a, w, h)?;
    raster::save_raster(&a, dir.file("a.png"), Scaling::NormalizeTo8Bit)?;
    let b = single_band(&feats.nsci.b, w, h)?;
    raster::save_raster(&b, dir.file("b.png"), Scaling::NormalizeTo8Bit)?;
    let me_max = config.neighborhood.max_matching_error();
    raster::save_raster(
        &raster::rescale_to_range(&me.to_raster()?, 0.0, me_max),
        dir.file("me.png"),
        Scaling::ClampTo8Bit,
    )?;

    let files = dir.finish()?;
    Ok(FeaturesReport {
        width: w,
        height: h,
        depth: feats.cfog1.depth(),
        files,
    })
}

// ------------------------------------------------------------------- train

#[derive(Clone, Debug)]
pub struct TrainSummary {
    /// Training pixels per class, `[unchanged, changed]`.
    pub class_counts: [usize; 2],
    pub training_accuracy: f64,
    pub trees: usize,
    pub n_features: usize,
    pub model_path: PathBuf,
    pub warnings: Vec<String>,
}

impl fmt::Display for TrainSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trained {} trees on {} features: {} unchanged + {} changed pixels",
            self.trees, self.n_features, self.class_counts[0], self.class_counts[1]
        )?;
        writeln!(f, "training accuracy: {:.4}", self.training_accuracy)?;
        writeln!(f, "model: {}", self.model_path.display())
    }
}

/// Trains the four-feature forest on a stratified sample and saves `model.sdrf`.
pub fn cmd_train(config: &PipelineConfig, out: &Path) -> Result<TrainSummary> {
    let mut dir = OutputDir::open(out)?;
    let inputs = load_inputs(config)?;
    let truth = inputs.truth()?;
    let pixels = stratified_sample(truth, &config.sampling)?;
    let feats = compute_features(&inputs, config, true)?;
    let (model, training_accuracy) = train_on(&feats.pixel_vectors()?, 4, truth, &pixels, config)?;
    let model_path = dir.file("model.sdrf");
    model.save(&model_path)?;
    dir.finish()?;
    Ok(TrainSummary {
        class_counts: pixels.counts,
        training_accuracy,
        trees: model.trees().len(),
        n_features: model.n_features(),
        model_path,
        warnings: pixels.warnings,
    })
}

// ----------------------------------------------------------------- predict

#[derive(Clone, Debug)]
pub struct PredictReport {
    pub changed: usize,
    pub total: usize,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for PredictReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "changed pixels: {} of {}", self.changed, self.total)?;
        for p in &self.files {
            writeln!(f, "  wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Classifies every pixel with a saved model; writes `change_map.png`
/// (changed = white) and the 0/1 mask `change_mask.sdf`.
pub fn cmd_predict(config: &PipelineConfig, model_path: &Path, out: &Path) -> Result<PredictReport> {
    let model = Forest::load(model_path)?;
    let d = model.n_features();
    if d != 3 && d != 4 {
        return Err(Error::Shape(format!(
            "model expects {d} features but the pipeline produces 3 (r, a, b) or 4 (r, a, b, ME)"
        )));
    }
    let mut dir = OutputDir::open(out)?;
    let inputs = load_inputs(config)?;
    let feats = compute_features(&inputs, config, d == 4)?;
    let mask = forest::predict_map(&model, &feats.nsci, feats.me.as_ref())?;
    raster::save_mask(&mask, dir.file("change_map.png"))?;
    let binary = mask.to_raster().map(|v| v / 255.0);
    raster::save_raster(&binary, dir.file("change_mask.sdf"), Scaling::RawFloat)?;
    let files = dir.finish()?;
    Ok(PredictReport {
        changed: mask.count_changed(),
        total: mask.labels().len(),
        files,
    })
}

// ---------------------------------------------------------------- evaluate

#[derive(Clone, Debug)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub json: String,
    pub table: String,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table)
    }
}

pub fn evaluate_masks(pred: &BinaryMask, truth: &BinaryMask) -> Result<EvalReport> {
    let confusion = eval::confusion(pred, truth, None)?;
    let metrics = eval::metrics(&confusion)?;
    Ok(EvalReport {
        confusion,
        json: eval::report_json(&confusion, &metrics),
        table: eval::report_table(&[("prediction", metrics)]),
        metrics,
    })
}

/// Scores a predicted mask against the truth; with `out`, also writes
/// `metrics.json` and `metrics.txt`.
pub fn cmd_evaluate(pred: &Path, truth: &Path, out: Option<&Path>) -> Result<EvalReport> {
    let pred = raster::load_mask(pred, None)?;
    let truth = raster::load_mask(truth, None)?;
    let report = evaluate_masks(&pred, &truth)?;
    if let Some(out) = out {
        let mut dir = OutputDir::open(out)?;
        write_text(&dir.file("metrics.json"), &format!("{}\n", report.json))?;
        write_text(&dir.file("metrics.txt"), &report.table)?;
        dir.finish()?;
    }
    Ok(report)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ----------------------------------------------------------------- compare

#[derive(Clone, Debug)]
pub struct MethodResult {
    pub method: &'static str,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
}

#[derive(Clone, Debug)]
pub struct ComparisonReport {
    /// CVA, NCI, NSCI, NSCI+ME.
    pub rows: Vec<MethodResult>,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn row(&self, method: &str) -> Option<&MethodResult> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn table(&self) -> String {
        let rows: Vec<(&str, Metrics)> = self.rows.iter().map(|r| (r.method, r.metrics)).collect();
        eval::report_table(&rows)
    }

    pub fn json(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            method: &'a str,
            oa: f64,
            fa: f64,
            md: f64,
            kc: f64,
            tp: u64,
            fp: u64,
            #[serde(rename = "fn")]
            fn_: u64,
            tn: u64,
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            methods: Vec<Row<'a>>,
        }
        let doc = Doc {
            methods: self
                .rows
                .iter()
                .map(|r| Row {
                    method: r.method,
                    oa: r.metrics.oa,
                    fa: r.metrics.fa,
                    md: r.metrics.md,
                    kc: r.metrics.kc,
                    tp: r.confusion.tp,
                    fp: r.confusion.fp,
                    fn_: r.confusion.fn_,
                    tn: r.confusion.tn,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("comparison serializes")
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.table())
    }
}

/// Runs the four detectors on one scene without touching the filesystem.
/// The forest variants share one training sample.
pub fn compare(inputs: &Inputs, config: &PipelineConfig) -> Result<(ComparisonReport, Vec<BinaryMask>)> {
    let truth = inputs.truth()?;
    let (w, h) = (inputs.t1.width(), inputs.t1.height());
    let mut warnings = Vec::new();
    // With a single class in the truth there is nothing to learn; the forest
    // rows fall back to a one-leaf model of that class.
    let changed = truth.count_changed();
    let constant = match changed {
        0 => Some(forest::UNCHANGED),
        c if c == truth.labels().len() => Some(forest::CHANGED),
        _ => None,
    };
    let pixels = match constant {
        Some(class) => {
            warnings.push(format!(
                "truth holds only {} pixels; forest rows predict that class everywhere",
                class_name(class)
            ));
            None
        }
        None => {
            let p = stratified_sample(truth, &config.sampling)?;
            warnings.extend(p.warnings.iter().cloned());
            Some(p)
        }
    };
    let fit = |vectors: &[[f64; 4]], dims: usize| -> Result<Forest> {
        match (&pixels, constant) {
            (Some(p), _) => Ok(train_on(vectors, dims, truth, p, config)?.0),
            (None, class) => Forest::from_trees(vec![DecisionTree::leaf(class.unwrap_or_default())], dims, 1),
        }
    };

    let CvaResult { mask: cva_mask, .. } = baselines::cva(&inputs.t1, &inputs.t2, &config.cva)?;

    let nci = baselines::nci_intensity(
        &inputs.t1,
        &inputs.t2,
        config.neighborhood.nsci_window,
        config.neighborhood.variance_floor,
    )?;
    let nci_vec = nci_vectors(&nci);
    let nci_model = fit(&nci_vec, 3)?;
    let nci_mask = classify(&nci_model, &nci_vec, w, h)?;

    let feats = compute_features(inputs, config, true)?;
    let vectors = feats.pixel_vectors()?;
    let nsci_model = fit(&vectors, 3)?;
    let nsci_mask = classify(&nsci_model, &vectors, w, h)?;
    let full_model = fit(&vectors, 4)?;
    let full_mask = classify(&full_model, &vectors, w, h)?;

    let masks = vec![cva_mask, nci_mask, nsci_mask, full_mask];
    let rows = ["CVA", "NCI", "NSCI", "NSCI+ME"]
        .into_iter()
        .zip(&masks)
        .map(|(method, mask)| {
            let confusion = eval::confusion(mask, truth, None)?;
            Ok(MethodResult {
                method,
                confusion,
                metrics: eval::metrics(&confusion)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ComparisonReport { rows, warnings }, masks))
}

/// [`compare`] plus `comparison.json`, `comparison.txt` and one mask PNG per method.
pub fn cmd_compare(config: &PipelineConfig, out: &Path) -> Result<ComparisonReport> {
    let mut dir = OutputDir::open(out)?;
    let inputs = load_inputs(config)?;
    let (report, masks) = compare(&inputs, config)?;
    write_text(&dir.file("comparison.json"), &format!("{}\n", report.json()))?;
    write_text(&dir.file("comparison.txt"), &report.table())?;
    for (name, mask) in ["cva", "nci", "nsci", "nsci_me"].iter().zip(&masks) {
        raster::save_mask(mask, dir.file(&format!("mask_{name}.png")))?;
    }
    dir.finish()?;
    Ok(report)
}

// ------------------------------------------------------------------- synth

#[derive(Clone, Debug)]
pub struct SynthReport {
    pub changed: usize,
    pub total: usize,
    pub files: Vec<PathBuf>,
}

impl fmt::Display for SynthReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "scene: {} of {} pixels changed ({:.2}%)",
            self.changed,
            self.total,
            100.0 * self.changed as f64 / self.total as f64
        )?;
        for p in &self.files {
            writeln!(f, "  wrote {}", p.display())?;
        }
        Ok(())
    }
}

/// Writes `t1.sdf`, `t2.sdf`, `truth.png` and a `scene.cfg` that points at them.
pub fn cmd_synth(spec: &SceneSpec, out: &Path) -> Result<SynthReport> {
    let mut dir = OutputDir::open(out)?;
    let scene = synth::generate(spec)?;
    raster::save_raster(&scene.t1, dir.file("t1.sdf"), Scaling::RawFloat)?;
    raster::save_raster(&scene.t2, dir.file("t2.sdf"), Scaling::RawFloat)?;
    raster::save_mask(&scene.truth, dir.file("truth.png"))?;
    write_text(
        &dir.file("scene.cfg"),
        "[input]\nt1 = t1.sdf\nt2 = t2.sdf\ntruth = truth.png\n",
    )?;
    let files = dir.finish()?;
    Ok(SynthReport {
        changed: scene.truth.count_changed(),
        total: scene.truth.labels().len(),
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_sample_is_exact_and_seeded() {
        let truth = BinaryMask::from_fn(20, 10, |x, _| x < 3);
        let params = SamplingParams {
            per_class_count: 25,
            seed: 3,
        };
        let a = stratified_sample(&truth, &params).unwrap();
        assert_eq!(a.counts, [25, 25]);
        assert!(a.warnings.is_empty());
        assert!(a.indices.windows(2).all(|w| w[0] < w[1]));
        let changed = a.indices.iter().filter(|&&i| truth.labels()[i] == 1).count();
        assert_eq!(changed, 25);
        assert_eq!(a, stratified_sample(&truth, &params).unwrap());
        let other = stratified_sample(&truth, &SamplingParams { seed: 4, ..params }).unwrap();
        assert_ne!(a.indices, other.indices);
    }

    #[test]
    fn stratified_sample_clamps_small_class() {
        let truth = BinaryMask::from_fn(10, 10, |x, y| x == 0 && y < 4);
        let s = stratified_sample(
            &truth,
            &SamplingParams {
                per_class_count: 10,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(s.counts, [10, 4]);
        assert_eq!(s.warnings.len(), 1);
        assert!(s.warnings[0].contains("changed"));
    }

    #[test]
    fn stratified_sample_rejects_missing_class() {
        let truth = BinaryMask::filled(8, 8, false);
        assert!(matches!(
            stratified_sample(&truth, &SamplingParams::default()),
            Err(Error::DegenerateTraining(_))
        ));
    }
}
