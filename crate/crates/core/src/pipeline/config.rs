//! Pipeline configuration file.
//!
//! A flat UTF-8 text file of `key = value` lines grouped under `[section]`
//! headers. `#` and `;` start comments. Relative paths resolve against the
//! directory holding the file. Unknown sections or keys are rejected.
//!
//! ```text
//! [input]
//! t1 = t1.sdf
//! t2 = t2.sdf
//! truth = truth.png
//!
//! [cfog]
//! orientations = 9
//! sigma = 1.0
//! band_mode = intensity      # or per_band
//!
//! [neighborhood]
//! nsci_window = 5
//! template = 3
//! search = 9
//! template_source = t1       # or t2
//!
//! [forest]
//! trees = 100
//! seed = 42
//!
//! [sampling]
//! per_class_count = 2000
//! seed = 7
//! ```
//!
//! Instead of `[input]`, a `[synth]` section describes a generated scene
//! (`width`, `height`, `bands`, `texture_scale`, `gain`, `bias`,
//! `noise_sigma`, `seed`, and repeated `change = rect cx cy w h delta` or
//! `change = disk cx cy radius delta` lines).

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::baselines::{CvaParams, CvaThreshold};
use crate::cfog::{BandMode, CfogParams};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::neighborhood::{NeighborhoodParams, TemplateSource};
use crate::synth::{ChangeRegion, SceneSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum SceneSource {
    Files {
        t1: PathBuf,
        t2: PathBuf,
        truth: Option<PathBuf>,
    },
    Synthetic(SceneSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingParams {
    /// Training pixels drawn from each class.
    pub per_class_count: usize,
    pub seed: u64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            per_class_count: 2000,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub source: SceneSource,
    pub cfog: CfogParams,
    pub band_mode: BandMode,
    pub neighborhood: NeighborhoodParams,
    pub forest: ForestParams,
    pub sampling: SamplingParams,
    pub cva: CvaParams,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    /// The default benchmark scene with default parameters everywhere.
    fn default() -> Self {
        Self {
            source: SceneSource::Synthetic(SceneSpec::default()),
            cfog: CfogParams::default(),
            band_mode: BandMode::Intensity,
            neighborhood: NeighborhoodParams::default(),
            forest: ForestParams::default(),
            sampling: SamplingParams::default(),
            cva: CvaParams::default(),
            output_dir: None,
        }
    }
}

struct Entry<'a> {
    line: usize,
    section: &'a str,
    key: &'a str,
    value: &'a str,
}

fn entries(text: &str) -> Result<Vec<Entry<'_>>> {
    let mut out = Vec::new();
    let mut section = "";
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split(['#', ';']).next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            section = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {line}: unterminated section header")))?
                .trim();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {line}: expected `key = value`")))?;
        if section.is_empty() {
            return Err(Error::Config(format!("line {line}: key outside any section")));
        }
        out.push(Entry {
            line,
            section,
            key: key.trim(),
            value: value.trim(),
        });
    }
    Ok(out)
}

fn parse<T: FromStr>(e: &Entry) -> Result<T> {
    e.value.parse().map_err(|_| {
        Error::Config(format!(
            "line {}: cannot parse {:?} for [{}] {}",
            e.line, e.value, e.section, e.key
        ))
    })
}

fn parse_change(e: &Entry) -> Result<ChangeRegion> {
    let parts: Vec<&str> = e.value.split_whitespace().collect();
    let bad = || Error::Config(format!("line {}: bad change region {:?}", e.line, e.value));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
    let px = |s: &str| s.parse::<usize>().map_err(|_| bad());
    match parts.as_slice() {
        ["rect", cx, cy, w, h, delta] => Ok(ChangeRegion::rect(px(cx)?, px(cy)?, px(w)?, px(h)?, num(delta)?)),
        ["disk", cx, cy, r, delta] => Ok(ChangeRegion::disk(px(cx)?, px(cy)?, num(r)?, num(delta)?)),
        _ => Err(bad()),
    }
}

impl PipelineConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Parses configuration text; relative paths are joined onto `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        let mut t1 = None;
        let mut t2 = None;
        let mut truth = None;
        let mut synth: Option<SceneSpec> = None;
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        for e in entries(text)? {
            match (e.section, e.key) {
                ("input", "t1") => t1 = Some(resolve(e.value)),
                ("input", "t2") => t2 = Some(resolve(e.value)),
                ("input", "truth") => truth = Some(resolve(e.value)),
                ("output", "dir") => cfg.output_dir = Some(resolve(e.value)),

                ("synth", key) => {
                    let spec = synth.get_or_insert_with(|| SceneSpec {
                        changes: Vec::new(),
                        ..SceneSpec::default()
                    });
                    match key {
                        "width" => spec.width = parse(&e)?,
                        "height" => spec.height = parse(&e)?,
                        "bands" => spec.bands = parse(&e)?,
                        "texture_scale" => spec.texture_scale = parse(&e)?,
                        "gain" => spec.gain = parse(&e)?,
                        "bias" => spec.bias = parse(&e)?,
                        "noise_sigma" => spec.noise_sigma = parse(&e)?,
                        "seed" => spec.seed = parse(&e)?,
                        "change" => spec.changes.push(parse_change(&e)?),
                        _ => return Err(unknown(&e)),
                    }
                }

                ("cfog", "orientations") => cfg.cfog.orientations = parse(&e)?,
                ("cfog", "sigma") => cfg.cfog.sigma = parse(&e)?,
                ("cfog", "epsilon") => cfg.cfog.epsilon = parse(&e)?,
                ("cfog", "band_mode") => {
                    cfg.band_mode = match e.value {
                        "intensity" => BandMode::Intensity,
                        "per_band" => BandMode::PerBand,
                        _ => return Err(unknown_value(&e)),
                    }
                }

                ("neighborhood", "nsci_window") => cfg.neighborhood.nsci_window = parse(&e)?,
                ("neighborhood", "template") => cfg.neighborhood.template = parse(&e)?,
                ("neighborhood", "search") => cfg.neighborhood.search = parse(&e)?,
                ("neighborhood", "variance_floor") => cfg.neighborhood.variance_floor = parse(&e)?,
                ("neighborhood", "template_source") => {
                    cfg.neighborhood.template_source = match e.value {
                        "t1" => TemplateSource::First,
                        "t2" => TemplateSource::Second,
                        _ => return Err(unknown_value(&e)),
                    }
                }

                ("forest", "trees") => cfg.forest.trees = parse(&e)?,
                ("forest", "mtry") => cfg.forest.mtry = parse(&e)?,
                ("forest", "max_depth") => cfg.forest.max_depth = parse(&e)?,
                ("forest", "min_leaf") => cfg.forest.min_leaf = parse(&e)?,
                ("forest", "seed") => cfg.forest.seed = parse(&e)?,
                ("forest", "bootstrap") => cfg.forest.bootstrap = parse(&e)?,

                ("sampling", "per_class_count") => cfg.sampling.per_class_count = parse(&e)?,
                ("sampling", "seed") => cfg.sampling.seed = parse(&e)?,

                ("cva", "threshold") => {
                    cfg.cva.threshold = if e.value == "otsu" {
                        CvaThreshold::Otsu
                    } else {
                        CvaThreshold::Fixed(parse(&e)?)
                    }
                }

                _ => return Err(unknown(&e)),
            }
        }

        cfg.source = match (t1, t2, synth) {
            (Some(_), _, Some(_)) | (_, Some(_), Some(_)) => {
                return Err(Error::Config("[input] and [synth] are mutually exclusive".into()));
            }
            (Some(t1), Some(t2), None) => SceneSource::Files { t1, t2, truth },
            (None, None, Some(spec)) => {
                if truth.is_some() {
                    return Err(Error::Config("a synthetic scene brings its own truth".into()));
                }
                SceneSource::Synthetic(spec)
            }
            (None, None, None) => match truth {
                Some(_) => return Err(Error::Config("[input] truth given without t1/t2".into())),
                None => SceneSource::Synthetic(SceneSpec::default()),
            },
            _ => return Err(Error::Config("[input] needs both t1 and t2".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfog.validate()?;
        self.neighborhood.validate()?;
        if self.sampling.per_class_count == 0 {
            return Err(Error::Config("per_class_count must be >= 1".into()));
        }
        if self.forest.trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        if let SceneSource::Synthetic(spec) = &self.source {
            spec.validate()?;
        }
        Ok(())
    }

    /// Replaces the forest and sampling seeds.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.forest.seed = seed;
        self.sampling.seed = seed;
        self
    }
}

fn unknown(e: &Entry) -> Error {
    Error::Config(format!("line {}: unknown key [{}] {}", e.line, e.section, e.key))
}

fn unknown_value(e: &Entry) -> Error {
    Error::Config(format!(
        "line {}: unsupported value {:?} for [{}] {}",
        e.line, e.value, e.section, e.key
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_files_and_params() {
        let text = "\
# comment
[input]
t1 = a/t1.sdf
t2 = /abs/t2.sdf ; trailing comment
truth = gt.png

[cfog]
orientations = 6
band_mode = per_band

[neighborhood]
template_source = t2
search = 11

[forest]
trees = 10
max_depth = 0

[cva]
threshold = 12.5
";
        let cfg = PipelineConfig::parse(text, Path::new("/base")).unwrap();
        assert_eq!(
            cfg.source,
            SceneSource::Files {
                t1: PathBuf::from("/base/a/t1.sdf"),
                t2: PathBuf::from("/abs/t2.sdf"),
                truth: Some(PathBuf::from("/base/gt.png")),
            }
        );
        assert_eq!(cfg.cfog.orientations, 6);
        assert_eq!(cfg.band_mode, BandMode::PerBand);
        assert_eq!(cfg.neighborhood.template_source, TemplateSource::Second);
        assert_eq!(cfg.neighborhood.search, 11);
        assert_eq!((cfg.forest.trees, cfg.forest.max_depth), (10, 0));
        assert_eq!(cfg.cva.threshold, CvaThreshold::Fixed(12.5));
    }

    #[test]
    fn parses_synthetic_scene() {
        let text =
            "[synth]\nwidth = 64\nheight = 32\nbands = 1\nchange = rect 10 10 4 4 5\nchange = disk 40 16 3.5 -2\n";
        let cfg = PipelineConfig::parse(text, Path::new("")).unwrap();
        let SceneSource::Synthetic(spec) = cfg.source else {
            panic!("expected a synthetic scene")
        };
        assert_eq!((spec.width, spec.height, spec.bands), (64, 32, 1));
        assert_eq!(spec.changes.len(), 2);
        assert_eq!(spec.changes[1], ChangeRegion::disk(40, 16, 3.5, -2.0));
    }

    #[test]
    fn defaults_to_benchmark_scene() {
        let cfg = PipelineConfig::parse("", Path::new("")).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.sampling.per_class_count, 2000);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "[cfog]\ncolour = red\n",
            "[cfog]\nsigma = abc\n",
            "key = 1\n",
            "[input]\nt1 = x\n",
            "[neighborhood]\ntemplate = 4\n",
            "[sampling]\nper_class_count = 0\n",
            "[synth]\nwidth = 16\nchange = rect 1 1 8 8 0\n",
            "[synth]\nchange = blob 1 2\n",
            "[input\nt1 = x\n",
        ] {
            assert!(
                matches!(
                    PipelineConfig::parse(text, Path::new("")),
                    Err(Error::Config(_) | Error::Spec(_))
                ),
                "{text:?}"
            );
        }
    }
}
