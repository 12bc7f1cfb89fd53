//! Confusion matrices and the OA / FA / MD / kappa accuracy summary.
//!
//! Changed is the positive class. FA is the share of detected changes that
//! are false, `fp / (tp + fp)`; MD is the share of true changes that were
//! missed, `fn / (tp + fn)`.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Matrix with the roles of prediction and truth exchanged.
    pub fn transposed(&self) -> Self {
        Self {
            fp: self.fn_,
            fn_: self.fp,
            ..*self
        }
    }
}

impl Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// Counts over pixels not marked in `ignore`.
pub fn confusion(pred: &BinaryMask, truth: &BinaryMask, ignore: Option<&BinaryMask>) -> Result<ConfusionMatrix> {
    let dims = |m: &BinaryMask| (m.width(), m.height());
    if dims(pred) != dims(truth) || ignore.is_some_and(|i| dims(i) != dims(truth)) {
        return Err(Error::Shape(format!(
            "prediction {:?} and truth {:?} differ in size",
            dims(pred),
            dims(truth)
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&p, &t)) in pred.labels().iter().zip(truth.labels()).enumerate() {
        if ignore.is_some_and(|m| m.labels()[i] == 1) {
            continue;
        }
        match (p, t) {
            (1, 1) => cm.tp += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            _ => cm.tn += 1,
        }
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Overall accuracy, percent.
    pub oa: f64,
    /// False alarms, percent. Zero when nothing was detected.
    pub fa: f64,
    /// Missed detections, percent. Zero when nothing changed.
    pub md: f64,
    /// Cohen's kappa.
    pub kc: f64,
    pub fa_defined: bool,
    pub md_defined: bool,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyInput("confusion matrix is empty".into()));
    }
    let percent = |num: u64, den: u64| {
        if den == 0 {
            (0.0, false)
        } else {
            ((100 * num) as f64 / den as f64, true)
        }
    };
    let (oa, _) = percent(cm.tp + cm.tn, total);
    let (fa, fa_defined) = percent(cm.fp, cm.tp + cm.fp);
    let (md, md_defined) = percent(cm.fn_, cm.tp + cm.fn_);

    // kappa = (N * agree - chance) / (N^2 - chance), in exact integers
    let n = total as i128;
    let agree = (cm.tp + cm.tn) as i128;
    let chance =
        ((cm.tp + cm.fp) as i128) * ((cm.tp + cm.fn_) as i128) + ((cm.fn_ + cm.tn) as i128) * ((cm.fp + cm.tn) as i128);
    let den = n * n - chance;
    let kc = if den == 0 {
        // chance agreement is certain: both maps hold the same single class
        1.0
    } else {
        (n * agree - chance) as f64 / den as f64
    };
    Ok(Metrics {
        oa,
        fa,
        md,
        kc,
        fa_defined,
        md_defined,
    })
}

#[derive(Serialize)]
struct JsonReport {
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

/// `{"oa": .., "fa": .., "md": .., "kc": .., "tp": .., "fp": .., "fn": .., "tn": ..}`
pub fn report_json(cm: &ConfusionMatrix, m: &Metrics) -> String {
    serde_json::to_string(&JsonReport {
        oa: m.oa,
        fa: m.fa,
        md: m.md,
        kc: m.kc,
        tp: cm.tp,
        fp: cm.fp,
        fn_: cm.fn_,
        tn: cm.tn,
    })
    .expect("report serializes")
}

/// Aligned text table of named results, percentages to two decimals.
pub fn report_table(rows: &[(&str, Metrics)]) -> String {
    let name_width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Method".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<name_width$}  {:>7}  {:>7}  {:>7}  {:>6}",
        "Method", "OA(%)", "FAs(%)", "MDs(%)", "KC"
    );
    for (name, m) in rows {
        let _ = writeln!(
            out,
            "{:<name_width$}  {:>7.2}  {:>7.2}  {:>7.2}  {:>6.3}",
            name, m.oa, m.fa, m.md, m.kc
        );
    }
    out
}
