//! Land-change validation: A–E change accounting, figure of merit,
//! producer's/user's/overall accuracy, k-fold cross-validation and the
//! per-model CSV report.
//!
//! A cell shows *change* between two maps when its label differs. With a
//! single gaining category (built-up) a predicted change can never land in
//! the wrong gaining category, so `C` is always zero.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use crate::dataset::{FoldPlan, TransitionClass};
use crate::error::{Error, Result};
use crate::knowledge::TransitionModel;
use crate::matrix::Matrix;
use crate::raster::BuiltUpMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ChangeAccounting {
    /// Observed change predicted as persistence.
    pub a: u64,
    /// Observed change predicted as change.
    pub b: u64,
    /// Observed change predicted in the wrong gaining category.
    pub c: u64,
    /// Observed persistence predicted as change.
    pub d: u64,
    /// Observed persistence predicted as persistence.
    pub e: u64,
}

impl ChangeAccounting {
    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d + self.e
    }

    pub fn observed_change(&self) -> u64 {
        self.a + self.b + self.c
    }
}

pub fn account(obs_t: &BuiltUpMap, obs_t1: &BuiltUpMap, pred_t1: &BuiltUpMap) -> Result<ChangeAccounting> {
    let (w, h) = (obs_t.width(), obs_t.height());
    for m in [obs_t1, pred_t1] {
        if !m.same_shape(w, h) {
            return Err(Error::dims(format!("{w}x{h}"), format!("{}x{}", m.width(), m.height())));
        }
    }
    let mut acc = ChangeAccounting::default();
    for ((&t, &o), &p) in obs_t.labels().iter().zip(obs_t1.labels()).zip(pred_t1.labels()) {
        match (t != o, t != p) {
            (true, false) => acc.a += 1,
            (true, true) => acc.b += 1,
            (false, true) => acc.d += 1,
            (false, false) => acc.e += 1,
        }
    }
    debug_assert_eq!(acc.total(), obs_t.cells() as u64);
    Ok(acc)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `B / (A + B + C + D)`; `None` when the denominator is zero.
pub fn fom(acc: &ChangeAccounting) -> Option<f64> {
    ratio(acc.b, acc.a + acc.b + acc.c + acc.d)
}

/// `B / (A + B + C)`.
pub fn pa(acc: &ChangeAccounting) -> Option<f64> {
    ratio(acc.b, acc.a + acc.b + acc.c)
}

/// `B / (B + C + D)`.
pub fn ua(acc: &ChangeAccounting) -> Option<f64> {
    ratio(acc.b, acc.b + acc.c + acc.d)
}

/// `(B + E) / (A + B + C + D + E)`.
pub fn oa(acc: &ChangeAccounting) -> Option<f64> {
    ratio(acc.b + acc.e, acc.total())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationReport {
    pub fom: Option<f64>,
    pub pa: Option<f64>,
    pub ua: Option<f64>,
    pub oa: Option<f64>,
    pub accounting: ChangeAccounting,
}

impl ValidationReport {
    pub fn from_accounting(accounting: ChangeAccounting) -> Self {
        ValidationReport {
            fom: fom(&accounting),
            pa: pa(&accounting),
            ua: ua(&accounting),
            oa: oa(&accounting),
            accounting,
        }
    }

    pub fn evaluate(obs_t: &BuiltUpMap, obs_t1: &BuiltUpMap, pred_t1: &BuiltUpMap) -> Result<Self> {
        Ok(Self::from_accounting(account(obs_t, obs_t1, pred_t1)?))
    }
}

/// Signed differences `b - a` in percentage points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricDeltas {
    pub fom: f64,
    pub pa: f64,
    pub ua: f64,
    pub oa: f64,
}

pub fn improvement(a: &ValidationReport, b: &ValidationReport) -> Result<MetricDeltas> {
    let d = |name: &str, x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => Ok((y - x) * 100.0),
        _ => Err(Error::invalid(format!("{name} is undefined in one of the reports"))),
    };
    Ok(MetricDeltas {
        fom: d("FoM", a.fom, b.fom)?,
        pa: d("PA", a.pa, b.pa)?,
        ua: d("UA", a.ua, b.ua)?,
        oa: d("OA", a.oa, b.oa)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    /// Twice the population standard deviation of the fold accuracies.
    pub spread: f64,
    pub train_seconds: Vec<f64>,
    pub predict_seconds: Vec<f64>,
}

impl CrossValReport {
    pub fn from_folds(fold_accuracies: Vec<f64>, train_seconds: Vec<f64>, predict_seconds: Vec<f64>) -> Self {
        let k = fold_accuracies.len().max(1) as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / k;
        let var = fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k;
        CrossValReport {
            fold_accuracies,
            mean,
            spread: 2.0 * var.sqrt(),
            train_seconds,
            predict_seconds,
        }
    }
}

impl fmt::Display for CrossValReport {
    /// `mean (+/- spread)`, six decimals each.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} (+/- {:.6})", self.mean, self.spread)
    }
}

pub fn accuracy(pred: &[TransitionClass], truth: &[TransitionClass]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len().max(1) as f64
}

/// Trains on `k - 1` folds and scores held-out accuracy on the remaining one,
/// for every fold. Any fold failure aborts with that fold's error.
pub fn cross_validate<F>(x: &Matrix, y: &[TransitionClass], plan: &FoldPlan, mut trainer: F) -> Result<CrossValReport>
where
    F: FnMut(&Matrix, &[TransitionClass]) -> Result<TransitionModel>,
{
    if plan.assignment.len() != x.rows() || x.rows() != y.len() {
        return Err(Error::dims(
            format!("{} rows", plan.assignment.len()),
            format!("{} feature rows / {} labels", x.rows(), y.len()),
        ));
    }
    let mut accs = Vec::with_capacity(plan.k);
    let mut train_s = Vec::with_capacity(plan.k);
    let mut predict_s = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let (train, test) = plan.split(fold);
        let xt = x.select_rows(&train);
        let yt: Vec<_> = train.iter().map(|&i| y[i]).collect();
        let start = Instant::now();
        let model = trainer(&xt, &yt).map_err(|e| Error::invalid(format!("fold {fold}: {e}")))?;
        train_s.push(start.elapsed().as_secs_f64());
        let xv = x.select_rows(&test);
        let yv: Vec<_> = test.iter().map(|&i| y[i]).collect();
        let start = Instant::now();
        let pred = model.predict_rows(&xv)?;
        predict_s.push(start.elapsed().as_secs_f64());
        accs.push(accuracy(&pred, &yv));
    }
    Ok(CrossValReport::from_folds(accs, train_s, predict_s))
}

/// One row of the per-model report.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelReportRow {
    pub kind: String,
    pub validation: Option<ValidationReport>,
    pub cv: Option<CrossValReport>,
    pub train_seconds: f64,
    pub predict_seconds: f64,
}

pub const REPORT_HEADER: [&str; 9] = [
    "kind",
    "FoM",
    "PA",
    "UA",
    "OA",
    "cv_mean",
    "cv_spread",
    "train_s",
    "predict_s",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_report_csv(path: impl AsRef<Path>, rows: &[ModelReportRow]) -> Result<()> {
    let path = path.as_ref();
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    w.write_record(REPORT_HEADER).map_err(to_err)?;
    for r in rows {
        let v = r.validation;
        w.write_record([
            r.kind.clone(),
            opt(v.and_then(|v| v.fom)),
            opt(v.and_then(|v| v.pa)),
            opt(v.and_then(|v| v.ua)),
            opt(v.and_then(|v| v.oa)),
            opt(r.cv.as_ref().map(|c| c.mean)),
            opt(r.cv.as_ref().map(|c| c.spread)),
            format!("{:.3}", r.train_seconds),
            format!("{:.3}", r.predict_seconds),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
