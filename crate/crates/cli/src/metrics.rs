use leapgrid_core::{Model, Tensor2};
use serde::{Deserialize, Serialize};

/// Flows smaller than this (MW) are left out of the percentage error.
pub const MAPE_FLOOR_MW: f64 = 1.0;

/// Rows per forward pass; small enough that activations stay in cache.
pub const INFERENCE_BATCH: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    RegularTest,
    SuperTest,
}

impl SplitName {
    pub const ALL: [SplitName; 3] = [SplitName::Train, SplitName::RegularTest, SplitName::SuperTest];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::RegularTest => "regular_test",
            SplitName::SuperTest => "super_test",
        }
    }
}

/// One line of a metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub seed: u64,
    pub epoch: usize,
    pub split: SplitName,
    pub mse_std: f64,
    pub mse_mw2: f64,
    pub mape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    /// Mean squared error after dividing by the per-line target scale.
    pub mse_std: f64,
    pub mse_mw2: f64,
    /// Percent, over entries with |y| >= 1 MW.
    pub mape: f64,
    /// Largest absolute error per line, MW.
    pub max_abs_error: Vec<f64>,
}

/// Compares predictions with targets, both in MW. `y_std` is the per-line
/// scale used for the standardized error.
pub fn summarize(pred: &Tensor2, target: &Tensor2, y_std: &[f64]) -> ErrorSummary {
    let cols = target.cols();
    let mut sq = 0.0;
    let mut sq_std = 0.0;
    let mut ape = 0.0;
    let mut n_ape = 0usize;
    let mut max_abs_error = vec![0.0f64; cols];
    for i in 0..target.rows() {
        for (j, (p, y)) in pred.row(i).iter().zip(target.row(i)).enumerate() {
            let e = p - y;
            sq += e * e;
            sq_std += (e / y_std[j]) * (e / y_std[j]);
            max_abs_error[j] = max_abs_error[j].max(e.abs());
            if y.abs() >= MAPE_FLOOR_MW {
                ape += (e / y).abs();
                n_ape += 1;
            }
        }
    }
    let n = (target.rows() * cols).max(1) as f64;
    ErrorSummary {
        mse_std: sq_std / n,
        mse_mw2: sq / n,
        mape: if n_ape == 0 { 0.0 } else { 100.0 * ape / n_ape as f64 },
        max_abs_error,
    }
}

/// Physical-unit predictions, `INFERENCE_BATCH` rows at a time.
pub fn predict_all(model: &Model, x: &Tensor2, tau: &Tensor2) -> leapgrid_core::Result<Tensor2> {
    if x.rows() != tau.rows() {
        return Err(leapgrid_core::Error::Shape(format!(
            "{} injection rows vs {} topology rows",
            x.rows(),
            tau.rows()
        )));
    }
    let mut data = Vec::with_capacity(x.rows() * model.standardizer.y_mean.len());
    for start in (0..x.rows()).step_by(INFERENCE_BATCH) {
        let end = (start + INFERENCE_BATCH).min(x.rows());
        let out = model.predict(&x.row_range(start, end), &tau.row_range(start, end))?;
        data.extend_from_slice(out.data());
    }
    Tensor2::from_vec(x.rows(), model.standardizer.y_mean.len(), data)
}

pub fn evaluate(model: &Model, x: &Tensor2, tau: &Tensor2, y: &Tensor2) -> leapgrid_core::Result<ErrorSummary> {
    let pred = predict_all(model, x, tau)?;
    if !pred.is_finite() {
        return Err(leapgrid_core::Error::Numerics("non-finite prediction".into()));
    }
    Ok(summarize(&pred, y, &model.standardizer.y_std))
}

/// Quantile by linear interpolation between order statistics: with values
/// sorted ascending, position `h = (n - 1) p` blends the two neighbours.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
