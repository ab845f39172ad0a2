use serde::{Deserialize, Serialize};

use super::{make_sequence, mode_for, window_for, ExperimentSpec};
use crate::adkernel::{apply, AdKernel};
use crate::error::{invalid, Result};
use crate::seqspace::norm;
use crate::stats::{linear_fit, r_squared};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRecord {
    #[serde(rename = "N")]
    pub n: u32,
    pub norm_in: f64,
    pub norm_out: f64,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthModel {
    Bounded,
    Log,
    Power,
}

impl GrowthModel {
    pub fn name(&self) -> &'static str {
        match self {
            GrowthModel::Bounded => "bounded",
            GrowthModel::Log => "log",
            GrowthModel::Power => "power",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub model: GrowthModel,
    /// Slope of `ln y` against `ln N`.
    pub alpha: f64,
    /// `y ≈ log_a + log_c ln N`.
    pub log_a: f64,
    pub log_c: f64,
    pub log_r2: f64,
    /// `R²` of the power model, measured in log-log coordinates.
    pub power_r2: f64,
    /// `R²` of the selected model.
    pub r2: f64,
    /// `|y_last / y_prev - 1|`.
    pub last_change: f64,
    /// Number of ladder points the fit used.
    pub points: usize,
}

/// Fits `a + c ln N` and `C N^α` on the upper half of the ladder.
///
/// `bounded` is declared when `α < 0.02` and the last step changes `y` by less than 2%. Otherwise the
/// model with the smaller residual sum of squares in `y` wins.
pub fn fit_growth(ns: &[u32], ys: &[f64]) -> Result<GrowthFit> {
    if ns.len() != ys.len() || ns.len() < 2 {
        return Err(invalid("growth fit needs at least two ladder points"));
    }
    if ys.iter().any(|y| !(*y > 0.0 && y.is_finite())) {
        return Err(invalid("growth fit needs positive finite values"));
    }
    let start = if ns.len() >= 6 { ns.len() / 2 } else { ns.len().saturating_sub(3) };
    let ln_n: Vec<f64> = ns[start..].iter().map(|&n| (n as f64).ln()).collect();
    let y = &ys[start..];
    let ln_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();

    let (log_a, log_c) = linear_fit(&ln_n, y);
    let log_r2 = r_squared(&ln_n, y, log_a, log_c);
    let (pb, alpha) = linear_fit(&ln_n, &ln_y);
    let power_r2 = r_squared(&ln_n, &ln_y, pb, alpha);

    let ssr_log: f64 = ln_n.iter().zip(y).map(|(x, v)| (v - log_a - log_c * x).powi(2)).sum();
    let ssr_pow: f64 = ln_n.iter().zip(y).map(|(x, v)| (v - (pb + alpha * x).exp()).powi(2)).sum();

    let last_change = (ys[ys.len() - 1] / ys[ys.len() - 2] - 1.0).abs();
    let (model, r2) = if alpha < 0.02 && last_change < 0.02 {
        (GrowthModel::Bounded, power_r2)
    } else if ssr_log <= ssr_pow {
        (GrowthModel::Log, log_r2)
    } else {
        (GrowthModel::Power, power_r2)
    };
    Ok(GrowthFit { model, alpha, log_a, log_c, log_r2, power_r2, r2, last_change, points: y.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthSeries {
    pub records: Vec<GrowthRecord>,
    /// Fit of the ratio `‖Bt‖/‖t‖`.
    pub fit: GrowthFit,
    /// Fit of `‖Bt‖` alone.
    pub out_fit: GrowthFit,
}

impl GrowthSeries {
    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ratio).collect()
    }
}

/// Applies `B^{DEF}` without truncation to `t^{(N)}` for each ladder point and fits the growth.
pub fn growth_run(spec: &ExperimentSpec) -> Result<GrowthSeries> {
    spec.validate()?;
    let family = spec.reducing_family()?;
    let mode = mode_for(family.as_ref());
    let kernel = AdKernel::analytic(spec.kernel);
    let mut records = Vec::with_capacity(spec.ladder.len());
    for &big_n in &spec.ladder {
        let window = window_for(spec, big_n)?;
        let t = make_sequence(spec, big_n)?;
        let norm_in = norm(&t, &spec.space, mode, &window)?.value;
        let out = apply(&kernel, &t, &window)?.output;
        let norm_out = norm(&out, &spec.space, mode, &window)?.value;
        records.push(GrowthRecord { n: big_n, norm_in, norm_out, ratio: norm_out / norm_in });
    }
    let ns: Vec<u32> = records.iter().map(|r| r.n).collect();
    let fit = fit_growth(&ns, &records.iter().map(|r| r.ratio).collect::<Vec<_>>())?;
    let out_fit = fit_growth(&ns, &records.iter().map(|r| r.norm_out).collect::<Vec<_>>())?;
    Ok(GrowthSeries { records, fit, out_fit })
}
