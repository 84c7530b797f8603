//! Feature correlations, regional price effects, and the Hong Kong
//! relabeling counterfactual.

use std::fmt::Write as _;

use crate::adadelta::fit_adadelta;
use crate::data::{
    FeatureSchema, Hull, Region, RegionScheme, SailboatRecord, StandardizationParams, TargetVector,
    TECHNICAL_FEATURES,
};
use crate::error::{Error, Result};
use crate::evaluation::{FittedModel, ModelFamily};
use crate::kv::fmt_f64;
use crate::linear::{fit_gd, fit_ols, LinearModel};
use crate::rng::XorShift64Star;

/// Default number of listings relabeled by [`hk_counterfactual`].
pub const DEFAULT_COUNTERFACTUAL_SAMPLE: usize = 3000;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub feature: String,
    /// Pearson r with listing price; for the 0/1 hull code this is the
    /// point-biserial correlation.
    pub pearson_r: f64,
    pub trend_slope: f64,
    pub trend_intercept: f64,
    pub n: usize,
}

/// Pearson correlation of two equal-length series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let (_, _, sxx, syy, sxy) = moments(x, y)?;
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance(if sxx == 0.0 { "x" } else { "y" }.into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Least-squares line `y = slope x + intercept`.
pub fn trend_line(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let (mx, my, sxx, _, sxy) = moments(x, y)?;
    if sxx == 0.0 {
        return Err(Error::ZeroVariance("x".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn moments(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            actual: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Ok((mx, my, sxx, syy, sxy))
}

/// Columns analyzed by [`correlate_features`]: the technical features, then
/// GDP columns when every record has them.
pub fn correlation_columns(records: &[SailboatRecord]) -> Vec<&'static str> {
    let mut cols = TECHNICAL_FEATURES.to_vec();
    if !records.is_empty() && records.iter().all(|r| r.gdp.is_some()) {
        cols.push("gdp");
    }
    if !records.is_empty() && records.iter().all(|r| r.gdp_per_capita.is_some()) {
        cols.push("gdp_per_capita");
    }
    cols
}

/// Correlation and univariate trend of each column against price.
pub fn correlate_features(records: &[SailboatRecord]) -> Result<Vec<CorrelationResult>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let prices: Vec<f64> = records.iter().map(|r| r.listing_price).collect();
    correlation_columns(records)
        .into_iter()
        .map(|col| {
            let xs = column_values(records, col)?;
            let pearson_r = pearson(&xs, &prices).map_err(|e| match e {
                Error::ZeroVariance(_) => Error::ZeroVarianceColumn(col.to_string()),
                other => other,
            })?;
            let (trend_slope, trend_intercept) = trend_line(&xs, &prices)?;
            Ok(CorrelationResult {
                feature: col.to_string(),
                pearson_r,
                trend_slope,
                trend_intercept,
                n: records.len(),
            })
        })
        .collect()
}

pub fn column_values(records: &[SailboatRecord], column: &str) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| r.numeric(column)?.ok_or_else(|| Error::MissingColumn(column.to_string())))
        .collect()
}

pub fn correlations_csv(results: &[CorrelationResult]) -> String {
    let mut out = String::from("feature,pearson_r,trend_slope,trend_intercept,n\n");
    for c in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.feature,
            fmt_f64(c.pearson_r),
            fmt_f64(c.trend_slope),
            fmt_f64(c.trend_intercept),
            c.n
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalEffects {
    pub scheme: RegionScheme,
    pub base: Region,
    /// Every level of the scheme, the base at 0, in scheme order.
    pub effects: Vec<(Region, f64)>,
    pub model: LinearModel,
}

impl RegionalEffects {
    pub fn effect(&self, region: Region) -> Option<f64> {
        self.effects.iter().find(|(r, _)| *r == region).map(|(_, v)| *v)
    }
}

/// Fits a linear family on the technical features plus region dummies
/// (the `base` level dropped) and reads off each region's price shift
/// relative to `base`.
pub fn fit_regional(
    records: &[SailboatRecord],
    family: &ModelFamily,
    scheme: RegionScheme,
    base: Region,
) -> Result<RegionalEffects> {
    if !family.is_linear() {
        return Err(Error::InvalidConfig(format!(
            "regional effects need a linear model, not {}",
            family.name()
        )));
    }
    if !scheme.levels().contains(&base) {
        return Err(Error::UnknownRegion {
            region: base.name().to_string(),
            scheme: scheme.name().to_string(),
        });
    }
    let mut present: Vec<Region> = records.iter().map(|r| r.region).collect();
    present.sort();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::SingleRegion);
    }
    let schema = FeatureSchema::with_region_base(&TECHNICAL_FEATURES, Some(scheme), Some(base))?;
    let raw = schema.extract(records)?;
    let y = TargetVector::from_records(records);
    let x = if family.standardizes_by_default() {
        raw.standardized_with(&StandardizationParams::estimate(&raw)?)?
    } else {
        raw
    };
    let model = match family {
        ModelFamily::Ols => fit_ols(&x, &y)?,
        ModelFamily::Gd(c) => fit_gd(&x, &y, c)?.0,
        ModelFamily::Adadelta(c) => fit_adadelta(&x, &y, c)?.0,
        ModelFamily::Gbr(_) => unreachable!("rejected above"),
    };
    let effects = scheme
        .levels()
        .iter()
        .map(|&r| {
            let v = if r == base {
                0.0
            } else {
                model
                    .coefficient(&format!("region_{}", r.name()))
                    .ok_or_else(|| Error::MissingColumn(format!("region_{}", r.name())))?
            };
            Ok((r, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionalEffects {
        scheme,
        base,
        effects,
        model,
    })
}

pub fn regional_csv(effects: &RegionalEffects) -> String {
    let mut out = String::from("region,effect_usd\n");
    for (r, v) in &effects.effects {
        let _ = writeln!(out, "{},{}", r.name(), fmt_f64(*v));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualRow {
    pub id: String,
    pub hull: Hull,
    pub original_region: Region,
    pub pred_original: f64,
    pub pred_hk: f64,
    /// `pred_hk - pred_original`, evaluated through the region terms only.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullSummary {
    pub hull: Hull,
    pub count: usize,
    pub mean_original: f64,
    pub mean_hk: f64,
    pub mean_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Counterfactual {
    pub rows: Vec<CounterfactualRow>,
}

impl Counterfactual {
    pub fn by_hull(&self, hull: Hull) -> Vec<&CounterfactualRow> {
        self.rows.iter().filter(|r| r.hull == hull).collect()
    }

    /// One summary per hull type present, monohull first.
    pub fn summaries(&self) -> Vec<HullSummary> {
        [Hull::Monohull, Hull::Catamaran]
            .into_iter()
            .filter_map(|hull| {
                let rows = self.by_hull(hull);
                if rows.is_empty() {
                    return None;
                }
                let n = rows.len() as f64;
                let mean = |f: fn(&CounterfactualRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
                Some(HullSummary {
                    hull,
                    count: rows.len(),
                    mean_original: mean(|r| r.pred_original),
                    mean_hk: mean(|r| r.pred_hk),
                    mean_delta: mean(|r| r.delta),
                })
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,hull,original_region,pred_original,pred_hk,delta\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.id,
                r.hull,
                r.original_region,
                fmt_f64(r.pred_original),
                fmt_f64(r.pred_hk),
                fmt_f64(r.delta)
            );
        }
        out
    }
}

/// Relabels a seeded sample of non-Hong-Kong listings as Hong Kong and
/// predicts each both ways with a model that includes a four-region group.
///
/// The sample is `min(sample_size, available)` listings drawn by shuffling
/// with `seed`, reported in input order. Because only the region columns
/// change, `delta` is the dot product of the model coefficients with the
/// change in those columns, which is exactly the difference of the two
/// region coefficients.
pub fn hk_counterfactual(
    model: &FittedModel,
    records: &[SailboatRecord],
    sample_size: usize,
    seed: u64,
) -> Result<Counterfactual> {
    let linear = match model {
        FittedModel::Linear(m) => m,
        FittedModel::Boosted(_) => {
            return Err(Error::InvalidConfig("the counterfactual needs a linear model".into()))
        }
    };
    let group = linear
        .schema
        .region_group()
        .ok_or_else(|| Error::SchemaMismatch("model has no region columns".into()))?;
    if !group.group_levels.iter().flatten().any(|l| l == Region::HongKong.name()) {
        return Err(Error::SchemaMismatch("model regions do not include hong_kong".into()));
    }
    let mut candidates: Vec<usize> = (0..records.len())
        .filter(|&i| records[i].region != Region::HongKong)
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyInput);
    }
    XorShift64Star::new(seed).shuffle(&mut candidates);
    candidates.truncate(sample_size.min(candidates.len()));
    candidates.sort_unstable();

    let originals: Vec<SailboatRecord> = candidates.iter().map(|&i| records[i].clone()).collect();
    let relabeled: Vec<SailboatRecord> = originals
        .iter()
        .map(|r| SailboatRecord {
            region: Region::HongKong,
            ..r.clone()
        })
        .collect();
    let xo = linear.align(&linear.schema.extract(&originals)?)?;
    let xh = linear.align(&linear.schema.extract(&relabeled)?)?;
    let rows = originals
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let (ro, rh) = (xo.row(i), xh.row(i));
            let delta: f64 = ro
                .iter()
                .zip(rh)
                .zip(&linear.coefficients)
                .filter(|((a, b), _)| a != b)
                .map(|((a, b), c)| c * (b - a))
                .sum();
            CounterfactualRow {
                id: r.id.clone(),
                hull: r.hull,
                original_region: r.region,
                pred_original: linear.predict_row(ro),
                pred_hk: linear.predict_row(rh),
                delta,
            }
        })
        .collect();
    Ok(Counterfactual { rows })
}

/// Model for the counterfactual: the linear family on technical features
/// plus four-region dummies with the Caribbean as base.
pub fn fit_four_region(records: &[SailboatRecord], family: &ModelFamily) -> Result<FittedModel> {
    let effects = fit_regional(records, family, RegionScheme::FourRegionHK, Region::Caribbean)?;
    Ok(FittedModel::Linear(effects.model))
}
