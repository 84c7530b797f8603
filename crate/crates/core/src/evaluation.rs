//! Seeded two-way splits, the swap protocol, and side-by-side comparison of
//! model families.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::adadelta::{fit_adadelta, AdadeltaConfig};
use crate::boosting::{fit_boosted, predict_boosted, BoostConfig, BoostedEnsemble};
use crate::data::{build_design_matrix, FeatureMatrix, FeatureSchema, RegionScheme, SailboatRecord, TargetVector, TECHNICAL_FEATURES};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::linear::{fit_gd, fit_ols, GdConfig, LinearModel};
use crate::metrics::EvalReport;
use crate::rng::XorShift64Star;

/// Swap gaps above this fraction are flagged in comparison output.
pub const SWAP_GAP_WARNING: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFamily {
    Ols,
    Gd(GdConfig),
    Adadelta(AdadeltaConfig),
    Gbr(BoostConfig),
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Ols => "ols",
            ModelFamily::Gd(_) => "gd",
            ModelFamily::Adadelta(_) => "adadelta",
            ModelFamily::Gbr(_) => "gbr",
        }
    }

    /// The family with default settings, by CLI name.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ols" => ModelFamily::Ols,
            "gd" => ModelFamily::Gd(GdConfig::default()),
            "adadelta" => ModelFamily::Adadelta(AdadeltaConfig::default()),
            "gbr" => ModelFamily::Gbr(BoostConfig::default()),
            other => return Err(Error::InvalidConfig(format!("unknown model family {other:?}"))),
        })
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, ModelFamily::Gbr(_))
    }

    /// The iterative linear trainers need standardized inputs.
    pub fn standardizes_by_default(&self) -> bool {
        matches!(self, ModelFamily::Gd(_) | ModelFamily::Adadelta(_))
    }
}

/// A family plus the design it is fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: ModelFamily,
    pub features: Vec<String>,
    pub regions: Option<RegionScheme>,
    pub drop_base: bool,
    pub standardize: bool,
}

impl ModelSpec {
    /// All technical features, no regions, the family's default scaling.
    pub fn new(family: ModelFamily) -> Self {
        Self {
            standardize: family.standardizes_by_default(),
            family,
            features: TECHNICAL_FEATURES.iter().map(|s| s.to_string()).collect(),
            regions: None,
            drop_base: true,
        }
    }

    pub fn with_regions(mut self, scheme: RegionScheme) -> Self {
        self.regions = Some(scheme);
        self
    }

    pub fn name(&self) -> &'static str {
        self.family.name()
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        let features: Vec<&str> = self.features.iter().map(String::as_str).collect();
        FeatureSchema::from_selection(&features, self.regions, self.drop_base)
    }

    pub fn design(&self, records: &[SailboatRecord]) -> Result<(FeatureMatrix, TargetVector)> {
        let features: Vec<&str> = self.features.iter().map(String::as_str).collect();
        let (x, y, _) = build_design_matrix(records, &features, self.regions, self.drop_base, self.standardize)?;
        Ok((x, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Linear(LinearModel),
    Boosted(BoostedEnsemble),
}

impl FittedModel {
    pub fn schema(&self) -> &FeatureSchema {
        match self {
            FittedModel::Linear(m) => &m.schema,
            FittedModel::Boosted(e) => &e.schema,
        }
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Result<TargetVector> {
        match self {
            FittedModel::Linear(m) => m.predict(x),
            FittedModel::Boosted(e) => predict_boosted(e, x),
        }
    }

    /// Predicts listings directly; standardization is applied from the
    /// stored training statistics.
    pub fn predict(&self, records: &[SailboatRecord]) -> Result<TargetVector> {
        self.predict_matrix(&self.schema().extract(records)?)
    }

    pub fn to_text(&self) -> String {
        match self {
            FittedModel::Linear(m) => m.to_text(),
            FittedModel::Boosted(e) => e.to_text(),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let head = text.split("[trees]").next().unwrap_or("");
        let kind = KeyValues::parse(head)?.require("kind")?.to_string();
        match kind.as_str() {
            "linear" => Ok(FittedModel::Linear(LinearModel::from_text(text)?)),
            "gbr" => Ok(FittedModel::Boosted(BoostedEnsemble::from_text(text)?)),
            other => Err(Error::Parse(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: FittedModel,
    /// Training loss per iteration; OLS reports its single final loss.
    pub loss_trace: Vec<f64>,
}

pub fn fit_model(spec: &ModelSpec, records: &[SailboatRecord]) -> Result<FitOutcome> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (x, y) = spec.design(records)?;
    match &spec.family {
        ModelFamily::Ols => {
            let m = fit_ols(&x, &y)?;
            let loss = crate::linear::loss_l2(&x, &y, &m, 0.0)?;
            Ok(FitOutcome {
                model: FittedModel::Linear(m),
                loss_trace: vec![loss],
            })
        }
        ModelFamily::Gd(c) => {
            let (m, loss_trace) = fit_gd(&x, &y, c)?;
            Ok(FitOutcome {
                model: FittedModel::Linear(m),
                loss_trace,
            })
        }
        ModelFamily::Adadelta(c) => {
            let (m, loss_trace) = fit_adadelta(&x, &y, c)?;
            Ok(FitOutcome {
                model: FittedModel::Linear(m),
                loss_trace,
            })
        }
        ModelFamily::Gbr(c) => {
            let (e, loss_trace) = fit_boosted(&x, &y, c)?;
            Ok(FitOutcome {
                model: FittedModel::Boosted(e),
                loss_trace,
            })
        }
    }
}

/// A partition of record ids into two halves.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub seed: u64,
    pub half_a_ids: Vec<String>,
    pub half_b_ids: Vec<String>,
}

impl SplitPlan {
    /// A manual split; halves must be nonempty and disjoint.
    pub fn new(seed: u64, half_a_ids: Vec<String>, half_b_ids: Vec<String>) -> Result<Self> {
        if half_a_ids.is_empty() || half_b_ids.is_empty() {
            return Err(Error::TooFewRows {
                needed: 2,
                actual: half_a_ids.len() + half_b_ids.len(),
            });
        }
        let mut seen = HashSet::new();
        for id in half_a_ids.iter().chain(&half_b_ids) {
            if !seen.insert(id.as_str()) {
                return Err(Error::InvalidConfig(format!("id {id:?} appears twice in the split")));
            }
        }
        Ok(Self {
            seed,
            half_a_ids,
            half_b_ids,
        })
    }

    /// Records of each half, in plan order.
    pub fn partition(&self, records: &[SailboatRecord]) -> Result<(Vec<SailboatRecord>, Vec<SailboatRecord>)> {
        let mut by_id: HashMap<&str, &SailboatRecord> = HashMap::with_capacity(records.len());
        for r in records {
            if by_id.insert(r.id.as_str(), r).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate record id {:?}", r.id)));
            }
        }
        let pick = |ids: &[String]| -> Result<Vec<SailboatRecord>> {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|r| (*r).clone())
                        .ok_or_else(|| Error::InvalidConfig(format!("split id {id:?} not in the data")))
                })
                .collect()
        };
        Ok((pick(&self.half_a_ids)?, pick(&self.half_b_ids)?))
    }
}

/// Shuffles `ids` (Fisher-Yates, [`XorShift64Star`] seeded with `seed`) and
/// assigns the first `ceil(n / 2)` to half A.
pub fn make_split(ids: &[String], seed: u64) -> Result<SplitPlan> {
    if ids.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            actual: ids.len(),
        });
    }
    let mut shuffled = ids.to_vec();
    XorShift64Star::new(seed).shuffle(&mut shuffled);
    let b = shuffled.split_off(ids.len().div_ceil(2));
    SplitPlan::new(seed, shuffled, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapResult {
    /// Trained on A, tested on B.
    pub forward: EvalReport,
    /// Trained on B, tested on A.
    pub backward: EvalReport,
    pub forward_trace: Vec<f64>,
    pub backward_trace: Vec<f64>,
    pub relative_mse_gap: f64,
    pub relative_mae_gap: f64,
}

impl SwapResult {
    pub fn flagged(&self) -> bool {
        self.relative_mse_gap > SWAP_GAP_WARNING || self.relative_mae_gap > SWAP_GAP_WARNING
    }
}

/// `|a - b| / min(a, b)`, 0 when both are 0.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    let lo = a.min(b);
    if a == b {
        0.0
    } else if lo == 0.0 {
        f64::INFINITY
    } else {
        (a - b).abs() / lo
    }
}

fn train_and_test(spec: &ModelSpec, train: &[SailboatRecord], test: &[SailboatRecord], split: &str) -> Result<(EvalReport, Vec<f64>)> {
    let outcome = fit_model(spec, train)?;
    let predicted = outcome.model.predict(test)?;
    let actual = TargetVector::from_records(test);
    let report = EvalReport::evaluate(spec.name(), split, &actual.values, &predicted.values)?;
    Ok((report, outcome.loss_trace))
}

/// Trains on each half and tests on the other. The two directions share
/// nothing, so they run on separate threads.
pub fn run_swap(records: &[SailboatRecord], spec: &ModelSpec, split: &SplitPlan) -> Result<SwapResult> {
    let (a, b) = split.partition(records)?;
    let (fwd, bwd) = std::thread::scope(|s| {
        let h = s.spawn(|| train_and_test(spec, &b, &a, "b->a"));
        let fwd = train_and_test(spec, &a, &b, "a->b");
        (fwd, h.join().expect("swap worker panicked"))
    });
    let (forward, forward_trace) = fwd?;
    let (backward, backward_trace) = bwd?;
    Ok(SwapResult {
        relative_mse_gap: relative_gap(forward.mse, backward.mse),
        relative_mae_gap: relative_gap(forward.mae, backward.mae),
        forward,
        backward,
        forward_trace,
        backward_trace,
    })
}

/// Forward-direction (train A, test B) reports, one per spec in order.
pub fn compare_models(records: &[SailboatRecord], specs: &[ModelSpec], split: &SplitPlan) -> Result<Vec<EvalReport>> {
    let (a, b) = split.partition(records)?;
    specs
        .iter()
        .map(|spec| train_and_test(spec, &a, &b, "a->b").map(|(r, _)| r))
        .collect()
}

pub fn metrics_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("model,split,n,mse,mae\n");
    for r in reports {
        let _ = writeln!(out, "{},{},{},{},{}", r.model_name, r.split_name, r.n, crate::kv::fmt_f64(r.mse), crate::kv::fmt_f64(r.mae));
    }
    out
}

pub fn swap_csv(results: &[SwapResult]) -> String {
    let mut out = String::from("model,mse_a_b,mse_b_a,mse_gap,mae_a_b,mae_b_a,mae_gap,flagged\n");
    for s in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.forward.model_name,
            crate::kv::fmt_f64(s.forward.mse),
            crate::kv::fmt_f64(s.backward.mse),
            crate::kv::fmt_f64(s.relative_mse_gap),
            crate::kv::fmt_f64(s.forward.mae),
            crate::kv::fmt_f64(s.backward.mae),
            crate::kv::fmt_f64(s.relative_mae_gap),
            s.flagged()
        );
    }
    out
}

/// Markdown table of the forward reports, with swap gaps when available.
pub fn comparison_markdown(reports: &[EvalReport], swaps: &[SwapResult]) -> String {
    let mut out = String::from("| model | n | MSE | MAE | RMSE |\n|---|---:|---:|---:|---:|\n");
    for r in reports {
        let _ = writeln!(out, "| {} | {} | {:.4e} | {:.2} | {:.2} |", r.model_name, r.n, r.mse, r.mae, r.mse.sqrt());
    }
    if !swaps.is_empty() {
        out.push_str("\n| model | MSE A->B | MSE B->A | MSE gap | MAE gap | |\n|---|---:|---:|---:|---:|---|\n");
        for s in swaps {
            let _ = writeln!(
                out,
                "| {} | {:.4e} | {:.4e} | {:.2}% | {:.2}% | {} |",
                s.forward.model_name,
                s.forward.mse,
                s.backward.mse,
                100.0 * s.relative_mse_gap,
                100.0 * s.relative_mae_gap,
                if s.flagged() { "gap > 10%" } else { "" }
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticSpec};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("r{i}")).collect()
    }

    #[test]
    fn split_sizes_and_coverage() {
        for n in [2, 3, 10, 101] {
            let plan = make_split(&ids(n), 9).unwrap();
            assert_eq!(plan.half_a_ids.len(), n.div_ceil(2));
            assert_eq!(plan.half_b_ids.len(), n / 2);
            let mut all: Vec<_> = plan.half_a_ids.iter().chain(&plan.half_b_ids).cloned().collect();
            all.sort();
            let mut expected = ids(n);
            expected.sort();
            assert_eq!(all, expected);
        }
        assert!(matches!(make_split(&ids(1), 0), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn split_is_seeded() {
        assert_eq!(make_split(&ids(50), 3).unwrap(), make_split(&ids(50), 3).unwrap());
        assert_ne!(make_split(&ids(50), 3).unwrap(), make_split(&ids(50), 4).unwrap());
    }

    #[test]
    fn manual_split_validation() {
        assert!(SplitPlan::new(0, vec!["a".into()], vec!["a".into()]).is_err());
        assert!(SplitPlan::new(0, vec![], vec!["a".into()]).is_err());
    }

    #[test]
    fn gap_definition() {
        assert_eq!(relative_gap(1.0, 1.1), relative_gap(1.1, 1.0));
        assert!((relative_gap(1.0, 1.1) - 0.1).abs() < 1e-12);
        assert_eq!(relative_gap(0.0, 0.0), 0.0);
        assert!(relative_gap(0.0, 1.0).is_infinite());
    }

    #[test]
    fn duplicated_halves_give_equal_directions() {
        let base = generate_synthetic(&SyntheticSpec {
            noise_std: 5_000.0,
            ..SyntheticSpec::paper_like(60, 11)
        })
        .unwrap();
        let copy: Vec<SailboatRecord> = base
            .iter()
            .map(|r| SailboatRecord {
                id: format!("{}-copy", r.id),
                ..r.clone()
            })
            .collect();
        let all: Vec<SailboatRecord> = base.iter().chain(&copy).cloned().collect();
        let plan = SplitPlan::new(
            0,
            base.iter().map(|r| r.id.clone()).collect(),
            copy.iter().map(|r| r.id.clone()).collect(),
        )
        .unwrap();
        for family in ["ols", "gd", "gbr"] {
            let spec = ModelSpec::new(ModelFamily::from_name(family).unwrap());
            let swap = run_swap(&all, &spec, &plan).unwrap();
            assert_eq!(swap.forward.mse, swap.backward.mse, "{family}");
            assert_eq!(swap.relative_mse_gap, 0.0);
        }
    }

    #[test]
    fn test_half_does_not_leak_into_training() {
        let recs = generate_synthetic(&SyntheticSpec::paper_like(80, 5)).unwrap();
        let plan = make_split(&recs.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), 1).unwrap();
        let (a, _) = plan.partition(&recs).unwrap();
        let spec = ModelSpec::new(ModelFamily::from_name("gd").unwrap());
        let before = fit_model(&spec, &a).unwrap();
        let mut perturbed = recs.clone();
        for r in perturbed.iter_mut().filter(|r| plan.half_b_ids.contains(&r.id)) {
            r.listing_price *= 3.0;
            r.length_ft += 1.0;
            r.waterline_ft = r.length_ft * 0.8;
        }
        let (a2, _) = plan.partition(&perturbed).unwrap();
        assert_eq!(fit_model(&spec, &a2).unwrap(), before);
    }

    #[test]
    fn fitted_model_text_round_trip() {
        let recs = generate_synthetic(&SyntheticSpec::paper_like(100, 2)).unwrap();
        for family in ["ols", "adadelta", "gbr"] {
            let mut spec = ModelSpec::new(ModelFamily::from_name(family).unwrap()).with_regions(RegionScheme::ThreeRegion);
            if let ModelFamily::Gbr(c) = &mut spec.family {
                c.n_iters = 10;
            }
            let m = fit_model(&spec, &recs).unwrap().model;
            let back = FittedModel::from_text(&m.to_text()).unwrap();
            assert_eq!(back.predict(&recs).unwrap(), m.predict(&recs).unwrap());
        }
    }

    #[test]
    fn csv_and_markdown_shapes() {
        let r = EvalReport::evaluate("ols", "a->b", &[1.0, 2.0], &[1.5, 2.0]).unwrap();
        let csv = metrics_csv(&[r.clone()]);
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("model,split,n,mse,mae\n"));
        assert!(comparison_markdown(&[r], &[]).contains("| ols | 2 |"));
    }
}
