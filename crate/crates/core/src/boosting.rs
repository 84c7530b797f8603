//! Gradient-boosted regression trees under squared loss.
//!
//! The ensemble starts from the training mean and adds one shrunk tree per
//! round, each fitted to the current residuals. An optional L2 penalty on leaf
//! values both shrinks each leaf toward zero and is charged in the reported
//! training loss.

use std::fmt::Write as _;

use crate::data::{align_to, FeatureMatrix, FeatureSchema, StandardizationParams, TargetVector};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::metrics;
use crate::tree::{fit_tree_sorted, SortedColumns, TreeConfig, TreeNode};

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub n_iters: usize,
    /// Shrinkage applied to every tree, in (0, 1].
    pub learning_rate: f64,
    /// Penalty on leaf values; 0 disables it.
    pub l2_lambda: f64,
    pub tree: TreeConfig,
    /// Stop once a round lowers the loss by less than `tol * initial loss`.
    pub tol: f64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            n_iters: 500,
            learning_rate: 0.1,
            l2_lambda: 0.0,
            tree: TreeConfig::default(),
            tol: 1e-10,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must lie in (0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("l2 lambda must be >= 0, got {}", self.l2_lambda)));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidConfig(format!("tol must be >= 0, got {}", self.tol)));
        }
        self.tree.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedEnsemble {
    pub schema: FeatureSchema,
    pub standardization: Option<StandardizationParams>,
    pub initial_prediction: f64,
    /// Stored unshrunk; predictions scale each by `learning_rate`.
    pub trees: Vec<TreeNode>,
    pub learning_rate: f64,
    pub l2_lambda: f64,
}

impl BoostedEnsemble {
    /// Number of fitted rounds.
    pub fn n_iters(&self) -> usize {
        self.trees.len()
    }

    /// Prediction for one row already in model coordinates.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.eval(row)).sum();
        self.initial_prediction + self.learning_rate * sum
    }

    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::default();
        kv.push("kind", "gbr");
        self.schema.write_kv(&mut kv);
        if let Some(p) = &self.standardization {
            p.write_kv(&mut kv);
        }
        kv.push_f64("initial", self.initial_prediction);
        kv.push_f64("alpha", self.learning_rate);
        kv.push_f64("lambda", self.l2_lambda);
        kv.push("n_iters", self.trees.len().to_string());
        let mut out = kv.render();
        out.push_str("[trees]\n");
        for t in &self.trees {
            out.push_str(&t.to_text());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (head, body) = match text.split_once("[trees]") {
            Some(parts) => parts,
            None => return Err(Error::Parse("missing [trees] section".into())),
        };
        let kv = KeyValues::parse(head)?;
        let n_iters: usize = kv
            .get_parsed("n_iters")?
            .ok_or_else(|| Error::Parse("missing key n_iters".into()))?;
        let schema = FeatureSchema::read_kv(&kv)?;
        let mut lines = body.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut trees = Vec::with_capacity(n_iters);
        for _ in 0..n_iters {
            let tree = TreeNode::parse_lines(&mut lines)?;
            if tree.required_width() > schema.width() {
                return Err(Error::Parse("tree splits on a column outside the schema".into()));
            }
            trees.push(tree);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("more trees than n_iters".into()));
        }
        Ok(Self {
            standardization: StandardizationParams::read_kv(&kv)?,
            schema,
            initial_prediction: kv.require_f64("initial")?,
            trees,
            learning_rate: kv.require_f64("alpha")?,
            l2_lambda: kv.require_f64("lambda")?,
        })
    }
}

/// Residuals `y - ŷ`: half the negative gradient of `(y - ŷ)²` in `ŷ`.
pub fn negative_gradient(targets: &[f64], predictions: &[f64]) -> Result<Vec<f64>> {
    metrics::residuals(targets, predictions)
}

/// Fits the ensemble, returning it with the per-round training loss
/// `MSE + lambda * Σ (alpha v)²` over every leaf value `v` added so far.
/// The trace starts with the loss of the constant model.
///
/// Each leaf value is `Σ r / (count + lambda n)`, the minimizer of the
/// round's contribution to that loss when `alpha` is 1; with smaller
/// `alpha` the step is a convex combination of that minimizer and zero, so
/// the loss never rises.
pub fn fit_boosted(x: &FeatureMatrix, y: &TargetVector, config: &BoostConfig) -> Result<(BoostedEnsemble, Vec<f64>)> {
    config.validate()?;
    let n = x.n_rows();
    if n != y.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: y.len(),
        });
    }
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, actual: n });
    }
    let nf = n as f64;
    let alpha = config.learning_rate;
    let lambda = config.l2_lambda;
    let initial = metrics::pairwise_sum(&y.values) / nf;
    let mut preds = vec![initial; n];
    let mut penalty = 0.0;
    let mut loss = metrics::mse(&y.values, &preds)?;
    let threshold = config.tol * loss;
    let mut trace = vec![loss];
    let mut trees = Vec::new();
    let sorted = SortedColumns::new(x.as_slice(), x.n_cols(), n);

    for round in 0..config.n_iters {
        let r = negative_gradient(&y.values, &preds)?;
        let mut tree = fit_tree_sorted(x.as_slice(), x.n_cols(), &r, &config.tree, &sorted)?;
        let leaves = tree.n_leaves();
        let mut sums = vec![0.0; leaves];
        let mut counts = vec![0usize; leaves];
        let ids: Vec<usize> = x.rows().map(|row| tree.leaf_id(row)).collect();
        for (&id, ri) in ids.iter().zip(&r) {
            sums[id] += ri;
            counts[id] += 1;
        }
        let values: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, &c)| if c == 0 { 0.0 } else { s / (c as f64 + lambda * nf) })
            .collect();
        tree.set_leaf_values(&|id| values[id]);
        for (p, &id) in preds.iter_mut().zip(&ids) {
            *p += alpha * values[id];
        }
        penalty += lambda * values.iter().map(|v| (alpha * v) * (alpha * v)).sum::<f64>();
        let next = metrics::mse(&y.values, &preds)? + penalty;
        if !next.is_finite() {
            return Err(Error::NonFiniteLoss(round + 1));
        }
        trees.push(tree);
        trace.push(next);
        let improvement = loss - next;
        loss = next;
        if improvement <= 0.0 || improvement < threshold {
            break;
        }
    }

    let ensemble = BoostedEnsemble {
        schema: x.schema().clone(),
        standardization: x.standardization().cloned(),
        initial_prediction: initial,
        trees,
        learning_rate: alpha,
        l2_lambda: lambda,
    };
    Ok((ensemble, trace))
}

pub fn predict_boosted(ensemble: &BoostedEnsemble, x: &FeatureMatrix) -> Result<TargetVector> {
    let x = align_to(&ensemble.schema, ensemble.standardization.as_ref(), x)?;
    Ok(TargetVector {
        values: x.rows().map(|r| ensemble.predict_row(r)).collect(),
    })
}

/// Loss trace as `iteration,loss` CSV.
pub fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", crate::kv::fmt_f64(*l));
    }
    out
}
