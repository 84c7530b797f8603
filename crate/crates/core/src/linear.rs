//! Multiple-variable linear price model: closed-form least squares, an
//! L2-penalized gradient-descent trainer, and prediction.

use crate::data::{align_to, FeatureMatrix, FeatureSchema, StandardizationParams, TargetVector};
use crate::error::{Error, Result};
use crate::kv::KeyValues;
use crate::metrics;
use crate::rng::XorShift64Star;

/// Largest raw column magnitude the iterative trainers accept without
/// standardization.
pub const MAX_UNSTANDARDIZED_MAGNITUDE: f64 = 1e3;

/// Relative pivot size below which the normal equations are singular.
const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub schema: FeatureSchema,
    /// Aligned with `schema.column_names()`, in the coordinates of the
    /// matrix the model was fitted on.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub standardization: Option<StandardizationParams>,
}

impl LinearModel {
    pub fn zeros(schema: FeatureSchema, standardization: Option<StandardizationParams>) -> Self {
        let p = schema.width();
        Self {
            schema,
            coefficients: vec![0.0; p],
            intercept: 0.0,
            standardization,
        }
    }

    /// Packs `[intercept, coefficients..]`.
    pub(crate) fn from_params(
        schema: FeatureSchema,
        standardization: Option<StandardizationParams>,
        params: &[f64],
    ) -> Self {
        Self {
            schema,
            intercept: params[0],
            coefficients: params[1..].to_vec(),
            standardization,
        }
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.schema.column_index(name).map(|j| self.coefficients[j])
    }

    pub fn named_coefficients(&self) -> Vec<(String, f64)> {
        self.schema
            .column_names()
            .into_iter()
            .zip(self.coefficients.iter().copied())
            .collect()
    }

    /// Prediction for one row already in model coordinates.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept
            + row
                .iter()
                .zip(&self.coefficients)
                .map(|(x, b)| x * b)
                .sum::<f64>()
    }

    /// Re-expresses `x` in model coordinates (applying the stored
    /// standardization, or undoing a foreign one).
    pub fn align(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        align_to(&self.schema, self.standardization.as_ref(), x)
    }

    pub fn predict(&self, x: &FeatureMatrix) -> Result<TargetVector> {
        let x = self.align(x)?;
        Ok(TargetVector {
            values: x.rows().map(|r| self.predict_row(r)).collect(),
        })
    }

    pub fn write_kv(&self, kv: &mut KeyValues) {
        self.schema.write_kv(kv);
        if let Some(p) = &self.standardization {
            p.write_kv(kv);
        }
        kv.push_f64("intercept", self.intercept);
        for (name, c) in self.named_coefficients() {
            kv.push_f64(format!("coef.{name}"), c);
        }
    }

    pub fn read_kv(kv: &KeyValues) -> Result<Self> {
        let schema = FeatureSchema::read_kv(kv)?;
        let standardization = StandardizationParams::read_kv(kv)?;
        let coefficients = schema
            .column_names()
            .iter()
            .map(|n| kv.require_f64(&format!("coef.{n}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            schema,
            coefficients,
            intercept: kv.require_f64("intercept")?,
            standardization,
        })
    }

    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::default();
        kv.push("kind", "linear");
        self.write_kv(&mut kv);
        kv.render()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_kv(&KeyValues::parse(text)?)
    }
}

fn check_targets(x: &FeatureMatrix, y: &TargetVector) -> Result<()> {
    if x.n_rows() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    Ok(())
}

/// Least squares with an intercept via the normal equations.
///
/// Columns are centered and scaled before forming `ZᵀZ`, which removes the
/// collinearity with the intercept and equilibrates the diagonal; the
/// Cholesky factorization then flags any column whose pivot falls below
/// `1e-10` of its diagonal as rank deficient.
pub fn fit_ols(x: &FeatureMatrix, y: &TargetVector) -> Result<LinearModel> {
    check_targets(x, y)?;
    let (n, p) = (x.n_rows(), x.n_cols());
    if n < p + 1 {
        return Err(Error::TooFewRows {
            needed: p + 1,
            actual: n,
        });
    }
    let names = x.schema().column_names();
    let nf = n as f64;
    let y_mean = metrics::pairwise_sum(&y.values) / nf;
    let mut means = vec![0.0; p];
    let mut scales = vec![0.0; p];
    for j in 0..p {
        let col = x.column(j);
        let mean = metrics::pairwise_sum(&col) / nf;
        let ss: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
        let scale = (metrics::pairwise_sum(&ss) / nf).sqrt();
        if !(scale > 0.0) {
            return Err(Error::RankDeficient {
                column: names[j].clone(),
            });
        }
        means[j] = mean;
        scales[j] = scale;
    }

    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    let mut z = vec![0.0; p];
    for (i, row) in x.rows().enumerate() {
        for j in 0..p {
            z[j] = (row[j] - means[j]) / scales[j];
        }
        let yc = y.values[i] - y_mean;
        for a in 0..p {
            rhs[a] += z[a] * yc;
            for b in 0..=a {
                gram[a * p + b] += z[a] * z[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[b * p + a] = gram[a * p + b];
        }
    }

    let chol = cholesky(&gram, p).map_err(|j| Error::RankDeficient {
        column: names[j].clone(),
    })?;
    let gamma = cholesky_solve(&chol, p, &rhs);
    let coefficients: Vec<f64> = gamma.iter().zip(&scales).map(|(g, s)| g / s).collect();
    let intercept = y_mean - coefficients.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::Diverged("least-squares solution is not finite".into()));
    }
    Ok(LinearModel {
        schema: x.schema().clone(),
        coefficients,
        intercept,
        standardization: x.standardization().cloned(),
    })
}

/// Lower-triangular factor of a symmetric matrix, or the index of the
/// first column whose pivot is not safely positive.
fn cholesky(a: &[f64], p: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; p * p];
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= l[j * p + k] * l[j * p + k];
        }
        if !(d > PIVOT_TOLERANCE * a[j * p + j].abs().max(f64::MIN_POSITIVE)) {
            return Err(j);
        }
        let d = d.sqrt();
        l[j * p + j] = d;
        for i in j + 1..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / d;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut w = b.to_vec();
    for i in 0..p {
        for k in 0..i {
            w[i] -= l[i * p + k] * w[k];
        }
        w[i] /= l[i * p + i];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            w[i] -= l[k * p + i] * w[k];
        }
        w[i] /= l[i * p + i];
    }
    w
}

/// The penalized squared-error objective
/// `J = MSE + lambda * sum(coefficients²)`, intercept unpenalized,
/// over parameters packed as `[intercept, coefficients..]`.
#[derive(Debug, Clone, Copy)]
pub struct L2Objective<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [f64],
    pub lambda: f64,
}

impl<'a> L2Objective<'a> {
    pub fn new(x: &'a FeatureMatrix, y: &'a TargetVector, lambda: f64) -> Result<Self> {
        check_targets(x, y)?;
        if x.n_rows() == 0 {
            return Err(Error::EmptyInput);
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("l2 lambda must be >= 0, got {lambda}")));
        }
        Ok(Self {
            x,
            y: &y.values,
            lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.n_cols() + 1
    }

    fn predict(params: &[f64], row: &[f64]) -> f64 {
        params[0] + row.iter().zip(&params[1..]).map(|(x, b)| x * b).sum::<f64>()
    }

    fn penalty(&self, params: &[f64]) -> f64 {
        self.lambda * params[1..].iter().map(|b| b * b).sum::<f64>()
    }

    pub fn loss(&self, params: &[f64]) -> f64 {
        let sq: Vec<f64> = self
            .x
            .rows()
            .zip(self.y)
            .map(|(row, y)| {
                let r = y - Self::predict(params, row);
                r * r
            })
            .collect();
        metrics::pairwise_sum(&sq) / self.y.len() as f64 + self.penalty(params)
    }

    /// Loss and its analytic gradient in one pass.
    pub fn loss_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let n = self.y.len() as f64;
        let mut grad = vec![0.0; params.len()];
        let mut sq = Vec::with_capacity(self.y.len());
        for (row, y) in self.x.rows().zip(self.y) {
            let r = y - Self::predict(params, row);
            sq.push(r * r);
            grad[0] += r;
            for (g, x) in grad[1..].iter_mut().zip(row) {
                *g += r * x;
            }
        }
        for g in &mut grad {
            *g *= -2.0 / n;
        }
        for (g, b) in grad[1..].iter_mut().zip(&params[1..]) {
            *g += 2.0 * self.lambda * b;
        }
        (metrics::pairwise_sum(&sq) / n + self.penalty(params), grad)
    }
}

/// `MSE + lambda * sum(coefficients²)` of `model` on `(x, y)`.
pub fn loss_l2(x: &FeatureMatrix, y: &TargetVector, model: &LinearModel, lambda: f64) -> Result<f64> {
    let x = model.align(x)?;
    let objective = L2Objective::new(&x, y, lambda)?;
    let mut params = vec![model.intercept];
    params.extend_from_slice(&model.coefficients);
    Ok(objective.loss(&params))
}

/// Rejects raw matrices with large-magnitude columns.
pub(crate) fn require_standardized(x: &FeatureMatrix) -> Result<()> {
    if x.standardization().is_some() {
        return Ok(());
    }
    let names = x.schema().column_names();
    for j in 0..x.n_cols() {
        let magnitude = x.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if magnitude > MAX_UNSTANDARDIZED_MAGNITUDE {
            return Err(Error::NotStandardized {
                column: names[j].clone(),
                magnitude,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub max_iters: usize,
    /// Stop once one step lowers the loss by less than `tol * initial loss`.
    pub tol: f64,
    pub seed: u64,
    /// Start from small seeded random coefficients instead of zeros.
    pub random_init: bool,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            l2_lambda: 0.0,
            max_iters: 50_000,
            tol: 1e-8,
            seed: 0,
            random_init: false,
        }
    }
}

const MAX_HALVINGS: usize = 10;

/// Plain gradient descent `params -= learning_rate * grad J` from zero.
///
/// Any loss increase beyond round-off halves the learning rate and restarts
/// from the initial point, at most ten times, so the returned trace never
/// increases.
pub fn fit_gd(x: &FeatureMatrix, y: &TargetVector, config: &GdConfig) -> Result<(LinearModel, Vec<f64>)> {
    if !(config.learning_rate > 0.0) || !(config.tol > 0.0) || config.max_iters == 0 {
        return Err(Error::InvalidConfig(
            "learning_rate and tol must be > 0 and max_iters >= 1".into(),
        ));
    }
    require_standardized(x)?;
    let objective = L2Objective::new(x, y, config.l2_lambda)?;
    let init = initial_params(objective.dim(), config);
    let mut alpha = config.learning_rate;

    for _ in 0..=MAX_HALVINGS {
        match descend(&objective, &init, alpha, config) {
            Some((params, trace)) => {
                let model = LinearModel::from_params(x.schema().clone(), x.standardization().cloned(), &params);
                return Ok((model, trace));
            }
            None => alpha /= 2.0,
        }
    }
    Err(Error::Diverged(format!(
        "loss kept increasing after {MAX_HALVINGS} learning-rate halvings"
    )))
}

fn initial_params(dim: usize, config: &GdConfig) -> Vec<f64> {
    if config.random_init {
        let mut rng = XorShift64Star::new(config.seed);
        (0..dim).map(|_| 0.01 * rng.normal()).collect()
    } else {
        vec![0.0; dim]
    }
}

/// One descent run; `None` when the loss rises (learning rate too large).
fn descend(
    objective: &L2Objective<'_>,
    init: &[f64],
    alpha: f64,
    config: &GdConfig,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let mut params = init.to_vec();
    let (mut loss, mut grad) = objective.loss_and_gradient(&params);
    if !loss.is_finite() {
        return None;
    }
    let threshold = config.tol * loss;
    // increases this small are floating-point noise, not instability
    let noise = 1e-12 * loss;
    let mut trace = vec![loss];
    for _ in 0..config.max_iters {
        let candidate: Vec<f64> = params.iter().zip(&grad).map(|(p, g)| p - alpha * g).collect();
        let (next_loss, next_grad) = objective.loss_and_gradient(&candidate);
        if !next_loss.is_finite() || next_loss > loss + noise {
            return None;
        }
        if next_loss > loss {
            break;
        }
        let improvement = loss - next_loss;
        params = candidate;
        loss = next_loss;
        grad = next_grad;
        trace.push(loss);
        if improvement < threshold {
            break;
        }
    }
    Some((params, trace))
}
