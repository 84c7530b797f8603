//! ADADELTA: per-coordinate step sizes from running averages of squared
//! gradients and squared updates.

use crate::data::{FeatureMatrix, TargetVector};
use crate::error::{Error, Result};
use crate::linear::{require_standardized, L2Objective, LinearModel};

#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub avg_sq_grad: Vec<f64>,
    pub avg_sq_update: Vec<f64>,
    pub rho: f64,
    pub epsilon: f64,
}

impl AdadeltaState {
    /// Both accumulators start at zero.
    pub fn new(dim: usize, rho: f64, epsilon: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidConfig(format!("rho must lie in (0, 1), got {rho}")));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be > 0, got {epsilon}")));
        }
        Ok(Self {
            avg_sq_grad: vec![0.0; dim],
            avg_sq_update: vec![0.0; dim],
            rho,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.avg_sq_grad.len()
    }
}

/// One update, per coordinate:
///
/// ```text
/// E[g²]  <- rho E[g²] + (1 - rho) g²
/// delta   = -sqrt(E[dx²] + eps) / sqrt(E[g²] + eps) * g
/// E[dx²] <- rho E[dx²] + (1 - rho) delta²
/// x      <- x + delta
/// ```
pub fn adadelta_step(state: &mut AdadeltaState, params: &mut [f64], grads: &[f64]) -> Result<()> {
    let dim = state.dim();
    for len in [params.len(), grads.len()] {
        if len != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: len,
            });
        }
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(i));
    }
    let (rho, eps) = (state.rho, state.epsilon);
    for i in 0..dim {
        let g = grads[i];
        let eg = rho * state.avg_sq_grad[i] + (1.0 - rho) * g * g;
        let delta = -((state.avg_sq_update[i] + eps).sqrt() / (eg + eps).sqrt()) * g;
        state.avg_sq_grad[i] = eg;
        state.avg_sq_update[i] = rho * state.avg_sq_update[i] + (1.0 - rho) * delta * delta;
        params[i] += delta;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaConfig {
    pub l2_lambda: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once an iteration lowers the loss by less than
    /// `tol * initial loss` (increases do not stop the run).
    pub tol: f64,
    /// Run the optimizer on the normalized objective described on
    /// [`fit_adadelta`] rather than on the raw dollar-valued loss.
    pub normalize: bool,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 0.0,
            rho: 0.95,
            epsilon: 1e-6,
            max_iters: 50_000,
            tol: 1e-12,
            normalize: true,
        }
    }
}

/// Fits the penalized linear model by ADADELTA from zero coefficients.
///
/// With `normalize`, the optimizer sees `J(s·u) / (s² h)` over `u = params / s`,
/// where `s` is the RMS target value and `h` the trace of the loss Hessian.
/// The minimizer is unchanged; what changes is that the step scale set by
/// `epsilon` is measured in target units and the curvature is at most 1, so
/// the late phase, where `epsilon` dominates both running averages and the
/// method reduces to unit-step gradient descent, stays stable. The returned
/// trace always reports the unnormalized loss.
pub fn fit_adadelta(
    x: &FeatureMatrix,
    y: &TargetVector,
    config: &AdadeltaConfig,
) -> Result<(LinearModel, Vec<f64>)> {
    require_standardized(x)?;
    let objective = L2Objective::new(x, y, config.l2_lambda)?;
    let dim = objective.dim();
    let mut state = AdadeltaState::new(dim, config.rho, config.epsilon)?;
    let (scale, grad_factor) = if config.normalize {
        let n = y.len() as f64;
        let ms = y.values.iter().map(|v| v * v).sum::<f64>() / n;
        let s = if ms > 0.0 { ms.sqrt() } else { 1.0 };
        let col_ms: f64 = (0..x.n_cols())
            .map(|j| x.column(j).iter().map(|v| v * v).sum::<f64>() / n)
            .sum();
        let h = 2.0 * (1.0 + col_ms) + 2.0 * config.l2_lambda * x.n_cols() as f64;
        (s, 1.0 / (s * h))
    } else {
        (1.0, 1.0)
    };

    let mut u = vec![0.0; dim];
    let mut params = vec![0.0; dim];
    let (mut loss, mut grad) = objective.loss_and_gradient(&params);
    let threshold = config.tol * loss;
    let mut trace = vec![loss];
    for iter in 0..config.max_iters {
        for g in &mut grad {
            *g *= grad_factor;
        }
        adadelta_step(&mut state, &mut u, &grad)?;
        for (p, v) in params.iter_mut().zip(&u) {
            *p = v * scale;
        }
        let (next_loss, next_grad) = objective.loss_and_gradient(&params);
        if !next_loss.is_finite() {
            return Err(Error::Diverged(format!("loss is not finite at iteration {}", iter + 1)));
        }
        trace.push(next_loss);
        let improvement = loss - next_loss;
        loss = next_loss;
        grad = next_grad;
        if improvement >= 0.0 && improvement < threshold {
            break;
        }
    }
    let model = LinearModel::from_params(x.schema().clone(), x.standardization().cloned(), &params);
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSchema;

    #[test]
    fn zero_gradient_only_decays() {
        let mut s = AdadeltaState::new(2, 0.9, 1e-6).unwrap();
        s.avg_sq_grad = vec![4.0, 1.0];
        s.avg_sq_update = vec![0.5, 0.25];
        let mut p = vec![1.0, -2.0];
        adadelta_step(&mut s, &mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
        assert_eq!(s.avg_sq_grad, vec![0.9 * 4.0, 0.9 * 1.0]);
        assert_eq!(s.avg_sq_update, vec![0.9 * 0.5, 0.9 * 0.25]);
    }

    #[test]
    fn first_step_by_hand() {
        let mut s = AdadeltaState::new(1, 0.95, 1e-6).unwrap();
        let mut p = vec![0.0];
        adadelta_step(&mut s, &mut p, &[1.0]).unwrap();
        assert!((s.avg_sq_grad[0] - 0.05).abs() < 1e-15);
        let expected = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((p[0] + 0.004472).abs() < 1e-6);
    }

    #[test]
    fn minimizes_parabola() {
        let mut s = AdadeltaState::new(1, 0.95, 1e-6).unwrap();
        let mut theta = vec![1.0];
        let mut prev = 1.0f64;
        for _ in 0..1_000 {
            let g = [2.0 * theta[0]];
            adadelta_step(&mut s, &mut theta, &g).unwrap();
            assert!(theta[0].abs() <= prev.abs());
            prev = theta[0];
        }
        assert!(theta[0].abs() < 0.5, "theta {}", theta[0]);
    }

    #[test]
    fn step_errors() {
        let mut s = AdadeltaState::new(2, 0.95, 1e-6).unwrap();
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            adadelta_step(&mut s, &mut p, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            adadelta_step(&mut s, &mut p, &[1.0, f64::NAN]),
            Err(Error::NonFiniteGradient(1))
        ));
        assert!(AdadeltaState::new(1, 1.0, 1e-6).is_err());
    }

    #[test]
    fn permuting_coordinates_permutes_updates() {
        let mut a = AdadeltaState::new(3, 0.95, 1e-6).unwrap();
        let mut b = a.clone();
        let mut pa = vec![1.0, 2.0, 3.0];
        let mut pb = vec![3.0, 1.0, 2.0];
        for k in 0..20 {
            let g = [0.5 * k as f64, -1.0, 2.0 + k as f64];
            adadelta_step(&mut a, &mut pa, &g).unwrap();
            adadelta_step(&mut b, &mut pb, &[g[2], g[0], g[1]]).unwrap();
        }
        assert_eq!(pb, vec![pa[2], pa[0], pa[1]]);
        assert!(a.avg_sq_grad.iter().chain(&a.avg_sq_update).all(|v| *v >= 0.0));
    }

    fn two_feature_problem() -> (FeatureMatrix, TargetVector) {
        let schema = FeatureSchema::from_selection(&["length_ft", "beam_ft"], None, false).unwrap();
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let a = ((i * 7) % 13) as f64 / 6.0 - 1.0;
            let b = ((i * 5) % 11) as f64 / 5.0 - 1.0;
            rows.push(vec![a, b]);
            y.push(3.0 + 2.0 * a - 1.5 * b);
        }
        let ids = (0..40).map(|i| i.to_string()).collect();
        (
            FeatureMatrix::from_rows(schema, &rows, ids).unwrap(),
            TargetVector::new(y).unwrap(),
        )
    }

    #[test]
    fn fit_matches_ols_and_is_deterministic() {
        let (x, y) = two_feature_problem();
        let ols = crate::linear::fit_ols(&x, &y).unwrap();
        let (m, trace) = fit_adadelta(&x, &y, &AdadeltaConfig::default()).unwrap();
        for (a, b) in m.coefficients.iter().zip(&ols.coefficients) {
            assert!(((a - b) / b).abs() < 1e-2, "{a} vs {b}");
        }
        let (_, trace2) = fit_adadelta(&x, &y, &AdadeltaConfig::default()).unwrap();
        assert_eq!(trace, trace2);
    }

    #[test]
    fn zero_iterations_returns_zero_model() {
        let (x, y) = two_feature_problem();
        let config = AdadeltaConfig {
            max_iters: 0,
            ..AdadeltaConfig::default()
        };
        let (m, trace) = fit_adadelta(&x, &y, &config).unwrap();
        assert_eq!(m.coefficients, vec![0.0, 0.0]);
        assert_eq!(m.intercept, 0.0);
        assert_eq!(trace.len(), 1);
    }
}
