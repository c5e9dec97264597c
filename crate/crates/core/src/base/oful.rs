use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{argmax_f64, BaseAlgorithm, Confidence, PolicyIndex, Prediction, RateFunction, Snapshot, StepSignal};
use crate::error::{Error, Result};

/// Rank-one updates between full re-factorisations of the inverse design matrix.
pub const REFACTOR_EVERY: u64 = 1024;

/// Validates a fixed action set and returns it as column vectors.
pub(crate) fn action_vectors(actions: &[Vec<f64>], field: &str) -> Result<(usize, Vec<DVector<f64>>)> {
    let dim = actions.first().map_or(0, |a| a.len());
    if dim == 0 {
        return Err(Error::config(field, "need at least one non-empty action"));
    }
    let mut out = Vec::with_capacity(actions.len());
    for (i, a) in actions.iter().enumerate() {
        if a.len() != dim {
            return Err(Error::config(
                format!("{field}[{i}]"),
                format!("expected dimension {dim}"),
            ));
        }
        let v = DVector::from_column_slice(a);
        if v.norm() > 1.0 + 1e-12 {
            return Err(Error::config(format!("{field}[{i}]"), "action norm exceeds 1"));
        }
        out.push(v);
    }
    Ok((dim, out))
}

/// Design matrix `Lambda = reg * I + sum a a^T` with its inverse kept by
/// Sherman-Morrison and periodically recomputed from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    since_refactor: u64,
}

impl DesignMatrix {
    pub fn new(dim: usize, reg: f64) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim) * reg,
            inverse: DMatrix::identity(dim, dim) / reg,
            since_refactor: 0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }

    pub fn add(&mut self, a: &DVector<f64>) {
        self.matrix += a * a.transpose();
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        } else {
            let u = &self.inverse * a;
            let denom = 1.0 + a.dot(&u);
            self.inverse -= (&u * u.transpose()) / denom;
        }
    }

    fn refactor(&mut self) {
        self.inverse = self
            .matrix
            .clone()
            .cholesky()
            .expect("design matrix is positive definite")
            .inverse();
        self.since_refactor = 0;
    }

    /// `||a||_{Lambda^{-1}}`.
    pub fn inv_norm(&self, a: &DVector<f64>) -> f64 {
        a.dot(&(&self.inverse * a)).max(0.0).sqrt()
    }
}

/// OFUL over a fixed finite action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oful {
    actions: Vec<DVector<f64>>,
    design: DesignMatrix,
    response: DVector<f64>,
    theta_hat: DVector<f64>,
    beta: f64,
    steps: u64,
}

impl Oful {
    pub fn new(actions: &[Vec<f64>], conf: Confidence) -> Result<Self> {
        let (dim, actions) = action_vectors(actions, "oful.actions")?;
        Ok(Self {
            actions,
            design: DesignMatrix::new(dim, 1.0),
            response: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
            beta: Self::beta(dim, conf),
            steps: 0,
        })
    }

    /// `beta = 4 sqrt(d log(T/delta))`.
    pub fn beta(dim: usize, conf: Confidence) -> f64 {
        4.0 * (dim as f64 * conf.log_term()).sqrt()
    }

    /// `rho(t) = beta sqrt(d log(T/delta) / t)`, capped at 1.
    pub fn rate(dim: usize, conf: Confidence) -> Result<RateFunction<f64>> {
        let c1 = Self::beta(dim, conf) * (dim as f64 * conf.log_term()).sqrt();
        RateFunction::new(c1, 0.0, 1.0, 0.5, conf.horizon)
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn index(&self, i: usize) -> f64 {
        let a = &self.actions[i];
        a.dot(&self.theta_hat) + 2.0 * self.beta * self.design.inv_norm(a)
    }

    fn best(&self) -> (usize, f64) {
        argmax_f64((0..self.actions.len()).map(|i| self.index(i)))
    }
}

impl BaseAlgorithm for Oful {
    type Obs = ();
    type Action = PolicyIndex;
    type Feedback = f64;

    fn predict(&self) -> Prediction {
        Prediction::clamped(self.best().1)
    }

    fn act(&self, _: &()) -> PolicyIndex {
        PolicyIndex(self.best().0)
    }

    fn update(&mut self, _: &(), action: &PolicyIndex, reward: &f64) -> Result<StepSignal> {
        let a = self
            .actions
            .get(action.0)
            .ok_or_else(|| Error::FeedbackMismatch(format!("action {} out of range", action.0)))?
            .clone();
        self.design.add(&a);
        self.response += &a * *reward;
        self.theta_hat = self.design.inverse() * &self.response;
        self.steps += 1;
        Ok(StepSignal::Continue)
    }

    fn internal_time(&self) -> u64 {
        self.steps
    }
}

impl Snapshot for Oful {
    const KIND: &'static str = "oful";
}
