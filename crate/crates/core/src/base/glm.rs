use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::oful::{action_vectors, DesignMatrix};
use super::{argmax_f64, BaseAlgorithm, Confidence, PolicyIndex, Prediction, RateFunction, Snapshot, StepSignal};
use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 200;
const PROJECTION_TOL: f64 = 1e-6;
const PROJECTION_MAX_ITER: usize = 20_000;

/// Strictly increasing link function `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    pub fn mu(self, x: f64) -> f64 {
        match self {
            Link::Identity => x,
            Link::Logistic => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logistic => {
                let s = self.mu(x);
                s * (1.0 - s)
            }
        }
    }

    /// Antiderivative of `mu`, the convex potential whose gradient is `g`.
    fn potential(self, x: f64) -> f64 {
        match self {
            Link::Identity => 0.5 * x * x,
            // softplus, written to avoid overflow
            Link::Logistic => x.max(0.0) + (-x.abs()).exp().ln_1p(),
        }
    }

    /// `k_mu = sup mu'` over `[0, 1]`.
    pub fn k_mu(self) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logistic => self.derivative(0.0),
        }
    }

    /// `c_mu = inf mu'` over `[0, 1]`.
    pub fn c_mu(self) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logistic => self.derivative(1.0),
        }
    }
}

/// Sufficient statistics of a GLM history over a finite action set: the
/// map `g(x) = lambda c_mu x + sum_a n_a mu(a^T x) a` and the response
/// `sum R a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmProblem {
    pub link: Link,
    pub lambda: f64,
    pub actions: Vec<DVector<f64>>,
    pub counts: Vec<u64>,
    pub response: DVector<f64>,
}

impl GlmProblem {
    fn ridge(&self) -> f64 {
        self.lambda * self.link.c_mu()
    }

    pub fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = x * self.ridge();
        for (a, &n) in self.actions.iter().zip(&self.counts) {
            if n > 0 {
                out += a * (n as f64 * self.link.mu(a.dot(x)));
            }
        }
        out
    }

    /// Jacobian of `g`, symmetric positive definite.
    pub fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = x.len();
        let mut out = DMatrix::identity(d, d) * self.ridge();
        for (a, &n) in self.actions.iter().zip(&self.counts) {
            if n > 0 {
                out += (a * a.transpose()) * (n as f64 * self.link.derivative(a.dot(x)));
            }
        }
        out
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        let mut v = 0.5 * self.ridge() * x.norm_squared() - self.response.dot(x);
        for (a, &n) in self.actions.iter().zip(&self.counts) {
            if n > 0 {
                v += n as f64 * self.link.potential(a.dot(x));
            }
        }
        v
    }

    /// Solves `g(x) = sum R a` by Newton's method. A step is taken in full
    /// when it shrinks the residual; otherwise it is backtracked with an
    /// Armijo rule on the convex potential whose gradient is `g(x) - sum R a`.
    /// The tolerance is relative to the size of the data.
    pub fn solve_unconstrained(&self, start: &DVector<f64>) -> Result<DVector<f64>> {
        let scale = 1.0 + self.response.norm() + self.counts.iter().sum::<u64>() as f64;
        let tol = NEWTON_TOL * scale;
        let mut x = start.clone();
        let mut residual = self.g(&x) - &self.response;
        for _ in 0..NEWTON_MAX_ITER {
            if residual.norm() <= tol {
                return Ok(x);
            }
            let chol = self.jacobian(&x).cholesky().expect("GLM Jacobian is positive definite");
            let step = chol.solve(&residual);
            let mut next = &x - &step;
            let mut next_residual = self.g(&next) - &self.response;
            if next_residual.norm() >= residual.norm() {
                let slope = residual.dot(&step);
                let f0 = self.objective(&x);
                let mut s = 1.0;
                while self.objective(&next) > f0 - 1e-4 * s * slope && s > 1e-12 {
                    s *= 0.5;
                    next = &x - &step * s;
                }
                next_residual = self.g(&next) - &self.response;
                if next_residual.norm() >= residual.norm() && s <= 1e-12 {
                    break;
                }
            }
            x = next;
            residual = next_residual;
        }
        if residual.norm() <= tol {
            return Ok(x);
        }
        Err(Error::NonConvergence {
            solver: "glm newton",
            iterations: NEWTON_MAX_ITER,
            residual: residual.norm(),
        })
    }

    /// `argmin_{||theta|| <= 1} ||g(target) - g(theta)||_{inv}` by projected
    /// gradient descent with Barzilai-Borwein steps and Armijo safeguarding.
    pub fn project(&self, target: &DVector<f64>, inv: &DMatrix<f64>) -> Result<DVector<f64>> {
        if target.norm() <= 1.0 {
            return Ok(target.clone());
        }
        let g_target = self.g(target);
        let loss = |th: &DVector<f64>| {
            let r = &g_target - self.g(th);
            0.5 * r.dot(&(inv * &r))
        };
        let grad = |th: &DVector<f64>| {
            let r = &g_target - self.g(th);
            -(self.jacobian(th) * (inv * r))
        };
        let mut theta = ball(target.clone());
        let mut f = loss(&theta);
        let mut gr = grad(&theta);
        let mut step = 1.0 / gr.norm().max(1e-12);
        let mut last_move = f64::INFINITY;
        for _ in 0..PROJECTION_MAX_ITER {
            let mut s = step;
            let (next, f_next) = loop {
                let cand = ball(&theta - &gr * s);
                let diff = &cand - &theta;
                let f_cand = loss(&cand);
                if f_cand <= f + gr.dot(&diff) + diff.norm_squared() / (2.0 * s) || s < 1e-300 {
                    break (cand, f_cand);
                }
                s *= 0.5;
            };
            let diff = &next - &theta;
            last_move = diff.norm();
            if last_move <= PROJECTION_TOL {
                return Ok(next);
            }
            let g_next = grad(&next);
            let y = &g_next - &gr;
            let sy = diff.dot(&y);
            step = if sy > 0.0 { diff.norm_squared() / sy } else { s * 2.0 };
            theta = next;
            f = f_next;
            gr = g_next;
        }
        Err(Error::NonConvergence {
            solver: "glm projection",
            iterations: PROJECTION_MAX_ITER,
            residual: last_move,
        })
    }
}

fn ball(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 1.0 {
        v / n
    } else {
        v
    }
}

/// GLM-UCB over a fixed finite action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmUcb {
    problem: GlmProblem,
    design: DesignMatrix,
    theta_prime: DVector<f64>,
    theta_hat: DVector<f64>,
    beta: f64,
    steps: u64,
}

impl GlmUcb {
    pub fn new(actions: &[Vec<f64>], link: Link, lambda: f64, conf: Confidence) -> Result<Self> {
        let (dim, actions) = action_vectors(actions, "glm.actions")?;
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::config("glm.lambda", "regulariser must be positive"));
        }
        let k = actions.len();
        Ok(Self {
            problem: GlmProblem {
                link,
                lambda,
                actions,
                counts: vec![0; k],
                response: DVector::zeros(dim),
            },
            design: DesignMatrix::new(dim, lambda),
            theta_prime: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
            beta: Self::beta(dim, link, lambda, conf),
            steps: 0,
        })
    }

    /// `beta = (4 k_mu / c_mu) (sqrt(d log(c_mu T / (lambda delta))) + c_mu sqrt(lambda))`.
    pub fn beta(dim: usize, link: Link, lambda: f64, conf: Confidence) -> f64 {
        let (k, c) = (link.k_mu(), link.c_mu());
        let log = conf.log_term_scaled(c / lambda).max(0.0);
        4.0 * k / c * ((dim as f64 * log).sqrt() + c * lambda.sqrt())
    }

    /// `rho(t) = beta sqrt(d log(T/delta) / t)`, capped at 1.
    pub fn rate(dim: usize, link: Link, lambda: f64, conf: Confidence) -> Result<RateFunction<f64>> {
        let c1 = Self::beta(dim, link, lambda, conf) * (dim as f64 * conf.log_term()).sqrt();
        RateFunction::new(c1, 0.0, 1.0, 0.5, conf.horizon)
    }

    pub fn problem(&self) -> &GlmProblem {
        &self.problem
    }

    pub fn theta_prime(&self) -> &DVector<f64> {
        &self.theta_prime
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn index(&self, i: usize) -> f64 {
        let a = &self.problem.actions[i];
        self.problem.link.mu(a.dot(&self.theta_hat)) + 2.0 * self.beta * self.design.inv_norm(a)
    }

    fn best(&self) -> (usize, f64) {
        argmax_f64((0..self.problem.actions.len()).map(|i| self.index(i)))
    }
}

impl BaseAlgorithm for GlmUcb {
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
            .problem
            .actions
            .get(action.0)
            .ok_or_else(|| Error::FeedbackMismatch(format!("action {} out of range", action.0)))?
            .clone();
        self.problem.counts[action.0] += 1;
        self.problem.response += &a * *reward;
        self.design.add(&a);
        self.theta_prime = self.problem.solve_unconstrained(&self.theta_prime)?;
        self.theta_hat = self.problem.project(&self.theta_prime, self.design.inverse())?;
        self.steps += 1;
        Ok(StepSignal::Continue)
    }

    fn internal_time(&self) -> u64 {
        self.steps
    }
}

impl Snapshot for GlmUcb {
    const KIND: &'static str = "glm_ucb";
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn link_constants() {
        assert_eq!(Link::Identity.k_mu(), 1.0);
        assert!((Link::Logistic.k_mu() - 0.25).abs() < 1e-15);
        let s1 = 1.0 / (1.0 + (-1f64).exp());
        assert!((Link::Logistic.c_mu() - s1 * (1.0 - s1)).abs() < 1e-15);
        assert!((Link::Logistic.mu(-800.0)).abs() < 1e-300);
        assert!((Link::Logistic.potential(800.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn no_data_gives_zero() {
        let alg = GlmUcb::new(&[vec![1.0]], Link::Logistic, 1.0, Confidence::default_for(64)).unwrap();
        let x = alg.problem().solve_unconstrained(&DVector::zeros(1)).unwrap();
        assert_eq!(x[0], 0.0);
    }

    #[test]
    fn logistic_single_observation_matches_bisection() {
        let mut alg = GlmUcb::new(&[vec![1.0]], Link::Logistic, 1.0, Confidence::default_for(64)).unwrap();
        alg.update(&(), &PolicyIndex(0), &1.0).unwrap();
        let c = Link::Logistic.c_mu();
        let root = bisect(|x| c * x + Link::Logistic.mu(x) - 1.0, -10.0, 10.0);
        assert!((alg.theta_prime()[0] - root).abs() < 1e-6);
        // the root lies outside the unit ball and g is monotone in one
        // dimension, so the projection lands on the boundary
        assert!(root > 1.0);
        assert!((alg.theta_hat()[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identity_link_with_vanishing_ridge_is_least_squares() {
        let actions = vec![vec![1.0, 0.0], vec![0.6, 0.8]];
        let mut alg = GlmUcb::new(&actions, Link::Identity, 1e-9, Confidence::default_for(64)).unwrap();
        let data = [(0, 0.2), (1, 0.5), (0, 0.4), (1, 0.3), (1, 0.6)];
        for &(a, r) in &data {
            alg.update(&(), &PolicyIndex(a), &r).unwrap();
        }
        let mut gram = DMatrix::zeros(2, 2);
        let mut rhs = DVector::zeros(2);
        for &(a, r) in &data {
            let v = DVector::from_column_slice(&actions[a]);
            gram += &v * v.transpose();
            rhs += &v * r;
        }
        let ls = gram.try_inverse().unwrap() * rhs;
        assert!((alg.theta_prime() - ls).norm() < 1e-6);
    }

    #[test]
    fn projection_lands_on_the_ball() {
        let mut alg = GlmUcb::new(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            Link::Logistic,
            1.0,
            Confidence::default_for(256),
        )
        .unwrap();
        for _ in 0..40 {
            alg.update(&(), &PolicyIndex(0), &1.0).unwrap();
        }
        assert!(alg.theta_prime().norm() > 1.0);
        assert!((alg.theta_hat().norm() - 1.0).abs() < 1e-9);
        // the objective is no better anywhere else on a fine grid of the circle
        let inv = alg.design.inverse().clone();
        let gt = alg.problem().g(alg.theta_prime());
        let loss = |th: &DVector<f64>| {
            let r = &gt - alg.problem().g(th);
            r.dot(&(&inv * &r))
        };
        let best = loss(alg.theta_hat());
        for i in 0..3600 {
            let ang = i as f64 * std::f64::consts::PI / 1800.0;
            let th = DVector::from_vec(vec![ang.cos(), ang.sin()]);
            assert!(loss(&th) >= best - 1e-6, "grid point {i} beats the solver");
        }
    }

    #[test]
    fn identity_projection_matches_secular_equation() {
        // diagonal design: minimiser is theta_i = t_i * l_i / (l_i + nu)
        let actions = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let mut alg = GlmUcb::new(&actions, Link::Identity, 1.0, Confidence::default_for(4096)).unwrap();
        for i in 0..300 {
            let a = if i % 10 == 0 { 1 } else { 0 };
            alg.update(&(), &PolicyIndex(a), &1.0).unwrap();
        }
        let t = alg.theta_prime().clone();
        assert!(t.norm() > 1.0);
        let l = [alg.design.matrix()[(0, 0)], alg.design.matrix()[(1, 1)]];
        let norm_at =
            |nu: f64| ((t[0] * l[0] / (l[0] + nu)).powi(2) + (t[1] * l[1] / (l[1] + nu)).powi(2)).sqrt() - 1.0;
        let nu = bisect(|nu| -norm_at(nu), 0.0, 1e6);
        let expect = [t[0] * l[0] / (l[0] + nu), t[1] * l[1] / (l[1] + nu)];
        assert!((alg.theta_hat()[0] - expect[0]).abs() < 1e-4);
        assert!((alg.theta_hat()[1] - expect[1]).abs() < 1e-4);
    }
}
