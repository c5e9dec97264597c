use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::base::{Link, PolicyIndex};
use crate::error::{Error, Result};

/// Parameter vector held on `length` consecutive rounds, either constant or
/// drifting linearly from `value` to `value_end` (reached on the last round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub length: usize,
    pub value: Vec<f64>,
    pub value_end: Option<Vec<f64>>,
}

impl Segment {
    fn at(&self, t: usize) -> Vec<f64> {
        match &self.value_end {
            Some(end) if self.length > 1 => {
                let w = (t - self.start) as f64 / (self.length - 1) as f64;
                self.value.iter().zip(end).map(|(&a, &b)| a + w * (b - a)).collect()
            }
            _ => self.value.clone(),
        }
    }
}

/// Piecewise (constant or linearly drifting) parameter sequence over `1..=T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrace {
    pub horizon: usize,
    pub segments: Vec<Segment>,
}

impl SegmentTrace {
    /// Builds a trace from `(length, value, value_end)` triples; `field` names
    /// the list in error messages.
    pub fn new(pieces: Vec<(usize, Vec<f64>, Option<Vec<f64>>)>, horizon: usize, field: &str) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::config(field, "need at least one segment"));
        }
        let dim = pieces[0].1.len();
        let mut start = 1;
        let mut segments = Vec::with_capacity(pieces.len());
        for (i, (length, value, value_end)) in pieces.into_iter().enumerate() {
            if length == 0 {
                return Err(Error::config(format!("{field}[{i}].length"), "must be positive"));
            }
            if value.len() != dim || value_end.as_ref().is_some_and(|v| v.len() != dim) {
                return Err(Error::config(
                    format!("{field}[{i}]"),
                    format!("expected dimension {dim}"),
                ));
            }
            segments.push(Segment {
                start,
                length,
                value,
                value_end,
            });
            start += length;
        }
        if start - 1 != horizon {
            return Err(Error::config(
                field,
                format!("segment lengths sum to {}, expected T = {horizon}", start - 1),
            ));
        }
        Ok(Self { horizon, segments })
    }

    pub fn dim(&self) -> usize {
        self.segments[0].value.len()
    }

    pub fn check_round(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon {
            return Err(Error::RoundOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(())
    }

    fn segment(&self, t: usize) -> &Segment {
        let i = self.segments.partition_point(|s| s.start <= t) - 1;
        &self.segments[i]
    }

    /// Parameter in force at round `t` (1-based).
    pub fn at(&self, t: usize) -> Result<Vec<f64>> {
        self.check_round(t)?;
        Ok(self.segment(t).at(t))
    }

    /// Every vertex of the piecewise-linear path; validating them validates
    /// every round by convexity.
    pub fn vertices(&self) -> impl Iterator<Item = (usize, &Vec<f64>)> {
        self.segments
            .iter()
            .enumerate()
            .flat_map(|(i, s)| std::iter::once((i, &s.value)).chain(s.value_end.iter().map(move |v| (i, v))))
    }

    /// `f(t)` for every round where the parameter may change between `t` and `t + 1`.
    ///
    /// Rounds inside a constant segment contribute zero and are skipped.
    pub fn change_rounds(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            let last = s.start + s.length - 1;
            if s.value_end.is_some() && s.length > 1 {
                out.extend(s.start..last);
            }
            if i + 1 < self.segments.len() {
                out.push(last);
            }
        }
        out
    }
}

/// Multi-armed bandit: per-round mean vectors in `[0, 1]^A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabTrace {
    pub means: SegmentTrace,
}

impl MabTrace {
    pub fn new(means: SegmentTrace) -> Result<Self> {
        for (i, v) in means.vertices() {
            if let Some(j) = v.iter().position(|&m| !(0.0..=1.0).contains(&m)) {
                return Err(Error::config(
                    format!("env.segments[{i}].means[{j}]"),
                    format!("{} outside [0, 1]", v[j]),
                ));
            }
        }
        Ok(Self { means })
    }

    pub fn arms(&self) -> usize {
        self.means.dim()
    }

    pub fn horizon(&self) -> usize {
        self.means.horizon
    }

    pub fn value(&self, t: usize, policy: PolicyIndex) -> Result<f64> {
        let m = self.means.at(t)?;
        m.get(policy.0)
            .copied()
            .ok_or_else(|| Error::FeedbackMismatch(format!("arm {} out of range", policy.0)))
    }

    pub fn optimal_value(&self, t: usize) -> Result<f64> {
        Ok(self.means.at(t)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// `Delta(t) = ||r_t - r_{t+1}||_inf`.
    pub fn drift(&self, t: usize) -> Result<f64> {
        if t >= self.horizon() {
            return Ok(0.0);
        }
        let (a, b) = (self.means.at(t)?, self.means.at(t + 1)?);
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }
}

/// Linear or generalised-linear bandit with `f_t(a) = mu(a^T theta_t)` over a
/// fixed action set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTrace {
    pub actions: Vec<Vec<f64>>,
    pub link: Link,
    pub theta: SegmentTrace,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LinearTrace {
    pub fn new(actions: Vec<Vec<f64>>, link: Link, theta: SegmentTrace) -> Result<Self> {
        let d = theta.dim();
        if actions.is_empty() {
            return Err(Error::config("env.actions", "need at least one action"));
        }
        for (i, a) in actions.iter().enumerate() {
            if a.len() != d {
                return Err(Error::config(
                    format!("env.actions[{i}]"),
                    format!("expected dimension {d}"),
                ));
            }
            if norm(a) > 1.0 + 1e-12 {
                return Err(Error::config(format!("env.actions[{i}]"), "norm exceeds 1"));
            }
        }
        for (i, th) in theta.vertices() {
            if norm(th) > 1.0 + 1e-12 {
                return Err(Error::config(format!("env.segments[{i}].theta"), "norm exceeds 1"));
            }
            if link == Link::Identity {
                for (j, a) in actions.iter().enumerate() {
                    let v = dot(a, th);
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::config(
                            format!("env.segments[{i}].theta"),
                            format!("action {j} has mean {v} outside [0, 1]"),
                        ));
                    }
                }
            }
        }
        Ok(Self { actions, link, theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.dim()
    }

    pub fn horizon(&self) -> usize {
        self.theta.horizon
    }

    pub fn value(&self, t: usize, policy: PolicyIndex) -> Result<f64> {
        let th = self.theta.at(t)?;
        let a = self
            .actions
            .get(policy.0)
            .ok_or_else(|| Error::FeedbackMismatch(format!("action {} out of range", policy.0)))?;
        Ok(self.link.mu(dot(a, &th)))
    }

    pub fn optimal_value(&self, t: usize) -> Result<f64> {
        let th = self.theta.at(t)?;
        Ok(self
            .actions
            .iter()
            .map(|a| self.link.mu(dot(a, &th)))
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// `||theta_t - theta_{t+1}||_2`.
    pub fn theta_shift(&self, t: usize) -> Result<f64> {
        if t >= self.horizon() {
            return Ok(0.0);
        }
        let (a, b) = (self.theta.at(t)?, self.theta.at(t + 1)?);
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
    }
}

/// Bernoulli draw with mean `p`; exact at 0 and 1.
pub fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> f64 {
    if rng.gen::<f64>() < p {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_segments() -> SegmentTrace {
        SegmentTrace::new(
            vec![(3, vec![0.2, 0.8], None), (2, vec![0.9, 0.1], None)],
            5,
            "env.segments",
        )
        .unwrap()
    }

    #[test]
    fn segment_lookup_is_one_based() {
        let tr = two_segments();
        assert_eq!(tr.at(1).unwrap(), vec![0.2, 0.8]);
        assert_eq!(tr.at(3).unwrap(), vec![0.2, 0.8]);
        assert_eq!(tr.at(4).unwrap(), vec![0.9, 0.1]);
        assert!(tr.at(0).is_err());
        assert!(tr.at(6).is_err());
        assert_eq!(tr.change_rounds(), vec![3]);
    }

    #[test]
    fn lengths_must_match_horizon() {
        let err = SegmentTrace::new(vec![(3, vec![0.5], None)], 4, "env.segments").unwrap_err();
        assert!(err.to_string().contains("sum to 3"));
    }

    #[test]
    fn drift_reaches_the_end_value() {
        let tr = SegmentTrace::new(vec![(5, vec![0.0], Some(vec![1.0]))], 5, "s").unwrap();
        assert_eq!(tr.at(1).unwrap(), vec![0.0]);
        assert_eq!(tr.at(3).unwrap(), vec![0.5]);
        assert_eq!(tr.at(5).unwrap(), vec![1.0]);
        assert_eq!(tr.change_rounds(), vec![1, 2, 3, 4]);
    }

    #[test]
    fn mab_oracles() {
        let mab = MabTrace::new(two_segments()).unwrap();
        assert_eq!(mab.optimal_value(1).unwrap(), 0.8);
        assert_eq!(mab.drift(2).unwrap(), 0.0);
        assert!((mab.drift(3).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(mab.drift(5).unwrap(), 0.0);
    }

    #[test]
    fn linear_coordinate_actions() {
        let theta = SegmentTrace::new(vec![(4, vec![0.3, 0.7], None)], 4, "s").unwrap();
        let lin = LinearTrace::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Link::Identity, theta).unwrap();
        assert_eq!(lin.optimal_value(2).unwrap(), 0.7);
        assert_eq!(lin.value(2, PolicyIndex(0)).unwrap(), 0.3);
    }

    #[test]
    fn linear_rejects_negative_means() {
        let theta = SegmentTrace::new(vec![(4, vec![-0.3, 0.7], None)], 4, "s").unwrap();
        let err = LinearTrace::new(vec![vec![1.0, 0.0]], Link::Identity, theta).unwrap_err();
        assert!(err.to_string().contains("outside [0, 1]"));
    }
}
