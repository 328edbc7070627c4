//! Aggregation of per-tree scores.
//!
//! `f_alpha` is the power mean of order `1 - alpha`, so `alpha = 0` is the
//! arithmetic mean, `1` the geometric mean, `2` the harmonic mean and `inf`
//! the minimum. The aggregate score is `h_alpha = 2^(-f_alpha)`, which grows
//! with `alpha`: larger `alpha` puts more weight on the trees that isolate a
//! point early.
//!
//! `f_alpha(x) = exp(-R_alpha(u || x / n))` where `u` is the uniform
//! distribution and `R_alpha` the Rényi divergence, which is also provided
//! here.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Entries are clamped to this before taking logarithms.
const LOG_FLOOR: f64 = 1e-300;

/// Tolerance on `sum(p) = 1` in [`renyi_divergence`].
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// Sensitivity parameter of the aggregation family, `alpha >= 0` or `inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alpha {
    Finite(f64),
    Infinity,
}

impl Alpha {
    pub const ZERO: Alpha = Alpha::Finite(0.0);
    pub const ONE: Alpha = Alpha::Finite(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value < 0.0 {
            Err(Error::InvalidAlpha(value.to_string()))
        } else if value.is_infinite() {
            Ok(Alpha::Infinity)
        } else {
            Ok(Alpha::Finite(value))
        }
    }

    /// The numeric value, `f64::INFINITY` for the symbolic variant.
    pub fn value(self) -> f64 {
        match self {
            Alpha::Finite(v) => v,
            Alpha::Infinity => f64::INFINITY,
        }
    }
}

impl Default for Alpha {
    fn default() -> Self {
        Alpha::ZERO
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Alpha::Finite(v) => write!(f, "{v}"),
            Alpha::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for Alpha {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" | "∞" => Ok(Alpha::Infinity),
            _ => t.parse::<f64>().map_err(|_| Error::InvalidAlpha(s.to_string())).and_then(Alpha::new),
        }
    }
}

impl Serialize for Alpha {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Alpha::Finite(v) => s.serialize_f64(*v),
            Alpha::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Alpha {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        let alpha = match Repr::deserialize(d)? {
            Repr::Number(v) => Alpha::new(v),
            Repr::Text(s) => s.parse(),
        };
        alpha.map_err(serde::de::Error::custom)
    }
}

/// Aggregated anomaly score in `[0, 1]`; higher is more anomalous.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AggregateScore(f64);

impl AggregateScore {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_scores(x: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyVector);
    }
    for (index, &value) in x.iter().enumerate() {
        if value.is_nan() || value < 0.0 {
            return Err(Error::NegativeEntry { index, value });
        }
        if value.is_infinite() {
            return Err(Error::Domain(format!("entry {index} is infinite")));
        }
    }
    Ok(())
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Power mean of order `1 - alpha` of a non-negative vector.
pub fn power_mean_f(x: &[f64], alpha: Alpha) -> Result<f64> {
    check_scores(x)?;
    let n = x.len() as f64;
    let has_zero = x.contains(&0.0);
    let a = match alpha {
        Alpha::Infinity => return Ok(x.iter().copied().fold(f64::INFINITY, f64::min)),
        Alpha::Finite(a) => a,
    };
    if a == 0.0 {
        return Ok(x.iter().sum::<f64>() / n);
    }
    if a >= 1.0 && has_zero {
        return Ok(0.0);
    }
    if a == 1.0 {
        return Ok((x.iter().map(|v| v.ln()).sum::<f64>() / n).exp());
    }
    let order = 1.0 - a;
    let lse = log_sum_exp(x.iter().map(|&v| order * v.max(LOG_FLOOR).ln()));
    Ok(((lse - n.ln()) / order).exp())
}

/// `2^(-f_alpha(x))`.
pub fn aggregate_h(x: &[f64], alpha: Alpha) -> Result<AggregateScore> {
    Ok(AggregateScore((-power_mean_f(x, alpha)?).exp2()))
}

/// Rényi divergence `R_alpha(p || q)` for a probability vector `p` and a
/// non-negative vector `q`, with the usual limits at `alpha = 0, 1, inf`.
/// Terms with `p_i = 0` are dropped; `p_i > 0, q_i = 0` gives `+inf` for
/// `alpha >= 1`.
pub fn renyi_divergence(p: &[f64], q: &[f64], alpha: Alpha) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    if let Some(index) = p.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::NegativeEntry { index, value: p[index] });
    }
    if let Some(index) = q.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::NegativeEntry { index, value: q[index] });
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(Error::NotAProbability { sum });
    }
    let support = || p.iter().zip(q).filter(|(pi, _)| **pi > 0.0).map(|(pi, qi)| (*pi, *qi));

    let value = match alpha {
        Alpha::Finite(a) if a == 0.0 => -support().map(|(_, qi)| qi).sum::<f64>().ln(),
        Alpha::Finite(a) if a == 1.0 => support().map(|(pi, qi)| pi * (pi.ln() - qi.ln())).sum(),
        Alpha::Infinity => support().map(|(pi, qi)| pi.ln() - qi.ln()).fold(f64::NEG_INFINITY, f64::max),
        Alpha::Finite(a) => {
            if a > 1.0 && support().any(|(_, qi)| qi == 0.0) {
                return Ok(f64::INFINITY);
            }
            // q_i = 0 terms vanish for a < 1
            let terms = support().filter(|(_, qi)| *qi > 0.0).map(|(pi, qi)| a * pi.ln() + (1.0 - a) * qi.ln());
            log_sum_exp(terms) / (a - 1.0)
        }
    };
    Ok(value)
}

/// Anomaly decision: `score >= tau`.
pub fn classify(score: AggregateScore, tau: f64) -> bool {
    score.0 >= tau
}
