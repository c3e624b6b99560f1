//! Success-rate accounting and translation similarity scores.

mod bleu;
mod codebleu;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bleu::{bleu, weighted_bleu};
pub use codebleu::{
    bracket_signatures, codebleu_lite, dataflow_pairs, CodeBleuScore, CodeBleuWeights,
};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no outcomes to score")]
    EmptyInput,
    #[error("no keyword list configured for `{0}`")]
    UnknownLanguage(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

/// A percentage stored in tenths, so `61.6%` is `Percent { tenths: 616 }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Percent {
    tenths: u32,
}

impl Percent {
    pub fn from_tenths(tenths: u32) -> Self {
        Self { tenths }
    }

    pub fn tenths(self) -> u32 {
        self.tenths
    }

    pub fn value(self) -> f64 {
        f64::from(self.tenths) / 10.0
    }

    /// `100 * part / whole`, rounded half-up to one decimal, in exact integer arithmetic.
    pub fn ratio(part: u64, whole: u64) -> Result<Self, MetricsError> {
        if whole == 0 {
            return Err(MetricsError::EmptyInput);
        }
        assert!(part <= whole, "part exceeds whole");
        // round(1000 * part / whole) with halves going up.
        let tenths = (2000 * part + whole) / (2 * whole);
        Ok(Self {
            tenths: tenths as u32,
        })
    }
}

impl From<Percent> for f64 {
    fn from(p: Percent) -> f64 {
        p.value()
    }
}

impl TryFrom<f64> for Percent {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        if !(0.0..=100.0).contains(&v) {
            return Err(format!("{v} is not a percentage"));
        }
        Ok(Self {
            tenths: (v * 10.0).round() as u32,
        })
    }
}

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}%", self.tenths / 10, self.tenths % 10)
    }
}

/// Share of successful outcomes, as a percentage rounded half-up to one decimal.
pub fn success_rate<I>(outcomes: I) -> Result<Percent, MetricsError>
where
    I: IntoIterator<Item = bool>,
{
    let (mut ok, mut total) = (0u64, 0u64);
    for success in outcomes {
        total += 1;
        ok += u64::from(success);
    }
    Percent::ratio(ok, total)
}
