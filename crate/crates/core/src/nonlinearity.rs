//! Fixed FastICA nonlinearities and the learned one behind a common interface.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::score::ScoreTable;

/// Anything that can supply `(g(y), g′(y))` to the fixed-point update.
pub trait Contrast: Sync {
    fn eval(&self, y: f64) -> (f64, f64);
}

#[derive(Clone, Debug)]
pub enum Nonlinearity {
    Tanh,
    Pow3,
    Skew,
    Gauss,
    Learned(Arc<ScoreTable>),
}

impl Contrast for Nonlinearity {
    fn eval(&self, y: f64) -> (f64, f64) {
        match self {
            Nonlinearity::Tanh => {
                let t = y.tanh();
                (t, 1.0 - t * t)
            }
            Nonlinearity::Pow3 => (y * y * y, 3.0 * y * y),
            Nonlinearity::Skew => (y * y, 2.0 * y),
            Nonlinearity::Gauss => {
                let e = (-0.5 * y * y).exp();
                (y * e, (1.0 - y * y) * e)
            }
            Nonlinearity::Learned(table) => table.eval(y),
        }
    }
}

impl Nonlinearity {
    pub fn kind(&self) -> NonlinearityKind {
        match self {
            Nonlinearity::Tanh => NonlinearityKind::Tanh,
            Nonlinearity::Pow3 => NonlinearityKind::Pow3,
            Nonlinearity::Skew => NonlinearityKind::Skew,
            Nonlinearity::Gauss => NonlinearityKind::Gauss,
            Nonlinearity::Learned(_) => NonlinearityKind::Pbecf,
        }
    }
}

/// Nonlinearity selector as named on the command line and in config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NonlinearityKind {
    Tanh,
    Pow3,
    Skew,
    Gauss,
    Pbecf,
}

impl NonlinearityKind {
    pub const ALL: [NonlinearityKind; 5] = [
        NonlinearityKind::Tanh,
        NonlinearityKind::Pow3,
        NonlinearityKind::Skew,
        NonlinearityKind::Gauss,
        NonlinearityKind::Pbecf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NonlinearityKind::Tanh => "tanh",
            NonlinearityKind::Pow3 => "pow3",
            NonlinearityKind::Skew => "skew",
            NonlinearityKind::Gauss => "gauss",
            NonlinearityKind::Pbecf => "pbecf",
        }
    }

    /// The fixed nonlinearity, or `None` for the learned one.
    pub fn fixed(self) -> Option<Nonlinearity> {
        match self {
            NonlinearityKind::Tanh => Some(Nonlinearity::Tanh),
            NonlinearityKind::Pow3 => Some(Nonlinearity::Pow3),
            NonlinearityKind::Skew => Some(Nonlinearity::Skew),
            NonlinearityKind::Gauss => Some(Nonlinearity::Gauss),
            NonlinearityKind::Pbecf => None,
        }
    }
}

impl fmt::Display for NonlinearityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NonlinearityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NonlinearityKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::input(format!(
                    "unknown nonlinearity `{s}` (tanh, pow3, skew, gauss, pbecf)"
                ))
            })
    }
}
