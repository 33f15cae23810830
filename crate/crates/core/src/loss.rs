//! Robust loss functions and the matrix pseudo-norm `sum_ij rho(Y_ij)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    PseudoHuber,
    Absolute,
    Truncated,
    Squared,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [
        LossKind::PseudoHuber,
        LossKind::Absolute,
        LossKind::Truncated,
        LossKind::Squared,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::PseudoHuber => "phuber",
            LossKind::Absolute => "absolute",
            LossKind::Truncated => "truncated",
            LossKind::Squared => "squared",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "phuber" | "pseudo-huber" => Ok(LossKind::PseudoHuber),
            "absolute" => Ok(LossKind::Absolute),
            "truncated" => Ok(LossKind::Truncated),
            "squared" => Ok(LossKind::Squared),
            other => Err(Error::InvalidParameter(format!("unknown loss `{other}`"))),
        }
    }
}

/// A loss function `rho` with its tuning constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Loss {
    kind: LossKind,
    tau: f64,
}

impl Loss {
    pub fn new(kind: LossKind, tau: f64) -> Result<Self, Error> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "loss parameter tau must be positive, got {tau}"
            )));
        }
        Ok(Self { kind, tau })
    }

    /// Pseudo-Huber with `tau = 1`, one rating category.
    pub fn pseudo_huber() -> Self {
        Self {
            kind: LossKind::PseudoHuber,
            tau: 1.0,
        }
    }

    pub fn absolute() -> Self {
        Self {
            kind: LossKind::Absolute,
            tau: 1.0,
        }
    }

    /// Absolute loss truncated at half the range of a `levels`-point scale.
    pub fn truncated(levels: u8) -> Self {
        Self {
            kind: LossKind::Truncated,
            tau: (f64::from(levels) - 1.0) / 2.0,
        }
    }

    pub fn squared() -> Self {
        Self {
            kind: LossKind::Squared,
            tau: 1.0,
        }
    }

    /// The default parameterization of `kind` on a `levels`-point scale.
    pub fn with_defaults(kind: LossKind, levels: u8) -> Self {
        match kind {
            LossKind::PseudoHuber => Self::pseudo_huber(),
            LossKind::Absolute => Self::absolute(),
            LossKind::Truncated => Self::truncated(levels),
            LossKind::Squared => Self::squared(),
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn evaluate(&self, y: f64) -> f64 {
        match self.kind {
            LossKind::PseudoHuber => {
                let t = self.tau;
                let r = y / t;
                t * t * (r.mul_add(r, 1.0).sqrt() - 1.0)
            }
            LossKind::Absolute => y.abs(),
            LossKind::Truncated => y.abs().min(self.tau),
            LossKind::Squared => 0.5 * y * y,
        }
    }

    /// `||Y||_rho` over the given residuals.
    pub fn matrix_loss<I>(&self, residuals: I) -> f64
    where
        I: IntoIterator<Item = f64>,
    {
        residuals.into_iter().map(|y| self.evaluate(y)).sum()
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}
