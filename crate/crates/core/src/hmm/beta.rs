use serde::{Deserialize, Serialize};

use super::HmmError;

/// Shape parameters `(p, q)` of a beta density on `(0,1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawShape")]
pub struct BetaShape {
    p: f64,
    q: f64,
}

#[derive(Deserialize)]
struct RawShape {
    p: f64,
    q: f64,
}

impl TryFrom<RawShape> for BetaShape {
    type Error = HmmError;

    fn try_from(raw: RawShape) -> Result<Self, Self::Error> {
        BetaShape::new(raw.p, raw.q)
    }
}

impl BetaShape {
    pub fn new(p: f64, q: f64) -> Result<Self, HmmError> {
        if p > 0.0 && q > 0.0 && p.is_finite() && q.is_finite() {
            Ok(Self { p, q })
        } else {
            Err(HmmError::InvalidShape { p, q })
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mean(&self) -> f64 {
        self.p / (self.p + self.q)
    }

    pub fn variance(&self) -> f64 {
        let s = self.p + self.q;
        self.p * self.q / (s * s * (s + 1.0))
    }

    /// Inverts the beta mean/variance relations.
    ///
    /// Returns `None` when the moments admit no beta distribution, i.e. unless
    /// `0 < mean < 1` and `0 < variance < mean (1 - mean)`.
    pub fn from_moments(mean: f64, variance: f64) -> Option<Self> {
        if !(mean > 0.0 && mean < 1.0 && variance > 0.0) {
            return None;
        }
        let common = mean * (1.0 - mean) / variance - 1.0;
        if !(common > 0.0) || !common.is_finite() {
            return None;
        }
        Self::new(mean * common, (1.0 - mean) * common).ok()
    }

    /// `ln B(p, q)`, the log of the normalizing integral.
    pub fn ln_normalizer(&self) -> f64 {
        libm::lgamma(self.p) + libm::lgamma(self.q) - libm::lgamma(self.p + self.q)
    }
}

fn check_domain(x: f64) -> Result<(), HmmError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(HmmError::Domain { value: x })
    }
}

/// Log of the beta density `f(x | p, q)`.
pub fn ln_beta_pdf(x: f64, shape: &BetaShape) -> Result<f64, HmmError> {
    check_domain(x)?;
    Ok((shape.p - 1.0) * x.ln() + (shape.q - 1.0) * (-x).ln_1p() - shape.ln_normalizer())
}

/// The beta density `f(x | p, q)`, evaluated in log space.
pub fn beta_pdf(x: f64, shape: &BetaShape) -> Result<f64, HmmError> {
    ln_beta_pdf(x, shape).map(f64::exp)
}
