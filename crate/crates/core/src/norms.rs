//! Norms selectable by identifier.
//!
//! | id                  | norm                                  |
//! |---------------------|---------------------------------------|
//! | `bv`, `tv`          | total variation                       |
//! | `lp:<p>`            | Lebesgue, `p >= 1` or `inf`           |
//! | `lorentz:<p>:<q>`   | Lorentz quasinorm, `q` may be `inf`   |
//! | `critical:<q>`      | `L^{1*,q}` in the dimension of the input |

use crate::bv::total_variation;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::rearrange::{critical_exponent, lebesgue_norm, lorentz_norm_of, LorentzIndex};

pub trait FunctionNorm: Send + Sync {
    fn id(&self) -> String;
    fn eval(&self, u: &GridFunction) -> Result<f64>;
}

pub struct TotalVariation;

impl FunctionNorm for TotalVariation {
    fn id(&self) -> String {
        "bv".into()
    }
    fn eval(&self, u: &GridFunction) -> Result<f64> {
        Ok(total_variation(u))
    }
}

pub struct Lebesgue {
    pub p: f64,
}

impl FunctionNorm for Lebesgue {
    fn id(&self) -> String {
        format!("lp:{}", fmt_exponent(self.p))
    }
    fn eval(&self, u: &GridFunction) -> Result<f64> {
        lebesgue_norm(u, self.p)
    }
}

pub struct Lorentz {
    pub index: LorentzIndex,
}

impl FunctionNorm for Lorentz {
    fn id(&self) -> String {
        format!("lorentz:{}:{}", fmt_exponent(self.index.p), fmt_exponent(self.index.q))
    }
    fn eval(&self, u: &GridFunction) -> Result<f64> {
        Ok(lorentz_norm_of(u, self.index))
    }
}

/// `L^{1*,q}` with `1* = N/(N-1)` taken from the argument.
pub struct CriticalLorentz {
    pub q: f64,
}

impl FunctionNorm for CriticalLorentz {
    fn id(&self) -> String {
        format!("critical:{}", fmt_exponent(self.q))
    }
    fn eval(&self, u: &GridFunction) -> Result<f64> {
        if u.dim() < 2 {
            return Err(Error::UnsupportedDimension(u.dim()));
        }
        let idx = LorentzIndex::new(critical_exponent(u.dim()), self.q)?;
        Ok(lorentz_norm_of(u, idx))
    }
}

fn fmt_exponent(x: f64) -> String {
    if x.is_infinite() {
        "inf".into()
    } else {
        x.to_string()
    }
}

fn parse_exponent(id: &str, s: &str) -> Result<f64> {
    match s {
        "inf" | "infinity" => Ok(f64::INFINITY),
        _ => s
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::UnknownNorm(id.to_string())),
    }
}

/// Look a norm up by identifier.
pub fn norm_by_id(id: &str) -> Result<Box<dyn FunctionNorm>> {
    let parts: Vec<&str> = id.split(':').collect();
    Ok(match parts.as_slice() {
        ["bv"] | ["tv"] => Box::new(TotalVariation),
        ["lp", p] => {
            let p = parse_exponent(id, p)?;
            if !(p >= 1.0) {
                return Err(Error::Index(format!("Lebesgue exponent must be >= 1, got {p}")));
            }
            Box::new(Lebesgue { p })
        }
        ["lorentz", p, q] => Box::new(Lorentz {
            index: LorentzIndex::new(parse_exponent(id, p)?, parse_exponent(id, q)?)?,
        }),
        ["critical", q] => {
            let q = parse_exponent(id, q)?;
            LorentzIndex::new(2.0, q)?;
            Box::new(CriticalLorentz { q })
        }
        _ => return Err(Error::UnknownNorm(id.to_string())),
    })
}
