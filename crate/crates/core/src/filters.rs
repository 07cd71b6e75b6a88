//! Spectral filters and the filtered boundary observation.

use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::assembly::{Formulation, SemiDiscreteSystem};
use crate::error::{Error, Result};

/// `-ln(2^-52)`: the exponential filter then reaches machine epsilon at 1.
pub const DEFAULT_EXP_STRENGTH: f64 = 52.0 * LN_2;
const DEFAULT_ORDER: u32 = 4;
const EXACT_NORM_MAX_ORDER: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Filter {
    Cesaro,
    Lanczos,
    RaisedCosine,
    SharpenedRaisedCosine,
    Vandeven { order: u32 },
    Exponential { order: u32, strength: f64 },
}

impl Filter {
    pub fn new_vandeven(order: u32) -> Result<Filter> {
        if order == 0 {
            return Err(Error::InvalidParameter("Vandeven order must be >= 1".into()));
        }
        Ok(Filter::Vandeven { order })
    }

    pub fn new_exponential(order: u32, strength: f64) -> Result<Filter> {
        if order == 0 {
            return Err(Error::InvalidParameter("exponential order must be >= 1".into()));
        }
        if !(strength > 0.0) || !strength.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "exponential strength must be finite and > 0, got {strength}"
            )));
        }
        Ok(Filter::Exponential { order, strength })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Filter::Cesaro => "cesaro",
            Filter::Lanczos => "lanczos",
            Filter::RaisedCosine => "raised-cosine",
            Filter::SharpenedRaisedCosine => "sharpened-raised-cosine",
            Filter::Vandeven { .. } => "vandeven",
            Filter::Exponential { .. } => "exponential",
        }
    }

    pub fn sigma(&self, eta: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Domain { what: "filter argument", value: eta });
        }
        Ok(match *self {
            Filter::Cesaro => 1.0 - eta,
            Filter::Lanczos => {
                if eta == 0.0 {
                    1.0
                } else {
                    (PI * eta).sin() / (PI * eta)
                }
            }
            Filter::RaisedCosine => raised_cosine(eta),
            Filter::SharpenedRaisedCosine => {
                let s = raised_cosine(eta);
                s.powi(4) * (35.0 - 84.0 * s + 70.0 * s * s - 20.0 * s * s * s)
            }
            Filter::Vandeven { order } => vandeven(order, eta),
            Filter::Exponential { order, strength } => (-strength * eta.powi(order as i32)).exp(),
        })
    }
}

fn raised_cosine(eta: f64) -> f64 {
    0.5 * (1.0 + (PI * eta).cos())
}

/// `C(n, k)`, exact in integers for small `n`.
fn binomial(n: u32, k: u32) -> f64 {
    if n < 2 * EXACT_NORM_MAX_ORDER {
        let (mut num, mut den) = (1u128, 1u128);
        for i in 0..k as u128 {
            num *= n as u128 - i;
            den *= i + 1;
        }
        (num / den) as f64
    } else {
        let ln_fact = |m: u32| (2..=m).map(|i| (i as f64).ln()).sum::<f64>();
        (ln_fact(n) - ln_fact(k) - ln_fact(n - k)).exp().round()
    }
}

/// `1 - (2p-1)!/((p-1)!)² ∫_0^η (t(1-t))^{p-1} dt`, written as the lower
/// tail of a Bernstein sum so that every term is positive.
fn vandeven(p: u32, eta: f64) -> f64 {
    let n = 2 * p - 1;
    (0..p)
        .map(|j| binomial(n, j) * eta.powi(j as i32) * (1.0 - eta).powi((n - j) as i32))
        .sum()
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filter::Vandeven { order } => write!(f, "vandeven:{order}"),
            Filter::Exponential { order, strength } => write!(f, "exponential:{order}:{strength}"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Filter {
    type Err = Error;

    /// `name[:p[:alpha]]`.
    fn from_str(s: &str) -> Result<Filter> {
        let mut parts = s.trim().split(':');
        let name = parts.next().unwrap_or_default().to_ascii_lowercase();
        let order = parts
            .next()
            .map(|p| p.parse::<u32>().map_err(|_| Error::InvalidParameter(format!("bad filter order {p:?}"))))
            .transpose()?;
        let strength = parts
            .next()
            .map(|a| a.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("bad filter strength {a:?}"))))
            .transpose()?;
        if parts.next().is_some() {
            return Err(Error::InvalidParameter(format!("too many filter fields in {s:?}")));
        }
        let plain = |f: Filter| {
            if order.is_some() || strength.is_some() {
                Err(Error::InvalidParameter(format!("filter {name} takes no parameters")))
            } else {
                Ok(f)
            }
        };
        match name.as_str() {
            "cesaro" => plain(Filter::Cesaro),
            "lanczos" => plain(Filter::Lanczos),
            "raised-cosine" => plain(Filter::RaisedCosine),
            "sharpened-raised-cosine" => plain(Filter::SharpenedRaisedCosine),
            "vandeven" => {
                if strength.is_some() {
                    return Err(Error::InvalidParameter("vandeven takes only an order".into()));
                }
                Filter::new_vandeven(order.unwrap_or(DEFAULT_ORDER))
            }
            "exponential" => Filter::new_exponential(
                order.unwrap_or(DEFAULT_ORDER),
                strength.unwrap_or(DEFAULT_EXP_STRENGTH),
            ),
            _ => Err(Error::InvalidParameter(format!("unknown filter {name:?}"))),
        }
    }
}

/// Boundary observation of the filtered expansion: mode `k` weighted by
/// `σ((k-1)/(N-1))`.
pub fn filtered_observation_row(system: &SemiDiscreteSystem, filter: &Filter) -> Result<DVector<f64>> {
    if system.formulation != Formulation::Classical {
        return Err(Error::Unsupported(format!(
            "filtering applies to the classical formulation only, got {}",
            system.formulation
        )));
    }
    let n = system.n_poly as f64;
    let mut row = system.observation_row.clone();
    for k in 1..=system.dof {
        row[k - 1] *= filter.sigma((k as f64 - 1.0) / (n - 1.0))?;
    }
    Ok(row)
}
