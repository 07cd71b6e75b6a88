//! Named observation pipelines: a formulation plus the boundary observation
//! (and modal restriction) used for constants and controls.
//!
//! Grammar: `classical`, `truncated[:M]`, `filter:name[:p[:alpha]]`,
//! `mixed`, `nitsche-sym:γ[:drop]`, `nitsche-nonsym:γ[:drop]`. `drop`
//! observes `u_x(1, t)` alone, without the `γN² u(1, t)` term.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::assembly::{assemble, Formulation, SemiDiscreteSystem};
use crate::error::{Error, Result};
use crate::filters::{filtered_observation_row, Filter};
use crate::hum::{self, ControlProblem, ControlResult};
use crate::kernels::DenseMatrix;
use crate::observability::{self, GramianResult};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pipeline {
    Classical,
    /// Keep the first `modes` eigenmodes; `None` means `⌊2N/π⌋ - 2`.
    Truncated { modes: Option<usize> },
    Filtered(Filter),
    Mixed,
    NitscheSymmetric { gamma: f64, drop_penalty: bool },
    NitscheNonSymmetric { gamma: f64, drop_penalty: bool },
}

/// A system together with the observation a pipeline applies to it.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub system: SemiDiscreteSystem,
    pub row: DVector<f64>,
    pub subspace: Option<DenseMatrix>,
}

impl Pipeline {
    pub fn formulation(&self) -> Formulation {
        match *self {
            Pipeline::Classical | Pipeline::Truncated { .. } | Pipeline::Filtered(_) => {
                Formulation::Classical
            }
            Pipeline::Mixed => Formulation::Mixed,
            Pipeline::NitscheSymmetric { gamma, .. } => Formulation::NitscheSymmetric { gamma },
            Pipeline::NitscheNonSymmetric { gamma, .. } => Formulation::NitscheNonSymmetric { gamma },
        }
    }

    fn drops_penalty(&self) -> bool {
        matches!(
            self,
            Pipeline::NitscheSymmetric { drop_penalty: true, .. }
                | Pipeline::NitscheNonSymmetric { drop_penalty: true, .. }
        )
    }

    pub fn prepare(&self, n_poly: usize) -> Result<Prepared> {
        let system = assemble(self.formulation(), n_poly)?;
        let (row, subspace) = match *self {
            Pipeline::Truncated { modes } => {
                let m = modes.unwrap_or_else(|| observability::default_truncation(n_poly));
                let report = observability::spectrum(&system)?;
                let t = observability::truncated_observation(&system, &report, m)?;
                (t.row, Some(t.basis))
            }
            Pipeline::Filtered(f) => (filtered_observation_row(&system, &f)?, None),
            _ if self.drops_penalty() => (system.trace_derivative_row(), None),
            _ => (system.observation_row.clone(), None),
        };
        Ok(Prepared { system, row, subspace })
    }

    pub fn constants(&self, n_poly: usize, t_final: f64, tol: &Tolerances) -> Result<GramianResult> {
        let p = self.prepare(n_poly)?;
        observability::observe(&p.system, &p.row, t_final, p.subspace.as_ref(), self.to_string(), tol)
    }

    /// HUM control of `problem`; the dropped-penalty observations do not
    /// come from a controlled scheme and are rejected.
    pub fn control(
        &self,
        n_poly: usize,
        problem: &ControlProblem,
        n_t: usize,
        tol: &Tolerances,
    ) -> Result<(Prepared, GramianResult, ControlResult)> {
        if self.drops_penalty() {
            return Err(Error::Unsupported(format!("{self} has no associated control problem")));
        }
        let p = self.prepare(n_poly)?;
        let g = observability::observe(
            &p.system,
            &p.row,
            problem.t_final,
            p.subspace.as_ref(),
            self.to_string(),
            tol,
        )?;
        let r = hum::solve_control(problem, &p.system, &p.row, &g.w, p.subspace.as_ref(), n_t, tol)?;
        Ok((p, g, r))
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let drop = |d: bool| if d { ":drop" } else { "" };
        match self {
            Pipeline::Classical => f.write_str("classical"),
            Pipeline::Truncated { modes: None } => f.write_str("truncated"),
            Pipeline::Truncated { modes: Some(m) } => write!(f, "truncated:{m}"),
            Pipeline::Filtered(filter) => write!(f, "filter:{filter}"),
            Pipeline::Mixed => f.write_str("mixed"),
            Pipeline::NitscheSymmetric { gamma, drop_penalty } => {
                write!(f, "nitsche-sym:{gamma}{}", drop(*drop_penalty))
            }
            Pipeline::NitscheNonSymmetric { gamma, drop_penalty } => {
                write!(f, "nitsche-nonsym:{gamma}{}", drop(*drop_penalty))
            }
        }
    }
}

fn parse_nitsche(rest: Option<&str>, default_gamma: Option<f64>) -> Result<(f64, bool)> {
    let mut fields = rest.map(|r| r.split(':').collect::<Vec<_>>()).unwrap_or_default();
    let drop_penalty = fields.last() == Some(&"drop");
    if drop_penalty {
        fields.pop();
    }
    let gamma = match fields.as_slice() {
        [] => default_gamma.ok_or_else(|| Error::InvalidParameter("Nitsche pipelines need a penalty".into()))?,
        [g] => g
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("bad penalty {g:?}")))?,
        _ => return Err(Error::InvalidParameter("too many Nitsche fields".into())),
    };
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!("penalty must be finite and > 0, got {gamma}")));
    }
    Ok((gamma, drop_penalty))
}

impl Pipeline {
    /// Parse with a fallback penalty for `nitsche-*` entries that omit it.
    pub fn parse_with_gamma(s: &str, default_gamma: Option<f64>) -> Result<Pipeline> {
        let s = s.trim();
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head, rest) {
            ("classical", None) => Ok(Pipeline::Classical),
            ("mixed", None) => Ok(Pipeline::Mixed),
            ("truncated", None) => Ok(Pipeline::Truncated { modes: None }),
            ("truncated", Some(m)) => m
                .parse::<usize>()
                .ok()
                .filter(|&m| m >= 1)
                .map(|m| Pipeline::Truncated { modes: Some(m) })
                .ok_or_else(|| Error::InvalidParameter(format!("bad truncation order {m:?}"))),
            ("filter", Some(spec)) => Ok(Pipeline::Filtered(spec.parse()?)),
            ("nitsche-sym", rest) => {
                let (gamma, drop_penalty) = parse_nitsche(rest, default_gamma)?;
                Ok(Pipeline::NitscheSymmetric { gamma, drop_penalty })
            }
            ("nitsche-nonsym", rest) => {
                let (gamma, drop_penalty) = parse_nitsche(rest, default_gamma)?;
                Ok(Pipeline::NitscheNonSymmetric { gamma, drop_penalty })
            }
            _ => Err(Error::InvalidParameter(format!("unknown pipeline {s:?}"))),
        }
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Pipeline> {
        Pipeline::parse_with_gamma(s, None)
    }
}
