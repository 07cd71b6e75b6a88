//! The four semi-discrete systems as dense first-order systems
//! `x' = A x` with `x = (positions, velocities)`.
//!
//! Matrix entries are 1-based in the formulas below and 0-based in
//! storage: entry `(i, j)` of a formula lives at `[(i - 1, j - 1)]`.

use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::basis::BasisKind;
use crate::error::{Error, Result};
use crate::kernels::{self, DenseMatrix};

pub const MIN_DEGREE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Formulation {
    Classical,
    Mixed,
    NitscheSymmetric { gamma: f64 },
    NitscheNonSymmetric { gamma: f64 },
}

impl Formulation {
    pub fn gamma(&self) -> Option<f64> {
        match *self {
            Formulation::NitscheSymmetric { gamma } | Formulation::NitscheNonSymmetric { gamma } => {
                Some(gamma)
            }
            _ => None,
        }
    }

    pub fn is_nitsche(&self) -> bool {
        self.gamma().is_some()
    }

    pub fn dof(&self, n_poly: usize) -> usize {
        if self.is_nitsche() {
            n_poly
        } else {
            n_poly - 1
        }
    }

    pub fn position_basis(&self) -> BasisKind {
        if self.is_nitsche() {
            BasisKind::LeftDirichlet
        } else {
            BasisKind::DirichletBoth
        }
    }

    pub fn velocity_basis(&self) -> BasisKind {
        match self {
            Formulation::Mixed => BasisKind::PlainLegendre,
            _ => self.position_basis(),
        }
    }

    /// Sign relating the boundary observation to the HUM control.
    ///
    /// Pairing the controlled non-symmetric scheme with its adjoint gives
    /// `v = -(u_x(1) + γN² u(1))`; every other scheme uses the row as is.
    pub fn control_sign(&self) -> f64 {
        match self {
            Formulation::NitscheNonSymmetric { .. } => -1.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formulation::Classical => write!(f, "classical"),
            Formulation::Mixed => write!(f, "mixed"),
            Formulation::NitscheSymmetric { gamma } => write!(f, "nitsche-sym:{gamma}"),
            Formulation::NitscheNonSymmetric { gamma } => write!(f, "nitsche-nonsym:{gamma}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SemiDiscreteSystem {
    pub formulation: Formulation,
    pub n_poly: usize,
    /// Coefficients per block; the state has length `2 * dof`.
    pub dof: usize,
    pub state_matrix: DenseMatrix,
    pub mass: DenseMatrix,
    pub stiffness: DenseMatrix,
    /// Mixed only: the position/velocity coupling block.
    pub coupling: Option<DenseMatrix>,
    pub energy_position: DenseMatrix,
    pub energy_velocity: DenseMatrix,
    pub observation_row: DVector<f64>,
}

/// Pentadiagonal mass matrix of the `L~_k` basis, `k = 1..=n`.
pub fn classical_mass(n: usize) -> DenseMatrix {
    let mut m = DenseMatrix::zeros(n, n);
    for i in 1..=n {
        let fi = i as f64;
        m[(i - 1, i - 1)] = 2.0 / ((2.0 * fi - 1.0) * (2.0 * fi + 3.0));
        if i + 2 <= n {
            let v = -1.0 / ((2.0 * fi + 3.0) * ((2.0 * fi + 1.0) * (2.0 * fi + 5.0)).sqrt());
            m[(i - 1, i + 1)] = v;
            m[(i + 1, i - 1)] = v;
        }
    }
    m
}

/// `diag(2/(2i-1))`: the mass of `L_0 .. L_{n-1}`.
pub fn mixed_mass(n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |r, c| if r == c { 2.0 / (2.0 * r as f64 + 1.0) } else { 0.0 })
}

/// Lower two-band coupling `D(i, j) = ∫ L~_j L_{i-1}`.
pub fn mixed_coupling(n: usize) -> DenseMatrix {
    let s2 = std::f64::consts::SQRT_2;
    let mut d = DenseMatrix::zeros(n, n);
    for j in 1..=n {
        let fj = j as f64;
        d[(j - 1, j - 1)] = s2 / ((2.0 * fj + 1.0).sqrt() * (2.0 * fj - 1.0));
        if j + 2 <= n {
            d[(j + 1, j - 1)] = -s2 / ((2.0 * fj + 1.0).sqrt() * (2.0 * fj + 3.0));
        }
    }
    d
}

/// Mass matrix of the `L^_k` basis, `k = 1..=n`.
pub fn nitsche_mass(n: usize) -> DenseMatrix {
    DenseMatrix::from_fn(n, n, |r, c| {
        let (i, j) = (r + 1, c + 1);
        if i == j {
            (4.0 * i as f64 + 4.0) / (2.0 * i as f64 + 1.0)
        } else if (i + j) % 2 == 1 {
            -2.0
        } else {
            2.0
        }
    })
}

/// Stiffness, boundary-consistency and boundary-penalty parts of the
/// Nitsche forms in the `L^_k` basis. Row index = test function.
pub fn nitsche_parts(n: usize) -> (DenseMatrix, DenseMatrix, DenseMatrix) {
    let p = DenseMatrix::from_fn(n, n, |r, c| {
        let (i, j) = (r + 1, c + 1);
        let m = i.min(j) as f64;
        if (i + j) % 2 == 0 {
            m * m + m
        } else {
            0.0
        }
    });
    let q = DenseMatrix::from_fn(n, n, |r, c| {
        let (i, j) = (r + 1, (c + 1) as f64);
        if i % 2 == 1 {
            j * j + j
        } else {
            0.0
        }
    });
    let pen = DenseMatrix::from_fn(n, n, |r, c| {
        if r % 2 == 0 && c % 2 == 0 {
            4.0
        } else {
            0.0
        }
    });
    (p, q, pen)
}

/// `(L^_k'(1), L^_k(1))` for `k = 1..=n`.
pub fn nitsche_trace_rows(n: usize) -> (DVector<f64>, DVector<f64>) {
    let dx = DVector::from_fn(n, |r, _| {
        let k = (r + 1) as f64;
        k * (k + 1.0) / 2.0
    });
    let val = DVector::from_fn(n, |r, _| if r % 2 == 0 { 2.0 } else { 0.0 });
    (dx, val)
}

/// `L~_k'(1) = -sqrt(k + 1/2)` for `k = 1..=n`.
pub fn dirichlet_trace_row(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |r, _| -((r + 1) as f64 + 0.5).sqrt())
}

fn second_order_state(mass: &DenseMatrix, stiffness: &DenseMatrix) -> Result<DenseMatrix> {
    let n = mass.nrows();
    let accel = -kernels::solve_matrix(mass, stiffness, true)?;
    let mut a = DenseMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();
    a.view_mut((n, 0), (n, n)).copy_from(&accel);
    Ok(a)
}

fn pad_row(positions: &DVector<f64>) -> DVector<f64> {
    let n = positions.len();
    let mut row = DVector::zeros(2 * n);
    row.rows_mut(0, n).copy_from(positions);
    row
}

pub fn assemble(formulation: Formulation, n_poly: usize) -> Result<SemiDiscreteSystem> {
    if n_poly < MIN_DEGREE {
        return Err(Error::InvalidParameter(format!(
            "polynomial degree must be >= {MIN_DEGREE}, got {n_poly}"
        )));
    }
    if let Some(g) = formulation.gamma() {
        if !g.is_finite() || g <= 0.0 {
            return Err(Error::InvalidParameter(format!("penalty must be finite and > 0, got {g}")));
        }
    }
    let dof = formulation.dof(n_poly);
    let nn = (n_poly * n_poly) as f64;
    let sys = match formulation {
        Formulation::Classical => {
            let mass = classical_mass(dof);
            let stiffness = DenseMatrix::identity(dof, dof);
            SemiDiscreteSystem {
                formulation,
                n_poly,
                dof,
                state_matrix: second_order_state(&mass, &stiffness)?,
                energy_position: stiffness.clone(),
                energy_velocity: mass.clone(),
                observation_row: pad_row(&dirichlet_trace_row(dof)),
                mass,
                stiffness,
                coupling: None,
            }
        }
        Formulation::Mixed => {
            let mass = mixed_mass(dof);
            let stiffness = DenseMatrix::identity(dof, dof);
            let d = mixed_coupling(dof);
            // [[D, 0], [0, D^T]]^{-1} [[0, M], [-K, 0]]
            let top = d.clone().lu().solve(&mass).ok_or(Error::Singular { condition: 0.0 })?;
            let bottom = -d.transpose().lu().solve(&stiffness).ok_or(Error::Singular { condition: 0.0 })?;
            let mut a = DenseMatrix::zeros(2 * dof, 2 * dof);
            a.view_mut((0, dof), (dof, dof)).copy_from(&top);
            a.view_mut((dof, 0), (dof, dof)).copy_from(&bottom);
            SemiDiscreteSystem {
                formulation,
                n_poly,
                dof,
                state_matrix: a,
                energy_position: stiffness.clone(),
                energy_velocity: mass.clone(),
                observation_row: pad_row(&dirichlet_trace_row(dof)),
                mass,
                stiffness,
                coupling: Some(d),
            }
        }
        Formulation::NitscheSymmetric { gamma } => {
            let mass = nitsche_mass(dof);
            let (p, q, pen) = nitsche_parts(dof);
            let stiffness = &p - &q - q.transpose() + pen * (gamma * nn);
            let (dx, val) = nitsche_trace_rows(dof);
            SemiDiscreteSystem {
                formulation,
                n_poly,
                dof,
                state_matrix: second_order_state(&mass, &stiffness)?,
                energy_position: stiffness.clone(),
                energy_velocity: mass.clone(),
                observation_row: pad_row(&(dx - val * (gamma * nn))),
                mass,
                stiffness,
                coupling: None,
            }
        }
        Formulation::NitscheNonSymmetric { gamma } => {
            let mass = nitsche_mass(dof);
            let (p, q, pen) = nitsche_parts(dof);
            let stiffness = &p - &q + q.transpose() + pen * (gamma * nn);
            let (dx, val) = nitsche_trace_rows(dof);
            // The observed trajectories solve the adjoint of the controlled
            // scheme, whose stiffness is K^T.
            let state_matrix = second_order_state(&mass, &stiffness.transpose())?;
            SemiDiscreteSystem {
                formulation,
                n_poly,
                dof,
                state_matrix,
                energy_position: p,
                energy_velocity: mass.clone(),
                observation_row: pad_row(&(dx + val * (gamma * nn))),
                mass,
                stiffness,
                coupling: None,
            }
        }
    };
    Ok(sys)
}

impl SemiDiscreteSystem {
    pub fn state_dim(&self) -> usize {
        2 * self.dof
    }

    /// Observation of `u_x(1, t)` alone, without any penalty term.
    pub fn trace_derivative_row(&self) -> DVector<f64> {
        match self.formulation {
            Formulation::Classical | Formulation::Mixed => pad_row(&dirichlet_trace_row(self.dof)),
            _ => pad_row(&nitsche_trace_rows(self.dof).0),
        }
    }

    /// `(1/2)(posᵀ Ke pos + velᵀ Me vel)`.
    pub fn energy(&self, state: &DVector<f64>) -> Result<f64> {
        if state.len() != self.state_dim() {
            return Err(Error::DimensionMismatch { expected: self.state_dim(), found: state.len() });
        }
        let pos = state.rows(0, self.dof);
        let vel = state.rows(self.dof, self.dof);
        let ep = (pos.transpose() * &self.energy_position * pos)[(0, 0)];
        let ev = (vel.transpose() * &self.energy_velocity * vel)[(0, 0)];
        Ok(0.5 * (ep + ev))
    }

    /// Propagate a random unit-energy state and report the largest relative
    /// energy drift over `n_check` equally spaced times in `(0, T]`.
    pub fn verify_energy_conservation(&self, t_final: f64, n_check: usize, seed: u64) -> Result<f64> {
        if let Formulation::NitscheNonSymmetric { .. } = self.formulation {
            return Err(Error::Unsupported(
                "non-symmetric Nitsche does not conserve energy".into(),
            ));
        }
        if !(t_final > 0.0) || n_check == 0 {
            return Err(Error::InvalidParameter("need T > 0 and n_check >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = DVector::from_fn(self.state_dim(), |_, _| rng.random::<f64>() - 0.5);
        let e0 = self.energy(&x)?;
        x /= e0.sqrt();
        let mut drift: f64 = 0.0;
        for j in 1..=n_check {
            let t = t_final * j as f64 / n_check as f64;
            let xt = kernels::expm(&self.state_matrix, t)? * &x;
            drift = drift.max((self.energy(&xt)? - 1.0).abs());
        }
        Ok(drift)
    }

    /// Row-major dump for debugging.
    pub fn to_json(&self) -> Value {
        fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().copied().collect()).collect()
        }
        json!({
            "formulation": self.formulation.to_string(),
            "n_poly": self.n_poly,
            "dof": self.dof,
            "state_matrix": rows(&self.state_matrix),
            "mass": rows(&self.mass),
            "stiffness": rows(&self.stiffness),
            "coupling": self.coupling.as_ref().map(rows),
            "energy_position": rows(&self.energy_position),
            "energy_velocity": rows(&self.energy_velocity),
            "observation_row": self.observation_row.iter().copied().collect::<Vec<_>>(),
        })
    }
}
