//! Discrete HUM boundary controls: the duality right-hand side, the Gramian
//! solve for the adjoint initial data, control synthesis and error norms.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::assembly::SemiDiscreteSystem;
use crate::basis::{self, QuadratureRule};
use crate::error::{Error, Result};
use crate::kernels::{self, DenseMatrix};
use crate::observability;
use crate::tolerances::Tolerances;

/// Extra Gauss points beyond the polynomial degree for data integrals.
const DATA_QUADRATURE_MARGIN: usize = 32;
/// Time samples per unit of polynomial degree.
pub const SAMPLES_PER_DEGREE: usize = 32;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Initial data of the controlled wave and the horizon.
#[derive(Clone)]
pub struct ControlProblem {
    pub y0: ScalarFn,
    pub y1: ScalarFn,
    pub t_final: f64,
}

impl fmt::Debug for ControlProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem").field("t_final", &self.t_final).finish_non_exhaustive()
    }
}

impl ControlProblem {
    pub fn new(
        y0: impl Fn(f64) -> f64 + Send + Sync + 'static,
        y1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        t_final: f64,
    ) -> Result<ControlProblem> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be finite and > 0, got {t_final}")));
        }
        Ok(ControlProblem { y0: Arc::new(y0), y1: Arc::new(y1), t_final })
    }
}

fn data_rule(system: &SemiDiscreteSystem) -> Result<QuadratureRule> {
    basis::gauss_legendre(system.n_poly + DATA_QUADRATURE_MARGIN)
}

/// `(∫ y1 φ_i, -∫ y0 ψ_j)` over the position and velocity bases.
pub fn rhs_vector(problem: &ControlProblem, system: &SemiDiscreteSystem) -> Result<DVector<f64>> {
    let rule = data_rule(system)?;
    let n = system.dof;
    let f = system.formulation;
    let pos = basis::moments(|x| (problem.y1)(x), f.position_basis(), n, &rule);
    let vel = basis::moments(|x| (problem.y0)(x), f.velocity_basis(), n, &rule);
    let mut b = DVector::zeros(2 * n);
    b.rows_mut(0, n).copy_from(&pos);
    b.rows_mut(n, n).copy_from(&(-vel));
    Ok(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverPath {
    Trivial,
    Cholesky,
    PreconditionedCg,
}

impl fmt::Display for SolverPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverPath::Trivial => "trivial",
            SolverPath::Cholesky => "cholesky",
            SolverPath::PreconditionedCg => "pcg",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ControlResult {
    pub u0_coeffs: DVector<f64>,
    pub u1_coeffs: DVector<f64>,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub l2_norm_v: f64,
    /// `‖W a - b‖ / ‖b‖`.
    pub residual: f64,
    /// `|aᵀWa - aᵀb| / |aᵀb|`.
    pub optimality_gap: f64,
    pub solver: SolverPath,
}

/// Composite Simpson rule on equally spaced samples; needs an odd count.
pub fn simpson(h: f64, values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "Simpson's rule needs an odd number (>= 3) of samples, got {n}"
        )));
    }
    let inner: f64 = values[1..n - 1]
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    Ok(h / 3.0 * (values[0] + inner + values[n - 1]))
}

fn jacobi_cg(w: &DenseMatrix, b: &DVector<f64>, tol: &Tolerances) -> Option<DVector<f64>> {
    let diag = w.diagonal();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let b_norm = b.norm();
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut z = r.component_div(&diag);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    for _ in 0..tol.cg_max_iter {
        let wp = w * &p;
        let curv = p.dot(&wp);
        if !(curv > 0.0) {
            return None;
        }
        let step = rz / curv;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &wp, 1.0);
        if r.norm() <= tol.control_residual * b_norm {
            return Some(x);
        }
        z = r.component_div(&diag);
        let rz_next = r.dot(&z);
        p = &z + &p * (rz_next / rz);
        rz = rz_next;
    }
    None
}

fn solve_gramian(w: &DenseMatrix, b: &DVector<f64>, tol: &Tolerances) -> Option<(DVector<f64>, SolverPath)> {
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Some((DVector::zeros(b.len()), SolverPath::Trivial));
    }
    if let Some(chol) = w.clone().cholesky() {
        let a = chol.solve(b);
        if (w * &a - b).norm() <= tol.control_residual * b_norm {
            return Some((a, SolverPath::Cholesky));
        }
    }
    jacobi_cg(w, b, tol).map(|a| (a, SolverPath::PreconditionedCg))
}

/// Solve `W a = b` for the adjoint initial state (optionally restricted to
/// the column span of `subspace`) and sample the control on `n_t + 1`
/// equally spaced times.
pub fn solve_control(
    problem: &ControlProblem,
    system: &SemiDiscreteSystem,
    row: &DVector<f64>,
    w: &DenseMatrix,
    subspace: Option<&DenseMatrix>,
    n_t: usize,
    tol: &Tolerances,
) -> Result<ControlResult> {
    let dim = system.state_dim();
    if w.nrows() != dim || row.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: w.nrows() });
    }
    if n_t < 2 || n_t % 2 == 1 {
        return Err(Error::InvalidParameter(format!("sample count must be even and >= 2, got {n_t}")));
    }
    let b = rhs_vector(problem, system)?;
    let (w_red, b_red) = match subspace {
        Some(s) => {
            let mut wr = s.transpose() * w * s;
            kernels::symmetrize(&mut wr);
            (wr, s.transpose() * &b)
        }
        None => (w.clone(), b.clone()),
    };
    let Some((y, solver)) = solve_gramian(&w_red, &b_red, tol) else {
        let (rhs, _) = observability::energy_pencil_rhs(system, tol);
        let rhs = match subspace {
            Some(s) => s.transpose() * rhs * s,
            None => rhs,
        };
        let smallest = kernels::eig_sym_pencil(&w_red, &rhs)
            .map(|e| e.values[0])
            .unwrap_or(f64::NAN);
        return Err(Error::LossOfObservability { smallest });
    };
    let a = match subspace {
        Some(s) => s * &y,
        None => y.clone(),
    };
    let b_norm = b_red.norm();
    let residual = if b_norm == 0.0 { 0.0 } else { (&w_red * &y - &b_red).norm() / b_norm };
    let ab = y.dot(&b_red);
    let awa = y.dot(&(&w_red * &y));
    let optimality_gap = if ab == 0.0 { 0.0 } else { (awa - ab).abs() / ab.abs() };

    let dt = problem.t_final / n_t as f64;
    let step = kernels::expm(&system.state_matrix, dt)?;
    let sign = system.formulation.control_sign();
    let mut x = a.clone();
    let mut times = Vec::with_capacity(n_t + 1);
    let mut values = Vec::with_capacity(n_t + 1);
    for j in 0..=n_t {
        times.push(problem.t_final * j as f64 / n_t as f64);
        values.push(sign * row.dot(&x));
        x = &step * x;
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain { what: "control sample", value: f64::NAN });
    }
    let squares: Vec<f64> = values.iter().map(|v| v * v).collect();
    let l2_norm_v = simpson(dt, &squares)?.max(0.0).sqrt();
    let n = system.dof;
    Ok(ControlResult {
        u0_coeffs: a.rows(0, n).into_owned(),
        u1_coeffs: a.rows(n, n).into_owned(),
        times,
        values,
        l2_norm_v,
        residual,
        optimality_gap,
        solver,
    })
}

/// Default sample count `32 N`.
pub fn default_samples(n_poly: usize) -> usize {
    SAMPLES_PER_DEGREE * n_poly
}

/// Closed-form adjoint data and control for `y0 = x + 1`, `y1 = 0`, `T = 8`.
#[derive(Debug, Clone, Copy)]
pub struct ExactControl {
    pub t_final: f64,
}

impl Default for ExactControl {
    fn default() -> Self {
        ExactControl { t_final: 8.0 }
    }
}

impl ExactControl {
    pub fn problem(&self) -> ControlProblem {
        ControlProblem::new(|x| x + 1.0, |_| 0.0, self.t_final).expect("positive horizon")
    }

    pub fn u0(&self, _x: f64) -> f64 {
        0.0
    }

    pub fn u0_dx(&self, _x: f64) -> f64 {
        0.0
    }

    pub fn u1(&self, x: f64) -> f64 {
        -x / 4.0 - 0.25
    }

    /// Right-continuous at the jump `t = 4`.
    pub fn v(&self, t: f64) -> f64 {
        if t < 4.0 {
            -t / 4.0 + 0.5
        } else {
            -t / 4.0 + 1.5
        }
    }
}

pub fn exact_example() -> ExactControl {
    ExactControl::default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    /// `|u0^N - u0|` in the H¹₀ seminorm.
    pub e_u0: f64,
    /// `‖u1^N - u1‖` in L².
    pub e_u1: f64,
    /// `‖v^N - v‖` in L²(0, T).
    pub e_v: f64,
}

pub fn error_norms(
    result: &ControlResult,
    system: &SemiDiscreteSystem,
    exact: &ExactControl,
) -> Result<ErrorNorms> {
    let rule = data_rule(system)?;
    let pos: Vec<f64> = result.u0_coeffs.iter().copied().collect();
    let vel: Vec<f64> = result.u1_coeffs.iter().copied().collect();
    let pk = system.formulation.position_basis();
    let vk = system.formulation.velocity_basis();
    let e_u0 = rule
        .integrate(|x| (basis::expansion_eval(pk, &pos, x).1 - exact.u0_dx(x)).powi(2))
        .max(0.0)
        .sqrt();
    let e_u1 = rule
        .integrate(|x| (basis::expansion_eval(vk, &vel, x).0 - exact.u1(x)).powi(2))
        .max(0.0)
        .sqrt();
    let n = result.times.len();
    if n < 3 {
        return Err(Error::InvalidParameter("too few control samples".into()));
    }
    let dt = result.times[1] - result.times[0];
    let diffs: Vec<f64> = result
        .times
        .iter()
        .zip(&result.values)
        .map(|(&t, &v)| (v - exact.v(t)).powi(2))
        .collect();
    let e_v = simpson(dt, &diffs)?.max(0.0).sqrt();
    Ok(ErrorNorms { e_u0, e_u1, e_v })
}
