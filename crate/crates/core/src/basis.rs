//! Legendre polynomials, the boundary-adapted bases built from them, and
//! Gauss-Legendre quadrature on `[-1, 1]`.
//!
//! Basis indices are the mathematical ones: `DirichletBoth` and
//! `LeftDirichlet` start at 1, `PlainLegendre` at 0.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels;
use crate::tolerances::Tolerances;

const ENDPOINT_SLACK: f64 = 1e-12;

/// `(L_k(x), L_k'(x))` by the upward three-term recurrence.
pub fn legendre_eval(k: usize, x: f64) -> Result<(f64, f64)> {
    check_domain(x)?;
    Ok(legendre_unchecked(k, x))
}

fn check_domain(x: f64) -> Result<()> {
    if x.is_nan() || x.abs() > 1.0 + ENDPOINT_SLACK {
        return Err(Error::Domain { what: "Legendre polynomials", value: x });
    }
    Ok(())
}

fn legendre_unchecked(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    let (mut d0, mut d1) = (0.0, 1.0);
    if k == 0 {
        return (p0, d0);
    }
    for j in 1..k {
        let jf = j as f64;
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        // L'_{j+1} = L'_{j-1} + (2j+1) L_j
        let d2 = d0 + (2.0 * jf + 1.0) * p1;
        (p0, p1) = (p1, p2);
        (d0, d1) = (d1, d2);
    }
    (p1, d1)
}

/// Values and derivatives of `L_0 .. L_{n}` at `x`.
pub fn legendre_table(n: usize, x: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n + 1);
    out.push((1.0, 0.0));
    if n == 0 {
        return out;
    }
    out.push((x, 1.0));
    for j in 1..n {
        let jf = j as f64;
        let (p0, d0) = out[j - 1];
        let (p1, _) = out[j];
        let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
        out.push((p2, d0 + (2.0 * jf + 1.0) * p1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// `L~_k = (L_{k-1} - L_{k+1}) / sqrt(4k+2)`, vanishing at both ends, `k >= 1`.
    DirichletBoth,
    /// `L^_k = L_k - (-1)^k`, vanishing at `x = -1`, `k >= 1`.
    LeftDirichlet,
    /// `L_k`, `k >= 0`.
    PlainLegendre,
}

impl BasisKind {
    pub fn first_index(self) -> usize {
        match self {
            BasisKind::PlainLegendre => 0,
            _ => 1,
        }
    }

    /// Indices of the first `count` functions of the family.
    pub fn indices(self, count: usize) -> std::ops::Range<usize> {
        self.first_index()..self.first_index() + count
    }

    /// Highest Legendre degree touched by basis function `k`.
    pub fn degree(self, k: usize) -> usize {
        match self {
            BasisKind::DirichletBoth => k + 1,
            _ => k,
        }
    }

    fn eval_from_table(self, k: usize, table: &[(f64, f64)]) -> (f64, f64) {
        match self {
            BasisKind::DirichletBoth => {
                let s = 1.0 / (4.0 * k as f64 + 2.0).sqrt();
                let (a, da) = table[k - 1];
                let (b, db) = table[k + 1];
                (s * (a - b), s * (da - db))
            }
            BasisKind::LeftDirichlet => {
                let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
                (table[k].0 - sign, table[k].1)
            }
            BasisKind::PlainLegendre => table[k],
        }
    }
}

/// Value and derivative of basis function `k` of the family `kind`.
pub fn basis_eval(kind: BasisKind, k: usize, x: f64) -> Result<(f64, f64)> {
    if k < kind.first_index() {
        return Err(Error::Index { what: "basis family", index: k });
    }
    check_domain(x)?;
    let table = legendre_table(kind.degree(k), x);
    Ok(kind.eval_from_table(k, &table))
}

/// Values and derivatives of the first `count` functions of `kind` at `x`.
pub fn basis_table(kind: BasisKind, count: usize, x: f64) -> Vec<(f64, f64)> {
    if count == 0 {
        return Vec::new();
    }
    let last = kind.first_index() + count - 1;
    let table = legendre_table(kind.degree(last), x);
    kind.indices(count).map(|k| kind.eval_from_table(k, &table)).collect()
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Composite rule over `[a, b]` split into `panels` equal pieces.
    pub fn composite(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let h = (b - a) / panels as f64;
        (0..panels)
            .flat_map(|p| {
                let mid = a + (p as f64 + 0.5) * h;
                self.nodes
                    .iter()
                    .zip(&self.weights)
                    .map(move |(&x, &w)| (mid + 0.5 * h * x, 0.5 * h * w))
            })
            .collect()
    }
}

/// Number of Gauss points integrating polynomials of degree `d` exactly.
pub fn order_for_degree(d: usize) -> usize {
    (d + 2).div_ceil(2).max(1)
}

/// `n`-point Gauss-Legendre rule; nodes by Newton iteration on `L_n`.
pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
    gauss_legendre_with(n, &Tolerances::default())
}

pub fn gauss_legendre_with(n: usize, tol: &Tolerances) -> Result<QuadratureRule> {
    if n == 0 {
        return Err(Error::InvalidParameter("quadrature order must be >= 1".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Chebyshev-angle initial guess, largest root first
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut converged = false;
        for _ in 0..tol.newton_max_iter {
            let (p, dp) = legendre_unchecked(n, x);
            let step = p / dp;
            x -= step;
            if step.abs() <= tol.newton_step {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                what: "Gauss-Legendre Newton iteration",
                iterations: tol.newton_max_iter,
            });
        }
        let (_, dp) = legendre_unchecked(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Gram (mass) matrix of the first `n_modes` functions of `kind`.
pub fn gram_matrix(kind: BasisKind, n_modes: usize, rule: &QuadratureRule) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(n_modes, n_modes);
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let vals = basis_table(kind, n_modes, x);
        for i in 0..n_modes {
            for j in 0..n_modes {
                g[(i, j)] += w * vals[i].0 * vals[j].0;
            }
        }
    }
    g
}

/// Moments `∫ f φ_k dx` of the first `n_modes` functions of `kind`.
pub fn moments(
    f: impl Fn(f64) -> f64,
    kind: BasisKind,
    n_modes: usize,
    rule: &QuadratureRule,
) -> DVector<f64> {
    let mut m = DVector::zeros(n_modes);
    for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
        let fx = f(x);
        for (k, (v, _)) in basis_table(kind, n_modes, x).into_iter().enumerate() {
            m[k] += w * fx * v;
        }
    }
    m
}

/// Coefficients of the L² projection of `f` onto the first `n_modes`
/// functions of `kind`.
///
/// Exact for polynomial `f` when the rule integrates `f φ_k` and `φ_j φ_k`
/// exactly; for general `f` the result is as accurate as the quadrature.
pub fn project(
    f: impl Fn(f64) -> f64,
    kind: BasisKind,
    n_modes: usize,
    rule: &QuadratureRule,
) -> Result<DVector<f64>> {
    let g = gram_matrix(kind, n_modes, rule);
    let b = moments(f, kind, n_modes, rule);
    kernels::solve(&g, &b, true)
}

/// Evaluate `Σ c_k φ_k(x)` and its derivative.
pub fn expansion_eval(kind: BasisKind, coeffs: &[f64], x: f64) -> (f64, f64) {
    basis_table(kind, coeffs.len(), x)
        .into_iter()
        .zip(coeffs)
        .fold((0.0, 0.0), |(v, d), ((p, dp), c)| (v + c * p, d + c * dp))
}
