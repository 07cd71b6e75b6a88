//! Numerical tolerances shared by the kernels and the pipelines.
//!
//! All values are absolute constants with the defaults below; the CLI can
//! override any of them from its configuration file.

/// Tolerance record threaded through the solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Newton step size at which a Gauss-Legendre node is accepted.
    pub newton_step: f64,
    /// Maximum Newton iterations per node.
    pub newton_max_iter: usize,
    /// Relative residual a linear solve must reach.
    pub solve_residual: f64,
    /// Pivot ratio below which a factorization is declared singular.
    pub singular_pivot: f64,
    /// Relative ridge added to a semidefinite energy matrix, scaled by trace/dim.
    pub energy_ridge: f64,
    /// Negative pencil eigenvalues down to `-gramian_negative * C` are clamped to zero.
    pub gramian_negative: f64,
    /// Relative residual for the HUM Gramian system.
    pub control_residual: f64,
    /// Iteration cap of the preconditioned conjugate gradient fallback.
    pub cg_max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            newton_step: 1e-14,
            newton_max_iter: 100,
            solve_residual: 1e-10,
            singular_pivot: 1e-15,
            energy_ridge: 1e-12,
            gramian_negative: 1e-9,
            control_residual: 1e-8,
            cg_max_iter: 20_000,
        }
    }
}
