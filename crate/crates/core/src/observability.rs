//! Discrete spectrum diagnostics, the boundary-observability Gramian and
//! the observability / continuity constants.

use std::f64::consts::PI;

use nalgebra::{DVector, Schur};

use crate::assembly::{Formulation, SemiDiscreteSystem};
use crate::basis::gauss_legendre;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::kernels::{self, DenseMatrix};
use crate::tolerances::Tolerances;

/// Longest time panel used by [`gramian_quadrature`].
pub const MAX_PANEL: f64 = 0.25;
const POINTS_PER_PANEL: usize = 16;

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub n_poly: usize,
    /// Ascending `λ_k`, `k = 1..=dof`.
    pub lambdas: Vec<f64>,
    /// `sqrt(λ_k) - sqrt(λ_{k-1})`, with `sqrt(λ_0) = 0`.
    pub sqrt_gaps: Vec<f64>,
    /// `|φ_k'(1)|² / ∫ |φ_k'|²`.
    pub deltas: Vec<f64>,
    /// Mass-normalised eigenvectors, one per column.
    pub eigvec_coeffs: DenseMatrix,
}

/// `sqrt(λ_k)` of the continuous Dirichlet problem on `(-1, 1)`.
pub fn reference_frequency(k: usize) -> f64 {
    k as f64 * PI / 2.0
}

/// Number of modes kept by the default Fourier truncation, `⌊2N/π⌋ - 2`.
pub fn default_truncation(n_poly: usize) -> usize {
    ((2.0 * n_poly as f64 / PI).floor() as usize).saturating_sub(2).max(1)
}

fn require_classical(system: &SemiDiscreteSystem, what: &str) -> Result<()> {
    if system.formulation != Formulation::Classical {
        return Err(Error::Unsupported(format!(
            "{what} is defined for the classical formulation only, got {}",
            system.formulation
        )));
    }
    Ok(())
}

pub fn spectrum(system: &SemiDiscreteSystem) -> Result<SpectrumReport> {
    require_classical(system, "spectrum")?;
    let n = system.dof;
    let eig = kernels::eig_sym_pencil(&system.energy_position, &system.energy_velocity)?;
    let lambdas: Vec<f64> = eig.values.iter().copied().collect();
    if lambdas.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotSpd);
    }
    let roots: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let sqrt_gaps = (0..n).map(|k| roots[k] - if k == 0 { 0.0 } else { roots[k - 1] }).collect();
    let trace = system.observation_row.rows(0, n);
    let deltas = eig
        .vectors
        .column_iter()
        .map(|v| {
            let end = trace.dot(&v);
            let seminorm = (v.transpose() * &system.energy_position * v)[(0, 0)];
            end * end / seminorm
        })
        .collect();
    Ok(SpectrumReport {
        n_poly: system.n_poly,
        lambdas,
        sqrt_gaps,
        deltas,
        eigvec_coeffs: eig.vectors,
    })
}

fn outer(row: &DVector<f64>) -> DenseMatrix {
    row * row.transpose()
}

/// `∫_0^T e^{Aᵀt} cᵀc e^{At} dt` from one exponential of the block matrix
/// `[[-Aᵀ, cᵀc], [0, A]]`; symmetrised.
pub fn gramian_chen(a: &DenseMatrix, row: &DVector<f64>, t_final: f64) -> Result<DenseMatrix> {
    let (mut w, _) = gramian_chen_raw(a, row, t_final)?;
    kernels::symmetrize(&mut w);
    Ok(w)
}

/// Unsymmetrised Chen product together with `e^{AT}`.
pub fn gramian_chen_raw(
    a: &DenseMatrix,
    row: &DVector<f64>,
    t_final: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_inputs(a, row, t_final)?;
    let n = a.nrows();
    let mut block = DenseMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-a.transpose()));
    block.view_mut((0, n), (n, n)).copy_from(&outer(row));
    block.view_mut((n, n), (n, n)).copy_from(a);
    let f = kernels::expm(&block, t_final)?;
    let f12 = f.view((0, n), (n, n));
    let f22 = f.view((n, n), (n, n)).into_owned();
    Ok((f22.transpose() * f12, f22))
}

fn check_inputs(a: &DenseMatrix, row: &DVector<f64>, t_final: f64) -> Result<()> {
    if a.nrows() != a.ncols() || row.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: row.len() });
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!("horizon must be finite and > 0, got {t_final}")));
    }
    Ok(())
}

/// Largest `|Im λ|`-scale frequency of `A`, falling back to the 1-norm.
fn frequency_bound(a: &DenseMatrix) -> f64 {
    Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .map(|s| s.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
        .unwrap_or_else(|| kernels::norm_1(a))
}

/// Time-quadrature Gramian: composite Gauss-Legendre with panels no longer
/// than [`MAX_PANEL`], shortened further for fast systems. `n_t` is a lower
/// bound on the total node count.
pub fn gramian_quadrature(
    a: &DenseMatrix,
    row: &DVector<f64>,
    t_final: f64,
    n_t: usize,
    execution: Execution,
) -> Result<DenseMatrix> {
    check_inputs(a, row, t_final)?;
    if n_t < 64 {
        return Err(Error::InvalidParameter(format!("need at least 64 time nodes, got {n_t}")));
    }
    let n = a.nrows();
    if row.iter().all(|&v| v == 0.0) {
        return Ok(DenseMatrix::zeros(n, n));
    }
    let omega = frequency_bound(a);
    let max_len = if omega > 0.0 { MAX_PANEL.min(3.0 / omega) } else { MAX_PANEL };
    let panels = ((t_final / max_len).ceil() as usize).max(1);
    let points = POINTS_PER_PANEL.max(n_t.div_ceil(panels));
    let h = t_final / panels as f64;
    let rule = gauss_legendre(points)?;

    // c e^{A τ_i} for the shared in-panel offsets
    let local: Vec<(f64, DVector<f64>)> = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&x, &w)| {
            let e = kernels::expm(a, 0.5 * h * (x + 1.0))?;
            Ok((0.5 * h * w, e.transpose() * row))
        })
        .collect::<Result<_>>()?;

    let starts: Vec<usize> = (0..panels).collect();
    let partial = exec::map(execution, &starts, |&p| -> Result<DenseMatrix> {
        let start = kernels::expm(a, p as f64 * h)?;
        let mut w = DenseMatrix::zeros(n, n);
        for (weight, r) in &local {
            let v = start.tr_mul(r);
            w.ger(*weight, &v, &v, 1.0);
        }
        Ok(w)
    });
    let mut w = DenseMatrix::zeros(n, n);
    for part in partial {
        w += part?;
    }
    kernels::symmetrize(&mut w);
    Ok(w)
}

/// Relative residual of the Lyapunov identity
/// `AᵀW + WA = e^{AᵀT}cᵀc e^{AT} - cᵀc` satisfied by the exact Gramian.
pub fn lyapunov_residual(
    a: &DenseMatrix,
    row: &DVector<f64>,
    flow: &DenseMatrix,
    w: &DenseMatrix,
) -> f64 {
    let cc = outer(row);
    let end = flow.transpose() * &cc * flow;
    let lhs = a.transpose() * w + w * a;
    let scale = end.norm() + cc.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (lhs - end + cc).norm() / scale
}

/// `(1/2) blockdiag(Ke, Me)` and the diagonal shift added to keep it
/// definite (non-zero only for the non-symmetric Nitsche scheme).
pub fn energy_pencil_rhs(system: &SemiDiscreteSystem, tol: &Tolerances) -> (DenseMatrix, f64) {
    let mut rhs = kernels::block_diag(&system.energy_position, &system.energy_velocity) * 0.5;
    let mut shift = 0.0;
    if let Formulation::NitscheNonSymmetric { .. } = system.formulation {
        let n = system.dof;
        shift = tol.energy_ridge * rhs.view((0, 0), (n, n)).trace() / n as f64;
        for i in 0..n {
            rhs[(i, i)] += shift;
        }
    }
    (rhs, shift)
}

/// Smallest and largest eigenvalue of the pencil `(W, rhs)`.
pub fn constants(w: &DenseMatrix, rhs: &DenseMatrix, tol: &Tolerances) -> Result<(f64, f64)> {
    let eig = kernels::eig_sym_pencil(w, rhs)?;
    let n = eig.values.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty pencil".into()));
    }
    let (lo, hi) = (eig.values[0], eig.values[n - 1]);
    if !(hi > 0.0) {
        return Err(Error::LossOfObservability { smallest: lo });
    }
    if lo < -tol.gramian_negative * hi {
        return Err(Error::Domain { what: "Gramian pencil eigenvalue", value: lo });
    }
    Ok((lo.max(0.0), hi))
}

#[derive(Debug, Clone)]
pub struct GramianResult {
    pub w: DenseMatrix,
    /// Observability constant: smallest Rayleigh quotient.
    pub lower: f64,
    /// Continuity constant: largest Rayleigh quotient.
    pub upper: f64,
    pub t_final: f64,
    pub tag: String,
    /// Diagonal shift applied to the energy matrix.
    pub shift: f64,
    /// See [`lyapunov_residual`].
    pub check_residual: f64,
}

/// Gramian and constants of `system` observed through `row`, with the
/// pencil optionally restricted to the column span of `subspace`.
pub fn observe(
    system: &SemiDiscreteSystem,
    row: &DVector<f64>,
    t_final: f64,
    subspace: Option<&DenseMatrix>,
    tag: impl Into<String>,
    tol: &Tolerances,
) -> Result<GramianResult> {
    let (mut w, flow) = gramian_chen_raw(&system.state_matrix, row, t_final)?;
    kernels::symmetrize(&mut w);
    let check_residual = lyapunov_residual(&system.state_matrix, row, &flow, &w);
    let (rhs, shift) = energy_pencil_rhs(system, tol);
    let (lower, upper) = match subspace {
        Some(s) => {
            let mut wr = s.transpose() * &w * s;
            kernels::symmetrize(&mut wr);
            let mut er = s.transpose() * rhs * s;
            kernels::symmetrize(&mut er);
            constants(&wr, &er, tol)?
        }
        None => constants(&w, &rhs, tol)?,
    };
    Ok(GramianResult { w, lower, upper, t_final, tag: tag.into(), shift, check_residual })
}

/// Modal subspace of the first `m` eigenmodes and the matching observation.
#[derive(Debug, Clone)]
pub struct Truncation {
    pub modes: usize,
    /// `blockdiag(V_m, V_m)`: columns span the truncated state space.
    pub basis: DenseMatrix,
    /// Observation of the truncated expansion over the full state.
    pub row: DVector<f64>,
}

pub fn truncated_observation(
    system: &SemiDiscreteSystem,
    report: &SpectrumReport,
    m: usize,
) -> Result<Truncation> {
    require_classical(system, "Fourier truncation")?;
    let n = system.dof;
    if m == 0 || m > n {
        return Err(Error::InvalidParameter(format!("truncation order must be in 1..={n}, got {m}")));
    }
    let v = report.eigvec_coeffs.columns(0, m).into_owned();
    let basis = kernels::block_diag(&v, &v);
    // Mass-orthogonal projector V Vᵀ Me on each block
    let proj = &v * (v.transpose() * &system.energy_velocity);
    let p = kernels::block_diag(&proj, &proj);
    let row = p.transpose() * &system.observation_row;
    Ok(Truncation { modes: m, basis, row })
}

/// Constants of the truncated observation with the pencil restricted to
/// the modal subspace.
pub fn truncated_constants(
    system: &SemiDiscreteSystem,
    m: usize,
    t_final: f64,
    tol: &Tolerances,
) -> Result<GramianResult> {
    let report = spectrum(system)?;
    let trunc = truncated_observation(system, &report, m)?;
    observe(system, &trunc.row, t_final, Some(&trunc.basis), format!("truncated:{m}"), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use nalgebra::dmatrix;

    fn rel_frob(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        (a - b).norm() / b.norm()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn scalar_toy() {
        let a = DenseMatrix::zeros(1, 1);
        let c = DVector::from_element(1, 1.0);
        let w = gramian_chen(&a, &c, 2.0).unwrap();
        assert!((w[(0, 0)] - 2.0).abs() < 1e-14);
        let q = gramian_quadrature(&a, &c, 2.0, 64, Execution::Sequential).unwrap();
        assert!((q[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_toy() {
        let a = dmatrix![0.0, 1.0; -1.0, 0.0];
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let want = DenseMatrix::identity(2, 2) * PI;
        let w = gramian_chen(&a, &c, 2.0 * PI).unwrap();
        assert!((&w - &want).amax() < 1e-12);
        let q = gramian_quadrature(&a, &c, 2.0 * PI, 64, Execution::Sequential).unwrap();
        assert!((&q - &want).amax() < 1e-12);
    }

    /// One continuous mode `q(t) φ(x)` with `∫φ'² = 1`, `φ'(1)² = 1` and
    /// frequency `ω`: the quotient is `T` at every multiple of the period.
    #[test]
    fn single_mode_quotient() {
        let w0 = PI;
        let a = dmatrix![0.0, 1.0; -w0 * w0, 0.0];
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let rhs = dmatrix![0.5, 0.0; 0.0, 0.5 / (w0 * w0)];
        for t in [4.0, 8.0] {
            let w = gramian_chen(&a, &c, t).unwrap();
            let (lo, hi) = constants(&w, &rhs, &tol()).unwrap();
            assert!((lo - t).abs() < 1e-10 && (hi - t).abs() < 1e-10, "T={t}: {lo} {hi}");
        }
    }

    #[test]
    fn rejects_bad_horizon() {
        let a = DenseMatrix::zeros(1, 1);
        let c = DVector::from_element(1, 1.0);
        assert!(gramian_chen(&a, &c, 0.0).is_err());
        assert!(gramian_chen(&a, &c, f64::NAN).is_err());
        assert!(gramian_quadrature(&a, &c, 1.0, 10, Execution::Sequential).is_err());
    }

    #[test]
    fn zero_row_gives_zero_gramian() {
        let s = assemble(Formulation::Classical, 8).unwrap();
        let z = DVector::zeros(s.state_dim());
        let q = gramian_quadrature(&s.state_matrix, &z, 8.0, 64, Execution::Sequential).unwrap();
        assert_eq!(q.amax(), 0.0);
    }

    #[test]
    fn chen_matches_quadrature() {
        for f in [
            Formulation::Classical,
            Formulation::Mixed,
            Formulation::NitscheSymmetric { gamma: 0.8 },
            Formulation::NitscheNonSymmetric { gamma: 1.0 },
        ] {
            let s = assemble(f, 16).unwrap();
            let w = gramian_chen(&s.state_matrix, &s.observation_row, 8.0).unwrap();
            let q = gramian_quadrature(&s.state_matrix, &s.observation_row, 8.0, 256, Execution::default())
                .unwrap();
            let err = rel_frob(&w, &q);
            assert!(err < 1e-8, "{f}: {err}");
        }
    }

    #[test]
    fn quadrature_converged_and_mode_independent() {
        let s = assemble(Formulation::Classical, 16).unwrap();
        let (a, c) = (&s.state_matrix, &s.observation_row);
        let coarse = gramian_quadrature(a, c, 8.0, 64, Execution::Sequential).unwrap();
        let fine = gramian_quadrature(a, c, 8.0, 4096, Execution::Parallel).unwrap();
        assert!(rel_frob(&coarse, &fine) < 1e-9);
        let par = gramian_quadrature(a, c, 8.0, 64, Execution::Parallel).unwrap();
        assert!(rel_frob(&coarse, &par) < 1e-14);
    }

    #[test]
    fn lyapunov_identity_holds() {
        let s = assemble(Formulation::NitscheSymmetric { gamma: 0.8 }, 16).unwrap();
        let r = observe(&s, &s.observation_row, 8.0, None, "x", &tol()).unwrap();
        assert!(r.check_residual < 1e-8, "{}", r.check_residual);
        let bad = &r.w * 1.01;
        let (_, flow) = gramian_chen_raw(&s.state_matrix, &s.observation_row, 8.0).unwrap();
        assert!(lyapunov_residual(&s.state_matrix, &s.observation_row, &flow, &bad) > 1e-4);
    }

    #[test]
    fn constants_monotone_in_horizon() {
        for f in [Formulation::Classical, Formulation::Mixed, Formulation::NitscheSymmetric { gamma: 0.8 }] {
            let s = assemble(f, 16).unwrap();
            let a = observe(&s, &s.observation_row, 4.0, None, "", &tol()).unwrap();
            let b = observe(&s, &s.observation_row, 8.0, None, "", &tol()).unwrap();
            assert!(b.lower >= a.lower * (1.0 - 1e-10), "{f}");
            assert!(b.upper >= a.upper * (1.0 - 1e-10), "{f}");
        }
    }

    #[test]
    fn constants_scale_quadratically() {
        let s = assemble(Formulation::Mixed, 16).unwrap();
        let a = observe(&s, &s.observation_row, 8.0, None, "", &tol()).unwrap();
        let row = &s.observation_row * 3.0;
        let b = observe(&s, &row, 8.0, None, "", &tol()).unwrap();
        assert!((b.lower / a.lower - 9.0).abs() < 1e-12 * 9.0 * 100.0);
        assert!((b.upper / a.upper - 9.0).abs() < 1e-12 * 9.0 * 100.0);
    }

    #[test]
    fn classical_regression_values() {
        // independent dense computation (scipy expm + eigh)
        let s = assemble(Formulation::Classical, 16).unwrap();
        let r = observe(&s, &s.observation_row, 8.0, None, "", &tol()).unwrap();
        assert!((r.lower - 0.598_437_201_082).abs() < 1e-8, "{}", r.lower);
        assert!((r.upper - 476.127_639_7).abs() < 1e-5, "{}", r.upper);
    }

    #[test]
    fn spectrum_matches_continuous_reference() {
        let s = assemble(Formulation::Classical, 40).unwrap();
        let rep = spectrum(&s).unwrap();
        let band = default_truncation(40);
        assert_eq!(band, 23);
        for k in 1..=band {
            let err = (rep.lambdas[k - 1].sqrt() - reference_frequency(k)).abs() / reference_frequency(k);
            assert!(err < 0.01, "k={k}: {err}");
        }
        assert!(rep.lambdas.windows(2).all(|p| p[0] < p[1] && p[0] > 0.0));
        for k in 0..s.dof {
            let v = rep.eigvec_coeffs.column(k);
            let norm = (v.transpose() * &s.mass * v)[(0, 0)];
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn spectral_gap_floor() {
        let s = assemble(Formulation::Classical, 40).unwrap();
        let rep = spectrum(&s).unwrap();
        let top = (2.0 * 40.0 / PI).floor() as usize;
        let gap = rep.sqrt_gaps[1..top].iter().copied().fold(f64::INFINITY, f64::min);
        assert!(gap >= 1.5, "{gap}");
    }

    #[test]
    fn spectrum_rejects_other_schemes() {
        let s = assemble(Formulation::Mixed, 8).unwrap();
        assert!(matches!(spectrum(&s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn full_truncation_is_identity() {
        let s = assemble(Formulation::Classical, 16).unwrap();
        let full = observe(&s, &s.observation_row, 8.0, None, "", &tol()).unwrap();
        let t = truncated_constants(&s, s.dof, 8.0, &tol()).unwrap();
        assert!((t.lower - full.lower).abs() <= 1e-10 * full.lower, "{} {}", t.lower, full.lower);
        assert!((t.upper - full.upper).abs() <= 1e-10 * full.upper);
    }

    #[test]
    fn single_mode_truncation() {
        let s = assemble(Formulation::Classical, 16).unwrap();
        let t = truncated_constants(&s, 1, 8.0, &tol()).unwrap();
        assert!((t.lower - t.upper).abs() <= 1e-9 * t.upper, "{} {}", t.lower, t.upper);
        assert!(truncated_constants(&s, 0, 8.0, &tol()).is_err());
        assert!(truncated_constants(&s, 16, 8.0, &tol()).is_err());
    }

    #[test]
    fn truncated_row_ignores_high_modes() {
        let s = assemble(Formulation::Classical, 16).unwrap();
        let rep = spectrum(&s).unwrap();
        let t = truncated_observation(&s, &rep, 5).unwrap();
        let v = rep.eigvec_coeffs.column(9);
        assert!(t.row.rows(0, s.dof).dot(&v).abs() < 1e-12);
        let v = rep.eigvec_coeffs.column(2);
        let direct = s.observation_row.rows(0, s.dof).dot(&v);
        assert!((t.row.rows(0, s.dof).dot(&v) - direct).abs() < 1e-12 * direct.abs());
    }

    #[test]
    fn nonsymmetric_shift_is_tiny() {
        let s = assemble(Formulation::NitscheNonSymmetric { gamma: 1.0 }, 16).unwrap();
        let (_, shift) = energy_pencil_rhs(&s, &tol());
        assert!(shift > 0.0 && shift < 1e-9);
        let s = assemble(Formulation::Mixed, 16).unwrap();
        assert_eq!(energy_pencil_rhs(&s, &tol()).1, 0.0);
    }
}
