//! Dense linear algebra kernels.
//!
//! Factorizations and the symmetric eigensolver come from `nalgebra`; the
//! matrix exponential and the symmetric-definite pencil reduction live here.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

pub type DenseMatrix = DMatrix<f64>;

/// Threshold on `||A||_1` below which the degree-13 Padé approximant meets
/// unit roundoff in backward error.
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

/// Largest number of squarings before we give up and report overflow.
const MAX_SQUARINGS: i32 = 1000;

pub fn norm_1(a: &DenseMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{A t}` by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }
    let at = a * t;
    let norm = norm_1(&at);
    if !norm.is_finite() {
        return Err(Error::ExpmOverflow { norm });
    }
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    if squarings > MAX_SQUARINGS {
        return Err(Error::ExpmOverflow { norm });
    }
    let scaled = at * 2f64.powi(-squarings);

    let mut r = pade13(&scaled)?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::ExpmOverflow { norm });
    }
    Ok(r)
}

fn pade13(a: &DenseMatrix) -> Result<DenseMatrix> {
    let n = a.nrows();
    let b = &PADE_13;
    let ident = DenseMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    q.lu().solve(&p).ok_or(Error::Singular { condition: f64::INFINITY })
}

/// Eigenpairs of the symmetric-definite pencil `A x = λ B x`.
#[derive(Debug, Clone)]
pub struct PencilEigen {
    /// Ascending eigenvalues.
    pub values: DVector<f64>,
    /// `B`-orthonormal eigenvectors, one per column, matching `values`.
    pub vectors: DenseMatrix,
}

/// Solve `A x = λ B x` for symmetric `A` and SPD `B` via `L^{-1} A L^{-T}`.
pub fn eig_sym_pencil(a: &DenseMatrix, b: &DenseMatrix) -> Result<PencilEigen> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.nrows() });
    }
    let chol = b.clone().cholesky().ok_or(Error::NotSpd)?;
    let l = chol.l();
    let y = l.solve_lower_triangular(a).ok_or(Error::NotSpd)?;
    let mut c = l.solve_lower_triangular(&y.transpose()).ok_or(Error::NotSpd)?;
    symmetrize(&mut c);

    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut sorted = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &eig.eigenvectors.column(src));
    }
    let vectors = l
        .transpose()
        .solve_upper_triangular(&sorted)
        .ok_or(Error::NotSpd)?;
    Ok(PencilEigen { values, vectors })
}

/// Solve `A x = b`: Cholesky when `spd_hint` (falling back to partially pivoted
/// LU if the factorization breaks down), LU otherwise.
pub fn solve(a: &DenseMatrix, b: &DVector<f64>, spd_hint: bool) -> Result<DVector<f64>> {
    solve_with(a, b, spd_hint, &Tolerances::default())
}

pub fn solve_with(
    a: &DenseMatrix,
    b: &DVector<f64>,
    spd_hint: bool,
    tol: &Tolerances,
) -> Result<DVector<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    let b_norm = b.norm();
    if b_norm == 0.0 {
        return Ok(DVector::zeros(n));
    }

    let chol = if spd_hint { a.clone().cholesky() } else { None };
    let (mut x, condition) = match chol {
        Some(chol) => {
            let d = chol.l_dirty().diagonal();
            let (lo, hi) = min_max_abs(d.iter());
            let condition = (hi / lo).powi(2);
            if !(lo > 0.0) || 1.0 / condition < tol.singular_pivot {
                return Err(Error::Singular { condition });
            }
            (chol.solve(b), condition)
        }
        None => {
            let lu = a.clone().lu();
            let u = lu.u();
            let (lo, hi) = min_max_abs(u.diagonal().iter());
            let condition = hi / lo;
            if !(lo > 0.0) || 1.0 / condition < tol.singular_pivot {
                return Err(Error::Singular { condition });
            }
            let x = lu.solve(b).ok_or(Error::Singular { condition })?;
            (x, condition)
        }
    };

    let mut rel = (a * &x - b).norm() / b_norm;
    if rel > tol.solve_residual {
        // one round of iterative refinement with the LU factors
        let r = b - a * &x;
        if let Some(dx) = a.clone().lu().solve(&r) {
            x += dx;
            rel = (a * &x - b).norm() / b_norm;
        }
    }
    if !(rel <= tol.solve_residual) {
        return Err(Error::Singular { condition });
    }
    Ok(x)
}

fn min_max_abs<'a>(it: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())))
}

/// Replace `m` by `(m + m^T) / 2`.
/// Solve `A X = B` for a matrix right-hand side; Cholesky when `spd_hint`
/// and it succeeds, LU otherwise.
pub fn solve_matrix(a: &DenseMatrix, b: &DenseMatrix, spd_hint: bool) -> Result<DenseMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if b.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.nrows() });
    }
    let tol = Tolerances::default();
    if spd_hint {
        if let Some(chol) = a.clone().cholesky() {
            let (lo, hi) = min_max_abs(chol.l_dirty().diagonal().iter());
            let condition = (hi / lo).powi(2);
            if lo > 0.0 && 1.0 / condition >= tol.singular_pivot {
                return Ok(chol.solve(b));
            }
        }
    }
    let lu = a.clone().lu();
    let (lo, hi) = min_max_abs(lu.u().diagonal().iter());
    let condition = hi / lo;
    if !(lo > 0.0) || 1.0 / condition < tol.singular_pivot {
        return Err(Error::Singular { condition });
    }
    lu.solve(b).ok_or(Error::Singular { condition })
}

pub fn symmetrize(m: &mut DenseMatrix) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn block_diag(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DenseMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, FRAC_PI_2};

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DenseMatrix {
        DenseMatrix::from_fn(n, n, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = DenseMatrix::zeros(5, 5);
        assert_eq!(expm(&z, 3.0).unwrap(), DenseMatrix::identity(5, 5));
    }

    #[test]
    fn expm_diagonal() {
        let a = DenseMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let e = expm(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - E).abs() < 1e-13 * E);
        assert!((e[(1, 1)] - E * E).abs() < 1e-13 * E * E);
        assert_eq!(e[(0, 1)], 0.0);
    }

    #[test]
    fn expm_rotation_quarter_turn() {
        let a = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let e = expm(&a, FRAC_PI_2).unwrap();
        let want = DenseMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!((e - want).amax() < 1e-12);
    }

    #[test]
    fn expm_large_norm_rotation() {
        // many squarings on a normal matrix
        let w = 300.0;
        let a = DenseMatrix::from_row_slice(2, 2, &[0.0, w, -w, 0.0]);
        let e = expm(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - w.cos()).abs() < 1e-10);
        assert!((e[(0, 1)] - w.sin()).abs() < 1e-10);
    }

    #[test]
    fn expm_overflow_is_an_error() {
        let a = DenseMatrix::from_element(2, 2, f64::MAX);
        assert!(matches!(expm(&a, 10.0), Err(Error::ExpmOverflow { .. })));
        let a = DenseMatrix::from_diagonal(&DVector::from_vec(vec![1000.0, 0.0]));
        assert!(matches!(expm(&a, 1.0), Err(Error::ExpmOverflow { .. })));
    }

    #[test]
    fn expm_semigroup_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let mut a = random_matrix(&mut rng, 20, 1.0);
            let s = 5.0 / norm_1(&a);
            a *= s;
            let (s, t) = (rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0);
            let whole = expm(&a, s + t).unwrap();
            let parts = expm(&a, s).unwrap() * expm(&a, t).unwrap();
            assert!((&whole - parts).norm() <= 1e-10 * whole.norm());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn expm_transpose_commutes(seed in any::<u64>(), t in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = random_matrix(&mut rng, 20, 1.0);
            let s = 5.0 / norm_1(&a);
            a *= s;
            let lhs = expm(&a.transpose(), t).unwrap();
            let rhs = expm(&a, t).unwrap().transpose();
            prop_assert!((lhs - rhs).amax() <= 1e-12 * (1.0 + t * 5.0).exp());
        }

        #[test]
        fn pencil_residual_small(seed in any::<u64>(), n in 2usize..24) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_matrix(&mut rng, n, 1.0);
            let mut a = random_matrix(&mut rng, n, 1.0);
            symmetrize(&mut a);
            let b = &g * g.transpose() + DenseMatrix::identity(n, n) * 0.5;
            let pe = eig_sym_pencil(&a, &b).unwrap();
            let a_norm = a.norm();
            for k in 0..n {
                let v = pe.vectors.column(k);
                let r = &a * v - (&b * v) * pe.values[k];
                prop_assert!(r.norm() <= 1e-9 * a_norm);
                if k > 0 {
                    prop_assert!(pe.values[k] >= pe.values[k - 1]);
                }
            }
            let gram = pe.vectors.transpose() * &b * &pe.vectors;
            prop_assert!((gram - DenseMatrix::identity(n, n)).amax() < 1e-9);
        }
    }

    #[test]
    fn pencil_trivial_cases() {
        let b = DenseMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let pe = eig_sym_pencil(&b, &b).unwrap();
        assert!(pe.values.iter().all(|v| (v - 1.0).abs() < 1e-14));

        let a = DenseMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let pe = eig_sym_pencil(&a, &DenseMatrix::identity(2, 2)).unwrap();
        assert!((pe.values[0] - 1.0).abs() < 1e-15);
        assert!((pe.values[1] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn pencil_rejects_indefinite_rhs() {
        let b = DenseMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        let a = DenseMatrix::identity(2, 2);
        assert_eq!(eig_sym_pencil(&a, &b).unwrap_err(), Error::NotSpd);
    }

    #[test]
    fn solve_identity() {
        let b = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        let x = solve(&DenseMatrix::identity(3, 3), &b, true).unwrap();
        assert_eq!(x, b);
        let x = solve(&DenseMatrix::identity(3, 3), &b, false).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn solve_hilbert_row_sums() {
        let h = DenseMatrix::from_fn(4, 4, |i, j| 1.0 / (i + j + 1) as f64);
        let b = DVector::from_fn(4, |i, _| h.row(i).sum());
        for spd in [true, false] {
            let x = solve(&h, &b, spd).unwrap();
            assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-8), "{x}");
        }
    }

    #[test]
    fn solve_random_spd_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_matrix(&mut rng, 50, 1.0);
        let a = &g * g.transpose() + DenseMatrix::identity(50, 50);
        let b = DVector::from_fn(50, |_, _| rng.random::<f64>());
        let x = solve(&a, &b, true).unwrap();
        assert!((&a * x - &b).norm() / b.norm() <= 1e-10);
    }

    #[test]
    fn solve_singular_reports_condition() {
        let a = DenseMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve(&a, &b, false), Err(Error::Singular { .. })));
        assert!(matches!(solve(&a, &b, true), Err(Error::Singular { .. })));
    }
}
