//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Result, RiskError};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn max_abs_c(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.norm()))
}

/// Right null vector of a (numerically) singular complex matrix: the right
/// singular vector of the smallest singular value. Returns it with the
/// smallest singular value relative to the largest.
pub fn right_null_vector(m: &CMatrix) -> (CVector, f64) {
    let n = m.ncols();
    if n == 1 {
        return (CVector::from_element(1, Complex64::new(1.0, 0.0)), m[(0, 0)].norm());
    }
    let svd = m.clone().svd(false, true);
    let sv = &svd.singular_values;
    let (idx, smin) = sv
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b)).max(1e-300);
    let v_t = svd.v_t.expect("requested V^T");
    let vec = v_t.row(idx).adjoint().into_owned();
    (vec, smin / smax)
}

/// Left null vector `v` (as a column) with `v^T m ≈ 0`.
pub fn left_null_vector(m: &CMatrix) -> (CVector, f64) {
    right_null_vector(&m.transpose())
}

/// Inverse with a reported 1-norm condition estimate.
pub fn inverse_with_condition(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let inv = m
        .clone()
        .try_inverse()
        .ok_or_else(|| RiskError::Numerical("singular matrix".into()))?;
    let norm1 = |a: &CMatrix| {
        (0..a.ncols())
            .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let cond = norm1(m) * norm1(&inv);
    if !cond.is_finite() {
        return Err(RiskError::Numerical("non-finite inverse".into()));
    }
    Ok((inv, cond))
}

/// Stationary distribution of the discrete chain with stochastic matrix `p`.
pub fn stationary_of_stochastic(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    a.lu()
        .solve(&b)
        .ok_or_else(|| RiskError::Numerical("stationary system is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_vector_of_rank_one() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(2.0, 0.0),
                Complex64::new(4.0, 0.0),
            ],
        );
        let (h, rel) = right_null_vector(&m);
        assert!(rel < 1e-14);
        assert!((&m * &h).norm() < 1e-14);
    }
}
