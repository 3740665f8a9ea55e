//! Small dense complex linear-algebra helpers shared by the solver modules.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

/// Relative singular-value cutoff: anything below `RANK_TOL * sigma_max`
/// counts as zero when deciding ranks and null spaces.
pub const RANK_TOL: f64 = 1e-10;

pub fn determinant(m: &DMatrix<C64>) -> C64 {
    debug_assert!(m.is_square());
    m.clone().lu().determinant()
}

/// Numerical rank with the crate-wide relative tolerance.
pub fn rank(m: &DMatrix<C64>) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// Orthonormal basis of the (right) null space, columns of the result.
pub fn null_space(m: &DMatrix<C64>) -> DMatrix<C64> {
    let ncols = m.ncols();
    if m.is_empty() {
        return DMatrix::identity(ncols, ncols);
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.max();
    let mut cols: Vec<DVector<C64>> = Vec::new();
    // v_t has min(nrows, ncols) rows; directions beyond that are trivially null
    for i in 0..v_t.nrows() {
        let s = if i < svd.singular_values.len() {
            svd.singular_values[i]
        } else {
            0.0
        };
        if smax == 0.0 || s <= RANK_TOL * smax {
            cols.push(v_t.row(i).adjoint());
        }
    }
    if v_t.nrows() < ncols {
        // complete to the full orthogonal complement
        let q = complete_orthonormal(&v_t.adjoint());
        for j in v_t.nrows()..ncols {
            cols.push(q.column(j).into());
        }
    }
    let mut out = DMatrix::zeros(ncols, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

fn complete_orthonormal(partial: &DMatrix<C64>) -> DMatrix<C64> {
    // Gram-Schmidt completion of `partial`'s columns to a full basis.
    let n = partial.nrows();
    let mut cols: Vec<DVector<C64>> = (0..partial.ncols())
        .map(|j| partial.column(j).into_owned())
        .collect();
    for i in 0..n {
        let mut e = DVector::<C64>::zeros(n);
        e[i] = C64::new(1.0, 0.0);
        for c in &cols {
            let proj = c.dotc(&e);
            e -= c * proj;
        }
        if e.norm() > 1e-8 {
            let nrm = e.norm();
            cols.push(e / C64::new(nrm, 0.0));
        }
        if cols.len() == n {
            break;
        }
    }
    let mut out = DMatrix::zeros(n, n);
    for (j, c) in cols.iter().enumerate().take(n) {
        out.set_column(j, c);
    }
    out
}

/// Smallest singular value, its right singular vector, and the
/// second-smallest singular value (for degeneracy detection).
pub struct SmallestSingular {
    pub sigma_min: f64,
    pub sigma_second: f64,
    pub sigma_max: f64,
    pub vector: DVector<C64>,
    pub second_vector: DVector<C64>,
}

pub fn smallest_singular(m: &DMatrix<C64>) -> Result<SmallestSingular> {
    if !m.is_square() || m.is_empty() {
        return Err(Error::Dimension(format!(
            "smallest_singular expects a nonempty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let sv = &svd.singular_values;
    let mut idx: Vec<usize> = (0..sv.len()).collect();
    idx.sort_by(|&a, &b| sv[a].total_cmp(&sv[b]));
    let (i_min, i_second) = (idx[0], idx[1.min(idx.len() - 1)]);
    Ok(SmallestSingular {
        sigma_min: sv[i_min],
        sigma_second: sv[i_second],
        sigma_max: sv[idx[idx.len() - 1]],
        vector: v_t.row(i_min).adjoint(),
        second_vector: v_t.row(i_second).adjoint(),
    })
}

/// Largest principal angle (radians) between the column spans of `a` and `b`.
///
/// Both inputs must have full column rank; the spans must have equal
/// dimension for the result to be meaningful.
pub fn max_principal_angle(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let qa = orthonormalize(a);
    let qb = orthonormalize(b);
    let overlap = qa.adjoint() * qb;
    let sv = overlap.singular_values();
    let smin = sv.min().clamp(-1.0, 1.0);
    smin.min(1.0).acos()
}

/// Thin orthonormal basis for the column span (modified Gram-Schmidt).
pub fn orthonormalize(m: &DMatrix<C64>) -> DMatrix<C64> {
    let mut cols: Vec<DVector<C64>> = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for c in &cols {
            let proj = c.dotc(&v);
            v -= c * proj;
        }
        let nrm = v.norm();
        if nrm > 1e-12 * (1.0 + m.norm()) {
            cols.push(v / C64::new(nrm, 0.0));
        }
    }
    let mut out = DMatrix::zeros(m.nrows(), cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Max entrywise deviation from Hermitian symmetry.
pub fn hermitian_residual(m: &DMatrix<C64>) -> f64 {
    let diff = m - m.adjoint();
    diff.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Horizontal concatenation `(A | B)`.
pub fn hcat(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn rank_and_null_space_of_rank_deficient_matrix() {
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.5),
                c(0.0, 2.0),
                c(3.0, 0.0),
                c(0.0, -1.0),
                c(2.0, 0.0),
                c(1.0, 1.0),
                c(1.0, 0.5),
                c(0.0, 2.0),
                c(3.0, 0.0),
            ],
        );
        assert_eq!(rank(&m), 2);
        let ns = null_space(&m);
        assert_eq!(ns.ncols(), 1);
        assert!((&m * ns.column(0)).norm() < 1e-12);
    }

    #[test]
    fn principal_angle_detects_equal_and_orthogonal_spans() {
        let a = DMatrix::from_row_slice(3, 1, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let b = DMatrix::from_row_slice(3, 1, &[c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert!(max_principal_angle(&a, &b) < 1e-12);
        let cvec = DMatrix::from_row_slice(3, 1, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((max_principal_angle(&a, &cvec) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn determinant_matches_closed_form_for_2x2() {
        let m = DMatrix::from_row_slice(2, 2, &[c(1.0, 1.0), c(2.0, 0.0), c(0.0, 3.0), c(1.0, -1.0)]);
        let expect = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        assert!((determinant(&m) - expect).norm() < 1e-14);
    }
}
