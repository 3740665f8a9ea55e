//! Self-adjoint vertex couplings: the matrix pair `(A, B)` imposing
//! `A Psi + B Psi' = 0` on the boundary traces at a junction, the reduced
//! ST block representation, and the named coupling families used by the
//! lattice models.
//!
//! Conventions: `Psi` collects the wavefunction values at the edge ends
//! attached to the vertex and `Psi'` the outward derivative traces (pointing
//! from the vertex into each edge). A pair is admissible iff
//! `rank(A|B) = n` and `A B*` is Hermitian.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, RANK_TOL};
use crate::C64;

/// A vertex coupling on `n` edge ends in `(A, B)` form.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexCoupling {
    pub a: DMatrix<C64>,
    pub b: DMatrix<C64>,
}

impl VertexCoupling {
    pub fn new(a: DMatrix<C64>, b: DMatrix<C64>) -> Result<Self> {
        if !a.is_square() || a.nrows() != b.nrows() || !b.is_square() {
            return Err(Error::Dimension(format!(
                "coupling matrices must be square of equal size, got {}x{} and {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(VertexCoupling { a, b })
    }

    /// Number of edge ends the coupling acts on.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Apply the same end permutation to both matrices: column `i` of the
    /// result is column `perm[i]` of the input.
    pub fn permuted(&self, perm: &[usize]) -> VertexCoupling {
        let n = self.n();
        let mut a = DMatrix::zeros(n, n);
        let mut b = DMatrix::zeros(n, n);
        for (i, &p) in perm.iter().enumerate() {
            a.set_column(i, &self.a.column(p));
            b.set_column(i, &self.b.column(p));
        }
        VertexCoupling { a, b }
    }
}

/// Result of checking the two admissibility invariants.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub ok: bool,
    /// rank(A|B) == n
    pub rank_ok: bool,
    /// A B* Hermitian within tolerance
    pub hermitian_ok: bool,
    pub rank_ab: usize,
    pub hermiticity_residual: f64,
    pub hermiticity_tolerance: f64,
}

/// Check `rank(A|B) = n` and Hermiticity of `A B*`.
pub fn validate(coupling: &VertexCoupling) -> Result<ValidationReport> {
    let n = coupling.n();
    if coupling.b.nrows() != n {
        return Err(Error::Dimension("A and B sizes differ".into()));
    }
    let ab = linalg::hcat(&coupling.a, &coupling.b);
    let rank_ab = linalg::rank(&ab);
    let rank_ok = rank_ab == n;

    let prod = &coupling.a * coupling.b.adjoint();
    let residual = linalg::hermitian_residual(&prod);
    let tol = 1e-10 * (1.0 + coupling.a.norm() * coupling.b.norm());
    let hermitian_ok = residual <= tol;

    Ok(ValidationReport {
        ok: rank_ok && hermitian_ok,
        rank_ok,
        hermitian_ok,
        rank_ab,
        hermiticity_residual: residual,
        hermiticity_tolerance: tol,
    })
}

/// Reduced `(m, S, T)` block representation of a coupling:
/// rows `[I T] Psi' = [S 0] Psi` and `[-T* I] Psi = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct STForm {
    n: usize,
    /// Hermitian m x m block acting on the first `m` values.
    pub s: DMatrix<C64>,
    /// m x (n - m) block tying the remaining derivative traces in.
    pub t: DMatrix<C64>,
}

impl STForm {
    pub fn new(n: usize, s: DMatrix<C64>, t: DMatrix<C64>) -> Result<Self> {
        let m = s.nrows();
        if !s.is_square() {
            return Err(Error::Dimension("S must be square".into()));
        }
        if m > n {
            return Err(Error::Dimension(format!("m = {m} exceeds n = {n}")));
        }
        if t.nrows() != m || t.ncols() != n - m {
            return Err(Error::Dimension(format!(
                "T must be {}x{}, got {}x{}",
                m,
                n - m,
                t.nrows(),
                t.ncols()
            )));
        }
        let herm = linalg::hermitian_residual(&s);
        if herm > 1e-12 * (1.0 + s.norm()) {
            return Err(Error::Domain(format!(
                "S is not Hermitian (residual {herm:.3e})"
            )));
        }
        Ok(STForm { n, s, t })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.s.nrows()
    }
}

/// Expand an ST form into the `(A, B)` pair
/// `B = [[I, T], [0, 0]]`, `A = [[-S, 0], [T*, -I]]`.
pub fn st_to_ab(st: &STForm) -> VertexCoupling {
    let n = st.n();
    let m = st.m();
    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut b = DMatrix::<C64>::zeros(n, n);
    for i in 0..m {
        b[(i, i)] = C64::new(1.0, 0.0);
        for j in 0..n - m {
            b[(i, m + j)] = st.t[(i, j)];
        }
        for j in 0..m {
            a[(i, j)] = -st.s[(i, j)];
        }
    }
    let tdag = st.t.adjoint();
    for i in 0..n - m {
        for j in 0..m {
            a[(m + i, j)] = tdag[(i, j)];
        }
        a[(m + i, m + i)] = C64::new(-1.0, 0.0);
    }
    VertexCoupling { a, b }
}

/// ST form together with the end permutation that made the leading block of
/// `B` invertible. `permutation[i]` is the original index now sitting in
/// slot `i`; it is the identity for every model coupling in this crate.
#[derive(Debug, Clone)]
pub struct StConversion {
    pub st: STForm,
    pub permutation: Vec<usize>,
}

/// Bring a valid coupling to ST form, trying the given end ordering first
/// and column permutations of `B` only if the leading block is singular.
pub fn to_st_form(coupling: &VertexCoupling) -> Result<StConversion> {
    let report = validate(coupling)?;
    if !report.ok {
        return Err(Error::Domain(format!(
            "coupling fails admissibility: rank(A|B) = {} of {}, hermiticity residual {:.3e}",
            report.rank_ab,
            coupling.n(),
            report.hermiticity_residual
        )));
    }
    let n = coupling.n();
    let m = linalg::rank(&coupling.b);

    for perm in leading_block_candidates(n, m) {
        match try_st_with_permutation(coupling, &perm, m) {
            Ok(Some(st)) => return Ok(StConversion { st, permutation: perm }),
            Ok(None) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::NonRepresentable(format!(
        "no end ordering yields an invertible leading {m}x{m} block of B"
    )))
}

/// Candidate permutations: identity first, then every way of moving an
/// m-subset of ends to the front (ascending inside each part).
fn leading_block_candidates(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut subset: Vec<usize> = (0..m).collect();
    loop {
        let mut perm = subset.clone();
        for i in 0..n {
            if !subset.contains(&i) {
                perm.push(i);
            }
        }
        out.push(perm);
        // next lexicographic m-subset of {0..n-1}
        let mut i = m;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if subset[i] != i + n - m {
                subset[i] += 1;
                for j in i + 1..m {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn try_st_with_permutation(
    coupling: &VertexCoupling,
    perm: &[usize],
    m: usize,
) -> Result<Option<STForm>> {
    let n = coupling.n();
    let p = coupling.permuted(perm);

    // Row-compress B: U* B has its last n - m rows numerically zero.
    let svd = p.b.clone().svd(true, false);
    let u = svd.u.expect("svd requested u");
    let c1 = u.adjoint();
    let b_r = &c1 * &p.b;
    let a_r = &c1 * &p.a;

    let b_top = b_r.rows(0, m).into_owned();
    let a_top = a_r.rows(0, m).into_owned();
    let a_bot = a_r.rows(m, n - m).into_owned();

    // Leading m x m block of B must be invertible for this ordering.
    if m > 0 {
        let blk = b_top.columns(0, m).into_owned();
        let sv = blk.singular_values();
        if sv.min() <= RANK_TOL * sv.max().max(1e-300) {
            return Ok(None);
        }
        let w = blk.lu();
        let bt = w
            .solve(&b_top)
            .ok_or_else(|| Error::NonRepresentable("leading block solve failed".into()))?;
        let at = w
            .solve(&a_top)
            .ok_or_else(|| Error::NonRepresentable("leading block solve failed".into()))?;
        let t = bt.columns(m, n - m).into_owned();

        // Lower block: normalize A2 = [A21 A22] so that it reads [-T* I].
        let (k_block, t_from_lower) = if m < n {
            let a22 = a_bot.columns(m, n - m).into_owned();
            let sv2 = a22.singular_values();
            if sv2.min() <= RANK_TOL * sv2.max().max(1e-300) {
                return Ok(None);
            }
            let lu2 = a22.lu();
            let a21 = a_bot.columns(0, m).into_owned();
            let k = -lu2
                .solve(&a21)
                .ok_or_else(|| Error::NonRepresentable("lower block solve failed".into()))?;
            // K should equal T* for an admissible coupling
            let tl = k.adjoint();
            (Some(k), Some(tl))
        } else {
            (None, None)
        };

        if let Some(tl) = &t_from_lower {
            let dev = (&t - tl).norm();
            if dev > 1e-8 * (1.0 + t.norm()) {
                return Err(Error::NonRepresentable(format!(
                    "upper and lower blocks disagree on T ({dev:.3e}); coupling inconsistent"
                )));
            }
        }

        // Eliminate the trailing A-block of the upper rows against the value
        // constraints: S = -(At11 + At12 K).
        let at11 = at.columns(0, m).into_owned();
        let s = if let Some(k) = k_block {
            let at12 = at.columns(m, n - m).into_owned();
            -(at11 + at12 * k)
        } else {
            -at11
        };
        let st = STForm::new(n, s, t)?;
        Ok(Some(st))
    } else {
        // m = 0: pure value conditions, S and T empty.
        let st = STForm::new(n, DMatrix::zeros(0, 0), DMatrix::zeros(0, n))?;
        Ok(Some(st))
    }
}

/// Delta coupling: continuity of the value across all `n` ends and the sum
/// of outward derivatives equal to `v` times the common value.
pub fn delta_coupling(n: usize, v: f64) -> VertexCoupling {
    assert!(n >= 1, "delta coupling needs at least one end");
    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut b = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        b[(0, j)] = C64::new(1.0, 0.0);
    }
    a[(0, 0)] = C64::new(-v, 0.0);
    for j in 1..n {
        a[(j, 0)] = C64::new(1.0, 0.0);
        a[(j, j)] = C64::new(-1.0, 0.0);
    }
    VertexCoupling { a, b }
}

/// Symmetrized delta-prime coupling: all outward derivatives equal and `u`
/// times the common derivative equal to the sum of the values.
pub fn delta_prime_coupling(n: usize, u: f64) -> VertexCoupling {
    assert!(n >= 1, "delta-prime coupling needs at least one end");
    let mut a = DMatrix::<C64>::zeros(n, n);
    let mut b = DMatrix::<C64>::zeros(n, n);
    for j in 0..n - 1 {
        b[(j, j)] = C64::new(1.0, 0.0);
        b[(j, n - 1)] = C64::new(-1.0, 0.0);
    }
    b[(n - 1, n - 1)] = C64::new(u, 0.0);
    for j in 0..n {
        a[(n - 1, j)] = C64::new(-1.0, 0.0);
    }
    VertexCoupling { a, b }
}

/// Real four-parameter family of four-end couplings used by the
/// double-strand chain models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingFamilyParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// Chain subfamily with `m = 2`:
/// `T = [[a, b], [a, b]]`, `S = [[c, c d], [c d, c d^2]]`.
pub fn chain_family(p: &CouplingFamilyParams) -> STForm {
    let t = DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(p.a, 0.0),
            C64::new(p.b, 0.0),
            C64::new(p.a, 0.0),
            C64::new(p.b, 0.0),
        ],
    );
    let s = DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(p.c, 0.0),
            C64::new(p.c * p.d, 0.0),
            C64::new(p.c * p.d, 0.0),
            C64::new(p.c * p.d * p.d, 0.0),
        ],
    );
    STForm::new(4, s, t).expect("family blocks are well formed")
}

// ---------------------------------------------------------------------------
// serialization: {n, form, row-major [re, im] matrices}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CouplingJson {
    n: usize,
    form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t: Option<Vec<[f64; 2]>>,
}

pub(crate) fn matrix_to_pairs(m: &DMatrix<C64>) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

pub(crate) fn pairs_to_matrix(rows: usize, cols: usize, v: &[[f64; 2]]) -> Result<DMatrix<C64>> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "expected {} entries for a {}x{} matrix, got {}",
            rows * cols,
            rows,
            cols,
            v.len()
        )));
    }
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        let p = v[i * cols + j];
        C64::new(p[0], p[1])
    }))
}

/// Either representation of a coupling for (de)serialization.
#[derive(Debug, Clone)]
pub enum CouplingSpec {
    Ab(VertexCoupling),
    St(STForm),
}

impl CouplingSpec {
    pub fn to_coupling(&self) -> VertexCoupling {
        match self {
            CouplingSpec::Ab(c) => c.clone(),
            CouplingSpec::St(st) => st_to_ab(st),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let j = match self {
            CouplingSpec::Ab(c) => CouplingJson {
                n: c.n(),
                form: "AB".into(),
                a: Some(matrix_to_pairs(&c.a)),
                b: Some(matrix_to_pairs(&c.b)),
                m: None,
                s: None,
                t: None,
            },
            CouplingSpec::St(st) => CouplingJson {
                n: st.n(),
                form: "ST".into(),
                a: None,
                b: None,
                m: Some(st.m()),
                s: Some(matrix_to_pairs(&st.s)),
                t: Some(matrix_to_pairs(&st.t)),
            },
        };
        serde_json::to_value(j).expect("coupling serialization cannot fail")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: CouplingJson = serde_json::from_value(v.clone())?;
        match j.form.as_str() {
            "AB" => {
                let a = j
                    .a
                    .ok_or_else(|| Error::Config("AB form requires field 'a'".into()))?;
                let b = j
                    .b
                    .ok_or_else(|| Error::Config("AB form requires field 'b'".into()))?;
                Ok(CouplingSpec::Ab(VertexCoupling::new(
                    pairs_to_matrix(j.n, j.n, &a)?,
                    pairs_to_matrix(j.n, j.n, &b)?,
                )?))
            }
            "ST" => {
                let m = j
                    .m
                    .ok_or_else(|| Error::Config("ST form requires field 'm'".into()))?;
                if m > j.n {
                    return Err(Error::Config(format!("m = {} exceeds n = {}", m, j.n)));
                }
                let s = j
                    .s
                    .ok_or_else(|| Error::Config("ST form requires field 's'".into()))?;
                let t = j
                    .t
                    .ok_or_else(|| Error::Config("ST form requires field 't'".into()))?;
                Ok(CouplingSpec::St(STForm::new(
                    j.n,
                    pairs_to_matrix(m, m, &s)?,
                    pairs_to_matrix(m, j.n - m, &t)?,
                )?))
            }
            other => Err(Error::Config(format!("unknown coupling form '{other}'"))),
        }
    }
}
