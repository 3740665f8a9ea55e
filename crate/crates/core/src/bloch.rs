//! Generic secular problem for a periodic unit cell: assemble the linear
//! system over plane-wave coefficients, reconstruct the determinant as a
//! polynomial in one Bloch phase, find unit-circle roots, and extract null
//! vectors and per-edge probability fluxes.

use nalgebra::{DMatrix, DVector};

use crate::cell::{EdgeEnd, UnitCell};
use crate::error::{Error, Result};
use crate::linalg;
use crate::poly::Polynomial;
use crate::C64;

/// Tolerance for accepting a root as lying on the unit circle.
pub const UNIT_CIRCLE_TOL: f64 = 1e-8;

/// Relative determinant residual below which a phase counts as a root.
pub const DET_RESIDUAL_TOL: f64 = 1e-8;

/// Relative singular-value threshold for null vectors and degeneracy.
pub const EIGENVECTOR_TOL: f64 = 1e-8;

/// Smallest wavenumber admitted by the scans; the plane-wave ansatz
/// degenerates at k = 0.
pub const K_MIN: f64 = 1e-6;

fn end_traces(
    length: f64,
    vector_potential: f64,
    k: f64,
    end: EdgeEnd,
) -> ([C64; 2], [C64; 2]) {
    // value and outward covariant-derivative traces of
    // psi = e^{iAx} (alpha e^{ikx} + beta e^{-ikx}) as coefficients of
    // (alpha, beta); outward means pointing from the vertex into the edge.
    let ik = C64::new(0.0, k);
    match end {
        EdgeEnd::Begin => ([C64::new(1.0, 0.0), C64::new(1.0, 0.0)], [ik, -ik]),
        EdgeEnd::End => {
            let phase_a = C64::from_polar(1.0, vector_potential * length);
            let ep = C64::from_polar(1.0, k * length) * phase_a;
            let em = C64::from_polar(1.0, -k * length) * phase_a;
            ([ep, em], [-ik * ep, ik * em])
        }
    }
}

/// Build the secular matrix `M(k, z)` with one row per scalar boundary
/// condition and one column per plane-wave coefficient. `phases[d]` is the
/// Bloch phase `z_d = exp(i q_d P_d)`; slots with shift `w` multiply their
/// traces by `z_d^w`.
pub fn assemble(cell: &UnitCell, k: f64, phases: &[C64]) -> Result<DMatrix<C64>> {
    if k <= 0.0 || !k.is_finite() {
        return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
    }
    if phases.len() != cell.n_directions() {
        return Err(Error::Dimension(format!(
            "expected {} Bloch phases, got {}",
            cell.n_directions(),
            phases.len()
        )));
    }
    let ncols = cell.n_coefficients();
    let nrows = cell.n_conditions();
    let mut m = DMatrix::<C64>::zeros(nrows, ncols);
    let mut row0 = 0;
    for v in &cell.vertices {
        let n = v.slots.len();
        // scale-invariant row normalization keeps determinants O(1) even for
        // couplings with very large entries
        let mut scales = vec![0.0f64; n];
        for i in 0..n {
            for j in 0..n {
                scales[i] = scales[i]
                    .max(v.coupling.a[(i, j)].norm())
                    .max(k * v.coupling.b[(i, j)].norm());
            }
            if scales[i] == 0.0 {
                scales[i] = 1.0;
            }
        }
        for (s_idx, slot) in v.slots.iter().enumerate() {
            let edge = &cell.edges[slot.edge];
            let mut zf = C64::new(1.0, 0.0);
            for (d, z) in phases.iter().enumerate() {
                let w = slot.shift(d);
                if w != 0 {
                    zf *= z.powi(w);
                }
            }
            let (val, der) = end_traces(edge.length, edge.vector_potential, k, slot.end);
            for i in 0..n {
                let coef = (v.coupling.a[(i, s_idx)] * val[0] + v.coupling.b[(i, s_idx)] * der[0])
                    * zf
                    / C64::new(scales[i], 0.0);
                m[(row0 + i, 2 * slot.edge)] += coef;
                let coef = (v.coupling.a[(i, s_idx)] * val[1] + v.coupling.b[(i, s_idx)] * der[1])
                    * zf
                    / C64::new(scales[i], 0.0);
                m[(row0 + i, 2 * slot.edge + 1)] += coef;
            }
        }
        row0 += n;
    }
    Ok(m)
}

/// Degree bookkeeping for clearing `z^-1` factors out of the determinant.
fn degree_bounds(cell: &UnitCell, direction: usize) -> (usize, usize) {
    // column-based bound: each edge's two columns can carry the extreme
    // shifts of the slots attached to that edge
    let mut col_neg = vec![0i32; cell.edges.len()];
    let mut col_pos = vec![0i32; cell.edges.len()];
    // row-based bound: each vertex row can carry the extreme shifts of any
    // slot of that vertex
    let mut row_neg = Vec::new();
    let mut row_pos = Vec::new();
    for v in &cell.vertices {
        let mut neg = 0i32;
        let mut pos = 0i32;
        for s in &v.slots {
            let w = s.shift(direction);
            neg = neg.max(-w);
            pos = pos.max(w);
            col_neg[s.edge] = col_neg[s.edge].max(-w);
            col_pos[s.edge] = col_pos[s.edge].max(w);
        }
        for _ in 0..v.slots.len() {
            row_neg.push(neg);
            row_pos.push(pos);
        }
    }
    let col_shift: i32 = col_neg.iter().map(|&x| 2 * x).sum();
    let col_degree: i32 = col_neg
        .iter()
        .zip(&col_pos)
        .map(|(&n, &p)| 2 * (n + p))
        .sum();
    let row_shift: i32 = row_neg.iter().sum();
    let row_degree: i32 = row_neg.iter().zip(&row_pos).map(|(&n, &p)| n + p).sum();
    if col_degree <= row_degree {
        (col_shift as usize, col_degree as usize)
    } else {
        (row_shift as usize, row_degree as usize)
    }
}

/// Reconstruct `det M(z) * z^shift` exactly as a polynomial in the phase of
/// `direction`, holding the other phases fixed. Returns the trimmed
/// polynomial; its unit-circle roots are the admissible Bloch phases.
pub fn secular_polynomial(
    cell: &UnitCell,
    k: f64,
    direction: usize,
    fixed: &[C64],
) -> Result<Polynomial> {
    if direction >= cell.n_directions() {
        return Err(Error::Dimension(format!(
            "direction {direction} out of range for {} directions",
            cell.n_directions()
        )));
    }
    let (shift, degree) = degree_bounds(cell, direction);
    let mut phases: Vec<C64> = fixed.to_vec();
    if phases.len() != cell.n_directions() {
        return Err(Error::Dimension(format!(
            "expected {} phases (entry {direction} is overwritten), got {}",
            cell.n_directions(),
            fixed.len()
        )));
    }
    let mut err = None;
    let raw = Polynomial::from_circle_samples(
        |z| {
            phases[direction] = z;
            match assemble(cell, k, &phases) {
                Ok(m) => linalg::determinant(&m) * z.powi(shift as i32),
                Err(e) => {
                    err = Some(e);
                    C64::new(0.0, 0.0)
                }
            }
        },
        degree,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let (trimmed, _) = raw.trimmed();
    if trimmed.is_zero() {
        return Err(Error::FlatBand);
    }
    Ok(trimmed)
}

/// Unit-circle roots of the secular polynomial: the Bloch phases
/// `z = exp(i q P)` supporting a state at wavenumber `k`. Sorted by
/// argument; empty means a spectral gap at this `k`.
pub fn bloch_phases(cell: &UnitCell, k: f64, direction: usize, fixed: &[C64]) -> Result<Vec<C64>> {
    let poly = secular_polynomial(cell, k, direction, fixed)?;
    let scale = poly.max_coeff_norm();
    let mut out: Vec<C64> = Vec::new();
    for z in poly.roots()? {
        if (z.norm() - 1.0).abs() > UNIT_CIRCLE_TOL {
            continue;
        }
        if poly.eval(z).norm() > 1e-9 * scale {
            continue;
        }
        // confirm on the assembled matrix itself
        let mut phases = fixed.to_vec();
        phases[direction] = z;
        let m = assemble(cell, k, &phases)?;
        if linalg::determinant(&m).norm() > DET_RESIDUAL_TOL * m.norm().max(1e-300) {
            continue;
        }
        if out.iter().all(|w| (w - z).norm() > 1e-7) {
            out.push(z);
        }
    }
    out.sort_by(|a, b| a.arg().total_cmp(&b.arg()));
    Ok(out)
}

/// Null vector of the secular matrix at a root, with degeneracy detection.
#[derive(Debug, Clone)]
pub struct Eigenvector {
    /// Unit-norm coefficient vector `(alpha_0, beta_0, alpha_1, ...)`.
    pub coefficients: DVector<C64>,
    /// `|M v| / |M|`, guaranteed `<=` [`EIGENVECTOR_TOL`].
    pub residual: f64,
    /// Set when the two smallest singular values both vanish numerically.
    pub degenerate: bool,
    /// Second basis vector of the null space when `degenerate`.
    pub partner: Option<DVector<C64>>,
}

pub fn eigenvector(cell: &UnitCell, k: f64, phases: &[C64]) -> Result<Eigenvector> {
    let m = assemble(cell, k, phases)?;
    let sv = linalg::smallest_singular(&m)?;
    let scale = sv.sigma_max.max(1e-300);
    if sv.sigma_min > EIGENVECTOR_TOL * scale {
        return Err(Error::NoState(format!(
            "no null vector at k = {k}: smallest relative singular value {:.3e}",
            sv.sigma_min / scale
        )));
    }
    let degenerate = sv.sigma_second <= EIGENVECTOR_TOL * scale;
    Ok(Eigenvector {
        coefficients: sv.vector,
        residual: sv.sigma_min / scale,
        degenerate,
        partner: degenerate.then_some(sv.second_vector),
    })
}

/// Probability flux on one edge in units hbar = m = 1:
/// `J = k (|alpha|^2 - |beta|^2)`; constant along the edge, gauge term of a
/// constant vector potential drops out of the covariant current.
pub fn flux(coefficients: &DVector<C64>, k: f64, edge: usize) -> f64 {
    let a = coefficients[2 * edge].norm_sqr();
    let b = coefficients[2 * edge + 1].norm_sqr();
    k * (a - b)
}

/// Pointwise current `Im(conj(psi) (psi' - i A psi))` at position `x` on an
/// edge; equals [`flux`] for every `x` and serves as its independent check.
pub fn pointwise_flux(
    coefficients: &DVector<C64>,
    k: f64,
    edge_index: usize,
    vector_potential: f64,
    x: f64,
) -> f64 {
    let alpha = coefficients[2 * edge_index];
    let beta = coefficients[2 * edge_index + 1];
    let gauge = C64::from_polar(1.0, vector_potential * x);
    let ep = C64::from_polar(1.0, k * x);
    let em = C64::from_polar(1.0, -k * x);
    let psi = gauge * (alpha * ep + beta * em);
    let dcov = gauge * C64::new(0.0, k) * (alpha * ep - beta * em);
    (psi.conj() * dcov).im
}

/// Largest magnitude over all vertices of the signed flux sum into the
/// vertex; vanishes for every state of a self-adjoint cell.
pub fn kirchhoff_residual(cell: &UnitCell, k: f64, phases: &[C64], v: &DVector<C64>) -> f64 {
    let mut worst = 0.0f64;
    for vertex in &cell.vertices {
        let mut sum = 0.0;
        for slot in &vertex.slots {
            let j = flux(v, k, slot.edge);
            // outward current at Begin is +J, at End is -J
            sum += match slot.end {
                EdgeEnd::Begin => j,
                EdgeEnd::End => -j,
            };
        }
        worst = worst.max(sum.abs());
    }
    worst
}

/// Strand-pair flux summary.
#[derive(Debug, Clone)]
pub struct FluxResult {
    /// Fluxes on the two strands of interest.
    pub j1: f64,
    pub j2: f64,
    /// `log10 |J1/J2|`; infinite when one flux vanishes, NaN when both do.
    pub log_ratio: f64,
    /// `sign(J1 * J2)`; 0 only when a flux is numerically zero.
    pub rel_sign: i8,
}

/// Threshold under which a flux counts as zero, relative to the squared
/// coefficient norm.
pub const FLUX_ZERO_TOL: f64 = 1e-12;

impl FluxResult {
    pub fn from_fluxes(j1: f64, j2: f64, coeff_norm_sqr: f64) -> Self {
        let tiny = FLUX_ZERO_TOL * coeff_norm_sqr;
        let z1 = j1.abs() < tiny;
        let z2 = j2.abs() < tiny;
        let log_ratio = if z1 && z2 {
            f64::NAN
        } else if z2 {
            f64::INFINITY
        } else if z1 {
            f64::NEG_INFINITY
        } else {
            (j1 / j2).abs().log10()
        };
        let rel_sign = if z1 || z2 {
            0
        } else if j1 * j2 > 0.0 {
            1
        } else {
            -1
        };
        FluxResult {
            j1,
            j2,
            log_ratio,
            rel_sign,
        }
    }
}

/// One record of a band scan.
#[derive(Debug, Clone)]
pub struct ScanRow {
    pub k: f64,
    pub energy: f64,
    pub q: Vec<f64>,
    pub branch: String,
    pub cos_ql: f64,
    pub fluxes: Vec<f64>,
    pub log_ratio: f64,
    pub rel_sign: i8,
}

/// Tabulated scan over a wavenumber grid.
#[derive(Debug, Clone, Default)]
pub struct BandScan {
    pub rows: Vec<ScanRow>,
}

/// Refine a boolean transition (e.g. in-band to gap) between `lo` and `hi`
/// to `tol` by bisection. `f(lo)` and `f(hi)` must differ.
pub fn refine_boolean_edge(mut f: impl FnMut(f64) -> bool, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let flo = f(lo);
    debug_assert!(flo != f(hi));
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) == flo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximal `k`-intervals on which `in_band` holds, sampled on `n` grid
/// points and refined to `tol` at the edges.
pub fn band_intervals(
    in_band: impl Fn(f64) -> bool + Sync,
    k_min: f64,
    k_max: f64,
    n: usize,
    tol: f64,
) -> Vec<(f64, f64)> {
    use rayon::prelude::*;
    let ks: Vec<f64> = (0..n)
        .map(|i| k_min + (k_max - k_min) * i as f64 / (n - 1) as f64)
        .collect();
    let flags: Vec<bool> = ks.par_iter().map(|&k| in_band(k)).collect();
    let mut out = Vec::new();
    let mut start: Option<f64> = flags[0].then_some(ks[0]);
    for i in 1..n {
        if flags[i] != flags[i - 1] {
            let edge = refine_boolean_edge(&in_band, ks[i - 1], ks[i], tol);
            if flags[i] {
                start = Some(edge);
            } else if let Some(s) = start.take() {
                out.push((s, edge));
            }
        }
    }
    if let Some(s) = start {
        out.push((s, k_max));
    }
    out
}
