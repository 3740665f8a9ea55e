//! Two-strand ladder: parallel strands of period `L` joined every cell by a
//! rung of length `ell`, with a delta junction on the top strand and a
//! symmetrized delta-prime junction on the bottom one. Includes the general
//! two-junction family and its zero-rung-length reduction to a four-end
//! coupling.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bloch::{self, BandScan, FluxResult, ScanRow};
use crate::cell::{Edge, EdgeEnd, Slot, UnitCell, Vertex};
use crate::error::{Error, Result};
use crate::linalg;
use crate::vertex::{delta_coupling, delta_prime_coupling, VertexCoupling};
use crate::C64;

/// Pole guard on `cos(k ell)`: the closed-form secular relation multiplies
/// through a `tan(k ell)`; near its poles use the determinant path.
pub const POLE_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LadderParams {
    /// Delta-prime strength at the bottom junctions.
    pub u: f64,
    /// Delta strength at the top junctions.
    pub v: f64,
    /// Strand period.
    pub strand_period: f64,
    /// Rung length.
    pub rung_length: f64,
}

impl LadderParams {
    /// Unit cell: strand edges 0 (top) and 1 (bottom) of length `L`, rung
    /// edge 2 of length `ell`. The top junction joins (strand-1 left via the
    /// Bloch shift, strand-1 right, rung bottom); the bottom junction joins
    /// (strand-2 left, strand-2 right, rung top).
    pub fn unit_cell(&self) -> UnitCell {
        let l = self.strand_period;
        UnitCell {
            edges: vec![Edge::plain(l), Edge::plain(l), Edge::plain(self.rung_length)],
            vertices: vec![
                Vertex {
                    coupling: delta_coupling(3, self.v),
                    slots: vec![
                        Slot::shifted(0, EdgeEnd::End, vec![-1]),
                        Slot::interior(0, EdgeEnd::Begin),
                        Slot::interior(2, EdgeEnd::Begin),
                    ],
                },
                Vertex {
                    coupling: delta_prime_coupling(3, self.u),
                    slots: vec![
                        Slot::shifted(1, EdgeEnd::End, vec![-1]),
                        Slot::interior(1, EdgeEnd::Begin),
                        Slot::interior(2, EdgeEnd::End),
                    ],
                },
            ],
            periods: vec![l],
        }
    }

    fn secular_coefficients(&self, k: f64) -> Result<(f64, f64)> {
        if k <= 0.0 {
            return Err(Error::Domain(format!("wavenumber must be positive, got {k}")));
        }
        let l = self.strand_period;
        let ell = self.rung_length;
        if (k * ell).cos().abs() <= POLE_GUARD {
            return Err(Error::Domain(format!(
                "cos(k ell) = {:.3e} too close to a pole at k = {k}; use the determinant path",
                (k * ell).cos()
            )));
        }
        let (u, v) = (self.u, self.v);
        let s = (k * l).sin();
        let b = -2.0 * s * (k * u + v / k);
        let c = (2.0 * k * l).sin() * (k * u - v / k) + s * s * (u * v + 5.0) - 2.0
            + (k * ell).tan() * (s * s * (v / k - k * u) + 2.0 * (2.0 * k * l).sin());
        Ok((b, c))
    }

    /// Closed-form secular relation
    /// `2 cos(2Lq) + B(k) cos(Lq) + C(k) = 0` with
    /// `B = -2 sin(kL) (k u + v/k)` and
    /// `C = sin(2kL)(k u - v/k) + sin^2(kL)(u v + 5) - 2
    ///      + tan(k ell) (sin^2(kL)(v/k - k u) + 2 sin(2kL))`;
    /// returns the left-hand side, which vanishes exactly on the branches.
    pub fn secular_residual(&self, k: f64, q: f64) -> Result<f64> {
        let (b, c) = self.secular_coefficients(k)?;
        let l = self.strand_period;
        Ok(2.0 * (2.0 * l * q).cos() + b * (l * q).cos() + c)
    }

    /// Solve the secular relation as a quadratic in `cos(Lq)`. Returns the
    /// real solutions with modulus at most one, as `q` values in
    /// `[0, pi/L]`, largest `cos` first; empty means a gap.
    pub fn solve_q(&self, k: f64) -> Result<Vec<f64>> {
        let (b, c) = self.secular_coefficients(k)?;
        // 2(2x^2 - 1) + Bx + C = 0  =>  4x^2 + Bx + (C - 2) = 0
        let disc = b * b - 16.0 * (c - 2.0);
        if disc < 0.0 {
            return Ok(vec![]);
        }
        let root = disc.sqrt();
        let mut xs = vec![(-b + root) / 8.0, (-b - root) / 8.0];
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let l = self.strand_period;
        Ok(xs
            .into_iter()
            .filter(|x| x.abs() <= 1.0)
            .map(|x| x.clamp(-1.0, 1.0).acos() / l)
            .collect())
    }

    /// Strand fluxes for the `branch`-th solution of [`Self::solve_q`]
    /// (0-based, ordered as returned there).
    pub fn ladder_flux(&self, k: f64, branch: usize) -> Result<FluxResult> {
        let qs = self.solve_q(k)?;
        let q = *qs.get(branch).ok_or_else(|| {
            Error::NoState(format!(
                "branch {branch} has no state at k = {k} ({} solutions)",
                qs.len()
            ))
        })?;
        let z = C64::from_polar(1.0, q * self.strand_period);
        let cell = self.unit_cell();
        let ev = bloch::eigenvector(&cell, k, &[z])?;
        Ok(crate::chain::flux_result_from_coeffs(&ev.coefficients, k))
    }

    /// Scan rows for every in-band (k, branch) pair of the grid.
    pub fn scan(&self, k_grid: &[f64]) -> Result<BandScan> {
        let cell = self.unit_cell();
        let rows: Vec<ScanRow> = k_grid
            .par_iter()
            .map(|&k| -> Result<Vec<ScanRow>> {
                let mut out = Vec::new();
                if k < bloch::K_MIN {
                    return Ok(out);
                }
                let qs = match self.solve_q(k) {
                    Ok(qs) => qs,
                    Err(Error::Domain(_)) => return Ok(out), // tan pole; skip grid point
                    Err(e) => return Err(e),
                };
                for (bi, &q) in qs.iter().enumerate() {
                    let z = C64::from_polar(1.0, q * self.strand_period);
                    let ev = bloch::eigenvector(&cell, k, &[z])?;
                    let fr = crate::chain::flux_result_from_coeffs(&ev.coefficients, k);
                    out.push(ScanRow {
                        k,
                        energy: k * k,
                        q: vec![q],
                        branch: bi.to_string(),
                        cos_ql: (q * self.strand_period).cos(),
                        fluxes: vec![fr.j1, fr.j2],
                        log_ratio: fr.log_ratio,
                        rel_sign: fr.rel_sign,
                    });
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect();
        Ok(BandScan { rows })
    }
}

/// Parameters of the general junction pair: the top junction ties the two
/// strand traces to the rung end through `a1, a2` and a Hermitian 2x2
/// potential block, the bottom one through `b1, b2` and a scalar `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralJunctionParams {
    pub a1: C64,
    pub a2: C64,
    pub b1: C64,
    pub b2: C64,
    pub v11: f64,
    pub v22: f64,
    pub v12: C64,
    pub u: f64,
}

impl GeneralJunctionParams {
    /// Junction pair that reduces to the chain family `(a, b, c, d)` in the
    /// zero-rung-length limit.
    pub fn chain_limit(family: &crate::vertex::CouplingFamilyParams) -> Self {
        GeneralJunctionParams {
            a1: C64::new(family.a, 0.0),
            a2: C64::new(family.a, 0.0),
            b1: C64::new(family.b / family.a, 0.0),
            b2: C64::new(1.0, 0.0),
            v11: family.c,
            v22: family.c * family.d * family.d,
            v12: C64::new(family.c * family.d, 0.0),
            u: 0.0,
        }
    }

    /// Top 3x3 coupling on the traces (strand-left, strand-right, rung):
    /// derivative rows `Psi'_1 + a1 D = v11 Psi_1 + v12 Psi_2` etc., value
    /// row `phi = conj(a1) Psi_1 + conj(a2) Psi_2`.
    pub fn top_coupling(&self) -> VertexCoupling {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let b = DMatrix::from_row_slice(
            3,
            3,
            &[one, zero, self.a1, zero, one, self.a2, zero, zero, zero],
        );
        let a = -DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(self.v11, 0.0),
                self.v12,
                zero,
                self.v12.conj(),
                C64::new(self.v22, 0.0),
                zero,
                -self.a1.conj(),
                -self.a2.conj(),
                one,
            ],
        );
        VertexCoupling { a, b }
    }

    /// Bottom 3x3 coupling: derivative row
    /// `Psi'_1 + b1 Psi'_2 + b2 D = u Psi_1`, value rows
    /// `Psi_2 = conj(b1) Psi_1` and `phi = conj(b2) Psi_1`.
    pub fn bottom_coupling(&self) -> VertexCoupling {
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let b = DMatrix::from_row_slice(
            3,
            3,
            &[one, self.b1, self.b2, zero, zero, zero, zero, zero, zero],
        );
        let a = -DMatrix::from_row_slice(
            3,
            3,
            &[
                C64::new(self.u, 0.0),
                zero,
                zero,
                -self.b1.conj(),
                one,
                zero,
                -self.b2.conj(),
                zero,
                one,
            ],
        );
        VertexCoupling { a, b }
    }
}

/// Ladder cell with arbitrary three-end junction couplings.
pub fn general_ladder_cell(
    top: VertexCoupling,
    bottom: VertexCoupling,
    strand_period: f64,
    rung_length: f64,
) -> UnitCell {
    UnitCell {
        edges: vec![
            Edge::plain(strand_period),
            Edge::plain(strand_period),
            Edge::plain(rung_length),
        ],
        vertices: vec![
            Vertex {
                coupling: top,
                slots: vec![
                    Slot::shifted(0, EdgeEnd::End, vec![-1]),
                    Slot::interior(0, EdgeEnd::Begin),
                    Slot::interior(2, EdgeEnd::Begin),
                ],
            },
            Vertex {
                coupling: bottom,
                slots: vec![
                    Slot::shifted(1, EdgeEnd::End, vec![-1]),
                    Slot::interior(1, EdgeEnd::Begin),
                    Slot::interior(2, EdgeEnd::End),
                ],
            },
        ],
        periods: vec![strand_period],
    }
}

/// Eliminate the rung traces in the zero-length limit (`phi` and `phi'`
/// equal at both junctions) and return the effective four-end coupling on
/// (strand-1 left, strand-1 right, strand-2 left, strand-2 right).
///
/// The elimination is done numerically: the six junction conditions in the
/// ten variables `(Psi, Psi', phi, D)` are projected onto the strand traces
/// by dropping the rung pair from their joint null space.
pub fn reduce_zero_length(params: &GeneralJunctionParams) -> Result<VertexCoupling> {
    if params.b2.norm() < 1e-14 {
        return Err(Error::Elimination("pivot b2 vanishes".into()));
    }
    if params.a1.norm() < 1e-14 {
        return Err(Error::Elimination("pivot a1 vanishes".into()));
    }
    let top = params.top_coupling();
    let bottom = params.bottom_coupling();

    // columns: Psi_1..Psi_4 | Psi'_1..Psi'_4 | phi | D
    let mut sys = DMatrix::<C64>::zeros(6, 10);
    for i in 0..3 {
        // top junction traces: (Psi_1, Psi_2, phi), (Psi'_1, Psi'_2, +D)
        sys[(i, 0)] = top.a[(i, 0)];
        sys[(i, 1)] = top.a[(i, 1)];
        sys[(i, 8)] = top.a[(i, 2)];
        sys[(i, 4)] = top.b[(i, 0)];
        sys[(i, 5)] = top.b[(i, 1)];
        sys[(i, 9)] = top.b[(i, 2)];
        // bottom junction traces: (Psi_3, Psi_4, phi), (Psi'_3, Psi'_4, -D)
        sys[(3 + i, 2)] = bottom.a[(i, 0)];
        sys[(3 + i, 3)] = bottom.a[(i, 1)];
        sys[(3 + i, 8)] = bottom.a[(i, 2)];
        sys[(3 + i, 6)] = bottom.b[(i, 0)];
        sys[(3 + i, 7)] = bottom.b[(i, 1)];
        sys[(3 + i, 9)] = -bottom.b[(i, 2)];
    }

    let kernel = linalg::null_space(&sys);
    if kernel.ncols() != 4 {
        return Err(Error::Elimination(format!(
            "expected a 4-dimensional solution family, found {}",
            kernel.ncols()
        )));
    }
    let projected = kernel.rows(0, 8).into_owned();
    let basis = linalg::orthonormalize(&projected);
    if basis.ncols() != 4 {
        return Err(Error::Elimination(format!(
            "projected boundary family has rank {}, expected 4",
            basis.ncols()
        )));
    }
    // rows r with r . s = 0 (plain transpose) for every solution s
    let rows = linalg::null_space(&basis.transpose());
    if rows.ncols() != 4 {
        return Err(Error::Elimination(
            "complement of the boundary family has wrong dimension".into(),
        ));
    }
    let coeff = rows.transpose();
    let a = coeff.columns(0, 4).into_owned();
    let b = coeff.columns(4, 4).into_owned();
    VertexCoupling::new(a, b)
}

/// Transfer matrix of one ladder period acting on
/// `(psi1, psi1', psi2, psi2')`; an independent route to the dispersion
/// used by the test oracles.
pub fn period_transfer_matrix(p: &LadderParams, k: f64) -> Result<DMatrix<C64>> {
    if k <= 0.0 {
        return Err(Error::Domain("wavenumber must be positive".into()));
    }
    let ell = p.rung_length;
    let l = p.strand_period;
    let (cl, sl) = ((k * ell).cos(), (k * ell).sin());
    if cl.abs() <= POLE_GUARD {
        return Err(Error::Domain("transfer matrix hits a rung pole".into()));
    }
    let t = sl / cl;
    // junction map: values/derivatives just right of the junctions in terms
    // of those just left, with the rung eliminated exactly at length ell
    let mut j = DMatrix::<C64>::zeros(4, 4);
    let c = |x: f64| C64::new(x, 0.0);
    j[(0, 0)] = c(1.0);
    j[(1, 0)] = c(p.v - k * t);
    j[(1, 1)] = c(1.0);
    j[(1, 3)] = c(-1.0 / cl);
    j[(2, 0)] = c(-1.0 / cl);
    j[(2, 2)] = c(-1.0);
    j[(2, 3)] = c(-(p.u + t / k));
    j[(3, 3)] = c(-1.0);
    let mut prop = DMatrix::<C64>::zeros(4, 4);
    let (cll, sll) = ((k * l).cos(), (k * l).sin());
    for s in 0..2 {
        prop[(2 * s, 2 * s)] = c(cll);
        prop[(2 * s, 2 * s + 1)] = c(sll / k);
        prop[(2 * s + 1, 2 * s)] = c(-k * sll);
        prop[(2 * s + 1, 2 * s + 1)] = c(cll);
    }
    Ok(j * prop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bloch::bloch_phases;
    use crate::linalg::{hcat, max_principal_angle, null_space};
    use crate::vertex::{chain_family, st_to_ab, validate, CouplingFamilyParams};

    fn reference() -> LadderParams {
        LadderParams {
            u: 1.0,
            v: 1.0,
            strand_period: 1.0,
            rung_length: 1.0,
        }
    }

    #[test]
    fn closed_form_matches_determinant_roots() {
        let p = reference();
        let cell = p.unit_cell();
        for k in [0.3, 1.5, 2.3, 3.3, 4.5, 6.9] {
            let qs = p.solve_q(k).unwrap();
            let mut closed: Vec<f64> = qs.iter().map(|q| (q * p.strand_period).cos()).collect();
            closed.sort_by(f64::total_cmp);
            let mut generic: Vec<f64> = bloch_phases(&cell, k, 0, &[C64::new(1.0, 0.0)])
                .unwrap()
                .iter()
                .map(|z| z.re)
                .collect();
            generic.sort_by(f64::total_cmp);
            generic.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            assert_eq!(closed.len(), generic.len(), "k = {k}");
            for (c, g) in closed.iter().zip(&generic) {
                assert!((c - g).abs() < 1e-8, "k = {k}");
            }
            // residual vanishes on the roots and is even in q
            for q in &qs {
                assert!(p.secular_residual(k, *q).unwrap().abs() < 1e-9);
                assert!(
                    (p.secular_residual(k, *q).unwrap() - p.secular_residual(k, -*q).unwrap())
                        .abs()
                        < 1e-12
                );
            }
        }
    }

    #[test]
    fn residual_is_bounded_away_from_zero_in_gap() {
        let p = reference();
        // k = 2.0 lies in a gap (no determinant roots)
        let cell = p.unit_cell();
        assert!(bloch_phases(&cell, 2.0, 0, &[C64::new(1.0, 0.0)])
            .unwrap()
            .is_empty());
        for q in [0.3, 1.1, 2.2, 3.0] {
            assert!(p.secular_residual(2.0, q).unwrap().abs() > 1e-3);
        }
    }

    #[test]
    fn pole_guard_is_enforced() {
        let p = reference();
        let k = std::f64::consts::FRAC_PI_2; // cos(k ell) = 0
        assert!(matches!(p.solve_q(k), Err(Error::Domain(_))));
    }

    #[test]
    fn transfer_matrix_and_determinant_agree() {
        let p = LadderParams {
            u: -0.7,
            v: 1.9,
            strand_period: 1.3,
            rung_length: 0.8,
        };
        let cell = p.unit_cell();
        for k in [0.4, 1.1, 2.7, 4.9] {
            if (k * p.rung_length).cos().abs() < 0.05 {
                continue;
            }
            let t = period_transfer_matrix(&p, k).unwrap();
            let eig = t
                .clone()
                .try_schur(1e-12, 2000)
                .and_then(|s| s.eigenvalues())
                .expect("transfer spectrum");
            let mut tm_cos: Vec<f64> = eig
                .iter()
                .filter(|lam| (lam.norm() - 1.0).abs() < 1e-7)
                .map(|lam| lam.re)
                .collect();
            tm_cos.sort_by(f64::total_cmp);
            tm_cos.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
            let mut det_cos: Vec<f64> = bloch_phases(&cell, k, 0, &[C64::new(1.0, 0.0)])
                .unwrap()
                .iter()
                .map(|z| z.re)
                .collect();
            det_cos.sort_by(f64::total_cmp);
            det_cos.dedup_by(|a, b| (*a - *b).abs() < 1e-7);
            assert_eq!(tm_cos.len(), det_cos.len(), "k = {k}");
            for (a, b) in tm_cos.iter().zip(&det_cos) {
                assert!((a - b).abs() < 1e-7, "k = {k}");
            }
        }
    }

    #[test]
    fn rung_balances_the_strand_fluxes() {
        let p = reference();
        let cell = p.unit_cell();
        for k in [0.5, 2.5, 3.2] {
            let Ok(qs) = p.solve_q(k) else { continue };
            for q in qs {
                if (q * p.strand_period).cos().abs() > 0.999 {
                    continue;
                }
                let z = C64::from_polar(1.0, q);
                let ev = bloch::eigenvector(&cell, k, &[z]).unwrap();
                assert!(bloch::kirchhoff_residual(&cell, k, &[z], &ev.coefficients) < 1e-10);
            }
        }
    }

    #[test]
    fn zero_length_reduction_reproduces_chain_family() {
        for (a, b, c, d) in [
            (1.0 / 3.0, 1.0 / 3.0, 8.0, 1.0),
            (1.0 / 3.0, -1.0 / 3.0, 8.0, 1.0),
            (0.45, -0.45, 3.0, -1.0),
            (0.5, 0.2, 2.0, 0.7),
        ] {
            let fam = CouplingFamilyParams { a, b, c, d };
            let params = GeneralJunctionParams::chain_limit(&fam);
            let reduced = reduce_zero_length(&params).unwrap();
            assert!(validate(&reduced).unwrap().ok, "({a},{b},{c},{d})");
            let target = st_to_ab(&chain_family(&fam));
            let sub_r = null_space(&hcat(&reduced.a, &reduced.b));
            let sub_t = null_space(&hcat(&target.a, &target.b));
            assert_eq!(sub_r.ncols(), 4);
            assert!(
                max_principal_angle(&sub_r, &sub_t) < 1e-8,
                "family ({a},{b},{c},{d})"
            );
        }
    }

    #[test]
    fn reduction_rejects_vanishing_pivots() {
        let mut p = GeneralJunctionParams::chain_limit(&CouplingFamilyParams {
            a: 0.3,
            b: 0.3,
            c: 1.0,
            d: 1.0,
        });
        p.b2 = C64::new(0.0, 0.0);
        assert!(matches!(
            reduce_zero_length(&p),
            Err(Error::Elimination(_))
        ));
    }

    #[test]
    fn junction_couplings_are_admissible() {
        let p = GeneralJunctionParams {
            a1: C64::new(0.4, 0.0),
            a2: C64::new(0.7, 0.0),
            b1: C64::new(-0.3, 0.0),
            b2: C64::new(1.2, 0.0),
            v11: 1.0,
            v22: -0.5,
            v12: C64::new(0.25, 0.0),
            u: 0.8,
        };
        assert!(validate(&p.top_coupling()).unwrap().ok);
        assert!(validate(&p.bottom_coupling()).unwrap().ok);
    }
}
