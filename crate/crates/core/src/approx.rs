//! Realization of singular vertex couplings by auxiliary graphs carrying
//! only delta couplings and constant vector potentials: split the vertex
//! into one node per edge end, join selected node pairs by short lines of
//! length `2 d0` with a delta in the middle, and scale all strengths with
//! `1/d0` so the construction converges to the original coupling as
//! `d0 -> 0`.

use crate::bloch;
use crate::cell::{Edge, EdgeEnd, Slot, UnitCell, Vertex};
use crate::chain::ChainParams;
use crate::error::{Error, Result};
use crate::vertex::{chain_family, delta_coupling, STForm};
use crate::C64;

/// Entry threshold: matrix entries below this (relative to the block norm)
/// do not create connections.
const SUPPORT_TOL: f64 = 1e-12;

/// Signed modulus `|c|` carrying the sign of the real-part branch.
fn signed_modulus(c: C64) -> f64 {
    if c.re >= 0.0 {
        c.norm()
    } else {
        -c.norm()
    }
}

fn arg_branch(c: C64) -> f64 {
    if c.re >= 0.0 {
        c.arg()
    } else {
        c.arg() - std::f64::consts::PI
    }
}

/// One connecting line of the auxiliary graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxLine {
    /// Nodes joined by the line (indices into the node list).
    pub node_a: usize,
    pub node_b: usize,
    /// Delta strength at the line center.
    pub center_strength: f64,
    /// Constant vector potential on the first half; the second half carries
    /// its negative.
    pub vector_potential: f64,
    /// Sign branch of the signed modulus that produced `center_strength`;
    /// recorded so convergence reports can flag branch flips across `d0`.
    pub bracket_sign: i8,
}

/// Delta-only auxiliary graph approximating a singular vertex.
#[derive(Debug, Clone)]
pub struct ApproxGraph {
    /// Half-length of the connecting lines.
    pub d0: f64,
    /// Delta strength at each node, ordered like the original edge ends.
    pub node_strengths: Vec<f64>,
    pub lines: Vec<ApproxLine>,
}

impl ApproxGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_strengths.len()
    }

    /// Number of lines incident to each node.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_nodes()];
        for l in &self.lines {
            deg[l.node_a] += 1;
            deg[l.node_b] += 1;
        }
        deg
    }

    pub fn line_between(&self, a: usize, b: usize) -> Option<&ApproxLine> {
        self.lines
            .iter()
            .find(|l| (l.node_a == a && l.node_b == b) || (l.node_a == b && l.node_b == a))
    }
}

/// Build the auxiliary graph for an ST-form coupling.
///
/// Connections: node `j <= m` joins node `k > m` when `T[j][k]` is nonzero;
/// nodes `j, k <= m` join when the rows of `T` overlap on some column or,
/// failing that, when `S[j][k]` is nonzero. Strengths follow the `1/d0`
/// scaling laws of the delta realization; vector potentials stay zero for
/// entries with nonnegative real part.
pub fn build_from_st(st: &STForm, d0: f64) -> Result<ApproxGraph> {
    if !(d0 > 0.0) {
        return Err(Error::Domain(format!("d0 must be positive, got {d0}")));
    }
    let n = st.n();
    let m = st.m();
    let t_scale = 1.0 + st.t.norm();
    let s_scale = 1.0 + st.s.norm();
    let t_nz = |j: usize, col: usize| st.t[(j, col)].norm() > SUPPORT_TOL * t_scale;

    // overlap of T rows j and k: sum_l T[j][l] conj(T[k][l])
    let row_overlap = |j: usize, k: usize| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for l in 0..n - m {
            acc += st.t[(j, l)] * st.t[(k, l)].conj();
        }
        acc
    };

    let mut lines = Vec::new();
    // pairs among the first m nodes
    for j in 0..m {
        for k in j + 1..m {
            let overlap = row_overlap(j, k);
            let has_overlap = (0..n - m).any(|l| t_nz(j, l) && t_nz(k, l));
            let s_jk = st.s[(j, k)];
            if has_overlap || s_jk.norm() > SUPPORT_TOL * s_scale {
                let bracket = C64::new(d0, 0.0) * s_jk + overlap;
                let sm = signed_modulus(bracket);
                if sm == 0.0 {
                    return Err(Error::Domain(format!(
                        "connecting line ({j},{k}) has a vanishing strength bracket"
                    )));
                }
                lines.push(ApproxLine {
                    node_a: j,
                    node_b: k,
                    center_strength: -(2.0 + 1.0 / sm) / d0,
                    vector_potential: arg_branch(bracket) / (2.0 * d0),
                    bracket_sign: if bracket.re >= 0.0 { 1 } else { -1 },
                });
            }
        }
    }
    // pairs bridging the two blocks
    for j in 0..m {
        for l in 0..n - m {
            if t_nz(j, l) {
                let t_jl = st.t[(j, l)];
                lines.push(ApproxLine {
                    node_a: j,
                    node_b: m + l,
                    center_strength: (-2.0 + 1.0 / signed_modulus(t_jl)) / d0,
                    vector_potential: arg_branch(t_jl) / (2.0 * d0),
                    bracket_sign: if t_jl.re >= 0.0 { 1 } else { -1 },
                });
            }
        }
    }

    let mut degrees = vec![0usize; n];
    for l in &lines {
        degrees[l.node_a] += 1;
        degrees[l.node_b] += 1;
    }

    let mut node_strengths = vec![0.0f64; n];
    for j in 0..m {
        // derivative-block nodes
        let mut v = st.s[(j, j)].re - degrees[j] as f64 / d0;
        for k in 0..m {
            if k == j {
                continue;
            }
            v -= signed_modulus(st.s[(j, k)] + row_overlap(j, k) / C64::new(d0, 0.0));
        }
        for l in 0..n - m {
            let tm = signed_modulus(st.t[(j, l)]);
            v += (1.0 + tm) * tm / d0;
        }
        node_strengths[j] = v;
    }
    for k in 0..n - m {
        // value-block nodes
        let mut acc = 1.0 - degrees[m + k] as f64;
        for h in 0..m {
            acc += signed_modulus(st.t[(h, k)]);
        }
        node_strengths[m + k] = acc / d0;
    }

    Ok(ApproxGraph {
        d0,
        node_strengths,
        lines,
    })
}

/// Six-node auxiliary graph for the ladder junction pair with top blocks
/// `T = (a, a)^T`, `S = c * ones` and a plain three-way delta of strength 0
/// at the bottom. Nodes 0, 1 are the top strand ends, node 4 the top rung
/// end; node 2 is the bottom strand-left end, nodes 3, 5 the remaining
/// bottom ends.
pub fn ladder_vertex_approx(a: f64, c: f64, d0: f64) -> Result<(ApproxGraph, ApproxGraph)> {
    if a == 0.0 || c == 0.0 {
        return Err(Error::Domain(
            "ladder vertex realization needs nonzero a and c".into(),
        ));
    }
    let one = C64::new(1.0, 0.0);
    let top = STForm::new(
        3,
        nalgebra::DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new(c, 0.0),
                C64::new(c, 0.0),
                C64::new(c, 0.0),
                C64::new(c, 0.0),
            ],
        ),
        nalgebra::DMatrix::from_row_slice(2, 1, &[C64::new(a, 0.0), C64::new(a, 0.0)]),
    )?;
    let bottom = STForm::new(
        3,
        nalgebra::DMatrix::from_row_slice(1, 1, &[C64::new(0.0, 0.0)]),
        nalgebra::DMatrix::from_row_slice(1, 2, &[one, one]),
    )?;
    Ok((build_from_st(&top, d0)?, build_from_st(&bottom, d0)?))
}

/// Replace vertex `vertex_idx` of `cell` by the auxiliary graph: node `j`
/// inherits the vertex's slot `j` plus its line halves, each line center
/// becomes a two-end delta, and the two halves carry opposite constant
/// vector potentials.
pub fn substitute_vertex(
    cell: &UnitCell,
    vertex_idx: usize,
    graph: &ApproxGraph,
) -> Result<UnitCell> {
    let old = cell
        .vertices
        .get(vertex_idx)
        .ok_or_else(|| Error::InvalidCell(format!("no vertex {vertex_idx}")))?;
    if old.slots.len() != graph.n_nodes() {
        return Err(Error::Dimension(format!(
            "auxiliary graph has {} nodes but the vertex has {} ends",
            graph.n_nodes(),
            old.slots.len()
        )));
    }
    let mut edges = cell.edges.clone();
    let mut node_slots: Vec<Vec<Slot>> = old.slots.iter().map(|s| vec![s.clone()]).collect();
    let mut mid_vertices = Vec::new();
    for line in &graph.lines {
        let half1 = edges.len();
        edges.push(Edge {
            length: graph.d0,
            vector_potential: line.vector_potential,
        });
        let half2 = edges.len();
        edges.push(Edge {
            length: graph.d0,
            vector_potential: -line.vector_potential,
        });
        node_slots[line.node_a].push(Slot::interior(half1, EdgeEnd::Begin));
        node_slots[line.node_b].push(Slot::interior(half2, EdgeEnd::End));
        mid_vertices.push(Vertex {
            coupling: delta_coupling(2, line.center_strength),
            slots: vec![
                Slot::interior(half1, EdgeEnd::End),
                Slot::interior(half2, EdgeEnd::Begin),
            ],
        });
    }
    let mut vertices: Vec<Vertex> = cell
        .vertices
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != vertex_idx)
        .map(|(_, v)| v.clone())
        .collect();
    for (j, slots) in node_slots.into_iter().enumerate() {
        vertices.push(Vertex {
            coupling: delta_coupling(slots.len(), graph.node_strengths[j]),
            slots,
        });
    }
    vertices.extend(mid_vertices);
    let out = UnitCell {
        edges,
        vertices,
        periods: cell.periods.clone(),
    };
    out.validate()?;
    Ok(out)
}

/// One band edge comparison of the convergence study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub d0: f64,
    /// 1-based band index.
    pub band: usize,
    pub edge_lo_err: f64,
    pub edge_hi_err: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// Band edges of the singular reference model.
    pub singular_bands: Vec<(f64, f64)>,
    pub rows: Vec<ConvergenceRow>,
    /// Worst band-edge error per `d0`, in the order supplied.
    pub max_errors: Vec<(f64, f64)>,
    /// Errors strictly decrease along the supplied `d0` list.
    pub monotone: bool,
    /// Successive error ratios (empirical convergence order data).
    pub error_ratios: Vec<f64>,
    pub warnings: Vec<String>,
    /// A signed-modulus branch changed sign between two `d0` values.
    pub bracket_sign_flip: bool,
}

/// Compare the band edges of the chain model against its delta-realized
/// counterpart for each `d0`, over the first `n_bands` bands.
pub fn convergence_study(
    chain: &ChainParams,
    d0_list: &[f64],
    n_bands: usize,
) -> Result<ConvergenceReport> {
    if d0_list.is_empty() {
        return Err(Error::Domain("need at least one d0".into()));
    }
    let k_min = 0.05;
    // extend the window until the reference model shows enough bands
    let mut k_max = 6.0;
    let mut singular = chain.union_bands(k_min, k_max, 2400)?;
    while singular.len() < n_bands && k_max < 60.0 {
        k_max *= 1.5;
        singular = chain.union_bands(k_min, k_max, (400.0 * k_max) as usize)?;
    }
    if singular.len() < n_bands {
        return Err(Error::Domain(format!(
            "only {} bands below k = {k_max}, need {n_bands}",
            singular.len()
        )));
    }
    singular.truncate(n_bands);

    let mut warnings = Vec::new();
    let st = chain_family(&chain.family);
    let base_cell = chain.unit_cell();
    let mut rows = Vec::new();
    let mut max_errors = Vec::new();
    let mut signs: Option<Vec<i8>> = None;
    let mut bracket_sign_flip = false;
    for &d0 in d0_list {
        if d0 * k_max > 0.1 {
            warnings.push(format!(
                "d0 = {d0} is not small against 1/k_max = {:.3}; the scaling regime may not apply",
                1.0 / k_max
            ));
        }
        let graph = build_from_st(&st, d0)?;
        let line_signs: Vec<i8> = graph.lines.iter().map(|l| l.bracket_sign).collect();
        if let Some(prev) = &signs {
            if *prev != line_signs {
                bracket_sign_flip = true;
            }
        }
        signs = Some(line_signs);
        let cell = substitute_vertex(&base_cell, 0, &graph)?;
        let in_band = |k: f64| {
            matches!(
                bloch::bloch_phases(&cell, k, 0, &[C64::new(1.0, 0.0)]),
                Ok(roots) if !roots.is_empty()
            )
        };
        let n_grid = (600.0 * k_max) as usize;
        let approx_bands = bloch::band_intervals(in_band, k_min, k_max, n_grid, 1e-9);
        let edges: Vec<f64> = approx_bands
            .iter()
            .flat_map(|&(lo, hi)| [lo, hi])
            .collect();
        if edges.is_empty() {
            return Err(Error::NoState(format!(
                "realized graph at d0 = {d0} shows no bands below k = {k_max}"
            )));
        }
        let nearest = |x: f64| {
            edges
                .iter()
                .map(|e| (e - x).abs())
                .fold(f64::INFINITY, f64::min)
        };
        let mut worst: f64 = 0.0;
        for (bi, &(lo, hi)) in singular.iter().enumerate() {
            let row = ConvergenceRow {
                d0,
                band: bi + 1,
                edge_lo_err: nearest(lo),
                edge_hi_err: nearest(hi),
            };
            worst = worst.max(row.edge_lo_err).max(row.edge_hi_err);
            rows.push(row);
        }
        max_errors.push((d0, worst));
    }
    let monotone = max_errors.windows(2).all(|w| w[1].1 < w[0].1);
    let error_ratios = max_errors
        .windows(2)
        .map(|w| w[1].1 / w[0].1)
        .collect();
    Ok(ConvergenceReport {
        singular_bands: singular,
        rows,
        max_errors,
        monotone,
        error_ratios,
        warnings,
        bracket_sign_flip,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vertex::CouplingFamilyParams;
    use nalgebra::DMatrix;

    fn chain_star(a: f64, c: f64) -> STForm {
        chain_family(&CouplingFamilyParams { a, b: a, c, d: 1.0 })
    }

    #[test]
    fn chain_star_connectivity_and_strengths() {
        let (a, c, d0) = (1.0 / 3.0, 8.0, 0.01);
        let g = build_from_st(&chain_star(a, c), d0).unwrap();
        assert_eq!(g.n_nodes(), 4);
        // five lines: (0,1) within the derivative block plus the four bridges
        assert_eq!(g.lines.len(), 5);
        assert!(g.line_between(2, 3).is_none(), "value-block pair stays dashed");
        assert_eq!(g.degrees(), vec![3, 3, 2, 2]);

        // node strengths: derivative-block nodes (2a - 3)/d0, value-block
        // nodes (2a - 1)/d0
        let v_head = (2.0 * a - 3.0) / d0;
        let v_tail = (2.0 * a - 1.0) / d0;
        assert!((g.node_strengths[0] - v_head).abs() < 1e-9 * v_head.abs());
        assert!((g.node_strengths[1] - v_head).abs() < 1e-9 * v_head.abs());
        assert!((g.node_strengths[2] - v_tail).abs() < 1e-9 * v_tail.abs());
        assert!((g.node_strengths[3] - v_tail).abs() < 1e-9 * v_tail.abs());

        // line centers: bridges (1/a - 2)/d0, head pair -(2 + 1/(d0 c + 2a^2))/d0
        let w_bridge = (-2.0 + 1.0 / a) / d0;
        for (i, j) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            let l = g.line_between(i, j).unwrap();
            assert!((l.center_strength - w_bridge).abs() < 1e-9 * w_bridge.abs());
            assert_eq!(l.vector_potential, 0.0);
        }
        let w_head = -(2.0 + 1.0 / (d0 * c + 2.0 * a * a)) / d0;
        let l = g.line_between(0, 1).unwrap();
        assert!((l.center_strength - w_head).abs() < 1e-9 * w_head.abs());
        assert_eq!(l.vector_potential, 0.0);
    }

    #[test]
    fn dirichlet_type_m_zero_has_no_lines() {
        let st = STForm::new(3, DMatrix::zeros(0, 0), DMatrix::zeros(0, 3)).unwrap();
        let g = build_from_st(&st, 0.01).unwrap();
        assert!(g.lines.is_empty());
        for v in &g.node_strengths {
            assert!((v - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn complex_entry_with_negative_real_part_gets_vector_potential() {
        // T entry -1 + i: arg in the second quadrant, shifted branch
        let t = C64::new(-1.0, 1.0);
        let st = STForm::new(
            2,
            DMatrix::from_row_slice(1, 1, &[C64::new(0.5, 0.0)]),
            DMatrix::from_row_slice(1, 1, &[t]),
        )
        .unwrap();
        let d0 = 0.02;
        let g = build_from_st(&st, d0).unwrap();
        let line = g.line_between(0, 1).unwrap();
        let expect = (t.arg() - std::f64::consts::PI) / (2.0 * d0);
        assert!((line.vector_potential - expect).abs() < 1e-12);
        assert!(line.vector_potential != 0.0);
        assert_eq!(line.bracket_sign, -1);
        // negative real entries stay potential-free: arg(-x) - pi = 0
        let st2 = STForm::new(
            2,
            DMatrix::from_row_slice(1, 1, &[C64::new(0.5, 0.0)]),
            DMatrix::from_row_slice(1, 1, &[C64::new(-0.7, 0.0)]),
        )
        .unwrap();
        let g2 = build_from_st(&st2, d0).unwrap();
        assert_eq!(g2.line_between(0, 1).unwrap().vector_potential, 0.0);
    }

    #[test]
    fn ladder_vertex_realization_structure() {
        let (a, c, d0) = (1.0 / 3.0, 8.0, 0.01);
        let (top, bottom) = ladder_vertex_approx(a, c, d0).unwrap();
        // top: three nodes, lines (0,1), (0,2), (1,2)
        assert_eq!(top.n_nodes(), 3);
        assert_eq!(top.lines.len(), 3);
        let v_head = (a - 2.0) / d0;
        assert!((top.node_strengths[0] - v_head).abs() < 1e-9 * v_head.abs());
        assert!((top.node_strengths[1] - v_head).abs() < 1e-9 * v_head.abs());
        let v_rung = (2.0 * a - 1.0) / d0;
        assert!((top.node_strengths[2] - v_rung).abs() < 1e-9 * v_rung.abs());
        let w_head = -(2.0 + 1.0 / (d0 * c + a * a)) / d0;
        assert!(
            (top.line_between(0, 1).unwrap().center_strength - w_head).abs()
                < 1e-9 * w_head.abs()
        );
        let w_bridge = (-2.0 + 1.0 / a) / d0;
        for (i, j) in [(0, 2), (1, 2)] {
            assert!(
                (top.line_between(i, j).unwrap().center_strength - w_bridge).abs()
                    < 1e-9 * w_bridge.abs()
            );
        }
        // bottom: plain three-way delta split; center strengths always -1/d0
        assert_eq!(bottom.lines.len(), 2);
        assert!(bottom.line_between(1, 2).is_none(), "dashed pair absent");
        for (i, j) in [(0, 1), (0, 2)] {
            let w = bottom.line_between(i, j).unwrap().center_strength;
            assert!((w - (-1.0 / d0)).abs() < 1e-12 / d0);
            assert!(w < 0.0);
        }
        assert!((bottom.node_strengths[0] - 2.0 / d0).abs() < 1e-9 / d0);
        for k in [1, 2] {
            assert!((bottom.node_strengths[k] - 1.0 / d0).abs() < 1e-9 / d0);
        }
        assert!(ladder_vertex_approx(0.0, 1.0, d0).is_err());
        assert!(ladder_vertex_approx(0.5, 0.0, d0).is_err());
    }

    #[test]
    fn substituted_cell_validates_and_every_vertex_is_admissible() {
        let chain = ChainParams {
            family: CouplingFamilyParams {
                a: 1.0 / 3.0,
                b: 1.0 / 3.0,
                c: 8.0,
                d: 1.0,
            },
            length: 1.0,
        };
        let g = build_from_st(&chain_star(1.0 / 3.0, 8.0), 0.01).unwrap();
        let cell = substitute_vertex(&chain.unit_cell(), 0, &g).unwrap();
        assert_eq!(cell.edges.len(), 2 + 2 * 5);
        assert_eq!(cell.vertices.len(), 4 + 5);
        for v in &cell.vertices {
            assert!(crate::vertex::validate(&v.coupling).unwrap().ok);
        }
    }

    #[test]
    fn gauge_shift_by_full_turn_leaves_bands_unchanged() {
        let chain = ChainParams {
            family: CouplingFamilyParams {
                a: 1.0 / 3.0,
                b: 1.0 / 3.0,
                c: 8.0,
                d: 1.0,
            },
            length: 1.0,
        };
        let d0 = 0.05;
        let g = build_from_st(&chain_star(1.0 / 3.0, 8.0), d0).unwrap();
        let plain = substitute_vertex(&chain.unit_cell(), 0, &g).unwrap();
        let mut shifted = g.clone();
        // equal-and-opposite potentials with a 2 pi total half-line phase
        shifted.lines[0].vector_potential += 2.0 * std::f64::consts::PI / d0;
        let gauged = substitute_vertex(&chain.unit_cell(), 0, &shifted).unwrap();
        for k in [0.8, 1.9, 2.9, 4.1] {
            let a = bloch::bloch_phases(&plain, k, 0, &[C64::new(1.0, 0.0)]).unwrap();
            let b = bloch::bloch_phases(&gauged, k, 0, &[C64::new(1.0, 0.0)]).unwrap();
            assert_eq!(a.len(), b.len(), "k = {k}");
            for (za, zb) in a.iter().zip(&b) {
                assert!((za - zb).norm() < 1e-7);
            }
        }
    }

    #[test]
    fn singular_model_against_itself_has_zero_error() {
        let chain = ChainParams {
            family: CouplingFamilyParams {
                a: 1.0 / 3.0,
                b: 1.0 / 3.0,
                c: 8.0,
                d: 1.0,
            },
            length: 1.0,
        };
        let a = chain.union_bands(0.05, 7.0, 1400).unwrap();
        let b = chain.union_bands(0.05, 7.0, 1400).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, y);
        }
    }
}
