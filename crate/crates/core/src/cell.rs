//! Periodic unit cells: edges with plane-wave ansatz, vertices gluing edge
//! ends through couplings, and Bloch shifts encoding quasi-periodicity.
//!
//! Each edge end attaches to exactly one vertex slot. A slot whose `shifts`
//! are all zero is an interior attachment; a nonzero shift in direction `d`
//! means the trace is taken from the translated copy of the edge, picking up
//! the factor `z_d^{shift}` with `z_d = exp(i q_d P_d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vertex::{CouplingSpec, VertexCoupling};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub length: f64,
    /// Constant vector potential along the edge; the ansatz gains a factor
    /// `exp(i A x)` and derivative traces use the covariant derivative.
    #[serde(default)]
    pub vector_potential: f64,
}

impl Edge {
    pub fn plain(length: f64) -> Self {
        Edge {
            length,
            vector_potential: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeEnd {
    Begin,
    End,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub edge: usize,
    pub end: EdgeEnd,
    /// Bloch shift per direction; shorter vectors are implicitly
    /// zero-padded to the number of directions.
    #[serde(default)]
    pub shifts: Vec<i32>,
}

impl Slot {
    pub fn interior(edge: usize, end: EdgeEnd) -> Self {
        Slot {
            edge,
            end,
            shifts: vec![],
        }
    }

    pub fn shifted(edge: usize, end: EdgeEnd, shifts: Vec<i32>) -> Self {
        Slot { edge, end, shifts }
    }

    pub fn shift(&self, direction: usize) -> i32 {
        self.shifts.get(direction).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct Vertex {
    pub coupling: VertexCoupling,
    pub slots: Vec<Slot>,
}

/// One periodic unit cell.
#[derive(Debug, Clone)]
pub struct UnitCell {
    pub edges: Vec<Edge>,
    pub vertices: Vec<Vertex>,
    /// Lattice period per Bloch direction.
    pub periods: Vec<f64>,
}

impl UnitCell {
    pub fn n_coefficients(&self) -> usize {
        2 * self.edges.len()
    }

    pub fn n_conditions(&self) -> usize {
        self.vertices.iter().map(|v| v.slots.len()).sum()
    }

    pub fn n_directions(&self) -> usize {
        self.periods.len()
    }

    /// Check the structural invariants: positive lengths and periods, every
    /// edge end used exactly once, coupling sizes matching slot counts, and
    /// shift vectors no longer than the direction count.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.edges.iter().enumerate() {
            if !(e.length > 0.0) || !e.length.is_finite() {
                return Err(Error::InvalidCell(format!(
                    "edge {i} has non-positive length {}",
                    e.length
                )));
            }
        }
        for (d, p) in self.periods.iter().enumerate() {
            if !(p > &0.0) || !p.is_finite() {
                return Err(Error::InvalidCell(format!(
                    "direction {d} has non-positive period {p}"
                )));
            }
        }
        let mut seen = vec![[false, false]; self.edges.len()];
        for (vi, v) in self.vertices.iter().enumerate() {
            if v.coupling.n() != v.slots.len() {
                return Err(Error::InvalidCell(format!(
                    "vertex {vi}: coupling acts on {} ends but has {} slots",
                    v.coupling.n(),
                    v.slots.len()
                )));
            }
            for s in &v.slots {
                if s.edge >= self.edges.len() {
                    return Err(Error::InvalidCell(format!(
                        "vertex {vi} references missing edge {}",
                        s.edge
                    )));
                }
                if s.shifts.len() > self.periods.len() {
                    return Err(Error::InvalidCell(format!(
                        "vertex {vi}: slot on edge {} has {} shifts but only {} directions exist",
                        s.edge,
                        s.shifts.len(),
                        self.periods.len()
                    )));
                }
                let which = match s.end {
                    EdgeEnd::Begin => 0,
                    EdgeEnd::End => 1,
                };
                if seen[s.edge][which] {
                    return Err(Error::InvalidCell(format!(
                        "edge {} {:?} attached twice",
                        s.edge, s.end
                    )));
                }
                seen[s.edge][which] = true;
            }
        }
        for (i, ends) in seen.iter().enumerate() {
            if !ends[0] || !ends[1] {
                return Err(Error::InvalidCell(format!(
                    "edge {i} has a dangling end"
                )));
            }
        }
        if self.n_conditions() != self.n_coefficients() {
            return Err(Error::InvalidCell(format!(
                "{} boundary conditions for {} coefficients",
                self.n_conditions(),
                self.n_coefficients()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let vertices: Vec<serde_json::Value> = self
            .vertices
            .iter()
            .map(|v| {
                serde_json::json!({
                    "coupling": CouplingSpec::Ab(v.coupling.clone()).to_json(),
                    "slots": v.slots,
                })
            })
            .collect();
        serde_json::json!({
            "edges": self.edges,
            "periods": self.periods,
            "vertices": vertices,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let edges: Vec<Edge> = serde_json::from_value(
            v.get("edges")
                .ok_or_else(|| Error::Config("cell json missing 'edges'".into()))?
                .clone(),
        )?;
        let periods: Vec<f64> = serde_json::from_value(
            v.get("periods")
                .ok_or_else(|| Error::Config("cell json missing 'periods'".into()))?
                .clone(),
        )?;
        let raw_vertices = v
            .get("vertices")
            .and_then(|x| x.as_array())
            .ok_or_else(|| Error::Config("cell json missing 'vertices'".into()))?;
        let mut vertices = Vec::with_capacity(raw_vertices.len());
        for rv in raw_vertices {
            let coupling = CouplingSpec::from_json(
                rv.get("coupling")
                    .ok_or_else(|| Error::Config("vertex json missing 'coupling'".into()))?,
            )?
            .to_coupling();
            let slots: Vec<Slot> = serde_json::from_value(
                rv.get("slots")
                    .ok_or_else(|| Error::Config("vertex json missing 'slots'".into()))?
                    .clone(),
            )?;
            vertices.push(Vertex { coupling, slots });
        }
        let cell = UnitCell {
            edges,
            vertices,
            periods,
        };
        cell.validate()?;
        Ok(cell)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vertex::delta_coupling;

    /// Single loop of length L through a two-end vertex.
    pub fn free_loop(length: f64, v: f64) -> UnitCell {
        UnitCell {
            edges: vec![Edge::plain(length)],
            vertices: vec![Vertex {
                coupling: delta_coupling(2, v),
                slots: vec![
                    Slot::shifted(0, EdgeEnd::End, vec![-1]),
                    Slot::interior(0, EdgeEnd::Begin),
                ],
            }],
            periods: vec![length],
        }
    }

    #[test]
    fn loop_cell_validates() {
        assert!(free_loop(1.0, 0.0).validate().is_ok());
    }

    #[test]
    fn dangling_end_is_rejected() {
        let mut cell = free_loop(1.0, 0.0);
        cell.vertices[0].slots[0] = Slot::interior(0, EdgeEnd::Begin);
        assert!(cell.validate().is_err());
    }

    #[test]
    fn slot_count_mismatch_is_rejected() {
        let mut cell = free_loop(1.0, 0.0);
        cell.vertices[0].coupling = delta_coupling(3, 0.0);
        assert!(cell.validate().is_err());
    }

    #[test]
    fn json_round_trip_preserves_structure() {
        let cell = free_loop(2.5, 1.5);
        let json = cell.to_json();
        let back = UnitCell::from_json(&json).unwrap();
        assert_eq!(back.edges, cell.edges);
        assert_eq!(back.periods, cell.periods);
        assert_eq!(back.vertices[0].slots, cell.vertices[0].slots);
        assert_eq!(
            back.vertices[0].coupling.a,
            cell.vertices[0].coupling.a
        );
    }
}
