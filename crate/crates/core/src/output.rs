//! Deterministic CSV output: fixed 12-significant-digit formatting, infinity
//! sentinels, and atomic file writes (temp file + rename).

use std::fs;
use std::path::Path;

use crate::bloch::BandScan;
use crate::error::Result;

/// Format with 12 significant digits; `inf`/`-inf`/`nan` sentinels keep
/// one-sided ratios representable.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.11e}")
    }
}

/// Write atomically: the target never holds a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    fs::write(&tmp_path, contents)?;
    fs::rename(&tmp_path, path)?;
    Ok(())
}

/// Strand-model scan: `k,E,branch,cosqL,q,J1,J2,log10_ratio,rel_sign`.
pub fn strand_scan_csv(scan: &BandScan) -> String {
    let mut out = String::from("k,E,branch,cosqL,q,J1,J2,log10_ratio,rel_sign\n");
    for r in &scan.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.k),
            fmt_f64(r.energy),
            r.branch,
            fmt_f64(r.cos_ql),
            fmt_f64(r.q[0]),
            fmt_f64(r.fluxes[0]),
            fmt_f64(r.fluxes[1]),
            fmt_f64(r.log_ratio),
            r.rel_sign,
        ));
    }
    out
}

/// Generic scan: `k,E,q_0..,branch,J_1..,log_ratio,rel_sign`.
pub fn generic_scan_csv(scan: &BandScan, n_dirs: usize, n_edges: usize) -> String {
    let mut out = String::from("k,E");
    for d in 0..n_dirs {
        out.push_str(&format!(",q_{d}"));
    }
    out.push_str(",branch");
    for e in 0..n_edges {
        out.push_str(&format!(",J_{}", e + 1));
    }
    out.push_str(",log_ratio,rel_sign\n");
    for r in &scan.rows {
        out.push_str(&fmt_f64(r.k));
        out.push(',');
        out.push_str(&fmt_f64(r.energy));
        for d in 0..n_dirs {
            out.push(',');
            out.push_str(&fmt_f64(r.q.get(d).copied().unwrap_or(f64::NAN)));
        }
        out.push(',');
        out.push_str(&r.branch);
        for e in 0..n_edges {
            out.push(',');
            out.push_str(&fmt_f64(r.fluxes.get(e).copied().unwrap_or(f64::NAN)));
        }
        out.push(',');
        out.push_str(&fmt_f64(r.log_ratio));
        out.push(',');
        out.push_str(&r.rel_sign.to_string());
        out.push('\n');
    }
    out
}

/// Band table: `branch,k_lo,k_hi,E_lo,E_hi`.
pub fn band_table_csv(table: &[crate::chain::BandInterval]) -> String {
    let mut out = String::from("branch,k_lo,k_hi,E_lo,E_hi\n");
    for b in table {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            b.branch.label(),
            fmt_f64(b.k_lo),
            fmt_f64(b.k_hi),
            fmt_f64(b.k_lo * b.k_lo),
            fmt_f64(b.k_hi * b.k_hi),
        ));
    }
    out
}

/// Gap table: `k_lo,k_hi`.
pub fn gap_table_csv(gaps: &[(f64, f64)]) -> String {
    let mut out = String::from("k_lo,k_hi\n");
    for (lo, hi) in gaps {
        out.push_str(&format!("{},{}\n", fmt_f64(*lo), fmt_f64(*hi)));
    }
    out
}

/// Current map: `k,qx,qy,J1x,J2x,J1y,J2y`.
pub fn current_map_csv(rows: &[(f64, f64, f64, crate::lattice2d::Currents2D)]) -> String {
    let mut out = String::from("k,qx,qy,J1x,J2x,J1y,J2y\n");
    for (k, qx, qy, c) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(*k),
            fmt_f64(*qx),
            fmt_f64(*qy),
            fmt_f64(c.j1x),
            fmt_f64(c.j2x),
            fmt_f64(c.j1y),
            fmt_f64(c.j2y),
        ));
    }
    out
}

/// Convergence report: `d0,band,edge_lo_err,edge_hi_err`.
pub fn convergence_csv(report: &crate::approx::ConvergenceReport) -> String {
    let mut out = String::from("d0,band,edge_lo_err,edge_hi_err\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(r.d0),
            r.band,
            fmt_f64(r.edge_lo_err),
            fmt_f64(r.edge_hi_err),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_is_fixed_width_significand() {
        assert_eq!(fmt_f64(1.0), "1.00000000000e0");
        assert_eq!(fmt_f64(-0.5), "-5.00000000000e-1");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(f64::NAN), "nan");
    }

    #[test]
    fn atomic_write_round_trips() {
        let dir = std::env::temp_dir().join("qgraph_output_test");
        let path = dir.join("x.csv");
        write_atomic(&path, "a,b\n1,2\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,2\n");
        std::fs::remove_dir_all(&dir).ok();
    }
}
