//! Complex polynomials reconstructed from determinant samples on a circle,
//! plus companion-matrix root extraction with Newton polishing.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::C64;

/// Sampling radius for circle interpolation; slightly off the unit circle so
/// the samples never coincide with the roots we are after.
pub const SAMPLE_RADIUS: f64 = 1.125;

/// Relative threshold below which reconstructed coefficients are treated as
/// exact zeros (degree-bound slack and round-off).
pub const COEFF_TRIM_TOL: f64 = 1e-10;

/// Dense polynomial with ascending complex coefficients.
#[derive(Debug, Clone)]
pub struct Polynomial {
    coeffs: Vec<C64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Polynomial { coeffs }
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, z: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }

    pub fn eval_derivative(&self, z: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (m, &c) in self.coeffs.iter().enumerate().skip(1).rev() {
            acc = acc * z + c * C64::new(m as f64, 0.0);
        }
        acc
    }

    pub fn max_coeff_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Exact reconstruction of a degree `<= degree` polynomial from
    /// `degree + 1` samples on a circle of radius [`SAMPLE_RADIUS`].
    ///
    /// `f` must be a polynomial of the promised degree for the result to be
    /// exact; the forward DFT then recovers `c_m r^m`.
    pub fn from_circle_samples(mut f: impl FnMut(C64) -> C64, degree: usize) -> Self {
        let n = degree + 1;
        let r = SAMPLE_RADIUS;
        let samples: Vec<C64> = (0..n)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                f(C64::from_polar(r, th))
            })
            .collect();
        let mut coeffs = Vec::with_capacity(n);
        for m in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for (j, &s) in samples.iter().enumerate() {
                let th = -2.0 * std::f64::consts::PI * (j * m % n) as f64 / n as f64;
                acc += s * C64::from_polar(1.0, th);
            }
            coeffs.push(acc / C64::new(n as f64 * r.powi(m as i32), 0.0));
        }
        Polynomial { coeffs }
    }

    /// Drop leading and trailing coefficients below `COEFF_TRIM_TOL` relative
    /// to the largest one. Returns the trimmed polynomial together with the
    /// number of dropped trailing (low-order) terms, i.e. the multiplicity of
    /// the removed root at z = 0.
    pub fn trimmed(&self) -> (Polynomial, usize) {
        let scale = self.max_coeff_norm();
        if scale == 0.0 {
            return (Polynomial::new(vec![]), 0);
        }
        let tol = COEFF_TRIM_TOL * scale;
        let keep: Vec<bool> = self.coeffs.iter().map(|c| c.norm() > tol).collect();
        let lo = keep.iter().position(|&b| b).unwrap_or(0);
        let hi = keep.iter().rposition(|&b| b).unwrap_or(0);
        (Polynomial::new(self.coeffs[lo..=hi].to_vec()), lo)
    }

    /// All roots via complex companion-matrix eigenvalues, Newton-polished.
    /// The polynomial must be trimmed (nonzero leading coefficient).
    pub fn roots(&self) -> Result<Vec<C64>> {
        if self.coeffs.len() <= 1 {
            return if self.coeffs.iter().all(|c| c.norm() == 0.0) {
                Err(Error::FlatBand)
            } else {
                Ok(vec![])
            };
        }
        let n = self.coeffs.len() - 1;
        let lead = self.coeffs[n];
        if lead.norm() == 0.0 {
            return Err(Error::Domain(
                "polynomial must be trimmed before root extraction".into(),
            ));
        }
        let mut comp = DMatrix::<C64>::zeros(n, n);
        for i in 1..n {
            comp[(i, i - 1)] = C64::new(1.0, 0.0);
        }
        for i in 0..n {
            comp[(i, n - 1)] = -self.coeffs[i] / lead;
        }
        let raw = companion_eigenvalues(&comp).unwrap_or_else(|| self.durand_kerner());
        Ok(raw.into_iter().map(|z| self.polish(z)).collect())
    }

    fn polish(&self, mut z: C64) -> C64 {
        for _ in 0..8 {
            let p = self.eval(z);
            let dp = self.eval_derivative(z);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            z -= step;
            if step.norm() < 1e-15 * (1.0 + z.norm()) {
                break;
            }
        }
        z
    }

    /// Backup root finder in case the eigenvalue iteration fails to converge.
    fn durand_kerner(&self) -> Vec<C64> {
        let n = self.coeffs.len() - 1;
        let lead = self.coeffs[n];
        let monic: Vec<C64> = self.coeffs.iter().map(|c| c / lead).collect();
        let eval = |z: C64| {
            let mut acc = C64::new(0.0, 0.0);
            for &c in monic.iter().rev() {
                acc = acc * z + c;
            }
            acc
        };
        let mut zs: Vec<C64> = (0..n)
            .map(|i| C64::from_polar(1.3, 2.0 * std::f64::consts::PI * i as f64 / n as f64 + 0.7))
            .collect();
        for _ in 0..200 {
            let mut max_step = 0.0f64;
            for i in 0..n {
                let mut denom = C64::new(1.0, 0.0);
                for j in 0..n {
                    if j != i {
                        denom *= zs[i] - zs[j];
                    }
                }
                if denom.norm() == 0.0 {
                    continue;
                }
                let step = eval(zs[i]) / denom;
                zs[i] -= step;
                max_step = max_step.max(step.norm());
            }
            if max_step < 1e-14 {
                break;
            }
        }
        zs
    }
}

fn companion_eigenvalues(comp: &DMatrix<C64>) -> Option<Vec<C64>> {
    comp.clone()
        .try_schur(1e-14, 2000)
        .and_then(|s| s.eigenvalues())
        .map(|ev| ev.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn circle_samples_recover_known_coefficients() {
        let coeffs = [c(2.0, -1.0), c(0.0, 0.0), c(-3.0, 0.5), c(1.0, 1.0)];
        let p = Polynomial::from_circle_samples(
            |z| coeffs[0] + coeffs[2] * z * z + coeffs[3] * z * z * z,
            3,
        );
        for (a, b) in p.coeffs().iter().zip(coeffs.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn roots_of_quartic_with_known_factors() {
        // (z - 2)(z - i)(z + 0.5)(z - (1+i))
        let rts = [c(2.0, 0.0), c(0.0, 1.0), c(-0.5, 0.0), c(1.0, 1.0)];
        let mut coeffs = vec![c(1.0, 0.0)];
        for r in rts {
            let mut next = vec![c(0.0, 0.0); coeffs.len() + 1];
            for (i, &co) in coeffs.iter().enumerate() {
                next[i + 1] += co;
                next[i] -= co * r;
            }
            coeffs = next;
        }
        let p = Polynomial::new(coeffs);
        let mut found = p.roots().unwrap();
        assert_eq!(found.len(), 4);
        for r in rts {
            let i = found
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - r).norm().total_cmp(&(b.1 - r).norm()))
                .unwrap()
                .0;
            assert!((found[i] - r).norm() < 1e-10);
            found.remove(i);
        }
    }

    #[test]
    fn trim_reports_low_order_zero_factor() {
        let p = Polynomial::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        let (t, drop) = p.trimmed();
        assert_eq!(drop, 2);
        assert_eq!(t.degree(), 1);
    }

    #[test]
    fn all_zero_polynomial_reports_flat_band() {
        let p = Polynomial::new(vec![]);
        assert!(matches!(p.roots(), Err(Error::FlatBand)));
    }
}
