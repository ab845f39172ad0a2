use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Exponent `p` together with the A_p-dimensions `(d, d̃)` of a weight.
///
/// `Δ` is always recomputed from the other fields. For `p <= 1` the dual dimension is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightProfile {
    pub p: f64,
    pub d: f64,
    pub d_tilde: f64,
    pub n: usize,
    pub ap_constant: Option<f64>,
}

impl WeightProfile {
    pub fn new(p: f64, d: f64, d_tilde: f64, n: usize) -> Result<Self> {
        if !(p > 0.0 && p.is_finite()) {
            return Err(invalid(format!("p must be in (0, inf), got {p}")));
        }
        let nf = n as f64;
        if n == 0 {
            return Err(invalid("dimension n must be positive"));
        }
        if !(0.0..nf).contains(&d) {
            return Err(invalid(format!("d must lie in [0, n), got {d}")));
        }
        if !(0.0..nf).contains(&d_tilde) {
            return Err(invalid(format!("d_tilde must lie in [0, n), got {d_tilde}")));
        }
        let d_tilde = if p <= 1.0 { 0.0 } else { d_tilde };
        Ok(WeightProfile { p, d, d_tilde, n, ap_constant: None })
    }

    /// `p' = p/(p-1)` for `p > 1`, `inf` otherwise.
    pub fn p_prime(&self) -> f64 {
        conjugate_exponent(self.p)
    }

    /// `d̃/p'`, zero when `p <= 1`.
    pub fn dual_term(&self) -> f64 {
        if self.p <= 1.0 {
            0.0
        } else {
            self.d_tilde / self.p_prime()
        }
    }

    /// `Δ = d/p + d̃/p'`.
    pub fn delta(&self) -> f64 {
        self.d / self.p + self.dual_term()
    }
}

pub fn conjugate_exponent(p: f64) -> f64 {
    if p <= 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_dimension_is_dropped_for_small_p() {
        let w = WeightProfile::new(0.5, 0.5, 0.3, 1).unwrap();
        assert_eq!(w.d_tilde, 0.0);
        assert_eq!(w.delta(), 1.0);
    }

    #[test]
    fn delta_for_p_two() {
        let w = WeightProfile::new(2.0, 0.5, 0.3, 1).unwrap();
        assert!((w.delta() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ranges_are_checked() {
        assert!(WeightProfile::new(0.0, 0.0, 0.0, 1).is_err());
        assert!(WeightProfile::new(2.0, 1.0, 0.0, 1).is_err());
        assert!(WeightProfile::new(2.0, 0.0, -0.1, 1).is_err());
    }
}
