//! Target distance functions and closed-form reference values for the two
//! representation metrics.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TargetKind {
    /// Derived from the hexagonal tessellation: every one of the six nearest
    /// active neighbors at `sqrt(7 / (pi z))`.
    Hexagonal,
    /// Mean k-th nearest-neighbor distance of a planar Poisson process.
    Poisson,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Hexagonal => "H",
            TargetKind::Poisson => "P",
        }
    }
}

/// Maps `k >= 1` to the desired distance between an active node and its
/// k-th nearest active neighbor at density `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetDistanceFunction {
    kind: TargetKind,
    z: f64,
}

/// Largest `k` the hexagonal target is defined for.
pub const HEX_MAX_K: usize = 6;

impl TargetDistanceFunction {
    pub fn new(kind: TargetKind, z: f64) -> Result<Self> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::InvalidParameter(format!("density must be positive, got {z}")));
        }
        Ok(Self { kind, z })
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn density(&self) -> f64 {
        self.z
    }

    pub fn target_distance(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidParameter("k must be at least 1".into()));
        }
        match self.kind {
            TargetKind::Hexagonal => {
                if k > HEX_MAX_K {
                    return Err(Error::UnsupportedK { kind: self.kind.name(), k });
                }
                Ok((7.0 / (PI * self.z)).sqrt())
            }
            TargetKind::Poisson => Ok(gamma_half_ratio(k) / (PI * self.z).sqrt()),
        }
    }
}

/// `Gamma(k + 1/2) / Gamma(k)` by the recurrence
/// `ratio(k + 1) = ratio(k) * (k + 1/2) / k`, starting from `sqrt(pi) / 2`.
fn gamma_half_ratio(k: usize) -> f64 {
    let mut ratio = PI.sqrt() / 2.0;
    for j in 1..k {
        ratio *= (j as f64 + 0.5) / j as f64;
    }
    ratio
}

/// Closed-form values of D and U for the ideal disc cover, the hexagonal
/// tessellation, and a Poisson active set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticBounds {
    pub lb_d: f64,
    pub lb_u: f64,
    pub hex_lb_d: f64,
    /// Only an upper bound is known in closed form.
    pub hex_lb_u_upper: f64,
    pub poisson_d: f64,
    pub poisson_u: f64,
}

impl AnalyticBounds {
    pub fn named(&self) -> [(&'static str, f64); 6] {
        [
            ("lb_D", self.lb_d),
            ("lb_U", self.lb_u),
            ("hex_lb_D", self.hex_lb_d),
            ("hex_lb_U_upper", self.hex_lb_u_upper),
            ("poisson_D", self.poisson_d),
            ("poisson_U", self.poisson_u),
        ]
    }
}

pub fn analytic_bounds() -> AnalyticBounds {
    let sqrt3 = 3f64.sqrt();
    AnalyticBounds {
        lb_d: 2.0 / (3.0 * PI.sqrt()),
        // (4r/15) / (2 * 2r/3)
        lb_u: (4.0 / 15.0) / (2.0 * 2.0 / 3.0),
        hex_lb_d: (1.0 / 9.0 + 3f64.ln() / 12.0) * (2.0 * sqrt3).sqrt(),
        hex_lb_u_upper: 0.2038,
        poisson_d: 0.5,
        poisson_u: 1.0 - 1.0 / 2f64.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Trapezoid-rule mean of the k-th nearest-neighbor distance density
    /// `2 (pi z)^k r^(2k-1) exp(-pi z r^2) / (k-1)!`.
    fn kth_nn_mean_quadrature(k: usize, z: f64) -> f64 {
        let fact: f64 = (1..k).map(|j| j as f64).product();
        let upper = 12.0 / (PI * z).sqrt();
        let steps = 200_000;
        let h = upper / steps as f64;
        let f = |r: f64| {
            r * 2.0 * (PI * z).powi(k as i32) * r.powi(2 * k as i32 - 1) * (-PI * z * r * r).exp() / fact
        };
        let mut sum = 0.5 * (f(0.0) + f(upper));
        for i in 1..steps {
            sum += f(i as f64 * h);
        }
        sum * h
    }

    #[test]
    fn hexagonal_target_is_constant() {
        let f = TargetDistanceFunction::new(TargetKind::Hexagonal, 350.0).unwrap();
        let expected = (7.0 / (350.0 * PI)).sqrt();
        assert!((expected - 0.079788).abs() < 1e-6);
        for k in 1..=6 {
            assert_eq!(f.target_distance(k).unwrap(), expected);
        }
        assert!(matches!(f.target_distance(7), Err(Error::UnsupportedK { k: 7, .. })));
        assert!(f.target_distance(0).is_err());
    }

    #[test]
    fn poisson_target_values() {
        for z in [1.0, 350.0, 0.02] {
            let f = TargetDistanceFunction::new(TargetKind::Poisson, z).unwrap();
            let t1 = f.target_distance(1).unwrap();
            assert!((t1 - 1.0 / (2.0 * z.sqrt())).abs() <= 1e-14 * t1);
        }
        let f = TargetDistanceFunction::new(TargetKind::Poisson, 1.0).unwrap();
        // Gamma(5/2) / Gamma(2) = 3 sqrt(pi) / 4
        assert!((f.target_distance(2).unwrap() - 0.75).abs() < 1e-14);
        for k in 1..=8 {
            let q = kth_nn_mean_quadrature(k, 1.0);
            assert!((f.target_distance(k).unwrap() - q).abs() < 1e-7, "k={k}");
        }
    }

    #[test]
    fn poisson_target_increasing_and_scales() {
        let f1 = TargetDistanceFunction::new(TargetKind::Poisson, 1.0).unwrap();
        let f4 = TargetDistanceFunction::new(TargetKind::Poisson, 4.0).unwrap();
        for k in 1..50 {
            assert!(f1.target_distance(k + 1).unwrap() > f1.target_distance(k).unwrap());
            let ratio = f1.target_distance(k).unwrap() / f4.target_distance(k).unwrap();
            assert!((ratio - 2.0).abs() < 1e-12);
        }
        let h1 = TargetDistanceFunction::new(TargetKind::Hexagonal, 1.0).unwrap();
        let h4 = TargetDistanceFunction::new(TargetKind::Hexagonal, 4.0).unwrap();
        assert!((h1.target_distance(3).unwrap() / h4.target_distance(3).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_density() {
        assert!(TargetDistanceFunction::new(TargetKind::Hexagonal, 0.0).is_err());
        assert!(TargetDistanceFunction::new(TargetKind::Poisson, -3.0).is_err());
    }

    #[test]
    fn bounds_values_and_ordering() {
        let b = analytic_bounds();
        assert!((b.lb_d - 0.376_126_38).abs() < 1e-8);
        assert!((b.lb_u - 0.2).abs() < 1e-15);
        assert!((b.hex_lb_d - 0.377_196_735).abs() < 1e-9);
        assert!((b.hex_lb_d - 0.3772).abs() < 5e-5);
        assert!((b.poisson_u - 0.292_893).abs() < 1e-6);
        assert!(b.lb_d < b.hex_lb_d && b.hex_lb_d < b.poisson_d);
        assert!(b.lb_u < b.hex_lb_u_upper && b.hex_lb_u_upper < b.poisson_u);
    }

    #[test]
    fn disc_integrals_by_quadrature() {
        // Radial density 2x/r^2 on [0, r], r = 1.
        let n = 2000;
        let h = 1.0 / n as f64;
        let pdf = |x: f64| 2.0 * x;
        let mut mean = 0.0;
        let mut mad = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) * h;
            mean += x * pdf(x) * h;
            for j in 0..n {
                let y = (j as f64 + 0.5) * h;
                mad += (x - y).abs() * pdf(x) * pdf(y) * h * h;
            }
        }
        assert!((mean - 2.0 / 3.0).abs() < 1e-6);
        assert!((mad - 4.0 / 15.0).abs() < 1e-6);
        assert!((mad / (2.0 * mean) - analytic_bounds().lb_u).abs() < 1e-5);
    }
}
