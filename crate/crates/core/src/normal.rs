//! Standard normal primitives.
//!
//! `erfc` comes from `libm` (about one ulp); its inverse comes from `statrs`.
//! Everything here is a tail-accurate arrangement of those two functions.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

/// `Φ(x)`, accurate in the lower tail.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `1 − Φ(x)`, accurate in the upper tail.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

#[inline]
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `P(lo <= Z <= hi)`, taking the difference in whichever tail keeps
/// precision.
pub fn mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        sf(lo) - sf(hi)
    } else if hi <= 0.0 {
        cdf(hi) - cdf(lo)
    } else {
        1.0 - cdf(lo) - sf(hi)
    }
}

/// `Φ^{-1}(p)` for `0 < p <= 1/2`.
#[inline]
pub fn lower_quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// `Φ^{-1}(p)` for `0 < p < 1`.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.5 {
        lower_quantile(p)
    } else {
        -lower_quantile(1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.96) - 0.975_002_104_851_779_564).abs() < 1e-15);
        // Φ(−10) = 7.619853024160526e−24
        assert!((cdf(-10.0) / 7.619_853_024_160_526e-24 - 1.0).abs() < 1e-12);
        assert!((sf(10.0) / 7.619_853_024_160_526e-24 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf_into_the_tails() {
        for &p in &[1e-300, 1e-17, 2f64.powi(-54), 1e-6, 0.01, 0.3, 0.5] {
            let z = quantile(p);
            assert!((cdf(z) / p - 1.0).abs() < 1e-12, "p = {p}, z = {z}");
            assert_eq!(quantile(1.0 - p), -lower_quantile(1.0 - (1.0 - p)));
        }
    }

    #[test]
    fn mass_matches_both_tails() {
        assert!((mass(-1.0, 1.0) - 0.682_689_492_137_085_897).abs() < 1e-15);
        assert!((mass(8.0, 9.0) / 6.219_831_985_865_830_3e-16 - 1.0).abs() < 1e-13);
        assert!((mass(-9.0, -8.0) - mass(8.0, 9.0)).abs() < 1e-30);
    }
}
