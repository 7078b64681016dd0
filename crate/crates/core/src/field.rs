//! Closed-form quantities of the hierarchical field.
//!
//! The field lives on a tree with `K` levels ("scales"); every node at level
//! `j` carries an independent centred Gaussian increment of variance `m`, and
//! every node has `b = 2^m` children. A leaf (a *configuration*) is the label
//! vector `σ = (σ_1, …, σ_K)` with entries in `1..=b`, and its energy is the sum
//! of the increments along its root-to-leaf path. The size is `N = K·m`, so
//! there are `b^K = 2^N` configurations and every energy has variance `N`.
//!
//! The field is parametrized by the integers `(K, m)`. The interpolation
//! exponent `α = ln K / ln N` is derived, never an input: `K = 1` is the random
//! energy model (`α = 0`) and `m = 1` is the binary branching random walk
//! (`α = 1`).
//!
//! Every function here is pure. Floating-point expressions are written in a
//! fixed evaluation order (noted at each site) so that results are bit-stable.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported bits-per-scale; keeps `b = 2^m` inside a `u64`.
pub const MAX_BITS_PER_SCALE: u32 = 63;

/// `β_c = √(2 ln 2)`, the first-order speed of the maximum.
#[inline]
pub fn beta_c() -> f64 {
    // 2·LN_2 is exact and sqrt is correctly rounded.
    (2.0 * LN_2).sqrt()
}

/// Geometry of the tree: `K` scales with `m` bits each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelParams {
    scales: u32,
    bits_per_scale: u32,
}

impl ModelParams {
    pub fn new(scales: u32, bits_per_scale: u32) -> Result<Self> {
        if scales == 0 {
            return Err(Error::InvalidParams("scales K must be at least 1".into()));
        }
        if bits_per_scale == 0 || bits_per_scale > MAX_BITS_PER_SCALE {
            return Err(Error::InvalidParams(format!(
                "bits_per_scale m must lie in 1..={MAX_BITS_PER_SCALE}, got {bits_per_scale}"
            )));
        }
        if u64::from(scales) * u64::from(bits_per_scale) > u64::from(u32::MAX) {
            return Err(Error::InvalidParams("size N = K·m overflows".into()));
        }
        Ok(Self {
            scales,
            bits_per_scale,
        })
    }

    /// Number of scales `K = N^α`.
    #[inline]
    pub fn scales(&self) -> u32 {
        self.scales
    }

    /// Bits per scale `m = N^{1−α}`.
    #[inline]
    pub fn bits_per_scale(&self) -> u32 {
        self.bits_per_scale
    }

    /// System size `N = K·m`.
    #[inline]
    pub fn size(&self) -> u32 {
        self.scales * self.bits_per_scale
    }

    /// `α = ln K / ln N`, with `α = 0` whenever `K = 1`.
    pub fn alpha(&self) -> f64 {
        if self.scales == 1 {
            return 0.0;
        }
        (self.scales as f64).ln() / (self.size() as f64).ln()
    }

    /// Children per node, `b = 2^m`.
    #[inline]
    pub fn branching(&self) -> u64 {
        1u64 << self.bits_per_scale
    }

    /// Variance of one per-scale increment, which is `m`.
    #[inline]
    pub fn increment_variance(&self) -> f64 {
        self.bits_per_scale as f64
    }

    /// Total number of leaves `b^K = 2^N`, if it fits in a `u128`.
    pub fn leaf_count(&self) -> Option<u128> {
        (self.size() < 128).then(|| 1u128 << self.size())
    }

    /// Nodes carrying an increment: `Σ_{j=1..K} b^j`, if it fits.
    pub fn node_count(&self) -> Option<u128> {
        let b = u128::from(self.branching());
        let mut level = 1u128;
        let mut total = 0u128;
        for _ in 0..self.scales {
            level = level.checked_mul(b)?;
            total = total.checked_add(level)?;
        }
        Some(total)
    }
}

/// Level of the maximum, `a_N = β_c N − (1+2α)/(2β_c) · ln N`.
pub fn centering(params: &ModelParams) -> Result<f64> {
    let n = params.size();
    if n < 2 {
        return Err(Error::out_of_range("N", n, "N >= 2"));
    }
    let bc = beta_c();
    let n = n as f64;
    // Evaluated as (bc·N) − (((1 + 2α) / (2·bc)) · ln N).
    Ok(bc * n - (1.0 + 2.0 * params.alpha()) / (2.0 * bc) * n.ln())
}

/// A window on the real line. The lower end is always finite; the upper end
/// may be `+∞`. Membership is closed: `lower <= x <= upper`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let bad = |reason| Error::InvalidInterval {
            lower,
            upper,
            reason,
        };
        if lower.is_nan() || upper.is_nan() {
            return Err(bad("NaN endpoint"));
        }
        if !lower.is_finite() {
            return Err(bad("lower end must be finite"));
        }
        if upper == f64::NEG_INFINITY {
            return Err(bad("upper end must not be -inf"));
        }
        if lower >= upper {
            return Err(bad("lower must be strictly below upper"));
        }
        Ok(Self { lower, upper })
    }

    /// `[lower, +∞)`.
    pub fn above(lower: f64) -> Result<Self> {
        Self::new(lower, f64::INFINITY)
    }

    #[inline]
    pub fn lower(&self) -> f64 {
        self.lower
    }

    #[inline]
    pub fn upper(&self) -> f64 {
        self.upper
    }

    #[inline]
    pub fn is_compact(&self) -> bool {
        self.upper.is_finite()
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    /// Whether `other` lies entirely inside `self`.
    pub fn covers(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Limiting intensity `μ(A) = ∫_A e^{−β_c x} dx / √(2π)`.
pub fn intensity(window: &Interval) -> f64 {
    let bc = beta_c();
    let head = (-bc * window.lower).exp();
    // e^{−β l} − e^{−β u} = e^{−β l} · (1 − e^{−β (u − l)}); expm1 keeps narrow
    // windows accurate.
    let mass = if window.upper.is_finite() {
        head * -(-bc * (window.upper - window.lower)).exp_m1()
    } else {
        head
    };
    mass / (bc * (2.0 * PI).sqrt())
}

fn check_labels(labels: &[u64], params: &ModelParams) -> Result<()> {
    if labels.len() != params.scales() as usize {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: params.scales() as usize,
        });
    }
    let b = params.branching();
    if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > b) {
        return Err(Error::out_of_range("label", bad, format!("1..={b}")));
    }
    Ok(())
}

/// Overlap `σ ∧ τ`: the length of the common label prefix.
pub fn overlap(sigma: &[u64], tau: &[u64], params: &ModelParams) -> Result<u32> {
    check_labels(sigma, params)?;
    check_labels(tau, params)?;
    Ok(common_prefix(sigma, tau))
}

/// Unchecked common prefix length, used on labels the sampler produced.
#[inline]
pub(crate) fn common_prefix(sigma: &[u64], tau: &[u64]) -> u32 {
    sigma.iter().zip(tau).take_while(|(s, t)| s == t).count() as u32
}

/// `cov[X_σ, X_τ] = (σ ∧ τ) · m`.
pub fn covariance(sigma: &[u64], tau: &[u64], params: &ModelParams) -> Result<f64> {
    Ok(f64::from(overlap(sigma, tau, params)?) * params.increment_variance())
}

/// A scale-indexed threshold for paths `k ↦ S_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Barrier {
    /// `U_N(k) = β_c·k·m + ln N`; no path of the tree crosses it with high
    /// probability.
    Envelope,
    /// `E_N(k) = U_N(k) − N^γ` at interior scales `0 < k < K`, equal to `U_N`
    /// at `k ∈ {0, K}`. Requires `0 < γ < (1−α)/2`.
    Lowered { gamma: f64 },
    /// `F_N(k) = U_N(k) + f(k)` for a table `f(0..=K)`.
    Shifted { offsets: Vec<f64> },
}

impl Barrier {
    /// The lowered barrier with the midpoint `γ = (1−α)/4` of the admissible
    /// range.
    pub fn lowered_default(params: &ModelParams) -> Result<Self> {
        let gamma = default_gamma(params);
        let barrier = Barrier::Lowered { gamma };
        barrier.validate(params)?;
        Ok(barrier)
    }

    /// Checks the barrier's own invariants against `params`.
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        match self {
            Barrier::Envelope => Ok(()),
            Barrier::Lowered { gamma } => {
                let upper = (1.0 - params.alpha()) / 2.0;
                if gamma.is_finite() && *gamma > 0.0 && *gamma < upper {
                    Ok(())
                } else {
                    Err(Error::InvalidBarrier(format!(
                        "gamma = {gamma} must lie strictly inside (0, {upper})"
                    )))
                }
            }
            Barrier::Shifted { offsets } => {
                let want = params.scales() as usize + 1;
                if offsets.len() != want {
                    return Err(Error::LengthMismatch {
                        left: offsets.len(),
                        right: want,
                    });
                }
                if offsets.iter().any(|f| !f.is_finite()) {
                    return Err(Error::InvalidBarrier("non-finite offset".into()));
                }
                Ok(())
            }
        }
    }

    /// Stricter check for barriers used in the mean-limit statement: the
    /// offsets must vanish at both ends, `f(0) = f(K) = 0`.
    pub fn validate_for_mean_limit(&self, params: &ModelParams) -> Result<()> {
        self.validate(params)?;
        if let Barrier::Shifted { offsets } = self {
            let (first, last) = (offsets[0], offsets[offsets.len() - 1]);
            if first != 0.0 || last != 0.0 {
                return Err(Error::InvalidBarrier(format!(
                    "offsets must vanish at both ends, got f(0) = {first}, f(K) = {last}"
                )));
            }
        }
        Ok(())
    }

    /// Barrier value at scale `k`.
    pub fn value(&self, k: u32, params: &ModelParams) -> Result<f64> {
        if k > params.scales() {
            return Err(Error::out_of_range(
                "k",
                k,
                format!("0..={}", params.scales()),
            ));
        }
        self.validate(params)?;
        Ok(self.value_unchecked(k, params))
    }

    /// All `K + 1` values `F(0), …, F(K)`.
    pub fn table(&self, params: &ModelParams) -> Result<Vec<f64>> {
        self.validate(params)?;
        Ok((0..=params.scales())
            .map(|k| self.value_unchecked(k, params))
            .collect())
    }

    fn value_unchecked(&self, k: u32, params: &ModelParams) -> f64 {
        let n = params.size() as f64;
        // (β_c · (k·m)) + ln N, with k·m formed exactly in integers.
        let envelope = beta_c() * f64::from(k * params.bits_per_scale()) + n.ln();
        match self {
            Barrier::Envelope => envelope,
            Barrier::Lowered { gamma } => {
                if k == 0 || k == params.scales() {
                    envelope
                } else {
                    envelope - n.powf(*gamma)
                }
            }
            Barrier::Shifted { offsets } => envelope + offsets[k as usize],
        }
    }
}

/// Midpoint of `(0, (1−α)/2)`.
pub fn default_gamma(params: &ModelParams) -> f64 {
    (1.0 - params.alpha()) / 4.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(k: u32, m: u32) -> ModelParams {
        ModelParams::new(k, m).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values below were evaluated at 40 significant digits.

    #[test]
    fn beta_c_value() {
        assert!(rel(beta_c(), 1.177_410_022_515_474_691) < 1e-15);
        assert!((beta_c().powi(2) / (2.0 * LN_2) - 1.0).abs() < 1e-15);
        assert!(beta_c() > 0.0);
    }

    #[test]
    fn derived_geometry() {
        let q = p(4, 4);
        assert_eq!(q.size(), 16);
        assert_eq!(q.branching(), 16);
        assert_eq!(q.leaf_count(), Some(1 << 16));
        assert!((q.alpha() - 0.5).abs() < 1e-15);
        assert_eq!(q.increment_variance() * q.scales() as f64, 16.0);
        assert_eq!(q.node_count(), Some(16 + 256 + 4096 + 65536));

        assert_eq!(p(1, 16).alpha(), 0.0);
        assert_eq!(p(1, 1).alpha(), 0.0);
        assert!((p(7, 1).alpha() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0, 3).is_err());
        assert!(ModelParams::new(3, 0).is_err());
        assert!(ModelParams::new(1, 64).is_err());
    }

    #[test]
    fn centering_values() {
        assert!(rel(centering(&p(1, 16)).unwrap(), 17.661_150_337_732_120_37) < 1e-12);
        assert!(rel(centering(&p(4, 4)).unwrap(), 16.483_740_315_216_645_67) < 1e-12);
        assert!(centering(&p(1, 1)).is_err());
    }

    #[test]
    fn centering_decreases_with_alpha_at_fixed_size() {
        // N = 60 along every divisor K.
        let values: Vec<f64> = [
            (1, 60),
            (2, 30),
            (3, 20),
            (4, 15),
            (5, 12),
            (6, 10),
            (10, 6),
            (12, 5),
            (15, 4),
            (20, 3),
            (30, 2),
            (60, 1),
        ]
            .iter()
            .map(|&(k, m)| centering(&p(k, m)).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]), "{values:?}");
    }

    #[test]
    fn centering_over_size_gap_is_the_log_term() {
        for (k, m) in [(2, 8), (3, 27), (10, 40)] {
            let q = p(k, m);
            let n = q.size() as f64;
            let gap = (centering(&q).unwrap() / n - beta_c()).abs();
            let bound = (1.0 + 2.0 * q.alpha()) * n.ln() / (2.0 * beta_c() * n);
            assert!(rel(gap, bound) < 1e-12);
        }
    }

    #[test]
    fn intensity_values() {
        let half_line = Interval::above(0.0).unwrap();
        assert!(rel(intensity(&half_line), 0.338_830_375_801_552_498_3) < 1e-14);
        let unit = Interval::new(0.0, 1.0).unwrap();
        assert!(rel(intensity(&unit), 0.234_444_999_356_420_848_2) < 1e-14);
        let default = Interval::new(-1.0, 4.0).unwrap();
        assert!(rel(intensity(&default), 1.096_776_420_334_092_417) < 1e-14);
    }

    #[test]
    fn degenerate_or_unbounded_below_intervals_rejected() {
        assert!(Interval::new(2.0, 2.0).is_err());
        assert!(Interval::new(3.0, 2.0).is_err());
        assert!(Interval::new(f64::NEG_INFINITY, 0.0).is_err());
        assert!(Interval::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn overlap_and_covariance() {
        let q = p(3, 3);
        assert_eq!(overlap(&[1, 2, 3], &[1, 2, 4], &q).unwrap(), 2);
        assert_eq!(overlap(&[2, 1, 1], &[3, 1, 1], &q).unwrap(), 0);
        assert_eq!(overlap(&[5, 6, 7], &[5, 6, 7], &q).unwrap(), 3);
        assert!(overlap(&[1, 2], &[1, 2, 3], &q).is_err());
        assert!(overlap(&[1, 2, 9], &[1, 2, 3], &q).is_err());
        assert!(overlap(&[0, 2, 3], &[1, 2, 3], &q).is_err());

        let q = p(4, 4);
        let s = [3, 1, 4, 1];
        assert_eq!(covariance(&s, &s, &q).unwrap(), 16.0);
        assert_eq!(covariance(&s, &[4, 1, 4, 1], &q).unwrap(), 0.0);
        assert_eq!(covariance(&s, &[3, 1, 5, 1], &q).unwrap(), 8.0);
    }

    #[test]
    fn barrier_values() {
        let q = p(4, 4);
        let u0 = Barrier::Envelope.value(0, &q).unwrap();
        assert!(rel(u0, 2.772_588_722_239_781_24) < 1e-14);

        let e = Barrier::Lowered { gamma: 0.125 };
        assert!(rel(e.value(1, &q).unwrap(), 6.068_015_249_928_584_95) < 1e-12);
        for k in [0, 4] {
            assert_eq!(e.value(k, &q).unwrap(), Barrier::Envelope.value(k, &q).unwrap());
        }
        assert!(e.value(5, &q).is_err());
        assert!(Barrier::Lowered { gamma: 0.25 }.value(1, &q).is_err());
        assert!(Barrier::Lowered { gamma: 0.0 }.value(1, &q).is_err());
        // α = 1 leaves no admissible γ.
        assert!(Barrier::lowered_default(&p(8, 1)).is_err());
    }

    #[test]
    fn shifted_barrier_checks() {
        let q = p(2, 3);
        let f = Barrier::Shifted {
            offsets: vec![0.0, -1.5, 0.0],
        };
        assert!(f.validate_for_mean_limit(&q).is_ok());
        let u1 = Barrier::Envelope.value(1, &q).unwrap();
        assert_eq!(f.value(1, &q).unwrap(), u1 - 1.5);

        let g = Barrier::Shifted {
            offsets: vec![0.5, -1.5, 0.0],
        };
        assert!(g.validate(&q).is_ok());
        assert!(g.validate_for_mean_limit(&q).is_err());
        let h = Barrier::Shifted {
            offsets: vec![0.0, 0.0],
        };
        assert!(h.validate(&q).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = ModelParams> {
            (1u32..12, 1u32..12).prop_map(|(k, m)| p(k, m))
        }

        proptest! {
            #[test]
            fn total_variance_is_size(q in params()) {
                prop_assert_eq!(q.increment_variance() * q.scales() as f64, q.size() as f64);
                prop_assert_eq!(q.leaf_count(), Some(1u128 << q.size()));
            }

            #[test]
            fn lowered_sits_below_envelope(q in (2u32..12, 2u32..12).prop_map(|(k, m)| p(k, m))) {
                let e = Barrier::lowered_default(&q).unwrap().table(&q).unwrap();
                let u = Barrier::Envelope.table(&q).unwrap();
                let last = q.scales() as usize;
                for k in 0..=last {
                    if k == 0 || k == last {
                        prop_assert_eq!(e[k], u[k]);
                    } else {
                        prop_assert!(e[k] < u[k]);
                    }
                }
            }

            #[test]
            fn intensity_is_additive(a in -5.0f64..5.0, w1 in 0.01f64..4.0, w2 in 0.01f64..4.0) {
                let b = a + w1;
                let c = b + w2;
                let left = intensity(&Interval::new(a, b).unwrap());
                let right = intensity(&Interval::new(b, c).unwrap());
                let whole = intensity(&Interval::new(a, c).unwrap());
                prop_assert!(((left + right) - whole).abs() <= 1e-14 * whole.max(1.0));
            }

            #[test]
            fn covariance_symmetric_and_bounded(
                q in params(),
                seed_s in prop::collection::vec(any::<u64>(), 12),
                seed_t in prop::collection::vec(any::<u64>(), 12),
            ) {
                let k = q.scales() as usize;
                let b = q.branching();
                let s: Vec<u64> = seed_s[..k].iter().map(|x| x % b + 1).collect();
                let mut t: Vec<u64> = seed_t[..k].iter().map(|x| x % b + 1).collect();
                // Share a random-length prefix so that all overlaps occur.
                let shared = (seed_t[0] % (k as u64 + 1)) as usize;
                t[..shared].copy_from_slice(&s[..shared]);
                let st = covariance(&s, &t, &q).unwrap();
                prop_assert_eq!(st, covariance(&t, &s, &q).unwrap());
                prop_assert!(st >= 0.0 && st <= q.size() as f64);
            }
        }
    }
}
