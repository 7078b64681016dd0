//! Discrete bridges of exchangeable increments.
//!
//! For increments `Δ_0..Δ_{n−1}` the bridge is
//! `B(j) = Σ_{i<j} Δ_i − (j/n) Σ_{i<n} Δ_i`. The probability that it stays
//! at or below zero at every interior position is exactly `1/n` (cyclic
//! lemma); this module computes that value, finds the unique good rotation
//! of a given sample, and estimates the probability of staying below a
//! shifted level `ε` by Monte Carlo.

use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedSpec;
use crate::stats::{spearman_trend, Estimate, TrendTest};

/// Replicates per Monte Carlo chunk. Each chunk owns a derived seed, so the
/// estimate does not depend on how chunks are scheduled.
pub const CHUNK: u64 = 1 << 15;

const CHUNK_SALT: u64 = 0xB21D_6E00_0000_0001;

/// Neumaier compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn check_length(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::out_of_range("n", n, "n >= 2"))
    } else {
        Ok(())
    }
}

/// A discrete bridge built from its increments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgePath {
    increments: Vec<f64>,
    values: Vec<f64>,
}

impl BridgePath {
    pub fn new(increments: Vec<f64>) -> Result<Self> {
        check_length(increments.len())?;
        if increments.iter().any(|d| !d.is_finite()) {
            return Err(Error::Degenerate("non-finite bridge increment".into()));
        }
        let n = increments.len();
        let mut prefix = Vec::with_capacity(n + 1);
        let mut acc = Compensated::default();
        prefix.push(0.0);
        for &d in &increments {
            acc.add(d);
            prefix.push(acc.value());
        }
        let total = prefix[n];
        let values = prefix
            .iter()
            .enumerate()
            .map(|(j, s)| s - (j as f64 / n as f64) * total)
            .collect();
        Ok(Self { increments, values })
    }

    /// Bridge of the increments rotated left by `offset`:
    /// `Δ'_i = Δ_{(i + offset) mod n}`.
    pub fn rotated(&self, offset: usize) -> Result<Self> {
        let n = self.len();
        Self::new((0..n).map(|i| self.increments[(i + offset) % n]).collect())
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// `B(0), …, B(n)`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_{1 <= j <= n−1} B(j)`.
    pub fn interior_max(&self) -> f64 {
        self.values[1..self.len()]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether `B(j) <= level` for every `1 <= j <= n−1`.
    pub fn stays_below(&self, level: f64) -> bool {
        self.interior_max() <= level
    }

    /// The position in `0..n` of the bridge maximum. Ties are an error.
    pub fn max_position(&self) -> Result<usize> {
        let head = &self.values[..self.len()];
        let top = head.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let hits: Vec<usize> = (0..head.len()).filter(|&j| head[j] == top).collect();
        match hits.as_slice() {
            [only] => Ok(*only),
            _ => Err(Error::MaximumTie { count: hits.len() }),
        }
    }
}

/// `P(B(j) <= 0 for all j)`, which is exactly `1/n` for any continuous
/// exchangeable increments.
pub fn ballot_exact(n: u64) -> Result<Ratio<u64>> {
    if n < 1 {
        return Err(Error::out_of_range("n", n, "n >= 1"));
    }
    Ok(Ratio::new(1, n))
}

/// Offsets `r` whose rotation satisfies `B(j) <= 0` at every interior `j`.
pub fn qualifying_rotations(increments: &[f64]) -> Result<Vec<usize>> {
    let path = BridgePath::new(increments.to_vec())?;
    let mut out = Vec::new();
    for r in 0..path.len() {
        if path.rotated(r)?.stays_below(0.0) {
            out.push(r);
        }
    }
    Ok(out)
}

/// The unique rotation offset that keeps the bridge at or below zero.
///
/// The candidate is the position of the bridge maximum; every other rotation
/// is checked as well and anything but exactly one qualifying offset is an
/// error.
pub fn rotation_oracle(increments: &[f64]) -> Result<usize> {
    let path = BridgePath::new(increments.to_vec())?;
    let candidate = path.max_position()?;
    let all = qualifying_rotations(increments)?;
    if all != [candidate] {
        return Err(Error::RotationCount(all.len()));
    }
    Ok(candidate)
}

/// `max_{1<=j<=n−1} B(j)` for fresh standard Gaussian increments, written
/// into `scratch` without allocating.
fn gaussian_interior_max(rng: &mut ChaCha8Rng, scratch: &mut [f64]) -> f64 {
    let n = scratch.len();
    let mut acc = Compensated::default();
    for slot in scratch.iter_mut() {
        let d: f64 = StandardNormal.sample(rng);
        acc.add(d);
        *slot = acc.value();
    }
    let total = scratch[n - 1];
    let mut top = f64::NEG_INFINITY;
    for (j, s) in scratch[..n - 1].iter().enumerate() {
        let b = s - ((j + 1) as f64 / n as f64) * total;
        top = top.max(b);
    }
    top
}

/// Runs `reps` bridges of length `n` in seeded chunks and returns, for each
/// replicate chunk, the per-level hit counts. `visit` maps an interior
/// maximum to the levels it satisfies.
fn chunked_counts(
    n: usize,
    reps: u64,
    seed: u64,
    width: usize,
    visit: impl Fn(f64, &mut [u64]) + Sync,
) -> Vec<u64> {
    let chunks = reps.div_ceil(CHUNK);
    let per_chunk: Vec<Vec<u64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let key = SeedSpec::new(seed, c).derived_u64(CHUNK_SALT);
            let mut rng = ChaCha8Rng::seed_from_u64(key);
            let mut scratch = vec![0.0; n];
            let mut counts = vec![0u64; width];
            let size = CHUNK.min(reps - c * CHUNK);
            for _ in 0..size {
                visit(gaussian_interior_max(&mut rng, &mut scratch), &mut counts);
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; width];
    for counts in per_chunk {
        for (t, c) in total.iter_mut().zip(counts) {
            *t += c;
        }
    }
    total
}

fn check_mc(n: usize, reps: u64) -> Result<()> {
    check_length(n)?;
    if reps < 1 {
        return Err(Error::out_of_range("reps", reps, "reps >= 1"));
    }
    Ok(())
}

/// Monte Carlo estimate of `P(B(j) <= ε, 1 <= j <= n−1)` with Gaussian
/// increments.
pub fn bridge_below_mc(n: usize, eps: f64, reps: u64, seed: u64) -> Result<Estimate> {
    Ok(bridge_below_mc_levels(n, &[eps], reps, seed)?[0])
}

/// [`bridge_below_mc`] at several levels on the same bridges, so the
/// estimates are pathwise ordered like the levels.
pub fn bridge_below_mc_levels(n: usize, levels: &[f64], reps: u64, seed: u64) -> Result<Vec<Estimate>> {
    check_mc(n, reps)?;
    if levels.iter().any(|l| l.is_nan()) {
        return Err(Error::Degenerate("NaN level".into()));
    }
    let counts = chunked_counts(n, reps, seed, levels.len(), |top, counts| {
        for (c, &level) in counts.iter_mut().zip(levels) {
            *c += u64::from(top <= level);
        }
    });
    counts
        .into_iter()
        .map(|hits| Estimate::proportion(hits, reps))
        .collect()
}

/// One grid point of the perturbation study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub n: usize,
    /// `|P(max <= ε) − P(max <= 0)|`, estimated from shared bridges.
    pub difference: Estimate,
    /// `P(max <= 0)`, for reference against `1/n`.
    pub at_zero: Estimate,
    /// `difference · n / |ε|`.
    pub scaled: f64,
    pub scaled_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub eps: f64,
    pub reps: u64,
    pub rows: Vec<PerturbationRow>,
    /// Upper envelope `max_n D(n)·n/|ε|`.
    pub c_fit: f64,
    /// `max / min` of the scaled values over the grid.
    pub spread: f64,
    /// Grid points whose scaled value exceeds the cap.
    pub violations: Vec<usize>,
    /// Rank-correlation test of the scaled values against `n`.
    pub trend: Option<TrendTest>,
}

/// Estimates `D(n) = |P(max <= ε) − P(max <= 0)|` over `n_grid` with common
/// random numbers and summarizes `D(n)·n/|ε|`.
///
/// The difference is the frequency of the maximum falling between `0` and
/// `ε`, so its standard error is binomial. The trend test needs at least
/// three grid points and is omitted otherwise.
pub fn perturbation_check(
    n_grid: &[usize],
    eps: f64,
    reps: u64,
    seed: u64,
    cap: f64,
) -> Result<PerturbationReport> {
    if eps == 0.0 || eps.is_nan() || eps.abs() > 1.0 {
        return Err(Error::out_of_range("eps", eps, "0 < |eps| <= 1"));
    }
    if n_grid.is_empty() {
        return Err(Error::Empty("n_grid"));
    }
    let (lo, hi) = if eps > 0.0 { (0.0, eps) } else { (eps, 0.0) };
    let mut rows = Vec::with_capacity(n_grid.len());
    for (i, &n) in n_grid.iter().enumerate() {
        check_mc(n, reps)?;
        let counts = chunked_counts(n, reps, SeedSpec::new(seed, i as u64).derived_u64(n as u64), 2, |top, c| {
            c[0] += u64::from(top > lo && top <= hi);
            c[1] += u64::from(top <= 0.0);
        });
        let difference = Estimate::proportion(counts[0], reps)?;
        let at_zero = Estimate::proportion(counts[1], reps)?;
        let factor = n as f64 / eps.abs();
        rows.push(PerturbationRow {
            n,
            difference,
            at_zero,
            scaled: difference.value * factor,
            scaled_se: difference.std_error * factor,
        });
    }
    let scaled: Vec<f64> = rows.iter().map(|r| r.scaled).collect();
    let c_fit = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if floor > 0.0 { c_fit / floor } else { f64::INFINITY };
    let violations = rows.iter().filter(|r| r.scaled > cap).map(|r| r.n).collect();
    let trend = if rows.len() >= 3 {
        let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        spearman_trend(&ns, &scaled).ok()
    } else {
        None
    };
    Ok(PerturbationReport {
        eps,
        reps,
        rows,
        c_fit,
        spread,
        violations,
        trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn endpoints_are_exactly_zero() {
        let p = BridgePath::new(vec![0.1, 0.2, 0.3, 1e16, -1e16, 0.7]).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert_eq!(p.values()[6], 0.0);
        assert_eq!(p.values().len(), 7);
    }

    #[test]
    fn ballot_values() {
        assert_eq!(ballot_exact(2).unwrap(), Ratio::new(1, 2));
        assert_eq!(ballot_exact(5).unwrap(), Ratio::new(1, 5));
        assert_eq!(ballot_exact(1).unwrap(), Ratio::from_integer(1));
        assert!(ballot_exact(0).is_err());
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_oracle(&[1.0, -2.0, 0.5]).unwrap(), 1);
        assert_eq!(qualifying_rotations(&[1.0, -2.0, 0.5]).unwrap(), vec![1]);
        // Bridge values −3, −2, −1: already below zero.
        assert_eq!(rotation_oracle(&[-3.0, 1.0, 1.0, 1.0]).unwrap(), 0);
        // Constant increments: flat bridge, maximum everywhere.
        assert!(matches!(
            rotation_oracle(&[1.0, 1.0, 1.0]),
            Err(Error::MaximumTie { count: 3 })
        ));
        assert!(rotation_oracle(&[1.0]).is_err());
    }

    #[test]
    fn mc_extreme_levels() {
        assert_eq!(bridge_below_mc(5, 1e6, 1000, 1).unwrap().value, 1.0);
        assert_eq!(bridge_below_mc(5, -1e6, 1000, 1).unwrap().value, 0.0);
        let one = bridge_below_mc(4, 0.0, 1, 2).unwrap();
        assert!(one.value == 0.0 || one.value == 1.0);
        assert_eq!(one.samples, 1);
        assert!(bridge_below_mc(1, 0.0, 10, 0).is_err());
        assert!(bridge_below_mc(3, 0.0, 0, 0).is_err());
    }

    #[test]
    fn mc_matches_ballot_at_moderate_reps() {
        for n in [2, 3, 7] {
            let e = bridge_below_mc(n, 0.0, 200_000, 11).unwrap();
            assert!((e.value - 1.0 / n as f64).abs() < 4.0 * e.std_error, "n = {n}: {e:?}");
        }
    }

    #[test]
    fn mc_is_reproducible_and_chunk_count_independent() {
        let a = bridge_below_mc(6, 0.2, 3 * CHUNK + 17, 5).unwrap();
        let b = crate::sampler::with_threads(3, || bridge_below_mc(6, 0.2, 3 * CHUNK + 17, 5))
            .unwrap()
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn levels_are_pathwise_monotone() {
        let levels = [-0.5, -0.1, 0.0, 0.05, 0.3, 2.0];
        let est = bridge_below_mc_levels(8, &levels, 50_000, 3).unwrap();
        for w in est.windows(2) {
            assert!(w[0].value <= w[1].value);
        }
        let solo = bridge_below_mc(8, 0.05, 50_000, 3).unwrap();
        assert_eq!(solo, est[3]);
    }

    #[test]
    fn perturbation_rejects_bad_eps() {
        assert!(perturbation_check(&[2, 4], 0.0, 10, 0, 10.0).is_err());
        assert!(perturbation_check(&[2, 4], 1.5, 10, 0, 10.0).is_err());
        assert!(perturbation_check(&[], 0.1, 10, 0, 10.0).is_err());
        assert!(perturbation_check(&[1], 0.1, 10, 0, 10.0).is_err());
    }

    #[test]
    fn perturbation_two_point_exact() {
        // n = 2: B(1) = (Δ0 − Δ1)/2 ~ N(0, 1/2), so D = Φ(ε√2) − 1/2.
        let eps = 0.1;
        let r = perturbation_check(&[2], eps, 400_000, 8, 100.0).unwrap();
        let exact = crate::normal::cdf(eps * 2f64.sqrt()) - 0.5;
        let row = r.rows[0];
        assert!((row.difference.value - exact).abs() < 4.0 * row.difference.std_error);
        assert!(r.trend.is_none());
        assert!(r.violations.is_empty());
        let neg = perturbation_check(&[2], -eps, 400_000, 9, 100.0).unwrap();
        assert!((neg.rows[0].difference.value - exact).abs() < 4.0 * neg.rows[0].difference.std_error);
    }

    #[test]
    fn perturbation_flags_cap_violations() {
        let r = perturbation_check(&[2, 4, 8], 0.5, 20_000, 4, 0.0).unwrap();
        assert_eq!(r.violations, vec![2, 4, 8]);
        assert!(r.trend.is_some());
        assert!(r.spread >= 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn endpoints_zero(inc in prop::collection::vec(-1e3f64..1e3, 2..40)) {
                let p = BridgePath::new(inc).unwrap();
                prop_assert_eq!(p.values()[0], 0.0);
                prop_assert_eq!(*p.values().last().unwrap(), 0.0);
            }

            #[test]
            fn exactly_one_rotation(seed in any::<u64>(), n in 2usize..20) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let inc = gaussian_vec(&mut rng, n);
                let r = rotation_oracle(&inc).unwrap();
                prop_assert!(BridgePath::new(inc).unwrap().rotated(r).unwrap().stays_below(0.0));
            }

            #[test]
            fn shift_invariance(inc in prop::collection::vec(-5f64..5.0, 2..12), c in -3f64..3.0) {
                // Adding a constant to every increment leaves the bridge unchanged.
                let a = BridgePath::new(inc.clone()).unwrap();
                let b = BridgePath::new(inc.iter().map(|d| d + c).collect()).unwrap();
                for (x, y) in a.values().iter().zip(b.values()) {
                    prop_assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}
