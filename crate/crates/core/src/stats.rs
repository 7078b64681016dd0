//! Statistics of replicate batches: mean measures, avoidance functions, the
//! overlap census of extremal pairs, the maximum law and the log-correction
//! estimator.
//!
//! Every reduction walks the batch in replicate-index order, so results are
//! bit-reproducible however the batch was produced.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::field::{beta_c, centering, common_prefix, Interval, ModelParams};
use crate::normal;
use crate::quadrature;
use crate::sampler::{PointFilter, PointProcessSample};

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl Estimate {
    /// Sample mean with the standard error of the mean (n − 1 denominator;
    /// zero for a single sample).
    pub fn mean_of(values: impl IntoIterator<Item = f64>) -> Result<Self> {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return Err(Error::Empty("sample"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = if values.len() < 2 {
            0.0
        } else {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1.0) / n).sqrt()
        };
        Ok(Self {
            value: mean,
            std_error,
            samples: values.len() as u64,
        })
    }

    /// Proportion `hits / trials` with the binomial standard error.
    pub fn proportion(hits: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::Empty("trials"));
        }
        let p = hits as f64 / trials as f64;
        Ok(Self {
            value: p,
            std_error: (p * (1.0 - p) / trials as f64).sqrt(),
            samples: trials,
        })
    }

    /// `sqrt(se_a² + se_b²)` for independent estimates.
    pub fn joint_se(&self, other: &Estimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }
}

/// `E[Ξ_N(A)] = 2^N ∫_A exp(−(x + a_N)²/(2N)) dx / √(2πN)` by adaptive
/// Gauss–Kronrod quadrature at relative tolerance `1e-12`.
pub fn exact_unbarred_mean(params: &ModelParams, window: &Interval) -> Result<f64> {
    if !window.is_compact() {
        return Err(Error::InvalidInterval {
            lower: window.lower(),
            upper: window.upper(),
            reason: "quadrature needs a compact window",
        });
    }
    let a = centering(params)?;
    let n = params.size() as f64;
    // Integrand assembled in log space: N ln 2 − (x + a)²/(2N) − ½ ln(2πN).
    let log_norm = n * std::f64::consts::LN_2 - 0.5 * (2.0 * PI * n).ln();
    let f = |x: f64| {
        let y = x + a;
        (log_norm - y * y / (2.0 * n)).exp()
    };
    Ok(quadrature::integrate(f, window.lower(), window.upper(), 1e-12, 0.0)?.value)
}

/// Closed form of [`exact_unbarred_mean`]:
/// `2^N (Φ((u + a_N)/√N) − Φ((l + a_N)/√N))`.
pub fn unbarred_mean_closed_form(params: &ModelParams, window: &Interval) -> Result<f64> {
    let a = centering(params)?;
    let sd = (params.size() as f64).sqrt();
    let mass = normal::mass((window.lower() + a) / sd, (window.upper() + a) / sd);
    Ok((params.size() as f64).exp2() * mass)
}

fn nonempty(batch: &[PointProcessSample]) -> Result<()> {
    if batch.is_empty() {
        Err(Error::Empty("batch"))
    } else {
        Ok(())
    }
}

/// Per-replicate point counts in each sample's own window.
pub fn counts(batch: &[PointProcessSample], filter: PointFilter) -> Vec<usize> {
    batch.iter().map(|s| s.count_in(&s.window, filter)).collect()
}

/// Mean number of (filtered) points per replicate in the sampling window.
pub fn empirical_mean_measure(batch: &[PointProcessSample], filter: PointFilter) -> Result<Estimate> {
    nonempty(batch)?;
    Estimate::mean_of(counts(batch, filter).into_iter().map(|c| c as f64))
}

/// Fraction of replicates with no (filtered) point in the sampling window.
pub fn avoidance_probability(batch: &[PointProcessSample], filter: PointFilter) -> Result<Estimate> {
    nonempty(batch)?;
    let empty = counts(batch, filter).into_iter().filter(|&c| c == 0).count();
    Estimate::proportion(empty as u64, batch.len() as u64)
}

/// Paired comparison of two filters on the same replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterComparison {
    /// Fraction of replicates where the two counts differ.
    pub disagreement: Estimate,
    /// Mean of `count(first) − count(second)`.
    pub mean_difference: Estimate,
}

pub fn compare_filters(
    batch: &[PointProcessSample],
    first: PointFilter,
    second: PointFilter,
) -> Result<FilterComparison> {
    nonempty(batch)?;
    let a = counts(batch, first);
    let b = counts(batch, second);
    let differ = a.iter().zip(&b).filter(|(x, y)| x != y).count();
    Ok(FilterComparison {
        disagreement: Estimate::proportion(differ as u64, batch.len() as u64)?,
        mean_difference: Estimate::mean_of(a.iter().zip(&b).map(|(&x, &y)| x as f64 - y as f64))?,
    })
}

/// Fraction of replicates in which no path crosses the envelope `U_N`.
pub fn envelope_survival(batch: &[PointProcessSample]) -> Result<Estimate> {
    nonempty(batch)?;
    let clean = batch.iter().filter(|s| !s.any_path_above_u).count();
    Estimate::proportion(clean as u64, batch.len() as u64)
}

/// Unordered pairs of barrier-compliant points in a window, by overlap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapCensus {
    pub window: Interval,
    pub replicates: u64,
    /// `counts[q]` = pairs with overlap `q`, summed over replicates.
    pub counts: Vec<u64>,
    /// Mean per replicate of pairs with overlap `q`.
    pub by_overlap: Vec<Estimate>,
    /// Mean per replicate of pairs with interior overlap `1..=K−1`.
    pub interior: Estimate,
}

impl OverlapCensus {
    pub fn total_pairs(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Census of unordered pairs of `below_e` points in `window`, within each
/// replicate.
pub fn pair_overlap_census(batch: &[PointProcessSample], window: &Interval) -> Result<OverlapCensus> {
    nonempty(batch)?;
    let params = batch[0].params;
    let k = params.scales() as usize;
    if k < 2 {
        return Err(Error::out_of_range("K", k, "K >= 2 (no interior overlaps otherwise)"));
    }
    let mut per_replicate: Vec<Vec<u64>> = Vec::with_capacity(batch.len());
    for sample in batch {
        if sample.params != params {
            return Err(Error::Degenerate("batch mixes model parameters".into()));
        }
        if !sample.window.covers(window) {
            return Err(Error::Degenerate(format!(
                "census window [{}, {}] is not inside the sampling window",
                window.lower(),
                window.upper()
            )));
        }
        let kept: Vec<&[u64]> = sample
            .points
            .iter()
            .filter(|p| p.below_e && window.contains(p.recentered))
            .map(|p| p.path.labels.as_slice())
            .collect();
        let mut row = vec![0u64; k + 1];
        for (i, s) in kept.iter().enumerate() {
            for t in &kept[i + 1..] {
                row[common_prefix(s, t) as usize] += 1;
            }
        }
        per_replicate.push(row);
    }
    let column = |q: usize| per_replicate.iter().map(move |row| row[q] as f64);
    Ok(OverlapCensus {
        window: *window,
        replicates: batch.len() as u64,
        counts: (0..=k).map(|q| per_replicate.iter().map(|r| r[q]).sum()).collect(),
        by_overlap: (0..=k)
            .map(|q| Estimate::mean_of(column(q)))
            .collect::<Result<_>>()?,
        interior: Estimate::mean_of(
            per_replicate
                .iter()
                .map(|row| row[1..k].iter().sum::<u64>() as f64),
        )?,
    })
}

/// Least-squares fit of `mean_max ≈ β_c N − (c / (2β_c)) ln N` with `β_c`
/// fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogCorrectionFit {
    pub c_hat: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

pub fn log_correction_fit(points: &[(u32, f64)]) -> Result<LogCorrectionFit> {
    let mut sizes: Vec<u32> = points.iter().map(|p| p.0).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 || sizes[0] < 2 {
        return Err(Error::Degenerate(
            "log-correction fit needs at least 3 distinct sizes N >= 2".into(),
        ));
    }
    let bc = beta_c();
    // gap = β_c N − mean_max = c · (ln N / (2β_c)); regression through 0.
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(n, y) in points {
        let n = n as f64;
        let x = n.ln() / (2.0 * bc);
        sxy += x * (bc * n - y);
        sxx += x * x;
    }
    let c_hat = sxy / sxx;
    let ss: f64 = points
        .iter()
        .map(|&(n, y)| {
            let n = n as f64;
            let fitted = bc * n - c_hat * n.ln() / (2.0 * bc);
            (y - fitted).powi(2)
        })
        .sum();
    Ok(LogCorrectionFit {
        c_hat,
        residual: (ss / points.len() as f64).sqrt(),
    })
}

/// Summary of replicate maxima against a Gumbel law with scale `1/β_c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxLawReport {
    pub params: ModelParams,
    pub maxima: Vec<f64>,
    /// Mean of `max − a_N`.
    pub mean_recentered: f64,
    /// Sample variance of `max − a_N`.
    pub var_recentered: f64,
    /// Maximum-likelihood location with the scale pinned.
    pub location: f64,
    pub scale: f64,
    /// Kolmogorov–Smirnov distance of `max − a_N` to the fitted law.
    pub ks_statistic: f64,
}

/// Gumbel (maximum) CDF.
pub fn gumbel_cdf(x: f64, location: f64, scale: f64) -> f64 {
    (-(-(x - location) / scale).exp()).exp()
}

/// Location MLE for a Gumbel sample with known scale:
/// `μ̂ = −s · ln( (1/n) Σ exp(−y_i / s) )`, shifted by the minimum for
/// stability.
pub fn gumbel_location_mle(sample: &[f64], scale: f64) -> f64 {
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = sample.iter().map(|y| (-(y - lo) / scale).exp()).sum::<f64>() / sample.len() as f64;
    lo - scale * mean.ln()
}

/// One-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

pub fn gumbel_report(maxima: &[f64], params: &ModelParams) -> Result<MaxLawReport> {
    const MIN_SAMPLES: usize = 100;
    if maxima.len() < MIN_SAMPLES {
        return Err(Error::Degenerate(format!(
            "need at least {MIN_SAMPLES} maxima, got {}",
            maxima.len()
        )));
    }
    if maxima.iter().any(|m| !m.is_finite()) {
        return Err(Error::Degenerate("non-finite maximum".into()));
    }
    if maxima.iter().all(|&m| m == maxima[0]) {
        return Err(Error::Degenerate("all maxima are equal".into()));
    }
    let a = centering(params)?;
    let y: Vec<f64> = maxima.iter().map(|m| m - a).collect();
    let summary = Estimate::mean_of(y.iter().copied())?;
    let var = summary.std_error.powi(2) * y.len() as f64;
    let scale = 1.0 / beta_c();
    let location = gumbel_location_mle(&y, scale);
    let ks = ks_statistic(&y, |x| gumbel_cdf(x, location, scale));
    Ok(MaxLawReport {
        params: *params,
        maxima: maxima.to_vec(),
        mean_recentered: summary.value,
        var_recentered: var,
        location,
        scale,
        ks_statistic: ks,
    })
}

/// Spearman rank correlation with a one-sided p-value for an increasing
/// trend.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendTest {
    pub rho: f64,
    /// `P(ρ >= observed)` under exchangeability.
    pub p_increasing: f64,
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // Ties share the average of their 1-based ranks.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            out[o] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("pivot exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Spearman's ρ of `y` against `x`. The p-value is exact (all permutations)
/// for up to 8 points and uses the Student-t approximation beyond.
pub fn spearman_trend(x: &[f64], y: &[f64]) -> Result<TrendTest> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::Degenerate("trend test needs at least 3 points".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let rho = pearson(&rx, &ry);
    if rho.is_nan() {
        return Err(Error::Degenerate("constant input in trend test".into()));
    }
    let n = x.len();
    let p_increasing = if n <= 8 {
        let mut perm: Vec<usize> = (0..n).collect();
        let (mut hits, mut total) = (0u64, 0u64);
        loop {
            let permuted: Vec<f64> = perm.iter().map(|&i| ry[i]).collect();
            if pearson(&rx, &permuted) >= rho - 1e-12 {
                hits += 1;
            }
            total += 1;
            if !next_permutation(&mut perm) {
                break;
            }
        }
        hits as f64 / total as f64
    } else {
        let df = (n - 2) as f64;
        let t = rho * (df / (1.0 - rho * rho).max(f64::MIN_POSITIVE)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
        1.0 - dist.cdf(t)
    };
    Ok(TrendTest { rho, p_increasing })
}
