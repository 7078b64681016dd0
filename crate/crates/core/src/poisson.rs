//! Chen–Stein bound and Poisson total-variation distances.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::field::ModelParams;

/// Ingredients of the Chen–Stein bound for the barrier-filtered count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChenSteinInput {
    /// `log2` of the number of configurations, i.e. `N`.
    pub log2_configs: f64,
    /// `μ_N(A)`, the mean of the filtered count.
    pub mu_n: f64,
    pub mu_n_se: f64,
    /// `Σ E[I_σ I_τ]` over ordered pairs with interior overlap
    /// `σ ∧ τ ∉ {0, K}`.
    pub pair_term: f64,
    pub pair_term_se: f64,
}

impl ChenSteinInput {
    pub fn new(
        params: &ModelParams,
        mu_n: f64,
        mu_n_se: f64,
        pair_term: f64,
        pair_term_se: f64,
    ) -> Result<Self> {
        let input = Self {
            log2_configs: params.size() as f64,
            mu_n,
            mu_n_se,
            pair_term,
            pair_term_se,
        };
        input.validate()?;
        Ok(input)
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("log2_configs", self.log2_configs),
            ("mu_n", self.mu_n),
            ("mu_n_se", self.mu_n_se),
            ("pair_term", self.pair_term),
            ("pair_term_se", self.pair_term_se),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::out_of_range(name, v, "[0, +inf)"));
            }
        }
        Ok(())
    }
}

/// Bound value with a linearly propagated standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChenSteinBound {
    pub value: f64,
    pub std_error: f64,
}

/// `2^{−N} μ_N² + 2^{−m} μ_N² + Σ_{σ∧τ ∉ {0,K}} E[I_σ I_τ]`.
///
/// The first term is `Σ_σ p_σ²` with `p_σ = 2^{−N} μ_N`; the second bounds
/// `Σ_σ p_σ E[Z_σ]` by counting the `b^{K−1} − 1 < 2^{N−m}` interior
/// neighbours of each configuration.
pub fn chen_stein_bound(input: &ChenSteinInput, params: &ModelParams) -> Result<ChenSteinBound> {
    input.validate()?;
    let m = params.bits_per_scale() as f64;
    // 2^{−N}·μ² and 2^{−m}·μ², each formed as exp2(2·log2 μ − n) so that
    // large N underflows cleanly to zero.
    let scaled = |n: f64| {
        if input.mu_n == 0.0 {
            0.0
        } else {
            (2.0 * input.mu_n.log2() - n).exp2()
        }
    };
    let value = scaled(input.log2_configs) + scaled(m) + input.pair_term;
    let slope = 2.0 * input.mu_n * ((-input.log2_configs).exp2() + (-m).exp2());
    let std_error = (slope * input.mu_n_se).hypot(input.pair_term_se);
    Ok(ChenSteinBound { value, std_error })
}

fn check_rate(lambda: f64) -> Result<()> {
    if lambda >= 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::out_of_range("lambda", lambda, "[0, +inf)"))
    }
}

/// `P(Pois(λ) = k)` via log-gamma.
pub fn poisson_pmf(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let k = k as f64;
    (k * lambda.ln() - lambda - ln_gamma(k + 1.0)).exp()
}

/// Chernoff bound on `P(Pois(λ) >= k)` for `k > λ`.
fn upper_tail_bound(k: u64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let k = k as f64;
    (-lambda + k * (1.0 + (lambda / k).ln())).exp()
}

/// Total-variation distance between `Pois(λ1)` and `Pois(λ2)`.
///
/// The sum `½ Σ_k |p1(k) − p2(k)|` runs until the Chernoff tail bounds of both
/// laws beyond the current index fall below `1e-14`.
pub fn tv_poisson(lambda1: f64, lambda2: f64) -> Result<f64> {
    check_rate(lambda1)?;
    check_rate(lambda2)?;
    if lambda1 == lambda2 {
        return Ok(0.0);
    }
    let top = lambda1.max(lambda2);
    let mut sum = 0.0;
    let mut k = 0u64;
    loop {
        sum += (poisson_pmf(k, lambda1) - poisson_pmf(k, lambda2)).abs();
        k += 1;
        if (k as f64) > top
            && upper_tail_bound(k, lambda1) < 1e-14
            && upper_tail_bound(k, lambda2) < 1e-14
        {
            break;
        }
    }
    Ok(0.5 * sum)
}

/// Total budget for `|P(Ξ_{N,E}(A) = 0) − e^{−μ(A)}|`: the Chen–Stein bound
/// plus the distance between the two Poisson laws.
pub fn avoidance_gap_budget(mu_n: f64, mu_limit: f64, cs_bound: f64) -> Result<f64> {
    check_rate(cs_bound)?;
    Ok(cs_bound + tv_poisson(mu_n, mu_limit)?)
}
