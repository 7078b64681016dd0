//! Declarative experiments: a TOML config goes in, a JSON-lines result file
//! and a CSV plot table come out.
//!
//! Statistics are a pure function of the config. Thread count and output
//! location change neither the numbers nor the config hash.

mod config;
mod output;

use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentKind, MIN_MAX_LAW_REPS};
pub use output::{
    emit_plot_data, persist, plot_rows, read_jsonl, read_plot_data, statistics_json, write_jsonl,
    Entry, ExperimentResult, PlotRow, RunFiles, RunInfo, Statistic, PLOT_COLUMNS, SCHEMA_JSON,
    SCHEMA_NAME, SCHEMA_VERSION,
};

use crate::bridge::{ballot_exact, bridge_below_mc, perturbation_check};
use crate::error::Result;
use crate::field::{centering, intensity, ModelParams};
use crate::poisson::{avoidance_gap_budget, chen_stein_bound, tv_poisson, ChenSteinInput};
use crate::rng::SeedSpec;
use crate::sampler::{replicate_batch, with_threads, PointFilter, PointProcessSample, WindowSampler};
use crate::stats::{self, Estimate};

const ENTRY_SALT: u64 = 0x5EED_0FE4_7217;

/// Master seed for ladder entry or grid point `index`.
pub fn entry_seed(master_seed: u64, index: usize) -> u64 {
    SeedSpec::new(master_seed, index as u64).derived_u64(ENTRY_SALT)
}

/// Samples the replicate batch for one ladder entry exactly as [`run`] does.
pub fn entry_batch(
    config: &ExperimentConfig,
    index: usize,
    params: &ModelParams,
) -> Result<Vec<PointProcessSample>> {
    let sampler = WindowSampler::with_budget(
        params,
        config.window_interval()?,
        &config.barrier(params)?,
        config.leaf_budget,
    )?;
    replicate_batch(&sampler, config.reps, entry_seed(config.master_seed, index), config.threads)
}

fn stat(name: &str, e: Estimate, oracle: Option<f64>) -> Statistic {
    Statistic::new(name, e.value, e.std_error, oracle)
}

fn tree_entry(params: &ModelParams, statistics: Vec<Statistic>) -> Entry {
    Entry {
        label: format!("K={},m={}", params.scales(), params.bits_per_scale()),
        size: Some(params.size()),
        alpha: Some(params.alpha()),
        statistics,
    }
}

/// Validates, checks the leaf budget, and runs the experiment in memory.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    config.check_budget()?;
    let started = output::unix_now();
    let clock = Instant::now();
    let (entries, draws) = if config.kind.uses_bridges() {
        with_threads(config.threads, || run_bridges(config))??
    } else {
        run_trees(config)?
    };
    Ok(ExperimentResult {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        config_hash: config.content_hash(),
        entries,
        run_info: RunInfo {
            wall_clock_seconds: clock.elapsed().as_secs_f64(),
            draws,
            started_unix_seconds: started,
            threads: config.threads,
        },
    })
}

/// [`run`] followed by [`persist`] under `config.out`.
pub fn run_and_persist(config: &ExperimentConfig) -> Result<(ExperimentResult, RunFiles)> {
    let result = run(config)?;
    let files = persist(&result, &config.out)?;
    Ok((result, files))
}

fn run_trees(config: &ExperimentConfig) -> Result<(Vec<Entry>, u64)> {
    let window = config.window_interval()?;
    let mu = intensity(&window);
    let mut entries = Vec::new();
    let mut draws = 0u64;
    let mut maxima_means = Vec::new();
    for (i, params) in config.params()?.iter().enumerate() {
        let batch = entry_batch(config, i, params)?;
        draws += batch.iter().map(|s| s.draws).sum::<u64>();
        let statistics = match config.kind {
            ExperimentKind::MeanMeasure => {
                let quad = stats::exact_unbarred_mean(params, &window)?;
                vec![
                    stat(
                        "mean_unbarred",
                        stats::empirical_mean_measure(&batch, PointFilter::Unbarred)?,
                        Some(quad),
                    ),
                    Statistic::new(
                        "exact_closed_form",
                        stats::unbarred_mean_closed_form(params, &window)?,
                        0.0,
                        Some(quad),
                    ),
                    stat(
                        "mean_barrier_u",
                        stats::empirical_mean_measure(&batch, PointFilter::BarrierU)?,
                        None,
                    ),
                    stat(
                        "mean_barrier_e",
                        stats::empirical_mean_measure(&batch, PointFilter::BarrierE)?,
                        Some(mu),
                    ),
                ]
            }
            ExperimentKind::Avoidance => vec![
                stat(
                    "avoidance_unbarred",
                    stats::avoidance_probability(&batch, PointFilter::Unbarred)?,
                    None,
                ),
                stat(
                    "avoidance_barrier_e",
                    stats::avoidance_probability(&batch, PointFilter::BarrierE)?,
                    Some((-mu).exp()),
                ),
                stat("envelope_survival", stats::envelope_survival(&batch)?, Some(1.0)),
            ],
            ExperimentKind::MaxLaw => {
                let maxima: Vec<f64> = batch.iter().map(|s| s.max_energy).collect();
                let report = stats::gumbel_report(&maxima, params)?;
                let n = maxima.len() as f64;
                vec![
                    Statistic::new(
                        "mean_recentered_max",
                        report.mean_recentered,
                        (report.var_recentered / n).sqrt(),
                        None,
                    ),
                    Statistic::exact("var_recentered_max", report.var_recentered),
                    Statistic::exact("gumbel_location", report.location),
                    Statistic::exact("gumbel_scale", report.scale),
                    Statistic::exact("ks_statistic", report.ks_statistic),
                ]
            }
            ExperimentKind::OverlapCensus => {
                let census = stats::pair_overlap_census(&batch, &window)?;
                let mut out: Vec<Statistic> = census
                    .by_overlap
                    .iter()
                    .enumerate()
                    .map(|(q, e)| stat(&format!("pairs_overlap_{q}"), *e, None))
                    .collect();
                out.push(stat("pairs_interior", census.interior, None));
                out
            }
            ExperimentKind::LogCorrection => {
                let a = centering(params)?;
                let max = Estimate::mean_of(batch.iter().map(|s| s.max_energy))?;
                maxima_means.push((params.size(), max.value));
                vec![stat("mean_max", max, Some(a))]
            }
            ExperimentKind::ChenSteinBudget => chen_stein_statistics(params, &batch, &window, mu)?,
            ExperimentKind::Ballot | ExperimentKind::Perturbation => unreachable!("bridge kinds"),
        };
        entries.push(tree_entry(params, statistics));
    }
    if config.kind == ExperimentKind::LogCorrection {
        let fit = stats::log_correction_fit(&maxima_means)?;
        entries.push(Entry {
            label: "fit".into(),
            size: None,
            alpha: None,
            statistics: vec![
                Statistic::exact("c_hat", fit.c_hat),
                Statistic::exact("residual", fit.residual),
            ],
        });
    }
    Ok((entries, draws))
}

fn chen_stein_statistics(
    params: &ModelParams,
    batch: &[PointProcessSample],
    window: &crate::field::Interval,
    mu: f64,
) -> Result<Vec<Statistic>> {
    let mu_n = stats::empirical_mean_measure(batch, PointFilter::BarrierE)?;
    let census = stats::pair_overlap_census(batch, window)?;
    // The census counts unordered pairs; the bound sums over ordered ones.
    let pair = Estimate {
        value: 2.0 * census.interior.value,
        std_error: 2.0 * census.interior.std_error,
        samples: census.interior.samples,
    };
    let input = ChenSteinInput::new(params, mu_n.value, mu_n.std_error, pair.value, pair.std_error)?;
    let bound = chen_stein_bound(&input, params)?;
    let tv = tv_poisson(mu_n.value, mu)?;
    let avoid = stats::avoidance_probability(batch, PointFilter::BarrierE)?;
    let poisson_zero = (-mu_n.value).exp();
    let gap_se = avoid.std_error.hypot(poisson_zero * mu_n.std_error);
    Ok(vec![
        stat("mu_n", mu_n, Some(mu)),
        stat("pair_term", pair, None),
        Statistic::new("chen_stein_bound", bound.value, bound.std_error, None),
        Statistic::exact("tv_poisson", tv),
        stat("avoidance_barrier_e", avoid, Some(poisson_zero)),
        Statistic::new(
            "avoidance_gap",
            (avoid.value - poisson_zero).abs(),
            gap_se,
            Some(avoidance_gap_budget(mu_n.value, mu, bound.value)?),
        ),
    ])
}

fn bridge_entry(n: usize, statistics: Vec<Statistic>) -> Entry {
    Entry {
        label: format!("n={n}"),
        size: Some(n as u32),
        alpha: None,
        statistics,
    }
}

fn run_bridges(config: &ExperimentConfig) -> Result<(Vec<Entry>, u64)> {
    let draws = config.reps * config.n_grid.iter().map(|&n| n as u64).sum::<u64>();
    let mut entries = Vec::new();
    match config.kind {
        ExperimentKind::Ballot => {
            for (i, &n) in config.n_grid.iter().enumerate() {
                let est = bridge_below_mc(n, 0.0, config.reps, entry_seed(config.master_seed, i))?;
                let exact = ballot_exact(n as u64)?;
                let exact = *exact.numer() as f64 / *exact.denom() as f64;
                entries.push(bridge_entry(n, vec![stat("below_zero", est, Some(exact))]));
            }
        }
        ExperimentKind::Perturbation => {
            let report = perturbation_check(
                &config.n_grid,
                config.eps,
                config.reps,
                entry_seed(config.master_seed, 0),
                config.cap,
            )?;
            for row in &report.rows {
                entries.push(bridge_entry(
                    row.n,
                    vec![
                        stat("difference", row.difference, None),
                        stat("below_zero", row.at_zero, Some(1.0 / row.n as f64)),
                        Statistic::new("scaled", row.scaled, row.scaled_se, None),
                    ],
                ));
            }
            let mut summary = vec![
                Statistic::exact("c_fit", report.c_fit),
                Statistic::exact("violations", report.violations.len() as f64),
            ];
            if report.spread.is_finite() {
                summary.push(Statistic::exact("spread", report.spread));
            }
            if let Some(t) = report.trend {
                summary.push(Statistic::exact("trend_rho", t.rho));
                summary.push(Statistic::exact("trend_p_increasing", t.p_increasing));
            }
            entries.push(Entry {
                label: "envelope".into(),
                size: None,
                alpha: None,
                statistics: summary,
            });
        }
        _ => unreachable!("tree kinds"),
    }
    Ok((entries, draws))
}
