//! Depth-first sampling of the full hierarchical field.
//!
//! A replicate is a walk over the `b`-ary tree of depth `K` in preorder. The
//! root has rank 0 and carries no increment; the child `c` (0-based) of the
//! node with rank `r` at depth `d` has rank `r + 1 + c·size(d + 1)`, where
//! `size(d)` counts the nodes of a subtree rooted at depth `d`. The increment
//! of the node with rank `r` is `√m · Z_r` with `Z_r` read from position `r`
//! of the replicate's [`NodeStream`]. Every draw is therefore pinned to its
//! node, whatever is extracted and whichever thread runs the replicate.
//!
//! Internal nodes are materialized one at a time on an explicit stack of
//! depth `K`. The `b` leaves below a parent occupy consecutive ranks and are
//! scanned as a block: their raw words are compared against a threshold
//! derived from the window (or from the current top-k floor), and only the
//! words that can matter are converted to Gaussians. Because the word →
//! Gaussian map is monotone, the block maximum comes from the largest word
//! alone. Results are bit-identical to converting every leaf.
//!
//! No pruning by barrier happens: points that violate a barrier are still
//! reported, with the corresponding flag cleared.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{centering, Barrier, Interval, ModelParams};
use crate::rng::{gaussian_from_raw, raw_floor, NodeStream, SeedSpec};

/// Default cap on the number of leaves a single replicate may visit.
pub const DEFAULT_LEAF_BUDGET: u64 = 1 << 28;

/// Default cap on the number of points a single replicate may return.
pub const DEFAULT_POINT_BUDGET: usize = 1 << 22;

/// One configuration's path: prefix sums `S_0 = 0, …, S_K = X_σ` and labels
/// `σ_1, …, σ_K` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub prefix_sums: Vec<f64>,
    pub labels: Vec<u64>,
}

impl PathState {
    pub fn energy(&self) -> f64 {
        *self.prefix_sums.last().expect("prefix sums include S_0")
    }
}

/// A leaf whose recentered energy fell in the sampling window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalPoint {
    /// `X_σ − a_N`.
    pub recentered: f64,
    pub path: PathState,
    /// `S_k <= U_N(k)` for every `1 <= k <= K`.
    pub below_u: bool,
    /// `S_k <= F(k)` for every `1 <= k <= K`, with `F` the sampler's filter
    /// barrier (the lowered barrier `E_N` by default).
    pub below_e: bool,
}

/// One replicate: every point of the extremal process inside the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointProcessSample {
    pub points: Vec<ExtremalPoint>,
    pub window: Interval,
    pub params: ModelParams,
    pub seed: SeedSpec,
    /// Global maximum of `X_σ` (not recentered).
    pub max_energy: f64,
    /// Whether any node of the tree has `S_k > U_N(k)`.
    pub any_path_above_u: bool,
    /// Stream positions consumed, one per node below the root.
    pub draws: u64,
}

impl PointProcessSample {
    /// Number of points in `window`, optionally restricted to paths below the
    /// filter barrier (`below_e`) or the envelope (`below_u`).
    pub fn count_in(&self, window: &Interval, filter: PointFilter) -> usize {
        self.points
            .iter()
            .filter(|p| window.contains(p.recentered) && filter.accepts(p))
            .count()
    }
}

/// Which points a statistic counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointFilter {
    Unbarred,
    BarrierU,
    BarrierE,
}

impl PointFilter {
    #[inline]
    pub fn accepts(self, point: &ExtremalPoint) -> bool {
        match self {
            PointFilter::Unbarred => true,
            PointFilter::BarrierU => point.below_u,
            PointFilter::BarrierE => point.below_e,
        }
    }
}

/// Precomputed tree geometry and thresholds shared by every replicate.
#[derive(Clone, Debug)]
struct Plan {
    params: ModelParams,
    depth: usize,
    branching: u64,
    sqrt_m: f64,
    centering: f64,
    envelope: Vec<f64>,
    filter: Vec<f64>,
    /// `subtree[d]` = nodes in a subtree rooted at depth `d`.
    subtree: Vec<u64>,
}

impl Plan {
    fn new(params: &ModelParams, filter: &Barrier, budget: u64) -> Result<Self> {
        let leaves = params.leaf_count().unwrap_or(u128::MAX);
        if leaves > u128::from(budget) {
            return Err(Error::BudgetExceeded { leaves, budget });
        }
        let depth = params.scales() as usize;
        let branching = params.branching();
        let mut subtree = vec![1u64; depth + 1];
        for d in (0..depth).rev() {
            subtree[d] = 1 + branching * subtree[d + 1];
        }
        Ok(Self {
            params: *params,
            depth,
            branching,
            sqrt_m: params.increment_variance().sqrt(),
            centering: centering(params)?,
            envelope: Barrier::Envelope.table(params)?,
            filter: filter.table(params)?,
            subtree,
        })
    }

    #[inline]
    fn child_rank(&self, parent: u64, depth: usize, child: u64) -> u64 {
        parent + 1 + child * self.subtree[depth + 1]
    }
}

/// Walk state for internal nodes, one slot per depth `0..K`.
struct Walk {
    rank: Vec<u64>,
    next: Vec<u64>,
    sums: Vec<f64>,
    labels: Vec<u64>,
    ok_u: Vec<bool>,
    ok_e: Vec<bool>,
    any_above_u: bool,
    draws: u64,
}

impl Walk {
    fn new(depth: usize) -> Self {
        Self {
            rank: vec![0; depth],
            next: vec![0; depth],
            sums: vec![0.0; depth],
            labels: vec![0; depth],
            ok_u: vec![true; depth],
            ok_e: vec![true; depth],
            any_above_u: false,
            draws: 0,
        }
    }
}

/// Drives the preorder walk, calling `on_block(walk)` for every parent of
/// leaves (depth `K − 1`).
fn walk_tree(plan: &Plan, stream: &NodeStream, mut on_block: impl FnMut(&mut Walk)) -> Walk {
    let last = plan.depth - 1;
    let mut walk = Walk::new(plan.depth);
    let mut d = 0usize;
    loop {
        if d == last {
            on_block(&mut walk);
            if d == 0 {
                break;
            }
            d -= 1;
            continue;
        }
        if walk.next[d] == plan.branching {
            if d == 0 {
                break;
            }
            d -= 1;
            continue;
        }
        let c = walk.next[d];
        walk.next[d] += 1;
        let rank = plan.child_rank(walk.rank[d], d, c);
        // S_{d+1} = S_d + √m·Z; scale index of the child is d + 1.
        let s = walk.sums[d] + plan.sqrt_m * stream.gaussian(rank);
        let scale = d + 1;
        walk.draws += 1;
        if s > plan.envelope[scale] {
            walk.any_above_u = true;
        }
        walk.ok_u[scale] = walk.ok_u[d] && s <= plan.envelope[scale];
        walk.ok_e[scale] = walk.ok_e[d] && s <= plan.filter[scale];
        walk.sums[scale] = s;
        walk.labels[d] = c + 1;
        walk.rank[scale] = rank;
        walk.next[scale] = 0;
        d = scale;
    }
    walk
}

/// Samples replicates of the extremal process restricted to one window.
#[derive(Clone, Debug)]
pub struct WindowSampler {
    plan: Plan,
    window: Interval,
    point_budget: usize,
}

impl WindowSampler {
    /// `filter` is the barrier behind [`ExtremalPoint::below_e`].
    pub fn new(params: &ModelParams, window: Interval, filter: &Barrier) -> Result<Self> {
        Self::with_budget(params, window, filter, DEFAULT_LEAF_BUDGET)
    }

    pub fn with_budget(
        params: &ModelParams,
        window: Interval,
        filter: &Barrier,
        leaf_budget: u64,
    ) -> Result<Self> {
        Ok(Self {
            plan: Plan::new(params, filter, leaf_budget)?,
            window,
            point_budget: DEFAULT_POINT_BUDGET,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.plan.params
    }

    pub fn window(&self) -> &Interval {
        &self.window
    }

    pub fn centering(&self) -> f64 {
        self.plan.centering
    }

    pub fn sample(&self, seed: SeedSpec) -> Result<PointProcessSample> {
        let plan = &self.plan;
        let stream = NodeStream::new(seed);
        let last = plan.depth - 1;
        let top = plan.depth;
        let u_top = plan.envelope[top];
        let f_top = plan.filter[top];
        let window = self.window;
        let target_low = plan.centering + window.lower();

        let mut points = Vec::new();
        let mut candidates: Vec<(u64, u64)> = Vec::new();
        let mut max_energy = f64::NEG_INFINITY;
        let mut overflow = false;

        let walk = walk_tree(plan, &stream, |walk| {
            let parent = walk.sums[last];
            let first = walk.rank[last] + 1;
            let floor = raw_floor((target_low - parent) / plan.sqrt_m);

            candidates.clear();
            let mut best = 0u64;
            for (c, w) in (0..plan.branching).zip(stream.run(first)) {
                best = best.max(w);
                if w >= floor {
                    candidates.push((c, w));
                }
            }
            walk.draws += plan.branching;

            let block_max = parent + plan.sqrt_m * gaussian_from_raw(best);
            if block_max > u_top {
                walk.any_above_u = true;
            }
            if block_max > max_energy {
                max_energy = block_max;
            }

            for &(c, w) in &candidates {
                let energy = parent + plan.sqrt_m * gaussian_from_raw(w);
                let recentered = energy - plan.centering;
                if !window.contains(recentered) {
                    continue;
                }
                if points.len() == self.point_budget {
                    overflow = true;
                    return;
                }
                let mut prefix_sums = Vec::with_capacity(top + 1);
                prefix_sums.extend_from_slice(&walk.sums);
                prefix_sums.push(energy);
                let mut labels = Vec::with_capacity(top);
                labels.extend_from_slice(&walk.labels[..last]);
                labels.push(c + 1);
                points.push(ExtremalPoint {
                    recentered,
                    path: PathState {
                        prefix_sums,
                        labels,
                    },
                    below_u: walk.ok_u[last] && energy <= u_top,
                    below_e: walk.ok_e[last] && energy <= f_top,
                });
            }
        });

        if overflow {
            return Err(Error::Degenerate(format!(
                "more than {} points in window [{}, {}]; narrow the window",
                self.point_budget,
                window.lower(),
                window.upper()
            )));
        }
        Ok(PointProcessSample {
            points,
            window,
            params: plan.params,
            seed,
            max_energy,
            any_path_above_u: walk.any_above_u,
            draws: walk.draws,
        })
    }
}

/// All leaves of one replicate whose recentered energy lies in `window`, with
/// barrier flags for the envelope `U_N` and for `filter`.
pub fn sample_window(
    params: &ModelParams,
    window: Interval,
    filter: &Barrier,
    seed: SeedSpec,
) -> Result<PointProcessSample> {
    WindowSampler::new(params, window, filter)?.sample(seed)
}

/// One of the `k` largest leaf energies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedLeaf {
    pub energy: f64,
    pub labels: Vec<u64>,
}

#[derive(Clone, Copy, Debug)]
struct HeapEntry {
    energy: f64,
    leaf: u64,
}

// Min-heap order: smallest energy on top; among equal energies the later
// leaf sits on top so that earlier leaves win ties.
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .energy
            .total_cmp(&self.energy)
            .then(self.leaf.cmp(&other.leaf))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

/// The `k` largest leaf energies of the replicate `seed`, sorted descending
/// (ties by ascending label order). Same realization as [`sample_window`].
pub fn sample_topk(params: &ModelParams, k: u64, seed: SeedSpec) -> Result<Vec<RankedLeaf>> {
    sample_topk_with_budget(params, k, seed, DEFAULT_LEAF_BUDGET)
}

pub fn sample_topk_with_budget(
    params: &ModelParams,
    k: u64,
    seed: SeedSpec,
    leaf_budget: u64,
) -> Result<Vec<RankedLeaf>> {
    let plan = Plan::new(params, &Barrier::Envelope, leaf_budget)?;
    let leaves = params.leaf_count().expect("budget bounds the leaf count") as u64;
    if k == 0 || k > leaves {
        return Err(Error::out_of_range("k", k, format!("1..={leaves}")));
    }
    let stream = NodeStream::new(seed);
    let last = plan.depth - 1;
    let b = plan.branching;
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k as usize);
    let mut block_index = 0u64;

    walk_tree(&plan, &stream, |walk| {
        let parent = walk.sums[last];
        let first = walk.rank[last] + 1;
        let floor = match heap.peek() {
            Some(min) if heap.len() as u64 == k => raw_floor((min.energy - parent) / plan.sqrt_m),
            _ => 0,
        };
        for (c, w) in (0..b).zip(stream.run(first)) {
            if w < floor {
                continue;
            }
            let entry = HeapEntry {
                energy: parent + plan.sqrt_m * gaussian_from_raw(w),
                leaf: block_index * b + c,
            };
            if (heap.len() as u64) < k {
                heap.push(entry);
            } else if entry.energy > heap.peek().expect("heap is full").energy {
                heap.pop();
                heap.push(entry);
            }
        }
        block_index += 1;
    });

    let mut entries = heap.into_vec();
    entries.sort_by(|a, b| b.energy.total_cmp(&a.energy).then(a.leaf.cmp(&b.leaf)));
    Ok(entries
        .into_iter()
        .map(|e| RankedLeaf {
            energy: e.energy,
            labels: leaf_labels(e.leaf, b, plan.depth),
        })
        .collect())
}

/// Decodes a 0-based leaf index (preorder among leaves) into 1-based labels.
pub fn leaf_labels(mut leaf: u64, branching: u64, depth: usize) -> Vec<u64> {
    let mut labels = vec![0; depth];
    for slot in labels.iter_mut().rev() {
        *slot = leaf % branching + 1;
        leaf /= branching;
    }
    labels
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Err(Error::out_of_range("threads", 0, ">= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Degenerate(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// `reps` independent replicates; replicate `i` uses `SeedSpec(master_seed,
/// i)`. The output is ordered by replicate index and does not depend on
/// `threads`.
pub fn replicate_batch(
    sampler: &WindowSampler,
    reps: u64,
    master_seed: u64,
    threads: usize,
) -> Result<Vec<PointProcessSample>> {
    if reps == 0 {
        return Err(Error::out_of_range("reps", 0, ">= 1"));
    }
    with_threads(threads, || {
        (0..reps)
            .into_par_iter()
            .map(|i| sampler.sample(SeedSpec::new(master_seed, i)))
            .collect::<Result<Vec<_>>>()
    })?
}
