//! Seeded instance generation and the batch benchmark harness.
//!
//! # Generator contract
//!
//! Instances are derived deterministically from a 64-bit seed through a
//! SplitMix64 stream, so the same spec reproduces the same instance on any
//! platform (or in any language with 64-bit integers):
//!
//! ```text
//! next = (state += 0x9E3779B97F4A7C15;
//!         z = state; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
//!         z = (z ^ z>>27) * 0x94D049BB133111EB; z ^ z>>31)
//! ```
//!
//! An integer in `[lo, hi]` is drawn as `lo + next % (hi - lo + 1)`; an
//! event with probability `q` fires when `next < q * 2^64` (computed in
//! IEEE double). Draw order: budgets (one per buyer), then utilities in
//! row-major order, then the family-specific cost data. All drawn values
//! are small integers or quarter-integers, so both arithmetic backends see
//! exactly the same market.
//!
//! The harness solves each generated instance, verifies the result, and
//! checks the operation counters against their analytic bounds; any miss
//! fails the report and carries the serialized instance for replay.
//!
//! ```
//! use tcfisher::bench::{generate, Family, GeneratorSpec};
//! use tcfisher::numeric::Exact;
//!
//! let spec = GeneratorSpec::new(Family::UniformRandom, 3, 3, 7);
//! let a = generate::<Exact>(&spec).unwrap();
//! let b = generate::<Exact>(&spec).unwrap();
//! assert_eq!(a, b); // same seed, same market, always
//! ```

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{self, Counters, SolveConfig};
use crate::io;
use crate::model::{Cost, MarketInstance, Matrix};
use crate::numeric::Scalar;
use crate::verify;

/// SplitMix64: tiny, seedable, portable.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn in_range(&mut self, lo: i64, hi: i64) -> i64 {
        debug_assert!(lo <= hi);
        lo + (self.next_u64() % (hi - lo + 1) as u64) as i64
    }

    /// Event with probability `q`.
    pub fn chance(&mut self, q: f64) -> bool {
        (self.next_u64() as f64) < q * (u64::MAX as f64 + 1.0)
    }
}

/// Instance family. Costs model shipping (metric distances), trade
/// restrictions (blocked pairs) or per-buyer reserve prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum Family {
    /// Independent costs in quarter-unit steps.
    UniformRandom,
    /// Buyers and goods placed on an integer grid; the cost of a pair is a
    /// quarter of their Manhattan distance.
    ShippingGrid,
    /// Each pair blocked independently with probability `q`; rows are
    /// redrawn until every buyer keeps a usable good.
    BlockedRandom { q: f64 },
    /// Each good carries a reserve surcharge that a random subset of
    /// buyers must pay.
    ReservePrice,
}

/// A reproducible instance description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Budgets are integers in this range.
    pub budget_range: (i64, i64),
    /// Utilities are integers in this range.
    pub utility_range: (i64, i64),
    /// Uniform-family costs are `k/4` for `k` in `[0, cost_quarters]`;
    /// zero makes the market cost-free.
    pub cost_quarters: i64,
}

impl GeneratorSpec {
    pub fn new(family: Family, n: usize, m: usize, seed: u64) -> Self {
        GeneratorSpec {
            family,
            n,
            m,
            seed,
            budget_range: (1, 4),
            utility_range: (1, 10),
            cost_quarters: 8,
        }
    }

    pub fn label(&self) -> String {
        let family = match &self.family {
            Family::UniformRandom => "uniform-random".to_string(),
            Family::ShippingGrid => "shipping-grid".to_string(),
            Family::BlockedRandom { q } => format!("blocked-random(q={q})"),
            Family::ReservePrice => "reserve-price".to_string(),
        };
        format!("{family} n={} m={} seed={}", self.n, self.m, self.seed)
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("generator ranges are degenerate: {0}")]
    BadRange(&'static str),
    #[error("buyer {buyer} kept no usable good after {attempts} redraws (q too high?)")]
    RejectionLimit { buyer: usize, attempts: u32 },
}

const REDRAW_LIMIT: u32 = 64;

/// Generate the instance a spec describes, identically for any backend.
pub fn generate<S: Scalar>(spec: &GeneratorSpec) -> Result<MarketInstance<S>, BenchError> {
    if spec.n == 0 || spec.m == 0 {
        return Err(BenchError::BadRange("n and m must be at least 1"));
    }
    if spec.budget_range.0 < 1 || spec.budget_range.0 > spec.budget_range.1 {
        return Err(BenchError::BadRange("budget range must be within [1, ..]"));
    }
    if spec.utility_range.0 < 1 || spec.utility_range.0 > spec.utility_range.1 {
        return Err(BenchError::BadRange("utility range must be within [1, ..]"));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let (n, m) = (spec.n, spec.m);

    let budgets: Vec<S> = (0..n)
        .map(|_| S::from_int(rng.in_range(spec.budget_range.0, spec.budget_range.1)))
        .collect();
    let mut utilities = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<S> = (0..m)
            .map(|_| S::from_int(rng.in_range(spec.utility_range.0, spec.utility_range.1)))
            .collect();
        utilities.push(row);
    }

    let costs: Vec<Vec<Cost<S>>> = match &spec.family {
        Family::UniformRandom => (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| Cost::Finite(S::from_ratio(rng.in_range(0, spec.cost_quarters), 4)))
                    .collect()
            })
            .collect(),
        Family::ShippingGrid => {
            let side = n.max(m) as i64;
            let buyers: Vec<(i64, i64)> = (0..n)
                .map(|_| (rng.in_range(0, side - 1), rng.in_range(0, side - 1)))
                .collect();
            let goods: Vec<(i64, i64)> = (0..m)
                .map(|_| (rng.in_range(0, side - 1), rng.in_range(0, side - 1)))
                .collect();
            buyers
                .iter()
                .map(|&(bx, by)| {
                    goods
                        .iter()
                        .map(|&(gx, gy)| {
                            let dist = (bx - gx).abs() + (by - gy).abs();
                            Cost::Finite(S::from_ratio(dist, 4))
                        })
                        .collect()
                })
                .collect()
        }
        Family::BlockedRandom { q } => {
            let mut rows = Vec::with_capacity(n);
            for buyer in 0..n {
                let mut attempts = 0;
                let row = loop {
                    attempts += 1;
                    let row: Vec<Cost<S>> = (0..m)
                        .map(|_| {
                            if rng.chance(*q) {
                                Cost::Blocked
                            } else {
                                Cost::Finite(S::from_ratio(
                                    rng.in_range(0, spec.cost_quarters),
                                    4,
                                ))
                            }
                        })
                        .collect();
                    if row.iter().any(|c| !c.is_blocked()) {
                        break row;
                    }
                    if attempts >= REDRAW_LIMIT {
                        return Err(BenchError::RejectionLimit {
                            buyer,
                            attempts,
                        });
                    }
                };
                rows.push(row);
            }
            rows
        }
        Family::ReservePrice => {
            // one reserve level per good, paid by a random subset of buyers
            let reserves: Vec<i64> = (0..m).map(|_| rng.in_range(1, 4)).collect();
            let mut rows = vec![Vec::with_capacity(m); n];
            for (j, halves) in reserves.iter().enumerate() {
                for row in rows.iter_mut().take(n) {
                    let pays = rng.chance(0.5);
                    row.push(Cost::Finite(if pays {
                        S::from_ratio(*halves, 2)
                    } else {
                        S::zero()
                    }));
                }
                let _ = j;
            }
            rows
        }
    };

    let inst = MarketInstance::from_parts_unchecked(
        budgets,
        Matrix::from_rows(utilities).expect("rectangular"),
        Matrix::from_rows(costs).expect("rectangular"),
        None,
        None,
        None,
    );
    debug_assert!(inst.validate().is_valid());
    Ok(inst)
}

/// Per-instance outcome of a benchmark run.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceReport {
    pub label: String,
    pub pass: bool,
    pub counters: Option<Counters>,
    /// `1 + m * ceil(log_{1+eps}(B/eps))`, the round bound enforced.
    pub rounds_bound: u64,
    /// The looser `1 + (m/eps) ln(B/eps)` form, reported for comparison.
    pub rounds_bound_natural_log: f64,
    pub walks_bound: u64,
    pub edge_drop_walks_bound: u64,
    pub verifier_residual: f64,
    pub wall_time_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Serialized instance, kept when the run failed so it can be replayed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay: Option<String>,
}

/// Aggregate ratios of observed counters to their analytic bounds; `None`
/// when the report is empty.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRatios {
    pub max_rounds_ratio: f64,
    pub max_walks_ratio: f64,
    pub max_edge_drop_walk_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub instances: Vec<InstanceReport>,
    pub all_pass: bool,
    pub aggregate: Option<BoundRatios>,
}

/// Solve one instance and grade it: verifier pass, counter bounds, timing.
pub fn bench_instance<S: Scalar>(
    label: String,
    inst: &MarketInstance<S>,
    eps: &S,
    config: &SolveConfig,
) -> InstanceReport {
    let rounds_bound = engine::rounds_bound(inst, eps);
    let walks_bound = engine::walks_bound(inst, eps);
    let edge_drop_walks_bound = inst.n() as u64 * rounds_bound;
    let eps_f = eps.to_f64();
    let b = (1.0 + eps_f) * inst.total_budget().to_f64();
    let natural = 1.0 + (inst.m() as f64 / eps_f) * (b / eps_f).ln();

    let start = Instant::now();
    let solved = engine::solve(inst, eps.clone(), config);
    let wall_time_ms = start.elapsed().as_secs_f64() * 1e3;

    match solved {
        Ok(result) => {
            let report = verify::check_approx_equilibrium(
                inst,
                &result.prices,
                &result.allocation,
                eps,
                config.verify_tol.unwrap_or(crate::numeric::DEFAULT_TOL),
            );
            let pass = report.pass;
            InstanceReport {
                label,
                pass,
                counters: Some(result.counters),
                rounds_bound,
                rounds_bound_natural_log: natural,
                walks_bound,
                edge_drop_walks_bound,
                verifier_residual: report.worst_residual(),
                wall_time_ms,
                failure: (!pass).then(|| report.to_string()),
                replay: (!pass).then(|| io::instance_to_json(inst, Some(eps))),
            }
        }
        Err(err) => InstanceReport {
            label,
            pass: false,
            counters: None,
            rounds_bound,
            rounds_bound_natural_log: natural,
            walks_bound,
            edge_drop_walks_bound,
            verifier_residual: f64::INFINITY,
            wall_time_ms,
            failure: Some(err.to_string()),
            replay: Some(io::instance_to_json(inst, Some(eps))),
        },
    }
}

/// Generate and solve every spec (in parallel), grading each run.
pub fn run_benchmark<S: Scalar>(
    specs: &[GeneratorSpec],
    eps: &S,
    config: &SolveConfig,
) -> BenchReport {
    let instances: Vec<InstanceReport> = specs
        .par_iter()
        .map(|spec| match generate::<S>(spec) {
            Ok(inst) => bench_instance(spec.label(), &inst, eps, config),
            Err(err) => InstanceReport {
                label: spec.label(),
                pass: false,
                counters: None,
                rounds_bound: 0,
                rounds_bound_natural_log: 0.0,
                walks_bound: 0,
                edge_drop_walks_bound: 0,
                verifier_residual: f64::INFINITY,
                wall_time_ms: 0.0,
                failure: Some(err.to_string()),
                replay: None,
            },
        })
        .collect();

    let all_pass = instances.iter().all(|r| r.pass);
    let aggregate = if instances.iter().any(|r| r.counters.is_some()) {
        let mut rounds: f64 = 0.0;
        let mut walks: f64 = 0.0;
        let mut drops: f64 = 0.0;
        for r in &instances {
            if let Some(c) = &r.counters {
                rounds = rounds.max(c.rounds as f64 / r.rounds_bound as f64);
                walks = walks.max(c.walks_total as f64 / r.walks_bound as f64);
                drops = drops.max(
                    c.edge_drop_walks() as f64 / (r.edge_drop_walks_bound as f64).max(1.0),
                );
            }
        }
        Some(BoundRatios {
            max_rounds_ratio: rounds,
            max_walks_ratio: walks,
            max_edge_drop_walk_ratio: drops,
        })
    } else {
        None
    };
    BenchReport {
        instances,
        all_pass,
        aggregate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_instance;
    use crate::numeric::Exact;

    #[test]
    fn same_seed_same_instance() {
        let spec = GeneratorSpec::new(Family::UniformRandom, 3, 3, 7);
        let a = generate::<Exact>(&spec).unwrap();
        let b = generate::<Exact>(&spec).unwrap();
        assert_eq!(a, b);
        // and the float view agrees value for value
        let f = generate::<f64>(&spec).unwrap();
        assert_eq!(a.budget(0).to_f64(), *f.budget(0));
        assert_eq!(a.utility(2, 2).to_f64(), *f.utility(2, 2));
    }

    #[test]
    fn full_blocking_is_rejected() {
        let spec = GeneratorSpec::new(Family::BlockedRandom { q: 1.0 }, 2, 2, 3);
        assert!(matches!(
            generate::<Exact>(&spec),
            Err(BenchError::RejectionLimit { .. })
        ));
        // moderate blocking generates valid instances
        let spec = GeneratorSpec::new(Family::BlockedRandom { q: 0.4 }, 4, 4, 3);
        let inst = generate::<Exact>(&spec).unwrap();
        assert!(inst.validate().is_valid());
    }

    #[test]
    fn shipping_costs_form_a_metric() {
        let spec = GeneratorSpec::new(Family::ShippingGrid, 4, 4, 1);
        let inst = generate::<Exact>(&spec).unwrap();
        let cost = |i: usize, j: usize| -> Exact {
            match inst.cost(i, j) {
                Cost::Finite(c) => c.clone(),
                Cost::Blocked => unreachable!(),
            }
        };
        // four-point condition of a bipartite metric:
        // d(i,j) <= d(i,j') + d(i',j') + d(i',j)
        for i in 0..4 {
            for j in 0..4 {
                for i2 in 0..4 {
                    for j2 in 0..4 {
                        assert!(cost(i, j) <= cost(i, j2) + cost(i2, j2) + cost(i2, j));
                    }
                }
            }
        }
    }

    #[test]
    fn reserve_prices_are_per_good_levels() {
        let spec = GeneratorSpec::new(Family::ReservePrice, 5, 3, 11);
        let inst = generate::<Exact>(&spec).unwrap();
        for j in 0..3 {
            let mut seen = std::collections::BTreeSet::new();
            for i in 0..5 {
                if let Cost::Finite(c) = inst.cost(i, j) {
                    if c.is_positive() {
                        seen.insert(c.render());
                    }
                }
            }
            assert!(seen.len() <= 1, "good {j} has mixed reserves: {seen:?}");
        }
    }

    #[test]
    fn known_instance_benchmarks_clean() {
        let doc = include_str!("../fixtures/irrational_equilibrium.json");
        let parsed = parse_instance::<Exact>(doc).unwrap();
        let eps = Exact::from_ratio(1, 100);
        let report = bench_instance(
            "irrational".into(),
            &parsed.instance,
            &eps,
            &SolveConfig::default(),
        );
        assert!(report.pass, "{:?}", report.failure);
        let counters = report.counters.unwrap();
        assert!(counters.rounds <= report.rounds_bound);
        assert!(counters.walks_total <= report.walks_bound);
    }

    #[test]
    fn small_batch_respects_all_bounds() {
        let specs: Vec<GeneratorSpec> = (0..10)
            .map(|s| GeneratorSpec::new(Family::UniformRandom, 1 + s as usize % 4, 3, s))
            .collect();
        let eps = Exact::from_ratio(1, 20);
        let report = run_benchmark(&specs, &eps, &SolveConfig::default());
        assert!(report.all_pass);
        let agg = report.aggregate.unwrap();
        assert!(agg.max_rounds_ratio <= 1.0);
        assert!(agg.max_walks_ratio <= 1.0);
    }

    #[test]
    fn blocked_and_reserve_families_solve_cleanly() {
        let mut specs = Vec::new();
        for seed in 0..4u64 {
            specs.push(GeneratorSpec::new(
                Family::BlockedRandom { q: 0.35 },
                3,
                3,
                seed,
            ));
            specs.push(GeneratorSpec::new(Family::ReservePrice, 3, 3, seed));
            specs.push(GeneratorSpec::new(Family::ShippingGrid, 3, 3, seed));
        }
        let eps = Exact::from_ratio(1, 20);
        let report = run_benchmark(&specs, &eps, &SolveConfig::default());
        for r in &report.instances {
            assert!(r.pass, "{}: {:?}", r.label, r.failure);
        }
    }

    #[test]
    fn empty_spec_list_gives_empty_report() {
        let report = run_benchmark::<Exact>(&[], &Exact::from_ratio(1, 20), &SolveConfig::default());
        assert!(report.instances.is_empty());
        assert!(report.aggregate.is_none());
        assert!(report.all_pass);
    }

    #[test]
    fn replay_reproduces_counters_exactly() {
        let spec = GeneratorSpec::new(Family::UniformRandom, 4, 4, 42);
        let inst = generate::<Exact>(&spec).unwrap();
        let eps = Exact::from_ratio(1, 20);
        let first = engine::solve(&inst, eps.clone(), &SolveConfig::default()).unwrap();
        let text = io::instance_to_json(&inst, None);
        let replayed = parse_instance::<Exact>(&text).unwrap().instance;
        let second = engine::solve(&replayed, eps, &SolveConfig::default()).unwrap();
        assert_eq!(first.counters, second.counters);
        assert_eq!(first.prices, second.prices);
    }
}
