//! The ascending-price auction.
//!
//! The run is organized in rounds. Each round fixes the buyers' demanded
//! goods, snapshots the demand graph, and performs transfer walks until a
//! walk raises a price (ending the round) or no buyer has surplus left
//! (ending the run). The final allocation merges the two price tiers.
//!
//! Prices start at `eps` and only move up, each by a factor `1 + eps` at a
//! time, so good `j`'s price is always `eps * (1+eps)^{k_j}`. A price is
//! raised only when the good is fully allocated and still demanded by a
//! buyer with unspent budget; since the price-part of all spending is at
//! most the sum of budgets, each exponent (and with it the total number
//! of rounds and walks) is bounded in advance. [`solve`] checks those
//! bounds and (optionally) every state invariant after every event, and
//! reports any miss as a hard error rather than a degraded answer.
//!
//! ```
//! use tcfisher::engine::{self, solve, SolveConfig};
//! use tcfisher::io;
//!
//! let doc = r#"{
//!     "goods": [{"id": "g"}],
//!     "buyers": [
//!         {"id": "near", "budget": 1, "utilities": [1], "costs": [0]},
//!         {"id": "far",  "budget": 1, "utilities": [1], "costs": ["1/2"]}
//!     ]
//! }"#;
//! let inst = io::parse_instance::<f64>(doc).unwrap().instance;
//! let result = solve(&inst, 1e-3, &SolveConfig::default()).unwrap();
//!
//! // market clearing 1/p + 1/(p + 1/2) = 1 has root (1.5 + sqrt(4.25))/2
//! let root = (1.5 + 4.25f64.sqrt()) / 2.0;
//! assert!((result.prices.get(0) - root).abs() / root < 0.01);
//! assert!(result.counters.rounds <= engine::rounds_bound(&inst, &1e-3));
//! ```

mod graph;
mod state;
mod trace;
mod transfer;
mod walk;

pub use graph::RoundGraph;
pub use state::{Counters, SolverState};
pub use trace::TraceRecord;
pub use transfer::{
    transfer_cycle, transfer_edge, transfer_path, CycleOutcome, EdgeOutcome, PathOutcome,
};
pub use walk::{transfer_walk, WalkEvent};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Allocation, MarketInstance, ModelError, PriceVector};
use crate::numeric::Scalar;
use crate::verify;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("epsilon must be positive")]
    InvalidEpsilon,
    #[error("invalid instance:\n{0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("operation contract violated: {0}")]
    Contract(&'static str),
    #[error("round limit {limit} exceeded; state dump: {dump}")]
    RoundLimit { limit: u64, dump: String },
    #[error("counter bound violated: {0}")]
    BoundViolation(String),
    #[error("invariant check failed after an event:\n{0}")]
    InvariantViolation(String),
    #[error("solution failed its own equilibrium check:\n{0}")]
    PostCheckFailed(String),
}

/// Knobs for a run. `tol` is the float backend's comparison tolerance
/// inside the engine; it is deliberately tighter than the default
/// verification tolerance so that terminating surpluses sit well inside
/// what the verifier accepts. Exact runs ignore both.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Engine comparison tolerance (float backend).
    pub tol: f64,
    /// Tolerance for the final self-check against the equilibrium
    /// conditions; `None` means the backend default.
    pub verify_tol: Option<f64>,
    /// Re-check all state invariants after every walk event.
    pub check_invariants: bool,
    /// Enforce the round/walk counter bounds as hard errors.
    pub check_bounds: bool,
    /// Override the round guard (default: twice the analytic bound).
    pub max_rounds: Option<u64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol: 1e-11,
            verify_tol: None,
            check_invariants: true,
            check_bounds: true,
            max_rounds: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    /// All surpluses exhausted; the tiers were merged.
    SurplusExhausted,
}

/// Prices, merged allocation and counters of a finished run.
#[derive(Debug, Clone)]
pub struct EquilibriumResult<S> {
    pub prices: PriceVector<S>,
    pub allocation: Allocation<S>,
    pub counters: Counters,
    pub termination: TerminationReason,
}

/// Ceiling of `log_{1+eps}(B / eps)` with `B = (1+eps) * sum of budgets`:
/// the highest exponent any price can reach.
pub fn price_exponent_bound<S: Scalar>(inst: &MarketInstance<S>, eps: &S) -> u64 {
    let eps_f = eps.to_f64();
    let b = (1.0 + eps_f) * inst.total_budget().to_f64();
    let v = (b / eps_f).ln() / (1.0 + eps_f).ln();
    if v <= 0.0 {
        return 0;
    }
    // treat near-integers as exact to keep the ceiling stable
    if (v - v.round()).abs() < 1e-9 {
        v.round() as u64
    } else {
        v.ceil() as u64
    }
}

/// Upper bound on the number of rounds: one raise per round except the
/// last, each good's exponent capped by [`price_exponent_bound`].
pub fn rounds_bound<S: Scalar>(inst: &MarketInstance<S>, eps: &S) -> u64 {
    1 + inst.m() as u64 * price_exponent_bound(inst, eps)
}

/// Upper bound on the total number of transfer walks: `2nR + n + m + R`.
pub fn walks_bound<S: Scalar>(inst: &MarketInstance<S>, eps: &S) -> u64 {
    let r = rounds_bound(inst, eps);
    let n = inst.n() as u64;
    let m = inst.m() as u64;
    2 * n * r + n + m + r
}

fn default_round_guard<S: Scalar>(inst: &MarketInstance<S>, eps: &S) -> u64 {
    let eps_f = eps.to_f64();
    let b = (1.0 + eps_f) * inst.total_budget().to_f64();
    let v = (inst.m() as f64 / eps_f) * (b / eps_f).ln();
    2 * (1 + v.ceil().max(0.0) as u64)
}

fn dump_state<S: Scalar>(state: &SolverState<S>) -> String {
    let prices: Vec<f64> = state.prices.0.iter().map(Scalar::to_f64).collect();
    let surpluses: Vec<f64> = state.r.iter().map(Scalar::to_f64).collect();
    format!(
        "prices={prices:?} surpluses={surpluses:?} counters={:?}",
        state.counters
    )
}

fn check_state<S: Scalar>(
    state: &SolverState<S>,
    entries: &[Result<crate::model::DemandEntry<S>, crate::model::ModelError>],
) -> Result<(), SolveError> {
    let report = verify::check_invariants_using(state, entries, state.tol);
    if report.pass {
        Ok(())
    } else {
        Err(SolveError::InvariantViolation(report.to_string()))
    }
}

/// Run rounds on an existing state until every surplus is exhausted.
///
/// The state may be freshly initialized or a hand-built mid-run
/// configuration sitting at a round boundary. `observer` sees one trace
/// record per walk event.
pub fn run_rounds<S: Scalar>(
    state: &mut SolverState<S>,
    config: &SolveConfig,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<(), SolveError> {
    let round_guard = config
        .max_rounds
        .unwrap_or_else(|| default_round_guard(&state.inst, &state.eps));
    // generous walk guard: the analytic bound, doubled
    let walk_guard = 2 * walks_bound(&state.inst, &state.eps) + 16;

    'rounds: loop {
        state.counters.rounds += 1;
        if state.counters.rounds > round_guard {
            return Err(SolveError::RoundLimit {
                limit: round_guard,
                dump: dump_state(state),
            });
        }
        state.fix_pi()?;
        // demand entries are constant between raises: clone once per round
        // for the per-event invariant checks
        let round_entries: Vec<_> = if config.check_invariants {
            state.round_demand.iter().cloned().map(Ok).collect()
        } else {
            Vec::new()
        };
        let mut graph = RoundGraph::build(state);
        loop {
            let event = transfer_walk(state, &mut graph)?;
            observer(&trace::record(state, &event));
            if config.check_invariants {
                check_state(state, &round_entries)?;
            }
            match event {
                WalkEvent::NoSurplusNode => break 'rounds,
                WalkEvent::PriceRaised { .. } => continue 'rounds,
                _ => {
                    if state.counters.walks_total > walk_guard {
                        return Err(SolveError::BoundViolation(format!(
                            "walk guard {walk_guard} exceeded: {}",
                            dump_state(state)
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn enforce_counter_bounds<S: Scalar>(state: &SolverState<S>) -> Result<(), SolveError> {
    let c = &state.counters;
    let n = state.n() as u64;
    let m = state.m() as u64;
    let r_bound = rounds_bound(&state.inst, &state.eps);
    let checks: [(&str, u64, u64); 6] = [
        ("rounds <= 1 + m*ceil(log_{1+eps}(B/eps))", c.rounds, r_bound),
        ("price raises <= R - 1", c.price_raises, r_bound - 1),
        ("supply-exhausting walks <= m", c.walks_fed_supply, m),
        ("edge-drop walks <= nR", c.edge_drop_walks(), n * r_bound),
        (
            "surplus-exhausting walks <= n + nR",
            c.exhaustion_walks(),
            n + n * r_bound,
        ),
        (
            "total walks <= 2nR + n + m + R",
            c.walks_total,
            walks_bound(&state.inst, &state.eps),
        ),
    ];
    for (label, actual, bound) in checks {
        if actual > bound {
            return Err(SolveError::BoundViolation(format!(
                "{label}: {actual} > {bound}"
            )));
        }
    }
    if c.edge_drops > n * r_bound {
        return Err(SolveError::BoundViolation(format!(
            "edge drops <= nR: {} > {}",
            c.edge_drops,
            n * r_bound
        )));
    }
    // the sharpest form: every good's exponent stays under the ladder cap
    let k_bound = price_exponent_bound(&state.inst, &state.eps);
    if let Some((j, &k)) = state
        .price_exponent
        .iter()
        .enumerate()
        .max_by_key(|&(_, &k)| k)
    {
        if u64::from(k) > k_bound {
            return Err(SolveError::BoundViolation(format!(
                "price exponent of good {j} is {k} > ceil(log_{{1+eps}}(B/eps)) = {k_bound}"
            )));
        }
    }
    if c.by_event_sum() != c.walks_total || c.price_raises != c.rounds - 1 {
        return Err(SolveError::BoundViolation(format!(
            "counter bookkeeping inconsistent: {c:?}"
        )));
    }
    Ok(())
}

/// Merge tiers and package the result, enforcing counter bounds and the
/// approximate-equilibrium conditions when the config asks for it.
pub fn finalize<S: Scalar>(
    state: &SolverState<S>,
    config: &SolveConfig,
) -> Result<EquilibriumResult<S>, SolveError> {
    if config.check_bounds {
        enforce_counter_bounds(state)?;
    }
    let allocation = state.merge_tiers()?;
    let result = EquilibriumResult {
        prices: state.prices.clone(),
        allocation,
        counters: state.counters.clone(),
        termination: TerminationReason::SurplusExhausted,
    };
    if config.check_invariants || config.check_bounds {
        let tol = config.verify_tol.unwrap_or(crate::numeric::DEFAULT_TOL);
        let report = verify::check_approx_equilibrium(
            &state.inst,
            &result.prices,
            &result.allocation,
            &state.eps,
            tol,
        );
        if !report.pass {
            return Err(SolveError::PostCheckFailed(report.to_string()));
        }
    }
    Ok(result)
}

/// Compute an approximate equilibrium for `inst` at accuracy `eps`.
pub fn solve<S: Scalar>(
    inst: &MarketInstance<S>,
    eps: S,
    config: &SolveConfig,
) -> Result<EquilibriumResult<S>, SolveError> {
    solve_with_observer(inst, eps, config, &mut |_| {})
}

/// [`solve`], streaming a trace record per walk event to `observer`.
pub fn solve_with_observer<S: Scalar>(
    inst: &MarketInstance<S>,
    eps: S,
    config: &SolveConfig,
    observer: &mut dyn FnMut(&TraceRecord),
) -> Result<EquilibriumResult<S>, SolveError> {
    let mut state = SolverState::initialize(inst, eps, config.tol)?;
    run_rounds(&mut state, config, observer)?;
    finalize(&state, config)
}
