//! Mutable solver state: prices, two-tier allocations, surpluses.
//!
//! During a run a good `j` may be held at two price tiers at once: the
//! matrix `h` holds quantities charged at the current price `p_j`, the
//! matrix `y` holds quantities charged at the previous price
//! `p_j / (1 + eps)`. Raising a price shifts the current tier down into
//! `y`; reallocations always take from `y` and give at the current price.
//!
//! The state maintains these invariants between operations:
//!
//! * every surplus `r_i >= 0`;
//! * every price `p_j >= eps`, with `p_j = eps * (1 + eps)^k_j`;
//! * a good is either priced `eps` or fully allocated (`z_j = 0`);
//! * any held good is approximately most desirable for its holder
//!   (within a factor `1 + eps` of the holder's bang-per-buck);
//! * `z_j = 1 - sum_i (h_ij + y_ij)` and
//!   `r_i = b_i - sum_j (p_j + c_ij) h_ij - sum_j (p_j/(1+eps) + c_ij) y_ij`.

use serde::Serialize;

use crate::model::{Allocation, Cost, DemandEntry, MarketInstance, Matrix, PriceVector};
use crate::numeric::Scalar;

use super::SolveError;

/// Execution counters, split by the event that ended each transfer walk.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Counters {
    /// Rounds started (the final round raises no price).
    pub rounds: u64,
    /// Price raises; always `rounds - 1` at termination.
    pub price_raises: u64,
    /// All transfer walks (the terminating empty scan is not a walk).
    pub walks_total: u64,
    /// Walks that ended by raising a price.
    pub walks_price_raise: u64,
    /// Walks that ended feeding a sink from unallocated supply, exhausting it.
    pub walks_fed_supply: u64,
    /// Walks that ended feeding a sink from unallocated supply, zeroing the
    /// sink's surplus with supply left over.
    pub walks_fed_exhausted: u64,
    /// Cycle resolutions that zeroed every surplus on the cycle.
    pub walks_cycle_zeroed: u64,
    /// Cycle resolutions that ended with an edge dropping out.
    pub walks_cycle_dropped: u64,
    /// Walks cut short by an edge dropping during a path transfer.
    pub walks_path_dropped: u64,
    /// Float mode only: walks whose path surpluses all fell below threshold.
    pub walks_below_threshold: u64,
    /// Lower-tier holdings driven exactly to zero (graph edge removals).
    pub edge_drops: u64,
}

impl Counters {
    /// Walks that ended with an edge dropping out of the graph.
    pub fn edge_drop_walks(&self) -> u64 {
        self.walks_path_dropped + self.walks_cycle_dropped
    }

    /// Walks that ended with every node on the path at zero surplus.
    pub fn exhaustion_walks(&self) -> u64 {
        self.walks_fed_exhausted + self.walks_cycle_zeroed + self.walks_below_threshold
    }

    pub fn by_event_sum(&self) -> u64 {
        self.walks_price_raise
            + self.walks_fed_supply
            + self.walks_fed_exhausted
            + self.walks_cycle_zeroed
            + self.walks_cycle_dropped
            + self.walks_path_dropped
            + self.walks_below_threshold
    }
}

/// Full state of a run. Fields are public for inspection; mutate only
/// through the engine operations unless constructing test fixtures.
#[derive(Debug, Clone)]
pub struct SolverState<S> {
    pub inst: MarketInstance<S>,
    pub eps: S,
    pub one_plus_eps: S,
    /// Current price of each good, equal to `eps * (1+eps)^price_exponent`.
    pub prices: PriceVector<S>,
    pub price_exponent: Vec<u32>,
    /// Current-tier allocation, charged at `p_j`.
    pub h: Matrix<S>,
    /// Lower-tier allocation, charged at `p_j / (1+eps)`.
    pub y: Matrix<S>,
    /// Unallocated amount of each good.
    pub z: Vec<S>,
    /// Unspent budget of each buyer.
    pub r: Vec<S>,
    /// The good each buyer pursues this round (min-index demand-set member).
    pub pi: Vec<usize>,
    /// Each buyer's bang-per-buck and demand set at the round's prices,
    /// refreshed by [`SolverState::fix_pi`]. Empty before the first round.
    pub round_demand: Vec<DemandEntry<S>>,
    pub counters: Counters,
    /// Comparison tolerance for the float backend; ignored by exact.
    pub tol: f64,
}

impl<S: Scalar> SolverState<S> {
    /// Start a run: all prices at `eps`, allocations empty, surpluses at
    /// the full budgets.
    pub fn initialize(
        inst: &MarketInstance<S>,
        eps: S,
        tol: f64,
    ) -> Result<Self, SolveError> {
        if !eps.is_positive() {
            return Err(SolveError::InvalidEpsilon);
        }
        let report = inst.validate();
        if !report.is_valid() {
            return Err(SolveError::InvalidInstance(report.to_string()));
        }
        let n = inst.n();
        let m = inst.m();
        Ok(SolverState {
            inst: inst.clone(),
            one_plus_eps: S::one() + eps.clone(),
            prices: PriceVector(vec![eps.clone(); m]),
            eps,
            price_exponent: vec![0; m],
            h: Matrix::filled(n, m, S::zero()),
            y: Matrix::filled(n, m, S::zero()),
            z: vec![S::one(); m],
            r: inst.budgets().to_vec(),
            pi: vec![0; n],
            round_demand: Vec::new(),
            counters: Counters::default(),
            tol,
        })
    }

    pub fn n(&self) -> usize {
        self.inst.n()
    }

    pub fn m(&self) -> usize {
        self.inst.m()
    }

    /// Price of the lower tier of good `j`.
    pub fn price_lower(&self, j: usize) -> S {
        self.prices.get(j).clone() / self.one_plus_eps.clone()
    }

    /// Effective current-tier price of good `j` for buyer `i`. The engine
    /// only calls this on demand-set pairs, which are never blocked.
    pub(crate) fn effective(&self, i: usize, j: usize) -> Result<S, SolveError> {
        self.inst
            .effective_price(&self.prices, i, j)
            .ok_or(SolveError::Contract("effective price of a blocked pair"))
    }

    pub(crate) fn effective_lower(&self, i: usize, j: usize) -> Result<S, SolveError> {
        match self.inst.cost(i, j) {
            Cost::Finite(c) => Ok(self.price_lower(j) + c.clone()),
            Cost::Blocked => Err(SolveError::Contract("lower-tier price of a blocked pair")),
        }
    }

    /// Whether buyer `i` still counts as carrying surplus. Exact mode
    /// demands `r_i > 0`; float mode uses the per-buyer threshold
    /// `tol * b_i`.
    pub fn has_surplus(&self, i: usize) -> bool {
        if S::EXACT {
            self.r[i].is_positive()
        } else {
            self.r[i].to_f64() > self.tol * self.inst.budget(i).to_f64()
        }
    }

    /// Lowest-index buyer with surplus, if any.
    pub fn first_with_surplus(&self) -> Option<usize> {
        (0..self.n()).find(|&i| self.has_surplus(i))
    }

    /// Recompute `pi` from the current prices. Called once per round; the
    /// choice stays fixed until the next price raise.
    pub fn fix_pi(&mut self) -> Result<(), SolveError> {
        self.round_demand.clear();
        for i in 0..self.n() {
            let entry = self.inst.compute_demand(&self.prices, i, self.tol)?;
            self.pi[i] = entry.demand_set[0];
            self.round_demand.push(entry);
        }
        Ok(())
    }

    /// Raise the price of good `j` by the factor `1 + eps`, shifting all of
    /// its current-tier holdings down to the lower tier. Surpluses do not
    /// change: existing holdings keep their old charge. Only a fully
    /// allocated good may be raised.
    pub fn raise_price(&mut self, j: usize) -> Result<(), SolveError> {
        if self.z[j].is_positive() {
            return Err(SolveError::Contract(
                "price raise on a good with unallocated supply",
            ));
        }
        for i in 0..self.n() {
            let moved = std::mem::replace(self.h.at_mut(i, j), S::zero());
            if !moved.is_zero() {
                *self.y.at_mut(i, j) = self.y.at(i, j).clone() + moved;
            }
        }
        self.prices.0[j] = self.prices.get(j).clone() * self.one_plus_eps.clone();
        self.price_exponent[j] += 1;
        self.counters.price_raises += 1;
        Ok(())
    }

    /// Merge the two allocation tiers once every surplus is exhausted.
    ///
    /// `x_ij = h_ij + ((p_j/(1+eps) + c_ij) / (p_j + c_ij)) * y_ij`, which
    /// keeps each buyer's total spend exactly equal to their budget.
    pub fn merge_tiers(&self) -> Result<Allocation<S>, SolveError> {
        for i in 0..self.n() {
            if self.has_surplus(i) {
                return Err(SolveError::Contract(
                    "tier merge requires all surpluses exhausted",
                ));
            }
        }
        let mut x = Matrix::filled(self.n(), self.m(), S::zero());
        for i in 0..self.n() {
            for j in 0..self.m() {
                let h = self.h.at(i, j).clone();
                let y = self.y.at(i, j);
                let merged = if y.is_zero() {
                    h
                } else {
                    let eff = self.effective(i, j)?;
                    let eff_low = self.effective_lower(i, j)?;
                    h + eff_low / eff * y.clone()
                };
                *x.at_mut(i, j) = merged;
            }
        }
        Ok(Allocation(x))
    }

    /// Definitional surplus of buyer `i`, recomputed from scratch.
    pub fn recompute_surplus(&self, i: usize) -> S {
        let mut spend = S::zero();
        for j in 0..self.m() {
            let Cost::Finite(c) = self.inst.cost(i, j) else {
                continue;
            };
            let h = self.h.at(i, j);
            if !h.is_zero() {
                spend = spend + (self.prices.get(j).clone() + c.clone()) * h.clone();
            }
            let y = self.y.at(i, j);
            if !y.is_zero() {
                spend = spend + (self.price_lower(j) + c.clone()) * y.clone();
            }
        }
        self.inst.budget(i).clone() - spend
    }

    /// Definitional unallocated amount of good `j`.
    pub fn recompute_unallocated(&self, j: usize) -> S {
        let mut held = S::zero();
        for i in 0..self.n() {
            held = held + self.h.at(i, j).clone() + self.y.at(i, j).clone();
        }
        S::one() - held
    }
}
