//! Independent checking of solver-state invariants and of the exact and
//! approximate equilibrium conditions.
//!
//! The checkers only look at their declared inputs (an instance plus
//! prices and allocations, or a full solver state) and recompute
//! everything they assert (bang-per-buck values, surpluses, unallocated
//! amounts) from definitions. Residuals are reported as relative
//! quantities so exact and float runs are comparable; a condition passes
//! under the backend's own equality contract.

use std::fmt;

use serde::Serialize;

use crate::engine::SolverState;
use crate::model::{Allocation, Cost, DemandEntry, MarketInstance, PriceVector};

use crate::numeric::Scalar;

/// Indices pinning down the worst violation of a condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Witness {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buyer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub good: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub id: &'static str,
    pub pass: bool,
    /// Worst relative residual observed; zero when the condition holds
    /// exactly.
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub conditions: Vec<ConditionCheck>,
    pub pass: bool,
}

impl VerificationReport {
    fn from_conditions(conditions: Vec<ConditionCheck>) -> Self {
        let pass = conditions.iter().all(|c| c.pass);
        VerificationReport { conditions, pass }
    }

    pub fn condition(&self, id: &str) -> Option<&ConditionCheck> {
        self.conditions.iter().find(|c| c.id == id)
    }

    /// Largest residual across all conditions.
    pub fn worst_residual(&self) -> f64 {
        self.conditions
            .iter()
            .map(|c| c.residual)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.conditions {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            write!(f, "{mark} {:<28} residual {:.3e}", c.id, c.residual)?;
            if let Some(w) = &c.witness {
                if let Some(b) = w.buyer {
                    write!(f, " buyer={b}")?;
                }
                if let Some(g) = w.good {
                    write!(f, " good={g}")?;
                }
            }
            writeln!(f)?;
        }
        write!(f, "overall: {}", if self.pass { "pass" } else { "fail" })
    }
}

/// Accumulates the worst violation of one condition.
struct Tracker {
    id: &'static str,
    pass: bool,
    residual: f64,
    witness: Option<Witness>,
}

impl Tracker {
    fn new(id: &'static str) -> Self {
        Tracker {
            id,
            pass: true,
            residual: 0.0,
            witness: None,
        }
    }

    /// Track the worst residual; the witness points at the worst failure.
    fn record(&mut self, ok: bool, residual: f64, buyer: Option<usize>, good: Option<usize>) {
        let residual = residual.max(0.0);
        if !ok && (self.pass || residual >= self.residual) {
            self.witness = Some(Witness { buyer, good });
        }
        if !ok {
            self.pass = false;
        }
        if residual > self.residual {
            self.residual = residual;
        }
    }

    fn finish(self) -> ConditionCheck {
        ConditionCheck {
            id: self.id,
            pass: self.pass,
            residual: self.residual,
            witness: if self.pass { None } else { self.witness },
        }
    }
}

/// `|a - b| / max(1, |a|, |b|)` in floats, for reporting.
fn rel_gap<S: Scalar>(a: &S, b: &S) -> f64 {
    let (a, b) = (a.to_f64(), b.to_f64());
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Relative amount by which `small <= big` is violated.
fn rel_shortfall<S: Scalar>(small: &S, big: &S) -> f64 {
    let (s, b) = (small.to_f64(), big.to_f64());
    ((s - b) / 1f64.max(s.abs()).max(b.abs())).max(0.0)
}

fn demand_entries<S: Scalar>(
    inst: &MarketInstance<S>,
    prices: &PriceVector<S>,
    tol: f64,
) -> Vec<Result<DemandEntry<S>, crate::model::ModelError>> {
    (0..inst.n())
        .map(|i| inst.compute_demand(prices, i, tol))
        .collect()
}

/// Check the solver-state invariants plus the definitional identities for
/// surpluses and unallocated amounts. Bang-per-buck values are recomputed
/// from the instance and prices.
pub fn check_invariants<S: Scalar>(state: &SolverState<S>, tol: f64) -> VerificationReport {
    let entries = demand_entries(&state.inst, &state.prices, tol);
    check_invariants_using(state, &entries, tol)
}

/// [`check_invariants`] with the round's bang-per-buck entries supplied by
/// the caller. Prices are constant within a round, so the engine's
/// per-event checks pass the entries computed when the round was fixed;
/// the entries are a pure function of the instance and prices either way.
pub fn check_invariants_using<S: Scalar>(
    state: &SolverState<S>,
    entries: &[Result<DemandEntry<S>, crate::model::ModelError>],
    tol: f64,
) -> VerificationReport {
    let inst = &state.inst;
    let n = inst.n();
    let m = inst.m();
    let zero = S::zero();

    let mut surplus_nonneg = Tracker::new("surplus-nonnegative");
    for (i, r) in state.r.iter().enumerate() {
        let ok = r.approx_ge(&zero, tol);
        surplus_nonneg.record(ok, rel_shortfall(&zero, r), Some(i), None);
    }

    let mut price_floor = Tracker::new("price-floor");
    for j in 0..m {
        let p = state.prices.get(j);
        let ok = p.approx_ge(&state.eps, tol);
        price_floor.record(ok, rel_shortfall(&state.eps, p), None, Some(j));
    }

    let mut priced_or_sold = Tracker::new("priced-or-sold");
    for j in 0..m {
        let at_floor = state.prices.get(j).approx_eq(&state.eps, tol);
        let sold_out = state.z[j].approx_eq(&zero, tol);
        let ok = at_floor || sold_out;
        let residual = if ok { 0.0 } else { rel_gap(&state.z[j], &zero) };
        priced_or_sold.record(ok, residual, None, Some(j));
    }

    let mut tier_nonneg = Tracker::new("tier-nonnegative");
    for i in 0..n {
        for j in 0..m {
            for v in [state.h.at(i, j), state.y.at(i, j)] {
                let ok = v.approx_ge(&zero, tol);
                tier_nonneg.record(ok, rel_shortfall(&zero, v), Some(i), Some(j));
            }
        }
    }

    let mut best_bundle = Tracker::new("approx-best-bundle");
    for i in 0..n {
        for j in 0..m {
            if !state.h.at(i, j).is_positive() && !state.y.at(i, j).is_positive() {
                continue;
            }
            match (inst.cost(i, j), &entries[i]) {
                (Cost::Finite(_), Ok(entry)) => {
                    let eff = inst
                        .effective_price(&state.prices, i, j)
                        .expect("finite cost");
                    // u * (1+eps) >= alpha * eff, avoiding the division
                    let (ok, shortfall) = if S::EXACT {
                        let cmp = S::product_cmp(
                            inst.utility(i, j),
                            &state.one_plus_eps,
                            &entry.alpha,
                            &eff,
                        );
                        (cmp != Some(std::cmp::Ordering::Less), 0.0)
                    } else {
                        let required =
                            entry.alpha.clone() * eff.clone() / state.one_plus_eps.clone();
                        let ok = inst.utility(i, j).approx_ge(&required, tol);
                        let u = inst.utility(i, j).to_f64();
                        let req = required.to_f64();
                        (ok, ((req - u) / 1f64.max(req.abs())).max(0.0))
                    };
                    let shortfall = if ok {
                        shortfall
                    } else {
                        let u = inst.utility(i, j).to_f64();
                        let req = entry.alpha.to_f64() * eff.to_f64()
                            / state.one_plus_eps.to_f64();
                        ((req - u) / 1f64.max(req.abs())).max(0.0).max(shortfall)
                    };
                    best_bundle.record(ok, shortfall, Some(i), Some(j));
                }
                _ => best_bundle.record(false, 1.0, Some(i), Some(j)),
            }
        }
    }

    let mut unallocated_identity = Tracker::new("unallocated-identity");
    for j in 0..m {
        let expected = state.recompute_unallocated(j);
        let ok = state.z[j].approx_eq(&expected, tol) && expected.approx_ge(&zero, tol);
        unallocated_identity.record(
            ok,
            rel_gap(&state.z[j], &expected).max(rel_shortfall(&zero, &expected)),
            None,
            Some(j),
        );
    }

    let mut surplus_identity = Tracker::new("surplus-identity");
    for i in 0..n {
        let expected = state.recompute_surplus(i);
        let ok = state.r[i].approx_eq(&expected, tol);
        surplus_identity.record(ok, rel_gap(&state.r[i], &expected), Some(i), None);
    }

    VerificationReport::from_conditions(vec![
        surplus_nonneg.finish(),
        price_floor.finish(),
        priced_or_sold.finish(),
        tier_nonneg.finish(),
        best_bundle.finish(),
        unallocated_identity.finish(),
        surplus_identity.finish(),
    ])
}

fn spend<S: Scalar>(
    inst: &MarketInstance<S>,
    prices: &PriceVector<S>,
    x: &Allocation<S>,
    i: usize,
) -> S {
    let mut total = S::zero();
    for j in 0..inst.m() {
        if x.at(i, j).is_zero() {
            continue;
        }
        if let Some(eff) = inst.effective_price(prices, i, j) {
            total = total + eff * x.at(i, j).clone();
        }
    }
    total
}

fn sold<S: Scalar>(inst: &MarketInstance<S>, x: &Allocation<S>, j: usize) -> S {
    (0..inst.n()).fold(S::zero(), |acc, i| acc + x.at(i, j).clone())
}

fn budget_condition<S: Scalar>(
    inst: &MarketInstance<S>,
    prices: &PriceVector<S>,
    x: &Allocation<S>,
    tol: f64,
) -> ConditionCheck {
    let mut t = Tracker::new("budget-exhausted");
    for i in 0..inst.n() {
        let spent = spend(inst, prices, x, i);
        let ok = spent.approx_eq(inst.budget(i), tol);
        t.record(ok, rel_gap(&spent, inst.budget(i)), Some(i), None);
    }
    t.finish()
}

fn supply_condition<S: Scalar>(
    inst: &MarketInstance<S>,
    x: &Allocation<S>,
    tol: f64,
) -> ConditionCheck {
    let one = S::one();
    let mut t = Tracker::new("supply-bound");
    for j in 0..inst.m() {
        let total = sold(inst, x, j);
        let ok = total.approx_le(&one, tol);
        t.record(ok, rel_shortfall(&total, &one), None, Some(j));
    }
    t.finish()
}

fn bundle_condition<S: Scalar>(
    inst: &MarketInstance<S>,
    prices: &PriceVector<S>,
    x: &Allocation<S>,
    relax: Option<&S>,
    tol: f64,
) -> ConditionCheck {
    let id = if relax.is_some() {
        "approx-optimal-bundle"
    } else {
        "optimal-bundle"
    };
    let mut t = Tracker::new(id);
    let entries = demand_entries(inst, prices, tol);
    for i in 0..inst.n() {
        for j in 0..inst.m() {
            if !x.at(i, j).is_positive() {
                continue;
            }
            match (inst.cost(i, j), &entries[i]) {
                (Cost::Finite(_), Ok(entry)) => {
                    let eff = inst.effective_price(prices, i, j).expect("finite cost");
                    let value = entry.alpha.clone() * eff;
                    let u = inst.utility(i, j);
                    let (ok, residual) = match relax {
                        // u >= alpha (p + c) / (1 + eps)
                        Some(one_plus_eps) => {
                            let required = value / one_plus_eps.clone();
                            (u.approx_ge(&required, tol), {
                                let req = required.to_f64();
                                ((req - u.to_f64()) / 1f64.max(req.abs())).max(0.0)
                            })
                        }
                        // u = alpha (p + c) exactly
                        None => (u.approx_eq(&value, tol), rel_gap(u, &value)),
                    };
                    t.record(ok, residual, Some(i), Some(j));
                }
                _ => t.record(false, 1.0, Some(i), Some(j)),
            }
        }
    }
    t.finish()
}

/// Check the approximate equilibrium conditions: exact budget exhaustion,
/// the supply bound, clearing relaxed to `1/(1+eps)` for goods priced
/// above `eps`, and bundle optimality relaxed by `1/(1+eps)`.
pub fn check_approx_equilibrium<S: Scalar>(
    inst: &MarketInstance<S>,
    prices: &PriceVector<S>,
    x: &Allocation<S>,
    eps: &S,
    tol: f64,
) -> VerificationReport {
    let one_plus_eps = S::one() + eps.clone();
    let mut clearing = Tracker::new("relaxed-clearing");
    for j in 0..inst.m() {
        if *prices.get(j) <= *eps {
            continue;
        }
        let total = sold(inst, x, j);
        let target = S::one() / one_plus_eps.clone();
        let ok = total.approx_ge(&target, tol);
        clearing.record(ok, rel_shortfall(&target, &total), None, Some(j));
    }
    VerificationReport::from_conditions(vec![
        budget_condition(inst, prices, x, tol),
        supply_condition(inst, x, tol),
        clearing.finish(),
        bundle_condition(inst, prices, x, Some(&one_plus_eps), tol),
    ])
}

/// Check the exact equilibrium conditions: budget exhaustion, the supply
/// bound, full clearing of positively priced goods, and exact bundle
/// optimality.
pub fn check_exact_equilibrium<S: Scalar>(
    inst: &MarketInstance<S>,
    prices: &PriceVector<S>,
    x: &Allocation<S>,
    tol: f64,
) -> VerificationReport {
    let one = S::one();
    let mut clearing = Tracker::new("clearing");
    for j in 0..inst.m() {
        if !prices.get(j).is_positive() {
            continue;
        }
        let total = sold(inst, x, j);
        let ok = total.approx_eq(&one, tol);
        clearing.record(ok, rel_gap(&total, &one), None, Some(j));
    }
    VerificationReport::from_conditions(vec![
        budget_condition(inst, prices, x, tol),
        supply_condition(inst, x, tol),
        clearing.finish(),
        bundle_condition(inst, prices, x, None, tol),
    ])
}
