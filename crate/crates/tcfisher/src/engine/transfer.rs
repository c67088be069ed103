//! Surplus transfers along edges, paths and cycles of the demand graph.
//!
//! A transfer over the edge `i -> k` moves some amount `delta` of the good
//! `j = pi(i)` out of `k`'s lower-tier holding into `i`'s current-tier
//! holding. Buyer `i` pays `delta * (p_j + c_ij)`; buyer `k` is refunded
//! what it had paid, `delta * (p_j/(1+eps) + c_kj)`. Surplus is not
//! conserved: the two effective prices differ.

use crate::numeric::Scalar;

use super::state::SolverState;
use super::SolveError;

/// How a single-edge transfer ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOutcome {
    /// The spender's surplus reached zero; the edge survives.
    SurplusZeroed,
    /// The lower-tier holding was exhausted; the edge drops out.
    EdgeDropped,
}

/// How a path transfer ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathOutcome {
    /// Every node except the last spent down to zero; the last node's
    /// surplus strictly increased.
    AllZeroedExceptLast,
    /// The edge starting at `position` dropped; later nodes are untouched.
    EdgeDropped { position: usize },
    /// Float mode only: the running surplus fell below threshold before
    /// the path was done.
    BelowThreshold { position: usize },
}

/// How a cycle transfer ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CycleOutcome {
    /// Every node on the cycle now has zero surplus.
    AllZeroed,
    /// Some lower-tier holding was exhausted and its edge dropped.
    EdgeDropped,
}

/// Transfer surplus from `i` to `k` over the edge `i -> k`.
///
/// Moves `delta = min(r_i / (p_j + c_ij), y_kj)` units of `j = pi(i)`.
/// Exactly one of two things happens: `r_i` reaches zero, or `y_kj`
/// reaches zero and the edge drops (ties count as drops). A self-edge
/// (`i == k`) is allowed; it strictly reduces `r_i` by
/// `delta * eps * p_j / (1 + eps)` but need not zero it.
pub fn transfer_edge<S: Scalar>(
    state: &mut SolverState<S>,
    i: usize,
    k: usize,
) -> Result<EdgeOutcome, SolveError> {
    let j = state.pi[i];
    if !state.r[i].is_positive() {
        return Err(SolveError::Contract("edge transfer from a zero-surplus buyer"));
    }
    if !state.y.at(k, j).is_positive() {
        return Err(SolveError::Contract("edge transfer over a missing edge"));
    }
    let eff_i = state.effective(i, j)?;
    let refund_rate = state.effective_lower(k, j)?;
    let quota = state.r[i].clone() / eff_i.clone();
    let held = state.y.at(k, j).clone();

    let (delta, outcome) = if quota < held {
        (quota, EdgeOutcome::SurplusZeroed)
    } else {
        (held, EdgeOutcome::EdgeDropped)
    };

    match outcome {
        EdgeOutcome::SurplusZeroed => {
            *state.y.at_mut(k, j) = state.y.at(k, j).clone() - delta.clone();
            state.r[i] = S::zero();
        }
        EdgeOutcome::EdgeDropped => {
            *state.y.at_mut(k, j) = S::zero();
            state.counters.edge_drops += 1;
            state.r[i] = state.r[i].clone() - delta.clone() * eff_i;
        }
    }
    *state.h.at_mut(i, j) = state.h.at(i, j).clone() + delta.clone();
    state.r[k] = state.r[k].clone() + delta * refund_rate;
    Ok(outcome)
}

/// Transfer surplus along a path, edge by edge, stopping early when an
/// edge drops. Consecutive path entries must be graph edges and the first
/// node must carry surplus.
pub fn transfer_path<S: Scalar>(
    state: &mut SolverState<S>,
    path: &[usize],
) -> Result<PathOutcome, SolveError> {
    for q in 0..path.len().saturating_sub(1) {
        let i = path[q];
        if !state.r[i].is_positive() {
            if S::EXACT {
                return Err(SolveError::Contract("path node lost its surplus"));
            }
            return Ok(PathOutcome::BelowThreshold { position: q });
        }
        if transfer_edge(state, i, path[q + 1])? == EdgeOutcome::EdgeDropped {
            return Ok(PathOutcome::EdgeDropped { position: q });
        }
    }
    Ok(PathOutcome::AllZeroedExceptLast)
}

/// Resolve a cycle `v_0 -> v_1 -> ... -> v_0` on which only `v_0` has
/// surplus, transferring simultaneously on every edge.
///
/// The amounts are geared so intermediate surpluses stay untouched: with
/// `delta_q` moved on edge `(v_q, v_{q+1})`,
/// `delta_{q+1} = delta_q * (p_{pi(v_q)}/(1+eps) + c_{v_{q+1}, pi(v_q)})
///             / (p_{pi(v_{q+1})} + c_{v_{q+1}, pi(v_{q+1})})`,
/// and `v_0`'s surplus changes by `C * delta_0` for a constant `C` fixed
/// by the current prices. `delta_0` is pushed as far as the surplus
/// (when `C < 0`) and the holdings allow, so either every surplus on the
/// cycle reaches zero or some holding empties and its edge drops.
pub fn transfer_cycle<S: Scalar>(
    state: &mut SolverState<S>,
    cycle: &[usize],
) -> Result<CycleOutcome, SolveError> {
    let l = cycle.len();
    if l == 0 {
        return Err(SolveError::Contract("empty cycle"));
    }
    let v0 = cycle[0];
    if !state.r[v0].is_positive() {
        return Err(SolveError::Contract("cycle start has no surplus"));
    }
    for &v in &cycle[1..] {
        if state.has_surplus(v) {
            return Err(SolveError::Contract(
                "cycle has more than one node with surplus",
            ));
        }
    }

    // gear ratios: rho_0 = 1, rho_{q+1} = rho_q * refund_rate_q / pay_rate_{q+1}
    let mut rho = Vec::with_capacity(l);
    rho.push(S::one());
    for q in 0..l - 1 {
        let next = cycle[q + 1];
        let refund = state.effective_lower(next, state.pi[cycle[q]])?;
        let pay = state.effective(next, state.pi[next])?;
        let prev = rho[q].clone();
        rho.push(prev * refund / pay);
    }

    // net surplus rate at v0 per unit of delta_0
    let last = cycle[l - 1];
    let refund_to_v0 = state.effective_lower(v0, state.pi[last])?;
    let pay_v0 = state.effective(v0, state.pi[v0])?;
    let c_rate = refund_to_v0 * rho[l - 1].clone() - pay_v0;

    // delta_0 cap from the surplus, infinite when the cycle is profitable
    let delta_star = if c_rate < S::zero() {
        Some(state.r[v0].clone() / -c_rate.clone())
    } else {
        None
    };

    // delta_0 cap from each lower-tier holding
    let mut bound: Option<S> = None;
    for q in 0..l {
        let target = cycle[(q + 1) % l];
        let held = state.y.at(target, state.pi[cycle[q]]);
        if !held.is_positive() {
            return Err(SolveError::Contract("cycle edge without a holding"));
        }
        let cap = held.clone() / rho[q].clone();
        if bound.as_ref().is_none_or(|b| cap < *b) {
            bound = Some(cap);
        }
    }
    let bound = bound.expect("cycle is non-empty");

    let (delta0, outcome) = match delta_star {
        Some(ds) if ds < bound => (ds, CycleOutcome::AllZeroed),
        _ => (bound, CycleOutcome::EdgeDropped),
    };

    // apply all edges at once; intermediate surpluses are left untouched
    for q in 0..l {
        let giver = cycle[q];
        let target = cycle[(q + 1) % l];
        let j = state.pi[giver];
        let delta_q = delta0.clone() * rho[q].clone();
        let remaining = state.y.at(target, j).clone() - delta_q.clone();
        let emptied = if S::EXACT {
            remaining.is_zero()
        } else {
            remaining.to_f64() <= 0.0
        };
        if emptied {
            *state.y.at_mut(target, j) = S::zero();
            state.counters.edge_drops += 1;
        } else {
            *state.y.at_mut(target, j) = remaining;
        }
        *state.h.at_mut(giver, j) = state.h.at(giver, j).clone() + delta_q;
    }
    state.r[v0] = match outcome {
        CycleOutcome::AllZeroed => S::zero(),
        CycleOutcome::EdgeDropped => state.r[v0].clone() + c_rate * delta0,
    };
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cost, MarketInstance, Matrix};
    use crate::numeric::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    /// Buyers value both goods equally with zero costs; budgets are chosen
    /// per test so the hand-built holdings leave the intended surpluses.
    fn plain_market(budgets: Vec<Exact>) -> MarketInstance<Exact> {
        let one = Exact::from_int(1);
        let n = budgets.len();
        MarketInstance::new(
            budgets,
            Matrix::from_rows(vec![vec![one.clone(), one.clone()]; n]).unwrap(),
            Matrix::from_rows(vec![
                vec![
                    Cost::Finite(Exact::zero()),
                    Cost::Finite(Exact::zero())
                ];
                n
            ])
            .unwrap(),
        )
        .unwrap()
    }

    /// Mid-run state with both prices at 1.1 (eps = 0.1) and no holdings
    /// yet; tests fill in `y` and then re-derive surpluses.
    fn state_at_price(inst: &MarketInstance<Exact>) -> SolverState<Exact> {
        let mut st = SolverState::initialize(inst, q(1, 10), 0.0).unwrap();
        for j in 0..st.m() {
            st.prices.0[j] = q(11, 10);
        }
        st
    }

    /// Recompute every stored surplus from the definitional identity so the
    /// constructed state is internally consistent.
    fn sync_surpluses(st: &mut SolverState<Exact>) {
        for i in 0..st.n() {
            st.r[i] = st.recompute_surplus(i);
        }
    }

    #[test]
    fn edge_transfer_spends_all_surplus() {
        // p=1.1, c=0, r_i=0.22, y_kj=0.3 -> delta=0.2, surplus zeroed
        let inst = plain_market(vec![q(22, 100), q(3, 10)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 0];
        *st.y.at_mut(1, 0) = q(3, 10); // charged at 1.1/1.1 = 1 per unit
        sync_surpluses(&mut st);
        assert_eq!(st.r, vec![q(22, 100), Exact::zero()]);
        let out = transfer_edge(&mut st, 0, 1).unwrap();
        assert_eq!(out, EdgeOutcome::SurplusZeroed);
        assert_eq!(*st.h.at(0, 0), q(2, 10));
        assert_eq!(*st.y.at(1, 0), q(1, 10));
        assert_eq!(st.r[0], Exact::zero());
        assert_eq!(st.r[1], q(2, 10)); // 0.2 * (1.1/1.1 + 0)
        assert_eq!(st.counters.edge_drops, 0);
        assert_eq!(st.r[0], st.recompute_surplus(0));
        assert_eq!(st.r[1], st.recompute_surplus(1));
    }

    #[test]
    fn edge_transfer_drops_exhausted_edge() {
        // same but y_kj=0.1 -> delta=0.1, edge drops, r_i = 0.22 - 0.11
        let inst = plain_market(vec![q(22, 100), q(1, 10)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 0];
        *st.y.at_mut(1, 0) = q(1, 10);
        sync_surpluses(&mut st);
        let out = transfer_edge(&mut st, 0, 1).unwrap();
        assert_eq!(out, EdgeOutcome::EdgeDropped);
        assert_eq!(*st.y.at(1, 0), Exact::zero());
        assert_eq!(st.r[0], q(11, 100));
        assert_eq!(st.counters.edge_drops, 1);
    }

    #[test]
    fn self_edge_strictly_reduces_surplus() {
        // p=1.1, c=0, r=0.01, y_ii=1: delta=0.01/1.1, net change
        // -delta * eps * p/(1+eps) = -0.001/1.1
        let inst = plain_market(vec![q(101, 100)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0];
        *st.y.at_mut(0, 0) = Exact::from_int(1);
        sync_surpluses(&mut st);
        assert_eq!(st.r[0], q(1, 100));
        transfer_edge(&mut st, 0, 0).unwrap();
        let expected = q(1, 100) - q(1, 100) / q(11, 10) * q(1, 10);
        assert_eq!(st.r[0], expected);
        assert!(st.r[0].is_positive());
        // the stored surplus matches the definitional recompute
        assert_eq!(st.r[0], st.recompute_surplus(0));
    }

    #[test]
    fn contract_violations_are_rejected() {
        let inst = plain_market(vec![q(1, 10), q(1, 10)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 0];
        st.r[0] = Exact::zero();
        *st.y.at_mut(1, 0) = q(1, 10);
        assert!(transfer_edge(&mut st, 0, 1).is_err());
        st.r[0] = q(1, 10);
        *st.y.at_mut(1, 0) = Exact::zero();
        assert!(transfer_edge(&mut st, 0, 1).is_err());
    }

    #[test]
    fn path_transfer_cascades() {
        let inst = plain_market(vec![q(22, 100), Exact::from_int(1), Exact::from_int(1)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 0, 0];
        *st.y.at_mut(1, 0) = Exact::from_int(1);
        *st.y.at_mut(2, 0) = Exact::from_int(1);
        sync_surpluses(&mut st);
        assert_eq!(st.r, vec![q(22, 100), Exact::zero(), Exact::zero()]);
        let out = transfer_path(&mut st, &[0, 1, 2]).unwrap();
        assert_eq!(out, PathOutcome::AllZeroedExceptLast);
        assert_eq!(st.r[0], Exact::zero());
        assert_eq!(st.r[1], Exact::zero());
        assert!(st.r[2].is_positive());
        // exact cascade against the definitional surpluses
        for i in 0..3 {
            assert_eq!(st.r[i], st.recompute_surplus(i));
        }
    }

    #[test]
    fn path_transfer_stops_at_dropped_edge() {
        let inst = plain_market(vec![Exact::from_int(1), q(1, 10), Exact::from_int(1)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 0, 0];
        *st.y.at_mut(1, 0) = q(1, 10); // too small: edge (0,1) will drop
        *st.y.at_mut(2, 0) = Exact::from_int(1);
        sync_surpluses(&mut st);
        assert_eq!(st.r[2], Exact::zero());
        let out = transfer_path(&mut st, &[0, 1, 2]).unwrap();
        assert_eq!(out, PathOutcome::EdgeDropped { position: 0 });
        // node 2 untouched
        assert_eq!(st.r[2], Exact::zero());
        assert_eq!(*st.y.at(2, 0), Exact::from_int(1));
    }

    #[test]
    fn two_cycle_without_costs_burns_surplus() {
        // both prices p, zero costs: delta_1 = delta_0/(1+eps) and
        // C = p/(1+eps)^2 - p < 0, so the surplus strictly decreases
        let inst = plain_market(vec![q(101, 100), Exact::from_int(1)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 1]; // buyer 0 pursues good 0, buyer 1 good 1
        *st.y.at_mut(1, 0) = Exact::from_int(1); // edge 0 -> 1
        *st.y.at_mut(0, 1) = Exact::from_int(1); // edge 1 -> 0
        sync_surpluses(&mut st);
        assert_eq!(st.r, vec![q(1, 100), Exact::zero()]);
        let out = transfer_cycle(&mut st, &[0, 1]).unwrap();
        assert_eq!(out, CycleOutcome::AllZeroed);
        assert_eq!(st.r[0], Exact::zero());
        // intermediate node untouched, and consistent with definitions
        assert_eq!(st.r[1], Exact::zero());
        assert_eq!(st.r[1], st.recompute_surplus(1));
        assert_eq!(st.r[0], st.recompute_surplus(0));
        // the gearing: y moved on edge (1,0) is delta_0/(1+eps)
        let moved_0 = Exact::from_int(1) - st.y.at(1, 0).clone();
        let moved_1 = Exact::from_int(1) - st.y.at(0, 1).clone();
        assert_eq!(moved_1, moved_0.clone() / q(11, 10));
    }

    #[test]
    fn binding_holding_drops_cycle_edge() {
        let inst = plain_market(vec![Exact::from_int(2), q(1, 100)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 1];
        *st.y.at_mut(1, 0) = q(1, 100); // binding: delta_0 <= 0.01
        *st.y.at_mut(0, 1) = Exact::from_int(1);
        sync_surpluses(&mut st);
        assert_eq!(st.r[0], Exact::from_int(1));
        let out = transfer_cycle(&mut st, &[0, 1]).unwrap();
        assert_eq!(out, CycleOutcome::EdgeDropped);
        assert_eq!(*st.y.at(1, 0), Exact::zero());
        assert!(st.r[0].is_positive());
        assert_eq!(st.r[0], st.recompute_surplus(0));
        assert_eq!(st.r[1], st.recompute_surplus(1));
    }

    #[test]
    fn profitable_cycle_must_end_with_a_drop() {
        // buyer 1 pays a large cost on good 0, making the gear ratio big
        // enough that C >= 0: the cycle cannot zero the surplus and must
        // end by exhausting a holding.
        let inst = MarketInstance::new(
            vec![q(6, 10), q(11, 2)],
            Matrix::from_rows(vec![
                vec![Exact::from_int(100), Exact::from_int(100)],
                vec![Exact::from_int(100), Exact::from_int(100)],
            ])
            .unwrap(),
            Matrix::from_rows(vec![
                vec![Cost::Finite(Exact::zero()), Cost::Finite(Exact::zero())],
                vec![Cost::Finite(Exact::from_int(10)), Cost::Finite(Exact::zero())],
            ])
            .unwrap(),
        )
        .unwrap();
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 1];
        *st.y.at_mut(1, 0) = q(1, 2); // edge 0 -> 1 (good 0 held by 1 at 1.1/1.1 + 10)
        *st.y.at_mut(0, 1) = q(1, 2); // edge 1 -> 0 (good 1 held by 0 at 1.1/1.1)
        sync_surpluses(&mut st);
        assert_eq!(st.r, vec![q(1, 10), Exact::zero()]);

        // rate check: refund to buyer 1 on good 0 is 1.1/1.1 + 10 = 11,
        // its pay rate on good 1 is 1.1, so rho_1 = 10 and
        // C = (1.1/1.1) * 10 - 1.1 = 8.9 > 0.
        let out = transfer_cycle(&mut st, &[0, 1]).unwrap();
        assert_eq!(out, CycleOutcome::EdgeDropped);
        assert!(st.r[0] > q(1, 10)); // profitable: surplus grew
        assert_eq!(st.r[0], st.recompute_surplus(0));
        assert_eq!(st.r[1], st.recompute_surplus(1));
    }

    #[test]
    fn three_cycle_gearing_matches_hand_values() {
        // three buyers, three goods, all prices 1.1, zero costs; buyer q
        // pursues good q and buyer q+1 holds it at the lower tier. With
        // rho_1 = 10/11 and rho_2 = 100/121, the surplus rate is
        // C = 100/121 - 11/10 = -331/1210, so r_0 = 1/10 zeroes out at
        // delta_0 = 121/331.
        let one = Exact::from_int(1);
        let inst = MarketInstance::new(
            vec![q(11, 10), one.clone(), one.clone()],
            Matrix::from_rows(vec![vec![Exact::from_int(100); 3]; 3]).unwrap(),
            Matrix::from_rows(vec![vec![Cost::Finite(Exact::zero()); 3]; 3]).unwrap(),
        )
        .unwrap();
        let mut st = SolverState::initialize(&inst, q(1, 10), 0.0).unwrap();
        for j in 0..3 {
            st.prices.0[j] = q(11, 10);
            st.z[j] = Exact::zero();
        }
        // every good ties in every demand set; any assignment is a valid pi
        st.pi = vec![0, 1, 2];
        *st.y.at_mut(1, 0) = one.clone(); // edge 0 -> 1
        *st.y.at_mut(2, 1) = one.clone(); // edge 1 -> 2
        *st.y.at_mut(0, 2) = one.clone(); // edge 2 -> 0
        for i in 0..3 {
            st.r[i] = st.recompute_surplus(i);
        }
        assert_eq!(st.r, vec![q(1, 10), Exact::zero(), Exact::zero()]);
        let before_1 = st.r[1].clone();
        let before_2 = st.r[2].clone();

        let out = transfer_cycle(&mut st, &[0, 1, 2]).unwrap();
        assert_eq!(out, CycleOutcome::AllZeroed);
        assert_eq!(st.r[0], Exact::zero());
        // intermediates bit-identical, and each delta exactly as derived
        assert_eq!(st.r[1], before_1);
        assert_eq!(st.r[2], before_2);
        assert_eq!(*st.h.at(0, 0), q(121, 331));
        assert_eq!(*st.h.at(1, 1), q(110, 331));
        assert_eq!(*st.h.at(2, 2), q(100, 331));
        assert_eq!(*st.y.at(1, 0), one.clone() - q(121, 331));
        assert_eq!(*st.y.at(2, 1), one.clone() - q(110, 331));
        assert_eq!(*st.y.at(0, 2), one - q(100, 331));
        for i in 0..3 {
            assert_eq!(st.r[i], st.recompute_surplus(i));
        }
    }

    #[test]
    fn cycle_rejects_two_surplus_nodes() {
        let inst = plain_market(vec![Exact::from_int(2), Exact::from_int(2)]);
        let mut st = state_at_price(&inst);
        st.pi = vec![0, 1];
        *st.y.at_mut(1, 0) = q(1, 2);
        *st.y.at_mut(0, 1) = q(1, 2);
        sync_surpluses(&mut st);
        assert!(st.r[1].is_positive());
        assert!(matches!(
            transfer_cycle(&mut st, &[0, 1]),
            Err(SolveError::Contract(_))
        ));
    }
}
