//! One transfer walk: a depth-first probe of the demand graph that pushes
//! surplus ahead of itself until something gives.
//!
//! The walk starts at the lowest-index buyer with surplus, repeatedly
//! follows the first live out-edge of the last node, and ends in one of:
//!
//! * a sink whose demanded good is fully allocated: the whole path's
//!   surplus lands on the sink and the good's price is raised (ends the
//!   round);
//! * a sink with unallocated supply, which feeds the sink;
//! * a node already on the path: a cycle, resolved in one simultaneous
//!   transfer;
//! * an edge dropping out mid-transfer, which ends the walk early.

use crate::numeric::Scalar;

use super::graph::RoundGraph;
use super::state::SolverState;
use super::transfer::{transfer_cycle, transfer_path, CycleOutcome, PathOutcome};
use super::SolveError;

/// How a transfer walk ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkEvent {
    /// The walk reached a sink demanding a fully allocated good; its price
    /// was raised and the round is over.
    PriceRaised { buyer: usize, good: usize },
    /// The walk reached a sink with unallocated supply and fed it.
    /// `surplus_zeroed` tells whether the sink's surplus was exhausted
    /// (otherwise the supply ran out first).
    SinkFed {
        buyer: usize,
        good: usize,
        surplus_zeroed: bool,
    },
    /// The walk closed a cycle and resolved it.
    CycleResolved { entry: usize, edge_dropped: bool },
    /// An edge dropped while transferring along the path.
    EdgeDropped { from: usize, to: usize },
    /// Float mode only: the path's surpluses all fell below threshold.
    SurplusExhausted,
    /// No buyer has surplus left; the algorithm is done.
    NoSurplusNode,
}

/// Run one transfer walk. Returns `NoSurplusNode` without counting a walk
/// when every surplus is already exhausted.
pub fn transfer_walk<S: Scalar>(
    state: &mut SolverState<S>,
    graph: &mut RoundGraph,
) -> Result<WalkEvent, SolveError> {
    let Some(start) = state.first_with_surplus() else {
        return Ok(WalkEvent::NoSurplusNode);
    };
    state.counters.walks_total += 1;

    let mut path = vec![start];
    let mut on_path = vec![false; state.n()];
    on_path[start] = true;

    loop {
        let last = *path.last().expect("path starts non-empty");
        match graph.first_successor(state, last) {
            None => return finish_at_sink(state, &path),
            Some(next) if on_path[next] => return finish_cycle(state, &path, next),
            Some(next) => {
                path.push(next);
                on_path[next] = true;
            }
        }
    }
}

/// Drain the path onto its final node, mapping an early stop to its event.
fn drain_path<S: Scalar>(
    state: &mut SolverState<S>,
    path: &[usize],
) -> Result<Option<WalkEvent>, SolveError> {
    match transfer_path(state, path)? {
        PathOutcome::AllZeroedExceptLast => Ok(None),
        PathOutcome::EdgeDropped { position } => {
            state.counters.walks_path_dropped += 1;
            Ok(Some(WalkEvent::EdgeDropped {
                from: path[position],
                to: path[position + 1],
            }))
        }
        PathOutcome::BelowThreshold { .. } => {
            state.counters.walks_below_threshold += 1;
            Ok(Some(WalkEvent::SurplusExhausted))
        }
    }
}

fn finish_at_sink<S: Scalar>(
    state: &mut SolverState<S>,
    path: &[usize],
) -> Result<WalkEvent, SolveError> {
    if let Some(event) = drain_path(state, path)? {
        return Ok(event);
    }
    let sink = *path.last().expect("non-empty");
    let good = state.pi[sink];

    if state.z[good].is_positive() {
        // the good still has unallocated supply, so its price is the floor;
        // feed the sink as much as its surplus or the supply allows
        let eff = state.effective(sink, good)?;
        let quota = state.r[sink].clone() / eff.clone();
        let available = state.z[good].clone();
        let surplus_zeroed = quota < available;
        if surplus_zeroed {
            state.z[good] = available - quota.clone();
            *state.h.at_mut(sink, good) = state.h.at(sink, good).clone() + quota;
            state.r[sink] = S::zero();
            state.counters.walks_fed_exhausted += 1;
        } else {
            state.z[good] = S::zero();
            *state.h.at_mut(sink, good) = state.h.at(sink, good).clone() + available.clone();
            state.r[sink] = state.r[sink].clone() - available * eff;
            state.counters.walks_fed_supply += 1;
        }
        Ok(WalkEvent::SinkFed {
            buyer: sink,
            good,
            surplus_zeroed,
        })
    } else {
        // unsatisfiable: the sink wants a fully allocated good
        state.raise_price(good)?;
        state.counters.walks_price_raise += 1;
        Ok(WalkEvent::PriceRaised { buyer: sink, good })
    }
}

fn finish_cycle<S: Scalar>(
    state: &mut SolverState<S>,
    path: &[usize],
    entry: usize,
) -> Result<WalkEvent, SolveError> {
    if let Some(event) = drain_path(state, path)? {
        return Ok(event);
    }
    let last = *path.last().expect("non-empty");
    // cycle: last -> entry -> ... -> last, with the surplus sitting on last
    let entry_pos = path
        .iter()
        .position(|&v| v == entry)
        .expect("entry is on the path");
    let mut cycle = Vec::with_capacity(path.len() - entry_pos);
    cycle.push(last);
    cycle.extend_from_slice(&path[entry_pos..path.len() - 1]);

    let edge_dropped = match transfer_cycle(state, &cycle)? {
        CycleOutcome::AllZeroed => {
            state.counters.walks_cycle_zeroed += 1;
            false
        }
        CycleOutcome::EdgeDropped => {
            state.counters.walks_cycle_dropped += 1;
            true
        }
    };
    Ok(WalkEvent::CycleResolved {
        entry: last,
        edge_dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cost, MarketInstance, Matrix};
    use crate::numeric::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn cross_market() -> MarketInstance<Exact> {
        MarketInstance::new(
            vec![Exact::from_int(1), Exact::from_int(1)],
            Matrix::from_rows(vec![
                vec![Exact::from_int(1000), Exact::from_int(1)],
                vec![Exact::from_int(1), Exact::from_int(1)],
            ])
            .unwrap(),
            Matrix::from_rows(vec![
                vec![
                    Cost::Finite(Exact::from_int(1)),
                    Cost::Finite(Exact::from_int(1000)),
                ],
                vec![
                    Cost::Finite(Exact::from_int(0)),
                    Cost::Finite(Exact::from_int(0)),
                ],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn first_walk_feeds_the_sink_from_supply() {
        // start of a run: buyer 0 is a sink, good 0 has a full unit free;
        // delta = min(1 / (0.1 + 1), 1) = 10/11
        let mut st = SolverState::initialize(&cross_market(), q(1, 10), 0.0).unwrap();
        st.fix_pi().unwrap();
        let mut g = RoundGraph::build(&st);
        let event = transfer_walk(&mut st, &mut g).unwrap();
        assert_eq!(
            event,
            WalkEvent::SinkFed {
                buyer: 0,
                good: 0,
                surplus_zeroed: true
            }
        );
        assert_eq!(*st.h.at(0, 0), q(10, 11));
        assert_eq!(st.r[0], Exact::zero());
        assert_eq!(st.r[0], st.recompute_surplus(0));
        assert_eq!(st.counters.walks_total, 1);
        assert_eq!(st.counters.walks_fed_exhausted, 1);
    }

    #[test]
    fn sink_on_sold_out_good_raises_its_price() {
        let mut st = SolverState::initialize(&cross_market(), q(1, 10), 0.0).unwrap();
        st.fix_pi().unwrap();
        // good 0 fully allocated to buyer 1 at the current tier
        *st.h.at_mut(1, 0) = Exact::from_int(1);
        st.z[0] = Exact::zero();
        st.r[1] = st.recompute_surplus(1);
        let mut g = RoundGraph::build(&st);
        let event = transfer_walk(&mut st, &mut g).unwrap();
        assert_eq!(
            event,
            WalkEvent::PriceRaised { buyer: 0, good: 0 }
        );
        assert_eq!(st.price_exponent[0], 1);
        // the current tier shifted down
        assert_eq!(*st.h.at(1, 0), Exact::zero());
        assert_eq!(*st.y.at(1, 0), Exact::from_int(1));
    }

    #[test]
    fn exhausted_market_reports_no_surplus_node() {
        let mut st = SolverState::initialize(&cross_market(), q(1, 10), 0.0).unwrap();
        st.fix_pi().unwrap();
        st.r = vec![Exact::zero(), Exact::zero()];
        let mut g = RoundGraph::build(&st);
        assert_eq!(
            transfer_walk(&mut st, &mut g).unwrap(),
            WalkEvent::NoSurplusNode
        );
        assert_eq!(st.counters.walks_total, 0);
    }

    #[test]
    fn self_loop_resolves_as_a_cycle() {
        // single buyer holding its own good at the lower tier: the walk
        // closes a length-one cycle and zeroes the surplus in one step
        let inst = MarketInstance::new(
            vec![q(101, 100)],
            Matrix::from_rows(vec![vec![Exact::from_int(1)]]).unwrap(),
            Matrix::from_rows(vec![vec![Cost::Finite(Exact::zero())]]).unwrap(),
        )
        .unwrap();
        let mut st = SolverState::initialize(&inst, q(1, 10), 0.0).unwrap();
        st.prices.0[0] = q(11, 10);
        st.price_exponent[0] = 25;
        *st.y.at_mut(0, 0) = Exact::from_int(1);
        st.z[0] = Exact::zero();
        st.r[0] = st.recompute_surplus(0);
        assert_eq!(st.r[0], q(1, 100));
        st.fix_pi().unwrap();
        let mut g = RoundGraph::build(&st);
        let event = transfer_walk(&mut st, &mut g).unwrap();
        assert_eq!(
            event,
            WalkEvent::CycleResolved {
                entry: 0,
                edge_dropped: false
            }
        );
        assert_eq!(st.r[0], Exact::zero());
        assert_eq!(st.r[0], st.recompute_surplus(0));
    }
}
