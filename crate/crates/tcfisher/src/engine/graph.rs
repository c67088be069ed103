//! The round's demand graph.
//!
//! Conceptually the walk explores a directed graph `G` on buyers with an
//! edge `i -> k` whenever `y_{k, pi(i)} > 0`: buyer `k` holds, at the lower
//! tier, the good buyer `i` currently pursues. `G` is never materialized.
//! Instead we keep its bipartite mirror: for every good, the list of buyers
//! holding it at the lower tier, in buyer order, with a monotone cursor.
//! Following buyer `i`'s first out-edge means reading the first live entry
//! of the list for good `pi(i)`; an edge drop just advances a cursor.
//!
//! Lower-tier holdings only appear when a price is raised, which ends the
//! round, so within a round the lists only lose entries and the cursors
//! only move forward.

use crate::numeric::Scalar;

use super::state::SolverState;

#[derive(Debug, Clone)]
pub struct RoundGraph {
    /// Per good: buyers that held it at the lower tier when the round
    /// started, ascending.
    holders: Vec<Vec<usize>>,
    cursor: Vec<usize>,
}

impl RoundGraph {
    /// Snapshot the lower-tier holdings. `pi` must already be fixed.
    pub fn build<S: Scalar>(state: &SolverState<S>) -> Self {
        let m = state.m();
        let mut holders = vec![Vec::new(); m];
        for j in 0..m {
            for i in 0..state.n() {
                if state.y.at(i, j).is_positive() {
                    holders[j].push(i);
                }
            }
        }
        RoundGraph {
            holders,
            cursor: vec![0; m],
        }
    }

    /// First successor of buyer `i`: the first buyer still holding
    /// `pi(i)` at the lower tier. `None` means `i` is a sink.
    pub fn first_successor<S: Scalar>(
        &mut self,
        state: &SolverState<S>,
        i: usize,
    ) -> Option<usize> {
        let j = state.pi[i];
        let list = &self.holders[j];
        let cur = &mut self.cursor[j];
        while *cur < list.len() {
            let k = list[*cur];
            if state.y.at(k, j).is_positive() {
                return Some(k);
            }
            *cur += 1;
        }
        None
    }

    /// Whether the edge `i -> k` exists right now (ignores cursors).
    pub fn has_edge<S: Scalar>(&self, state: &SolverState<S>, i: usize, k: usize) -> bool {
        state.y.at(k, state.pi[i]).is_positive()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Cost, MarketInstance, Matrix};
    use crate::numeric::{Exact, Scalar};

    fn three_buyers() -> MarketInstance<Exact> {
        let u = |v: i64| Exact::from_int(v);
        MarketInstance::new(
            vec![u(1), u(1), u(1)],
            Matrix::from_rows(vec![
                vec![u(2), u(1)],
                vec![u(2), u(1)],
                vec![u(1), u(2)],
            ])
            .unwrap(),
            Matrix::from_rows(vec![
                vec![Cost::Finite(u(0)), Cost::Finite(u(0))],
                vec![Cost::Finite(u(0)), Cost::Finite(u(0))],
                vec![Cost::Finite(u(0)), Cost::Finite(u(0))],
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn empty_allocation_has_no_edges() {
        let mut st =
            SolverState::initialize(&three_buyers(), Exact::from_ratio(1, 10), 0.0).unwrap();
        st.fix_pi().unwrap();
        let mut g = RoundGraph::build(&st);
        for i in 0..3 {
            assert_eq!(g.first_successor(&st, i), None);
        }
    }

    #[test]
    fn edge_follows_lower_tier_holding() {
        let mut st =
            SolverState::initialize(&three_buyers(), Exact::from_ratio(1, 10), 0.0).unwrap();
        st.fix_pi().unwrap();
        assert_eq!(st.pi, vec![0, 0, 1]);
        // buyer 1 holds good 0 at the lower tier: edges 0 -> 1 and 1 -> 1
        *st.y.at_mut(1, 0) = Exact::from_ratio(3, 10);
        let mut g = RoundGraph::build(&st);
        assert!(g.has_edge(&st, 0, 1));
        assert!(g.has_edge(&st, 1, 1));
        assert!(!g.has_edge(&st, 2, 1));
        assert_eq!(g.first_successor(&st, 0), Some(1));
        // dropping the holding advances past the edge
        *st.y.at_mut(1, 0) = Exact::zero();
        assert_eq!(g.first_successor(&st, 0), None);
    }

    #[test]
    fn cursor_skips_exhausted_holders_in_order() {
        let mut st =
            SolverState::initialize(&three_buyers(), Exact::from_ratio(1, 10), 0.0).unwrap();
        st.fix_pi().unwrap();
        *st.y.at_mut(0, 0) = Exact::from_ratio(1, 10);
        *st.y.at_mut(2, 0) = Exact::from_ratio(1, 10);
        let mut g = RoundGraph::build(&st);
        assert_eq!(g.first_successor(&st, 1), Some(0));
        *st.y.at_mut(0, 0) = Exact::zero();
        assert_eq!(g.first_successor(&st, 1), Some(2));
    }
}
