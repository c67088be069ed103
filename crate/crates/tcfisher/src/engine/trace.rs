//! Line-delimited trace records emitted during a run.
//!
//! One record is produced per walk event (price raises included). The
//! `surplus_digest` field is an FNV-1a hash over the canonical renderings
//! of all surpluses after the event, so two runs can be compared for
//! divergence without storing full vectors.

use serde::Serialize;

use crate::numeric::Scalar;

use super::state::SolverState;
use super::walk::WalkEvent;

#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub round: u64,
    pub event: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buyer: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub good: Option<usize>,
    pub surplus_digest: String,
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

pub(crate) fn surplus_digest<S: Scalar>(state: &SolverState<S>) -> String {
    let mut text = String::new();
    for r in &state.r {
        text.push_str(&r.render());
        text.push(';');
    }
    format!("{:016x}", fnv1a64(text.as_bytes()))
}

pub(crate) fn record<S: Scalar>(state: &SolverState<S>, event: &WalkEvent) -> TraceRecord {
    let (name, buyer, good) = match *event {
        WalkEvent::PriceRaised { buyer, good } => ("price_raised", Some(buyer), Some(good)),
        WalkEvent::SinkFed {
            buyer,
            good,
            surplus_zeroed,
        } => (
            if surplus_zeroed {
                "sink_fed_surplus_zeroed"
            } else {
                "sink_fed_supply_exhausted"
            },
            Some(buyer),
            Some(good),
        ),
        WalkEvent::CycleResolved {
            entry,
            edge_dropped,
        } => (
            if edge_dropped {
                "cycle_resolved_edge_dropped"
            } else {
                "cycle_resolved_zeroed"
            },
            Some(entry),
            None,
        ),
        WalkEvent::EdgeDropped { from, to: _ } => {
            ("edge_dropped", Some(from), Some(state.pi[from]))
        }
        WalkEvent::SurplusExhausted => ("surplus_exhausted", None, None),
        WalkEvent::NoSurplusNode => ("no_surplus_node", None, None),
    };
    TraceRecord {
        round: state.counters.rounds,
        event: name,
        buyer,
        good,
        surplus_digest: surplus_digest(state),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), fnv1a64(b"a"));
        assert_ne!(fnv1a64(b"1/2;"), fnv1a64(b"1/3;"));
    }
}
