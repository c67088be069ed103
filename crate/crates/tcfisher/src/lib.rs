//! Equilibrium computation for linear Fisher markets with per-buyer,
//! per-good transaction costs.
//!
//! In this market model, `n` buyers with fixed budgets buy `m` divisible
//! goods of unit supply. Buyer `i` pays `p_j + c_ij` per unit of good `j`:
//! the market price plus a buyer-specific transaction cost, so one good can
//! trade at different effective prices for different buyers. Costs model
//! shipping (a surcharge per pair), trade restrictions (a pair may be
//! blocked entirely) and price discrimination (per-buyer reserve prices).
//!
//! The crate provides:
//!
//! * [`engine`]: an ascending-price auction that computes epsilon-approximate
//!   equilibrium prices and allocations, with operation counters whose
//!   analytic bounds are enforced at runtime;
//! * [`verify`]: an independent checker for the exact and approximate
//!   equilibrium conditions and for the engine's internal invariants;
//! * [`oracle`]: an independent convex-programming solver for small
//!   instances, used to cross-validate the auction;
//! * [`mod@bench`]: seeded instance generators and a batch harness that
//!   asserts the operation-count bounds empirically;
//! * exact rational and float arithmetic backends behind one [`Scalar`]
//!   trait ([`numeric`]).
//!
//! # Example
//!
//! Solve a two-buyer market whose equilibrium prices are irrational
//! (both `1/sqrt(2)`), then verify the result independently:
//!
//! ```
//! use tcfisher::{engine, io, verify};
//!
//! let doc = r#"{
//!     "goods": [{"id": "j"}, {"id": "jp"}],
//!     "buyers": [
//!         {"id": "i", "budget": 1, "utilities": [1000, 1], "costs": [1, 1000]},
//!         {"id": "k", "budget": 1, "utilities": [1, 1], "costs": [0, 0]}
//!     ]
//! }"#;
//! let parsed = io::parse_instance::<f64>(doc).unwrap();
//! let result = engine::solve(&parsed.instance, 0.01, &engine::SolveConfig::default()).unwrap();
//!
//! let target = 1.0 / 2f64.sqrt();
//! for p in &result.prices.0 {
//!     assert!((p - target).abs() / target < 0.05);
//! }
//!
//! let report = verify::check_approx_equilibrium(
//!     &parsed.instance, &result.prices, &result.allocation, &0.01, 1e-9);
//! assert!(report.pass);
//! ```

// index loops mirror the matrix notation throughout; iterator rewrites
// would obscure the (buyer, good) indexing
#![allow(clippy::needless_range_loop)]

pub mod bench;
pub mod engine;
pub mod io;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod verify;

pub use model::{
    Allocation, Cost, DemandEntry, MarketInstance, Matrix, PriceVector, ValidationReport,
};
pub use numeric::{Exact, NumericMode, Scalar};
