//! Independent equilibrium computation for small instances, used to
//! cross-validate the auction engine.
//!
//! Equilibria of the market coincide with the minimizers of the convex
//! program
//!
//! ```text
//! minimize   sum_j p_j  -  sum_i b_i ln(beta_i)
//! subject to p_j + c_ij >= u_ij beta_i,   p >= 0, beta >= 0
//! ```
//!
//! where `beta_i` is the reciprocal of buyer `i`'s bang-per-buck. For any
//! fixed `beta` the best prices are `p_j = max(0, max_i(u_ij beta_i - c_ij))`,
//! which eliminates `p` and leaves a piecewise-smooth convex function of
//! `beta` alone ([`reduced_objective`]).
//!
//! [`minimize`] solves the program in its constrained form with a
//! log-barrier Newton method over `(beta, p)` jointly: the barrier
//! parameter is annealed geometrically, each stage is centered with damped
//! Newton steps on a small dense system, and the run stops once the
//! duality gap certified by the barrier (parameter times constraint count)
//! is inside the requested tolerance. Minimizers of the reduced objective
//! are exactly the `beta` parts of minimizers of the constrained program,
//! so the two views agree; the reduced form is kept for evaluation and
//! reporting because it is cheap and has no constraints to track.
//! (A cyclic coordinate method on the reduced objective was tried first
//! and can stall on kinks where several buyers tie for one good's price;
//! descent there can require opposite-signed moves that no single
//! coordinate provides.)
//!
//! [`recover_allocation`] turns a near-optimal dual point into a primal
//! allocation supported on tight constraints by solving a small
//! transportation feasibility problem (per-buyer effective prices differ,
//! so this is a generalized transport, handled with a dense phase-1
//! simplex). The oracle works in float arithmetic only; it serves as an
//! approximate cross-check, not a reference semantics.
//!
//! ```
//! use tcfisher::{io, oracle};
//!
//! let doc = r#"{
//!     "goods": [{}],
//!     "buyers": [
//!         {"budget": 1, "utilities": [1], "costs": [0]},
//!         {"budget": 1, "utilities": [1], "costs": ["1/2"]}
//!     ]
//! }"#;
//! let inst = io::parse_instance::<f64>(doc).unwrap().instance;
//! let report = oracle::minimize(&inst, 1e-10).unwrap();
//!
//! // clearing 1/p + 1/(p + 1/2) = 1: the positive root of p^2 - 1.5p - 0.5
//! let root = (1.5 + 4.25f64.sqrt()) / 2.0;
//! assert!((report.dual.prices[0] - root).abs() < 1e-6);
//! ```

use thiserror::Error;

use crate::model::{Allocation, Cost, MarketInstance, Matrix, PriceVector};
use crate::numeric::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("beta must be strictly positive (component {0})")]
    NonPositiveBeta(usize),
    #[error("barrier method did not converge within {stages} stages")]
    NotConverged { stages: usize },
    #[error("allocation recovery infeasible at tolerance (residual {residual:.3e}); dual not converged enough")]
    Infeasible { residual: f64 },
}

/// A dual iterate: the `beta` vector and the prices it induces.
#[derive(Debug, Clone)]
pub struct DualPoint {
    pub beta: Vec<f64>,
    pub prices: Vec<f64>,
}

/// Max-norm residuals of the optimality conditions at a primal-dual pair.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct KktResiduals {
    /// `x_ij > 0  =>  p_j + c_ij = u_ij beta_i`.
    pub complementary_slackness: f64,
    /// `sum_j u_ij x_ij = b_i / beta_i`.
    pub budget: f64,
    /// `sum_i x_ij <= 1`, tight when `p_j > 0`.
    pub clearing: f64,
}

impl KktResiduals {
    pub fn worst(&self) -> f64 {
        self.complementary_slackness
            .max(self.budget)
            .max(self.clearing)
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub dual: DualPoint,
    pub objective: f64,
    pub stages: usize,
    /// True reduced objective after each barrier stage; non-increasing.
    pub stage_objectives: Vec<f64>,
}

/// Outcome of [`recover_allocation`].
#[derive(Debug, Clone)]
pub struct RecoveredAllocation {
    pub allocation: Allocation<f64>,
    /// Worst relative violation of budget exhaustion.
    pub budget_residual: f64,
    /// Worst violation of market clearing.
    pub clearing_residual: f64,
}

/// Internal float view of an instance: per-buyer usable goods with their
/// utilities and costs.
struct View {
    n: usize,
    m: usize,
    budgets: Vec<f64>,
    /// `u[i][j]`, zero when unusable.
    u: Vec<Vec<f64>>,
    /// `c[i][j]`, `None` when blocked.
    c: Vec<Vec<Option<f64>>>,
}

impl View {
    fn new<S: Scalar>(inst: &MarketInstance<S>) -> Self {
        let n = inst.n();
        let m = inst.m();
        View {
            n,
            m,
            budgets: (0..n).map(|i| inst.budget(i).to_f64()).collect(),
            u: (0..n)
                .map(|i| (0..m).map(|j| inst.utility(i, j).to_f64()).collect())
                .collect(),
            c: (0..n)
                .map(|i| {
                    (0..m)
                        .map(|j| match inst.cost(i, j) {
                            Cost::Finite(c) => Some(c.to_f64()),
                            Cost::Blocked => None,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Whether buyer `i` can consume good `j` to any effect.
    fn usable(&self, i: usize, j: usize) -> bool {
        self.c[i][j].is_some() && self.u[i][j] > 0.0
    }

    /// `u_ij * beta_i - c_ij`, the price level buyer `i` supports on `j`.
    fn level(&self, i: usize, j: usize, beta_i: f64) -> Option<f64> {
        self.c[i][j].map(|c| self.u[i][j] * beta_i - c)
    }

    fn induced_price(&self, beta: &[f64], j: usize) -> f64 {
        let mut p = 0.0f64;
        for i in 0..self.n {
            if let Some(l) = self.level(i, j, beta[i]) {
                p = p.max(l);
            }
        }
        p
    }
}

/// Prices induced by a `beta` vector: `p_j = max(0, max_i(u_ij beta_i - c_ij))`.
pub fn induced_prices<S: Scalar>(inst: &MarketInstance<S>, beta: &[f64]) -> Vec<f64> {
    let view = View::new(inst);
    (0..view.m).map(|j| view.induced_price(beta, j)).collect()
}

/// The reduced dual objective
/// `f(beta) = sum_j max(0, max_i(u_ij beta_i - c_ij)) - sum_i b_i ln beta_i`.
pub fn reduced_objective<S: Scalar>(
    inst: &MarketInstance<S>,
    beta: &[f64],
) -> Result<f64, OracleError> {
    if let Some(bad) = beta.iter().position(|&b| b <= 0.0) {
        return Err(OracleError::NonPositiveBeta(bad));
    }
    let view = View::new(inst);
    Ok(objective(&view, beta))
}

fn objective(view: &View, beta: &[f64]) -> f64 {
    let mut f = 0.0;
    for j in 0..view.m {
        f += view.induced_price(beta, j);
    }
    for i in 0..view.n {
        f -= view.budgets[i] * beta[i].ln();
    }
    f
}

/// Strictly feasible interior point: `beta` from budget scaling, prices
/// one unit above every supported level.
fn interior_start(view: &View) -> (Vec<f64>, Vec<f64>) {
    let beta: Vec<f64> = (0..view.n)
        .map(|i| {
            let total: f64 = (0..view.m)
                .filter(|&j| view.usable(i, j))
                .map(|j| view.u[i][j])
                .sum();
            view.budgets[i] / total
        })
        .collect();
    let prices: Vec<f64> = (0..view.m)
        .map(|j| view.induced_price(&beta, j) + 1.0)
        .collect();
    (beta, prices)
}

/// Solve the dense symmetric system `H d = -g` by Gaussian elimination
/// with partial pivoting. Returns `None` when the system is numerically
/// singular.
fn solve_dense(mut h: Vec<Vec<f64>>, mut g: Vec<f64>) -> Option<Vec<f64>> {
    let dim = g.len();
    for col in 0..dim {
        let pivot_row = (col..dim)
            .max_by(|&a, &b| h[a][col].abs().partial_cmp(&h[b][col].abs()).expect("finite"))?;
        if h[pivot_row][col].abs() < 1e-300 {
            return None;
        }
        h.swap(col, pivot_row);
        g.swap(col, pivot_row);
        for row in col + 1..dim {
            let factor = h[row][col] / h[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..dim {
                h[row][k] -= factor * h[col][k];
            }
            g[row] -= factor * g[col];
        }
    }
    let mut d = vec![0.0f64; dim];
    for row in (0..dim).rev() {
        let mut acc = g[row];
        for k in row + 1..dim {
            acc -= h[row][k] * d[k];
        }
        d[row] = acc / h[row][row];
    }
    // the Newton direction for `H d = -g`
    for v in d.iter_mut() {
        *v = -*v;
    }
    Some(d)
}

/// The barrier-augmented objective at `(beta, p)`, or `None` when the
/// point is infeasible.
fn barrier_value(view: &View, beta: &[f64], prices: &[f64], mu: f64) -> Option<f64> {
    let mut f = 0.0f64;
    for i in 0..view.n {
        if beta[i] <= 0.0 {
            return None;
        }
        f -= view.budgets[i] * beta[i].ln();
    }
    for j in 0..view.m {
        if prices[j] <= 0.0 {
            return None;
        }
        f += prices[j] - mu * prices[j].ln();
    }
    for i in 0..view.n {
        for j in 0..view.m {
            if !view.usable(i, j) {
                continue;
            }
            let slack = prices[j] + view.c[i][j].expect("usable") - view.u[i][j] * beta[i];
            if slack <= 0.0 {
                return None;
            }
            f -= mu * slack.ln();
        }
    }
    Some(f)
}

/// One centering stage: damped Newton on the barrier objective at fixed
/// `mu`, until the Newton decrement certifies proximity to the central
/// path. Variables are ordered `(beta_0..beta_n, p_0..p_m)`.
fn center(view: &View, beta: &mut [f64], prices: &mut [f64], mu: f64) -> Result<(), OracleError> {
    let n = view.n;
    let m = view.m;
    let dim = n + m;
    for _ in 0..64 {
        let mut g = vec![0.0f64; dim];
        let mut h = vec![vec![0.0f64; dim]; dim];
        for i in 0..n {
            g[i] = -view.budgets[i] / beta[i];
            h[i][i] = view.budgets[i] / (beta[i] * beta[i]);
        }
        for j in 0..m {
            g[n + j] = 1.0 - mu / prices[j];
            h[n + j][n + j] = mu / (prices[j] * prices[j]);
        }
        for i in 0..n {
            for j in 0..m {
                if !view.usable(i, j) {
                    continue;
                }
                let u = view.u[i][j];
                let slack = prices[j] + view.c[i][j].expect("usable") - u * beta[i];
                let inv = 1.0 / slack;
                let inv2 = inv * inv;
                g[i] += mu * u * inv;
                g[n + j] -= mu * inv;
                h[i][i] += mu * u * u * inv2;
                h[n + j][n + j] += mu * inv2;
                h[i][n + j] -= mu * u * inv2;
                h[n + j][i] -= mu * u * inv2;
            }
        }
        let Some(step) = solve_dense(h, g.clone()) else {
            return Err(OracleError::NotConverged { stages: 0 });
        };
        let decrement: f64 = -step.iter().zip(&g).map(|(d, gv)| d * gv).sum::<f64>();
        if decrement <= 1e-2 * mu {
            return Ok(());
        }
        // backtracking line search on the barrier objective
        let current = barrier_value(view, beta, prices, mu).expect("iterate stays feasible");
        let mut t = 1.0f64;
        let mut accepted = false;
        for _ in 0..60 {
            let cand_beta: Vec<f64> = (0..n).map(|i| beta[i] + t * step[i]).collect();
            let cand_prices: Vec<f64> = (0..m).map(|j| prices[j] + t * step[n + j]).collect();
            if let Some(value) = barrier_value(view, &cand_beta, &cand_prices, mu) {
                if value <= current - 1e-4 * t * decrement {
                    beta.copy_from_slice(&cand_beta);
                    prices.copy_from_slice(&cand_prices);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            // stalled inside a stage: numerically centered already
            return Ok(());
        }
    }
    Ok(())
}

const MIN_MU: f64 = 1e-13;

/// Minimize the reduced dual objective to the requested relative accuracy.
///
/// Runs the barrier method on the constrained program and stops when the
/// certified duality gap (`mu` times the number of inequality constraints)
/// falls below `tol * (1 + |f|)`.
pub fn minimize<S: Scalar>(
    inst: &MarketInstance<S>,
    tol: f64,
) -> Result<MinimizeReport, OracleError> {
    let view = View::new(inst);
    let (mut beta, mut prices) = interior_start(&view);
    let constraint_count = ((0..view.n)
        .flat_map(|i| (0..view.m).map(move |j| (i, j)))
        .filter(|&(i, j)| view.usable(i, j))
        .count()
        + view.m) as f64;

    let mut mu = view.budgets.iter().sum::<f64>().max(1.0);
    let mut stage_objectives = Vec::new();
    let mut stages = 0usize;
    loop {
        stages += 1;
        center(&view, &mut beta, &mut prices, mu)?;
        let f = objective(&view, &beta);
        stage_objectives.push(f);
        let gap = mu * constraint_count;
        if gap <= tol * (1.0 + f.abs()) || mu <= MIN_MU {
            let induced = (0..view.m).map(|j| view.induced_price(&beta, j)).collect();
            return Ok(MinimizeReport {
                dual: DualPoint {
                    beta,
                    prices: induced,
                },
                objective: f,
                stages,
                stage_objectives,
            });
        }
        if stages > 200 {
            return Err(OracleError::NotConverged { stages });
        }
        mu *= 0.2;
    }
}

/// Max-norm residuals of the optimality conditions.
pub fn kkt_residuals<S: Scalar>(
    inst: &MarketInstance<S>,
    prices: &PriceVector<f64>,
    beta: &[f64],
    x: &Allocation<f64>,
) -> Result<KktResiduals, OracleError> {
    if let Some(bad) = beta.iter().position(|&b| b <= 0.0) {
        return Err(OracleError::NonPositiveBeta(bad));
    }
    let view = View::new(inst);
    let mut cs = 0.0f64;
    let mut budget = 0.0f64;
    let mut clearing = 0.0f64;
    for i in 0..view.n {
        let mut value = 0.0;
        for j in 0..view.m {
            let xij = *x.at(i, j);
            if xij > 0.0 {
                let eff = prices.get(j) + view.c[i][j].unwrap_or(f64::INFINITY);
                let gap = (eff - view.u[i][j] * beta[i]).abs() / eff.abs().max(1.0);
                cs = cs.max(gap);
            }
            value += view.u[i][j] * xij;
        }
        let target = view.budgets[i] / beta[i];
        budget = budget.max((value - target).abs() / target.abs().max(1.0));
    }
    for j in 0..view.m {
        let sold: f64 = (0..view.n).map(|i| *x.at(i, j)).sum();
        clearing = clearing.max(sold - 1.0);
        if *prices.get(j) > 0.0 {
            clearing = clearing.max((1.0 - sold).abs());
        }
    }
    Ok(KktResiduals {
        complementary_slackness: cs,
        budget,
        clearing,
    })
}

/// Feasibility solver: find `x >= 0` with `A x = rhs`, minimizing the total
/// artificial infeasibility with a dense phase-1 simplex (Bland's rule).
/// Returns the solution and the leftover infeasibility.
fn phase1_simplex(a: &[Vec<f64>], rhs: &[f64]) -> (Vec<f64>, f64) {
    const PIVOT_TOL: f64 = 1e-11;
    let rows = a.len();
    let cols = if rows == 0 { 0 } else { a[0].len() };
    // tableau: [A | I | b], artificial basis
    let mut t = vec![vec![0.0f64; cols + rows + 1]; rows];
    for (r, row) in a.iter().enumerate() {
        let sign = if rhs[r] < 0.0 { -1.0 } else { 1.0 };
        for (c, &v) in row.iter().enumerate() {
            t[r][c] = sign * v;
        }
        t[r][cols + r] = 1.0;
        t[r][cols + rows] = sign * rhs[r];
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    // reduced costs of minimizing the artificial sum
    let mut obj = vec![0.0f64; cols + rows + 1];
    for r in 0..rows {
        for c in 0..=cols + rows {
            obj[c] += t[r][c];
        }
    }
    for c in cols..cols + rows {
        obj[c] = 0.0;
    }

    // Bland: enter on the first column with positive reduced cost
    while let Some(enter) = (0..cols).find(|&c| obj[c] > PIVOT_TOL) {
        // ratio test, lowest row index on ties
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for r in 0..rows {
            if t[r][enter] > PIVOT_TOL {
                let ratio = t[r][cols + rows] / t[r][enter];
                if ratio < best - PIVOT_TOL
                    || (ratio < best + PIVOT_TOL && leave.is_some_and(|l| basis[l] > basis[r]))
                {
                    best = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(leave) = leave else {
            break; // unbounded: cannot happen with artificial objective
        };
        // pivot
        let piv = t[leave][enter];
        for v in t[leave].iter_mut() {
            *v /= piv;
        }
        for r in 0..rows {
            if r != leave && t[r][enter].abs() > 0.0 {
                let factor = t[r][enter];
                for c in 0..=cols + rows {
                    t[r][c] -= factor * t[leave][c];
                }
            }
        }
        let factor = obj[enter];
        for c in 0..=cols + rows {
            obj[c] -= factor * t[leave][c];
        }
        basis[leave] = enter;
    }

    let mut x = vec![0.0f64; cols];
    let mut infeasibility = 0.0;
    for r in 0..rows {
        let value = t[r][cols + rows];
        if basis[r] < cols {
            x[basis[r]] = value.max(0.0);
        } else {
            infeasibility += value.abs();
        }
    }
    (x, infeasibility)
}

/// Recover a primal allocation from a near-optimal dual point.
///
/// The allocation is supported on tight constraints
/// `p_j + c_ij = u_ij beta_i` (within a tie window scaled from `tol`),
/// must exhaust every budget and clear every positively priced good. If
/// the feasibility problem does not close at the initial window the window
/// is widened twice before giving up.
pub fn recover_allocation<S: Scalar>(
    inst: &MarketInstance<S>,
    dual: &DualPoint,
    tol: f64,
) -> Result<RecoveredAllocation, OracleError> {
    let view = View::new(inst);
    let price_floor = 1e-12;
    let mut last_residual = f64::INFINITY;
    for widen in [1.0, 10.0, 100.0] {
        let window = (100.0 * tol).max(1e-12) * widen;
        // tight usable edges
        let mut edges: Vec<(usize, usize, f64)> = Vec::new(); // (i, j, eff price)
        for i in 0..view.n {
            for j in 0..view.m {
                if !view.usable(i, j) {
                    continue;
                }
                let eff = dual.prices[j] + view.c[i][j].expect("usable");
                let gap = (eff - view.u[i][j] * dual.beta[i]).abs();
                if gap <= window * eff.abs().max(1.0) {
                    edges.push((i, j, eff));
                }
            }
        }
        // rows: one per buyer (budget), one per good (clearing; slack when
        // the price is zero)
        let rows = view.n + view.m;
        let slack_goods: Vec<bool> = (0..view.m)
            .map(|j| dual.prices[j] <= price_floor)
            .collect();
        let slack_count = slack_goods.iter().filter(|&&s| s).count();
        let cols = edges.len() + slack_count;
        let mut a = vec![vec![0.0f64; cols]; rows];
        let mut rhs = vec![0.0f64; rows];
        for (e, &(i, j, eff)) in edges.iter().enumerate() {
            a[i][e] = eff;
            a[view.n + j][e] = 1.0;
        }
        rhs[..view.n].copy_from_slice(&view.budgets);
        let mut slack_col = edges.len();
        for j in 0..view.m {
            rhs[view.n + j] = 1.0;
            if slack_goods[j] {
                a[view.n + j][slack_col] = 1.0;
                slack_col += 1;
            }
        }

        let (solution, infeasibility) = phase1_simplex(&a, &rhs);
        let scale: f64 = view.budgets.iter().sum::<f64>().max(1.0);
        last_residual = infeasibility / scale;
        if last_residual > window.max(1e-9) {
            continue; // widen the tie window and retry
        }

        let mut x = Matrix::filled(view.n, view.m, 0.0f64);
        for (e, &(i, j, _)) in edges.iter().enumerate() {
            *x.at_mut(i, j) += solution[e];
        }
        let allocation = Allocation(x);
        let mut budget_residual = 0.0f64;
        for i in 0..view.n {
            let spent: f64 = (0..view.m)
                .filter_map(|j| {
                    view.c[i][j].map(|c| (dual.prices[j] + c) * allocation.at(i, j))
                })
                .sum();
            budget_residual = budget_residual
                .max((spent - view.budgets[i]).abs() / view.budgets[i].max(1.0));
        }
        let mut clearing_residual = 0.0f64;
        for j in 0..view.m {
            let sold: f64 = (0..view.n).map(|i| *allocation.at(i, j)).sum();
            clearing_residual = clearing_residual.max(sold - 1.0);
            if dual.prices[j] > price_floor {
                clearing_residual = clearing_residual.max((1.0 - sold).abs());
            }
        }
        return Ok(RecoveredAllocation {
            allocation,
            budget_residual,
            clearing_residual,
        });
    }
    Err(OracleError::Infeasible {
        residual: last_residual,
    })
}
