//! Market domain types and the price/demand primitives shared by the
//! solver, the verifier and the convex cross-check.
//!
//! A market has `n` buyers and `m` divisible goods, each with one unit of
//! supply. Buyer `i` holds a budget `b_i`, draws utility `u_ij` per unit of
//! good `j`, and pays a per-unit transaction cost `c_ij` on top of the price:
//! the effective price of good `j` for buyer `i` is `p_j + c_ij`. A cost may
//! also be [`Cost::Blocked`], meaning the pair cannot trade at all.

use std::fmt;

use thiserror::Error;

use crate::numeric::Scalar;

/// Per-unit transaction cost of a buyer/good pair.
///
/// `Blocked` models a forbidden trade. It is kept as an explicit marker
/// rather than a huge sentinel value so the exact backend never has to
/// manipulate pseudo-infinities.
#[derive(Debug, Clone, PartialEq)]
pub enum Cost<S> {
    Finite(S),
    Blocked,
}

impl<S> Cost<S> {
    pub fn is_blocked(&self) -> bool {
        matches!(self, Cost::Blocked)
    }

    pub fn as_finite(&self) -> Option<&S> {
        match self {
            Cost::Finite(c) => Some(c),
            Cost::Blocked => None,
        }
    }
}

/// Dense row-major matrix used for utilities, costs and allocations.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> Matrix<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> Matrix<T> {
    pub fn from_rows(rows: Vec<Vec<T>>) -> Option<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return None;
        }
        Some(Matrix {
            rows: nrows,
            cols: ncols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.cols + col]
    }

    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut T {
        &mut self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }
}

/// A validated market: budgets, utilities, costs, unit supplies.
///
/// `supplies` records the original supply of each good when the instance
/// file declared one; the engine always works on normalized unit lots and
/// the original scale is only applied back when reporting allocations.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance<S> {
    budgets: Vec<S>,
    utilities: Matrix<S>,
    costs: Matrix<Cost<S>>,
    supplies: Vec<S>,
    buyer_ids: Vec<String>,
    good_ids: Vec<String>,
}

/// Per-good prices.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector<S>(pub Vec<S>);

impl<S> PriceVector<S> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> &S {
        &self.0[j]
    }
}

/// Units of each good held by each buyer; rows are buyers.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<S>(pub Matrix<S>);

impl<S> Allocation<S> {
    pub fn at(&self, buyer: usize, good: usize) -> &S {
        self.0.at(buyer, good)
    }
}

/// A buyer's bang-per-buck and demand set at given prices.
///
/// `alpha` is the best utility-per-money ratio over non-blocked goods and
/// `demand_set` lists (ascending) the goods attaining it under the backend's
/// equality contract.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandEntry<S> {
    pub alpha: S,
    pub demand_set: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("buyer {buyer} has zero effective price on good {good} with positive utility")]
    ZeroEffectivePrice { buyer: usize, good: usize },
    #[error("buyer {buyer} has no good with positive utility and finite cost")]
    NoUsableGood { buyer: usize },
}

/// One violated instance invariant.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationIssue {
    pub message: String,
}

/// Outcome of [`MarketInstance::validate`]; empty iff the instance is valid.
#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, message: String) {
        self.issues.push(ValidationIssue { message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "ok");
        }
        for issue in &self.issues {
            writeln!(f, "{}", issue.message)?;
        }
        Ok(())
    }
}

impl<S: Scalar> MarketInstance<S> {
    /// Assemble an instance from raw parts without validating it. Use
    /// [`MarketInstance::new`] unless invalid instances are needed on
    /// purpose (e.g. to test the validator).
    pub fn from_parts_unchecked(
        budgets: Vec<S>,
        utilities: Matrix<S>,
        costs: Matrix<Cost<S>>,
        supplies: Option<Vec<S>>,
        buyer_ids: Option<Vec<String>>,
        good_ids: Option<Vec<String>>,
    ) -> Self {
        let n = budgets.len();
        let m = utilities.cols();
        let supplies = supplies.unwrap_or_else(|| vec![S::one(); m]);
        let buyer_ids =
            buyer_ids.unwrap_or_else(|| (0..n).map(|i| format!("buyer{}", i + 1)).collect());
        let good_ids =
            good_ids.unwrap_or_else(|| (0..m).map(|j| format!("good{}", j + 1)).collect());
        MarketInstance {
            budgets,
            utilities,
            costs,
            supplies,
            buyer_ids,
            good_ids,
        }
    }

    /// Build and validate an instance.
    pub fn new(
        budgets: Vec<S>,
        utilities: Matrix<S>,
        costs: Matrix<Cost<S>>,
    ) -> Result<Self, ValidationReport> {
        let inst = Self::from_parts_unchecked(budgets, utilities, costs, None, None, None);
        let report = inst.validate();
        if report.is_valid() {
            Ok(inst)
        } else {
            Err(report)
        }
    }

    pub fn n(&self) -> usize {
        self.budgets.len()
    }

    pub fn m(&self) -> usize {
        self.utilities.cols()
    }

    pub fn budget(&self, i: usize) -> &S {
        &self.budgets[i]
    }

    pub fn budgets(&self) -> &[S] {
        &self.budgets
    }

    pub fn utility(&self, i: usize, j: usize) -> &S {
        self.utilities.at(i, j)
    }

    pub fn cost(&self, i: usize, j: usize) -> &Cost<S> {
        self.costs.at(i, j)
    }

    pub fn supply(&self, j: usize) -> &S {
        &self.supplies[j]
    }

    pub fn buyer_id(&self, i: usize) -> &str {
        &self.buyer_ids[i]
    }

    pub fn good_id(&self, j: usize) -> &str {
        &self.good_ids[j]
    }

    /// Sum of all budgets.
    pub fn total_budget(&self) -> S {
        self.budgets
            .iter()
            .fold(S::zero(), |acc, b| acc + b.clone())
    }

    /// Effective per-unit price `p_j + c_ij` of good `j` for buyer `i`,
    /// or `None` when the pair is blocked.
    pub fn effective_price(&self, prices: &PriceVector<S>, i: usize, j: usize) -> Option<S> {
        self.cost(i, j)
            .as_finite()
            .map(|c| prices.get(j).clone() + c.clone())
    }

    /// Bang-per-buck `alpha_i = max_j u_ij / (p_j + c_ij)` and the demand
    /// set of buyer `i` at the given prices.
    ///
    /// The demand set contains exactly the goods `j` with
    /// `u_ij = alpha_i * (p_j + c_ij)` under the backend equality contract,
    /// sorted ascending. Blocked goods never appear.
    pub fn compute_demand(
        &self,
        prices: &PriceVector<S>,
        i: usize,
        tol: f64,
    ) -> Result<DemandEntry<S>, ModelError> {
        // argmax scan compares u_j / eff_j pairwise without forming the
        // quotients; only the winner is divided out
        let mut best: Option<(S, S)> = None; // (u, eff) of the best ratio
        for j in 0..self.m() {
            let Some(eff) = self.effective_price(prices, i, j) else {
                continue;
            };
            let u = self.utility(i, j);
            if eff.is_zero() {
                if u.is_positive() {
                    return Err(ModelError::ZeroEffectivePrice { buyer: i, good: j });
                }
                continue;
            }
            let better = match &best {
                Some((bu, beff)) => {
                    S::ratio_cmp(u, &eff, bu, beff) == Some(std::cmp::Ordering::Greater)
                }
                None => true,
            };
            if better {
                best = Some((u.clone(), eff));
            }
        }
        let (best_u, best_eff) = best.ok_or(ModelError::NoUsableGood { buyer: i })?;
        let alpha = best_u.clone() / best_eff.clone();
        let mut demand_set = Vec::new();
        for j in 0..self.m() {
            let Some(eff) = self.effective_price(prices, i, j) else {
                continue;
            };
            let member = if S::EXACT {
                // u_j / eff_j == best_u / best_eff, cross-multiplied
                S::ratio_cmp(self.utility(i, j), &eff, &best_u, &best_eff)
                    == Some(std::cmp::Ordering::Equal)
            } else {
                self.utility(i, j).approx_eq(&(alpha.clone() * eff), tol)
            };
            if member {
                demand_set.push(j);
            }
        }
        Ok(DemandEntry { alpha, demand_set })
    }

    /// Check every instance invariant and list the violations.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.n();
        let m = self.m();
        if n == 0 {
            report.push("instance has no buyers".to_string());
        }
        if m == 0 {
            report.push("instance has no goods".to_string());
        }
        if self.utilities.rows() != n || self.costs.rows() != n || self.costs.cols() != m {
            report.push(format!(
                "dimension mismatch: {} budgets, {}x{} utilities, {}x{} costs",
                n,
                self.utilities.rows(),
                self.utilities.cols(),
                self.costs.rows(),
                self.costs.cols(),
            ));
            return report;
        }
        if self.supplies.len() != m {
            report.push(format!(
                "dimension mismatch: {} goods but {} supplies",
                m,
                self.supplies.len()
            ));
            return report;
        }
        for (i, b) in self.budgets.iter().enumerate() {
            if !b.is_positive() {
                report.push(format!("non-positive budget, buyer {}", self.buyer_ids[i]));
            }
        }
        for (j, s) in self.supplies.iter().enumerate() {
            if !s.is_positive() {
                report.push(format!("non-positive supply, good {}", self.good_ids[j]));
            }
        }
        for i in 0..n {
            let mut usable = false;
            for j in 0..m {
                let u = self.utility(i, j);
                if *u < S::zero() {
                    report.push(format!(
                        "negative utility, buyer {} good {}",
                        self.buyer_ids[i], self.good_ids[j]
                    ));
                }
                match self.cost(i, j) {
                    Cost::Finite(c) => {
                        if *c < S::zero() {
                            report.push(format!(
                                "negative cost, buyer {} good {}",
                                self.buyer_ids[i], self.good_ids[j]
                            ));
                        } else if u.is_positive() {
                            usable = true;
                        }
                    }
                    Cost::Blocked => {}
                }
            }
            if !usable {
                report.push(format!(
                    "buyer has no usable good: {}",
                    self.buyer_ids[i]
                ));
            }
        }
        report
    }
}
