//! Instance file format.
//!
//! Instances are JSON documents. Every numeric field accepts a JSON number,
//! a decimal string, or a rational string `"a/b"`; the exact backend parses
//! all three losslessly. Costs may also be the string `"blocked"`.
//!
//! ```json
//! {
//!   "epsilon": "0.01",
//!   "goods": [ { "id": "g1" }, { "id": "g2", "supply": 2 } ],
//!   "buyers": [
//!     { "id": "a", "budget": 1, "utilities": [1000, 1], "costs": [1, 1000] },
//!     { "id": "b", "budget": 1, "utilities": [1, 1], "costs": [0, "blocked"] }
//!   ]
//! }
//! ```
//!
//! A good may declare a `supply` other than one. The parser normalizes it
//! away: utilities and costs are rescaled so that one internal unit ("lot")
//! is the whole supply, and reported allocations are scaled back to the
//! original units. Prices coming out of the solver are per lot.

use serde::Deserialize;
use thiserror::Error;

use crate::model::{Allocation, Cost, MarketInstance, Matrix, PriceVector, ValidationReport};
use crate::numeric::{NumberParseError, Scalar};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("syntax error: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{context}: {source}")]
    Number {
        context: String,
        source: NumberParseError,
    },
    #[error("buyer {buyer}: expected {expected} {field}, found {found}")]
    Dimension {
        buyer: String,
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid instance:\n{0}")]
    Invalid(ValidationReport),
}

/// A number literal as found in the document: JSON number or string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawNumber {
    Number(serde_json::Number),
    Text(String),
}

impl RawNumber {
    fn literal(&self) -> String {
        match self {
            RawNumber::Number(n) => n.to_string(),
            RawNumber::Text(s) => s.clone(),
        }
    }

    fn parse<S: Scalar>(&self, context: &str) -> Result<S, FormatError> {
        S::parse_number(&self.literal()).map_err(|source| FormatError::Number {
            context: format!("{context} `{}`", self.literal()),
            source,
        })
    }
}

#[derive(Debug, Deserialize)]
struct RawGood {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    supply: Option<RawNumber>,
}

#[derive(Debug, Deserialize)]
struct RawBuyer {
    #[serde(default)]
    id: Option<String>,
    budget: RawNumber,
    utilities: Vec<RawNumber>,
    costs: Vec<RawNumber>,
}

#[derive(Debug, Deserialize)]
struct RawInstance {
    #[serde(default)]
    epsilon: Option<RawNumber>,
    goods: Vec<RawGood>,
    buyers: Vec<RawBuyer>,
}

/// Parse result: the instance plus the file's optional default epsilon.
#[derive(Debug, Clone)]
pub struct ParsedInstance<S> {
    pub instance: MarketInstance<S>,
    pub epsilon: Option<S>,
}

/// Parse and validate an instance document.
pub fn parse_instance<S: Scalar>(text: &str) -> Result<ParsedInstance<S>, FormatError> {
    let raw: RawInstance = serde_json::from_str(text)?;
    let m = raw.goods.len();

    let mut good_ids = Vec::with_capacity(m);
    let mut supplies = Vec::with_capacity(m);
    for (j, good) in raw.goods.iter().enumerate() {
        good_ids.push(good.id.clone().unwrap_or_else(|| format!("good{}", j + 1)));
        supplies.push(match &good.supply {
            Some(s) => s.parse::<S>(&format!("supply of good {}", good_ids[j]))?,
            None => S::one(),
        });
    }

    let mut buyer_ids = Vec::new();
    let mut budgets = Vec::new();
    let mut utilities = Vec::new();
    let mut costs = Vec::new();
    for (i, buyer) in raw.buyers.iter().enumerate() {
        let id = buyer.id.clone().unwrap_or_else(|| format!("buyer{}", i + 1));
        if buyer.utilities.len() != m {
            return Err(FormatError::Dimension {
                buyer: id,
                field: "utilities",
                expected: m,
                found: buyer.utilities.len(),
            });
        }
        if buyer.costs.len() != m {
            return Err(FormatError::Dimension {
                buyer: id,
                field: "costs",
                expected: m,
                found: buyer.costs.len(),
            });
        }
        budgets.push(buyer.budget.parse::<S>(&format!("budget of buyer {id}"))?);
        let mut urow = Vec::with_capacity(m);
        let mut crow = Vec::with_capacity(m);
        for j in 0..m {
            // supply normalization: one lot of good j is supply[j] units
            let u: S = buyer.utilities[j]
                .parse(&format!("utility of buyer {id} for good {}", good_ids[j]))?;
            urow.push(u * supplies[j].clone());
            let literal = buyer.costs[j].literal();
            if literal.trim().eq_ignore_ascii_case("blocked") {
                crow.push(Cost::Blocked);
            } else {
                let c: S = buyer.costs[j]
                    .parse(&format!("cost of buyer {id} for good {}", good_ids[j]))?;
                crow.push(Cost::Finite(c * supplies[j].clone()));
            }
        }
        utilities.push(urow);
        costs.push(crow);
        buyer_ids.push(id);
    }

    let instance = MarketInstance::from_parts_unchecked(
        budgets,
        Matrix::from_rows(utilities).expect("rows validated above"),
        Matrix::from_rows(costs).expect("rows validated above"),
        Some(supplies),
        Some(buyer_ids),
        Some(good_ids),
    );
    let report = instance.validate();
    if !report.is_valid() {
        return Err(FormatError::Invalid(report));
    }
    let epsilon = match raw.epsilon {
        Some(e) => Some(e.parse::<S>("epsilon")?),
        None => None,
    };
    Ok(ParsedInstance { instance, epsilon })
}

/// Serialize an instance back to the document format.
///
/// Exact scalars are written as rational strings, floats as JSON numbers.
pub fn instance_to_json<S: Scalar>(inst: &MarketInstance<S>, epsilon: Option<&S>) -> String {
    let mut root = serde_json::Map::new();
    if let Some(eps) = epsilon {
        root.insert("epsilon".into(), scalar_value(eps));
    }
    let goods: Vec<serde_json::Value> = (0..inst.m())
        .map(|j| {
            let mut g = serde_json::Map::new();
            g.insert("id".into(), inst.good_id(j).into());
            if !inst.supply(j).approx_eq(&S::one(), 0.0) {
                g.insert("supply".into(), scalar_value(inst.supply(j)));
            }
            g.into()
        })
        .collect();
    root.insert("goods".into(), goods.into());
    let buyers: Vec<serde_json::Value> = (0..inst.n())
        .map(|i| {
            let mut b = serde_json::Map::new();
            b.insert("id".into(), inst.buyer_id(i).into());
            b.insert("budget".into(), scalar_value(inst.budget(i)));
            b.insert(
                "utilities".into(),
                (0..inst.m())
                    .map(|j| scalar_value(inst.utility(i, j)))
                    .collect::<Vec<_>>()
                    .into(),
            );
            b.insert(
                "costs".into(),
                (0..inst.m())
                    .map(|j| match inst.cost(i, j) {
                        Cost::Finite(c) => scalar_value(c),
                        Cost::Blocked => "blocked".into(),
                    })
                    .collect::<Vec<_>>()
                    .into(),
            );
            b.into()
        })
        .collect();
    root.insert("buyers".into(), buyers.into());
    serde_json::to_string_pretty(&serde_json::Value::Object(root)).expect("valid json")
}

/// Render a scalar as a JSON value: floats as numbers, rationals as strings.
pub fn scalar_value<S: Scalar>(s: &S) -> serde_json::Value {
    if S::EXACT {
        serde_json::Value::String(s.render())
    } else {
        serde_json::Number::from_f64(s.to_f64())
            .map(serde_json::Value::Number)
            .unwrap_or_else(|| serde_json::Value::String(s.render()))
    }
}

/// Render a price vector as a JSON array.
pub fn prices_value<S: Scalar>(p: &PriceVector<S>) -> serde_json::Value {
    p.0.iter().map(scalar_value).collect::<Vec<_>>().into()
}

/// Render an allocation (buyers x goods) as a JSON array of arrays,
/// rescaled to the instance's original supply units.
pub fn allocation_value<S: Scalar>(
    inst: &MarketInstance<S>,
    x: &Allocation<S>,
) -> serde_json::Value {
    (0..inst.n())
        .map(|i| {
            (0..inst.m())
                .map(|j| scalar_value(&(x.at(i, j).clone() * inst.supply(j).clone())))
                .collect::<Vec<_>>()
                .into()
        })
        .collect::<Vec<serde_json::Value>>()
        .into()
}

/// Parse a bare JSON array of numbers as a price vector.
pub fn parse_prices<S: Scalar>(text: &str) -> Result<PriceVector<S>, FormatError> {
    let raw: Vec<RawNumber> = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(raw.len());
    for (j, v) in raw.iter().enumerate() {
        out.push(v.parse(&format!("price {j}"))?);
    }
    Ok(PriceVector(out))
}

/// Parse a bare JSON matrix as an allocation; `supplies` divides each column
/// back into internal lot units.
pub fn parse_allocation<S: Scalar>(
    text: &str,
    inst: &MarketInstance<S>,
) -> Result<Allocation<S>, FormatError> {
    let raw: Vec<Vec<RawNumber>> = serde_json::from_str(text)?;
    let mut rows = Vec::with_capacity(raw.len());
    for (i, row) in raw.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (j, v) in row.iter().enumerate() {
            let units: S = v.parse(&format!("allocation [{i}][{j}]"))?;
            out.push(units / inst.supply(j).clone());
        }
        rows.push(out);
    }
    let matrix = Matrix::from_rows(rows).ok_or(FormatError::Dimension {
        buyer: "allocation".into(),
        field: "rows",
        expected: inst.m(),
        found: 0,
    })?;
    Ok(Allocation(matrix))
}
