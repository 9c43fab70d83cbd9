//! Item catalog, client/seller per-item records, and scenario files.
//!
//! A scenario is a TOML document with top-level keys `items`,
//! `client_templates`, `seller_templates`, `clients`, `sellers`, `mode`,
//! `seed`, `max_ticks`, `auction_max_rounds`, `sales_max_per_tick`. Each
//! template carries one row per catalog item.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::money::Money;

/// Catalog item identifier, unique within a scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub String);

impl ItemId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ItemId {
    fn from(s: &str) -> ItemId {
        ItemId(s.to_string())
    }
}

/// One client inventory row: stock bounds and the price paid in the last
/// transaction for the item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientItemRecord {
    pub item: ItemId,
    pub stock: u32,
    pub min_stock: u32,
    pub max_stock: u32,
    pub buy_price: Money,
}

/// One seller pricing row: current price and the admissible price band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerItemRecord {
    pub item: ItemId,
    pub price: Money,
    pub min_price: Money,
    pub max_price: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientTemplate {
    pub rows: Vec<ClientItemRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellerTemplate {
    pub rows: Vec<SellerItemRecord>,
}

/// Whether clients may trade with each other before falling back to sellers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TradingMode {
    #[serde(rename = "external-only")]
    ExternalOnly,
    #[serde(rename = "internal-external")]
    InternalExternal,
}

impl TradingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TradingMode::ExternalOnly => "external-only",
            TradingMode::InternalExternal => "internal-external",
        }
    }
}

impl fmt::Display for TradingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TradingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "external-only" => Ok(TradingMode::ExternalOnly),
            "internal-external" => Ok(TradingMode::InternalExternal),
            other => Err(format!(
                "unknown mode {:?}; expected external-only or internal-external",
                other
            )),
        }
    }
}

/// A validated simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub items: Vec<ItemId>,
    pub clients: u32,
    pub sellers: u32,
    pub mode: TradingMode,
    pub seed: u64,
    pub max_ticks: u64,
    pub auction_max_rounds: u32,
    pub sales_max_per_tick: u32,
    pub client_templates: Vec<ClientTemplate>,
    pub seller_templates: Vec<SellerTemplate>,
}

/// A single validation diagnostic, naming where and what.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub context: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.context, self.message)
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario ({} violation{})", .0.len(), if .0.len() == 1 { "" } else { "s" })]
    Invalid(Vec<Violation>),
}

impl ScenarioError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let scenario: Scenario = toml::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialization cannot fail")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut violations = Vec::new();
        let mut check = |ok: bool, context: &str, message: String| {
            if !ok {
                violations.push(Violation {
                    context: context.to_string(),
                    message,
                });
            }
        };

        check(
            self.clients >= 1,
            "clients",
            "client count must be at least 1".into(),
        );
        check(
            self.sellers >= 1,
            "sellers",
            "seller count must be at least 1".into(),
        );
        check(
            self.max_ticks >= 1,
            "max_ticks",
            "must be at least 1".into(),
        );
        check(
            self.auction_max_rounds >= 1,
            "auction_max_rounds",
            "must be at least 1".into(),
        );
        check(
            !self.items.is_empty(),
            "items",
            "catalog must not be empty".into(),
        );
        for (i, item) in self.items.iter().enumerate() {
            let context = format!("items[{}]", i);
            check(
                !item.0.is_empty(),
                &context,
                "item id must be non-empty".into(),
            );
            check(
                !item.0.contains([',', ';', '=', '\n']),
                &context,
                format!("item id {:?} contains a reserved character", item.0),
            );
            check(
                !self.items[..i].contains(item),
                &context,
                format!("duplicate item id {:?}", item.0),
            );
        }
        check(
            !self.client_templates.is_empty(),
            "client_templates",
            "at least one template required".into(),
        );
        check(
            !self.seller_templates.is_empty(),
            "seller_templates",
            "at least one template required".into(),
        );

        for (t, template) in self.client_templates.iter().enumerate() {
            let name = format!("client template {}", t + 1);
            self.check_item_coverage(
                &name,
                template.rows.iter().map(|r| &r.item),
                &mut violations,
            );
            for row in &template.rows {
                let context = format!("{}, item {}", name, row.item);
                let mut check = |ok: bool, message: String| {
                    if !ok {
                        violations.push(Violation {
                            context: context.clone(),
                            message,
                        });
                    }
                };
                check(
                    row.min_stock <= row.max_stock,
                    format!(
                        "min_stock {} exceeds max_stock {}",
                        row.min_stock, row.max_stock
                    ),
                );
                check(
                    row.stock <= row.max_stock,
                    format!("stock {} exceeds max_stock {}", row.stock, row.max_stock),
                );
                check(
                    !row.buy_price.is_zero(),
                    format!("buy_price {} must be positive", row.buy_price),
                );
            }
        }

        for (t, template) in self.seller_templates.iter().enumerate() {
            let name = format!("seller template {}", t + 1);
            self.check_item_coverage(
                &name,
                template.rows.iter().map(|r| &r.item),
                &mut violations,
            );
            for row in &template.rows {
                let context = format!("{}, item {}", name, row.item);
                let mut check = |ok: bool, message: String| {
                    if !ok {
                        violations.push(Violation {
                            context: context.clone(),
                            message,
                        });
                    }
                };
                check(
                    !row.min_price.is_zero(),
                    format!("min_price {} must be positive", row.min_price),
                );
                check(
                    row.min_price <= row.price,
                    format!("price {} is below min_price {}", row.price, row.min_price),
                );
                check(
                    row.price <= row.max_price,
                    format!("price {} exceeds max_price {}", row.price, row.max_price),
                );
            }
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }

    fn check_item_coverage<'a>(
        &self,
        name: &str,
        rows: impl Iterator<Item = &'a ItemId>,
        violations: &mut Vec<Violation>,
    ) {
        let mut seen: Vec<&ItemId> = Vec::new();
        for item in rows {
            if seen.contains(&item) {
                violations.push(Violation {
                    context: name.to_string(),
                    message: format!("duplicate row for item {:?}", item.0),
                });
            }
            if !self.items.contains(item) {
                violations.push(Violation {
                    context: name.to_string(),
                    message: format!("item set mismatch: row for unknown item {:?}", item.0),
                });
            }
            seen.push(item);
        }
        for item in &self.items {
            if !seen.contains(&item) {
                violations.push(Violation {
                    context: name.to_string(),
                    message: format!("item set mismatch: missing row for item {:?}", item.0),
                });
            }
        }
    }

    /// Reorders each template's rows to catalog order. Requires a validated
    /// scenario.
    fn template_rows_in_catalog_order(
        &self,
    ) -> (Vec<Vec<ClientItemRecord>>, Vec<Vec<SellerItemRecord>>) {
        let client_rows = self
            .client_templates
            .iter()
            .map(|t| {
                self.items
                    .iter()
                    .map(|item| {
                        t.rows
                            .iter()
                            .find(|r| &r.item == item)
                            .expect("validated template covers catalog")
                            .clone()
                    })
                    .collect()
            })
            .collect();
        let seller_rows = self
            .seller_templates
            .iter()
            .map(|t| {
                self.items
                    .iter()
                    .map(|item| {
                        t.rows
                            .iter()
                            .find(|r| &r.item == item)
                            .expect("validated template covers catalog")
                            .clone()
                    })
                    .collect()
            })
            .collect();
        (client_rows, seller_rows)
    }
}

/// Per-agent initial inventories/pricing drawn from the scenario templates.
/// Each agent receives an independent deep copy of a uniformly chosen
/// template; rows come out in catalog order. Clients are sampled first, then
/// sellers, one draw per agent.
pub fn sample_initial_state(
    scenario: &Scenario,
    rng: &mut impl Rng,
) -> (Vec<Vec<ClientItemRecord>>, Vec<Vec<SellerItemRecord>>) {
    let (client_rows, seller_rows) = scenario.template_rows_in_catalog_order();
    let clients = (0..scenario.clients)
        .map(|_| client_rows[rng.gen_range(0..client_rows.len())].clone())
        .collect();
    let sellers = (0..scenario.sellers)
        .map(|_| seller_rows[rng.gen_range(0..seller_rows.len())].clone())
        .collect();
    (clients, sellers)
}
