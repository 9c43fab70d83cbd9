//! Trade accumulation and the run metrics: average item price (AIP), average
//! item trade time in ticks (AITT), and the internal/external trade ratio
//! (ITR).
//!
//! Metrics that are undefined (no trades yet; ITR with zero external trades)
//! are `None` and render as blank CSV cells, never as zero.

use std::fmt::Write as _;

use crate::market::ItemId;
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TradeKind {
    Internal,
    External,
}

impl TradeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TradeKind::Internal => "internal",
            TradeKind::External => "external",
        }
    }
}

/// One completed procurement. `elapsed_ticks` spans from the first
/// consultation message to the stock update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradeRecord {
    pub tick: u64,
    pub item: ItemId,
    pub unit_price: Money,
    pub quantity: u32,
    pub kind: TradeKind,
    pub elapsed_ticks: u64,
}

/// Running totals over all recorded trades, plus the latest trade price per
/// catalog item for the snapshot series.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    catalog: Vec<ItemId>,
    trades: Vec<TradeRecord>,
    internal_count: u64,
    external_count: u64,
    price_cents_sum: i64,
    elapsed_sum: u64,
    latest_price: Vec<Option<Money>>,
}

impl MetricsAccumulator {
    pub fn new(catalog: Vec<ItemId>) -> MetricsAccumulator {
        let latest_price = vec![None; catalog.len()];
        MetricsAccumulator {
            catalog,
            trades: Vec::new(),
            internal_count: 0,
            external_count: 0,
            price_cents_sum: 0,
            elapsed_sum: 0,
            latest_price,
        }
    }

    pub fn record(&mut self, trade: TradeRecord) {
        match trade.kind {
            TradeKind::Internal => self.internal_count += 1,
            TradeKind::External => self.external_count += 1,
        }
        self.price_cents_sum += trade.unit_price.cents();
        self.elapsed_sum += trade.elapsed_ticks;
        if let Some(pos) = self.catalog.iter().position(|i| i == &trade.item) {
            self.latest_price[pos] = Some(trade.unit_price);
        }
        self.trades.push(trade);
    }

    pub fn trades(&self) -> &[TradeRecord] {
        &self.trades
    }

    pub fn trade_count(&self) -> u64 {
        self.trades.len() as u64
    }

    pub fn internal_count(&self) -> u64 {
        self.internal_count
    }

    pub fn external_count(&self) -> u64 {
        self.external_count
    }

    /// Mean unit price over all trades of both kinds; `None` before the
    /// first trade.
    pub fn aip(&self) -> Option<f64> {
        if self.trades.is_empty() {
            return None;
        }
        Some(self.price_cents_sum as f64 / 100.0 / self.trades.len() as f64)
    }

    /// Mean elapsed ticks over all trades; `None` before the first trade.
    pub fn aitt(&self) -> Option<f64> {
        if self.trades.is_empty() {
            return None;
        }
        Some(self.elapsed_sum as f64 / self.trades.len() as f64)
    }

    /// Internal trades divided by external trades; `None` while no external
    /// trade has occurred.
    pub fn itr(&self) -> Option<f64> {
        if self.external_count == 0 {
            return None;
        }
        Some(self.internal_count as f64 / self.external_count as f64)
    }

    pub fn snapshot(&self, tick: u64) -> SnapshotRow {
        SnapshotRow {
            tick,
            trade_count: self.trade_count(),
            aip: self.aip(),
            aitt: self.aitt(),
            itr: self.itr(),
            internal: self.internal_count,
            external: self.external_count,
            latest_price: self.latest_price.clone(),
        }
    }

    /// Header for `metrics.csv`, one trailing column per catalog item.
    pub fn metrics_csv_header(&self) -> String {
        let mut header = String::from("tick,k,aip,aitt,itr,internal,external");
        for item in &self.catalog {
            write!(header, ",{}", item).unwrap();
        }
        header
    }

    pub const TRADES_CSV_HEADER: &'static str = "tick,item,price,quantity,kind,elapsed_ticks";

    pub fn trade_csv_line(trade: &TradeRecord) -> String {
        format!(
            "{},{},{},{},{},{}",
            trade.tick,
            trade.item,
            trade.unit_price,
            trade.quantity,
            trade.kind.as_str(),
            trade.elapsed_ticks
        )
    }
}

/// One `metrics.csv` row: undefined metrics are blank cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub tick: u64,
    pub trade_count: u64,
    pub aip: Option<f64>,
    pub aitt: Option<f64>,
    pub itr: Option<f64>,
    pub internal: u64,
    pub external: u64,
    pub latest_price: Vec<Option<Money>>,
}

impl SnapshotRow {
    pub fn to_csv_line(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{:.6}", x)).unwrap_or_default();
        let mut line = format!(
            "{},{},{},{},{},{},{}",
            self.tick,
            self.trade_count,
            fmt_opt(self.aip),
            fmt_opt(self.aitt),
            fmt_opt(self.itr),
            self.internal,
            self.external
        );
        for price in &self.latest_price {
            match price {
                Some(p) => write!(line, ",{}", p).unwrap(),
                None => line.push(','),
            }
        }
        line
    }
}
