//! Client and seller behavior: virtual sales, inventory monitoring, internal
//! offer handling, and seller bidding/fulfillment.
//!
//! State transitions here are engine-driven; this module holds the per-agent
//! state plus the decision rules. A client keeps at most one active
//! procurement per item. Providers reserve the quantities they have proposed
//! so concurrent requesters can never pull them below their stock floor.

use std::collections::BTreeMap;

use rand::Rng;

use crate::auction::AuctionState;
use crate::bdi::{BeliefStore, IntentionStack};
use crate::market::{ClientItemRecord, ItemId, SellerItemRecord};
use crate::messaging::AgentId;
use crate::money::Money;

/// Name of the single client action that advances every pending procurement
/// whose replies are complete.
pub const ACTION_ADVANCE_PROCUREMENTS: &str = "advance-procurements";
/// Done-condition of the procurement intention.
pub const PREDICATE_NO_ACTIVE_PROCUREMENTS: &str = "no-active-procurements";

/// Belief type holding internal offers: content `[item, client, price]`.
pub const BELIEF_PROPOSAL_FROM_CLIENTS: &str = "proposal-from-clients";
/// Belief type holding seller bids: content `[item, seller, price]`.
pub const BELIEF_PROPOSAL: &str = "proposal";

/// Where a procurement currently stands.
#[derive(Debug, Clone)]
pub enum ProcurementPhase {
    /// Internal cfps are out; waiting on the other clients.
    InternalPending {
        polled: Vec<AgentId>,
        responded: Vec<AgentId>,
    },
    /// A reverse auction is running.
    Auction(AuctionState),
    /// A winner was accepted; waiting for its success message.
    AwaitingSuccess {
        seller: AgentId,
        price: Money,
        rounds_used: u32,
    },
}

/// One in-flight restock effort for one item.
#[derive(Debug, Clone)]
pub struct ProcurementState {
    pub item: ItemId,
    pub phase: ProcurementPhase,
    pub start_tick: u64,
    pub target_quantity: u32,
}

impl ProcurementState {
    pub fn internal_replies_complete(&self) -> bool {
        match &self.phase {
            ProcurementPhase::InternalPending { polled, responded } => {
                polled.iter().all(|p| responded.contains(p))
            }
            _ => false,
        }
    }
}

/// A store of the retail chain.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: AgentId,
    /// Inventory rows in catalog order.
    pub inventory: Vec<ClientItemRecord>,
    pub beliefs: BeliefStore,
    pub intentions: IntentionStack,
    pub procurements: Vec<ProcurementState>,
    /// Quantities promised to other clients, keyed by (requester, item).
    outstanding_offers: BTreeMap<(AgentId, ItemId), u32>,
    /// Next auction ask after an interruption, per item.
    retry_ask: BTreeMap<ItemId, Money>,
    /// Template buy price at sampling time; caps retry-ask inflation.
    base_buy_price: BTreeMap<ItemId, Money>,
}

impl ClientState {
    pub fn new(id: AgentId, inventory: Vec<ClientItemRecord>) -> ClientState {
        let base_buy_price = inventory
            .iter()
            .map(|r| (r.item.clone(), r.buy_price))
            .collect();
        ClientState {
            id,
            inventory,
            beliefs: BeliefStore::new(),
            intentions: IntentionStack::new(),
            procurements: Vec::new(),
            outstanding_offers: BTreeMap::new(),
            retry_ask: BTreeMap::new(),
            base_buy_price,
        }
    }

    pub fn item(&self, item: &ItemId) -> Option<&ClientItemRecord> {
        self.inventory.iter().find(|r| &r.item == item)
    }

    pub fn item_mut(&mut self, item: &ItemId) -> Option<&mut ClientItemRecord> {
        self.inventory.iter_mut().find(|r| &r.item == item)
    }

    pub fn procurement(&self, item: &ItemId) -> Option<&ProcurementState> {
        self.procurements.iter().find(|p| &p.item == item)
    }

    pub fn procurement_mut(&mut self, item: &ItemId) -> Option<&mut ProcurementState> {
        self.procurements.iter_mut().find(|p| &p.item == item)
    }

    pub fn close_procurement(&mut self, item: &ItemId) -> Option<ProcurementState> {
        let pos = self.procurements.iter().position(|p| &p.item == item)?;
        Some(self.procurements.remove(pos))
    }

    /// Units this client may sell internally without breaching its own
    /// floor: stock minus min_stock minus already-promised quantities.
    pub fn surplus(&self, item: &ItemId) -> u32 {
        let Some(rec) = self.item(item) else { return 0 };
        let reserved: u32 = self
            .outstanding_offers
            .iter()
            .filter(|((_, i), _)| i == item)
            .map(|(_, q)| *q)
            .sum();
        rec.stock
            .saturating_sub(rec.min_stock)
            .saturating_sub(reserved)
    }

    /// Ask for the next auction: the retry price after an interruption,
    /// otherwise the last paid price.
    pub fn next_ask(&self, item: &ItemId) -> Money {
        self.retry_ask
            .get(item)
            .copied()
            .unwrap_or_else(|| self.item(item).map(|r| r.buy_price).unwrap_or(Money::ZERO))
    }

    /// Inflates the next ask by ten percent after an interrupted auction,
    /// capped at twice the item's template buy price.
    pub fn bump_retry_ask(&mut self, item: &ItemId) {
        let current = self.next_ask(item);
        let cap = self
            .base_buy_price
            .get(item)
            .copied()
            .unwrap_or(current)
            .double();
        let inflated = current.scale_percent(110).min(cap);
        self.retry_ask.insert(item.clone(), inflated);
    }

    pub fn clear_retry_ask(&mut self, item: &ItemId) {
        self.retry_ask.remove(item);
    }

    pub fn offered_quantity(&self, requester: AgentId, item: &ItemId) -> Option<u32> {
        self.outstanding_offers
            .get(&(requester, item.clone()))
            .copied()
    }

    pub fn release_offer(&mut self, requester: AgentId, item: &ItemId) -> Option<u32> {
        self.outstanding_offers.remove(&(requester, item.clone()))
    }
}

/// An external provider.
#[derive(Debug, Clone)]
pub struct SellerState {
    pub id: AgentId,
    /// Pricing rows in catalog order.
    pub pricing: Vec<SellerItemRecord>,
    /// Open quotes keyed by (client, item).
    pending: BTreeMap<(AgentId, ItemId), PendingQuote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingQuote {
    pub price: Money,
    pub quantity: u32,
}

impl SellerState {
    pub fn new(id: AgentId, pricing: Vec<SellerItemRecord>) -> SellerState {
        SellerState {
            id,
            pricing,
            pending: BTreeMap::new(),
        }
    }

    pub fn item(&self, item: &ItemId) -> Option<&SellerItemRecord> {
        self.pricing.iter().find(|r| &r.item == item)
    }

    pub fn item_mut(&mut self, item: &ItemId) -> Option<&mut SellerItemRecord> {
        self.pricing.iter_mut().find(|r| &r.item == item)
    }

    pub fn pending_quote(&self, client: AgentId, item: &ItemId) -> Option<PendingQuote> {
        self.pending.get(&(client, item.clone())).copied()
    }
}

/// Removes up to `quantity` units, clamping at zero. Returns units actually
/// sold.
pub fn sell_units(record: &mut ClientItemRecord, quantity: u32) -> u32 {
    let sold = quantity.min(record.stock);
    record.stock -= sold;
    sold
}

/// Virtual buyers: every item loses an integer quantity drawn uniformly from
/// `[0, sales_max_per_tick]`, clamped at zero stock.
pub fn simulate_sales(client: &mut ClientState, sales_max_per_tick: u32, rng: &mut impl Rng) {
    if sales_max_per_tick == 0 {
        return;
    }
    for record in &mut client.inventory {
        let demand = rng.gen_range(0..=sales_max_per_tick);
        sell_units(record, demand);
    }
}

/// Items at or below their minimum with no active procurement, in catalog
/// order.
pub fn check_inventory(client: &ClientState) -> Vec<ItemId> {
    client
        .inventory
        .iter()
        .filter(|r| r.stock <= r.min_stock)
        .map(|r| r.item.clone())
        .filter(|item| client.procurement(item).is_none())
        .collect()
}

/// A provider's answer to another client's cfp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InternalReply {
    Propose { quantity: u32, price: Money },
    Refuse,
}

/// Offers the full requested quantity at this client's own last paid price
/// when surplus covers it; refuses otherwise. A proposal reserves the
/// quantity until the requester answers.
pub fn respond_to_client_cfp(
    client: &mut ClientState,
    requester: AgentId,
    item: &ItemId,
    quantity: u32,
) -> InternalReply {
    let surplus = client.surplus(item);
    let Some(record) = client.item(item) else {
        return InternalReply::Refuse;
    };
    if surplus >= quantity && quantity >= 1 {
        let price = record.buy_price;
        client
            .outstanding_offers
            .insert((requester, item.clone()), quantity);
        InternalReply::Propose { quantity, price }
    } else {
        InternalReply::Refuse
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FulfillError {
    /// No proposal was outstanding for this (requester, item, quantity).
    NoMatchingProposal,
    /// Fulfilling would take the provider below its stock floor; the
    /// surplus rule makes this unreachable absent a protocol bug.
    FloorBreached { stock: u32, min_stock: u32 },
}

/// Ships a previously proposed internal sale: provider stock drops by the
/// reserved quantity and must stay at or above min_stock.
pub fn fulfill_internal_sale(
    client: &mut ClientState,
    requester: AgentId,
    item: &ItemId,
    quantity: u32,
) -> Result<(), FulfillError> {
    match client.offered_quantity(requester, item) {
        Some(reserved) if reserved == quantity => {}
        _ => return Err(FulfillError::NoMatchingProposal),
    }
    let record = client
        .item_mut(item)
        .ok_or(FulfillError::NoMatchingProposal)?;
    let remaining = record.stock.saturating_sub(quantity);
    if record.stock < quantity || remaining < record.min_stock {
        return Err(FulfillError::FloorBreached {
            stock: record.stock,
            min_stock: record.min_stock,
        });
    }
    record.stock = remaining;
    client.release_offer(requester, item);
    Ok(())
}

/// Adds the bought quantity (clamped to max_stock) and records the price
/// paid.
pub fn restock(record: &mut ClientItemRecord, quantity: u32, price: Money) {
    record.stock = (record.stock + quantity).min(record.max_stock);
    record.buy_price = price;
}

/// A seller's answer to a cfp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SellerReply {
    Propose { quantity: u32, price: Money },
    Refuse,
}

/// Refuses when the item is unknown or its floor exceeds the asked price;
/// otherwise bids a uniform cent draw between the floor and the ask (capped
/// at the item's own max_price so an accepted bid stays in band). The quote
/// is remembered until the client answers.
pub fn seller_quote(
    seller: &mut SellerState,
    client: AgentId,
    item: &ItemId,
    quantity: u32,
    asked_price: Money,
    rng: &mut impl Rng,
) -> SellerReply {
    let Some(record) = seller.item(item) else {
        return SellerReply::Refuse;
    };
    if record.min_price > asked_price {
        return SellerReply::Refuse;
    }
    let low = record.min_price.cents();
    let high = asked_price.min(record.max_price).cents();
    let price = Money::from_cents(rng.gen_range(low..=high));
    seller
        .pending
        .insert((client, item.clone()), PendingQuote { price, quantity });
    SellerReply::Propose { quantity, price }
}

/// Outcome of an accept-proposal arriving at a seller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SellerAccept {
    /// Items ship; the seller's current price moves to the accepted price.
    Shipped { quantity: u32, price: Money },
    /// The accept did not match the seller's outstanding quote.
    NoMatchingQuote,
}

pub fn seller_accept(
    seller: &mut SellerState,
    client: AgentId,
    item: &ItemId,
    quantity: u32,
    price: Money,
) -> SellerAccept {
    let key = (client, item.clone());
    match seller.pending.get(&key) {
        Some(quote) if quote.price == price && quote.quantity == quantity => {}
        _ => return SellerAccept::NoMatchingQuote,
    }
    seller.pending.remove(&key);
    let record = seller.item_mut(item).expect("quoted item exists");
    record.price = price;
    SellerAccept::Shipped { quantity, price }
}

/// Drops the quote; the seller returns to listening with its price
/// unchanged.
pub fn seller_reject(seller: &mut SellerState, client: AgentId, item: &ItemId) {
    seller.pending.remove(&(client, item.clone()));
}
