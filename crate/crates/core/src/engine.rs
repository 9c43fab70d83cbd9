//! Deterministic tick loop.
//!
//! Each tick runs fixed phases: (1) virtual sales per client; (2) clients
//! drain mailboxes and run intentions, with message exchanges swept to
//! quiescence; (3) clients check inventory and start procurements, followed
//! by another quiescence pass so internal trades settle within the tick;
//! (4) sellers drain mailboxes; (5) metrics snapshot. One globally seeded
//! RNG stream is consumed in this fixed phase/agent order, so a (scenario,
//! seed, mode, ticks) tuple fully determines every output byte.
//!
//! Client-to-client exchanges resolve inside one tick (internal trades take
//! zero ticks); each auction round crosses exactly one tick boundary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::{
    self, ClientState, FulfillError, InternalReply, ProcurementPhase, ProcurementState,
    SellerAccept, SellerReply, SellerState, ACTION_ADVANCE_PROCUREMENTS, BELIEF_PROPOSAL,
    BELIEF_PROPOSAL_FROM_CLIENTS, PREDICATE_NO_ACTIVE_PROCUREMENTS,
};
use crate::auction::{self, AuctionOutcome, AuctionResult, AuctionState, RoundDecision};
use crate::bdi::{self, BdiError, Belief, Intention, IntentionEvent, IntentionHost, Repertoire};
use crate::market::{sample_initial_state, ItemId, Scenario, TradingMode};
use crate::messaging::{AgentId, Breed, Message, MessageError, MessageHub, Scalar, Value};
use crate::metrics::{MetricsAccumulator, SnapshotRow, TradeKind, TradeRecord};
use crate::money::Money;
use crate::protocol::TradeMessage;

/// Sweep bound for intra-tick message exchange; the trading protocol needs
/// at most four sweeps, anything past the bound is a livelock.
const SWEEP_LIMIT: u32 = 16;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceFlags {
    pub messages: bool,
    pub intentions: bool,
    pub auctions: bool,
}

/// Resolved run parameters; scenario-file values with any overrides applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunConfig {
    pub mode: TradingMode,
    pub seed: u64,
    pub max_ticks: u64,
    pub auction_max_rounds: u32,
    pub sales_max_per_tick: u32,
    pub trace: TraceFlags,
}

impl RunConfig {
    pub fn from_scenario(scenario: &Scenario) -> RunConfig {
        RunConfig {
            mode: scenario.mode,
            seed: scenario.seed,
            max_ticks: scenario.max_ticks,
            auction_max_rounds: scenario.auction_max_rounds,
            sales_max_per_tick: scenario.sales_max_per_tick,
            trace: TraceFlags::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("tick {tick}: agent {agent}: protocol assertion failed: {detail}")]
    Protocol {
        tick: u64,
        agent: String,
        detail: String,
    },
    #[error("tick {tick}: intra-tick exchange exceeded {limit} sweeps (protocol livelock)")]
    QuiesceLimit { tick: u64, limit: u32 },
    #[error("tick {tick}: agent {agent}: invariant violated: {detail}")]
    Invariant {
        tick: u64,
        agent: String,
        detail: String,
    },
    #[error("tick {tick}: agent {agent}: intention failure: {source}")]
    Intention {
        tick: u64,
        agent: String,
        #[source]
        source: BdiError,
    },
    #[error("message dispatch failed: {0}")]
    Dispatch(#[from] MessageError),
}

/// One finished auction, in completion order. Auctions that first tried
/// internal trading keep the procurement's start tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionRecord {
    pub requester: AgentId,
    pub item: ItemId,
    pub opened_tick: u64,
    pub outcome: AuctionOutcome,
}

/// One quiescence pass: how many sweeps it took at (tick, phase).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuiesceSample {
    pub tick: u64,
    pub phase: u8,
    pub sweeps: u32,
}

#[derive(Debug, Default, Clone)]
pub struct Diagnostics {
    /// Non-aborting protocol anomalies (unsolicited replies, mismatched
    /// accepts), one line each.
    pub protocol_warnings: Vec<String>,
    pub quiesce_log: Vec<QuiesceSample>,
    pub skipped_deliveries: u64,
}

/// Everything a run produces.
#[derive(Debug)]
pub struct RunArtifacts {
    pub clients: Vec<ClientState>,
    pub sellers: Vec<SellerState>,
    pub metrics: MetricsAccumulator,
    pub snapshots: Vec<SnapshotRow>,
    pub auction_log: Vec<AuctionRecord>,
    pub message_trace: Vec<String>,
    pub intention_trace: Vec<String>,
    pub auction_trace: Vec<String>,
    pub diagnostics: Diagnostics,
}

pub struct Engine {
    config: RunConfig,
    clients: Vec<ClientState>,
    sellers: Vec<SellerState>,
    hub: MessageHub,
    rng: ChaCha8Rng,
    tick: u64,
    metrics: MetricsAccumulator,
    snapshots: Vec<SnapshotRow>,
    auction_log: Vec<AuctionRecord>,
    intention_trace: Vec<String>,
    auction_trace: Vec<String>,
    diagnostics: Diagnostics,
    auction_seq: u64,
}

/// Runs a full simulation of `scenario` under `config`.
pub fn run_simulation(scenario: &Scenario, config: RunConfig) -> Result<RunArtifacts, EngineError> {
    Engine::new(scenario, config).run()
}

impl Engine {
    pub fn new(scenario: &Scenario, config: RunConfig) -> Engine {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (client_rows, seller_rows) = sample_initial_state(scenario, &mut rng);
        let clients: Vec<ClientState> = client_rows
            .into_iter()
            .enumerate()
            .map(|(i, rows)| ClientState::new(AgentId::client(i as u32), rows))
            .collect();
        let sellers: Vec<SellerState> = seller_rows
            .into_iter()
            .enumerate()
            .map(|(i, rows)| SellerState::new(AgentId::seller(i as u32), rows))
            .collect();
        let mut hub = MessageHub::new();
        for client in &clients {
            hub.register(client.id);
        }
        for seller in &sellers {
            hub.register(seller.id);
        }
        if config.trace.messages {
            hub.enable_trace();
        }
        Engine {
            config,
            clients,
            sellers,
            hub,
            rng,
            tick: 0,
            metrics: MetricsAccumulator::new(scenario.items.clone()),
            snapshots: Vec::new(),
            auction_log: Vec::new(),
            intention_trace: Vec::new(),
            auction_trace: Vec::new(),
            diagnostics: Diagnostics::default(),
            auction_seq: 0,
        }
    }

    pub fn run(mut self) -> Result<RunArtifacts, EngineError> {
        self.snapshots.push(self.metrics.snapshot(0));
        for tick in 1..=self.config.max_ticks {
            self.tick = tick;
            self.hub.set_tick(tick);
            self.phase_sales();
            self.phase_client_messages()?;
            self.phase_restock()?;
            self.phase_sellers()?;
            self.audit_invariants()?;
            self.snapshots.push(self.metrics.snapshot(tick));
        }
        self.diagnostics.skipped_deliveries = self.hub.skipped_deliveries();
        Ok(RunArtifacts {
            message_trace: self.hub.take_trace(),
            clients: self.clients,
            sellers: self.sellers,
            metrics: self.metrics,
            snapshots: self.snapshots,
            auction_log: self.auction_log,
            intention_trace: self.intention_trace,
            auction_trace: self.auction_trace,
            diagnostics: self.diagnostics,
        })
    }

    // ----- phase 1: virtual sales -----

    fn phase_sales(&mut self) {
        for client in &mut self.clients {
            agents::simulate_sales(client, self.config.sales_max_per_tick, &mut self.rng);
        }
    }

    // ----- phase 2: client mailboxes and intentions -----

    fn phase_client_messages(&mut self) -> Result<(), EngineError> {
        self.client_pass()?;
        self.quiesce(2)?;
        Ok(())
    }

    /// One pass over all clients in id order: drain the messages present
    /// when the pass began, then run intentions once per client. Messages
    /// sent during a pass wait for the next one, so every protocol hop
    /// costs exactly one sweep regardless of agent ordering.
    fn client_pass(&mut self) -> Result<(), EngineError> {
        let backlogs: Vec<usize> = self
            .clients
            .iter()
            .map(|c| self.hub.queue_len(c.id))
            .collect();
        for (idx, backlog) in backlogs.into_iter().enumerate() {
            let id = self.clients[idx].id;
            for _ in 0..backlog {
                let msg = self.hub.next_message(id).expect("snapshot length");
                self.handle_client_message(idx, msg)?;
            }
            self.step_client_intentions(idx)?;
        }
        Ok(())
    }

    /// Sweeps client passes until no client mailbox holds an unprocessed
    /// message. Messages sent during a sweep are handled in the next one, so
    /// each protocol hop costs one sweep.
    fn quiesce(&mut self, phase: u8) -> Result<(), EngineError> {
        let mut sweeps = 0;
        while self.clients.iter().any(|c| self.hub.queue_len(c.id) > 0) {
            sweeps += 1;
            if sweeps > SWEEP_LIMIT {
                return Err(EngineError::QuiesceLimit {
                    tick: self.tick,
                    limit: SWEEP_LIMIT,
                });
            }
            self.client_pass()?;
        }
        self.diagnostics.quiesce_log.push(QuiesceSample {
            tick: self.tick,
            phase,
            sweeps,
        });
        Ok(())
    }

    // ----- phase 3: inventory checks and procurement starts -----

    fn phase_restock(&mut self) -> Result<(), EngineError> {
        for idx in 0..self.clients.len() {
            for item in agents::check_inventory(&self.clients[idx]) {
                self.initiate_procurement(idx, &item)?;
            }
        }
        self.quiesce(3)?;
        Ok(())
    }

    fn initiate_procurement(&mut self, idx: usize, item: &ItemId) -> Result<(), EngineError> {
        let client = &self.clients[idx];
        let record = client
            .item(item)
            .expect("check_inventory returns catalog items");
        let target = record.max_stock - record.stock;
        if target == 0 {
            // min_stock == max_stock == stock: nothing can be ordered.
            return Ok(());
        }
        let client_id = client.id;
        let buy_price = record.buy_price;
        let other_clients: Vec<AgentId> = self
            .hub
            .agents_of_breed(Breed::Client)
            .into_iter()
            .filter(|id| *id != client_id)
            .collect();

        let internal =
            self.config.mode == TradingMode::InternalExternal && !other_clients.is_empty();
        self.clients[idx].procurements.push(ProcurementState {
            item: item.clone(),
            phase: ProcurementPhase::InternalPending {
                polled: other_clients.clone(),
                responded: Vec::new(),
            },
            start_tick: self.tick,
            target_quantity: target,
        });

        if internal {
            let cfp = TradeMessage::Cfp {
                item: item.clone(),
                quantity: target,
                price: buy_price,
            };
            self.hub.broadcast(Breed::Client, cfp.encode(client_id))?;
        } else {
            // External-only mode, or no peers to poll: behave as if every
            // other client refused and go straight to auction.
            self.open_auction(idx, item)?;
        }

        if self.clients[idx].procurement(item).is_some() {
            self.push_procurement_intention(idx)?;
        }
        Ok(())
    }

    fn push_procurement_intention(&mut self, idx: usize) -> Result<(), EngineError> {
        if self.clients[idx]
            .intentions
            .contains_action(ACTION_ADVANCE_PROCUREMENTS)
        {
            return Ok(());
        }
        let intention = Intention::new(
            ACTION_ADVANCE_PROCUREMENTS,
            PREDICATE_NO_ACTIVE_PROCUREMENTS,
        );
        let agent = self.clients[idx].id;
        let tick = self.tick;
        self.clients[idx]
            .intentions
            .push(intention.clone(), &ClientRepertoire)
            .map_err(|source| EngineError::Intention {
                tick,
                agent: agent.to_string(),
                source,
            })?;
        if self.config.trace.intentions {
            self.intention_trace.push(format!(
                "{},{},{},{},push",
                tick,
                agent,
                intention.action(),
                intention.done_when()
            ));
        }
        Ok(())
    }

    // ----- phase 4: seller mailboxes -----

    fn phase_sellers(&mut self) -> Result<(), EngineError> {
        for idx in 0..self.sellers.len() {
            let id = self.sellers[idx].id;
            let backlog = self.hub.queue_len(id);
            for _ in 0..backlog {
                let msg = self.hub.next_message(id).expect("snapshot length");
                self.handle_seller_message(idx, msg)?;
            }
        }
        Ok(())
    }

    // ----- message handling -----

    fn handle_client_message(&mut self, idx: usize, msg: Message) -> Result<(), EngineError> {
        let sender = msg.sender();
        let receiver = self.clients[idx].id;
        let trade = match TradeMessage::decode(&msg) {
            Ok(trade) => trade,
            Err(err) => {
                self.warn(
                    receiver,
                    format!("undecodable message from {}: {}", sender, err),
                );
                return Ok(());
            }
        };
        match (sender.breed(), trade) {
            (Breed::Client, TradeMessage::Cfp { item, quantity, .. }) => {
                let reply =
                    agents::respond_to_client_cfp(&mut self.clients[idx], sender, &item, quantity);
                let reply = match reply {
                    InternalReply::Propose { quantity, price } => TradeMessage::Propose {
                        item,
                        quantity,
                        price,
                    },
                    InternalReply::Refuse => TradeMessage::Refuse { item },
                };
                self.send_to(receiver, sender, reply)?;
            }
            (
                Breed::Client,
                TradeMessage::Propose {
                    item,
                    quantity,
                    price,
                },
            ) => {
                self.note_internal_reply(idx, sender, &item, Some((quantity, price)));
            }
            (Breed::Client, TradeMessage::Refuse { item }) => {
                self.note_internal_reply(idx, sender, &item, None);
            }
            (Breed::Client, TradeMessage::AcceptProposal { item, quantity, .. }) => {
                match agents::fulfill_internal_sale(&mut self.clients[idx], sender, &item, quantity)
                {
                    Ok(()) => {}
                    Err(FulfillError::NoMatchingProposal) => self.warn(
                        receiver,
                        format!(
                            "accept-proposal from {} without a matching propose ({})",
                            sender, item
                        ),
                    ),
                    Err(FulfillError::FloorBreached { stock, min_stock }) => {
                        return Err(EngineError::Protocol {
                            tick: self.tick,
                            agent: receiver.to_string(),
                            detail: format!(
                                "internal sale of {} x{} would breach floor (stock {}, min {})",
                                item, quantity, stock, min_stock
                            ),
                        });
                    }
                }
            }
            (Breed::Client, TradeMessage::RejectProposal { item }) => {
                self.clients[idx].release_offer(sender, &item);
            }
            (
                Breed::Seller,
                TradeMessage::Propose {
                    item,
                    quantity,
                    price,
                },
            ) => {
                self.note_seller_bid(idx, sender, &item, quantity, price);
            }
            (Breed::Seller, TradeMessage::Refuse { item }) => {
                self.note_seller_refusal(idx, sender, &item);
            }
            (
                Breed::Seller,
                TradeMessage::Success {
                    item,
                    quantity,
                    price,
                },
            ) => {
                self.settle_auction_success(idx, sender, &item, quantity, price);
            }
            (_, other) => {
                self.warn(
                    receiver,
                    format!("unexpected {} from {}", other.performative(), sender),
                );
            }
        }
        Ok(())
    }

    /// Records a propose/refuse reply to an internal cfp. Proposals become
    /// `proposal-from-clients` beliefs with content `[item, client, price]`.
    fn note_internal_reply(
        &mut self,
        idx: usize,
        sender: AgentId,
        item: &ItemId,
        offer: Option<(u32, Money)>,
    ) {
        let receiver = self.clients[idx].id;
        let client = &mut self.clients[idx];
        let accepted = match client.procurement_mut(item) {
            Some(p) => match &mut p.phase {
                ProcurementPhase::InternalPending { polled, responded }
                    if polled.contains(&sender) && !responded.contains(&sender) =>
                {
                    responded.push(sender);
                    true
                }
                _ => false,
            },
            None => false,
        };
        if !accepted {
            self.warn(
                receiver,
                format!("unsolicited internal reply from {} for {}", sender, item),
            );
            return;
        }
        if let Some((quantity, price)) = offer {
            let p = self.clients[idx].procurement(item).expect("checked above");
            if quantity != p.target_quantity {
                self.warn(
                    receiver,
                    format!(
                        "internal propose from {} for {} offers {} instead of {}",
                        sender, item, quantity, p.target_quantity
                    ),
                );
                return;
            }
            self.clients[idx].beliefs.add(Belief::new(
                BELIEF_PROPOSAL_FROM_CLIENTS,
                vec![
                    Scalar::Str(item.0.clone()),
                    Scalar::Str(sender.to_string()),
                    Scalar::Money(price),
                ],
            ));
        }
    }

    /// Records a seller's propose as an auction bid plus a `proposal` belief
    /// with content `[item, seller, price]`.
    fn note_seller_bid(
        &mut self,
        idx: usize,
        sender: AgentId,
        item: &ItemId,
        quantity: u32,
        price: Money,
    ) {
        let receiver = self.clients[idx].id;
        let tick = self.tick;
        let mut traced: Option<(u64, u32)> = None;
        let accepted = match self.clients[idx].procurement_mut(item) {
            Some(p) => match &mut p.phase {
                ProcurementPhase::Auction(st)
                    if st.was_solicited(sender)
                        && !st.has_responded(sender)
                        && quantity == st.quantity
                        && price <= st.asked_price =>
                {
                    st.record_bid(sender, price);
                    traced = Some((st.id, st.round));
                    true
                }
                _ => false,
            },
            None => false,
        };
        if !accepted {
            self.warn(
                receiver,
                format!("stray seller bid from {} for {}", sender, item),
            );
            return;
        }
        if let Some((auction_id, round)) = traced {
            self.trace_auction(tick, auction_id, item, round, "bid", sender, Some(price));
        }
        self.clients[idx].beliefs.add(Belief::new(
            BELIEF_PROPOSAL,
            vec![
                Scalar::Str(item.0.clone()),
                Scalar::Str(sender.to_string()),
                Scalar::Money(price),
            ],
        ));
    }

    fn note_seller_refusal(&mut self, idx: usize, sender: AgentId, item: &ItemId) {
        let receiver = self.clients[idx].id;
        let tick = self.tick;
        let mut traced: Option<(u64, u32)> = None;
        let accepted = match self.clients[idx].procurement_mut(item) {
            Some(p) => match &mut p.phase {
                ProcurementPhase::Auction(st)
                    if st.was_solicited(sender) && !st.has_responded(sender) =>
                {
                    st.record_refusal(sender);
                    traced = Some((st.id, st.round));
                    true
                }
                _ => false,
            },
            None => false,
        };
        if !accepted {
            self.warn(
                receiver,
                format!("stray seller refusal from {} for {}", sender, item),
            );
            return;
        }
        if let Some((auction_id, round)) = traced {
            self.trace_auction(tick, auction_id, item, round, "refuse", sender, None);
        }
    }

    /// Stock update on a winning seller's success message; closes the
    /// procurement and logs the finished auction.
    fn settle_auction_success(
        &mut self,
        idx: usize,
        sender: AgentId,
        item: &ItemId,
        quantity: u32,
        price: Money,
    ) {
        let receiver = self.clients[idx].id;
        let matches = match self.clients[idx].procurement(item) {
            Some(p) => match &p.phase {
                ProcurementPhase::AwaitingSuccess {
                    seller,
                    price: accepted,
                    ..
                } => *seller == sender && *accepted == price && p.target_quantity == quantity,
                _ => false,
            },
            None => false,
        };
        if !matches {
            self.warn(
                receiver,
                format!(
                    "success from {} for {} does not match any accepted proposal",
                    sender, item
                ),
            );
            return;
        }
        let p = self.clients[idx]
            .close_procurement(item)
            .expect("checked above");
        let ProcurementPhase::AwaitingSuccess {
            seller,
            rounds_used,
            ..
        } = p.phase
        else {
            unreachable!("checked above");
        };
        let elapsed = self.tick - p.start_tick;
        let record = self.clients[idx].item_mut(item).expect("catalog item");
        agents::restock(record, quantity, price);
        self.clients[idx].clear_retry_ask(item);
        self.metrics.record(TradeRecord {
            tick: self.tick,
            item: item.clone(),
            unit_price: price,
            quantity,
            kind: TradeKind::External,
            elapsed_ticks: elapsed,
        });
        self.auction_log.push(AuctionRecord {
            requester: receiver,
            item: item.clone(),
            opened_tick: p.start_tick,
            outcome: AuctionOutcome {
                result: AuctionResult::Winner { seller, price },
                rounds_used,
                elapsed_ticks: elapsed,
            },
        });
    }

    fn handle_seller_message(&mut self, idx: usize, msg: Message) -> Result<(), EngineError> {
        let sender = msg.sender();
        let receiver = self.sellers[idx].id;
        let trade = match TradeMessage::decode(&msg) {
            Ok(trade) => trade,
            Err(err) => {
                self.warn(
                    receiver,
                    format!("undecodable message from {}: {}", sender, err),
                );
                return Ok(());
            }
        };
        if sender.breed() != Breed::Client {
            self.warn(
                receiver,
                format!("unexpected {} from {}", trade.performative(), sender),
            );
            return Ok(());
        }
        match trade {
            TradeMessage::Cfp {
                item,
                quantity,
                price,
            } => {
                let reply = agents::seller_quote(
                    &mut self.sellers[idx],
                    sender,
                    &item,
                    quantity,
                    price,
                    &mut self.rng,
                );
                let reply = match reply {
                    SellerReply::Propose { quantity, price } => TradeMessage::Propose {
                        item,
                        quantity,
                        price,
                    },
                    SellerReply::Refuse => TradeMessage::Refuse { item },
                };
                self.send_to(receiver, sender, reply)?;
            }
            TradeMessage::AcceptProposal {
                item,
                quantity,
                price,
            } => {
                match agents::seller_accept(&mut self.sellers[idx], sender, &item, quantity, price)
                {
                    SellerAccept::Shipped { quantity, price } => {
                        self.send_to(
                            receiver,
                            sender,
                            TradeMessage::Success {
                                item,
                                quantity,
                                price,
                            },
                        )?;
                    }
                    SellerAccept::NoMatchingQuote => {
                        self.warn(
                            receiver,
                            format!(
                                "accept-proposal from {} does not match an open quote ({})",
                                sender, item
                            ),
                        );
                    }
                }
            }
            TradeMessage::RejectProposal { item } => {
                agents::seller_reject(&mut self.sellers[idx], sender, &item);
            }
            other => {
                self.warn(
                    receiver,
                    format!("unexpected {} from {}", other.performative(), sender),
                );
            }
        }
        Ok(())
    }

    // ----- intentions -----

    fn step_client_intentions(&mut self, idx: usize) -> Result<(), EngineError> {
        let mut stack = std::mem::take(&mut self.clients[idx].intentions);
        let mut ctx = ClientIntentionCtx { engine: self, idx };
        let outcome = bdi::execute_intentions(&mut stack, &mut ctx);
        self.clients[idx].intentions = stack;
        let event = outcome.map_err(|source| EngineError::Intention {
            tick: self.tick,
            agent: self.clients[idx].id.to_string(),
            source,
        })?;
        if self.config.trace.intentions {
            let agent = self.clients[idx].id;
            match &event {
                IntentionEvent::Idle => {}
                IntentionEvent::Completed(i) => self.intention_trace.push(format!(
                    "{},{},{},{},pop",
                    self.tick,
                    agent,
                    i.action(),
                    i.done_when()
                )),
                IntentionEvent::Executed(i) => self.intention_trace.push(format!(
                    "{},{},{},{},exec",
                    self.tick,
                    agent,
                    i.action(),
                    i.done_when()
                )),
            }
        }
        Ok(())
    }

    /// The one client action: move every procurement forward whose replies
    /// are complete.
    fn advance_client_procurements(&mut self, idx: usize) -> Result<(), EngineError> {
        let items: Vec<ItemId> = self.clients[idx]
            .procurements
            .iter()
            .map(|p| p.item.clone())
            .collect();
        for item in items {
            let Some(p) = self.clients[idx].procurement(&item) else {
                continue;
            };
            match &p.phase {
                ProcurementPhase::InternalPending { .. } => {
                    // Every polled client replies within the tick; the
                    // start-tick comparison is a deadline safeguard.
                    if p.internal_replies_complete() || self.tick > p.start_tick {
                        self.resolve_internal(idx, &item)?;
                    }
                }
                ProcurementPhase::Auction(st) => {
                    if st.all_responded() {
                        self.resolve_auction_round(idx, &item)?;
                    }
                }
                ProcurementPhase::AwaitingSuccess { .. } => {}
            }
        }
        Ok(())
    }

    /// Evaluates `proposal-from-clients` beliefs for one item: lowest price
    /// wins, ties to the earliest received; universal refusal escalates to a
    /// reverse auction.
    fn resolve_internal(&mut self, idx: usize, item: &ItemId) -> Result<(), EngineError> {
        let client = &self.clients[idx];
        let client_id = client.id;
        let p = client.procurement(item).expect("caller checked");
        let target = p.target_quantity;
        let start = p.start_tick;
        let offers: Vec<(AgentId, Money)> = client
            .beliefs
            .of_type(BELIEF_PROPOSAL_FROM_CLIENTS)
            .filter_map(|b| parse_offer_belief(b.content()))
            .filter(|(offer_item, _, _)| offer_item == item)
            .map(|(_, agent, price)| (agent, price))
            .collect();

        let winner = offers
            .iter()
            .enumerate()
            .min_by_key(|(arrival, (_, price))| (*price, *arrival))
            .map(|(_, (agent, price))| (*agent, *price));

        let Some((winner_id, winner_price)) = winner else {
            // Everyone refused; fall back to the sellers.
            return self.open_auction(idx, item);
        };

        self.send_to(
            client_id,
            winner_id,
            TradeMessage::AcceptProposal {
                item: item.clone(),
                quantity: target,
                price: winner_price,
            },
        )?;
        for (agent, _) in offers.iter().filter(|(agent, _)| *agent != winner_id) {
            self.send_to(
                client_id,
                *agent,
                TradeMessage::RejectProposal { item: item.clone() },
            )?;
        }

        let record = self.clients[idx].item_mut(item).expect("catalog item");
        agents::restock(record, target, winner_price);
        self.clients[idx].clear_retry_ask(item);
        self.clients[idx].close_procurement(item);
        self.clients[idx]
            .beliefs
            .retain_of_type(BELIEF_PROPOSAL_FROM_CLIENTS, |content| {
                !offer_belief_is_for_item(content, item)
            });
        self.metrics.record(TradeRecord {
            tick: self.tick,
            item: item.clone(),
            unit_price: winner_price,
            quantity: target,
            kind: TradeKind::Internal,
            elapsed_ticks: self.tick - start,
        });
        Ok(())
    }

    /// Opens (or short-circuits) the reverse auction for an active
    /// procurement.
    fn open_auction(&mut self, idx: usize, item: &ItemId) -> Result<(), EngineError> {
        let sellers = self.hub.agents_of_breed(Breed::Seller);
        let client_id = self.clients[idx].id;
        let ask = self.clients[idx].next_ask(item);
        let tick = self.tick;
        self.auction_seq += 1;
        let auction_id = self.auction_seq;

        let p = self.clients[idx].procurement(item).expect("caller checked");
        let target = p.target_quantity;
        let start = p.start_tick;

        if sellers.is_empty() {
            self.trace_auction(
                tick,
                auction_id,
                item,
                0,
                "interrupted",
                client_id,
                Some(ask),
            );
            self.clients[idx].bump_retry_ask(item);
            self.clients[idx].close_procurement(item);
            self.auction_log.push(AuctionRecord {
                requester: client_id,
                item: item.clone(),
                opened_tick: start,
                outcome: AuctionOutcome {
                    result: AuctionResult::Interrupted,
                    rounds_used: 0,
                    elapsed_ticks: tick - start,
                },
            });
            return Ok(());
        }

        let state = AuctionState::open(
            auction_id,
            item.clone(),
            client_id,
            target,
            ask,
            self.config.auction_max_rounds,
            sellers,
            start,
        );
        self.trace_auction(tick, auction_id, item, 1, "open", client_id, Some(ask));
        self.clients[idx]
            .procurement_mut(item)
            .expect("caller checked")
            .phase = ProcurementPhase::Auction(state);
        self.hub.broadcast(
            Breed::Seller,
            TradeMessage::Cfp {
                item: item.clone(),
                quantity: target,
                price: ask,
            }
            .encode(client_id),
        )?;
        Ok(())
    }

    /// A round's replies are complete: interrupt, pick a winner, or lower
    /// the ask and re-solicit.
    fn resolve_auction_round(&mut self, idx: usize, item: &ItemId) -> Result<(), EngineError> {
        let client_id = self.clients[idx].id;
        let tick = self.tick;
        let (decision, auction_id, round, ask, target, start) = {
            let p = self.clients[idx].procurement(item).expect("caller checked");
            let ProcurementPhase::Auction(st) = &p.phase else {
                unreachable!("caller checked")
            };
            (
                auction::decide_round(st),
                st.id,
                st.round,
                st.asked_price,
                p.target_quantity,
                p.start_tick,
            )
        };

        match decision {
            RoundDecision::Interrupted => {
                self.trace_auction(
                    tick,
                    auction_id,
                    item,
                    round,
                    "interrupted",
                    client_id,
                    Some(ask),
                );
                self.clients[idx].close_procurement(item);
                self.clients[idx].bump_retry_ask(item);
                self.auction_log.push(AuctionRecord {
                    requester: client_id,
                    item: item.clone(),
                    opened_tick: start,
                    outcome: AuctionOutcome {
                        result: AuctionResult::Interrupted,
                        rounds_used: round,
                        elapsed_ticks: tick - start,
                    },
                });
            }
            RoundDecision::SelectWinner => {
                let selection = {
                    let p = self.clients[idx].procurement(item).expect("caller checked");
                    let ProcurementPhase::Auction(st) = &p.phase else {
                        unreachable!("caller checked")
                    };
                    auction::select_winner(st).expect("decision requires a bid")
                };
                let winner = selection.winner;
                self.clients[idx]
                    .procurement_mut(item)
                    .expect("caller checked")
                    .phase = ProcurementPhase::AwaitingSuccess {
                    seller: winner.seller,
                    price: winner.price,
                    rounds_used: round,
                };
                self.trace_auction(
                    tick,
                    auction_id,
                    item,
                    round,
                    "winner",
                    winner.seller,
                    Some(winner.price),
                );
                self.send_to(
                    client_id,
                    winner.seller,
                    TradeMessage::AcceptProposal {
                        item: item.clone(),
                        quantity: target,
                        price: winner.price,
                    },
                )?;
                for seller in selection.rejected {
                    self.send_to(
                        client_id,
                        seller,
                        TradeMessage::RejectProposal { item: item.clone() },
                    )?;
                }
            }
            RoundDecision::NewRound { asked_price } => {
                {
                    let p = self.clients[idx]
                        .procurement_mut(item)
                        .expect("caller checked");
                    let ProcurementPhase::Auction(st) = &mut p.phase else {
                        unreachable!("caller checked")
                    };
                    st.advance_round(asked_price);
                }
                self.trace_auction(
                    tick,
                    auction_id,
                    item,
                    round + 1,
                    "new-round",
                    client_id,
                    Some(asked_price),
                );
                self.hub.broadcast(
                    Breed::Seller,
                    TradeMessage::Cfp {
                        item: item.clone(),
                        quantity: target,
                        price: asked_price,
                    }
                    .encode(client_id),
                )?;
            }
        }
        self.clients[idx]
            .beliefs
            .retain_of_type(BELIEF_PROPOSAL, |content| {
                !offer_belief_is_for_item(content, item)
            });
        Ok(())
    }

    // ----- helpers -----

    fn send_to(
        &mut self,
        from: AgentId,
        to: AgentId,
        trade: TradeMessage,
    ) -> Result<(), EngineError> {
        let mut msg = trade.encode(from);
        msg.set_receivers(vec![to]);
        self.hub.send(msg)?;
        Ok(())
    }

    fn warn(&mut self, agent: AgentId, detail: String) {
        self.diagnostics
            .protocol_warnings
            .push(format!("tick {}, agent {}: {}", self.tick, agent, detail));
    }

    #[allow(clippy::too_many_arguments)]
    fn trace_auction(
        &mut self,
        tick: u64,
        auction_id: u64,
        item: &ItemId,
        round: u32,
        event: &str,
        agent: AgentId,
        price: Option<Money>,
    ) {
        if !self.config.trace.auctions {
            return;
        }
        let price = price.map(|p| p.to_string()).unwrap_or_default();
        self.auction_trace.push(format!(
            "{},a{},{},{},{},{},{}",
            tick, auction_id, item, round, event, agent, price
        ));
    }

    /// Stock and price-band audit after every tick; any violation aborts the
    /// run.
    fn audit_invariants(&self) -> Result<(), EngineError> {
        for client in &self.clients {
            for rec in &client.inventory {
                if rec.stock > rec.max_stock {
                    return Err(EngineError::Invariant {
                        tick: self.tick,
                        agent: client.id.to_string(),
                        detail: format!(
                            "{} stock {} above max_stock {}",
                            rec.item, rec.stock, rec.max_stock
                        ),
                    });
                }
            }
        }
        for seller in &self.sellers {
            for rec in &seller.pricing {
                if rec.price < rec.min_price || rec.price > rec.max_price {
                    return Err(EngineError::Invariant {
                        tick: self.tick,
                        agent: seller.id.to_string(),
                        detail: format!(
                            "{} price {} outside [{}, {}]",
                            rec.item, rec.price, rec.min_price, rec.max_price
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Parses an offer belief content `[item, agent, price]`.
fn parse_offer_belief(content: &Value) -> Option<(ItemId, AgentId, Money)> {
    let Value::List(items) = content else {
        return None;
    };
    match items.as_slice() {
        [Scalar::Str(item), Scalar::Str(agent), Scalar::Money(price)] => {
            Some((ItemId(item.clone()), agent.parse().ok()?, *price))
        }
        _ => None,
    }
}

fn offer_belief_is_for_item(content: &Value, item: &ItemId) -> bool {
    parse_offer_belief(content).is_some_and(|(i, _, _)| &i == item)
}

/// Name resolution for the client repertoire.
struct ClientRepertoire;

impl Repertoire for ClientRepertoire {
    fn has_action(&self, name: &str) -> bool {
        name == ACTION_ADVANCE_PROCUREMENTS
    }

    fn has_predicate(&self, name: &str) -> bool {
        name == PREDICATE_NO_ACTIVE_PROCUREMENTS
    }
}

struct ClientIntentionCtx<'a> {
    engine: &'a mut Engine,
    idx: usize,
}

impl Repertoire for ClientIntentionCtx<'_> {
    fn has_action(&self, name: &str) -> bool {
        ClientRepertoire.has_action(name)
    }

    fn has_predicate(&self, name: &str) -> bool {
        ClientRepertoire.has_predicate(name)
    }
}

impl IntentionHost for ClientIntentionCtx<'_> {
    fn evaluate(&mut self, predicate: &str) -> Result<bool, BdiError> {
        if predicate != PREDICATE_NO_ACTIVE_PROCUREMENTS {
            return Err(BdiError::UnknownPredicate(predicate.to_string()));
        }
        Ok(self.engine.clients[self.idx].procurements.is_empty())
    }

    fn perform(&mut self, action: &str) -> Result<(), BdiError> {
        if action != ACTION_ADVANCE_PROCUREMENTS {
            return Err(BdiError::UnknownAction(action.to_string()));
        }
        self.engine
            .advance_client_procurements(self.idx)
            .map_err(|err| BdiError::ActionFailed {
                name: action.to_string(),
                reason: err.to_string(),
            })
    }
}
