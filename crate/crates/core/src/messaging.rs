//! FIPA-ACL style messaging: performative-tagged messages, per-agent FIFO
//! mailboxes, safe point-to-point send and breed-wide broadcast.
//!
//! The [`MessageHub`] owns every mailbox. Delivery to a receiver that does
//! not exist is skipped rather than treated as an error ("safe send"); a
//! diagnostics counter keeps such skips visible.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::money::Money;

/// The two agent populations of the simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Breed {
    Client,
    Seller,
}

impl fmt::Display for Breed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Breed::Client => f.write_str("client"),
            Breed::Seller => f.write_str("seller"),
        }
    }
}

/// Compact agent identifier; displays as `c1`, `c2`, ... / `s1`, `s2`, ...
///
/// Ordering (clients before sellers, then by index) defines the engine's
/// deterministic iteration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgentId {
    breed: Breed,
    index: u32,
}

impl AgentId {
    pub fn client(index: u32) -> AgentId {
        AgentId {
            breed: Breed::Client,
            index,
        }
    }

    pub fn seller(index: u32) -> AgentId {
        AgentId {
            breed: Breed::Seller,
            index,
        }
    }

    pub fn breed(self) -> Breed {
        self.breed
    }

    pub fn index(self) -> u32 {
        self.index
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.breed {
            Breed::Client => 'c',
            Breed::Seller => 's',
        };
        write!(f, "{}{}", prefix, self.index + 1)
    }
}

impl FromStr for AgentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || format!("invalid agent id {:?}", s);
        let (prefix, number) = s.split_at(1.min(s.len()));
        let breed = match prefix {
            "c" => Breed::Client,
            "s" => Breed::Seller,
            _ => return Err(err()),
        };
        let number: u32 = number.parse().map_err(|_| err())?;
        if number == 0 {
            return Err(err());
        }
        Ok(AgentId {
            breed,
            index: number - 1,
        })
    }
}

/// Scalar message-field content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scalar {
    Str(String),
    Int(i64),
    Money(Money),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Str(s) => f.write_str(s),
            Scalar::Int(i) => write!(f, "{}", i),
            Scalar::Money(m) => write!(f, "{}", m),
        }
    }
}

/// Message-field and belief content: strings, integers, exact decimals, and
/// flat lists thereof.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Str(String),
    Int(i64),
    Money(Money),
    List(Vec<Scalar>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Str(s) => f.write_str(s),
            Value::Int(i) => write!(f, "{}", i),
            Value::Money(m) => write!(f, "{}", m),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    write!(f, "{}", item)?;
                }
                f.write_str("]")
            }
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Value {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Value {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Value {
        Value::Int(i)
    }
}

impl From<u32> for Value {
    fn from(i: u32) -> Value {
        Value::Int(i64::from(i))
    }
}

impl From<Money> for Value {
    fn from(m: Money) -> Value {
        Value::Money(m)
    }
}

impl From<Vec<Scalar>> for Value {
    fn from(items: Vec<Scalar>) -> Value {
        Value::List(items)
    }
}

/// The six speech acts used by the trading protocol. No other performative
/// is constructible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Performative {
    Cfp,
    Propose,
    Refuse,
    AcceptProposal,
    RejectProposal,
    Success,
}

impl Performative {
    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Cfp => "cfp",
            Performative::Propose => "propose",
            Performative::Refuse => "refuse",
            Performative::AcceptProposal => "accept-proposal",
            Performative::RejectProposal => "reject-proposal",
            Performative::Success => "success",
        }
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Performative {
    type Err = MessageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cfp" => Ok(Performative::Cfp),
            "propose" => Ok(Performative::Propose),
            "refuse" => Ok(Performative::Refuse),
            "accept-proposal" => Ok(Performative::AcceptProposal),
            "reject-proposal" => Ok(Performative::RejectProposal),
            "success" => Ok(Performative::Success),
            other => Err(MessageError::UnknownPerformative(other.to_string())),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MessageError {
    #[error("unknown performative {0:?}")]
    UnknownPerformative(String),
    #[error("message field keys must be non-empty")]
    EmptyFieldKey,
    #[error("cannot dispatch a message without receivers")]
    NoReceivers,
}

/// One communication unit. The sender is fixed at construction; fields keep
/// list semantics, so duplicate keys are allowed and lookup returns the most
/// recently added value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    performative: Performative,
    sender: AgentId,
    receivers: Vec<AgentId>,
    fields: Vec<(String, Value)>,
    sent_tick: Option<u64>,
}

impl Message {
    pub fn new(performative: Performative, sender: AgentId) -> Message {
        Message {
            performative,
            sender,
            receivers: Vec::new(),
            fields: Vec::new(),
            sent_tick: None,
        }
    }

    pub fn performative(&self) -> Performative {
        self.performative
    }

    pub fn sender(&self) -> AgentId {
        self.sender
    }

    pub fn receivers(&self) -> &[AgentId] {
        &self.receivers
    }

    pub fn set_receivers(&mut self, receivers: Vec<AgentId>) {
        self.receivers = receivers;
    }

    pub fn sent_tick(&self) -> Option<u64> {
        self.sent_tick
    }

    pub fn add_field(&mut self, key: &str, value: impl Into<Value>) -> Result<(), MessageError> {
        if key.is_empty() {
            return Err(MessageError::EmptyFieldKey);
        }
        self.fields.push((key.to_string(), value.into()));
        Ok(())
    }

    /// Builder-style `add_field` for keys known to be non-empty.
    pub fn with_field(mut self, key: &str, value: impl Into<Value>) -> Message {
        self.add_field(key, value)
            .expect("with_field requires a non-empty key");
        self
    }

    /// Latest-wins lookup over the field list.
    pub fn field(&self, key: &str) -> Option<&Value> {
        self.fields
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
    }

    pub fn fields(&self) -> &[(String, Value)] {
        &self.fields
    }
}

/// Owns every agent's mailbox and performs all dispatch. Single-threaded
/// within a run; independent runs share nothing.
#[derive(Debug, Default)]
pub struct MessageHub {
    mailboxes: BTreeMap<AgentId, VecDeque<Message>>,
    tick: u64,
    delivered: u64,
    popped: u64,
    skipped: u64,
    trace: Option<Vec<String>>,
}

impl MessageHub {
    pub fn new() -> MessageHub {
        MessageHub::default()
    }

    /// Enables the per-dispatch trace log
    /// (`tick,sender,performative,receivers,fields`).
    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        self.trace.take().unwrap_or_default()
    }

    pub fn set_tick(&mut self, tick: u64) {
        self.tick = tick;
    }

    pub fn register(&mut self, id: AgentId) {
        self.mailboxes.entry(id).or_default();
    }

    pub fn is_registered(&self, id: AgentId) -> bool {
        self.mailboxes.contains_key(&id)
    }

    pub fn agents_of_breed(&self, breed: Breed) -> Vec<AgentId> {
        self.mailboxes
            .keys()
            .copied()
            .filter(|id| id.breed() == breed)
            .collect()
    }

    pub fn queue_len(&self, id: AgentId) -> usize {
        self.mailboxes.get(&id).map_or(0, VecDeque::len)
    }

    pub fn total_queued(&self) -> usize {
        self.mailboxes.values().map(VecDeque::len).sum()
    }

    /// Count of deliveries skipped because the receiver did not exist.
    pub fn skipped_deliveries(&self) -> u64 {
        self.skipped
    }

    pub fn delivered_total(&self) -> u64 {
        self.delivered
    }

    pub fn popped_total(&self) -> u64 {
        self.popped
    }

    /// Appends the message to the mailbox of every receiver that exists and
    /// returns the number of deliveries. Nonexistent receivers are skipped.
    pub fn send(&mut self, mut msg: Message) -> Result<usize, MessageError> {
        if msg.receivers.is_empty() {
            return Err(MessageError::NoReceivers);
        }
        msg.sent_tick = Some(self.tick);
        if let Some(trace) = &mut self.trace {
            trace.push(format_trace_line(self.tick, &msg));
        }
        let mut count = 0;
        for receiver in msg.receivers.clone() {
            match self.mailboxes.get_mut(&receiver) {
                Some(queue) => {
                    queue.push_back(msg.clone());
                    count += 1;
                    self.delivered += 1;
                }
                None => self.skipped += 1,
            }
        }
        Ok(count)
    }

    /// Delivers to every live agent of `breed` except the sender, in agent-id
    /// order. An empty receiver set is not an error and dispatches nothing.
    pub fn broadcast(&mut self, breed: Breed, mut msg: Message) -> Result<usize, MessageError> {
        let receivers: Vec<AgentId> = self
            .agents_of_breed(breed)
            .into_iter()
            .filter(|id| *id != msg.sender)
            .collect();
        if receivers.is_empty() {
            return Ok(0);
        }
        msg.receivers = receivers;
        self.send(msg)
    }

    /// Removes and returns the head of the agent's queue.
    pub fn next_message(&mut self, id: AgentId) -> Option<Message> {
        let msg = self.mailboxes.get_mut(&id)?.pop_front();
        if msg.is_some() {
            self.popped += 1;
        }
        msg
    }
}

fn format_trace_line(tick: u64, msg: &Message) -> String {
    let receivers = msg
        .receivers
        .iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join("|");
    let fields = msg
        .fields
        .iter()
        .map(|(k, v)| format!("{}={}", k, v))
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "{},{},{},{},{}",
        tick, msg.sender, msg.performative, receivers, fields
    )
}
