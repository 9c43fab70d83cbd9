//! Typed view of the trading protocol's message contents.
//!
//! Every protocol message carries an `item` field; solicitations and offers
//! also carry `quantity` and `price`. Encoding appends fields in a fixed
//! order; decoding uses latest-wins lookup.

use thiserror::Error;

use crate::market::ItemId;
use crate::messaging::{AgentId, Message, Performative, Value};
use crate::money::Money;

pub const FIELD_ITEM: &str = "item";
pub const FIELD_QUANTITY: &str = "quantity";
pub const FIELD_PRICE: &str = "price";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{performative} message is missing field {field:?}")]
    MissingField {
        performative: Performative,
        field: &'static str,
    },
    #[error("{performative} message field {field:?} has the wrong type")]
    WrongType {
        performative: Performative,
        field: &'static str,
    },
    #[error("{performative} message carries a non-positive quantity")]
    BadQuantity { performative: Performative },
}

/// The trading speech acts with their payloads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TradeMessage {
    Cfp {
        item: ItemId,
        quantity: u32,
        price: Money,
    },
    Propose {
        item: ItemId,
        quantity: u32,
        price: Money,
    },
    Refuse {
        item: ItemId,
    },
    AcceptProposal {
        item: ItemId,
        quantity: u32,
        price: Money,
    },
    RejectProposal {
        item: ItemId,
    },
    Success {
        item: ItemId,
        quantity: u32,
        price: Money,
    },
}

impl TradeMessage {
    pub fn performative(&self) -> Performative {
        match self {
            TradeMessage::Cfp { .. } => Performative::Cfp,
            TradeMessage::Propose { .. } => Performative::Propose,
            TradeMessage::Refuse { .. } => Performative::Refuse,
            TradeMessage::AcceptProposal { .. } => Performative::AcceptProposal,
            TradeMessage::RejectProposal { .. } => Performative::RejectProposal,
            TradeMessage::Success { .. } => Performative::Success,
        }
    }

    pub fn item(&self) -> &ItemId {
        match self {
            TradeMessage::Cfp { item, .. }
            | TradeMessage::Propose { item, .. }
            | TradeMessage::Refuse { item }
            | TradeMessage::AcceptProposal { item, .. }
            | TradeMessage::RejectProposal { item }
            | TradeMessage::Success { item, .. } => item,
        }
    }

    pub fn encode(&self, sender: AgentId) -> Message {
        let msg =
            Message::new(self.performative(), sender).with_field(FIELD_ITEM, self.item().as_str());
        match self {
            TradeMessage::Cfp {
                quantity, price, ..
            }
            | TradeMessage::Propose {
                quantity, price, ..
            }
            | TradeMessage::AcceptProposal {
                quantity, price, ..
            }
            | TradeMessage::Success {
                quantity, price, ..
            } => msg
                .with_field(FIELD_QUANTITY, *quantity)
                .with_field(FIELD_PRICE, *price),
            TradeMessage::Refuse { .. } | TradeMessage::RejectProposal { .. } => msg,
        }
    }

    pub fn decode(msg: &Message) -> Result<TradeMessage, ProtocolError> {
        let performative = msg.performative();
        let item = ItemId(str_field(msg, FIELD_ITEM)?);
        Ok(match performative {
            Performative::Refuse => TradeMessage::Refuse { item },
            Performative::RejectProposal => TradeMessage::RejectProposal { item },
            Performative::Cfp => {
                let (quantity, price) = amount_fields(msg)?;
                TradeMessage::Cfp {
                    item,
                    quantity,
                    price,
                }
            }
            Performative::Propose => {
                let (quantity, price) = amount_fields(msg)?;
                TradeMessage::Propose {
                    item,
                    quantity,
                    price,
                }
            }
            Performative::AcceptProposal => {
                let (quantity, price) = amount_fields(msg)?;
                TradeMessage::AcceptProposal {
                    item,
                    quantity,
                    price,
                }
            }
            Performative::Success => {
                let (quantity, price) = amount_fields(msg)?;
                TradeMessage::Success {
                    item,
                    quantity,
                    price,
                }
            }
        })
    }
}

fn str_field(msg: &Message, field: &'static str) -> Result<String, ProtocolError> {
    match msg.field(field) {
        Some(Value::Str(s)) => Ok(s.clone()),
        Some(_) => Err(ProtocolError::WrongType {
            performative: msg.performative(),
            field,
        }),
        None => Err(ProtocolError::MissingField {
            performative: msg.performative(),
            field,
        }),
    }
}

fn amount_fields(msg: &Message) -> Result<(u32, Money), ProtocolError> {
    let performative = msg.performative();
    let quantity = match msg.field(FIELD_QUANTITY) {
        Some(Value::Int(i)) => u32::try_from(*i)
            .ok()
            .filter(|q| *q >= 1)
            .ok_or(ProtocolError::BadQuantity { performative })?,
        Some(_) => {
            return Err(ProtocolError::WrongType {
                performative,
                field: FIELD_QUANTITY,
            });
        }
        None => {
            return Err(ProtocolError::MissingField {
                performative,
                field: FIELD_QUANTITY,
            });
        }
    };
    let price = match msg.field(FIELD_PRICE) {
        Some(Value::Money(m)) => *m,
        Some(_) => {
            return Err(ProtocolError::WrongType {
                performative,
                field: FIELD_PRICE,
            })
        }
        None => {
            return Err(ProtocolError::MissingField {
                performative,
                field: FIELD_PRICE,
            })
        }
    };
    Ok((quantity, price))
}
