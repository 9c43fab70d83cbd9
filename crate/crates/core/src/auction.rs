//! Multi-round descending-price (reverse) auction state and decisions.
//!
//! The requester broadcasts a cfp at an asked price; sellers bid below it or
//! refuse. Each round either ends the auction (single bidder, round limit,
//! or an interrupting round of universal refusal) or lowers the ask to the
//! round's best bid. Ties go to the first bid received.

use std::collections::BTreeSet;

use crate::market::ItemId;
use crate::messaging::AgentId;
use crate::money::Money;

/// One seller offer within a round. `arrival` is the deterministic order in
/// which proposals were received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bid {
    pub seller: AgentId,
    pub price: Money,
    pub arrival: u32,
}

/// One in-flight reverse auction.
#[derive(Debug, Clone)]
pub struct AuctionState {
    pub id: u64,
    pub item: ItemId,
    pub requester: AgentId,
    pub quantity: u32,
    pub round: u32,
    pub max_rounds: u32,
    pub asked_price: Money,
    pub solicited: Vec<AgentId>,
    pub bids: Vec<Bid>,
    pub refusals: BTreeSet<AgentId>,
    pub start_tick: u64,
}

impl AuctionState {
    #[allow(clippy::too_many_arguments)]
    pub fn open(
        id: u64,
        item: ItemId,
        requester: AgentId,
        quantity: u32,
        asked_price: Money,
        max_rounds: u32,
        solicited: Vec<AgentId>,
        start_tick: u64,
    ) -> AuctionState {
        AuctionState {
            id,
            item,
            requester,
            quantity,
            round: 1,
            max_rounds,
            asked_price,
            solicited,
            bids: Vec::new(),
            refusals: BTreeSet::new(),
            start_tick,
        }
    }

    pub fn has_responded(&self, seller: AgentId) -> bool {
        self.refusals.contains(&seller) || self.bids.iter().any(|b| b.seller == seller)
    }

    pub fn was_solicited(&self, seller: AgentId) -> bool {
        self.solicited.contains(&seller)
    }

    pub fn record_bid(&mut self, seller: AgentId, price: Money) {
        let arrival = self.bids.len() as u32;
        self.bids.push(Bid {
            seller,
            price,
            arrival,
        });
    }

    pub fn record_refusal(&mut self, seller: AgentId) {
        self.refusals.insert(seller);
    }

    /// One reply per solicited seller has arrived.
    pub fn all_responded(&self) -> bool {
        self.bids.len() + self.refusals.len() >= self.solicited.len()
    }

    /// Lowers the ask to `new_ask` and starts a fresh round; all sellers are
    /// solicited again.
    pub fn advance_round(&mut self, new_ask: Money) {
        self.round += 1;
        self.asked_price = new_ask;
        self.bids.clear();
        self.refusals.clear();
    }
}

/// What to do once a round's replies are complete.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RoundDecision {
    /// No seller can provide at the asked price; the auction stops.
    Interrupted,
    /// A winner can be picked from this round's bids.
    SelectWinner,
    /// Re-solicit everyone at the round's best bid.
    NewRound { asked_price: Money },
}

/// Applies the round-completion rules: universal refusal interrupts, a single
/// bid or the round limit ends the auction, anything else lowers the ask.
pub fn decide_round(auction: &AuctionState) -> RoundDecision {
    if auction.bids.is_empty() {
        return RoundDecision::Interrupted;
    }
    if auction.bids.len() == 1 || auction.round >= auction.max_rounds {
        return RoundDecision::SelectWinner;
    }
    let best = auction
        .bids
        .iter()
        .map(|b| b.price)
        .min()
        .expect("bids is non-empty");
    RoundDecision::NewRound { asked_price: best }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WinnerSelection {
    pub winner: Bid,
    pub rejected: Vec<AgentId>,
}

/// Picks the lowest-priced bid of the final round; ties go to the smallest
/// arrival index. Returns `None` when there are no bids.
pub fn select_winner(auction: &AuctionState) -> Option<WinnerSelection> {
    let winner = auction
        .bids
        .iter()
        .min_by_key(|b| (b.price, b.arrival))?
        .clone();
    let rejected = auction
        .bids
        .iter()
        .filter(|b| b.arrival != winner.arrival)
        .map(|b| b.seller)
        .collect();
    Some(WinnerSelection { winner, rejected })
}

/// How a completed auction ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AuctionResult {
    Winner { seller: AgentId, price: Money },
    Interrupted,
}

/// Terminal record of one auction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuctionOutcome {
    pub result: AuctionResult,
    pub rounds_used: u32,
    pub elapsed_ticks: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn auction_with_bids(prices: &[i64], round: u32, max_rounds: u32) -> AuctionState {
        let mut auction = AuctionState::open(
            1,
            ItemId::from("peixe"),
            AgentId::client(0),
            18,
            Money::from_cents(275),
            max_rounds,
            (0..prices.len() as u32).map(AgentId::seller).collect(),
            0,
        );
        auction.round = round;
        for (i, cents) in prices.iter().enumerate() {
            auction.record_bid(AgentId::seller(i as u32), Money::from_cents(*cents));
        }
        auction
    }

    #[test]
    fn multiple_bids_lower_the_ask_to_the_best() {
        let auction = auction_with_bids(&[241, 230, 255], 1, 3);
        assert_eq!(
            decide_round(&auction),
            RoundDecision::NewRound {
                asked_price: Money::from_cents(230)
            }
        );
    }

    #[test]
    fn single_bid_goes_straight_to_winner_selection() {
        let auction = auction_with_bids(&[241], 1, 3);
        assert_eq!(decide_round(&auction), RoundDecision::SelectWinner);
    }

    #[test]
    fn universal_refusal_interrupts() {
        let mut auction = auction_with_bids(&[], 1, 3);
        auction.solicited = vec![AgentId::seller(0), AgentId::seller(1)];
        auction.record_refusal(AgentId::seller(0));
        auction.record_refusal(AgentId::seller(1));
        assert!(auction.all_responded());
        assert_eq!(decide_round(&auction), RoundDecision::Interrupted);
    }

    #[test]
    fn final_round_selects_winner_even_with_many_bids() {
        let auction = auction_with_bids(&[241, 230, 255], 3, 3);
        assert_eq!(decide_round(&auction), RoundDecision::SelectWinner);
    }

    #[test]
    fn tie_goes_to_the_first_bid_received() {
        let auction = auction_with_bids(&[170, 170, 180], 1, 1);
        let selection = select_winner(&auction).unwrap();
        assert_eq!(selection.winner.seller, AgentId::seller(0));
        assert_eq!(selection.winner.price, Money::from_cents(170));
        assert_eq!(
            selection.rejected,
            vec![AgentId::seller(1), AgentId::seller(2)]
        );
    }

    #[test]
    fn lowest_price_wins_regardless_of_order() {
        let auction = auction_with_bids(&[180, 170], 1, 1);
        let selection = select_winner(&auction).unwrap();
        assert_eq!(selection.winner.seller, AgentId::seller(1));
        assert_eq!(selection.winner.price, Money::from_cents(170));
    }

    #[test]
    fn singleton_bid_wins_at_its_price() {
        let auction = auction_with_bids(&[199], 2, 3);
        let selection = select_winner(&auction).unwrap();
        assert_eq!(selection.winner.seller, AgentId::seller(0));
        assert!(selection.rejected.is_empty());
    }

    #[test]
    fn advance_round_resets_replies_and_lowers_ask() {
        let mut auction = auction_with_bids(&[241, 230], 1, 3);
        auction.advance_round(Money::from_cents(230));
        assert_eq!(auction.round, 2);
        assert_eq!(auction.asked_price, Money::from_cents(230));
        assert!(auction.bids.is_empty());
        assert!(auction.refusals.is_empty());
    }

    /// Brute-force reference: min price, then min arrival index.
    fn reference_winner(bids: &[Bid]) -> Option<Bid> {
        let mut best: Option<&Bid> = None;
        for bid in bids {
            best = match best {
                None => Some(bid),
                Some(b) if bid.price < b.price => Some(bid),
                Some(b) if bid.price == b.price && bid.arrival < b.arrival => Some(bid),
                Some(b) => Some(b),
            };
        }
        best.cloned()
    }

    proptest! {
        #[test]
        fn select_winner_matches_brute_force(prices in proptest::collection::vec(150i64..260, 1..6)) {
            let auction = auction_with_bids(&prices, 1, 1);
            let selection = select_winner(&auction).unwrap();
            let expected = reference_winner(&auction.bids).unwrap();
            prop_assert_eq!(selection.winner, expected);
        }

        #[test]
        fn new_round_ask_never_exceeds_current_ask(prices in proptest::collection::vec(100i64..275, 2..6)) {
            let auction = auction_with_bids(&prices, 1, 5);
            if let RoundDecision::NewRound { asked_price } = decide_round(&auction) {
                prop_assert!(asked_price <= auction.asked_price);
            }
        }
    }
}
