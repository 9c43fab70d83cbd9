//! Belief store and intention stack.
//!
//! Beliefs are (type, content) pairs with set semantics: two beliefs equal in
//! both type and content cannot coexist. Intentions name an executable action
//! and a done-condition; both are plain strings resolved against the owning
//! agent's repertoire when pushed. Only the top intention is ever acted on.

use std::fmt;

use thiserror::Error;

use crate::messaging::Value;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BdiError {
    #[error("intention action {0:?} does not name a known procedure")]
    UnknownAction(String),
    #[error("intention done-condition {0:?} does not name a known predicate")]
    UnknownPredicate(String),
    #[error("predicate {name:?} failed: {reason}")]
    PredicateFailed { name: String, reason: String },
    #[error("action {name:?} failed: {reason}")]
    ActionFailed { name: String, reason: String },
}

/// A typed belief. Content equality is deep structural equality; decimal
/// contents compare exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Belief {
    kind: String,
    content: Value,
}

impl Belief {
    pub fn new(kind: impl Into<String>, content: impl Into<Value>) -> Belief {
        let kind = kind.into();
        assert!(!kind.is_empty(), "belief type must be non-empty");
        Belief {
            kind,
            content: content.into(),
        }
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn content(&self) -> &Value {
        &self.content
    }
}

/// Ordered, duplicate-free collection of beliefs. Insertion order is
/// preserved, which downstream code relies on for first-received tie-breaks.
#[derive(Debug, Clone, Default)]
pub struct BeliefStore {
    beliefs: Vec<Belief>,
}

impl BeliefStore {
    pub fn new() -> BeliefStore {
        BeliefStore::default()
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    /// Appends `belief` unless an equal (type and content) belief exists.
    /// Returns whether insertion occurred.
    pub fn add(&mut self, belief: Belief) -> bool {
        if self.beliefs.contains(&belief) {
            return false;
        }
        self.beliefs.push(belief);
        true
    }

    /// Removes the belief matching both type and content, if present.
    pub fn remove(&mut self, belief: &Belief) -> bool {
        match self.beliefs.iter().position(|b| b == belief) {
            Some(pos) => {
                self.beliefs.remove(pos);
                true
            }
            None => false,
        }
    }

    /// Replaces every belief of `kind` with a single `(kind, content)`
    /// belief; adds it if the type was absent.
    pub fn update(&mut self, kind: &str, content: impl Into<Value>) {
        self.beliefs.retain(|b| b.kind != kind);
        self.beliefs.push(Belief::new(kind, content));
    }

    /// All beliefs of `kind`, in insertion order.
    pub fn of_type<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Belief> + 'a {
        self.beliefs.iter().filter(move |b| b.kind == kind)
    }

    /// Drops every belief of `kind` whose content fails `keep`.
    pub fn retain_of_type(&mut self, kind: &str, mut keep: impl FnMut(&Value) -> bool) {
        self.beliefs.retain(|b| b.kind != kind || keep(&b.content));
    }

    pub fn iter(&self) -> impl Iterator<Item = &Belief> {
        self.beliefs.iter()
    }
}

/// An intention: an action to run until its done-condition holds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Intention {
    action: String,
    done_when: String,
}

impl Intention {
    pub fn new(action: impl Into<String>, done_when: impl Into<String>) -> Intention {
        Intention {
            action: action.into(),
            done_when: done_when.into(),
        }
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn done_when(&self) -> &str {
        &self.done_when
    }
}

impl fmt::Display for Intention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.action, self.done_when)
    }
}

/// The names an agent can resolve to procedures and predicates.
pub trait Repertoire {
    fn has_action(&self, name: &str) -> bool;
    fn has_predicate(&self, name: &str) -> bool;
}

/// The agent-side hooks the intention machinery runs against.
pub trait IntentionHost: Repertoire {
    fn evaluate(&mut self, predicate: &str) -> Result<bool, BdiError>;
    fn perform(&mut self, action: &str) -> Result<(), BdiError>;
}

/// Outcome of one [`execute_intentions`] call, for traces and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IntentionEvent {
    /// Empty stack; nothing happened.
    Idle,
    /// Top intention's done-condition held; it was popped without executing.
    Completed(Intention),
    /// Top intention's action ran once.
    Executed(Intention),
}

/// Strict LIFO stack of intentions.
#[derive(Debug, Clone, Default)]
pub struct IntentionStack {
    items: Vec<Intention>,
}

impl IntentionStack {
    pub fn new() -> IntentionStack {
        IntentionStack::default()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn top(&self) -> Option<&Intention> {
        self.items.last()
    }

    pub fn contains_action(&self, action: &str) -> bool {
        self.items.iter().any(|i| i.action == action)
    }

    /// Pushes after resolving both names against the agent's repertoire.
    pub fn push(
        &mut self,
        intention: Intention,
        repertoire: &impl Repertoire,
    ) -> Result<(), BdiError> {
        if !repertoire.has_action(&intention.action) {
            return Err(BdiError::UnknownAction(intention.action));
        }
        if !repertoire.has_predicate(&intention.done_when) {
            return Err(BdiError::UnknownPredicate(intention.done_when));
        }
        self.items.push(intention);
        Ok(())
    }

    /// Removes the topmost intention equal to `intention`, if any.
    pub fn remove(&mut self, intention: &Intention) -> bool {
        match self.items.iter().rposition(|i| i == intention) {
            Some(pos) => {
                self.items.remove(pos);
                true
            }
            None => false,
        }
    }
}

/// Acts on at most the top intention: pops it if its done-condition holds,
/// otherwise executes its action exactly once.
pub fn execute_intentions(
    stack: &mut IntentionStack,
    host: &mut impl IntentionHost,
) -> Result<IntentionEvent, BdiError> {
    let Some(top) = stack.top().cloned() else {
        return Ok(IntentionEvent::Idle);
    };
    if host.evaluate(top.done_when())? {
        stack.items.pop();
        Ok(IntentionEvent::Completed(top))
    } else {
        host.perform(top.action())?;
        Ok(IntentionEvent::Executed(top))
    }
}
