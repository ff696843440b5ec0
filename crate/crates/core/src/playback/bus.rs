//! In-process topic bus: publishers advertise a topic, subscribers receive
//! every envelope published on matching topics after they subscribed.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use crate::bag::{validate_topic, BagError, MessageRecord};

/// Queue depth at which a subscriber gets a warning logged.
pub const HIGH_WATER_MARK: usize = 100_000;

/// A record in flight on the bus. Carries the bag's original timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: String,
    pub original_timestamp: u64,
    pub payload: Vec<u8>,
}

impl From<MessageRecord> for Envelope {
    fn from(r: MessageRecord) -> Self {
        Self {
            topic: r.topic,
            original_timestamp: r.timestamp,
            payload: r.payload,
        }
    }
}

impl From<Envelope> for MessageRecord {
    fn from(e: Envelope) -> Self {
        MessageRecord {
            topic: e.topic,
            timestamp: e.original_timestamp,
            payload: e.payload,
        }
    }
}

/// Which topics a subscription (or a playback filter) accepts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    All,
    Topics(BTreeSet<String>),
}

impl Selector {
    pub fn topic(topic: impl Into<String>) -> Self {
        Selector::Topics(BTreeSet::from([topic.into()]))
    }

    pub fn topics<I, S>(topics: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Selector::Topics(topics.into_iter().map(Into::into).collect())
    }

    pub fn matches(&self, topic: &str) -> bool {
        match self {
            Selector::All => true,
            Selector::Topics(set) => set.contains(topic),
        }
    }
}

struct Slot {
    tx: Sender<Envelope>,
    warned: bool,
}

impl Slot {
    /// False once the subscriber has gone away.
    fn deliver(&mut self, envelope: &Envelope) -> bool {
        if self.tx.send(envelope.clone()).is_err() {
            return false;
        }
        let depth = self.tx.len();
        if depth >= HIGH_WATER_MARK && !self.warned {
            log::warn!(
                "subscriber queue for {} holds {depth} envelopes",
                envelope.topic
            );
            self.warned = true;
        } else if depth < HIGH_WATER_MARK / 2 {
            self.warned = false;
        }
        true
    }
}

#[derive(Default)]
struct Registry {
    by_topic: HashMap<String, Vec<Slot>>,
    all: Vec<Slot>,
}

/// Cloneable handle to a shared bus.
#[derive(Clone, Default)]
pub struct Bus {
    registry: Arc<Mutex<Registry>>,
}

impl Bus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advertise(&self, topic: impl Into<String>) -> Result<Publisher, BagError> {
        let topic = topic.into();
        validate_topic(&topic)?;
        Ok(Publisher {
            bus: self.clone(),
            topic,
        })
    }

    pub fn subscribe(&self, selector: Selector) -> Subscription {
        let (tx, rx) = unbounded();
        let mut reg = self.registry.lock().unwrap();
        match &selector {
            Selector::All => reg.all.push(Slot { tx, warned: false }),
            Selector::Topics(topics) => {
                for topic in topics {
                    reg.by_topic.entry(topic.clone()).or_default().push(Slot {
                        tx: tx.clone(),
                        warned: false,
                    });
                }
            }
        }
        Subscription { rx, selector }
    }

    /// Returns the number of subscribers the envelope reached.
    fn publish(&self, envelope: Envelope) -> usize {
        let mut reg = self.registry.lock().unwrap();
        let mut delivered = 0;
        if let Some(slots) = reg.by_topic.get_mut(&envelope.topic) {
            slots.retain_mut(|slot| slot.deliver(&envelope));
            delivered += slots.len();
        }
        reg.all.retain_mut(|slot| slot.deliver(&envelope));
        delivered += reg.all.len();
        delivered
    }
}

/// Sends envelopes on one topic.
#[derive(Clone)]
pub struct Publisher {
    bus: Bus,
    topic: String,
}

impl Publisher {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Publishes to current subscribers; with none, the envelope is dropped.
    pub fn publish(&self, timestamp: u64, payload: Vec<u8>) -> usize {
        self.bus.publish(Envelope {
            topic: self.topic.clone(),
            original_timestamp: timestamp,
            payload,
        })
    }
}

/// Receiving end of a subscription. Dropping it unsubscribes.
pub struct Subscription {
    rx: Receiver<Envelope>,
    selector: Selector,
}

impl Subscription {
    pub fn selector(&self) -> &Selector {
        &self.selector
    }

    /// Blocks up to `timeout` for the next envelope.
    pub fn recv_timeout(&self, timeout: Duration) -> Option<Envelope> {
        match self.rx.recv_timeout(timeout) {
            Ok(e) => Some(e),
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => None,
        }
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        self.rx.try_recv().ok()
    }

    pub fn len(&self) -> usize {
        self.rx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rx.is_empty()
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.rx.try_iter().collect()
    }
}
