//! Persists bus traffic into a bag until a stop condition fires.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use super::bus::{Bus, Selector, Subscription};
use crate::bag::{BagError, BagSummary, BagWriter, MessageRecord};
use crate::store::ChunkedStore;

const POLL: Duration = Duration::from_millis(10);

/// Cloneable flag that asks a running recorder to stop.
#[derive(Debug, Clone, Default)]
pub struct StopSignal(Arc<AtomicBool>);

impl StopSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trigger(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_triggered(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }
}

/// Recording ends when any configured condition fires.
#[derive(Debug, Clone, Default)]
pub struct StopCondition {
    /// Stop right after this many messages have been written.
    pub max_messages: Option<u64>,
    /// Stop after this long without a message.
    pub idle: Option<Duration>,
    /// Stop once triggered and the subscription queue is empty.
    pub signal: Option<StopSignal>,
}

impl StopCondition {
    pub fn count(n: u64) -> Self {
        Self {
            max_messages: Some(n),
            ..Self::default()
        }
    }

    pub fn idle(timeout: Duration) -> Self {
        Self {
            idle: Some(timeout),
            ..Self::default()
        }
    }

    pub fn signal(signal: StopSignal) -> Self {
        Self {
            signal: Some(signal),
            ..Self::default()
        }
    }
}

/// A subscription that turns into a recording. Subscribing happens in
/// [`Recorder::new`], so nothing published after that call is missed.
pub struct Recorder {
    subscription: Subscription,
    stamp_arrival: bool,
}

impl Recorder {
    pub fn new(bus: &Bus, selector: Selector) -> Self {
        Self {
            subscription: bus.subscribe(selector),
            stamp_arrival: false,
        }
    }

    /// Stamp records with arrival time instead of the envelope's original
    /// timestamp. Meant for live recording, not replay.
    pub fn stamp_arrival(mut self, enabled: bool) -> Self {
        self.stamp_arrival = enabled;
        self
    }

    /// Appends received envelopes to `writer` and seals it when `stop` fires.
    pub fn run<S: ChunkedStore>(
        self,
        writer: &mut BagWriter<S>,
        stop: &StopCondition,
    ) -> Result<BagSummary, BagError> {
        let mut written = 0u64;
        let mut last_activity = Instant::now();
        loop {
            if stop.max_messages.is_some_and(|max| written >= max) {
                break;
            }
            let mut wait = POLL;
            if let Some(idle) = stop.idle {
                let left = idle.saturating_sub(last_activity.elapsed());
                if left.is_zero() {
                    break;
                }
                wait = wait.min(left);
            }
            if stop.signal.is_none() && stop.idle.is_none() {
                wait = Duration::from_secs(3600);
            }
            match self.subscription.recv_timeout(wait) {
                Some(envelope) => {
                    let mut record = MessageRecord::from(envelope);
                    if self.stamp_arrival {
                        record.timestamp = SystemTime::now()
                            .duration_since(UNIX_EPOCH)
                            .map(|d| d.as_nanos() as u64)
                            .unwrap_or(0);
                    }
                    writer.append(&record)?;
                    written += 1;
                    last_activity = Instant::now();
                }
                None => {
                    if stop
                        .signal
                        .as_ref()
                        .is_some_and(|s| s.is_triggered() && self.subscription.is_empty())
                    {
                        break;
                    }
                }
            }
        }
        writer.seal()
    }
}

/// Subscribes with `selector` and records until `stop` fires.
pub fn record<S: ChunkedStore>(
    bus: &Bus,
    selector: Selector,
    writer: &mut BagWriter<S>,
    stop: &StopCondition,
) -> Result<BagSummary, BagError> {
    Recorder::new(bus, selector).run(writer, stop)
}
