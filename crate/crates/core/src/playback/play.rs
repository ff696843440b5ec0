//! Replays a bag onto the bus following the bag's own timeline.

use std::collections::HashMap;
use std::fmt;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::bus::{Bus, Publisher, Selector};
use crate::bag::{BagError, BagReader};
use crate::store::ChunkedStore;

/// Maps bag time onto wall time. Rate 0 publishes as fast as possible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayClock {
    rate: f64,
}

impl PlayClock {
    pub fn new(rate: f64) -> Result<Self, BagError> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(BagError::InvalidArgument(format!(
                "playback rate must be a finite value >= 0, got {rate}"
            )));
        }
        Ok(Self { rate })
    }

    pub fn as_fast_as_possible() -> Self {
        Self { rate: 0.0 }
    }

    pub fn realtime() -> Self {
        Self { rate: 1.0 }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Wall-clock offset from the start of playback for a bag-time offset.
    pub fn wall_offset(&self, bag_offset_ns: u64) -> Duration {
        if self.rate == 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(bag_offset_ns as f64 / 1e9 / self.rate)
        }
    }
}

impl Default for PlayClock {
    fn default() -> Self {
        Self::realtime()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlayReport {
    pub published: u64,
    /// Records excluded by the topic filter.
    pub skipped: u64,
    /// Records whose timestamp went backwards relative to the previous one.
    pub out_of_order: u64,
    pub duration: Duration,
}

impl fmt::Display for PlayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "published={} skipped={} out_of_order={} duration_s={:.3}",
            self.published,
            self.skipped,
            self.out_of_order,
            self.duration.as_secs_f64()
        )
    }
}

/// Playback stopped on a bag error; `report` covers what was published.
#[derive(Debug, Error)]
#[error("playback stopped after {} records: {source}", report.published)]
pub struct PlayError {
    pub report: PlayReport,
    #[source]
    pub source: BagError,
}

/// Publishes every record of `reader` in stored order.
pub fn play<S: ChunkedStore + ?Sized>(
    reader: &mut BagReader<'_, S>,
    bus: &Bus,
    clock: &PlayClock,
) -> Result<PlayReport, PlayError> {
    play_filtered(reader, bus, clock, &Selector::All)
}

/// Like [`play`], publishing only records whose topic matches `filter`.
///
/// Gaps between consecutive records are scaled by the clock rate. When a
/// timestamp goes backwards the record is published immediately, in stored
/// order, and counted in [`PlayReport::out_of_order`].
pub fn play_filtered<S: ChunkedStore + ?Sized>(
    reader: &mut BagReader<'_, S>,
    bus: &Bus,
    clock: &PlayClock,
    filter: &Selector,
) -> Result<PlayReport, PlayError> {
    let started = Instant::now();
    let mut report = PlayReport::default();
    let mut publishers: HashMap<String, Publisher> = HashMap::new();
    let mut first_ts: Option<u64> = None;
    let mut latest_ts = 0u64;

    loop {
        let record = match reader.next_record() {
            Ok(Some(record)) => record,
            Ok(None) => break,
            Err(source) => {
                report.duration = started.elapsed();
                return Err(PlayError { report, source });
            }
        };
        let base = *first_ts.get_or_insert(record.timestamp);
        if report.published + report.skipped > 0 && record.timestamp < latest_ts {
            report.out_of_order += 1;
        }
        latest_ts = latest_ts.max(record.timestamp);

        if !filter.matches(&record.topic) {
            report.skipped += 1;
            continue;
        }

        let target = started + clock.wall_offset(latest_ts.saturating_sub(base));
        let now = Instant::now();
        if target > now {
            thread::sleep(target - now);
        }

        let publisher = match publishers.get(&record.topic) {
            Some(p) => p,
            None => {
                let p = bus
                    .advertise(record.topic.clone())
                    .map_err(|source| PlayError {
                        report: report.clone(),
                        source,
                    })?;
                publishers.entry(record.topic.clone()).or_insert(p)
            }
        };
        publisher.publish(record.timestamp, record.payload);
        report.published += 1;
    }

    if report.out_of_order > 0 {
        log::warn!(
            "{} records were out of timestamp order; published in stored order",
            report.out_of_order
        );
    }
    report.duration = started.elapsed();
    Ok(report)
}
