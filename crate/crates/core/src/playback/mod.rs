//! Play and record nodes over an in-process topic bus.

pub mod bus;
pub mod play;
pub mod record;

pub use bus::{Bus, Envelope, Publisher, Selector, Subscription};
pub use play::{play, play_filtered, PlayClock, PlayError, PlayReport};
pub use record::{record, Recorder, StopCondition, StopSignal};
