//! Distributed playback simulation over chunked sensor-log bags.
//!
//! Bags of timestamped, topic-tagged records are written and read through a
//! [`store::ChunkedStore`] that is either disk- or memory-backed. Partitions
//! of a bag are streamed as BPR1 frames through external user-logic
//! processes, and a driver spreads that work over registered workers.

pub mod bag;
pub mod bench;
pub mod image;
pub mod pipe;
pub mod playback;
pub mod runtime;
pub mod scenario;
pub mod store;

pub use bag::{BagError, BagReader, BagSummary, BagWriter, MessageRecord};
pub use pipe::{Frame, UserLogicSpec};
pub use store::{ChunkedStore, DiskStore, MemoryStore};
