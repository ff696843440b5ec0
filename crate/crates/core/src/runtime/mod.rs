//! Driver/worker execution of jobs over bag partitions.
//!
//! A job names a bag on shared storage, a partition count, a user-logic
//! command and an output mode. The driver scans the bag, cuts it into
//! contiguous record ranges and hands one task per range to registered
//! workers. Each worker loads the bag into memory, streams its range through
//! the user logic and either returns the output inline or writes it to the
//! shared output directory.

pub mod driver;
pub mod task;
pub mod wire;
pub mod worker;

use std::fs;
use std::io::{self, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Duration;

use thiserror::Error;

use crate::bag::BagError;
use crate::pipe::frame::{encode_stream, Frame};
use crate::pipe::UserLogicSpec;

pub use driver::{submit_remote, Driver, DriverConfig, JobSpec};
pub use task::execute_task;
pub use wire::{MsgType, WireError, WireMessage};
pub use worker::{start_worker, WorkerConfig, WorkerHandle};

/// Environment variable naming the driver address for workers and clients.
pub const DRIVER_ENV: &str = "BAGPIPE_DRIVER";

/// A task is attempted at most this many times before its job fails.
pub const MAX_ATTEMPTS: u32 = 2;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: io::Error },
    #[error("cannot reach driver at {addr}: {source}")]
    Connect { addr: String, source: io::Error },
    #[error("registration refused: {0}")]
    Refused(String),
    #[error("no workers registered within {0:?}")]
    NoWorkers(Duration),
    #[error("job {job_id}: partition {partition_id} failed {MAX_ATTEMPTS} times: {reason}")]
    TaskFailed {
        job_id: u64,
        partition_id: u32,
        reason: String,
    },
    #[error("invalid job: {0}")]
    InvalidJob(String),
    #[error("source not found: {}", .0.display())]
    SourceNotFound(PathBuf),
    #[error(transparent)]
    Bag(#[from] BagError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("driver is shutting down")]
    ShuttingDown,
    #[error("job failed on the driver: {0}")]
    Remote(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A contiguous record range of one bag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionSpec {
    pub partition_id: u32,
    pub bag_path: PathBuf,
    pub range: Range<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OutputMode {
    /// Return output frames to the driver.
    Collect,
    /// Write `part-NNNNN.bpr` files into a shared directory.
    Store(PathBuf),
}

impl OutputMode {
    pub fn to_wire(&self) -> String {
        match self {
            OutputMode::Collect => "collect".to_string(),
            OutputMode::Store(dir) => format!("store:{}", dir.display()),
        }
    }

    pub fn from_wire(s: &str) -> Option<Self> {
        if s == "collect" {
            Some(OutputMode::Collect)
        } else {
            s.strip_prefix("store:")
                .filter(|d| !d.is_empty())
                .map(|d| OutputMode::Store(PathBuf::from(d)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub job_id: u64,
    pub partition: PartitionSpec,
    pub user_logic: UserLogicSpec,
    pub output_mode: OutputMode,
}

impl TaskSpec {
    pub fn to_message(&self) -> WireMessage {
        let mut msg = WireMessage::new(MsgType::Task)
            .with_u64("job_id", self.job_id)
            .with_u32("partition_id", self.partition.partition_id)
            .with_str("bag_path", &self.partition.bag_path.to_string_lossy())
            .with_u64("range_start", self.partition.range.start)
            .with_u64("range_end", self.partition.range.end)
            .with_bytes("cmd", self.user_logic.argv_bytes())
            .with_str("output_mode", &self.output_mode.to_wire());
        if let Some(t) = self.user_logic.timeout {
            msg = msg.with_u64("timeout_ms", t.as_millis() as u64);
        }
        msg
    }

    pub fn from_message(msg: &WireMessage) -> Result<Self, WireError> {
        let bad = |name: &str, reason: &str| WireError::BadField {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        let mut user_logic = UserLogicSpec::from_argv_bytes(msg.bytes("cmd")?)
            .map_err(|_| bad("cmd", "empty command"))?;
        if msg.field("timeout_ms").is_some() {
            user_logic.timeout = Some(Duration::from_millis(msg.u64("timeout_ms")?));
        }
        let output_mode = OutputMode::from_wire(msg.str("output_mode")?)
            .ok_or_else(|| bad("output_mode", "expected collect or store:<dir>"))?;
        let start = msg.u64("range_start")?;
        let end = msg.u64("range_end")?;
        if end < start {
            return Err(bad("range_end", "range end precedes start"));
        }
        Ok(Self {
            job_id: msg.u64("job_id")?,
            partition: PartitionSpec {
                partition_id: msg.u32("partition_id")?,
                bag_path: PathBuf::from(msg.str("bag_path")?),
                range: start..end,
            },
            user_logic,
            output_mode,
        })
    }
}

/// Registered worker as seen by the driver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerInfo {
    pub worker_id: String,
    pub address: String,
    pub slots: u32,
}

/// What a successful task produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskOutput {
    Collected(Vec<Frame>),
    Stored(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionOutcome {
    pub partition_id: u32,
    pub range: Range<u64>,
    pub output: TaskOutput,
}

/// Outcomes of a finished job, ordered by partition id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobResult {
    pub job_id: u64,
    pub outcomes: Vec<PartitionOutcome>,
    pub wall_time: Duration,
}

impl JobResult {
    /// All collected frames, in partition order.
    pub fn collected_frames(&self) -> Vec<&Frame> {
        self.outcomes
            .iter()
            .filter_map(|o| match &o.output {
                TaskOutput::Collected(frames) => Some(frames.iter()),
                TaskOutput::Stored(_) => None,
            })
            .flatten()
            .collect()
    }
}

/// Splits `[0, record_count)` into `partitions` contiguous ranges whose sizes
/// differ by at most one; the larger ranges come first.
pub fn partition_ranges(record_count: u64, partitions: u32) -> Vec<Range<u64>> {
    assert!(partitions > 0, "partition count must be positive");
    let p = partitions as u64;
    let base = record_count / p;
    let extra = record_count % p;
    let mut start = 0;
    (0..p)
        .map(|i| {
            let len = base + u64::from(i < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

pub fn part_file_name(partition_id: u32) -> String {
    format!("part-{partition_id:05}.bpr")
}

/// Writes `frames` as `part-NNNNN.bpr` under `dir`, atomically.
pub fn store_output(frames: &[Frame], dir: &Path, partition_id: u32) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let target = dir.join(part_file_name(partition_id));
    let tmp = tempfile::Builder::new().prefix(".part-").tempfile_in(dir)?;
    {
        let mut sink = BufWriter::new(tmp.as_file());
        encode_stream(frames, &mut sink).map_err(io::Error::other)?;
        sink.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(&target).map_err(|e| e.error)?;
    Ok(target)
}
