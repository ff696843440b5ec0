//! Memory vs disk bag I/O on many one-record bags.

use std::fmt;
use std::hint::black_box;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use super::report::{BenchReport, CacheRow};
use super::{coefficient_of_variation, machine_descriptor, median, unix_now, BenchError};
use crate::bag::{BagReader, BagWriter, MessageRecord, CHUNK_HEADER_LEN, HEADER_LEN, TRAILER_LEN};
use crate::store::{ChunkedStore, DiskStore, MemoryStore};

const TOPIC: &str = "/bench/blob";
/// CV at or above this marks a measurement as noisy.
pub const NOISY_CV: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Disk,
    Memory,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Disk => "disk",
            Backend::Memory => "memory",
        })
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "disk" => Ok(Backend::Disk),
            "memory" => Ok(Backend::Memory),
            _ => Err(format!("unknown backend {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workload {
    Small,
    Large,
}

impl Workload {
    /// File count of the full-size experiment.
    pub fn reference_file_count(self) -> u64 {
        match self {
            Workload::Small => 1_000_000,
            Workload::Large => 100_000,
        }
    }

    pub fn file_size(self) -> usize {
        match self {
            Workload::Small => 1024,
            Workload::Large => 1024 * 1024,
        }
    }

    /// Reduction applied when no scale factor is given: 10,000 small files
    /// and 100 large ones.
    pub fn default_scale_factor(self) -> u64 {
        match self {
            Workload::Small => 100,
            Workload::Large => 1000,
        }
    }

    /// Speedup of the memory cache over disk reported for the full-size
    /// experiment, per phase.
    pub fn reference_ratio(self, phase: Phase) -> f64 {
        match (self, phase) {
            (_, Phase::Write) => 3.0,
            (Workload::Large, Phase::Read) => 5.0,
            (Workload::Small, Phase::Read) => 10.0,
        }
    }

    pub fn desk(self, scale_factor: Option<u64>) -> Result<WorkloadSpec, BenchError> {
        let scale_factor = scale_factor.unwrap_or(self.default_scale_factor());
        if scale_factor == 0 {
            return Err(BenchError::InvalidParameter(
                "scale factor must be positive".into(),
            ));
        }
        Ok(WorkloadSpec {
            workload: self,
            scale_factor,
            file_count: self.reference_file_count() / scale_factor,
            file_size: self.file_size(),
        })
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Workload::Small => "small",
            Workload::Large => "large",
        })
    }
}

impl FromStr for Workload {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "small" | "small-file" => Ok(Workload::Small),
            "large" | "large-file" => Ok(Workload::Large),
            _ => Err(format!("unknown workload {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Write,
    Read,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Write => "write",
            Phase::Read => "read",
        })
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "write" => Ok(Phase::Write),
            "read" => Ok(Phase::Read),
            _ => Err(format!("unknown phase {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub workload: Workload,
    pub scale_factor: u64,
    pub file_count: u64,
    pub file_size: usize,
}

#[derive(Debug, Clone)]
pub struct CacheBenchConfig {
    pub file_count: u64,
    pub file_size: usize,
    pub backend: Backend,
    /// Parent of the scratch directory used by the disk backend.
    pub scratch: Option<PathBuf>,
}

impl CacheBenchConfig {
    pub fn new(spec: WorkloadSpec, backend: Backend) -> Self {
        Self {
            file_count: spec.file_count,
            file_size: spec.file_size,
            backend,
            scratch: None,
        }
    }

    fn bag_bytes(&self) -> u64 {
        let record = MessageRecord::new(TOPIC, 0, Vec::new()).encoded_len() + self.file_size;
        HEADER_LEN + CHUNK_HEADER_LEN + record as u64 + TRAILER_LEN
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheTimes {
    pub write_s: f64,
    pub read_s: f64,
}

fn mem_available() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn disk_available(dir: &Path) -> Option<u64> {
    use std::ffi::CString;
    use std::os::unix::ffi::OsStrExt;

    let c = CString::new(dir.as_os_str().as_bytes()).ok()?;
    let mut st: libc::statvfs = unsafe { std::mem::zeroed() };
    if unsafe { libc::statvfs(c.as_ptr(), &mut st) } != 0 {
        return None;
    }
    Some(st.f_bavail as u64 * st.f_frsize as u64)
}

fn preflight(config: &CacheBenchConfig, scratch: &Path) -> Result<(), BenchError> {
    let needed = config.file_count.saturating_mul(config.bag_bytes());
    let (resource, available) = match config.backend {
        // Leave headroom for the allocator and the rest of the process.
        Backend::Memory => ("memory", mem_available().map(|a| a / 2)),
        Backend::Disk => ("disk space", disk_available(scratch)),
    };
    match available {
        Some(available) if available < needed => Err(BenchError::Insufficient {
            resource,
            needed,
            available,
        }),
        _ => Ok(()),
    }
}

/// Buffers handed back by memory stores after a run, reused by the next one.
///
/// Repeated disk runs land in page-cache pages the kernel already holds;
/// this gives repeated memory runs the same footing instead of paying for
/// fresh zeroed pages every time.
#[derive(Debug, Default)]
pub struct BufferPool {
    free: Vec<Vec<u8>>,
}

impl BufferPool {
    fn take(&mut self, capacity: usize) -> Vec<u8> {
        match self.free.iter().position(|b| b.capacity() >= capacity) {
            Some(i) => self.free.swap_remove(i),
            None => Vec::with_capacity(capacity),
        }
    }

    fn give(&mut self, buf: Vec<u8>) {
        self.free.push(buf);
    }

    pub fn len(&self) -> usize {
        self.free.len()
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }
}

/// Writes `file_count` one-record bags through the chosen backend, then reads
/// every record back. Each phase is timed separately.
pub fn run_cache_bench(config: &CacheBenchConfig) -> Result<CacheTimes, BenchError> {
    run_cache_bench_pooled(config, &mut BufferPool::default())
}

/// Like [`run_cache_bench`], drawing memory-store buffers from `pool` and
/// returning them to it afterwards.
pub fn run_cache_bench_pooled(
    config: &CacheBenchConfig,
    pool: &mut BufferPool,
) -> Result<CacheTimes, BenchError> {
    if config.file_count == 0 {
        return Err(BenchError::Empty("file_count is 0"));
    }
    if config.file_size == 0 {
        return Err(BenchError::Empty("file_size is 0"));
    }
    let parent = config.scratch.clone().unwrap_or_else(std::env::temp_dir);
    preflight(config, &parent)?;

    let payload = vec![0xA5u8; config.file_size];
    let mut record = MessageRecord::new(TOPIC, 0, payload);
    let target = config.bag_bytes() as usize;

    match config.backend {
        Backend::Memory => {
            let mut stores = Vec::with_capacity(config.file_count as usize);
            let started = Instant::now();
            for i in 0..config.file_count {
                record.timestamp = i;
                let mut w = BagWriter::open(MemoryStore::with_buffer(pool.take(target)), target)?;
                w.append(&record)?;
                w.seal()?;
                stores.push(w.into_store());
            }
            let write_s = started.elapsed().as_secs_f64();
            let started = Instant::now();
            for store in &stores {
                read_back(store)?;
            }
            let read_s = started.elapsed().as_secs_f64();
            for store in stores {
                pool.give(store.into_bytes());
            }
            Ok(CacheTimes { write_s, read_s })
        }
        Backend::Disk => {
            let dir = tempfile::Builder::new()
                .prefix("bagpipe-bench-")
                .tempdir_in(&parent)?;
            let paths: Vec<PathBuf> = (0..config.file_count)
                .map(|i| dir.path().join(format!("f-{i}.dbag")))
                .collect();
            let started = Instant::now();
            for (i, path) in paths.iter().enumerate() {
                record.timestamp = i as u64;
                let mut w = BagWriter::open(DiskStore::create(path)?, target)?;
                w.append(&record)?;
                w.seal()?;
            }
            let write_s = started.elapsed().as_secs_f64();
            let started = Instant::now();
            for path in &paths {
                read_back(&DiskStore::open(path)?)?;
            }
            let read_s = started.elapsed().as_secs_f64();
            Ok(CacheTimes { write_s, read_s })
        }
    }
}

fn read_back<S: ChunkedStore>(store: &S) -> Result<(), BenchError> {
    let mut reader = BagReader::open(store)?;
    while let Some(r) = reader.next_record()? {
        black_box(&r.payload);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub baseline: Backend,
    pub candidate: Backend,
    pub workloads: Vec<WorkloadSpec>,
    pub runs: u32,
    pub scratch: Option<PathBuf>,
}

impl CompareConfig {
    /// Disk baseline against the memory candidate, three runs each.
    pub fn disk_vs_memory(workloads: Vec<WorkloadSpec>) -> Self {
        Self {
            baseline: Backend::Disk,
            candidate: Backend::Memory,
            workloads,
            runs: 3,
            scratch: None,
        }
    }
}

/// Runs both backends on each workload, alternating run by run, and reports
/// the median-time ratio baseline/candidate per phase.
pub fn compare_backends(config: &CompareConfig) -> Result<BenchReport, BenchError> {
    if config.runs == 0 {
        return Err(BenchError::Empty("runs is 0"));
    }
    if config.workloads.is_empty() {
        return Err(BenchError::Empty("no workloads"));
    }
    let mut rows = Vec::new();
    for spec in &config.workloads {
        let mut pool = BufferPool::default();
        let mut times: [Vec<CacheTimes>; 2] = [Vec::new(), Vec::new()];
        for run in 0..config.runs {
            for (slot, backend) in [config.baseline, config.candidate].into_iter().enumerate() {
                let bench = CacheBenchConfig {
                    scratch: config.scratch.clone(),
                    ..CacheBenchConfig::new(*spec, backend)
                };
                let t = run_cache_bench_pooled(&bench, &mut pool)?;
                log::info!(
                    "{} {backend} run {}: write {:.4}s read {:.4}s",
                    spec.workload,
                    run + 1,
                    t.write_s,
                    t.read_s
                );
                times[slot].push(t);
            }
        }
        for phase in [Phase::Write, Phase::Read] {
            let pick = |ts: &[CacheTimes]| -> Vec<f64> {
                ts.iter()
                    .map(|t| match phase {
                        Phase::Write => t.write_s,
                        Phase::Read => t.read_s,
                    })
                    .collect()
            };
            let base = pick(&times[0]);
            let cand = pick(&times[1]);
            let (baseline_s, candidate_s) = (median(&base), median(&cand));
            let ratio = baseline_s / candidate_s;
            let cv = coefficient_of_variation(&base).max(coefficient_of_variation(&cand));
            let reference_ratio = (config.baseline == Backend::Disk
                && config.candidate == Backend::Memory)
                .then(|| spec.workload.reference_ratio(phase));
            rows.push(CacheRow {
                workload: spec.workload,
                phase,
                scale_factor: spec.scale_factor,
                files: spec.file_count,
                file_bytes: spec.file_size as u64,
                baseline: config.baseline,
                candidate: config.candidate,
                baseline_s,
                candidate_s,
                ratio,
                reference_ratio,
                cv,
                noisy: cv >= NOISY_CV,
                regression: ratio < 1.0,
            });
        }
    }
    Ok(BenchReport {
        machine: machine_descriptor(),
        timestamp: unix_now(),
        runs: config.runs,
        rows,
    })
}
