//! The driver: worker registry, job partitioning and task dispatch.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::wire::{MsgType, WireError, WireMessage, MAX_TASK_BODY};
use super::{
    partition_ranges, JobResult, OutputMode, PartitionOutcome, PartitionSpec, RuntimeError,
    TaskOutput, TaskSpec, WorkerInfo, MAX_ATTEMPTS,
};
use crate::bag::scan_summary;
use crate::pipe::frame::decode_stream;
use crate::pipe::UserLogicSpec;
use crate::store::{DiskStore, StoreError};

const WRITE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct DriverConfig {
    pub bind: String,
    /// Interval at which workers are expected to send heartbeats.
    pub heartbeat_interval: Duration,
    /// A worker is lost after this many intervals without a heartbeat.
    pub missed_heartbeats: u32,
    /// How long a job waits for a first worker before failing.
    pub no_worker_wait: Duration,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:0".into(),
            heartbeat_interval: Duration::from_secs(2),
            missed_heartbeats: 3,
            no_worker_wait: Duration::from_secs(10),
        }
    }
}

impl DriverConfig {
    pub fn new(bind: impl Into<String>) -> Self {
        Self {
            bind: bind.into(),
            ..Self::default()
        }
    }

    fn lost_after(&self) -> Duration {
        self.heartbeat_interval * self.missed_heartbeats.max(1)
    }
}

/// A job as submitted by a client.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSpec {
    pub bag_path: PathBuf,
    pub partitions: u32,
    pub user_logic: UserLogicSpec,
    pub output_mode: OutputMode,
}

impl JobSpec {
    pub fn new(
        bag_path: impl Into<PathBuf>,
        partitions: u32,
        user_logic: UserLogicSpec,
        output_mode: OutputMode,
    ) -> Self {
        Self {
            bag_path: bag_path.into(),
            partitions,
            user_logic,
            output_mode,
        }
    }

    fn to_message(&self) -> WireMessage {
        let mut msg = WireMessage::new(MsgType::Submit)
            .with_str("bag_path", &self.bag_path.to_string_lossy())
            .with_u32("partitions", self.partitions)
            .with_bytes("cmd", self.user_logic.argv_bytes())
            .with_str("output_mode", &self.output_mode.to_wire());
        if let Some(t) = self.user_logic.timeout {
            msg = msg.with_u64("timeout_ms", t.as_millis() as u64);
        }
        msg
    }

    fn from_message(msg: &WireMessage) -> Result<Self, WireError> {
        let bad = |name: &str, reason: &str| WireError::BadField {
            name: name.into(),
            reason: reason.into(),
        };
        let mut user_logic = UserLogicSpec::from_argv_bytes(msg.bytes("cmd")?)
            .map_err(|_| bad("cmd", "empty command"))?;
        if msg.field("timeout_ms").is_some() {
            user_logic.timeout = Some(Duration::from_millis(msg.u64("timeout_ms")?));
        }
        Ok(Self {
            bag_path: PathBuf::from(msg.str("bag_path")?),
            partitions: msg.u32("partitions")?,
            user_logic,
            output_mode: OutputMode::from_wire(msg.str("output_mode")?)
                .ok_or_else(|| bad("output_mode", "expected collect or store:<dir>"))?,
        })
    }
}

struct WorkerEntry {
    conn: u64,
    info: WorkerInfo,
    stream: TcpStream,
    in_flight: HashSet<(u64, u32)>,
    last_seen: Instant,
}

impl WorkerEntry {
    fn free_slots(&self) -> usize {
        (self.info.slots as usize).saturating_sub(self.in_flight.len())
    }
}

struct ActiveJob {
    job_id: u64,
    tasks: Vec<TaskSpec>,
    pending: VecDeque<u32>,
    /// Partition -> connection currently running it.
    assigned: HashMap<u32, u64>,
    attempts: Vec<u32>,
    /// Partition -> connection its last attempt failed on.
    avoid: HashMap<u32, u64>,
    done: Vec<Option<TaskOutput>>,
    remaining: usize,
    failure: Option<RuntimeError>,
}

impl ActiveJob {
    fn fail_attempt(&mut self, pid: u32, conn: u64, reason: String) {
        self.avoid.insert(pid, conn);
        if self.attempts[pid as usize] >= MAX_ATTEMPTS {
            log::error!(
                "job {}: partition {pid} failed for good: {reason}",
                self.job_id
            );
            self.pending.clear();
            self.failure = Some(RuntimeError::TaskFailed {
                job_id: self.job_id,
                partition_id: pid,
                reason,
            });
        } else {
            log::warn!(
                "job {}: partition {pid} will be retried: {reason}",
                self.job_id
            );
            self.pending.push_front(pid);
        }
    }
}

#[derive(Default)]
struct State {
    workers: Vec<WorkerEntry>,
    job: Option<ActiveJob>,
    shutting_down: bool,
    next_conn: u64,
    next_job: u64,
}

impl State {
    fn pick_worker(&self, avoid: Option<u64>) -> Option<usize> {
        let best = |skip: Option<u64>| {
            self.workers
                .iter()
                .enumerate()
                .filter(|(_, w)| w.free_slots() > 0 && Some(w.conn) != skip)
                // max_by_key keeps the last maximum; reverse so ties go to
                // the earliest registration.
                .rev()
                .max_by_key(|(_, w)| w.free_slots())
                .map(|(i, _)| i)
        };
        best(avoid).or_else(|| {
            // The avoided worker is the only one with room. Use it only when
            // nobody else could take the task later either.
            if self.workers.iter().all(|w| Some(w.conn) == avoid) {
                best(None)
            } else {
                None
            }
        })
    }

    fn dispatch(&mut self) {
        loop {
            let Some(job) = self.job.as_ref() else { return };
            if job.failure.is_some() {
                return;
            }
            let Some(&pid) = job.pending.front() else {
                return;
            };
            let Some(idx) = self.pick_worker(job.avoid.get(&pid).copied()) else {
                return;
            };
            let job = self.job.as_mut().expect("job present");
            job.pending.pop_front();
            job.attempts[pid as usize] += 1;
            let worker = &mut self.workers[idx];
            job.assigned.insert(pid, worker.conn);
            worker.in_flight.insert((job.job_id, pid));
            log::debug!(
                "job {}: partition {pid} -> {} (attempt {})",
                job.job_id,
                worker.info.worker_id,
                job.attempts[pid as usize]
            );
            let sent = job.tasks[pid as usize]
                .to_message()
                .write_to(&worker.stream);
            if let Err(e) = sent {
                let conn = worker.conn;
                self.worker_lost(conn, &format!("send failed: {e}"));
            }
        }
    }

    fn worker_lost(&mut self, conn: u64, reason: &str) {
        let Some(idx) = self.workers.iter().position(|w| w.conn == conn) else {
            return;
        };
        let entry = self.workers.remove(idx);
        log::warn!("worker {} lost: {reason}", entry.info.worker_id);
        let _ = entry.stream.shutdown(Shutdown::Both);
        let Some(job) = self.job.as_mut() else { return };
        let mut orphans: Vec<u32> = entry
            .in_flight
            .iter()
            .filter(|(job_id, pid)| *job_id == job.job_id && job.assigned.get(pid) == Some(&conn))
            .map(|&(_, pid)| pid)
            .collect();
        // Requeued at the front; reverse so they keep partition order.
        orphans.sort_unstable_by(|a, b| b.cmp(a));
        for pid in orphans {
            job.assigned.remove(&pid);
            if job.failure.is_none() {
                job.fail_attempt(pid, conn, format!("worker {} lost", entry.info.worker_id));
            }
        }
    }

    fn handle_result(&mut self, conn: u64, msg: &WireMessage) -> Result<(), WireError> {
        let job_id = msg.u64("job_id")?;
        let pid = msg.u32("partition_id")?;
        if let Some(w) = self.workers.iter_mut().find(|w| w.conn == conn) {
            w.in_flight.remove(&(job_id, pid));
        }
        let Some(job) = self.job.as_mut() else {
            return Ok(());
        };
        if job.job_id != job_id || job.assigned.get(&pid) != Some(&conn) || job.failure.is_some() {
            log::debug!("ignoring stale result for job {job_id} partition {pid}");
            return Ok(());
        }
        job.assigned.remove(&pid);
        let outcome = match msg.str("status")? {
            "ok" => parse_output(msg),
            _ => Err(msg
                .str("error")
                .unwrap_or("unspecified failure")
                .to_string()),
        };
        match outcome {
            Ok(output) => {
                job.done[pid as usize] = Some(output);
                job.remaining -= 1;
            }
            Err(reason) => job.fail_attempt(pid, conn, reason),
        }
        Ok(())
    }
}

fn parse_output(msg: &WireMessage) -> Result<TaskOutput, String> {
    if let Some(data) = msg.field("data") {
        decode_stream(data)
            .map(TaskOutput::Collected)
            .map_err(|e| format!("undecodable collected output: {e}"))
    } else if let Ok(path) = msg.str("path") {
        Ok(TaskOutput::Stored(PathBuf::from(path)))
    } else {
        Err("result carries neither data nor path".into())
    }
}

struct Shared {
    config: DriverConfig,
    addr: SocketAddr,
    state: Mutex<State>,
    changed: Condvar,
    job_lock: Mutex<()>,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn submit(&self, spec: &JobSpec) -> Result<JobResult, RuntimeError> {
        let _serial = self.job_lock.lock().unwrap_or_else(|e| e.into_inner());
        let started = Instant::now();
        if spec.partitions == 0 {
            return Err(RuntimeError::InvalidJob(
                "partition count must be at least 1".into(),
            ));
        }
        let record_count = scan_record_count(&spec.bag_path)?;
        let ranges = partition_ranges(record_count, spec.partitions);

        let mut state = self.lock();
        let wait = self.config.no_worker_wait;
        let deadline = Instant::now() + wait;
        while state.workers.is_empty() {
            if state.shutting_down {
                return Err(RuntimeError::ShuttingDown);
            }
            let now = Instant::now();
            if now >= deadline {
                return Err(RuntimeError::NoWorkers(wait));
            }
            state = self.wait(state, deadline - now);
        }

        let job_id = state.next_job;
        state.next_job += 1;
        let tasks: Vec<TaskSpec> = ranges
            .iter()
            .enumerate()
            .map(|(i, range)| TaskSpec {
                job_id,
                partition: PartitionSpec {
                    partition_id: i as u32,
                    bag_path: spec.bag_path.clone(),
                    range: range.clone(),
                },
                user_logic: spec.user_logic.clone(),
                output_mode: spec.output_mode.clone(),
            })
            .collect();
        let n = tasks.len();
        log::info!(
            "job {job_id}: {record_count} records of {} in {n} partitions",
            spec.bag_path.display()
        );
        state.job = Some(ActiveJob {
            job_id,
            tasks,
            pending: (0..n as u32).collect(),
            assigned: HashMap::new(),
            attempts: vec![0; n],
            avoid: HashMap::new(),
            done: vec![None; n],
            remaining: n,
            failure: None,
        });
        state.dispatch();

        let mut starved_since: Option<Instant> = None;
        loop {
            if state.shutting_down {
                state.job = None;
                return Err(RuntimeError::ShuttingDown);
            }
            let job = state.job.as_ref().expect("job present");
            if job.failure.is_some() {
                let job = state.job.take().expect("job present");
                return Err(job.failure.expect("failure present"));
            }
            if job.remaining == 0 {
                let job = state.job.take().expect("job present");
                let outcomes = job
                    .done
                    .into_iter()
                    .zip(ranges)
                    .enumerate()
                    .map(|(i, (output, range))| PartitionOutcome {
                        partition_id: i as u32,
                        range,
                        output: output.expect("every partition done"),
                    })
                    .collect();
                return Ok(JobResult {
                    job_id,
                    outcomes,
                    wall_time: started.elapsed(),
                });
            }
            if state.workers.is_empty() {
                let since = *starved_since.get_or_insert_with(Instant::now);
                if since.elapsed() >= wait {
                    state.job = None;
                    return Err(RuntimeError::NoWorkers(wait));
                }
            } else {
                starved_since = None;
            }
            state = self.wait(state, Duration::from_millis(200));
        }
    }

    fn wait<'a>(&self, guard: MutexGuard<'a, State>, timeout: Duration) -> MutexGuard<'a, State> {
        match self.changed.wait_timeout(guard, timeout) {
            Ok((g, _)) => g,
            Err(e) => e.into_inner().0,
        }
    }
}

fn scan_record_count(path: &Path) -> Result<u64, RuntimeError> {
    let store = DiskStore::open(path).map_err(|e| match e {
        StoreError::Io(io) if io.kind() == io::ErrorKind::NotFound => {
            RuntimeError::SourceNotFound(path.to_path_buf())
        }
        other => RuntimeError::Bag(other.into()),
    })?;
    Ok(scan_summary(&store)?.record_count)
}

/// A running driver. Dropping it shuts it down.
pub struct Driver {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl Driver {
    pub fn start(config: DriverConfig) -> Result<Self, RuntimeError> {
        let listener = TcpListener::bind(&config.bind).map_err(|source| RuntimeError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
        let addr = listener.local_addr()?;
        log::info!("driver listening on {addr}");
        let shared = Arc::new(Shared {
            config,
            addr,
            state: Mutex::new(State::default()),
            changed: Condvar::new(),
            job_lock: Mutex::new(()),
        });
        let accept = {
            let shared = Arc::clone(&shared);
            thread::Builder::new()
                .name("driver-accept".into())
                .spawn(move || accept_loop(shared, listener))?
        };
        let monitor = {
            let shared = Arc::clone(&shared);
            thread::Builder::new()
                .name("driver-heartbeat".into())
                .spawn(move || monitor_loop(shared))?
        };
        Ok(Self {
            shared,
            threads: vec![accept, monitor],
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.shared.addr
    }

    pub fn workers(&self) -> Vec<WorkerInfo> {
        self.shared
            .lock()
            .workers
            .iter()
            .map(|w| w.info.clone())
            .collect()
    }

    /// Blocks until at least `count` workers are registered.
    pub fn wait_for_workers(&self, count: usize, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut state = self.shared.lock();
        loop {
            if state.workers.len() >= count {
                return true;
            }
            let now = Instant::now();
            if now >= deadline || state.shutting_down {
                return false;
            }
            state = self.shared.wait(state, deadline - now);
        }
    }

    /// Runs a job to completion. Jobs are executed one at a time.
    pub fn submit_job(&self, spec: &JobSpec) -> Result<JobResult, RuntimeError> {
        self.shared.submit(spec)
    }

    /// Sends SHUTDOWN to every worker and stops accepting connections.
    pub fn shutdown(&mut self) {
        {
            let mut state = self.shared.lock();
            if !state.shutting_down {
                state.shutting_down = true;
                for w in state.workers.drain(..) {
                    let _ = WireMessage::new(MsgType::Shutdown).write_to(&w.stream);
                    let _ = w.stream.shutdown(Shutdown::Write);
                }
            }
        }
        self.shared.changed.notify_all();
        // Unblock the accept loop.
        let _ = TcpStream::connect_timeout(&self.shared.addr, Duration::from_secs(1));
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Driver {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(shared: Arc<Shared>, listener: TcpListener) {
    for stream in listener.incoming() {
        if shared.lock().shutting_down {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let shared = Arc::clone(&shared);
        let spawned = thread::Builder::new()
            .name("driver-conn".into())
            .spawn(move || handle_connection(shared, stream));
        if let Err(e) = spawned {
            log::error!("cannot spawn connection thread: {e}");
        }
    }
}

fn monitor_loop(shared: Arc<Shared>) {
    let tick = (shared.config.heartbeat_interval / 2).max(Duration::from_millis(10));
    let lost_after = shared.config.lost_after();
    let mut state = shared.lock();
    loop {
        state = shared.wait(state, tick);
        if state.shutting_down {
            return;
        }
        let stale: Vec<u64> = state
            .workers
            .iter()
            .filter(|w| w.last_seen.elapsed() > lost_after)
            .map(|w| w.conn)
            .collect();
        if stale.is_empty() {
            continue;
        }
        for conn in stale {
            state.worker_lost(conn, "missed heartbeats");
        }
        state.dispatch();
        shared.changed.notify_all();
    }
}

fn handle_connection(shared: Arc<Shared>, stream: TcpStream) {
    let peer = stream
        .peer_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "?".into());
    let _ = stream.set_nodelay(true);
    let _ = stream.set_write_timeout(Some(WRITE_TIMEOUT));
    let mut reader = BufReader::new(&stream);
    let first = match WireMessage::read_from(&mut reader, MAX_TASK_BODY) {
        Ok(m) => m,
        Err(WireError::Closed) => return,
        Err(e) => {
            log::warn!("dropping connection from {peer}: {e}");
            return;
        }
    };
    match first.msg_type {
        MsgType::Register => serve_worker(&shared, &stream, reader, first, peer),
        MsgType::Submit => serve_client(&shared, &stream, reader, first),
        other => log::warn!("dropping connection from {peer}: unexpected {other:?}"),
    }
}

fn serve_worker(
    shared: &Shared,
    stream: &TcpStream,
    mut reader: BufReader<&TcpStream>,
    register: WireMessage,
    peer: String,
) {
    let reject = |reason: &str| {
        log::warn!("rejecting registration from {peer}: {reason}");
        let _ = WireMessage::new(MsgType::RegisterAck)
            .with_str("status", "rejected")
            .with_str("reason", reason)
            .write_to(stream);
    };
    let (worker_id, slots) = match (register.str("worker_id"), register.u32("slots")) {
        (Ok(id), Ok(slots)) if !id.is_empty() && slots >= 1 => (id.to_string(), slots),
        _ => return reject("registration needs a worker_id and slots >= 1"),
    };
    let write_half = match stream.try_clone() {
        Ok(s) => s,
        Err(e) => return reject(&format!("cannot clone socket: {e}")),
    };

    let conn = {
        let mut state = shared.lock();
        if state.shutting_down {
            drop(state);
            return reject("driver is shutting down");
        }
        if state.workers.iter().any(|w| w.info.worker_id == worker_id) {
            drop(state);
            return reject(&format!("worker id {worker_id:?} is already registered"));
        }
        let ack = WireMessage::new(MsgType::RegisterAck).with_str("status", "ok");
        if let Err(e) = ack.write_to(stream) {
            log::warn!("cannot acknowledge {worker_id}: {e}");
            return;
        }
        let conn = state.next_conn;
        state.next_conn += 1;
        log::info!("worker {worker_id} registered from {peer} with {slots} slots");
        state.workers.push(WorkerEntry {
            conn,
            info: WorkerInfo {
                worker_id: worker_id.clone(),
                address: peer,
                slots,
            },
            stream: write_half,
            in_flight: HashSet::new(),
            last_seen: Instant::now(),
        });
        state.dispatch();
        conn
    };
    shared.changed.notify_all();

    let reason = loop {
        let msg = match WireMessage::read_from(&mut reader, MAX_TASK_BODY) {
            Ok(m) => m,
            Err(WireError::Closed) => break "connection closed".to_string(),
            Err(e) => break e.to_string(),
        };
        let mut state = shared.lock();
        if let Some(w) = state.workers.iter_mut().find(|w| w.conn == conn) {
            w.last_seen = Instant::now();
        } else {
            // Declared lost while this message was in flight.
            return;
        }
        match msg.msg_type {
            MsgType::Heartbeat => continue,
            MsgType::Result => {
                if let Err(e) = state.handle_result(conn, &msg) {
                    break format!("bad result: {e}");
                }
                state.dispatch();
            }
            other => break format!("unexpected {other:?} from worker"),
        }
        drop(state);
        shared.changed.notify_all();
    };
    let mut state = shared.lock();
    if !state.shutting_down {
        state.worker_lost(conn, &reason);
        state.dispatch();
    }
    drop(state);
    shared.changed.notify_all();
}

fn serve_client(
    shared: &Shared,
    stream: &TcpStream,
    mut reader: BufReader<&TcpStream>,
    first: WireMessage,
) {
    let mut next = Some(first);
    while let Some(msg) = next.take() {
        if msg.msg_type != MsgType::Submit {
            log::warn!("unexpected {:?} from client", msg.msg_type);
            return;
        }
        let outcome = JobSpec::from_message(&msg)
            .map_err(RuntimeError::from)
            .and_then(|spec| shared.submit(&spec));
        let reply = match &outcome {
            Ok(result) => encode_job_result(result),
            Err(e) => WireMessage::new(MsgType::JobResult)
                .with_str("status", "fail")
                .with_str("error", &e.to_string()),
        };
        if let Err(e) = reply.write_to(BufWriter::new(stream)) {
            log::warn!("cannot deliver job result: {e}");
            return;
        }
        next = WireMessage::read_from(&mut reader, MAX_TASK_BODY).ok();
    }
}

const OUTPUT_COLLECTED: u8 = 0;
const OUTPUT_STORED: u8 = 1;

fn encode_job_result(result: &JobResult) -> WireMessage {
    let mut msg = WireMessage::new(MsgType::JobResult)
        .with_str("status", "ok")
        .with_u64("job_id", result.job_id)
        .with_u64("wall_us", result.wall_time.as_micros() as u64);
    for o in &result.outcomes {
        // partition_id u32 | range_start u64 | range_end u64 | kind u8 | body
        let mut b = Vec::new();
        b.extend_from_slice(&o.partition_id.to_le_bytes());
        b.extend_from_slice(&o.range.start.to_le_bytes());
        b.extend_from_slice(&o.range.end.to_le_bytes());
        match &o.output {
            TaskOutput::Collected(frames) => {
                b.push(OUTPUT_COLLECTED);
                b.extend_from_slice(
                    &crate::pipe::frame::encode_to_vec(frames).expect("frames were decoded"),
                );
            }
            TaskOutput::Stored(path) => {
                b.push(OUTPUT_STORED);
                b.extend_from_slice(path.to_string_lossy().as_bytes());
            }
        }
        msg = msg.with_bytes("outcome", b);
    }
    msg
}

fn decode_job_result(msg: &WireMessage) -> Result<JobResult, RuntimeError> {
    if msg.str("status")? != "ok" {
        return Err(RuntimeError::Remote(
            msg.str("error")
                .unwrap_or("unspecified failure")
                .to_string(),
        ));
    }
    let bad = |reason: &str| {
        RuntimeError::Wire(WireError::BadField {
            name: "outcome".into(),
            reason: reason.into(),
        })
    };
    let mut outcomes = Vec::new();
    for f in msg.fields.iter().filter(|f| f.name == "outcome") {
        let b = &f.payload;
        if b.len() < 21 {
            return Err(bad("too short"));
        }
        let pid = u32::from_le_bytes(b[0..4].try_into().unwrap());
        let start = u64::from_le_bytes(b[4..12].try_into().unwrap());
        let end = u64::from_le_bytes(b[12..20].try_into().unwrap());
        let output = match b[20] {
            OUTPUT_COLLECTED => {
                TaskOutput::Collected(decode_stream(&b[21..]).map_err(WireError::from)?)
            }
            OUTPUT_STORED => TaskOutput::Stored(PathBuf::from(
                std::str::from_utf8(&b[21..]).map_err(|_| bad("path is not UTF-8"))?,
            )),
            _ => return Err(bad("unknown output kind")),
        };
        outcomes.push(PartitionOutcome {
            partition_id: pid,
            range: start..end,
            output,
        });
    }
    Ok(JobResult {
        job_id: msg.u64("job_id")?,
        outcomes,
        wall_time: Duration::from_micros(msg.u64("wall_us")?),
    })
}

/// Submits a job to a driver over the network and waits for its result.
pub fn submit_remote(addr: &str, spec: &JobSpec) -> Result<JobResult, RuntimeError> {
    let connect_err = |source| RuntimeError::Connect {
        addr: addr.to_string(),
        source,
    };
    let target = addr
        .to_socket_addrs()
        .map_err(connect_err)?
        .next()
        .ok_or_else(|| connect_err(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
    let stream = TcpStream::connect(target).map_err(connect_err)?;
    let _ = stream.set_nodelay(true);
    let mut sink = BufWriter::new(&stream);
    spec.to_message().write_to(&mut sink)?;
    sink.flush()?;
    drop(sink);
    let reply =
        WireMessage::read_from(BufReader::new(&stream), u32::MAX)?.expect(MsgType::JobResult)?;
    decode_job_result(&reply)
}
