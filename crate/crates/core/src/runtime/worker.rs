//! The worker: registers with a driver and runs tasks in a fixed number of
//! slots.

use std::io::{self, BufReader};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use crossbeam_channel::{Receiver, Sender};

use super::task::execute_task;
use super::wire::{MsgType, WireError, WireMessage, MAX_TASK_BODY};
use super::{RuntimeError, TaskOutput, TaskSpec};
use crate::pipe::frame::encode_to_vec;

const ACK_TIMEOUT: Duration = Duration::from_secs(10);
const WRITE_TIMEOUT: Duration = Duration::from_secs(30);
const MAX_BACKOFF: Duration = Duration::from_secs(5);

/// Environment variable with the default slot count for `bagpipe worker`.
pub const WORKER_SLOTS_ENV: &str = "BAGPIPE_WORKER_SLOTS";

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    pub driver_addr: String,
    pub worker_id: String,
    pub slots: u32,
    pub heartbeat_interval: Duration,
    /// First reconnect delay; doubles up to 5 s.
    pub backoff: Duration,
}

impl WorkerConfig {
    pub fn new(driver_addr: impl Into<String>, worker_id: impl Into<String>, slots: u32) -> Self {
        Self {
            driver_addr: driver_addr.into(),
            worker_id: worker_id.into(),
            slots,
            heartbeat_interval: Duration::from_secs(2),
            backoff: Duration::from_millis(100),
        }
    }
}

struct Shared {
    config: WorkerConfig,
    stop: AtomicBool,
    killed: AtomicBool,
    conn: Mutex<Option<TcpStream>>,
    completed: AtomicU64,
}

impl Shared {
    fn conn(&self) -> MutexGuard<'_, Option<TcpStream>> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn send(&self, msg: &WireMessage) {
        let mut conn = self.conn();
        if let Some(stream) = conn.as_ref() {
            if let Err(e) = msg.write_to(stream) {
                log::warn!("{}: send failed: {e}", self.config.worker_id);
                let _ = stream.shutdown(Shutdown::Both);
                *conn = None;
            }
        }
    }

    fn stopping(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Sleeps up to `d`, waking early on stop.
    fn nap(&self, d: Duration) {
        let step = Duration::from_millis(20);
        let mut left = d;
        while !left.is_zero() && !self.stopping() {
            let s = left.min(step);
            thread::sleep(s);
            left -= s;
        }
    }
}

fn register(config: &WorkerConfig) -> Result<TcpStream, RuntimeError> {
    let connect_err = |source| RuntimeError::Connect {
        addr: config.driver_addr.clone(),
        source,
    };
    let addr = config
        .driver_addr
        .to_socket_addrs()
        .map_err(connect_err)?
        .next()
        .ok_or_else(|| connect_err(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
    let stream = TcpStream::connect(addr).map_err(connect_err)?;
    stream.set_nodelay(true)?;
    stream.set_write_timeout(Some(WRITE_TIMEOUT))?;
    WireMessage::new(MsgType::Register)
        .with_str("worker_id", &config.worker_id)
        .with_u32("slots", config.slots)
        .write_to(&stream)?;
    stream.set_read_timeout(Some(ACK_TIMEOUT))?;
    let ack = WireMessage::read_from(&stream, MAX_TASK_BODY)?.expect(MsgType::RegisterAck)?;
    stream.set_read_timeout(None)?;
    match ack.str("status")? {
        "ok" => Ok(stream),
        _ => Err(RuntimeError::Refused(
            ack.str("reason").unwrap_or("no reason given").to_string(),
        )),
    }
}

/// Registers with the driver and starts serving tasks.
pub fn start_worker(config: WorkerConfig) -> Result<WorkerHandle, RuntimeError> {
    if config.slots == 0 {
        return Err(RuntimeError::InvalidJob(
            "worker needs at least one slot".into(),
        ));
    }
    if config.worker_id.is_empty() {
        return Err(RuntimeError::InvalidJob(
            "worker id must not be empty".into(),
        ));
    }
    let stream = register(&config)?;
    log::info!(
        "worker {} registered with {} ({} slots)",
        config.worker_id,
        config.driver_addr,
        config.slots
    );
    let shared = Arc::new(Shared {
        stop: AtomicBool::new(false),
        killed: AtomicBool::new(false),
        conn: Mutex::new(Some(stream.try_clone()?)),
        completed: AtomicU64::new(0),
        config,
    });
    let (tx, rx) = crossbeam_channel::unbounded();
    let mut threads = Vec::new();
    {
        let shared = Arc::clone(&shared);
        threads.push(
            thread::Builder::new()
                .name("worker-session".into())
                .spawn(move || session_loop(shared, stream, tx))?,
        );
    }
    for i in 0..shared.config.slots {
        let shared = Arc::clone(&shared);
        let rx = rx.clone();
        threads.push(
            thread::Builder::new()
                .name(format!("worker-slot-{i}"))
                .spawn(move || slot_loop(shared, rx))?,
        );
    }
    {
        let shared = Arc::clone(&shared);
        threads.push(
            thread::Builder::new()
                .name("worker-heartbeat".into())
                .spawn(move || heartbeat_loop(shared))?,
        );
    }
    Ok(WorkerHandle { shared, threads })
}

fn session_loop(shared: Arc<Shared>, mut stream: TcpStream, tx: Sender<TaskSpec>) {
    let id = shared.config.worker_id.clone();
    loop {
        let reason = read_tasks(&shared, &stream, &tx);
        if shared.stopping() {
            break;
        }
        log::warn!("{id}: connection to driver lost: {reason}");
        if let Some(s) = shared.conn().take() {
            let _ = s.shutdown(Shutdown::Both);
        }
        let mut delay = shared.config.backoff;
        stream = loop {
            shared.nap(delay);
            if shared.stopping() {
                return;
            }
            match register(&shared.config) {
                Ok(s) => break s,
                Err(e) => {
                    log::warn!("{id}: re-registration failed: {e}");
                    delay = (delay * 2).min(MAX_BACKOFF);
                }
            }
        };
        match stream.try_clone() {
            Ok(w) => *shared.conn() = Some(w),
            Err(e) => log::warn!("{id}: {e}"),
        }
        log::info!("{id}: re-registered");
    }
    if let Some(s) = shared.conn().take() {
        let _ = s.shutdown(Shutdown::Both);
    }
}

fn read_tasks(shared: &Shared, stream: &TcpStream, tx: &Sender<TaskSpec>) -> String {
    let mut reader = BufReader::new(stream);
    loop {
        let msg = match WireMessage::read_from(&mut reader, MAX_TASK_BODY) {
            Ok(m) => m,
            Err(WireError::Closed) => return "closed by driver".into(),
            Err(e) => return e.to_string(),
        };
        match msg.msg_type {
            MsgType::Task => match TaskSpec::from_message(&msg) {
                Ok(task) => {
                    let _ = tx.send(task);
                }
                Err(e) => {
                    log::warn!("{}: undecodable task: {e}", shared.config.worker_id);
                    if let (Ok(job_id), Ok(pid)) = (msg.u64("job_id"), msg.u32("partition_id")) {
                        shared.send(&failure(job_id, pid, &format!("bad task: {e}")));
                    }
                }
            },
            MsgType::Shutdown => {
                log::info!("{}: driver requested shutdown", shared.config.worker_id);
                shared.stop.store(true, Ordering::SeqCst);
                return "shutdown".into();
            }
            other => log::debug!("ignoring {other:?} from driver"),
        }
    }
}

fn failure(job_id: u64, pid: u32, reason: &str) -> WireMessage {
    WireMessage::new(MsgType::Result)
        .with_u64("job_id", job_id)
        .with_u32("partition_id", pid)
        .with_str("status", "fail")
        .with_str("error", reason)
}

fn slot_loop(shared: Arc<Shared>, rx: Receiver<TaskSpec>) {
    for task in rx.iter() {
        if shared.stopping() {
            continue;
        }
        let job_id = task.job_id;
        let pid = task.partition.partition_id;
        let reply = match execute_task(&task) {
            Ok(output) => {
                let msg = WireMessage::new(MsgType::Result)
                    .with_u64("job_id", job_id)
                    .with_u32("partition_id", pid)
                    .with_str("status", "ok");
                match output {
                    TaskOutput::Collected(frames) => match encode_to_vec(&frames) {
                        Ok(data) => msg.with_bytes("data", data),
                        Err(e) => failure(job_id, pid, &e.to_string()),
                    },
                    TaskOutput::Stored(path) => msg.with_str("path", &path.to_string_lossy()),
                }
            }
            Err(reason) => {
                log::warn!("job {job_id} partition {pid} failed: {reason}");
                failure(job_id, pid, &reason)
            }
        };
        shared.completed.fetch_add(1, Ordering::SeqCst);
        if !shared.killed.load(Ordering::SeqCst) {
            shared.send(&reply);
        }
    }
}

fn heartbeat_loop(shared: Arc<Shared>) {
    let beat = WireMessage::new(MsgType::Heartbeat);
    loop {
        shared.nap(shared.config.heartbeat_interval);
        if shared.stopping() {
            return;
        }
        shared.send(&beat);
    }
}

/// A running worker.
pub struct WorkerHandle {
    shared: Arc<Shared>,
    threads: Vec<JoinHandle<()>>,
}

impl WorkerHandle {
    pub fn worker_id(&self) -> &str {
        &self.shared.config.worker_id
    }

    /// Tasks finished by this worker, successful or not.
    pub fn tasks_completed(&self) -> u64 {
        self.shared.completed.load(Ordering::SeqCst)
    }

    pub fn is_stopped(&self) -> bool {
        self.shared.stopping()
    }

    /// Waits until the worker stops, e.g. after a SHUTDOWN from the driver.
    pub fn join(mut self) {
        self.join_threads();
    }

    /// Disconnects and waits for running tasks to finish.
    pub fn shutdown(mut self) {
        self.stop();
        self.join_threads();
    }

    /// Simulates a crash: drops the connection at once and discards the
    /// results of tasks still running.
    pub fn kill(mut self) {
        self.shared.killed.store(true, Ordering::SeqCst);
        self.stop();
        self.join_threads();
    }

    fn stop(&self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(s) = self.shared.conn().take() {
            let _ = s.shutdown(Shutdown::Both);
        }
    }

    fn join_threads(&mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for WorkerHandle {
    fn drop(&mut self) {
        if !self.threads.is_empty() {
            self.stop();
            self.join_threads();
        }
    }
}
