//! Runs an external user-logic program over a BPR1 stream.
//!
//! The input stream is fed on the child's standard input from one thread
//! while another decodes its standard output, so neither pipe can fill up
//! and stall the other side regardless of stream size. Standard error is
//! captured separately and forwarded to the log.

use std::io::{self, BufReader, BufWriter, Read};
use std::os::unix::process::CommandExt;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::frame::{decode_stream, encode_stream, Frame, FrameError};

const PIPE_BUFFER: usize = 256 * 1024;

/// Environment variable carrying the task identity into the child.
pub const TASK_ID_ENV: &str = "BAGPIPE_TASK_ID";

#[derive(Debug, Error)]
pub enum PipeError {
    #[error("user logic command is empty")]
    EmptyCommand,
    #[error("failed to spawn {program}: {source}")]
    Spawn { program: String, source: io::Error },
    #[error("user logic exited with {status}")]
    NonZeroExit {
        status: ExitStatus,
        /// Whatever decoded cleanly from the child's output, if anything.
        frames: Option<Vec<Frame>>,
        stderr: String,
    },
    #[error("user logic produced a malformed stream: {source}")]
    Malformed { source: FrameError, stderr: String },
    #[error("user logic timed out after {0:?}")]
    TimedOut(Duration),
    #[error("i/o error talking to user logic: {0}")]
    Io(#[from] io::Error),
}

impl PipeError {
    /// Exit code of a child that ran to completion with a failure status.
    pub fn exit_code(&self) -> Option<i32> {
        match self {
            PipeError::NonZeroExit { status, .. } => status.code(),
            _ => None,
        }
    }
}

/// Program, arguments, extra environment and optional timeout for a child.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct UserLogicSpec {
    pub program: String,
    pub args: Vec<String>,
    pub env: Vec<(String, String)>,
    pub timeout: Option<Duration>,
}

impl UserLogicSpec {
    pub fn new(program: impl Into<String>) -> Self {
        Self {
            program: program.into(),
            ..Self::default()
        }
    }

    /// Builds a spec from a full argv; the first element is the program.
    pub fn from_argv<I, S>(argv: I) -> Result<Self, PipeError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut it = argv.into_iter().map(Into::into);
        let program = it
            .next()
            .filter(|p| !p.is_empty())
            .ok_or(PipeError::EmptyCommand)?;
        Ok(Self {
            program,
            args: it.collect(),
            ..Self::default()
        })
    }

    pub fn arg(mut self, arg: impl Into<String>) -> Self {
        self.args.push(arg.into());
        self
    }

    pub fn env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.push((key.into(), value.into()));
        self
    }

    pub fn timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn argv(&self) -> Vec<String> {
        std::iter::once(self.program.clone())
            .chain(self.args.iter().cloned())
            .collect()
    }

    /// NUL-separated argv, as carried in task messages.
    pub fn argv_bytes(&self) -> Vec<u8> {
        self.argv().join("\0").into_bytes()
    }

    pub fn from_argv_bytes(bytes: &[u8]) -> Result<Self, PipeError> {
        let text = std::str::from_utf8(bytes).map_err(|_| PipeError::EmptyCommand)?;
        Self::from_argv(text.split('\0'))
    }
}

/// Frames produced by a child that exited successfully.
#[derive(Debug, Clone)]
pub struct UserLogicOutput {
    pub frames: Vec<Frame>,
    pub status: ExitStatus,
    pub stderr: Vec<u8>,
}

fn kill_group(child: &mut Child) {
    // The child leads its own process group; take any grandchildren along.
    let pid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
}

fn wait_with_deadline(
    child: &mut Child,
    timeout: Option<Duration>,
) -> io::Result<Option<ExitStatus>> {
    let Some(timeout) = timeout else {
        return child.wait().map(Some);
    };
    let deadline = Instant::now() + timeout;
    let mut nap = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok(Some(status));
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(child);
            child.wait()?;
            return Ok(None);
        }
        thread::sleep(nap.min(deadline - now));
        nap = (nap * 2).min(Duration::from_millis(10));
    }
}

/// Streams `input` through the child described by `spec` and decodes what it
/// writes back.
pub fn run_user_logic(spec: &UserLogicSpec, input: &[Frame]) -> Result<UserLogicOutput, PipeError> {
    if spec.program.is_empty() {
        return Err(PipeError::EmptyCommand);
    }
    let mut command = Command::new(&spec.program);
    command
        .args(&spec.args)
        .envs(spec.env.iter().map(|(k, v)| (k, v)))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let mut child = command.spawn().map_err(|source| PipeError::Spawn {
        program: spec.program.clone(),
        source,
    })?;
    let stdin = child.stdin.take().expect("stdin piped");
    let stdout = child.stdout.take().expect("stdout piped");
    let mut stderr = child.stderr.take().expect("stderr piped");

    let (status, fed, decoded, err_bytes) = thread::scope(|s| {
        let feeder = s.spawn(move || {
            let sink = BufWriter::with_capacity(PIPE_BUFFER, stdin);
            match encode_stream(input, sink) {
                Ok(_) => Ok(()),
                // The child is free to stop reading early.
                Err(FrameError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
                Err(e) => Err(e),
            }
        });
        let collector = s.spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr.read_to_end(&mut buf);
            buf
        });
        let decoder = s.spawn(move || {
            let mut source = BufReader::with_capacity(PIPE_BUFFER, stdout);
            let decoded = decode_stream(&mut source);
            // Keep draining so a misbehaving child never blocks on a full pipe.
            let _ = io::copy(&mut source, &mut io::sink());
            decoded
        });
        let status = wait_with_deadline(&mut child, spec.timeout);
        let fed = feeder.join().expect("feeder thread panicked");
        let decoded = decoder.join().expect("decoder thread panicked");
        let err_bytes = collector.join().expect("stderr thread panicked");
        (status, fed, decoded, err_bytes)
    });

    let stderr_text = String::from_utf8_lossy(&err_bytes).into_owned();
    for line in stderr_text.lines() {
        log::info!(target: "bagpipe::user_logic", "[{}] {line}", spec.program);
    }

    let status = match status? {
        Some(status) => status,
        None => return Err(PipeError::TimedOut(spec.timeout.unwrap_or_default())),
    };
    if !status.success() {
        return Err(PipeError::NonZeroExit {
            status,
            frames: decoded.ok(),
            stderr: stderr_text,
        });
    }
    let frames = decoded.map_err(|source| PipeError::Malformed {
        source,
        stderr: stderr_text.clone(),
    })?;
    match fed {
        Ok(()) => {}
        Err(FrameError::Io(e)) => return Err(PipeError::Io(e)),
        Err(other) => {
            return Err(PipeError::Io(io::Error::new(
                io::ErrorKind::InvalidInput,
                other.to_string(),
            )))
        }
    }
    Ok(UserLogicOutput {
        frames,
        status,
        stderr: err_bytes,
    })
}
