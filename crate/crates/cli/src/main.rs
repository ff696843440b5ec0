use std::fs::File;
use std::io::{self, BufReader, BufWriter, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use bagpipe::bag::{scan_summary, BagReader, BagWriter, DEFAULT_CHUNK_TARGET_BYTES};
use bagpipe::bench::{
    compare_backends, estimate_cluster_hours, run_scale_bench, CompareConfig, ScaleBenchConfig,
    Workload,
};
use bagpipe::pipe::{encode_stream, Frame, UserLogicSpec};
use bagpipe::playback::{
    play_filtered, Bus, PlayClock, Recorder, Selector, StopCondition, StopSignal,
};
use bagpipe::runtime::{
    start_worker, submit_remote, Driver, DriverConfig, JobResult, JobSpec, OutputMode, TaskOutput,
    WorkerConfig, DRIVER_ENV,
};
use bagpipe::scenario::{
    accept_all, barrier_defaults, default_filter, generate_suite, SynthParams,
};
use bagpipe::store::{load_from_input_stream, DiskStore, MemoryStore};

mod helper;

#[derive(Parser)]
#[command(
    name = "bagpipe",
    version,
    about = "Distributed playback simulation over sensor-log bags"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect, play and record bags.
    #[command(subcommand)]
    Bag(BagCommand),
    /// Run a driver until interrupted.
    Driver(DriverArgs),
    /// Run a worker until the driver shuts it down.
    Worker(WorkerArgs),
    /// Run a job over a bag and print or store its output.
    Run(RunArgs),
    /// Generate simulation scenarios.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Desk-scale benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    #[command(subcommand, hide = true)]
    Helper(helper::HelperCommand),
}

#[derive(Subcommand)]
enum BagCommand {
    /// Print a bag summary. `-` reads the bag from standard input.
    Info { file: PathBuf },
    /// Replay a bag onto the in-process bus.
    Play {
        file: PathBuf,
        /// Playback rate; 0 plays as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Comma-separated topics to publish (default: all).
        #[arg(long, value_delimiter = ',')]
        topics: Vec<String>,
        /// Print one line per published message: timestamp, topic, payload size.
        #[arg(long)]
        echo: bool,
    },
    /// Record topics from a replayed source bag into a new bag.
    Record {
        file: PathBuf,
        /// Source bag; `-` is standard input.
        #[arg(long, default_value = "-")]
        input: PathBuf,
        /// Comma-separated topics to record.
        #[arg(long, value_delimiter = ',', conflicts_with = "all")]
        topics: Vec<String>,
        #[arg(long)]
        all: bool,
        /// Stop after this many messages.
        #[arg(long)]
        count: Option<u64>,
        /// Stop after this long without a message.
        #[arg(long)]
        idle_ms: Option<u64>,
        /// Replay rate of the source.
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
    },
}

#[derive(Args)]
struct DriverArgs {
    #[arg(long, default_value = "0.0.0.0:7077")]
    bind: String,
    #[arg(long, default_value_t = 2000)]
    heartbeat_ms: u64,
    #[arg(long, default_value_t = 3)]
    missed_heartbeats: u32,
    /// How long a job waits for a first worker.
    #[arg(long, default_value_t = 10_000)]
    no_worker_wait_ms: u64,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long, env = DRIVER_ENV)]
    driver: String,
    #[arg(long, env = "BAGPIPE_WORKER_SLOTS", default_value_t = 1)]
    slots: u32,
    /// Defaults to `<host>-<pid>`.
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value_t = 2000)]
    heartbeat_ms: u64,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("output").required(true).args(["collect", "store"]))]
struct RunArgs {
    #[arg(long)]
    bag: PathBuf,
    #[arg(long, default_value_t = 1)]
    partitions: u32,
    /// User-logic command line, split with shell quoting rules.
    #[arg(long)]
    cmd: String,
    /// Return output frames to this process.
    #[arg(long)]
    collect: bool,
    /// Write part files into this shared directory.
    #[arg(long, value_name = "DIR")]
    store: Option<PathBuf>,
    #[arg(long, env = DRIVER_ENV, required_unless_present = "local_workers")]
    driver: Option<String>,
    /// Run on an in-process driver with this many workers instead.
    #[arg(long, conflicts_with = "driver")]
    local_workers: Option<u32>,
    /// Slots per in-process worker.
    #[arg(long, env = "BAGPIPE_WORKER_SLOTS", default_value_t = 1)]
    slots: u32,
    /// Kill user logic that runs longer than this.
    #[arg(long)]
    timeout_ms: Option<u64>,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Write one bag per scenario plus a manifest.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// Keep cases the default filter drops.
        #[arg(long)]
        all: bool,
        #[arg(long, default_value_t = 10.0)]
        duration_s: f64,
        #[arg(long, default_value_t = 100)]
        step_ms: u64,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Memory vs disk bag I/O.
    Cache {
        /// small, large, or both.
        #[arg(long, default_value = "both")]
        workload: String,
        /// Divide the reference file counts by this.
        #[arg(long)]
        scale_factor: Option<u64>,
        #[arg(long, default_value_t = 3)]
        runs: u32,
        /// Directory for the disk backend's scratch files.
        #[arg(long)]
        scratch: Option<PathBuf>,
    },
    /// Job wall time against worker count.
    Scale {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        workers: Vec<u32>,
        #[arg(long, default_value_t = 400)]
        tasks: u32,
        #[arg(long, default_value_t = 25)]
        task_ms: u64,
    },
    /// Hours on a cluster, given hours on one machine.
    Estimate {
        #[arg(long)]
        hours: f64,
        #[arg(long)]
        workers: u64,
        #[arg(long)]
        efficiency: f64,
    },
}

/// Helpers run once per task, so they skip building the full command tree.
#[derive(Parser)]
#[command(name = "bagpipe helper")]
struct HelperCli {
    #[command(subcommand)]
    command: helper::HelperCommand,
}

fn main() -> ExitCode {
    if std::env::args_os().nth(1).is_some_and(|a| a == "helper") {
        let cli = HelperCli::parse_from(std::env::args_os().skip(1));
        return match helper::run(cli.command) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("bagpipe helper: {e:#}");
                ExitCode::from(1)
            }
        };
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bagpipe: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Bag(cmd) => bag(cmd),
        Command::Driver(args) => driver(args),
        Command::Worker(args) => worker(args),
        Command::Run(args) => run(args),
        Command::Scenario(ScenarioCommand::Generate {
            out,
            all,
            duration_s,
            step_ms,
        }) => {
            let params = SynthParams {
                duration_s,
                step_ms,
                ..SynthParams::default()
            };
            let vars = barrier_defaults();
            let manifest = if all {
                generate_suite(&vars, accept_all, &params, &out)?
            } else {
                generate_suite(&vars, default_filter, &params, &out)?
            };
            println!("cases={}", manifest.entries.len());
            println!("manifest={}", manifest.path.display());
            Ok(())
        }
        Command::Bench(cmd) => bench(cmd),
        Command::Helper(cmd) => helper::run(cmd),
    }
}

fn load_source(path: &Path) -> Result<MemoryStore> {
    if path == Path::new("-") {
        Ok(load_from_input_stream(io::stdin().lock()).context("reading standard input")?)
    } else {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Ok(load_from_input_stream(BufReader::new(file))
            .with_context(|| format!("reading {}", path.display()))?)
    }
}

fn selector(topics: Vec<String>) -> Selector {
    if topics.is_empty() {
        Selector::All
    } else {
        Selector::topics(topics)
    }
}

fn bag(cmd: BagCommand) -> Result<()> {
    match cmd {
        BagCommand::Info { file } => {
            let summary = if file == Path::new("-") {
                scan_summary(&load_source(&file)?)?
            } else {
                let store = DiskStore::open(&file)
                    .with_context(|| format!("opening {}", file.display()))?;
                scan_summary(&store)?
            };
            print!("{summary}");
            Ok(())
        }
        BagCommand::Play {
            file,
            rate,
            topics,
            echo,
        } => {
            let store = load_source(&file)?;
            let clock = PlayClock::new(rate)?;
            let bus = Bus::new();
            let mut reader = BagReader::open(&store)?;
            let report = if echo {
                let sub = bus.subscribe(Selector::All);
                let done_playing = AtomicBool::new(false);
                let report = thread::scope(|s| {
                    let printer = s.spawn(|| -> io::Result<()> {
                        let mut out = BufWriter::new(io::stdout().lock());
                        loop {
                            match sub.recv_timeout(Duration::from_millis(50)) {
                                Some(e) => writeln!(
                                    out,
                                    "{}\t{}\t{}",
                                    e.original_timestamp,
                                    e.topic,
                                    e.payload.len()
                                )?,
                                None if done_playing.load(Ordering::SeqCst) => break,
                                None => {}
                            }
                        }
                        for e in sub.drain() {
                            writeln!(
                                out,
                                "{}\t{}\t{}",
                                e.original_timestamp,
                                e.topic,
                                e.payload.len()
                            )?;
                        }
                        out.flush()
                    });
                    let report = play_filtered(&mut reader, &bus, &clock, &selector(topics));
                    done_playing.store(true, Ordering::SeqCst);
                    let printed = printer.join().expect("printer thread panicked");
                    (report, printed)
                });
                report.1?;
                report.0?
            } else {
                play_filtered(&mut reader, &bus, &clock, &selector(topics))?
            };
            eprintln!("{report}");
            Ok(())
        }
        BagCommand::Record {
            file,
            input,
            topics,
            all,
            count,
            idle_ms,
            rate,
        } => {
            let source = load_source(&input)?;
            let selector = if all { Selector::All } else { selector(topics) };
            let clock = PlayClock::new(rate)?;
            let bus = Bus::new();
            let recorder = Recorder::new(&bus, selector);
            let signal = StopSignal::new();
            let stop = StopCondition {
                max_messages: count,
                idle: idle_ms.map(Duration::from_millis),
                signal: Some(signal.clone()),
            };
            let mut writer = BagWriter::open(
                DiskStore::create(&file).with_context(|| format!("creating {}", file.display()))?,
                DEFAULT_CHUNK_TARGET_BYTES,
            )?;
            let mut reader = BagReader::open(&source)?;
            let (played, summary) = thread::scope(|s| {
                let rec = s.spawn(|| recorder.run(&mut writer, &stop));
                let played = play_filtered(&mut reader, &bus, &clock, &Selector::All);
                signal.trigger();
                (played, rec.join().expect("recorder thread panicked"))
            });
            let report = played?;
            let summary = summary?;
            eprintln!("{report}");
            print!("{summary}");
            Ok(())
        }
    }
}

fn driver(args: DriverArgs) -> Result<()> {
    let config = DriverConfig {
        bind: args.bind,
        heartbeat_interval: Duration::from_millis(args.heartbeat_ms),
        missed_heartbeats: args.missed_heartbeats,
        no_worker_wait: Duration::from_millis(args.no_worker_wait_ms),
    };
    let driver = Driver::start(config)?;
    println!("listening={}", driver.local_addr());
    io::stdout().flush()?;
    loop {
        thread::park();
    }
}

fn worker(args: WorkerArgs) -> Result<()> {
    let id = args.id.unwrap_or_else(|| {
        let host = std::fs::read_to_string("/proc/sys/kernel/hostname")
            .map(|h| h.trim().to_string())
            .unwrap_or_else(|_| "worker".into());
        format!("{host}-{}", std::process::id())
    });
    let config = WorkerConfig {
        heartbeat_interval: Duration::from_millis(args.heartbeat_ms),
        ..WorkerConfig::new(args.driver, id, args.slots)
    };
    let handle = start_worker(config)?;
    eprintln!("worker {} registered", handle.worker_id());
    handle.join();
    Ok(())
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()?.join(path)
    })
}

fn run(args: RunArgs) -> Result<()> {
    let argv = shlex::split(&args.cmd).context("--cmd has unbalanced quoting")?;
    let mut user_logic = UserLogicSpec::from_argv(argv).context("--cmd is empty")?;
    user_logic.timeout = args.timeout_ms.map(Duration::from_millis);
    let output_mode = match &args.store {
        Some(dir) => OutputMode::Store(absolute(dir)?),
        None => OutputMode::Collect,
    };
    let spec = JobSpec::new(
        absolute(&args.bag)?,
        args.partitions,
        user_logic,
        output_mode,
    );

    let result = match args.local_workers {
        Some(n) => run_local(&spec, n, args.slots)?,
        None => {
            let addr = args.driver.expect("clap requires --driver");
            submit_remote(&addr, &spec)?
        }
    };
    report_job(&result)
}

fn run_local(spec: &JobSpec, workers: u32, slots: u32) -> Result<JobResult> {
    if workers == 0 {
        bail!("--local-workers must be at least 1");
    }
    let driver = Driver::start(DriverConfig::default())?;
    let addr = driver.local_addr().to_string();
    let handles = (0..workers)
        .map(|i| start_worker(WorkerConfig::new(addr.clone(), format!("local-{i}"), slots)))
        .collect::<Result<Vec<_>, _>>()?;
    driver.wait_for_workers(workers as usize, Duration::from_secs(10));
    let result = driver.submit_job(spec);
    drop(driver);
    for h in handles {
        h.join();
    }
    Ok(result?)
}

fn report_job(result: &JobResult) -> Result<()> {
    let stdout = io::stdout();
    let collected = result
        .outcomes
        .iter()
        .any(|o| matches!(o.output, TaskOutput::Collected(_)));
    if collected && !stdout.is_terminal() {
        let frames: Vec<&Frame> = result.collected_frames();
        let mut out = BufWriter::new(stdout.lock());
        encode_stream(frames, &mut out)?;
        out.flush()?;
    } else {
        let mut out = stdout.lock();
        for o in &result.outcomes {
            match &o.output {
                TaskOutput::Collected(frames) => writeln!(
                    out,
                    "partition {}\trecords {}..{}\tframes {}",
                    o.partition_id,
                    o.range.start,
                    o.range.end,
                    frames.len()
                )?,
                TaskOutput::Stored(path) => writeln!(out, "{}", path.display())?,
            }
        }
    }
    eprintln!(
        "job {}: {} partitions in {:.3}s",
        result.job_id,
        result.outcomes.len(),
        result.wall_time.as_secs_f64()
    );
    Ok(())
}

fn bench(cmd: BenchCommand) -> Result<()> {
    match cmd {
        BenchCommand::Cache {
            workload,
            scale_factor,
            runs,
            scratch,
        } => {
            let workloads = match workload.as_str() {
                "both" => vec![Workload::Small, Workload::Large],
                w => vec![w.parse::<Workload>().map_err(anyhow::Error::msg)?],
            };
            let specs = workloads
                .into_iter()
                .map(|w| w.desk(scale_factor))
                .collect::<Result<Vec<_>, _>>()?;
            let config = CompareConfig {
                runs,
                scratch,
                ..CompareConfig::disk_vs_memory(specs)
            };
            let report = compare_backends(&config)?;
            for r in report.rows.iter().filter(|r| r.regression) {
                log::warn!(
                    "{} {}: memory slower than disk (ratio {:.3})",
                    r.workload,
                    r.phase,
                    r.ratio
                );
            }
            print!("{report}");
            Ok(())
        }
        BenchCommand::Scale {
            workers,
            tasks,
            task_ms,
        } => {
            let exe = std::env::current_exe()?;
            let sleeper = UserLogicSpec::new(exe.to_string_lossy())
                .arg("helper")
                .arg("sleep-copy")
                .arg("--ms")
                .arg(task_ms.to_string());
            let config = ScaleBenchConfig::new(workers, tasks, task_ms).sleeper(sleeper);
            print!("{}", run_scale_bench(&config)?);
            Ok(())
        }
        BenchCommand::Estimate {
            hours,
            workers,
            efficiency,
        } => {
            println!("{}", estimate_cluster_hours(hours, workers, efficiency)?);
            Ok(())
        }
    }
}
