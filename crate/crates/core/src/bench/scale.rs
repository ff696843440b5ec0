//! Job wall time against worker count for a fixed sleep workload.

use std::path::Path;
use std::time::{Duration, Instant};

use super::report::{ScaleReport, ScaleRow};
use super::{machine_descriptor, unix_now, BenchError};
use crate::bag::{BagWriter, MessageRecord};
use crate::pipe::UserLogicSpec;
use crate::runtime::{start_worker, Driver, DriverConfig, JobSpec, OutputMode, WorkerConfig};
use crate::store::DiskStore;

#[derive(Debug, Clone)]
pub struct ScaleBenchConfig {
    pub worker_counts: Vec<u32>,
    pub tasks: u32,
    pub task_ms: u64,
    /// Child that sleeps `task_ms` and echoes its input. Defaults to a shell
    /// one-liner; callers with a cheaper helper binary should supply it.
    pub sleeper: UserLogicSpec,
}

impl ScaleBenchConfig {
    pub fn new(worker_counts: Vec<u32>, tasks: u32, task_ms: u64) -> Self {
        let script = format!("sleep {}; exec cat", task_ms as f64 / 1000.0);
        Self {
            worker_counts,
            tasks,
            task_ms,
            sleeper: UserLogicSpec::from_argv(["sh", "-c", script.as_str()])
                .expect("non-empty argv"),
        }
    }

    pub fn sleeper(mut self, spec: UserLogicSpec) -> Self {
        self.sleeper = spec;
        self
    }
}

fn write_task_bag(path: &Path, tasks: u32) -> Result<(), BenchError> {
    let mut w = BagWriter::open(DiskStore::create(path)?, 64 * 1024)?;
    for i in 0..tasks {
        w.append(&MessageRecord::new(
            "/bench/task",
            u64::from(i),
            i.to_le_bytes().to_vec(),
        ))?;
    }
    w.seal()?;
    Ok(())
}

/// Wall time of one `tasks`-partition job on `workers` single-slot workers.
fn timed_job(config: &ScaleBenchConfig, bag: &Path, workers: u32) -> Result<Duration, BenchError> {
    let driver = Driver::start(DriverConfig::default())?;
    let addr = driver.local_addr().to_string();
    let handles = (0..workers)
        .map(|i| start_worker(WorkerConfig::new(addr.clone(), format!("bench-{i}"), 1)))
        .collect::<Result<Vec<_>, _>>()?;
    driver.wait_for_workers(workers as usize, Duration::from_secs(10));
    let job = JobSpec::new(
        bag,
        config.tasks,
        config.sleeper.clone(),
        OutputMode::Collect,
    );
    let started = Instant::now();
    let result = driver.submit_job(&job);
    let wall = started.elapsed();
    drop(driver);
    for h in handles {
        h.join();
    }
    let result = result?;
    debug_assert_eq!(result.outcomes.len(), config.tasks as usize);
    Ok(wall)
}

/// Runs the job once per worker count, serially, and reports speedup
/// relative to the first count.
pub fn run_scale_bench(config: &ScaleBenchConfig) -> Result<ScaleReport, BenchError> {
    if config.worker_counts.is_empty() {
        return Err(BenchError::Empty("no worker counts"));
    }
    if config.worker_counts.contains(&0) || config.tasks == 0 || config.task_ms == 0 {
        return Err(BenchError::InvalidParameter(
            "worker counts, tasks and task_ms must be positive".into(),
        ));
    }
    let dir = tempfile::tempdir()?;
    let bag = dir.path().join("tasks.dbag");
    write_task_bag(&bag, config.tasks)?;

    let mut rows: Vec<ScaleRow> = Vec::new();
    for &w in &config.worker_counts {
        let wall_s = timed_job(config, &bag, w)?.as_secs_f64();
        let base = rows.first().map_or(wall_s, |r| r.wall_s);
        let base_workers = rows.first().map_or(w, |r| r.workers);
        // Relative to the first count, normalized so that a first count of
        // one worker gives the usual time(1)/time(w).
        let speedup = base / wall_s * f64::from(base_workers);
        log::info!("{w} workers: {wall_s:.3}s, speedup {speedup:.2}");
        rows.push(ScaleRow {
            workers: w,
            wall_s,
            speedup,
            efficiency: speedup / f64::from(w),
        });
    }
    Ok(ScaleReport {
        machine: machine_descriptor(),
        timestamp: unix_now(),
        tasks: config.tasks,
        task_ms: config.task_ms,
        rows,
    })
}
