//! One PASS/FAIL line per acceptance criterion. Criteria run one after
//! another so the timing-sensitive ones do not compete for the machine.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use bagpipe::bag::{read_all, BagReader, BagWriter, MessageRecord};
use bagpipe::bench::{
    compare_backends, estimate_cluster_hours, run_scale_bench, CompareConfig, ScaleBenchConfig,
    Workload,
};
use bagpipe::pipe::{
    decode_stream, encode_to_vec, run_user_logic, Frame, FrameError, UserLogicSpec,
};
use bagpipe::playback::{play, Bus, PlayClock, Recorder, Selector, StopCondition};
use bagpipe::runtime::{
    partition_ranges, start_worker, Driver, DriverConfig, JobSpec, OutputMode, WorkerConfig,
};
use bagpipe::scenario::{
    barrier_defaults, default_filter, enumerate, MOTIONS, POSITIONS, SPEED_CLASSES,
};
use bagpipe::store::{DiskStore, MemoryStore};
use rand::rngs::StdRng;
use rand::{Rng, RngCore, SeedableRng};

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn random_bag(rng: &mut StdRng) -> (Vec<MessageRecord>, usize) {
    let n = rng.gen_range(1..=1000);
    let topics = ["/camera", "/lidar", "/imu", "/gps/fix"];
    let mut ts = rng.gen_range(0..1_000_000u64);
    let records = (0..n)
        .map(|_| {
            ts += rng.gen_range(0..10_000_000);
            // Log-uniform over 0..=64 KiB so both tiny and large payloads show up.
            let len =
                ((1u64 << rng.gen_range(0..=16)) - 1).min(rng.gen_range(0..=64 * 1024)) as usize;
            let mut payload = vec![0u8; len];
            rng.fill_bytes(&mut payload);
            MessageRecord::new(topics[rng.gen_range(0..topics.len())], ts, payload)
        })
        .collect();
    let chunk_target = 1usize << rng.gen_range(6..=22);
    (records, chunk_target)
}

fn bag_roundtrip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xBA6);
    let started = Instant::now();
    let mut total_records = 0;
    for i in 0..100 {
        let (records, chunk_target) = random_bag(&mut rng);
        total_records += records.len();
        let mut w = BagWriter::open(MemoryStore::new(), chunk_target).map_err(|e| e.to_string())?;
        for r in &records {
            w.append(r).map_err(|e| e.to_string())?;
        }
        w.seal().map_err(|e| e.to_string())?;
        let original = w.into_store();
        let read = read_all(&original).map_err(|e| e.to_string())?;
        ensure!(read == records, "bag {i}: records differ after write/read");

        let bus = Bus::new();
        let recorder = Recorder::new(&bus, Selector::All);
        let n = records.len() as u64;
        let copy = thread::spawn(move || {
            let mut w = BagWriter::open(MemoryStore::new(), chunk_target).unwrap();
            recorder.run(&mut w, &StopCondition::count(n)).unwrap();
            w.into_store()
        });
        play(
            &mut BagReader::open(&original).map_err(|e| e.to_string())?,
            &bus,
            &PlayClock::as_fast_as_possible(),
        )
        .map_err(|e| e.to_string())?;
        let copy = copy.join().map_err(|_| "recorder panicked".to_string())?;
        ensure!(
            copy.as_bytes() == original.as_bytes(),
            "bag {i}: record(play(B)) is not byte-identical to B"
        );
    }
    let elapsed = started.elapsed();
    ensure!(
        elapsed < Duration::from_secs(60),
        "took {elapsed:.1?}, limit 60s"
    );
    Ok(format!("100 bags, {total_records} records, {elapsed:.1?}"))
}

/// BPR1 bytes laid out field by field.
fn hand_encode(frames: &[(&str, &[u8])]) -> Vec<u8> {
    let mut out = b"BPR1".to_vec();
    for (name, payload) in frames {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(payload);
    }
    out.extend_from_slice(&[0xFF; 4]);
    out
}

fn bpr1_conformance() -> Outcome {
    let empty = encode_to_vec(&[]).map_err(|e| e.to_string())?;
    ensure!(
        empty == [0x42, 0x50, 0x52, 0x31, 0xFF, 0xFF, 0xFF, 0xFF],
        "empty stream bytes {empty:02x?}"
    );
    let single = encode_to_vec(&[Frame::new("a", vec![1, 2])]).map_err(|e| e.to_string())?;
    let golden = [
        0x42, 0x50, 0x52, 0x31, 0x01, 0x00, 0x00, 0x00, 0x61, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00,
        0x00, 0x00, 0x01, 0x02, 0xFF, 0xFF, 0xFF, 0xFF,
    ];
    ensure!(single == golden, "single-frame bytes {single:02x?}");

    let mut rng = StdRng::seed_from_u64(0xB121);
    for i in 0..1000 {
        let count = rng.gen_range(0..16);
        let frames: Vec<Frame> = (0..count)
            .map(|_| {
                let name: String = (0..rng.gen_range(0..24))
                    .map(|_| char::from(rng.gen_range(b' '..=b'~')))
                    .collect();
                let mut payload = vec![0u8; rng.gen_range(0..2048)];
                rng.fill_bytes(&mut payload);
                Frame::new(name, payload)
            })
            .collect();
        let bytes = encode_to_vec(&frames).map_err(|e| e.to_string())?;
        let pairs: Vec<(&str, &[u8])> = frames
            .iter()
            .map(|f| (f.name.as_str(), &f.payload[..]))
            .collect();
        ensure!(
            bytes == hand_encode(&pairs),
            "list {i}: encoding differs from the byte layout"
        );
        let back = decode_stream(&bytes[..]).map_err(|e| format!("list {i}: {e}"))?;
        ensure!(back == frames, "list {i}: decode(encode(F)) != F");
    }

    let fixture = hand_encode(&[("a", &[1, 2]), ("", &[]), ("cam/0", &[9; 17])]);
    for cut in 0..fixture.len() {
        match decode_stream(&fixture[..cut]) {
            Err(FrameError::Truncated { .. }) => {}
            Err(FrameError::BadMagic { .. }) if cut < 4 => {}
            other => return Err(format!("prefix of {cut} bytes gave {other:?}")),
        }
    }
    Ok(format!(
        "golden fixtures match, 1000 lists roundtrip, {} truncations rejected",
        fixture.len()
    ))
}

fn pipe_deadlock_freedom() -> Outcome {
    let mut payload = vec![0u8; 64 << 20];
    StdRng::seed_from_u64(64).fill_bytes(&mut payload);
    let input = vec![Frame::new("blob", payload)];
    let started = Instant::now();
    let out = run_user_logic(&UserLogicSpec::new("cat"), &input).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(out.frames == input, "copy child changed the frame");
    ensure!(
        elapsed < Duration::from_secs(30),
        "took {elapsed:.1?}, limit 30s"
    );
    Ok(format!("64 MiB frame through cat in {elapsed:.2?}"))
}

fn runtime_exactly_once() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let bag = dir.path().join("input.dbag");
    let records = 64u64;
    {
        let mut w = BagWriter::open(DiskStore::create(&bag).map_err(|e| e.to_string())?, 256)
            .map_err(|e| e.to_string())?;
        for i in 0..records {
            w.append(&MessageRecord::new("/t", i, i.to_le_bytes().to_vec()))
                .map_err(|e| e.to_string())?;
        }
        w.seal().map_err(|e| e.to_string())?;
    }
    let partitions = 8;
    let mut expected = Vec::new();
    for (pid, range) in partition_ranges(records, partitions)
        .into_iter()
        .enumerate()
    {
        for i in range {
            let r = MessageRecord::new("/t", i, i.to_le_bytes().to_vec());
            expected.push(Frame::new(format!("{pid}/{i}"), r.encode().unwrap()));
        }
    }
    let sleeper = UserLogicSpec::new(env!("CARGO_BIN_EXE_bagpipe"))
        .arg("helper")
        .arg("sleep-copy")
        .arg("--ms")
        .arg("40");
    let mut rng = StdRng::seed_from_u64(20);
    for trial in 0..20 {
        let driver = Driver::start(DriverConfig::default()).map_err(|e| e.to_string())?;
        let addr = driver.local_addr().to_string();
        let victim = start_worker(WorkerConfig::new(addr.clone(), "victim", 2))
            .map_err(|e| e.to_string())?;
        let _survivor =
            start_worker(WorkerConfig::new(addr, "survivor", 2)).map_err(|e| e.to_string())?;
        ensure!(
            driver.wait_for_workers(2, Duration::from_secs(5)),
            "workers did not register"
        );
        let job = JobSpec::new(&bag, partitions, sleeper.clone(), OutputMode::Collect);
        let delay = Duration::from_millis(rng.gen_range(10..120));
        let result = thread::scope(|s| {
            let run = s.spawn(|| driver.submit_job(&job));
            thread::sleep(delay);
            victim.kill();
            run.join().expect("submit thread")
        })
        .map_err(|e| format!("trial {trial}: job failed: {e}"))?;
        let ids: Vec<u32> = result.outcomes.iter().map(|o| o.partition_id).collect();
        ensure!(
            ids == (0..partitions).collect::<Vec<_>>(),
            "trial {trial}: partitions {ids:?}"
        );
        let frames: Vec<Frame> = result.collected_frames().into_iter().cloned().collect();
        ensure!(frames == expected, "trial {trial}: collected frames differ");
    }
    Ok("20/20 jobs exactly-once and ordered, one of two workers killed 10-120 ms in".into())
}

fn scalability() -> Outcome {
    let sleeper = UserLogicSpec::new(env!("CARGO_BIN_EXE_bagpipe"))
        .arg("helper")
        .arg("sleep-copy")
        .arg("--ms")
        .arg("25");
    let config = ScaleBenchConfig::new(vec![1, 2, 4, 8], 400, 25).sleeper(sleeper);
    let started = Instant::now();
    let report = run_scale_bench(&config).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let summary: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("w={} {:.2}s x{:.2}", r.workers, r.wall_s, r.speedup))
        .collect();
    let s8 = report.speedup(8).unwrap_or(0.0);
    ensure!(
        s8 >= 6.0,
        "speedup(8) = {s8:.2} < 6.0 [{}]",
        summary.join(", ")
    );
    ensure!(
        report.is_monotone(),
        "speedup not non-decreasing [{}]",
        summary.join(", ")
    );
    ensure!(
        elapsed < Duration::from_secs(300),
        "took {elapsed:.1?}, limit 5 min"
    );
    Ok(format!(
        "{} (reference x7.2 on 8 workers), {elapsed:.1?}",
        summary.join(", ")
    ))
}

fn cache_directional() -> Outcome {
    let workloads = [Workload::Small, Workload::Large]
        .into_iter()
        .map(|w| w.desk(None))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let started = Instant::now();
    let report =
        compare_backends(&CompareConfig::disk_vs_memory(workloads)).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure!(
        report.rows.len() == 4,
        "expected 4 cells, got {}",
        report.rows.len()
    );
    let mut cells = Vec::new();
    let mut failed = Vec::new();
    for r in &report.rows {
        let reference = r.workload.reference_ratio(r.phase);
        cells.push(format!(
            "{}/{} x{:.2} (reference x{reference}, {} files)",
            r.workload, r.phase, r.ratio, r.files
        ));
        if r.ratio < 1.0 {
            failed.push(format!("{}/{}", r.workload, r.phase));
        }
    }
    ensure!(
        failed.is_empty(),
        "ratio < 1.0 for {}: {}",
        failed.join(", "),
        cells.join("; ")
    );
    ensure!(
        elapsed < Duration::from_secs(180),
        "took {elapsed:.1?}, limit 3 min"
    );
    Ok(format!("{}; {elapsed:.1?}", cells.join("; ")))
}

fn scenario_counts() -> Outcome {
    let all = enumerate(&barrier_defaults(), |_| true).map_err(|e| e.to_string())?;
    let filtered = enumerate(&barrier_defaults(), default_filter).map_err(|e| e.to_string())?;
    let mut brute = 0;
    let mut brute_filtered = 0;
    for p in POSITIONS {
        for s in SPEED_CLASSES {
            for _m in MOTIONS {
                brute += 1;
                if !(matches!(p, "rear" | "left-rear" | "right-rear") && s == "slower") {
                    brute_filtered += 1;
                }
            }
        }
    }
    ensure!(
        all.len() == 72 && brute == 72,
        "unfiltered {} (brute force {brute})",
        all.len()
    );
    ensure!(
        filtered.len() == 63 && brute_filtered == 63,
        "filtered {} (brute force {brute_filtered})",
        filtered.len()
    );
    Ok("72 unfiltered, 63 filtered, brute force agrees".into())
}

fn estimator() -> Outcome {
    let h = estimate_cluster_hours(600_000.0, 10_000, 0.6).map_err(|e| e.to_string())?;
    ensure!(h == 100.0, "got {h}");
    Ok(format!("estimate_cluster_hours(600000, 10000, 0.6) = {h}"))
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 8] = [
        ("bag roundtrip fidelity", bag_roundtrip),
        ("BPR1 conformance", bpr1_conformance),
        ("pipe deadlock-freedom", pipe_deadlock_freedom),
        ("runtime exactly-once under kills", runtime_exactly_once),
        ("scalability speedup(8) >= 6.0", scalability),
        ("memory cache ratio >= 1.0", cache_directional),
        ("scenario counts", scenario_counts),
        ("cluster estimator", estimator),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
