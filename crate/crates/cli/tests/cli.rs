use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use bagpipe::bag::{read_all, MessageRecord};
use bagpipe::pipe::{decode_stream, Frame};
use bagpipe::store::MemoryStore;

fn bagpipe() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bagpipe"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn bagpipe")
}

fn record_bytes(topic: &str, ts: u64, payload: &[u8]) -> Vec<u8> {
    let mut out = (topic.len() as u16).to_le_bytes().to_vec();
    out.extend_from_slice(topic.as_bytes());
    out.extend_from_slice(&ts.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

/// Three records on /a, /a, /b in one chunk, encoded by hand.
fn fixture_bag() -> Vec<u8> {
    let mut body = record_bytes("/a", 1000, &[1, 2, 3]);
    body.extend(record_bytes("/a", 2000, &[4, 5, 6]));
    body.extend(record_bytes("/b", 3000, &[]));
    let mut out = b"DBAG".to_vec();
    out.extend_from_slice(&1u32.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&3u32.to_le_bytes());
    out.extend(body);
    out.extend_from_slice(b"DEND");
    out.extend_from_slice(&3u64.to_le_bytes());
    out
}

const FIXTURE_INFO: &str = "\
records: 3
chunks: 1
bytes: 86
sealed: yes
start_ns: 1000
end_ns: 3000
topics: 2
  /a: 2
  /b: 1
";

#[test]
fn bag_info_golden_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.dbag");
    std::fs::write(&path, fixture_bag()).unwrap();
    let out = run(bagpipe().args(["bag", "info"]).arg(&path));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8(out.stdout).unwrap(), FIXTURE_INFO);
}

#[test]
fn bag_info_reads_standard_input() {
    let mut child = bagpipe()
        .args(["bag", "info", "-"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(&fixture_bag())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), FIXTURE_INFO);
}

#[test]
fn bag_info_on_garbage_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.dbag");
    std::fs::write(&path, [0u8; 32]).unwrap();
    let out = run(bagpipe().args(["bag", "info"]).arg(&path));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad magic"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run(bagpipe().arg("nonsense"));
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn record_from_stdin_copies_the_bag() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("copy.dbag");
    let mut child = bagpipe()
        .args(["bag", "record", "--all", "--count", "3"])
        .arg(&out_path)
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(&fixture_bag())
        .unwrap();
    assert!(child.wait().unwrap().success());
    let copied = read_all(&MemoryStore::from_bytes(std::fs::read(&out_path).unwrap())).unwrap();
    let original = read_all(&MemoryStore::from_bytes(fixture_bag())).unwrap();
    assert_eq!(copied, original);
}

fn expected_frames(bag: &[u8], partitions: &[std::ops::Range<usize>]) -> Vec<Frame> {
    let records: Vec<MessageRecord> = read_all(&MemoryStore::from_bytes(bag.to_vec())).unwrap();
    let mut frames = Vec::new();
    for (pid, range) in partitions.iter().enumerate() {
        for i in range.clone() {
            frames.push(Frame::new(
                format!("{pid}/{i}"),
                records[i].encode().unwrap(),
            ));
        }
    }
    frames
}

#[test]
fn local_run_streams_collected_frames() {
    let dir = tempfile::tempdir().unwrap();
    let bag = dir.path().join("b.dbag");
    std::fs::write(&bag, fixture_bag()).unwrap();
    let out = run(bagpipe()
        .args([
            "run",
            "--partitions",
            "2",
            "--cmd",
            "cat",
            "--collect",
            "--local-workers",
            "2",
        ])
        .arg("--bag")
        .arg(&bag));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let frames = decode_stream(&out.stdout[..]).unwrap();
    assert_eq!(frames, expected_frames(&fixture_bag(), &[0..2, 2..3]));
}

struct Reaper(Vec<Child>);

impl Drop for Reaper {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn start_driver(reaper: &mut Reaper) -> String {
    let mut driver = bagpipe()
        .args(["driver", "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(driver.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    reaper.0.push(driver);
    line.trim()
        .strip_prefix("listening=")
        .unwrap_or_else(|| panic!("unexpected driver banner {line:?}"))
        .to_string()
}

#[test]
fn run_against_separate_driver_and_worker() {
    let dir = tempfile::tempdir().unwrap();
    let bag = dir.path().join("b.dbag");
    std::fs::write(&bag, fixture_bag()).unwrap();
    let mut reaper = Reaper(Vec::new());
    let addr = start_driver(&mut reaper);
    reaper.0.push(
        bagpipe()
            .args(["worker", "--slots", "2", "--id", "w0"])
            .env("BAGPIPE_DRIVER", &addr)
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let copy = format!("{} helper copy", env!("CARGO_BIN_EXE_bagpipe"));
    let out = run(bagpipe()
        .args([
            "run",
            "--partitions",
            "2",
            "--collect",
            "--driver",
            &addr,
            "--cmd",
            &copy,
        ])
        .arg("--bag")
        .arg(&bag));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(
        decode_stream(&out.stdout[..]).unwrap(),
        expected_frames(&fixture_bag(), &[0..2, 2..3])
    );

    let parts = dir.path().join("parts");
    let out = run(bagpipe()
        .args([
            "run",
            "--partitions",
            "2",
            "--cmd",
            "cat",
            "--driver",
            &addr,
        ])
        .arg("--bag")
        .arg(&bag)
        .arg("--store")
        .arg(&parts));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let listed: Vec<&str> = std::str::from_utf8(&out.stdout).unwrap().lines().collect();
    assert_eq!(listed.len(), 2);
    for (pid, path) in listed.iter().enumerate() {
        assert!(
            Path::new(path).ends_with(format!("part-{pid:05}.bpr")),
            "{path}"
        );
        decode_stream(std::fs::File::open(path).unwrap()).unwrap();
    }
}

#[test]
fn run_without_driver_or_local_workers_is_a_usage_error() {
    let out = run(bagpipe()
        .args(["run", "--bag", "x.dbag", "--cmd", "cat", "--collect"])
        .env_remove("BAGPIPE_DRIVER"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_generate_reports_case_count() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bagpipe()
        .args(["scenario", "generate", "--duration-s", "0.5", "--out"])
        .arg(dir.path()));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "cases=63"), "{text}");
}

#[test]
fn estimate_prints_hours() {
    let out = run(bagpipe().args([
        "bench",
        "estimate",
        "--hours",
        "600000",
        "--workers",
        "10000",
        "--efficiency",
        "0.6",
    ]));
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "100");
}

#[test]
fn helper_copy_is_byte_identity() {
    let stream = bagpipe::pipe::encode_to_vec(&[Frame::new("a", vec![1, 2])]).unwrap();
    for input in [stream.clone(), b"BPR1\xff\xff\xff\xff".to_vec()] {
        let mut child = bagpipe()
            .args(["helper", "copy"])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(&input).unwrap();
        let out = child.wait_with_output().unwrap();
        assert!(out.status.success());
        assert_eq!(out.stdout, input);
    }
}
