//! Worker-side execution of one task.

use std::fs::File;
use std::io::{self, BufReader};

use super::wire::MAX_COLLECT_BYTES;
use super::{store_output, OutputMode, TaskOutput, TaskSpec};
use crate::bag::BagReader;
use crate::pipe::frame::{encode_to_vec, Frame};
use crate::pipe::{run_user_logic, TASK_ID_ENV};
use crate::store::load_from_input_stream;

/// Frames for a record range: name `"<partition>/<record index>"`, payload
/// the encoded record.
pub fn partition_frames(task: &TaskSpec) -> Result<Vec<Frame>, String> {
    let path = &task.partition.bag_path;
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => format!("source not found: {}", path.display()),
        _ => format!("cannot open {}: {e}", path.display()),
    })?;
    let store = load_from_input_stream(BufReader::new(file))
        .map_err(|e| format!("cannot load {}: {e}", path.display()))?;
    let mut reader = BagReader::open(&store).map_err(|e| e.to_string())?;

    let range = task.partition.range.clone();
    let pid = task.partition.partition_id;
    let mut frames = Vec::with_capacity((range.end - range.start) as usize);
    for index in 0..range.end {
        let record = reader
            .next_record()
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("bag ends before record {index}"))?;
        if index >= range.start {
            let payload = record.encode().map_err(|e| e.to_string())?;
            frames.push(Frame::new(format!("{pid}/{index}"), payload));
        }
    }
    Ok(frames)
}

/// Loads the partition, runs the user logic over it and delivers the output
/// per the task's output mode. Errors come back as a one-line reason.
pub fn execute_task(task: &TaskSpec) -> Result<TaskOutput, String> {
    let input = partition_frames(task)?;
    let pid = task.partition.partition_id;
    let spec = task
        .user_logic
        .clone()
        .env(TASK_ID_ENV, format!("{}-{pid}", task.job_id));
    let output = run_user_logic(&spec, &input).map_err(|e| {
        let mut reason = e.to_string();
        if let crate::pipe::PipeError::NonZeroExit { stderr, .. } = &e {
            if let Some(last) = stderr.lines().last() {
                reason.push_str(": ");
                reason.push_str(last);
            }
        }
        reason
    })?;
    match &task.output_mode {
        OutputMode::Collect => {
            let size: u64 = 8 + output.frames.iter().map(Frame::encoded_len).sum::<u64>();
            if size > MAX_COLLECT_BYTES as u64 {
                return Err(format!(
                    "collected output of {size} bytes exceeds the {MAX_COLLECT_BYTES}-byte inline limit; use store mode"
                ));
            }
            // Validated here so the driver never sees an unencodable frame.
            encode_to_vec(&output.frames).map_err(|e| e.to_string())?;
            Ok(TaskOutput::Collected(output.frames))
        }
        OutputMode::Store(dir) => store_output(&output.frames, dir, pid)
            .map(TaskOutput::Stored)
            .map_err(|e| format!("cannot store output in {}: {e}", dir.display())),
    }
}
