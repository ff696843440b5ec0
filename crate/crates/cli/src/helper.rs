//! Small user-logic programs for tests and benchmarks, so a byte-copy or
//! sleeping child is available without any other tooling.

use std::io::{self, BufReader, BufWriter, Write};
use std::thread;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Subcommand;

use bagpipe::image::RawImage;
use bagpipe::pipe::{FrameReader, FrameWriter};

#[derive(Subcommand)]
pub enum HelperCommand {
    /// Copy standard input to standard output.
    Copy,
    /// Sleep, then copy standard input to standard output.
    SleepCopy {
        #[arg(long)]
        ms: u64,
    },
    /// Rotate every image frame 90° clockwise.
    Rotate90,
}

pub fn run(cmd: HelperCommand) -> Result<()> {
    match cmd {
        HelperCommand::Copy => copy(),
        HelperCommand::SleepCopy { ms } => {
            thread::sleep(Duration::from_millis(ms));
            copy()
        }
        HelperCommand::Rotate90 => rotate90(),
    }
}

fn copy() -> Result<()> {
    let mut out = io::stdout().lock();
    io::copy(&mut io::stdin().lock(), &mut out)?;
    out.flush()?;
    Ok(())
}

fn rotate90() -> Result<()> {
    let reader = FrameReader::new(BufReader::new(io::stdin().lock()))?;
    let mut writer = FrameWriter::new(BufWriter::new(io::stdout().lock()))?;
    for frame in reader {
        let frame = frame?;
        let image =
            RawImage::decode(&frame.payload).with_context(|| format!("frame {:?}", frame.name))?;
        writer.write_parts(&frame.name, &image.rotate90().encode())?;
    }
    let (mut out, _) = writer.finish()?;
    out.flush()?;
    Ok(())
}
