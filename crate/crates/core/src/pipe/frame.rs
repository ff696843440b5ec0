//! BPR1 framing: the uniform byte-array format carried over pipes.
//!
//! ```text
//! "BPR1" | { name_len u32 | name | payload_len u64 | payload }* | 0xFFFFFFFF
//! ```
//!
//! The stream is terminated by a sentinel rather than prefixed with a frame
//! count, so producers can emit frames as they go. Decoding reads exactly up
//! to the sentinel and never beyond it.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const STREAM_MAGIC: [u8; 4] = *b"BPR1";
pub const SENTINEL: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("bad stream magic at offset {offset}")]
    BadMagic { offset: u64 },
    #[error("stream truncated at byte offset {offset} while reading {what}")]
    Truncated { offset: u64, what: &'static str },
    #[error("frame name at offset {offset} is not valid UTF-8")]
    InvalidName { offset: u64 },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("unexpected bytes after the stream sentinel at offset {offset}")]
    TrailingBytes { offset: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// One named byte array.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Frame {
    pub name: String,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(name: impl Into<String>, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.into(),
            payload: payload.into(),
        }
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if self.name.len() >= SENTINEL as usize {
            return Err(FrameError::InvalidFrame(format!(
                "name of {} bytes collides with the sentinel",
                self.name.len()
            )));
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> u64 {
        4 + self.name.len() as u64 + 8 + self.payload.len() as u64
    }
}

/// Incremental encoder. Writes the magic on construction and the sentinel on
/// [`FrameWriter::finish`].
pub struct FrameWriter<W: Write> {
    sink: W,
    written: u64,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut sink: W) -> Result<Self, FrameError> {
        sink.write_all(&STREAM_MAGIC)?;
        Ok(Self { sink, written: 4 })
    }

    pub fn write_frame(&mut self, frame: &Frame) -> Result<(), FrameError> {
        self.write_parts(&frame.name, &frame.payload)
    }

    pub fn write_parts(&mut self, name: &str, payload: &[u8]) -> Result<(), FrameError> {
        if name.len() >= SENTINEL as usize {
            return Err(FrameError::InvalidFrame(
                "name collides with the sentinel".into(),
            ));
        }
        self.sink.write_all(&(name.len() as u32).to_le_bytes())?;
        self.sink.write_all(name.as_bytes())?;
        self.sink.write_all(&(payload.len() as u64).to_le_bytes())?;
        self.sink.write_all(payload)?;
        self.written += 12 + name.len() as u64 + payload.len() as u64;
        Ok(())
    }

    /// Writes the sentinel, flushes, and returns the sink with the total
    /// number of bytes written.
    pub fn finish(mut self) -> Result<(W, u64), FrameError> {
        self.sink.write_all(&SENTINEL.to_le_bytes())?;
        self.sink.flush()?;
        Ok((self.sink, self.written + 4))
    }
}

/// Encodes `frames` as one complete stream. Returns bytes written.
pub fn encode_stream<'a, W, I>(frames: I, sink: W) -> Result<u64, FrameError>
where
    W: Write,
    I: IntoIterator<Item = &'a Frame>,
{
    let mut writer = FrameWriter::new(sink)?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    Ok(writer.finish()?.1)
}

/// Encodes into a fresh buffer.
pub fn encode_to_vec(frames: &[Frame]) -> Result<Vec<u8>, FrameError> {
    let len = 8 + frames.iter().map(Frame::encoded_len).sum::<u64>();
    let mut out = Vec::with_capacity(len as usize);
    encode_stream(frames, &mut out)?;
    Ok(out)
}

/// Incremental decoder over one stream. Reads with `read_exact` only, so
/// nothing past the sentinel is consumed from the source.
pub struct FrameReader<R: Read> {
    source: R,
    offset: u64,
    done: bool,
}

impl<R: Read> FrameReader<R> {
    /// Consumes and checks the stream magic.
    pub fn new(source: R) -> Result<Self, FrameError> {
        let mut reader = Self {
            source,
            offset: 0,
            done: false,
        };
        let magic: [u8; 4] = reader.read_array("stream magic")?;
        if magic != STREAM_MAGIC {
            return Err(FrameError::BadMagic { offset: 0 });
        }
        Ok(reader)
    }

    /// Bytes consumed from the source so far.
    pub fn offset(&self) -> u64 {
        self.offset
    }

    fn read_exact_tracked(&mut self, buf: &mut [u8], what: &'static str) -> Result<(), FrameError> {
        let mut filled = 0;
        while filled < buf.len() {
            match self.source.read(&mut buf[filled..]) {
                Ok(0) => {
                    return Err(FrameError::Truncated {
                        offset: self.offset + filled as u64,
                        what,
                    })
                }
                Ok(n) => filled += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_array<const N: usize>(&mut self, what: &'static str) -> Result<[u8; N], FrameError> {
        let mut buf = [0u8; N];
        self.read_exact_tracked(&mut buf, what)?;
        Ok(buf)
    }

    /// Reads `len` bytes, growing the buffer as data actually arrives so a
    /// corrupt length cannot force a huge allocation up front.
    fn read_vec(&mut self, len: u64, what: &'static str) -> Result<Vec<u8>, FrameError> {
        const STEP: u64 = 1 << 20;
        let mut out = Vec::with_capacity(len.min(STEP) as usize);
        while (out.len() as u64) < len {
            let start = out.len();
            let n = (len - start as u64).min(STEP) as usize;
            out.resize(start + n, 0);
            self.read_exact_tracked(&mut out[start..], what)?;
        }
        Ok(out)
    }

    /// Next frame, or `None` once the sentinel has been read.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, FrameError> {
        if self.done {
            return Ok(None);
        }
        let name_len = u32::from_le_bytes(self.read_array("name length")?);
        if name_len == SENTINEL {
            self.done = true;
            return Ok(None);
        }
        let name_offset = self.offset;
        let name = self.read_vec(name_len as u64, "frame name")?;
        let name = String::from_utf8(name).map_err(|_| FrameError::InvalidName {
            offset: name_offset,
        })?;
        let payload_len = u64::from_le_bytes(self.read_array("payload length")?);
        let payload = self.read_vec(payload_len, "payload")?;
        Ok(Some(Frame { name, payload }))
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn into_inner(self) -> R {
        self.source
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<Frame, FrameError>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.next_frame() {
            Ok(Some(frame)) => Some(Ok(frame)),
            Ok(None) => None,
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Decodes exactly one stream from `source`, leaving any following bytes
/// unread. Use this to pull concatenated streams one at a time.
pub fn read_stream<R: Read>(source: R) -> Result<Vec<Frame>, FrameError> {
    let mut reader = FrameReader::new(source)?;
    let mut frames = Vec::new();
    while let Some(frame) = reader.next_frame()? {
        frames.push(frame);
    }
    Ok(frames)
}

/// Decodes a source that must hold exactly one stream. Bytes after the
/// sentinel are an error.
pub fn decode_stream<R: Read>(source: R) -> Result<Vec<Frame>, FrameError> {
    let mut reader = FrameReader::new(source)?;
    let mut frames = Vec::new();
    while let Some(frame) = reader.next_frame()? {
        frames.push(frame);
    }
    let offset = reader.offset();
    let mut source = reader.into_inner();
    let mut probe = [0u8; 1];
    loop {
        match source.read(&mut probe) {
            Ok(0) => return Ok(frames),
            Ok(_) => return Err(FrameError::TrailingBytes { offset }),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
}
