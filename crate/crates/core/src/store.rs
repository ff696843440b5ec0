//! Chunked byte storage: the lower tier underneath a bag.
//!
//! A [`ChunkedStore`] is a growable, append-only byte sequence with random
//! reads. [`DiskStore`] keeps the bytes in a file; [`MemoryStore`] keeps them
//! in a heap buffer and is the in-memory cache that workers use so bag data
//! never has to touch the disk. Both implementations are interchangeable
//! behind the trait.

use std::borrow::Cow;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Bytes buffered by a [`DiskStore`] before they are pushed to the file.
const DISK_WRITE_BUFFER: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store is sealed")]
    Sealed,
    #[error("store is not writable")]
    NotWritable,
    #[error("store is not sealed")]
    NotSealed,
    #[error("read of {len} bytes at offset {offset} is out of range (size {size})")]
    OutOfRange { offset: u64, len: u64, size: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    /// Coarse error class, used to compare backends in differential tests.
    pub fn kind(&self) -> StoreErrorKind {
        match self {
            StoreError::Sealed => StoreErrorKind::Sealed,
            StoreError::NotWritable => StoreErrorKind::NotWritable,
            StoreError::NotSealed => StoreErrorKind::NotSealed,
            StoreError::OutOfRange { .. } => StoreErrorKind::OutOfRange,
            StoreError::Io(_) => StoreErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreErrorKind {
    Sealed,
    NotWritable,
    NotSealed,
    OutOfRange,
    Io,
}

/// Append-write, random-read byte storage.
///
/// Writes only ever append. Once sealed the size is fixed and further writes
/// fail with [`StoreError::Sealed`]. A sealed store is immutable and may be
/// read from several threads at once.
pub trait ChunkedStore {
    /// Current logical size in bytes.
    fn size(&self) -> u64;

    fn is_writable(&self) -> bool;

    fn is_sealed(&self) -> bool;

    /// Appends `bytes`, returning the offset of the first written byte.
    fn write(&mut self, bytes: &[u8]) -> Result<u64, StoreError>;

    /// Reads exactly `len` bytes starting at `offset`.
    ///
    /// Memory-backed stores hand out a borrowed slice; disk-backed stores
    /// return an owned copy.
    fn read_at(&self, offset: u64, len: usize) -> Result<Cow<'_, [u8]>, StoreError>;

    /// Flushes pending bytes and freezes the store.
    fn seal(&mut self) -> Result<(), StoreError>;
}

fn check_range(offset: u64, len: usize, size: u64) -> Result<(), StoreError> {
    let len = len as u64;
    match offset.checked_add(len) {
        Some(end) if end <= size => Ok(()),
        _ => Err(StoreError::OutOfRange { offset, len, size }),
    }
}

/// Heap-backed store.
#[derive(Debug, Default, Clone)]
pub struct MemoryStore {
    buf: Vec<u8>,
    sealed: bool,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(capacity: usize) -> Self {
        Self {
            buf: Vec::with_capacity(capacity),
            sealed: false,
        }
    }

    /// Empty writable store that writes into `buf`'s existing allocation.
    pub fn with_buffer(mut buf: Vec<u8>) -> Self {
        buf.clear();
        Self { buf, sealed: false }
    }

    /// Wraps existing bytes as a sealed store.
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self {
            buf: bytes,
            sealed: true,
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.buf
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

impl ChunkedStore for MemoryStore {
    fn size(&self) -> u64 {
        self.buf.len() as u64
    }

    fn is_writable(&self) -> bool {
        !self.sealed
    }

    fn is_sealed(&self) -> bool {
        self.sealed
    }

    fn write(&mut self, bytes: &[u8]) -> Result<u64, StoreError> {
        if self.sealed {
            return Err(StoreError::Sealed);
        }
        let offset = self.buf.len() as u64;
        self.buf.extend_from_slice(bytes);
        Ok(offset)
    }

    fn read_at(&self, offset: u64, len: usize) -> Result<Cow<'_, [u8]>, StoreError> {
        check_range(offset, len, self.size())?;
        let start = offset as usize;
        Ok(Cow::Borrowed(&self.buf[start..start + len]))
    }

    fn seal(&mut self) -> Result<(), StoreError> {
        self.sealed = true;
        Ok(())
    }
}

/// File-backed store with a write buffer that is flushed at seal.
///
/// Reads that reach into the not-yet-flushed tail are served from the buffer,
/// so the logical byte sequence is always observable.
#[derive(Debug)]
pub struct DiskStore {
    path: PathBuf,
    file: File,
    flushed: u64,
    pending: Vec<u8>,
    writable: bool,
    sealed: bool,
}

impl DiskStore {
    /// Creates (or truncates) a file and returns an empty writable store.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(&path)?;
        Ok(Self {
            path,
            file,
            flushed: 0,
            pending: Vec::with_capacity(DISK_WRITE_BUFFER),
            writable: true,
            sealed: false,
        })
    }

    /// Opens an existing file read-only. The resulting store is sealed.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path)?;
        let size = file.metadata()?.len();
        Ok(Self {
            path,
            file,
            flushed: size,
            pending: Vec::new(),
            writable: false,
            sealed: true,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn flush_pending(&mut self) -> Result<(), StoreError> {
        if !self.pending.is_empty() {
            self.file.write_all_at(&self.pending, self.flushed)?;
            self.flushed += self.pending.len() as u64;
            self.pending.clear();
        }
        Ok(())
    }
}

impl ChunkedStore for DiskStore {
    fn size(&self) -> u64 {
        self.flushed + self.pending.len() as u64
    }

    fn is_writable(&self) -> bool {
        self.writable && !self.sealed
    }

    fn is_sealed(&self) -> bool {
        self.sealed
    }

    fn write(&mut self, bytes: &[u8]) -> Result<u64, StoreError> {
        if self.sealed {
            return Err(StoreError::Sealed);
        }
        if !self.writable {
            return Err(StoreError::NotWritable);
        }
        let offset = self.size();
        if self.pending.len() + bytes.len() > DISK_WRITE_BUFFER {
            self.flush_pending()?;
        }
        if bytes.len() >= DISK_WRITE_BUFFER {
            self.file.write_all_at(bytes, self.flushed)?;
            self.flushed += bytes.len() as u64;
        } else {
            self.pending.extend_from_slice(bytes);
        }
        Ok(offset)
    }

    fn read_at(&self, offset: u64, len: usize) -> Result<Cow<'_, [u8]>, StoreError> {
        check_range(offset, len, self.size())?;
        let mut out = vec![0u8; len];
        let end = offset + len as u64;
        // Portion already in the file.
        if offset < self.flushed {
            let file_end = end.min(self.flushed);
            let n = (file_end - offset) as usize;
            self.file.read_exact_at(&mut out[..n], offset)?;
        }
        // Portion still in the write buffer.
        if end > self.flushed {
            let from = offset.max(self.flushed);
            let dst = (from - offset) as usize;
            let src = (from - self.flushed) as usize;
            let n = (end - from) as usize;
            out[dst..].copy_from_slice(&self.pending[src..src + n]);
        }
        Ok(Cow::Owned(out))
    }

    fn seal(&mut self) -> Result<(), StoreError> {
        if self.sealed {
            return Ok(());
        }
        self.flush_pending()?;
        self.sealed = true;
        Ok(())
    }
}

/// Reads a whole byte stream (typically standard input) into a sealed
/// [`MemoryStore`].
pub fn load_from_input_stream<R: Read>(mut source: R) -> Result<MemoryStore, StoreError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    Ok(MemoryStore::from_bytes(buf))
}

/// Copies a sealed store's bytes into `sink`, returning the byte count.
pub fn dump_to<S, W>(store: &S, mut sink: W) -> Result<u64, StoreError>
where
    S: ChunkedStore + ?Sized,
    W: Write,
{
    if !store.is_sealed() {
        return Err(StoreError::NotSealed);
    }
    const STEP: u64 = 1 << 20;
    let size = store.size();
    let mut offset = 0;
    while offset < size {
        let n = STEP.min(size - offset);
        let bytes = store.read_at(offset, n as usize)?;
        sink.write_all(&bytes)?;
        offset += n;
    }
    sink.flush()?;
    Ok(size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stores() -> (tempfile::TempDir, Vec<Box<dyn ChunkedStore>>) {
        let dir = tempfile::tempdir().unwrap();
        let disk = DiskStore::create(dir.path().join("s.bin")).unwrap();
        (dir, vec![Box::new(MemoryStore::new()), Box::new(disk)])
    }

    #[test]
    fn write_returns_offsets() {
        let (_dir, stores) = stores();
        for mut s in stores {
            assert_eq!(s.write(&[1, 2, 3, 4, 5]).unwrap(), 0);
            assert_eq!(s.size(), 5);
            assert_eq!(s.write(&[6, 7, 8, 9]).unwrap(), 5);
            assert_eq!(s.size(), 9);
        }
    }

    #[test]
    fn two_writes_offsets() {
        let (_dir, stores) = stores();
        for mut s in stores {
            assert_eq!(s.write(b"abc").unwrap(), 0);
            assert_eq!(s.write(b"defg").unwrap(), 3);
            assert_eq!(&*s.read_at(0, 7).unwrap(), b"abcdefg");
        }
    }

    #[test]
    fn write_after_seal_fails() {
        let (_dir, stores) = stores();
        for mut s in stores {
            s.write(b"x").unwrap();
            s.seal().unwrap();
            assert!(matches!(s.write(b"y"), Err(StoreError::Sealed)));
            assert_eq!(s.size(), 1);
        }
    }

    #[test]
    fn read_past_end_is_range_error() {
        let (_dir, stores) = stores();
        for mut s in stores {
            s.write(b"hello").unwrap();
            let size = s.size();
            assert!(matches!(
                s.read_at(size, 1),
                Err(StoreError::OutOfRange { .. })
            ));
            assert_eq!(s.read_at(size, 0).unwrap().len(), 0);
            assert!(s.read_at(u64::MAX, 2).is_err());
        }
    }

    #[test]
    fn disk_reads_span_file_and_buffer() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = DiskStore::create(dir.path().join("span.bin")).unwrap();
        let big: Vec<u8> = (0..DISK_WRITE_BUFFER as u32 + 100)
            .map(|i| i as u8)
            .collect();
        s.write(&big[..DISK_WRITE_BUFFER - 10]).unwrap();
        s.write(&big[DISK_WRITE_BUFFER - 10..]).unwrap();
        assert_eq!(&*s.read_at(0, big.len()).unwrap(), &big[..]);
        assert_eq!(
            &*s.read_at(DISK_WRITE_BUFFER as u64 - 20, 40).unwrap(),
            &big[DISK_WRITE_BUFFER - 20..DISK_WRITE_BUFFER + 20]
        );
    }

    #[test]
    fn disk_seal_flushes_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        let mut s = DiskStore::create(&path).unwrap();
        s.write(b"persisted").unwrap();
        s.seal().unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"persisted");
        let reopened = DiskStore::open(&path).unwrap();
        assert!(reopened.is_sealed());
        assert!(!reopened.is_writable());
        assert_eq!(&*reopened.read_at(0, 9).unwrap(), b"persisted");
    }

    #[test]
    fn load_empty_stream() {
        let s = load_from_input_stream(io::empty()).unwrap();
        assert!(s.is_sealed());
        assert_eq!(s.size(), 0);
        let mut out = Vec::new();
        assert_eq!(dump_to(&s, &mut out).unwrap(), 0);
        assert!(out.is_empty());
    }

    #[test]
    fn dump_requires_seal() {
        let mut s = MemoryStore::new();
        s.write(b"abc").unwrap();
        assert!(matches!(
            dump_to(&s, io::sink()),
            Err(StoreError::NotSealed)
        ));
    }

    #[test]
    fn dump_of_load_is_identity() {
        let data: Vec<u8> = (0..3_000_000u32).map(|i| (i * 7 + 3) as u8).collect();
        let s = load_from_input_stream(&data[..]).unwrap();
        let mut out = Vec::new();
        assert_eq!(dump_to(&s, &mut out).unwrap(), data.len() as u64);
        assert_eq!(out, data);
    }
}
