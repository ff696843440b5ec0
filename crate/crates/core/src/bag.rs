//! The `.dbag` container: a header, a run of chunks holding encoded
//! [`MessageRecord`]s, and a trailer written when the bag is sealed.
//!
//! ```text
//! header   "DBAG" | version u32
//! chunk    byte_length u64 | record_count u32 | records...
//! record   topic_len u16 | topic | timestamp u64 | payload_len u32 | payload
//! trailer  "DEND" | total_records u64
//! ```
//!
//! All integers are little-endian. A bag without a trailer is an unsealed
//! (truncated) recording; it stays readable up to its last complete chunk.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::store::{ChunkedStore, StoreError};

pub const BAG_MAGIC: [u8; 4] = *b"DBAG";
pub const BAG_VERSION: u32 = 1;
pub const TRAILER_MAGIC: [u8; 4] = *b"DEND";

pub const HEADER_LEN: u64 = 8;
pub const CHUNK_HEADER_LEN: u64 = 12;
pub const TRAILER_LEN: u64 = 12;

pub const DEFAULT_CHUNK_TARGET_BYTES: usize = 4 * 1024 * 1024;

pub const MAX_TOPIC_LEN: usize = u16::MAX as usize;
pub const MAX_PAYLOAD_LEN: usize = u32::MAX as usize;

/// Fixed part of an encoded record: topic_len + timestamp + payload_len.
const RECORD_FIXED_LEN: usize = 2 + 8 + 4;

#[derive(Debug, Error)]
pub enum BagError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("store is not writable")]
    NotWritable,
    #[error("store already holds {0} bytes")]
    NotEmpty(u64),
    #[error("bag writer is sealed")]
    WriterSealed,
    #[error("not a bag: bad magic")]
    BadMagic,
    #[error("unsupported bag version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt chunk at offset {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// One timestamped, topic-tagged payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MessageRecord {
    pub topic: String,
    /// Nanoseconds.
    pub timestamp: u64,
    pub payload: Vec<u8>,
}

/// Checks the topic constraints shared by bag records and bus envelopes.
pub fn validate_topic(topic: &str) -> Result<(), BagError> {
    if topic.is_empty() {
        return Err(BagError::InvalidRecord("topic is empty".into()));
    }
    if topic.len() > MAX_TOPIC_LEN {
        return Err(BagError::InvalidRecord(format!(
            "topic is {} bytes, limit is {MAX_TOPIC_LEN}",
            topic.len()
        )));
    }
    if topic.as_bytes().contains(&0) {
        return Err(BagError::InvalidRecord("topic contains NUL".into()));
    }
    Ok(())
}

impl MessageRecord {
    pub fn new(topic: impl Into<String>, timestamp: u64, payload: impl Into<Vec<u8>>) -> Self {
        Self {
            topic: topic.into(),
            timestamp,
            payload: payload.into(),
        }
    }

    pub fn validate(&self) -> Result<(), BagError> {
        validate_topic(&self.topic)?;
        if self.payload.len() > MAX_PAYLOAD_LEN {
            return Err(BagError::InvalidRecord(format!(
                "payload is {} bytes, limit is {MAX_PAYLOAD_LEN}",
                self.payload.len()
            )));
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        RECORD_FIXED_LEN + self.topic.len() + self.payload.len()
    }

    /// Appends the wire encoding. The record must already be valid.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.reserve(self.encoded_len());
        self.encode_head_into(out);
        out.extend_from_slice(&self.payload);
    }

    /// Everything up to and including the payload length.
    fn encode_head_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&(self.topic.len() as u16).to_le_bytes());
        out.extend_from_slice(self.topic.as_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
    }

    pub fn encode(&self) -> Result<Vec<u8>, BagError> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.encoded_len());
        self.encode_into(&mut out);
        Ok(out)
    }

    /// Decodes one record from the front of `buf`, returning it and the
    /// number of bytes consumed.
    pub fn decode(buf: &[u8]) -> Result<(Self, usize), String> {
        let mut cur = Cursor { buf, pos: 0 };
        let topic_len = u16::from_le_bytes(cur.take_array("topic length")?) as usize;
        let topic_bytes = cur.take(topic_len, "topic")?;
        let topic = std::str::from_utf8(topic_bytes)
            .map_err(|_| "topic is not valid UTF-8".to_string())?
            .to_string();
        let timestamp = u64::from_le_bytes(cur.take_array("timestamp")?);
        let payload_len = u32::from_le_bytes(cur.take_array("payload length")?) as usize;
        let payload = cur.take(payload_len, "payload")?.to_vec();
        let record = Self {
            topic,
            timestamp,
            payload,
        };
        validate_topic(&record.topic).map_err(|e| e.to_string())?;
        Ok((record, cur.pos))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], String> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(format!(
                "{what} needs {n} bytes at block offset {}, {remaining} left",
                self.pos
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], String> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }
}

/// Aggregate facts about a bag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BagSummary {
    pub record_count: u64,
    pub topics: BTreeMap<String, u64>,
    /// Zero when the bag is empty.
    pub min_timestamp: u64,
    /// Zero when the bag is empty.
    pub max_timestamp: u64,
    pub byte_size: u64,
    pub chunk_count: u64,
    pub sealed: bool,
}

impl BagSummary {
    fn observe(&mut self, record: &MessageRecord) {
        if self.record_count == 0 {
            self.min_timestamp = record.timestamp;
            self.max_timestamp = record.timestamp;
        } else {
            self.min_timestamp = self.min_timestamp.min(record.timestamp);
            self.max_timestamp = self.max_timestamp.max(record.timestamp);
        }
        self.record_count += 1;
        *self.topics.entry(record.topic.clone()).or_default() += 1;
    }
}

impl fmt::Display for BagSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {}", self.record_count)?;
        writeln!(f, "chunks: {}", self.chunk_count)?;
        writeln!(f, "bytes: {}", self.byte_size)?;
        writeln!(f, "sealed: {}", if self.sealed { "yes" } else { "no" })?;
        writeln!(f, "start_ns: {}", self.min_timestamp)?;
        writeln!(f, "end_ns: {}", self.max_timestamp)?;
        writeln!(f, "topics: {}", self.topics.len())?;
        for (topic, count) in &self.topics {
            writeln!(f, "  {topic}: {count}")?;
        }
        Ok(())
    }
}

pub fn encode_header() -> [u8; 8] {
    let mut out = [0u8; 8];
    out[..4].copy_from_slice(&BAG_MAGIC);
    out[4..].copy_from_slice(&BAG_VERSION.to_le_bytes());
    out
}

pub fn encode_trailer(total_records: u64) -> [u8; 12] {
    let mut out = [0u8; 12];
    out[..4].copy_from_slice(&TRAILER_MAGIC);
    out[4..].copy_from_slice(&total_records.to_le_bytes());
    out
}

/// Writes records into a store, cutting a chunk whenever the buffered
/// encoded size reaches the chunk target.
#[derive(Debug)]
pub struct BagWriter<S: ChunkedStore> {
    store: S,
    chunk_target: usize,
    chunk: Vec<u8>,
    chunk_records: u32,
    summary: BagSummary,
    sealed: bool,
}

impl<S: ChunkedStore> BagWriter<S> {
    /// Writes the header into an empty, writable store.
    pub fn open(mut store: S, chunk_target_bytes: usize) -> Result<Self, BagError> {
        if chunk_target_bytes == 0 {
            return Err(BagError::InvalidArgument(
                "chunk_target_bytes must be positive".into(),
            ));
        }
        if !store.is_writable() {
            return Err(BagError::NotWritable);
        }
        if store.size() != 0 {
            return Err(BagError::NotEmpty(store.size()));
        }
        store.write(&encode_header())?;
        Ok(Self {
            store,
            chunk_target: chunk_target_bytes,
            chunk: Vec::new(),
            chunk_records: 0,
            summary: BagSummary::default(),
            sealed: false,
        })
    }

    pub fn append(&mut self, record: &MessageRecord) -> Result<(), BagError> {
        if self.sealed {
            return Err(BagError::WriterSealed);
        }
        record.validate()?;
        if self.chunk_records == 0 && record.encoded_len() >= self.chunk_target {
            // Fills a chunk on its own; skip staging the payload.
            let mut head = Vec::with_capacity(
                CHUNK_HEADER_LEN as usize + RECORD_FIXED_LEN + record.topic.len(),
            );
            head.extend_from_slice(&(record.encoded_len() as u64).to_le_bytes());
            head.extend_from_slice(&1u32.to_le_bytes());
            record.encode_head_into(&mut head);
            self.store.write(&head)?;
            self.store.write(&record.payload)?;
            self.summary.observe(record);
            self.summary.chunk_count += 1;
            return Ok(());
        }
        record.encode_into(&mut self.chunk);
        self.chunk_records += 1;
        self.summary.observe(record);
        if self.chunk.len() >= self.chunk_target || self.chunk_records == u32::MAX {
            self.flush_chunk()?;
        }
        Ok(())
    }

    fn flush_chunk(&mut self) -> Result<(), BagError> {
        if self.chunk_records == 0 {
            return Ok(());
        }
        let mut header = [0u8; CHUNK_HEADER_LEN as usize];
        header[..8].copy_from_slice(&(self.chunk.len() as u64).to_le_bytes());
        header[8..].copy_from_slice(&self.chunk_records.to_le_bytes());
        self.store.write(&header)?;
        self.store.write(&self.chunk)?;
        self.chunk.clear();
        self.chunk_records = 0;
        self.summary.chunk_count += 1;
        Ok(())
    }

    /// Records appended so far.
    pub fn record_count(&self) -> u64 {
        self.summary.record_count
    }

    /// Flushes the last chunk, writes the trailer and seals the store.
    pub fn seal(&mut self) -> Result<BagSummary, BagError> {
        if self.sealed {
            return Err(BagError::WriterSealed);
        }
        self.flush_chunk()?;
        self.store
            .write(&encode_trailer(self.summary.record_count))?;
        self.store.seal()?;
        self.sealed = true;
        self.summary.byte_size = self.store.size();
        self.summary.sealed = true;
        Ok(self.summary.clone())
    }

    pub fn is_sealed(&self) -> bool {
        self.sealed
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn into_store(self) -> S {
        self.store
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReadState {
    Chunks,
    Done,
    Failed,
}

/// Sequential record reader over any store.
pub struct BagReader<'a, S: ChunkedStore + ?Sized> {
    store: &'a S,
    size: u64,
    pos: u64,
    pending: VecDeque<MessageRecord>,
    records_read: u64,
    tail_is_trailer: bool,
    truncated: bool,
    state: ReadState,
}

impl<'a, S: ChunkedStore + ?Sized> BagReader<'a, S> {
    pub fn open(store: &'a S) -> Result<Self, BagError> {
        let size = store.size();
        if size < HEADER_LEN {
            return Err(BagError::BadMagic);
        }
        let header = store.read_at(0, HEADER_LEN as usize)?;
        if header[..4] != BAG_MAGIC {
            return Err(BagError::BadMagic);
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != BAG_VERSION {
            return Err(BagError::UnsupportedVersion(version));
        }
        let tail_is_trailer = size >= HEADER_LEN + TRAILER_LEN
            && store.read_at(size - TRAILER_LEN, 4)?[..] == TRAILER_MAGIC;
        Ok(Self {
            store,
            size,
            pos: HEADER_LEN,
            pending: VecDeque::new(),
            records_read: 0,
            tail_is_trailer,
            truncated: !tail_is_trailer,
            state: ReadState::Chunks,
        })
    }

    /// True when the bag has no valid trailer. Settled once the reader has
    /// reached the end; before that it reflects a peek at the file tail.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }

    pub fn records_read(&self) -> u64 {
        self.records_read
    }

    fn corrupt(&mut self, offset: u64, reason: impl Into<String>) -> BagError {
        self.state = ReadState::Failed;
        BagError::Corrupt {
            offset,
            reason: reason.into(),
        }
    }

    fn finish_truncated(&mut self) {
        self.truncated = true;
        self.state = ReadState::Done;
    }

    /// Loads the next chunk into `pending`, or moves to a terminal state.
    fn load_chunk(&mut self) -> Result<(), BagError> {
        let offset = self.pos;
        let remaining = self.size - offset;
        if remaining == 0 {
            if self.tail_is_trailer {
                return Err(self.corrupt(offset, "chunk ran into the trailer"));
            }
            self.finish_truncated();
            return Ok(());
        }
        if remaining == TRAILER_LEN {
            let bytes = self.store.read_at(offset, TRAILER_LEN as usize)?;
            if bytes[..4] == TRAILER_MAGIC {
                let total = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
                if total != self.records_read {
                    let read = self.records_read;
                    return Err(self.corrupt(
                        offset,
                        format!("trailer counts {total} records, chunks hold {read}"),
                    ));
                }
                self.truncated = false;
                self.state = ReadState::Done;
                return Ok(());
            }
        }
        if remaining < CHUNK_HEADER_LEN {
            if self.tail_is_trailer {
                return Err(self.corrupt(offset, "incomplete chunk header"));
            }
            self.finish_truncated();
            return Ok(());
        }
        let header = self.store.read_at(offset, CHUNK_HEADER_LEN as usize)?;
        let byte_length = u64::from_le_bytes(header[..8].try_into().unwrap());
        let record_count = u32::from_le_bytes(header[8..12].try_into().unwrap());
        let available = remaining - CHUNK_HEADER_LEN;
        // In a sealed bag the trailer must still follow the chunk.
        let limit = if self.tail_is_trailer {
            available.saturating_sub(TRAILER_LEN)
        } else {
            available
        };
        if byte_length > limit {
            if self.tail_is_trailer {
                return Err(self.corrupt(
                    offset,
                    format!("chunk declares {byte_length} bytes, only {limit} available"),
                ));
            }
            self.finish_truncated();
            return Ok(());
        }
        let block = self
            .store
            .read_at(offset + CHUNK_HEADER_LEN, byte_length as usize)?;
        let mut consumed = 0usize;
        let mut records = VecDeque::new();
        for i in 0..record_count {
            match MessageRecord::decode(&block[consumed..]) {
                Ok((record, n)) => {
                    consumed += n;
                    records.push_back(record);
                }
                Err(reason) => {
                    drop(block);
                    return Err(
                        self.corrupt(offset, format!("record {i} of {record_count}: {reason}"))
                    );
                }
            }
        }
        if consumed as u64 != byte_length {
            drop(block);
            return Err(self.corrupt(
                offset,
                format!(
                    "{record_count} records use {consumed} bytes, chunk declares {byte_length}"
                ),
            ));
        }
        self.pos = offset + CHUNK_HEADER_LEN + byte_length;
        self.pending = records;
        Ok(())
    }

    /// Next record in stored order, or `None` at end of bag.
    pub fn next_record(&mut self) -> Result<Option<MessageRecord>, BagError> {
        loop {
            if let Some(record) = self.pending.pop_front() {
                self.records_read += 1;
                return Ok(Some(record));
            }
            match self.state {
                ReadState::Chunks => self.load_chunk()?,
                ReadState::Done | ReadState::Failed => return Ok(None),
            }
        }
    }
}

impl<S: ChunkedStore + ?Sized> Iterator for BagReader<'_, S> {
    type Item = Result<MessageRecord, BagError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record().transpose()
    }
}

/// Full pass over a bag, collecting a [`BagSummary`].
pub fn scan_summary<S: ChunkedStore + ?Sized>(store: &S) -> Result<BagSummary, BagError> {
    let mut reader = BagReader::open(store)?;
    let mut summary = BagSummary::default();
    let mut last_pos = reader.pos;
    while let Some(record) = reader.next_record()? {
        if reader.pos != last_pos {
            summary.chunk_count += 1;
            last_pos = reader.pos;
        }
        summary.observe(&record);
    }
    summary.byte_size = store.size();
    summary.sealed = !reader.is_truncated();
    Ok(summary)
}

/// Reads every record of a bag into memory.
pub fn read_all<S: ChunkedStore + ?Sized>(store: &S) -> Result<Vec<MessageRecord>, BagError> {
    BagReader::open(store)?.collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::MemoryStore;

    fn rec(topic: &str, ts: u64, payload: &[u8]) -> MessageRecord {
        MessageRecord::new(topic, ts, payload.to_vec())
    }

    fn write_bag(records: &[MessageRecord], target: usize) -> MemoryStore {
        let mut w = BagWriter::open(MemoryStore::new(), target).unwrap();
        for r in records {
            w.append(r).unwrap();
        }
        w.seal().unwrap();
        w.into_store()
    }

    #[test]
    fn open_writes_header_only() {
        let w = BagWriter::open(MemoryStore::new(), 1024).unwrap();
        assert_eq!(w.store().as_bytes(), &[0x44, 0x42, 0x41, 0x47, 1, 0, 0, 0]);
    }

    #[test]
    fn zero_chunk_target_rejected() {
        assert!(matches!(
            BagWriter::open(MemoryStore::new(), 0),
            Err(BagError::InvalidArgument(_))
        ));
    }

    #[test]
    fn non_empty_store_rejected() {
        let mut store = MemoryStore::new();
        store.write(b"junk").unwrap();
        assert!(matches!(
            BagWriter::open(store, 16),
            Err(BagError::NotEmpty(4))
        ));
        let sealed = MemoryStore::from_bytes(Vec::new());
        assert!(matches!(
            BagWriter::open(sealed, 16),
            Err(BagError::NotWritable)
        ));
    }

    #[test]
    fn three_small_records_share_one_chunk() {
        let records: Vec<_> = (0..3).map(|i| rec("/t", i, &[i as u8; 10])).collect();
        let store = write_bag(&records, 1 << 20);
        let summary = scan_summary(&store).unwrap();
        assert_eq!(summary.chunk_count, 1);
        assert_eq!(summary.record_count, 3);
        assert_eq!(read_all(&store).unwrap(), records);
    }

    #[test]
    fn empty_payload_is_legal() {
        let store = write_bag(&[rec("a", 1, &[])], 16);
        let bytes = store.as_bytes();
        // header(8) + chunk header(12) + topic_len(2) + "a" + ts(8) + payload_len(4)
        assert_eq!(&bytes[20 + 2 + 1 + 8..20 + 2 + 1 + 8 + 4], &[0, 0, 0, 0]);
        assert_eq!(read_all(&store).unwrap()[0].payload, Vec::<u8>::new());
    }

    #[test]
    fn oversize_topic_rejected() {
        let mut w = BagWriter::open(MemoryStore::new(), 16).unwrap();
        let topic = "x".repeat(65536);
        assert!(matches!(
            w.append(&rec(&topic, 0, b"")),
            Err(BagError::InvalidRecord(_))
        ));
        assert!(w.append(&rec(&"x".repeat(65535), 0, b"")).is_ok());
        assert!(w.append(&rec("", 0, b"")).is_err());
        assert!(w.append(&rec("a\0b", 0, b"")).is_err());
    }

    #[test]
    fn seal_empty_bag_is_twenty_bytes() {
        let mut w = BagWriter::open(MemoryStore::new(), 16).unwrap();
        let summary = w.seal().unwrap();
        assert_eq!(summary.record_count, 0);
        assert_eq!(summary.byte_size, 20);
        let expected: Vec<u8> = [
            &b"DBAG"[..],
            &[1, 0, 0, 0],
            &b"DEND"[..],
            &[0, 0, 0, 0, 0, 0, 0, 0],
        ]
        .concat();
        assert_eq!(w.store().as_bytes(), &expected[..]);
    }

    #[test]
    fn double_seal_and_append_after_seal_fail() {
        let mut w = BagWriter::open(MemoryStore::new(), 16).unwrap();
        w.append(&rec("a", 0, b"1")).unwrap();
        assert_eq!(w.seal().unwrap().record_count, 1);
        assert!(matches!(w.seal(), Err(BagError::WriterSealed)));
        assert!(matches!(
            w.append(&rec("a", 0, b"1")),
            Err(BagError::WriterSealed)
        ));
    }

    #[test]
    fn trailer_counts_all_records() {
        let records: Vec<_> = (0..17).map(|i| rec("t", i, b"abc")).collect();
        let store = write_bag(&records, 20);
        let bytes = store.as_bytes();
        let tail = &bytes[bytes.len() - 12..];
        assert_eq!(&tail[..4], b"DEND");
        assert_eq!(u64::from_le_bytes(tail[4..].try_into().unwrap()), 17);
    }

    #[test]
    fn bad_magic() {
        let store = MemoryStore::from_bytes(vec![0; 32]);
        assert!(matches!(BagReader::open(&store), Err(BagError::BadMagic)));
        let short = MemoryStore::from_bytes(b"DBA".to_vec());
        assert!(matches!(BagReader::open(&short), Err(BagError::BadMagic)));
    }

    #[test]
    fn unsupported_version() {
        let mut bytes = encode_header().to_vec();
        bytes[4] = 2;
        bytes.extend_from_slice(&encode_trailer(0));
        let store = MemoryStore::from_bytes(bytes);
        assert!(matches!(
            BagReader::open(&store),
            Err(BagError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn truncated_bag_reads_complete_chunks() {
        let records: Vec<_> = (0..3).map(|i| rec("t", i, &[7; 10])).collect();
        let store = write_bag(&records, 1 << 20);
        let mut bytes = store.into_bytes();
        bytes.truncate(bytes.len() - TRAILER_LEN as usize);
        let cut = MemoryStore::from_bytes(bytes.clone());
        let mut reader = BagReader::open(&cut).unwrap();
        let got: Vec<_> = reader.by_ref().map(Result::unwrap).collect();
        assert_eq!(got, records);
        assert!(reader.is_truncated());

        // Cutting into the only chunk leaves nothing readable.
        bytes.truncate(bytes.len() - 5);
        let cut = MemoryStore::from_bytes(bytes);
        let mut reader = BagReader::open(&cut).unwrap();
        assert!(reader.next_record().unwrap().is_none());
        assert!(reader.is_truncated());
    }

    #[test]
    fn empty_sealed_bag_ends_immediately() {
        let store = write_bag(&[], 16);
        let mut reader = BagReader::open(&store).unwrap();
        assert!(reader.next_record().unwrap().is_none());
        assert!(reader.next_record().unwrap().is_none());
        assert!(!reader.is_truncated());
    }

    fn chunk(records: &[MessageRecord]) -> Vec<u8> {
        let mut block = Vec::new();
        for r in records {
            r.encode_into(&mut block);
        }
        let mut out = (block.len() as u64).to_le_bytes().to_vec();
        out.extend_from_slice(&(records.len() as u32).to_le_bytes());
        out.extend_from_slice(&block);
        out
    }

    #[test]
    fn hand_built_two_chunk_bag() {
        let a = rec("a", 1, b"x");
        let b = rec("b", 2, b"yy");
        let c = rec("a", 3, b"");
        let mut bytes = encode_header().to_vec();
        bytes.extend(chunk(&[a.clone(), b.clone()]));
        bytes.extend(chunk(std::slice::from_ref(&c)));
        bytes.extend_from_slice(&encode_trailer(3));
        let store = MemoryStore::from_bytes(bytes);
        assert_eq!(read_all(&store).unwrap(), vec![a, b, c]);
        assert_eq!(scan_summary(&store).unwrap().chunk_count, 2);
    }

    #[test]
    fn oversized_records_get_their_own_chunks() {
        let small = rec("s", 1, b"ab");
        let big = rec("b", 2, &[7; 40]);
        let mut expected = encode_header().to_vec();
        // A staged record shares its chunk with the big one that follows;
        // the second big record starts on an empty chunk and is written
        // straight through.
        expected.extend(chunk(&[small.clone(), big.clone()]));
        expected.extend(chunk(std::slice::from_ref(&big)));
        expected.extend(chunk(std::slice::from_ref(&small)));
        expected.extend_from_slice(&encode_trailer(4));
        let store = write_bag(
            &[small.clone(), big.clone(), big.clone(), small.clone()],
            20,
        );
        assert_eq!(store.as_bytes(), &expected[..]);
        assert_eq!(scan_summary(&store).unwrap().chunk_count, 3);
    }

    #[test]
    fn record_count_mismatch_is_corruption() {
        let a = rec("a", 1, b"x");
        let mut c = chunk(&[a]);
        c[8] = 2; // declares 2 records, holds 1
        let mut bytes = encode_header().to_vec();
        bytes.extend(c);
        bytes.extend_from_slice(&encode_trailer(2));
        let store = MemoryStore::from_bytes(bytes);
        let mut reader = BagReader::open(&store).unwrap();
        match reader.next_record() {
            Err(BagError::Corrupt { offset, .. }) => assert_eq!(offset, HEADER_LEN),
            other => panic!("expected corruption, got {other:?}"),
        }
        assert!(reader.next_record().unwrap().is_none());
    }

    #[test]
    fn trailer_total_mismatch_is_corruption() {
        let mut bytes = encode_header().to_vec();
        bytes.extend(chunk(&[rec("a", 1, b"x")]));
        bytes.extend_from_slice(&encode_trailer(5));
        let store = MemoryStore::from_bytes(bytes);
        assert!(matches!(read_all(&store), Err(BagError::Corrupt { .. })));
    }

    #[test]
    fn summary_counts_topics_and_times() {
        let store = write_bag(
            &[rec("a", 10, b""), rec("a", 20, b""), rec("b", 30, b"")],
            1024,
        );
        let s = scan_summary(&store).unwrap();
        assert_eq!(s.record_count, 3);
        assert_eq!(s.topics.get("a"), Some(&2));
        assert_eq!(s.topics.get("b"), Some(&1));
        assert_eq!((s.min_timestamp, s.max_timestamp), (10, 30));
        assert_eq!(s.record_count, s.topics.values().sum::<u64>());
        assert!(s.sealed);
    }

    #[test]
    fn empty_summary_is_zero() {
        let store = write_bag(&[], 16);
        let s = scan_summary(&store).unwrap();
        assert_eq!(s.record_count, 0);
        assert!(s.topics.is_empty());
        assert_eq!((s.min_timestamp, s.max_timestamp, s.chunk_count), (0, 0, 0));
        assert_eq!(s.byte_size, 20);
    }

    #[test]
    fn writer_summary_matches_scan() {
        let records: Vec<_> = (0..50)
            .map(|i| rec(if i % 3 == 0 { "x" } else { "y" }, 1000 - i, &[0; 33]))
            .collect();
        let mut w = BagWriter::open(MemoryStore::new(), 200).unwrap();
        for r in &records {
            w.append(r).unwrap();
        }
        let summary = w.seal().unwrap();
        assert_eq!(summary, scan_summary(w.store()).unwrap());
    }
}
