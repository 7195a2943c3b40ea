//! Access-pattern templates: what the server touches to handle one request.
//!
//! Every request runs the network receive path, its handler body and the
//! transmit path. Handler bodies are built from data references; one
//! instruction fetch from the handler's code window follows each data
//! reference, walking the window sequentially and wrapping.

use rand::Rng;

use super::footprint::{FootprintMap, RegionKind, LINE, STREAM_BUFFER_BYTES};
use crate::cache::MemoryRef;

const KB: u64 = 1024;

/// Code windows as (first line, line count) inside the code region.
const NET_RX: (u64, u64) = (0, 24);
const NET_TX: (u64, u64) = (64, 24);
const IDLE: (u64, u64) = (256, 128);
const COMPUTE: (u64, u64) = (400, 48);
const WEB: (u64, u64) = (512, 384);
const DB: (u64, u64) = (1024, 768);
const MAIL: (u64, u64) = (1792, 512);
const FILE: (u64, u64) = (2304, 512);
const STREAM: (u64, u64) = (2816, 384);
const APP_BASE: u64 = 3200;
const APP_SPAN: u64 = 640;
const APP_LEN: u64 = 256;

/// Byte offsets of the heap areas. Large areas start at odd page offsets.
const HEAP_REQ: u64 = 0;
const HEAP_TABLES: u64 = 64 * KB;
const HEAP_SOCK: u64 = 556 * KB;
const HEAP_SOCK_BYTES: u64 = 1024 * KB;
const HEAP_EDEN: u64 = 1636 * KB;
const HEAP_EDEN_BYTES: u64 = 1920 * KB;
const HEAP_OBJ: u64 = 3580 * KB;
const HEAP_OBJ_BYTES: u64 = 512 * KB;
const HEAP_MODEL: u64 = 556 * KB;
pub(crate) const COMPUTE_MODEL_MAX: u64 = 3 * 1024 * KB;

const MAIL_SLOT_BYTES: u64 = 8 * KB;
const MAILBOX_BYTES: u64 = 64 * KB;
/// Rows are packed back to back; the rest of each record's slot in the
/// table region is page overhead that queries never touch.
pub(crate) const DB_ROW_BYTES: u64 = 192;
const DB_ROW_LINES: u64 = DB_ROW_BYTES / LINE;

pub const NIC_REFS_PER_REQUEST: usize = 4;
pub const FILE_METADATA_REFS: usize = 8;
pub const IDLE_TICK_FETCHES: usize = IDLE.1 as usize;

/// Handler template and its parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Template {
    StaticPage {
        page: u64,
        page_bytes: u64,
        buffer: u64,
    },
    DbTransaction {
        point_queries: u64,
        range_scans: u64,
        writes: u64,
        chase_depth: u64,
        record_touches: u64,
        scan_rows: u64,
        records: u64,
    },
    MailConnect {
        session: u64,
    },
    MailEnvelope {
        session: u64,
        recipient: u64,
    },
    MailData {
        session: u64,
        recipient: u64,
        message: u64,
        bytes: u64,
    },
    MailQuit {
        session: u64,
    },
    FileWrite {
        file: u64,
        bytes: u64,
    },
    FileRead {
        file: u64,
        bytes: u64,
    },
    StreamSetup {
        stream: u64,
    },
    StreamChunk {
        stream: u64,
        media: u64,
        media_bytes: u64,
        offset: u64,
        bytes: u64,
    },
    StreamTeardown {
        stream: u64,
    },
    Servlet {
        url: u64,
        sequence: u64,
        buffer: u64,
    },
    Classify {
        instance: u64,
        support_vectors: u64,
        features: u64,
    },
    IdleTick,
}

/// One client request as it travels to the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Request {
    pub id: u64,
    pub lane: usize,
    pub op: &'static str,
    /// Client-to-server bytes.
    pub payload_bytes: u64,
    /// Server-to-client bytes.
    pub response_bytes: u64,
    pub template: Template,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Expansion {
    pub refs: Vec<MemoryRef>,
    pub instructions: u64,
}

struct TraceBuilder<'a> {
    fp: &'a FootprintMap,
    refs: Vec<MemoryRef>,
    window: (u64, u64),
    cursor: u64,
}

impl<'a> TraceBuilder<'a> {
    fn new(fp: &'a FootprintMap, window: (u64, u64)) -> Self {
        Self {
            fp,
            refs: Vec::new(),
            window,
            cursor: 0,
        }
    }

    fn fetch_burst(&mut self, (start, len): (u64, u64)) {
        let code = self.fp.region(RegionKind::Code);
        self.refs
            .extend((start..start + len).map(|l| MemoryRef::fetch(code.line(l))));
    }

    fn data(&mut self, r: MemoryRef) {
        self.refs.push(r);
        let code = self.fp.region(RegionKind::Code);
        let (start, len) = self.window;
        self.refs
            .push(MemoryRef::fetch(code.line(start + self.cursor % len)));
        self.cursor += 1;
    }

    fn read(&mut self, kind: RegionKind, off: u64) {
        let a = self.fp.region(kind).at(off);
        self.data(MemoryRef::read(a));
    }

    fn write(&mut self, kind: RegionKind, off: u64) {
        let a = self.fp.region(kind).at(off);
        self.data(MemoryRef::write(a));
    }

    fn heap_read(&mut self, off: u64) {
        self.read(RegionKind::Heap, off);
    }

    fn heap_write(&mut self, off: u64) {
        self.write(RegionKind::Heap, off);
    }

    fn nic(&mut self, slot: u64, first_write: bool) {
        let ring = self.fp.region(RegionKind::NicRing);
        self.refs
            .push(MemoryRef::uncached(ring.line(2 * slot), first_write));
        self.refs
            .push(MemoryRef::uncached(ring.line(2 * slot + 1), !first_write));
    }

    fn finish(self, alpha: u64) -> Expansion {
        let instructions = alpha * self.refs.len() as u64;
        Expansion {
            refs: self.refs,
            instructions,
        }
    }
}

fn lines(bytes: u64) -> u64 {
    bytes.div_ceil(LINE)
}

/// Expand `request` into the server's memory references.
///
/// Output is a pure function of `(request, footprint, rng state)`. The
/// instruction estimate is `alpha` per emitted reference.
pub fn expand_request<R: Rng + ?Sized>(
    request: &Request,
    fp: &FootprintMap,
    rng: &mut R,
    alpha: u64,
) -> Expansion {
    let window = match &request.template {
        Template::StaticPage { .. } => WEB,
        Template::DbTransaction { .. } => DB,
        Template::MailConnect { .. }
        | Template::MailEnvelope { .. }
        | Template::MailData { .. }
        | Template::MailQuit { .. } => MAIL,
        Template::FileWrite { .. } | Template::FileRead { .. } => FILE,
        Template::StreamSetup { .. }
        | Template::StreamChunk { .. }
        | Template::StreamTeardown { .. } => STREAM,
        Template::Servlet { url, .. } => (APP_BASE + (url * 80) % APP_SPAN, APP_LEN),
        Template::Classify { .. } => COMPUTE,
        Template::IdleTick => return expand_idle_tick(fp, alpha),
    };
    let mut b = TraceBuilder::new(fp, window);
    b.fetch_burst(NET_RX);
    b.nic(request.id, false);
    body(&mut b, &request.template, rng);
    b.fetch_burst(NET_TX);
    b.nic(request.id + 1, true);
    b.finish(alpha)
}

/// One timer tick of an otherwise idle server: instruction fetches only.
pub fn expand_idle_tick(fp: &FootprintMap, alpha: u64) -> Expansion {
    let mut b = TraceBuilder::new(fp, IDLE);
    b.fetch_burst(IDLE);
    b.finish(alpha)
}

fn body<R: Rng + ?Sized>(b: &mut TraceBuilder<'_>, t: &Template, rng: &mut R) {
    use RegionKind::*;
    match *t {
        Template::StaticPage {
            page,
            page_bytes,
            buffer,
        } => {
            let slot = buffer % 16;
            for i in 0..2 {
                b.heap_read(HEAP_REQ + slot * 4 * KB + i * LINE);
            }
            // module hooks, mime and config lookups
            for _ in 0..32 {
                let off = rng.random_range(0..256 * KB);
                b.heap_read(HEAP_TABLES + off);
            }
            for i in 0..4 {
                b.heap_read(HEAP_TABLES + page * LINE * 4 + i * LINE);
            }
            let src = page * page_bytes;
            let dst = HEAP_SOCK + (buffer * page_bytes) % HEAP_SOCK_BYTES;
            for i in 0..lines(page_bytes) {
                b.read(FileCache, src + i * LINE);
                b.heap_write(dst + i * LINE);
            }
        }
        Template::DbTransaction {
            point_queries,
            range_scans,
            writes,
            chase_depth,
            record_touches,
            scan_rows,
            records,
        } => {
            let index_lines = b.fp.region(DbIndex).lines();
            let mut log = rng.random_range(0..64 * KB);
            let query = |b: &mut TraceBuilder<'_>, rng: &mut R| {
                for i in 0..8 {
                    b.heap_read(HEAP_REQ + i * LINE);
                }
                // root, then one node per level below it
                let mut node = 0;
                for level in 0..chase_depth {
                    b.read(DbIndex, node * LINE);
                    let span = (index_lines >> (level + 1)).max(1);
                    node = (node + 1 + rng.random_range(0..span)) % index_lines;
                }
            };
            let touch_record = |b: &mut TraceBuilder<'_>, rng: &mut R, write: bool| {
                let mut record = rng.random_range(0..records);
                for i in 0..record_touches {
                    if i > 0 && i % DB_ROW_LINES == 0 {
                        record = rng.random_range(0..records);
                    }
                    let off = record * DB_ROW_BYTES + (i % DB_ROW_LINES) * LINE;
                    if write {
                        b.write(DbTable, off);
                    } else {
                        b.read(DbTable, off);
                    }
                }
            };
            for _ in 0..point_queries {
                query(b, rng);
                touch_record(b, rng, false);
            }
            for _ in 0..range_scans {
                query(b, rng);
                let start = rng.random_range(0..records);
                for row in 0..scan_rows {
                    let r = (start + row) % records;
                    for l in 0..DB_ROW_LINES {
                        b.read(DbTable, r * DB_ROW_BYTES + l * LINE);
                    }
                    b.heap_write(HEAP_SOCK + row * LINE);
                }
            }
            for _ in 0..writes {
                query(b, rng);
                touch_record(b, rng, true);
                b.heap_write(HEAP_TABLES + 128 * KB + log);
                log = (log + LINE) % (64 * KB);
            }
        }
        Template::MailConnect { session } => {
            for i in 0..16 {
                b.heap_write(HEAP_REQ + (session % 16) * 4 * KB + i * LINE);
            }
            for i in 0..4 {
                b.heap_read(HEAP_TABLES + i * LINE);
            }
        }
        Template::MailEnvelope { session, recipient } => {
            for i in 0..8 {
                b.heap_read(HEAP_REQ + (session % 16) * 4 * KB + i * LINE);
            }
            for i in 0..2 {
                b.heap_read(HEAP_TABLES + 4 * KB + recipient * 2 * LINE + i * LINE);
            }
            for i in 0..4 {
                b.write(MailQueue, (session % 128) * MAIL_SLOT_BYTES + i * LINE);
            }
        }
        Template::MailData {
            session,
            recipient,
            message,
            bytes,
        } => {
            let slot = (session % 128) * MAIL_SLOT_BYTES + 4 * LINE;
            let n = lines(bytes);
            for i in 0..n {
                b.write(MailQueue, slot + i * LINE);
            }
            // local delivery: queue file appended to the recipient's mailbox
            let mailbox = recipient * MAILBOX_BYTES;
            let append = (message * 2 * KB) % MAILBOX_BYTES;
            for i in 0..n {
                b.read(MailQueue, slot + i * LINE);
                b.write(FileCache, mailbox + (append + i * LINE) % MAILBOX_BYTES);
            }
            for i in 0..8 {
                b.heap_write(HEAP_TABLES + 192 * KB + ((message * 8 + i) * LINE) % (64 * KB));
            }
        }
        Template::MailQuit { session } => {
            for i in 0..8 {
                b.heap_write(HEAP_REQ + (session % 16) * 4 * KB + i * LINE);
            }
        }
        Template::FileWrite { file, bytes } | Template::FileRead { file, bytes } => {
            let write = matches!(t, Template::FileWrite { .. });
            file_metadata(b, file);
            let base = file * bytes;
            for i in 0..lines(bytes) {
                if write {
                    b.write(FileCache, base + i * LINE);
                } else {
                    b.read(FileCache, base + i * LINE);
                }
            }
        }
        Template::StreamSetup { stream } => {
            for i in 0..16 {
                b.heap_read(HEAP_REQ + (stream % 16) * 4 * KB + i * LINE);
                b.heap_write(HEAP_TABLES + 32 * KB + (stream * 16 + i) * LINE);
            }
        }
        Template::StreamChunk {
            stream,
            media,
            media_bytes,
            offset,
            bytes,
        } => {
            let ring = STREAM_BUFFER_BYTES;
            let src = media * media_bytes;
            let dst = stream * ring;
            for i in 0..lines(bytes) {
                let off = offset + i * LINE;
                b.read(FileCache, src + off % media_bytes);
                b.write(StreamBuffers, dst + off % ring);
            }
            for i in 0..4 {
                b.heap_write(HEAP_TABLES + 32 * KB + (stream * 16 + i) * LINE);
            }
        }
        Template::StreamTeardown { stream } => {
            for i in 0..8 {
                b.heap_write(HEAP_TABLES + 32 * KB + (stream * 16 + i) * LINE);
            }
        }
        Template::Servlet {
            url,
            sequence,
            buffer,
        } => {
            for i in 0..8 {
                b.heap_read(HEAP_TABLES + (url * 8 + i) * LINE);
            }
            let arena = url * 32 * KB;
            let arena_bytes = 64 * KB * (1 + url % 4);
            let eden = sequence * 64 * KB;
            for i in 0..512 {
                let obj = rng.random_range(0..arena_bytes);
                b.heap_read(HEAP_OBJ + (arena + obj) % HEAP_OBJ_BYTES);
                for j in 0..2 {
                    b.heap_write(HEAP_EDEN + (eden + (2 * i + j) * LINE) % HEAP_EDEN_BYTES);
                }
            }
            let out = HEAP_SOCK + (buffer * 4 * KB) % HEAP_SOCK_BYTES;
            for i in 0..64 {
                b.heap_write(out + i * LINE);
            }
        }
        Template::Classify {
            instance,
            support_vectors,
            features,
        } => {
            let vec_lines = lines(features * 4);
            let inst = HEAP_TABLES + (instance % 16) * vec_lines * LINE;
            for sv in 0..support_vectors {
                for l in 0..vec_lines {
                    b.heap_read(HEAP_MODEL + (sv * vec_lines + l) * LINE);
                    b.heap_read(inst + l * LINE);
                }
            }
            b.heap_write(HEAP_TABLES + 128 * KB + (instance % 1024) * LINE);
        }
        Template::IdleTick => unreachable!("handled by expand_idle_tick"),
    }
}

fn file_metadata(b: &mut TraceBuilder<'_>, file: u64) {
    for i in 0..4 {
        b.heap_read(HEAP_TABLES + (file * 4 + i) * LINE);
    }
    for i in 0..2 {
        b.heap_write(HEAP_REQ + 32 * KB + i * LINE);
    }
    for i in 0..2 {
        b.heap_write(HEAP_TABLES + 96 * KB + (file * 2 + i) * LINE);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workloads::{make_workload, Benchmark};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn fp(b: Benchmark) -> FootprintMap {
        FootprintMap::for_spec(&make_workload(b, &BTreeMap::new(), 1).unwrap()).unwrap()
    }

    fn req(template: Template) -> Request {
        Request {
            id: 3,
            lane: 0,
            op: "test",
            payload_bytes: 0,
            response_bytes: 0,
            template,
        }
    }

    fn data(e: &Expansion) -> Vec<MemoryRef> {
        e.refs
            .iter()
            .filter(|r| !r.is_instruction && r.is_cacheable)
            .copied()
            .collect()
    }

    #[test]
    fn file_write_is_sequential_lines() {
        let m = fp(Benchmark::FileWrite);
        let r = req(Template::FileWrite {
            file: 2,
            bytes: 64 * KB,
        });
        let e = expand_request(&r, &m, &mut ChaCha8Rng::seed_from_u64(1), 4);
        let fc = m.region(RegionKind::FileCache);
        let file_refs: Vec<_> = e.refs.iter().filter(|r| fc.contains(r.address)).collect();
        assert_eq!(file_refs.len(), 65536 / 64);
        assert!(file_refs.iter().all(|r| r.is_write));
        for (i, r) in file_refs.iter().enumerate() {
            assert_eq!(r.address, fc.base + 2 * 64 * KB + i as u64 * 64);
        }
        let d = data(&e);
        assert_eq!(d.len(), 1024 + FILE_METADATA_REFS);
        let nic = e.refs.iter().filter(|r| !r.is_cacheable).count();
        assert_eq!(nic, NIC_REFS_PER_REQUEST);
        assert_eq!(e.instructions, 4 * e.refs.len() as u64);
    }

    #[test]
    fn idle_tick_is_code_only() {
        let m = fp(Benchmark::Idle);
        let e = expand_idle_tick(&m, 4);
        assert_eq!(e.refs.len(), IDLE_TICK_FETCHES);
        assert!(e.refs.iter().all(|r| r.is_instruction));
        let code = m.region(RegionKind::Code);
        assert!(e.refs.iter().all(|r| code.contains(r.address)));
        let via_request = expand_request(
            &req(Template::IdleTick),
            &m,
            &mut ChaCha8Rng::seed_from_u64(1),
            4,
        );
        assert_eq!(via_request, e);
    }

    #[test]
    fn db_chase_then_touches() {
        let m = fp(Benchmark::Db);
        let r = req(Template::DbTransaction {
            point_queries: 1,
            range_scans: 0,
            writes: 0,
            chase_depth: 3,
            record_touches: 4,
            scan_rows: 0,
            records: 100,
        });
        for seed in 0..50 {
            let e = expand_request(&r, &m, &mut ChaCha8Rng::seed_from_u64(seed), 4);
            let idx = m.region(RegionKind::DbIndex);
            let tbl = m.region(RegionKind::DbTable);
            let db: Vec<_> = data(&e)
                .into_iter()
                .filter(|r| idx.contains(r.address) || tbl.contains(r.address))
                .collect();
            assert_eq!(db.len(), 7);
            assert!(db[..3].iter().all(|r| idx.contains(r.address)));
            assert!(db[3..].iter().all(|r| tbl.contains(r.address) && !r.is_write));
            assert_eq!(db[0].address, idx.base);
            // three touches walk one row, the fourth starts another
            let rec = (db[3].address - tbl.base) / DB_ROW_BYTES;
            assert!(rec < 100);
            for (i, r) in db[3..6].iter().enumerate() {
                assert_eq!(r.address, tbl.base + rec * DB_ROW_BYTES + i as u64 * 64);
            }
            assert_eq!((db[6].address - tbl.base) % DB_ROW_BYTES, 0);
            assert!((db[6].address - tbl.base) / DB_ROW_BYTES < 100);
        }
    }

    #[test]
    fn expansion_is_deterministic() {
        let m = fp(Benchmark::App);
        let r = req(Template::Servlet {
            url: 3,
            sequence: 9,
            buffer: 1,
        });
        let a = expand_request(&r, &m, &mut ChaCha8Rng::seed_from_u64(5), 4);
        let b = expand_request(&r, &m, &mut ChaCha8Rng::seed_from_u64(5), 4);
        assert_eq!(a, b);
    }

    #[test]
    fn every_template_stays_in_its_regions() {
        let templates = [
            (Benchmark::Web, Template::StaticPage { page: 63, page_bytes: 16 * KB, buffer: 9 }),
            (Benchmark::Db, Template::DbTransaction { point_queries: 10, range_scans: 4, writes: 4, chase_depth: 3, record_touches: 8, scan_rows: 100, records: 100 }),
            (Benchmark::Mail, Template::MailConnect { session: 200 }),
            (Benchmark::Mail, Template::MailEnvelope { session: 200, recipient: 19 }),
            (Benchmark::Mail, Template::MailData { session: 200, recipient: 19, message: 77, bytes: 1024 }),
            (Benchmark::Mail, Template::MailQuit { session: 200 }),
            (Benchmark::FileRead, Template::FileRead { file: 14, bytes: 64 * KB }),
            (Benchmark::Streaming, Template::StreamSetup { stream: 2 }),
            (Benchmark::Streaming, Template::StreamChunk { stream: 2, media: 2, media_bytes: 5120 * KB, offset: 5116 * KB, bytes: 4 * KB }),
            (Benchmark::Streaming, Template::StreamTeardown { stream: 2 }),
            (Benchmark::App, Template::Servlet { url: 10, sequence: 1000, buffer: 1 }),
            (Benchmark::Compute, Template::Classify { instance: 39, support_vectors: 1000, features: 128 }),
        ];
        for (bench, t) in templates {
            let m = fp(bench);
            let e = expand_request(&req(t.clone()), &m, &mut ChaCha8Rng::seed_from_u64(2), 4);
            for r in &e.refs {
                let region = m
                    .region_of(r.address)
                    .unwrap_or_else(|| panic!("{t:?} ref {:#x} outside all regions", r.address));
                assert_eq!(region.cacheable, r.is_cacheable, "{t:?}");
                assert_eq!(r.is_instruction, region.kind == RegionKind::Code, "{t:?}");
            }
        }
    }
}
