//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use palmscloud::cache::{AccessKind, Assoc, CacheGeometry, MemoryRef, Replacement, SetAssocCache};
use palmscloud::cli;
use palmscloud::duosim::{Budget, LinkConfig, Simulation};
use palmscloud::hierarchy::{CacheKind, Hierarchy, HierarchyConfig, LevelStats};
use palmscloud::newcache::{Newcache, NewcacheGeometry};
use palmscloud::report::{self, ReportRow};
use palmscloud::workloads::{make_workload, Benchmark};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2}s, limit {limit_s}s", elapsed.as_secs_f64())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Seen {
    Hit,
    Cold,
    Replace(u64, bool),
}

fn seen(o: &palmscloud::cache::AccessOutcome) -> Seen {
    match (o.kind, o.victim) {
        (AccessKind::Hit, None) => Seen::Hit,
        (AccessKind::ColdMiss, None) => Seen::Cold,
        (AccessKind::ReplaceMiss, Some(v)) => Seen::Replace(v.line_address, v.dirty),
        other => panic!("unexpected set-associative outcome {other:?}"),
    }
}

/// Exact LRU by timestamps: each set is a bag of (line, last use, dirty).
struct LruOracle {
    sets: Vec<Vec<(u64, u64, bool)>>,
    ways: usize,
    clock: u64,
}

impl LruOracle {
    fn new(num_sets: usize, ways: usize) -> Self {
        Self {
            sets: vec![Vec::new(); num_sets],
            ways,
            clock: 0,
        }
    }

    fn access(&mut self, line: u64, write: bool) -> Seen {
        self.clock += 1;
        let n = self.sets.len() as u64;
        let set = &mut self.sets[(line % n) as usize];
        if let Some(e) = set.iter_mut().find(|e| e.0 == line) {
            e.1 = self.clock;
            e.2 |= write;
            return Seen::Hit;
        }
        if set.len() < self.ways {
            set.push((line, self.clock, write));
            return Seen::Cold;
        }
        let (pos, _) = set
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| e.1)
            .expect("full set");
        let old = std::mem::replace(&mut set[pos], (line, self.clock, write));
        Seen::Replace(old.0 * 64, old.2)
    }
}

fn mixed_trace(rng: &mut ChaCha8Rng, len: usize, lines: u64) -> Vec<MemoryRef> {
    let hot = lines / 16;
    (0..len)
        .map(|_| {
            let line = if rng.random_bool(0.5) {
                rng.random_range(0..hot)
            } else {
                rng.random_range(0..lines)
            };
            let addr = line * 64 + rng.random_range(0..64);
            if rng.random_bool(0.3) {
                MemoryRef::write(addr)
            } else {
                MemoryRef::read(addr)
            }
        })
        .collect()
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let shapes: [(u64, Assoc); 6] = [
        (32 * 1024, Assoc::Ways(8)),
        (32 * 1024, Assoc::Ways(1)),
        (16 * 1024, Assoc::Ways(4)),
        (64 * 1024, Assoc::Ways(16)),
        (8 * 1024, Assoc::Ways(2)),
        (32 * 1024, Assoc::Full),
    ];
    let mut refs = 0;
    for t in 0..100u64 {
        let (size, assoc) = shapes[t as usize % shapes.len()];
        let g = CacheGeometry::new(size, 64, assoc, 48).map_err(|e| e.to_string())?;
        let mut cache = SetAssocCache::new(g, Replacement::Lru, "l1d");
        let mut oracle = LruOracle::new(g.num_sets as usize, g.ways as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        for (i, r) in mixed_trace(&mut rng, 10_000, 4096).iter().enumerate() {
            let got = seen(&cache.access(r, &mut unused).map_err(|e| e.to_string())?);
            let want = oracle.access(r.address / 64, r.is_write);
            check(got == want, || {
                format!("trace {t} ({size} B, {assoc}) ref {i}: got {got:?}, oracle {want:?}")
            })?;
            refs += 1;
        }
    }
    within_time(start.elapsed(), 5.0)?;
    Ok(format!("100 traces, {refs} refs identical [{:.2}s]", start.elapsed().as_secs_f64()))
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    for t in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + t);
        let trace = mixed_trace(&mut rng, 10_000, 4096);

        // cache level: SA(1) against a one-slot-per-set array
        let g = CacheGeometry::new(32 * 1024, 64, Assoc::Ways(1), 48).map_err(|e| e.to_string())?;
        let mut sa1 = SetAssocCache::new(g, Replacement::Lru, "l1d");
        let mut slots: Vec<Option<(u64, bool)>> = vec![None; g.num_sets as usize];
        for (i, r) in trace.iter().enumerate() {
            let line = r.address / 64;
            let slot = &mut slots[(line % g.num_sets) as usize];
            let want = match *slot {
                Some((l, d)) if l == line => {
                    *slot = Some((l, d | r.is_write));
                    Seen::Hit
                }
                Some((l, d)) => {
                    *slot = Some((line, r.is_write));
                    Seen::Replace(l * 64, d)
                }
                None => {
                    *slot = Some((line, r.is_write));
                    Seen::Cold
                }
            };
            let got = seen(&sa1.access(r, &mut unused).map_err(|e| e.to_string())?);
            check(got == want, || format!("trace {t} ref {i}: SA(1) {got:?}, direct {want:?}"))?;
        }

        // hierarchy level: `direct` kind against `sa` with one way
        let mut direct = HierarchyConfig::default();
        direct.l1d.kind = CacheKind::Direct;
        let mut one_way = HierarchyConfig::default();
        one_way.l1d.assoc = Assoc::Ways(1);
        let mut a = Hierarchy::new(direct, t).map_err(|e| e.to_string())?;
        let mut b = Hierarchy::new(one_way, t).map_err(|e| e.to_string())?;
        for (i, r) in trace.iter().enumerate() {
            let (x, y) = (a.access(r), b.access(r));
            check(x == y, || format!("trace {t} ref {i}: direct {x:?}, sa(1) {y:?}"))?;
        }
        check(a.stats() == b.stats(), || format!("trace {t}: level counters differ"))?;
    }
    within_time(start.elapsed(), 2.0)?;
    Ok(format!("100 traces identical [{:.2}s]", start.elapsed().as_secs_f64()))
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut traces = 0;
    for (t, k) in (0..100u64).zip([0u32, 2, 4].into_iter().cycle()) {
        let n_bits = 4;
        let g = NewcacheGeometry::new(n_bits, k, 64, 6 + n_bits + k).map_err(|e| e.to_string())?;
        check(g.tag_bits == 0, || format!("k={k}: tag bits {}", g.tag_bits))?;
        let mut nc = Newcache::new(g, "l1d");
        let lines = 1usize << n_bits;
        // fully associative, victim slot drawn uniformly over all slots
        let mut slots: Vec<Option<(u64, bool)>> = vec![None; lines];
        let mut where_is: HashMap<u64, usize> = HashMap::new();
        let mut nc_rng = ChaCha8Rng::seed_from_u64(3000 + t);
        let mut oracle_rng = nc_rng.clone();
        let mut trace_rng = ChaCha8Rng::seed_from_u64(4000 + t);
        let span = 1u64 << (6 + n_bits + k);
        for i in 0..10_000 {
            let addr = trace_rng.random_range(0..span);
            let r = if trace_rng.random_bool(0.3) {
                MemoryRef::write(addr)
            } else {
                MemoryRef::read(addr)
            };
            let line = addr / 64;
            let want = match where_is.get(&line) {
                Some(&p) => {
                    let s = slots[p].as_mut().expect("mapped slot is valid");
                    s.1 |= r.is_write;
                    None
                }
                None => {
                    let p = oracle_rng.random_range(0..lines);
                    let old = slots[p].replace((line, r.is_write));
                    if let Some((l, _)) = old {
                        where_is.remove(&l);
                    }
                    where_is.insert(line, p);
                    Some(old.map(|(l, d)| (l * 64, d)))
                }
            };
            let o = nc.access(&r, &mut nc_rng).map_err(|e| e.to_string())?;
            let got = match o.kind {
                AccessKind::Hit => None,
                AccessKind::IndexMiss => Some(o.victim.map(|v| (v.line_address, v.dirty))),
                other => return Err(format!("trace {t} ref {i}: unexpected {other:?}")),
            };
            check(got == want, || format!("trace {t} (k={k}) ref {i}: newcache {got:?}, oracle {want:?}"))?;
        }
        check(nc_rng == oracle_rng, || format!("trace {t}: rng streams diverged"))?;
        traces += 1;
    }
    within_time(start.elapsed(), 2.0)?;
    Ok(format!("{traces} traces of 10^4 refs identical [{:.2}s]", start.elapsed().as_secs_f64()))
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut summary = Vec::new();
    for k in [0u32, 2, 4, 6] {
        let g = NewcacheGeometry::from_size(32 * 1024, 64, k, 48).map_err(|e| e.to_string())?;
        let mut nc = Newcache::new(g, "l1d");
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + k as u64);
        let mut trace = ChaCha8Rng::seed_from_u64(6000 + k as u64);
        let logical = 1usize << g.logical_index_bits;
        let alias_stride = (logical as u64) * 64;
        let mut seen_bits = vec![0u64; logical.div_ceil(64)];
        let mut kinds: BTreeMap<&str, u64> = BTreeMap::new();
        for i in 0..100_000u64 {
            let addr = match trace.random_range(0..4) {
                0 => trace.random_range(0..256u64) * 64,
                1 => (i * 64) % (1 << 24),
                2 => trace.random_range(0..8u64) * alias_stride + trace.random_range(0..64u64) * 64,
                _ => trace.random_range(0..(1u64 << 30)),
            };
            let r = if trace.random_bool(0.3) {
                MemoryRef::write(addr)
            } else {
                MemoryRef::read(addr)
            };
            let o = nc.access(&r, &mut rng).map_err(|e| e.to_string())?;
            *kinds.entry(format!("{:?}", o.kind).leak()).or_default() += 1;
            let mut dup = None;
            for ln in nc.lnregs() {
                let (w, b) = ((ln / 64) as usize, ln % 64);
                if seen_bits[w] & (1 << b) != 0 {
                    dup = Some(ln);
                }
                seen_bits[w] |= 1 << b;
            }
            for ln in nc.lnregs() {
                seen_bits[(ln / 64) as usize] = 0;
            }
            check(dup.is_none(), || format!("k={k}: LNreg {dup:?} duplicated after ref {i}"))?;
        }
        check(kinds.len() == 3, || format!("k={k}: trace did not exercise every case: {kinds:?}"))?;
        summary.push(format!("k={k} {kinds:?}"));
    }
    within_time(start.elapsed(), 5.0)?;
    Ok(format!(
        "0 violations over 4 x 10^5 checks; {} [{:.2}s]",
        summary.join("; "),
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_5() -> Verdict {
    let mut h = Hierarchy::new(HierarchyConfig::default(), 1).map_err(|e| e.to_string())?;
    // nine lines sharing one L1D set, plus a hot line elsewhere
    let conflict: Vec<u64> = (0..9).map(|i| 0x10_0000 + i * 4096).collect();
    let hot = 0x20_0040;
    for &a in conflict.iter().chain([&hot]) {
        h.access(&MemoryRef::read(a)).map_err(|e| e.to_string())?;
    }
    h.reset_stats();
    let mut refs: Vec<MemoryRef> = (0..30).map(|i| MemoryRef::read(conflict[i % 9])).collect();
    refs.extend(std::iter::repeat_n(MemoryRef::read(hot), 270));
    let s = h.run_trace(&refs, 1000).map_err(|e| e.to_string())?;
    check(s.l2.hits == 30 && s.l1d.misses == 30, || {
        format!("expected 30 L2-serviced refs, got l1d misses {} l2 hits {}", s.l1d.misses, s.l2.hits)
    })?;
    let ipc = s.ipc(1.0);
    check(s.cycles == 1300.0, || format!("cycles {} != 1300", s.cycles))?;
    check((ipc - 0.769230).abs() <= 1e-6, || format!("IPC {ipc} not 0.769230 +- 1e-6"))?;

    let mut h = Hierarchy::new(HierarchyConfig::default(), 1).map_err(|e| e.to_string())?;
    let m = h.run_trace(&[MemoryRef::read(0x40)], 1).map_err(|e| e.to_string())?;
    check(m.cycles == 201.0, || format!("memory case cycles {} != 201", m.cycles))?;
    Ok(format!("cycles 1300, IPC {ipc:.9}, memory case 201"))
}

fn conservation(s: &LevelStats) -> bool {
    s.l2.accesses == s.l1i.misses + s.l1d.misses && s.l3.accesses == s.l2.misses
}

fn spec(b: Benchmark, overrides: &[(&str, u64)], seed: u64) -> palmscloud::workloads::WorkloadSpec {
    let o: BTreeMap<String, u64> = overrides.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    make_workload(b, &o, seed).expect("valid workload")
}

fn criterion_6() -> Verdict {
    let kinds = [
        CacheKind::SaLru,
        CacheKind::Direct,
        CacheKind::FaRandom,
        CacheKind::Newcache { k: 0 },
        CacheKind::Newcache { k: 4 },
        CacheKind::Newcache { k: 6 },
    ];
    let mut runs = 0;
    for b in Benchmark::ALL {
        for kind in kinds {
            let mut h = HierarchyConfig::default();
            h.l1d.kind = kind;
            let s = spec(b, &[], 1);
            let r = Simulation::new(s, h, LinkConfig::default(), 1, Budget::default())
                .run()
                .map_err(|e| format!("{b} {}: {e}", kind.name()))?
                .report;
            let st = &r.stats;
            check(conservation(st), || {
                format!(
                    "{b} {}: l2 {} vs l1i.misses {} + l1d.misses {}; l3 {} vs l2.misses {}",
                    kind.name(),
                    st.l2.accesses,
                    st.l1i.misses,
                    st.l1d.misses,
                    st.l3.accesses,
                    st.l2.misses
                )
            })?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs (9 benchmarks x 6 L1D kinds) conserve traffic"))
}

fn criterion_7() -> Verdict {
    let run = |s| {
        Simulation::new(s, HierarchyConfig::default(), LinkConfig::default(), 1, Budget::default())
            .run()
            .map(|o| o.report)
            .map_err(|e| e.to_string())
    };
    let web = run(spec(Benchmark::Web, &[], 1))?;
    check(web.requests_issued == 1000 && web.requests_completed == 1000, || {
        format!("web issued {} completed {}", web.requests_issued, web.requests_completed)
    })?;
    let fw = run(spec(Benchmark::FileWrite, &[], 1))?;
    check(fw.requests_issued == 15 && fw.requests_completed == 15, || {
        format!("file_write issued {} completed {}", fw.requests_issued, fw.requests_completed)
    })?;
    let mut app = Vec::new();
    for x in [1u64, 3, 11] {
        let r = run(spec(Benchmark::App, &[("urls", x)], 1))?;
        check(r.requests_issued == x * 10 && r.requests_completed == x * 10, || {
            format!("app urls={x}: issued {} completed {}", r.requests_issued, r.requests_completed)
        })?;
        app.push(r.requests_issued.to_string());
    }
    let idle = run(spec(Benchmark::Idle, &[], 1))?;
    check(idle.requests_issued == 0 && idle.requests_completed == 0, || {
        format!("idle issued {}", idle.requests_issued)
    })?;
    Ok(format!(
        "web 1000/1000, file_write 15, app {}, idle 0",
        app.join("/")
    ))
}

fn criterion_8() -> Verdict {
    let link = LinkConfig::default();
    let mut runs = 0;
    let mut cut_short = 0;
    let budgets = [Budget::default(), Budget { max_time_us: 3_000 }];
    for b in Benchmark::ALL {
        for seed in 1..=3u64 {
            for budget in budgets {
                let s = spec(b, &[], seed);
                let o = Simulation::new(s, HierarchyConfig::default(), link, seed, budget)
                    .with_trace()
                    .run()
                    .map_err(|e| format!("{b} seed {seed}: {e}"))?;
                let trace = o.trace.expect("trace requested");
                let ready = trace.iter().find(|e| e.label == "READY_SENT").map(|e| e.time_ns);
                let first_req = trace.iter().position(|e| e.label == "REQUEST_ARRIVES");
                if let Some(p) = first_req {
                    let ready_pos = trace.iter().position(|e| e.label == "READY_SENT");
                    check(ready_pos.is_some_and(|r| r < p), || {
                        format!("{b} seed {seed}: request before READY")
                    })?;
                    check(trace[p].time_ns >= ready.unwrap() + link.propagation_us * 1000, || {
                        format!("{b} seed {seed}: request arrives before READY could cross the link")
                    })?;
                }
                check(trace.last().map(|e| e.label) == Some("SIM_END"), || {
                    format!("{b} seed {seed}: trace does not end with SIM_END")
                })?;
                let r = &o.report;
                check(r.requests_issued == r.requests_completed + r.in_flight, || {
                    format!(
                        "{b} seed {seed}: issued {} != completed {} + in flight {}",
                        r.requests_issued, r.requests_completed, r.in_flight
                    )
                })?;
                check(conservation(&r.stats), || format!("{b} seed {seed}: traffic not conserved"))?;
                cut_short += u64::from(r.in_flight > 0);
                runs += 1;
            }
        }
    }
    Ok(format!("{runs} runs, {cut_short} ended with requests in flight"))
}

const DESK_SCALE: &str = "\
benchmark = all
seeds = 1, 2, 3
assoc = 8
k = 4

[db]
transactions = 300

[file_write]
runs = 40

[file_read]
runs = 40

[app]
urls = 11
requests = 30
";

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let plan = cli::parse_config(DESK_SCALE).map_err(|e| e.to_string())?;
    let rows = cli::run_plan(&plan);
    let mut failures = Vec::new();
    for row in &rows {
        match &row.result {
            Err(e) => failures.push(format!("{:?}: {e}", row.key)),
            Ok(r) => {
                if r.refs < 1_000_000 {
                    failures.push(format!("{} seed {}: only {} refs", r.benchmark, r.seed, r.refs));
                }
                if !conservation(&r.stats) {
                    failures.push(format!("{} seed {}: traffic not conserved", r.benchmark, r.seed));
                }
            }
        }
    }
    let means = report::means(&rows);
    let mut lines = Vec::new();
    for b in Benchmark::ALL {
        let find = |kind: &str, param: &str| {
            means
                .iter()
                .find(|m| m.benchmark == b && m.l1d_kind == kind && m.l1d_param == param)
        };
        let (Some(sa), Some(nc)) = (find("sa", "8"), find("newcache", "4")) else {
            failures.push(format!("{b}: missing rows"));
            continue;
        };
        let ipc_rel = (nc.ipc - sa.ipc) / sa.ipc;
        let miss_delta = nc.l1d_miss_rate - sa.l1d_miss_rate;
        let miss_tol = f64::max(0.005, 0.15 * sa.l1d_miss_rate);
        let ok = ipc_rel.abs() <= 0.05 && miss_delta.abs() <= miss_tol;
        lines.push(format!(
            "    {:<10} ipc sa8 {:.4} nc4 {:.4} ({:+.2}%)  l1d miss sa8 {:.4} nc4 {:.4} ({:+.4}, tol {:.4})  {}",
            b.name(),
            sa.ipc,
            nc.ipc,
            ipc_rel * 100.0,
            sa.l1d_miss_rate,
            nc.l1d_miss_rate,
            miss_delta,
            miss_tol,
            if ok { "ok" } else { "OUT OF TOLERANCE" }
        ));
        if !ok {
            failures.push(format!("{b} out of tolerance"));
        }
    }
    let elapsed = start.elapsed();
    if elapsed.as_secs_f64() >= 60.0 {
        failures.push(format!("took {:.1}s, limit 60s", elapsed.as_secs_f64()));
    }
    let detail = format!(
        "{} runs [{:.2}s]\n{}",
        rows.len(),
        elapsed.as_secs_f64(),
        lines.join("\n")
    );
    if failures.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failures.join("; ")))
    }
}

const SWEEP: &str = "\
benchmark = web, db, mail, file_write, streaming, app, compute, idle
seeds = 1, 2
assoc = 1, 8, full
k = 0, 4
budget_ms = 2000

[web]
n = 200

[db]
transactions = 40

[mail]
duration_ms = 300
";

fn sweep_bytes(dir: &std::path::Path, name: &str, plan: &cli::ExperimentPlan) -> Result<(Vec<u8>, Vec<u8>), String> {
    let rows: Vec<ReportRow> = cli::run_plan(plan);
    let path = dir.join(name);
    cli::write_outputs(&path, &rows).map_err(|e| e.to_string())?;
    let report = std::fs::read(&path).map_err(|e| e.to_string())?;
    let means = std::fs::read(cli::means_path(&path)).map_err(|e| e.to_string())?;
    Ok((report, means))
}

fn criterion_10() -> Verdict {
    let plan = cli::parse_config(SWEEP).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, am) = sweep_bytes(dir.path(), "a.csv", &plan)?;
    let (b, bm) = sweep_bytes(dir.path(), "b.csv", &plan)?;
    check(a == b, || "report files differ".into())?;
    check(am == bm, || "means files differ".into())?;
    let rows = a.iter().filter(|&&c| c == b'\n').count() - 2;
    check(rows == plan.cell_count(), || format!("{rows} rows for {} cells", plan.cell_count()))?;
    Ok(format!("{rows} rows, {} bytes, identical", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("LRU oracle equivalence", criterion_1),
        ("direct-mapped equals SA(1)", criterion_2),
        ("Newcache zero-tag equivalence", criterion_3),
        ("LNreg uniqueness", criterion_4),
        ("timing arithmetic", criterion_5),
        ("traffic conservation", criterion_6),
        ("workload budgets", criterion_7),
        ("dual-system protocol", criterion_8),
        ("Newcache k=4 vs 8-way SA at desk scale", criterion_9),
        ("report determinism", criterion_10),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        match f() {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
