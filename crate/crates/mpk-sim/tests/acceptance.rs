//! Acceptance suite. Each test covers one criterion and prints a
//! pass/fail line; run with `cargo test --test acceptance -- --nocapture`
//! to see them.

use mpk_sim::hw::{AccessKind, PagePerm};
use mpk_sim::interleave::explore;
use mpk_sim::kernel::{Machine, PageRange};
use mpk_sim::replay::{replay, sweep_page_count, ReplayMode};
use mpk_sim::trace::parse_trace;
use mpk_sim::Sim;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn pass(criterion: &str) {
    println!("PASS: {criterion}");
}

const RAW_UAF_TRACE: &str = "\
# protection-key use-after-free on the raw kernel interface
T0 mmap 1 4096 rw          # G1 -> page 0
T0 mmap 2 4096 rw          # G2 -> page 1
T0 raw_pkey_alloc rw       # key 1 for G1
T0 raw_pkey_mprotect 0:1 rw 1
T0 raw_pkey_free 1         # PTEs keep the stale key
T0 raw_pkey_alloc rw       # key 1 again, now meant for G2
T0 raw_pkey_mprotect 1:1 rw 1
T0 read 0                  # G1's page through G2's grant
";

const MANAGED_UAF_TRACE: &str = "\
# the same logical sequence through the virtual-key API
T0 init 1.0
T0 mmap 1 4096 rw          # G1 -> page 0
T0 begin 1 rw
T0 end 1
T0 munmap 1                # G1 freed
T0 mmap 2 4096 rw          # G2 -> page 1
T0 begin 2 rw
T0 read 0                  # G1's stale page
";

#[test]
fn criterion_1_use_after_free_differential() {
    let start = Instant::now();
    let raw = replay(&parse_trace(RAW_UAF_TRACE).unwrap(), ReplayMode::Raw, None, 0);
    assert_eq!(
        raw.ops.last().unwrap().outcome,
        "allowed",
        "raw replay must expose the stale-key access"
    );
    let managed = replay(
        &parse_trace(MANAGED_UAF_TRACE).unwrap(),
        ReplayMode::Managed,
        None,
        0,
    );
    assert_eq!(
        managed.ops.last().unwrap().outcome,
        "denied",
        "managed replay must prevent the stale-key access"
    );
    assert!(start.elapsed().as_secs_f64() < 1.0);
    pass("criterion 1: use-after-free allowed raw, denied managed");
}

#[test]
fn criterion_2_scalability() {
    let mut managed = String::from("T0 init 1.0\n");
    for v in 0..1000 {
        managed.push_str(&format!("T0 mmap {v} 4096 rw\n"));
    }
    let report = replay(&parse_trace(&managed).unwrap(), ReplayMode::Managed, None, 0);
    assert!(
        report.ops.iter().all(|op| op.outcome == "ok"),
        "1000 page groups must all succeed"
    );

    let raw: String = "T0 raw_pkey_alloc rw\n".repeat(16);
    let report = replay(&parse_trace(&raw).unwrap(), ReplayMode::Raw, None, 0);
    for op in &report.ops[..15] {
        assert_eq!(op.outcome, "ok");
    }
    assert!(report.ops[15].outcome.contains("no free protection keys"));
    pass("criterion 2: 1000 managed groups ok; 16th raw pkey_alloc errors");
}

#[derive(Clone)]
struct SyncState {
    sim: Sim,
    page: u64,
    revoked: bool,
    violation: bool,
}

#[derive(Clone, Copy)]
enum SyncOp {
    Revoke,
    Read,
    EnterKernel,
    ReturnToUser,
}

fn apply_sync_op(state: &mut SyncState, tid: usize, op: &SyncOp) {
    match op {
        SyncOp::Revoke => {
            state.sim.mpk_mprotect(tid, 1, PagePerm::NONE).unwrap();
            state.revoked = true;
        }
        SyncOp::Read => {
            let allowed = state.sim.user_access(tid, state.page, AccessKind::Read);
            if state.revoked && allowed {
                state.violation = true;
            }
        }
        SyncOp::EnterKernel => state.sim.machine.enter_kernel(tid),
        SyncOp::ReturnToUser => state.sim.machine.return_to_user(tid),
    }
}

#[test]
fn criterion_3_sync_semantics() {
    let start = Instant::now();

    // Managed side: after mpk_mprotect returns, no interleaving lets a
    // thread read under the revoked right.
    let mut sim = Sim::default();
    sim.ensure_threads(3);
    sim.mpk_init(0, 1.0).unwrap();
    let range = sim.mpk_mmap(1, 4096, PagePerm::RW).unwrap();
    sim.mpk_mprotect(0, 1, PagePerm::RW).unwrap(); // bind, rw everywhere
    let init = SyncState {
        sim,
        page: range.base,
        revoked: false,
        violation: false,
    };
    let threads = vec![
        vec![SyncOp::Revoke],
        vec![SyncOp::Read, SyncOp::Read],
        vec![SyncOp::EnterKernel, SyncOp::ReturnToUser, SyncOp::Read],
    ];
    let mut interleavings = 0u64;
    explore(&init, &threads, &mut apply_sync_op, &mut |s, hist| {
        assert!(!s.violation, "read under revoked right at schedule {hist:?}");
        if hist.len() == 6 {
            interleavings += 1;
        }
    });
    assert!(interleavings > 0);

    // Raw baseline: the kernel's execute-only mprotect leaves at least
    // one interleaving where another thread reads the exec-only page.
    #[derive(Clone)]
    struct RawState {
        machine: Machine,
        page: u64,
        protected: bool,
        leak: bool,
    }
    #[derive(Clone, Copy)]
    enum RawOp {
        ExecOnly,
        Read,
    }
    let mut machine = Machine::default();
    machine.spawn_thread();
    machine.spawn_thread();
    let range = machine.alloc_pages(1, PagePerm::RW).unwrap();
    let init = RawState {
        machine,
        page: range.base,
        protected: false,
        leak: false,
    };
    let threads = vec![vec![RawOp::ExecOnly], vec![RawOp::Read]];
    let mut leaks = 0u64;
    explore(
        &init,
        &threads,
        &mut |s: &mut RawState, tid, op| match op {
            RawOp::ExecOnly => {
                s.machine
                    .mprotect(tid, PageRange::new(s.page, 1), PagePerm::X)
                    .unwrap();
                s.protected = true;
            }
            RawOp::Read => {
                if s.protected && s.machine.user_access(tid, s.page, AccessKind::Read) {
                    s.leak = true;
                }
            }
        },
        &mut |s, hist| {
            if hist.len() == 2 && s.leak {
                leaks += 1;
            }
        },
    );
    assert!(leaks >= 1, "raw exec-only must leak in some interleaving");

    assert!(start.elapsed().as_secs_f64() < 10.0);
    pass("criterion 3: managed sync tight in all interleavings; raw exec-only leaks");
}

#[test]
fn criterion_4_exec_only_correctness() {
    let mut sim = Sim::default();
    sim.ensure_threads(3);
    sim.mpk_init(0, 1.0).unwrap();
    let r1 = sim.mpk_mmap(1, 4096, PagePerm::RW).unwrap();
    let r2 = sim.mpk_mmap(2, 8192, PagePerm::RW).unwrap();
    sim.mpk_mprotect(0, 1, PagePerm::X).unwrap();
    sim.mpk_mprotect(1, 2, PagePerm::X).unwrap();
    for tid in 0..3 {
        for page in [r1.base, r2.base, r2.base + 1] {
            assert!(sim.user_access(tid, page, AccessKind::Fetch));
            assert!(!sim.user_access(tid, page, AccessKind::Read));
            assert!(!sim.user_access(tid, page, AccessKind::Write));
        }
    }
    let mgr = sim.manager.as_ref().unwrap();
    let reserved = mgr.reserved_exec_key().unwrap();
    assert_eq!(mgr.group(1).unwrap().bound_pkey, reserved);
    assert_eq!(mgr.group(2).unwrap().bound_pkey, reserved);
    pass("criterion 4: exec-only fetch-only on every thread, one reserved key");
}

#[test]
fn criterion_5_cost_model_trends() {
    let start = Instant::now();
    let csv = sweep_page_count(1000);
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 1000);
    let managed0 = rows[0].0;
    for (i, &(m, r)) in rows.iter().enumerate() {
        assert_eq!(m, managed0, "managed hit-path cost must not depend on pages");
        if i > 0 {
            assert!(r > rows[i - 1].1, "raw mprotect cost must strictly increase");
        }
    }
    let ratio = rows[0].1 / rows[0].0;
    assert!(ratio >= 10.0, "single-page speedup {ratio} below 10x");
    assert!((8.0..=24.0).contains(&ratio), "ratio {ratio} outside [8, 24]");
    assert!(start.elapsed().as_secs_f64() < 5.0);
    pass("criterion 5: flat managed column, increasing raw column, ratio in [8, 24]");
}

/// Reference LRU: vector ordered oldest-first, capacity 15.
#[derive(Default)]
struct RefLru {
    order: Vec<u64>,
}

impl RefLru {
    fn touch(&mut self, vkey: u64) {
        if let Some(pos) = self.order.iter().position(|&v| v == vkey) {
            self.order.remove(pos);
        } else if self.order.len() == 15 {
            self.order.remove(0);
        }
        self.order.push(vkey);
    }

    fn contains(&self, vkey: u64) -> bool {
        self.order.contains(&vkey)
    }
}

#[test]
fn criterion_6_lru_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c_7275);
    const POOL: u64 = 24;
    for _ in 0..1000 {
        let mut sim = Sim::default();
        sim.ensure_threads(1);
        sim.mpk_init(0, 1.0).unwrap();
        for v in 0..POOL {
            sim.mpk_mmap(v, 4096, PagePerm::RW).unwrap();
        }
        let mut oracle = RefLru::default();
        let steps = rng.gen_range(1..=64);
        for _ in 0..steps {
            let v = rng.gen_range(0..POOL);
            if rng.gen_bool(0.5) {
                sim.mpk_mprotect(0, v, PagePerm::RW).unwrap();
            } else {
                sim.mpk_begin(0, v, mpk_sim::hw::AccessRight::READ_WRITE).unwrap();
                sim.mpk_end(0, v).unwrap();
            }
            oracle.touch(v);
            let mgr = sim.manager.as_ref().unwrap();
            for check in 0..POOL {
                assert_eq!(
                    mgr.cache_lookup(check).is_some(),
                    oracle.contains(check),
                    "binding state diverged for vkey {check}"
                );
            }
        }
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
    pass("criterion 6: 1000 random traces match reference LRU at every step");
}

#[test]
fn criterion_7_allocator_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6865_6170);
    const CAPACITY: u64 = 4 * 4096;
    for _ in 0..1000 {
        let mut heap = mpk_sim::heap::GroupHeap::new(1, CAPACITY);
        let mut live = Vec::new();
        let steps = rng.gen_range(1..=128);
        for _ in 0..steps {
            if live.is_empty() || rng.gen_bool(0.6) {
                let size = rng.gen_range(1..=2048);
                if let Ok(handle) = heap.malloc(size) {
                    live.push(handle);
                }
            } else {
                let idx = rng.gen_range(0..live.len());
                let handle = live.swap_remove(idx);
                heap.free(&handle).unwrap();
            }
            // Interval disjointness over the live chunks.
            let mut intervals: Vec<(u64, u64)> = heap.live_chunks().collect();
            intervals.sort_unstable();
            for pair in intervals.windows(2) {
                assert!(
                    pair[0].0 + pair[0].1 <= pair[1].0,
                    "overlapping chunks {pair:?}"
                );
            }
            for &(off, len) in &intervals {
                assert!(off + len <= CAPACITY, "chunk outside the group");
            }
            // Byte conservation.
            assert_eq!(heap.live_bytes() + heap.free_bytes(), CAPACITY);
        }
    }
    pass("criterion 7: disjointness and conservation over 1000 random heap traces");
}

#[test]
fn criterion_8_metadata_accounting() {
    for n in [0u64, 1, 17, 1000] {
        let mut sim = Sim::default();
        sim.ensure_threads(1);
        sim.mpk_init(0, 1.0).unwrap();
        for v in 0..n {
            sim.mpk_mmap(v, 4096, PagePerm::RW).unwrap();
        }
        assert_eq!(sim.metadata_bytes(), 32 * n + 32768);
    }
    pass("criterion 8: metadata bytes = 32*N + 32768");
}

#[test]
fn criterion_9_determinism() {
    let mut mixed = String::from("T0 init 0.5\n");
    for v in 0..40 {
        mixed.push_str(&format!("T0 mmap {v} 8192 rw\n"));
    }
    for v in 0..40 {
        mixed.push_str(&format!("T{} mprotect {v} ro\n", v % 3));
        mixed.push_str(&format!("T{} read {}\n", (v + 1) % 3, v * 2));
        mixed.push_str(&format!("T{} write {}\n", (v + 2) % 3, v * 2));
    }
    mixed.push_str("T0 malloc 3 100 a\nT0 malloc 3 200 b\nT0 free a\nT0 free b\n");

    for (text, mode) in [
        (RAW_UAF_TRACE, ReplayMode::Raw),
        (MANAGED_UAF_TRACE, ReplayMode::Managed),
        (mixed.as_str(), ReplayMode::Managed),
    ] {
        let ops = parse_trace(text).unwrap();
        let a = replay(&ops, mode, None, 42).to_json();
        let b = replay(&ops, mode, None, 42).to_json();
        assert_eq!(a, b, "replay must be byte-identical");
    }
    pass("criterion 9: byte-identical reports on repeated replay");
}
