//! Trace-driven replay and the microbenchmark-style sweeps. Replay is
//! deterministic: the same ops, mode, eviction rate, and seed always
//! produce a byte-identical report.

use crate::cost::{CostLedger, CostParams};
use crate::hw::{AccessKind, PagePerm};
use crate::kernel::{Machine, PageRange};
use crate::manager::{CacheStats, PAGE_SIZE};
use crate::sim::Sim;
use crate::trace::{TraceOp, Verb};
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReplayMode {
    Managed,
    Raw,
}

impl std::str::FromStr for ReplayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "managed" => Ok(ReplayMode::Managed),
            "raw" => Ok(ReplayMode::Raw),
            other => Err(format!("unknown mode '{other}' (expected managed|raw)")),
        }
    }
}

/// Per-op verdict in the report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OpReport {
    pub line: usize,
    pub thread: usize,
    pub verb: &'static str,
    pub outcome: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub mode: ReplayMode,
    pub evict_rate: f64,
    pub seed: u64,
    pub ops: Vec<OpReport>,
    pub cache: CacheStats,
    pub cost: CostLedger,
    pub metadata_bytes: u64,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}

/// Replay a parsed trace. Module errors become per-op outcomes; the
/// replay itself never aborts mid-trace. `evict_rate` is the fallback
/// (and override) for the rate carried by the trace's `init` op.
pub fn replay(ops: &[TraceOp], mode: ReplayMode, evict_rate: Option<f64>, seed: u64) -> Report {
    let mut sim = Sim::new(Machine::default());
    let max_thread = ops.iter().map(|op| op.thread).max().unwrap_or(0);
    sim.ensure_threads(max_thread + 1);

    // Labels for heap chunks and raw-mode group spans.
    let mut chunks = BTreeMap::new();
    let mut raw_groups: BTreeMap<u64, PageRange> = BTreeMap::new();
    let mut effective_rate = evict_rate.unwrap_or(1.0);

    let mut reports = Vec::with_capacity(ops.len());
    for op in ops {
        let tid = op.thread;
        let outcome = match (&op.verb, mode) {
            (Verb::Init { evict_rate: rate }, ReplayMode::Managed) => {
                effective_rate = evict_rate.unwrap_or(*rate);
                result_outcome(sim.mpk_init(tid, effective_rate))
            }
            (Verb::Mmap { vkey, len, prot }, ReplayMode::Managed) => {
                result_outcome(sim.mpk_mmap(*vkey, *len, *prot).map(|_| ()))
            }
            (Verb::Munmap { vkey }, ReplayMode::Managed) => result_outcome(sim.mpk_munmap(*vkey)),
            (Verb::Begin { vkey, prot }, ReplayMode::Managed) => {
                result_outcome(sim.mpk_begin(tid, *vkey, *prot))
            }
            (Verb::End { vkey }, ReplayMode::Managed) => result_outcome(sim.mpk_end(tid, *vkey)),
            (Verb::Mprotect { vkey, prot }, ReplayMode::Managed) => {
                result_outcome(sim.mpk_mprotect(tid, *vkey, *prot))
            }
            (Verb::Malloc { vkey, size, label }, ReplayMode::Managed) => {
                match sim.mpk_malloc(*vkey, *size) {
                    Ok(handle) => {
                        chunks.insert(label.clone(), handle);
                        "ok".to_string()
                    }
                    Err(e) => format!("error: {e}"),
                }
            }
            (Verb::Free { label }, ReplayMode::Managed) => match chunks.get(label) {
                Some(handle) => {
                    let handle = *handle;
                    result_outcome(sim.mpk_free(&handle))
                }
                None => format!("error: unknown chunk label '{label}'"),
            },

            // Raw mode maps groups straight through the kernel; the vkey
            // is just a trace-side name for the span.
            (Verb::Mmap { vkey, len, prot }, ReplayMode::Raw) => {
                let pages = len.div_ceil(PAGE_SIZE);
                match sim.machine.alloc_pages(pages, *prot) {
                    Ok(range) => {
                        raw_groups.insert(*vkey, range);
                        "ok".to_string()
                    }
                    Err(e) => format!("error: {e}"),
                }
            }
            (Verb::Munmap { vkey }, ReplayMode::Raw) => match raw_groups.remove(vkey) {
                Some(range) => {
                    sim.machine.unmap_range(range);
                    "ok".to_string()
                }
                None => format!("error: unknown raw group {vkey}"),
            },
            (verb, ReplayMode::Raw) if is_managed_verb(verb) => {
                format!("error: managed verb '{}' not available in raw mode", verb.name())
            }

            (Verb::Read { page }, _) => access_outcome(sim.user_access(tid, *page, AccessKind::Read)),
            (Verb::Write { page }, _) => {
                access_outcome(sim.user_access(tid, *page, AccessKind::Write))
            }
            (Verb::Fetch { page }, _) => {
                access_outcome(sim.user_access(tid, *page, AccessKind::Fetch))
            }
            (Verb::RawPkeyAlloc { rights }, _) => {
                result_outcome(sim.machine.pkey_alloc(tid, *rights).map(|_| ()))
            }
            (Verb::RawPkeyFree { pkey }, _) => result_outcome(sim.machine.pkey_free(tid, *pkey)),
            (Verb::RawPkeyMprotect { range, prot, pkey }, _) => {
                result_outcome(sim.machine.pkey_mprotect(tid, *range, *prot, *pkey))
            }
            (Verb::RawMprotect { range, prot }, _) => {
                result_outcome(sim.machine.mprotect(tid, *range, *prot))
            }
            (verb, ReplayMode::Raw) => {
                format!("error: verb '{}' not available in raw mode", verb.name())
            }
        };
        reports.push(OpReport {
            line: op.line,
            thread: tid,
            verb: op.verb.name(),
            outcome,
        });
    }

    Report {
        mode,
        evict_rate: effective_rate,
        seed,
        ops: reports,
        cache: sim.cache_stats(),
        cost: sim.machine.ledger.clone(),
        metadata_bytes: sim.metadata_bytes(),
    }
}

fn is_managed_verb(verb: &Verb) -> bool {
    matches!(
        verb,
        Verb::Init { .. }
            | Verb::Begin { .. }
            | Verb::End { .. }
            | Verb::Mprotect { .. }
            | Verb::Malloc { .. }
            | Verb::Free { .. }
    )
}

fn result_outcome(r: crate::error::Result<()>) -> String {
    match r {
        Ok(()) => "ok".to_string(),
        Err(e) => format!("error: {e}"),
    }
}

fn access_outcome(allowed: bool) -> String {
    if allowed { "allowed" } else { "denied" }.to_string()
}

// --- Sweeps -----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    HitRate,
    PageCount,
}

impl std::str::FromStr for SweepKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hit_rate" => Ok(SweepKind::HitRate),
            "page_count" => Ok(SweepKind::PageCount),
            other => Err(format!("unknown sweep '{other}' (expected hit_rate|page_count)")),
        }
    }
}

/// Modeled cost of one managed hit-path permission change and one raw
/// mprotect, per page count. The managed column is flat; the raw column
/// grows with the page count.
pub fn sweep_page_count(max_pages: u64) -> String {
    let mut csv = String::from("pages,managed_hit_cycles,raw_mprotect_cycles\n");
    for pages in 1..=max_pages {
        let managed = managed_hit_cost(pages);
        let raw = CostParams::default().mprotect(pages);
        csv.push_str(&format!("{pages},{managed:.1},{raw:.1}\n"));
    }
    csv
}

fn managed_hit_cost(pages: u64) -> f64 {
    let mut sim = Sim::new(Machine::default());
    sim.ensure_threads(1);
    sim.mpk_init(0, 1.0).unwrap();
    sim.mpk_mmap(1, pages * PAGE_SIZE, PagePerm::RW).unwrap();
    sim.mpk_mprotect(0, 1, PagePerm::RW).unwrap(); // bind on miss
    let before = sim.machine.ledger.total;
    sim.mpk_mprotect(0, 1, PagePerm::R).unwrap(); // hit
    sim.machine.ledger.total - before
}

/// Average modeled cost per `mpk_mprotect` call over 100 single-page
/// permission changes at the given hit rate, after warming the key
/// cache, mirroring the structure of the key-cache microbenchmark.
pub fn sweep_hit_rate(evict_rate: f64) -> String {
    let mut csv = String::from("hit_rate_pct,evict_rate,avg_cycles_per_op\n");
    for hit_pct in (0..=100).step_by(10) {
        let avg = hit_rate_point(hit_pct, evict_rate);
        csv.push_str(&format!("{hit_pct},{evict_rate},{avg:.2}\n"));
    }
    csv
}

fn hit_rate_point(hit_pct: u64, evict_rate: f64) -> f64 {
    let mut sim = Sim::new(Machine::default());
    sim.ensure_threads(1);
    sim.mpk_init(0, evict_rate).unwrap();
    // Warm the cache: 15 bound groups, plus a pool of cold groups for
    // the misses.
    let total_ops = 100u64;
    for v in 0..15u64 {
        sim.mpk_mmap(v, PAGE_SIZE, PagePerm::RW).unwrap();
        sim.mpk_mprotect(0, v, PagePerm::RW).unwrap();
    }
    for v in 0..total_ops {
        sim.mpk_mmap(100 + v, PAGE_SIZE, PagePerm::RW).unwrap();
    }
    let before = sim.machine.ledger.total;
    let hits = total_ops * hit_pct / 100;
    let mut cold = 100u64;
    for i in 0..total_ops {
        if i < hits {
            // Touch the most recently bound warm group.
            sim.mpk_mprotect(0, 14, PagePerm::R).unwrap();
        } else {
            sim.mpk_mprotect(0, cold, PagePerm::R).unwrap();
            cold += 1;
        }
    }
    (sim.machine.ledger.total - before) / total_ops as f64
}
