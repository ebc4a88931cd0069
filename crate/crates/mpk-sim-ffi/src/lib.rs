//! C ABI for the MPK simulator: an opaque simulator handle, plain-C
//! structs for permissions and chunks, and error codes mirroring the
//! library's error enum. The header is generated into `include/` by
//! cbindgen at build time.
//!
//! All functions are null-safe and validate thread ids and argument
//! ranges before touching the simulator, so no Rust panic can cross the
//! FFI boundary under documented use.

use mpk_sim::heap::ChunkHandle;
use mpk_sim::hw::{AccessKind, AccessRight, PagePerm};
use mpk_sim::replay::{replay, ReplayMode};
use mpk_sim::trace::parse_trace;
use mpk_sim::{MpkError, Sim};
use std::ffi::{c_char, CStr, CString};

/// Opaque simulator instance.
pub struct MpkSim {
    sim: Sim,
}

/// Result codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpkStatus {
    Ok = 0,
    NoFreeKeys = 1,
    InvalidKey = 2,
    UnmappedPage = 3,
    AlreadyInitialized = 4,
    KernelKeysUnavailable = 5,
    VkeyInUse = 6,
    OutOfPages = 7,
    UnknownVkey = 8,
    GroupBusy = 9,
    NoEvictableKey = 10,
    NotBegun = 11,
    ExecOnlyGroup = 12,
    OutOfSpace = 13,
    DoubleFree = 14,
    UnknownChunk = 15,
    MetadataProtected = 16,
    NotInitialized = 17,
    ParseError = 100,
    NullPointer = 101,
    InvalidArgument = 102,
}

fn status_of(err: MpkError) -> MpkStatus {
    match err {
        MpkError::NoFreeKeys => MpkStatus::NoFreeKeys,
        MpkError::InvalidKey => MpkStatus::InvalidKey,
        MpkError::UnmappedPage => MpkStatus::UnmappedPage,
        MpkError::AlreadyInitialized => MpkStatus::AlreadyInitialized,
        MpkError::KernelKeysUnavailable => MpkStatus::KernelKeysUnavailable,
        MpkError::VkeyInUse => MpkStatus::VkeyInUse,
        MpkError::OutOfPages => MpkStatus::OutOfPages,
        MpkError::UnknownVkey => MpkStatus::UnknownVkey,
        MpkError::GroupBusy => MpkStatus::GroupBusy,
        MpkError::NoEvictableKey => MpkStatus::NoEvictableKey,
        MpkError::NotBegun => MpkStatus::NotBegun,
        MpkError::ExecOnlyGroup => MpkStatus::ExecOnlyGroup,
        MpkError::OutOfSpace => MpkStatus::OutOfSpace,
        MpkError::DoubleFree => MpkStatus::DoubleFree,
        MpkError::UnknownChunk => MpkStatus::UnknownChunk,
        MpkError::MetadataProtected => MpkStatus::MetadataProtected,
        MpkError::NotInitialized => MpkStatus::NotInitialized,
    }
}

fn to_status(result: mpk_sim::Result<()>) -> MpkStatus {
    match result {
        Ok(()) => MpkStatus::Ok,
        Err(e) => status_of(e),
    }
}

/// Page permission triple.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpkPerm {
    pub read: bool,
    pub write: bool,
    pub exec: bool,
}

impl From<MpkPerm> for PagePerm {
    fn from(p: MpkPerm) -> PagePerm {
        PagePerm { read: p.read, write: p.write, exec: p.exec }
    }
}

/// PKRU-style right: access-disable and write-disable bits.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpkRight {
    pub access_disable: bool,
    pub write_disable: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpkAccessKind {
    Read = 0,
    Write = 1,
    Fetch = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpkReplayMode {
    Managed = 0,
    Raw = 1,
}

/// Span of simulated 4 KB pages.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpkSpan {
    pub base: u64,
    pub pages: u64,
}

/// Handle to a chunk allocated from a page group.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MpkChunk {
    pub vkey: u64,
    pub id: u64,
    pub offset: u64,
    pub size: u64,
}

/// Key-cache counters.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MpkCacheStats {
    pub lookups: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

/// Create a simulator with no threads and no manager.
#[no_mangle]
pub extern "C" fn mpk_sim_new() -> *mut MpkSim {
    Box::into_raw(Box::new(MpkSim { sim: Sim::default() }))
}

/// Destroy a simulator created by `mpk_sim_new`.
///
/// # Safety
/// `handle` must be null or a pointer returned by `mpk_sim_new` that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_destroy(handle: *mut MpkSim) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

unsafe fn sim_mut<'a>(handle: *mut MpkSim) -> Option<&'a mut Sim> {
    handle.as_mut().map(|h| &mut h.sim)
}

/// Spawn a simulated thread; returns its id.
///
/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_spawn_thread(handle: *mut MpkSim) -> u64 {
    match sim_mut(handle) {
        Some(sim) => sim.machine.spawn_thread() as u64,
        None => u64::MAX,
    }
}

fn check_thread(sim: &Sim, tid: u64) -> Result<usize, MpkStatus> {
    let tid = tid as usize;
    if tid < sim.machine.threads.len() {
        Ok(tid)
    } else {
        Err(MpkStatus::InvalidArgument)
    }
}

/// Initialize the virtual-key manager with the given eviction rate.
///
/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_init(handle: *mut MpkSim, tid: u64, evict_rate: f64) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    let tid = match check_thread(sim, tid) {
        Ok(t) => t,
        Err(s) => return s,
    };
    if !(0.0..=1.0).contains(&evict_rate) {
        return MpkStatus::InvalidArgument;
    }
    to_status(sim.mpk_init(tid, evict_rate))
}

/// Allocate a page group; the mapped span is written to `out_span`.
///
/// # Safety
/// `handle` must be a live simulator pointer; `out_span` may be null.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_mmap(
    handle: *mut MpkSim,
    vkey: u64,
    len: u64,
    prot: MpkPerm,
    out_span: *mut MpkSpan,
) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    if len == 0 {
        return MpkStatus::InvalidArgument;
    }
    match sim.mpk_mmap(vkey, len, prot.into()) {
        Ok(range) => {
            if !out_span.is_null() {
                *out_span = MpkSpan { base: range.base, pages: range.count };
            }
            MpkStatus::Ok
        }
        Err(e) => status_of(e),
    }
}

/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_munmap(handle: *mut MpkSim, vkey: u64) -> MpkStatus {
    match sim_mut(handle) {
        Some(sim) => to_status(sim.mpk_munmap(vkey)),
        None => MpkStatus::NullPointer,
    }
}

/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_begin(
    handle: *mut MpkSim,
    tid: u64,
    vkey: u64,
    right: MpkRight,
) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    let tid = match check_thread(sim, tid) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let right = AccessRight { ad: right.access_disable, wd: right.write_disable };
    to_status(sim.mpk_begin(tid, vkey, right))
}

/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_end(handle: *mut MpkSim, tid: u64, vkey: u64) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    let tid = match check_thread(sim, tid) {
        Ok(t) => t,
        Err(s) => return s,
    };
    to_status(sim.mpk_end(tid, vkey))
}

/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_mprotect(
    handle: *mut MpkSim,
    tid: u64,
    vkey: u64,
    prot: MpkPerm,
) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    let tid = match check_thread(sim, tid) {
        Ok(t) => t,
        Err(s) => return s,
    };
    to_status(sim.mpk_mprotect(tid, vkey, prot.into()))
}

/// Allocate a chunk from a page group; the handle is written to `out`.
///
/// # Safety
/// `handle` must be a live simulator pointer; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_malloc(
    handle: *mut MpkSim,
    vkey: u64,
    size: u64,
    out: *mut MpkChunk,
) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    if size == 0 {
        return MpkStatus::InvalidArgument;
    }
    match sim.mpk_malloc(vkey, size) {
        Ok(c) => {
            if !out.is_null() {
                *out = MpkChunk { vkey: c.vkey, id: c.id, offset: c.offset, size: c.size };
            }
            MpkStatus::Ok
        }
        Err(e) => status_of(e),
    }
}

/// Free a chunk previously returned by `mpk_sim_malloc`.
///
/// # Safety
/// `handle` must be a live simulator pointer; `chunk` must be null or a
/// valid pointer to a chunk struct.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_chunk_free(
    handle: *mut MpkSim,
    chunk: *const MpkChunk,
) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    let Some(c) = chunk.as_ref() else {
        return MpkStatus::NullPointer;
    };
    let handle = ChunkHandle { vkey: c.vkey, id: c.id, offset: c.offset, size: c.size };
    to_status(sim.mpk_free(&handle))
}

/// Perform a user-mode access. Returns 1 if allowed, 0 if denied, -1 on
/// a bad handle or thread id.
///
/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_access(
    handle: *mut MpkSim,
    tid: u64,
    page: u64,
    kind: MpkAccessKind,
) -> i32 {
    let Some(sim) = sim_mut(handle) else {
        return -1;
    };
    let Ok(tid) = check_thread(sim, tid) else {
        return -1;
    };
    let kind = match kind {
        MpkAccessKind::Read => AccessKind::Read,
        MpkAccessKind::Write => AccessKind::Write,
        MpkAccessKind::Fetch => AccessKind::Fetch,
    };
    sim.user_access(tid, page, kind) as i32
}

/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_metadata_bytes(handle: *mut MpkSim) -> u64 {
    match sim_mut(handle) {
        Some(sim) => sim.metadata_bytes(),
        None => 0,
    }
}

/// Total modeled cycles accumulated so far.
///
/// # Safety
/// `handle` must be a live simulator pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_cost_total(handle: *mut MpkSim) -> f64 {
    match sim_mut(handle) {
        Some(sim) => sim.machine.ledger.total,
        None => 0.0,
    }
}

/// # Safety
/// `handle` must be a live simulator pointer; `out` may be null.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_cache_stats(
    handle: *mut MpkSim,
    out: *mut MpkCacheStats,
) -> MpkStatus {
    let Some(sim) = sim_mut(handle) else {
        return MpkStatus::NullPointer;
    };
    if !out.is_null() {
        let s = sim.cache_stats();
        *out = MpkCacheStats {
            lookups: s.lookups,
            hits: s.hits,
            misses: s.misses,
            evictions: s.evictions,
        };
    }
    MpkStatus::Ok
}

/// Replay a trace and return the JSON report through `out_json`. Pass a
/// negative `evict_rate` to use the rate from the trace's init op. The
/// returned string must be released with `mpk_sim_string_free`.
///
/// # Safety
/// `trace_text` must be a valid NUL-terminated UTF-8 string; `out_json`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_replay(
    trace_text: *const c_char,
    mode: MpkReplayMode,
    evict_rate: f64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> MpkStatus {
    if trace_text.is_null() || out_json.is_null() {
        return MpkStatus::NullPointer;
    }
    let Ok(text) = CStr::from_ptr(trace_text).to_str() else {
        return MpkStatus::InvalidArgument;
    };
    let rate = if evict_rate < 0.0 {
        None
    } else if evict_rate <= 1.0 {
        Some(evict_rate)
    } else {
        return MpkStatus::InvalidArgument;
    };
    let ops = match parse_trace(text) {
        Ok(ops) => ops,
        Err(_) => return MpkStatus::ParseError,
    };
    let mode = match mode {
        MpkReplayMode::Managed => ReplayMode::Managed,
        MpkReplayMode::Raw => ReplayMode::Raw,
    };
    let report = replay(&ops, mode, rate, seed);
    let json = CString::new(report.to_json()).expect("report has no NUL bytes");
    *out_json = json.into_raw();
    MpkStatus::Ok
}

/// Release a string returned by `mpk_sim_replay`.
///
/// # Safety
/// `s` must be null or a pointer obtained from `mpk_sim_replay`.
#[no_mangle]
pub unsafe extern "C" fn mpk_sim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
