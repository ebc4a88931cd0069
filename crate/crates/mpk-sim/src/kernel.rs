//! Simulated OS layer: the protection-key allocation bitmap, the
//! pkey_mprotect/mprotect syscalls including the kernel's execute-only
//! path, per-thread task-work queues, and the lazy PKRU synchronization
//! protocol.
//!
//! The baseline flaws of the raw interface are reproduced on purpose:
//! pkey_free leaves stale keys in PTEs, the key space tops out at 15
//! usable keys, and the execute-only mprotect path updates only the
//! calling thread's PKRU. The virtualization layer on top is what fixes
//! them, and its fixes are tested against this model.
//!
//! Thread-level parallelism is simulated: every thread is an explicit
//! [`ThreadId`] into one serialized machine, and a schedule is whatever
//! order the caller invokes operations in. A "kick" (the rescheduling
//! interrupt of the sync protocol) is modeled as a schedule constraint:
//! a kicked thread is forced through a kernel round-trip before its next
//! user-mode access, so pending task work always lands first.

use crate::cost::{CostLedger, CostParams};
use crate::error::{MpkError, Result};
use crate::hw::{check_access, AccessKind, AccessRight, PagePerm, PageId, PageTable, Pkey, Pkru};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Index of a simulated thread.
pub type ThreadId = usize;

/// Contiguous span of pages, written `base:count` in traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRange {
    pub base: PageId,
    pub count: u64,
}

impl PageRange {
    pub fn new(base: PageId, count: u64) -> Self {
        PageRange { base, count }
    }

    pub fn pages(&self) -> impl Iterator<Item = PageId> + '_ {
        self.base..self.base + self.count
    }

    pub fn contains(&self, page: PageId) -> bool {
        page >= self.base && page < self.base + self.count
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    User,
    Kernel,
}

/// Pending PKRU update delivered through task work.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PkruUpdate {
    pub pkey: Pkey,
    pub right: AccessRight,
}

#[derive(Debug, Clone)]
pub struct Thread {
    pub pkru: Pkru,
    pub mode: Mode,
    task_work: VecDeque<PkruUpdate>,
    kicked: bool,
}

impl Thread {
    fn new() -> Self {
        Thread {
            pkru: Pkru::default(),
            mode: Mode::User,
            task_work: VecDeque::new(),
            kicked: false,
        }
    }

    pub fn pending_task_work(&self) -> usize {
        self.task_work.len()
    }
}

/// 16-bit allocation bitmap. Bit 0 (the default key) is permanently set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyBitmap(u16);

impl Default for KeyBitmap {
    fn default() -> Self {
        KeyBitmap(1)
    }
}

impl KeyBitmap {
    pub fn is_allocated(&self, key: Pkey) -> bool {
        self.0 & (1 << key) != 0
    }

    fn alloc_lowest(&mut self) -> Option<Pkey> {
        for key in 1..16u8 {
            if !self.is_allocated(key) {
                self.0 |= 1 << key;
                return Some(key);
            }
        }
        None
    }

    fn free(&mut self, key: Pkey) -> Result<()> {
        if key == 0 || key > 15 || !self.is_allocated(key) {
            return Err(MpkError::InvalidKey);
        }
        self.0 &= !(1 << key);
        Ok(())
    }

    pub fn allocated_count(&self) -> u32 {
        self.0.count_ones()
    }
}

/// The whole simulated machine: hardware state, kernel state, and the
/// cost ledger. Cloneable so interleaving exploration can branch.
#[derive(Debug, Clone)]
pub struct Machine {
    pub page_table: PageTable,
    pub threads: Vec<Thread>,
    pub bitmap: KeyBitmap,
    pub params: CostParams,
    pub ledger: CostLedger,
    next_page: PageId,
    max_pages: u64,
    pub(crate) manager_initialized: bool,
}

impl Default for Machine {
    fn default() -> Self {
        Machine::new(CostParams::default())
    }
}

impl Machine {
    pub fn new(params: CostParams) -> Self {
        Machine {
            page_table: PageTable::default(),
            threads: Vec::new(),
            bitmap: KeyBitmap::default(),
            params,
            ledger: CostLedger::default(),
            next_page: 0,
            max_pages: u64::MAX / 2,
            manager_initialized: false,
        }
    }

    pub fn with_max_pages(params: CostParams, max_pages: u64) -> Self {
        let mut m = Machine::new(params);
        m.max_pages = max_pages;
        m
    }

    pub fn spawn_thread(&mut self) -> ThreadId {
        self.threads.push(Thread::new());
        self.threads.len() - 1
    }

    fn thread(&self, tid: ThreadId) -> &Thread {
        &self.threads[tid]
    }

    fn thread_mut(&mut self, tid: ThreadId) -> &mut Thread {
        &mut self.threads[tid]
    }

    /// Map `count` fresh pages with the given permission and key 0.
    pub fn alloc_pages(&mut self, count: u64, perm: PagePerm) -> Result<PageRange> {
        if count == 0 || self.next_page + count > self.max_pages {
            return Err(MpkError::OutOfPages);
        }
        let range = PageRange::new(self.next_page, count);
        self.next_page += count;
        for page in range.pages() {
            self.page_table.set_pte(page, perm, 0);
        }
        Ok(range)
    }

    pub fn unmap_range(&mut self, range: PageRange) {
        for page in range.pages() {
            self.page_table.unmap(page);
        }
    }

    fn require_mapped(&self, range: PageRange) -> Result<()> {
        for page in range.pages() {
            if !self.page_table.is_mapped(page) {
                return Err(MpkError::UnmappedPage);
            }
        }
        Ok(())
    }

    // --- MPK instructions ---------------------------------------------

    pub fn wrpkru(&mut self, tid: ThreadId, value: Pkru) {
        self.thread_mut(tid).pkru = value;
        let c = self.params.wrpkru;
        self.ledger.charge(tid, c);
    }

    pub fn rdpkru(&mut self, tid: ThreadId) -> Pkru {
        let c = self.params.rdpkru;
        self.ledger.charge(tid, c);
        self.thread(tid).pkru
    }

    /// Update a single PKRU entry on a thread, charged as one WRPKRU.
    pub fn set_pkru_entry(&mut self, tid: ThreadId, pkey: Pkey, right: AccessRight) {
        self.thread_mut(tid).pkru.set(pkey, right);
        let c = self.params.wrpkru;
        self.ledger.charge(tid, c);
    }

    // --- Syscalls -----------------------------------------------------

    /// Allocate the lowest free key in 1..15 and set the caller's PKRU
    /// entry for it. Errors with NoFreeKeys once all 15 are taken.
    pub fn pkey_alloc(&mut self, tid: ThreadId, rights: AccessRight) -> Result<Pkey> {
        let c = self.params.pkey_alloc;
        self.ledger.charge(tid, c);
        let key = self.bitmap.alloc_lowest().ok_or(MpkError::NoFreeKeys)?;
        self.thread_mut(tid).pkru.set(key, rights);
        Ok(key)
    }

    /// Clear a key's bitmap bit. PTEs still carrying the key are left
    /// untouched, which is the use-after-free hazard of the raw API.
    pub fn pkey_free(&mut self, tid: ThreadId, pkey: Pkey) -> Result<()> {
        let c = self.params.pkey_free;
        self.ledger.charge(tid, c);
        self.bitmap.free(pkey)
    }

    /// Userspace pkey_mprotect: associate an allocated, non-zero key with
    /// a mapped range and set the page permission.
    pub fn pkey_mprotect(
        &mut self,
        tid: ThreadId,
        range: PageRange,
        perm: PagePerm,
        pkey: Pkey,
    ) -> Result<()> {
        let c = self.params.pkey_mprotect_cost(range.count);
        self.ledger.charge(tid, c);
        if pkey == 0 || pkey > 15 || !self.bitmap.is_allocated(pkey) {
            return Err(MpkError::InvalidKey);
        }
        self.require_mapped(range)?;
        for page in range.pages() {
            self.page_table.set_pte(page, perm, pkey);
        }
        Ok(())
    }

    /// Kernel-only entry point that may reset a range to key 0, used by
    /// the manager's eviction path.
    pub fn pkey_mprotect_kernel(
        &mut self,
        tid: ThreadId,
        range: PageRange,
        perm: PagePerm,
        pkey: Pkey,
    ) -> Result<()> {
        let c = self.params.pkey_mprotect_cost(range.count);
        self.ledger.charge(tid, c);
        self.require_mapped(range)?;
        for page in range.pages() {
            self.page_table.set_pte(page, perm, pkey);
        }
        Ok(())
    }

    /// mprotect with the kernel's execute-only path: a PROT_EXEC-only
    /// request allocates a key, disables read/write for it in the calling
    /// thread's PKRU only, and assigns the key to the range. The page
    /// stays readable at the PTE level (x86 cannot drop read while
    /// keeping exec), so other threads, whose PKRU was never updated,
    /// can still read the region.
    pub fn mprotect(&mut self, tid: ThreadId, range: PageRange, perm: PagePerm) -> Result<()> {
        let c = self.params.mprotect(range.count);
        self.ledger.charge(tid, c);
        self.require_mapped(range)?;
        if perm.is_exec_only() {
            let key = self.bitmap.alloc_lowest().ok_or(MpkError::NoFreeKeys)?;
            self.thread_mut(tid).pkru.set(key, AccessRight::NO_ACCESS);
            for page in range.pages() {
                self.page_table.set_pte(page, PagePerm::RX, key);
            }
        } else {
            for page in range.pages() {
                let pkey = self.page_table.get_pte(page).unwrap().pkey;
                self.page_table.set_pte(page, perm, pkey);
            }
        }
        Ok(())
    }

    // --- Task work and lazy PKRU sync ---------------------------------

    pub fn task_work_add(&mut self, target: ThreadId, work: PkruUpdate) {
        self.thread_mut(target).task_work.push_back(work);
    }

    pub fn enter_kernel(&mut self, tid: ThreadId) {
        self.thread_mut(tid).mode = Mode::Kernel;
    }

    /// Drain the task-work queue in FIFO order, applying each PKRU
    /// update, then return the thread to user mode.
    pub fn return_to_user(&mut self, tid: ThreadId) {
        while let Some(work) = self.thread_mut(tid).task_work.pop_front() {
            self.set_pkru_entry(tid, work.pkey, work.right);
        }
        let t = self.thread_mut(tid);
        t.kicked = false;
        t.mode = Mode::User;
    }

    /// Make a PKRU update globally effective: immediate for the caller,
    /// task-work hook plus kick for every other thread. Once this
    /// returns, no thread can perform a user-mode access under the old
    /// right in the simulated schedule.
    pub fn do_pkey_sync(&mut self, caller: ThreadId, pkey: Pkey, right: AccessRight) {
        let c = self.params.sync_base;
        self.ledger.charge(caller, c);
        self.set_pkru_entry(caller, pkey, right);
        for tid in 0..self.threads.len() {
            if tid == caller {
                continue;
            }
            self.task_work_add(tid, PkruUpdate { pkey, right });
            self.thread_mut(tid).kicked = true;
        }
    }

    /// A user-mode access by a simulated thread. A kicked thread, or one
    /// parked in kernel mode, first completes a kernel round-trip so its
    /// pending PKRU updates apply before the access is checked.
    pub fn user_access(&mut self, tid: ThreadId, page: PageId, kind: AccessKind) -> bool {
        let t = self.thread(tid);
        if t.kicked || t.mode == Mode::Kernel {
            self.enter_kernel(tid);
            self.return_to_user(tid);
        }
        check_access(&self.thread(tid).pkru, &self.page_table, page, kind)
    }
}
