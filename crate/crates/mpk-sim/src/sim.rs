//! One-stop facade bundling the machine, the optional key manager, and
//! the per-group heaps. This is what the trace replayer, the FFI layer,
//! and the interleaving checks drive.

use crate::error::{MpkError, Result};
use crate::heap::{ChunkHandle, GroupHeap};
use crate::hw::{AccessKind, AccessRight, PagePerm, PageId};
use crate::kernel::{Machine, PageRange, ThreadId};
use crate::manager::{CacheStats, Vkey, VkeyManager, PAGE_SIZE};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct Sim {
    pub machine: Machine,
    pub manager: Option<VkeyManager>,
    heaps: BTreeMap<Vkey, GroupHeap>,
}

impl Default for Sim {
    fn default() -> Self {
        Sim::new(Machine::default())
    }
}

impl Sim {
    pub fn new(machine: Machine) -> Self {
        Sim {
            machine,
            manager: None,
            heaps: BTreeMap::new(),
        }
    }

    /// Make sure threads 0..n exist.
    pub fn ensure_threads(&mut self, n: usize) {
        while self.machine.threads.len() < n {
            self.machine.spawn_thread();
        }
    }

    fn manager_mut(&mut self) -> Result<&mut VkeyManager> {
        self.manager.as_mut().ok_or(MpkError::NotInitialized)
    }

    pub fn mpk_init(&mut self, tid: ThreadId, evict_rate: f64) -> Result<()> {
        if self.manager.is_some() {
            return Err(MpkError::AlreadyInitialized);
        }
        self.manager = Some(VkeyManager::init(&mut self.machine, evict_rate, tid)?);
        Ok(())
    }

    pub fn mpk_mmap(&mut self, vkey: Vkey, len: u64, prot: PagePerm) -> Result<PageRange> {
        let mgr = self.manager.as_mut().ok_or(MpkError::NotInitialized)?;
        let range = mgr.mpk_mmap(&mut self.machine, vkey, len, prot)?;
        self.heaps
            .insert(vkey, GroupHeap::new(vkey, range.count * PAGE_SIZE));
        Ok(range)
    }

    pub fn mpk_munmap(&mut self, vkey: Vkey) -> Result<()> {
        let mgr = self.manager.as_mut().ok_or(MpkError::NotInitialized)?;
        mgr.mpk_munmap(&mut self.machine, vkey)?;
        self.heaps.remove(&vkey);
        Ok(())
    }

    pub fn mpk_begin(&mut self, tid: ThreadId, vkey: Vkey, prot: AccessRight) -> Result<()> {
        let mgr = self.manager.as_mut().ok_or(MpkError::NotInitialized)?;
        mgr.mpk_begin(&mut self.machine, tid, vkey, prot)
    }

    pub fn mpk_end(&mut self, tid: ThreadId, vkey: Vkey) -> Result<()> {
        let mgr = self.manager.as_mut().ok_or(MpkError::NotInitialized)?;
        mgr.mpk_end(&mut self.machine, tid, vkey)
    }

    pub fn mpk_mprotect(&mut self, tid: ThreadId, vkey: Vkey, prot: PagePerm) -> Result<()> {
        let mgr = self.manager.as_mut().ok_or(MpkError::NotInitialized)?;
        mgr.mpk_mprotect(&mut self.machine, tid, vkey, prot)
    }

    pub fn mpk_malloc(&mut self, vkey: Vkey, size: u64) -> Result<ChunkHandle> {
        if self.manager_mut()?.group(vkey).is_none() {
            return Err(MpkError::UnknownVkey);
        }
        self.heaps
            .get_mut(&vkey)
            .ok_or(MpkError::UnknownVkey)?
            .malloc(size)
    }

    pub fn mpk_free(&mut self, handle: &ChunkHandle) -> Result<()> {
        self.heaps
            .get_mut(&handle.vkey)
            .ok_or(MpkError::UnknownChunk)?
            .free(handle)
    }

    pub fn user_access(&mut self, tid: ThreadId, page: PageId, kind: AccessKind) -> bool {
        self.machine.user_access(tid, page, kind)
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.manager.as_ref().map(|m| m.stats()).unwrap_or_default()
    }

    pub fn metadata_bytes(&self) -> u64 {
        self.manager.as_ref().map(|m| m.metadata_bytes()).unwrap_or(0)
    }

    pub fn heap(&self, vkey: Vkey) -> Option<&GroupHeap> {
        self.heaps.get(&vkey)
    }
}
