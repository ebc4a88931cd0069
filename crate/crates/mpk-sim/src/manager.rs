//! Virtual protection keys over the 15 usable hardware keys.
//!
//! The manager owns every hardware key (grabbed at init), names page
//! groups by caller-chosen virtual keys, and maps virtual keys to
//! hardware keys like a cache with LRU eviction. Two usage models are
//! supported: thread-local domains (`mpk_begin`/`mpk_end`) and global
//! permission changes (`mpk_mprotect`), plus one hardware key reserved
//! for execute-only groups. Group metadata is kernel-guarded: the
//! application gets a read-only view and direct writes are rejected.

use crate::error::{MpkError, Result};
use crate::hw::{AccessRight, PagePerm, Pkey};
use crate::kernel::{Machine, PageRange, ThreadId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const PAGE_SIZE: u64 = 4096;

/// Bytes of metadata per page group.
const GROUP_METADATA_BYTES: u64 = 32;
/// Baseline reservation for the vkey hashmap.
const HASHMAP_RESERVATION_BYTES: u64 = 32768;

/// Application-chosen identifier for a page group.
pub type Vkey = u64;

/// How a group was last driven, which decides what an eviction leaves in
/// the page table: a domain group loses its page permission entirely, a
/// global group keeps its effective permission in the page attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum GroupKind {
    Domain,
    Global,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageGroup {
    pub vkey: Vkey,
    pub ranges: Vec<PageRange>,
    /// Effective permission of the group as the application sees it.
    pub perm: PagePerm,
    /// Bound hardware key, 0 when evicted/unbound.
    pub bound_pkey: Pkey,
    /// Threads currently between mpk_begin and mpk_end.
    pub active_threads: u32,
    pub exec_only: bool,
    /// Logical timestamp of the last binding-relevant use.
    pub last_use: u64,
    kind: GroupKind,
}

impl PageGroup {
    pub fn page_count(&self) -> u64 {
        self.ranges.iter().map(|r| r.count).sum()
    }
}

/// Cache counters surfaced in reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub lookups: u64,
    pub hits: u64,
    pub misses: u64,
    pub evictions: u64,
}

/// Read-only snapshot of the manager's metadata, the application-facing
/// half of the dual mapping.
#[derive(Debug, Clone, Serialize)]
pub struct MetadataView<'a> {
    pub groups: &'a BTreeMap<Vkey, PageGroup>,
    pub stats: CacheStats,
    pub reserved_exec_key: Option<Pkey>,
    pub metadata_bytes: u64,
}

#[derive(Debug, Clone)]
pub struct VkeyManager {
    groups: BTreeMap<Vkey, PageGroup>,
    /// Hardware keys owned by the manager and currently unbound.
    free_keys: Vec<Pkey>,
    /// pkey -> vkey for bound groups (exec-only groups all map through
    /// `reserved_exec_key` instead).
    bindings: BTreeMap<Pkey, Vkey>,
    reserved_exec_key: Option<Pkey>,
    evict_rate: f64,
    stats: CacheStats,
    /// Open begin count per (thread, vkey).
    open_domains: BTreeMap<(ThreadId, Vkey), u32>,
    clock: u64,
}

impl VkeyManager {
    /// Pre-allocate all 15 hardware keys from the kernel and start with
    /// an empty metadata table. Every existing thread's PKRU entries for
    /// the manager's keys are set to no-access so an unbound or foreign
    /// group is never reachable through the hardware default rights.
    pub fn init(machine: &mut Machine, evict_rate: f64, caller: ThreadId) -> Result<VkeyManager> {
        assert!(
            (0.0..=1.0).contains(&evict_rate),
            "evict_rate must be within [0, 1]"
        );
        if machine.manager_initialized {
            return Err(MpkError::AlreadyInitialized);
        }
        if machine.bitmap.allocated_count() != 1 {
            return Err(MpkError::KernelKeysUnavailable);
        }
        let mut free_keys = Vec::with_capacity(15);
        for _ in 0..15 {
            let key = machine
                .pkey_alloc(caller, AccessRight::NO_ACCESS)
                .map_err(|_| MpkError::KernelKeysUnavailable)?;
            free_keys.push(key);
        }
        for tid in 0..machine.threads.len() {
            for &key in &free_keys {
                machine.threads[tid].pkru.set(key, AccessRight::NO_ACCESS);
            }
        }
        machine.manager_initialized = true;
        // Lowest key binds first.
        free_keys.reverse();
        Ok(VkeyManager {
            groups: BTreeMap::new(),
            free_keys,
            bindings: BTreeMap::new(),
            reserved_exec_key: None,
            evict_rate,
            stats: CacheStats::default(),
            open_domains: BTreeMap::new(),
            clock: 0,
        })
    }

    fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn reserved_exec_key(&self) -> Option<Pkey> {
        self.reserved_exec_key
    }

    /// 32 bytes per live group on top of the hashmap reservation.
    pub fn metadata_bytes(&self) -> u64 {
        HASHMAP_RESERVATION_BYTES + GROUP_METADATA_BYTES * self.groups.len() as u64
    }

    pub fn metadata(&self) -> MetadataView<'_> {
        MetadataView {
            groups: &self.groups,
            stats: self.stats,
            reserved_exec_key: self.reserved_exec_key,
            metadata_bytes: self.metadata_bytes(),
        }
    }

    /// Simulated application write into the metadata mapping. The
    /// application's view is a read-only alias of the kernel-side pages,
    /// so this always faults and changes nothing.
    pub fn direct_metadata_write(&mut self, _vkey: Vkey, _perm: PagePerm) -> Result<()> {
        Err(MpkError::MetadataProtected)
    }

    pub fn group(&self, vkey: Vkey) -> Option<&PageGroup> {
        self.groups.get(&vkey)
    }

    /// Pure cache probe: bound hardware key for a vkey, if any.
    pub fn cache_lookup(&self, vkey: Vkey) -> Option<Pkey> {
        self.groups
            .get(&vkey)
            .filter(|g| g.bound_pkey != 0)
            .map(|g| g.bound_pkey)
    }

    // --- Page group lifecycle -----------------------------------------

    /// Allocate a page group: fresh pages carrying the requested
    /// permission and key 0.
    pub fn mpk_mmap(
        &mut self,
        machine: &mut Machine,
        vkey: Vkey,
        len: u64,
        prot: PagePerm,
    ) -> Result<PageRange> {
        assert!(len > 0, "len must be positive");
        if self.groups.contains_key(&vkey) {
            return Err(MpkError::VkeyInUse);
        }
        let pages = len.div_ceil(PAGE_SIZE);
        let range = machine.alloc_pages(pages, prot)?;
        let ts = self.tick();
        self.groups.insert(
            vkey,
            PageGroup {
                vkey,
                ranges: vec![range],
                perm: prot,
                bound_pkey: 0,
                active_threads: 0,
                exec_only: false,
                last_use: ts,
                kind: GroupKind::Global,
            },
        );
        Ok(range)
    }

    pub fn mpk_munmap(&mut self, machine: &mut Machine, vkey: Vkey) -> Result<()> {
        let group = self.groups.get(&vkey).ok_or(MpkError::UnknownVkey)?;
        if group.active_threads > 0 {
            return Err(MpkError::GroupBusy);
        }
        let group = self.groups.remove(&vkey).unwrap();
        for range in &group.ranges {
            machine.unmap_range(*range);
        }
        if group.exec_only {
            // Reserved key returns to the pool once the last exec-only
            // group is gone.
            if !self.groups.values().any(|g| g.exec_only) {
                if let Some(key) = self.reserved_exec_key.take() {
                    self.free_keys.push(key);
                }
            }
        } else if group.bound_pkey != 0 {
            self.bindings.remove(&group.bound_pkey);
            self.free_keys.push(group.bound_pkey);
        }
        self.open_domains.retain(|&(_, v), _| v != vkey);
        Ok(())
    }

    // --- Thread-local domains -----------------------------------------

    /// Obtain thread-local permission for a group. Always binds the
    /// group to a hardware key: a hit reuses the binding and costs one
    /// WRPKRU; a miss binds a free key or evicts the least recently used
    /// idle binding.
    pub fn mpk_begin(
        &mut self,
        machine: &mut Machine,
        tid: ThreadId,
        vkey: Vkey,
        prot: AccessRight,
    ) -> Result<()> {
        let group = self.groups.get(&vkey).ok_or(MpkError::UnknownVkey)?;
        if group.exec_only {
            return Err(MpkError::ExecOnlyGroup);
        }
        self.stats.lookups += 1;
        let pkey = if group.bound_pkey != 0 {
            self.stats.hits += 1;
            group.bound_pkey
        } else {
            self.stats.misses += 1;
            let key = self.acquire_key(machine, tid)?;
            let group = self.groups.get_mut(&vkey).unwrap();
            group.bound_pkey = key;
            group.kind = GroupKind::Domain;
            let (ranges, perm) = (group.ranges.clone(), group.perm);
            for range in ranges {
                machine.pkey_mprotect(tid, range, perm, key)?;
            }
            self.bindings.insert(key, vkey);
            key
        };
        machine.set_pkru_entry(tid, pkey, prot.normalized());
        let ts = self.tick();
        let group = self.groups.get_mut(&vkey).unwrap();
        group.kind = GroupKind::Domain;
        group.active_threads += 1;
        group.last_use = ts;
        *self.open_domains.entry((tid, vkey)).or_insert(0) += 1;
        Ok(())
    }

    /// Release the calling thread's permission. The binding itself is
    /// kept for future hits.
    pub fn mpk_end(&mut self, machine: &mut Machine, tid: ThreadId, vkey: Vkey) -> Result<()> {
        let open = self
            .open_domains
            .get_mut(&(tid, vkey))
            .ok_or(MpkError::NotBegun)?;
        *open -= 1;
        if *open == 0 {
            self.open_domains.remove(&(tid, vkey));
        }
        let group = self.groups.get_mut(&vkey).ok_or(MpkError::UnknownVkey)?;
        debug_assert!(group.active_threads > 0);
        group.active_threads -= 1;
        let pkey = group.bound_pkey;
        machine.set_pkru_entry(tid, pkey, AccessRight::NO_ACCESS);
        Ok(())
    }

    // --- Global permission changes ------------------------------------

    /// Change a group's permission process-wide. A bound group is a
    /// cache hit and the change goes through a PKRU sync alone; a miss
    /// consults the eviction-rate schedule and either claims a hardware
    /// key (evicting the LRU binding if the pool is empty) or falls back
    /// to a plain page-permission update. Execute-only requests route to
    /// the reserved key shared by all execute-only groups.
    pub fn mpk_mprotect(
        &mut self,
        machine: &mut Machine,
        tid: ThreadId,
        vkey: Vkey,
        prot: PagePerm,
    ) -> Result<()> {
        if !self.groups.contains_key(&vkey) {
            return Err(MpkError::UnknownVkey);
        }
        if prot.is_exec_only() {
            return self.mprotect_exec_only(machine, tid, vkey);
        }
        self.stats.lookups += 1;
        let group = self.groups.get(&vkey).unwrap();
        if group.exec_only {
            // Leaving execute-only: drop off the reserved key first.
            self.detach_from_exec_key(machine, tid, vkey)?;
        }
        let group = self.groups.get(&vkey).unwrap();
        if group.bound_pkey != 0 {
            self.stats.hits += 1;
            let pkey = group.bound_pkey;
            let exec_changed = group.perm.exec != prot.exec;
            let ranges = group.ranges.clone();
            if exec_changed {
                // Page attributes must change class; keys cannot express
                // the exec bit.
                for range in ranges {
                    machine.pkey_mprotect_kernel(
                        tid,
                        range,
                        PagePerm { read: true, write: true, exec: prot.exec },
                        pkey,
                    )?;
                }
            }
            machine.do_pkey_sync(tid, pkey, right_for(prot));
            let ts = self.tick();
            let group = self.groups.get_mut(&vkey).unwrap();
            group.perm = prot;
            group.last_use = ts;
            return Ok(());
        }
        self.stats.misses += 1;
        if self.eviction_schedule_says_evict() {
            let key = self.acquire_key(machine, tid)?;
            let group = self.groups.get_mut(&vkey).unwrap();
            group.bound_pkey = key;
            group.kind = GroupKind::Global;
            let ranges = group.ranges.clone();
            // Page attributes stay maximally permissive; the key carries
            // the effective right so later changes are sync-only.
            for range in ranges {
                machine.pkey_mprotect(
                    tid,
                    range,
                    PagePerm { read: true, write: true, exec: prot.exec },
                    key,
                )?;
            }
            self.bindings.insert(key, vkey);
            machine.do_pkey_sync(tid, key, right_for(prot));
            let ts = self.tick();
            let group = self.groups.get_mut(&vkey).unwrap();
            group.perm = prot;
            group.last_use = ts;
        } else {
            // Plain mprotect fallback: page attributes carry the whole
            // permission, key stays 0. The LRU stamp is refreshed only on
            // binding events.
            let group = self.groups.get_mut(&vkey).unwrap();
            group.kind = GroupKind::Global;
            let ranges = group.ranges.clone();
            for range in ranges {
                machine.mprotect(tid, range, prot)?;
            }
            self.groups.get_mut(&vkey).unwrap().perm = prot;
        }
        Ok(())
    }

    fn mprotect_exec_only(&mut self, machine: &mut Machine, tid: ThreadId, vkey: Vkey) -> Result<()> {
        self.stats.lookups += 1;
        let already = self.groups.get(&vkey).unwrap().exec_only;
        if already && self.reserved_exec_key.is_some() {
            self.stats.hits += 1;
            return Ok(());
        }
        self.stats.misses += 1;
        let key = match self.reserved_exec_key {
            Some(k) => k,
            None => {
                let k = self.acquire_key(machine, tid)?;
                self.reserved_exec_key = Some(k);
                // All threads lose data access to the reserved key for
                // as long as exec-only groups exist.
                machine.do_pkey_sync(tid, k, AccessRight::NO_ACCESS);
                k
            }
        };
        let group = self.groups.get_mut(&vkey).unwrap();
        if group.bound_pkey != 0 && group.bound_pkey != key {
            let old = group.bound_pkey;
            self.bindings.remove(&old);
            self.free_keys.push(old);
        }
        group.bound_pkey = key;
        group.exec_only = true;
        group.perm = PagePerm::X;
        group.kind = GroupKind::Global;
        let ranges = group.ranges.clone();
        // Pages stay readable at the PTE level; the no-access key is
        // what denies data access, on every thread.
        for range in ranges {
            machine.pkey_mprotect(tid, range, PagePerm::RX, key)?;
        }
        let ts = self.tick();
        self.groups.get_mut(&vkey).unwrap().last_use = ts;
        Ok(())
    }

    fn detach_from_exec_key(&mut self, machine: &mut Machine, tid: ThreadId, vkey: Vkey) -> Result<()> {
        let group = self.groups.get_mut(&vkey).unwrap();
        group.exec_only = false;
        group.bound_pkey = 0;
        let ranges = group.ranges.clone();
        let perm = group.perm;
        for range in ranges {
            machine.pkey_mprotect_kernel(tid, range, perm, 0)?;
        }
        if !self.groups.values().any(|g| g.exec_only) {
            if let Some(key) = self.reserved_exec_key.take() {
                self.free_keys.push(key);
            }
        }
        Ok(())
    }

    // --- Cache internals ----------------------------------------------

    /// Deterministic eviction-rate schedule: on the n-th miss, evict iff
    /// floor(n * rate) increments. Matches the configured ratio in the
    /// limit and is reproducible.
    fn eviction_schedule_says_evict(&self) -> bool {
        let n = self.stats.misses; // already incremented for this miss
        let r = self.evict_rate;
        (n as f64 * r).floor() > ((n - 1) as f64 * r).floor()
    }

    /// Take a key from the free pool, or evict the LRU idle binding.
    fn acquire_key(&mut self, machine: &mut Machine, tid: ThreadId) -> Result<Pkey> {
        if let Some(key) = self.free_keys.pop() {
            return Ok(key);
        }
        self.evict_lru(machine, tid)?.ok_or(MpkError::NoEvictableKey)?;
        Ok(self.free_keys.pop().expect("eviction must release a key"))
    }

    /// Unbind the least recently used group with no open domains,
    /// resetting its PTEs to key 0. Domain groups also lose their page
    /// permission so the pages become unreachable until rebound; global
    /// groups keep their effective permission in the page attributes.
    fn evict_lru(&mut self, machine: &mut Machine, tid: ThreadId) -> Result<Option<Vkey>> {
        let victim = self
            .bindings
            .values()
            .filter_map(|v| self.groups.get(v))
            .filter(|g| g.active_threads == 0)
            .min_by_key(|g| g.last_use)
            .map(|g| g.vkey);
        let Some(vkey) = victim else {
            return Ok(None);
        };
        let group = self.groups.get_mut(&vkey).unwrap();
        let key = group.bound_pkey;
        group.bound_pkey = 0;
        let reset_perm = match group.kind {
            GroupKind::Domain => PagePerm::NONE,
            GroupKind::Global => group.perm,
        };
        let ranges = group.ranges.clone();
        for range in ranges {
            machine.pkey_mprotect_kernel(tid, range, reset_perm, 0)?;
        }
        self.bindings.remove(&key);
        self.free_keys.push(key);
        self.stats.evictions += 1;
        Ok(Some(vkey))
    }
}

/// Translate a page permission into the key right that expresses it.
fn right_for(prot: PagePerm) -> AccessRight {
    if prot.write {
        AccessRight::READ_WRITE
    } else if prot.read {
        AccessRight::READ_ONLY
    } else {
        AccessRight::NO_ACCESS
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hw::AccessKind;

    fn setup(threads: usize, evict_rate: f64) -> (Machine, Vec<ThreadId>, VkeyManager) {
        let mut m = Machine::default();
        let tids: Vec<_> = (0..threads).map(|_| m.spawn_thread()).collect();
        let mgr = VkeyManager::init(&mut m, evict_rate, tids[0]).unwrap();
        (m, tids, mgr)
    }

    #[test]
    fn init_grabs_all_keys() {
        let (m, _, mgr) = setup(1, 1.0);
        assert_eq!(m.bitmap.allocated_count(), 16);
        assert_eq!(mgr.metadata_bytes(), 32768);
    }

    #[test]
    fn init_twice_fails() {
        let (mut m, t, _mgr) = setup(1, 0.5);
        assert_eq!(
            VkeyManager::init(&mut m, 0.5, t[0]).unwrap_err(),
            MpkError::AlreadyInitialized
        );
    }

    #[test]
    fn init_fails_when_keys_held_elsewhere() {
        let mut m = Machine::default();
        let t = m.spawn_thread();
        m.pkey_alloc(t, AccessRight::READ_WRITE).unwrap();
        assert_eq!(
            VkeyManager::init(&mut m, 1.0, t).unwrap_err(),
            MpkError::KernelKeysUnavailable
        );
    }

    #[test]
    #[should_panic]
    fn init_rejects_bad_rate() {
        let mut m = Machine::default();
        let t = m.spawn_thread();
        let _ = VkeyManager::init(&mut m, -0.1, t);
    }

    #[test]
    fn mmap_creates_group() {
        let (mut m, _, mut mgr) = setup(1, 1.0);
        let range = mgr.mpk_mmap(&mut m, 7, 8192, PagePerm::RW).unwrap();
        assert_eq!(range.count, 2);
        let g = mgr.group(7).unwrap();
        assert_eq!(g.bound_pkey, 0);
        assert_eq!(g.page_count(), 2);
        assert_eq!(
            mgr.mpk_mmap(&mut m, 7, 4096, PagePerm::RW).unwrap_err(),
            MpkError::VkeyInUse
        );
    }

    #[test]
    fn thousand_groups_scale_past_sixteen_keys() {
        let (mut m, _, mut mgr) = setup(1, 1.0);
        for v in 0..1000 {
            mgr.mpk_mmap(&mut m, v, 4096, PagePerm::RW).unwrap();
        }
        assert_eq!(mgr.metadata_bytes(), 32768 + 32 * 1000);
    }

    #[test]
    fn begin_grants_caller_only() {
        let (mut m, t, mut mgr) = setup(2, 1.0);
        let range = mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_begin(&mut m, t[0], 1, AccessRight::READ_WRITE).unwrap();
        assert!(m.user_access(t[0], range.base, AccessKind::Read));
        assert!(m.user_access(t[0], range.base, AccessKind::Write));
        assert!(!m.user_access(t[1], range.base, AccessKind::Read));
    }

    #[test]
    fn begin_end_reverts_access() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        let range = mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_begin(&mut m, t[0], 1, AccessRight::READ_WRITE).unwrap();
        mgr.mpk_end(&mut m, t[0], 1).unwrap();
        assert!(!m.user_access(t[0], range.base, AccessKind::Read));
    }

    #[test]
    fn end_without_begin() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        assert_eq!(mgr.mpk_end(&mut m, t[0], 1).unwrap_err(), MpkError::NotBegun);
    }

    #[test]
    fn refcounted_domains_across_threads() {
        let (mut m, t, mut mgr) = setup(2, 1.0);
        let range = mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_begin(&mut m, t[0], 1, AccessRight::READ_WRITE).unwrap();
        mgr.mpk_begin(&mut m, t[1], 1, AccessRight::READ_WRITE).unwrap();
        mgr.mpk_end(&mut m, t[0], 1).unwrap();
        assert!(m.user_access(t[1], range.base, AccessKind::Read));
        assert!(!m.user_access(t[0], range.base, AccessKind::Read));
    }

    #[test]
    fn begin_hit_charges_only_wrpkru() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_begin(&mut m, t[0], 1, AccessRight::READ_WRITE).unwrap();
        mgr.mpk_end(&mut m, t[0], 1).unwrap();
        let before = m.ledger.total;
        mgr.mpk_begin(&mut m, t[0], 1, AccessRight::READ_WRITE).unwrap();
        assert!((m.ledger.total - before - m.params.wrpkru).abs() < 1e-6);
        assert_eq!(mgr.stats().hits, 1);
    }

    #[test]
    fn sixteen_active_domains_exhaust_keys() {
        let (mut m, _, mut mgr) = setup(16, 1.0);
        for v in 0..16u64 {
            mgr.mpk_mmap(&mut m, v, 4096, PagePerm::RW).unwrap();
        }
        for v in 0..15u64 {
            mgr.mpk_begin(&mut m, v as usize, v, AccessRight::READ_WRITE).unwrap();
        }
        assert_eq!(
            mgr.mpk_begin(&mut m, 15, 15, AccessRight::READ_WRITE).unwrap_err(),
            MpkError::NoEvictableKey
        );
    }

    #[test]
    fn begin_evicts_lru_idle_binding() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        for v in 0..16u64 {
            mgr.mpk_mmap(&mut m, v, 4096, PagePerm::RW).unwrap();
        }
        // Fill all 15 keys with idle bindings, oldest first.
        for v in 0..15u64 {
            mgr.mpk_begin(&mut m, t[0], v, AccessRight::READ_WRITE).unwrap();
            mgr.mpk_end(&mut m, t[0], v).unwrap();
        }
        let g0_pages = mgr.group(0).unwrap().ranges[0];
        mgr.mpk_begin(&mut m, t[0], 15, AccessRight::READ_WRITE).unwrap();
        assert_eq!(mgr.cache_lookup(0), None);
        assert_eq!(mgr.stats().evictions, 1);
        // Evicted domain group: key 0, no page permission.
        let pte = m.page_table.get_pte(g0_pages.base).unwrap();
        assert_eq!(pte.pkey, 0);
        assert_eq!(pte.perm, PagePerm::NONE);
        assert!(!m.user_access(t[0], g0_pages.base, AccessKind::Read));
    }

    #[test]
    fn munmap_busy_group() {
        let (mut m, t, mut mgr) = setup(2, 1.0);
        mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_begin(&mut m, t[1], 1, AccessRight::READ_WRITE).unwrap();
        assert_eq!(mgr.mpk_munmap(&mut m, 1).unwrap_err(), MpkError::GroupBusy);
        mgr.mpk_end(&mut m, t[1], 1).unwrap();
        mgr.mpk_munmap(&mut m, 1).unwrap();
        assert_eq!(mgr.mpk_munmap(&mut m, 1).unwrap_err(), MpkError::UnknownVkey);
    }

    #[test]
    fn mprotect_hit_is_global_and_page_count_independent() {
        let (mut m, t, mut mgr) = setup(3, 1.0);
        let range = mgr.mpk_mmap(&mut m, 1, 1000 * 4096, PagePerm::RW).unwrap();
        mgr.mpk_mprotect(&mut m, t[0], 1, PagePerm::RW).unwrap(); // miss, binds
        let before = m.ledger.total;
        mgr.mpk_mprotect(&mut m, t[0], 1, PagePerm::R).unwrap(); // hit
        let hit_cost = m.ledger.total - before;
        assert!((hit_cost - (m.params.sync_base + m.params.wrpkru)).abs() < 1e-6);
        for &tid in &t {
            assert!(m.user_access(tid, range.base, AccessKind::Read));
            assert!(!m.user_access(tid, range.base, AccessKind::Write));
        }
    }

    #[test]
    fn mprotect_miss_rate_zero_falls_back_to_mprotect() {
        let (mut m, t, mut mgr) = setup(1, 0.0);
        let range = mgr.mpk_mmap(&mut m, 1, 3 * 4096, PagePerm::RW).unwrap();
        let before = m.ledger.total;
        mgr.mpk_mprotect(&mut m, t[0], 1, PagePerm::R).unwrap();
        let cost = m.ledger.total - before;
        assert_eq!(cost, m.params.mprotect(3));
        assert_eq!(mgr.cache_lookup(1), None);
        assert!(m.user_access(t[0], range.base, AccessKind::Read));
        assert!(!m.user_access(t[0], range.base, AccessKind::Write));
    }

    #[test]
    fn exec_only_groups_share_reserved_key() {
        let (mut m, t, mut mgr) = setup(2, 1.0);
        let r1 = mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        let r2 = mgr.mpk_mmap(&mut m, 2, 4096, PagePerm::RW).unwrap();
        mgr.mpk_mprotect(&mut m, t[0], 1, PagePerm::X).unwrap();
        mgr.mpk_mprotect(&mut m, t[0], 2, PagePerm::X).unwrap();
        let k = mgr.reserved_exec_key().unwrap();
        assert_eq!(mgr.group(1).unwrap().bound_pkey, k);
        assert_eq!(mgr.group(2).unwrap().bound_pkey, k);
        for &tid in &t {
            for base in [r1.base, r2.base] {
                assert!(m.user_access(tid, base, AccessKind::Fetch));
                assert!(!m.user_access(tid, base, AccessKind::Read));
                assert!(!m.user_access(tid, base, AccessKind::Write));
            }
        }
    }

    #[test]
    fn reserved_key_released_after_last_exec_group() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_mprotect(&mut m, t[0], 1, PagePerm::X).unwrap();
        assert!(mgr.reserved_exec_key().is_some());
        mgr.mpk_munmap(&mut m, 1).unwrap();
        assert!(mgr.reserved_exec_key().is_none());
    }

    #[test]
    fn begin_on_exec_only_group_rejected() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_mprotect(&mut m, t[0], 1, PagePerm::X).unwrap();
        assert_eq!(
            mgr.mpk_begin(&mut m, t[0], 1, AccessRight::READ_WRITE).unwrap_err(),
            MpkError::ExecOnlyGroup
        );
    }

    #[test]
    fn metadata_view_matches_kernel_truth_and_rejects_writes() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        mgr.mpk_mmap(&mut m, 1, 4096, PagePerm::RW).unwrap();
        mgr.mpk_mprotect(&mut m, t[0], 1, PagePerm::R).unwrap();
        let perm_before = mgr.metadata().groups[&1].perm;
        assert_eq!(perm_before, PagePerm::R);
        assert_eq!(
            mgr.direct_metadata_write(1, PagePerm::RW).unwrap_err(),
            MpkError::MetadataProtected
        );
        assert_eq!(mgr.metadata().groups[&1].perm, perm_before);
    }

    #[test]
    fn bitmap_soundness_under_bindings() {
        let (mut m, t, mut mgr) = setup(1, 1.0);
        for v in 0..20u64 {
            mgr.mpk_mmap(&mut m, v, 4096, PagePerm::RW).unwrap();
            mgr.mpk_mprotect(&mut m, t[0], v, PagePerm::R).unwrap();
        }
        for g in mgr.metadata().groups.values() {
            if g.bound_pkey != 0 {
                assert!(m.bitmap.is_allocated(g.bound_pkey));
            }
        }
    }
}
