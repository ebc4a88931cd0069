//! Minimal per-group heap so sensitive data can live inside a protected
//! page group. First-fit free list, 16-byte alignment, immediate
//! coalescing of adjacent free space.

use crate::error::{MpkError, Result};
use crate::manager::Vkey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const ALIGN: u64 = 16;

fn align_up(n: u64) -> u64 {
    n.div_ceil(ALIGN) * ALIGN
}

/// Handle to a live chunk. The id is unique per heap for the heap's
/// lifetime, so stale handles are distinguishable from unknown ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChunkHandle {
    pub vkey: Vkey,
    pub id: u64,
    pub offset: u64,
    pub size: u64,
}

#[derive(Debug, Clone)]
pub struct GroupHeap {
    vkey: Vkey,
    capacity: u64,
    /// Free intervals (offset -> length), disjoint and coalesced.
    free: BTreeMap<u64, u64>,
    /// Live chunks by id: (offset, aligned size).
    live: BTreeMap<u64, (u64, u64)>,
    retired: std::collections::BTreeSet<u64>,
    next_id: u64,
}

impl GroupHeap {
    pub fn new(vkey: Vkey, capacity: u64) -> Self {
        let mut free = BTreeMap::new();
        if capacity > 0 {
            free.insert(0, capacity);
        }
        GroupHeap {
            vkey,
            capacity,
            free,
            live: BTreeMap::new(),
            retired: std::collections::BTreeSet::new(),
            next_id: 0,
        }
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn live_bytes(&self) -> u64 {
        self.live.values().map(|&(_, len)| len).sum()
    }

    pub fn free_bytes(&self) -> u64 {
        self.free.values().sum()
    }

    pub fn live_chunks(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.live.values().copied()
    }

    /// First-fit allocation of `size` bytes (rounded up to 16).
    pub fn malloc(&mut self, size: u64) -> Result<ChunkHandle> {
        assert!(size > 0, "size must be positive");
        let need = align_up(size);
        let slot = self
            .free
            .iter()
            .find(|(_, &len)| len >= need)
            .map(|(&off, &len)| (off, len));
        let Some((off, len)) = slot else {
            return Err(MpkError::OutOfSpace);
        };
        self.free.remove(&off);
        if len > need {
            self.free.insert(off + need, len - need);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.live.insert(id, (off, need));
        Ok(ChunkHandle {
            vkey: self.vkey,
            id,
            offset: off,
            size,
        })
    }

    /// Return a chunk to the free pool and coalesce with its neighbors.
    pub fn free(&mut self, handle: &ChunkHandle) -> Result<()> {
        let Some((off, len)) = self.live.remove(&handle.id) else {
            if self.retired.contains(&handle.id) {
                return Err(MpkError::DoubleFree);
            }
            return Err(MpkError::UnknownChunk);
        };
        self.retired.insert(handle.id);
        let mut start = off;
        let mut end = off + len;
        if let Some((&prev_off, &prev_len)) = self.free.range(..off).next_back() {
            if prev_off + prev_len == start {
                self.free.remove(&prev_off);
                start = prev_off;
            }
        }
        if let Some(&next_len) = self.free.get(&end) {
            self.free.remove(&end);
            end += next_len;
        }
        self.free.insert(start, end - start);
        Ok(())
    }
}
