//! MPK-relevant hardware state: per-thread PKRU registers, a shared page
//! table whose entries carry a 4-bit protection-key field, and the access
//! check that intersects page permissions with the PKRU entry for the
//! page's key.
//!
//! Pages are abstract 4 KB indices; no byte content is simulated. The
//! zeroed-ECX/EDX register convention of WRPKRU/RDPKRU is not modeled:
//! operations take and return [`Pkru`] values directly.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Number of hardware protection keys (4-bit key field).
pub const NUM_KEYS: usize = 16;

/// Abstract 4 KB page index.
pub type PageId = u64;

/// Hardware protection key, 0..15. Key 0 is the default group.
pub type Pkey = u8;

/// One PKRU entry: access-disable and write-disable bits.
///
/// (0,0) grants read/write, (0,1) read-only, (1,x) no access. Both (1,0)
/// and (1,1) encodings are representable and behave identically; the raw
/// bits are preserved for round-tripping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRight {
    pub ad: bool,
    pub wd: bool,
}

impl AccessRight {
    pub const READ_WRITE: AccessRight = AccessRight { ad: false, wd: false };
    pub const READ_ONLY: AccessRight = AccessRight { ad: false, wd: true };
    pub const NO_ACCESS: AccessRight = AccessRight { ad: true, wd: false };

    pub fn allows_read(self) -> bool {
        !self.ad
    }

    pub fn allows_write(self) -> bool {
        !self.ad && !self.wd
    }

    /// Normalize (1,1) to the canonical no-access encoding (1,0).
    pub fn normalized(self) -> AccessRight {
        if self.ad {
            AccessRight::NO_ACCESS
        } else {
            self
        }
    }
}

/// Per-thread protection-key rights register: 16 two-bit entries indexed
/// by hardware key. Entry 0 covers the default group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pkru {
    entries: [AccessRight; NUM_KEYS],
}

impl Default for Pkru {
    /// Fresh threads start with every entry read/write. The reset value
    /// beyond entry 0 is an assumption; see the crate docs.
    fn default() -> Self {
        Pkru {
            entries: [AccessRight::READ_WRITE; NUM_KEYS],
        }
    }
}

impl Pkru {
    pub fn get(&self, key: Pkey) -> AccessRight {
        self.entries[key as usize]
    }

    pub fn set(&mut self, key: Pkey, right: AccessRight) {
        self.entries[key as usize] = right;
    }
}

/// Page permission flags. Any combination is representable; in particular
/// exec without read/write models an execute-only page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PagePerm {
    pub read: bool,
    pub write: bool,
    pub exec: bool,
}

impl PagePerm {
    pub const NONE: PagePerm = PagePerm { read: false, write: false, exec: false };
    pub const R: PagePerm = PagePerm { read: true, write: false, exec: false };
    pub const RW: PagePerm = PagePerm { read: true, write: true, exec: false };
    pub const RX: PagePerm = PagePerm { read: true, write: false, exec: true };
    pub const RWX: PagePerm = PagePerm { read: true, write: true, exec: true };
    pub const X: PagePerm = PagePerm { read: false, write: false, exec: true };

    /// Exec requested without read or write.
    pub fn is_exec_only(self) -> bool {
        self.exec && !self.read && !self.write
    }
}

/// Kind of memory access. An instruction fetch never consults PKRU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessKind {
    Read,
    Write,
    Fetch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageTableEntry {
    pub perm: PagePerm,
    pub pkey: Pkey,
}

/// Single shared page table. Unmapped pages have no entry and every
/// access to them is denied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PageTable {
    entries: BTreeMap<PageId, PageTableEntry>,
}

impl PageTable {
    pub fn set_pte(&mut self, page: PageId, perm: PagePerm, pkey: Pkey) {
        assert!((pkey as usize) < NUM_KEYS, "pkey must fit in 4 bits");
        self.entries.insert(page, PageTableEntry { perm, pkey });
    }

    pub fn get_pte(&self, page: PageId) -> Option<PageTableEntry> {
        self.entries.get(&page).copied()
    }

    pub fn unmap(&mut self, page: PageId) {
        self.entries.remove(&page);
    }

    pub fn is_mapped(&self, page: PageId) -> bool {
        self.entries.contains_key(&page)
    }

    /// Pages currently carrying the given key.
    pub fn pages_with_key(&self, pkey: Pkey) -> Vec<PageId> {
        self.entries
            .iter()
            .filter(|(_, e)| e.pkey == pkey)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// The access-check rule: the intersection of the page permission and the
/// PKRU entry for the page's key decides data accesses, while a fetch is
/// decided by the page's exec bit alone.
pub fn check_access(pkru: &Pkru, table: &PageTable, page: PageId, kind: AccessKind) -> bool {
    let Some(pte) = table.get_pte(page) else {
        return false;
    };
    match kind {
        AccessKind::Fetch => pte.perm.exec,
        AccessKind::Read => pte.perm.read && pkru.get(pte.pkey).allows_read(),
        AccessKind::Write => pte.perm.write && pkru.get(pte.pkey).allows_write(),
    }
}
