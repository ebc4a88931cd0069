//! Cycle-cost model. Constants come from measured per-call latencies of
//! the MPK instructions and system calls on real hardware; the per-page
//! mprotect slope and the sync bookkeeping constant are calibration
//! parameters, not measurements.

use serde::{Deserialize, Serialize};

/// Per-operation cycle constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub pkey_alloc: f64,
    pub pkey_free: f64,
    pub pkey_mprotect: f64,
    pub mprotect_base: f64,
    pub rdpkru: f64,
    pub wrpkru: f64,
    /// Extra cycles per page beyond the first for mprotect-class calls.
    /// Calibration parameter; the measured number covers one page only.
    pub mprotect_per_extra_page: f64,
    /// Kernel entry plus task-work bookkeeping for a PKRU sync, on top of
    /// the caller's WRPKRU. Calibrated so a single-thread synced update
    /// lands near the reported 12.2x speedup over mprotect.
    pub sync_base: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            pkey_alloc: 186.3,
            pkey_free: 137.2,
            pkey_mprotect: 1104.9,
            mprotect_base: 1094.0,
            rdpkru: 0.5,
            wrpkru: 23.3,
            mprotect_per_extra_page: 3.0,
            sync_base: 66.4,
        }
    }
}

impl CostParams {
    pub fn mprotect(&self, pages: u64) -> f64 {
        assert!(pages >= 1);
        self.mprotect_base + self.mprotect_per_extra_page * (pages - 1) as f64
    }

    pub fn pkey_mprotect_cost(&self, pages: u64) -> f64 {
        assert!(pages >= 1);
        self.pkey_mprotect + self.mprotect_per_extra_page * (pages - 1) as f64
    }
}

/// Accumulated cycle totals, per simulated thread and global.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub per_thread: Vec<f64>,
    pub total: f64,
}

impl CostLedger {
    pub fn charge(&mut self, thread: usize, cycles: f64) {
        debug_assert!(cycles >= 0.0);
        if self.per_thread.len() <= thread {
            self.per_thread.resize(thread + 1, 0.0);
        }
        self.per_thread[thread] += cycles;
        self.total += cycles;
    }

    pub fn thread_total(&self, thread: usize) -> f64 {
        self.per_thread.get(thread).copied().unwrap_or(0.0)
    }
}
