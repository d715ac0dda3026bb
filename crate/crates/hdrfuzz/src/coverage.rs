//! Edge-coverage recording and the coverage-novelty fitness check.
//!
//! Edges are hashed into a fixed-size map: slot = (prev ^ cur) mod size with
//! prev halved after every event, so A->B and B->A land in different slots.
//! Hit counts are classified into eight bucket codes before comparison; a
//! run is "fit" when any slot shows a bucket the global coverage has not
//! absorbed yet. The recorder tracks which slots a run touched, so per-run
//! reset and classification cost scales with edges hit, not map size.

use crate::LocationId;

pub const DEFAULT_MAP_SIZE: usize = 1 << 16;

/// Classifies a raw hit count into its bucket code. Each code is the lowest
/// count of its bucket, so classifying an already-bucketed value is a no-op.
pub fn bucketize(count: u8) -> u8 {
    match count {
        0 => 0,
        1 => 1,
        2 => 2,
        3 => 3,
        4..=7 => 4,
        8..=15 => 8,
        16..=31 => 16,
        32..=127 => 32,
        128..=255 => 128,
    }
}

/// One bit per bucket, for the global seen-set.
fn bucket_bit(code: u8) -> u8 {
    match code {
        0 => 0,
        1 => 1 << 0,
        2 => 1 << 1,
        3 => 1 << 2,
        4 => 1 << 3,
        8 => 1 << 4,
        16 => 1 << 5,
        32 => 1 << 6,
        128 => 1 << 7,
        _ => unreachable!("not a bucket code: {code}"),
    }
}

/// Per-run edge recorder. `prev` is reset at run start so profiles are
/// run-local.
#[derive(Clone, Debug)]
pub struct CoverageRecorder {
    hits: Vec<u8>,
    touched: Vec<u32>,
    prev: u32,
}

impl CoverageRecorder {
    pub fn new(map_size: usize) -> Self {
        assert!(map_size.is_power_of_two());
        CoverageRecorder {
            hits: vec![0; map_size],
            touched: Vec::with_capacity(64),
            prev: 0,
        }
    }

    pub fn map_size(&self) -> usize {
        self.hits.len()
    }

    pub fn reset(&mut self) {
        for &idx in &self.touched {
            self.hits[idx as usize] = 0;
        }
        self.touched.clear();
        self.prev = 0;
    }

    pub fn trace_edge(&mut self, loc: LocationId) {
        let cur = loc.0;
        let idx = ((self.prev ^ cur) as usize) & (self.hits.len() - 1);
        if self.hits[idx] == 0 {
            self.touched.push(idx as u32);
        }
        self.hits[idx] = self.hits[idx].saturating_add(1);
        self.prev = cur >> 1;
    }

    /// Raw (pre-bucketing) hit counts; used by tests that hand-simulate the
    /// hash chain.
    pub fn raw_hits(&self) -> &[u8] {
        &self.hits
    }

    /// Bucketed snapshot of this run.
    pub fn finalize(&self) -> CoverageProfile {
        let mut slots: Vec<(u32, u8)> = self
            .touched
            .iter()
            .map(|&idx| (idx, bucketize(self.hits[idx as usize])))
            .collect();
        slots.sort_unstable_by_key(|&(idx, _)| idx);
        CoverageProfile {
            map_size: self.hits.len(),
            slots,
        }
    }
}

/// Bucketed edge-hit map of one run. Conceptually a fixed-size array of
/// bucket codes; stored as the sorted nonzero slots since a single run
/// touches only a sliver of the map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageProfile {
    map_size: usize,
    slots: Vec<(u32, u8)>,
}

impl CoverageProfile {
    pub fn map_size(&self) -> usize {
        self.map_size
    }

    /// Nonzero slots as (index, bucket code), ascending by index.
    pub fn slots(&self) -> &[(u32, u8)] {
        &self.slots
    }

    /// Dense bucket array, one code per slot.
    pub fn buckets(&self) -> Vec<u8> {
        let mut dense = vec![0u8; self.map_size];
        for &(idx, code) in &self.slots {
            dense[idx as usize] = code;
        }
        dense
    }

    /// Number of slots hit at all; a cheap breadth measure for scheduling.
    pub fn breadth(&self) -> u32 {
        self.slots.len() as u32
    }
}

/// Union of all bucketed profiles retained so far, one bit per bucket per
/// slot. Only ever gains bits.
#[derive(Clone, Debug)]
pub struct GlobalCoverage {
    seen: Vec<u8>,
}

impl GlobalCoverage {
    pub fn new(map_size: usize) -> Self {
        GlobalCoverage {
            seen: vec![0; map_size],
        }
    }

    pub fn seen(&self) -> &[u8] {
        &self.seen
    }
}

/// True iff `profile` exhibits a bucket not yet present in `global`; absorbs
/// the profile into the global map when it does.
pub fn is_fit(profile: &CoverageProfile, global: &mut GlobalCoverage) -> bool {
    debug_assert_eq!(profile.map_size, global.seen.len());
    let novel = profile
        .slots
        .iter()
        .any(|&(idx, code)| bucket_bit(code) & !global.seen[idx as usize] != 0);
    if novel {
        for &(idx, code) in &profile.slots {
            global.seen[idx as usize] |= bucket_bit(code);
        }
    }
    novel
}
