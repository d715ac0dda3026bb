//! Granule-level shadow memory with redzones around every buffer.
//!
//! Main memory is modeled at a fixed granule size (default 8 bytes per
//! shadow entry). Every allocation is rounded up to whole granules and
//! flanked by left/right redzone granules; a write that touches any
//! non-addressable granule is an overrun. On in-bounds writes the runtime
//! can additionally measure the *headroom* of the write: how many granules
//! remain between the written granule and the buffer's right redzone,
//! scaled by the buffer size into `[1, 128]`. Low headroom means the run
//! came close to an overrun without crossing it.

use std::collections::{BTreeMap, HashMap};

use crate::{EngineError, LocationId};

/// Scaled headroom of a site that was never approached.
pub const HEADROOM_MAX: u8 = 128;

/// Addressability class of one granule of main memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShadowCode {
    Unallocated,
    Addressable,
    LeftRedzone,
    RightRedzone,
}

/// A live allocation. Handles are plain values; the map tracks liveness by id.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BufferHandle {
    pub id: u32,
    pub base_granule: usize,
    pub size_granules: usize,
    pub size_bytes: usize,
    pub alloc_site: LocationId,
}

/// An out-of-bounds write event. `overrun_granules` is positive for writes
/// past the buffer end, negative for writes before its start, and zero for
/// writes landing inside the granule range of a stale (freed) handle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrashReport {
    pub store_idx: LocationId,
    pub input_id: Option<u64>,
    pub write_granule: usize,
    pub overrun_granules: i64,
}

/// Outcome of a checked buffer write.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WriteOutcome {
    /// Write stayed inside addressable granules. Carries the scaled headroom
    /// when the write was profiled.
    InBounds { headroom: Option<u8> },
    Overrun(CrashReport),
}

#[derive(Clone, Copy, Debug)]
pub struct ShadowConfig {
    /// Bytes of main memory per shadow entry; must be a power of two.
    pub granule_bytes: usize,
    /// Redzone width in granules on each side of a buffer.
    pub redzone_granules: usize,
    pub capacity_granules: usize,
}

impl Default for ShadowConfig {
    fn default() -> Self {
        ShadowConfig {
            granule_bytes: 8,
            redzone_granules: 2,
            capacity_granules: 8192,
        }
    }
}

/// Per-run map from buffer-write site to the minimum scaled headroom
/// observed at that site. Absent sites read as 128 ("not approached").
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HeadroomProfile {
    entries: BTreeMap<LocationId, u8>,
}

impl HeadroomProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, site: LocationId) -> u8 {
        self.entries.get(&site).copied().unwrap_or(HEADROOM_MAX)
    }

    /// Records a visit; the entry keeps the minimum across all visits in the run.
    pub fn observe(&mut self, site: LocationId, scaled: u8) {
        debug_assert!((1..=HEADROOM_MAX).contains(&scaled));
        let e = self.entries.entry(site).or_insert(HEADROOM_MAX);
        *e = (*e).min(scaled);
    }

    pub fn snapshot(&self) -> HeadroomProfile {
        self.clone()
    }

    pub fn reset(&mut self) {
        self.entries.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = (LocationId, u8)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Shadow memory for one execution context. Owns the granule codes and the
/// liveness table; never shared between workers.
#[derive(Clone, Debug)]
pub struct ShadowMap {
    granule_bytes: usize,
    redzone_granules: usize,
    codes: Vec<ShadowCode>,
    live: HashMap<u32, BufferHandle>,
    next_id: u32,
}

impl ShadowMap {
    pub fn new(cfg: ShadowConfig) -> Self {
        assert!(cfg.granule_bytes.is_power_of_two(), "granule size must be a power of two");
        assert!(cfg.redzone_granules >= 1, "redzone must be at least one granule");
        ShadowMap {
            granule_bytes: cfg.granule_bytes,
            redzone_granules: cfg.redzone_granules,
            codes: vec![ShadowCode::Unallocated; cfg.capacity_granules],
            live: HashMap::new(),
            next_id: 0,
        }
    }

    pub fn granule_bytes(&self) -> usize {
        self.granule_bytes
    }

    pub fn redzone_granules(&self) -> usize {
        self.redzone_granules
    }

    pub fn capacity_granules(&self) -> usize {
        self.codes.len()
    }

    /// Code of a granule; indices outside the map read as Unallocated.
    pub fn code(&self, granule: usize) -> ShadowCode {
        self.codes.get(granule).copied().unwrap_or(ShadowCode::Unallocated)
    }

    /// Clears all allocations, returning the map to its freshly-built state.
    pub fn clear(&mut self) {
        self.codes.fill(ShadowCode::Unallocated);
        self.live.clear();
        self.next_id = 0;
    }

    /// First-fit scan for `footprint` consecutive unallocated granules.
    fn find_gap(&self, footprint: usize) -> Option<usize> {
        let mut run = 0usize;
        for (g, code) in self.codes.iter().enumerate() {
            if *code == ShadowCode::Unallocated {
                run += 1;
                if run == footprint {
                    return Some(g + 1 - footprint);
                }
            } else {
                run = 0;
            }
        }
        None
    }

    /// Allocates `size_bytes` rounded up to whole granules, flanked by
    /// redzones on both sides. First-fit over unallocated granules.
    pub fn alloc_buffer(
        &mut self,
        size_bytes: usize,
        alloc_site: LocationId,
    ) -> Result<BufferHandle, EngineError> {
        assert!(size_bytes >= 1);
        let k = size_bytes.div_ceil(self.granule_bytes);
        let r = self.redzone_granules;
        let footprint = k + 2 * r;
        let start = self.find_gap(footprint).ok_or(EngineError::ShadowCapacity {
            requested: footprint,
            free: self.codes.iter().filter(|c| **c == ShadowCode::Unallocated).count(),
        })?;
        for g in start..start + r {
            self.codes[g] = ShadowCode::LeftRedzone;
        }
        for g in start + r..start + r + k {
            self.codes[g] = ShadowCode::Addressable;
        }
        for g in start + r + k..start + footprint {
            self.codes[g] = ShadowCode::RightRedzone;
        }
        let handle = BufferHandle {
            id: self.next_id,
            base_granule: start + r,
            size_granules: k,
            size_bytes,
            alloc_site,
        };
        self.next_id += 1;
        self.live.insert(handle.id, handle);
        Ok(handle)
    }

    /// Frees a live buffer; its granules and both redzones become Unallocated.
    pub fn free_buffer(&mut self, h: BufferHandle) -> Result<(), EngineError> {
        match self.live.remove(&h.id) {
            Some(rec) if rec == h => {
                let r = self.redzone_granules;
                let start = h.base_granule - r;
                for g in start..h.base_granule + h.size_granules + r {
                    self.codes[g] = ShadowCode::Unallocated;
                }
                Ok(())
            }
            Some(rec) => {
                // Stale handle with a recycled id: restore and reject.
                self.live.insert(rec.id, rec);
                Err(EngineError::UnknownHandle { id: h.id })
            }
            None if h.id < self.next_id => Err(EngineError::DoubleFree { id: h.id }),
            None => Err(EngineError::UnknownHandle { id: h.id }),
        }
    }

    pub fn is_live(&self, h: BufferHandle) -> bool {
        self.live.get(&h.id) == Some(&h)
    }

    /// Bounds-checks a write of `len_bytes` at signed byte offset
    /// `offset_bytes` relative to the buffer base. The write faults if any
    /// touched granule is not Addressable. On an in-bounds write, when
    /// `profile` is supplied the headroom of the granule holding the last
    /// byte written is recorded at `store_idx`.
    pub fn checked_write(
        &self,
        h: BufferHandle,
        offset_bytes: i64,
        len_bytes: usize,
        store_idx: LocationId,
        profile: Option<&mut HeadroomProfile>,
    ) -> WriteOutcome {
        assert!(len_bytes >= 1);
        let gb = self.granule_bytes as i64;
        let first_rel = offset_bytes.div_euclid(gb);
        let last_rel = (offset_bytes + len_bytes as i64 - 1).div_euclid(gb);
        let base = h.base_granule as i64;
        for rel in first_rel..=last_rel {
            let abs = base + rel;
            let code = if abs < 0 {
                ShadowCode::Unallocated
            } else {
                self.code(abs as usize)
            };
            if code != ShadowCode::Addressable {
                let k = h.size_granules as i64;
                let overrun_granules = if rel >= k {
                    rel - k + 1
                } else if rel < 0 {
                    rel
                } else {
                    0 // inside the handle's former range (stale handle)
                };
                return WriteOutcome::Overrun(CrashReport {
                    store_idx,
                    input_id: None,
                    write_granule: abs.max(0) as usize,
                    overrun_granules,
                });
            }
        }
        let headroom = profile.map(|p| {
            let last_granule = (base + last_rel) as usize;
            self.calculate_headroom(last_granule, store_idx, p)
        });
        WriteOutcome::InBounds { headroom }
    }

    /// Two-pointer walk from an addressable granule: count granules rightward
    /// until the right redzone (raw headroom, inclusive of the first step)
    /// and leftward until the left redzone (left margin). The denominator
    /// `left_margin + raw - 1` reconstructs the buffer size in granules.
    pub fn calculate_headroom(
        &self,
        write_granule: usize,
        store_idx: LocationId,
        profile: &mut HeadroomProfile,
    ) -> u8 {
        debug_assert_eq!(self.code(write_granule), ShadowCode::Addressable);
        let mut end = write_granule;
        let mut raw: usize = 0;
        while self.codes[end] != ShadowCode::RightRedzone {
            end += 1;
            raw += 1;
        }
        let mut beg = write_granule;
        let mut left_margin: usize = 0;
        while self.codes[beg] != ShadowCode::LeftRedzone {
            beg -= 1;
            left_margin += 1;
        }
        let scaled = (raw * 128) / (left_margin + raw - 1).max(1);
        // Buffers larger than 128 granules would floor to 0 near the end;
        // 0 is reserved for overruns, so the scale bottoms out at 1.
        let scaled = scaled.clamp(1, HEADROOM_MAX as usize) as u8;
        profile.observe(store_idx, scaled);
        scaled
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    const SITE: LocationId = LocationId(0xA1);
    const ALLOC: LocationId = LocationId(0xA2);

    fn map(granule_bytes: usize, redzone: usize) -> ShadowMap {
        ShadowMap::new(ShadowConfig {
            granule_bytes,
            redzone_granules: redzone,
            capacity_granules: 4096,
        })
    }

    #[test]
    fn alloc_rounds_up_to_granules() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(64, ALLOC).unwrap();
        assert_eq!(h.size_granules, 8);
        let h2 = m.alloc_buffer(1, ALLOC).unwrap();
        assert_eq!(h2.size_granules, 1);
    }

    #[test]
    fn consecutive_allocs_never_overlap() {
        // Enumerate layouts for redzone widths 1 and 2 and sizes 1..=16
        // granules; verify by brute-force scan that every granule belongs to
        // at most one buffer footprint and buffers are spaced by > 2R.
        for r in 1..=2usize {
            for ka in 1..=16usize {
                for kb in 1..=16usize {
                    let mut m = map(1, r);
                    let a = m.alloc_buffer(ka, ALLOC).unwrap();
                    let b = m.alloc_buffer(kb, ALLOC).unwrap();
                    assert!(
                        b.base_granule > a.base_granule + a.size_granules - 1 + 2 * r,
                        "r={r} ka={ka} kb={kb}"
                    );
                    let footprint = |h: &BufferHandle| {
                        (h.base_granule - r)..(h.base_granule + h.size_granules + r)
                    };
                    let fa = footprint(&a);
                    let fb = footprint(&b);
                    for g in 0..m.capacity_granules() {
                        assert!(!(fa.contains(&g) && fb.contains(&g)), "overlap at {g}");
                    }
                }
            }
        }
    }

    #[test]
    fn free_then_realloc_reuses_layout() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(40, ALLOC).unwrap();
        let base = h.base_granule;
        m.free_buffer(h).unwrap();
        let h2 = m.alloc_buffer(40, ALLOC).unwrap();
        assert_eq!(h2.base_granule, base);
        assert_eq!(h2.size_granules, h.size_granules);
    }

    #[test]
    fn write_after_free_is_reported() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(64, ALLOC).unwrap();
        m.free_buffer(h).unwrap();
        let out = m.checked_write(h, 0, 1, SITE, None);
        match out {
            WriteOutcome::Overrun(rep) => {
                assert_eq!(rep.store_idx, SITE);
                assert_eq!(rep.overrun_granules, 0);
            }
            other => panic!("expected overrun, got {other:?}"),
        }
    }

    #[test]
    fn double_free_and_unknown_handle_are_engine_errors() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(8, ALLOC).unwrap();
        m.free_buffer(h).unwrap();
        assert_eq!(m.free_buffer(h), Err(EngineError::DoubleFree { id: h.id }));
        let bogus = BufferHandle {
            id: 999,
            base_granule: 10,
            size_granules: 1,
            size_bytes: 8,
            alloc_site: ALLOC,
        };
        assert_eq!(m.free_buffer(bogus), Err(EngineError::UnknownHandle { id: 999 }));
    }

    #[test]
    fn boundary_writes() {
        let mut m = map(8, 2);
        // 16-granule buffer: last byte of granule 15 is in bounds, granule 16 is not.
        let h = m.alloc_buffer(128, ALLOC).unwrap();
        let ok = m.checked_write(h, 127, 1, SITE, None);
        assert_eq!(ok, WriteOutcome::InBounds { headroom: None });
        let bad = m.checked_write(h, 128, 1, SITE, None);
        match bad {
            WriteOutcome::Overrun(rep) => {
                assert_eq!(rep.overrun_granules, 1);
                assert_eq!(m.code(rep.write_granule), ShadowCode::RightRedzone);
            }
            other => panic!("expected overrun, got {other:?}"),
        }
    }

    #[test]
    fn left_underflow_is_reported() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(64, ALLOC).unwrap();
        match m.checked_write(h, -1, 1, SITE, None) {
            WriteOutcome::Overrun(rep) => {
                assert_eq!(rep.overrun_granules, -1);
                assert_eq!(m.code(rep.write_granule), ShadowCode::LeftRedzone);
            }
            other => panic!("expected overrun, got {other:?}"),
        }
    }

    #[test]
    fn random_in_bounds_writes_never_report() {
        let mut rng = Rng::new(11);
        for _ in 0..10_000 {
            let gb = [1, 2, 8][rng.range(0, 2)];
            let mut m = map(gb, rng.range(1, 3));
            let size = rng.range(1, 200);
            let h = m.alloc_buffer(size, ALLOC).unwrap();
            let cap = h.size_granules * gb;
            let off = rng.range(0, cap - 1);
            let len = rng.range(1, cap - off);
            // Independent bounds oracle: the whole byte range fits the
            // granule-rounded capacity, so no write may be reported.
            assert!(off + len <= cap);
            let mut p = HeadroomProfile::new();
            match m.checked_write(h, off as i64, len, SITE, Some(&mut p)) {
                WriteOutcome::InBounds { headroom: Some(s) } => {
                    assert!((1..=128).contains(&s));
                }
                other => panic!("false positive: {other:?}"),
            }
        }
    }

    #[test]
    fn headroom_from_first_granule_is_128() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(64, ALLOC).unwrap(); // k = 8
        let mut p = HeadroomProfile::new();
        let s = m.calculate_headroom(h.base_granule, SITE, &mut p);
        assert_eq!(s, 128);
    }

    #[test]
    fn headroom_at_last_granule_of_eight() {
        // k=8, write in granule index 7: raw=1, left margin=8,
        // scaled = 128 / 8 = 16.
        let mut m = map(8, 2);
        let h = m.alloc_buffer(64, ALLOC).unwrap();
        let mut p = HeadroomProfile::new();
        let s = m.calculate_headroom(h.base_granule + 7, SITE, &mut p);
        assert_eq!(s, 16);
        assert_eq!(p.get(SITE), 16);
    }

    #[test]
    fn headroom_walk_matches_direct_formula_exhaustively() {
        // For every buffer size k in [1,64] granules and write position i,
        // the two-pointer walk must equal floor((k-i)*128/k).
        for k in 1..=64usize {
            let mut m = map(8, 2);
            let h = m.alloc_buffer(k * 8, ALLOC).unwrap();
            for i in 0..k {
                let mut p = HeadroomProfile::new();
                let s = m.calculate_headroom(h.base_granule + i, SITE, &mut p);
                let expect = ((k - i) * 128) / k;
                assert_eq!(s as usize, expect, "k={k} i={i}");
                assert_eq!(s == 128, i == 0, "scaled=128 iff first granule");
            }
        }
    }

    #[test]
    fn walk_reconstructs_buffer_size() {
        // left_margin + raw - 1 == k for all in-bounds positions.
        let mut m = map(8, 2);
        for k in 1..=32usize {
            let h = m.alloc_buffer(k * 8, ALLOC).unwrap();
            for i in 0..k {
                let g = h.base_granule + i;
                let mut end = g;
                let mut raw = 0usize;
                while m.code(end) != ShadowCode::RightRedzone {
                    end += 1;
                    raw += 1;
                }
                let mut beg = g;
                let mut lm = 0usize;
                while m.code(beg) != ShadowCode::LeftRedzone {
                    beg -= 1;
                    lm += 1;
                }
                assert_eq!(lm + raw - 1, k);
            }
            m.free_buffer(m.live.values().next().copied().unwrap()).unwrap();
        }
    }

    #[test]
    fn profile_takes_min_across_visits_in_both_orders() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(64, ALLOC).unwrap(); // k=8
        // Visit positions yielding scaled 48 (i=5) and 16 (i=7), both orders.
        for order in [[5usize, 7], [7, 5]] {
            let mut p = HeadroomProfile::new();
            for i in order {
                m.calculate_headroom(h.base_granule + i, SITE, &mut p);
            }
            assert_eq!(p.get(SITE), 16);
        }
    }

    #[test]
    fn profile_entries_non_increasing_within_run() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(128, ALLOC).unwrap();
        let mut p = HeadroomProfile::new();
        let mut rng = Rng::new(5);
        let mut last = 128u8;
        for _ in 0..200 {
            let i = rng.range(0, h.size_granules - 1);
            m.calculate_headroom(h.base_granule + i, SITE, &mut p);
            let now = p.get(SITE);
            assert!(now <= last);
            last = now;
        }
    }

    #[test]
    fn snapshot_and_reset() {
        let mut m = map(8, 2);
        let h = m.alloc_buffer(64, ALLOC).unwrap();
        let mut p = HeadroomProfile::new();
        p.reset();
        assert!(p.snapshot().is_empty());
        m.calculate_headroom(h.base_granule + 7, SITE, &mut p);
        let snap = p.snapshot();
        assert_eq!(snap.iter().collect::<Vec<_>>(), vec![(SITE, 16)]);
        p.reset();
        assert!(p.is_empty());
        assert_eq!(p.get(SITE), 128);
    }

    #[test]
    fn redzone_isolation_under_alloc_free_churn() {
        // No sequence of valid alloc/free operations may leave two
        // addressable ranges adjacent without an intervening redzone.
        let mut rng = Rng::new(23);
        let mut m = map(1, 1);
        let mut live: Vec<BufferHandle> = Vec::new();
        for _ in 0..500 {
            if live.is_empty() || rng.chance(3, 5) {
                if let Ok(h) = m.alloc_buffer(rng.range(1, 40), ALLOC) {
                    live.push(h);
                }
            } else {
                let h = live.swap_remove(rng.range(0, live.len() - 1));
                m.free_buffer(h).unwrap();
            }
            for g in 0..m.capacity_granules().saturating_sub(1) {
                let a = m.code(g);
                let b = m.code(g + 1);
                if a == ShadowCode::Addressable && b == ShadowCode::Addressable {
                    // Both must belong to the same buffer.
                    let owner = live.iter().find(|h| {
                        (h.base_granule..h.base_granule + h.size_granules).contains(&g)
                    });
                    let owner2 = live.iter().find(|h| {
                        (h.base_granule..h.base_granule + h.size_granules).contains(&(g + 1))
                    });
                    assert_eq!(
                        owner.map(|h| h.id),
                        owner2.map(|h| h.id),
                        "adjacent addressable granules from different buffers at {g}"
                    );
                }
            }
        }
    }

    #[test]
    fn capacity_exhaustion_is_an_engine_error() {
        let mut m = ShadowMap::new(ShadowConfig {
            granule_bytes: 8,
            redzone_granules: 2,
            capacity_granules: 16,
        });
        let _ = m.alloc_buffer(64, ALLOC).unwrap(); // 8 + 4 redzone = 12 of 16
        match m.alloc_buffer(64, ALLOC) {
            Err(EngineError::ShadowCapacity { .. }) => {}
            other => panic!("expected capacity error, got {other:?}"),
        }
    }
}
