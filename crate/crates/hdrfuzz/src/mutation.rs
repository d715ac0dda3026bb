//! Genetic operators, offspring generation, and fuzz-potential scoring.
//!
//! All fuzzing is havoc-style: each offspring applies a random stack of
//! weighted operators to a copy of the parent input. Operators are drawn and
//! fully parameterized first, then applied, so a recorded operator replays
//! deterministically.

use serde::Deserialize;

use crate::rng::Rng;

/// Values worth planting in a byte, from the classic interesting-8 table.
pub const INTERESTING_BYTES: [u8; 9] = [0x80, 0xFF, 0x00, 0x01, 0x10, 0x20, 0x40, 0x64, 0x7F];

/// Largest delta for byte arithmetic.
pub const ARITH_MAX: i8 = 35;

/// A fully parameterized mutation, deterministic to apply.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MutationOp {
    /// Flip one bit; `bit` counts from the most significant bit of byte 0.
    BitFlip { bit: usize },
    ByteFlip { pos: usize },
    ArithByte { pos: usize, delta: i8 },
    InterestingByte { pos: usize, value: u8 },
    CopyBytes { src: usize, dst: usize, len: usize },
    OverwriteBlock { dst: usize, bytes: Vec<u8> },
    InsertBytes { dst: usize, bytes: Vec<u8> },
    DeleteBytes { dst: usize, len: usize },
    /// Keep a prefix of self, then append the tail of another corpus input.
    Splice { keep: usize, tail: Vec<u8> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MutationOpKind {
    BitFlip,
    ByteFlip,
    ArithByte,
    InterestingByte,
    CopyBytes,
    OverwriteBlock,
    InsertBytes,
    DeleteBytes,
    Splice,
}

impl MutationOp {
    pub fn kind(&self) -> MutationOpKind {
        match self {
            MutationOp::BitFlip { .. } => MutationOpKind::BitFlip,
            MutationOp::ByteFlip { .. } => MutationOpKind::ByteFlip,
            MutationOp::ArithByte { .. } => MutationOpKind::ArithByte,
            MutationOp::InterestingByte { .. } => MutationOpKind::InterestingByte,
            MutationOp::CopyBytes { .. } => MutationOpKind::CopyBytes,
            MutationOp::OverwriteBlock { .. } => MutationOpKind::OverwriteBlock,
            MutationOp::InsertBytes { .. } => MutationOpKind::InsertBytes,
            MutationOp::DeleteBytes { .. } => MutationOpKind::DeleteBytes,
            MutationOp::Splice { .. } => MutationOpKind::Splice,
        }
    }
}

/// Relative draw weights for each operator; loadable from a TOML file.
#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpWeights {
    pub bit_flip: u32,
    pub byte_flip: u32,
    pub arith_byte: u32,
    pub interesting_byte: u32,
    pub copy_bytes: u32,
    pub overwrite_block: u32,
    pub insert_bytes: u32,
    pub delete_bytes: u32,
    pub splice: u32,
}

impl Default for OpWeights {
    fn default() -> Self {
        OpWeights {
            bit_flip: 10,
            byte_flip: 6,
            arith_byte: 12,
            interesting_byte: 10,
            copy_bytes: 12,
            overwrite_block: 8,
            insert_bytes: 6,
            delete_bytes: 6,
            splice: 4,
        }
    }
}

impl OpWeights {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    fn table(&self) -> [(MutationOpKind, u32); 9] {
        [
            (MutationOpKind::BitFlip, self.bit_flip),
            (MutationOpKind::ByteFlip, self.byte_flip),
            (MutationOpKind::ArithByte, self.arith_byte),
            (MutationOpKind::InterestingByte, self.interesting_byte),
            (MutationOpKind::CopyBytes, self.copy_bytes),
            (MutationOpKind::OverwriteBlock, self.overwrite_block),
            (MutationOpKind::InsertBytes, self.insert_bytes),
            (MutationOpKind::DeleteBytes, self.delete_bytes),
            (MutationOpKind::Splice, self.splice),
        ]
    }

    fn draw_kind(&self, rng: &mut Rng) -> MutationOpKind {
        let table = self.table();
        let total: u32 = table.iter().map(|(_, w)| w).sum();
        assert!(total > 0, "all operator weights are zero");
        let mut roll = rng.below(total as u64) as u32;
        for (kind, w) in table {
            if roll < w {
                return kind;
            }
            roll -= w;
        }
        unreachable!()
    }
}

#[derive(Clone, Debug)]
pub struct MutatorConfig {
    pub weights: OpWeights,
    pub max_len: usize,
    /// Maximum operators stacked per offspring.
    pub havoc_stack_max: usize,
    pub n_min: u32,
    pub n_max: u32,
    /// Base offspring count before the clamped fitness factors.
    pub n_base: u32,
}

impl Default for MutatorConfig {
    fn default() -> Self {
        MutatorConfig {
            weights: OpWeights::default(),
            max_len: 4096,
            havoc_stack_max: 8,
            n_min: 16,
            n_max: 4096,
            n_base: 512,
        }
    }
}

/// Read view of the corpus used for splicing.
pub trait SpliceSource {
    fn pick_payload(&self, rng: &mut Rng) -> Option<&[u8]>;
}

/// Splice source with nothing to offer; splice degrades to a block overwrite.
pub struct NoSplice;

impl SpliceSource for NoSplice {
    fn pick_payload(&self, _rng: &mut Rng) -> Option<&[u8]> {
        None
    }
}

/// One generated input plus the operators that produced it.
#[derive(Clone, Debug)]
pub struct Offspring {
    pub data: Vec<u8>,
    pub ops: Vec<MutationOpKind>,
}

/// Havoc block length: mostly small edits, never more than 32 bytes, so
/// progress on size-driven paths comes from retained intermediates rather
/// than single giant jumps.
fn block_len(rng: &mut Rng, max: usize) -> usize {
    let cap = match rng.below(20) {
        0..=9 => 8,
        10..=15 => 16,
        _ => 32,
    };
    rng.range(1, cap.min(max).max(1))
}

fn random_overwrite(len: usize, rng: &mut Rng) -> MutationOp {
    let l = block_len(rng, len);
    let dst = rng.range(0, len - l);
    let mut bytes = vec![0u8; l];
    rng.fill(&mut bytes);
    MutationOp::OverwriteBlock { dst, bytes }
}

/// Draws one fully parameterized operator for an input of length `len`.
pub fn draw_op(
    len: usize,
    rng: &mut Rng,
    cfg: &MutatorConfig,
    corpus: &dyn SpliceSource,
) -> MutationOp {
    debug_assert!(len >= 1);
    let kind = cfg.weights.draw_kind(rng);
    match kind {
        MutationOpKind::BitFlip => MutationOp::BitFlip {
            bit: rng.range(0, len * 8 - 1),
        },
        MutationOpKind::ByteFlip => MutationOp::ByteFlip {
            pos: rng.range(0, len - 1),
        },
        MutationOpKind::ArithByte => {
            let mut delta = rng.range(1, ARITH_MAX as usize) as i8;
            if rng.chance(1, 2) {
                delta = -delta;
            }
            MutationOp::ArithByte {
                pos: rng.range(0, len - 1),
                delta,
            }
        }
        MutationOpKind::InterestingByte => MutationOp::InterestingByte {
            pos: rng.range(0, len - 1),
            value: *rng.pick(&INTERESTING_BYTES),
        },
        MutationOpKind::CopyBytes => {
            let l = block_len(rng, len);
            MutationOp::CopyBytes {
                src: rng.range(0, len - l),
                dst: rng.range(0, len - l),
                len: l,
            }
        }
        MutationOpKind::OverwriteBlock => random_overwrite(len, rng),
        MutationOpKind::InsertBytes => {
            let room = cfg.max_len.saturating_sub(len);
            if room == 0 {
                // At the length cap: overwrite instead of growing.
                return random_overwrite(len, rng);
            }
            let l = block_len(rng, room);
            let mut bytes = vec![0u8; l];
            rng.fill(&mut bytes);
            MutationOp::InsertBytes {
                dst: rng.range(0, len),
                bytes,
            }
        }
        MutationOpKind::DeleteBytes => {
            if len == 1 {
                return MutationOp::ByteFlip { pos: 0 };
            }
            let l = block_len(rng, len - 1);
            MutationOp::DeleteBytes {
                dst: rng.range(0, len - l),
                len: l,
            }
        }
        MutationOpKind::Splice => match corpus.pick_payload(rng) {
            Some(other) if !other.is_empty() => {
                let keep = rng.range(1, len);
                let cut = rng.range(0, other.len() - 1);
                let mut tail = other[cut..].to_vec();
                tail.truncate(cfg.max_len - keep.min(cfg.max_len));
                MutationOp::Splice { keep, tail }
            }
            _ => random_overwrite(len, rng),
        },
    }
}

/// Applies one operator in place. The result always has length in
/// `[1, max_len]` given in-range parameters from [`draw_op`].
pub fn apply_op(data: &mut Vec<u8>, op: &MutationOp) {
    match op {
        MutationOp::BitFlip { bit } => {
            let pos = bit / 8;
            data[pos] ^= 0x80 >> (bit % 8);
        }
        MutationOp::ByteFlip { pos } => {
            data[*pos] ^= 0xFF;
        }
        MutationOp::ArithByte { pos, delta } => {
            data[*pos] = data[*pos].wrapping_add(*delta as u8);
        }
        MutationOp::InterestingByte { pos, value } => {
            data[*pos] = *value;
        }
        MutationOp::CopyBytes { src, dst, len } => {
            data.copy_within(*src..*src + *len, *dst);
        }
        MutationOp::OverwriteBlock { dst, bytes } => {
            data[*dst..*dst + bytes.len()].copy_from_slice(bytes);
        }
        MutationOp::InsertBytes { dst, bytes } => {
            data.splice(*dst..*dst, bytes.iter().copied());
        }
        MutationOp::DeleteBytes { dst, len } => {
            data.drain(*dst..*dst + *len);
        }
        MutationOp::Splice { keep, tail } => {
            data.truncate(*keep);
            data.extend_from_slice(tail);
        }
    }
}

/// Generates exactly `n` offspring of `parent` by stacking random operators.
pub fn generate_offspring(
    parent: &[u8],
    n: u32,
    rng: &mut Rng,
    cfg: &MutatorConfig,
    corpus: &dyn SpliceSource,
) -> Vec<Offspring> {
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let mut data = parent.to_vec();
        if data.is_empty() {
            data.push(0);
        }
        let stack = rng.range(1, cfg.havoc_stack_max.max(1));
        let mut ops = Vec::with_capacity(stack);
        for _ in 0..stack {
            let op = draw_op(data.len(), rng, cfg, corpus);
            ops.push(op.kind());
            apply_op(&mut data, &op);
            debug_assert!(!data.is_empty() && data.len() <= cfg.max_len);
        }
        out.push(Offspring { data, ops });
    }
    out
}

/// Scheduling statistics a corpus exposes to the potential heuristic.
#[derive(Clone, Copy, Debug)]
pub struct CorpusStats {
    pub mean_len: f64,
    pub mean_breadth: f64,
}

impl Default for CorpusStats {
    fn default() -> Self {
        CorpusStats {
            mean_len: 1.0,
            mean_breadth: 1.0,
        }
    }
}

/// Scheduling inputs for one corpus node.
#[derive(Clone, Copy, Debug)]
pub struct NodeFitness {
    pub depth: u32,
    pub len: usize,
    /// Coverage breadth of the node's retention run, when known.
    pub breadth: Option<u32>,
}

/// Offspring count for a selected input:
///
///   N = clamp(base * f_breadth * f_depth * f_len, n_min, n_max)
///
/// where each factor is clamped to [0.25, 2]:
///   f_breadth = breadth / mean_breadth   (1 when breadth is unknown)
///   f_depth   = 8 / (4 + depth)          (never increases with depth)
///   f_len     = mean_len / len           (shorter inputs fuzz more)
pub fn get_fuzz_potential(node: &NodeFitness, stats: &CorpusStats, cfg: &MutatorConfig) -> u32 {
    let clamp = |x: f64| x.clamp(0.25, 2.0);
    let f_breadth = match node.breadth {
        Some(b) => clamp(b as f64 / stats.mean_breadth.max(1.0)),
        None => 1.0,
    };
    let f_depth = clamp(8.0 / (4.0 + node.depth as f64));
    let f_len = clamp(stats.mean_len.max(1.0) / (node.len as f64).max(1.0));
    let n = (cfg.n_base as f64 * f_breadth * f_depth * f_len).round() as u32;
    n.clamp(cfg.n_min, cfg.n_max)
}
