//! Built-in benchmark targets with seeded buffer-overrun vulnerabilities.
//!
//! Each target is a small deterministic parser or accumulator whose overruns
//! require a *gradual approach*: the faulting write offset is driven by a
//! quantity (a byte tally, a run length, a cumulative total) that mutation
//! can only ratchet up step by step, so headroom feedback has a gradient to
//! climb. A few sites instead sit behind byte-staircase gates and fall to
//! plain coverage search, giving the coverage-only baseline something to
//! find too. Declared sites and witnesses are evaluation metadata; the
//! engine itself never reads them.

use crate::harness::{RunCtx, Step, Target};
use crate::LocationId;

// lenfield_copy: input[0] bytes copied into a 32-byte buffer.
const LC_ENTRY: LocationId = LocationId(0x1100);
const LC_EMPTY: LocationId = LocationId(0x1101);
const LC_LOOP: LocationId = LocationId(0x1102);
const LC_DONE: LocationId = LocationId(0x1103);
const LC_ALLOC: LocationId = LocationId(0x11A0);
pub const LC_SITE_COPY: LocationId = LocationId(0x11F0);

fn lenfield_copy(ctx: &mut RunCtx, input: &[u8]) -> Step {
    ctx.edge(LC_ENTRY)?;
    if input.is_empty() {
        ctx.edge(LC_EMPTY)?;
        return Ok(());
    }
    let n = input[0] as usize;
    let buf = ctx.alloc(32, LC_ALLOC)?;
    for i in 0..n {
        ctx.edge(LC_LOOP)?;
        ctx.write(buf, i as i64, 1, LC_SITE_COPY)?;
    }
    ctx.edge(LC_DONE)
}

fn lc_witness() -> Vec<u8> {
    vec![200]
}

// tally_writer: writes one byte per 'A' in the input into a 512-byte buffer.
const TW_ENTRY: LocationId = LocationId(0x2200);
const TW_SCAN: LocationId = LocationId(0x2201);
const TW_HIT: LocationId = LocationId(0x2202);
const TW_WRITE: LocationId = LocationId(0x2203);
const TW_DONE: LocationId = LocationId(0x2204);
const TW_ALLOC: LocationId = LocationId(0x22A0);
pub const TW_SITE_TALLY: LocationId = LocationId(0x22F0);

fn tally_writer(ctx: &mut RunCtx, input: &[u8]) -> Step {
    ctx.edge(TW_ENTRY)?;
    let buf = ctx.alloc(512, TW_ALLOC)?;
    let mut n = 0usize;
    for &b in input {
        ctx.edge(TW_SCAN)?;
        if b == b'A' {
            ctx.edge(TW_HIT)?;
            n += 1;
        }
    }
    for i in 0..n {
        ctx.edge(TW_WRITE)?;
        ctx.write(buf, i as i64, 1, TW_SITE_TALLY)?;
    }
    ctx.edge(TW_DONE)
}

fn tw_witness() -> Vec<u8> {
    vec![b'A'; 513]
}

// magic_staircase: "OVF" byte gate, then '!' hits a fixed overflow while '#'
// opens a gated tally overflow on 'B' bytes.
const MS_ENTRY: LocationId = LocationId(0x3300);
const MS_G0: LocationId = LocationId(0x3301);
const MS_G1: LocationId = LocationId(0x3302);
const MS_G2: LocationId = LocationId(0x3303);
const MS_BANG: LocationId = LocationId(0x3304);
const MS_HASH: LocationId = LocationId(0x3305);
const MS_SCAN: LocationId = LocationId(0x3306);
const MS_HITB: LocationId = LocationId(0x3307);
const MS_WRITE: LocationId = LocationId(0x3308);
const MS_OUT: LocationId = LocationId(0x3309);
const MS_ALLOC_FIX: LocationId = LocationId(0x33A0);
const MS_ALLOC_TLY: LocationId = LocationId(0x33A1);
pub const MS_SITE_FIXED: LocationId = LocationId(0x33E0);
pub const MS_SITE_TALLY: LocationId = LocationId(0x33F0);

fn magic_staircase(ctx: &mut RunCtx, input: &[u8]) -> Step {
    ctx.edge(MS_ENTRY)?;
    if input.first() != Some(&b'O') {
        ctx.edge(MS_OUT)?;
        return Ok(());
    }
    ctx.edge(MS_G0)?;
    if input.get(1) != Some(&b'V') {
        ctx.edge(MS_OUT)?;
        return Ok(());
    }
    ctx.edge(MS_G1)?;
    if input.get(2) != Some(&b'F') {
        ctx.edge(MS_OUT)?;
        return Ok(());
    }
    ctx.edge(MS_G2)?;
    match input.get(3) {
        Some(&b'!') => {
            ctx.edge(MS_BANG)?;
            let buf = ctx.alloc(8, MS_ALLOC_FIX)?;
            ctx.write(buf, 8, 1, MS_SITE_FIXED)?;
        }
        Some(&b'#') => {
            ctx.edge(MS_HASH)?;
            let buf = ctx.alloc(512, MS_ALLOC_TLY)?;
            let mut m = 0usize;
            for &b in &input[4..] {
                ctx.edge(MS_SCAN)?;
                if b == b'B' {
                    ctx.edge(MS_HITB)?;
                    m += 1;
                }
            }
            for i in 0..m {
                ctx.edge(MS_WRITE)?;
                ctx.write(buf, i as i64, 1, MS_SITE_TALLY)?;
            }
        }
        _ => {
            ctx.edge(MS_OUT)?;
        }
    }
    Ok(())
}

fn ms_witness_fixed() -> Vec<u8> {
    b"OVF!".to_vec()
}

fn ms_witness_tally() -> Vec<u8> {
    let mut w = b"OVF#".to_vec();
    w.extend(std::iter::repeat_n(b'B', 513));
    w
}

// record_assembler: [tag, len, payload] records. Tag 0x10 appends the 'D'
// bytes of its payload into a 384-byte accumulator at a cumulative offset;
// tag 0x20 with a 'Z' payload arms a flag; tag 0x30 then writes its
// *declared* length into a 16-byte name buffer.
const RA_ENTRY: LocationId = LocationId(0x4400);
const RA_RECORD: LocationId = LocationId(0x4401);
const RA_T10: LocationId = LocationId(0x4402);
const RA_APPEND: LocationId = LocationId(0x4403);
const RA_T20: LocationId = LocationId(0x4404);
const RA_FLAG: LocationId = LocationId(0x4405);
const RA_T30: LocationId = LocationId(0x4406);
const RA_T30F: LocationId = LocationId(0x4407);
const RA_NAMEW: LocationId = LocationId(0x4408);
const RA_OTHER: LocationId = LocationId(0x4409);
const RA_DONE: LocationId = LocationId(0x440A);
const RA_ALLOC_ACC: LocationId = LocationId(0x44A0);
const RA_ALLOC_NAME: LocationId = LocationId(0x44A1);
pub const RA_SITE_ACCUM: LocationId = LocationId(0x44E0);
pub const RA_SITE_NAME: LocationId = LocationId(0x44F0);

fn record_assembler(ctx: &mut RunCtx, input: &[u8]) -> Step {
    ctx.edge(RA_ENTRY)?;
    let acc = ctx.alloc(384, RA_ALLOC_ACC)?;
    let name = ctx.alloc(16, RA_ALLOC_NAME)?;
    let mut pos = 0usize;
    let mut total = 0usize;
    let mut armed = false;
    while pos + 2 <= input.len() {
        ctx.edge(RA_RECORD)?;
        let tag = input[pos];
        let rlen = input[pos + 1] as usize;
        let avail = rlen.min(input.len() - pos - 2);
        match tag {
            0x10 => {
                ctx.edge(RA_T10)?;
                for j in 0..avail {
                    if input[pos + 2 + j] == b'D' {
                        ctx.edge(RA_APPEND)?;
                        ctx.write(acc, total as i64, 1, RA_SITE_ACCUM)?;
                        total += 1;
                    }
                }
            }
            0x20 => {
                ctx.edge(RA_T20)?;
                if avail >= 1 && input[pos + 2] == b'Z' {
                    ctx.edge(RA_FLAG)?;
                    armed = true;
                }
            }
            0x30 => {
                ctx.edge(RA_T30)?;
                if armed {
                    ctx.edge(RA_T30F)?;
                    for j in 0..rlen {
                        ctx.edge(RA_NAMEW)?;
                        ctx.write(name, j as i64, 1, RA_SITE_NAME)?;
                    }
                }
            }
            _ => {
                ctx.edge(RA_OTHER)?;
            }
        }
        pos += 2 + avail;
    }
    ctx.edge(RA_DONE)
}

const RA_SEED: &[u8] = &{
    let mut s = [0u8; 29];
    s[0] = 0x10;
    s[1] = 24;
    let mut i = 0;
    while i < 24 {
        s[2 + i] = b'D';
        i += 1;
    }
    s[26] = 0x20;
    s[27] = 1;
    s[28] = b'Z';
    s
};

fn ra_witness_accum() -> Vec<u8> {
    let mut w = Vec::new();
    for _ in 0..3 {
        w.push(0x10);
        w.push(255);
        w.extend(std::iter::repeat_n(b'D', 255));
    }
    w
}

fn ra_witness_name() -> Vec<u8> {
    vec![0x20, 1, b'Z', 0x30, 17]
}

// route_counter: command bytes drive a counter; 'W' writes at the counter
// offset into a 512-byte buffer. Three consecutive 'U's unlock a 'P' command
// that writes past a 32-byte buffer.
const RC_ENTRY: LocationId = LocationId(0x5500);
const RC_STEP: LocationId = LocationId(0x5501);
const RC_N: LocationId = LocationId(0x5502);
const RC_R: LocationId = LocationId(0x5503);
const RC_W: LocationId = LocationId(0x5504);
const RC_U: LocationId = LocationId(0x5505);
const RC_U3: LocationId = LocationId(0x5506);
const RC_P: LocationId = LocationId(0x5507);
const RC_PX: LocationId = LocationId(0x5508);
const RC_OTHER: LocationId = LocationId(0x5509);
const RC_DONE: LocationId = LocationId(0x550A);
const RC_ALLOC_BUF: LocationId = LocationId(0x55A0);
const RC_ALLOC_LOCK: LocationId = LocationId(0x55A1);
pub const RC_SITE_ROUTE: LocationId = LocationId(0x55E0);
pub const RC_SITE_UNLOCK: LocationId = LocationId(0x55F0);

fn route_counter(ctx: &mut RunCtx, input: &[u8]) -> Step {
    ctx.edge(RC_ENTRY)?;
    let buf = ctx.alloc(512, RC_ALLOC_BUF)?;
    let lock = ctx.alloc(32, RC_ALLOC_LOCK)?;
    let mut c = 0i64;
    let mut up = 0u32;
    let mut unlocked = false;
    for &b in input {
        ctx.edge(RC_STEP)?;
        match b {
            b'N' => {
                ctx.edge(RC_N)?;
                c += 1;
            }
            b'R' => {
                ctx.edge(RC_R)?;
                c = 0;
            }
            b'W' => {
                ctx.edge(RC_W)?;
                ctx.write(buf, c, 1, RC_SITE_ROUTE)?;
            }
            b'U' => {
                ctx.edge(RC_U)?;
                up += 1;
                if up == 3 {
                    ctx.edge(RC_U3)?;
                    unlocked = true;
                }
            }
            b'P' => {
                ctx.edge(RC_P)?;
                if unlocked {
                    ctx.edge(RC_PX)?;
                    ctx.write(lock, 30, 4, RC_SITE_UNLOCK)?;
                }
            }
            _ => {
                ctx.edge(RC_OTHER)?;
            }
        }
        if b != b'U' {
            up = 0;
        }
    }
    ctx.edge(RC_DONE)
}

fn rc_witness_route() -> Vec<u8> {
    let mut w = vec![b'N'; 512];
    w.push(b'W');
    w
}

fn rc_witness_unlock() -> Vec<u8> {
    b"UUUP".to_vec()
}

// chunk_totaler: "CK" magic, then size-prefixed chunks copied into a
// 768-byte buffer at a cumulative offset. A zero-size chunk instead writes
// at an input-chosen index of a 24-byte table.
const CT_ENTRY: LocationId = LocationId(0x6600);
const CT_M0: LocationId = LocationId(0x6601);
const CT_M1: LocationId = LocationId(0x6602);
const CT_NOMAGIC: LocationId = LocationId(0x6603);
const CT_CHUNK: LocationId = LocationId(0x6604);
const CT_IDXCH: LocationId = LocationId(0x6605);
const CT_IDXW: LocationId = LocationId(0x6606);
const CT_DATACH: LocationId = LocationId(0x6607);
const CT_COPY: LocationId = LocationId(0x6608);
const CT_DONE: LocationId = LocationId(0x6609);
const CT_ALLOC_BUF: LocationId = LocationId(0x66A0);
const CT_ALLOC_IDX: LocationId = LocationId(0x66A1);
pub const CT_SITE_TOTAL: LocationId = LocationId(0x66E0);
pub const CT_SITE_INDEX: LocationId = LocationId(0x66F0);

fn chunk_totaler(ctx: &mut RunCtx, input: &[u8]) -> Step {
    ctx.edge(CT_ENTRY)?;
    if input.first() != Some(&b'C') {
        ctx.edge(CT_NOMAGIC)?;
        return Ok(());
    }
    ctx.edge(CT_M0)?;
    if input.get(1) != Some(&b'K') {
        ctx.edge(CT_NOMAGIC)?;
        return Ok(());
    }
    ctx.edge(CT_M1)?;
    let buf = ctx.alloc(768, CT_ALLOC_BUF)?;
    let table = ctx.alloc(24, CT_ALLOC_IDX)?;
    let mut pos = 2usize;
    let mut total = 0usize;
    while pos < input.len() {
        ctx.edge(CT_CHUNK)?;
        let sz = (input[pos] & 0x1F) as usize;
        pos += 1;
        if sz == 0 {
            ctx.edge(CT_IDXCH)?;
            if pos < input.len() {
                let idx = input[pos] as usize;
                pos += 1;
                ctx.edge(CT_IDXW)?;
                ctx.write(table, idx as i64, 1, CT_SITE_INDEX)?;
            }
        } else {
            ctx.edge(CT_DATACH)?;
            let avail = sz.min(input.len() - pos);
            for j in 0..avail {
                ctx.edge(CT_COPY)?;
                ctx.write(buf, (total + j) as i64, 1, CT_SITE_TOTAL)?;
            }
            total += avail;
            pos += avail;
        }
    }
    ctx.edge(CT_DONE)
}

fn ct_witness_total() -> Vec<u8> {
    let mut w = b"CK".to_vec();
    for _ in 0..26 {
        w.push(0x1F);
        w.extend(std::iter::repeat_n(0xDD, 31));
    }
    w
}

fn ct_witness_index() -> Vec<u8> {
    vec![b'C', b'K', 0x00, 0xFF]
}

// pair_meter: counts (possibly overlapping) "LM" byte pairs and writes that
// many bytes into a 512-byte buffer.
const PM_ENTRY: LocationId = LocationId(0x7700);
const PM_SCAN: LocationId = LocationId(0x7701);
const PM_HIT: LocationId = LocationId(0x7702);
const PM_WRITE: LocationId = LocationId(0x7703);
const PM_DONE: LocationId = LocationId(0x7704);
const PM_ALLOC: LocationId = LocationId(0x77A0);
pub const PM_SITE_PAIR: LocationId = LocationId(0x77F0);

fn pair_meter(ctx: &mut RunCtx, input: &[u8]) -> Step {
    ctx.edge(PM_ENTRY)?;
    let buf = ctx.alloc(512, PM_ALLOC)?;
    let mut n = 0usize;
    for w in input.windows(2) {
        ctx.edge(PM_SCAN)?;
        if w == b"LM" {
            ctx.edge(PM_HIT)?;
            n += 1;
        }
    }
    for i in 0..n {
        ctx.edge(PM_WRITE)?;
        ctx.write(buf, i as i64, 1, PM_SITE_PAIR)?;
    }
    ctx.edge(PM_DONE)
}

fn pm_witness() -> Vec<u8> {
    let mut w = Vec::new();
    for _ in 0..513 {
        w.extend_from_slice(b"LM");
    }
    w
}

static SUITE: [Target; 7] = [
    Target {
        name: "lenfield_copy",
        entry: lenfield_copy,
        declared_vuln_sites: &[LC_SITE_COPY],
        seed: &[5, b'h', b'e', b'l', b'l', b'o'],
        witnesses: &[(LC_SITE_COPY, lc_witness)],
    },
    Target {
        name: "tally_writer",
        entry: tally_writer,
        declared_vuln_sites: &[TW_SITE_TALLY],
        seed: b"AAAAAAAAtally",
        witnesses: &[(TW_SITE_TALLY, tw_witness)],
    },
    Target {
        name: "magic_staircase",
        entry: magic_staircase,
        declared_vuln_sites: &[MS_SITE_FIXED, MS_SITE_TALLY],
        seed: b"xxxxBBBB",
        witnesses: &[(MS_SITE_FIXED, ms_witness_fixed), (MS_SITE_TALLY, ms_witness_tally)],
    },
    Target {
        name: "record_assembler",
        entry: record_assembler,
        declared_vuln_sites: &[RA_SITE_ACCUM, RA_SITE_NAME],
        seed: RA_SEED,
        witnesses: &[(RA_SITE_ACCUM, ra_witness_accum), (RA_SITE_NAME, ra_witness_name)],
    },
    Target {
        name: "route_counter",
        entry: route_counter,
        declared_vuln_sites: &[RC_SITE_ROUTE, RC_SITE_UNLOCK],
        seed: b"NNNWPU",
        witnesses: &[(RC_SITE_ROUTE, rc_witness_route), (RC_SITE_UNLOCK, rc_witness_unlock)],
    },
    Target {
        name: "chunk_totaler",
        entry: chunk_totaler,
        declared_vuln_sites: &[CT_SITE_TOTAL, CT_SITE_INDEX],
        seed: &[b'C', b'K', 3, b'a', b'b', b'c'],
        witnesses: &[(CT_SITE_TOTAL, ct_witness_total), (CT_SITE_INDEX, ct_witness_index)],
    },
    Target {
        name: "pair_meter",
        entry: pair_meter,
        declared_vuln_sites: &[PM_SITE_PAIR],
        seed: b"LMLMLMLM-meter",
        witnesses: &[(PM_SITE_PAIR, pm_witness)],
    },
];

/// The built-in benchmark suite.
pub fn builtin_suite() -> &'static [Target] {
    &SUITE
}

pub fn find_target(name: &str) -> Option<&'static Target> {
    SUITE.iter().find(|t| t.name == name)
}
