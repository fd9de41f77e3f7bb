//! Table-driven x64 decoder for the integer subset the pipeline understands.
//!
//! `decode` is total over byte strings: anything outside the subset (or
//! truncated) is `None`, which the caller records as an invalid fact. Decoding
//! at an address looks only at the bytes handed in (at most
//! [`MAX_INSN_BYTES`]) plus the address itself, never at neighbors.
//!
//! RIP-relative displacements are normalized to the absolute target address,
//! with the `rip` flag preserving the fact that they were pc-relative.
//! Relative branch offsets likewise become absolute target immediates.

use crate::facts::registers::{name_for, NONE};
use crate::facts::OperandPayload;

pub const DECODER_VERSION: &str = "1";
pub const MAX_INSN_BYTES: usize = 15;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub size: u32,
    pub prefix: String,
    pub opcode: String,
    /// Source operands first, destination last.
    pub operands: Vec<OperandPayload>,
    /// Byte span (offset, length) of the displacement field, if any.
    pub disp_span: Option<(u32, u32)>,
    /// Byte span (offset, length) of the immediate / branch offset field.
    pub imm_span: Option<(u32, u32)>,
}

#[derive(Clone, Copy, Default)]
struct Rex {
    present: bool,
    w: bool,
    r: bool,
    x: bool,
    b: bool,
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u8(&mut self) -> Option<u8> {
        let v = *self.b.get(self.pos)?;
        self.pos += 1;
        Some(v)
    }

    fn i8(&mut self) -> Option<i64> {
        Some(self.u8()? as i8 as i64)
    }

    fn i16(&mut self) -> Option<i64> {
        let lo = self.u8()? as u16;
        let hi = self.u8()? as u16;
        Some((lo | hi << 8) as i16 as i64)
    }

    fn i32(&mut self) -> Option<i64> {
        let mut v: u32 = 0;
        for i in 0..4 {
            v |= (self.u8()? as u32) << (8 * i);
        }
        Some(v as i32 as i64)
    }

    fn i64(&mut self) -> Option<i64> {
        let mut v: u64 = 0;
        for i in 0..8 {
            v |= (self.u8()? as u64) << (8 * i);
        }
        Some(v as i64)
    }
}

/// Memory operand before RIP normalization.
#[derive(Clone)]
struct MemOp {
    seg: &'static str,
    base: Option<u8>,
    index: Option<u8>,
    scale: i64,
    disp: i64,
    rip: bool,
}

enum Rm {
    Reg(u8),
    Mem(MemOp),
}

fn modrm(r: &mut Reader, rex: Rex, seg: &'static str) -> Option<(u8, Rm, Option<(u32, u32)>)> {
    let m = r.u8()?;
    let md = m >> 6;
    let reg = ((m >> 3) & 7) | (rex.r as u8) << 3;
    let rm = m & 7;
    if md == 3 {
        return Some((reg, Rm::Reg(rm | (rex.b as u8) << 3), None));
    }
    let mut mem = MemOp {
        seg,
        base: None,
        index: None,
        scale: 1,
        disp: 0,
        rip: false,
    };
    let mut disp_bits = match md {
        1 => 8,
        2 => 32,
        _ => 0,
    };
    if rm == 4 {
        let sib = r.u8()?;
        let idx = (sib >> 3) & 7;
        if idx != 4 || rex.x {
            mem.index = Some(idx | (rex.x as u8) << 3);
            mem.scale = 1 << (sib >> 6);
        }
        let base = sib & 7;
        if base == 5 && md == 0 {
            disp_bits = 32;
        } else {
            mem.base = Some(base | (rex.b as u8) << 3);
        }
    } else if rm == 5 && md == 0 {
        mem.rip = true;
        disp_bits = 32;
    } else {
        mem.base = Some(rm | (rex.b as u8) << 3);
    }
    let span = match disp_bits {
        8 => {
            let at = r.pos as u32;
            mem.disp = r.i8()?;
            Some((at, 1))
        }
        32 => {
            let at = r.pos as u32;
            mem.disp = r.i32()?;
            Some((at, 4))
        }
        _ => None,
    };
    Some((reg, Rm::Mem(mem), span))
}

fn reg_op(num: u8, size: u8, rex: Rex) -> OperandPayload {
    OperandPayload::RegDirect {
        reg: name_for(num, size, rex.present).to_string(),
    }
}

fn mem_payload(m: &MemOp, access_size: u8) -> OperandPayload {
    OperandPayload::Indirect {
        seg: m.seg.to_string(),
        base: m
            .base
            .map(|n| name_for(n, 8, true).to_string())
            .unwrap_or_else(|| NONE.to_string()),
        index: m
            .index
            .map(|n| name_for(n, 8, true).to_string())
            .unwrap_or_else(|| NONE.to_string()),
        mult: m.scale,
        disp: m.disp,
        access_size,
        rip: m.rip,
    }
}

fn rm_op(rm: &Rm, size: u8, rex: Rex) -> OperandPayload {
    match rm {
        Rm::Reg(n) => reg_op(*n, size, rex),
        Rm::Mem(m) => mem_payload(m, size),
    }
}

const ARITH: [&str; 8] = ["add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"];
const SHIFT: [&str; 8] = ["rol", "ror", "rcl", "rcr", "shl", "shr", "shl", "sar"];
const CC: [&str; 16] = [
    "o", "no", "b", "ae", "e", "ne", "be", "a", "s", "ns", "p", "np", "l", "ge", "le", "g",
];

pub fn decode(bytes: &[u8], addr: u64) -> Option<Decoded> {
    let bytes = &bytes[..bytes.len().min(MAX_INSN_BYTES)];
    let mut r = Reader { b: bytes, pos: 0 };

    let mut rex = Rex::default();
    let mut lock = false;
    let mut f2 = false;
    let mut f3 = false;
    let mut opsize = false;
    let mut seg: &'static str = NONE;
    loop {
        match *r.b.get(r.pos)? {
            0xf0 => lock = true,
            0xf2 => f2 = true,
            0xf3 => f3 = true,
            0x66 => opsize = true,
            0x67 => return None, // 32-bit addressing: outside the subset
            0x2e | 0x36 | 0x3e | 0x26 => {} // legacy null segment overrides
            0x64 => seg = "FS",
            0x65 => seg = "GS",
            b @ 0x40..=0x4f => {
                rex = Rex {
                    present: true,
                    w: b & 8 != 0,
                    r: b & 4 != 0,
                    x: b & 2 != 0,
                    b: b & 1 != 0,
                };
                r.pos += 1;
                break;
            }
            _ => break,
        }
        r.pos += 1;
    }

    let w: u8 = if rex.w {
        8
    } else if opsize {
        2
    } else {
        4
    };

    let opcode: String;
    let mut operands: Vec<OperandPayload> = Vec::new();
    let mut disp_span: Option<(u32, u32)> = None;
    let mut imm_span: Option<(u32, u32)> = None;
    let mut prefix = String::new();

    macro_rules! imm {
        ($r:expr, $bits:expr) => {{
            let at = $r.pos as u32;
            let v = match $bits {
                8 => $r.i8()?,
                16 => $r.i16()?,
                32 => $r.i32()?,
                _ => $r.i64()?,
            };
            imm_span = Some((at, $bits / 8));
            v
        }};
    }
    // Immediate width matching the operand size (64-bit ops take a
    // sign-extended 32-bit immediate, except movabs).
    macro_rules! immw {
        ($r:expr) => {
            imm!($r, if w == 2 { 16 } else { 32 })
        };
    }
    macro_rules! mrm {
        ($r:expr) => {{
            let (reg, rm, span) = modrm(&mut $r, rex, seg)?;
            disp_span = span;
            (reg, rm)
        }};
    }
    // ModRM.reg as an opcode extension: REX.R does not participate.
    macro_rules! mrm_ext {
        ($r:expr) => {{
            let (ext, rm) = mrm!($r);
            (ext & 7, rm)
        }};
    }
    macro_rules! rel_target {
        ($r:expr, $bits:expr) => {{
            let v = imm!($r, $bits);
            addr.wrapping_add($r.pos as u64).wrapping_add(v as u64) as i64
        }};
    }

    let op = r.u8()?;

    // F2/F3 are only meaningful on string ops, ret, pause and endbr64 in this
    // subset; elsewhere they select SSE encodings we do not decode.
    let rep_ok = matches!(op, 0x90 | 0xa4..=0xa7 | 0xaa..=0xaf | 0xc3) || op == 0x0f;

    match op {
        _ if (f2 || f3) && !rep_ok => return None,

        0x00..=0x3f if op & 7 < 6 => {
            opcode = ARITH[(op >> 3) as usize].to_string();
            match op & 7 {
                0 => {
                    let (reg, rm) = mrm!(r);
                    operands = vec![reg_op(reg, 1, rex), rm_op(&rm, 1, rex)];
                }
                1 => {
                    let (reg, rm) = mrm!(r);
                    operands = vec![reg_op(reg, w, rex), rm_op(&rm, w, rex)];
                }
                2 => {
                    let (reg, rm) = mrm!(r);
                    operands = vec![rm_op(&rm, 1, rex), reg_op(reg, 1, rex)];
                }
                3 => {
                    let (reg, rm) = mrm!(r);
                    operands = vec![rm_op(&rm, w, rex), reg_op(reg, w, rex)];
                }
                4 => {
                    let v = imm!(r, 8);
                    operands = vec![OperandPayload::Immediate { value: v }, reg_op(0, 1, rex)];
                }
                _ => {
                    let v = immw!(r);
                    operands = vec![OperandPayload::Immediate { value: v }, reg_op(0, w, rex)];
                }
            }
        }

        0x50..=0x57 => {
            opcode = "push".to_string();
            operands = vec![reg_op(op & 7 | (rex.b as u8) << 3, 8, rex)];
        }
        0x58..=0x5f => {
            opcode = "pop".to_string();
            operands = vec![reg_op(op & 7 | (rex.b as u8) << 3, 8, rex)];
        }

        0x63 => {
            opcode = "movsxd".to_string();
            let (reg, rm) = mrm!(r);
            operands = vec![rm_op(&rm, 4, rex), reg_op(reg, if rex.w { 8 } else { 4 }, rex)];
        }

        0x68 => {
            opcode = "push".to_string();
            let v = imm!(r, 32);
            operands = vec![OperandPayload::Immediate { value: v }];
        }
        0x6a => {
            opcode = "push".to_string();
            let v = imm!(r, 8);
            operands = vec![OperandPayload::Immediate { value: v }];
        }
        0x69 | 0x6b => {
            opcode = "imul".to_string();
            let (reg, rm) = mrm!(r);
            let v = if op == 0x69 { immw!(r) } else { imm!(r, 8) };
            operands = vec![
                OperandPayload::Immediate { value: v },
                rm_op(&rm, w, rex),
                reg_op(reg, w, rex),
            ];
        }

        0x70..=0x7f => {
            opcode = format!("j{}", CC[(op & 0xf) as usize]);
            let t = rel_target!(r, 8);
            operands = vec![OperandPayload::Immediate { value: t }];
        }

        0x80 | 0x81 | 0x83 => {
            let (ext, rm) = mrm_ext!(r);
            opcode = ARITH[ext as usize].to_string();
            let size = if op == 0x80 { 1 } else { w };
            let v = if op == 0x81 { immw!(r) } else { imm!(r, 8) };
            operands = vec![OperandPayload::Immediate { value: v }, rm_op(&rm, size, rex)];
        }

        0x84 | 0x85 => {
            opcode = "test".to_string();
            let size = if op == 0x84 { 1 } else { w };
            let (reg, rm) = mrm!(r);
            operands = vec![reg_op(reg, size, rex), rm_op(&rm, size, rex)];
        }
        0x86 | 0x87 => {
            opcode = "xchg".to_string();
            let size = if op == 0x86 { 1 } else { w };
            let (reg, rm) = mrm!(r);
            operands = vec![reg_op(reg, size, rex), rm_op(&rm, size, rex)];
        }

        0x88 | 0x89 => {
            opcode = "mov".to_string();
            let size = if op == 0x88 { 1 } else { w };
            let (reg, rm) = mrm!(r);
            operands = vec![reg_op(reg, size, rex), rm_op(&rm, size, rex)];
        }
        0x8a | 0x8b => {
            opcode = "mov".to_string();
            let size = if op == 0x8a { 1 } else { w };
            let (reg, rm) = mrm!(r);
            operands = vec![rm_op(&rm, size, rex), reg_op(reg, size, rex)];
        }

        0x8d => {
            opcode = "lea".to_string();
            let (reg, rm) = mrm!(r);
            match rm {
                Rm::Mem(_) => operands = vec![rm_op(&rm, w, rex), reg_op(reg, w, rex)],
                Rm::Reg(_) => return None,
            }
        }
        0x8f => {
            let (ext, rm) = mrm_ext!(r);
            if ext != 0 {
                return None;
            }
            opcode = "pop".to_string();
            operands = vec![rm_op(&rm, 8, rex)];
        }

        0x90 if !rex.b => {
            opcode = if f3 { "pause" } else { "nop" }.to_string();
        }
        0x90..=0x97 => {
            opcode = "xchg".to_string();
            operands = vec![reg_op(op & 7 | (rex.b as u8) << 3, w, rex), reg_op(0, w, rex)];
        }
        0x98 => opcode = if rex.w { "cdqe" } else if opsize { "cbw" } else { "cwde" }.to_string(),
        0x99 => opcode = if rex.w { "cqo" } else if opsize { "cwd" } else { "cdq" }.to_string(),

        0xa4..=0xa7 | 0xaa..=0xaf => {
            let base = match op {
                0xa4 | 0xa5 => "movs",
                0xa6 | 0xa7 => "cmps",
                0xaa | 0xab => "stos",
                0xac | 0xad => "lods",
                _ => "scas",
            };
            let suffix = if op & 1 == 0 {
                "b"
            } else if rex.w {
                "q"
            } else if opsize {
                "w"
            } else {
                "d"
            };
            opcode = format!("{base}{suffix}");
            if f3 {
                prefix = if base == "cmps" || base == "scas" {
                    "repe"
                } else {
                    "rep"
                }
                .to_string();
            } else if f2 {
                prefix = "repne".to_string();
            }
        }

        0xa8 => {
            opcode = "test".to_string();
            let v = imm!(r, 8);
            operands = vec![OperandPayload::Immediate { value: v }, reg_op(0, 1, rex)];
        }
        0xa9 => {
            opcode = "test".to_string();
            let v = immw!(r);
            operands = vec![OperandPayload::Immediate { value: v }, reg_op(0, w, rex)];
        }

        0xb0..=0xb7 => {
            opcode = "mov".to_string();
            let v = imm!(r, 8);
            operands = vec![
                OperandPayload::Immediate { value: v },
                reg_op(op & 7 | (rex.b as u8) << 3, 1, rex),
            ];
        }
        0xb8..=0xbf => {
            let reg = op & 7 | (rex.b as u8) << 3;
            if rex.w {
                opcode = "movabs".to_string();
                let v = imm!(r, 64);
                operands = vec![OperandPayload::Immediate { value: v }, reg_op(reg, 8, rex)];
            } else {
                opcode = "mov".to_string();
                let v = immw!(r);
                operands = vec![OperandPayload::Immediate { value: v }, reg_op(reg, w, rex)];
            }
        }

        0xc0 | 0xc1 => {
            let (ext, rm) = mrm_ext!(r);
            opcode = SHIFT[ext as usize].to_string();
            let size = if op == 0xc0 { 1 } else { w };
            let v = imm!(r, 8);
            operands = vec![OperandPayload::Immediate { value: v }, rm_op(&rm, size, rex)];
        }
        0xd0 | 0xd1 => {
            let (ext, rm) = mrm_ext!(r);
            opcode = SHIFT[ext as usize].to_string();
            let size = if op == 0xd0 { 1 } else { w };
            operands = vec![
                OperandPayload::Immediate { value: 1 },
                rm_op(&rm, size, rex),
            ];
        }
        0xd2 | 0xd3 => {
            let (ext, rm) = mrm_ext!(r);
            opcode = SHIFT[ext as usize].to_string();
            let size = if op == 0xd2 { 1 } else { w };
            operands = vec![reg_op(1, 1, rex), rm_op(&rm, size, rex)];
        }

        0xc2 => {
            opcode = "ret".to_string();
            let at = r.pos as u32;
            let lo = r.u8()? as i64;
            let hi = r.u8()? as i64;
            imm_span = Some((at, 2));
            operands = vec![OperandPayload::Immediate { value: lo | hi << 8 }];
        }
        0xc3 => {
            opcode = "ret".to_string();
            if f3 {
                prefix = "rep".to_string();
            }
        }

        0xc6 | 0xc7 => {
            let (ext, rm) = mrm_ext!(r);
            if ext != 0 {
                return None;
            }
            opcode = "mov".to_string();
            let size = if op == 0xc6 { 1 } else { w };
            let v = if op == 0xc6 { imm!(r, 8) } else { immw!(r) };
            operands = vec![OperandPayload::Immediate { value: v }, rm_op(&rm, size, rex)];
        }

        0xc9 => opcode = "leave".to_string(),
        0xcc => opcode = "int3".to_string(),
        0xcd => {
            opcode = "int".to_string();
            let v = imm!(r, 8);
            operands = vec![OperandPayload::Immediate { value: v }];
        }

        0xe0..=0xe3 => {
            opcode = match op {
                0xe0 => "loopne",
                0xe1 => "loope",
                0xe2 => "loop",
                _ => "jrcxz",
            }
            .to_string();
            let t = rel_target!(r, 8);
            operands = vec![OperandPayload::Immediate { value: t }];
        }
        0xe8 => {
            opcode = "call".to_string();
            let t = rel_target!(r, 32);
            operands = vec![OperandPayload::Immediate { value: t }];
        }
        0xe9 => {
            opcode = "jmp".to_string();
            let t = rel_target!(r, 32);
            operands = vec![OperandPayload::Immediate { value: t }];
        }
        0xeb => {
            opcode = "jmp".to_string();
            let t = rel_target!(r, 8);
            operands = vec![OperandPayload::Immediate { value: t }];
        }

        0xf4 => opcode = "hlt".to_string(),

        0xf6 | 0xf7 => {
            let size = if op == 0xf6 { 1 } else { w };
            let (ext, rm) = mrm_ext!(r);
            match ext {
                0 => {
                    opcode = "test".to_string();
                    let v = if op == 0xf6 { imm!(r, 8) } else { immw!(r) };
                    operands = vec![OperandPayload::Immediate { value: v }, rm_op(&rm, size, rex)];
                }
                2 | 3 => {
                    opcode = if ext == 2 { "not" } else { "neg" }.to_string();
                    operands = vec![rm_op(&rm, size, rex)];
                }
                4..=7 => {
                    opcode = ["mul", "imul", "div", "idiv"][ext as usize - 4].to_string();
                    operands = vec![rm_op(&rm, size, rex)];
                }
                _ => return None,
            }
        }

        0xfe => {
            let (ext, rm) = mrm_ext!(r);
            opcode = match ext {
                0 => "inc",
                1 => "dec",
                _ => return None,
            }
            .to_string();
            operands = vec![rm_op(&rm, 1, rex)];
        }
        0xff => {
            let (ext, rm) = mrm_ext!(r);
            match ext {
                0 | 1 => {
                    opcode = if ext == 0 { "inc" } else { "dec" }.to_string();
                    operands = vec![rm_op(&rm, w, rex)];
                }
                2 => {
                    opcode = "call".to_string();
                    operands = vec![rm_op(&rm, 8, rex)];
                }
                4 => {
                    opcode = "jmp".to_string();
                    operands = vec![rm_op(&rm, 8, rex)];
                }
                6 => {
                    opcode = "push".to_string();
                    operands = vec![rm_op(&rm, 8, rex)];
                }
                _ => return None,
            }
        }

        0x0f => {
            let op2 = r.u8()?;
            if (f2 || f3) && !(f3 && op2 == 0x1e) {
                return None;
            }
            match op2 {
                0x05 => opcode = "syscall".to_string(),
                0x0b => opcode = "ud2".to_string(),
                0x1e => {
                    if f3 && r.u8()? == 0xfa {
                        opcode = "endbr64".to_string();
                    } else {
                        return None;
                    }
                }
                0x1f => {
                    // Multi-byte nop: consume the addressing form, keep no
                    // operands; re-emitting a plain nop is semantics-preserving.
                    let _ = modrm(&mut r, rex, seg)?;
                    opcode = "nop".to_string();
                }
                0x40..=0x4f => {
                    opcode = format!("cmov{}", CC[(op2 & 0xf) as usize]);
                    let (reg, rm) = mrm!(r);
                    operands = vec![rm_op(&rm, w, rex), reg_op(reg, w, rex)];
                }
                0x80..=0x8f => {
                    opcode = format!("j{}", CC[(op2 & 0xf) as usize]);
                    let t = rel_target!(r, 32);
                    operands = vec![OperandPayload::Immediate { value: t }];
                }
                0x90..=0x9f => {
                    opcode = format!("set{}", CC[(op2 & 0xf) as usize]);
                    let (_, rm) = mrm!(r);
                    operands = vec![rm_op(&rm, 1, rex)];
                }
                0xaf => {
                    opcode = "imul".to_string();
                    let (reg, rm) = mrm!(r);
                    operands = vec![rm_op(&rm, w, rex), reg_op(reg, w, rex)];
                }
                0xb6 | 0xb7 | 0xbe | 0xbf => {
                    opcode = if op2 < 0xbe { "movzx" } else { "movsx" }.to_string();
                    let src = if op2 & 1 == 0 { 1 } else { 2 };
                    let (reg, rm) = mrm!(r);
                    operands = vec![rm_op(&rm, src, rex), reg_op(reg, w, rex)];
                }
                _ => return None,
            }
        }

        _ => return None,
    }

    if lock {
        if !prefix.is_empty() {
            return None;
        }
        prefix = "lock".to_string();
    }

    let size = r.pos as u32;
    // Normalize RIP-relative displacements now that the length is known.
    for o in &mut operands {
        if let OperandPayload::Indirect { disp, rip: true, .. } = o {
            *disp = (addr.wrapping_add(size as u64) as i64).wrapping_add(*disp);
        }
    }

    Some(Decoded {
        size,
        prefix,
        opcode,
        operands,
        disp_span,
        imm_span,
    })
}

/// Conditional jumps, including the counter-based ones.
pub fn is_cond_jump(op: &str) -> bool {
    (op.len() <= 4 && op.starts_with('j') && op != "jmp")
        || matches!(op, "loop" | "loope" | "loopne")
}

pub fn is_uncond_jump(op: &str) -> bool {
    op == "jmp"
}

pub fn is_call(op: &str) -> bool {
    op == "call"
}

pub fn is_ret(op: &str) -> bool {
    op == "ret"
}

pub fn is_halt(op: &str) -> bool {
    matches!(op, "hlt" | "ud2")
}

pub fn is_interrupt(op: &str) -> bool {
    matches!(op, "int" | "int3" | "syscall")
}

pub fn is_nop(op: &str) -> bool {
    matches!(op, "nop" | "pause" | "endbr64")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(bytes: &[u8], addr: u64) -> Decoded {
        decode(bytes, addr).unwrap_or_else(|| panic!("bytes {bytes:x?} should decode"))
    }

    #[test]
    fn ret_byte() {
        let d = dec(&[0xc3], 0x1000);
        assert_eq!((d.size, d.opcode.as_str()), (1, "ret"));
        assert!(d.prefix.is_empty() && d.operands.is_empty());
    }

    #[test]
    fn mov_reg_indirect_with_disp() {
        // mov RSI, [RBX+0x45D328]
        let d = dec(&[0x48, 0x8b, 0xb3, 0x28, 0xd3, 0x45, 0x00], 0x416c47);
        assert_eq!(d.size, 7);
        assert_eq!(d.opcode, "mov");
        assert_eq!(
            d.operands,
            vec![
                OperandPayload::Indirect {
                    seg: "NONE".into(),
                    base: "RBX".into(),
                    index: "NONE".into(),
                    mult: 1,
                    disp: 0x45d328,
                    access_size: 8,
                    rip: false,
                },
                OperandPayload::RegDirect { reg: "RSI".into() },
            ]
        );
        assert_eq!(d.disp_span, Some((3, 4)));
    }

    #[test]
    fn rip_relative_normalized() {
        // mov RDI, [RIP+0x25D239] at 0x416c40 → absolute 0x673E80
        let d = dec(&[0x48, 0x8b, 0x3d, 0x39, 0xd2, 0x25, 0x00], 0x416c40);
        match &d.operands[0] {
            OperandPayload::Indirect { disp, rip, base, .. } => {
                assert_eq!(*disp, 0x673e80);
                assert!(rip);
                assert_eq!(base, "NONE");
            }
            other => panic!("unexpected operand {other:?}"),
        }
    }

    #[test]
    fn relative_branches_become_absolute() {
        // jne -0x1e at 0x416c5c → 0x416c40
        let d = dec(&[0x75, 0xe2], 0x416c5c);
        assert_eq!(d.opcode, "jne");
        assert_eq!(
            d.operands,
            vec![OperandPayload::Immediate { value: 0x416c40 }]
        );
        // call +0x... at 0x416c53 → 0x413050
        let d = dec(&[0xe8, 0xf8, 0xc3, 0xff, 0xff], 0x416c53);
        assert_eq!(d.opcode, "call");
        assert_eq!(
            d.operands,
            vec![OperandPayload::Immediate { value: 0x413050 }]
        );
        assert_eq!(d.imm_span, Some((1, 4)));
    }

    #[test]
    fn truncated_is_invalid() {
        assert!(decode(&[0xff], 0x1000).is_none());
        assert!(decode(&[0xff, 0xff], 0x1000).is_none()); // FF /7 undefined
        assert!(decode(&[0xe8, 0x01], 0x1000).is_none());
    }

    #[test]
    fn sib_scaled_index() {
        // movzx EDX, BYTE PTR [RDX+RCX*1]
        let d = dec(&[0x0f, 0xb6, 0x14, 0x0a], 0x47da82);
        assert_eq!(d.size, 4);
        assert_eq!(d.opcode, "movzx");
        assert_eq!(
            d.operands[0],
            OperandPayload::Indirect {
                seg: "NONE".into(),
                base: "RDX".into(),
                index: "RCX".into(),
                mult: 1,
                disp: 0,
                access_size: 1,
                rip: false,
            }
        );
        // mov RAX, [RBX+RCX*8+0x10]
        let d = dec(&[0x48, 0x8b, 0x44, 0xcb, 0x10], 0x1000);
        assert_eq!(
            d.operands[0],
            OperandPayload::Indirect {
                seg: "NONE".into(),
                base: "RBX".into(),
                index: "RCX".into(),
                mult: 8,
                disp: 0x10,
                access_size: 8,
                rip: false,
            }
        );
    }

    #[test]
    fn grp1_and_shifts() {
        // add RBX, 24
        let d = dec(&[0x48, 0x83, 0xc3, 0x18], 0x416c58);
        assert_eq!((d.size, d.opcode.as_str()), (4, "add"));
        assert_eq!(d.operands[0], OperandPayload::Immediate { value: 24 });
        // shl RAX, 3
        let d = dec(&[0x48, 0xc1, 0xe0, 0x03], 0);
        assert_eq!(d.opcode, "shl");
        // sar EDX, CL
        let d = dec(&[0xd3, 0xfa], 0);
        assert_eq!(d.opcode, "sar");
        assert_eq!(d.operands[0], OperandPayload::RegDirect { reg: "CL".into() });
    }

    #[test]
    fn rex_r_ignored_on_opcode_extensions() {
        // REX.R must not leak into the /digit field: 4C D1 F8 is still sar.
        let d = dec(&[0x4c, 0xd1, 0xf8], 0);
        assert_eq!(d.opcode, "sar");
        assert_eq!(d.operands[1], OperandPayload::RegDirect { reg: "RAX".into() });
        let d = dec(&[0x4c, 0xf7, 0xd8], 0);
        assert_eq!(d.opcode, "neg");
    }

    #[test]
    fn rep_prefixes() {
        let d = dec(&[0xf3, 0xa4], 0);
        assert_eq!((d.prefix.as_str(), d.opcode.as_str()), ("rep", "movsb"));
        let d = dec(&[0xf3, 0x48, 0xab], 0);
        assert_eq!((d.prefix.as_str(), d.opcode.as_str()), ("rep", "stosq"));
        let d = dec(&[0xf2, 0xae], 0);
        assert_eq!((d.prefix.as_str(), d.opcode.as_str()), ("repne", "scasb"));
        let d = dec(&[0xf3, 0xc3], 0);
        assert_eq!((d.prefix.as_str(), d.opcode.as_str()), ("rep", "ret"));
        assert_eq!(dec(&[0xf3, 0x90], 0).opcode, "pause");
        // F3 on a plain mov selects an encoding outside the subset.
        assert!(decode(&[0xf3, 0x89, 0xd8], 0).is_none());
    }

    #[test]
    fn movabs_and_mov_imm() {
        let d = dec(&[0x48, 0xb8, 1, 2, 3, 4, 5, 6, 7, 8], 0);
        assert_eq!((d.size, d.opcode.as_str()), (10, "movabs"));
        assert_eq!(
            d.operands[0],
            OperandPayload::Immediate { value: 0x0807060504030201 }
        );
        let d = dec(&[0xbb, 0x40, 0x2d, 0x40, 0x00], 0x40109d);
        assert_eq!((d.size, d.opcode.as_str()), (5, "mov"));
        assert_eq!(d.operands[0], OperandPayload::Immediate { value: 0x402d40 });
        assert_eq!(d.operands[1], OperandPayload::RegDirect { reg: "EBX".into() });
        assert_eq!(d.imm_span, Some((1, 4)));
    }

    #[test]
    fn sse_and_unknown_invalid() {
        assert!(decode(&[0x0f, 0x10, 0xc0], 0).is_none()); // movups
        assert!(decode(&[0x66, 0x0f, 0xef, 0xc0], 0).is_none()); // pxor
        assert!(decode(&[0x06], 0).is_none());
    }

    #[test]
    fn position_independent_within_window() {
        let buf = [0x48, 0x8b, 0x3d, 0x39, 0xd2, 0x25, 0x00, 0xff, 0xee];
        let a = decode(&buf, 0x1000);
        let b = decode(&buf[..7], 0x1000);
        assert_eq!(a, b);
    }
}
