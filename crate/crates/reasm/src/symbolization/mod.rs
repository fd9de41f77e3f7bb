//! Literal-vs-symbol decisions for every number in code and data.
//!
//! Data locations become object candidates (pointers, strings, jump-table
//! entries, sized accesses) scored by weighted heuristics with the same
//! overlap-resolution mechanism the boundary pass uses. Code immediates and
//! displacements are scored in place, then two repair passes recover
//! symbol+constant expressions that land just past a section boundary.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::analyses::{Analyses, RegVal};
use crate::datalog::Value;
use crate::facts::registers::{self, NONE, UNKNOWN};
use crate::facts::{FactBase, InstructionFact, OperandPayload, SectionInfo};
use crate::frontend::decoder;
use crate::ibi::CodeLayout;

/// Heuristic weights and decision thresholds. Only relative magnitudes
/// matter: scaling every field by the same positive constant changes no
/// outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymWeights {
    pub pointer_to_insn: i64,
    pub data_access_match: i64,
    pub symbol_array: i64,
    pub pointed_by_array: i64,
    pub aligned: i64,
    pub string_default: i64,
    pub long_string_bonus: i64,
    pub access_conflict: i64,
    pub special_section: i64,
    pub in_range_base: i64,
    pub used_for_address: i64,
    pub uncommon_pointer_op: i64,
    pub compared_to_non_address: i64,
    /// Data candidates scoring below this with negative evidence are dropped.
    pub data_keep_threshold: i64,
    /// Code operands are symbolic iff their total reaches this.
    pub code_threshold: i64,
    /// Sections whose contents look like pointers but must stay literal.
    pub special_sections: Vec<String>,
}

impl Default for SymWeights {
    fn default() -> Self {
        SymWeights {
            pointer_to_insn: 2,
            data_access_match: 2,
            symbol_array: 2,
            pointed_by_array: 1,
            aligned: 1,
            string_default: 2,
            long_string_bonus: 2,
            access_conflict: -2,
            special_section: -2,
            in_range_base: 1,
            used_for_address: 2,
            uncommon_pointer_op: -3,
            compared_to_non_address: -2,
            data_keep_threshold: 0,
            code_threshold: 1,
            special_sections: SPECIAL_SECTIONS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Sections whose contents look like pointers but must stay literal
/// (unwind tables, dynamic-linking machinery).
pub const SPECIAL_SECTIONS: [&str; 6] = [
    ".eh_frame",
    ".eh_frame_hdr",
    ".gcc_except_table",
    ".dynamic",
    ".got",
    ".plt",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum CandidateKind {
    Symbol,
    String,
    SymbolSymbol,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataObjectCandidate {
    pub addr: u64,
    pub kind: CandidateKind,
    pub size: u64,
    /// Pointee for Symbol, entry target for SymbolSymbol.
    pub target: Option<u64>,
    /// Reference label for SymbolSymbol entries.
    pub reference: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScoredObject {
    pub cand: DataObjectCandidate,
    pub points: Vec<(&'static str, i64)>,
    pub total: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct JumpTableStart {
    pub ajump: u64,
    pub entry_size: u64,
    pub start: u64,
    pub reference: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TableEntry {
    pub addr: u64,
    pub size: u64,
    pub target: u64,
    pub reference: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolicExpr {
    Literal(i64),
    SymPlus { target: u64, offset: i64 },
    SymMinusSym { target: u64, reference: u64 },
}

impl SymbolicExpr {
    pub fn is_symbolic(&self) -> bool {
        !matches!(self, SymbolicExpr::Literal(_))
    }

    /// Anchor address of a symbolic expression, if any.
    pub fn anchor(&self) -> Option<u64> {
        match *self {
            SymbolicExpr::Literal(_) => None,
            SymbolicExpr::SymPlus { target, .. } => Some(target),
            SymbolicExpr::SymMinusSym { target, .. } => Some(target),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Context {
    Data,
    Immediate,
    Displacement,
}

impl Context {
    pub fn label(&self) -> &'static str {
        match self {
            Context::Data => "data",
            Context::Immediate => "immediate",
            Context::Displacement => "displacement",
        }
    }
}

/// One literal-vs-symbol decision: a data location or the immediate /
/// displacement field of the instruction at `addr`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub addr: u64,
    pub context: Context,
    pub expr: SymbolicExpr,
    pub points: Vec<(&'static str, i64)>,
    pub total: i64,
}

/// Section range widened by a loop counter's increment on both sides,
/// the window in which bound immediates are treated as base+offset.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExtendedRange {
    pub section: String,
    pub low: i64,
    pub high: i64,
    pub m: i64,
    pub base: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Symbolization {
    pub objects: Vec<ScoredObject>,
    pub discarded: Vec<(DataObjectCandidate, i64, String)>,
    pub tables: Vec<JumpTableStart>,
    pub entries: Vec<TableEntry>,
    pub decisions: Vec<Decision>,
    pub extended: Vec<ExtendedRange>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum SymError {
    #[error("ground-truth relocation at {0:#x} falls outside known sections")]
    GroundTruthMismatch(u64),
}

fn code_members(layout: &CodeLayout) -> BTreeSet<u64> {
    layout
        .blocks
        .iter()
        .flat_map(|b| b.members.iter().copied())
        .collect()
}

fn covered_by_code(layout: &CodeLayout, lo: u64, hi: u64) -> bool {
    layout.blocks.iter().any(|b| b.start < hi && lo < b.end)
}

fn in_special_section(fb: &FactBase, addr: u64, special: &[String]) -> bool {
    fb.section_containing(addr)
        .map(|s| special.iter().any(|n| *n == s.name))
        .unwrap_or(false)
}

fn direct_reg(op: &OperandPayload) -> Option<&'static str> {
    match op {
        OperandPayload::RegDirect { reg } => real_reg(reg),
        _ => None,
    }
}

/// Canonical name for an actual general-purpose register; the NONE / RIP
/// placeholders in operand encodings map to nothing.
fn real_reg(name: &str) -> Option<&'static str> {
    registers::canonical(name).filter(|r| *r != NONE && *r != UNKNOWN && *r != registers::RIP)
}

/// Defs of `reg` that reach the use at `aused`.
fn defs_at(an: &Analyses, aused: u64, reg: &str) -> Vec<u64> {
    an.def_used
        .iter()
        .filter(|d| d.aused == aused && d.reg == reg)
        .map(|d| d.adef)
        .collect()
}

// ---------------------------------------------------------------------------
// Jump tables
// ---------------------------------------------------------------------------

/// Two-register sum shapes that compute table-entry + reference: ADD r,r2
/// and LEA r,[r1+r2] with scale 1 and no displacement.
fn sum_operands(ins: &InstructionFact, fb: &FactBase) -> Option<(&'static str, &'static str)> {
    let ops: Vec<&OperandPayload> = ins.operand_ids().filter_map(|id| fb.operand(id)).collect();
    match ins.opcode.as_str() {
        "add" if ops.len() == 2 => Some((direct_reg(ops[0])?, direct_reg(ops[1])?)),
        "lea" if ops.len() == 2 => match ops[0] {
            OperandPayload::Indirect {
                base,
                index,
                mult: 1,
                disp: 0,
                rip: false,
                ..
            } => Some((
                real_reg(base)?,
                real_reg(index)?,
            )),
            _ => None,
        },
        _ => None,
    }
}

fn read_entry(fb: &FactBase, addr: u64, size: u64) -> Option<i64> {
    let raw = fb.read_le(addr, size as u32)?;
    // Small entries are offsets forward from the reference; wide ones can
    // reach backwards.
    Some(match size {
        1 | 2 => raw as i64,
        4 => raw as u32 as i32 as i64,
        _ => raw as i64,
    })
}

pub fn detect_jump_tables(
    fb: &FactBase,
    layout: &CodeLayout,
    an: &Analyses,
) -> (Vec<JumpTableStart>, Vec<TableEntry>) {
    let code = code_members(layout);
    let mut tables = BTreeSet::new();
    let mut entries = BTreeSet::new();
    for &ajump in &code {
        let Some(ins) = fb.instructions.get(&ajump) else { continue };
        if !decoder::is_uncond_jump(&ins.opcode) {
            continue;
        }
        let regs: Vec<&'static str> = ins
            .operand_ids()
            .filter_map(|id| fb.operand(id))
            .filter_map(direct_reg)
            .collect();
        let [regj] = regs[..] else { continue };
        for asum in defs_at(an, ajump, regj) {
            let Some(sum) = fb.instructions.get(&asum) else { continue };
            let Some((ra, rb)) = sum_operands(sum, fb) else { continue };
            for (regentry, regref) in [(ra, rb), (rb, ra)] {
                for aentry in defs_at(an, asum, regentry) {
                    for dap in an.daps.iter().filter(|d| d.from == aentry) {
                        if dap.mult != dap.size || ![1, 2, 4, 8].contains(&dap.size) {
                            continue;
                        }
                        for aref in defs_at(an, asum, regref) {
                            for rv in an.reg_vals.iter().filter(|v| {
                                v.a == aref && v.reg == regref && v.reg2 == NONE && v.mult == 0
                            }) {
                                let table = JumpTableStart {
                                    ajump,
                                    entry_size: dap.size as u64,
                                    start: dap.addr,
                                    reference: rv.disp as u64,
                                };
                                if tables.insert(table) {
                                    expand_entries(fb, an, &table, aentry, &mut entries);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    (tables.into_iter().collect(), entries.into_iter().collect())
}

/// Table entries follow the replicated access pattern of the original read:
/// one per propagated slot until the next access from different code.
fn expand_entries(
    fb: &FactBase,
    an: &Analyses,
    table: &JumpTableStart,
    aentry: u64,
    out: &mut BTreeSet<TableEntry>,
) {
    for p in an
        .propagated
        .iter()
        .filter(|p| p.from == aentry && p.addr >= table.start && p.size as u64 == table.entry_size)
    {
        let Some(value) = read_entry(fb, p.addr, table.entry_size) else { continue };
        let target = (table.reference as i64).wrapping_add(value) as u64;
        out.insert(TableEntry {
            addr: p.addr,
            size: table.entry_size,
            target,
            reference: table.reference,
        });
    }
}

// ---------------------------------------------------------------------------
// Data-object candidates
// ---------------------------------------------------------------------------

fn printable(b: u8) -> bool {
    (0x20..=0x7e).contains(&b) || b == b'\t' || b == b'\n'
}

pub fn collect_data_candidates(
    fb: &FactBase,
    layout: &CodeLayout,
    an: &Analyses,
    entries: &[TableEntry],
) -> Vec<DataObjectCandidate> {
    let mut cands = Vec::new();
    for (&addr, &target) in &fb.address_in_data {
        if covered_by_code(layout, addr, addr + 8) {
            continue;
        }
        cands.push(DataObjectCandidate {
            addr,
            kind: CandidateKind::Symbol,
            size: 8,
            target: Some(target),
            reference: None,
        });
    }
    for sec in fb.sections.iter().filter(|s| !s.executable && s.initialized) {
        let mut run_start = None;
        for a in sec.start..sec.end() {
            let b = *fb.data_bytes.get(&a).unwrap_or(&0);
            if printable(b) {
                run_start.get_or_insert(a);
            } else {
                if b == 0 {
                    if let Some(s) = run_start {
                        if a - s >= 2 {
                            cands.push(DataObjectCandidate {
                                addr: s,
                                kind: CandidateKind::String,
                                size: a - s + 1,
                                target: None,
                                reference: None,
                            });
                        }
                    }
                }
                run_start = None;
            }
        }
    }
    for e in entries {
        cands.push(DataObjectCandidate {
            addr: e.addr,
            kind: CandidateKind::SymbolSymbol,
            size: e.size,
            target: Some(e.target),
            reference: Some(e.reference),
        });
    }
    let entry_addrs: BTreeSet<u64> = entries.iter().map(|e| e.addr).collect();
    let mut seen_other = BTreeSet::new();
    for p in &an.propagated {
        if p.size == 8 || entry_addrs.contains(&p.addr) {
            continue;
        }
        let in_data = fb
            .section_containing(p.addr)
            .map(|s| !s.executable)
            .unwrap_or(false);
        if in_data && seen_other.insert((p.addr, p.size)) {
            cands.push(DataObjectCandidate {
                addr: p.addr,
                kind: CandidateKind::Other,
                size: p.size as u64,
                target: None,
                reference: None,
            });
        }
    }
    cands.sort_by_key(|c| (c.addr, c.kind, c.size));
    cands.dedup();
    cands
}

/// Maximal runs of >= 3 pointer candidates spaced exactly one pointer apart.
fn symbol_arrays(cands: &[DataObjectCandidate]) -> Vec<Vec<&DataObjectCandidate>> {
    let symbols: Vec<&DataObjectCandidate> = cands
        .iter()
        .filter(|c| c.kind == CandidateKind::Symbol)
        .collect();
    let mut arrays = Vec::new();
    let mut run: Vec<&DataObjectCandidate> = Vec::new();
    for c in symbols {
        match run.last() {
            Some(prev) if c.addr == prev.addr + 8 => run.push(c),
            _ => {
                if run.len() >= 3 {
                    arrays.push(std::mem::take(&mut run));
                }
                run = vec![c];
            }
        }
    }
    if run.len() >= 3 {
        arrays.push(run);
    }
    arrays
}

pub fn score_data_candidates(
    cands: &[DataObjectCandidate],
    fb: &FactBase,
    layout: &CodeLayout,
    an: &Analyses,
    w: &SymWeights,
) -> Vec<ScoredObject> {
    let code = code_members(layout);
    let arrays = symbol_arrays(cands);
    let array_members: BTreeSet<u64> = arrays.iter().flatten().map(|c| c.addr).collect();
    // Locations targeted by >= 2 entries of one array holding same-kind
    // candidates gain the pointed-by bonus.
    let mut pointed = BTreeSet::new();
    let by_addr: BTreeMap<u64, Vec<&DataObjectCandidate>> = cands.iter().fold(
        BTreeMap::new(),
        |mut m: BTreeMap<u64, Vec<&DataObjectCandidate>>, c| {
            m.entry(c.addr).or_default().push(c);
            m
        },
    );
    for array in &arrays {
        let mut per_kind: BTreeMap<CandidateKind, Vec<u64>> = BTreeMap::new();
        for member in array {
            let Some(t) = member.target else { continue };
            for c in by_addr.get(&t).into_iter().flatten() {
                per_kind.entry(c.kind).or_default().push(c.addr);
            }
        }
        for (kind, addrs) in per_kind {
            if addrs.len() >= 2 {
                pointed.extend(addrs.into_iter().map(|a| (a, kind)));
            }
        }
    }

    let mut out = Vec::new();
    for c in cands {
        let mut points: Vec<(&'static str, i64)> = Vec::new();
        match c.kind {
            CandidateKind::Symbol => {
                let target = c.target.unwrap_or(0);
                if code.contains(&target) {
                    points.push(("pointer-to-instruction", w.pointer_to_insn));
                }
                if an.propagated.iter().any(|p| p.addr == c.addr && p.size == 8) {
                    points.push(("data-access-match", w.data_access_match));
                }
                if array_members.contains(&c.addr) {
                    points.push(("symbol-array", w.symbol_array));
                }
                if c.addr % 8 == 0 {
                    points.push(("aligned", w.aligned));
                }
                if an
                    .propagated
                    .iter()
                    .any(|p| p.addr > c.addr && p.addr < c.addr + c.size)
                {
                    points.push(("access-conflict", w.access_conflict));
                }
                if in_special_section(fb, target, &w.special_sections) {
                    points.push(("special-section", w.special_section));
                }
            }
            CandidateKind::String => {
                points.push(("string", w.string_default));
                if c.size > 6 {
                    points.push(("long-string", w.long_string_bonus));
                }
            }
            CandidateKind::SymbolSymbol => {
                points.push(("data-access-match", w.data_access_match));
            }
            CandidateKind::Other => {
                points.push(("data-access-match", w.data_access_match));
            }
        }
        if pointed.contains(&(c.addr, c.kind)) {
            points.push(("pointed-by-symbol-array", w.pointed_by_array));
        }
        let total = points.iter().map(|(_, p)| p).sum();
        out.push(ScoredObject {
            cand: c.clone(),
            points,
            total,
        });
    }
    out
}

/// Greedy overlap resolution, same mechanism as block-conflict resolution:
/// highest total first, lower address breaking ties; losers below the keep
/// threshold with negative evidence are silently dropped, others recorded.
pub fn resolve_data_objects(
    mut scored: Vec<ScoredObject>,
    w: &SymWeights,
) -> (
    Vec<ScoredObject>,
    Vec<(DataObjectCandidate, i64, String)>,
    Vec<String>,
) {
    scored.sort_by(|a, b| {
        b.total
            .cmp(&a.total)
            .then(a.cand.addr.cmp(&b.cand.addr))
            .then(a.cand.kind.cmp(&b.cand.kind))
    });
    let mut kept: Vec<ScoredObject> = Vec::new();
    let mut discarded = Vec::new();
    let mut warnings = Vec::new();
    'cand: for so in scored {
        let lo = so.cand.addr;
        let hi = lo + so.cand.size;
        let negative = so.points.iter().any(|(_, p)| *p < 0);
        if so.total < w.data_keep_threshold && negative {
            discarded.push((so.cand, so.total, "below-threshold".into()));
            continue;
        }
        for k in &kept {
            let (klo, khi) = (k.cand.addr, k.cand.addr + k.cand.size);
            if lo < khi && klo < hi {
                if k.total == so.total {
                    warnings.push(format!(
                        "data-object tie at {:#x}: kept {:#x} by address order",
                        lo, klo
                    ));
                }
                discarded.push((so.cand, so.total, format!("overlaps {:#x}", klo)));
                continue 'cand;
            }
        }
        kept.push(so);
    }
    kept.sort_by_key(|s| (s.cand.addr, s.cand.kind));
    (kept, discarded, warnings)
}

// ---------------------------------------------------------------------------
// Code operands
// ---------------------------------------------------------------------------

fn is_uncommon_pointer_op(op: &str) -> bool {
    matches!(
        op,
        "mul" | "imul" | "div" | "idiv" | "xor" | "and" | "or" | "not" | "neg" | "shl" | "shr"
            | "sar" | "rol" | "ror" | "test"
    )
}

/// Destination register of a plain constant load, if this is one.
fn mov_imm_dest(ins: &InstructionFact, fb: &FactBase) -> Option<(&'static str, i64)> {
    if ins.opcode != "mov" && ins.opcode != "movabs" {
        return None;
    }
    let ops: Vec<&OperandPayload> = ins.operand_ids().filter_map(|id| fb.operand(id)).collect();
    match ops[..] {
        [OperandPayload::Immediate { value }, OperandPayload::RegDirect { reg }] => {
            Some((real_reg(reg)?, *value))
        }
        _ => None,
    }
}

fn imm_of(ins: &InstructionFact, fb: &FactBase) -> Option<i64> {
    ins.operand_ids()
        .filter_map(|id| fb.operand(id))
        .find_map(|op| match op {
            OperandPayload::Immediate { value } => Some(*value),
            _ => None,
        })
}

pub fn symbolize_code_operands(
    fb: &FactBase,
    layout: &CodeLayout,
    an: &Analyses,
    w: &SymWeights,
) -> Vec<Decision> {
    let code = code_members(layout);
    let mut decisions = Vec::new();
    for &addr in &code {
        let Some(ins) = fb.instructions.get(&addr) else { continue };
        let is_branch = decoder::is_cond_jump(&ins.opcode)
            || decoder::is_uncond_jump(&ins.opcode)
            || decoder::is_call(&ins.opcode);
        for op in ins.operand_ids().filter_map(|id| fb.operand(id)) {
            match op {
                OperandPayload::Immediate { value } => {
                    if is_branch {
                        decisions.push(Decision {
                            addr,
                            context: Context::Immediate,
                            expr: SymbolicExpr::SymPlus {
                                target: *value as u64,
                                offset: 0,
                            },
                            points: vec![("branch-target", w.in_range_base)],
                            total: w.in_range_base,
                        });
                        continue;
                    }
                    if *value < 0 || !fb.in_any_section(*value as u64) {
                        continue;
                    }
                    let v = *value as u64;
                    let mut points = vec![("in-range", w.in_range_base)];
                    if code.contains(&v) {
                        points.push(("pointer-to-instruction", w.pointer_to_insn));
                    }
                    if in_special_section(fb, v, &w.special_sections) {
                        points.push(("special-section", w.special_section));
                    }
                    if is_uncommon_pointer_op(&ins.opcode) {
                        points.push(("uncommon-pointer-operation", w.uncommon_pointer_op));
                    }
                    if let Some((dest, _)) = mov_imm_dest(ins, fb) {
                        if an.def_used_for_address.contains(&(addr, dest)) {
                            points.push(("used-for-address", w.used_for_address));
                        }
                        let mut uncommon_use = false;
                        let mut bad_compare = false;
                        for du in an.def_used.iter().filter(|d| d.adef == addr && d.reg == dest)
                        {
                            let Some(user) = fb.instructions.get(&du.aused) else { continue };
                            if is_uncommon_pointer_op(&user.opcode) {
                                uncommon_use = true;
                            }
                            if user.opcode == "cmp" {
                                if let Some(other) = imm_of(user, fb) {
                                    if other < 0 || !fb.in_any_section(other as u64) {
                                        bad_compare = true;
                                    }
                                }
                            }
                        }
                        if uncommon_use {
                            points.push(("uncommon-pointer-operation", w.uncommon_pointer_op));
                        }
                        if bad_compare {
                            points.push(("compared-to-non-address", w.compared_to_non_address));
                        }
                    }
                    let total: i64 = points.iter().map(|(_, p)| p).sum();
                    let expr = if total >= w.code_threshold {
                        SymbolicExpr::SymPlus { target: v, offset: 0 }
                    } else {
                        SymbolicExpr::Literal(*value)
                    };
                    decisions.push(Decision {
                        addr,
                        context: Context::Immediate,
                        expr,
                        points,
                        total,
                    });
                }
                OperandPayload::Indirect { disp, rip, .. } => {
                    if *rip {
                        decisions.push(Decision {
                            addr,
                            context: Context::Displacement,
                            expr: SymbolicExpr::SymPlus {
                                target: *disp as u64,
                                offset: 0,
                            },
                            points: vec![("rip-relative", w.in_range_base)],
                            total: w.in_range_base,
                        });
                        continue;
                    }
                    if *disp < 0 || !fb.in_any_section(*disp as u64) {
                        continue;
                    }
                    let d = *disp as u64;
                    let mut points = vec![("in-range", w.in_range_base)];
                    if code.contains(&d) {
                        points.push(("pointer-to-instruction", w.pointer_to_insn));
                    }
                    if in_special_section(fb, d, &w.special_sections) {
                        points.push(("special-section", w.special_section));
                    }
                    let total: i64 = points.iter().map(|(_, p)| p).sum();
                    let expr = if total >= w.code_threshold {
                        SymbolicExpr::SymPlus { target: d, offset: 0 }
                    } else {
                        SymbolicExpr::Literal(*disp)
                    };
                    decisions.push(Decision {
                        addr,
                        context: Context::Displacement,
                        expr,
                        points,
                        total,
                    });
                }
                OperandPayload::RegDirect { .. } => {}
            }
        }
    }
    decisions
}

// ---------------------------------------------------------------------------
// Boundary repairs
// ---------------------------------------------------------------------------

fn reaching_vals<'a>(
    an: &'a Analyses,
    at: u64,
    reg: &'a str,
) -> impl Iterator<Item = &'a RegVal> + 'a {
    let defs: BTreeSet<u64> = an
        .def_used
        .iter()
        .filter(|d| d.aused == at && d.reg == reg)
        .map(|d| d.adef)
        .collect();
    an.reg_vals
        .iter()
        .filter(move |v| defs.contains(&v.a) && v.reg == reg)
}

fn nearest_data_boundary(fb: &FactBase, value: u64) -> Option<u64> {
    fb.sections
        .iter()
        .filter(|s| !s.executable)
        .flat_map(|s| [s.start, s.end()])
        .min_by_key(|b| value.abs_diff(*b))
}

fn upsert(decisions: &mut Vec<Decision>, d: Decision) {
    if let Some(old) = decisions
        .iter_mut()
        .find(|x| x.addr == d.addr && x.context == d.context)
    {
        *old = d;
    } else {
        decisions.push(d);
    }
}

/// Strided accesses `[R*M+D]` with `M > 1` address relative to a base the
/// displacement supplies, so D is symbolic even when it lands outside every
/// section; the anchor is the access's own DAP destination when that is a
/// real data address, else the closest data-section boundary.
pub fn repair_boundary_displacements(
    fb: &FactBase,
    layout: &CodeLayout,
    an: &Analyses,
    w: &SymWeights,
    decisions: &mut Vec<Decision>,
) {
    for &addr in &code_members(layout) {
        let Some(ins) = fb.instructions.get(&addr) else { continue };
        if ins.opcode == "lea" {
            continue;
        }
        for op in ins.operand_ids().filter_map(|id| fb.operand(id)) {
            let OperandPayload::Indirect {
                base,
                index,
                mult,
                disp,
                rip: false,
                ..
            } = op
            else {
                continue;
            };
            if *disp >= 0 && fb.in_any_section(*disp as u64) {
                continue;
            }
            let base_reg = real_reg(base);
            let strided_index = base_reg.is_none() && real_reg(index).is_some() && *mult > 1;
            let mut stride = if strided_index { *mult } else { 0 };
            if let Some(r) = base_reg {
                for v in reaching_vals(an, addr, r) {
                    if v.mult > 1 && v.reg2 != NONE {
                        stride = stride.max(v.mult);
                    }
                }
            }
            let strided_base = base_reg.is_some() && stride > 1;
            let const_base = base_reg.is_some_and(|r| {
                reaching_vals(an, addr, r).any(|v| {
                    v.reg2 == NONE && v.mult == 0 && v.disp >= 0 && fb.in_any_section(v.disp as u64)
                })
            });
            if const_base || !(strided_index || strided_base) {
                continue;
            }
            let dap_anchor = an
                .daps
                .iter()
                .find(|d| d.from == addr && fb.in_any_section(d.addr))
                .map(|d| d.addr);
            let Some(anchor) = dap_anchor.or_else(|| nearest_data_boundary(fb, *disp as u64))
            else {
                continue;
            };
            // A biased base sits within a couple of strides of its anchor
            // (element skips, trailing struct fields); anything farther is
            // ordinary indexed addressing with a small offset.
            if (disp - anchor as i64).abs() > 2 * stride {
                continue;
            }
            upsert(
                decisions,
                Decision {
                    addr,
                    context: Context::Displacement,
                    expr: SymbolicExpr::SymPlus {
                        target: anchor,
                        offset: disp - anchor as i64,
                    },
                    points: vec![("boundary-repair", w.in_range_base)],
                    total: w.in_range_base,
                },
            );
        }
    }
}

/// Loop bounds often sit one step past the section end (or just inside the
/// next section). For each loop counter stepping by M from a constant base,
/// immediates compared against it that land in the section extended by M on
/// both sides are rewritten as base + offset.
pub fn repair_boundary_immediates(
    fb: &FactBase,
    layout: &CodeLayout,
    an: &Analyses,
    w: &SymWeights,
    decisions: &mut Vec<Decision>,
) -> Vec<ExtendedRange> {
    let mut ranges = Vec::new();
    let code = code_members(layout);
    for lv in an.reg_vals.iter().filter(|v| v.reg2 == UNKNOWN && v.mult > 0) {
        // Base of the counter: the constant assigned at its origin def.
        let Some(base) = an
            .reg_vals
            .iter()
            .find(|v| v.a == lv.a2 && v.reg == lv.reg && v.reg2 == NONE && v.mult == 0)
            .map(|v| v.disp)
        else {
            continue;
        };
        if base < 0 {
            continue;
        }
        let Some(sec) = fb.section_containing(base as u64).cloned() else { continue };
        let m = lv.mult;
        let (low, high) = (sec.start as i64 - m, sec.end() as i64 + m);
        let inside = |x: i64| x >= sec.start as i64 && x < sec.end() as i64;
        ranges.push(ExtendedRange {
            section: sec.name.clone(),
            low,
            high,
            m,
            base: base as u64,
        });

        // cmp instructions the counter register reaches.
        for du in an.def_used.iter().filter(|d| d.adef == lv.a && d.reg == lv.reg) {
            let Some(cmp) = fb.instructions.get(&du.aused) else { continue };
            if cmp.opcode != "cmp" || !code.contains(&du.aused) {
                continue;
            }
            let mut candidates: Vec<(u64, i64)> = Vec::new();
            if let Some(v) = imm_of(cmp, fb) {
                candidates.push((du.aused, v));
            }
            for op in cmp.operand_ids().filter_map(|id| fb.operand(id)) {
                let Some(other) = direct_reg(op) else { continue };
                if other == lv.reg {
                    continue;
                }
                for aload in defs_at(an, du.aused, other) {
                    let Some(load) = fb.instructions.get(&aload) else { continue };
                    if let Some((dest, v)) = mov_imm_dest(load, fb) {
                        if dest == other {
                            candidates.push((aload, v));
                        }
                    }
                }
            }
            for (at, v) in candidates {
                if v < low || v > high || inside(v) {
                    continue;
                }
                upsert(
                    decisions,
                    Decision {
                        addr: at,
                        context: Context::Immediate,
                        expr: SymbolicExpr::SymPlus {
                            target: base as u64,
                            offset: v - base,
                        },
                        points: vec![("extended-range-repair", w.in_range_base)],
                        total: w.in_range_base,
                    },
                );
            }
        }
    }
    ranges.sort();
    ranges.dedup();
    ranges
}

// ---------------------------------------------------------------------------
// Driver, report, ground-truth diff
// ---------------------------------------------------------------------------

pub fn symbolize(fb: &FactBase, layout: &CodeLayout, an: &Analyses, w: &SymWeights) -> Symbolization {
    let (tables, entries) = detect_jump_tables(fb, layout, an);
    let cands = collect_data_candidates(fb, layout, an, &entries);
    let scored = score_data_candidates(&cands, fb, layout, an, w);
    let (objects, discarded, mut warnings) = resolve_data_objects(scored, w);

    let mut decisions = Vec::new();
    // Every pointer-sized number found in data gets exactly one decision.
    for (&addr, &target) in &fb.address_in_data {
        if covered_by_code(layout, addr, addr + 8) {
            decisions.push(Decision {
                addr,
                context: Context::Data,
                expr: SymbolicExpr::Literal(target as i64),
                points: vec![("inside-code", 0)],
                total: 0,
            });
            continue;
        }
        let kept = objects
            .iter()
            .find(|o| o.cand.addr == addr && o.cand.kind == CandidateKind::Symbol);
        match kept {
            Some(o) => decisions.push(Decision {
                addr,
                context: Context::Data,
                expr: SymbolicExpr::SymPlus { target, offset: 0 },
                points: o.points.clone(),
                total: o.total,
            }),
            None => {
                let lost = discarded
                    .iter()
                    .find(|(c, _, _)| c.addr == addr && c.kind == CandidateKind::Symbol);
                decisions.push(Decision {
                    addr,
                    context: Context::Data,
                    expr: SymbolicExpr::Literal(target as i64),
                    points: Vec::new(),
                    total: lost.map(|(_, t, _)| *t).unwrap_or(0),
                });
            }
        }
    }
    decisions.extend(symbolize_code_operands(fb, layout, an, w));
    repair_boundary_displacements(fb, layout, an, w, &mut decisions);
    let extended = repair_boundary_immediates(fb, layout, an, w, &mut decisions);
    decisions.sort_by_key(|d| (d.addr, d.context));

    // Self-check: a symbolic displacement whose access evidence lands in a
    // different section than the anchor likely points at the wrong section.
    for d in &decisions {
        if d.context != Context::Displacement {
            continue;
        }
        let Some(anchor) = d.expr.anchor() else { continue };
        for dap in an.daps.iter().filter(|p| p.from == d.addr) {
            let evidence = fb.section_containing(dap.addr).map(|s| s.start);
            let anchored = fb.section_containing(anchor).map(|s| s.start);
            if evidence.is_some() && anchored.is_some() && evidence != anchored {
                warnings.push(format!(
                    "displacement at {:#x} anchored at {:#x} but accessed data in another section",
                    d.addr, anchor
                ));
            }
        }
    }

    Symbolization {
        objects,
        discarded,
        tables,
        entries,
        decisions,
        extended,
        warnings,
    }
}

impl Symbolization {
    /// Results as dumpable relations, format-compatible with fact files.
    pub fn to_relations(&self) -> Vec<(&'static str, BTreeSet<Vec<Value>>)> {
        use Value::{Addr, Int, Text};
        let kind_label = |k: CandidateKind| match k {
            CandidateKind::Symbol => "symbol",
            CandidateKind::String => "string",
            CandidateKind::SymbolSymbol => "symbol_symbol",
            CandidateKind::Other => "other",
        };
        let tables = self
            .tables
            .iter()
            .map(|t| {
                vec![
                    Addr(t.ajump),
                    Int(t.entry_size as i64),
                    Addr(t.start),
                    Addr(t.reference),
                ]
            })
            .collect();
        let entries = self
            .entries
            .iter()
            .map(|e| {
                vec![
                    Addr(e.addr),
                    Int(e.size as i64),
                    Addr(e.target),
                    Addr(e.reference),
                ]
            })
            .collect();
        let objects = self
            .objects
            .iter()
            .map(|o| {
                vec![
                    Addr(o.cand.addr),
                    Text(kind_label(o.cand.kind).to_string()),
                    Int(o.cand.size as i64),
                    Int(o.total),
                ]
            })
            .collect();
        let discarded = self
            .discarded
            .iter()
            .map(|(c, total, reason)| {
                vec![
                    Addr(c.addr),
                    Text(kind_label(c.kind).to_string()),
                    Int(*total),
                    Text(reason.clone()),
                ]
            })
            .collect();
        let decisions = self
            .decisions
            .iter()
            .map(|d| {
                vec![
                    Addr(d.addr),
                    Text(d.context.label().to_string()),
                    Text(render_expr(&d.expr)),
                    Int(d.total),
                ]
            })
            .collect();
        let extended = self
            .extended
            .iter()
            .map(|r| {
                vec![
                    Text(r.section.clone()),
                    Int(r.low),
                    Int(r.high),
                    Int(r.m),
                    Addr(r.base),
                ]
            })
            .collect();
        vec![
            ("jump_table_start", tables),
            ("jump_table_entry", entries),
            ("data_object", objects),
            ("discarded_data_object", discarded),
            ("symbolization_decision", decisions),
            ("extended_section_range", extended),
        ]
    }
}

fn render_expr(e: &SymbolicExpr) -> String {
    match e {
        SymbolicExpr::Literal(v) => format!("{v}"),
        SymbolicExpr::SymPlus { target, offset } if *offset == 0 => format!("0x{target:x}"),
        SymbolicExpr::SymPlus { target, offset } => format!("0x{target:x}{offset:+}"),
        SymbolicExpr::SymMinusSym { target, reference } => {
            format!("0x{target:x}-0x{reference:x}")
        }
    }
}

pub fn render_report(sym: &Symbolization) -> String {
    let mut out = String::new();
    for d in &sym.decisions {
        let kind = if d.expr.is_symbolic() { "symbol" } else { "literal" };
        let heur: Vec<String> = d.points.iter().map(|(n, p)| format!("{n}={p}")).collect();
        out.push_str(&format!(
            "0x{:x}\t{}\t{}\t{}\t{}\t{}\n",
            d.addr,
            d.context.label(),
            kind,
            render_expr(&d.expr),
            d.total,
            heur.join(",")
        ));
    }
    let symbolic = sym.decisions.iter().filter(|d| d.expr.is_symbolic()).count();
    out.push_str(&format!("# decisions\t{}\n", sym.decisions.len()));
    out.push_str(&format!("# symbolic\t{symbolic}\n"));
    out.push_str(&format!("# objects\t{}\n", sym.objects.len()));
    out.push_str(&format!("# tables\t{}\n", sym.tables.len()));
    out.push_str(&format!("# entries\t{}\n", sym.entries.len()));
    out.push_str(&format!("# warnings\t{}\n", sym.warnings.len()));
    out
}

/// One expected-symbolic location from relocation ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct GroundTruth {
    pub addr: u64,
    pub context: Context,
    pub target: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DiffCounts {
    pub false_positives: u64,
    pub false_negatives: u64,
    pub wrong_section: u64,
}

pub fn diff_ground_truth(
    decisions: &[Decision],
    truth: &[GroundTruth],
    fb: &FactBase,
) -> Result<(DiffCounts, Vec<String>), SymError> {
    let mut counts = DiffCounts::default();
    let mut detail = Vec::new();
    let by_key: BTreeMap<(u64, Context), &Decision> =
        decisions.iter().map(|d| ((d.addr, d.context), d)).collect();
    let truth_keys: BTreeSet<(u64, Context)> =
        truth.iter().map(|t| (t.addr, t.context)).collect();
    for t in truth {
        if !fb.in_any_section(t.addr) && fb.instructions.get(&t.addr).is_none() {
            return Err(SymError::GroundTruthMismatch(t.addr));
        }
        if !fb.in_any_section(t.target) {
            return Err(SymError::GroundTruthMismatch(t.target));
        }
        match by_key.get(&(t.addr, t.context)) {
            Some(d) if d.expr.is_symbolic() => {
                let anchor_sec = d.expr.anchor().and_then(|a| section_start(fb, a));
                let truth_sec = section_start(fb, t.target);
                if anchor_sec != truth_sec {
                    counts.wrong_section += 1;
                    detail.push(format!(
                        "WS\t0x{:x}\t{}\t{}",
                        t.addr,
                        t.context.label(),
                        render_expr(&d.expr)
                    ));
                }
            }
            _ => {
                counts.false_negatives += 1;
                detail.push(format!("FN\t0x{:x}\t{}", t.addr, t.context.label()));
            }
        }
    }
    for d in decisions {
        if d.expr.is_symbolic() && !truth_keys.contains(&(d.addr, d.context)) {
            counts.false_positives += 1;
            detail.push(format!(
                "FP\t0x{:x}\t{}\t{}",
                d.addr,
                d.context.label(),
                render_expr(&d.expr)
            ));
        }
    }
    detail.sort();
    Ok((counts, detail))
}

fn section_start(fb: &FactBase, addr: u64) -> Option<u64> {
    fb.section_containing(addr).map(|s: &SectionInfo| s.start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::{run as analyze, AnalysisOptions};
    use crate::testutil::{block_of, fixture, jump_table_fixture, loop_bound_fixture, section};

    fn layout_of(fb: &FactBase, starts: &[u64]) -> CodeLayout {
        let mut layout = CodeLayout::default();
        for &s in starts {
            layout.blocks.push(block_of(fb, s));
        }
        layout
    }

    fn pipeline(fb: &FactBase, starts: &[u64]) -> (CodeLayout, Analyses) {
        let layout = layout_of(fb, starts);
        let an = analyze(fb, &layout, &AnalysisOptions::default());
        (layout, an)
    }

    fn decision(sym: &Symbolization, addr: u64, context: Context) -> Option<&Decision> {
        sym.decisions
            .iter()
            .find(|d| d.addr == addr && d.context == context)
    }

    #[test]
    fn jump_table_detected_with_entries() {
        let fb = jump_table_fixture(false);
        let (layout, an) = pipeline(&fb, &[0x47da7b]);
        let (tables, entries) = detect_jump_tables(&fb, &layout, &an);
        assert_eq!(
            tables,
            vec![JumpTableStart {
                ajump: 0x47da90,
                entry_size: 1,
                start: 0x4a09f0,
                reference: 0x47da93,
            }]
        );
        let targets: Vec<u64> = entries.iter().map(|e| e.target).collect();
        assert_eq!(targets, vec![0x47db3f, 0x47db36, 0x47db2b, 0x47db20]);
        assert_eq!(entries[0].addr, 0x4a09f0);
        // Stored bytes really are target - reference truncated to entry size.
        for e in &entries {
            let raw = fb.read_le(e.addr, e.size as u32).unwrap();
            assert_eq!(raw, e.target.wrapping_sub(e.reference) & 0xff);
        }
    }

    #[test]
    fn jump_table_detected_when_sum_uses_lea() {
        let fb = jump_table_fixture(true);
        let (layout, an) = pipeline(&fb, &[0x47da7b]);
        let (tables, entries) = detect_jump_tables(&fb, &layout, &an);
        assert_eq!(
            tables,
            vec![JumpTableStart {
                ajump: 0x47da91,
                entry_size: 1,
                start: 0x4a09f0,
                reference: 0x47da93,
            }]
        );
        assert_eq!(entries.len(), 4);
    }

    #[test]
    fn plain_load_jump_is_not_a_table() {
        // mov RAX,[RIP -> 0x4a09f0]; jmp RAX
        let mut text = Vec::new();
        text.extend_from_slice(&[0x48, 0x8b, 0x05, 0x00, 0x00, 0x00, 0x00]);
        text.extend_from_slice(&[0xff, 0xe0]);
        let disp = 0x4a09f0u32.wrapping_sub(0x401007);
        text[3..7].copy_from_slice(&disp.to_le_bytes());
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, text),
                section(".rodata", 0x4a09f0, false, vec![0u8; 16]),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let (tables, entries) = detect_jump_tables(&fb, &layout, &an);
        assert!(tables.is_empty());
        assert!(entries.is_empty());
    }

    #[test]
    fn table_entries_become_symbol_symbol_objects() {
        let fb = jump_table_fixture(false);
        let (layout, an) = pipeline(&fb, &[0x47da7b]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let ss: Vec<&ScoredObject> = sym
            .objects
            .iter()
            .filter(|o| o.cand.kind == CandidateKind::SymbolSymbol)
            .collect();
        assert_eq!(ss.len(), 4);
        assert_eq!(ss[0].cand.addr, 0x4a09f0);
        assert_eq!(ss[0].cand.target, Some(0x47db3f));
        assert_eq!(ss[0].cand.reference, Some(0x47da93));
    }

    /// String "ABCDEFGHIJK\0" whose tail bytes also read as an aligned
    /// pointer; the string outscores and keeps the pointer literal.
    fn string_overlap_fixture() -> FactBase {
        let mut data = vec![0u8; 0x40];
        data[..12].copy_from_slice(b"ABCDEFGHIJK\0");
        fixture(
            vec![
                section(".text", 0x401000, true, vec![0xc3]),
                section(".blob", 0x4b0000, false, vec![0u8; 0x10000]),
                section(".data", 0x500000, false, data),
            ],
            0x401000,
        )
    }

    #[test]
    fn string_outscores_overlapping_symbol() {
        let fb = string_overlap_fixture();
        // The tail of the string decodes as a pointer into .blob.
        assert_eq!(fb.address_in_data.get(&0x500008), Some(&0x4b4a49));
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let string = sym
            .objects
            .iter()
            .find(|o| o.cand.kind == CandidateKind::String)
            .expect("string object kept");
        assert_eq!(string.cand.addr, 0x500000);
        assert_eq!(string.cand.size, 12);
        assert_eq!(string.total, 4);
        assert!(sym
            .discarded
            .iter()
            .any(|(c, total, why)| c.addr == 0x500008 && *total == 1 && why.contains("overlaps")));
        let d = decision(&sym, 0x500008, Context::Data).unwrap();
        assert!(!d.expr.is_symbolic());
    }

    #[test]
    fn scaling_all_weights_changes_no_outcome() {
        let fb = string_overlap_fixture();
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let base = SymWeights::default();
        let scaled = SymWeights {
            pointer_to_insn: base.pointer_to_insn * 3,
            data_access_match: base.data_access_match * 3,
            symbol_array: base.symbol_array * 3,
            pointed_by_array: base.pointed_by_array * 3,
            aligned: base.aligned * 3,
            string_default: base.string_default * 3,
            long_string_bonus: base.long_string_bonus * 3,
            access_conflict: base.access_conflict * 3,
            special_section: base.special_section * 3,
            in_range_base: base.in_range_base * 3,
            used_for_address: base.used_for_address * 3,
            uncommon_pointer_op: base.uncommon_pointer_op * 3,
            compared_to_non_address: base.compared_to_non_address * 3,
            data_keep_threshold: base.data_keep_threshold * 3,
            code_threshold: base.code_threshold * 3,
            special_sections: base.special_sections.clone(),
        };
        let a = symbolize(&fb, &layout, &an, &base);
        let b = symbolize(&fb, &layout, &an, &scaled);
        let shape =
            |s: &Symbolization| -> Vec<(u64, Context, bool)> {
                s.decisions
                    .iter()
                    .map(|d| (d.addr, d.context, d.expr.is_symbolic()))
                    .collect()
            };
        assert_eq!(shape(&a), shape(&b));
        let kept = |s: &Symbolization| -> Vec<(u64, CandidateKind)> {
            s.objects.iter().map(|o| (o.cand.addr, o.cand.kind)).collect()
        };
        assert_eq!(kept(&a), kept(&b));
    }

    #[test]
    fn symbol_array_of_three_block_pointers() {
        // ret; ret; ret at 0x401000..2, pointed at by three packed pointers.
        let mut data = vec![0u8; 0x40];
        for (k, target) in [0x401000u64, 0x401001, 0x401002].iter().enumerate() {
            data[8 * k..8 * k + 8].copy_from_slice(&target.to_le_bytes());
        }
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, vec![0xc3, 0xc3, 0xc3]),
                section(".data", 0x500000, false, data),
            ],
            0x401000,
        );
        let layout = CodeLayout {
            blocks: vec![
                block_of(&fb, 0x401000),
            ],
            ..CodeLayout::default()
        };
        let an = analyze(&fb, &layout, &AnalysisOptions::default());
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        for addr in [0x500000u64, 0x500008, 0x500010] {
            let d = decision(&sym, addr, Context::Data).unwrap();
            assert!(d.expr.is_symbolic(), "pointer at {addr:#x} kept");
            assert!(d.points.iter().any(|(n, _)| *n == "symbol-array"));
        }
    }

    #[test]
    fn pointer_into_special_section_stays_literal() {
        let mut data = vec![0u8; 0x10];
        data[..8].copy_from_slice(&0x402df0u64.to_le_bytes());
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, vec![0xc3]),
                section(".eh_frame_hdr", 0x402de8, false, vec![0u8; 0x40]),
                section(".data", 0x500000, false, data),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let d = decision(&sym, 0x500000, Context::Data).unwrap();
        assert!(!d.expr.is_symbolic());
        assert!(sym
            .discarded
            .iter()
            .any(|(c, _, why)| c.addr == 0x500000 && why == "below-threshold"));
    }

    #[test]
    fn xor_immediate_stays_literal() {
        // xor RAX, 0x500010 (a .data address); ret
        let mut text = vec![0x48, 0x35];
        text.extend_from_slice(&0x500010u32.to_le_bytes());
        text.push(0xc3);
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, text),
                section(".data", 0x500000, false, vec![0u8; 0x40]),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let d = decision(&sym, 0x401000, Context::Immediate).unwrap();
        assert!(!d.expr.is_symbolic());
        assert!(d
            .points
            .iter()
            .any(|(n, _)| *n == "uncommon-pointer-operation"));
    }

    #[test]
    fn constant_load_feeding_an_access_is_symbolic() {
        // mov EDX, 0x401000 (block start); mov RAX,[RDX]; ret
        let mut text = vec![0xba];
        text.extend_from_slice(&0x401000u32.to_le_bytes());
        text.extend_from_slice(&[0x48, 0x8b, 0x02, 0xc3]);
        let fb = fixture(vec![section(".text", 0x401000, true, text)], 0x401000);
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let d = decision(&sym, 0x401000, Context::Immediate).unwrap();
        assert_eq!(
            d.expr,
            SymbolicExpr::SymPlus {
                target: 0x401000,
                offset: 0
            }
        );
        assert_eq!(d.total, 5);
        assert!(d.points.iter().any(|(n, _)| *n == "used-for-address"));
    }

    #[test]
    fn constant_compared_to_non_address_stays_literal() {
        // mov EBX, 0x500008; cmp RBX, 100; ret
        let mut text = vec![0xbb];
        text.extend_from_slice(&0x500008u32.to_le_bytes());
        text.extend_from_slice(&[0x48, 0x83, 0xfb, 0x64, 0xc3]);
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, text),
                section(".data", 0x500000, false, vec![0u8; 0x40]),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let d = decision(&sym, 0x401000, Context::Immediate).unwrap();
        assert!(!d.expr.is_symbolic());
        assert!(d
            .points
            .iter()
            .any(|(n, _)| *n == "compared-to-non-address"));
    }

    #[test]
    fn loop_bound_immediate_repaired_past_section_end() {
        let fb = loop_bound_fixture();
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        // Counter base load stays plainly symbolic.
        let base = decision(&sym, 0x401000, Context::Immediate).unwrap();
        assert_eq!(
            base.expr,
            SymbolicExpr::SymPlus {
                target: 0x402d40,
                offset: 0
            }
        );
        // Bound lands one step past .rodata, inside .eh_frame_hdr: rewritten
        // relative to the counter base instead of the wrong section.
        let bound = decision(&sym, 0x401005, Context::Immediate).unwrap();
        assert_eq!(
            bound.expr,
            SymbolicExpr::SymPlus {
                target: 0x402d40,
                offset: 168
            }
        );
        assert!(bound
            .points
            .iter()
            .any(|(n, _)| *n == "extended-range-repair"));
        assert_eq!(
            sym.extended,
            vec![ExtendedRange {
                section: ".rodata".into(),
                low: 0x402718,
                high: 0x402df0,
                m: 8,
                base: 0x402d40,
            }]
        );
    }

    #[test]
    fn immediate_outside_extended_range_not_repaired() {
        // Same loop, but the bound is one whole step past the extension.
        let mut text = Vec::new();
        text.extend_from_slice(&[0xbb, 0x40, 0x2d, 0x40, 0x00]);
        text.extend_from_slice(&[0xbd, 0xf8, 0x2d, 0x40, 0x00]); // 0x402df8 > end+8
        text.extend_from_slice(&[0x48, 0x8b, 0x0b]);
        text.extend_from_slice(&[0x48, 0x83, 0xc3, 0x08]);
        text.extend_from_slice(&[0x48, 0x39, 0xeb]);
        text.extend_from_slice(&[0x75, 0xf4]);
        text.push(0xc3);
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, text),
                section(".rodata", 0x402720, false, vec![0u8; 0x6c8]),
                section(".eh_frame_hdr", 0x402de8, false, vec![0u8; 0x40]),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let bound = decision(&sym, 0x401005, Context::Immediate).unwrap();
        assert!(!bound.expr.is_symbolic());
    }

    #[test]
    fn strided_displacement_anchored_at_nearest_boundary() {
        // mov RAX,[RBX*8 + 0x500110]; ret -- 16 bytes past .data's end.
        let mut text = vec![0x48, 0x8b, 0x04, 0xdd];
        text.extend_from_slice(&0x500110u32.to_le_bytes());
        text.push(0xc3);
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, text),
                section(".data", 0x500000, false, vec![0u8; 0x100]),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let d = decision(&sym, 0x401000, Context::Displacement).unwrap();
        assert_eq!(
            d.expr,
            SymbolicExpr::SymPlus {
                target: 0x500100,
                offset: 16
            }
        );
        // Repaired anchors still evaluate back to the raw displacement.
        if let SymbolicExpr::SymPlus { target, offset } = d.expr {
            assert_eq!(target as i64 + offset, 0x500110);
        }
    }

    #[test]
    fn multiplied_base_register_triggers_displacement_repair() {
        // mov RDI,[RIP->data]; lea RBX,[RDI*8]; mov RAX,[RBX+0x500110]; ret
        let mut text = Vec::new();
        text.extend_from_slice(&[0x48, 0x8b, 0x3d, 0x00, 0x00, 0x00, 0x00]);
        let disp = 0x500000u32.wrapping_sub(0x401007);
        text[3..7].copy_from_slice(&disp.to_le_bytes());
        text.extend_from_slice(&[0x48, 0x8d, 0x1c, 0xfd, 0x00, 0x00, 0x00, 0x00]);
        text.extend_from_slice(&[0x48, 0x8b, 0x83]);
        text.extend_from_slice(&0x500110u32.to_le_bytes());
        text.push(0xc3);
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, text),
                section(".data", 0x500000, false, vec![0u8; 0x100]),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let d = decision(&sym, 0x40100f, Context::Displacement).unwrap();
        assert!(d.expr.is_symbolic());
        assert!(d.points.iter().any(|(n, _)| *n == "boundary-repair"));
    }

    #[test]
    fn constant_base_register_keeps_displacement_literal() {
        // mov RBX, 0x500010; mov RAX,[RBX-8]; ret
        let mut text = vec![0xbb];
        text.extend_from_slice(&0x500010u32.to_le_bytes());
        text.extend_from_slice(&[0x48, 0x8b, 0x43, 0xf8, 0xc3]);
        let fb = fixture(
            vec![
                section(".text", 0x401000, true, text),
                section(".data", 0x500000, false, vec![0u8; 0x40]),
            ],
            0x401000,
        );
        let (layout, an) = pipeline(&fb, &[0x401000]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        assert!(decision(&sym, 0x401005, Context::Displacement).is_none());
    }

    #[test]
    fn report_covers_every_data_address_once() {
        let fb = crate::testutil::loop_fixture();
        let (layout, an) = pipeline(&fb, &[0x413050, 0x416c2d]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let data: Vec<u64> = sym
            .decisions
            .iter()
            .filter(|d| d.context == Context::Data)
            .map(|d| d.addr)
            .collect();
        let expected: Vec<u64> = fb.address_in_data.keys().copied().collect();
        assert_eq!(data, expected);
        // Keys are unique across the whole report.
        let keys: BTreeSet<(u64, Context)> = sym
            .decisions
            .iter()
            .map(|d| (d.addr, d.context))
            .collect();
        assert_eq!(keys.len(), sym.decisions.len());
        let report = render_report(&sym);
        assert!(report.contains("0x416c4e\timmediate\tsymbol\t0x45cb23\t1\tin-range=1"));
        assert!(report.contains("0x416c40\tdisplacement\tsymbol\t0x673e80\t1\trip-relative=1"));
        assert!(report.contains(&format!("# decisions\t{}\n", sym.decisions.len())));
    }

    #[test]
    fn ground_truth_diff_counts() {
        let fb = crate::testutil::loop_fixture();
        let (layout, an) = pipeline(&fb, &[0x413050, 0x416c2d]);
        let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
        let truth: Vec<GroundTruth> = sym
            .decisions
            .iter()
            .filter_map(|d| {
                d.expr.anchor().map(|target| GroundTruth {
                    addr: d.addr,
                    context: d.context,
                    target,
                })
            })
            .collect();
        assert!(!truth.is_empty());
        let (counts, detail) = diff_ground_truth(&sym.decisions, &truth, &fb).unwrap();
        assert_eq!(counts, DiffCounts::default());
        assert!(detail.is_empty());

        // Drop one expected symbol: the report now misses it.
        let mut fewer = sym.decisions.clone();
        let victim = truth[0];
        fewer.retain(|d| !(d.addr == victim.addr && d.context == victim.context));
        let (counts, _) = diff_ground_truth(&fewer, &truth, &fb).unwrap();
        assert_eq!(counts.false_negatives, 1);
        assert_eq!(counts.false_positives, 0);

        // An anchor in the wrong section is flagged, not just missed.
        let mut skewed = sym.decisions.clone();
        for d in &mut skewed {
            if d.addr == victim.addr && d.context == victim.context {
                d.expr = SymbolicExpr::SymPlus {
                    target: 0x413050,
                    offset: 0,
                };
            }
        }
        let (counts, _) = diff_ground_truth(&skewed, &truth, &fb).unwrap();
        assert_eq!(counts.wrong_section, 1);

        let bogus = vec![GroundTruth {
            addr: 0x10,
            context: Context::Data,
            target: 0x10,
        }];
        assert!(matches!(
            diff_ground_truth(&sym.decisions, &bogus, &fb),
            Err(SymError::GroundTruthMismatch(_))
        ));
    }

    #[test]
    fn resolved_objects_do_not_overlap() {
        for fb in [
            jump_table_fixture(false),
            string_overlap_fixture(),
            crate::testutil::loop_fixture(),
        ] {
            let starts: Vec<u64> = fb.entry_points.iter().copied().collect();
            let (layout, an) = pipeline(&fb, &starts);
            let sym = symbolize(&fb, &layout, &an, &SymWeights::default());
            let mut prev_end = 0u64;
            for o in &sym.objects {
                assert!(o.cand.addr >= prev_end, "objects overlap at {:#x}", o.cand.addr);
                prev_end = o.cand.addr + o.cand.size;
                let sec = fb.section_containing(o.cand.addr).unwrap();
                assert!(o.cand.addr + o.cand.size <= sec.end());
            }
        }
    }
}
