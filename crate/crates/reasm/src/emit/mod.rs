//! Assembly printer and the stretch transform used for round-trip testing.
//!
//! The printer turns the final database (facts + block layout + symbolization)
//! into GNU-assembler Intel-syntax text where every symbolized number is a
//! `.L_<ADDR>` label expression. Stretching inserts NOP groups into code and
//! zero padding into data so that a relinked binary only works if the
//! literal/symbol decisions were right.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::facts::registers::NONE;
use crate::facts::{FactBase, InstructionFact, OperandPayload, SectionInfo};
use crate::frontend::decoder;
use crate::ibi::CodeLayout;
use crate::symbolization::{CandidateKind, Context, Decision, SymbolicExpr, Symbolization};

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("referenced label {0:#x} has no definition site")]
    UnresolvedLabel(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum AsmItem {
    Label(u64),
    /// Exported symbol, printed as `.globl name` + `name:`.
    Global { name: String },
    Insn {
        addr: u64,
        text: String,
        exprs: Vec<SymbolicExpr>,
    },
    /// Stretch-inserted padding instruction.
    Nop,
    /// Sized directive with a symbolic payload (.byte/.word/.long/.quad).
    DataExpr { size: u8, expr: SymbolicExpr },
    Str(Vec<u8>),
    Bytes(Vec<u8>),
    Zero(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsmSection {
    pub name: String,
    pub addr: u64,
    pub executable: bool,
    pub writable: bool,
    pub items: Vec<AsmItem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsmProgram {
    pub sections: Vec<AsmSection>,
    pub defined_labels: BTreeSet<u64>,
    pub referenced_labels: BTreeSet<u64>,
}

pub fn label(addr: u64) -> String {
    format!(".L_{addr:X}")
}

fn expr_text(expr: &SymbolicExpr) -> String {
    match expr {
        SymbolicExpr::Literal(v) => format!("{v}"),
        SymbolicExpr::SymPlus { target, offset: 0 } => label(*target),
        SymbolicExpr::SymPlus { target, offset } => format!("{}{:+}", label(*target), offset),
        SymbolicExpr::SymMinusSym { target, reference } => {
            format!("{}-{}", label(*target), label(*reference))
        }
    }
}

fn expr_refs(expr: &SymbolicExpr, refs: &mut BTreeSet<u64>) {
    match expr {
        SymbolicExpr::Literal(_) => {}
        SymbolicExpr::SymPlus { target, .. } => {
            refs.insert(*target);
        }
        SymbolicExpr::SymMinusSym { target, reference } => {
            refs.insert(*target);
            refs.insert(*reference);
        }
    }
}

fn ptr_prefix(size: u8) -> &'static str {
    match size {
        1 => "BYTE PTR ",
        2 => "WORD PTR ",
        4 => "DWORD PTR ",
        8 => "QWORD PTR ",
        _ => "",
    }
}

struct Renderer<'a> {
    fb: &'a FactBase,
    decisions: BTreeMap<(u64, Context), SymbolicExpr>,
}

impl<'a> Renderer<'a> {
    fn new(fb: &'a FactBase, sym: &'a Symbolization) -> Self {
        let decisions = sym
            .decisions
            .iter()
            .map(|d: &Decision| ((d.addr, d.context), d.expr))
            .collect();
        Renderer { fb, decisions }
    }

    fn decision(&self, addr: u64, context: Context) -> Option<SymbolicExpr> {
        self.decisions.get(&(addr, context)).copied()
    }

    fn insn(&self, ins: &InstructionFact) -> AsmItem {
        let is_branch = decoder::is_cond_jump(&ins.opcode)
            || decoder::is_uncond_jump(&ins.opcode)
            || decoder::is_call(&ins.opcode);
        let mut exprs = Vec::new();
        let mut rendered: Vec<String> = Vec::new();
        for op in ins.operand_ids().filter_map(|id| self.fb.operand(id)) {
            rendered.push(self.operand(ins, op, is_branch, &mut exprs));
        }
        // Operands are stored sources-first; Intel syntax wants dest first.
        rendered.reverse();
        let mut text = String::new();
        if !ins.prefix.is_empty() {
            text.push_str(&ins.prefix);
            text.push(' ');
        }
        text.push_str(&ins.opcode);
        if !rendered.is_empty() {
            text.push(' ');
            text.push_str(&rendered.join(","));
        }
        AsmItem::Insn {
            addr: ins.addr,
            text,
            exprs,
        }
    }

    fn operand(
        &self,
        ins: &InstructionFact,
        op: &OperandPayload,
        is_branch: bool,
        exprs: &mut Vec<SymbolicExpr>,
    ) -> String {
        match op {
            OperandPayload::RegDirect { reg } => reg.clone(),
            OperandPayload::Immediate { value } => {
                match self.decision(ins.addr, Context::Immediate) {
                    Some(expr) if expr.is_symbolic() => {
                        exprs.push(expr);
                        if is_branch {
                            expr_text(&expr)
                        } else {
                            format!("OFFSET {}", expr_text(&expr))
                        }
                    }
                    _ => format!("{value}"),
                }
            }
            OperandPayload::Indirect {
                seg,
                base,
                index,
                mult,
                disp,
                access_size,
                rip,
            } => {
                let mut inner = String::new();
                if *rip {
                    inner.push_str("RIP");
                } else if base != NONE {
                    inner.push_str(base);
                }
                if index != NONE {
                    if !inner.is_empty() {
                        inner.push('+');
                    }
                    inner.push_str(&format!("{index}*{mult}"));
                }
                match self.decision(ins.addr, Context::Displacement) {
                    Some(expr) if expr.is_symbolic() => {
                        exprs.push(expr);
                        if !inner.is_empty() {
                            inner.push('+');
                        }
                        inner.push_str(&expr_text(&expr));
                    }
                    _ => {
                        if inner.is_empty() {
                            inner.push_str(&format!("{disp}"));
                        } else if *disp < 0 {
                            inner.push_str(&format!("{disp}"));
                        } else if *disp > 0 {
                            inner.push_str(&format!("+{disp}"));
                        }
                    }
                }
                let ptr = if ins.opcode == "lea" {
                    ""
                } else {
                    ptr_prefix(*access_size)
                };
                let seg = if seg == NONE {
                    String::new()
                } else {
                    format!("{}:", seg.to_ascii_lowercase())
                };
                format!("{ptr}{seg}[{inner}]")
            }
        }
    }
}

/// Addresses that will need a `.L_` definition somewhere in the output.
fn collect_referenced(sym: &Symbolization) -> BTreeSet<u64> {
    let mut refs = BTreeSet::new();
    for d in &sym.decisions {
        expr_refs(&d.expr, &mut refs);
    }
    for o in &sym.objects {
        match o.cand.kind {
            CandidateKind::Symbol => {
                if let Some(t) = o.cand.target {
                    refs.insert(t);
                }
            }
            CandidateKind::SymbolSymbol => {
                if let Some(t) = o.cand.target {
                    refs.insert(t);
                }
                if let Some(r) = o.cand.reference {
                    refs.insert(r);
                }
            }
            _ => {}
        }
    }
    refs
}

/// Raw byte run [from, to) split at referenced label positions.
fn emit_raw(
    fb: &FactBase,
    from: u64,
    to: u64,
    referenced: &BTreeSet<u64>,
    defined: &mut BTreeSet<u64>,
    items: &mut Vec<AsmItem>,
) {
    let mut cut_points: Vec<u64> = referenced.range(from..to).copied().collect();
    cut_points.push(to);
    let mut at = from;
    for cut in cut_points {
        if cut > at {
            push_bytes(fb, at, cut, items);
        }
        if cut < to && defined.insert(cut) {
            items.push(AsmItem::Label(cut));
        }
        at = cut;
    }
}

/// Literal bytes with zero runs of eight or more coalesced into `.zero`.
fn push_bytes(fb: &FactBase, from: u64, to: u64, items: &mut Vec<AsmItem>) {
    let bytes: Vec<u8> = (from..to)
        .map(|a| *fb.data_bytes.get(&a).unwrap_or(&0))
        .collect();
    let zero_run = |i: usize| bytes[i..].iter().take_while(|b| **b == 0).count();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == 0 && zero_run(i) >= 8 {
            let n = zero_run(i);
            items.push(AsmItem::Zero(n as u64));
            i += n;
            continue;
        }
        let mut j = i + 1;
        while j < bytes.len() && !(bytes[j] == 0 && zero_run(j) >= 8) {
            j += 1;
        }
        items.push(AsmItem::Bytes(bytes[i..j].to_vec()));
        i = j;
    }
}

fn emit_code_section(
    fb: &FactBase,
    layout: &CodeLayout,
    sec: &SectionInfo,
    renderer: &Renderer,
    referenced: &BTreeSet<u64>,
    defined: &mut BTreeSet<u64>,
    items: &mut Vec<AsmItem>,
) {
    let mut at = sec.start;
    for block in layout
        .blocks
        .iter()
        .filter(|b| b.start >= sec.start && b.start < sec.end())
    {
        if block.start > at {
            emit_raw(fb, at, block.start, referenced, defined, items);
        }
        for &addr in &block.members {
            if fb.entry_points.contains(&addr) {
                items.push(AsmItem::Global {
                    name: "_start".into(),
                });
            }
            if referenced.contains(&addr) && defined.insert(addr) {
                items.push(AsmItem::Label(addr));
            }
            if let Some(ins) = fb.instructions.get(&addr) {
                items.push(renderer.insn(ins));
            }
        }
        at = block.end;
    }
    if sec.end() > at {
        emit_raw(fb, at, sec.end(), referenced, defined, items);
    }
}

fn emit_data_section(
    fb: &FactBase,
    sec: &SectionInfo,
    sym: &Symbolization,
    referenced: &BTreeSet<u64>,
    defined: &mut BTreeSet<u64>,
    items: &mut Vec<AsmItem>,
) {
    let mut at = sec.start;
    for o in sym
        .objects
        .iter()
        .filter(|o| o.cand.addr >= sec.start && o.cand.addr < sec.end())
    {
        if o.cand.addr < at {
            continue;
        }
        if o.cand.addr > at {
            emit_raw(fb, at, o.cand.addr, referenced, defined, items);
        }
        if referenced.contains(&o.cand.addr) && defined.insert(o.cand.addr) {
            items.push(AsmItem::Label(o.cand.addr));
        }
        match o.cand.kind {
            CandidateKind::Symbol => {
                let target = o.cand.target.unwrap_or(0);
                items.push(AsmItem::DataExpr {
                    size: 8,
                    expr: SymbolicExpr::SymPlus { target, offset: 0 },
                });
            }
            CandidateKind::SymbolSymbol => {
                items.push(AsmItem::DataExpr {
                    size: o.cand.size as u8,
                    expr: SymbolicExpr::SymMinusSym {
                        target: o.cand.target.unwrap_or(0),
                        reference: o.cand.reference.unwrap_or(0),
                    },
                });
            }
            CandidateKind::String => {
                // A label can point into the body (e.g. an empty string merged
                // into another's terminator); fall back to raw bytes then.
                let end = o.cand.addr + o.cand.size;
                if referenced.range(o.cand.addr + 1..end).next().is_some() {
                    emit_raw(fb, o.cand.addr, end, referenced, defined, items);
                } else {
                    let body: Vec<u8> = (o.cand.addr..end - 1)
                        .map(|a| *fb.data_bytes.get(&a).unwrap_or(&0))
                        .collect();
                    items.push(AsmItem::Str(body));
                }
            }
            CandidateKind::Other => {
                emit_raw(
                    fb,
                    o.cand.addr,
                    o.cand.addr + o.cand.size,
                    referenced,
                    defined,
                    items,
                );
            }
        }
        at = o.cand.addr + o.cand.size;
    }
    if sec.end() > at {
        emit_raw(fb, at, sec.end(), referenced, defined, items);
    }
}

pub fn print_asm(
    fb: &FactBase,
    layout: &CodeLayout,
    sym: &Symbolization,
) -> Result<AsmProgram, EmitError> {
    let referenced = collect_referenced(sym);
    let renderer = Renderer::new(fb, sym);
    let mut defined = BTreeSet::new();
    let mut sections = Vec::new();
    for sec in &fb.sections {
        let mut items = Vec::new();
        if sec.executable {
            emit_code_section(
                fb, layout, sec, &renderer, &referenced, &mut defined, &mut items,
            );
        } else if !sec.initialized {
            // No bytes to print, but referenced labels still need homes.
            let mut at = sec.start;
            for &cut in referenced.range(sec.start..sec.end()) {
                if cut > at {
                    items.push(AsmItem::Zero(cut - at));
                }
                if defined.insert(cut) {
                    items.push(AsmItem::Label(cut));
                }
                at = cut;
            }
            if sec.end() > at {
                items.push(AsmItem::Zero(sec.end() - at));
            }
        } else {
            emit_data_section(fb, sec, sym, &referenced, &mut defined, &mut items);
        }
        // A boundary anchor can sit one past the section's last byte.
        if referenced.contains(&sec.end())
            && !fb.sections.iter().any(|s| s.start == sec.end())
            && defined.insert(sec.end())
        {
            items.push(AsmItem::Label(sec.end()));
        }
        sections.push(AsmSection {
            name: sec.name.clone(),
            addr: sec.start,
            executable: sec.executable,
            writable: sec.writable,
            items,
        });
    }
    if let Some(missing) = referenced.difference(&defined).next() {
        return Err(EmitError::UnresolvedLabel(*missing));
    }
    Ok(AsmProgram {
        sections,
        defined_labels: defined,
        referenced_labels: referenced,
    })
}

fn escape_string(bytes: &[u8]) -> String {
    let mut out = String::new();
    for &b in bytes {
        match b {
            b'"' => out.push_str("\\\""),
            b'\\' => out.push_str("\\\\"),
            b'\n' => out.push_str("\\n"),
            b'\t' => out.push_str("\\t"),
            0x20..=0x7e => out.push(b as char),
            _ => out.push_str(&format!("\\{b:03o}")),
        }
    }
    out
}

fn data_directive(size: u8) -> &'static str {
    match size {
        1 => ".byte",
        2 => ".word",
        4 => ".long",
        _ => ".quad",
    }
}

impl AsmProgram {
    pub fn render(&self) -> String {
        let mut out = String::from(".intel_syntax noprefix\n");
        for sec in &self.sections {
            let flags = match (sec.executable, sec.writable) {
                (true, _) => "ax",
                (false, true) => "aw",
                (false, false) => "a",
            };
            out.push_str(&format!(".section {},\"{}\",@progbits\n", sec.name, flags));
            for item in &sec.items {
                match item {
                    AsmItem::Label(a) => out.push_str(&format!("{}:\n", label(*a))),
                    AsmItem::Global { name } => {
                        out.push_str(&format!(".globl {name}\n{name}:\n"))
                    }
                    AsmItem::Insn { text, .. } => out.push_str(&format!("\t{text}\n")),
                    AsmItem::Nop => out.push_str("\tnop\n"),
                    AsmItem::DataExpr { size, expr } => out.push_str(&format!(
                        "\t{} {}\n",
                        data_directive(*size),
                        expr_text(expr)
                    )),
                    AsmItem::Str(bytes) => {
                        out.push_str(&format!("\t.string \"{}\"\n", escape_string(bytes)))
                    }
                    AsmItem::Bytes(bytes) => {
                        for chunk in bytes.chunks(16) {
                            let row: Vec<String> =
                                chunk.iter().map(|b| format!("{b:#04x}")).collect();
                            out.push_str(&format!("\t.byte {}\n", row.join(",")));
                        }
                    }
                    AsmItem::Zero(n) => out.push_str(&format!("\t.zero {n}\n")),
                }
            }
        }
        out.push_str(".section .note.GNU-stack,\"\",@progbits\n");
        out
    }

    /// Multiset of symbolic expressions across all items; invariant under
    /// stretching.
    pub fn expr_multiset(&self) -> Vec<SymbolicExpr> {
        let mut all = Vec::new();
        for sec in &self.sections {
            for item in &sec.items {
                match item {
                    AsmItem::Insn { exprs, .. } => all.extend(exprs.iter().copied()),
                    AsmItem::DataExpr { expr, .. } => all.push(*expr),
                    _ => {}
                }
            }
        }
        all.sort_by_key(|e| format!("{e:?}"));
        all
    }
}

/// The round-trip stressor: 8 NOPs after every 8th instruction (skipping
/// spans covered by symbol-symbol jump tables, whose narrow entries cannot
/// absorb growth) and 64 zero bytes at the start of every data section.
pub fn stretch(prog: &AsmProgram, sym: &Symbolization) -> AsmProgram {
    let mut spans: Vec<(u64, u64)> = Vec::new();
    for t in &sym.tables {
        let targets: Vec<u64> = sym
            .entries
            .iter()
            .filter(|e| e.reference == t.reference)
            .map(|e| e.target)
            .collect();
        if targets.is_empty() {
            continue;
        }
        let lo = targets.iter().copied().min().unwrap().min(t.reference);
        let hi = targets.iter().copied().max().unwrap().max(t.reference);
        spans.push((lo, hi + 1));
    }
    let in_span = |addr: u64| spans.iter().any(|(lo, hi)| addr >= *lo && addr < *hi);

    let mut out = prog.clone();
    for sec in &mut out.sections {
        if sec.executable {
            let mut items = Vec::with_capacity(sec.items.len());
            let mut count = 0u64;
            for item in sec.items.drain(..) {
                let insn_addr = match &item {
                    AsmItem::Insn { addr, .. } => Some(*addr),
                    _ => None,
                };
                items.push(item);
                if let Some(addr) = insn_addr {
                    count += 1;
                    if count % 8 == 0 && !in_span(addr) {
                        items.extend(std::iter::repeat(AsmItem::Nop).take(8));
                    }
                }
            }
            sec.items = items;
        } else {
            sec.items.insert(0, AsmItem::Zero(64));
        }
    }
    out
}

/// Sidecar the round-trip harness uses to relink at the original layout.
pub fn link_recipe(fb: &FactBase) -> String {
    let sections: Vec<serde_json::Value> = fb
        .sections
        .iter()
        .map(|s| {
            serde_json::json!({
                "name": s.name,
                "addr": s.start,
                "size": s.length,
                "executable": s.executable,
                "writable": s.writable,
            })
        })
        .collect();
    let recipe = serde_json::json!({
        "entry": "_start",
        "entry_address": fb.entry_points.iter().next().copied().unwrap_or(0),
        "sections": sections,
    });
    serde_json::to_string_pretty(&recipe).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyses::{self, AnalysisOptions};
    use crate::symbolization::symbolize;
    use crate::testutil::{block_of, jump_table_fixture, loop_bound_fixture, loop_fixture};

    fn pipeline(fb: &FactBase, starts: &[u64]) -> (CodeLayout, Symbolization) {
        let mut layout = CodeLayout::default();
        for &s in starts {
            layout.blocks.push(block_of(fb, s));
        }
        let analyses = analyses::run(fb, &layout, &AnalysisOptions::default());
        let sym = symbolize(fb, &layout, &analyses, &Default::default());
        (layout, sym)
    }

    fn rendered(fb: &FactBase, starts: &[u64]) -> (AsmProgram, String) {
        let (layout, sym) = pipeline(fb, starts);
        let prog = print_asm(fb, &layout, &sym).unwrap();
        let text = prog.render();
        (prog, text)
    }

    #[test]
    fn jump_table_prints_label_differences() {
        let fb = jump_table_fixture(false);
        let (_, text) = rendered(&fb, &[0x47da7b]);
        assert!(text.contains(".byte .L_47DB3F-.L_47DA93"), "{text}");
        assert!(text.contains(".byte .L_47DB36-.L_47DA93"), "{text}");
        assert!(text.contains(".byte .L_47DB2B-.L_47DA93"), "{text}");
        assert!(text.contains(".byte .L_47DB20-.L_47DA93"), "{text}");
        assert!(text.contains(".L_47DB3F:\n\tret"), "{text}");
        assert!(text.contains("lea RDX,[RIP+.L_4A09F0]"), "{text}");
    }

    #[test]
    fn repaired_loop_bound_prints_offset_expression() {
        let fb = loop_bound_fixture();
        let (_, text) = rendered(&fb, &[0x401000]);
        assert!(text.contains("mov EBP,OFFSET .L_402D40+168"), "{text}");
        assert!(text.contains("mov EBX,OFFSET .L_402D40"), "{text}");
    }

    #[test]
    fn literal_constants_stay_decimal() {
        let fb = loop_fixture();
        let (_, text) = rendered(&fb, &[0x413050, 0x416c2d]);
        assert!(text.contains("add RBX,24"), "{text}");
        assert!(text.contains("mov RBX,-624"), "{text}");
        assert!(text.contains("mov EDX,OFFSET .L_45CB23"), "{text}");
        assert!(text.contains("mov RDI,QWORD PTR [RIP+.L_673E80]"), "{text}");
        assert!(text.contains("call .L_413050"), "{text}");
        assert!(text.contains("jne .L_416C40"), "{text}");
    }

    #[test]
    fn zero_runs_collapse_to_zero_directive() {
        let fb = loop_fixture();
        let (_, text) = rendered(&fb, &[0x413050, 0x416c2d]);
        assert!(
            text.contains(".section .data,\"a\",@progbits\n.L_673E80:\n\t.zero 64"),
            "{text}"
        );
    }

    #[test]
    fn entry_point_exports_start() {
        let fb = loop_fixture();
        let (_, text) = rendered(&fb, &[0x413050, 0x416c2d]);
        assert!(text.contains(".globl _start\n_start:\n"), "{text}");
    }

    #[test]
    fn every_referenced_label_is_defined() {
        for fb in [loop_fixture(), jump_table_fixture(false), loop_bound_fixture()] {
            let starts: Vec<u64> = fb
                .sections
                .iter()
                .filter(|s| s.executable)
                .map(|s| s.start)
                .collect();
            let (prog, _) = rendered(&fb, &starts);
            assert!(prog.referenced_labels.is_subset(&prog.defined_labels));
        }
    }

    #[test]
    fn missing_definition_is_reported() {
        let fb = loop_fixture();
        let (layout, mut sym) = pipeline(&fb, &[0x413050, 0x416c2d]);
        // Point a decision at an address no block or object covers.
        sym.decisions.push(Decision {
            addr: 0x416c58,
            context: Context::Immediate,
            expr: SymbolicExpr::SymPlus { target: 0x12345, offset: 0 },
            points: vec![],
            total: 1,
        });
        match print_asm(&fb, &layout, &sym) {
            Err(EmitError::UnresolvedLabel(a)) => assert_eq!(a, 0x12345),
            other => panic!("expected unresolved label, got {other:?}"),
        }
    }

    #[test]
    fn stretch_inserts_nop_groups_and_data_padding() {
        let fb = loop_fixture();
        let (layout, sym) = pipeline(&fb, &[0x413050, 0x416c2d]);
        let prog = print_asm(&fb, &layout, &sym).unwrap();
        let stretched = stretch(&prog, &sym);
        let nops = |p: &AsmProgram, sec: usize| {
            p.sections[sec]
                .items
                .iter()
                .filter(|i| matches!(i, AsmItem::Nop))
                .count()
        };
        // .text holds 9 instructions: one NOP group after the 8th.
        assert_eq!(nops(&stretched, 1), 8);
        assert_eq!(nops(&prog, 1), 0);
        assert_eq!(stretched.sections[2].items[0], AsmItem::Zero(64));
        assert_eq!(stretched.sections[3].items[0], AsmItem::Zero(64));
    }

    #[test]
    fn stretch_keeps_table_spans_rigid() {
        let fb = jump_table_fixture(false);
        let (layout, sym) = pipeline(&fb, &[0x47da7b]);
        let prog = print_asm(&fb, &layout, &sym).unwrap();
        let stretched = stretch(&prog, &sym);
        // Table targets span [0x47da93, 0x47db40): the nop sled there must
        // not grow or the single-byte offsets stop fitting.
        let mut after_sum = false;
        for item in &stretched.sections[0].items {
            match item {
                AsmItem::Insn { addr, .. } if *addr > 0x47da90 => after_sum = true,
                AsmItem::Nop => assert!(!after_sum, "nop inserted inside table span"),
                _ => {}
            }
        }
    }

    #[test]
    fn stretch_preserves_symbolic_expressions() {
        for fb in [loop_fixture(), jump_table_fixture(true), loop_bound_fixture()] {
            let starts: Vec<u64> = fb
                .sections
                .iter()
                .filter(|s| s.executable)
                .map(|s| s.start)
                .collect();
            let (layout, sym) = pipeline(&fb, &starts);
            let prog = print_asm(&fb, &layout, &sym).unwrap();
            let stretched = stretch(&prog, &sym);
            assert_eq!(prog.expr_multiset(), stretched.expr_multiset());
        }
    }

    #[test]
    fn link_recipe_lists_sections_and_entry() {
        let fb = loop_fixture();
        let recipe: serde_json::Value = serde_json::from_str(&link_recipe(&fb)).unwrap();
        assert_eq!(recipe["entry"], "_start");
        assert_eq!(recipe["entry_address"], 0x416c2d);
        assert_eq!(recipe["sections"][1]["name"], ".text");
        assert_eq!(recipe["sections"][1]["executable"], true);
    }
}
