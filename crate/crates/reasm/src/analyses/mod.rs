//! Auxiliary analyses over the final code layout: register def-use chains,
//! the relational register value analysis, and data access patterns with
//! multiplier-based propagation.
//!
//! These run natively (plain worklists and fixpoints) on immutable inputs;
//! everything is deterministic and order-independent.

use crate::datalog::Value;
use crate::facts::registers::{canonical, CALLER_SAVED, NONE, UNKNOWN};
use crate::facts::{FactBase, InstructionFact, OperandPayload};
use crate::frontend::decoder;
use crate::ibi::CodeLayout;
use std::collections::{BTreeMap, BTreeSet, HashMap};

fn a(x: u64) -> Value {
    Value::Addr(x)
}

fn t(s: &str) -> Value {
    Value::Text(s.to_string())
}

#[derive(Clone, Copy, Debug)]
pub struct AnalysisOptions {
    /// Upper bound on register-value propagation steps.
    pub step_limit: i64,
    /// Kill every register at call sites instead of only caller-saved ones.
    pub kill_all_at_calls: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            step_limit: 5,
            kill_all_at_calls: false,
        }
    }
}

/// Register `reg` defined at `adef` is used at `aused` in operand `index`
/// (1-based position in the stored operand list, 0 for implicit uses).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DefUsed {
    pub adef: u64,
    pub reg: &'static str,
    pub aused: u64,
    pub index: i64,
}

/// The value of `reg` at `a` equals the value of `reg2` at `a2` times `mult`
/// plus `disp`. `reg2` may be `NONE` (pure constant) or `Unknown` (loop
/// counter: base `disp`, stride `mult`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RegVal {
    pub a: u64,
    pub reg: &'static str,
    pub a2: u64,
    pub reg2: &'static str,
    pub mult: i64,
    pub disp: i64,
    pub steps: i64,
}

/// One relational edge per supported instruction and incoming def-use pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegValEdge {
    pub a: u64,
    pub reg: &'static str,
    pub kind: EdgeKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EdgeKind {
    /// Constant load: value is `disp`.
    Leaf { disp: i64 },
    /// Value is `mult` times `reg2` (defined at `aprev`) plus `disp`.
    Unary {
        aprev: u64,
        reg2: &'static str,
        mult: i64,
        disp: i64,
    },
    /// Two-register operation: coefficient-weighted sum of both sides plus
    /// `disp`; resolvable when the sides meet in a diamond or one is constant.
    Pair {
        sides: [(u64, &'static str, i64); 2],
        disp: i64,
    },
    /// Unsupported producer: the register only equals itself.
    Taut,
}

impl RegValEdge {
    /// Edge as a (a,reg,a2,reg2,mult,disp) tuple where that shape exists.
    pub fn as_tuple(&self) -> Option<(u64, &'static str, u64, &'static str, i64, i64)> {
        match &self.kind {
            EdgeKind::Leaf { disp } => Some((self.a, self.reg, self.a, NONE, 0, *disp)),
            EdgeKind::Unary {
                aprev,
                reg2,
                mult,
                disp,
            } => Some((self.a, self.reg, *aprev, reg2, *mult, *disp)),
            EdgeKind::Taut => Some((self.a, self.reg, self.a, self.reg, 1, 0)),
            EdgeKind::Pair { .. } => None,
        }
    }
}

/// Address `addr` is accessed from the instruction at `from`, reading or
/// writing `size` bytes with stride `mult`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DataAccessPattern {
    pub addr: u64,
    pub size: i64,
    pub mult: i64,
    pub from: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnalysisStats {
    /// Derivations dropped because they would exceed the step limit.
    pub step_limit_hits: u64,
    /// Derivations dropped due to 64-bit overflow in mult/disp arithmetic.
    pub overflow_drops: u64,
}

#[derive(Clone, Debug, Default)]
pub struct Analyses {
    pub def_used: BTreeSet<DefUsed>,
    pub def_used_for_address: BTreeSet<(u64, &'static str)>,
    pub edges: Vec<RegValEdge>,
    pub reg_vals: BTreeSet<RegVal>,
    pub daps: BTreeSet<DataAccessPattern>,
    pub propagated: BTreeSet<DataAccessPattern>,
    pub stats: AnalysisStats,
}

pub fn run(fb: &FactBase, layout: &CodeLayout, opts: &AnalysisOptions) -> Analyses {
    let def_used = compute_def_used(fb, layout, opts);
    let dua = compute_def_used_for_address(fb, &def_used);
    let edges = compute_reg_val_edges(fb, layout, &def_used, &dua);
    let mut stats = AnalysisStats::default();
    let reg_vals = propagate_reg_vals(&edges, opts, &mut stats);
    let daps = compute_daps(fb, layout, &def_used, &reg_vals);
    let propagated = propagate_daps(&daps, fb);
    Analyses {
        def_used,
        def_used_for_address: dua,
        edges,
        reg_vals,
        daps,
        propagated,
        stats,
    }
}

/// Register reads and writes of one instruction. Uses carry the 1-based
/// stored-operand index (0 for implicit operands); kills remove reaching
/// definitions without introducing a new one.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Effects {
    pub uses: Vec<(&'static str, i64)>,
    pub defs: Vec<&'static str>,
    pub kills: Vec<&'static str>,
}

fn direct_reg(op: &OperandPayload) -> Option<&'static str> {
    match op {
        OperandPayload::RegDirect { reg } => canonical(reg).filter(|r| *r != NONE),
        _ => None,
    }
}

fn address_regs(op: &OperandPayload) -> Vec<&'static str> {
    let mut regs = Vec::new();
    if let OperandPayload::Indirect { base, index, .. } = op {
        for name in [base, index] {
            if let Some(r) = canonical(name) {
                if r != NONE && r != crate::facts::registers::RIP {
                    regs.push(r);
                }
            }
        }
    }
    regs
}

/// Instruction semantics table for the decoder's opcode subset.
pub fn effects(ins: &InstructionFact, fb: &FactBase) -> Effects {
    let ops: Vec<&OperandPayload> = ins
        .operand_ids()
        .filter_map(|id| fb.operand(id))
        .collect();
    let mut e = Effects::default();

    // Address components are read no matter what role the operand plays.
    for (i, op) in ops.iter().enumerate() {
        for r in address_regs(op) {
            e.uses.push((r, i as i64 + 1));
        }
    }
    let use_slot = |e: &mut Effects, i: usize| {
        if let Some(r) = ops.get(i).and_then(|op| direct_reg(op)) {
            e.uses.push((r, i as i64 + 1));
        }
    };
    let def_slot = |e: &mut Effects, i: usize| {
        if let Some(r) = ops.get(i).and_then(|op| direct_reg(op)) {
            e.defs.push(r);
        }
    };
    let last = ops.len().wrapping_sub(1);

    let op = ins.opcode.as_str();
    match op {
        // Destination is written, not read.
        "mov" | "movabs" | "movzx" | "movsx" | "movsxd" | "lea" => {
            for i in 0..last {
                use_slot(&mut e, i);
            }
            def_slot(&mut e, last);
        }
        _ if op.starts_with("set") => def_slot(&mut e, last),
        // Conditional move may keep the old destination value.
        _ if op.starts_with("cmov") => {
            for i in 0..=last {
                use_slot(&mut e, i);
            }
            def_slot(&mut e, last);
        }
        // Read-modify-write on the destination.
        "add" | "or" | "adc" | "sbb" | "and" | "sub" | "xor" | "rol" | "ror" | "rcl" | "rcr"
        | "shl" | "shr" | "sal" | "sar" => {
            for i in 0..=last {
                use_slot(&mut e, i);
            }
            def_slot(&mut e, last);
        }
        "cmp" | "test" => {
            for i in 0..=last {
                use_slot(&mut e, i);
            }
        }
        "xchg" => {
            for i in 0..=last {
                use_slot(&mut e, i);
                def_slot(&mut e, i);
            }
        }
        "inc" | "dec" | "neg" | "not" => {
            use_slot(&mut e, 0);
            def_slot(&mut e, 0);
        }
        "imul" => match ops.len() {
            3 => {
                use_slot(&mut e, 1);
                def_slot(&mut e, 2);
            }
            2 => {
                use_slot(&mut e, 0);
                use_slot(&mut e, 1);
                def_slot(&mut e, 1);
            }
            _ => {
                use_slot(&mut e, 0);
                e.uses.push(("RAX", 0));
                e.defs.extend(["RAX", "RDX"]);
            }
        },
        "mul" | "div" | "idiv" => {
            use_slot(&mut e, 0);
            e.uses.push(("RAX", 0));
            if op != "mul" {
                e.uses.push(("RDX", 0));
            }
            e.defs.extend(["RAX", "RDX"]);
        }
        // Implicit stack-pointer adjustments are not tracked: the analyses
        // never model stack cells, and the untracked updates would only tie
        // every call/push into one giant RSP chain. Explicit RSP operands
        // (mov RSP,..., add RSP,8) still count.
        "push" | "call" => use_slot(&mut e, 0),
        "pop" => def_slot(&mut e, 0),
        "ret" => {}
        "leave" => {
            e.uses.push(("RBP", 0));
            e.defs.push("RBP");
        }
        "cbw" | "cwde" | "cdqe" => {
            e.uses.push(("RAX", 0));
            e.defs.push("RAX");
        }
        "cwd" | "cdq" | "cqo" => {
            e.uses.push(("RAX", 0));
            e.defs.push("RDX");
        }
        "loop" | "loope" | "loopne" => {
            e.uses.push(("RCX", 0));
            e.defs.push("RCX");
        }
        "jrcxz" => e.uses.push(("RCX", 0)),
        "syscall" => e.kills.extend(["RAX", "RCX", "R11"]),
        _ if op.starts_with("movs") || op.starts_with("cmps") => {
            e.uses.extend([("RSI", 0), ("RDI", 0)]);
            e.defs.extend(["RSI", "RDI"]);
        }
        _ if op.starts_with("stos") || op.starts_with("scas") => {
            e.uses.extend([("RAX", 0), ("RDI", 0)]);
            e.defs.push("RDI");
        }
        _ if op.starts_with("lods") => {
            e.uses.push(("RSI", 0));
            e.defs.extend(["RAX", "RSI"]);
        }
        // Jumps read their register target; everything else (nop, hlt, ...)
        // touches no registers beyond address components.
        _ => {
            for i in 0..ops.len() {
                use_slot(&mut e, i);
            }
        }
    }
    if ins.prefix.starts_with("rep") {
        e.uses.push(("RCX", 0));
        e.defs.push("RCX");
    }
    e
}

/// Intra-procedural CFG edges: fallthrough plus direct (conditional and
/// unconditional) jumps. Calls are not traversed.
fn cfg_edges(fb: &FactBase, code: &BTreeSet<u64>) -> BTreeMap<u64, Vec<u64>> {
    let mut succs: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &addr in code {
        let ins = &fb.instructions[&addr];
        let op = ins.opcode.as_str();
        let mut out = Vec::new();
        if !(decoder::is_ret(op) || decoder::is_uncond_jump(op) || decoder::is_halt(op))
            && code.contains(&ins.end())
        {
            out.push(ins.end());
        }
        if decoder::is_cond_jump(op) || decoder::is_uncond_jump(op) {
            for id in ins.operand_ids() {
                if let Some(OperandPayload::Immediate { value }) = fb.operand(id) {
                    let target = *value as u64;
                    if code.contains(&target) {
                        out.push(target);
                    }
                }
            }
        }
        succs.insert(addr, out);
    }
    succs
}

type Reaching = BTreeMap<&'static str, BTreeSet<u64>>;

/// Reaching-definitions dataflow over the final code, matched to uses.
/// Caller-saved registers die at call sites; 32-bit (and narrower) writes
/// define the full 64-bit register.
pub fn compute_def_used(
    fb: &FactBase,
    layout: &CodeLayout,
    opts: &AnalysisOptions,
) -> BTreeSet<DefUsed> {
    let code: BTreeSet<u64> = layout
        .blocks
        .iter()
        .flat_map(|b| b.members.iter().copied())
        .filter(|a| fb.instructions.contains_key(a))
        .collect();
    let succs = cfg_edges(fb, &code);
    let mut preds: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for (&from, tos) in &succs {
        for &to in tos {
            preds.entry(to).or_default().push(from);
        }
    }

    let fx: BTreeMap<u64, Effects> = code
        .iter()
        .map(|&a| (a, effects(&fb.instructions[&a], fb)))
        .collect();
    let transfer = |addr: u64, mut state: Reaching| -> Reaching {
        let e = &fx[&addr];
        for k in &e.kills {
            state.remove(k);
        }
        if fb.instructions[&addr].opcode == "call" {
            if opts.kill_all_at_calls {
                state.clear();
            } else {
                for r in CALLER_SAVED {
                    state.remove(r);
                }
            }
        }
        for d in &e.defs {
            state.insert(d, BTreeSet::from([addr]));
        }
        state
    };

    let mut ins_state: BTreeMap<u64, Reaching> = BTreeMap::new();
    let mut out_state: BTreeMap<u64, Reaching> = BTreeMap::new();
    let mut work: BTreeSet<u64> = code.clone();
    while let Some(&addr) = work.iter().next() {
        work.remove(&addr);
        let mut state = Reaching::new();
        for p in preds.get(&addr).into_iter().flatten() {
            if let Some(out) = out_state.get(p) {
                for (reg, defs) in out {
                    state.entry(reg).or_default().extend(defs.iter().copied());
                }
            }
        }
        ins_state.insert(addr, state.clone());
        let out = transfer(addr, state);
        if out_state.get(&addr) != Some(&out) {
            out_state.insert(addr, out);
            work.extend(succs[&addr].iter().copied());
        }
    }

    let mut result = BTreeSet::new();
    for &addr in &code {
        let state = &ins_state[&addr];
        for (reg, index) in &fx[&addr].uses {
            for &adef in state.get(reg).into_iter().flatten() {
                result.insert(DefUsed {
                    adef,
                    reg,
                    aused: addr,
                    index: *index,
                });
            }
        }
    }
    result
}

/// Does the use at (aused, index) feed an address computation: a memory
/// operand component, or the target of a register jump or call?
fn is_address_use(fb: &FactBase, du: &DefUsed) -> bool {
    let Some(ins) = fb.instructions.get(&du.aused) else {
        return false;
    };
    if du.index >= 1 {
        let ids: Vec<u64> = ins.operand_ids().collect();
        if let Some(op) = ids
            .get(du.index as usize - 1)
            .and_then(|id| fb.operand(*id))
        {
            if address_regs(op).contains(&du.reg) {
                return true;
            }
            let is_transfer = decoder::is_uncond_jump(&ins.opcode)
                || decoder::is_cond_jump(&ins.opcode)
                || decoder::is_call(&ins.opcode);
            if is_transfer && direct_reg(op) == Some(du.reg) {
                return true;
            }
        }
    }
    false
}

/// Backward transitive closure of def-use chains starting at memory accesses.
pub fn compute_def_used_for_address(
    fb: &FactBase,
    def_used: &BTreeSet<DefUsed>,
) -> BTreeSet<(u64, &'static str)> {
    let mut dua: BTreeSet<(u64, &'static str)> = def_used
        .iter()
        .filter(|du| is_address_use(fb, du))
        .map(|du| (du.adef, du.reg))
        .collect();
    loop {
        let addrs: BTreeSet<u64> = dua.iter().map(|&(a, _)| a).collect();
        let before = dua.len();
        for du in def_used {
            if addrs.contains(&du.aused) {
                dua.insert((du.adef, du.reg));
            }
        }
        if dua.len() == before {
            return dua;
        }
    }
}

fn imm_value(fb: &FactBase, id: u64) -> Option<i64> {
    match fb.operand(id)? {
        OperandPayload::Immediate { value } => Some(*value),
        _ => None,
    }
}

/// One edge per supported instruction form and incoming def-use pair (the
/// incoming definition must itself be used for an address); constant loads
/// and unsupported producers yield leaf and tautological edges.
pub fn compute_reg_val_edges(
    fb: &FactBase,
    layout: &CodeLayout,
    def_used: &BTreeSet<DefUsed>,
    dua: &BTreeSet<(u64, &'static str)>,
) -> Vec<RegValEdge> {
    // Incoming address-forming defs per (use-site, register).
    let mut incoming: HashMap<(u64, &'static str), BTreeSet<u64>> = HashMap::new();
    for du in def_used {
        if dua.contains(&(du.adef, du.reg)) {
            incoming
                .entry((du.aused, du.reg))
                .or_default()
                .insert(du.adef);
        }
    }
    let defs_of = |a: u64, reg: &'static str| -> Vec<u64> {
        incoming
            .get(&(a, reg))
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default()
    };

    let mut edges = Vec::new();
    for block in &layout.blocks {
        for &a in &block.members {
            let Some(ins) = fb.instructions.get(&a) else {
                continue;
            };
            let ids: Vec<u64> = ins.operand_ids().collect();
            let fx = effects(ins, fb);
            for &reg in &fx.defs {
                let mut supported = Vec::new();
                match (ins.opcode.as_str(), ids.as_slice()) {
                    ("mov" | "movabs", [src, dst])
                        if imm_value(fb, *src).is_some()
                            && direct_reg(fb.operand(*dst).unwrap()) == Some(reg) =>
                    {
                        supported.push(EdgeKind::Leaf {
                            disp: imm_value(fb, *src).unwrap(),
                        });
                    }
                    ("mov", [src, dst])
                        if direct_reg(fb.operand(*dst).unwrap()) == Some(reg) =>
                    {
                        if let Some(rsrc) = direct_reg(fb.operand(*src).unwrap()) {
                            for aprev in defs_of(a, rsrc) {
                                supported.push(EdgeKind::Unary {
                                    aprev,
                                    reg2: rsrc,
                                    mult: 1,
                                    disp: 0,
                                });
                            }
                        }
                    }
                    ("add" | "sub", [src, dst])
                        if direct_reg(fb.operand(*dst).unwrap()) == Some(reg) =>
                    {
                        let sign = if ins.opcode == "sub" { -1 } else { 1 };
                        if let Some(imm) = imm_value(fb, *src) {
                            for aprev in defs_of(a, reg) {
                                supported.push(EdgeKind::Unary {
                                    aprev,
                                    reg2: reg,
                                    mult: 1,
                                    disp: sign * imm,
                                });
                            }
                        } else if let Some(rsrc) = direct_reg(fb.operand(*src).unwrap()) {
                            if rsrc == reg && ins.opcode == "add" {
                                // Self-add doubles the register.
                                for aprev in defs_of(a, reg) {
                                    supported.push(EdgeKind::Unary {
                                        aprev,
                                        reg2: reg,
                                        mult: 2,
                                        disp: 0,
                                    });
                                }
                            } else if rsrc == reg {
                                // sub r,r zeroes it.
                                supported.push(EdgeKind::Leaf { disp: 0 });
                            } else {
                                for ad in defs_of(a, reg) {
                                    for asrc in defs_of(a, rsrc) {
                                        supported.push(EdgeKind::Pair {
                                            sides: [(ad, reg, 1), (asrc, rsrc, sign)],
                                            disp: 0,
                                        });
                                    }
                                }
                            }
                        }
                    }
                    ("xor", [src, dst])
                        if direct_reg(fb.operand(*dst).unwrap()) == Some(reg)
                            && direct_reg(fb.operand(*src).unwrap()) == Some(reg) =>
                    {
                        supported.push(EdgeKind::Leaf { disp: 0 });
                    }
                    ("shl" | "sal", [src, dst])
                        if direct_reg(fb.operand(*dst).unwrap()) == Some(reg)
                            && matches!(imm_value(fb, *src), Some(0..=62)) =>
                    {
                        let k = imm_value(fb, *src).unwrap();
                        for aprev in defs_of(a, reg) {
                            supported.push(EdgeKind::Unary {
                                aprev,
                                reg2: reg,
                                mult: 1 << k,
                                disp: 0,
                            });
                        }
                    }
                    ("lea", [src, _dst]) => {
                        if let Some(OperandPayload::Indirect {
                            base,
                            index,
                            mult,
                            disp,
                            rip,
                            ..
                        }) = fb.operand(*src)
                        {
                            let b = canonical(base).filter(|r| *r != NONE && !rip);
                            let x = canonical(index).filter(|r| *r != NONE);
                            match (b, x) {
                                (None, None) => {
                                    supported.push(EdgeKind::Leaf { disp: *disp })
                                }
                                (Some(rb), None) => {
                                    for aprev in defs_of(a, rb) {
                                        supported.push(EdgeKind::Unary {
                                            aprev,
                                            reg2: rb,
                                            mult: 1,
                                            disp: *disp,
                                        });
                                    }
                                }
                                (None, Some(rx)) => {
                                    for aprev in defs_of(a, rx) {
                                        supported.push(EdgeKind::Unary {
                                            aprev,
                                            reg2: rx,
                                            mult: *mult,
                                            disp: *disp,
                                        });
                                    }
                                }
                                (Some(rb), Some(rx)) => {
                                    for ab in defs_of(a, rb) {
                                        for ax in defs_of(a, rx) {
                                            supported.push(EdgeKind::Pair {
                                                sides: [(ab, rb, 1), (ax, rx, *mult)],
                                                disp: *disp,
                                            });
                                        }
                                    }
                                }
                            }
                        }
                    }
                    _ => {}
                }
                if supported.is_empty() {
                    supported.push(EdgeKind::Taut);
                }
                for kind in supported {
                    edges.push(RegValEdge { a, reg, kind });
                }
            }
        }
    }
    edges
}

/// Fixpoint propagation over the edge graph: linear chaining, the simple-loop
/// rewrite, and diamond merging of two-register operations, all bounded by
/// the step limit.
pub fn propagate_reg_vals(
    edges: &[RegValEdge],
    opts: &AnalysisOptions,
    stats: &mut AnalysisStats,
) -> BTreeSet<RegVal> {
    // Keyed without the step counter so a shorter re-derivation of a known
    // value does not loop.
    let mut seen: BTreeMap<(u64, &'static str, u64, &'static str, i64, i64), i64> =
        BTreeMap::new();
    let mut queue: Vec<RegVal> = Vec::new();
    let push = |v: RegVal,
                    seen: &mut BTreeMap<(u64, &'static str, u64, &'static str, i64, i64), i64>,
                    queue: &mut Vec<RegVal>| {
        let key = (v.a, v.reg, v.a2, v.reg2, v.mult, v.disp);
        match seen.get(&key) {
            Some(&s) if s <= v.steps => {}
            _ => {
                seen.insert(key, v.steps);
                queue.push(v);
            }
        }
    };

    for e in edges {
        match &e.kind {
            EdgeKind::Leaf { disp } => push(
                RegVal {
                    a: e.a,
                    reg: e.reg,
                    a2: e.a,
                    reg2: NONE,
                    mult: 0,
                    disp: *disp,
                    steps: 0,
                },
                &mut seen,
                &mut queue,
            ),
            EdgeKind::Taut => push(
                RegVal {
                    a: e.a,
                    reg: e.reg,
                    a2: e.a,
                    reg2: e.reg,
                    mult: 1,
                    disp: 0,
                    steps: 0,
                },
                &mut seen,
                &mut queue,
            ),
            _ => {}
        }
    }

    // All values per (address, register), grown as the queue drains.
    let mut by_node: HashMap<(u64, &'static str), Vec<RegVal>> = HashMap::new();
    let mut done = 0usize;
    while done < queue.len() {
        let v = queue[done].clone();
        done += 1;
        by_node
            .entry((v.a, v.reg))
            .or_default()
            .push(v.clone());

        for e in edges {
            let mut derived: Vec<(i64, Option<RegVal>)> = Vec::new();
            match &e.kind {
                EdgeKind::Unary {
                    aprev,
                    reg2,
                    mult,
                    disp,
                } => {
                    if (v.a, v.reg) == (*aprev, *reg2) {
                        if e.a != *aprev {
                            let val = mult
                                .checked_mul(v.mult)
                                .zip(v.disp.checked_mul(*mult).and_then(|x| x.checked_add(*disp)))
                                .map(|(m, d)| RegVal {
                                    a: e.a,
                                    reg: e.reg,
                                    a2: v.a2,
                                    reg2: v.reg2,
                                    mult: m,
                                    disp: d,
                                    steps: v.steps + 1,
                                });
                            derived.push((v.steps + 1, val));
                        } else if e.a == *aprev
                            && e.reg == *reg2
                            && *mult == 1
                            && *disp != 0
                            && v.reg2 == NONE
                        {
                            // Loop: constant base plus repeated increment.
                            derived.push((
                                v.steps + 1,
                                Some(RegVal {
                                    a: e.a,
                                    reg: e.reg,
                                    a2: v.a2,
                                    reg2: UNKNOWN,
                                    mult: *disp,
                                    disp: v.disp,
                                    steps: v.steps + 1,
                                }),
                            ));
                        }
                    }
                }
                EdgeKind::Pair { sides, disp } => {
                    for (this, other) in [(0, 1), (1, 0)] {
                        let (ta, tr, _) = sides[this];
                        if (v.a, v.reg) != (ta, tr) {
                            continue;
                        }
                        let (oa, or, _) = sides[other];
                        for w in by_node.get(&(oa, or)).cloned().unwrap_or_default() {
                            let (v1, v2) = if this == 0 { (&v, &w) } else { (&w, &v) };
                            let steps = v1.steps.max(v2.steps) + 1;
                            match combine_pair(e, sides, *disp, v1, v2, steps) {
                                PairResult::Val(nv) => derived.push((steps, Some(nv))),
                                PairResult::Overflow => derived.push((steps, None)),
                                PairResult::Unresolvable => {}
                            }
                        }
                    }
                }
                _ => {}
            }
            for (steps, val) in derived {
                if steps >= opts.step_limit {
                    stats.step_limit_hits += 1;
                    continue;
                }
                match val {
                    Some(nv) => push(nv, &mut seen, &mut queue),
                    None => stats.overflow_drops += 1,
                }
            }
        }
    }
    queue.into_iter().collect()
}

enum PairResult {
    Val(RegVal),
    Overflow,
    Unresolvable,
}

/// Merge the two sides of a two-register operation: either both reduce to the
/// same (address, register) or one side is a constant.
fn combine_pair(
    e: &RegValEdge,
    sides: &[(u64, &'static str, i64); 2],
    disp: i64,
    v1: &RegVal,
    v2: &RegVal,
    steps: i64,
) -> PairResult {
    let (a2, reg2) = if v1.reg2 == NONE {
        (v2.a2, v2.reg2)
    } else if v2.reg2 == NONE {
        (v1.a2, v1.reg2)
    } else if (v1.a2, v1.reg2) == (v2.a2, v2.reg2) && v1.reg2 != UNKNOWN {
        (v1.a2, v1.reg2)
    } else {
        return PairResult::Unresolvable;
    };
    let lin = |c: i64, v: &RegVal| -> Option<(i64, i64)> {
        Some((c.checked_mul(v.mult)?, c.checked_mul(v.disp)?))
    };
    let combined = || -> Option<RegVal> {
        let (m1, d1) = lin(sides[0].2, v1)?;
        let (m2, d2) = lin(sides[1].2, v2)?;
        Some(RegVal {
            a: e.a,
            reg: e.reg,
            a2,
            reg2,
            mult: m1.checked_add(m2)?,
            disp: d1.checked_add(d2)?.checked_add(disp)?,
            steps,
        })
    };
    match combined() {
        Some(v) => PairResult::Val(v),
        None => PairResult::Overflow,
    }
}

/// Substitute register values into every memory-access operand of the final
/// code; per (address, from) the highest multiplier wins.
pub fn compute_daps(
    fb: &FactBase,
    layout: &CodeLayout,
    def_used: &BTreeSet<DefUsed>,
    reg_vals: &BTreeSet<RegVal>,
) -> BTreeSet<DataAccessPattern> {
    let mut vals: HashMap<(u64, &'static str), Vec<&RegVal>> = HashMap::new();
    for v in reg_vals {
        // Tautological self-values carry no information for substitution.
        if v.a2 == v.a && v.reg2 == v.reg && v.mult == 1 && v.disp == 0 {
            continue;
        }
        vals.entry((v.a, v.reg)).or_default().push(v);
    }
    let mut defs: HashMap<(u64, &'static str), BTreeSet<u64>> = HashMap::new();
    for du in def_used {
        defs.entry((du.aused, du.reg)).or_default().insert(du.adef);
    }

    // Resolutions of one register component: (stride, displacement) pairs
    // assuming the relational leaf register is zero.
    let resolve = |from: u64, reg: &'static str, coeff: i64| -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for adef in defs.get(&(from, reg)).into_iter().flatten() {
            for v in vals.get(&(*adef, reg)).into_iter().flatten() {
                let mult = if v.reg2 == NONE { 0 } else { coeff * v.mult };
                out.push((mult, coeff * v.disp));
            }
        }
        out
    };

    let mut best: BTreeMap<(u64, u64), DataAccessPattern> = BTreeMap::new();
    for block in &layout.blocks {
        for &from in &block.members {
            let Some(ins) = fb.instructions.get(&from) else {
                continue;
            };
            if ins.opcode == "lea" {
                continue; // address computation, not an access
            }
            for id in ins.operand_ids() {
                let Some(OperandPayload::Indirect {
                    base,
                    index,
                    mult,
                    disp,
                    access_size,
                    rip,
                    ..
                }) = fb.operand(id)
                else {
                    continue;
                };
                let b = canonical(base).filter(|r| *r != NONE && !rip);
                let x = canonical(index).filter(|r| *r != NONE);
                let mut candidates: Vec<(i64, i64)> = vec![(0, 0)];
                let mut resolvable = true;
                for (reg, coeff, is_index) in [(b, 1, false), (x, *mult, true)] {
                    let Some(reg) = reg else { continue };
                    let mut parts = resolve(from, reg, coeff);
                    if parts.is_empty() && is_index {
                        // An opaque index register still fixes the stride:
                        // the access walks the structure in steps of the
                        // syntactic scale (assume index 0 for the base).
                        parts.push((coeff, 0));
                    }
                    if parts.is_empty() {
                        resolvable = false;
                        break;
                    }
                    let mut next = Vec::new();
                    for &(m0, d0) in &candidates {
                        for &(m, d) in &parts {
                            // At most one strided component per access.
                            if m0 != 0 && m != 0 {
                                continue;
                            }
                            next.push((m0 + m, d0 + d));
                        }
                    }
                    candidates = next;
                }
                if !resolvable {
                    continue;
                }
                for (m, d) in candidates {
                    let addr = (disp.wrapping_add(d)) as u64;
                    let dap = DataAccessPattern {
                        addr,
                        size: *access_size as i64,
                        mult: m,
                        from,
                    };
                    best.entry((addr, from))
                        .and_modify(|cur| {
                            if dap.mult > cur.mult {
                                *cur = dap.clone();
                            }
                        })
                        .or_insert(dap);
                }
            }
        }
    }
    best.into_values().collect()
}

/// Replicate each strided pattern along its multiplier: replicas stay inside
/// the pattern's section and stop strictly before the next distinct pattern
/// address from any source.
pub fn propagate_daps(
    daps: &BTreeSet<DataAccessPattern>,
    fb: &FactBase,
) -> BTreeSet<DataAccessPattern> {
    let addrs: BTreeSet<u64> = daps.iter().map(|d| d.addr).collect();
    let mut out: BTreeSet<DataAccessPattern> = daps.clone();
    for d in daps {
        if d.mult <= 0 {
            continue;
        }
        let Some(sec) = fb.section_containing(d.addr) else {
            continue;
        };
        let stop = addrs
            .range(d.addr + 1..)
            .next()
            .copied()
            .unwrap_or(u64::MAX)
            .min(sec.end().saturating_sub(d.size as u64 - 1));
        let mut at = d.addr;
        loop {
            at = at.wrapping_add(d.mult as u64);
            if at >= stop {
                break;
            }
            out.insert(DataAccessPattern { addr: at, ..d.clone() });
        }
    }
    out
}

impl Analyses {
    /// Results as dumpable relations, format-compatible with fact files.
    pub fn to_relations(&self) -> Vec<(&'static str, BTreeSet<Vec<Value>>)> {
        let def_used = self
            .def_used
            .iter()
            .map(|d| vec![a(d.adef), t(d.reg), a(d.aused), Value::Int(d.index)])
            .collect();
        let reg_val = self
            .reg_vals
            .iter()
            .map(|v| {
                vec![
                    a(v.a),
                    t(v.reg),
                    a(v.a2),
                    t(v.reg2),
                    Value::Int(v.mult),
                    Value::Int(v.disp),
                ]
            })
            .collect();
        let dap_rows = |set: &BTreeSet<DataAccessPattern>| {
            set.iter()
                .map(|d| {
                    vec![
                        a(d.addr),
                        Value::Int(d.size),
                        Value::Int(d.mult),
                        a(d.from),
                    ]
                })
                .collect()
        };
        vec![
            ("def_used", def_used),
            ("reg_val", reg_val),
            ("data_access_pattern", dap_rows(&self.daps)),
            ("propagated_data_access", dap_rows(&self.propagated)),
        ]
    }
}
