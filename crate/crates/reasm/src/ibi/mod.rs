//! Instruction boundary identification: backward invalid propagation,
//! aggressive forward traversal into block candidates, and point-scored
//! conflict resolution yielding a CodeLayout.
//!
//! All inference here runs on the datalog engine; only conflict resolution
//! (a greedy argmax over aggregate scores) is native.

use crate::datalog::build::*;
use crate::datalog::{
    evaluate, AggKind, ColumnKind, Cmp, Database, EngineError, Literal, Program, Value,
};
use crate::facts::{FactBase, OperandPayload};
use crate::frontend::decoder;
use std::collections::{BTreeMap, BTreeSet};

/// Heuristic weights for block conflict scoring. Weights are data: they ship
/// as defaults and can be overridden from the config file.
#[derive(Clone, Copy, Debug)]
pub struct IbiWeights {
    pub incoming_edge: i64,
    pub address_appears: i64,
    pub aligned_bonus: i64,
    pub outgoing_edge: i64,
    pub jump_table_overlap: i64,
    pub keep_threshold: i64,
}

impl Default for IbiWeights {
    fn default() -> Self {
        IbiWeights {
            incoming_edge: 3,
            address_appears: 2,
            aligned_bonus: 1,
            outgoing_edge: 1,
            jump_table_overlap: -2,
            keep_threshold: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub start: u64,
    pub end: u64,
    pub members: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscardedBlock {
    pub block: u64,
    pub reason: String,
    pub winner: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CodeLayout {
    /// Kept blocks, pairwise non-overlapping, sorted by start.
    pub blocks: Vec<Block>,
    /// Executable bytes not covered by any block.
    pub data_regions: Vec<(u64, u64)>,
    pub discarded: Vec<DiscardedBlock>,
    pub warnings: Vec<String>,
}

const A: ColumnKind = ColumnKind::Address;
const I: ColumnKind = ColumnKind::Int;
const T: ColumnKind = ColumnKind::Text;

fn wc8_instruction(addr_var: &str) -> Literal {
    pos(
        "instruction",
        vec![v(addr_var), wc(), wc(), wc(), wc(), wc(), wc(), wc()],
    )
}

/// The full IBI inference program. Weights are baked into the scoring rules.
pub fn build_program(w: &IbiWeights) -> Program {
    let mut p = Program::new();
    p.input("instruction", &[A, I, T, T, I, I, I, I]);
    p.input("decode_invalid", &[A]);
    p.input("return_operation", &[T]);
    p.input("unconditional_jump_operation", &[T]);
    p.input("halt_operation", &[T]);
    p.input("call_operation", &[T]);
    p.input("interrupt_operation", &[T]);
    p.input("jump_operation", &[T]);
    p.input("nop_operation", &[T]);
    p.input("instruction_has_loop_prefix", &[A]);
    p.input("direct_jump", &[A, A]);
    p.input("direct_call", &[A, A]);
    p.input("pc_relative_jump", &[A, A]);
    p.input("pc_relative_call", &[A, A]);
    p.input("may_have_symbolic_immediate", &[A, A]);
    p.input("initial_target", &[A]);
    p.input("address_in_data", &[A, A]);
    p.input("jump_table_span", &[A, A]);

    p.relation("may_fallthrough", &[A, A]);
    p.relation("must_fallthrough", &[A, A]);
    p.relation("transfer_edge", &[A, A]);
    p.relation("invalid", &[A]);
    p.relation("possible_effective_address", &[A]);
    p.relation("block_limit", &[A]);
    p.relation("possible_target", &[A]);
    p.relation("code_in_block_candidate", &[A, A]);
    p.relation("after_block_end", &[A, A]);
    p.relation("member_end", &[A, A]);
    p.relation("block_end", &[A, A]);
    p.relation("block_bucket", &[A, I]);
    p.relation("overlap", &[A, A]);
    p.relation("block_points", &[A, A, I, T]);
    p.relation("block_total", &[A, I]);

    p.rule(
        "may_fallthrough",
        atom("may_fallthrough", vec![v("From"), v("To")]),
        vec![
            pos(
                "instruction",
                vec![v("From"), v("Size"), wc(), v("Op"), wc(), wc(), wc(), wc()],
            ),
            let_("To", eadd(evar("From"), evar("Size"))),
            neg("return_operation", vec![v("Op")]),
            neg("unconditional_jump_operation", vec![v("Op")]),
            neg("halt_operation", vec![v("Op")]),
        ],
    );
    p.rule(
        "must_fallthrough",
        atom("must_fallthrough", vec![v("From"), v("To")]),
        vec![
            pos("may_fallthrough", vec![v("From"), v("To")]),
            pos(
                "instruction",
                vec![v("From"), wc(), wc(), v("Op"), wc(), wc(), wc(), wc()],
            ),
            neg("call_operation", vec![v("Op")]),
            neg("interrupt_operation", vec![v("Op")]),
            neg("jump_operation", vec![v("Op")]),
            neg("instruction_has_loop_prefix", vec![v("From")]),
        ],
    );

    for rel in [
        "must_fallthrough",
        "direct_jump",
        "direct_call",
        "pc_relative_jump",
        "pc_relative_call",
    ] {
        p.rule(
            &format!("transfer_edge:{rel}"),
            atom("transfer_edge", vec![v("From"), v("To")]),
            vec![pos(rel, vec![v("From"), v("To")])],
        );
    }
    p.rule(
        "invalid:decode",
        atom("invalid", vec![v("Addr")]),
        vec![pos("decode_invalid", vec![v("Addr")])],
    );
    p.rule(
        "invalid:propagate",
        atom("invalid", vec![v("From")]),
        vec![
            pos("transfer_edge", vec![v("From"), v("To")]),
            pos("invalid", vec![v("To")]),
        ],
    );
    p.rule(
        "invalid:dangling",
        atom("invalid", vec![v("From")]),
        vec![
            pos("transfer_edge", vec![v("From"), v("To")]),
            neg(
                "instruction",
                vec![v("To"), wc(), wc(), wc(), wc(), wc(), wc(), wc()],
            ),
        ],
    );
    p.rule(
        "possible_effective_address",
        atom("possible_effective_address", vec![v("Addr")]),
        vec![wc8_instruction("Addr"), neg("invalid", vec![v("Addr")])],
    );

    // block_limit over-approximates possible_target: computed the same way
    // but from static facts only, so it can be negated during traversal.
    p.rule(
        "block_limit:initial",
        atom("block_limit", vec![v("Addr")]),
        vec![pos("initial_target", vec![v("Addr")])],
    );
    p.rule(
        "block_limit:immediate",
        atom("block_limit", vec![v("Dest")]),
        vec![pos("may_have_symbolic_immediate", vec![wc(), v("Dest")])],
    );
    p.rule(
        "block_limit:pc_jump",
        atom("block_limit", vec![v("Dest")]),
        vec![pos("pc_relative_jump", vec![wc(), v("Dest")])],
    );
    p.rule(
        "block_limit:pc_call",
        atom("block_limit", vec![v("Dest")]),
        vec![pos("pc_relative_call", vec![wc(), v("Dest")])],
    );

    p.rule(
        "block_candidate:start",
        atom("code_in_block_candidate", vec![v("Addr"), v("Addr")]),
        vec![
            pos("possible_target", vec![v("Addr")]),
            pos("possible_effective_address", vec![v("Addr")]),
        ],
    );
    p.rule(
        "block_candidate:extend",
        atom("code_in_block_candidate", vec![v("Addr"), v("Block")]),
        vec![
            pos("code_in_block_candidate", vec![v("Aprev"), v("Block")]),
            pos("must_fallthrough", vec![v("Aprev"), v("Addr")]),
            neg("block_limit", vec![v("Addr")]),
        ],
    );
    p.rule(
        "block_candidate:next_may",
        atom("code_in_block_candidate", vec![v("Addr"), v("Addr")]),
        vec![
            pos("code_in_block_candidate", vec![v("Aprev"), wc()]),
            pos("may_fallthrough", vec![v("Aprev"), v("Addr")]),
            neg("must_fallthrough", vec![v("Aprev"), v("Addr")]),
            pos("possible_effective_address", vec![v("Addr")]),
        ],
    );
    p.rule(
        "block_candidate:next_limit",
        atom("code_in_block_candidate", vec![v("Addr"), v("Addr")]),
        vec![
            pos("code_in_block_candidate", vec![v("Aprev"), wc()]),
            pos("may_fallthrough", vec![v("Aprev"), v("Addr")]),
            pos("block_limit", vec![v("Addr")]),
            pos("possible_effective_address", vec![v("Addr")]),
        ],
    );
    p.rule(
        "possible_target:initial",
        atom("possible_target", vec![v("Addr")]),
        vec![pos("initial_target", vec![v("Addr")])],
    );
    for rel in ["may_have_symbolic_immediate", "pc_relative_jump", "pc_relative_call"] {
        p.rule(
            &format!("possible_target:{rel}"),
            atom("possible_target", vec![v("Dest")]),
            vec![
                pos("code_in_block_candidate", vec![v("Src"), wc()]),
                pos(rel, vec![v("Src"), v("Dest")]),
            ],
        );
    }
    p.rule(
        "possible_target:after_block",
        atom("possible_target", vec![v("Addr")]),
        vec![pos("after_block_end", vec![wc(), v("Addr")])],
    );
    p.rule(
        "after_block_end:start",
        atom("after_block_end", vec![v("End"), v("Addr")]),
        vec![
            pos("code_in_block_candidate", vec![v("End"), wc()]),
            pos(
                "instruction",
                vec![v("End"), v("Size"), wc(), wc(), wc(), wc(), wc(), wc()],
            ),
            let_("Addr", eadd(evar("End"), evar("Size"))),
            neg("may_fallthrough", vec![v("End"), v("Addr")]),
        ],
    );
    p.rule(
        "after_block_end:skip_padding",
        atom("after_block_end", vec![v("End"), v("Next")]),
        vec![
            pos("after_block_end", vec![v("End"), v("Addr")]),
            pos(
                "instruction",
                vec![v("Addr"), v("Size"), wc(), v("Op"), wc(), wc(), wc(), wc()],
            ),
            pos("nop_operation", vec![v("Op")]),
            let_("Next", eadd(evar("Addr"), evar("Size"))),
        ],
    );

    // Spatial layout of candidates: end address per block (max over member
    // ends) and 16-byte buckets making the overlap join near-linear.
    p.rule(
        "member_end",
        atom("member_end", vec![v("Block"), v("End")]),
        vec![
            pos("code_in_block_candidate", vec![v("Addr"), v("Block")]),
            pos(
                "instruction",
                vec![v("Addr"), v("Size"), wc(), wc(), wc(), wc(), wc(), wc()],
            ),
            let_("End", eadd(evar("Addr"), evar("Size"))),
        ],
    );
    p.rule(
        "block_end",
        atom("block_end", vec![v("Block"), v("End")]),
        vec![
            pos("code_in_block_candidate", vec![v("Block"), v("Block")]),
            Literal::Agg {
                kind: AggKind::Max,
                rel: "member_end".to_string(),
                terms: vec![v("Block"), wc()],
                over: 1,
                var: "End".to_string(),
            },
        ],
    );
    p.rule(
        "block_bucket:first",
        atom("block_bucket", vec![v("Block"), v("Bucket")]),
        vec![
            pos("block_end", vec![v("Block"), wc()]),
            let_("Bucket", ediv(evar("Block"), eint(16))),
        ],
    );
    p.rule(
        "block_bucket:step",
        atom("block_bucket", vec![v("Block"), v("Next")]),
        vec![
            pos("block_bucket", vec![v("Block"), v("Bucket")]),
            pos("block_end", vec![v("Block"), v("End")]),
            let_("Next", eadd(evar("Bucket"), eint(1))),
            cmp(Cmp::Lt, emul(evar("Next"), eint(16)), evar("End")),
        ],
    );
    p.rule(
        "overlap",
        atom("overlap", vec![v("A"), v("B")]),
        vec![
            pos("block_bucket", vec![v("A"), v("Bucket")]),
            pos("block_bucket", vec![v("B"), v("Bucket")]),
            cmp(Cmp::Ne, evar("A"), evar("B")),
            pos("block_end", vec![v("A"), v("EndA")]),
            pos("block_end", vec![v("B"), v("EndB")]),
            cmp(Cmp::Lt, evar("A"), evar("EndB")),
            cmp(Cmp::Lt, evar("B"), evar("EndA")),
        ],
    );

    // Scoring heuristics, one block_points row per firing.
    for (rel, why) in [
        ("direct_call", "incoming-call"),
        ("direct_jump", "incoming-jump"),
        ("may_fallthrough", "incoming-fallthrough"),
    ] {
        p.rule(
            &format!("block_points:{why}"),
            atom(
                "block_points",
                vec![v("Block"), v("SrcBlock"), num(w.incoming_edge), txt(why)],
            ),
            vec![
                pos(rel, vec![v("From"), v("Block")]),
                pos("code_in_block_candidate", vec![v("From"), v("SrcBlock")]),
                pos("code_in_block_candidate", vec![v("Block"), v("Block")]),
                neg("overlap", vec![v("SrcBlock"), v("Block")]),
            ],
        );
    }
    p.rule(
        "block_points:address-appears-data",
        atom(
            "block_points",
            vec![v("Block"), addr(0), num(w.address_appears), txt("address-appears")],
        ),
        vec![
            pos("code_in_block_candidate", vec![v("Block"), v("Block")]),
            pos("address_in_data", vec![wc(), v("Block")]),
        ],
    );
    p.rule(
        "block_points:address-appears-code",
        atom(
            "block_points",
            vec![v("Block"), addr(0), num(w.address_appears), txt("address-appears")],
        ),
        vec![
            pos("code_in_block_candidate", vec![v("Block"), v("Block")]),
            pos("may_have_symbolic_immediate", vec![wc(), v("Block")]),
        ],
    );
    p.rule(
        "block_points:address-appears-aligned",
        atom(
            "block_points",
            vec![
                v("Block"),
                addr(0),
                num(w.aligned_bonus),
                txt("address-appears-aligned"),
            ],
        ),
        vec![
            pos("code_in_block_candidate", vec![v("Block"), v("Block")]),
            pos("address_in_data", vec![v("At"), v("Block")]),
            let_(
                "Rem",
                esub(evar("At"), emul(ediv(evar("At"), eint(8)), eint(8))),
            ),
            cmp(Cmp::Eq, evar("Rem"), eint(0)),
        ],
    );
    for (rel, why) in [("direct_call", "outgoing-call"), ("direct_jump", "outgoing-jump")] {
        p.rule(
            &format!("block_points:{why}"),
            atom(
                "block_points",
                vec![v("Block"), v("Target"), num(w.outgoing_edge), txt(why)],
            ),
            vec![
                pos("code_in_block_candidate", vec![v("Src"), v("Block")]),
                pos(rel, vec![v("Src"), v("Target")]),
                pos("code_in_block_candidate", vec![v("Target"), v("Target")]),
                cmp(Cmp::Ne, evar("Target"), evar("Block")),
                neg("overlap", vec![v("Block"), v("Target")]),
            ],
        );
    }
    p.rule(
        "block_points:jump-table-overlap",
        atom(
            "block_points",
            vec![
                v("Block"),
                addr(0),
                num(w.jump_table_overlap),
                txt("jump-table-overlap"),
            ],
        ),
        vec![
            pos("code_in_block_candidate", vec![v("Block"), v("Block")]),
            pos("block_end", vec![v("Block"), v("End")]),
            pos("jump_table_span", vec![v("Start"), v("TableEnd")]),
            cmp(Cmp::Lt, evar("Start"), evar("End")),
            cmp(Cmp::Lt, evar("Block"), evar("TableEnd")),
        ],
    );
    p.rule(
        "block_total",
        atom("block_total", vec![v("Block"), v("Total")]),
        vec![
            pos("code_in_block_candidate", vec![v("Block"), v("Block")]),
            Literal::Agg {
                kind: AggKind::Sum,
                rel: "block_points".to_string(),
                terms: vec![v("Block"), wc(), wc(), wc()],
                over: 2,
                var: "Total".to_string(),
            },
        ],
    );
    p
}

fn a(x: u64) -> Value {
    Value::Addr(x)
}

fn t(s: &str) -> Value {
    Value::Text(s.to_string())
}

/// Addresses supplied externally: landing pads, fixture hints, preliminary
/// jump-table targets.
pub type ExtraTargets = BTreeSet<u64>;

/// Translate a FactBase (plus external hints) into the input relations of the
/// IBI program.
pub fn build_facts(
    fb: &FactBase,
    extra: &ExtraTargets,
    jump_tables: &[(u64, u64)],
) -> Database {
    let mut db = Database::new();

    let mut opcodes = BTreeSet::new();
    for ins in fb.instructions.values() {
        db.insert(
            "instruction",
            vec![
                a(ins.addr),
                Value::Int(ins.size as i64),
                t(&ins.prefix),
                t(&ins.opcode),
                Value::Int(ins.ops[0] as i64),
                Value::Int(ins.ops[1] as i64),
                Value::Int(ins.ops[2] as i64),
                Value::Int(ins.ops[3] as i64),
            ],
        );
        opcodes.insert(ins.opcode.clone());
        if ins.prefix.starts_with("rep") {
            db.insert("instruction_has_loop_prefix", vec![a(ins.addr)]);
        }
    }
    for op in &opcodes {
        if decoder::is_ret(op) {
            db.insert("return_operation", vec![t(op)]);
        }
        if decoder::is_uncond_jump(op) {
            db.insert("unconditional_jump_operation", vec![t(op)]);
        }
        if decoder::is_halt(op) {
            db.insert("halt_operation", vec![t(op)]);
        }
        if decoder::is_call(op) {
            db.insert("call_operation", vec![t(op)]);
        }
        if decoder::is_interrupt(op) {
            db.insert("interrupt_operation", vec![t(op)]);
        }
        if decoder::is_cond_jump(op) || decoder::is_uncond_jump(op) {
            db.insert("jump_operation", vec![t(op)]);
        }
        if decoder::is_nop(op) {
            db.insert("nop_operation", vec![t(op)]);
        }
    }

    for addr in &fb.invalid {
        db.insert("decode_invalid", vec![a(*addr)]);
    }

    for ins in fb.instructions.values() {
        let is_jump = decoder::is_cond_jump(&ins.opcode) || decoder::is_uncond_jump(&ins.opcode);
        let is_call = decoder::is_call(&ins.opcode);
        for id in ins.operand_ids() {
            match fb.operand(id) {
                Some(OperandPayload::Immediate { value }) => {
                    if is_jump {
                        db.insert("direct_jump", vec![a(ins.addr), a(*value as u64)]);
                    }
                    if is_call {
                        db.insert("direct_call", vec![a(ins.addr), a(*value as u64)]);
                    }
                    if *value >= 0 && fb.in_any_section(*value as u64) {
                        db.insert(
                            "may_have_symbolic_immediate",
                            vec![a(ins.addr), a(*value as u64)],
                        );
                    }
                }
                Some(OperandPayload::Indirect { disp, rip: true, .. }) if is_jump || is_call => {
                    // The pointer slot is known statically; resolve its content
                    // when the bytes are mapped and initialized.
                    if let Some(target) = fb.read_le(*disp as u64, 8) {
                        let rel = if is_jump {
                            "pc_relative_jump"
                        } else {
                            "pc_relative_call"
                        };
                        db.insert(rel, vec![a(ins.addr), a(target)]);
                    }
                }
                _ => {}
            }
        }
    }

    let mut initial: BTreeSet<u64> = fb.entry_points.iter().copied().collect();
    initial.extend(fb.symbols.iter().filter(|s| s.kind == "FUNC").map(|s| s.addr));
    initial.extend(extra.iter().copied());
    initial.extend(fb.executable_sections().map(|s| s.start));
    initial.extend(fb.address_in_data.values().copied());
    for addr in initial {
        db.insert("initial_target", vec![a(addr)]);
    }

    for (&at, &val) in &fb.address_in_data {
        db.insert("address_in_data", vec![a(at), a(val)]);
    }
    for &(start, end) in jump_tables {
        db.insert("jump_table_span", vec![a(start), a(end)]);
    }
    db
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub start: u64,
    pub end: u64,
    pub members: Vec<u64>,
    pub total: i64,
    pub has_negative_evidence: bool,
}

pub fn extract_candidates(db: &Database) -> Vec<Candidate> {
    let mut members: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for row in db.rows("code_in_block_candidate") {
        let addr = row[0].as_addr().unwrap();
        let block = row[1].as_addr().unwrap();
        members.entry(block).or_default().push(addr);
    }
    let mut ends = BTreeMap::new();
    for row in db.rows("block_end") {
        ends.insert(row[0].as_addr().unwrap(), row[1].as_addr().unwrap());
    }
    let mut totals = BTreeMap::new();
    for row in db.rows("block_total") {
        totals.insert(row[0].as_addr().unwrap(), row[1].as_i64().unwrap());
    }
    let mut negative = BTreeSet::new();
    for row in db.rows("block_points") {
        if row[2].as_i64().unwrap() < 0 {
            negative.insert(row[0].as_addr().unwrap());
        }
    }
    members
        .into_iter()
        .map(|(block, mut addrs)| {
            addrs.sort_unstable();
            Candidate {
                start: block,
                end: ends.get(&block).copied().unwrap_or(block),
                members: addrs,
                total: totals.get(&block).copied().unwrap_or(0),
                has_negative_evidence: negative.contains(&block),
            }
        })
        .collect()
}

/// Greedy conflict resolution: process candidates by (total desc, start asc);
/// a candidate overlapping an already-kept block is discarded (tie in totals
/// keeps the lower address and records a warning). Kept blocks scoring below
/// the threshold with negative evidence are discarded afterwards. Everything
/// not covered by a block is data.
pub fn resolve_conflicts(
    candidates: &[Candidate],
    fb: &FactBase,
    weights: &IbiWeights,
) -> CodeLayout {
    let mut order: Vec<&Candidate> = candidates.iter().collect();
    order.sort_by(|x, y| (-x.total, x.start).cmp(&(-y.total, y.start)));

    let mut layout = CodeLayout::default();
    // start -> (end, total); kept blocks never overlap, so only the closest
    // predecessor by start can overlap a new candidate.
    let mut kept: BTreeMap<u64, (u64, i64)> = BTreeMap::new();
    for c in order {
        let clash = kept
            .range(..c.end)
            .next_back()
            .filter(|(_, &(end, _))| end > c.start)
            .map(|(&s, &(_, total))| (s, total));
        if let Some((winner, winner_total)) = clash {
            if winner_total == c.total {
                layout.warnings.push(format!(
                    "tie at {} points between blocks 0x{:x} and 0x{:x}; keeping 0x{:x}",
                    c.total,
                    winner.min(c.start),
                    winner.max(c.start),
                    winner
                ));
            }
            layout.discarded.push(DiscardedBlock {
                block: c.start,
                reason: "overlap".to_string(),
                winner,
            });
        } else {
            kept.insert(c.start, (c.end, c.total));
        }
    }

    let by_start: BTreeMap<u64, &Candidate> = candidates.iter().map(|c| (c.start, c)).collect();
    for (&start, &(_, total)) in kept.clone().iter() {
        let c = by_start[&start];
        if total < weights.keep_threshold && c.has_negative_evidence {
            kept.remove(&start);
            layout.discarded.push(DiscardedBlock {
                block: start,
                reason: "below-threshold".to_string(),
                winner: 0,
            });
        }
    }

    for (&start, &(end, _)) in &kept {
        layout.blocks.push(Block {
            start,
            end,
            members: by_start[&start].members.clone(),
        });
    }
    layout.discarded.sort_by(|x, y| x.block.cmp(&y.block));

    for sec in fb.executable_sections() {
        let mut cursor = sec.start;
        for b in &layout.blocks {
            if b.end <= sec.start || b.start >= sec.end() {
                continue;
            }
            if b.start > cursor {
                layout.data_regions.push((cursor, b.start));
            }
            cursor = cursor.max(b.end);
        }
        if cursor < sec.end() {
            layout.data_regions.push((cursor, sec.end()));
        }
    }
    layout
}

/// Run the complete IBI pass. Returns the layout plus the evaluated database
/// for relation dumps and downstream analyses.
pub fn identify(
    fb: &FactBase,
    extra: &ExtraTargets,
    jump_tables: &[(u64, u64)],
    weights: &IbiWeights,
    jobs: usize,
) -> Result<(CodeLayout, Database), EngineError> {
    let program = build_program(weights);
    let facts = build_facts(fb, extra, jump_tables);
    let db = evaluate(&program, &facts, jobs)?;
    let candidates = extract_candidates(&db);
    let layout = resolve_conflicts(&candidates, fb, weights);
    Ok((layout, db))
}

impl CodeLayout {
    /// Structural violations: overlapping blocks or imperfect tiling of
    /// executable bytes.
    pub fn check(&self, fb: &FactBase) -> Vec<String> {
        let mut violations = Vec::new();
        for pair in self.blocks.windows(2) {
            if pair[0].end > pair[1].start {
                violations.push(format!(
                    "blocks 0x{:x} and 0x{:x} overlap",
                    pair[0].start, pair[1].start
                ));
            }
        }
        for sec in fb.executable_sections() {
            for addr in sec.start..sec.end() {
                let in_block = self
                    .blocks
                    .iter()
                    .any(|b| addr >= b.start && addr < b.end);
                let in_data = self
                    .data_regions
                    .iter()
                    .any(|&(s, e)| addr >= s && addr < e);
                if in_block == in_data {
                    violations.push(format!(
                        "address 0x{addr:x} covered by {}",
                        if in_block { "both block and data" } else { "neither" }
                    ));
                }
            }
        }
        violations
    }

    /// Layout as dumpable relations, format-compatible with fact files.
    pub fn to_relations(&self) -> Vec<(&'static str, BTreeSet<Vec<Value>>)> {
        let blocks = self
            .blocks
            .iter()
            .map(|b| vec![a(b.start), a(b.end)])
            .collect();
        let code_in_block = self
            .blocks
            .iter()
            .flat_map(|b| b.members.iter().map(|&m| vec![a(m), a(b.start)]))
            .collect();
        let data_regions = self
            .data_regions
            .iter()
            .map(|&(s, e)| vec![a(s), a(e)])
            .collect();
        let discarded = self
            .discarded
            .iter()
            .map(|d| vec![a(d.block), t(&d.reason), a(d.winner)])
            .collect();
        vec![
            ("block", blocks),
            ("code_in_block", code_in_block),
            ("data_region", data_regions),
            ("discarded_block", discarded),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datalog::stratify;
    use crate::frontend::elf::ElfSection;
    use crate::testutil::{fixture, loop_fixture, section};

    fn run(fb: &FactBase) -> (CodeLayout, Database) {
        identify(fb, &ExtraTargets::new(), &[], &IbiWeights::default(), 1).unwrap()
    }

    #[test]
    fn strata_order() {
        let p = build_program(&IbiWeights::default());
        let strata = stratify(&p).unwrap();
        let s = |name: &str| strata.relation_stratum[name];
        assert!(s("may_fallthrough") < s("invalid"));
        assert!(s("invalid") < s("possible_effective_address"));
        assert!(s("possible_effective_address") < s("code_in_block_candidate"));
        assert!(s("code_in_block_candidate") < s("block_points"));
        assert!(s("block_points") < s("block_total"));
        assert_eq!(
            s("possible_target"),
            s("code_in_block_candidate"),
            "traversal predicates are mutually recursive"
        );
        assert_eq!(s("after_block_end"), s("possible_target"));
    }

    #[test]
    fn fallthrough_examples() {
        let fb = loop_fixture();
        let (_, db) = run(&fb);
        let edge = |addr: u64, to: u64| vec![a(addr), a(to)];
        assert!(db.contains("must_fallthrough", &edge(0x416c4e, 0x416c53)));
        assert!(db.contains("may_fallthrough", &edge(0x416c4e, 0x416c53)));
        // The call may return, but is not guaranteed to.
        assert!(db.contains("may_fallthrough", &edge(0x416c53, 0x416c58)));
        assert!(!db.contains("must_fallthrough", &edge(0x416c53, 0x416c58)));
        assert!(db.contains("direct_call", &edge(0x416c53, 0x413050)));
        // ret generates neither.
        assert!(!db.rows("may_fallthrough").any(|r| r[0] == a(0x413050)));
        // must_fallthrough ⊆ may_fallthrough.
        for row in db.rows("must_fallthrough") {
            assert!(db.contains("may_fallthrough", row));
        }
    }

    #[test]
    fn traversal_finds_immediate_and_loop_head() {
        let fb = loop_fixture();
        let (layout, db) = run(&fb);
        assert!(db.contains("possible_target", &[a(0x45cb23)]));
        assert!(db.contains("possible_target", &[a(0x416c40)])); // jne target
        // Entry block spans the whole loop body; 0x416c40 starts its own
        // block (it is a jump target, hence a block limit).
        let starts: Vec<u64> = layout.blocks.iter().map(|b| b.start).collect();
        assert!(starts.contains(&0x416c2d));
        assert!(starts.contains(&0x416c40));
        assert!(starts.contains(&0x413050));
        assert_eq!(layout.check(&fb), Vec::<String>::new());
    }

    #[test]
    fn single_ret_is_one_block() {
        let fb = fixture(vec![section(".text", 0x1000, true, vec![0xc3])], 0x1000);
        let (layout, _) = run(&fb);
        assert_eq!(
            layout.blocks,
            vec![Block {
                start: 0x1000,
                end: 0x1001,
                members: vec![0x1000],
            }]
        );
        assert!(layout.data_regions.is_empty());
    }

    #[test]
    fn after_block_end_skips_nop_padding() {
        // jmp 0x1008; 3 nops; ret at 0x1005 (reached by the linear-sweep
        // component); more rets up to the jmp target.
        let bytes = vec![0xeb, 0x06, 0x90, 0x90, 0x90, 0xc3, 0xc3, 0xc3, 0xc3];
        let fb = fixture(vec![section(".text", 0x1000, true, bytes)], 0x1000);
        let (layout, db) = run(&fb);
        assert!(db.contains("after_block_end", &[a(0x1000), a(0x1005)]));
        assert!(db.contains("possible_target", &[a(0x1005)]));
        // The padding itself is also swept, so the ret may end up as the tail
        // of a nop-run block; either way it must be inside a kept block.
        assert!(layout
            .blocks
            .iter()
            .any(|b| b.members.contains(&0x1005)));
        assert_eq!(layout.check(&fb), Vec::<String>::new());
    }

    #[test]
    fn invalid_closure_equals_reverse_bfs_oracle() {
        // Randomized programs: instructions with plain fallthrough, jmp edges,
        // and seeded invalid addresses. The engine's closure must match a
        // brute-force reverse reachability computation.
        let program = build_program(&IbiWeights::default());
        let mut state = 0x2545f4914f6cdd1du64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..50 {
            let n = 40u64;
            let mut instr: BTreeMap<u64, (i64, Option<u64>)> = BTreeMap::new(); // addr -> (size, jmp target)
            let mut seeded: BTreeSet<u64> = BTreeSet::new();
            for add3 in 0..n {
                match rng() % 4 {
                    0 => {
                        seeded.insert(add3);
                    }
                    1 => {
                        instr.insert(add3, (1 + (rng() % 3) as i64, Some(rng() % (n + 4))));
                    }
                    _ => {
                        instr.insert(add3, (1 + (rng() % 3) as i64, None));
                    }
                }
            }
            let mut facts = Database::new();
            for &addr in &seeded {
                facts.insert("decode_invalid", vec![a(addr)]);
            }
            for (&addr, &(size, target)) in &instr {
                let opcode = if target.is_some() { "jmp" } else { "mov" };
                facts.insert(
                    "instruction",
                    vec![
                        a(addr),
                        Value::Int(size),
                        t(""),
                        t(opcode),
                        Value::Int(0),
                        Value::Int(0),
                        Value::Int(0),
                        Value::Int(0),
                    ],
                );
                if let Some(dest) = target {
                    facts.insert("direct_jump", vec![a(addr), a(dest)]);
                }
            }
            facts.insert("unconditional_jump_operation", vec![t("jmp")]);
            facts.insert("jump_operation", vec![t("jmp")]);
            let db = evaluate(&program, &facts, 1).unwrap();
            let got: BTreeSet<u64> = db.rows("invalid").map(|r| r[0].as_addr().unwrap()).collect();

            // Oracle: reverse reachability over must-fallthrough and jump
            // edges into invalid or undecoded addresses.
            let mut edges: Vec<(u64, u64)> = Vec::new();
            for (&addr, &(size, target)) in &instr {
                match target {
                    Some(dest) => edges.push((addr, dest)),
                    None => edges.push((addr, addr + size as u64)),
                }
            }
            let mut inv = seeded.clone();
            loop {
                let mut changed = false;
                for &(from, to) in &edges {
                    if !inv.contains(&from) && (inv.contains(&to) || !instr.contains_key(&to)) {
                        inv.insert(from);
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
            assert_eq!(got, inv);
        }
    }

    #[test]
    fn aligned_data_appearance_scores_two_rows() {
        let mut data = vec![0u8; 16];
        data[0..8].copy_from_slice(&0x2000u64.to_le_bytes());
        let fb = fixture(
            vec![
                section(".text", 0x2000, true, vec![0xc3]),
                section(".data", 0x3000, false, data),
            ],
            0x2000,
        );
        let (_, db) = run(&fb);
        let rows: Vec<Vec<Value>> = db
            .rows("block_points")
            .filter(|r| r[0] == a(0x2000))
            .cloned()
            .collect();
        assert_eq!(rows.len(), 2, "expected appearance + alignment rows, got {rows:?}");
        assert!(rows.iter().any(|r| r[3] == t("address-appears")));
        assert!(rows.iter().any(|r| r[3] == t("address-appears-aligned")));
        assert!(db.contains("block_total", &[a(0x2000), Value::Int(3)]));
    }

    #[test]
    fn isolated_block_scores_zero() {
        let fb = fixture(vec![section(".text", 0x1000, true, vec![0xc3])], 0x1000);
        let (_, db) = run(&fb);
        assert_eq!(db.rows("block_points").count(), 0);
        assert!(db.contains("block_total", &[a(0x1000), Value::Int(0)]));
    }

    #[test]
    fn jump_target_of_clean_block_outscores_overlapper() {
        // Entry jumps to 0x1005 (a ret). A data pointer to 0x1004 spawns an
        // overlapping candidate: the mov at 0x1004 swallows 0x1005.
        let bytes = vec![
            0xeb, 0x03, // 0x1000 jmp 0x1005
            0xc3, // 0x1002 ret (linear sweep lands here)
            0xc3, // 0x1003 ret
            0x89, 0xc3, // 0x1004 mov EBX,EAX — overlaps 0x1005
            0xc3, // 0x1006 ret (fallthrough target of the mov)
        ];
        let mut data = vec![0u8; 8];
        data[0..8].copy_from_slice(&0x1004u64.to_le_bytes());
        let fb = fixture(
            vec![
                section(".text", 0x1000, true, bytes),
                section(".data", 0x2000, false, data),
            ],
            0x1000,
        );
        let (layout, db) = run(&fb);
        assert!(db.contains("overlap", &[a(0x1004), a(0x1005)]));
        // 0x1005 is jumped to by the non-overlapping entry block (+3) and its
        // address appears as a code immediate (+2); 0x1004 only appears in
        // data (+2, aligned +1). The jump target must win.
        assert!(db.contains("block_total", &[a(0x1005), Value::Int(5)]));
        assert!(db.contains("block_total", &[a(0x1004), Value::Int(3)]));
        assert!(layout.blocks.iter().any(|b| b.start == 0x1005));
        let d = layout.discarded.iter().find(|d| d.block == 0x1004).unwrap();
        assert_eq!((d.reason.as_str(), d.winner), ("overlap", 0x1005));
        assert_eq!(layout.check(&fb), Vec::<String>::new());
    }

    fn cand(start: u64, end: u64, total: i64) -> Candidate {
        Candidate {
            start,
            end,
            members: vec![start],
            total,
            has_negative_evidence: total < 0,
        }
    }

    #[test]
    fn resolution_keeps_higher_total() {
        let fb = fixture(vec![section(".text", 0x100, true, vec![0x90; 16])], 0x100);
        let w = IbiWeights::default();
        let layout = resolve_conflicts(&[cand(0x100, 0x108, 3), cand(0x104, 0x10c, 5)], &fb, &w);
        assert_eq!(layout.blocks.len(), 1);
        assert_eq!(layout.blocks[0].start, 0x104);
        assert_eq!(
            layout.discarded,
            vec![DiscardedBlock {
                block: 0x100,
                reason: "overlap".to_string(),
                winner: 0x104,
            }]
        );
        assert!(layout.warnings.is_empty());
    }

    #[test]
    fn resolution_tie_keeps_lower_address_with_warning() {
        let fb = fixture(vec![section(".text", 0x100, true, vec![0x90; 16])], 0x100);
        let w = IbiWeights::default();
        let layout = resolve_conflicts(&[cand(0x100, 0x108, 4), cand(0x104, 0x10c, 4)], &fb, &w);
        assert_eq!(layout.blocks[0].start, 0x100);
        assert_eq!(layout.warnings.len(), 1);
        assert!(layout.warnings[0].contains("tie"));
    }

    #[test]
    fn resolution_without_overlap_keeps_all_and_tiles() {
        let fb = fixture(vec![section(".text", 0x100, true, vec![0x90; 32])], 0x100);
        let w = IbiWeights::default();
        let layout = resolve_conflicts(&[cand(0x100, 0x108, 0), cand(0x110, 0x118, 0)], &fb, &w);
        assert_eq!(layout.blocks.len(), 2);
        assert!(layout.discarded.is_empty());
        assert_eq!(layout.data_regions, vec![(0x108, 0x110), (0x118, 0x120)]);
        assert_eq!(layout.check(&fb), Vec::<String>::new());
    }

    #[test]
    fn below_threshold_with_negative_evidence_discarded() {
        let fb = fixture(vec![section(".text", 0x100, true, vec![0x90; 16])], 0x100);
        let w = IbiWeights::default();
        let layout = resolve_conflicts(&[cand(0x100, 0x108, -2)], &fb, &w);
        assert!(layout.blocks.is_empty());
        assert_eq!(layout.discarded[0].reason, "below-threshold");
        // The whole section becomes data.
        assert_eq!(layout.data_regions, vec![(0x100, 0x110)]);
    }

    #[test]
    fn discard_stability() {
        let fb = loop_fixture();
        let w = IbiWeights::default();
        let (layout, db) = run(&fb);
        let candidates = extract_candidates(&db);
        let surviving: Vec<Candidate> = candidates
            .into_iter()
            .filter(|c| !layout.discarded.iter().any(|d| d.block == c.start))
            .collect();
        let again = resolve_conflicts(&surviving, &fb, &w);
        assert_eq!(again.blocks, layout.blocks);
        assert_eq!(again.data_regions, layout.data_regions);
    }
}
