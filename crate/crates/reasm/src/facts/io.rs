//! Bit-exact `.facts` directory serialization.
//!
//! One relation per `<relation>.facts` file, tab-separated columns, addresses
//! as lowercase `0x` hex, signed columns as decimal, text raw. Missing file =
//! empty relation. Rows are written in sorted order so dump is canonical and
//! round trips byte-identically.

use super::{
    FactBase, InstructionFact, OperandPayload, RelocationFact, SectionInfo, SymbolFact,
};
use crate::datalog::Value;
use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FactsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file}:{line}: {reason}")]
    Parse {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("integrity: {0}")]
    Integrity(String),
}

fn addr(a: u64) -> String {
    format!("0x{a:x}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn check_text(file: &str, line: usize, field: &str) -> Result<(), FactsError> {
    if field.contains('\t') || field.contains('\n') {
        return Err(FactsError::Parse {
            file: file.to_string(),
            line,
            reason: "text field contains tab or newline".to_string(),
        });
    }
    Ok(())
}

pub fn dump_facts(fb: &FactBase, dir: &Path) -> Result<(), FactsError> {
    fs::create_dir_all(dir).map_err(|e| FactsError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let write = |name: &str, body: String| -> Result<(), FactsError> {
        if body.is_empty() {
            return Ok(());
        }
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| FactsError::Io { path, source: e })
    };

    let mut s = String::new();
    for ins in fb.instructions.values() {
        check_text("instruction.facts", 0, &ins.prefix)?;
        check_text("instruction.facts", 0, &ins.opcode)?;
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            addr(ins.addr),
            ins.size,
            ins.prefix,
            ins.opcode,
            ins.ops[0],
            ins.ops[1],
            ins.ops[2],
            ins.ops[3]
        )
        .unwrap();
    }
    write("instruction.facts", s)?;

    let mut regdirect = String::new();
    let mut immediate = String::new();
    let mut indirect = String::new();
    for (id, op) in &fb.operands {
        match op {
            OperandPayload::RegDirect { reg } => writeln!(regdirect, "{id}\t{reg}").unwrap(),
            OperandPayload::Immediate { value } => writeln!(immediate, "{id}\t{value}").unwrap(),
            OperandPayload::Indirect {
                seg,
                base,
                index,
                mult,
                disp,
                access_size,
                rip,
            } => writeln!(
                indirect,
                "{id}\t{seg}\t{base}\t{index}\t{mult}\t{disp}\t{access_size}\t{}",
                flag(*rip)
            )
            .unwrap(),
        }
    }
    write("op_regdirect.facts", regdirect)?;
    write("op_immediate.facts", immediate)?;
    write("op_indirect.facts", indirect)?;

    write(
        "invalid.facts",
        fb.invalid.iter().map(|a| addr(*a) + "\n").collect(),
    )?;
    write(
        "data_byte.facts",
        fb.data_bytes
            .iter()
            .map(|(a, v)| format!("{}\t{v}\n", addr(*a)))
            .collect(),
    )?;
    write(
        "address_in_data.facts",
        fb.address_in_data
            .iter()
            .map(|(a, v)| format!("{}\t{}\n", addr(*a), addr(*v)))
            .collect(),
    )?;

    let mut sections = fb.sections.clone();
    sections.sort_by(|a, b| (a.start, &a.name).cmp(&(b.start, &b.name)));
    let mut s = String::new();
    for sec in &sections {
        check_text("section.facts", 0, &sec.name)?;
        writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            sec.name,
            addr(sec.start),
            sec.length,
            flag(sec.executable),
            flag(sec.writable),
            flag(sec.initialized)
        )
        .unwrap();
    }
    write("section.facts", s)?;

    let mut symbols = fb.symbols.clone();
    symbols.sort_by(|a, b| (a.addr, &a.name, &a.kind).cmp(&(b.addr, &b.name, &b.kind)));
    let mut s = String::new();
    for sym in &symbols {
        check_text("symbol.facts", 0, &sym.name)?;
        check_text("symbol.facts", 0, &sym.kind)?;
        writeln!(s, "{}\t{}\t{}", addr(sym.addr), sym.name, sym.kind).unwrap();
    }
    write("symbol.facts", s)?;

    let mut relocations = fb.relocations.clone();
    relocations.sort_by(|a, b| {
        (a.addr, &a.kind, &a.symbol, a.addend).cmp(&(b.addr, &b.kind, &b.symbol, b.addend))
    });
    let mut s = String::new();
    for rel in &relocations {
        check_text("relocation.facts", 0, &rel.kind)?;
        check_text("relocation.facts", 0, &rel.symbol)?;
        writeln!(
            s,
            "{}\t{}\t{}\t{}",
            addr(rel.addr),
            rel.kind,
            rel.symbol,
            rel.addend
        )
        .unwrap();
    }
    write("relocation.facts", s)?;

    write(
        "entry_point.facts",
        fb.entry_points.iter().map(|a| addr(*a) + "\n").collect(),
    )?;
    write(
        "metadata.facts",
        fb.metadata
            .iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect(),
    )?;
    Ok(())
}

struct Lines {
    file: String,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_lines(dir: &Path, name: &str) -> Result<Lines, FactsError> {
    let path = dir.join(name);
    let rows = match fs::read_to_string(&path) {
        Ok(text) => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, l)| (i + 1, l.split('\t').map(str::to_string).collect()))
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(FactsError::Io { path, source: e }),
    };
    Ok(Lines {
        file: name.to_string(),
        rows,
    })
}

impl Lines {
    fn err(&self, line: usize, reason: impl Into<String>) -> FactsError {
        FactsError::Parse {
            file: self.file.clone(),
            line,
            reason: reason.into(),
        }
    }

    fn expect_arity(&self, line: usize, fields: &[String], n: usize) -> Result<(), FactsError> {
        if fields.len() != n {
            return Err(self.err(line, format!("expected {n} columns, got {}", fields.len())));
        }
        Ok(())
    }
}

fn parse_addr(lines: &Lines, line: usize, field: &str) -> Result<u64, FactsError> {
    match Value::parse(crate::datalog::ColumnKind::Address, field) {
        Ok(Value::Addr(a)) => Ok(a),
        _ => Err(lines.err(line, format!("bad address {field:?}"))),
    }
}

fn parse_int(lines: &Lines, line: usize, field: &str) -> Result<i64, FactsError> {
    field
        .parse::<i64>()
        .map_err(|e| lines.err(line, format!("bad integer {field:?}: {e}")))
}

fn parse_flag(lines: &Lines, line: usize, field: &str) -> Result<bool, FactsError> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(lines.err(line, format!("bad flag {field:?}"))),
    }
}

pub fn load_facts(dir: &Path) -> Result<FactBase, FactsError> {
    let mut fb = FactBase::new();

    let lines = read_lines(dir, "instruction.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 8)?;
        let a = parse_addr(&lines, *ln, &f[0])?;
        let fact = InstructionFact {
            addr: a,
            size: parse_int(&lines, *ln, &f[1])? as u32,
            prefix: f[2].clone(),
            opcode: f[3].clone(),
            ops: [
                parse_int(&lines, *ln, &f[4])? as u64,
                parse_int(&lines, *ln, &f[5])? as u64,
                parse_int(&lines, *ln, &f[6])? as u64,
                parse_int(&lines, *ln, &f[7])? as u64,
            ],
        };
        if fb.instructions.insert(a, fact).is_some() {
            return Err(lines.err(*ln, format!("duplicate instruction at 0x{a:x}")));
        }
    }

    let mut insert_op = |lines: &Lines, ln: usize, id: u64, op: OperandPayload| {
        if id == 0 {
            return Err(lines.err(ln, "operand id 0 is reserved"));
        }
        if fb.operands.insert(id, op).is_some() {
            return Err(lines.err(ln, format!("duplicate operand id {id}")));
        }
        Ok(())
    };
    let lines = read_lines(dir, "op_regdirect.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 2)?;
        let id = parse_int(&lines, *ln, &f[0])? as u64;
        insert_op(&lines, *ln, id, OperandPayload::RegDirect { reg: f[1].clone() })?;
    }
    let lines = read_lines(dir, "op_immediate.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 2)?;
        let id = parse_int(&lines, *ln, &f[0])? as u64;
        let value = parse_int(&lines, *ln, &f[1])?;
        insert_op(&lines, *ln, id, OperandPayload::Immediate { value })?;
    }
    let lines = read_lines(dir, "op_indirect.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 8)?;
        let id = parse_int(&lines, *ln, &f[0])? as u64;
        let op = OperandPayload::Indirect {
            seg: f[1].clone(),
            base: f[2].clone(),
            index: f[3].clone(),
            mult: parse_int(&lines, *ln, &f[4])?,
            disp: parse_int(&lines, *ln, &f[5])?,
            access_size: parse_int(&lines, *ln, &f[6])? as u8,
            rip: parse_flag(&lines, *ln, &f[7])?,
        };
        insert_op(&lines, *ln, id, op)?;
    }

    let lines = read_lines(dir, "invalid.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 1)?;
        fb.invalid.insert(parse_addr(&lines, *ln, &f[0])?);
    }

    let lines = read_lines(dir, "data_byte.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 2)?;
        let a = parse_addr(&lines, *ln, &f[0])?;
        let v = parse_int(&lines, *ln, &f[1])?;
        if !(0..=255).contains(&v) {
            return Err(lines.err(*ln, format!("byte value {v} out of range")));
        }
        fb.data_bytes.insert(a, v as u8);
    }

    let lines = read_lines(dir, "address_in_data.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 2)?;
        let a = parse_addr(&lines, *ln, &f[0])?;
        let v = parse_addr(&lines, *ln, &f[1])?;
        fb.address_in_data.insert(a, v);
    }

    let lines = read_lines(dir, "section.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 6)?;
        fb.sections.push(SectionInfo {
            name: f[0].clone(),
            start: parse_addr(&lines, *ln, &f[1])?,
            length: parse_int(&lines, *ln, &f[2])? as u64,
            executable: parse_flag(&lines, *ln, &f[3])?,
            writable: parse_flag(&lines, *ln, &f[4])?,
            initialized: parse_flag(&lines, *ln, &f[5])?,
        });
    }

    let lines = read_lines(dir, "symbol.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 3)?;
        fb.symbols.push(SymbolFact {
            addr: parse_addr(&lines, *ln, &f[0])?,
            name: f[1].clone(),
            kind: f[2].clone(),
        });
    }

    let lines = read_lines(dir, "relocation.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 4)?;
        fb.relocations.push(RelocationFact {
            addr: parse_addr(&lines, *ln, &f[0])?,
            kind: f[1].clone(),
            symbol: f[2].clone(),
            addend: parse_int(&lines, *ln, &f[3])?,
        });
    }

    let lines = read_lines(dir, "entry_point.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 1)?;
        fb.entry_points.insert(parse_addr(&lines, *ln, &f[0])?);
    }

    let lines = read_lines(dir, "metadata.facts")?;
    for (ln, f) in &lines.rows {
        lines.expect_arity(*ln, f, 2)?;
        fb.metadata.insert(f[0].clone(), f[1].clone());
    }

    for ins in fb.instructions.values() {
        for id in ins.operand_ids() {
            if !fb.operands.contains_key(&id) {
                return Err(FactsError::Integrity(format!(
                    "instruction at 0x{:x} references dangling operand id {id}",
                    ins.addr
                )));
            }
        }
    }
    Ok(fb)
}

/// Dump one derived relation in the same tab-separated format, rows sorted.
pub fn dump_relation(
    dir: &Path,
    name: &str,
    rows: &BTreeSet<Vec<Value>>,
) -> Result<(), FactsError> {
    fs::create_dir_all(dir).map_err(|e| FactsError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut body = String::new();
    for row in rows {
        let fields: Vec<String> = row.iter().map(Value::render).collect();
        writeln!(body, "{}", fields.join("\t")).unwrap();
    }
    let path = dir.join(format!("{name}.facts"));
    fs::write(&path, body).map_err(|e| FactsError::Io { path, source: e })
}
