//! Initial-fact data model and the `.facts` directory format: the boundary
//! between the ELF front-end, checked-in fixtures and the inference pipeline.

pub mod io;
pub mod registers;

use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionFact {
    pub addr: u64,
    pub size: u32,
    pub prefix: String,
    pub opcode: String,
    /// Operand ids, source operands first, destination last; 0 = absent.
    pub ops: [u64; 4],
}

impl InstructionFact {
    pub fn operand_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.ops.iter().copied().filter(|&o| o != 0)
    }

    pub fn end(&self) -> u64 {
        self.addr + self.size as u64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OperandPayload {
    RegDirect {
        reg: String,
    },
    Immediate {
        value: i64,
    },
    Indirect {
        seg: String,
        base: String,
        index: String,
        mult: i64,
        disp: i64,
        access_size: u8,
        /// Displacement was rip-relative and has been normalized to the
        /// absolute target address.
        rip: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectionInfo {
    pub name: String,
    pub start: u64,
    pub length: u64,
    pub executable: bool,
    pub writable: bool,
    pub initialized: bool,
}

impl SectionInfo {
    pub fn end(&self) -> u64 {
        self.start + self.length
    }

    pub fn contains(&self, addr: u64) -> bool {
        addr >= self.start && addr < self.end()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolFact {
    pub addr: u64,
    pub name: String,
    pub kind: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelocationFact {
    pub addr: u64,
    pub kind: String,
    pub symbol: String,
    pub addend: i64,
}

#[derive(Clone, Default, Debug, PartialEq, Eq)]
pub struct FactBase {
    pub instructions: BTreeMap<u64, InstructionFact>,
    pub operands: BTreeMap<u64, OperandPayload>,
    pub invalid: BTreeSet<u64>,
    pub data_bytes: BTreeMap<u64, u8>,
    pub address_in_data: BTreeMap<u64, u64>,
    pub sections: Vec<SectionInfo>,
    pub symbols: Vec<SymbolFact>,
    pub relocations: Vec<RelocationFact>,
    pub entry_points: BTreeSet<u64>,
    pub metadata: BTreeMap<String, String>,
}

impl FactBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn operand(&self, id: u64) -> Option<&OperandPayload> {
        self.operands.get(&id)
    }

    pub fn section_containing(&self, addr: u64) -> Option<&SectionInfo> {
        self.sections.iter().find(|s| s.contains(addr))
    }

    pub fn in_any_section(&self, addr: u64) -> bool {
        self.section_containing(addr).is_some()
    }

    pub fn executable_sections(&self) -> impl Iterator<Item = &SectionInfo> {
        self.sections.iter().filter(|s| s.executable)
    }

    /// Fresh operand id for producers; ids are meaningless beyond identity.
    pub fn add_operand(&mut self, payload: OperandPayload) -> u64 {
        let id = self.operands.keys().next_back().copied().unwrap_or(0) + 1;
        self.operands.insert(id, payload);
        id
    }

    /// Read `n` little-endian initialized bytes at `addr`, if all present.
    pub fn read_le(&self, addr: u64, n: u32) -> Option<u64> {
        let mut v: u64 = 0;
        for i in 0..n as u64 {
            let b = *self.data_bytes.get(&(addr + i))?;
            v |= (b as u64) << (8 * i);
        }
        Some(v)
    }

    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();

        for ins in self.instructions.values() {
            if ins.size == 0 {
                violations.push(format!("instruction at 0x{:x} has size 0", ins.addr));
            }
            for id in ins.operand_ids() {
                if !self.operands.contains_key(&id) {
                    violations.push(format!(
                        "instruction at 0x{:x} references dangling operand id {id}",
                        ins.addr
                    ));
                }
            }
            if self.invalid.contains(&ins.addr) {
                violations.push(format!(
                    "address 0x{:x} is both an instruction and invalid",
                    ins.addr
                ));
            }
        }

        for (id, op) in &self.operands {
            match op {
                OperandPayload::RegDirect { reg } => {
                    if !registers::is_register(reg) && reg != registers::RIP {
                        violations.push(format!("operand {id}: unknown register {reg}"));
                    }
                }
                OperandPayload::Indirect {
                    seg,
                    base,
                    index,
                    access_size,
                    ..
                } => {
                    for r in [seg, base, index] {
                        if r != registers::NONE && registers::canonical(r).is_none() {
                            violations.push(format!("operand {id}: unknown register {r}"));
                        }
                    }
                    if ![1, 2, 4, 8, 16].contains(access_size) {
                        violations.push(format!("operand {id}: bad access size {access_size}"));
                    }
                }
                OperandPayload::Immediate { .. } => {}
            }
        }

        let mut sorted: Vec<&SectionInfo> = self.sections.iter().collect();
        sorted.sort_by_key(|s| s.start);
        for pair in sorted.windows(2) {
            if pair[0].end() > pair[1].start {
                violations.push(format!(
                    "sections {} and {} overlap",
                    pair[0].name, pair[1].name
                ));
            }
        }

        for &ep in &self.entry_points {
            if !self.executable_sections().any(|s| s.contains(ep)) {
                violations.push(format!("entry point 0x{ep:x} outside executable sections"));
            }
        }

        for (&addr, &val) in &self.address_in_data {
            if !self.in_any_section(val) {
                violations.push(format!(
                    "address_in_data(0x{addr:x}, 0x{val:x}): value outside all sections"
                ));
            }
            match self.read_le(addr, 8) {
                Some(v) if v == val => {}
                Some(v) => violations.push(format!(
                    "address_in_data(0x{addr:x}, 0x{val:x}): bytes encode 0x{v:x}"
                )),
                None => violations.push(format!(
                    "address_in_data(0x{addr:x}, 0x{val:x}): bytes missing"
                )),
            }
        }

        // Re-scan: every 8-byte window of initialized bytes whose value lands
        // in a section must be recorded.
        for &addr in self.data_bytes.keys() {
            if let Some(v) = self.read_le(addr, 8) {
                if self.in_any_section(v) && self.address_in_data.get(&addr) != Some(&v) {
                    violations.push(format!(
                        "missing address_in_data(0x{addr:x}, 0x{v:x}) per byte re-scan"
                    ));
                }
            }
        }

        violations
    }
}
