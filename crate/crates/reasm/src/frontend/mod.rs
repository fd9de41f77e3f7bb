//! ELF front-end: load a binary, exhaustively decode every executable
//! address, scan all bytes for section-pointing values, and assemble the
//! resulting FactBase.

pub mod decoder;
pub mod elf;

pub use elf::{load_binary, BinaryImage, ElfError, FileKind};

use crate::facts::{FactBase, InstructionFact, OperandPayload, SectionInfo};
use std::collections::HashMap;

/// Decode at every address of every executable section. Every executable
/// address yields exactly one instruction or invalid fact; decoding never
/// consumes knowledge of neighboring results.
pub fn decode_all(image: &BinaryImage, fb: &mut FactBase) {
    let mut interned: HashMap<OperandPayload, u64> = HashMap::new();
    for sec in image.sections.iter().filter(|s| s.executable && s.initialized) {
        for off in 0..sec.bytes.len() {
            let addr = sec.addr + off as u64;
            let window = &sec.bytes[off..(off + decoder::MAX_INSN_BYTES).min(sec.bytes.len())];
            match decoder::decode(window, addr) {
                Some(d) => {
                    let mut ops = [0u64; 4];
                    for (i, payload) in d.operands.into_iter().enumerate() {
                        let id = match interned.get(&payload) {
                            Some(&id) => id,
                            None => {
                                let id = fb.add_operand(payload.clone());
                                interned.insert(payload, id);
                                id
                            }
                        };
                        ops[i] = id;
                    }
                    fb.instructions.insert(
                        addr,
                        InstructionFact {
                            addr,
                            size: d.size,
                            prefix: d.prefix,
                            opcode: d.opcode,
                            ops,
                        },
                    );
                }
                None => {
                    fb.invalid.insert(addr);
                }
            }
        }
    }
}

/// Record every mapped initialized byte (executable sections included) and
/// every address whose 8 little-endian bytes form a value inside some section.
pub fn scan_data(image: &BinaryImage, fb: &mut FactBase) {
    for sec in image.sections.iter().filter(|s| s.initialized) {
        for (off, &b) in sec.bytes.iter().enumerate() {
            fb.data_bytes.insert(sec.addr + off as u64, b);
        }
    }
    let addrs: Vec<u64> = fb.data_bytes.keys().copied().collect();
    for a in addrs {
        if let Some(v) = fb.read_le(a, 8) {
            if fb.in_any_section(v) {
                fb.address_in_data.insert(a, v);
            }
        }
    }
}

pub fn image_to_facts(image: &BinaryImage) -> FactBase {
    let mut fb = FactBase::new();
    for sec in &image.sections {
        fb.sections.push(SectionInfo {
            name: sec.name.clone(),
            start: sec.addr,
            length: sec.size,
            executable: sec.executable,
            writable: sec.writable,
            initialized: sec.initialized,
        });
    }
    decode_all(image, &mut fb);
    scan_data(image, &mut fb);

    for sym in &image.symbols {
        fb.symbols.push(crate::facts::SymbolFact {
            addr: sym.addr,
            name: sym.name.clone(),
            kind: sym.kind.clone(),
        });
    }
    for rel in &image.relocations {
        fb.relocations.push(crate::facts::RelocationFact {
            addr: rel.addr,
            kind: rel.kind.clone(),
            symbol: rel.symbol.clone(),
            addend: rel.addend,
        });
    }

    if image.entry != 0 {
        fb.entry_points.insert(image.entry);
    }
    if image.kind == FileKind::SharedObject {
        // Exported functions are additional entry points.
        for sym in &image.symbols {
            if sym.global && sym.defined && sym.kind == "FUNC" {
                fb.entry_points.insert(sym.addr);
            }
        }
    }
    fb.entry_points
        .retain(|&a| fb.sections.iter().any(|s| s.executable && s.contains(a)));

    fb.metadata.insert(
        "file_kind".to_string(),
        match image.kind {
            FileKind::Executable => "executable",
            FileKind::SharedObject => "shared_object",
        }
        .to_string(),
    );
    fb.metadata.insert(
        "decoder_version".to_string(),
        decoder::DECODER_VERSION.to_string(),
    );
    fb
}

pub fn extract_facts(path: &std::path::Path) -> Result<FactBase, ElfError> {
    let image = load_binary(path)?;
    Ok(image_to_facts(&image))
}
