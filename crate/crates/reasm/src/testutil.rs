//! Shared test fixtures: hand-assembled binaries used across module tests.

use crate::facts::FactBase;
use crate::frontend::elf::{BinaryImage, ElfSection, FileKind};
use crate::frontend::image_to_facts;
use crate::ibi::Block;

pub fn section(name: &str, addr: u64, executable: bool, bytes: Vec<u8>) -> ElfSection {
    ElfSection {
        name: name.to_string(),
        addr,
        size: bytes.len() as u64,
        executable,
        writable: false,
        initialized: true,
        bytes,
    }
}

pub fn fixture(mut sections: Vec<ElfSection>, entry: u64) -> FactBase {
    // The ELF loader hands sections over sorted by address; mirror that.
    sections.sort_by(|a, b| (a.addr, a.name.clone()).cmp(&(b.addr, b.name.clone())));
    let image = BinaryImage {
        kind: FileKind::Executable,
        entry,
        sections,
        symbols: Vec::new(),
        relocations: Vec::new(),
    };
    image_to_facts(&image)
}

/// One block per consecutive instruction run starting at each given address;
/// used when a test wants a known layout without running boundary inference.
pub fn block_of(fb: &FactBase, start: u64) -> Block {
    let mut members = Vec::new();
    let mut at = start;
    while let Some(ins) = fb.instructions.get(&at) {
        members.push(at);
        at = ins.end();
    }
    Block {
        start,
        end: at,
        members,
    }
}

/// Loop over an array of 24-byte structs: the running example used across
/// the analysis modules.
///
/// ```text
/// 416c2d  mov R10,[0x45D328]
/// 416c35  mov RBX,-624
/// 416c3c  nop4
/// 416c40  mov RDI,[RIP+0x25D239]   ; = [0x673E80]
/// 416c47  mov RSI,[RBX+0x45D328]
/// 416c4e  mov EDX,0x45CB23
/// 416c53  call 0x413050
/// 416c58  add RBX,24
/// 416c5c  jne 0x416c40
/// ```
pub fn loop_fixture() -> FactBase {
    let mut text = Vec::new();
    text.extend_from_slice(&[0x4c, 0x8b, 0x14, 0x25, 0x28, 0xd3, 0x45, 0x00]);
    text.extend_from_slice(&[0x48, 0xc7, 0xc3, 0x90, 0xfd, 0xff, 0xff]);
    text.extend_from_slice(&[0x0f, 0x1f, 0x40, 0x00]);
    text.extend_from_slice(&[0x48, 0x8b, 0x3d, 0x39, 0xd2, 0x25, 0x00]);
    text.extend_from_slice(&[0x48, 0x8b, 0xb3, 0x28, 0xd3, 0x45, 0x00]);
    text.extend_from_slice(&[0xba, 0x23, 0xcb, 0x45, 0x00]);
    text.extend_from_slice(&[0xe8, 0xf8, 0xc3, 0xff, 0xff]);
    text.extend_from_slice(&[0x48, 0x83, 0xc3, 0x18]);
    text.extend_from_slice(&[0x75, 0xe2]);
    assert_eq!(text.len(), 49);

    let mut rodata = vec![0u8; 0x900];
    // Pointers at 0x45D328 + 24k.
    for k in 0..3u64 {
        let off = (0x45d328u64 - 0x45cb00 + 24 * k) as usize;
        rodata[off..off + 8].copy_from_slice(&(0x673e80u64 + 8 * k).to_le_bytes());
    }
    fixture(
        vec![
            section(".fun", 0x413050, true, vec![0xc3]),
            section(".text", 0x416c2d, true, text),
            section(".rodata", 0x45cb00, false, rodata),
            section(".data", 0x673e80, false, vec![0u8; 64]),
        ],
        0x416c2d,
    )
}

/// Symbol-symbol jump table (ICC shape): an indirect jump through a 1-byte
/// offset table relative to a reference label.
///
/// ```text
/// 47da7b  lea RDX,[RIP+..]      ; = 0x4A09F0 (table)
/// 47da82  movzx EDX,BYTE [RDX+RCX*1]
/// 47da86  lea RAX,[RIP+..]      ; = 0x47DA93 (reference)
/// 47da8d  add RAX,RDX
/// 47da90  jmp RAX
/// 47da92  nop
/// 47da93  ... nop sled with rets at the four targets
/// 47db20  mov R11,[0x4A09F4]    ; stops table propagation after 4 entries
/// ```
pub fn jump_table_fixture(sum_with_lea: bool) -> FactBase {
    let base = 0x47da7bu64;
    let mut text = Vec::new();
    text.extend_from_slice(&[0x48, 0x8d, 0x15, 0x6e, 0x2f, 0x02, 0x00]);
    text.extend_from_slice(&[0x0f, 0xb6, 0x14, 0x0a]);
    text.extend_from_slice(&[0x48, 0x8d, 0x05, 0x06, 0x00, 0x00, 0x00]);
    if sum_with_lea {
        // lea RAX,[RAX+RDX*1]
        text.extend_from_slice(&[0x48, 0x8d, 0x04, 0x10]);
    } else {
        text.extend_from_slice(&[0x48, 0x01, 0xd0]);
    }
    text.extend_from_slice(&[0xff, 0xe0]);
    // Pad to the last target with nops, then drop in the target code.
    while base + (text.len() as u64) < 0x47db40 {
        text.push(0x90);
    }
    let place = |text: &mut Vec<u8>, addr: u64, bytes: &[u8]| {
        let off = (addr - base) as usize;
        text[off..off + bytes.len()].copy_from_slice(bytes);
    };
    for target in [0x47db3f, 0x47db36, 0x47db2b] {
        place(&mut text, target, &[0xc3]);
    }
    // Access right after the table so replication stops at 4 entries.
    place(
        &mut text,
        0x47db20,
        &[0x4c, 0x8b, 0x1c, 0x25, 0xf4, 0x09, 0x4a, 0x00, 0xc3],
    );

    let mut rodata = vec![0u8; 0x20];
    rodata[..4].copy_from_slice(&[0xac, 0xa3, 0x98, 0x8d]);
    fixture(
        vec![
            section(".text", base, true, text),
            section(".rodata", 0x4a09f0, false, rodata),
        ],
        base,
    )
}

/// Diamond-shaped value flow into strided struct-array accesses:
///
/// ```text
/// 400000  mov RBX,[RCX]
/// 400003  mov RAX,RBX
/// 400006  add RAX,RAX
/// 400009  add RAX,RBX          ; RAX = 3*RBX
/// 40000c  mov R8,[RAX*8+0x1000]
/// 400014  mov R9W,[RAX*8+0x1008]
/// 40001d  mov R10B,[RAX*8+0x1010]
/// 400025  ret
/// ```
pub fn diamond_fixture() -> FactBase {
    let mut bytes = vec![0x48, 0x8b, 0x19];
    bytes.extend([0x48, 0x89, 0xd8]);
    bytes.extend([0x48, 0x01, 0xc0]);
    bytes.extend([0x48, 0x01, 0xd8]);
    bytes.extend([0x4c, 0x8b, 0x04, 0xc5, 0x00, 0x10, 0x00, 0x00]);
    bytes.extend([0x66, 0x44, 0x8b, 0x0c, 0xc5, 0x08, 0x10, 0x00, 0x00]);
    bytes.extend([0x44, 0x8a, 0x14, 0xc5, 0x10, 0x10, 0x00, 0x00]);
    bytes.push(0xc3);
    fixture(
        vec![
            section(".text", 0x400000, true, bytes),
            section(".data", 0x1000, false, vec![0u8; 0x100]),
        ],
        0x400000,
    )
}

/// Loop whose bound immediate is symbol+constant landing one slot past the
/// section that holds the counter's base.
///
/// ```text
/// 401000  mov EBX,0x402d40
/// 401005  mov EBP,0x402de8     ; = .rodata end, inside .eh_frame_hdr
/// 40100a  mov RCX,[RBX]
/// 40100d  add RBX,8
/// 401011  cmp RBX,RBP
/// 401014  jne 0x40100a
/// 401016  ret
/// ```
pub fn loop_bound_fixture() -> FactBase {
    let mut text = Vec::new();
    text.extend_from_slice(&[0xbb, 0x40, 0x2d, 0x40, 0x00]);
    text.extend_from_slice(&[0xbd, 0xe8, 0x2d, 0x40, 0x00]);
    text.extend_from_slice(&[0x48, 0x8b, 0x0b]);
    text.extend_from_slice(&[0x48, 0x83, 0xc3, 0x08]);
    text.extend_from_slice(&[0x48, 0x39, 0xeb]);
    text.extend_from_slice(&[0x75, 0xf4]);
    text.push(0xc3);
    fixture(
        vec![
            section(".text", 0x401000, true, text),
            section(".rodata", 0x402720, false, vec![0u8; 0x6c8]),
            section(".eh_frame_hdr", 0x402de8, false, vec![0u8; 0x40]),
        ],
        0x401000,
    )
}

/// Known-miss case: a data slot holding a pointer to the start of
/// .eh_frame_hdr (which coincides with the end of .rodata). The
/// special-section penalty drives the candidate negative, so the reference
/// stays a literal even though a relocation says it is symbolic.
pub fn special_section_pointer_fixture() -> FactBase {
    let mut rodata = vec![0u8; 0x40];
    rodata[0x10..0x18].copy_from_slice(&0x402de8u64.to_le_bytes());
    fixture(
        vec![
            section(".text", 0x401000, true, vec![0xc3]),
            section(".rodata", 0x402da8, false, rodata),
            section(".eh_frame_hdr", 0x402de8, false, vec![0u8; 0x40]),
        ],
        0x401000,
    )
}

/// Known-miss case: same loop as `loop_bound_fixture` but the bound lands two
/// strides past the section end (as deeply nested loop bounds can), outside
/// the one-stride extended range, so no repair fires and the bound stays a
/// literal.
pub fn deep_loop_bound_fixture() -> FactBase {
    let mut text = Vec::new();
    text.extend_from_slice(&[0xbb, 0x40, 0x2d, 0x40, 0x00]);
    text.extend_from_slice(&[0xbd, 0xf8, 0x2d, 0x40, 0x00]); // bound 0x402df8
    text.extend_from_slice(&[0x48, 0x8b, 0x0b]);
    text.extend_from_slice(&[0x48, 0x83, 0xc3, 0x08]);
    text.extend_from_slice(&[0x48, 0x39, 0xeb]);
    text.extend_from_slice(&[0x75, 0xf4]);
    text.push(0xc3);
    fixture(
        vec![
            section(".text", 0x401000, true, text),
            section(".rodata", 0x402720, false, vec![0u8; 0x6c8]),
            section(".eh_frame_hdr", 0x402de8, false, vec![0u8; 0x40]),
        ],
        0x401000,
    )
}

/// Every fixture that ships as a checked-in fact directory.
pub fn all_fixtures() -> Vec<(&'static str, FactBase)> {
    vec![
        ("wget_ex1", loop_fixture()),
        ("tar_jump_table", jump_table_fixture(false)),
        ("conflict_6_0", loop_bound_fixture()),
        ("diamond_struct", diamond_fixture()),
        ("miss_special_section", special_section_pointer_fixture()),
        ("miss_deep_loop_bound", deep_loop_bound_fixture()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::io::{dump_facts, load_facts};

    #[test]
    fn checked_in_fixtures_match_their_builders() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        for (name, fb) in all_fixtures() {
            let tmp = tempfile::tempdir().unwrap();
            dump_facts(&fb, tmp.path()).unwrap();
            for entry in std::fs::read_dir(tmp.path()).unwrap() {
                let entry = entry.unwrap();
                let file = entry.file_name();
                let fresh = std::fs::read(entry.path()).unwrap();
                let checked_in = std::fs::read(root.join(name).join(&file))
                    .unwrap_or_else(|e| panic!("{name}/{file:?}: {e}"));
                assert_eq!(fresh, checked_in, "{name}/{file:?} drifted; rerun gen_fixtures");
            }
            assert_eq!(load_facts(&root.join(name)).unwrap(), fb, "{name}");
        }
    }
}
