//! Minimal ELF64 (little-endian) reader: sections with bytes, symbols,
//! relocations, entry point. Only what fact extraction needs.

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ElfError {
    #[error("not an ELF file")]
    NotElf,
    #[error("unsupported ELF class (only 64-bit is supported)")]
    UnsupportedClass,
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FileKind {
    Executable,
    SharedObject,
}

#[derive(Clone, Debug)]
pub struct ElfSection {
    pub name: String,
    pub addr: u64,
    pub size: u64,
    pub executable: bool,
    pub writable: bool,
    /// False for SHT_NOBITS (.bss); `bytes` is empty then.
    pub initialized: bool,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct ElfSymbol {
    pub addr: u64,
    pub name: String,
    pub kind: String,
    pub global: bool,
    pub defined: bool,
}

#[derive(Clone, Debug)]
pub struct ElfRelocation {
    pub addr: u64,
    pub kind: String,
    pub symbol: String,
    pub addend: i64,
}

#[derive(Clone, Debug)]
pub struct BinaryImage {
    pub kind: FileKind,
    pub entry: u64,
    /// Allocatable sections only, sorted by address.
    pub sections: Vec<ElfSection>,
    pub symbols: Vec<ElfSymbol>,
    pub relocations: Vec<ElfRelocation>,
}

struct Bytes<'a>(&'a [u8]);

impl<'a> Bytes<'a> {
    fn slice(&self, off: usize, len: usize) -> Result<&'a [u8], ElfError> {
        self.0
            .get(off..off.checked_add(len).ok_or_else(overflow)?)
            .ok_or_else(|| ElfError::MalformedHeader(format!("offset {off}+{len} out of file")))
    }

    fn u16(&self, off: usize) -> Result<u16, ElfError> {
        Ok(u16::from_le_bytes(self.slice(off, 2)?.try_into().unwrap()))
    }

    fn u32(&self, off: usize) -> Result<u32, ElfError> {
        Ok(u32::from_le_bytes(self.slice(off, 4)?.try_into().unwrap()))
    }

    fn u64(&self, off: usize) -> Result<u64, ElfError> {
        Ok(u64::from_le_bytes(self.slice(off, 8)?.try_into().unwrap()))
    }
}

fn overflow() -> ElfError {
    ElfError::MalformedHeader("offset overflow".to_string())
}

fn cstr(table: &[u8], off: usize) -> String {
    let rest = table.get(off..).unwrap_or(&[]);
    let end = rest.iter().position(|&b| b == 0).unwrap_or(rest.len());
    String::from_utf8_lossy(&rest[..end]).into_owned()
}

const SHT_PROGBITS_LIKE_NOBITS: u32 = 8;
const SHT_SYMTAB: u32 = 2;
const SHT_DYNSYM: u32 = 11;
const SHT_RELA: u32 = 4;
const SHF_WRITE: u64 = 0x1;
const SHF_ALLOC: u64 = 0x2;
const SHF_EXECINSTR: u64 = 0x4;

fn reloc_name(ty: u32) -> String {
    match ty {
        1 => "R_X86_64_64".to_string(),
        2 => "R_X86_64_PC32".to_string(),
        4 => "R_X86_64_PLT32".to_string(),
        10 => "R_X86_64_32".to_string(),
        11 => "R_X86_64_32S".to_string(),
        n => format!("R_X86_64_{n}"),
    }
}

pub fn load_binary(path: &Path) -> Result<BinaryImage, ElfError> {
    let data = std::fs::read(path)?;
    parse(&data)
}

pub fn parse(data: &[u8]) -> Result<BinaryImage, ElfError> {
    let b = Bytes(data);
    if data.len() < 64 || &data[0..4] != b"\x7fELF" {
        return Err(ElfError::NotElf);
    }
    if data[4] != 2 {
        return Err(ElfError::UnsupportedClass);
    }
    if data[5] != 1 {
        return Err(ElfError::MalformedHeader("big-endian ELF".to_string()));
    }
    let e_type = b.u16(16)?;
    let kind = match e_type {
        2 => FileKind::Executable,
        3 => FileKind::SharedObject,
        t => return Err(ElfError::MalformedHeader(format!("unsupported e_type {t}"))),
    };
    let machine = b.u16(18)?;
    if machine != 62 {
        return Err(ElfError::MalformedHeader(format!(
            "unsupported machine {machine} (want EM_X86_64)"
        )));
    }
    let entry = b.u64(24)?;
    let shoff = b.u64(40)? as usize;
    let shentsize = b.u16(58)? as usize;
    let shnum = b.u16(60)? as usize;
    let shstrndx = b.u16(62)? as usize;
    if shentsize < 64 {
        return Err(ElfError::MalformedHeader(format!(
            "section header entry size {shentsize}"
        )));
    }

    struct RawSection {
        name: u32,
        sh_type: u32,
        flags: u64,
        addr: u64,
        offset: u64,
        size: u64,
        link: u32,
        entsize: u64,
    }
    let mut raw = Vec::with_capacity(shnum);
    for i in 0..shnum {
        let off = shoff + i * shentsize;
        raw.push(RawSection {
            name: b.u32(off)?,
            sh_type: b.u32(off + 4)?,
            flags: b.u64(off + 8)?,
            addr: b.u64(off + 16)?,
            offset: b.u64(off + 24)?,
            size: b.u64(off + 32)?,
            link: b.u32(off + 40)?,
            entsize: b.u64(off + 56)?,
        });
    }
    let shstrtab = match raw.get(shstrndx) {
        Some(s) => b.slice(s.offset as usize, s.size as usize)?,
        None => &[],
    };
    let names: Vec<String> = raw.iter().map(|s| cstr(shstrtab, s.name as usize)).collect();

    let mut sections = Vec::new();
    for (s, name) in raw.iter().zip(&names) {
        if s.flags & SHF_ALLOC == 0 {
            continue;
        }
        let initialized = s.sh_type != SHT_PROGBITS_LIKE_NOBITS;
        let bytes = if initialized {
            b.slice(s.offset as usize, s.size as usize)?.to_vec()
        } else {
            Vec::new()
        };
        sections.push(ElfSection {
            name: name.clone(),
            addr: s.addr,
            size: s.size,
            executable: s.flags & SHF_EXECINSTR != 0,
            writable: s.flags & SHF_WRITE != 0,
            initialized,
            bytes,
        });
    }
    sections.sort_by(|a, b| (a.addr, &a.name).cmp(&(b.addr, &b.name)));

    // Symbol tables, remembered per section index for relocation lookup.
    let mut symtabs: Vec<Option<Vec<ElfSymbol>>> = vec![None; raw.len()];
    let mut symbols = Vec::new();
    for (i, s) in raw.iter().enumerate() {
        if s.sh_type != SHT_SYMTAB && s.sh_type != SHT_DYNSYM {
            continue;
        }
        let strtab = match raw.get(s.link as usize) {
            Some(st) => b.slice(st.offset as usize, st.size as usize)?,
            None => &[],
        };
        let entsize = if s.entsize >= 24 { s.entsize } else { 24 } as usize;
        let count = (s.size as usize) / entsize;
        let mut table = Vec::with_capacity(count);
        for j in 0..count {
            let off = s.offset as usize + j * entsize;
            let name_off = b.u32(off)? as usize;
            let info = b.slice(off + 4, 1)?[0];
            let shndx = b.u16(off + 6)?;
            let value = b.u64(off + 8)?;
            let ty = info & 0xf;
            let name = if ty == 3 {
                // Section symbol: use the section's own name.
                raw.get(shndx as usize)
                    .map(|sec| cstr(shstrtab, sec.name as usize))
                    .unwrap_or_default()
            } else {
                cstr(strtab, name_off)
            };
            let kind = match ty {
                1 => "OBJECT",
                2 => "FUNC",
                3 => "SECTION",
                4 => "FILE",
                _ => "NOTYPE",
            }
            .to_string();
            table.push(ElfSymbol {
                addr: value,
                name,
                kind,
                global: info >> 4 == 1,
                defined: shndx != 0,
            });
        }
        symtabs[i] = Some(table);
    }
    for table in symtabs.iter().flatten() {
        for sym in table {
            if !sym.name.is_empty() && sym.defined && sym.kind != "FILE" && sym.kind != "SECTION" {
                symbols.push(sym.clone());
            }
        }
    }
    symbols.sort_by(|a, b| (a.addr, &a.name).cmp(&(b.addr, &b.name)));
    symbols.dedup_by(|a, b| a.addr == b.addr && a.name == b.name);

    let mut relocations = Vec::new();
    for s in &raw {
        if s.sh_type != SHT_RELA {
            continue;
        }
        let syms = symtabs.get(s.link as usize).and_then(|t| t.as_ref());
        let entsize = if s.entsize >= 24 { s.entsize } else { 24 } as usize;
        let count = (s.size as usize) / entsize;
        for j in 0..count {
            let off = s.offset as usize + j * entsize;
            let r_offset = b.u64(off)?;
            let r_info = b.u64(off + 8)?;
            let addend = b.u64(off + 16)? as i64;
            let sym_idx = (r_info >> 32) as usize;
            let symbol = syms
                .and_then(|t| t.get(sym_idx))
                .map(|sym| sym.name.clone())
                .unwrap_or_default();
            relocations.push(ElfRelocation {
                addr: r_offset,
                kind: reloc_name((r_info & 0xffff_ffff) as u32),
                symbol,
                addend,
            });
        }
    }
    relocations.sort_by(|a, b| (a.addr, &a.kind, &a.symbol).cmp(&(b.addr, &b.kind, &b.symbol)));

    Ok(BinaryImage {
        kind,
        entry,
        sections,
        symbols,
        relocations,
    })
}
