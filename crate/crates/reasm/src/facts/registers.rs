//! The x64 register table with sub-register aliasing metadata.
//!
//! Operand facts carry the register name as encoded (EDX, AL, ...); the
//! analyses normalize through `canonical` so 32-bit (and narrower) writes
//! count against the full 64-bit register.

pub const NONE: &str = "NONE";
pub const UNKNOWN: &str = "Unknown";
pub const RIP: &str = "RIP";

pub const CANONICAL: [&str; 16] = [
    "RAX", "RCX", "RDX", "RBX", "RSP", "RBP", "RSI", "RDI", "R8", "R9", "R10", "R11", "R12",
    "R13", "R14", "R15",
];

const ALIASES: [[&str; 4]; 16] = [
    ["RAX", "EAX", "AX", "AL"],
    ["RCX", "ECX", "CX", "CL"],
    ["RDX", "EDX", "DX", "DL"],
    ["RBX", "EBX", "BX", "BL"],
    ["RSP", "ESP", "SP", "SPL"],
    ["RBP", "EBP", "BP", "BPL"],
    ["RSI", "ESI", "SI", "SIL"],
    ["RDI", "EDI", "DI", "DIL"],
    ["R8", "R8D", "R8W", "R8B"],
    ["R9", "R9D", "R9W", "R9B"],
    ["R10", "R10D", "R10W", "R10B"],
    ["R11", "R11D", "R11W", "R11B"],
    ["R12", "R12D", "R12W", "R12B"],
    ["R13", "R13D", "R13W", "R13B"],
    ["R14", "R14D", "R14W", "R14B"],
    ["R15", "R15D", "R15W", "R15B"],
];

/// High-byte legacy registers alias the same canonical register as their
/// low-byte siblings.
const HIGH_BYTE: [(&str, &str); 4] = [("AH", "RAX"), ("CH", "RCX"), ("DH", "RDX"), ("BH", "RBX")];

/// Map any register name to its canonical 64-bit name. `NONE`, `Unknown` and
/// `RIP` map to themselves.
pub fn canonical(name: &str) -> Option<&'static str> {
    if name == NONE {
        return Some(NONE);
    }
    if name == UNKNOWN {
        return Some(UNKNOWN);
    }
    if name == RIP {
        return Some(RIP);
    }
    for row in &ALIASES {
        if row.contains(&name) {
            return Some(row[0]);
        }
    }
    HIGH_BYTE
        .iter()
        .find(|(h, _)| *h == name)
        .map(|(_, c)| *c)
}

pub fn is_register(name: &str) -> bool {
    name != NONE && name != UNKNOWN && canonical(name).is_some()
}

/// Register name for an encoded 4-bit register number at a given operand size.
/// `rex` selects the SPL/BPL/SIL/DIL byte registers over AH/CH/DH/BH.
pub fn name_for(num: u8, size_bytes: u8, rex: bool) -> &'static str {
    let num = num as usize & 0xf;
    match size_bytes {
        8 => ALIASES[num][0],
        4 => ALIASES[num][1],
        2 => ALIASES[num][2],
        1 => {
            if !rex && (4..8).contains(&num) {
                ["AH", "CH", "DH", "BH"][num - 4]
            } else {
                ALIASES[num][3]
            }
        }
        _ => panic!("bad register size {size_bytes}"),
    }
}

/// SysV AMD64 calling convention: registers a call may clobber.
pub const CALLER_SAVED: [&str; 9] = [
    "RAX", "RCX", "RDX", "RSI", "RDI", "R8", "R9", "R10", "R11",
];

pub fn is_caller_saved(canonical_name: &str) -> bool {
    CALLER_SAVED.contains(&canonical_name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aliasing() {
        assert_eq!(canonical("EDX"), Some("RDX"));
        assert_eq!(canonical("AL"), Some("RAX"));
        assert_eq!(canonical("AH"), Some("RAX"));
        assert_eq!(canonical("R8D"), Some("R8"));
        assert_eq!(canonical("RBX"), Some("RBX"));
        assert_eq!(canonical("XMM0"), None);
    }

    #[test]
    fn encoded_names() {
        assert_eq!(name_for(0, 8, false), "RAX");
        assert_eq!(name_for(2, 4, false), "EDX");
        assert_eq!(name_for(4, 1, false), "AH");
        assert_eq!(name_for(4, 1, true), "SPL");
        assert_eq!(name_for(12, 8, true), "R12");
    }
}
