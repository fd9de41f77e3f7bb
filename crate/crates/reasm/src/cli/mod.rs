//! Command-line orchestration: configuration, the full disassembly pipeline,
//! relation dumps, the relocation-based diff, and the stretch transform.
//!
//! Exit codes: 0 success, 1 input error, 2 pipeline assertion or diff
//! mismatch, 3 configuration error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::analyses::{self, Analyses, AnalysisOptions};
use crate::emit::{self, AsmProgram};
use crate::facts::io::{dump_facts, dump_relation, load_facts};
use crate::facts::FactBase;
use crate::frontend::{self, decoder};
use crate::ibi::{self, CodeLayout, ExtraTargets, IbiWeights};
use crate::symbolization::{
    self, Context, Decision, GroundTruth, SymWeights, SymbolicExpr, Symbolization,
};

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Pipeline(String),
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Pipeline(_) => 2,
            CliError::Config(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Pipeline(m) => write!(f, "pipeline error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub ibi: IbiWeights,
    pub sym: SymWeights,
    pub analysis: AnalysisOptions,
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            ibi: IbiWeights::default(),
            sym: SymWeights::default(),
            analysis: AnalysisOptions::default(),
            jobs: 1,
        }
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let int = || -> Result<i64, CliError> {
            value
                .parse()
                .map_err(|_| CliError::Config(format!("{key}: expected integer, got {value:?}")))
        };
        let boolean = || -> Result<bool, CliError> {
            match value {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(CliError::Config(format!(
                    "{key}: expected true/false, got {value:?}"
                ))),
            }
        };
        match key {
            "ibi.incoming_edge" => self.ibi.incoming_edge = int()?,
            "ibi.address_appears" => self.ibi.address_appears = int()?,
            "ibi.aligned_bonus" => self.ibi.aligned_bonus = int()?,
            "ibi.outgoing_edge" => self.ibi.outgoing_edge = int()?,
            "ibi.jump_table_overlap" => self.ibi.jump_table_overlap = int()?,
            "ibi.keep_threshold" => self.ibi.keep_threshold = int()?,
            "sym.pointer_to_insn" => self.sym.pointer_to_insn = int()?,
            "sym.data_access_match" => self.sym.data_access_match = int()?,
            "sym.symbol_array" => self.sym.symbol_array = int()?,
            "sym.pointed_by_array" => self.sym.pointed_by_array = int()?,
            "sym.aligned" => self.sym.aligned = int()?,
            "sym.string_default" => self.sym.string_default = int()?,
            "sym.long_string_bonus" => self.sym.long_string_bonus = int()?,
            "sym.access_conflict" => self.sym.access_conflict = int()?,
            "sym.special_section" => self.sym.special_section = int()?,
            "sym.in_range_base" => self.sym.in_range_base = int()?,
            "sym.used_for_address" => self.sym.used_for_address = int()?,
            "sym.uncommon_pointer_op" => self.sym.uncommon_pointer_op = int()?,
            "sym.compared_to_non_address" => self.sym.compared_to_non_address = int()?,
            "sym.data_keep_threshold" => self.sym.data_keep_threshold = int()?,
            "sym.code_threshold" => self.sym.code_threshold = int()?,
            "sym.special_sections" => {
                self.sym.special_sections = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.to_string())
                    .collect()
            }
            "step_limit" => self.analysis.step_limit = int()?,
            "kill_all_at_calls" => self.analysis.kill_all_at_calls = boolean()?,
            "jobs" => {
                self.jobs = int()? as usize;
            }
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.analysis.step_limit < 1 {
            return Err(CliError::Config("step_limit must be >= 1".to_string()));
        }
        if self.jobs < 1 {
            return Err(CliError::Config("jobs must be >= 1".to_string()));
        }
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k}={v}").unwrap();
        kv("ibi.incoming_edge", self.ibi.incoming_edge.to_string());
        kv("ibi.address_appears", self.ibi.address_appears.to_string());
        kv("ibi.aligned_bonus", self.ibi.aligned_bonus.to_string());
        kv("ibi.outgoing_edge", self.ibi.outgoing_edge.to_string());
        kv(
            "ibi.jump_table_overlap",
            self.ibi.jump_table_overlap.to_string(),
        );
        kv("ibi.keep_threshold", self.ibi.keep_threshold.to_string());
        kv("sym.pointer_to_insn", self.sym.pointer_to_insn.to_string());
        kv(
            "sym.data_access_match",
            self.sym.data_access_match.to_string(),
        );
        kv("sym.symbol_array", self.sym.symbol_array.to_string());
        kv("sym.pointed_by_array", self.sym.pointed_by_array.to_string());
        kv("sym.aligned", self.sym.aligned.to_string());
        kv("sym.string_default", self.sym.string_default.to_string());
        kv(
            "sym.long_string_bonus",
            self.sym.long_string_bonus.to_string(),
        );
        kv("sym.access_conflict", self.sym.access_conflict.to_string());
        kv("sym.special_section", self.sym.special_section.to_string());
        kv("sym.in_range_base", self.sym.in_range_base.to_string());
        kv("sym.used_for_address", self.sym.used_for_address.to_string());
        kv(
            "sym.uncommon_pointer_op",
            self.sym.uncommon_pointer_op.to_string(),
        );
        kv(
            "sym.compared_to_non_address",
            self.sym.compared_to_non_address.to_string(),
        );
        kv(
            "sym.data_keep_threshold",
            self.sym.data_keep_threshold.to_string(),
        );
        kv("sym.code_threshold", self.sym.code_threshold.to_string());
        kv("sym.special_sections", self.sym.special_sections.join(","));
        kv("step_limit", self.analysis.step_limit.to_string());
        kv("kill_all_at_calls", self.analysis.kill_all_at_calls.to_string());
        kv("jobs", self.jobs.to_string());
        s
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = PipelineConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

#[derive(Parser, Debug)]
#[command(name = "reasm", about = "Reassembleable disassembler for x64 ELF binaries")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Disassemble a binary (or fact directory) into reassembleable assembly.
    Disasm {
        input: PathBuf,
        #[arg(short)]
        output: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        dump_relations: Option<PathBuf>,
        #[arg(long)]
        recipe: Option<PathBuf>,
        #[arg(long)]
        from_facts: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Override a single config key (repeatable): --set sym.aligned=2
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Extract and dump the fact representation of a binary.
    Facts {
        elf: PathBuf,
        #[arg(short)]
        output: PathBuf,
    },
    /// Compare a symbolization report against a relocation-carrying twin.
    Diff { report: PathBuf, twin: PathBuf },
    /// Disassemble, then stretch (NOP groups + data padding) before printing.
    Stretch {
        input: PathBuf,
        #[arg(short)]
        output: Option<PathBuf>,
        #[arg(long)]
        from_facts: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
}

pub struct PipelineOutput {
    pub fb: FactBase,
    pub layout: CodeLayout,
    pub analyses: Analyses,
    pub sym: Symbolization,
    pub asm: AsmProgram,
}

fn load_input(input: &Path, from_facts: bool) -> Result<FactBase, CliError> {
    if from_facts || input.is_dir() {
        load_facts(input).map_err(|e| CliError::Input(e.to_string()))
    } else {
        frontend::extract_facts(input).map_err(|e| CliError::Input(e.to_string()))
    }
}

fn load_config(
    path: &Option<PathBuf>,
    jobs: Option<usize>,
    overrides: &[String],
) -> Result<PipelineConfig, CliError> {
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            PipelineConfig::parse(&text)?
        }
        None => PipelineConfig::default(),
    };
    for ov in overrides {
        let (k, v) = ov.split_once('=').ok_or_else(|| {
            CliError::Config(format!("--set expects key=value, got {ov:?}"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// The full pipeline: boundary identification, analyses, symbolization, then
/// one more boundary round seeded with jump-table targets, and printing.
pub fn run_pipeline(fb: FactBase, cfg: &PipelineConfig) -> Result<PipelineOutput, CliError> {
    let pipeline_err = |m: String| CliError::Pipeline(m);

    let (mut layout, _) = ibi::identify(&fb, &ExtraTargets::new(), &[], &cfg.ibi, cfg.jobs)
        .map_err(|e| pipeline_err(e.to_string()))?;
    let mut an = analyses::run(&fb, &layout, &cfg.analysis);
    let mut sym = symbolization::symbolize(&fb, &layout, &an, &cfg.sym);

    if !sym.tables.is_empty() {
        let mut extra = ExtraTargets::new();
        let mut spans = Vec::new();
        for t in &sym.tables {
            let n = sym
                .entries
                .iter()
                .filter(|e| e.reference == t.reference && e.addr >= t.start)
                .count() as u64;
            spans.push((t.start, t.start + n * t.entry_size));
        }
        extra.extend(sym.entries.iter().map(|e| e.target));
        let (l2, _) = ibi::identify(&fb, &extra, &spans, &cfg.ibi, cfg.jobs)
            .map_err(|e| pipeline_err(e.to_string()))?;
        layout = l2;
        an = analyses::run(&fb, &layout, &cfg.analysis);
        sym = symbolization::symbolize(&fb, &layout, &an, &cfg.sym);
    }

    let violations = layout.check(&fb);
    if !violations.is_empty() {
        return Err(pipeline_err(violations.join("; ")));
    }
    let asm = emit::print_asm(&fb, &layout, &sym).map_err(|e| pipeline_err(e.to_string()))?;
    Ok(PipelineOutput {
        fb,
        layout,
        analyses: an,
        sym,
        asm,
    })
}

fn write_out(path: &Option<PathBuf>, body: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, body)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn dump_all_relations(out: &PipelineOutput, dir: &Path) -> Result<(), CliError> {
    let io_err = |e: crate::facts::io::FactsError| CliError::Input(e.to_string());
    for (name, rows) in out.layout.to_relations() {
        dump_relation(dir, name, &rows).map_err(io_err)?;
    }
    for (name, rows) in out.analyses.to_relations() {
        dump_relation(dir, name, &rows).map_err(io_err)?;
    }
    for (name, rows) in out.sym.to_relations() {
        dump_relation(dir, name, &rows).map_err(io_err)?;
    }
    Ok(())
}

/// Parse one report line back into a bare decision (points are not recorded).
fn parse_report_line(line: &str) -> Option<Decision> {
    let mut f = line.split('\t');
    let addr = f.next()?.strip_prefix("0x")?;
    let addr = u64::from_str_radix(addr, 16).ok()?;
    let context = match f.next()? {
        "data" => Context::Data,
        "immediate" => Context::Immediate,
        "displacement" => Context::Displacement,
        _ => return None,
    };
    f.next()?; // symbol/literal marker, implied by the expression
    let expr = parse_expr(f.next()?)?;
    let total = f.next()?.parse().ok()?;
    Some(Decision {
        addr,
        context,
        expr,
        points: Vec::new(),
        total,
    })
}

fn parse_expr(s: &str) -> Option<SymbolicExpr> {
    if let Some(hex) = s.strip_prefix("0x") {
        let end = hex.find(|c: char| !c.is_ascii_hexdigit()).unwrap_or(hex.len());
        let target = u64::from_str_radix(&hex[..end], 16).ok()?;
        let rest = &hex[end..];
        if rest.is_empty() {
            return Some(SymbolicExpr::SymPlus { target, offset: 0 });
        }
        if let Some(r) = rest.strip_prefix("-0x") {
            let reference = u64::from_str_radix(r, 16).ok()?;
            return Some(SymbolicExpr::SymMinusSym { target, reference });
        }
        let offset: i64 = rest.parse().ok()?;
        return Some(SymbolicExpr::SymPlus { target, offset });
    }
    s.parse().ok().map(SymbolicExpr::Literal)
}

pub fn parse_report(text: &str) -> Vec<Decision> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(parse_report_line)
        .collect()
}

fn reloc_width(kind: &str) -> Option<u64> {
    match kind {
        "R_X86_64_64" => Some(8),
        "R_X86_64_PC32" | "R_X86_64_PLT32" | "R_X86_64_32" | "R_X86_64_32S" => Some(4),
        _ => None,
    }
}

fn decode_at(fb: &FactBase, addr: u64) -> Option<decoder::Decoded> {
    let window: Vec<u8> = (addr..addr + decoder::MAX_INSN_BYTES as u64)
        .map_while(|a| fb.data_bytes.get(&a).copied())
        .collect();
    decoder::decode(&window, addr)
}

fn operand_value(fb: &FactBase, addr: u64, context: Context) -> Option<u64> {
    let ins = fb.instructions.get(&addr)?;
    for op in ins.operand_ids().filter_map(|id| fb.operand(id)) {
        match (context, op) {
            (Context::Immediate, crate::facts::OperandPayload::Immediate { value }) => {
                return u64::try_from(*value).ok()
            }
            (Context::Displacement, crate::facts::OperandPayload::Indirect { disp, .. }) => {
                return u64::try_from(*disp).ok()
            }
            _ => {}
        }
    }
    None
}

/// Ground truth synthesized from a twin binary that kept its relocations:
/// every relocation maps to a (location, context, target) triple, and direct
/// branch / RIP-relative operands (which carry no relocation because the
/// assembler resolves them) are added from the decoded instructions.
pub fn build_truth(fb: &FactBase, decisions: &[Decision]) -> Result<Vec<GroundTruth>, CliError> {
    let mut truth = BTreeSet::new();
    let code_sites: BTreeSet<u64> = decisions
        .iter()
        .filter(|d| d.context != Context::Data)
        .map(|d| d.addr)
        .collect();

    for reloc in &fb.relocations {
        let Some(width) = reloc_width(&reloc.kind) else {
            continue;
        };
        let Some(sec) = fb.section_containing(reloc.addr) else {
            continue;
        };
        if sec.executable {
            let mut found = false;
            let lo = reloc.addr.saturating_sub(decoder::MAX_INSN_BYTES as u64);
            for &a in code_sites.range(lo..=reloc.addr) {
                let Some(d) = decode_at(fb, a) else { continue };
                let field = |span: Option<(u32, u32)>| {
                    span.map(|(off, len)| (a + off as u64, len as u64))
                };
                let context = if field(d.imm_span) == Some((reloc.addr, width)) {
                    Context::Immediate
                } else if field(d.disp_span) == Some((reloc.addr, width)) {
                    Context::Displacement
                } else {
                    continue;
                };
                if let Some(value) = operand_value(fb, a, context) {
                    // Record the relocation's symbol address S, not S+A:
                    // biased accesses put S+A outside the symbol's section.
                    let bias = match reloc.kind.as_str() {
                        // PC-relative addends also fold in the distance from
                        // the field to the end of the instruction.
                        "R_X86_64_PC32" | "R_X86_64_PLT32" => {
                            reloc.addend + (a + d.size as u64 - reloc.addr) as i64
                        }
                        _ => reloc.addend,
                    };
                    truth.insert(GroundTruth {
                        addr: a,
                        context,
                        target: (value as i64 - bias) as u64,
                    });
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(CliError::Input(format!(
                    "relocation at {:#x} does not land in any decided operand; \
                     twin binary does not match the report",
                    reloc.addr
                )));
            }
        } else if let Some(value) = fb.read_le(reloc.addr, width as u32) {
            truth.insert(GroundTruth {
                addr: reloc.addr,
                context: Context::Data,
                target: (value as i64 - reloc.addend) as u64,
            });
        }
    }

    // Assembler-resolved references: direct branches and RIP-relative
    // operands must be symbolic even though no relocation survives.
    for d in decisions {
        let Some(ins) = fb.instructions.get(&d.addr) else {
            continue;
        };
        match d.context {
            Context::Immediate => {
                let is_branch = decoder::is_cond_jump(&ins.opcode)
                    || decoder::is_uncond_jump(&ins.opcode)
                    || decoder::is_call(&ins.opcode);
                if !is_branch {
                    continue;
                }
                if let Some(target) = operand_value(fb, d.addr, Context::Immediate) {
                    if fb.in_any_section(target) {
                        truth.insert(GroundTruth {
                            addr: d.addr,
                            context: Context::Immediate,
                            target,
                        });
                    }
                }
            }
            Context::Displacement => {
                let rip = ins.operand_ids().filter_map(|id| fb.operand(id)).any(|op| {
                    matches!(
                        op,
                        crate::facts::OperandPayload::Indirect { rip: true, .. }
                    )
                });
                if !rip {
                    continue;
                }
                if let Some(target) = operand_value(fb, d.addr, Context::Displacement) {
                    if fb.in_any_section(target) {
                        truth.insert(GroundTruth {
                            addr: d.addr,
                            context: Context::Displacement,
                            target,
                        });
                    }
                }
            }
            Context::Data => {}
        }
    }
    Ok(truth.into_iter().collect())
}

pub fn cmd_diff(report_path: &Path, twin_path: &Path) -> Result<(String, bool), CliError> {
    let text = std::fs::read_to_string(report_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", report_path.display())))?;
    let decisions = parse_report(&text);
    let fb = frontend::extract_facts(twin_path).map_err(|e| CliError::Input(e.to_string()))?;
    if fb.relocations.is_empty() {
        return Err(CliError::Input(format!(
            "{}: twin binary carries no relocations",
            twin_path.display()
        )));
    }
    let truth = build_truth(&fb, &decisions)?;
    let (counts, detail) = symbolization::diff_ground_truth(&decisions, &truth, &fb)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = String::new();
    for line in &detail {
        writeln!(out, "{line}").unwrap();
    }
    writeln!(
        out,
        "FP={} FN={} WS={}",
        counts.false_positives, counts.false_negatives, counts.wrong_section
    )
    .unwrap();
    let clean = counts.false_positives == 0
        && counts.false_negatives == 0
        && counts.wrong_section == 0;
    Ok((out, clean))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Disasm {
            input,
            output,
            report,
            dump_relations,
            recipe,
            from_facts,
            config,
            jobs,
            overrides,
            print_config,
        } => {
            let cfg = load_config(&config, jobs, &overrides)?;
            if print_config {
                print!("{}", cfg.render());
                return Ok(());
            }
            let fb = load_input(&input, from_facts)?;
            let out = run_pipeline(fb, &cfg)?;
            write_out(&output, &out.asm.render())?;
            if let Some(p) = &report {
                write_out(&Some(p.clone()), &symbolization::render_report(&out.sym))?;
            }
            if let Some(p) = &recipe {
                write_out(&Some(p.clone()), &emit::link_recipe(&out.fb))?;
            }
            if let Some(dir) = &dump_relations {
                dump_all_relations(&out, dir)?;
            }
            Ok(())
        }
        Cmd::Facts { elf, output } => {
            let fb = frontend::extract_facts(&elf).map_err(|e| CliError::Input(e.to_string()))?;
            dump_facts(&fb, &output).map_err(|e| CliError::Input(e.to_string()))
        }
        Cmd::Diff { report, twin } => {
            let (text, clean) = cmd_diff(&report, &twin)?;
            print!("{text}");
            if clean {
                Ok(())
            } else {
                Err(CliError::Pipeline("symbolization differs from ground truth".into()))
            }
        }
        Cmd::Stretch {
            input,
            output,
            from_facts,
            config,
            jobs,
            overrides,
        } => {
            let cfg = load_config(&config, jobs, &overrides)?;
            let fb = load_input(&input, from_facts)?;
            let out = run_pipeline(fb, &cfg)?;
            let stretched = emit::stretch(&out.asm, &out.sym);
            write_out(&output, &stretched.render())
        }
    }
}

pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::RelocationFact;
    use crate::testutil::{jump_table_fixture, loop_bound_fixture, loop_fixture};

    #[test]
    fn config_round_trips_through_render_and_parse() {
        let mut cfg = PipelineConfig::default();
        cfg.set("sym.aligned", "7").unwrap();
        cfg.set("ibi.keep_threshold", "-1").unwrap();
        cfg.set("kill_all_at_calls", "true").unwrap();
        cfg.set("jobs", "4").unwrap();
        let reparsed = PipelineConfig::parse(&cfg.render()).unwrap();
        assert_eq!(reparsed.render(), cfg.render());
    }

    #[test]
    fn bad_config_reports_exit_code_three() {
        for (k, v) in [
            ("step_limit", "0"),
            ("jobs", "0"),
            ("sym.aligned", "x"),
            ("no.such.key", "1"),
        ] {
            let err = PipelineConfig::default().set(k, v).unwrap_err();
            assert_eq!(err.exit_code(), 3, "{k}={v}");
        }
        let err = PipelineConfig::parse("just-a-word\n").unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn config_ignores_comments_and_blank_lines() {
        let cfg = PipelineConfig::parse("# comment\n\nsym.code_threshold = 2\n").unwrap();
        assert_eq!(cfg.sym.code_threshold, 2);
    }

    #[test]
    fn special_sections_parse_as_comma_list() {
        let mut cfg = PipelineConfig::default();
        cfg.set("sym.special_sections", ".got,.plt").unwrap();
        assert_eq!(cfg.sym.special_sections, vec![".got", ".plt"]);
    }

    #[test]
    fn report_expressions_parse_back() {
        let cases = [
            ("42", SymbolicExpr::Literal(42)),
            ("-624", SymbolicExpr::Literal(-624)),
            ("0x402d40", SymbolicExpr::SymPlus { target: 0x402d40, offset: 0 }),
            ("0x402d40+168", SymbolicExpr::SymPlus { target: 0x402d40, offset: 168 }),
            ("0x402d40-8", SymbolicExpr::SymPlus { target: 0x402d40, offset: -8 }),
            (
                "0x47db3f-0x47da93",
                SymbolicExpr::SymMinusSym { target: 0x47db3f, reference: 0x47da93 },
            ),
        ];
        for (s, want) in cases {
            assert_eq!(parse_expr(s), Some(want), "{s}");
        }
    }

    #[test]
    fn report_round_trips_through_parse() {
        let fb = loop_bound_fixture();
        let cfg = PipelineConfig::default();
        let out = run_pipeline(fb, &cfg).unwrap();
        let text = symbolization::render_report(&out.sym);
        let parsed = parse_report(&text);
        assert_eq!(parsed.len(), out.sym.decisions.len());
        for (p, d) in parsed.iter().zip(&out.sym.decisions) {
            assert_eq!((p.addr, p.context, p.expr), (d.addr, d.context, d.expr));
        }
    }

    #[test]
    fn pipeline_is_deterministic_across_jobs() {
        for jobs in [1usize, 4] {
            let mut cfg = PipelineConfig::default();
            cfg.jobs = jobs;
            let a = run_pipeline(loop_fixture(), &cfg).unwrap();
            let b = run_pipeline(loop_fixture(), &cfg).unwrap();
            assert_eq!(a.asm.render(), b.asm.render());
        }
        let mut c1 = PipelineConfig::default();
        let mut c4 = PipelineConfig::default();
        c1.jobs = 1;
        c4.jobs = 4;
        let a = run_pipeline(jump_table_fixture(false), &c1).unwrap();
        let b = run_pipeline(jump_table_fixture(false), &c4).unwrap();
        assert_eq!(a.asm.render(), b.asm.render());
    }

    #[test]
    fn pipeline_reiterates_over_jump_tables() {
        let cfg = PipelineConfig::default();
        let out = run_pipeline(jump_table_fixture(false), &cfg).unwrap();
        assert_eq!(out.sym.tables.len(), 1);
        let starts: Vec<u64> = out.layout.blocks.iter().map(|b| b.start).collect();
        for target in [0x47db3f, 0x47db36, 0x47db2b, 0x47db20] {
            assert!(
                out.layout
                    .blocks
                    .iter()
                    .any(|b| b.members.contains(&target)),
                "table target {target:#x} not in any block: {starts:x?}"
            );
        }
        let text = out.asm.render();
        assert!(text.contains(".byte .L_47DB3F-.L_47DA93"), "{text}");
    }

    #[test]
    fn truth_from_relocations_and_branches_diffs_clean() {
        let cfg = PipelineConfig::default();
        let out = run_pipeline(loop_fixture(), &cfg).unwrap();
        let mut fb = out.fb.clone();
        // Twin relocations: the three absolute operands of the loop and the
        // one pointer slot the resolver keeps (the later slots lose to
        // accidental string candidates in this fixture).
        for (addr, kind) in [
            (0x416c31u64, "R_X86_64_32S"), // mov R10,[0x45D328] disp
            (0x416c4au64, "R_X86_64_32S"), // mov RSI,[RBX+0x45D328] disp
            (0x416c4fu64, "R_X86_64_32"),  // mov EDX,0x45CB23 imm
        ] {
            fb.relocations.push(RelocationFact {
                addr,
                kind: kind.to_string(),
                symbol: String::new(),
                addend: 0,
            });
        }
        fb.relocations.push(RelocationFact {
            addr: 0x45d328,
            kind: "R_X86_64_64".to_string(),
            symbol: String::new(),
            addend: 0,
        });
        let truth = build_truth(&fb, &out.sym.decisions).unwrap();
        let (counts, detail) =
            symbolization::diff_ground_truth(&out.sym.decisions, &truth, &fb).unwrap();
        assert_eq!(
            (counts.false_positives, counts.false_negatives, counts.wrong_section),
            (0, 0, 0),
            "{detail:?}"
        );
    }

    #[test]
    fn missing_relocation_shows_as_false_positive() {
        let cfg = PipelineConfig::default();
        let out = run_pipeline(loop_fixture(), &cfg).unwrap();
        let mut fb = out.fb.clone();
        // Only one of the absolute operands gets a relocation: the other two
        // symbolic decisions become false positives.
        fb.relocations.push(RelocationFact {
            addr: 0x416c31,
            kind: "R_X86_64_32S".to_string(),
            symbol: String::new(),
            addend: 0,
        });
        let truth = build_truth(&fb, &out.sym.decisions).unwrap();
        let (counts, _) =
            symbolization::diff_ground_truth(&out.sym.decisions, &truth, &fb).unwrap();
        assert!(counts.false_positives > 0);
    }

    #[test]
    fn mismatched_twin_is_an_input_error() {
        let cfg = PipelineConfig::default();
        let out = run_pipeline(loop_fixture(), &cfg).unwrap();
        let mut fb = out.fb.clone();
        fb.relocations.push(RelocationFact {
            addr: 0x416c30, // not an operand field start of any decision site
            kind: "R_X86_64_32S".to_string(),
            symbol: String::new(),
            addend: 0,
        });
        let err = build_truth(&fb, &out.sym.decisions).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
