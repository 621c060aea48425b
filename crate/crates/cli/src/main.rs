mod packets;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pipecat::allocation::{
    builtin_target, builtin_target_names, emit_big_m, packing_target, resolve_grammar, table_deps,
    packing_source, AllocationReport, Mode, TargetSpec,
};
use pipecat::benchmarks::{benchmark, BENCHMARKS};
use pipecat::compgraph;
use pipecat::driver::{
    compile, front, synthesize_program, Compilation, CompileError, CompileOptions, Front,
};
use pipecat::ir::program_to_string;
use pipecat::preprocess::{preprocess_action, PreprocessOptions};
use pipecat::sim::{interpret_pipeline, interpret_source, observable, PacketState, SimError};
use pipecat::synthesis::{AluGrammar, Grammars};

use packets::parse_packets;

#[derive(Parser)]
#[command(
    name = "pipecat",
    version,
    about = "Compile transactional packet programs onto match-action pipelines"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Emit {
    Rewritten,
    Deps,
    Preprocessed,
    Compgraph,
    Lp,
    Alloc,
}

#[derive(Args, Clone, Debug)]
struct Common {
    /// Program source (.pcat).
    program: PathBuf,
    /// Target file, or one of the builtin targets.
    #[arg(long, env = "PIPECAT_TARGET", default_value = "tofino")]
    target: String,
    /// Replace the target's stateful or stateless grammar (file or builtin name).
    #[arg(long = "alu-grammar", value_name = "FILE")]
    alu_grammar: Vec<String>,
    /// Word width used to verify synthesized ALUs and to simulate.
    #[arg(long = "verify-bits", default_value_t = 4,
          value_parser = clap::value_parser!(u32).range(1..=16))]
    verify_bits: u32,
    #[arg(long, default_value = "optimal", value_parser = parse_mode)]
    mode: Mode,
    /// Keep branches instead of rewriting them into tables.
    #[arg(long)]
    no_rewrite: bool,
    /// Disable folding stateless nodes into stateful ALUs.
    #[arg(long)]
    no_fold: bool,
    /// Disable packing predecessors into stateful ALUs.
    #[arg(long)]
    no_pack: bool,
    /// Disable constant folding and dead-code elimination.
    #[arg(long)]
    no_simplify: bool,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Cmd {
    /// Run all phases and report stage usage.
    Compile {
        #[command(flatten)]
        common: Common,
        /// Also print these artifacts after the report.
        #[arg(long, value_enum, value_delimiter = ',')]
        emit: Vec<Emit>,
    },
    /// Rewrite and synthesize without allocating.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// Run all phases and print the stage-by-stage placement.
    Allocate {
        #[command(flatten)]
        common: Common,
    },
    /// Print intermediate artifacts only.
    Emit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',', required = true)]
        emit: Vec<Emit>,
    },
    /// Compile, then run packets through the pipeline and the source.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// One packet per line: `name=value` pairs, `table:<t>=<k>` for match outcomes.
        #[arg(long)]
        packets: PathBuf,
    },
    /// Print a shipped benchmark or the adversarial packing construction.
    GenBench {
        /// Benchmark name, or `packing`.
        name: Option<String>,
        #[arg(long)]
        list: bool,
        /// Chain length for `packing`.
        #[arg(long)]
        n: Option<usize>,
        /// Tables per stage for `packing`; defaults to 2n+1.
        #[arg(long)]
        w: Option<usize>,
        /// Write the matching target file here.
        #[arg(long = "target-out")]
        target_out: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Resource(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Resource(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Resource(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<CompileError> for Failure {
    fn from(e: CompileError) -> Self {
        match e.exit_code() {
            1 => Failure::Usage(e.to_string()),
            2 => Failure::Resource(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

type Run = Result<String, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn options(c: &Common) -> CompileOptions {
    CompileOptions {
        rewrite: !c.no_rewrite,
        fold: !c.no_fold,
        pack: !c.no_pack,
        simplify: !c.no_simplify,
        bits: c.verify_bits,
        mode: c.mode,
        ..CompileOptions::default()
    }
}

fn load_target(c: &Common) -> Result<(TargetSpec, Grammars), Failure> {
    let usage = |e: pipecat::allocation::TargetError| Failure::Usage(e.to_string());
    let (t, dir) = match builtin_target(&c.target) {
        Some(t) => (t, None),
        None => {
            let path = Path::new(&c.target);
            if !path.exists() {
                return Err(Failure::Usage(format!(
                    "target `{}` is neither a file nor a builtin ({})",
                    c.target,
                    builtin_target_names().join(", ")
                )));
            }
            let t = TargetSpec::load(path).map_err(usage)?;
            (t, path.parent().map(Path::to_path_buf))
        }
    };
    let mut g = t.grammars(dir.as_deref()).map_err(usage)?;
    for r in &c.alu_grammar {
        match resolve_grammar(r, None).map_err(usage)? {
            AluGrammar::Stateful(s) => g.stateful = s,
            AluGrammar::Stateless(s) => g.stateless = s,
        }
    }
    Ok((t, g))
}

fn json_out(v: Value) -> String {
    let mut s = serde_json::to_string_pretty(&v).expect("json");
    s.push('\n');
    s
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("json")
}

fn compiled(c: &Common) -> Result<(TargetSpec, Compilation), Failure> {
    let src = read(&c.program)?;
    let (t, g) = load_target(c)?;
    let comp = compile(&src, &t, &g, &options(c))?;
    Ok((t, comp))
}

fn cmd_compile(c: &Common, emit: &[Emit]) -> Run {
    let (_, comp) = compiled(c)?;
    let out = match c.format {
        Format::Text => comp.report.to_string(),
        Format::Json => json_out(to_value(&comp.report)),
    };
    if emit.is_empty() {
        return Ok(out);
    }
    let (text, mut json) = artifacts(c, Some(&comp), &comp.front, emit)?;
    Ok(match c.format {
        Format::Text => out + &text,
        Format::Json => {
            json.insert("report".into(), to_value(&comp.report));
            json_out(Value::Object(json))
        }
    })
}

fn cmd_analyze(c: &Common) -> Run {
    let src = read(&c.program)?;
    let (_, g) = load_target(c)?;
    let opts = options(c);
    let f = front(&src, &opts)?;
    let synth = synthesize_program(&f.program, &g, &opts)?;
    let deps = table_deps(&f.program);
    let applied = f.program.applied_tables();
    let actions: Vec<Value> = synth
        .graphs
        .values()
        .map(|rg| {
            json!({
                "action": rg.action,
                "depth": rg.depth(),
                "stateful_alus": rg.stateful_count(),
                "stateless_alus": rg.stateless_count(),
            })
        })
        .collect();
    if c.format == Format::Json {
        let table_deps: Vec<Value> = deps
            .iter()
            .map(|d| {
                json!({
                    "from": applied[d.from],
                    "to": applied[d.to],
                    "kind": d.kind.name(),
                    "fields": d.fields,
                })
            })
            .collect();
        return Ok(json_out(json!({
            "rewritten_tables": to_value(&f.rewrite.tables),
            "rewrite_skipped": f.rewrite.skipped,
            "guarded_deps": dep_records(&f),
            "table_deps": table_deps,
            "actions": actions,
        })));
    }
    let mut s = String::new();
    for t in &f.rewrite.tables {
        let _ = writeln!(
            s,
            "rewritten table {} keyed on [{}], {} entries",
            t.name,
            t.keys.join(", "),
            t.entries
        );
    }
    for r in &f.rewrite.skipped {
        let _ = writeln!(s, "rewrite skipped: {r}");
    }
    let _ = writeln!(s, "guarded dependencies:");
    for d in &f.rewrite.deps {
        let _ = writeln!(s, "  {d}");
    }
    let _ = writeln!(s, "table dependencies:");
    for d in &deps {
        let _ = writeln!(
            s,
            "  {} -> {} {} [{}]",
            applied[d.from],
            applied[d.to],
            d.kind,
            d.fields.join(", ")
        );
    }
    let _ = writeln!(s, "actions:");
    for rg in synth.graphs.values() {
        let _ = writeln!(
            s,
            "  {} depth {} ({} stateful, {} stateless)",
            rg.action,
            rg.depth(),
            rg.stateful_count(),
            rg.stateless_count()
        );
    }
    Ok(s)
}

fn cmd_allocate(c: &Common) -> Run {
    let (_, comp) = compiled(c)?;
    Ok(match c.format {
        Format::Text => comp.report.allocation.to_string(),
        Format::Json => json_out(to_value(&comp.report.allocation)),
    })
}

fn cmd_emit(c: &Common, emit: &[Emit]) -> Run {
    let needs_alloc = emit.iter().any(|e| matches!(e, Emit::Lp | Emit::Alloc));
    let (text, json) = if needs_alloc {
        let (_, comp) = compiled(c)?;
        artifacts(c, Some(&comp), &comp.front, emit)?
    } else {
        let src = read(&c.program)?;
        load_target(c)?;
        artifacts(c, None, &front(&src, &options(c))?, emit)?
    };
    Ok(match c.format {
        Format::Text => text,
        Format::Json => json_out(Value::Object(json)),
    })
}

fn dep_records(f: &Front) -> Vec<Value> {
    f.rewrite
        .deps
        .iter()
        .map(|d| {
            json!({
                "kind": d.kind.to_string(),
                "variable": d.var,
                "sites": [d.from_label, d.to_label],
                "guard": d.guard.to_string(),
                "status": if d.kept { "kept" } else { "pruned" },
            })
        })
        .collect()
}

fn artifacts(
    c: &Common,
    comp: Option<&Compilation>,
    f: &Front,
    emit: &[Emit],
) -> Result<(String, serde_json::Map<String, Value>), Failure> {
    let popts = PreprocessOptions {
        simplify: !c.no_simplify,
        bits: c.verify_bits,
    };
    let applied_actions = || {
        let mut names: Vec<String> = Vec::new();
        for tn in f.program.applied_tables() {
            if let Some(tb) = f.program.table(&tn) {
                for a in &tb.actions {
                    if !names.contains(a) {
                        names.push(a.clone());
                    }
                }
            }
        }
        names
    };
    let mut text = String::new();
    let mut json = serde_json::Map::new();
    for e in emit {
        match e {
            Emit::Rewritten => {
                let p = program_to_string(&f.program);
                json.insert("rewritten".into(), json!(p));
                text.push_str(&p);
            }
            Emit::Deps => {
                json.insert("deps".into(), json!(dep_records(f)));
                for d in &f.rewrite.deps {
                    let _ = writeln!(text, "{d}");
                }
            }
            Emit::Preprocessed => {
                let mut m = serde_json::Map::new();
                for a in applied_actions() {
                    let act = f.program.action(&a).expect("applied action exists");
                    let pp = preprocess_action(&f.program, act, popts);
                    let lines: Vec<String> = pp.code.iter().map(|x| x.to_string()).collect();
                    m.insert(a.clone(), json!(lines));
                    let _ = writeln!(text, "{pp}");
                }
                json.insert("preprocessed".into(), Value::Object(m));
            }
            Emit::Compgraph => {
                let mut m = serde_json::Map::new();
                for a in applied_actions() {
                    let act = f.program.action(&a).expect("applied action exists");
                    let dot = compgraph::build(&preprocess_action(&f.program, act, popts)).to_dot();
                    text.push_str(&dot);
                    m.insert(a, json!(dot));
                }
                json.insert("compgraph".into(), Value::Object(m));
            }
            Emit::Lp => {
                let comp = comp.expect("allocation artifacts need a compilation");
                let lp = emit_big_m(&comp.placement.constraints);
                text.push_str(&lp);
                json.insert("lp".into(), json!(lp));
            }
            Emit::Alloc => {
                let comp = comp.expect("allocation artifacts need a compilation");
                let r: &AllocationReport = &comp.report.allocation;
                text.push_str(&r.to_string());
                json.insert("alloc".into(), to_value(r));
            }
        }
    }
    Ok((text, json))
}

fn cmd_simulate(c: &Common, packets: &Path) -> Run {
    let (_, comp) = compiled(c)?;
    let src = &comp.front.source;
    let lines = parse_packets(&read(packets)?, src).map_err(Failure::Usage)?;
    let cp = comp.pipeline();
    let sim_err = |line: usize, e: SimError| match e {
        SimError::UnmatchedTable(_) | SimError::BadOutcome { .. } => {
            Failure::Usage(format!("packet on line {line}: {e}"))
        }
        _ => Failure::Internal(format!("packet on line {line}: {e}")),
    };
    let mut state = PacketState::initial(src).state;
    let mut text = String::new();
    let mut records = Vec::new();
    for l in &lines {
        let mut pkt = PacketState {
            fields: l.fields.iter().cloned().collect(),
            state: state.clone(),
        };
        pkt.state.extend(l.state.iter().cloned());
        let want = interpret_source(src, &pkt, &l.outcomes, c.verify_bits)
            .map_err(|e| sim_err(l.line, e))?;
        let got = interpret_pipeline(&cp, &pkt, &l.outcomes, c.verify_bits)
            .map_err(|e| sim_err(l.line, e))?;
        let got = observable(src, &got);
        if observable(src, &want) != got {
            return Err(Failure::Internal(format!(
                "packet on line {}: pipeline {:?} differs from source {:?}",
                l.line,
                got,
                observable(src, &want)
            )));
        }
        let fields: Vec<String> = got.fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let st: Vec<String> = got.state.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(
            text,
            "packet {}: {} | {}",
            l.line,
            fields.join(" "),
            st.join(" ")
        );
        records.push(json!({"line": l.line, "fields": got.fields, "state": got.state}));
        state = got.state;
    }
    Ok(match c.format {
        Format::Text => text,
        Format::Json => json_out(json!(records)),
    })
}

fn cmd_gen_bench(
    name: Option<&str>,
    list: bool,
    n: Option<usize>,
    w: Option<usize>,
    target_out: Option<&Path>,
) -> Run {
    if list || name.is_none() {
        let mut s: String = BENCHMARKS.iter().map(|b| format!("{}\n", b.name)).collect();
        s.push_str("packing\n");
        return Ok(s);
    }
    let name = name.unwrap_or_default();
    if name == "packing" {
        let n = n.ok_or_else(|| Failure::Usage("packing needs --n".into()))?;
        let w = w.unwrap_or(2 * n + 1);
        if n == 0 || w <= 2 * n {
            return Err(Failure::Usage(format!(
                "packing needs n >= 1 and w > 2n (got n={n}, w={w})"
            )));
        }
        if let Some(path) = target_out {
            std::fs::write(path, packing_target(n, w).to_toml())
                .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
        }
        return Ok(packing_source(n, w));
    }
    if target_out.is_some() {
        return Err(Failure::Usage(
            "--target-out only applies to packing".into(),
        ));
    }
    benchmark(name)
        .map(|b| b.source.to_string())
        .ok_or_else(|| Failure::Usage(format!("unknown benchmark `{name}`")))
}

fn run(cli: Cli) -> Run {
    match &cli.cmd {
        Cmd::Compile { common, emit } => cmd_compile(common, emit),
        Cmd::Analyze { common } => cmd_analyze(common),
        Cmd::Allocate { common } => cmd_allocate(common),
        Cmd::Emit { common, emit } => cmd_emit(common, emit),
        Cmd::Simulate { common, packets } => cmd_simulate(common, packets),
        Cmd::GenBench {
            name,
            list,
            n,
            w,
            target_out,
        } => cmd_gen_bench(name.as_deref(), *list, *n, *w, target_out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(out)) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
        Err(_) => ExitCode::from(3),
    }
}
