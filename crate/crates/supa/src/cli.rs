//! Command-line front end.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::andersen::AndersenConfig;
use crate::ir::parse_program;
use crate::memssa::dump_memssa;
use crate::oracle::solve_fs_oracle;
use crate::supa::{results_json, Engine, PtsResult, QueryKey, StagePlan, Stats};
use crate::svfg::{export_dot, export_json};
use crate::uninit::{classify_sets, classify_uninit, generate_queries, instrument_uao};
use crate::Analysis;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DIAGNOSTICS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "supa", about = "Demand-driven flow- and context-sensitive points-to queries")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Input program in .svfir format.
    #[arg(long)]
    pub file: PathBuf,
    /// Comma-separated stages, e.g. `fscs:10000,fs:10000`; `inf` for no budget.
    #[arg(long, default_value = "fs:10000")]
    pub stages: String,
    /// Call-string length limit for context-sensitive stages.
    #[arg(long, default_value_t = 3)]
    pub cxt_depth: usize,
    /// Worker threads for answering queries.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    /// Answer every query from scratch.
    #[arg(long)]
    pub no_cache: bool,
    /// Write to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Answer a query for every load in the program.
    Analyze(Common),
    /// Answer explicit queries such as `l16:%z` or `[l4]l5:%z`.
    Query {
        #[command(flatten)]
        common: Common,
        #[arg(long, required = true)]
        query: Vec<String>,
    },
    /// Instrument with uninitialized markers and classify every relevant load.
    Uninit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        compare_oracle: bool,
    },
    /// Whole-program flow-sensitive points-to of every load.
    Oracle(Common),
    /// Print an intermediate structure.
    Dump {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = DumpKind::SvfgDot)]
        kind: DumpKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DumpKind {
    SvfgDot,
    SvfgJson,
    Ander,
    Memssa,
}

struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn load(common: &Common) -> Result<crate::ir::Program, Failure> {
    let text = std::fs::read_to_string(&common.file)
        .map_err(|e| usage(format!("cannot read {}: {e}", common.file.display())))?;
    parse_program(&text).map_err(|d| Failure { code: EXIT_DIAGNOSTICS, message: d.to_string() })
}

fn engine<'a>(a: &'a Analysis, common: &Common) -> Engine<'a> {
    Engine::new(a).with_cache(!common.no_cache).with_max_depth(common.cxt_depth)
}

fn stats_json(stats: &Stats) -> serde_json::Value {
    json!({
        "queries": stats.queries,
        "resolved": stats.resolved,
        "fallbacks": stats.fallbacks,
        "strongUpdates": stats.strong_updates,
    })
}

fn timing_line(stats: &Stats) -> String {
    format!(
        "{} queries in {:.3} ms (mean {:.3} us), {} edges walked, {} cache hits",
        stats.queries,
        stats.elapsed.as_secs_f64() * 1e3,
        stats.mean_time().as_secs_f64() * 1e6,
        stats.edges_walked,
        stats.cache_hits
    )
}

fn answer(
    a: &Analysis,
    common: &Common,
    keys: &[QueryKey],
    err: &mut dyn Write,
) -> Result<(Vec<PtsResult>, Stats), Failure> {
    let plan: StagePlan = common.stages.parse().map_err(usage)?;
    let (results, stats) = engine(a, common).answer_all(keys, &plan, common.threads as usize);
    let _ = writeln!(err, "{}", timing_line(&stats));
    Ok((results, stats))
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json")
}

fn ander_json(a: &Analysis) -> serde_json::Value {
    let mut vars = serde_json::Map::new();
    for (i, info) in a.index.vars.iter().enumerate() {
        let pts = a.ander.pts_var(crate::ir::VarId(i as u32));
        let f = &a.index.program.functions[info.func].name;
        let names: Vec<String> = pts.iter().map(|&o| a.ander.objects.display(o)).collect();
        vars.insert(format!("{f}::%{}", info.name), json!(names));
    }
    let mut objs = serde_json::Map::new();
    for o in a.ander.objects.ids() {
        let pts = a.ander.pts_obj(o);
        if !pts.is_empty() {
            let names: Vec<String> = pts.iter().map(|&p| a.ander.objects.display(p)).collect();
            objs.insert(a.ander.objects.display(o), json!(names));
        }
    }
    let mut cg = serde_json::Map::new();
    for (cs, gs) in &a.ander.call_graph {
        let names: Vec<&str> = gs.iter().map(|&g| a.index.program.functions[g].name.as_str()).collect();
        cg.insert(a.index.label(*cs).to_string(), json!(names));
    }
    json!({ "vars": vars, "objects": objs, "callGraph": cg })
}

fn execute(cli: &Cli, err: &mut dyn Write) -> Result<(String, Option<PathBuf>), Failure> {
    match &cli.command {
        Command::Analyze(common) => {
            let a = Analysis::new(load(common)?, AndersenConfig::default());
            let keys = engine(&a, common).load_queries();
            let (results, stats) = answer(&a, common, &keys, err)?;
            let rows: Vec<_> = keys.iter().zip(&results).map(|(k, r)| r.to_json(&a, k)).collect();
            Ok((pretty(&json!({ "results": rows, "stats": stats_json(&stats) })), common.output.clone()))
        }
        Command::Query { common, query } => {
            let a = Analysis::new(load(common)?, AndersenConfig::default());
            let eng = engine(&a, common);
            let keys = query.iter().map(|q| eng.parse_query(q)).collect::<Result<Vec<_>, _>>().map_err(usage)?;
            let (results, _) = answer(&a, common, &keys, err)?;
            let text = if keys.len() == 1 {
                pretty(&results[0].to_json(&a, &keys[0]))
            } else {
                results_json(&a, &keys, &results)
            };
            Ok((text, common.output.clone()))
        }
        Command::Uninit { common, compare_oracle } => {
            let (program, uao) = instrument_uao(&load(common)?);
            let a = Analysis::new(program, AndersenConfig::default());
            let keys = generate_queries(&a);
            let (results, stats) = answer(&a, common, &keys, err)?;
            let report = classify_uninit(&a, &keys, &results);
            let mut out = report.to_json();
            out["stats"] = stats_json(&stats);
            out["insertedStores"] = json!(uao.inserted_stores);
            let fallback: Vec<_> = keys.iter().map(|k| engine(&a, common).fallback(k).objects()).collect();
            out["uaoCountFallback"] = json!(classify_sets(&a, &keys, &fallback).uao_count);
            if *compare_oracle {
                let fs = solve_fs_oracle(&a.index, &a.ander);
                let sets: Vec<_> = keys.iter().map(|k| fs.answer(k)).collect();
                let oracle = classify_sets(&a, &keys, &sets);
                out["uaoCountOracle"] = json!(oracle.uao_count);
                for (row, v) in out["queries"].as_array_mut().expect("rows").iter_mut().zip(&oracle.per_query) {
                    row["oracleStatus"] = json!(match v.status {
                        crate::uninit::Status::Initialized => "Initialized",
                        crate::uninit::Status::PotentiallyUninitialized => "PotentiallyUninitialized",
                    });
                }
            }
            Ok((pretty(&out), common.output.clone()))
        }
        Command::Oracle(common) => {
            let a = Analysis::new(load(common)?, AndersenConfig::default());
            let fs = solve_fs_oracle(&a.index, &a.ander);
            Ok((pretty(&fs.load_table(&a.index, &a.ander)), common.output.clone()))
        }
        Command::Dump { common, kind } => {
            let a = Analysis::new(load(common)?, AndersenConfig::default());
            let text = match kind {
                DumpKind::SvfgDot => export_dot(&a.index, &a.ander, &a.ssa, &a.svfg),
                DumpKind::SvfgJson => pretty(&export_json(&a.index, &a.ander, &a.ssa, &a.svfg)),
                DumpKind::Ander => pretty(&ander_json(&a)),
                DumpKind::Memssa => dump_memssa(&a.index, &a.ander, &a.ssa),
            };
            Ok((text, common.output.clone()))
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(&cli, err) {
        Ok((mut text, dest)) => {
            if !text.ends_with('\n') {
                text.push('\n');
            }
            match dest {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text) {
                        let _ = writeln!(err, "cannot write {}: {e}", path.display());
                        return EXIT_USAGE;
                    }
                }
                None => {
                    let _ = write!(out, "{text}");
                }
            }
            EXIT_OK
        }
        Err(f) => {
            let _ = writeln!(err, "{}", f.message);
            f.code
        }
    }
}
