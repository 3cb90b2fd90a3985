mod common;

use std::collections::BTreeSet;

use supa::andersen::{solve_andersen, AndersenConfig};
use supa::cli::{run_cli, EXIT_DIAGNOSTICS, EXIT_OK, EXIT_USAGE};
use supa::ir::{parse_program, print_program, Index, Op};
use supa::memssa::{compute_modref, dump_memssa};
use supa::oracle::interpret_concrete;
use supa::supa::{Context, Engine, QueryKey, StagePlan};
use supa::svfg::{export_dot, EdgeKind, EdgeVar, Svfg};
use supa::uninit::{generate_queries, instrument_uao};
use supa::Analysis;

fn objs(a: &Analysis, set: &BTreeSet<supa::ir::ObjId>) -> Vec<String> {
    set.iter().map(|&o| a.ander.objects.display(o)).collect()
}

fn var_pts(a: &Analysis, func: &str, var: &str) -> Vec<String> {
    let f = a.index.func(func).unwrap();
    objs(a, a.ander.pts_var(a.index.var(f, var).unwrap()))
}

fn node(a: &Analysis, label: &str) -> supa::ir::NodeId {
    a.index.node(label).unwrap_or_else(|| panic!("no node {label}"))
}

#[test]
fn motivating_has_sixteen_statements() {
    let p = parse_program(&common::source("motivating")).unwrap();
    assert_eq!(p.functions.len(), 1);
    assert_eq!(p.body_len(), 16);
    let a = common::analysis("motivating");
    let names: BTreeSet<String> = a
        .ander
        .objects
        .ids()
        .filter(|&o| a.ander.objects.get(o).kind != supa::ir::ObjKind::Function)
        .map(|o| a.ander.objects.display(o))
        .collect();
    assert_eq!(names, ["a", "b", "c", "d", "i", "uao:a"].iter().map(|s| s.to_string()).collect());
}

#[test]
fn minimal_function_has_no_body() {
    let p = parse_program("func @f() { bb0: l1: ret }").unwrap();
    assert_eq!(p.body_len(), 0);
}

#[test]
fn second_definition_is_an_ssa_violation() {
    let err =
        parse_program("func @main() {\nbb0:\n  l1: %p = alloca a\n  l2: %p = alloca b\n  l3: ret\n}\n").unwrap_err();
    assert!(err.to_string().contains("SSA violation at l2"), "{err}");
}

#[test]
fn malformed_programs_are_rejected() {
    let cases = [
        "func @main() {\nbb0:\n  l1: %x = load %nope\n  l2: ret\n}\n",
        "func @main() {\nbb0:\n  l1: %p = alloca a\n  l2: %q = field %p, %p\n  l3: ret\n}\n",
        "func @main() {\nbb0:\n  l1: %p = alloca a\n}\n",
        "func @main() {\nbb0:\n  l1: %p = alloca a\n  l1: ret\n}\n",
        "func @main() {\nbb0:\n  l1: br bb1 bb9\nbb1:\n  l2: ret\n}\n",
        "func @main() {\nbb0:\n  l1: %p = alloca a\n  l2: jmp bb1\nbb1:\n  l3: %q = phi [%p, bb7]\n  l4: ret\n}\n",
    ];
    for c in cases {
        let err = parse_program(c).expect_err(c);
        assert!(err.0.iter().all(|d| d.line > 0), "{err}");
    }
}

#[test]
fn use_must_be_dominated_by_its_def() {
    let text = "func @main() {\nbb0:\n  l1: br bb1 bb2\nbb1:\n  l2: %p = alloca a\n  l3: jmp bb3\nbb2:\n  l4: jmp bb3\nbb3:\n  l5: %q = copy %p\n  l6: ret\n}\n";
    assert!(parse_program(text).is_err());
}

#[test]
fn corpus_round_trips_through_the_printer() {
    for (name, text) in common::corpus() {
        let p = parse_program(&text).unwrap();
        assert_eq!(parse_program(&print_program(&p)).unwrap(), p, "{name}");
    }
}

#[test]
fn gep_any_expands_to_every_field() {
    let a = common::analysis("gep_any");
    assert_eq!(var_pts(&a, "main", "g"), ["s.0", "s.1"]);
}

#[test]
fn swap_pre_analysis() {
    let a = common::analysis("swap");
    assert_eq!(var_pts(&a, "main", "p"), ["a"]);
    assert_eq!(var_pts(&a, "main", "q"), ["c"]);
    let m = common::analysis("motivating");
    assert_eq!(var_pts(&m, "main", "t3"), ["b", "d"]);
}

#[test]
fn single_alloca_pre_analysis() {
    let a = Analysis::from_source("func @main() {\nbb0:\n  l1: %p = alloca a\n  l2: ret\n}\n").unwrap();
    assert_eq!(var_pts(&a, "main", "p"), ["a"]);
}

#[test]
fn pre_analysis_is_a_fixed_point() {
    for (name, text) in common::corpus() {
        let index = Index::new(parse_program(&text).unwrap());
        let r = solve_andersen(&index, AndersenConfig::default());
        for n in index.all_nodes() {
            match index.instr(n).map(|i| &i.op) {
                Some(Op::Copy { dst, src }) => {
                    assert!(r.pts_var(index.operand(n, src)).is_subset(r.pts_var(index.operand(n, dst))), "{name}");
                }
                Some(Op::Load { dst, ptr }) => {
                    for &o in r.pts_var(index.operand(n, ptr)) {
                        assert!(r.pts_obj(o).is_subset(r.pts_var(index.operand(n, dst))), "{name}");
                    }
                }
                Some(Op::Store { ptr, val }) => {
                    for &o in r.pts_var(index.operand(n, ptr)) {
                        assert!(r.pts_var(index.operand(n, val)).is_subset(r.pts_obj(o)), "{name}");
                    }
                }
                _ => {}
            }
        }
    }
}

#[test]
fn indirect_call_resolves_both_targets() {
    let a = common::analysis("indirect_call");
    let cs = node(&a, "l9");
    let callees: Vec<&str> = a.ander.callees(cs).map(|g| a.index.program.functions[g].name.as_str()).collect();
    assert_eq!(callees, ["set", "peek"]);
}

#[test]
fn swap_callsite_summary() {
    let a = common::analysis("swap_call");
    let modref = compute_modref(&a.index, &a.ander);
    let swap = a.index.func("swap").unwrap();
    let cs = node(&a, "l7");
    assert_eq!(objs(&a, modref.mu_at(cs, swap)), ["a", "c"]);
    assert_eq!(objs(&a, modref.chi_at(cs, swap)), ["a", "c"]);
    let dump = dump_memssa(&a.index, &a.ander, &a.ssa);
    let entry = dump.lines().find(|l| l.trim_start().starts_with("l8:")).unwrap();
    assert!(entry.contains("chi a") && entry.contains("chi c"), "{entry}");
    let exit = dump.lines().find(|l| l.trim_start().starts_with("l13:")).unwrap();
    assert!(exit.contains("mu a") && exit.contains("mu c"), "{exit}");
}

#[test]
fn copy_only_function_has_empty_summary() {
    let a = Analysis::from_source(
        "func @main() {\nbb0:\n  l1: %p = alloca a\n  l2: %r = call @id(%p)\n  l3: ret\n}\n\nfunc @id(%x) {\nbb0:\n  l4: %y = copy %x\n  l5: ret %y\n}\n",
    )
    .unwrap();
    let id = a.index.func("id").unwrap();
    assert!(a.ssa.modref.use_per_func[id].is_empty());
    assert!(a.ssa.modref.def_per_func[id].is_empty());
}

#[test]
fn mutually_recursive_summaries_agree() {
    let a = common::analysis("mutual_recursion");
    let (even, odd) = (a.index.func("even").unwrap(), a.index.func("odd").unwrap());
    let m = &a.ssa.modref;
    assert_eq!(m.def_per_func[even], m.def_per_func[odd]);
    assert_eq!(objs(&a, &m.def_per_func[even]), ["a", "b"]);
}

#[test]
fn motivating_memory_ssa_versions() {
    let a = common::analysis("motivating");
    let dump = dump_memssa(&a.index, &a.ander, &a.ssa);
    let line = |l: &str| dump.lines().find(|x| x.trim_start().starts_with(&format!("{l}:"))).unwrap().to_string();
    assert!(line("l14").contains("chi b2 = b1"), "{}", line("l14"));
    assert!(line("l15").contains("chi b3 = b2"), "{}", line("l15"));
    assert!(line("l16").contains("mu b3"), "{}", line("l16"));
}

#[test]
fn motivating_value_flow_graph() {
    let a = common::analysis("motivating");
    assert_eq!(a.svfg.indirect_count(), 9);
    let obj_a = a.ander.objects.by_display("a").unwrap();
    let (l5, l9) = (Svfg::node_of(node(&a, "l5")), Svfg::node_of(node(&a, "l9")));
    assert!(a.svfg.edges.iter().any(|e| e.from == l5 && e.to == l9 && e.var == EdgeVar::Obj(obj_a)));
    let l2 = Svfg::node_of(node(&a, "l2"));
    let targets: BTreeSet<&str> = a.svfg.out_edges(l2).map(|e| a.index.label(supa::ir::NodeId(e.to))).collect();
    assert_eq!(targets, ["l10", "l6", "l8"].into_iter().collect());
}

#[test]
fn swap_call_interprocedural_edges() {
    let a = common::analysis("swap_call");
    let inter: BTreeSet<(String, String, String)> = a
        .svfg
        .edges
        .iter()
        .filter(|e| matches!(e.kind, EdgeKind::CallAddr | EdgeKind::RetAddr))
        .map(|e| {
            let EdgeVar::Obj(o) = e.var else { unreachable!() };
            (
                a.index.label(supa::ir::NodeId(e.from)).to_string(),
                a.index.label(supa::ir::NodeId(e.to)).to_string(),
                a.ander.objects.display(o),
            )
        })
        .collect();
    let want: BTreeSet<(String, String, String)> =
        [("l7", "l8", "a"), ("l7", "l8", "c"), ("l13", "l7", "a"), ("l13", "l7", "c")]
            .iter()
            .map(|(x, y, z)| (x.to_string(), y.to_string(), z.to_string()))
            .collect();
    assert_eq!(inter, want);
}

#[test]
fn every_top_level_use_has_one_direct_def_edge() {
    for (name, text) in common::corpus() {
        let a = Analysis::from_source(&text).unwrap();
        for n in a.index.all_nodes() {
            let Some(i) = a.index.instr(n) else { continue };
            if matches!(i.op, Op::Phi { .. }) {
                continue;
            }
            for u in i.op.uses() {
                let v = a.index.operand(n, u);
                if a.index.is_global_symbol(u) {
                    continue;
                }
                let count = a.svfg.in_edges(Svfg::node_of(n), EdgeVar::Top(v)).count();
                assert_eq!(count, 1, "{name} {} uses {u}", a.index.label(n));
            }
        }
    }
}

#[test]
fn runtime_def_use_pairs_have_edges() {
    // A load that observed a value must have an indirect in-edge for the cell.
    for (name, text) in common::corpus() {
        let a = Analysis::from_source(&text).unwrap();
        let Ok(trace) = interpret_concrete(&a.index, &a.ander) else { continue };
        for &(n, cell, _) in &trace.load_facts {
            let has = a.svfg.in_edges(Svfg::node_of(n), EdgeVar::Obj(cell)).next().is_some();
            assert!(has, "{name} {}", a.index.label(n));
        }
    }
}

#[test]
fn dot_export() {
    let a = common::analysis("empty");
    assert_eq!(export_dot(&a.index, &a.ander, &a.ssa, &a.svfg), "digraph {}\n");
    let m = common::analysis("motivating");
    let dot = export_dot(&m.index, &m.ander, &m.ssa, &m.svfg);
    assert_eq!(dot.matches("style=dashed").count(), 9);
    assert_eq!(dot, export_dot(&m.index, &m.ander, &m.ssa, &m.svfg));
}

#[test]
fn weak_update_and_branch_merge() {
    let a = common::analysis("weak_update");
    let k = Engine::new(&a).parse_query("l11:%z").unwrap();
    assert_eq!(objs(&a, &Engine::new(&a).query_fs(&k, None).objects()), ["c", "d"]);
    let b = common::analysis("branch_merge");
    let k = Engine::new(&b).parse_query("l9:%z").unwrap();
    assert_eq!(objs(&b, &Engine::new(&b).query_fs(&k, None).objects()), ["b", "c"]);
}

#[test]
fn cycle_members_that_grow_force_another_round() {
    // `%a2_1` is first read empty while the store at l33 is on the stack,
    // which kills o9; the head has to notice that `%a2_1` grew afterwards.
    let text = "func @main() { bb0: l1: ret }
func @f2(%a2_0, %a2_1) {
bb0:
  l27: %v21 = alloca o9
  l28: %v22 = load %a2_0
  l29: %v23 = call @f2(%v21, %v22)
  l30: jmp bb1
bb1:
  l31: %v24 = phi [%v23, bb0], [%v25, bb1]
  l32: %v25 = call @f2(%v23, %v24)
  l33: store %a2_1, %a2_0
  l34: br bb1 bb2
bb2:
  l35: %v27 = load %v21
  l37: %v29 = heap h10
  l38: ret %v29
}
";
    let a = Analysis::from_source(text).unwrap();
    let k = Engine::new(&a).parse_query("l35:%v27").unwrap();
    let res = Engine::new(&a).query_fs(&k, None);
    assert_eq!(objs(&a, &res.objects()), ["o9", "h10"]);
    assert_eq!(res.objects(), supa::oracle::solve_fs_oracle(&a.index, &a.ander).answer(&k));
}

#[test]
fn staged_plans_on_context_program() {
    let a = common::analysis("context");
    let k = Engine::new(&a).parse_query("l5:%z").unwrap();
    let first: StagePlan = "fscs:10000,fs:10000".parse().unwrap();
    let r = Engine::new(&a).run_hybrid(&k, &first);
    assert_eq!(r.stage.unwrap().to_string(), "fscs:10000");
    let skipped: StagePlan = "fscs:0,fs:10000".parse().unwrap();
    let r = Engine::new(&a).run_hybrid(&k, &skipped);
    assert_eq!(r.stage.unwrap().to_string(), "fs:10000");
    assert_eq!(r.display_pts(&a), ["c", "d"]);
}

#[test]
fn contexts_distinguish_callers() {
    let a = common::analysis("multi_callers");
    let eng = Engine::new(&a);
    let ra = eng.parse_query("l7:%ra").unwrap();
    assert_eq!(objs(&a, &eng.query_fs(&ra, None).objects()), ["x", "y"]);
    assert_eq!(objs(&a, &eng.query_fscs(&ra, None).objects()), ["x"]);
}

#[test]
fn context_stack_operations() {
    let a = common::analysis("context");
    let (l3, l4) = (node(&a, "l3"), node(&a, "l4"));
    let c = Context::empty().push(l3, 3);
    assert_eq!(c.pop(l3), Some(Context::empty()));
    assert_eq!(c.pop(l4), None);
    assert_eq!(Context::empty().pop(l4), Some(Context::empty()));
    let deep = Context::empty().push(l3, 1).push(l4, 1);
    assert_eq!(deep.frames, vec![l4]);
    assert!(deep.truncated);
    assert_eq!(deep.display(&a.index), "[..,l4]");
}

#[test]
fn query_parsing() {
    let a = common::analysis("context");
    let eng = Engine::new(&a);
    let k = eng.parse_query("[l4]l5:%z").unwrap();
    assert_eq!(k.display(&a), "[l4]l5:%z");
    assert!(eng.parse_query("l99:%z").is_err());
    assert!(eng.parse_query("[l1]l5:%z").is_err());
    assert!(eng.parse_query("l5:%nope").is_err());
}

#[test]
fn cache_reuse_is_transparent() {
    let a = common::analysis("motivating");
    let eng = Engine::new(&a);
    let keys = eng.load_queries();
    let plan: StagePlan = "fs:10000".parse().unwrap();
    let (first, s1) = eng.answer_all(&keys, &plan, 2);
    let (second, s2) = eng.answer_all(&keys, &plan, 2);
    assert_eq!(first, second);
    assert_eq!(s1.cache_hits, 0);
    assert_eq!(s2.cache_hits, keys.len());
    assert_eq!(s2.edges_walked, 0);
}

#[test]
fn swap_interpreter_final_memory() {
    let a = common::analysis("swap");
    let t = interpret_concrete(&a.index, &a.ander).unwrap();
    let mem: BTreeSet<(String, String)> =
        t.final_memory.iter().map(|&(c, o)| (a.ander.objects.display(c), a.ander.objects.display(o))).collect();
    assert!(mem.contains(&("a".into(), "d".into())));
    assert!(mem.contains(&("c".into(), "b".into())));
    let m = common::analysis("motivating");
    let t = interpret_concrete(&m.index, &m.ander).unwrap();
    let z = m.index.var(0, "z").unwrap();
    let zs: Vec<String> = t.var_facts.iter().filter(|f| f.0 == z).map(|f| m.ander.objects.display(f.1)).collect();
    assert_eq!(zs, ["i"]);
}

#[test]
fn instrumentation_inserts_markers() {
    let p = parse_program(&common::source("motivating")).unwrap();
    let (inst, map) = instrument_uao(&p);
    let text = print_program(&inst);
    assert!(text.contains("l1u: store %p, %u_l1"), "{text}");
    assert_eq!(map.uao_of.get("a").map(String::as_str), Some("uao:a"));
    let a = Analysis::new(inst, AndersenConfig::default());
    let keys: Vec<String> = generate_queries(&a).iter().map(|k| k.display(&a)).collect();
    assert!(keys.contains(&"l16:%z".to_string()));

    for skipped in ["arrays", "heap0"] {
        let p = parse_program(&common::source(skipped)).unwrap();
        let (_, map) = instrument_uao(&p);
        assert!(!map.uao_of.contains_key("buf") && !map.uao_of.contains_key("zeroed"), "{skipped}");
    }
    let (_, map) = instrument_uao(&parse_program(&common::source("global_load_only")).unwrap());
    assert!(map.inserted_stores.is_empty());
}

#[test]
fn uninit_query_on_global_only_program_is_empty() {
    let (inst, _) = instrument_uao(&parse_program(&common::source("global_load_only")).unwrap());
    let a = Analysis::new(inst, AndersenConfig::default());
    assert!(generate_queries(&a).is_empty());
}

#[test]
fn object_queries_read_memory_at_a_node() {
    let a = common::analysis("motivating");
    let eng = Engine::new(&a);
    let k = eng.parse_query("l16:d").unwrap();
    let expect = QueryKey::obj(node(&a, "l16"), a.ander.objects.by_display("d").unwrap());
    assert_eq!(k, expect);
    assert_eq!(objs(&a, &eng.query_fs(&k, None).objects()), ["i"]);
    // b is never written: the stores at l14 and l15 go through t3, which only reaches d.
    let b = eng.parse_query("l16:b").unwrap();
    assert!(eng.query_fs(&b, None).objects().is_empty());
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["supa"];
    full.extend_from_slice(args);
    let code = run_cli(full, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn cli_query_and_exit_codes() {
    let dir = common::corpus_dir();
    let m = dir.join("motivating.svfir");
    let m = m.to_str().unwrap();
    let (code, out, _) = cli(&["query", "--file", m, "--query", "l16:%z", "--stages", "fs:100000"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pts"], serde_json::json!(["i"]));
    assert_eq!(v["fullyResolved"], true);
    let (_, out, _) = cli(&["query", "--file", m, "--query", "l16:%z", "--stages", "fs:3"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pts"], serde_json::json!(["i", "uao:a"]));
    assert_eq!(v["fullyResolved"], false);

    let e = dir.join("empty.svfir");
    let (code, out, _) = cli(&["dump", "--file", e.to_str().unwrap(), "--kind", "svfg-dot"]);
    assert_eq!((code, out.as_str()), (EXIT_OK, "digraph {}\n"));

    assert_eq!(cli(&["query", "--file", m, "--query", "l16:%z", "--stages", "bogus:1"]).0, EXIT_USAGE);
    assert_eq!(cli(&["query", "--file", m, "--query", "nolabel"]).0, EXIT_USAGE);
    assert_eq!(cli(&["analyze", "--file", "/nonexistent.svfir"]).0, EXIT_USAGE);
    assert_eq!(cli(&["frobnicate"]).0, EXIT_USAGE);

    let bad = std::env::temp_dir().join(format!("supa-bad-{}.svfir", std::process::id()));
    std::fs::write(&bad, "func @main() {\nbb0:\n  l1: %p = alloca a\n  l2: %p = alloca b\n  l3: ret\n}\n").unwrap();
    let (code, _, err) = cli(&["analyze", "--file", bad.to_str().unwrap()]);
    std::fs::remove_file(&bad).ok();
    assert_eq!(code, EXIT_DIAGNOSTICS);
    assert!(err.contains("SSA violation at l2"));
}

#[test]
fn cli_outputs_are_deterministic() {
    let m = common::corpus_dir().join("heap_loop.svfir");
    let m = m.to_str().unwrap();
    let one = cli(&["analyze", "--file", m, "--threads", "1"]).1;
    let eight = cli(&["analyze", "--file", m, "--threads", "8", "--no-cache"]).1;
    assert_eq!(one, eight);
    for kind in ["svfg-json", "ander", "memssa"] {
        let (code, a, _) = cli(&["dump", "--file", m, "--kind", kind]);
        assert_eq!(code, EXIT_OK);
        assert_eq!(a, cli(&["dump", "--file", m, "--kind", kind]).1);
    }
    let (code, out, _) = cli(&["uninit", "--file", m, "--compare-oracle", "--stages", "fs:inf"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["uaoCount"], v["uaoCountOracle"]);
}
