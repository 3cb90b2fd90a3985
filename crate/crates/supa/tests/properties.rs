mod common;

use proptest::prelude::*;
use supa::andersen::AndersenConfig;
use supa::ir::{parse_program, print_program, Op};
use supa::oracle::{interpret_concrete, solve_fs_oracle};
use supa::supa::{Engine, StagePlan};
use supa::Analysis;

proptest! {
    #![proptest_config(ProptestConfig { cases: 150, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn generated_programs_round_trip(r in common::recipe()) {
        let text = common::render(&r);
        let p = parse_program(&text).map_err(|d| TestCaseError::fail(format!("{d}\n{text}")))?;
        let again = parse_program(&print_program(&p)).expect("printed program parses");
        prop_assert_eq!(p, again);
    }

    #[test]
    fn unbounded_fs_matches_oracle(r in common::recipe()) {
        let text = common::render(&r);
        let a = Analysis::from_source(&text).unwrap();
        let oracle = solve_fs_oracle(&a.index, &a.ander);
        let eng = Engine::new(&a);
        for k in eng.load_queries() {
            let res = eng.query_fs(&k, None);
            prop_assert!(res.fully_resolved);
            prop_assert_eq!(res.objects(), oracle.answer(&k), "{} in\n{}", k.display(&a), text);
        }
    }

    #[test]
    fn concrete_facts_are_covered(mut r in common::recipe()) {
        r.loopy = false;
        let text = common::render(&r);
        let a = Analysis::from_source(&text).unwrap();
        let Ok(trace) = interpret_concrete(&a.index, &a.ander) else { return Ok(()) };
        let fs = solve_fs_oracle(&a.index, &a.ander);
        for &(v, o) in &trace.var_facts {
            prop_assert!(fs.pts_var(v).contains(&o), "{} in\n{}", a.index.var_display(v), text);
            prop_assert!(a.ander.pts_var(v).contains(&o));
        }
        for &(n, cell, t) in &trace.load_facts {
            prop_assert!(fs.pts_obj_before(n, cell).contains(&t), "{} in\n{}", a.index.label(n), text);
        }
    }

    #[test]
    fn context_sensitive_never_loses_observed_facts(mut r in common::recipe()) {
        r.loopy = false;
        let text = common::render(&r);
        let a = Analysis::from_source(&text).unwrap();
        let Ok(trace) = interpret_concrete(&a.index, &a.ander) else { return Ok(()) };
        let eng = Engine::new(&a);
        let plan: StagePlan = "fscs:inf".parse().unwrap();
        for k in eng.load_queries() {
            let supa::supa::QueryVar::Top(v) = k.var else { continue };
            let got = eng.run_hybrid(&k, &plan).objects();
            for &(w, o) in &trace.var_facts {
                prop_assert!(w != v || got.contains(&o), "{} in\n{}", k.display(&a), text);
            }
        }
    }

    #[test]
    fn collapsing_fields_only_grows_answers(r in common::recipe()) {
        let text = common::render(&r);
        let p = parse_program(&text).unwrap();
        let fine = Analysis::new(p.clone(), AndersenConfig::default());
        let flat = Analysis::new(p, AndersenConfig { field_sensitive: false });
        // A call that never returns, or a store through a pointer that is
        // always null, ends every path through it. Collapsing fields makes
        // more objects reach such points, so answers can shrink there.
        if fine.ander.recursive.iter().any(|&r| r) || null_store(&flat) {
            return Ok(());
        }
        let fe = Engine::new(&fine);
        let ce = Engine::new(&flat);
        for (kf, kc) in fe.load_queries().iter().zip(ce.load_queries()) {
            let a: std::collections::BTreeSet<String> =
                fe.query_fs(kf, None).objects().iter().map(|&o| fine.ander.objects.display(fine.ander.objects.base(o))).collect();
            let b: std::collections::BTreeSet<String> =
                ce.query_fs(&kc, None).objects().iter().map(|&o| flat.ander.objects.display(o)).collect();
            prop_assert!(a.is_subset(&b), "{a:?} vs {b:?} at {} in\n{}", kf.display(&fine), text);
        }
    }
}

fn null_store(a: &Analysis) -> bool {
    let oracle = solve_fs_oracle(&a.index, &a.ander);
    a.index.all_nodes().any(|n| match a.index.instr(n).map(|i| &i.op) {
        Some(Op::Store { ptr, .. }) => oracle.pts_var(a.index.operand(n, ptr)).is_empty(),
        _ => false,
    })
}

#[test]
fn budgets_are_monotone_on_motivating() {
    let a = common::analysis("motivating");
    let k = Engine::new(&a).parse_query("l16:%z").unwrap();
    let mut prev: Option<std::collections::BTreeSet<_>> = None;
    for b in [0, 1, 3, 10, 100] {
        let got = Engine::new(&a).query_fs(&k, Some(b)).objects();
        if let Some(p) = &prev {
            assert!(got.is_subset(p) || got == *p);
        }
        prev = Some(got);
    }
}
