#![allow(dead_code)]

use std::path::PathBuf;

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::TestRunner;
use supa::Analysis;

pub fn corpus_dir() -> PathBuf {
    std::env::var_os("SUPA_CORPUS")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus"))
}

/// `(file stem, source)` for every corpus program, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "svfir"))
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            (name, std::fs::read_to_string(&p).expect("readable corpus file"))
        })
        .collect();
    out.sort();
    out
}

pub fn source(name: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(format!("{name}.svfir"))).expect("corpus file")
}

pub fn analysis(name: &str) -> Analysis {
    Analysis::from_source(&source(name)).expect("corpus file parses")
}

#[derive(Debug, Clone)]
pub struct Recipe {
    pub funcs: usize,
    pub loopy: bool,
    pub stmts: Vec<(u8, u8, u8)>,
}

pub fn recipe() -> impl Strategy<Value = Recipe> {
    (1usize..=3, any::<bool>(), prop::collection::vec((0u8..9, any::<u8>(), any::<u8>()), 1..=30))
        .prop_map(|(funcs, loopy, stmts)| Recipe { funcs, loopy, stmts })
}

struct Gen {
    text: String,
    label: usize,
    obj: usize,
    var: usize,
    funcs: usize,
}

impl Gen {
    fn label(&mut self) -> String {
        self.label += 1;
        format!("l{}", self.label)
    }

    fn var(&mut self) -> String {
        self.var += 1;
        format!("%v{}", self.var)
    }

    fn line(&mut self, body: String) {
        let l = self.label();
        self.text.push_str(&format!("  {l}: {body}\n"));
    }

    fn pick(vars: &[String], x: u8) -> String {
        vars[x as usize % vars.len()].clone()
    }

    /// Emits statements, appending definitions to `vars`.
    fn stmts(&mut self, stmts: &[(u8, u8, u8)], vars: &mut Vec<String>) {
        for &(kind, x, y) in stmts {
            let d = self.var();
            let body = match kind {
                0 => {
                    self.obj += 1;
                    format!("{d} = alloca o{}", self.obj)
                }
                1 => {
                    self.obj += 1;
                    format!("{d} = heap h{}", self.obj)
                }
                2 => format!("{d} = copy {}", Self::pick(vars, x)),
                3 => format!("{d} = field {}, {}", Self::pick(vars, x), y % 2),
                4 => format!("{d} = load {}", Self::pick(vars, x)),
                5 => {
                    let (p, q) = (Self::pick(vars, x), Self::pick(vars, y));
                    self.line(format!("store {p}, {q}"));
                    continue;
                }
                6 if self.funcs > 1 => {
                    let g = 1 + y as usize % (self.funcs - 1);
                    let (p, q) = (Self::pick(vars, x), Self::pick(vars, x / 3));
                    format!("{d} = call @f{g}({p}, {q})")
                }
                7 if self.funcs > 1 => {
                    let g = 1 + y as usize % (self.funcs - 1);
                    let fp = self.var();
                    self.line(format!("{fp} = addr @f{g}"));
                    let (p, q) = (Self::pick(vars, x), Self::pick(vars, y));
                    format!("{d} = call {fp}({p}, {q})")
                }
                _ => format!("{d} = addr @g{}", x % 2),
            };
            self.line(body);
            vars.push(d);
        }
    }

    fn function(&mut self, f: usize, stmts: &[(u8, u8, u8)], loopy: bool) {
        let params: Vec<String> = if f == 0 { vec![] } else { vec![format!("%a{f}_0"), format!("%a{f}_1")] };
        self.text.push_str(&format!("func @f{f}({}) {{\nbb0:\n", params.join(", ")));
        let mut vars = params.clone();
        let d = self.var();
        self.obj += 1;
        self.line(format!("{d} = alloca o{}", self.obj));
        vars.push(d);
        let third = stmts.len() / 3;
        let (head, rest) = stmts.split_at(third);
        let (mid, tail) = rest.split_at(rest.len() / 2);
        self.stmts(head, &mut vars);
        let ret = if loopy {
            self.line("jmp bb1".into());
            let init = vars.last().unwrap().clone();
            let h = self.var();
            let back_label = self.label + 1;
            self.text.push_str("bb1:\n");
            // The back value is patched in once the body is known.
            let marker = format!("@BACK{back_label}@");
            self.line(format!("{h} = phi [{init}, bb0], [{marker}, bb1]"));
            let mut body = vars.clone();
            body.push(h.clone());
            self.stmts(mid, &mut body);
            let back = body.last().unwrap().clone();
            self.text = self.text.replace(&marker, &back);
            self.line("br bb1 bb2".into());
            self.text.push_str("bb2:\n");
            self.stmts(tail, &mut body);
            body.last().unwrap().clone()
        } else {
            self.line("br bb1 bb2".into());
            let half = mid.len() / 2;
            self.text.push_str("bb1:\n");
            let mut left = vars.clone();
            self.stmts(&mid[..half], &mut left);
            self.line("jmp bb3".into());
            self.text.push_str("bb2:\n");
            let mut right = vars.clone();
            self.stmts(&mid[half..], &mut right);
            self.line("jmp bb3".into());
            self.text.push_str("bb3:\n");
            let m = self.var();
            let (lv, rv) = (left.last().unwrap().clone(), right.last().unwrap().clone());
            self.line(format!("{m} = phi [{lv}, bb1], [{rv}, bb2]"));
            vars.push(m);
            self.stmts(tail, &mut vars);
            vars.last().unwrap().clone()
        };
        if f == 0 {
            self.line("ret".into());
        } else {
            self.line(format!("ret {ret}"));
        }
        self.text.push_str("}\n\n");
    }
}

/// Renders a recipe as a well-formed program.
pub fn render(r: &Recipe) -> String {
    let mut g = Gen { text: "global @g0\nglobal @g1 -> @g0\n\n".into(), label: 0, obj: 0, var: 0, funcs: r.funcs };
    let per = r.stmts.len().div_ceil(r.funcs);
    for f in 0..r.funcs {
        let lo = (f * per).min(r.stmts.len());
        let hi = ((f + 1) * per).min(r.stmts.len());
        g.function(f, &r.stmts[lo..hi], r.loopy);
    }
    g.text.replace("func @f0()", "func @main()")
}

/// `n` programs from a fixed seed; the first half loop-free, the rest loopy.
pub fn random_programs(n: usize) -> Vec<String> {
    let mut runner = TestRunner::deterministic();
    let strategy = recipe();
    (0..n)
        .map(|i| {
            let mut r = strategy.new_tree(&mut runner).expect("value").current();
            r.loopy = i >= n / 2;
            render(&r)
        })
        .collect()
}
