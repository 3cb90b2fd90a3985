//! Uninitialized-pointer client: every eligible allocation is followed by a
//! store of a marker object (UAO); a load whose result may point to a
//! marker may read uninitialized memory.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde_json::json;

use crate::andersen::{solve_andersen, AndersenConfig};
use crate::ir::{AllocKind, Index, Instr, ObjId, ObjKind, Op, Program};
use crate::supa::{PtsResult, QueryKey};
use crate::Analysis;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UaoMap {
    /// Instrumented object name → its marker's name.
    pub uao_of: BTreeMap<String, String>,
    pub inserted_stores: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Initialized,
    PotentiallyUninitialized,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub query: String,
    pub status: Status,
    pub reaching: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UninitReport {
    pub per_query: Vec<Verdict>,
    /// Distinct markers reaching any queried variable.
    pub uao_count: usize,
}

impl UninitReport {
    pub fn warnings(&self) -> usize {
        self.per_query.iter().filter(|v| v.status == Status::PotentiallyUninitialized).count()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .per_query
            .iter()
            .map(|v| {
                json!({
                    "query": v.query,
                    "status": match v.status {
                        Status::Initialized => "Initialized",
                        Status::PotentiallyUninitialized => "PotentiallyUninitialized",
                    },
                    "reachingUAOs": v.reaching,
                })
            })
            .collect();
        json!({ "queries": rows, "totalQueries": self.per_query.len(), "uaoCount": self.uao_count })
    }
}

fn fresh(taken: &mut HashSet<String>, base: String) -> String {
    let mut name = base.clone();
    let mut i = 1;
    while taken.contains(&name) {
        name = format!("{base}_{i}");
        i += 1;
    }
    taken.insert(name.clone());
    name
}

/// Inserts `*p = u_a` (and one store per known field of `a`) right after
/// each allocation of a stack or heap object that can be strongly updated.
pub fn instrument_uao(program: &Program) -> (Program, UaoMap) {
    let index = Index::new(program.clone());
    let ander = solve_andersen(&index, AndersenConfig::default());
    let mut labels: HashSet<String> = index.nodes.iter().map(|n| n.label.clone()).collect();
    let mut out = program.clone();
    let mut map = UaoMap::default();

    for node in index.all_nodes() {
        let Some(o) = ander.objects.at_alloc(node) else { continue };
        let obj = ander.objects.get(o);
        let eligible = matches!(obj.kind, ObjKind::Stack | ObjKind::Heap)
            && !obj.default_init
            && !obj.is_array
            && !obj.func.map(|f| ander.recursive[f]).unwrap_or(false);
        if !eligible {
            continue;
        }
        let fi = index.func_of(node);
        let Some(Op::Alloc { dst, .. }) = index.instr(node).map(|i| &i.op) else { continue };
        let mut vars: HashSet<String> = index.vars.iter().filter(|v| v.func == fi).map(|v| v.name.clone()).collect();
        vars.extend(out.functions[fi].instrs().filter_map(|i| i.op.def().map(str::to_string)));
        let label = index.label(node).to_string();
        let u = fresh(&mut vars, format!("u_{label}"));
        let mut extra = vec![
            Instr {
                label: fresh(&mut labels, format!("{label}u.v")),
                op: Op::Alloc { dst: u.clone(), kind: AllocKind::Uao, name: Some(obj.name.clone()), array: false },
            },
            Instr {
                label: fresh(&mut labels, format!("{label}u")),
                op: Op::Store { ptr: dst.clone(), val: u.clone() },
            },
        ];
        map.inserted_stores.push(extra[1].label.clone());
        if !ander.collapsed.contains(&o) {
            let fields: Vec<ObjId> = ander.objects.ids().filter(|&f| f != o && ander.objects.base(f) == o).collect();
            for (j, f) in fields.into_iter().enumerate() {
                let mut cur = dst.clone();
                for (d, &k) in ander.objects.get(f).path.iter().enumerate() {
                    let v = fresh(&mut vars, format!("{u}_f{j}_{d}"));
                    extra.push(Instr {
                        label: fresh(&mut labels, format!("{label}u.f{j}.{d}")),
                        op: Op::Field { dst: v.clone(), src: cur, index: k },
                    });
                    cur = v;
                }
                let st = fresh(&mut labels, format!("{label}u.s{j}"));
                map.inserted_stores.push(st.clone());
                extra.push(Instr { label: st, op: Op::Store { ptr: cur, val: u.clone() } });
            }
        }
        map.uao_of.insert(obj.name.clone(), format!("uao:{}", obj.name));
        let block = index.block_of(node);
        let func = &mut out.functions[fi];
        let at = func.blocks[block].instrs.iter().position(|i| i.label == label).expect("alloc position") + 1;
        func.blocks[block].instrs.splice(at..at, extra);
    }
    (out, map)
}

fn has_uao(a: &Analysis, objs: impl IntoIterator<Item = ObjId>) -> bool {
    objs.into_iter().any(|o| a.ander.objects.get(o).kind == ObjKind::Uao)
}

/// One query per load whose result may point to a marker.
pub fn generate_queries(a: &Analysis) -> Vec<QueryKey> {
    a.index
        .all_nodes()
        .filter_map(|n| match a.index.instr(n).map(|i| &i.op) {
            Some(Op::Load { dst, .. }) => {
                let v = a.index.operand(n, dst);
                has_uao(a, a.ander.pts_var(v).iter().copied()).then(|| QueryKey::top(n, v))
            }
            _ => None,
        })
        .collect()
}

/// Classifies context-erased answers, one per key.
pub fn classify_sets(a: &Analysis, keys: &[QueryKey], answers: &[BTreeSet<ObjId>]) -> UninitReport {
    let mut all = BTreeSet::new();
    let mut per_query = Vec::new();
    for (k, objs) in keys.iter().zip(answers) {
        let reaching: BTreeSet<ObjId> =
            objs.iter().copied().filter(|&o| a.ander.objects.get(o).kind == ObjKind::Uao).collect();
        all.extend(reaching.iter().copied());
        per_query.push(Verdict {
            query: k.display(a),
            status: if reaching.is_empty() { Status::Initialized } else { Status::PotentiallyUninitialized },
            reaching: reaching.iter().map(|&o| a.ander.objects.display(o)).collect(),
        });
    }
    UninitReport { per_query, uao_count: all.len() }
}

pub fn classify_uninit(a: &Analysis, keys: &[QueryKey], results: &[PtsResult]) -> UninitReport {
    let sets: Vec<BTreeSet<ObjId>> = results.iter().map(|r| r.objects()).collect();
    classify_sets(a, keys, &sets)
}
