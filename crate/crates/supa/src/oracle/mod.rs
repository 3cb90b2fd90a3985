//! Ground truth for testing: a dense whole-program flow-sensitive solver
//! and a path-enumerating concrete interpreter.

mod interp;

pub use interp::{interpret_concrete, ConcreteTrace, InterpError, Trap, TrapKind};

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use crate::andersen::{AndersenResult, PtsSet};
use crate::ir::{Callee, Index, NodeId, ObjId, ObjKind, Op, VarId};
use crate::memssa::{compute_modref, ModRefSummary};
use crate::supa::{CtxObject, Mode, QueryKey, QueryVar, SingletonInfo};

type Mem = BTreeMap<ObjId, PtsSet>;

/// MFP solution: top-level pts plus memory state before and after each node.
#[derive(Debug, Clone)]
pub struct FlowSensitiveResult {
    pub var_pts: Vec<PtsSet>,
    pub before: Vec<Mem>,
    pub after: Vec<Mem>,
}

impl FlowSensitiveResult {
    pub fn pts_var(&self, v: VarId) -> &PtsSet {
        &self.var_pts[v.0 as usize]
    }

    /// Contents of `o` right after `node`.
    pub fn pts_obj_at(&self, node: NodeId, o: ObjId) -> PtsSet {
        self.after[node.0 as usize].get(&o).cloned().unwrap_or_default()
    }

    pub fn pts_obj_before(&self, node: NodeId, o: ObjId) -> PtsSet {
        self.before[node.0 as usize].get(&o).cloned().unwrap_or_default()
    }

    pub fn answer(&self, key: &QueryKey) -> PtsSet {
        match key.var {
            QueryVar::Top(v) => self.pts_var(v).clone(),
            QueryVar::Obj(o) => self.pts_obj_at(key.node, o),
        }
    }

    /// Per-load table: `label:%x` → sorted object names.
    pub fn load_table(&self, index: &Index, ander: &AndersenResult) -> serde_json::Value {
        let mut rows = serde_json::Map::new();
        for n in index.all_nodes() {
            if let Some(Op::Load { dst, .. }) = index.instr(n).map(|i| &i.op) {
                let v = index.operand(n, dst);
                let names: Vec<String> = self.pts_var(v).iter().map(|&o| ander.objects.display(o)).collect();
                rows.insert(format!("{}:%{dst}", index.label(n)), json!(names));
            }
        }
        serde_json::Value::Object(rows)
    }
}

struct Solver<'a> {
    index: &'a Index,
    ander: &'a AndersenResult,
    modref: ModRefSummary,
    singletons: SingletonInfo,
    var_pts: Vec<PtsSet>,
    before: Vec<Mem>,
    after: Vec<Mem>,
    /// Nodes whose `before` state is the join of these `after` states.
    preds: Vec<Vec<NodeId>>,
}

fn union_into(dst: &mut PtsSet, src: &PtsSet) -> bool {
    let n = dst.len();
    dst.extend(src.iter().copied());
    dst.len() != n
}

impl Solver<'_> {
    fn resolved(&self, cs: NodeId) -> BTreeSet<usize> {
        let Some(Op::Call { callee, .. }) = self.index.instr(cs).map(|i| &i.op) else { return BTreeSet::new() };
        let known: BTreeSet<usize> = self.ander.callees(cs).collect();
        match callee {
            Callee::Direct(name) => self.index.func(name).into_iter().filter(|g| known.contains(g)).collect(),
            Callee::Indirect(fp) => self.var_pts[self.index.operand(cs, fp).0 as usize]
                .iter()
                .filter_map(|&o| {
                    let obj = self.ander.objects.get(o);
                    (obj.kind == ObjKind::Function).then(|| self.index.func(&obj.name)).flatten()
                })
                .filter(|g| known.contains(g))
                .collect(),
        }
    }

    fn callers_of(&self, g: usize) -> Vec<NodeId> {
        self.index.callsites.iter().copied().filter(|&cs| self.resolved(cs).contains(&g)).collect()
    }

    fn set_var(&mut self, v: VarId, pts: PtsSet) -> bool {
        union_into(&mut self.var_pts[v.0 as usize], &pts)
    }

    fn var(&self, n: NodeId, name: &str) -> &PtsSet {
        &self.var_pts[self.index.operand(n, name).0 as usize]
    }

    fn step(&mut self, n: NodeId) -> bool {
        let idx = self.index;
        let mut changed = false;
        let mut before = Mem::new();
        for &p in &self.preds[n.0 as usize] {
            for (o, s) in &self.after[p.0 as usize] {
                union_into(before.entry(*o).or_default(), s);
            }
        }
        let mut after = before.clone();

        if idx.is_entry(n) {
            let g = idx.func_of(n);
            for cs in self.callers_of(g) {
                for &o in self.modref.mu_at(cs, g) {
                    let src = self.before[cs.0 as usize].get(&o).cloned().unwrap_or_default();
                    union_into(after.entry(o).or_default(), &src);
                }
                if let Some(Op::Call { args, .. }) = idx.instr(cs).map(|i| &i.op) {
                    for (i, &p) in idx.funcs[g].params.iter().enumerate() {
                        if let Some(a) = args.get(i) {
                            let pts = self.var(cs, a).clone();
                            changed |= self.set_var(p, pts);
                        }
                    }
                }
            }
        } else {
            let op = idx.instr(n).expect("instruction").op.clone();
            match &op {
                Op::Alloc { dst, .. } => {
                    let o = self.ander.objects.at_alloc(n).expect("object");
                    changed |= self.set_var(idx.operand(n, dst), PtsSet::from([o]));
                }
                Op::Addr { dst, symbol } => {
                    let o = self.ander.objects.symbol(symbol).expect("symbol");
                    changed |= self.set_var(idx.operand(n, dst), PtsSet::from([o]));
                }
                Op::Copy { dst, src } => {
                    let p = self.var(n, src).clone();
                    changed |= self.set_var(idx.operand(n, dst), p);
                }
                Op::Phi { dst, incoming } => {
                    let mut p = PtsSet::new();
                    for (v, _) in incoming {
                        p.extend(self.var(n, v).iter().copied());
                    }
                    changed |= self.set_var(idx.operand(n, dst), p);
                }
                Op::Field { dst, src, index } => {
                    let p = self.var(n, src).iter().map(|&o| self.ander.field_of(o, *index)).collect();
                    changed |= self.set_var(idx.operand(n, dst), p);
                }
                Op::Load { dst, ptr } => {
                    let mut p = PtsSet::new();
                    for o in self.var(n, ptr) {
                        if let Some(s) = before.get(o) {
                            p.extend(s.iter().copied());
                        }
                    }
                    changed |= self.set_var(idx.operand(n, dst), p);
                }
                Op::Store { ptr, val } => {
                    let pp = self.var(n, ptr).clone();
                    let quals = pp.iter().map(|&obj| CtxObject { ctx: Default::default(), obj }).collect();
                    let kill = self.singletons.kill_set(Mode::Fs, &quals);
                    let written = self.var(n, val).clone();
                    for &o in self.ander.pts_var(idx.operand(n, ptr)) {
                        let slot = after.entry(o).or_default();
                        if kill.kills(o) {
                            slot.clear();
                        }
                        if pp.contains(&o) {
                            slot.extend(written.iter().copied());
                        }
                    }
                }
                Op::Call { dst, .. } => {
                    let callees = self.resolved(n);
                    let all: Vec<usize> = self.ander.callees(n).collect();
                    let touched: PtsSet = all.iter().flat_map(|&g| self.modref.chi_at(n, g).iter().copied()).collect();
                    for &o in &touched {
                        let mut s = PtsSet::new();
                        for &g in &callees {
                            if self.modref.chi_at(n, g).contains(&o) {
                                let exit = idx.funcs[g].exit;
                                if let Some(v) = self.before[exit.0 as usize].get(&o) {
                                    s.extend(v.iter().copied());
                                }
                            } else if let Some(v) = before.get(&o) {
                                s.extend(v.iter().copied());
                            }
                        }
                        after.insert(o, s);
                    }
                    if let Some(d) = dst {
                        let mut p = PtsSet::new();
                        for &g in &callees {
                            if let Some(r) = idx.funcs[g].ret {
                                p.extend(self.var_pts[r.0 as usize].iter().copied());
                            }
                        }
                        changed |= self.set_var(idx.operand(n, d), p);
                    }
                }
                Op::Br { .. } | Op::Ret { .. } => {}
            }
        }
        after.retain(|_, s| !s.is_empty());
        before.retain(|_, s| !s.is_empty());
        if self.before[n.0 as usize] != before {
            self.before[n.0 as usize] = before;
            changed = true;
        }
        if self.after[n.0 as usize] != after {
            self.after[n.0 as usize] = after;
            changed = true;
        }
        changed
    }
}

/// Dense chaotic iteration to the least fixed point.
pub fn solve_fs_oracle(index: &Index, ander: &AndersenResult) -> FlowSensitiveResult {
    let n = index.node_count();
    let mut preds = vec![Vec::new(); n];
    for f in &index.funcs {
        for (b, nodes) in f.block_nodes.iter().enumerate() {
            for (i, &node) in nodes.iter().enumerate() {
                preds[node.0 as usize] = if i > 0 {
                    vec![nodes[i - 1]]
                } else if b == 0 {
                    vec![f.entry]
                } else {
                    f.cfg.preds[b].iter().filter_map(|&p| f.block_nodes[p].last().copied()).collect()
                };
            }
        }
    }
    let mut s = Solver {
        index,
        ander,
        modref: compute_modref(index, ander),
        singletons: SingletonInfo::new(index, ander),
        var_pts: vec![PtsSet::new(); index.vars.len()],
        before: vec![Mem::new(); n],
        after: vec![Mem::new(); n],
        preds,
    };
    loop {
        let mut changed = false;
        for node in index.all_nodes() {
            changed |= s.step(node);
        }
        if !changed {
            break;
        }
    }
    FlowSensitiveResult { var_pts: s.var_pts, before: s.before, after: s.after }
}
