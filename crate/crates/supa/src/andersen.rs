//! Flow- and context-insensitive inclusion-based pre-analysis.
//!
//! Indirect calls are resolved while solving. A field derivation chain
//! longer than the number of field instructions in the program must
//! repeat some instruction, i.e. it lies on a positive-weight cycle; the
//! base object is then collapsed and the solve restarts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::ir::{Callee, Index, NodeId, ObjId, ObjKind, ObjectTable, Op, VarId};

pub type PtsSet = BTreeSet<ObjId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AndersenConfig {
    /// When false every field access resolves to the whole object.
    pub field_sensitive: bool,
}

impl Default for AndersenConfig {
    fn default() -> Self {
        AndersenConfig { field_sensitive: true }
    }
}

#[derive(Debug, Clone)]
pub struct AndersenResult {
    pub objects: ObjectTable,
    pub var_pts: Vec<PtsSet>,
    pub obj_pts: Vec<PtsSet>,
    /// Callsite → callee function indices.
    pub call_graph: BTreeMap<NodeId, BTreeSet<usize>>,
    /// Call-graph SCCs, each sorted, in a deterministic order.
    pub sccs: Vec<Vec<usize>>,
    pub scc_of: Vec<usize>,
    /// Functions on a call-graph cycle (including self-recursion).
    pub recursive: Vec<bool>,
    /// Base objects whose fields were merged into the whole object.
    pub collapsed: BTreeSet<ObjId>,
    pub diagnostics: Vec<String>,
    pub config: AndersenConfig,
}

impl AndersenResult {
    pub fn pts_var(&self, v: VarId) -> &PtsSet {
        &self.var_pts[v.0 as usize]
    }

    pub fn pts_obj(&self, o: ObjId) -> &PtsSet {
        static EMPTY: PtsSet = BTreeSet::new();
        self.obj_pts.get(o.0 as usize).unwrap_or(&EMPTY)
    }

    /// Field sub-object as seen by all later analyses.
    pub fn field_of(&self, o: ObjId, k: u32) -> ObjId {
        let base = self.objects.base(o);
        if !self.config.field_sensitive || self.collapsed.contains(&base) {
            return base;
        }
        self.objects.lookup_field(o, k).unwrap_or(base)
    }

    pub fn callees(&self, callsite: NodeId) -> impl Iterator<Item = usize> + '_ {
        self.call_graph.get(&callsite).into_iter().flat_map(|s| s.iter().copied())
    }

    pub fn same_scc(&self, f: usize, g: usize) -> bool {
        self.scc_of[f] == self.scc_of[g]
    }

    /// Objects eligible for flow-sensitive strong updates.
    pub fn is_singleton(&self, o: ObjId) -> bool {
        let obj = self.objects.get(o);
        if obj.is_array || self.collapsed.contains(&obj.base) {
            return false;
        }
        match obj.kind {
            ObjKind::Heap | ObjKind::Function | ObjKind::Uao => false,
            ObjKind::Global => true,
            ObjKind::Stack => !obj.func.map(|f| self.recursive[f]).unwrap_or(false),
        }
    }
}

struct Solver<'a> {
    index: &'a Index,
    config: AndersenConfig,
    objects: ObjectTable,
    collapsed: BTreeSet<ObjId>,
    max_path: usize,
    nvars: usize,
    pts: Vec<PtsSet>,
    succ: Vec<BTreeSet<usize>>,
    loads: Vec<Vec<VarId>>,
    stores: Vec<Vec<VarId>>,
    fields: Vec<Vec<(VarId, u32)>>,
    indirect: Vec<Vec<NodeId>>,
    call_graph: BTreeMap<NodeId, BTreeSet<usize>>,
    diagnostics: BTreeSet<String>,
    work: VecDeque<usize>,
    queued: Vec<bool>,
    restart: Option<ObjId>,
}

impl<'a> Solver<'a> {
    fn obj_node(&mut self, o: ObjId) -> usize {
        let n = self.nvars + o.0 as usize;
        while self.pts.len() <= n {
            self.pts.push(BTreeSet::new());
            self.succ.push(BTreeSet::new());
            self.queued.push(false);
        }
        n
    }

    fn push(&mut self, n: usize) {
        if !self.queued[n] {
            self.queued[n] = true;
            self.work.push_back(n);
        }
    }

    fn add_pts(&mut self, n: usize, o: ObjId) {
        if self.pts[n].insert(o) {
            self.push(n);
        }
    }

    fn add_edge(&mut self, from: usize, to: usize) {
        if from != to && self.succ[from].insert(to) {
            let src: Vec<ObjId> = self.pts[from].iter().copied().collect();
            let mut changed = false;
            for o in src {
                changed |= self.pts[to].insert(o);
            }
            if changed {
                self.push(to);
            }
        }
    }

    fn field(&mut self, o: ObjId, k: u32) -> ObjId {
        let base = self.objects.base(o);
        if !self.config.field_sensitive {
            if !self.objects.is_monolithic(o) {
                self.collapsed.insert(base);
            }
            return base;
        }
        if self.collapsed.contains(&base) {
            return base;
        }
        if self.objects.get(o).path.len() + 1 > self.max_path && !self.objects.is_monolithic(o) {
            self.restart = Some(base);
            return base;
        }
        self.objects.field(o, k)
    }

    fn connect_call(&mut self, callsite: NodeId, callee: usize) {
        let entry = self.call_graph.entry(callsite).or_default();
        if !entry.insert(callee) {
            return;
        }
        let ins = self.index.instr(callsite).unwrap();
        let Op::Call { dst, args, .. } = &ins.op else { return };
        let finfo = &self.index.funcs[callee];
        let params = finfo.params.clone();
        let ret = finfo.ret;
        for (a, p) in args.iter().zip(params.iter()) {
            let av = self.index.operand(callsite, a);
            self.add_edge(av.0 as usize, p.0 as usize);
        }
        if let (Some(d), Some(r)) = (dst, ret) {
            let dv = self.index.operand(callsite, d);
            self.add_edge(r.0 as usize, dv.0 as usize);
        }
    }

    fn setup(&mut self) {
        let index = self.index;
        for node in index.all_nodes() {
            let Some(ins) = index.instr(node) else { continue };
            let var = |name: &str| index.operand(node, name);
            match &ins.op {
                Op::Alloc { dst, .. } => {
                    let o = self.objects.at_alloc(node).unwrap();
                    self.obj_node(o);
                    self.add_pts(var(dst).0 as usize, o);
                }
                Op::Addr { dst, symbol } => {
                    let o = self.objects.symbol(symbol).unwrap();
                    self.obj_node(o);
                    self.add_pts(var(dst).0 as usize, o);
                }
                Op::Copy { dst, src } => self.add_edge(var(src).0 as usize, var(dst).0 as usize),
                Op::Phi { dst, incoming } => {
                    for (v, _) in incoming {
                        self.add_edge(var(v).0 as usize, var(dst).0 as usize);
                    }
                }
                Op::Field { dst, src, index: k } => self.fields[var(src).0 as usize].push((var(dst), *k)),
                Op::Load { dst, ptr } => self.loads[var(ptr).0 as usize].push(var(dst)),
                Op::Store { ptr, val } => self.stores[var(ptr).0 as usize].push(var(val)),
                Op::Call { callee, .. } => match callee {
                    Callee::Direct(f) => {
                        let fi = index.func(f).unwrap();
                        self.connect_call(node, fi);
                    }
                    Callee::Indirect(fp) => {
                        self.call_graph.entry(node).or_default();
                        self.indirect[var(fp).0 as usize].push(node);
                    }
                },
                Op::Br { .. } | Op::Ret { .. } => {}
            }
        }
    }

    fn run(&mut self) {
        while let Some(n) = self.work.pop_front() {
            self.queued[n] = false;
            if self.restart.is_some() {
                return;
            }
            let cur: Vec<ObjId> = self.pts[n].iter().copied().collect();
            if n < self.nvars {
                for o in &cur {
                    let on = self.obj_node(*o);
                    for dst in self.loads[n].clone() {
                        self.add_edge(on, dst.0 as usize);
                    }
                    for val in self.stores[n].clone() {
                        self.add_edge(val.0 as usize, on);
                    }
                    for (dst, k) in self.fields[n].clone() {
                        let f = self.field(*o, k);
                        self.obj_node(f);
                        self.add_pts(dst.0 as usize, f);
                    }
                    for cs in self.indirect[n].clone() {
                        let obj = self.objects.get(*o);
                        if obj.kind == ObjKind::Function && obj.path.is_empty() {
                            let fi = self.index.func(&obj.site).unwrap();
                            self.connect_call(cs, fi);
                        } else {
                            self.diagnostics.insert(format!(
                                "callsite {} may call non-function object {}",
                                self.index.label(cs),
                                self.objects.display(*o)
                            ));
                        }
                    }
                }
            }
            for s in self.succ[n].clone() {
                let mut changed = false;
                for o in &cur {
                    changed |= self.pts[s].insert(*o);
                }
                if changed {
                    self.push(s);
                }
            }
        }
    }
}

/// Solve the inclusion constraints of `index`'s program.
pub fn solve_andersen(index: &Index, config: AndersenConfig) -> AndersenResult {
    let field_instrs =
        index.all_nodes().filter(|&n| matches!(index.instr(n).map(|i| &i.op), Some(Op::Field { .. }))).count();
    let mut collapsed = BTreeSet::new();
    loop {
        let objects = ObjectTable::from_program(index);
        let nvars = index.vars.len();
        let mut s = Solver {
            index,
            config,
            objects,
            collapsed: collapsed.clone(),
            max_path: field_instrs,
            nvars,
            pts: vec![BTreeSet::new(); nvars],
            succ: vec![BTreeSet::new(); nvars],
            loads: vec![Vec::new(); nvars],
            stores: vec![Vec::new(); nvars],
            fields: vec![Vec::new(); nvars],
            indirect: vec![Vec::new(); nvars],
            call_graph: BTreeMap::new(),
            diagnostics: BTreeSet::new(),
            work: VecDeque::new(),
            queued: vec![false; nvars],
            restart: None,
        };
        let nobj = s.objects.len();
        for o in 0..nobj {
            s.obj_node(ObjId(o as u32));
        }
        s.setup();
        s.run();
        if let Some(base) = s.restart {
            // Object ids of whole objects are stable across restarts.
            collapsed.insert(base);
            continue;
        }
        return finish(index, s);
    }
}

fn finish(index: &Index, s: Solver) -> AndersenResult {
    let nvars = s.nvars;
    let nobj = s.objects.len();
    let mut obj_pts = vec![BTreeSet::new(); nobj];
    for (o, slot) in obj_pts.iter_mut().enumerate() {
        if let Some(p) = s.pts.get(nvars + o) {
            *slot = p.clone();
        }
    }
    let var_pts = s.pts[..nvars].to_vec();

    let nf = index.funcs.len();
    let mut g = DiGraph::<usize, ()>::new();
    let nodes: Vec<NodeIndex> = (0..nf).map(|f| g.add_node(f)).collect();
    let mut self_loop = vec![false; nf];
    for (cs, callees) in &s.call_graph {
        let caller = index.func_of(*cs);
        for &c in callees {
            g.update_edge(nodes[caller], nodes[c], ());
            if c == caller {
                self_loop[c] = true;
            }
        }
    }
    let mut sccs: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|n| n.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    sccs.sort();
    let mut scc_of = vec![0; nf];
    let mut recursive = vec![false; nf];
    for (i, c) in sccs.iter().enumerate() {
        for &f in c {
            scc_of[f] = i;
            recursive[f] = c.len() > 1 || self_loop[f];
        }
    }
    AndersenResult {
        objects: s.objects,
        var_pts,
        obj_pts,
        call_graph: s.call_graph,
        sccs,
        scc_of,
        recursive,
        collapsed: s.collapsed,
        diagnostics: s.diagnostics.into_iter().collect(),
        config: s.config,
    }
}
