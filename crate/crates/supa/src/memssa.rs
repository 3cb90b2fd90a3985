//! Mod-ref side effects and memory SSA for address-taken objects.
//!
//! Callee side effects reach a callsite only for objects reachable in the
//! pre-analysis points-to graph from the callsite's actuals, its result or
//! from globals. A callee's FunEntry carries `chi` for every object passed
//! in by some callsite and its FunExit carries `mu` for every object
//! passed back.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write;

use crate::andersen::{AndersenResult, PtsSet};
use crate::ir::{format_op, Index, NodeId, ObjId, Op};

#[derive(Debug, Clone, Default)]
pub struct ModRefSummary {
    pub use_per_instr: BTreeMap<NodeId, PtsSet>,
    pub def_per_instr: BTreeMap<NodeId, PtsSet>,
    pub use_per_func: Vec<PtsSet>,
    pub def_per_func: Vec<PtsSet>,
    /// (callsite, callee) → objects passed in.
    pub call_mu: BTreeMap<(NodeId, usize), PtsSet>,
    /// (callsite, callee) → objects passed back.
    pub call_chi: BTreeMap<(NodeId, usize), PtsSet>,
}

impl ModRefSummary {
    pub fn mu_at(&self, cs: NodeId, callee: usize) -> &PtsSet {
        static EMPTY: PtsSet = BTreeSet::new();
        self.call_mu.get(&(cs, callee)).unwrap_or(&EMPTY)
    }

    pub fn chi_at(&self, cs: NodeId, callee: usize) -> &PtsSet {
        static EMPTY: PtsSet = BTreeSet::new();
        self.call_chi.get(&(cs, callee)).unwrap_or(&EMPTY)
    }
}

/// Objects a callee may legitimately touch on behalf of a callsite.
pub fn escaping_objects(index: &Index, ander: &AndersenResult, cs: NodeId) -> PtsSet {
    let mut by_base: HashMap<ObjId, Vec<ObjId>> = HashMap::new();
    for o in ander.objects.ids() {
        by_base.entry(ander.objects.base(o)).or_default().push(o);
    }
    let mut work: Vec<ObjId> = Vec::new();
    if let Some(ins) = index.instr(cs) {
        if let Op::Call { dst, args, .. } = &ins.op {
            for a in args.iter().chain(dst.iter()) {
                work.extend(ander.pts_var(index.operand(cs, a)).iter().copied());
            }
        }
    }
    work.extend(ander.objects.ids().filter(|&o| ander.objects.get(o).is_global_like()));
    let mut seen = PtsSet::new();
    while let Some(o) = work.pop() {
        if !seen.insert(o) {
            continue;
        }
        work.extend(ander.pts_obj(o).iter().copied());
        if let Some(sib) = by_base.get(&ander.objects.base(o)) {
            work.extend(sib.iter().copied());
        }
    }
    seen
}

pub fn compute_modref(index: &Index, ander: &AndersenResult) -> ModRefSummary {
    let nf = index.funcs.len();
    let mut s = ModRefSummary {
        use_per_func: vec![PtsSet::new(); nf],
        def_per_func: vec![PtsSet::new(); nf],
        ..Default::default()
    };
    for node in index.all_nodes() {
        let Some(ins) = index.instr(node) else { continue };
        let f = index.func_of(node);
        match &ins.op {
            Op::Load { ptr, .. } => {
                let set = ander.pts_var(index.operand(node, ptr)).clone();
                s.use_per_func[f].extend(set.iter().copied());
                s.use_per_instr.insert(node, set);
            }
            Op::Store { ptr, .. } => {
                let set = ander.pts_var(index.operand(node, ptr)).clone();
                s.def_per_func[f].extend(set.iter().copied());
                s.def_per_instr.insert(node, set);
            }
            _ => {}
        }
    }
    let escapes: BTreeMap<NodeId, PtsSet> =
        index.callsites.iter().map(|&cs| (cs, escaping_objects(index, ander, cs))).collect();
    loop {
        let mut changed = false;
        for &cs in &index.callsites {
            let caller = index.func_of(cs);
            let reach = &escapes[&cs];
            for g in ander.callees(cs) {
                let mu: PtsSet =
                    s.use_per_func[g].union(&s.def_per_func[g]).filter(|o| reach.contains(o)).copied().collect();
                let chi: PtsSet = s.def_per_func[g].iter().filter(|o| reach.contains(o)).copied().collect();
                for &o in &mu {
                    changed |= s.use_per_func[caller].insert(o);
                }
                for &o in &chi {
                    changed |= s.def_per_func[caller].insert(o);
                }
                s.call_mu.insert((cs, g), mu);
                s.call_chi.insert((cs, g), chi);
            }
        }
        if !changed {
            break;
        }
    }
    for &cs in &index.callsites {
        let mut u = PtsSet::new();
        let mut d = PtsSet::new();
        for g in ander.callees(cs) {
            u.extend(s.mu_at(cs, g).iter().copied());
            d.extend(s.chi_at(cs, g).iter().copied());
        }
        s.use_per_instr.insert(cs, u);
        s.def_per_instr.insert(cs, d);
    }
    s
}

/// Where the value of an object version comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefSite {
    /// Live-in value with no definition in the function.
    Initial,
    Node(NodeId),
    Phi(u32),
}

#[derive(Debug, Clone)]
pub struct MemPhi {
    pub func: usize,
    pub block: usize,
    pub obj: ObjId,
    pub version: u32,
    /// (predecessor block, reaching def, version)
    pub incoming: Vec<(usize, DefSite, u32)>,
}

#[derive(Debug, Clone, Default)]
pub struct Annotation {
    /// Objects used: object → (reaching def, version).
    pub mu: BTreeMap<ObjId, (DefSite, u32)>,
    /// Objects defined: object → (new version, used def, used version).
    pub chi: BTreeMap<ObjId, (u32, DefSite, u32)>,
}

#[derive(Debug, Clone)]
pub struct MemSsa {
    pub modref: ModRefSummary,
    pub annotations: BTreeMap<NodeId, Annotation>,
    pub phis: Vec<MemPhi>,
}

impl MemSsa {
    /// Reaching definition of `obj` used at `node` (by its mu or chi).
    pub fn reaching(&self, node: NodeId, obj: ObjId) -> Option<DefSite> {
        let a = self.annotations.get(&node)?;
        a.mu.get(&obj).map(|m| m.0).or_else(|| a.chi.get(&obj).map(|c| c.1))
    }
}

fn collect_sets(
    index: &Index,
    ander: &AndersenResult,
    modref: &ModRefSummary,
) -> (BTreeMap<NodeId, PtsSet>, BTreeMap<NodeId, PtsSet>) {
    let mut mu: BTreeMap<NodeId, PtsSet> = BTreeMap::new();
    let mut chi: BTreeMap<NodeId, PtsSet> = BTreeMap::new();
    for node in index.all_nodes() {
        let Some(ins) = index.instr(node) else { continue };
        match &ins.op {
            Op::Load { .. } => {
                mu.insert(node, modref.use_per_instr[&node].clone());
            }
            Op::Store { .. } => {
                chi.insert(node, modref.def_per_instr[&node].clone());
            }
            Op::Call { .. } => {
                mu.insert(node, modref.use_per_instr[&node].clone());
                chi.insert(node, modref.def_per_instr[&node].clone());
            }
            _ => {}
        }
    }
    for &cs in &index.callsites {
        for g in ander.callees(cs) {
            let fi = &index.funcs[g];
            chi.entry(fi.entry).or_default().extend(modref.mu_at(cs, g).iter().copied());
            mu.entry(fi.exit).or_default().extend(modref.chi_at(cs, g).iter().copied());
        }
    }
    (mu, chi)
}

pub fn build_memssa(index: &Index, ander: &AndersenResult, modref: ModRefSummary) -> MemSsa {
    let (mu_sets, chi_sets) = collect_sets(index, ander, &modref);
    let mut ssa = MemSsa { modref, annotations: BTreeMap::new(), phis: Vec::new() };
    for fi in 0..index.funcs.len() {
        rename_function(index, fi, &mu_sets, &chi_sets, &mut ssa);
    }
    ssa
}

fn rename_function(
    index: &Index,
    fi: usize,
    mu_sets: &BTreeMap<NodeId, PtsSet>,
    chi_sets: &BTreeMap<NodeId, PtsSet>,
    ssa: &mut MemSsa,
) {
    let info = &index.funcs[fi];
    let nblocks = info.block_nodes.len();
    let nodes_of = |b: usize| -> Vec<NodeId> {
        let mut v = Vec::new();
        if b == 0 {
            v.push(info.entry);
        }
        v.extend(info.block_nodes[b].iter().copied());
        v
    };
    let mut objs = PtsSet::new();
    let mut def_blocks: BTreeMap<ObjId, Vec<usize>> = BTreeMap::new();
    for b in 0..nblocks {
        for n in nodes_of(b) {
            if let Some(s) = mu_sets.get(&n) {
                objs.extend(s.iter().copied());
            }
            if let Some(s) = chi_sets.get(&n) {
                for &o in s {
                    objs.insert(o);
                    def_blocks.entry(o).or_default().push(b);
                }
            }
        }
    }
    // Memory phis at iterated dominance frontiers, per object.
    let mut block_phis: Vec<Vec<u32>> = vec![Vec::new(); nblocks];
    for &o in &objs {
        let Some(defs) = def_blocks.get(&o) else { continue };
        let mut seeds = defs.clone();
        seeds.push(0);
        for b in info.dom.iterated_frontier(&seeds) {
            let id = ssa.phis.len() as u32;
            ssa.phis.push(MemPhi { func: fi, block: b, obj: o, version: 0, incoming: Vec::new() });
            block_phis[b].push(id);
        }
    }
    let mut next: BTreeMap<ObjId, u32> = objs.iter().map(|&o| (o, 2)).collect();
    let mut stacks: BTreeMap<ObjId, Vec<(DefSite, u32)>> =
        objs.iter().map(|&o| (o, vec![(DefSite::Initial, 1)])).collect();

    // Iterative dominator-tree walk: (block, entering?)
    let mut work = vec![(0usize, true)];
    let mut pushed: Vec<Vec<ObjId>> = vec![Vec::new(); nblocks];
    while let Some((b, enter)) = work.pop() {
        if !enter {
            for o in pushed[b].drain(..) {
                stacks.get_mut(&o).unwrap().pop();
            }
            continue;
        }
        for &pid in &block_phis[b] {
            let o = ssa.phis[pid as usize].obj;
            let v = next[&o];
            *next.get_mut(&o).unwrap() += 1;
            ssa.phis[pid as usize].version = v;
            stacks.get_mut(&o).unwrap().push((DefSite::Phi(pid), v));
            pushed[b].push(o);
        }
        for n in nodes_of(b) {
            let mut ann = Annotation::default();
            if let Some(s) = mu_sets.get(&n) {
                for &o in s {
                    ann.mu.insert(o, *stacks[&o].last().unwrap());
                }
            }
            if let Some(s) = chi_sets.get(&n) {
                for &o in s {
                    let (site, ver) = *stacks[&o].last().unwrap();
                    let v = next[&o];
                    *next.get_mut(&o).unwrap() += 1;
                    ann.chi.insert(o, (v, site, ver));
                    stacks.get_mut(&o).unwrap().push((DefSite::Node(n), v));
                    pushed[b].push(o);
                }
            }
            if !ann.mu.is_empty() || !ann.chi.is_empty() {
                ssa.annotations.insert(n, ann);
            }
        }
        for &s in &info.cfg.succs[b] {
            for &pid in &block_phis[s] {
                let o = ssa.phis[pid as usize].obj;
                let (site, ver) = *stacks[&o].last().unwrap();
                ssa.phis[pid as usize].incoming.push((b, site, ver));
            }
        }
        work.push((b, false));
        for &c in info.dom.children[b].iter().rev() {
            work.push((c, true));
        }
    }
    for p in ssa.phis.iter_mut().filter(|p| p.func == fi) {
        p.incoming.sort_by_key(|i| i.0);
    }
}

/// Render the annotated program (`mu a1`, `chi a2 = a1`, memory phis).
pub fn dump_memssa(index: &Index, ander: &AndersenResult, ssa: &MemSsa) -> String {
    let name = |o: ObjId| ander.objects.display(o);
    let mut out = String::new();
    for (fi, f) in index.program.functions.iter().enumerate() {
        let info = &index.funcs[fi];
        let _ = writeln!(out, "func @{}", f.name);
        for (bi, b) in f.blocks.iter().enumerate() {
            let _ = writeln!(out, "{}:", b.name);
            for p in ssa.phis.iter().filter(|p| p.func == fi && p.block == bi) {
                let ins: Vec<String> = p
                    .incoming
                    .iter()
                    .map(|(pb, _, v)| format!("{}: {}{}", f.blocks[*pb].name, name(p.obj), v))
                    .collect();
                let _ = writeln!(out, "  {}{} = memphi({})", name(p.obj), p.version, ins.join(", "));
            }
            let mut nodes = Vec::new();
            if bi == 0 {
                nodes.push(info.entry);
            }
            nodes.extend(info.block_nodes[bi].iter().copied());
            for n in nodes {
                let text = match index.instr(n) {
                    Some(ins) => format_op(&ins.op),
                    None => "entry".to_string(),
                };
                let mut anns = Vec::new();
                if let Some(a) = ssa.annotations.get(&n) {
                    for (o, (_, v)) in &a.mu {
                        anns.push(format!("mu {}{}", name(*o), v));
                    }
                    for (o, (v, _, u)) in &a.chi {
                        anns.push(format!("chi {n}{v} = {n}{u}", n = name(*o)));
                    }
                }
                if anns.is_empty() {
                    let _ = writeln!(out, "  {}: {}", index.label(n), text);
                } else {
                    let _ = writeln!(out, "  {}: {}  ; {}", index.label(n), text, anns.join("; "));
                }
            }
        }
    }
    out
}
