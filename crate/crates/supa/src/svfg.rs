//! Sparse value-flow graph: def-use chains of top-level variables (direct
//! edges) and of address-taken objects (indirect edges), intra- and
//! inter-procedurally. Edge labels carry no SSA version.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use serde_json::json;

use crate::andersen::AndersenResult;
use crate::ir::{format_op, Index, NodeId, ObjId, Op, VarId};
use crate::memssa::{DefSite, MemSsa};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeVar {
    Top(VarId),
    Obj(ObjId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    /// Def → use of a top-level variable.
    Direct,
    /// Actual argument at a callsite → formal parameter at FunEntry.
    CallTop,
    /// Return operand at FunExit → result of a callsite.
    RetTop,
    /// Memory SSA def → use inside a function (including memory phis).
    Indirect,
    /// Object passed into a callee: callsite → FunEntry.
    CallAddr,
    /// Object passed back: FunExit → callsite.
    RetAddr,
}

impl EdgeKind {
    pub fn is_direct(self) -> bool {
        matches!(self, EdgeKind::Direct | EdgeKind::CallTop | EdgeKind::RetTop)
    }

    fn name(self) -> &'static str {
        match self {
            EdgeKind::Direct => "direct",
            EdgeKind::CallTop => "call",
            EdgeKind::RetTop => "ret",
            EdgeKind::Indirect => "indirect",
            EdgeKind::CallAddr => "call-indirect",
            EdgeKind::RetAddr => "ret-indirect",
        }
    }
}

/// Graph node: an instruction node, or a memory phi (`phi_base + id`).
pub type VNode = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub from: VNode,
    pub to: VNode,
    pub var: EdgeVar,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone)]
pub struct Svfg {
    pub edges: Vec<Edge>,
    pub phi_base: u32,
    pub node_count: u32,
    in_by_var: HashMap<(VNode, EdgeVar), Vec<usize>>,
    out_edges: Vec<Vec<usize>>,
}

impl Svfg {
    pub fn node_of(n: NodeId) -> VNode {
        n.0
    }

    pub fn phi_node(&self, id: u32) -> VNode {
        self.phi_base + id
    }

    pub fn as_phi(&self, v: VNode) -> Option<u32> {
        (v >= self.phi_base).then(|| v - self.phi_base)
    }

    /// Incoming edges of `node` for `var`, in deterministic order.
    pub fn in_edges(&self, node: VNode, var: EdgeVar) -> impl Iterator<Item = &Edge> {
        self.in_by_var.get(&(node, var)).into_iter().flat_map(move |v| v.iter().map(move |&i| &self.edges[i]))
    }

    pub fn out_edges(&self, node: VNode) -> impl Iterator<Item = &Edge> {
        self.out_edges[node as usize].iter().map(move |&i| &self.edges[i])
    }

    pub fn indirect_count(&self) -> usize {
        self.edges.iter().filter(|e| !e.kind.is_direct()).count()
    }
}

pub fn build_svfg(index: &Index, ander: &AndersenResult, ssa: &MemSsa) -> Svfg {
    let mut set: BTreeSet<Edge> = BTreeSet::new();
    let phi_base = index.node_count() as u32;
    let site_node = |s: DefSite| -> Option<VNode> {
        match s {
            DefSite::Initial => None,
            DefSite::Node(n) => Some(n.0),
            DefSite::Phi(p) => Some(phi_base + p),
        }
    };

    for (v, &d) in index.def_node.iter().enumerate() {
        let var = VarId(v as u32);
        for &u in &index.uses[v] {
            set.insert(Edge { from: d.0, to: u.0, var: EdgeVar::Top(var), kind: EdgeKind::Direct });
        }
    }
    for &cs in &index.callsites {
        let Some(Op::Call { dst, args, .. }) = index.instr(cs).map(|i| &i.op) else { continue };
        for g in ander.callees(cs) {
            let fi = &index.funcs[g];
            for (i, &p) in fi.params.iter().enumerate() {
                if i < args.len() {
                    set.insert(Edge { from: cs.0, to: fi.entry.0, var: EdgeVar::Top(p), kind: EdgeKind::CallTop });
                }
            }
            if let (Some(d), Some(_)) = (dst, fi.ret) {
                let dv = index.operand(cs, d);
                set.insert(Edge { from: fi.exit.0, to: cs.0, var: EdgeVar::Top(dv), kind: EdgeKind::RetTop });
            }
            for &o in ssa.modref.mu_at(cs, g) {
                set.insert(Edge { from: cs.0, to: fi.entry.0, var: EdgeVar::Obj(o), kind: EdgeKind::CallAddr });
            }
            for &o in ssa.modref.chi_at(cs, g) {
                set.insert(Edge { from: fi.exit.0, to: cs.0, var: EdgeVar::Obj(o), kind: EdgeKind::RetAddr });
            }
        }
    }
    for (&n, ann) in &ssa.annotations {
        let uses = ann.mu.iter().map(|(o, (s, _))| (*o, *s)).chain(ann.chi.iter().map(|(o, (_, s, _))| (*o, *s)));
        for (o, s) in uses {
            if let Some(from) = site_node(s) {
                set.insert(Edge { from, to: n.0, var: EdgeVar::Obj(o), kind: EdgeKind::Indirect });
            }
        }
    }
    for (pid, phi) in ssa.phis.iter().enumerate() {
        for (_, s, _) in &phi.incoming {
            if let Some(from) = site_node(*s) {
                set.insert(Edge {
                    from,
                    to: phi_base + pid as u32,
                    var: EdgeVar::Obj(phi.obj),
                    kind: EdgeKind::Indirect,
                });
            }
        }
    }

    let node_count = phi_base + ssa.phis.len() as u32;
    let edges: Vec<Edge> = set.into_iter().collect();
    let mut in_by_var: HashMap<(VNode, EdgeVar), Vec<usize>> = HashMap::new();
    let mut out_edges = vec![Vec::new(); node_count as usize];
    for (i, e) in edges.iter().enumerate() {
        in_by_var.entry((e.to, e.var)).or_default().push(i);
        out_edges[e.from as usize].push(i);
    }
    Svfg { edges, phi_base, node_count, in_by_var, out_edges }
}

fn node_text(index: &Index, ander: &AndersenResult, ssa: &MemSsa, g: &Svfg, v: VNode) -> (String, String) {
    match g.as_phi(v) {
        Some(p) => {
            let phi = &ssa.phis[p as usize];
            let f = &index.program.functions[phi.func];
            let label = format!("{}.memphi.{}", f.blocks[phi.block].name, ander.objects.display(phi.obj));
            let text = format!("{}{} = memphi", ander.objects.display(phi.obj), phi.version);
            (label, text)
        }
        None => {
            let n = NodeId(v);
            let text = match index.instr(n) {
                Some(ins) => format_op(&ins.op),
                None => "entry".to_string(),
            };
            (index.label(n).to_string(), text)
        }
    }
}

fn var_text(index: &Index, ander: &AndersenResult, var: EdgeVar) -> String {
    match var {
        EdgeVar::Top(v) => index.var_display(v),
        EdgeVar::Obj(o) => ander.objects.display(o),
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Deterministic DOT rendering; indirect edges are dashed.
pub fn export_dot(index: &Index, ander: &AndersenResult, ssa: &MemSsa, g: &Svfg) -> String {
    if g.node_count == 0 {
        return "digraph {}\n".to_string();
    }
    let mut out = String::from("digraph {\n");
    for v in 0..g.node_count {
        let (label, text) = node_text(index, ander, ssa, g, v);
        let _ = writeln!(out, "  n{v} [label=\"{}\"];", escape(&format!("{label}: {text}")));
    }
    for e in &g.edges {
        let style = if e.kind.is_direct() { "" } else { ", style=dashed" };
        let _ =
            writeln!(out, "  n{} -> n{} [label=\"{}\"{style}];", e.from, e.to, escape(&var_text(index, ander, e.var)));
    }
    out.push_str("}\n");
    out
}

pub fn export_json(index: &Index, ander: &AndersenResult, ssa: &MemSsa, g: &Svfg) -> serde_json::Value {
    let nodes: Vec<_> = (0..g.node_count)
        .map(|v| {
            let (label, text) = node_text(index, ander, ssa, g, v);
            json!({ "id": v, "label": label, "text": text })
        })
        .collect();
    let edges: Vec<_> = g
        .edges
        .iter()
        .map(|e| {
            json!({
                "from": e.from,
                "to": e.to,
                "var": var_text(index, ander, e.var),
                "kind": e.kind.name(),
            })
        })
        .collect();
    json!({ "nodes": nodes, "edges": edges })
}
