use std::collections::HashMap;

use super::cfg::{BlockGraph, Dominators};
use super::{Instr, Op, Program};

/// A node of the program: one instruction, or a function's FunEntry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Entry,
    Instr { block: usize, idx: usize },
}

#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub label: String,
    pub func: usize,
    pub kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct VarInfo {
    pub func: usize,
    pub name: String,
}

#[derive(Debug, Clone)]
pub struct FuncInfo {
    pub entry: NodeId,
    pub exit: NodeId,
    pub cfg: BlockGraph,
    pub dom: Dominators,
    /// Node ids of each block's instructions, in order.
    pub block_nodes: Vec<Vec<NodeId>>,
    pub params: Vec<VarId>,
    pub ret: Option<VarId>,
}

/// Numbering of nodes and variables of a validated program.
#[derive(Debug, Clone)]
pub struct Index {
    pub program: Program,
    pub nodes: Vec<NodeInfo>,
    pub vars: Vec<VarInfo>,
    pub funcs: Vec<FuncInfo>,
    pub def_node: Vec<NodeId>,
    pub uses: Vec<Vec<NodeId>>,
    pub callsites: Vec<NodeId>,
    pub main: Option<usize>,
    node_by_label: HashMap<String, NodeId>,
    var_by_name: HashMap<(usize, String), VarId>,
    func_by_name: HashMap<String, usize>,
}

impl Index {
    pub fn new(program: Program) -> Self {
        let mut nodes = Vec::new();
        let mut vars: Vec<VarInfo> = Vec::new();
        let mut funcs = Vec::new();
        let mut def_node = Vec::new();
        let mut node_by_label = HashMap::new();
        let mut var_by_name = HashMap::new();
        let mut func_by_name = HashMap::new();
        let mut callsites = Vec::new();

        for (fi, f) in program.functions.iter().enumerate() {
            func_by_name.insert(f.name.clone(), fi);
            let entry = NodeId(nodes.len() as u32);
            nodes.push(NodeInfo { label: f.entry_label.clone(), func: fi, kind: NodeKind::Entry });
            node_by_label.insert(f.entry_label.clone(), entry);
            let mut params = Vec::new();
            for p in &f.params {
                let v = VarId(vars.len() as u32);
                vars.push(VarInfo { func: fi, name: p.clone() });
                def_node.push(entry);
                var_by_name.insert((fi, p.clone()), v);
                params.push(v);
            }
            let mut block_nodes = Vec::new();
            let mut exit = entry;
            for (bi, b) in f.blocks.iter().enumerate() {
                let mut ids = Vec::new();
                for (ii, ins) in b.instrs.iter().enumerate() {
                    let id = NodeId(nodes.len() as u32);
                    nodes.push(NodeInfo {
                        label: ins.label.clone(),
                        func: fi,
                        kind: NodeKind::Instr { block: bi, idx: ii },
                    });
                    node_by_label.insert(ins.label.clone(), id);
                    if let Some(d) = ins.op.def() {
                        let v = VarId(vars.len() as u32);
                        vars.push(VarInfo { func: fi, name: d.to_string() });
                        def_node.push(id);
                        var_by_name.insert((fi, d.to_string()), v);
                    }
                    match ins.op {
                        Op::Ret { .. } => exit = id,
                        Op::Call { .. } => callsites.push(id),
                        _ => {}
                    }
                    ids.push(id);
                }
                block_nodes.push(ids);
            }
            let cfg = BlockGraph::new(f);
            let dom = Dominators::new(&cfg);
            funcs.push(FuncInfo { entry, exit, cfg, dom, block_nodes, params, ret: None });
        }
        let mut idx = Index {
            main: program.main_index(),
            program,
            nodes,
            vars,
            funcs,
            def_node,
            uses: Vec::new(),
            callsites,
            node_by_label,
            var_by_name,
            func_by_name,
        };
        let mut uses = vec![Vec::new(); idx.vars.len()];
        for n in 0..idx.nodes.len() {
            let node = NodeId(n as u32);
            if let Some(ins) = idx.instr(node) {
                for u in ins.op.uses() {
                    if let Some(v) = idx.var(idx.nodes[n].func, u) {
                        if !uses[v.0 as usize].contains(&node) {
                            uses[v.0 as usize].push(node);
                        }
                    }
                }
            }
        }
        idx.uses = uses;
        for fi in 0..idx.funcs.len() {
            let exit = idx.funcs[fi].exit;
            if let Some(Op::Ret { val: Some(v) }) = idx.instr(exit).map(|i| &i.op) {
                idx.funcs[fi].ret = idx.var(fi, v);
            }
        }
        idx
    }

    pub fn instr(&self, node: NodeId) -> Option<&Instr> {
        let info = &self.nodes[node.0 as usize];
        match info.kind {
            NodeKind::Entry => None,
            NodeKind::Instr { block, idx } => Some(&self.program.functions[info.func].blocks[block].instrs[idx]),
        }
    }

    pub fn node(&self, label: &str) -> Option<NodeId> {
        self.node_by_label.get(label).copied()
    }

    pub fn var(&self, func: usize, name: &str) -> Option<VarId> {
        self.var_by_name.get(&(func, name.to_string())).copied()
    }

    pub fn func(&self, name: &str) -> Option<usize> {
        self.func_by_name.get(name).copied()
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node.0 as usize].label
    }

    pub fn func_of(&self, node: NodeId) -> usize {
        self.nodes[node.0 as usize].func
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0 as usize].name
    }

    /// The variable an operand name refers to inside `node`'s function.
    pub fn operand(&self, node: NodeId, name: &str) -> VarId {
        self.var(self.func_of(node), name).expect("validated operand")
    }

    pub fn is_entry(&self, node: NodeId) -> bool {
        matches!(self.nodes[node.0 as usize].kind, NodeKind::Entry)
    }

    /// Block containing a node; FunEntry belongs to block 0.
    pub fn block_of(&self, node: NodeId) -> usize {
        match self.nodes[node.0 as usize].kind {
            NodeKind::Entry => 0,
            NodeKind::Instr { block, .. } => block,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn all_nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// `func/name` rendering used in reports.
    pub fn var_display(&self, v: VarId) -> String {
        let info = &self.vars[v.0 as usize];
        format!("%{}", info.name)
    }

    pub fn is_global_symbol(&self, name: &str) -> bool {
        self.program.globals.iter().any(|g| g.name == name)
    }
}
