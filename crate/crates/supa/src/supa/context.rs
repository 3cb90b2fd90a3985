use std::collections::BTreeSet;
use std::fmt;

use crate::andersen::AndersenResult;
use crate::ir::{Index, NodeId, ObjId, ObjKind};

/// Call string of callsites, most recent last.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context {
    pub frames: Vec<NodeId>,
    /// Set once k-limiting dropped a frame.
    pub truncated: bool,
}

impl Context {
    pub fn empty() -> Self {
        Context::default()
    }

    pub fn is_context_free(&self) -> bool {
        self.frames.is_empty() && !self.truncated
    }

    /// Pushes a callsite; past `max_depth` the oldest frame is dropped.
    pub fn push(&self, cs: NodeId, max_depth: usize) -> Context {
        let mut c = self.clone();
        c.frames.push(cs);
        while c.frames.len() > max_depth {
            c.frames.remove(0);
            c.truncated = true;
        }
        c
    }

    /// Pops `cs` when it is on top. No-op on an empty stack, and
    /// `None` when the path is unrealizable.
    pub fn pop(&self, cs: NodeId) -> Option<Context> {
        match self.frames.last() {
            None => Some(self.clone()),
            Some(&top) if top == cs => {
                let mut c = self.clone();
                c.frames.pop();
                Some(c)
            }
            Some(_) => None,
        }
    }

    pub fn display(&self, index: &Index) -> String {
        let labels: Vec<&str> = self.frames.iter().map(|&n| index.label(n)).collect();
        let trunc = if self.truncated { "..," } else { "" };
        format!("[{trunc}{}]", labels.join(","))
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.frames.iter().map(|n| n.0.to_string()).collect();
        write!(f, "[{}{}]", if self.truncated { "..," } else { "" }, ids.join(","))
    }
}

/// An object qualified by the context it was allocated under.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CtxObject {
    pub ctx: Context,
    pub obj: ObjId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Fs,
    Fscs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Kill {
    Kill(ObjId),
    KillAll,
    KillNone,
}

impl Kill {
    pub fn kills(&self, o: ObjId) -> bool {
        match self {
            Kill::Kill(k) => *k == o,
            Kill::KillAll => true,
            Kill::KillNone => false,
        }
    }
}

/// Strong-update eligibility of objects.
#[derive(Debug, Clone)]
pub struct SingletonInfo {
    pub singletons: BTreeSet<ObjId>,
    heap_ok: BTreeSet<ObjId>,
    callsite_ok: BTreeSet<NodeId>,
    main: Option<usize>,
    main_called: bool,
    callee_funcs: std::collections::BTreeMap<NodeId, BTreeSet<usize>>,
    alloc_func: std::collections::BTreeMap<ObjId, usize>,
    callsite_func: std::collections::BTreeMap<NodeId, usize>,
}

impl SingletonInfo {
    pub fn new(index: &Index, ander: &AndersenResult) -> Self {
        let singletons: BTreeSet<ObjId> = ander.objects.ids().filter(|&o| ander.is_singleton(o)).collect();
        let mut heap_ok = BTreeSet::new();
        let mut alloc_func = std::collections::BTreeMap::new();
        for o in ander.objects.ids() {
            let obj = ander.objects.get(o);
            if obj.kind != ObjKind::Heap || obj.is_array || ander.collapsed.contains(&obj.base) {
                continue;
            }
            let (Some(f), Some(node)) = (obj.func, obj.alloc_node) else { continue };
            let in_loop = index.funcs[f].cfg.in_loop[index.block_of(node)];
            if !in_loop && !ander.recursive[f] {
                heap_ok.insert(o);
                alloc_func.insert(o, f);
            }
        }
        let mut callsite_ok = BTreeSet::new();
        let mut callsite_func = std::collections::BTreeMap::new();
        for &cs in &index.callsites {
            let f = index.func_of(cs);
            callsite_func.insert(cs, f);
            if !index.funcs[f].cfg.in_loop[index.block_of(cs)] && !ander.recursive[f] {
                callsite_ok.insert(cs);
            }
        }
        let main = index.main;
        let main_called = main.map(|m| ander.call_graph.values().any(|s| s.contains(&m))).unwrap_or(true);
        SingletonInfo {
            singletons,
            heap_ok,
            callsite_ok,
            main,
            main_called,
            callee_funcs: ander.call_graph.clone(),
            alloc_func,
            callsite_func,
        }
    }

    /// A heap object under `ctx` stands for exactly one runtime object.
    fn concrete(&self, ctx: &Context, o: ObjId) -> bool {
        if ctx.truncated || !self.heap_ok.contains(&o) || self.main_called {
            return false;
        }
        let Some(main) = self.main else { return false };
        let alloc_f = self.alloc_func[&o];
        let mut cur = main;
        for cs in &ctx.frames {
            if !self.callsite_ok.contains(cs) || self.callsite_func.get(cs) != Some(&cur) {
                return false;
            }
            let callees = &self.callee_funcs[cs];
            if callees.len() != 1 {
                return false;
            }
            cur = *callees.iter().next().unwrap();
        }
        cur == alloc_f
    }

    pub fn cxt_singleton(&self, ctx: &Context, o: ObjId) -> bool {
        self.singletons.contains(&o) || self.concrete(ctx, o)
    }

    pub fn kill_set(&self, mode: Mode, ptr_pts: &BTreeSet<CtxObject>) -> Kill {
        let objs: BTreeSet<ObjId> = ptr_pts.iter().map(|c| c.obj).collect();
        if objs.is_empty() {
            return Kill::KillAll;
        }
        if ptr_pts.len() != 1 {
            return Kill::KillNone;
        }
        let only = ptr_pts.iter().next().unwrap();
        let eligible = match mode {
            Mode::Fs => self.singletons.contains(&only.obj),
            Mode::Fscs => self.cxt_singleton(&only.ctx, only.obj),
        };
        if eligible {
            Kill::Kill(only.obj)
        } else {
            Kill::KillNone
        }
    }
}
