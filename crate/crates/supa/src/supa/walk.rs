//! Budgeted backward traversal of the value-flow graph for one stage.
//!
//! Demands are evaluated depth-first with memoization. A demand that is
//! re-entered while still on the stack reads its current approximation;
//! the outermost demand of such a cycle re-evaluates until neither its own
//! value nor that of any demand computed under it changes, and everything
//! computed under it is then final.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::context::{Context, CtxObject, Mode};
use crate::ir::{Callee, NodeId, ObjId, ObjKind, Op, VarId};
use crate::svfg::{EdgeKind, EdgeVar, Svfg, VNode};
use crate::Analysis;

pub type Pts = BTreeSet<CtxObject>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum Demand {
    /// Points-to set of a top-level variable.
    Top(Context, VarId),
    /// Value of an object as defined at a node (store, callsite χ,
    /// FunEntry χ or memory phi).
    Def(Context, VNode, ObjId),
    /// Value of an object flowing into a node along intra-procedural edges.
    In(Context, VNode, ObjId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Exhausted;

type R<T> = Result<T, Exhausted>;

const NONE: usize = usize::MAX;

pub(crate) struct Walk<'a> {
    a: &'a Analysis,
    mode: Mode,
    max_depth: usize,
    budget: u64,
    pub edges: u64,
    memo: HashMap<Demand, Pts>,
    done: HashSet<Demand>,
    on_stack: HashMap<Demand, usize>,
    depth: usize,
    pending: Vec<Demand>,
    /// Number of times a demand inside an unfinished cycle changed value.
    changes: u64,
    /// Last kill decision per store demand; the final evaluation wins.
    store_kills: HashMap<Demand, (NodeId, bool)>,
    pub rounds: u32,
}

impl<'a> Walk<'a> {
    pub fn new(a: &'a Analysis, mode: Mode, budget: u64, max_depth: usize) -> Self {
        Walk {
            a,
            mode,
            max_depth,
            budget,
            edges: 0,
            memo: HashMap::new(),
            done: HashSet::new(),
            on_stack: HashMap::new(),
            depth: 0,
            pending: Vec::new(),
            changes: 0,
            store_kills: HashMap::new(),
            rounds: 0,
        }
    }

    pub fn run(&mut self, d: &Demand) -> R<Pts> {
        if self.budget == 0 {
            return Err(Exhausted);
        }
        self.eval(d).map(|(p, _)| p)
    }

    pub fn strong_updates(&self) -> BTreeSet<NodeId> {
        self.store_kills.values().filter(|(_, k)| *k).map(|(n, _)| *n).collect()
    }

    fn via(&mut self, d: Demand) -> R<(Pts, usize)> {
        if !self.done.contains(&d) {
            self.edges += 1;
            if self.edges > self.budget {
                return Err(Exhausted);
            }
        }
        self.eval(&d)
    }

    fn eval(&mut self, d: &Demand) -> R<(Pts, usize)> {
        if self.done.contains(d) {
            return Ok((self.memo[d].clone(), NONE));
        }
        if let Some(&at) = self.on_stack.get(d) {
            return Ok((self.memo.get(d).cloned().unwrap_or_default(), at));
        }
        let me = self.depth;
        self.depth += 1;
        self.on_stack.insert(d.clone(), me);
        let pending_start = self.pending.len();
        let mut grew = 0;
        let out = loop {
            let seen = self.changes;
            let (val, low) = self.compute(d)?;
            let changed = self.memo.insert(d.clone(), val.clone()).unwrap_or_default() != val;
            if low < me {
                self.changes += u64::from(changed);
                self.pending.push(d.clone());
                break (val, low);
            }
            if low == me && (changed || self.changes != seen) {
                grew += 1;
                self.pending.truncate(pending_start);
                continue;
            }
            for p in self.pending.drain(pending_start..) {
                self.done.insert(p);
            }
            self.done.insert(d.clone());
            break (val, NONE);
        };
        self.on_stack.remove(d);
        self.depth -= 1;
        self.rounds = self.rounds.max(grew);
        Ok(out)
    }

    fn push(&self, ctx: &Context, cs: NodeId, callee: usize) -> Context {
        match self.mode {
            Mode::Fs => Context::empty(),
            Mode::Fscs => {
                if self.a.ander.same_scc(self.a.index.func_of(cs), callee) {
                    ctx.clone()
                } else {
                    ctx.push(cs, self.max_depth)
                }
            }
        }
    }

    fn pop(&self, ctx: &Context, cs: NodeId, callee: usize) -> Option<Context> {
        match self.mode {
            Mode::Fs => Some(Context::empty()),
            Mode::Fscs => {
                if self.a.ander.same_scc(self.a.index.func_of(cs), callee) {
                    Some(ctx.clone())
                } else {
                    ctx.pop(cs)
                }
            }
        }
    }

    fn obj_ctx(&self, ctx: &Context, o: ObjId) -> Context {
        let kind = self.a.ander.objects.get(o).kind;
        if self.mode == Mode::Fscs && matches!(kind, ObjKind::Stack | ObjKind::Heap) {
            ctx.clone()
        } else {
            Context::empty()
        }
    }

    /// Callees of `cs` as resolved by this stage.
    fn callees(&mut self, ctx: &Context, cs: NodeId) -> R<(BTreeSet<usize>, usize)> {
        let a = self.a;
        let Some(Op::Call { callee, .. }) = a.index.instr(cs).map(|i| &i.op) else {
            return Ok((BTreeSet::new(), NONE));
        };
        let known: BTreeSet<usize> = a.ander.callees(cs).collect();
        match callee {
            Callee::Direct(name) => Ok((a.index.func(name).into_iter().filter(|g| known.contains(g)).collect(), NONE)),
            Callee::Indirect(fp) => {
                let v = a.index.operand(cs, fp);
                let (pts, low) = self.via(Demand::Top(ctx.clone(), v))?;
                let found = pts
                    .iter()
                    .filter_map(|c| {
                        let obj = a.ander.objects.get(c.obj);
                        (obj.kind == ObjKind::Function).then(|| a.index.func(&obj.name)).flatten()
                    })
                    .filter(|g| known.contains(g))
                    .collect();
                Ok((found, low))
            }
        }
    }

    fn compute(&mut self, d: &Demand) -> R<(Pts, usize)> {
        match d {
            Demand::Top(ctx, v) => self.top(ctx, *v),
            Demand::Def(ctx, n, o) => self.def(d, ctx, *n, *o),
            Demand::In(ctx, n, o) => self.incoming(ctx, *n, *o),
        }
    }

    fn top(&mut self, ctx: &Context, v: VarId) -> R<(Pts, usize)> {
        let a = self.a;
        let n = a.index.def_node[v.0 as usize];
        let mut out = Pts::new();
        let mut low = NONE;
        if a.index.is_entry(n) {
            let f = a.index.func_of(n);
            let pos = a.index.funcs[f].params.iter().position(|&p| p == v).expect("formal parameter");
            let sites: Vec<NodeId> = a
                .svfg
                .in_edges(n.0, EdgeVar::Top(v))
                .filter(|e| e.kind == EdgeKind::CallTop)
                .map(|e| NodeId(e.from))
                .collect();
            for cs in sites {
                let Some(cctx) = self.pop(ctx, cs, f) else { continue };
                let (callees, l) = self.callees(&cctx, cs)?;
                low = low.min(l);
                if !callees.contains(&f) {
                    continue;
                }
                let Some(Op::Call { args, .. }) = a.index.instr(cs).map(|i| &i.op) else { continue };
                let actual = a.index.operand(cs, &args[pos]);
                let (p, l) = self.via(Demand::Top(cctx, actual))?;
                low = low.min(l);
                out.extend(p);
            }
            return Ok((out, low));
        }
        let op = &a.index.instr(n).expect("instruction").op;
        match op {
            Op::Alloc { .. } => {
                let o = a.ander.objects.at_alloc(n).expect("allocation object");
                out.insert(CtxObject { ctx: self.obj_ctx(ctx, o), obj: o });
            }
            Op::Addr { symbol, .. } => {
                let o = a.ander.objects.symbol(symbol).expect("symbol object");
                out.insert(CtxObject { ctx: Context::empty(), obj: o });
            }
            Op::Copy { src, .. } => {
                let (p, l) = self.via(Demand::Top(ctx.clone(), a.index.operand(n, src)))?;
                out = p;
                low = l;
            }
            Op::Phi { incoming, .. } => {
                for (var, _) in incoming {
                    let (p, l) = self.via(Demand::Top(ctx.clone(), a.index.operand(n, var)))?;
                    low = low.min(l);
                    out.extend(p);
                }
            }
            Op::Field { src, index, .. } => {
                let (p, l) = self.via(Demand::Top(ctx.clone(), a.index.operand(n, src)))?;
                low = l;
                out = p.into_iter().map(|c| CtxObject { obj: a.ander.field_of(c.obj, *index), ctx: c.ctx }).collect();
            }
            Op::Load { ptr, .. } => {
                let (pq, l) = self.via(Demand::Top(ctx.clone(), a.index.operand(n, ptr)))?;
                low = l;
                let objs: BTreeSet<ObjId> = pq.iter().map(|c| c.obj).collect();
                for o in objs {
                    let (p, l) = self.incoming(ctx, n.0, o)?;
                    low = low.min(l);
                    out.extend(p);
                }
            }
            Op::Call { .. } => {
                let (callees, l) = self.callees(ctx, n)?;
                low = l;
                for g in callees {
                    let Some(r) = a.index.funcs[g].ret else { continue };
                    let cctx = self.push(ctx, n, g);
                    let (p, l) = self.via(Demand::Top(cctx, r))?;
                    low = low.min(l);
                    out.extend(p);
                }
            }
            Op::Store { .. } | Op::Br { .. } | Op::Ret { .. } => unreachable!("no definition"),
        }
        Ok((out, low))
    }

    fn def(&mut self, d: &Demand, ctx: &Context, vn: VNode, o: ObjId) -> R<(Pts, usize)> {
        let a = self.a;
        if a.svfg.as_phi(vn).is_some() {
            return self.incoming(ctx, vn, o);
        }
        let n = NodeId(vn);
        let mut out = Pts::new();
        let mut low = NONE;
        if a.index.is_entry(n) {
            let g = a.index.func_of(n);
            let sites: Vec<NodeId> = a
                .svfg
                .in_edges(vn, EdgeVar::Obj(o))
                .filter(|e| e.kind == EdgeKind::CallAddr)
                .map(|e| NodeId(e.from))
                .collect();
            for cs in sites {
                let Some(cctx) = self.pop(ctx, cs, g) else { continue };
                let (callees, l) = self.callees(&cctx, cs)?;
                low = low.min(l);
                if !callees.contains(&g) {
                    continue;
                }
                let (p, l) = self.via(Demand::In(cctx, cs.0, o))?;
                low = low.min(l);
                out.extend(p);
            }
            return Ok((out, low));
        }
        match &a.index.instr(n).expect("instruction").op {
            Op::Store { ptr, val } => {
                let (pp, l) = self.via(Demand::Top(ctx.clone(), a.index.operand(n, ptr)))?;
                low = l;
                let kill = a.singletons.kill_set(self.mode, &pp);
                let killed = kill.kills(o);
                self.store_kills.insert(d.clone(), (n, killed));
                if pp.iter().any(|c| c.obj == o) {
                    let (p, l) = self.via(Demand::Top(ctx.clone(), a.index.operand(n, val)))?;
                    low = low.min(l);
                    out.extend(p);
                }
                if !killed {
                    let (p, l) = self.incoming(ctx, vn, o)?;
                    low = low.min(l);
                    out.extend(p);
                }
            }
            Op::Call { .. } => {
                let (callees, l) = self.callees(ctx, n)?;
                low = l;
                let mut bypass = false;
                for g in callees {
                    if a.ssa.modref.chi_at(n, g).contains(&o) {
                        let exit = a.index.funcs[g].exit;
                        let cctx = self.push(ctx, n, g);
                        let (p, l) = self.via(Demand::In(cctx, exit.0, o))?;
                        low = low.min(l);
                        out.extend(p);
                    } else {
                        bypass = true;
                    }
                }
                if bypass {
                    let (p, l) = self.incoming(ctx, vn, o)?;
                    low = low.min(l);
                    out.extend(p);
                }
            }
            _ => unreachable!("node defines no memory"),
        }
        Ok((out, low))
    }

    /// Union over intra-procedural indirect in-edges, each charged.
    fn incoming(&mut self, ctx: &Context, vn: VNode, o: ObjId) -> R<(Pts, usize)> {
        let froms: Vec<VNode> = self
            .a
            .svfg
            .in_edges(vn, EdgeVar::Obj(o))
            .filter(|e| e.kind == EdgeKind::Indirect)
            .map(|e| e.from)
            .collect();
        let mut out = Pts::new();
        let mut low = NONE;
        for from in froms {
            let (p, l) = self.via(Demand::Def(ctx.clone(), from, o))?;
            low = low.min(l);
            out.extend(p);
        }
        Ok((out, low))
    }
}

/// Demand standing for the value of `o` right after `node`.
pub(crate) fn object_demand(a: &Analysis, ctx: Context, node: NodeId, o: ObjId) -> Option<Demand> {
    let ann = a.ssa.annotations.get(&node)?;
    if ann.chi.contains_key(&o) {
        Some(Demand::Def(ctx, Svfg::node_of(node), o))
    } else if ann.mu.contains_key(&o) {
        Some(Demand::In(ctx, Svfg::node_of(node), o))
    } else {
        None
    }
}
