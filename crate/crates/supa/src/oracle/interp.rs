//! Concrete execution of loop-free programs along every path through their
//! branches. Recursion is followed up to a fixed call depth; deeper paths
//! are dropped, which keeps every recorded fact a real one.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::andersen::AndersenResult;
use crate::ir::{Callee, Index, NodeId, ObjId, ObjKind, Op, VarId};

const MAX_PATHS: usize = 20_000;
const MAX_CALL_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrapKind {
    /// Load from memory that was never written on this path.
    ReadBeforeWrite,
    NullDeref,
    /// Indirect call through something other than a function.
    BadCall,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trap {
    pub node: NodeId,
    pub kind: TrapKind,
    /// Abstract object of the cell involved, if any.
    pub obj: Option<ObjId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InterpError {
    #[error("no entry function")]
    NoMain,
    #[error("function @{0} contains a loop")]
    Loop(String),
    #[error("more than {MAX_PATHS} paths")]
    TooManyPaths,
}

/// Facts observed over all executed paths, abstracted to object names.
#[derive(Debug, Clone, Default)]
pub struct ConcreteTrace {
    pub paths: usize,
    /// Top-level variable held a pointer to the object.
    pub var_facts: BTreeSet<(VarId, ObjId)>,
    /// At a load, the cell read held a pointer: (load, cell, target).
    pub load_facts: BTreeSet<(NodeId, ObjId, ObjId)>,
    /// After a store, the cell written holds a pointer.
    pub store_facts: BTreeSet<(NodeId, ObjId, ObjId)>,
    /// Contents of cells still live when the entry function returns.
    pub final_memory: BTreeSet<(ObjId, ObjId)>,
    pub traps: BTreeSet<Trap>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Addr {
    inst: usize,
    path: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Val {
    Null,
    Ptr(Addr),
}

#[derive(Debug, Clone)]
struct Frame {
    func: usize,
    env: HashMap<VarId, Val>,
    block: usize,
    pos: usize,
    /// Callsite waiting for this frame's return.
    caller: Option<NodeId>,
    /// Stack instances that die when the frame returns.
    locals: Vec<usize>,
}

#[derive(Debug, Clone)]
struct State {
    mem: HashMap<Addr, Val>,
    /// Abstract base object of each runtime instance.
    instances: Vec<ObjId>,
    dead: HashSet<usize>,
    frames: Vec<Frame>,
}

struct Interp<'a> {
    index: &'a Index,
    ander: &'a AndersenResult,
    /// Single instances of globals, functions and UAOs.
    statics: HashMap<ObjId, usize>,
    trace: ConcreteTrace,
}

enum Step {
    Continue,
    Fork(Vec<State>),
    Done,
    Trapped,
    /// Call depth bound reached.
    Cut,
}

impl Interp<'_> {
    fn abs(&self, st: &State, a: &Addr) -> ObjId {
        let mut o = st.instances[a.inst];
        for &k in &a.path {
            o = self.ander.field_of(o, k);
        }
        o
    }

    fn record_var(&mut self, st: &State, v: VarId, val: &Val) {
        if let Val::Ptr(a) = val {
            let o = self.abs(st, a);
            self.trace.var_facts.insert((v, o));
        }
    }

    fn get(&self, st: &State, n: NodeId, name: &str) -> Val {
        let v = self.index.operand(n, name);
        st.frames.last().unwrap().env.get(&v).cloned().unwrap_or(Val::Null)
    }

    fn set(&mut self, st: &mut State, n: NodeId, name: &str, val: Val) {
        let v = self.index.operand(n, name);
        self.record_var(st, v, &val);
        st.frames.last_mut().unwrap().env.insert(v, val);
    }

    fn trap(&mut self, n: NodeId, kind: TrapKind, obj: Option<ObjId>) -> Step {
        self.trace.traps.insert(Trap { node: n, kind, obj });
        Step::Trapped
    }

    /// Enter `block` from `from`, evaluating its phis simultaneously.
    fn enter_block(&mut self, st: &mut State, block: usize, from: usize) {
        let f = st.frames.last().unwrap().func;
        let func = &self.index.program.functions[f];
        let from_name = &func.blocks[from].name;
        let mut assigns = Vec::new();
        let mut pos = 0;
        for (i, ins) in func.blocks[block].instrs.iter().enumerate() {
            let Op::Phi { dst, incoming } = &ins.op else { break };
            let n = self.index.funcs[f].block_nodes[block][i];
            let val =
                incoming.iter().find(|(_, b)| b == from_name).map(|(v, _)| self.get(st, n, v)).unwrap_or(Val::Null);
            assigns.push((n, dst.clone(), val));
            pos = i + 1;
        }
        for (n, dst, val) in assigns {
            self.set(st, n, &dst, val);
        }
        let top = st.frames.last_mut().unwrap();
        top.block = block;
        top.pos = pos;
    }

    fn call(&mut self, st: &mut State, n: NodeId, g: usize, args: Vec<Val>) {
        let fi = &self.index.funcs[g];
        let mut env = HashMap::new();
        for (i, &p) in fi.params.iter().enumerate() {
            let val = args.get(i).cloned().unwrap_or(Val::Null);
            self.record_var(st, p, &val);
            env.insert(p, val);
        }
        st.frames.push(Frame { func: g, env, block: 0, pos: 0, caller: Some(n), locals: vec![] });
    }

    fn step(&mut self, st: &mut State) -> Step {
        let idx = self.index;
        let top = st.frames.last().unwrap();
        let (f, block, pos) = (top.func, top.block, top.pos);
        let n = idx.funcs[f].block_nodes[block][pos];
        st.frames.last_mut().unwrap().pos += 1;
        let op = idx.instr(n).expect("instruction").op.clone();
        match &op {
            Op::Alloc { dst, .. } => {
                let o = self.ander.objects.at_alloc(n).expect("object");
                let kind = self.ander.objects.get(o).kind;
                let inst = if kind == ObjKind::Uao {
                    self.statics[&o]
                } else {
                    st.instances.push(o);
                    st.instances.len() - 1
                };
                if kind == ObjKind::Stack {
                    st.frames.last_mut().unwrap().locals.push(inst);
                }
                self.set(st, n, dst, Val::Ptr(Addr { inst, path: vec![] }));
            }
            Op::Addr { dst, symbol } => {
                let o = self.ander.objects.symbol(symbol).expect("symbol");
                let inst = self.statics[&o];
                self.set(st, n, dst, Val::Ptr(Addr { inst, path: vec![] }));
            }
            Op::Copy { dst, src } => {
                let v = self.get(st, n, src);
                self.set(st, n, dst, v);
            }
            Op::Phi { .. } => {}
            Op::Field { dst, src, index } => {
                let v = match self.get(st, n, src) {
                    Val::Null => Val::Null,
                    Val::Ptr(mut a) => {
                        if !self.ander.objects.is_monolithic(st.instances[a.inst]) {
                            a.path.push(*index);
                        }
                        Val::Ptr(a)
                    }
                };
                self.set(st, n, dst, v);
            }
            Op::Load { dst, ptr } => {
                let Val::Ptr(a) = self.get(st, n, ptr) else {
                    return self.trap(n, TrapKind::NullDeref, None);
                };
                let cell = self.abs(st, &a);
                let v = match st.mem.get(&a) {
                    Some(v) => v.clone(),
                    None if self.ander.objects.get(st.instances[a.inst]).default_init => Val::Null,
                    None => return self.trap(n, TrapKind::ReadBeforeWrite, Some(cell)),
                };
                if let Val::Ptr(t) = &v {
                    let target = self.abs(st, t);
                    self.trace.load_facts.insert((n, cell, target));
                }
                self.set(st, n, dst, v);
            }
            Op::Store { ptr, val } => {
                let Val::Ptr(a) = self.get(st, n, ptr) else {
                    return self.trap(n, TrapKind::NullDeref, None);
                };
                let v = self.get(st, n, val);
                if let Val::Ptr(t) = &v {
                    let (cell, target) = (self.abs(st, &a), self.abs(st, t));
                    self.trace.store_facts.insert((n, cell, target));
                }
                st.mem.insert(a, v);
            }
            Op::Call { callee, args, .. } => {
                let g = match callee {
                    Callee::Direct(name) => idx.func(name).expect("callee"),
                    Callee::Indirect(fp) => {
                        let target = match self.get(st, n, fp) {
                            Val::Ptr(a) if a.path.is_empty() => {
                                let obj = self.ander.objects.get(st.instances[a.inst]);
                                (obj.kind == ObjKind::Function).then(|| idx.func(&obj.name)).flatten()
                            }
                            _ => None,
                        };
                        match target {
                            Some(g) => g,
                            None => return self.trap(n, TrapKind::BadCall, None),
                        }
                    }
                };
                if st.frames.len() >= MAX_CALL_DEPTH {
                    return Step::Cut;
                }
                let vals = args.iter().map(|a| self.get(st, n, a)).collect();
                self.call(st, n, g, vals);
            }
            Op::Br { targets } => {
                let func = &idx.program.functions[f];
                let blocks: Vec<usize> = targets.iter().map(|t| func.block_index(t).expect("target")).collect();
                let mut forks = Vec::new();
                for &b in &blocks[1..] {
                    let mut other = st.clone();
                    self.enter_block(&mut other, b, block);
                    forks.push(other);
                }
                self.enter_block(st, blocks[0], block);
                if !forks.is_empty() {
                    return Step::Fork(forks);
                }
            }
            Op::Ret { val } => {
                let v = val.as_ref().map(|v| self.get(st, n, v)).unwrap_or(Val::Null);
                let frame = st.frames.pop().unwrap();
                if frame.caller.is_some() {
                    st.dead.extend(frame.locals.iter().copied());
                }
                match frame.caller {
                    None => {
                        for (a, t) in &st.mem {
                            if st.dead.contains(&a.inst) {
                                continue;
                            }
                            if let Val::Ptr(t) = t {
                                let fact = (self.abs(st, a), self.abs(st, t));
                                self.trace.final_memory.insert(fact);
                            }
                        }
                        return Step::Done;
                    }
                    Some(cs) => {
                        if let Some(Op::Call { dst: Some(d), .. }) = idx.instr(cs).map(|i| &i.op) {
                            self.set(st, cs, d, v);
                        }
                    }
                }
            }
        }
        Step::Continue
    }
}

/// Runs every path of the entry function and collects abstracted facts.
pub fn interpret_concrete(index: &Index, ander: &AndersenResult) -> Result<ConcreteTrace, InterpError> {
    let main = index.main.ok_or(InterpError::NoMain)?;
    for (fi, f) in index.funcs.iter().enumerate() {
        let name = &index.program.functions[fi].name;
        if f.cfg.in_loop.iter().any(|&l| l) {
            return Err(InterpError::Loop(name.clone()));
        }
    }
    let mut statics = HashMap::new();
    let mut instances = Vec::new();
    for o in ander.objects.ids() {
        let obj = ander.objects.get(o);
        if obj.path.is_empty() && matches!(obj.kind, ObjKind::Global | ObjKind::Function | ObjKind::Uao) {
            statics.insert(o, instances.len());
            instances.push(o);
        }
    }
    let mut it = Interp { index, ander, statics, trace: ConcreteTrace::default() };
    let start = State {
        mem: HashMap::new(),
        instances,
        dead: HashSet::new(),
        frames: vec![Frame { func: main, env: HashMap::new(), block: 0, pos: 0, caller: None, locals: vec![] }],
    };
    let mut work = vec![start];
    let mut finished = 0;
    while let Some(mut st) = work.pop() {
        loop {
            match it.step(&mut st) {
                Step::Continue => {}
                Step::Fork(more) => {
                    work.extend(more);
                    if work.len() + finished > MAX_PATHS {
                        return Err(InterpError::TooManyPaths);
                    }
                }
                Step::Done | Step::Trapped | Step::Cut => break,
            }
        }
        finished += 1;
    }
    it.trace.paths = finished;
    Ok(it.trace)
}
