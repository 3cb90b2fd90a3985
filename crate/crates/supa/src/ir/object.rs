use std::collections::HashMap;
use std::fmt;

use super::{AllocKind, Index, NodeId, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ObjKind {
    Stack,
    Heap,
    Global,
    Function,
    Uao,
}

/// An abstract memory object named by its allocation site, optionally
/// narrowed to a field path.
#[derive(Debug, Clone)]
pub struct AbstractObject {
    pub kind: ObjKind,
    /// Allocation label, or the symbol name for globals, functions and UAOs.
    pub site: String,
    pub path: Vec<u32>,
    /// Source-level name of the whole object.
    pub name: String,
    pub is_array: bool,
    pub default_init: bool,
    /// Function containing the allocation, for stack and heap objects.
    pub func: Option<usize>,
    pub alloc_node: Option<NodeId>,
    pub base: ObjId,
}

impl AbstractObject {
    /// UAO objects behave like globals everywhere except reporting.
    pub fn is_global_like(&self) -> bool {
        matches!(self.kind, ObjKind::Global | ObjKind::Uao)
    }
}

impl fmt::Display for AbstractObject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind == ObjKind::Uao {
            write!(f, "uao:")?;
        }
        write!(f, "{}", self.name)?;
        for k in &self.path {
            write!(f, ".{k}")?;
        }
        Ok(())
    }
}

type Key = (ObjKind, String, Vec<u32>);

/// Interning table for abstract objects.
#[derive(Debug, Clone, Default)]
pub struct ObjectTable {
    objs: Vec<AbstractObject>,
    by_key: HashMap<Key, ObjId>,
    by_node: HashMap<NodeId, ObjId>,
    by_symbol: HashMap<String, ObjId>,
}

impl ObjectTable {
    /// Whole objects for every allocation site, global and function.
    pub fn from_program(index: &Index) -> Self {
        let mut t = ObjectTable::default();
        for g in &index.program.globals {
            let id = t.intern(AbstractObject {
                kind: ObjKind::Global,
                site: g.name.clone(),
                path: vec![],
                name: g.name.clone(),
                is_array: false,
                default_init: true,
                func: None,
                alloc_node: None,
                base: ObjId(0),
            });
            t.by_symbol.insert(g.name.clone(), id);
        }
        for f in &index.program.functions {
            let id = t.intern(AbstractObject {
                kind: ObjKind::Function,
                site: f.name.clone(),
                path: vec![],
                name: f.name.clone(),
                is_array: false,
                default_init: true,
                func: None,
                alloc_node: None,
                base: ObjId(0),
            });
            t.by_symbol.insert(f.name.clone(), id);
        }
        for node in index.all_nodes() {
            let Some(ins) = index.instr(node) else { continue };
            let Op::Alloc { kind, name, array, .. } = &ins.op else { continue };
            let oname = name.clone().unwrap_or_else(|| ins.label.clone());
            let obj = match kind {
                AllocKind::Uao => AbstractObject {
                    kind: ObjKind::Uao,
                    site: oname.clone(),
                    path: vec![],
                    name: oname,
                    is_array: false,
                    default_init: true,
                    func: None,
                    alloc_node: None,
                    base: ObjId(0),
                },
                _ => AbstractObject {
                    kind: if *kind == AllocKind::Stack { ObjKind::Stack } else { ObjKind::Heap },
                    site: ins.label.clone(),
                    path: vec![],
                    name: oname,
                    is_array: *array,
                    default_init: *kind == AllocKind::Heap0,
                    func: Some(index.func_of(node)),
                    alloc_node: Some(node),
                    base: ObjId(0),
                },
            };
            let id = t.intern(obj);
            t.by_node.insert(node, id);
        }
        t
    }

    fn intern(&mut self, mut obj: AbstractObject) -> ObjId {
        let key = (obj.kind, obj.site.clone(), obj.path.clone());
        if let Some(&id) = self.by_key.get(&key) {
            return id;
        }
        let id = ObjId(self.objs.len() as u32);
        if obj.path.is_empty() {
            obj.base = id;
        }
        self.objs.push(obj);
        self.by_key.insert(key, id);
        id
    }

    pub fn get(&self, id: ObjId) -> &AbstractObject {
        &self.objs[id.0 as usize]
    }

    pub fn len(&self) -> usize {
        self.objs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjId> {
        (0..self.objs.len() as u32).map(ObjId)
    }

    /// Object allocated by an `alloca`/`heap`/`heap0`/`uao` instruction.
    pub fn at_alloc(&self, node: NodeId) -> Option<ObjId> {
        self.by_node.get(&node).copied()
    }

    /// Object of a global or function symbol.
    pub fn symbol(&self, name: &str) -> Option<ObjId> {
        self.by_symbol.get(name).copied()
    }

    pub fn base(&self, id: ObjId) -> ObjId {
        self.get(id).base
    }

    /// Objects that never get field sub-objects.
    pub fn is_monolithic(&self, id: ObjId) -> bool {
        let o = self.get(id);
        o.is_array || matches!(o.kind, ObjKind::Function | ObjKind::Uao)
    }

    /// Sub-object for field `k` of `id`, creating it if needed.
    pub fn field(&mut self, id: ObjId, k: u32) -> ObjId {
        if self.is_monolithic(id) {
            return id;
        }
        let mut o = self.get(id).clone();
        o.path.push(k);
        self.intern(o)
    }

    /// Existing sub-object for field `k`, without creating one.
    pub fn lookup_field(&self, id: ObjId, k: u32) -> Option<ObjId> {
        if self.is_monolithic(id) {
            return Some(id);
        }
        let o = self.get(id);
        let mut path = o.path.clone();
        path.push(k);
        self.by_key.get(&(o.kind, o.site.clone(), path)).copied()
    }

    pub fn find(&self, kind: ObjKind, site: &str, path: &[u32]) -> Option<ObjId> {
        self.by_key.get(&(kind, site.to_string(), path.to_vec())).copied()
    }

    /// Look an object up by its display name (e.g. `a`, `x.1`, `uao:a`).
    pub fn by_display(&self, text: &str) -> Option<ObjId> {
        self.ids().find(|&id| self.get(id).to_string() == text)
    }

    pub fn display(&self, id: ObjId) -> String {
        self.get(id).to_string()
    }
}
