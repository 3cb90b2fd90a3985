//! Partial-SSA intermediate representation.
//!
//! Top-level variables are in SSA form; address-taken memory is only
//! reachable through `load`/`store`. Programs are parsed from the line
//! oriented `.svfir` format (see [`parse_program`]) and printed back with
//! [`print_program`].

mod cfg;
mod index;
mod object;
mod parse;
mod print;

pub use cfg::{BlockGraph, Dominators};
pub use index::{FuncInfo, Index, NodeId, NodeInfo, NodeKind, VarId, VarInfo};
pub use object::{AbstractObject, ObjId, ObjKind, ObjectTable};
pub use parse::parse_program;
pub use print::{format_op, print_program};

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub globals: Vec<Global>,
    pub functions: Vec<Function>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Global {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Function {
    pub name: String,
    pub params: Vec<String>,
    /// Label of the implicit FunEntry instruction.
    pub entry_label: String,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub instrs: Vec<Instr>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instr {
    pub label: String,
    pub op: Op,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AllocKind {
    Stack,
    Heap,
    /// Default-initialized heap memory (`calloc`-like).
    Heap0,
    /// Unknown abstract object standing for uninitialized contents.
    Uao,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Callee {
    Direct(String),
    Indirect(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Alloc {
        dst: String,
        kind: AllocKind,
        name: Option<String>,
        array: bool,
    },
    /// Address of a global object or a function.
    Addr {
        dst: String,
        symbol: String,
    },
    Copy {
        dst: String,
        src: String,
    },
    Phi {
        dst: String,
        incoming: Vec<(String, String)>,
    },
    Field {
        dst: String,
        src: String,
        index: u32,
    },
    Load {
        dst: String,
        ptr: String,
    },
    Store {
        ptr: String,
        val: String,
    },
    Call {
        dst: Option<String>,
        callee: Callee,
        args: Vec<String>,
    },
    Br {
        targets: Vec<String>,
    },
    Ret {
        val: Option<String>,
    },
}

impl Op {
    pub fn def(&self) -> Option<&str> {
        match self {
            Op::Alloc { dst, .. }
            | Op::Addr { dst, .. }
            | Op::Copy { dst, .. }
            | Op::Phi { dst, .. }
            | Op::Field { dst, .. }
            | Op::Load { dst, .. } => Some(dst),
            Op::Call { dst, .. } => dst.as_deref(),
            _ => None,
        }
    }

    /// Top-level variables read by this instruction, in operand order.
    pub fn uses(&self) -> Vec<&str> {
        match self {
            Op::Alloc { .. } | Op::Addr { .. } | Op::Br { .. } => vec![],
            Op::Copy { src, .. } | Op::Field { src, .. } => vec![src],
            Op::Phi { incoming, .. } => incoming.iter().map(|(v, _)| v.as_str()).collect(),
            Op::Load { ptr, .. } => vec![ptr],
            Op::Store { ptr, val } => vec![ptr, val],
            Op::Call { callee, args, .. } => {
                let mut out = Vec::new();
                if let Callee::Indirect(v) = callee {
                    out.push(v.as_str());
                }
                out.extend(args.iter().map(|a| a.as_str()));
                out
            }
            Op::Ret { val } => val.iter().map(|v| v.as_str()).collect(),
        }
    }

    pub fn is_terminator(&self) -> bool {
        matches!(self, Op::Br { .. } | Op::Ret { .. })
    }
}

impl Program {
    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions.iter().find(|f| f.name == name)
    }

    /// The entry function: `main` if present, else the first function.
    pub fn main_index(&self) -> Option<usize> {
        self.functions.iter().position(|f| f.name == "main").or(if self.functions.is_empty() { None } else { Some(0) })
    }

    /// Number of instructions other than FunEntry, FunExit and branches.
    pub fn body_len(&self) -> usize {
        self.functions
            .iter()
            .flat_map(|f| f.blocks.iter())
            .flat_map(|b| b.instrs.iter())
            .filter(|i| !i.op.is_terminator())
            .count()
    }
}

impl Function {
    pub fn instrs(&self) -> impl Iterator<Item = &Instr> {
        self.blocks.iter().flat_map(|b| b.instrs.iter())
    }

    pub fn block_index(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub rule: &'static str,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: [{}] {}", self.line, self.col, self.rule, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
pub struct Diagnostics(pub Vec<Diagnostic>);
