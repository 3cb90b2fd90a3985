//! Staged, budgeted demand-driven points-to analysis over a partial-SSA IR.

pub mod andersen;
pub mod cli;
pub mod ir;
pub mod memssa;
pub mod oracle;
pub mod supa;
pub mod svfg;
pub mod uninit;

use andersen::{solve_andersen, AndersenConfig, AndersenResult};
use ir::{parse_program, Diagnostics, Index, Program};
use memssa::{build_memssa, compute_modref, MemSsa};
use supa::SingletonInfo;
use svfg::{build_svfg, Svfg};

/// Everything the query engine needs, built once per program.
pub struct Analysis {
    pub index: Index,
    pub ander: AndersenResult,
    pub ssa: MemSsa,
    pub svfg: Svfg,
    pub singletons: SingletonInfo,
}

impl Analysis {
    pub fn new(program: Program, config: AndersenConfig) -> Self {
        let index = Index::new(program);
        let ander = solve_andersen(&index, config);
        let modref = compute_modref(&index, &ander);
        let ssa = build_memssa(&index, &ander, modref);
        let svfg = build_svfg(&index, &ander, &ssa);
        let singletons = SingletonInfo::new(&index, &ander);
        Analysis { index, ander, ssa, svfg, singletons }
    }

    pub fn from_source(text: &str) -> Result<Self, Diagnostics> {
        Ok(Analysis::new(parse_program(text)?, AndersenConfig::default()))
    }
}
