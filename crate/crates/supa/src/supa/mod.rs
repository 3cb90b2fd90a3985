//! Demand-driven, budgeted points-to queries with staged refinement.
//!
//! A query asks for the points-to set of a variable (or the contents of an
//! object) at a program point. Each stage walks the value-flow graph
//! backwards under an edge budget; when a stage runs out, the next stage
//! in the plan takes over, and the pre-analysis result is the last resort.

mod context;
mod walk;

pub use context::{Context, CtxObject, Kill, Mode, SingletonInfo};
pub use walk::Pts;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use dashmap::DashMap;
use rayon::prelude::*;
use serde_json::json;

use crate::ir::{NodeId, ObjId, VarId};
use crate::Analysis;
use walk::{object_demand, Demand, Walk};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryVar {
    Top(VarId),
    Obj(ObjId),
}

/// Variable or object `var` right after `node`, under calling context `ctx`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QueryKey {
    pub ctx: Context,
    pub node: NodeId,
    pub var: QueryVar,
}

impl QueryKey {
    pub fn top(node: NodeId, v: VarId) -> Self {
        QueryKey { ctx: Context::empty(), node, var: QueryVar::Top(v) }
    }

    pub fn obj(node: NodeId, o: ObjId) -> Self {
        QueryKey { ctx: Context::empty(), node, var: QueryVar::Obj(o) }
    }

    pub fn display(&self, a: &Analysis) -> String {
        let var = match self.var {
            QueryVar::Top(v) => a.index.var_display(v),
            QueryVar::Obj(o) => a.ander.objects.display(o),
        };
        let ctx = if self.ctx == Context::empty() { String::new() } else { self.ctx.display(&a.index) };
        format!("{ctx}{}:{var}", a.index.label(self.node))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StageSpec {
    pub mode: Mode,
    /// Edge budget; `None` is unlimited.
    pub budget: Option<u64>,
}

impl StageSpec {
    pub fn fs(budget: Option<u64>) -> Self {
        StageSpec { mode: Mode::Fs, budget }
    }

    pub fn fscs(budget: Option<u64>) -> Self {
        StageSpec { mode: Mode::Fscs, budget }
    }
}

impl fmt::Display for StageSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Fs => "fs",
            Mode::Fscs => "fscs",
        };
        match self.budget {
            Some(b) => write!(f, "{mode}:{b}"),
            None => write!(f, "{mode}:inf"),
        }
    }
}

impl FromStr for StageSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (mode, budget) = s.split_once(':').ok_or_else(|| format!("stage '{s}' is not MODE:BUDGET"))?;
        let mode = match mode.trim().to_ascii_lowercase().as_str() {
            "fs" => Mode::Fs,
            "fscs" => Mode::Fscs,
            other => return Err(format!("unknown stage kind '{other}'")),
        };
        let budget = match budget.trim() {
            "inf" | "∞" => None,
            b => Some(b.parse::<u64>().map_err(|_| format!("bad budget '{b}'"))?),
        };
        Ok(StageSpec { mode, budget })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagePlan(pub Vec<StageSpec>);

impl StagePlan {
    pub fn fs(budget: Option<u64>) -> Self {
        StagePlan(vec![StageSpec::fs(budget)])
    }
}

impl FromStr for StagePlan {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let stages = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<Vec<_>, _>>()?;
        if stages.is_empty() {
            return Err("empty stage plan".into());
        }
        Ok(StagePlan(stages))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PtsResult {
    pub pts: Pts,
    pub fully_resolved: bool,
    /// Stage that produced the answer; `None` for the fallback.
    pub stage: Option<StageSpec>,
    /// Edges traversed by all stages tried for this answer.
    pub edges: u64,
    pub strong_updates: BTreeSet<NodeId>,
    /// Largest number of growing re-evaluations of any cycle head.
    pub rounds: u32,
}

impl PtsResult {
    /// Context-erased objects.
    pub fn objects(&self) -> BTreeSet<ObjId> {
        self.pts.iter().map(|c| c.obj).collect()
    }

    pub fn display_pts(&self, a: &Analysis) -> Vec<String> {
        let mut out: Vec<String> = self
            .pts
            .iter()
            .map(|c| {
                let name = a.ander.objects.display(c.obj);
                if c.ctx == Context::empty() {
                    name
                } else {
                    format!("({},{name})", c.ctx.display(&a.index))
                }
            })
            .collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn to_json(&self, a: &Analysis, key: &QueryKey) -> serde_json::Value {
        json!({
            "query": key.display(a),
            "pts": self.display_pts(a),
            "fullyResolved": self.fully_resolved,
            "stage": self.stage.map(|s| s.to_string()).unwrap_or_else(|| "fallback".into()),
            "edges": self.edges,
            "strongUpdates": self.strong_updates.iter().map(|&n| a.index.label(n)).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone)]
enum Outcome {
    Resolved(PtsResult),
    Exhausted(u64),
}

#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub queries: usize,
    pub resolved: usize,
    pub fallbacks: usize,
    pub strong_updates: usize,
    /// Edges actually walked in this call; cache hits walk none.
    pub edges_walked: u64,
    pub cache_hits: usize,
    pub elapsed: Duration,
}

impl Stats {
    pub fn mean_time(&self) -> Duration {
        if self.queries == 0 {
            Duration::ZERO
        } else {
            self.elapsed / self.queries as u32
        }
    }
}

pub struct Engine<'a> {
    pub analysis: &'a Analysis,
    pub max_depth: usize,
    cache: Option<DashMap<(QueryKey, StageSpec), Outcome>>,
}

pub const DEFAULT_CXT_DEPTH: usize = 3;

impl<'a> Engine<'a> {
    pub fn new(analysis: &'a Analysis) -> Self {
        Engine { analysis, max_depth: DEFAULT_CXT_DEPTH, cache: Some(DashMap::new()) }
    }

    pub fn with_cache(mut self, on: bool) -> Self {
        self.cache = on.then(DashMap::new);
        self
    }

    pub fn with_max_depth(mut self, k: usize) -> Self {
        self.max_depth = k;
        self
    }

    /// Parses `l16:%z`, `l16:a` or `[l3,l7]l16:%z`.
    pub fn parse_query(&self, text: &str) -> Result<QueryKey, String> {
        let a = self.analysis;
        let text = text.trim();
        let (ctx, rest) = if let Some(inner) = text.strip_prefix('[') {
            let close = inner.find(']').ok_or("unterminated context")?;
            let list = inner[..close].trim().trim_start_matches('(').trim_end_matches(')');
            let mut frames = Vec::new();
            for l in list.split(',').map(str::trim).filter(|l| !l.is_empty()) {
                let n = a.index.node(l).ok_or_else(|| format!("unknown callsite label '{l}'"))?;
                if !a.index.callsites.contains(&n) {
                    return Err(format!("'{l}' is not a callsite"));
                }
                frames.push(n);
            }
            (Context { frames, truncated: false }, &inner[close + 1..])
        } else {
            (Context::empty(), text)
        };
        let (label, var) = rest.split_once(':').ok_or("query must be LABEL:VAR")?;
        let node = a.index.node(label.trim()).ok_or_else(|| format!("unknown label '{label}'"))?;
        let var = var.trim();
        let qv = if let Some(name) = var.strip_prefix('%') {
            let v = a.index.var(a.index.func_of(node), name).ok_or_else(|| format!("unknown variable '%{name}'"))?;
            QueryVar::Top(v)
        } else {
            let o = a.ander.objects.by_display(var).ok_or_else(|| format!("unknown object '{var}'"))?;
            if object_demand(a, Context::empty(), node, o).is_none() {
                return Err(format!("object '{var}' is not accessed at {label}"));
            }
            QueryVar::Obj(o)
        };
        Ok(QueryKey { ctx, node, var: qv })
    }

    /// Pre-analysis answer.
    pub fn fallback(&self, key: &QueryKey) -> PtsResult {
        let a = self.analysis;
        let objs = match key.var {
            QueryVar::Top(v) => a.ander.pts_var(v).clone(),
            QueryVar::Obj(o) => a.ander.pts_obj(o).clone(),
        };
        PtsResult {
            pts: objs.into_iter().map(|obj| CtxObject { ctx: Context::empty(), obj }).collect(),
            fully_resolved: false,
            stage: None,
            edges: 0,
            strong_updates: BTreeSet::new(),
            rounds: 0,
        }
    }

    fn demand(&self, key: &QueryKey, mode: Mode) -> Option<Demand> {
        let ctx = match mode {
            Mode::Fs => Context::empty(),
            Mode::Fscs => key.ctx.clone(),
        };
        match key.var {
            QueryVar::Top(v) => Some(Demand::Top(ctx, v)),
            QueryVar::Obj(o) => object_demand(self.analysis, ctx, key.node, o),
        }
    }

    fn compute_stage(&self, key: &QueryKey, spec: StageSpec) -> Outcome {
        let Some(d) = self.demand(key, spec.mode) else { return Outcome::Exhausted(0) };
        let mut walk = Walk::new(self.analysis, spec.mode, spec.budget.unwrap_or(u64::MAX), self.max_depth);
        match walk.run(&d) {
            Ok(pts) => Outcome::Resolved(PtsResult {
                pts,
                fully_resolved: true,
                stage: Some(spec),
                edges: walk.edges,
                strong_updates: walk.strong_updates(),
                rounds: walk.rounds,
            }),
            Err(_) => Outcome::Exhausted(walk.edges.min(spec.budget.unwrap_or(u64::MAX))),
        }
    }

    /// One stage, consulting the cache. The flag reports a cache hit.
    fn stage(&self, key: &QueryKey, spec: StageSpec) -> (Outcome, bool) {
        let Some(cache) = &self.cache else { return (self.compute_stage(key, spec), false) };
        let ck = (key.clone(), spec);
        if let Some(hit) = cache.get(&ck) {
            return (hit.clone(), true);
        }
        let out = self.compute_stage(key, spec);
        let stored = cache.entry(ck).or_insert(out).clone();
        (stored, false)
    }

    /// Context-free answers of an earlier FSCS stage are valid FS answers.
    fn reuse_backward(&self, key: &QueryKey, plan: &StagePlan, upto: usize) -> Option<PtsResult> {
        let cache = self.cache.as_ref()?;
        if plan.0[upto].mode != Mode::Fs || !key.ctx.is_context_free() {
            return None;
        }
        plan.0[..upto].iter().filter(|s| s.mode == Mode::Fscs).find_map(|s| match cache.get(&(key.clone(), *s)) {
            Some(r) => match r.value() {
                Outcome::Resolved(p) if p.pts.iter().all(|c| c.ctx.is_context_free()) => Some(p.clone()),
                _ => None,
            },
            None => None,
        })
    }

    pub fn run_hybrid(&self, key: &QueryKey, plan: &StagePlan) -> PtsResult {
        self.run_hybrid_counted(key, plan).0
    }

    fn run_hybrid_counted(&self, key: &QueryKey, plan: &StagePlan) -> (PtsResult, u64, bool) {
        let mut spent = 0;
        let mut walked = 0;
        let mut all_hits = true;
        for (i, &spec) in plan.0.iter().enumerate() {
            if let Some(r) = self.reuse_backward(key, plan, i) {
                return (PtsResult { edges: spent + r.edges, ..r }, walked, all_hits);
            }
            let (out, hit) = self.stage(key, spec);
            all_hits &= hit;
            match out {
                Outcome::Resolved(r) => {
                    if !hit {
                        walked += r.edges;
                    }
                    return (PtsResult { edges: spent + r.edges, ..r }, walked, all_hits);
                }
                Outcome::Exhausted(e) => {
                    if !hit {
                        walked += e;
                    }
                    spent += e;
                }
            }
        }
        (PtsResult { edges: spent, ..self.fallback(key) }, walked, all_hits)
    }

    pub fn query_fs(&self, key: &QueryKey, budget: Option<u64>) -> PtsResult {
        self.run_hybrid(key, &StagePlan::fs(budget))
    }

    pub fn query_fscs(&self, key: &QueryKey, budget: Option<u64>) -> PtsResult {
        self.run_hybrid(key, &StagePlan(vec![StageSpec::fscs(budget)]))
    }

    /// Answers `keys` in order on a pool of `workers` threads.
    pub fn answer_all(&self, keys: &[QueryKey], plan: &StagePlan, workers: usize) -> (Vec<PtsResult>, Stats) {
        let start = Instant::now();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().expect("thread pool");
        let rows: Vec<(PtsResult, u64, bool)> =
            pool.install(|| keys.par_iter().map(|k| self.run_hybrid_counted(k, plan)).collect());
        let mut stats = Stats { queries: keys.len(), elapsed: start.elapsed(), ..Stats::default() };
        let mut results = Vec::with_capacity(rows.len());
        for (r, walked, hit) in rows {
            if r.fully_resolved {
                stats.resolved += 1;
            } else {
                stats.fallbacks += 1;
            }
            stats.strong_updates += r.strong_updates.len();
            stats.edges_walked += walked;
            stats.cache_hits += usize::from(hit && self.cache.is_some());
            results.push(r);
        }
        (results, stats)
    }

    /// Every load in the program as a query on its result.
    pub fn load_queries(&self) -> Vec<QueryKey> {
        let a = self.analysis;
        a.index
            .all_nodes()
            .filter_map(|n| match a.index.instr(n).map(|i| &i.op) {
                Some(crate::ir::Op::Load { dst, .. }) => Some(QueryKey::top(n, a.index.operand(n, dst))),
                _ => None,
            })
            .collect()
    }
}

/// Serializes results with keys sorted, one JSON array.
pub fn results_json(a: &Analysis, keys: &[QueryKey], results: &[PtsResult]) -> String {
    let rows: Vec<serde_json::Value> = keys.iter().zip(results).map(|(k, r)| r.to_json(a, k)).collect();
    serde_json::to_string_pretty(&rows).expect("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_plans_parse_and_print() {
        let plan: StagePlan = "fscs:10000, fs:inf".parse().unwrap();
        assert_eq!(plan.0, vec![StageSpec::fscs(Some(10000)), StageSpec::fs(None)]);
        assert_eq!(plan.0[1].to_string(), "fs:inf");
        assert!("".parse::<StagePlan>().is_err());
        assert!("fs".parse::<StagePlan>().is_err());
        assert!("cs:1".parse::<StagePlan>().is_err());
        assert!("fs:-1".parse::<StagePlan>().is_err());
    }
}
