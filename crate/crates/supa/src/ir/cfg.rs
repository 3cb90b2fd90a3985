use petgraph::algo::{dominators, tarjan_scc};
use petgraph::graph::{DiGraph, NodeIndex};

use super::{Function, Op};

/// Block-level control-flow graph of one function. Block 0 is the entry.
#[derive(Debug, Clone)]
pub struct BlockGraph {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
    pub reachable: Vec<bool>,
    /// Blocks that lie on a CFG cycle.
    pub in_loop: Vec<bool>,
}

impl BlockGraph {
    pub fn new(f: &Function) -> Self {
        let n = f.blocks.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for (bi, b) in f.blocks.iter().enumerate() {
            if let Some(Op::Br { targets }) = b.instrs.last().map(|i| &i.op) {
                for t in targets {
                    if let Some(ti) = f.block_index(t) {
                        if !succs[bi].contains(&ti) {
                            succs[bi].push(ti);
                            preds[ti].push(bi);
                        }
                    }
                }
            }
        }
        let mut reachable = vec![false; n];
        let mut stack = if n > 0 { vec![0] } else { vec![] };
        while let Some(b) = stack.pop() {
            if !reachable[b] {
                reachable[b] = true;
                stack.extend(succs[b].iter().copied());
            }
        }
        let g = to_graph(&succs);
        let mut in_loop = vec![false; n];
        for scc in tarjan_scc(&g) {
            let cyclic = scc.len() > 1 || succs[scc[0].index()].contains(&scc[0].index());
            if cyclic {
                for b in scc {
                    in_loop[b.index()] = true;
                }
            }
        }
        BlockGraph { succs, preds, reachable, in_loop }
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    /// Reverse post-order from the entry block.
    pub fn rpo(&self) -> Vec<usize> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut post = Vec::with_capacity(n);
        if n == 0 {
            return post;
        }
        let mut stack = vec![(0usize, 0usize)];
        seen[0] = true;
        while let Some((b, i)) = stack.pop() {
            if i < self.succs[b].len() {
                stack.push((b, i + 1));
                let s = self.succs[b][i];
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(b);
            }
        }
        post.reverse();
        post
    }
}

fn to_graph(succs: &[Vec<usize>]) -> DiGraph<(), ()> {
    let mut g = DiGraph::new();
    let nodes: Vec<NodeIndex> = (0..succs.len()).map(|_| g.add_node(())).collect();
    for (b, ss) in succs.iter().enumerate() {
        for &s in ss {
            g.add_edge(nodes[b], nodes[s], ());
        }
    }
    g
}

/// Dominator tree and dominance frontiers over a [`BlockGraph`].
#[derive(Debug, Clone)]
pub struct Dominators {
    pub idom: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub frontier: Vec<Vec<usize>>,
}

impl Dominators {
    pub fn new(cfg: &BlockGraph) -> Self {
        let n = cfg.len();
        let mut idom = vec![None; n];
        if n > 0 {
            let g = to_graph(&cfg.succs);
            let doms = dominators::simple_fast(&g, NodeIndex::new(0));
            for (b, slot) in idom.iter_mut().enumerate() {
                if b != 0 && cfg.reachable[b] {
                    *slot = doms.immediate_dominator(NodeIndex::new(b)).map(|d| d.index());
                }
            }
        }
        let mut children = vec![Vec::new(); n];
        for (b, d) in idom.iter().enumerate() {
            if let Some(d) = d {
                children[*d].push(b);
            }
        }
        let mut frontier = vec![Vec::new(); n];
        for b in 0..n {
            if cfg.preds[b].len() < 2 || !cfg.reachable[b] {
                continue;
            }
            for &p in &cfg.preds[b] {
                if !cfg.reachable[p] {
                    continue;
                }
                let mut runner = Some(p);
                while let Some(r) = runner {
                    if Some(r) == idom[b] {
                        break;
                    }
                    if !frontier[r].contains(&b) {
                        frontier[r].push(b);
                    }
                    runner = idom[r];
                }
            }
        }
        for f in frontier.iter_mut() {
            f.sort_unstable();
        }
        Dominators { idom, children, frontier }
    }

    /// Does block `a` dominate block `b`?
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        let mut cur = Some(b);
        while let Some(c) = cur {
            if c == a {
                return true;
            }
            cur = self.idom[c];
        }
        false
    }

    /// Iterated dominance frontier of a set of blocks.
    pub fn iterated_frontier(&self, blocks: &[usize]) -> Vec<usize> {
        let mut result: Vec<usize> = Vec::new();
        let mut work: Vec<usize> = blocks.to_vec();
        let mut seen = vec![false; self.idom.len()];
        while let Some(b) = work.pop() {
            for &f in &self.frontier[b] {
                if !seen[f] {
                    seen[f] = true;
                    result.push(f);
                    work.push(f);
                }
            }
        }
        result.sort_unstable();
        result
    }
}
