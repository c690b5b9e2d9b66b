//! Control-flow graph queries over a single function.

use std::collections::{BTreeMap, BTreeSet};

use super::Function;

/// Predecessor map keyed by block label. Every block appears as a key.
pub fn cfg_predecessors(f: &Function) -> BTreeMap<String, BTreeSet<String>> {
    let mut preds: BTreeMap<String, BTreeSet<String>> = f
        .blocks
        .iter()
        .map(|b| (b.label.clone(), BTreeSet::new()))
        .collect();
    for b in &f.blocks {
        for s in b.successors() {
            if let Some(set) = preds.get_mut(s) {
                set.insert(b.label.clone());
            }
        }
    }
    preds
}

/// Index-based CFG. Edges to unknown labels are dropped.
#[derive(Clone, Debug)]
pub struct Cfg {
    pub succs: Vec<Vec<usize>>,
    pub preds: Vec<Vec<usize>>,
}

impl Cfg {
    pub fn new(f: &Function) -> Self {
        let n = f.blocks.len();
        let mut succs = vec![Vec::new(); n];
        let mut preds = vec![Vec::new(); n];
        for (i, b) in f.blocks.iter().enumerate() {
            for s in b.successors() {
                if let Some(j) = f.block_index(s) {
                    if !succs[i].contains(&j) {
                        succs[i].push(j);
                        preds[j].push(i);
                    }
                }
            }
        }
        Cfg { succs, preds }
    }

    pub fn len(&self) -> usize {
        self.succs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.succs.is_empty()
    }

    /// Blocks reachable from the entry, in reverse postorder.
    pub fn reverse_postorder(&self) -> Vec<usize> {
        if self.is_empty() {
            return Vec::new();
        }
        let mut visited = vec![false; self.len()];
        let mut post = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        visited[0] = true;
        while let Some((node, next)) = stack.last_mut() {
            if let Some(&s) = self.succs[*node].get(*next) {
                *next += 1;
                if !visited[s] {
                    visited[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(*node);
                stack.pop();
            }
        }
        post.reverse();
        post
    }

    /// Immediate dominators (entry maps to itself, unreachable blocks to `None`).
    pub fn idoms(&self) -> Vec<Option<usize>> {
        let rpo = self.reverse_postorder();
        let mut order = vec![usize::MAX; self.len()];
        for (i, &b) in rpo.iter().enumerate() {
            order[b] = i;
        }
        let mut idom: Vec<Option<usize>> = vec![None; self.len()];
        if rpo.is_empty() {
            return idom;
        }
        idom[0] = Some(0);
        let mut changed = true;
        while changed {
            changed = false;
            for &b in rpo.iter().skip(1) {
                let mut new_idom: Option<usize> = None;
                for &p in &self.preds[b] {
                    if idom[p].is_none() {
                        continue;
                    }
                    new_idom = Some(match new_idom {
                        None => p,
                        Some(cur) => {
                            let (mut x, mut y) = (p, cur);
                            while x != y {
                                while order[x] > order[y] {
                                    x = idom[x].unwrap();
                                }
                                while order[y] > order[x] {
                                    y = idom[y].unwrap();
                                }
                            }
                            x
                        }
                    });
                }
                if new_idom.is_some() && idom[b] != new_idom {
                    idom[b] = new_idom;
                    changed = true;
                }
            }
        }
        idom
    }

    pub fn dominators(&self) -> Dominators {
        Dominators { idom: self.idoms() }
    }

    /// Edges `u -> h` where `h` dominates `u`.
    pub fn back_edges(&self) -> Vec<(usize, usize)> {
        let dom = self.dominators();
        let mut edges = Vec::new();
        for (u, ss) in self.succs.iter().enumerate() {
            for &h in ss {
                if dom.dominates(h, u) {
                    edges.push((u, h));
                }
            }
        }
        edges
    }

    /// Blocks that lie on some cycle (strongly connected with themselves).
    pub fn cyclic_blocks(&self) -> BTreeSet<usize> {
        // Tarjan's SCC, iterative.
        let n = self.len();
        let mut index = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut cyclic = BTreeSet::new();
        for root in 0..n {
            if index[root] != usize::MAX {
                continue;
            }
            let mut work = vec![(root, 0usize)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;
            while let Some(&mut (v, ref mut i)) = work.last_mut() {
                if let Some(&w) = self.succs[v].get(*i) {
                    *i += 1;
                    if index[w] == usize::MAX {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        work.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    work.pop();
                    if let Some(&(parent, _)) = work.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        let mut comp = Vec::new();
                        loop {
                            let w = stack.pop().unwrap();
                            on_stack[w] = false;
                            comp.push(w);
                            if w == v {
                                break;
                            }
                        }
                        if comp.len() > 1 || self.succs[v].contains(&v) {
                            cyclic.extend(comp);
                        }
                    }
                }
            }
        }
        cyclic
    }
}

#[derive(Clone, Debug)]
pub struct Dominators {
    idom: Vec<Option<usize>>,
}

impl Dominators {
    pub fn is_reachable(&self, b: usize) -> bool {
        self.idom[b].is_some()
    }

    /// Whether `a` dominates `b`. Unreachable blocks are dominated by everything.
    pub fn dominates(&self, a: usize, b: usize) -> bool {
        if !self.is_reachable(b) {
            return true;
        }
        let mut cur = b;
        loop {
            if cur == a {
                return true;
            }
            match self.idom[cur] {
                Some(p) if p != cur => cur = p,
                _ => return false,
            }
        }
    }
}
