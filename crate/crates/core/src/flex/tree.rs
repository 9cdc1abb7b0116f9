//! Regression trees as used inside the sum-of-trees sampler, plus the compact
//! form retained for each posterior draw.

use serde::{Deserialize, Serialize};

pub(crate) const NONE: usize = usize::MAX;

/// One node of a stored tree: `(split feature or -1 for a leaf, cutoff or
/// leaf value, left child, right child)`. Rows with `x[feature] <= cutoff` go
/// left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatNode(pub i32, pub f64, pub u32, pub u32);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlatTree {
    pub nodes: Vec<FlatNode>,
}

impl FlatTree {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let FlatNode(var, v, l, r) = self.nodes[i];
            if var < 0 {
                return v;
            }
            i = if x[var as usize] <= v {
                l as usize
            } else {
                r as usize
            };
        }
    }

    pub fn stump(value: f64) -> Self {
        Self {
            nodes: vec![FlatNode(-1, value, 0, 0)],
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &FlatTree, i: usize) -> usize {
            let FlatNode(var, _, l, r) = t.nodes[i];
            if var < 0 {
                0
            } else {
                1 + go(t, l as usize).max(go(t, r as usize))
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub var: usize,
    pub cut: f64,
    pub left: usize,
    pub right: usize,
    pub parent: usize,
    pub depth: u32,
    pub value: f64,
    pub leaf: bool,
    pub growable: bool,
    pub alive: bool,
}

impl Node {
    fn leaf(parent: usize, depth: u32, growable: bool) -> Self {
        Self {
            var: 0,
            cut: 0.0,
            left: NONE,
            right: NONE,
            parent,
            depth,
            value: 0.0,
            leaf: true,
            growable,
            alive: true,
        }
    }
}

/// Mutable tree state: node arena plus the leaf each training row falls in.
#[derive(Debug, Clone)]
pub(crate) struct McmcTree {
    pub nodes: Vec<Node>,
    free: Vec<usize>,
    pub leaf_of: Vec<u32>,
}

impl McmcTree {
    pub fn new(n: usize, root_growable: bool) -> Self {
        Self {
            nodes: vec![Node::leaf(NONE, 0, root_growable)],
            free: Vec::new(),
            leaf_of: vec![0; n],
        }
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free.pop() {
            Some(i) => {
                self.nodes[i] = node;
                i
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    pub fn is_root_only(&self) -> bool {
        self.nodes[0].leaf
    }

    pub fn growable_leaves(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| {
                let n = &self.nodes[i];
                n.alive && n.leaf && n.growable
            })
            .collect()
    }

    /// Internal nodes whose two children are both leaves.
    pub fn prunable(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| self.is_prunable(i))
            .collect()
    }

    pub fn is_prunable(&self, i: usize) -> bool {
        let n = &self.nodes[i];
        n.alive && !n.leaf && self.nodes[n.left].leaf && self.nodes[n.right].leaf
    }

    pub fn rows_in(&self, node: usize, out: &mut Vec<usize>) {
        out.clear();
        let n = &self.nodes[node];
        if n.leaf {
            let id = node as u32;
            out.extend((0..self.leaf_of.len()).filter(|&i| self.leaf_of[i] == id));
        } else {
            let (l, r) = (n.left as u32, n.right as u32);
            out.extend((0..self.leaf_of.len()).filter(|&i| {
                let k = self.leaf_of[i];
                k == l || k == r
            }));
        }
    }

    /// Turns leaf `node` into a split; `rows` are the rows currently in it.
    pub fn split_leaf(
        &mut self,
        node: usize,
        var: usize,
        cut: f64,
        rows: &[usize],
        x: &[Vec<f64>],
        growable: (bool, bool),
    ) {
        let depth = self.nodes[node].depth + 1;
        let l = self.alloc(Node::leaf(node, depth, growable.0));
        let r = self.alloc(Node::leaf(node, depth, growable.1));
        let nd = &mut self.nodes[node];
        nd.leaf = false;
        nd.var = var;
        nd.cut = cut;
        nd.left = l;
        nd.right = r;
        let col = &x[var];
        for &i in rows {
            self.leaf_of[i] = if col[i] <= cut { l as u32 } else { r as u32 };
        }
    }

    pub fn collapse(&mut self, node: usize, rows: &[usize]) {
        let (l, r) = (self.nodes[node].left, self.nodes[node].right);
        self.nodes[l].alive = false;
        self.nodes[r].alive = false;
        self.free.push(l);
        self.free.push(r);
        let nd = &mut self.nodes[node];
        nd.leaf = true;
        nd.growable = true;
        nd.left = NONE;
        nd.right = NONE;
        for &i in rows {
            self.leaf_of[i] = node as u32;
        }
    }

    pub fn resplit(
        &mut self,
        node: usize,
        var: usize,
        cut: f64,
        rows: &[usize],
        x: &[Vec<f64>],
        growable: (bool, bool),
    ) {
        let (l, r) = (self.nodes[node].left, self.nodes[node].right);
        self.nodes[node].var = var;
        self.nodes[node].cut = cut;
        self.nodes[l].growable = growable.0;
        self.nodes[r].growable = growable.1;
        let col = &x[var];
        for &i in rows {
            self.leaf_of[i] = if col[i] <= cut { l as u32 } else { r as u32 };
        }
    }

    #[inline]
    pub fn fitted(&self, i: usize) -> f64 {
        self.nodes[self.leaf_of[i] as usize].value
    }

    /// Compact copy with nodes renumbered in preorder.
    pub fn flatten(&self) -> FlatTree {
        let mut nodes = Vec::new();
        fn go(t: &McmcTree, i: usize, out: &mut Vec<FlatNode>) -> u32 {
            let me = out.len();
            let n = &t.nodes[i];
            if n.leaf {
                out.push(FlatNode(-1, n.value, 0, 0));
            } else {
                out.push(FlatNode(n.var as i32, n.cut, 0, 0));
                let l = go(t, n.left, out);
                let r = go(t, n.right, out);
                out[me].2 = l;
                out[me].3 = r;
            }
            me as u32
        }
        go(self, 0, &mut nodes);
        FlatTree { nodes }
    }
}

/// Whether some feature takes at least two distinct values among `rows`.
pub(crate) fn has_split(rows: &[usize], x: &[Vec<f64>]) -> bool {
    if rows.len() < 2 {
        return false;
    }
    x.iter().any(|col| {
        let first = col[rows[0]];
        rows.iter().any(|&i| col[i] != first)
    })
}
