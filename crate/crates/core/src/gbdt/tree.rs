//! Regression trees over gradient statistics, grown level by level with exact
//! greedy split search on presorted feature columns.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A node in a tree's arena. Children are indices into the same arena.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { weight }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Leaf weight reached by `row`. Values below a threshold go left.
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }

    fn leaf_of(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }

    /// Recomputes every leaf weight from the gradient statistics of all rows
    /// in `x` that reach it. Leaves no row reaches keep their weight.
    pub(crate) fn refit_leaves(&mut self, x: &[Vec<f64>], grad: &[f64], hess: &[f64], lambda: f64, learning_rate: f64) {
        let mut g = vec![0.0; self.nodes.len()];
        let mut h = vec![0.0; self.nodes.len()];
        let mut hit = vec![false; self.nodes.len()];
        for (i, row) in x.iter().enumerate() {
            let leaf = self.leaf_of(row);
            g[leaf] += grad[i];
            h[leaf] += hess[i];
            hit[leaf] = true;
        }
        for (k, node) in self.nodes.iter_mut().enumerate() {
            if let Node::Leaf { weight } = node {
                if hit[k] {
                    *weight = -g[k] / (h[k] + lambda) * learning_rate;
                }
            }
        }
    }

    /// Same tree with the arena laid out root, left subtree, right subtree.
    fn preorder(&self) -> Tree {
        fn go(src: &[Node], i: usize, out: &mut Vec<Node>) -> usize {
            let at = out.len();
            out.push(src[i].clone());
            if let Node::Split { left, right, .. } = src[i] {
                let l = go(src, left, out);
                let r = go(src, right, out);
                if let Node::Split { left, right, .. } = &mut out[at] {
                    *left = l;
                    *right = r;
                }
            }
            at
        }
        let mut nodes = Vec::with_capacity(self.nodes.len());
        go(&self.nodes, 0, &mut nodes);
        Tree { nodes }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn splits(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split {
                feature,
                threshold,
                gain,
                ..
            } => Some((feature, threshold, gain)),
            Node::Leaf { .. } => None,
        })
    }
}

/// Nested form used in model files: `{f, t, gain, l, r}` or `{w}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeJson {
    Split {
        f: usize,
        t: f64,
        gain: f64,
        l: Box<NodeJson>,
        r: Box<NodeJson>,
    },
    Leaf {
        w: f64,
    },
}

impl Serialize for Tree {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        fn build(nodes: &[Node], i: usize) -> NodeJson {
            match nodes[i] {
                Node::Leaf { weight } => NodeJson::Leaf { w: weight },
                Node::Split {
                    feature,
                    threshold,
                    gain,
                    left,
                    right,
                } => NodeJson::Split {
                    f: feature,
                    t: threshold,
                    gain,
                    l: Box::new(build(nodes, left)),
                    r: Box::new(build(nodes, right)),
                },
            }
        }
        build(&self.nodes, 0).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        fn flatten(node: NodeJson, out: &mut Vec<Node>) -> usize {
            let at = out.len();
            match node {
                NodeJson::Leaf { w } => out.push(Node::Leaf { weight: w }),
                NodeJson::Split { f, t, gain, l, r } => {
                    out.push(Node::Leaf { weight: 0.0 });
                    let left = flatten(*l, out);
                    let right = flatten(*r, out);
                    out[at] = Node::Split {
                        feature: f,
                        threshold: t,
                        gain,
                        left,
                        right,
                    };
                }
            }
            at
        }
        let mut nodes = Vec::new();
        flatten(NodeJson::deserialize(d)?, &mut nodes);
        Ok(Tree { nodes })
    }
}

/// Split-finding parameters for one tree.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_child_weight: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    g_left: f64,
    h_left: f64,
}

#[derive(Debug, Clone, Copy)]
struct Open {
    arena: usize,
    g: f64,
    h: f64,
}

pub(crate) fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64, gamma: f64) -> f64 {
    let g = gl + gr;
    let h = hl + hr;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// Threshold strictly above `lo` and at most `hi`, so `lo` goes left and `hi` right.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

/// Grows one tree.
///
/// `sorted[f]` lists every row index ordered by feature `f` (stable, so ties
/// keep row order). `rows` is the row subsample and `features` the column
/// subsample (ascending). Ties between equal-gain splits go to the lower
/// feature index, then the lower threshold.
pub(crate) fn grow(
    x: &[Vec<f64>],
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    features: &[usize],
    p: TreeParams,
) -> Tree {
    const NONE: u32 = u32::MAX;
    let n = x.len();
    // slot of each row's node among the nodes open at the current level
    let mut slot = vec![NONE; n];
    let (mut g0, mut h0) = (0.0, 0.0);
    for &r in rows {
        slot[r] = 0;
        g0 += grad[r];
        h0 += hess[r];
    }

    let leaf_weight = |g: f64, h: f64| -g / (h + p.lambda) * p.learning_rate;
    let mut nodes = vec![Node::Leaf { weight: 0.0 }];
    let mut open = vec![Open { arena: 0, g: g0, h: h0 }];

    for _depth in 0..p.max_depth {
        if open.is_empty() {
            break;
        }
        let per_feature: Vec<Vec<Option<Candidate>>> = features
            .par_iter()
            .map(|&f| best_splits_for_feature(f, x, &sorted[f], &slot, grad, hess, &open, p))
            .collect();

        let mut best: Vec<Option<Candidate>> = vec![None; open.len()];
        for cands in &per_feature {
            for (b, c) in best.iter_mut().zip(cands) {
                if let Some(c) = c {
                    if b.is_none_or(|b| c.gain > b.gain) {
                        *b = Some(*c);
                    }
                }
            }
        }

        let mut next_open = Vec::new();
        let mut remap = vec![NONE; open.len() * 2];
        for (s, (node, cand)) in open.iter().zip(&best).enumerate() {
            let Some(c) = cand else {
                nodes[node.arena] = Node::Leaf {
                    weight: leaf_weight(node.g, node.h),
                };
                continue;
            };
            let left = nodes.len();
            nodes.push(Node::Leaf { weight: 0.0 });
            nodes.push(Node::Leaf { weight: 0.0 });
            nodes[node.arena] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                gain: c.gain,
                left,
                right: left + 1,
            };
            remap[2 * s] = next_open.len() as u32;
            next_open.push(Open {
                arena: left,
                g: c.g_left,
                h: c.h_left,
            });
            remap[2 * s + 1] = next_open.len() as u32;
            next_open.push(Open {
                arena: left + 1,
                g: node.g - c.g_left,
                h: node.h - c.h_left,
            });
        }

        for &r in rows {
            let s = slot[r];
            if s == NONE {
                continue;
            }
            slot[r] = match best[s as usize] {
                None => NONE,
                Some(c) => {
                    let side = usize::from(x[r][c.feature] >= c.threshold);
                    remap[2 * s as usize + side]
                }
            };
        }
        open = next_open;
    }
    for node in &open {
        nodes[node.arena] = Node::Leaf {
            weight: leaf_weight(node.g, node.h),
        };
    }
    Tree { nodes }.preorder()
}

#[allow(clippy::too_many_arguments)]
fn best_splits_for_feature(
    f: usize,
    x: &[Vec<f64>],
    order: &[u32],
    slot: &[u32],
    grad: &[f64],
    hess: &[f64],
    open: &[Open],
    p: TreeParams,
) -> Vec<Option<Candidate>> {
    let m = open.len();
    let mut gl = vec![0.0; m];
    let mut hl = vec![0.0; m];
    let mut last = vec![f64::NAN; m];
    let mut best: Vec<Option<Candidate>> = vec![None; m];

    for &r in order {
        let r = r as usize;
        let s = slot[r];
        if s == u32::MAX {
            continue;
        }
        let s = s as usize;
        let v = x[r][f];
        if v > last[s] {
            // boundary between `last` and `v`: everything seen so far goes left
            let (g_l, h_l) = (gl[s], hl[s]);
            let (g_r, h_r) = (open[s].g - g_l, open[s].h - h_l);
            if h_l >= p.min_child_weight && h_r >= p.min_child_weight {
                let gain = split_gain(g_l, h_l, g_r, h_r, p.lambda, p.gamma);
                if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                    best[s] = Some(Candidate {
                        feature: f,
                        threshold: midpoint(last[s], v),
                        gain,
                        g_left: g_l,
                        h_left: h_l,
                    });
                }
            }
        }
        last[s] = v;
        gl[s] += grad[r];
        hl[s] += hess[r];
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TreeParams {
        TreeParams {
            max_depth: 3,
            min_child_weight: 0.0,
            gamma: 0.0,
            lambda: 1.0,
            learning_rate: 1.0,
        }
    }

    fn presort(x: &[Vec<f64>]) -> Vec<Vec<u32>> {
        (0..x[0].len())
            .map(|f| {
                let mut idx: Vec<u32> = (0..x.len() as u32).collect();
                idx.sort_by(|&a, &b| x[a as usize][f].total_cmp(&x[b as usize][f]));
                idx
            })
            .collect()
    }

    #[test]
    fn separates_step_function() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let grad: Vec<f64> = (0..8).map(|i| if i < 4 { 0.5 } else { -0.5 }).collect();
        let hess = vec![0.25; 8];
        let rows: Vec<usize> = (0..8).collect();
        let t = grow(&x, &presort(&x), &grad, &hess, &rows, &[0], params());
        match t.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 3.5);
            }
            _ => panic!("expected a split"),
        }
        assert!(t.predict(&[0.0]) < 0.0);
        assert!(t.predict(&[7.0]) > 0.0);
    }

    #[test]
    fn constant_feature_gives_leaf() {
        let x = vec![vec![1.0]; 6];
        let grad = vec![0.5, -0.5, 0.5, -0.5, 0.5, -0.5];
        let hess = vec![0.25; 6];
        let rows: Vec<usize> = (0..6).collect();
        let t = grow(&x, &presort(&x), &grad, &hess, &rows, &[0], params());
        assert_eq!(t.nodes().len(), 1);
    }

    #[test]
    fn nested_json_roundtrip() {
        let x: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
        let grad: Vec<f64> = (0..16).map(|i| ((i * 13 % 7) as f64 - 3.0) / 4.0).collect();
        let hess = vec![0.2; 16];
        let rows: Vec<usize> = (0..16).collect();
        let t = grow(&x, &presort(&x), &grad, &hess, &rows, &[0, 1], params());
        let json = serde_json::to_string(&t).unwrap();
        let back: Tree = serde_json::from_str(&json).unwrap();
        for row in &x {
            assert_eq!(t.predict(row).to_bits(), back.predict(row).to_bits());
        }
        assert!(t.depth() <= 3);
    }

    #[test]
    fn midpoint_between_adjacent_floats() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let t = midpoint(lo, hi);
        assert!(lo < t && t <= hi);
    }
}
