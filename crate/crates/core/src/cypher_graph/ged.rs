//! Graph edit distance between pattern graphs under unit costs.
//!
//! Node and edge insertion/deletion cost 1. Node substitution costs 1 when
//! the label sets or property maps differ. Edge substitution costs 1 for a
//! type/property mismatch plus 1 when orientation disagrees under the node
//! mapping, so it never exceeds delete + insert. An edge can only be
//! substituted by an edge joining the images of its endpoints.
//!
//! Every edit path is induced by a node mapping (each source node goes to a
//! distinct target node or is deleted); given the mapping, parallel edges
//! between one pair of images are matched by a small assignment.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{PatternEdge, PatternGraph, PatternNode};
use crate::assignment::min_cost_assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GedConfig {
    /// Run the exact search when the two graphs have at most this many nodes
    /// combined.
    pub exact_node_budget: usize,
    /// Search-node cap for one exact call; when reached, the best mapping
    /// found so far is returned with `exact = false`.
    pub max_expansions: u64,
}

impl Default for GedConfig {
    fn default() -> Self {
        GedConfig {
            exact_node_budget: 12,
            max_expansions: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    InsNode,
    DelNode,
    SubNode,
    InsEdge,
    DelEdge,
    SubEdge,
}

impl EditKind {
    pub fn name(self) -> &'static str {
        match self {
            EditKind::InsNode => "ins_node",
            EditKind::DelNode => "del_node",
            EditKind::SubNode => "sub_node",
            EditKind::InsEdge => "ins_edge",
            EditKind::DelEdge => "del_edge",
            EditKind::SubEdge => "sub_edge",
        }
    }
}

/// One non-zero-cost edit. `source` indexes the first graph, `target` the
/// second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub source: Option<usize>,
    pub target: Option<usize>,
    pub cost: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GedResult {
    pub distance: f64,
    pub exact: bool,
    pub edit_script: Vec<EditOp>,
    /// Node mapping from the first graph into the second (`None` = deleted).
    pub mapping: Vec<Option<usize>>,
    pub expansions: u64,
}

fn node_cost(a: &PatternNode, b: &PatternNode) -> u32 {
    u32::from(a.labels != b.labels || a.props != b.props)
}

fn attr_cost(a: &PatternEdge, b: &PatternEdge) -> u32 {
    u32::from(a.rel_types != b.rel_types || a.props != b.props)
}

/// Substitution cost of `e1` by `e2`, given where `e1`'s endpoints map.
fn edge_sub_cost(e1: &PatternEdge, e2: &PatternEdge, src_image: usize, dst_image: usize) -> u32 {
    let orient = match (e1.directed, e2.directed) {
        (false, false) => 0,
        (true, true) => u32::from(!(src_image == e2.src && dst_image == e2.dst)),
        _ => 1,
    };
    attr_cost(e1, e2) + orient
}

fn pair_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// Optimal matching of parallel edges within one pair of images. Returns the
/// cost and the matched `(g1 edge, g2 edge)` pairs; every unmatched edge costs 1.
fn bucket_cost(
    g1: &PatternGraph,
    g2: &PatternGraph,
    mapping: &[Option<usize>],
    left: &[usize],
    right: &[usize],
) -> (u32, Vec<(usize, usize)>) {
    if left.is_empty() || right.is_empty() {
        return ((left.len() + right.len()) as u32, Vec::new());
    }
    let sub = |i: usize, j: usize| {
        let e1 = &g1.edges[i];
        let e2 = &g2.edges[j];
        let (s, d) = (
            mapping[e1.src].expect("mapped"),
            mapping[e1.dst].expect("mapped"),
        );
        edge_sub_cost(e1, e2, s, d)
    };
    if left.len() == 1 && right.len() == 1 {
        let c = sub(left[0], right[0]);
        return (c, vec![(left[0], right[0])]);
    }
    // Substitution never exceeds 2 = delete + insert, so a maximum matching
    // is optimal and the rectangular assignment suffices.
    let (rows, cols, flipped) = if left.len() <= right.len() {
        (left, right, false)
    } else {
        (right, left, true)
    };
    let matrix: Vec<Vec<i64>> = rows
        .iter()
        .map(|&r| {
            cols.iter()
                .map(|&c| if flipped { sub(c, r) } else { sub(r, c) } as i64)
                .collect()
        })
        .collect();
    let assign = min_cost_assignment(&matrix);
    let mut total = (cols.len() - rows.len()) as u32;
    let mut pairs = Vec::with_capacity(rows.len());
    for (ri, &ci) in assign.iter().enumerate() {
        total += matrix[ri][ci] as u32;
        pairs.push(if flipped {
            (cols[ci], rows[ri])
        } else {
            (rows[ri], cols[ci])
        });
    }
    (total, pairs)
}

/// Exact cost of the edit path induced by `mapping`, with its script.
pub fn mapping_cost(
    g1: &PatternGraph,
    g2: &PatternGraph,
    mapping: &[Option<usize>],
) -> (u32, Vec<EditOp>) {
    assert_eq!(mapping.len(), g1.nodes.len());
    let mut script = Vec::new();
    let mut total = 0u32;
    let mut push = |script: &mut Vec<EditOp>, kind, source, target, cost: u32| {
        total += cost;
        if cost > 0 {
            script.push(EditOp {
                kind,
                source,
                target,
                cost,
            });
        }
    };

    let mut used = vec![false; g2.nodes.len()];
    for (u, image) in mapping.iter().enumerate() {
        match *image {
            Some(x) => {
                used[x] = true;
                push(
                    &mut script,
                    EditKind::SubNode,
                    Some(u),
                    Some(x),
                    node_cost(&g1.nodes[u], &g2.nodes[x]),
                );
            }
            None => push(&mut script, EditKind::DelNode, Some(u), None, 1),
        }
    }
    for (x, &is_used) in used.iter().enumerate() {
        if !is_used {
            push(&mut script, EditKind::InsNode, None, Some(x), 1);
        }
    }

    let mut buckets: BTreeMap<(usize, usize), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, e) in g1.edges.iter().enumerate() {
        match (mapping[e.src], mapping[e.dst]) {
            (Some(s), Some(d)) => buckets.entry(pair_key(s, d)).or_default().0.push(i),
            _ => push(&mut script, EditKind::DelEdge, Some(i), None, 1),
        }
    }
    for (j, e) in g2.edges.iter().enumerate() {
        if used[e.src] && used[e.dst] {
            buckets.entry(pair_key(e.src, e.dst)).or_default().1.push(j);
        } else {
            push(&mut script, EditKind::InsEdge, None, Some(j), 1);
        }
    }
    for (left, right) in buckets.values() {
        let (_, pairs) = bucket_cost(g1, g2, mapping, left, right);
        let matched_left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let matched_right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        for (i, j) in pairs {
            let e1 = &g1.edges[i];
            let c = edge_sub_cost(
                e1,
                &g2.edges[j],
                mapping[e1.src].unwrap(),
                mapping[e1.dst].unwrap(),
            );
            push(&mut script, EditKind::SubEdge, Some(i), Some(j), c);
        }
        for &i in left.iter().filter(|i| !matched_left.contains(i)) {
            push(&mut script, EditKind::DelEdge, Some(i), None, 1);
        }
        for &j in right.iter().filter(|j| !matched_right.contains(j)) {
            push(&mut script, EditKind::InsEdge, None, Some(j), 1);
        }
    }
    (total, script)
}

fn result(
    g1: &PatternGraph,
    g2: &PatternGraph,
    mapping: Vec<Option<usize>>,
    exact: bool,
    expansions: u64,
) -> GedResult {
    let (cost, edit_script) = mapping_cost(g1, g2, &mapping);
    GedResult {
        distance: f64::from(cost),
        exact,
        edit_script,
        mapping,
        expansions,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Out,
    In,
    Undirected,
    Loop,
}

fn incident(g: &PatternGraph, node: usize) -> Vec<(usize, Role)> {
    g.edges
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let role = if e.src == node && e.dst == node {
                Role::Loop
            } else if !e.directed && (e.src == node || e.dst == node) {
                Role::Undirected
            } else if e.src == node {
                Role::Out
            } else if e.dst == node {
                Role::In
            } else {
                return None;
            };
            Some((i, role))
        })
        .collect()
}

/// Bipartite-assignment upper bound: nodes are assigned by node cost plus a
/// local estimate over their incident edges, and the induced edit path is then
/// costed exactly.
pub fn ged_approx(g1: &PatternGraph, g2: &PatternGraph) -> GedResult {
    let mapping = approx_mapping(g1, g2);
    result(g1, g2, mapping, false, 0)
}

fn approx_mapping(g1: &PatternGraph, g2: &PatternGraph) -> Vec<Option<usize>> {
    let (n1, n2) = (g1.nodes.len(), g2.nodes.len());
    if n1 == 0 {
        return Vec::new();
    }
    const FORBIDDEN: i64 = 1 << 40;
    let inc1: Vec<_> = (0..n1).map(|u| incident(g1, u)).collect();
    let inc2: Vec<_> = (0..n2).map(|x| incident(g2, x)).collect();

    // Costs are doubled so that each edge's share at either endpoint stays
    // integral.
    let local = |u: usize, x: usize| -> i64 {
        let (a, b) = (&inc1[u], &inc2[x]);
        if a.is_empty() || b.is_empty() {
            return (a.len() + b.len()) as i64;
        }
        let (rows, cols, flip) = if a.len() <= b.len() {
            (a, b, false)
        } else {
            (b, a, true)
        };
        let m: Vec<Vec<i64>> = rows
            .iter()
            .map(|&(ri, rrole)| {
                cols.iter()
                    .map(|&(ci, crole)| {
                        let (e1, e2) = if flip {
                            (&g1.edges[ci], &g2.edges[ri])
                        } else {
                            (&g1.edges[ri], &g2.edges[ci])
                        };
                        i64::from(attr_cost(e1, e2)) + i64::from(rrole != crole)
                    })
                    .collect()
            })
            .collect();
        let assign = min_cost_assignment(&m);
        let matched: i64 = assign.iter().enumerate().map(|(r, &c)| m[r][c]).sum();
        matched + (cols.len() - rows.len()) as i64
    };

    let size = n1 + n2;
    let mut matrix = vec![vec![0i64; size]; size];
    for u in 0..n1 {
        for x in 0..n2 {
            matrix[u][x] = 2 * i64::from(node_cost(&g1.nodes[u], &g2.nodes[x])) + local(u, x);
        }
        for k in 0..n1 {
            matrix[u][n2 + k] = if k == u {
                2 + inc1[u].len() as i64
            } else {
                FORBIDDEN
            };
        }
    }
    for k in 0..n2 {
        for x in 0..n2 {
            matrix[n1 + k][x] = if k == x {
                2 + inc2[x].len() as i64
            } else {
                FORBIDDEN
            };
        }
    }
    let assign = min_cost_assignment(&matrix);
    (0..n1)
        .map(|u| (assign[u] < n2).then_some(assign[u]))
        .collect()
}

struct Search<'a> {
    g1: &'a PatternGraph,
    g2: &'a PatternGraph,
    order: Vec<usize>,
    /// For each depth k, g1 edges with an endpoint at order position >= k.
    pending_g1_edges: Vec<usize>,
    /// g1 edges grouped by the later-processed endpoint.
    closing_edges: Vec<Vec<usize>>,
    adj2: Vec<Vec<usize>>,
    mapping: Vec<Option<usize>>,
    used: Vec<bool>,
    determined_g2: usize,
    best_cost: u32,
    best_mapping: Vec<Option<usize>>,
    expansions: u64,
    cap: u64,
    capped: bool,
}

impl Search<'_> {
    /// Cost added by mapping `u` to `image`, counting node cost and every edge
    /// whose endpoints are now all decided. Also returns the number of g2 edges
    /// that become decided.
    fn step_cost(&self, u: usize, image: Option<usize>) -> (u32, usize) {
        let mut cost = match image {
            Some(x) => node_cost(&self.g1.nodes[u], &self.g2.nodes[x]),
            None => 1,
        };
        let closing = &self.closing_edges[u];
        let Some(x) = image else {
            return (cost + closing.len() as u32, 0);
        };

        // Bucket g1 edges by the other endpoint's image.
        let mut buckets: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for &i in closing {
            let e = &self.g1.edges[i];
            let other = if e.src == u { e.dst } else { e.src };
            let other_image = if other == u {
                Some(x)
            } else {
                self.mapping[other]
            };
            match other_image {
                Some(y) => buckets.entry(y).or_default().0.push(i),
                None => cost += 1,
            }
        }
        let mut newly = 0;
        for &j in &self.adj2[x] {
            let e = &self.g2.edges[j];
            let other = if e.src == x { e.dst } else { e.src };
            if other == x || self.used[other] {
                buckets.entry(other).or_default().1.push(j);
                newly += 1;
            }
        }
        if buckets.values().any(|(l, _)| !l.is_empty()) {
            let mut mapping = self.mapping.clone();
            mapping[u] = Some(x);
            for (left, right) in buckets.values() {
                cost += bucket_cost(self.g1, self.g2, &mapping, left, right).0;
            }
        } else {
            cost += buckets.values().map(|(_, r)| r.len() as u32).sum::<u32>();
        }
        (cost, newly)
    }

    fn lower_bound(&self, depth: usize) -> u32 {
        let remaining1 = self.order.len() - depth;
        let remaining2 = self.used.iter().filter(|u| !**u).count();
        let edges1 = self.pending_g1_edges[depth];
        let edges2 = self.g2.edges.len() - self.determined_g2;
        (remaining1.abs_diff(remaining2) + edges1.abs_diff(edges2)) as u32
    }

    fn completion_cost(&self) -> u32 {
        let unused = self.used.iter().filter(|u| !**u).count();
        (unused + self.g2.edges.len() - self.determined_g2) as u32
    }

    fn dfs(&mut self, depth: usize, cost: u32) {
        if self.capped {
            return;
        }
        self.expansions += 1;
        if self.expansions > self.cap {
            self.capped = true;
            return;
        }
        if depth == self.order.len() {
            let total = cost + self.completion_cost();
            if total < self.best_cost {
                self.best_cost = total;
                self.best_mapping = self.mapping.clone();
            }
            return;
        }
        if cost + self.lower_bound(depth) >= self.best_cost {
            return;
        }
        let u = self.order[depth];
        let mut choices: Vec<(u32, usize, Option<usize>)> = (0..self.g2.nodes.len())
            .filter(|&x| !self.used[x])
            .map(Some)
            .chain(std::iter::once(None))
            .map(|image| {
                let (c, newly) = self.step_cost(u, image);
                (c, newly, image)
            })
            .collect();
        choices.sort_by_key(|&(c, _, image)| (c, image.is_none(), image));
        for (step, newly, image) in choices {
            self.mapping[u] = image;
            if let Some(x) = image {
                self.used[x] = true;
            }
            self.determined_g2 += newly;
            self.dfs(depth + 1, cost + step);
            self.determined_g2 -= newly;
            if let Some(x) = image {
                self.used[x] = false;
            }
            self.mapping[u] = None;
            if self.capped {
                return;
            }
        }
    }
}

/// Branch-and-bound over node mappings, seeded with the assignment upper
/// bound. `exact` is false only when the expansion cap interrupted the search.
pub fn ged_exact(g1: &PatternGraph, g2: &PatternGraph, max_expansions: u64) -> GedResult {
    let (n1, n2) = (g1.nodes.len(), g2.nodes.len());
    let seed = approx_mapping(g1, g2);
    let seed_cost = mapping_cost(g1, g2, &seed).0;

    let degree = |u: usize| g1.edges.iter().filter(|e| e.src == u || e.dst == u).count();
    let mut order: Vec<usize> = (0..n1).collect();
    order.sort_by_key(|&u| (std::cmp::Reverse(degree(u)), u));
    let mut position = vec![0; n1];
    for (k, &u) in order.iter().enumerate() {
        position[u] = k;
    }
    let mut closing_edges = vec![Vec::new(); n1];
    let mut pending_g1_edges = vec![0; n1 + 1];
    for (i, e) in g1.edges.iter().enumerate() {
        let last = position[e.src].max(position[e.dst]);
        closing_edges[order[last]].push(i);
        for p in pending_g1_edges.iter_mut().take(last + 1) {
            *p += 1;
        }
    }
    let mut adj2 = vec![Vec::new(); n2];
    for (j, e) in g2.edges.iter().enumerate() {
        adj2[e.src].push(j);
        if e.dst != e.src {
            adj2[e.dst].push(j);
        }
    }

    let mut search = Search {
        g1,
        g2,
        order,
        pending_g1_edges,
        closing_edges,
        adj2,
        mapping: vec![None; n1],
        used: vec![false; n2],
        determined_g2: 0,
        best_cost: seed_cost,
        best_mapping: seed,
        expansions: 0,
        cap: max_expansions,
        capped: false,
    };
    search.dfs(0, 0);
    let (mapping, capped, expansions) = (search.best_mapping, search.capped, search.expansions);
    result(g1, g2, mapping, !capped, expansions)
}

/// Exact search when the combined node count fits the budget, otherwise the
/// assignment approximation.
pub fn ged(g1: &PatternGraph, g2: &PatternGraph, config: &GedConfig) -> GedResult {
    if g1.nodes.len() + g2.nodes.len() <= config.exact_node_budget {
        ged_exact(g1, g2, config.max_expansions)
    } else {
        ged_approx(g1, g2)
    }
}
