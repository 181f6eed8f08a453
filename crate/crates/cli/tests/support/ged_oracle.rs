//! Edit distance by exhaustive enumeration: every injective partial node
//! mapping, and for each one every matching of edges whose endpoints
//! correspond.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use struct_reward::cypher_graph::{PatternEdge, PatternNode};
use struct_reward::PatternGraph;

pub fn exhaustive_ged(g1: &PatternGraph, g2: &PatternGraph) -> u32 {
    let mut mapping = Vec::with_capacity(g1.nodes.len());
    let mut used = vec![false; g2.nodes.len()];
    let mut best = u32::MAX;
    enumerate_mappings(g1, g2, &mut mapping, &mut used, &mut best);
    best
}

fn enumerate_mappings(
    g1: &PatternGraph,
    g2: &PatternGraph,
    mapping: &mut Vec<Option<usize>>,
    used: &mut [bool],
    best: &mut u32,
) {
    if mapping.len() == g1.nodes.len() {
        *best = (*best).min(mapping_total(g1, g2, mapping));
        return;
    }
    mapping.push(None);
    enumerate_mappings(g1, g2, mapping, used, best);
    mapping.pop();
    for j in 0..g2.nodes.len() {
        if !used[j] {
            used[j] = true;
            mapping.push(Some(j));
            enumerate_mappings(g1, g2, mapping, used, best);
            mapping.pop();
            used[j] = false;
        }
    }
}

fn mapping_total(g1: &PatternGraph, g2: &PatternGraph, mapping: &[Option<usize>]) -> u32 {
    let mut cost = 0;
    let mut mapped = 0;
    for (i, m) in mapping.iter().enumerate() {
        match m {
            Some(j) => {
                mapped += 1;
                let (a, b) = (&g1.nodes[i], &g2.nodes[*j]);
                if a.labels != b.labels || a.props != b.props {
                    cost += 1;
                }
            }
            None => cost += 1,
        }
    }
    cost += (g2.nodes.len() - mapped) as u32;
    let mut taken = vec![false; g2.edges.len()];
    cost + best_edge_matching(g1, g2, mapping, 0, &mut taken)
}

fn best_edge_matching(
    g1: &PatternGraph,
    g2: &PatternGraph,
    mapping: &[Option<usize>],
    k: usize,
    taken: &mut [bool],
) -> u32 {
    if k == g1.edges.len() {
        return taken.iter().filter(|t| !**t).count() as u32;
    }
    let e = &g1.edges[k];
    let mut best = 1 + best_edge_matching(g1, g2, mapping, k + 1, taken);
    if let (Some(s), Some(d)) = (mapping[e.src], mapping[e.dst]) {
        for (f_idx, f) in g2.edges.iter().enumerate() {
            let joins = (f.src == s && f.dst == d) || (f.src == d && f.dst == s);
            if taken[f_idx] || !joins {
                continue;
            }
            let attr = u32::from(e.rel_types != f.rel_types || e.props != f.props);
            let orient = match (e.directed, f.directed) {
                (true, true) => u32::from(!(f.src == s && f.dst == d)),
                (false, false) => 0,
                _ => 1,
            };
            taken[f_idx] = true;
            best = best.min(attr + orient + best_edge_matching(g1, g2, mapping, k + 1, taken));
            taken[f_idx] = false;
        }
    }
    best
}

/// A random pattern graph with up to `max_nodes` nodes drawn from a small
/// attribute alphabet, so that matches and near-matches are common.
pub fn random_graph(rng: &mut impl Rng, max_nodes: usize, max_edges: usize) -> PatternGraph {
    let n = rng.random_range(0..=max_nodes);
    let nodes = (0..n)
        .map(|_| {
            let mut labels = BTreeSet::new();
            match rng.random_range(0..4) {
                0 => {}
                1 => {
                    labels.insert("a".to_string());
                }
                2 => {
                    labels.insert("b".to_string());
                }
                _ => {
                    labels.insert("a".to_string());
                    labels.insert("b".to_string());
                }
            }
            let mut props = BTreeMap::new();
            if rng.random_bool(0.25) {
                props.insert("k".to_string(), rng.random_range(1..3).to_string());
            }
            PatternNode {
                labels,
                props,
                anon: false,
                var: None,
            }
        })
        .collect();
    let m = if n == 0 {
        0
    } else {
        rng.random_range(0..=max_edges)
    };
    let edges = (0..m)
        .map(|_| {
            let mut rel_types = BTreeSet::new();
            if rng.random_bool(0.8) {
                rel_types.insert(if rng.random_bool(0.5) { "r" } else { "s" }.to_string());
            }
            PatternEdge {
                src: rng.random_range(0..n),
                dst: rng.random_range(0..n),
                rel_types,
                directed: rng.random_bool(0.75),
                props: BTreeMap::new(),
                var: None,
            }
        })
        .collect();
    PatternGraph { nodes, edges }
}
