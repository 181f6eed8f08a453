//! Property-graph view of Cypher queries and the graph-edit-distance reward.
//!
//! The reward is `1 - GED / max(size_1, size_2)` where size counts nodes plus
//! edges, clamped to `[0, 1]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

mod ged;
mod parser;

pub use ged::{ged, ged_approx, ged_exact, mapping_cost, EditKind, EditOp, GedConfig, GedResult};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PatternNode {
    pub labels: BTreeSet<String>,
    pub props: BTreeMap<String, String>,
    /// The node was written without a variable.
    pub anon: bool,
    /// Variable name, kept for display only; never part of edit costs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PatternEdge {
    pub src: usize,
    pub dst: usize,
    pub rel_types: BTreeSet<String>,
    pub directed: bool,
    pub props: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PatternGraph {
    pub nodes: Vec<PatternNode>,
    pub edges: Vec<PatternEdge>,
}

impl PatternGraph {
    pub fn size(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.size() == 0
    }
}

fn fmt_set(set: &BTreeSet<String>) -> String {
    set.iter().cloned().collect::<Vec<_>>().join(",")
}

fn fmt_props(props: &BTreeMap<String, String>) -> String {
    props
        .iter()
        .map(|(k, v)| format!("{k}: {v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Stable multi-line listing used by the `ged` command and golden tests.
impl fmt::Display for PatternGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  nodes: {}", self.nodes.len())?;
        for (i, n) in self.nodes.iter().enumerate() {
            let var = n.var.as_deref().unwrap_or("_");
            writeln!(
                f,
                "    n{i} {var} labels=[{}] props={{{}}}",
                fmt_set(&n.labels),
                fmt_props(&n.props)
            )?;
        }
        writeln!(f, "  edges: {}", self.edges.len())?;
        for (i, e) in self.edges.iter().enumerate() {
            let arrow = if e.directed { "->" } else { "--" };
            writeln!(
                f,
                "    e{i} n{} {arrow} n{} types=[{}] props={{{}}}",
                e.src,
                e.dst,
                fmt_set(&e.rel_types),
                fmt_props(&e.props)
            )?;
        }
        Ok(())
    }
}

/// A pattern graph plus how it was obtained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Extraction {
    pub graph: PatternGraph,
    pub parse_ok: bool,
    /// WHERE conditions that were not simple `var.prop = literal` equalities.
    pub ignored_predicates: usize,
}

/// Builds the pattern graph targeted by a query's MATCH, OPTIONAL MATCH, MERGE
/// and CREATE clauses. Repeated variables unify; nodes are ordered by first
/// appearance. Unparseable input gives an empty graph with `parse_ok = false`.
pub fn extract_pattern_graph(query: &str) -> Extraction {
    parser::extract(query)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GedReward {
    pub reward: f64,
    pub gold: Extraction,
    pub pred: Extraction,
    /// Absent when the reward was decided without a distance computation.
    pub ged: Option<GedResult>,
}

/// Reward with the extracted graphs and the edit computation attached. The
/// edit script transforms the predicted graph into the gold graph.
pub fn ged_reward_detailed(gold_query: &str, pred_query: &str, config: &GedConfig) -> GedReward {
    let gold = extract_pattern_graph(gold_query);
    let pred = extract_pattern_graph(pred_query);
    let (reward, result) = if !pred.parse_ok || !gold.parse_ok {
        (0.0, None)
    } else if gold.graph.is_empty() && pred.graph.is_empty() {
        (1.0, None)
    } else if pred.graph.is_empty() {
        (0.0, None)
    } else {
        let result = ged(&pred.graph, &gold.graph, config);
        let denom = gold.graph.size().max(pred.graph.size()) as f64;
        (
            (1.0 - result.distance / denom).clamp(0.0, 1.0),
            Some(result),
        )
    };
    GedReward {
        reward,
        gold,
        pred,
        ged: result,
    }
}

pub fn ged_reward(gold_query: &str, pred_query: &str, config: &GedConfig) -> f64 {
    ged_reward_detailed(gold_query, pred_query, config).reward
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn single_pattern() {
        let x = extract_pattern_graph("MATCH (a:Person)-[:KNOWS]->(b:Person) RETURN a");
        assert!(x.parse_ok);
        let g = &x.graph;
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.size(), 3);
        assert!(g.nodes.iter().all(|n| n.labels == labels(&["person"])));
        let e = &g.edges[0];
        assert_eq!((e.src, e.dst, e.directed), (0, 1, true));
        assert_eq!(e.rel_types, labels(&["knows"]));
    }

    #[test]
    fn no_pattern_clauses() {
        let x = extract_pattern_graph("RETURN 1");
        assert!(x.parse_ok);
        assert!(x.graph.is_empty());
    }

    #[test]
    fn variables_unify_across_clauses() {
        let x = extract_pattern_graph(
            "MATCH (a:Movie {year: 1999}) MATCH (a)<-[:ACTED_IN]-(p) RETURN p",
        );
        assert!(x.parse_ok);
        let expected = PatternGraph {
            nodes: vec![
                PatternNode {
                    labels: labels(&["movie"]),
                    props: [("year".to_string(), "1999".to_string())].into(),
                    anon: false,
                    var: Some("a".into()),
                },
                PatternNode {
                    labels: BTreeSet::new(),
                    props: BTreeMap::new(),
                    anon: false,
                    var: Some("p".into()),
                },
            ],
            edges: vec![PatternEdge {
                src: 1,
                dst: 0,
                rel_types: labels(&["acted_in"]),
                directed: true,
                props: BTreeMap::new(),
                var: None,
            }],
        };
        assert_eq!(x.graph, expected);
    }

    #[test]
    fn where_equalities_fold_and_others_count() {
        let x = extract_pattern_graph(
            "MATCH (m:Movie)<-[r:RATED]-(u) WHERE m.title = \"Heat\" AND r.stars = 5 AND u.age > 30 RETURN u",
        );
        assert!(x.parse_ok);
        assert_eq!(x.graph.nodes[0].props["title"], "'Heat'");
        assert_eq!(x.graph.edges[0].props["stars"], "5");
        assert_eq!(x.ignored_predicates, 1);

        let inline = extract_pattern_graph("MATCH (m:Movie {title: 'Heat'}) RETURN m");
        assert_eq!(inline.graph.nodes[0].props, x.graph.nodes[0].props);

        let or = extract_pattern_graph("MATCH (m) WHERE m.a = 1 OR m.b = 2 RETURN m");
        assert!(or.graph.nodes[0].props.is_empty());
        assert_eq!(or.ignored_predicates, 1);
    }

    #[test]
    fn pattern_forms() {
        let x = extract_pattern_graph(
            "OPTIONAL MATCH p = (a)-[:R*1..3]-(b:B:C), (b)-->(c) MERGE (c)-[:S {w: -2}]->(d:D) ON CREATE SET d.x = 1 CREATE (d)<-[:T]-(a)",
        );
        assert!(x.parse_ok, "{x:?}");
        let g = &x.graph;
        assert_eq!(g.nodes.len(), 4);
        assert_eq!(g.edges.len(), 4);
        assert!(!g.edges[0].directed);
        assert_eq!(g.edges[0].rel_types, labels(&["r"]));
        assert_eq!(g.nodes[1].labels, labels(&["b", "c"]));
        assert!(g.edges[1].directed && g.edges[1].rel_types.is_empty());
        assert_eq!(g.edges[2].props["w"], "-2");
        assert_eq!((g.edges[3].src, g.edges[3].dst), (0, 3));
    }

    #[test]
    fn starts_with_is_not_a_clause() {
        let x =
            extract_pattern_graph("MATCH (n:Person) WHERE n.name STARTS WITH 'A' RETURN n.name");
        assert!(x.parse_ok);
        assert_eq!(x.graph.size(), 1);
        assert_eq!(x.ignored_predicates, 1);
    }

    #[test]
    fn subqueries_and_lists_are_skipped() {
        let x = extract_pattern_graph(
            "MATCH (a:A) CALL { WITH a MATCH (a)-[:X]->(b) RETURN b } RETURN [x IN range(1, 3) WHERE x > 1 | x], a {.name}",
        );
        assert!(x.parse_ok);
        assert_eq!(x.graph.size(), 1);
    }

    #[test]
    fn parse_failures() {
        for q in [
            "I don't know",
            "",
            "MATCH (a",
            "MATCH a-b",
            "MATCH (a)-[:R]->",
            "MATCH (a) RETURN 'x",
            "MATCH RETURN a",
        ] {
            let x = extract_pattern_graph(q);
            assert!(!x.parse_ok, "{q}");
            assert!(x.graph.is_empty());
        }
    }

    #[test]
    fn reward_cases() {
        let cfg = GedConfig::default();
        let q = "MATCH (a:Person)-[:KNOWS]->(b:Person) RETURN a";
        assert_eq!(ged_reward(q, q, &cfg), 1.0);
        let r = ged_reward(q, "MATCH (a:Person)-[:KNOWS]->(b:Robot) RETURN a", &cfg);
        assert!((r - (1.0 - 1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(ged_reward(q, "I don't know", &cfg), 0.0);
        assert_eq!(ged_reward(q, "RETURN 1", &cfg), 0.0);
        assert_eq!(ged_reward("RETURN 1", "RETURN 2", &cfg), 1.0);
        // Disjoint graphs of equal size clamp at zero.
        assert_eq!(
            ged_reward("MATCH (a:A)-[:X]->(b:B)", "MATCH (c:C)<-[:Y]-(d:D)", &cfg),
            0.0
        );
    }

    #[test]
    fn display_is_stable() {
        let x = extract_pattern_graph("MATCH (a:Movie {year: 1999})<-[:ACTED_IN]-(p) RETURN p");
        assert_eq!(
            x.graph.to_string(),
            "  nodes: 2\n    n0 a labels=[movie] props={year: 1999}\n    n1 p labels=[] props={}\n  edges: 1\n    e0 n1 -> n0 types=[acted_in] props={}\n"
        );
    }
}
