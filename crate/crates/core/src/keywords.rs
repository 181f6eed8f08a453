//! Reserved words shared by the normalizers in `text_reward` and `metrics`.

const QUERY_KEYWORDS: &[&str] = &[
    // SQL
    "select",
    "from",
    "where",
    "and",
    "or",
    "not",
    "in",
    "is",
    "null",
    "like",
    "between",
    "as",
    "join",
    "inner",
    "left",
    "right",
    "full",
    "outer",
    "cross",
    "natural",
    "on",
    "using",
    "group",
    "by",
    "having",
    "order",
    "asc",
    "desc",
    "limit",
    "offset",
    "union",
    "all",
    "intersect",
    "except",
    "distinct",
    "case",
    "when",
    "then",
    "else",
    "end",
    "exists",
    "with",
    "recursive",
    "insert",
    "into",
    "values",
    "update",
    "set",
    "delete",
    "count",
    "sum",
    "avg",
    "min",
    "max",
    "cast",
    "glob",
    "escape",
    "over",
    "partition",
    "any",
    "some",
    "true",
    "false",
    // Cypher
    "match",
    "optional",
    "merge",
    "create",
    "return",
    "unwind",
    "skip",
    "detach",
    "remove",
    "call",
    "yield",
    "foreach",
    "xor",
    "starts",
    "ends",
    "contains",
    "collect",
    "load",
    "csv",
];

pub(crate) fn is_keyword(word: &str) -> bool {
    let lower = word.to_ascii_lowercase();
    QUERY_KEYWORDS.contains(&lower.as_str())
}
