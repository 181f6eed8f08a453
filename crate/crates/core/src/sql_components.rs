//! Clause-level decomposition of SQL queries and the component-matching reward.
//!
//! A query is tokenized (string literals and quoted identifiers stay atomic),
//! split into top-level clauses, and each clause is broken into items: select
//! expressions, tables, join pairs, conjunctive predicates, grouping and
//! ordering keys, the limit, and set operators. Items from subqueries are
//! merged into the same multiset while the outer item shows `(subquery)` in
//! their place.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    SelectItem,
    FromTable,
    JoinPair,
    WherePred,
    GroupKey,
    HavingPred,
    OrderKey,
    LimitVal,
    SetOp,
    AggFunc,
}

impl ComponentKind {
    pub fn name(self) -> &'static str {
        match self {
            ComponentKind::SelectItem => "select_item",
            ComponentKind::FromTable => "from_table",
            ComponentKind::JoinPair => "join_pair",
            ComponentKind::WherePred => "where_pred",
            ComponentKind::GroupKey => "group_key",
            ComponentKind::HavingPred => "having_pred",
            ComponentKind::OrderKey => "order_key",
            ComponentKind::LimitVal => "limit_val",
            ComponentKind::SetOp => "set_op",
            ComponentKind::AggFunc => "agg_func",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Multiset of `(kind, normalized text)` items.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ComponentSet {
    counts: BTreeMap<(ComponentKind, String), usize>,
}

impl ComponentSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, kind: ComponentKind, text: impl Into<String>) {
        *self.counts.entry((kind, text.into())).or_insert(0) += 1;
    }

    pub fn len(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, kind: ComponentKind, text: &str) -> usize {
        self.counts
            .get(&(kind, text.to_string()))
            .copied()
            .unwrap_or(0)
    }

    /// Items in sorted order, repeated by multiplicity.
    pub fn items(&self) -> impl Iterator<Item = (ComponentKind, &str)> + '_ {
        self.counts
            .iter()
            .flat_map(|((k, t), &n)| std::iter::repeat_n((*k, t.as_str()), n))
    }

    /// Size of the multiset intersection.
    pub fn overlap(&self, other: &ComponentSet) -> usize {
        self.counts
            .iter()
            .map(|(key, &n)| n.min(other.counts.get(key).copied().unwrap_or(0)))
            .sum()
    }
}

impl FromIterator<(ComponentKind, String)> for ComponentSet {
    fn from_iter<I: IntoIterator<Item = (ComponentKind, String)>>(iter: I) -> Self {
        let mut set = ComponentSet::new();
        for (k, t) in iter {
            set.insert(k, t);
        }
        set
    }
}

impl Serialize for ComponentSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for (kind, text) in self.items() {
            seq.serialize_element(&(kind, text))?;
        }
        seq.end()
    }
}

/// Multiset F1 over `(kind, text)` pairs. Two empty sets score 1; exactly one
/// empty set scores 0.
pub fn component_f1(gold: &ComponentSet, pred: &ComponentSet) -> f64 {
    match (gold.is_empty(), pred.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let hits = gold.overlap(pred) as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let precision = hits / pred.len() as f64;
    let recall = hits / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Str(String),
    Num(String),
    Param(String),
    Punct(&'static str),
}

impl Tok {
    fn is_word(&self, w: &str) -> bool {
        matches!(self, Tok::Word(x) if x == w)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self, Tok::Punct(x) if *x == p)
    }

    fn text(&self) -> String {
        match self {
            Tok::Word(w) | Tok::Quoted(w) | Tok::Num(w) | Tok::Param(w) => w.clone(),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Punct(p) => (*p).to_string(),
        }
    }
}

#[derive(Debug)]
struct ParseError;

type Parse<T> = Result<T, ParseError>;

const PUNCT: &[&str] = &[
    "<=", ">=", "<>", "!=", "==", "||", "<<", ">>", "(", ")", ",", ".", ";", "*", "=", "<", ">",
    "+", "-", "/", "%", "&", "|", "~",
];

fn tokenize(src: &str) -> Parse<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            loop {
                if i + 1 >= chars.len() {
                    return Err(ParseError);
                }
                if chars[i] == '*' && chars[i + 1] == '/' {
                    i += 2;
                    break;
                }
                i += 1;
            }
        } else if c == '\'' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(ParseError),
                    Some('\'') if chars.get(i + 1) == Some(&'\'') => {
                        s.push_str("''");
                        i += 2;
                    }
                    Some('\'') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.extend(ch.to_lowercase());
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Str(s));
        } else if matches!(c, '"' | '`' | '[') {
            let close = if c == '[' { ']' } else { c };
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(ParseError),
                    Some(&ch) if ch == close => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.extend(ch.to_lowercase());
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Quoted(s));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if matches!(chars.get(i), Some('e' | 'E'))
                && (chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())
                    || (matches!(chars.get(i + 1), Some('+' | '-'))
                        && chars.get(i + 2).is_some_and(|d| d.is_ascii_digit())))
            {
                i += 2;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect::<String>().to_lowercase();
            toks.push(Tok::Num(text));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len()
                && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$')
            {
                i += 1;
            }
            toks.push(Tok::Word(
                chars[start..i].iter().collect::<String>().to_lowercase(),
            ));
        } else if matches!(c, '?' | ':' | '@' | '$') {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Param(
                chars[start..i].iter().collect::<String>().to_lowercase(),
            ));
        } else {
            let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
            let p = PUNCT
                .iter()
                .find(|p| rest.starts_with(**p))
                .ok_or(ParseError)?;
            toks.push(Tok::Punct(p));
            i += p.chars().count();
        }
    }
    Ok(toks)
}

/// Words after which an opening parenthesis is not a function call.
const SPACED_BEFORE_PAREN: &[&str] = &[
    "in",
    "and",
    "or",
    "not",
    "exists",
    "as",
    "on",
    "from",
    "select",
    "where",
    "when",
    "then",
    "else",
    "like",
    "between",
    "is",
    "union",
    "intersect",
    "except",
    "all",
    "any",
    "some",
    "values",
    "using",
    "join",
    "by",
    "having",
    "case",
    "distinct",
    "with",
    "over",
    "asc",
    "desc",
];

fn render(toks: &[Tok]) -> String {
    let mut out = String::new();
    let mut prev: Option<&Tok> = None;
    for t in toks {
        let space = match prev {
            None => false,
            Some(p) => {
                let glue_after = p.is_punct("(") || p.is_punct(".");
                let glue_before = t.is_punct(")") || t.is_punct(",") || t.is_punct(".");
                let call = t.is_punct("(")
                    && match p {
                        Tok::Word(w) => !SPACED_BEFORE_PAREN.contains(&w.as_str()),
                        Tok::Quoted(_) => true,
                        _ => false,
                    };
                !(glue_after || glue_before || call)
            }
        };
        if space {
            out.push(' ');
        }
        out.push_str(&t.text());
        prev = Some(t);
    }
    out
}

/// Walks a token slice tracking parenthesis and CASE nesting, yielding the
/// depth *before* each token is applied.
fn depths(toks: &[Tok]) -> Parse<Vec<usize>> {
    let mut depth: usize = 0;
    let mut out = Vec::with_capacity(toks.len());
    for t in toks {
        if t.is_punct(")") || t.is_word("end") {
            if t.is_punct(")") || depth > 0 {
                depth = depth.checked_sub(1).ok_or(ParseError)?;
            }
            out.push(depth);
            continue;
        }
        out.push(depth);
        if t.is_punct("(") || t.is_word("case") {
            depth += 1;
        }
    }
    if depth != 0 {
        return Err(ParseError);
    }
    Ok(out)
}

/// Index of the `)` matching the `(` at `open`.
fn matching_paren(toks: &[Tok], open: usize) -> Parse<usize> {
    let mut depth = 0usize;
    for (i, t) in toks.iter().enumerate().skip(open) {
        if t.is_punct("(") {
            depth += 1;
        } else if t.is_punct(")") {
            depth -= 1;
            if depth == 0 {
                return Ok(i);
            }
        }
    }
    Err(ParseError)
}

fn split_top_level(toks: &[Tok], is_sep: impl Fn(&Tok) -> bool) -> Parse<Vec<&[Tok]>> {
    let d = depths(toks)?;
    let mut parts = Vec::new();
    let mut start = 0;
    for (i, t) in toks.iter().enumerate() {
        if d[i] == 0 && is_sep(t) {
            parts.push(&toks[start..i]);
            start = i + 1;
        }
    }
    parts.push(&toks[start..]);
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ParseError);
    }
    Ok(parts)
}

/// Splits on top-level AND, leaving the AND of `BETWEEN x AND y` in place.
fn split_conjuncts(toks: &[Tok]) -> Parse<Vec<&[Tok]>> {
    let d = depths(toks)?;
    let mut parts = Vec::new();
    let mut start = 0;
    let mut pending_between = 0usize;
    for (i, t) in toks.iter().enumerate() {
        if d[i] != 0 {
            continue;
        }
        if t.is_word("between") {
            pending_between += 1;
        } else if t.is_word("and") {
            if pending_between > 0 {
                pending_between -= 1;
            } else {
                parts.push(&toks[start..i]);
                start = i + 1;
            }
        }
    }
    parts.push(&toks[start..]);
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ParseError);
    }
    Ok(parts)
}

fn starts_query(toks: &[Tok]) -> bool {
    matches!(toks.first(), Some(t) if t.is_word("select") || t.is_word("with"))
        || (toks.first().is_some_and(|t| t.is_punct("(")) && starts_query(&toks[1..]))
}

struct Decomposer {
    set: ComponentSet,
}

impl Decomposer {
    fn emit(&mut self, kind: ComponentKind, text: String) {
        self.set.insert(kind, text);
    }

    /// Renders an expression, decomposing each parenthesized subquery into the
    /// shared set and showing `(subquery)` in its place.
    fn expr(&mut self, toks: &[Tok]) -> Parse<String> {
        let mut flat = Vec::with_capacity(toks.len());
        let mut i = 0;
        while i < toks.len() {
            if toks[i].is_punct("(") && starts_query(&toks[i + 1..]) {
                let close = matching_paren(toks, i)?;
                self.query(&toks[i + 1..close])?;
                flat.push(Tok::Word("(subquery)".into()));
                i = close + 1;
            } else {
                flat.push(toks[i].clone());
                i += 1;
            }
        }
        Ok(render(&flat))
    }

    fn query(&mut self, toks: &[Tok]) -> Parse<()> {
        let mut toks = toks;
        while toks.first().is_some_and(|t| t.is_punct("("))
            && matching_paren(toks, 0)? == toks.len() - 1
        {
            toks = &toks[1..toks.len() - 1];
        }
        if toks.is_empty() {
            return Err(ParseError);
        }
        if toks[0].is_word("with") {
            return self.with_query(&toks[1..]);
        }

        let d = depths(toks)?;
        let mut cuts = Vec::new();
        let mut i = 0;
        while i < toks.len() {
            if d[i] == 0 {
                let op = match &toks[i] {
                    Tok::Word(w) if w == "union" || w == "intersect" || w == "except" => {
                        Some(w.clone())
                    }
                    _ => None,
                };
                if let Some(op) = op {
                    let all = toks.get(i + 1).is_some_and(|t| t.is_word("all"));
                    let end = if all { i + 2 } else { i + 1 };
                    cuts.push((i, end, if all { format!("{op} all") } else { op }));
                    i = end;
                    continue;
                }
            }
            i += 1;
        }
        if cuts.is_empty() {
            return self.select(toks);
        }
        let mut start = 0;
        for (at, end, op) in cuts {
            self.query(&toks[start..at])?;
            self.emit(ComponentKind::SetOp, op);
            start = end;
        }
        self.query(&toks[start..])
    }

    fn with_query(&mut self, toks: &[Tok]) -> Parse<()> {
        let mut i = 0;
        if toks.first().is_some_and(|t| t.is_word("recursive")) {
            i += 1;
        }
        loop {
            // name [(cols)] AS (query)
            match toks.get(i) {
                Some(Tok::Word(_) | Tok::Quoted(_)) => i += 1,
                _ => return Err(ParseError),
            }
            if toks.get(i).is_some_and(|t| t.is_punct("(")) {
                i = matching_paren(toks, i)? + 1;
            }
            if !toks.get(i).is_some_and(|t| t.is_word("as")) {
                return Err(ParseError);
            }
            i += 1;
            if toks
                .get(i)
                .is_some_and(|t| t.is_word("materialized") || t.is_word("not"))
            {
                i += if toks[i].is_word("not") { 2 } else { 1 };
            }
            if !toks.get(i).is_some_and(|t| t.is_punct("(")) {
                return Err(ParseError);
            }
            let close = matching_paren(toks, i)?;
            self.query(&toks[i + 1..close])?;
            i = close + 1;
            if toks.get(i).is_some_and(|t| t.is_punct(",")) {
                i += 1;
                continue;
            }
            break;
        }
        self.query(&toks[i..])
    }

    fn select(&mut self, toks: &[Tok]) -> Parse<()> {
        if !toks.first().is_some_and(|t| t.is_word("select")) {
            return Err(ParseError);
        }
        let d = depths(toks)?;
        let mut clauses: Vec<(Clause, usize, usize)> = Vec::new();
        let mut i = 1;
        while i < toks.len() {
            if d[i] == 0 {
                if let Some((clause, width)) = clause_at(toks, i) {
                    clauses.push((clause, i, i + width));
                    i += width;
                    continue;
                }
            }
            i += 1;
        }

        let first_cut = clauses.first().map_or(toks.len(), |c| c.1);
        self.select_list(&toks[1..first_cut])?;

        let mut seen = Vec::new();
        for (n, &(clause, _, body_start)) in clauses.iter().enumerate() {
            if seen.contains(&clause) {
                return Err(ParseError);
            }
            seen.push(clause);
            let body_end = clauses.get(n + 1).map_or(toks.len(), |c| c.1);
            let body = &toks[body_start..body_end];
            if body.is_empty() {
                return Err(ParseError);
            }
            match clause {
                Clause::From => self.from(body)?,
                Clause::Where => {
                    for pred in split_conjuncts(body)? {
                        let text = self.expr(pred)?;
                        self.emit(ComponentKind::WherePred, text);
                    }
                }
                Clause::GroupBy => {
                    for key in split_top_level(body, |t| t.is_punct(","))? {
                        let text = self.expr(key)?;
                        self.emit(ComponentKind::GroupKey, text);
                    }
                }
                Clause::Having => {
                    for pred in split_conjuncts(body)? {
                        let text = self.expr(pred)?;
                        self.emit(ComponentKind::HavingPred, text);
                    }
                }
                Clause::OrderBy => {
                    for key in split_top_level(body, |t| t.is_punct(","))? {
                        let mut text = self.expr(key)?;
                        let directed = key.iter().any(|t| t.is_word("asc") || t.is_word("desc"));
                        if !directed {
                            text.push_str(" asc");
                        }
                        self.emit(ComponentKind::OrderKey, text);
                    }
                }
                Clause::Limit | Clause::Offset => {}
            }
        }

        // LIMIT and OFFSET form a single item.
        let limit = clauses
            .iter()
            .enumerate()
            .find(|(_, c)| c.0 == Clause::Limit);
        let offset = clauses
            .iter()
            .enumerate()
            .find(|(_, c)| c.0 == Clause::Offset);
        let body_of = |n: usize| {
            let end = clauses.get(n + 1).map_or(toks.len(), |c| c.1);
            &toks[clauses[n].2..end]
        };
        let text = match (limit, offset) {
            (Some((l, _)), Some((o, _))) => Some(format!(
                "{} offset {}",
                render(body_of(l)),
                render(body_of(o))
            )),
            (Some((l, _)), None) => Some(render(body_of(l))),
            (None, Some((o, _))) => Some(format!("offset {}", render(body_of(o)))),
            (None, None) => None,
        };
        if let Some(text) = text {
            self.emit(ComponentKind::LimitVal, text);
        }
        Ok(())
    }

    fn select_list(&mut self, toks: &[Tok]) -> Parse<()> {
        let mut toks = toks;
        if toks.first().is_some_and(|t| t.is_word("distinct")) {
            self.emit(ComponentKind::SelectItem, "distinct".into());
            toks = &toks[1..];
        } else if toks.first().is_some_and(|t| t.is_word("all")) {
            toks = &toks[1..];
        }
        if toks.is_empty() {
            return Err(ParseError);
        }
        for item in split_top_level(toks, |t| t.is_punct(","))? {
            let text = self.expr(item)?;
            self.emit(ComponentKind::SelectItem, text);
            for agg in aggregate_calls(item)? {
                self.emit(ComponentKind::AggFunc, agg);
            }
        }
        Ok(())
    }

    fn from(&mut self, toks: &[Tok]) -> Parse<()> {
        for segment in split_top_level(toks, |t| t.is_punct(","))? {
            let d = depths(segment)?;
            // (start of join keywords, index of JOIN)
            let mut joins = Vec::new();
            let mut i = 0;
            while i < segment.len() {
                if d[i] == 0 && segment[i].is_word("join") {
                    let mut start = i;
                    while start > 0 && d[start - 1] == 0 && is_join_modifier(&segment[start - 1]) {
                        start -= 1;
                    }
                    joins.push((start, i));
                }
                i += 1;
            }
            let first_end = joins.first().map_or(segment.len(), |j| j.0);
            let table = &segment[..first_end];
            if table.is_empty() {
                return Err(ParseError);
            }
            let text = self.expr(table)?;
            self.emit(ComponentKind::FromTable, text);

            for (n, &(_, join_kw)) in joins.iter().enumerate() {
                let end = joins.get(n + 1).map_or(segment.len(), |j| j.0);
                let part = &segment[join_kw + 1..end];
                let pd = depths(part)?;
                let cond_at = (0..part.len())
                    .find(|&k| pd[k] == 0 && (part[k].is_word("on") || part[k].is_word("using")));
                let (table, cond) = match cond_at {
                    Some(k) if part[k].is_word("on") => (&part[..k], self.expr(&part[k + 1..])?),
                    Some(k) => (&part[..k], self.expr(&part[k..])?),
                    None => (part, String::new()),
                };
                if table.is_empty() || (cond_at.is_some() && cond.is_empty()) {
                    return Err(ParseError);
                }
                let table = self.expr(table)?;
                self.emit(ComponentKind::JoinPair, format!("{table}|{cond}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Clause {
    From,
    Where,
    GroupBy,
    Having,
    OrderBy,
    Limit,
    Offset,
}

fn clause_at(toks: &[Tok], i: usize) -> Option<(Clause, usize)> {
    let by_follows = toks.get(i + 1).is_some_and(|t| t.is_word("by"));
    match &toks[i] {
        Tok::Word(w) => match w.as_str() {
            "from" => Some((Clause::From, 1)),
            "where" => Some((Clause::Where, 1)),
            "group" if by_follows => Some((Clause::GroupBy, 2)),
            "having" => Some((Clause::Having, 1)),
            "order" if by_follows => Some((Clause::OrderBy, 2)),
            "limit" => Some((Clause::Limit, 1)),
            "offset" => Some((Clause::Offset, 1)),
            _ => None,
        },
        _ => None,
    }
}

fn is_join_modifier(t: &Tok) -> bool {
    [
        "inner", "left", "right", "full", "outer", "cross", "natural",
    ]
    .iter()
    .any(|m| t.is_word(m))
}

/// Names of aggregate calls in an expression, skipping subquery bodies.
fn aggregate_calls(toks: &[Tok]) -> Parse<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if toks[i].is_punct("(") && starts_query(&toks[i + 1..]) {
            i = matching_paren(toks, i)? + 1;
            continue;
        }
        if let Tok::Word(w) = &toks[i] {
            if matches!(w.as_str(), "count" | "sum" | "avg" | "min" | "max")
                && toks.get(i + 1).is_some_and(|t| t.is_punct("("))
            {
                out.push(w.clone());
            }
        }
        i += 1;
    }
    Ok(out)
}

/// Decomposes a query into clause items. Unparseable input yields an empty set
/// and `false`.
pub fn decompose_sql(query: &str) -> (ComponentSet, bool) {
    match try_decompose(query) {
        Ok(set) => (set, true),
        Err(ParseError) => (ComponentSet::new(), false),
    }
}

fn try_decompose(query: &str) -> Parse<ComponentSet> {
    let mut toks = tokenize(query)?;
    while toks.last().is_some_and(|t| t.is_punct(";")) {
        toks.pop();
    }
    if toks.is_empty() || toks.iter().any(|t| t.is_punct(";")) {
        return Err(ParseError);
    }
    depths(&toks)?;
    let mut d = Decomposer {
        set: ComponentSet::new(),
    };
    d.query(&toks)?;
    Ok(d.set)
}
