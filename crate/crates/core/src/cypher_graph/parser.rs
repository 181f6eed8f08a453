//! Pattern extraction from Cypher text.
//!
//! Only the pattern clauses (MATCH, OPTIONAL MATCH, MERGE, CREATE) and simple
//! `var.prop = literal` WHERE conjuncts contribute to the graph. Everything
//! else is skipped at the token level, so label names or expression syntax the
//! parser does not model never affect the result.

use std::collections::HashMap;

use super::{Extraction, PatternEdge, PatternGraph, PatternNode};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Escaped(String),
    Str(String),
    Num(String),
    Param(String),
    Punct(&'static str),
}

impl Tok {
    fn punct(&self, p: &str) -> bool {
        matches!(self, Tok::Punct(x) if *x == p)
    }

    fn keyword(&self, k: &str) -> bool {
        matches!(self, Tok::Ident(x) if x.eq_ignore_ascii_case(k))
    }

    fn name(&self) -> Option<&str> {
        match self {
            Tok::Ident(s) | Tok::Escaped(s) => Some(s),
            _ => None,
        }
    }

    fn text(&self) -> String {
        match self {
            Tok::Ident(s) => match s.to_ascii_lowercase().as_str() {
                l @ ("true" | "false" | "null") => l.to_string(),
                _ => s.clone(),
            },
            Tok::Escaped(s) => format!("`{s}`"),
            Tok::Str(s) => format!("'{s}'"),
            Tok::Num(s) | Tok::Param(s) => s.clone(),
            Tok::Punct(p) => (*p).to_string(),
        }
    }
}

#[derive(Debug)]
pub(super) struct ParseError;

type Parse<T> = Result<T, ParseError>;

const PUNCT: &[&str] = &[
    "<=", ">=", "<>", "!=", "=~", "+=", "..", "(", ")", "[", "]", "{", "}", ",", ":", ".", ";",
    "=", "<", ">", "-", "+", "*", "/", "%", "^", "|", "&", "!",
];

fn tokenize(src: &str) -> Parse<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
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
        } else if c == '\'' || c == '"' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(ParseError),
                    Some('\\') => {
                        s.push('\\');
                        s.push(*chars.get(i + 1).ok_or(ParseError)?);
                        i += 2;
                    }
                    Some(&ch) if ch == c => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Str(s.trim().to_string()));
        } else if c == '`' {
            let mut s = String::new();
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err(ParseError),
                    Some('`') => {
                        i += 1;
                        break;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        i += 1;
                    }
                }
            }
            toks.push(Tok::Escaped(s));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
            }
            toks.push(Tok::Num(chars[start..i].iter().collect()));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if c == '$' {
            let start = i;
            i += 1;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            toks.push(Tok::Param(chars[start..i].iter().collect()));
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

/// Bracket depth before each token; fails on imbalance.
fn depths(toks: &[Tok]) -> Parse<Vec<usize>> {
    let mut stack: Vec<&str> = Vec::new();
    let mut out = Vec::with_capacity(toks.len());
    for t in toks {
        if let Tok::Punct(p) = t {
            match *p {
                ")" | "]" | "}" => {
                    let want = match *p {
                        ")" => "(",
                        "]" => "[",
                        _ => "{",
                    };
                    if stack.pop() != Some(want) {
                        return Err(ParseError);
                    }
                    out.push(stack.len());
                    continue;
                }
                "(" | "[" | "{" => {
                    out.push(stack.len());
                    stack.push(p);
                    continue;
                }
                _ => {}
            }
        }
        out.push(stack.len());
    }
    if !stack.is_empty() {
        return Err(ParseError);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Clause {
    Match,
    Merge,
    Create,
    Where,
    Union,
    Other,
}

/// Recognizes a clause keyword at `i`, returning its kind and token width.
fn clause_at(toks: &[Tok], i: usize) -> Option<(Clause, usize)> {
    let t = &toks[i];
    let Tok::Ident(word) = t else { return None };
    if i > 0 && (toks[i - 1].punct(".") || toks[i - 1].punct(":")) {
        return None;
    }
    let next = toks.get(i + 1);
    let next_is = |k: &str| next.is_some_and(|n| n.keyword(k));
    let kind = match word.to_ascii_lowercase().as_str() {
        "match" => (Clause::Match, 1),
        "optional" if next_is("match") => (Clause::Match, 2),
        "merge" => (Clause::Merge, 1),
        "create" if next_is("index") || next_is("constraint") => (Clause::Other, 1),
        "create" => (Clause::Create, 1),
        "where" => (Clause::Where, 1),
        "union" if next_is("all") => (Clause::Union, 2),
        "union" => (Clause::Union, 1),
        "on" if next_is("create") || next_is("match") => (Clause::Other, 2),
        "with" if i > 0 && (toks[i - 1].keyword("starts") || toks[i - 1].keyword("ends")) => {
            return None
        }
        "order" if next_is("by") => (Clause::Other, 2),
        "detach" if next_is("delete") => (Clause::Other, 2),
        "return" | "with" | "unwind" | "skip" | "limit" | "set" | "delete" | "remove" | "call"
        | "yield" | "foreach" | "using" | "load" | "finish" => (Clause::Other, 1),
        _ => return None,
    };
    Some(kind)
}

struct Builder {
    graph: PatternGraph,
    node_vars: HashMap<String, usize>,
    edge_vars: HashMap<String, usize>,
    ignored_predicates: usize,
}

impl Builder {
    fn node(
        &mut self,
        var: Option<String>,
        labels: Vec<String>,
        props: Vec<(String, String)>,
    ) -> usize {
        let idx = match var.as_ref().and_then(|v| self.node_vars.get(v)) {
            Some(&idx) => idx,
            None => {
                self.graph.nodes.push(PatternNode {
                    var: var.clone(),
                    anon: var.is_none(),
                    ..Default::default()
                });
                let idx = self.graph.nodes.len() - 1;
                if let Some(v) = var {
                    self.node_vars.insert(v, idx);
                }
                idx
            }
        };
        let node = &mut self.graph.nodes[idx];
        node.labels.extend(labels);
        for (k, v) in props {
            node.props.entry(k).or_insert(v);
        }
        idx
    }

    fn edge(&mut self, var: Option<String>, edge: PatternEdge, props: Vec<(String, String)>) {
        let idx = match var.as_ref().and_then(|v| self.edge_vars.get(v)) {
            Some(&idx) => {
                self.graph.edges[idx].rel_types.extend(edge.rel_types);
                idx
            }
            None => {
                self.graph.edges.push(PatternEdge {
                    var: var.clone(),
                    ..edge
                });
                let idx = self.graph.edges.len() - 1;
                if let Some(v) = var {
                    self.edge_vars.insert(v, idx);
                }
                idx
            }
        };
        for (k, v) in props {
            self.graph.edges[idx].props.entry(k).or_insert(v);
        }
    }

    fn fold_where(&mut self, toks: &[Tok]) -> Parse<()> {
        let d = depths(toks)?;
        let top_level_or = toks
            .iter()
            .zip(&d)
            .any(|(t, &depth)| depth == 0 && (t.keyword("or") || t.keyword("xor")));
        if top_level_or {
            self.ignored_predicates += 1;
            return Ok(());
        }
        let mut start = 0;
        let mut conjuncts = Vec::new();
        for (i, t) in toks.iter().enumerate() {
            if d[i] == 0 && t.keyword("and") {
                conjuncts.push(&toks[start..i]);
                start = i + 1;
            }
        }
        conjuncts.push(&toks[start..]);
        for c in conjuncts {
            if c.is_empty() {
                return Err(ParseError);
            }
            if !self.fold_equality(c) {
                self.ignored_predicates += 1;
            }
        }
        Ok(())
    }

    /// Folds `var.prop = literal` (either side) into the owning element.
    fn fold_equality(&mut self, c: &[Tok]) -> bool {
        let Some(eq) = c.iter().position(|t| t.punct("=")) else {
            return false;
        };
        let (lhs, rhs) = (&c[..eq], &c[eq + 1..]);
        let (access, literal) = match (property_access(lhs), literal_text(rhs)) {
            (Some(a), Some(l)) => (a, l),
            _ => match (property_access(rhs), literal_text(lhs)) {
                (Some(a), Some(l)) => (a, l),
                _ => return false,
            },
        };
        let (var, prop) = access;
        if let Some(&idx) = self.node_vars.get(&var) {
            self.graph.nodes[idx].props.entry(prop).or_insert(literal);
            true
        } else if let Some(&idx) = self.edge_vars.get(&var) {
            self.graph.edges[idx].props.entry(prop).or_insert(literal);
            true
        } else {
            false
        }
    }
}

fn property_access(toks: &[Tok]) -> Option<(String, String)> {
    match toks {
        [v, dot, p] if dot.punct(".") => {
            Some((v.name()?.to_string(), p.name()?.to_ascii_lowercase()))
        }
        _ => None,
    }
}

fn literal_text(toks: &[Tok]) -> Option<String> {
    match toks {
        [t @ (Tok::Str(_) | Tok::Num(_) | Tok::Param(_))] => Some(t.text()),
        [Tok::Ident(w)] if ["true", "false", "null"].contains(&w.to_ascii_lowercase().as_str()) => {
            Some(w.to_ascii_lowercase())
        }
        [minus, n @ Tok::Num(_)] if minus.punct("-") => Some(format!("-{}", n.text())),
        _ => None,
    }
}

fn join_tokens(toks: &[Tok]) -> String {
    if let Some(lit) = literal_text(toks) {
        return lit;
    }
    toks.iter()
        .map(Tok::text)
        .collect::<Vec<_>>()
        .join(" ")
        .trim()
        .to_string()
}

struct Cursor<'a> {
    toks: &'a [Tok],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&'a Tok> {
        self.toks.get(self.pos + off)
    }

    fn at_punct(&self, p: &str) -> bool {
        self.peek().is_some_and(|t| t.punct(p))
    }

    fn eat(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> Parse<()> {
        if self.eat(p) {
            Ok(())
        } else {
            Err(ParseError)
        }
    }

    fn ident(&mut self) -> Option<String> {
        let name = self.peek()?.name()?.to_string();
        self.pos += 1;
        Some(name)
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }
}

fn parse_patterns(b: &mut Builder, toks: &[Tok]) -> Parse<()> {
    let mut cur = Cursor { toks, pos: 0 };
    loop {
        parse_pattern(b, &mut cur)?;
        if !cur.eat(",") {
            break;
        }
    }
    if cur.done() {
        Ok(())
    } else {
        Err(ParseError)
    }
}

fn parse_pattern(b: &mut Builder, cur: &mut Cursor<'_>) -> Parse<()> {
    // Path variable: p = ...
    if cur.peek().is_some_and(|t| t.name().is_some())
        && cur.peek_at(1).is_some_and(|t| t.punct("="))
    {
        cur.pos += 2;
    }
    let wrapped = cur
        .peek()
        .is_some_and(|t| t.keyword("shortestPath") || t.keyword("allShortestPaths"))
        && cur.peek_at(1).is_some_and(|t| t.punct("("));
    if wrapped {
        cur.pos += 2;
        parse_chain(b, cur)?;
        cur.expect(")")
    } else {
        parse_chain(b, cur)
    }
}

fn parse_chain(b: &mut Builder, cur: &mut Cursor<'_>) -> Parse<()> {
    let mut left = parse_node(b, cur)?;
    while cur.at_punct("-") || (cur.at_punct("<") && cur.peek_at(1).is_some_and(|t| t.punct("-"))) {
        let into_left = cur.eat("<");
        cur.expect("-")?;
        let detail = if cur.at_punct("[") {
            Some(parse_rel_detail(cur)?)
        } else {
            None
        };
        cur.expect("-")?;
        let into_right = cur.eat(">");
        let right = parse_node(b, cur)?;
        let (var, mut edge, props) = detail.unwrap_or_default();
        let (src, dst, directed) = match (into_left, into_right) {
            (true, false) => (right, left, true),
            (false, true) => (left, right, true),
            _ => (left, right, false),
        };
        edge.src = src;
        edge.dst = dst;
        edge.directed = directed;
        b.edge(var, edge, props);
        left = right;
    }
    Ok(())
}

fn parse_labels(cur: &mut Cursor<'_>) -> Parse<Vec<String>> {
    let mut labels = Vec::new();
    if !cur.eat(":") {
        return Ok(labels);
    }
    loop {
        labels.push(cur.ident().ok_or(ParseError)?.to_lowercase());
        if cur.eat(":") || cur.eat("|") || cur.eat("&") {
            // `:A|:B` is accepted as well as `:A|B`.
            cur.eat(":");
            continue;
        }
        break;
    }
    Ok(labels)
}

fn parse_props(cur: &mut Cursor<'_>) -> Parse<Vec<(String, String)>> {
    let mut props = Vec::new();
    if let Some(Tok::Param(p)) = cur.peek() {
        cur.pos += 1;
        props.push(("$props".to_string(), p.clone()));
        return Ok(props);
    }
    if !cur.eat("{") {
        return Ok(props);
    }
    if cur.eat("}") {
        return Ok(props);
    }
    loop {
        let key = cur.ident().ok_or(ParseError)?.to_lowercase();
        cur.expect(":")?;
        let start = cur.pos;
        let mut depth = 0usize;
        while let Some(t) = cur.peek() {
            if depth == 0 && (t.punct(",") || t.punct("}")) {
                break;
            }
            if t.punct("(") || t.punct("[") || t.punct("{") {
                depth += 1;
            } else if t.punct(")") || t.punct("]") || t.punct("}") {
                depth = depth.checked_sub(1).ok_or(ParseError)?;
            }
            cur.pos += 1;
        }
        if cur.pos == start {
            return Err(ParseError);
        }
        props.push((key, join_tokens(&cur.toks[start..cur.pos])));
        if cur.eat(",") {
            continue;
        }
        cur.expect("}")?;
        break;
    }
    Ok(props)
}

fn parse_node(b: &mut Builder, cur: &mut Cursor<'_>) -> Parse<usize> {
    cur.expect("(")?;
    let var = if cur.peek().is_some_and(|t| !t.keyword("where")) {
        cur.ident()
    } else {
        None
    };
    let labels = parse_labels(cur)?;
    let props = parse_props(cur)?;
    if cur.peek().is_some_and(|t| t.keyword("where")) {
        // Inline predicate; not a graph attribute.
        let mut depth = 0usize;
        while let Some(t) = cur.peek() {
            if depth == 0 && t.punct(")") {
                break;
            }
            if t.punct("(") {
                depth += 1;
            } else if t.punct(")") {
                depth -= 1;
            }
            cur.pos += 1;
        }
        b.ignored_predicates += 1;
    }
    cur.expect(")")?;
    Ok(b.node(var, labels, props))
}

type RelDetail = (Option<String>, PatternEdge, Vec<(String, String)>);

fn parse_rel_detail(cur: &mut Cursor<'_>) -> Parse<RelDetail> {
    cur.expect("[")?;
    let var = cur.ident();
    let mut edge = PatternEdge::default();
    if cur.eat(":") {
        loop {
            edge.rel_types
                .insert(cur.ident().ok_or(ParseError)?.to_lowercase());
            if cur.eat("|") {
                cur.eat(":");
                continue;
            }
            break;
        }
    }
    // Variable length: hop counts are dropped.
    if cur.eat("*") {
        if matches!(cur.peek(), Some(Tok::Num(_))) {
            cur.pos += 1;
        }
        if cur.eat("..") && matches!(cur.peek(), Some(Tok::Num(_))) {
            cur.pos += 1;
        }
    }
    let props = parse_props(cur)?;
    cur.expect("]")?;
    Ok((var, edge, props))
}

pub(super) fn extract(query: &str) -> Extraction {
    match try_extract(query) {
        Ok((graph, ignored_predicates)) => Extraction {
            graph,
            parse_ok: true,
            ignored_predicates,
        },
        Err(ParseError) => Extraction {
            graph: PatternGraph::default(),
            parse_ok: false,
            ignored_predicates: 0,
        },
    }
}

fn try_extract(query: &str) -> Parse<(PatternGraph, usize)> {
    let mut toks = tokenize(query)?;
    while toks.last().is_some_and(|t| t.punct(";")) {
        toks.pop();
    }
    let skip = toks
        .iter()
        .take_while(|t| t.keyword("explain") || t.keyword("profile"))
        .count();
    let toks = &toks[skip..];
    if toks.is_empty() || toks.iter().any(|t| t.punct(";")) {
        return Err(ParseError);
    }
    let d = depths(toks)?;

    let mut clauses = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if d[i] == 0 {
            if let Some((kind, width)) = clause_at(toks, i) {
                clauses.push((kind, i, i + width));
                i += width;
                continue;
            }
        }
        i += 1;
    }
    if clauses.first().is_none_or(|c| c.1 != 0) {
        return Err(ParseError);
    }

    let mut b = Builder {
        graph: PatternGraph::default(),
        node_vars: HashMap::new(),
        edge_vars: HashMap::new(),
        ignored_predicates: 0,
    };
    for (n, &(kind, _, body_start)) in clauses.iter().enumerate() {
        let body_end = clauses.get(n + 1).map_or(toks.len(), |c| c.1);
        let body = &toks[body_start..body_end];
        match kind {
            Clause::Match | Clause::Merge | Clause::Create => {
                if body.is_empty() {
                    return Err(ParseError);
                }
                parse_patterns(&mut b, body)?;
            }
            Clause::Where => {
                if body.is_empty() {
                    return Err(ParseError);
                }
                b.fold_where(body)?;
            }
            Clause::Union => {
                b.node_vars.clear();
                b.edge_vars.clear();
            }
            Clause::Other => {}
        }
    }
    Ok((b.graph, b.ignored_predicates))
}
