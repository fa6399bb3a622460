//! Conjunctive basic-graph-pattern queries.
//!
//! Patterns match against the triples view of a graph: every edge, one `rdf:type`
//! triple per typed node, and one triple per property value. `VALUES` restricts a
//! variable to a finite set; equality `FILTER`s against constants fold into `VALUES`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexer::{Lexer, Tok, Token};
use super::turtle::{literal_term, node_term, DEFAULT_BASE};
use super::{KnowledgeGraph, Literal, NodeId, RDF_NS, RDF_TYPE, XSD_NS};

/// A bound value: graph node or literal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Term {
    Node(NodeId),
    Literal(Literal),
}

impl Term {
    pub fn as_node(&self) -> Option<&NodeId> {
        match self {
            Term::Node(n) => Some(n),
            Term::Literal(_) => None,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Node(n) => n.fmt(f),
            Term::Literal(l) => l.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PatternTerm {
    Var(String),
    Node(NodeId),
    Literal(Literal),
}

impl PatternTerm {
    pub fn var(name: &str) -> Self {
        PatternTerm::Var(name.to_string())
    }

    pub fn term(name: &str) -> Self {
        PatternTerm::Node(NodeId::term(name))
    }

    fn var_name(&self) -> Option<&str> {
        match self {
            PatternTerm::Var(v) => Some(v),
            _ => None,
        }
    }

    fn constant(&self) -> Option<Term> {
        match self {
            PatternTerm::Var(_) => None,
            PatternTerm::Node(n) => Some(Term::Node(n.clone())),
            PatternTerm::Literal(l) => Some(Term::Literal(l.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: PatternTerm,
    pub relation: PatternTerm,
    pub object: PatternTerm,
}

impl TriplePattern {
    pub fn new(subject: PatternTerm, relation: PatternTerm, object: PatternTerm) -> Self {
        Self { subject, relation, object }
    }

    fn terms(&self) -> [&PatternTerm; 3] {
        [&self.subject, &self.relation, &self.object]
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error("pattern has no triple patterns")]
    Empty,
    #[error("pattern-invalid: variable ?{0} does not occur in any triple pattern")]
    UnboundVariable(String),
    #[error("query syntax error at {line}:{column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
}

fn syntax(tok: Option<&Token>, message: impl Into<String>) -> QueryError {
    let pos = tok.map(|t| t.start).unwrap_or_default();
    QueryError::Syntax { line: pos.line, column: pos.column, message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphPattern {
    patterns: Vec<TriplePattern>,
    select: Vec<String>,
    values: BTreeMap<String, BTreeSet<Term>>,
}

impl GraphPattern {
    /// An empty `select` projects every variable in order of first occurrence.
    pub fn new(patterns: Vec<TriplePattern>, select: Vec<String>) -> Result<Self, QueryError> {
        if patterns.is_empty() {
            return Err(QueryError::Empty);
        }
        let mut p = Self { patterns, select: Vec::new(), values: BTreeMap::new() };
        let vars = p.variables();
        if select.is_empty() {
            p.select = vars;
        } else {
            if let Some(v) = select.iter().find(|v| !vars.contains(v)) {
                return Err(QueryError::UnboundVariable(v.clone()));
            }
            p.select = select;
        }
        Ok(p)
    }

    /// Restrict `var` to `allowed`. Repeated calls intersect.
    pub fn with_values(mut self, var: &str, allowed: impl IntoIterator<Item = Term>) -> Result<Self, QueryError> {
        if !self.variables().iter().any(|v| v == var) {
            return Err(QueryError::UnboundVariable(var.to_string()));
        }
        let incoming: BTreeSet<Term> = allowed.into_iter().collect();
        let merged = match self.values.remove(var) {
            Some(prev) => prev.intersection(&incoming).cloned().collect(),
            None => incoming,
        };
        self.values.insert(var.to_string(), merged);
        Ok(self)
    }

    pub fn patterns(&self) -> &[TriplePattern] {
        &self.patterns
    }

    pub fn select(&self) -> &[String] {
        &self.select
    }

    pub fn values(&self) -> &BTreeMap<String, BTreeSet<Term>> {
        &self.values
    }

    pub fn variables(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for p in &self.patterns {
            for t in p.terms() {
                if let Some(v) = t.var_name() {
                    if !out.iter().any(|o| o == v) {
                        out.push(v.to_string());
                    }
                }
            }
        }
        out
    }

    /// Reads the supported SPARQL subset: PREFIX, SELECT [DISTINCT] vars|*, WHERE { triples,
    /// VALUES, FILTER(?v = const) }.
    pub fn parse(text: &str) -> Result<Self, QueryError> {
        Self::parse_with_base(text, DEFAULT_BASE)
    }

    pub fn parse_with_base(text: &str, base: &str) -> Result<Self, QueryError> {
        let toks = Lexer::new(text, true).tokenize().map_err(|e| QueryError::Syntax {
            line: e.pos.line,
            column: e.pos.column,
            message: e.message,
        })?;
        QueryReader { toks: &toks, i: 0, base, prefixes: BTreeMap::new() }.query()
    }

    /// Renders as SPARQL text; `parse` reads it back to an equal pattern.
    pub fn to_sparql(&self) -> String {
        self.to_sparql_with_base(DEFAULT_BASE)
    }

    pub fn to_sparql_with_base(&self, base: &str) -> String {
        let node = |n: &NodeId| node_term(n, base).unwrap_or_else(|_| format!("<{}>", n.to_iri(base)));
        let term = |t: &Term| match t {
            Term::Node(n) => node(n),
            Term::Literal(l) => literal_term(l),
        };
        let pterm = |t: &PatternTerm, pred: bool| match t {
            PatternTerm::Var(v) => format!("?{v}"),
            PatternTerm::Node(n) if pred && n.to_iri(base) == RDF_TYPE => "a".to_string(),
            PatternTerm::Node(n) => node(n),
            PatternTerm::Literal(l) => literal_term(l),
        };
        let mut out = format!(
            "PREFIX ex: <{base}/ssd#>\nPREFIX rdf: <{RDF_NS}>\nPREFIX xsd: <{XSD_NS}>\nSELECT {}\nWHERE {{\n",
            self.select.iter().map(|v| format!("?{v}")).collect::<Vec<_>>().join(" ")
        );
        for (var, vals) in &self.values {
            let list: Vec<String> = vals.iter().map(term).collect();
            out.push_str(&format!("  VALUES ?{var} {{ {} }}\n", list.join(" ")));
        }
        for p in &self.patterns {
            out.push_str(&format!(
                "  {} {} {} .\n",
                pterm(&p.subject, false),
                pterm(&p.relation, true),
                pterm(&p.object, false)
            ));
        }
        out.push('}');
        out.push('\n');
        out
    }
}

struct QueryReader<'t, 'b> {
    toks: &'t [Token],
    i: usize,
    base: &'b str,
    prefixes: BTreeMap<String, String>,
}

impl<'t> QueryReader<'t, '_> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.i)
    }

    fn next(&mut self) -> Option<&'t Token> {
        let t = self.toks.get(self.i);
        self.i += 1;
        t
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Word(w), .. }) if w.eq_ignore_ascii_case(kw))
    }

    fn punct(&self, c: char) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Punct(p), .. }) if *p == c)
    }

    fn expect_punct(&mut self, c: char) -> Result<(), QueryError> {
        if self.punct(c) {
            self.i += 1;
            Ok(())
        } else {
            Err(syntax(self.peek().or(self.toks.last()), format!("expected `{c}`")))
        }
    }

    fn query(mut self) -> Result<GraphPattern, QueryError> {
        while self.keyword("prefix") {
            self.i += 1;
            let name = match self.next() {
                Some(Token { tok: Tok::PName { prefix, local }, .. }) if local.is_empty() => prefix.clone(),
                t => return Err(syntax(t, "expected prefix name")),
            };
            let iri = match self.next() {
                Some(Token { tok: Tok::IriRef(i), .. }) => i.clone(),
                t => return Err(syntax(t, "expected namespace IRI")),
            };
            self.prefixes.insert(name, iri);
        }
        if !self.keyword("select") {
            return Err(syntax(self.peek(), "expected SELECT"));
        }
        self.i += 1;
        if self.keyword("distinct") {
            self.i += 1;
        }
        let mut select = Vec::new();
        if self.punct('*') {
            self.i += 1;
        } else {
            while let Some(Token { tok: Tok::Var(v), .. }) = self.peek() {
                select.push(v.clone());
                self.i += 1;
            }
            if select.is_empty() {
                return Err(syntax(self.peek(), "expected selected variables"));
            }
        }
        if self.keyword("where") {
            self.i += 1;
        }
        self.expect_punct('{')?;

        let mut patterns = Vec::new();
        let mut values: Vec<(String, Vec<Term>)> = Vec::new();
        loop {
            if self.punct('}') {
                self.i += 1;
                break;
            }
            if self.peek().is_none() {
                return Err(syntax(self.toks.last(), "unterminated group, expected `}`"));
            }
            if self.keyword("values") {
                self.i += 1;
                let var = match self.next() {
                    Some(Token { tok: Tok::Var(v), .. }) => v.clone(),
                    t => return Err(syntax(t, "expected variable after VALUES")),
                };
                self.expect_punct('{')?;
                let mut list = Vec::new();
                while !self.punct('}') {
                    let t = self.peek();
                    match self.term(false)? {
                        PatternTerm::Var(_) => return Err(syntax(t, "VALUES lists take constants")),
                        c => list.push(c.constant().expect("constant")),
                    }
                }
                self.i += 1;
                values.push((var, list));
                continue;
            }
            if self.keyword("filter") {
                self.i += 1;
                self.expect_punct('(')?;
                let at = self.peek();
                let lhs = self.term(false)?;
                self.expect_punct('=')?;
                let rhs = self.term(false)?;
                self.expect_punct(')')?;
                let (var, constant) = match (lhs, rhs) {
                    (PatternTerm::Var(v), c) | (c, PatternTerm::Var(v)) if c.var_name().is_none() => (v, c),
                    _ => return Err(syntax(at, "only equality between a variable and a constant is supported")),
                };
                values.push((var, vec![constant.constant().expect("constant")]));
                continue;
            }
            let subject = self.term(false)?;
            loop {
                let relation = self.term(true)?;
                loop {
                    let object = self.term(false)?;
                    patterns.push(TriplePattern::new(subject.clone(), relation.clone(), object));
                    if self.punct(',') {
                        self.i += 1;
                    } else {
                        break;
                    }
                }
                if self.punct(';') {
                    self.i += 1;
                    if self.punct('.') || self.punct('}') {
                        break;
                    }
                } else {
                    break;
                }
            }
            if self.punct('.') {
                self.i += 1;
            } else if !self.punct('}') {
                return Err(syntax(self.peek(), "expected `.` or `}` after triple pattern"));
            }
        }
        if let Some(t) = self.peek() {
            return Err(syntax(Some(t), "unexpected input after query"));
        }
        let mut p = GraphPattern::new(patterns, select)?;
        for (var, list) in values {
            p = p.with_values(&var, list)?;
        }
        Ok(p)
    }

    fn term(&mut self, predicate: bool) -> Result<PatternTerm, QueryError> {
        let tok = self.next();
        let t = match tok {
            Some(t) => t,
            None => return Err(syntax(self.toks.last(), "unexpected end of query")),
        };
        let iri = |s: String| PatternTerm::Node(NodeId::from_iri(&s, self.base));
        Ok(match &t.tok {
            Tok::Var(v) => PatternTerm::Var(v.clone()),
            Tok::Word(w) if predicate && w == "a" => iri(RDF_TYPE.to_string()),
            Tok::IriRef(i) => iri(i.clone()),
            Tok::PName { prefix, local } => match self.prefixes.get(prefix) {
                Some(ns) => iri(format!("{ns}{local}")),
                None => return Err(syntax(tok, format!("undeclared prefix `{prefix}:`"))),
            },
            Tok::Str { value, .. } => PatternTerm::Literal(Literal::Text(value.clone())),
            Tok::Integer(s) => PatternTerm::Literal(
                s.parse::<i64>().map(Literal::Integer).map_err(|_| syntax(tok, "bad integer"))?,
            ),
            Tok::Decimal(s) | Tok::Double(s) => PatternTerm::Literal(Literal::Number(
                s.parse().map_err(|_| syntax(tok, "bad number"))?,
            )),
            Tok::Word(w) if w == "true" || w == "false" => PatternTerm::Literal(Literal::Bool(w == "true")),
            _ => return Err(syntax(tok, "expected a variable, IRI or literal")),
        })
    }
}

/// Projected solution rows, distinct and sorted lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingSet {
    pub vars: Vec<String>,
    pub rows: Vec<Vec<Term>>,
    /// SPARQL rendering of the pattern that produced the rows.
    pub pattern: String,
}

impl BindingSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get<'a>(&self, row: &'a [Term], var: &str) -> Option<&'a Term> {
        self.vars.iter().position(|v| v == var).map(|i| &row[i])
    }

    pub fn column(&self, var: &str) -> Vec<&Term> {
        match self.vars.iter().position(|v| v == var) {
            Some(i) => self.rows.iter().map(|r| &r[i]).collect(),
            None => Vec::new(),
        }
    }
}

/// The triples view of `graph`: edges, type triples and property triples.
pub fn triples_view(graph: &KnowledgeGraph) -> Vec<[Term; 3]> {
    let mut out = Vec::with_capacity(graph.edge_count() + graph.node_count());
    for t in graph.edges() {
        out.push([Term::Node(t.subject.clone()), Term::Node(t.relation.clone()), Term::Node(t.object.clone())]);
    }
    for (id, node) in graph.nodes() {
        if let Some(c) = &node.class {
            out.push([Term::Node(id.clone()), Term::Node(NodeId::rdf_type()), Term::Node(c.clone())]);
        }
        for (p, vals) in &node.properties {
            for v in vals {
                out.push([Term::Node(id.clone()), Term::Node(p.clone()), Term::Literal(v.clone())]);
            }
        }
    }
    out
}

pub fn evaluate_pattern(graph: &KnowledgeGraph, pattern: &GraphPattern) -> BindingSet {
    let view = triples_view(graph);
    let mut by_relation: HashMap<&Term, Vec<usize>> = HashMap::new();
    for (i, t) in view.iter().enumerate() {
        by_relation.entry(&t[1]).or_default().push(i);
    }
    let all: Vec<usize> = (0..view.len()).collect();

    let mut rows: BTreeSet<Vec<Term>> = BTreeSet::new();
    let mut binding: HashMap<String, Term> = HashMap::new();
    search(pattern, &view, &by_relation, &all, 0, &mut binding, &mut rows);

    BindingSet { vars: pattern.select.clone(), rows: rows.into_iter().collect(), pattern: pattern.to_sparql() }
}

fn search(
    pattern: &GraphPattern,
    view: &[[Term; 3]],
    by_relation: &HashMap<&Term, Vec<usize>>,
    all: &[usize],
    depth: usize,
    binding: &mut HashMap<String, Term>,
    rows: &mut BTreeSet<Vec<Term>>,
) {
    let Some(tp) = pattern.patterns.get(depth) else {
        let row = pattern.select.iter().map(|v| binding[v].clone()).collect();
        rows.insert(row);
        return;
    };
    let resolved = |t: &PatternTerm, b: &HashMap<String, Term>| match t {
        PatternTerm::Var(v) => b.get(v).cloned(),
        c => c.constant(),
    };
    let rel = resolved(&tp.relation, binding);
    let candidates: &[usize] = match &rel {
        Some(r) => by_relation.get(r).map(Vec::as_slice).unwrap_or(&[]),
        None => all,
    };
    for &i in candidates {
        let triple = &view[i];
        let mut added: Vec<String> = Vec::new();
        let mut ok = true;
        for (pt, value) in tp.terms().into_iter().zip(triple.iter()) {
            match pt {
                PatternTerm::Var(v) => match binding.get(v) {
                    Some(bound) if bound != value => {
                        ok = false;
                    }
                    Some(_) => {}
                    None => {
                        if pattern.values.get(v).is_some_and(|allowed| !allowed.contains(value)) {
                            ok = false;
                        } else {
                            binding.insert(v.clone(), value.clone());
                            added.push(v.clone());
                        }
                    }
                },
                c => {
                    if c.constant().as_ref() != Some(value) {
                        ok = false;
                    }
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            search(pattern, view, by_relation, all, depth + 1, binding, rows);
        }
        for v in added {
            binding.remove(&v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Triple;

    #[test]
    fn select_must_reference_pattern_variables() {
        let tp = TriplePattern::new(PatternTerm::var("x"), PatternTerm::term("hasImpact"), PatternTerm::var("y"));
        assert_eq!(
            GraphPattern::new(vec![tp], vec!["z".into()]).unwrap_err(),
            QueryError::UnboundVariable("z".into())
        );
        assert_eq!(GraphPattern::new(vec![], vec![]).unwrap_err(), QueryError::Empty);
    }

    #[test]
    fn sparql_round_trip() {
        let q = "PREFIX ex: <http://example.org/ssd#>\nSELECT ?f ?r WHERE { VALUES ?r { ex:impactsMetric ex:degrades } \
                 ?f a ex:EnvironmentalFactor ; ?r ex:P99Latency . FILTER(?f = ex:Temperature) }";
        let p = GraphPattern::parse(q).unwrap();
        assert_eq!(p.patterns().len(), 2);
        assert_eq!(p.values().len(), 2);
        assert_eq!(GraphPattern::parse(&p.to_sparql()).unwrap(), p);
    }

    #[test]
    fn literal_objects_match_properties() {
        let mut g = KnowledgeGraph::new();
        let w = NodeId::data("window", "w1");
        g.add_typed(w.clone(), "Window").unwrap();
        g.set_property(&w, NodeId::term("coverage"), 1.0);
        g.add_edge(Triple::new(NodeId::data("drive", "d"), NodeId::term("hasWindow"), w.clone()));
        let p = GraphPattern::parse(
            "PREFIX ex: <http://example.org/ssd#> SELECT ?d ?c WHERE { ?d ex:hasWindow ?w . ?w ex:coverage ?c }",
        )
        .unwrap();
        let b = evaluate_pattern(&g, &p);
        assert_eq!(b.rows, vec![vec![Term::Node(NodeId::data("drive", "d")), Term::Literal(Literal::Number(1.0))]]);
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = GraphPattern::parse("SELECT ?x WHERE { ?x foo:r ?y }").unwrap_err();
        assert!(matches!(err, QueryError::Syntax { line: 1, column: 22, .. }), "{err:?}");
    }
}
