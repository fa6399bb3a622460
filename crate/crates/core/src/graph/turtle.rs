//! Turtle persistence for [`KnowledgeGraph`].
//!
//! Output is deterministic: a fixed prefix header, then one plain triple per line sorted
//! by subject, relation and object, then one reified `rdf:Statement` block per edge
//! annotation. The reader accepts the usual Turtle surface (prefix/base directives,
//! `;` and `,` lists, `a`, typed and language-tagged literals, comments) and folds the
//! reified statements back into edge annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use super::lexer::{LexError, Lexer, Pos, Tok, Token};
use super::{
    AnnotationData, Direction, KnowledgeGraph, Literal, NodeId, Provenance, Triple, RDFS_NS,
    RDF_NS, RDF_TYPE, XSD_NS,
};

pub const DEFAULT_BASE: &str = "http://example.org";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurtleConfig {
    /// Base of the `<base>/ssd#`, `<base>/data#` and `<base>/ann#` namespaces.
    pub base: String,
}

impl Default for TurtleConfig {
    fn default() -> Self {
        Self { base: DEFAULT_BASE.to_string() }
    }
}

impl TurtleConfig {
    fn ann(&self, local: &str) -> String {
        format!("{}/ann#{local}", self.base)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SerializeError {
    #[error("entity {0} is not expressible as an IRI under the namespace scheme")]
    InvalidIdentifier(String),
}

#[derive(Debug, Error, PartialEq)]
#[error("turtle parse error at {line}:{column}: {kind}")]
pub struct TurtleError {
    pub line: usize,
    pub column: usize,
    pub kind: TurtleErrorKind,
}

#[derive(Debug, Error, PartialEq)]
pub enum TurtleErrorKind {
    #[error("{0}")]
    Malformed(String),
    #[error("undeclared prefix `{0}:`")]
    UndeclaredPrefix(String),
    #[error("class conflict for {0}")]
    ClassConflict(String),
    #[error("incomplete annotation `_:{label}`: missing {field}")]
    IncompleteAnnotation { label: String, field: String },
}

impl TurtleError {
    fn at(pos: Pos, kind: TurtleErrorKind) -> Self {
        Self { line: pos.line, column: pos.column, kind }
    }

    fn malformed(pos: Pos, msg: impl Into<String>) -> Self {
        Self::at(pos, TurtleErrorKind::Malformed(msg.into()))
    }
}

impl From<LexError> for TurtleError {
    fn from(e: LexError) -> Self {
        TurtleError::malformed(e.pos, e.message)
    }
}

// ---------------------------------------------------------------------------
// writing

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Object {
    Node(NodeId),
    Lit(Literal),
}

pub fn serialize_turtle(graph: &KnowledgeGraph) -> Result<String, SerializeError> {
    serialize_turtle_with(graph, &TurtleConfig::default())
}

pub fn serialize_turtle_with(graph: &KnowledgeGraph, cfg: &TurtleConfig) -> Result<String, SerializeError> {
    let mut out = String::new();
    let base = &cfg.base;
    for (p, ns) in [
        ("ex", format!("{base}/ssd#")),
        ("data", format!("{base}/data#")),
        ("ann", format!("{base}/ann#")),
        ("rdf", RDF_NS.to_string()),
        ("rdfs", RDFS_NS.to_string()),
        ("xsd", XSD_NS.to_string()),
    ] {
        let _ = writeln!(out, "@prefix {p}: <{ns}> .");
    }

    let mut lines: BTreeSet<(NodeId, NodeId, Object)> = BTreeSet::new();
    for (id, node) in graph.nodes() {
        if let Some(class) = &node.class {
            lines.insert((id.clone(), NodeId::rdf_type(), Object::Node(class.clone())));
        }
        for (prop, vals) in &node.properties {
            for v in vals {
                lines.insert((id.clone(), prop.clone(), Object::Lit(v.clone())));
            }
        }
    }
    for t in graph.edges() {
        lines.insert((t.subject.clone(), t.relation.clone(), Object::Node(t.object.clone())));
    }
    if !lines.is_empty() {
        out.push('\n');
    }
    for (s, p, o) in &lines {
        let pred = if p.to_iri(base) == RDF_TYPE { "a".to_string() } else { node_term(p, base)? };
        let obj = match o {
            Object::Node(n) => node_term(n, base)?,
            Object::Lit(l) => literal_term(l),
        };
        let _ = writeln!(out, "{} {} {} .", node_term(s, base)?, pred, obj);
    }

    let mut n = 0usize;
    for (t, anns) in graph.annotated_edges() {
        for (prov, data) in anns {
            let _ = write!(
                out,
                "\n_:a{n} a rdf:Statement ;\n    rdf:subject {} ;\n    rdf:predicate {} ;\n    rdf:object {} ;\n",
                node_term(&t.subject, base)?,
                node_term(&t.relation, base)?,
                node_term(&t.object, base)?,
            );
            let _ = writeln!(out, "    ann:claimId {} ;", literal_term(&Literal::Text(data.claim_id.clone())));
            let _ = writeln!(out, "    ann:document {} ;", literal_term(&Literal::Text(prov.document_id.clone())));
            let _ = writeln!(out, "    ann:evidence {} ;", literal_term(&Literal::Text(prov.evidence.clone())));
            let _ = writeln!(out, "    ann:collection {} ;", literal_term(&Literal::Text(prov.collection_id.clone())));
            let _ = writeln!(out, "    ann:version {} ;", prov.version);
            let _ = writeln!(out, "    ann:confidence {} ;", literal_term(&Literal::Number(data.confidence)));
            let _ = writeln!(out, "    ann:weight {} ;", literal_term(&Literal::Number(data.weight)));
            if let Some(ctx) = &data.context {
                let _ = writeln!(out, "    ann:context {} ;", node_term(ctx, base)?);
            }
            let _ = writeln!(out, "    ann:direction \"{}\" .", data.direction.as_str());
            n += 1;
        }
    }
    Ok(out)
}

fn simple_local(s: &str) -> bool {
    !s.is_empty()
        && !s.starts_with('-')
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn iri_safe(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| {
            !c.is_whitespace() && !c.is_control() && !matches!(c, '<' | '>' | '"' | '{' | '}' | '|' | '^' | '`' | '\\')
        })
}

pub(crate) fn node_term(id: &NodeId, base: &str) -> Result<String, SerializeError> {
    match id {
        NodeId::Term(n) if simple_local(n) => Ok(format!("ex:{n}")),
        NodeId::Data(l) if iri_safe(l) => Ok(format!("<{base}/data#{l}>")),
        NodeId::Iri(i) if iri_safe(i) => {
            for (p, ns) in [("rdf", RDF_NS), ("rdfs", RDFS_NS), ("xsd", XSD_NS)] {
                if let Some(local) = i.strip_prefix(ns) {
                    if simple_local(local) {
                        return Ok(format!("{p}:{local}"));
                    }
                }
            }
            Ok(format!("<{i}>"))
        }
        other => Err(SerializeError::InvalidIdentifier(other.to_string())),
    }
}

pub(crate) fn literal_term(l: &Literal) -> String {
    match l {
        Literal::Bool(b) => b.to_string(),
        Literal::Integer(i) => i.to_string(),
        Literal::Number(x) => format!("\"{x}\"^^xsd:double"),
        Literal::Text(s) => {
            let mut out = String::with_capacity(s.len() + 2);
            out.push('"');
            for c in s.chars() {
                match c {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    '\r' => out.push_str("\\r"),
                    '\t' => out.push_str("\\t"),
                    c if c.is_control() => {
                        let _ = write!(out, "\\u{:04X}", c as u32);
                    }
                    c => out.push(c),
                }
            }
            out.push('"');
            out
        }
    }
}

// ---------------------------------------------------------------------------
// reading

#[derive(Debug, Clone, PartialEq)]
enum RawTerm {
    Iri(String),
    Blank(String),
    Lit(Literal),
}

struct RawTriple {
    s: RawTerm,
    p: String,
    o: RawTerm,
    pos: Pos,
}

struct Reader<'t> {
    toks: &'t [Token],
    i: usize,
    prefixes: BTreeMap<String, String>,
    base_iri: Option<String>,
    triples: Vec<RawTriple>,
}

pub fn parse_turtle(text: &str) -> Result<KnowledgeGraph, TurtleError> {
    parse_turtle_with(text, &TurtleConfig::default())
}

pub fn parse_turtle_with(text: &str, cfg: &TurtleConfig) -> Result<KnowledgeGraph, TurtleError> {
    let toks = Lexer::new(text, false).tokenize()?;
    let mut r = Reader { toks: &toks, i: 0, prefixes: BTreeMap::new(), base_iri: None, triples: Vec::new() };
    r.document()?;
    build_graph(r.triples, cfg)
}

impl<'t> Reader<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.i)
    }

    fn next(&mut self) -> Option<&'t Token> {
        let t = self.toks.get(self.i);
        self.i += 1;
        t
    }

    fn last_end(&self) -> Pos {
        self.i
            .checked_sub(1)
            .and_then(|k| self.toks.get(k))
            .map(|t| t.end)
            .unwrap_or(Pos { line: 1, column: 1 })
    }

    fn expect_dot(&mut self, what: &str) -> Result<(), TurtleError> {
        match self.peek() {
            Some(Token { tok: Tok::Punct('.'), .. }) => {
                self.i += 1;
                Ok(())
            }
            _ => Err(TurtleError::malformed(self.last_end(), format!("expected `.` to terminate {what}"))),
        }
    }

    fn document(&mut self) -> Result<(), TurtleError> {
        while let Some(t) = self.peek() {
            match &t.tok {
                Tok::Directive(d) => {
                    self.i += 1;
                    if d == "prefix" {
                        self.prefix_decl(t.start)?;
                    } else {
                        self.base_decl(t.start)?;
                    }
                    self.expect_dot("directive")?;
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("prefix") => {
                    self.i += 1;
                    self.prefix_decl(t.start)?;
                }
                Tok::Word(w) if w.eq_ignore_ascii_case("base") => {
                    self.i += 1;
                    self.base_decl(t.start)?;
                }
                _ => {
                    self.statement()?;
                    self.expect_dot("statement")?;
                }
            }
        }
        Ok(())
    }

    fn prefix_decl(&mut self, at: Pos) -> Result<(), TurtleError> {
        let name = match self.next() {
            Some(Token { tok: Tok::PName { prefix, local }, .. }) if local.is_empty() => prefix.clone(),
            _ => return Err(TurtleError::malformed(at, "expected prefix name")),
        };
        let iri = match self.next() {
            Some(Token { tok: Tok::IriRef(i), .. }) => self.resolve(i),
            _ => return Err(TurtleError::malformed(at, "expected namespace IRI")),
        };
        self.prefixes.insert(name, iri);
        Ok(())
    }

    fn base_decl(&mut self, at: Pos) -> Result<(), TurtleError> {
        match self.next() {
            Some(Token { tok: Tok::IriRef(i), .. }) => {
                self.base_iri = Some(i.clone());
                Ok(())
            }
            _ => Err(TurtleError::malformed(at, "expected base IRI")),
        }
    }

    fn resolve(&self, iri: &str) -> String {
        match &self.base_iri {
            Some(b) if !iri.contains(':') => format!("{b}{iri}"),
            _ => iri.to_string(),
        }
    }

    fn pname(&self, prefix: &str, local: &str, at: Pos) -> Result<String, TurtleError> {
        match self.prefixes.get(prefix) {
            Some(ns) => Ok(format!("{ns}{local}")),
            None => Err(TurtleError::at(at, TurtleErrorKind::UndeclaredPrefix(prefix.to_string()))),
        }
    }

    fn statement(&mut self) -> Result<(), TurtleError> {
        let start = self.peek().map(|t| t.start).unwrap_or_default();
        let subject = match self.next() {
            Some(Token { tok: Tok::IriRef(i), .. }) => RawTerm::Iri(self.resolve(i)),
            Some(Token { tok: Tok::PName { prefix, local }, start, .. }) => {
                RawTerm::Iri(self.pname(prefix, local, *start)?)
            }
            Some(Token { tok: Tok::Blank(b), .. }) => RawTerm::Blank(b.clone()),
            Some(t) => return Err(TurtleError::malformed(t.start, "expected subject")),
            None => return Err(TurtleError::malformed(start, "expected subject")),
        };
        loop {
            let pred = self.predicate()?;
            loop {
                let pos = self.peek().map(|t| t.start).unwrap_or(self.last_end());
                let obj = self.object()?;
                self.triples.push(RawTriple { s: subject.clone(), p: pred.clone(), o: obj, pos });
                if matches!(self.peek(), Some(Token { tok: Tok::Punct(','), .. })) {
                    self.i += 1;
                } else {
                    break;
                }
            }
            if matches!(self.peek(), Some(Token { tok: Tok::Punct(';'), .. })) {
                while matches!(self.peek(), Some(Token { tok: Tok::Punct(';'), .. })) {
                    self.i += 1;
                }
                if matches!(self.peek(), Some(Token { tok: Tok::Punct('.'), .. }) | None) {
                    break;
                }
            } else {
                break;
            }
        }
        Ok(())
    }

    fn predicate(&mut self) -> Result<String, TurtleError> {
        match self.next() {
            Some(Token { tok: Tok::Word(w), .. }) if w == "a" => Ok(RDF_TYPE.to_string()),
            Some(Token { tok: Tok::IriRef(i), .. }) => Ok(self.resolve(i)),
            Some(Token { tok: Tok::PName { prefix, local }, start, .. }) => self.pname(prefix, local, *start),
            Some(t) => Err(TurtleError::malformed(t.start, "expected predicate")),
            None => Err(TurtleError::malformed(self.last_end(), "expected predicate")),
        }
    }

    fn object(&mut self) -> Result<RawTerm, TurtleError> {
        let t = match self.next() {
            Some(t) => t,
            None => return Err(TurtleError::malformed(self.last_end(), "expected object")),
        };
        Ok(match &t.tok {
            Tok::IriRef(i) => RawTerm::Iri(self.resolve(i)),
            Tok::PName { prefix, local } => RawTerm::Iri(self.pname(prefix, local, t.start)?),
            Tok::Blank(b) => RawTerm::Blank(b.clone()),
            Tok::Integer(s) => RawTerm::Lit(
                s.trim_start_matches('+').parse::<i64>().map(Literal::Integer).unwrap_or_else(|_| {
                    Literal::Number(s.parse().unwrap_or(f64::NAN))
                }),
            ),
            Tok::Decimal(s) | Tok::Double(s) => RawTerm::Lit(Literal::Number(
                s.parse().map_err(|_| TurtleError::malformed(t.start, format!("bad number `{s}`")))?,
            )),
            Tok::Word(w) if w == "true" => RawTerm::Lit(Literal::Bool(true)),
            Tok::Word(w) if w == "false" => RawTerm::Lit(Literal::Bool(false)),
            Tok::Str { value, lang } => {
                if lang.is_none() && matches!(self.peek(), Some(Token { tok: Tok::DatatypeMarker, .. })) {
                    self.i += 1;
                    let dt = match self.next() {
                        Some(Token { tok: Tok::IriRef(i), .. }) => self.resolve(i),
                        Some(Token { tok: Tok::PName { prefix, local }, start, .. }) => {
                            self.pname(prefix, local, *start)?
                        }
                        _ => return Err(TurtleError::malformed(t.start, "expected datatype IRI")),
                    };
                    RawTerm::Lit(typed_literal(value, &dt).ok_or_else(|| {
                        TurtleError::malformed(t.start, format!("`{value}` is not a valid {dt}"))
                    })?)
                } else {
                    RawTerm::Lit(Literal::Text(value.clone()))
                }
            }
            Tok::Punct('[') => {
                return Err(TurtleError::malformed(t.start, "anonymous blank nodes are not supported"))
            }
            _ => return Err(TurtleError::malformed(t.start, "expected object")),
        })
    }
}

fn typed_literal(lexical: &str, datatype: &str) -> Option<Literal> {
    let local = datatype.strip_prefix(XSD_NS)?;
    match local {
        "double" | "decimal" | "float" => lexical.trim().parse().ok().map(Literal::Number),
        "integer" | "int" | "long" | "short" | "nonNegativeInteger" => {
            lexical.trim().trim_start_matches('+').parse().ok().map(Literal::Integer)
        }
        "boolean" => match lexical.trim() {
            "true" | "1" => Some(Literal::Bool(true)),
            "false" | "0" => Some(Literal::Bool(false)),
            _ => None,
        },
        _ => Some(Literal::Text(lexical.to_string())),
    }
    .or_else(|| (!datatype.starts_with(XSD_NS)).then(|| Literal::Text(lexical.to_string())))
}

fn build_graph(triples: Vec<RawTriple>, cfg: &TurtleConfig) -> Result<KnowledgeGraph, TurtleError> {
    let base = &cfg.base;
    let mut g = KnowledgeGraph::new();
    let mut blanks: BTreeMap<String, (Pos, BTreeMap<String, RawTerm>)> = BTreeMap::new();

    for RawTriple { s, p, o, pos } in triples {
        let subject = match s {
            RawTerm::Blank(label) => {
                let entry = blanks.entry(label).or_insert_with(|| (pos, BTreeMap::new()));
                if p != RDF_TYPE {
                    entry.1.insert(p, o);
                }
                continue;
            }
            RawTerm::Iri(i) => NodeId::from_iri(&i, base),
            RawTerm::Lit(_) => unreachable!("literal subjects are rejected by the reader"),
        };
        let relation = NodeId::from_iri(&p, base);
        match o {
            RawTerm::Blank(_) => {
                return Err(TurtleError::malformed(pos, "blank node objects are not supported"));
            }
            RawTerm::Lit(l) => g.add_property(&subject, relation, l),
            RawTerm::Iri(i) if p == RDF_TYPE => {
                let class = NodeId::from_iri(&i, base);
                g.add_node(subject.clone(), Some(class))
                    .map_err(|_| TurtleError::at(pos, TurtleErrorKind::ClassConflict(subject.to_string())))?;
            }
            RawTerm::Iri(i) => g.add_edge(Triple::new(subject, relation, NodeId::from_iri(&i, base))),
        }
    }

    let rdf = |l: &str| format!("{RDF_NS}{l}");
    for (label, (pos, fields)) in blanks {
        let missing = |field: &str| {
            TurtleError::at(
                pos,
                TurtleErrorKind::IncompleteAnnotation { label: label.clone(), field: field.to_string() },
            )
        };
        let node = |key: &str, name: &str| match fields.get(key) {
            Some(RawTerm::Iri(i)) => Ok(NodeId::from_iri(i, base)),
            _ => Err(missing(name)),
        };
        let text = |key: &str, name: &str| match fields.get(key) {
            Some(RawTerm::Lit(Literal::Text(s))) => Ok(s.clone()),
            _ => Err(missing(name)),
        };
        let number = |key: &str, name: &str| match fields.get(key) {
            Some(RawTerm::Lit(l)) => l.as_f64().ok_or_else(|| missing(name)),
            _ => Err(missing(name)),
        };
        let triple = Triple::new(
            node(&rdf("subject"), "rdf:subject")?,
            node(&rdf("predicate"), "rdf:predicate")?,
            node(&rdf("object"), "rdf:object")?,
        );
        let version = match fields.get(&cfg.ann("version")) {
            Some(RawTerm::Lit(Literal::Integer(v))) if *v >= 0 => *v as u32,
            _ => return Err(missing("ann:version")),
        };
        let provenance = Provenance {
            document_id: text(&cfg.ann("document"), "ann:document")?,
            evidence: text(&cfg.ann("evidence"), "ann:evidence")?,
            collection_id: text(&cfg.ann("collection"), "ann:collection")?,
            version,
        };
        let direction = match fields.get(&cfg.ann("direction")) {
            Some(RawTerm::Lit(Literal::Text(d))) => {
                d.parse::<Direction>().map_err(|_| missing("valid ann:direction"))?
            }
            None => Direction::Neutral,
            _ => return Err(missing("valid ann:direction")),
        };
        let context = match fields.get(&cfg.ann("context")) {
            Some(RawTerm::Iri(i)) => Some(NodeId::from_iri(i, base)),
            None => None,
            _ => return Err(missing("valid ann:context")),
        };
        let data = AnnotationData {
            claim_id: text(&cfg.ann("claimId"), "ann:claimId").unwrap_or_default(),
            confidence: number(&cfg.ann("confidence"), "ann:confidence")?,
            weight: number(&cfg.ann("weight"), "ann:weight")?,
            direction,
            context,
        };
        g.annotate(triple, provenance, data);
    }
    Ok(g)
}
