//! Tokenizer shared by the Turtle reader and the graph-pattern query reader.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    IriRef(String),
    PName { prefix: String, local: String },
    Blank(String),
    Var(String),
    Str { value: String, lang: Option<String> },
    Integer(String),
    Decimal(String),
    Double(String),
    /// Bare word: `a`, `true`, `PREFIX`, `SELECT`, ...
    Word(String),
    /// `@prefix` / `@base`
    Directive(String),
    DatatypeMarker,
    Punct(char),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub start: Pos,
    pub end: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub pos: Pos,
    pub message: String,
}

pub struct Lexer {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
    allow_vars: bool,
}

impl Lexer {
    pub fn new(src: &str, allow_vars: bool) -> Self {
        Self { chars: src.chars().collect(), i: 0, line: 1, col: 1, allow_vars }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, column: self.col }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek_at(&self, k: usize) -> Option<char> {
        self.chars.get(self.i + k).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.get(self.i).copied()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn err<T>(&self, pos: Pos, message: impl Into<String>) -> Result<T, LexError> {
        Err(LexError { pos, message: message.into() })
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == '#' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    pub fn tokenize(mut self) -> Result<Vec<Token>, LexError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            let start = self.pos();
            let Some(c) = self.peek() else { break };
            let tok = match c {
                '<' => self.iri(start)?,
                '"' | '\'' => self.string(start)?,
                '@' => self.at_word(start)?,
                '^' => {
                    self.bump();
                    if self.peek() == Some('^') {
                        self.bump();
                        Tok::DatatypeMarker
                    } else {
                        return self.err(start, "expected `^^`");
                    }
                }
                '_' if self.peek_at(1) == Some(':') => {
                    self.bump();
                    self.bump();
                    let label = self.take_while(is_local_char);
                    let label = label.trim_end_matches('.').to_string();
                    self.unbump_trailing_dots();
                    if label.is_empty() {
                        return self.err(start, "empty blank node label");
                    }
                    Tok::Blank(label)
                }
                '?' | '$' if self.allow_vars => {
                    self.bump();
                    let name = self.take_while(|c| c.is_alphanumeric() || c == '_');
                    if name.is_empty() {
                        return self.err(start, "empty variable name");
                    }
                    Tok::Var(name)
                }
                '.' if !self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) => {
                    self.bump();
                    Tok::Punct('.')
                }
                ';' | ',' | '{' | '}' | '(' | ')' | '[' | ']' | '=' | '*' => {
                    self.bump();
                    Tok::Punct(c)
                }
                c if c.is_ascii_digit() || c == '+' || c == '-' || c == '.' => self.number(start)?,
                c if c.is_alphabetic() || c == ':' || c == '_' => self.name(start)?,
                other => return self.err(start, format!("unexpected character `{other}`")),
            };
            out.push(Token { tok, start, end: self.pos() });
        }
        Ok(out)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if f(c) {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    /// Local names may not end with `.`; give trailing dots back to the stream.
    fn unbump_trailing_dots(&mut self) {
        while self.i > 0 && self.chars[self.i - 1] == '.' {
            self.i -= 1;
            self.col -= 1;
        }
    }

    fn iri(&mut self, start: Pos) -> Result<Tok, LexError> {
        self.bump();
        let mut s = String::new();
        loop {
            match self.bump() {
                Some('>') => return Ok(Tok::IriRef(s)),
                Some(c) if c.is_whitespace() || matches!(c, '<' | '"' | '{' | '}' | '|' | '^' | '`') => {
                    return self.err(start, format!("invalid character `{c}` in IRI"));
                }
                Some('\\') => {
                    let c = self.escape(start)?;
                    s.push(c);
                }
                Some(c) => s.push(c),
                None => return self.err(start, "unterminated IRI"),
            }
        }
    }

    fn escape(&mut self, start: Pos) -> Result<char, LexError> {
        match self.bump() {
            Some('t') => Ok('\t'),
            Some('n') => Ok('\n'),
            Some('r') => Ok('\r'),
            Some('b') => Ok('\u{8}'),
            Some('f') => Ok('\u{c}'),
            Some('"') => Ok('"'),
            Some('\'') => Ok('\''),
            Some('\\') => Ok('\\'),
            Some(u @ ('u' | 'U')) => {
                let n = if u == 'u' { 4 } else { 8 };
                let mut hex = String::new();
                for _ in 0..n {
                    match self.bump() {
                        Some(h) if h.is_ascii_hexdigit() => hex.push(h),
                        _ => return self.err(start, "bad unicode escape"),
                    }
                }
                u32::from_str_radix(&hex, 16)
                    .ok()
                    .and_then(char::from_u32)
                    .map_or_else(|| self.err(start, "bad unicode escape"), Ok)
            }
            _ => self.err(start, "bad escape sequence"),
        }
    }

    fn string(&mut self, start: Pos) -> Result<Tok, LexError> {
        let q = self.bump().unwrap();
        let long = self.peek() == Some(q) && self.peek_at(1) == Some(q);
        if long {
            self.bump();
            self.bump();
        }
        let mut s = String::new();
        loop {
            match self.bump() {
                None => return self.err(start, "unterminated string"),
                Some(c) if c == q => {
                    if !long {
                        break;
                    }
                    if self.peek() == Some(q) && self.peek_at(1) == Some(q) {
                        self.bump();
                        self.bump();
                        break;
                    }
                    s.push(c);
                }
                Some('\n') if !long => return self.err(start, "newline in short string"),
                Some('\\') => {
                    let c = self.escape(start)?;
                    s.push(c);
                }
                Some(c) => s.push(c),
            }
        }
        let lang = if self.peek() == Some('@') {
            self.bump();
            let tag = self.take_while(|c| c.is_ascii_alphanumeric() || c == '-');
            if tag.is_empty() {
                return self.err(start, "empty language tag");
            }
            Some(tag)
        } else {
            None
        };
        Ok(Tok::Str { value: s, lang })
    }

    fn at_word(&mut self, start: Pos) -> Result<Tok, LexError> {
        self.bump();
        let w = self.take_while(|c| c.is_ascii_alphabetic());
        match w.as_str() {
            "prefix" | "base" => Ok(Tok::Directive(w)),
            _ => self.err(start, format!("unknown directive `@{w}`")),
        }
    }

    fn number(&mut self, start: Pos) -> Result<Tok, LexError> {
        let mut s = String::new();
        if let Some(c @ ('+' | '-')) = self.peek() {
            s.push(c);
            self.bump();
        }
        s.push_str(&self.take_while(|c| c.is_ascii_digit()));
        let mut kind = 0; // 0 integer, 1 decimal, 2 double
        if self.peek() == Some('.') && self.peek_at(1).is_some_and(|d| d.is_ascii_digit()) {
            self.bump();
            s.push('.');
            s.push_str(&self.take_while(|c| c.is_ascii_digit()));
            kind = 1;
        }
        if let Some(e @ ('e' | 'E')) = self.peek() {
            s.push(e);
            self.bump();
            if let Some(c @ ('+' | '-')) = self.peek() {
                s.push(c);
                self.bump();
            }
            let exp = self.take_while(|c| c.is_ascii_digit());
            if exp.is_empty() {
                return self.err(start, "malformed exponent");
            }
            s.push_str(&exp);
            kind = 2;
        }
        if !s.chars().any(|c| c.is_ascii_digit()) {
            return self.err(start, format!("malformed number `{s}`"));
        }
        Ok(match kind {
            0 => Tok::Integer(s),
            1 => Tok::Decimal(s),
            _ => Tok::Double(s),
        })
    }

    fn name(&mut self, start: Pos) -> Result<Tok, LexError> {
        let mut prefix = self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.');
        if self.peek() != Some(':') {
            while prefix.ends_with('.') {
                prefix.pop();
            }
            self.unbump_trailing_dots();
            if prefix.is_empty() {
                return self.err(start, "unexpected character");
            }
            return Ok(Tok::Word(prefix));
        }
        self.bump();
        let mut local = String::new();
        loop {
            match self.peek() {
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some(c) if "_~.-!$&'()*+,;=/?#@%".contains(c) => local.push(c),
                        _ => return self.err(start, "bad escape in local name"),
                    }
                }
                Some('%') => {
                    let (a, b) = (self.peek_at(1), self.peek_at(2));
                    if a.is_some_and(|c| c.is_ascii_hexdigit()) && b.is_some_and(|c| c.is_ascii_hexdigit()) {
                        for _ in 0..3 {
                            local.push(self.bump().unwrap());
                        }
                    } else {
                        return self.err(start, "bad percent escape in local name");
                    }
                }
                Some(c) if is_local_char(c) => {
                    local.push(c);
                    self.bump();
                }
                _ => break,
            }
        }
        while local.ends_with('.') {
            local.pop();
            self.i -= 1;
            self.col -= 1;
        }
        Ok(Tok::PName { prefix, local })
    }
}

fn is_local_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':')
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        Lexer::new(s, true).tokenize().unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn trailing_dot_is_not_part_of_local_name() {
        assert_eq!(
            toks("ex:ImpactTempRead."),
            vec![Tok::PName { prefix: "ex".into(), local: "ImpactTempRead".into() }, Tok::Punct('.')]
        );
    }

    #[test]
    fn variables_and_numbers() {
        assert_eq!(
            toks("?x 5. -1.5 2e3"),
            vec![
                Tok::Var("x".into()),
                Tok::Integer("5".into()),
                Tok::Punct('.'),
                Tok::Decimal("-1.5".into()),
                Tok::Double("2e3".into())
            ]
        );
    }

    #[test]
    fn strings_with_escapes_and_tags() {
        assert_eq!(
            toks(r#""a\"b\n"@en "x"^^xsd:double"#),
            vec![
                Tok::Str { value: "a\"b\n".into(), lang: Some("en".into()) },
                Tok::Str { value: "x".into(), lang: None },
                Tok::DatatypeMarker,
                Tok::PName { prefix: "xsd".into(), local: "double".into() },
            ]
        );
    }

    #[test]
    fn comments_are_skipped_and_positions_tracked() {
        let t = Lexer::new("# c\n  ex:a", false).tokenize().unwrap();
        assert_eq!(t[0].start, Pos { line: 2, column: 3 });
    }
}
