//! Tokenizer and operator-precedence reader for Prolog-style clause text.

use thiserror::Error;

use crate::term::Term;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("reference to undeclared operation `{0}`")]
    UndeclaredOperation(String),
    #[error("duplicate operation `{0}`")]
    DuplicateOperation(String),
    #[error("initial fact `{0}` is not ground")]
    NonGroundFact(String),
    #[error("{0}")]
    Malformed(String),
}

impl ParseError {
    pub fn new(pos: Pos, kind: ParseErrorKind) -> ParseError {
        ParseError { line: pos.line, col: pos.col, kind }
    }

    fn syntax(pos: Pos, msg: impl Into<String>) -> ParseError {
        ParseError::new(pos, ParseErrorKind::Syntax(msg.into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Atom(String),
    /// Atom written with quotes; never an operator.
    Quoted(String),
    Var(String),
    Int(i64),
    Sym(String),
    Open,
    Close,
    OpenList,
    CloseList,
    Comma,
    Bar,
    End,
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    pos: Pos,
    /// Whitespace or a comment came right before this token.
    spaced: bool,
}

const SYMBOL_CHARS: &str = "+-*/\\^<>=~:.?@#&$!";

fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let mut spaced = true;
    macro_rules! bump {
        () => {{
            if chars[i] == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c.is_whitespace() {
            bump!();
            spaced = true;
            continue;
        }
        if c == '%' {
            while i < chars.len() && chars[i] != '\n' {
                bump!();
            }
            spaced = true;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(ParseError::syntax(pos, "unterminated block comment"));
                }
                if chars[i] == '*' && chars.get(i + 1) == Some(&'/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            spaced = true;
            continue;
        }
        let tok = if c.is_ascii_lowercase() {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            Tok::Atom(s)
        } else if c.is_ascii_uppercase() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                s.push(chars[i]);
                bump!();
            }
            Tok::Var(s)
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            let v = s.parse::<i64>().map_err(|_| ParseError::syntax(pos, "integer out of range"))?;
            Tok::Int(v)
        } else if c == '\'' {
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(ParseError::syntax(pos, "unterminated quoted atom"));
                }
                match chars[i] {
                    '\'' if chars.get(i + 1) == Some(&'\'') => {
                        s.push('\'');
                        bump!();
                        bump!();
                    }
                    '\'' => {
                        bump!();
                        break;
                    }
                    '\\' => {
                        bump!();
                        let Some(&e) = chars.get(i) else {
                            return Err(ParseError::syntax(pos, "unterminated quoted atom"));
                        };
                        s.push(match e {
                            'n' => '\n',
                            't' => '\t',
                            other => other,
                        });
                        bump!();
                    }
                    other => {
                        s.push(other);
                        bump!();
                    }
                }
            }
            Tok::Quoted(s)
        } else if c == '(' {
            bump!();
            Tok::Open
        } else if c == ')' {
            bump!();
            Tok::Close
        } else if c == '[' {
            bump!();
            Tok::OpenList
        } else if c == ']' {
            bump!();
            Tok::CloseList
        } else if c == ',' {
            bump!();
            Tok::Comma
        } else if c == '|' {
            bump!();
            Tok::Bar
        } else if SYMBOL_CHARS.contains(c) {
            let end_here = |j: usize| j >= chars.len() || chars[j].is_whitespace() || chars[j] == '%';
            if c == '.' && end_here(i + 1) {
                bump!();
                Tok::End
            } else {
                let mut s = String::new();
                while i < chars.len() && SYMBOL_CHARS.contains(chars[i]) {
                    if chars[i] == '.' && end_here(i + 1) && !s.is_empty() {
                        break;
                    }
                    s.push(chars[i]);
                    bump!();
                }
                Tok::Sym(s)
            }
        } else {
            return Err(ParseError::syntax(pos, format!("unexpected character `{c}`")));
        };
        out.push(Token { tok, pos, spaced });
        spaced = false;
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Assoc {
    Xfx,
    Xfy,
    Yfx,
}

fn infix(name: &str) -> Option<(u32, Assoc)> {
    Some(match name {
        ":-" => (1200, Assoc::Xfx),
        "," => (1000, Assoc::Xfy),
        "=" | "<=" | "=<" | ">" | "!=" | "\\=" => (700, Assoc::Xfx),
        "=>" => (650, Assoc::Yfx),
        _ => return None,
    })
}

/// A term read from text, with the position of its first token.
#[derive(Clone, Debug)]
pub struct Clause {
    pub term: Term,
    pub pos: Pos,
}

struct Reader {
    toks: Vec<Token>,
    i: usize,
    eof: Pos,
}

impl Reader {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.i)
    }

    fn here(&self) -> Pos {
        self.peek().map(|t| t.pos).unwrap_or(self.eof)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.toks.get(self.i).cloned();
        self.i += 1;
        t
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        let pos = self.here();
        match self.next() {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(ParseError::syntax(pos, format!("expected {what}, found {}", describe(&t.tok)))),
            None => Err(ParseError::syntax(pos, format!("expected {what}, found end of input"))),
        }
    }

    fn starts_term(&self) -> bool {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Atom(_) | Tok::Quoted(_) | Tok::Var(_) | Tok::Int(_) | Tok::Open | Tok::OpenList) => true,
            Some(Tok::Sym(s)) => s == "-",
            _ => false,
        }
    }

    fn infix_here(&self) -> Option<(String, u32, Assoc)> {
        match self.peek().map(|t| &t.tok) {
            Some(Tok::Comma) => Some((",".into(), 1000, Assoc::Xfy)),
            Some(Tok::Sym(s)) => infix(s).map(|(p, a)| (s.clone(), p, a)),
            _ => None,
        }
    }

    fn parse(&mut self, max: u32) -> Result<Term, ParseError> {
        let (mut left, mut left_prec) = self.primary(max)?;
        while let Some((name, prec, assoc)) = self.infix_here() {
            if prec > max {
                break;
            }
            let left_max = if assoc == Assoc::Yfx { prec } else { prec - 1 };
            if left_prec > left_max {
                break;
            }
            self.next();
            let right_max = if assoc == Assoc::Xfy { prec } else { prec - 1 };
            let right = self.parse(right_max)?;
            let name = match name.as_str() {
                "=<" => "<=".to_string(),
                "\\=" => "!=".to_string(),
                _ => name,
            };
            left = Term::Compound(name, vec![left, right]);
            left_prec = prec;
        }
        Ok(left)
    }

    fn args(&mut self) -> Result<Vec<Term>, ParseError> {
        let mut args = vec![self.parse(999)?];
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Comma)) {
            self.next();
            args.push(self.parse(999)?);
        }
        Ok(args)
    }

    fn primary(&mut self, max: u32) -> Result<(Term, u32), ParseError> {
        let pos = self.here();
        let Some(tok) = self.next() else {
            return Err(ParseError::syntax(pos, "unexpected end of input"));
        };
        match tok.tok {
            Tok::Int(v) => Ok((Term::Int(v), 0)),
            Tok::Var(v) => Ok((Term::Var(v), 0)),
            Tok::Sym(s) if s == "-" && matches!(self.peek(), Some(Token { tok: Tok::Int(_), spaced: false, .. })) => {
                let Some(Token { tok: Tok::Int(v), .. }) = self.next() else { unreachable!() };
                Ok((Term::Int(-v), 0))
            }
            Tok::Atom(name) | Tok::Quoted(name) if self.call_follows() => {
                self.next();
                let args = self.args()?;
                self.expect(Tok::Close, "`)` or `,`")?;
                Ok((Term::compound(name, args), 0))
            }
            Tok::Atom(name) if name == "not" && self.starts_term() => {
                let prec = 900;
                if prec > max {
                    return Err(ParseError::syntax(pos, "operator priority clash at `not`"));
                }
                let arg = self.parse(prec)?;
                Ok((Term::Compound(name, vec![arg]), prec))
            }
            Tok::Atom(name) | Tok::Quoted(name) => Ok((Term::Atom(name), 0)),
            Tok::Open => {
                let t = self.parse(1200)?;
                self.expect(Tok::Close, "`)`")?;
                Ok((t, 0))
            }
            Tok::OpenList => {
                if matches!(self.peek().map(|t| &t.tok), Some(Tok::CloseList)) {
                    self.next();
                    return Ok((Term::List(Vec::new()), 0));
                }
                let items = self.args()?;
                if matches!(self.peek().map(|t| &t.tok), Some(Tok::Bar)) {
                    return Err(ParseError::syntax(self.here(), "list tails are not supported"));
                }
                self.expect(Tok::CloseList, "`]` or `,`")?;
                Ok((Term::List(items), 0))
            }
            other => Err(ParseError::syntax(pos, format!("unexpected {}", describe(&other)))),
        }
    }

    fn call_follows(&self) -> bool {
        matches!(self.peek(), Some(Token { tok: Tok::Open, spaced: false, .. }))
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Atom(a) | Tok::Quoted(a) => format!("atom `{a}`"),
        Tok::Var(v) => format!("variable `{v}`"),
        Tok::Int(i) => format!("integer `{i}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Open => "`(`".into(),
        Tok::Close => "`)`".into(),
        Tok::OpenList => "`[`".into(),
        Tok::CloseList => "`]`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Bar => "`|`".into(),
        Tok::End => "end of clause".into(),
    }
}

fn reader(text: &str) -> Result<Reader, ParseError> {
    let toks = tokenize(text)?;
    let mut line = 1;
    let mut col = 1;
    for c in text.chars() {
        if c == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    Ok(Reader { toks, i: 0, eof: Pos { line, col } })
}

/// Reads a sequence of `.`-terminated clauses.
pub fn read_clauses(text: &str) -> Result<Vec<Clause>, ParseError> {
    let mut r = reader(text)?;
    let mut out = Vec::new();
    while r.peek().is_some() {
        let pos = r.here();
        let term = r.parse(1200)?;
        r.expect(Tok::End, "operator or `.`")?;
        out.push(Clause { term, pos });
    }
    Ok(out)
}

/// Reads a single term; a trailing `.` is optional.
pub fn read_term(text: &str) -> Result<Term, ParseError> {
    let mut r = reader(text)?;
    let t = r.parse(1200)?;
    if matches!(r.peek().map(|t| &t.tok), Some(Tok::End)) {
        r.next();
    }
    if let Some(tok) = r.peek() {
        return Err(ParseError::syntax(tok.pos, format!("unexpected {}", describe(&tok.tok))));
    }
    Ok(t)
}
