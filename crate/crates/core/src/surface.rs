//! Lexer, parser and printer for the surface language.

use std::fmt::Write as _;

use thiserror::Error;

use crate::coercion::Skel;
use crate::env::{GlobalEnv, IndType, InductiveBlock, Object, RecDef};
use crate::pretty::show;
use crate::term::{name, Branch, Match, Name, Sort, Span, SpanMap, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(u64),
    Meta(usize),
    Rel(usize),
    Hole,
    Dots,
    LParen,
    RParen,
    LBrack,
    RBrack,
    Colon,
    ColonEq,
    Semi,
    Comma,
    Arrow,
    FatArrow,
    Bar,
    Dot,
    Le,
    Lt,
    Minus,
    Eof,
}

#[derive(Clone, Copy, Debug)]
struct Pos {
    line: u32,
    col: u32,
}

const KEYWORDS: &[&str] = &[
    "fun",
    "forall",
    "let",
    "in",
    "match",
    "return",
    "with",
    "end",
    "Prop",
    "Type",
    "axiom",
    "definition",
    "inductive",
    "coinductive",
    "rec",
    "corec",
    "and",
    "coercion",
    "check",
    "universe",
    "constraint",
    "priority",
    "source",
    "on",
    "arity",
];

fn lex(src: &str) -> Result<Vec<(Tok, Pos, Pos)>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);
    let err = |line, col, msg: &str| ParseError { line, col, msg: msg.to_string() };
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
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '(' && chars.get(i + 1) == Some(&'*') {
            let (l0, c0) = (line, col);
            let mut depth = 0;
            loop {
                if i >= chars.len() {
                    return Err(err(l0, c0, "unterminated comment"));
                }
                if chars[i] == '(' && chars.get(i + 1) == Some(&'*') {
                    depth += 1;
                    bump!();
                    bump!();
                } else if chars[i] == '*' && chars.get(i + 1) == Some(&')') {
                    depth -= 1;
                    bump!();
                    bump!();
                    if depth == 0 {
                        break;
                    }
                } else {
                    bump!();
                }
            }
            continue;
        }
        let start = Pos { line, col };
        let tok = if c.is_alphabetic() || c == '_' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '\'') {
                s.push(chars[i]);
                bump!();
            }
            Tok::Ident(s)
        } else if c.is_ascii_digit() {
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            Tok::Num(s.parse().map_err(|_| err(start.line, start.col, "number too large"))?)
        } else if c == '?' || c == '#' {
            bump!();
            let mut s = String::new();
            while i < chars.len() && chars[i].is_ascii_digit() {
                s.push(chars[i]);
                bump!();
            }
            match (c, s.is_empty()) {
                ('?', true) => Tok::Hole,
                ('?', false) => Tok::Meta(s.parse().map_err(|_| err(start.line, start.col, "bad meta index"))?),
                ('#', false) => Tok::Rel(s.parse().map_err(|_| err(start.line, start.col, "bad index"))?),
                _ => return Err(err(start.line, start.col, "expected an index after `#`")),
            }
        } else {
            let two: String = chars[i..chars.len().min(i + 3)].iter().collect();
            let (t, n) = if two.starts_with("...") {
                (Tok::Dots, 3)
            } else if two.starts_with(":=") {
                (Tok::ColonEq, 2)
            } else if two.starts_with("->") {
                (Tok::Arrow, 2)
            } else if two.starts_with("=>") {
                (Tok::FatArrow, 2)
            } else if two.starts_with("<=") {
                (Tok::Le, 2)
            } else {
                let t = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '[' => Tok::LBrack,
                    ']' => Tok::RBrack,
                    ':' => Tok::Colon,
                    ';' => Tok::Semi,
                    ',' => Tok::Comma,
                    '|' => Tok::Bar,
                    '.' => Tok::Dot,
                    '<' => Tok::Lt,
                    '-' => Tok::Minus,
                    '∀' => Tok::Ident("forall".into()),
                    'λ' => Tok::Ident("fun".into()),
                    '→' => Tok::Arrow,
                    '…' => Tok::Dots,
                    _ => return Err(err(line, col, &format!("unexpected character `{c}`"))),
                };
                (t, 1)
            };
            for _ in 0..n {
                bump!();
            }
            t
        };
        out.push((tok, start, Pos { line, col }));
    }
    out.push((Tok::Eof, Pos { line, col }, Pos { line, col }));
    Ok(out)
}

/// Surface syntax tree, before name resolution.
#[derive(Clone, Debug)]
enum Ast {
    Var(String),
    Num(u64),
    Rel(usize),
    Sort(Sort),
    Hole,
    Dots,
    Meta(usize, Option<Vec<Node>>),
    App(Box<Node>, Vec<Node>),
    Lam(Binder, Box<Node>),
    Pi(Binder, Box<Node>),
    Arrow(Box<Node>, Box<Node>),
    Let(String, Option<Box<Node>>, Box<Node>, Box<Node>),
    Match { scrut: Box<Node>, ind: String, motive: Box<Node>, branches: Vec<(String, Vec<Binder>, Node, Span)> },
}

type Binder = (String, Option<Box<Node>>);

#[derive(Clone, Debug)]
struct Node {
    ast: Ast,
    span: Span,
}

fn span(a: Pos, b: Pos) -> Span {
    Span { line: a.line, col: a.col, end_line: b.line, end_col: b.col }
}

struct Parser {
    toks: Vec<(Tok, Pos, Pos)>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        &self.toks[(self.i + k).min(self.toks.len() - 1)].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn last_end(&self) -> Pos {
        if self.i == 0 {
            self.toks[0].1
        } else {
            self.toks[self.i - 1].2
        }
    }

    fn next(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let p = self.pos();
        Err(ParseError { line: p.line, col: p.col, msg: msg.into() })
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == k)
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), ParseError> {
        if *self.peek() == t {
            self.next();
            Ok(())
        } else {
            self.error(format!("expected {what}"))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        if self.is_kw(k) {
            self.next();
            Ok(())
        } else {
            self.error(format!("expected `{k}`"))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.next();
                Ok(s)
            }
            _ => self.error("expected an identifier"),
        }
    }

    fn term(&mut self) -> Result<Node, ParseError> {
        let start = self.pos();
        if self.is_kw("fun") || self.is_kw("forall") {
            let is_fun = self.is_kw("fun");
            self.next();
            let binders = self.binders()?;
            if is_fun {
                self.expect(Tok::FatArrow, "`=>`")?;
            } else {
                self.expect(Tok::Comma, "`,`")?;
            }
            let body = self.term()?;
            let end = self.last_end();
            let mut acc = body;
            for b in binders.into_iter().rev() {
                let ast = if is_fun { Ast::Lam(b, Box::new(acc)) } else { Ast::Pi(b, Box::new(acc)) };
                acc = Node { ast, span: span(start, end) };
            }
            return Ok(acc);
        }
        if self.is_kw("let") {
            self.next();
            let x = self.binder_name()?;
            let ty = if *self.peek() == Tok::Colon {
                self.next();
                Some(Box::new(self.term()?))
            } else {
                None
            };
            self.expect(Tok::ColonEq, "`:=`")?;
            let d = self.term()?;
            self.expect_kw("in")?;
            let b = self.term()?;
            return Ok(Node { ast: Ast::Let(x, ty, Box::new(d), Box::new(b)), span: span(start, self.last_end()) });
        }
        let lhs = self.app()?;
        if *self.peek() == Tok::Arrow {
            self.next();
            let rhs = self.term()?;
            return Ok(Node { ast: Ast::Arrow(Box::new(lhs), Box::new(rhs)), span: span(start, self.last_end()) });
        }
        Ok(lhs)
    }

    fn binder_name(&mut self) -> Result<String, ParseError> {
        self.ident()
    }

    /// `x : T`, `x`, or a sequence of `(x y : T)` groups.
    fn binders(&mut self) -> Result<Vec<Binder>, ParseError> {
        if *self.peek() == Tok::LParen {
            let mut out = Vec::new();
            while *self.peek() == Tok::LParen {
                self.next();
                let mut names = vec![self.binder_name()?];
                while matches!(self.peek(), Tok::Ident(_)) && !self.is_kw("fun") {
                    names.push(self.binder_name()?);
                }
                let ty = if *self.peek() == Tok::Colon {
                    self.next();
                    Some(self.term()?)
                } else {
                    None
                };
                self.expect(Tok::RParen, "`)`")?;
                for n in names {
                    out.push((n, ty.clone().map(Box::new)));
                }
            }
            return Ok(out);
        }
        let x = self.binder_name()?;
        if *self.peek() == Tok::Colon {
            self.next();
            let ty = self.term_until_binder_end()?;
            Ok(vec![(x, Some(Box::new(ty)))])
        } else {
            Ok(vec![(x, None)])
        }
    }

    fn term_until_binder_end(&mut self) -> Result<Node, ParseError> {
        // binder types are full terms; `=>` and `,` cannot start a term so
        // the ordinary grammar stops in the right place
        self.term()
    }

    fn app(&mut self) -> Result<Node, ParseError> {
        let start = self.pos();
        if *self.peek() == Tok::Dots {
            return self.error("`...` may only appear as an argument");
        }
        let head = self.atom()?;
        let mut args = Vec::new();
        loop {
            if *self.peek() == Tok::Dots {
                let s = self.pos();
                self.next();
                args.push(Node { ast: Ast::Dots, span: span(s, self.last_end()) });
            } else if self.starts_atom() {
                args.push(self.atom()?);
            } else {
                break;
            }
        }
        if args.is_empty() {
            return Ok(head);
        }
        Ok(Node { ast: Ast::App(Box::new(head), args), span: span(start, self.last_end()) })
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Tok::Ident(s) => !KEYWORDS.contains(&s.as_str()) || s == "Prop" || s == "Type" || s == "match",
            Tok::Num(_) | Tok::Meta(_) | Tok::Rel(_) | Tok::Hole | Tok::LParen => true,
            _ => false,
        }
    }

    fn atom(&mut self) -> Result<Node, ParseError> {
        let start = self.pos();
        let ast = match self.peek().clone() {
            Tok::Ident(s) if s == "Prop" => {
                self.next();
                Ast::Sort(Sort::Prop)
            }
            Tok::Ident(s) if s == "Type" => {
                self.next();
                if *self.peek() == Tok::LParen && matches!(self.peek_at(2), Tok::RParen) {
                    self.next();
                    let u = match self.next() {
                        Tok::Num(n) => n.to_string(),
                        Tok::Ident(s) => s,
                        _ => return self.error("expected a universe"),
                    };
                    self.expect(Tok::RParen, "`)`")?;
                    Ast::Sort(Sort::ty(&u))
                } else {
                    Ast::Sort(Sort::ty("0"))
                }
            }
            Tok::Ident(s) if s == "match" => return self.match_expr(),
            Tok::Ident(_) => Ast::Var(self.ident()?),
            Tok::Num(n) => {
                self.next();
                Ast::Num(n)
            }
            Tok::Rel(k) => {
                self.next();
                Ast::Rel(k)
            }
            Tok::Hole => {
                self.next();
                Ast::Hole
            }
            Tok::Meta(j) => {
                self.next();
                let sub = if *self.peek() == Tok::LBrack {
                    self.next();
                    let mut v = Vec::new();
                    if *self.peek() != Tok::RBrack {
                        v.push(self.term()?);
                        while *self.peek() == Tok::Semi {
                            self.next();
                            v.push(self.term()?);
                        }
                    }
                    self.expect(Tok::RBrack, "`]`")?;
                    Some(v)
                } else {
                    None
                };
                Ast::Meta(j, sub)
            }
            Tok::LParen => {
                self.next();
                let t = self.term()?;
                self.expect(Tok::RParen, "`)`")?;
                return Ok(Node { ast: t.ast, span: span(start, self.last_end()) });
            }
            Tok::Dots => return self.error("`...` may only appear as an argument"),
            _ => return self.error("expected a term"),
        };
        Ok(Node { ast, span: span(start, self.last_end()) })
    }

    fn match_expr(&mut self) -> Result<Node, ParseError> {
        let start = self.pos();
        self.expect_kw("match")?;
        let scrut = self.app()?;
        self.expect_kw("in")?;
        let ind = self.ident()?;
        self.expect_kw("return")?;
        let motive = self.term()?;
        self.expect_kw("with")?;
        let mut branches = Vec::new();
        while *self.peek() == Tok::Bar {
            let bs = self.pos();
            self.next();
            let k = self.ident()?;
            let mut binders = Vec::new();
            loop {
                match self.peek() {
                    Tok::LParen => {
                        self.next();
                        let x = self.binder_name()?;
                        self.expect(Tok::Colon, "`:`")?;
                        let ty = self.term()?;
                        self.expect(Tok::RParen, "`)`")?;
                        binders.push((x, Some(Box::new(ty))));
                    }
                    Tok::Ident(_) => {
                        let x = self.binder_name()?;
                        binders.push((x, None));
                    }
                    _ => break,
                }
            }
            self.expect(Tok::FatArrow, "`=>`")?;
            let body = self.term()?;
            branches.push((k, binders, body, span(bs, self.last_end())));
        }
        self.expect_kw("end")?;
        Ok(Node {
            ast: Ast::Match { scrut: Box::new(scrut), ind, motive: Box::new(motive), branches },
            span: span(start, self.last_end()),
        })
    }
}

/// Name resolution: identifiers bound in `scope` become variables, the rest
/// constants. Records spans by address.
struct Resolver<'s> {
    spans: &'s mut SpanMap,
    addr: Vec<u32>,
}

impl Resolver<'_> {
    fn at<T>(&mut self, a: u32, f: impl FnOnce(&mut Self) -> T) -> T {
        self.addr.push(a);
        let r = f(self);
        self.addr.pop();
        r
    }

    fn term(&mut self, n: &Node, scope: &mut Vec<String>) -> Result<Term, ParseError> {
        self.spans.insert(self.addr.clone(), n.span);
        let perr = |msg: String| ParseError { line: n.span.line, col: n.span.col, msg };
        Ok(match &n.ast {
            Ast::Var(x) => match scope.iter().rposition(|y| y == x) {
                Some(p) => Term::Rel(scope.len() - 1 - p),
                None => Term::Const(name(x)),
            },
            Ast::Num(k) => numeral(*k),
            Ast::Rel(k) => Term::Rel(k + scope.len()),
            Ast::Sort(s) => Term::Sort(s.clone()),
            Ast::Hole => Term::Placeholder,
            Ast::Dots => return Err(perr("`...` may only appear as an argument".into())),
            Ast::Meta(j, None) => Term::Meta(*j, (0..scope.len()).rev().map(Term::Rel).collect()),
            Ast::Meta(j, Some(v)) => {
                let mut out = Vec::new();
                for (i, x) in v.iter().enumerate() {
                    out.push(self.at(i as u32, |r| r.term(x, scope))?);
                }
                Term::Meta(*j, out)
            }
            Ast::App(h, args) => {
                let h2 = self.at(0, |r| r.term(h, scope))?;
                let mut out = Vec::new();
                for (i, a) in args.iter().enumerate() {
                    let t = if matches!(a.ast, Ast::Dots) {
                        self.at(i as u32 + 1, |r| {
                            r.spans.insert(r.addr.clone(), a.span);
                        });
                        Term::PlaceholderVec
                    } else {
                        self.at(i as u32 + 1, |r| r.term(a, scope))?
                    };
                    out.push(t);
                }
                // keep the node shape the parser saw, even with an App head
                Term::App(Box::new(h2), out)
            }
            Ast::Lam((x, ty), b) | Ast::Pi((x, ty), b) => {
                let a = match ty {
                    Some(t) => self.at(0, |r| r.term(t, scope))?,
                    None => Term::Placeholder,
                };
                scope.push(x.clone());
                let body = self.at(1, |r| r.term(b, scope));
                scope.pop();
                let body = body?;
                if matches!(n.ast, Ast::Lam(..)) {
                    Term::Lambda(name(x), Box::new(a), Box::new(body))
                } else {
                    Term::Prod(name(x), Box::new(a), Box::new(body))
                }
            }
            Ast::Arrow(a, b) => {
                let a2 = self.at(0, |r| r.term(a, scope))?;
                scope.push("_".into());
                let b2 = self.at(1, |r| r.term(b, scope));
                scope.pop();
                Term::Prod(name("_"), Box::new(a2), Box::new(b2?))
            }
            Ast::Let(x, ty, d, b) => {
                let a = match ty {
                    Some(t) => self.at(0, |r| r.term(t, scope))?,
                    None => Term::Placeholder,
                };
                let d2 = self.at(1, |r| r.term(d, scope))?;
                scope.push(x.clone());
                let b2 = self.at(2, |r| r.term(b, scope));
                scope.pop();
                Term::LetIn(name(x), Box::new(a), Box::new(d2), Box::new(b2?))
            }
            Ast::Match { scrut, ind, motive, branches } => {
                let s = self.at(0, |r| r.term(scrut, scope))?;
                let m = self.at(1, |r| r.term(motive, scope))?;
                let mut out = Vec::new();
                for (bi, (k, binders, body, bspan)) in branches.iter().enumerate() {
                    let br = self.at(2 + bi as u32, |r| -> Result<Branch, ParseError> {
                        r.spans.insert(r.addr.clone(), *bspan);
                        let depth = scope.len();
                        let mut bs = Vec::new();
                        let mut res = Ok(());
                        for (j, (x, ty)) in binders.iter().enumerate() {
                            let t = match ty {
                                Some(t) => match r.at(j as u32, |r| r.term(t, scope)) {
                                    Ok(t) => t,
                                    Err(e) => {
                                        res = Err(e);
                                        break;
                                    }
                                },
                                None => Term::Placeholder,
                            };
                            bs.push((name(x), t));
                            scope.push(x.clone());
                        }
                        let b = res.and_then(|_| r.at(binders.len() as u32, |r| r.term(body, scope)));
                        scope.truncate(depth);
                        Ok(Branch { ctor: name(k), binders: bs, body: b? })
                    })?;
                    out.push(br);
                }
                Term::Match(Box::new(Match { scrutinee: s, ind: name(ind), params: 0, motive: m, branches: out }))
            }
        })
    }
}

/// `S (… (S O))`.
pub fn numeral(k: u64) -> Term {
    (0..k).fold(Term::cnst("O"), |acc, _| Term::app(Term::cnst("S"), vec![acc]))
}

/// Parses a single term; free identifiers are constants.
pub fn parse_term(src: &str) -> Result<(Term, SpanMap), ParseError> {
    let mut p = Parser { toks: lex(src)?, i: 0 };
    let n = p.term()?;
    if *p.peek() != Tok::Eof {
        return p.error("unexpected input after the term");
    }
    let mut spans = SpanMap::new();
    let t = Resolver { spans: &mut spans, addr: Vec::new() }.term(&n, &mut Vec::new())?;
    Ok((t, spans))
}

#[derive(Clone, Debug)]
pub enum CommandKind {
    /// Let-rec definitions with `rec_arg == usize::MAX` get a default chosen
    /// by the driver.
    Object(Object),
    Coercion {
        name: Name,
        k: usize,
        arity: Option<usize>,
        priority: i64,
        source: Option<Skel>,
    },
    Check {
        term: Term,
        ty: Option<Term>,
    },
    Universe(Name),
    Constraint {
        lo: Name,
        hi: Name,
        strict: bool,
    },
}

#[derive(Clone, Debug)]
pub struct Command {
    pub kind: CommandKind,
    pub span: Span,
    pub spans: SpanMap,
}

/// Placeholder for an unspecified recursive argument.
pub const DEFAULT_REC_ARG: usize = usize::MAX;

pub fn parse_script(src: &str) -> Result<Vec<Command>, ParseError> {
    let mut p = Parser { toks: lex(src)?, i: 0 };
    let mut out = Vec::new();
    while *p.peek() != Tok::Eof {
        out.push(command(&mut p)?);
    }
    Ok(out)
}

fn resolve(n: &Node, scope: &mut Vec<String>, addr: Vec<u32>, spans: &mut SpanMap) -> Result<Term, ParseError> {
    Resolver { spans, addr }.term(n, scope)
}

fn params(p: &mut Parser) -> Result<Vec<(String, Node)>, ParseError> {
    let mut out = Vec::new();
    while *p.peek() == Tok::LParen {
        p.next();
        let mut names = vec![p.ident()?];
        while matches!(p.peek(), Tok::Ident(_)) {
            names.push(p.ident()?);
        }
        p.expect(Tok::Colon, "`:`")?;
        let ty = p.term()?;
        p.expect(Tok::RParen, "`)`")?;
        for n in names {
            out.push((n, ty.clone()));
        }
    }
    Ok(out)
}

fn telescope(
    ps: &[(String, Node)],
    scope: &mut Vec<String>,
    base: &[u32],
    spans: &mut SpanMap,
) -> Result<Vec<(Name, Term)>, ParseError> {
    let mut out = Vec::new();
    for (i, (x, n)) in ps.iter().enumerate() {
        let mut a = base.to_vec();
        a.push(i as u32);
        out.push((name(x), resolve(n, scope, a, spans)?));
        scope.push(x.clone());
    }
    Ok(out)
}

fn command(p: &mut Parser) -> Result<Command, ParseError> {
    let start = p.pos();
    let mut spans = SpanMap::new();
    let kw = match p.peek() {
        Tok::Ident(s) => s.clone(),
        _ => return p.error("expected a command"),
    };
    p.next();
    let kind = match kw.as_str() {
        "axiom" => {
            let x = p.ident()?;
            p.expect(Tok::Colon, "`:`")?;
            let ty = p.term()?;
            let ty = resolve(&ty, &mut Vec::new(), vec![0], &mut spans)?;
            CommandKind::Object(Object::Axiom { name: name(&x), ty })
        }
        "definition" => {
            let x = p.ident()?;
            p.expect(Tok::Colon, "`:`")?;
            let ty = p.term()?;
            p.expect(Tok::ColonEq, "`:=`")?;
            let body = p.term()?;
            let ty = resolve(&ty, &mut Vec::new(), vec![0], &mut spans)?;
            let body = resolve(&body, &mut Vec::new(), vec![1], &mut spans)?;
            CommandKind::Object(Object::Definition { name: name(&x), ty, body })
        }
        "inductive" | "coinductive" => {
            let mut raw = Vec::new();
            let mut ps = Vec::new();
            loop {
                let x = p.ident()?;
                let these = params(p)?;
                if raw.is_empty() {
                    ps = these;
                } else if !these.is_empty() {
                    return p.error("parameters belong on the first type of a block");
                }
                p.expect(Tok::Colon, "`:`")?;
                let arity = p.term()?;
                p.expect(Tok::ColonEq, "`:=`")?;
                let mut ctors = Vec::new();
                while *p.peek() == Tok::Bar {
                    p.next();
                    let c = p.ident()?;
                    p.expect(Tok::Colon, "`:`")?;
                    ctors.push((c, p.term()?));
                }
                raw.push((x, arity, ctors));
                if p.is_kw("with") {
                    p.next();
                } else {
                    break;
                }
            }
            let mut scope = Vec::new();
            let params = telescope(&ps, &mut scope, &[0], &mut spans)?;
            let mut types = Vec::new();
            for (ti, (x, arity, ctors)) in raw.iter().enumerate() {
                let t = 1 + ti as u32;
                let arity = resolve(arity, &mut scope, vec![t, 0], &mut spans)?;
                let mut cs = Vec::new();
                for (ci, (c, ty)) in ctors.iter().enumerate() {
                    cs.push((name(c), resolve(ty, &mut scope, vec![t, 1 + ci as u32], &mut spans)?));
                }
                types.push(IndType { name: name(x), arity, ctors: cs });
            }
            CommandKind::Object(Object::Inductive(InductiveBlock { params, types, coinductive: kw == "coinductive" }))
        }
        "let" => {
            let co = if p.is_kw("rec") {
                false
            } else if p.is_kw("corec") {
                true
            } else {
                return p.error("expected `rec` or `corec`");
            };
            p.next();
            let mut defs = Vec::new();
            loop {
                let di = defs.len() as u32;
                let x = p.ident()?;
                let ps = params(p)?;
                p.expect(Tok::Colon, "`:`")?;
                let ret = p.term()?;
                let mut rec_arg = DEFAULT_REC_ARG;
                if p.is_kw("on") {
                    p.next();
                    let y = p.ident()?;
                    rec_arg = match ps.iter().position(|(z, _)| *z == y) {
                        Some(i) => i,
                        None => return p.error(format!("`{y}` is not a parameter")),
                    };
                }
                p.expect(Tok::ColonEq, "`:=`")?;
                let body = p.term()?;
                let mut scope = Vec::new();
                let params = telescope(&ps, &mut scope, &[di, 0], &mut spans)?;
                let ret = resolve(&ret, &mut scope, vec![di, 1], &mut spans)?;
                let body = resolve(&body, &mut scope, vec![di, 2], &mut spans)?;
                defs.push(RecDef { name: name(&x), params, ret, body, rec_arg });
                if p.is_kw("and") {
                    p.next();
                } else {
                    break;
                }
            }
            CommandKind::Object(if co { Object::LetCoRec(defs) } else { Object::LetRec(defs) })
        }
        "coercion" => {
            let x = p.ident()?;
            let k = match p.next() {
                Tok::Num(k) => k as usize,
                _ => return p.error("expected the coerced argument position"),
            };
            let (mut arity, mut priority, mut source) = (None, 0i64, None);
            loop {
                if p.is_kw("arity") {
                    p.next();
                    arity = match p.next() {
                        Tok::Num(n) => Some(n as usize),
                        _ => return p.error("expected a number"),
                    };
                } else if p.is_kw("priority") {
                    p.next();
                    let neg = if *p.peek() == Tok::Minus {
                        p.next();
                        true
                    } else {
                        false
                    };
                    priority = match p.next() {
                        Tok::Num(n) => n as i64,
                        _ => return p.error("expected a number"),
                    };
                    if neg {
                        priority = -priority;
                    }
                } else if p.is_kw("source") {
                    p.next();
                    source = Some(skel(p)?);
                } else {
                    break;
                }
            }
            CommandKind::Coercion { name: name(&x), k, arity, priority, source }
        }
        "check" => {
            let t = p.term()?;
            let ty = if *p.peek() == Tok::Colon {
                p.next();
                Some(p.term()?)
            } else {
                None
            };
            let term = resolve(&t, &mut Vec::new(), vec![0], &mut spans)?;
            let ty = match ty {
                Some(n) => Some(resolve(&n, &mut Vec::new(), vec![1], &mut spans)?),
                None => None,
            };
            CommandKind::Check { term, ty }
        }
        "universe" => CommandKind::Universe(name(&p.ident()?)),
        "constraint" => {
            let lo = univ_name(p)?;
            let strict = match p.next() {
                Tok::Le => false,
                Tok::Lt => true,
                _ => return p.error("expected `<=` or `<`"),
            };
            let hi = univ_name(p)?;
            CommandKind::Constraint { lo, hi, strict }
        }
        _ => {
            p.i -= 1;
            return p.error(format!("unknown command `{kw}`"));
        }
    };
    p.expect(Tok::Dot, "`.` at the end of the command")?;
    Ok(Command { kind, span: span(start, p.last_end()), spans })
}

fn univ_name(p: &mut Parser) -> Result<Name, ParseError> {
    match p.next() {
        Tok::Num(n) => Ok(name(&n.to_string())),
        Tok::Ident(s) => Ok(name(&s)),
        _ => p.error("expected a universe"),
    }
}

/// `Vect _ (plus _ 1)`: a first-order pattern with `_` wildcards.
fn skel(p: &mut Parser) -> Result<Skel, ParseError> {
    let head = skel_atom(p)?;
    let mut args = Vec::new();
    while matches!(p.peek(), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) || s == "Prop" || s == "Type")
        || matches!(p.peek(), Tok::Num(_) | Tok::LParen)
    {
        args.push(skel_atom(p)?);
    }
    match head {
        Skel::Node(c, a) if a.is_empty() => Ok(Skel::Node(c, args)),
        h if args.is_empty() => Ok(h),
        _ => p.error("a wildcard cannot be applied"),
    }
}

fn skel_atom(p: &mut Parser) -> Result<Skel, ParseError> {
    match p.next() {
        Tok::Ident(s) if s == "_" => Ok(Skel::Wild),
        Tok::Ident(s) => Ok(Skel::Node(name(&s), vec![])),
        Tok::Num(n) => Ok(Skel::of(&numeral(n))),
        Tok::LParen => {
            let s = skel(p)?;
            p.expect(Tok::RParen, "`)`")?;
            Ok(s)
        }
        _ => {
            p.i -= 1;
            p.error("expected a skeleton")
        }
    }
}

// ---- printing objects ----

fn show_tele(names: &mut Vec<Name>, tele: &[(Name, Term)]) -> String {
    let mut s = String::new();
    for (x, t) in tele {
        let _ = write!(s, " ({} : {})", x, show(names, t));
        names.push(x.clone());
    }
    s
}

/// An object in the concrete syntax accepted by `parse_script`.
pub fn show_object(o: &Object) -> String {
    match o {
        Object::Axiom { name, ty } => format!("axiom {} : {}.", name, show(&[], ty)),
        Object::Definition { name, ty, body } => {
            format!("definition {} : {} := {}.", name, show(&[], ty), show(&[], body))
        }
        Object::Inductive(b) => {
            let mut s = String::from(if b.coinductive { "coinductive" } else { "inductive" });
            for (ti, t) in b.types.iter().enumerate() {
                let mut names = Vec::new();
                if ti == 0 {
                    let _ = write!(s, " {}{}", t.name, show_tele(&mut names, &b.params));
                } else {
                    show_tele(&mut names, &b.params);
                    let _ = write!(s, " with {}", t.name);
                }
                let _ = write!(s, " : {} :=", show(&names, &t.arity));
                for (c, ty) in &t.ctors {
                    let _ = write!(s, " | {} : {}", c, show(&names, ty));
                }
            }
            s.push('.');
            s
        }
        Object::LetRec(ds) | Object::LetCoRec(ds) => {
            let mut s = String::from(if matches!(o, Object::LetRec(_)) { "let rec" } else { "let corec" });
            for (i, d) in ds.iter().enumerate() {
                if i > 0 {
                    s.push_str(" and");
                }
                let mut names = Vec::new();
                let tele = show_tele(&mut names, &d.params);
                let _ = write!(s, " {}{} : {}", d.name, tele, show(&names, &d.ret));
                if matches!(o, Object::LetRec(_)) {
                    if let Some((x, _)) = d.params.get(d.rec_arg) {
                        let _ = write!(s, " on {x}");
                    }
                }
                let _ = write!(s, " := {}", show(&names, &d.body));
            }
            s.push('.');
            s
        }
    }
}

/// Fills in the parameter count of every `match`, which the parser leaves at
/// zero; refinement does this too, so only terms handed straight to the
/// kernel need it.
pub fn set_match_params(env: &GlobalEnv, t: &Term) -> Term {
    let go = |u: &Term| set_match_params(env, u);
    match t {
        Term::Rel(_) | Term::Const(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => t.clone(),
        Term::Meta(j, s) => Term::Meta(*j, s.iter().map(go).collect()),
        Term::App(h, a) => Term::App(Box::new(go(h)), a.iter().map(go).collect()),
        Term::Lambda(x, a, b) => Term::Lambda(x.clone(), Box::new(go(a)), Box::new(go(b))),
        Term::Prod(x, a, b) => Term::Prod(x.clone(), Box::new(go(a)), Box::new(go(b))),
        Term::LetIn(x, a, d, b) => Term::LetIn(x.clone(), Box::new(go(a)), Box::new(go(d)), Box::new(go(b))),
        Term::Match(m) => Term::Match(Box::new(Match {
            scrutinee: go(&m.scrutinee),
            ind: m.ind.clone(),
            params: env.inductive(&m.ind).map_or(m.params, |i| i.params.len()),
            motive: go(&m.motive),
            branches: m
                .branches
                .iter()
                .map(|b| Branch {
                    ctor: b.ctor.clone(),
                    binders: b.binders.iter().map(|(x, a)| (x.clone(), go(a))).collect(),
                    body: go(&b.body),
                })
                .collect(),
        })),
    }
}

/// A command in the concrete syntax; `parse_script` reads it back.
pub fn show_command(c: &CommandKind) -> String {
    match c {
        CommandKind::Object(o) => show_object(o),
        CommandKind::Coercion { name, k, arity, priority, source } => {
            let mut s = format!("coercion {name} {k}");
            if let Some(n) = arity {
                let _ = write!(s, " arity {n}");
            }
            if *priority != 0 {
                let _ = write!(s, " priority {priority}");
            }
            if let Some(sk) = source {
                let _ = write!(s, " source {sk}");
            }
            s.push('.');
            s
        }
        CommandKind::Check { term, ty: None } => format!("check {}.", show(&[], term)),
        CommandKind::Check { term, ty: Some(ty) } => format!("check {} : {}.", show(&[], term), show(&[], ty)),
        CommandKind::Universe(u) => format!("universe {u}."),
        CommandKind::Constraint { lo, hi, strict } => {
            format!("constraint {} {} {}.", lo, if *strict { "<" } else { "<=" }, hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::alpha_eq;

    #[test]
    fn parses_lambda_with_hole() {
        let (t, _) = parse_term("fun x : ? => x").unwrap();
        assert!(alpha_eq(&t, &Term::Lambda(name("x"), Box::new(Term::Placeholder), Box::new(Term::Rel(0)))));
    }

    #[test]
    fn parses_vector_argument() {
        let (t, _) = parse_term("Cons ... 2 l").unwrap();
        let expected = Term::app(Term::cnst("Cons"), vec![Term::PlaceholderVec, numeral(2), Term::cnst("l")]);
        assert!(alpha_eq(&t, &expected));
    }

    #[test]
    fn rejects_vector_outside_arguments() {
        assert!(parse_term("... x").is_err());
        assert!(parse_term("fun x : ... => x").is_err());
    }

    #[test]
    fn spans_follow_addresses() {
        let (_, spans) = parse_term("f a\n  (g b)").unwrap();
        let s = spans[&vec![2]];
        assert_eq!((s.line, s.col, s.end_line, s.end_col), (2, 3, 2, 8));
        let s = spans[&vec![2, 1]];
        assert_eq!((s.line, s.col), (2, 6));
    }

    #[test]
    fn parses_script_commands() {
        let src = "universe u. constraint 0 < u. axiom N : Type. (* comment *)
            inductive Vect (A : Type) : N -> Type := | Vnil : Vect A O.
            coercion f 1 priority -2 source Vect _ (plus _ 1).
            let rec g (n : N) : N on n := n.
            check g 2 : N.";
        let cs = parse_script(src).unwrap();
        assert_eq!(cs.len(), 7);
        match &cs[4].kind {
            CommandKind::Coercion { priority, source, .. } => {
                assert_eq!(*priority, -2);
                assert_eq!(source.as_ref().unwrap().to_string(), "(Vect _ (plus _ (S O)))");
            }
            _ => panic!("expected a coercion"),
        }
    }

    #[test]
    fn error_position() {
        let e = parse_script("axiom x : .").unwrap_err();
        assert_eq!((e.line, e.col), (1, 11));
    }
}
