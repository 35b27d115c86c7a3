//! Terms, contexts, proof problems and metavariable substitutions.
//!
//! Variables are de Bruijn indices (`Rel(0)` is the innermost binder); binder
//! names are kept only as printing hints.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

pub type Name = Arc<str>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

/// The distinguished largest universe.
pub const TOP: &str = "top";

/// Source region of a surface term, 1-based and end-exclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

/// Spans of subterms keyed by their address: the child positions taken from
/// the root of a command.
pub type SpanMap = BTreeMap<Vec<u32>, Span>;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sort {
    Prop,
    Type(Name),
}

impl Sort {
    pub fn ty(u: &str) -> Sort {
        Sort::Type(name(u))
    }

    pub fn top() -> Sort {
        Sort::Type(name(TOP))
    }

    pub fn is_top(&self) -> bool {
        matches!(self, Sort::Type(u) if &**u == TOP)
    }
}

#[derive(Clone, Debug)]
pub enum Term {
    Rel(usize),
    Const(Name),
    Sort(Sort),
    App(Box<Term>, Vec<Term>),
    Lambda(Name, Box<Term>, Box<Term>),
    Prod(Name, Box<Term>, Box<Term>),
    LetIn(Name, Box<Term>, Box<Term>, Box<Term>),
    Match(Box<Match>),
    Meta(usize, Vec<Term>),
    Placeholder,
    PlaceholderVec,
}

/// `match scrutinee in ind return motive with branches end`.
///
/// The motive abstracts the indices and the matched value. Branch binder `i`
/// lives under binders `0..i`; the body lives under all of them.
#[derive(Clone, Debug)]
pub struct Match {
    pub scrutinee: Term,
    pub ind: Name,
    pub params: usize,
    pub motive: Term,
    pub branches: Vec<Branch>,
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub ctor: Name,
    pub binders: Vec<(Name, Term)>,
    pub body: Term,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("substitution is not defined on placeholders")]
    Placeholder,
    #[error("undeclared metavariable ?{0}")]
    UndeclaredMeta(usize),
}

impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        alpha_eq(self, other)
    }
}

impl Term {
    pub fn cnst(s: &str) -> Term {
        Term::Const(name(s))
    }

    pub fn sort(s: Sort) -> Term {
        Term::Sort(s)
    }

    pub fn prop() -> Term {
        Term::Sort(Sort::Prop)
    }

    pub fn ty(u: &str) -> Term {
        Term::Sort(Sort::ty(u))
    }

    /// Builds an application, flattening nested heads and dropping empty spines.
    pub fn app(head: Term, args: Vec<Term>) -> Term {
        if args.is_empty() {
            return head;
        }
        match head {
            Term::App(h, mut a) => {
                a.extend(args);
                Term::App(h, a)
            }
            h => Term::App(Box::new(h), args),
        }
    }

    pub fn lambda(x: &str, ty: Term, body: Term) -> Term {
        Term::Lambda(name(x), Box::new(ty), Box::new(body))
    }

    pub fn prod(x: &str, ty: Term, body: Term) -> Term {
        Term::Prod(name(x), Box::new(ty), Box::new(body))
    }

    /// Non-dependent product; `cod` is lifted over the anonymous binder.
    pub fn arrow(dom: Term, cod: Term) -> Term {
        Term::Prod(name("_"), Box::new(dom), Box::new(cod.lift(1)))
    }

    pub fn letin(x: &str, ty: Term, def: Term, body: Term) -> Term {
        Term::LetIn(name(x), Box::new(ty), Box::new(def), Box::new(body))
    }

    pub fn head(&self) -> &Term {
        match self {
            Term::App(h, _) => h,
            t => t,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::App(_, a) => a,
            _ => &[],
        }
    }

    pub fn is_sort(&self) -> bool {
        matches!(self, Term::Sort(_))
    }

    /// True iff the term contains no placeholder of either kind.
    pub fn is_internal(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |t| {
            if matches!(t, Term::Placeholder | Term::PlaceholderVec) {
                ok = false;
            }
        });
        ok
    }

    /// Pre-order traversal of every subterm.
    pub fn visit(&self, f: &mut impl FnMut(&Term)) {
        f(self);
        match self {
            Term::Rel(_) | Term::Const(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => {}
            Term::App(h, a) => {
                h.visit(f);
                a.iter().for_each(|x| x.visit(f));
            }
            Term::Lambda(_, a, b) | Term::Prod(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
            Term::LetIn(_, a, d, b) => {
                a.visit(f);
                d.visit(f);
                b.visit(f);
            }
            Term::Match(m) => {
                m.scrutinee.visit(f);
                m.motive.visit(f);
                for br in &m.branches {
                    br.binders.iter().for_each(|(_, t)| t.visit(f));
                    br.body.visit(f);
                }
            }
            Term::Meta(_, s) => s.iter().for_each(|x| x.visit(f)),
        }
    }

    pub fn lift(&self, n: usize) -> Term {
        self.lift_from(0, n)
    }

    /// Adds `n` to every free index `>= k`.
    pub fn lift_from(&self, k: usize, n: usize) -> Term {
        if n == 0 {
            return self.clone();
        }
        map_rels(self, k, &|i, _| Term::Rel(i + n))
    }

    /// Lowers free indices `>= k` by `n`; caller guarantees `k..k+n` are unused.
    pub fn lower_from(&self, k: usize, n: usize) -> Term {
        if n == 0 {
            return self.clone();
        }
        map_rels(self, k, &|i, _| Term::Rel(i - n))
    }

    /// Replaces `Rel(0)` with `u` and lowers the remaining free indices.
    pub fn instantiate1(&self, u: &Term) -> Term {
        self.subst_many(std::slice::from_ref(u))
    }

    /// Simultaneous substitution of a context of length `n`: `Rel(i)` for
    /// `i < n` becomes `us[n-1-i]`, higher indices drop by `n`.
    pub fn subst_many(&self, us: &[Term]) -> Term {
        let n = us.len();
        if n == 0 {
            return self.clone();
        }
        map_rels(self, 0, &|i, d| {
            let j = i - d;
            if j < n {
                us[n - 1 - j].lift(d)
            } else {
                Term::Rel(i - n)
            }
        })
    }

    /// `subst_many` acting on the free indices above the innermost `k`.
    pub fn subst_many_from(&self, k: usize, us: &[Term]) -> Term {
        let n = us.len();
        if n == 0 {
            return self.clone();
        }
        map_rels(self, k, &|i, d| {
            let j = i - d;
            if j < n {
                us[n - 1 - j].lift(d)
            } else {
                Term::Rel(i - n)
            }
        })
    }

    /// Applies `self` to `args`, contracting the β-redexes this creates.
    pub fn beta_apply(&self, args: &[Term]) -> Term {
        let mut f = self.clone();
        let mut i = 0;
        while i < args.len() {
            match f {
                Term::Lambda(_, _, b) => {
                    f = b.instantiate1(&args[i]);
                    i += 1;
                }
                other => return Term::app(other, args[i..].to_vec()),
            }
        }
        f
    }

    /// Whether free variable `k` occurs.
    pub fn has_rel(&self, k: usize) -> bool {
        let mut found = false;
        walk_rels(self, 0, &mut |i, d| {
            if i >= d && i - d == k {
                found = true;
            }
        });
        found
    }

    /// All free variable indices.
    pub fn free_rels(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        walk_rels(self, 0, &mut |i, d| {
            if i >= d {
                out.insert(i - d);
            }
        });
        out
    }

    /// Number of nested products at the top, without reduction.
    pub fn prod_arity(&self) -> usize {
        let mut t = self;
        let mut n = 0;
        while let Term::Prod(_, _, b) = t {
            n += 1;
            t = b;
        }
        n
    }
}

/// Rebuilds `t`, calling `f(i, depth)` on each free `Rel(i)` (`i >= depth`).
pub fn map_rels(t: &Term, depth: usize, f: &dyn Fn(usize, usize) -> Term) -> Term {
    match t {
        Term::Rel(i) => {
            if *i >= depth {
                f(*i, depth)
            } else {
                Term::Rel(*i)
            }
        }
        Term::Const(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => t.clone(),
        Term::App(h, a) => {
            Term::App(Box::new(map_rels(h, depth, f)), a.iter().map(|x| map_rels(x, depth, f)).collect())
        }
        Term::Lambda(x, a, b) => {
            Term::Lambda(x.clone(), Box::new(map_rels(a, depth, f)), Box::new(map_rels(b, depth + 1, f)))
        }
        Term::Prod(x, a, b) => {
            Term::Prod(x.clone(), Box::new(map_rels(a, depth, f)), Box::new(map_rels(b, depth + 1, f)))
        }
        Term::LetIn(x, a, d, b) => Term::LetIn(
            x.clone(),
            Box::new(map_rels(a, depth, f)),
            Box::new(map_rels(d, depth, f)),
            Box::new(map_rels(b, depth + 1, f)),
        ),
        Term::Match(m) => Term::Match(Box::new(Match {
            scrutinee: map_rels(&m.scrutinee, depth, f),
            ind: m.ind.clone(),
            params: m.params,
            motive: map_rels(&m.motive, depth, f),
            branches: m
                .branches
                .iter()
                .map(|br| Branch {
                    ctor: br.ctor.clone(),
                    binders: br
                        .binders
                        .iter()
                        .enumerate()
                        .map(|(i, (x, ty))| (x.clone(), map_rels(ty, depth + i, f)))
                        .collect(),
                    body: map_rels(&br.body, depth + br.binders.len(), f),
                })
                .collect(),
        })),
        Term::Meta(j, s) => Term::Meta(*j, s.iter().map(|x| map_rels(x, depth, f)).collect()),
    }
}

fn walk_rels(t: &Term, depth: usize, f: &mut dyn FnMut(usize, usize)) {
    match t {
        Term::Rel(i) => f(*i, depth),
        Term::Const(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => {}
        Term::App(h, a) => {
            walk_rels(h, depth, f);
            a.iter().for_each(|x| walk_rels(x, depth, f));
        }
        Term::Lambda(_, a, b) | Term::Prod(_, a, b) => {
            walk_rels(a, depth, f);
            walk_rels(b, depth + 1, f);
        }
        Term::LetIn(_, a, d, b) => {
            walk_rels(a, depth, f);
            walk_rels(d, depth, f);
            walk_rels(b, depth + 1, f);
        }
        Term::Match(m) => {
            walk_rels(&m.scrutinee, depth, f);
            walk_rels(&m.motive, depth, f);
            for br in &m.branches {
                for (i, (_, ty)) in br.binders.iter().enumerate() {
                    walk_rels(ty, depth + i, f);
                }
                walk_rels(&br.body, depth + br.binders.len(), f);
            }
        }
        Term::Meta(_, s) => s.iter().for_each(|x| walk_rels(x, depth, f)),
    }
}

/// Capture-avoiding substitution of `u` for the free variable `k`.
///
/// Indices above `k` are lowered by one, as when a binder is removed.
pub fn subst(t: &Term, k: usize, u: &Term) -> Result<Term, TermError> {
    if !t.is_internal() || !u.is_internal() {
        return Err(TermError::Placeholder);
    }
    Ok(map_rels(t, 0, &|i, d| {
        let j = i - d;
        match j.cmp(&k) {
            std::cmp::Ordering::Less => Term::Rel(i),
            std::cmp::Ordering::Equal => u.lift(d),
            std::cmp::Ordering::Greater => Term::Rel(i - 1),
        }
    }))
}

/// Structural equality up to the names of bound variables.
pub fn alpha_eq(a: &Term, b: &Term) -> bool {
    match (a, b) {
        (Term::Rel(i), Term::Rel(j)) => i == j,
        (Term::Const(x), Term::Const(y)) => x == y,
        (Term::Sort(s), Term::Sort(t)) => s == t,
        (Term::App(h1, a1), Term::App(h2, a2)) => {
            a1.len() == a2.len() && alpha_eq(h1, h2) && a1.iter().zip(a2).all(|(x, y)| alpha_eq(x, y))
        }
        (Term::Lambda(_, a1, b1), Term::Lambda(_, a2, b2)) | (Term::Prod(_, a1, b1), Term::Prod(_, a2, b2)) => {
            alpha_eq(a1, a2) && alpha_eq(b1, b2)
        }
        (Term::LetIn(_, a1, d1, b1), Term::LetIn(_, a2, d2, b2)) => {
            alpha_eq(a1, a2) && alpha_eq(d1, d2) && alpha_eq(b1, b2)
        }
        (Term::Match(m1), Term::Match(m2)) => {
            m1.ind == m2.ind
                && m1.params == m2.params
                && m1.branches.len() == m2.branches.len()
                && alpha_eq(&m1.scrutinee, &m2.scrutinee)
                && alpha_eq(&m1.motive, &m2.motive)
                && m1.branches.iter().zip(&m2.branches).all(|(x, y)| {
                    x.ctor == y.ctor
                        && x.binders.len() == y.binders.len()
                        && x.binders.iter().zip(&y.binders).all(|(p, q)| alpha_eq(&p.1, &q.1))
                        && alpha_eq(&x.body, &y.body)
                })
        }
        (Term::Meta(i, s1), Term::Meta(j, s2)) => {
            i == j && s1.len() == s2.len() && s1.iter().zip(s2).all(|(x, y)| alpha_eq(x, y))
        }
        (Term::Placeholder, Term::Placeholder) | (Term::PlaceholderVec, Term::PlaceholderVec) => true,
        _ => false,
    }
}

/// Metavariable indices occurring in `t`, including inside local substitutions.
pub fn metas_of(t: &Term) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    collect_metas(t, &mut out);
    out
}

pub fn collect_metas(t: &Term, out: &mut BTreeSet<usize>) {
    t.visit(&mut |u| {
        if let Term::Meta(j, _) = u {
            out.insert(*j);
        }
    });
}

/// One context entry: a declaration, or a definition when `def` is set.
#[derive(Clone, Debug)]
pub struct Entry {
    pub name: Name,
    pub ty: Term,
    pub def: Option<Term>,
}

/// Entries oldest first; `Rel(i)` refers to `entries[len - 1 - i]`.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub entries: Vec<Entry>,
}

impl Context {
    pub fn new() -> Context {
        Context::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push_decl(&mut self, x: Name, ty: Term) {
        self.entries.push(Entry { name: x, ty, def: None });
    }

    pub fn push_def(&mut self, x: Name, def: Term, ty: Term) {
        self.entries.push(Entry { name: x, ty, def: Some(def) });
    }

    pub fn with_decl(&self, x: Name, ty: Term) -> Context {
        let mut c = self.clone();
        c.push_decl(x, ty);
        c
    }

    pub fn with_def(&self, x: Name, def: Term, ty: Term) -> Context {
        let mut c = self.clone();
        c.push_def(x, def, ty);
        c
    }

    pub fn pop(&mut self) {
        self.entries.pop();
    }

    pub fn entry(&self, i: usize) -> Option<&Entry> {
        let n = self.entries.len();
        if i < n {
            Some(&self.entries[n - 1 - i])
        } else {
            None
        }
    }

    /// Type of `Rel(i)`, relocated into the full context.
    pub fn type_of(&self, i: usize) -> Option<Term> {
        self.entry(i).map(|e| e.ty.lift(i + 1))
    }

    /// Body of `Rel(i)` if it is a definition, relocated.
    pub fn def_of(&self, i: usize) -> Option<Term> {
        self.entry(i).and_then(|e| e.def.as_ref().map(|d| d.lift(i + 1)))
    }

    /// The identity local substitution for a meta declared in this context.
    pub fn identity(&self) -> Vec<Term> {
        let n = self.len();
        (0..n).map(|k| Term::Rel(n - 1 - k)).collect()
    }

    pub fn names(&self) -> Vec<Name> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }
}

pub fn metas_of_context(c: &Context) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for e in &c.entries {
        collect_metas(&e.ty, &mut out);
        if let Some(d) = &e.def {
            collect_metas(d, &mut out);
        }
    }
    out
}

/// `Γ ⊢ ?n : T`; `sort` restricts instantiation to sorts.
#[derive(Clone, Debug)]
pub struct MetaDecl {
    pub ctx: Context,
    pub ty: Term,
    pub sort: bool,
}

/// `Γ ⊢ ?n := body : T`.
#[derive(Clone, Debug)]
pub struct MetaDef {
    pub ctx: Context,
    pub body: Term,
    pub ty: Term,
}

pub type ProofProblem = BTreeMap<usize, MetaDecl>;
pub type Substitution = BTreeMap<usize, MetaDef>;

/// Replaces every assigned metavariable by its instantiated body, recursively.
/// Unassigned metas are kept, with their local substitutions rewritten.
pub fn apply_subst(s: &Substitution, t: &Term) -> Term {
    if s.is_empty() {
        return t.clone();
    }
    apply_rec(s, t)
}

fn apply_rec(s: &Substitution, t: &Term) -> Term {
    match t {
        Term::Meta(j, sigma) => {
            let sigma: Vec<Term> = sigma.iter().map(|x| apply_rec(s, x)).collect();
            match s.get(j) {
                Some(def) => apply_rec(s, &def.body).subst_many(&sigma),
                None => Term::Meta(*j, sigma),
            }
        }
        Term::Rel(_) | Term::Const(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => t.clone(),
        Term::App(h, a) => Term::app(apply_rec(s, h), a.iter().map(|x| apply_rec(s, x)).collect()),
        Term::Lambda(x, a, b) => Term::Lambda(x.clone(), Box::new(apply_rec(s, a)), Box::new(apply_rec(s, b))),
        Term::Prod(x, a, b) => Term::Prod(x.clone(), Box::new(apply_rec(s, a)), Box::new(apply_rec(s, b))),
        Term::LetIn(x, a, d, b) => {
            Term::LetIn(x.clone(), Box::new(apply_rec(s, a)), Box::new(apply_rec(s, d)), Box::new(apply_rec(s, b)))
        }
        Term::Match(m) => Term::Match(Box::new(Match {
            scrutinee: apply_rec(s, &m.scrutinee),
            ind: m.ind.clone(),
            params: m.params,
            motive: apply_rec(s, &m.motive),
            branches: m
                .branches
                .iter()
                .map(|br| Branch {
                    ctor: br.ctor.clone(),
                    binders: br.binders.iter().map(|(x, ty)| (x.clone(), apply_rec(s, ty))).collect(),
                    body: apply_rec(s, &br.body),
                })
                .collect(),
        })),
    }
}

/// `apply_subst`, additionally rejecting metas declared in neither `p` nor `s`.
pub fn apply_subst_checked(p: &ProofProblem, s: &Substitution, t: &Term) -> Result<Term, TermError> {
    let mut missing = None;
    t.visit(&mut |u| {
        if let Term::Meta(j, _) = u {
            if !p.contains_key(j) && !s.contains_key(j) && missing.is_none() {
                missing = Some(*j);
            }
        }
    });
    if let Some(j) = missing {
        return Err(TermError::UndeclaredMeta(j));
    }
    Ok(apply_subst(s, t))
}

pub fn apply_subst_context(s: &Substitution, c: &Context) -> Context {
    Context {
        entries: c
            .entries
            .iter()
            .map(|e| Entry {
                name: e.name.clone(),
                ty: apply_subst(s, &e.ty),
                def: e.def.as_ref().map(|d| apply_subst(s, d)),
            })
            .collect(),
    }
}

/// Metas mentioned by a declaration's context and type.
pub fn decl_deps(d: &MetaDecl) -> BTreeSet<usize> {
    let mut out = metas_of_context(&d.ctx);
    collect_metas(&d.ty, &mut out);
    out
}

/// True iff the dependency order between the metas of `p` is acyclic.
pub fn check_valid_proof_problem(p: &ProofProblem) -> bool {
    let graph: BTreeMap<usize, BTreeSet<usize>> = p.iter().map(|(j, d)| (*j, decl_deps(d))).collect();
    acyclic(&graph)
}

/// Acyclicity of the dependency order over both open and assigned metas;
/// assigned metas also depend on the metas in their bodies.
pub fn check_valid_state(p: &ProofProblem, s: &Substitution) -> bool {
    let mut graph: BTreeMap<usize, BTreeSet<usize>> = p.iter().map(|(j, d)| (*j, decl_deps(d))).collect();
    for (j, d) in s {
        let mut deps = metas_of_context(&d.ctx);
        collect_metas(&d.ty, &mut deps);
        collect_metas(&d.body, &mut deps);
        graph.insert(*j, deps);
    }
    acyclic(&graph)
}

fn acyclic(graph: &BTreeMap<usize, BTreeSet<usize>>) -> bool {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: BTreeMap<usize, Mark> = BTreeMap::new();
    for &root in graph.keys() {
        if marks.contains_key(&root) {
            continue;
        }
        // iterative DFS: (node, next child position)
        let mut stack: Vec<(usize, Vec<usize>, usize)> = Vec::new();
        marks.insert(root, Mark::Open);
        stack.push((root, graph[&root].iter().copied().collect(), 0));
        while let Some(top) = stack.last_mut() {
            if top.2 == top.1.len() {
                marks.insert(top.0, Mark::Done);
                stack.pop();
                continue;
            }
            let next = top.1[top.2];
            top.2 += 1;
            match marks.get(&next) {
                Some(Mark::Open) => return false,
                Some(Mark::Done) => {}
                None => {
                    marks.insert(next, Mark::Open);
                    let kids = graph.get(&next).map(|s| s.iter().copied().collect()).unwrap_or_default();
                    stack.push((next, kids, 0));
                }
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n() -> Term {
        Term::cnst("N")
    }

    #[test]
    fn subst_meta_local_substitution() {
        let t = Term::Meta(1, vec![Term::Rel(0)]);
        let r = subst(&t, 0, &Term::cnst("c")).unwrap();
        assert!(alpha_eq(&r, &Term::Meta(1, vec![Term::cnst("c")])));
    }

    #[test]
    fn subst_var_and_shadowing() {
        let u = Term::cnst("u");
        assert!(alpha_eq(&subst(&Term::Rel(0), 0, &u).unwrap(), &u));
        let lam = Term::lambda("x", n(), Term::Rel(0));
        assert!(alpha_eq(&subst(&lam, 0, &u).unwrap(), &lam));
    }

    #[test]
    fn subst_rejects_placeholders() {
        let t = Term::app(Term::cnst("f"), vec![Term::Placeholder]);
        assert_eq!(subst(&t, 0, &n()), Err(TermError::Placeholder));
    }

    #[test]
    fn subst_under_binder_relocates() {
        // (fun y => x) with x := Rel(3) gives fun y => Rel(4)
        let t = Term::lambda("y", n(), Term::Rel(1));
        let r = subst(&t, 0, &Term::Rel(3)).unwrap();
        assert!(alpha_eq(&r, &Term::lambda("y", n(), Term::Rel(4))));
    }

    #[test]
    fn apply_subst_instantiates_local_substitution() {
        let mut s = Substitution::new();
        let ctx = Context::new().with_decl(name("x"), n());
        let body = Term::app(Term::cnst("f"), vec![Term::Rel(0)]);
        s.insert(1, MetaDef { ctx, body, ty: n() });
        let r = apply_subst(&s, &Term::Meta(1, vec![Term::cnst("u")]));
        assert!(alpha_eq(&r, &Term::app(Term::cnst("f"), vec![Term::cnst("u")])));
        assert!(alpha_eq(&apply_subst(&Substitution::new(), &r), &r));
    }

    #[test]
    fn apply_subst_chained_matches_fixpoint_oracle() {
        // oracle: single-step application repeated until nothing changes
        fn step(s: &Substitution, t: &Term) -> Term {
            match t {
                Term::Meta(j, sigma) => match s.get(j) {
                    Some(d) => d.body.subst_many(sigma),
                    None => t.clone(),
                },
                _ => map_children(t, &|x| step(s, x)),
            }
        }
        fn map_children(t: &Term, f: &dyn Fn(&Term) -> Term) -> Term {
            match t {
                Term::App(h, a) => Term::app(f(h), a.iter().map(f).collect()),
                Term::Meta(j, a) => Term::Meta(*j, a.iter().map(f).collect()),
                _ => t.clone(),
            }
        }
        let ctx = Context::new().with_decl(name("x"), n());
        let mut s = Substitution::new();
        s.insert(1, MetaDef { ctx: ctx.clone(), body: Term::Meta(2, vec![Term::Rel(0)]), ty: n() });
        s.insert(2, MetaDef { ctx, body: Term::app(Term::cnst("g"), vec![Term::Rel(0)]), ty: n() });
        let t = Term::app(Term::cnst("h"), vec![Term::Meta(1, vec![Term::cnst("c")])]);
        let mut cur = t.clone();
        loop {
            let next = step(&s, &cur);
            if alpha_eq(&next, &cur) {
                break;
            }
            cur = next;
        }
        assert!(alpha_eq(&apply_subst(&s, &t), &cur));
        assert!(alpha_eq(&cur, &Term::app(Term::cnst("h"), vec![Term::app(Term::cnst("g"), vec![Term::cnst("c")])])));
    }

    #[test]
    fn metas_of_examples() {
        assert!(metas_of(&Term::app(Term::cnst("f"), vec![n()])).is_empty());
        let t = Term::Meta(3, vec![Term::Meta(5, vec![])]);
        assert_eq!(metas_of(&t).into_iter().collect::<Vec<_>>(), vec![3, 5]);
        let c = Context::new().with_decl(name("x"), Term::Meta(2, vec![]));
        assert_eq!(metas_of_context(&c).into_iter().collect::<Vec<_>>(), vec![2]);
    }

    fn decl(ty: Term) -> MetaDecl {
        MetaDecl { ctx: Context::new(), ty, sort: false }
    }

    #[test]
    fn validity() {
        let mut p = ProofProblem::new();
        p.insert(1, decl(n()));
        assert!(check_valid_proof_problem(&p));
        p.insert(1, decl(Term::Meta(2, vec![])));
        p.insert(2, decl(Term::ty("0")));
        assert!(check_valid_proof_problem(&p));
        p.insert(2, decl(Term::Meta(1, vec![])));
        assert!(!check_valid_proof_problem(&p));
    }

    #[test]
    fn alpha_examples() {
        let a = Term::lambda("x", n(), Term::Rel(0));
        let b = Term::lambda("y", n(), Term::Rel(0));
        let c = Term::lambda("x", n(), Term::cnst("O"));
        assert!(alpha_eq(&a, &b));
        assert!(!alpha_eq(&a, &c));
        let m = Term::Meta(1, vec![Term::cnst("a")]);
        assert!(alpha_eq(&m, &m.clone()));
    }

    #[test]
    fn app_flattens() {
        let t = Term::app(Term::app(Term::cnst("f"), vec![n()]), vec![n()]);
        assert_eq!(t.args().len(), 2);
        assert!(matches!(t.head(), Term::Const(_)));
    }
}
