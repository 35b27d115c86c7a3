//! Printing of terms, contexts and metavariable declarations in the surface
//! syntax accepted by the parser.

use std::collections::BTreeSet;

use crate::term::{name, Context, MetaDecl, MetaDef, Name, Sort, Term};

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

pub fn show_sort(s: &Sort) -> String {
    match s {
        Sort::Prop => "Prop".to_string(),
        Sort::Type(u) => format!("Type({u})"),
    }
}

/// Prints `t` under bound names `names` (oldest first).
pub fn show(names: &[Name], t: &Term) -> String {
    let mut consts = BTreeSet::new();
    t.visit(&mut |u| {
        if let Term::Const(c) = u {
            consts.insert(c.clone());
        }
    });
    let mut p = Printer { names: names.to_vec(), consts, out: String::new() };
    p.term(t, Prec::Binder);
    p.out
}

pub fn show_ctx(ctx: &Context, t: &Term) -> String {
    show(&context_names(ctx), t)
}

/// The names `show_context` gives to the entries of `ctx`.
pub fn context_names(ctx: &Context) -> Vec<Name> {
    let mut p = Printer { names: Vec::new(), consts: BTreeSet::new(), out: String::new() };
    for e in &ctx.entries {
        let x = p.fresh(&e.name, true);
        p.names.push(x);
    }
    p.names
}

/// `x : A; y : B` with definitions as `x : A := d`.
pub fn show_context(ctx: &Context) -> String {
    let mut p = Printer { names: Vec::new(), consts: BTreeSet::new(), out: String::new() };
    let mut parts = Vec::new();
    for e in &ctx.entries {
        // repeated binder names are renamed so that the context reads unambiguously
        let x = p.fresh(&e.name, true);
        let mut s = format!("{} : {}", x, show(&p.names, &e.ty));
        if let Some(d) = &e.def {
            s.push_str(&format!(" := {}", show(&p.names, d)));
        }
        parts.push(s);
        p.names.push(x);
    }
    parts.join("; ")
}

fn turnstile(ctx: &Context) -> String {
    if ctx.is_empty() {
        "⊢".to_string()
    } else {
        format!("{} ⊢", show_context(ctx))
    }
}

/// `Γ ⊢ ?n : T`.
pub fn show_decl(n: usize, d: &MetaDecl) -> String {
    format!("{} ?{} : {}", turnstile(&d.ctx), n, show_ctx(&d.ctx, &d.ty))
}

/// `Γ ⊢ ?n := t : T`.
pub fn show_def(n: usize, d: &MetaDef) -> String {
    format!("{} ?{} := {} : {}", turnstile(&d.ctx), n, show_ctx(&d.ctx, &d.body), show_ctx(&d.ctx, &d.ty))
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Prec {
    Binder,
    Arrow,
    App,
    Atom,
}

struct Printer {
    names: Vec<Name>,
    consts: BTreeSet<Name>,
    out: String,
}

impl Printer {
    fn fresh(&self, hint: &str, used: bool) -> Name {
        let base = if hint == "_" || hint.is_empty() {
            if !used {
                return name("_");
            }
            "x"
        } else {
            hint
        };
        let taken = |s: &str| {
            self.names.iter().any(|n| &**n == s) || self.consts.iter().any(|c| &**c == s) || KEYWORDS.contains(&s)
        };
        if !taken(base) {
            return name(base);
        }
        let stem = base.trim_end_matches(|c: char| c.is_ascii_digit());
        let stem = if stem.is_empty() { "x" } else { stem };
        (0..).map(|i| format!("{stem}{i}")).find(|s| !taken(s)).map(|s| name(&s)).unwrap()
    }

    fn paren(&mut self, cond: bool, f: impl FnOnce(&mut Self)) {
        if cond {
            self.out.push('(');
        }
        f(self);
        if cond {
            self.out.push(')');
        }
    }

    fn numeral(t: &Term) -> Option<u64> {
        let mut n = 0;
        let mut cur = t;
        loop {
            match cur {
                Term::Const(c) if &**c == "O" => return Some(n),
                Term::App(h, a) if a.len() == 1 && matches!(&**h, Term::Const(c) if &**c == "S") => {
                    n += 1;
                    cur = &a[0];
                }
                _ => return None,
            }
        }
    }

    fn is_identity(&self, s: &[Term]) -> bool {
        let k = self.names.len();
        s.len() == k && s.iter().enumerate().all(|(i, t)| matches!(t, Term::Rel(j) if *j == k - 1 - i))
    }

    fn term(&mut self, t: &Term, prec: Prec) {
        if let Some(n) = Self::numeral(t) {
            self.out.push_str(&n.to_string());
            return;
        }
        match t {
            Term::Rel(i) => {
                let k = self.names.len();
                if *i < k {
                    let n = self.names[k - 1 - i].clone();
                    self.out.push_str(&n);
                } else {
                    self.out.push_str(&format!("#{}", i - k));
                }
            }
            Term::Const(c) => self.out.push_str(c),
            Term::Sort(s) => self.out.push_str(&show_sort(s)),
            Term::Placeholder => self.out.push('?'),
            Term::PlaceholderVec => self.out.push_str("..."),
            Term::Meta(j, s) => {
                self.out.push_str(&format!("?{j}"));
                if !self.is_identity(s) {
                    self.out.push('[');
                    for (i, x) in s.iter().enumerate() {
                        if i > 0 {
                            self.out.push_str("; ");
                        }
                        self.term(x, Prec::Binder);
                    }
                    self.out.push(']');
                }
            }
            Term::App(h, a) => self.paren(prec > Prec::App, |p| {
                p.term(h, Prec::Atom);
                for x in a {
                    p.out.push(' ');
                    p.term(x, Prec::Atom);
                }
            }),
            Term::Lambda(x, a, b) => self.paren(prec > Prec::Binder, |p| {
                let x = p.fresh(x, b.has_rel(0));
                p.out.push_str(&format!("fun {x} : "));
                p.term(a, Prec::Arrow);
                p.out.push_str(" => ");
                p.under(x, b);
            }),
            Term::Prod(x, a, b) => {
                if !b.has_rel(0) {
                    self.paren(prec > Prec::Arrow, |p| {
                        p.term(a, Prec::App);
                        p.out.push_str(" -> ");
                        p.names.push(name("_"));
                        p.term(b, Prec::Arrow);
                        p.names.pop();
                    })
                } else {
                    self.paren(prec > Prec::Binder, |p| {
                        let x = p.fresh(x, true);
                        p.out.push_str(&format!("forall {x} : "));
                        p.term(a, Prec::Arrow);
                        p.out.push_str(", ");
                        p.under(x, b);
                    })
                }
            }
            Term::LetIn(x, a, d, b) => self.paren(prec > Prec::Binder, |p| {
                let x = p.fresh(x, true);
                p.out.push_str(&format!("let {x} : "));
                p.term(a, Prec::Arrow);
                p.out.push_str(" := ");
                p.term(d, Prec::Binder);
                p.out.push_str(" in ");
                p.under(x, b);
            }),
            Term::Match(m) => {
                self.out.push_str("match ");
                self.term(&m.scrutinee, Prec::App);
                self.out.push_str(&format!(" in {} return ", m.ind));
                self.term(&m.motive, Prec::App);
                self.out.push_str(" with");
                for br in &m.branches {
                    self.out.push_str(&format!(" | {}", br.ctor));
                    let depth = self.names.len();
                    for (x, ty) in &br.binders {
                        let x = self.fresh(x, true);
                        self.out.push_str(&format!(" ({x} : "));
                        self.term(ty, Prec::Binder);
                        self.out.push(')');
                        self.names.push(x);
                    }
                    self.out.push_str(" => ");
                    self.term(&br.body, Prec::Binder);
                    self.names.truncate(depth);
                }
                self.out.push_str(" end");
            }
        }
    }

    fn under(&mut self, x: Name, b: &Term) {
        self.names.push(x);
        self.term(b, Prec::Binder);
        self.names.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prints_binders_and_numerals() {
        let n = Term::cnst("N");
        let two = Term::app(Term::cnst("S"), vec![Term::app(Term::cnst("S"), vec![Term::cnst("O")])]);
        let t = Term::lambda("x", n.clone(), Term::app(Term::cnst("f"), vec![Term::Rel(0), two]));
        assert_eq!(show(&[], &t), "fun x : N => f x 2");
        let p = Term::prod("x", n.clone(), Term::app(Term::cnst("P"), vec![Term::Rel(0)]));
        assert_eq!(show(&[], &p), "forall x : N, P x");
        assert_eq!(show(&[], &Term::arrow(n.clone(), n.clone())), "N -> N");
    }

    #[test]
    fn renames_to_avoid_capture() {
        // fun x => fun x => outer x
        let n = Term::cnst("N");
        let t = Term::lambda("x", n.clone(), Term::lambda("x", n.clone(), Term::Rel(1)));
        assert_eq!(show(&[], &t), "fun x : N => fun x0 : N => x");
        let c = Term::lambda("N", n.clone(), Term::Rel(0));
        assert_eq!(show(&[], &c), "fun N0 : N => N0");
    }

    #[test]
    fn meta_identity_shorthand() {
        let names = vec![name("x")];
        assert_eq!(show(&names, &Term::Meta(3, vec![Term::Rel(0)])), "?3");
        assert_eq!(show(&names, &Term::Meta(3, vec![Term::cnst("c")])), "?3[c]");
    }
}
