//! Helpers shared by the integration tests.
#![allow(dead_code)]

use cicr_core::coercion::CoercionDb;
use cicr_core::kernel::{typecheck_metasenv, typecheck_subst, typecheck_term};
use cicr_core::reduce::Mode;
use cicr_core::surface::{parse_term, set_match_params};
use cicr_core::term::{alpha_eq, name, Branch, Match};
use cicr_core::{load, Context, GlobalEnv, RunOptions, Session, Sort, State, Term};
use rand::rngs::StdRng;
use rand::Rng;

pub const PRELUDE: &str = include_str!("../../../../scripts/prelude.v");

/// The prelude followed by `extra`.
pub fn session(extra: &str) -> Session {
    load(&format!("{PRELUDE}\n{extra}"), RunOptions::default()).unwrap_or_else(|e| panic!("environment: {e}"))
}

pub fn term(env: &GlobalEnv, src: &str) -> Term {
    set_match_params(env, &parse_term(src).unwrap_or_else(|e| panic!("`{src}`: {e}")).0)
}

/// Kernel check of `t : ty` in the empty context under `st`.
pub fn typechecks(env: &GlobalEnv, st: &State, t: &Term, ty: &Term) -> bool {
    match typecheck_term(env, &st.p, &st.s, &Context::new(), t) {
        Ok(found) => st.machine(env).convert(&Context::new(), &found, ty, Mode::Cumulative).unwrap_or(false),
        Err(_) => false,
    }
}

/// Well formedness in full: validity plus kernel checks of every
/// declaration and assignment.
pub fn state_wf(env: &GlobalEnv, st: &State) -> bool {
    st.well_formed() && typecheck_metasenv(env, &st.p, &st.s).is_ok() && typecheck_subst(env, &st.p, &st.s).is_ok()
}

fn spine(t: &Term) -> (Term, Vec<Term>) {
    match t {
        Term::App(h, a) => {
            let (h2, mut a2) = spine(h);
            a2.extend(a.iter().cloned());
            (h2, a2)
        }
        _ => (t.clone(), Vec::new()),
    }
}

/// The syntactic order between refiner input and output: the output
/// replaces placeholders by terms, vectors by argument sequences, and may
/// wrap subterms in declared coercions. `st` instantiates pre-existing metas.
pub fn admissible(db: &CoercionDb, st: &State, inp: &Term, out: &Term) -> bool {
    if structural(db, st, inp, out) {
        return true;
    }
    // (c u1 .. uk .. un) with uk admissible for the input
    let (h, args) = spine(out);
    if let Term::Const(c) = &h {
        return db
            .entries()
            .iter()
            .any(|e| e.name == *c && args.len() == e.n && admissible(db, st, inp, &args[e.k - 1]));
    }
    false
}

fn structural(db: &CoercionDb, st: &State, inp: &Term, out: &Term) -> bool {
    let adm = |a: &Term, b: &Term| admissible(db, st, a, b);
    match (inp, out) {
        (Term::Placeholder, _) => true,
        (Term::PlaceholderVec, _) => false,
        (Term::Meta(j, s), _) => {
            alpha_eq(&st.zonk(inp), out)
                || matches!(out, Term::Meta(k, s2) if k == j && s.len() == s2.len() && s.iter().zip(s2).all(|(a, b)| adm(a, b)))
        }
        (Term::Rel(_) | Term::Const(_) | Term::Sort(_), _) => alpha_eq(inp, out),
        (Term::App(..), _) => {
            let (h, args) = spine(inp);
            let (oh, oargs) = spine(out);
            // the output head may absorb a prefix of the output arguments
            (0..=oargs.len()).any(|m| {
                let head = Term::app(oh.clone(), oargs[..m].to_vec());
                adm(&h, &head) && args_admissible(db, st, &args, &oargs[m..])
            })
        }
        (Term::Lambda(_, a, b), Term::Lambda(_, a2, b2)) | (Term::Prod(_, a, b), Term::Prod(_, a2, b2)) => {
            adm(a, a2) && adm(b, b2)
        }
        (Term::LetIn(_, a, d, b), Term::LetIn(_, a2, d2, b2)) => adm(a, a2) && adm(d, d2) && adm(b, b2),
        (Term::Match(m), Term::Match(m2)) => {
            m.ind == m2.ind
                && adm(&m.scrutinee, &m2.scrutinee)
                && adm(&m.motive, &m2.motive)
                && m.branches.len() == m2.branches.len()
                && m.branches.iter().zip(&m2.branches).all(|(b, b2)| {
                    b.ctor == b2.ctor
                        && b.binders.len() == b2.binders.len()
                        && b.binders.iter().zip(&b2.binders).all(|(x, y)| adm(&x.1, &y.1))
                        && adm(&b.body, &b2.body)
                })
        }
        _ => false,
    }
}

fn args_admissible(db: &CoercionDb, st: &State, inp: &[Term], out: &[Term]) -> bool {
    match inp.split_first() {
        None => out.is_empty(),
        Some((Term::PlaceholderVec, rest)) => (0..=out.len()).any(|i| args_admissible(db, st, rest, &out[i..])),
        Some((a, rest)) => {
            !out.is_empty() && admissible(db, st, a, &out[0]) && args_admissible(db, st, rest, &out[1..])
        }
    }
}

// ---- fuzzing ----

/// Two inductives, two coercions (one of them into a sort), and a few
/// dependent constants.
pub const FUZZ_ENV: &str = "
inductive N : Type := | O : N | S : N -> N.
inductive Bool : Type := | true : Bool | false : Bool.
let rec plus (n : N) (m : N) : N :=
  match n in N return fun _ : N => N with | O => m | S (p : N) => S (plus p m) end.
definition b2n : Bool -> N := fun b : Bool => match b in Bool return fun _ : Bool => N with | true => 1 | false => 0 end.
definition holds : Bool -> Prop := fun b : Bool =>
  match b in Bool return fun _ : Bool => Prop with | true => forall P : Prop, P -> P | false => forall P : Prop, P end.
coercion b2n 1.
coercion holds 1.
axiom f : N -> N.
axiom vec : N -> Type.
axiom mk : forall n : N, vec n.
axiom len : forall n : N, vec n -> N.
axiom ok : holds true.
";

pub fn fuzz_session() -> Session {
    load(FUZZ_ENV, RunOptions::default()).unwrap_or_else(|e| panic!("fuzz environment: {e}"))
}

/// Open metas of the fuzzing input state: `?0 : N` and `?1 : Bool`.
pub fn fuzz_state() -> State {
    let mut st = State::new();
    st.fresh(&Context::new(), Term::cnst("N"), false);
    st.fresh(&Context::new(), Term::cnst("Bool"), false);
    st
}

const CONSTS: &[&str] =
    &["O", "S", "true", "false", "plus", "b2n", "f", "mk", "len", "N", "Bool", "vec", "ok", "holds"];

pub const TARGETS: &[&str] = &["N", "Bool", "N -> N", "Prop", "Type", "vec 1", "forall n : N, vec n", "holds true"];

pub struct Gen<'r> {
    pub rng: &'r mut StdRng,
}

impl Gen<'_> {
    fn leaf(&mut self, scope: usize) -> Term {
        match self.rng.gen_range(0..10) {
            0..=3 => Term::cnst(CONSTS[self.rng.gen_range(0..CONSTS.len())]),
            4 | 5 if scope > 0 => Term::Rel(self.rng.gen_range(0..scope)),
            6 => Term::Placeholder,
            7 => Term::Meta(self.rng.gen_range(0..2), vec![]),
            8 => Term::Sort(if self.rng.gen_bool(0.5) { Sort::Prop } else { Sort::ty("0") }),
            _ => (0..self.rng.gen_range(0..3)).fold(Term::cnst("O"), |t, _| Term::app(Term::cnst("S"), vec![t])),
        }
    }

    fn ty(&mut self, depth: usize, scope: usize) -> Term {
        if self.rng.gen_bool(0.4) {
            return Term::Placeholder;
        }
        match self.rng.gen_range(0..4) {
            0 => Term::cnst("N"),
            1 => Term::cnst("Bool"),
            _ => self.term(depth, scope),
        }
    }

    /// A random external term of depth at most `depth` under `scope` binders.
    pub fn term(&mut self, depth: usize, scope: usize) -> Term {
        if depth <= 1 || self.rng.gen_bool(0.25) {
            return self.leaf(scope);
        }
        let d = depth - 1;
        match self.rng.gen_range(0..10) {
            0..=3 => {
                let head = if self.rng.gen_bool(0.8) {
                    Term::cnst(CONSTS[self.rng.gen_range(0..7)])
                } else {
                    self.leaf(scope)
                };
                let n = self.rng.gen_range(1..4);
                let args = (0..n)
                    .map(|_| if self.rng.gen_bool(0.15) { Term::PlaceholderVec } else { self.term(d, scope) })
                    .collect();
                Term::App(Box::new(head), args)
            }
            4 | 5 => Term::Lambda(name("x"), Box::new(self.ty(d, scope)), Box::new(self.term(d, scope + 1))),
            6 => Term::Prod(name("y"), Box::new(self.ty(d, scope)), Box::new(self.term(d, scope + 1))),
            7 => Term::LetIn(
                name("z"),
                Box::new(self.ty(d, scope)),
                Box::new(self.term(d, scope)),
                Box::new(self.term(d, scope + 1)),
            ),
            _ => self.matcher(d, scope),
        }
    }

    fn matcher(&mut self, d: usize, scope: usize) -> Term {
        let on_n = self.rng.gen_bool(0.5);
        let ind = if on_n { "N" } else { "Bool" };
        let motive = if self.rng.gen_bool(0.5) {
            Term::Placeholder
        } else {
            let ret = if self.rng.gen_bool(0.5) { Term::cnst("N") } else { Term::Placeholder };
            Term::Lambda(name("_"), Box::new(Term::cnst(ind)), Box::new(ret))
        };
        let branches = if on_n {
            vec![
                Branch { ctor: name("O"), binders: vec![], body: self.term(d, scope) },
                Branch {
                    ctor: name("S"),
                    binders: vec![(name("p"), Term::Placeholder)],
                    body: self.term(d, scope + 1),
                },
            ]
        } else {
            vec![
                Branch { ctor: name("true"), binders: vec![], body: self.term(d, scope) },
                Branch { ctor: name("false"), binders: vec![], body: self.term(d, scope) },
            ]
        };
        Term::Match(Box::new(Match { scrutinee: self.term(d, scope), ind: name(ind), params: 0, motive, branches }))
    }
}
