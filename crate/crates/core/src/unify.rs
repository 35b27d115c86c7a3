//! Greedy unification over `(P, S)`: structural decomposition, pattern
//! inversion with pruning, first-order approximation, then reduction.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::env::{lam_telescope, GlobalEnv};
use crate::kernel::{Kernel, KernelError, SortInfo};
use crate::pretty::show_ctx;
use crate::reduce::{Machine, Mode, ReduceError};
use crate::term::{
    alpha_eq, apply_subst, check_valid_state, collect_metas, metas_of, Branch, Context, Entry, Match, MetaDecl,
    MetaDef, ProofProblem, Sort, Substitution, Term,
};

/// The refinement state threaded through unification and the refiner.
#[derive(Clone, Debug, Default)]
pub struct State {
    pub p: ProofProblem,
    pub s: Substitution,
    next: usize,
}

impl State {
    pub fn new() -> State {
        State::default()
    }

    pub fn from_parts(p: ProofProblem, s: Substitution) -> State {
        let next = p.keys().chain(s.keys()).max().map_or(0, |m| m + 1);
        State { p, s, next }
    }

    pub fn fresh(&mut self, ctx: &Context, ty: Term, sort: bool) -> usize {
        let j = self.next;
        self.next += 1;
        self.p.insert(j, MetaDecl { ctx: ctx.clone(), ty, sort });
        j
    }

    /// A fresh meta applied to the identity substitution of `ctx`.
    pub fn fresh_term(&mut self, ctx: &Context, ty: Term, sort: bool) -> Term {
        let j = self.fresh(ctx, ty, sort);
        Term::Meta(j, ctx.identity())
    }

    pub fn machine<'a>(&'a self, env: &'a GlobalEnv) -> Machine<'a> {
        Machine::new(env, &self.p, &self.s)
    }

    pub fn kernel<'a>(&'a self, env: &'a GlobalEnv) -> Kernel<'a> {
        Kernel::new(env, &self.p, &self.s)
    }

    /// Context and type of a meta, open or assigned.
    pub fn decl(&self, j: usize) -> Option<(&Context, &Term)> {
        match (self.p.get(&j), self.s.get(&j)) {
            (Some(d), _) => Some((&d.ctx, &d.ty)),
            (None, Some(d)) => Some((&d.ctx, &d.ty)),
            _ => None,
        }
    }

    pub fn is_sort_meta(&self, j: usize) -> bool {
        self.p.get(&j).is_some_and(|d| d.sort)
    }

    pub fn zonk(&self, t: &Term) -> Term {
        apply_subst(&self.s, t)
    }

    pub fn zonk_all(&self, ts: &[Term]) -> Vec<Term> {
        ts.iter().map(|t| self.zonk(t)).collect()
    }

    pub fn well_formed(&self) -> bool {
        check_valid_state(&self.p, &self.s)
    }

    /// `(P', S') ≤ (P, S)`: assignments only grow and old metas stay declared.
    pub fn refines(&self, old: &State) -> bool {
        old.s.iter().all(|(j, d)| self.s.get(j).is_some_and(|e| alpha_eq(&e.body, &d.body)))
            && old.p.keys().all(|j| self.p.contains_key(j) || self.s.contains_key(j))
    }

    /// Records `?j := body` without any check.
    pub fn assign_unchecked(&mut self, j: usize, body: Term) {
        if let Some(d) = self.p.remove(&j) {
            self.s.insert(j, MetaDef { ctx: d.ctx, body, ty: d.ty });
        }
    }

    pub fn flag_sort(&mut self, j: usize) {
        if let Some(d) = self.p.get_mut(&j) {
            d.sort = true;
        }
    }

    /// The index the next fresh meta will get.
    pub fn next_index(&self) -> usize {
        self.next
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UnifyError {
    #[error("cannot unify `{0}` with `{1}`")]
    Mismatch(String, String),
    #[error("?{0} occurs in `{1}`")]
    Occurs(usize, String),
    #[error("assignment would make the metavariable order cyclic")]
    Cyclic,
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl UnifyError {
    pub fn is_fuel(&self) -> bool {
        matches!(self, UnifyError::Reduce(_) | UnifyError::Kernel(KernelError::Reduce(_)))
    }
}

type UResult<T> = Result<T, UnifyError>;

/// Unifies `a` with `b` (`a ≤ b` in cumulative mode). On failure the state is
/// left unchanged.
pub fn unify(env: &GlobalEnv, st: &mut State, ctx: &Context, a: &Term, b: &Term, mode: Mode) -> UResult<()> {
    let saved = st.clone();
    let r = Unifier::new(env).unify(st, ctx, a, b, mode);
    if r.is_err() {
        *st = saved;
    }
    r
}

/// Checks that the type `t` lives in the sort `e` (a sort or a sort meta),
/// component-wise on products, tightening sort metas where needed.
pub fn fit_in_sort(env: &GlobalEnv, st: &mut State, ctx: &Context, t: &Term, e: &Term) -> UResult<()> {
    let saved = st.clone();
    let r = Unifier::new(env).fit_in_sort(st, ctx, t, e);
    if r.is_err() {
        *st = saved;
    }
    r
}

/// Replaces subterms of `t` (in `ctx`) that are α-equal to entries of `sigma`
/// by the matching variable of the meta context. Returns `None` if some free
/// variable of `t` has no preimage.
pub fn invert_projections(sigma: &[Term], ctx: &Context, t: &Term) -> Option<Term> {
    invert_plain(sigma, ctx, t, 0)
}

fn invert_plain(sigma: &[Term], ctx: &Context, t: &Term, d: usize) -> Option<Term> {
    if let Some(p) = projection(sigma, t, d) {
        return Some(p);
    }
    let go = |u: &Term, k: usize| invert_plain(sigma, ctx, u, d + k);
    Some(match t {
        Term::Rel(i) if *i < d => Term::Rel(*i),
        Term::Rel(i) => {
            let def = ctx.def_of(i - d)?;
            return invert_plain(sigma, ctx, &def.lift(d), d);
        }
        Term::Meta(k, tau) => Term::Meta(*k, tau.iter().map(|x| go(x, 0)).collect::<Option<_>>()?),
        _ => map_children(t, &mut |u, k| go(u, k))?,
    })
}

/// `Rel` of the last `sigma` entry α-equal to `t` (seen under `d` binders).
fn projection(sigma: &[Term], t: &Term, d: usize) -> Option<Term> {
    if matches!(t, Term::Rel(i) if *i < d) {
        return None;
    }
    let fv = t.free_rels();
    if fv.iter().any(|i| *i < d) {
        return None;
    }
    let t0 = if d == 0 { t.clone() } else { t.lower_from(0, d) };
    let n = sigma.len();
    sigma.iter().rposition(|s| alpha_eq(s, &t0)).map(|p| Term::Rel(n - 1 - p + d))
}

/// Rebuilds `t` from its children, `f(child, binders_added)`.
fn map_children(t: &Term, f: &mut dyn FnMut(&Term, usize) -> Option<Term>) -> Option<Term> {
    Some(match t {
        Term::Rel(_) | Term::Const(_) | Term::Sort(_) => t.clone(),
        Term::Placeholder | Term::PlaceholderVec => return None,
        Term::Meta(k, tau) => Term::Meta(*k, tau.iter().map(|x| f(x, 0)).collect::<Option<_>>()?),
        Term::App(h, a) => Term::app(f(h, 0)?, a.iter().map(|x| f(x, 0)).collect::<Option<_>>()?),
        Term::Lambda(x, a, b) => Term::Lambda(x.clone(), Box::new(f(a, 0)?), Box::new(f(b, 1)?)),
        Term::Prod(x, a, b) => Term::Prod(x.clone(), Box::new(f(a, 0)?), Box::new(f(b, 1)?)),
        Term::LetIn(x, a, v, b) => Term::LetIn(x.clone(), Box::new(f(a, 0)?), Box::new(f(v, 0)?), Box::new(f(b, 1)?)),
        Term::Match(m) => {
            let mut branches = Vec::new();
            for br in &m.branches {
                let mut binders = Vec::new();
                for (i, (x, ty)) in br.binders.iter().enumerate() {
                    binders.push((x.clone(), f(ty, i)?));
                }
                branches.push(Branch { ctor: br.ctor.clone(), binders, body: f(&br.body, br.binders.len())? });
            }
            Term::Match(Box::new(Match {
                scrutinee: f(&m.scrutinee, 0)?,
                ind: m.ind.clone(),
                params: m.params,
                motive: f(&m.motive, 0)?,
                branches,
            }))
        }
    })
}

/// A flexible term: an open meta, possibly applied.
struct Flex {
    j: usize,
    sigma: Vec<Term>,
    args: Vec<Term>,
}

impl Flex {
    fn of(st: &State, t: &Term) -> Option<Flex> {
        match t {
            Term::Meta(j, s) if st.p.contains_key(j) => Some(Flex { j: *j, sigma: s.clone(), args: Vec::new() }),
            Term::App(h, a) => match &**h {
                Term::Meta(j, s) if st.p.contains_key(j) => Some(Flex { j: *j, sigma: s.clone(), args: a.clone() }),
                _ => None,
            },
            _ => None,
        }
    }

    fn head(&self) -> Term {
        Term::Meta(self.j, self.sigma.clone())
    }
}

struct Unifier<'e> {
    env: &'e GlobalEnv,
    steps: u64,
}

impl<'e> Unifier<'e> {
    fn new(env: &'e GlobalEnv) -> Self {
        Unifier { env, steps: 0 }
    }

    fn tick(&mut self) -> UResult<()> {
        self.steps += 1;
        if self.steps > self.env.max_steps {
            return Err(ReduceError::Fuel(self.env.max_steps).into());
        }
        Ok(())
    }

    fn mismatch(&self, st: &State, ctx: &Context, a: &Term, b: &Term) -> UnifyError {
        UnifyError::Mismatch(show_ctx(ctx, &st.zonk(a)), show_ctx(ctx, &st.zonk(b)))
    }

    /// Instantiates assigned metas at the head.
    fn head_norm(&self, st: &State, t: &Term) -> Term {
        let mut t = t.clone();
        loop {
            let next = match &t {
                Term::Meta(j, s) => st.s.get(j).map(|d| d.body.subst_many(s)),
                Term::App(h, a) => match &**h {
                    Term::Meta(j, s) => st.s.get(j).map(|d| d.body.subst_many(s).beta_apply(a)),
                    _ => None,
                },
                _ => None,
            };
            match next {
                Some(n) => t = n,
                None => return t,
            }
        }
    }

    fn whd(&self, st: &State, ctx: &Context, t: &Term) -> UResult<Term> {
        Ok(st.machine(self.env).whd(ctx, t)?)
    }

    fn unify(&mut self, st: &mut State, ctx: &Context, a: &Term, b: &Term, mode: Mode) -> UResult<()> {
        self.tick()?;
        let a = self.head_norm(st, a);
        let b = self.head_norm(st, b);
        if alpha_eq(&a, &b) {
            return Ok(());
        }
        match (Flex::of(st, &a), Flex::of(st, &b)) {
            (Some(fa), Some(fb)) => self.flex_flex(st, ctx, fa, fb, &a, &b, mode),
            (Some(fa), None) => self.flex_rigid(st, ctx, fa, &a, &b, mode, true),
            (None, Some(fb)) => self.flex_rigid(st, ctx, fb, &b, &a, mode, false),
            (None, None) => self.rigid(st, ctx, &a, &b, mode),
        }
    }

    fn rigid(&mut self, st: &mut State, ctx: &Context, a: &Term, b: &Term, mode: Mode) -> UResult<()> {
        let saved = st.clone();
        let err = match self.rigid_struct(st, ctx, a, b, mode) {
            Ok(()) => return Ok(()),
            Err(e) if e.is_fuel() => return Err(e),
            Err(e) => e,
        };
        *st = saved;
        let a2 = self.whd(st, ctx, a)?;
        let b2 = self.whd(st, ctx, b)?;
        if !alpha_eq(&a2, a) || !alpha_eq(&b2, b) {
            return self.unify(st, ctx, &a2, &b2, mode);
        }
        Err(err)
    }

    fn rigid_struct(&mut self, st: &mut State, ctx: &Context, a: &Term, b: &Term, mode: Mode) -> UResult<()> {
        let univ = &self.env.univ;
        match (a, b) {
            (Term::Sort(s), Term::Sort(t)) => {
                let ok = match mode {
                    Mode::Cumulative => univ.sort_leq(s, t),
                    Mode::Exact => univ.sort_eq(s, t),
                };
                if ok {
                    Ok(())
                } else {
                    Err(self.mismatch(st, ctx, a, b))
                }
            }
            (Term::Rel(i), Term::Rel(j)) if i == j => Ok(()),
            (Term::Const(c), Term::Const(d)) if c == d => Ok(()),
            (Term::Prod(x, a1, b1), Term::Prod(_, a2, b2)) => {
                self.unify(st, ctx, a1, a2, Mode::Exact)?;
                self.unify(st, &ctx.with_decl(x.clone(), (**a1).clone()), b1, b2, mode)
            }
            (Term::Lambda(x, a1, b1), Term::Lambda(_, a2, b2)) => {
                let saved = st.clone();
                if let Err(e) = self.unify(st, ctx, a1, a2, Mode::Exact) {
                    if e.is_fuel() {
                        return Err(e);
                    }
                    *st = saved;
                }
                self.unify(st, &ctx.with_decl(x.clone(), (**a1).clone()), b1, b2, Mode::Exact)
            }
            (Term::App(h1, a1), Term::App(h2, a2)) if a1.len() == a2.len() => {
                self.unify(st, ctx, h1, h2, Mode::Exact)?;
                for (x, y) in a1.iter().zip(a2) {
                    self.unify(st, ctx, x, y, Mode::Exact)?;
                }
                Ok(())
            }
            (Term::Match(m1), Term::Match(m2)) if m1.ind == m2.ind && m1.branches.len() == m2.branches.len() => {
                self.unify(st, ctx, &m1.scrutinee, &m2.scrutinee, Mode::Exact)?;
                self.unify(st, ctx, &m1.motive, &m2.motive, Mode::Exact)?;
                for (b1, b2) in m1.branches.iter().zip(&m2.branches) {
                    if b1.binders.len() != b2.binders.len() {
                        return Err(self.mismatch(st, ctx, a, b));
                    }
                    let mut c = ctx.clone();
                    for ((x, t1), (_, t2)) in b1.binders.iter().zip(&b2.binders) {
                        self.unify(st, &c, t1, t2, Mode::Exact)?;
                        c.push_decl(x.clone(), t1.clone());
                    }
                    self.unify(st, &c, &b1.body, &b2.body, Mode::Exact)?;
                }
                Ok(())
            }
            _ => Err(self.mismatch(st, ctx, a, b)),
        }
    }

    /// `f` is the flexible side, `t` the other; `flex_left` tells which side of
    /// `≤` the meta is on.
    #[allow(clippy::too_many_arguments)]
    fn flex_rigid(
        &mut self,
        st: &mut State,
        ctx: &Context,
        f: Flex,
        ft: &Term,
        t: &Term,
        mode: Mode,
        flex_left: bool,
    ) -> UResult<()> {
        if st.is_sort_meta(f.j) {
            if !f.args.is_empty() {
                return Err(self.mismatch(st, ctx, ft, t));
            }
            let tw = self.whd(st, ctx, t)?;
            let Term::Sort(s) = &tw else {
                if Flex::of(st, &tw).is_some() {
                    return self.unify(st, ctx, ft, &tw, mode);
                }
                return Err(self.mismatch(st, ctx, ft, t));
            };
            let bound = st.kernel(self.env).meta_sort_bound(f.j);
            let univ = &self.env.univ;
            let value = match mode {
                Mode::Cumulative if flex_left => {
                    if univ.sort_leq(s, &bound) {
                        s.clone()
                    } else if univ.sort_leq(&bound, s) {
                        bound
                    } else {
                        return Err(self.mismatch(st, ctx, ft, t));
                    }
                }
                _ => s.clone(),
            };
            return self.assign(st, f.j, Term::Sort(value));
        }
        let saved = st.clone();
        let first = self.solve_pattern(st, ctx, &f, t);
        let err = match first {
            Ok(()) => return Ok(()),
            Err(e) if e.is_fuel() => return Err(e),
            Err(e) => e,
        };
        *st = saved.clone();
        // first-order approximation: peel the trailing arguments
        if !f.args.is_empty() {
            if let Term::App(h, targs) = t {
                if targs.len() >= f.args.len() {
                    let k = targs.len() - f.args.len();
                    let thead = Term::app((**h).clone(), targs[..k].to_vec());
                    let r = (|| -> UResult<()> {
                        self.unify(st, ctx, &f.head(), &thead, Mode::Exact)?;
                        for (x, y) in f.args.iter().zip(&targs[k..]) {
                            self.unify(st, ctx, x, y, Mode::Exact)?;
                        }
                        Ok(())
                    })();
                    match r {
                        Ok(()) => return Ok(()),
                        Err(e) if e.is_fuel() => return Err(e),
                        Err(_) => *st = saved.clone(),
                    }
                }
            }
        }
        let tw = self.whd(st, ctx, t)?;
        if !alpha_eq(&tw, t) {
            return if flex_left { self.unify(st, ctx, ft, &tw, mode) } else { self.unify(st, ctx, &tw, ft, mode) };
        }
        Err(err)
    }

    /// `?j[σ] x⃗ ≡ t` by inverting `σ, x⃗` on `t`.
    fn solve_pattern(&mut self, st: &mut State, ctx: &Context, f: &Flex, t: &Term) -> UResult<()> {
        let t = st.zonk(t);
        if f.args.is_empty() {
            let body = self.invert(st, ctx, f.j, &f.sigma, &t, 0)?;
            return self.assign(st, f.j, body);
        }
        let distinct_vars = f
            .args
            .iter()
            .enumerate()
            .all(|(i, a)| matches!(a, Term::Rel(_)) && !f.args[..i].iter().any(|b| alpha_eq(a, b)));
        if !distinct_vars {
            return Err(self.mismatch(st, ctx, &f.head(), &t));
        }
        let d = st.p[&f.j].clone();
        let (tele, _) = st.machine(self.env).whd_prods(&d.ctx, &d.ty, f.args.len())?;
        if tele.len() < f.args.len() {
            return Err(self.mismatch(st, ctx, &f.head(), &t));
        }
        let mut sigma = f.sigma.clone();
        sigma.extend(f.args.iter().cloned());
        let body = self.invert(st, ctx, f.j, &sigma, &t, 0)?;
        self.assign(st, f.j, lam_telescope(&tele, body))
    }

    /// Inverse of the local substitution `sigma` on `t`, preferring projections,
    /// pruning metas whose substitutions mention variables outside the image.
    #[allow(clippy::too_many_arguments)]
    fn invert(&mut self, st: &mut State, ctx: &Context, j: usize, sigma: &[Term], t: &Term, d: usize) -> UResult<Term> {
        self.tick()?;
        if let Some(p) = projection(sigma, t, d) {
            return Ok(p);
        }
        let fail = |st: &State, this: &Self| this.mismatch(st, ctx, &Term::Meta(j, sigma.to_vec()), t);
        match t {
            Term::Rel(i) if *i < d => Ok(Term::Rel(*i)),
            Term::Rel(i) => match ctx.def_of(i - d) {
                Some(def) => self.invert(st, ctx, j, sigma, &def.lift(d), d),
                None => Err(fail(st, self)),
            },
            Term::Meta(k, _) if *k == j => Err(UnifyError::Occurs(j, show_ctx(ctx, t))),
            Term::Meta(k, tau) => {
                let mut kept = Vec::new();
                let mut keep = Vec::new();
                for x in tau {
                    match self.invert(st, ctx, j, sigma, x, d) {
                        Ok(y) => {
                            kept.push(y);
                            keep.push(true);
                        }
                        Err(e) if e.is_fuel() || matches!(e, UnifyError::Occurs(..)) => return Err(e),
                        Err(_) => keep.push(false),
                    }
                }
                if keep.iter().all(|b| *b) {
                    return Ok(Term::Meta(*k, kept));
                }
                let k2 = self.prune(st, *k, &keep).ok_or_else(|| fail(st, self))?;
                Ok(Term::Meta(k2, kept))
            }
            Term::Placeholder | Term::PlaceholderVec => Err(fail(st, self)),
            _ => {
                let mut err = None;
                let out = map_children(t, &mut |u, k| match self.invert(st, ctx, j, sigma, u, d + k) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        err.get_or_insert(e);
                        None
                    }
                });
                match (out, err) {
                    (Some(v), _) => Ok(v),
                    (None, Some(e)) => Err(e),
                    (None, None) => Err(fail(st, self)),
                }
            }
        }
    }

    /// Restricts open meta `k` to the context positions marked in `keep`;
    /// returns the new meta, or `None` if a kept entry or the type depends on
    /// a dropped one.
    fn prune(&mut self, st: &mut State, k: usize, keep: &[bool]) -> Option<usize> {
        let d = st.p.get(&k)?.clone();
        let n = d.ctx.len();
        if keep.len() != n {
            return None;
        }
        // new position of each old position
        let mut newpos = vec![None; n];
        let mut m = 0;
        for (i, kp) in keep.iter().enumerate() {
            if *kp {
                newpos[i] = Some(m);
                m += 1;
            }
        }
        // rename a term living under the first `upto` old entries
        let rename = |t: &Term, upto: usize| -> Option<Term> {
            let new_len = newpos[..upto].iter().filter(|p| p.is_some()).count();
            let bad = std::cell::Cell::new(false);
            let r = crate::term::map_rels(t, 0, &|i, dep| {
                let var = i - dep;
                if var >= upto {
                    bad.set(true);
                    return Term::Rel(i);
                }
                let old = upto - 1 - var;
                match newpos[old] {
                    Some(np) => Term::Rel(new_len - 1 - np + dep),
                    None => {
                        bad.set(true);
                        Term::Rel(i)
                    }
                }
            });
            if bad.get() {
                None
            } else {
                Some(r)
            }
        };
        let mut entries = Vec::new();
        for (i, e) in d.ctx.entries.iter().enumerate() {
            if keep[i] {
                let ty = rename(&e.ty, i)?;
                let def = match &e.def {
                    Some(v) => Some(rename(v, i)?),
                    None => None,
                };
                entries.push(Entry { name: e.name.clone(), ty, def });
            }
        }
        let ty = rename(&d.ty, n)?;
        let c2 = Context { entries };
        let k2 = st.fresh(&c2, ty, d.sort);
        let ident: Vec<Term> = (0..n).filter(|i| keep[*i]).map(|i| Term::Rel(n - 1 - i)).collect();
        st.assign_unchecked(k, Term::Meta(k2, ident));
        Some(k2)
    }

    #[allow(clippy::too_many_arguments)]
    fn flex_flex(
        &mut self,
        st: &mut State,
        ctx: &Context,
        fa: Flex,
        fb: Flex,
        a: &Term,
        b: &Term,
        mode: Mode,
    ) -> UResult<()> {
        if fa.j == fb.j {
            if fa.args.len() != fb.args.len() || fa.sigma.len() != fb.sigma.len() {
                return Err(self.mismatch(st, ctx, a, b));
            }
            for (x, y) in fa.sigma.iter().zip(&fb.sigma).chain(fa.args.iter().zip(&fb.args)) {
                self.unify(st, ctx, x, y, Mode::Exact)?;
            }
            return Ok(());
        }
        match (fa.args.is_empty(), fb.args.is_empty()) {
            (true, true) => {}
            (true, false) => return self.flex_rigid(st, ctx, fa, a, b, mode, true),
            (false, true) => return self.flex_rigid(st, ctx, fb, b, a, mode, false),
            (false, false) => {
                if fa.args.len() != fb.args.len() {
                    return Err(self.mismatch(st, ctx, a, b));
                }
                self.unify(st, ctx, &fa.head(), &fb.head(), Mode::Exact)?;
                for (x, y) in fa.args.iter().zip(&fb.args) {
                    self.unify(st, ctx, x, y, Mode::Exact)?;
                }
                return Ok(());
            }
        }
        // decide which meta gets instantiated first
        let (sa, sb) = (st.is_sort_meta(fa.j), st.is_sort_meta(fb.j));
        let a_first = match (sa, sb) {
            (false, true) => true,
            (true, false) => false,
            (true, true) => {
                let k = st.kernel(self.env);
                let (ba, bb) = (k.meta_sort_bound(fa.j), k.meta_sort_bound(fb.j));
                let univ = &self.env.univ;
                if univ.sort_eq(&ba, &bb) {
                    self.later_in_order(st, fa.j, fb.j)
                } else {
                    univ.sort_leq(&bb, &ba)
                }
            }
            (false, false) => self.later_in_order(st, fa.j, fb.j),
        };
        let order = if a_first { [(&fa, a, b), (&fb, b, a)] } else { [(&fb, b, a), (&fa, a, b)] };
        let saved = st.clone();
        let mut last = None;
        for (f, _, other) in order {
            if st.is_sort_meta(f.j) && !sort_like_meta(st, other) {
                continue;
            }
            match self.solve_pattern(st, ctx, f, other) {
                Ok(()) => return Ok(()),
                Err(e) if e.is_fuel() => return Err(e),
                Err(e) => {
                    *st = saved.clone();
                    last = Some(e);
                }
            }
        }
        Err(last.unwrap_or_else(|| self.mismatch(st, ctx, a, b)))
    }

    /// Whether `?a` should be instantiated before `?b`: the meta that depends
    /// on the other is larger; otherwise the newer one.
    fn later_in_order(&self, st: &State, a: usize, b: usize) -> bool {
        if depends_on(st, a, b) {
            return true;
        }
        if depends_on(st, b, a) {
            return false;
        }
        a > b
    }

    /// Records `?j := body` after checking that `body` has the declared type.
    fn assign(&mut self, st: &mut State, j: usize, body: Term) -> UResult<()> {
        let d =
            st.p.get(&j).cloned().ok_or_else(|| UnifyError::Mismatch(format!("?{j}"), "an assigned meta".into()))?;
        if metas_of(&body).contains(&j) {
            return Err(UnifyError::Occurs(j, show_ctx(&d.ctx, &body)));
        }
        if d.sort && !matches!(body, Term::Sort(_)) && !sort_like_meta(st, &body) {
            return Err(UnifyError::Mismatch(format!("?{j}"), show_ctx(&d.ctx, &body)));
        }
        self.check_instance(st, &d.ctx, &body, &d.ty)?;
        if !st.p.contains_key(&j) {
            return Err(UnifyError::Mismatch(format!("?{j}"), show_ctx(&d.ctx, &body)));
        }
        let body = st.zonk(&body);
        if metas_of(&body).contains(&j) {
            return Err(UnifyError::Occurs(j, show_ctx(&d.ctx, &body)));
        }
        st.assign_unchecked(j, body);
        if !st.well_formed() {
            return Err(UnifyError::Cyclic);
        }
        Ok(())
    }

    /// Types `body` against `ty`, using the component-wise sort check when a
    /// product or sort meta is placed in a sort.
    fn check_instance(&mut self, st: &mut State, ctx: &Context, body: &Term, ty: &Term) -> UResult<()> {
        let tyw = self.whd(st, ctx, &st.zonk(ty))?;
        let sortlike = matches!(tyw, Term::Sort(_)) || sort_like_meta(st, &tyw);
        let body_z = st.zonk(body);
        if sortlike && (matches!(body_z, Term::Prod(..)) || sort_like_meta(st, &body_z)) {
            return self.fit_in_sort(st, ctx, &body_z, &tyw);
        }
        let tb = st.kernel(self.env).type_of(ctx, &body_z)?;
        self.unify(st, ctx, &tb, ty, Mode::Cumulative)
    }

    fn fit_in_sort(&mut self, st: &mut State, ctx: &Context, t: &Term, e: &Term) -> UResult<()> {
        self.tick()?;
        let t = st.zonk(t);
        let e = self.whd(st, ctx, &st.zonk(e))?;
        let univ = &self.env.univ;
        match &t {
            Term::Prod(x, a, b) => {
                if let (Ok(SortInfo::Sort(s)), Term::Sort(es)) = (st.kernel(self.env).sort_of(ctx, &t), &e) {
                    if univ.sort_leq(&s, es) {
                        return Ok(());
                    }
                }
                if !matches!(e, Term::Sort(Sort::Prop)) {
                    let sa = st.kernel(self.env).sort_of(ctx, a)?;
                    self.le_sort(st, ctx, &sa, &e)?;
                }
                let e2 = self.whd(st, ctx, &st.zonk(&e))?;
                self.fit_in_sort(st, &ctx.with_decl(x.clone(), (**a).clone()), b, &e2.lift(1))
            }
            Term::Meta(m, sigma) if st.is_sort_meta(*m) => {
                let tm = st.p[m].ty.subst_many(sigma);
                match &e {
                    Term::Sort(Sort::Type(_)) => {
                        let tmw = self.whd(st, ctx, &tm)?;
                        if let Term::Sort(s) = &tmw {
                            if let Term::Sort(es) = &e {
                                if univ.sort_leq(s, es) {
                                    return Ok(());
                                }
                            }
                        }
                        self.tighten(st, *m, e.clone())
                    }
                    _ => self.unify(st, ctx, &tm, &e, Mode::Cumulative),
                }
            }
            _ => {
                let s = st.kernel(self.env).sort_of(ctx, &t)?;
                self.le_sort(st, ctx, &s, &e)
            }
        }
    }

    /// Replaces the sort meta `?m` by a fresh one typed `ty`. When the old
    /// type is still open it must accept `ty`.
    fn tighten(&mut self, st: &mut State, m: usize, ty: Term) -> UResult<()> {
        let d = st.p[&m].clone();
        let old = self.whd(st, &d.ctx, &st.zonk(&d.ty))?;
        if !matches!(old, Term::Sort(_)) {
            self.unify(st, &d.ctx, &ty, &old, Mode::Cumulative)?;
        }
        let m2 = st.fresh(&d.ctx, ty, true);
        st.assign_unchecked(m, Term::Meta(m2, d.ctx.identity()));
        Ok(())
    }

    /// `s ≤ e` where `e` is a sort or an open sort meta (in whnf).
    fn le_sort(&mut self, st: &mut State, ctx: &Context, s: &SortInfo, e: &Term) -> UResult<()> {
        let univ = &self.env.univ;
        match (s, e) {
            (SortInfo::Sort(Sort::Prop), _) => Ok(()),
            (SortInfo::Sort(a), Term::Sort(b)) => {
                if univ.sort_leq(a, b) {
                    Ok(())
                } else {
                    Err(self.mismatch(st, ctx, &Term::Sort(a.clone()), e))
                }
            }
            (SortInfo::Sort(a), _) => self.unify(st, ctx, &Term::Sort(a.clone()), e, Mode::Cumulative),
            (SortInfo::Flex(t, bound), Term::Sort(b)) => {
                if univ.sort_leq(bound, b) {
                    return Ok(());
                }
                let Term::Meta(m, _) = t else { unreachable!("flexible sort is a meta") };
                match b {
                    Sort::Prop => self.assign(st, *m, Term::prop()),
                    Sort::Type(u) => {
                        let succ = univ.succ(u).expect("below top");
                        if univ.pred(&succ).as_deref() == Some(&**u) {
                            self.tighten(st, *m, Term::Sort(Sort::Type(succ)))
                        } else {
                            self.assign(st, *m, Term::Sort(b.clone()))
                        }
                    }
                }
            }
            (SortInfo::Flex(t, _), _) => self.unify(st, ctx, t, e, Mode::Exact),
        }
    }
}

fn sort_like_meta(st: &State, t: &Term) -> bool {
    matches!(t, Term::Meta(j, _) if st.is_sort_meta(*j))
}

/// Whether the declaration of `a` mentions `b`, transitively.
fn depends_on(st: &State, a: usize, b: usize) -> bool {
    let mut seen = BTreeMap::new();
    let mut stack = vec![a];
    while let Some(x) = stack.pop() {
        if seen.insert(x, ()).is_some() {
            continue;
        }
        let Some(d) = st.p.get(&x) else { continue };
        let mut deps = crate::term::metas_of_context(&d.ctx);
        collect_metas(&d.ty, &mut deps);
        if deps.contains(&b) {
            return true;
        }
        stack.extend(deps);
    }
    false
}
