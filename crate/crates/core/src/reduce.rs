//! Weak-head reduction and conversion.

use thiserror::Error;

use crate::env::GlobalEnv;
use crate::term::{alpha_eq, Context, Name, ProofProblem, Sort, Substitution, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReduceError {
    #[error("reduction exceeded the step budget of {0}")]
    Fuel(u64),
}

/// Conversion and unification mode: `Cumulative` allows universe subtyping
/// from left to right, `Exact` does not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Cumulative,
    Exact,
}

/// Which rule fired at the head, reported by [`Machine::whd_step`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rule {
    Beta,
    Zeta,
    DeltaConst,
    DeltaMeta,
    Iota,
    Mu,
    Nu,
}

/// A read-only view of `(E, P, S)` for reduction and conversion.
#[derive(Clone, Copy)]
pub struct Machine<'a> {
    pub env: &'a GlobalEnv,
    pub p: &'a ProofProblem,
    pub s: &'a Substitution,
}

impl<'a> Machine<'a> {
    pub fn new(env: &'a GlobalEnv, p: &'a ProofProblem, s: &'a Substitution) -> Self {
        Machine { env, p, s }
    }

    pub fn whd(&self, ctx: &Context, t: &Term) -> Result<Term, ReduceError> {
        let mut fuel = self.env.max_steps;
        self.whd_fuel(ctx, t, &mut fuel)
    }

    fn tick(&self, fuel: &mut u64) -> Result<(), ReduceError> {
        if *fuel == 0 {
            return Err(ReduceError::Fuel(self.env.max_steps));
        }
        *fuel -= 1;
        Ok(())
    }

    fn whd_fuel(&self, ctx: &Context, t: &Term, fuel: &mut u64) -> Result<Term, ReduceError> {
        let (mut head, mut stack) = match t {
            Term::App(h, a) => ((**h).clone(), a.clone()),
            _ => (t.clone(), Vec::new()),
        };
        loop {
            self.tick(fuel)?;
            match self.step(ctx, head, &mut stack, fuel)? {
                Ok(next) => head = next,
                Err(stuck) => return Ok(Term::app(stuck, stack)),
            }
        }
    }

    /// One head step on `head` applied to `stack`; `Err(head)` when stuck.
    fn step(
        &self,
        ctx: &Context,
        head: Term,
        stack: &mut Vec<Term>,
        fuel: &mut u64,
    ) -> Result<Result<Term, Term>, ReduceError> {
        Ok(match self.step_rule(ctx, head, stack, fuel)? {
            Ok((t, _)) => Ok(t),
            Err(h) => Err(h),
        })
    }

    fn step_rule(
        &self,
        ctx: &Context,
        head: Term,
        stack: &mut Vec<Term>,
        fuel: &mut u64,
    ) -> Result<Result<(Term, Rule), Term>, ReduceError> {
        match head {
            Term::App(h, a) => {
                let mut a = a;
                a.append(stack);
                *stack = a;
                self.step_rule(ctx, *h, stack, fuel)
            }
            Term::Lambda(_, _, b) if !stack.is_empty() => {
                let arg = stack.remove(0);
                Ok(Ok((b.instantiate1(&arg), Rule::Beta)))
            }
            Term::LetIn(_, _, d, b) => Ok(Ok((b.instantiate1(&d), Rule::Zeta))),
            Term::Rel(i) => match ctx.def_of(i) {
                Some(d) => Ok(Ok((d, Rule::Zeta))),
                None => Ok(Err(Term::Rel(i))),
            },
            Term::Meta(j, sigma) => match self.s.get(&j) {
                Some(def) => Ok(Ok((def.body.subst_many(&sigma), Rule::DeltaMeta))),
                None => Ok(Err(Term::Meta(j, sigma))),
            },
            Term::Const(c) => {
                if let Some(body) = self.env.definition(&c) {
                    return Ok(Ok((body.clone(), Rule::DeltaConst)));
                }
                if let Some(def) = self.env.fix(&c) {
                    let r = def.rec_arg;
                    if stack.len() > r {
                        let arg = self.whd_fuel(ctx, &stack[r], fuel)?;
                        if self.is_constructor_app(&arg) {
                            stack[r] = arg;
                            return Ok(Ok((def.unfolded(), Rule::Mu)));
                        }
                    }
                }
                Ok(Err(Term::Const(c)))
            }
            Term::Match(m) => {
                let sc = self.whd_fuel(ctx, &m.scrutinee, fuel)?;
                let sc = match sc.head() {
                    Term::Const(g) if self.env.cofix(g).is_some() => {
                        let def = self.env.cofix(g).unwrap();
                        let unfolded = Term::app(def.unfolded(), sc.args().to_vec());
                        let u = self.whd_fuel(ctx, &unfolded, fuel)?;
                        if self.is_constructor_app(&u) {
                            let mut m2 = (*m).clone();
                            m2.scrutinee = u;
                            return Ok(Ok((Term::Match(Box::new(m2)), Rule::Nu)));
                        }
                        sc
                    }
                    _ => sc,
                };
                if let Term::Const(k) = sc.head() {
                    if let Some(ci) = self.env.constructor(k) {
                        if ci.ind == m.ind {
                            let args = sc.args();
                            if let Some(br) = m.branches.get(ci.index) {
                                if args.len() >= m.params && args.len() - m.params == br.binders.len() {
                                    let body = br.body.subst_many(&args[m.params..]);
                                    return Ok(Ok((body, Rule::Iota)));
                                }
                            }
                        }
                    }
                }
                Ok(Err(Term::Match(m)))
            }
            h => Ok(Err(h)),
        }
    }

    /// Performs one head reduction step and names the rule, or `None` if the
    /// term is in weak head normal form.
    pub fn whd_step(&self, ctx: &Context, t: &Term) -> Result<Option<(Term, Rule)>, ReduceError> {
        let mut fuel = self.env.max_steps;
        let (head, mut stack) = match t {
            Term::App(h, a) => ((**h).clone(), a.clone()),
            _ => (t.clone(), Vec::new()),
        };
        Ok(match self.step_rule(ctx, head, &mut stack, &mut fuel)? {
            Ok((next, rule)) => Some((Term::app(next, stack), rule)),
            Err(_) => None,
        })
    }

    pub fn is_constructor_app(&self, t: &Term) -> bool {
        matches!(t.head(), Term::Const(k) if self.env.constructor(k).is_some())
    }

    /// Peels up to `n` products, reducing at each step.
    pub fn whd_prods(&self, ctx: &Context, t: &Term, n: usize) -> Result<(Vec<(Name, Term)>, Term), ReduceError> {
        let mut ctx = ctx.clone();
        let mut tele = Vec::new();
        let mut cur = t.clone();
        while tele.len() < n {
            match self.whd(&ctx, &cur)? {
                Term::Prod(x, a, b) => {
                    ctx.push_decl(x.clone(), (*a).clone());
                    tele.push((x, *a));
                    cur = *b;
                }
                other => return Ok((tele, other)),
            }
        }
        Ok((tele, cur))
    }

    /// The largest sort an open sort meta may stand for.
    pub fn sort_meta_bound(&self, j: usize) -> Result<Sort, ReduceError> {
        let d = &self.p[&j];
        Ok(match self.whd(&d.ctx, &d.ty)? {
            Term::Sort(Sort::Type(w)) => match self.env.univ.pred(&w) {
                Some(u) => Sort::Type(u),
                None => Sort::Prop,
            },
            _ => Sort::top(),
        })
    }

    pub fn convert(&self, ctx: &Context, a: &Term, b: &Term, mode: Mode) -> Result<bool, ReduceError> {
        if alpha_eq(a, b) {
            return Ok(true);
        }
        let a = self.whd(ctx, a)?;
        let b = self.whd(ctx, b)?;
        self.convert_whnf(ctx, &a, &b, mode)
    }

    fn convert_whnf(&self, ctx: &Context, a: &Term, b: &Term, mode: Mode) -> Result<bool, ReduceError> {
        if alpha_eq(a, b) {
            return Ok(true);
        }
        let u = &self.env.univ;
        Ok(match (a, b) {
            (Term::Sort(s), Term::Sort(t)) => match mode {
                Mode::Cumulative => u.sort_leq(s, t),
                Mode::Exact => u.sort_eq(s, t),
            },
            // every admissible instance of an open sort meta lies below its bound
            (Term::Meta(j, _), Term::Sort(t)) if mode == Mode::Cumulative && self.p.get(j).is_some_and(|d| d.sort) => {
                u.sort_leq(&self.sort_meta_bound(*j)?, t)
            }
            (Term::Prod(x, a1, b1), Term::Prod(_, a2, b2)) => {
                self.convert(ctx, a1, a2, Mode::Exact)?
                    && self.convert(&ctx.with_decl(x.clone(), (**a1).clone()), b1, b2, mode)?
            }
            (Term::Lambda(x, a1, b1), Term::Lambda(_, _, b2)) => {
                self.convert(&ctx.with_decl(x.clone(), (**a1).clone()), b1, b2, Mode::Exact)?
            }
            (Term::App(h1, a1), Term::App(h2, a2)) => {
                if a1.len() != a2.len() || !self.convert_whnf(ctx, h1, h2, Mode::Exact)? {
                    return Ok(false);
                }
                for (x, y) in a1.iter().zip(a2) {
                    if !self.convert(ctx, x, y, Mode::Exact)? {
                        return Ok(false);
                    }
                }
                true
            }
            (Term::Meta(i, s1), Term::Meta(j, s2)) => {
                if i != j || s1.len() != s2.len() {
                    return Ok(false);
                }
                for (x, y) in s1.iter().zip(s2) {
                    if !self.convert(ctx, x, y, Mode::Exact)? {
                        return Ok(false);
                    }
                }
                true
            }
            (Term::Match(m1), Term::Match(m2)) => {
                if m1.ind != m2.ind || m1.branches.len() != m2.branches.len() {
                    return Ok(false);
                }
                if !self.convert(ctx, &m1.scrutinee, &m2.scrutinee, mode)?
                    || !self.convert(ctx, &m1.motive, &m2.motive, mode)?
                {
                    return Ok(false);
                }
                for (b1, b2) in m1.branches.iter().zip(&m2.branches) {
                    if b1.binders.len() != b2.binders.len() {
                        return Ok(false);
                    }
                    let mut c = ctx.clone();
                    for (x, t) in &b1.binders {
                        c.push_decl(x.clone(), t.clone());
                    }
                    if !self.convert(&c, &b1.body, &b2.body, mode)? {
                        return Ok(false);
                    }
                }
                true
            }
            _ => false,
        })
    }

    /// Full normal form; only used by tests and diagnostics.
    pub fn nf(&self, ctx: &Context, t: &Term) -> Result<Term, ReduceError> {
        let t = self.whd(ctx, t)?;
        Ok(match t {
            Term::App(h, a) => {
                let h = self.nf(ctx, &h)?;
                let a = a.iter().map(|x| self.nf(ctx, x)).collect::<Result<Vec<_>, _>>()?;
                Term::app(h, a)
            }
            Term::Lambda(x, a, b) => {
                let c = ctx.with_decl(x.clone(), (*a).clone());
                Term::Lambda(x, Box::new(self.nf(ctx, &a)?), Box::new(self.nf(&c, &b)?))
            }
            Term::Prod(x, a, b) => {
                let c = ctx.with_decl(x.clone(), (*a).clone());
                Term::Prod(x, Box::new(self.nf(ctx, &a)?), Box::new(self.nf(&c, &b)?))
            }
            Term::Meta(j, s) => Term::Meta(j, s.iter().map(|x| self.nf(ctx, x)).collect::<Result<Vec<_>, _>>()?),
            other => other,
        })
    }
}

/// Free-function form of [`Machine::whd`].
pub fn whd(env: &GlobalEnv, p: &ProofProblem, s: &Substitution, ctx: &Context, t: &Term) -> Result<Term, ReduceError> {
    Machine::new(env, p, s).whd(ctx, t)
}

/// Free-function form of [`Machine::whd_prods`].
pub fn whd_prods(
    env: &GlobalEnv,
    p: &ProofProblem,
    s: &Substitution,
    ctx: &Context,
    t: &Term,
    n: usize,
) -> Result<(Vec<(Name, Term)>, Term), ReduceError> {
    Machine::new(env, p, s).whd_prods(ctx, t, n)
}

/// Free-function form of [`Machine::convert`].
pub fn convert(
    env: &GlobalEnv,
    p: &ProofProblem,
    s: &Substitution,
    ctx: &Context,
    a: &Term,
    b: &Term,
    mode: Mode,
) -> Result<bool, ReduceError> {
    Machine::new(env, p, s).convert(ctx, a, b, mode)
}
