//! Kernel type checker for internal terms and objects with metavariables.
//!
//! The kernel reads `(P, S)` but never changes them.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::env::{pi_telescope, CtorInfo, Global, GlobalEnv, IndInfo, InductiveBlock, Object, RecDef, Role};
use crate::pretty::{show_ctx, show_sort};
use crate::reduce::{Machine, Mode, ReduceError};
use crate::term::{alpha_eq, check_valid_state, name, Context, Match, Name, ProofProblem, Sort, Substitution, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KernelError {
    #[error("unbound variable #{0}")]
    Unbound(usize),
    #[error("unknown constant `{0}`")]
    UnknownConst(Name),
    #[error("undeclared metavariable ?{0}")]
    UndeclaredMeta(usize),
    #[error("local substitution of ?{0} has {1} entries, its context has {2}")]
    MetaArity(usize, usize, usize),
    #[error("unknown universe `{0}`")]
    UnknownUniverse(Name),
    #[error("Type(top) has no type")]
    TopHasNoType,
    #[error("`{0}` is not a type")]
    NotAType(String),
    #[error("`{term}` is applied but has type `{ty}`, which is not a product")]
    NotAProduct { term: String, ty: String },
    #[error("type mismatch for `{term}`: expected `{expected}`, found `{found}`")]
    Mismatch { term: String, expected: String, found: String },
    #[error("ill-formed match: {0}")]
    BadMatch(String),
    #[error("cannot eliminate {0} into {1}")]
    Elim(String, String),
    #[error("placeholder in a kernel term")]
    NotInternal,
    #[error("ill-formed inductive definition: {0}")]
    Inductive(String),
    #[error("recursive call in `{0}` is not structurally decreasing")]
    Guard(Name),
    #[error("corecursive call in `{0}` is not guarded by a constructor")]
    Productivity(Name),
    #[error("ill-formed recursive definition `{0}`: {1}")]
    RecDef(Name, String),
    #[error("`{0}` is already defined")]
    Duplicate(Name),
    #[error("the metavariable dependency order is cyclic")]
    Cyclic,
    #[error("in ?{0}: {1}")]
    InMeta(usize, Box<KernelError>),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

/// A sort, or a sort-restricted metavariable standing for one.
#[derive(Clone, Debug)]
pub enum SortInfo {
    Sort(Sort),
    /// The meta occurrence and an upper bound on what it can become.
    Flex(Term, Sort),
}

impl SortInfo {
    pub fn upper(&self) -> &Sort {
        match self {
            SortInfo::Sort(s) => s,
            SortInfo::Flex(_, u) => u,
        }
    }

    pub fn term(&self) -> Term {
        match self {
            SortInfo::Sort(s) => Term::Sort(s.clone()),
            SortInfo::Flex(t, _) => t.clone(),
        }
    }
}

/// Elimination from an inductive of sort `ind` into a motive of sort `ret`.
pub fn elim_allowed(ind: &Sort, ret: &Sort) -> bool {
    !(matches!(ind, Sort::Prop) && matches!(ret, Sort::Type(_)))
}

pub struct Kernel<'a> {
    pub m: Machine<'a>,
}

fn mismatch(ctx: &Context, t: &Term, expected: &Term, found: &Term) -> KernelError {
    KernelError::Mismatch { term: show_ctx(ctx, t), expected: show_ctx(ctx, expected), found: show_ctx(ctx, found) }
}

impl<'a> Kernel<'a> {
    pub fn new(env: &'a GlobalEnv, p: &'a ProofProblem, s: &'a Substitution) -> Self {
        Kernel { m: Machine::new(env, p, s) }
    }

    fn env(&self) -> &'a GlobalEnv {
        self.m.env
    }

    /// Classifies an already computed type of a type.
    pub fn classify_sort(&self, ctx: &Context, ty: &Term) -> Result<Option<SortInfo>, KernelError> {
        let w = self.m.whd(ctx, ty)?;
        Ok(match w {
            Term::Sort(s) => Some(SortInfo::Sort(s)),
            Term::Meta(j, sigma) => match self.m.p.get(&j) {
                Some(d) if d.sort => {
                    let upper = self.meta_sort_bound(j);
                    Some(SortInfo::Flex(Term::Meta(j, sigma), upper))
                }
                _ => None,
            },
            _ => None,
        })
    }

    /// Upper bound for a sort-restricted meta, read off its declared type.
    pub fn meta_sort_bound(&self, j: usize) -> Sort {
        self.m.sort_meta_bound(j).unwrap_or_else(|_| Sort::top())
    }

    /// The sort of a type: `T : s` with `s` a sort or a sort-restricted meta.
    pub fn sort_of(&self, ctx: &Context, t: &Term) -> Result<SortInfo, KernelError> {
        let ty = self.type_of(ctx, t)?;
        self.classify_sort(ctx, &ty)?.ok_or_else(|| KernelError::NotAType(show_ctx(ctx, t)))
    }

    /// Sort of `Π x:A.B` from the sorts of `A` and of `B` (the latter under `x`).
    pub fn pts_rule(&self, s1: &SortInfo, s2: &SortInfo) -> Term {
        let univ = &self.env().univ;
        let lowered = |t: &Term| if t.has_rel(0) { None } else { Some(t.lower_from(0, 1)) };
        let s2_upper = s2.upper().clone();
        if s2_upper == Sort::Prop {
            return Term::prop();
        }
        // max(s, s) = s, also when s is Prop
        if let (SortInfo::Flex(t1, _), SortInfo::Flex(t2, _)) = (s1, s2) {
            if let Some(t2) = lowered(t2) {
                if alpha_eq(t1, &t2) {
                    return t2;
                }
            }
        }
        let s1_upper = s1.upper().clone();
        match (&s1_upper, s2) {
            (Sort::Prop, SortInfo::Sort(s)) => Term::Sort(s.clone()),
            (Sort::Prop, SortInfo::Flex(t, u)) => lowered(t).unwrap_or(Term::Sort(u.clone())),
            (Sort::Type(a), SortInfo::Sort(Sort::Type(b))) => Term::Sort(Sort::Type(univ.max(a, b))),
            (Sort::Type(a), SortInfo::Flex(t, Sort::Type(b))) => {
                // Type(0) is the bottom universe, so the codomain sort is exact
                if &**a == "0" && matches!(s1, SortInfo::Sort(_)) {
                    if let Some(t) = lowered(t) {
                        return t;
                    }
                }
                Term::Sort(Sort::Type(univ.max(a, b)))
            }
            _ => Term::prop(),
        }
    }

    pub fn type_of(&self, ctx: &Context, t: &Term) -> Result<Term, KernelError> {
        match t {
            Term::Rel(i) => ctx.type_of(*i).ok_or(KernelError::Unbound(*i)),
            Term::Const(c) => self.env().lookup_type(c).map_err(|_| KernelError::UnknownConst(c.clone())),
            Term::Sort(Sort::Prop) => Ok(Term::ty("0")),
            Term::Sort(Sort::Type(u)) => {
                if !self.env().univ.is_declared(u) {
                    return Err(KernelError::UnknownUniverse(u.clone()));
                }
                match self.env().univ.succ(u) {
                    Some(v) => Ok(Term::Sort(Sort::Type(v))),
                    None => Err(KernelError::TopHasNoType),
                }
            }
            Term::Meta(j, sigma) => self.type_of_meta(ctx, *j, sigma),
            Term::Lambda(x, a, b) => {
                self.sort_of(ctx, a)?;
                let c = ctx.with_decl(x.clone(), (**a).clone());
                let tb = self.type_of(&c, b)?;
                Ok(Term::Prod(x.clone(), a.clone(), Box::new(tb)))
            }
            Term::Prod(x, a, b) => {
                let s1 = self.sort_of(ctx, a)?;
                let c = ctx.with_decl(x.clone(), (**a).clone());
                let s2 = self.sort_of(&c, b)?;
                Ok(self.pts_rule(&s1, &s2))
            }
            Term::LetIn(x, a, d, b) => {
                self.sort_of(ctx, a)?;
                let td = self.type_of(ctx, d)?;
                if !self.m.convert(ctx, &td, a, Mode::Cumulative)? {
                    return Err(mismatch(ctx, d, a, &td));
                }
                let c = ctx.with_def(x.clone(), (**d).clone(), (**a).clone());
                let tb = self.type_of(&c, b)?;
                Ok(tb.instantiate1(d))
            }
            Term::App(h, args) => {
                let mut ty = self.type_of(ctx, h)?;
                for (i, arg) in args.iter().enumerate() {
                    let w = self.m.whd(ctx, &ty)?;
                    let Term::Prod(_, dom, cod) = w else {
                        let partial = Term::app((**h).clone(), args[..i].to_vec());
                        return Err(KernelError::NotAProduct { term: show_ctx(ctx, &partial), ty: show_ctx(ctx, &ty) });
                    };
                    let ta = self.type_of(ctx, arg)?;
                    if !self.m.convert(ctx, &ta, &dom, Mode::Cumulative)? {
                        return Err(mismatch(ctx, arg, &dom, &ta));
                    }
                    ty = cod.instantiate1(arg);
                }
                Ok(ty)
            }
            Term::Match(m) => self.type_of_match(ctx, m),
            Term::Placeholder | Term::PlaceholderVec => Err(KernelError::NotInternal),
        }
    }

    fn type_of_meta(&self, ctx: &Context, j: usize, sigma: &[Term]) -> Result<Term, KernelError> {
        let (mctx, mty) = match (self.m.p.get(&j), self.m.s.get(&j)) {
            (Some(d), _) => (&d.ctx, &d.ty),
            (None, Some(d)) => (&d.ctx, &d.ty),
            _ => return Err(KernelError::UndeclaredMeta(j)),
        };
        if mctx.len() != sigma.len() {
            return Err(KernelError::MetaArity(j, sigma.len(), mctx.len()));
        }
        for (i, (e, u)) in mctx.entries.iter().zip(sigma).enumerate() {
            let expected = e.ty.subst_many(&sigma[..i]);
            let tu = self.type_of(ctx, u)?;
            if !self.m.convert(ctx, &tu, &expected, Mode::Cumulative)? {
                return Err(mismatch(ctx, u, &expected, &tu));
            }
            if let Some(d) = &e.def {
                let dv = d.subst_many(&sigma[..i]);
                if !self.m.convert(ctx, u, &dv, Mode::Exact)? {
                    return Err(mismatch(ctx, u, &dv, u));
                }
            }
        }
        Ok(mty.subst_many(sigma))
    }

    fn type_of_match(&self, ctx: &Context, m: &Match) -> Result<Term, KernelError> {
        let env = self.env();
        let ind = env
            .inductive(&m.ind)
            .ok_or_else(|| KernelError::BadMatch(format!("`{}` is not an inductive type", m.ind)))?
            .clone();
        let l = ind.params.len();
        let r = ind.indices.len();
        if m.params != l {
            return Err(KernelError::BadMatch(format!("`{}` has {} parameters, match says {}", m.ind, l, m.params)));
        }
        let ts = self.type_of(ctx, &m.scrutinee)?;
        let w = self.m.whd(ctx, &ts)?;
        let args = match w.head() {
            Term::Const(c) if *c == ind.name && w.args().len() == l + r => w.args().to_vec(),
            _ => {
                return Err(KernelError::BadMatch(format!(
                    "scrutinee has type `{}`, not an instance of `{}`",
                    show_ctx(ctx, &ts),
                    m.ind
                )))
            }
        };
        let (us, vs) = args.split_at(l);
        let ret_sort = self.check_motive(ctx, &ind, us, &m.motive)?;
        if !elim_allowed(&ind.sort, ret_sort.upper()) {
            return Err(KernelError::Elim(show_sort(&ind.sort), show_sort(ret_sort.upper())));
        }
        if m.branches.len() != ind.ctors.len() {
            return Err(KernelError::BadMatch(format!(
                "{} branches for {} constructors",
                m.branches.len(),
                ind.ctors.len()
            )));
        }
        for (br, kname) in m.branches.iter().zip(&ind.ctors) {
            if br.ctor != *kname {
                return Err(KernelError::BadMatch(format!("expected branch for `{}`, found `{}`", kname, br.ctor)));
            }
            let ci = env.constructor(kname).expect("constructor of a checked inductive").clone();
            let n = ci.args.len();
            if br.binders.len() != n {
                return Err(KernelError::BadMatch(format!(
                    "`{}` takes {} arguments, pattern binds {}",
                    kname,
                    n,
                    br.binders.len()
                )));
            }
            let mut c = ctx.clone();
            for (i, (x, ty)) in br.binders.iter().enumerate() {
                self.sort_of(&c, ty)?;
                let expected = ci.args[i].1.subst_many_from(i, us);
                if !self.m.convert(&c, ty, &expected, Mode::Exact)? {
                    return Err(mismatch(&c, ty, &expected, ty));
                }
                c.push_decl(x.clone(), ty.clone());
            }
            let expected = branch_type(&ci, us, &m.motive);
            let tb = self.type_of(&c, &br.body)?;
            if !self.m.convert(&c, &tb, &expected, Mode::Cumulative)? {
                return Err(mismatch(&c, &br.body, &expected, &tb));
            }
        }
        let mut margs = vs.to_vec();
        margs.push(m.scrutinee.clone());
        Ok(m.motive.beta_apply(&margs))
    }

    /// Checks `motive : Π y⃗:indices. Π x:I u⃗ y⃗. s` and returns `s`.
    fn check_motive(&self, ctx: &Context, ind: &IndInfo, us: &[Term], motive: &Term) -> Result<SortInfo, KernelError> {
        let r = ind.indices.len();
        let mut ar = pi_telescope(&ind.indices, Term::prop()).subst_many(us);
        let mut tm = self.type_of(ctx, motive)?;
        let mut c = ctx.clone();
        let bad = |what: &str| KernelError::BadMatch(format!("return clause: {what}"));
        for _ in 0..r {
            let Term::Prod(y, d, rest) = self.m.whd(&c, &ar)? else { unreachable!("index telescope") };
            let Term::Prod(_, md, mrest) = self.m.whd(&c, &tm)? else {
                return Err(bad("too few abstractions"));
            };
            if !self.m.convert(&c, &md, &d, Mode::Exact)? {
                return Err(mismatch(&c, motive, &d, &md));
            }
            c.push_decl(y, *d);
            ar = *rest;
            tm = *mrest;
        }
        let mut iargs: Vec<Term> = us.iter().map(|u| u.lift(r)).collect();
        iargs.extend((0..r).map(|k| Term::Rel(r - 1 - k)));
        let xty = Term::app(Term::Const(ind.name.clone()), iargs);
        let Term::Prod(x, md, mrest) = self.m.whd(&c, &tm)? else {
            return Err(bad("missing abstraction over the matched value"));
        };
        if !self.m.convert(&c, &md, &xty, Mode::Exact)? {
            return Err(mismatch(&c, motive, &xty, &md));
        }
        c.push_decl(x, *md);
        self.classify_sort(&c, &mrest)?.ok_or_else(|| bad("does not return a type"))
    }

    /// Checks `t : ty` (cumulatively).
    pub fn check(&self, ctx: &Context, t: &Term, ty: &Term) -> Result<(), KernelError> {
        let found = self.type_of(ctx, t)?;
        if self.m.convert(ctx, &found, ty, Mode::Cumulative)? {
            Ok(())
        } else {
            Err(mismatch(ctx, t, ty, &found))
        }
    }

    pub fn check_context(&self, ctx: &Context) -> Result<(), KernelError> {
        let mut c = Context::new();
        for e in &ctx.entries {
            self.sort_of(&c, &e.ty)?;
            if let Some(d) = &e.def {
                self.check(&c, d, &e.ty)?;
            }
            c.entries.push(e.clone());
        }
        Ok(())
    }
}

/// `motive w⃗ (k u⃗ x⃗)` under the constructor's arguments, β-reduced.
pub fn branch_type(ci: &CtorInfo, us: &[Term], motive: &Term) -> Term {
    let n = ci.args.len();
    let mut margs: Vec<Term> = ci.result_indices.iter().map(|w| w.subst_many_from(n, us)).collect();
    let mut kargs: Vec<Term> = us.iter().map(|u| u.lift(n)).collect();
    kargs.extend((0..n).map(|k| Term::Rel(n - 1 - k)));
    margs.push(Term::app(Term::Const(ci.name.clone()), kargs));
    motive.lift(n).beta_apply(&margs)
}

pub fn typecheck_term(
    env: &GlobalEnv,
    p: &ProofProblem,
    s: &Substitution,
    ctx: &Context,
    t: &Term,
) -> Result<Term, KernelError> {
    Kernel::new(env, p, s).type_of(ctx, t)
}

pub fn typecheck_context(
    env: &GlobalEnv,
    p: &ProofProblem,
    s: &Substitution,
    ctx: &Context,
) -> Result<(), KernelError> {
    Kernel::new(env, p, s).check_context(ctx)
}

/// Every open meta has a well-formed context and a type that is a type there.
pub fn typecheck_metasenv(env: &GlobalEnv, p: &ProofProblem, s: &Substitution) -> Result<(), KernelError> {
    if !check_valid_state(p, s) {
        return Err(KernelError::Cyclic);
    }
    let k = Kernel::new(env, p, s);
    for (j, d) in p {
        let wrap = |e| KernelError::InMeta(*j, Box::new(e));
        k.check_context(&d.ctx).map_err(wrap)?;
        if !d.ty.is_sort() {
            k.sort_of(&d.ctx, &d.ty).map_err(wrap)?;
        }
        if d.sort {
            match k.m.whd(&d.ctx, &d.ty).map_err(|e| wrap(e.into()))? {
                Term::Sort(_) => {}
                Term::Meta(i, _) if p.get(&i).is_some_and(|x| x.sort) => {}
                other => return Err(wrap(KernelError::NotAType(show_ctx(&d.ctx, &other)))),
            }
        }
    }
    Ok(())
}

/// Every assignment's body has its declared type in its context.
pub fn typecheck_subst(env: &GlobalEnv, p: &ProofProblem, s: &Substitution) -> Result<(), KernelError> {
    if !check_valid_state(p, s) {
        return Err(KernelError::Cyclic);
    }
    let k = Kernel::new(env, p, s);
    for (j, d) in s {
        let wrap = |e| KernelError::InMeta(*j, Box::new(e));
        k.check_context(&d.ctx).map_err(wrap)?;
        if !d.ty.is_sort() {
            k.sort_of(&d.ctx, &d.ty).map_err(wrap)?;
        }
        k.check(&d.ctx, &d.body, &d.ty).map_err(wrap)?;
    }
    Ok(())
}

/// Checks an object and returns the environment extended with it.
pub fn typecheck_obj(
    env: &GlobalEnv,
    p: &ProofProblem,
    s: &Substitution,
    o: &Object,
) -> Result<GlobalEnv, KernelError> {
    let mut seen = BTreeSet::new();
    for n in o.names() {
        if env.contains(&n) || !seen.insert(n.clone()) {
            return Err(KernelError::Duplicate(n));
        }
    }
    if !object_internal(o) {
        return Err(KernelError::NotInternal);
    }
    let mut out = match o {
        Object::Axiom { name: n, ty } => {
            let k = Kernel::new(env, p, s);
            k.sort_of(&Context::new(), ty)?;
            let mut e = env.clone();
            e.insert_global(n.clone(), Global { ty: ty.clone(), role: Role::Axiom });
            e
        }
        Object::Definition { name: n, ty, body } => {
            let k = Kernel::new(env, p, s);
            k.sort_of(&Context::new(), ty)?;
            k.check(&Context::new(), body, ty)?;
            let mut e = env.clone();
            e.insert_global(n.clone(), Global { ty: ty.clone(), role: Role::Definition(body.clone()) });
            e
        }
        Object::Inductive(b) => check_inductive(env, p, s, b)?,
        Object::LetRec(defs) => check_rec(env, p, s, defs, false)?,
        Object::LetCoRec(defs) => check_rec(env, p, s, defs, true)?,
    };
    out.push_object(o.clone());
    Ok(out)
}

fn object_internal(o: &Object) -> bool {
    let tele_ok = |t: &[(Name, Term)]| t.iter().all(|(_, x)| x.is_internal());
    match o {
        Object::Axiom { ty, .. } => ty.is_internal(),
        Object::Definition { ty, body, .. } => ty.is_internal() && body.is_internal(),
        Object::Inductive(b) => {
            tele_ok(&b.params)
                && b.types.iter().all(|t| t.arity.is_internal() && t.ctors.iter().all(|(_, c)| c.is_internal()))
        }
        Object::LetRec(ds) | Object::LetCoRec(ds) => {
            ds.iter().all(|d| tele_ok(&d.params) && d.ret.is_internal() && d.body.is_internal())
        }
    }
}

fn check_telescope(k: &Kernel, tele: &[(Name, Term)]) -> Result<Context, KernelError> {
    let mut c = Context::new();
    for (x, t) in tele {
        k.sort_of(&c, t)?;
        c.push_decl(x.clone(), t.clone());
    }
    Ok(c)
}

fn check_inductive(
    env: &GlobalEnv,
    p: &ProofProblem,
    s: &Substitution,
    b: &InductiveBlock,
) -> Result<GlobalEnv, KernelError> {
    let l = b.params.len();
    let names: Vec<Name> = b.types.iter().map(|t| t.name.clone()).collect();
    if names.is_empty() {
        return Err(KernelError::Inductive("empty block".into()));
    }
    let k = Kernel::new(env, p, s);
    let pctx = check_telescope(&k, &b.params)?;
    let mut staged = env.clone();
    let mut infos = Vec::new();
    for t in &b.types {
        k.sort_of(&pctx, &t.arity)?;
        let (indices, concl) = k.m.whd_prods(&pctx, &t.arity, usize::MAX)?;
        let Term::Sort(sort) = concl else {
            return Err(KernelError::Inductive(format!("arity of `{}` does not end in a sort", t.name)));
        };
        let info = IndInfo {
            name: t.name.clone(),
            params: b.params.clone(),
            indices,
            sort,
            ctors: t.ctors.iter().map(|c| c.0.clone()).collect(),
            coinductive: b.coinductive,
            result_params: l,
        };
        staged.insert_global(
            t.name.clone(),
            Global { ty: pi_telescope(&b.params, t.arity.clone()), role: Role::Inductive(info.clone()) },
        );
        infos.push(info);
    }
    let mut ctor_globals = Vec::new();
    for (ti, t) in b.types.iter().enumerate() {
        let ks = Kernel::new(&staged, p, s);
        let mut min_prefix = usize::MAX;
        for (ci, (kname, cty)) in t.ctors.iter().enumerate() {
            ks.sort_of(&pctx, cty)?;
            let (args, concl) = ks.m.whd_prods(&pctx, cty, usize::MAX)?;
            let n = args.len();
            let err = |what: String| KernelError::Inductive(format!("constructor `{kname}`: {what}"));
            let concl_ok = matches!(concl.head(), Term::Const(c) if *c == t.name);
            if !concl_ok || concl.args().len() != l + infos[ti].indices.len() {
                return Err(err(format!("must construct `{}` applied to all its arguments", t.name)));
            }
            for (pi, a) in concl.args()[..l].iter().enumerate() {
                if !matches!(a, Term::Rel(i) if *i == n + l - 1 - pi) {
                    return Err(err("parameters must be passed unchanged".into()));
                }
            }
            let result_indices: Vec<Term> = concl.args()[l..].to_vec();
            if result_indices.iter().any(|w| mentions_any(w, &names)) {
                return Err(err("the inductive type occurs in an index of the conclusion".into()));
            }
            let prefix = result_indices
                .iter()
                .enumerate()
                .take_while(|(q, w)| *q < n && matches!(w, Term::Rel(i) if *i == n - 1 - q))
                .count();
            min_prefix = min_prefix.min(prefix);
            let mut c = pctx.clone();
            for (i, (x, aty)) in args.iter().enumerate() {
                check_positive(&ks, &c, aty, &names, l, l + i).map_err(err)?;
                if let Sort::Type(_) = &infos[ti].sort {
                    let sa = ks.sort_of(&c, aty)?;
                    if !env.univ.sort_leq(sa.upper(), &infos[ti].sort) {
                        return Err(err(format!("argument {} lives in a universe above the inductive", i + 1)));
                    }
                }
                c.push_decl(x.clone(), aty.clone());
            }
            ctor_globals.push((
                kname.clone(),
                Global {
                    ty: pi_telescope(&b.params, cty.clone()),
                    role: Role::Constructor(CtorInfo {
                        ind: t.name.clone(),
                        name: kname.clone(),
                        index: ci,
                        args,
                        result_indices,
                    }),
                },
            ));
        }
        if t.ctors.is_empty() {
            min_prefix = 0;
        }
        infos[ti].result_params = l + min_prefix.min(infos[ti].indices.len());
    }
    for (t, info) in b.types.iter().zip(infos) {
        staged.insert_global(
            t.name.clone(),
            Global { ty: pi_telescope(&b.params, t.arity.clone()), role: Role::Inductive(info) },
        );
    }
    for (n, g) in ctor_globals {
        staged.insert_global(n, g);
    }
    Ok(staged)
}

fn mentions_any(t: &Term, names: &[Name]) -> bool {
    let mut found = false;
    t.visit(&mut |u| {
        if let Term::Const(c) = u {
            if names.contains(c) {
                found = true;
            }
        }
    });
    found
}

/// Strict positivity of one constructor argument `aty`, which lives in a
/// context of length `depth` whose first `l` entries are the parameters.
fn check_positive(k: &Kernel, ctx: &Context, aty: &Term, names: &[Name], l: usize, depth: usize) -> Result<(), String> {
    let (tele, concl) = k.m.whd_prods(ctx, aty, usize::MAX).map_err(|e| e.to_string())?;
    if tele.iter().any(|(_, t)| mentions_any(t, names)) {
        return Err("the inductive type occurs in a non-strictly-positive position".into());
    }
    if !mentions_any(&concl, names) {
        return Ok(());
    }
    let d = depth + tele.len();
    match concl.head() {
        Term::Const(c) if names.contains(c) => {
            let args = concl.args();
            if args.len() < l {
                return Err("recursive occurrence is not fully applied".into());
            }
            for (pi, a) in args[..l].iter().enumerate() {
                if !matches!(a, Term::Rel(i) if *i == d - 1 - pi) {
                    return Err("recursive occurrence must pass the parameters unchanged".into());
                }
            }
            if args[l..].iter().any(|a| mentions_any(a, names)) {
                return Err("the inductive type occurs in an index of a recursive argument".into());
            }
            Ok(())
        }
        _ => Err("nested or non-positive occurrence of the inductive type".into()),
    }
}

fn check_rec(
    env: &GlobalEnv,
    p: &ProofProblem,
    s: &Substitution,
    defs: &[RecDef],
    co: bool,
) -> Result<GlobalEnv, KernelError> {
    if defs.is_empty() {
        return Err(KernelError::RecDef(name("?"), "empty block".into()));
    }
    let k = Kernel::new(env, p, s);
    let mut staged = env.clone();
    for d in defs {
        let c = check_telescope(&k, &d.params)?;
        k.sort_of(&c, &d.ret)?;
        staged.insert_global(d.name.clone(), Global { ty: d.ty(), role: Role::Axiom });
    }
    let names: Vec<Name> = defs.iter().map(|d| d.name.clone()).collect();
    let ks = Kernel::new(&staged, p, s);
    for d in defs {
        let mut c = Context::new();
        for (x, t) in &d.params {
            c.push_decl(x.clone(), t.clone());
        }
        ks.check(&c, &d.body, &d.ret)?;
        if co {
            let w = ks.m.whd(&c, &d.ret)?;
            let coind = matches!(w.head(), Term::Const(i) if env.inductive(i).is_some_and(|x| x.coinductive));
            if !coind {
                return Err(KernelError::RecDef(
                    d.name.clone(),
                    "corecursive definitions must return a coinductive type".into(),
                ));
            }
            if !productive(&staged, &d.body, &names, false) {
                return Err(KernelError::Productivity(d.name.clone()));
            }
        } else {
            if d.rec_arg >= d.params.len() {
                return Err(KernelError::RecDef(d.name.clone(), "no recursive argument".into()));
            }
            let pre = Context { entries: c.entries[..d.rec_arg].to_vec() };
            let w = ks.m.whd(&pre, &d.params[d.rec_arg].1)?;
            let ind = matches!(w.head(), Term::Const(i) if env.inductive(i).is_some_and(|x| !x.coinductive));
            if !ind {
                return Err(KernelError::RecDef(
                    d.name.clone(),
                    "the recursive argument must have an inductive type".into(),
                ));
            }
            let rec_args: Vec<usize> = defs.iter().map(|x| x.rec_arg).collect();
            let mut g = Guard { names: &names, rec_args: &rec_args, small: BTreeSet::new() };
            if !g.check(&d.body, d.params.len(), Some(d.rec_arg)) {
                return Err(KernelError::Guard(d.name.clone()));
            }
        }
    }
    let mut out = env.clone();
    for d in defs {
        let role = if co { Role::CoFix(d.clone()) } else { Role::Fix(d.clone()) };
        out.insert_global(d.name.clone(), Global { ty: d.ty(), role });
    }
    Ok(out)
}

/// Structural guard. Variables are tracked by de Bruijn level.
struct Guard<'n> {
    names: &'n [Name],
    rec_args: &'n [usize],
    small: BTreeSet<usize>,
}

impl Guard<'_> {
    fn level(depth: usize, i: usize) -> Option<usize> {
        depth.checked_sub(i + 1)
    }

    fn check(&mut self, t: &Term, depth: usize, root: Option<usize>) -> bool {
        match t {
            Term::Const(c) => !self.names.contains(c),
            Term::Rel(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => true,
            Term::App(h, args) => {
                if let Term::Const(c) = &**h {
                    if let Some(pos) = self.names.iter().position(|n| n == c) {
                        let r = self.rec_args[pos];
                        let ok = match args.get(r) {
                            Some(Term::Rel(i)) => Self::level(depth, *i).is_some_and(|lv| self.small.contains(&lv)),
                            _ => false,
                        };
                        return ok && args.iter().all(|a| self.check(a, depth, root));
                    }
                }
                self.check(h, depth, root) && args.iter().all(|a| self.check(a, depth, root))
            }
            Term::Lambda(_, a, b) | Term::Prod(_, a, b) => self.check(a, depth, root) && self.check(b, depth + 1, root),
            Term::LetIn(_, a, d, b) => {
                self.check(a, depth, root) && self.check(d, depth, root) && self.check(b, depth + 1, root)
            }
            Term::Meta(_, s) => s.iter().all(|x| self.check(x, depth, root)),
            Term::Match(m) => {
                if !self.check(&m.scrutinee, depth, root) || !self.check(&m.motive, depth, root) {
                    return false;
                }
                let decreasing = match &m.scrutinee {
                    Term::Rel(i) => {
                        Self::level(depth, *i).is_some_and(|lv| Some(lv) == root || self.small.contains(&lv))
                    }
                    _ => false,
                };
                for br in &m.branches {
                    let mut d = depth;
                    let mut added = Vec::new();
                    for (_, ty) in &br.binders {
                        if !self.check(ty, d, root) {
                            return false;
                        }
                        if decreasing && self.small.insert(d) {
                            added.push(d);
                        }
                        d += 1;
                    }
                    let ok = self.check(&br.body, d, root);
                    for a in added {
                        self.small.remove(&a);
                    }
                    if !ok {
                        return false;
                    }
                }
                true
            }
        }
    }
}

/// Every occurrence of a corecursive name sits under a constructor.
fn productive(env: &GlobalEnv, t: &Term, names: &[Name], guarded: bool) -> bool {
    let is_ctor = |h: &Term| matches!(h, Term::Const(k) if env.constructor(k).is_some());
    match t {
        Term::Const(c) => guarded || !names.contains(c),
        Term::Rel(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => true,
        Term::App(h, args) => {
            if is_ctor(h) {
                return args.iter().all(|a| productive(env, a, names, true));
            }
            if let Term::Const(c) = &**h {
                if names.contains(c) {
                    return guarded && args.iter().all(|a| productive(env, a, names, false));
                }
            }
            productive(env, h, names, false) && args.iter().all(|a| productive(env, a, names, false))
        }
        Term::Lambda(_, a, b) => productive(env, a, names, false) && productive(env, b, names, guarded),
        Term::Prod(_, a, b) => productive(env, a, names, false) && productive(env, b, names, false),
        Term::LetIn(_, a, d, b) => {
            productive(env, a, names, false) && productive(env, d, names, false) && productive(env, b, names, guarded)
        }
        Term::Meta(_, s) => s.iter().all(|x| productive(env, x, names, false)),
        Term::Match(m) => {
            productive(env, &m.scrutinee, names, false)
                && productive(env, &m.motive, names, false)
                && m.branches.iter().all(|br| {
                    br.binders.iter().all(|(_, ty)| productive(env, ty, names, false))
                        && productive(env, &br.body, names, guarded)
                })
        }
    }
}
