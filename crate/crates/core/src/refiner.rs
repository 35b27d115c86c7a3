//! Bidirectional refinement of external terms and objects.

use std::fmt;

use thiserror::Error;

use crate::coercion::{apply_candidate, CoercionDb};
use crate::env::{pi_telescope, GlobalEnv, IndType, InductiveBlock, Object, RecDef};
use crate::kernel::{branch_type, elim_allowed, typecheck_obj, KernelError};
use crate::pretty::{show_ctx, show_sort};
use crate::reduce::{Mode, ReduceError};
use crate::term::{alpha_eq, Branch, Context, Match, Name, Sort, Span, SpanMap, Term};
use crate::unify::{fit_in_sort, invert_projections, unify, State, UnifyError};

#[derive(Clone, Copy, Debug, Default)]
pub struct Config {
    /// Route every type-forcing judgment through inference and cast.
    pub mono: bool,
    /// Enable the forcing rule for β-redexes.
    pub beta: bool,
    pub trace: bool,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ErrorKind {
    #[error("expected `{expected}`, found `{found}`")]
    Unify { expected: String, found: String },
    #[error("argument {pos}: expected `{expected}`, found `{found}`")]
    Arg { pos: usize, expected: String, found: String },
    #[error("`{0}` is not a type")]
    NotASort(String),
    #[error("too many arguments: `{0}` is not a product")]
    NotAProduct(String),
    #[error("too few arguments: {0} more expected")]
    TooFewArgs(usize),
    #[error("unbound variable #{0}")]
    Unbound(usize),
    #[error("unknown constant `{0}`")]
    UnknownConst(Name),
    #[error("undeclared metavariable ?{0}")]
    UndeclaredMeta(usize),
    #[error("?{0} applied to a substitution of the wrong length")]
    MetaArity(usize),
    #[error("bad match: {0}")]
    BadMatch(String),
    #[error("cannot eliminate from {0} into {1}")]
    Elim(String, String),
    #[error("no coercion from `{from}` to `{to}`")]
    NoCoercion { from: String, to: String },
    #[error("`...` may only appear as an argument")]
    VectorOutsideArgs,
    #[error("step budget of {0} exhausted")]
    Fuel(u64),
    #[error("{0}")]
    Kernel(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub struct RefineError {
    pub rule: &'static str,
    pub span: Option<Span>,
    pub kind: ErrorKind,
}

impl fmt::Display for RefineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(s) = self.span {
            write!(f, "{}:{}: ", s.line, s.col)?;
        }
        write!(f, "{}: {}", self.rule, self.kind)
    }
}

impl RefineError {
    pub fn is_fuel(&self) -> bool {
        matches!(self.kind, ErrorKind::Fuel(_))
    }
}

pub type RResult<T> = Result<T, RefineError>;

/// An argument together with its address below the application node.
type Arg = (Term, Option<u32>);

pub struct Refiner<'a> {
    pub env: &'a GlobalEnv,
    pub db: &'a CoercionDb,
    pub cfg: Config,
    trace: Vec<String>,
    path: Vec<u32>,
    spans: Option<&'a SpanMap>,
    steps: u64,
    depth: usize,
}

impl<'a> Refiner<'a> {
    pub fn new(env: &'a GlobalEnv, db: &'a CoercionDb, cfg: Config) -> Self {
        Refiner { env, db, cfg, trace: Vec::new(), path: Vec::new(), spans: None, steps: 0, depth: 0 }
    }

    /// Spans for error reporting; `root` is the address of the term about to
    /// be refined.
    pub fn with_spans(mut self, spans: &'a SpanMap) -> Self {
        self.spans = Some(spans);
        self
    }

    pub fn set_root(&mut self, root: &[u32]) {
        self.path = root.to_vec();
    }

    pub fn take_trace(&mut self) -> Vec<String> {
        std::mem::take(&mut self.trace)
    }

    fn staged<'b>(&mut self, env: &'b GlobalEnv) -> Refiner<'b>
    where
        'a: 'b,
    {
        Refiner {
            env,
            db: self.db,
            cfg: self.cfg,
            trace: std::mem::take(&mut self.trace),
            path: self.path.clone(),
            spans: self.spans,
            steps: self.steps,
            depth: self.depth,
        }
    }

    fn unstage(&mut self, mut sub: Refiner<'_>) {
        self.trace = std::mem::take(&mut sub.trace);
        self.steps = sub.steps;
    }

    // ---- public, transactional entry points ----

    pub fn infer(&mut self, st: &mut State, ctx: &Context, t: &Term) -> RResult<(Term, Term)> {
        tx(st, |st| self.r_infer(st, ctx, t))
    }

    pub fn force(&mut self, st: &mut State, ctx: &Context, t: &Term, ty: &Term) -> RResult<Term> {
        tx(st, |st| self.r_force(st, ctx, t, ty))
    }

    pub fn enforce_type(&mut self, st: &mut State, ctx: &Context, t: &Term) -> RResult<(Term, Term)> {
        tx(st, |st| self.r_enforce(st, ctx, t))
    }

    pub fn cast(&mut self, st: &mut State, ctx: &Context, t: &Term, from: &Term, to: &Term) -> RResult<Term> {
        tx(st, |st| self.r_cast(st, ctx, t, from, to))
    }

    pub fn eat_prods(
        &mut self,
        st: &mut State,
        ctx: &Context,
        head: &Term,
        ty: &Term,
        args: &[Term],
    ) -> RResult<(Term, Term)> {
        let args: Vec<Arg> = args.iter().map(|a| (a.clone(), None)).collect();
        tx(st, |st| self.r_eat_prods(st, ctx, head.clone(), ty.clone(), &args))
    }

    pub fn eat_args(
        &mut self,
        st: &mut State,
        ctx: &Context,
        args: &[Term],
        targets: &[Term],
    ) -> RResult<(Vec<Term>, Vec<Term>)> {
        let args: Vec<Arg> = args.iter().map(|a| (a.clone(), None)).collect();
        tx(st, |st| self.r_eat_args(st, ctx, &args, targets, 0)).map(|(c, r)| (c, r.into_iter().map(|a| a.0).collect()))
    }

    pub fn refine_obj(&mut self, st: &mut State, o: &Object) -> RResult<Object> {
        tx(st, |st| self.r_obj(st, o))
    }

    // ---- plumbing ----

    fn err(&self, rule: &'static str, kind: ErrorKind) -> RefineError {
        let span = self.spans.and_then(|m| (0..=self.path.len()).rev().find_map(|n| m.get(&self.path[..n]).copied()));
        RefineError { rule, span, kind }
    }

    fn at<T>(&mut self, addr: Option<u32>, f: impl FnOnce(&mut Self) -> T) -> T {
        if let Some(a) = addr {
            self.path.push(a);
        }
        self.depth += 1;
        let r = f(self);
        self.depth -= 1;
        if addr.is_some() {
            self.path.pop();
        }
        r
    }

    fn tick(&mut self, st: &State, rule: &'static str, ctx: &Context, t: &Term) -> RResult<()> {
        self.steps += 1;
        if self.steps > self.env.max_steps {
            return Err(self.err(rule, ErrorKind::Fuel(self.env.max_steps)));
        }
        if self.cfg.trace {
            let mut s = show_ctx(ctx, t);
            if s.chars().count() > 60 {
                s = s.chars().take(57).collect::<String>() + "...";
            }
            self.trace.push(format!("{:w$}{rule} {s}  |P|={} |S|={}", "", st.p.len(), st.s.len(), w = 2 * self.depth));
        }
        Ok(())
    }

    fn show(&self, st: &State, ctx: &Context, t: &Term) -> String {
        show_ctx(ctx, &st.zonk(t))
    }

    fn uerr(
        &self,
        st: &State,
        ctx: &Context,
        rule: &'static str,
        e: UnifyError,
        expected: &Term,
        found: &Term,
    ) -> RefineError {
        if e.is_fuel() {
            return self.err(rule, ErrorKind::Fuel(self.env.max_steps));
        }
        self.err(rule, ErrorKind::Unify { expected: self.show(st, ctx, expected), found: self.show(st, ctx, found) })
    }

    fn kerr(&self, rule: &'static str, e: KernelError) -> RefineError {
        match e {
            KernelError::Reduce(ReduceError::Fuel(n)) => self.err(rule, ErrorKind::Fuel(n)),
            KernelError::Unbound(i) => self.err(rule, ErrorKind::Unbound(i)),
            KernelError::UnknownConst(c) => self.err(rule, ErrorKind::UnknownConst(c)),
            e => self.err(rule, ErrorKind::Kernel(e.to_string())),
        }
    }

    fn whd(&self, st: &State, ctx: &Context, t: &Term, rule: &'static str) -> RResult<Term> {
        st.machine(self.env).whd(ctx, &st.zonk(t)).map_err(|e| self.kerr(rule, e.into()))
    }

    fn sort_like(&self, st: &State, t: &Term) -> bool {
        matches!(t, Term::Sort(_)) || matches!(t, Term::Meta(j, _) if st.is_sort_meta(*j))
    }

    /// Three fresh metas for a placeholder: `?l : Type(top)`, `?k : ?l`, `?j : ?k`.
    fn placeholder(&self, st: &mut State, ctx: &Context) -> (Term, Term) {
        let l = st.fresh_term(ctx, Term::Sort(Sort::top()), true);
        let k = st.fresh_term(ctx, l, false);
        let j = st.fresh_term(ctx, k.clone(), false);
        (j, k)
    }

    // ---- R⇑ ----

    fn r_infer(&mut self, st: &mut State, ctx: &Context, t: &Term) -> RResult<(Term, Term)> {
        match t {
            Term::Rel(i) => {
                self.tick(st, "infer-variable", ctx, t)?;
                let ty = ctx.type_of(*i).ok_or_else(|| self.err("infer-variable", ErrorKind::Unbound(*i)))?;
                Ok((t.clone(), ty))
            }
            Term::Const(c) => {
                self.tick(st, "infer-constant", ctx, t)?;
                let ty = self
                    .env
                    .lookup_type(c)
                    .map_err(|_| self.err("infer-constant", ErrorKind::UnknownConst(c.clone())))?;
                Ok((t.clone(), ty))
            }
            Term::Sort(_) => {
                self.tick(st, "infer-sort", ctx, t)?;
                let ty = st.kernel(self.env).type_of(ctx, t).map_err(|e| self.kerr("infer-sort", e))?;
                Ok((t.clone(), ty))
            }
            Term::Meta(j, sigma) => self.infer_meta(st, ctx, t, *j, sigma),
            Term::Placeholder => {
                self.tick(st, "infer-placeholder", ctx, t)?;
                Ok(self.placeholder(st, ctx))
            }
            Term::PlaceholderVec => Err(self.err("infer", ErrorKind::VectorOutsideArgs)),
            Term::LetIn(x, a, d, b) => {
                self.tick(st, "infer-letin", ctx, t)?;
                let (a2, _) = self.at(Some(0), |r| r.r_enforce(st, ctx, a))?;
                let d2 = self.at(Some(1), |r| r.r_force(st, ctx, d, &a2))?;
                let c2 = ctx.with_def(x.clone(), d2.clone(), a2.clone());
                let (b2, tb) = self.at(Some(2), |r| r.r_infer(st, &c2, b))?;
                let ty = tb.instantiate1(&d2);
                Ok((Term::LetIn(x.clone(), Box::new(a2), Box::new(d2), Box::new(b2)), ty))
            }
            Term::Lambda(x, a, b) => {
                self.tick(st, "infer-lambda", ctx, t)?;
                let (a2, _) = self.at(Some(0), |r| r.r_enforce(st, ctx, a))?;
                let c2 = ctx.with_decl(x.clone(), a2.clone());
                let (b2, tb) = self.at(Some(1), |r| r.r_infer(st, &c2, b))?;
                Ok((
                    Term::Lambda(x.clone(), Box::new(a2.clone()), Box::new(b2)),
                    Term::Prod(x.clone(), Box::new(a2), Box::new(tb)),
                ))
            }
            Term::Prod(x, a, b) => {
                self.tick(st, "infer-product", ctx, t)?;
                let (a2, _) = self.at(Some(0), |r| r.r_enforce(st, ctx, a))?;
                let c2 = ctx.with_decl(x.clone(), a2.clone());
                let (b2, _) = self.at(Some(1), |r| r.r_enforce(st, &c2, b))?;
                let p = Term::Prod(x.clone(), Box::new(a2), Box::new(b2));
                let ty = st.kernel(self.env).type_of(ctx, &st.zonk(&p)).map_err(|e| self.kerr("infer-product", e))?;
                Ok((p, ty))
            }
            Term::App(h, args) => {
                self.tick(st, "infer-appl", ctx, t)?;
                let (h2, th) = self.at(Some(0), |r| r.r_infer(st, ctx, h))?;
                let args: Vec<Arg> = args.iter().enumerate().map(|(i, a)| (a.clone(), Some(i as u32 + 1))).collect();
                self.r_eat_prods(st, ctx, h2, th, &args)
            }
            Term::Match(m) => self.infer_match(st, ctx, t, m),
        }
    }

    fn infer_meta(
        &mut self,
        st: &mut State,
        ctx: &Context,
        t: &Term,
        j: usize,
        sigma: &[Term],
    ) -> RResult<(Term, Term)> {
        self.tick(st, "infer-meta", ctx, t)?;
        let (cj, tj) = match st.decl(j) {
            Some((c, ty)) => (c.clone(), ty.clone()),
            None => return Err(self.err("infer-meta", ErrorKind::UndeclaredMeta(j))),
        };
        if cj.len() != sigma.len() {
            return Err(self.err("infer-meta", ErrorKind::MetaArity(j)));
        }
        let mut out: Vec<Term> = Vec::new();
        for (i, (s, e)) in sigma.iter().zip(&cj.entries).enumerate() {
            let expected = e.ty.subst_many(&out);
            let s2 = self.at(Some(i as u32), |r| r.r_force(st, ctx, s, &expected))?;
            out.push(s2);
        }
        let ty = tj.subst_many(&out);
        Ok((Term::Meta(j, out), ty))
    }

    fn infer_match(&mut self, st: &mut State, ctx: &Context, t: &Term, m: &Match) -> RResult<(Term, Term)> {
        const R: &str = "infer-match";
        self.tick(st, R, ctx, t)?;
        let ind = self
            .env
            .inductive(&m.ind)
            .ok_or_else(|| self.err(R, ErrorKind::BadMatch(format!("`{}` is not an inductive type", m.ind))))?
            .clone();
        let mut us: Vec<Term> = Vec::new();
        for (_, a) in &ind.params {
            let ty = a.subst_many(&us);
            us.push(st.fresh_term(ctx, ty, false));
        }
        let mut uvs = us.clone();
        for (_, a) in &ind.indices {
            let ty = a.subst_many(&uvs);
            uvs.push(st.fresh_term(ctx, ty, false));
        }
        let vs: Vec<Term> = uvs[us.len()..].to_vec();
        let i_uv = Term::app(Term::Const(ind.name.clone()), uvs.clone());
        let scrut = self.at(Some(0), |r| r.r_force(st, ctx, &m.scrutinee, &i_uv))?;
        // motive type Π y⃗. Π x : I u⃗ y⃗. ?s
        let s = st.fresh_term(ctx, Term::Sort(Sort::top()), true);
        let r = ind.indices.len();
        let ys: Vec<(Name, Term)> =
            ind.indices.iter().enumerate().map(|(i, (y, a))| (y.clone(), a.subst_many_from(i, &us))).collect();
        let mut iargs: Vec<Term> = us.iter().map(|u| u.lift(r)).collect();
        iargs.extend((0..r).rev().map(Term::Rel));
        let x_ty = Term::app(Term::Const(ind.name.clone()), iargs);
        let motive_ty = pi_telescope(&ys, Term::Prod(crate::term::name("x"), Box::new(x_ty), Box::new(s.lift(r + 1))));
        let motive = self.at(Some(1), |rf| rf.r_force(st, ctx, &m.motive, &motive_ty))?;
        // elimination sort
        let mut ret = st.zonk(&s);
        if let Term::Meta(j, _) = ret {
            if ind.sort == Sort::Prop {
                unify(self.env, st, ctx, &ret, &Term::prop(), Mode::Exact)
                    .map_err(|e| self.uerr(st, ctx, R, e, &Term::prop(), &Term::Meta(j, ctx.identity())))?;
                ret = st.zonk(&s);
            }
        }
        if let Term::Sort(rs) = &ret {
            if !elim_allowed(&ind.sort, rs) {
                return Err(self.err(R, ErrorKind::Elim(show_sort(&ind.sort), show_sort(rs))));
            }
        }
        // branches, in constructor order
        if m.branches.len() != ind.ctors.len() {
            return Err(self.err(
                R,
                ErrorKind::BadMatch(format!("{} branches for {} constructors", m.branches.len(), ind.ctors.len())),
            ));
        }
        let mut branches = Vec::new();
        for kname in &ind.ctors {
            let Some(bi) = m.branches.iter().position(|b| b.ctor == *kname) else {
                return Err(self.err(R, ErrorKind::BadMatch(format!("missing branch for `{kname}`"))));
            };
            let b = &m.branches[bi];
            let addr = 2 + bi as u32;
            let ci = self.env.constructor(kname).expect("constructor of an inductive").clone();
            if b.binders.len() != ci.args.len() {
                return Err(self.at(Some(addr), |rf| {
                    rf.err(
                        R,
                        ErrorKind::BadMatch(format!(
                            "`{}` takes {} arguments, pattern binds {}",
                            kname,
                            ci.args.len(),
                            b.binders.len()
                        )),
                    )
                }));
            }
            let (binders, body) = self.at(Some(addr), |rf| -> RResult<_> {
                let mut c = ctx.clone();
                let mut binders = Vec::new();
                for (i, (x, bty)) in b.binders.iter().enumerate() {
                    let expected = ci.args[i].1.subst_many_from(i, &us);
                    let bty2 = rf.at(Some(i as u32), |rf| -> RResult<Term> {
                        let (bty2, _) = rf.r_enforce(st, &c, bty)?;
                        unify(rf.env, st, &c, &bty2, &expected, Mode::Exact)
                            .map_err(|e| rf.uerr(st, &c, R, e, &expected, &bty2))?;
                        Ok(bty2)
                    })?;
                    binders.push((x.clone(), bty2.clone()));
                    c.push_decl(x.clone(), bty2);
                }
                let bt = branch_type(&ci, &st.zonk_all(&us), &st.zonk(&motive));
                let n = binders.len() as u32;
                let body = rf.at(Some(n), |rf| rf.r_force(st, &c, &b.body, &bt))?;
                Ok((binders, body))
            })?;
            branches.push(Branch { ctor: kname.clone(), binders, body });
        }
        let mut margs = vs.clone();
        margs.push(scrut.clone());
        let ty = st.zonk(&motive).beta_apply(&st.zonk_all(&margs));
        let out = Match { scrutinee: scrut, ind: ind.name.clone(), params: ind.params.len(), motive, branches };
        Ok((Term::Match(Box::new(out)), ty))
    }

    // ---- R⇓ ----

    fn r_force(&mut self, st: &mut State, ctx: &Context, t: &Term, e: &Term) -> RResult<Term> {
        if !self.cfg.mono {
            match t {
                Term::Placeholder => {
                    self.tick(st, "force-placeholder", ctx, t)?;
                    return Ok(st.fresh_term(ctx, e.clone(), false));
                }
                Term::Lambda(x, a, b) => {
                    let ew = self.whd(st, ctx, e, "force-lambda")?;
                    if let Term::Prod(_, e1, e2) = ew {
                        self.tick(st, "force-lambda", ctx, t)?;
                        let (a2, _) = self.at(Some(0), |r| r.r_enforce(st, ctx, a))?;
                        self.at(Some(0), |r| {
                            unify(r.env, st, ctx, &a2, &e1, Mode::Exact)
                                .map_err(|err| r.uerr(st, ctx, "force-lambda", err, &e1, &a2))
                        })?;
                        let c2 = ctx.with_decl(x.clone(), a2.clone());
                        let b2 = self.at(Some(1), |r| r.r_force(st, &c2, b, &e2))?;
                        return Ok(Term::Lambda(x.clone(), Box::new(a2), Box::new(b2)));
                    }
                }
                Term::LetIn(x, a, d, b) => {
                    self.tick(st, "force-letin", ctx, t)?;
                    let (a2, _) = self.at(Some(0), |r| r.r_enforce(st, ctx, a))?;
                    let d2 = self.at(Some(1), |r| r.r_force(st, ctx, d, &a2))?;
                    let e2 = abstract_occurrences(&st.zonk(e).lift(1), &st.zonk(&d2).lift(1));
                    let c2 = ctx.with_def(x.clone(), d2.clone(), a2.clone());
                    let b2 = self.at(Some(2), |r| r.r_force(st, &c2, b, &e2))?;
                    return Ok(Term::LetIn(x.clone(), Box::new(a2), Box::new(d2), Box::new(b2)));
                }
                Term::App(h, args) => {
                    if let Term::Const(c) = &**h {
                        if let Some(r) = self.try_appl_k(st, ctx, t, c, args, e)? {
                            return Ok(r);
                        }
                    }
                    if self.cfg.beta && args.len() == 1 {
                        if let Term::Lambda(x, u_ty, body) = &**h {
                            return self.force_beta(st, ctx, t, x, u_ty, body, &args[0], e);
                        }
                    }
                }
                _ => {}
            }
        }
        self.tick(st, "force-default", ctx, t)?;
        let (t2, ty) = self.r_infer(st, ctx, t)?;
        self.r_cast(st, ctx, &t2, &ty, e)
    }

    fn try_appl_k(
        &mut self,
        st: &mut State,
        ctx: &Context,
        t: &Term,
        c: &Name,
        args: &[Term],
        e: &Term,
    ) -> RResult<Option<Term>> {
        const R: &str = "force-appl-k";
        let Some(ci) = self.env.constructor(c) else { return Ok(None) };
        let ind = self.env.inductive(&ci.ind).expect("inductive of a constructor").clone();
        let ew = self.whd(st, ctx, e, R)?;
        let vs = match ew.head() {
            Term::Const(i) if *i == ind.name && ew.args().len() == ind.params.len() + ind.indices.len() => {
                ew.args().to_vec()
            }
            _ => return Ok(None),
        };
        self.tick(st, R, ctx, t)?;
        let l = ind.result_params;
        let args: Vec<Arg> = args.iter().enumerate().map(|(i, a)| (a.clone(), Some(i as u32 + 1))).collect();
        let (consumed, rest) = self.r_eat_args(st, ctx, &args, &vs[..l], 0)?;
        let cty = self.env.lookup_type(c).expect("constructor type");
        let (_, body) =
            st.machine(self.env).whd_prods(&Context::new(), &cty, l).map_err(|err| self.kerr(R, err.into()))?;
        let cty2 = body.subst_many(&consumed);
        let head = Term::app(Term::Const(c.clone()), consumed);
        let (t2, ty) = self.r_eat_prods(st, ctx, head, cty2, &rest)?;
        unify(self.env, st, ctx, &ty, e, Mode::Exact).map_err(|err| self.uerr(st, ctx, R, err, e, &ty))?;
        Ok(Some(t2))
    }

    #[allow(clippy::too_many_arguments)]
    fn force_beta(
        &mut self,
        st: &mut State,
        ctx: &Context,
        t: &Term,
        x: &Name,
        u_ty: &Term,
        body: &Term,
        u: &Term,
        e: &Term,
    ) -> RResult<Term> {
        self.tick(st, "force-beta", ctx, t)?;
        let (u_ty2, _) = self.at(Some(0), |r| r.at(Some(0), |r| r.r_enforce(st, ctx, u_ty)))?;
        let u2 = self.at(Some(1), |r| r.r_force(st, ctx, u, &u_ty2))?;
        let e2 = abstract_occurrences(&st.zonk(e).lift(1), &st.zonk(&u2).lift(1));
        let c2 = ctx.with_decl(x.clone(), u_ty2.clone());
        let body2 = self.at(Some(0), |r| r.at(Some(1), |r| r.r_force(st, &c2, body, &e2)))?;
        Ok(Term::app(Term::Lambda(x.clone(), Box::new(u_ty2), Box::new(body2)), vec![u2]))
    }

    // ---- F ----

    fn r_enforce(&mut self, st: &mut State, ctx: &Context, t: &Term) -> RResult<(Term, Term)> {
        const R: &str = "enforce-type";
        self.tick(st, R, ctx, t)?;
        let (t2, ty) = self.r_infer(st, ctx, t)?;
        let tyw = self.whd(st, ctx, &ty, R)?;
        if self.sort_like(st, &tyw) {
            return Ok((t2, tyw));
        }
        if let Term::Meta(j, _) = &tyw {
            if let Some(d) = st.p.get(j) {
                let dty = self.whd(st, &d.ctx.clone(), &d.ty.clone(), R)?;
                if self.sort_like(st, &dty) {
                    st.flag_sort(*j);
                    return Ok((t2, tyw));
                }
            }
        }
        let s = st.fresh_term(ctx, Term::Sort(Sort::top()), true);
        match self.r_cast(st, ctx, &t2, &tyw, &s) {
            Ok(t3) => {
                let s2 = st.zonk(&s);
                Ok((t3, s2))
            }
            Err(e) if e.is_fuel() => Err(e),
            Err(_) => Err(self.err(R, ErrorKind::NotASort(self.show(st, ctx, &t2)))),
        }
    }

    // ---- C ----

    fn r_cast(&mut self, st: &mut State, ctx: &Context, t: &Term, from: &Term, to: &Term) -> RResult<Term> {
        self.tick(st, "cast", ctx, t)?;
        let saved = st.clone();
        let tow = self.whd(st, ctx, to, "cast")?;
        let tz = st.zonk(t);
        let ok = if self.sort_like(st, &tow) && (matches!(tz, Term::Prod(..)) || self.sort_like(st, &tz)) {
            fit_in_sort(self.env, st, ctx, &tz, &tow)
        } else {
            unify(self.env, st, ctx, from, to, Mode::Cumulative)
        };
        let first = match ok {
            Ok(()) => return Ok(t.clone()),
            Err(e) if e.is_fuel() => return Err(self.err("cast", ErrorKind::Fuel(self.env.max_steps))),
            Err(e) => e,
        };
        *st = saved.clone();
        let cands: Vec<_> = self.db.lookup(self.env, st, ctx, from, to).into_iter().cloned().collect();
        for cand in &cands {
            self.tick(st, "cast-coercion", ctx, t)?;
            let r = (|| -> Result<Term, UnifyError> {
                let app = apply_candidate(self.env, st, ctx, cand)
                    .map_err(|e| UnifyError::Mismatch(e.to_string(), String::new()))?;
                let k = Term::Meta(app.k_meta, ctx.identity());
                unify(self.env, st, ctx, &k, t, Mode::Exact)?;
                unify(self.env, st, ctx, &app.ty, to, Mode::Cumulative)?;
                Ok(app.term)
            })();
            match r {
                Ok(term) => return Ok(term),
                Err(e) if e.is_fuel() => return Err(self.err("cast-coercion", ErrorKind::Fuel(self.env.max_steps))),
                Err(_) => *st = saved.clone(),
            }
        }
        if cands.is_empty() && !self.db.is_empty() {
            return Err(
                self.err("cast", ErrorKind::NoCoercion { from: self.show(st, ctx, from), to: self.show(st, ctx, to) })
            );
        }
        Err(self.uerr(st, ctx, "cast", first, to, from))
    }

    // ---- E^T ----

    fn r_eat_prods(&mut self, st: &mut State, ctx: &Context, f: Term, ty: Term, args: &[Arg]) -> RResult<(Term, Term)> {
        let Some(((arg, addr), rest)) = args.split_first() else {
            self.tick(st, "eat-prods-empty", ctx, &f)?;
            return Ok((f, ty));
        };
        if matches!(arg, Term::PlaceholderVec) {
            self.tick(st, "eat-prods-vector", ctx, &f)?;
            let saved = st.clone();
            let err0 = match self.r_eat_prods(st, ctx, f.clone(), ty.clone(), rest) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_fuel() => return Err(e),
                Err(e) => e,
            };
            *st = saved;
            if !matches!(self.whd(st, ctx, &ty, "eat-prods-vector")?, Term::Prod(..)) {
                return Err(err0);
            }
            let mut more = vec![(Term::Placeholder, None), (Term::PlaceholderVec, *addr)];
            more.extend(rest.iter().cloned());
            return self.r_eat_prods(st, ctx, f, ty, &more);
        }
        let tyw = self.whd(st, ctx, &ty, "eat-prods")?;
        match &tyw {
            Term::Prod(_, u1, t1) => {
                self.tick(st, "eat-prods-prod", ctx, arg)?;
                let a2 = self.at(*addr, |r| r.r_force(st, ctx, arg, u1))?;
                let next = t1.instantiate1(&a2);
                self.r_eat_prods(st, ctx, Term::app(f, vec![a2]), next, rest)
            }
            t if is_flex(st, t) => {
                self.tick(st, "eat-prods-flexible", ctx, arg)?;
                let (a2, u1) = self.at(*addr, |r| r.r_infer(st, ctx, arg))?;
                let u1 = st.zonk(&u1);
                let x = crate::term::name("x");
                let inverted = match t {
                    Term::Meta(j, sigma) => invert_projections(sigma, ctx, &u1).map(|u1i| (*j, sigma.clone(), u1i)),
                    _ => None,
                };
                let (dctx, inst): (Context, Vec<Term>) = match &inverted {
                    Some((j, sigma, u1i)) => {
                        let cj = st.p[j].ctx.clone();
                        (cj.with_decl(x.clone(), u1i.clone()), sigma.clone())
                    }
                    None => (ctx.with_decl(x.clone(), u1.clone()), ctx.identity()),
                };
                let s = st.fresh_term(&dctx, Term::Sort(Sort::top()), true);
                let k = st.fresh(&dctx, s, false);
                let mut under: Vec<Term> = inst.iter().map(|v| v.lift(1)).collect();
                under.push(Term::Rel(0));
                let pi = Term::Prod(x, Box::new(u1.clone()), Box::new(Term::Meta(k, under)));
                unify(self.env, st, ctx, &tyw, &pi, Mode::Exact)
                    .map_err(|e| self.uerr(st, ctx, "eat-prods-flexible", e, &pi, &tyw))?;
                let mut at_arg = inst;
                at_arg.push(a2.clone());
                self.r_eat_prods(st, ctx, Term::app(f, vec![a2]), Term::Meta(k, at_arg), rest)
            }
            _ if !self.db.is_empty() => {
                self.tick(st, "eat-prods-coercion", ctx, &f)?;
                let (_, a) = self.placeholder(st, ctx);
                let x = crate::term::name("x");
                let c2 = ctx.with_decl(x.clone(), a.clone());
                let (_, b) = self.placeholder(st, &c2);
                let pi = Term::Prod(x, Box::new(a), Box::new(b));
                let f2 = self.r_cast(st, ctx, &f, &tyw, &pi).map_err(|e| {
                    if e.is_fuel() {
                        e
                    } else {
                        self.err("eat-prods", ErrorKind::NotAProduct(self.show(st, ctx, &tyw)))
                    }
                })?;
                self.r_eat_prods(st, ctx, f2, pi, args)
            }
            _ => Err(self.err("eat-prods", ErrorKind::NotAProduct(self.show(st, ctx, &tyw)))),
        }
    }

    // ---- E_t ----

    fn r_eat_args(
        &mut self,
        st: &mut State,
        ctx: &Context,
        args: &[Arg],
        targets: &[Term],
        pos: usize,
    ) -> RResult<(Vec<Term>, Vec<Arg>)> {
        let Some((target, trest)) = targets.split_first() else {
            return Ok((Vec::new(), args.to_vec()));
        };
        let Some(((arg, addr), rest)) = args.split_first() else {
            return Err(self.err("eat-args", ErrorKind::TooFewArgs(targets.len())));
        };
        if matches!(arg, Term::PlaceholderVec) {
            self.tick(st, "eat-args-vector", ctx, arg)?;
            let saved = st.clone();
            match self.r_eat_args(st, ctx, rest, targets, pos) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_fuel() => return Err(e),
                Err(_) => *st = saved,
            }
            let mut more = vec![(Term::Placeholder, None), (Term::PlaceholderVec, *addr)];
            more.extend(rest.iter().cloned());
            return self.r_eat_args(st, ctx, &more, targets, pos);
        }
        self.tick(st, "eat-args", ctx, arg)?;
        let a2 = self.at(*addr, |r| -> RResult<Term> {
            let (a2, _) = r.r_infer(st, ctx, arg)?;
            unify(r.env, st, ctx, &a2, target, Mode::Exact).map_err(|e| {
                if e.is_fuel() {
                    r.err("eat-args", ErrorKind::Fuel(r.env.max_steps))
                } else {
                    r.err(
                        "eat-args",
                        ErrorKind::Arg { pos: pos + 1, expected: r.show(st, ctx, target), found: r.show(st, ctx, &a2) },
                    )
                }
            })?;
            Ok(a2)
        })?;
        let (mut consumed, left) = self.r_eat_args(st, ctx, rest, trest, pos + 1)?;
        consumed.insert(0, a2);
        Ok((consumed, left))
    }

    // ---- R_O ----

    fn r_obj(&mut self, st: &mut State, o: &Object) -> RResult<Object> {
        let root = self.path.clone();
        let out = match o {
            Object::Axiom { name, ty } => {
                self.path = root.clone();
                let (ty2, _) = self.at(Some(0), |r| r.r_enforce(st, &Context::new(), ty))?;
                Object::Axiom { name: name.clone(), ty: ty2 }
            }
            Object::Definition { name, ty, body } => {
                let (ty2, _) = self.at(Some(0), |r| r.r_enforce(st, &Context::new(), ty))?;
                let body2 = self.at(Some(1), |r| r.r_force(st, &Context::new(), body, &ty2))?;
                Object::Definition { name: name.clone(), ty: ty2, body: body2 }
            }
            Object::Inductive(b) => Object::Inductive(self.r_inductive(st, b)?),
            Object::LetRec(ds) => Object::LetRec(self.r_letrec(st, ds)?),
            Object::LetCoRec(ds) => Object::LetCoRec(self.r_letrec(st, ds)?),
        };
        self.path = root;
        Ok(zonk_object(st, &out))
    }

    fn telescope(&mut self, st: &mut State, ctx: &mut Context, tele: &[(Name, Term)]) -> RResult<Vec<(Name, Term)>> {
        let mut out = Vec::new();
        for (i, (x, a)) in tele.iter().enumerate() {
            let (a2, _) = self.at(Some(i as u32), |r| r.r_enforce(st, ctx, a))?;
            ctx.push_decl(x.clone(), a2.clone());
            out.push((x.clone(), a2));
        }
        Ok(out)
    }

    fn r_inductive(&mut self, st: &mut State, b: &InductiveBlock) -> RResult<InductiveBlock> {
        const R: &str = "refine-inductive";
        let mut pctx = Context::new();
        let params = self.at(Some(0), |r| r.telescope(st, &mut pctx, &b.params))?;
        let mut arities = Vec::new();
        for (ti, t) in b.types.iter().enumerate() {
            let a2 = self.at(Some(1 + ti as u32), |r| {
                r.at(Some(0), |r| -> RResult<Term> {
                    let (a2, _) = r.r_enforce(st, &pctx, &t.arity)?;
                    let (_, concl) = st
                        .machine(r.env)
                        .whd_prods(&pctx, &st.zonk(&a2), usize::MAX)
                        .map_err(|e| r.kerr(R, e.into()))?;
                    if !matches!(concl, Term::Sort(_)) {
                        return Err(r.err(R, ErrorKind::NotASort(show_ctx(&pctx, &concl))));
                    }
                    Ok(a2)
                })
            })?;
            arities.push(a2);
        }
        // stage the types as axioms
        let mut staged = self.env.clone();
        for (t, a) in b.types.iter().zip(&arities) {
            let ax = Object::Axiom { name: t.name.clone(), ty: st.zonk(&pi_telescope(&params, a.clone())) };
            staged = typecheck_obj(&staged, &st.p, &st.s, &ax).map_err(|e| self.kerr(R, e))?;
        }
        let np = params.len();
        let mut sub = self.staged(&staged);
        let res = (|| -> RResult<Vec<IndType>> {
            let mut types = Vec::new();
            for (ti, (t, a)) in b.types.iter().zip(&arities).enumerate() {
                let (idx, _) =
                    st.machine(sub.env).whd_prods(&pctx, &st.zonk(a), usize::MAX).map_err(|e| sub.kerr(R, e.into()))?;
                let mut ctors = Vec::new();
                for (ci, (cname, cty)) in t.ctors.iter().enumerate() {
                    let cty2 = sub.at(Some(1 + ti as u32), |r| {
                        r.at(Some(1 + ci as u32), |r| -> RResult<Term> {
                            let (cty2, _) = r.r_enforce(st, &pctx, cty)?;
                            let (tele, concl) = st
                                .machine(r.env)
                                .whd_prods(&pctx, &st.zonk(&cty2), usize::MAX)
                                .map_err(|e| r.kerr(R, e.into()))?;
                            let mut zctx = pctx.clone();
                            for (x, a) in &tele {
                                zctx.push_decl(x.clone(), a.clone());
                            }
                            let z = tele.len();
                            let mut targs: Vec<Term> = (0..np).map(|i| Term::Rel(z + np - 1 - i)).collect();
                            let mut metas: Vec<Term> = Vec::new();
                            for (i, (_, ity)) in idx.iter().enumerate() {
                                // ity lives under the parameters and the earlier indices
                                let ty = ity.lift_from(i, z).subst_many(&metas);
                                metas.push(st.fresh_term(&zctx, ty, false));
                            }
                            targs.extend(metas);
                            let target = Term::app(Term::Const(t.name.clone()), targs);
                            unify(r.env, st, &zctx, &concl, &target, Mode::Exact)
                                .map_err(|e| r.uerr(st, &zctx, R, e, &target, &concl))?;
                            Ok(cty2)
                        })
                    })?;
                    ctors.push((cname.clone(), cty2));
                }
                types.push(IndType { name: t.name.clone(), arity: a.clone(), ctors });
            }
            Ok(types)
        })();
        self.unstage(sub);
        Ok(InductiveBlock { params, types: res?, coinductive: b.coinductive })
    }

    fn r_letrec(&mut self, st: &mut State, ds: &[RecDef]) -> RResult<Vec<RecDef>> {
        const R: &str = "refine-letrec";
        let mut heads = Vec::new();
        for (di, d) in ds.iter().enumerate() {
            let (ctx, params, ret) = self.at(Some(di as u32), |r| -> RResult<_> {
                let mut ctx = Context::new();
                let params = r.at(Some(0), |r| r.telescope(st, &mut ctx, &d.params))?;
                let (ret, _) = r.at(Some(1), |r| r.r_enforce(st, &ctx, &d.ret))?;
                Ok((ctx, params, ret))
            })?;
            heads.push((ctx, params, ret));
        }
        let mut staged = self.env.clone();
        for (d, (_, params, ret)) in ds.iter().zip(&heads) {
            let ax = Object::Axiom { name: d.name.clone(), ty: st.zonk(&pi_telescope(params, ret.clone())) };
            staged = typecheck_obj(&staged, &st.p, &st.s, &ax).map_err(|e| self.kerr(R, e))?;
        }
        let mut sub = self.staged(&staged);
        let res = (|| -> RResult<Vec<RecDef>> {
            let mut out = Vec::new();
            for (di, (d, (ctx, params, ret))) in ds.iter().zip(&heads).enumerate() {
                let body = sub.at(Some(di as u32), |r| r.at(Some(2), |r| r.r_force(st, ctx, &d.body, ret)))?;
                out.push(RecDef {
                    name: d.name.clone(),
                    params: params.clone(),
                    ret: ret.clone(),
                    body,
                    rec_arg: d.rec_arg,
                });
            }
            Ok(out)
        })();
        self.unstage(sub);
        res
    }
}

fn tx<T>(st: &mut State, f: impl FnOnce(&mut State) -> RResult<T>) -> RResult<T> {
    let saved = st.clone();
    let r = f(st);
    if r.is_err() {
        *st = saved;
    }
    r
}

fn is_flex(st: &State, t: &Term) -> bool {
    match t {
        Term::Meta(j, _) => st.p.contains_key(j),
        Term::App(h, _) => matches!(&**h, Term::Meta(j, _) if st.p.contains_key(j)),
        _ => false,
    }
}

/// Replaces the occurrences of `d` in `e` by `Rel(0)` (shifted under binders).
pub fn abstract_occurrences(e: &Term, d: &Term) -> Term {
    fn go(e: &Term, d: &Term, depth: usize) -> Term {
        if alpha_eq(e, &d.lift(depth)) {
            return Term::Rel(depth);
        }
        let rec = |t: &Term, k: usize| go(t, d, depth + k);
        match e {
            Term::Rel(_) | Term::Const(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => e.clone(),
            Term::Meta(j, s) => Term::Meta(*j, s.iter().map(|x| rec(x, 0)).collect()),
            Term::App(h, a) => Term::app(rec(h, 0), a.iter().map(|x| rec(x, 0)).collect()),
            Term::Lambda(x, a, b) => Term::Lambda(x.clone(), Box::new(rec(a, 0)), Box::new(rec(b, 1))),
            Term::Prod(x, a, b) => Term::Prod(x.clone(), Box::new(rec(a, 0)), Box::new(rec(b, 1))),
            Term::LetIn(x, a, v, b) => {
                Term::LetIn(x.clone(), Box::new(rec(a, 0)), Box::new(rec(v, 0)), Box::new(rec(b, 1)))
            }
            Term::Match(m) => Term::Match(Box::new(Match {
                scrutinee: rec(&m.scrutinee, 0),
                ind: m.ind.clone(),
                params: m.params,
                motive: rec(&m.motive, 0),
                branches: m
                    .branches
                    .iter()
                    .map(|b| Branch {
                        ctor: b.ctor.clone(),
                        binders: b.binders.iter().enumerate().map(|(i, (x, t))| (x.clone(), rec(t, i))).collect(),
                        body: rec(&b.body, b.binders.len()),
                    })
                    .collect(),
            })),
        }
    }
    go(e, d, 0)
}

fn zonk_object(st: &State, o: &Object) -> Object {
    let z = |t: &Term| st.zonk(t);
    let zt = |tele: &[(Name, Term)]| tele.iter().map(|(x, t)| (x.clone(), z(t))).collect::<Vec<_>>();
    match o {
        Object::Axiom { name, ty } => Object::Axiom { name: name.clone(), ty: z(ty) },
        Object::Definition { name, ty, body } => Object::Definition { name: name.clone(), ty: z(ty), body: z(body) },
        Object::Inductive(b) => Object::Inductive(InductiveBlock {
            params: zt(&b.params),
            types: b
                .types
                .iter()
                .map(|t| IndType { name: t.name.clone(), arity: z(&t.arity), ctors: zt(&t.ctors) })
                .collect(),
            coinductive: b.coinductive,
        }),
        Object::LetRec(ds) | Object::LetCoRec(ds) => {
            let ds2 = ds
                .iter()
                .map(|d| RecDef {
                    name: d.name.clone(),
                    params: zt(&d.params),
                    ret: z(&d.ret),
                    body: z(&d.body),
                    rec_arg: d.rec_arg,
                })
                .collect();
            if matches!(o, Object::LetRec(_)) {
                Object::LetRec(ds2)
            } else {
                Object::LetCoRec(ds2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{load, obligations, RunOptions};
    use crate::kernel::typecheck_term;
    use crate::surface::{parse_term, set_match_params};

    const EXTRA: &str = "
        axiom p : gt 2 0.
        axiom f2 : N -> Bool -> N.";

    fn env() -> GlobalEnv {
        let src = format!("{}\n{}", include_str!("../../../scripts/prelude.v"), EXTRA);
        load(&src, RunOptions::default()).expect("test environment").env
    }

    fn t(env: &GlobalEnv, src: &str) -> Term {
        set_match_params(env, &parse_term(src).unwrap().0)
    }

    fn refiner<'a>(env: &'a GlobalEnv, db: &'a CoercionDb) -> Refiner<'a> {
        Refiner::new(env, db, Config::default())
    }

    fn well_typed(env: &GlobalEnv, st: &State, term: &Term, ty: &Term) {
        let found = typecheck_term(env, &st.p, &st.s, &Context::new(), term).expect("output typechecks");
        assert!(st.machine(env).convert(&Context::new(), &found, ty, Mode::Cumulative).unwrap());
    }

    #[test]
    fn infer_sort() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let (t2, ty) = refiner(&e, &db).infer(&mut st, &Context::new(), &Term::prop()).unwrap();
        assert!(alpha_eq(&t2, &Term::prop()) && alpha_eq(&ty, &Term::ty("0")));
        assert!(st.p.is_empty() && st.s.is_empty());
    }

    #[test]
    fn placeholder_under_binder() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let (out, _) = refiner(&e, &db).infer(&mut st, &Context::new(), &t(&e, "fun x : N => ?")).unwrap();
        let Term::Lambda(_, _, body) = &out else { panic!("{out:?}") };
        let Term::Meta(j, sigma) = &**body else { panic!("{body:?}") };
        assert_eq!(sigma.len(), 1);
        let dj = &st.p[j];
        assert_eq!(dj.ctx.len(), 1);
        let Term::Meta(k, _) = &dj.ty else { panic!("type of the placeholder meta") };
        let dk = &st.p[k];
        let Term::Meta(l, _) = &dk.ty else { panic!("sort of the placeholder meta") };
        assert!(alpha_eq(&st.p[l].ty, &Term::Sort(Sort::top())));
    }

    #[test]
    fn force_placeholder() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let n = Term::cnst("N");
        let out = refiner(&e, &db).force(&mut st, &Context::new(), &Term::Placeholder, &n).unwrap();
        let Term::Meta(j, _) = out else { panic!() };
        assert!(alpha_eq(&st.p[&j].ty, &n));
        assert_eq!(st.p.len(), 1);
    }

    #[test]
    fn enforce_type_examples() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let mut r = refiner(&e, &db);
        let (ty, s) = r.enforce_type(&mut st, &Context::new(), &Term::cnst("N")).unwrap();
        assert!(alpha_eq(&ty, &Term::cnst("N")) && alpha_eq(&s, &Term::ty("0")));
        let err = r.enforce_type(&mut st, &Context::new(), &t(&e, "3")).unwrap_err();
        assert!(matches!(err.kind, ErrorKind::NotASort(_)), "{err}");
        assert!(st.p.is_empty(), "failures leave the state untouched");
        // a placeholder becomes a type meta whose sort is a sort-flagged meta
        let (ty, s) = r.enforce_type(&mut st, &Context::new(), &Term::Placeholder).unwrap();
        let Term::Meta(j, _) = st.zonk(&ty) else { panic!() };
        assert!(alpha_eq(&st.zonk(&st.p[&j].ty), &st.zonk(&s)));
        let Term::Meta(k, _) = st.zonk(&s) else { panic!("sort is a meta: {s:?}") };
        assert!(st.is_sort_meta(k));
    }

    #[test]
    fn cast_examples() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let mut r = refiner(&e, &db);
        let (n, zero) = (Term::cnst("N"), Term::cnst("O"));
        assert!(alpha_eq(&r.cast(&mut st, &Context::new(), &zero, &n, &n).unwrap(), &zero));
        let err = r.cast(&mut st, &Context::new(), &zero, &n, &Term::prop()).unwrap_err();
        assert!(matches!(err.kind, ErrorKind::Unify { .. }), "{err}");
    }

    #[test]
    fn eat_examples() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let mut r = refiner(&e, &db);
        let (h, ty) = (Term::cnst("plus"), t(&e, "N -> N -> N"));
        let (h2, ty2) = r.eat_prods(&mut st, &Context::new(), &h, &ty, &[]).unwrap();
        assert!(alpha_eq(&h2, &h) && alpha_eq(&ty2, &ty));
        let u = t(&e, "1");
        let (c, rest) = r.eat_args(&mut st, &Context::new(), std::slice::from_ref(&u), &[]).unwrap();
        assert!(c.is_empty() && rest.len() == 1);
        let err = r.eat_args(&mut st, &Context::new(), &[u], &[t(&e, "2")]).unwrap_err();
        assert!(matches!(err.kind, ErrorKind::Arg { pos: 1, .. }), "{err}");
    }

    /// Refinement of `f2 <vector> true` against explicit expansions.
    #[test]
    fn vector_expands_minimally() {
        let e = env();
        let db = CoercionDb::new();
        let ok = |src: &str| {
            let mut st = State::new();
            refiner(&e, &db).infer(&mut st, &Context::new(), &t(&e, src)).ok().map(|(x, _)| st.zonk(&x))
        };
        let oracle = ["f2 true", "f2 ? true", "f2 ? ? true"].iter().position(|s| ok(s).is_some());
        assert_eq!(oracle, Some(1));
        let out = ok("f2 ... true").unwrap();
        assert_eq!(out.args().len(), 2);
        assert!(matches!(out.args()[0], Term::Meta(..)));
    }

    #[test]
    fn appl_k_propagates_the_expected_type() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let goal = t(&e, "Ex N (fun x : N => gt x 0)");
        let out = refiner(&e, &db).force(&mut st, &Context::new(), &t(&e, "Ex_intro ? ? ? p"), &goal).unwrap();
        let out = st.zonk(&out);
        assert!(alpha_eq(&out, &t(&e, "Ex_intro N (fun x : N => gt x 0) 2 p")), "{}", crate::pretty::show(&[], &out));
        well_typed(&e, &st, &out, &goal);
        let mono = Refiner::new(&e, &db, Config { mono: true, ..Config::default() }).force(
            &mut State::new(),
            &Context::new(),
            &t(&e, "Ex_intro ? ? ? p"),
            &goal,
        );
        assert!(mono.is_err());
    }

    #[test]
    fn letin_abstracts_the_definition() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let goal = t(&e, "Vect N 2");
        let src = t(&e, "let v : Vect N 2 := Vcons N 1 (Vcons N 0 (Vnil N) 5) 5 in v");
        let out = refiner(&e, &db).force(&mut st, &Context::new(), &src, &goal).unwrap();
        well_typed(&e, &st, &st.zonk(&out), &goal);
    }

    #[test]
    fn definition_without_obligations() {
        let e = env();
        let db = CoercionDb::new();
        let mut st = State::new();
        let d = Object::Definition {
            name: crate::term::name("d"),
            ty: t(&e, "Ex N (fun x : N => gt x 0)"),
            body: t(&e, "Ex_intro ? ? ? p"),
        };
        let out = refiner(&e, &db).refine_obj(&mut st, &d).unwrap();
        let Object::Definition { ty, body, .. } = &out else { panic!() };
        assert!(obligations(&st, &[ty.clone(), body.clone()]).1.is_empty());
        assert!(crate::kernel::typecheck_obj(&e, &State::new().p, &State::new().s, &out).is_ok());
    }

    /// A placeholder in a constructor's result index has nothing to unify
    /// with but a fresh index meta, so it stays open; filling it with the
    /// explicit index gives back the explicit block.
    #[test]
    fn inductive_index_placeholder() {
        let e = env();
        let db = CoercionDb::new();
        let block = |idx: &str| {
            let s = format!(
                "inductive Vec (A : Type) : N -> Type := | vnil : Vec A 0 | vcons : forall m : N, A -> Vec A m -> Vec A {idx}."
            );
            let crate::surface::CommandKind::Object(o) = crate::surface::parse_script(&s).unwrap().remove(0).kind
            else {
                panic!()
            };
            o
        };
        let explicit = block("(S m)");
        let empty = State::new();
        assert!(crate::kernel::typecheck_obj(&e, &empty.p, &empty.s, &explicit).is_ok());
        let mut st = State::new();
        let out = refiner(&e, &db).refine_obj(&mut st, &block("?")).unwrap();
        let (Object::Inductive(a), Object::Inductive(b)) = (&out, &explicit) else { panic!() };
        let vcons = &a.types[0].ctors[1].1;
        let (tele, concl) = st.machine(&e).whd_prods(&Context::new(), vcons, usize::MAX).unwrap();
        let Some(Term::Meta(j, sigma)) = concl.args().last().cloned() else { panic!("{concl:?}") };
        assert!(st.p.contains_key(&j));
        assert_eq!(sigma.len(), tele.len() + 1);
        // ?j lives under A, m, _, _: S m is S #2 there
        st.assign_unchecked(j, Term::app(Term::cnst("S"), vec![Term::Rel(2)]));
        assert!(alpha_eq(&st.zonk(vcons), &b.types[0].ctors[1].1));
    }

    #[test]
    fn errors_carry_spans_and_rules() {
        let e = env();
        let db = CoercionDb::new();
        let (term, spans) = parse_term("plus 1\n  true").unwrap();
        let mut r = Refiner::new(&e, &db, Config::default()).with_spans(&spans);
        let err = r.infer(&mut State::new(), &Context::new(), &term).unwrap_err();
        let s = err.span.expect("span");
        assert_eq!((s.line, s.col), (2, 3));
        assert_eq!(err.rule, "cast");
        assert!(matches!(err.kind, ErrorKind::Unify { .. }));
    }

    #[test]
    fn trace_names_rules() {
        let e = env();
        let db = CoercionDb::new();
        let mut r = Refiner::new(&e, &db, Config { trace: true, ..Config::default() });
        r.infer(&mut State::new(), &Context::new(), &t(&e, "plus 1 ?")).unwrap();
        let tr = r.take_trace();
        assert!(tr[0].starts_with("infer-appl plus 1 ?"), "{tr:?}");
        assert!(tr.iter().any(|l| l.trim_start().starts_with("force-placeholder")));
        assert!(tr.iter().all(|l| l.contains("|P|=")));
    }
}
