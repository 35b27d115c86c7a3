//! The coercion set: declaration with composite closure, priorities, and
//! lookup by first-order skeleton.

use std::fmt;

use thiserror::Error;

use crate::env::{lam_telescope, GlobalEnv, Object};
use crate::kernel::{typecheck_obj, KernelError};
use crate::reduce::{Mode, ReduceError};
use crate::term::{name, Context, Name, Term};
use crate::unify::{unify, State};

/// First-order approximation of a type: variables, metas and higher-order
/// subterms become wildcards.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Skel {
    Wild,
    Node(Name, Vec<Skel>),
}

impl Skel {
    pub fn of(t: &Term) -> Skel {
        match t {
            Term::Sort(crate::term::Sort::Prop) => Skel::Node(name("Prop"), vec![]),
            Term::Sort(_) => Skel::Node(name("Type"), vec![]),
            Term::Const(c) => Skel::Node(c.clone(), vec![]),
            Term::Prod(_, a, b) => Skel::Node(name("Π"), vec![Skel::of(a), Skel::of(b)]),
            Term::App(h, args) => match &**h {
                Term::Const(c) => Skel::Node(c.clone(), args.iter().map(Skel::of).collect()),
                _ => Skel::Wild,
            },
            _ => Skel::Wild,
        }
    }

    /// Wildcards on either side match anything.
    pub fn matches(&self, other: &Skel) -> bool {
        match (self, other) {
            (Skel::Wild, _) | (_, Skel::Wild) => true,
            (Skel::Node(a, xs), Skel::Node(b, ys)) => {
                a == b && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| x.matches(y))
            }
        }
    }
}

impl fmt::Display for Skel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Skel::Wild => write!(f, "_"),
            Skel::Node(c, xs) if xs.is_empty() => write!(f, "{c}"),
            Skel::Node(c, xs) if &**c == "Π" => write!(f, "({} -> {})", xs[0], xs[1]),
            Skel::Node(c, xs) => {
                write!(f, "({c}")?;
                for x in xs {
                    write!(f, " {x}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct CoercionEntry {
    pub name: Name,
    /// 1-based position of the coerced argument.
    pub k: usize,
    /// How many arguments the coercion is applied to.
    pub n: usize,
    pub priority: i64,
    pub source: Skel,
    pub target: Skel,
    seq: usize,
}

#[derive(Clone, Debug, Default)]
pub struct DeclareOptions {
    pub priority: i64,
    pub n: Option<usize>,
    pub source: Option<Skel>,
    pub target: Option<Skel>,
}

#[derive(Debug, Error, Clone)]
pub enum CoercionError {
    #[error("unknown constant `{0}`")]
    Unknown(Name),
    #[error("coercion `{name}`: position {k} is outside 1..={arity}")]
    Position { name: Name, k: usize, arity: usize },
    #[error("coercion `{name}`: application length {n} is outside {k}..={arity}")]
    Length { name: Name, k: usize, n: usize, arity: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

/// A coercion applied to fresh metas.
#[derive(Clone, Debug)]
pub struct Applied {
    pub term: Term,
    /// The meta standing for the coerced argument.
    pub k_meta: usize,
    pub ty: Term,
}

#[derive(Clone, Debug, Default)]
pub struct CoercionDb {
    entries: Vec<CoercionEntry>,
    seq: usize,
}

impl CoercionDb {
    pub fn new() -> CoercionDb {
        CoercionDb::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[CoercionEntry] {
        &self.entries
    }

    pub fn contains(&self, c: &str, k: usize) -> bool {
        self.entries.iter().any(|e| &*e.name == c && e.k == k)
    }

    /// Adds `(c, k)` and every well-typed composite with the existing entries.
    /// Returns the environment extended with the composites, and warnings.
    pub fn declare(
        &mut self,
        env: &GlobalEnv,
        c: &str,
        k: usize,
        opts: DeclareOptions,
    ) -> Result<(GlobalEnv, Vec<String>), CoercionError> {
        if self.contains(c, k) {
            return Ok((env.clone(), Vec::new()));
        }
        let entry = self.make_entry(env, c, k, opts)?;
        let old = self.entries.clone();
        let mut warnings = Vec::new();
        for e in &old {
            if e.source.matches(&entry.source) && e.target.matches(&entry.target) {
                warnings.push(format!("coercion `{}` overlaps with `{}`", entry.name, e.name));
            }
        }
        let mut env = env.clone();
        self.push(entry.clone());
        let mut left = Vec::new();
        for cj in &old {
            if let Some((e2, comp)) = self.compose(&env, &entry, cj) {
                env = e2;
                self.push(comp);
            }
        }
        for ci in &old {
            if let Some((e2, comp)) = self.compose(&env, ci, &entry) {
                env = e2;
                left.push(comp.clone());
                self.push(comp);
            }
        }
        for l in &left {
            for cj in &old {
                if let Some((e2, comp)) = self.compose(&env, l, cj) {
                    env = e2;
                    self.push(comp);
                }
            }
        }
        Ok((env, warnings))
    }

    fn push(&mut self, mut e: CoercionEntry) {
        if self.contains(&e.name, e.k) {
            return;
        }
        e.seq = self.seq;
        self.seq += 1;
        self.entries.push(e);
    }

    fn make_entry(
        &self,
        env: &GlobalEnv,
        c: &str,
        k: usize,
        opts: DeclareOptions,
    ) -> Result<CoercionEntry, CoercionError> {
        let ty = env.lookup_type(c).map_err(|_| CoercionError::Unknown(name(c)))?;
        let st = State::new();
        let arity = ty.prod_arity();
        if k == 0 || k > arity {
            return Err(CoercionError::Position { name: name(c), k, arity });
        }
        let n = opts.n.unwrap_or(arity);
        if n < k || n > arity {
            return Err(CoercionError::Length { name: name(c), k, n, arity });
        }
        let (tele, concl) = st.machine(env).whd_prods(&Context::new(), &ty, n)?;
        let source = opts.source.unwrap_or_else(|| Skel::of(&tele[k - 1].1));
        let target = opts.target.unwrap_or_else(|| Skel::of(&concl));
        Ok(CoercionEntry { name: name(c), k, n, priority: opts.priority, source, target, seq: 0 })
    }

    /// `outer ∘ inner`: a definition feeding `inner`'s result into `outer`'s
    /// coerced position. `None` if ill-typed.
    fn compose(
        &self,
        env: &GlobalEnv,
        outer: &CoercionEntry,
        inner: &CoercionEntry,
    ) -> Option<(GlobalEnv, CoercionEntry)> {
        let cname = name(&format!("{}__o__{}", outer.name, inner.name));
        if env.contains(&cname) {
            return None;
        }
        let mut st = State::new();
        let m = st.machine(env);
        let ity = env.lookup_type(&inner.name).ok()?;
        let (itele, iconcl) = m.whd_prods(&Context::new(), &ity, inner.n).ok()?;
        let mut ctx = Context::new();
        for (x, t) in &itele {
            ctx.push_decl(x.clone(), t.clone());
        }
        let inner_app = Term::app(Term::Const(inner.name.clone()), ctx.identity());
        let oty = env.lookup_type(&outer.name).ok()?;
        let (otele, _) = st.machine(env).whd_prods(&Context::new(), &oty, outer.n).ok()?;
        // arguments of outer, in order, living in ctx (extended past k)
        let mut args: Vec<Term> = Vec::new();
        let mut extra: Vec<(Name, Term)> = Vec::new();
        for (i, (x, a)) in otele.iter().enumerate() {
            // a lives under the previous outer binders
            let a_i = a.subst_many(&args);
            if i + 1 < outer.k {
                let mv = st.fresh_term(&ctx, a_i, false);
                args.push(mv);
            } else if i + 1 == outer.k {
                unify(env, &mut st, &ctx, &iconcl, &a_i, Mode::Cumulative).ok()?;
                args.push(inner_app.clone());
            } else {
                extra.push((x.clone(), a_i));
                ctx.push_decl(x.clone(), extra.last().unwrap().1.clone());
                args = args.iter().map(|t| t.lift(1)).collect();
                args.push(Term::Rel(0));
            }
        }
        let body = Term::app(Term::Const(outer.name.clone()), args);
        let body = st.zonk(&body);
        let extra: Vec<(Name, Term)> = extra.iter().map(|(x, t)| (x.clone(), st.zonk(t))).collect();
        let mut all = itele.clone();
        all.extend(extra);
        let lam = lam_telescope(&all, body);
        if !crate::term::metas_of(&lam).is_empty() {
            return None;
        }
        let ty = st.kernel(env).type_of(&Context::new(), &lam).ok()?;
        let obj = Object::Definition { name: cname.clone(), ty, body: lam };
        let env2 = typecheck_obj(env, &Default::default(), &Default::default(), &obj).ok()?;
        let entry = CoercionEntry {
            name: cname,
            k: inner.k,
            n: inner.n + outer.n - outer.k,
            priority: outer.priority.min(inner.priority),
            source: inner.source.clone(),
            target: outer.target.clone(),
            seq: 0,
        };
        Some((env2, entry))
    }

    /// Entries applicable from `from` to `to`, by priority then declaration order.
    pub fn lookup(&self, env: &GlobalEnv, st: &State, ctx: &Context, from: &Term, to: &Term) -> Vec<&CoercionEntry> {
        let skels = |t: &Term| {
            let z = st.zonk(t);
            let mut v = vec![Skel::of(&z)];
            if let Ok(w) = st.machine(env).whd(ctx, &z) {
                v.push(Skel::of(&w));
            }
            v
        };
        let (sf, st_) = (skels(from), skels(to));
        let mut out: Vec<&CoercionEntry> = self
            .entries
            .iter()
            .filter(|e| sf.iter().any(|s| e.source.matches(s)) && st_.iter().any(|s| e.target.matches(s)))
            .collect();
        out.sort_by(|a, b| b.priority.cmp(&a.priority).then(a.seq.cmp(&b.seq)));
        out
    }
}

/// `c ?1 … ?n` with dependently typed fresh metas in `ctx`.
pub fn apply_candidate(
    env: &GlobalEnv,
    st: &mut State,
    ctx: &Context,
    e: &CoercionEntry,
) -> Result<Applied, CoercionError> {
    let ty = env.lookup_type(&e.name).map_err(|_| CoercionError::Unknown(e.name.clone()))?;
    let (tele, concl) = st.machine(env).whd_prods(&Context::new(), &ty, e.n)?;
    let mut args = Vec::new();
    let mut k_meta = 0;
    for (i, (_, a)) in tele.iter().enumerate() {
        let a_i = a.subst_many(&args);
        let j = st.fresh(ctx, a_i, false);
        if i + 1 == e.k {
            k_meta = j;
        }
        args.push(Term::Meta(j, ctx.identity()));
    }
    let ty = concl.subst_many(&args);
    Ok(Applied { term: Term::app(Term::Const(e.name.clone()), args), k_meta, ty })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skeleton_wildcards() {
        let t = Term::app(Term::cnst("Vect"), vec![Term::cnst("N"), Term::Rel(0)]);
        let s = Skel::of(&t);
        assert_eq!(s.to_string(), "(Vect N _)");
        let u = Term::app(Term::cnst("Vect"), vec![Term::Meta(1, vec![]), Term::cnst("O")]);
        assert!(s.matches(&Skel::of(&u)));
        assert!(!s.matches(&Skel::of(&Term::cnst("N"))));
    }

    #[test]
    fn skeleton_alpha_stable() {
        let a = Term::prod("x", Term::cnst("N"), Term::Rel(0));
        let b = Term::prod("y", Term::cnst("N"), Term::Rel(0));
        assert_eq!(Skel::of(&a), Skel::of(&b));
    }

    #[test]
    fn empty_lookup() {
        let db = CoercionDb::new();
        let env = GlobalEnv::new();
        let st = State::new();
        assert!(db.lookup(&env, &st, &Context::new(), &Term::prop(), &Term::prop()).is_empty());
    }
}
