//! Global environment: universes, checked objects and constant lookup.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::kernel::{self, KernelError};
use crate::term::{name, Name, ProofProblem, Sort, Substitution, Term, TOP};

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// Universe names with declared constraints.
///
/// Numeric names (`0`, `1`, ...) are always present and ordered; `0` is below
/// and `top` above everything. Other names must be declared.
#[derive(Clone, Debug, Default)]
pub struct Universes {
    declared: BTreeSet<Name>,
    le: BTreeSet<(Name, Name)>,
    lt: Vec<(Name, Name)>,
}

fn numeric(u: &str) -> Option<u64> {
    u.parse().ok()
}

impl Universes {
    pub fn is_declared(&self, u: &str) -> bool {
        u == TOP || numeric(u).is_some() || self.declared.contains(u)
    }

    pub fn declare(&mut self, u: &str) -> Result<(), EnvError> {
        if self.is_declared(u) {
            return Err(EnvError::Duplicate(name(u)));
        }
        self.declared.insert(name(u));
        Ok(())
    }

    pub fn constrain(&mut self, u: &str, v: &str, strict: bool) -> Result<(), EnvError> {
        for w in [u, v] {
            if !self.is_declared(w) || w == TOP {
                return Err(EnvError::UnknownUniverse(name(w)));
            }
        }
        if self.leq(v, u) && (strict || u != v) {
            return Err(EnvError::UniverseCycle(name(u), name(v)));
        }
        if strict {
            self.lt.push((name(u), name(v)));
        } else {
            self.le.insert((name(u), name(v)));
        }
        Ok(())
    }

    fn edges(&self) -> impl Iterator<Item = (&Name, &Name)> {
        self.le.iter().map(|(a, b)| (a, b)).chain(self.lt.iter().map(|(a, b)| (a, b)))
    }

    /// Reflexive-transitive closure of the declared and numeric orders.
    pub fn leq(&self, u: &str, v: &str) -> bool {
        if u == v || v == TOP || u == "0" {
            return true;
        }
        if u == TOP {
            return false;
        }
        let below =
            |x: &str, y: &str| -> bool { x == y || matches!((numeric(x), numeric(y)), (Some(a), Some(b)) if a <= b) };
        let mut seen: BTreeSet<Name> = BTreeSet::new();
        let mut queue: VecDeque<Name> = VecDeque::new();
        queue.push_back(name(u));
        while let Some(x) = queue.pop_front() {
            if below(&x, v) {
                return true;
            }
            if !seen.insert(x.clone()) {
                continue;
            }
            for (a, b) in self.edges() {
                if below(&x, a) && !seen.contains(b) {
                    queue.push_back(b.clone());
                }
            }
        }
        false
    }

    /// The universe of `Type(u)`; `None` for `top`.
    pub fn succ(&self, u: &str) -> Option<Name> {
        if u == TOP {
            return None;
        }
        if let Some(n) = numeric(u) {
            return Some(name(&(n + 1).to_string()));
        }
        let v = self.lt.iter().find(|(a, _)| &**a == u).map(|(_, b)| b.clone());
        Some(v.unwrap_or_else(|| name(TOP)))
    }

    /// Largest universe whose `Type` lives in `Type(u)`, used as the upper bound
    /// of a sort-restricted metavariable of type `Type(u)`. `None` means only `Prop`.
    pub fn pred(&self, u: &str) -> Option<Name> {
        match numeric(u) {
            Some(0) => None,
            Some(n) => Some(name(&(n - 1).to_string())),
            None => Some(name(u)),
        }
    }

    pub fn max(&self, u: &Name, v: &Name) -> Name {
        if self.leq(u, v) {
            v.clone()
        } else if self.leq(v, u) {
            u.clone()
        } else {
            name(TOP)
        }
    }

    pub fn sort_leq(&self, a: &Sort, b: &Sort) -> bool {
        match (a, b) {
            (Sort::Prop, _) => true,
            (Sort::Type(_), Sort::Prop) => false,
            (Sort::Type(u), Sort::Type(v)) => self.leq(u, v),
        }
    }

    pub fn sort_eq(&self, a: &Sort, b: &Sort) -> bool {
        match (a, b) {
            (Sort::Prop, Sort::Prop) => true,
            (Sort::Type(u), Sort::Type(v)) => self.leq(u, v) && self.leq(v, u),
            _ => false,
        }
    }
}

/// A (co)recursive definition: `f (params) : ret := body`, recursive on `rec_arg`.
#[derive(Clone, Debug)]
pub struct RecDef {
    pub name: Name,
    pub params: Vec<(Name, Term)>,
    pub ret: Term,
    pub body: Term,
    pub rec_arg: usize,
}

impl RecDef {
    /// `Π params. ret`.
    pub fn ty(&self) -> Term {
        pi_telescope(&self.params, self.ret.clone())
    }

    /// `λ params. body`, the unfolding used by μ and ν.
    pub fn unfolded(&self) -> Term {
        lam_telescope(&self.params, self.body.clone())
    }
}

#[derive(Clone, Debug)]
pub struct IndType {
    pub name: Name,
    /// Arity under the homogeneous parameters.
    pub arity: Term,
    /// Constructor types under the homogeneous parameters.
    pub ctors: Vec<(Name, Term)>,
}

#[derive(Clone, Debug)]
pub struct InductiveBlock {
    pub params: Vec<(Name, Term)>,
    pub types: Vec<IndType>,
    pub coinductive: bool,
}

#[derive(Clone, Debug)]
pub enum Object {
    Definition { name: Name, ty: Term, body: Term },
    Axiom { name: Name, ty: Term },
    Inductive(InductiveBlock),
    LetRec(Vec<RecDef>),
    LetCoRec(Vec<RecDef>),
}

impl Object {
    pub fn names(&self) -> Vec<Name> {
        match self {
            Object::Definition { name, .. } | Object::Axiom { name, .. } => vec![name.clone()],
            Object::Inductive(b) => b
                .types
                .iter()
                .flat_map(|t| std::iter::once(t.name.clone()).chain(t.ctors.iter().map(|c| c.0.clone())))
                .collect(),
            Object::LetRec(ds) | Object::LetCoRec(ds) => ds.iter().map(|d| d.name.clone()).collect(),
        }
    }
}

pub fn pi_telescope(tele: &[(Name, Term)], body: Term) -> Term {
    tele.iter().rev().fold(body, |acc, (x, t)| Term::Prod(x.clone(), Box::new(t.clone()), Box::new(acc)))
}

pub fn lam_telescope(tele: &[(Name, Term)], body: Term) -> Term {
    tele.iter().rev().fold(body, |acc, (x, t)| Term::Lambda(x.clone(), Box::new(t.clone()), Box::new(acc)))
}

#[derive(Clone, Debug)]
pub struct IndInfo {
    pub name: Name,
    pub params: Vec<(Name, Term)>,
    /// Index telescope under the parameters.
    pub indices: Vec<(Name, Term)>,
    pub sort: Sort,
    pub ctors: Vec<Name>,
    pub coinductive: bool,
    /// Leading constructor arguments that every constructor passes verbatim
    /// to the inductive in its conclusion (at least the parameters).
    pub result_params: usize,
}

#[derive(Clone, Debug)]
pub struct CtorInfo {
    pub ind: Name,
    pub name: Name,
    pub index: usize,
    /// Argument telescope under the parameters.
    pub args: Vec<(Name, Term)>,
    /// Index values of the conclusion, under parameters and arguments.
    pub result_indices: Vec<Term>,
}

#[derive(Clone, Debug)]
pub enum Role {
    Definition(Term),
    Axiom,
    Inductive(IndInfo),
    Constructor(CtorInfo),
    Fix(RecDef),
    CoFix(RecDef),
}

#[derive(Clone, Debug)]
pub struct Global {
    pub ty: Term,
    pub role: Role,
}

#[derive(Debug, Error, Clone)]
pub enum EnvError {
    #[error("unknown constant `{0}`")]
    Unknown(Name),
    #[error("`{0}` is already defined")]
    Duplicate(Name),
    #[error("unknown universe `{0}`")]
    UnknownUniverse(Name),
    #[error("constraint {0} <= {1} would make the universe order cyclic")]
    UniverseCycle(Name, Name),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Debug)]
pub struct GlobalEnv {
    pub univ: Universes,
    pub max_steps: u64,
    objects: Vec<Object>,
    index: BTreeMap<Name, Global>,
}

impl Default for GlobalEnv {
    fn default() -> Self {
        GlobalEnv {
            univ: Universes::default(),
            max_steps: DEFAULT_MAX_STEPS,
            objects: Vec::new(),
            index: BTreeMap::new(),
        }
    }
}

impl GlobalEnv {
    pub fn new() -> GlobalEnv {
        GlobalEnv::default()
    }

    pub fn objects(&self) -> &[Object] {
        &self.objects
    }

    pub fn get(&self, r: &str) -> Option<&Global> {
        self.index.get(r)
    }

    pub fn contains(&self, r: &str) -> bool {
        self.index.contains_key(r)
    }

    pub fn lookup_type(&self, r: &str) -> Result<Term, EnvError> {
        self.index.get(r).map(|g| g.ty.clone()).ok_or_else(|| EnvError::Unknown(name(r)))
    }

    pub fn definition(&self, r: &str) -> Option<&Term> {
        match self.index.get(r) {
            Some(Global { role: Role::Definition(b), .. }) => Some(b),
            _ => None,
        }
    }

    pub fn inductive(&self, r: &str) -> Option<&IndInfo> {
        match self.index.get(r) {
            Some(Global { role: Role::Inductive(i), .. }) => Some(i),
            _ => None,
        }
    }

    pub fn constructor(&self, r: &str) -> Option<&CtorInfo> {
        match self.index.get(r) {
            Some(Global { role: Role::Constructor(c), .. }) => Some(c),
            _ => None,
        }
    }

    pub fn fix(&self, r: &str) -> Option<&RecDef> {
        match self.index.get(r) {
            Some(Global { role: Role::Fix(d), .. }) => Some(d),
            _ => None,
        }
    }

    pub fn cofix(&self, r: &str) -> Option<&RecDef> {
        match self.index.get(r) {
            Some(Global { role: Role::CoFix(d), .. }) => Some(d),
            _ => None,
        }
    }

    /// Checks `o` with the kernel and returns the extended environment.
    pub fn add_object(&self, o: Object) -> Result<GlobalEnv, EnvError> {
        for n in o.names() {
            if self.contains(&n) {
                return Err(EnvError::Duplicate(n));
            }
        }
        let staged = kernel::typecheck_obj(self, &ProofProblem::new(), &Substitution::new(), &o)?;
        Ok(staged)
    }

    /// Inserts index entries without checking; the kernel uses this to stage
    /// blocks whose components refer to each other.
    pub(crate) fn insert_global(&mut self, n: Name, g: Global) {
        self.index.insert(n, g);
    }

    pub(crate) fn push_object(&mut self, o: Object) {
        self.objects.push(o);
    }

    /// `Prop`, `Type(u)` checks that the universe exists.
    pub fn sort_ok(&self, s: &Sort) -> bool {
        match s {
            Sort::Prop => true,
            Sort::Type(u) => self.univ.is_declared(u),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn universe_order() {
        let mut u = Universes::default();
        assert!(u.leq("0", "3"));
        assert!(!u.leq("3", "0"));
        assert!(u.leq("7", TOP));
        u.declare("a").unwrap();
        u.declare("b").unwrap();
        u.constrain("0", "a", false).unwrap();
        u.constrain("a", "b", true).unwrap();
        assert!(u.leq("0", "b"));
        assert!(!u.leq("b", "a"));
        assert_eq!(&*u.succ("a").unwrap(), "b");
        assert_eq!(&*u.succ("2").unwrap(), "3");
        assert!(u.succ(TOP).is_none());
        assert!(u.constrain("b", "a", false).is_err());
        assert_eq!(&*u.max(&name("1"), &name("a")), TOP);
    }

    #[test]
    fn lookup_unknown() {
        assert!(GlobalEnv::new().lookup_type("nope").is_err());
    }
}
