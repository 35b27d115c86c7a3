//! Batch elaboration of scripts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::coercion::{CoercionDb, DeclareOptions};
use crate::env::{GlobalEnv, Object, RecDef};
use crate::kernel::{typecheck_obj, KernelError};
use crate::pretty::{show, show_decl};
use crate::reduce::ReduceError;
use crate::refiner::{Config, Refiner};
use crate::surface::{parse_script, show_object, Command, CommandKind, DEFAULT_REC_ARG};
use crate::term::{apply_subst_context, Branch, Context, Entry, Match, MetaDecl, Term};
use crate::unify::State;

pub const EXIT_OK: i32 = 0;
pub const EXIT_REFINE: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_FUEL: i32 = 3;

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub mono: bool,
    pub beta: bool,
    pub trace: bool,
    pub allow_obligations: bool,
    pub keep_going: bool,
    pub max_steps: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    /// One or more lines per command, in the concrete syntax; obligations,
    /// notes and errors are comments.
    pub output: String,
    pub trace: Vec<String>,
    pub exit: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub msg: String,
    pub exit: i32,
}

/// Environment and coercions accumulated over a script.
pub struct Session {
    pub env: GlobalEnv,
    pub db: CoercionDb,
    pub opts: RunOptions,
    pub trace: Vec<String>,
    composites: BTreeSet<(String, usize)>,
}

impl Session {
    pub fn new(opts: RunOptions) -> Session {
        let mut env = GlobalEnv::new();
        if let Some(n) = opts.max_steps {
            env.max_steps = n;
        }
        Session { env, db: CoercionDb::new(), opts, trace: Vec::new(), composites: BTreeSet::new() }
    }

    fn config(&self) -> Config {
        Config { mono: self.opts.mono, beta: self.opts.beta, trace: self.opts.trace }
    }

    /// Runs one command; on success returns its report lines.
    pub fn exec(&mut self, cmd: &Command) -> Result<Vec<String>, Failure> {
        match &cmd.kind {
            CommandKind::Object(o) => self.object(cmd, o),
            CommandKind::Check { term, ty } => self.check(cmd, term, ty.as_ref()),
            CommandKind::Coercion { name, k, arity, priority, source } => {
                let opts = DeclareOptions { priority: *priority, n: *arity, source: source.clone(), target: None };
                let (env, warnings) = self.db.declare(&self.env, name, *k, opts).map_err(|e| Failure {
                    msg: e.to_string(),
                    exit: fuel_code(matches!(e, crate::coercion::CoercionError::Reduce(_))),
                })?;
                self.env = env;
                let e = self.db.entries().iter().find(|e| e.name == *name && e.k == *k).cloned();
                let mut out = Vec::new();
                if let Some(e) = e {
                    let mut s = format!("coercion {} {} arity {}", e.name, e.k, e.n);
                    if e.priority != 0 {
                        s.push_str(&format!(" priority {}", e.priority));
                    }
                    s.push_str(&format!(" source {}.", e.source));
                    out.push(s);
                }
                for w in warnings {
                    out.push(format!("(* warning: {w} *)"));
                }
                for e in self.db.entries() {
                    if e.name.contains("__o__") && self.composites.insert((e.name.to_string(), e.k)) {
                        out.push(format!("(* composite {} {} *)", e.name, e.k));
                    }
                }
                Ok(out)
            }
            CommandKind::Universe(u) => {
                self.env.univ.declare(u).map_err(refine_failure)?;
                Ok(vec![format!("universe {u}.")])
            }
            CommandKind::Constraint { lo, hi, strict } => {
                self.env.univ.constrain(lo, hi, *strict).map_err(refine_failure)?;
                Ok(vec![format!("constraint {} {} {}.", lo, if *strict { "<" } else { "<=" }, hi)])
            }
        }
    }

    fn object(&mut self, cmd: &Command, o: &Object) -> Result<Vec<String>, Failure> {
        let o = self.default_rec_args(o);
        let mut st = State::new();
        let cfg = self.config();
        let mut r = Refiner::new(&self.env, &self.db, cfg).with_spans(&cmd.spans);
        let res = r.refine_obj(&mut st, &o);
        self.trace.extend(r.take_trace());
        let o2 = res.map_err(|e| Failure { msg: e.to_string(), exit: fuel_code(e.is_fuel()) })?;
        let roots = object_terms(&o2);
        let (ren, obligations) = obligations(&st, &roots);
        let o3 = rename_object(&o2, &ren);
        let mut out = vec![show_object(&o3)];
        out.extend(obligations.iter().map(|(n, d)| format!("(* {} *)", show_decl(*n, d))));
        if !obligations.is_empty() {
            if !self.opts.allow_obligations {
                return Err(Failure {
                    msg: format!("{} open obligation(s) in `{}`", obligations.len(), o2.names()[0]),
                    exit: EXIT_REFINE,
                });
            }
            out.push("(* not added: open obligations *)".into());
            return Ok(out);
        }
        let empty = State::new();
        self.env = typecheck_obj(&self.env, &empty.p, &empty.s, &o2).map_err(kernel_failure)?;
        Ok(out)
    }

    fn check(&mut self, cmd: &Command, term: &Term, ty: Option<&Term>) -> Result<Vec<String>, Failure> {
        let mut st = State::new();
        let cfg = self.config();
        let ctx = Context::new();
        let mut r = Refiner::new(&self.env, &self.db, cfg).with_spans(&cmd.spans);
        let res = match ty {
            None => {
                r.set_root(&[0]);
                r.infer(&mut st, &ctx, term)
            }
            Some(ty) => {
                r.set_root(&[1]);
                r.enforce_type(&mut st, &ctx, ty).and_then(|(ty2, _)| {
                    r.set_root(&[0]);
                    r.force(&mut st, &ctx, term, &ty2).map(|t| (t, ty2))
                })
            }
        };
        self.trace.extend(r.take_trace());
        let (t, ty) = res.map_err(|e| Failure { msg: e.to_string(), exit: fuel_code(e.is_fuel()) })?;
        let (t, ty) = (st.zonk(&t), st.zonk(&ty));
        let (ren, obligations) = obligations(&st, &[t.clone(), ty.clone()]);
        let mut out = vec![format!("check {} : {}.", show(&[], &rename(&t, &ren)), show(&[], &rename(&ty, &ren)))];
        out.extend(obligations.iter().map(|(n, d)| format!("(* {} *)", show_decl(*n, d))));
        Ok(out)
    }

    /// The first parameter whose type is an applied inductive.
    fn default_rec_args(&self, o: &Object) -> Object {
        let fix = |ds: &[RecDef]| -> Vec<RecDef> {
            ds.iter()
                .map(|d| {
                    let mut d = d.clone();
                    if d.rec_arg == DEFAULT_REC_ARG {
                        d.rec_arg = d
                            .params
                            .iter()
                            .position(|(_, a)| matches!(a.head(), Term::Const(c) if self.env.inductive(c).is_some()))
                            .unwrap_or(0);
                    }
                    d
                })
                .collect()
        };
        match o {
            Object::LetRec(ds) => Object::LetRec(fix(ds)),
            Object::LetCoRec(ds) => Object::LetCoRec(fix(ds)),
            o => o.clone(),
        }
    }
}

fn fuel_code(fuel: bool) -> i32 {
    if fuel {
        EXIT_FUEL
    } else {
        EXIT_REFINE
    }
}

fn kernel_fuel(e: &KernelError) -> bool {
    match e {
        KernelError::Reduce(ReduceError::Fuel(_)) => true,
        KernelError::InMeta(_, e) => kernel_fuel(e),
        _ => false,
    }
}

fn kernel_failure(e: KernelError) -> Failure {
    Failure { msg: format!("kernel: {e}"), exit: fuel_code(kernel_fuel(&e)) }
}

fn refine_failure(e: impl std::fmt::Display) -> Failure {
    Failure { msg: e.to_string(), exit: EXIT_REFINE }
}

/// Parses and runs a whole script.
pub fn run(src: &str, opts: RunOptions) -> Report {
    run_files(&[(String::new(), src.to_string())], opts)
}

/// Runs several `(label, source)` scripts in one session. Every file is
/// parsed before anything runs; non-empty labels prefix error positions.
pub fn run_files(files: &[(String, String)], opts: RunOptions) -> Report {
    let at = |label: &str| if label.is_empty() { String::new() } else { format!("{label}:") };
    let mut parsed = Vec::new();
    for (label, src) in files {
        match parse_script(src) {
            Ok(c) => parsed.push((label, c)),
            Err(e) => {
                let output = format!("(* error: {}{e} *)\n", at(label));
                return Report { output, trace: Vec::new(), exit: EXIT_PARSE };
            }
        }
    }
    let mut s = Session::new(opts);
    let mut report = Report::default();
    'files: for (label, cmds) in &parsed {
        for cmd in cmds {
            match s.exec(cmd) {
                Ok(lines) => {
                    for l in lines {
                        report.output.push_str(&l);
                        report.output.push('\n');
                    }
                }
                Err(f) => {
                    // failures without a position of their own point at the command
                    let msg = if f.msg.starts_with(|c: char| c.is_ascii_digit()) {
                        f.msg.clone()
                    } else {
                        format!("{}:{}: {}", cmd.span.line, cmd.span.col, f.msg)
                    };
                    report.output.push_str(&format!("(* error: {}{msg} *)\n", at(label)));
                    if report.exit == EXIT_OK || f.exit == EXIT_FUEL {
                        report.exit = f.exit;
                    }
                    if !opts.keep_going {
                        break 'files;
                    }
                }
            }
        }
    }
    report.trace = std::mem::take(&mut s.trace);
    report
}

/// Runs a script and returns the resulting session; the first failing
/// command is an error.
pub fn load(src: &str, opts: RunOptions) -> Result<Session, String> {
    let cmds = parse_script(src).map_err(|e| e.to_string())?;
    let mut s = Session::new(opts);
    for cmd in &cmds {
        s.exec(cmd).map_err(|f| f.msg)?;
    }
    Ok(s)
}

// ---- obligations and renumbering ----

/// Open metas reachable from `roots`, renumbered in first-occurrence order.
/// Returns the renaming and the renamed, zonked declarations.
pub fn obligations(st: &State, roots: &[Term]) -> (BTreeMap<usize, usize>, Vec<(usize, MetaDecl)>) {
    let mut order: Vec<usize> = Vec::new();
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    let note = |t: &Term, order: &mut Vec<usize>, seen: &mut BTreeSet<usize>, queue: &mut VecDeque<usize>| {
        t.visit(&mut |u| {
            if let Term::Meta(j, _) = u {
                if seen.insert(*j) {
                    order.push(*j);
                    queue.push_back(*j);
                }
            }
        });
    };
    for t in roots {
        note(&st.zonk(t), &mut order, &mut seen, &mut queue);
    }
    let mut decls = BTreeMap::new();
    while let Some(j) = queue.pop_front() {
        let Some(d) = st.p.get(&j) else { continue };
        let ctx = apply_subst_context(&st.s, &d.ctx);
        let ty = st.zonk(&d.ty);
        for e in &ctx.entries {
            note(&e.ty, &mut order, &mut seen, &mut queue);
            if let Some(v) = &e.def {
                note(v, &mut order, &mut seen, &mut queue);
            }
        }
        note(&ty, &mut order, &mut seen, &mut queue);
        decls.insert(j, MetaDecl { ctx, ty, sort: d.sort });
    }
    let ren: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, j)| (*j, i)).collect();
    let mut out = Vec::new();
    for j in &order {
        if let Some(d) = decls.get(j) {
            let ctx = Context {
                entries: d
                    .ctx
                    .entries
                    .iter()
                    .map(|e| Entry {
                        name: e.name.clone(),
                        ty: rename(&e.ty, &ren),
                        def: e.def.as_ref().map(|v| rename(v, &ren)),
                    })
                    .collect(),
            };
            out.push((ren[j], MetaDecl { ctx, ty: rename(&d.ty, &ren), sort: d.sort }));
        }
    }
    (ren, out)
}

pub fn rename(t: &Term, ren: &BTreeMap<usize, usize>) -> Term {
    let go = |u: &Term| rename(u, ren);
    match t {
        Term::Rel(_) | Term::Const(_) | Term::Sort(_) | Term::Placeholder | Term::PlaceholderVec => t.clone(),
        Term::Meta(j, s) => Term::Meta(ren.get(j).copied().unwrap_or(*j), s.iter().map(go).collect()),
        Term::App(h, a) => Term::App(Box::new(go(h)), a.iter().map(go).collect()),
        Term::Lambda(x, a, b) => Term::Lambda(x.clone(), Box::new(go(a)), Box::new(go(b))),
        Term::Prod(x, a, b) => Term::Prod(x.clone(), Box::new(go(a)), Box::new(go(b))),
        Term::LetIn(x, a, d, b) => Term::LetIn(x.clone(), Box::new(go(a)), Box::new(go(d)), Box::new(go(b))),
        Term::Match(m) => Term::Match(Box::new(Match {
            scrutinee: go(&m.scrutinee),
            ind: m.ind.clone(),
            params: m.params,
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

/// Component terms in printing order.
fn object_terms(o: &Object) -> Vec<Term> {
    let mut out = Vec::new();
    match o {
        Object::Axiom { ty, .. } => out.push(ty.clone()),
        Object::Definition { ty, body, .. } => {
            out.push(ty.clone());
            out.push(body.clone());
        }
        Object::Inductive(b) => {
            out.extend(b.params.iter().map(|(_, a)| a.clone()));
            for t in &b.types {
                out.push(t.arity.clone());
                out.extend(t.ctors.iter().map(|(_, c)| c.clone()));
            }
        }
        Object::LetRec(ds) | Object::LetCoRec(ds) => {
            for d in ds {
                out.extend(d.params.iter().map(|(_, a)| a.clone()));
                out.push(d.ret.clone());
                out.push(d.body.clone());
            }
        }
    }
    out
}

fn rename_object(o: &Object, ren: &BTreeMap<usize, usize>) -> Object {
    let rt = |t: &Term| rename(t, ren);
    let tele = |ps: &[(crate::term::Name, Term)]| ps.iter().map(|(x, a)| (x.clone(), rt(a))).collect::<Vec<_>>();
    match o {
        Object::Axiom { name, ty } => Object::Axiom { name: name.clone(), ty: rt(ty) },
        Object::Definition { name, ty, body } => Object::Definition { name: name.clone(), ty: rt(ty), body: rt(body) },
        Object::Inductive(b) => {
            let mut b = b.clone();
            b.params = tele(&b.params);
            for t in &mut b.types {
                t.arity = rt(&t.arity);
                t.ctors = tele(&t.ctors);
            }
            Object::Inductive(b)
        }
        Object::LetRec(ds) | Object::LetCoRec(ds) => {
            let ds: Vec<RecDef> = ds
                .iter()
                .map(|d| RecDef {
                    name: d.name.clone(),
                    params: tele(&d.params),
                    ret: rt(&d.ret),
                    body: rt(&d.body),
                    rec_arg: d.rec_arg,
                })
                .collect();
            if matches!(o, Object::LetRec(_)) {
                Object::LetRec(ds)
            } else {
                Object::LetCoRec(ds)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const NAT: &str = "inductive N : Type := | O : N | S : N -> N.\n";

    #[test]
    fn empty_script() {
        let r = run("", RunOptions::default());
        assert_eq!((r.output.as_str(), r.exit), ("", EXIT_OK));
    }

    #[test]
    fn explicit_check_is_echoed() {
        let r = run(&format!("{NAT}check (fun x : N => x) : N -> N."), RunOptions::default());
        assert_eq!(r.exit, EXIT_OK);
        assert_eq!(r.output.lines().last(), Some("check fun x : N => x : N -> N."));
    }

    #[test]
    fn exit_codes() {
        let parse = run("check fun x.", RunOptions::default());
        assert_eq!(parse.exit, EXIT_PARSE);
        assert!(parse.output.starts_with("(* error: 1:"), "{}", parse.output);

        let refine = run(&format!("{NAT}check O : O."), RunOptions::default());
        assert_eq!(refine.exit, EXIT_REFINE);
        assert!(refine.output.contains("(* error: 2:"), "{}", refine.output);

        let fuel = run(
            &format!("{NAT}check (fun x : N => x) (S (S (S O))) : N."),
            RunOptions { max_steps: Some(3), ..Default::default() },
        );
        assert_eq!(fuel.exit, EXIT_FUEL, "{}", fuel.output);
    }

    #[test]
    fn keep_going_runs_later_commands() {
        let src = format!("{NAT}check O : N -> N.\ncheck O.");
        let stop = run(&src, RunOptions::default());
        let go = run(&src, RunOptions { keep_going: true, ..Default::default() });
        assert_eq!((stop.exit, go.exit), (EXIT_REFINE, EXIT_REFINE));
        assert!(!stop.output.contains("check 0 : N."));
        assert!(go.output.contains("check 0 : N."), "{}", go.output);
    }

    #[test]
    fn obligations_block_objects_unless_allowed() {
        let src = format!("{NAT}definition d : N := ?.");
        let strict = run(&src, RunOptions::default());
        assert_eq!(strict.exit, EXIT_REFINE);
        let lax = run(&src, RunOptions { allow_obligations: true, ..Default::default() });
        assert_eq!(lax.exit, EXIT_OK);
        assert!(lax.output.contains("definition d : N := ?0."), "{}", lax.output);
        assert!(lax.output.contains("(* ⊢ ?0 : N *)"), "{}", lax.output);
    }

    #[test]
    fn files_share_one_environment() {
        let files = [("a.v".to_string(), NAT.to_string()), ("b.v".to_string(), "check S O.\ncheck T.".to_string())];
        let r = run_files(&files, RunOptions::default());
        assert_eq!(r.exit, EXIT_REFINE);
        assert!(r.output.contains("check 1 : N."), "{}", r.output);
        assert!(r.output.contains("(* error: b.v:2:"), "{}", r.output);
    }
}
