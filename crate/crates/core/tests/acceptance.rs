//! Acceptance criteria, one PASS/FAIL line each. The target runs without the
//! test harness: `cargo test -p cicr-core --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use cicr_core::driver::obligations;
use cicr_core::pretty::{show, show_context};
use cicr_core::reduce::{Machine, Rule};
use cicr_core::term::{alpha_eq, MetaDef, ProofProblem, Substitution};
use cicr_core::{Config, Context, GlobalEnv, Kernel, Refiner, State, Term};
use common::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

const DEPENDENT_BUDGET: Duration = Duration::from_secs(1);
const BINDERS_BUDGET: Duration = Duration::from_secs(1);
const COMPLETENESS_BUDGET: Duration = Duration::from_secs(5);
const FUZZ_CASES: usize = 10_000;
const FUZZ_DEPTH: usize = 5;
const FUZZ_SEED: u64 = 0x5eed_cafe;

/// Criteria expected to fail, with the reason recorded in the project notes.
const KNOWN_FAILURES: &[u32] = &[1];

struct Verdict {
    n: u32,
    ok: bool,
    detail: String,
}

fn verdict(n: u32, ok: bool, detail: impl Into<String>) -> Verdict {
    let v = Verdict { n, ok, detail: detail.into() };
    println!("{} criterion {}: {}", if v.ok { "PASS" } else { "FAIL" }, v.n, v.detail);
    v
}

fn bi() -> Config {
    Config::default()
}

fn mono() -> Config {
    Config { mono: true, ..Config::default() }
}

// ---- 1 ----

fn maximally_dependent() -> Verdict {
    let s = session(
        "axiom P1 : N -> Type. axiom P2 : forall x : N, P1 x -> Type.
         axiom c1 : N. axiom c2 : P1 c1. axiom c3 : P2 c1 c2.",
    );
    let env = &s.env;
    let start = Instant::now();
    let mut st = State::new();
    let f = st.fresh(&Context::new(), Term::ty("0"), false);
    let input = term(env, "fun f : ?0 => f c1 c2 c3");
    let res = Refiner::new(env, &s.db, bi()).infer(&mut st, &Context::new(), &input);
    let elapsed = start.elapsed();
    let Ok((out, ty)) = res else { return verdict(1, false, format!("refinement failed: {}", res.unwrap_err())) };

    let sf = st.zonk(&Term::Meta(f, vec![]));
    let Some(z) = innermost_meta(&sf) else { return verdict(1, false, "S(?F) does not end in a meta") };
    let expected = term(env, &format!("forall x : N, forall y : P1 x, forall z : P2 x y, ?{z}"));
    let shape = alpha_eq(&sf, &expected);

    // the open metas reachable from the result are exactly ?Z and ?W
    let (_, obl) = obligations(&st, &[out, ty]);
    let mut checks = vec![("S(?F) = Πx:N.Πy:P1 x.Πz:P2 x y.?Z", shape)];
    let two = obl.len() == 2;
    checks.push(("exactly two open metas ?Z, ?W", two));
    let mut literal = false;
    let mut printed = String::new();
    if two {
        let (dz, dw) = (&obl[0].1, &obl[1].1);
        let zw = matches!(&dz.ty, Term::Meta(w, _) if *w == obl[1].0);
        let w_sort = dw.sort && matches!(&dw.ty, Term::Sort(cicr_core::Sort::Type(_)));
        checks.push(("?Z : ?W and ?W : Type, sort-flagged", zw && w_sort));
        let ours = "x : N; y : P1 x; z : P2 x y";
        let theirs = "x : N; y : P1 c1; z : P2 c1 c2";
        let named = |c: &Context| {
            let mut c = c.clone();
            for (e, x) in c.entries.iter_mut().zip(["x", "y", "z"]) {
                e.name = cicr_core::term::name(x);
            }
            show_context(&c)
        };
        printed = named(&dz.ctx);
        checks.push(("contexts x:N; y:P1 x; z:P2 x y", printed == ours && named(&dw.ctx) == ours));
        literal = printed == theirs && named(&dw.ctx) == theirs;
    }
    checks.push(("runtime < 1 s", elapsed < DEPENDENT_BUDGET));
    let all = checks.iter().all(|c| c.1);
    let summary: Vec<String> = checks.iter().map(|(d, ok)| format!("{d}: {}", if *ok { "ok" } else { "no" })).collect();
    verdict(
        1,
        all && literal,
        format!(
            "{}; contexts printed as y : P1 c1; z : P2 c1 c2: {} (got `{printed}`, {:?})",
            summary.join("; "),
            if literal { "ok" } else { "no" },
            elapsed
        ),
    )
}

fn innermost_meta(t: &Term) -> Option<usize> {
    match t {
        Term::Prod(_, _, b) => innermost_meta(b),
        Term::Meta(j, _) => Some(*j),
        _ => None,
    }
}

// ---- 2 ----

fn appl_k() -> Verdict {
    let s = session("axiom p : gt 2 0.");
    let env = &s.env;
    let goal = term(env, "Ex N (fun x : N => gt x 0)");
    let input = term(env, "Ex_intro ? ? ? p");
    let mut st = State::new();
    let bi_res = Refiner::new(env, &s.db, bi()).force(&mut st, &Context::new(), &input, &goal);
    let bi_ok = match &bi_res {
        Ok(out) => {
            let out = st.zonk(out);
            let (_, obl) = obligations(&st, std::slice::from_ref(&out));
            alpha_eq(&out, &term(env, "Ex_intro N (fun x : N => gt x 0) 2 p"))
                && obl.is_empty()
                && typechecks(env, &st, &out, &goal)
        }
        Err(_) => false,
    };
    let mut st2 = State::new();
    let mono_res = Refiner::new(env, &s.db, mono()).force(&mut st2, &Context::new(), &input, &goal);
    let mono_ok = match &mono_res {
        Err(_) => true,
        Ok(out) => typechecks(env, &st2, &st2.zonk(out), &goal),
    };
    verdict(
        2,
        bi_ok && mono_ok,
        format!(
            "bidirectional gives ?T := N, ?P := λx:N.x>0, ?x := 2 with no obligations: {}; mono {}",
            bi_ok,
            match mono_res {
                Err(e) => format!("fails ({e})"),
                Ok(_) => format!("succeeds, output well typed: {mono_ok}"),
            }
        ),
    )
}

// ---- 3 ----

const V_TO_NEL: &str = "
axiom v_to_nel : forall A : Type, forall n : N, forall v : Vect A n, gt n 0 ->
  Ex (List A) (fun l : List A => gt (length A l) 0).
coercion v_to_nel 3.";

const NEV_TO_NEL: &str = "
axiom nev_to_nel : forall A : Type, forall n : N, forall v : Vect A (plus n 1),
  Ex (List A) (fun l : List A => gt (length A l) 0).
coercion nev_to_nel 3 priority 10 source Vect _ (plus _ 1).";

fn coercion_side_conditions() -> Verdict {
    let nel = "Ex (List N) (fun l : List N => gt (length N l) 0)";
    let cast = |extra: &str| {
        let s = session(extra);
        let env = &s.env;
        let mut st = State::new();
        let mut r = Refiner::new(env, &s.db, bi());
        let (t, from) = r.infer(&mut st, &Context::new(), &term(env, "Vcons N 0 (Vnil N) 2")).unwrap();
        let to = term(env, nel);
        let res = r.cast(&mut st, &Context::new(), &t, &from, &to);
        let res = res.map(|out| {
            let raw = out.clone();
            let out = st.zonk(&out);
            let (_, obl) = obligations(&st, std::slice::from_ref(&out));
            let ok = typechecks(env, &st, &out, &to);
            (raw, out, obl, ok, st.clone())
        });
        (res, s)
    };

    let (r1, s1) = cast(V_TO_NEL);
    let first = match &r1 {
        Ok((raw, out, obl, ok, st)) => {
            let env = &s1.env;
            let args = raw.args();
            let metas = args.len() == 4 && args.iter().all(|a| matches!(a, Term::Meta(..)));
            let assigned = |i: usize, src: &str| alpha_eq(&st.zonk(&args[i]), &term(env, src));
            let s_ok = metas
                && assigned(0, "N")
                && assigned(1, "plus 0 1")
                && assigned(2, "Vcons N 0 (Vnil N) 2")
                && matches!(st.zonk(&args[3]), Term::Meta(..));
            let obl_ok = obl.len() == 1 && alpha_eq(&obl[0].1.ty, &term(env, "gt (plus 0 1) 0"));
            let head = matches!(out.head(), Term::Const(c) if &**c == "v_to_nel");
            head && s_ok && obl_ok && *ok
        }
        Err(_) => false,
    };
    let (r2, s2) = cast(&format!("{V_TO_NEL}\n{NEV_TO_NEL}"));
    let second = match &r2 {
        Ok((_, out, obl, ok, _)) => {
            alpha_eq(out, &term(&s2.env, "nev_to_nel N 0 (Vcons N 0 (Vnil N) 2)")) && obl.is_empty() && *ok
        }
        Err(_) => false,
    };
    verdict(
        3,
        first && second,
        format!(
            "v_to_nel ?1 ?2 ?3 ?4 with S = {{N, 0+1, t}} and one obligation ?2 > 0: {first}; \
             nev_to_nel preferred at higher priority with no obligations: {second}"
        ),
    )
}

// ---- 4 ----

fn vectors() -> Verdict {
    let s = session(
        "axiom P : N -> Prop. axiom Q : N -> Prop. axiom tau : forall x : N, P x -> Q x. axiom y : N. axiom H : P y.",
    );
    let env = &s.env;
    let db = &s.db;
    let run = |src: &str| -> Option<(Term, Term)> {
        let mut st = State::new();
        let (t, ty) = Refiner::new(env, db, bi()).infer(&mut st, &Context::new(), &term(env, src)).ok()?;
        Some((st.zonk(&t), st.zonk(&ty)))
    };
    // brute force: the least number of `?` replacing the vector that refines
    let oracle =
        |tail: &str| -> Option<usize> { (0..=3).find(|k| run(&format!("tau {}{tail}", "? ".repeat(*k))).is_some()) };
    let case = |tail: &str, want: &str, want_ty: &str, want_len: usize| -> (bool, String) {
        let got = run(&format!("tau ... {tail}"));
        let explicit = tail.split_whitespace().count();
        let len = got.as_ref().map(|(t, _)| t.args().len() - explicit);
        let ok = got.as_ref().is_some_and(|(t, ty)| alpha_eq(t, &term(env, want)) && alpha_eq(ty, &term(env, want_ty)))
            && len == Some(want_len)
            && oracle(tail) == Some(want_len);
        (
            ok,
            format!(
                "(tau ... {tail}) ~> {:?} expansion {len:?}, oracle {:?}",
                got.map(|g| show(&[], &g.0)),
                oracle(tail)
            ),
        )
    };
    let (a, da) = case("H", "tau y H", "Q y", 1);
    let (b, db_) = case("y", "tau y", "P y -> Q y", 0);
    verdict(4, a && b, format!("{da}; {db_}"))
}

// ---- 5 ----

const BINDERS: &str = "
inductive Term : List N -> Type :=
  | Var : forall S : List N, forall x : N, mem x S -> Term S
  | Lambda : forall S : List N, forall x : N, Term (Cons N x S) -> Term S.";

fn binder_syntax() -> Verdict {
    let s = session(BINDERS);
    let env = &s.env;
    let start = Instant::now();
    let input = term(env, "Lambda ? 1 (Var ? 1 I)");
    let goal = term(env, "Term (Nil N)");
    let mut st = State::new();
    let forced = Refiner::new(env, &s.db, bi()).force(&mut st, &Context::new(), &input, &goal);
    let forced_ok = forced.as_ref().is_ok_and(|t| {
        let t = st.zonk(t);
        alpha_eq(&t, &term(env, "Lambda (Nil N) 1 (Var (Cons N 1 (Nil N)) 1 I)")) && typechecks(env, &st, &t, &goal)
    });
    let inferred = Refiner::new(env, &s.db, mono()).infer(&mut State::new(), &Context::new(), &input);
    let elapsed = start.elapsed();
    verdict(
        5,
        forced_ok && inferred.is_err() && elapsed < BINDERS_BUDGET,
        format!(
            "force against Term ∅ succeeds: {forced_ok}; mono inference fails: {} ; {elapsed:?}",
            match &inferred {
                Err(e) => format!("yes ({e})"),
                Ok(_) => "no".into(),
            }
        ),
    )
}

// ---- 6 ----

const COMPLETENESS_ENV: &str = "
axiom p : gt 2 0.
axiom F : N -> Type.
axiom fz : F O.
coinductive Stream : Type := | SCons : N -> Stream -> Stream.
let corec zeros : Stream := SCons 0 zeros.";

/// Kernel-accepted internal terms; `?0 : N` is open in the empty context and
/// `?1 : N` in `x : N`.
pub const CORPUS: &[&str] = &[
    "Prop",
    "Type",
    "Type(4)",
    "N",
    "O",
    "3",
    "S",
    "plus",
    "plus 2 3",
    "times (plus 1 1) 2",
    "fun x : N => x",
    "fun x : N => fun y : N => plus y x",
    "fun A : Type => fun a : A => a",
    "fun A : Prop => fun a : A => a",
    "fun P : N -> Prop => fun h : P 0 => h",
    "forall x : N, N",
    "N -> N",
    "N -> Prop",
    "forall A : Type, A -> A",
    "forall P : Prop, P -> P",
    "forall n : N, Vect N n -> Prop",
    "Type -> Type(1)",
    "let x : N := 2 in plus x x",
    "let A : Type := N in fun a : A => a",
    "fun n : N => let m : N := S n in le n m",
    "let f : N -> N := fun x : N => S x in f (f 0)",
    "Vnil N",
    "Vcons N 0 (Vnil N) 2",
    "Vcons",
    "Vect N",
    "fun A : Type => Vnil A",
    "Cons N 1 (Nil N)",
    "length N (Cons N 1 (Nil N))",
    "le_n 3",
    "le_S 1 1 (le_n 1)",
    "Ex_intro N (fun x : N => gt x 0) 2 p",
    "Ex N (fun x : N => gt x 0)",
    "gt",
    "gt 2 0",
    "fun x : N => gt x 0",
    "F 0",
    "fz",
    "I",
    "True",
    "eqb 2 3",
    "mem 1 (Cons N 1 (Nil N))",
    "zeros",
    "SCons 1 zeros",
    "match 2 in N return fun _ : N => N with | O => O | S (p : N) => p end",
    "fun n : N => match n in N return fun _ : N => Bool with | O => true | S (p : N) => false end",
    "fun n : N => match n in N return fun k : N => F k -> F k with | O => fun h : F O => h | S (p : N) => fun h : F (S p) => h end",
    "fun v : Vect N 2 => match v in Vect return fun (k : N) (_ : Vect N k) => N with | Vnil => O | Vcons (m : N) (w : Vect N m) (a : N) => a end",
    "fun h : le 0 0 => match h in le return fun (k : N) (_ : le 0 k) => le 0 k with | le_n => h | le_S (m : N) (q : le 0 m) => le_S 0 m q end",
    "fun s : Stream => match s in Stream return fun _ : Stream => N with | SCons (h : N) (t : Stream) => h end",
    "fun l : List N => match l in List return fun _ : List N => N with | Nil => O | Cons (x : N) (r : List N) => x end",
    "?0",
    "S ?0",
    "plus ?0 ?0",
    "fun x : N => ?1",
    "?1[3]",
    "fun y : N => ?1[plus y 2]",
    "let z : N := ?0 in ?1[z]",
];

fn completeness() -> Verdict {
    let s = session(COMPLETENESS_ENV);
    let env = &s.env;
    let mut st0 = State::new();
    st0.fresh(&Context::new(), Term::cnst("N"), false);
    st0.fresh(&Context::new().with_decl(cicr_core::term::name("x"), Term::cnst("N")), Term::cnst("N"), false);
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut constructors = std::collections::HashSet::new();
    for src in CORPUS {
        let t = term(env, src);
        t.visit(&mut |u| {
            constructors.insert(std::mem::discriminant(u));
        });
        let ty = match Kernel::new(env, &st0.p, &st0.s).type_of(&Context::new(), &t) {
            Ok(ty) => ty,
            Err(e) => {
                failures.push(format!("`{src}` is not kernel-accepted: {e}"));
                continue;
            }
        };
        let mut st = st0.clone();
        match Refiner::new(env, &s.db, bi()).force(&mut st, &Context::new(), &t, &ty) {
            Ok(out) if alpha_eq(&out, &t) => {}
            Ok(out) => failures.push(format!("`{src}` came back as `{}`", show(&[], &out))),
            Err(e) => failures.push(format!("`{src}` failed: {e}")),
        }
    }
    let elapsed = start.elapsed();
    // every constructor except the two placeholder forms
    let covered = constructors.len() == 9;
    let ok = failures.is_empty() && CORPUS.len() >= 50 && covered && elapsed < COMPLETENESS_BUDGET;
    verdict(
        6,
        ok,
        format!(
            "{}/{} terms returned unchanged, all internal constructors covered: {covered}, {elapsed:?}{}",
            CORPUS.len() - failures.len(),
            CORPUS.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

// ---- 7 and 8 ----

struct FuzzStats {
    cases: usize,
    successes: usize,
    fuel: usize,
    ill_typed: Vec<String>,
    inadmissible: Vec<String>,
    non_monotone: Vec<String>,
}

fn fuzz() -> FuzzStats {
    let s = fuzz_session();
    let env = &s.env;
    let st0 = fuzz_state();
    let targets: Vec<Term> = TARGETS.iter().map(|t| term(env, t)).collect();
    let mut rng = StdRng::seed_from_u64(FUZZ_SEED);
    let mut stats =
        FuzzStats { cases: 0, successes: 0, fuel: 0, ill_typed: vec![], inadmissible: vec![], non_monotone: vec![] };
    for i in 0..FUZZ_CASES {
        let input = Gen { rng: &mut rng }.term(FUZZ_DEPTH, 0);
        let target = if i % 2 == 0 { None } else { Some(&targets[i / 2 % targets.len()]) };
        let mut st = st0.clone();
        let mut r = Refiner::new(env, &s.db, bi());
        let res = match target {
            None => r.infer(&mut st, &Context::new(), &input),
            Some(ty) => r.force(&mut st, &Context::new(), &input, ty).map(|t| (t, ty.clone())),
        };
        stats.cases += 1;
        let (out, ty) = match res {
            Ok(x) => x,
            Err(e) => {
                if e.is_fuel() {
                    stats.fuel += 1;
                }
                continue;
            }
        };
        stats.successes += 1;
        let (out, ty) = (st.zonk(&out), st.zonk(&ty));
        let shown = || show(&[], &input);
        if !typechecks(env, &st, &out, &ty) {
            stats.ill_typed.push(shown());
        }
        if !admissible(&s.db, &st, &input, &out) {
            stats.inadmissible.push(format!("{} ~> {}", shown(), show(&[], &out)));
        }
        if !(st.refines(&st0) && state_wf(env, &st)) {
            stats.non_monotone.push(shown());
        }
    }
    stats
}

fn correctness(f: &FuzzStats) -> Verdict {
    let ok = f.cases >= FUZZ_CASES && f.fuel == 0 && f.ill_typed.is_empty() && f.inadmissible.is_empty();
    let mut detail = format!(
        "{} cases, {} refined; ill-typed outputs {}, inadmissible outputs {}, fuel exhaustions {}",
        f.cases,
        f.successes,
        f.ill_typed.len(),
        f.inadmissible.len(),
        f.fuel
    );
    for e in f.ill_typed.iter().chain(&f.inadmissible).take(3) {
        detail.push_str(&format!("; e.g. {e}"));
    }
    verdict(7, ok, detail)
}

fn monotonicity(f: &FuzzStats) -> Verdict {
    let ok = f.successes > 0 && f.non_monotone.is_empty();
    let mut detail = format!(
        "{} successful cases, {} violate (P',S') <= (P,S) or well formedness",
        f.successes,
        f.non_monotone.len()
    );
    if let Some(e) = f.non_monotone.first() {
        detail.push_str(&format!("; e.g. {e}"));
    }
    verdict(8, ok, detail)
}

// ---- 9 ----

fn reduction_rules() -> Verdict {
    let s = session(COMPLETENESS_ENV);
    let env = &s.env;
    let ctx = Context::new().with_decl(cicr_core::term::name("n"), Term::cnst("N"));
    let mut p = ProofProblem::new();
    p.insert(0, cicr_core::term::MetaDecl { ctx: Context::new(), ty: Term::cnst("N"), sort: false });
    let mut sub = Substitution::new();
    sub.insert(1, MetaDef { ctx: Context::new(), body: Term::cnst("O"), ty: Term::cnst("N") });
    let step = |env: &GlobalEnv, src: &str| Machine::new(env, &p, &sub).whd_step(&ctx, &term(env, src)).ok().flatten();
    let cases: &[(Rule, &str, &str)] = &[
        (Rule::Beta, "(fun x : N => S x) O", "f O"),
        (Rule::Zeta, "let x : N := O in S x", "forall x : N, let y : N := x in N"),
        (Rule::DeltaConst, "gt 1 0", "le 1 0"),
        (Rule::DeltaMeta, "?1", "?0"),
        (
            Rule::Iota,
            "match S O in N return fun _ : N => N with | O => O | S (p : N) => p end",
            "match #0 in N return fun _ : N => N with | O => O | S (p : N) => p end",
        ),
        (Rule::Mu, "plus 1 #0", "plus #0 1"),
        (
            Rule::Nu,
            "match zeros in Stream return fun _ : Stream => N with | SCons (h : N) (t : Stream) => h end",
            "zeros",
        ),
    ];
    let mut bad = Vec::new();
    for (rule, fire, stay) in cases {
        if !matches!(step(env, fire), Some((_, r)) if r == *rule) {
            bad.push(format!("{rule:?} does not fire on `{fire}`"));
        }
        if step(env, stay).is_some() {
            bad.push(format!("`{stay}` reduces"));
        }
    }
    verdict(
        9,
        bad.is_empty(),
        format!("β ζ δ-const δ-meta ι μ ν: {} firing and {} non-firing checks{}", cases.len(), cases.len(), {
            if bad.is_empty() {
                String::new()
            } else {
                format!("; {}", bad.join("; "))
            }
        }),
    )
}

fn main() {
    let f = fuzz();
    let verdicts = vec![
        maximally_dependent(),
        appl_k(),
        coercion_side_conditions(),
        vectors(),
        binder_syntax(),
        completeness(),
        correctness(&f),
        monotonicity(&f),
        reduction_rules(),
    ];
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.ok).map(|v| v.n).collect();
    let passed = verdicts.len() - failed.len();
    println!("{passed}/{} criteria pass; known failures {KNOWN_FAILURES:?}", verdicts.len());
    if failed != KNOWN_FAILURES {
        eprintln!("unexpected acceptance results: failing {failed:?}");
        std::process::exit(1);
    }
}
