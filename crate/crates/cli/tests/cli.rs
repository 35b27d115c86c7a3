use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scripts() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts")
}

fn refine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refine")).args(args).output().unwrap()
}

fn script(dir: &tempfile::TempDir, name: &str, src: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, src).unwrap();
    p.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn checks_an_example() {
    let prelude = scripts().join("prelude.v");
    let ex = scripts().join("ex_intro.v");
    let o = refine(&["check", prelude.to_str().unwrap(), ex.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("check Ex_intro N (fun x : N => gt x 0) 2 p : Ex N (fun x : N => gt x 0)."));
}

#[test]
fn mono_fails_where_propagation_succeeds() {
    let prelude = scripts().join("prelude.v");
    let ex = scripts().join("ex_intro.v");
    let o = refine(&["check", "--mono", prelude.to_str().unwrap(), ex.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("(* error: "), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let nat = script(&dir, "nat.v", "inductive N : Type := | O : N | S : N -> N.\n");
    let bad_syntax = script(&dir, "syntax.v", "check (fun.");
    let ill_typed = script(&dir, "type.v", "check O : O.");
    let slow = script(&dir, "slow.v", "check (fun x : N => x) (S (S O)) : N.");
    let open = script(&dir, "open.v", "definition d : N := ?.");

    assert_eq!(refine(&["check", &nat]).status.code(), Some(0));
    assert_eq!(refine(&["check", &bad_syntax]).status.code(), Some(2));
    assert_eq!(refine(&["check", &nat, &ill_typed]).status.code(), Some(1));
    assert_eq!(refine(&["check", "--max-steps", "2", &nat, &slow]).status.code(), Some(3));
    assert_eq!(refine(&["check", &nat, &open]).status.code(), Some(1));
    assert_eq!(refine(&["check", "--allow-obligations", &nat, &open]).status.code(), Some(0));
    assert_eq!(refine(&["check", "missing.v"]).status.code(), Some(2));
}

#[test]
fn errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let nat = script(&dir, "nat.v", "inductive N : Type := | O : N | S : N -> N.\n");
    let bad = script(&dir, "bad.v", "check S O.\ncheck O O.");
    let out = stdout(&refine(&["check", &nat, &bad]));
    assert!(out.contains(&format!("(* error: {bad}:2:")), "{out}");
}

#[test]
fn trace_goes_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let nat = script(&dir, "nat.v", "inductive N : Type := | O : N | S : N -> N.\ncheck S ?.");
    let trace = dir.path().join("trace.txt");
    let o = refine(&["check", "--allow-obligations", "--trace-file", trace.to_str().unwrap(), &nat]);
    assert_eq!(o.status.code(), Some(0));
    let lines = fs::read_to_string(&trace).unwrap();
    assert!(lines.lines().any(|l| l.contains("infer-constant")), "{lines}");
    assert!(o.stderr.is_empty());

    let o = refine(&["check", "--allow-obligations", "--trace", &nat]);
    assert!(String::from_utf8(o.stderr).unwrap().contains("infer-constant"));
}
