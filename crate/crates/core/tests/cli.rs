//! End-to-end tests of the command-line interface, including the piping
//! contract between `preset` and the consuming subcommands.

use std::io::Write;
use std::process::{Command, Stdio};

fn nfdiag() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nfdiag"))
}

fn run_with_stdin(args: &[&str], stdin: &str) -> (String, String, Option<i32>) {
    let mut child = nfdiag()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn nfdiag");
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    let out = child.wait_with_output().unwrap();
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
        out.status.code(),
    )
}

fn run(args: &[&str]) -> (String, String, Option<i32>) {
    let out = nfdiag().args(args).output().expect("run nfdiag");
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
        out.status.code(),
    )
}

fn preset(name: &str) -> String {
    let (out, _, code) = run(&["preset", name]);
    assert_eq!(code, Some(0));
    out
}

#[test]
fn preset_pipes_into_diagonalize() {
    let doc = preset("ex1");
    let (out, err, code) = run_with_stdin(
        &["diagonalize", "-", "--sizes", "2,3", "--samples", "2"],
        &doc,
    );
    assert_eq!(code, Some(0), "stderr: {err}");
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();
    let generators = parsed["generators"].as_array().unwrap();
    assert_eq!(generators.len(), 1);
    assert_eq!(generators[0]["eigenvalue"], "-1");
    assert_eq!(parsed["report"]["summary"], "pass");
}

#[test]
fn order_of_example_trees() {
    let doc = preset("ex2");
    let (out, _, code) = run_with_stdin(&["order", "-"], &doc);
    assert_eq!(code, Some(0));
    assert_eq!(out.trim(), "3");

    let doc = preset("ex1");
    let (out, _, code) = run_with_stdin(&["order", "-"], &doc);
    assert_eq!(code, Some(0));
    assert_eq!(out.trim(), "2");
}

#[test]
fn lambda_output() {
    let doc = preset("ex2");
    let (out, _, code) = run_with_stdin(&["lambda", "-"], &doc);
    assert_eq!(code, Some(0));
    assert!(out.contains("b: lambda = 3, u = 1"), "{out}");
}

#[test]
fn phi_prints_letter_map() {
    let doc = preset("ex2");
    let (out, _, code) = run_with_stdin(&["phi", "-"], &doc);
    assert_eq!(code, Some(0));
    assert!(out.contains("b.0 -> c * b.1"), "{out}");
    assert!(out.contains("b.1 -> d * b.1^-1 b.0^-1"), "{out}");
}

#[test]
fn validate_rejects_bad_tree_with_exit_one() {
    let bad = r#"{"n": 2, "vertices": [{"id": "b", "parent": "a", "tau": 2, "gamma": 1, "beta": 2, "alpha": 2}], "pairs": []}"#;
    let (_, err, code) = run_with_stdin(&["validate", "-"], bad);
    assert_eq!(code, Some(1));
    assert!(err.contains("gamma must exceed 1"), "{err}");
}

#[test]
fn validate_accepts_good_tree() {
    let doc = preset("ex1");
    let (out, _, code) = run_with_stdin(&["validate", "-"], &doc);
    assert_eq!(code, Some(0));
    assert!(out.contains("valid"), "{out}");
}

#[test]
fn verify_fails_with_exit_two_under_fault_injection() {
    let doc = preset("ex1");
    let (_, _, code) = run_with_stdin(
        &[
            "verify", "-", "--sizes", "2", "--samples", "1", "--inject-fault", "wrong-xi",
        ],
        &doc,
    );
    assert_eq!(code, Some(2));
}

#[test]
fn emitted_artifacts_reparse() {
    use nfdiag::automorphism::TwistSpec;
    use nfdiag::ratexpr::RationalExpr;
    use nfdiag::tree::{NNTree, RawTree};
    use std::sync::Arc;

    let doc = preset("ex2");
    let (out, err, code) = run_with_stdin(
        &["diagonalize", "-", "--sizes", "2", "--samples", "1"],
        &doc,
    );
    assert_eq!(code, Some(0), "stderr: {err}");
    let parsed: serde_json::Value = serde_json::from_str(&out).unwrap();

    // The preset document itself round-trips through the typed model.
    let preset_doc: serde_json::Value = serde_json::from_str(&doc).unwrap();
    let raw: RawTree = serde_json::from_value(preset_doc["tree"].clone()).unwrap();
    let tree = Arc::new(NNTree::validate(&raw).unwrap());
    assert_eq!(serde_json::to_value(tree.to_raw()).unwrap(), preset_doc["tree"]);
    let twist = TwistSpec::from_json(&preset_doc["twist"].to_string()).unwrap();
    assert_eq!(twist.to_json(), preset_doc["twist"]);

    // Expression DAGs re-parse into equal in-memory values.
    let aut = nfdiag::automorphism::Automorphism::build(
        tree,
        &twist,
        nfdiag::automorphism::CheckMode::Checked,
    )
    .unwrap();
    let diag = nfdiag::diagonalizer::diagonalize(&aut).unwrap();
    for (i, g) in diag.basis.generators.iter().enumerate() {
        let emitted = &parsed["generators"][i]["expr"];
        let back = RationalExpr::from_json(aut.ctx(), aut.alphabet(), emitted).unwrap();
        assert_eq!(back, g.expr, "generator {i} expression mismatch");
    }
    for (letter, expr) in &diag.basis.inverse {
        let emitted = &parsed["inverse"][letter];
        let back =
            RationalExpr::from_json(aut.ctx(), &diag.basis.generator_alphabet, emitted).unwrap();
        assert_eq!(&back, expr, "inverse expression mismatch for {letter}");
    }
}
