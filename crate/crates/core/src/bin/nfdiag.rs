//! Command-line front end: validation, automorphism inspection,
//! diagonalisation, and the verification suite over JSON documents.

use std::io::Read;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use nfdiag::automorphism::{Automorphism, CheckMode, TwistSpec};
use nfdiag::diagonalizer::{diagonalize_recorded, FaultInjection, Provenance};
use nfdiag::presets;
use nfdiag::tree::{NNTree, RawTree, VertexRef, SCHEMA};
use nfdiag::verifier::{verify_all, CheckStatus, VerifyConfig};

#[derive(Parser)]
#[command(
    name = "nfdiag",
    version,
    about = "Diagonalise periodic twisted-multiplicative automorphisms of free skew-fields"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct NumericOpts {
    /// Matrix sizes for numeric checks, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    sizes: Vec<usize>,
    /// Samples per size.
    #[arg(long, default_value_t = 5)]
    samples: u32,
    /// PRNG seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-8)]
    tol_rel: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol_abs: f64,
}

impl NumericOpts {
    fn config(&self, fault: Option<FaultInjection>) -> VerifyConfig {
        VerifyConfig {
            sizes: self.sizes.clone(),
            samples: self.samples,
            seed: self.seed,
            tol_rel: self.tol_rel,
            tol_abs: self.tol_abs,
            fault,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a tree document and report every violated constraint.
    Validate {
        /// Tree JSON path, or "-" for standard input.
        tree: String,
        /// Write the validation result as JSON to this path ("-" = stdout).
        #[arg(long)]
        json: Option<String>,
    },
    /// Print the letter map of the (optionally twisted) automorphism.
    Phi {
        tree: String,
        #[arg(long)]
        twist: Option<String>,
        #[arg(long)]
        json: Option<String>,
    },
    /// Print the word-exact order of the automorphism.
    Order { tree: String },
    /// Print the orbit periods per vertex.
    Lambda {
        tree: String,
        #[arg(long)]
        json: Option<String>,
    },
    /// Synthesize the diagonal generating set and verify it.
    Diagonalize {
        tree: String,
        #[arg(long)]
        twist: Option<String>,
        #[command(flatten)]
        numeric: NumericOpts,
        /// Write the result JSON to this path ("-" = stdout, the default).
        #[arg(long)]
        json: Option<String>,
    },
    /// Run the full verification suite and emit a report.
    Verify {
        tree: String,
        #[arg(long)]
        twist: Option<String>,
        #[command(flatten)]
        numeric: NumericOpts,
        /// Corrupt one internal quantity (negative control):
        /// wrong-xi | wrong-wrap | wrong-vandermonde.
        #[arg(long, value_parser = parse_fault)]
        inject_fault: Option<FaultInjection>,
        #[arg(long)]
        json: Option<String>,
    },
    /// Print a built-in example (ex1 or ex2) as a combined tree+twist document.
    Preset { name: String },
}

fn parse_fault(s: &str) -> Result<FaultInjection, String> {
    FaultInjection::parse(s).ok_or_else(|| {
        format!("unknown fault {s:?}; use wrong-xi, wrong-wrap or wrong-vandermonde")
    })
}

fn read_input(path: &str) -> Result<String, String> {
    if path == "-" {
        let mut buf = String::new();
        std::io::stdin()
            .read_to_string(&mut buf)
            .map_err(|e| format!("reading stdin: {e}"))?;
        Ok(buf)
    } else {
        std::fs::read_to_string(path).map_err(|e| format!("reading {path}: {e}"))
    }
}

fn write_output(path: &str, content: &str) -> Result<(), String> {
    if path == "-" {
        println!("{content}");
        Ok(())
    } else {
        std::fs::write(path, content).map_err(|e| format!("writing {path}: {e}"))
    }
}

/// Accepts either a bare tree document or a combined {tree, twist} document
/// (as produced by `preset`); an explicit --twist overrides the embedded one.
fn load_inputs(tree_path: &str, twist_path: &Option<String>) -> Result<(RawTree, TwistSpec), String> {
    let text = read_input(tree_path)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("parsing tree: {e}"))?;
    let (tree_value, embedded_twist) = if value.get("tree").is_some() {
        (value["tree"].clone(), value.get("twist").cloned())
    } else {
        (value, None)
    };
    let raw: RawTree =
        serde_json::from_value(tree_value).map_err(|e| format!("parsing tree: {e}"))?;
    let twist = match twist_path {
        Some(p) => TwistSpec::from_json(&read_input(p)?).map_err(|e| e.to_string())?,
        None => match embedded_twist {
            Some(t) => TwistSpec::from_json(&t.to_string()).map_err(|e| e.to_string())?,
            None => TwistSpec::none(),
        },
    };
    Ok((raw, twist))
}

fn validate_tree(raw: &RawTree) -> Result<Arc<NNTree>, String> {
    match NNTree::validate(raw) {
        Ok(t) => Ok(Arc::new(t)),
        Err(e) => {
            let lines: Vec<String> = e.violations().iter().map(|v| v.to_string()).collect();
            if lines.is_empty() {
                Err(e.to_string())
            } else {
                Err(lines.join("\n"))
            }
        }
    }
}

fn build_aut(raw: &RawTree, twist: &TwistSpec) -> Result<Automorphism, String> {
    let tree = validate_tree(raw)?;
    Automorphism::build(tree, twist, CheckMode::Checked).map_err(|e| e.to_string())
}

fn provenance_json(tree: &NNTree, p: &Provenance) -> Value {
    match p {
        Provenance::Vertex { vertex, j, m } => json!({
            "block": "vertex",
            "vertex": tree.vertices()[*vertex].id,
            "j": j,
            "m": m,
        }),
        Provenance::Pair { pair, m } => {
            let pf = &tree.pairs()[*pair];
            json!({
                "block": "pair",
                "e": tree.vertex_id(pf.e),
                "f": tree.vertex_id(pf.f),
                "index": pf.index,
                "m": m,
            })
        }
    }
}

fn cmd_validate(tree: &str, json_out: &Option<String>) -> Result<ExitCode, String> {
    let text = read_input(tree)?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("parsing tree: {e}"))?;
    let tree_value = if value.get("tree").is_some() {
        value["tree"].clone()
    } else {
        value
    };
    let raw: RawTree =
        serde_json::from_value(tree_value).map_err(|e| format!("parsing tree: {e}"))?;
    match NNTree::validate(&raw) {
        Ok(t) => {
            let t = Arc::new(t);
            let alphabet = t.alphabet();
            let letters: Vec<&str> = alphabet.iter().map(|(_, l)| l.name.as_str()).collect();
            let doc = json!({
                "schema": SCHEMA,
                "valid": true,
                "n1": t.n1(),
                "alphabet": letters,
                "violations": [],
            });
            match json_out {
                Some(p) => write_output(p, &serde_json::to_string_pretty(&doc).unwrap())?,
                None => println!("valid: n1 = {}, {} letters", t.n1(), alphabet.len()),
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            let violations: Vec<String> = e.violations().iter().map(|v| v.to_string()).collect();
            let doc = json!({
                "schema": SCHEMA,
                "valid": false,
                "violations": violations,
            });
            match json_out {
                Some(p) => write_output(p, &serde_json::to_string_pretty(&doc).unwrap())?,
                None => {
                    eprintln!("invalid tree:");
                    for v in &violations {
                        eprintln!("  {v}");
                    }
                    if violations.is_empty() {
                        eprintln!("  {e}");
                    }
                }
            }
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_phi(tree: &str, twist: &Option<String>, json_out: &Option<String>) -> Result<ExitCode, String> {
    let (raw, twist) = load_inputs(tree, twist)?;
    let aut = build_aut(&raw, &twist)?;
    let alphabet = aut.alphabet().clone();
    let mut lines = Vec::new();
    let mut entries = serde_json::Map::new();
    for (id, letter) in alphabet.iter() {
        let coeff = aut.twist_of(id);
        let word = aut.image_word(id);
        let text = if coeff.is_one() {
            format!("{word}")
        } else {
            format!("{coeff} * {word}")
        };
        lines.push(format!("{} -> {}", letter.name, text));
        entries.insert(letter.name.clone(), json!(text));
    }
    match json_out {
        Some(p) => {
            let doc = json!({"schema": SCHEMA, "phi": Value::Object(entries)});
            write_output(p, &serde_json::to_string_pretty(&doc).unwrap())?;
        }
        None => {
            for l in lines {
                println!("{l}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_order(tree: &str) -> Result<ExitCode, String> {
    let (raw, _) = load_inputs(tree, &None)?;
    let aut = build_aut(&raw, &TwistSpec::none())?;
    println!("{}", aut.order());
    Ok(ExitCode::SUCCESS)
}

fn cmd_lambda(tree: &str, json_out: &Option<String>) -> Result<ExitCode, String> {
    let (raw, _) = load_inputs(tree, &None)?;
    let aut = build_aut(&raw, &TwistSpec::none())?;
    let mut entries = serde_json::Map::new();
    let mut lines = Vec::new();
    for (vi, v) in aut.tree().vertices().iter().enumerate() {
        let info = aut.lambda(VertexRef::NonRoot(vi));
        lines.push(format!("{}: lambda = {}, u = {}", v.id, info.lambda, info.u));
        entries.insert(v.id.clone(), json!({"lambda": info.lambda, "u": info.u}));
    }
    match json_out {
        Some(p) => {
            let doc = json!({"schema": SCHEMA, "lambda": Value::Object(entries)});
            write_output(p, &serde_json::to_string_pretty(&doc).unwrap())?;
        }
        None => {
            for l in lines {
                println!("{l}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_diagonalize(
    tree: &str,
    twist: &Option<String>,
    numeric: &NumericOpts,
    json_out: &Option<String>,
) -> Result<ExitCode, String> {
    let (raw, twist) = load_inputs(tree, twist)?;
    let aut = build_aut(&raw, &twist)?;
    let mut records = Vec::new();
    let diag = diagonalize_recorded(&aut, None, &mut records).map_err(|e| e.to_string())?;
    for r in &records {
        if !r.passed {
            return Err(format!("post-check {} failed: {}", r.name, r.detail));
        }
    }
    let report = verify_all(aut.tree().clone(), &twist, &numeric.config(None));

    let tree_ref = aut.tree();
    let generators: Vec<Value> = diag
        .basis
        .generators
        .iter()
        .map(|g| {
            json!({
                "name": g.name,
                "eigenvalue": g.eigenvalue.to_string(),
                "eigenvalue_json": nfdiag::scalar::Coefficient::from_term(g.eigenvalue.clone()).to_json(),
                "provenance": provenance_json(tree_ref, &g.provenance),
                "expr": g.expr.to_json(),
            })
        })
        .collect();
    let inverse: serde_json::Map<String, Value> = diag
        .basis
        .inverse
        .iter()
        .map(|(k, v)| (k.clone(), v.to_json()))
        .collect();
    let doc = json!({
        "schema": SCHEMA,
        "n1": tree_ref.n1(),
        "conductor": aut.ctx().conductor(),
        "generators": generators,
        "inverse": Value::Object(inverse),
        "report": report.to_json(),
    });
    let out = serde_json::to_string_pretty(&doc).unwrap();
    match json_out {
        Some(p) => write_output(p, &out)?,
        None => println!("{out}"),
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn cmd_verify(
    tree: &str,
    twist: &Option<String>,
    numeric: &NumericOpts,
    fault: Option<FaultInjection>,
    json_out: &Option<String>,
) -> Result<ExitCode, String> {
    let (raw, twist) = load_inputs(tree, twist)?;
    let tree = validate_tree(&raw)?;
    let report = verify_all(tree, &twist, &numeric.config(fault));
    if let Some(p) = json_out {
        write_output(p, &report.to_json_string())?;
    }
    let mut pass = 0;
    let mut fail = 0;
    for c in &report.checks {
        if c.status == CheckStatus::Pass {
            pass += 1;
        } else {
            fail += 1;
            eprintln!("FAIL {} [{}]", c.name, c.detail);
        }
    }
    println!(
        "{}: {} checks passed, {} failed (n1 = {}, |S| = {}, invariant count = {})",
        if report.passed() { "PASS" } else { "FAIL" },
        pass,
        fail,
        report.n1,
        report.alphabet_size,
        report.invariant_generator_count
    );
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn cmd_preset(name: &str) -> Result<ExitCode, String> {
    match presets::preset_json(name) {
        Some(doc) => {
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            Ok(ExitCode::SUCCESS)
        }
        None => Err(format!("unknown preset {name:?}; available: ex1, ex2")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { tree, json } => cmd_validate(tree, json),
        Command::Phi { tree, twist, json } => cmd_phi(tree, twist, json),
        Command::Order { tree } => cmd_order(tree),
        Command::Lambda { tree, json } => cmd_lambda(tree, json),
        Command::Diagonalize {
            tree,
            twist,
            numeric,
            json,
        } => cmd_diagonalize(tree, twist, numeric, json),
        Command::Verify {
            tree,
            twist,
            numeric,
            inject_fault,
            json,
        } => cmd_verify(tree, twist, numeric, *inject_fault, json),
        Command::Preset { name } => cmd_preset(name),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
