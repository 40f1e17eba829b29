//! Orchestrated verification: the exact orbit and synthesis identities, the
//! order check, distinctness certificates, numeric eigen checks on every
//! emitted generator, and the back-substitution round-trip, collected into a
//! deterministic machine-readable report.
//!
//! Failures never abort the run; each lands as a report entry so a single
//! report localizes multiple problems.  Exact checks precede numeric ones in
//! the run, and the final report is sorted by check name.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::complex::Complex64;
use rand::Rng;
use serde::Serialize;
use serde_json::Value;

use crate::automorphism::{Automorphism, CheckMode, TwistSpec};
use crate::diagonalizer::{
    diagonalize_recorded, Diagonalisation, FaultInjection,
};
use crate::ratexpr::{probable_equal, sample_rng, EqualityConfig, MatrixPoint, RationalExpr, Verdict};
use crate::scalar::Coefficient;
use crate::tree::{NNTree, VertexRef, SCHEMA};
use crate::word::FreeWord;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct VerifyConfig {
    pub sizes: Vec<usize>,
    pub samples: u32,
    pub seed: u64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    /// Random (vertex, index) draws per orbit-identity family.
    pub orbit_samples: u32,
    /// Scale the round-trip tolerance by the largest intermediate matrix
    /// norm instead of the output norm alone.  Off by default; meant for
    /// stress corpora whose expression depth exceeds what tol_rel times the
    /// output scale can certify in double precision.
    pub conditioning_aware: bool,
    #[serde(skip)]
    pub fault: Option<FaultInjection>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            sizes: vec![3, 4, 5],
            samples: 5,
            seed: 0,
            tol_rel: 1e-8,
            tol_abs: 1e-10,
            orbit_samples: 20,
            conditioning_aware: false,
            fault: None,
        }
    }
}

impl VerifyConfig {
    fn equality(&self) -> EqualityConfig {
        EqualityConfig {
            sizes: self.sizes.clone(),
            samples: self.samples,
            seed: self.seed,
            tol_rel: self.tol_rel,
            tol_abs: self.tol_abs,
            retry_budget: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CheckLevel {
    Exact,
    Numeric,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Degenerate,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckEntry {
    pub name: String,
    pub level: CheckLevel,
    pub status: CheckStatus,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u32>,
}

impl CheckEntry {
    fn exact(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        CheckEntry {
            name: name.into(),
            level: CheckLevel::Exact,
            status: if passed { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: detail.into(),
            residual: None,
            seed: None,
            sizes: None,
            trials: None,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerificationReport {
    pub schema: String,
    pub tree_digest: String,
    pub n: u64,
    pub n1: u64,
    pub conductor: u64,
    pub alphabet_size: usize,
    /// Reference count of free generators of the invariant skew-field
    /// under the cyclic action: n * (|S| - 1) + 1.
    pub invariant_generator_count: u64,
    pub summary: CheckStatus,
    pub config: VerifyConfig,
    pub checks: Vec<CheckEntry>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.summary == CheckStatus::Pass
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serialization cannot fail")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("report serialization cannot fail")
    }
}

/// Deterministic nonzero assignment for the twist symbols.  Magnitudes stay
/// near 1: coefficient recurrences multiply long chains of these values, so a
/// wide magnitude window would blow up the dynamic range of the synthesized
/// coefficients and with it the floating-point error of the numeric checks.
pub fn symbol_assignment(symbols: &[String], seed: u64) -> BTreeMap<String, Complex64> {
    let mut rng = sample_rng(seed, 0, u64::MAX);
    let mut out = BTreeMap::new();
    for s in symbols {
        let r = 0.8 + 0.45 * rng.random::<f64>();
        let theta = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        out.insert(s.clone(), Complex64::new(r * theta.cos(), r * theta.sin()));
    }
    out
}

/// Runs the full check suite.  All checks always run; failures are entries.
pub fn verify_all(tree: Arc<NNTree>, twist: &TwistSpec, cfg: &VerifyConfig) -> VerificationReport {
    let mut checks: Vec<CheckEntry> = Vec::new();
    let n1 = tree.n1();
    let alphabet_size = tree.alphabet().len();
    let digest = tree.digest();
    let invariant_count = tree.n * (alphabet_size.max(1) as u64 - 1) + 1;

    checks.push(CheckEntry::exact(
        "construction.tree",
        true,
        format!("validated; n1 = {n1}, |S| = {alphabet_size}"),
    ));

    let aut = match Automorphism::build(tree.clone(), twist, CheckMode::Checked) {
        Ok(aut) => aut,
        Err(e) => {
            checks.push(CheckEntry::exact("construction.automorphism", false, e.to_string()));
            return finish(tree.n, n1, 0, alphabet_size, invariant_count, digest, cfg, checks);
        }
    };
    let conductor = aut.ctx().conductor();
    checks.push(CheckEntry::exact(
        "construction.automorphism",
        true,
        format!("conductor {conductor}"),
    ));

    // Word-exact order must equal n1, witnessed by the full scan.
    let found = aut.order();
    checks.push(CheckEntry::exact(
        "construction.order",
        found == n1,
        format!("order {found}, n1 {n1}"),
    ));

    orbit_identity_checks(&aut, cfg, &mut checks);
    distinctness_checks(&aut, &mut checks);

    // Synthesis with its exact post-checks.
    let mut records = Vec::new();
    let diag = match diagonalize_recorded(&aut, cfg.fault, &mut records) {
        Ok(d) => {
            for r in &records {
                checks.push(CheckEntry::exact(format!("synth.{}", r.name), r.passed, r.detail.clone()));
            }
            d
        }
        Err(e) => {
            for r in &records {
                checks.push(CheckEntry::exact(format!("synth.{}", r.name), r.passed, r.detail.clone()));
            }
            checks.push(CheckEntry::exact("synth.complete", false, e.to_string()));
            return finish(tree.n, n1, conductor, alphabet_size, invariant_count, digest, cfg, checks);
        }
    };

    numeric_eigen_checks(&aut, &diag, cfg, &mut checks);
    roundtrip_checks(&aut, &diag, cfg, &mut checks);

    finish(tree.n, n1, conductor, alphabet_size, invariant_count, digest, cfg, checks)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    n: u64,
    n1: u64,
    conductor: u64,
    alphabet_size: usize,
    invariant_generator_count: u64,
    tree_digest: String,
    cfg: &VerifyConfig,
    mut checks: Vec<CheckEntry>,
) -> VerificationReport {
    checks.sort_by(|a, b| a.name.cmp(&b.name));
    let all_pass = checks.iter().all(|c| c.status == CheckStatus::Pass);
    VerificationReport {
        schema: SCHEMA.to_string(),
        tree_digest,
        n,
        n1,
        conductor,
        alphabet_size,
        invariant_generator_count,
        summary: if all_pass { CheckStatus::Pass } else { CheckStatus::Fail },
        config: cfg.clone(),
        checks,
    }
}

/// Word-exact orbit identities sampled at random indices:
/// the step/fold/block identities, the period identity, and the twisted
/// coefficient bookkeeping.
fn orbit_identity_checks(aut: &Automorphism, cfg: &VerifyConfig, checks: &mut Vec<CheckEntry>) {
    let tree = aut.tree().clone();
    let mut rng = sample_rng(cfg.seed, 1, u64::MAX - 1);
    for (vi, vert) in tree.vertices().iter().enumerate() {
        let v = VertexRef::NonRoot(vi);
        let parent = vert.parent;
        let lambda = aut.lambda(v).lambda;
        let id = &vert.id;

        let mut step_ok = true;
        let mut fold_ok = true;
        let mut block_ok = true;
        let mut period_ok = true;
        let mut bookkeeping_ok = true;
        let mut detail = String::new();

        for _ in 0..cfg.orbit_samples {
            let j = rng.random_range(0..3 * lambda.max(1));
            // D_{(beta+j)tau} = M(0, beta+j)^-1 M(0, j+1) M_c((j+1)tau, alpha)
            let lhs = aut.d_word(v, (vert.beta + j) * vert.tau);
            let rhs = aut
                .m_word(v, 0, vert.beta + j)
                .invert()
                .concat(&aut.m_word(v, 0, j + 1))
                .and_then(|w| w.concat(&aut.m_word(parent, (j + 1) * vert.tau, vert.alpha)));
            match rhs {
                Ok(rhs) if lhs == rhs => {}
                _ => {
                    step_ok = false;
                    detail = format!("step identity failed at j = {j}");
                }
            }
            // M(0, beta+j) = M(0, j) M_c(j tau, alpha)
            let lhs = aut.m_word(v, 0, vert.beta + j);
            let rhs = aut
                .m_word(v, 0, j)
                .concat(&aut.m_word(parent, j * vert.tau, vert.alpha));
            match rhs {
                Ok(rhs) if lhs == rhs => {}
                _ => {
                    fold_ok = false;
                    detail = format!("fold identity failed at j = {j}");
                }
            }
            // M(i, k beta + j) = M(i, j) M_c(j tau + i, k alpha)
            let i = rng.random_range(0..vert.tau);
            let k = rng.random_range(0..3);
            let jj = rng.random_range(0..vert.beta);
            let lhs = aut.m_word(v, i, k * vert.beta + jj);
            let rhs = aut
                .m_word(v, i, jj)
                .concat(&aut.m_word(parent, jj * vert.tau + i, k * vert.alpha));
            match rhs {
                Ok(rhs) if lhs == rhs => {}
                _ => {
                    block_ok = false;
                    detail = format!("block identity failed at i={i}, k={k}, j={jj}");
                }
            }
            // M(j, lambda) = 1 for every offset.
            let off = rng.random_range(0..2 * lambda.max(1));
            if !aut.m_word(v, off, lambda).is_identity() {
                period_ok = false;
                detail = format!("period identity failed at offset {off}");
            }
            // phi(M(j,k)) = m(j+1,k) M(j+1,k)
            let bj = rng.random_range(0..2 * lambda.max(1));
            let bk = rng.random_range(0..=lambda);
            let m = aut.m_word(v, bj, bk);
            let (t, img) = aut.apply_word(&m);
            if img != aut.m_word(v, bj + 1, bk) || t != aut.step_product(v, bj + 1, bk) {
                bookkeeping_ok = false;
                detail = format!("bookkeeping failed at j={bj}, k={bk}");
            }
        }

        checks.push(CheckEntry::exact(format!("orbit.step.{id}"), step_ok, detail.clone()));
        checks.push(CheckEntry::exact(format!("orbit.fold.{id}"), fold_ok, detail.clone()));
        checks.push(CheckEntry::exact(format!("orbit.block.{id}"), block_ok, detail.clone()));
        checks.push(CheckEntry::exact(format!("orbit.period.{id}"), period_ok, detail.clone()));
        checks.push(CheckEntry::exact(
            format!("orbit.bookkeeping.{id}"),
            bookkeeping_ok,
            detail.clone(),
        ));

        // Period divisibilities: beta | lambda and lambda | gamma.
        checks.push(CheckEntry::exact(
            format!("period.bounds.{id}"),
            lambda.is_multiple_of(vert.beta) && vert.gamma % lambda == 0,
            format!("lambda = {lambda}, beta = {}, gamma = {}", vert.beta, vert.gamma),
        ));
    }
}

/// Distinctness certificates behind every inversion the synthesis performs.
fn distinctness_checks(aut: &Automorphism, checks: &mut Vec<CheckEntry>) {
    let tree = aut.tree().clone();
    for (vi, vert) in tree.vertices().iter().enumerate() {
        let v = VertexRef::NonRoot(vi);
        let lambda = aut.lambda(v).lambda;
        let mut ok = true;
        for i in 0..vert.tau {
            let words: Vec<FreeWord> = (0..lambda).map(|k| aut.m_word(v, i, k)).collect();
            for a in 0..words.len() {
                for b in a + 1..words.len() {
                    if words[a] == words[b] {
                        ok = false;
                    }
                }
            }
        }
        checks.push(CheckEntry::exact(
            format!("distinct.vertex.{}", vert.id),
            ok,
            format!("orbit words up to lambda = {lambda}"),
        ));
    }
    for (pi, pair) in tree.pairs().iter().enumerate() {
        let (u, v) = aut.pair_uv(pi);
        let (_, tf) = tree.gamma_tau(pair.f);
        let len = pair.rho * tf;
        let mut ok = true;
        for j in 0..len {
            let left: Vec<FreeWord> = (0..u).map(|k| aut.m_word(pair.f, j, k * pair.rho)).collect();
            let right: Vec<FreeWord> = (0..v)
                .map(|k| aut.m_word(pair.e, j + pair.eta, k * pair.delta))
                .collect();
            for ws in [&left, &right] {
                for a in 0..ws.len() {
                    for b in a + 1..ws.len() {
                        if ws[a] == ws[b] {
                            ok = false;
                        }
                    }
                }
            }
        }
        checks.push(CheckEntry::exact(
            format!(
                "distinct.pair.{}.{}.{}",
                tree.vertex_id(pair.e),
                tree.vertex_id(pair.f),
                pair.index
            ),
            ok,
            format!("u = {u}, v = {v}"),
        ));
    }
}

/// phi(g) = theta g numerically for every emitted generator.
fn numeric_eigen_checks(
    aut: &Automorphism,
    diag: &Diagonalisation,
    cfg: &VerifyConfig,
    checks: &mut Vec<CheckEntry>,
) {
    let symbols = aut.twist_symbols();
    let assignment = symbol_assignment(&symbols, cfg.seed);
    let eq = cfg.equality();
    for g in &diag.basis.generators {
        let lhs = aut.apply_expr(&g.expr);
        let rhs = RationalExpr::scale(Coefficient::from_term(g.eigenvalue.clone()), g.expr.clone());
        let verdict = probable_equal(&lhs, &rhs, aut.alphabet(), &assignment, &eq);
        let (status, residual, trials, detail) = match verdict {
            Verdict::EqualWhp { max_residual, trials } => {
                (CheckStatus::Pass, Some(max_residual), Some(trials), String::new())
            }
            Verdict::Distinct { size, sample, residual } => (
                CheckStatus::Fail,
                Some(residual),
                None,
                format!("witness at size {size}, sample {sample}"),
            ),
            Verdict::Degenerate { detail } => (CheckStatus::Degenerate, None, None, detail),
        };
        checks.push(CheckEntry {
            name: format!("numeric.eigen.{}", g.name),
            level: CheckLevel::Numeric,
            status,
            detail,
            residual,
            seed: Some(cfg.seed),
            sizes: Some(cfg.sizes.clone()),
            trials,
        });
    }
}

/// Back-substitution round-trip: every letter's expression over the new
/// generators reproduces the letter's own matrix at random points.
fn roundtrip_checks(
    aut: &Automorphism,
    diag: &Diagonalisation,
    cfg: &VerifyConfig,
    checks: &mut Vec<CheckEntry>,
) {
    let symbols = aut.twist_symbols();
    let assignment = symbol_assignment(&symbols, cfg.seed);
    let alphabet = aut.alphabet();
    let mut results: BTreeMap<String, (f64, u32)> = BTreeMap::new();
    let mut failures: BTreeMap<String, String> = BTreeMap::new();

    for &size in &cfg.sizes {
        let mut done = 0u32;
        let mut attempt = 0u64;
        let mut budget = 8u32;
        while done < cfg.samples {
            let mut rng = sample_rng(cfg.seed, size, attempt);
            attempt += 1;
            let pt =
                MatrixPoint::random(alphabet, &[], size, &mut rng).with_scalars(assignment.clone());
            // Evaluate every generator at the point.
            let mut gen_matrices = BTreeMap::new();
            let mut ok = true;
            for (idx, g) in diag.basis.generators.iter().enumerate() {
                match g.expr.evaluate(&pt) {
                    Ok(m) => {
                        gen_matrices.insert(idx as u32, m);
                    }
                    Err(e) => {
                        ok = false;
                        failures.insert("<generator evaluation>".into(), e.to_string());
                        break;
                    }
                }
            }
            if !ok {
                if budget == 0 {
                    break;
                }
                budget -= 1;
                continue;
            }
            let gen_pt = match MatrixPoint::new(size, gen_matrices, assignment.clone()) {
                Ok(p) => p,
                Err(_) => {
                    // A singular generator value; resample the base point.
                    if budget == 0 {
                        break;
                    }
                    budget -= 1;
                    continue;
                }
            };
            let mut sample_ok = true;
            for (letter, expr) in &diag.basis.inverse {
                let id = alphabet.id_of(letter).expect("inverse keys are letters");
                match expr.evaluate_tracked(&gen_pt) {
                    Ok((recovered, max_norm)) => {
                        let direct = &pt.matrices[&id];
                        let resid = (&recovered - direct).norm();
                        let scale = if cfg.conditioning_aware {
                            (direct.norm() + recovered.norm()).max(max_norm)
                        } else {
                            direct.norm() + recovered.norm()
                        };
                        let tol = cfg.tol_abs + cfg.tol_rel * scale;
                        let entry = results.entry(letter.clone()).or_insert((0.0, 0));
                        entry.0 = entry.0.max(resid);
                        entry.1 += 1;
                        if resid > tol {
                            failures.insert(letter.clone(), format!("residual {resid:.3e} at size {size}"));
                        }
                    }
                    Err(e) => {
                        sample_ok = false;
                        failures.entry(letter.clone()).or_insert_with(|| e.to_string());
                    }
                }
            }
            if sample_ok {
                done += 1;
            } else if budget == 0 {
                break;
            } else {
                budget -= 1;
            }
        }
    }

    for letter in diag.basis.inverse.keys() {
        let (residual, trials) = results.get(letter).copied().unwrap_or((0.0, 0));
        let failed = failures.contains_key(letter);
        let status = if failed {
            CheckStatus::Fail
        } else if trials == 0 {
            CheckStatus::Degenerate
        } else {
            CheckStatus::Pass
        };
        checks.push(CheckEntry {
            name: format!("numeric.roundtrip.{letter}"),
            level: CheckLevel::Numeric,
            status,
            detail: failures.get(letter).cloned().unwrap_or_default(),
            residual: if trials > 0 { Some(residual) } else { None },
            seed: Some(cfg.seed),
            sizes: Some(cfg.sizes.clone()),
            trials: if trials > 0 { Some(trials) } else { None },
        });
    }
}
