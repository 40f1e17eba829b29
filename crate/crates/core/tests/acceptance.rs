//! Acceptance suite: one test per acceptance criterion, each printing a
//! PASS/FAIL line (run with `cargo test --test acceptance -- --nocapture`
//! to see them).
//!
//! 1. Order-2 example end to end, closed form and eigenvalue, under 1 s.
//! 2. Order-3 example: exact coefficients, exact eigenvalues, and the
//!    back-substitution identity, under 2 s.
//! 3. Automorphism order equals n1 on a 50-tree random corpus, word-exact,
//!    under 60 s.
//! 4. Orbit-identity property suite and period cross-checks on the corpus.
//! 5. Full diagonalisation property suite on the corpus with random twists,
//!    under 5 min.
//! 6. Negative controls: every fault injection is detected on both examples.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num::complex::Complex64;

use nfdiag::automorphism::{Automorphism, CheckMode, TwistSpec};
use nfdiag::diagonalizer::{diagonalize, FaultInjection};
use nfdiag::presets;
use nfdiag::ratexpr::{probable_equal, sample_rng, EqualityConfig, RationalExpr};
use nfdiag::scalar::{Coefficient, ScalarTerm};
use nfdiag::tree::{random_corpus, NNTree, VertexRef};
use nfdiag::verifier::{verify_all, VerifyConfig};
use nfdiag::word::FreeWord;

fn corpus() -> Vec<NNTree> {
    random_corpus(2024, 50, 12, 4, 2)
}

fn report_line(id: u32, name: &str, passed: bool, elapsed: Duration) {
    println!(
        "ACCEPTANCE {id} ({name}): {} in {:.2?}",
        if passed { "PASS" } else { "FAIL" },
        elapsed
    );
    assert!(passed, "acceptance criterion {id} ({name}) failed");
}

#[test]
fn criterion_1_order_two_example() {
    let start = Instant::now();
    let (raw, twist) = presets::ex1();
    let tree = Arc::new(NNTree::validate(&raw).unwrap());
    let aut = Automorphism::build(tree, &twist, CheckMode::Checked).unwrap();
    let diag = diagonalize(&aut).unwrap();

    // Exactly one generator with eigenvalue -1.
    assert_eq!(diag.basis.generators.len(), 1);
    let minus_one = ScalarTerm::from_integer(aut.ctx(), -1);
    assert_eq!(diag.basis.generators[0].eigenvalue, minus_one);

    // Equal, as a rational function, to (sqrt(c)+x)^-1 (sqrt(c)-x) at c = 2.
    let ctx = aut.ctx();
    let alphabet = aut.alphabet().clone();
    let rc = ScalarTerm::symbol(ctx, "c").nth_root(2).unwrap();
    let x = aut.gae_word(FreeWord::parse(&alphabet, "b.0").unwrap());
    let plus = aut.gae_one().scale_term(&rc).add(&x).unwrap();
    let minus = aut.gae_one().scale_term(&rc).sub(&x).unwrap();
    let closed = RationalExpr::product(vec![
        RationalExpr::inverse(RationalExpr::leaf(plus)),
        RationalExpr::leaf(minus),
    ]);
    let mut fixed = BTreeMap::new();
    fixed.insert("c".to_string(), Complex64::new(2.0, 0.0));
    let cfg = EqualityConfig {
        sizes: vec![2, 3, 4],
        samples: 5,
        seed: 0,
        tol_rel: 1e-8,
        tol_abs: 1e-10,
        retry_budget: 8,
    };
    let verdict = probable_equal(&diag.basis.generators[0].expr, &closed, &alphabet, &fixed, &cfg);
    assert!(verdict.is_equal(), "{verdict:?}");

    let elapsed = start.elapsed();
    report_line(1, "order-2 example", elapsed < Duration::from_secs(1), elapsed);
}

#[test]
fn criterion_2_order_three_example() {
    let start = Instant::now();
    let (raw, twist) = presets::ex2();
    let tree = Arc::new(NNTree::validate(&raw).unwrap());
    let aut = Automorphism::build(tree, &twist, CheckMode::Checked).unwrap();
    let diag = diagonalize(&aut).unwrap();
    let ctx = aut.ctx();

    // Exact synthesized coefficients c^(-2/3) d^(-1/3) and c^(-1/3) d^(-2/3).
    let c = ScalarTerm::symbol(ctx, "c");
    let d = ScalarTerm::symbol(ctx, "d");
    let x01 = c.pow(-2).mul(&d.inv()).nth_root(3).unwrap();
    let x02 = c.inv().mul(&d.pow(-2)).nth_root(3).unwrap();
    let block = &diag.vertex_blocks[0];
    assert_eq!(block.coeffs[0][1], x01);
    assert_eq!(block.coeffs[0][2], x02);

    // Eigenvalues exactly {omega^2, omega} in generator order y1, y2.
    let omega = ScalarTerm::root_of_unity(ctx, 3, 1).unwrap();
    assert_eq!(diag.basis.generators[0].eigenvalue, omega.pow(2));
    assert_eq!(diag.basis.generators[1].eigenvalue, omega);

    // Back-substitution identity at c = 2, d = 5 (sizes 3 and 4):
    // beta (y1 + y2 + 1)^-1 = 1 + c^(-2/3) d^(-1/3) x0 + c^(-1/3) d^(-2/3) x0 x1
    // with beta = 3 for this tree.
    let alphabet = aut.alphabet().clone();
    let y1 = diag.basis.generators[0].expr.clone();
    let y2 = diag.basis.generators[1].expr.clone();
    let lhs = RationalExpr::scale(
        Coefficient::from_term(ScalarTerm::from_integer(ctx, 3)),
        RationalExpr::inverse(RationalExpr::sum(vec![
            y1,
            y2,
            RationalExpr::one(ctx, &alphabet),
        ])),
    );
    let mut rhs = aut.gae_one();
    rhs = rhs
        .add(
            &aut.gae_word(FreeWord::parse(&alphabet, "b.0").unwrap())
                .scale_term(&x01),
        )
        .unwrap();
    rhs = rhs
        .add(
            &aut.gae_word(FreeWord::parse(&alphabet, "b.0 b.1").unwrap())
                .scale_term(&x02),
        )
        .unwrap();
    let rhs = RationalExpr::leaf(rhs);
    let mut fixed = BTreeMap::new();
    fixed.insert("c".to_string(), Complex64::new(2.0, 0.0));
    fixed.insert("d".to_string(), Complex64::new(5.0, 0.0));
    let cfg = EqualityConfig {
        sizes: vec![3, 4],
        samples: 5,
        seed: 0,
        tol_rel: 1e-8,
        tol_abs: 1e-10,
        retry_budget: 8,
    };
    let verdict = probable_equal(&lhs, &rhs, &alphabet, &fixed, &cfg);
    assert!(verdict.is_equal(), "{verdict:?}");

    let elapsed = start.elapsed();
    report_line(2, "order-3 example", elapsed < Duration::from_secs(2), elapsed);
}

#[test]
fn criterion_3_order_on_corpus() {
    let start = Instant::now();
    let corpus = corpus();
    assert!(corpus.len() >= 50, "corpus too small: {}", corpus.len());
    for tree in corpus {
        let tree = Arc::new(tree);
        let n1 = tree.n1();
        let aut = Automorphism::untwisted(tree.clone()).unwrap();
        assert_eq!(aut.order(), n1, "order mismatch on {}", tree.to_json());

        // No maximal proper divisor of n1 fixes every letter.
        let alphabet = aut.alphabet().clone();
        for p in 2..=n1 {
            if n1 % p != 0 || !is_prime(p) {
                continue;
            }
            let m = n1 / p;
            if m == 0 {
                continue;
            }
            let fixes_all = (0..alphabet.len() as u32).all(|id| {
                let mut w = FreeWord::letter(alphabet.clone(), id, false);
                for _ in 0..m {
                    w = aut.apply_word_untwisted(&w);
                }
                w == FreeWord::letter(alphabet.clone(), id, false)
            });
            assert!(
                !fixes_all || n1 == 1,
                "phi^{m} is the identity although n1 = {n1}: {}",
                tree.to_json()
            );
        }
    }
    let elapsed = start.elapsed();
    report_line(3, "order equals n1 on corpus", elapsed < Duration::from_secs(60), elapsed);
}

fn is_prime(p: u64) -> bool {
    p >= 2 && (2..p).take_while(|d| d * d <= p).all(|d| !p.is_multiple_of(d))
}

#[test]
fn criterion_4_orbit_identities_on_corpus() {
    let start = Instant::now();
    for tree in corpus() {
        let tree = Arc::new(tree);
        // Checked mode cross-validates the period recursion against the
        // brute-force word oracle on every vertex.
        let aut = Automorphism::untwisted(tree.clone()).unwrap();
        let mut rng = sample_rng(7, 0, 0);
        use rand::Rng;
        for (vi, vert) in tree.vertices().iter().enumerate() {
            let v = VertexRef::NonRoot(vi);
            let lambda = aut.lambda(v).lambda;
            assert_eq!(lambda % vert.beta, 0, "beta | lambda");
            assert_eq!(vert.gamma % lambda, 0, "lambda | gamma");
            for _ in 0..20 {
                let j = rng.random_range(0..3 * lambda);
                // Step identity.
                let lhs = aut.d_word(v, (vert.beta + j) * vert.tau);
                let rhs = aut
                    .m_word(v, 0, vert.beta + j)
                    .invert()
                    .concat(&aut.m_word(v, 0, j + 1))
                    .unwrap()
                    .concat(&aut.m_word(vert.parent, (j + 1) * vert.tau, vert.alpha))
                    .unwrap();
                assert_eq!(lhs, rhs, "step identity, {}", tree.to_json());
                // Fold identity.
                let lhs = aut.m_word(v, 0, vert.beta + j);
                let rhs = aut
                    .m_word(v, 0, j)
                    .concat(&aut.m_word(vert.parent, j * vert.tau, vert.alpha))
                    .unwrap();
                assert_eq!(lhs, rhs, "fold identity, {}", tree.to_json());
                // Block identity at random (i, j, k).
                let i = rng.random_range(0..vert.tau);
                let k = rng.random_range(0..3);
                let jj = rng.random_range(0..vert.beta);
                let lhs = aut.m_word(v, i, k * vert.beta + jj);
                let rhs = aut
                    .m_word(v, i, jj)
                    .concat(&aut.m_word(vert.parent, jj * vert.tau + i, k * vert.alpha))
                    .unwrap();
                assert_eq!(lhs, rhs, "block identity, {}", tree.to_json());
            }
        }
    }
    let elapsed = start.elapsed();
    report_line(4, "orbit identity property suite", true, elapsed);
}

#[test]
fn criterion_5_diagonalisation_on_corpus() {
    let start = Instant::now();
    let cfg = VerifyConfig {
        sizes: vec![3, 4, 5],
        samples: 2,
        seed: 11,
        tol_rel: 1e-8,
        tol_abs: 1e-10,
        orbit_samples: 5,
        conditioning_aware: false,
        fault: None,
    };
    for tree in corpus() {
        let tree = Arc::new(tree);
        let twist = TwistSpec::all_symbolic(&tree.alphabet());
        let report = verify_all(tree.clone(), &twist, &cfg);
        if !report.passed() {
            let failing: Vec<String> = report
                .checks
                .iter()
                .filter(|c| c.status != nfdiag::verifier::CheckStatus::Pass)
                .map(|c| format!("{} [{}]", c.name, c.detail))
                .collect();
            panic!("verification failed on {}:\n{}", tree.to_json(), failing.join("\n"));
        }
        assert_eq!(
            report.alphabet_size,
            tree.alphabet().len(),
            "generator count must match alphabet size"
        );
    }
    let elapsed = start.elapsed();
    report_line(
        5,
        "diagonalisation property suite",
        elapsed < Duration::from_secs(300),
        elapsed,
    );
}

/// Wider soak run beyond the acceptance bounds; opt-in via
/// `cargo test --test acceptance -- --ignored`.  All exact checks run at
/// full strength.  Round-trip tolerances scale with the largest
/// intermediate norm: letter-word values grow like size^length, so past
/// the acceptance corpus sizes the cancellation behind back-substitution
/// cannot certify a fixed output-relative bound in double precision.
#[test]
#[ignore]
fn soak_wider_corpus() {
    let cfg = VerifyConfig {
        sizes: vec![3, 4],
        samples: 2,
        seed: 99,
        tol_rel: 1e-8,
        tol_abs: 1e-10,
        orbit_samples: 5,
        conditioning_aware: true,
        fault: None,
    };
    for tree in random_corpus(777, 40, 16, 5, 3) {
        let tree = Arc::new(tree);
        let twist = TwistSpec::all_symbolic(&tree.alphabet());
        let report = verify_all(tree.clone(), &twist, &cfg);
        assert!(report.passed(), "soak failure on {}", tree.to_json());
    }
}

#[test]
fn criterion_6_negative_controls() {
    let start = Instant::now();
    let cfg_base = VerifyConfig {
        sizes: vec![2, 3],
        samples: 2,
        seed: 3,
        ..Default::default()
    };
    for fault in FaultInjection::all() {
        for name in ["ex1", "ex2"] {
            let (raw, twist) = presets::by_name(name).unwrap();
            let tree = Arc::new(NNTree::validate(&raw).unwrap());
            let cfg = VerifyConfig {
                fault: Some(fault),
                ..cfg_base.clone()
            };
            let report = verify_all(tree, &twist, &cfg);
            assert!(
                !report.passed(),
                "fault {} must be detected on {name}",
                fault.name()
            );
        }
    }
    let elapsed = start.elapsed();
    report_line(6, "negative controls", true, elapsed);
}
