//! Synthesis of the diagonalising generating set.
//!
//! Per non-root vertex the automorphism permutes the orbit sums
//! `X(i,j) = sum_k omega^{jk} x(i,k) M_d(i,k)` cyclically up to scalars once
//! the coefficients `x(i,k)` are solved from the twist data; the quotients
//! `Y(i,j) = X(i,0)^-1 X(i,j)` then form cycles with wrap scalar
//! `omega^-j`.  Per pair family the conjugated letters
//! `T~(j) = L(j) T_j R(j)` form a cycle whose wrap scalar is `mu nu` times
//! the letters' own twists.  A discrete Fourier combination along each cycle
//! yields eigenvectors, and back-substitution (a Vandermonde inversion per
//! vertex, walked up the tree by level) expresses every original letter as a
//! rational expression in the new generators.
//!
//! Every identity used along the way is checked exactly in the group algebra
//! as it is produced; failures surface as named post-check records.

use std::collections::BTreeMap;
use std::sync::Arc;

use num::{BigInt, BigRational, FromPrimitive};
use thiserror::Error;

use crate::automorphism::{AutError, Automorphism};
use crate::grpalg::{GroupAlgebraElement, GrpAlgError};
use crate::ratexpr::RationalExpr;
use crate::scalar::{Coefficient, ScalarError, ScalarTerm};
use crate::tree::{Alphabet, VertexRef};
use crate::word::{FreeWord, WordError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("post-check {check:?} failed: {detail}")]
    PostCheckFailed { check: String, detail: String },
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    GrpAlg(#[from] GrpAlgError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(transparent)]
    Aut(#[from] AutError),
}

/// Deliberate corruption points for negative-control testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    /// Doubles the vertex scalar xi after solving the recurrences.
    WrongXi,
    /// Doubles every cycle wrap scalar before taking eigenvalue roots.
    WrongWrapScalar,
    /// Corrupts one row of each Vandermonde inversion in back-substitution.
    WrongVandermondeRow,
}

impl FaultInjection {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "wrong-xi" => Some(FaultInjection::WrongXi),
            "wrong-wrap" => Some(FaultInjection::WrongWrapScalar),
            "wrong-vandermonde" => Some(FaultInjection::WrongVandermondeRow),
            _ => None,
        }
    }

    pub fn all() -> [FaultInjection; 3] {
        [
            FaultInjection::WrongXi,
            FaultInjection::WrongWrapScalar,
            FaultInjection::WrongVandermondeRow,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            FaultInjection::WrongXi => "wrong-xi",
            FaultInjection::WrongWrapScalar => "wrong-wrap",
            FaultInjection::WrongVandermondeRow => "wrong-vandermonde",
        }
    }
}

/// Outcome of one exact check performed during synthesis.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn record(records: &mut Vec<CheckRecord>, name: String, passed: bool, detail: String) {
    records.push(CheckRecord { name, passed, detail });
}

/// Per-vertex diagonalisers: the scalars and orbit sums of one vertex block.
#[derive(Debug)]
pub struct VertexBlock {
    pub vertex: usize,
    pub omega: ScalarTerm,
    pub xi: ScalarTerm,
    /// `x[i][k]` for i < tau, k < lambda; `x[0][0] = 1`.
    pub coeffs: Vec<Vec<ScalarTerm>>,
    /// `X[i][j]` for i < tau, j < beta.
    pub sums: Vec<Vec<GroupAlgebraElement>>,
    /// `Y[i][j-1] = X(i,0)^-1 X(i,j)` for j = 1..beta-1.
    pub quotients: Vec<Vec<RationalExpr>>,
    pub lambda: u64,
    pub u: u64,
}

/// Per-pair diagonalisers: correction sums and the conjugated letters.
#[derive(Debug)]
pub struct PairBlock {
    pub pair: usize,
    pub u: u64,
    pub v: u64,
    pub mu: ScalarTerm,
    pub nu: ScalarTerm,
    /// `ell[j][k]` for j < rho*tau_f, k < u; `ell[0][0] = 1`.
    pub ell: Vec<Vec<ScalarTerm>>,
    /// `r[j][k]` for j < rho*tau_f, k < v; `r[0][0] = 1`.
    pub r: Vec<Vec<ScalarTerm>>,
    pub left: Vec<GroupAlgebraElement>,
    pub right: Vec<GroupAlgebraElement>,
    /// T~(j) = L(j) T_j R(j); a genuine group-algebra element.
    pub conjugated: Vec<GroupAlgebraElement>,
    /// Scalar picked up moving from T~(p-1) to T~(p), p = 1..len-1.
    pub step_scalars: Vec<ScalarTerm>,
    /// Wrap scalar: phi(T~(len-1)) = wrap * T~(0).
    pub wrap: ScalarTerm,
}

#[derive(Debug, Clone)]
pub enum Provenance {
    Vertex { vertex: usize, j: u64, m: u64 },
    Pair { pair: usize, m: u64 },
}

#[derive(Debug)]
pub struct DiagonalGenerator {
    pub name: String,
    pub eigenvalue: ScalarTerm,
    /// Expression over the original alphabet.
    pub expr: RationalExpr,
    /// Exact group-algebra form (pair blocks only).
    pub exact: Option<GroupAlgebraElement>,
    pub provenance: Provenance,
}

#[derive(Debug)]
pub struct DiagonalBasis {
    pub generators: Vec<DiagonalGenerator>,
    pub generator_alphabet: Arc<Alphabet>,
    /// Original letter name -> expression over the generator alphabet.
    pub inverse: BTreeMap<String, RationalExpr>,
}

#[derive(Debug)]
pub struct Diagonalisation {
    pub vertex_blocks: Vec<VertexBlock>,
    pub pair_blocks: Vec<PairBlock>,
    pub basis: DiagonalBasis,
    pub checks: Vec<CheckRecord>,
}

fn gae_eq_check(
    records: &mut Vec<CheckRecord>,
    name: String,
    lhs: &GroupAlgebraElement,
    rhs: &GroupAlgebraElement,
) {
    let passed = lhs == rhs;
    let detail = if passed {
        String::new()
    } else {
        format!("lhs = {lhs}; rhs = {rhs}")
    };
    record(records, name, passed, detail);
}

/// Solves the vertex recurrences and builds the orbit sums, checking the
/// shift and wrap identities exactly.
pub fn synth_vertex_recorded(
    aut: &Automorphism,
    vi: usize,
    fault: Option<FaultInjection>,
    records: &mut Vec<CheckRecord>,
) -> Result<VertexBlock, SynthError> {
    let tree = aut.tree();
    let vert = &tree.vertices()[vi];
    let v = VertexRef::NonRoot(vi);
    let (beta, tau) = (vert.beta, vert.tau);
    let info = aut.lambda(v);
    let (lambda, u) = (info.lambda, info.u);
    let ctx = aut.ctx();
    let omega = ScalarTerm::root_of_unity(ctx, beta, 1)?;

    // xi^lambda = prod_{l=1..tau} prod_{t<lambda} m(l, t)
    let mut radicand = ScalarTerm::one(ctx);
    for l in 1..=tau {
        for t in 0..lambda {
            radicand = radicand.mul(&aut.step_product(v, l, t));
        }
    }
    let xi_true = radicand.nth_root(lambda)?;

    // x(0,k) = xi^-1 x(0,k-1) prod_l m(l, k-1); x(i,k) = x(i-1,k) m(i,k).
    let xi_inv = xi_true.inv();
    let mut coeffs: Vec<Vec<ScalarTerm>> = vec![Vec::with_capacity(lambda as usize); tau as usize];
    coeffs[0].push(ScalarTerm::one(ctx));
    for k in 1..lambda {
        let mut next = xi_inv.mul(&coeffs[0][(k - 1) as usize]);
        for l in 1..=tau {
            next = next.mul(&aut.step_product(v, l, k - 1));
        }
        coeffs[0].push(next);
    }
    for i in 1..tau {
        for k in 0..lambda {
            let x = coeffs[(i - 1) as usize][k as usize].mul(&aut.step_product(v, i, k));
            coeffs[i as usize].push(x);
        }
    }

    // X(i,j) = sum_k omega^{jk} x(i,k) M(i,k)
    let mut sums: Vec<Vec<GroupAlgebraElement>> = Vec::with_capacity(tau as usize);
    for i in 0..tau {
        let mut row = Vec::with_capacity(beta as usize);
        for j in 0..beta {
            let mut acc = aut.gae_zero();
            for k in 0..lambda {
                let w = aut.m_word(v, i, k);
                let c = ScalarTerm::root_of_unity(ctx, beta, (j * k) as i64)?
                    .mul(&coeffs[i as usize][k as usize]);
                acc = acc.add(&GroupAlgebraElement::from_term(Coefficient::from_term(c), w))?;
            }
            row.push(acc);
        }
        sums.push(row);
    }

    let id = &vert.id;
    // Distinct-support certificates: the lambda orbit words stay distinct.
    for i in 0..tau {
        for j in 0..beta {
            let got = sums[i as usize][j as usize].support_size() as u64;
            record(
                records,
                format!("vertex.{id}.support[{i},{j}]"),
                got == lambda,
                format!("support {got}, expected {lambda}"),
            );
        }
    }

    let xi = match fault {
        Some(FaultInjection::WrongXi) => xi_true.mul(&ScalarTerm::from_integer(ctx, 2)),
        _ => xi_true,
    };

    // Shift identities: phi(X(i,j)) = X(i+1,j).
    for i in 0..tau.saturating_sub(1) {
        for j in 0..beta {
            let lhs = aut.apply_gae(&sums[i as usize][j as usize]);
            gae_eq_check(
                records,
                format!("vertex.{id}.shift[{i},{j}]"),
                &lhs,
                &sums[(i + 1) as usize][j as usize],
            );
        }
    }
    // Wrap identity: phi(X(tau-1,j)) = omega^-j xi D_0^-1 X(0,j).
    let d0_inv = aut.d_word(v, 0).invert();
    for j in 0..beta {
        let lhs = aut.apply_gae(&sums[(tau - 1) as usize][j as usize]);
        let scalar = ScalarTerm::root_of_unity(ctx, beta, -(j as i64))?.mul(&xi);
        let rhs = sums[0][j as usize]
            .mul_word_left(&d0_inv)?
            .scale_term(&scalar);
        gae_eq_check(records, format!("vertex.{id}.wrap[{j}]"), &lhs, &rhs);
    }

    // Linear-combination identity used by back-substitution:
    // sum_{j>=1} X(i,j) = beta * sum_{s<u} x(i, s*beta) M_parent(i, s*alpha) - X(i,0).
    let parent = vert.parent;
    for i in 0..tau {
        let mut lhs = aut.gae_zero();
        for j in 1..beta {
            lhs = lhs.add(&sums[i as usize][j as usize])?;
        }
        let mut low = aut.gae_zero();
        for s in 0..u {
            let w = aut.m_word(parent, i, s * vert.alpha);
            let c = coeffs[i as usize][(s * beta) as usize].clone();
            low = low.add(&GroupAlgebraElement::from_term(Coefficient::from_term(c), w))?;
        }
        let beta_term = ScalarTerm::from_integer(ctx, beta as i64);
        let rhs = low.scale_term(&beta_term).sub(&sums[i as usize][0])?;
        gae_eq_check(records, format!("vertex.{id}.fold[{i}]"), &lhs, &rhs);

        // Parent orbit words entering the fold must be pairwise distinct.
        let words: Vec<FreeWord> = (0..u).map(|s| aut.m_word(parent, i, s * vert.alpha)).collect();
        let distinct = (0..words.len()).all(|a| (a + 1..words.len()).all(|b| words[a] != words[b]));
        record(
            records,
            format!("vertex.{id}.parent-distinct[{i}]"),
            distinct,
            String::new(),
        );
    }

    // Y(i,j) = X(i,0)^-1 X(i,j), j = 1..beta-1.
    let mut quotients = Vec::with_capacity(tau as usize);
    for i in 0..tau {
        let base_inv = RationalExpr::inverse(RationalExpr::leaf(sums[i as usize][0].clone()));
        let mut row = Vec::new();
        for j in 1..beta {
            row.push(RationalExpr::product(vec![
                base_inv.clone(),
                RationalExpr::leaf(sums[i as usize][j as usize].clone()),
            ]));
        }
        quotients.push(row);
    }

    Ok(VertexBlock {
        vertex: vi,
        omega,
        xi,
        coeffs,
        sums,
        quotients,
        lambda,
        u,
    })
}

pub fn synth_vertex(aut: &Automorphism, vi: usize) -> Result<VertexBlock, SynthError> {
    let mut records = Vec::new();
    let block = synth_vertex_recorded(aut, vi, None, &mut records)?;
    for r in &records {
        if !r.passed {
            return Err(SynthError::PostCheckFailed {
                check: r.name.clone(),
                detail: r.detail.clone(),
            });
        }
    }
    Ok(block)
}

/// Solves the pair recurrences and conjugates the pair letters, checking the
/// shift and wrap identities exactly.
pub fn synth_pair_recorded(
    aut: &Automorphism,
    pi: usize,
    records: &mut Vec<CheckRecord>,
) -> Result<PairBlock, SynthError> {
    let tree = aut.tree();
    let pair = &tree.pairs()[pi];
    let ctx = aut.ctx();
    let (e, f) = (pair.e, pair.f);
    let (_, tf) = tree.gamma_tau(f);
    let len = pair.rho * tf; // = delta * tau_e
    let (u, v) = aut.pair_uv(pi);
    let eta = pair.eta;

    // mu^u = prod_{t<u} prod_{l=1..len} m_f(l, t*rho)^-1
    let mut mu_radicand = ScalarTerm::one(ctx);
    for t in 0..u {
        for l in 1..=len {
            mu_radicand = mu_radicand.mul(&aut.step_product(f, l, t * pair.rho).inv());
        }
    }
    let mu = mu_radicand.nth_root(u)?;

    // nu^v = prod_{t<v} prod_{l=1..len} m_e(l+eta, t*delta)
    let mut nu_radicand = ScalarTerm::one(ctx);
    for t in 0..v {
        for l in 1..=len {
            nu_radicand = nu_radicand.mul(&aut.step_product(e, l + eta, t * pair.delta));
        }
    }
    let nu = nu_radicand.nth_root(v)?;

    // ell(0,k) = mu^-1 ell(0,k-1) prod_l m_f(l,(k-1)rho)^-1;
    // ell(j,k) = ell(j-1,k) m_f(j, k*rho)^-1.
    let mu_inv = mu.inv();
    let mut ell: Vec<Vec<ScalarTerm>> = vec![Vec::with_capacity(u as usize); len as usize];
    ell[0].push(ScalarTerm::one(ctx));
    for k in 1..u {
        let mut next = mu_inv.mul(&ell[0][(k - 1) as usize]);
        for l in 1..=len {
            next = next.mul(&aut.step_product(f, l, (k - 1) * pair.rho).inv());
        }
        ell[0].push(next);
    }
    for j in 1..len {
        for k in 0..u {
            let x = ell[(j - 1) as usize][k as usize].mul(&aut.step_product(f, j, k * pair.rho).inv());
            ell[j as usize].push(x);
        }
    }

    // r(0,k) = nu^-1 r(0,k-1) prod_l m_e(l+eta,(k-1)delta);
    // r(j,k) = r(j-1,k) m_e(j+eta, k*delta).
    let nu_inv = nu.inv();
    let mut rr: Vec<Vec<ScalarTerm>> = vec![Vec::with_capacity(v as usize); len as usize];
    rr[0].push(ScalarTerm::one(ctx));
    for k in 1..v {
        let mut next = nu_inv.mul(&rr[0][(k - 1) as usize]);
        for l in 1..=len {
            next = next.mul(&aut.step_product(e, l + eta, (k - 1) * pair.delta));
        }
        rr[0].push(next);
    }
    for j in 1..len {
        for k in 0..v {
            let x = rr[(j - 1) as usize][k as usize].mul(&aut.step_product(e, j + eta, k * pair.delta));
            rr[j as usize].push(x);
        }
    }

    // L(j) = sum_k ell(j,k) M_f(j, k*rho)^-1  (inverted orbit words)
    // R(j) = sum_k r(j,k) M_e(j+eta, k*delta) (plain orbit words)
    let mut left = Vec::with_capacity(len as usize);
    let mut right = Vec::with_capacity(len as usize);
    for j in 0..len {
        let mut lacc = aut.gae_zero();
        for k in 0..u {
            let w = aut.m_word(f, j, k * pair.rho).invert();
            lacc = lacc.add(&GroupAlgebraElement::from_term(
                Coefficient::from_term(ell[j as usize][k as usize].clone()),
                w,
            ))?;
        }
        left.push(lacc);
        let mut racc = aut.gae_zero();
        for k in 0..v {
            let w = aut.m_word(e, j + eta, k * pair.delta);
            racc = racc.add(&GroupAlgebraElement::from_term(
                Coefficient::from_term(rr[j as usize][k as usize].clone()),
                w,
            ))?;
        }
        right.push(racc);
    }

    let tag = format!(
        "pair.{}.{}.{}",
        tree.vertex_id(e),
        tree.vertex_id(f),
        pair.index
    );
    for j in 0..len as usize {
        record(
            records,
            format!("{tag}.left-support[{j}]"),
            left[j].support_size() as u64 == u,
            format!("support {}, expected {u}", left[j].support_size()),
        );
        record(
            records,
            format!("{tag}.right-support[{j}]"),
            right[j].support_size() as u64 == v,
            format!("support {}, expected {v}", right[j].support_size()),
        );
    }

    // Shift identities.
    for j in 0..(len - 1) as usize {
        gae_eq_check(
            records,
            format!("{tag}.left-shift[{j}]"),
            &aut.apply_gae(&left[j]),
            &left[j + 1],
        );
        gae_eq_check(
            records,
            format!("{tag}.right-shift[{j}]"),
            &aut.apply_gae(&right[j]),
            &right[j + 1],
        );
    }
    // Wrap identities:
    // phi(L(len-1)) = mu L(0) M_f(0, rho);  phi(R(len-1)) = nu M_e(eta, delta)^-1 R(0).
    {
        let lhs = aut.apply_gae(&left[(len - 1) as usize]);
        let rhs = left[0]
            .mul_word_right(&aut.m_word(f, 0, pair.rho))?
            .scale_term(&mu);
        gae_eq_check(records, format!("{tag}.left-wrap"), &lhs, &rhs);

        let lhs = aut.apply_gae(&right[(len - 1) as usize]);
        let rhs = right[0]
            .mul_word_left(&aut.m_word(e, eta, pair.delta).invert())?
            .scale_term(&nu);
        gae_eq_check(records, format!("{tag}.right-wrap"), &lhs, &rhs);
    }

    // Conjugated letters and their cycle scalars.
    let letters = aut.alphabet().pair_letters(pi);
    let mut conjugated = Vec::with_capacity(len as usize);
    for j in 0..len {
        let t = aut.gae_word(FreeWord::letter(aut.alphabet().clone(), letters[j as usize], false));
        conjugated.push(left[j as usize].mul(&t)?.mul(&right[j as usize])?);
    }
    let mut step_scalars = Vec::new();
    for p in 1..len {
        step_scalars.push(aut.twist_of(letters[(p - 1) as usize]).clone());
    }
    let wrap = mu
        .mul(&nu)
        .mul(aut.twist_of(letters[(len - 1) as usize]));

    // Cycle checks on the conjugated letters.
    for p in 0..(len - 1) as usize {
        let lhs = aut.apply_gae(&conjugated[p]);
        let rhs = conjugated[p + 1].scale_term(&step_scalars[p]);
        gae_eq_check(records, format!("{tag}.cycle[{p}]"), &lhs, &rhs);
    }
    {
        let lhs = aut.apply_gae(&conjugated[(len - 1) as usize]);
        let rhs = conjugated[0].scale_term(&wrap);
        gae_eq_check(records, format!("{tag}.cycle-wrap"), &lhs, &rhs);
    }

    Ok(PairBlock {
        pair: pi,
        u,
        v,
        mu,
        nu,
        ell,
        r: rr,
        left,
        right,
        conjugated,
        step_scalars,
        wrap,
    })
}

pub fn synth_pair(aut: &Automorphism, pi: usize) -> Result<PairBlock, SynthError> {
    let mut records = Vec::new();
    let block = synth_pair_recorded(aut, pi, &mut records)?;
    for r in &records {
        if !r.passed {
            return Err(SynthError::PostCheckFailed {
                check: r.name.clone(),
                detail: r.detail.clone(),
            });
        }
    }
    Ok(block)
}

fn rational_coeff(aut: &Automorphism, num: i64, den: i64) -> Coefficient {
    Coefficient::from_term(ScalarTerm::from_rational(
        aut.ctx(),
        BigRational::new(BigInt::from_i64(num).unwrap(), BigInt::from_i64(den).unwrap()),
    ))
}

/// Eigenvalue roots of one cycle: the `len` solutions of `theta^len = wrap`,
/// principal root times the `len`-th roots of unity, in increasing order.
fn cycle_eigenvalues(
    aut: &Automorphism,
    wrap: &ScalarTerm,
    len: u64,
) -> Result<Vec<ScalarTerm>, SynthError> {
    let principal = wrap.nth_root(len)?;
    let mut out = Vec::with_capacity(len as usize);
    for m in 0..len {
        let unit = ScalarTerm::root_of_unity(aut.ctx(), len, m as i64)?;
        out.push(principal.mul(&unit));
    }
    Ok(out)
}

/// Fourier combination of a cycle: `g_m = sum_p theta_m^{-p} h_p`.
fn fourier_exprs(elements: &[RationalExpr], thetas: &[ScalarTerm]) -> Vec<RationalExpr> {
    let len = elements.len();
    thetas
        .iter()
        .map(|theta| {
            if len == 1 {
                return elements[0].clone();
            }
            let parts: Vec<RationalExpr> = elements
                .iter()
                .enumerate()
                .map(|(p, h)| {
                    let c = Coefficient::from_term(theta.pow(-(p as i64)));
                    RationalExpr::scale(c, h.clone())
                })
                .collect();
            RationalExpr::sum(parts)
        })
        .collect()
}

fn fourier_gaes(
    elements: &[GroupAlgebraElement],
    thetas: &[ScalarTerm],
) -> Result<Vec<GroupAlgebraElement>, SynthError> {
    let mut out = Vec::with_capacity(thetas.len());
    for theta in thetas {
        let mut acc: Option<GroupAlgebraElement> = None;
        for (p, h) in elements.iter().enumerate() {
            let term = h.scale_term(&theta.pow(-(p as i64)));
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
        }
        out.push(acc.expect("cycle is nonempty"));
    }
    Ok(out)
}

/// Builds the final generators from the verified cyclic blocks.
pub fn fourier_diagonalize_recorded(
    aut: &Automorphism,
    vertex_blocks: &[VertexBlock],
    pair_blocks: &[PairBlock],
    fault: Option<FaultInjection>,
    records: &mut Vec<CheckRecord>,
) -> Result<Vec<DiagonalGenerator>, SynthError> {
    let tree = aut.tree();
    let ctx = aut.ctx();
    let mut out = Vec::new();
    let corrupt = |w: &ScalarTerm| -> ScalarTerm {
        match fault {
            Some(FaultInjection::WrongWrapScalar) => w.mul(&ScalarTerm::from_integer(ctx, 2)),
            _ => w.clone(),
        }
    };

    for block in vertex_blocks {
        let vert = &tree.vertices()[block.vertex];
        let tau = vert.tau;
        for j in 1..vert.beta {
            // Cycle Y(0,j) -> Y(1,j) -> ... -> omega^-j Y(0,j).
            let wrap = corrupt(&ScalarTerm::root_of_unity(ctx, vert.beta, -(j as i64))?);
            let thetas = cycle_eigenvalues(aut, &wrap, tau)?;
            let cycle: Vec<RationalExpr> = (0..tau)
                .map(|i| block.quotients[i as usize][(j - 1) as usize].clone())
                .collect();
            let exprs = fourier_exprs(&cycle, &thetas);
            for (m, (expr, theta)) in exprs.into_iter().zip(thetas.iter()).enumerate() {
                out.push(DiagonalGenerator {
                    name: format!("y.{}.{}.{}", vert.id, j, m),
                    eigenvalue: theta.clone(),
                    expr,
                    exact: None,
                    provenance: Provenance::Vertex {
                        vertex: block.vertex,
                        j,
                        m: m as u64,
                    },
                });
            }
        }
    }

    for block in pair_blocks {
        let pair = &tree.pairs()[block.pair];
        let len = block.conjugated.len() as u64;
        // Renormalize the cycle so every step scalar becomes 1; the wrap
        // picks up the product of all step scalars.
        let mut c = ScalarTerm::one(ctx);
        let mut h: Vec<GroupAlgebraElement> = Vec::with_capacity(len as usize);
        h.push(block.conjugated[0].clone());
        for p in 1..len as usize {
            c = c.mul(&block.step_scalars[p - 1]);
            h.push(block.conjugated[p].scale_term(&c));
        }
        let mut total_wrap = block.wrap.clone();
        for s in &block.step_scalars {
            total_wrap = total_wrap.mul(s);
        }
        let total_wrap = corrupt(&total_wrap);
        let thetas = cycle_eigenvalues(aut, &total_wrap, len)?;
        let gaes = fourier_gaes(&h, &thetas)?;
        let tag = format!(
            "pair.{}.{}.{}",
            tree.vertex_id(pair.e),
            tree.vertex_id(pair.f),
            pair.index
        );
        for (m, (gae, theta)) in gaes.into_iter().zip(thetas.iter()).enumerate() {
            // Exact eigen identity for pair generators.
            let lhs = aut.apply_gae(&gae);
            let rhs = gae.scale_term(theta);
            gae_eq_check(records, format!("{tag}.eigen[{m}]"), &lhs, &rhs);
            out.push(DiagonalGenerator {
                name: format!(
                    "y.t.{}.{}.{}.{}",
                    tree.vertex_id(pair.e),
                    tree.vertex_id(pair.f),
                    pair.index,
                    m
                ),
                eigenvalue: theta.clone(),
                expr: RationalExpr::leaf(gae.clone()),
                exact: Some(gae),
                provenance: Provenance::Pair {
                    pair: block.pair,
                    m: m as u64,
                },
            });
        }
    }

    record(
        records,
        "generator-count".into(),
        out.len() == aut.alphabet().len(),
        format!("{} generators for {} letters", out.len(), aut.alphabet().len()),
    );

    Ok(out)
}

/// Expression for a reduced word over already-recovered letter expressions.
fn word_to_expr(
    word: &FreeWord,
    letter_exprs: &BTreeMap<u32, RationalExpr>,
    one: &RationalExpr,
) -> RationalExpr {
    if word.is_identity() {
        return one.clone();
    }
    let parts: Vec<RationalExpr> = word
        .letters()
        .iter()
        .map(|l| {
            let base = letter_exprs
                .get(&l.id)
                .expect("letters recovered in level order")
                .clone();
            if l.inverse {
                RationalExpr::inverse(base)
            } else {
                base
            }
        })
        .collect();
    if parts.len() == 1 {
        parts.into_iter().next().unwrap()
    } else {
        RationalExpr::product(parts)
    }
}

/// Expresses every original letter over the generator alphabet by walking
/// the tree in level order and inverting each vertex's Vandermonde system.
pub fn back_substitute(
    aut: &Automorphism,
    vertex_blocks: &[VertexBlock],
    pair_blocks: &[PairBlock],
    generators: &[DiagonalGenerator],
    generator_alphabet: &Arc<Alphabet>,
    fault: Option<FaultInjection>,
) -> Result<BTreeMap<String, RationalExpr>, SynthError> {
    let tree = aut.tree();
    let ctx = aut.ctx();
    let one_gen = RationalExpr::one(ctx, generator_alphabet);

    // Lookups: generator leaf expressions and eigenvalues per block position.
    let mut vertex_gens: BTreeMap<(usize, u64, u64), (RationalExpr, ScalarTerm)> = BTreeMap::new();
    let mut pair_gens: BTreeMap<(usize, u64), (RationalExpr, ScalarTerm)> = BTreeMap::new();
    for (idx, g) in generators.iter().enumerate() {
        let leaf = RationalExpr::leaf(GroupAlgebraElement::from_word(
            ctx,
            FreeWord::letter(generator_alphabet.clone(), idx as u32, false),
        ));
        match g.provenance {
            Provenance::Vertex { vertex, j, m } => {
                vertex_gens.insert((vertex, j, m), (leaf, g.eigenvalue.clone()));
            }
            Provenance::Pair { pair, m } => {
                pair_gens.insert((pair, m), (leaf, g.eigenvalue.clone()));
            }
        }
    }

    let block_of: BTreeMap<usize, &VertexBlock> =
        vertex_blocks.iter().map(|b| (b.vertex, b)).collect();

    let mut letter_exprs: BTreeMap<u32, RationalExpr> = BTreeMap::new();

    for &vi in tree.by_level() {
        let vert = &tree.vertices()[vi];
        let block = block_of[&vi];
        let (beta, tau) = (vert.beta, vert.tau);

        // Y(p, j) = (1/tau) sum_m theta_m^p g_m over the generator alphabet.
        let y_expr = |p: u64, j: u64| -> RationalExpr {
            if tau == 1 {
                return vertex_gens[&(vi, j, 0)].0.clone();
            }
            let parts: Vec<RationalExpr> = (0..tau)
                .map(|m| {
                    let (leaf, theta) = &vertex_gens[&(vi, j, m)];
                    RationalExpr::scale(Coefficient::from_term(theta.pow(p as i64)), leaf.clone())
                })
                .collect();
            RationalExpr::scale(rational_coeff(aut, 1, tau as i64), RationalExpr::sum(parts))
        };

        // X(i,0) = beta W(i) (1 + sum_j Y(i,j))^-1 with
        // W(i) = sum_{s<u} x(i, s*beta) M_parent(i, s*alpha) over lower levels.
        let mut x_exprs: Vec<Vec<RationalExpr>> = Vec::with_capacity(tau as usize);
        for i in 0..tau {
            let mut w_parts = Vec::new();
            for s in 0..block.u {
                let pw = aut.m_word(vert.parent, i, s * vert.alpha);
                let c = Coefficient::from_term(block.coeffs[i as usize][(s * beta) as usize].clone());
                w_parts.push(RationalExpr::scale(
                    c,
                    word_to_expr(&pw, &letter_exprs, &one_gen),
                ));
            }
            let w_i = RationalExpr::sum(w_parts);
            let mut denom_parts = vec![one_gen.clone()];
            for j in 1..beta {
                denom_parts.push(y_expr(i, j));
            }
            let x_i0 = RationalExpr::scale(
                rational_coeff(aut, beta as i64, 1),
                RationalExpr::product(vec![
                    w_i,
                    RationalExpr::inverse(RationalExpr::sum(denom_parts)),
                ]),
            );
            let mut row = vec![x_i0.clone()];
            for j in 1..beta {
                row.push(RationalExpr::product(vec![x_i0.clone(), y_expr(i, j)]));
            }
            x_exprs.push(row);
        }

        // Vandermonde inversion:
        // M_d(i,k) Q(i,k) = (1/beta) sum_j omega^{-jk} X(i,j), with the
        // bracket Q(i,k) = sum_{s<u} x(i, s*beta+k) M_parent(k*tau+i, s*alpha).
        let mut m_exprs: Vec<Vec<RationalExpr>> = Vec::with_capacity(tau as usize);
        for i in 0..tau {
            let mut row = Vec::with_capacity(beta as usize);
            for k in 0..beta {
                if k == 0 {
                    row.push(one_gen.clone());
                    continue;
                }
                let k_used = match fault {
                    // One corrupted row of the inverse Vandermonde matrix.
                    Some(FaultInjection::WrongVandermondeRow) if k == 1 => (k + 1) % beta,
                    _ => k,
                };
                let mut parts = Vec::with_capacity(beta as usize);
                for j in 0..beta {
                    let w = ScalarTerm::root_of_unity(ctx, beta, -((j * k_used) as i64))?;
                    parts.push(RationalExpr::scale(
                        Coefficient::from_term(w),
                        x_exprs[i as usize][j as usize].clone(),
                    ));
                }
                let numer = RationalExpr::scale(
                    rational_coeff(aut, 1, beta as i64),
                    RationalExpr::sum(parts),
                );
                let mut q_parts = Vec::new();
                for s in 0..block.u {
                    let pw = aut.m_word(vert.parent, k * tau + i, s * vert.alpha);
                    let c = Coefficient::from_term(
                        block.coeffs[i as usize][(s * beta + k) as usize].clone(),
                    );
                    q_parts.push(RationalExpr::scale(
                        c,
                        word_to_expr(&pw, &letter_exprs, &one_gen),
                    ));
                }
                let bracket = RationalExpr::sum(q_parts);
                row.push(RationalExpr::product(vec![
                    numer,
                    RationalExpr::inverse(bracket),
                ]));
            }
            m_exprs.push(row);
        }

        // Letters: D_{i + k*tau} = M(i,k)^-1 M(i,k+1), k = 0..beta-2.
        let ids = aut.alphabet().vertex_letters(vi);
        for k in 0..beta - 1 {
            for i in 0..tau {
                let s = i + k * tau;
                let expr = if k == 0 {
                    m_exprs[i as usize][1].clone()
                } else {
                    RationalExpr::product(vec![
                        RationalExpr::inverse(m_exprs[i as usize][k as usize].clone()),
                        m_exprs[i as usize][(k + 1) as usize].clone(),
                    ])
                };
                letter_exprs.insert(ids[s as usize], expr);
            }
        }
    }

    // Pair letters: T_j = L(j)^-1 T~(j) R(j)^-1 with T~ recovered by the
    // inverse Fourier combination and the renormalization undone.
    for block in pair_blocks {
        let pair = &tree.pairs()[block.pair];
        let len = block.conjugated.len() as u64;
        let ids = aut.alphabet().pair_letters(block.pair);
        let mut c_scalars = vec![ScalarTerm::one(ctx)];
        for p in 1..len as usize {
            c_scalars.push(c_scalars[p - 1].mul(&block.step_scalars[p - 1]));
        }
        for j in 0..len {
            let h_j = if len == 1 {
                pair_gens[&(block.pair, 0)].0.clone()
            } else {
                let parts: Vec<RationalExpr> = (0..len)
                    .map(|m| {
                        let (leaf, theta) = &pair_gens[&(block.pair, m)];
                        RationalExpr::scale(
                            Coefficient::from_term(theta.pow(j as i64)),
                            leaf.clone(),
                        )
                    })
                    .collect();
                RationalExpr::scale(rational_coeff(aut, 1, len as i64), RationalExpr::sum(parts))
            };
            let t_tilde = RationalExpr::scale(
                Coefficient::from_term(c_scalars[j as usize].inv()),
                h_j,
            );
            // L(j), R(j) expressed over the recovered vertex letters.
            let mut l_parts = Vec::new();
            for k in 0..block.u {
                let w = aut.m_word(pair.f, j, k * pair.rho).invert();
                l_parts.push(RationalExpr::scale(
                    Coefficient::from_term(block.ell[j as usize][k as usize].clone()),
                    word_to_expr(&w, &letter_exprs, &one_gen),
                ));
            }
            let mut r_parts = Vec::new();
            for k in 0..block.v {
                let w = aut.m_word(pair.e, j + pair.eta, k * pair.delta);
                r_parts.push(RationalExpr::scale(
                    Coefficient::from_term(block.r[j as usize][k as usize].clone()),
                    word_to_expr(&w, &letter_exprs, &one_gen),
                ));
            }
            let expr = RationalExpr::product(vec![
                RationalExpr::inverse(RationalExpr::sum(l_parts)),
                t_tilde,
                RationalExpr::inverse(RationalExpr::sum(r_parts)),
            ]);
            letter_exprs.insert(ids[j as usize], expr);
        }
    }

    Ok(letter_exprs
        .into_iter()
        .map(|(id, expr)| (aut.alphabet().name(id).to_string(), expr))
        .collect())
}

/// Full synthesis: vertex blocks, pair blocks, Fourier step,
/// back-substitution.  `fault` corrupts one internal quantity for
/// negative-control testing; the corresponding checks then fail (recorded,
/// not fatal, through the `_recorded` entry points).
pub fn diagonalize_recorded(
    aut: &Automorphism,
    fault: Option<FaultInjection>,
    records: &mut Vec<CheckRecord>,
) -> Result<Diagonalisation, SynthError> {
    let tree = aut.tree();
    let mut vertex_blocks = Vec::new();
    for &vi in tree.by_level() {
        vertex_blocks.push(synth_vertex_recorded(aut, vi, fault, records)?);
    }
    vertex_blocks.sort_by_key(|b| b.vertex);
    let mut pair_blocks = Vec::new();
    for pi in 0..tree.pairs().len() {
        pair_blocks.push(synth_pair_recorded(aut, pi, records)?);
    }
    let generators = fourier_diagonalize_recorded(aut, &vertex_blocks, &pair_blocks, fault, records)?;
    let generator_alphabet = Arc::new(Alphabet::for_generators(
        generators.iter().map(|g| g.name.clone()).collect(),
    ));
    let inverse = back_substitute(
        aut,
        &vertex_blocks,
        &pair_blocks,
        &generators,
        &generator_alphabet,
        fault,
    )?;
    let checks = records.clone();
    Ok(Diagonalisation {
        vertex_blocks,
        pair_blocks,
        basis: DiagonalBasis {
            generators,
            generator_alphabet,
            inverse,
        },
        checks,
    })
}

pub fn diagonalize(aut: &Automorphism) -> Result<Diagonalisation, SynthError> {
    let mut records = Vec::new();
    let result = diagonalize_recorded(aut, None, &mut records)?;
    for r in &records {
        if !r.passed {
            return Err(SynthError::PostCheckFailed {
                check: r.name.clone(),
                detail: r.detail.clone(),
            });
        }
    }
    Ok(result)
}
