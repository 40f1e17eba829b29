//! Construction of the free-group automorphism attached to a validated tree,
//! its extension by a diagonal twist, and the orbit data the diagonalisation
//! consumes: the D-sequences, the orbit words `M_d(j, k)`, the step scalars
//! `d_j` with their strided products `m_d(j, k)`, the word periods `lambda`,
//! and the pair periods `u, v`.
//!
//! Vertex letters map forward along their set, with the last letter wrapping
//! to `M_d(0, beta-1)^-1 M_c(0, alpha)` over the parent's orbit; pair letters
//! wrap to `M_f(0, rho)^-1 T_0 M_e(eta, delta)`.  Construction runs by
//! increasing level so parent orbits always exist, and finishes with a
//! mandatory word-exact order check against the tree's `n1`.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use serde_json::Value;
use thiserror::Error;

use crate::grpalg::{GroupAlgebraElement, GrpAlgError};
use crate::ratexpr::RationalExpr;
use crate::scalar::{parse_term, Coefficient, ScalarContext, ScalarError, ScalarTerm};
use crate::tree::{gcd, lcm, Alphabet, NNTree, VertexRef, SCHEMA};
use crate::word::{FreeWord, WordError};

#[derive(Debug, Error)]
pub enum AutError {
    #[error("automorphism order {found} does not match n1 = {expected}")]
    OrderMismatch { found: u64, expected: u64 },
    #[error("lambda recursion gave {recursion} but the word oracle found {oracle} at vertex {vertex:?}")]
    RecursionOracleMismatch {
        vertex: String,
        recursion: u64,
        oracle: u64,
    },
    #[error("pair period formula gave {formula} but the word oracle found {oracle} for pair #{pair}")]
    UvOracleMismatch { pair: usize, formula: u64, oracle: u64 },
    #[error("twist assigns unknown letter {0:?}")]
    UnknownTwistLetter(String),
    #[error("unsupported twist schema {0:?}")]
    TwistSchema(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(transparent)]
    GrpAlg(#[from] GrpAlgError),
    #[error("twist json: {0}")]
    TwistJson(String),
}

/// How much cross-checking to run during construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckMode {
    /// Recursion formulas cross-checked against brute-force word oracles.
    #[default]
    Checked,
    /// Recursion only.
    Fast,
}

/// Word period data per vertex: `lambda` is the smallest positive k with
/// `M_d(0, k) = 1`; `u = lambda / beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LambdaInfo {
    pub lambda: u64,
    pub u: u64,
}

/// Raw diagonal twist: letter name to scalar JSON, parsed lazily because the
/// scalar context (its conductor) depends on the twist's own root orders.
#[derive(Debug, Clone, Default)]
pub struct TwistSpec {
    entries: BTreeMap<String, Value>,
}

impl TwistSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// One fresh symbol per entry: letter -> symbol name.
    pub fn symbols<I, S, T>(items: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let entries = items
            .into_iter()
            .map(|(letter, sym)| {
                (
                    letter.into(),
                    serde_json::json!({ "exponents": { sym.into(): "1" } }),
                )
            })
            .collect();
        TwistSpec { entries }
    }

    /// Assigns the symbol `t_<letter>` to every letter of the alphabet.
    pub fn all_symbolic(alphabet: &Alphabet) -> Self {
        Self::symbols(
            alphabet
                .iter()
                .map(|(_, l)| (l.name.clone(), format!("t_{}", l.name.replace('.', "_")))),
        )
    }

    pub fn from_json(text: &str) -> Result<Self, AutError> {
        let v: Value = serde_json::from_str(text).map_err(|e| AutError::TwistJson(e.to_string()))?;
        let obj = v
            .as_object()
            .ok_or_else(|| AutError::TwistJson("expected an object".into()))?;
        if let Some(schema) = obj.get("schema").and_then(|s| s.as_str()) {
            if schema != SCHEMA {
                return Err(AutError::TwistSchema(schema.to_string()));
            }
        }
        let twists = obj
            .get("twists")
            .and_then(|t| t.as_object())
            .ok_or_else(|| AutError::TwistJson("missing \"twists\" object".into()))?;
        Ok(TwistSpec {
            entries: twists.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        })
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "schema": SCHEMA,
            "twists": Value::Object(self.entries.iter().map(|(k, v)| (k.clone(), v.clone())).collect::<serde_json::Map<_, _>>()),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// lcm of the root-of-unity orders appearing in the raw twist values.
    fn zeta_order(&self) -> u64 {
        let mut acc = 1;
        for v in self.entries.values() {
            if let Some(den) = v.get("zeta_den").and_then(|d| d.as_u64()) {
                acc = lcm(acc, den.max(1));
            }
        }
        acc
    }

    fn realize(
        &self,
        ctx: &Arc<ScalarContext>,
        alphabet: &Alphabet,
    ) -> Result<Vec<ScalarTerm>, AutError> {
        let mut out = vec![ScalarTerm::one(ctx); alphabet.len()];
        for (name, raw) in &self.entries {
            let id = alphabet
                .id_of(name)
                .ok_or_else(|| AutError::UnknownTwistLetter(name.clone()))?;
            out[id as usize] = parse_term(ctx, raw)?;
        }
        Ok(out)
    }
}

/// The (possibly twisted) automorphism: each letter maps to a scalar multiple
/// of a reduced word.  Immutable after construction; the orbit caches are
/// internally synchronized.
#[derive(Debug)]
pub struct Automorphism {
    tree: Arc<NNTree>,
    alphabet: Arc<Alphabet>,
    ctx: Arc<ScalarContext>,
    /// Per letter id: image word under the multiplicative part.
    images: Vec<FreeWord>,
    /// Per letter id: diagonal twist scalar.
    twists: Vec<ScalarTerm>,
    lambdas: Vec<LambdaInfo>,
    pair_uv: Vec<(u64, u64)>,
    d_cache: Mutex<HashMap<(VertexRef, u64), FreeWord>>,
    s_cache: Mutex<HashMap<(VertexRef, u64), ScalarTerm>>,
}

impl Automorphism {
    pub fn untwisted(tree: Arc<NNTree>) -> Result<Self, AutError> {
        Self::build(tree, &TwistSpec::none(), CheckMode::Checked)
    }

    pub fn build(tree: Arc<NNTree>, twist: &TwistSpec, mode: CheckMode) -> Result<Self, AutError> {
        let alphabet = tree.alphabet();
        let images = build_word_images(&tree, &alphabet)?;
        let lambdas = compute_lambdas(&tree, &alphabet, &images, mode)?;
        let pair_uv = compute_pair_uv(&tree, &alphabet, &images, &lambdas, mode)?;
        let conductor = compute_conductor(&tree, &lambdas, &pair_uv, twist.zeta_order());
        let ctx = ScalarContext::new(conductor);
        let twists = twist.realize(&ctx, &alphabet)?;
        let aut = Automorphism {
            tree,
            alphabet,
            ctx,
            images,
            twists,
            lambdas,
            pair_uv,
            d_cache: Mutex::new(HashMap::new()),
            s_cache: Mutex::new(HashMap::new()),
        };
        // Mandatory global integrity check: the multiplicative part must have
        // order exactly n1.
        let expected = aut.tree.n1();
        let found = aut.order();
        if found != expected {
            return Err(AutError::OrderMismatch { found, expected });
        }
        Ok(aut)
    }

    pub fn tree(&self) -> &Arc<NNTree> {
        &self.tree
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn ctx(&self) -> &Arc<ScalarContext> {
        &self.ctx
    }

    pub fn is_untwisted(&self) -> bool {
        self.twists.iter().all(|t| t.is_one())
    }

    pub fn image_word(&self, id: u32) -> &FreeWord {
        &self.images[id as usize]
    }

    pub fn twist_of(&self, id: u32) -> &ScalarTerm {
        &self.twists[id as usize]
    }

    pub fn lambda(&self, v: VertexRef) -> LambdaInfo {
        match v {
            VertexRef::Root => LambdaInfo { lambda: 1, u: 1 },
            VertexRef::NonRoot(i) => self.lambdas[i],
        }
    }

    /// Smallest `(u, v)` with `M_f(0, u*rho) = 1` and `M_e(0, v*delta) = 1`.
    pub fn pair_uv(&self, pair: usize) -> (u64, u64) {
        self.pair_uv[pair]
    }

    /// Applies the multiplicative part to a word.
    pub fn apply_word_untwisted(&self, w: &FreeWord) -> FreeWord {
        let mut acc = FreeWord::identity(self.alphabet.clone());
        for l in w.letters() {
            let img = &self.images[l.id as usize];
            let img = if l.inverse { img.invert() } else { img.clone() };
            acc = acc.concat(&img).expect("same alphabet by construction");
        }
        acc
    }

    /// Applies the twisted automorphism to a word; the result is a scalar
    /// times the image word.
    pub fn apply_word(&self, w: &FreeWord) -> (ScalarTerm, FreeWord) {
        let mut coeff = ScalarTerm::one(&self.ctx);
        for l in w.letters() {
            let t = &self.twists[l.id as usize];
            coeff = coeff.mul(&if l.inverse { t.inv() } else { t.clone() });
        }
        (coeff, self.apply_word_untwisted(w))
    }

    pub fn apply_gae(&self, e: &GroupAlgebraElement) -> GroupAlgebraElement {
        let mut out = GroupAlgebraElement::zero(&self.ctx, &self.alphabet);
        for (w, c) in e.terms() {
            let (t, img) = self.apply_word(w);
            let term = GroupAlgebraElement::from_term(c.mul(&Coefficient::from_term(t)), img);
            out = out.add(&term).expect("contexts match by construction");
        }
        out
    }

    /// Applies the automorphism at the leaves of an expression DAG.
    pub fn apply_expr(&self, e: &RationalExpr) -> RationalExpr {
        e.map_leaves(&mut |gae| self.apply_gae(gae))
    }

    /// `D_j` of a vertex: the j-th forward iterate of its first letter
    /// (identity for the root).
    pub fn d_word(&self, v: VertexRef, j: u64) -> FreeWord {
        let vi = match v {
            VertexRef::Root => return FreeWord::identity(self.alphabet.clone()),
            VertexRef::NonRoot(i) => i,
        };
        let vert = &self.tree.vertices()[vi];
        let letters = self.alphabet.vertex_letters(vi);
        let span = (vert.beta - 1) * vert.tau;
        if j < span {
            return FreeWord::letter(self.alphabet.clone(), letters[j as usize], false);
        }
        {
            let cache = self.d_cache.lock().unwrap();
            if let Some(w) = cache.get(&(v, j)) {
                return w.clone();
            }
        }
        // Find the highest cached index below j, then iterate forward.
        let mut base = span - 1;
        let mut word = FreeWord::letter(self.alphabet.clone(), letters[(span - 1) as usize], false);
        {
            let cache = self.d_cache.lock().unwrap();
            for jj in (span..j).rev() {
                if let Some(w) = cache.get(&(v, jj)) {
                    base = jj;
                    word = w.clone();
                    break;
                }
            }
        }
        let mut cur = word;
        for jj in base + 1..=j {
            cur = self.apply_word_untwisted(&cur);
            self.d_cache.lock().unwrap().insert((v, jj), cur.clone());
        }
        cur
    }

    /// Step scalar `d_j` (j >= 1): the twist accumulated when the word
    /// `D_{j-1}` maps to `D_j`.
    pub fn step_scalar(&self, v: VertexRef, j: u64) -> ScalarTerm {
        assert!(j >= 1, "step scalars start at index 1");
        if matches!(v, VertexRef::Root) {
            return ScalarTerm::one(&self.ctx);
        }
        {
            let cache = self.s_cache.lock().unwrap();
            if let Some(t) = cache.get(&(v, j)) {
                return t.clone();
            }
        }
        let prev = self.d_word(v, j - 1);
        let (t, _) = self.apply_word(&prev);
        self.s_cache.lock().unwrap().insert((v, j), t.clone());
        t
    }

    /// Orbit word `M_d(j, k) = D_j D_{j+tau} ... D_{j+(k-1)tau}`; `M(j, 0) = 1`.
    pub fn m_word(&self, v: VertexRef, j: u64, k: u64) -> FreeWord {
        let tau = match v {
            VertexRef::Root => return FreeWord::identity(self.alphabet.clone()),
            VertexRef::NonRoot(i) => self.tree.vertices()[i].tau,
        };
        let mut acc = FreeWord::identity(self.alphabet.clone());
        for l in 0..k {
            acc = acc
                .concat(&self.d_word(v, j + l * tau))
                .expect("same alphabet by construction");
        }
        acc
    }

    /// Strided product `m_d(j, k) = prod_{l<k} d_{j+l*tau}`; `m(j, 0) = 1`.
    pub fn step_product(&self, v: VertexRef, j: u64, k: u64) -> ScalarTerm {
        let tau = match v {
            VertexRef::Root => return ScalarTerm::one(&self.ctx),
            VertexRef::NonRoot(i) => self.tree.vertices()[i].tau,
        };
        let mut acc = ScalarTerm::one(&self.ctx);
        for l in 0..k {
            acc = acc.mul(&self.step_scalar(v, j + l * tau));
        }
        acc
    }

    /// Word-exact order of the multiplicative part: smallest m >= 1 fixing
    /// every letter.  Scanning from 1 also witnesses that no proper divisor
    /// of the result fixes the alphabet.
    pub fn order(&self) -> u64 {
        let n1 = self.tree.n1();
        let letters: Vec<FreeWord> = (0..self.alphabet.len() as u32)
            .map(|id| FreeWord::letter(self.alphabet.clone(), id, false))
            .collect();
        let mut current = letters.clone();
        for m in 1..=n1 {
            for w in current.iter_mut() {
                *w = self.apply_word_untwisted(w);
            }
            if current.iter().zip(letters.iter()).all(|(a, b)| a == b) {
                return m;
            }
        }
        // Not found within n1 steps; report a bound breach as n1 + 1.
        n1 + 1
    }

    pub fn gae_one(&self) -> GroupAlgebraElement {
        GroupAlgebraElement::one(&self.ctx, &self.alphabet)
    }

    pub fn gae_zero(&self) -> GroupAlgebraElement {
        GroupAlgebraElement::zero(&self.ctx, &self.alphabet)
    }

    pub fn gae_word(&self, w: FreeWord) -> GroupAlgebraElement {
        GroupAlgebraElement::from_word(&self.ctx, w)
    }

    /// All twist symbols used by this automorphism, sorted.
    pub fn twist_symbols(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .twists
            .iter()
            .flat_map(|t| t.symbols().map(|s| s.to_string()).collect::<Vec<_>>())
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Builds the letter-image words level by level.
fn build_word_images(tree: &Arc<NNTree>, alphabet: &Arc<Alphabet>) -> Result<Vec<FreeWord>, AutError> {
    let mut images: Vec<Option<FreeWord>> = vec![None; alphabet.len()];

    // Local orbit-word helper over the partially built image table.  Only
    // letters of already-completed vertices (and the in-progress vertex's
    // forward letters) are ever iterated.
    fn d_word_local(
        tree: &NNTree,
        alphabet: &Arc<Alphabet>,
        images: &[Option<FreeWord>],
        cache: &mut HashMap<(VertexRef, u64), FreeWord>,
        v: VertexRef,
        j: u64,
    ) -> FreeWord {
        let vi = match v {
            VertexRef::Root => return FreeWord::identity(alphabet.clone()),
            VertexRef::NonRoot(i) => i,
        };
        let vert = &tree.vertices()[vi];
        let letters = alphabet.vertex_letters(vi);
        let span = (vert.beta - 1) * vert.tau;
        if j < span {
            return FreeWord::letter(alphabet.clone(), letters[j as usize], false);
        }
        if let Some(w) = cache.get(&(v, j)) {
            return w.clone();
        }
        let prev = d_word_local(tree, alphabet, images, cache, v, j - 1);
        let mut acc = FreeWord::identity(alphabet.clone());
        for l in prev.letters() {
            let img = images[l.id as usize]
                .as_ref()
                .expect("image defined by level ordering");
            let img = if l.inverse { img.invert() } else { img.clone() };
            acc = acc.concat(&img).expect("single alphabet");
        }
        cache.insert((v, j), acc.clone());
        acc
    }

    let m_word_local = |tree: &NNTree,
                        alphabet: &Arc<Alphabet>,
                        images: &[Option<FreeWord>],
                        cache: &mut HashMap<(VertexRef, u64), FreeWord>,
                        v: VertexRef,
                        j: u64,
                        k: u64|
     -> FreeWord {
        let tau = match v {
            VertexRef::Root => return FreeWord::identity(alphabet.clone()),
            VertexRef::NonRoot(i) => tree.vertices()[i].tau,
        };
        let mut acc = FreeWord::identity(alphabet.clone());
        for l in 0..k {
            let d = d_word_local(tree, alphabet, images, cache, v, j + l * tau);
            acc = acc.concat(&d).expect("single alphabet");
        }
        acc
    };

    let mut cache: HashMap<(VertexRef, u64), FreeWord> = HashMap::new();

    for &vi in tree.by_level() {
        let vert = &tree.vertices()[vi];
        let letters = alphabet.vertex_letters(vi);
        let span = letters.len();
        for idx in 0..span.saturating_sub(1) {
            images[letters[idx] as usize] = Some(FreeWord::letter(
                alphabet.clone(),
                letters[idx + 1],
                false,
            ));
        }
        let head = m_word_local(
            tree,
            alphabet,
            &images,
            &mut cache,
            VertexRef::NonRoot(vi),
            0,
            vert.beta - 1,
        );
        let parent_part = m_word_local(
            tree,
            alphabet,
            &images,
            &mut cache,
            vert.parent,
            0,
            vert.alpha,
        );
        images[letters[span - 1] as usize] = Some(head.invert().concat(&parent_part)?);
    }

    for (pi, pair) in tree.pairs().iter().enumerate() {
        let letters = alphabet.pair_letters(pi);
        let span = letters.len();
        for idx in 0..span - 1 {
            images[letters[idx] as usize] = Some(FreeWord::letter(
                alphabet.clone(),
                letters[idx + 1],
                false,
            ));
        }
        let left = m_word_local(tree, alphabet, &images, &mut cache, pair.f, 0, pair.rho);
        let right = m_word_local(
            tree,
            alphabet,
            &images,
            &mut cache,
            pair.e,
            pair.eta,
            pair.delta,
        );
        let t0 = FreeWord::letter(alphabet.clone(), letters[0], false);
        images[letters[span - 1] as usize] =
            Some(left.invert().concat(&t0)?.concat(&right)?);
    }

    Ok(images
        .into_iter()
        .map(|w| w.expect("all letters receive images"))
        .collect())
}

/// Word periods by the level recursion, cross-checked against a brute-force
/// scan of the multiples of beta dividing gamma.
fn compute_lambdas(
    tree: &Arc<NNTree>,
    alphabet: &Arc<Alphabet>,
    images: &[FreeWord],
    mode: CheckMode,
) -> Result<Vec<LambdaInfo>, AutError> {
    let mut lambdas: Vec<LambdaInfo> = vec![LambdaInfo { lambda: 0, u: 0 }; tree.vertices().len()];
    let mut cache: HashMap<(VertexRef, u64), FreeWord> = HashMap::new();

    for &vi in tree.by_level() {
        let vert = &tree.vertices()[vi];
        let parent_lambda = match vert.parent {
            VertexRef::Root => 1,
            VertexRef::NonRoot(p) => lambdas[p].lambda,
        };
        // The proof's recursion: mu = lcm(lambda_parent, alpha), u = mu/alpha.
        let mu = lcm(parent_lambda, vert.alpha);
        let u = mu / vert.alpha;
        let lambda = u * vert.beta;
        if mode == CheckMode::Checked {
            let oracle = lambda_oracle(tree, alphabet, images, &mut cache, vi);
            if oracle != lambda {
                return Err(AutError::RecursionOracleMismatch {
                    vertex: vert.id.clone(),
                    recursion: lambda,
                    oracle,
                });
            }
        }
        lambdas[vi] = LambdaInfo { lambda, u };
    }
    Ok(lambdas)
}

fn lambda_oracle(
    tree: &Arc<NNTree>,
    alphabet: &Arc<Alphabet>,
    images: &[FreeWord],
    cache: &mut HashMap<(VertexRef, u64), FreeWord>,
    vi: usize,
) -> u64 {
    let vert = &tree.vertices()[vi];
    let v = VertexRef::NonRoot(vi);
    let mut k = vert.beta;
    while k <= vert.gamma {
        if vert.gamma.is_multiple_of(k) && m_word_over(tree, alphabet, images, cache, v, 0, k).is_identity() {
            return k;
        }
        k += vert.beta;
    }
    0
}

fn d_word_over(
    tree: &NNTree,
    alphabet: &Arc<Alphabet>,
    images: &[FreeWord],
    cache: &mut HashMap<(VertexRef, u64), FreeWord>,
    v: VertexRef,
    j: u64,
) -> FreeWord {
    let vi = match v {
        VertexRef::Root => return FreeWord::identity(alphabet.clone()),
        VertexRef::NonRoot(i) => i,
    };
    let vert = &tree.vertices()[vi];
    let letters = alphabet.vertex_letters(vi);
    let span = (vert.beta - 1) * vert.tau;
    if j < span {
        return FreeWord::letter(alphabet.clone(), letters[j as usize], false);
    }
    if let Some(w) = cache.get(&(v, j)) {
        return w.clone();
    }
    let prev = d_word_over(tree, alphabet, images, cache, v, j - 1);
    let mut acc = FreeWord::identity(alphabet.clone());
    for l in prev.letters() {
        let img = &images[l.id as usize];
        let img = if l.inverse { img.invert() } else { img.clone() };
        acc = acc.concat(&img).expect("single alphabet");
    }
    cache.insert((v, j), acc.clone());
    acc
}

fn m_word_over(
    tree: &NNTree,
    alphabet: &Arc<Alphabet>,
    images: &[FreeWord],
    cache: &mut HashMap<(VertexRef, u64), FreeWord>,
    v: VertexRef,
    j: u64,
    k: u64,
) -> FreeWord {
    let tau = match v {
        VertexRef::Root => return FreeWord::identity(alphabet.clone()),
        VertexRef::NonRoot(i) => tree.vertices()[i].tau,
    };
    let mut acc = FreeWord::identity(alphabet.clone());
    for l in 0..k {
        let d = d_word_over(tree, alphabet, images, cache, v, j + l * tau);
        acc = acc.concat(&d).expect("single alphabet");
    }
    acc
}

fn compute_pair_uv(
    tree: &Arc<NNTree>,
    alphabet: &Arc<Alphabet>,
    images: &[FreeWord],
    lambdas: &[LambdaInfo],
    mode: CheckMode,
) -> Result<Vec<(u64, u64)>, AutError> {
    let lambda_of = |v: VertexRef| -> u64 {
        match v {
            VertexRef::Root => 1,
            VertexRef::NonRoot(i) => lambdas[i].lambda,
        }
    };
    let mut cache: HashMap<(VertexRef, u64), FreeWord> = HashMap::new();
    let mut out = Vec::new();
    for (pi, pair) in tree.pairs().iter().enumerate() {
        let lf = lambda_of(pair.f);
        let le = lambda_of(pair.e);
        let u = lf / gcd(lf, pair.rho);
        let v = le / gcd(le, pair.delta);
        if mode == CheckMode::Checked {
            let u_oracle = (1..=lf)
                .find(|&k| m_word_over(tree, alphabet, images, &mut cache, pair.f, 0, k * pair.rho).is_identity())
                .unwrap_or(0);
            if u_oracle != u {
                return Err(AutError::UvOracleMismatch {
                    pair: pi,
                    formula: u,
                    oracle: u_oracle,
                });
            }
            let v_oracle = (1..=le)
                .find(|&k| m_word_over(tree, alphabet, images, &mut cache, pair.e, 0, k * pair.delta).is_identity())
                .unwrap_or(0);
            if v_oracle != v {
                return Err(AutError::UvOracleMismatch {
                    pair: pi,
                    formula: v,
                    oracle: v_oracle,
                });
            }
        }
        out.push((u, v));
    }
    Ok(out)
}

/// The single root-of-unity order every scalar of the run lives in: large
/// enough for the vertex roots (xi, omega, the per-cycle eigenvalue roots)
/// and the pair roots (mu, nu, wrap roots), including the twist's own orders.
fn compute_conductor(
    tree: &NNTree,
    lambdas: &[LambdaInfo],
    pair_uv: &[(u64, u64)],
    twist_order: u64,
) -> u64 {
    let nt = lcm(2, twist_order.max(1));
    let mut n = nt;
    for (vi, v) in tree.vertices().iter().enumerate() {
        n = lcm(n, v.beta * v.tau);
        n = lcm(n, lambdas[vi].lambda * nt);
    }
    for (pi, p) in tree.pairs().iter().enumerate() {
        let (_, tf) = tree.gamma_tau(p.f);
        let (u, v) = pair_uv[pi];
        n = lcm(n, u * nt);
        n = lcm(n, v * nt);
        n = lcm(n, p.rho * tf * lcm(u, v) * nt);
    }
    n
}

/// Letter used in tests and the diagonalizer to address vertex letters.
pub fn vertex_letter(aut: &Automorphism, vi: usize, j: u64) -> FreeWord {
    let ids = aut.alphabet().vertex_letters(vi);
    FreeWord::letter(aut.alphabet().clone(), ids[j as usize], false)
}

pub fn pair_letter(aut: &Automorphism, pi: usize, j: u64) -> FreeWord {
    let ids = aut.alphabet().pair_letters(pi);
    FreeWord::letter(aut.alphabet().clone(), ids[j as usize], false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::tree::{RawPair, RawTree, RawVertex};

    fn build_raw(raw: &RawTree) -> Automorphism {
        let tree = Arc::new(NNTree::validate(raw).unwrap());
        Automorphism::untwisted(tree).unwrap()
    }

    #[test]
    fn phi_on_order_two_tree() {
        let aut = build_raw(&presets::tree22_raw());
        let a = aut.alphabet().clone();
        assert_eq!(aut.image_word(0).to_string(), "b.0^-1");
        assert_eq!(aut.order(), 2);
        let w = FreeWord::parse(&a, "b.0").unwrap();
        assert_eq!(aut.apply_word_untwisted(&w).to_string(), "b.0^-1");
    }

    #[test]
    fn phi_on_order_three_tree() {
        let aut = build_raw(&presets::tree33_raw());
        assert_eq!(aut.image_word(0).to_string(), "b.1");
        assert_eq!(aut.image_word(1).to_string(), "b.1^-1 b.0^-1");
        assert_eq!(aut.order(), 3);
        // phi(b.0 b.1) = b.1 * (b.0 b.1)^-1 = b.0^-1
        let a = aut.alphabet().clone();
        let w = FreeWord::parse(&a, "b.0 b.1").unwrap();
        assert_eq!(aut.apply_word_untwisted(&w).to_string(), "b.0^-1");
    }

    #[test]
    fn root_pair_swap() {
        let raw = RawTree {
            schema: SCHEMA.into(),
            n: 2,
            vertices: vec![],
            pairs: vec![RawPair {
                e: "a".into(),
                f: "a".into(),
                delta: 2,
                rho: 2,
                eta: 0,
            }],
        };
        let aut = build_raw(&raw);
        assert_eq!(aut.image_word(0).to_string(), "t.a.a.0.1");
        assert_eq!(aut.image_word(1).to_string(), "t.a.a.0.0");
        assert_eq!(aut.order(), 2);
    }

    #[test]
    fn root_only_tree_is_identity() {
        let raw = RawTree {
            schema: SCHEMA.into(),
            n: 5,
            vertices: vec![],
            pairs: vec![],
        };
        let aut = build_raw(&raw);
        assert_eq!(aut.order(), 1);
    }

    #[test]
    fn orbit_words_on_order_three_tree() {
        let aut = build_raw(&presets::tree33_raw());
        let b = VertexRef::NonRoot(0);
        assert_eq!(aut.m_word(b, 0, 2).to_string(), "b.0 b.1");
        assert!(aut.m_word(b, 3, 0).is_identity());
        assert!(aut.m_word(b, 0, 3).is_identity());
        assert_eq!(aut.lambda(b), LambdaInfo { lambda: 3, u: 1 });
        assert_eq!(aut.lambda(VertexRef::Root), LambdaInfo { lambda: 1, u: 1 });
    }

    #[test]
    fn lambda_on_depth_two_chain() {
        let raw = RawTree {
            schema: SCHEMA.into(),
            n: 4,
            vertices: vec![
                RawVertex {
                    id: "b".into(),
                    parent: "a".into(),
                    tau: 1,
                    gamma: 4,
                    beta: 2,
                    alpha: 2,
                },
                RawVertex {
                    id: "c".into(),
                    parent: "b".into(),
                    tau: 1,
                    gamma: 4,
                    beta: 2,
                    alpha: 2,
                },
            ],
            pairs: vec![],
        };
        let aut = build_raw(&raw);
        assert_eq!(aut.lambda(VertexRef::NonRoot(1)).lambda, 2);
    }

    #[test]
    fn twist_step_scalars() {
        // Order-2 example: single twist c, so d_1 = c and d_2 = c^-1.
        let tree = Arc::new(NNTree::validate(&presets::tree22_raw()).unwrap());
        let twist = TwistSpec::symbols([("b.0", "c")]);
        let aut = Automorphism::build(tree, &twist, CheckMode::Checked).unwrap();
        let b = VertexRef::NonRoot(0);
        let c = ScalarTerm::symbol(aut.ctx(), "c");
        assert_eq!(aut.step_scalar(b, 1), c);
        assert_eq!(aut.step_scalar(b, 2), c.inv());
        // Apply to the letter: x -> c x^-1.
        let w = vertex_letter(&aut, 0, 0);
        let (t, img) = aut.apply_word(&w);
        assert_eq!(t, c);
        assert_eq!(img.to_string(), "b.0^-1");

        // Order-3 example with twists c, d.
        let tree = Arc::new(NNTree::validate(&presets::tree33_raw()).unwrap());
        let twist = TwistSpec::symbols([("b.0", "c"), ("b.1", "d")]);
        let aut = Automorphism::build(tree, &twist, CheckMode::Checked).unwrap();
        let b = VertexRef::NonRoot(0);
        let c = ScalarTerm::symbol(aut.ctx(), "c");
        let d = ScalarTerm::symbol(aut.ctx(), "d");
        assert_eq!(aut.step_scalar(b, 1), c);
        assert_eq!(aut.step_scalar(b, 2), d);
        assert_eq!(aut.step_scalar(b, 3), c.mul(&d).inv());
        // Untwisted: every step scalar is 1.
        let aut0 = build_raw(&presets::tree33_raw());
        assert!(aut0.step_scalar(b, 1).is_one());
        assert!(aut0.step_product(b, 1, 3).is_one());
    }

    #[test]
    fn pair_uv_examples() {
        // f = root: u = 1.
        let raw = RawTree {
            schema: SCHEMA.into(),
            n: 2,
            vertices: vec![],
            pairs: vec![RawPair {
                e: "a".into(),
                f: "a".into(),
                delta: 2,
                rho: 2,
                eta: 0,
            }],
        };
        let aut = build_raw(&raw);
        assert_eq!(aut.pair_uv(0), (1, 1));

        // e = f = b in the order-3 tree.
        let mut raw = presets::tree33_raw();
        raw.pairs.push(RawPair {
            e: "b".into(),
            f: "b".into(),
            delta: 3,
            rho: 3,
            eta: 0,
        });
        let aut = build_raw(&raw);
        assert_eq!(aut.pair_uv(0), (1, 1));

        let mut raw = presets::tree33_raw();
        raw.pairs.push(RawPair {
            e: "b".into(),
            f: "b".into(),
            delta: 1,
            rho: 1,
            eta: 0,
        });
        let aut = build_raw(&raw);
        assert_eq!(aut.pair_uv(0), (3, 3));
    }

    #[test]
    fn orbit_identities_spot_checks() {
        // Orbit identities on a depth-two tree with tau > 1.
        let raw = RawTree {
            schema: SCHEMA.into(),
            n: 4,
            vertices: vec![
                RawVertex {
                    id: "b".into(),
                    parent: "a".into(),
                    tau: 1,
                    gamma: 4,
                    beta: 4,
                    alpha: 4,
                },
                RawVertex {
                    id: "c".into(),
                    parent: "b".into(),
                    tau: 2,
                    gamma: 2,
                    beta: 2,
                    alpha: 4,
                },
            ],
            pairs: vec![],
        };
        let aut = build_raw(&raw);
        for (vi, vert) in aut.tree().vertices().to_vec().iter().enumerate() {
            let v = VertexRef::NonRoot(vi);
            let parent = vert.parent;
            let lambda = aut.lambda(v).lambda;
            for j in 0..3 * lambda {
                // M(0, beta + j) = M(0, j) * M_parent(j*tau, alpha)
                let lhs = aut.m_word(v, 0, vert.beta + j);
                let rhs = aut
                    .m_word(v, 0, j)
                    .concat(&aut.m_word(parent, j * vert.tau, vert.alpha))
                    .unwrap();
                assert_eq!(lhs, rhs, "vertex {} j={}", vert.id, j);
                // D_{(beta+j)tau} = M(0, beta+j)^-1 M(0, j+1) M_parent((j+1)tau, alpha)
                let lhs = aut.d_word(v, (vert.beta + j) * vert.tau);
                let rhs = aut
                    .m_word(v, 0, vert.beta + j)
                    .invert()
                    .concat(&aut.m_word(v, 0, j + 1))
                    .unwrap()
                    .concat(&aut.m_word(parent, (j + 1) * vert.tau, vert.alpha))
                    .unwrap();
                assert_eq!(lhs, rhs, "vertex {} j={}", vert.id, j);
            }
            // M(j, lambda) = 1 for every offset.
            for j in 0..2 * lambda {
                assert!(aut.m_word(v, j, lambda).is_identity());
            }
        }
    }

    #[test]
    fn twisted_orbit_bookkeeping() {
        let tree = Arc::new(NNTree::validate(&presets::tree33_raw()).unwrap());
        let twist = TwistSpec::symbols([("b.0", "c"), ("b.1", "d")]);
        let aut = Automorphism::build(tree, &twist, CheckMode::Checked).unwrap();
        let b = VertexRef::NonRoot(0);
        for j in 0..4 {
            for k in 0..4 {
                let m = aut.m_word(b, j, k);
                let (t, img) = aut.apply_word(&m);
                assert_eq!(img, aut.m_word(b, j + 1, k));
                assert_eq!(t, aut.step_product(b, j + 1, k));
            }
        }
    }

    #[test]
    fn order_check_runs_on_corpus() {
        for tree in crate::tree::random_corpus(23, 15, 10, 3, 2) {
            let aut = Automorphism::untwisted(Arc::new(tree)).unwrap();
            assert_eq!(aut.order(), aut.tree().n1());
        }
    }
}
