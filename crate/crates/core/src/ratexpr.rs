//! Noncommutative rational expressions as DAGs over group-algebra leaves,
//! their evaluation on tuples of invertible complex matrices, and the
//! randomized equality test built on that evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num::complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use thiserror::Error;

use crate::grpalg::{GroupAlgebraElement, GrpAlgError};
use crate::scalar::{Coefficient, ScalarContext, ScalarError};
use crate::tree::Alphabet;
use crate::word::FreeWord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("singular matrix at node {node} ({op}); condition estimate {cond:.3e}")]
    SingularAtNode { node: usize, op: String, cond: f64 },
    #[error("letter {0:?} has no matrix assigned")]
    MissingLetter(String),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error(transparent)]
    GrpAlg(#[from] GrpAlgError),
    #[error("cannot parse expression: {0}")]
    Parse(String),
}

#[derive(Debug)]
pub enum ExprNode {
    Leaf(GroupAlgebraElement),
    Sum(Vec<RationalExpr>),
    Product(Vec<RationalExpr>),
    Inverse(RationalExpr),
    Scale(Coefficient, RationalExpr),
}

/// Shared-subexpression rational expression.  Product order is significant.
#[derive(Debug, Clone)]
pub struct RationalExpr {
    node: Arc<ExprNode>,
}

impl RationalExpr {
    pub fn leaf(e: GroupAlgebraElement) -> Self {
        RationalExpr {
            node: Arc::new(ExprNode::Leaf(e)),
        }
    }

    pub fn one(ctx: &Arc<ScalarContext>, alphabet: &Arc<Alphabet>) -> Self {
        Self::leaf(GroupAlgebraElement::one(ctx, alphabet))
    }

    pub fn sum(parts: Vec<RationalExpr>) -> Self {
        assert!(!parts.is_empty(), "empty sum");
        RationalExpr {
            node: Arc::new(ExprNode::Sum(parts)),
        }
    }

    pub fn product(parts: Vec<RationalExpr>) -> Self {
        assert!(!parts.is_empty(), "empty product");
        RationalExpr {
            node: Arc::new(ExprNode::Product(parts)),
        }
    }

    pub fn inverse(e: RationalExpr) -> Self {
        RationalExpr {
            node: Arc::new(ExprNode::Inverse(e)),
        }
    }

    pub fn scale(c: Coefficient, e: RationalExpr) -> Self {
        RationalExpr {
            node: Arc::new(ExprNode::Scale(c, e)),
        }
    }

    pub fn node(&self) -> &ExprNode {
        &self.node
    }

    /// Rebuilds the DAG with every leaf transformed, preserving sharing.
    pub fn map_leaves(&self, f: &mut impl FnMut(&GroupAlgebraElement) -> GroupAlgebraElement) -> RationalExpr {
        let mut memo: HashMap<*const ExprNode, RationalExpr> = HashMap::new();
        self.map_leaves_inner(f, &mut memo)
    }

    fn map_leaves_inner(
        &self,
        f: &mut impl FnMut(&GroupAlgebraElement) -> GroupAlgebraElement,
        memo: &mut HashMap<*const ExprNode, RationalExpr>,
    ) -> RationalExpr {
        let key = Arc::as_ptr(&self.node);
        if let Some(done) = memo.get(&key) {
            return done.clone();
        }
        let out = match self.node.as_ref() {
            ExprNode::Leaf(e) => RationalExpr::leaf(f(e)),
            ExprNode::Sum(parts) => RationalExpr::sum(
                parts.iter().map(|p| p.map_leaves_inner(f, memo)).collect(),
            ),
            ExprNode::Product(parts) => RationalExpr::product(
                parts.iter().map(|p| p.map_leaves_inner(f, memo)).collect(),
            ),
            ExprNode::Inverse(e) => RationalExpr::inverse(e.map_leaves_inner(f, memo)),
            ExprNode::Scale(c, e) => RationalExpr::scale(c.clone(), e.map_leaves_inner(f, memo)),
        };
        memo.insert(key, out.clone());
        out
    }

    /// Deterministic DFS numbering of distinct nodes (leaves first visit).
    fn number_nodes(&self) -> (Vec<RationalExpr>, HashMap<*const ExprNode, usize>) {
        let mut order: Vec<RationalExpr> = Vec::new();
        let mut ids: HashMap<*const ExprNode, usize> = HashMap::new();
        fn walk(
            e: &RationalExpr,
            order: &mut Vec<RationalExpr>,
            ids: &mut HashMap<*const ExprNode, usize>,
        ) {
            let key = Arc::as_ptr(&e.node);
            if ids.contains_key(&key) {
                return;
            }
            match e.node.as_ref() {
                ExprNode::Leaf(_) => {}
                ExprNode::Sum(parts) | ExprNode::Product(parts) => {
                    for p in parts {
                        walk(p, order, ids);
                    }
                }
                ExprNode::Inverse(inner) | ExprNode::Scale(_, inner) => walk(inner, order, ids),
            }
            ids.insert(key, order.len());
            order.push(e.clone());
        }
        walk(self, &mut order, &mut ids);
        (order, ids)
    }

    pub fn letters(&self) -> BTreeSet<u32> {
        let (order, _) = self.number_nodes();
        let mut out = BTreeSet::new();
        for e in order {
            if let ExprNode::Leaf(g) = e.node.as_ref() {
                for (w, _) in g.terms() {
                    for l in w.letters() {
                        out.insert(l.id);
                    }
                }
            }
        }
        out
    }

    pub fn symbols(&self) -> BTreeSet<String> {
        let (order, _) = self.number_nodes();
        let mut out = BTreeSet::new();
        for e in order {
            match e.node.as_ref() {
                ExprNode::Leaf(g) => {
                    for (_, c) in g.terms() {
                        out.extend(c.symbols());
                    }
                }
                ExprNode::Scale(c, _) => out.extend(c.symbols()),
                _ => {}
            }
        }
        out
    }

    pub fn evaluate(&self, pt: &MatrixPoint) -> Result<DMatrix<Complex64>, EvalError> {
        Ok(self.evaluate_tracked(pt)?.0)
    }

    /// Evaluates and also reports the largest Frobenius norm seen at any
    /// node: a cheap conditioning proxy for the attainable accuracy.
    pub fn evaluate_tracked(
        &self,
        pt: &MatrixPoint,
    ) -> Result<(DMatrix<Complex64>, f64), EvalError> {
        let (_, ids) = self.number_nodes();
        let mut memo: HashMap<*const ExprNode, DMatrix<Complex64>> = HashMap::new();
        let mut max_norm = 0.0;
        let out = self.eval_inner(pt, &ids, &mut memo, &mut max_norm)?;
        Ok((out, max_norm))
    }

    fn eval_inner(
        &self,
        pt: &MatrixPoint,
        ids: &HashMap<*const ExprNode, usize>,
        memo: &mut HashMap<*const ExprNode, DMatrix<Complex64>>,
        max_norm: &mut f64,
    ) -> Result<DMatrix<Complex64>, EvalError> {
        let key = Arc::as_ptr(&self.node);
        if let Some(m) = memo.get(&key) {
            return Ok(m.clone());
        }
        let out = match self.node.as_ref() {
            ExprNode::Leaf(g) => pt.evaluate_gae(g)?,
            ExprNode::Sum(parts) => {
                let mut acc = DMatrix::<Complex64>::zeros(pt.size, pt.size);
                for p in parts {
                    acc += p.eval_inner(pt, ids, memo, max_norm)?;
                }
                acc
            }
            ExprNode::Product(parts) => {
                let mut acc = DMatrix::<Complex64>::identity(pt.size, pt.size);
                for p in parts {
                    acc *= p.eval_inner(pt, ids, memo, max_norm)?;
                }
                acc
            }
            ExprNode::Inverse(inner) => {
                let m = inner.eval_inner(pt, ids, memo, max_norm)?;
                let node = *ids.get(&key).unwrap_or(&0);
                invert_or_report(&m, node, "inverse")?
            }
            ExprNode::Scale(c, inner) => {
                let m = inner.eval_inner(pt, ids, memo, max_norm)?;
                let z = c.instantiate(&pt.scalars)?;
                m * z
            }
        };
        *max_norm = max_norm.max(out.norm());
        memo.insert(key, out.clone());
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        let (order, ids) = self.number_nodes();
        let nodes: Vec<Value> = order
            .iter()
            .map(|e| match e.node.as_ref() {
                ExprNode::Leaf(g) => json!({"op": "leaf", "element": g.to_json()}),
                ExprNode::Sum(parts) => json!({
                    "op": "sum",
                    "args": parts.iter().map(|p| ids[&Arc::as_ptr(&p.node)]).collect::<Vec<_>>(),
                }),
                ExprNode::Product(parts) => json!({
                    "op": "product",
                    "args": parts.iter().map(|p| ids[&Arc::as_ptr(&p.node)]).collect::<Vec<_>>(),
                }),
                ExprNode::Inverse(inner) => json!({
                    "op": "inverse",
                    "arg": ids[&Arc::as_ptr(&inner.node)],
                }),
                ExprNode::Scale(c, inner) => json!({
                    "op": "scale",
                    "coeff": c.to_json(),
                    "arg": ids[&Arc::as_ptr(&inner.node)],
                }),
            })
            .collect();
        json!({"nodes": nodes, "root": nodes.len() - 1})
    }

    pub fn from_json(
        ctx: &Arc<ScalarContext>,
        alphabet: &Arc<Alphabet>,
        v: &Value,
    ) -> Result<RationalExpr, EvalError> {
        let nodes = v
            .get("nodes")
            .and_then(|n| n.as_array())
            .ok_or_else(|| EvalError::Parse("missing nodes array".into()))?;
        let root = v
            .get("root")
            .and_then(|r| r.as_u64())
            .ok_or_else(|| EvalError::Parse("missing root".into()))? as usize;
        let mut built: Vec<RationalExpr> = Vec::with_capacity(nodes.len());
        let get = |built: &[RationalExpr], idx: &Value| -> Result<RationalExpr, EvalError> {
            let i = idx
                .as_u64()
                .ok_or_else(|| EvalError::Parse("node reference must be an index".into()))?
                as usize;
            built
                .get(i)
                .cloned()
                .ok_or_else(|| EvalError::Parse(format!("forward reference to node {i}")))
        };
        for node in nodes {
            let op = node
                .get("op")
                .and_then(|o| o.as_str())
                .ok_or_else(|| EvalError::Parse("node missing op".into()))?;
            let expr = match op {
                "leaf" => {
                    let el = node
                        .get("element")
                        .ok_or_else(|| EvalError::Parse("leaf missing element".into()))?;
                    RationalExpr::leaf(GroupAlgebraElement::from_json(ctx, alphabet, el)?)
                }
                "sum" | "product" => {
                    let args = node
                        .get("args")
                        .and_then(|a| a.as_array())
                        .ok_or_else(|| EvalError::Parse("missing args".into()))?;
                    let parts = args
                        .iter()
                        .map(|a| get(&built, a))
                        .collect::<Result<Vec<_>, _>>()?;
                    if parts.is_empty() {
                        return Err(EvalError::Parse("empty args".into()));
                    }
                    if op == "sum" {
                        RationalExpr::sum(parts)
                    } else {
                        RationalExpr::product(parts)
                    }
                }
                "inverse" => RationalExpr::inverse(get(
                    &built,
                    node.get("arg")
                        .ok_or_else(|| EvalError::Parse("inverse missing arg".into()))?,
                )?),
                "scale" => {
                    let c = Coefficient::from_json(
                        ctx,
                        node.get("coeff")
                            .ok_or_else(|| EvalError::Parse("scale missing coeff".into()))?,
                    )?;
                    RationalExpr::scale(
                        c,
                        get(
                            &built,
                            node.get("arg")
                                .ok_or_else(|| EvalError::Parse("scale missing arg".into()))?,
                        )?,
                    )
                }
                other => return Err(EvalError::Parse(format!("unknown op {other:?}"))),
            };
            built.push(expr);
        }
        built
            .get(root)
            .cloned()
            .ok_or_else(|| EvalError::Parse("root out of range".into()))
    }
}

/// Structural equality following shared nodes.
impl PartialEq for RationalExpr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.node, &other.node) {
            return true;
        }
        match (self.node.as_ref(), other.node.as_ref()) {
            (ExprNode::Leaf(a), ExprNode::Leaf(b)) => a == b,
            (ExprNode::Sum(a), ExprNode::Sum(b)) | (ExprNode::Product(a), ExprNode::Product(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
            }
            (ExprNode::Inverse(a), ExprNode::Inverse(b)) => a == b,
            (ExprNode::Scale(ca, a), ExprNode::Scale(cb, b)) => ca == cb && a == b,
            _ => false,
        }
    }
}
impl Eq for RationalExpr {}

impl fmt::Display for RationalExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node.as_ref() {
            ExprNode::Leaf(g) => write!(f, "({})", g),
            ExprNode::Sum(parts) => {
                let strs: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "({})", strs.join(" + "))
            }
            ExprNode::Product(parts) => {
                let strs: Vec<String> = parts.iter().map(|p| p.to_string()).collect();
                write!(f, "{}", strs.join(" * "))
            }
            ExprNode::Inverse(e) => write!(f, "{}^-1", e),
            ExprNode::Scale(c, e) => write!(f, "[{}] * {}", c, e),
        }
    }
}

fn invert_or_report(
    m: &DMatrix<Complex64>,
    node: usize,
    op: &str,
) -> Result<DMatrix<Complex64>, EvalError> {
    match m.clone().try_inverse() {
        Some(inv) => {
            let cond = m.norm() * inv.norm();
            if cond.is_finite() && cond < 1e14 {
                Ok(inv)
            } else {
                Err(EvalError::SingularAtNode {
                    node,
                    op: op.into(),
                    cond,
                })
            }
        }
        None => Err(EvalError::SingularAtNode {
            node,
            op: op.into(),
            cond: f64::INFINITY,
        }),
    }
}

/// A tuple of invertible matrices for the letters, plus the fixed scalar
/// assignment for the twist symbols.
#[derive(Debug, Clone)]
pub struct MatrixPoint {
    pub size: usize,
    pub matrices: BTreeMap<u32, DMatrix<Complex64>>,
    inverses: BTreeMap<u32, DMatrix<Complex64>>,
    pub scalars: BTreeMap<String, Complex64>,
}

impl MatrixPoint {
    pub fn new(
        size: usize,
        matrices: BTreeMap<u32, DMatrix<Complex64>>,
        scalars: BTreeMap<String, Complex64>,
    ) -> Result<Self, EvalError> {
        let mut inverses = BTreeMap::new();
        for (&id, m) in &matrices {
            let inv = invert_or_report(m, id as usize, "letter")?;
            inverses.insert(id, inv);
        }
        Ok(MatrixPoint {
            size,
            matrices,
            inverses,
            scalars,
        })
    }

    /// Entries i.i.d. uniform on the complex unit disk; singular or
    /// ill-conditioned letter draws are rejected and resampled.  The bound is
    /// deliberately tight: letter conditioning compounds through the chained
    /// inversions of deep back-substitution expressions.
    pub fn random<R: Rng>(
        alphabet: &Alphabet,
        symbols: &[String],
        size: usize,
        rng: &mut R,
    ) -> Self {
        let mut matrices = BTreeMap::new();
        for (id, _) in alphabet.iter() {
            let m = loop {
                let cand = random_matrix(size, rng);
                if let Some(inv) = cand.clone().try_inverse() {
                    let cond = cand.norm() * inv.norm();
                    if cond.is_finite() && cond < 1e4 {
                        break cand;
                    }
                }
            };
            matrices.insert(id, m);
        }
        let mut scalars = BTreeMap::new();
        for s in symbols {
            scalars.insert(s.clone(), random_nonzero_scalar(rng));
        }
        let inverses = matrices
            .iter()
            .map(|(&id, m)| (id, m.clone().try_inverse().expect("checked invertible")))
            .collect();
        MatrixPoint {
            size,
            matrices,
            inverses,
            scalars,
        }
    }

    pub fn with_scalars(mut self, scalars: BTreeMap<String, Complex64>) -> Self {
        for (k, v) in scalars {
            self.scalars.insert(k, v);
        }
        self
    }

    pub fn evaluate_word(&self, w: &FreeWord) -> Result<DMatrix<Complex64>, EvalError> {
        let mut acc = DMatrix::<Complex64>::identity(self.size, self.size);
        for l in w.letters() {
            let m = if l.inverse {
                self.inverses.get(&l.id)
            } else {
                self.matrices.get(&l.id)
            };
            let m = m.ok_or_else(|| {
                EvalError::MissingLetter(w.alphabet().name(l.id).to_string())
            })?;
            acc *= m;
        }
        Ok(acc)
    }

    pub fn evaluate_gae(&self, g: &GroupAlgebraElement) -> Result<DMatrix<Complex64>, EvalError> {
        let mut acc = DMatrix::<Complex64>::zeros(self.size, self.size);
        for (w, c) in g.terms() {
            let z = c.instantiate(&self.scalars)?;
            acc += self.evaluate_word(w)? * z;
        }
        Ok(acc)
    }
}

fn random_matrix<R: Rng>(size: usize, rng: &mut R) -> DMatrix<Complex64> {
    DMatrix::from_fn(size, size, |_, _| {
        let r = rng.random::<f64>().sqrt();
        let theta = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        Complex64::new(r * theta.cos(), r * theta.sin())
    })
}

fn random_nonzero_scalar<R: Rng>(rng: &mut R) -> Complex64 {
    let r = 0.5 + 1.5 * rng.random::<f64>();
    let theta = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
    Complex64::new(r * theta.cos(), r * theta.sin())
}

/// Deterministic per-sample stream: mixing (seed, size, sample) keeps
/// concurrent evaluation order-independent.
pub fn sample_rng(seed: u64, size: usize, sample: u64) -> ChaCha8Rng {
    let mut x = seed ^ 0x9E37_79B9_7F4A_7C15u64;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9) ^ (size as u64).wrapping_mul(0x94D0_49BB_1331_11EB);
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9) ^ sample.wrapping_add(0x2545_F491_4F6C_DD1D);
    ChaCha8Rng::seed_from_u64(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EqualityConfig {
    pub sizes: Vec<usize>,
    pub samples: u32,
    pub seed: u64,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub retry_budget: u32,
}

impl Default for EqualityConfig {
    fn default() -> Self {
        EqualityConfig {
            sizes: vec![3, 4, 5],
            samples: 5,
            seed: 0,
            tol_rel: 1e-8,
            tol_abs: 1e-10,
            retry_budget: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    EqualWhp { max_residual: f64, trials: u32 },
    Distinct { size: usize, sample: u64, residual: f64 },
    Degenerate { detail: String },
}

impl Verdict {
    pub fn is_equal(&self) -> bool {
        matches!(self, Verdict::EqualWhp { .. })
    }
}

/// Randomized equality of two expressions over the same alphabet: samples
/// matrix points per size, resamples on singular evaluations within the
/// retry budget, and compares residuals against `tol_abs + tol_rel * scale`.
pub fn probable_equal(
    a: &RationalExpr,
    b: &RationalExpr,
    alphabet: &Alphabet,
    fixed_scalars: &BTreeMap<String, Complex64>,
    cfg: &EqualityConfig,
) -> Verdict {
    let mut symbols: BTreeSet<String> = a.symbols();
    symbols.extend(b.symbols());
    let free_symbols: Vec<String> = symbols
        .iter()
        .filter(|s| !fixed_scalars.contains_key(*s))
        .cloned()
        .collect();

    let mut max_residual = 0.0f64;
    let mut trials = 0u32;
    let mut last_failure = String::new();

    for &size in &cfg.sizes {
        let mut attempt = 0u64;
        let mut budget = cfg.retry_budget;
        let mut done = 0u32;
        while done < cfg.samples {
            let mut rng = sample_rng(cfg.seed, size, attempt);
            attempt += 1;
            let pt = MatrixPoint::random(alphabet, &free_symbols, size, &mut rng)
                .with_scalars(fixed_scalars.clone());
            let va = a.evaluate(&pt);
            let vb = b.evaluate(&pt);
            match (va, vb) {
                (Ok(va), Ok(vb)) => {
                    let residual = (&va - &vb).norm();
                    let scale = va.norm() + vb.norm();
                    let tol = cfg.tol_abs + cfg.tol_rel * scale;
                    if residual > tol {
                        return Verdict::Distinct {
                            size,
                            sample: attempt - 1,
                            residual,
                        };
                    }
                    max_residual = max_residual.max(residual);
                    trials += 1;
                    done += 1;
                }
                (Err(e), _) | (_, Err(e)) => {
                    last_failure = e.to_string();
                    if budget == 0 {
                        break; // escalate to the next size
                    }
                    budget -= 1;
                }
            }
        }
    }

    if trials == 0 {
        Verdict::Degenerate {
            detail: last_failure,
        }
    } else {
        Verdict::EqualWhp {
            max_residual,
            trials,
        }
    }
}
