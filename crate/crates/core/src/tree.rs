//! The combinatorial input datum: a rooted tree with integer assignments and
//! pair families, classifying a periodic automorphism of a free group.
//!
//! The root has the implicit id `"a"`.  Every non-root vertex `d` carries
//! `gamma, tau` (with `gamma * tau = n`) plus edge data `beta, alpha`; every
//! pair family `(e, f, i)` carries `delta, rho, eta`.  The generator alphabet
//! has one letter set per non-root vertex and one per pair family.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA: &str = "nfdiag/1";

/// Raw (unvalidated) tree description, mirroring the JSON wire format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawTree {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub n: u64,
    #[serde(default)]
    pub vertices: Vec<RawVertex>,
    #[serde(default)]
    pub pairs: Vec<RawPair>,
}

fn default_schema() -> String {
    SCHEMA.to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawVertex {
    pub id: String,
    pub parent: String,
    pub tau: u64,
    pub gamma: u64,
    pub beta: u64,
    pub alpha: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct RawPair {
    pub e: String,
    pub f: String,
    pub delta: u64,
    pub rho: u64,
    pub eta: u64,
}

/// One violated constraint, with enough context to locate it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub location: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("invalid tree: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {0:?}")]
    Schema(String),
}

impl TreeError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            TreeError::Invalid(v) => v,
            _ => &[],
        }
    }
}

/// Reference to a tree vertex; the root is implicit and carries no letters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VertexRef {
    Root,
    NonRoot(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vertex {
    pub id: String,
    pub parent: VertexRef,
    pub tau: u64,
    pub gamma: u64,
    pub beta: u64,
    pub alpha: u64,
    pub level: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairFamily {
    pub e: VertexRef,
    pub f: VertexRef,
    /// Positional index within the family set of the ordered pair `(e, f)`.
    pub index: u32,
    pub delta: u64,
    pub rho: u64,
    pub eta: u64,
}

/// A validated n,n1-tree.  Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NNTree {
    pub n: u64,
    vertices: Vec<Vertex>,
    pairs: Vec<PairFamily>,
    /// Non-root vertex indices sorted by increasing level (construction order).
    by_level: Vec<usize>,
}

pub fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: u64, b: u64) -> u64 {
    if a == 0 || b == 0 {
        0
    } else {
        a / gcd(a, b) * b
    }
}

impl NNTree {
    pub fn from_json(text: &str) -> Result<Self, TreeError> {
        let raw: RawTree = serde_json::from_str(text)?;
        Self::validate(&raw)
    }

    /// Checks every constraint and reports the complete list of violations,
    /// not just the first failure.
    pub fn validate(raw: &RawTree) -> Result<Self, TreeError> {
        let mut violations = Vec::new();
        if raw.schema != SCHEMA {
            return Err(TreeError::Schema(raw.schema.clone()));
        }
        if raw.n < 2 {
            violations.push(Violation {
                location: "tree".into(),
                message: format!("n must be at least 2, got {}", raw.n),
            });
        }

        // Structural checks: unique usable ids, parents resolving to a tree.
        let mut index_of: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, v) in raw.vertices.iter().enumerate() {
            let loc = format!("vertex {:?}", v.id);
            if v.id == "a" {
                violations.push(Violation {
                    location: loc.clone(),
                    message: "id \"a\" is reserved for the implicit root".into(),
                });
            } else if v.id.is_empty() || v.id.contains(char::is_whitespace) || v.id.contains('^') {
                violations.push(Violation {
                    location: loc.clone(),
                    message: "id must be nonempty and free of whitespace and '^'".into(),
                });
            }
            if index_of.insert(v.id.as_str(), i).is_some() {
                violations.push(Violation {
                    location: loc,
                    message: "duplicate vertex id".into(),
                });
            }
        }

        let resolve = |name: &str| -> Option<VertexRef> {
            if name == "a" {
                Some(VertexRef::Root)
            } else {
                index_of.get(name).map(|&i| VertexRef::NonRoot(i))
            }
        };

        let mut parents: Vec<Option<VertexRef>> = Vec::with_capacity(raw.vertices.len());
        for v in &raw.vertices {
            let p = resolve(&v.parent);
            if p.is_none() {
                violations.push(Violation {
                    location: format!("vertex {:?}", v.id),
                    message: format!("orphan: parent {:?} does not exist", v.parent),
                });
            }
            parents.push(p);
        }

        // Levels via repeated relaxation; vertices that never settle sit on a
        // cycle or under an orphan.
        let mut levels: Vec<Option<u32>> = vec![None; raw.vertices.len()];
        for _ in 0..raw.vertices.len() {
            for i in 0..raw.vertices.len() {
                if levels[i].is_some() {
                    continue;
                }
                match parents[i] {
                    Some(VertexRef::Root) => levels[i] = Some(1),
                    Some(VertexRef::NonRoot(p)) => {
                        if let Some(pl) = levels[p] {
                            levels[i] = Some(pl + 1);
                        }
                    }
                    None => {}
                }
            }
        }
        for (i, lvl) in levels.iter().enumerate() {
            if lvl.is_none() && parents[i].is_some() {
                violations.push(Violation {
                    location: format!("vertex {:?}", raw.vertices[i].id),
                    message: "root not reachable (cycle in parent links)".into(),
                });
            }
        }

        // Arithmetic constraints per vertex and per edge.
        for (i, v) in raw.vertices.iter().enumerate() {
            let loc = format!("vertex {:?}", v.id);
            if v.gamma <= 1 {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("gamma must exceed 1, got {}", v.gamma),
                });
            }
            if v.gamma * v.tau != raw.n {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("gamma * tau = {} * {} != n = {}", v.gamma, v.tau, raw.n),
                });
            }
            if v.beta <= 1 {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("beta must exceed 1, got {}", v.beta),
                });
            }
            if v.alpha <= 1 {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("alpha must exceed 1, got {}", v.alpha),
                });
            }
            if v.beta != 0 && v.gamma % v.beta != 0 {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("beta = {} does not divide gamma = {}", v.beta, v.gamma),
                });
            }
            let (pg, pt) = match parents[i] {
                Some(VertexRef::Root) => (raw.n, 1),
                Some(VertexRef::NonRoot(p)) => (raw.vertices[p].gamma, raw.vertices[p].tau),
                None => continue,
            };
            if v.alpha != 0 && pg % v.alpha != 0 {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("alpha = {} does not divide parent gamma = {}", v.alpha, pg),
                });
            }
            if pg * v.beta != v.alpha * v.gamma {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!(
                        "gamma_parent * beta = {} * {} != alpha * gamma = {} * {}",
                        pg, v.beta, v.alpha, v.gamma
                    ),
                });
            }
            // Consequence of the edge constraints; asserted so that internal
            // inconsistencies surface here rather than deep in the synthesis.
            if pg * v.beta == v.alpha * v.gamma && v.gamma * v.tau == raw.n && v.alpha * pt != v.beta * v.tau {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!(
                        "alpha * tau_parent = {} != beta * tau = {}",
                        v.alpha * pt,
                        v.beta * v.tau
                    ),
                });
            }
        }

        // Pair families.
        let mut pair_counters: BTreeMap<(String, String), u32> = BTreeMap::new();
        let mut pairs = Vec::new();
        for (pi, p) in raw.pairs.iter().enumerate() {
            let loc = format!("pair #{} ({:?},{:?})", pi, p.e, p.f);
            let (e, f) = match (resolve(&p.e), resolve(&p.f)) {
                (Some(e), Some(f)) => (e, f),
                _ => {
                    violations.push(Violation {
                        location: loc,
                        message: "pair references a vertex that does not exist".into(),
                    });
                    continue;
                }
            };
            let level_of = |r: VertexRef| -> Option<u32> {
                match r {
                    VertexRef::Root => Some(0),
                    VertexRef::NonRoot(i) => levels[i],
                }
            };
            let data_of = |r: VertexRef| -> (u64, u64) {
                match r {
                    VertexRef::Root => (raw.n, 1),
                    VertexRef::NonRoot(i) => (raw.vertices[i].gamma, raw.vertices[i].tau),
                }
            };
            if let (Some(le), Some(lf)) = (level_of(e), level_of(f)) {
                if le > lf {
                    violations.push(Violation {
                        location: loc.clone(),
                        message: format!("level(e) = {} exceeds level(f) = {}", le, lf),
                    });
                }
            }
            let (ge, te) = data_of(e);
            let (gf, tf) = data_of(f);
            if p.delta == 0 || ge % p.delta != 0 {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("delta = {} does not divide gamma_e = {}", p.delta, ge),
                });
            }
            if p.rho == 0 || gf % p.rho != 0 {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("rho = {} does not divide gamma_f = {}", p.rho, gf),
                });
            }
            if ge * p.rho != gf * p.delta {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!(
                        "gamma_e * rho = {} * {} != gamma_f * delta = {} * {}",
                        ge, p.rho, gf, p.delta
                    ),
                });
            }
            if p.eta >= gcd(te, tf) {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("eta = {} not below gcd(tau_e, tau_f) = {}", p.eta, gcd(te, tf)),
                });
            }
            if e != f && (p.delta <= 1 || p.rho <= 1) {
                violations.push(Violation {
                    location: loc.clone(),
                    message: "delta and rho must exceed 1 when e != f".into(),
                });
            }
            if ge * p.rho == gf * p.delta && p.rho * tf != p.delta * te {
                violations.push(Violation {
                    location: loc.clone(),
                    message: format!("rho * tau_f = {} != delta * tau_e = {}", p.rho * tf, p.delta * te),
                });
            }
            let counter = pair_counters.entry((p.e.clone(), p.f.clone())).or_insert(0);
            let index = *counter;
            *counter += 1;
            pairs.push(PairFamily {
                e,
                f,
                index,
                delta: p.delta,
                rho: p.rho,
                eta: p.eta,
            });
        }

        if !violations.is_empty() {
            return Err(TreeError::Invalid(violations));
        }

        let vertices: Vec<Vertex> = raw
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| Vertex {
                id: v.id.clone(),
                parent: parents[i].unwrap(),
                tau: v.tau,
                gamma: v.gamma,
                beta: v.beta,
                alpha: v.alpha,
                level: levels[i].unwrap(),
            })
            .collect();
        let mut by_level: Vec<usize> = (0..vertices.len()).collect();
        by_level.sort_by_key(|&i| (vertices[i].level, i));

        Ok(NNTree {
            n: raw.n,
            vertices,
            pairs,
            by_level,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn pairs(&self) -> &[PairFamily] {
        &self.pairs
    }

    /// Non-root vertex indices in increasing level order.
    pub fn by_level(&self) -> &[usize] {
        &self.by_level
    }

    pub fn vertex(&self, r: VertexRef) -> Option<&Vertex> {
        match r {
            VertexRef::Root => None,
            VertexRef::NonRoot(i) => Some(&self.vertices[i]),
        }
    }

    pub fn vertex_id(&self, r: VertexRef) -> &str {
        match r {
            VertexRef::Root => "a",
            VertexRef::NonRoot(i) => &self.vertices[i].id,
        }
    }

    pub fn gamma_tau(&self, r: VertexRef) -> (u64, u64) {
        match r {
            VertexRef::Root => (self.n, 1),
            VertexRef::NonRoot(i) => (self.vertices[i].gamma, self.vertices[i].tau),
        }
    }

    pub fn level(&self, r: VertexRef) -> u32 {
        match r {
            VertexRef::Root => 0,
            VertexRef::NonRoot(i) => self.vertices[i].level,
        }
    }

    /// Least common multiple of all `beta_d * tau_d` and `delta * tau_e`;
    /// 1 for a bare root.
    pub fn n1(&self) -> u64 {
        let mut acc = 1u64;
        for v in &self.vertices {
            acc = lcm(acc, v.beta * v.tau);
        }
        for p in &self.pairs {
            let (_, te) = self.gamma_tau(p.e);
            acc = lcm(acc, p.delta * te);
        }
        acc
    }

    pub fn to_raw(&self) -> RawTree {
        RawTree {
            schema: SCHEMA.to_string(),
            n: self.n,
            vertices: self
                .vertices
                .iter()
                .map(|v| RawVertex {
                    id: v.id.clone(),
                    parent: self.vertex_id(v.parent).to_string(),
                    tau: v.tau,
                    gamma: v.gamma,
                    beta: v.beta,
                    alpha: v.alpha,
                })
                .collect(),
            pairs: self
                .pairs
                .iter()
                .map(|p| RawPair {
                    e: self.vertex_id(p.e).to_string(),
                    f: self.vertex_id(p.f).to_string(),
                    delta: p.delta,
                    rho: p.rho,
                    eta: p.eta,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_raw()).expect("tree serialization cannot fail")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        let out = hasher.finalize();
        let mut s = String::with_capacity(2 * out.len());
        for b in out {
            s.push_str(&format!("{:02x}", b));
        }
        s
    }

    pub fn alphabet(self: &Arc<Self>) -> Arc<Alphabet> {
        Arc::new(Alphabet::for_tree(self))
    }
}

/// What a letter stands for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LetterKind {
    /// `j`-th letter of a non-root vertex's set.
    Vertex { vertex: usize, j: u64 },
    /// `j`-th letter of a pair family's set.
    Pair { pair: usize, j: u64 },
    /// Letter of a synthesized generating set (used by back-substitution).
    Generator { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Letter {
    pub name: String,
    pub kind: LetterKind,
}

static ALPHABET_TOKEN: AtomicU64 = AtomicU64::new(1);

/// A totally ordered, named letter set.  Words refer to letters by index;
/// the token distinguishes alphabets so that cross-alphabet operations fail
/// loudly instead of mixing unrelated indices.
#[derive(Debug)]
pub struct Alphabet {
    token: u64,
    letters: Vec<Letter>,
    by_name: BTreeMap<String, u32>,
}

impl PartialEq for Alphabet {
    fn eq(&self, other: &Self) -> bool {
        self.token == other.token
    }
}
impl Eq for Alphabet {}

impl Alphabet {
    fn new(letters: Vec<Letter>) -> Self {
        let by_name = letters
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.clone(), i as u32))
            .collect();
        Alphabet {
            token: ALPHABET_TOKEN.fetch_add(1, Ordering::Relaxed),
            letters,
            by_name,
        }
    }

    /// Letters `"<vid>.<j>"` for each non-root vertex, then
    /// `"t.<e>.<f>.<i>.<j>"` for each pair family, in input order.
    pub fn for_tree(tree: &NNTree) -> Self {
        let mut letters = Vec::new();
        for (vi, v) in tree.vertices().iter().enumerate() {
            for j in 0..(v.beta - 1) * v.tau {
                letters.push(Letter {
                    name: format!("{}.{}", v.id, j),
                    kind: LetterKind::Vertex { vertex: vi, j },
                });
            }
        }
        for (pi, p) in tree.pairs().iter().enumerate() {
            let (_, tf) = tree.gamma_tau(p.f);
            for j in 0..p.rho * tf {
                letters.push(Letter {
                    name: format!(
                        "t.{}.{}.{}.{}",
                        tree.vertex_id(p.e),
                        tree.vertex_id(p.f),
                        p.index,
                        j
                    ),
                    kind: LetterKind::Pair { pair: pi, j },
                });
            }
        }
        Self::new(letters)
    }

    pub fn for_generators(names: Vec<String>) -> Self {
        let letters = names
            .into_iter()
            .enumerate()
            .map(|(index, name)| Letter {
                name,
                kind: LetterKind::Generator { index },
            })
            .collect();
        Self::new(letters)
    }

    pub fn token(&self) -> u64 {
        self.token
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letter(&self, id: u32) -> &Letter {
        &self.letters[id as usize]
    }

    pub fn name(&self, id: u32) -> &str {
        &self.letters[id as usize].name
    }

    pub fn id_of(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Letter)> {
        self.letters.iter().enumerate().map(|(i, l)| (i as u32, l))
    }

    /// Ids of the letters belonging to vertex `vi`, in j-order.
    pub fn vertex_letters(&self, vi: usize) -> Vec<u32> {
        let mut out: Vec<(u64, u32)> = self
            .iter()
            .filter_map(|(id, l)| match l.kind {
                LetterKind::Vertex { vertex, j } if vertex == vi => Some((j, id)),
                _ => None,
            })
            .collect();
        out.sort();
        out.into_iter().map(|(_, id)| id).collect()
    }

    pub fn pair_letters(&self, pi: usize) -> Vec<u32> {
        let mut out: Vec<(u64, u32)> = self
            .iter()
            .filter_map(|(id, l)| match l.kind {
                LetterKind::Pair { pair, j } if pair == pi => Some((j, id)),
                _ => None,
            })
            .collect();
        out.sort();
        out.into_iter().map(|(_, id)| id).collect()
    }
}

fn divisors(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for d in 1..=n {
        if n.is_multiple_of(d) {
            out.push(d);
        }
    }
    out
}

/// Draws a random valid tree: `tau` among divisors of `n`, `beta` among
/// divisors of `gamma` exceeding 1, pair parameters solved from the
/// divisibility constraints directly.  Always validates.
pub fn random_tree<R: Rng>(rng: &mut R, n: u64, max_vertices: usize, max_pairs: usize) -> RawTree {
    assert!(n >= 2);
    let ids = ["b", "c", "d", "e", "f", "g", "h"];
    let n_vertices = rng.random_range(0..=max_vertices.min(ids.len()));
    let mut vertices: Vec<RawVertex> = Vec::new();
    // (gamma, tau) per placed vertex, root first.
    let mut data: Vec<(String, u64, u64)> = vec![("a".to_string(), n, 1)];

    for id_slot in ids.iter().take(n_vertices) {
        let mut placed = false;
        for _ in 0..64 {
            let parent_slot = rng.random_range(0..data.len());
            let (pid, pg, _pt) = data[parent_slot].clone();
            let taus: Vec<u64> = divisors(n).into_iter().filter(|&t| n / t > 1).collect();
            let tau = taus[rng.random_range(0..taus.len())];
            let gamma = n / tau;
            let betas: Vec<u64> = divisors(gamma).into_iter().filter(|&b| b > 1).collect();
            if betas.is_empty() {
                continue;
            }
            let beta = betas[rng.random_range(0..betas.len())];
            if !(pg * beta).is_multiple_of(gamma) {
                continue;
            }
            let alpha = pg * beta / gamma;
            if alpha <= 1 || pg % alpha != 0 {
                continue;
            }
            let id = id_slot.to_string();
            vertices.push(RawVertex {
                id: id.clone(),
                parent: pid,
                tau,
                gamma,
                beta,
                alpha,
            });
            data.push((id, gamma, tau));
            placed = true;
            break;
        }
        if !placed {
            break;
        }
    }

    let n_pairs = rng.random_range(0..=max_pairs);
    let mut pairs: Vec<RawPair> = Vec::new();
    let level_of = |slot: usize| -> usize { slot }; // data is placed root-first, levels grow along it
    for _ in 0..n_pairs {
        for _ in 0..64 {
            let ei = rng.random_range(0..data.len());
            let fi = rng.random_range(0..data.len());
            // Placing order approximates levels well enough for sampling; the
            // real level comparison is enforced below.
            let (ei, fi) = if level_of(ei) <= level_of(fi) { (ei, fi) } else { (fi, ei) };
            let (eid, ge, te) = data[ei].clone();
            let (fid, gf, tf) = data[fi].clone();
            let g = gcd(ge, gf);
            let ts: Vec<u64> = divisors(g)
                .into_iter()
                .filter(|&t| {
                    let delta = t * ge / g;
                    let rho = t * gf / g;
                    eid == fid || (delta > 1 && rho > 1)
                })
                .collect();
            if ts.is_empty() {
                continue;
            }
            let t = ts[rng.random_range(0..ts.len())];
            let delta = t * ge / g;
            let rho = t * gf / g;
            let eta = rng.random_range(0..gcd(te, tf));
            pairs.push(RawPair {
                e: eid,
                f: fid,
                delta,
                rho,
                eta,
            });
            break;
        }
    }

    // Levels in `data` placing order may disagree with true levels when a
    // vertex attaches high up; fix pair orientation against true levels.
    let raw = RawTree {
        schema: SCHEMA.to_string(),
        n,
        vertices,
        pairs,
    };
    fix_pair_orientation(raw)
}

fn fix_pair_orientation(mut raw: RawTree) -> RawTree {
    let mut level: BTreeMap<String, u32> = BTreeMap::new();
    level.insert("a".into(), 0);
    let mut changed = true;
    while changed {
        changed = false;
        for v in &raw.vertices {
            if level.contains_key(&v.id) {
                continue;
            }
            if let Some(&pl) = level.get(&v.parent) {
                level.insert(v.id.clone(), pl + 1);
                changed = true;
            }
        }
    }
    for p in &mut raw.pairs {
        let le = level.get(&p.e).copied().unwrap_or(0);
        let lf = level.get(&p.f).copied().unwrap_or(0);
        if le > lf {
            std::mem::swap(&mut p.e, &mut p.f);
            std::mem::swap(&mut p.delta, &mut p.rho);
            // eta stays within gcd(tau_e, tau_f), symmetric in e and f.
        }
    }
    raw
}

/// Seeded corpus of distinct random valid trees for property tests.
pub fn random_corpus(seed: u64, count: usize, n_max: u64, max_vertices: usize, max_pairs: usize) -> Vec<NNTree> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < count * 200 {
        attempts += 1;
        let n = rng.random_range(2..=n_max);
        let raw = random_tree(&mut rng, n, max_vertices, max_pairs);
        if raw.vertices.is_empty() && raw.pairs.is_empty() {
            continue;
        }
        let key = serde_json::to_string(&raw).unwrap();
        if !seen.insert(key) {
            continue;
        }
        let tree = NNTree::validate(&raw).expect("random trees are valid by construction");
        out.push(tree);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tree22() -> RawTree {
        RawTree {
            schema: SCHEMA.into(),
            n: 2,
            vertices: vec![RawVertex {
                id: "b".into(),
                parent: "a".into(),
                tau: 1,
                gamma: 2,
                beta: 2,
                alpha: 2,
            }],
            pairs: vec![],
        }
    }

    pub(crate) fn tree33() -> RawTree {
        RawTree {
            schema: SCHEMA.into(),
            n: 3,
            vertices: vec![RawVertex {
                id: "b".into(),
                parent: "a".into(),
                tau: 1,
                gamma: 3,
                beta: 3,
                alpha: 3,
            }],
            pairs: vec![],
        }
    }

    #[test]
    fn validates_example_trees() {
        let t = NNTree::validate(&tree22()).unwrap();
        assert_eq!(t.n1(), 2);
        let t = NNTree::validate(&tree33()).unwrap();
        assert_eq!(t.n1(), 3);
    }

    #[test]
    fn rejects_gamma_one() {
        let mut raw = tree22();
        raw.vertices[0].gamma = 1;
        raw.vertices[0].tau = 2;
        let err = NNTree::validate(&raw).unwrap_err();
        let msgs: Vec<String> = err.violations().iter().map(|v| v.message.clone()).collect();
        assert!(msgs.iter().any(|m| m.contains("gamma must exceed 1")), "{msgs:?}");
    }

    #[test]
    fn reports_all_violations_not_first_failure() {
        let mut raw = tree22();
        raw.vertices[0].gamma = 1; // also breaks gamma*tau and the edge balance
        raw.vertices[0].beta = 1;
        let err = NNTree::validate(&raw).unwrap_err();
        assert!(err.violations().len() >= 2, "{:?}", err.violations());
        // Repairing every reported item yields acceptance.
        let fixed = tree22();
        assert!(NNTree::validate(&fixed).is_ok());
    }

    #[test]
    fn root_only_tree_has_trivial_n1_and_empty_alphabet() {
        let raw = RawTree {
            schema: SCHEMA.into(),
            n: 4,
            vertices: vec![],
            pairs: vec![],
        };
        let t = Arc::new(NNTree::validate(&raw).unwrap());
        assert_eq!(t.n1(), 1);
        assert!(t.alphabet().is_empty());
    }

    #[test]
    fn alphabet_letters_match_expected_sizes() {
        let t = Arc::new(NNTree::validate(&tree22()).unwrap());
        let a = t.alphabet();
        assert_eq!(a.len(), 1);
        assert_eq!(a.name(0), "b.0");

        let t = Arc::new(NNTree::validate(&tree33()).unwrap());
        let a = t.alphabet();
        assert_eq!(a.len(), 2);
        assert_eq!(a.name(0), "b.0");
        assert_eq!(a.name(1), "b.1");
    }

    #[test]
    fn root_pair_alphabet() {
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
        let t = Arc::new(NNTree::validate(&raw).unwrap());
        assert_eq!(t.n1(), 2);
        let a = t.alphabet();
        assert_eq!(a.len(), 2);
        assert_eq!(a.name(0), "t.a.a.0.0");
        assert_eq!(a.name(1), "t.a.a.0.1");
    }

    #[test]
    fn pair_constraints_rejected_individually() {
        let mut raw = tree33();
        raw.pairs.push(RawPair {
            e: "b".into(),
            f: "b".into(),
            delta: 3,
            rho: 1, // breaks gamma_e * rho = gamma_f * delta
            eta: 0,
        });
        let err = NNTree::validate(&raw).unwrap_err();
        assert!(err
            .violations()
            .iter()
            .any(|v| v.message.contains("gamma_e * rho")));
    }

    #[test]
    fn corpus_properties() {
        let corpus = random_corpus(7, 40, 12, 4, 2);
        assert!(corpus.len() >= 40);
        for t in &corpus {
            let n1 = t.n1();
            let mut lcm_gamma = t.n; // root carries gamma_a = n
            for v in t.vertices() {
                lcm_gamma = lcm(lcm_gamma, v.gamma);
                assert_eq!(n1 % (v.beta * v.tau), 0, "beta*tau must divide n1");
            }
            assert_eq!(lcm_gamma % n1, 0, "n1 divides lcm of gammas");
            // Serialization round-trip.
            let back = NNTree::from_json(&t.to_json()).unwrap();
            assert_eq!(&back, t);
        }
    }
}
