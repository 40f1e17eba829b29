//! The group algebra layer: finite formal sums of reduced words with exact
//! scalar coefficients.  All exact identity checks of the synthesis happen
//! here, so support maps are kept canonical (sorted by word normal form,
//! zero coefficients dropped).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde_json::{json, Value};
use thiserror::Error;

use crate::scalar::{Coefficient, ScalarContext, ScalarError, ScalarTerm};
use crate::tree::Alphabet;
use crate::word::{FreeWord, WordError};

#[derive(Debug, Error)]
pub enum GrpAlgError {
    #[error("scalar context or alphabet mismatch between operands")]
    ContextMismatch,
    #[error(transparent)]
    Word(#[from] WordError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
    #[error("cannot parse group-algebra element: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAlgebraElement {
    ctx: Arc<ScalarContext>,
    alphabet: Arc<Alphabet>,
    terms: BTreeMap<FreeWord, Coefficient>,
}

impl GroupAlgebraElement {
    pub fn zero(ctx: &Arc<ScalarContext>, alphabet: &Arc<Alphabet>) -> Self {
        GroupAlgebraElement {
            ctx: ctx.clone(),
            alphabet: alphabet.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn one(ctx: &Arc<ScalarContext>, alphabet: &Arc<Alphabet>) -> Self {
        Self::from_word(ctx, FreeWord::identity(alphabet.clone()))
    }

    pub fn from_word(ctx: &Arc<ScalarContext>, word: FreeWord) -> Self {
        Self::from_term(Coefficient::one(ctx), word)
    }

    pub fn from_term(coeff: Coefficient, word: FreeWord) -> Self {
        let alphabet = word.alphabet().clone();
        let ctx = coeff.ctx().clone();
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(word, coeff);
        }
        GroupAlgebraElement { ctx, alphabet, terms }
    }

    pub fn ctx(&self) -> &Arc<ScalarContext> {
        &self.ctx
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FreeWord, &Coefficient)> {
        self.terms.iter()
    }

    pub fn support_size(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient_of(&self, w: &FreeWord) -> Option<&Coefficient> {
        self.terms.get(w)
    }

    /// Nonzero iff the support is nonempty; with distinct-word support this
    /// certifies invertibility in the ambient skew-field.
    pub fn is_nonzero(&self) -> bool {
        !self.terms.is_empty()
    }

    fn check_compatible(&self, other: &Self) -> Result<(), GrpAlgError> {
        if self.ctx.token() != other.ctx.token() || self.alphabet.token() != other.alphabet.token() {
            return Err(GrpAlgError::ContextMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self, GrpAlgError> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (w, c) in &other.terms {
            out.accumulate(w.clone(), c.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> Self {
        GroupAlgebraElement {
            ctx: self.ctx.clone(),
            alphabet: self.alphabet.clone(),
            terms: self.terms.iter().map(|(w, c)| (w.clone(), c.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self, GrpAlgError> {
        self.add(&other.neg())
    }

    /// Convolution product: supports concatenate as reduced words.
    pub fn mul(&self, other: &Self) -> Result<Self, GrpAlgError> {
        self.check_compatible(other)?;
        let mut out = Self::zero(&self.ctx, &self.alphabet);
        for (w1, c1) in &self.terms {
            for (w2, c2) in &other.terms {
                let w = w1.concat(w2)?;
                let c = c1.mul(c2);
                out.accumulate(w, c);
            }
        }
        Ok(out)
    }

    fn accumulate(&mut self, w: FreeWord, c: Coefficient) {
        if c.is_zero() {
            return;
        }
        match self.terms.get_mut(&w) {
            Some(acc) => {
                let sum = acc.add(&c);
                if sum.is_zero() {
                    self.terms.remove(&w);
                } else {
                    *acc = sum;
                }
            }
            None => {
                self.terms.insert(w, c);
            }
        }
    }

    pub fn scale(&self, c: &Coefficient) -> Self {
        if c.is_zero() {
            return Self::zero(&self.ctx, &self.alphabet);
        }
        let mut out = Self::zero(&self.ctx, &self.alphabet);
        for (w, c0) in &self.terms {
            out.accumulate(w.clone(), c0.mul(c));
        }
        out
    }

    pub fn scale_term(&self, t: &ScalarTerm) -> Self {
        self.scale(&Coefficient::from_term(t.clone()))
    }

    pub fn mul_word_left(&self, w: &FreeWord) -> Result<Self, GrpAlgError> {
        let mut out = Self::zero(&self.ctx, &self.alphabet);
        for (w0, c) in &self.terms {
            out.accumulate(w.concat(w0)?, c.clone());
        }
        Ok(out)
    }

    pub fn mul_word_right(&self, w: &FreeWord) -> Result<Self, GrpAlgError> {
        let mut out = Self::zero(&self.ctx, &self.alphabet);
        for (w0, c) in &self.terms {
            out.accumulate(w0.concat(w)?, c.clone());
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.terms
                .iter()
                .map(|(w, c)| json!([c.to_json(), w.to_string()]))
                .collect(),
        )
    }

    pub fn from_json(
        ctx: &Arc<ScalarContext>,
        alphabet: &Arc<Alphabet>,
        v: &Value,
    ) -> Result<Self, GrpAlgError> {
        let arr = v
            .as_array()
            .ok_or_else(|| GrpAlgError::Parse(format!("expected array, got {v}")))?;
        let mut out = Self::zero(ctx, alphabet);
        for entry in arr {
            let pair = entry
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| GrpAlgError::Parse("expected [coeff, word] pairs".into()))?;
            let c = Coefficient::from_json(ctx, &pair[0])?;
            let w = FreeWord::parse(
                alphabet,
                pair[1]
                    .as_str()
                    .ok_or_else(|| GrpAlgError::Parse("word must be a string".into()))?,
            )?;
            out.accumulate(w, c);
        }
        Ok(out)
    }
}

impl fmt::Display for GroupAlgebraElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(w, c)| {
                if c.is_one() {
                    w.to_string()
                } else if c.num_terms() > 1 {
                    format!("({}) * {}", c, w)
                } else {
                    format!("{} * {}", c, w)
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}
