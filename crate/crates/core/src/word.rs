//! Reduced words over a letter alphabet: the elements of the free group the
//! automorphism acts on.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

use crate::tree::Alphabet;

/// Default cap on reduced word length; guards runaway inputs, not the
/// construction itself (whose words stay short).
pub const DEFAULT_MAX_LEN: usize = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WordError {
    #[error("alphabet mismatch between operands")]
    AlphabetMismatch,
    #[error("unknown letter {0:?}")]
    UnknownLetter(String),
    #[error("word length cap of {0} letters exceeded")]
    TooLong(usize),
    #[error("cannot parse word from {0:?}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SignedLetter {
    pub id: u32,
    pub inverse: bool,
}

impl SignedLetter {
    pub fn flip(self) -> Self {
        SignedLetter {
            id: self.id,
            inverse: !self.inverse,
        }
    }
}

/// A reduced word: no adjacent `s s^-1` or `s^-1 s`.  The empty word is the
/// group identity.
#[derive(Debug, Clone)]
pub struct FreeWord {
    alphabet: Arc<Alphabet>,
    letters: Vec<SignedLetter>,
}

impl PartialEq for FreeWord {
    fn eq(&self, other: &Self) -> bool {
        self.alphabet.token() == other.alphabet.token() && self.letters == other.letters
    }
}
impl Eq for FreeWord {}

impl PartialOrd for FreeWord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortlex order: by length, then lexicographically by (letter id, sign).
impl Ord for FreeWord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.alphabet
            .token()
            .cmp(&other.alphabet.token())
            .then_with(|| self.letters.len().cmp(&other.letters.len()))
            .then_with(|| self.letters.cmp(&other.letters))
    }
}

impl Hash for FreeWord {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.alphabet.token().hash(state);
        self.letters.hash(state);
    }
}

impl FreeWord {
    pub fn identity(alphabet: Arc<Alphabet>) -> Self {
        FreeWord {
            alphabet,
            letters: Vec::new(),
        }
    }

    pub fn letter(alphabet: Arc<Alphabet>, id: u32, inverse: bool) -> Self {
        assert!((id as usize) < alphabet.len(), "letter id out of range");
        FreeWord {
            alphabet,
            letters: vec![SignedLetter { id, inverse }],
        }
    }

    /// Builds a word from an unreduced letter sequence, cancelling as it goes.
    pub fn from_letters<I: IntoIterator<Item = SignedLetter>>(
        alphabet: Arc<Alphabet>,
        letters: I,
    ) -> Self {
        let mut stack: Vec<SignedLetter> = Vec::new();
        for l in letters {
            match stack.last() {
                Some(&top) if top.id == l.id && top.inverse != l.inverse => {
                    stack.pop();
                }
                _ => stack.push(l),
            }
        }
        FreeWord {
            alphabet,
            letters: stack,
        }
    }

    pub fn alphabet(&self) -> &Arc<Alphabet> {
        &self.alphabet
    }

    pub fn letters(&self) -> &[SignedLetter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn concat(&self, other: &FreeWord) -> Result<FreeWord, WordError> {
        self.concat_capped(other, DEFAULT_MAX_LEN)
    }

    pub fn concat_capped(&self, other: &FreeWord, cap: usize) -> Result<FreeWord, WordError> {
        if self.alphabet.token() != other.alphabet.token() {
            return Err(WordError::AlphabetMismatch);
        }
        if self.letters.len() + other.letters.len() > cap {
            return Err(WordError::TooLong(cap));
        }
        let mut stack = self.letters.clone();
        for &l in &other.letters {
            match stack.last() {
                Some(&top) if top.id == l.id && top.inverse != l.inverse => {
                    stack.pop();
                }
                _ => stack.push(l),
            }
        }
        Ok(FreeWord {
            alphabet: self.alphabet.clone(),
            letters: stack,
        })
    }

    pub fn invert(&self) -> FreeWord {
        FreeWord {
            alphabet: self.alphabet.clone(),
            letters: self.letters.iter().rev().map(|l| l.flip()).collect(),
        }
    }

    pub fn pow(&self, k: i64) -> Result<FreeWord, WordError> {
        let base = if k < 0 { self.invert() } else { self.clone() };
        let mut acc = FreeWord::identity(self.alphabet.clone());
        for _ in 0..k.unsigned_abs() {
            acc = acc.concat(&base)?;
        }
        Ok(acc)
    }

    /// Textual form: letters separated by spaces, `^-1` marks inverses,
    /// `1` is the empty word.
    pub fn parse(alphabet: &Arc<Alphabet>, text: &str) -> Result<FreeWord, WordError> {
        let text = text.trim();
        if text == "1" || text.is_empty() {
            return Ok(FreeWord::identity(alphabet.clone()));
        }
        let mut letters = Vec::new();
        for tok in text.split_whitespace() {
            let (name, inverse) = match tok.strip_suffix("^-1") {
                Some(base) => (base, true),
                None => (tok, false),
            };
            let id = alphabet
                .id_of(name)
                .ok_or_else(|| WordError::UnknownLetter(name.to_string()))?;
            letters.push(SignedLetter { id, inverse });
        }
        Ok(FreeWord::from_letters(alphabet.clone(), letters))
    }
}

impl fmt::Display for FreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "1");
        }
        let mut first = true;
        for l in &self.letters {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{}", self.alphabet.name(l.id))?;
            if l.inverse {
                write!(f, "^-1")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Alphabet, NNTree, RawTree, RawVertex, SCHEMA};
    use proptest::prelude::*;

    fn alphabet33() -> Arc<Alphabet> {
        let raw = RawTree {
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
        };
        let tree = Arc::new(NNTree::validate(&raw).unwrap());
        tree.alphabet()
    }

    #[test]
    fn concat_cancels_inverse_pairs() {
        let a = alphabet33();
        let b0 = FreeWord::letter(a.clone(), 0, false);
        let b0i = FreeWord::letter(a.clone(), 0, true);
        assert!(b0.concat(&b0i).unwrap().is_identity());

        let b1 = FreeWord::letter(a.clone(), 1, false);
        let w = b0.concat(&b1).unwrap();
        assert!(w.concat(&w.invert()).unwrap().is_identity());

        // b.1 * (b.0 b.1)^-1 = b.0^-1
        let lhs = b1.concat(&w.invert()).unwrap();
        assert_eq!(lhs, b0i);
    }

    #[test]
    fn invert_examples() {
        let a = alphabet33();
        let e = FreeWord::identity(a.clone());
        assert_eq!(e.invert(), e);
        let w = FreeWord::parse(&a, "b.0 b.1").unwrap();
        assert_eq!(w.invert().to_string(), "b.1^-1 b.0^-1");
        let w = FreeWord::parse(&a, "b.0^-1 b.1").unwrap();
        assert_eq!(w.invert().to_string(), "b.1^-1 b.0");
    }

    #[test]
    fn length_cap_guards_runaway_products() {
        let a = alphabet33();
        let w = FreeWord::parse(&a, "b.0 b.1").unwrap();
        let mut acc = FreeWord::identity(a.clone());
        let mut hit_cap = false;
        for _ in 0..10 {
            match acc.concat_capped(&w, 8) {
                Ok(next) => acc = next,
                Err(WordError::TooLong(8)) => {
                    hit_cap = true;
                    break;
                }
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
        assert!(hit_cap);
    }

    #[test]
    fn alphabet_mismatch_rejected() {
        let a1 = alphabet33();
        let a2 = alphabet33(); // distinct token
        let w1 = FreeWord::letter(a1, 0, false);
        let w2 = FreeWord::letter(a2, 0, false);
        assert_eq!(w1.concat(&w2).unwrap_err(), WordError::AlphabetMismatch);
    }

    #[test]
    fn display_parse_round_trip() {
        let a = alphabet33();
        for text in ["1", "b.0", "b.0 b.1^-1", "b.1^-1 b.0"] {
            let w = FreeWord::parse(&a, text).unwrap();
            assert_eq!(w.to_string(), text);
        }
    }

    proptest! {
        /// Inserting cancelling pairs anywhere reduces back to the original:
        /// reduction is confluent.
        #[test]
        fn reduction_confluent(
            base in proptest::collection::vec((0u32..2, any::<bool>()), 0..12),
            inserts in proptest::collection::vec((0usize..16, 0u32..2, any::<bool>()), 0..6)
        ) {
            let a = alphabet33();
            let word = FreeWord::from_letters(
                a.clone(),
                base.iter().map(|&(id, inverse)| SignedLetter { id, inverse }),
            );
            let mut padded: Vec<SignedLetter> = word.letters().to_vec();
            for &(pos, id, inverse) in &inserts {
                let at = pos % (padded.len() + 1);
                let s = SignedLetter { id, inverse };
                padded.insert(at, s.flip());
                padded.insert(at, s);
            }
            let reduced = FreeWord::from_letters(a.clone(), padded);
            prop_assert_eq!(reduced, word);
        }

        #[test]
        fn concat_associative(
            xs in proptest::collection::vec((0u32..2, any::<bool>()), 0..8),
            ys in proptest::collection::vec((0u32..2, any::<bool>()), 0..8),
            zs in proptest::collection::vec((0u32..2, any::<bool>()), 0..8)
        ) {
            let a = alphabet33();
            let mk = |v: &Vec<(u32, bool)>| {
                FreeWord::from_letters(
                    a.clone(),
                    v.iter().map(|&(id, inverse)| SignedLetter { id, inverse }),
                )
            };
            let (x, y, z) = (mk(&xs), mk(&ys), mk(&zs));
            let l = x.concat(&y).unwrap().concat(&z).unwrap();
            let r = x.concat(&y.concat(&z).unwrap()).unwrap();
            prop_assert_eq!(l, r);
        }
    }
}
