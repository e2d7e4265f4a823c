//! Exact arithmetic in the free group `F_r`.
//!
//! A [`Word`] is a freely reduced word over `r` generators, stored as signed
//! generator indices. All operations reduce their result, so every `Word`
//! in circulation satisfies the no-cancellation invariant.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum WordError {
    #[error("generator index {index} out of range for rank {rank}")]
    GeneratorOutOfRange { index: usize, rank: usize },
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("cannot parse word {0:?}: {1}")]
    Parse(String, String),
}

/// A freely reduced word in the free group of rank `r`.
///
/// Letters are nonzero signed integers: `+i` is the `i`-th generator,
/// `-i` its inverse (`1 <= i <= rank`). The empty letter sequence is the
/// identity.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    rank: usize,
    letters: Vec<i32>,
}

impl Word {
    /// The identity element of `F_rank`.
    pub fn identity(rank: usize) -> Self {
        Word { rank, letters: Vec::new() }
    }

    /// The `i`-th generator (1-indexed).
    pub fn generator(rank: usize, i: usize) -> Result<Self, WordError> {
        if i == 0 || i > rank {
            return Err(WordError::GeneratorOutOfRange { index: i, rank });
        }
        Ok(Word { rank, letters: vec![i as i32] })
    }

    /// Freely reduce a raw letter sequence.
    pub fn reduce(rank: usize, raw: &[i32]) -> Result<Self, WordError> {
        let mut stack: Vec<i32> = Vec::with_capacity(raw.len());
        for &l in raw {
            if l == 0 || l.unsigned_abs() as usize > rank {
                return Err(WordError::GeneratorOutOfRange {
                    index: l.unsigned_abs() as usize,
                    rank,
                });
            }
            if stack.last() == Some(&-l) {
                stack.pop();
            } else {
                stack.push(l);
            }
        }
        Ok(Word { rank, letters: stack })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn letters(&self) -> &[i32] {
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

    fn check_rank(&self, other: &Word) -> Result<(), WordError> {
        if self.rank != other.rank {
            return Err(WordError::RankMismatch(self.rank, other.rank));
        }
        Ok(())
    }

    /// Reduced product `self * other`.
    pub fn multiply(&self, other: &Word) -> Result<Word, WordError> {
        self.check_rank(other)?;
        let mut stack = self.letters.clone();
        for &l in &other.letters {
            if stack.last() == Some(&-l) {
                stack.pop();
            } else {
                stack.push(l);
            }
        }
        Ok(Word { rank: self.rank, letters: stack })
    }

    pub fn invert(&self) -> Word {
        Word {
            rank: self.rank,
            letters: self.letters.iter().rev().map(|l| -l).collect(),
        }
    }

    /// `g * self * g^{-1}`.
    pub fn conjugate(&self, g: &Word) -> Result<Word, WordError> {
        g.multiply(self)?.multiply(&g.invert())
    }

    /// `self^n` for any integer exponent.
    pub fn power(&self, n: i64) -> Word {
        let base = if n < 0 { self.invert() } else { self.clone() };
        let mut out = Word::identity(self.rank);
        for _ in 0..n.unsigned_abs() {
            out = out.multiply(&base).expect("equal ranks");
        }
        out
    }

    /// Decompose `self = eta * theta * eta^{-1}` with `theta` cyclically
    /// reduced. `theta` is the identity iff `self` is.
    pub fn cyclic_reduce(&self) -> (Word, Word) {
        let mut letters = self.letters.clone();
        let mut prefix: Vec<i32> = Vec::new();
        while letters.len() >= 2 && *letters.first().unwrap() == -*letters.last().unwrap() {
            prefix.push(letters[0]);
            letters.remove(0);
            letters.pop();
        }
        (
            Word { rank: self.rank, letters: prefix },
            Word { rank: self.rank, letters },
        )
    }

    /// Whether the first and last letters are not mutually inverse.
    pub fn is_cyclically_reduced(&self) -> bool {
        match (self.letters.first(), self.letters.last()) {
            (Some(&f), Some(&l)) => f != -l,
            _ => true,
        }
    }

    /// `[u, v] = u v u^{-1} v^{-1}`, reduced.
    pub fn commutator(&self, other: &Word) -> Result<Word, WordError> {
        self.multiply(other)?
            .multiply(&self.invert())?
            .multiply(&other.invert())
    }

    /// Parse the CLI word syntax: `a..z` are generators 1..26, uppercase or a
    /// trailing apostrophe denotes the inverse. `e` alone (or the empty
    /// string) is the identity.
    pub fn parse(rank: usize, s: &str) -> Result<Self, WordError> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Ok(Word::identity(rank));
        }
        let mut raw: Vec<i32> = Vec::new();
        for c in s.chars() {
            match c {
                'a'..='z' => raw.push((c as i32 - 'a' as i32) + 1),
                'A'..='Z' => raw.push(-((c as i32 - 'A' as i32) + 1)),
                '\'' => {
                    let last = raw.pop().ok_or_else(|| {
                        WordError::Parse(s.to_string(), "dangling apostrophe".into())
                    })?;
                    raw.push(-last);
                }
                c if c.is_whitespace() => {}
                other => {
                    return Err(WordError::Parse(
                        s.to_string(),
                        format!("unexpected character {other:?}"),
                    ))
                }
            }
        }
        Word::reduce(rank, &raw)
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "e");
        }
        for &l in &self.letters {
            let idx = (l.unsigned_abs() - 1) as u8;
            let c = if l > 0 { b'a' + idx } else { b'A' + idx };
            write!(f, "{}", c as char)?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word(r={}, {})", self.rank, self)
    }
}

/// Enumerate all freely reduced words of length `<= max_len` in `F_rank`,
/// in shortlex order (identity first).
pub fn enumerate_reduced(rank: usize, max_len: usize) -> Vec<Word> {
    let mut out = vec![Word::identity(rank)];
    let alphabet: Vec<i32> = (1..=rank as i32).flat_map(|i| [i, -i]).collect();
    let mut frontier: Vec<Vec<i32>> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for &l in &alphabet {
                if w.last() == Some(&-l) {
                    continue;
                }
                let mut v = w.clone();
                v.push(l);
                out.push(Word { rank, letters: v.clone() });
                next.push(v);
            }
        }
        frontier = next;
    }
    out
}
