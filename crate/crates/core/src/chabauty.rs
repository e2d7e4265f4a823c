//! Finite-precision view of the Chabauty topology on `Sub(F_r)`.
//!
//! Two subgroups are close when their membership patterns agree on a large
//! ball of reduced words. Everything here is radius-truncated: signatures,
//! basic open sets, envelopes, and a dyadic distance `2^{-R*}`.

use num::rational::BigRational;
use num::{BigInt, One, Zero};
use serde::{Deserialize, Serialize};

use crate::stallings::{CoreGraph, StallingsError};
use crate::words::{enumerate_reduced, Word};

/// The membership pattern of a subgroup on the ball of radius `R`: the
/// sorted set of reduced words of length at most `R` lying in the subgroup.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallSignature {
    pub radius: usize,
    pub words: Vec<Word>,
}

/// All reduced words of length `<= R` belonging to `G`.
pub fn ball_signature(g: &CoreGraph, radius: usize) -> Result<BallSignature, StallingsError> {
    let mut words = Vec::new();
    for w in enumerate_reduced(g.rank_ambient(), radius) {
        if g.contains(&w)? {
            words.push(w);
        }
    }
    words.sort_by(|a, b| (a.len(), a.letters().to_vec()).cmp(&(b.len(), b.letters().to_vec())));
    Ok(BallSignature { radius, words })
}

/// Whether `D` lies in the basic open set `U_M(C)`: membership in `D` and
/// `C` agrees on every element of `M`.
pub fn in_basic_open(d: &CoreGraph, c: &CoreGraph, m: &[Word]) -> Result<bool, StallingsError> {
    for w in m {
        if d.contains(w)? != c.contains(w)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `D` belongs to the envelope of `Sigma`, i.e. `Sigma <= D`.
pub fn env_contains(d: &CoreGraph, sigma: &CoreGraph) -> Result<bool, StallingsError> {
    for b in sigma.basis() {
        if !d.contains(&b)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Outcome of the truncated Chabauty distance computation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChabautyDist {
    /// Signatures first differ at radius `r`; the distance is `2^{-r}`.
    DifferAt { radius: usize, dist: BigRational },
    /// Signatures agree on every radius up to `rmax`; the distance is at
    /// most `2^{-rmax}`.
    AgreeUpTo { rmax: usize },
}

impl ChabautyDist {
    /// Numeric upper bound `2^{-r}` (exact dyadic rational).
    pub fn upper_bound(&self) -> BigRational {
        match self {
            ChabautyDist::DifferAt { dist, .. } => dist.clone(),
            ChabautyDist::AgreeUpTo { rmax } => dyadic(*rmax),
        }
    }
}

fn dyadic(r: usize) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(2u32).pow(r as u32))
}

/// Dyadic Chabauty distance truncated at `rmax`: `2^{-R*}` where `R*` is the
/// least radius at which the ball signatures differ.
pub fn chabauty_dist(
    g1: &CoreGraph,
    g2: &CoreGraph,
    rmax: usize,
) -> Result<ChabautyDist, StallingsError> {
    assert!(rmax >= 1, "rmax must be at least 1");
    for r in 0..=rmax {
        if ball_signature(g1, r)? != ball_signature(g2, r)? {
            return Ok(ChabautyDist::DifferAt { radius: r, dist: dyadic(r) });
        }
    }
    Ok(ChabautyDist::AgreeUpTo { rmax })
}

/// Numeric distance: the `upper_bound` of [`chabauty_dist`], with agreement
/// up to `rmax` collapsed to `0` for metric-style comparisons.
pub fn chabauty_dist_value(
    g1: &CoreGraph,
    g2: &CoreGraph,
    rmax: usize,
) -> Result<BigRational, StallingsError> {
    Ok(match chabauty_dist(g1, g2, rmax)? {
        ChabautyDist::DifferAt { dist, .. } => dist,
        ChabautyDist::AgreeUpTo { .. } => BigRational::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sub(gens: &[&str]) -> CoreGraph {
        let ws: Vec<Word> = gens.iter().map(|s| Word::parse(2, s).unwrap()).collect();
        CoreGraph::from_generators(2, &ws).unwrap()
    }

    fn w(s: &str) -> Word {
        Word::parse(2, s).unwrap()
    }

    #[test]
    fn signatures() {
        let t = ball_signature(&CoreGraph::trivial(2), 3).unwrap();
        assert_eq!(t.words, vec![w("e")]);
        let a = ball_signature(&sub(&["a"]), 2).unwrap();
        assert_eq!(a.words, vec![w("e"), w("A"), w("a"), w("AA"), w("aa")]);
        let g = ball_signature(&sub(&["aa", "b"]), 2).unwrap();
        let expect: Vec<Word> =
            ["e", "b", "B", "aa", "AA", "bb", "BB"].iter().map(|s| w(s)).collect();
        let mut expect = expect;
        expect.sort_by(|a, b| (a.len(), a.letters().to_vec()).cmp(&(b.len(), b.letters().to_vec())));
        assert_eq!(g.words, expect);
    }

    #[test]
    fn basic_opens() {
        let g = sub(&["aa", "b"]);
        let h = sub(&["aa", "b", "abA"]);
        assert!(in_basic_open(&g, &g, &ball_signature(&g, 3).unwrap().words).unwrap());
        assert!(!in_basic_open(&sub(&["a"]), &sub(&["aa"]), &[w("a")]).unwrap());
        let m2 = enumerate_reduced(2, 2);
        let m3 = enumerate_reduced(2, 3);
        assert!(in_basic_open(&g, &h, &m2).unwrap());
        assert!(!in_basic_open(&g, &h, &m3).unwrap()); // differ at a b a^-1
    }

    #[test]
    fn envelopes() {
        assert!(env_contains(&CoreGraph::whole_group(2), &sub(&["abA"])).unwrap());
        assert!(env_contains(&sub(&["a"]), &sub(&["aa"])).unwrap());
        assert!(!env_contains(&sub(&["aa", "b"]), &sub(&["aaa"])).unwrap());
    }

    #[test]
    fn distances() {
        let g = sub(&["aa", "b"]);
        assert!(matches!(
            chabauty_dist(&g, &g, 4).unwrap(),
            ChabautyDist::AgreeUpTo { rmax: 4 }
        ));
        let d = chabauty_dist(&sub(&["a"]), &CoreGraph::whole_group(2), 4).unwrap();
        assert_eq!(
            d,
            ChabautyDist::DifferAt {
                radius: 1,
                dist: BigRational::new(BigInt::from(1), BigInt::from(2))
            }
        );
        let h = sub(&["aa", "b", "abA"]);
        match chabauty_dist(&g, &h, 4).unwrap() {
            ChabautyDist::DifferAt { radius, .. } => assert_eq!(radius, 3),
            other => panic!("expected radius 3, got {other:?}"),
        }
    }

    #[test]
    fn pseudo_ultrametric_samples() {
        // d(x,z) <= max(d(x,y), d(y,z)) on a handful of triples.
        let subs = [
            sub(&["a"]),
            sub(&["aa"]),
            sub(&["aa", "b"]),
            sub(&["aa", "b", "abA"]),
            CoreGraph::whole_group(2),
            CoreGraph::trivial(2),
        ];
        for x in &subs {
            for y in &subs {
                for z in &subs {
                    let dxz = chabauty_dist_value(x, z, 4).unwrap();
                    let dxy = chabauty_dist_value(x, y, 4).unwrap();
                    let dyz = chabauty_dist_value(y, z, 4).unwrap();
                    assert!(dxz <= dxy.max(dyz));
                }
            }
        }
    }
}
