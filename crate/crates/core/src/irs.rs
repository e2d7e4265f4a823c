//! Finitely supported invariant random subgroups of `F_r`.
//!
//! An [`AtomicIRS`] is a finite conjugation-invariant probability
//! distribution on subgroups, with exact rational weights. Construction from
//! finite measure-preserving actions (stabilizer distributions), the three
//! operators restrict / induce / intersect, essential-subgroup machinery,
//! covers and refinements, and return-time certification all live here.

use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chabauty::env_contains;
use crate::stallings::{stabilizer_graph, CoreGraph, StallingsError};
use crate::words::{enumerate_reduced, Word, WordError};

#[derive(Debug, Error, Clone)]
pub enum IrsError {
    #[error("subgroup is not normal")]
    NotNormal,
    #[error("finite conjugate set not certified within bound {0}")]
    NotAlmostNormal(usize),
    #[error("subgroup has infinite index")]
    InfiniteIndex,
    #[error("atom {0} is not contained in the inducing subgroup")]
    AtomNotInSigma(usize),
    #[error("conditioning event has measure zero")]
    NullEvent,
    #[error("conditioning event is not conjugation-invariant")]
    NotInvariantEvent,
    #[error("weights must be positive and sum to 1")]
    BadWeights,
    #[error("distribution is not conjugation-invariant")]
    NotInvariant,
    #[error("invalid finite action: {0}")]
    BadAction(String),
    #[error(transparent)]
    Stallings(#[from] StallingsError),
    #[error(transparent)]
    Word(#[from] WordError),
}

/// A finite measure-preserving action of `F_rank`: points, positive rational
/// weights summing to 1, one weight-preserving permutation per generator.
#[derive(Clone, Debug)]
pub struct FiniteAction {
    pub rank: usize,
    pub weights: Vec<BigRational>,
    /// `perms[i][x]` = image of point `x` under generator `i+1`.
    pub perms: Vec<Vec<usize>>,
}

impl FiniteAction {
    pub fn new(
        rank: usize,
        weights: Vec<BigRational>,
        perms: Vec<Vec<usize>>,
    ) -> Result<Self, IrsError> {
        let n = weights.len();
        if n == 0 {
            return Err(IrsError::BadAction("no points".into()));
        }
        if weights.iter().any(|w| !w.is_positive())
            || weights.iter().sum::<BigRational>() != BigRational::one()
        {
            return Err(IrsError::BadWeights);
        }
        if perms.len() != rank {
            return Err(IrsError::BadAction("one permutation per generator required".into()));
        }
        for p in &perms {
            let mut seen = vec![false; n];
            if p.len() != n {
                return Err(IrsError::BadAction("permutation length mismatch".into()));
            }
            for &x in p {
                if x >= n || seen[x] {
                    return Err(IrsError::BadAction("not a permutation".into()));
                }
                seen[x] = true;
            }
            for x in 0..n {
                if weights[x] != weights[p[x]] {
                    return Err(IrsError::BadAction("weights not preserved".into()));
                }
            }
        }
        Ok(FiniteAction { rank, weights, perms })
    }

    pub fn points(&self) -> usize {
        self.weights.len()
    }

    /// Image of a point under a word.
    pub fn act(&self, x: usize, w: &Word) -> usize {
        let mut cur = x;
        for &l in w.letters() {
            let p = &self.perms[(l.unsigned_abs() - 1) as usize];
            cur = if l > 0 {
                p[cur]
            } else {
                p.iter().position(|&y| y == cur).unwrap()
            };
        }
        cur
    }
}

/// Finitely supported conjugation-invariant probability distribution on
/// `Sub(F_rank)`: a list of (subgroup, positive weight) atoms.
#[derive(Clone, Debug)]
pub struct AtomicIRS {
    rank: usize,
    atoms: Vec<(CoreGraph, BigRational)>,
}

impl AtomicIRS {
    /// Build from raw atoms: dedupes equal subgroups, checks positivity,
    /// total mass 1 and conjugation invariance under all generators.
    pub fn new(rank: usize, atoms: Vec<(CoreGraph, BigRational)>) -> Result<Self, IrsError> {
        let mu = Self::new_unchecked(rank, atoms)?;
        if !mu.is_invariant()? {
            return Err(IrsError::NotInvariant);
        }
        Ok(mu)
    }

    /// Build without the invariance check (used for restrictions, which are
    /// only invariant under the smaller group).
    pub fn new_unchecked(
        rank: usize,
        atoms: Vec<(CoreGraph, BigRational)>,
    ) -> Result<Self, IrsError> {
        let mut agg: Vec<(CoreGraph, BigRational)> = Vec::new();
        for (g, w) in atoms {
            if !w.is_positive() {
                return Err(IrsError::BadWeights);
            }
            match agg.iter_mut().find(|(h, _)| h.equal(&g).unwrap_or(false)) {
                Some((_, wh)) => *wh += w,
                None => agg.push((g, w)),
            }
        }
        let total: BigRational = agg.iter().map(|(_, w)| w.clone()).sum();
        if total != BigRational::one() {
            return Err(IrsError::BadWeights);
        }
        Ok(AtomicIRS { rank, atoms: agg })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn atoms(&self) -> &[(CoreGraph, BigRational)] {
        &self.atoms
    }

    /// Weight of the atom equal to `g`, else 0.
    pub fn weight_of(&self, g: &CoreGraph) -> Result<BigRational, IrsError> {
        for (h, w) in &self.atoms {
            if h.equal(g)? {
                return Ok(w.clone());
            }
        }
        Ok(BigRational::zero())
    }

    /// Exact conjugation invariance under every generator.
    pub fn is_invariant(&self) -> Result<bool, IrsError> {
        for i in 1..=self.rank {
            let s = Word::generator(self.rank, i)?;
            for (g, w) in &self.atoms {
                let conj = g.conjugate_subgroup(&s)?;
                if self.weight_of(&conj)? != *w {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// The stabilizer distribution of a finite action: push-forward of the
/// invariant measure under the point-stabilizer map.
pub fn stabilizer_irs(a: &FiniteAction) -> Result<AtomicIRS, IrsError> {
    let mut atoms = Vec::new();
    for x in 0..a.points() {
        let stab = stabilizer_graph(a.rank, &a.perms, x);
        atoms.push((stab, a.weights[x].clone()));
    }
    AtomicIRS::new(a.rank, atoms)
}

/// Dirac measure at a normal subgroup.
pub fn dirac_normal(n: &CoreGraph) -> Result<AtomicIRS, IrsError> {
    if !n.is_normal()? {
        return Err(IrsError::NotNormal);
    }
    AtomicIRS::new(n.rank_ambient(), vec![(n.clone(), BigRational::one())])
}

/// Enumerate the conjugate set of `h` by closing under generator
/// conjugation; fails after `bound` distinct conjugates.
pub fn conjugate_orbit(h: &CoreGraph, bound: usize) -> Result<Vec<CoreGraph>, IrsError> {
    let rank = h.rank_ambient();
    let mut orbit = vec![h.clone()];
    let mut frontier = vec![h.clone()];
    while let Some(g) = frontier.pop() {
        for i in 1..=rank {
            for s in [Word::generator(rank, i)?, Word::generator(rank, i)?.invert()] {
                let c = g.conjugate_subgroup(&s)?;
                if !orbit.iter().any(|o| o.equal(&c).unwrap_or(false)) {
                    if orbit.len() >= bound {
                        return Err(IrsError::NotAlmostNormal(bound));
                    }
                    orbit.push(c.clone());
                    frontier.push(c);
                }
            }
        }
    }
    Ok(orbit)
}

/// Uniform distribution over the (finite) conjugate set of `h`.
///
/// The conjugate set is certified finite when `h` has finite index, or when
/// the generator-conjugation closure terminates within `bound` subgroups.
pub fn almost_normal_irs(h: &CoreGraph, bound: usize) -> Result<AtomicIRS, IrsError> {
    let orbit = conjugate_orbit(h, bound)?;
    let w = BigRational::new(1.into(), (orbit.len() as i64).into());
    AtomicIRS::new(
        h.rank_ambient(),
        orbit.into_iter().map(|g| (g, w.clone())).collect(),
    )
}

/// Restriction of `mu` to `Sigma`: atoms become intersections with `Sigma`
/// (kept in ambient coordinates), weights aggregate. The result is only
/// `Sigma`-conjugation invariant, so it skips the global invariance check.
pub fn restrict(mu: &AtomicIRS, sigma: &CoreGraph) -> Result<AtomicIRS, IrsError> {
    let atoms: Result<Vec<_>, StallingsError> = mu
        .atoms()
        .iter()
        .map(|(g, w)| Ok((g.intersect(sigma)?, w.clone())))
        .collect();
    AtomicIRS::new_unchecked(mu.rank(), atoms?)
}

/// Induction of a distribution on `Sub(Sigma)` to the whole group:
/// `(1/[G:Sigma]) * sum_i (gamma_i)_* mu` over coset representatives.
pub fn induce(mu: &AtomicIRS, sigma: &CoreGraph) -> Result<AtomicIRS, IrsError> {
    let action = sigma.coset_action().map_err(|e| match e {
        StallingsError::InfiniteIndex => IrsError::InfiniteIndex,
        other => IrsError::Stallings(other),
    })?;
    for (k, (g, _)) in mu.atoms().iter().enumerate() {
        if !env_contains(sigma, g)? {
            return Err(IrsError::AtomNotInSigma(k));
        }
    }
    let n = BigRational::new((action.index as i64).into(), 1.into());
    let mut atoms = Vec::new();
    for rep in &action.reps {
        for (g, w) in mu.atoms() {
            atoms.push((g.conjugate_subgroup(rep)?, w / &n));
        }
    }
    AtomicIRS::new(mu.rank(), atoms)
}

/// Intersection of independent IRS: atoms are pairwise intersections with
/// product weights.
pub fn intersect_irs(mu1: &AtomicIRS, mu2: &AtomicIRS) -> Result<AtomicIRS, IrsError> {
    let mut atoms = Vec::new();
    for (g1, w1) in mu1.atoms() {
        for (g2, w2) in mu2.atoms() {
            atoms.push((g1.intersect(g2)?, w1 * w2));
        }
    }
    AtomicIRS::new(mu1.rank(), atoms)
}

/// Measure of the envelope of `Sigma`: total weight of atoms containing it.
/// `Sigma` is essential for `mu` iff this is positive.
pub fn env_measure(mu: &AtomicIRS, sigma: &CoreGraph) -> Result<BigRational, IrsError> {
    let mut total = BigRational::zero();
    for (g, w) in mu.atoms() {
        if env_contains(g, sigma)? {
            total += w;
        }
    }
    Ok(total)
}

/// Truncated locally-essential check: every subgroup generated by at most
/// `k` elements of `delta`'s radius-`R` ball must be essential. Returns a
/// non-essential witness subgroup on failure. This is a falsifier — `true`
/// means "not falsified at this truncation".
pub fn check_locally_essential(
    mu: &AtomicIRS,
    delta: &CoreGraph,
    radius: usize,
    k: usize,
) -> Result<Option<CoreGraph>, IrsError> {
    let ball: Vec<Word> = enumerate_reduced(delta.rank_ambient(), radius)
        .into_iter()
        .filter(|w| !w.is_identity() && delta.contains(w).unwrap_or(false))
        .collect();
    let mut stack: Vec<Vec<usize>> = (0..ball.len()).map(|i| vec![i]).collect();
    while let Some(combo) = stack.pop() {
        let gens: Vec<Word> = combo.iter().map(|&i| ball[i].clone()).collect();
        let sub = CoreGraph::from_generators(delta.rank_ambient(), &gens)?;
        if env_measure(mu, &sub)?.is_zero() {
            return Ok(Some(sub));
        }
        if combo.len() < k {
            for j in combo.last().unwrap() + 1..ball.len() {
                let mut next = combo.clone();
                next.push(j);
                stack.push(next);
            }
        }
    }
    Ok(None)
}

/// Return-time data for `(Delta, Env(Sigma), gamma)`: the set of `n` with
/// `gamma^{-n} Sigma gamma^{n} <= Delta`.
#[derive(Clone, Debug)]
pub struct ReturnTimes {
    pub hits: Vec<usize>,
    /// Conjugation period of `Delta` under `gamma` (finite-index case).
    pub period: Option<usize>,
    /// Certified that the hit set is infinite (some hit within one period).
    pub infinite: bool,
}

/// Compute return times up to `cutoff` (n >= 1). For finite-index `delta`
/// the conjugation orbit of `delta` under `gamma` is purely periodic, so a
/// period is computed and a hit within one period certifies infinitude.
pub fn return_times(
    delta: &CoreGraph,
    sigma: &CoreGraph,
    gamma: &Word,
    cutoff: usize,
) -> Result<ReturnTimes, IrsError> {
    let mut hits = Vec::new();
    for n in 1..=cutoff {
        let conj = sigma.conjugate_subgroup(&gamma.power(-(n as i64)))?;
        if env_contains(delta, &conj)? {
            hits.push(n);
        }
    }
    let mut period = None;
    if delta.index().is_some() {
        let mut cur = delta.clone();
        for p in 1..=4096usize {
            cur = cur.conjugate_subgroup(gamma)?;
            if cur.equal(delta)? {
                period = Some(p);
                break;
            }
        }
    }
    let infinite = match period {
        Some(p) => {
            let mut any = false;
            for n in 1..=p {
                let conj = sigma.conjugate_subgroup(&gamma.power(-(n as i64)))?;
                if env_contains(delta, &conj)? {
                    any = true;
                    break;
                }
            }
            any
        }
        None => false,
    };
    Ok(ReturnTimes { hits, period, infinite })
}

/// Whether the envelopes of `family` cover the support of `mu`: every atom
/// must contain some family member. Returns an uncovered atom on failure.
pub fn check_cover(
    mu: &AtomicIRS,
    family: &[CoreGraph],
) -> Result<Option<CoreGraph>, IrsError> {
    for (g, _) in mu.atoms() {
        let mut covered = false;
        for f in family {
            if env_contains(g, f)? {
                covered = true;
                break;
            }
        }
        if !covered {
            return Ok(Some(g.clone()));
        }
    }
    Ok(None)
}

/// Whether `h` refines `f` relative to `mu`: for every `Sigma` in `f` and
/// every atom `Delta` containing it, some `Theta` in `h` satisfies
/// `Sigma <= Theta <= Delta`. Returns a violating pair on failure.
pub fn check_refinement(
    f: &[CoreGraph],
    h: &[CoreGraph],
    mu: &AtomicIRS,
) -> Result<Option<(CoreGraph, CoreGraph)>, IrsError> {
    for sigma in f {
        for (delta, _) in mu.atoms() {
            if !env_contains(delta, sigma)? {
                continue;
            }
            let mut ok = false;
            for theta in h {
                if env_contains(theta, sigma)? && env_contains(delta, theta)? {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return Ok(Some((sigma.clone(), delta.clone())));
            }
        }
    }
    Ok(None)
}

/// Condition `mu` on a conjugation-invariant event over its atoms. Returns
/// the event's measure and the normalized conditional distribution.
pub fn condition<P>(mu: &AtomicIRS, pred: P) -> Result<(BigRational, AtomicIRS), IrsError>
where
    P: Fn(&CoreGraph) -> bool,
{
    // Verify invariance of the event on the atom set: the predicate must
    // take equal values on conjugate atoms.
    for i in 1..=mu.rank() {
        let s = Word::generator(mu.rank(), i)?;
        for (g, _) in mu.atoms() {
            if pred(g) != pred(&g.conjugate_subgroup(&s)?) {
                return Err(IrsError::NotInvariantEvent);
            }
        }
    }
    let selected: Vec<(CoreGraph, BigRational)> = mu
        .atoms()
        .iter()
        .filter(|(g, _)| pred(g))
        .cloned()
        .collect();
    let mass: BigRational = selected.iter().map(|(_, w)| w.clone()).sum();
    if mass.is_zero() {
        return Err(IrsError::NullEvent);
    }
    let scaled = selected.into_iter().map(|(g, w)| (g, w / &mass)).collect();
    Ok((mass.clone(), AtomicIRS::new(mu.rank(), scaled)?))
}

/// Target of a homomorphism with a decidable identity test, for the
/// non-freeness check.
pub enum HomImage {
    /// One permutation per generator.
    Perms(Vec<Vec<usize>>),
    /// One invertible rational matrix per generator.
    Matrices(Vec<Vec<Vec<BigRational>>>),
}

impl HomImage {
    fn word_is_identity(&self, w: &Word) -> bool {
        match self {
            HomImage::Perms(ps) => {
                let n = ps[0].len();
                (0..n).all(|x| {
                    let mut cur = x;
                    for &l in w.letters() {
                        let p = &ps[(l.unsigned_abs() - 1) as usize];
                        cur = if l > 0 {
                            p[cur]
                        } else {
                            p.iter().position(|&y| y == cur).unwrap()
                        };
                    }
                    cur == x
                })
            }
            HomImage::Matrices(ms) => {
                let n = ms[0].len();
                let mut acc: Vec<Vec<BigRational>> = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                if i == j {
                                    BigRational::one()
                                } else {
                                    BigRational::zero()
                                }
                            })
                            .collect()
                    })
                    .collect();
                for &l in w.letters() {
                    let m = &ms[(l.unsigned_abs() - 1) as usize];
                    let factor = if l > 0 { m.clone() } else { invert_matrix(m) };
                    acc = mat_mul(&acc, &factor);
                }
                (0..n).all(|i| {
                    (0..n).all(|j| {
                        acc[i][j]
                            == if i == j {
                                BigRational::one()
                            } else {
                                BigRational::zero()
                            }
                    })
                })
            }
        }
    }
}

fn mat_mul(a: &[Vec<BigRational>], b: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let n = a.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..n).map(|k| &a[i][k] * &b[k][j]).sum())
                .collect()
        })
        .collect()
}

fn invert_matrix(m: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    // Gauss-Jordan over exact rationals.
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m.to_vec();
    let mut inv: Vec<Vec<BigRational>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        BigRational::one()
                    } else {
                        BigRational::zero()
                    }
                })
                .collect()
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .find(|&r| !a[r][col].is_zero())
            .expect("matrix must be invertible");
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let p = a[col][col].clone();
        for j in 0..n {
            a[col][j] /= &p;
            inv[col][j] /= &p;
        }
        for r in 0..n {
            if r != col && !a[r][col].is_zero() {
                let f = a[r][col].clone();
                for j in 0..n {
                    let av = &a[col][j] * &f;
                    a[r][j] -= av;
                    let iv = &inv[col][j] * &f;
                    inv[r][j] -= iv;
                }
            }
        }
    }
    inv
}

/// Whether `mu` is non-free for the homomorphism defined by `images`: every
/// atom must have some basis element with a non-identity image (i.e. no atom
/// lies inside the kernel).
pub fn nontrivial_under(mu: &AtomicIRS, images: &HomImage) -> Result<bool, IrsError> {
    for (g, _) in mu.atoms() {
        let basis = g.basis();
        if basis.is_empty() {
            return Ok(false); // the trivial subgroup lies in every kernel
        }
        if basis.iter().all(|b| images.word_is_identity(b)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Serializable mirror of the JSON action format.
#[derive(Serialize, Deserialize)]
pub struct FiniteActionJson {
    pub rank: usize,
    pub points: usize,
    pub weights: Vec<String>,
    pub perms: std::collections::BTreeMap<String, Vec<usize>>,
}
