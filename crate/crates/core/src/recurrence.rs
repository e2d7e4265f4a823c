//! Quantitative Poincaré recurrence on finite measure-preserving systems:
//! Kakutani–Rokhlin towers built from first-return times and the uniform
//! return bound `n(A, mu, eps)`, all in exact rational arithmetic.

use std::collections::BTreeSet;

use num::rational::BigRational;
use num::{Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum RecurrenceError {
    #[error("invalid system: {0}")]
    BadSystem(String),
    #[error("base set is empty")]
    EmptyBase,
    #[error("base set has measure zero")]
    NullBase,
}

/// A finite measure-preserving system: points with positive rational weights
/// summing to 1 and a single invariant permutation `T`.
#[derive(Clone, Debug)]
pub struct FiniteMPSystem {
    pub weights: Vec<BigRational>,
    pub t: Vec<usize>,
}

impl FiniteMPSystem {
    pub fn new(weights: Vec<BigRational>, t: Vec<usize>) -> Result<Self, RecurrenceError> {
        let n = weights.len();
        if n == 0 {
            return Err(RecurrenceError::BadSystem("no points".into()));
        }
        if weights.iter().any(|w| !w.is_positive())
            || weights.iter().sum::<BigRational>() != num::One::one()
        {
            return Err(RecurrenceError::BadSystem(
                "weights must be positive and sum to 1".into(),
            ));
        }
        let mut seen = vec![false; n];
        if t.len() != n {
            return Err(RecurrenceError::BadSystem("permutation length mismatch".into()));
        }
        for &x in &t {
            if x >= n || seen[x] {
                return Err(RecurrenceError::BadSystem("T is not a permutation".into()));
            }
            seen[x] = true;
        }
        for x in 0..n {
            if weights[x] != weights[t[x]] {
                return Err(RecurrenceError::BadSystem("T does not preserve weights".into()));
            }
        }
        Ok(FiniteMPSystem { weights, t })
    }

    pub fn points(&self) -> usize {
        self.weights.len()
    }

    pub fn measure(&self, set: &BTreeSet<usize>) -> BigRational {
        set.iter().map(|&x| self.weights[x].clone()).sum()
    }

    /// Forward image `T^k(set)`.
    pub fn image(&self, set: &BTreeSet<usize>, k: usize) -> BTreeSet<usize> {
        set.iter()
            .map(|&x| {
                let mut cur = x;
                for _ in 0..k {
                    cur = self.t[cur];
                }
                cur
            })
            .collect()
    }
}

/// Kakutani–Rokhlin tower over a base set: the first-return partition
/// `V_m` of the base and the tail masses `mu(Tail(m))`, where `Tail(m)` is
/// the union of all tower levels of height greater than `m`.
#[derive(Clone, Debug)]
pub struct Tower {
    pub base: BTreeSet<usize>,
    /// `(m, V_m)` for each occurring first-return time, ascending in `m`.
    pub levels: Vec<(usize, BTreeSet<usize>)>,
    /// `tail_mass[m] = mu(Tail(m))` for `0 <= m <= max return time`.
    pub tail_mass: Vec<BigRational>,
}

impl Tower {
    pub fn max_return(&self) -> usize {
        self.levels.last().map(|(m, _)| *m).unwrap_or(0)
    }

    pub fn tail(&self, m: usize) -> BigRational {
        self.tail_mass
            .get(m)
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }
}

/// Build the first-return tower over `A`. In a finite invariant system every
/// point of `A` returns, so the `V_m` partition `A` exactly.
pub fn build_tower(s: &FiniteMPSystem, a: &BTreeSet<usize>) -> Result<Tower, RecurrenceError> {
    if a.is_empty() {
        return Err(RecurrenceError::EmptyBase);
    }
    let mut by_return: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
    for &x in a {
        let mut cur = s.t[x];
        let mut m = 1;
        while !a.contains(&cur) {
            cur = s.t[cur];
            m += 1;
            debug_assert!(m <= s.points(), "finite system must return");
        }
        by_return.entry(m).or_default().insert(x);
    }
    let levels: Vec<(usize, BTreeSet<usize>)> = by_return.into_iter().collect();
    // Tail(m) = union of levels T^i V_{m'} with m' > m, 0 <= i < m'; its
    // mass is sum over m' > m of m' * mu(V_{m'}) by invariance.
    let max_m = levels.last().map(|(m, _)| *m).unwrap();
    let mut tail_mass = Vec::with_capacity(max_m + 1);
    for m in 0..=max_m {
        let mass: BigRational = levels
            .iter()
            .filter(|(mm, _)| *mm > m)
            .map(|(mm, v)| BigRational::from_integer((*mm as i64).into()) * s.measure(v))
            .sum();
        tail_mass.push(mass);
    }
    let tower = Tower { base: a.clone(), levels, tail_mass };
    debug_assert!(verify_tower(s, &tower));
    Ok(tower)
}

/// Internal consistency of a tower: the `V_m` partition the base, the tower
/// levels are disjoint, and their union is the full forward orbit of `A`.
pub fn verify_tower(s: &FiniteMPSystem, tower: &Tower) -> bool {
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    for (_, v) in &tower.levels {
        for &x in v {
            if !covered.insert(x) {
                return false;
            }
        }
    }
    if covered != tower.base {
        return false;
    }
    let mut levels_union: BTreeSet<usize> = BTreeSet::new();
    for (m, v) in &tower.levels {
        for i in 0..*m {
            for x in s.image(v, i) {
                if !levels_union.insert(x) {
                    return false; // levels must be disjoint
                }
            }
        }
    }
    // Union over n >= 0 of T^n A (stabilizes within |X| steps).
    let mut orbit = tower.base.clone();
    loop {
        let next: BTreeSet<usize> = orbit
            .union(&s.image(&orbit, 1))
            .copied()
            .collect();
        if next == orbit {
            break;
        }
        orbit = next;
    }
    levels_union == orbit
}

/// The minimal `n` with `mu(Tail(n)) < eps`; then
/// `mu(A \ union_{i=N}^{N+n-1} T^i A) < eps` for every `N`.
pub fn recurrence_bound(
    s: &FiniteMPSystem,
    a: &BTreeSet<usize>,
    eps: &BigRational,
) -> Result<usize, RecurrenceError> {
    if a.is_empty() || s.measure(a).is_zero() {
        return Err(RecurrenceError::NullBase);
    }
    assert!(eps.is_positive(), "eps must be positive");
    let tower = build_tower(s, a)?;
    for n in 1..=tower.max_return() {
        if &tower.tail(n) < eps {
            return Ok(n);
        }
    }
    Ok(tower.max_return().max(1))
}

/// Literal check of the recurrence display: for every `N` in `n_range`,
/// `mu(A \ union_{i=N}^{N+n-1} T^i A) < eps`. Exact rationals.
pub fn verify_bound(
    s: &FiniteMPSystem,
    a: &BTreeSet<usize>,
    n: usize,
    eps: &BigRational,
    n_range: std::ops::RangeInclusive<usize>,
) -> bool {
    for big_n in n_range {
        let mut union: BTreeSet<usize> = BTreeSet::new();
        for i in big_n..big_n + n {
            union.extend(s.image(a, i));
        }
        let diff: BTreeSet<usize> = a.difference(&union).copied().collect();
        if &s.measure(&diff) >= eps {
            return false;
        }
    }
    true
}
