//! Subgroup algebra of `F_r` via folded core automata.
//!
//! A [`CoreGraph`] is a folded, base-pointed, generator-labeled graph whose
//! reduced loops at the base vertex spell exactly the elements of a finitely
//! generated subgroup. Folding gives canonical decision procedures for
//! membership, intersection (product automaton), index, rank and free bases.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::words::{Word, WordError};

#[derive(Debug, Error, PartialEq, Eq, Clone)]
pub enum StallingsError {
    #[error("rank mismatch: {0} vs {1}")]
    RankMismatch(usize, usize),
    #[error("subgroup has infinite index")]
    InfiniteIndex,
    #[error(transparent)]
    Word(#[from] WordError),
}

/// Folded base-pointed core automaton for a finitely generated subgroup.
///
/// Transitions are stored per vertex and signed label: `succ[v]` maps a
/// letter `l` (positive = generator, negative = inverse) to the endpoint of
/// the unique `l`-edge leaving `v`, if any. The inverse edge is always
/// stored too, so `succ[w][-l] == v` whenever `succ[v][l] == w`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoreGraph {
    rank: usize,
    base: usize,
    succ: Vec<HashMap<i32, usize>>,
}

impl CoreGraph {
    /// The trivial subgroup: a single base vertex, no edges.
    pub fn trivial(rank: usize) -> Self {
        CoreGraph { rank, base: 0, succ: vec![HashMap::new()] }
    }

    /// The whole group `F_rank`: one vertex with a loop per generator.
    pub fn whole_group(rank: usize) -> Self {
        let mut succ = vec![HashMap::new()];
        for i in 1..=rank as i32 {
            succ[0].insert(i, 0);
            succ[0].insert(-i, 0);
        }
        CoreGraph { rank, base: 0, succ }
    }

    /// Build the core graph of `<gens>` by wedging loops and folding.
    pub fn from_generators(rank: usize, gens: &[Word]) -> Result<Self, StallingsError> {
        for g in gens {
            if g.rank() != rank {
                return Err(StallingsError::RankMismatch(rank, g.rank()));
            }
        }
        // Multigraph during folding: vertex -> label -> list of endpoints.
        let mut multi: Vec<HashMap<i32, Vec<usize>>> = vec![HashMap::new()];
        let add_edge = |multi: &mut Vec<HashMap<i32, Vec<usize>>>, u: usize, l: i32, v: usize| {
            multi[u].entry(l).or_default().push(v);
            multi[v].entry(-l).or_default().push(u);
        };
        for g in gens {
            let mut cur = 0usize;
            let letters = g.letters();
            for (k, &l) in letters.iter().enumerate() {
                let next = if k + 1 == letters.len() {
                    0
                } else {
                    multi.push(HashMap::new());
                    multi.len() - 1
                };
                add_edge(&mut multi, cur, l, next);
                cur = next;
            }
        }
        Ok(Self::fold(rank, 0, multi))
    }

    /// Fold a multigraph into a core graph (union-find vertex merging).
    fn fold(rank: usize, base: usize, multi: Vec<HashMap<i32, Vec<usize>>>) -> Self {
        let n = multi.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        // Edge list survives merges; refold until no vertex has two
        // same-label out-edges with distinct endpoints.
        let mut edges: Vec<(usize, i32, usize)> = Vec::new();
        for (u, m) in multi.iter().enumerate() {
            for (&l, vs) in m {
                if l > 0 {
                    for &v in vs {
                        edges.push((u, l, v));
                    }
                }
            }
        }
        loop {
            let mut out: HashMap<(usize, i32), usize> = HashMap::new();
            let mut merged = false;
            for &(u, l, v) in &edges {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                for (from, lab, to) in [(ru, l, rv), (rv, -l, ru)] {
                    match out.get(&(from, lab)) {
                        Some(&w) if find(&mut parent, w) != find(&mut parent, to) => {
                            let (a, b) = (find(&mut parent, w), find(&mut parent, to));
                            parent[a] = b;
                            merged = true;
                        }
                        _ => {
                            out.insert((from, lab), to);
                        }
                    }
                }
                if merged {
                    break;
                }
            }
            if !merged {
                break;
            }
        }
        // Rebuild deterministic transition maps on root vertices.
        let mut relabel: HashMap<usize, usize> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let rb = find(&mut parent, base);
        relabel.insert(rb, 0);
        order.push(rb);
        for x in 0..n {
            let r = find(&mut parent, x);
            if !relabel.contains_key(&r) {
                relabel.insert(r, order.len());
                order.push(r);
            }
        }
        let mut succ: Vec<HashMap<i32, usize>> = vec![HashMap::new(); order.len()];
        for &(u, l, v) in &edges {
            let ru = relabel[&find(&mut parent, u)];
            let rv = relabel[&find(&mut parent, v)];
            succ[ru].insert(l, rv);
            succ[rv].insert(-l, ru);
        }
        let mut g = CoreGraph { rank, base: 0, succ };
        g.prune();
        g.renumber();
        g
    }

    /// Remove degree-1 vertices other than the base (core condition).
    fn prune(&mut self) {
        loop {
            let mut removed = false;
            for v in 0..self.succ.len() {
                if v == self.base {
                    continue;
                }
                if self.succ[v].len() == 1 {
                    let (&l, &w) = self.succ[v].iter().next().unwrap();
                    self.succ[w].remove(&-l);
                    self.succ[v].clear();
                    // mark dead by leaving it empty; skipped by renumber
                    removed = true;
                }
                let _ = v;
            }
            if !removed {
                break;
            }
        }
    }

    /// Drop unreachable/dead vertices and renumber in BFS order from base.
    fn renumber(&mut self) {
        let mut map: HashMap<usize, usize> = HashMap::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        map.insert(self.base, 0);
        order.push(self.base);
        queue.push_back(self.base);
        while let Some(v) = queue.pop_front() {
            let mut labels: Vec<i32> = self.succ[v].keys().copied().collect();
            labels.sort_by_key(|l| (l.abs(), *l < 0));
            for l in labels {
                let w = self.succ[v][&l];
                if !map.contains_key(&w) {
                    map.insert(w, order.len());
                    order.push(w);
                    queue.push_back(w);
                }
            }
        }
        let mut succ = vec![HashMap::new(); order.len()];
        for (new_v, &old_v) in order.iter().enumerate() {
            for (&l, &w) in &self.succ[old_v] {
                succ[new_v].insert(l, map[&w]);
            }
        }
        self.base = 0;
        self.succ = succ;
    }

    pub fn rank_ambient(&self) -> usize {
        self.rank
    }

    pub fn vertex_count(&self) -> usize {
        self.succ.len()
    }

    fn check_rank(&self, other: &CoreGraph) -> Result<(), StallingsError> {
        if self.rank != other.rank {
            return Err(StallingsError::RankMismatch(self.rank, other.rank));
        }
        Ok(())
    }

    /// Trace a word from a vertex; `None` if the path leaves the graph.
    fn trace_from(&self, start: usize, w: &Word) -> Option<usize> {
        let mut cur = start;
        for &l in w.letters() {
            cur = *self.succ[cur].get(&l)?;
        }
        Some(cur)
    }

    /// Membership: the word's path exists and closes up at the base.
    pub fn contains(&self, w: &Word) -> Result<bool, StallingsError> {
        if w.rank() != self.rank {
            return Err(StallingsError::RankMismatch(self.rank, w.rank()));
        }
        Ok(self.trace_from(self.base, w) == Some(self.base))
    }

    /// Product automaton: the base component of the pairwise-synchronized
    /// graph recognizes exactly the intersection (Howson's algorithm).
    pub fn intersect(&self, other: &CoreGraph) -> Result<CoreGraph, StallingsError> {
        self.check_rank(other)?;
        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut multi: Vec<HashMap<i32, Vec<usize>>> = vec![HashMap::new()];
        index.insert((self.base, other.base), 0);
        let mut queue = VecDeque::new();
        queue.push_back((self.base, other.base));
        while let Some((u1, u2)) = queue.pop_front() {
            let from = index[&(u1, u2)];
            for l in 1..=self.rank as i32 {
                for sign in [l, -l] {
                    if let (Some(&v1), Some(&v2)) =
                        (self.succ[u1].get(&sign), other.succ[u2].get(&sign))
                    {
                        let to = *index.entry((v1, v2)).or_insert_with(|| {
                            multi.push(HashMap::new());
                            queue.push_back((v1, v2));
                            multi.len() - 1
                        });
                        if sign > 0 {
                            multi[from].entry(sign).or_default().push(to);
                        } else {
                            multi[to].entry(-sign).or_default().push(from);
                        }
                    }
                }
            }
        }
        // De-duplicate parallel copies of the same edge before folding.
        for m in &mut multi {
            for vs in m.values_mut() {
                vs.sort_unstable();
                vs.dedup();
            }
        }
        Ok(Self::fold(self.rank, 0, multi))
    }

    /// `g . subgroup . g^{-1}`, by conjugating a basis and refolding.
    pub fn conjugate_subgroup(&self, g: &Word) -> Result<CoreGraph, StallingsError> {
        if g.rank() != self.rank {
            return Err(StallingsError::RankMismatch(self.rank, g.rank()));
        }
        let gens: Result<Vec<Word>, WordError> =
            self.basis().iter().map(|b| b.conjugate(g)).collect();
        CoreGraph::from_generators(self.rank, &gens?)
    }

    /// Finite index iff the automaton is complete; then the index is the
    /// vertex count.
    pub fn index(&self) -> Option<usize> {
        let complete = self
            .succ
            .iter()
            .all(|m| m.len() == 2 * self.rank);
        complete.then(|| self.succ.len())
    }

    /// Free rank = E - V + 1 (Euler characteristic of the core graph).
    pub fn free_rank(&self) -> usize {
        let e: usize = self.succ.iter().map(|m| m.iter().filter(|(l, _)| **l > 0).count()).sum();
        e + 1 - self.succ.len()
    }

    /// Shortest word from the base to each vertex along a BFS spanning tree.
    fn tree_paths(&self) -> Vec<Word> {
        let mut paths: Vec<Option<Word>> = vec![None; self.succ.len()];
        paths[self.base] = Some(Word::identity(self.rank));
        let mut queue = VecDeque::new();
        queue.push_back(self.base);
        while let Some(v) = queue.pop_front() {
            let mut labels: Vec<i32> = self.succ[v].keys().copied().collect();
            labels.sort_by_key(|l| (l.abs(), *l < 0));
            for l in labels {
                let w = self.succ[v][&l];
                if paths[w].is_none() {
                    let ext = Word::reduce(
                        self.rank,
                        &[paths[v].as_ref().unwrap().letters(), &[l]].concat(),
                    )
                    .unwrap();
                    paths[w] = Some(ext);
                    queue.push_back(w);
                }
            }
        }
        paths.into_iter().map(|p| p.expect("connected")).collect()
    }

    /// A free basis: one word per non-tree edge, via the spanning tree.
    pub fn basis(&self) -> Vec<Word> {
        let paths = self.tree_paths();
        let mut in_tree: Vec<(usize, i32)> = Vec::new();
        // Recompute which edges the BFS tree used.
        let mut seen = vec![false; self.succ.len()];
        seen[self.base] = true;
        let mut queue = VecDeque::new();
        queue.push_back(self.base);
        while let Some(v) = queue.pop_front() {
            let mut labels: Vec<i32> = self.succ[v].keys().copied().collect();
            labels.sort_by_key(|l| (l.abs(), *l < 0));
            for l in labels {
                let w = self.succ[v][&l];
                if !seen[w] {
                    seen[w] = true;
                    in_tree.push((v, l));
                    queue.push_back(w);
                }
            }
        }
        let tree_set: std::collections::HashSet<(usize, i32)> = in_tree
            .iter()
            .flat_map(|&(v, l)| [(v, l), (self.succ[v][&l], -l)])
            .collect();
        let mut out = Vec::new();
        for v in 0..self.succ.len() {
            for (&l, &w) in &self.succ[v] {
                if l < 0 || tree_set.contains(&(v, l)) {
                    continue;
                }
                let word = paths[v]
                    .multiply(&Word::reduce(self.rank, &[l]).unwrap())
                    .unwrap()
                    .multiply(&paths[w].invert())
                    .unwrap();
                out.push(word);
            }
        }
        out.sort_by(|a, b| (a.len(), a.letters()).cmp(&(b.len(), b.letters())));
        out
    }

    /// Right-coset permutation action for a finite-index subgroup.
    pub fn coset_action(&self) -> Result<CosetAction, StallingsError> {
        let n = self.index().ok_or(StallingsError::InfiniteIndex)?;
        let reps = self.tree_paths();
        let mut perms = Vec::with_capacity(self.rank);
        for i in 1..=self.rank as i32 {
            // Coset H·rep[v] maps under right mult by generator i to the
            // vertex reached by reading i from v.
            let p: Vec<usize> = (0..n).map(|v| self.succ[v][&i]).collect();
            perms.push(p);
        }
        Ok(CosetAction { index: n, perms, reps })
    }

    /// Subgroup equality via mutual basis membership.
    pub fn equal(&self, other: &CoreGraph) -> Result<bool, StallingsError> {
        self.check_rank(other)?;
        for b in self.basis() {
            if !other.contains(&b)? {
                return Ok(false);
            }
        }
        for b in other.basis() {
            if !self.contains(&b)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Normality check: conjugates by all generators coincide with self.
    pub fn is_normal(&self) -> Result<bool, StallingsError> {
        for i in 1..=self.rank {
            let g = Word::generator(self.rank, i)?;
            if !self.equal(&self.conjugate_subgroup(&g)?)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn is_trivial(&self) -> bool {
        self.free_rank() == 0
    }
}

/// Transitive right-coset action of `F_r` with coset representatives.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CosetAction {
    /// Number of cosets.
    pub index: usize,
    /// `perms[i-1][v]` = image of coset `v` under the `i`-th generator.
    pub perms: Vec<Vec<usize>>,
    /// Representative word per coset; `reps[0]` is the identity.
    pub reps: Vec<Word>,
}

impl CosetAction {
    /// Image of coset `v` under a word (applied letter by letter).
    pub fn act(&self, v: usize, w: &Word) -> usize {
        let mut cur = v;
        for &l in w.letters() {
            let p = &self.perms[(l.unsigned_abs() - 1) as usize];
            cur = if l > 0 {
                p[cur]
            } else {
                p.iter().position(|&x| x == cur).unwrap()
            };
        }
        cur
    }
}

/// Stabilizer of a point in a permutation action of `F_rank`, as a core
/// graph: the Schreier coset graph based at that point, which is complete
/// and folded by construction.
pub fn stabilizer_graph(rank: usize, perms: &[Vec<usize>], point: usize) -> CoreGraph {
    let n = perms[0].len();
    let mut succ: Vec<HashMap<i32, usize>> = vec![HashMap::new(); n];
    for (i, p) in perms.iter().enumerate() {
        let l = (i + 1) as i32;
        for v in 0..n {
            succ[v].insert(l, p[v]);
            succ[p[v]].insert(-l, v);
        }
    }
    let mut g = CoreGraph { rank, base: point, succ };
    g.renumber();
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::words::enumerate_reduced;

    fn w(s: &str) -> Word {
        Word::parse(2, s).unwrap()
    }

    fn sub(gens: &[&str]) -> CoreGraph {
        let ws: Vec<Word> = gens.iter().map(|s| w(s)).collect();
        CoreGraph::from_generators(2, &ws).unwrap()
    }

    #[test]
    fn from_generators_shapes() {
        let loop_a = sub(&["a"]);
        assert_eq!(loop_a.vertex_count(), 1);
        assert_eq!(loop_a.free_rank(), 1);
        let trivial = sub(&[]);
        assert_eq!(trivial.vertex_count(), 1);
        assert_eq!(trivial.free_rank(), 0);
        // <a^2, b, a b a^-1> folds to the complete 2-vertex graph.
        let h = sub(&["aa", "b", "abA"]);
        assert_eq!(h.index(), Some(2));
    }

    #[test]
    fn membership() {
        let a = sub(&["a"]);
        assert!(a.contains(&w("aaaaa")).unwrap());
        assert!(!a.contains(&w("b")).unwrap());
        assert!(a.contains(&w("e")).unwrap());
        let h = sub(&["aa", "b"]);
        // Brute-force oracle: products of generators up to length 6 never
        // produce a b a^-1.
        let target = w("abA");
        let gens = [w("aa"), w("AA"), w("b"), w("B")];
        let mut frontier = vec![Word::identity(2)];
        for _ in 0..6 {
            let mut next = Vec::new();
            for x in &frontier {
                for g in &gens {
                    next.push(x.multiply(g).unwrap());
                }
            }
            assert!(!next.contains(&target));
            frontier = next;
        }
        assert!(!h.contains(&target).unwrap());
    }

    #[test]
    fn intersection_howson() {
        let i = sub(&["a"]).intersect(&sub(&["b"])).unwrap();
        assert!(i.is_trivial());
        let g = sub(&["aa", "b"]);
        assert!(g.intersect(&g).unwrap().equal(&g).unwrap());
        let h = sub(&["aaa", "b"]);
        let gh = g.intersect(&h).unwrap();
        assert!(gh.contains(&w("aaaaaa")).unwrap());
        assert!(gh.contains(&w("b")).unwrap());
        assert!(!gh.contains(&w("aa")).unwrap());
        // Exponent-sum oracle cross-check: every b-free word of <a^3,b> has
        // a-exponent divisible by 3, so a^2 cannot lie in the intersection.
        for x in enumerate_reduced(2, 10) {
            let both = g.contains(&x).unwrap() && h.contains(&x).unwrap();
            assert_eq!(gh.contains(&x).unwrap(), both, "word {x}");
        }
    }

    #[test]
    fn conjugation() {
        let b = sub(&["b"]);
        let c = b.conjugate_subgroup(&w("a")).unwrap();
        assert!(c.contains(&w("abA")).unwrap());
        assert!(!c.contains(&w("b")).unwrap());
        assert!(b.conjugate_subgroup(&w("e")).unwrap().equal(&b).unwrap());
        let back = c.conjugate_subgroup(&w("A")).unwrap();
        assert!(back.equal(&b).unwrap());
        // Index-2 normal subgroup is conjugation-invariant.
        let n = sub(&["aa", "b", "abA"]);
        assert!(n.conjugate_subgroup(&w("a")).unwrap().equal(&n).unwrap());
        assert!(n.is_normal().unwrap());
    }

    #[test]
    fn index_rank_basis() {
        assert_eq!(CoreGraph::whole_group(2).index(), Some(1));
        assert_eq!(sub(&["a"]).index(), None);
        let n = sub(&["aa", "b", "abA"]);
        assert_eq!(n.index(), Some(2));
        assert_eq!(n.free_rank(), 3);
        assert_eq!(sub(&["a", "bab'"]).free_rank(), 2);
        let basis = n.basis();
        assert_eq!(basis.len(), 3);
        let rebuilt = CoreGraph::from_generators(2, &basis).unwrap();
        assert!(rebuilt.equal(&n).unwrap());
    }

    #[test]
    fn coset_actions() {
        let act = CoreGraph::whole_group(2).coset_action().unwrap();
        assert_eq!(act.index, 1);
        let n = sub(&["aa", "b", "abA"]);
        let act = n.coset_action().unwrap();
        assert_eq!(act.index, 2);
        assert_eq!(act.perms[0], vec![1, 0]); // a swaps
        assert_eq!(act.perms[1], vec![0, 1]); // b fixes
        let n3 = sub(&["aaa", "b", "abA", "aabAA"]);
        let act = n3.coset_action().unwrap();
        assert_eq!(act.index, 3);
        assert_eq!(act.perms[0], vec![1, 2, 0]); // a 3-cycles
        assert_eq!(act.perms[1], vec![0, 1, 2]); // b fixes
        assert!(sub(&["a"]).coset_action().is_err());
    }

    #[test]
    fn equality() {
        assert!(sub(&["a"]).equal(&sub(&["A"])).unwrap());
        assert!(!sub(&["a"]).equal(&sub(&["aa"])).unwrap());
    }

    #[test]
    fn stabilizer_graphs() {
        // a -> swap, b -> id on 2 points: stabilizer of 0 is <a^2,b,aba^-1>.
        let g = stabilizer_graph(2, &[vec![1, 0], vec![0, 1]], 0);
        assert!(g.equal(&sub(&["aa", "b", "abA"])).unwrap());
    }

    #[test]
    fn nielsen_schreier_small() {
        let n3 = sub(&["aaa", "b", "abA", "aabAA"]);
        assert_eq!(n3.index(), Some(3));
        assert_eq!(n3.free_rank(), 3 * (2 - 1) + 1);
    }
}
