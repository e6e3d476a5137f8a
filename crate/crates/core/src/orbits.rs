//! Exact edge orbits under the full automorphism group of a multigraph.
//!
//! For each pair of edges not yet known to share an orbit we search for an
//! automorphism carrying one onto the other. The search individualizes the
//! prescribed endpoints, refines vertex colours on two copies of the graph
//! jointly, and then backtracks over colour-compatible vertex bijections
//! checked against the edge-multiplicity matrix. Every automorphism found is
//! applied to the whole edge list so that orbits merge quickly.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const DEFAULT_VERTEX_LIMIT: usize = 64;
const NODE_BUDGET: usize = 20_000_000;

/// Partition of the edge indices into automorphism orbits. Each orbit is
/// sorted and orbits are ordered by their smallest edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeOrbitPartition {
    pub orbits: Vec<Vec<usize>>,
}

impl EdgeOrbitPartition {
    /// Every edge in its own orbit.
    pub fn trivial(edge_count: usize) -> Self {
        EdgeOrbitPartition { orbits: (0..edge_count).map(|e| vec![e]).collect() }
    }

    pub fn representatives(&self) -> Vec<usize> {
        self.orbits.iter().map(|o| o[0]).collect()
    }

    /// Orbit index of every edge.
    pub fn orbit_of(&self, edge_count: usize) -> Vec<usize> {
        let mut map = vec![usize::MAX; edge_count];
        for (i, o) in self.orbits.iter().enumerate() {
            for &e in o {
                map[e] = i;
            }
        }
        map
    }

    pub fn is_partition_of(&self, edge_count: usize) -> bool {
        let mut seen = vec![false; edge_count];
        for &e in self.orbits.iter().flatten() {
            if e >= edge_count || seen[e] {
                return false;
            }
            seen[e] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Edge orbits with the default vertex guard.
pub fn edge_orbits(graph: &Graph) -> Result<EdgeOrbitPartition> {
    edge_orbits_with_limit(graph, DEFAULT_VERTEX_LIMIT)
}

pub fn edge_orbits_with_limit(graph: &Graph, vertex_limit: usize) -> Result<EdgeOrbitPartition> {
    let n = graph.vertex_count();
    if n > vertex_limit {
        return Err(Error::SizeGuard { vertices: n, limit: vertex_limit });
    }
    let search = AutomorphismSearch::new(graph);
    let ecount = graph.edge_count();
    let mut by_pair: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (e, &(u, v)) in graph.edges().iter().enumerate() {
        by_pair.entry((u.min(v), u.max(v))).or_default().push(e);
    }
    let mut uf = UnionFind((0..ecount).collect());
    for parallel in by_pair.values() {
        for &e in &parallel[1..] {
            uf.union(parallel[0], e);
        }
    }
    for e in 0..ecount {
        for f in e + 1..ecount {
            if uf.find(e) == uf.find(f) {
                continue;
            }
            let (u, v) = graph.edge(e);
            let (x, y) = graph.edge(f);
            let perm = search
                .find(&[(u, x), (v, y)])?
                .or(if u != v { search.find(&[(u, y), (v, x)])? } else { None });
            if let Some(perm) = perm {
                for (g, &(a, b)) in graph.edges().iter().enumerate() {
                    let (pa, pb) = (perm[a], perm[b]);
                    let image = &by_pair[&(pa.min(pb), pa.max(pb))];
                    uf.union(g, image[0]);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot: HashMap<usize, usize> = HashMap::new();
    for e in 0..ecount {
        let r = uf.find(e);
        let slot = *root_slot.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[slot].push(e);
    }
    Ok(EdgeOrbitPartition { orbits: groups })
}

/// Checks that a vertex permutation preserves the edge multiset.
pub fn is_automorphism(graph: &Graph, perm: &[usize]) -> bool {
    let m = graph.multiplicity_matrix();
    let n = graph.vertex_count();
    perm.len() == n && (0..n).all(|a| (0..n).all(|b| m[a][b] == m[perm[a]][perm[b]]))
}

struct AutomorphismSearch {
    n: usize,
    mult: Vec<Vec<usize>>,
    neighbours: Vec<Vec<usize>>,
}

impl AutomorphismSearch {
    fn new(graph: &Graph) -> Self {
        let n = graph.vertex_count();
        let mult = graph.multiplicity_matrix();
        let neighbours =
            (0..n).map(|v| (0..n).filter(|&w| w != v && mult[v][w] > 0).collect()).collect();
        AutomorphismSearch { n, mult, neighbours }
    }

    /// Joint colour refinement on two copies of the graph (indices `0..n`
    /// and `n..2n`), starting from the given colours.
    fn refine(&self, mut colour: Vec<usize>) -> Vec<usize> {
        let n = self.n;
        let mut classes = count_classes(&colour);
        loop {
            let sigs: Vec<(usize, usize, Vec<(usize, usize)>)> = (0..2 * n)
                .map(|x| {
                    let (v, off) = if x < n { (x, 0) } else { (x - n, n) };
                    let mut nb: Vec<(usize, usize)> =
                        self.neighbours[v].iter().map(|&w| (colour[w + off], self.mult[v][w])).collect();
                    nb.sort_unstable();
                    (colour[x], self.mult[v][v], nb)
                })
                .collect();
            let mut sorted: Vec<_> = sigs.clone();
            sorted.sort();
            sorted.dedup();
            colour = sigs.iter().map(|s| sorted.binary_search(s).unwrap()).collect();
            let now = sorted.len();
            if now == classes {
                return colour;
            }
            classes = now;
        }
    }

    /// Finds an automorphism extending the prescribed vertex assignments.
    fn find(&self, fixed: &[(usize, usize)]) -> Result<Option<Vec<usize>>> {
        let n = self.n;
        let mut perm = vec![usize::MAX; n];
        let mut used = vec![false; n];
        let mut colour = vec![0; 2 * n];
        for (k, &(a, b)) in fixed.iter().enumerate() {
            if perm[a] == b {
                continue;
            }
            if perm[a] != usize::MAX || used[b] {
                return Ok(None);
            }
            perm[a] = b;
            used[b] = true;
            colour[a] = k + 1;
            colour[n + b] = k + 1;
        }
        let colour = self.refine(colour);
        let mut left: Vec<usize> = colour[..n].to_vec();
        let mut right: Vec<usize> = colour[n..].to_vec();
        left.sort_unstable();
        right.sort_unstable();
        if left != right {
            return Ok(None);
        }
        // BFS order from pinned vertices keeps the adjacency checks tight
        let mut order: Vec<usize> = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        let mut frontier: Vec<usize> = fixed.iter().map(|&(a, _)| a).collect();
        frontier.dedup();
        for &a in &frontier {
            placed[a] = true;
        }
        let mut head = 0;
        let mut queue = frontier;
        loop {
            while head < queue.len() {
                let v = queue[head];
                head += 1;
                for &w in &self.neighbours[v] {
                    if !placed[w] {
                        placed[w] = true;
                        queue.push(w);
                    }
                }
            }
            match (0..n).find(|&v| !placed[v]) {
                Some(v) => {
                    placed[v] = true;
                    queue.push(v);
                }
                None => break,
            }
        }
        for v in queue {
            if perm[v] == usize::MAX {
                order.push(v);
            }
        }
        let mut budget = NODE_BUDGET;
        let ok = self.extend(&order, 0, &colour, &mut perm, &mut used, &mut budget)?;
        Ok(if ok { Some(perm) } else { None })
    }

    fn consistent(&self, v: usize, image: usize, perm: &[usize]) -> bool {
        (0..self.n).all(|w| perm[w] == usize::MAX || self.mult[v][w] == self.mult[image][perm[w]])
    }

    fn extend(
        &self,
        order: &[usize],
        depth: usize,
        colour: &[usize],
        perm: &mut [usize],
        used: &mut [bool],
        budget: &mut usize,
    ) -> Result<bool> {
        if depth == 0 {
            // pinned vertices must be mutually consistent
            for v in 0..self.n {
                if perm[v] != usize::MAX && !self.consistent(v, perm[v], perm) {
                    return Ok(false);
                }
            }
        }
        if depth == order.len() {
            return Ok(true);
        }
        let v = order[depth];
        for image in 0..self.n {
            if used[image] || colour[v] != colour[self.n + image] {
                continue;
            }
            if *budget == 0 {
                return Err(Error::Numerical("automorphism search exceeded its node budget".into()));
            }
            *budget -= 1;
            if !self.consistent(v, image, perm) {
                continue;
            }
            perm[v] = image;
            used[image] = true;
            if self.extend(order, depth + 1, colour, perm, used, budget)? {
                return Ok(true);
            }
            perm[v] = usize::MAX;
            used[image] = false;
        }
        Ok(false)
    }
}

fn count_classes(colour: &[usize]) -> usize {
    let mut c = colour.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, Family};

    /// Brute-force orbits by enumerating every vertex permutation.
    fn brute_force_orbits(g: &Graph) -> Vec<Vec<usize>> {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for i in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(i, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let e = g.edge_count();
        let mut uf = UnionFind((0..e).collect());
        let key = |a: usize, b: usize| (a.min(b), a.max(b));
        for p in permutations(g.vertex_count()) {
            if !is_automorphism(g, &p) {
                continue;
            }
            for i in 0..e {
                let (a, b) = g.edge(i);
                for j in 0..e {
                    let (c, d) = g.edge(j);
                    if key(p[a], p[b]) == key(c, d) {
                        uf.union(i, j);
                    }
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..e {
            let r = uf.find(i);
            groups.entry(r).or_default().push(i);
        }
        let mut v: Vec<Vec<usize>> = groups.into_values().collect();
        v.sort();
        v
    }

    #[test]
    fn complete_graph_single_orbit() {
        let g = generate(&Family::Complete { n: 5 }).unwrap();
        let o = edge_orbits(&g).unwrap();
        assert_eq!(o.orbits.len(), 1);
        assert_eq!(o.orbits[0].len(), 10);
    }

    #[test]
    fn stower_loops_and_tails() {
        let g = generate(&Family::Stower { loops: 3, tails: 4 }).unwrap();
        let o = edge_orbits(&g).unwrap();
        assert_eq!(o.orbits, vec![vec![0, 1, 2], vec![3, 4, 5, 6]]);
    }

    #[test]
    fn dumbbell_matches_brute_force() {
        let g = generate(&Family::Dumbbell).unwrap();
        let o = edge_orbits(&g).unwrap();
        assert_eq!(o.orbits, vec![vec![0, 2], vec![1]]);
        assert_eq!(o.orbits, brute_force_orbits(&g));
    }

    #[test]
    fn small_graphs_match_brute_force() {
        let graphs = vec![
            generate(&Family::Ladder { n: 3 }).unwrap(),
            generate(&Family::Ladder { n: 4 }).unwrap(),
            generate(&Family::Lattice { n: 3 }).unwrap(),
            generate(&Family::Mandarin { m: 4 }).unwrap(),
            generate(&Family::Lollipop).unwrap(),
            generate(&Family::ErdosRenyi { n: 7, p: 0.6, seed: 5 }).unwrap(),
            generate(&Family::Regular { d: 3, n: 8, seed: 4 }).unwrap(),
            // triangle with a pendant and a loop: little symmetry
            Graph::new(5, vec![(0, 1), (1, 2), (2, 0), (0, 3), (3, 3), (1, 4), (2, 4), (4, 4)]).unwrap(),
        ];
        for g in graphs {
            let o = edge_orbits(&g).unwrap();
            assert!(o.is_partition_of(g.edge_count()));
            let mut fast = o.orbits.clone();
            fast.sort();
            assert_eq!(fast, brute_force_orbits(&g), "{}", g.to_json());
        }
    }

    #[test]
    fn ladder_has_rail_and_rung_orbits() {
        let g = generate(&Family::Ladder { n: 6 }).unwrap();
        let o = edge_orbits(&g).unwrap();
        assert_eq!(o.orbits.len(), 2);
        assert_eq!(o.orbits[0], (0..12).collect::<Vec<_>>());
        assert_eq!(o.orbits[1], (12..18).collect::<Vec<_>>());
        let lat = generate(&Family::Lattice { n: 4 }).unwrap();
        assert_eq!(edge_orbits(&lat).unwrap().orbits.len(), 1);
    }

    #[test]
    fn size_guard() {
        let g = generate(&Family::Lattice { n: 9 }).unwrap();
        assert!(matches!(edge_orbits(&g), Err(Error::SizeGuard { vertices: 81, limit: 64 })));
        assert!(edge_orbits_with_limit(&g, 100).is_ok());
    }

    #[test]
    fn found_automorphisms_are_valid() {
        let g = generate(&Family::Complete { n: 6 }).unwrap();
        let s = AutomorphismSearch::new(&g);
        let p = s.find(&[(0, 3), (1, 5)]).unwrap().unwrap();
        assert!(is_automorphism(&g, &p));
        assert_eq!((p[0], p[1]), (3, 5));
    }
}
