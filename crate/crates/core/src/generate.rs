//! Generators for the graph families used in the experiments and for the
//! closed-form test families (stowers, mandarins, flowers, dumbbell,
//! lollipop).

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

const MAX_RETRIES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Complete { n: usize },
    /// Circular ladder with `n` rungs.
    Ladder { n: usize },
    /// Cayley graph of Z^2 / nZ^2.
    Lattice { n: usize },
    Regular { d: usize, n: usize, seed: u64 },
    ErdosRenyi { n: usize, p: f64, seed: u64 },
    Stower { loops: usize, tails: usize },
    Mandarin { m: usize },
    Dumbbell,
    Lollipop,
    Flower { m: usize },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Family::Complete { n } => write!(f, "complete {n}"),
            Family::Ladder { n } => write!(f, "ladder {n}"),
            Family::Lattice { n } => write!(f, "lattice {n}"),
            Family::Regular { d, n, seed } => write!(f, "regular {d} {n} seed={seed}"),
            Family::ErdosRenyi { n, p, seed } => write!(f, "erdos-renyi {n} {p} seed={seed}"),
            Family::Stower { loops, tails } => write!(f, "stower {loops} {tails}"),
            Family::Mandarin { m } => write!(f, "mandarin {m}"),
            Family::Dumbbell => write!(f, "dumbbell"),
            Family::Lollipop => write!(f, "lollipop"),
            Family::Flower { m } => write!(f, "flower {m}"),
        }
    }
}

impl Family {
    /// Short family name used in tables.
    pub fn name(&self) -> &'static str {
        match self {
            Family::Complete { .. } => "complete",
            Family::Ladder { .. } => "ladder",
            Family::Lattice { .. } => "lattice",
            Family::Regular { .. } => "regular",
            Family::ErdosRenyi { .. } => "erdos-renyi",
            Family::Stower { .. } => "stower",
            Family::Mandarin { .. } => "mandarin",
            Family::Dumbbell => "dumbbell",
            Family::Lollipop => "lollipop",
            Family::Flower { .. } => "flower",
        }
    }

    /// Parses `name params...`. Random families take their seed from
    /// `seed`, e.g. `["regular", "5", "12"]`.
    pub fn parse(words: &[&str], seed: u64) -> Result<Family> {
        let bad = || Error::InvalidParameters(format!("cannot parse family from {words:?}"));
        let int = |i: usize| -> Result<usize> {
            words.get(i).and_then(|w| w.parse().ok()).ok_or_else(bad)
        };
        let arity = |k: usize| -> Result<()> {
            if words.len() == k + 1 {
                Ok(())
            } else {
                Err(bad())
            }
        };
        let name = *words.first().ok_or_else(bad)?;
        let fam = match name {
            "complete" => {
                arity(1)?;
                Family::Complete { n: int(1)? }
            }
            "ladder" => {
                arity(1)?;
                Family::Ladder { n: int(1)? }
            }
            "lattice" => {
                arity(1)?;
                Family::Lattice { n: int(1)? }
            }
            "regular" => {
                arity(2)?;
                Family::Regular { d: int(1)?, n: int(2)?, seed }
            }
            "erdos-renyi" | "er" => {
                arity(2)?;
                let p: f64 = words[2].parse().map_err(|_| bad())?;
                Family::ErdosRenyi { n: int(1)?, p, seed }
            }
            "stower" => {
                arity(2)?;
                Family::Stower { loops: int(1)?, tails: int(2)? }
            }
            "mandarin" => {
                arity(1)?;
                Family::Mandarin { m: int(1)? }
            }
            "dumbbell" => {
                arity(0)?;
                Family::Dumbbell
            }
            "lollipop" => {
                arity(0)?;
                Family::Lollipop
            }
            "flower" => {
                arity(1)?;
                Family::Flower { m: int(1)? }
            }
            _ => return Err(bad()),
        };
        Ok(fam)
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameters(msg.into())
}

/// Builds the graph of a family. Random families are deterministic in
/// their seed.
pub fn generate(family: &Family) -> Result<Graph> {
    match *family {
        Family::Complete { n } => {
            if n < 4 {
                return Err(invalid("complete graph needs n >= 4 (the triangle has degree-2 vertices)"));
            }
            let edges = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            Graph::new(n, edges)
        }
        Family::Ladder { n } => {
            if n < 3 {
                return Err(invalid("ladder needs n >= 3"));
            }
            let mut edges = Vec::with_capacity(3 * n);
            for i in 0..n {
                edges.push((i, (i + 1) % n));
            }
            for i in 0..n {
                edges.push((n + i, n + (i + 1) % n));
            }
            for i in 0..n {
                edges.push((i, n + i));
            }
            Graph::new(2 * n, edges)
        }
        Family::Lattice { n } => {
            if n < 3 {
                return Err(invalid("lattice needs n >= 3"));
            }
            let idx = |r: usize, c: usize| (r % n) * n + (c % n);
            let mut edges = Vec::with_capacity(2 * n * n);
            for r in 0..n {
                for c in 0..n {
                    edges.push((idx(r, c), idx(r, c + 1)));
                }
            }
            for r in 0..n {
                for c in 0..n {
                    edges.push((idx(r, c), idx(r + 1, c)));
                }
            }
            Graph::new(n * n, edges)
        }
        Family::Regular { d, n, seed } => random_regular(d, n, seed),
        Family::ErdosRenyi { n, p, seed } => erdos_renyi(n, p, seed),
        Family::Stower { loops, tails } => {
            let mut edges = vec![(0, 0); loops];
            edges.extend((1..=tails).map(|i| (0, i)));
            Graph::new(tails + 1, edges)
        }
        Family::Mandarin { m } => Graph::new(2, vec![(0, 1); m]),
        Family::Dumbbell => Graph::new(2, vec![(0, 0), (0, 1), (1, 1)]),
        Family::Lollipop => Graph::new(2, vec![(0, 0), (0, 1)]),
        Family::Flower { m } => Graph::new(1, vec![(0, 0); m]),
    }
}

/// Configuration (pairing) model, rejecting loops, parallel edges and
/// disconnected outcomes.
fn random_regular(d: usize, n: usize, seed: u64) -> Result<Graph> {
    if d == 2 || d == 0 || d >= n || (d * n) % 2 != 0 {
        return Err(invalid(format!("no simple {d}-regular graph on {n} vertices in scope")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    for _ in 0..MAX_RETRIES {
        points.shuffle(&mut rng);
        let mut edges: Vec<(usize, usize)> = points
            .chunks_exact(2)
            .map(|p| (p[0].min(p[1]), p[0].max(p[1])))
            .collect();
        if edges.iter().any(|&(u, v)| u == v) {
            continue;
        }
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            continue;
        }
        if let Ok(g) = Graph::new(n, edges) {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailed(MAX_RETRIES))
}

/// G(n, p), resampled until connected without degree-two vertices.
fn erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if n < 2 || !(p > 0.0 && p <= 1.0) {
        return Err(invalid("erdos-renyi needs n >= 2 and p in (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RETRIES {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        if let Ok(g) = Graph::new(n, edges) {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailed(MAX_RETRIES))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form_betti(f: &Family) -> Option<usize> {
        match *f {
            Family::Complete { n } => Some((n - 1) * (n - 2) / 2),
            Family::Ladder { n } => Some(n + 1),
            Family::Lattice { n } => Some(n * n + 1),
            Family::Mandarin { m } => Some(m - 1),
            Family::Stower { loops, .. } => Some(loops),
            Family::Flower { m } => Some(m),
            Family::Dumbbell => Some(2),
            Family::Lollipop => Some(1),
            _ => None,
        }
    }

    #[test]
    fn families_validate_and_match_closed_form_betti() {
        let fams = [
            Family::Complete { n: 4 },
            Family::Complete { n: 5 },
            Family::Complete { n: 9 },
            Family::Ladder { n: 3 },
            Family::Ladder { n: 6 },
            Family::Lattice { n: 3 },
            Family::Lattice { n: 5 },
            Family::Mandarin { m: 3 },
            Family::Mandarin { m: 7 },
            Family::Stower { loops: 3, tails: 4 },
            Family::Stower { loops: 0, tails: 3 },
            Family::Flower { m: 4 },
            Family::Dumbbell,
            Family::Lollipop,
            Family::Regular { d: 5, n: 12, seed: 1 },
            Family::Regular { d: 3, n: 10, seed: 2 },
            Family::ErdosRenyi { n: 9, p: 0.75, seed: 3 },
        ];
        for f in &fams {
            let g = generate(f).unwrap();
            assert_eq!(g.validate(), Ok(()), "{f}");
            assert_eq!(g.betti(), g.edge_count() + 1 - g.vertex_count());
            if let Some(b) = closed_form_betti(f) {
                assert_eq!(g.betti(), b, "{f}");
            }
        }
    }

    #[test]
    fn named_examples() {
        let k5 = generate(&Family::Complete { n: 5 }).unwrap();
        assert_eq!((k5.vertex_count(), k5.edge_count(), k5.betti()), (5, 10, 6));
        let m3 = generate(&Family::Mandarin { m: 3 }).unwrap();
        assert_eq!((m3.vertex_count(), m3.edge_count(), m3.betti()), (2, 3, 2));
        let s = generate(&Family::Stower { loops: 3, tails: 4 }).unwrap();
        assert_eq!((s.vertex_count(), s.edge_count(), s.betti()), (5, 7, 3));
        let m7 = generate(&Family::Mandarin { m: 7 }).unwrap();
        assert_eq!(m7.betti(), 6);
    }

    #[test]
    fn regular_degrees_and_lattice_degrees() {
        let g = generate(&Family::Regular { d: 5, n: 14, seed: 9 }).unwrap();
        assert!(g.degrees().iter().all(|&d| d == 5));
        let l = generate(&Family::Lattice { n: 4 }).unwrap();
        assert!(l.degrees().iter().all(|&d| d == 4));
        let lad = generate(&Family::Ladder { n: 6 }).unwrap();
        assert!(lad.degrees().iter().all(|&d| d == 3));
    }

    #[test]
    fn random_families_are_deterministic() {
        for f in [
            Family::Regular { d: 5, n: 16, seed: 42 },
            Family::ErdosRenyi { n: 11, p: 0.75, seed: 42 },
        ] {
            assert_eq!(generate(&f).unwrap().to_json(), generate(&f).unwrap().to_json());
        }
        let a = generate(&Family::Regular { d: 5, n: 16, seed: 1 }).unwrap();
        let b = generate(&Family::Regular { d: 5, n: 16, seed: 2 }).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn invalid_parameters() {
        assert!(generate(&Family::Complete { n: 2 }).is_err());
        assert!(generate(&Family::Regular { d: 2, n: 10, seed: 0 }).is_err());
        assert!(generate(&Family::Regular { d: 5, n: 11, seed: 0 }).is_err());
        assert!(generate(&Family::ErdosRenyi { n: 5, p: 0.0, seed: 0 }).is_err());
        assert!(generate(&Family::Mandarin { m: 2 }).is_err());
        assert!(generate(&Family::Flower { m: 1 }).is_err());
        assert!(generate(&Family::Stower { loops: 0, tails: 2 }).is_err());
    }

    #[test]
    fn parse_families() {
        assert_eq!(Family::parse(&["complete", "5"], 0).unwrap(), Family::Complete { n: 5 });
        assert_eq!(
            Family::parse(&["regular", "5", "12"], 7).unwrap(),
            Family::Regular { d: 5, n: 12, seed: 7 }
        );
        assert_eq!(Family::parse(&["dumbbell"], 0).unwrap(), Family::Dumbbell);
        assert!(Family::parse(&["complete"], 0).is_err());
        assert!(Family::parse(&["dumbbell", "3"], 0).is_err());
        assert!(Family::parse(&["octopus", "3"], 0).is_err());
    }
}
