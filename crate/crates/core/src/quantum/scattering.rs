use nalgebra::{Complex, DMatrix};

use crate::graph::Graph;

/// Real orthogonal vertex scattering matrix on bonds.
#[derive(Debug, Clone)]
pub struct ScatteringMatrix {
    s: DMatrix<f64>,
    edge_count: usize,
}

/// `S[j, i]` is `2/deg(v)` when bond `i` ends at `v` and bond `j` starts at
/// `v`, minus one when `j` is the reversal of `i`, and zero otherwise.
pub fn build_scattering(graph: &Graph) -> ScatteringMatrix {
    let e = graph.edge_count();
    let n = 2 * e;
    let deg = graph.degrees();
    let mut ending_at: Vec<Vec<usize>> = vec![Vec::new(); graph.vertex_count()];
    for b in 0..n {
        ending_at[graph.bond_terminus(b)].push(b);
    }
    let mut s = DMatrix::zeros(n, n);
    for j in 0..n {
        let v = graph.bond_origin(j);
        let t = 2.0 / deg[v] as f64;
        let back = graph.bond_reverse(j);
        for &i in &ending_at[v] {
            s[(j, i)] = if i == back { t - 1.0 } else { t };
        }
    }
    ScatteringMatrix { s, edge_count: e }
}

impl ScatteringMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn dim(&self) -> usize {
        2 * self.edge_count
    }

    /// Bond reversal permutation `J`.
    pub fn reversal(&self) -> DMatrix<f64> {
        let e = self.edge_count;
        DMatrix::from_fn(2 * e, 2 * e, |r, c| if (r + e) % (2 * e) == c { 1.0 } else { 0.0 })
    }

    /// `max |S^T S - I|`.
    pub fn orthogonality_residual(&self) -> f64 {
        let sts = self.s.transpose() * &self.s;
        let id = DMatrix::<f64>::identity(self.dim(), self.dim());
        (sts - id).amax()
    }

    /// `max |J S J - S^T|`.
    pub fn time_reversal_residual(&self) -> f64 {
        let j = self.reversal();
        (&j * &self.s * &j - self.s.transpose()).amax()
    }

    /// `U = exp(i kappa-hat) S`: row `j` scaled by `exp(i kappa_{j mod E})`.
    pub fn unitary_at(&self, kappa: &[f64]) -> DMatrix<Complex<f64>> {
        assert_eq!(kappa.len(), self.edge_count, "kappa must have one entry per edge");
        let e = self.edge_count;
        let rot: Vec<Complex<f64>> = (0..2 * e).map(|j| Complex::from_polar(1.0, kappa[j % e])).collect();
        DMatrix::from_fn(2 * e, 2 * e, |r, c| rot[r] * self.s[(r, c)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generate::{generate, Family};
    use nalgebra::ComplexField;

    fn star3() -> Graph {
        Graph::new(4, vec![(0, 1), (0, 2), (0, 3)]).unwrap()
    }

    #[test]
    fn star_reflection_and_transmission() {
        let s = build_scattering(&star3());
        let m = s.matrix();
        // bond 3 = 1->0 arrives at the centre, bond 0 = 0->1 leaves it
        assert!((m[(0, 3)] + 1.0 / 3.0).abs() < 1e-15);
        assert!((m[(1, 3)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m[(2, 3)] - 2.0 / 3.0).abs() < 1e-15);
        // leaf 1: bond 0 arrives, bond 3 leaves
        assert_eq!(m[(3, 0)], 1.0);
        assert_eq!(m[(4, 0)], 0.0);
    }

    #[test]
    fn orthogonal_and_time_reversal_on_families() {
        for f in [
            Family::Dumbbell,
            Family::Lollipop,
            Family::Mandarin { m: 5 },
            Family::Stower { loops: 3, tails: 4 },
            Family::Flower { m: 3 },
            Family::Complete { n: 6 },
            Family::Ladder { n: 5 },
            Family::Lattice { n: 3 },
            Family::Regular { d: 5, n: 8, seed: 9 },
        ] {
            let s = build_scattering(&generate(&f).unwrap());
            assert!(s.orthogonality_residual() < 1e-12, "{f}");
            assert!(s.time_reversal_residual() < 1e-12, "{f}");
        }
    }

    #[test]
    fn dumbbell_time_reversal_entrywise() {
        let s = build_scattering(&generate(&Family::Dumbbell).unwrap());
        let m = s.matrix();
        for j in 0..6 {
            for i in 0..6 {
                assert_eq!(m[((j + 3) % 6, (i + 3) % 6)], m[(i, j)]);
            }
        }
    }

    #[test]
    fn unitary_at_zero_and_random() {
        let g = generate(&Family::Complete { n: 4 }).unwrap();
        let s = build_scattering(&g);
        let u0 = s.unitary_at(&[0.0; 6]);
        assert!(u0.iter().zip(s.matrix().iter()).all(|(a, &b)| (a.re - b).abs() == 0.0 && a.im == 0.0));
        let kappa = [0.3, 1.7, 2.9, 4.4, 5.1, 6.0];
        let u = s.unitary_at(&kappa);
        let id = DMatrix::<Complex<f64>>::identity(12, 12);
        assert!((u.adjoint() * &u - id).iter().all(|z| z.norm() < 1e-12));
        let lhs = u.clone().determinant();
        let rhs = Complex::from_polar(1.0, 2.0 * kappa.iter().sum::<f64>()) * s.matrix().clone().determinant();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
