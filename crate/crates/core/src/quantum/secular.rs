use std::f64::consts::TAU;

use nalgebra::{Complex, DMatrix, DVector, Schur};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scattering::ScatteringMatrix;
use super::Tolerances;
use crate::error::{Error, Result};
use crate::graph::Graph;

type C64 = Complex<f64>;

/// Eigendecomposition of `U_kappa` with the loop subspace split off.
#[derive(Debug, Clone)]
pub struct SecularSample {
    /// Torus point the matrix was built at; empty when decomposing a bare matrix.
    pub kappa: Vec<f64>,
    /// Eigenphases in `[0, 2pi)`.
    pub phases: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub vectors: DMatrix<C64>,
    /// Membership of each eigenvector in the loop subspace `V_as`.
    pub antisymmetric: Vec<bool>,
    /// Smallest circular distance between distinct eigenphase clusters.
    pub min_phase_gap: f64,
    /// Cluster label of each eigenphase.
    pub cluster: Vec<usize>,
    cluster_sizes: Vec<usize>,
    edge_count: usize,
    loop_edge: Vec<bool>,
}

pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Complex Schur form `u = Q T Q^*`.
///
/// The shifted QR iteration occasionally stalls on the highly structured
/// matrices of small graphs. After a stall the factorization is retried on
/// `W u W^*` for a fixed pseudo-random unitary `W`, which has the same
/// spectrum, and `Q` is mapped back.
pub fn unitary_schur(u: &DMatrix<C64>) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let dim = u.nrows();
    let max_iter = 1000 * dim.max(10);
    if let Some(schur) = Schur::try_new(u.clone(), f64::EPSILON, max_iter) {
        return Ok(schur.unpack());
    }
    for attempt in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(attempt);
        let m = DMatrix::<C64>::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let w = m.qr().q();
        let conj = &w * u * w.adjoint();
        if let Some(schur) = Schur::try_new(conj, f64::EPSILON, max_iter) {
            log::debug!("Schur factorization converged after conjugation {attempt}");
            let (q, t) = schur.unpack();
            return Ok((w.adjoint() * q, t));
        }
    }
    Err(Error::EigenSolver)
}

fn wrap_phase(z: C64) -> f64 {
    let t = z.im.atan2(z.re).rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Decomposes `U_kappa` built from `s` at `kappa`.
pub fn secular_sample(s: &ScatteringMatrix, graph: &Graph, kappa: &[f64], tol: &Tolerances) -> Result<SecularSample> {
    let u = s.unitary_at(kappa);
    let mut sample = decompose(&u, graph, tol)?;
    sample.kappa = kappa.to_vec();
    Ok(sample)
}

/// Full eigendecomposition of a unitary bond matrix. Within each cluster
/// of eigenphases closer than `tol.deg`, the basis is rebuilt so that loop
/// vectors `(e_j - e_{j+E})/sqrt(2)` appear exactly and the remaining
/// vectors span their orthocomplement.
pub fn decompose(u: &DMatrix<C64>, graph: &Graph, tol: &Tolerances) -> Result<SecularSample> {
    let dim = u.nrows();
    let e = graph.edge_count();
    if dim != 2 * e || u.ncols() != dim {
        return Err(Error::InvalidParameters(format!("matrix is {}x{}, expected {}x{}", u.nrows(), u.ncols(), 2 * e, 2 * e)));
    }
    let (q, t) = unitary_schur(u)?;
    let raw_phases: Vec<f64> = (0..dim).map(|i| wrap_phase(t[(i, i)])).collect();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| raw_phases[a].total_cmp(&raw_phases[b]));
    let mut phases = Vec::with_capacity(dim);
    let mut vectors = DMatrix::<C64>::zeros(dim, dim);
    for (k, &i) in order.iter().enumerate() {
        phases.push(raw_phases[i]);
        vectors.set_column(k, &q.column(i));
    }

    // clusters of consecutive sorted phases, merged across the 0/2pi seam
    let mut cluster = vec![0usize; dim];
    let mut next = 0;
    for k in 1..dim {
        if phases[k] - phases[k - 1] > tol.deg {
            next += 1;
        }
        cluster[k] = next;
    }
    let mut count = next + 1;
    if count > 1 && phases[0] + TAU - phases[dim - 1] <= tol.deg {
        let last = cluster[dim - 1];
        for c in cluster.iter_mut() {
            if *c == last {
                *c = 0;
            }
        }
        count -= 1;
    }
    let mut cluster_sizes = vec![0usize; count];
    for &c in &cluster {
        cluster_sizes[c] += 1;
    }
    let mut cluster_phase = vec![f64::NAN; count];
    for k in 0..dim {
        if cluster_phase[cluster[k]].is_nan() {
            cluster_phase[cluster[k]] = phases[k];
        }
    }
    let min_phase_gap = if count == 1 {
        TAU
    } else {
        let mut reps: Vec<f64> = cluster_phase.clone();
        reps.sort_by(f64::total_cmp);
        let mut gap = reps[0] + TAU - reps[count - 1];
        for w in reps.windows(2) {
            gap = gap.min(w[1] - w[0]);
        }
        gap
    };

    let loops = graph.loops_of();
    let mut loop_edge = vec![false; e];
    let mut loops_in: Vec<Vec<usize>> = vec![Vec::new(); count];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for &l in &loops {
        loop_edge[l] = true;
        // Rayleigh quotient of the loop vector gives its exact eigenvalue
        let val = (u[(l, l)] - u[(l, l + e)] - u[(l + e, l)] + u[(l + e, l + e)]) * 0.5;
        let phase = wrap_phase(val);
        let c = (0..count)
            .min_by(|&a, &b| {
                circular_distance(cluster_phase[a], phase).total_cmp(&circular_distance(cluster_phase[b], phase))
            })
            .expect("at least one cluster");
        if circular_distance(cluster_phase[c], phase) > tol.deg + 1e-12 * dim as f64 {
            return Err(Error::Numerical(format!("loop {l} phase {phase} matches no eigenphase")));
        }
        loops_in[c].push(l);
    }

    let mut antisymmetric = vec![false; dim];
    for c in 0..count {
        if loops_in[c].is_empty() {
            continue;
        }
        let members: Vec<usize> = (0..dim).filter(|&k| cluster[k] == c).collect();
        if loops_in[c].len() > members.len() {
            return Err(Error::Numerical("more loop vectors than eigenvectors in a phase cluster".into()));
        }
        let mut basis: Vec<DVector<C64>> = Vec::with_capacity(members.len());
        for &l in &loops_in[c] {
            let mut v = DVector::<C64>::zeros(dim);
            v[l] = C64::new(h, 0.0);
            v[l + e] = C64::new(-h, 0.0);
            let captured: f64 = members.iter().map(|&k| vectors.column(k).dotc(&v).norm_sqr()).sum();
            if captured < 1.0 - tol.antisym {
                return Err(Error::Numerical(format!("loop vector {l} lies outside its eigenspace ({captured})")));
            }
            basis.push(v);
        }
        // remaining directions: the cluster columns with loop components removed,
        // orthonormalized greedily by largest residual
        let mut candidates: Vec<DVector<C64>> = members.iter().map(|&k| vectors.column(k).into_owned()).collect();
        while basis.len() < members.len() {
            for cand in candidates.iter_mut() {
                for _ in 0..2 {
                    for b in &basis {
                        let p = b.dotc(cand);
                        *cand -= b * p;
                    }
                }
            }
            let (best, norm) = candidates
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("candidates remain");
            if norm < 0.5 {
                return Err(Error::Numerical("phase cluster lost rank while splitting loop subspace".into()));
            }
            let v = candidates.swap_remove(best) / C64::new(norm, 0.0);
            basis.push(v);
        }
        for (slot, (&k, v)) in members.iter().zip(basis.iter()).enumerate() {
            vectors.set_column(k, v);
            antisymmetric[k] = slot < loops_in[c].len();
        }
    }

    Ok(SecularSample {
        kappa: Vec::new(),
        phases,
        vectors,
        antisymmetric,
        min_phase_gap,
        cluster,
        cluster_sizes,
        edge_count: e,
        loop_edge,
    })
}

impl SecularSample {
    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_loop_edge(&self, e: usize) -> bool {
        self.loop_edge[e]
    }

    /// Number of eigenphases sharing the cluster of `n`.
    pub fn kernel_dim(&self, n: usize) -> usize {
        self.cluster_sizes[self.cluster[n]]
    }

    /// Circular distance from `theta_n` to the nearest phase outside its cluster.
    pub fn isolation(&self, n: usize) -> f64 {
        let c = self.cluster[n];
        (0..self.dim())
            .filter(|&m| self.cluster[m] != c)
            .map(|m| circular_distance(self.phases[m], self.phases[n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// `max_n |U a_n - e^{i theta_n} a_n|`.
    pub fn eigen_residual(&self, u: &DMatrix<C64>) -> f64 {
        let ua = u * &self.vectors;
        (0..self.dim())
            .map(|n| {
                let lam = C64::from_polar(1.0, self.phases[n]);
                (ua.column(n) - self.vectors.column(n) * lam).norm()
            })
            .fold(0.0, f64::max)
    }

    /// `max |A* A - I|`.
    pub fn orthonormality_residual(&self) -> f64 {
        let d = self.dim();
        (self.vectors.adjoint() * &self.vectors - DMatrix::<C64>::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Torus point `kappa - theta_n`, at which eigenvector `n` has eigenvalue one.
    pub fn on_manifold_point(&self, n: usize) -> Vec<f64> {
        self.kappa.iter().map(|&k| (k - self.phases[n]).rem_euclid(TAU)).collect()
    }
}
