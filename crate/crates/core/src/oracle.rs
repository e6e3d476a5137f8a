//! Direct spectral computation on a metric graph: eigenvalues of the
//! standard Laplacian, their eigenfunctions, zero counts and the resulting
//! nodal surplus sequence.
//!
//! Eigenvalues are located with an exact counting function. Every eigenphase
//! of `U(k) = exp(i k l-hat) S` increases with `k` and the lifted phase sum
//! equals `2 L k` up to a constant, so the number of eigenvalues in `(eps, k]`
//! is `(2 L (k - eps) + sum theta(eps) - sum theta(k)) / 2pi` with wrapped
//! phases. Grid cells with a positive count are bisected until each root is
//! isolated.

use std::f64::consts::{PI, TAU};

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::quantum::{build_scattering, circular_distance, decompose, unitary_schur, ScatteringMatrix, Tolerances};
use crate::stats;

type C64 = Complex<f64>;

/// Minimum separation between the unit eigenphase and the rest.
pub const TAU_SIMPLE: f64 = 1e-6;
/// Vertex values below this fraction of the sup norm count as zero.
pub const VERTEX_ZERO: f64 = 1e-6;
/// Bound on the imaginary part after the global phase is removed.
pub const PHASE_RESIDUAL: f64 = 1e-7;
/// Grid cells per mean level spacing `pi / L`.
pub const CELLS_PER_SPACING: f64 = 20.0;

/// Graph with edge lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    pub graph: Graph,
    pub lengths: Vec<f64>,
}

impl MetricGraph {
    pub fn new(graph: Graph, lengths: Vec<f64>) -> Result<Self> {
        graph.validate().map_err(Error::InvalidGraph)?;
        if lengths.len() != graph.edge_count() {
            return Err(Error::InvalidParameters(format!("{} lengths for {} edges", lengths.len(), graph.edge_count())));
        }
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameters("edge lengths must be positive and finite".into()));
        }
        Ok(MetricGraph { graph, lengths })
    }

    /// Lengths drawn iid uniform on `[1, 2]`.
    pub fn with_random_lengths(graph: Graph, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lengths = (0..graph.edge_count()).map(|_| 1.0 + rng.random::<f64>()).collect();
        MetricGraph::new(graph, lengths)
    }

    pub fn total_length(&self) -> f64 {
        self.lengths.iter().sum()
    }

    fn kappa(&self, k: f64) -> Vec<f64> {
        self.lengths.iter().map(|&l| (k * l).rem_euclid(TAU)).collect()
    }
}

fn phases_at(s: &ScatteringMatrix, kappa: &[f64]) -> Result<Vec<f64>> {
    let u = s.unitary_at(kappa);
    let dim = u.nrows();
    let t = unitary_schur(&u)?.1;
    Ok((0..dim).map(|i| t[(i, i)].im.atan2(t[(i, i)].re).rem_euclid(TAU)).collect())
}

/// Exact eigenvalue counting function on `(eps, k]`.
struct Counter<'a> {
    mg: &'a MetricGraph,
    s: ScatteringMatrix,
    eps: f64,
    base: f64,
}

impl<'a> Counter<'a> {
    fn new(mg: &'a MetricGraph) -> Result<Self> {
        let s = build_scattering(&mg.graph);
        let eps = 1e-9 / mg.total_length();
        let base: f64 = phases_at(&s, &mg.kappa(eps))?.iter().sum();
        Ok(Counter { mg, s, eps, base })
    }

    fn count(&self, k: f64) -> Result<i64> {
        let sum: f64 = phases_at(&self.s, &self.mg.kappa(k))?.iter().sum();
        let raw = (2.0 * self.mg.total_length() * (k - self.eps) + self.base - sum) / TAU;
        let rounded = raw.round();
        if (raw - rounded).abs() > 1e-4 {
            return Err(Error::RootFinding(format!("counting function is not integral at k = {k}: {raw}")));
        }
        Ok(rounded as i64)
    }
}

/// An isolated eigenvalue with the number of eigenvalues it carries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub k: f64,
    pub multiplicity: usize,
}

fn isolate(counter: &Counter, a: f64, b: f64, ca: i64, cb: i64, out: &mut Vec<Root>) -> Result<()> {
    if cb == ca {
        return Ok(());
    }
    if b - a <= 1e-13 * b.max(1.0) {
        out.push(Root { k: 0.5 * (a + b), multiplicity: (cb - ca) as usize });
        return Ok(());
    }
    let mid = 0.5 * (a + b);
    let cm = counter.count(mid)?;
    if cm < ca || cm > cb {
        return Err(Error::RootFinding(format!("counting function decreased near k = {mid}")));
    }
    isolate(counter, a, mid, ca, cm, out)?;
    isolate(counter, mid, b, cm, cb, out)
}

/// Roots of the secular equation in `(0, k_max]`, with multiplicity.
pub fn find_eigenvalues(mg: &MetricGraph, k_max: f64) -> Result<Vec<Root>> {
    if !(k_max > 0.0) {
        return Err(Error::InvalidParameters("k_max must be positive".into()));
    }
    let counter = Counter::new(mg)?;
    find_with(&counter, counter.eps, k_max)
}

fn find_with(counter: &Counter, from: f64, to: f64) -> Result<Vec<Root>> {
    let h = PI / (CELLS_PER_SPACING * counter.mg.total_length());
    let cells = ((to - from) / h).ceil().max(1.0) as usize;
    let edges: Vec<f64> = (0..=cells).map(|i| if i == cells { to } else { from + i as f64 * h }).collect();
    let counts: Vec<i64> = edges.par_iter().map(|&k| counter.count(k)).collect::<Result<_>>()?;
    for w in counts.windows(2) {
        if w[1] < w[0] {
            return Err(Error::RootFinding("counting function decreased on the grid".into()));
        }
    }
    let per_cell: Vec<Vec<Root>> = (0..cells)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            isolate(counter, edges[i], edges[i + 1], counts[i], counts[i + 1], &mut out)?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

/// Why a mode has no surplus value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nongeneric {
    Multiple,
    VertexZero,
    Numerical,
}

/// Eigenfunction data at one root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    /// Ordinal of the first eigenvalue at this root, counting `k = 0` as 1.
    pub n: usize,
    pub k: f64,
    pub multiplicity: usize,
    pub generic: bool,
    pub reason: Option<Nongeneric>,
    pub zero_count: Option<usize>,
    pub surplus: Option<i64>,
    /// `min_v |f(v)| / max |f|`.
    pub min_vertex_value: f64,
    /// Circular distance from the unit eigenphase to the nearest other phase.
    pub phase_gap: f64,
    /// Relative Neumann-Kirchhoff residual (continuity and current).
    pub vertex_residual: f64,
}

/// Real eigenfunction `f_e(x) = A_e cos(k x) + B_e sin(k x)` on each edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenfunction {
    pub k: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
    pub imag_residual: f64,
}

impl Eigenfunction {
    pub fn value(&self, e: usize, x: f64) -> f64 {
        self.cos[e] * (self.k * x).cos() + self.sin[e] * (self.k * x).sin()
    }

    pub fn derivative(&self, e: usize, x: f64) -> f64 {
        self.k * (-self.cos[e] * (self.k * x).sin() + self.sin[e] * (self.k * x).cos())
    }

    /// Largest edge amplitude `sqrt(A^2 + B^2)`.
    pub fn amplitude(&self) -> f64 {
        self.cos.iter().zip(&self.sin).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
    }

    /// Interior zeros on edge `e` of length `l`: writing `f = R sin(kx + phi)`,
    /// the integers `m` with `0 < (m pi - phi)/k < l`.
    pub fn zeros_on_edge(&self, e: usize, l: f64) -> usize {
        let phi = self.cos[e].atan2(self.sin[e]);
        let lower = phi / PI;
        let upper = (self.k * l + phi) / PI;
        (upper.ceil() - lower.floor() - 1.0).max(0.0) as usize
    }
}

/// Rebuilds the eigenfunction from a unit-eigenvalue eigenvector `a` of
/// `U(k)`. `a_j` is the amplitude of bond `j` on arrival; the amplitude at
/// its start is `a_j exp(-i k l_j)`.
pub fn eigenfunction_from_vector(mg: &MetricGraph, k: f64, a: &[C64]) -> Eigenfunction {
    let e = mg.graph.edge_count();
    let b: Vec<C64> = (0..2 * e).map(|j| a[j] * C64::from_polar(1.0, -k * mg.lengths[j % e])).collect();
    // f_e(0) and f_e'(0)/k as complex numbers
    let mut cos_c = Vec::with_capacity(e);
    let mut sin_c = Vec::with_capacity(e);
    for j in 0..e {
        let far = b[j + e] * C64::from_polar(1.0, k * mg.lengths[j]);
        cos_c.push(b[j] + far);
        sin_c.push((b[j] - far) * C64::new(0.0, 1.0));
    }
    let z: C64 = cos_c.iter().chain(sin_c.iter()).map(|c| c * c).sum();
    let rot = C64::from_polar(1.0, -0.5 * z.im.atan2(z.re));
    let scale = cos_c.iter().chain(sin_c.iter()).map(|c| c.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let imag_residual = cos_c.iter().chain(sin_c.iter()).map(|c| (c * rot).im.abs()).fold(0.0, f64::max) / scale;
    Eigenfunction {
        k,
        cos: cos_c.iter().map(|c| (c * rot).re / scale).collect(),
        sin: sin_c.iter().map(|c| (c * rot).re / scale).collect(),
        imag_residual,
    }
}

/// Vertex values (from the first incident edge end) and the relative
/// residual of continuity and current conservation.
pub fn vertex_conditions(mg: &MetricGraph, f: &Eigenfunction) -> (Vec<f64>, f64) {
    let v = mg.graph.vertex_count();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); v];
    let mut current = vec![0.0; v];
    for (j, &(u, w)) in mg.graph.edges().iter().enumerate() {
        let l = mg.lengths[j];
        values[u].push(f.value(j, 0.0));
        values[w].push(f.value(j, l));
        current[u] += f.derivative(j, 0.0);
        current[w] -= f.derivative(j, l);
    }
    let amp = f.amplitude().max(f64::MIN_POSITIVE);
    let mut residual: f64 = 0.0;
    let mut first = Vec::with_capacity(v);
    for x in 0..v {
        let f0 = values[x][0];
        for &y in &values[x] {
            residual = residual.max((y - f0).abs() / amp);
        }
        residual = residual.max(current[x].abs() / (f.k * amp));
        first.push(f0);
    }
    (first, residual)
}

/// Analyzes the eigenfunction at a simple root.
pub fn analyze_eigenfunction(mg: &MetricGraph, root: Root, n: usize) -> Result<ModeRecord> {
    let s = build_scattering(&mg.graph);
    analyze_with(mg, &s, root, n)
}

fn analyze_with(mg: &MetricGraph, s: &ScatteringMatrix, root: Root, n: usize) -> Result<ModeRecord> {
    let beta = mg.graph.betti() as i64;
    let u = s.unitary_at(&mg.kappa(root.k));
    let smp = decompose(&u, &mg.graph, &Tolerances::default())?;
    let unit = (0..smp.dim())
        .min_by(|&a, &b| circular_distance(smp.phases[a], 0.0).total_cmp(&circular_distance(smp.phases[b], 0.0)))
        .expect("non-empty spectrum");
    let phase_gap = (0..smp.dim())
        .filter(|&m| m != unit)
        .map(|m| circular_distance(smp.phases[m], smp.phases[unit]))
        .fold(f64::INFINITY, f64::min);
    let mut record = ModeRecord {
        n,
        k: root.k,
        multiplicity: root.multiplicity,
        generic: false,
        reason: None,
        zero_count: None,
        surplus: None,
        min_vertex_value: f64::NAN,
        phase_gap,
        vertex_residual: f64::NAN,
    };
    if root.multiplicity > 1 || phase_gap <= TAU_SIMPLE {
        record.reason = Some(Nongeneric::Multiple);
        return Ok(record);
    }
    let a: Vec<C64> = smp.vectors.column(unit).iter().copied().collect();
    let f = eigenfunction_from_vector(mg, root.k, &a);
    let (values, residual) = vertex_conditions(mg, &f);
    record.vertex_residual = residual;
    let amp = f.amplitude();
    record.min_vertex_value = values.iter().map(|x| x.abs()).fold(f64::INFINITY, f64::min) / amp;
    if f.imag_residual > PHASE_RESIDUAL {
        record.reason = Some(Nongeneric::Numerical);
        return Ok(record);
    }
    if record.min_vertex_value < VERTEX_ZERO {
        record.reason = Some(Nongeneric::VertexZero);
        return Ok(record);
    }
    let zeros: usize = (0..mg.graph.edge_count()).map(|e| f.zeros_on_edge(e, mg.lengths[e])).sum();
    record.generic = true;
    record.zero_count = Some(zeros);
    record.surplus = Some(zeros as i64 - (n as i64 - 1));
    debug_assert!(beta >= 0);
    Ok(record)
}

/// Surplus sequence with its summary statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSequence {
    pub beta: usize,
    pub lengths: Vec<f64>,
    pub k_max: f64,
    pub records: Vec<ModeRecord>,
    /// Eigenvalues in `(0, k_max]` with multiplicity.
    pub root_count: usize,
    pub generic_count: usize,
    pub nongeneric_multiple: usize,
    pub nongeneric_vertex: usize,
    pub nongeneric_numerical: usize,
    /// Generic modes whose zero count leaves `[n - 1, n - 1 + beta]`.
    pub bound_violations: usize,
    /// `|root_count - L k_max / pi|`.
    pub weyl_residual: f64,
    pub max_vertex_residual: f64,
    /// Empirical distribution of the surplus over generic modes.
    pub distribution: Vec<f64>,
}

impl SpectralSequence {
    pub fn mean(&self) -> f64 {
        stats::moments(&self.distribution).0
    }
}

/// Surplus sequence over `(0, k_max]`.
pub fn surplus_sequence(mg: &MetricGraph, k_max: f64) -> Result<SpectralSequence> {
    let roots = find_eigenvalues(mg, k_max)?;
    assemble(mg, roots, k_max, usize::MAX)
}

/// Surplus sequence grown until it holds `modes` generic modes.
pub fn surplus_sequence_modes(mg: &MetricGraph, modes: usize) -> Result<SpectralSequence> {
    if modes == 0 {
        return Err(Error::InvalidParameters("mode count must be positive".into()));
    }
    let counter = Counter::new(mg)?;
    let l = mg.total_length();
    let e = mg.graph.edge_count();
    let v = mg.graph.vertex_count();
    let mut k_hi = ((modes as f64) * 1.25 + (e + v) as f64) * PI / l;
    let mut roots = find_with(&counter, counter.eps, k_hi)?;
    let s = build_scattering(&mg.graph);
    for _ in 0..20 {
        let records = analyze_roots(mg, &s, &roots)?;
        let generic = records.iter().filter(|r| r.generic).count();
        if generic >= modes {
            let last = records.iter().filter(|r| r.generic).nth(modes - 1).expect("enough generic modes").k;
            // keep every root up to and including the last needed generic mode
            let kept = roots.iter().take_while(|r| r.k <= last).count();
            roots.truncate(kept);
            return assemble_from(mg, roots.clone(), records[..kept].to_vec(), last);
        }
        let extra = ((modes - generic) as f64 * 1.5 + 10.0) * PI / l;
        let more = find_with(&counter, k_hi, k_hi + extra)?;
        roots.extend(more);
        k_hi += extra;
    }
    Err(Error::RootFinding("too few generic modes after repeated extension".into()))
}

fn analyze_roots(mg: &MetricGraph, s: &ScatteringMatrix, roots: &[Root]) -> Result<Vec<ModeRecord>> {
    let mut ordinal = Vec::with_capacity(roots.len());
    let mut n = 2;
    for r in roots {
        ordinal.push(n);
        n += r.multiplicity;
    }
    roots.par_iter().zip(ordinal.par_iter()).map(|(r, &n)| analyze_with(mg, s, *r, n)).collect()
}

fn assemble(mg: &MetricGraph, roots: Vec<Root>, k_max: f64, _limit: usize) -> Result<SpectralSequence> {
    let s = build_scattering(&mg.graph);
    let records = analyze_roots(mg, &s, &roots)?;
    assemble_from(mg, roots, records, k_max)
}

fn assemble_from(mg: &MetricGraph, roots: Vec<Root>, records: Vec<ModeRecord>, k_max: f64) -> Result<SpectralSequence> {
    let beta = mg.graph.betti();
    let root_count: usize = roots.iter().map(|r| r.multiplicity).sum();
    let mut hist = vec![0usize; beta + 1];
    let mut bound_violations = 0;
    let (mut multiple, mut vertex, mut numerical) = (0, 0, 0);
    let mut max_vertex_residual: f64 = 0.0;
    for r in &records {
        match r.reason {
            Some(Nongeneric::Multiple) => multiple += 1,
            Some(Nongeneric::VertexZero) => vertex += 1,
            Some(Nongeneric::Numerical) => numerical += 1,
            None => {}
        }
        if r.vertex_residual.is_finite() && r.reason != Some(Nongeneric::Numerical) {
            max_vertex_residual = max_vertex_residual.max(r.vertex_residual);
        }
        if let Some(sv) = r.surplus {
            if sv < 0 || sv > beta as i64 {
                bound_violations += 1;
            } else {
                hist[sv as usize] += 1;
            }
        }
    }
    let generic_count = records.iter().filter(|r| r.generic).count();
    let binned: usize = hist.iter().sum();
    let distribution = if binned == 0 { vec![0.0; beta + 1] } else { hist.iter().map(|&c| c as f64 / binned as f64).collect() };
    Ok(SpectralSequence {
        beta,
        lengths: mg.lengths.clone(),
        k_max,
        root_count,
        generic_count,
        nongeneric_multiple: multiple,
        nongeneric_vertex: vertex,
        nongeneric_numerical: numerical,
        bound_violations,
        weyl_residual: (root_count as f64 - mg.total_length() * k_max / PI).abs(),
        max_vertex_residual,
        distribution,
        records,
    })
}

/// Oracle versus sampler comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub per_bin: Vec<f64>,
    pub total_variation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const DEFAULT_COMPARE_TOLERANCE: f64 = 0.03;

pub fn compare(oracle: &[f64], sampled: &[f64], tolerance: f64) -> Result<CompareReport> {
    if oracle.len() != sampled.len() {
        return Err(Error::BettiMismatch { left: oracle.len().saturating_sub(1), right: sampled.len().saturating_sub(1) });
    }
    let per_bin: Vec<f64> = oracle.iter().zip(sampled).map(|(a, b)| a - b).collect();
    let tv = stats::total_variation(oracle, sampled);
    Ok(CompareReport { per_bin, total_variation: tv, tolerance, pass: tv < tolerance })
}

/// Brute-force zero count by sign changes on a grid of `per_half_period`
/// points per half wavelength; used to cross-check the analytic count.
pub fn zero_count_by_scan(mg: &MetricGraph, f: &Eigenfunction, per_half_period: usize) -> usize {
    let mut total = 0;
    for (e, &l) in mg.lengths.iter().enumerate() {
        let steps = ((l * f.k / PI).ceil() as usize + 1) * per_half_period;
        let mut sign = f.value(e, 0.0).signum();
        for i in 1..=steps {
            let cur = f.value(e, l * i as f64 / steps as f64);
            if cur != 0.0 {
                if cur.signum() != sign {
                    total += 1;
                }
                sign = cur.signum();
            }
        }
    }
    total
}
