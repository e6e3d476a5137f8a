//! Monte Carlo estimation of nodal surplus distributions over the torus.
//!
//! Sample `i` draws its torus point from its own ChaCha8 stream
//! `(master_seed, i)`, so the value of every sample is fixed before any
//! scheduling happens. Samples are grouped into fixed-size chunks; each chunk
//! is reduced with compensated sums in index order and the chunk results are
//! folded in chunk order. The thread count only decides who computes a
//! chunk, never how sums are formed.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::orbits::EdgeOrbitPartition;
use crate::quantum::{hessian, secular_sample, surplus_index, Discard, ScatteringMatrix, Tolerances};
use crate::stats;

pub const CHUNK: usize = 32;

/// Which length vector the direct estimate uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weights {
    Uniform,
    Lengths(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub samples: usize,
    pub master_seed: u64,
    pub weights: Weights,
    pub tolerances: Tolerances,
    pub workers: usize,
}

impl SamplerConfig {
    pub fn new(samples: usize, master_seed: u64) -> Self {
        SamplerConfig { samples, master_seed, weights: Weights::Uniform, tolerances: Tolerances::default(), workers: 1 }
    }

    /// `ceil(budget / 2E)` samples, each yielding `2E` eigenpairs.
    pub fn default_samples(edge_count: usize, budget: usize) -> usize {
        budget.div_ceil(2 * edge_count).max(1)
    }

    fn lengths(&self, e: usize) -> Result<Vec<f64>> {
        let l = match &self.weights {
            Weights::Uniform => vec![1.0; e],
            Weights::Lengths(l) => l.clone(),
        };
        if l.len() != e {
            return Err(Error::InvalidParameters(format!("{} weights given for {} edges", l.len(), e)));
        }
        if l.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || l.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameters("weights must be non-negative, finite and not all zero".into()));
        }
        Ok(l)
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidParameters("sample count must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameters("worker count must be positive".into()));
        }
        Ok(())
    }
}

/// Uniform torus point of sample `index`.
pub fn sample_kappa(master_seed: u64, index: u64, edge_count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    (0..edge_count).map(|_| rng.random::<f64>() * TAU).collect()
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Running sums for one weighting of the eigenpairs.
#[derive(Debug, Clone)]
struct Channel {
    bins: Vec<Compensated>,
    bins_sq: Vec<Compensated>,
    mirror_sq: Vec<Compensated>,
    spread: Compensated,
    spread_sq: Compensated,
}

impl Channel {
    fn new(beta: usize) -> Self {
        let z = vec![Compensated::default(); beta + 1];
        Channel { bins: z.clone(), bins_sq: z.clone(), mirror_sq: z, spread: Compensated::default(), spread_sq: Compensated::default() }
    }

    /// Adds the per-sample bin masses `h`.
    fn push(&mut self, h: &[f64]) {
        let beta = h.len() - 1;
        let centre = beta as f64 / 2.0;
        let mut v = 0.0;
        for s in 0..=beta {
            self.bins[s].add(h[s]);
            self.bins_sq[s].add(h[s] * h[s]);
            let d = h[s] - h[beta - s];
            self.mirror_sq[s].add(d * d);
            v += (s as f64 - centre).powi(2) * h[s];
        }
        self.spread.add(v);
        self.spread_sq.add(v * v);
    }

    fn merge(&mut self, other: &Channel) {
        let pairs = self.bins.iter_mut().chain(self.bins_sq.iter_mut()).chain(self.mirror_sq.iter_mut());
        let others = other.bins.iter().chain(other.bins_sq.iter()).chain(other.mirror_sq.iter());
        for (a, b) in pairs.zip(others) {
            a.add(b.value());
        }
        self.spread.add(other.spread.value());
        self.spread_sq.add(other.spread_sq.value());
    }
}

/// Counts of eigenpairs excluded from the statistics, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardStats {
    /// Eigenpairs in the symmetric subspace that were examined.
    pub pairs: u64,
    pub degenerate: u64,
    pub phase_gap: u64,
    pub not_hermitian: u64,
    pub kernel_mismatch: u64,
    pub kernel_gap: u64,
    pub out_of_range: u64,
    /// Whole samples lost to eigensolver failure.
    pub failed_samples: u64,
}

impl DiscardStats {
    pub fn discarded(&self) -> u64 {
        self.degenerate + self.phase_gap + self.not_hermitian + self.kernel_mismatch + self.kernel_gap + self.out_of_range
    }

    pub fn fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.discarded() as f64 / self.pairs as f64
        }
    }

    /// Eigenpairs that passed the isolation and hermiticity checks, i.e. the
    /// ones on which the kernel dimension could be tested.
    pub fn kernel_tested(&self) -> u64 {
        self.pairs - self.degenerate - self.phase_gap - self.not_hermitian
    }

    fn record(&mut self, d: Discard) {
        match d {
            Discard::Degenerate { .. } => self.degenerate += 1,
            Discard::PhaseGap => self.phase_gap += 1,
            Discard::NotHermitian => self.not_hermitian += 1,
            Discard::KernelMismatch { .. } => self.kernel_mismatch += 1,
            Discard::KernelGap => self.kernel_gap += 1,
        }
    }

    fn merge(&mut self, o: &DiscardStats) {
        self.pairs += o.pairs;
        self.degenerate += o.degenerate;
        self.phase_gap += o.phase_gap;
        self.not_hermitian += o.not_hermitian;
        self.kernel_mismatch += o.kernel_mismatch;
        self.kernel_gap += o.kernel_gap;
        self.out_of_range += o.out_of_range;
        self.failed_samples += o.failed_samples;
    }
}

/// Estimated distribution of the surplus over `0..=beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusDistribution {
    pub beta: usize,
    pub probs: Vec<f64>,
    pub n_samples: usize,
    pub n_discarded: u64,
    pub discards: DiscardStats,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of each `probs[s]`.
    pub std_errors: Vec<f64>,
    /// Standard error of `probs[s] - probs[beta - s]`.
    pub mirror_std_errors: Vec<f64>,
    /// Standard error of the variance estimate.
    pub variance_std_error: f64,
    /// Accepted weight before normalization.
    pub accepted_mass: f64,
}

impl SurplusDistribution {
    fn from_channel(ch: &Channel, n: usize, discards: DiscardStats) -> Result<Self> {
        let beta = ch.bins.len() - 1;
        let raw: Vec<f64> = ch.bins.iter().map(Compensated::value).collect();
        let mass: f64 = raw.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::AllDiscarded(n));
        }
        let probs: Vec<f64> = raw.iter().map(|x| x / mass).collect();
        let nf = n as f64;
        let w = mass / nf;
        let se = |sum: f64, sum_sq: f64| {
            let m = sum / nf;
            ((sum_sq / nf - m * m).max(0.0) / nf).sqrt() / w
        };
        let std_errors = (0..=beta).map(|s| se(raw[s], ch.bins_sq[s].value())).collect();
        let mirror_std_errors =
            (0..=beta).map(|s| se(raw[s] - raw[beta - s], ch.mirror_sq[s].value())).collect();
        let (mean, variance) = stats::moments(&probs);
        Ok(SurplusDistribution {
            beta,
            probs,
            n_samples: n,
            n_discarded: discards.discarded(),
            discards,
            mean,
            variance,
            std_errors,
            mirror_std_errors,
            variance_std_error: se(ch.spread.value(), ch.spread_sq.value()),
            accepted_mass: mass,
        })
    }

    /// Bernstein half-width at the given confidence for this sample count.
    pub fn bernstein_delta_at(&self, confidence: f64) -> f64 {
        bernstein_delta(self.n_samples, 1.0 - confidence)
    }

    pub fn discard_fraction(&self) -> f64 {
        self.discards.fraction()
    }

    /// `max_s |P(s) - P(beta - s)| / SE`, ignoring bins whose difference is exactly zero.
    pub fn mirror_z(&self) -> f64 {
        (0..=self.beta)
            .map(|s| {
                let d = (self.probs[s] - self.probs[self.beta - s]).abs();
                if d == 0.0 {
                    0.0
                } else {
                    d / self.mirror_std_errors[s]
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn ks_to_gaussian(&self) -> Result<f64> {
        stats::ks_to_gaussian(&self.probs)
    }
}

/// `2 exp(-N delta^2 / (2 (1 + delta/3)))`.
pub fn bernstein_bound(n: usize, delta: f64) -> f64 {
    2.0 * (-(n as f64) * delta * delta / (2.0 * (1.0 + delta / 3.0))).exp()
}

/// Smallest `delta` with `bernstein_bound(n, delta) <= failure`, by bisection.
pub fn bernstein_delta(n: usize, failure: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while bernstein_bound(n, hi) > failure {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if bernstein_bound(n, mid) > failure {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Per-edge extreme points `W_e` together with the raw tallies needed to
/// rebuild any weighted distribution from the same sample stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDistributionSet {
    pub beta: usize,
    pub orbits: EdgeOrbitPartition,
    /// Edges with their own estimate, ascending.
    pub edges: Vec<usize>,
    pub per_edge: Vec<SurplusDistribution>,
    /// `c_e`: 1 for loops, 2 otherwise, for every edge.
    pub c: Vec<u8>,
    /// Direct estimate with the configured weights from the same stream.
    pub direct: SurplusDistribution,
    pub n_samples: usize,
}

impl EdgeDistributionSet {
    /// Distribution of the edge or of its orbit representative.
    pub fn for_edge(&self, e: usize) -> &SurplusDistribution {
        if let Ok(i) = self.edges.binary_search(&e) {
            return &self.per_edge[i];
        }
        let orbit = self.orbits.orbits.iter().find(|o| o.contains(&e)).expect("edge in partition");
        let rep = orbit.iter().find(|x| self.edges.binary_search(x).is_ok()).expect("orbit has an estimate");
        &self.per_edge[self.edges.binary_search(rep).unwrap()]
    }

    /// `P_l(s) = sum_e l_e c_e T_e(s) / sum_e l_e c_e T_e`, where `T_e` are
    /// the unnormalized per-edge tallies.
    pub fn reconstruct(&self, lengths: &[f64]) -> Vec<f64> {
        let mut num = vec![0.0; self.beta + 1];
        let mut den = 0.0;
        for (e, &l) in lengths.iter().enumerate() {
            let d = self.for_edge(e);
            let w = l * self.c[e] as f64;
            for (s, &p) in d.probs.iter().enumerate() {
                num[s] += w * p * d.accepted_mass;
            }
            den += w * d.accepted_mass;
        }
        num.iter().map(|x| x / den).collect()
    }
}

struct ChunkResult {
    direct: Channel,
    edges: Vec<Channel>,
    discards: DiscardStats,
}

fn run_chunk(
    graph: &Graph,
    s: &ScatteringMatrix,
    cfg: &SamplerConfig,
    lengths: &[f64],
    tracked: &[usize],
    range: std::ops::Range<usize>,
) -> ChunkResult {
    let e = graph.edge_count();
    let beta = graph.betti();
    let kernel = e - beta;
    let tol = &cfg.tolerances;
    let c: Vec<f64> = (0..e).map(|j| if graph.is_loop(j) { 1.0 } else { 2.0 }).collect();
    let den: f64 = lengths.iter().zip(&c).map(|(l, c)| l * c).sum();
    let mut out = ChunkResult { direct: Channel::new(beta), edges: vec![Channel::new(beta); tracked.len()], discards: DiscardStats::default() };
    let mut h = vec![0.0; beta + 1];
    let mut he = vec![vec![0.0; beta + 1]; tracked.len()];
    for i in range {
        let kappa = sample_kappa(cfg.master_seed, i as u64, e);
        let Ok(smp) = secular_sample(s, graph, &kappa, tol) else {
            out.discards.failed_samples += 1;
            continue;
        };
        h.iter_mut().for_each(|x| *x = 0.0);
        he.iter_mut().flatten().for_each(|x| *x = 0.0);
        for n in (0..smp.dim()).filter(|&n| !smp.antisymmetric[n]) {
            out.discards.pairs += 1;
            let hs = match hessian(&smp, n, tol).and_then(|hs| hs.check_kernel(kernel, tol).map(|_| hs)) {
                Ok(hs) => hs,
                Err(d) => {
                    out.discards.record(d);
                    continue;
                }
            };
            let sidx = surplus_index(&hs);
            if sidx > beta {
                out.discards.out_of_range += 1;
                continue;
            }
            let a = &smp.vectors;
            let mut num = 0.0;
            for (j, &l) in lengths.iter().enumerate() {
                if l != 0.0 {
                    num += l * (a[(j, n)].norm_sqr() + a[(j + e, n)].norm_sqr());
                }
            }
            h[sidx] += num / den;
            for (k, &j) in tracked.iter().enumerate() {
                he[k][sidx] += (a[(j, n)].norm_sqr() + a[(j + e, n)].norm_sqr()) / c[j];
            }
        }
        out.direct.push(&h);
        for (ch, hk) in out.edges.iter_mut().zip(&he) {
            ch.push(hk);
        }
    }
    out
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameters(format!("thread pool: {e}")))
}

fn run(graph: &Graph, s: &ScatteringMatrix, cfg: &SamplerConfig, tracked: &[usize]) -> Result<(Channel, Vec<Channel>, DiscardStats)> {
    cfg.validate()?;
    graph.validate().map_err(Error::InvalidGraph)?;
    if s.edge_count() != graph.edge_count() {
        return Err(Error::InvalidParameters("scattering matrix does not belong to this graph".into()));
    }
    let lengths = cfg.lengths(graph.edge_count())?;
    let chunks: Vec<std::ops::Range<usize>> =
        (0..cfg.samples.div_ceil(CHUNK)).map(|k| k * CHUNK..((k + 1) * CHUNK).min(cfg.samples)).collect();
    let pool = thread_pool(cfg.workers)?;
    let results: Vec<ChunkResult> =
        pool.install(|| chunks.into_par_iter().map(|r| run_chunk(graph, s, cfg, &lengths, tracked, r)).collect());
    let beta = graph.betti();
    let mut direct = Channel::new(beta);
    let mut edges = vec![Channel::new(beta); tracked.len()];
    let mut discards = DiscardStats::default();
    for r in &results {
        direct.merge(&r.direct);
        for (a, b) in edges.iter_mut().zip(&r.edges) {
            a.merge(b);
        }
        discards.merge(&r.discards);
    }
    log::debug!("sampled {} points, discard fraction {:.3e}", cfg.samples, discards.fraction());
    Ok((direct, edges, discards))
}

/// Weighted surplus distribution for the configured length vector.
pub fn estimate_distribution(graph: &Graph, s: &ScatteringMatrix, cfg: &SamplerConfig) -> Result<SurplusDistribution> {
    let (direct, _, discards) = run(graph, s, cfg, &[])?;
    SurplusDistribution::from_channel(&direct, cfg.samples, discards)
}

/// Per-edge distributions `W_e` for the orbit representatives, or for every
/// edge when `all_edges` is set, all from one sample stream.
pub fn estimate_edge_distributions(
    graph: &Graph,
    s: &ScatteringMatrix,
    cfg: &SamplerConfig,
    orbits: &EdgeOrbitPartition,
    all_edges: bool,
) -> Result<EdgeDistributionSet> {
    if !orbits.is_partition_of(graph.edge_count()) {
        return Err(Error::InvalidParameters("orbit partition does not cover the edges".into()));
    }
    let mut edges: Vec<usize> = if all_edges { (0..graph.edge_count()).collect() } else { orbits.representatives() };
    edges.sort_unstable();
    let (direct, chans, discards) = run(graph, s, cfg, &edges)?;
    let per_edge = chans
        .iter()
        .map(|ch| SurplusDistribution::from_channel(ch, cfg.samples, discards))
        .collect::<Result<Vec<_>>>()?;
    Ok(EdgeDistributionSet {
        beta: graph.betti(),
        orbits: orbits.clone(),
        edges,
        per_edge,
        c: (0..graph.edge_count()).map(|j| if graph.is_loop(j) { 1 } else { 2 }).collect(),
        direct: SurplusDistribution::from_channel(&direct, cfg.samples, discards)?,
        n_samples: cfg.samples,
    })
}

/// Upper bound on the distance to normality and the variance sandwich.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConjectureBounds {
    pub ks_upper: f64,
    pub ks_max_edge: f64,
    pub var_min: f64,
    pub var_max: f64,
    pub epsilon: f64,
}

/// `max_e d_KS(w_e) + epsilon` with `epsilon = sqrt(var_max / var_min) - 1`.
pub fn conjecture_bounds(set: &EdgeDistributionSet) -> Result<ConjectureBounds> {
    if set.per_edge.is_empty() {
        return Err(Error::InvalidParameters("no edge distributions".into()));
    }
    let mut ks_max_edge: f64 = 0.0;
    let (mut var_min, mut var_max) = (f64::INFINITY, 0.0f64);
    for d in &set.per_edge {
        if !(d.variance > 0.0) {
            return Err(Error::ZeroVariance);
        }
        ks_max_edge = ks_max_edge.max(d.ks_to_gaussian()?);
        var_min = var_min.min(d.variance);
        var_max = var_max.max(d.variance);
    }
    let epsilon = (var_max / var_min).sqrt() - 1.0;
    Ok(ConjectureBounds { ks_upper: ks_max_edge + epsilon, ks_max_edge, var_min, var_max, epsilon })
}

/// Agreement between the Hessian index and a closed-form surplus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Agreement {
    pub accepted: u64,
    pub agree: u64,
    pub discards: DiscardStats,
}

impl Agreement {
    pub fn rate(&self) -> f64 {
        if self.accepted == 0 {
            0.0
        } else {
            self.agree as f64 / self.accepted as f64
        }
    }
}

/// Evaluates `closed_form` at the on-manifold point `kappa - theta_n` of every
/// accepted eigenpair and compares it with the positive index of `H_n`.
pub fn pointwise_agreement<F>(graph: &Graph, s: &ScatteringMatrix, cfg: &SamplerConfig, closed_form: F) -> Result<Agreement>
where
    F: Fn(&[f64]) -> usize + Sync,
{
    cfg.validate()?;
    let e = graph.edge_count();
    let pool = thread_pool(cfg.workers)?;
    let per_sample: Vec<(u64, u64, DiscardStats)> = pool.install(|| (0..cfg.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut d = DiscardStats::default();
            let kappa = sample_kappa(cfg.master_seed, i, e);
            let Ok(smp) = secular_sample(s, graph, &kappa, &cfg.tolerances) else {
                d.failed_samples += 1;
                return (0, 0, d);
            };
            let (mut acc, mut ok) = (0, 0);
            for n in (0..smp.dim()).filter(|&n| !smp.antisymmetric[n]) {
                d.pairs += 1;
                let h = match hessian(&smp, n, &cfg.tolerances).and_then(|h| {
                    h.check_kernel(e - graph.betti(), &cfg.tolerances)?;
                    Ok(h)
                }) {
                    Ok(h) => h,
                    Err(x) => {
                        d.record(x);
                        continue;
                    }
                };
                acc += 1;
                if surplus_index(&h) == closed_form(&smp.on_manifold_point(n)) {
                    ok += 1;
                }
            }
            (acc, ok, d)
        })
        .collect());
    let mut out = Agreement { accepted: 0, agree: 0, discards: DiscardStats::default() };
    for (a, g, d) in &per_sample {
        out.accepted += a;
        out.agree += g;
        out.discards.merge(d);
    }
    Ok(out)
}
