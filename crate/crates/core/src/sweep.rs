//! Sweeps over graph families: orbit detection, per-edge sampling and the
//! distance-to-normal and variance summaries for each graph, plus the plain
//! CSV tables behind the two summary figures.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{generate, Family};
use crate::orbits::edge_orbits;
use crate::quantum::{build_scattering, Tolerances};
use crate::sampler::{conjecture_bounds, estimate_edge_distributions, SamplerConfig};

/// Sampling settings shared by every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Eigenpair budget per graph; a graph with `E` edges gets
    /// `budget / (2E)` torus samples.
    pub budget: usize,
    pub max_samples: usize,
    pub seed: u64,
    pub workers: usize,
    pub tolerances: Tolerances,
}

impl SweepSettings {
    pub fn samples_for(&self, edge_count: usize) -> usize {
        SamplerConfig::default_samples(edge_count, self.budget).min(self.max_samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Desk,
    Paper,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::InvalidParameters(format!("unknown preset {other:?} (expected desk or paper)"))),
        }
    }
}

/// Seed used for the random regular graphs of the presets.
pub const REGULAR_SEED: u64 = 1;
/// Seed used for the Erdos-Renyi graphs of the presets.
pub const ER_SEED: u64 = 3;

/// Graph list and settings of a preset.
///
/// Both presets spend `10^6` eigenpairs per graph. `desk` keeps nine graphs
/// with `beta <= 21` and at most `10^5` samples each; `paper` is the 26-graph
/// suite without the sample cap.
pub fn preset(p: Preset) -> (Vec<Family>, SweepSettings) {
    let tolerances = Tolerances::default();
    match p {
        Preset::Desk => {
            let rows = vec![
                Family::Complete { n: 5 },
                Family::Ladder { n: 6 },
                Family::Complete { n: 6 },
                Family::Ladder { n: 10 },
                Family::Complete { n: 7 },
                Family::Lattice { n: 4 },
                Family::Regular { d: 5, n: 12, seed: REGULAR_SEED },
                Family::ErdosRenyi { n: 9, p: 0.75, seed: ER_SEED },
                Family::Complete { n: 8 },
            ];
            (rows, SweepSettings { budget: 1_000_000, max_samples: 100_000, seed: 1, workers: 1, tolerances })
        }
        Preset::Paper => {
            let mut rows: Vec<Family> = (5..=12).map(|n| Family::Complete { n }).collect();
            rows.extend([6, 10, 14, 18, 22].map(|n| Family::Ladder { n }));
            rows.extend([4, 5, 6, 7].map(|n| Family::Lattice { n }));
            rows.extend([12, 14, 16, 18, 20].map(|n| Family::Regular { d: 5, n, seed: REGULAR_SEED }));
            rows.extend([9, 10, 11, 12].map(|n| Family::ErdosRenyi { n, p: 0.75, seed: ER_SEED }));
            (rows, SweepSettings { budget: 1_000_000, max_samples: 1_000_000, seed: 1, workers: 1, tolerances })
        }
    }
}

/// Variance and distance to normal of one orbit's `W_e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitVariance {
    pub representative: usize,
    pub size: usize,
    pub variance: f64,
    pub variance_se: f64,
    pub ks: f64,
    /// Largest `|P(s) - P(beta - s)|` in standard errors.
    pub mirror_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub family: String,
    pub params: String,
    pub beta: usize,
    pub edges: usize,
    pub vertices: usize,
    pub ks_upper: f64,
    pub ks_max_edge: f64,
    pub epsilon: f64,
    pub var_min: f64,
    pub var_max: f64,
    pub orbits: Vec<OrbitVariance>,
    /// Representative with the largest KS distance and its distribution.
    pub worst_edge: usize,
    pub worst_probs: Vec<f64>,
    pub discard_fraction: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub graph_hash: String,
    pub runtime_s: f64,
}

impl SweepRecord {
    /// Equality of everything except the wall time.
    pub fn same_data(&self, other: &SweepRecord) -> bool {
        let mut a = self.clone();
        a.runtime_s = other.runtime_s;
        &a == other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub family: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub settings: SweepSettings,
    pub records: Vec<SweepRecord>,
    pub failures: Vec<SweepFailure>,
}

/// Runs one row.
pub fn sweep_row(family: &Family, settings: &SweepSettings) -> Result<SweepRecord> {
    let start = Instant::now();
    let g = generate(family)?;
    let orbits = edge_orbits(&g)?;
    let s = build_scattering(&g);
    let n = settings.samples_for(g.edge_count());
    let cfg = SamplerConfig {
        samples: n,
        master_seed: settings.seed,
        weights: crate::sampler::Weights::Uniform,
        tolerances: settings.tolerances,
        workers: settings.workers,
    };
    let set = estimate_edge_distributions(&g, &s, &cfg, &orbits, false)?;
    let bounds = conjecture_bounds(&set)?;
    let mut orbit_rows = Vec::with_capacity(set.edges.len());
    for (&e, d) in set.edges.iter().zip(&set.per_edge) {
        let size = orbits.orbits.iter().find(|o| o.contains(&e)).map_or(1, Vec::len);
        orbit_rows.push(OrbitVariance { representative: e, size, variance: d.variance, variance_se: d.variance_std_error, ks: d.ks_to_gaussian()?, mirror_z: d.mirror_z() });
    }
    let worst = orbit_rows.iter().enumerate().max_by(|a, b| a.1.ks.total_cmp(&b.1.ks)).map(|(i, _)| i).expect("at least one orbit");
    log::info!("{family}: beta {} ks_upper {:.4} in {:.1}s", g.betti(), bounds.ks_upper, start.elapsed().as_secs_f64());
    Ok(SweepRecord {
        family: family.name().to_string(),
        params: family.to_string(),
        beta: g.betti(),
        edges: g.edge_count(),
        vertices: g.vertex_count(),
        ks_upper: bounds.ks_upper,
        ks_max_edge: bounds.ks_max_edge,
        epsilon: bounds.epsilon,
        var_min: bounds.var_min,
        var_max: bounds.var_max,
        worst_edge: orbit_rows[worst].representative,
        worst_probs: set.per_edge[worst].probs.clone(),
        orbits: orbit_rows,
        discard_fraction: set.direct.discard_fraction(),
        n_samples: n,
        seed: settings.seed,
        graph_hash: g.hash(),
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Runs every row; failures are recorded and the sweep continues.
pub fn build_sweep(rows: &[Family], settings: &SweepSettings) -> SweepTable {
    let results: Vec<Result<SweepRecord>> = rows.par_iter().map(|f| sweep_row(f, settings)).collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (f, r) in rows.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("{f}: {e}");
                failures.push(SweepFailure { family: f.to_string(), error: e.to_string() });
            }
        }
    }
    SweepTable { settings: settings.clone(), records, failures }
}

/// Outcome of the variance sandwich `beta/10 <= var <= beta/5` and
/// `var < beta/4` on every orbit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub pass: bool,
    /// `(params, representative, variance, se, beta)` of each failing orbit.
    pub violations: Vec<(String, usize, f64, f64, usize)>,
}

/// The band edges are widened by `z` standard errors; the `beta/4` ceiling
/// must hold with the same margin on the other side.
pub fn variance_band(records: &[SweepRecord], z: f64) -> BandReport {
    let mut violations = Vec::new();
    for r in records {
        let b = r.beta as f64;
        for o in &r.orbits {
            let m = z * o.variance_se;
            let inside = o.variance + m >= b / 10.0 && o.variance - m <= b / 5.0 && o.variance + m < b / 4.0;
            if !inside {
                violations.push((r.params.clone(), o.representative, o.variance, o.variance_se, r.beta));
            }
        }
    }
    BandReport { pass: violations.is_empty(), violations }
}

/// `ks_upper` against `beta`, with rows of equal `beta` averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub points: Vec<(usize, f64)>,
    /// Consecutive points where `ks_upper` increases.
    pub inversions: usize,
}

pub fn ks_trend(records: &[SweepRecord]) -> TrendReport {
    let mut by_beta: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
    for r in records {
        let e = by_beta.entry(r.beta).or_insert((0.0, 0));
        e.0 += r.ks_upper;
        e.1 += 1;
    }
    let points: Vec<(usize, f64)> = by_beta.into_iter().map(|(b, (s, c))| (b, s / c as f64)).collect();
    let inversions = points.windows(2).filter(|w| w[1].1 > w[0].1).count();
    TrendReport { points, inversions }
}

#[derive(Serialize)]
struct TableRow<'a> {
    family: &'a str,
    params: &'a str,
    beta: usize,
    edges: usize,
    vertices: usize,
    orbits: usize,
    ks_upper: f64,
    ks_max_edge: f64,
    epsilon: f64,
    var_min: f64,
    var_max: f64,
    discard_fraction: f64,
    n_samples: usize,
    seed: u64,
    graph_hash: &'a str,
}

#[derive(Serialize)]
struct KsRow<'a> {
    family: &'a str,
    params: &'a str,
    beta: usize,
    ks_upper: f64,
    ks_max_edge: f64,
    epsilon: f64,
}

#[derive(Serialize)]
struct VarianceRow<'a> {
    family: &'a str,
    params: &'a str,
    beta: usize,
    representative: usize,
    orbit_size: usize,
    variance: f64,
    variance_se: f64,
    beta_over_10: f64,
    beta_over_5: f64,
}

#[derive(Serialize)]
struct NormalizedRow<'a> {
    family: &'a str,
    params: &'a str,
    beta: usize,
    edge: usize,
    s: usize,
    x: f64,
    w: f64,
    sqrt_beta_w: f64,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes the per-graph summary table. Wall times are left out so the file
/// is reproducible byte for byte.
pub fn write_table(table: &SweepTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in &table.records {
        w.serialize(TableRow {
            family: &r.family,
            params: &r.params,
            beta: r.beta,
            edges: r.edges,
            vertices: r.vertices,
            orbits: r.orbits.len(),
            ks_upper: r.ks_upper,
            ks_max_edge: r.ks_max_edge,
            epsilon: r.epsilon,
            var_min: r.var_min,
            var_max: r.var_max,
            discard_fraction: r.discard_fraction,
            n_samples: r.n_samples,
            seed: r.seed,
            graph_hash: &r.graph_hash,
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `ks.csv` (beta against the distance bound), `variances.csv`
/// (beta against every orbit variance) and `normalized.csv` (the worst
/// edge's weights against `(s - beta/2)/sqrt(beta)`).
pub fn write_figures(table: &SweepTable, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut ks = csv::Writer::from_path(dir.join("ks.csv")).map_err(csv_err)?;
    let mut var = csv::Writer::from_path(dir.join("variances.csv")).map_err(csv_err)?;
    let mut norm = csv::Writer::from_path(dir.join("normalized.csv")).map_err(csv_err)?;
    for r in &table.records {
        let b = r.beta as f64;
        ks.serialize(KsRow { family: &r.family, params: &r.params, beta: r.beta, ks_upper: r.ks_upper, ks_max_edge: r.ks_max_edge, epsilon: r.epsilon })
            .map_err(csv_err)?;
        for o in &r.orbits {
            var.serialize(VarianceRow {
                family: &r.family,
                params: &r.params,
                beta: r.beta,
                representative: o.representative,
                orbit_size: o.size,
                variance: o.variance,
                variance_se: o.variance_se,
                beta_over_10: b / 10.0,
                beta_over_5: b / 5.0,
            })
            .map_err(csv_err)?;
        }
        for (s, &w) in r.worst_probs.iter().enumerate() {
            norm.serialize(NormalizedRow {
                family: &r.family,
                params: &r.params,
                beta: r.beta,
                edge: r.worst_edge,
                s,
                x: (s as f64 - b / 2.0) / b.sqrt(),
                w,
                sqrt_beta_w: b.sqrt() * w,
            })
            .map_err(csv_err)?;
        }
    }
    ks.flush()?;
    var.flush()?;
    norm.flush()?;
    Ok(())
}
