use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

use nsl_core::oracle::{self, MetricGraph, ModeRecord, Nongeneric};
use nsl_core::quantum::build_scattering;
use nsl_core::sampler::{
    conjecture_bounds, estimate_distribution, estimate_edge_distributions, ConjectureBounds, SamplerConfig,
    SurplusDistribution, Weights,
};
use nsl_core::sweep::{self, Preset};
use nsl_core::{edge_orbits, Error, Family, Graph};

use crate::output::{emit, to_json, Document, RunManifest};
use crate::{CompareArgs, GenerateArgs, OracleArgs, OrbitsArgs, SampleArgs, SweepArgs};

#[derive(Serialize)]
struct Config<'a, A: Serialize> {
    threads: usize,
    #[serde(flatten)]
    args: &'a A,
}

fn read_graph(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Graph::from_json(&text).with_context(|| format!("parsing graph {}", path.display()))
}

fn write_doc<C: Serialize, R: Serialize>(doc: &Document<C, R>, path: Option<&Path>) -> Result<()> {
    let text = to_json(doc).map_err(Error::from)?;
    emit(&text, path).map_err(Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct GraphFile<'a, C: Serialize> {
    vertices: usize,
    edges: Vec<[usize; 2]>,
    betti: usize,
    manifest: RunManifest<&'a C>,
}

pub fn generate(args: &GenerateArgs, threads: usize) -> Result<()> {
    let start = Instant::now();
    let words: Vec<&str> = args.family.iter().map(String::as_str).collect();
    let family = Family::parse(&words, args.seed)?;
    let g = nsl_core::generate(&family)?;
    let config = Config { threads, args };
    let mut manifest = RunManifest::new("generate", &config);
    manifest.graph_hash = Some(g.hash());
    manifest.seeds.master = Some(args.seed);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let file = GraphFile {
        vertices: g.vertex_count(),
        edges: g.edges().iter().map(|&(u, v)| [u, v]).collect(),
        betti: g.betti(),
        manifest,
    };
    let text = to_json(&file).map_err(Error::from)?;
    emit(&text, args.output.as_deref()).map_err(Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct EdgeEntry {
    edge: usize,
    distribution: SurplusDistribution,
}

#[derive(Serialize)]
struct PerEdge {
    orbits: Vec<Vec<usize>>,
    edges: Vec<EdgeEntry>,
    bounds: Option<ConjectureBounds>,
    /// `max_s |sum_e l_e c_e W_e(s) / sum l c - P(s)|` on the shared stream.
    /// Exact with `--all-edges`; with orbit representatives it also carries
    /// the sampling noise between orbit members.
    reconstruction_residual: f64,
}

#[derive(Serialize)]
struct SampleResult {
    beta: usize,
    edge_count: usize,
    weights: Vec<f64>,
    distribution: SurplusDistribution,
    bernstein_delta_99: f64,
    mirror_z: f64,
    ks_to_gaussian: Option<f64>,
    per_edge: Option<PerEdge>,
}

pub fn sample(args: &SampleArgs, threads: usize) -> Result<()> {
    let start = Instant::now();
    let g = read_graph(&args.graph)?;
    let e = g.edge_count();
    let weights = if let Some(w) = &args.weights {
        if w.len() != e {
            return Err(Error::InvalidParameters(format!("--weights has {} entries but the graph has {e} edges", w.len())).into());
        }
        Weights::Lengths(w.clone())
    } else if let Some(seed) = args.lengths_seed {
        Weights::Lengths(MetricGraph::with_random_lengths(g.clone(), seed)?.lengths)
    } else {
        Weights::Uniform
    };
    let weight_vec = match &weights {
        Weights::Uniform => vec![1.0; e],
        Weights::Lengths(l) => l.clone(),
    };
    let mut cfg = SamplerConfig::new(args.samples, args.seed);
    cfg.weights = weights;
    cfg.workers = threads;
    let s = build_scattering(&g);
    let (distribution, per_edge) = if args.per_edge || args.all_edges {
        let orbits = edge_orbits(&g)?;
        let set = estimate_edge_distributions(&g, &s, &cfg, &orbits, args.all_edges)?;
        let rebuilt = set.reconstruct(&weight_vec);
        let residual = rebuilt.iter().zip(&set.direct.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let bounds = conjecture_bounds(&set).ok();
        let per_edge = PerEdge {
            orbits: set.orbits.orbits.clone(),
            edges: set.edges.iter().zip(&set.per_edge).map(|(&edge, d)| EdgeEntry { edge, distribution: d.clone() }).collect(),
            bounds,
            reconstruction_residual: residual,
        };
        (set.direct.clone(), Some(per_edge))
    } else {
        (estimate_distribution(&g, &s, &cfg)?, None)
    };
    let config = Config { threads, args };
    let mut manifest = RunManifest::new("sample", &config);
    manifest.graph_hash = Some(g.hash());
    manifest.seeds.master = Some(args.seed);
    manifest.seeds.lengths = args.lengths_seed;
    manifest.discards = Some(distribution.discards);
    let fraction = distribution.discard_fraction();
    let result = SampleResult {
        beta: g.betti(),
        edge_count: e,
        weights: weight_vec,
        bernstein_delta_99: distribution.bernstein_delta_at(0.99),
        mirror_z: distribution.mirror_z(),
        ks_to_gaussian: distribution.ks_to_gaussian().ok(),
        distribution,
        per_edge,
    };
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    write_doc(&Document { manifest, result }, args.output.as_deref())?;
    if fraction > args.max_discard {
        return Err(Error::Numerical(format!("discard fraction {fraction:.3e} exceeds --max-discard {}", args.max_discard)).into());
    }
    Ok(())
}

/// Distribution record shaped like the sampler's.
#[derive(Serialize)]
struct OracleDistribution {
    beta: usize,
    probs: Vec<f64>,
    n_samples: usize,
    mean: f64,
    variance: f64,
}

#[derive(Serialize)]
struct OracleResult {
    beta: usize,
    lengths: Vec<f64>,
    modes: usize,
    k_max: f64,
    root_count: usize,
    generic_count: usize,
    nongeneric_multiple: usize,
    nongeneric_vertex: usize,
    nongeneric_numerical: usize,
    bound_violations: usize,
    weyl_residual: f64,
    max_vertex_residual: f64,
    distribution: OracleDistribution,
}

#[derive(Serialize)]
struct TableRow {
    n: usize,
    k: f64,
    multiplicity: usize,
    generic: bool,
    reason: &'static str,
    zero_count: Option<usize>,
    surplus: Option<i64>,
}

fn table_row(r: &ModeRecord) -> TableRow {
    TableRow {
        n: r.n,
        k: r.k,
        multiplicity: r.multiplicity,
        generic: r.generic,
        reason: match r.reason {
            None => "",
            Some(Nongeneric::Multiple) => "multiple",
            Some(Nongeneric::VertexZero) => "vertex-zero",
            Some(Nongeneric::Numerical) => "numerical",
        },
        zero_count: r.zero_count,
        surplus: r.surplus,
    }
}

pub fn oracle(args: &OracleArgs, threads: usize) -> Result<()> {
    let start = Instant::now();
    let g = read_graph(&args.graph)?;
    let mg = match &args.lengths {
        Some(l) => MetricGraph::new(g.clone(), l.clone())?,
        None => MetricGraph::with_random_lengths(g.clone(), args.lengths_seed)?,
    };
    let seq = oracle::surplus_sequence_modes(&mg, args.modes)?;
    if let Some(path) = &args.table {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        for r in &seq.records {
            w.serialize(table_row(r))?;
        }
        w.flush().map_err(Error::from)?;
    }
    let (mean, variance) = nsl_core::stats::moments(&seq.distribution);
    let result = OracleResult {
        beta: seq.beta,
        lengths: seq.lengths.clone(),
        modes: args.modes,
        k_max: seq.k_max,
        root_count: seq.root_count,
        generic_count: seq.generic_count,
        nongeneric_multiple: seq.nongeneric_multiple,
        nongeneric_vertex: seq.nongeneric_vertex,
        nongeneric_numerical: seq.nongeneric_numerical,
        bound_violations: seq.bound_violations,
        weyl_residual: seq.weyl_residual,
        max_vertex_residual: seq.max_vertex_residual,
        distribution: OracleDistribution { beta: seq.beta, probs: seq.distribution.clone(), n_samples: seq.generic_count, mean, variance },
    };
    let config = Config { threads, args };
    let mut manifest = RunManifest::new("oracle", &config);
    manifest.graph_hash = Some(g.hash());
    manifest.seeds.lengths = if args.lengths.is_some() { None } else { Some(args.lengths_seed) };
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    write_doc(&Document { manifest, result }, args.output.as_deref())?;
    if seq.bound_violations > 0 || seq.max_vertex_residual > 1e-6 {
        return Err(Error::Numerical(format!(
            "{} nodal bound violations, vertex residual {:.3e}",
            seq.bound_violations, seq.max_vertex_residual
        ))
        .into());
    }
    Ok(())
}

/// `(beta, probs)` of the distribution record in an `oracle` or `sample` output.
fn read_distribution(path: &Path) -> Result<(usize, Vec<f64>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(Error::from)?;
    let d = &doc["result"]["distribution"];
    let beta = d["beta"].as_u64().ok_or_else(|| Error::InvalidParameters(format!("{}: no distribution record", path.display())))?;
    let probs: Vec<f64> = serde_json::from_value(d["probs"].clone()).map_err(Error::from)?;
    Ok((beta as usize, probs))
}

#[derive(Serialize)]
struct CompareResult {
    beta: usize,
    oracle_probs: Vec<f64>,
    sample_probs: Vec<f64>,
    report: oracle::CompareReport,
    verdict: &'static str,
}

pub fn compare(args: &CompareArgs, threads: usize) -> Result<()> {
    let start = Instant::now();
    let (b1, p1) = read_distribution(&args.oracle)?;
    let (b2, p2) = read_distribution(&args.sample)?;
    if b1 != b2 {
        return Err(Error::BettiMismatch { left: b1, right: b2 }.into());
    }
    let report = oracle::compare(&p1, &p2, args.tolerance)?;
    let config = Config { threads, args };
    let mut manifest = RunManifest::new("compare", &config);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let verdict = if report.pass { "pass" } else { "fail" };
    write_doc(&Document { manifest, result: CompareResult { beta: b1, oracle_probs: p1, sample_probs: p2, report, verdict } }, args.output.as_deref())
}

pub fn sweep(args: &SweepArgs, threads: usize) -> Result<()> {
    let start = Instant::now();
    let preset: Preset = args.preset.parse()?;
    let (rows, mut settings) = sweep::preset(preset);
    if let Some(b) = args.budget {
        settings.budget = b;
    }
    if let Some(s) = args.seed {
        settings.seed = s;
    }
    settings.workers = threads;
    let table = sweep::build_sweep(&rows, &settings);
    if let Some(p) = &args.output {
        sweep::write_table(&table, p)?;
    }
    if let Some(dir) = &args.figures {
        sweep::write_figures(&table, dir)?;
    }
    let band = sweep::variance_band(&table.records, 3.0);
    let trend = sweep::ks_trend(&table.records);
    for r in &table.records {
        log::info!("{}: beta {} ks_upper {:.4} var [{:.3}, {:.3}]", r.params, r.beta, r.ks_upper, r.var_min, r.var_max);
    }
    #[derive(Serialize)]
    struct SweepResult<'a> {
        table: &'a sweep::SweepTable,
        variance_band: sweep::BandReport,
        ks_trend: sweep::TrendReport,
    }
    let config = Config { threads, args };
    let mut manifest = RunManifest::new("sweep", &config);
    manifest.seeds.master = Some(settings.seed);
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let doc = Document { manifest, result: SweepResult { table: &table, variance_band: band, ks_trend: trend } };
    if args.json.is_some() || args.output.is_none() {
        write_doc(&doc, args.json.as_deref())?;
    }
    if !table.failures.is_empty() {
        return Err(Error::Numerical(format!("{} sweep rows failed", table.failures.len())).into());
    }
    Ok(())
}

pub fn orbits(args: &OrbitsArgs, threads: usize) -> Result<()> {
    let start = Instant::now();
    let g = read_graph(&args.graph)?;
    let partition = edge_orbits(&g)?;
    #[derive(Serialize)]
    struct OrbitsResult {
        edge_count: usize,
        orbits: Vec<Vec<usize>>,
        representatives: Vec<usize>,
    }
    let config = Config { threads, args };
    let mut manifest = RunManifest::new("orbits", &config);
    manifest.graph_hash = Some(g.hash());
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let result = OrbitsResult { edge_count: g.edge_count(), representatives: partition.representatives(), orbits: partition.orbits };
    write_doc(&Document { manifest, result }, args.output.as_deref())
}
