use nsl_core::quantum::build_scattering;
use nsl_core::sampler::{conjecture_bounds, Weights};
use nsl_core::stats::{self, binomial_law, total_variation};
use nsl_core::{edge_orbits, estimate_distribution, estimate_edge_distributions, generate, Family, Graph, MetricGraph, SamplerConfig};

fn family(words: &[&str]) -> Graph {
    generate(&Family::parse(words, 0).unwrap()).unwrap()
}

#[test]
fn graph_json_round_trip_keeps_hash() {
    let g = family(&["ladder", "4"]);
    let back = Graph::from_json(&g.to_json()).unwrap();
    assert_eq!(back, g);
    assert_eq!(back.hash(), g.hash());
    assert_eq!(g.betti(), 5);
}

#[test]
fn flower_sits_in_the_stower_window() {
    let g = family(&["flower", "3"]);
    let d = estimate_distribution(&g, &build_scattering(&g), &SamplerConfig::new(6000, 9)).unwrap();
    let report = stats::stower_window_check(&d.probs, 3, d.bernstein_delta_at(0.99)).unwrap();
    assert!(report.pass, "{:?}", d.probs);
    assert!(d.mirror_z() < 4.0);
}

#[test]
fn dumbbell_matches_binomial_law() {
    let g = family(&["dumbbell"]);
    let d = estimate_distribution(&g, &build_scattering(&g), &SamplerConfig::new(6000, 9)).unwrap();
    assert!(total_variation(&d.probs, &binomial_law(2).pmf) < 0.03, "{:?}", d.probs);
}

#[test]
fn per_edge_estimates_bracket_the_direct_estimate() {
    let g = family(&["stower", "2", "2"]);
    let orbits = edge_orbits(&g).unwrap();
    let s = build_scattering(&g);
    let cfg = SamplerConfig::new(1500, 4);
    let set = estimate_edge_distributions(&g, &s, &cfg, &orbits, true).unwrap();
    let rebuilt = set.reconstruct(&vec![1.0; g.edge_count()]);
    assert!(total_variation(&rebuilt, &set.direct.probs) < 1e-12);
    let bounds = conjecture_bounds(&set).unwrap();
    assert!(bounds.ks_upper >= 0.0 && bounds.ks_upper <= 1.0);
}

#[test]
fn oracle_and_sampler_agree_with_lengths() {
    let g = family(&["dumbbell"]);
    let mg = MetricGraph::with_random_lengths(g.clone(), 5).unwrap();
    let seq = nsl_core::oracle::surplus_sequence_modes(&mg, 400).unwrap();
    assert_eq!(seq.bound_violations, 0);
    let mut cfg = SamplerConfig::new(8000, 5);
    cfg.weights = Weights::Lengths(mg.lengths.clone());
    let d = estimate_distribution(&g, &build_scattering(&g), &cfg).unwrap();
    assert!(total_variation(&seq.distribution, &d.probs) < 0.06);
}
