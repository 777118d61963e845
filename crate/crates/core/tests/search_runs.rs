//! End-to-end runs of the evolutionary search on small cell networks.

use swapnas::engine::BatchSpec;
use swapnas::netgraph::{SpaceConfig, SpaceId};
use swapnas::search::{run_search, SearchConfig, SearchOutcome};
use swapnas::swap::{RegMode, RegularisationParams};
use swapnas::{decode, encode};

fn small(space: SpaceId, seed: u64) -> SearchConfig {
    let mut cfg = SearchConfig::new(space);
    cfg.space = SpaceConfig::new(space).with_shape(4, 1);
    cfg.population_size = 6;
    cfg.cycles = 8;
    cfg.mutation_times = 3;
    cfg.master_seed = seed;
    cfg.batch = BatchSpec::noise(6, 16, 16, seed);
    cfg
}

fn in_pool(threads: usize, cfg: &SearchConfig) -> SearchOutcome {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| run_search(cfg).unwrap())
}

#[test]
fn identical_configs_give_identical_histories() {
    for space in [SpaceId::Nb201, SpaceId::DartsLite] {
        let cfg = small(space, 3);
        let a = run_search(&cfg).unwrap();
        let b = run_search(&cfg).unwrap();
        assert_eq!(encode(&a.best), encode(&b.best));
        assert_eq!(a.state.history, b.state.history);
        assert_eq!(a.state.cycles, b.state.cycles);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = small(SpaceId::Nb201, 21);
    let one = in_pool(1, &cfg);
    let four = in_pool(4, &cfg);
    assert_eq!(one.state.history, four.state.history);
    assert_eq!(encode(&one.best), encode(&four.best));
}

#[test]
fn history_and_cycle_summaries_are_consistent() {
    let cfg = small(SpaceId::Nb201, 8);
    let out = run_search(&cfg).unwrap();
    let st = &out.state;
    // One summary for the initial population, then one per cycle.
    assert_eq!(st.cycles.len(), cfg.cycles + 1);
    assert_eq!(st.cycles[0].cycle, 0);
    assert_eq!(st.history.iter().filter(|h| h.cycle == 0).count(), cfg.population_size);
    let mut best = st.cycles[0].best_score;
    for (i, c) in st.cycles.iter().enumerate().skip(1) {
        let cycle = i;
        assert_eq!(c.cycle, cycle);
        assert_eq!(c.population_size, cfg.population_size);
        let children: Vec<_> = st.history.iter().filter(|h| h.cycle == cycle).collect();
        assert_eq!(children.len() + c.skipped_children, cfg.mutation_times);
        let accepted = children.iter().filter(|h| h.accepted).count();
        assert_eq!(accepted, usize::from(!children.is_empty()));
        if let Some(winner) = children.iter().find(|h| h.accepted) {
            assert!(children.iter().all(|h| h.score <= winner.score));
        }
        assert!(c.best_score >= best);
        best = c.best_score;
    }
    for h in &st.history {
        let g = decode(&h.report.genome).unwrap();
        assert_eq!(g.space(), SpaceId::Nb201);
        assert!(h.score.is_finite());
        // Regulariser off: the search score is the raw count.
        assert_eq!(h.score, h.report.swap as f64);
    }
    let best_in_history = st.history.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.report.reg_swap, best_in_history);
}

#[test]
fn adaptive_mode_tracks_history_mean_and_std() {
    let mut cfg = small(SpaceId::DartsLite, 5);
    cfg.reg = RegularisationParams::new(1.0, 1.0, RegMode::Adaptive).unwrap();
    let out = run_search(&cfg).unwrap();
    let thetas: Vec<f64> = out.state.history.iter().map(|h| h.report.params_m).collect();
    let n = thetas.len() as f64;
    let mean = thetas.iter().sum::<f64>() / n;
    let std = (thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let last = out.state.cycles.last().unwrap();
    assert!((last.mu - mean).abs() < 1e-9, "{} vs {mean}", last.mu);
    assert!((last.sigma - std.max(1e-3)).abs() < 1e-9, "{} vs {std}", last.sigma);
    // Each child was scored with the parameters in force when its cycle began.
    for h in out.state.history.iter().filter(|h| h.cycle > 0) {
        assert!(h.report.f_theta > 0.0 && h.report.f_theta <= 1.0);
        let expected = h.report.swap as f64 * (-(h.report.params_m - h.mu).powi(2) / h.sigma).exp();
        assert!((h.score - expected).abs() <= 1e-9 * expected.max(1.0));
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small(SpaceId::Nb201, 0);
    cfg.population_size = 1;
    assert!(run_search(&cfg).is_err());
    let mut cfg = small(SpaceId::Nb201, 0);
    cfg.tournament_size = Some(99);
    assert!(run_search(&cfg).is_err());
    let mut cfg = small(SpaceId::Nb201, 0);
    cfg.crossover_prob = 1.5;
    assert!(run_search(&cfg).is_err());
}
