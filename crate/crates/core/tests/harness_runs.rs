//! Correlation, ablation and oracle drivers on small networks.

use swapnas::engine::{BatchKind, BatchSpec, InputBatch, NormMode};
use swapnas::harness::correlate::score_with_seed;
use swapnas::harness::{
    ablate_batch_size, ablate_input_dims, correlate_metrics, oracle_check, oracle_check_with, AblationConfig,
    EvalConfig, GroundTruthRow, GroundTruthTable, Metric, MetricOutcome, OracleConfig, Scorers,
};
use swapnas::netgraph::{random_genome_with, SpaceConfig, SpaceId};
use swapnas::swap::{swap_score, RegularisationParams};
use swapnas::{encode, ActivationRecord, Genome};

fn tiny_space() -> SpaceConfig {
    SpaceConfig::new(SpaceId::Nb201).with_shape(2, 1)
}

fn tiny_genomes(n: usize) -> Vec<Genome> {
    (0..n as u64).map(|i| random_genome_with(&tiny_space(), 1000 + i)).collect()
}

fn small_batch() -> BatchSpec {
    BatchSpec::noise(12, 8, 8, 0)
}

/// Average-rank Spearman, written independently of the library.
fn reference_spearman(xs: &[f64], ys: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..v.len() {
            let less = v.iter().filter(|&&x| x < v[i]).count() as f64;
            let equal = v.iter().filter(|&&x| x == v[i]).count() as f64;
            out[i] = less + (equal + 1.0) / 2.0;
        }
        out
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Ground truth whose accuracy is a fixed function of the seed-`seed` SWAP
/// score plus a small per-row offset, so the expected ranks are known.
fn table_from_scores(genomes: &[Genome], seed: u64) -> (GroundTruthTable, Vec<f64>) {
    let mut psis = Vec::new();
    let rows = genomes
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let r = score_with_seed(g, &small_batch(), seed, &RegularisationParams::off(), NormMode::BatchStats)
                .unwrap();
            psis.push(r.swap as f64);
            GroundTruthRow {
                arch_id: format!("a{i:03}"),
                encoding: encode(g),
                accuracy: 50.0 + r.swap as f64 + 1e-3 * i as f64,
            }
        })
        .collect();
    (GroundTruthTable::new(rows).unwrap(), psis)
}

#[test]
fn correlation_matches_reference_spearman() {
    let genomes = tiny_genomes(16);
    let (table, psis) = table_from_scores(&genomes, 7);
    let distinct: std::collections::BTreeSet<u64> = psis.iter().map(|p| *p as u64).collect();
    assert!(distinct.len() >= 3, "test nets need varied scores: {distinct:?}");

    let run = correlate_metrics(&table, &EvalConfig::new(small_batch(), vec![7])).unwrap();
    let acc: Vec<f64> = table.rows.iter().map(|r| r.accuracy).collect();
    let MetricOutcome::Defined(swap) = run.outcome(Metric::Swap).unwrap() else { panic!("swap undefined") };
    assert!((swap.per_seed[0] - reference_spearman(&psis, &acc)).abs() < 1e-12);
    assert!(swap.per_seed[0] > 0.9);

    let params: Vec<f64> = run.scores.iter().map(|r| r.report.params_m).collect();
    let acc_sorted: Vec<f64> = run.scores.iter().map(|r| r.accuracy).collect();
    let MetricOutcome::Defined(p) = run.outcome(Metric::Params).unwrap() else { panic!("params undefined") };
    assert!((p.per_seed[0] - reference_spearman(&params, &acc_sorted)).abs() < 1e-12);
}

#[test]
fn row_order_does_not_matter() {
    let genomes = tiny_genomes(10);
    let (table, _) = table_from_scores(&genomes, 1);
    let mut shuffled = table.clone();
    shuffled.rows.reverse();
    shuffled.rows.swap(0, 4);
    let cfg = EvalConfig::new(small_batch(), vec![1, 2]);
    let a = correlate_metrics(&table, &cfg).unwrap();
    let b = correlate_metrics(&shuffled, &cfg).unwrap();
    assert_eq!(a.outcomes, b.outcomes);
    assert_eq!(a.scores, b.scores);
}

#[test]
fn five_seed_reports_carry_per_seed_values_and_standard_error() {
    let genomes = tiny_genomes(8);
    let (table, _) = table_from_scores(&genomes, 0);
    let seeds = vec![0, 1, 2, 3, 4];
    let run = correlate_metrics(&table, &EvalConfig::new(small_batch(), seeds.clone())).unwrap();
    assert_eq!(run.scores.len(), 8 * 5);
    let MetricOutcome::Defined(r) = run.outcome(Metric::Params).unwrap() else { panic!("params undefined") };
    assert_eq!(r.seeds, seeds);
    assert_eq!(r.per_seed.len(), 5);
    assert_eq!(r.n, 8);
    let mean = r.per_seed.iter().sum::<f64>() / 5.0;
    let sd = (r.per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0).sqrt();
    assert!((r.mean_over_seeds - mean).abs() < 1e-12);
    assert!((r.std_err - sd / 5f64.sqrt()).abs() < 1e-12);
    // Parameter counts do not depend on the seed.
    assert!(r.per_seed.iter().all(|&x| x == r.per_seed[0]));
}

#[test]
fn constant_accuracy_gives_undefined_outcomes() {
    let rows = tiny_genomes(5)
        .iter()
        .enumerate()
        .map(|(i, g)| GroundTruthRow {
            arch_id: format!("x{i}"),
            encoding: encode(g),
            accuracy: 70.0,
        })
        .collect();
    let table = GroundTruthTable::new(rows).unwrap();
    let run = correlate_metrics(&table, &EvalConfig::new(small_batch(), vec![0])).unwrap();
    for o in &run.outcomes {
        match o {
            MetricOutcome::Undefined { reason, .. } => assert!(reason.contains("undefined correlation")),
            MetricOutcome::Defined(r) => panic!("{:?} should be undefined", r.metric),
        }
    }
}

#[test]
fn undecodable_rows_are_skipped_and_tables_round_trip() {
    let mut rows: Vec<GroundTruthRow> = tiny_genomes(4)
        .iter()
        .enumerate()
        .map(|(i, g)| GroundTruthRow {
            arch_id: format!("r{i}"),
            encoding: encode(g),
            accuracy: i as f64,
        })
        .collect();
    rows.push(GroundTruthRow {
        arch_id: "broken".into(),
        encoding: "space=NB201;C=2".into(),
        accuracy: 1.0,
    });
    let table = GroundTruthTable::new(rows).unwrap();
    let mut csv = Vec::new();
    table.write(&mut csv).unwrap();
    let back = GroundTruthTable::from_reader(csv.as_slice()).unwrap();
    assert_eq!(back, table);

    let run = correlate_metrics(&table, &EvalConfig::new(small_batch(), vec![0])).unwrap();
    assert_eq!(run.skipped.len(), 1);
    assert_eq!(run.skipped[0].arch_id, "broken");
    assert_eq!(run.scores.len(), 4);

    let dup = "arch_id,encoding,accuracy\na,x,1\na,y,2\n";
    assert!(GroundTruthTable::from_reader(dup.as_bytes()).is_err());
}

fn ablation(n: usize) -> AblationConfig {
    let mut eval = EvalConfig::new(BatchSpec::noise(8, 8, 8, 0), vec![0, 1]);
    eval.norm = NormMode::Identity;
    AblationConfig::new(tiny_space(), n, eval)
}

#[test]
fn batch_size_ablation_shapes_and_monotone_means() {
    let cfg = ablation(6);
    let single = ablate_batch_size(&cfg, &[8]).unwrap();
    assert_eq!(single.summary_for("swap").len(), 1);
    assert_eq!(single.summary_for("swap")[0].count, 6 * 2);

    let t = ablate_batch_size(&cfg, &[2, 4, 8, 16]).unwrap();
    let swap = t.summary_for("swap");
    let settings: Vec<&str> = swap.iter().map(|r| r.setting.as_str()).collect();
    assert_eq!(settings, ["2", "4", "8", "16"]);
    // Prefix batches and no batch statistics: every net's count can only grow.
    assert!(swap.windows(2).all(|w| w[0].mean <= w[1].mean));
    for r in t.summary_for("standard") {
        assert!(r.mean <= r.setting.parse::<f64>().unwrap());
    }
    assert_eq!(t.long.len(), 4 * 6 * 2 * 3);
    assert!(ablate_batch_size(&cfg, &[]).is_err());
    assert!(ablate_batch_size(&cfg, &[0]).is_err());
}

#[test]
fn input_dimension_ablation_grows_with_resolution() {
    let cfg = ablation(4);
    let t = ablate_input_dims(&cfg, &[(3, 3), (32, 32)], BatchKind::GaussianNoise).unwrap();
    let sites = t.summary_for("sites");
    assert_eq!(sites[0].setting, "3x3x3");
    assert_eq!(sites[1].setting, "3x32x32");
    assert!(sites[1].mean > sites[0].mean);
}

#[test]
fn image_crops_larger_than_the_source_fail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("batch.bin");
    let (s, c, h, w) = (8, 3, 12, 12);
    let data: Vec<f32> = (0..s * c * h * w).map(|i| ((i * 37) % 101) as f32 / 50.0 - 1.0).collect();
    InputBatch::images(s, c, h, w, data).unwrap().write_image_file(&path).unwrap();

    let mut cfg = ablation(2);
    cfg.eval.batch = BatchSpec {
        kind: BatchKind::Image,
        path: Some(path),
        ..BatchSpec::noise(8, 12, 12, 0)
    };
    let ok = ablate_input_dims(&cfg, &[(4, 4), (12, 12)], BatchKind::Image).unwrap();
    assert_eq!(ok.summary_for("swap").len(), 2);
    assert!(ablate_input_dims(&cfg, &[(16, 16)], BatchKind::Image).is_err());
}

#[test]
fn oracle_passes_and_catches_a_broken_scorer() {
    let cfg = OracleConfig::new(SpaceId::Nb201, 6, 2000);
    let good = oracle_check(&cfg).unwrap();
    assert!(good.passed && !good.vacuous);
    assert_eq!(good.nets, 6);
    assert!(good.mismatches.is_empty());

    // Drops one pattern whenever more than one exists.
    let off_by_one = |a: &ActivationRecord| {
        let n = swap_score(a).map(|p| p.distinct_count).unwrap_or(0);
        if n > 1 {
            n - 1
        } else {
            n
        }
    };
    let broken = Scorers {
        swap: &off_by_one,
        ..Scorers::default()
    };
    let bad = oracle_check_with(&cfg, &broken).unwrap();
    assert!(!bad.passed);
    assert!(!bad.mismatches.is_empty());
    assert!(bad.mismatches.iter().all(|m| m.metric == "swap" && m.fast + 1 == m.naive));

    let vacuous = oracle_check(&OracleConfig::new(SpaceId::Nb201, 3, 0)).unwrap();
    assert!(vacuous.vacuous && vacuous.passed && !vacuous.warnings.is_empty());
}
