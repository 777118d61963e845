//! Subcommand implementations.

use crate::config::{options, write_snapshot, ConfigFile, Dim, List, Snapshot};
use crate::{Cli, CliError, Command};
use clap::{Args, Subcommand};
use std::path::{Path, PathBuf};
use swapnas::engine::{instantiate_with, BatchKind, BatchSpec, NormMode};
use swapnas::harness::{self, AblationConfig, AblationTable, EvalConfig, GroundTruthTable, OracleConfig};
use swapnas::netgraph::{Genome, SpaceConfig, SpaceId};
use swapnas::search::{self, SearchConfig};
use swapnas::swap::{score_all, RegMode, RegularisationParams};

options!(BatchOpts {
    /// noise, image or tokens.
    batch_kind: BatchKind = "batch-kind", Some(BatchKind::GaussianNoise);
    /// Image or token batch file.
    batch_file: String = "batch-file", None;
    /// Samples per batch (S).
    samples: usize = "samples", Some(8);
    height: usize = "height", Some(32);
    width: usize = "width", Some(32);
    /// batch_stats or identity.
    norm: NormMode = "norm", Some(NormMode::BatchStats);
});

options!(SeedOpts {
    /// Weight-initialisation seed.
    init_seed: u64 = "init-seed", Some(0);
    /// Seed of generated batches.
    batch_seed: u64 = "batch-seed", Some(0);
});

options!(RegOpts {
    /// off, static or adaptive.
    reg: RegMode = "reg", Some(RegMode::Off);
    /// Target size in millions of parameters.
    mu: f64 = "mu", Some(1.0);
    /// Width of the size regulariser.
    sigma: f64 = "sigma", Some(1.0);
});

options!(SpaceOpts {
    /// NB201, DLITE or TFORM.
    space: SpaceId = "space", Some(SpaceId::Nb201);
    /// Stem channels C of cell networks.
    stem_channels: usize = "stem-channels", None;
    /// Cells per stage N of cell networks.
    stack_depth: usize = "stack-depth", None;
});

options!(GenomeOpts {
    /// Genome string to score.
    genome: String = "genome", None;
});

options!(SearchOpts {
    /// Population size P.
    population: usize = "population", Some(10);
    /// Search cycles C.
    cycles: usize = "cycles", Some(20);
    /// Tournament size (default P/2, at least 2).
    tournament: usize = "tournament", None;
    /// Children scored per cycle.
    mutation_times: usize = "mutation-times", Some(5);
    /// Probability that the parent is a crossover of the two best candidates.
    crossover_prob: f64 = "crossover-prob", Some(0.5);
    /// Master seed (default: $SWAP_SEED, else 0).
    master_seed: u64 = "master-seed", None;
});

options!(EvalOpts {
    /// CSV with columns arch_id,encoding,accuracy.
    ground_truth: String = "ground-truth", None;
    /// Evaluation seeds; each is used as init and batch seed.
    seeds: List<u64> = "seeds", Some(List(vec![0, 1, 2, 3, 4]));
});

options!(AblateOpts {
    /// Random networks to sweep when no ground truth is given.
    nets: usize = "nets", Some(50);
    /// Seed for drawing the random networks.
    net_seed: u64 = "net-seed", Some(0);
    /// Batch sizes for the batch-size sweep.
    sizes: List<usize> = "sizes", Some(List(vec![8, 16, 32, 64, 128]));
    /// Input sizes (HxW) for the input-dimension sweep.
    dims: List<Dim> = "dims", Some(List(vec![Dim(3, 3), Dim(8, 8), Dim(16, 16), Dim(24, 24), Dim(32, 32)]));
});

options!(OracleOpts {
    /// NB201, DLITE or TFORM.
    space: SpaceId = "space", Some(SpaceId::Nb201);
    nets: usize = "nets", Some(50);
    /// Largest site count V of a checked network (at most 5000).
    vcap: usize = "vcap", Some(2000);
    /// Batch sizes checked on every network.
    sizes: List<usize> = "sizes", Some(List(vec![4, 8, 16]));
    seed: u64 = "seed", Some(0);
});

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    genome: GenomeOpts,
    #[command(flatten)]
    batch: BatchOpts,
    #[command(flatten)]
    seeds: SeedOpts,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    search: SearchOpts,
    /// Shorthand for `--reg adaptive`.
    #[arg(long)]
    adaptive: bool,
    #[command(flatten)]
    space: SpaceOpts,
    #[command(flatten)]
    batch: BatchOpts,
    #[command(flatten)]
    seeds: SeedOpts,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    eval: EvalOpts,
    #[command(flatten)]
    batch: BatchOpts,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    ablate: AblateOpts,
    #[command(flatten)]
    eval: EvalOpts,
    #[command(flatten)]
    space: SpaceOpts,
    #[command(flatten)]
    batch: BatchOpts,
    #[command(flatten)]
    reg: RegOpts,
}

#[derive(Debug, Subcommand)]
pub enum AblateCommand {
    /// Sweep the number of samples per batch.
    BatchSize(AblateArgs),
    /// Sweep the spatial input size.
    InputDim(AblateArgs),
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    oracle: OracleOpts,
}

fn want<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Usage(format!("missing required option --{key}")))
}

impl BatchOpts {
    fn spec(&self, seed: u64) -> BatchSpec {
        BatchSpec {
            kind: self.batch_kind.unwrap_or(BatchKind::GaussianNoise),
            samples: self.samples.unwrap_or(8),
            height: self.height.unwrap_or(32),
            width: self.width.unwrap_or(32),
            seed,
            path: self.batch_file.as_ref().map(PathBuf::from),
        }
    }

    fn check(&self) -> Result<(), CliError> {
        let kind = self.batch_kind.unwrap_or(BatchKind::GaussianNoise);
        if kind == BatchKind::Image && self.batch_file.is_none() {
            return Err(CliError::Usage("--batch-kind image needs --batch-file".into()));
        }
        if kind == BatchKind::GaussianNoise && self.batch_file.is_some() {
            return Err(CliError::Usage("--batch-file needs --batch-kind image or tokens".into()));
        }
        if let Some(p) = &self.batch_file {
            if !Path::new(p).exists() {
                return Err(CliError::Usage(format!("batch file {p} does not exist")));
            }
        }
        if self.samples == Some(0) {
            return Err(CliError::Usage("--samples must be positive".into()));
        }
        Ok(())
    }
}

impl RegOpts {
    fn params(&self) -> Result<RegularisationParams, CliError> {
        let p = RegularisationParams {
            mu: self.mu.unwrap_or(1.0),
            sigma: self.sigma.unwrap_or(1.0),
            mode: self.reg.unwrap_or_default(),
        };
        if p.mode != RegMode::Off {
            p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        }
        Ok(p)
    }
}

impl SpaceOpts {
    /// Fills the shape defaults of the chosen space so they appear in snapshots.
    fn finish(&mut self) {
        let space = self.space.unwrap_or(SpaceId::Nb201);
        if space.is_cell() {
            let d = SpaceConfig::new(space);
            self.stem_channels.get_or_insert(d.stem_channels);
            self.stack_depth.get_or_insert(d.stack_depth);
        } else {
            self.stem_channels = None;
            self.stack_depth = None;
        }
    }

    fn config(&self) -> Result<SpaceConfig, CliError> {
        let space = self.space.unwrap_or(SpaceId::Nb201);
        let mut cfg = SpaceConfig::new(space);
        if space.is_cell() {
            let (c, n) = (
                self.stem_channels.unwrap_or(cfg.stem_channels),
                self.stack_depth.unwrap_or(cfg.stack_depth),
            );
            cfg = cfg.with_shape(c, n);
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn master_seed_from_env() -> Result<u64, CliError> {
    match std::env::var("SWAP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("SWAP_SEED=`{v}`: {e}"))),
        Err(_) => Ok(0),
    }
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::runtime)?;
    }
    let mut file = match &cli.config {
        Some(p) => ConfigFile::read(p)?,
        None => ConfigFile::default(),
    };
    let out = cli.out.clone();
    match cli.command {
        Command::Score(a) => cmd_score(a, &mut file, &out),
        Command::Search(a) => cmd_search(a, &mut file, &out),
        Command::Correlate(a) => cmd_correlate(a, &mut file, &out),
        Command::Ablate(AblateCommand::BatchSize(a)) => cmd_ablate(a, false, &mut file, &out),
        Command::Ablate(AblateCommand::InputDim(a)) => cmd_ablate(a, true, &mut file, &out),
        Command::OracleCheck(a) => cmd_oracle(a, &mut file, &out),
    }?;
    for key in file.leftover() {
        log::warn!("config key `{key}` is not used by this command");
    }
    Ok(())
}

fn cmd_score(mut a: ScoreArgs, file: &mut ConfigFile, out: &Path) -> Result<(), CliError> {
    a.genome.resolve(file)?;
    a.batch.resolve(file)?;
    a.seeds.resolve(file)?;
    a.reg.resolve(file)?;
    let text = want(&a.genome.genome, "genome")?;
    let genome: Genome = text.parse().map_err(|e| CliError::Usage(format!("{e}")))?;
    a.batch.check()?;
    let reg = a.reg.params()?;
    if reg.mode == RegMode::Adaptive {
        return Err(CliError::Usage("adaptive regularisation needs a search history; use static".into()));
    }
    let init_seed = a.seeds.init_seed.unwrap_or(0);
    let net = instantiate_with(&genome, init_seed, a.batch.norm.unwrap_or_default()).map_err(CliError::runtime)?;
    let batch = a
        .batch
        .spec(a.seeds.batch_seed.unwrap_or(0))
        .materialise(net.architecture())
        .map_err(CliError::runtime)?;
    let report = score_all(&net, &batch, &reg).map_err(CliError::runtime)?;
    let line = report.to_json_line();
    println!("{line}");

    ensure_dir(out)?;
    write_text(&out.join("score.jsonl"), &format!("{line}\n"))?;
    let mut snap = Snapshot::new();
    a.genome.snapshot(&mut snap);
    a.batch.snapshot(&mut snap);
    a.seeds.snapshot(&mut snap);
    a.reg.snapshot(&mut snap);
    write_snapshot(&out.join("score.config"), "score", &snap)
}

fn cmd_search(mut a: SearchArgs, file: &mut ConfigFile, out: &Path) -> Result<(), CliError> {
    a.search.resolve(file)?;
    a.space.resolve(file)?;
    a.batch.resolve(file)?;
    a.seeds.resolve(file)?;
    a.reg.resolve(file)?;
    if a.adaptive {
        a.reg.reg = Some(RegMode::Adaptive);
    }
    if a.search.master_seed.is_none() {
        a.search.master_seed = Some(master_seed_from_env()?);
    }
    let population = a.search.population.unwrap_or(10);
    a.search.tournament.get_or_insert((population / 2).max(2));
    a.space.finish();
    a.batch.check()?;

    let cfg = SearchConfig {
        population_size: population,
        cycles: a.search.cycles.unwrap_or(20),
        tournament_size: a.search.tournament,
        mutation_times: a.search.mutation_times.unwrap_or(5),
        crossover_prob: a.search.crossover_prob.unwrap_or(0.5),
        reg: a.reg.params()?,
        master_seed: a.search.master_seed.unwrap_or(0),
        init_seed: a.seeds.init_seed.unwrap_or(0),
        norm: a.batch.norm.unwrap_or_default(),
        batch: a.batch.spec(a.seeds.batch_seed.unwrap_or(0)),
        space: a.space.config()?,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    ensure_dir(out)?;
    let mut snap = Snapshot::new();
    a.search.snapshot(&mut snap);
    a.space.snapshot(&mut snap);
    a.batch.snapshot(&mut snap);
    a.seeds.snapshot(&mut snap);
    a.reg.snapshot(&mut snap);
    write_snapshot(&out.join("search.config"), "search", &snap)?;

    let outcome = search::run_search(&cfg).map_err(CliError::runtime)?;
    let st = &outcome.state;
    search::write_history(&out.join("history.jsonl"), &st.history).map_err(CliError::runtime)?;
    search::write_cycles(&out.join("cycles.jsonl"), &st.cycles).map_err(CliError::runtime)?;
    search::write_best(&out.join("best.txt"), &outcome.best).map_err(CliError::runtime)?;
    write_text(&out.join("best.json"), &format!("{}\n", outcome.report.to_json_line()))?;
    println!("{}", outcome.best);
    log::info!(
        "best score {} after {} cycles ({} genomes scored)",
        st.best_record().score,
        st.cycle,
        st.history.len()
    );
    Ok(())
}

fn load_table(eval: &EvalOpts) -> Result<Option<GroundTruthTable>, CliError> {
    eval.ground_truth
        .as_ref()
        .map(|p| GroundTruthTable::read(Path::new(p)).map_err(CliError::runtime))
        .transpose()
}

fn cmd_correlate(mut a: CorrelateArgs, file: &mut ConfigFile, out: &Path) -> Result<(), CliError> {
    a.eval.resolve(file)?;
    a.batch.resolve(file)?;
    a.reg.resolve(file)?;
    if a.eval.ground_truth.is_none() {
        return Err(CliError::Usage(
            "correlate needs --ground-truth <CSV> with columns arch_id,encoding,accuracy".into(),
        ));
    }
    a.batch.check()?;
    let table = load_table(&a.eval)?.expect("checked above");
    let cfg = EvalConfig {
        batch: a.batch.spec(0),
        seeds: a.eval.seeds.clone().map(|l| l.0).unwrap_or_default(),
        reg: a.reg.params()?,
        norm: a.batch.norm.unwrap_or_default(),
    };
    if cfg.reg.mode == RegMode::Adaptive {
        return Err(CliError::Usage("correlate takes --reg off or static".into()));
    }
    ensure_dir(out)?;
    let mut snap = Snapshot::new();
    a.eval.snapshot(&mut snap);
    a.batch.snapshot(&mut snap);
    a.reg.snapshot(&mut snap);
    write_snapshot(&out.join("correlate.config"), "correlate", &snap)?;

    let run = harness::correlate_metrics(&table, &cfg).map_err(CliError::runtime)?;
    harness::write_jsonl(&out.join("correlations.jsonl"), &run.outcomes).map_err(CliError::runtime)?;
    harness::write_jsonl(&out.join("scores.jsonl"), &run.scores).map_err(CliError::runtime)?;
    let long = harness::correlate::correlation_long_rows(&run.outcomes, "correlate");
    harness::write_csv(&out.join("correlations_long.csv"), &long).map_err(CliError::runtime)?;
    if !run.skipped.is_empty() {
        harness::write_jsonl(&out.join("skipped.jsonl"), &run.skipped).map_err(CliError::runtime)?;
        log::warn!("{} rows skipped (undecodable encodings)", run.skipped.len());
    }
    for o in &run.outcomes {
        match o {
            harness::MetricOutcome::Defined(r) => {
                println!("{:<10} rho={:+.4} ± {:.4} (n={})", r.metric.name(), r.mean_over_seeds, r.std_err, r.n)
            }
            harness::MetricOutcome::Undefined { metric, seed, reason } => {
                println!("{:<10} undefined at seed {seed}: {reason}", metric.name())
            }
        }
    }
    Ok(())
}

fn cmd_ablate(mut a: AblateArgs, dims: bool, file: &mut ConfigFile, out: &Path) -> Result<(), CliError> {
    a.ablate.resolve(file)?;
    a.eval.resolve(file)?;
    a.space.resolve(file)?;
    a.batch.resolve(file)?;
    a.reg.resolve(file)?;
    a.space.finish();
    a.batch.check()?;
    // only the swept parameter's list belongs to this command
    if dims {
        a.ablate.sizes = None;
    } else {
        a.ablate.dims = None;
    }
    let eval = EvalConfig {
        batch: a.batch.spec(0),
        seeds: a.eval.seeds.clone().map(|l| l.0).unwrap_or_default(),
        reg: a.reg.params()?,
        norm: a.batch.norm.unwrap_or_default(),
    };
    if eval.reg.mode == RegMode::Adaptive {
        return Err(CliError::Usage("ablations take --reg off or static".into()));
    }
    let mut cfg = AblationConfig::new(a.space.config()?, a.ablate.nets.unwrap_or(50), eval);
    cfg.net_seed = a.ablate.net_seed.unwrap_or(0);
    cfg.ground_truth = load_table(&a.eval)?;

    let name = if dims { "ablate_input_dim" } else { "ablate_batch_size" };
    ensure_dir(out)?;
    let mut snap = Snapshot::new();
    a.ablate.snapshot(&mut snap);
    a.eval.snapshot(&mut snap);
    a.space.snapshot(&mut snap);
    a.batch.snapshot(&mut snap);
    a.reg.snapshot(&mut snap);
    let command = if dims { "ablate input-dim" } else { "ablate batch-size" };
    write_snapshot(&out.join(format!("{name}.config")), command, &snap)?;

    let table: AblationTable = if dims {
        let list: Vec<(usize, usize)> = want(&a.ablate.dims, "dims")?.0.iter().map(|d| (d.0, d.1)).collect();
        let kind = a.batch.batch_kind.unwrap_or(BatchKind::GaussianNoise);
        harness::ablate_input_dims(&cfg, &list, kind)
    } else {
        harness::ablate_batch_size(&cfg, &want(&a.ablate.sizes, "sizes")?.0)
    }
    .map_err(|e| match e {
        harness::HarnessError::Config(m) => CliError::Usage(m),
        e => CliError::runtime(e),
    })?;
    harness::write_csv(&out.join(format!("{name}_long.csv")), &table.long).map_err(CliError::runtime)?;
    harness::write_csv(&out.join(format!("{name}_summary.csv")), &table.summary).map_err(CliError::runtime)?;
    for (setting, reason) in &table.undefined {
        log::warn!("setting {setting}: {reason}");
    }
    let headline = if cfg.ground_truth.is_some() { "spearman_swap" } else { "swap" };
    for r in table.summary_for(headline) {
        println!("{headline} {:>10}: {:.4} ± {:.4} (n={})", r.setting, r.mean, r.std_err, r.count);
    }
    Ok(())
}

fn cmd_oracle(mut a: OracleArgs, file: &mut ConfigFile, out: &Path) -> Result<(), CliError> {
    a.oracle.resolve(file)?;
    let o = &a.oracle;
    let cfg = OracleConfig {
        space: o.space.unwrap_or(SpaceId::Nb201),
        n_nets: o.nets.unwrap_or(50),
        v_cap: o.vcap.unwrap_or(2000),
        sizes: o.sizes.clone().map(|l| l.0).unwrap_or_default(),
        seed: o.seed.unwrap_or(0),
    };
    ensure_dir(out)?;
    let mut snap = Snapshot::new();
    a.oracle.snapshot(&mut snap);
    write_snapshot(&out.join("oracle_check.config"), "oracle-check", &snap)?;
    let report = harness::oracle_check(&cfg).map_err(|e| match e {
        harness::HarnessError::Config(m) => CliError::Usage(m),
        e => CliError::runtime(e),
    })?;
    let json = serde_json::to_string_pretty(&report).expect("report serialises");
    write_text(&out.join("oracle_check.json"), &format!("{json}\n"))?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if !report.passed {
        let first = &report.mismatches[0];
        return Err(CliError::OracleFailed(format!(
            "{} mismatches; first: {} fast={} naive={} genome={} seed={} batch={}",
            report.mismatches.len(),
            first.metric,
            first.fast,
            first.naive,
            first.genome,
            first.init_seed,
            first.batch
        )));
    }
    println!(
        "pass: {} nets, {} comparisons, max V {}{}",
        report.nets,
        report.comparisons,
        report.max_sites,
        if report.vacuous { " (vacuous)" } else { "" }
    );
    Ok(())
}
