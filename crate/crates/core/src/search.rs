//! Steady-state evolutionary search driven by the regularised score.
//!
//! Each cycle samples a tournament from the population, picks a parent (the
//! tournament winner, or a crossover of the two best candidates), scores
//! `mutation_times` mutants of it, adds the best mutant and removes the worst
//! member. Every random draw comes from a stream keyed by
//! `(master_seed, cycle, purpose, index)`, so a run is a pure function of its
//! configuration regardless of how children are scheduled across threads.

use crate::engine::{instantiate_with, BatchSpec, NormMode};
use crate::netgraph::{
    crossover, mutate_connectivity, mutate_operation, mutate_transformer, random_genome_with, Genome, GenomeError, SpaceConfig, SpaceId,
};
use crate::rng::derive_key;
use crate::swap::{adaptive_update, score_all, RegMode, RegularisationParams, ScoreError, ScoreReport};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

const TAG_INIT: u64 = 1;
const TAG_TOURNAMENT: u64 = 2;
const TAG_CROSSOVER: u64 = 3;
const TAG_CHILD: u64 = 4;

/// Resamples allowed per population slot or child before giving up on it.
pub const RETRIES: usize = 2;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error("could not initialise population slot {slot}: {source}")]
    InitFailed {
        slot: usize,
        #[source]
        source: ScoreError,
    },
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population_size: usize,
    pub cycles: usize,
    /// Defaults to `max(2, P/2)`.
    pub tournament_size: Option<usize>,
    pub mutation_times: usize,
    pub crossover_prob: f64,
    pub reg: RegularisationParams,
    pub master_seed: u64,
    /// Weight-initialisation seed shared by every scored network.
    pub init_seed: u64,
    pub norm: NormMode,
    pub batch: BatchSpec,
    pub space: SpaceConfig,
}

impl SearchConfig {
    pub fn new(space: SpaceId) -> Self {
        SearchConfig {
            population_size: 10,
            cycles: 20,
            tournament_size: None,
            mutation_times: 5,
            crossover_prob: 0.5,
            reg: RegularisationParams::off(),
            master_seed: 0,
            init_seed: 0,
            norm: NormMode::BatchStats,
            batch: BatchSpec::default(),
            space: SpaceConfig::new(space),
        }
    }

    pub fn tournament(&self) -> usize {
        self.tournament_size.unwrap_or((self.population_size / 2).max(2))
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if self.population_size < 2 {
            return bad(format!("population size {} < 2", self.population_size));
        }
        if self.cycles < 1 {
            return bad("cycles must be at least 1".into());
        }
        let t = self.tournament();
        if t < 2 || t > self.population_size {
            return bad(format!("tournament size {t} outside [2, {}]", self.population_size));
        }
        if self.mutation_times < 1 {
            return bad("mutation_times must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad(format!("crossover probability {} outside [0, 1]", self.crossover_prob));
        }
        if self.batch.samples == 0 {
            return bad("batch needs at least one sample".into());
        }
        if self.reg.mode == RegMode::Static {
            self.reg.validate()?;
        }
        self.space.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub genome: Genome,
    pub score: f64,
    /// Position in the history; older members have smaller ids.
    pub id: usize,
}

/// One scored genome. `mu`/`sigma` are the regulariser parameters its score
/// was computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub cycle: usize,
    pub score: f64,
    pub mu: f64,
    pub sigma: f64,
    pub accepted: bool,
    #[serde(flatten)]
    pub report: ScoreReport,
}

/// State after a cycle; cycle 0 is the initial population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub cycle: usize,
    pub mu: f64,
    pub sigma: f64,
    pub population_size: usize,
    pub population_best: f64,
    pub best_score: f64,
    pub history_len: usize,
    pub skipped_children: usize,
}

#[derive(Debug, Clone)]
pub struct SearchState {
    pub population: Vec<Member>,
    pub history: Vec<HistoryRecord>,
    pub cycles: Vec<CycleSummary>,
    pub cycle: usize,
    /// Index into `history` of the best score seen.
    pub best: usize,
    pub reg: RegularisationParams,
}

impl SearchState {
    pub fn best_record(&self) -> &HistoryRecord {
        &self.history[self.best]
    }

    pub fn best_genome(&self) -> Genome {
        self.best_record().report.genome.parse().expect("history genomes are encoded by the search")
    }

    pub fn population_best(&self) -> f64 {
        self.population.iter().map(|m| m.score).fold(f64::NEG_INFINITY, f64::max)
    }

    fn summarise(&mut self, skipped_children: usize) {
        self.cycles.push(CycleSummary {
            cycle: self.cycle,
            mu: self.reg.mu,
            sigma: self.reg.sigma,
            population_size: self.population.len(),
            population_best: self.population_best(),
            best_score: self.best_record().score,
            history_len: self.history.len(),
            skipped_children,
        });
    }

    fn push_history(&mut self, rec: HistoryRecord) -> usize {
        let id = self.history.len();
        if self.history.is_empty() || rec.score > self.history[self.best].score {
            self.best = id;
        }
        self.history.push(rec);
        id
    }

    fn refit(&mut self) -> Result<(), ScoreError> {
        if self.reg.mode == RegMode::Adaptive {
            let sizes: Vec<f64> = self.history.iter().map(|h| h.report.params_m).collect();
            self.reg = adaptive_update(&sizes, &self.reg)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Genome,
    pub report: ScoreReport,
    pub state: SearchState,
}

/// Scores one genome under the configured batch, init seed and regulariser.
pub fn score_genome(g: &Genome, cfg: &SearchConfig, reg: &RegularisationParams) -> Result<ScoreReport, ScoreError> {
    let net = instantiate_with(g, cfg.init_seed, cfg.norm)?;
    let batch = cfg.batch.materialise(net.architecture())?;
    score_all(&net, &batch, reg)
}

/// Regulariser used while the adaptive parameters are not yet known.
fn scoring_params(reg: &RegularisationParams) -> RegularisationParams {
    match reg.mode {
        RegMode::Adaptive => RegularisationParams::off(),
        _ => *reg,
    }
}

pub fn init_population(cfg: &SearchConfig) -> Result<SearchState, SearchError> {
    cfg.validate()?;
    let reg = scoring_params(&cfg.reg);
    let mut reports = Vec::with_capacity(cfg.population_size);
    for slot in 0..cfg.population_size {
        let mut attempt = 0;
        let report = loop {
            let seed = derive_key(&[cfg.master_seed, TAG_INIT, slot as u64, attempt as u64]);
            let g = random_genome_with(&cfg.space, seed);
            match score_genome(&g, cfg, &reg) {
                Ok(r) => break r,
                Err(e) if attempt == RETRIES => return Err(SearchError::InitFailed { slot, source: e }),
                Err(e) => log::warn!("population slot {slot}: {e}; resampling"),
            }
            attempt += 1;
        };
        reports.push(report);
    }

    let mut state = SearchState {
        population: Vec::new(),
        history: Vec::new(),
        cycles: Vec::new(),
        cycle: 0,
        best: 0,
        reg: cfg.reg,
    };
    if cfg.reg.mode == RegMode::Adaptive {
        let sizes: Vec<f64> = reports.iter().map(|r| r.params_m).collect();
        state.reg = adaptive_update(&sizes, &cfg.reg)?;
        for r in &mut reports {
            rescore(r, &state.reg)?;
        }
    }
    for report in reports {
        let genome: Genome = report.genome.parse()?;
        let score = report.reg_swap;
        let id = state.push_history(HistoryRecord {
            cycle: 0,
            score,
            mu: state.reg.mu,
            sigma: state.reg.sigma,
            accepted: true,
            report,
        });
        state.population.push(Member { genome, score, id });
    }
    state.summarise(0);
    Ok(state)
}

/// Recomputes the size-dependent fields of a report under new parameters.
fn rescore(r: &mut ScoreReport, reg: &RegularisationParams) -> Result<(), ScoreError> {
    let f = reg.factor(r.params_m)?;
    r.f_theta = f;
    r.reg_swap = r.swap as f64 * f;
    r.reg_params = r.params_m * f;
    r.reg_flops = r.flops as f64 * f;
    Ok(())
}

fn mutate(parent: &Genome, space: &SpaceConfig, seed: u64) -> Result<Genome, GenomeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op_seed = rng.gen();
    match parent {
        // NB201 cells are fully connected; `none` edges already encode topology.
        Genome::Cell(c) if c.space == SpaceId::DartsLite && rng.gen_bool(0.5) => {
            match mutate_connectivity(c, op_seed) {
                Ok(child) => Ok(Genome::Cell(child)),
                Err(GenomeError::NoConnectivityFreedom) => mutate_operation(parent, op_seed),
                Err(e) => Err(e),
            }
        }
        Genome::Transformer(t) => mutate_transformer(t, &space.transformer, op_seed).map(Genome::Transformer),
        _ => mutate_operation(parent, op_seed),
    }
}

fn select_parent(state: &SearchState, cfg: &SearchConfig) -> Genome {
    let cycle = state.cycle as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_key(&[cfg.master_seed, cycle, TAG_TOURNAMENT]));
    let mut candidates: Vec<&Member> = sample(&mut rng, state.population.len(), cfg.tournament())
        .into_iter()
        .map(|i| &state.population[i])
        .collect();
    // best first; ties go to the older member
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
    let best = &candidates[0].genome;
    if rng.gen_bool(cfg.crossover_prob) {
        let seed = derive_key(&[cfg.master_seed, cycle, TAG_CROSSOVER]);
        match crossover(best, &candidates[1].genome, seed) {
            Ok(child) => return child,
            Err(e) => log::debug!("cycle {cycle}: crossover rejected ({e}); using the tournament winner"),
        }
    }
    best.clone()
}

pub fn run_cycle(state: &mut SearchState, cfg: &SearchConfig) -> Result<(), SearchError> {
    if state.population.is_empty() {
        return Err(SearchError::InvalidConfig("state is not initialised".into()));
    }
    state.cycle += 1;
    let cycle = state.cycle as u64;
    let parent = select_parent(state, cfg);
    let reg = state.reg;
    let children: Vec<Option<ScoreReport>> = (0..cfg.mutation_times)
        .into_par_iter()
        .map(|child| {
            for attempt in 0..=RETRIES {
                let seed = derive_key(&[cfg.master_seed, cycle, TAG_CHILD, child as u64, attempt as u64]);
                let g = match mutate(&parent, &cfg.space, seed) {
                    Ok(g) => g,
                    Err(GenomeError::NoOperationFreedom) => return None,
                    Err(e) => {
                        log::warn!("cycle {cycle} child {child}: {e}");
                        continue;
                    }
                };
                match score_genome(&g, cfg, &reg) {
                    Ok(r) => return Some(r),
                    Err(e) => log::warn!("cycle {cycle} child {child}: {e} ({g})"),
                }
            }
            None
        })
        .collect();

    let skipped = children.iter().filter(|c| c.is_none()).count();
    let winner = children
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.as_ref().map(|r| (i, r.reg_swap)))
        // highest score, lowest child index on ties
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i);

    let mut accepted_id = None;
    for (i, report) in children.into_iter().enumerate() {
        let Some(report) = report else { continue };
        let accepted = Some(i) == winner;
        let score = report.reg_swap;
        let id = state.push_history(HistoryRecord {
            cycle: state.cycle,
            score,
            mu: reg.mu,
            sigma: reg.sigma,
            accepted,
            report,
        });
        if accepted {
            accepted_id = Some(id);
        }
    }
    if let Some(id) = accepted_id {
        let rec = &state.history[id];
        state.population.push(Member {
            genome: rec.report.genome.parse()?,
            score: rec.score,
            id,
        });
        let worst = state
            .population
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.score.total_cmp(&b.score).then(a.id.cmp(&b.id)))
            .map(|(i, _)| i)
            .expect("population is non-empty");
        state.population.remove(worst);
    }
    state.refit()?;
    state.summarise(skipped);
    Ok(())
}

pub fn run_search(cfg: &SearchConfig) -> Result<SearchOutcome, SearchError> {
    let mut state = init_population(cfg)?;
    for _ in 0..cfg.cycles {
        run_cycle(&mut state, cfg)?;
    }
    let best = state.best_genome();
    let report = state.best_record().report.clone();
    Ok(SearchOutcome { best, report, state })
}

pub fn write_history(path: &Path, history: &[HistoryRecord]) -> Result<(), SearchError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rec in history {
        writeln!(out, "{}", serde_json::to_string(rec).expect("record serialises"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_cycles(path: &Path, cycles: &[CycleSummary]) -> Result<(), SearchError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for c in cycles {
        writeln!(out, "{}", serde_json::to_string(c).expect("summary serialises"))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_best(path: &Path, best: &Genome) -> Result<(), SearchError> {
    std::fs::write(path, format!("{best}\n"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(space: SpaceId) -> SearchConfig {
        let mut cfg = SearchConfig::new(space);
        cfg.space = cfg.space.with_shape(4, 1);
        cfg.batch = BatchSpec::noise(4, 8, 8, 3);
        cfg.population_size = 6;
        cfg.cycles = 4;
        cfg.mutation_times = 3;
        cfg
    }

    #[test]
    fn config_invariants() {
        let mut cfg = tiny(SpaceId::Nb201);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.tournament(), 3);
        cfg.cycles = 0;
        assert!(cfg.validate().is_err());
        cfg.cycles = 1;
        cfg.tournament_size = Some(7);
        assert!(cfg.validate().is_err());
        cfg.tournament_size = Some(1);
        assert!(cfg.validate().is_err());
        cfg.tournament_size = None;
        cfg.population_size = 1;
        assert!(cfg.validate().is_err());
        cfg.population_size = 2;
        assert_eq!(cfg.tournament(), 2);
        cfg.mutation_times = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_population_fills_and_seeds_history() {
        let cfg = tiny(SpaceId::Nb201);
        let s = init_population(&cfg).unwrap();
        assert_eq!(s.population.len(), 6);
        assert_eq!(s.history.len(), 6);
        assert_eq!(s.cycles.len(), 1);
        let again = init_population(&cfg).unwrap();
        assert_eq!(s.population, again.population);
    }

    #[test]
    fn cycle_keeps_population_size_and_best() {
        let cfg = tiny(SpaceId::DartsLite);
        let mut s = init_population(&cfg).unwrap();
        let mut prev = s.population_best();
        for _ in 0..cfg.cycles {
            run_cycle(&mut s, &cfg).unwrap();
            assert_eq!(s.population.len(), cfg.population_size);
            assert!(s.population_best() >= prev);
            prev = s.population_best();
        }
        let max = s.history.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(s.best_record().score, max);
    }

    #[test]
    fn transformer_search_runs() {
        let mut cfg = tiny(SpaceId::Transformer);
        cfg.space.transformer.d_model = vec![16, 32];
        cfg.space.transformer.heads = vec![1, 2];
        cfg.space.transformer.d_ff = vec![16, 32];
        cfg.space.transformer.seq_len = vec![4];
        cfg.space.transformer.vocab = vec![50];
        cfg.cycles = 2;
        let out = run_search(&cfg).unwrap();
        assert_eq!(out.best.space(), SpaceId::Transformer);
    }

    #[test]
    fn adaptive_parameters_follow_history() {
        let mut cfg = tiny(SpaceId::Nb201);
        cfg.reg.mode = RegMode::Adaptive;
        let out = run_search(&cfg).unwrap();
        let last = out.state.cycles.last().unwrap();
        let sizes: Vec<f64> = out.state.history.iter().map(|h| h.report.params_m).collect();
        let fitted = adaptive_update(&sizes, &cfg.reg).unwrap();
        assert_eq!((last.mu, last.sigma), (fitted.mu, fitted.sigma));
    }
}
