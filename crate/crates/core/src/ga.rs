//! The generational genetic-algorithm loop.
//!
//! Each generation: pick two parents by roulette wheel, cross them over with
//! the configured probability, mutate each offspring with the configured
//! probability, evaluate, and let the best offspring replace the worst
//! population member — but never a member better than itself, so the
//! population's best fitness is monotone non-decreasing.
//!
//! Determinism is structural. Every random draw comes from a stream derived
//! from `(master_seed, generation)`, never from state carried across
//! generations, so a search resumed from any checkpoint replays exactly. Each
//! fitness evaluation gets a seed derived from `(master_seed, generation,
//! slot)`; evaluations inside a generation may run on worker threads, and
//! results are committed to the cache in slot order, so reports are identical
//! across thread counts.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{random_genome, validate, Genome, NetworkTemplate, ALLOWED_KERNELS};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Search hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    /// Number of individuals kept at every generation boundary.
    pub population_size: usize,
    /// Generations to run.
    pub max_generations: u64,
    /// Probability that a selected parent pair undergoes crossover (otherwise
    /// the parents are cloned into the offspring).
    pub crossover_rate: f64,
    /// Per-offspring probability of applying random mutation.
    pub mutation_probability: f64,
    /// Seed every stream of randomness in the search derives from.
    pub master_seed: u64,
    /// Crossover pairs bred per generation; each pair yields two offspring,
    /// and the single best offspring is the replacement candidate.
    pub offspring_per_generation: usize,
    /// Directory for per-generation checkpoints; `None` skips writing them.
    pub checkpoint_dir: Option<PathBuf>,
    /// Fingerprint of the run configuration this search belongs to, carried
    /// into every checkpoint for provenance. Set by the driver that resolved
    /// the configuration; it does not influence the search itself.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
}

impl Default for GaConfig {
    fn default() -> GaConfig {
        GaConfig {
            population_size: 100,
            max_generations: 20,
            crossover_rate: 0.5,
            mutation_probability: 0.2,
            master_seed: 0,
            offspring_per_generation: 1,
            checkpoint_dir: None,
            config_fingerprint: None,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::config("population_size must be at least 2"));
        }
        if self.max_generations < 1 {
            return Err(Error::config("max_generations must be at least 1"));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_probability", self.mutation_probability),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::config(format!("{name} must be in [0,1], got {rate}")));
            }
        }
        if self.offspring_per_generation < 1 {
            return Err(Error::config("offspring_per_generation must be at least 1"));
        }
        Ok(())
    }
}

/// One population slot: a genome and its fitness once evaluated.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: Option<f64>,
}

impl Individual {
    fn evaluated(&self) -> Result<f64> {
        self.fitness
            .ok_or_else(|| Error::state(format!("individual [{}] not yet evaluated", self.genome)))
    }
}

/// The evolving population plus the fitness cache keyed by genome text form.
///
/// The cache makes re-encountering a genome free: training is deterministic
/// under our seeding, so the first evaluation's value is the genome's value.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Population {
    pub members: Vec<Individual>,
    pub fitness_cache: BTreeMap<String, f64>,
}

impl Population {
    /// Index of the worst member; ties break to the lowest index.
    pub fn min_index(&self) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, member) in self.members.iter().enumerate() {
            let f = member.evaluated()?;
            if best.is_none_or(|(_, bf)| f < bf) {
                best = Some((i, f));
            }
        }
        best.map(|(i, _)| i).ok_or_else(|| Error::state("population is empty"))
    }

    /// Index of the best member; ties break to the lowest index.
    pub fn max_index(&self) -> Result<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, member) in self.members.iter().enumerate() {
            let f = member.evaluated()?;
            if best.is_none_or(|(_, bf)| f > bf) {
                best = Some((i, f));
            }
        }
        best.map(|(i, _)| i).ok_or_else(|| Error::state("population is empty"))
    }
}

/// Per-generation summary row of the report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GenerationRecord {
    pub gen: u64,
    pub best: f64,
    pub mean: f64,
    pub min: f64,
    pub best_genome: String,
}

/// The search's final artifact. Contains no wall-clock or host details, so a
/// rerun under the same seed serializes to identical bytes.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchReport {
    pub generations: Vec<GenerationRecord>,
    pub best_genome: String,
    pub best_fitness: f64,
    pub evaluations: u64,
    pub seed: u64,
}

/// A failed search: the error plus the report for what did complete.
#[derive(Debug)]
pub struct SearchError {
    pub partial: SearchReport,
    pub source: Error,
}

impl std::fmt::Display for SearchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "search aborted after {} generations: {}",
            self.partial.generations.len(),
            self.source
        )
    }
}

impl std::error::Error for SearchError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

/// Fills a population with random genomes, all unevaluated.
pub fn init_population(
    config: &GaConfig,
    template: &NetworkTemplate,
    rng: &mut impl Rng,
) -> Result<Population> {
    config.validate()?;
    template.validate()?;
    let members = (0..config.population_size)
        .map(|_| Ok(Individual { genome: random_genome(template, rng)?, fitness: None }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Population { members, fitness_cache: BTreeMap::new() })
}

/// Draws a member index with probability proportional to fitness; a
/// zero-total population falls back to a uniform draw.
pub fn roulette_select(population: &Population, rng: &mut impl Rng) -> Result<usize> {
    let fitnesses = population
        .members
        .iter()
        .map(Individual::evaluated)
        .collect::<Result<Vec<f64>>>()?;
    if fitnesses.is_empty() {
        return Err(Error::state("population is empty"));
    }
    let total: f64 = fitnesses.iter().sum();
    if total <= 0.0 {
        return Ok(rng.random_range(0..fitnesses.len()));
    }
    let ball = rng.random::<f64>() * total;
    let mut cumulative = 0.0;
    for (i, f) in fitnesses.iter().enumerate() {
        cumulative += f;
        if ball < cumulative {
            return Ok(i);
        }
    }
    // Floating-point rounding can leave `ball` just past the final cumulative
    // sum; the draw belongs to the last wedge.
    Ok(fitnesses.len() - 1)
}

/// Crossover at a fixed cut: offspring take the head of one parent and the
/// tail of the other.
pub fn crossover_at(a: &Genome, b: &Genome, cut: usize) -> Result<(Genome, Genome)> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "crossover needs equal-length parents, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if cut == 0 || cut >= a.len() {
        return Err(Error::usage(format!(
            "cut index {cut} outside 1..{} for length-{} parents",
            a.len() - 1,
            a.len()
        )));
    }
    let mut first = a.genes()[..cut].to_vec();
    first.extend_from_slice(&b.genes()[cut..]);
    let mut second = b.genes()[..cut].to_vec();
    second.extend_from_slice(&a.genes()[cut..]);
    Ok((Genome::new(first)?, Genome::new(second)?))
}

/// Single-point crossover with a cut drawn uniformly from {1, …, len−1}.
/// Length-1 parents have no interior cut and are cloned.
pub fn single_point_crossover(
    a: &Genome,
    b: &Genome,
    rng: &mut impl Rng,
) -> Result<(Genome, Genome)> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "crossover needs equal-length parents, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Ok((a.clone(), b.clone()));
    }
    let cut = rng.random_range(1..a.len());
    crossover_at(a, b, cut)
}

/// Random mutation, also returning the drawn perturbation count `r`.
///
/// `r` is uniform over {0, …, len} — both the no-op and the full scramble are
/// reachable. The `r` chosen positions are distinct, and each is replaced
/// with one of the two *other* kernel values, so the output differs from the
/// input in exactly `r` positions.
pub fn random_mutation_with_count(genome: &Genome, rng: &mut impl Rng) -> (Genome, usize) {
    let len = genome.len();
    let r = rng.random_range(0..=len);
    let mut positions = sample(rng, len, r).into_vec();
    positions.sort_unstable();
    let mut genes = genome.genes().to_vec();
    for pos in positions {
        let others: Vec<u8> =
            ALLOWED_KERNELS.iter().copied().filter(|&k| k != genes[pos]).collect();
        genes[pos] = others[rng.random_range(0..others.len())];
    }
    let mutated = Genome::new(genes).expect("mutation stays inside the kernel alphabet");
    (mutated, r)
}

/// Random mutation as used by the search loop.
pub fn random_mutation(genome: &Genome, rng: &mut impl Rng) -> Genome {
    random_mutation_with_count(genome, rng).0
}

/// Evaluates a wave of genomes into the cache.
///
/// Only the first occurrence of each uncached genome is sent to `fitness`
/// (in parallel, each under its slot-derived seed); results are committed in
/// slot order. Returns the number of `fitness` calls made.
fn evaluate_wave<F>(
    cache: &mut BTreeMap<String, f64>,
    wave: &[(u64, Genome)],
    fitness: &F,
    master_seed: u64,
    generation: u64,
) -> Result<u64>
where
    F: Fn(&Genome, u64) -> Result<f64> + Sync,
{
    let mut seen = BTreeSet::new();
    let jobs: Vec<&(u64, Genome)> = wave
        .iter()
        .filter(|(_, genome)| {
            let key = genome.to_string();
            !cache.contains_key(&key) && seen.insert(key)
        })
        .collect();

    let results: Vec<(String, Result<f64>)> = jobs
        .par_iter()
        .map(|(slot, genome)| {
            let seed = derive_seed(master_seed, Stream::Eval(generation, *slot));
            (genome.to_string(), fitness(genome, seed))
        })
        .collect();

    for (key, result) in results {
        let value = result.map_err(|e| Error::Evaluation {
            genome: key.clone(),
            source: Box::new(e),
        })?;
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::Evaluation {
                genome: key,
                source: Box::new(Error::state(format!("fitness {value} outside [0,1]"))),
            });
        }
        cache.insert(key, value);
    }
    Ok(jobs.len() as u64)
}

/// Copies cached fitness values onto members that lack one.
fn adopt_cached(population: &mut Population) -> Result<()> {
    for member in &mut population.members {
        if member.fitness.is_none() {
            let key = member.genome.to_string();
            member.fitness = Some(*population.fitness_cache.get(&key).ok_or_else(|| {
                Error::state(format!("genome [{key}] missing from cache after evaluation"))
            })?);
        }
    }
    Ok(())
}

/// The replacement rule: the best offspring (ties to the lowest offspring
/// index) replaces the worst member (ties to the lowest member index), but
/// only if its fitness is at least the current minimum. Returns the replaced
/// index, if any.
fn apply_replacement(population: &mut Population, offspring: &[Individual]) -> Result<Option<usize>> {
    let mut best: Option<(usize, f64)> = None;
    for (i, child) in offspring.iter().enumerate() {
        let f = child.evaluated()?;
        if best.is_none_or(|(_, bf)| f > bf) {
            best = Some((i, f));
        }
    }
    let Some((child_index, child_fitness)) = best else {
        return Ok(None);
    };
    let worst = population.min_index()?;
    if child_fitness >= population.members[worst].evaluated()? {
        population.members[worst] = offspring[child_index].clone();
        Ok(Some(worst))
    } else {
        Ok(None)
    }
}

fn summarize(population: &Population, generation: u64) -> Result<GenerationRecord> {
    let best_index = population.max_index()?;
    let fitnesses = population
        .members
        .iter()
        .map(Individual::evaluated)
        .collect::<Result<Vec<f64>>>()?;
    let best = fitnesses[best_index];
    let min = fitnesses.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
    Ok(GenerationRecord {
        gen: generation,
        best,
        mean,
        min,
        best_genome: population.members[best_index].genome.to_string(),
    })
}

/// Runs one generation: evaluate stragglers, breed, evaluate offspring,
/// replace the worst, summarize. All randomness comes from streams derived
/// from `(master_seed, generation)`; `evaluations` counts fitness calls.
pub fn step_generation<F>(
    population: &mut Population,
    fitness: &F,
    config: &GaConfig,
    template: &NetworkTemplate,
    generation: u64,
    evaluations: &mut u64,
) -> Result<GenerationRecord>
where
    F: Fn(&Genome, u64) -> Result<f64> + Sync,
{
    // (1) Evaluate members lacking a fitness, member index as slot. After the
    // first generation this wave is empty: replacement only inserts evaluated
    // offspring.
    let wave: Vec<(u64, Genome)> = population
        .members
        .iter()
        .enumerate()
        .filter(|(_, m)| m.fitness.is_none())
        .map(|(i, m)| (i as u64, m.genome.clone()))
        .collect();
    *evaluations +=
        evaluate_wave(&mut population.fitness_cache, &wave, fitness, config.master_seed, generation)?;
    adopt_cached(population)?;

    // (2)–(4) Breed. One operators stream per generation, consumed in a fixed
    // order, keeps resumed searches replaying identically.
    let mut rng = stream_rng(config.master_seed, Stream::Operators(generation));
    let mut children: Vec<Genome> = Vec::with_capacity(2 * config.offspring_per_generation);
    for _ in 0..config.offspring_per_generation {
        let a = &population.members[roulette_select(population, &mut rng)?].genome;
        let b = &population.members[roulette_select(population, &mut rng)?].genome;
        let (mut c1, mut c2) = if rng.random::<f64>() < config.crossover_rate {
            single_point_crossover(a, b, &mut rng)?
        } else {
            (a.clone(), b.clone())
        };
        if rng.random::<f64>() < config.mutation_probability {
            c1 = random_mutation(&c1, &mut rng);
        }
        if rng.random::<f64>() < config.mutation_probability {
            c2 = random_mutation(&c2, &mut rng);
        }
        for child in [&c1, &c2] {
            let violations = validate(child, template);
            if !violations.is_empty() {
                return Err(Error::state(format!(
                    "operators produced invalid genome [{child}]: {}",
                    violations.join("; ")
                )));
            }
        }
        children.push(c1);
        children.push(c2);
    }

    // (5) Evaluate offspring. Slots continue past the member range so no
    // evaluation seed collides with the member wave of the same generation.
    let offspring_wave: Vec<(u64, Genome)> = children
        .iter()
        .enumerate()
        .map(|(i, g)| ((config.population_size + i) as u64, g.clone()))
        .collect();
    *evaluations += evaluate_wave(
        &mut population.fitness_cache,
        &offspring_wave,
        fitness,
        config.master_seed,
        generation,
    )?;
    let offspring: Vec<Individual> = children
        .into_iter()
        .map(|genome| {
            let key = genome.to_string();
            let fitness = population.fitness_cache.get(&key).copied();
            Individual { genome, fitness }
        })
        .collect();

    apply_replacement(population, &offspring)?;

    // (6) Summarize the post-replacement population.
    summarize(population, generation)
}

/// Resumable snapshot written after each generation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SearchCheckpoint {
    pub config: GaConfig,
    /// Hash of the template the search ran under; resume refuses a mismatch.
    pub template_hash: u64,
    /// Generation index the resumed search continues from.
    pub next_generation: u64,
    pub population: Population,
    pub generations: Vec<GenerationRecord>,
    pub evaluations: u64,
}

impl SearchCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::data(format!("serializing checkpoint: {e}")))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<SearchCheckpoint> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: invalid checkpoint: {e}", path.display())))
    }
}

/// Path of the checkpoint written after `generation` completed.
pub fn checkpoint_file(dir: &Path, generation: u64) -> PathBuf {
    dir.join(format!("checkpoint-gen{generation:03}.json"))
}

fn report_from(population: &Population, generations: Vec<GenerationRecord>, evaluations: u64, seed: u64) -> Result<SearchReport> {
    let best_index = population.max_index()?;
    let best = &population.members[best_index];
    Ok(SearchReport {
        generations,
        best_genome: best.genome.to_string(),
        best_fitness: best.evaluated()?,
        evaluations,
        seed,
    })
}

fn drive_search<F>(
    mut population: Population,
    mut generations: Vec<GenerationRecord>,
    mut evaluations: u64,
    first_generation: u64,
    config: &GaConfig,
    template: &NetworkTemplate,
    fitness: &F,
) -> std::result::Result<SearchReport, SearchError>
where
    F: Fn(&Genome, u64) -> Result<f64> + Sync,
{
    let fail = |population: &Population, generations: &[GenerationRecord], evaluations: u64, source: Error| {
        SearchError {
            partial: report_from(population, generations.to_vec(), evaluations, config.master_seed)
                .unwrap_or(SearchReport {
                    generations: generations.to_vec(),
                    best_genome: String::new(),
                    best_fitness: 0.0,
                    evaluations,
                    seed: config.master_seed,
                }),
            source,
        }
    };

    for generation in first_generation..config.max_generations {
        let record = match step_generation(
            &mut population,
            fitness,
            config,
            template,
            generation,
            &mut evaluations,
        ) {
            Ok(record) => record,
            Err(e) => return Err(fail(&population, &generations, evaluations, e)),
        };
        generations.push(record);
        if let Some(dir) = &config.checkpoint_dir {
            let checkpoint = SearchCheckpoint {
                config: config.clone(),
                template_hash: template.hash(),
                next_generation: generation + 1,
                population: population.clone(),
                generations: generations.clone(),
                evaluations,
            };
            let write = fs::create_dir_all(dir)
                .map_err(Error::from)
                .and_then(|()| checkpoint.save(&checkpoint_file(dir, generation)));
            if let Err(e) = write {
                return Err(fail(&population, &generations, evaluations, e));
            }
        }
    }
    report_from(&population, generations, evaluations, config.master_seed)
        .map_err(|e| fail(&population, &[], evaluations, e))
}

/// Runs the full search from a fresh random population.
///
/// `fitness(genome, seed)` must be pure and deterministic in its arguments;
/// under that contract the returned report is bit-identical across runs and
/// thread counts. On failure the error carries the report of the completed
/// generations.
pub fn run_search<F>(
    config: &GaConfig,
    template: &NetworkTemplate,
    fitness: F,
) -> std::result::Result<SearchReport, SearchError>
where
    F: Fn(&Genome, u64) -> Result<f64> + Sync,
{
    let population = init_population(config, template, &mut stream_rng(config.master_seed, Stream::Init))
        .map_err(|source| SearchError {
            partial: SearchReport {
                generations: Vec::new(),
                best_genome: String::new(),
                best_fitness: 0.0,
                evaluations: 0,
                seed: config.master_seed,
            },
            source,
        })?;
    drive_search(population, Vec::new(), 0, 0, config, template, &fitness)
}

/// Continues a checkpointed search to completion. The resumed run replays the
/// remaining generations exactly as the uninterrupted run would have, so the
/// final report is identical.
pub fn resume_search<F>(
    checkpoint: SearchCheckpoint,
    template: &NetworkTemplate,
    fitness: F,
) -> std::result::Result<SearchReport, SearchError>
where
    F: Fn(&Genome, u64) -> Result<f64> + Sync,
{
    if checkpoint.template_hash != template.hash() {
        return Err(SearchError {
            partial: SearchReport {
                generations: checkpoint.generations.clone(),
                best_genome: String::new(),
                best_fitness: 0.0,
                evaluations: checkpoint.evaluations,
                seed: checkpoint.config.master_seed,
            },
            source: Error::state(
                "checkpoint was written under a different network template",
            ),
        });
    }
    let config = checkpoint.config.clone();
    drive_search(
        checkpoint.population,
        checkpoint.generations,
        checkpoint.evaluations,
        checkpoint.next_generation,
        &config,
        template,
        &fitness,
    )
}
