//! Selection schemes and the generational evolution loop.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpu::{Backend, CompiledProgram, CpuConfig};
use crate::error::{Error, Result};
use crate::mutation::{mutate, random_ancestor, MutationConfig};
use crate::problems::Problem;
use crate::program::Program;
use crate::rng::{derive_seed, Rng};

/// Argmax of `fitnesses`; ties go to the lowest index.
pub fn elite_select(fitnesses: &[f64]) -> Result<usize> {
    if fitnesses.is_empty() {
        return Err(Error::InvalidInput("elite selection on an empty population".into()));
    }
    let mut best = 0;
    for (i, &f) in fitnesses.iter().enumerate().skip(1) {
        if f > fitnesses[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Fitness-proportional selection. A population whose fitnesses sum to
/// zero is sampled uniformly.
pub fn roulette_select(fitnesses: &[f64], rng: &mut Rng) -> Result<usize> {
    if fitnesses.is_empty() {
        return Err(Error::InvalidInput("roulette selection on an empty population".into()));
    }
    if let Some(bad) = fitnesses.iter().find(|f| !(f.is_finite() && **f >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "roulette selection needs finite nonnegative fitness, got {bad}"
        )));
    }
    let total: f64 = fitnesses.iter().sum();
    if total == 0.0 {
        return Ok(rng.below_usize(fitnesses.len()));
    }
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &f) in fitnesses.iter().enumerate() {
        if f > 0.0 {
            acc += f;
            last_positive = i;
            if target < acc {
                return Ok(i);
            }
        }
    }
    // rounding left target at or above the final cumulative sum
    Ok(last_positive)
}

/// Lexicase selection over binary case results.
///
/// Cases are visited in a uniformly shuffled order; at each case only the
/// candidates achieving the pool's best result survive. The winner is drawn
/// uniformly from whatever remains.
pub fn lexicase_select(case_scores: &[Vec<bool>], rng: &mut Rng) -> Result<usize> {
    let first = case_scores
        .first()
        .ok_or_else(|| Error::InvalidInput("lexicase selection on an empty population".into()))?;
    let cases = first.len();
    if cases == 0 || case_scores.iter().any(|c| c.len() != cases) {
        return Err(Error::InvalidInput(
            "lexicase selection needs equal, nonzero case counts".into(),
        ));
    }
    let mut order: Vec<usize> = (0..cases).collect();
    rng.shuffle(&mut order);
    let pool = lexicase_filter(case_scores, &order);
    Ok(pool[rng.below_usize(pool.len())])
}

/// Candidates surviving lexicase filtering with cases visited in `order`.
pub fn lexicase_filter(case_scores: &[Vec<bool>], order: &[usize]) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..case_scores.len()).collect();
    for &case in order {
        if pool.len() <= 1 {
            break;
        }
        if pool.iter().any(|&i| case_scores[i][case]) {
            pool.retain(|&i| case_scores[i][case]);
        }
    }
    pool
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScheme {
    /// One unmutated copy of the best individual plus N-1 mutated
    /// roulette-selected offspring.
    EliteRoulette,
    /// N mutated lexicase-selected offspring.
    Lexicase,
}

impl fmt::Display for SelectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionScheme::EliteRoulette => "elite_roulette",
            SelectionScheme::Lexicase => "lexicase",
        })
    }
}

impl FromStr for SelectionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "elite_roulette" => Ok(SelectionScheme::EliteRoulette),
            "lexicase" => Ok(SelectionScheme::Lexicase),
            _ => Err(Error::Config(format!("unknown selection scheme {s:?}"))),
        }
    }
}

/// How generation 0 is populated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ancestor {
    /// Each individual is an independent random program with one
    /// `GlobalAnchor` per problem signal.
    #[default]
    Random,
    /// Every individual is the problem's hand-built perfect solution.
    Perfect,
}

#[derive(Clone, Debug)]
pub struct EvolutionParams {
    pub problem: Problem,
    pub population_size: usize,
    /// Generation cap; generation 0 is always evaluated.
    pub generations: u64,
    pub selection: SelectionScheme,
    pub mutation: MutationConfig,
    pub ancestor: Ancestor,
    pub ancestor_length: usize,
    pub backend: Backend,
    pub seed: u64,
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::Config("population size must be at least 1".into()));
        }
        if self.ancestor_length == 0 {
            return Err(Error::Config("ancestor length must be at least 1".into()));
        }
        self.mutation.validate()?;
        self.problem.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub individuals: Vec<Program>,
    pub fitnesses: Vec<f64>,
    pub case_scores: Vec<Vec<bool>>,
    pub generation: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerationRecord {
    pub generation: u64,
    pub max_fitness: f64,
    pub mean_fitness: f64,
    pub solved: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolutionHistory {
    pub records: Vec<GenerationRecord>,
}

impl EvolutionHistory {
    pub const CSV_HEADER: &'static str = "generation,max_fitness,mean_fitness,solved";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{:.6},{:.6},{}\n",
                r.generation, r.max_fitness, r.mean_fitness, r.solved
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionOutcome {
    pub history: EvolutionHistory,
    pub population: Population,
    pub solved_at: Option<u64>,
}

fn evaluate_all(
    individuals: &[Program],
    params: &EvolutionParams,
    generation: u64,
) -> Result<(Vec<f64>, Vec<Vec<bool>>)> {
    let cpu_config = CpuConfig::default();
    let results: Vec<_> = individuals
        .par_iter()
        .enumerate()
        .map(|(i, program)| {
            let compiled = CompiledProgram::compile(program, params.backend, &cpu_config)?;
            let seed = derive_seed(params.seed, &[1, generation, i as u64]);
            Ok(params.problem.evaluate(&compiled, seed))
        })
        .collect::<Result<_>>()?;
    Ok(results.into_iter().map(|e| (e.fitness, e.cases)).unzip())
}

fn initial_population(params: &EvolutionParams) -> Result<Vec<Program>> {
    let set = params.problem.instruction_set();
    match params.ancestor {
        Ancestor::Perfect => Ok(vec![params.problem.perfect_solution(); params.population_size]),
        Ancestor::Random => (0..params.population_size)
            .map(|i| {
                let mut rng = Rng::new(derive_seed(params.seed, &[0, i as u64]));
                random_ancestor(
                    &set,
                    params.ancestor_length,
                    params.problem.ancestor_modules(),
                    &mut rng,
                )
            })
            .collect(),
    }
}

/// Runs the generational loop: evaluate, record, stop on a perfect
/// individual or at the generation cap, otherwise select and mutate a new
/// population.
pub fn run_evolution(params: &EvolutionParams) -> Result<EvolutionOutcome> {
    params.validate()?;
    let set = params.problem.instruction_set();
    let mut selection_rng = Rng::new(derive_seed(params.seed, &[2]));
    let mut individuals = initial_population(params)?;
    let mut history = EvolutionHistory::default();
    let mut generation = 0;
    loop {
        let (fitnesses, case_scores) = evaluate_all(&individuals, params, generation)?;
        let solved = case_scores.iter().any(|c| c.iter().all(|&p| p));
        let max_fitness = fitnesses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean_fitness = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
        history.records.push(GenerationRecord {
            generation,
            max_fitness,
            mean_fitness,
            solved,
        });
        if solved || generation >= params.generations {
            return Ok(EvolutionOutcome {
                history,
                population: Population {
                    individuals,
                    fitnesses,
                    case_scores,
                    generation,
                },
                solved_at: solved.then_some(generation),
            });
        }

        let n = params.population_size;
        let mut parents = Vec::with_capacity(n);
        let mut keep_elite = false;
        match params.selection {
            SelectionScheme::EliteRoulette => {
                parents.push(elite_select(&fitnesses)?);
                keep_elite = true;
                for _ in 1..n {
                    parents.push(roulette_select(&fitnesses, &mut selection_rng)?);
                }
            }
            SelectionScheme::Lexicase => {
                for _ in 0..n {
                    parents.push(lexicase_select(&case_scores, &mut selection_rng)?);
                }
            }
        }
        individuals = parents
            .par_iter()
            .enumerate()
            .map(|(slot, &parent)| {
                if keep_elite && slot == 0 {
                    return individuals[parent].clone();
                }
                let mut rng = Rng::new(derive_seed(params.seed, &[3, generation, slot as u64]));
                mutate(&individuals[parent], &params.mutation, &set, &mut rng)
            })
            .collect();
        generation += 1;
    }
}
