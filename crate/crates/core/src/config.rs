//! Experiment configuration files.
//!
//! ```toml
//! seed = 1
//! replicates = 10
//! backend = "lite"
//!
//! [problem]
//! kind = "changing_env"
//! k = 2
//!
//! [population]
//! size = 100
//! generations = 1000
//!
//! [selection]
//! scheme = "elite_roulette"
//!
//! [mutation]
//! tag_bit_flip_rate = 0.002
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cpu::Backend;
use crate::error::{Error, Result};
use crate::evolution::{Ancestor, EvolutionParams, SelectionScheme};
use crate::mutation::MutationConfig;
use crate::problems::{
    default_response_table, ChangingEnvConfig, ContextualSignalConfig, Problem, ResponseTable,
    DEFAULT_CYCLES_PER_SIGNAL,
};
use crate::rng::{derive_seed, Rng};
use crate::tag::Tag;

/// Substream used to draw signal tags the config leaves unspecified.
const SIGNAL_TAG_STREAM: u64 = 0x7461_6773;

fn default_cycles() -> u64 {
    DEFAULT_CYCLES_PER_SIGNAL
}

fn default_true() -> bool {
    true
}

fn default_replicates() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSection {
    ChangingEnv {
        k: u8,
        #[serde(default = "default_cycles")]
        cycles_per_signal: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signal_tags: Option<Vec<Tag>>,
    },
    ContextualSignal {
        #[serde(default = "default_true")]
        regulation: bool,
        #[serde(default = "default_cycles")]
        cycles_per_signal: u64,
        #[serde(default = "default_response_table")]
        response_table: ResponseTable,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        first_signals: Option<[Tag; 4]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        second_signals: Option<[Tag; 4]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    pub size: usize,
    pub generations: u64,
    #[serde(default)]
    pub ancestor: Ancestor,
    #[serde(default = "default_ancestor_length")]
    pub ancestor_length: usize,
}

fn default_ancestor_length() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSection {
    pub scheme: SelectionScheme,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_backend")]
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub problem: ProblemSection,
    pub population: PopulationSection,
    pub selection: SelectionSection,
    #[serde(default)]
    pub mutation: MutationConfig,
}

fn default_backend() -> Backend {
    Backend::Lite
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every field that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        // toml integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} exceeds {}", self.seed, i64::MAX)));
        }
        self.problem()?;
        self.params_for(self.seed)?.validate()
    }

    /// Builds the problem, drawing any unspecified signal tags from the
    /// experiment seed.
    pub fn problem(&self) -> Result<Problem> {
        let mut rng = Rng::new(derive_seed(self.seed, &[SIGNAL_TAG_STREAM]));
        let problem = match &self.problem {
            ProblemSection::ChangingEnv {
                k,
                cycles_per_signal,
                signal_tags,
            } => {
                let mut c = ChangingEnvConfig::generate(*k, &mut rng)?;
                c.cycles_per_signal = *cycles_per_signal;
                if let Some(tags) = signal_tags {
                    c.signal_tags = tags.clone();
                }
                Problem::ChangingEnvironment(c)
            }
            ProblemSection::ContextualSignal {
                regulation,
                cycles_per_signal,
                response_table,
                first_signals,
                second_signals,
            } => {
                let mut c = ContextualSignalConfig::generate(&mut rng);
                c.regulation = *regulation;
                c.cycles_per_signal = *cycles_per_signal;
                c.response_table = *response_table;
                if let Some(tags) = first_signals {
                    c.first_signals = *tags;
                }
                if let Some(tags) = second_signals {
                    c.second_signals = *tags;
                }
                Problem::ContextualSignal(c)
            }
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Copy of the config with every signal tag written out explicitly.
    pub fn pinned(&self) -> Result<Self> {
        let mut pinned = self.clone();
        match (&mut pinned.problem, self.problem()?) {
            (ProblemSection::ChangingEnv { signal_tags, .. }, Problem::ChangingEnvironment(c)) => {
                *signal_tags = Some(c.signal_tags);
            }
            (
                ProblemSection::ContextualSignal {
                    first_signals,
                    second_signals,
                    ..
                },
                Problem::ContextualSignal(c),
            ) => {
                *first_signals = Some(c.first_signals);
                *second_signals = Some(c.second_signals);
            }
            _ => unreachable!("problem kind is preserved"),
        }
        Ok(pinned)
    }

    /// Seed of the `i`-th replicate.
    pub fn replicate_seed(&self, i: usize) -> u64 {
        derive_seed(self.seed, &[i as u64])
    }

    /// Evolution parameters for one replicate seeded with `seed`.
    pub fn params_for(&self, seed: u64) -> Result<EvolutionParams> {
        Ok(EvolutionParams {
            problem: self.problem()?,
            population_size: self.population.size,
            generations: self.population.generations,
            selection: self.selection.scheme,
            mutation: self.mutation.clone(),
            ancestor: self.population.ancestor,
            ancestor_length: self.population.ancestor_length,
            backend: self.backend,
            seed,
        })
    }
}
