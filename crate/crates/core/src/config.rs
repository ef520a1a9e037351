//! Experiment configuration and the configuration hash.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::epidemic::DiseaseParams;
use crate::error::{Error, Result};
use crate::ingest::IngestionParams;
use crate::strategy::{RankingParams, Strategy};
use crate::synthetic::GdtParams;

/// Current version of the configuration schema.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Vaccinate before a single-seed outbreak starts.
    Preventive,
    /// Seed an outbreak, vaccinate the top-ranked susceptibles on the
    /// vaccination day.
    PostOutbreak,
    /// Seed an outbreak, then vaccinate qualifying neighbours of identified
    /// infected nodes from the vaccination day on.
    Ring,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub strategies: Vec<Strategy>,
    /// Vaccination rates, percent of all nodes.
    pub p_grid: Vec<f64>,
    /// Information availability values. For ring experiments, the chance
    /// that an infected node is identified.
    pub f_values: Vec<f64>,
    pub n_replicates: u32,
    /// Seeds per replicate; 1 for preventive runs and 14 otherwise when unset.
    pub seed_count: Option<u32>,
    /// Explicit seed sets; replicate `r` uses set `r mod len`.
    pub seed_sets: Option<Vec<Vec<u32>>>,
    /// Days simulated; 35 for preventive runs and 42 otherwise when unset.
    pub simulation_days: Option<u32>,
    /// Preventive runs start on this day; the other kinds vaccinate on it.
    pub vaccination_day: u32,
    /// Replicates with more new infections than this count as not contained.
    pub outbreak_threshold: u64,
    /// Days of contact history a ring trigger looks back over.
    pub ring_lookback_days: u32,
    /// Network file. Only its content digest enters the configuration hash.
    pub network: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: ExperimentKind::Preventive,
            strategies: vec![
                Strategy::Random,
                Strategy::Acquaintance,
                Strategy::Degree,
                Strategy::Movement,
            ],
            p_grid: p_grid(0.2, 2.0, 0.2),
            f_values: vec![1.0],
            n_replicates: 500,
            seed_count: None,
            seed_sets: None,
            simulation_days: None,
            vaccination_day: 7,
            outbreak_threshold: 100,
            ring_lookback_days: 7,
            network: None,
        }
    }
}

/// `start, start + step, ..., end` without accumulated rounding drift.
pub fn p_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let v = start + step * i as f64;
            (v * 1e9).round() / 1e9
        })
        .collect()
}

impl ExperimentConfig {
    pub fn seed_count(&self) -> u32 {
        self.seed_count.unwrap_or(match self.kind {
            ExperimentKind::Preventive => 1,
            _ => 14,
        })
    }

    pub fn simulation_days(&self) -> u32 {
        self.simulation_days.unwrap_or(match self.kind {
            ExperimentKind::Preventive => 35,
            _ => 42,
        })
    }

    /// First network day simulated.
    pub fn start_day(&self) -> u32 {
        match self.kind {
            ExperimentKind::Preventive => self.vaccination_day,
            _ => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies configured".into()));
        }
        if self.p_grid.is_empty() || self.f_values.is_empty() {
            return Err(Error::Config("p_grid and f_values must not be empty".into()));
        }
        if let Some(p) = self.p_grid.iter().find(|p| !(0.0..=100.0).contains(*p)) {
            return Err(Error::Config(format!("P value {p} outside [0, 100]")));
        }
        if let Some(f) = self.f_values.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("F value {f} outside [0, 1]")));
        }
        if self.n_replicates == 0 {
            return Err(Error::Config("n_replicates must be positive".into()));
        }
        if self.seed_count() == 0 {
            return Err(Error::Config("seed_count must be positive".into()));
        }
        if let Some(sets) = &self.seed_sets {
            if sets.is_empty() || sets.iter().any(Vec::is_empty) {
                return Err(Error::Config("seed_sets must hold non-empty sets".into()));
            }
        }
        if self.kind != ExperimentKind::Preventive && self.simulation_days() < self.vaccination_day {
            return Err(Error::Config(format!(
                "simulation_days {} is shorter than vaccination_day {}",
                self.simulation_days(),
                self.vaccination_day
            )));
        }
        Ok(())
    }
}

/// Everything a command may read from a configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub version: u32,
    pub seed: u64,
    pub ingest: IngestionParams,
    pub gdt: GdtParams,
    pub disease: DiseaseParams,
    pub ranking: RankingParams,
    pub experiment: ExperimentConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            version: SCHEMA_VERSION,
            seed: 0,
            ingest: IngestionParams::default(),
            gdt: GdtParams::default(),
            disease: DiseaseParams::default(),
            ranking: RankingParams::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        self.ingest.validate()?;
        self.gdt
            .validate()
            .map_err(|e| Error::Config(format!("gdt: {e}")))?;
        self.disease.validate()?;
        self.ranking.validate()?;
        self.experiment.validate()
    }
}

/// SHA-256 (hex) of the canonical JSON form of `value`: object keys sorted,
/// no whitespace.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_value(value)?;
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(&canonical)?)))
}

#[derive(Serialize)]
struct HashedExperiment<'a> {
    version: u32,
    seed: u64,
    disease: &'a DiseaseParams,
    ranking: &'a RankingParams,
    experiment: ExperimentConfig,
    network_digest: &'a str,
}

/// Hash of every input that affects a sweep's output.
pub fn experiment_hash(
    seed: u64,
    disease: &DiseaseParams,
    ranking: &RankingParams,
    experiment: &ExperimentConfig,
    network_digest: &str,
) -> Result<String> {
    hash_json(&HashedExperiment {
        version: SCHEMA_VERSION,
        seed,
        disease,
        ranking,
        experiment: ExperimentConfig {
            network: None,
            seed_count: Some(experiment.seed_count()),
            simulation_days: Some(experiment.simulation_days()),
            ..experiment.clone()
        },
        network_digest,
    })
}
