//! Replicated vaccination experiments.
//!
//! A sweep runs every (strategy, F, P) point of an [`ExperimentConfig`] plus
//! an unvaccinated reference. Replicate `r` draws its seed nodes and all of
//! its transmission randomness from a stream derived from the master seed
//! and `r` alone, so every point sees the same outbreaks and differences
//! between points are paired.

mod output;

use std::collections::HashMap;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use output::{read_journal, write_csv, write_jsonl, Journal, CSV_HEADER};

use crate::config::{experiment_hash, p_grid, ExperimentConfig, ExperimentKind};
use crate::epidemic::{
    run, DiseaseParams, HookContext, NoVaccination, OutbreakRecord, RunSetup, VaccinationHook,
};
use crate::error::{Error, Result};
use crate::network::{ContactNetwork, KindSet, NodeId};
use crate::rng::{self, tag};
use crate::strategy::{
    rank, sample_observed, score_threshold, select_for_vaccination, vaccination_quota,
    RankingParams, RankingScores, Strategy,
};

/// Percent reduction of the mean outbreak relative to the reference;
/// `None` when the reference is zero.
pub fn efficiency(reference: f64, mean: f64) -> Option<f64> {
    (reference > 0.0).then(|| (reference - mean) / reference * 100.0)
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::default();
    let mut n = 0usize;
    for v in values {
        acc.add(v);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        acc.value() / n as f64
    }
}

/// Outcome of one replicate at one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub config_hash: String,
    /// `None` for the unvaccinated reference.
    pub strategy: Option<Strategy>,
    pub p: f64,
    pub f: f64,
    pub replicate: u32,
    pub run_seed: u64,
    pub seeds: Vec<NodeId>,
    pub outbreak_size: u64,
    pub vaccinated: u64,
    /// Selected nodes that were no longer susceptible when their turn came.
    pub skipped: u64,
    pub daily_new_infections: Vec<u32>,
}

impl ReplicateRecord {
    pub(crate) fn key(&self) -> PointKey {
        PointKey::new(self.strategy, self.p, self.f, self.replicate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct PointKey(Option<Strategy>, u64, u64, u32);

impl PointKey {
    fn new(strategy: Option<Strategy>, p: f64, f: f64, replicate: u32) -> Self {
        PointKey(strategy, p.to_bits(), f.to_bits(), replicate)
    }
}

/// Aggregate over the replicates of one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub strategy: Option<Strategy>,
    pub p: f64,
    pub f: f64,
    pub kinds: KindSet,
    pub mean_outbreak: f64,
    pub eta: Option<f64>,
    pub over_threshold_count: u32,
    pub mean_vaccinated: f64,
    pub mean_skipped: f64,
    pub n_replicates: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config_hash: String,
    pub master_seed: u64,
    /// Mean outbreak without vaccination.
    pub reference: f64,
    /// The reference point first, then strategies × F × P in config order.
    pub points: Vec<PointResult>,
    pub replicates: Vec<ReplicateRecord>,
}

impl SweepResult {
    pub fn point(&self, strategy: Strategy, p: f64, f: f64) -> Option<&PointResult> {
        self.points
            .iter()
            .find(|x| x.strategy == Some(strategy) && x.p == p && x.f == f)
    }
}

/// The vaccination order of one (strategy, F) pair: candidates best first,
/// plus the dense scores used by ring thresholds.
struct Ranked {
    order: Vec<NodeId>,
    scores: RankingScores,
    dense: Vec<f64>,
}

/// An experiment bound to its network.
pub struct Experiment<'a> {
    pub net: &'a ContactNetwork,
    pub disease: DiseaseParams,
    pub ranking: RankingParams,
    pub config: ExperimentConfig,
    pub master_seed: u64,
    pub config_hash: String,
    seed_pool: Vec<NodeId>,
    rankings: HashMap<(Strategy, u64), Ranked>,
}

impl<'a> Experiment<'a> {
    pub fn new(
        net: &'a ContactNetwork,
        disease: DiseaseParams,
        ranking: RankingParams,
        config: ExperimentConfig,
        master_seed: u64,
    ) -> Result<Self> {
        let digest = net.digest();
        Experiment::with_digest(net, disease, ranking, config, master_seed, &digest)
    }

    /// As [`new`](Self::new) with a precomputed network digest.
    pub fn with_digest(
        net: &'a ContactNetwork,
        disease: DiseaseParams,
        ranking: RankingParams,
        config: ExperimentConfig,
        master_seed: u64,
        network_digest: &str,
    ) -> Result<Self> {
        disease.validate()?;
        ranking.validate()?;
        config.validate()?;
        let start = config.start_day();
        let end = start + config.simulation_days();
        if end > net.n_days() {
            return Err(Error::Config(format!(
                "simulating days {start}..{end} needs a network of at least {end} days, have {}",
                net.n_days()
            )));
        }
        if ranking.window_days > net.n_days() {
            return Err(Error::Config("ranking window longer than the network".into()));
        }
        let seed_pool = if config.seed_sets.is_some() {
            Vec::new()
        } else {
            let pool = net.active_nodes(start..start + 1)?;
            if pool.len() < config.seed_count() as usize {
                return Err(Error::Data(format!(
                    "only {} nodes active on day {start}, need {} seeds",
                    pool.len(),
                    config.seed_count()
                )));
            }
            pool
        };
        if let Some(sets) = &config.seed_sets {
            if let Some(bad) = sets.iter().flatten().find(|&&s| s >= net.n_nodes()) {
                return Err(Error::Config(format!("seed node {bad} out of range")));
            }
        }
        let config_hash = experiment_hash(master_seed, &disease, &ranking, &config, network_digest)?;
        Ok(Experiment {
            net,
            disease,
            ranking,
            config,
            master_seed,
            config_hash,
            seed_pool,
            rankings: HashMap::new(),
        })
    }

    pub fn replicate_seed(&self, replicate: u32) -> u64 {
        rng::derive_seed(self.master_seed, &[tag::REPLICATE, replicate as u64])
    }

    /// Seed nodes of replicate `replicate`, ascending.
    pub fn seeds(&self, replicate: u32) -> Vec<NodeId> {
        if let Some(sets) = &self.config.seed_sets {
            let mut s: Vec<NodeId> = sets[replicate as usize % sets.len()]
                .iter()
                .map(|&n| NodeId(n))
                .collect();
            s.sort_unstable();
            s.dedup();
            return s;
        }
        let mut r = rng::substream(self.replicate_seed(replicate), &[tag::SEEDS]);
        let k = self.config.seed_count() as usize;
        let mut s: Vec<NodeId> = index::sample(&mut r, self.seed_pool.len(), k)
            .into_iter()
            .map(|i| self.seed_pool[i])
            .collect();
        s.sort_unstable();
        s
    }

    fn setup(&self, replicate: u32) -> RunSetup {
        RunSetup {
            seeds: self.seeds(replicate),
            pre_vaccinated: Vec::new(),
            start_day: self.config.start_day(),
            n_days: self.config.simulation_days(),
        }
    }

    /// Ranks and orders candidates for `strategy` at information level `f`.
    /// Ring experiments rank every node, since F there governs which
    /// infected nodes are identified.
    pub fn scores(&mut self, strategy: Strategy, f: f64) -> Result<&RankingScores> {
        self.ensure_ranked(strategy, f)?;
        Ok(&self.rankings[&(strategy, f.to_bits())].scores)
    }

    fn ensure_ranked(&mut self, strategy: Strategy, f: f64) -> Result<()> {
        let key = (strategy, f.to_bits());
        if self.rankings.contains_key(&key) {
            return Ok(());
        }
        let n = self.net.n_nodes();
        let all: Vec<NodeId> = (0..n).map(NodeId).collect();
        let candidates = if self.config.kind == ExperimentKind::Ring {
            all
        } else {
            let mut r = rng::substream(self.master_seed, &[tag::RANKING, 0, f.to_bits()]);
            sample_observed(&all, f, &mut r)?
        };
        let code = strategy as u64;
        let mut r = rng::substream(self.master_seed, &[tag::RANKING, 1, code, f.to_bits()]);
        let scores = rank(self.net, strategy, &self.ranking, &candidates, &mut r)?;
        let mut r = rng::substream(self.master_seed, &[tag::RANKING, 2, code, f.to_bits()]);
        let order = select_for_vaccination(&scores, 100.0, n.max(scores.scores.len() as u32), &mut r)?
            .nodes;
        let dense = scores.dense(n, f64::NEG_INFINITY);
        self.rankings.insert(key, Ranked { order, scores, dense });
        Ok(())
    }

    /// Nodes population-level vaccination picks at rate `p`.
    pub fn selection(&mut self, strategy: Strategy, p: f64, f: f64) -> Result<Vec<NodeId>> {
        self.ensure_ranked(strategy, f)?;
        let quota = vaccination_quota(p, self.net.n_nodes())?;
        let order = &self.rankings[&(strategy, f.to_bits())].order;
        Ok(order[..quota.min(order.len())].to_vec())
    }

    fn record(
        &self,
        strategy: Option<Strategy>,
        p: f64,
        f: f64,
        replicate: u32,
        out: OutbreakRecord,
        skipped: u64,
    ) -> ReplicateRecord {
        ReplicateRecord {
            config_hash: self.config_hash.clone(),
            strategy,
            p,
            f,
            replicate,
            run_seed: out.rng_seed,
            seeds: out.seeds,
            outbreak_size: out.final_outbreak_size,
            vaccinated: out.vaccinated_count,
            skipped,
            daily_new_infections: out.daily_new_infections,
        }
    }

    fn run_replicate(
        &self,
        strategy: Option<Strategy>,
        p: f64,
        f: f64,
        replicate: u32,
    ) -> Result<ReplicateRecord> {
        let seed = self.replicate_seed(replicate);
        let mut setup = self.setup(replicate);
        let Some(strategy) = strategy else {
            let out = run(self.net, &setup, &self.disease, &mut NoVaccination, seed)?;
            return Ok(self.record(None, p, f, replicate, out, 0));
        };
        let ranked = &self.rankings[&(strategy, f.to_bits())];
        let quota = vaccination_quota(p, self.net.n_nodes())?;
        let chosen = &ranked.order[..quota.min(ranked.order.len())];
        match self.config.kind {
            ExperimentKind::Preventive => {
                setup.pre_vaccinated = chosen.to_vec();
                let skipped = chosen.iter().filter(|n| setup.seeds.contains(n)).count() as u64;
                let out = run(self.net, &setup, &self.disease, &mut NoVaccination, seed)?;
                Ok(self.record(Some(strategy), p, f, replicate, out, skipped))
            }
            ExperimentKind::PostOutbreak => {
                let mut hook = PopulationHook {
                    day: self.config.vaccination_day,
                    chosen,
                    skipped: 0,
                };
                let out = run(self.net, &setup, &self.disease, &mut hook, seed)?;
                let skipped = hook.skipped;
                Ok(self.record(Some(strategy), p, f, replicate, out, skipped))
            }
            ExperimentKind::Ring => {
                let qualifies = if strategy == Strategy::Random {
                    RingRule::Share(p / 100.0)
                } else {
                    RingRule::Above(score_threshold(&ranked.scores, p, self.net.n_nodes())?)
                };
                let mut hook = RingHook {
                    net: self.net,
                    first_day: self.config.vaccination_day,
                    lookback: self.config.ring_lookback_days,
                    kinds: self.ranking.kinds,
                    scores: &ranked.dense,
                    rule: qualifies,
                    identify: f,
                    run_seed: seed,
                };
                let out = run(self.net, &setup, &self.disease, &mut hook, seed)?;
                Ok(self.record(Some(strategy), p, f, replicate, out, 0))
            }
        }
    }

    /// Replicate `replicate` of one point; `strategy` `None` runs without
    /// vaccination.
    pub fn replicate(
        &mut self,
        strategy: Option<Strategy>,
        p: f64,
        f: f64,
        replicate: u32,
    ) -> Result<ReplicateRecord> {
        if let Some(s) = strategy {
            self.ensure_ranked(s, f)?;
        }
        self.run_replicate(strategy, p, f, replicate)
    }

    /// Runs (or recovers from `journal`) every replicate of one point.
    pub fn run_point(
        &mut self,
        strategy: Option<Strategy>,
        p: f64,
        f: f64,
        reference: f64,
        mut journal: Option<&mut Journal>,
    ) -> Result<(PointResult, Vec<ReplicateRecord>)> {
        if let Some(s) = strategy {
            self.ensure_ranked(s, f)?;
        }
        let this = &*self;
        let n = this.config.n_replicates;
        let done = journal.as_deref();
        let records: Vec<ReplicateRecord> = (0..n)
            .into_par_iter()
            .map(|r| match done.and_then(|j| j.get(strategy, p, f, r)) {
                Some(rec) => Ok(rec.clone()),
                None => this.run_replicate(strategy, p, f, r),
            })
            .collect::<Result<_>>()?;
        if let Some(j) = journal.as_deref_mut() {
            j.append(&records)?;
        }
        let point = this.aggregate(strategy, p, f, reference, &records);
        Ok((point, records))
    }

    fn aggregate(
        &self,
        strategy: Option<Strategy>,
        p: f64,
        f: f64,
        reference: f64,
        records: &[ReplicateRecord],
    ) -> PointResult {
        let mean_outbreak = mean(records.iter().map(|r| r.outbreak_size as f64));
        PointResult {
            strategy,
            p,
            f,
            kinds: self.ranking.kinds,
            mean_outbreak,
            eta: efficiency(reference, mean_outbreak),
            over_threshold_count: records
                .iter()
                .filter(|r| r.outbreak_size > self.config.outbreak_threshold)
                .count() as u32,
            mean_vaccinated: mean(records.iter().map(|r| r.vaccinated as f64)),
            mean_skipped: mean(records.iter().map(|r| r.skipped as f64)),
            n_replicates: records.len() as u32,
        }
    }

    /// Mean outbreak without vaccination and its replicates.
    pub fn reference_outbreak(
        &mut self,
        journal: Option<&mut Journal>,
    ) -> Result<(PointResult, Vec<ReplicateRecord>)> {
        let (mut point, records) = self.run_point(None, 0.0, 1.0, 0.0, journal)?;
        point.eta = efficiency(point.mean_outbreak, point.mean_outbreak);
        Ok((point, records))
    }

    /// Every configured point, reference first.
    pub fn sweep(&mut self, mut journal: Option<&mut Journal>) -> Result<SweepResult> {
        let (ref_point, mut replicates) = self.reference_outbreak(journal.as_deref_mut())?;
        let reference = ref_point.mean_outbreak;
        let mut points = vec![ref_point];
        let config = self.config.clone();
        for &strategy in &config.strategies {
            for &f in &config.f_values {
                for &p in &config.p_grid {
                    let (point, recs) =
                        self.run_point(Some(strategy), p, f, reference, journal.as_deref_mut())?;
                    points.push(point);
                    replicates.extend(recs);
                }
            }
        }
        Ok(SweepResult {
            config_hash: self.config_hash.clone(),
            master_seed: self.master_seed,
            reference,
            points,
            replicates,
        })
    }

    /// Smallest P on `grid` (searched in ascending order) at which no
    /// replicate exceeds the outbreak threshold; `None` if there is none.
    pub fn containment_search(
        &mut self,
        strategy: Strategy,
        f: f64,
        grid: &[f64],
    ) -> Result<Option<f64>> {
        let mut grid = grid.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        for p in grid {
            let (point, _) = self.run_point(Some(strategy), p, f, 0.0, None)?;
            if point.over_threshold_count == 0 {
                return Ok(Some(p));
            }
        }
        Ok(None)
    }
}

/// Preventive sweep: vaccinate before a single-seed outbreak.
pub fn preventive_sweep(exp: &mut Experiment<'_>, journal: Option<&mut Journal>) -> Result<SweepResult> {
    expect_kind(exp, ExperimentKind::Preventive)?;
    exp.sweep(journal)
}

/// Population-level vaccination on the vaccination day of a seeded outbreak.
pub fn post_outbreak_population(
    exp: &mut Experiment<'_>,
    journal: Option<&mut Journal>,
) -> Result<SweepResult> {
    expect_kind(exp, ExperimentKind::PostOutbreak)?;
    exp.sweep(journal)
}

/// Node-level (ring) vaccination of a seeded outbreak.
pub fn ring_vaccination(exp: &mut Experiment<'_>, journal: Option<&mut Journal>) -> Result<SweepResult> {
    expect_kind(exp, ExperimentKind::Ring)?;
    exp.sweep(journal)
}

fn expect_kind(exp: &Experiment<'_>, kind: ExperimentKind) -> Result<()> {
    if exp.config.kind != kind {
        return Err(Error::Config(format!(
            "experiment kind is {:?}, expected {kind:?}",
            exp.config.kind
        )));
    }
    Ok(())
}

/// Default containment grid: fine steps below 2%, then 1..6%, then 5% and
/// 10% steps up to 100%.
pub fn containment_grid() -> Vec<f64> {
    let mut g: Vec<f64> = p_grid(0.2, 2.0, 0.2);
    g.extend(p_grid(1.0, 6.0, 1.0));
    g.extend(p_grid(0.0, 25.0, 5.0));
    g.extend(p_grid(10.0, 100.0, 10.0));
    g.sort_by(f64::total_cmp);
    g.dedup();
    g
}

/// Mean vaccinated count at which `strategy` first reaches `target`
/// percent reduction, interpolating linearly between neighbouring P values
/// of the curve. `None` when no point reaches it.
pub fn cost_at_reduction(points: &[PointResult], strategy: Strategy, f: f64, target: f64) -> Option<f64> {
    let mut curve: Vec<(f64, f64, f64)> = points
        .iter()
        .filter(|p| p.strategy == Some(strategy) && p.f == f)
        .filter_map(|p| p.eta.map(|e| (p.p, e, p.mean_vaccinated)))
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut prev: Option<(f64, f64)> = None;
    for &(_, eta, vac) in &curve {
        if eta >= target {
            return Some(match prev {
                Some((e0, v0)) if e0 < target && eta > e0 => v0 + (target - e0) / (eta - e0) * (vac - v0),
                _ => vac,
            });
        }
        prev = Some((eta, vac));
    }
    None
}

struct PopulationHook<'a> {
    day: u32,
    chosen: &'a [NodeId],
    skipped: u64,
}

impl VaccinationHook for PopulationHook<'_> {
    fn before_day(&mut self, ctx: &mut HookContext<'_>) {
        if ctx.day() != self.day {
            return;
        }
        for &n in self.chosen {
            if !ctx.vaccinate(n) {
                self.skipped += 1;
            }
        }
    }
}

enum RingRule {
    /// Every neighbour independently with this probability.
    Share(f64),
    /// Neighbours scoring strictly above this.
    Above(f64),
}

/// Uniform in [0, 1) from a hash of the keys.
fn unit(seed: u64, keys: &[u64]) -> f64 {
    (rng::derive_seed(seed, keys) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

struct RingHook<'a> {
    net: &'a ContactNetwork,
    first_day: u32,
    lookback: u32,
    kinds: KindSet,
    scores: &'a [f64],
    rule: RingRule,
    identify: f64,
    run_seed: u64,
}

impl VaccinationHook for RingHook<'_> {
    fn before_day(&mut self, ctx: &mut HookContext<'_>) {
        let day = ctx.day();
        if day < self.first_day {
            return;
        }
        // everyone infected when the programme starts, then each day's new cases
        let triggers: Vec<NodeId> = if day == self.first_day {
            ctx.states()
                .iter()
                .enumerate()
                .filter(|(_, s)| s.is_infected())
                .map(|(i, _)| NodeId(i as u32))
                .collect()
        } else {
            ctx.newly_infected().to_vec()
        };
        let hi = day.min(self.net.n_days());
        let lo = day.saturating_sub(self.lookback).min(hi);
        for t in triggers {
            if unit(self.run_seed, &[tag::HOOK, 1, t.0 as u64]) >= self.identify {
                continue;
            }
            let Ok(neighbors) = self.net.neighbors_of(t, lo..hi, self.kinds) else {
                continue;
            };
            for nb in neighbors {
                if !ctx.state(nb).is_susceptible() {
                    continue;
                }
                let pass = match self.rule {
                    RingRule::Share(q) => unit(self.run_seed, &[tag::HOOK, 2, t.0 as u64, nb.0 as u64]) < q,
                    RingRule::Above(th) => self.scores[nb.index()] > th,
                };
                if pass {
                    ctx.vaccinate(nb);
                }
            }
        }
    }
}
