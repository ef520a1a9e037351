//! Daily SIR propagation over a [`ContactNetwork`].
//!
//! Each day every susceptible node collects the links it received from
//! currently infectious hosts, sums their exposures, and is infected with
//! the dose-response probability in a single Bernoulli draw. New infections
//! become infectious the following day. A [`VaccinationHook`] runs before
//! each day's transmissions.

mod exposure;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use exposure::{infection_probability, link_exposure, removal_rate, total_exposure};

use crate::error::{Error, Result};
use crate::network::{group_by_receiver, ContactNetwork, NodeId, SpdtLink};
use crate::rng::{self, tag, Rng};

/// How exposure turns into infection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmissionMode {
    /// `P = 1 − e^{−σE}`.
    #[default]
    DoseResponse,
    /// Any positive exposure infects. Used for reachability checks.
    Certain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiseaseParams {
    /// Particle generation rate of an infectious host, PFU/s.
    pub generation_rate: f64,
    /// Pulmonary (breathing) rate of the receiver, m³/s.
    pub pulmonary_rate: f64,
    /// Volume of the interaction area, m³.
    pub volume: f64,
    /// Bounds of the particle removal time, minutes.
    pub removal_time_range: [f64; 2],
    /// Median of the removal time distribution, minutes.
    pub removal_time_median: f64,
    /// Infectiousness per PFU.
    pub sigma: f64,
    /// Inclusive range of infectious period lengths, days.
    pub tau_range: [u32; 2],
    /// Optional relative weights for each value in `tau_range`.
    pub tau_weights: Option<Vec<f64>>,
    /// Infectious period of seed nodes, days.
    pub seed_infectious_days: u32,
    pub transmission: TransmissionMode,
}

impl Default for DiseaseParams {
    fn default() -> Self {
        DiseaseParams {
            generation_rate: 0.304,
            pulmonary_rate: 7.5e-3 / 60.0,
            volume: 2512.0,
            removal_time_range: [7.5, 300.0],
            removal_time_median: 153.75,
            sigma: 0.33,
            tau_range: [3, 5],
            tau_weights: None,
            seed_infectious_days: 5,
            transmission: TransmissionMode::DoseResponse,
        }
    }
}

impl DiseaseParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("generation_rate", self.generation_rate),
            ("pulmonary_rate", self.pulmonary_rate),
            ("volume", self.volume),
            ("removal_time_range[0]", self.removal_time_range[0]),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let [lo, hi] = self.removal_time_range;
        if !(lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("removal_time_range {lo}..{hi} is empty")));
        }
        let m = self.removal_time_median;
        if !(lo..=hi).contains(&m) {
            return Err(Error::Config(format!(
                "removal_time_median {m} outside [{lo}, {hi}]"
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        let [tlo, thi] = self.tau_range;
        if tlo < 1 || tlo > thi {
            return Err(Error::Config(format!("tau_range {tlo}..{thi} invalid")));
        }
        if let Some(w) = &self.tau_weights {
            if w.len() != (thi - tlo + 1) as usize
                || w.iter().any(|x| !(*x >= 0.0 && x.is_finite()))
                || w.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::Config(
                    "tau_weights needs one non-negative weight per tau value".into(),
                ));
            }
        }
        if self.seed_infectious_days < 1 {
            return Err(Error::Config("seed_infectious_days must be >= 1".into()));
        }
        Ok(())
    }

    /// Removal time in minutes: uniform on `[min, median]` or
    /// `[median, max]` with equal probability.
    pub fn sample_removal_minutes(&self, rng: &mut Rng) -> f64 {
        let [lo, hi] = self.removal_time_range;
        let m = self.removal_time_median;
        let u: f64 = rng.random();
        if u < 0.5 {
            lo + (m - lo) * (2.0 * u)
        } else {
            m + (hi - m) * (2.0 * u - 1.0)
        }
    }

    pub fn sample_tau(&self, rng: &mut Rng) -> u32 {
        let [lo, hi] = self.tau_range;
        match &self.tau_weights {
            None => rng.random_range(lo..=hi),
            Some(w) => {
                let total: f64 = w.iter().sum();
                let mut x = rng.random::<f64>() * total;
                for (i, wi) in w.iter().enumerate() {
                    if x < *wi {
                        return lo + i as u32;
                    }
                    x -= wi;
                }
                hi
            }
        }
    }

    /// Infection probability for an accumulated exposure under the
    /// configured transmission mode.
    pub fn infection_probability(&self, exposure: f64) -> Result<f64> {
        match self.transmission {
            TransmissionMode::DoseResponse => infection_probability(exposure, self.sigma),
            TransmissionMode::Certain => Ok(if exposure > 0.0 { 1.0 } else { 0.0 }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeState {
    Susceptible,
    /// Remaining infectious days including the current one.
    Infected(u32),
    Recovered,
    Vaccinated,
}

impl NodeState {
    pub fn is_susceptible(self) -> bool {
        matches!(self, NodeState::Susceptible)
    }

    pub fn is_infected(self) -> bool {
        matches!(self, NodeState::Infected(_))
    }
}

/// Population counts by compartment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StateCounts {
    pub susceptible: usize,
    pub infected: usize,
    pub recovered: usize,
    pub vaccinated: usize,
}

impl StateCounts {
    pub fn total(&self) -> usize {
        self.susceptible + self.infected + self.recovered + self.vaccinated
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutbreakRecord {
    pub seeds: Vec<NodeId>,
    pub daily_new_infections: Vec<u32>,
    /// New infections over the run, seeds excluded.
    pub final_outbreak_size: u64,
    pub vaccinated_count: u64,
    pub rng_seed: u64,
}

/// What a [`VaccinationHook`] may see and do before a day's transmissions.
pub struct HookContext<'a> {
    day: u32,
    states: &'a mut [NodeState],
    newly_infected: &'a [NodeId],
    vaccinated: &'a mut u64,
    rng: &'a mut Rng,
}

impl HookContext<'_> {
    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn state(&self, node: NodeId) -> NodeState {
        self.states[node.index()]
    }

    pub fn states(&self) -> &[NodeState] {
        self.states
    }

    /// Nodes infected during the previous day, ascending.
    pub fn newly_infected(&self) -> &[NodeId] {
        self.newly_infected
    }

    /// Vaccinates `node` if it is still susceptible.
    pub fn vaccinate(&mut self, node: NodeId) -> bool {
        let slot = &mut self.states[node.index()];
        if slot.is_susceptible() {
            *slot = NodeState::Vaccinated;
            *self.vaccinated += 1;
            true
        } else {
            false
        }
    }

    pub fn rng(&mut self) -> &mut Rng {
        self.rng
    }
}

pub trait VaccinationHook {
    fn before_day(&mut self, ctx: &mut HookContext<'_>);
}

impl<F: FnMut(&mut HookContext<'_>)> VaccinationHook for F {
    fn before_day(&mut self, ctx: &mut HookContext<'_>) {
        self(ctx)
    }
}

/// A hook that never vaccinates.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoVaccination;

impl VaccinationHook for NoVaccination {
    fn before_day(&mut self, _ctx: &mut HookContext<'_>) {}
}

/// Initial conditions of a run.
#[derive(Debug, Clone, Default)]
pub struct RunSetup {
    pub seeds: Vec<NodeId>,
    /// Vaccinated before the first day. Seeds are never vaccinated.
    pub pre_vaccinated: Vec<NodeId>,
    /// Network day on which the simulation starts.
    pub start_day: u32,
    pub n_days: u32,
}

/// Mutable state of one stochastic run.
pub struct Simulation<'a> {
    net: &'a ContactNetwork,
    params: &'a DiseaseParams,
    run_seed: u64,
    states: Vec<NodeState>,
    infected: Vec<NodeId>,
    newly_infected: Vec<NodeId>,
    ever_infected: Vec<NodeId>,
    day: u32,
    daily: Vec<u32>,
    vaccinated: u64,
    seeds: Vec<NodeId>,
}

impl<'a> Simulation<'a> {
    pub fn new(
        net: &'a ContactNetwork,
        params: &'a DiseaseParams,
        setup: &RunSetup,
        run_seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        let n = net.n_nodes();
        let mut states = vec![NodeState::Susceptible; n as usize];
        let mut seeds = setup.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        for &s in &seeds {
            if s.0 >= n {
                return Err(Error::domain(format!("seed node {s} out of range (n = {n})")));
            }
            states[s.index()] = NodeState::Infected(params.seed_infectious_days);
        }
        let mut vaccinated = 0;
        for &v in &setup.pre_vaccinated {
            if v.0 >= n {
                return Err(Error::domain(format!("vaccinated node {v} out of range (n = {n})")));
            }
            if states[v.index()].is_susceptible() {
                states[v.index()] = NodeState::Vaccinated;
                vaccinated += 1;
            }
        }
        Ok(Simulation {
            net,
            params,
            run_seed,
            states,
            infected: seeds.clone(),
            newly_infected: Vec::new(),
            ever_infected: Vec::new(),
            day: setup.start_day,
            daily: Vec::new(),
            vaccinated,
            seeds,
        })
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn counts(&self) -> StateCounts {
        let mut c = StateCounts::default();
        for s in &self.states {
            match s {
                NodeState::Susceptible => c.susceptible += 1,
                NodeState::Infected(_) => c.infected += 1,
                NodeState::Recovered => c.recovered += 1,
                NodeState::Vaccinated => c.vaccinated += 1,
            }
        }
        c
    }

    /// Nodes infected during the run, in infection order (seeds excluded).
    pub fn ever_infected(&self) -> &[NodeId] {
        &self.ever_infected
    }

    pub fn apply_hook(&mut self, hook: &mut dyn VaccinationHook) {
        let mut rng = rng::substream(self.run_seed, &[tag::HOOK, self.day as u64]);
        let mut ctx = HookContext {
            day: self.day,
            states: &mut self.states,
            newly_infected: &self.newly_infected,
            vaccinated: &mut self.vaccinated,
            rng: &mut rng,
        };
        hook.before_day(&mut ctx);
    }

    /// Advances one day: transmissions from the current infectious set, then
    /// recoveries, then the new infections take effect. Returns the number of
    /// new infections.
    pub fn step_day(&mut self) -> Result<u32> {
        let day = self.day;
        let mut hits: Vec<&SpdtLink> = Vec::new();
        for &host in &self.infected {
            hits.extend(
                self.net
                    .hosted(host, day)
                    .iter()
                    .filter(|l| self.states[l.neighbor.index()].is_susceptible()),
            );
        }

        let mut new: Vec<(NodeId, u32)> = Vec::new();
        for (node, links) in group_by_receiver(hits) {
            let mut rng = rng::substream(
                self.run_seed,
                &[tag::TRANSMISSION, node.0 as u64, day as u64],
            );
            let mut exposure = 0.0;
            for l in &links {
                let r = removal_rate(self.params.sample_removal_minutes(&mut rng));
                exposure += link_exposure(l, r, self.params)?;
            }
            let p = self.params.infection_probability(exposure)?;
            if rng.random::<f64>() < p {
                new.push((node, self.params.sample_tau(&mut rng)));
            }
        }

        let mut still = Vec::with_capacity(self.infected.len() + new.len());
        for &node in &self.infected {
            let slot = &mut self.states[node.index()];
            if let NodeState::Infected(left) = *slot {
                if left <= 1 {
                    *slot = NodeState::Recovered;
                } else {
                    *slot = NodeState::Infected(left - 1);
                    still.push(node);
                }
            }
        }
        self.newly_infected.clear();
        for &(node, tau) in &new {
            self.states[node.index()] = NodeState::Infected(tau);
            still.push(node);
            self.newly_infected.push(node);
            self.ever_infected.push(node);
        }
        still.sort_unstable();
        self.infected = still;
        self.day += 1;
        let count = new.len() as u32;
        self.daily.push(count);
        Ok(count)
    }

    pub fn into_record(self) -> OutbreakRecord {
        OutbreakRecord {
            seeds: self.seeds,
            final_outbreak_size: self.daily.iter().map(|&d| d as u64).sum(),
            daily_new_infections: self.daily,
            vaccinated_count: self.vaccinated,
            rng_seed: self.run_seed,
        }
    }
}

/// Runs `setup.n_days` days, calling `hook` before each day's transmissions.
pub fn run(
    net: &ContactNetwork,
    setup: &RunSetup,
    params: &DiseaseParams,
    hook: &mut dyn VaccinationHook,
    run_seed: u64,
) -> Result<OutbreakRecord> {
    let mut sim = Simulation::new(net, params, setup, run_seed)?;
    for _ in 0..setup.n_days {
        sim.apply_hook(hook);
        sim.step_day()?;
    }
    Ok(sim.into_record())
}
