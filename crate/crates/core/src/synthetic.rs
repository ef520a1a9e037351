//! Activity-driven synthetic networks.
//!
//! Each node activates a Poisson number of times per day. An activation is
//! a visit of geometric length that attracts a power-law number of distinct
//! neighbours, each arriving after a geometric delay and staying a geometric
//! time. Durations are whole multiples of [`TIME_QUANTUM`].

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Geometric, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ContactNetwork, NodeId, Provenance, SpdtLink};
use crate::rng::{self, tag, Rng};
use crate::DAY_SECONDS;

pub const TIME_QUANTUM: i64 = 60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdtParams {
    pub n_nodes: u32,
    pub n_days: u32,
    /// Mean visit length, seconds.
    pub active_period_mean: f64,
    /// Expected activations per node per day.
    pub activation_rate: f64,
    /// Each node draws its exponent uniformly from this range.
    pub degree_exponent_range: [f64; 2],
    pub degree_min: u32,
    pub degree_cap: u32,
    /// Mean neighbour arrival delay after the host arrives, seconds.
    pub join_delay_mean: f64,
    /// Mean neighbour stay, seconds.
    pub stay_mean: f64,
    /// Neighbours may arrive up to this long after the host leaves; their
    /// presence is cut at the same point.
    pub delta: i64,
}

// Busy enough that the default disease model produces large outbreaks from a
// single seed; sparser settings leave preventive comparisons in the noise.
impl Default for GdtParams {
    fn default() -> Self {
        GdtParams {
            n_nodes: 10_000,
            n_days: 42,
            active_period_mean: 3600.0,
            activation_rate: 8.0,
            degree_exponent_range: [1.6, 4.0],
            degree_min: 1,
            degree_cap: 60,
            join_delay_mean: 900.0,
            stay_mean: 3600.0,
            delta: 3600,
        }
    }
}

impl GdtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 2 {
            return Err(Error::domain(format!("need at least 2 nodes, got {}", self.n_nodes)));
        }
        let quantum = TIME_QUANTUM as f64;
        for (name, v, min) in [
            ("active_period_mean", self.active_period_mean, quantum),
            ("stay_mean", self.stay_mean, quantum),
            ("join_delay_mean", self.join_delay_mean, f64::MIN_POSITIVE),
        ] {
            if !(v.is_finite() && v >= min) {
                return Err(Error::domain(format!("{name} must be at least {min}, got {v}")));
            }
        }
        if !(self.activation_rate.is_finite() && self.activation_rate >= 0.0) {
            return Err(Error::domain(format!(
                "activation_rate must be >= 0, got {}",
                self.activation_rate
            )));
        }
        let [lo, hi] = self.degree_exponent_range;
        if !(lo > 1.5 && hi <= 4.0 && lo <= hi) {
            return Err(Error::domain(format!(
                "degree_exponent_range must satisfy 1.5 < low <= high <= 4, got [{lo}, {hi}]"
            )));
        }
        if self.degree_min > self.degree_cap {
            return Err(Error::domain("degree_min exceeds degree_cap"));
        }
        if self.delta < 0 {
            return Err(Error::domain("delta must be >= 0"));
        }
        Ok(())
    }

    /// Largest neighbour count actually drawable.
    fn effective_cap(&self) -> u32 {
        self.degree_cap.min(self.n_nodes - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Activation {
    pub host: NodeId,
    pub start: i64,
    pub duration: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedVisit {
    pub activation: Activation,
    pub links: Vec<SpdtLink>,
}

/// Discrete power law `P(k) ∝ max(k, 1)^-exponent` on `[min, cap]`.
#[derive(Debug, Clone)]
pub struct PowerLaw {
    min: u32,
    cdf: Vec<f64>,
}

impl PowerLaw {
    pub fn new(exponent: f64, min: u32, cap: u32) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (min..=cap.max(min))
            .map(|k| {
                acc += (k.max(1) as f64).powf(-exponent);
                acc
            })
            .collect();
        let total = acc;
        for c in &mut cdf {
            *c /= total;
        }
        PowerLaw { min, cdf }
    }

    pub fn sample(&self, rng: &mut Rng) -> u32 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        self.min + i as u32
    }
}

fn node_exponent(params: &GdtParams, seed: u64, node: u32) -> f64 {
    let [lo, hi] = params.degree_exponent_range;
    if lo == hi {
        return lo;
    }
    let mut r = rng::substream(seed, &[tag::GENERATE, node as u64, u64::MAX]);
    r.random_range(lo..=hi)
}

/// Quantised geometric lengths: `duration_quanta` has support `{1, 2, ...}`,
/// `delay_quanta` has support `{0, 1, ...}`; both with the given mean.
struct Lengths {
    duration: Geometric,
    join_delay: Geometric,
    stay: Geometric,
}

impl Lengths {
    fn new(p: &GdtParams) -> Result<Self> {
        let q = TIME_QUANTUM as f64;
        let g = |prob: f64| Geometric::new(prob.min(1.0)).map_err(|e| Error::domain(e.to_string()));
        Ok(Lengths {
            duration: g(q / p.active_period_mean)?,
            join_delay: g(q / (p.join_delay_mean + q))?,
            stay: g(q / p.stay_mean)?,
        })
    }

    fn at_least_one(g: &Geometric, rng: &mut Rng) -> i64 {
        (g.sample(rng) as i64).saturating_add(1) * TIME_QUANTUM
    }
}

fn node_day_visits(
    params: &GdtParams,
    lengths: &Lengths,
    law: &PowerLaw,
    seed: u64,
    node: u32,
    day: u32,
) -> Vec<GeneratedVisit> {
    if params.activation_rate == 0.0 {
        return Vec::new();
    }
    let mut r = rng::substream(seed, &[tag::GENERATE, node as u64, day as u64]);
    let count = Poisson::new(params.activation_rate)
        .map(|d| d.sample(&mut r) as u64)
        .unwrap_or(0);
    let day_start = day as i64 * DAY_SECONDS;
    let others = params.n_nodes as usize - 1;
    (0..count)
        .map(|i| {
            let start = day_start + r.random_range(0..DAY_SECONDS);
            let duration = Lengths::at_least_one(&lengths.duration, &mut r);
            let host_end = start + duration;
            let cutoff = host_end + params.delta;
            let k = law.sample(&mut r) as usize;
            let mut neighbors: Vec<u32> = index::sample(&mut r, others, k)
                .into_iter()
                .map(|j| if j >= node as usize { j as u32 + 1 } else { j as u32 })
                .collect();
            neighbors.sort_unstable();
            let visit_tag = ((day as u64) << 32) | i;
            let links = neighbors
                .into_iter()
                .filter_map(|nb| {
                    let delay = lengths.join_delay.sample(&mut r) as i64 * TIME_QUANTUM;
                    let stay = Lengths::at_least_one(&lengths.stay, &mut r);
                    let arrive = start.saturating_add(delay);
                    if arrive >= cutoff {
                        return None;
                    }
                    Some(SpdtLink {
                        host: NodeId(node),
                        host_start: start,
                        host_end,
                        neighbor: NodeId(nb),
                        nbr_start: arrive,
                        nbr_end: (arrive + stay).min(cutoff),
                        location_tag: Some(visit_tag),
                    })
                })
                .collect();
            GeneratedVisit {
                activation: Activation {
                    host: NodeId(node),
                    start,
                    duration,
                },
                links,
            }
        })
        .collect()
}

/// The visits `node` hosts on `day`, exactly as [`generate`] produces them.
pub fn visits(params: &GdtParams, seed: u64, node: u32, day: u32) -> Result<Vec<GeneratedVisit>> {
    params.validate()?;
    if node >= params.n_nodes {
        return Err(Error::domain(format!("node {node} out of range")));
    }
    let lengths = Lengths::new(params)?;
    let law = PowerLaw::new(node_exponent(params, seed, node), params.degree_min, params.effective_cap());
    Ok(node_day_visits(params, &lengths, &law, seed, node, day))
}

pub fn generate(params: &GdtParams, seed: u64) -> Result<ContactNetwork> {
    params.validate()?;
    let lengths = Lengths::new(params)?;
    let per_node: Vec<Vec<SpdtLink>> = (0..params.n_nodes)
        .into_par_iter()
        .map(|node| {
            let law = PowerLaw::new(
                node_exponent(params, seed, node),
                params.degree_min,
                params.effective_cap(),
            );
            (0..params.n_days)
                .flat_map(|day| node_day_visits(params, &lengths, &law, seed, node, day))
                .flat_map(|v| v.links)
                .collect()
        })
        .collect();
    ContactNetwork::from_links(
        params.n_nodes,
        params.n_days,
        Provenance::Synthetic,
        per_node.into_iter().flatten(),
    )
}
