//! Node rankings for vaccination and the selection rules built on them.
//!
//! Baselines: random (RV), acquaintance naming (AV) and contact degree (DV).
//! Movement-based: IMV scores a node from how often it visits each class of
//! location, IMVE from the exact number of people met per visit, and IMVT
//! additionally modulates the per-contact probability by the stay time.

mod profile;
mod select;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use profile::{build_visit_profiles, LocationClassTable, VisitProfile, N_CLASSES};
pub use select::{
    sample_observed, score_threshold, select_for_vaccination, vaccination_quota, Selection,
};

use crate::error::{Error, Result};
use crate::network::{ContactNetwork, KindSet, NodeId};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "RV")]
    Random,
    #[serde(rename = "AV")]
    Acquaintance,
    #[serde(rename = "DV")]
    Degree,
    #[serde(rename = "IMV")]
    Movement,
    #[serde(rename = "IMVE")]
    MovementExact,
    #[serde(rename = "IMVT")]
    MovementTemporal,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Random,
        Strategy::Acquaintance,
        Strategy::Degree,
        Strategy::Movement,
        Strategy::MovementExact,
        Strategy::MovementTemporal,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Strategy::Random => "RV",
            Strategy::Acquaintance => "AV",
            Strategy::Degree => "DV",
            Strategy::Movement => "IMV",
            Strategy::MovementExact => "IMVE",
            Strategy::MovementTemporal => "IMVT",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// How DV counts repeated contacts with the same neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegreeCounting {
    /// Size of the contact set.
    #[default]
    Distinct,
    /// Number of admitted links.
    Multiset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RankingParams {
    /// Per-contact transmission probability used by IMV and IMVE.
    pub beta: f64,
    /// IMVT transmission probability for a stay of length `t0`.
    pub beta0: f64,
    /// IMVT reference stay in seconds; the mean visit stay in the window
    /// when unset.
    pub t0: Option<f64>,
    /// Refuse `beta0` values for which IMVT could exceed probability one.
    pub enforce_beta0_bound: bool,
    /// Observation window in days from the start of the network.
    pub window_days: u32,
    /// Link kinds a node is assumed to know about.
    pub kinds: KindSet,
    /// Upper bound of the largest location class.
    pub class_cap: u32,
    pub degree_counting: DegreeCounting,
}

impl Default for RankingParams {
    fn default() -> Self {
        RankingParams {
            beta: 0.1,
            beta0: 0.1,
            t0: None,
            enforce_beta0_bound: true,
            window_days: 7,
            kinds: KindSet::DIRECT,
            class_cap: 500,
            degree_counting: DegreeCounting::Distinct,
        }
    }
}

impl RankingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.beta0 > 0.0 && self.beta0 < 1.0) {
            return Err(Error::Config(format!("beta0 must be in (0, 1), got {}", self.beta0)));
        }
        if self.enforce_beta0_bound && 1.6 * self.beta0 > 1.0 {
            return Err(Error::Config(format!(
                "1.6 * beta0 must not exceed 1 (beta0 = {})",
                self.beta0
            )));
        }
        if let Some(t0) = self.t0 {
            if !(t0 > 0.0 && t0.is_finite()) {
                return Err(Error::Config(format!("t0 must be positive, got {t0}")));
            }
        }
        if self.class_cap < 101 {
            return Err(Error::Config("class_cap must be at least 101".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> Range<u32> {
        0..self.window_days
    }

    pub fn class_table(&self) -> LocationClassTable {
        LocationClassTable::with_cap(self.class_cap)
    }
}

/// Per-node ranking scores of one strategy over the candidate nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingScores {
    pub strategy: Strategy,
    /// Candidate nodes in ascending id order with their scores.
    pub scores: Vec<(NodeId, f64)>,
}

impl RankingScores {
    pub fn get(&self, node: NodeId) -> Option<f64> {
        self.scores
            .binary_search_by_key(&node, |(n, _)| *n)
            .ok()
            .map(|i| self.scores[i].1)
    }

    /// Dense score vector indexed by node id; non-candidates get `fill`.
    pub fn dense(&self, n_nodes: u32, fill: f64) -> Vec<f64> {
        let mut out = vec![fill; n_nodes as usize];
        for &(n, s) in &self.scores {
            out[n.index()] = s;
        }
        out
    }

    /// `node_id,score,strategy,config_hash` rows.
    pub fn write_csv(&self, mut w: impl Write, config_hash: &str) -> std::io::Result<()> {
        writeln!(w, "node_id,score,strategy,config_hash")?;
        for (n, s) in &self.scores {
            writeln!(w, "{n},{s},{},{config_hash}", self.strategy)?;
        }
        w.flush()
    }
}

/// `w = 1 − (1 − β)^d`: chance that a visit meeting `d` people passes the
/// infection to at least one of them.
pub fn visit_potential(beta: f64, degree: u32) -> f64 {
    -((1.0 - beta).ln() * degree as f64).exp_m1()
}

/// Average of [`visit_potential`] over the two ends of class `class_index`
/// (zero-based).
pub fn class_potential(beta: f64, class_index: usize, table: &LocationClassTable) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::domain(format!("beta must be in (0, 1), got {beta}")));
    }
    let (lo, hi) = table
        .bounds(class_index)
        .ok_or_else(|| Error::domain(format!("no location class {class_index}")))?;
    Ok(0.5 * (visit_potential(beta, lo) + visit_potential(beta, hi)))
}

/// IMV: `W = Σ f_i w_i` over the six location classes.
pub fn imv_rank(profile: &VisitProfile, params: &RankingParams) -> Result<f64> {
    let table = params.class_table();
    (0..N_CLASSES).try_fold(0.0, |acc, i| {
        Ok(acc + profile.class_visits[i] as f64 * class_potential(params.beta, i, &table)?)
    })
}

/// IMVE: `W = Σ_visits 1 − (1 − β)^{d}` with exact per-visit degrees.
pub fn imve_rank(profile: &VisitProfile, params: &RankingParams) -> Result<f64> {
    if !(params.beta > 0.0 && params.beta < 1.0) {
        return Err(Error::domain(format!("beta must be in (0, 1), got {}", params.beta)));
    }
    Ok(profile
        .visit_degrees
        .iter()
        .map(|&d| visit_potential(params.beta, d))
        .sum())
}

/// Stay-time dependent transmission probability `1.6 β₀ (1 − e^{−t/t₀})`.
pub fn stay_transmission_probability(beta0: f64, stay: f64, t0: f64) -> f64 {
    1.6 * beta0 * -(-stay / t0).exp_m1()
}

/// IMVT: IMVE with a per-visit probability that grows with the stay time.
pub fn imvt_rank(profile: &VisitProfile, beta0: f64, t0: f64) -> Result<f64> {
    if !(t0 > 0.0) {
        return Err(Error::domain(format!("t0 must be positive, got {t0}")));
    }
    profile
        .visit_degrees
        .iter()
        .zip(&profile.visit_stays)
        .try_fold(0.0, |acc, (&d, &stay)| {
            let beta = stay_transmission_probability(beta0, stay as f64, t0);
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::domain(format!(
                    "stay-time probability {beta} outside [0, 1) for stay {stay} s"
                )));
            }
            Ok(acc + visit_potential(beta, d))
        })
}

/// AV: every respondent names one uniformly chosen neighbour from its pool;
/// a node's score is how often it was named. Respondents without neighbours
/// abstain.
pub fn av_rank(
    net: &ContactNetwork,
    window: Range<u32>,
    kinds: KindSet,
    respondents: &[NodeId],
    rng: &mut Rng,
) -> Result<RankingScores> {
    let adj = net.adjacency(window, kinds)?;
    let observed: std::collections::BTreeSet<NodeId> = respondents.iter().copied().collect();
    let mut counts: BTreeMap<NodeId, f64> = respondents.iter().map(|&n| (n, 0.0)).collect();
    let mut pool = Vec::new();
    for &node in &observed {
        pool.clear();
        pool.extend(
            adj.neighbors(node)
                .iter()
                .copied()
                .filter(|n| observed.contains(n)),
        );
        if pool.is_empty() {
            continue;
        }
        let named = pool[rng.random_range(0..pool.len())];
        *counts.entry(named).or_default() += 1.0;
    }
    Ok(RankingScores {
        strategy: Strategy::Acquaintance,
        scores: counts.into_iter().collect(),
    })
}

/// DV: contact degree over the window.
pub fn dv_rank(
    net: &ContactNetwork,
    window: Range<u32>,
    kinds: KindSet,
    candidates: &[NodeId],
    counting: DegreeCounting,
) -> Result<RankingScores> {
    let scores: Vec<f64> = match counting {
        DegreeCounting::Distinct => {
            let adj = net.adjacency(window, kinds)?;
            candidates.iter().map(|&n| adj.degree(n) as f64).collect()
        }
        DegreeCounting::Multiset => {
            net.check_days(&window)?;
            let mut links = vec![0u64; net.n_nodes() as usize];
            for day in window {
                for l in net.day(day).iter().filter(|l| kinds.admits(l)) {
                    links[l.host.index()] += 1;
                    links[l.neighbor.index()] += 1;
                }
            }
            candidates.iter().map(|&n| links[n.index()] as f64).collect()
        }
    };
    Ok(RankingScores {
        strategy: Strategy::Degree,
        scores: sorted_pairs(candidates, scores),
    })
}

fn sorted_pairs(candidates: &[NodeId], scores: Vec<f64>) -> Vec<(NodeId, f64)> {
    let mut pairs: Vec<(NodeId, f64)> = candidates.iter().copied().zip(scores).collect();
    pairs.sort_by_key(|(n, _)| *n);
    pairs.dedup_by_key(|(n, _)| *n);
    pairs
}

/// Mean host stay (seconds) over all profiled visits, if any.
pub fn mean_visit_stay(profiles: &[VisitProfile]) -> Option<f64> {
    let (sum, n) = profiles
        .iter()
        .flat_map(|p| p.visit_stays.iter())
        .fold((0.0, 0usize), |(s, n), &t| (s + t as f64, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores `candidates` (ascending, typically the observed sample of nodes
/// active in the window) with `strategy`.
///
/// IMV reads the location class of each visit from everyone linked to it,
/// whatever the link kind: a place's class describes the place, not which
/// of its visitors the respondent happened to see. IMVE and IMVT count only
/// the configured kinds.
pub fn rank(
    net: &ContactNetwork,
    strategy: Strategy,
    params: &RankingParams,
    candidates: &[NodeId],
    rng: &mut Rng,
) -> Result<RankingScores> {
    params.validate()?;
    let window = params.window();
    net.check_days(&window)?;
    let scores = match strategy {
        Strategy::Random => {
            let mut nodes = candidates.to_vec();
            nodes.sort_unstable();
            nodes.dedup();
            nodes.into_iter().map(|n| (n, rng.random::<f64>())).collect()
        }
        Strategy::Acquaintance => {
            return av_rank(net, window, params.kinds, candidates, rng);
        }
        Strategy::Degree => {
            return dv_rank(net, window, params.kinds, candidates, params.degree_counting);
        }
        Strategy::Movement | Strategy::MovementExact | Strategy::MovementTemporal => {
            let kinds = if strategy == Strategy::Movement {
                KindSet::ALL
            } else {
                params.kinds
            };
            let profiles = build_visit_profiles(net, window, kinds, &params.class_table())?;
            let t0 = match params.t0 {
                Some(t0) => t0,
                None => mean_visit_stay(&profiles).unwrap_or(1.0),
            };
            let mut out = Vec::with_capacity(candidates.len());
            for &n in candidates {
                let p = &profiles[n.index()];
                let s = match strategy {
                    Strategy::Movement => imv_rank(p, params)?,
                    Strategy::MovementExact => imve_rank(p, params)?,
                    _ => imvt_rank(p, params.beta0, t0)?,
                };
                out.push(s);
            }
            sorted_pairs(candidates, out)
        }
    };
    Ok(RankingScores { strategy, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Provenance, SpdtLink};
    use crate::rng;

    #[test]
    fn class_potential_values() {
        let t = LocationClassTable::default();
        let w1 = class_potential(0.1, 0, &t).unwrap();
        assert!((w1 - 0.5 * (2.0 - 0.9 - 0.9f64.powi(5))).abs() < 1e-15);
        assert!((w1 - 0.2548).abs() < 1e-4);
        let w3 = class_potential(0.1, 2, &t).unwrap();
        assert!((w3 - 0.8715).abs() < 1e-4);
        let ws: Vec<f64> = (0..6).map(|i| class_potential(0.1, i, &t).unwrap()).collect();
        assert!(ws.windows(2).all(|w| w[0] < w[1]), "{ws:?}");
        assert!(class_potential(1e-12, 0, &t).unwrap() < 1e-10);
        assert!(class_potential(0.0, 0, &t).is_err());
        assert!(class_potential(1.0, 0, &t).is_err());
        assert!(class_potential(0.1, 6, &t).is_err());
    }

    fn profile(classes: [u32; 6], degrees: &[u32], stays: &[i64]) -> VisitProfile {
        VisitProfile {
            node: NodeId(0),
            class_visits: classes,
            visit_degrees: degrees.to_vec(),
            visit_stays: stays.to_vec(),
        }
    }

    #[test]
    fn imv_examples() {
        let params = RankingParams::default();
        assert_eq!(imv_rank(&VisitProfile::empty(NodeId(0)), &params).unwrap(), 0.0);
        let w = imv_rank(&profile([2, 0, 1, 0, 0, 0], &[], &[]), &params).unwrap();
        assert!((w - 1.381).abs() < 1e-3, "{w}");
        let w3 = imv_rank(&profile([6, 0, 3, 0, 0, 0], &[], &[]), &params).unwrap();
        assert!((w3 - 3.0 * w).abs() < 1e-12);
    }

    #[test]
    fn imve_examples() {
        let params = RankingParams::default();
        assert_eq!(imve_rank(&VisitProfile::empty(NodeId(0)), &params).unwrap(), 0.0);
        let w = imve_rank(&profile([1, 1, 0, 0, 0, 0], &[3, 10], &[60, 60]), &params).unwrap();
        assert!((w - 0.9223).abs() < 1e-4, "{w}");
        assert!(w <= 2.0);
    }

    #[test]
    fn imvt_examples() {
        let t0 = 1800.0;
        assert_eq!(stay_transmission_probability(0.1, 0.0, t0), 0.0);
        let b = stay_transmission_probability(0.1, t0, t0);
        assert!((b - 0.16 * (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((b - 0.1011).abs() < 1e-4);
        assert!((stay_transmission_probability(0.1, 1e9, t0) - 0.16).abs() < 1e-12);
        let p = profile([1, 0, 0, 0, 0, 0], &[3], &[0]);
        assert_eq!(imvt_rank(&p, 0.1, t0).unwrap(), 0.0);
        // probability above one is refused
        let p = profile([1, 0, 0, 0, 0, 0], &[3], &[1_000_000]);
        assert!(imvt_rank(&p, 0.7, t0).is_err());
    }

    #[test]
    fn beta0_bound_is_enforced() {
        let params = RankingParams {
            beta0: 0.7,
            ..RankingParams::default()
        };
        assert!(params.validate().is_err());
        let params = RankingParams {
            enforce_beta0_bound: false,
            ..params
        };
        assert!(params.validate().is_ok());
    }

    fn star(k: u32) -> ContactNetwork {
        let links = (1..=k).map(|leaf| SpdtLink::new(0, leaf, (0, 3600), (10, 3000)));
        ContactNetwork::from_links(k + 1, 7, Provenance::Synthetic, links).unwrap()
    }

    #[test]
    fn av_star_hub_gets_every_leaf_vote() {
        let k = 9;
        let net = star(k);
        let all: Vec<NodeId> = (0..=k).map(NodeId).collect();
        let s = av_rank(&net, 0..7, KindSet::ALL, &all, &mut rng::from_seed(3)).unwrap();
        assert_eq!(s.get(NodeId(0)), Some(k as f64));
        let total: f64 = s.scores.iter().map(|(_, v)| v).sum();
        assert_eq!(total, (k + 1) as f64);
    }

    #[test]
    fn av_pair_and_empty() {
        let net = ContactNetwork::from_links(
            2,
            7,
            Provenance::Synthetic,
            [SpdtLink::new(0, 1, (0, 10), (1, 9))],
        )
        .unwrap();
        let all = [NodeId(0), NodeId(1)];
        let s = av_rank(&net, 0..7, KindSet::ALL, &all, &mut rng::from_seed(1)).unwrap();
        assert_eq!(s.scores, vec![(NodeId(0), 1.0), (NodeId(1), 1.0)]);

        let empty = ContactNetwork::from_links(3, 7, Provenance::Synthetic, []).unwrap();
        let all: Vec<NodeId> = (0..3).map(NodeId).collect();
        let s = av_rank(&empty, 0..7, KindSet::ALL, &all, &mut rng::from_seed(1)).unwrap();
        assert!(s.scores.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn av_ignores_unobserved_nodes() {
        let net = star(4);
        let observed = [NodeId(1), NodeId(2)];
        let s = av_rank(&net, 0..7, KindSet::ALL, &observed, &mut rng::from_seed(1)).unwrap();
        // leaves only know the hub, which is not observed
        assert!(s.scores.iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn dv_counts_and_kind_monotonicity() {
        let net = ContactNetwork::from_links(
            5,
            7,
            Provenance::Synthetic,
            vec![
                SpdtLink::new(0, 1, (0, 1800), (600, 1500)),
                SpdtLink::new(0, 2, (0, 1800), (1800, 3600)),
                SpdtLink::new(3, 0, (4000, 5000), (4100, 4900)),
                SpdtLink::new(0, 1, (6000, 7000), (6100, 6900)),
            ],
        )
        .unwrap();
        let all: Vec<NodeId> = (0..5).map(NodeId).collect();
        let dv_all = dv_rank(&net, 0..7, KindSet::ALL, &all, DegreeCounting::Distinct).unwrap();
        let dv_dir = dv_rank(&net, 0..7, KindSet::DIRECT, &all, DegreeCounting::Distinct).unwrap();
        assert_eq!(dv_all.get(NodeId(0)), Some(3.0));
        assert_eq!(dv_all.get(NodeId(4)), Some(0.0));
        for (a, d) in dv_all.scores.iter().zip(&dv_dir.scores) {
            assert!(d.1 <= a.1);
        }
        let multi = dv_rank(&net, 0..7, KindSet::ALL, &all, DegreeCounting::Multiset).unwrap();
        assert_eq!(multi.get(NodeId(0)), Some(4.0));
    }

    #[test]
    fn strategy_codes_parse() {
        for s in Strategy::ALL {
            assert_eq!(s.code().parse::<Strategy>().unwrap(), s);
        }
        assert!("XV".parse::<Strategy>().is_err());
    }
}
