//! Oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use proptest::prelude::*;
use spdt_vax::epidemic::DiseaseParams;
use spdt_vax::{ContactNetwork, NodeId, Provenance, SpdtLink, DAY_SECONDS};

/// Exposure by direct numerical integration of the concentration model:
/// `dC/dt = g/V · [host present] − r C`, `dE/dt = p C · [neighbour present]`,
/// with classic RK4 on each piece between breakpoints.
pub fn rk4_exposure(link: &SpdtLink, r: f64, params: &DiseaseParams, steps: usize) -> f64 {
    let (g, p, v) = (params.generation_rate, params.pulmonary_rate, params.volume);
    let ts = link.host_start as f64;
    let tl = link.host_end as f64;
    let a = (link.nbr_start.max(link.host_start)) as f64;
    let b = (link.nbr_end.max(link.nbr_start).max(link.host_start)) as f64;
    let mut cuts = vec![ts, tl, a, b];
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (mut c, mut e) = (0.0f64, 0.0f64);
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo || lo >= b {
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let emit = if mid >= ts && mid <= tl { g / v } else { 0.0 };
        let inhale = if mid >= a && mid <= b { p } else { 0.0 };
        let h = (hi - lo) / steps as f64;
        for _ in 0..steps {
            let f = |c: f64| (emit - r * c, inhale * c);
            let (k1c, k1e) = f(c);
            let (k2c, k2e) = f(c + 0.5 * h * k1c);
            let (k3c, k3e) = f(c + 0.5 * h * k2c);
            let (k4c, k4e) = f(c + h * k3c);
            c += h / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c);
            e += h / 6.0 * (k1e + 2.0 * k2e + 2.0 * k3e + k4e);
        }
    }
    e
}

/// Nodes reachable from `seeds` along time-respecting link chains when every
/// exposure infects. A node infected on day `d` transmits on days
/// `d + 1 ..= d + tau`; seeds transmit on `start .. start + seed_days`.
/// Vaccinated nodes neither catch nor pass on infection. Found by
/// exhaustive depth-first search over chains, pruned only when a node is
/// revisited no earlier than before.
pub fn reachable(
    net: &ContactNetwork,
    seeds: &[NodeId],
    vaccinated: &[NodeId],
    start: u32,
    n_days: u32,
    tau: u32,
    seed_days: u32,
) -> BTreeSet<NodeId> {
    let end = start + n_days;
    let blocked: BTreeSet<NodeId> = vaccinated.iter().copied().collect();
    let seed_set: BTreeSet<NodeId> = seeds.iter().copied().collect();
    let mut earliest: Vec<Option<u32>> = vec![None; net.n_nodes() as usize];
    let links: Vec<SpdtLink> = net.links().copied().collect();

    fn walk(
        node: NodeId,
        window: (u32, u32),
        links: &[SpdtLink],
        blocked: &BTreeSet<NodeId>,
        seeds: &BTreeSet<NodeId>,
        earliest: &mut Vec<Option<u32>>,
        end: u32,
        tau: u32,
    ) {
        for l in links.iter().filter(|l| l.host == node) {
            let day = l.day() as u32;
            if day < window.0 || day >= window.1 || day >= end {
                continue;
            }
            let nb = l.neighbor;
            if blocked.contains(&nb) || seeds.contains(&nb) {
                continue;
            }
            if earliest[nb.index()].is_some_and(|d| d <= day) {
                continue;
            }
            earliest[nb.index()] = Some(day);
            walk(nb, (day + 1, day + 1 + tau), links, blocked, seeds, earliest, end, tau);
        }
    }

    for &s in seeds {
        walk(s, (start, start + seed_days), &links, &blocked, &seed_set, &mut earliest, end, tau);
    }
    earliest
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_some())
        .map(|(i, _)| NodeId(i as u32))
        .collect()
}

/// A link on `day` from `host` to `nb`, with offsets inside the day in
/// minutes.
pub fn link_on(day: u32, host: u32, nb: u32, host_iv: (i64, i64), nbr_iv: (i64, i64)) -> SpdtLink {
    let base = day as i64 * DAY_SECONDS;
    SpdtLink::new(
        host,
        nb,
        (base + host_iv.0 * 60, base + host_iv.1 * 60),
        (base + nbr_iv.0 * 60, base + nbr_iv.1 * 60),
    )
}

/// Any valid link on one of `n_days` days between distinct nodes below `n`.
pub fn arb_link(n: u32, n_days: u32) -> impl Strategy<Value = SpdtLink> {
    (0..n, 1..n, 0..n_days, 0i64..600, 1i64..240, 0i64..300, 1i64..240).prop_map(
        move |(h, off, day, s, len, delay, stay)| {
            let nb = (h + off) % n;
            link_on(day, h, nb, (s, s + len), (s + delay, s + delay + stay))
        },
    )
}

pub fn arb_network(
    max_nodes: u32,
    n_days: u32,
    max_links: usize,
) -> impl Strategy<Value = ContactNetwork> {
    (2..=max_nodes).prop_flat_map(move |n| {
        prop::collection::vec(arb_link(n, n_days), 0..max_links).prop_map(move |links| {
            ContactNetwork::from_links(n, n_days, Provenance::Synthetic, links).unwrap()
        })
    })
}

/// Disease model in which any exposure infects and infectious periods are
/// fixed.
pub fn certain(tau: u32, seed_days: u32) -> DiseaseParams {
    DiseaseParams {
        tau_range: [tau, tau],
        seed_infectious_days: seed_days,
        transmission: spdt_vax::epidemic::TransmissionMode::Certain,
        ..DiseaseParams::default()
    }
}

pub mod props {
    //! Property bodies shared by the per-module tests and the acceptance
    //! suite. Each takes generated inputs and fails through `prop_assert!`.

    use std::collections::BTreeSet;

    use proptest::prelude::*;
    use proptest::test_runner::TestCaseError;
    use spdt_vax::epidemic::{
        link_exposure, removal_rate, total_exposure, DiseaseParams, NodeState, RunSetup,
        Simulation, TransmissionMode,
    };
    use spdt_vax::rng;
    use spdt_vax::strategy::{select_for_vaccination, vaccination_quota, RankingScores, Strategy};
    use spdt_vax::{ContactNetwork, NodeId, SpdtLink};

    type Outcome = Result<(), TestCaseError>;

    pub fn pick(net: &ContactNetwork, idx: &[prop::sample::Index]) -> Vec<NodeId> {
        idx.iter()
            .map(|i| NodeId(i.index(net.n_nodes() as usize) as u32))
            .collect()
    }

    /// Outbreak set under `P_I ∈ {0, 1}` against the reachability oracle.
    pub fn reachability(
        net: &ContactNetwork,
        seed: NodeId,
        vac_mask: u16,
        tau: u32,
        seed_days: u32,
        certain_infection: bool,
    ) -> Outcome {
        let n = net.n_nodes();
        let days = net.n_days();
        let vaccinated: Vec<NodeId> = (0..n)
            .filter(|&i| i < 16 && vac_mask >> i & 1 == 1 && NodeId(i) != seed)
            .map(NodeId)
            .collect();
        let setup = RunSetup {
            seeds: vec![seed],
            pre_vaccinated: vaccinated.clone(),
            start_day: 0,
            n_days: days,
        };
        let params = if certain_infection {
            super::certain(tau, seed_days)
        } else {
            DiseaseParams {
                sigma: 0.0,
                transmission: TransmissionMode::DoseResponse,
                ..super::certain(tau, seed_days)
            }
        };
        let mut sim = Simulation::new(net, &params, &setup, 9).unwrap();
        for _ in 0..days {
            sim.step_day().unwrap();
        }
        let got: BTreeSet<NodeId> = sim.ever_infected().iter().copied().collect();
        let want = if certain_infection {
            super::reachable(net, &[seed], &vaccinated, 0, days, tau, seed_days)
        } else {
            BTreeSet::new()
        };
        prop_assert_eq!(got, want);
        Ok(())
    }

    /// Population conservation and vaccinated-never-infected over a run.
    pub fn conservation(
        net: &ContactNetwork,
        seeds: &[NodeId],
        vac: &[NodeId],
        run_seed: u64,
    ) -> Outcome {
        let n = net.n_nodes() as usize;
        let days = net.n_days();
        let setup = RunSetup {
            seeds: seeds.to_vec(),
            pre_vaccinated: vac.to_vec(),
            start_day: 0,
            n_days: days,
        };
        let params = DiseaseParams {
            sigma: 50.0,
            ..DiseaseParams::default()
        };
        let mut sim = Simulation::new(net, &params, &setup, run_seed).unwrap();
        let vaccinated: Vec<NodeId> = (0..n as u32)
            .map(NodeId)
            .filter(|v| sim.states()[v.index()] == NodeState::Vaccinated)
            .collect();
        for _ in 0..days {
            let before = sim.counts();
            let new = sim.step_day().unwrap();
            let after = sim.counts();
            prop_assert_eq!(after.total(), n);
            prop_assert_eq!(after.vaccinated, before.vaccinated);
            prop_assert_eq!(before.susceptible - after.susceptible, new as usize);
            prop_assert!(after.recovered >= before.recovered);
        }
        for v in &vaccinated {
            prop_assert!(!sim.ever_infected().contains(v));
            prop_assert!(!seeds.contains(v));
        }
        let distinct: BTreeSet<_> = sim.ever_infected().iter().collect();
        prop_assert_eq!(distinct.len(), sim.ever_infected().len());
        Ok(())
    }

    pub fn additivity(links: &[SpdtLink], minutes: &[f64]) -> Outcome {
        let params = DiseaseParams::default();
        let rates: Vec<f64> = minutes.iter().map(|&m| removal_rate(m)).collect();
        let total = total_exposure(links, rates.iter().copied(), &params).unwrap();
        let sum: f64 = links
            .iter()
            .zip(&rates)
            .map(|(l, &r)| link_exposure(l, r, &params).unwrap())
            .sum();
        prop_assert!((total - sum).abs() <= 1e-12 * sum.max(1e-300));
        Ok(())
    }

    /// Longer presence on either side, or slower particle removal, never
    /// lowers exposure.
    pub fn monotonicity(link: SpdtLink, extra: i64, m1: f64, m2: f64) -> Outcome {
        let params = DiseaseParams::default();
        let r = removal_rate(m1);
        let base = link_exposure(&link, r, &params).unwrap();
        prop_assert!(base > 0.0);
        let mut longer_stay = link;
        longer_stay.nbr_end += extra;
        prop_assert!(link_exposure(&longer_stay, r, &params).unwrap() >= base * (1.0 - 1e-12));
        let mut longer_host = link;
        longer_host.host_end += extra;
        prop_assert!(link_exposure(&longer_host, r, &params).unwrap() >= base * (1.0 - 1e-12));
        let (slow, fast) = if m1 >= m2 { (m1, m2) } else { (m2, m1) };
        prop_assert!(
            link_exposure(&link, removal_rate(slow), &params).unwrap()
                >= link_exposure(&link, removal_rate(fast), &params).unwrap() * (1.0 - 1e-12)
        );
        Ok(())
    }

    pub fn scores(values: &[f64]) -> RankingScores {
        RankingScores {
            strategy: Strategy::Degree,
            scores: values
                .iter()
                .enumerate()
                .map(|(i, &s)| (NodeId(i as u32), s))
                .collect(),
        }
    }

    /// Selection size is the quota (capped by the candidates), best first,
    /// nothing better left out.
    pub fn selection(values: &[f64], p: f64, n_extra: u32, seed: u64) -> Outcome {
        let s = scores(values);
        let n_total = values.len() as u32 + n_extra;
        let quota = vaccination_quota(p, n_total).unwrap();
        let sel = select_for_vaccination(&s, p, n_total, &mut rng::from_seed(seed)).unwrap();
        prop_assert_eq!(sel.nodes.len(), quota.min(values.len()));
        prop_assert_eq!(sel.shortfall, quota.saturating_sub(values.len()));
        let distinct: BTreeSet<_> = sel.nodes.iter().collect();
        prop_assert_eq!(distinct.len(), sel.nodes.len());
        let chosen: Vec<f64> = sel.nodes.iter().map(|n| values[n.index()]).collect();
        prop_assert!(chosen.windows(2).all(|w| w[0] >= w[1]));
        if let Some(&worst) = chosen.last() {
            let best_left = values
                .iter()
                .enumerate()
                .filter(|(i, _)| !sel.nodes.contains(&NodeId(*i as u32)))
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(best_left <= worst);
        }
        Ok(())
    }

    /// `ties` equal scores compete for `slots` places after one clear
    /// winner; each tied node should be picked `slots / ties` of the time.
    /// Returns the largest deviation from that share over `trials` draws.
    pub fn tie_break_deviation(ties: usize, slots: usize, trials: u64) -> f64 {
        let mut values = vec![9.0];
        values.extend(std::iter::repeat_n(1.0, ties));
        values.push(0.0);
        let n = values.len() as u32;
        let p = (slots + 1) as f64 * 100.0 / n as f64;
        let s = scores(&values);
        let mut hits = vec![0u64; values.len()];
        for t in 0..trials {
            for node in select_for_vaccination(&s, p, n, &mut rng::from_seed(t))
                .unwrap()
                .nodes
            {
                hits[node.index()] += 1;
            }
        }
        assert_eq!(hits[0], trials);
        assert_eq!(hits[values.len() - 1], 0);
        let share = slots as f64 / ties as f64;
        hits[1..=ties]
            .iter()
            .map(|&h| (h as f64 / trials as f64 - share).abs())
            .fold(0.0, f64::max)
    }
}
