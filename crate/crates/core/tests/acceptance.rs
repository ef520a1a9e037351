//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and writes a single `ACCEPTANCE <name> PASS|FAIL <detail>` line to
//! stderr, bypassing the test harness's output capture.
//!
//! Run with `cargo test --release -p spdt-vax --test acceptance`.

mod common;

use std::collections::BTreeSet;
use std::io::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use common::{arb_link, arb_network, props, rk4_exposure};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::Rng as _;
use spdt_vax::config::{ExperimentConfig, ExperimentKind};
use spdt_vax::epidemic::{infection_probability, link_exposure, removal_rate, DiseaseParams};
use spdt_vax::harness::{cost_at_reduction, write_csv, write_jsonl, Experiment, SweepResult};
use spdt_vax::strategy::{RankingParams, Strategy};
use spdt_vax::synthetic::{generate, GdtParams};
use spdt_vax::{rng, ContactNetwork, KindSet, LinkKind, NodeId, SpdtLink, DAY_SECONDS};

const GDT_SEED: u64 = 1;
const MASTER_SEED: u64 = 7;

fn report(name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "ACCEPTANCE {name:<22} {verdict} {detail}");
}

fn gdt() -> &'static ContactNetwork {
    static NET: OnceLock<ContactNetwork> = OnceLock::new();
    NET.get_or_init(|| generate(&GdtParams::default(), GDT_SEED).unwrap())
}

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn preventive(strategies: Vec<Strategy>, n_replicates: u32) -> ExperimentConfig {
    ExperimentConfig {
        kind: ExperimentKind::Preventive,
        strategies,
        n_replicates,
        ..ExperimentConfig::default()
    }
}

fn sweep(config: ExperimentConfig, ranking: RankingParams) -> SweepResult {
    let mut exp =
        Experiment::new(gdt(), DiseaseParams::default(), ranking, config, MASTER_SEED).unwrap();
    exp.sweep(None).unwrap()
}

fn random_link(r: &mut rng::Rng, kind: LinkKind) -> SpdtLink {
    let day = r.random_range(0..42i64);
    let ts = day * DAY_SECONDS + r.random_range(0..80_000);
    let tl = ts + r.random_range(60..14_400);
    let (a, b) = match kind {
        LinkKind::DirectOnly => {
            let a = r.random_range(ts..tl);
            (a, r.random_range(a + 1..=tl))
        }
        LinkKind::Mixed => (r.random_range(ts..tl), tl + r.random_range(1..7200)),
        LinkKind::IndirectOnly => {
            let a = tl + r.random_range(0..3600);
            (a, a + r.random_range(1..7200))
        }
    };
    SpdtLink::new(0, 1, (ts, tl), (a, b))
}

#[test]
fn exposure_oracle() {
    let params = DiseaseParams::default();
    let started = Instant::now();
    let mut r = rng::from_seed(2024);
    let kinds = [LinkKind::DirectOnly, LinkKind::Mixed, LinkKind::IndirectOnly];
    let mut worst = 0.0f64;
    let mut seen = [0usize; 3];
    for i in 0..10_000 {
        let link = random_link(&mut r, kinds[i % 3]);
        seen[kinds.iter().position(|&k| k == link.kind()).unwrap()] += 1;
        let minutes = r.random_range(7.5..=300.0);
        let rate = removal_rate(minutes);
        let exact = link_exposure(&link, rate, &params).unwrap();
        let oracle = rk4_exposure(&link, rate, &params, 1000);
        worst = worst.max(((exact - oracle) / oracle).abs());
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && secs < 60.0 && seen.iter().all(|&c| c > 3000);
    report(
        "exposure-oracle",
        pass,
        &format!("max rel err {worst:.2e}, kinds {seen:?}, {secs:.1}s"),
    );
    assert!(pass);
}

#[test]
fn dose_response_anchor() {
    let p = infection_probability(2.1, 0.33).unwrap();
    let pass = (p - 0.5).abs() <= 0.001;
    report("dose-response-anchor", pass, &format!("P(2.1 PFU) = {p:.5}"));
    assert!(pass);
}

#[test]
fn reachability_oracle() {
    let mut run = runner(100);
    let strategy = (
        arb_network(12, 6, 40),
        any::<prop::sample::Index>(),
        any::<u16>(),
        1u32..4,
        1u32..4,
    );
    let result = run.run(&strategy, |(net, seed, mask, tau, seed_days)| {
        let seed = props::pick(&net, &[seed])[0];
        props::reachability(&net, seed, mask, tau, seed_days, true)?;
        props::reachability(&net, seed, mask, tau, seed_days, false)
    });
    let pass = result.is_ok();
    let detail = match &result {
        Ok(()) => "100 topologies, P_I in {0, 1}".to_string(),
        Err(e) => e.to_string(),
    };
    report("reachability-oracle", pass, &detail);
    assert!(pass, "{detail}");
}

#[test]
fn strategy_ordering() {
    let started = Instant::now();
    let strategies = vec![Strategy::Random, Strategy::Acquaintance, Strategy::Degree, Strategy::Movement];
    let config = preventive(strategies, 500);
    let grid = config.p_grid.clone();
    let r = sweep(config, RankingParams::default());
    let mut failures = Vec::new();
    let mut ratio_range = (f64::INFINITY, 0.0f64);
    let mut rv_max = 0.0f64;
    for &p in &grid {
        let m = |s| r.point(s, p, 1.0).unwrap().mean_outbreak;
        let (rv, av, dv, imv) = (m(Strategy::Random), m(Strategy::Acquaintance), m(Strategy::Degree), m(Strategy::Movement));
        if !(dv < av && imv < av && av < rv) {
            failures.push(format!("order at P={p}: RV {rv:.1} AV {av:.1} DV {dv:.1} IMV {imv:.1}"));
        }
        if p >= 0.6 - 1e-9 {
            let ratio = imv / dv;
            ratio_range = (ratio_range.0.min(ratio), ratio_range.1.max(ratio));
            if (ratio - 1.0).abs() > 0.15 {
                failures.push(format!("IMV/DV {ratio:.3} at P={p}"));
            }
        }
        let eta = r.point(Strategy::Random, p, 1.0).unwrap().eta.unwrap();
        rv_max = rv_max.max(eta);
        if eta >= 25.0 {
            failures.push(format!("RV efficiency {eta:.1}% at P={p}"));
        }
    }
    let pass = failures.is_empty();
    let detail = format!(
        "reference {:.1}, IMV/DV in [{:.3}, {:.3}], RV eta <= {rv_max:.1}%, {:.0}s {}",
        r.reference,
        ratio_range.0,
        ratio_range.1,
        started.elapsed().as_secs_f64(),
        failures.join("; ")
    );
    report("strategy-ordering", pass, &detail);
    assert!(pass, "{detail}");
}

fn jaccard(a: &[NodeId], b: &[NodeId]) -> f64 {
    let a: BTreeSet<_> = a.iter().collect();
    let b: BTreeSet<_> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        1.0
    } else {
        a.intersection(&b).count() as f64 / union as f64
    }
}

#[test]
fn indirect_link_effect() {
    let config = preventive(vec![Strategy::Acquaintance, Strategy::Movement], 1);
    let grid = config.p_grid.clone();
    let make = |kinds| {
        Experiment::new(
            gdt(),
            DiseaseParams::default(),
            RankingParams {
                kinds,
                ..RankingParams::default()
            },
            config.clone(),
            MASTER_SEED,
        )
        .unwrap()
    };
    let (mut direct, mut all) = (make(KindSet::DIRECT), make(KindSet::ALL));
    let mut av_max = 0.0f64;
    let mut imv_same = true;
    for &p in &grid {
        let a = direct.selection(Strategy::Acquaintance, p, 1.0).unwrap();
        let b = all.selection(Strategy::Acquaintance, p, 1.0).unwrap();
        av_max = av_max.max(jaccard(&a, &b));
        let a = direct.selection(Strategy::Movement, p, 1.0).unwrap();
        let b = all.selection(Strategy::Movement, p, 1.0).unwrap();
        imv_same &= a == b;
    }
    let pass = av_max < 0.95 && imv_same;
    report(
        "indirect-link-effect",
        pass,
        &format!("AV Jaccard <= {av_max:.3} over the grid, IMV unchanged: {imv_same}"),
    );
    assert!(pass);
}

#[test]
fn ring_vaccination_cost() {
    let started = Instant::now();
    let strategies = vec![Strategy::Degree, Strategy::Movement];
    let base = ExperimentConfig {
        strategies: strategies.clone(),
        p_grid: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0],
        n_replicates: 100,
        ..ExperimentConfig::default()
    };
    let population = sweep(
        ExperimentConfig {
            kind: ExperimentKind::PostOutbreak,
            ..base.clone()
        },
        RankingParams::default(),
    );
    let ring = sweep(
        ExperimentConfig {
            kind: ExperimentKind::Ring,
            ..base
        },
        RankingParams::default(),
    );
    let mut pass = true;
    let mut parts = vec![format!("reference {:.0}", population.reference)];
    for s in strategies {
        let pop = cost_at_reduction(&population.points, s, 1.0, 90.0);
        let node = cost_at_reduction(&ring.points, s, 1.0, 90.0);
        let ok = matches!((node, pop), (Some(n), Some(p)) if n < p);
        pass &= ok;
        let show = |c: Option<f64>| c.map_or("never".to_string(), |c| format!("{c:.0}"));
        parts.push(format!("{s}: ring {} vs population {}", show(node), show(pop)));
    }
    parts.push(format!("{:.0}s", started.elapsed().as_secs_f64()));
    let detail = parts.join(", ");
    report("ring-vaccination-cost", pass, &detail);
    assert!(pass, "{detail}");
}

fn outputs(config: &ExperimentConfig, threads: usize) -> (Vec<u8>, Vec<u8>) {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(|| {
            let r = sweep(config.clone(), RankingParams::default());
            let (mut csv, mut jsonl) = (Vec::new(), Vec::new());
            write_csv(&r, &mut csv).unwrap();
            write_jsonl(&r.replicates, &mut jsonl).unwrap();
            (csv, jsonl)
        })
}

#[test]
fn determinism() {
    let configs = [
        ExperimentConfig {
            p_grid: vec![0.4, 1.0, 2.0],
            ..preventive(
                vec![Strategy::Random, Strategy::Acquaintance, Strategy::Degree, Strategy::Movement],
                24,
            )
        },
        ExperimentConfig {
            kind: ExperimentKind::Ring,
            strategies: vec![Strategy::Random, Strategy::Degree],
            p_grid: vec![20.0],
            f_values: vec![0.5],
            n_replicates: 6,
            ..ExperimentConfig::default()
        },
    ];
    let mut pass = true;
    for config in &configs {
        let one = outputs(config, 1);
        for threads in [2, 4, 8] {
            pass &= outputs(config, threads) == one;
        }
    }
    report(
        "determinism",
        pass,
        "preventive and ring sweeps, CSV and JSONL at 1, 2, 4, 8 threads",
    );
    assert!(pass);
}

#[test]
fn invariant_suite() {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, result: Result<(), String>| {
        if let Err(e) = result {
            failures.push(format!("{name}: {e}"));
        }
    };
    let idx = || any::<prop::sample::Index>();
    check(
        "conservation",
        runner(300)
            .run(
                &(
                    arb_network(30, 5, 120),
                    prop::collection::vec(idx(), 1..4),
                    prop::collection::vec(idx(), 0..10),
                    any::<u64>(),
                ),
                |(net, seeds, vac, seed)| {
                    props::conservation(&net, &props::pick(&net, &seeds), &props::pick(&net, &vac), seed)
                },
            )
            .map_err(|e| e.to_string()),
    );
    check(
        "additivity",
        runner(500)
            .run(
                &(
                    prop::collection::vec(arb_link(5, 3), 1..8),
                    prop::collection::vec(7.5f64..300.0, 8),
                ),
                |(links, minutes)| props::additivity(&links, &minutes),
            )
            .map_err(|e| e.to_string()),
    );
    check(
        "monotonicity",
        runner(500)
            .run(
                &(arb_link(5, 3), 1i64..7200, 7.5f64..300.0, 7.5f64..300.0),
                |(link, extra, m1, m2)| props::monotonicity(link, extra, m1, m2),
            )
            .map_err(|e| e.to_string()),
    );
    check(
        "selection-size",
        runner(500)
            .run(
                &(
                    prop::collection::vec(0u8..6, 0..60),
                    0.0f64..=100.0,
                    0u32..40,
                    any::<u64>(),
                ),
                |(values, p, extra, seed)| {
                    let values: Vec<f64> = values.into_iter().map(f64::from).collect();
                    props::selection(&values, p, extra, seed)
                },
            )
            .map_err(|e| e.to_string()),
    );
    let dev = props::tie_break_deviation(4, 2, 8000);
    check(
        "tie-break",
        if dev < 0.025 { Ok(()) } else { Err(format!("deviation {dev:.4}")) },
    );
    let pass = failures.is_empty();
    report(
        "invariant-suite",
        pass,
        &if pass {
            format!("conservation, vaccinated-never-infected, additivity, monotonicity, selection size, tie-break (max share deviation {dev:.4})")
        } else {
            failures.join("; ")
        },
    );
    assert!(pass, "{failures:?}");
}
