use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spdt_vax::config::{hash_json, Config, SCHEMA_VERSION};
use spdt_vax::harness::{
    cost_at_reduction, write_csv, Experiment, Journal, PointResult, CSV_HEADER,
};
use spdt_vax::ingest::{build_network, densify, read_updates_file};
use spdt_vax::rng::{self, tag};
use spdt_vax::strategy::{rank, sample_observed, Strategy};
use spdt_vax::synthetic::generate;
use spdt_vax::{ContactNetwork, KindSet, NodeId};

use crate::manifest::RunManifest;
use crate::{Cli, CliError, CliResult, Command};

pub fn dispatch(cli: &Cli, config: &Config) -> CliResult<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Ingest {
            traces,
            output,
            max_rejected_fraction,
            densify_days,
        } => ingest(config, out, traces, output, *max_rejected_fraction, *densify_days),
        Command::Generate {
            output,
            nodes,
            days,
        } => cmd_generate(config, out, output, *nodes, *days),
        Command::Rank {
            network,
            strategy,
            fraction,
        } => cmd_rank(config, out, network, *strategy, *fraction),
        Command::Simulate {
            network,
            strategy,
            p,
            fraction,
            replicate,
        } => simulate(config, out, network.as_deref(), *strategy, *p, *fraction, *replicate),
        Command::Sweep { network } => sweep(config, out, network.as_deref()),
        Command::Report { inputs, target } => report(config, out, inputs, *target),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn ingest(
    config: &Config,
    out: &Path,
    traces_path: &Path,
    output: &str,
    max_rejected_fraction: f64,
    densify_days: Option<u32>,
) -> CliResult<()> {
    if !(0.0..=1.0).contains(&max_rejected_fraction) {
        return Err(CliError::Config("--max-rejected-fraction must be in [0, 1]".into()));
    }
    let mut m = RunManifest::start("ingest", config.seed);
    m.input(traces_path)?;
    m.phase("parse");
    let traces = read_updates_file(traces_path)?;

    let rejected_path = out.join("rejected.csv");
    let mut w = create(&rejected_path)?;
    let werr = io_err(&rejected_path);
    writeln!(w, "line,reason").map_err(&werr)?;
    for r in &traces.rejected {
        writeln!(w, "{},\"{}\"", r.line, r.reason.replace('"', "'")).map_err(&werr)?;
    }
    w.flush().map_err(&werr)?;
    m.output(&rejected_path)?;

    let total = traces.accepted + traces.rejected.len();
    if total == 0 {
        eprintln!("warning: {} holds no location updates", traces_path.display());
    }
    let share = if total == 0 {
        0.0
    } else {
        traces.rejected.len() as f64 / total as f64
    };
    if share > max_rejected_fraction {
        let lines: Vec<String> = traces.rejected.iter().take(20).map(|r| r.line.to_string()).collect();
        return Err(CliError::Data(format!(
            "{} of {total} records rejected (tolerance {:.1}%), lines {}{}",
            traces.rejected.len(),
            max_rejected_fraction * 100.0,
            lines.join(", "),
            if traces.rejected.len() > 20 { ", ..." } else { "" }
        )));
    }
    if !traces.rejected.is_empty() {
        eprintln!("{} of {total} records rejected, see {}", traces.rejected.len(), rejected_path.display());
    }

    m.phase("links");
    let ingested = build_network(&traces, &config.ingest)?;
    let net = match densify_days {
        Some(d) => {
            m.phase("densify");
            densify(&ingested.network, d, config.seed)?
        }
        None => ingested.network,
    };

    m.phase("write");
    let net_path = out.join(output);
    net.save(&net_path)?;
    m.output(&net_path)?;
    let users_path = out.join("users.csv");
    let mut w = create(&users_path)?;
    let werr = io_err(&users_path);
    writeln!(w, "node_id,external_id").map_err(&werr)?;
    for (i, u) in ingested.users.iter().enumerate() {
        writeln!(w, "{i},{u}").map_err(&werr)?;
    }
    w.flush().map_err(&werr)?;
    m.output(&users_path)?;

    m.config_hash = hash_json(&(
        SCHEMA_VERSION,
        &config.ingest,
        densify_days,
        densify_days.map(|_| config.seed),
        &m.inputs[0].sha256,
    ))?;
    eprintln!(
        "{} users, {} stays, {} links over {} days (time zero = unix {})",
        net.n_nodes(),
        ingested.stays,
        net.link_count(),
        net.n_days(),
        ingested.origin
    );
    m.finish(out)
}

fn cmd_generate(
    config: &Config,
    out: &Path,
    output: &str,
    nodes: Option<u32>,
    days: Option<u32>,
) -> CliResult<()> {
    let mut params = config.gdt.clone();
    if let Some(n) = nodes {
        params.n_nodes = n;
    }
    if let Some(d) = days {
        params.n_days = d;
    }
    let mut m = RunManifest::start("generate", config.seed);
    m.config_hash = hash_json(&(SCHEMA_VERSION, &params, config.seed))?;
    m.phase("generate");
    let net = generate(&params, config.seed).map_err(|e| match e {
        spdt_vax::Error::Domain(msg) => CliError::Config(format!("gdt: {msg}")),
        other => other.into(),
    })?;
    m.phase("write");
    let path = out.join(output);
    net.save(&path)?;
    m.output(&path)?;
    eprintln!(
        "{} nodes, {} days, {} links, digest {}",
        net.n_nodes(),
        net.n_days(),
        net.link_count(),
        net.digest()
    );
    m.finish(out)
}

fn load_network(m: &mut RunManifest, path: &Path) -> CliResult<ContactNetwork> {
    m.input(path)?;
    m.phase("load");
    Ok(ContactNetwork::load(path)?)
}

fn network_path(config: &Config, flag: Option<&Path>) -> CliResult<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| config.experiment.network.as_ref().map(PathBuf::from))
        .ok_or_else(|| {
            CliError::Config("no network: pass --network or set experiment.network".into())
        })
}

fn cmd_rank(config: &Config, out: &Path, network: &Path, strategy: Strategy, f: f64) -> CliResult<()> {
    let mut m = RunManifest::start("rank", config.seed);
    let net = load_network(&mut m, network)?;
    m.phase("rank");
    // same streams as the sweep harness, so the scores match its rankings
    let all: Vec<NodeId> = (0..net.n_nodes()).map(NodeId).collect();
    let mut r = rng::substream(config.seed, &[tag::RANKING, 0, f.to_bits()]);
    let candidates = sample_observed(&all, f, &mut r)?;
    let mut r = rng::substream(config.seed, &[tag::RANKING, 1, strategy as u64, f.to_bits()]);
    let scores = rank(&net, strategy, &config.ranking, &candidates, &mut r)?;
    m.config_hash = hash_json(&(
        SCHEMA_VERSION,
        config.seed,
        &config.ranking,
        strategy,
        f,
        net.digest(),
    ))?;
    let path = out.join(format!("ranking_{}.csv", strategy.code()));
    scores
        .write_csv(create(&path)?, &m.config_hash)
        .map_err(io_err(&path))?;
    m.output(&path)?;
    m.finish(out)
}

fn experiment<'a>(config: &Config, net: &'a ContactNetwork) -> CliResult<Experiment<'a>> {
    Ok(Experiment::new(
        net,
        config.disease.clone(),
        config.ranking.clone(),
        config.experiment.clone(),
        config.seed,
    )?)
}

fn simulate(
    config: &Config,
    out: &Path,
    network: Option<&Path>,
    strategy: Option<Strategy>,
    p: f64,
    f: f64,
    replicate: u32,
) -> CliResult<()> {
    let mut m = RunManifest::start("simulate", config.seed);
    let net = load_network(&mut m, &network_path(config, network)?)?;
    let mut exp = experiment(config, &net)?;
    m.config_hash = exp.config_hash.clone();
    m.phase("simulate");
    let record = exp.replicate(strategy, p, f, replicate)?;
    let path = out.join("simulate.json");
    serde_json::to_writer_pretty(create(&path)?, &record)
        .map_err(|e| CliError::Data(e.to_string()))?;
    m.output(&path)?;
    eprintln!(
        "outbreak {} (seeds {:?}), vaccinated {}",
        record.outbreak_size,
        record.seeds.iter().map(|s| s.0).collect::<Vec<_>>(),
        record.vaccinated
    );
    m.finish(out)
}

fn sweep(config: &Config, out: &Path, network: Option<&Path>) -> CliResult<()> {
    let mut m = RunManifest::start("sweep", config.seed);
    let net = load_network(&mut m, &network_path(config, network)?)?;
    let mut exp = experiment(config, &net)?;
    m.config_hash = exp.config_hash.clone();

    let journal_path = out.join("replicates.jsonl");
    let mut journal = Journal::open(&journal_path, &exp.config_hash)?;
    if journal.completed() > 0 {
        eprintln!("resuming: {} replicates already done", journal.completed());
    }
    m.phase("sweep");
    let result = exp.sweep(Some(&mut journal))?;
    journal.finish(&result.replicates)?;
    m.phase("write");
    let csv_path = out.join("sweep.csv");
    write_csv(&result, create(&csv_path)?).map_err(io_err(&csv_path))?;
    m.output(&csv_path)?;
    m.output(&journal_path)?;
    eprintln!(
        "{} points x {} replicates, reference outbreak {:.2}",
        result.points.len(),
        config.experiment.n_replicates,
        result.reference
    );
    m.finish(out)
}

fn parse_sweep_csv(path: &Path) -> CliResult<(String, Vec<PointResult>)> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |line: usize, msg: String| CliError::Data(format!("{}:{line}: {msg}", path.display()));
    match lines.next() {
        Some(Ok(h)) if h.trim() == CSV_HEADER => {}
        _ => return Err(bad(1, "not a sweep CSV (header mismatch)".into())),
    }
    let mut hash = String::new();
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(bad(n, format!("expected 10 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, format!("bad number `{s}`")));
        let int = |s: &str| s.parse::<u32>().map_err(|_| bad(n, format!("bad count `{s}`")));
        points.push(PointResult {
            strategy: match f[0] {
                "none" => None,
                s => Some(Strategy::from_str(s).map_err(|e| bad(n, e.to_string()))?),
            },
            p: num(f[1])?,
            f: num(f[2])?,
            kinds: KindSet::parse(f[3]).map_err(|e| bad(n, e.to_string()))?,
            mean_outbreak: num(f[4])?,
            eta: match f[5] {
                "NA" => None,
                s => Some(num(s)?),
            },
            over_threshold_count: int(f[6])?,
            mean_vaccinated: num(f[7])?,
            mean_skipped: 0.0,
            n_replicates: int(f[8])?,
        });
        hash = f[9].to_string();
    }
    Ok((hash, points))
}

fn summarise(name: &str, hash: &str, points: &[PointResult], target: f64) -> String {
    let mut s = String::new();
    let short = &hash[..hash.len().min(12)];
    s.push_str(&format!("== {name} (config {short})\n"));
    if let Some(r) = points.iter().find(|p| p.strategy.is_none()) {
        s.push_str(&format!(
            "reference: mean outbreak {:.2} over {} replicates\n",
            r.mean_outbreak, r.n_replicates
        ));
    }
    s.push_str(&format!(
        "{:<6} {:>5} {:>8} {:>12} {:>8} {:>6} {:>12}\n",
        "strat", "F", "P", "mean_outbr", "eta%", "over", "vaccinated"
    ));
    let mut keys: Vec<(Strategy, u64)> = Vec::new();
    for p in points {
        let Some(st) = p.strategy else { continue };
        let eta = p.eta.map_or("NA".to_string(), |e| format!("{e:.1}"));
        s.push_str(&format!(
            "{:<6} {:>5} {:>8} {:>12.2} {:>8} {:>6} {:>12.1}\n",
            st.code(),
            p.f,
            p.p,
            p.mean_outbreak,
            eta,
            p.over_threshold_count,
            p.mean_vaccinated
        ));
        if !keys.contains(&(st, p.f.to_bits())) {
            keys.push((st, p.f.to_bits()));
        }
    }
    for (st, fbits) in keys {
        let f = f64::from_bits(fbits);
        let mut curve: Vec<&PointResult> = points
            .iter()
            .filter(|p| p.strategy == Some(st) && p.f == f)
            .collect();
        curve.sort_by(|a, b| a.p.total_cmp(&b.p));
        let contained = curve
            .iter()
            .find(|p| p.over_threshold_count == 0)
            .map_or("not reached".to_string(), |p| format!("P = {}%", p.p));
        let cost = cost_at_reduction(points, st, f, target)
            .map_or("not reached".to_string(), |c| format!("{c:.1} vaccinated"));
        s.push_str(&format!(
            "{} F={f}: containment {contained}; {target}% reduction: {cost}\n",
            st.code()
        ));
    }
    s
}

fn report(config: &Config, out: &Path, inputs: &[PathBuf], target: f64) -> CliResult<()> {
    let mut m = RunManifest::start("report", config.seed);
    let mut text = String::new();
    let mut hashes = Vec::new();
    for path in inputs {
        m.input(path)?;
        let (hash, points) = parse_sweep_csv(path)?;
        text.push_str(&summarise(&path.display().to_string(), &hash, &points, target));
        text.push('\n');
        hashes.push(hash);
    }
    m.config_hash = hash_json(&(SCHEMA_VERSION, hashes, target))?;
    print!("{text}");
    let path = out.join("report.txt");
    let mut w = create(&path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    drop(w);
    m.output(&path)?;
    m.finish(out)
}
