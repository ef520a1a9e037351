//! GPS location updates to an SPDT contact network.
//!
//! 1. Updates are parsed, grouped per user and sorted by time.
//! 2. Each user's updates are cut into stays: consecutive updates within
//!    `radius_m` of the stay's first update.
//! 3. Every stay is treated as a host visit. Another user's stay anchored
//!    within `radius_m` of it, with enough updates, that starts while the
//!    host is there or within `delta` seconds after it leaves, yields a link.

pub mod geo;

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{ContactNetwork, NodeId, Provenance, SpdtLink};
use crate::rng::{self, tag};
use crate::DAY_SECONDS;

use geo::{haversine_m, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestionParams {
    /// Proximity radius, metres.
    pub radius_m: f64,
    /// How long after the host leaves a neighbour may still arrive, seconds.
    pub delta_s: i64,
    /// Updates a neighbour needs at the place to count as staying there.
    pub min_neighbor_updates: u32,
}

impl Default for IngestionParams {
    fn default() -> Self {
        IngestionParams {
            radius_m: 20.0,
            delta_s: 3600,
            min_neighbor_updates: 2,
        }
    }
}

impl IngestionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(Error::Config(format!("radius_m must be positive, got {}", self.radius_m)));
        }
        if self.delta_s < 0 {
            return Err(Error::Config(format!("delta_s must be >= 0, got {}", self.delta_s)));
        }
        if self.min_neighbor_updates < 2 {
            return Err(Error::Config("min_neighbor_updates must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationUpdate {
    pub user: NodeId,
    pub lat: f64,
    pub lon: f64,
    pub t: i64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stay {
    pub user: NodeId,
    /// Position of the first update of the stay.
    pub lat: f64,
    pub lon: f64,
    pub start: i64,
    pub end: i64,
    pub update_count: u32,
}

/// A record that failed to parse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejected {
    pub line: usize,
    pub reason: String,
}

/// Parsed input: per-user traces over dense ids.
#[derive(Debug, Clone, Default)]
pub struct Traces {
    /// External id of each dense user id.
    pub users: Vec<String>,
    /// Updates per user, sorted by time with duplicate timestamps removed.
    pub by_user: Vec<Vec<LocationUpdate>>,
    pub rejected: Vec<Rejected>,
    /// Number of records accepted before de-duplication.
    pub accepted: usize,
}

impl Traces {
    pub fn min_time(&self) -> Option<i64> {
        self.by_user.iter().filter_map(|u| u.first().map(|x| x.t)).min()
    }

    pub fn max_time(&self) -> Option<i64> {
        self.by_user.iter().filter_map(|u| u.last().map(|x| x.t)).max()
    }
}

fn parse_record(line: &str) -> std::result::Result<(String, f64, f64, i64), String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields, found {}", fields.len()));
    }
    if fields[0].is_empty() {
        return Err("empty user id".into());
    }
    let lat: f64 = fields[1].parse().map_err(|_| format!("bad latitude `{}`", fields[1]))?;
    let lon: f64 = fields[2].parse().map_err(|_| format!("bad longitude `{}`", fields[2]))?;
    let t: i64 = fields[3].parse().map_err(|_| format!("bad timestamp `{}`", fields[3]))?;
    if !(-90.0..=90.0).contains(&lat) {
        return Err(format!("latitude {lat} out of range"));
    }
    if !(-180.0..=180.0).contains(&lon) {
        return Err(format!("longitude {lon} out of range"));
    }
    Ok((fields[0].to_string(), lat, lon, t))
}

/// Orders external ids numerically when they are integers, then lexically.
fn id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Reads `user_id,lat,lon,unix_seconds` records. Blank lines and lines
/// starting with `#` are skipped; a first line that does not parse but
/// mentions `lat` is treated as a header.
pub fn read_updates(reader: impl BufRead) -> Result<Traces> {
    let mut raw: Vec<(String, f64, f64, i64)> = Vec::new();
    let mut rejected = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Data(format!("read error at line {}: {e}", i + 1)))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match parse_record(trimmed) {
            Ok(rec) => raw.push(rec),
            Err(_) if i == 0 && trimmed.to_ascii_lowercase().contains("lat") => {}
            Err(reason) => rejected.push(Rejected { line: i + 1, reason }),
        }
    }
    let accepted = raw.len();

    let mut users: Vec<String> = raw.iter().map(|r| r.0.clone()).collect();
    users.sort_by(|a, b| id_order(a, b));
    users.dedup();
    let index: HashMap<&str, u32> = users
        .iter()
        .enumerate()
        .map(|(i, u)| (u.as_str(), i as u32))
        .collect();

    let mut by_user: Vec<Vec<LocationUpdate>> = vec![Vec::new(); users.len()];
    for (user, lat, lon, t) in &raw {
        let id = index[user.as_str()];
        by_user[id as usize].push(LocationUpdate {
            user: NodeId(id),
            lat: *lat,
            lon: *lon,
            t: *t,
        });
    }
    for updates in &mut by_user {
        // stable, so among equal timestamps the last record in the input wins
        updates.sort_by_key(|u| u.t);
        let mut dedup: Vec<LocationUpdate> = Vec::with_capacity(updates.len());
        for u in updates.drain(..) {
            match dedup.last_mut() {
                Some(prev) if prev.t == u.t => *prev = u,
                _ => dedup.push(u),
            }
        }
        *updates = dedup;
    }
    Ok(Traces {
        users,
        by_user,
        rejected,
        accepted,
    })
}

/// Opens a trace file, transparently decompressing gzip input.
pub fn read_updates_file(path: &Path) -> Result<Traces> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        read_updates(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        read_updates(BufReader::new(file))
    }
}

/// Greedy stay segmentation of one user's time-sorted updates.
pub fn detect_stays(updates: &[LocationUpdate], params: &IngestionParams) -> Vec<Stay> {
    let mut stays = Vec::new();
    let mut current: Option<Stay> = None;
    for u in updates {
        match current.as_mut() {
            Some(s) if haversine_m(s.lat, s.lon, u.lat, u.lon) <= params.radius_m => {
                s.end = u.t;
                s.update_count += 1;
            }
            _ => {
                if let Some(done) = current.take() {
                    stays.push(done);
                }
                current = Some(Stay {
                    user: u.user,
                    lat: u.lat,
                    lon: u.lon,
                    start: u.t,
                    end: u.t,
                    update_count: 1,
                });
            }
        }
    }
    stays.extend(current);
    stays
}

/// Stays of every user, ordered by (user, start).
pub fn detect_all_stays(traces: &Traces, params: &IngestionParams) -> Vec<Stay> {
    traces
        .by_user
        .par_iter()
        .map(|u| detect_stays(u, params))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Links for every host stay. Links whose neighbour presence is cut to zero
/// length at `t_l + delta` are dropped. The location tag of a link is the index of
/// its host stay in `stays`. Output is sorted canonically.
pub fn extract_links(stays: &[Stay], params: &IngestionParams) -> Vec<SpdtLink> {
    let mut grid = Grid::new(2.0 * params.radius_m);
    for (i, s) in stays.iter().enumerate() {
        if s.update_count >= params.min_neighbor_updates {
            grid.insert(s.lat, s.lon, i as u32);
        }
    }
    let mut links: Vec<SpdtLink> = stays
        .par_iter()
        .enumerate()
        .map_init(Vec::new, |buf, (hi, host)| {
            grid.candidates(host.lat, host.lon, params.radius_m, buf);
            let mut out = Vec::new();
            for &ni in buf.iter() {
                let nb = &stays[ni as usize];
                if nb.user == host.user
                    || nb.start < host.start
                    || nb.start > host.end + params.delta_s
                    || haversine_m(host.lat, host.lon, nb.lat, nb.lon) > params.radius_m
                {
                    continue;
                }
                let nbr_end = nb.end.min(host.end + params.delta_s);
                // presence cut to nothing carries no exposure
                if nbr_end == nb.start {
                    continue;
                }
                out.push(SpdtLink {
                    host: host.user,
                    host_start: host.start,
                    host_end: host.end,
                    neighbor: nb.user,
                    nbr_start: nb.start,
                    nbr_end,
                    location_tag: Some(hi as u64),
                });
            }
            out
        })
        .flatten()
        .collect();
    links.sort_unstable();
    links
}

/// Result of ingesting a trace set.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub network: ContactNetwork,
    /// Unix time of network time zero (UTC midnight before the first update).
    pub origin: i64,
    pub users: Vec<String>,
    pub stays: usize,
    pub rejected: Vec<Rejected>,
}

/// Stays, links and network assembly. Times are rebased so the network
/// starts at the UTC midnight preceding the first update.
pub fn build_network(traces: &Traces, params: &IngestionParams) -> Result<Ingested> {
    params.validate()?;
    let n_nodes = traces.users.len() as u32;
    let (origin, n_days) = match (traces.min_time(), traces.max_time()) {
        (Some(lo), Some(hi)) => {
            let origin = lo.div_euclid(DAY_SECONDS) * DAY_SECONDS;
            (origin, ((hi - origin).div_euclid(DAY_SECONDS) + 1) as u32)
        }
        _ => (0, 0),
    };
    let stays = detect_all_stays(traces, params);
    let links = extract_links(&stays, params).into_iter().map(|l| SpdtLink {
        host_start: l.host_start - origin,
        host_end: l.host_end - origin,
        nbr_start: l.nbr_start - origin,
        nbr_end: l.nbr_end - origin,
        ..l
    });
    let network = ContactNetwork::from_links(n_nodes, n_days, Provenance::Ingested, links)?;
    Ok(Ingested {
        network,
        origin,
        users: traces.users.clone(),
        stays: stays.len(),
        rejected: traces.rejected.clone(),
    })
}

/// Fills the days on which a user hosts nothing with time-shifted copies of
/// one of its active days, then extends the network to `target_days` the
/// same way. Users that never host are left alone.
pub fn densify(net: &ContactNetwork, target_days: u32, seed: u64) -> Result<ContactNetwork> {
    let n_days = net.n_days();
    if n_days == 0 || net.link_count() == 0 {
        return Err(Error::domain("cannot densify an empty network"));
    }
    if target_days < n_days {
        return Err(Error::domain(format!(
            "target_days {target_days} is shorter than the network ({n_days} days)"
        )));
    }
    let n = net.n_nodes();
    let mut active: Vec<Vec<u32>> = vec![Vec::new(); n as usize];
    for day in 0..n_days {
        let links = net.day(day);
        let mut i = 0;
        while i < links.len() {
            let host = links[i].host;
            active[host.index()].push(day);
            i += links[i..].partition_point(|l| l.host == host);
        }
    }

    let copies: Vec<Vec<SpdtLink>> = (0..n)
        .into_par_iter()
        .map(|host| {
            let days = &active[host as usize];
            if days.is_empty() {
                return Vec::new();
            }
            let mut rng = rng::substream(seed, &[tag::DENSIFY, host as u64]);
            let mut out = Vec::new();
            let mut is_active = vec![false; n_days as usize];
            for &d in days {
                is_active[d as usize] = true;
            }
            for target in 0..target_days {
                if target < n_days && is_active[target as usize] {
                    continue;
                }
                let src = days[rng.random_range(0..days.len())];
                out.extend(
                    net.hosted(NodeId(host), src)
                        .iter()
                        .map(|l| l.shifted_days(target as i64 - src as i64)),
                );
            }
            out
        })
        .collect();

    ContactNetwork::from_links(
        n,
        target_days,
        Provenance::Densified,
        net.links().copied().chain(copies.into_iter().flatten()),
    )
}
