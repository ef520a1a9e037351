//! Day-indexed storage of SPDT links and the degree/neighbourhood queries
//! the rankings and the simulation engine are built on.

mod io;

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::DAY_SECONDS;

pub use io::{read_network, write_binary, write_text, NetworkFormat};

/// Dense node index, contiguous from 0 to `n_nodes - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

/// One transmission opportunity from a host's visit to a neighbour who
/// arrived while the host was present or shortly after it left.
///
/// Times are seconds relative to the network origin. Field order doubles as
/// the canonical sort order of links within a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpdtLink {
    pub host: NodeId,
    pub host_start: i64,
    pub host_end: i64,
    pub neighbor: NodeId,
    pub nbr_start: i64,
    pub nbr_end: i64,
    pub location_tag: Option<u64>,
}

impl SpdtLink {
    pub fn new(host: u32, neighbor: u32, host_iv: (i64, i64), nbr_iv: (i64, i64)) -> Self {
        SpdtLink {
            host: NodeId(host),
            host_start: host_iv.0,
            host_end: host_iv.1,
            neighbor: NodeId(neighbor),
            nbr_start: nbr_iv.0,
            nbr_end: nbr_iv.1,
            location_tag: None,
        }
    }

    pub fn with_tag(mut self, tag: u64) -> Self {
        self.location_tag = Some(tag);
        self
    }

    pub fn kind(&self) -> LinkKind {
        classify_link(self)
    }

    /// Checks the structural invariants. `delta` bounds how long after the
    /// host leaves a neighbour may still arrive; `None` skips that check.
    pub fn validate(&self, delta: Option<i64>) -> Result<()> {
        let bad = |what: &str| Err(Error::Data(format!("{what}: {self:?}")));
        if self.host == self.neighbor {
            return bad("self link");
        }
        if self.host_start > self.host_end {
            return bad("host interval reversed");
        }
        if self.nbr_start > self.nbr_end {
            return bad("neighbour interval reversed");
        }
        if self.nbr_start < self.host_start {
            return bad("neighbour arrives before host");
        }
        if let Some(delta) = delta {
            if self.nbr_start > self.host_end + delta {
                return bad("neighbour arrives after the indirect window");
            }
        }
        Ok(())
    }

    /// Same link moved by a whole number of days.
    pub fn shifted_days(&self, days: i64) -> Self {
        let dt = days * DAY_SECONDS;
        SpdtLink {
            host_start: self.host_start + dt,
            host_end: self.host_end + dt,
            nbr_start: self.nbr_start + dt,
            nbr_end: self.nbr_end + dt,
            ..*self
        }
    }

    pub fn day(&self) -> i64 {
        self.host_start.div_euclid(DAY_SECONDS)
    }
}

/// How a neighbour's presence relates to the host's stay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    /// Neighbour leaves no later than the host.
    DirectOnly,
    /// Neighbour overlaps the host and stays after it leaves.
    Mixed,
    /// Neighbour arrives at or after the host leaves.
    IndirectOnly,
}

/// `t_l' = t_l` counts as direct only and `t_s' = t_l` as indirect only.
pub fn classify_link(link: &SpdtLink) -> LinkKind {
    if link.nbr_start >= link.host_end {
        LinkKind::IndirectOnly
    } else if link.nbr_end <= link.host_end {
        LinkKind::DirectOnly
    } else {
        LinkKind::Mixed
    }
}

/// A subset of [`LinkKind`]s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KindSet(u8);

impl KindSet {
    pub const EMPTY: KindSet = KindSet(0);
    /// Links with a face-to-face component.
    pub const DIRECT: KindSet = KindSet(0b011);
    pub const ALL: KindSet = KindSet(0b111);

    fn bit(kind: LinkKind) -> u8 {
        match kind {
            LinkKind::DirectOnly => 0b001,
            LinkKind::Mixed => 0b010,
            LinkKind::IndirectOnly => 0b100,
        }
    }

    pub fn of(kinds: &[LinkKind]) -> Self {
        KindSet(kinds.iter().fold(0, |acc, &k| acc | Self::bit(k)))
    }

    #[inline]
    pub fn contains(self, kind: LinkKind) -> bool {
        self.0 & Self::bit(kind) != 0
    }

    #[inline]
    pub fn admits(self, link: &SpdtLink) -> bool {
        self.contains(link.kind())
    }

    pub fn is_subset(self, other: KindSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Short label used in reports: `direct`, `all`, or a `+`-joined list.
    pub fn label(self) -> String {
        match self {
            KindSet::DIRECT => "direct".into(),
            KindSet::ALL => "all".into(),
            _ => {
                let names: Vec<&str> = [
                    (LinkKind::DirectOnly, "direct_only"),
                    (LinkKind::Mixed, "mixed"),
                    (LinkKind::IndirectOnly, "indirect_only"),
                ]
                .iter()
                .filter(|(k, _)| self.contains(*k))
                .map(|(_, n)| *n)
                .collect();
                if names.is_empty() {
                    "none".into()
                } else {
                    names.join("+")
                }
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(KindSet::DIRECT),
            "all" => Ok(KindSet::ALL),
            "none" => Ok(KindSet::EMPTY),
            _ => s.split('+').try_fold(KindSet::EMPTY, |acc, part| {
                let kind = match part {
                    "direct_only" => LinkKind::DirectOnly,
                    "mixed" => LinkKind::Mixed,
                    "indirect_only" => LinkKind::IndirectOnly,
                    other => return Err(Error::Config(format!("unknown link kind `{other}`"))),
                };
                Ok(KindSet(acc.0 | Self::bit(kind)))
            }),
        }
    }
}

impl Serialize for KindSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for KindSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        KindSet::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Ingested,
    Densified,
    Synthetic,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Ingested => "ingested",
            Provenance::Densified => "densified",
            Provenance::Synthetic => "synthetic",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ingested" => Ok(Provenance::Ingested),
            "densified" => Ok(Provenance::Densified),
            "synthetic" => Ok(Provenance::Synthetic),
            other => Err(Error::Data(format!("unknown provenance `{other}`"))),
        }
    }

    fn code(self) -> u8 {
        match self {
            Provenance::Ingested => 0,
            Provenance::Densified => 1,
            Provenance::Synthetic => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Provenance::Ingested),
            1 => Ok(Provenance::Densified),
            2 => Ok(Provenance::Synthetic),
            other => Err(Error::Data(format!("unknown provenance code {other}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct DayBucket {
    /// Sorted canonically, so each host's links are contiguous.
    links: Vec<SpdtLink>,
    /// Indices into `links`, ordered by neighbour.
    by_neighbor: Vec<u32>,
}

impl DayBucket {
    fn new(mut links: Vec<SpdtLink>) -> Self {
        links.sort_unstable();
        let mut by_neighbor: Vec<u32> = (0..links.len() as u32).collect();
        by_neighbor.sort_by_key(|&i| (links[i as usize].neighbor, i));
        DayBucket { links, by_neighbor }
    }

    fn hosted(&self, node: NodeId) -> &[SpdtLink] {
        let lo = self.links.partition_point(|l| l.host < node);
        let hi = lo + self.links[lo..].partition_point(|l| l.host == node);
        &self.links[lo..hi]
    }

    fn received(&self, node: NodeId) -> impl Iterator<Item = &SpdtLink> + '_ {
        let key = |&i: &u32| self.links[i as usize].neighbor;
        let lo = self.by_neighbor.partition_point(|i| key(i) < node);
        let hi = lo + self.by_neighbor[lo..].partition_point(|i| key(i) == node);
        self.by_neighbor[lo..hi]
            .iter()
            .map(move |&i| &self.links[i as usize])
    }
}

/// Immutable, day-bucketed multiset of SPDT links over a fixed node universe.
///
/// A link belongs to the day containing its host arrival time, even when
/// the neighbour's presence runs past midnight.
#[derive(Debug, Clone)]
pub struct ContactNetwork {
    n_nodes: u32,
    provenance: Provenance,
    days: Vec<DayBucket>,
}

impl ContactNetwork {
    pub fn from_links(
        n_nodes: u32,
        n_days: u32,
        provenance: Provenance,
        links: impl IntoIterator<Item = SpdtLink>,
    ) -> Result<Self> {
        let mut buckets: Vec<Vec<SpdtLink>> = vec![Vec::new(); n_days as usize];
        for link in links {
            link.validate(None)?;
            if link.host.0 >= n_nodes || link.neighbor.0 >= n_nodes {
                return Err(Error::Data(format!(
                    "node id out of range (n_nodes = {n_nodes}): {link:?}"
                )));
            }
            let day = link.day();
            if day < 0 || day >= n_days as i64 {
                return Err(Error::Data(format!(
                    "link on day {day} outside [0, {n_days}): {link:?}"
                )));
            }
            buckets[day as usize].push(link);
        }
        Ok(ContactNetwork {
            n_nodes,
            provenance,
            days: buckets.into_iter().map(DayBucket::new).collect(),
        })
    }

    pub fn n_nodes(&self) -> u32 {
        self.n_nodes
    }

    pub fn n_days(&self) -> u32 {
        self.days.len() as u32
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn link_count(&self) -> usize {
        self.days.iter().map(|d| d.links.len()).sum()
    }

    /// Links of one day in canonical order; empty past the last day.
    pub fn day(&self, day: u32) -> &[SpdtLink] {
        self.days
            .get(day as usize)
            .map(|d| d.links.as_slice())
            .unwrap_or(&[])
    }

    pub fn links(&self) -> impl Iterator<Item = &SpdtLink> + '_ {
        self.days.iter().flat_map(|d| d.links.iter())
    }

    /// Links hosted by `node` on `day`.
    pub fn hosted(&self, node: NodeId, day: u32) -> &[SpdtLink] {
        match self.days.get(day as usize) {
            Some(bucket) => bucket.hosted(node),
            None => &[],
        }
    }

    /// Links received by `node` on `day`.
    pub fn received(&self, node: NodeId, day: u32) -> impl Iterator<Item = &SpdtLink> + '_ {
        self.days
            .get(day as usize)
            .into_iter()
            .flat_map(move |b| b.received(node))
    }

    fn check_node(&self, node: NodeId) -> Result<()> {
        if node.0 >= self.n_nodes {
            return Err(Error::domain(format!(
                "unknown node {node} (n_nodes = {})",
                self.n_nodes
            )));
        }
        Ok(())
    }

    pub fn check_days(&self, days: &Range<u32>) -> Result<()> {
        if days.start > days.end || days.end > self.n_days() {
            return Err(Error::domain(format!(
                "day range {days:?} outside [0, {})",
                self.n_days()
            )));
        }
        Ok(())
    }

    /// Distinct nodes at the other end of any admitted link touching `node`
    /// in `days`, whichever side `node` was on.
    pub fn neighbors_of(
        &self,
        node: NodeId,
        days: Range<u32>,
        kinds: KindSet,
    ) -> Result<BTreeSet<NodeId>> {
        self.check_node(node)?;
        self.check_days(&days)?;
        let mut out = BTreeSet::new();
        for day in days {
            out.extend(
                self.hosted(node, day)
                    .iter()
                    .filter(|l| kinds.admits(l))
                    .map(|l| l.neighbor),
            );
            out.extend(
                self.received(node, day)
                    .filter(|l| kinds.admits(l))
                    .map(|l| l.host),
            );
        }
        Ok(out)
    }

    pub fn contact_degree(&self, node: NodeId, days: Range<u32>, kinds: KindSet) -> Result<usize> {
        self.neighbors_of(node, days, kinds).map(|s| s.len())
    }

    /// Bulk version of [`neighbors_of`](Self::neighbors_of) for every node.
    pub fn adjacency(&self, days: Range<u32>, kinds: KindSet) -> Result<Adjacency> {
        self.check_days(&days)?;
        let mut lists: Vec<Vec<NodeId>> = vec![Vec::new(); self.n_nodes as usize];
        for day in days {
            for l in self.day(day).iter().filter(|l| kinds.admits(l)) {
                lists[l.host.index()].push(l.neighbor);
                lists[l.neighbor.index()].push(l.host);
            }
        }
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Adjacency { lists })
    }

    /// Nodes that appear on either side of any link in `days`, ascending.
    pub fn active_nodes(&self, days: Range<u32>) -> Result<Vec<NodeId>> {
        self.check_days(&days)?;
        let mut seen = vec![false; self.n_nodes as usize];
        for day in days {
            for l in self.day(day) {
                seen[l.host.index()] = true;
                seen[l.neighbor.index()] = true;
            }
        }
        Ok(seen
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| NodeId(i as u32))
            .collect())
    }

    /// For every node outside `infected`, that day's links it received from
    /// an infected host. Receivers are returned in ascending order and each
    /// group keeps the canonical link order.
    pub fn links_from_infected<'a>(
        &'a self,
        day: u32,
        infected: &NodeSet,
    ) -> Vec<(NodeId, Vec<&'a SpdtLink>)> {
        let mut hits: Vec<&SpdtLink> = Vec::new();
        for host in infected.iter() {
            hits.extend(
                self.hosted(host, day)
                    .iter()
                    .filter(|l| !infected.contains(l.neighbor)),
            );
        }
        group_by_receiver(hits)
    }
}

pub(crate) fn group_by_receiver(mut hits: Vec<&SpdtLink>) -> Vec<(NodeId, Vec<&SpdtLink>)> {
    hits.sort_by(|a, b| a.neighbor.cmp(&b.neighbor).then_with(|| a.cmp(b)));
    let mut out: Vec<(NodeId, Vec<&SpdtLink>)> = Vec::new();
    for l in hits {
        match out.last_mut() {
            Some((n, group)) if *n == l.neighbor => group.push(l),
            _ => out.push((l.neighbor, vec![l])),
        }
    }
    out
}

/// Per-node sorted, de-duplicated neighbour lists over a day window.
#[derive(Debug, Clone)]
pub struct Adjacency {
    lists: Vec<Vec<NodeId>>,
}

impl Adjacency {
    pub fn neighbors(&self, node: NodeId) -> &[NodeId] {
        &self.lists[node.index()]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.lists[node.index()].len()
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

/// Dense membership set over node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    members: Vec<bool>,
    len: usize,
}

impl NodeSet {
    pub fn new(n_nodes: u32) -> Self {
        NodeSet {
            members: vec![false; n_nodes as usize],
            len: 0,
        }
    }

    pub fn from_nodes(n_nodes: u32, nodes: impl IntoIterator<Item = NodeId>) -> Self {
        let mut set = NodeSet::new(n_nodes);
        for n in nodes {
            set.insert(n);
        }
        set
    }

    #[inline]
    pub fn contains(&self, node: NodeId) -> bool {
        self.members.get(node.index()).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, node: NodeId) -> bool {
        let slot = &mut self.members[node.index()];
        let fresh = !*slot;
        *slot = true;
        self.len += fresh as usize;
        fresh
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| NodeId(i as u32))
    }
}
