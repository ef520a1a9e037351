use std::collections::BTreeMap;
use std::ops::Range;

use crate::error::Result;
use crate::network::{ContactNetwork, KindSet, NodeId};

pub const N_CLASSES: usize = 6;

/// Six location classes by number of people met per visit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationClassTable {
    bounds: [(u32, u32); N_CLASSES],
}

impl Default for LocationClassTable {
    fn default() -> Self {
        LocationClassTable::with_cap(500)
    }
}

impl LocationClassTable {
    /// The standard table with the open top class closed at `cap`.
    pub fn with_cap(cap: u32) -> Self {
        LocationClassTable {
            bounds: [(1, 5), (6, 15), (16, 25), (26, 50), (51, 100), (101, cap.max(101))],
        }
    }

    pub fn bounds(&self, class_index: usize) -> Option<(u32, u32)> {
        self.bounds.get(class_index).copied()
    }

    /// Zero-based class of a visit with `degree` contacts. Degrees above the
    /// cap still fall in the top class; zero has no class.
    pub fn class_of(&self, degree: u32) -> Option<usize> {
        if degree == 0 {
            return None;
        }
        Some(
            self.bounds
                .iter()
                .position(|&(_, hi)| degree <= hi)
                .unwrap_or(N_CLASSES - 1),
        )
    }
}

/// What a node would report about its visits in the observation window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisitProfile {
    pub node: NodeId,
    /// Visit counts per location class.
    pub class_visits: [u32; N_CLASSES],
    /// Distinct contacts of each visit with at least one contact.
    pub visit_degrees: Vec<u32>,
    /// Host stay (seconds) of each of those visits.
    pub visit_stays: Vec<i64>,
}

impl VisitProfile {
    pub fn empty(node: NodeId) -> Self {
        VisitProfile {
            node,
            class_visits: [0; N_CLASSES],
            visit_degrees: Vec::new(),
            visit_stays: Vec::new(),
        }
    }

    pub fn visit_count(&self) -> usize {
        self.visit_degrees.len()
    }
}

/// One profile per node (indexed by id). A visit is the set of links a node
/// hosts with the same location tag and host interval.
pub fn build_visit_profiles(
    net: &ContactNetwork,
    window: Range<u32>,
    kinds: KindSet,
    table: &LocationClassTable,
) -> Result<Vec<VisitProfile>> {
    net.check_days(&window)?;
    let mut profiles: Vec<VisitProfile> = (0..net.n_nodes())
        .map(|n| VisitProfile::empty(NodeId(n)))
        .collect();
    let mut visits: BTreeMap<(i64, i64, Option<u64>), Vec<NodeId>> = BTreeMap::new();
    for day in window {
        let links = net.day(day);
        let mut start = 0;
        while start < links.len() {
            let host = links[start].host;
            let end = start + links[start..].partition_point(|l| l.host == host);
            visits.clear();
            for l in &links[start..end] {
                let contacts = visits
                    .entry((l.host_start, l.host_end, l.location_tag))
                    .or_default();
                if kinds.admits(l) {
                    contacts.push(l.neighbor);
                }
            }
            let profile = &mut profiles[host.index()];
            for ((hs, he, _), contacts) in visits.iter_mut() {
                contacts.sort_unstable();
                contacts.dedup();
                let degree = contacts.len() as u32;
                if let Some(class) = table.class_of(degree) {
                    profile.class_visits[class] += 1;
                    profile.visit_degrees.push(degree);
                    profile.visit_stays.push(he - hs);
                }
            }
            start = end;
        }
    }
    Ok(profiles)
}
