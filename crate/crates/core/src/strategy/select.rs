use rand::seq::{index, SliceRandom};

use super::RankingScores;
use crate::error::{Error, Result};
use crate::network::NodeId;
use crate::rng::Rng;

/// Uniform sample of `round(F · |active|)` distinct nodes, returned ascending.
pub fn sample_observed(active: &[NodeId], fraction: f64, rng: &mut Rng) -> Result<Vec<NodeId>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::domain(format!("F must be in [0, 1], got {fraction}")));
    }
    let k = (fraction * active.len() as f64).round() as usize;
    let mut out: Vec<NodeId> = if k == active.len() {
        active.to_vec()
    } else {
        index::sample(rng, active.len(), k)
            .into_iter()
            .map(|i| active[i])
            .collect()
    };
    out.sort_unstable();
    Ok(out)
}

/// `floor(P · N / 100)`, tolerant of representation error in `P`.
pub fn vaccination_quota(percent: f64, n_total: u32) -> Result<usize> {
    if !(0.0..=100.0).contains(&percent) {
        return Err(Error::domain(format!("P must be in [0, 100], got {percent}")));
    }
    Ok((percent * n_total as f64 / 100.0 + 1e-9).floor() as usize)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Chosen nodes, highest score first.
    pub nodes: Vec<NodeId>,
    /// Quota minus the number chosen, when there were too few candidates.
    pub shortfall: usize,
}

/// The `floor(P · N / 100)` best-scored candidates. Ties at the cut are
/// broken uniformly at random.
pub fn select_for_vaccination(
    scores: &RankingScores,
    percent: f64,
    n_total: u32,
    rng: &mut Rng,
) -> Result<Selection> {
    let quota = vaccination_quota(percent, n_total)?;
    let mut order: Vec<(NodeId, f64)> = scores.scores.clone();
    order.shuffle(rng);
    // stable: shuffled order survives among equal scores
    order.sort_by(|a, b| b.1.total_cmp(&a.1));
    let take = quota.min(order.len());
    Ok(Selection {
        nodes: order[..take].iter().map(|(n, _)| *n).collect(),
        shortfall: quota - take,
    })
}

/// Smallest score `s` with at most `floor(P · N / 100)` candidates scoring
/// strictly above it; `-inf` when every candidate may pass.
pub fn score_threshold(scores: &RankingScores, percent: f64, n_total: u32) -> Result<f64> {
    let quota = vaccination_quota(percent, n_total)?;
    let mut values: Vec<f64> = scores.scores.iter().map(|(_, s)| *s).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values.get(quota).copied().unwrap_or(f64::NEG_INFINITY))
}
