//! Non-dominated archive, crowding-distance pruning, sigma leader selection
//! and fuzzy best-compromise selection for two minimisation objectives.

use serde::{Deserialize, Serialize};

use crate::network::Placement;

/// `(loss_kw, sq_dev)`; both are minimised. `+inf` marks an infeasible point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectivePair {
    pub loss_kw: f64,
    pub sq_dev: f64,
}

impl ObjectivePair {
    pub const INFEASIBLE: Self = Self { loss_kw: f64::INFINITY, sq_dev: f64::INFINITY };

    pub fn new(loss_kw: f64, sq_dev: f64) -> Self {
        Self { loss_kw, sq_dev }
    }

    pub fn is_feasible(&self) -> bool {
        self.loss_kw.is_finite() && self.sq_dev.is_finite()
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.loss_kw, self.sq_dev]
    }
}

/// Pareto dominance: no worse in both objectives and strictly better in one.
pub fn dominates(a: &ObjectivePair, b: &ObjectivePair) -> bool {
    a.loss_kw <= b.loss_kw && a.sq_dev <= b.sq_dev && (a.loss_kw < b.loss_kw || a.sq_dev < b.sq_dev)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub placement: Placement,
    pub objectives: ObjectivePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoArchive {
    members: Vec<ArchiveEntry>,
    capacity: usize,
}

impl ParetoArchive {
    pub fn new(capacity: usize) -> Self {
        Self { members: Vec::new(), capacity: capacity.max(1) }
    }

    pub fn members(&self) -> &[ArchiveEntry] {
        &self.members
    }

    pub fn into_members(self) -> Vec<ArchiveEntry> {
        self.members
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Inserts a candidate unless an existing member dominates it or already
    /// holds the same placement. Members the candidate dominates are dropped.
    /// Infeasible candidates are never stored. Returns whether it was added.
    ///
    /// Does not enforce the capacity; see [`ParetoArchive::crowding_truncate`].
    pub fn insert(&mut self, placement: Placement, objectives: ObjectivePair) -> bool {
        if !objectives.is_feasible() {
            return false;
        }
        if self.members.iter().any(|m| m.placement == placement || dominates(&m.objectives, &objectives)) {
            return false;
        }
        self.members.retain(|m| !dominates(&objectives, &m.objectives));
        self.members.push(ArchiveEntry { placement, objectives });
        true
    }

    /// Drops the most crowded members until at most `capacity` remain.
    /// Survivors keep their relative order.
    pub fn crowding_truncate(&mut self) {
        if self.members.len() <= self.capacity {
            return;
        }
        let objs: Vec<ObjectivePair> = self.members.iter().map(|m| m.objectives).collect();
        let dist = crowding_distances(&objs);
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        // Stable: equal distances keep archive order.
        idx.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]));
        let mut keep = vec![false; self.members.len()];
        for &i in idx.iter().take(self.capacity) {
            keep[i] = true;
        }
        let mut k = 0;
        self.members.retain(|_| {
            let kept = keep[k];
            k += 1;
            kept
        });
    }
}

/// Crowding distance of each point. Points are ordered by the first
/// objective (ties by the second); the two ends get `+inf` and interior
/// points sum the normalised gap between their neighbours over both
/// objectives. An objective with zero range contributes nothing.
pub fn crowding_distances(objs: &[ObjectivePair]) -> Vec<f64> {
    let n = objs.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| objs[a].loss_kw.total_cmp(&objs[b].loss_kw).then(objs[a].sq_dev.total_cmp(&objs[b].sq_dev)));
    dist[order[0]] = f64::INFINITY;
    dist[order[n - 1]] = f64::INFINITY;
    for m in 0..2 {
        let f = |i: usize| objs[i].as_array()[m];
        let (lo, hi) = objs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), o| (lo.min(o.as_array()[m]), hi.max(o.as_array()[m])));
        let range = hi - lo;
        if !(range > 0.0) {
            continue;
        }
        for w in order.windows(3) {
            dist[w[1]] += (f(w[2]) - f(w[0])).abs() / range;
        }
    }
    dist
}

/// Per-objective `(min, max)` over a set of points.
pub(crate) fn ranges(objs: impl Iterator<Item = ObjectivePair>) -> [(f64, f64); 2] {
    objs.fold([(f64::INFINITY, f64::NEG_INFINITY); 2], |[a, b], o| {
        [(a.0.min(o.loss_kw), a.1.max(o.loss_kw)), (b.0.min(o.sq_dev), b.1.max(o.sq_dev))]
    })
}

/// Min-max normalisation; a degenerate range maps to 0.
pub(crate) fn normalise(o: &ObjectivePair, r: &[(f64, f64); 2]) -> [f64; 2] {
    let n = |v: f64, (lo, hi): (f64, f64)| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    [n(o.loss_kw, r[0]), n(o.sq_dev, r[1])]
}

/// Sigma value of a normalised two-objective point, 0 at the origin.
pub fn sigma(n: [f64; 2]) -> f64 {
    let (a, b) = (n[0] * n[0], n[1] * n[1]);
    if a + b == 0.0 {
        0.0
    } else {
        (a - b) / (a + b)
    }
}

/// Index of the candidate whose sigma is closest to `target`; ties go to the
/// smaller secondary distance, then to the lower index.
pub fn nearest_sigma(target: f64, candidates: &[(f64, f64)]) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| {
            (a.0 - target).abs().total_cmp(&(b.0 - target).abs()).then(a.1.total_cmp(&b.1)).then(i.cmp(j))
        })
        .map(|(i, _)| i)
}

/// Sigma-method leader: the archive member whose sigma is nearest to the
/// particle's, with both normalised over the archive's objective ranges.
pub fn sigma_leader(particle: &ObjectivePair, archive: &[ArchiveEntry]) -> Option<usize> {
    if archive.is_empty() {
        return None;
    }
    let r = ranges(archive.iter().map(|m| m.objectives));
    let p = normalise(particle, &r);
    let target = sigma(p);
    let cands: Vec<(f64, f64)> = archive
        .iter()
        .map(|m| {
            let q = normalise(&m.objectives, &r);
            (sigma(q), ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt())
        })
        .collect();
    nearest_sigma(target, &cands)
}

/// Memberships closer than this count as tied; rescaling an objective
/// moves exact ties apart by a few ulps.
const TIE_EPS: f64 = 1e-12;

/// Fuzzy best-compromise member and its normalised membership.
///
/// Memberships are linear between the archive's best (1) and worst (0)
/// value of each objective; an objective with zero range gives every member
/// full membership. Ties go to the lower loss, then the earlier member.
pub fn best_compromise(archive: &[ArchiveEntry]) -> Option<(usize, f64)> {
    let objs: Vec<ObjectivePair> = archive.iter().map(|m| m.objectives).collect();
    let scores = fuzzy_scores(&objs)?;
    let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let best = (0..objs.len())
        .filter(|&i| scores[i] >= top - TIE_EPS * top.abs())
        .min_by(|&a, &b| objs[a].loss_kw.total_cmp(&objs[b].loss_kw).then(a.cmp(&b)))
        .expect("non-empty");
    Some((best, scores[best]))
}

/// Normalised fuzzy membership of every point; sums to 1.
pub fn fuzzy_scores(objs: &[ObjectivePair]) -> Option<Vec<f64>> {
    if objs.is_empty() {
        return None;
    }
    let r = ranges(objs.iter().copied());
    let membership = |f: f64, (lo, hi): (f64, f64)| {
        if f <= lo {
            1.0
        } else if f >= hi {
            0.0
        } else {
            (hi - f) / (hi - lo)
        }
    };
    let sums: Vec<f64> = objs.iter().map(|o| membership(o.loss_kw, r[0]) + membership(o.sq_dev, r[1])).collect();
    let total: f64 = sums.iter().sum();
    Some(if total > 0.0 { sums.iter().map(|s| s / total).collect() } else { vec![1.0 / objs.len() as f64; objs.len()] })
}
