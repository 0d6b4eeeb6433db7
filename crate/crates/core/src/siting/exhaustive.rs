//! Brute-force evaluation of every EVCI placement; the ground truth the
//! PSO optimizer is checked against.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::{best_compromise, ArchiveEntry, ObjectivePair};
use super::{evaluate, SitingError};
use crate::loadflow::LoadFlowConfig;
use crate::network::{FeederNetwork, Placement};

pub const DEFAULT_ENUMERATION_BUDGET: u128 = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub locations: Vec<usize>,
    pub objectives: ObjectivePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveReport {
    pub n_evci: usize,
    pub evci_kw: f64,
    pub evaluations: usize,
    pub infeasible: usize,
    #[serde(skip)]
    pub cloud: Vec<CloudPoint>,
    pub front: Vec<ArchiveEntry>,
    pub best: ArchiveEntry,
    pub best_mu: f64,
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn combinations_count(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = match c.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    c
}

/// All k-subsets of `lo..=hi`, lexicographic.
fn combinations(lo: usize, hi: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k == 0 || hi < lo || hi - lo + 1 < k {
        return out;
    }
    let mut cur: Vec<usize> = (lo..lo + k).collect();
    loop {
        out.push(cur.clone());
        // rightmost position that can still advance
        let mut i = k;
        while i > 0 && cur[i - 1] == hi - (k - i) {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        cur[i - 1] += 1;
        for j in i..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

pub fn enumerate_all(
    net: &FeederNetwork,
    evci_kw: f64,
    n_evci: usize,
    lf: &LoadFlowConfig,
) -> Result<ExhaustiveReport, SitingError> {
    enumerate_with_budget(net, evci_kw, n_evci, lf, DEFAULT_ENUMERATION_BUDGET)
}

/// Evaluates every placement of `n_evci` EVCIs over buses `2..=N`.
/// Load flows run in parallel on the current rayon pool.
pub fn enumerate_with_budget(
    net: &FeederNetwork,
    evci_kw: f64,
    n_evci: usize,
    lf: &LoadFlowConfig,
    budget: u128,
) -> Result<ExhaustiveReport, SitingError> {
    let candidates = net.n_bus() - 1;
    if n_evci == 0 || n_evci > candidates {
        return Err(SitingError::TooManyEvcis { n_evci, candidates });
    }
    let total = combinations_count(candidates, n_evci);
    if total > budget {
        return Err(SitingError::BudgetExceeded { combinations: total, budget });
    }

    let combos = combinations(2, net.n_bus(), n_evci);
    let cloud: Vec<CloudPoint> = combos
        .into_par_iter()
        .map(|locations| {
            let objectives = match Placement::new(locations.clone(), evci_kw) {
                Ok(pl) => evaluate(net, &pl, lf),
                Err(_) => ObjectivePair::INFEASIBLE,
            };
            CloudPoint { locations, objectives }
        })
        .collect();

    let front_idx = pareto_front(&cloud.iter().map(|c| c.objectives).collect::<Vec<_>>());
    if front_idx.is_empty() {
        return Err(SitingError::NoFeasiblePlacement);
    }
    let front: Vec<ArchiveEntry> = front_idx
        .iter()
        .map(|&i| ArchiveEntry {
            placement: Placement::new(cloud[i].locations.clone(), evci_kw).expect("enumerated placement is valid"),
            objectives: cloud[i].objectives,
        })
        .collect();
    let (bi, best_mu) = best_compromise(&front).expect("front is non-empty");

    Ok(ExhaustiveReport {
        n_evci,
        evci_kw,
        evaluations: cloud.len(),
        infeasible: cloud.iter().filter(|c| !c.objectives.is_feasible()).count(),
        best: front[bi].clone(),
        best_mu,
        front,
        cloud,
    })
}

/// Indices of the non-dominated feasible points, ordered by ascending loss.
/// Identical objective pairs are mutually non-dominated and all kept.
pub fn pareto_front(points: &[ObjectivePair]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].is_feasible()).collect();
    idx.sort_by(|&a, &b| {
        points[a]
            .loss_kw
            .total_cmp(&points[b].loss_kw)
            .then(points[a].sq_dev.total_cmp(&points[b].sq_dev))
            .then(a.cmp(&b))
    });
    let mut front = Vec::new();
    let mut last: Option<ObjectivePair> = None;
    for i in idx {
        let p = points[i];
        match last {
            Some(l) if p == l => front.push(i),
            Some(l) if p.sq_dev >= l.sq_dev => {}
            _ => {
                front.push(i);
                last = Some(p);
            }
        }
    }
    front
}
