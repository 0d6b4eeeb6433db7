//! Multi-objective particle swarm optimisation over EVCI bus locations.
//!
//! Positions are continuous vectors that are rounded, clamped to `[2, N]`
//! and de-duplicated after every move, so every particle always decodes to a
//! valid placement. Each particle follows its personal best and a leader
//! drawn from the shared non-dominated archive by the sigma method. A run
//! ends when its fuzzy best compromise has stayed the same for `k_repeat`
//! iterations. Several independent runs pool their final fronts into a
//! second archive whose fuzzy best compromise is the final answer; pooling
//! whole fronts rather than only each run's winner keeps the membership
//! ranges close to those of the true front when single runs see only part
//! of it.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::archive::{best_compromise, dominates, sigma_leader, ArchiveEntry, ObjectivePair, ParetoArchive};
use super::{evaluate, evaluate_network, SitingError};
use crate::loadflow::LoadFlowConfig;
use crate::network::{FeederNetwork, Placement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iter: usize,
    pub c1: f64,
    pub c2: f64,
    pub a_max: usize,
    pub k_repeat: usize,
    pub max_run: usize,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self { swarm_size: 50, max_iter: 100, c1: 2.0, c2: 2.0, a_max: 50, k_repeat: 10, max_run: 20, seed: 1 }
    }
}

impl PsoConfig {
    fn validate(&self) -> Result<(), SitingError> {
        let counts = [
            ("swarm_size", self.swarm_size),
            ("max_iter", self.max_iter),
            ("a_max", self.a_max),
            ("k_repeat", self.k_repeat),
            ("max_run", self.max_run),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(SitingError::Config(format!("{name} must be positive")));
        }
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(SitingError::Config("c1 and c2 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub objectives: ObjectivePair,
    pub pbest_position: Vec<f64>,
    pub pbest_objectives: ObjectivePair,
    /// Non-dominated set of this particle's own evaluations.
    memory: Vec<ObjectivePair>,
}

impl Particle {
    pub fn new(position: Vec<f64>, objectives: ObjectivePair) -> Self {
        let velocity = vec![0.0; position.len()];
        Self {
            pbest_position: position.clone(),
            pbest_objectives: objectives,
            memory: if objectives.is_feasible() { vec![objectives] } else { Vec::new() },
            position,
            velocity,
            objectives,
        }
    }

    pub fn locations(&self) -> Vec<usize> {
        self.position.iter().map(|&x| x as usize).collect()
    }

    /// One velocity/position update towards the personal best and `leader`,
    /// followed by [`repair_position`]. Velocities are clamped to
    /// `±(n_bus - 2)`.
    pub fn step<R: Rng + ?Sized>(&mut self, leader: &[f64], cfg: &PsoConfig, n_bus: usize, rng: &mut R) {
        let vmax = n_bus.saturating_sub(2) as f64;
        for d in 0..self.position.len() {
            let r1: f64 = rng.random();
            let r2: f64 = rng.random();
            let x = self.position[d];
            let v = self.velocity[d] + cfg.c1 * r1 * (self.pbest_position[d] - x) + cfg.c2 * r2 * (leader[d] - x);
            self.velocity[d] = v.clamp(-vmax, vmax);
            self.position[d] = x + self.velocity[d];
        }
        repair_position(&mut self.position, &mut self.velocity, n_bus);
    }

    /// Records a new evaluation of the current position. The personal best
    /// moves here unless an earlier own evaluation dominates it.
    pub fn record(&mut self, objectives: ObjectivePair) {
        self.objectives = objectives;
        let improves = if objectives.is_feasible() {
            if self.memory.iter().any(|m| dominates(m, &objectives)) {
                false
            } else {
                self.memory.retain(|m| !dominates(&objectives, m));
                if !self.memory.contains(&objectives) {
                    self.memory.push(objectives);
                }
                true
            }
        } else {
            !self.pbest_objectives.is_feasible()
        };
        if improves {
            self.pbest_position.clone_from(&self.position);
            self.pbest_objectives = objectives;
        }
    }
}

/// Rounds each coordinate to the nearest bus, clamps to `[2, n_bus]`, moves
/// later duplicates to the nearest unused bus (the lower one on ties) and
/// finally sorts coordinates ascending, carrying velocities along.
pub fn repair_position(position: &mut [f64], velocity: &mut [f64], n_bus: usize) {
    let lo = 2usize;
    let hi = n_bus;
    let mut used = vec![false; n_bus + 1];
    let mut buses = Vec::with_capacity(position.len());
    for &x in position.iter() {
        let b = if x.is_finite() { x.round().clamp(lo as f64, hi as f64) as usize } else { lo };
        let b = if used[b] {
            (1..=hi - lo)
                .flat_map(|d| [b.checked_sub(d), Some(b + d)])
                .flatten()
                .find(|&c| c >= lo && c <= hi && !used[c])
                .expect("fewer EVCIs than candidate buses")
        } else {
            b
        };
        used[b] = true;
        buses.push(b);
    }
    let mut pairs: Vec<(usize, f64)> = buses.into_iter().zip(velocity.iter().copied()).collect();
    pairs.sort_by_key(|p| p.0);
    for (d, (b, v)) in pairs.into_iter().enumerate() {
        position[d] = b as f64;
        velocity[d] = v;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub run: usize,
    pub iterations: usize,
    pub converged: bool,
    pub evaluations: usize,
    pub front: Vec<ArchiveEntry>,
    pub best: ArchiveEntry,
    pub best_mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitingReport {
    pub n_evci: usize,
    pub evci_kw: f64,
    pub config: PsoConfig,
    pub runs: Vec<RunTrace>,
    pub best_archive: Vec<ArchiveEntry>,
    /// `None` when no EVCI is placed.
    pub placement: Option<Placement>,
    pub objectives: ObjectivePair,
    pub mu: f64,
    pub total_evaluations: usize,
}

/// Runs up to `cfg.max_run` independent MOPSO runs and returns the best
/// compromise of their pooled fronts. Stops early once `k_repeat`
/// consecutive runs agree on their own best compromise.
pub fn run_mopso(
    net: &FeederNetwork,
    evci_kw: f64,
    n_evci: usize,
    cfg: &PsoConfig,
    lf: &LoadFlowConfig,
) -> Result<SitingReport, SitingError> {
    cfg.validate()?;
    let candidates = net.n_bus() - 1;
    if n_evci > candidates {
        return Err(SitingError::TooManyEvcis { n_evci, candidates });
    }
    if n_evci == 0 {
        let objectives = evaluate_network(net, lf);
        if !objectives.is_feasible() {
            return Err(SitingError::NoFeasiblePlacement);
        }
        return Ok(SitingReport {
            n_evci,
            evci_kw,
            config: cfg.clone(),
            runs: Vec::new(),
            best_archive: Vec::new(),
            placement: None,
            objectives,
            mu: 1.0,
            total_evaluations: 1,
        });
    }

    let mut best_archive = ParetoArchive::new(cfg.a_max);
    let mut runs = Vec::new();
    let mut streak = 0usize;
    for run in 0..cfg.max_run {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(run as u64);
        let Some(trace) = single_run(net, evci_kw, n_evci, cfg, lf, &mut rng, run) else {
            continue;
        };
        streak = match runs.last() {
            Some(prev) if same_placement(prev, &trace) => streak + 1,
            _ => 1,
        };
        for m in &trace.front {
            best_archive.insert(m.placement.clone(), m.objectives);
        }
        best_archive.crowding_truncate();
        runs.push(trace);
        if streak >= cfg.k_repeat {
            break;
        }
    }

    let (bi, mu) = best_compromise(best_archive.members()).ok_or(SitingError::NoFeasiblePlacement)?;
    let best = best_archive.members()[bi].clone();
    Ok(SitingReport {
        n_evci,
        evci_kw,
        config: cfg.clone(),
        total_evaluations: runs.iter().map(|r| r.evaluations).sum(),
        runs,
        placement: Some(best.placement),
        objectives: best.objectives,
        mu,
        best_archive: best_archive.into_members(),
    })
}

fn same_placement(a: &RunTrace, b: &RunTrace) -> bool {
    a.best.placement == b.best.placement
}

/// One MOPSO run; `None` if no feasible placement was ever seen.
fn single_run(
    net: &FeederNetwork,
    evci_kw: f64,
    n_evci: usize,
    cfg: &PsoConfig,
    lf: &LoadFlowConfig,
    rng: &mut ChaCha8Rng,
    run: usize,
) -> Option<RunTrace> {
    let n_bus = net.n_bus();
    let mut cache: HashMap<Vec<usize>, ObjectivePair> = HashMap::new();

    let initial: Vec<Vec<f64>> = (0..cfg.swarm_size)
        .map(|_| {
            let mut pos: Vec<f64> = sample(rng, n_bus - 1, n_evci).into_iter().map(|i| (i + 2) as f64).collect();
            let mut vel = vec![0.0; n_evci];
            repair_position(&mut pos, &mut vel, n_bus);
            pos
        })
        .collect();
    let objs = evaluate_batch(net, evci_kw, lf, &initial, &mut cache);
    let mut swarm: Vec<Particle> = initial.into_iter().zip(objs).map(|(p, o)| Particle::new(p, o)).collect();

    let mut archive = ParetoArchive::new(cfg.a_max);
    update_archive(&mut archive, &swarm, evci_kw);

    let mut current = compromise(&archive);
    let mut streak = usize::from(current.is_some());
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        iterations += 1;
        for p in swarm.iter_mut() {
            let guide_obj = if p.objectives.is_feasible() { p.objectives } else { p.pbest_objectives };
            let leader: Vec<f64> = match sigma_leader(&guide_obj, archive.members()) {
                Some(i) => archive.members()[i].placement.locations().iter().map(|&b| b as f64).collect(),
                None => p.pbest_position.clone(),
            };
            p.step(&leader, cfg, n_bus, rng);
        }
        let positions: Vec<Vec<f64>> = swarm.iter().map(|p| p.position.clone()).collect();
        let objs = evaluate_batch(net, evci_kw, lf, &positions, &mut cache);
        for (p, o) in swarm.iter_mut().zip(objs) {
            p.record(o);
        }
        update_archive(&mut archive, &swarm, evci_kw);

        let next = compromise(&archive);
        streak = match (&current, &next) {
            (Some(a), Some(b)) if a.0.placement == b.0.placement => streak + 1,
            (_, Some(_)) => 1,
            _ => 0,
        };
        current = next;
        if streak >= cfg.k_repeat {
            converged = true;
            break;
        }
    }

    let (best, best_mu) = current?;
    Some(RunTrace {
        run,
        iterations,
        converged,
        evaluations: cache.len(),
        front: archive.into_members(),
        best,
        best_mu,
    })
}

fn compromise(archive: &ParetoArchive) -> Option<(ArchiveEntry, f64)> {
    best_compromise(archive.members()).map(|(i, mu)| (archive.members()[i].clone(), mu))
}

/// Archive updates happen in particle order so results do not depend on
/// how the load flows were scheduled.
fn update_archive(archive: &mut ParetoArchive, swarm: &[Particle], evci_kw: f64) {
    for p in swarm {
        if p.objectives.is_feasible() {
            let pl = Placement::new(p.locations(), evci_kw).expect("repaired position is a valid placement");
            archive.insert(pl, p.objectives);
        }
    }
    archive.crowding_truncate();
}

/// Evaluates positions, reusing cached objective pairs; new load flows run in parallel.
fn evaluate_batch(
    net: &FeederNetwork,
    evci_kw: f64,
    lf: &LoadFlowConfig,
    positions: &[Vec<f64>],
    cache: &mut HashMap<Vec<usize>, ObjectivePair>,
) -> Vec<ObjectivePair> {
    let keys: Vec<Vec<usize>> = positions.iter().map(|p| p.iter().map(|&x| x as usize).collect()).collect();
    let mut fresh: Vec<Vec<usize>> = Vec::new();
    for k in &keys {
        if !cache.contains_key(k) && !fresh.contains(k) {
            fresh.push(k.clone());
        }
    }
    let results: Vec<ObjectivePair> = fresh
        .par_iter()
        .map(|k| match Placement::new(k.clone(), evci_kw) {
            Ok(pl) => evaluate(net, &pl, lf),
            Err(_) => ObjectivePair::INFEASIBLE,
        })
        .collect();
    cache.extend(fresh.into_iter().zip(results));
    keys.iter().map(|k| cache[k]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point_when_everything_coincides() {
        let mut p = Particle::new(vec![3.0, 7.0, 9.0], ObjectivePair::new(1.0, 1.0));
        let before = p.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        p.step(&[3.0, 7.0, 9.0], &PsoConfig::default(), 33, &mut rng);
        assert_eq!(p, before);
    }

    #[test]
    fn rounding_rule() {
        let mut pos = [17.6];
        let mut vel = [0.0];
        repair_position(&mut pos, &mut vel, 33);
        assert_eq!(pos, [18.0]);
        let mut pos = [0.2, 40.0];
        let mut vel = [0.0, 0.0];
        repair_position(&mut pos, &mut vel, 33);
        assert_eq!(pos, [2.0, 33.0]);
    }

    #[test]
    fn duplicate_repair() {
        // the second 8 moves to the nearest free bus; 7 and 9 tie, lower wins
        let mut pos = [8.0, 8.0, 15.0, 16.0, 17.0];
        let mut vel = [1.0, 2.0, 3.0, 4.0, 5.0];
        repair_position(&mut pos, &mut vel, 33);
        assert_eq!(pos, [7.0, 8.0, 15.0, 16.0, 17.0]);
        assert_eq!(vel, [2.0, 1.0, 3.0, 4.0, 5.0]);

        let mut pos = [2.0, 2.0, 2.0];
        let mut vel = [0.0; 3];
        repair_position(&mut pos, &mut vel, 33);
        assert_eq!(pos, [2.0, 3.0, 4.0]);
    }

    #[test]
    fn personal_best_never_dominated_by_own_history() {
        let mut p = Particle::new(vec![2.0], ObjectivePair::new(5.0, 1.0));
        p.record(ObjectivePair::new(1.0, 5.0)); // incomparable: moves
        assert_eq!(p.pbest_objectives, ObjectivePair::new(1.0, 5.0));
        p.record(ObjectivePair::new(6.0, 2.0)); // dominated by the first evaluation
        assert_eq!(p.pbest_objectives, ObjectivePair::new(1.0, 5.0));
        p.record(ObjectivePair::INFEASIBLE);
        assert_eq!(p.pbest_objectives, ObjectivePair::new(1.0, 5.0));
        p.record(ObjectivePair::new(0.5, 0.5));
        assert_eq!(p.pbest_objectives, ObjectivePair::new(0.5, 0.5));
    }

    #[test]
    fn zero_evcis_reports_base_case() {
        let net = FeederNetwork::ieee33();
        let rep = run_mopso(&net, 1000.0, 0, &PsoConfig::default(), &LoadFlowConfig::default()).unwrap();
        assert!(rep.placement.is_none());
        assert!((rep.objectives.loss_kw - 202.677).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_config() {
        let net = FeederNetwork::ieee33();
        let cfg = PsoConfig { swarm_size: 0, ..Default::default() };
        assert!(matches!(run_mopso(&net, 1000.0, 2, &cfg, &LoadFlowConfig::default()), Err(SitingError::Config(_))));
        assert!(run_mopso(&net, 1000.0, 40, &PsoConfig::default(), &LoadFlowConfig::default()).is_err());
    }
}
