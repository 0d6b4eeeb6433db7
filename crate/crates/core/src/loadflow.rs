//! Forward-backward sweep load flow for radial feeders.
//!
//! Loads are constant-power. Each iteration accumulates branch currents from
//! the leaves towards the substation using the previous voltages, then walks
//! from the slack bus outwards updating voltages with the new currents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::FeederNetwork;

/// Any bus below this magnitude marks the solution as collapsed.
pub const COLLAPSE_VOLTAGE_PU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadFlowConfig {
    pub v_slack: f64,
    pub v_threshold: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LoadFlowConfig {
    fn default() -> Self {
        Self { v_slack: 1.0, v_threshold: 1.0, tol: 1e-6, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadFlowSolution {
    /// Per-bus complex voltage (index 0 is bus 1), p.u.
    pub v: Vec<Complex64>,
    /// Per-branch complex current in file branch order, p.u.
    pub i_branch: Vec<Complex64>,
    pub branch_loss_kw: Vec<f64>,
    pub total_loss_kw: f64,
    pub sq_volt_dev: f64,
    pub iterations: usize,
    pub converged: bool,
    pub collapsed: bool,
    /// Complex power drawn from the substation, p.u.
    pub slack_power: Complex64,
}

impl LoadFlowSolution {
    pub fn v_mag(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.norm()).collect()
    }

    /// (bus id, |v|) of the lowest voltage.
    pub fn min_voltage(&self) -> (usize, f64) {
        self.v.iter().enumerate().map(|(i, v)| (i + 1, v.norm())).fold((0, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
    }

    /// (position in branch list, loss in kW) of the least-loaded branch.
    pub fn min_branch_loss(&self) -> (usize, f64) {
        self.branch_loss_kw.iter().copied().enumerate().fold((0, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        })
    }

    /// True when the solution can be used for objective evaluation.
    pub fn is_usable(&self) -> bool {
        self.converged && !self.collapsed
    }
}

/// Runs the forward-backward sweep on `net`.
///
/// A run that exhausts `max_iter` returns the last iterate with
/// `converged = false`; callers decide what to do with it.
pub fn solve(net: &FeederNetwork, cfg: &LoadFlowConfig) -> LoadFlowSolution {
    let n = net.n_bus();
    let base_kw = net.base_kw();
    let base_ohm = net.base_ohm();
    let order = net.bfs_order();
    let branches = net.branches();

    let s_load: Vec<Complex64> =
        net.buses().iter().map(|b| Complex64::new(b.p_load / base_kw, b.q_load / base_kw)).collect();
    let z: Vec<Complex64> = branches.iter().map(|b| Complex64::new(b.r / base_ohm, b.x / base_ohm)).collect();

    let slack = Complex64::new(cfg.v_slack, 0.0);
    let mut v = vec![slack; n];
    let mut i_branch = vec![Complex64::new(0.0, 0.0); branches.len()];
    let mut node_current = vec![Complex64::new(0.0, 0.0); n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;

        // Backward sweep: node_current[b] ends up as the current entering b from its parent.
        for b in 0..n {
            node_current[b] = if s_load[b] == Complex64::new(0.0, 0.0) {
                Complex64::new(0.0, 0.0)
            } else {
                (s_load[b] / v[b]).conj()
            };
        }
        for &b in order.iter().rev() {
            if let (Some(p), Some(k)) = (net.parent(b), net.parent_branch(b)) {
                i_branch[k] = node_current[b];
                let carried = node_current[b];
                node_current[p] += carried;
            }
        }

        // Forward sweep.
        let mut max_dv: f64 = 0.0;
        for &b in order.iter().skip(1) {
            let p = net.parent(b).expect("non-root bus has a parent");
            let k = net.parent_branch(b).expect("non-root bus has a feeding branch");
            let new_v = v[p] - z[k] * i_branch[k];
            max_dv = max_dv.max((new_v - v[b]).norm());
            v[b] = new_v;
        }

        if !max_dv.is_finite() {
            break;
        }
        if max_dv < cfg.tol {
            converged = true;
            break;
        }
    }

    let branch_loss_kw: Vec<f64> =
        i_branch.iter().zip(branches).map(|(i, br)| i.norm_sqr() * (br.r / base_ohm) * base_kw).collect();
    let total_loss_kw = branch_loss_kw.iter().sum();
    let collapsed = v.iter().any(|x| !(x.norm() >= COLLAPSE_VOLTAGE_PU));
    let slack_power = v[0] * node_current[0].conj();
    let sq_volt_dev = squared_deviation(&v, cfg.v_threshold);

    LoadFlowSolution {
        v,
        i_branch,
        branch_loss_kw,
        total_loss_kw,
        sq_volt_dev,
        iterations,
        converged,
        collapsed,
        slack_power,
    }
}

/// Sum over non-substation buses of `(v_threshold - |v|)^2`.
fn squared_deviation(v: &[Complex64], v_threshold: f64) -> f64 {
    v.iter().skip(1).map(|x| (v_threshold - x.norm()).powi(2)).sum()
}

/// Objective pair `(loss_kw, sq_dev)` of a solved network.
pub fn objectives(sol: &LoadFlowSolution, cfg: &LoadFlowConfig) -> (f64, f64) {
    (sol.total_loss_kw, squared_deviation(&sol.v, cfg.v_threshold))
}

/// Per-bus magnitudes and per-branch losses, as emitted for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadFlowSummary {
    pub converged: bool,
    pub iterations: usize,
    pub total_loss_kw: f64,
    pub sq_volt_dev: f64,
    pub min_voltage_bus: usize,
    pub min_voltage_pu: f64,
    pub min_loss_branch: usize,
    pub min_loss_kw: f64,
    pub bus_voltage_pu: Vec<f64>,
    pub branch_loss_kw: Vec<f64>,
}

impl LoadFlowSummary {
    pub fn new(net: &FeederNetwork, sol: &LoadFlowSolution) -> Self {
        let (min_voltage_bus, min_voltage_pu) = sol.min_voltage();
        let (k, min_loss_kw) = sol.min_branch_loss();
        Self {
            converged: sol.converged,
            iterations: sol.iterations,
            total_loss_kw: sol.total_loss_kw,
            sq_volt_dev: sol.sq_volt_dev,
            min_voltage_bus,
            min_voltage_pu,
            min_loss_branch: net.branches().get(k).map_or(0, |b| b.id),
            min_loss_kw,
            bus_voltage_pu: sol.v_mag(),
            branch_loss_kw: sol.branch_loss_kw.clone(),
        }
    }
}
