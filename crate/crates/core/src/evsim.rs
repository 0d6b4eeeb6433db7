//! EV fast-charging simulation at each EVCI and hourly time-series load flow.
//!
//! Every station draws 6-10 arrivals per day, uniformly over the day. EVs
//! charge at the full charger rating from their initial state of charge up
//! to 80%, and a busy station serves its queue first-in first-out. Session
//! energy is spread over hour buckets pro rata, so hourly kW averages sum to
//! the delivered energy.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loadflow::{objectives, solve, LoadFlowConfig};
use crate::network::{FeederNetwork, NetworkError, Placement};

/// Target state of charge at departure.
pub const TARGET_SOC: f64 = 0.8;
pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("{what}: expected length {expected}, got {actual}")]
    Length { what: &'static str, expected: usize, actual: usize },
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvModel {
    pub name: &'static str,
    pub battery_kwh: f64,
}

/// The five EV models considered, drawn with equal probability.
pub const EV_MODELS: [EvModel; 5] = [
    EvModel { name: "Nissan Leaf", battery_kwh: 24.0 },
    EvModel { name: "Nissan e-NV200", battery_kwh: 40.0 },
    EvModel { name: "Tesla Model 3 Standard Plus", battery_kwh: 55.0 },
    EvModel { name: "Tesla Model 3 Long Range", battery_kwh: 75.0 },
    EvModel { name: "BYD e6", battery_kwh: 82.0 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvSession {
    pub evci: usize,
    pub station: usize,
    pub model: String,
    pub battery_kwh: f64,
    pub arrival_h: f64,
    pub soc0: f64,
    pub start_h: f64,
    pub energy_kwh: f64,
    pub duration_h: f64,
}

impl EvSession {
    /// Session that starts at `start_h` and charges at `charger_kw` up to
    /// [`TARGET_SOC`].
    pub fn new(
        (evci, station): (usize, usize),
        model: &EvModel,
        arrival_h: f64,
        soc0: f64,
        start_h: f64,
        charger_kw: f64,
    ) -> Self {
        let energy_kwh = ((TARGET_SOC - soc0) * model.battery_kwh).max(0.0);
        Self {
            evci,
            station,
            model: model.name.to_string(),
            battery_kwh: model.battery_kwh,
            arrival_h,
            soc0,
            start_h,
            energy_kwh,
            duration_h: energy_kwh / charger_kw,
        }
    }

    pub fn end_h(&self) -> f64 {
        self.start_h + self.duration_h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub horizon_days: usize,
    pub charger_kw: f64,
    pub stations_per_evci: usize,
    pub evs_per_station_day: (usize, usize),
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { horizon_days: 1, charger_kw: 50.0, stations_per_evci: 20, evs_per_station_day: (6, 10), seed: 1 }
    }
}

impl SimConfig {
    pub fn horizon_hours(&self) -> usize {
        self.horizon_days * HOURS_PER_DAY
    }

    fn validate(&self) -> Result<(), SimError> {
        let (lo, hi) = self.evs_per_station_day;
        if self.horizon_days == 0 || self.stations_per_evci == 0 || lo == 0 || lo > hi {
            return Err(SimError::Config(format!("{self:?}")));
        }
        if !(self.charger_kw > 0.0) {
            return Err(SimError::Config("charger_kw must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvciLoadProfile {
    /// 1-based EVCI index.
    pub evci_id: usize,
    /// Average kW (equivalently kWh) in each hour of the horizon.
    pub hourly_kw: Vec<f64>,
    /// Energy of queued sessions that finish after the horizon, by hour past its end.
    pub tail_kw: Vec<f64>,
    pub sessions: Vec<EvSession>,
}

impl EvciLoadProfile {
    pub fn delivered_kwh(&self) -> f64 {
        self.hourly_kw.iter().chain(&self.tail_kw).sum()
    }

    pub fn session_kwh(&self) -> f64 {
        self.sessions.iter().map(|s| s.energy_kwh).sum()
    }

    /// Number of EVs arriving on each day of the horizon.
    pub fn daily_counts(&self, days: usize) -> Vec<usize> {
        let mut counts = vec![0; days];
        for s in &self.sessions {
            counts[(s.arrival_h / HOURS_PER_DAY as f64) as usize] += 1;
        }
        counts
    }
}

/// Adds a constant-power interval to hourly buckets; whatever falls past
/// `hourly.len()` lands in `tail`.
fn accumulate(hourly: &mut [f64], tail: &mut Vec<f64>, start: f64, end: f64, kw: f64) {
    if end <= start {
        return;
    }
    let h = hourly.len();
    let first = start.floor() as usize;
    let last = end.ceil() as usize;
    for t in first..last {
        let overlap = end.min((t + 1) as f64) - start.max(t as f64);
        if overlap <= 0.0 {
            continue;
        }
        if t < h {
            hourly[t] += kw * overlap;
        } else {
            let k = t - h;
            if tail.len() <= k {
                tail.resize(k + 1, 0.0);
            }
            tail[k] += kw * overlap;
        }
    }
}

/// Simulates `n_evci` charging sites over the configured horizon. Each site
/// uses its own random stream, so results do not depend on thread count.
pub fn simulate_evci(cfg: &SimConfig, n_evci: usize) -> Result<Vec<EvciLoadProfile>, SimError> {
    cfg.validate()?;
    Ok((0..n_evci).into_par_iter().map(|e| simulate_one(cfg, e)).collect())
}

fn simulate_one(cfg: &SimConfig, evci: usize) -> EvciLoadProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(evci as u64);
    let hours = cfg.horizon_hours();
    let mut hourly = vec![0.0; hours];
    let mut tail = Vec::new();
    let mut sessions = Vec::new();
    let (lo, hi) = cfg.evs_per_station_day;

    for station in 0..cfg.stations_per_evci {
        let mut free_at = 0.0_f64;
        for day in 0..cfg.horizon_days {
            let count = rng.random_range(lo..=hi);
            let day_start = (day * HOURS_PER_DAY) as f64;
            let mut arrivals: Vec<(f64, usize, f64)> = (0..count)
                .map(|_| {
                    let arrival = day_start + rng.random_range(0.0..HOURS_PER_DAY as f64);
                    let model = rng.random_range(0..EV_MODELS.len());
                    let soc0 = rng.random_range(0.2..=TARGET_SOC);
                    (arrival, model, soc0)
                })
                .collect();
            arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (arrival, model, soc0) in arrivals {
                let start = arrival.max(free_at);
                let s =
                    EvSession::new((evci + 1, station + 1), &EV_MODELS[model], arrival, soc0, start, cfg.charger_kw);
                accumulate(&mut hourly, &mut tail, s.start_h, s.end_h(), cfg.charger_kw);
                free_at = s.end_h();
                sessions.push(s);
            }
        }
    }
    EvciLoadProfile { evci_id: evci + 1, hourly_kw: hourly, tail_kw: tail, sessions }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Peak,
    Normal,
    Offpeak,
}

impl Period {
    pub fn as_str(&self) -> &'static str {
        match self {
            Period::Peak => "peak",
            Period::Normal => "normal",
            Period::Offpeak => "offpeak",
        }
    }
}

impl std::str::FromStr for Period {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "peak" => Ok(Period::Peak),
            "normal" => Ok(Period::Normal),
            "offpeak" => Ok(Period::Offpeak),
            other => Err(format!("unknown period `{other}`")),
        }
    }
}

/// Linear-interpolation percentile (`q` in [0, 1]) of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Labels each hour by its day's EVCI energy: at or above the day's 67th
/// percentile is peak, below the 33rd is off-peak, the rest normal. A day
/// with constant energy is all normal.
pub fn classify_periods(hourly_kwh: &[f64]) -> Result<Vec<Period>, SimError> {
    if hourly_kwh.is_empty() || !hourly_kwh.len().is_multiple_of(HOURS_PER_DAY) {
        return Err(SimError::Length {
            what: "hourly energy (whole days)",
            expected: hourly_kwh.len().div_ceil(HOURS_PER_DAY).max(1) * HOURS_PER_DAY,
            actual: hourly_kwh.len(),
        });
    }
    let mut out = Vec::with_capacity(hourly_kwh.len());
    for day in hourly_kwh.chunks(HOURS_PER_DAY) {
        let mut sorted = day.to_vec();
        sorted.sort_by(f64::total_cmp);
        if sorted[0] == sorted[sorted.len() - 1] {
            out.extend(std::iter::repeat_n(Period::Normal, day.len()));
            continue;
        }
        let hi = percentile(&sorted, 0.67);
        let lo = percentile(&sorted, 0.33);
        out.extend(day.iter().map(|&v| {
            if v >= hi {
                Period::Peak
            } else if v < lo {
                Period::Offpeak
            } else {
                Period::Normal
            }
        }));
    }
    Ok(out)
}

/// Diurnal base-load multipliers with a morning and an evening peak and
/// ±10% uniform noise.
pub fn diurnal_scaling(days: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..days * HOURS_PER_DAY)
        .map(|t| {
            let h = (t % HOURS_PER_DAY) as f64 + 0.5;
            let shape = 0.55 + 0.25 * (-((h - 9.0) / 2.5).powi(2)).exp() + 0.4 * (-((h - 19.5) / 3.0).powi(2)).exp();
            shape * (1.0 + rng.random_range(-0.1..=0.1))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourRecord {
    pub hour: usize,
    pub converged: bool,
    pub min_voltage_bus: usize,
    pub min_voltage_pu: f64,
    pub bus_voltage_pu: Vec<f64>,
    /// `+inf` when the hour did not converge.
    pub total_loss_kw: f64,
    pub sq_dev: f64,
    pub evci_kw: Vec<f64>,
    pub evci_total_kw: f64,
    pub base_load_kw: f64,
    /// Power drawn from the substation: all loads plus losses.
    pub system_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesReport {
    pub locations: Vec<usize>,
    pub hours: Vec<HourRecord>,
    pub periods: Vec<Period>,
    pub evci_energy_kwh: Vec<f64>,
    pub system_energy_kwh: f64,
    pub nonconverged_hours: Vec<usize>,
    pub min_voltage_pu: f64,
}

impl TimeSeriesReport {
    pub fn all_within(&self, v_min: f64) -> bool {
        self.nonconverged_hours.is_empty() && self.min_voltage_pu >= v_min
    }
}

/// Hourly load flow with scaled base loads and EVCI profiles injected at
/// the placement buses (profile `i` at the `i`-th smallest location).
pub fn run_timeseries(
    net: &FeederNetwork,
    pl: &Placement,
    profiles: &[EvciLoadProfile],
    base_scaling: &[f64],
    lf: &LoadFlowConfig,
) -> Result<TimeSeriesReport, SimError> {
    pl.validate(net)?;
    if profiles.len() != pl.len() {
        return Err(SimError::Length { what: "EVCI profiles", expected: pl.len(), actual: profiles.len() });
    }
    let hours = base_scaling.len();
    for p in profiles {
        if p.hourly_kw.len() != hours {
            return Err(SimError::Length { what: "EVCI hourly profile", expected: hours, actual: p.hourly_kw.len() });
        }
    }

    let records: Vec<HourRecord> = (0..hours)
        .into_par_iter()
        .map(|t| {
            let evci_kw: Vec<f64> = profiles.iter().map(|p| p.hourly_kw[t]).collect();
            let adds: Vec<(usize, f64)> = pl.locations().iter().copied().zip(evci_kw.iter().copied()).collect();
            let scaled = net.scaled(base_scaling[t]);
            let base_load_kw = scaled.total_p_kw();
            let loaded = scaled.with_added_p(&adds).expect("placement validated");
            let sol = solve(&loaded, lf);
            let (min_voltage_bus, min_voltage_pu) = sol.min_voltage();
            let usable = sol.is_usable();
            let (loss, dev) = if usable { objectives(&sol, lf) } else { (f64::INFINITY, f64::INFINITY) };
            HourRecord {
                hour: t,
                converged: usable,
                min_voltage_bus,
                min_voltage_pu,
                bus_voltage_pu: sol.v_mag(),
                total_loss_kw: loss,
                sq_dev: dev,
                evci_total_kw: evci_kw.iter().sum(),
                evci_kw,
                base_load_kw,
                system_kw: sol.slack_power.re * loaded.base_kw(),
            }
        })
        .collect();

    let evci_total: Vec<f64> = records.iter().map(|r| r.evci_total_kw).collect();
    let periods =
        if hours > 0 && hours.is_multiple_of(HOURS_PER_DAY) { classify_periods(&evci_total)? } else { Vec::new() };
    Ok(TimeSeriesReport {
        locations: pl.locations().to_vec(),
        evci_energy_kwh: profiles.iter().map(|p| p.hourly_kw.iter().sum()).collect(),
        system_energy_kwh: records.iter().map(|r| r.system_kw).sum(),
        nonconverged_hours: records.iter().filter(|r| !r.converged).map(|r| r.hour).collect(),
        min_voltage_pu: records.iter().map(|r| r.min_voltage_pu).fold(f64::INFINITY, f64::min),
        periods,
        hours: records,
    })
}

fn file_err(path: &Path, msg: impl ToString) -> SimError {
    SimError::File { path: path.display().to_string(), msg: msg.to_string() }
}

/// Writes `hour,evci_1_kw,...,evci_n_kw`.
pub fn write_profiles_csv(path: &Path, profiles: &[EvciLoadProfile]) -> Result<(), SimError> {
    let hours = profiles.first().map_or(0, |p| p.hourly_kw.len());
    let mut text = String::from("hour");
    for p in profiles {
        text.push_str(&format!(",evci_{}_kw", p.evci_id));
    }
    text.push('\n');
    for t in 0..hours {
        text.push_str(&t.to_string());
        for p in profiles {
            text.push_str(&format!(",{}", p.hourly_kw[t]));
        }
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| file_err(path, e))
}

/// Reads a profiles CSV back; sessions and tails are not stored there.
pub fn read_profiles_csv(path: &Path) -> Result<Vec<EvciLoadProfile>, SimError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| file_err(path, e))?;
    let headers = rdr.headers().map_err(|e| file_err(path, e))?.clone();
    if headers.get(0) != Some("hour") {
        return Err(file_err(path, "expected header starting with `hour`"));
    }
    let mut profiles: Vec<EvciLoadProfile> = headers
        .iter()
        .skip(1)
        .map(|h| {
            let id = h
                .strip_prefix("evci_")
                .and_then(|r| r.strip_suffix("_kw"))
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| file_err(path, format!("bad column `{h}`")))?;
            Ok(EvciLoadProfile { evci_id: id, hourly_kw: Vec::new(), tail_kw: Vec::new(), sessions: Vec::new() })
        })
        .collect::<Result<_, SimError>>()?;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| file_err(path, e))?;
        if rec.get(0).and_then(|h| h.parse::<usize>().ok()) != Some(row) {
            return Err(file_err(path, format!("row {}: expected hour {row}", row + 1)));
        }
        for (p, field) in profiles.iter_mut().zip(rec.iter().skip(1)) {
            let v: f64 = field.parse().map_err(|_| file_err(path, format!("row {}: bad number", row + 1)))?;
            p.hourly_kw.push(v);
        }
    }
    Ok(profiles)
}

/// Writes one row per session.
pub fn write_sessions_csv(path: &Path, profiles: &[EvciLoadProfile]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| file_err(path, e))?;
    for s in profiles.iter().flat_map(|p| &p.sessions) {
        w.serialize(s).map_err(|e| file_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Reads sessions back and attaches them to the matching profiles.
pub fn attach_sessions_csv(path: &Path, profiles: &mut [EvciLoadProfile]) -> Result<(), SimError> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| file_err(path, e))?;
    for rec in rdr.deserialize::<EvSession>() {
        let s = rec.map_err(|e| file_err(path, e))?;
        let p = profiles
            .iter_mut()
            .find(|p| p.evci_id == s.evci)
            .ok_or_else(|| file_err(path, format!("session for unknown EVCI {}", s.evci)))?;
        p.sessions.push(s);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_battery_needs_nothing() {
        let s = EvSession::new((1, 1), &EV_MODELS[0], 3.0, 0.8, 3.0, 50.0);
        assert_eq!(s.energy_kwh, 0.0);
        assert_eq!(s.duration_h, 0.0);
    }

    #[test]
    fn leaf_from_twenty_percent() {
        let s = EvSession::new((1, 1), &EV_MODELS[0], 3.0, 0.2, 3.0, 50.0);
        assert!((s.energy_kwh - 14.4).abs() < 1e-12);
        assert!((s.duration_h - 0.288).abs() < 1e-12);
    }

    #[test]
    fn pro_rating_splits_across_hours() {
        let mut hourly = vec![0.0; 3];
        let mut tail = Vec::new();
        accumulate(&mut hourly, &mut tail, 0.5, 2.25, 50.0);
        assert_eq!(hourly, vec![25.0, 50.0, 12.5]);
        accumulate(&mut hourly, &mut tail, 2.5, 4.5, 10.0);
        assert_eq!(hourly[2], 17.5);
        assert_eq!(tail, vec![10.0, 5.0]);
    }

    #[test]
    fn five_evcis_one_day_counts() {
        let profiles = simulate_evci(&SimConfig::default(), 5).unwrap();
        let total: usize = profiles.iter().map(|p| p.sessions.len()).sum();
        assert!((600..=1000).contains(&total), "{total}");
        for p in &profiles {
            assert!((120..=200).contains(&p.sessions.len()));
            assert!((p.delivered_kwh() - p.session_kwh()).abs() <= 1e-9 * p.session_kwh());
        }
    }

    #[test]
    fn simulation_is_seeded() {
        let cfg = SimConfig { horizon_days: 2, seed: 11, ..Default::default() };
        assert_eq!(simulate_evci(&cfg, 3).unwrap(), simulate_evci(&cfg, 3).unwrap());
        let other = SimConfig { seed: 12, ..cfg.clone() };
        assert_ne!(simulate_evci(&cfg, 1).unwrap(), simulate_evci(&other, 1).unwrap());
    }

    #[test]
    fn periods_on_constant_day() {
        assert_eq!(classify_periods(&[5.0; 24]).unwrap(), vec![Period::Normal; 24]);
    }

    #[test]
    fn periods_on_ramp() {
        // p67 of 1..=24 is 16.41 and p33 is 8.59
        let ramp: Vec<f64> = (1..=24).map(f64::from).collect();
        let p = classify_periods(&ramp).unwrap();
        assert!(p[..8].iter().all(|&x| x == Period::Offpeak));
        assert!(p[8..16].iter().all(|&x| x == Period::Normal));
        assert!(p[16..].iter().all(|&x| x == Period::Peak));
    }

    #[test]
    fn periods_are_per_day() {
        let mut two: Vec<f64> = (1..=24).map(f64::from).collect();
        two.extend(std::iter::repeat_n(3.0, 24));
        let p = classify_periods(&two).unwrap();
        assert_eq!(p[23], Period::Peak);
        assert!(p[24..].iter().all(|&x| x == Period::Normal));
        assert!(classify_periods(&two[..30]).is_err());
        assert!(classify_periods(&[]).is_err());
    }

    #[test]
    fn scaling_shape() {
        let m = diurnal_scaling(2, 4);
        assert_eq!(m.len(), 48);
        assert!(m.iter().all(|&x| x > 0.4 && x < 1.2));
        assert_eq!(m, diurnal_scaling(2, 4));
    }

    #[test]
    fn zero_profiles_reduce_to_base_case() {
        let net = FeederNetwork::ieee33();
        let pl = Placement::new(vec![2, 3], 1000.0).unwrap();
        let zero = |id| EvciLoadProfile { evci_id: id, hourly_kw: vec![0.0; 24], tail_kw: vec![], sessions: vec![] };
        let lf = LoadFlowConfig::default();
        let rep = run_timeseries(&net, &pl, &[zero(1), zero(2)], &[1.0; 24], &lf).unwrap();
        let base = solve(&net, &lf);
        for h in &rep.hours {
            assert_eq!(h.total_loss_kw, base.total_loss_kw);
        }
        assert_eq!(rep.periods, vec![Period::Normal; 24]);
    }

    #[test]
    fn single_hour_is_single_solve() {
        let net = FeederNetwork::ieee33();
        let pl = Placement::new(vec![5], 1000.0).unwrap();
        let prof = EvciLoadProfile { evci_id: 1, hourly_kw: vec![400.0], tail_kw: vec![], sessions: vec![] };
        let lf = LoadFlowConfig::default();
        let rep = run_timeseries(&net, &pl, &[prof], &[0.8], &lf).unwrap();
        let direct = solve(&net.scaled(0.8).with_added_p(&[(5, 400.0)]).unwrap(), &lf);
        assert_eq!((rep.hours[0].total_loss_kw, rep.hours[0].sq_dev), objectives(&direct, &lf));
        assert!(rep.periods.is_empty());
    }

    #[test]
    fn profile_count_must_match() {
        let net = FeederNetwork::ieee33();
        let pl = Placement::new(vec![5, 6], 1000.0).unwrap();
        let err = run_timeseries(&net, &pl, &[], &[1.0], &LoadFlowConfig::default()).unwrap_err();
        assert!(matches!(err, SimError::Length { .. }));
    }
}
