//! EVCI selling price, grid purchase cost and daily profit settlement.
//!
//! The selling price is a fixed service fee plus a time-based component that
//! depends on the hour's period (peak / normal / off-peak). Settlement is
//! energy based: each hour's delivered kWh is sold at the EVCI price and
//! bought at that hour's grid price. The per-EV view (fee plus period price
//! applied to each session's energy, by the period of its start hour) is
//! reported alongside.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evsim::{EvSession, EvciLoadProfile, Period, HOURS_PER_DAY};

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("invalid tariff: {0}")]
    Tariff(String),
    #[error("{what}: expected length {expected}, got {actual}")]
    Length { what: &'static str, expected: usize, actual: usize },
    #[error("invalid grid price: {0}")]
    GridPrice(String),
    #[error("{path}: {msg}")]
    File { path: String, msg: String },
}

/// Prices in currency per kWh (dollars by default: 0.02 = 2¢).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tariff {
    pub r_f: f64,
    pub r_p: f64,
    pub r_n: f64,
    pub r_op: f64,
}

impl Default for Tariff {
    fn default() -> Self {
        Self { r_f: 0.02, r_p: 0.08, r_n: 0.05, r_op: 0.02 }
    }
}

impl Tariff {
    pub fn new(r_f: f64, r_p: f64, r_n: f64, r_op: f64) -> Result<Self, PricingError> {
        let t = Self { r_f, r_p, r_n, r_op };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), PricingError> {
        if !(self.r_f >= 0.0 && self.r_op >= 0.0 && self.r_n >= self.r_op && self.r_p >= self.r_n) {
            return Err(PricingError::Tariff(format!("need r_p >= r_n >= r_op >= 0 and r_f >= 0, got {self:?}")));
        }
        Ok(())
    }

    pub fn period_price(&self, period: Period) -> f64 {
        match period {
            Period::Peak => self.r_p,
            Period::Normal => self.r_n,
            Period::Offpeak => self.r_op,
        }
    }
}

/// Selling price for an hour in `period`.
pub fn evci_price(tariff: &Tariff, period: Period) -> f64 {
    tariff.r_f + tariff.period_price(period)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPriceSeries {
    hourly: Vec<f64>,
}

impl GridPriceSeries {
    pub fn new(hourly: Vec<f64>) -> Result<Self, PricingError> {
        if let Some((h, p)) = hourly.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(PricingError::GridPrice(format!("hour {h} has price {p}")));
        }
        Ok(Self { hourly })
    }

    /// Seeded diurnal real-time price between `lo` and `hi` per kWh: cheap
    /// overnight, rising through the day to an evening high, with noise.
    pub fn synthetic(hours: usize, lo: f64, hi: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hourly = (0..hours)
            .map(|t| {
                let h = (t % HOURS_PER_DAY) as f64 + 0.5;
                let shape = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (h - 6.0) / 24.0).cos();
                let noisy = (0.85 * shape + 0.15 * rng.random::<f64>()).clamp(0.0, 1.0);
                lo + (hi - lo) * noisy
            })
            .collect();
        Self { hourly }
    }

    pub fn hourly(&self) -> &[f64] {
        &self.hourly
    }

    pub fn len(&self) -> usize {
        self.hourly.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hourly.is_empty()
    }

    pub fn day(&self, day: usize) -> Option<&[f64]> {
        self.hourly.get(day * HOURS_PER_DAY..(day + 1) * HOURS_PER_DAY)
    }

    pub fn load_csv(path: &Path) -> Result<Self, PricingError> {
        Self::new(read_series_csv(path, "price")?)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), PricingError> {
        write_series_csv(path, "price", &self.hourly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvCounts {
    pub peak: usize,
    pub normal: usize,
    pub offpeak: usize,
}

impl EvCounts {
    pub fn total(&self) -> usize {
        self.peak + self.normal + self.offpeak
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyLedger {
    pub evci_id: usize,
    pub day: usize,
    pub energy_kwh: f64,
    pub revenue: f64,
    pub grid_cost: f64,
    pub profit: f64,
    pub ev_counts: EvCounts,
    /// Revenue when each session is billed at the price of its start hour.
    pub session_revenue: f64,
}

/// Settles one day of one EVCI.
///
/// `hourly_kwh`, `periods` and `grid` must all cover the same hours of day
/// `day`; sessions are matched to that day by their start hour.
pub fn settle_day(
    evci_id: usize,
    day: usize,
    hourly_kwh: &[f64],
    sessions: &[EvSession],
    periods: &[Period],
    tariff: &Tariff,
    grid: &[f64],
) -> Result<DailyLedger, PricingError> {
    tariff.validate()?;
    if periods.len() != hourly_kwh.len() {
        return Err(PricingError::Length { what: "period labels", expected: hourly_kwh.len(), actual: periods.len() });
    }
    if grid.len() != hourly_kwh.len() {
        return Err(PricingError::Length { what: "grid prices", expected: hourly_kwh.len(), actual: grid.len() });
    }
    let mut revenue = 0.0;
    let mut grid_cost = 0.0;
    for ((&e, &p), &g) in hourly_kwh.iter().zip(periods).zip(grid) {
        revenue += e * evci_price(tariff, p);
        grid_cost += e * g;
    }

    let day_start = (day * HOURS_PER_DAY) as f64;
    let mut ev_counts = EvCounts { peak: 0, normal: 0, offpeak: 0 };
    let mut session_revenue = 0.0;
    for s in sessions {
        let offset = s.start_h - day_start;
        if !(0.0..hourly_kwh.len() as f64).contains(&offset) {
            continue;
        }
        let period = periods[offset as usize];
        match period {
            Period::Peak => ev_counts.peak += 1,
            Period::Normal => ev_counts.normal += 1,
            Period::Offpeak => ev_counts.offpeak += 1,
        }
        session_revenue += s.energy_kwh * evci_price(tariff, period);
    }

    Ok(DailyLedger {
        evci_id,
        day,
        energy_kwh: hourly_kwh.iter().sum(),
        revenue,
        grid_cost,
        profit: revenue - grid_cost,
        ev_counts,
        session_revenue,
    })
}

/// Day-by-day ledgers for one EVCI over the profile's horizon.
pub fn settle_profile(
    profile: &EvciLoadProfile,
    periods: &[Period],
    tariff: &Tariff,
    grid: &GridPriceSeries,
) -> Result<Vec<DailyLedger>, PricingError> {
    let hours = profile.hourly_kw.len();
    if !hours.is_multiple_of(HOURS_PER_DAY) {
        return Err(PricingError::Length {
            what: "EVCI profile (whole days)",
            expected: hours.div_ceil(HOURS_PER_DAY) * HOURS_PER_DAY,
            actual: hours,
        });
    }
    if periods.len() != hours {
        return Err(PricingError::Length { what: "period labels", expected: hours, actual: periods.len() });
    }
    if grid.len() != hours {
        return Err(PricingError::Length { what: "grid prices", expected: hours, actual: grid.len() });
    }
    (0..hours / HOURS_PER_DAY)
        .map(|d| {
            let r = d * HOURS_PER_DAY..(d + 1) * HOURS_PER_DAY;
            settle_day(
                profile.evci_id,
                d,
                &profile.hourly_kw[r.clone()],
                &profile.sessions,
                &periods[r.clone()],
                tariff,
                &grid.hourly()[r],
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceRow {
    pub hour: usize,
    pub grid_price: f64,
    pub evci_price: f64,
    pub period: Period,
}

pub fn price_table(periods: &[Period], tariff: &Tariff, grid: &GridPriceSeries) -> Result<Vec<PriceRow>, PricingError> {
    if periods.len() != grid.len() {
        return Err(PricingError::Length { what: "grid prices", expected: periods.len(), actual: grid.len() });
    }
    Ok(periods
        .iter()
        .zip(grid.hourly())
        .enumerate()
        .map(|(hour, (&period, &g))| PriceRow { hour, grid_price: g, evci_price: evci_price(tariff, period), period })
        .collect())
}

/// Writes `hour,<column>`.
pub fn write_series_csv(path: &Path, column: &str, values: &[f64]) -> Result<(), PricingError> {
    let mut text = format!("hour,{column}\n");
    for (h, v) in values.iter().enumerate() {
        text.push_str(&format!("{h},{v}\n"));
    }
    fs::write(path, text).map_err(|e| PricingError::File { path: path.display().to_string(), msg: e.to_string() })
}

/// Reads `hour,<column>` with hours 0.. in order.
pub fn read_series_csv(path: &Path, column: &str) -> Result<Vec<f64>, PricingError> {
    let err = |msg: String| PricingError::File { path: path.display().to_string(), msg };
    let mut rdr = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| err(e.to_string()))?;
    if headers.iter().ne(["hour", column]) {
        return Err(err(format!("expected header `hour,{column}`")));
    }
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            if rec.get(0).and_then(|h| h.parse::<usize>().ok()) != Some(i) {
                return Err(err(format!("row {}: expected hour {i}", i + 1)));
            }
            rec.get(1)
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("row {}: bad value", i + 1)))
        })
        .collect()
}
