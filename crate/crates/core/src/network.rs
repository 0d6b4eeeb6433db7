//! Radial feeder data model and CSV ingestion.
//!
//! Buses are numbered from 1 (the substation / slack bus) and must appear in
//! ascending, contiguous order. Branches may be listed in any order and with
//! either orientation; the tree structure rooted at bus 1 is derived when the
//! network is built.

use std::collections::{BTreeSet, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of the substation bus.
pub const SLACK_BUS: usize = 1;

const IEEE33_BUSES: &str = include_str!("../../../data/ieee33/buses.csv");
const IEEE33_BRANCHES: &str = include_str!("../../../data/ieee33/branches.csv");

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}, row {row}: {msg}")]
    Parse { file: String, row: usize, msg: String },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("network is not radial: {0}")]
    NotRadial(String),
    #[error("invalid placement: {0}")]
    InvalidPlacement(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub p_load: f64,
    pub q_load: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
}

/// A validated radial distribution feeder.
///
/// Immutable once built; [`apply_placement`] and friends return new values.
#[derive(Debug, Clone)]
pub struct FeederNetwork {
    base_kv: f64,
    base_mva: f64,
    buses: Vec<Bus>,
    branches: Vec<Branch>,
    // Derived tree, 0-based bus indices.
    order: Vec<usize>,
    parent: Vec<Option<usize>>,
    parent_branch: Vec<Option<usize>>,
}

impl FeederNetwork {
    pub fn new(base_kv: f64, base_mva: f64, buses: Vec<Bus>, branches: Vec<Branch>) -> Result<Self, NetworkError> {
        if !(base_kv > 0.0) || !(base_mva > 0.0) {
            return Err(NetworkError::Parse {
                file: "<bases>".into(),
                row: 0,
                msg: format!("bases must be positive (kv={base_kv}, mva={base_mva})"),
            });
        }
        let mut seen = BTreeSet::new();
        for (i, bus) in buses.iter().enumerate() {
            if !seen.insert(bus.id) {
                return Err(NetworkError::DuplicateBus(bus.id));
            }
            if bus.id != i + 1 {
                return Err(NetworkError::Parse {
                    file: "buses".into(),
                    row: i + 1,
                    msg: format!("bus ids must be ascending from 1, found {} at position {}", bus.id, i + 1),
                });
            }
            if !(bus.p_load >= 0.0) || !bus.q_load.is_finite() {
                return Err(NetworkError::Parse {
                    file: "buses".into(),
                    row: i + 1,
                    msg: format!("bus {} has invalid load ({}, {})", bus.id, bus.p_load, bus.q_load),
                });
            }
        }
        let n = buses.len();
        if n == 0 {
            return Err(NetworkError::NotRadial("no buses".into()));
        }
        for (k, br) in branches.iter().enumerate() {
            let bad = |msg: String| NetworkError::Parse { file: "branches".into(), row: k + 1, msg };
            if br.from_bus == br.to_bus {
                return Err(bad(format!("branch {} is a self-loop on bus {}", br.id, br.from_bus)));
            }
            for end in [br.from_bus, br.to_bus] {
                if end == 0 || end > n {
                    return Err(bad(format!("branch {} references unknown bus {end}", br.id)));
                }
            }
            if !(br.r >= 0.0) || !(br.x >= 0.0) {
                return Err(bad(format!("branch {} has negative impedance", br.id)));
            }
        }
        if branches.len() != n - 1 {
            return Err(NetworkError::NotRadial(format!(
                "{} buses need exactly {} branches, found {}",
                n,
                n - 1,
                branches.len()
            )));
        }

        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (k, br) in branches.iter().enumerate() {
            adj[br.from_bus - 1].push((br.to_bus - 1, k));
            adj[br.to_bus - 1].push((br.from_bus - 1, k));
        }
        let mut parent = vec![None; n];
        let mut parent_branch = vec![None; n];
        let mut visited = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([0usize]);
        visited[0] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &(v, k) in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    parent[v] = Some(u);
                    parent_branch[v] = Some(k);
                    queue.push_back(v);
                }
            }
        }
        if let Some(unreached) = visited.iter().position(|v| !v) {
            return Err(NetworkError::NotRadial(format!("bus {} is not connected to the substation", unreached + 1)));
        }

        Ok(Self { base_kv, base_mva, buses, branches, order, parent, parent_branch })
    }

    /// The standard 33-bus test feeder (12.66 kV, 100 MVA base).
    pub fn ieee33() -> Self {
        let buses = parse_buses(IEEE33_BUSES, "ieee33/buses.csv").expect("bundled bus data");
        let branches = parse_branches(IEEE33_BRANCHES, "ieee33/branches.csv").expect("bundled branch data");
        Self::new(12.66, 100.0, buses, branches).expect("bundled feeder is radial")
    }

    pub fn base_kv(&self) -> f64 {
        self.base_kv
    }

    pub fn base_mva(&self) -> f64 {
        self.base_mva
    }

    /// Base impedance in ohm.
    pub fn base_ohm(&self) -> f64 {
        self.base_kv * self.base_kv / self.base_mva
    }

    /// Base power in kW.
    pub fn base_kw(&self) -> f64 {
        self.base_mva * 1000.0
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn n_bus(&self) -> usize {
        self.buses.len()
    }

    pub fn total_p_kw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    pub fn total_q_kvar(&self) -> f64 {
        self.buses.iter().map(|b| b.q_load).sum()
    }

    /// Buses (0-based) in breadth-first order from the substation.
    pub(crate) fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    /// Upstream bus (0-based) of a 0-based bus index.
    pub(crate) fn parent(&self, bus: usize) -> Option<usize> {
        self.parent[bus]
    }

    /// Branch index feeding a 0-based bus index.
    pub(crate) fn parent_branch(&self, bus: usize) -> Option<usize> {
        self.parent_branch[bus]
    }

    /// Returns a copy with every bus load replaced by `f(bus)`, keeping topology.
    pub fn with_loads<F>(&self, mut f: F) -> Self
    where
        F: FnMut(&Bus) -> (f64, f64),
    {
        let mut out = self.clone();
        for bus in &mut out.buses {
            let (p, q) = f(bus);
            bus.p_load = p;
            bus.q_load = q;
        }
        out
    }

    /// Copy with all bus loads multiplied by `m`.
    pub fn scaled(&self, m: f64) -> Self {
        self.with_loads(|b| (b.p_load * m, b.q_load * m))
    }

    /// Copy with `kw` of extra unity-power-factor load added at each listed bus.
    pub fn with_added_p(&self, additions: &[(usize, f64)]) -> Result<Self, NetworkError> {
        let mut out = self.clone();
        for &(bus, kw) in additions {
            if bus <= SLACK_BUS || bus > self.n_bus() {
                return Err(NetworkError::InvalidPlacement(format!("bus {bus} is outside [2, {}]", self.n_bus())));
            }
            out.buses[bus - 1].p_load += kw;
        }
        Ok(out)
    }

    /// Writes `buses.csv` and `branches.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), NetworkError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| NetworkError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let mut text = String::from("bus_id,p_kw,q_kvar\n");
        for b in &self.buses {
            text.push_str(&format!("{},{},{}\n", b.id, b.p_load, b.q_load));
        }
        let path = dir.join("buses.csv");
        fs::write(&path, text).map_err(io(&path))?;
        let mut text = String::from("branch_id,from_bus,to_bus,r_ohm,x_ohm\n");
        for br in &self.branches {
            text.push_str(&format!("{},{},{},{},{}\n", br.id, br.from_bus, br.to_bus, br.r, br.x));
        }
        let path = dir.join("branches.csv");
        fs::write(&path, text).map_err(io(&path))
    }
}

/// A set of distinct EVCI bus locations, each carrying `evci_kw` of load.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    locations: Vec<usize>,
    #[serde(with = "kw_bits")]
    evci_kw: u64,
}

mod kw_bits {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bits: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(f64::from_bits(*bits))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        Ok(f64::deserialize(d)?.to_bits())
    }
}

impl Placement {
    /// Builds a placement; locations are stored sorted ascending.
    pub fn new(mut locations: Vec<usize>, evci_kw: f64) -> Result<Self, NetworkError> {
        if locations.is_empty() {
            return Err(NetworkError::InvalidPlacement("placement has no locations".into()));
        }
        if !(evci_kw >= 0.0) || !evci_kw.is_finite() {
            return Err(NetworkError::InvalidPlacement(format!("EVCI size {evci_kw} kW")));
        }
        locations.sort_unstable();
        if let Some(w) = locations.windows(2).find(|w| w[0] == w[1]) {
            return Err(NetworkError::InvalidPlacement(format!("bus {} listed twice", w[0])));
        }
        if locations[0] <= SLACK_BUS {
            return Err(NetworkError::InvalidPlacement(format!(
                "bus {} cannot host an EVCI (substation is bus 1)",
                locations[0]
            )));
        }
        Ok(Self { locations, evci_kw: (evci_kw + 0.0).to_bits() })
    }

    pub fn locations(&self) -> &[usize] {
        &self.locations
    }

    pub fn evci_kw(&self) -> f64 {
        f64::from_bits(self.evci_kw)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn validate(&self, net: &FeederNetwork) -> Result<(), NetworkError> {
        match self.locations.last() {
            Some(&last) if last > net.n_bus() => {
                Err(NetworkError::InvalidPlacement(format!("bus {last} is outside [2, {}]", net.n_bus())))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let ids: Vec<String> = self.locations.iter().map(|b| b.to_string()).collect();
        write!(f, "{{{}}}", ids.join(","))
    }
}

/// Adds `pl.evci_kw` of active load at each placement bus.
pub fn apply_placement(net: &FeederNetwork, pl: &Placement) -> Result<FeederNetwork, NetworkError> {
    pl.validate(net)?;
    let adds: Vec<(usize, f64)> = pl.locations().iter().map(|&b| (b, pl.evci_kw())).collect();
    net.with_added_p(&adds)
}

pub fn load_feeder(
    bus_file: &Path,
    branch_file: &Path,
    base_kv: f64,
    base_mva: f64,
) -> Result<FeederNetwork, NetworkError> {
    let buses = parse_buses(&read(bus_file)?, &bus_file.display().to_string())?;
    let branches = parse_branches(&read(branch_file)?, &branch_file.display().to_string())?;
    FeederNetwork::new(base_kv, base_mva, buses, branches)
}

/// Loads `buses.csv` and `branches.csv` from a directory.
pub fn load_feeder_dir(dir: &Path, base_kv: f64, base_mva: f64) -> Result<FeederNetwork, NetworkError> {
    load_feeder(&dir.join("buses.csv"), &dir.join("branches.csv"), base_kv, base_mva)
}

fn read(path: &Path) -> Result<String, NetworkError> {
    fs::read_to_string(path).map_err(|source| NetworkError::Io { path: path.display().to_string(), source })
}

/// Parses CSV text with an exact header, returning the numeric rows.
fn parse_rows(text: &str, file: &str, header: &[&str]) -> Result<Vec<Vec<f64>>, NetworkError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let hdr = rdr.headers().map_err(|e| NetworkError::Parse { file: file.into(), row: 0, msg: e.to_string() })?;
    if hdr.iter().ne(header.iter().copied()) {
        return Err(NetworkError::Parse {
            file: file.into(),
            row: 0,
            msg: format!("expected header `{}`", header.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| NetworkError::Parse { file: file.into(), row, msg: e.to_string() })?;
        if rec.len() != header.len() {
            return Err(NetworkError::Parse {
                file: file.into(),
                row,
                msg: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let vals = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| NetworkError::Parse {
                    file: file.into(),
                    row,
                    msg: format!("bad number `{f}`"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(vals);
    }
    Ok(rows)
}

fn as_index(v: f64, file: &str, row: usize) -> Result<usize, NetworkError> {
    if v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(NetworkError::Parse { file: file.into(), row, msg: format!("expected a non-negative integer id, got {v}") })
    }
}

fn parse_buses(text: &str, file: &str) -> Result<Vec<Bus>, NetworkError> {
    parse_rows(text, file, &["bus_id", "p_kw", "q_kvar"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| Ok(Bus { id: as_index(r[0], file, i + 1)?, p_load: r[1], q_load: r[2] }))
        .collect()
}

fn parse_branches(text: &str, file: &str) -> Result<Vec<Branch>, NetworkError> {
    parse_rows(text, file, &["branch_id", "from_bus", "to_bus", "r_ohm", "x_ohm"])?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(Branch {
                id: as_index(r[0], file, i + 1)?,
                from_bus: as_index(r[1], file, i + 1)?,
                to_bus: as_index(r[2], file, i + 1)?,
                r: r[3],
                x: r[4],
            })
        })
        .collect()
}

/// Reads an hourly load-multiplier CSV (`hour,multiplier`, hours 0..H in order).
pub fn load_scaling(path: &Path) -> Result<Vec<f64>, NetworkError> {
    let file = path.display().to_string();
    let rows = parse_rows(&read(path)?, &file, &["hour", "multiplier"])?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            if as_index(r[0], &file, i + 1)? != i {
                return Err(NetworkError::Parse { file: file.clone(), row: i + 1, msg: format!("expected hour {i}") });
            }
            if !(r[1] >= 0.0) || !r[1].is_finite() {
                return Err(NetworkError::Parse {
                    file: file.clone(),
                    row: i + 1,
                    msg: "multiplier must be >= 0".into(),
                });
            }
            Ok(r[1])
        })
        .collect()
}

pub fn save_scaling(path: &Path, multipliers: &[f64]) -> Result<(), NetworkError> {
    let mut text = String::from("hour,multiplier\n");
    for (h, m) in multipliers.iter().enumerate() {
        text.push_str(&format!("{h},{m}\n"));
    }
    fs::write(path, text).map_err(|source| NetworkError::Io { path: path.display().to_string(), source })
}
