//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails. Tolerances are pinned as constants.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use evci_core::evsim::{simulate_evci, EvSession, Period, SimConfig};
use evci_core::forecast::{fit_with_mean, forecast, score, select_order, ForecastScores};
use evci_core::network::{Branch, Bus};
use evci_core::pricing::{settle_day, Tariff};
use evci_core::siting::{best_compromise, crowding_distances, dominates, ArchiveEntry, ObjectivePair, ParetoArchive};
use evci_core::{objectives, solve, FeederNetwork, LoadFlowConfig, Placement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;

const N_EVCI: usize = 5;
const EVCI_KW: f64 = 1000.0;
const ENUMERATION_SIZE: usize = 201_376;
const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const MIN_BEST_MATCHES: usize = 4;

const CANONICAL_BASE_LOSS_KW: f64 = 202.7;
const CANONICAL_TOL: f64 = 0.01;
const PUBLISHED_BASE_LOSS_KW: f64 = 164.36;
const PUBLISHED_PLACED_LOSS_KW: f64 = 201.40;
const PUBLISHED_BASE_VMIN: f64 = 0.9183;
const PUBLISHED_PLACED_VMIN: f64 = 0.91729;
const PUBLISHED_PLACEMENT: [usize; 5] = [8, 15, 16, 17, 18];
const PUBLISHED_TOL: f64 = 0.02;

const BALANCE_FACTOR: f64 = 10.0;
const TWO_BUS_TOL: f64 = 1e-8;

const ARCHIVE_SEQUENCES: usize = 10_000;

const SIM_DAYS: u64 = 1_000;
const CONSERVATION_TOL: f64 = 1e-12;
const EVCI_CAP_KW: f64 = 1000.0;

const PUBLISHED_PROFIT_BAND: (f64, f64) = (136.0, 168.0);

const IMA_N: usize = 5832;
const IMA_THETA: f64 = 0.5;
const THETA_TOL: f64 = 0.05;
const QUADRATIC_TOL: f64 = 1e-9;
const SIM_PRICE_DAYS: &str = "243";
const TRAIN_POINTS: u64 = 5664;
const HOLDOUT_POINTS: u64 = 168;
const MIN_HOLDOUT_R2: f64 = 0.95;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn evci(args: &[&str]) -> Result<String, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_evci")).args(args).output().map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(format!(
            "evci {} exited {:?}: {}",
            args.join(" "),
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    Ok(String::from_utf8_lossy(&o.stdout).into_owned())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
}

fn pair(v: &Value) -> ObjectivePair {
    ObjectivePair::new(v["loss_kw"].as_f64().unwrap_or(f64::INFINITY), v["sq_dev"].as_f64().unwrap_or(f64::INFINITY))
}

fn locations(v: &Value) -> Vec<usize> {
    v["locations"]
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_u64()).map(|x| x as usize).collect())
        .unwrap_or_default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn criterion_1(work: &Path) -> Result<Outcome, String> {
    let enum_dir = work.join("enumerate");
    let n = N_EVCI.to_string();
    let kw = EVCI_KW.to_string();
    evci(&["enumerate", "--n", &n, "--evci-kw", &kw, "--out", s(&enum_dir)])?;
    let text = fs::read_to_string(enum_dir.join("cloud.csv")).map_err(|e| e.to_string())?;
    let mut cloud = Vec::with_capacity(ENUMERATION_SIZE);
    for line in text.lines().skip(1) {
        let mut f = line.split(',');
        let _ = f.next();
        let parse = |v: Option<&str>| match v {
            Some("inf") | None => f64::INFINITY,
            Some(x) => x.parse().unwrap_or(f64::NAN),
        };
        cloud.push(ObjectivePair::new(parse(f.next()), parse(f.next())));
    }
    let best = json(&enum_dir.join("best.json"))?;
    let exact_best = locations(&best["best"]["placement"]);

    let mut dominated = Vec::new();
    let mut matches = 0;
    let mut found = Vec::new();
    for seed in SEEDS {
        let dir = work.join(format!("optimize_{seed}"));
        evci(&["optimize", "--n", &n, "--evci-kw", &kw, "--seed", &seed.to_string(), "--out", s(&dir)])?;
        let rep = json(&dir.join("siting_report.json"))?;
        let ours = pair(&rep["objectives"]);
        let locs = locations(&rep["placement"]);
        if cloud.iter().any(|c| dominates(c, &ours)) {
            dominated.push(seed);
        }
        if locs == exact_best {
            matches += 1;
        }
        found.push(format!("seed {seed} {locs:?}"));
    }
    let pass = cloud.len() == ENUMERATION_SIZE && dominated.is_empty() && matches >= MIN_BEST_MATCHES;
    Ok(outcome(
        pass,
        format!(
            "{} placements enumerated (need {ENUMERATION_SIZE}); best compromise {exact_best:?}; dominated seeds {dominated:?}; {matches}/{} match (need {MIN_BEST_MATCHES}); {}",
            cloud.len(),
            SEEDS.len(),
            found.join(", ")
        ),
    ))
}

fn criterion_2(work: &Path) -> Result<Outcome, String> {
    let dir = work.join("optimize_1");
    if !dir.join("comparison.json").exists() {
        evci(&["optimize", "--seed", "1", "--out", s(&dir)])?;
    }
    let rows = json(&dir.join("comparison.json"))?;
    let base = &rows[0];
    let placed = &rows[1];
    let f = |v: &Value, k: &str| v[k].as_f64().unwrap_or(f64::NAN);
    let base_loss = f(base, "loss_kw");
    let placed_loss = f(placed, "loss_kw");
    let base_vmin = f(base, "min_voltage_pu");
    let placed_vmin = f(placed, "min_voltage_pu");
    let placement = locations(placed);

    let canonical = rel(base_loss, CANONICAL_BASE_LOSS_KW) <= CANONICAL_TOL;
    let published = rel(base_loss, PUBLISHED_BASE_LOSS_KW) <= PUBLISHED_TOL
        && rel(placed_loss, PUBLISHED_PLACED_LOSS_KW) <= PUBLISHED_TOL
        && rel(base_vmin, PUBLISHED_BASE_VMIN) <= PUBLISHED_TOL
        && rel(placed_vmin, PUBLISHED_PLACED_VMIN) <= PUBLISHED_TOL
        && placement == PUBLISHED_PLACEMENT;
    let dataset = if published {
        "published figures reproduced"
    } else if canonical {
        "canonical data, oracle consistency governs"
    } else {
        "base loss matches neither reference"
    };
    Ok(outcome(
        canonical || published,
        format!(
            "{dataset}; base loss {base_loss:.4} kW (published {PUBLISHED_BASE_LOSS_KW}, canonical {CANONICAL_BASE_LOSS_KW}) sq_dev {:.6} Vmin {base_vmin:.5} at bus {} min line loss {:.5} kW; placed {placement:?} loss {placed_loss:.4} kW (published {PUBLISHED_PLACED_LOSS_KW} at {PUBLISHED_PLACEMENT:?}) sq_dev {:.6} Vmin {placed_vmin:.5} at bus {} (published {PUBLISHED_BASE_VMIN}/{PUBLISHED_PLACED_VMIN})",
            f(base, "sq_dev"),
            base["min_voltage_bus"],
            f(base, "min_line_loss_kw"),
            f(placed, "sq_dev"),
            placed["min_voltage_bus"],
        ),
    ))
}

fn chain(n: usize, p_kw: f64, q_kvar: f64, r: f64, x: f64) -> FeederNetwork {
    let buses = (1..=n)
        .map(|id| Bus { id, p_load: if id == 1 { 0.0 } else { p_kw }, q_load: if id == 1 { 0.0 } else { q_kvar } })
        .collect();
    let branches = (1..n).map(|i| Branch { id: i, from_bus: i, to_bus: i + 1, r, x }).collect();
    FeederNetwork::new(12.66, 100.0, buses, branches).unwrap()
}

fn criterion_3() -> Result<Outcome, String> {
    let cfg = LoadFlowConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let mut worst_balance: f64 = 0.0;
    let base = FeederNetwork::ieee33();
    for k in 0..200 {
        let m = if k == 0 { 1.0 } else { rng.random_range(0.0..1.8) };
        let net = base.scaled(m);
        let sol = solve(&net, &cfg);
        if !sol.converged {
            return Ok(outcome(false, format!("no convergence at scaling {m}")));
        }
        let supplied = sol.slack_power.re * net.base_kw();
        worst_balance = worst_balance.max((supplied - net.total_p_kw() - sol.total_loss_kw).abs() / net.base_kw());
    }

    let mut monotone_violations = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..25);
        let p = rng.random_range(1.0..150.0);
        let net = chain(n, p, 0.6 * p, rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let v = solve(&net, &cfg).v_mag();
        if v.windows(2).any(|w| w[1] >= w[0]) {
            monotone_violations += 1;
        }
    }

    let tight = LoadFlowConfig { tol: 1e-12, ..Default::default() };
    let mut worst_two_bus: f64 = 0.0;
    for &(p, q, r, x) in
        &[(1000.0, 600.0, 0.5, 0.3), (3000.0, 0.0, 1.2, 0.8), (50.0, 20.0, 0.1, 0.4), (2500.0, 1800.0, 0.9, 0.7)]
    {
        let net = chain(2, p, q, r, x);
        let zb = net.base_ohm();
        let (pp, qq, rr, xx) = (p / net.base_kw(), q / net.base_kw(), r / zb, x / zb);
        // V^4 + (2(PR + QX) - 1) V^2 + (P^2 + Q^2)(R^2 + X^2) = 0
        let b = 2.0 * (pp * rr + qq * xx) - 1.0;
        let c = (pp * pp + qq * qq) * (rr * rr + xx * xx);
        let expected = ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt();
        worst_two_bus = worst_two_bus.max((solve(&net, &tight).v_mag()[1] - expected).abs());
    }

    let a = solve(&base, &cfg);
    let b = solve(&base, &cfg);
    let deterministic = a == b && objectives(&a, &cfg) == objectives(&b, &cfg);

    let pass = worst_balance <= BALANCE_FACTOR * cfg.tol
        && monotone_violations == 0
        && worst_two_bus <= TWO_BUS_TOL
        && deterministic;
    Ok(outcome(
        pass,
        format!(
            "balance error {worst_balance:.2e} (limit {:.0e}); {monotone_violations} monotonicity violations in 200 chains; 2-bus error {worst_two_bus:.2e} (limit {TWO_BUS_TOL:.0e}); deterministic {deterministic}",
            BALANCE_FACTOR * cfg.tol
        ),
    ))
}

fn criterion_4() -> Result<Outcome, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let placement = |i: usize| Placement::new(vec![2 + i % 30, 40 + i], EVCI_KW).unwrap();
    let mut dominated_pairs = 0;
    let mut lost_ends = 0;
    let mut scaling_changes = 0;
    for _ in 0..ARCHIVE_SEQUENCES {
        let len = rng.random_range(1..60);
        // coarse grid so ties and duplicates are common
        let seq: Vec<ObjectivePair> = (0..len)
            .map(|_| ObjectivePair::new(rng.random_range(0..40) as f64 * 0.5, rng.random_range(0..40) as f64 * 0.25))
            .collect();
        let mut a = ParetoArchive::new(1000);
        for (i, o) in seq.iter().enumerate() {
            a.insert(placement(i), *o);
        }
        let m = a.members();
        for x in m {
            if m.iter().any(|y| dominates(&y.objectives, &x.objectives)) {
                dominated_pairs += 1;
            }
        }

        let s1 = rng.random_range(0.01..100.0);
        let s2 = rng.random_range(0.01..100.0);
        let scaled: Vec<ArchiveEntry> = m
            .iter()
            .map(|e| ArchiveEntry {
                placement: e.placement.clone(),
                objectives: ObjectivePair::new(e.objectives.loss_kw * s1, e.objectives.sq_dev * s2),
            })
            .collect();
        if best_compromise(m).map(|b| b.0) != best_compromise(&scaled).map(|b| b.0) {
            scaling_changes += 1;
        }

        let objs: Vec<ObjectivePair> = m.iter().map(|e| e.objectives).collect();
        let lo = objs.iter().map(|o| o.loss_kw).fold(f64::INFINITY, f64::min);
        let hi = objs.iter().map(|o| o.loss_kw).fold(f64::NEG_INFINITY, f64::max);
        let cap = rng.random_range(2..6);
        let mut t = ParetoArchive::new(cap);
        for (i, o) in objs.iter().enumerate() {
            t.insert(placement(i), *o);
        }
        t.crowding_truncate();
        let kept = |v: f64| t.members().iter().any(|e| e.objectives.loss_kw == v);
        let ends_infinite = objs.len() < 2 || crowding_distances(&objs).iter().filter(|d| d.is_infinite()).count() >= 2;
        if t.len() > cap || !kept(lo) || !kept(hi) || !ends_infinite {
            lost_ends += 1;
        }
    }
    Ok(outcome(
        dominated_pairs == 0 && lost_ends == 0 && scaling_changes == 0,
        format!(
            "{ARCHIVE_SEQUENCES} sequences: {dominated_pairs} dominated members, {lost_ends} truncations losing a boundary point, {scaling_changes} compromise changes under scaling"
        ),
    ))
}

fn station_overlaps(sessions: &[EvSession], stations: usize) -> usize {
    let mut bad = 0;
    for st in 1..=stations {
        let mine: Vec<&EvSession> = sessions.iter().filter(|s| s.station == st).collect();
        bad += mine.windows(2).filter(|w| w[1].start_h < w[0].end_h() - 1e-12).count();
    }
    bad
}

fn criterion_5() -> Result<Outcome, String> {
    let mut bad_counts = 0;
    let mut worst_conservation: f64 = 0.0;
    let mut peak_kw: f64 = 0.0;
    let mut overlaps = 0;
    for seed in 0..SIM_DAYS {
        let cfg = SimConfig { horizon_days: 1, seed, ..Default::default() };
        let profiles = simulate_evci(&cfg, N_EVCI).map_err(|e| e.to_string())?;
        for p in &profiles {
            for st in 1..=cfg.stations_per_evci {
                let n = p.sessions.iter().filter(|s| s.station == st && s.arrival_h < 24.0).count();
                if !(6..=10).contains(&n) {
                    bad_counts += 1;
                }
            }
            worst_conservation = worst_conservation.max((p.delivered_kwh() - p.session_kwh()).abs() / p.session_kwh());
            peak_kw = p.hourly_kw.iter().chain(&p.tail_kw).fold(peak_kw, |a, &b| a.max(b));
            overlaps += station_overlaps(&p.sessions, cfg.stations_per_evci);
        }
    }
    let pass = bad_counts == 0 && worst_conservation <= CONSERVATION_TOL && peak_kw <= EVCI_CAP_KW && overlaps == 0;
    Ok(outcome(
        pass,
        format!(
            "{SIM_DAYS} days x {N_EVCI} EVCIs: {bad_counts} station-days outside [6,10]; energy mismatch {worst_conservation:.1e} (limit {CONSERVATION_TOL:.0e}); peak {peak_kw:.1} kW (limit {EVCI_CAP_KW}); {overlaps} overlapping sessions"
        ),
    ))
}

fn read_prices(p: &Path) -> Result<Vec<f64>, String> {
    let text = fs::read_to_string(p).map_err(|e| e.to_string())?;
    text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap_or("").parse::<f64>().map_err(|e| e.to_string())).collect()
}

fn day1_profits(dir: &Path) -> Result<Vec<f64>, String> {
    let ledgers = json(&dir.join("ledgers.json"))?;
    Ok(ledgers
        .as_array()
        .ok_or("ledgers.json is not a list")?
        .iter()
        .filter(|l| l["day"] == 0)
        .map(|l| l["profit"].as_f64().unwrap_or(f64::NAN))
        .collect())
}

fn criterion_6(work: &Path) -> Result<Outcome, String> {
    let root = work.join("day1");
    let opt = work.join("optimize_1");
    if !opt.join("placement.json").exists() {
        evci(&["optimize", "--seed", "1", "--out", s(&opt)])?;
    }
    evci(&[
        "simulate",
        "--placement",
        s(&opt.join("placement.json")),
        "--days",
        "1",
        "--seed",
        "1",
        "--out",
        s(&root.join("sim")),
    ])?;
    evci(&["price", "--sim", s(&root.join("sim")), "--seed", "1", "--out", s(&root.join("default"))])?;
    let sell = read_prices(&root.join("default/evci_price.csv"))?;
    let buy = read_prices(&root.join("default/grid_price.csv"))?;
    let default_profits = day1_profits(&root.join("default"))?;
    let default_sell_ge_buy = sell.iter().zip(&buy).all(|(s, b)| s >= b);

    // same grid curve, capped so the EVCI never sells below cost
    let mut capped = String::from("hour,price\n");
    for (h, (s, b)) in sell.iter().zip(&buy).enumerate() {
        capped.push_str(&format!("{h},{}\n", b.min(*s)));
    }
    let capped_path = root.join("capped_grid.csv");
    fs::write(&capped_path, capped).map_err(|e| e.to_string())?;
    evci(&["price", "--sim", s(&root.join("sim")), "--grid-price", s(&capped_path), "--out", s(&root.join("capped"))])?;
    let capped_profits = day1_profits(&root.join("capped"))?;

    let flat = settle_day(
        1,
        0,
        &[100.0; 24],
        &[],
        &[Period::Normal; 24],
        &Tariff::new(0.05, 0.0, 0.0, 0.0).unwrap(),
        &[0.03; 24],
    )
    .map_err(|e| e.to_string())?;
    let flat_ok = flat.profit == 48.0 && format!("{:.2}", flat.profit) == "48.00";

    let positive = |v: &[f64]| v.len() == N_EVCI && v.iter().all(|p| *p > 0.0);
    let gated_default = !default_sell_ge_buy || positive(&default_profits);
    let pass = positive(&capped_profits) && gated_default && flat_ok;
    let fmt = |v: &[f64]| v.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(" ");
    Ok(outcome(
        pass,
        format!(
            "day-1 profit with sell >= buy [{}]; default synthetic grid [{}] (sell >= buy every hour: {default_sell_ge_buy}); reported band ${:.0}-${:.0} not gated; flat-load example ${:.2}",
            fmt(&capped_profits),
            fmt(&default_profits),
            PUBLISHED_PROFIT_BAND.0,
            PUBLISHED_PROFIT_BAND.1,
            flat.profit
        ),
    ))
}

fn ima21(n: usize, theta: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, 1.0).unwrap();
    let e: Vec<f64> = (0..=n).map(|_| dist.sample(&mut rng)).collect();
    let mut x = Vec::with_capacity(n);
    let (mut lvl, mut slope) = (0.0, 0.0);
    for t in 1..=n {
        slope += e[t] + theta * e[t - 1];
        lvl += slope;
        x.push(lvl);
    }
    x
}

fn criterion_7(pipeline: &Path) -> Result<Outcome, String> {
    let x = ima21(IMA_N, IMA_THETA, 7);
    let sel = select_order(&x, 5, 2, 5).map_err(|e| e.to_string())?;
    let m = fit_with_mean(&x, sel.p, sel.d, sel.q, false).map_err(|e| e.to_string())?;
    let theta_hat = m.theta.first().copied().unwrap_or(f64::NAN);
    let a = (sel.p, sel.d, sel.q) == (0, 2, 1) && (theta_hat - IMA_THETA).abs() <= THETA_TOL;

    let q: Vec<f64> = (0..200).map(|t| 0.5 * (t * t) as f64 - 3.0 * t as f64 + 7.0).collect();
    let qm = fit_with_mean(&q[..150], 0, 2, 0, true).map_err(|e| e.to_string())?;
    let qf = forecast(&qm, &q[..150], 50).map_err(|e| e.to_string())?;
    let quad_err = qf.iter().zip(&q[150..]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let b = quad_err <= QUADRATIC_TOL;

    let xs: Vec<f64> = (0..100).map(|t| (t as f64 * 0.37).sin() + 0.01 * t as f64).collect();
    let c = score(&xs, &xs).map_err(|e| e.to_string())? == ForecastScores { rmse: 0.0, mae: 0.0, r2: Some(1.0) };

    let scores = json(&pipeline.join("forecast/scores.json"))?;
    let r2 = |k: &str| scores[k]["r2"].as_f64().unwrap_or(f64::NAN);
    let split_ok = scores["train_points"] == TRAIN_POINTS && scores["holdout_points"] == HOLDOUT_POINTS;
    let d = split_ok && r2("multi_step") >= MIN_HOLDOUT_R2;

    println!(
        "  forecast on simulated EVCI price, {TRAIN_POINTS} train / {HOLDOUT_POINTS} holdout hours, order {}",
        scores["order"]
    );
    println!("  {:<18}{:>12}{:>12}{:>12}", "holdout", "RMSE", "R2", "MAE");
    for (label, k) in [("168-step", "multi_step"), ("rolling 1-step", "rolling_one_step")] {
        println!(
            "  {:<18}{:>12.6}{:>12.4}{:>12.6}",
            label,
            scores[k]["rmse"].as_f64().unwrap_or(f64::NAN),
            r2(k),
            scores[k]["mae"].as_f64().unwrap_or(f64::NAN)
        );
    }
    Ok(outcome(
        a && b && c && d,
        format!(
            "(a) order ({},{},{}) theta {theta_hat:.4} (want (0,2,1), {IMA_THETA}±{THETA_TOL}): {}; (b) quadratic error {quad_err:.1e} (limit {QUADRATIC_TOL:.0e}): {}; (c) score(x,x) = (0,1,0): {}; (d) holdout R2 {:.4} (need {MIN_HOLDOUT_R2}): {}",
            sel.p,
            sel.d,
            sel.q,
            ok(a),
            ok(b),
            ok(c),
            r2("multi_step"),
            ok(d)
        ),
    ))
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn run_pipeline(root: &Path) -> Result<(), String> {
    let opt = root.join("optimize");
    let sim = root.join("simulate");
    let price = root.join("price");
    evci(&["optimize", "--seed", "11", "--out", s(&opt)])?;
    evci(&[
        "simulate",
        "--placement",
        s(&opt.join("placement.json")),
        "--days",
        SIM_PRICE_DAYS,
        "--seed",
        "11",
        "--out",
        s(&sim),
    ])?;
    evci(&["price", "--sim", s(&sim), "--seed", "11", "--out", s(&price)])?;
    evci(&[
        "forecast",
        "--input",
        s(&price.join("evci_price.csv")),
        "--seed",
        "11",
        "--out",
        s(&root.join("forecast")),
    ])?;
    Ok(())
}

fn tree(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = fs::read(&path).map_err(|e| e.to_string())?;
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), bytes);
            }
        }
    }
    Ok(out)
}

fn criterion_8(work: &Path) -> Result<Outcome, String> {
    let a = work.join("pipeline_a");
    let b = work.join("pipeline_b");
    run_pipeline(&a)?;
    run_pipeline(&b)?;
    let ta = tree(&a)?;
    let tb = tree(&b)?;
    let differing: Vec<String> =
        ta.keys().chain(tb.keys()).filter(|k| ta.get(*k) != tb.get(*k)).map(|k| k.display().to_string()).collect();
    Ok(outcome(
        differing.is_empty(),
        format!(
            "{} files compared across two optimize/simulate/price/forecast runs; differing: {differing:?}",
            ta.len()
        ),
    ))
}

fn main() -> ExitCode {
    let work = tempfile::tempdir().expect("temporary directory");
    let w = work.path();
    let mut failed = 0;
    let mut report = |name: &str, r: Result<Outcome, String>| {
        let o = r.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
        if !o.pass {
            failed += 1;
        }
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };

    report("1 oracle equivalence", criterion_1(w));
    report("2 base and placed case report", criterion_2(w));
    report("3 load-flow properties", criterion_3());
    report("4 archive properties", criterion_4());
    report("5 EV simulation", criterion_5());
    report("6 pricing", criterion_6(w));
    let pipeline = run_pipeline(&w.join("pipeline_a"));
    match pipeline {
        Ok(()) => report("7 forecasting", criterion_7(&w.join("pipeline_a"))),
        Err(e) => report("7 forecasting", Err(e)),
    }
    let _ = fs::remove_dir_all(w.join("pipeline_a"));
    report("8 end-to-end determinism", criterion_8(w));

    println!("{failed} of 8 criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
