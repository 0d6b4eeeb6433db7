use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use evci_core::evsim::{
    attach_sessions_csv, diurnal_scaling, read_profiles_csv, run_timeseries, simulate_evci, write_profiles_csv,
    write_sessions_csv, EvciLoadProfile, Period, HOURS_PER_DAY,
};
use evci_core::forecast::{
    fit, forecast as arima_forecast, one_step_predictions, residual_normality, score, select_order, ForecastError,
    ForecastScores, PriceSeries,
};
use evci_core::loadflow::LoadFlowSummary;
use evci_core::network::{load_feeder_dir, load_scaling, save_scaling};
use evci_core::pricing::{evci_price, price_table, settle_profile, write_series_csv, DailyLedger, GridPriceSeries};
use evci_core::siting::{dominates, enumerate_with_budget, run_mopso, SitingError};
use evci_core::{apply_placement, solve, FeederNetwork, Placement};
use serde::Serialize;

use crate::config::Config;
use crate::manifest::ManifestBuilder;
use crate::output::{ensure_dir, join_locations, write_json, write_rows};
use crate::{Common, Numerical, SitingArgs};

struct Ctx {
    cfg: Config,
    manifest: ManifestBuilder,
}

fn setup(command: &str, common: &Common) -> Result<Ctx> {
    let mut cfg = Config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(n) = common.workers {
        if n == 0 {
            bail!("--workers must be positive");
        }
        // the global pool can only be built once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    ensure_dir(&common.out)?;
    let mut manifest = ManifestBuilder::new(command, common.record_time);
    if let Some(p) = &common.config {
        manifest.input(p)?;
    }
    Ok(Ctx { cfg, manifest })
}

fn load_network(common: &Common, ctx: &mut Ctx) -> Result<FeederNetwork> {
    match &common.feeder {
        None => Ok(FeederNetwork::ieee33()),
        Some(dir) => {
            let net = load_feeder_dir(dir, ctx.cfg.feeder.base_kv, ctx.cfg.feeder.base_mva)?;
            ctx.manifest.input(&dir.join("buses.csv"))?;
            ctx.manifest.input(&dir.join("branches.csv"))?;
            Ok(net)
        }
    }
}

fn apply_siting_args(cfg: &mut Config, args: &SitingArgs) {
    if let Some(n) = args.n {
        cfg.siting.n_evci = n;
    }
    if let Some(kw) = args.evci_kw {
        cfg.siting.evci_kw = kw;
    }
}

fn siting_error(e: SitingError) -> anyhow::Error {
    match e {
        SitingError::NoFeasiblePlacement => anyhow!(Numerical(e.to_string())),
        other => anyhow!(other),
    }
}

fn fmt_objective(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "inf".into()
    }
}

pub fn enumerate(common: &Common, args: &SitingArgs) -> Result<()> {
    let mut ctx = setup("enumerate", common)?;
    apply_siting_args(&mut ctx.cfg, args);
    let net = load_network(common, &mut ctx)?;
    let s = &ctx.cfg.siting;
    let rep =
        enumerate_with_budget(&net, s.evci_kw, s.n_evci, &ctx.cfg.loadflow, s.budget as u128).map_err(siting_error)?;

    let out = &common.out;
    write_rows(
        &out.join("cloud.csv"),
        "locations,loss_kw,sq_dev",
        rep.cloud.iter().map(|c| {
            format!(
                "{},{},{}",
                join_locations(&c.locations),
                fmt_objective(c.objectives.loss_kw),
                fmt_objective(c.objectives.sq_dev)
            )
        }),
    )?;
    write_json(&out.join("front.json"), &rep.front)?;
    write_json(&out.join("best.json"), &rep)?;
    println!(
        "evaluated {} placements ({} infeasible); front has {} points; best compromise {} loss {:.4} kW sq_dev {:.6} (mu {:.4})",
        rep.evaluations,
        rep.infeasible,
        rep.front.len(),
        rep.best.placement,
        rep.best.objectives.loss_kw,
        rep.best.objectives.sq_dev,
        rep.best_mu
    );
    if common.strict && rep.infeasible > 0 {
        ctx.manifest.write(out, &ctx.cfg)?;
        return Err(anyhow!(Numerical(format!("{} placements did not converge", rep.infeasible))));
    }
    ctx.manifest.write(out, &ctx.cfg)
}

#[derive(Debug, Serialize)]
struct CaseRow {
    case: &'static str,
    locations: Vec<usize>,
    converged: bool,
    loss_kw: f64,
    sq_dev: f64,
    min_voltage_pu: f64,
    min_voltage_bus: usize,
    min_line_loss_kw: f64,
    min_line_loss_branch: usize,
}

fn case_row(case: &'static str, net: &FeederNetwork, locations: &[usize], ctx: &Ctx) -> (CaseRow, LoadFlowSummary) {
    let sol = solve(net, &ctx.cfg.loadflow);
    let summary = LoadFlowSummary::new(net, &sol);
    let (loss, dev) = evci_core::objectives(&sol, &ctx.cfg.loadflow);
    let row = CaseRow {
        case,
        locations: locations.to_vec(),
        converged: sol.is_usable(),
        loss_kw: loss,
        sq_dev: dev,
        min_voltage_pu: summary.min_voltage_pu,
        min_voltage_bus: summary.min_voltage_bus,
        min_line_loss_kw: summary.min_loss_kw,
        min_line_loss_branch: summary.min_loss_branch,
    };
    (row, summary)
}

pub fn optimize(common: &Common, args: &SitingArgs, verify_oracle: bool) -> Result<()> {
    let mut ctx = setup("optimize", common)?;
    apply_siting_args(&mut ctx.cfg, args);
    let net = load_network(common, &mut ctx)?;
    let s = ctx.cfg.siting.clone();
    let report = run_mopso(&net, s.evci_kw, s.n_evci, &ctx.cfg.pso, &ctx.cfg.loadflow).map_err(siting_error)?;
    let out = &common.out;
    write_json(&out.join("siting_report.json"), &report)?;

    let (base_row, base_sum) = case_row("without_evci", &net, &[], &ctx);
    let mut rows = vec![base_row];
    let mut profiles = vec![("without_evci", base_sum)];
    if let Some(pl) = &report.placement {
        write_json(&out.join("placement.json"), pl)?;
        let placed = apply_placement(&net, pl)?;
        let (row, sum) = case_row("with_evci", &placed, pl.locations(), &ctx);
        rows.push(row);
        profiles.push(("with_evci", sum));
    }
    write_json(&out.join("comparison.json"), &rows)?;
    write_rows(
        &out.join("comparison.csv"),
        "case,locations,converged,loss_kw,sq_dev,min_voltage_pu,min_voltage_bus,min_line_loss_kw,min_line_loss_branch",
        rows.iter().map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.case,
                join_locations(&r.locations),
                r.converged,
                r.loss_kw,
                r.sq_dev,
                r.min_voltage_pu,
                r.min_voltage_bus,
                r.min_line_loss_kw,
                r.min_line_loss_branch
            )
        }),
    )?;
    let header: Vec<&str> = profiles.iter().map(|p| p.0).collect();
    write_rows(
        &out.join("voltage_profile.csv"),
        &format!("bus,{}", header.join(",")),
        (0..net.n_bus()).map(|i| {
            let vals: Vec<String> = profiles.iter().map(|p| p.1.bus_voltage_pu[i].to_string()).collect();
            format!("{},{}", i + 1, vals.join(","))
        }),
    )?;
    write_rows(
        &out.join("branch_loss.csv"),
        &format!("branch,{}", header.join(",")),
        (0..net.branches().len()).map(|i| {
            let vals: Vec<String> = profiles.iter().map(|p| p.1.branch_loss_kw[i].to_string()).collect();
            format!("{},{}", net.branches()[i].id, vals.join(","))
        }),
    )?;

    println!(
        "{:<14}{:<22}{:>12}{:>14}{:>18}{:>20}",
        "case", "locations", "loss (kW)", "sq. dev", "min V (bus)", "min loss (branch)"
    );
    for r in &rows {
        println!(
            "{:<14}{:<22}{:>12.4}{:>14.6}{:>12.5} ({:>3}){:>13.5} ({:>3})",
            r.case,
            format!("{{{}}}", r.locations.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")),
            r.loss_kw,
            r.sq_dev,
            r.min_voltage_pu,
            r.min_voltage_bus,
            r.min_line_loss_kw,
            r.min_line_loss_branch
        );
    }
    println!("{} PSO runs, {} load flows", report.runs.len(), report.total_evaluations);

    let mut failure = None;
    if common.strict && rows.iter().any(|r| !r.converged) {
        failure = Some("load flow did not converge".to_string());
    }
    if verify_oracle && s.n_evci > 0 {
        let rep = enumerate_with_budget(&net, s.evci_kw, s.n_evci, &ctx.cfg.loadflow, s.budget as u128)
            .map_err(siting_error)?;
        let dominated_by = rep.cloud.iter().filter(|c| dominates(&c.objectives, &report.objectives)).count();
        let matches = report.placement.as_ref() == Some(&rep.best.placement);
        #[derive(Serialize)]
        struct OracleCheck<'a> {
            evaluations: usize,
            enumeration_best: &'a evci_core::siting::ArchiveEntry,
            enumeration_front: &'a [evci_core::siting::ArchiveEntry],
            pso_objectives: evci_core::siting::ObjectivePair,
            dominated_by: usize,
            matches_enumeration_best: bool,
        }
        write_json(
            &out.join("oracle.json"),
            &OracleCheck {
                evaluations: rep.evaluations,
                enumeration_best: &rep.best,
                enumeration_front: &rep.front,
                pso_objectives: report.objectives,
                dominated_by,
                matches_enumeration_best: matches,
            },
        )?;
        println!(
            "oracle: {} placements, enumeration best {}, PSO result dominated by {} placements, same placement: {}",
            rep.evaluations, rep.best.placement, dominated_by, matches
        );
        if dominated_by > 0 {
            failure = Some(format!("PSO result is dominated by {dominated_by} enumerated placements"));
        }
    }
    ctx.manifest.write(out, &ctx.cfg)?;
    match failure {
        Some(msg) => Err(anyhow!(Numerical(msg))),
        None => Ok(()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate(
    common: &Common,
    placement: Option<&Path>,
    locations: Option<Vec<usize>>,
    evci_kw: Option<f64>,
    days: Option<usize>,
    scaling: Option<&Path>,
) -> Result<()> {
    let mut ctx = setup("simulate", common)?;
    let net = load_network(common, &mut ctx)?;
    if let Some(d) = days {
        ctx.cfg.sim.horizon_days = d;
    }
    let pl = match (placement, locations) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ctx.manifest.input(path)?;
            let pl: Placement = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            // re-validate: the file may have been edited by hand
            Placement::new(pl.locations().to_vec(), pl.evci_kw())?
        }
        (None, Some(locs)) => Placement::new(locs, evci_kw.unwrap_or(ctx.cfg.siting.evci_kw))?,
        (None, None) => bail!("one of --placement or --locations is required"),
    };
    pl.validate(&net)?;

    let hours = ctx.cfg.sim.horizon_hours();
    let multipliers = match scaling {
        Some(path) => {
            ctx.manifest.input(path)?;
            let m = load_scaling(path)?;
            if m.len() != hours {
                bail!("{} has {} hours, the horizon has {hours}", path.display(), m.len());
            }
            m
        }
        None => diurnal_scaling(ctx.cfg.sim.horizon_days, ctx.cfg.scaling_seed()),
    };
    let profiles = simulate_evci(&ctx.cfg.sim, pl.len())?;
    let ts = run_timeseries(&net, &pl, &profiles, &multipliers, &ctx.cfg.loadflow)?;

    let out = &common.out;
    write_json(&out.join("placement.json"), &pl)?;
    write_profiles_csv(&out.join("profiles.csv"), &profiles)?;
    write_sessions_csv(&out.join("sessions.csv"), &profiles)?;
    save_scaling(&out.join("scaling.csv"), &multipliers)?;
    write_rows(
        &out.join("hourly.csv"),
        "hour,converged,min_voltage_pu,min_voltage_bus,loss_kw,sq_dev,evci_kw,base_load_kw,system_kw",
        ts.hours.iter().map(|h| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                h.hour,
                h.converged,
                h.min_voltage_pu,
                h.min_voltage_bus,
                fmt_objective(h.total_loss_kw),
                fmt_objective(h.sq_dev),
                h.evci_total_kw,
                h.base_load_kw,
                h.system_kw
            )
        }),
    )?;
    let vheader: Vec<String> = (1..=net.n_bus()).map(|b| format!("v_{b}")).collect();
    write_rows(
        &out.join("voltages.csv"),
        &format!("hour,{}", vheader.join(",")),
        ts.hours.iter().map(|h| {
            let v: Vec<String> = h.bus_voltage_pu.iter().map(|x| x.to_string()).collect();
            format!("{},{}", h.hour, v.join(","))
        }),
    )?;
    write_rows(
        &out.join("periods.csv"),
        "hour,period,evci_kw",
        ts.hours.iter().zip(&ts.periods).map(|(h, p)| format!("{},{},{}", h.hour, p.as_str(), h.evci_total_kw)),
    )?;

    #[derive(Serialize)]
    struct SimSummary {
        locations: Vec<usize>,
        days: usize,
        hours: usize,
        sessions: usize,
        evci_energy_kwh: Vec<f64>,
        energy_after_horizon_kwh: Vec<f64>,
        system_energy_kwh: f64,
        min_voltage_pu: f64,
        nonconverged_hours: Vec<usize>,
    }
    let summary = SimSummary {
        locations: ts.locations.clone(),
        days: ctx.cfg.sim.horizon_days,
        hours,
        sessions: profiles.iter().map(|p| p.sessions.len()).sum(),
        evci_energy_kwh: ts.evci_energy_kwh.clone(),
        energy_after_horizon_kwh: profiles.iter().map(|p| p.tail_kw.iter().sum()).collect(),
        system_energy_kwh: ts.system_energy_kwh,
        min_voltage_pu: ts.min_voltage_pu,
        nonconverged_hours: ts.nonconverged_hours.clone(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!(
        "{} hours at {}: {} sessions, EVCI energy {:.1} kWh, min voltage {:.5} pu, {} non-converged hours",
        hours,
        pl,
        summary.sessions,
        summary.evci_energy_kwh.iter().sum::<f64>(),
        ts.min_voltage_pu,
        ts.nonconverged_hours.len()
    );
    ctx.manifest.write(out, &ctx.cfg)?;
    if common.strict && !ts.nonconverged_hours.is_empty() {
        return Err(anyhow!(Numerical(format!("{} hours did not converge", ts.nonconverged_hours.len()))));
    }
    Ok(())
}

fn read_periods(path: &Path) -> Result<Vec<Period>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        let hour: usize =
            rec.get(0).unwrap_or("").parse().with_context(|| format!("{} row {}", path.display(), i + 1))?;
        if hour != i {
            bail!("{} row {}: expected hour {i}", path.display(), i + 1);
        }
        let p: Period =
            rec.get(1).unwrap_or("").parse().map_err(|e: String| anyhow!("{} row {}: {e}", path.display(), i + 1))?;
        out.push(p);
    }
    Ok(out)
}

pub fn price(common: &Common, sim: &Path, grid_price: Option<&Path>) -> Result<()> {
    let mut ctx = setup("price", common)?;
    ctx.cfg.tariff.validate()?;
    let profiles_path = sim.join("profiles.csv");
    let sessions_path = sim.join("sessions.csv");
    let periods_path = sim.join("periods.csv");
    let mut profiles: Vec<EvciLoadProfile> = read_profiles_csv(&profiles_path)?;
    attach_sessions_csv(&sessions_path, &mut profiles)?;
    let periods = read_periods(&periods_path)?;
    for p in [&profiles_path, &sessions_path, &periods_path] {
        ctx.manifest.input(p)?;
    }
    let hours = periods.len();
    if hours == 0 || hours % HOURS_PER_DAY != 0 {
        bail!("{} must cover whole days, found {hours} hours", periods_path.display());
    }
    let grid = match grid_price {
        Some(path) => {
            ctx.manifest.input(path)?;
            GridPriceSeries::load_csv(path)?
        }
        None => GridPriceSeries::synthetic(hours, ctx.cfg.grid_price.lo, ctx.cfg.grid_price.hi, ctx.cfg.grid_seed()),
    };
    if grid.len() != hours {
        bail!("grid price has {} hours, the simulation has {hours}", grid.len());
    }

    let tariff = ctx.cfg.tariff;
    let table = price_table(&periods, &tariff, &grid)?;
    let ledgers: Vec<DailyLedger> = profiles
        .iter()
        .map(|p| settle_profile(p, &periods, &tariff, &grid))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    let out = &common.out;
    grid.save_csv(&out.join("grid_price.csv"))?;
    write_series_csv(&out.join("evci_price.csv"), "price", &table.iter().map(|r| r.evci_price).collect::<Vec<_>>())?;
    write_rows(
        &out.join("prices.csv"),
        "hour,grid_price,evci_price,period",
        table.iter().map(|r| format!("{},{},{},{}", r.hour, r.grid_price, r.evci_price, r.period.as_str())),
    )?;
    write_json(&out.join("ledgers.json"), &ledgers)?;
    write_rows(
        &out.join("ledgers.csv"),
        "evci_id,day,energy_kwh,revenue,grid_cost,profit,n_peak,n_normal,n_offpeak,session_revenue",
        ledgers.iter().map(|l| {
            format!(
                "{},{},{},{},{},{},{},{},{},{}",
                l.evci_id,
                l.day,
                l.energy_kwh,
                l.revenue,
                l.grid_cost,
                l.profit,
                l.ev_counts.peak,
                l.ev_counts.normal,
                l.ev_counts.offpeak,
                l.session_revenue
            )
        }),
    )?;
    println!(
        "EVCI price {:.4}-{:.4} per kWh over {hours} hours (peak {}, normal {}, off-peak {})",
        evci_price(&tariff, Period::Offpeak),
        evci_price(&tariff, Period::Peak),
        tariff.r_p,
        tariff.r_n,
        tariff.r_op
    );
    for l in ledgers.iter().filter(|l| l.day == 0) {
        println!(
            "day 1 EVCI {}: {:.1} kWh, revenue {:.2}, grid cost {:.2}, profit {:.2}, EVs {}",
            l.evci_id,
            l.energy_kwh,
            l.revenue,
            l.grid_cost,
            l.profit,
            l.ev_counts.total()
        );
    }
    ctx.manifest.write(out, &ctx.cfg)
}

fn forecast_error(e: ForecastError) -> anyhow::Error {
    match e {
        ForecastError::NonFinite(_) | ForecastError::NotStationary { .. } => anyhow!(Numerical(e.to_string())),
        other => anyhow!(other),
    }
}

pub fn forecast(common: &Common, input: &Path, holdout: Option<usize>, order: Option<Vec<usize>>) -> Result<()> {
    let mut ctx = setup("forecast", common)?;
    if let Some(h) = holdout {
        ctx.cfg.forecast.holdout = h;
    }
    let series = PriceSeries::load_csv(input)?;
    ctx.manifest.input(input)?;
    let f = ctx.cfg.forecast.clone();
    if f.holdout < 2 {
        bail!("--holdout must be at least 2");
    }
    let min_train = 2 * (f.max_p + f.max_d + f.max_q) + 10;
    if series.len() < f.holdout + min_train {
        bail!(
            "series has {} points; a holdout of {} needs at least {} (train at least {min_train})",
            series.len(),
            f.holdout,
            f.holdout + min_train
        );
    }
    let (train, test) = series.split(series.len() - f.holdout).map_err(forecast_error)?;

    let selection = match &order {
        Some(o) => {
            if o.len() != 3 {
                bail!("--order takes three values p,d,q");
            }
            if o[0] > f.max_p || o[1] > f.max_d || o[2] > f.max_q {
                bail!("--order exceeds the configured maximum orders");
            }
            None
        }
        None => Some(select_order(train.values(), f.max_p, f.max_d, f.max_q).map_err(forecast_error)?),
    };
    let (p, d, q) = match (&order, &selection) {
        (Some(o), _) => (o[0], o[1], o[2]),
        (None, Some(s)) => (s.p, s.d, s.q),
        (None, None) => unreachable!(),
    };
    let model = fit(train.values(), p, d, q).map_err(forecast_error)?;
    let predicted = arima_forecast(&model, train.values(), f.holdout).map_err(forecast_error)?;
    let rolling_all = one_step_predictions(&model, series.values()).map_err(forecast_error)?;
    let rolling = &rolling_all[rolling_all.len() - f.holdout..];
    let multi_scores = score(&predicted, test.values()).map_err(forecast_error)?;
    let rolling_scores = score(rolling, test.values()).map_err(forecast_error)?;
    let normality = residual_normality(&model, train.values()).ok();

    let out = &common.out;
    let start = test.start_hour();
    let rows = |pred: &[f64]| -> Vec<String> {
        pred.iter().zip(test.values()).enumerate().map(|(i, (p, a))| format!("{},{p},{a}", start + i)).collect()
    };
    write_rows(&out.join("forecast.csv"), "hour,predicted,actual", rows(&predicted))?;
    write_rows(&out.join("rolling_forecast.csv"), "hour,predicted,actual", rows(rolling))?;
    write_json(&out.join("model.json"), &model)?;
    if let Some(s) = &selection {
        write_json(&out.join("order_selection.json"), s)?;
    }
    #[derive(Serialize)]
    struct Scores {
        order: (usize, usize, usize),
        train_points: usize,
        holdout_points: usize,
        multi_step: ForecastScores,
        rolling_one_step: ForecastScores,
        residual_jarque_bera: Option<evci_core::forecast::NormalityTest>,
    }
    write_json(
        &out.join("scores.json"),
        &Scores {
            order: (p, d, q),
            train_points: train.len(),
            holdout_points: test.len(),
            multi_step: multi_scores,
            rolling_one_step: rolling_scores,
            residual_jarque_bera: normality,
        },
    )?;
    let r2 = |s: &ForecastScores| s.r2.map_or("undefined".to_string(), |v| format!("{v:.7}"));
    println!("ARIMA({p},{d},{q}) on {} points, {} held out", train.len(), test.len());
    println!("{:<18}{:>12}{:>14}{:>12}", "forecast", "RMSE", "R2", "MAE");
    println!("{:<18}{:>12.6}{:>14}{:>12.6}", "multi-step", multi_scores.rmse, r2(&multi_scores), multi_scores.mae);
    println!(
        "{:<18}{:>12.6}{:>14}{:>12.6}",
        "rolling 1-step",
        rolling_scores.rmse,
        r2(&rolling_scores),
        rolling_scores.mae
    );
    if let Some(n) = normality {
        println!("residual Jarque-Bera {:.3} (gaussian at 5%: {})", n.jb_statistic, n.gaussian_5pct);
    }
    ctx.manifest.write(out, &ctx.cfg)
}
