use std::io;
use std::path::PathBuf;
use std::time::Instant;

use nmqfi_core::dynamics::{default_step, rates_from_u, solve_u_with, BranchCut, DecoherenceTrajectory, SolverOptions};
use nmqfi_core::gaussian::SqueezingParam;
use nmqfi_core::metrology::{
    bma_optimum, fit_final_decade, qfi_boundstate_largen, qfi_plus, series_from_trajectory, QfiSeries,
};
use nmqfi_core::spectral::{
    bound_state_threshold, discretized_spectrum, find_bound_state, markov_rate, SpectralParams,
};
use nmqfi_core::{Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Config, Method};
use crate::output::{curve_name, write_manifest, write_tables, Cell, PointRecord, RunManifest, SolverRecord, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Figure1a,
    Figure1b,
    Figure1cd,
    Figure2a,
    Figure2b,
    Custom,
    EvolveU,
    Sweep,
}

impl Scenario {
    pub fn id(self) -> &'static str {
        match self {
            Scenario::Figure1a => "figure1a",
            Scenario::Figure1b => "figure1b",
            Scenario::Figure1cd => "figure1cd",
            Scenario::Figure2a => "figure2a",
            Scenario::Figure2b => "figure2b",
            Scenario::Custom => "custom",
            Scenario::EvolveU => "evolve-u",
            Scenario::Sweep => "sweep",
        }
    }
}

/// Tables, per-point records and a free-form summary produced by one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub tables: Vec<Table>,
    pub points: Vec<PointRecord>,
    pub summary: Value,
}

/// Runs a scenario, writes `<out>/<id>/*.csv` and `<out>/<id>/manifest.json`.
///
/// Numerical failures are recorded per point; only I/O errors abort.
pub fn run_scenario(cfg: &Config, scenario: Scenario) -> io::Result<RunManifest> {
    let start = Instant::now();
    let out = compute(cfg, scenario);
    let dir = scenario_dir(cfg, scenario);
    let outputs = write_tables(&dir, &out.tables)?;
    let converged = out.points.iter().all(|p| p.converged);
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: scenario.id().to_string(),
        config: cfg.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        status: if converged { "ok" } else { "partial" }.to_string(),
        points: out.points,
        outputs,
        summary: out.summary,
    };
    write_manifest(&dir, &manifest)?;
    Ok(manifest)
}

pub fn scenario_dir(cfg: &Config, scenario: Scenario) -> PathBuf {
    cfg.run.out.join(scenario.id())
}

/// Runs the pipeline in memory.
pub fn compute(cfg: &Config, scenario: Scenario) -> ScenarioOutput {
    match scenario {
        Scenario::Figure1a => figure1a(cfg),
        Scenario::Figure1b => figure1b(cfg),
        Scenario::Figure1cd => {
            let s = &cfg.figure1cd;
            series_set(cfg, &s.omega_c.values(), s.t_max, s.samples, true)
        }
        Scenario::Figure2a => figure2a(cfg),
        Scenario::Figure2b => figure2b(cfg),
        Scenario::Custom => series_set(cfg, &[cfg.params.omega_c], cfg.time.t_max, cfg.time.samples, false),
        Scenario::EvolveU => evolve_u(cfg),
        Scenario::Sweep => sweep(cfg),
    }
}

fn params(cfg: &Config, omega_c: f64) -> SpectralParams {
    cfg.spectral(omega_c).expect("config was validated")
}

fn squeezing(cfg: &Config) -> SqueezingParam {
    cfg.squeezing().expect("config was validated")
}

/// Maps `f` over `items` on a pool of `jobs` workers, keeping input order.
pub fn par_map<T, R, F>(jobs: usize, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("thread pool");
    pool.install(|| items.into_par_iter().map(f).collect())
}

/// Solver options whose grid lands exactly on `samples` output intervals.
/// Returns the options and the output stride.
pub fn grid_options(
    cfg: &Config,
    p: &SpectralParams,
    t_max: f64,
    samples: usize,
    sensitivity: bool,
) -> (SolverOptions, usize) {
    let h_req = cfg.time.h.unwrap_or_else(|| default_step(p));
    let out_step = t_max / samples as f64;
    let stride = (out_step / h_req - 1e-9).ceil().max(1.0) as usize;
    let opts = SolverOptions {
        h: t_max / (samples * stride) as f64,
        tol: cfg.time.tol,
        sensitivity,
        max_refinements: cfg.time.max_refinements,
        ..SolverOptions::new(p)
    };
    (opts, stride)
}

fn output_times(t_max: f64, samples: usize) -> Vec<f64> {
    (0..=samples).map(|i| t_max * i as f64 / samples as f64).collect()
}

fn record(label: String, omega_c: f64, res: &Result<DecoherenceTrajectory>) -> PointRecord {
    match res {
        Ok(tr) => PointRecord {
            solver: Some(SolverRecord::from(&tr.meta)),
            ..PointRecord::ok(label, omega_c)
        },
        Err(e) => PointRecord::failed(label, omega_c, e),
    }
}

fn bound_json(bs: &Option<nmqfi_core::spectral::BoundState>) -> Value {
    match bs {
        Some(b) => json!({ "exists": true, "energy": b.energy, "residue": b.residue }),
        None => json!({ "exists": false }),
    }
}

fn figure1a(cfg: &Config) -> ScenarioOutput {
    let f = &cfg.figure1a;
    let wcs = f.omega_c.values();
    let results = par_map(cfg.run.jobs, wcs.clone(), |wc| {
        let p = params(cfg, wc);
        let ev = discretized_spectrum(&p, f.n_modes, f.omega_max_factor * wc)?;
        Ok::<_, Error>((ev, find_bound_state(&p)?))
    });
    let mut spectrum = Table::new("spectrum", &["omega_c", "index", "energy"]);
    let mut bound = Table::new(
        "bound_state",
        &["omega_c", "exists", "e_b", "residue", "lowest_eigenvalue"],
    );
    let mut points = Vec::new();
    let n_ev = f.n_modes + 2;
    for (&wc, res) in wcs.iter().zip(results) {
        let label = curve_name(wc);
        match res {
            Ok((ev, bs)) => {
                for k in 0..n_ev {
                    spectrum.push(vec![wc.into(), k.into(), ev.get(k).copied().unwrap_or(f64::NAN).into()]);
                }
                let lowest = ev.iter().copied().fold(f64::INFINITY, f64::min);
                bound.push(vec![
                    wc.into(),
                    bs.is_some().into(),
                    bs.map_or(f64::NAN, |b| b.energy).into(),
                    bs.map_or(0.0, |b| b.residue).into(),
                    lowest.into(),
                ]);
                points.push(PointRecord::ok(label, wc));
            }
            Err(e) => {
                for k in 0..n_ev {
                    spectrum.push_nan(&[wc.into(), k.into()]);
                }
                bound.push_nan(&[wc.into()]);
                points.push(PointRecord::failed(label, wc, &e));
            }
        }
    }
    let threshold = bound_state_threshold(&params(cfg, cfg.params.omega_c));
    ScenarioOutput {
        tables: vec![spectrum, bound],
        points,
        summary: json!({ "threshold_omega_c": threshold }),
    }
}

fn figure1b(cfg: &Config) -> ScenarioOutput {
    let f = &cfg.figure1b;
    let wcs = f.omega_c.values();
    let results = par_map(cfg.run.jobs, wcs.clone(), |wc| {
        let p = params(cfg, wc);
        let bs = find_bound_state(&p);
        let solver = (f.method != Method::Asymptotic).then(|| {
            let opts = SolverOptions {
                h: cfg.time.h.unwrap_or_else(|| default_step(&p)).min(f.t_final),
                tol: cfg.time.tol,
                sensitivity: false,
                max_refinements: cfg.time.max_refinements,
                ..SolverOptions::new(&p)
            };
            solve_u_with(&p, f.t_final, &opts)
        });
        let asym = (f.method != Method::Solver).then(|| BranchCut::new(&p).and_then(|c| c.evaluate(f.t_final)));
        (bs, solver, asym)
    });
    let mut table = Table::new("u_final", &["omega_c", "abs_u_final", "abs_u_asym", "Z"]);
    let mut points = Vec::new();
    for (&wc, (bs, solver, asym)) in wcs.iter().zip(results) {
        let mut rec = PointRecord::ok(curve_name(wc), wc);
        let mut errors = Vec::new();
        let z = match &bs {
            Ok(b) => b.map_or(0.0, |b| b.residue),
            Err(e) => {
                errors.push(format!("bound state: {e}"));
                f64::NAN
            }
        };
        let u_solver = match &solver {
            None => f64::NAN,
            Some(Ok(tr)) => {
                rec.solver = Some(SolverRecord::from(&tr.meta));
                tr.u.last().map_or(f64::NAN, |u| u.norm())
            }
            Some(Err(e)) => {
                errors.push(format!("solver: {e}"));
                f64::NAN
            }
        };
        let u_asym = match &asym {
            None => f64::NAN,
            Some(Ok((u, _))) => u.norm(),
            Some(Err(e)) => {
                errors.push(format!("asymptotic: {e}"));
                f64::NAN
            }
        };
        if !errors.is_empty() {
            rec.converged = false;
            rec.error = Some(errors.join("; "));
        }
        table.push(vec![wc.into(), u_solver.into(), u_asym.into(), z.into()]);
        points.push(rec);
    }
    let threshold = bound_state_threshold(&params(cfg, cfg.params.omega_c));
    ScenarioOutput {
        tables: vec![table],
        points,
        summary: json!({ "threshold_omega_c": threshold, "t_final": f.t_final }),
    }
}

const SERIES_HEADER: [&str; 7] = [
    "t",
    "f_plus",
    "f_minus",
    "f_total",
    "f_plus_bma",
    "f_plus_asym",
    "abs_u",
];

fn series_table(name: String, s: &QfiSeries) -> Table {
    let mut t = Table::new(name, &SERIES_HEADER);
    for k in 0..s.t.len() {
        t.push(vec![
            s.t[k].into(),
            s.f_plus[k].into(),
            s.f_minus[k].into(),
            s.f_total[k].into(),
            s.f_plus_bma[k].into(),
            s.f_plus_asym[k].into(),
            s.u[k].norm().into(),
        ]);
    }
    t
}

/// Final-decade t² fit against the bound-state asymptote.
fn fit_summary(s: &QfiSeries) -> Value {
    let Some(bs) = s.bound_state else {
        let peak = s.f_plus.iter().copied().fold(0.0, f64::max);
        let last = s.f_plus.last().copied().unwrap_or(f64::NAN);
        return json!({ "bound_state": bound_json(&None), "max_f_plus": peak, "final_f_plus": last });
    };
    let n_bar = s.squeezing.mean_photons();
    let predicted = qfi_boundstate_largen(n_bar, Some(&bs), 1.0, None).unwrap_or(f64::NAN);
    match fit_final_decade(&s.t, &s.f_plus) {
        Ok(fit) => json!({
            "bound_state": bound_json(&Some(bs)),
            "fit_exponent": fit.exponent,
            "fit_t2_coefficient": fit.t2_coefficient,
            "asymptotic_t2_coefficient": predicted,
            "ratio": fit.t2_coefficient / predicted,
        }),
        Err(e) => json!({ "bound_state": bound_json(&Some(bs)), "fit_error": e.to_string() }),
    }
}

fn series_set(cfg: &Config, wcs: &[f64], t_max: f64, samples: usize, per_curve: bool) -> ScenarioOutput {
    let r = squeezing(cfg);
    let results = par_map(cfg.run.jobs, wcs.to_vec(), |wc| {
        let p = params(cfg, wc);
        let (opts, stride) = grid_options(cfg, &p, t_max, samples, true);
        let traj = solve_u_with(&p, t_max, &opts);
        let series = traj
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|tr| series_from_trajectory(&p, r, tr, stride));
        (record(curve_name(wc), wc, &traj), series)
    });
    let mut tables = Vec::new();
    let mut points = Vec::new();
    let mut summary = serde_json::Map::new();
    for (&wc, (mut rec, series)) in wcs.iter().zip(results) {
        let name = if per_curve {
            curve_name(wc)
        } else {
            "series".to_string()
        };
        match series {
            Ok(s) => {
                summary.insert(curve_name(wc), fit_summary(&s));
                tables.push(series_table(name, &s));
            }
            Err(e) => {
                if rec.converged {
                    rec = PointRecord {
                        solver: rec.solver,
                        ..PointRecord::failed(rec.label, wc, &e)
                    };
                }
                let mut t = Table::new(name, &SERIES_HEADER);
                for ti in output_times(t_max, samples) {
                    t.push_nan(&[ti.into()]);
                }
                tables.push(t);
            }
        }
        points.push(rec);
    }
    ScenarioOutput {
        tables,
        points,
        summary: Value::Object(summary),
    }
}

/// `F⁺` along a trajectory at the stride points.
fn f_plus_along(r: SqueezingParam, tr: &DecoherenceTrajectory, stride: usize) -> Result<Vec<(f64, f64)>> {
    let v = tr.v.as_ref().expect("sensitivity requested");
    (0..tr.len())
        .step_by(stride)
        .map(|k| Ok((tr.t[k], qfi_plus(r, tr.u[k], v[k])?)))
        .collect()
}

fn nbar_sweep_tables(
    cfg: &Config,
    sweep: &crate::config::NBarSweep,
    header: &[&'static str],
    row: impl Fn(&SpectralParams, f64, &[(f64, f64)], &mut PointRecord) -> Result<Vec<Cell>> + Sync + Send,
) -> ScenarioOutput {
    let wcs = sweep.omega_c.values();
    let n_bars = sweep.n_bar.values();
    let results = par_map(cfg.run.jobs, wcs.clone(), |wc| {
        let p = params(cfg, wc);
        let (opts, stride) = grid_options(cfg, &p, sweep.t_max, sweep.samples, true);
        let traj = solve_u_with(&p, sweep.t_max, &opts);
        let mut rec = record(curve_name(wc), wc, &traj);
        let mut rows = Vec::with_capacity(n_bars.len());
        for &n in &n_bars {
            let res = traj.as_ref().map_err(Clone::clone).and_then(|tr| {
                let r = SqueezingParam::from_mean_photons(n)?;
                row(&p, n, &f_plus_along(r, tr, stride)?, &mut rec)
            });
            rows.push(res.map_err(|e| (n, e)));
        }
        (rec, rows)
    });
    let mut tables = Vec::new();
    let mut points = Vec::new();
    for (&wc, (mut rec, rows)) in wcs.iter().zip(results) {
        let mut t = Table::new(curve_name(wc), header);
        for res in rows {
            match res {
                Ok(cells) => t.push(cells),
                Err((n, e)) => {
                    if rec.converged {
                        rec = PointRecord {
                            solver: rec.solver,
                            ..PointRecord::failed(rec.label, wc, &e)
                        };
                    }
                    t.push_nan(&[n.into()]);
                }
            }
        }
        tables.push(t);
        points.push(rec);
    }
    ScenarioOutput {
        tables,
        points,
        summary: json!({ "t_max": sweep.t_max }),
    }
}

fn figure2a(cfg: &Config) -> ScenarioOutput {
    let header = ["n_bar", "max_f_plus", "t_at_max", "max_f_plus_bma", "max_delta_f_plus"];
    nbar_sweep_tables(cfg, &cfg.figure2a, &header, |p, n, f, rec| {
        let (i_max, &(t_at, f_max)) = f
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("non-empty series");
        if i_max + 1 == f.len() {
            rec.notes
                .push(format!("n_bar {n}: maximum sits at the horizon; increase t_max"));
        }
        let bma = bma_optimum(n, markov_rate(p))?.f_max;
        Ok(vec![
            n.into(),
            f_max.into(),
            t_at.into(),
            bma.into(),
            (f_max - bma).into(),
        ])
    })
}

fn figure2b(cfg: &Config) -> ScenarioOutput {
    let header = [
        "n_bar",
        "f_plus_t",
        "max_f_plus_bma",
        "delta_f_plus",
        "delta_f_plus_asym",
    ];
    let t_eval = cfg.figure2b.t_max;
    nbar_sweep_tables(cfg, &cfg.figure2b, &header, |p, n, f, _| {
        let f_t = f.last().expect("non-empty series").1;
        let bma = bma_optimum(n, markov_rate(p))?.f_max;
        let bs = find_bound_state(p)?;
        let asym = match bs {
            Some(b) => qfi_boundstate_largen(n, Some(&b), t_eval, None)? - bma,
            None => f64::NAN,
        };
        Ok(vec![n.into(), f_t.into(), bma.into(), (f_t - bma).into(), asym.into()])
    })
}

fn evolve_u(cfg: &Config) -> ScenarioOutput {
    let wc = cfg.params.omega_c;
    let p = params(cfg, wc);
    let (t_max, samples) = (cfg.time.t_max, cfg.time.samples);
    let (opts, stride) = grid_options(cfg, &p, t_max, samples, true);
    let traj = solve_u_with(&p, t_max, &opts);
    let header = ["t", "re_u", "im_u", "abs_u", "re_v", "im_v", "omega_t", "gamma_t"];
    let mut table = Table::new("u", &header);
    let mut rec = record(curve_name(wc), wc, &traj);
    match traj
        .as_ref()
        .map_err(Clone::clone)
        .and_then(|tr| Ok((tr, rates_from_u(tr)?)))
    {
        Ok((tr, rates)) => {
            let v = tr.v.as_ref().expect("sensitivity requested");
            for k in (0..tr.len()).step_by(stride) {
                table.push(vec![
                    tr.t[k].into(),
                    tr.u[k].re.into(),
                    tr.u[k].im.into(),
                    tr.u[k].norm().into(),
                    v[k].re.into(),
                    v[k].im.into(),
                    rates.omega[k].into(),
                    rates.gamma[k].into(),
                ]);
            }
        }
        Err(e) => {
            if rec.converged {
                rec = PointRecord::failed(rec.label, wc, &e);
            }
            for ti in output_times(t_max, samples) {
                table.push_nan(&[ti.into()]);
            }
        }
    }
    let bs = find_bound_state(&p).ok().flatten();
    ScenarioOutput {
        tables: vec![table],
        points: vec![rec],
        summary: json!({ "bound_state": bound_json(&bs), "markov_rate": markov_rate(&p) }),
    }
}

fn sweep(cfg: &Config) -> ScenarioOutput {
    let s = &cfg.sweep;
    let r = squeezing(cfg);
    let n_bar = r.mean_photons();
    let wcs = s.omega_c.values();
    let results = par_map(cfg.run.jobs, wcs.clone(), |wc| {
        let p = params(cfg, wc);
        let (opts, stride) = grid_options(cfg, &p, s.t_max, s.samples, true);
        let traj = solve_u_with(&p, s.t_max, &opts);
        let rec = record(curve_name(wc), wc, &traj);
        let row = traj.as_ref().map_err(Clone::clone).and_then(|tr| {
            let bs = find_bound_state(&p)?;
            let f = f_plus_along(r, tr, stride)?;
            let &(t_at, f_max) = f.iter().max_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
            let zeta = markov_rate(&p);
            let bma = if zeta > 0.0 {
                bma_optimum(n_bar, zeta)?.f_max
            } else {
                f64::NAN
            };
            Ok(vec![
                wc.into(),
                bs.is_some().into(),
                bs.map_or(f64::NAN, |b| b.energy).into(),
                bs.map_or(0.0, |b| b.residue).into(),
                tr.u.last().map_or(f64::NAN, |u| u.norm()).into(),
                f_max.into(),
                t_at.into(),
                f.last().map_or(f64::NAN, |x| x.1).into(),
                bma.into(),
            ])
        });
        (rec, row)
    });
    let header = [
        "omega_c",
        "bound",
        "e_b",
        "residue",
        "abs_u_final",
        "max_f_plus",
        "t_at_max",
        "f_plus_final",
        "max_f_plus_bma",
    ];
    let mut table = Table::new("summary", &header);
    let mut points = Vec::new();
    for (&wc, (mut rec, row)) in wcs.iter().zip(results) {
        match row {
            Ok(cells) => table.push(cells),
            Err(e) => {
                if rec.converged {
                    rec = PointRecord {
                        solver: rec.solver,
                        ..PointRecord::failed(rec.label, wc, &e)
                    };
                }
                table.push_nan(&[wc.into()]);
            }
        }
        points.push(rec);
    }
    ScenarioOutput {
        tables: vec![table],
        points,
        summary: json!({ "t_max": s.t_max, "n_bar": n_bar }),
    }
}
