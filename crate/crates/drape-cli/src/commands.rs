use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use drape::constructions::{
    self, default_block, predicted_excess, realize, BoundValue, ConstructionPlan, Variant,
};
use drape::energy::{bulk_energy, curvature_diagnostic, fvk_energy, resolution_warning, EnergyBreakdown};
use drape::grid::Grid;
use drape::minimize::{minimize, MinimizeOptions, TopBoundary};
use drape::params::{canonicalize, CanonicalParams, PhysicalParams};
use drape::scaling::{classify, epsilon, fit_slope, sweep, SweepSpec};

use crate::config::{PlanSpec, RunConfig};

/// Process error with its exit code: 1 domain violation, 2 I/O or parse
/// error, 3 numerical failure.
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    fn domain(msg: impl Into<String>) -> Self {
        CliError { code: 1, msg: msg.into() }
    }
}

impl From<drape::Error> for CliError {
    fn from(e: drape::Error) -> Self {
        let code = match &e {
            drape::Error::Io(_) | drape::Error::Json(_) => 2,
            drape::Error::NonFiniteField(_) | drape::Error::NonFiniteEnergy => 3,
            _ => 1,
        };
        CliError { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: 2, msg: e.to_string() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError { code: 2, msg: e.to_string() }
    }
}

pub type CmdResult = Result<(), CliError>;

pub fn read_params(path: &Path) -> Result<PhysicalParams, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn parse_grid(spec: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| CliError { code: 2, msg: format!("bad grid spec {spec:?}, want NXxNY") })?;
    let nx = a.parse().map_err(|_| CliError { code: 2, msg: format!("bad nx in {spec:?}") })?;
    let ny = b.parse().map_err(|_| CliError { code: 2, msg: format!("bad ny in {spec:?}") })?;
    Ok((nx, ny))
}

pub fn configure_jobs(jobs: usize) {
    if jobs > 0 {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

fn write_run_config(out: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(out)?;
    write_json(&out.join("run_config.json"), cfg)
}

// ---- validate ---------------------------------------------------------------

pub fn cmd_validate(params_path: &Path) -> CmdResult {
    let p = read_params(params_path)?;
    let violations = p.validate();
    if violations.is_empty() {
        println!("ok");
        Ok(())
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        Err(CliError::domain(format!("{} hypothesis violation(s)", violations.len())))
    }
}

// ---- epsilon ----------------------------------------------------------------

pub fn cmd_epsilon(params_path: &Path, out: &Path) -> CmdResult {
    let p = read_params(params_path)?;
    let mut cfg = RunConfig::new("epsilon");
    cfg.params = Some(p);
    cfg.out = out.display().to_string();
    write_run_config(out, &cfg)?;

    let pt = epsilon(&p)?;
    write_json(&out.join("epsilon.json"), &pt)?;
    println!(
        "alpha={:.6} beta={:.6} eps={:.6e} phase={:?} l*={:.4}",
        pt.alpha, pt.beta, pt.eps, pt.phase, pt.branches.l_star
    );
    Ok(())
}

// ---- phase ------------------------------------------------------------------

pub fn cmd_phase(
    params_path: &Path,
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
    out: &Path,
    emit_plot_data: bool,
) -> CmdResult {
    if !(alpha_min > 0.0 && alpha_max > alpha_min && points >= 2) {
        return Err(CliError::domain("need 0 < alpha-min < alpha-max and points >= 2"));
    }
    let base = read_params(params_path)?;
    let mut cfg = RunConfig::new("phase");
    cfg.params = Some(base);
    cfg.out = out.display().to_string();
    cfg.emit_plot_data = emit_plot_data;
    write_run_config(out, &cfg)?;

    let st = (base.tau * base.l).sqrt();
    let mut csv = String::from(
        "alpha_target,h,alpha,beta,eps,confined,released,l_star,phase,classifier,status,reason\n",
    );
    let mut plot = Vec::new();
    for i in 0..points {
        let t = i as f64 / (points - 1) as f64;
        let alpha = alpha_min * (alpha_max / alpha_min).powf(t);
        // alpha = h L / (w0^2 sqrt(tau L)) is Delta-invariant in these variables
        let h = alpha * base.w0 * base.w0 * st / base.l;
        let p = PhysicalParams { h, ..base };
        let violations = p.validate();
        if violations.is_empty() {
            let pt = epsilon(&p)?;
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:?},{:?},ok,\n",
                alpha,
                h,
                pt.alpha,
                pt.beta,
                pt.eps,
                pt.branches.confined,
                pt.branches.released,
                pt.branches.l_star,
                pt.phase,
                classify(pt.alpha)
            ));
            plot.push((pt.alpha, pt.eps));
        } else {
            let reason =
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            csv.push_str(&format!("{alpha},{h},,,,,,,,,skipped,\"{reason}\"\n"));
        }
    }
    fs::write(out.join("phase.csv"), csv)?;
    if emit_plot_data {
        drape::io::write_xy(&out.join("alpha_vs_eps.dat"), &plot, "alpha eps")?;
    }
    println!("phase scan: {} rows -> {}", points, out.join("phase.csv").display());
    Ok(())
}

// ---- sweep ------------------------------------------------------------------

pub fn cmd_sweep(config_path: &Path, out: &Path, jobs: usize, emit_plot_data: bool) -> CmdResult {
    let text = fs::read_to_string(config_path)?;
    let spec: SweepSpec = serde_json::from_str(&text)?;
    configure_jobs(jobs);
    let mut cfg = RunConfig::new("sweep");
    cfg.sweep = Some(spec.clone());
    cfg.jobs = jobs;
    cfg.out = out.display().to_string();
    cfg.emit_plot_data = emit_plot_data;
    write_run_config(out, &cfg)?;

    let result = sweep(&spec)?;
    let mut csv =
        String::from("h,W,L,tau,w0,Delta,alpha,beta,eps,confined,released,l_star,phase\n");
    for pt in &result.points {
        let p = pt.params;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{:?}\n",
            p.h,
            p.w,
            p.l,
            p.tau,
            p.w0,
            p.delta,
            pt.alpha,
            pt.beta,
            pt.eps,
            pt.branches.confined,
            pt.branches.released,
            pt.branches.l_star,
            pt.phase
        ));
    }
    fs::write(out.join("sweep.csv"), csv)?;

    let mut skipped = String::from("h,W,L,tau,w0,Delta,reasons\n");
    for s in &result.skipped {
        let p = s.params;
        let reasons = s.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        skipped.push_str(&format!(
            "{},{},{},{},{},{},\"{}\"\n",
            p.h, p.w, p.l, p.tau, p.w0, p.delta, reasons
        ));
    }
    fs::write(out.join("skipped.csv"), skipped)?;

    if emit_plot_data {
        for (field, _) in &spec.axes {
            let rows: Vec<(f64, f64)> = result
                .points
                .iter()
                .map(|pt| {
                    let p = pt.params;
                    let x = match field {
                        drape::scaling::SweepField::H => p.h,
                        drape::scaling::SweepField::W => p.w,
                        drape::scaling::SweepField::L => p.l,
                        drape::scaling::SweepField::Tau => p.tau,
                        drape::scaling::SweepField::W0 => p.w0,
                        drape::scaling::SweepField::Delta => p.delta,
                    };
                    (x, pt.eps)
                })
                .collect();
            let name = format!("{:?}_vs_eps.dat", field).to_lowercase();
            drape::io::write_xy(&out.join(name), &rows, "axis eps")?;
        }
    }
    println!(
        "sweep: {} points, {} skipped -> {}",
        result.points.len(),
        result.skipped.len(),
        out.join("sweep.csv").display()
    );
    Ok(())
}

// ---- construct --------------------------------------------------------------

pub fn build_plan(c: &CanonicalParams, spec: &PlanSpec) -> Result<ConstructionPlan, CliError> {
    let variant = |v: &Option<Variant>| v.ok_or_else(|| CliError::domain("plan needs --variant A|B"));
    match spec.kind.as_str() {
        "type1" => Ok(constructions::plan_type1(c)?),
        "type2" => {
            let n = spec.n.ok_or_else(|| CliError::domain("type2 needs --n"))?;
            Ok(constructions::plan_type2(c, n, variant(&spec.variant)?)?)
        }
        "type3" => {
            let l = spec.l.ok_or_else(|| CliError::domain("type3 needs --l"))?;
            Ok(constructions::plan_type3(c, l, variant(&spec.variant)?)?)
        }
        "propagate" => Ok(constructions::plan_propagate(c)?),
        other => Err(CliError::domain(format!(
            "unknown plan kind {other:?}; expected type1, type2, type3 or propagate"
        ))),
    }
}

#[derive(Serialize)]
struct ConstructOutput<'a> {
    params: &'a PhysicalParams,
    canonical: CanonicalParams,
    grid: [usize; 2],
    plan: &'a ConstructionPlan,
    measured: EnergyBreakdown,
    predicted: &'a BoundValue,
    measured_over_predicted: f64,
    curvature_diagnostic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolution_warning: Option<String>,
}

pub fn cmd_construct(
    params_path: &Path,
    plan_spec: &PlanSpec,
    grid_spec: Option<&str>,
    out: &Path,
) -> CmdResult {
    let p = read_params(params_path)?;
    let (c, _) = canonicalize(&p)?;
    let (nx, ny) = match grid_spec {
        Some(s) => parse_grid(s)?,
        None => {
            let g = Grid::default_for(c.w0, c.l, 257)?;
            (g.nx, g.ny)
        }
    };
    let grid = Grid::new(nx, ny, c.l)?;

    let mut cfg = RunConfig::new("construct");
    cfg.params = Some(p);
    cfg.grid = Some([nx, ny]);
    cfg.plan = Some(plan_spec.clone());
    cfg.out = out.display().to_string();
    write_run_config(out, &cfg)?;

    let plan = build_plan(&c, plan_spec)?;
    let field = realize(&plan, default_block(), &grid)?;
    let measured = fvk_energy(&field, &c)?;
    let predicted = predicted_excess(&plan);
    if let Some(note) = &predicted.note {
        eprintln!("note: {note}");
    }
    let warning = resolution_warning(&grid, c.w0);
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }

    let field_path = out.join("field.bin");
    drape::io::save_field(&field_path, &field)?;
    drape::io::save_sidecar(&field_path, &serde_json::json!({ "params": p, "canonical": c, "plan": plan }))?;

    let output = ConstructOutput {
        params: &p,
        canonical: c,
        grid: [nx, ny],
        plan: &plan,
        measured,
        predicted: &predicted,
        measured_over_predicted: measured.excess / predicted.value,
        curvature_diagnostic: curvature_diagnostic(&field, c.h),
        resolution_warning: warning,
    };
    write_json(&out.join("construct.json"), &output)?;
    println!(
        "{:?}: measured excess {:.6e}, predicted ({:?}) {:.6e}, ratio {:.3}",
        plan.kind, measured.excess, predicted.branch, predicted.value, output.measured_over_predicted
    );
    Ok(())
}

// ---- minimize ---------------------------------------------------------------

#[derive(Serialize)]
struct Sandwich {
    bulk: f64,
    minimizer_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    construction_total: Option<f64>,
    holds: bool,
}

#[derive(Serialize)]
struct MinimizeOutput<'a> {
    params: &'a PhysicalParams,
    canonical: CanonicalParams,
    grid: [usize; 2],
    seed: u64,
    flat_top: bool,
    breakdown: EnergyBreakdown,
    sandwich: Sandwich,
    best_start: usize,
    starts: &'a [drape::minimize::StartTrace],
    curvature_diagnostic: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    resolution_warning: Option<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_minimize(
    params_path: &Path,
    grid_spec: Option<&str>,
    seed: u64,
    out: &Path,
    flat_top: bool,
    max_iters: Option<usize>,
    trace: bool,
    jobs: usize,
) -> CmdResult {
    let p = read_params(params_path)?;
    let (c, _) = canonicalize(&p)?;
    configure_jobs(jobs);
    let (nx, ny) = match grid_spec {
        Some(s) => parse_grid(s)?,
        None => {
            let g = Grid::default_for(c.w0, c.l, 257)?;
            (g.nx, g.ny)
        }
    };
    let grid = Grid::new(nx, ny, c.l)?;

    let mut cfg = RunConfig::new("minimize");
    cfg.params = Some(p);
    cfg.grid = Some([nx, ny]);
    cfg.seed = seed;
    cfg.jobs = jobs;
    cfg.out = out.display().to_string();
    cfg.max_iters = max_iters;
    cfg.flat_top = flat_top;
    write_run_config(out, &cfg)?;

    let mut opts = MinimizeOptions::default_for(&c);
    opts.rng_seed = seed;
    opts.record_trace = trace;
    if flat_top {
        opts.top_boundary = TopBoundary::Flat;
    }
    if let Some(mi) = max_iters {
        opts.max_iters = mi;
    }
    // re-derive the perturbed seeds from the requested base seed
    for s in opts.multistart.iter_mut() {
        if let drape::minimize::InitStrategy::Perturbed { seed: ps, .. } = s {
            *ps += seed;
        }
    }

    let warning = resolution_warning(&grid, c.w0);
    if let Some(w) = &warning {
        eprintln!("warning: {w}");
    }

    let report = minimize(&c, &grid, &opts)?;

    // sandwich: bulk <= minimizer <= best realizable construction
    let bulk = bulk_energy(c.tau, c.l, 1.0);
    let construction_total = if !flat_top {
        constructions::plan_type1(&c)
            .ok()
            .and_then(|plan| realize(&plan, default_block(), &grid).ok())
            .and_then(|f| fvk_energy(&f, &c).ok())
            .map(|e| e.total)
    } else {
        None
    };
    let holds = report.breakdown.total >= bulk - 1e-9 * bulk.abs()
        && construction_total
            .map_or(true, |ct| report.breakdown.total <= ct + 1e-6 * ct.abs());
    let sandwich =
        Sandwich { bulk, minimizer_total: report.breakdown.total, construction_total, holds };
    match construction_total {
        Some(ct) => println!(
            "sandwich: bulk {:.6} <= minimizer {:.6} <= construction {:.6} ({})",
            bulk,
            report.breakdown.total,
            ct,
            if holds { "ok" } else { "VIOLATED" }
        ),
        None => println!(
            "sandwich: bulk {:.6} <= minimizer {:.6} ({})",
            bulk,
            report.breakdown.total,
            if holds { "ok" } else { "VIOLATED" }
        ),
    }

    let field_path = out.join("best_field.bin");
    drape::io::save_field(&field_path, &report.best_field)?;
    drape::io::save_sidecar(
        &field_path,
        &serde_json::json!({ "params": p, "canonical": c, "seed": seed, "flat_top": flat_top }),
    )?;

    if trace {
        let mut csv = String::from("start,iter,energy,grad_sup\n");
        for (si, s) in report.starts.iter().enumerate() {
            if let Some(t) = &s.trace {
                for pt in t {
                    csv.push_str(&format!("{},{},{},{}\n", si, pt.iter, pt.energy, pt.grad_sup));
                }
            }
        }
        fs::write(out.join("trace.csv"), csv)?;
    }

    let output = MinimizeOutput {
        params: &p,
        canonical: c,
        grid: [nx, ny],
        seed,
        flat_top,
        breakdown: report.breakdown,
        sandwich,
        best_start: report.best_start,
        starts: &report.starts,
        curvature_diagnostic: curvature_diagnostic(&report.best_field, c.h),
        resolution_warning: warning,
    };
    write_json(&out.join("report.json"), &output)?;
    Ok(())
}

// ---- fit --------------------------------------------------------------------

pub fn cmd_fit(input: &Path, out: &Path) -> CmdResult {
    let rows = drape::io::read_xy(input)?;
    let fit = fit_slope(&rows)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("fit.json"), &fit)?;
    println!("exponent={:.6} r2={:.6} n={}", fit.exponent, fit.r2, fit.n_points);
    Ok(())
}
