//! Direct minimization of the discrete energy with the top row pinned and
//! every other boundary free.
//!
//! Limited-memory BFGS with a strong-Wolfe line search. The bending term
//! makes the Hessian spectrum span many orders of magnitude, so the initial
//! inverse-Hessian approximation is a fixed diagonal (a Jacobi estimate of
//! the Gauss–Newton diagonal at a wrinkled background state); without it the
//! fine-scale modes stall the search. The energy is nonconvex — wrinkle
//! counts are discrete local minima — so several starts are run and the best
//! is reported.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::constructions::{self, ConstructionPlan};
use crate::energy::{
    boundary_profile, bulk_minimizer, bulk_minimizer_slope, EnergyBreakdown, Evaluator,
    FieldGradient,
};
use crate::error::{Error, Result};
use crate::grid::{DeformationField, Grid, Mask};
use crate::params::CanonicalParams;

/// Values pinned on the clamped top row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TopBoundary {
    /// The wrinkled profile of the problem.
    Profile,
    /// All three components zero (bulk-energy recovery runs).
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum InitStrategy {
    /// Zeros below the pinned row.
    Flat,
    /// `u_y = f`, the relaxed vertical profile.
    BulkOnly,
    /// A realized construction.
    Construction(ConstructionPlan),
    /// `BulkOnly` plus smooth noise of amplitude `sigma` on `xi` only.
    Perturbed { sigma: f64, seed: u64 },
}

impl InitStrategy {
    fn label(&self) -> String {
        match self {
            InitStrategy::Flat => "flat".into(),
            InitStrategy::BulkOnly => "bulk_only".into(),
            InitStrategy::Construction(plan) => format!("construction({:?})", plan.kind),
            InitStrategy::Perturbed { sigma, seed } => format!("perturbed({sigma}, {seed})"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeOptions {
    pub max_iters: usize,
    /// Convergence threshold on the free-node gradient sup-norm, scaled at
    /// runtime by `1 + |total|`.
    pub grad_tol: f64,
    /// Quasi-Newton history length.
    pub memory: usize,
    pub max_line_search_steps: usize,
    pub multistart: Vec<InitStrategy>,
    pub rng_seed: u64,
    pub top_boundary: TopBoundary,
    /// Keep per-iteration (energy, gradient norm) pairs in the trace.
    pub record_trace: bool,
}

impl MinimizeOptions {
    /// Defaults with the standard start set: the relaxed state, the best
    /// cascade construction (when one exists at these parameters), and two
    /// noise-perturbed relaxed states.
    pub fn default_for(p: &CanonicalParams) -> Self {
        let seed = 0;
        let mut multistart = vec![InitStrategy::BulkOnly];
        if constructions::period_triplings(p.w0).is_some() {
            if let Ok(plan) = constructions::plan_type1(p) {
                multistart.push(InitStrategy::Construction(plan));
            }
        }
        multistart.push(InitStrategy::Perturbed { sigma: p.w0, seed: seed + 1 });
        multistart.push(InitStrategy::Perturbed { sigma: p.w0 / 4.0, seed: seed + 2 });
        MinimizeOptions {
            max_iters: 5000,
            grad_tol: 1e-8,
            memory: 10,
            max_line_search_steps: 40,
            multistart,
            rng_seed: seed,
            top_boundary: TopBoundary::Profile,
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TracePoint {
    pub iter: usize,
    pub energy: f64,
    pub grad_sup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartTrace {
    pub strategy: String,
    pub iterations: usize,
    pub final_energy: f64,
    pub grad_sup: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TracePoint>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimizeReport {
    #[serde(skip)]
    pub best_field: DeformationField,
    pub breakdown: EnergyBreakdown,
    pub best_start: usize,
    pub starts: Vec<StartTrace>,
}

/// Builds the starting field for a strategy. The top row is then pinned by
/// the minimizer and never moves.
pub fn init_field(
    strategy: &InitStrategy,
    p: &CanonicalParams,
    grid: &Grid,
) -> Result<DeformationField> {
    let mut field = match strategy {
        InitStrategy::Flat => DeformationField::zeros(*grid),
        InitStrategy::BulkOnly => bulk_state(p, grid),
        InitStrategy::Construction(plan) => {
            constructions::realize(plan, constructions::default_block(), grid)?
        }
        InitStrategy::Perturbed { sigma, seed } => {
            let mut f = bulk_state(p, grid);
            add_smooth_noise(&mut f, *sigma, *seed);
            f
        }
    };
    let b = boundary_profile(p, grid.nx);
    field.set_top_row(&b.u_x, &b.u_y, &b.xi);
    Ok(field)
}

fn bulk_state(p: &CanonicalParams, grid: &Grid) -> DeformationField {
    let mut f = DeformationField::zeros(*grid);
    for j in 0..grid.ny {
        let v = bulk_minimizer(p.tau, p.l, grid.y(j).clamp(-p.l, 0.0)).unwrap();
        for i in 0..grid.nx {
            f.u_y[grid.idx(i, j)] = v;
        }
    }
    f
}

/// Band-limited noise: a few random Fourier modes, vanishing on the top row.
fn add_smooth_noise(field: &mut DeformationField, sigma: f64, seed: u64) {
    if sigma == 0.0 {
        return;
    }
    let grid = field.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const PX: usize = 6;
    const QY: usize = 4;
    let mut coef = [[(0.0f64, 0.0f64); QY]; PX];
    for row in coef.iter_mut() {
        for c in row.iter_mut() {
            *c = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
    }
    let mut noise = vec![0.0f64; grid.n_nodes()];
    let mut sup = 0.0f64;
    for j in 0..grid.ny {
        let t = -grid.y(j) / grid.l; // 0 at the top row
        for i in 0..grid.nx {
            let x = grid.x(i) + 0.5;
            let mut v = 0.0;
            for (pi, row) in coef.iter().enumerate() {
                let ax = 2.0 * std::f64::consts::PI * (pi + 1) as f64 * x;
                for (qi, &(cs, sn)) in row.iter().enumerate() {
                    let ay = std::f64::consts::PI * (qi + 1) as f64 * t;
                    v += (cs * ax.cos() + sn * ax.sin()) * ay.sin();
                }
            }
            noise[grid.idx(i, j)] = v;
            sup = sup.max(v.abs());
        }
    }
    if sup > 0.0 {
        let scale = sigma / sup;
        for (xi, nv) in field.xi.iter_mut().zip(&noise) {
            *xi += scale * nv;
        }
    }
}

/// Minimizes the discrete energy over the free nodes, best of the configured
/// starts. Non-convergence is reported in the traces, not thrown.
pub fn minimize(p: &CanonicalParams, grid: &Grid, opts: &MinimizeOptions) -> Result<MinimizeReport> {
    if !(opts.grad_tol > 0.0) {
        return Err(Error::Precondition("grad_tol must be > 0".into()));
    }
    if opts.max_iters < 1 || opts.memory < 1 {
        return Err(Error::Precondition("max_iters and memory must be >= 1".into()));
    }
    if opts.multistart.is_empty() {
        return Err(Error::Precondition("multistart must name at least one strategy".into()));
    }

    let results: Vec<Result<(DeformationField, StartTrace)>> = opts
        .multistart
        .par_iter()
        .map(|strategy| run_start(strategy, p, grid, opts))
        .collect();

    let mut starts = Vec::with_capacity(results.len());
    let mut fields = Vec::with_capacity(results.len());
    for r in results {
        let (field, trace) = r?;
        fields.push(field);
        starts.push(trace);
    }

    let best_start = starts
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.final_energy.total_cmp(&b.final_energy))
        .map(|(i, _)| i)
        .unwrap();
    let best_field = fields.swap_remove(best_start);
    let breakdown = Evaluator::canonical(p, grid).energy(&best_field)?;
    Ok(MinimizeReport { best_field, breakdown, best_start, starts })
}

/// Jacobi estimate of the energy's curvature per node, used as the fixed
/// diagonal in the L-BFGS initial inverse Hessian. The `xi` entries carry the
/// `h²∇⁴` stencil weight plus vertical tension and a unit-slope membrane
/// term; `u` entries carry the membrane stencil weight.
fn preconditioner(p: &CanonicalParams, grid: &Grid) -> Vec<f64> {
    let n = grid.n_nodes();
    let (dx, dy) = (grid.dx(), grid.dy());
    let da = dx * dy;
    let h2 = p.h * p.h;
    let mut d = vec![0.0f64; 3 * n];
    let d_ux = 2.0 * da * (1.0 / (dx * dx) + 0.5 / (dy * dy));
    let d_uy = 2.0 * da * (0.5 / (dx * dx) + 1.0 / (dy * dy));
    let bend = h2 * (6.0 / (dx * dx * dx * dx) + 6.0 / (dy * dy * dy * dy)
        + 2.0 / (dx * dx * dy * dy));
    for j in 0..grid.ny {
        let tension = bulk_minimizer_slope(p.tau, p.l, grid.y(j)).max(0.0);
        let d_xi = 2.0 * da * (bend + tension / (dy * dy) + 2.0 / (dx * dx));
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            d[k] = d_ux;
            d[n + k] = d_uy;
            d[2 * n + k] = d_xi;
        }
    }
    d
}

struct Objective {
    ev: Evaluator,
    field: DeformationField,
    grad: FieldGradient,
    mask: Mask,
    n: usize,
}

impl Objective {
    fn eval(&mut self, x: &[f64], g: &mut [f64]) -> Result<f64> {
        let n = self.n;
        self.field.u_x.copy_from_slice(&x[..n]);
        self.field.u_y.copy_from_slice(&x[n..2 * n]);
        self.field.xi.copy_from_slice(&x[2 * n..]);
        let breakdown = self.ev.energy_and_gradient(&self.field, &mut self.grad)?;
        self.mask.zero_fixed(&mut self.grad.u_x);
        self.mask.zero_fixed(&mut self.grad.u_y);
        self.mask.zero_fixed(&mut self.grad.xi);
        g[..n].copy_from_slice(&self.grad.u_x);
        g[n..2 * n].copy_from_slice(&self.grad.u_y);
        g[2 * n..].copy_from_slice(&self.grad.xi);
        Ok(breakdown.total)
    }
}

fn run_start(
    strategy: &InitStrategy,
    p: &CanonicalParams,
    grid: &Grid,
    opts: &MinimizeOptions,
) -> Result<(DeformationField, StartTrace)> {
    let mut field = init_field(strategy, p, grid)?;
    if opts.top_boundary == TopBoundary::Flat {
        let nx = grid.nx;
        field.set_top_row(&vec![0.0; nx], &vec![0.0; nx], &vec![0.0; nx]);
    }

    let n = grid.n_nodes();
    let mut x = Vec::with_capacity(3 * n);
    x.extend_from_slice(&field.u_x);
    x.extend_from_slice(&field.u_y);
    x.extend_from_slice(&field.xi);

    let mut obj = Objective {
        ev: Evaluator::canonical(p, grid),
        field: field.clone(),
        grad: FieldGradient::zeros(n),
        mask: Mask::top_row(grid),
        n,
    };
    let precond = preconditioner(p, grid);

    let mut g = vec![0.0f64; 3 * n];
    let mut f = obj.eval(&x, &mut g)?;
    if !f.is_finite() {
        return Err(Error::NonFiniteEnergy);
    }

    let mem = opts.memory;
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho: Vec<f64> = Vec::new();
    let mut gamma = 1.0f64;

    let mut trace = opts.record_trace.then(Vec::new);
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_sup = sup_norm(&g);

    for iter in 0..opts.max_iters {
        iterations = iter;
        grad_sup = sup_norm(&g);
        if let Some(t) = trace.as_mut() {
            t.push(TracePoint { iter, energy: f, grad_sup });
        }
        if grad_sup <= opts.grad_tol * (1.0 + f.abs()) {
            converged = true;
            break;
        }

        let mut dir = two_loop(&g, &s_hist, &y_hist, &rho, gamma, &precond);
        let mut dg = dot(&dir, &g);
        if !(dg < 0.0) {
            // not a descent direction: drop the history and precondition the
            // raw gradient instead
            s_hist.clear();
            y_hist.clear();
            rho.clear();
            dir = precond_steepest(&g, &precond);
            dg = dot(&dir, &g);
        }

        match line_search(&mut obj, &x, f, &dir, dg, opts.max_line_search_steps) {
            Ok(ls) => {
                let mut s = dir;
                for sv in s.iter_mut() {
                    *sv *= ls.alpha;
                }
                for (xv, sv) in x.iter_mut().zip(&s) {
                    *xv += sv;
                }
                let mut y = ls.g.clone();
                for (yv, gv) in y.iter_mut().zip(&g) {
                    *yv -= gv;
                }
                let sy = dot(&s, &y);
                if sy > 1e-300 {
                    let ynorm = dot_precond(&y, &y, &precond);
                    if ynorm > 0.0 {
                        gamma = sy / ynorm;
                    }
                    if s_hist.len() == mem {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho.remove(0);
                    }
                    rho.push(1.0 / sy);
                    s_hist.push(s);
                    y_hist.push(y);
                }
                f = ls.f;
                g = ls.g;
            }
            Err(LineSearchFailure::NoDecrease) => {
                if s_hist.is_empty() {
                    break; // genuinely stuck; report non-convergence
                }
                s_hist.clear();
                y_hist.clear();
                rho.clear();
                gamma = 1.0;
                continue;
            }
            Err(LineSearchFailure::AllNonFinite) => return Err(Error::NonFiniteEnergy),
        }
    }
    obj.field.u_x.copy_from_slice(&x[..n]);
    obj.field.u_y.copy_from_slice(&x[n..2 * n]);
    obj.field.xi.copy_from_slice(&x[2 * n..]);

    let trace_out = StartTrace {
        strategy: strategy.label(),
        iterations,
        final_energy: f,
        grad_sup,
        converged,
        trace,
    };
    Ok((obj.field, trace_out))
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn dot_precond(a: &[f64], b: &[f64], d: &[f64]) -> f64 {
    a.iter().zip(b).zip(d).map(|((x, y), dd)| x * y / dd).sum()
}

fn precond_steepest(g: &[f64], d: &[f64]) -> Vec<f64> {
    g.iter().zip(d).map(|(gv, dv)| -gv / dv).collect()
}

/// Two-loop recursion with `H0 = gamma * D^(-1)`.
fn two_loop(
    g: &[f64],
    s_hist: &[Vec<f64>],
    y_hist: &[Vec<f64>],
    rho: &[f64],
    gamma: f64,
    precond: &[f64],
) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let k = s_hist.len();
    let mut alpha = vec![0.0f64; k];
    for i in (0..k).rev() {
        let a = rho[i] * dot(&s_hist[i], &q);
        alpha[i] = a;
        for (qv, yv) in q.iter_mut().zip(&y_hist[i]) {
            *qv -= a * yv;
        }
    }
    for (qv, dv) in q.iter_mut().zip(precond) {
        *qv *= gamma / dv;
    }
    for i in 0..k {
        let b = rho[i] * dot(&y_hist[i], &q);
        let a = alpha[i];
        for (qv, sv) in q.iter_mut().zip(&s_hist[i]) {
            *qv += (a - b) * sv;
        }
    }
    for qv in q.iter_mut() {
        *qv = -*qv;
    }
    q
}

struct LineSearchResult {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
}

enum LineSearchFailure {
    NoDecrease,
    AllNonFinite,
}

/// Strong Wolfe line search (sufficient decrease c1 = 1e-4, curvature
/// c2 = 0.9), bracketing then bisection. Non-finite trial energies shrink
/// the step. Falls back to the best strictly-decreasing point seen, so an
/// accepted step never increases the energy.
fn line_search(
    obj: &mut Objective,
    x0: &[f64],
    f0: f64,
    dir: &[f64],
    dg0: f64,
    max_steps: usize,
) -> std::result::Result<LineSearchResult, LineSearchFailure> {
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut xt = vec![0.0f64; x0.len()];
    let mut gt = vec![0.0f64; x0.len()];
    let mut eval = |alpha: f64, gt: &mut Vec<f64>| -> (f64, f64) {
        for ((xv, x0v), dv) in xt.iter_mut().zip(x0).zip(dir) {
            *xv = x0v + alpha * dv;
        }
        match obj.eval(&xt, gt) {
            Ok(f) if f.is_finite() => (f, dot(gt, dir)),
            _ => (f64::INFINITY, f64::INFINITY),
        }
    };

    let mut best: Option<(f64, f64)> = None; // (alpha, f) strictly below f0
    let mut any_finite = false;

    let mut alpha_prev = 0.0f64;
    let mut f_prev = f0;
    let mut alpha = 1.0f64;
    let mut lo_hi: Option<(f64, f64, f64)> = None; // (alpha_lo, f_lo, alpha_hi)
    let mut steps = 0;

    while steps < max_steps {
        steps += 1;
        let (ft, dgt) = eval(alpha, &mut gt);
        if ft.is_finite() {
            any_finite = true;
            if ft < f0 && best.map_or(true, |(_, bf)| ft < bf) {
                best = Some((alpha, ft));
            }
        } else {
            // damped restart of the trial step
            alpha = 0.5 * (alpha_prev + alpha);
            continue;
        }
        if ft > f0 + C1 * alpha * dg0 || ft >= f_prev && alpha_prev > 0.0 {
            lo_hi = Some((alpha_prev, f_prev, alpha));
            break;
        }
        if dgt.abs() <= -C2 * dg0 {
            return Ok(LineSearchResult { alpha, f: ft, g: gt });
        }
        if dgt >= 0.0 {
            lo_hi = Some((alpha, ft, alpha_prev));
            break;
        }
        alpha_prev = alpha;
        f_prev = ft;
        alpha *= 2.0;
    }

    if let Some((mut a_lo, mut f_lo, mut a_hi)) = lo_hi {
        while steps < max_steps {
            steps += 1;
            let a = 0.5 * (a_lo + a_hi);
            let (ft, dgt) = eval(a, &mut gt);
            if ft.is_finite() {
                any_finite = true;
                if ft < f0 && best.map_or(true, |(_, bf)| ft < bf) {
                    best = Some((a, ft));
                }
            }
            if !ft.is_finite() || ft > f0 + C1 * a * dg0 || ft >= f_lo {
                a_hi = a;
            } else {
                if dgt.abs() <= -C2 * dg0 {
                    return Ok(LineSearchResult { alpha: a, f: ft, g: gt });
                }
                if dgt * (a_hi - a_lo) >= 0.0 {
                    a_hi = a_lo;
                }
                a_lo = a;
                f_lo = ft;
            }
        }
    }

    // Wolfe conditions unattained within the step budget: accept the best
    // decreasing point if one was found.
    if let Some((alpha, _)) = best {
        let (ft, _) = eval(alpha, &mut gt);
        return Ok(LineSearchResult { alpha, f: ft, g: gt });
    }
    if any_finite {
        Err(LineSearchFailure::NoDecrease)
    } else {
        Err(LineSearchFailure::AllNonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_params() -> CanonicalParams {
        CanonicalParams { h: 0.02, l: 1.0, tau: 4.0, w0: 1.0 / 6.0 }
    }

    #[test]
    fn perturbed_zero_noise_is_bulk_only() {
        let p = small_params();
        let grid = Grid::new(25, 17, 1.0).unwrap();
        let a = init_field(&InitStrategy::BulkOnly, &p, &grid).unwrap();
        let b =
            init_field(&InitStrategy::Perturbed { sigma: 0.0, seed: 42 }, &p, &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perturbed_noise_is_deterministic_and_top_row_clean() {
        let p = small_params();
        let grid = Grid::new(25, 17, 1.0).unwrap();
        let s = InitStrategy::Perturbed { sigma: 1e-3, seed: 7 };
        let a = init_field(&s, &p, &grid).unwrap();
        let b = init_field(&s, &p, &grid).unwrap();
        assert_eq!(a, b);
        let profile = boundary_profile(&p, grid.nx);
        assert_eq!(a.top_row(crate::grid::Component::Xi), &profile.xi[..]);
    }

    #[test]
    fn flat_boundary_recovers_bulk_on_a_coarse_grid() {
        let p = small_params();
        let grid = Grid::new(17, 65, 1.0).unwrap();
        let opts = MinimizeOptions {
            multistart: vec![InitStrategy::Flat],
            top_boundary: TopBoundary::Flat,
            max_iters: 2000,
            ..MinimizeOptions::default_for(&p)
        };
        let report = minimize(&p, &grid, &opts).unwrap();
        assert_relative_eq!(report.breakdown.total, -4.0 / 3.0, max_relative = 1e-2);
        // pinned row untouched
        let top = report.best_field.top_row(crate::grid::Component::Uy);
        assert!(top.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_runs_are_bitwise_identical() {
        let p = small_params();
        let grid = Grid::new(25, 33, 1.0).unwrap();
        let opts = MinimizeOptions {
            multistart: vec![
                InitStrategy::BulkOnly,
                InitStrategy::Perturbed { sigma: p.w0 / 4.0, seed: 3 },
            ],
            max_iters: 60,
            ..MinimizeOptions::default_for(&p)
        };
        let a = minimize(&p, &grid, &opts).unwrap();
        let b = minimize(&p, &grid, &opts).unwrap();
        assert_eq!(a.best_field, b.best_field);
        assert_eq!(a.breakdown.total.to_bits(), b.breakdown.total.to_bits());
        for (sa, sb) in a.starts.iter().zip(&b.starts) {
            assert_eq!(sa.final_energy.to_bits(), sb.final_energy.to_bits());
        }
    }

    #[test]
    fn monotone_energy_along_trace() {
        let p = small_params();
        let grid = Grid::new(25, 33, 1.0).unwrap();
        let opts = MinimizeOptions {
            multistart: vec![InitStrategy::BulkOnly],
            max_iters: 120,
            record_trace: true,
            ..MinimizeOptions::default_for(&p)
        };
        let report = minimize(&p, &grid, &opts).unwrap();
        let trace = report.starts[0].trace.as_ref().unwrap();
        for w in trace.windows(2) {
            assert!(w[1].energy <= w[0].energy + 1e-14, "energy increased: {w:?}");
        }
    }

    #[test]
    fn options_are_validated() {
        let p = small_params();
        let grid = Grid::new(9, 9, 1.0).unwrap();
        let mut opts = MinimizeOptions::default_for(&p);
        opts.grad_tol = 0.0;
        assert!(minimize(&p, &grid, &opts).is_err());
    }
}
