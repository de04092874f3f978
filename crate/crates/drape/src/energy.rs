//! Discrete Föppl–von Kármán energy, its exact gradient, the bulk energy,
//! and the clamped-edge wrinkle profile.
//!
//! The functional, in expanded form with Poisson ratio zero:
//!
//! ```text
//! E = ∬ |u_x,x + ξ,x²/2|²  +  ½|u_x,y + u_y,x + ξ,x ξ,y|²  +  |u_y,y + ξ,y²/2|²
//!   + h²(ξ,xx² + 2ξ,xy² + ξ,yy²)  +  τ ∬ u_y
//! ```
//!
//! Discretization: membrane first derivatives at cell centers (average of the
//! two forward differences along each cell edge, i.e. the bilinear-interpolant
//! derivative) with cell-area weights; bending second derivatives at nodes by
//! three-point stencils (second-order one-sided at edges) with trapezoid
//! weights; gravity by the trapezoid rule. Everything is second-order
//! accurate, the gradient is assembled in closed form, and no field component
//! has a checkerboard null mode. Sums are compensated and sequential, so
//! results are bit-deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DeformationField, Grid, Mask};
use crate::params::{CanonicalParams, PhysicalParams};

/// The integrals of the energy, split by term, plus the bulk reference and
/// the excess above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_xx: f64,
    pub e_shear: f64,
    pub e_yy: f64,
    pub bending: f64,
    pub gravity: f64,
    pub total: f64,
    pub bulk: f64,
    pub excess: f64,
}

impl EnergyBreakdown {
    pub const CSV_HEADER: &'static str = "e_xx,e_shear,e_yy,bending,gravity,total,bulk,excess";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.e_xx,
            self.e_shear,
            self.e_yy,
            self.bending,
            self.gravity,
            self.total,
            self.bulk,
            self.excess
        )
    }
}

/// Vertical displacement of the relaxed (zero-thickness) sheet:
/// `f(y) = (τy² + 2τLy)/4`, the unique minimizer of the bulk energy.
pub fn bulk_minimizer(tau: f64, l: f64, y: f64) -> Result<f64> {
    if y < -l - 1e-12 * l.abs() || y > 1e-12 * l.abs() {
        return Err(Error::OutOfDomain(format!("y = {y} outside [-L, 0] = [{}, 0]", -l)));
    }
    Ok((tau * y * y + 2.0 * tau * l * y) / 4.0)
}

/// Companion derivative `f'(y) = τ(y + L)/2`.
pub fn bulk_minimizer_slope(tau: f64, l: f64, y: f64) -> f64 {
    tau * (y + l) / 2.0
}

/// Minimum of the bulk energy over a sheet of the given width:
/// `-τ²L³·width/12` (canonical width is 1).
pub fn bulk_energy(tau: f64, l: f64, width: f64) -> f64 {
    -tau * tau * l * l * l * width / 12.0
}

/// Clamped-edge profile at `y = 0` (canonical units, Δ = 1), sampled on
/// `nx` uniform nodes across the width.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryProfile {
    pub u_x: Vec<f64>,
    pub u_y: Vec<f64>,
    pub xi: Vec<f64>,
}

/// The imposed wrinkle profile: `ξ(x) = (w0/π)·sin(2πx/w0)` with the
/// compression-free in-plane displacement
/// `u_x(x) = -½∫₀ˣ ξ,x² = -x - (w0/4π)·sin(4πx/w0)` and `u_y = 0`.
pub fn boundary_profile(p: &CanonicalParams, nx: usize) -> BoundaryProfile {
    let dx = 1.0 / (nx - 1) as f64;
    let w0 = p.w0;
    let mut u_x = Vec::with_capacity(nx);
    let mut u_y = Vec::with_capacity(nx);
    let mut xi = Vec::with_capacity(nx);
    for i in 0..nx {
        let x = -0.5 + i as f64 * dx;
        xi.push(w0 / std::f64::consts::PI * (2.0 * std::f64::consts::PI * x / w0).sin());
        u_x.push(boundary_u_x(w0, x));
        u_y.push(0.0);
    }
    BoundaryProfile { u_x, u_y, xi }
}

pub(crate) fn boundary_u_x(w0: f64, x: f64) -> f64 {
    -x - w0 / (4.0 * std::f64::consts::PI) * (4.0 * std::f64::consts::PI * x / w0).sin()
}

pub(crate) fn boundary_xi(w0: f64, x: f64) -> f64 {
    w0 / std::f64::consts::PI * (2.0 * std::f64::consts::PI * x / w0).sin()
}

/// True when the wrinkled boundary profile costs less elastic energy than the
/// trivial planar compression, i.e. `h ≤ w0 √Δ (8π²)^(-1/2)`.
pub fn wrinkle_vs_trivial_threshold(p: &PhysicalParams) -> bool {
    p.h <= p.w0 * p.delta.sqrt() / (8.0 * std::f64::consts::PI * std::f64::consts::PI).sqrt()
}

/// Warning text when the grid under-resolves the imposed wrinkle period.
/// Evaluation still proceeds; callers decide whether to surface it.
pub fn resolution_warning(grid: &Grid, w0: f64) -> Option<String> {
    if grid.resolves(w0) {
        None
    } else {
        Some(format!(
            "grid resolves only {:.1} nodes per wrinkle period (contract: 16)",
            grid.nodes_per_period(w0)
        ))
    }
}

/// Model-validity diagnostic: `h` times the largest discrete curvature
/// `|∇²ξ|` over the nodes. The small-slope model wants this well below 1;
/// it is reported, never enforced.
pub fn curvature_diagnostic(field: &DeformationField, h: f64) -> f64 {
    let grid = &field.grid;
    let n = grid.n_nodes();
    let (mut sxx, mut syy, mut sy, mut sxy) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    d2_x(&field.xi, grid.nx, grid.ny, grid.dx(), &mut sxx);
    d2_y(&field.xi, grid.nx, grid.ny, grid.dy(), &mut syy);
    d1_y(&field.xi, grid.nx, grid.ny, grid.dy(), &mut sy);
    d1_x(&sy, grid.nx, grid.ny, grid.dx(), &mut sxy);
    let mut sup: f64 = 0.0;
    for k in 0..n {
        sup = sup.max(sxx[k] * sxx[k] + 2.0 * sxy[k] * sxy[k] + syy[k] * syy[k]);
    }
    h * sup.sqrt()
}

/// Gradient of the discrete energy, one array per field component.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub u_x: Vec<f64>,
    pub u_y: Vec<f64>,
    pub xi: Vec<f64>,
}

impl FieldGradient {
    pub fn zeros(n: usize) -> Self {
        FieldGradient { u_x: vec![0.0; n], u_y: vec![0.0; n], xi: vec![0.0; n] }
    }

    fn clear(&mut self) {
        self.u_x.iter_mut().for_each(|v| *v = 0.0);
        self.u_y.iter_mut().for_each(|v| *v = 0.0);
        self.xi.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn sup_norm(&self) -> f64 {
        let m = |a: &[f64]| a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        m(&self.u_x).max(m(&self.u_y)).max(m(&self.xi))
    }
}

/// Energy of a canonical-unit field. The grid's x-range is `[-1/2, 1/2]`.
pub fn fvk_energy(field: &DeformationField, p: &CanonicalParams) -> Result<EnergyBreakdown> {
    let mut ev = Evaluator::canonical(p, &field.grid);
    ev.energy(field)
}

/// Energy of a physical field on `[-W, W] x [-L, 0]`; `field.grid.l` must be
/// the physical length and the x index range spans `[-W, W]`.
pub fn fvk_energy_physical(field: &DeformationField, p: &PhysicalParams) -> Result<EnergyBreakdown> {
    let mut ev = Evaluator::physical(p, &field.grid);
    ev.energy(field)
}

/// Gradient of the discrete canonical energy. Entries on nodes fixed by
/// `mask` are zeroed.
pub fn fvk_gradient(
    field: &DeformationField,
    p: &CanonicalParams,
    mask: Option<&Mask>,
) -> Result<FieldGradient> {
    let mut ev = Evaluator::canonical(p, &field.grid);
    let mut g = FieldGradient::zeros(field.grid.n_nodes());
    ev.energy_and_gradient(field, &mut g)?;
    if let Some(m) = mask {
        m.zero_fixed(&mut g.u_x);
        m.zero_fixed(&mut g.u_y);
        m.zero_fixed(&mut g.xi);
    }
    Ok(g)
}

/// Reusable assembly state for one grid and parameter set. Construct once,
/// evaluate many fields (the minimizer's hot path).
pub struct Evaluator {
    h: f64,
    tau: f64,
    x_span: f64,
    grid: Grid,
    // node scratch for the bending term
    sxx: Vec<f64>,
    syy: Vec<f64>,
    sy: Vec<f64>,
    sxy: Vec<f64>,
    wbuf: Vec<f64>,
    tbuf: Vec<f64>,
}

impl Evaluator {
    pub fn canonical(p: &CanonicalParams, grid: &Grid) -> Self {
        Self::raw(p.h, p.tau, 1.0, grid)
    }

    pub fn physical(p: &PhysicalParams, grid: &Grid) -> Self {
        Self::raw(p.h, p.tau, 2.0 * p.w, grid)
    }

    fn raw(h: f64, tau: f64, x_span: f64, grid: &Grid) -> Self {
        let n = grid.n_nodes();
        Evaluator {
            h,
            tau,
            x_span,
            grid: *grid,
            sxx: vec![0.0; n],
            syy: vec![0.0; n],
            sy: vec![0.0; n],
            sxy: vec![0.0; n],
            wbuf: vec![0.0; n],
            tbuf: vec![0.0; n],
        }
    }

    pub fn energy(&mut self, field: &DeformationField) -> Result<EnergyBreakdown> {
        self.assemble(field, None)
    }

    pub fn energy_and_gradient(
        &mut self,
        field: &DeformationField,
        grad: &mut FieldGradient,
    ) -> Result<EnergyBreakdown> {
        self.assemble(field, Some(grad))
    }

    fn assemble(
        &mut self,
        field: &DeformationField,
        mut grad: Option<&mut FieldGradient>,
    ) -> Result<EnergyBreakdown> {
        if field.grid != self.grid {
            return Err(Error::InvalidGrid("field grid does not match evaluator".into()));
        }
        field.check_finite()?;
        if let Some(g) = grad.as_deref_mut() {
            g.clear();
        }

        let grid = &self.grid;
        let (nx, ny) = (grid.nx, grid.ny);
        let dx = self.x_span / (nx - 1) as f64;
        let dy = grid.dy();
        let da = dx * dy;
        let (rx, ry) = (0.5 / dx, 0.5 / dy);

        let ux = &field.u_x;
        let uy = &field.u_y;
        let xi = &field.xi;

        let mut acc_xx = Kahan::default();
        let mut acc_sh = Kahan::default();
        let mut acc_yy = Kahan::default();

        // membrane terms, cell by cell
        for j in 0..ny - 1 {
            let r0 = j * nx;
            let r1 = r0 + nx;
            for i in 0..nx - 1 {
                let (a, b, c, d) = (r0 + i, r0 + i + 1, r1 + i, r1 + i + 1);
                let cx = |f: &[f64]| (f[b] - f[a] + f[d] - f[c]) * rx;
                let cy = |f: &[f64]| (f[c] - f[a] + f[d] - f[b]) * ry;
                let uxx = cx(ux);
                let uxy = cy(ux);
                let uyx = cx(uy);
                let uyy = cy(uy);
                let xx = cx(xi);
                let xy = cy(xi);

                let t1 = uxx + 0.5 * xx * xx;
                let t2 = uxy + uyx + xx * xy;
                let t3 = uyy + 0.5 * xy * xy;
                acc_xx.add(t1 * t1 * da);
                acc_sh.add(0.5 * t2 * t2 * da);
                acc_yy.add(t3 * t3 * da);

                if let Some(g) = grad.as_deref_mut() {
                    let q1 = 2.0 * t1 * da;
                    let q2 = t2 * da;
                    let q3 = 2.0 * t3 * da;
                    // scatter through the cell-center stencils:
                    // d(cx)/df = rx * (-1, +1, -1, +1) on (a, b, c, d)
                    // d(cy)/df = ry * (-1, -1, +1, +1)
                    let gx = |q: f64| q * rx;
                    let gy = |q: f64| q * ry;

                    let (px, py) = (gx(q1), gy(q2));
                    g.u_x[a] += -px - py;
                    g.u_x[b] += px - py;
                    g.u_x[c] += -px + py;
                    g.u_x[d] += px + py;

                    let (px, py) = (gx(q2), gy(q3));
                    g.u_y[a] += -px - py;
                    g.u_y[b] += px - py;
                    g.u_y[c] += -px + py;
                    g.u_y[d] += px + py;

                    let (px, py) = (gx(q1 * xx + q2 * xy), gy(q2 * xx + q3 * xy));
                    g.xi[a] += -px - py;
                    g.xi[b] += px - py;
                    g.xi[c] += -px + py;
                    g.xi[d] += px + py;
                }
            }
        }

        // bending: node Hessian of xi
        d2_x(xi, nx, ny, dx, &mut self.sxx);
        d2_y(xi, nx, ny, dy, &mut self.syy);
        d1_y(xi, nx, ny, dy, &mut self.sy);
        d1_x(&self.sy, nx, ny, dx, &mut self.sxy);

        let h2 = self.h * self.h;
        let mut acc_bend = Kahan::default();
        let mut acc_grav = Kahan::default();
        for j in 0..ny {
            let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
            for i in 0..nx {
                let w = wj * if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                let k = j * nx + i;
                let hess = self.sxx[k] * self.sxx[k]
                    + 2.0 * self.sxy[k] * self.sxy[k]
                    + self.syy[k] * self.syy[k];
                acc_bend.add(h2 * w * hess * da);
                acc_grav.add(self.tau * w * uy[k] * da);
            }
        }

        if let Some(g) = grad.as_deref_mut() {
            // d(bending)/d(xi) = h² dA [Dxxᵀ(2w·ξxx) + Dyyᵀ(2w·ξyy) + Dyᵀ Dxᵀ (4w·ξxy)]
            let scale = h2 * da;
            for j in 0..ny {
                let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                for i in 0..nx {
                    let w = wj * if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                    let k = j * nx + i;
                    self.wbuf[k] = 2.0 * w * self.sxx[k] * scale;
                }
            }
            d2_x_t(&self.wbuf, nx, ny, dx, &mut g.xi);
            for j in 0..ny {
                let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                for i in 0..nx {
                    let w = wj * if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                    let k = j * nx + i;
                    self.wbuf[k] = 2.0 * w * self.syy[k] * scale;
                }
            }
            d2_y_t(&self.wbuf, nx, ny, dy, &mut g.xi);
            for j in 0..ny {
                let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                for i in 0..nx {
                    let w = wj * if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                    let k = j * nx + i;
                    self.wbuf[k] = 4.0 * w * self.sxy[k] * scale;
                }
            }
            self.tbuf.iter_mut().for_each(|v| *v = 0.0);
            d1_x_t(&self.wbuf, nx, ny, dx, &mut self.tbuf);
            d1_y_t(&self.tbuf, nx, ny, dy, &mut g.xi);

            // gravity: trapezoid weights times tau
            for j in 0..ny {
                let wj = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
                for i in 0..nx {
                    let w = wj * if i == 0 || i == nx - 1 { 0.5 } else { 1.0 };
                    g.u_y[j * nx + i] += self.tau * w * da;
                }
            }
        }

        let e_xx = acc_xx.value();
        let e_shear = acc_sh.value();
        let e_yy = acc_yy.value();
        let bending = acc_bend.value();
        let gravity = acc_grav.value();
        let total = e_xx + e_shear + e_yy + bending + gravity;
        let bulk = bulk_energy(self.tau, grid.l, self.x_span);
        Ok(EnergyBreakdown {
            e_xx,
            e_shear,
            e_yy,
            bending,
            gravity,
            total,
            bulk,
            excess: total - bulk,
        })
    }
}

#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum
    }
}

// ---- node stencils -------------------------------------------------------
//
// The transposed variants scatter-add into `out` and must mirror the apply
// loops exactly; the finite-difference gradient tests pin this down.

fn d2_x(f: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 1.0 / (d * d);
    for j in 0..ny {
        let r = j * nx;
        match nx {
            2 => {
                out[r] = 0.0;
                out[r + 1] = 0.0;
            }
            3 => {
                let v = (f[r] - 2.0 * f[r + 1] + f[r + 2]) * s;
                out[r] = v;
                out[r + 1] = v;
                out[r + 2] = v;
            }
            _ => {
                out[r] = (2.0 * f[r] - 5.0 * f[r + 1] + 4.0 * f[r + 2] - f[r + 3]) * s;
                for i in 1..nx - 1 {
                    out[r + i] = (f[r + i - 1] - 2.0 * f[r + i] + f[r + i + 1]) * s;
                }
                out[r + nx - 1] = (2.0 * f[r + nx - 1] - 5.0 * f[r + nx - 2]
                    + 4.0 * f[r + nx - 3]
                    - f[r + nx - 4])
                    * s;
            }
        }
    }
}

fn d2_x_t(q: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 1.0 / (d * d);
    for j in 0..ny {
        let r = j * nx;
        match nx {
            2 => {}
            3 => {
                let v = (q[r] + q[r + 1] + q[r + 2]) * s;
                out[r] += v;
                out[r + 1] += -2.0 * v;
                out[r + 2] += v;
            }
            _ => {
                let v = q[r] * s;
                out[r] += 2.0 * v;
                out[r + 1] += -5.0 * v;
                out[r + 2] += 4.0 * v;
                out[r + 3] += -v;
                for i in 1..nx - 1 {
                    let v = q[r + i] * s;
                    out[r + i - 1] += v;
                    out[r + i] += -2.0 * v;
                    out[r + i + 1] += v;
                }
                let v = q[r + nx - 1] * s;
                out[r + nx - 1] += 2.0 * v;
                out[r + nx - 2] += -5.0 * v;
                out[r + nx - 3] += 4.0 * v;
                out[r + nx - 4] += -v;
            }
        }
    }
}

fn d2_y(f: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 1.0 / (d * d);
    for i in 0..nx {
        match ny {
            2 => {
                out[i] = 0.0;
                out[nx + i] = 0.0;
            }
            3 => {
                let v = (f[i] - 2.0 * f[nx + i] + f[2 * nx + i]) * s;
                out[i] = v;
                out[nx + i] = v;
                out[2 * nx + i] = v;
            }
            _ => {
                out[i] = (2.0 * f[i] - 5.0 * f[nx + i] + 4.0 * f[2 * nx + i] - f[3 * nx + i]) * s;
                for j in 1..ny - 1 {
                    out[j * nx + i] =
                        (f[(j - 1) * nx + i] - 2.0 * f[j * nx + i] + f[(j + 1) * nx + i]) * s;
                }
                let e = (ny - 1) * nx + i;
                out[e] = (2.0 * f[e] - 5.0 * f[e - nx] + 4.0 * f[e - 2 * nx] - f[e - 3 * nx]) * s;
            }
        }
    }
}

fn d2_y_t(q: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 1.0 / (d * d);
    for i in 0..nx {
        match ny {
            2 => {}
            3 => {
                let v = (q[i] + q[nx + i] + q[2 * nx + i]) * s;
                out[i] += v;
                out[nx + i] += -2.0 * v;
                out[2 * nx + i] += v;
            }
            _ => {
                let v = q[i] * s;
                out[i] += 2.0 * v;
                out[nx + i] += -5.0 * v;
                out[2 * nx + i] += 4.0 * v;
                out[3 * nx + i] += -v;
                for j in 1..ny - 1 {
                    let v = q[j * nx + i] * s;
                    out[(j - 1) * nx + i] += v;
                    out[j * nx + i] += -2.0 * v;
                    out[(j + 1) * nx + i] += v;
                }
                let e = (ny - 1) * nx + i;
                let v = q[e] * s;
                out[e] += 2.0 * v;
                out[e - nx] += -5.0 * v;
                out[e - 2 * nx] += 4.0 * v;
                out[e - 3 * nx] += -v;
            }
        }
    }
}

fn d1_x(f: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 0.5 / d;
    for j in 0..ny {
        let r = j * nx;
        if nx == 2 {
            let v = (f[r + 1] - f[r]) / d;
            out[r] = v;
            out[r + 1] = v;
            continue;
        }
        out[r] = (-3.0 * f[r] + 4.0 * f[r + 1] - f[r + 2]) * s;
        for i in 1..nx - 1 {
            out[r + i] = (f[r + i + 1] - f[r + i - 1]) * s;
        }
        out[r + nx - 1] = (3.0 * f[r + nx - 1] - 4.0 * f[r + nx - 2] + f[r + nx - 3]) * s;
    }
}

fn d1_x_t(q: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 0.5 / d;
    for j in 0..ny {
        let r = j * nx;
        if nx == 2 {
            let v = (q[r] + q[r + 1]) / d;
            out[r] += -v;
            out[r + 1] += v;
            continue;
        }
        let v = q[r] * s;
        out[r] += -3.0 * v;
        out[r + 1] += 4.0 * v;
        out[r + 2] += -v;
        for i in 1..nx - 1 {
            let v = q[r + i] * s;
            out[r + i + 1] += v;
            out[r + i - 1] += -v;
        }
        let v = q[r + nx - 1] * s;
        out[r + nx - 1] += 3.0 * v;
        out[r + nx - 2] += -4.0 * v;
        out[r + nx - 3] += v;
    }
}

fn d1_y(f: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 0.5 / d;
    for i in 0..nx {
        if ny == 2 {
            let v = (f[nx + i] - f[i]) / d;
            out[i] = v;
            out[nx + i] = v;
            continue;
        }
        out[i] = (-3.0 * f[i] + 4.0 * f[nx + i] - f[2 * nx + i]) * s;
        for j in 1..ny - 1 {
            out[j * nx + i] = (f[(j + 1) * nx + i] - f[(j - 1) * nx + i]) * s;
        }
        let e = (ny - 1) * nx + i;
        out[e] = (3.0 * f[e] - 4.0 * f[e - nx] + f[e - 2 * nx]) * s;
    }
}

fn d1_y_t(q: &[f64], nx: usize, ny: usize, d: f64, out: &mut [f64]) {
    let s = 0.5 / d;
    for i in 0..nx {
        if ny == 2 {
            let v = (q[i] + q[nx + i]) / d;
            out[i] += -v;
            out[nx + i] += v;
            continue;
        }
        let v = q[i] * s;
        out[i] += -3.0 * v;
        out[nx + i] += 4.0 * v;
        out[2 * nx + i] += -v;
        for j in 1..ny - 1 {
            let v = q[j * nx + i] * s;
            out[(j + 1) * nx + i] += v;
            out[(j - 1) * nx + i] += -v;
        }
        let e = (ny - 1) * nx + i;
        let v = q[e] * s;
        out[e] += 3.0 * v;
        out[e - nx] += -4.0 * v;
        out[e - 2 * nx] += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn canon() -> CanonicalParams {
        CanonicalParams { h: 0.001, l: 1.0, tau: 4.0, w0: 0.01 }
    }

    #[test]
    fn bulk_minimizer_values() {
        assert_relative_eq!(bulk_minimizer(4.0, 1.0, -1.0).unwrap(), -1.0);
        assert_eq!(bulk_minimizer(7.3, 2.0, 0.0).unwrap(), 0.0);
        assert!(bulk_minimizer(4.0, 1.0, -1.5).is_err());
        // f'(-L/2) >= tau*L/4 at the midpoint, with equality here
        assert_relative_eq!(bulk_minimizer_slope(4.0, 1.0, -0.5), 1.0);
    }

    #[test]
    fn bulk_energy_values() {
        assert_relative_eq!(bulk_energy(4.0, 1.0, 1.0), -4.0 / 3.0);
        assert_eq!(bulk_energy(0.0, 1.0, 1.0), 0.0);
        assert_relative_eq!(bulk_energy(4.0, 2.0, 1.0), 8.0 * bulk_energy(4.0, 1.0, 1.0));
    }

    #[test]
    fn flat_field_energy_is_zero_with_full_excess() {
        let p = canon();
        let grid = Grid::new(17, 17, 1.0).unwrap();
        let f = DeformationField::zeros(grid);
        let e = fvk_energy(&f, &p).unwrap();
        assert_eq!(e.e_xx, 0.0);
        assert_eq!(e.e_shear, 0.0);
        assert_eq!(e.e_yy, 0.0);
        assert_eq!(e.bending, 0.0);
        assert_eq!(e.gravity, 0.0);
        assert_eq!(e.total, 0.0);
        assert_relative_eq!(e.excess, 4.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn bulk_state_energy_approaches_bulk_minimum() {
        let p = canon();
        let grid = Grid::new(9, 513, 1.0).unwrap();
        let mut f = DeformationField::zeros(grid);
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                f.u_y[grid.idx(i, j)] = bulk_minimizer(p.tau, p.l, y).unwrap();
            }
        }
        let e = fvk_energy(&f, &p).unwrap();
        assert_relative_eq!(e.total, -4.0 / 3.0, max_relative = 2e-6);
        assert!(e.excess.abs() < 1e-5);
        assert!(e.excess > 0.0, "discrete quadrature keeps the bulk state above the continuum minimum");
    }

    #[test]
    fn boundary_profile_values() {
        let p = CanonicalParams { w0: 0.05, ..canon() };
        let b = boundary_profile(&p, 401);
        let amp = b.xi.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_relative_eq!(amp, 0.05 / std::f64::consts::PI, max_relative = 1e-3);
        // u_x(0) = 0 and u_x odd in x
        assert_abs_diff_eq!(b.u_x[200], 0.0, epsilon = 1e-15);
        for i in 0..=200 {
            assert_abs_diff_eq!(b.u_x[i], -b.u_x[400 - i], epsilon = 1e-13);
        }
        // one period of compression: u_x(w0) - u_x(-w0) = -2 w0
        let per = (0.05f64 / (1.0 / 400.0)).round() as usize;
        assert_relative_eq!(b.u_x[200 + per] - b.u_x[200 - per], -2.0 * 0.05, max_relative = 1e-9);
        assert!(b.u_y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn trivial_threshold() {
        let mk = |h: f64, delta: f64| PhysicalParams {
            h,
            w: 0.5,
            l: 1.0,
            tau: 4.0,
            w0: 0.01,
            delta,
        };
        assert!(wrinkle_vs_trivial_threshold(&mk(0.001, 1.0)));
        assert!(!wrinkle_vs_trivial_threshold(&mk(0.002, 1.0)));
        // Delta -> 0 makes the wrinkled profile always lose for h > 0
        assert!(!wrinkle_vs_trivial_threshold(&mk(1e-6, 1e-9)));
    }

    #[test]
    fn gravity_gradient_on_flat_field_is_quadrature_weights() {
        let p = canon();
        let grid = Grid::new(5, 4, 1.0).unwrap();
        let f = DeformationField::zeros(grid);
        let g = fvk_gradient(&f, &p, None).unwrap();
        let da = grid.dx() * grid.dy();
        assert!(g.u_x.iter().all(|&v| v == 0.0));
        assert!(g.xi.iter().all(|&v| v == 0.0));
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let w = if j == 0 || j == grid.ny - 1 { 0.5 } else { 1.0 }
                    * if i == 0 || i == grid.nx - 1 { 0.5 } else { 1.0 };
                assert_relative_eq!(g.u_y[grid.idx(i, j)], p.tau * w * da, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn nan_field_is_hard_error() {
        let p = canon();
        let grid = Grid::new(5, 5, 1.0).unwrap();
        let mut f = DeformationField::zeros(grid);
        f.xi[7] = f64::NAN;
        assert!(matches!(fvk_energy(&f, &p), Err(Error::NonFiniteField(_))));
    }

    #[test]
    fn masked_gradient_rows_are_zero() {
        let p = canon();
        let grid = Grid::new(7, 6, 1.0).unwrap();
        let mut f = DeformationField::zeros(grid);
        for (k, v) in f.xi.iter_mut().enumerate() {
            *v = 1e-3 * ((k * 2654435761) % 97) as f64 / 97.0;
        }
        let mask = Mask::top_row(&grid);
        let g = fvk_gradient(&f, &p, Some(&mask)).unwrap();
        let top = grid.idx(0, grid.top_row());
        assert!(g.xi[top..top + grid.nx].iter().all(|&v| v == 0.0));
        assert!(g.u_y[top..top + grid.nx].iter().all(|&v| v == 0.0));
        // and something below is nonzero
        assert!(g.xi[..top].iter().any(|&v| v != 0.0));
    }
}
