//! The explicit low-energy deformations: a coarsening building block, the
//! self-similar cascade (type I), confinement release partway down (type II)
//! or from the top (type III), and plain propagation of the clamped profile.
//!
//! Each construction comes with a closed-form predicted excess (scaling
//! form, unit prefactor) so measured quadrature values can be compared
//! against the matching branch.

use serde::{Deserialize, Serialize};

use crate::energy::{boundary_profile, boundary_u_x, boundary_xi, bulk_minimizer};
use crate::error::{Error, Result};
use crate::grid::{DeformationField, Grid};
use crate::params::CanonicalParams;

use std::f64::consts::PI;

// ---- smooth ramps ----------------------------------------------------------

/// Smoothness order of the monotone 0→1 ramp used by the block envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RampOrder {
    /// `3t² - 2t³`, C¹ at the junctions.
    Cubic,
    /// `10t³ - 15t⁴ + 6t⁵`, C².
    Quintic,
    /// `35t⁴ - 84t⁵ + 70t⁶ - 20t⁷`, C³.
    Septic,
}

fn smoothstep(order: RampOrder, t: f64) -> (f64, f64, f64) {
    // value, first and second derivative; clamped outside [0,1]
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    match order {
        RampOrder::Cubic => (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t), 6.0 - 12.0 * t),
        RampOrder::Quintic => {
            let u = 1.0 - t;
            (
                t * t * t * (10.0 + t * (-15.0 + 6.0 * t)),
                30.0 * t * t * u * u,
                60.0 * t * u * (1.0 - 2.0 * t),
            )
        }
        RampOrder::Septic => {
            let u = 1.0 - t;
            (
                t * t * t * t * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t))),
                140.0 * t * t * t * u * u * u,
                420.0 * t * t * u * u * (1.0 - 2.0 * t),
            )
        }
    }
}

/// `∫₀ᵗ smoothstep` for the quintic ramp, used by the release envelope.
fn smoothstep5_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 0.5;
    }
    t * t * t * t * (2.5 + t * (-3.0 + t))
}

// ---- release envelope φ ----------------------------------------------------
//
// φ = 1 on (0,1/3], φ = 0 on [1,∞), smooth and decreasing with |φ'| ≤ 2.
// A plain smoothstep over (1/3,1) would peak at |φ'| = 45/16 > 2, so the
// slope profile is a plateau at exactly 2 with quintic-smoothstep shoulders
// of width 1/4 (in ramp coordinates).

const SHOULDER: f64 = 0.25;

fn envelope_slope_profile(s: f64) -> (f64, f64) {
    // (ψ(s), ψ'(s)) with ψ = 0 outside [0,1], plateau 1 on [a, 1-a]
    let a = SHOULDER;
    if s <= 0.0 || s >= 1.0 {
        (0.0, 0.0)
    } else if s < a {
        let (v, d, _) = smoothstep(RampOrder::Quintic, s / a);
        (v, d / a)
    } else if s <= 1.0 - a {
        (1.0, 0.0)
    } else {
        let (v, d, _) = smoothstep(RampOrder::Quintic, (1.0 - s) / a);
        (v, -d / a)
    }
}

fn envelope_ramp(s: f64) -> f64 {
    // σ(s) = ∫₀ˢ ψ / (1-a), monotone 0→1 with σ' ≤ 1/(1-a)
    let a = SHOULDER;
    let raw = if s <= 0.0 {
        0.0
    } else if s < a {
        a * smoothstep5_integral(s / a)
    } else if s <= 1.0 - a {
        a * 0.5 + (s - a)
    } else if s < 1.0 {
        1.0 - a - a * smoothstep5_integral((1.0 - s) / a)
    } else {
        1.0 - a
    };
    raw / (1.0 - a)
}

/// The confinement-release envelope: `φ(t) = 1` for `t ≤ 1/3`, `0` for
/// `t ≥ 1`, with `|φ'| ≤ 2` (the plateau slope is exactly 2).
pub fn release_envelope(t: f64) -> f64 {
    if t <= 1.0 / 3.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        1.0 - envelope_ramp((t - 1.0 / 3.0) * 1.5)
    }
}

/// `φ'(t)`.
pub fn release_envelope_slope(t: f64) -> f64 {
    if t <= 1.0 / 3.0 || t >= 1.0 {
        0.0
    } else {
        let (psi, _) = envelope_slope_profile((t - 1.0 / 3.0) * 1.5);
        -1.5 * psi / (1.0 - SHOULDER)
    }
}

// ---- building block --------------------------------------------------------

/// The period-tripling cell on `[0,1]²`: out-of-plane profile with period
/// 1/3 near the local top (`y = 0`) and period 1 near the bottom, joined by
/// the envelope pair `g1 = cos(π s/2)`, `g2 = sin(π s/2)` so that
/// `g1² + g2² = 1` holds exactly. The in-plane displacement `v` cancels
/// horizontal compression in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildingBlock {
    pub ramp: RampOrder,
    /// Reference membrane constant `∬ |v,y + μ,x μ,y|² + μ,y²`.
    pub e_m: f64,
    /// Reference bending constant `∬ |∇²μ|²`.
    pub e_b: f64,
    /// Measured `sup |μ,y|` (the quintic ramp gives ≈ 1.84; boundedness is
    /// what the energy estimates need, the exact level only moves prefactors).
    pub mu_y_sup: f64,
    /// Measured `sup(|g1'| + 3|g2'|) / 3π`.
    pub envelope_budget: f64,
}

/// Builds the block and computes its reference constants by 2-D Simpson
/// quadrature, refined until they are stable to four digits.
pub fn make_block(ramp: RampOrder) -> BuildingBlock {
    let mut block = BuildingBlock { ramp, e_m: 0.0, e_b: 0.0, mu_y_sup: 0.0, envelope_budget: 0.0 };

    let (mut prev_m, mut prev_b) = (f64::INFINITY, f64::INFINITY);
    let mut n = 128;
    loop {
        let em = simpson2(n, |x, y| {
            let r = block.vy(x, y) + block.mu_x(x, y) * block.mu_y(x, y);
            let my = block.mu_y(x, y);
            r * r + my * my
        });
        let eb = simpson2(n, |x, y| {
            let (xx, xy, yy) = (block.mu_xx(x, y), block.mu_xy(x, y), block.mu_yy(x, y));
            xx * xx + 2.0 * xy * xy + yy * yy
        });
        let stable = (em - prev_m).abs() <= 1e-5 * em.abs() && (eb - prev_b).abs() <= 1e-5 * eb.abs();
        prev_m = em;
        prev_b = eb;
        if stable || n >= 2048 {
            block.e_m = em;
            block.e_b = eb;
            break;
        }
        n *= 2;
    }

    let m = 1200;
    let mut sup_my = 0.0f64;
    let mut sup_budget = 0.0f64;
    for jy in 0..=m {
        let y = jy as f64 / m as f64;
        let (g1p, g2p) = (block.g1_prime(y), block.g2_prime(y));
        sup_budget = sup_budget.max((g1p.abs() + 3.0 * g2p.abs()) / (3.0 * PI));
        for jx in 0..=m {
            let x = jx as f64 / m as f64;
            sup_my = sup_my.max(block.mu_y(x, y).abs());
        }
    }
    block.mu_y_sup = sup_my;
    block.envelope_budget = sup_budget;
    block
}

fn simpson2(n: usize, f: impl Fn(f64, f64) -> f64) -> f64 {
    // composite Simpson on [0,1]², n intervals per axis (n even)
    let w1 = |k: usize| {
        if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let hh = 1.0 / n as f64 / 3.0;
    let mut sum = 0.0;
    for jy in 0..=n {
        let y = jy as f64 / n as f64;
        let wy = w1(jy) * hh;
        let mut row = 0.0;
        for jx in 0..=n {
            row += w1(jx) * f(jx as f64 / n as f64, y);
        }
        sum += wy * row * hh;
    }
    sum
}

impl BuildingBlock {
    fn ramp_at(&self, y: f64) -> (f64, f64) {
        // s(y): 0 below 1/4, 1 above 3/4; returns (s, s')
        let (v, d, _) = smoothstep(self.ramp, (y - 0.25) * 2.0);
        (v, 2.0 * d)
    }

    fn ramp_second(&self, y: f64) -> f64 {
        let (_, _, dd) = smoothstep(self.ramp, (y - 0.25) * 2.0);
        4.0 * dd
    }

    pub fn g1(&self, y: f64) -> f64 {
        (PI * self.ramp_at(y).0 / 2.0).cos()
    }

    pub fn g2(&self, y: f64) -> f64 {
        (PI * self.ramp_at(y).0 / 2.0).sin()
    }

    pub fn g1_prime(&self, y: f64) -> f64 {
        let (s, sp) = self.ramp_at(y);
        -PI / 2.0 * sp * (PI * s / 2.0).sin()
    }

    pub fn g2_prime(&self, y: f64) -> f64 {
        let (s, sp) = self.ramp_at(y);
        PI / 2.0 * sp * (PI * s / 2.0).cos()
    }

    fn g1_second(&self, y: f64) -> f64 {
        let (s, sp) = self.ramp_at(y);
        let spp = self.ramp_second(y);
        let a = PI * s / 2.0;
        -PI / 2.0 * (spp * a.sin() + PI / 2.0 * sp * sp * a.cos())
    }

    fn g2_second(&self, y: f64) -> f64 {
        let (s, sp) = self.ramp_at(y);
        let spp = self.ramp_second(y);
        let a = PI * s / 2.0;
        PI / 2.0 * (spp * a.cos() - PI / 2.0 * sp * sp * a.sin())
    }

    /// Out-of-plane profile `μ = g1 sin(6πx)/3π + g2 sin(2πx)/π`.
    pub fn mu(&self, x: f64, y: f64) -> f64 {
        self.g1(y) * (6.0 * PI * x).sin() / (3.0 * PI) + self.g2(y) * (2.0 * PI * x).sin() / PI
    }

    pub fn mu_x(&self, x: f64, y: f64) -> f64 {
        2.0 * self.g1(y) * (6.0 * PI * x).cos() + 2.0 * self.g2(y) * (2.0 * PI * x).cos()
    }

    pub fn mu_y(&self, x: f64, y: f64) -> f64 {
        self.g1_prime(y) * (6.0 * PI * x).sin() / (3.0 * PI)
            + self.g2_prime(y) * (2.0 * PI * x).sin() / PI
    }

    pub fn mu_xx(&self, x: f64, y: f64) -> f64 {
        -12.0 * PI * self.g1(y) * (6.0 * PI * x).sin() - 4.0 * PI * self.g2(y) * (2.0 * PI * x).sin()
    }

    pub fn mu_xy(&self, x: f64, y: f64) -> f64 {
        2.0 * self.g1_prime(y) * (6.0 * PI * x).cos() + 2.0 * self.g2_prime(y) * (2.0 * PI * x).cos()
    }

    pub fn mu_yy(&self, x: f64, y: f64) -> f64 {
        self.g1_second(y) * (6.0 * PI * x).sin() / (3.0 * PI)
            + self.g2_second(y) * (2.0 * PI * x).sin() / PI
    }

    /// In-plane displacement `v = -½ ∫₀ˣ μ,x² dt`, in closed form.
    pub fn v(&self, x: f64, y: f64) -> f64 {
        let (a, b) = (self.g1(y), self.g2(y));
        -x - a * a * (12.0 * PI * x).sin() / (12.0 * PI)
            - a * b * ((8.0 * PI * x).sin() / (4.0 * PI) + (4.0 * PI * x).sin() / (2.0 * PI))
            - b * b * (4.0 * PI * x).sin() / (4.0 * PI)
    }

    /// `v,x` from the expanded antiderivative; together with [`mu_x`](Self::mu_x)
    /// this checks the compression-free identity `v,x + μ,x²/2 = 0`.
    pub fn v_x(&self, x: f64, y: f64) -> f64 {
        let (a, b) = (self.g1(y), self.g2(y));
        -1.0 - a * a * (12.0 * PI * x).cos()
            - 2.0 * a * b * ((8.0 * PI * x).cos() + (4.0 * PI * x).cos())
            - b * b * (4.0 * PI * x).cos()
    }

    pub fn vy(&self, x: f64, y: f64) -> f64 {
        let (a, b) = (self.g1(y), self.g2(y));
        let (ap, bp) = (self.g1_prime(y), self.g2_prime(y));
        -2.0 * a * ap * (12.0 * PI * x).sin() / (12.0 * PI)
            - (ap * b + a * bp)
                * ((8.0 * PI * x).sin() / (4.0 * PI) + (4.0 * PI * x).sin() / (2.0 * PI))
            - 2.0 * b * bp * (4.0 * PI * x).sin() / (4.0 * PI)
    }
}

// ---- plans ------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Keep `u_y = f`; shear cost `l⁻¹`.
    A,
    /// Choose `u_y` so the shear term vanishes; vertical-strain cost `l⁻³`.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlanKind {
    /// Self-similar coarsening cascade, no lateral spreading.
    TypeI,
    /// Cascade released within generation `n`.
    TypeII { n: usize, variant: Variant },
    /// Release over height `l` starting at the top.
    TypeIII { l: f64, variant: Variant },
    /// Propagate the clamped profile unchanged down the sheet.
    Propagate,
}

/// One cascade generation: blocks of width `omega` and height `len`, with the
/// generation's top edge at depth `start` (`s_n = Σ_{i<n} l_i`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub n: usize,
    pub omega: f64,
    pub len: f64,
    pub start: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tail {
    None,
    /// Long-sheet finish: blend the last sinusoid into the affine profile
    /// over this height; below it the excess energy density is zero.
    AffineFlatten { len: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionPlan {
    pub kind: PlanKind,
    pub params: CanonicalParams,
    pub generations: Vec<Generation>,
    pub n_generations: usize,
    pub tail: Tail,
}

fn check_plan_params(p: &CanonicalParams) -> Result<()> {
    let mut bad = Vec::new();
    for (name, v) in [("h", p.h), ("L", p.l), ("tau", p.tau), ("w0", p.w0)] {
        if !(v > 0.0) || !v.is_finite() {
            bad.push(format!("{name} = {v}"));
        }
    }
    if p.tau_l() < 4.0 {
        bad.push(format!("tau*L = {} < 4", p.tau_l()));
    }
    if p.h > p.w0 {
        bad.push(format!("h = {} > w0 = {}", p.h, p.w0));
    }
    if p.w0 >= 0.5 {
        bad.push(format!("w0 = {} >= 1/2", p.w0));
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::BadPlan(bad.join("; ")))
    }
}

/// Number of period triplings that fit across the half-width, i.e. the `K`
/// with `w0 = 3^-K / 2` exactly — cascades can only tile the width for such
/// periods. `None` when `w0` is not of that form.
pub fn period_triplings(w0: f64) -> Option<usize> {
    let kf = (1.0 / (2.0 * w0)).ln() / 3.0f64.ln();
    let k = kf.round();
    if k >= 0.0 && (3.0f64.powi(k as i32) * w0 - 0.5).abs() <= 1e-9 {
        Some(k as usize)
    } else {
        None
    }
}

/// The shared quintic-ramp block (reference constants computed once).
pub fn default_block() -> &'static BuildingBlock {
    static BLOCK: std::sync::OnceLock<BuildingBlock> = std::sync::OnceLock::new();
    BLOCK.get_or_init(|| make_block(RampOrder::Quintic))
}

/// Rounds `x` to `bits` mantissa bits. Multiplying an m-bit mantissa by 9
/// needs m+4 bits to stay exact, so quantizing the first generation length
/// keeps the whole geometric schedule's ratios exact in f64 (the
/// perturbation is ~1e-13, far below anything physical).
fn quantize_mantissa(x: f64, bits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() || bits >= 53 {
        return x;
    }
    let e = x.abs().log2().floor() as i32;
    let scale = 2.0f64.powi(bits - 1 - e);
    (x * scale).round() / scale
}

/// Coarsening schedule: generation heights `l_n = 9ⁿ w0² √(τL) / h`, widths
/// `ω_n = 3ⁿ w0`, with the generation count chosen so the cascade fills the
/// sheet. Too-thin sheets (`h < w0²√(τL)/L`) get a [`PlanKind::Propagate`]
/// plan; sheets longer than the full cascade get an affine-flatten tail of
/// height `√(τL)/h`.
pub fn plan_type1(p: &CanonicalParams) -> Result<ConstructionPlan> {
    check_plan_params(p)?;
    let st = p.tau_l().sqrt();

    if p.h < p.w0 * p.w0 * st / p.l {
        return Ok(ConstructionPlan {
            kind: PlanKind::Propagate,
            params: *p,
            generations: Vec::new(),
            n_generations: 0,
            tail: Tail::None,
        });
    }

    let k_int = period_triplings(p.w0);
    let k_cap = k_int.unwrap_or_else(|| ((1.0 / (2.0 * p.w0)).ln() / 3.0f64.ln()).floor() as usize);

    let mut generations = Vec::new();
    let chain = k_cap.saturating_sub(1).min(8) as i32;
    let mut len = quantize_mantissa(9.0 * p.w0 * p.w0 * st / p.h, 53 - 4 * chain);
    let mut omega = quantize_mantissa(3.0 * p.w0, 53 - 2 * chain);
    let mut start = 0.0;
    let mut n = 1;
    while start < p.l * (1.0 - 1e-12) && n <= k_cap {
        generations.push(Generation { n, omega, len, start });
        start += len;
        len *= 9.0;
        omega *= 3.0;
        n += 1;
    }

    if start >= p.l * (1.0 - 1e-12) {
        let n_gens = generations.len();
        Ok(ConstructionPlan {
            kind: PlanKind::TypeI,
            params: *p,
            generations,
            n_generations: n_gens,
            tail: Tail::None,
        })
    } else {
        // cascade exhausted at the sheet width before reaching the bottom
        if k_int.is_none() {
            return Err(Error::BadPlan(format!(
                "long-sheet cascade needs w0 = 3^-K/2 for integer K; got w0 = {}",
                p.w0
            )));
        }
        let n_gens = generations.len();
        Ok(ConstructionPlan {
            kind: PlanKind::TypeI,
            params: *p,
            generations,
            n_generations: n_gens,
            tail: Tail::AffineFlatten { len: st / p.h },
        })
    }
}

/// Type II: the type I cascade released within generation `n` (`1 ≤ n ≤ N`).
pub fn plan_type2(p: &CanonicalParams, n: usize, variant: Variant) -> Result<ConstructionPlan> {
    let base = plan_type1(p)?;
    if base.kind == PlanKind::Propagate {
        return Err(Error::BadPlan(
            "no coarsening cascade exists at these parameters (h < w0^2 sqrt(tauL)/L); \
             type II needs a generation to release"
                .into(),
        ));
    }
    let n_max = base.n_generations;
    if n < 1 || n > n_max {
        return Err(Error::BadPlan(format!(
            "release generation n = {n} out of range; valid range is 1..={n_max}"
        )));
    }
    let generations: Vec<Generation> = base.generations[..n].to_vec();
    Ok(ConstructionPlan {
        kind: PlanKind::TypeII { n, variant },
        params: *p,
        generations,
        n_generations: n_max,
        tail: Tail::None,
    })
}

/// Type III: release the clamped profile over height `l ∈ (0, L]`.
pub fn plan_type3(p: &CanonicalParams, l: f64, variant: Variant) -> Result<ConstructionPlan> {
    check_plan_params(p)?;
    if !(l > 0.0 && l <= p.l) {
        return Err(Error::BadPlan(format!("release height l = {l} outside (0, L = {}]", p.l)));
    }
    Ok(ConstructionPlan {
        kind: PlanKind::TypeIII { l, variant },
        params: *p,
        generations: Vec::new(),
        n_generations: 0,
        tail: Tail::None,
    })
}

pub fn plan_propagate(p: &CanonicalParams) -> Result<ConstructionPlan> {
    check_plan_params(p)?;
    Ok(ConstructionPlan {
        kind: PlanKind::Propagate,
        params: *p,
        generations: Vec::new(),
        n_generations: 0,
        tail: Tail::None,
    })
}

// ---- realization ------------------------------------------------------------

/// Samples the closed-form construction onto the grid. The top row is then
/// overwritten with [`boundary_profile`] so it matches bit for bit.
pub fn realize(plan: &ConstructionPlan, block: &BuildingBlock, grid: &Grid) -> Result<DeformationField> {
    let p = &plan.params;
    if (grid.l - p.l).abs() > 1e-12 * p.l {
        return Err(Error::InvalidGrid(format!(
            "grid length {} does not match plan length {}",
            grid.l, p.l
        )));
    }
    if grid.nodes_per_period(p.w0) < 6.0 {
        return Err(Error::InvalidGrid(format!(
            "grid too coarse for the finest period: {:.1} nodes per w0",
            grid.nodes_per_period(p.w0)
        )));
    }
    for g in &plan.generations {
        let count = 1.0 / g.omega;
        if (count - count.round()).abs() > 1e-9 {
            return Err(Error::BadPlan(format!(
                "generation {} width {} does not tile the sheet (w0 must be 3^-K/2)",
                g.n, g.omega
            )));
        }
    }

    let mut field = DeformationField::zeros(*grid);
    match plan.kind {
        PlanKind::Propagate => realize_propagate(p, grid, &mut field),
        PlanKind::TypeI => realize_cascade(plan, block, grid, &mut field),
        PlanKind::TypeII { n, variant } => realize_release(
            plan,
            block,
            grid,
            &mut field,
            plan.generations[n - 1].start,
            plan.generations[n - 1].len,
            if n >= 2 { plan.generations[n - 2].omega } else { p.w0 },
            variant,
        ),
        PlanKind::TypeIII { l, variant } => {
            realize_release(plan, block, grid, &mut field, 0.0, l, p.w0, variant)
        }
    }

    let b = boundary_profile(p, grid.nx);
    field.set_top_row(&b.u_x, &b.u_y, &b.xi);
    field.check_finite()?;
    Ok(field)
}

fn realize_propagate(p: &CanonicalParams, grid: &Grid, field: &mut DeformationField) {
    for j in 0..grid.ny {
        let y = grid.y(j);
        let f = bulk_minimizer(p.tau, p.l, y.clamp(-p.l, 0.0)).unwrap();
        for i in 0..grid.nx {
            let x = grid.x(i);
            let k = grid.idx(i, j);
            field.u_x[k] = boundary_u_x(p.w0, x);
            field.u_y[k] = f;
            field.xi[k] = boundary_xi(p.w0, x);
        }
    }
}

/// Block sample at a point inside a generation: local coordinates
/// `X = (x - x0)/ω ∈ [0,1]`, `Y = -(y + start)/len` clamped to `[0,1]`
/// (clamping truncates a partial last generation).
fn cascade_sample(
    block: &BuildingBlock,
    gen: &Generation,
    x: f64,
    y: f64,
) -> (f64, f64) {
    let count = (1.0 / gen.omega).round();
    let m = ((x + 0.5) / gen.omega).floor().min(count - 1.0).max(0.0);
    let x0 = -0.5 + m * gen.omega;
    let lx = (x - x0) / gen.omega;
    let ly = (-(y + gen.start) / gen.len).clamp(0.0, 1.0);
    let u_x = -x0 + gen.omega * block.v(lx, ly);
    let xi = gen.omega * block.mu(lx, ly);
    (u_x, xi)
}

fn realize_cascade(
    plan: &ConstructionPlan,
    block: &BuildingBlock,
    grid: &Grid,
    field: &mut DeformationField,
) {
    let p = &plan.params;
    let cascade_bottom: f64 =
        plan.generations.last().map(|g| g.start + g.len).unwrap_or(0.0);
    for j in 0..grid.ny {
        let y = grid.y(j);
        let f = bulk_minimizer(p.tau, p.l, y.clamp(-p.l, 0.0)).unwrap();
        let gen = plan.generations.iter().find(|g| -y <= g.start + g.len).or(
            // rounding guard: with no tail the last generation covers the rest
            if matches!(plan.tail, Tail::None) { plan.generations.last() } else { None },
        );
        for i in 0..grid.nx {
            let x = grid.x(i);
            let k = grid.idx(i, j);
            field.u_y[k] = f;
            match gen {
                Some(g) => {
                    let (ux, xi) = cascade_sample(block, g, x, y);
                    field.u_x[k] = ux;
                    field.xi[k] = xi;
                }
                None => {
                    // below the cascade of a long sheet: flatten then affine
                    let Tail::AffineFlatten { len } = plan.tail else { unreachable!() };
                    let t = (-(y + cascade_bottom) / len).max(0.0);
                    let (g1, g2) = (block.g1(t), block.g2(t));
                    let s8 = (8.0 * PI * x).sin();
                    let s4 = (4.0 * PI * x).sin();
                    field.xi[k] = g1 * s4 / (2.0 * PI) + g2 * std::f64::consts::SQRT_2 * x;
                    field.u_x[k] = -x
                        - g1 * g1 * s8 / (8.0 * PI)
                        - std::f64::consts::SQRT_2 / (2.0 * PI) * g1 * g2 * s4;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn realize_release(
    plan: &ConstructionPlan,
    block: &BuildingBlock,
    grid: &Grid,
    field: &mut DeformationField,
    s_n: f64,
    l_n: f64,
    omega: f64,
    variant: Variant,
) {
    let p = &plan.params;
    // cascade above the release line (generations 1..n-1)
    let upper: Vec<&Generation> =
        plan.generations.iter().filter(|g| g.start + g.len <= s_n + 1e-12).collect();

    for j in 0..grid.ny {
        let y = grid.y(j);
        let f = bulk_minimizer(p.tau, p.l, y.clamp(-p.l, 0.0)).unwrap();
        if -y < s_n - 1e-15 {
            let gen = upper.iter().find(|g| -y <= g.start + g.len).copied();
            for i in 0..grid.nx {
                let x = grid.x(i);
                let k = grid.idx(i, j);
                field.u_y[k] = f;
                if let Some(g) = gen {
                    let (ux, xi) = cascade_sample(block, g, x, y);
                    field.u_x[k] = ux;
                    field.xi[k] = xi;
                }
            }
        } else {
            let t = ((-y - s_n) / l_n).max(0.0);
            let phi = release_envelope(t);
            let dphi = release_envelope_slope(t);
            for i in 0..grid.nx {
                let x = grid.x(i);
                let k = grid.idx(i, j);
                let u_c = -x - omega / (4.0 * PI) * (4.0 * PI * x / omega).sin();
                let xi_c = omega / PI * (2.0 * PI * x / omega).sin();
                field.u_x[k] = phi * phi * u_c;
                field.xi[k] = phi * xi_c;
                field.u_y[k] = match variant {
                    Variant::A => f,
                    Variant::B => {
                        // u_y chosen so the shear integrand vanishes below the
                        // release line: f - ∫₀ˣ (U_x,y + ζ,x ζ,y), in closed form
                        let c4 = (4.0 * PI * x / omega).cos();
                        f + phi * dphi / l_n
                            * (-x * x + omega * omega / (8.0 * PI * PI) * (1.0 - c4))
                    }
                };
            }
        }
    }
}

// ---- predicted excess --------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundBranch {
    /// Cascade: `h√(τL) ln(w0⁻²(hL/√(τL) ∧ 1) + 1)`.
    BoundA,
    /// Release in generation `n`, `u_y = f`: `h√(τL) ln(h lₙ/(w0²√(τL)) + 1) + lₙ⁻¹`.
    Ub3,
    /// Release in generation `n`, shear-free `u_y`: same with `lₙ⁻³`.
    Ub5,
    /// Release from the top, `u_y = f`: `h²w0⁻²l + l⁻¹ + w0²τL l⁻¹`.
    UbSpecial1,
    /// Release from the top, shear-free `u_y`: `h²w0⁻²l + l⁻³ + w0²τL l⁻¹`.
    UbSpecial2,
    /// Propagation: `h² w0⁻² L`.
    PropagateA2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulaInputs {
    pub h: f64,
    pub tau_l: f64,
    pub w0: f64,
    pub l: Option<f64>,
    pub n: Option<usize>,
}

/// A closed-form excess prediction (scaling form, unit prefactor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub branch: BoundBranch,
    pub value: f64,
    pub formula_inputs: FormulaInputs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Evaluates the bound matching the plan's kind. For type II variant B with
/// `lₙ < 1` the `lₙ⁻³` branch is worse than variant A's, so the prediction
/// falls back to the variant A formula and says so in `note`.
pub fn predicted_excess(plan: &ConstructionPlan) -> BoundValue {
    let p = &plan.params;
    let st = p.tau_l().sqrt();
    let inputs = |l: Option<f64>, n: Option<usize>| FormulaInputs {
        h: p.h,
        tau_l: p.tau_l(),
        w0: p.w0,
        l,
        n,
    };
    match plan.kind {
        PlanKind::TypeI => BoundValue {
            branch: BoundBranch::BoundA,
            value: p.h * st * ((p.h * p.l / st).min(1.0) / (p.w0 * p.w0) + 1.0).ln(),
            formula_inputs: inputs(None, None),
            note: None,
        },
        PlanKind::Propagate => BoundValue {
            branch: BoundBranch::PropagateA2,
            value: p.h * p.h * p.l / (p.w0 * p.w0),
            formula_inputs: inputs(None, None),
            note: None,
        },
        PlanKind::TypeII { n, variant } => {
            let l_n = plan.generations[n - 1].len;
            let log_term = p.h * st * (p.h * l_n / (p.w0 * p.w0 * st) + 1.0).ln();
            match variant {
                Variant::A => BoundValue {
                    branch: BoundBranch::Ub3,
                    value: log_term + 1.0 / l_n,
                    formula_inputs: inputs(Some(l_n), Some(n)),
                    note: None,
                },
                Variant::B if l_n >= 1.0 => BoundValue {
                    branch: BoundBranch::Ub5,
                    value: log_term + 1.0 / (l_n * l_n * l_n),
                    formula_inputs: inputs(Some(l_n), Some(n)),
                    note: None,
                },
                Variant::B => BoundValue {
                    branch: BoundBranch::Ub3,
                    value: log_term + 1.0 / l_n,
                    formula_inputs: inputs(Some(l_n), Some(n)),
                    note: Some(format!(
                        "l_n = {l_n} < 1: variant B bound is worse here, using the variant A form"
                    )),
                },
            }
        }
        PlanKind::TypeIII { l, variant } => {
            let base = p.h * p.h * l / (p.w0 * p.w0) + p.w0 * p.w0 * p.tau_l() / l;
            match variant {
                Variant::A => BoundValue {
                    branch: BoundBranch::UbSpecial1,
                    value: base + 1.0 / l,
                    formula_inputs: inputs(Some(l), None),
                    note: None,
                },
                Variant::B => BoundValue {
                    branch: BoundBranch::UbSpecial2,
                    value: base + 1.0 / (l * l * l),
                    formula_inputs: inputs(Some(l), None),
                    note: None,
                },
            }
        }
    }
}
