//! The closed-form excess-energy law, its phase classification, parameter
//! sweeps, and log–log slope fits.
//!
//! The excess of a confined sheet is `h√(τL) log(w0⁻²(hL/√(τL) ∧ 4W²) + 1)`;
//! releasing the confinement over a height `l` instead costs a shorter log
//! term plus `w0²τL/l` (amplitude decay) plus `WΔ min(W/l, (W/l)³)`
//! (spreading). The law takes `WΔ` times the cheaper branch; the release
//! height is minimized by a dense logarithmic scan refined by golden-section
//! search. Natural logarithms throughout — the base only moves the unknowable
//! universal prefactors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{canonicalize, dimensionless_groups, CanonicalParams, PhysicalParams, Violation};

/// `(1+√5)/2`: `F(t) = log(t+1) + 1/t` is decreasing below this value, so a
/// release can only beat confinement when `α` exceeds it.
pub const RELEASE_ALPHA_THRESHOLD: f64 = 1.618033988749895;

const L_SCAN_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Confined,
    Released,
}

/// Necessary-condition classifier on `α` alone: `ConfinedOnly` means no
/// release height can win; `ReleaseCandidate` means a release *may* win,
/// not that it does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaClass {
    ConfinedOnly,
    ReleaseCandidate,
}

pub fn classify(alpha: f64) -> AlphaClass {
    if alpha < RELEASE_ALPHA_THRESHOLD {
        AlphaClass::ConfinedOnly
    } else {
        AlphaClass::ReleaseCandidate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchValues {
    /// Excess of the confined (coarsening) branch, `WΔ` factor included.
    pub confined: f64,
    /// Excess of the release branch at its best height, `WΔ` factor included.
    pub released: f64,
    /// The minimizing release height.
    pub l_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub params: PhysicalParams,
    pub canonical: CanonicalParams,
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub branches: BranchValues,
    pub phase: Phase,
}

fn scan_then_golden(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    // dense log-spaced scan guards against multimodality, golden-section
    // refinement sharpens the best bracket; never returns above the best
    // scan sample
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    let mut xs = Vec::with_capacity(n);
    let mut x = lo;
    for i in 0..n {
        xs.push(x);
        let v = f(x);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
        x *= ratio;
    }
    let a = xs[best_i.saturating_sub(1)];
    let b = xs[(best_i + 1).min(n - 1)];
    let (gx, gv) = golden_min(&f, a, b, 200);
    if gv < best_v {
        (gx, gv)
    } else {
        (xs[best_i], best_v)
    }
}

/// Golden-section search for the minimum of `f` on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, max_iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618033988749895;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..max_iters {
        if (b - a).abs() <= 1e-14 * (a.abs() + b.abs()) {
            break;
        }
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Evaluates the excess-energy law at a physical point.
pub fn epsilon(p: &PhysicalParams) -> Result<ScalingPoint> {
    let violations = p.validate();
    if !violations.is_empty() {
        return Err(Error::InvalidParams(violations));
    }
    let (canonical, _) = canonicalize(p)?;
    let g = dimensionless_groups(&canonical);

    let st = (p.tau * p.l).sqrt();
    let wd = p.w * p.delta;
    let confined_inner =
        p.h * st * ((p.h * p.l / st).min(4.0 * p.w * p.w) / (p.w0 * p.w0) + 1.0).ln();

    let released_inner = |l: f64| {
        let spread = p.w / l;
        p.h * st * (p.h * l / (p.w0 * p.w0 * st) + 1.0).ln()
            + p.w0 * p.w0 * p.tau * p.l / l
            + wd * spread.min(spread * spread * spread)
    };
    let (l_star, released_min) = scan_then_golden(released_inner, 1e-6 * p.l, p.l, L_SCAN_POINTS);

    let branches = BranchValues {
        confined: wd * confined_inner,
        released: wd * released_min,
        l_star,
    };
    let (eps, phase) = if confined_inner <= released_min {
        (wd * confined_inner, Phase::Confined)
    } else {
        (wd * released_min, Phase::Released)
    };
    Ok(ScalingPoint {
        params: *p,
        canonical,
        alpha: g.alpha,
        beta: g.beta,
        eps,
        branches,
        phase,
    })
}

/// The per-area form of the law, `ε/(LWΔ)`, in `(α, β)` variables with the
/// release height expressed as `r = l/L`. This form drops the `∧ 4W²` cap of
/// the full law, which is only valid when the sheet is not extremely long
/// (`α ≤ (2W/w0)²`); that condition involves `w0` and so rests with the
/// caller.
pub fn avg_excess(alpha: f64, beta: f64, w: f64, l: f64, delta: f64) -> Result<f64> {
    avg_excess_detail(alpha, beta, w, l, delta).map(|(v, _)| v)
}

/// As [`avg_excess`], also returning the minimizing `r = l/L`.
pub fn avg_excess_detail(
    alpha: f64,
    beta: f64,
    w: f64,
    l: f64,
    delta: f64,
) -> Result<(f64, f64)> {
    if !(alpha >= 0.0 && beta > 0.0 && w > 0.0 && l > 0.0 && delta > 0.0) {
        return Err(Error::Precondition(format!(
            "need alpha >= 0 and beta, W, L, Delta > 0; got ({alpha}, {beta}, {w}, {l}, {delta})"
        )));
    }
    let ab2 = alpha * beta * beta;
    let confined = ab2 * (alpha + 1.0).ln();
    if alpha == 0.0 {
        return Ok((0.0, 1.0));
    }
    let released = |r: f64| {
        let t = alpha * r;
        let spread = w / (l * r);
        ab2 * ((t + 1.0).ln() + 1.0 / t) + (w / l) * delta * spread.min(spread.powi(3))
    };
    let (r_star, released_min) = scan_then_golden(released, 1e-8, 1.0, L_SCAN_POINTS);
    if confined <= released_min {
        Ok((confined, r_star))
    } else {
        Ok((released_min, r_star))
    }
}

/// One axis of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRange {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    #[serde(default)]
    pub log_spaced: bool,
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        (0..self.count)
            .map(|i| {
                let t = i as f64 / (self.count - 1) as f64;
                if self.log_spaced {
                    self.min * (self.max / self.min).powf(t)
                } else {
                    self.min + (self.max - self.min) * t
                }
            })
            .collect()
    }
}

/// Which physical field a sweep axis varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepField {
    H,
    W,
    L,
    Tau,
    W0,
    Delta,
}

fn with_field(mut p: PhysicalParams, f: SweepField, v: f64) -> PhysicalParams {
    match f {
        SweepField::H => p.h = v,
        SweepField::W => p.w = v,
        SweepField::L => p.l = v,
        SweepField::Tau => p.tau = v,
        SweepField::W0 => p.w0 = v,
        SweepField::Delta => p.delta = v,
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: PhysicalParams,
    pub axes: Vec<(SweepField, SweepRange)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkippedPoint {
    pub params: PhysicalParams,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub points: Vec<ScalingPoint>,
    pub skipped: Vec<SkippedPoint>,
}

/// Cartesian-product sweep over the axes, in deterministic order (first axis
/// outermost). Inadmissible points are recorded with their violations rather
/// than failing the sweep.
pub fn sweep(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.axes.is_empty() {
        return Err(Error::Precondition("sweep needs at least one axis".into()));
    }
    let mut grids: Vec<Vec<f64>> = Vec::new();
    for (_, r) in &spec.axes {
        if r.count == 0 {
            return Err(Error::Precondition("sweep axis with zero points".into()));
        }
        grids.push(r.values());
    }
    let total: usize = grids.iter().map(Vec::len).product();
    let mut param_list = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut p = spec.base;
        for (ai, (field, _)) in spec.axes.iter().enumerate().rev() {
            let vals = &grids[ai];
            p = with_field(p, *field, vals[rem % vals.len()]);
            rem /= vals.len();
        }
        param_list.push(p);
    }

    let evaluated: Vec<std::result::Result<ScalingPoint, SkippedPoint>> = param_list
        .par_iter()
        .map(|p| {
            let violations = p.validate();
            if violations.is_empty() {
                epsilon(p).map_err(|_| SkippedPoint { params: *p, violations: Vec::new() })
            } else {
                Err(SkippedPoint { params: *p, violations })
            }
        })
        .collect();

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for e in evaluated {
        match e {
            Ok(pt) => points.push(pt),
            Err(sk) => skipped.push(sk),
        }
    }
    Ok(SweepResult { points, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub exponent: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 4 {
        return Err(Error::DegenerateFit(format!("need >= 4 points, got {}", points.len())));
    }
    for &(x, y) in points {
        if !(x > 0.0 && y > 0.0) {
            return Err(Error::DegenerateFit(format!("nonpositive point ({x}, {y})")));
        }
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx <= 1e-24 * mx.abs().max(1.0) {
        return Err(Error::DegenerateFit("x-range is degenerate".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(SlopeFit { exponent: slope, r2, n_points: points.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> PhysicalParams {
        PhysicalParams { h: 0.001, w: 0.5, l: 1.0, tau: 4.0, w0: 0.01, delta: 1.0 }
    }

    #[test]
    fn classify_threshold() {
        assert_eq!(classify(1.0), AlphaClass::ConfinedOnly);
        assert_eq!(classify(100.0), AlphaClass::ReleaseCandidate);
        assert_eq!(classify(RELEASE_ALPHA_THRESHOLD), AlphaClass::ReleaseCandidate);
        assert_relative_eq!(RELEASE_ALPHA_THRESHOLD, (1.0 + 5.0f64.sqrt()) / 2.0);
    }

    #[test]
    fn epsilon_reference_point() {
        // confined inner value 0.002 ln 6, W-term keeps the release branch out
        let pt = epsilon(&reference()).unwrap();
        assert_relative_eq!(pt.branches.confined, 0.5 * 0.002 * 6.0f64.ln(), max_relative = 1e-12);
        assert_eq!(pt.phase, Phase::Confined);
        assert_relative_eq!(pt.eps, 0.0017917594692280554, max_relative = 1e-9);
        assert_relative_eq!(pt.alpha, 5.0, max_relative = 1e-12);
        // frozen scan value for the released branch at this point
        assert_relative_eq!(pt.branches.released, 0.5 * 0.066483518938, max_relative = 1e-6);
    }

    #[test]
    fn epsilon_released_point() {
        // long, light sheet: spreading wins (values frozen from a 1e4-point
        // scan oracle)
        let p = PhysicalParams { h: 0.004, w: 0.5, l: 8.0, tau: 1.0, w0: 0.01, delta: 1.0 };
        let pt = epsilon(&p).unwrap();
        assert_eq!(pt.phase, Phase::Released);
        assert_relative_eq!(pt.eps, 0.0224747123387786, max_relative = 1e-6);
        assert_relative_eq!(pt.branches.l_star, 2.596935860160213, max_relative = 1e-4);
        assert!(pt.branches.l_star > 0.0 && pt.branches.l_star < p.l);
    }

    #[test]
    fn epsilon_vanishes_with_h() {
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let p = PhysicalParams { h: 1e-3 / k as f64, ..reference() };
            let eps = epsilon(&p).unwrap().eps;
            assert!(eps < prev);
            prev = eps;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn spreading_term_crossover_at_l_equals_w() {
        // min(W/l, (W/l)^3) switches branch at l = W
        let p = reference();
        let spread = |l: f64| {
            let t = p.w / l;
            t.min(t * t * t)
        };
        assert_eq!(spread(p.w), 1.0);
        // below the crossover the linear branch is active, above it the cubic
        assert_eq!(spread(0.5 * p.w), 2.0);
        assert_relative_eq!(spread(2.0 * p.w), 0.125);
    }

    #[test]
    fn avg_excess_matches_epsilon() {
        for p in [
            reference(),
            PhysicalParams { h: 0.0005, ..reference() },
            PhysicalParams { h: 0.004, w: 0.5, l: 8.0, tau: 1.0, w0: 0.01, delta: 1.0 },
        ] {
            let pt = epsilon(&p).unwrap();
            let avg = avg_excess(pt.alpha, pt.beta, p.w, p.l, p.delta).unwrap();
            assert_relative_eq!(avg, pt.eps / (p.l * p.w * p.delta), max_relative = 1e-6);
        }
    }

    #[test]
    fn confined_only_alpha_forces_confined_phase() {
        // beta sweep at fixed small alpha
        for ib in 1..=10 {
            let beta: f64 = 0.01 * ib as f64;
            let w0 = beta / 2.0; // L = 1, tau = 4
            let alpha = 1.2f64;
            let h = alpha * w0 * w0 * 2.0;
            let k = (0.5 / w0).round();
            let p = PhysicalParams { h, w: k * w0, l: 1.0, tau: 4.0, w0, delta: 1.0 };
            if !p.validate().is_empty() {
                continue;
            }
            let pt = epsilon(&p).unwrap();
            assert_eq!(classify(pt.alpha), AlphaClass::ConfinedOnly);
            assert_eq!(pt.phase, Phase::Confined);
        }
    }

    #[test]
    fn sweep_enumerates_and_skips() {
        let spec = SweepSpec {
            base: reference(),
            axes: vec![(
                SweepField::H,
                SweepRange { min: 0.0005, max: 0.002, count: 8, log_spaced: true },
            )],
        };
        let out = sweep(&spec).unwrap();
        assert_eq!(out.points.len(), 8);
        assert!(out.skipped.is_empty());
        // h above w0 violates the thickness hypothesis and is skipped
        let spec2 = SweepSpec {
            base: reference(),
            axes: vec![(
                SweepField::H,
                SweepRange { min: 0.02, max: 0.08, count: 3, log_spaced: true },
            )],
        };
        let out2 = sweep(&spec2).unwrap();
        assert_eq!(out2.points.len(), 0);
        assert_eq!(out2.skipped.len(), 3);
        assert!(!out2.skipped[0].violations.is_empty());
        // tau*L < 4 skip reason is recorded
        let spec3 = SweepSpec {
            base: reference(),
            axes: vec![(
                SweepField::Tau,
                SweepRange { min: 1.0, max: 8.0, count: 4, log_spaced: false },
            )],
        };
        let out3 = sweep(&spec3).unwrap();
        assert!(out3
            .skipped
            .iter()
            .flat_map(|s| &s.violations)
            .any(|v| matches!(v, Violation::TauLTooSmall { .. })));
    }

    #[test]
    fn fit_slope_exact_power_laws() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|k| (k as f64, 3.0 * k as f64)).collect();
        let fit = fit_slope(&pts).unwrap();
        assert_relative_eq!(fit.exponent, 1.0, max_relative = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, max_relative = 1e-12);
        let pts3: Vec<(f64, f64)> = (1..=8).map(|k| (k as f64, 0.5 * (k as f64).powi(3))).collect();
        assert_relative_eq!(fit_slope(&pts3).unwrap().exponent, 3.0, max_relative = 1e-12);
        assert!(fit_slope(&pts[..3]).is_err());
        let degenerate: Vec<(f64, f64)> = (0..5).map(|_| (2.0, 3.0)).collect();
        assert!(fit_slope(&degenerate).is_err());
    }

    #[test]
    fn epsilon_monotone_in_h() {
        let mut prev = 0.0;
        for k in 1..=10 {
            let p = PhysicalParams { h: 1e-4 * k as f64, ..reference() };
            let eps = epsilon(&p).unwrap().eps;
            assert!(eps >= prev);
            prev = eps;
        }
    }
}
