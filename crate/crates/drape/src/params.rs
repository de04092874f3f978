//! Parameter model, hypothesis checks, and the two exact rescalings that
//! reduce the problem to half-width 1/2 and unit confinement.
//!
//! Physical inputs live on the domain `[-W,W] x [-L,0]` and carry a
//! confinement factor `Delta`. Canonical parameters are what every other
//! module consumes: `W = 1/2`, `Delta = 1`, with the energy conversion
//! factor recorded in [`ScaleRecord`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound for the wrinkle period relative to the sheet width
/// (`w0 <= 2 * CW * W`). The model only makes sense when the imposed period
/// is much smaller than the width; 0.05 keeps that true for all shipped
/// examples. Configurable via the `*_with_cw` variants.
pub const DEFAULT_CW: f64 = 0.05;

/// Relative tolerance for the "width is an integer number of periods" check,
/// loose enough to admit floating-point parameter generation.
pub const PERIOD_MULTIPLE_RTOL: f64 = 1e-9;

/// Full physical parameter set.
///
/// Serializes to a flat JSON object with exactly these keys:
/// `h`, `W`, `L`, `tau`, `w0`, `Delta`. Unknown keys are rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams {
    /// Sheet thickness.
    pub h: f64,
    /// Half-width; the domain is `[-W, W]`.
    #[serde(rename = "W")]
    pub w: f64,
    /// Sheet length (the domain is `[-W,W] x [-L,0]`).
    #[serde(rename = "L")]
    pub l: f64,
    /// Gravity / Young-modulus ratio, dimension 1/length.
    pub tau: f64,
    /// Wrinkle period imposed along the top edge.
    pub w0: f64,
    /// Horizontal compression factor imposed at the top, in `(0, 1]`.
    #[serde(rename = "Delta")]
    pub delta: f64,
}

/// Parameters after both rescalings: half-width 1/2, `Delta = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CanonicalParams {
    pub h: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub tau: f64,
    pub w0: f64,
}

/// Conversion record produced by [`canonicalize`]: canonical lengths are
/// physical lengths divided by `length_scale`, and physical energy equals
/// `energy_factor` times canonical energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    /// `2W`.
    pub length_scale: f64,
    /// `(2W)^2 * Delta^2`.
    pub energy_factor: f64,
}

/// A violated hypothesis, with the offending values. Violations are data,
/// not faults: sweeps skip infeasible points and log these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    NonPositive { field: String, value: f64 },
    DeltaOutOfRange { delta: f64 },
    TauLTooSmall { tau_l: f64 },
    ThicknessExceedsPeriod { h_eff: f64, w0: f64 },
    PeriodTooWide { w0: f64, max: f64 },
    WidthNotPeriodMultiple { ratio: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonPositive { field, value } => {
                write!(f, "{field} = {value} must be strictly positive")
            }
            Violation::DeltaOutOfRange { delta } => {
                write!(f, "Delta = {delta} outside (0, 1]")
            }
            Violation::TauLTooSmall { tau_l } => write!(f, "tau*L = {tau_l} < 4"),
            Violation::ThicknessExceedsPeriod { h_eff, w0 } => {
                write!(f, "h*Delta^(-1/2) = {h_eff} > w0 = {w0}")
            }
            Violation::PeriodTooWide { w0, max } => {
                write!(f, "w0 = {w0} > {max} (period must stay well below the width)")
            }
            Violation::WidthNotPeriodMultiple { ratio } => {
                write!(f, "W/w0 = {ratio} is not a positive integer")
            }
        }
    }
}

fn check_positive(out: &mut Vec<Violation>, field: &str, value: f64) {
    if !(value > 0.0) || !value.is_finite() {
        out.push(Violation::NonPositive { field: field.to_string(), value });
    }
}

impl PhysicalParams {
    /// Checks every hypothesis and returns the full violation list
    /// (empty means the point is admissible). Uses [`DEFAULT_CW`].
    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with_cw(DEFAULT_CW)
    }

    /// Same as [`validate`](Self::validate) with an explicit `c_w`.
    pub fn validate_with_cw(&self, cw: f64) -> Vec<Violation> {
        let mut v = Vec::new();
        check_positive(&mut v, "h", self.h);
        check_positive(&mut v, "W", self.w);
        check_positive(&mut v, "L", self.l);
        check_positive(&mut v, "tau", self.tau);
        check_positive(&mut v, "w0", self.w0);
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            v.push(Violation::DeltaOutOfRange { delta: self.delta });
        }
        if !v.is_empty() {
            // Derived checks below divide by these fields.
            return v;
        }

        let tau_l = self.tau * self.l;
        if tau_l < 4.0 {
            v.push(Violation::TauLTooSmall { tau_l });
        }
        let h_eff = self.h / self.delta.sqrt();
        if h_eff > self.w0 {
            v.push(Violation::ThicknessExceedsPeriod { h_eff, w0: self.w0 });
        }
        let w0_max = 2.0 * cw * self.w;
        if self.w0 > w0_max {
            v.push(Violation::PeriodTooWide { w0: self.w0, max: w0_max });
        }
        let ratio = self.w / self.w0;
        if (ratio - ratio.round()).abs() > PERIOD_MULTIPLE_RTOL * ratio.max(1.0)
            || ratio.round() < 1.0
        {
            v.push(Violation::WidthNotPeriodMultiple { ratio });
        }
        v
    }

    /// Dimensionless groups of the point, computed on its canonical form
    /// (for `Delta = 1` this coincides with the raw formulas).
    pub fn dimensionless_groups(&self) -> Result<Groups> {
        let (c, _) = canonicalize(self)?;
        Ok(dimensionless_groups(&c))
    }
}

impl CanonicalParams {
    pub fn validate(&self) -> Vec<Violation> {
        self.validate_with_cw(DEFAULT_CW)
    }

    /// Rescaled hypotheses: `tau*L >= 4` and `h <= w0 <= c_w`.
    pub fn validate_with_cw(&self, cw: f64) -> Vec<Violation> {
        self.as_physical().validate_with_cw(cw)
    }

    /// View as physical parameters with `W = 1/2`, `Delta = 1`.
    pub fn as_physical(&self) -> PhysicalParams {
        PhysicalParams {
            h: self.h,
            w: 0.5,
            l: self.l,
            tau: self.tau,
            w0: self.w0,
            delta: 1.0,
        }
    }

    pub fn tau_l(&self) -> f64 {
        self.tau * self.l
    }
}

/// The two exact rescalings, composed: lengths divided by `2W`, then the
/// confinement factor eliminated. Physical energy = `energy_factor` times
/// canonical energy, exactly.
///
/// Fails when [`PhysicalParams::validate`] reports violations.
pub fn canonicalize(p: &PhysicalParams) -> Result<(CanonicalParams, ScaleRecord)> {
    canonicalize_with_cw(p, DEFAULT_CW)
}

pub fn canonicalize_with_cw(p: &PhysicalParams, cw: f64) -> Result<(CanonicalParams, ScaleRecord)> {
    let violations = p.validate_with_cw(cw);
    if !violations.is_empty() {
        return Err(Error::InvalidParams(violations));
    }
    let two_w = 2.0 * p.w;
    let c = CanonicalParams {
        h: p.h / p.delta.sqrt() / two_w,
        l: p.l / two_w,
        tau: two_w * p.tau / p.delta,
        w0: p.w0 / two_w,
    };
    let record = ScaleRecord {
        length_scale: two_w,
        energy_factor: two_w * two_w * p.delta * p.delta,
    };
    Ok((c, record))
}

/// The two dimensionless groups controlling the phase diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Groups {
    /// `h L / (w0^2 sqrt(tau L))` — coarsening-room parameter.
    pub alpha: f64,
    /// `(w0 / L) sqrt(tau L)`.
    pub beta: f64,
}

pub fn dimensionless_groups(p: &CanonicalParams) -> Groups {
    let st = p.tau_l().sqrt();
    Groups {
        alpha: p.h * p.l / (p.w0 * p.w0 * st),
        beta: p.w0 / p.l * st,
    }
}
