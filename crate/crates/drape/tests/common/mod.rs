//! Shared helpers for the oracle suites.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use drape::grid::{DeformationField, Grid};
use drape::params::{CanonicalParams, PhysicalParams};

/// Smooth pseudo-random field: a handful of low Fourier modes per component,
/// scaled to the requested amplitude. Deterministic in the seed.
pub fn smooth_random_field(grid: Grid, amplitude: f64, seed: u64) -> DeformationField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut field = DeformationField::zeros(grid);
    {
        let arrays = [&mut field.u_x, &mut field.u_y, &mut field.xi];
        for arr in arrays {
            let modes: Vec<(f64, f64, f64, f64)> = (0..4)
                .map(|_| {
                    (
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(0.5..3.5f64).round(),
                        rng.gen_range(0.5..3.5f64).round(),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect();
            let mut sup = 0.0f64;
            for j in 0..grid.ny {
                let ty = (grid.y(j) + grid.l) / grid.l;
                for i in 0..grid.nx {
                    let tx = grid.x(i) + 0.5;
                    let mut v = 0.0;
                    for &(c, px, qy, ph) in &modes {
                        v += c
                            * (std::f64::consts::TAU * px * tx + ph).sin()
                            * (std::f64::consts::PI * qy * ty).cos();
                    }
                    arr[grid.idx(i, j)] = v;
                    sup = sup.max(v.abs());
                }
            }
            if sup > 0.0 {
                let s = amplitude / sup;
                arr.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    field
}

/// Maps a canonical field to physical coordinates: lengths scale by `2W`,
/// in-plane displacement additionally by `Δ`, out-of-plane by `√Δ`.
/// The physical energy then equals `(2W)²Δ²` times the canonical energy.
pub fn to_physical(canonical: &DeformationField, w: f64, delta: f64) -> DeformationField {
    let g = canonical.grid;
    let two_w = 2.0 * w;
    let phys_grid = Grid::new(g.nx, g.ny, two_w * g.l).unwrap();
    let mut out = DeformationField::zeros(phys_grid);
    for k in 0..g.n_nodes() {
        out.u_x[k] = two_w * delta * canonical.u_x[k];
        out.u_y[k] = two_w * delta * canonical.u_y[k];
        out.xi[k] = two_w * delta.sqrt() * canonical.xi[k];
    }
    out
}

/// Physical parameter set whose canonicalization is exactly `c`.
pub fn physicalize(c: &CanonicalParams, w: f64, delta: f64) -> PhysicalParams {
    let two_w = 2.0 * w;
    PhysicalParams {
        h: two_w * delta.sqrt() * c.h,
        w,
        l: two_w * c.l,
        tau: delta * c.tau / two_w,
        w0: two_w * c.w0,
        delta,
    }
}
