//! Oracle checks for the discrete energy: finite-difference gradients,
//! quadrature convergence order, the exact rescaling identity, and the
//! excess-energy inequalities.

mod common;

use approx::{assert_abs_diff_eq, assert_relative_eq};

use common::{physicalize, smooth_random_field, to_physical};
use drape::energy::{
    boundary_profile, bulk_minimizer, fvk_energy, fvk_energy_physical, fvk_gradient,
};
use drape::grid::{DeformationField, Grid};
use drape::params::CanonicalParams;

fn canon() -> CanonicalParams {
    CanonicalParams { h: 0.02, l: 1.0, tau: 4.0, w0: 0.1 }
}

/// Central finite difference of the full energy with respect to one node.
fn fd_gradient(field: &DeformationField, p: &CanonicalParams, eps: f64) -> [Vec<f64>; 3] {
    let n = field.grid.n_nodes();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (c, res) in out.iter_mut().enumerate() {
        for k in 0..n {
            let mut fp = field.clone();
            let mut fm = field.clone();
            {
                let (ap, am) = match c {
                    0 => (&mut fp.u_x, &mut fm.u_x),
                    1 => (&mut fp.u_y, &mut fm.u_y),
                    _ => (&mut fp.xi, &mut fm.xi),
                };
                ap[k] += eps;
                am[k] -= eps;
            }
            let ep = fvk_energy(&fp, p).unwrap().total;
            let em = fvk_energy(&fm, p).unwrap().total;
            res[k] = (ep - em) / (2.0 * eps);
        }
    }
    out
}

#[test]
fn gradient_matches_finite_differences_on_random_fields() {
    let p = canon();
    let grid = Grid::new(13, 11, 1.0).unwrap();
    for seed in 0..4u64 {
        let field = smooth_random_field(grid, 1e-2, seed);
        let g = fvk_gradient(&field, &p, None).unwrap();
        let fd = fd_gradient(&field, &p, 1e-6);
        let sup = fd.iter().flat_map(|a| a.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup > 0.0);
        let mut worst = 0.0f64;
        for (ga, fa) in [&g.u_x, &g.u_y, &g.xi].into_iter().zip(&fd) {
            for (a, b) in ga.iter().zip(fa) {
                worst = worst.max((a - b).abs() / sup);
            }
        }
        assert!(worst <= 1e-6, "seed {seed}: max relative gradient error {worst:.3e}");
    }
}

#[test]
fn bulk_state_gradient_vanishes_in_the_interior() {
    // u_y = f solves the discrete bulk problem away from the free bottom edge
    let p = canon();
    let grid = Grid::new(9, 129, 1.0).unwrap();
    let mut field = DeformationField::zeros(grid);
    for j in 0..grid.ny {
        let v = bulk_minimizer(p.tau, p.l, grid.y(j)).unwrap();
        for i in 0..grid.nx {
            field.u_y[grid.idx(i, j)] = v;
        }
    }
    let g = fvk_gradient(&field, &p, None).unwrap();
    let mut sup_interior = 0.0f64;
    for j in 2..grid.ny - 2 {
        for i in 0..grid.nx {
            sup_interior = sup_interior.max(g.u_y[grid.idx(i, j)].abs());
        }
    }
    // the Euler–Lagrange residual of the sampled continuum minimizer is pure
    // quadrature error
    assert!(sup_interior < 1e-10, "interior residual {sup_interior:.3e}");
}

#[test]
fn quadrature_error_is_second_order() {
    let p = canon();
    let exact_field = |grid: Grid| {
        let mut f = DeformationField::zeros(grid);
        for j in 0..grid.ny {
            let y = grid.y(j);
            let t = y / grid.l;
            for i in 0..grid.nx {
                let x = grid.x(i);
                let k = grid.idx(i, j);
                f.u_x[k] = 0.01 * (2.0 * std::f64::consts::PI * x + 0.3).sin() * (1.0 + 0.5 * t + t * t);
                f.u_y[k] = 0.02 * (t * t + 2.0 * t) + 0.005 * (std::f64::consts::PI * x).cos() * t;
                f.xi[k] = 0.05
                    * (2.0 * std::f64::consts::PI * x + 0.7).cos()
                    * (0.4 + t + 0.3 * t * t);
            }
        }
        f
    };
    let eval = |n: usize| {
        let grid = Grid::new(n + 1, n + 1, 1.0).unwrap();
        fvk_energy(&exact_field(grid), &p).unwrap()
    };
    let reference = eval(1024);
    let sizes = [24usize, 48, 96, 192];
    let coarse: Vec<_> = sizes.iter().map(|&n| eval(n)).collect();
    for (name, pick) in [
        ("e_xx", (|e: &drape::energy::EnergyBreakdown| e.e_xx) as fn(_) -> f64),
        ("e_shear", |e| e.e_shear),
        ("e_yy", |e| e.e_yy),
        ("bending", |e| e.bending),
        ("gravity", |e| e.gravity),
    ] {
        let pts: Vec<(f64, f64)> = sizes
            .iter()
            .zip(&coarse)
            .map(|(&n, e)| (1.0 / n as f64, (pick(e) - pick(&reference)).abs()))
            .collect();
        assert!(pts.iter().all(|&(_, err)| err > 0.0), "{name}: error underflow");
        let fit = drape::scaling::fit_slope(&pts).unwrap();
        assert!(
            (1.6..=2.7).contains(&fit.exponent),
            "{name}: quadrature error order {:.2} (want ~2)",
            fit.exponent
        );
    }
}

#[test]
fn translation_by_one_period_is_exact() {
    let p = CanonicalParams { w0: 0.125, ..canon() };
    let grid = Grid::new(41, 21, 1.0).unwrap(); // dx = 1/40, w0 = 5 dx
    let period: usize = 5;
    // sample through an index-periodic table so the discrete field really is
    // periodic bit for bit (sin() at arguments 2π apart rounds differently)
    let table: Vec<(f64, f64)> = (0..period)
        .map(|r| {
            let ph = std::f64::consts::TAU * r as f64 / period as f64;
            (ph.sin(), (ph + 0.4).cos())
        })
        .collect();
    let mut field = DeformationField::zeros(grid);
    for j in 0..grid.ny {
        let env = 1.0 + 0.3 * (grid.y(j) / grid.l);
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            let (s, c) = table[i % period];
            field.u_x[k] = 0.01 * s * env;
            field.u_y[k] = 0.02 * env;
            field.xi[k] = 0.03 * c * env;
        }
    }
    // shift by one full period: the sampled arrays reproduce themselves
    let shift = |arr: &[f64], m: usize| -> Vec<f64> {
        let mut out = vec![0.0; arr.len()];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                // x - m*dx, wrapped by periodicity (node nx-1 duplicates node 0)
                let src = (i + (grid.nx - 1) - m) % (grid.nx - 1);
                out[grid.idx(i, j)] = arr[grid.idx(src, j)];
            }
        }
        out
    };
    let shifted = DeformationField::from_parts(
        grid,
        shift(&field.u_x, period),
        shift(&field.u_y, period),
        shift(&field.xi, period),
    )
    .unwrap();
    assert_eq!(field, shifted);
    let (a, b) = (fvk_energy(&field, &p).unwrap(), fvk_energy(&shifted, &p).unwrap());
    assert_eq!(a.total.to_bits(), b.total.to_bits());

    // a fractional-period shift changes which samples sit on the one-sided
    // edge stencils; the energy only agrees to edge-quadrature accuracy
    let half = DeformationField::from_parts(
        grid,
        shift(&field.u_x, 2),
        shift(&field.u_y, 2),
        shift(&field.xi, 2),
    )
    .unwrap();
    let c = fvk_energy(&half, &p).unwrap();
    assert_relative_eq!(a.total, c.total, max_relative = 2e-2);
}

#[test]
fn rescaling_identity_to_machine_precision() {
    let c = CanonicalParams { h: 0.015, l: 1.25, tau: 4.0, w0: 0.125 };
    let grid = Grid::new(33, 41, c.l).unwrap();
    let field = smooth_random_field(grid, 2e-2, 11);
    let e_canon = fvk_energy(&field, &c).unwrap();
    for (w, delta) in [(0.5, 1.0), (1.0, 1.0), (0.5, 0.25), (0.75, 1.0), (1.5, 0.8)] {
        let p = physicalize(&c, w, delta);
        let phys = to_physical(&field, w, delta);
        let e_phys = fvk_energy_physical(&phys, &p).unwrap();
        let factor = (2.0 * w) * (2.0 * w) * delta * delta;
        // terms that vanish by symmetry carry only rounding dust, so scale
        // the comparison by the overall energy magnitude as well
        let scale = e_phys.total.abs().max(factor * e_canon.total.abs());
        for (name, a, b) in [
            ("e_xx", e_phys.e_xx, factor * e_canon.e_xx),
            ("e_shear", e_phys.e_shear, factor * e_canon.e_shear),
            ("e_yy", e_phys.e_yy, factor * e_canon.e_yy),
            ("bending", e_phys.bending, factor * e_canon.bending),
            ("gravity", e_phys.gravity, factor * e_canon.gravity),
            ("total", e_phys.total, factor * e_canon.total),
            ("excess", e_phys.excess, factor * e_canon.excess),
        ] {
            let denom = a.abs().max(b.abs()).max(scale);
            assert!(
                (a - b).abs() / denom <= 1e-12,
                "W={w}, Delta={delta}, {name}: {a} vs {b}"
            );
        }
    }
}

#[test]
fn boundary_profile_bending_density_converges() {
    // the clamped profile propagated down the sheet: bending per unit height
    // tends to 8π² h² Δ / w0² times the width (Δ = 1, width 1 here)
    let p = CanonicalParams { h: 0.005, l: 1.0, tau: 4.0, w0: 0.05 };
    let expected = 8.0 * std::f64::consts::PI.powi(2) * p.h * p.h / (p.w0 * p.w0);
    assert_relative_eq!(expected, 0.78957, max_relative = 1e-4);
    let mut errors = Vec::new();
    for nodes_per_period in [8usize, 16, 32] {
        let nx = nodes_per_period * 20 + 1;
        let grid = Grid::new(nx, 17, p.l).unwrap();
        let b = boundary_profile(&p, nx);
        let mut field = DeformationField::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k = grid.idx(i, j);
                field.u_x[k] = b.u_x[i];
                field.xi[k] = b.xi[i];
            }
        }
        let e = fvk_energy(&field, &p).unwrap();
        errors.push((e.bending / p.l - expected).abs() / expected);
    }
    assert!(errors[2] < 0.01, "bending density off by {:.3}%", errors[2] * 100.0);
    assert!(errors[0] > errors[1] && errors[1] > errors[2]);
    let rate = (errors[0] / errors[2]).log2() / 2.0;
    assert!(rate > 1.5, "stencil convergence rate {rate:.2}");
}

#[test]
fn excess_inequalities_on_boundary_respecting_fields() {
    // nonnegativity of the excess, and the membrane/bending part bounded by
    // it, for fields that satisfy the clamped-edge profile
    let p = CanonicalParams { h: 0.01, l: 1.0, tau: 4.0, w0: 1.0 / 18.0 };
    let grid = Grid::new(181, 97, 1.0).unwrap();
    let profile = boundary_profile(&p, grid.nx);
    let tol = 1e-9 * (4.0 / 3.0);

    let mut candidates = Vec::new();
    // propagated profile
    let plan = drape::constructions::plan_propagate(&p).unwrap();
    candidates.push(drape::constructions::realize(&plan, drape::constructions::default_block(), &grid).unwrap());
    // cascade
    let plan = drape::constructions::plan_type1(&p).unwrap();
    candidates.push(drape::constructions::realize(&plan, drape::constructions::default_block(), &grid).unwrap());
    // bulk state with the pinned profile on top
    let mut bulk = DeformationField::zeros(grid);
    for j in 0..grid.ny {
        let v = bulk_minimizer(p.tau, p.l, grid.y(j)).unwrap();
        for i in 0..grid.nx {
            bulk.u_y[grid.idx(i, j)] = v;
        }
    }
    bulk.set_top_row(&profile.u_x, &profile.u_y, &profile.xi);
    candidates.push(bulk);

    for (k, field) in candidates.iter().enumerate() {
        let e = fvk_energy(field, &p).unwrap();
        assert!(e.excess >= -tol, "field {k}: excess {}", e.excess);
        let parts = e.e_xx + e.e_shear + e.bending;
        assert!(
            parts <= e.excess + tol,
            "field {k}: membrane+bending {parts} exceeds excess {}",
            e.excess
        );
    }
}
