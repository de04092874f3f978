// scratch: measure construction excess vs predicted bounds across the sweep range
use drape::constructions::*;
use drape::energy::fvk_energy;
use drape::grid::Grid;
use drape::params::CanonicalParams;

fn main() {
    let block = default_block();
    println!("E_m={} E_b={} mu_y_sup={}", block.e_m, block.e_b, block.mu_y_sup);
    let w0 = 1.0 / 54.0;
    let grid = Grid::new(12 * 54 + 1, 161, 1.0).unwrap();
    for h in [0.0024, 0.005, 0.0105, 0.0165] {
        let p = CanonicalParams { h, l: 1.0, tau: 4.0, w0 };
        for (name, plan) in [
            ("type1", plan_type1(&p).unwrap()),
            ("type2A", plan_type2(&p, 1, Variant::A).unwrap()),
            ("type2B", plan_type2(&p, 1, Variant::B).unwrap()),
            ("type3A", plan_type3(&p, 0.3, Variant::A).unwrap()),
            ("type3B", plan_type3(&p, 0.3, Variant::B).unwrap()),
            ("prop", plan_propagate(&p).unwrap()),
        ] {
            let f = realize(&plan, block, &grid).unwrap();
            let e = fvk_energy(&f, &p).unwrap();
            let b = predicted_excess(&plan);
            println!(
                "h={h:.4} {name:7} branch={:?} measured={:.5} predicted={:.5} ratio={:.2}",
                b.branch, e.excess, b.value, e.excess / b.value
            );
        }
    }
    // propagate at small h (true propagate regime)
    let p = CanonicalParams { h: 1e-4, l: 1.0, tau: 4.0, w0 };
    let plan = plan_type1(&p).unwrap();
    let f = realize(&plan, block, &grid).unwrap();
    let e = fvk_energy(&f, &p).unwrap();
    let b = predicted_excess(&plan);
    println!("small-h {:?} measured={:.7} predicted={:.7} ratio={:.3}", b.branch, e.excess, b.value, e.excess/b.value);
    // long sheet with tail
    let p = CanonicalParams { h: 1.0/54.0, l: 60.0, tau: 4.0/60.0, w0 };
    let plan = plan_type1(&p).unwrap();
    println!("long sheet: gens={} tail={:?}", plan.generations.len(), plan.tail);
    let grid2 = Grid::new(12 * 54 + 1, 961, 60.0).unwrap();
    let f = realize(&plan, block, &grid2).unwrap();
    let e = fvk_energy(&f, &p).unwrap();
    let b = predicted_excess(&plan);
    println!("long sheet measured={:.5} predicted={:.5} ratio={:.2}", e.excess, b.value, e.excess/b.value);
}
