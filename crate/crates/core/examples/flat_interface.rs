//! Flat interface with a closed-form solution: multiscale errors against
//! the exact interpolant next to plain coarse Q1.
//!
//! ```text
//! cargo run --release --example flat_interface -- [fine_n] [gamma] [sigma_plus] [sigma_minus]
//! ```
//! `gamma = 0.5` puts the interface on coarse edges (Q1 converges);
//! `gamma = 0.49` cuts through coarse elements (Q1 stagnates).

use signcem::coeff::flat_wellposed;
use signcem::experiments::{ExperimentConfig, Model, Problem};

fn main() -> signcem::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let get = |i: usize, d: f64| args.get(i).map_or(d, |s| s.parse().expect("numeric argument"));
    let fine_n = get(0, 200.0) as usize;
    let (gamma, sp, sm) = (get(1, 0.49), get(2, 1.0), get(3, 1.01));
    println!("gamma = {gamma}, sigma = ({sp}, -{sm}), well-posed: {}", flat_wellposed(gamma, sp, sm));
    let coarse: Vec<usize> = [10, 20, 40, 80].into_iter().filter(|c| fine_n.is_multiple_of(*c) && fine_n / c >= 4).collect();
    let config = ExperimentConfig {
        fine_n,
        coarse_n: coarse.clone(),
        gamma,
        sigma_plus: sp,
        sigma_minus: sm,
        ..ExperimentConfig::preset(Model::Flat)
    };
    let problem = Problem::new(&config)?;
    let fine_err = problem.report(&problem.u_h.fine)?;
    println!("fine Q1 vs exact: energy {:.3e}", fine_err.rel_energy);
    println!("{:>6} {:>12} {:>12} {:>12}", "H", "Q1 coarse", "CEM m=3", "CEM m=4");
    for &cn in &coarse {
        let g = problem.grid(cn)?;
        let (_, q1) = problem.baseline(&g)?;
        let aux = problem.aux(&g, 3, None)?.value;
        let mut cem = Vec::new();
        for m in [3, 4] {
            let basis = problem.basis(&g, &aux, m, None)?.value;
            cem.push(problem.solve(&g, &basis)?.1.rel_energy);
        }
        println!("{:>6} {:>12.3e} {:>12.3e} {:>12.3e}", format!("1/{cn}"), q1.rel_energy, cem[0], cem[1]);
    }
    Ok(())
}
