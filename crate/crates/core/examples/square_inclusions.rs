//! Periodic square inclusions with a negative coefficient: errors of the
//! multiscale solution against the fine reference over (H, m).
//!
//! ```text
//! cargo run --release --example square_inclusions -- [fine_n] [n_cells]
//! ```
//! The published setting is `400 10` (or `400 20`); the default is a quick
//! `80 10`.

use signcem::experiments::{ExperimentConfig, Model, Problem};

fn main() -> signcem::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let fine_n = args.next().unwrap_or(80);
    let n_cells = args.next().unwrap_or(10);
    let coarse: Vec<usize> = [10, 20, 40, 80].into_iter().filter(|c| fine_n.is_multiple_of(*c) && fine_n / c >= 4).collect();
    let config = ExperimentConfig { fine_n, n_cells, coarse_n: coarse.clone(), ..ExperimentConfig::preset(Model::Square) };
    let problem = Problem::new(&config)?;
    println!("square inclusions {n_cells}x{n_cells}, sigma = (1, -0.1), fine {fine_n}x{fine_n}, l* = 3");
    println!("{:>6} {:>3} {:>12} {:>12}", "H", "m", "energy", "L2");
    for &cn in &coarse {
        let g = problem.grid(cn)?;
        let aux = problem.aux(&g, 3, None)?.value;
        for m in 1..=4 {
            let basis = problem.basis(&g, &aux, m, None)?.value;
            let (_, rep) = problem.solve(&g, &basis)?;
            println!("{:>6} {:>3} {:>12.3e} {:>12.3e}", format!("1/{cn}"), m, rep.rel_energy, rep.rel_l2);
        }
    }
    Ok(())
}
