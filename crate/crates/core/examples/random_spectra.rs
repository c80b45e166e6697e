//! Random square inclusions: extreme auxiliary eigenvalues over all coarse
//! elements for void-like and rigid-like inclusions, then the effect of l*.
//!
//! ```text
//! cargo run --release --example random_spectra -- [fine_n] [seed]
//! ```

use signcem::auxspace::build_aux_space;
use signcem::experiments::{ExperimentConfig, Model, Problem};

fn main() -> signcem::Result<()> {
    let mut args = std::env::args().skip(1);
    let fine_n: usize = args.next().map_or(160, |s| s.parse().expect("integer fine_n"));
    let seed: u64 = args.next().map_or(1, |s| s.parse().expect("integer seed"));
    let coarse: Vec<usize> = [10, 20, 40, 80].into_iter().filter(|c| fine_n.is_multiple_of(*c) && fine_n / c >= 4).collect();
    for sigma_minus in [1e-3, 1e3] {
        let config = ExperimentConfig {
            fine_n,
            coarse_n: coarse.clone(),
            seed,
            sigma_minus,
            side_range: [fine_n / 50 + 1, 3 * fine_n / 50 + 1],
            ..ExperimentConfig::preset(Model::Random)
        };
        let problem = Problem::new(&config)?;
        println!("\nsigma = (1, -{sigma_minus:e}), negative area {:.3}", problem.field.negative_fraction());
        println!("{:>6} {:>4} {:>12} {:>12}", "H", "k", "min", "max");
        for &cn in &coarse {
            let g = problem.grid(cn)?;
            let aux = build_aux_space(&g, &problem.field, 3)?;
            for r in aux.spectral_statistics().rows {
                println!("{:>6} {:>4} {:>12.4e} {:>12.4e}", format!("1/{cn}"), r.index, r.min, r.max);
            }
        }
        println!("{:>6} {:>4} {:>12}", "H", "l*", "energy m=3");
        for &cn in &coarse {
            let g = problem.grid(cn)?;
            for l in 1..=4 {
                let aux = problem.aux(&g, l, None)?.value;
                let basis = problem.basis(&g, &aux, 3, None)?.value;
                match problem.solve(&g, &basis) {
                    Ok((_, rep)) => println!("{:>6} {:>4} {:>12.3e}", format!("1/{cn}"), l, rep.rel_energy),
                    Err(e) => println!("{:>6} {:>4} {:>12}", format!("1/{cn}"), l, e.tag()),
                }
            }
        }
    }
    Ok(())
}
