//! Connected cross-shaped inclusions with contrast 10^3: long negative
//! channels that defeat plain coarse elements.
//!
//! ```text
//! cargo run --release --example cross_channels -- [fine_n]
//! ```

use signcem::experiments::{ExperimentConfig, Model, Problem};

fn main() -> signcem::Result<()> {
    let fine_n: usize = std::env::args().nth(1).map_or(160, |s| s.parse().expect("integer fine_n"));
    let coarse: Vec<usize> = [10, 20, 40, 80].into_iter().filter(|c| fine_n.is_multiple_of(*c) && fine_n / c >= 4).collect();
    let config = ExperimentConfig { fine_n, coarse_n: coarse.clone(), ..ExperimentConfig::preset(Model::Cross) };
    let problem = Problem::new(&config)?;
    let s = problem.field.summary();
    println!(
        "cross inclusions: negative area {:.3}, contrast {:.1e}",
        problem.field.negative_fraction(),
        s.contrast().unwrap_or(f64::NAN)
    );
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "H", "Q1 coarse", "m=1", "m=2", "m=3");
    for &cn in &coarse {
        let g = problem.grid(cn)?;
        let (_, q1) = problem.baseline(&g)?;
        let aux = problem.aux(&g, 3, None)?.value;
        let mut line = format!("{:>6} {:>12.3e}", format!("1/{cn}"), q1.rel_energy);
        for m in 1..=3 {
            let basis = problem.basis(&g, &aux, m, None)?.value;
            line += &format!(" {:>12.3e}", problem.solve(&g, &basis)?.1.rel_energy);
        }
        println!("{line}");
    }
    Ok(())
}
