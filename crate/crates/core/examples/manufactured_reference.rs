//! Fine-mesh reference solver checked against a smooth manufactured
//! solution and against the closed-form flat-interface solution.
//!
//! ```text
//! cargo run --release --example manufactured_reference
//! ```

use std::f64::consts::PI;

use signcem::coeff::{flat_interface, CoefficientField, SourceField};
use signcem::grid::GridHierarchy;
use signcem::metrics::Norms;
use signcem::online::{interpolate_exact, solve_reference};

fn main() -> signcem::Result<()> {
    println!("{:>5} {:>14} {:>16}", "n", "smooth L2 err", "interface energy");
    for n in [16, 32, 64, 128] {
        let g = GridHierarchy::new(n, 1)?;
        let one = CoefficientField::uniform(&g, 1.0)?;
        let f = SourceField::from_fn(&g, |x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin());
        let uh = solve_reference(&g, &one, &f)?.fine;
        let exact: Vec<f64> = (0..g.n_nodes())
            .map(|k| {
                let (x, y) = g.node_coords(k);
                (PI * x).sin() * (PI * y).sin()
            })
            .collect();
        let smooth = Norms::new(&g, &one)?.error_report(&exact, &uh)?.rel_l2;

        let (field, e) = flat_interface(&g, 0.5, 1.01, 1.0)?;
        let uh = solve_reference(&g, &field, &e.source(&g))?.fine;
        let interface = Norms::new(&g, &field)?.error_report(&interpolate_exact(&g, &e), &uh)?.rel_energy;
        println!("{n:>5} {smooth:>14.3e} {interface:>16.3e}");
    }
    Ok(())
}
