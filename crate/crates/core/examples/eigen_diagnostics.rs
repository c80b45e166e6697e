//! Why the auxiliary problem uses |sigma|: on an element that straddles the
//! interface the signed pencil is indefinite and yields complex (and, for
//! other contrasts, negative) eigenvalues, while the absolute pencil is a
//! well-ordered nonnegative spectrum.
//!
//! ```text
//! cargo run --release --example eigen_diagnostics
//! ```

use signcem::auxspace::{signed_eigen_diagnostic, solve_local_eigen};
use signcem::coeff::periodic_square;
use signcem::grid::GridHierarchy;

fn main() -> signcem::Result<()> {
    let g = GridHierarchy::new(80, 8)?;
    let field = periodic_square(&g, 10, 1.0, 0.1)?;
    let i = g.element_index(3, 3);
    let aux = solve_local_eigen(&g, &field, i, 6)?;
    println!("absolute pencil, element (3, 3): {:?}", aux.eigenvalues().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    let signed = signed_eigen_diagnostic(&g, &field, i)?;
    let negative = signed.iter().filter(|(re, _)| *re < 0.0).count();
    let complex = signed.iter().filter(|(_, im)| im.abs() > 1e-10).count();
    println!("signed pencil: {} eigenvalues, {negative} with negative real part, {complex} complex", signed.len());
    for (re, im) in signed.iter().take(6) {
        println!("  {re:>12.4e} {im:>+12.4e}i");
    }
    println!("spectral gap of the kept space: {:.4}", aux.gap());
    Ok(())
}
