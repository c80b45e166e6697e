//! Localization of the multiscale basis: relative differences between
//! `phi_{i,j}` on m layers and on the largest layer count that still fits.
//!
//! ```text
//! cargo run --release --example basis_decay -- [fine_n] [ex] [ey]
//! ```

use signcem::auxspace::build_aux_space;
use signcem::cem::decay_study;
use signcem::coeff::periodic_square;
use signcem::grid::GridHierarchy;

fn main() -> signcem::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let fine_n = args.next().unwrap_or(120);
    let (ex, ey) = (args.next().unwrap_or(1), args.next().unwrap_or(4));
    let g = GridHierarchy::new(fine_n, 10)?;
    let field = periodic_square(&g, 10, 1.0, 0.1)?;
    let aux = build_aux_space(&g, &field, 3)?;
    let i = g.element_index(ex, ey);
    let m_ref = [ex, ey, 9 - ex, 9 - ey].into_iter().max().expect("four distances");
    let layers: Vec<usize> = (1..m_ref).collect();
    let rows = decay_study(&g, &field, &aux, i, &layers, m_ref)?;
    println!("element ({ex}, {ey}) of a 10x10 mesh, reference m = {m_ref}");
    println!("{:>3} {:>3} {:>12} {:>12}", "j", "m", "energy", "L2");
    for r in rows {
        println!("{:>3} {:>3} {:>12.3e} {:>12.3e}", r.eigen + 1, r.layers, r.rel_energy, r.rel_l2);
    }
    Ok(())
}
