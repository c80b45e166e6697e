//! Plain-text outputs: CSV tables, node dumps and legacy VTK fields.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridHierarchy;

/// A row of a fixed-schema CSV table.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Shortest text that reads back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_csv<R: CsvRecord, W: Write>(rows: &[R], w: W) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{}", R::header().join(","))?;
    for r in rows {
        writeln!(w, "{}", r.fields().join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv<R: CsvRecord>(rows: &[R], path: &Path) -> Result<()> {
    write_csv(rows, File::create(path)?)
}

/// Drops the named columns from CSV text; used to compare runs while
/// ignoring timings.
pub fn csv_without_columns(text: &str, drop: &[&str]) -> String {
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return String::new() };
    let keep: Vec<bool> = header.split(',').map(|h| !drop.contains(&h)).collect();
    let filter = |line: &str| -> String {
        line.split(',').zip(&keep).filter(|(_, k)| **k).map(|(f, _)| f).collect::<Vec<_>>().join(",")
    };
    let mut out = filter(header);
    for l in lines {
        out.push('\n');
        out.push_str(&filter(l));
    }
    out
}

fn check(g: &GridHierarchy, name: &str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Config(format!(
            "field {name} has {} values, the {}x{} grid needs {expected}",
            v.len(),
            g.fine_n(),
            g.fine_n()
        )));
    }
    Ok(())
}

/// Legacy ASCII VTK structured points with node and cell scalars.
pub fn write_vtk<W: Write>(
    g: &GridHierarchy,
    title: &str,
    point: &[(&str, &[f64])],
    cell: &[(&str, &[f64])],
    w: W,
) -> Result<()> {
    for (name, v) in point {
        check(g, name, v, g.n_nodes())?;
    }
    for (name, v) in cell {
        check(g, name, v, g.n_cells())?;
    }
    let mut w = BufWriter::new(w);
    let n = g.nodes_per_side();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.lines().next().unwrap_or("field"))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {n} {n} 1")?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {} {} 1", fmt_f64(g.h()), fmt_f64(g.h()))?;
    let block = |w: &mut BufWriter<W>, kind: &str, count: usize, fields: &[(&str, &[f64])]| -> Result<()> {
        if fields.is_empty() {
            return Ok(());
        }
        writeln!(w, "{kind} {count}")?;
        for (name, v) in fields {
            writeln!(w, "SCALARS {name} double 1")?;
            writeln!(w, "LOOKUP_TABLE default")?;
            for x in v.iter() {
                writeln!(w, "{}", fmt_f64(*x))?;
            }
        }
        Ok(())
    };
    block(&mut w, "POINT_DATA", g.n_nodes(), point)?;
    block(&mut w, "CELL_DATA", g.n_cells(), cell)?;
    w.flush()?;
    Ok(())
}

pub fn save_vtk(
    g: &GridHierarchy,
    title: &str,
    point: &[(&str, &[f64])],
    cell: &[(&str, &[f64])],
    path: &Path,
) -> Result<()> {
    write_vtk(g, title, point, cell, File::create(path)?)
}

/// One line per fine node: index, coordinates and the given columns.
pub fn write_node_csv<W: Write>(g: &GridHierarchy, cols: &[(&str, &[f64])], w: W) -> Result<()> {
    for (name, v) in cols {
        check(g, name, v, g.n_nodes())?;
    }
    let mut w = BufWriter::new(w);
    write!(w, "node,x,y")?;
    for (name, _) in cols {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for k in 0..g.n_nodes() {
        let (x, y) = g.node_coords(k);
        write!(w, "{k},{},{}", fmt_f64(x), fmt_f64(y))?;
        for (_, v) in cols {
            write!(w, ",{}", fmt_f64(v[k]))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_node_csv(g: &GridHierarchy, cols: &[(&str, &[f64])], path: &Path) -> Result<()> {
    write_node_csv(g, cols, File::create(path)?)
}
