//! Sign-changing coefficient profiles, source terms and the flat-interface
//! exact solution.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridHierarchy;

/// Piecewise-constant coefficient `sigma`, one nonzero value per fine cell.
///
/// Cell `(cx, cy)` is stored at `cy * fine_n + cx`; row 0 is the bottom row.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    fine_n: usize,
    values: Vec<f64>,
}

/// Extremes of `|sigma|` over the positive and negative subdomains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSummary {
    pub plus_max: Option<f64>,
    pub plus_min: Option<f64>,
    pub minus_max: Option<f64>,
    pub minus_min: Option<f64>,
}

impl SignSummary {
    /// `sigma^+_min / sigma^-_max`, when both subdomains are nonempty.
    pub fn contrast(&self) -> Option<f64> {
        Some(self.plus_min? / self.minus_max?)
    }
}

impl CoefficientField {
    pub fn from_values(fine_n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != fine_n * fine_n {
            return Err(Error::DimensionMismatch {
                expected: fine_n * fine_n,
                actual: values.len(),
            });
        }
        if let Some(k) = values.iter().position(|v| *v == 0.0 || !v.is_finite()) {
            return Err(Error::Config(format!(
                "coefficient must be finite and nonzero, cell {k} holds {}",
                values[k]
            )));
        }
        Ok(Self { fine_n, values })
    }

    /// Constant coefficient on every cell.
    pub fn uniform(g: &GridHierarchy, value: f64) -> Result<Self> {
        Self::from_values(g.fine_n(), vec![value; g.n_cells()])
    }

    pub fn fine_n(&self) -> usize {
        self.fine_n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn at(&self, cx: usize, cy: usize) -> f64 {
        self.values[cy * self.fine_n + cx]
    }

    #[inline]
    pub fn abs_at(&self, cx: usize, cy: usize) -> f64 {
        self.at(cx, cy).abs()
    }

    /// `+1` on the positive subdomain, `-1` on the negative one.
    #[inline]
    pub fn sign_at(&self, cx: usize, cy: usize) -> f64 {
        self.at(cx, cy).signum()
    }

    pub fn abs(&self) -> Self {
        Self { fine_n: self.fine_n, values: self.values.iter().map(|v| v.abs()).collect() }
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_values(self.fine_n, self.values.iter().map(|v| v * c).collect())
    }

    /// Flips the sign of the whole profile, swapping the two subdomains.
    pub fn negated(&self) -> Self {
        Self { fine_n: self.fine_n, values: self.values.iter().map(|v| -v).collect() }
    }

    pub fn check_grid(&self, g: &GridHierarchy) -> Result<()> {
        if self.fine_n != g.fine_n() {
            return Err(Error::DimensionMismatch { expected: g.fine_n(), actual: self.fine_n });
        }
        Ok(())
    }

    pub fn negative_fraction(&self) -> f64 {
        self.values.iter().filter(|v| **v < 0.0).count() as f64 / self.values.len() as f64
    }

    pub fn summary(&self) -> SignSummary {
        let fold = |pred: fn(f64) -> bool| {
            let mut it = self.values.iter().copied().filter(|v| pred(*v)).map(f64::abs);
            let first = it.next()?;
            Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
        };
        let plus = fold(|v| v > 0.0);
        let minus = fold(|v| v < 0.0);
        SignSummary {
            plus_max: plus.map(|p| p.1),
            plus_min: plus.map(|p| p.0),
            minus_max: minus.map(|p| p.1),
            minus_min: minus.map(|p| p.0),
        }
    }

    /// Writes the field as CSV: `fine_n` rows of `fine_n` values, bottom row first.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for row in self.values.chunks(self.fine_n) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut values = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for line in BufReader::new(r).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad coefficient value: {e}")))?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(Error::Config(format!(
                        "ragged coefficient csv: row {rows} has {} columns, expected {c}",
                        row.len()
                    )))
                }
                _ => {}
            }
            values.extend(row);
            rows += 1;
        }
        if cols != Some(rows) {
            return Err(Error::Config(format!(
                "coefficient csv must be square, got {rows} rows x {:?} columns",
                cols
            )));
        }
        Self::from_values(rows, values)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

/// Right-hand side `f` sampled at the fine nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceField {
    pub values: Vec<f64>,
}

impl SourceField {
    pub fn from_fn(g: &GridHierarchy, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..g.n_nodes())
            .map(|n| {
                let (x, y) = g.node_coords(n);
                f(x, y)
            })
            .collect();
        Self { values }
    }

    pub fn zeros(g: &GridHierarchy) -> Self {
        Self { values: vec![0.0; g.n_nodes()] }
    }
}

/// Closed-form solution of the flat-interface model with
/// `Omega^+ = (0,1) x (gamma,1)` and `Omega^- = (0,1) x (0,gamma)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactSolution {
    pub gamma: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl ExactSolution {
    fn profile(&self, x2: f64) -> f64 {
        x2 * (x2 - 1.0) * (x2 - self.gamma)
    }

    fn profile_dy(&self, x2: f64) -> f64 {
        3.0 * x2 * x2 - 2.0 * (1.0 + self.gamma) * x2 + self.gamma
    }

    fn branch_factor(&self, x2: f64) -> f64 {
        if x2 > self.gamma {
            -self.sigma_minus
        } else {
            self.sigma_plus
        }
    }

    pub fn u(&self, x1: f64, x2: f64) -> f64 {
        self.branch_factor(x2) * x1 * (x1 - 1.0) * self.profile(x2)
    }

    pub fn grad(&self, x1: f64, x2: f64) -> (f64, f64) {
        let c = self.branch_factor(x2);
        (c * (2.0 * x1 - 1.0) * self.profile(x2), c * x1 * (x1 - 1.0) * self.profile_dy(x2))
    }

    /// Signed coefficient of the model at height `x2`.
    pub fn sigma(&self, x2: f64) -> f64 {
        if x2 > self.gamma {
            self.sigma_plus
        } else {
            -self.sigma_minus
        }
    }

    pub fn f(&self, x1: f64, x2: f64) -> f64 {
        let g = self.gamma;
        self.sigma_minus
            * self.sigma_plus
            * (2.0 * x2 * (x2 - 1.0) * (x2 - g) + x1 * (x1 - 1.0) * (6.0 * x2 - 2.0 * (g + 1.0)))
    }

    pub fn source(&self, g: &GridHierarchy) -> SourceField {
        SourceField::from_fn(g, |x, y| self.f(x, y))
    }
}

/// Flat interface at height `gamma`: cells whose centre lies above `gamma`
/// carry `+sigma_plus`, the others `-sigma_minus`.
pub fn flat_interface(
    g: &GridHierarchy,
    gamma: f64,
    sigma_plus: f64,
    sigma_minus: f64,
) -> Result<(CoefficientField, ExactSolution)> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    check_magnitudes(sigma_plus, sigma_minus)?;
    let n = g.fine_n();
    let mut values = Vec::with_capacity(n * n);
    for cy in 0..n {
        let (_, y) = g.cell_center(0, cy);
        let v = if y > gamma { sigma_plus } else { -sigma_minus };
        values.extend(std::iter::repeat_n(v, n));
    }
    let field = CoefficientField::from_values(n, values)?;
    Ok((field, ExactSolution { gamma, sigma_plus, sigma_minus }))
}

/// T-coercivity condition for the flat interface: the ratio
/// `sigma_minus / sigma_plus` must avoid the critical band.
pub fn flat_wellposed(gamma: f64, sigma_plus: f64, sigma_minus: f64) -> bool {
    let ratio = sigma_minus / sigma_plus;
    let edge = gamma / (1.0 - gamma);
    let (lo, hi) = if gamma <= 0.5 { (edge, 1.0) } else { (1.0, edge) };
    !(lo..=hi).contains(&ratio)
}

/// `n_cells x n_cells` periodic cells, each with a centred square inclusion
/// of half the cell side carrying `-sigma_minus`.
pub fn periodic_square(
    g: &GridHierarchy,
    n_cells: usize,
    sigma_plus: f64,
    sigma_minus: f64,
) -> Result<CoefficientField> {
    check_magnitudes(sigma_plus, sigma_minus)?;
    let n = g.fine_n();
    if n_cells == 0 || !n.is_multiple_of(4 * n_cells) {
        return Err(Error::Config(format!(
            "square inclusions need fine_n divisible by 4*n_cells, got fine_n={n}, n_cells={n_cells}"
        )));
    }
    let period = n / n_cells;
    let band = period / 4..3 * period / 4;
    Ok(periodic(n, period, sigma_plus, sigma_minus, |a, b| band.contains(&a) && band.contains(&b)))
}

/// `n_cells x n_cells` periodic cells, each with a centred plus-shaped
/// inclusion whose arms are a fifth of the cell wide and span the full cell.
pub fn periodic_cross(
    g: &GridHierarchy,
    n_cells: usize,
    sigma_plus: f64,
    sigma_minus: f64,
) -> Result<CoefficientField> {
    check_magnitudes(sigma_plus, sigma_minus)?;
    let n = g.fine_n();
    if n_cells == 0 || !n.is_multiple_of(5 * n_cells) {
        return Err(Error::Config(format!(
            "cross inclusions need fine_n divisible by 5*n_cells, got fine_n={n}, n_cells={n_cells}"
        )));
    }
    let period = n / n_cells;
    let arm = 2 * period / 5..3 * period / 5;
    Ok(periodic(n, period, sigma_plus, sigma_minus, |a, b| arm.contains(&a) || arm.contains(&b)))
}

fn periodic(
    n: usize,
    period: usize,
    sigma_plus: f64,
    sigma_minus: f64,
    inside: impl Fn(usize, usize) -> bool,
) -> CoefficientField {
    let mut values = Vec::with_capacity(n * n);
    for cy in 0..n {
        for cx in 0..n {
            values.push(if inside(cx % period, cy % period) { -sigma_minus } else { sigma_plus });
        }
    }
    CoefficientField { fine_n: n, values }
}

/// Parameters of the seeded square-inclusion sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomInclusions {
    pub seed: u64,
    pub count: usize,
    /// Inclusion side lengths in fine cells, inclusive.
    pub side_min: usize,
    pub side_max: usize,
}

impl Default for RandomInclusions {
    fn default() -> Self {
        Self { seed: 1, count: 60, side_min: 8, side_max: 24 }
    }
}

/// Axis-aligned square inclusions with uniformly drawn sides and positions.
/// Inclusions may overlap each other and touch the boundary; their union is
/// the negative subdomain.
pub fn random_inclusions(
    g: &GridHierarchy,
    params: RandomInclusions,
    sigma_plus: f64,
    sigma_minus: f64,
) -> Result<CoefficientField> {
    check_magnitudes(sigma_plus, sigma_minus)?;
    let n = g.fine_n();
    let RandomInclusions { seed, count, side_min, side_max } = params;
    if side_min == 0 || side_min > side_max || side_max > n {
        return Err(Error::Config(format!(
            "inclusion sides must satisfy 1 <= {side_min} <= {side_max} <= {n}"
        )));
    }
    let mut negative = vec![false; n * n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let side = rng.random_range(side_min..=side_max);
        let x0 = rng.random_range(0..=n - side);
        let y0 = rng.random_range(0..=n - side);
        for cy in y0..y0 + side {
            negative[cy * n + x0..cy * n + x0 + side].fill(true);
        }
    }
    let values =
        negative.into_iter().map(|neg| if neg { -sigma_minus } else { sigma_plus }).collect();
    Ok(CoefficientField { fine_n: n, values })
}

/// Sum of isotropic Gaussians `amplitude * exp(-|x - c|^2 / (2 variance))`
/// sampled at the fine nodes.
pub fn gaussian_source(
    g: &GridHierarchy,
    centers: &[(f64, f64)],
    variance: f64,
    amplitude: f64,
) -> Result<SourceField> {
    if !(variance > 0.0) {
        return Err(Error::Config(format!("variance must be positive, got {variance}")));
    }
    Ok(SourceField::from_fn(g, |x, y| {
        amplitude
            * centers
                .iter()
                .map(|(cx, cy)| (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * variance)).exp())
                .sum::<f64>()
    }))
}

/// The four-Gaussian source used with the inclusion models.
pub const FOUR_GAUSSIAN_CENTERS: [(f64, f64); 4] =
    [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
pub const FOUR_GAUSSIAN_VARIANCE: f64 = 0.01;

pub fn four_gaussians(g: &GridHierarchy, amplitude: f64) -> SourceField {
    gaussian_source(g, &FOUR_GAUSSIAN_CENTERS, FOUR_GAUSSIAN_VARIANCE, amplitude)
        .expect("variance is positive")
}

fn check_magnitudes(sigma_plus: f64, sigma_minus: f64) -> Result<()> {
    if !(sigma_plus > 0.0 && sigma_minus > 0.0) || !sigma_plus.is_finite() || !sigma_minus.is_finite()
    {
        return Err(Error::Config(format!(
            "coefficient magnitudes must be positive, got ({sigma_plus}, {sigma_minus})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn g400() -> GridHierarchy {
        GridHierarchy::new(400, 10).unwrap()
    }

    #[test]
    fn flat_interface_rows() {
        let g = g400();
        let (field, _) = flat_interface(&g, 0.5, 1.0, 1.0).unwrap();
        let neg_rows = (0..400).filter(|&cy| field.at(0, cy) < 0.0).count();
        assert_eq!(neg_rows, 200);
        assert!(flat_interface(&g, 1.0, 1.0, 1.0).is_err());
        assert!(flat_interface(&g, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn exact_solution_vanishes_on_interface_and_boundary() {
        let e = ExactSolution { gamma: 0.37, sigma_plus: 1.3, sigma_minus: 0.4 };
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert_eq!(e.u(t, 0.0), 0.0);
            assert_eq!(e.u(t, 1.0), 0.0);
            assert_eq!(e.u(0.0, t), 0.0);
            assert!(e.u(1.0, t).abs() < 1e-16);
            assert!(e.u(t, 0.37).abs() < 1e-16);
            assert!(e.u(t, 0.37 + 1e-14).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_solution_spot_value() {
        let e = ExactSolution { gamma: 0.5, sigma_plus: 1.0, sigma_minus: 1.0 };
        // -1 * (0.5 * -0.5) * (0.75 * -0.25 * 0.25)
        assert!((e.u(0.5, 0.75) - (-0.01171875)).abs() < 1e-16);
        let expected = -(0.5 * -0.5) * (0.75 * -0.25 * 0.25);
        assert_eq!(e.u(0.5, 0.75), expected);
    }

    #[test]
    fn exact_solution_satisfies_pde_and_transmission() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(gamma, sp, sm) in &[(0.5, 1.01, 1.0), (0.49, 1.0, 1.01), (0.3, 2.0, 0.7)] {
            let e = ExactSolution { gamma, sigma_plus: sp, sigma_minus: sm };
            // residual -div(sigma grad u) - f with second derivatives in closed form
            let residual = |x: f64, y: f64| {
                let s = e.sigma(y);
                let c = e.branch_factor(y);
                let uxx = c * 2.0 * e.profile(y);
                let uyy = c * x * (x - 1.0) * (6.0 * y - 2.0 * (1.0 + gamma));
                -s * (uxx + uyy) - e.f(x, y)
            };
            let scale = sp * sm;
            for _ in 0..100 {
                let x = rng.random::<f64>();
                let y_plus = gamma + (1.0 - gamma) * rng.random::<f64>();
                let y_minus = gamma * rng.random::<f64>();
                assert!(residual(x, y_plus).abs() < 1e-12 * scale);
                assert!(residual(x, y_minus).abs() < 1e-12 * scale);
                // flux continuity across the interface
                let up = gamma + 1e-12;
                let above = e.sigma(up) * e.grad(x, up).1;
                let below = e.sigma(gamma) * e.grad(x, gamma).1;
                assert!((above - below).abs() < 1e-10 * scale);
            }
        }
    }

    #[test]
    fn wellposedness_predicate() {
        assert!(flat_wellposed(0.5, 1.01, 1.0));
        assert!(flat_wellposed(0.5, 1.0, 1.01));
        assert!(!flat_wellposed(0.5, 1.0, 1.0));
        assert!(!flat_wellposed(0.25, 1.0, 0.5));
        assert!(flat_wellposed(0.49, 1.0, 1.01));
        // subdomain swap symmetry for gamma > 1/2
        for &(g, sp, sm) in &[(0.7, 1.0, 1.5), (0.7, 1.0, 3.0), (0.6, 2.0, 1.0)] {
            assert_eq!(flat_wellposed(g, sp, sm), flat_wellposed(1.0 - g, sm, sp));
        }
    }

    #[test]
    fn square_inclusions_layout() {
        let g = g400();
        let f = periodic_square(&g, 10, 1.0, 0.1).unwrap();
        assert_eq!(f.negative_fraction(), 0.25);
        assert_eq!(f.at(9, 9), 1.0);
        assert_eq!(f.at(10, 10), -0.1);
        assert_eq!(f.at(29, 29), -0.1);
        assert_eq!(f.at(30, 29), 1.0);
        let f20 = periodic_square(&g, 20, 1.0, 0.1).unwrap();
        assert_eq!(f20.at(5, 5), -0.1);
        assert_eq!(f20.at(15, 14), 1.0);
        assert_eq!(f20.negative_fraction(), 0.25);
        assert!(periodic_square(&GridHierarchy::new(60, 10).unwrap(), 10, 1.0, 0.1).is_err());
    }

    #[test]
    fn periodic_fields_translation_invariant() {
        let g = g400();
        for field in [
            periodic_square(&g, 10, 1.0, 0.1).unwrap(),
            periodic_cross(&g, 20, 1.0, 1e3).unwrap(),
        ] {
            let p = if field.at(5, 5) < 0.0 { 20 } else { 40 };
            for cy in 0..400 - p {
                for cx in 0..400 - p {
                    assert_eq!(field.at(cx, cy), field.at(cx + p, cy));
                    assert_eq!(field.at(cx, cy), field.at(cx, cy + p));
                }
            }
        }
    }

    #[test]
    fn cross_inclusions_layout() {
        let g = g400();
        let f = periodic_cross(&g, 10, 1.0, 1e3).unwrap();
        assert!((f.negative_fraction() - 9.0 / 25.0).abs() < 1e-15);
        // arms of width 8 reach the cell boundary
        assert_eq!(f.at(16, 0), -1e3);
        assert_eq!(f.at(23, 39), -1e3);
        assert_eq!(f.at(15, 0), 1.0);
        assert_eq!(f.at(0, 20), -1e3);
        let s = f.summary();
        assert!((s.contrast().unwrap() - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn random_inclusions_deterministic() {
        let g = g400();
        let p = RandomInclusions::default();
        let a = random_inclusions(&g, p, 1.0, 1e-3).unwrap();
        let b = random_inclusions(&g, p, 1.0, 1e-3).unwrap();
        assert_eq!(a, b);
        let frac = a.negative_fraction();
        assert!((0.05..=0.35).contains(&frac), "fraction {frac}");
        // frozen layout of the canonical seed
        assert_eq!(frac, RANDOM_SEED1_NEGATIVE_FRACTION);

        let empty = random_inclusions(&g, RandomInclusions { count: 0, ..p }, 1.0, 1e-3).unwrap();
        assert_eq!(empty.negative_fraction(), 0.0);
        assert!(empty.summary().minus_max.is_none());
    }

    const RANDOM_SEED1_NEGATIVE_FRACTION: f64 = 0.092125;

    #[test]
    fn gaussian_peak_and_superposition() {
        let g = GridHierarchy::new(40, 4).unwrap();
        let s = gaussian_source(&g, &[(0.5, 0.5)], 0.01, 3.0).unwrap();
        assert!((s.values[g.node_index(20, 20)] - 3.0).abs() < 1e-15);

        let s = four_gaussians(&g, 1.0);
        let center = s.values[g.node_index(20, 20)];
        assert!((center - 4.0 * (-0.125f64 / 0.02).exp()).abs() < 1e-15);
        let n = g.nodes_per_side();
        for iy in 0..n {
            for ix in 0..n {
                let v = s.values[g.node_index(ix, iy)];
                assert!((v - s.values[g.node_index(iy, ix)]).abs() < 1e-15);
                assert!((v - s.values[g.node_index(40 - ix, iy)]).abs() < 1e-15);
            }
        }
        assert!(gaussian_source(&g, &[(0.5, 0.5)], 0.0, 1.0).is_err());
    }

    #[test]
    fn summary_and_validation() {
        let f = CoefficientField::from_values(2, vec![1.0, 2.0, -0.5, -3.0]).unwrap();
        let s = f.summary();
        assert_eq!(s.plus_max, Some(2.0));
        assert_eq!(s.plus_min, Some(1.0));
        assert_eq!(s.minus_max, Some(3.0));
        assert_eq!(s.minus_min, Some(0.5));
        assert_eq!(s.contrast(), Some(1.0 / 3.0));
        assert!(CoefficientField::from_values(2, vec![1.0, 0.0, 1.0, 1.0]).is_err());
        assert!(CoefficientField::from_values(2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = GridHierarchy::new(20, 4).unwrap();
        let f = random_inclusions(&g, RandomInclusions { seed: 3, count: 5, side_min: 2, side_max: 6 }, 1.0, 0.3)
            .unwrap()
            .scaled(1.0 / 3.0)
            .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 20);
        let back = CoefficientField::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, f);
        assert!(CoefficientField::read_csv("1,2\n3\n".as_bytes()).is_err());
    }
}
