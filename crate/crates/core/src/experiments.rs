//! Parameter sweeps over coarse meshes, oversampling layers and auxiliary
//! space sizes, with cached offline data and CSV/VTK outputs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize};

use crate::auxspace::{aux_provenance, build_aux_space, read_aux_cache, write_aux_cache, AuxSpace};
use crate::cem::{self, build_all, decay_study, MsBasisSet};
use crate::coeff::{
    flat_interface, gaussian_source, periodic_cross, periodic_square, random_inclusions, CoefficientField,
    ExactSolution, RandomInclusions, SourceField, FOUR_GAUSSIAN_CENTERS, FOUR_GAUSSIAN_VARIANCE,
};
use crate::error::{Error, Result};
use crate::grid::GridHierarchy;
use crate::io::{fmt_f64, save_csv, save_node_csv, save_vtk, CsvRecord};
use crate::metrics::{ErrorReport, Norms};
use crate::online::{assemble_online, interpolate_exact, solve_coarse_q1, solve_online, solve_reference, Solution};

/// Coefficient families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Flat,
    #[default]
    Square,
    Cross,
    Random,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Flat => "flat",
            Model::Square => "square",
            Model::Cross => "cross",
            Model::Random => "random",
        })
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Model::Flat),
            "square" => Ok(Model::Square),
            "cross" => Ok(Model::Cross),
            "random" => Ok(Model::Random),
            _ => Err(Error::Config(format!("unknown model {s:?}, expected flat, square, cross or random"))),
        }
    }
}

/// Right-hand side of the model problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// The closed-form source for the flat model, four Gaussians otherwise.
    #[default]
    Auto,
    Exact,
    FourGaussians { amplitude: f64 },
    Gaussians { centers: Vec<[f64; 2]>, variance: f64, amplitude: f64 },
    Constant { value: f64 },
}

/// Localization study of one element's basis functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecaySpec {
    pub coarse_n: usize,
    /// Element coordinates `[ex, ey]`, row 0 at the bottom.
    pub element: [usize; 2],
    pub layers: Vec<usize>,
    pub m_ref: usize,
}

impl Default for DecaySpec {
    fn default() -> Self {
        Self { coarse_n: 10, element: [1, 4], layers: (1..=7).collect(), m_ref: 8 }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// A full sweep description; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: Model,
    pub fine_n: usize,
    #[serde(deserialize_with = "one_or_many")]
    pub coarse_n: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub layers: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub l_star: Vec<usize>,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub gamma: f64,
    pub n_cells: usize,
    pub seed: u64,
    pub count: usize,
    pub side_range: [usize; 2],
    pub source: SourceSpec,
    pub out: PathBuf,
    pub cache: bool,
    /// Worker threads; 0 keeps the global pool.
    pub threads: usize,
    pub baseline: bool,
    pub spectra: bool,
    pub decay: Option<DecaySpec>,
    pub dump_fields: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: Model::Square,
            fine_n: 400,
            coarse_n: vec![10, 20, 40, 80],
            layers: vec![1, 2, 3, 4],
            l_star: vec![3],
            sigma_plus: 1.0,
            sigma_minus: 0.1,
            gamma: 0.5,
            n_cells: 10,
            seed: 1,
            count: 60,
            side_range: [8, 24],
            source: SourceSpec::Auto,
            out: PathBuf::from("out"),
            cache: true,
            threads: 0,
            baseline: false,
            spectra: true,
            decay: None,
            dump_fields: false,
        }
    }
}

impl ExperimentConfig {
    /// Parameters of the published study of each model.
    pub fn preset(model: Model) -> Self {
        let base = Self { model, ..Self::default() };
        match model {
            Model::Flat => Self { gamma: 0.49, sigma_plus: 1.0, sigma_minus: 1.01, baseline: true, ..base },
            Model::Square => base,
            Model::Cross => Self { sigma_minus: 1e3, layers: vec![1, 2, 3], baseline: true, ..base },
            Model::Random => Self { sigma_minus: 1e3, layers: vec![3], l_star: vec![1, 2, 3, 4], ..base },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Rejects inconsistent parameters before any computation.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.fine_n == 0 {
            return bad("fine_n must be positive".into());
        }
        for (name, list) in [("coarse_n", &self.coarse_n), ("layers", &self.layers), ("l_star", &self.l_star)] {
            if list.is_empty() {
                return bad(format!("{name} list is empty"));
            }
        }
        for &c in &self.coarse_n {
            if c == 0 || !self.fine_n.is_multiple_of(c) {
                return bad(format!("coarse_n {c} does not divide fine_n {}", self.fine_n));
            }
            let nodes = (self.fine_n / c + 1).pow(2);
            if let Some(&l) = self.l_star.iter().find(|&&l| l == 0 || l + 1 > nodes) {
                return bad(format!("l_star {l} needs 1 <= l_star < {nodes} at coarse_n {c}"));
            }
        }
        if !(self.sigma_plus > 0.0 && self.sigma_minus > 0.0) || !self.sigma_plus.is_finite() || !self.sigma_minus.is_finite() {
            return bad("sigma_plus and sigma_minus must be positive and finite".into());
        }
        match self.model {
            Model::Flat => {
                if !(self.gamma > 0.0 && self.gamma < 1.0) {
                    return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
                }
            }
            Model::Square if self.n_cells == 0 || !self.fine_n.is_multiple_of(4 * self.n_cells) => {
                return bad(format!("square inclusions need fine_n divisible by {}", 4 * self.n_cells.max(1)));
            }
            Model::Cross if self.n_cells == 0 || !self.fine_n.is_multiple_of(5 * self.n_cells) => {
                return bad(format!("cross inclusions need fine_n divisible by {}", 5 * self.n_cells.max(1)));
            }
            Model::Random => {
                let [lo, hi] = self.side_range;
                if lo == 0 || lo > hi || hi > self.fine_n {
                    return bad(format!("side_range [{lo}, {hi}] must satisfy 1 <= min <= max <= fine_n"));
                }
            }
            _ => {}
        }
        match &self.source {
            SourceSpec::Exact if self.model != Model::Flat => {
                return bad("an exact source exists only for the flat model".into());
            }
            SourceSpec::Gaussians { variance, .. } if *variance <= 0.0 => {
                return bad("Gaussian variance must be positive".into());
            }
            _ => {}
        }
        if let Some(d) = &self.decay {
            if d.coarse_n == 0 || !self.fine_n.is_multiple_of(d.coarse_n) {
                return bad(format!("decay coarse_n {} does not divide fine_n", d.coarse_n));
            }
            if d.element[0] >= d.coarse_n || d.element[1] >= d.coarse_n {
                return bad(format!("decay element {:?} outside a {}x{} mesh", d.element, d.coarse_n, d.coarse_n));
            }
            if d.layers.is_empty() || d.layers.iter().any(|&m| m > d.m_ref) {
                return bad("decay layers must be nonempty and not exceed m_ref".into());
            }
        }
        Ok(())
    }
}

/// Fine-scale data shared by every sweep point: field, source, fine
/// reference and norms.
pub struct Problem {
    pub config: ExperimentConfig,
    pub fine: GridHierarchy,
    pub field: CoefficientField,
    pub source: SourceField,
    pub exact: Option<ExactSolution>,
    /// Fine Q1 solution `u_h`.
    pub u_h: Solution,
    /// What errors are measured against: the exact interpolant when one
    /// exists, `u_h` otherwise.
    pub reference: Vec<f64>,
    pub norms: Norms,
}

impl Problem {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let fine = GridHierarchy::new(c.fine_n, 1)?;
        let (field, exact) = match c.model {
            Model::Flat => {
                let (f, e) = flat_interface(&fine, c.gamma, c.sigma_plus, c.sigma_minus)?;
                (f, Some(e))
            }
            Model::Square => (periodic_square(&fine, c.n_cells, c.sigma_plus, c.sigma_minus)?, None),
            Model::Cross => (periodic_cross(&fine, c.n_cells, c.sigma_plus, c.sigma_minus)?, None),
            Model::Random => {
                let p = RandomInclusions { seed: c.seed, count: c.count, side_min: c.side_range[0], side_max: c.side_range[1] };
                (random_inclusions(&fine, p, c.sigma_plus, c.sigma_minus)?, None)
            }
        };
        let source = match (&c.source, &exact) {
            (SourceSpec::Auto | SourceSpec::Exact, Some(e)) => e.source(&fine),
            (SourceSpec::Auto, None) => gaussian_source(&fine, &FOUR_GAUSSIAN_CENTERS, FOUR_GAUSSIAN_VARIANCE, 1.0)?,
            (SourceSpec::Exact, None) => return Err(Error::Config("no exact source for this model".into())),
            (SourceSpec::FourGaussians { amplitude }, _) => {
                gaussian_source(&fine, &FOUR_GAUSSIAN_CENTERS, FOUR_GAUSSIAN_VARIANCE, *amplitude)?
            }
            (SourceSpec::Gaussians { centers, variance, amplitude }, _) => {
                let pts: Vec<(f64, f64)> = centers.iter().map(|p| (p[0], p[1])).collect();
                gaussian_source(&fine, &pts, *variance, *amplitude)?
            }
            (SourceSpec::Constant { value }, _) => SourceField::from_fn(&fine, |_, _| *value),
        };
        let u_h = solve_reference(&fine, &field, &source)?;
        let reference = match &exact {
            Some(e) => interpolate_exact(&fine, e),
            None => u_h.fine.clone(),
        };
        let norms = Norms::new(&fine, &field)?;
        Ok(Self { config: c.clone(), fine, field, source, exact, u_h, reference, norms })
    }

    pub fn grid(&self, coarse_n: usize) -> Result<GridHierarchy> {
        GridHierarchy::new(self.config.fine_n, coarse_n)
    }

    pub fn report(&self, u: &[f64]) -> Result<ErrorReport> {
        self.norms.error_report(&self.reference, u)
    }

    /// Spectral space, from `cache_dir` when a matching file exists.
    pub fn aux(&self, g: &GridHierarchy, l_star: usize, cache_dir: Option<&Path>) -> Result<Timed<AuxSpace>> {
        let t = Instant::now();
        let hash = aux_provenance(g, &self.field, l_star);
        let path = cache_dir.map(|d| d.join(format!("aux-{}.bin", &cem::hex(&hash)[..16])));
        if let Some(p) = path.as_deref().filter(|p| p.exists()) {
            match fs::File::open(p).map_err(Error::from).and_then(|f| read_aux_cache(g, &self.field, l_star, f, p)) {
                Ok(aux) => return Ok(Timed { value: aux, ms: ms(t), cached: true }),
                Err(e) => log::warn!("ignoring spectral cache {}: {e}", p.display()),
            }
        }
        let aux = build_aux_space(g, &self.field, l_star)?;
        if let Some(p) = path {
            let tmp = p.with_extension("tmp");
            write_aux_cache(&aux, &hash, fs::File::create(&tmp)?)?;
            fs::rename(tmp, p)?;
        }
        Ok(Timed { value: aux, ms: ms(t), cached: false })
    }

    /// Multiscale basis set, from `cache_dir` when a matching file exists.
    pub fn basis(
        &self,
        g: &GridHierarchy,
        aux: &AuxSpace,
        layers: usize,
        cache_dir: Option<&Path>,
    ) -> Result<Timed<MsBasisSet>> {
        let t = Instant::now();
        let hash = cem::provenance(g, &self.field, aux.l_star(), layers);
        let path = cache_dir.map(|d| d.join(format!("basis-{}.bin", &cem::hex(&hash)[..16])));
        if let Some(p) = path.as_deref().filter(|p| p.exists()) {
            match cem::load_cache(g, &hash, p) {
                Ok(set) => return Ok(Timed { value: set, ms: ms(t), cached: true }),
                Err(e) => log::warn!("ignoring basis cache {}: {e}", p.display()),
            }
        }
        let set = build_all(g, &self.field, aux, layers)?;
        if let Some(p) = path {
            cem::save_cache(g, &set, &p)?;
        }
        Ok(Timed { value: set, ms: ms(t), cached: false })
    }

    /// Online phase for one basis set.
    pub fn solve(&self, g: &GridHierarchy, basis: &MsBasisSet) -> Result<(Solution, ErrorReport)> {
        let cs = assemble_online(g, &self.field, basis, &self.source)?;
        let sol = solve_online(g, &cs, basis)?;
        let rep = self.report(&sol.fine)?;
        Ok((sol, rep))
    }

    /// Plain Q1 on the coarse mesh.
    pub fn baseline(&self, g: &GridHierarchy) -> Result<(Solution, ErrorReport)> {
        let sol = solve_coarse_q1(g, &self.field, &self.source)?;
        let rep = self.report(&sol.fine)?;
        Ok((sol, rep))
    }
}

/// A value with the wall-clock time it took and whether it came from cache.
#[derive(Debug, Clone)]
pub struct Timed<T> {
    pub value: T,
    pub ms: f64,
    pub cached: bool,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn h_label(coarse_n: usize) -> String {
    format!("{}", 1.0 / coarse_n as f64)
}

/// One line of `errors.csv` or `baseline.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub model: Model,
    pub fine_n: usize,
    pub coarse_n: usize,
    /// Oversampling layers; 0 for the coarse Q1 baseline.
    pub m: usize,
    /// Auxiliary functions per element; 0 for the baseline.
    pub l_star: usize,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub rel_energy: Option<f64>,
    pub rel_l2: Option<f64>,
    pub status: String,
    pub offline_ms: f64,
    pub online_ms: f64,
}

impl CsvRecord for ErrorRow {
    fn header() -> &'static [&'static str] {
        &[
            "model", "fine_n", "H", "m", "l_star", "sigma_plus", "sigma_minus", "rel_energy", "rel_l2", "status",
            "offline_ms", "online_ms",
        ]
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        vec![
            self.model.to_string(),
            self.fine_n.to_string(),
            h_label(self.coarse_n),
            self.m.to_string(),
            self.l_star.to_string(),
            fmt_f64(self.sigma_plus),
            fmt_f64(self.sigma_minus),
            opt(self.rel_energy),
            opt(self.rel_l2),
            self.status.clone(),
            format!("{:.3}", self.offline_ms),
            format!("{:.3}", self.online_ms),
        ]
    }
}

/// Extreme values of one eigenvalue index over all coarse elements.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectraRow {
    pub model: Model,
    pub fine_n: usize,
    pub coarse_n: usize,
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

impl CsvRecord for SpectraRow {
    fn header() -> &'static [&'static str] {
        &["model", "fine_n", "H", "eigenvalue", "min", "max"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.to_string(),
            self.fine_n.to_string(),
            h_label(self.coarse_n),
            self.index.to_string(),
            fmt_f64(self.min),
            fmt_f64(self.max),
        ]
    }
}

/// Relative difference of one basis function against the reference layers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayCsvRow {
    pub model: Model,
    pub fine_n: usize,
    pub coarse_n: usize,
    pub element: [usize; 2],
    /// 1-based eigenfunction index.
    pub eigen: usize,
    pub m: usize,
    pub m_ref: usize,
    pub rel_energy: f64,
    pub rel_l2: f64,
}

impl CsvRecord for DecayCsvRow {
    fn header() -> &'static [&'static str] {
        &["model", "fine_n", "H", "ex", "ey", "eigen", "m", "m_ref", "rel_energy", "rel_l2"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.model.to_string(),
            self.fine_n.to_string(),
            h_label(self.coarse_n),
            self.element[0].to_string(),
            self.element[1].to_string(),
            self.eigen.to_string(),
            self.m.to_string(),
            self.m_ref.to_string(),
            fmt_f64(self.rel_energy),
            fmt_f64(self.rel_l2),
        ]
    }
}

/// Everything a sweep produced.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub errors: Vec<ErrorRow>,
    pub baseline: Vec<ErrorRow>,
    pub spectra: Vec<SpectraRow>,
    pub decay: Vec<DecayCsvRow>,
    /// Spectral spaces and basis sets read from the cache.
    pub cache_hits: usize,
    /// Spectral spaces and basis sets computed in this run.
    pub offline_builds: usize,
}

impl RunSummary {
    fn count(&mut self, cached: bool) {
        if cached {
            self.cache_hits += 1;
        } else {
            self.offline_builds += 1;
        }
    }

    pub fn points(&self) -> usize {
        self.errors.len() + self.baseline.len()
    }

    pub fn failures(&self) -> usize {
        self.errors.iter().chain(&self.baseline).filter(|r| r.status != "ok").count()
    }

    /// 0 on success, 2 when every sweep point failed numerically.
    pub fn exit_code(&self) -> i32 {
        if self.points() > 0 && self.failures() == self.points() {
            2
        } else {
            0
        }
    }
}

/// Process exit status for the outcome of [`run`].
pub fn exit_code(result: &Result<RunSummary>) -> i32 {
    match result {
        Ok(s) => s.exit_code(),
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}

fn failed_row(base: &ErrorRow, e: &Error) -> ErrorRow {
    log::warn!("sweep point H=1/{} m={} l*={} failed: {e}", base.coarse_n, base.m, base.l_star);
    ErrorRow { status: format!("error:{}", e.tag()), ..base.clone() }
}

/// Runs the configured sweep and writes its outputs below `config.out`.
pub fn run(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    if config.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run_inner(config))
    } else {
        run_inner(config)
    }
}

fn run_inner(c: &ExperimentConfig) -> Result<RunSummary> {
    fs::create_dir_all(&c.out)?;
    fs::write(c.out.join("config.json"), c.to_json()?)?;
    let cache_dir = c.cache.then(|| c.out.join("cache"));
    if let Some(d) = &cache_dir {
        fs::create_dir_all(d)?;
    }
    let problem = Problem::new(c)?;
    log::info!("{} model, fine {}x{}, reference solved", c.model, c.fine_n, c.fine_n);
    if c.dump_fields {
        let fine = &problem.fine;
        save_vtk(fine, "coefficient", &[("source", &problem.source.values)], &[("sigma", problem.field.values())], &c.out.join("coefficient.vtk"))?;
        save_vtk(fine, "reference", &[("u_ref", &problem.reference), ("u_h", &problem.u_h.fine)], &[], &c.out.join("reference.vtk"))?;
    }

    let mut summary = RunSummary::default();
    for &cn in &c.coarse_n {
        let g = problem.grid(cn)?;
        for &l in &c.l_star {
            let template = ErrorRow {
                model: c.model,
                fine_n: c.fine_n,
                coarse_n: cn,
                m: 0,
                l_star: l,
                sigma_plus: c.sigma_plus,
                sigma_minus: c.sigma_minus,
                rel_energy: None,
                rel_l2: None,
                status: "ok".into(),
                offline_ms: 0.0,
                online_ms: 0.0,
            };
            let aux = match problem.aux(&g, l, cache_dir.as_deref()) {
                Ok(a) => {
                    summary.count(a.cached);
                    a
                }
                Err(e) => {
                    for &m in &c.layers {
                        summary.errors.push(failed_row(&ErrorRow { m, ..template.clone() }, &e));
                    }
                    continue;
                }
            };
            if c.spectra && l == *c.l_star.iter().max().expect("validated nonempty") {
                for r in aux.value.spectral_statistics().rows {
                    summary.spectra.push(SpectraRow { model: c.model, fine_n: c.fine_n, coarse_n: cn, index: r.index, min: r.min, max: r.max });
                }
            }
            for &m in &c.layers {
                let row = ErrorRow { m, ..template.clone() };
                let point = problem.basis(&g, &aux.value, m, cache_dir.as_deref()).and_then(|basis| {
                    summary.count(basis.cached);
                    let t = Instant::now();
                    let (sol, rep) = problem.solve(&g, &basis.value)?;
                    Ok((basis.ms, ms(t), sol, rep))
                });
                match point {
                    Ok((basis_ms, online_ms, sol, rep)) => {
                        log::info!("H=1/{cn} m={m} l*={l}: energy {:.3e}, L2 {:.3e}", rep.rel_energy, rep.rel_l2);
                        if c.dump_fields {
                            let err: Vec<f64> = problem.reference.iter().zip(&sol.fine).map(|(a, b)| a - b).collect();
                            let stem = format!("solution_H{cn}_m{m}_l{l}");
                            let cols: [(&str, &[f64]); 3] = [("u_ms", &sol.fine), ("u_ref", &problem.reference), ("error", &err)];
                            save_vtk(&problem.fine, &stem, &cols, &[], &c.out.join(format!("{stem}.vtk")))?;
                            save_node_csv(&problem.fine, &cols, &c.out.join(format!("{stem}.csv")))?;
                        }
                        summary.errors.push(ErrorRow {
                            rel_energy: Some(rep.rel_energy),
                            rel_l2: Some(rep.rel_l2),
                            offline_ms: aux.ms + basis_ms,
                            online_ms,
                            ..row
                        });
                    }
                    Err(e) => summary.errors.push(failed_row(&row, &e)),
                }
            }
        }
        if c.baseline {
            let row = ErrorRow {
                model: c.model,
                fine_n: c.fine_n,
                coarse_n: cn,
                m: 0,
                l_star: 0,
                sigma_plus: c.sigma_plus,
                sigma_minus: c.sigma_minus,
                rel_energy: None,
                rel_l2: None,
                status: "ok".into(),
                offline_ms: 0.0,
                online_ms: 0.0,
            };
            let t = Instant::now();
            match problem.baseline(&g) {
                Ok((_, rep)) => summary.baseline.push(ErrorRow {
                    rel_energy: Some(rep.rel_energy),
                    rel_l2: Some(rep.rel_l2),
                    online_ms: ms(t),
                    ..row
                }),
                Err(e) => summary.baseline.push(failed_row(&row, &e)),
            }
        }
    }

    if let Some(d) = &c.decay {
        let g = problem.grid(d.coarse_n)?;
        let l = *c.l_star.iter().max().expect("validated nonempty");
        let aux = problem.aux(&g, l, cache_dir.as_deref())?;
        let elem = g.element_index(d.element[0], d.element[1]);
        for r in decay_study(&g, &problem.field, &aux.value, elem, &d.layers, d.m_ref)? {
            summary.decay.push(DecayCsvRow {
                model: c.model,
                fine_n: c.fine_n,
                coarse_n: d.coarse_n,
                element: d.element,
                eigen: r.eigen + 1,
                m: r.layers,
                m_ref: d.m_ref,
                rel_energy: r.rel_energy,
                rel_l2: r.rel_l2,
            });
        }
    }

    save_csv(&summary.errors, &c.out.join("errors.csv"))?;
    if c.baseline {
        save_csv(&summary.baseline, &c.out.join("baseline.csv"))?;
    }
    if c.spectra {
        save_csv(&summary.spectra, &c.out.join("spectra.csv"))?;
    }
    if c.decay.is_some() {
        save_csv(&summary.decay, &c.out.join("decay.csv"))?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            fine_n: 32,
            coarse_n: vec![4, 8],
            layers: vec![1, 2],
            n_cells: 4,
            out: out.to_path_buf(),
            baseline: true,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn json_defaults_and_scalars() {
        let c = ExperimentConfig::from_json(r#"{"model":"cross","coarse_n":20,"layers":[2,3],"sigma_minus":1000}"#).unwrap();
        assert_eq!(c.model, Model::Cross);
        assert_eq!(c.coarse_n, vec![20]);
        assert_eq!(c.layers, vec![2, 3]);
        assert_eq!(c.l_star, vec![3]);
        assert_eq!(c.fine_n, 400);
        let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(ExperimentConfig::from_json(r#"{"modle":"flat"}"#).is_err());
        let s = ExperimentConfig::from_json(r#"{"source":{"kind":"four_gaussians","amplitude":2.0}}"#).unwrap();
        assert_eq!(s.source, SourceSpec::FourGaussians { amplitude: 2.0 });
    }

    #[test]
    fn validation_rejects_before_compute() {
        let ok = ExperimentConfig::default();
        assert!(ok.validate().is_ok());
        for c in [
            ExperimentConfig { layers: vec![], ..ok.clone() },
            ExperimentConfig { coarse_n: vec![30], ..ok.clone() },
            ExperimentConfig { sigma_minus: -1.0, ..ok.clone() },
            ExperimentConfig { n_cells: 3, ..ok.clone() },
            ExperimentConfig { model: Model::Flat, gamma: 1.5, ..ok.clone() },
            ExperimentConfig { source: SourceSpec::Exact, ..ok.clone() },
            ExperimentConfig { decay: Some(DecaySpec { m_ref: 5, ..DecaySpec::default() }), ..ok.clone() },
        ] {
            let e = c.validate().unwrap_err();
            assert!(e.is_validation(), "{e}");
            assert_eq!(exit_code(&Err(e)), 1);
        }
        assert_eq!("random".parse::<Model>().unwrap(), Model::Random);
        assert!("circle".parse::<Model>().is_err());
    }

    #[test]
    fn sweep_writes_outputs_and_reuses_cache() {
        let dir = std::env::temp_dir().join(format!("signcem-sweep-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        let c = ExperimentConfig { dump_fields: true, decay: Some(DecaySpec { coarse_n: 8, element: [1, 4], layers: vec![1, 2], m_ref: 3 }), ..small(&dir) };
        let first = run(&c).unwrap();
        assert_eq!(first.errors.len(), 4);
        assert_eq!(first.baseline.len(), 2);
        assert_eq!(first.decay.len(), 6);
        assert!(first.errors.iter().all(|r| r.status == "ok"));
        assert_eq!(first.exit_code(), 0);
        let text = fs::read_to_string(dir.join("errors.csv")).unwrap();
        assert!(text.starts_with("model,fine_n,H,m,l_star,sigma_plus,sigma_minus,rel_energy,rel_l2,status,offline_ms,online_ms\n"));
        for f in ["baseline.csv", "spectra.csv", "decay.csv", "coefficient.vtk", "solution_H8_m2_l3.vtk", "solution_H8_m2_l3.csv", "config.json"] {
            assert!(dir.join(f).exists(), "{f}");
        }
        let second = run(&c).unwrap();
        let strip = |s: &RunSummary| s.errors.iter().map(|r| (r.rel_energy, r.rel_l2)).collect::<Vec<_>>();
        assert_eq!(strip(&first), strip(&second));
        fs::remove_dir_all(&dir).unwrap();
    }
}
