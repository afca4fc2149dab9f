//! Config-driven experiment runner: cell → solve → eigs → expansion → rates →
//! flux → report. Every stage maps its failure to a distinct exit code, and
//! every artifact is written to `<name>.partial` first and renamed into place.

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    build_expansion, flux_table, jacobian_check, rate_fit, sample_chi_w, summarize_flux, ExpansionNorms,
    FluxRecord, FluxSummary, RateReport, SQUARE_DOMAIN_CAVEAT,
};
use crate::cell::{solve_cell, CellChecks, CellOptions, PeriodicCellSolution};
use crate::coefficients::{validate, CoefficientModel, Mat2, ValidationReport};
use crate::config::Config;
use crate::domain::{
    coercivity_check, homogenized_operators, solve_dirichlet_correctors, solve_eps, solve_homogenized,
    CoercivityReport, DirichletCorrectors, EpsProblem,
};
use crate::error::Error;
use crate::fem::{h1_seminorm, l2_norm, CgOptions, DirichletGrid, Grid, GridFunction};
use crate::spectral::{eigs, first_eig_record, gap_table, EigOptions, FirstEigRecord, GapRow, OperatorTag, Spectrum};

/// Pipeline stage, used to tag failures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Cell,
    Solve,
    Eigs,
    Expansion,
    Rates,
    Flux,
    Report,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Cell => 10,
            Stage::Solve => 11,
            Stage::Eigs => 12,
            Stage::Expansion => 13,
            Stage::Rates => 14,
            Stage::Flux => 15,
            Stage::Report => 16,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Cell => "cell",
            Stage::Solve => "solve",
            Stage::Eigs => "eigs",
            Stage::Expansion => "expansion",
            Stage::Rates => "rates",
            Stage::Flux => "flux",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait AtStage<T> {
    fn at(self, stage: Stage) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::error::Result<T> {
    fn at(self, stage: Stage) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

/// Switches that are not part of the config file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    /// Solve even when `λ_ε,1 ≤ 0` (exploration only).
    pub allow_noncoercive: bool,
    pub dump_fields: bool,
}

fn cg_options(cfg: &Config, n: usize) -> CgOptions {
    let mut cg = CgOptions::for_grid(n).with_tol(cfg.cg_tol);
    if let Some(m) = cfg.cg_max_iter {
        cg.max_iter = m;
    }
    cg
}

fn eig_options(cfg: &Config, k: usize, seed: u64) -> EigOptions {
    EigOptions::new(k).with_seed(seed).with_tol(cfg.eig_tol)
}

/// `ε` as it appears in file names: `0.25`, `0.125`, ...
pub fn epsilon_label(eps: f64) -> String {
    eps.to_string()
}

// ---------------------------------------------------------------------------
// cell

#[derive(Clone, Debug, Serialize)]
pub struct FluxCorrectorSummary {
    pub max_abs_mean: f64,
    /// Against hat test functions, per column `j`.
    pub weak_divergence: [f64; 2],
    /// Against smooth trigonometric test functions, per column `j`.
    pub smooth_divergence: [f64; 2],
}

#[derive(Clone, Debug, Serialize)]
pub struct CellReport {
    pub preset: String,
    pub kappa: f64,
    pub cell_grid_n: usize,
    pub h: f64,
    pub a_hat: Mat2,
    pub a_hat_eigenvalues: [f64; 2],
    pub m_w_chi_w: f64,
    pub checks: CellChecks,
    pub flux_correctors: FluxCorrectorSummary,
    pub aux_rhs_means: [f64; 4],
    pub validation: ValidationReport,
    pub seconds: f64,
}

pub struct CellStage {
    pub model: CoefficientModel,
    pub solution: PeriodicCellSolution,
    pub report: CellReport,
}

pub fn cell_stage(cfg: &Config) -> StageResult<CellStage> {
    let model = cfg.model().at(Stage::Config)?;
    let start = Instant::now();
    let mut opts = CellOptions::new(cfg.cell_grid_n);
    if let Some(m) = cfg.cg_max_iter {
        opts.cg.max_iter = m;
    }
    let solution = solve_cell(&model, &opts).at(Stage::Cell)?;
    let f = &solution.flux;
    let mut max_abs_mean: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            max_abs_mean = max_abs_mean.max(f.mean(i, j).abs());
        }
    }
    let report = CellReport {
        preset: model.preset_name().to_string(),
        kappa: model.kappa(),
        cell_grid_n: cfg.cell_grid_n,
        h: 1.0 / cfg.cell_grid_n as f64,
        a_hat: solution.a_hat,
        a_hat_eigenvalues: solution.a_hat_eigenvalues(),
        m_w_chi_w: solution.m_w_chi_w,
        checks: solution.checks,
        flux_correctors: FluxCorrectorSummary {
            max_abs_mean,
            weak_divergence: [f.weak_divergence_residual(0), f.weak_divergence_residual(1)],
            smooth_divergence: [f.smooth_divergence_residual(0), f.smooth_divergence_residual(1)],
        },
        aux_rhs_means: solution.aux.rhs_means,
        validation: validate(&model, 128),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(CellStage { model, solution, report })
}

pub fn write_cell_outputs(cfg: &Config, cell: &CellStage, dump_fields: bool) -> StageResult<()> {
    let dir = &cfg.output_dir;
    write_json(&dir.join("cell_solution.json"), &cell.report).at(Stage::Report)?;
    if dump_fields {
        let s = &cell.solution;
        let g = Grid::from(s.grid);
        let rows = (0..g.node_count()).map(|k| {
            let y = g.node_coords(k);
            CellFieldRow { y1: y[0], y2: y[1], chi1: s.chi[0].values()[k], chi2: s.chi[1].values()[k], chi_w: s.chi_w.values()[k] }
        });
        write_csv(&dir.join("cell_fields.csv"), rows).at(Stage::Report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CellFieldRow {
    y1: f64,
    y2: f64,
    chi1: f64,
    chi2: f64,
    chi_w: f64,
}

// ---------------------------------------------------------------------------
// homogenized operator on the domain grid

pub struct HomStage {
    pub grid: DirichletGrid,
    pub spec_hom: Spectrum,
    pub spec_hom_prime: Spectrum,
    pub lambda0_prime_1: f64,
    pub u0: GridFunction,
}

pub fn hom_stage(cfg: &Config, cell: &CellStage, k: usize, seed: u64) -> StageResult<HomStage> {
    let grid = DirichletGrid::new(cfg.domain_grid_n);
    let a_hat = cell.solution.a_hat;
    let m = cell.solution.m_w_chi_w;
    let (spec_hom, spec_hom_prime) = hom_spectra(cfg, &a_hat, m, k, seed)?;
    let lambda0_prime_1 = spec_hom_prime.eigenvalues[0];
    let model = &cell.model;
    let u0 = solve_homogenized(&a_hat, m, grid, |x| model.f(x), Some(lambda0_prime_1), &cg_options(cfg, grid.n()))
        .at(Stage::Solve)?;
    Ok(HomStage { grid, spec_hom, spec_hom_prime, lambda0_prime_1, u0 })
}

/// Spectra of `−div(Â∇) + M` and `−div(Â∇)` on the domain grid.
fn hom_spectra(cfg: &Config, a_hat: &Mat2, m: f64, k: usize, seed: u64) -> StageResult<(Spectrum, Spectrum)> {
    let grid = DirichletGrid::new(cfg.domain_grid_n);
    let (k_prime, mass) = homogenized_operators(a_hat, grid).at(Stage::Eigs)?;
    let opts = eig_options(cfg, k, seed);
    let spec_hom_prime = eigs(&k_prime, &mass, &opts).at(Stage::Eigs)?;
    let spec_hom = if m != 0.0 {
        let k_hom = k_prime.add_scaled(&mass, m);
        eigs(&k_hom, &mass, &opts.with_fallback_shift(m.abs() + 1.0)).at(Stage::Eigs)?
    } else {
        spec_hom_prime.clone()
    };
    Ok((spec_hom, spec_hom_prime))
}

// ---------------------------------------------------------------------------
// per-ε work

pub struct EpsSpectra {
    pub epsilon: f64,
    pub spec_eps: Spectrum,
    pub spec_eps_prime: Spectrum,
    pub matched: Option<MatchedReference>,
}

/// Homogenized spectra built from a cell solve on `p = ε·domain_grid_n`
/// cells per period. The discrete `ε`-operator samples its coefficients at
/// exactly the quadrature points of that cell grid, so `Â_p` and `M_p` are the
/// constants its spectrum actually converges to; comparing against the
/// `cell_grid_n` constants instead mixes an `O((h/ε)²)` bias, which grows as
/// `ε` shrinks, into the gaps.
pub struct MatchedReference {
    pub cell_grid_n: usize,
    pub a_hat: Mat2,
    pub m_w_chi_w: f64,
    pub spec_hom: Spectrum,
    pub spec_hom_prime: Spectrum,
}

/// `ε·n` when it is a whole number of cells (at least 16, as the resolution
/// rule implies).
pub fn matched_cell_n(eps: f64, domain_grid_n: usize) -> Option<usize> {
    let p = eps * domain_grid_n as f64;
    let r = p.round();
    ((p - r).abs() <= 1e-9 * p.max(1.0) && r >= crate::domain::CELLS_PER_PERIOD).then_some(r as usize)
}

fn matched_reference(cfg: &Config, model: &CoefficientModel, eps: f64, k: usize, seed: u64) -> StageResult<Option<MatchedReference>> {
    let Some(p) = matched_cell_n(eps, cfg.domain_grid_n) else {
        return Ok(None);
    };
    let mut copts = CellOptions::new(p);
    if let Some(m) = cfg.cg_max_iter {
        copts.cg.max_iter = m;
    }
    let cell = solve_cell(model, &copts).at(Stage::Cell)?;
    let (spec_hom, spec_hom_prime) = hom_spectra(cfg, &cell.a_hat, cell.m_w_chi_w, k, seed)?;
    Ok(Some(MatchedReference { cell_grid_n: p, a_hat: cell.a_hat, m_w_chi_w: cell.m_w_chi_w, spec_hom, spec_hom_prime }))
}

pub fn eps_spectra(cfg: &Config, model: &CoefficientModel, eps: f64, k: usize, seed: u64) -> StageResult<EpsSpectra> {
    let problem = EpsProblem::new(model.clone(), eps, cfg.domain_grid_n).at(Stage::Config)?;
    let mass = problem.mass();
    let opts = eig_options(cfg, k, seed);
    let k_prime = problem.stiffness_prime().at(Stage::Eigs)?;
    let spec_eps_prime = eigs(&k_prime, &mass, &opts).at(Stage::Eigs)?;
    let spec_eps = if model.has_potential() {
        let k_eps = problem.stiffness().at(Stage::Eigs)?;
        eigs(&k_eps, &mass, &opts.with_fallback_shift(problem.safe_shift())).at(Stage::Eigs)?
    } else {
        spec_eps_prime.clone()
    };
    let matched = matched_reference(cfg, model, eps, k, seed)?;
    Ok(EpsSpectra { epsilon: eps, spec_eps, spec_eps_prime, matched })
}

impl EpsSpectra {
    /// Homogenized spectrum and `λ′_0,1`, `M(Wχ_w)` to compare against:
    /// the matched reference when there is one, else the shared one.
    pub fn reference<'a>(&'a self, hom: &'a HomStage, cell: &CellReport) -> (&'a Spectrum, f64, f64) {
        match &self.matched {
            Some(m) => (&m.spec_hom, m.spec_hom_prime.eigenvalues[0], m.m_w_chi_w),
            None => (&hom.spec_hom, hom.lambda0_prime_1, cell.m_w_chi_w),
        }
    }
}

/// Everything recorded by the `solve` stage at one `ε`.
#[derive(Clone, Debug, Serialize)]
pub struct SolutionRecord {
    pub epsilon: f64,
    pub domain_grid_n: usize,
    pub u_eps_l2: f64,
    pub u_eps_h1: f64,
    pub u0_l2: f64,
    pub u0_h1: f64,
    pub f_l2: f64,
    pub expansion: ExpansionNorms,
    /// `‖w_ε‖_{H¹} / ‖f‖_{L²}`
    pub h1_expansion: f64,
    /// `max |Φ_j − x_j|`
    pub phi_supnorm: [f64; 2],
    /// `min det ∇Φ` over the boundary layer of width `ε`
    pub jacobian_min_det: f64,
    pub coercivity: CoercivityReport,
    pub seconds: f64,
}

pub struct SolveOutcome {
    pub record: SolutionRecord,
    pub u_eps: GridFunction,
    pub correctors: DirichletCorrectors,
}

fn h1_norm(u: &GridFunction) -> f64 {
    (l2_norm(u).powi(2) + h1_seminorm(u).powi(2)).sqrt()
}

/// Solves at one `ε` and builds the corrector expansion. `lambda_eps_1` is
/// computed when not supplied.
pub fn eps_solve(
    cfg: &Config,
    cell: &CellStage,
    hom: &HomStage,
    eps: f64,
    lambda_eps_1: Option<f64>,
    opts: RunOptions,
) -> StageResult<SolveOutcome> {
    let start = Instant::now();
    let model = &cell.model;
    let m = cell.solution.m_w_chi_w;
    let problem = EpsProblem::new(model.clone(), eps, cfg.domain_grid_n).at(Stage::Config)?;
    let coercivity = match lambda_eps_1 {
        Some(l) => CoercivityReport {
            epsilon: eps,
            lambda_eps_1: l,
            lambda0_prime_1: hom.lambda0_prime_1,
            m_w_chi_w: m,
            limit: hom.lambda0_prime_1 + m,
            coercive: l > 0.0,
        },
        None => coercivity_check(&problem, hom.lambda0_prime_1, m, &eig_options(cfg, 1, cfg.seed)).at(Stage::Eigs)?,
    };
    if !coercivity.coercive && !opts.allow_noncoercive {
        return Err(StageError { stage: Stage::Solve, source: Error::Coercivity { lambda_eps_1: coercivity.lambda_eps_1 } });
    }
    let cg = cg_options(cfg, cfg.domain_grid_n);
    let u_eps = solve_eps(&problem, |x| model.f(x), &cg).at(Stage::Solve)?;
    let correctors = solve_dirichlet_correctors(&problem, &cg).at(Stage::Solve)?;
    let grid = Grid::from(problem.grid());
    let chi_w = sample_chi_w(&cell.solution, grid, eps);
    let expansion = build_expansion(&u_eps, &hom.u0, &correctors, &chi_w, eps).at(Stage::Expansion)?;
    let norms = expansion.norms();
    let f_l2 = model.f_l2_norm();
    let record = SolutionRecord {
        epsilon: eps,
        domain_grid_n: cfg.domain_grid_n,
        u_eps_l2: l2_norm(&u_eps),
        u_eps_h1: h1_norm(&u_eps),
        u0_l2: l2_norm(&hom.u0),
        u0_h1: h1_norm(&hom.u0),
        f_l2,
        expansion: norms,
        h1_expansion: norms.w_h1 / f_l2,
        phi_supnorm: [correctors.sup_deviation(0), correctors.sup_deviation(1)],
        jacobian_min_det: jacobian_check(&correctors, 1.0),
        coercivity,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(SolveOutcome { record, u_eps, correctors })
}

pub fn write_solution_outputs(cfg: &Config, hom: &HomStage, out: &SolveOutcome, dump_fields: bool) -> StageResult<()> {
    let label = epsilon_label(out.record.epsilon);
    write_json(&cfg.output_dir.join(format!("solution_{label}.json")), &out.record).at(Stage::Report)?;
    if dump_fields {
        let g = out.u_eps.grid();
        let rows = (0..g.node_count()).map(|k| {
            let x = g.node_coords(k);
            FieldRow {
                x1: x[0],
                x2: x[1],
                u_eps: out.u_eps.values()[k],
                u_0: hom.u0.values()[k],
                phi1: out.correctors.phi[0].values()[k],
                phi2: out.correctors.phi[1].values()[k],
            }
        });
        write_csv(&cfg.output_dir.join(format!("fields_{label}.csv")), rows).at(Stage::Report)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FieldRow {
    x1: f64,
    x2: f64,
    u_eps: f64,
    u_0: f64,
    phi1: f64,
    phi2: f64,
}

// ---------------------------------------------------------------------------
// spectra files

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub tag: String,
    pub k: usize,
    pub lambda: f64,
}

pub fn spectrum_rows(eps: &EpsSpectra, hom: &HomStage) -> Vec<SpectrumRow> {
    let mut rows = Vec::new();
    let sets = [
        (OperatorTag::Eps, &eps.spec_eps),
        (OperatorTag::EpsPrime, &eps.spec_eps_prime),
        (OperatorTag::Hom, &hom.spec_hom),
        (OperatorTag::HomPrime, &hom.spec_hom_prime),
    ];
    let matched = eps.matched.iter().flat_map(|m| [(OperatorTag::HomMatched, &m.spec_hom), (OperatorTag::HomPrimeMatched, &m.spec_hom_prime)]);
    for (tag, spec) in sets.into_iter().chain(matched) {
        for (i, l) in spec.eigenvalues.iter().enumerate() {
            rows.push(SpectrumRow { tag: tag.as_str().to_string(), k: i + 1, lambda: *l });
        }
    }
    rows
}

pub fn spectrum_path(cfg: &Config, eps: f64) -> PathBuf {
    cfg.output_dir.join(format!("spectrum_{}.csv", epsilon_label(eps)))
}

pub fn read_spectrum_csv(path: &Path) -> crate::error::Result<Vec<SpectrumRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

fn eigenvalues_with_tag(rows: &[SpectrumRow], tag: OperatorTag) -> Vec<f64> {
    let mut v: Vec<(usize, f64)> = rows.iter().filter(|r| r.tag == tag.as_str()).map(|r| (r.k, r.lambda)).collect();
    v.sort_by_key(|p| p.0);
    v.into_iter().map(|p| p.1).collect()
}

/// Gap rows from a spectrum file: `eps` against `hom_matched` when present,
/// else against `hom`.
pub fn gaps_from_rows(eps: f64, rows: &[SpectrumRow], k_max: usize) -> Vec<GapRow> {
    let mut reference = eigenvalues_with_tag(rows, OperatorTag::HomMatched);
    if reference.is_empty() {
        reference = eigenvalues_with_tag(rows, OperatorTag::Hom);
    }
    let as_spec = |values: Vec<f64>| Spectrum {
        residuals: vec![0.0; values.len()],
        eigenvectors: Vec::new(),
        eigenvalues: values,
        shift: 0.0,
        basis_size: 0,
    };
    gap_table(
        eps,
        &as_spec(eigenvalues_with_tag(rows, OperatorTag::Eps)),
        &as_spec(reference),
        k_max,
    )
}

// ---------------------------------------------------------------------------
// rates

#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub quantity: String,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SkippedRate {
    pub quantity: String,
    pub reason: String,
}

/// Fits every tracked quantity; quantities without three positive points are
/// skipped with the reason recorded.
pub fn fit_rates(series: &[(String, Vec<(f64, f64)>)]) -> StageResult<(Vec<RateReport>, Vec<SkippedRate>)> {
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for (name, points) in series {
        match rate_fit(name, points) {
            Ok(r) => fits.push(r),
            Err(Error::InsufficientData(reason)) => skipped.push(SkippedRate { quantity: name.clone(), reason }),
            Err(e) => return Err(e).at(Stage::Rates),
        }
    }
    Ok((fits, skipped))
}

/// Renders a log-log plot of every fitted quantity.
pub fn rates_svg(fits: &[RateReport]) -> String {
    let (w, h, pad) = (640.0, 480.0, 60.0);
    let pts: Vec<(f64, f64)> =
        fits.iter().flat_map(|r| r.points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).map(|p| (p.0.log10(), p.1.log10()))).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !(x1 > x0) {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if !(y1 > y0) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f", "#17becf", "#bcbd22"];
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log10 epsilon</text>\n\
         <text x=\"14\" y=\"{}\" transform=\"rotate(-90 14 {})\" text-anchor=\"middle\">log10 value</text>\n",
        h - pad,
        w - pad,
        h - pad,
        h - pad,
        w / 2.0,
        h - 20.0,
        h / 2.0,
        h / 2.0
    );
    for (i, r) in fits.iter().enumerate() {
        let c = colors[i % colors.len()];
        let line: Vec<String> = r
            .points
            .iter()
            .filter(|p| p.0 > 0.0 && p.1 > 0.0)
            .map(|p| format!("{:.2},{:.2}", sx(p.0.log10()), sy(p.1.log10())))
            .collect();
        s += &format!("<polyline fill=\"none\" stroke=\"{c}\" points=\"{}\"/>\n", line.join(" "));
        for p in &line {
            let (x, y) = p.split_once(',').unwrap();
            s += &format!("<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{c}\"/>\n");
        }
        s += &format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{c}\">{} (slope {:.3})</text>\n",
            w - pad - 170.0,
            pad + 14.0 * i as f64,
            r.quantity,
            r.slope
        );
    }
    s += "</svg>\n";
    s
}

// ---------------------------------------------------------------------------
// full run

#[derive(Clone, Debug, Serialize)]
pub struct EpsilonSummary {
    pub solution: SolutionRecord,
    /// Cells per period of the matched homogenized reference, if any.
    pub reference_cell_grid_n: Option<usize>,
    pub reference_a_hat: Mat2,
    pub reference_m_w_chi_w: f64,
    /// Against the matched reference (see [`MatchedReference`]).
    pub first_eig: FirstEigRecord,
    pub gaps: Vec<GapRow>,
    /// Against the `cell_grid_n` constants.
    pub first_eig_raw: FirstEigRecord,
    pub gaps_raw: Vec<GapRow>,
    pub flux: Vec<FluxRecord>,
    pub eig_residual_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub config: Config,
    pub cell: CellReport,
    pub lambda0_prime_1: f64,
    pub hom_eigenvalues: Vec<f64>,
    pub hom_prime_eigenvalues: Vec<f64>,
    pub epsilons: Vec<EpsilonSummary>,
    pub rates: Vec<RateReport>,
    pub skipped_rates: Vec<SkippedRate>,
    pub flux_summary: FluxSummary,
    pub flux_caveat: &'static str,
    /// Smallest swept `ε` at which `λ_ε,1 > 0`.
    pub epsilon_1: Option<f64>,
    pub seconds: f64,
}

impl RunSummary {
    pub fn rate(&self, quantity: &str) -> Option<&RateReport> {
        self.rates.iter().find(|r| r.quantity == quantity)
    }
}

struct EpsWork {
    spectra: EpsSpectra,
    solve: SolveOutcome,
    flux: Vec<FluxRecord>,
}

fn eps_work(cfg: &Config, cell: &CellStage, hom: &HomStage, eps: f64, opts: RunOptions) -> StageResult<EpsWork> {
    let spectra = eps_spectra(cfg, &cell.model, eps, cfg.k_eigen, cfg.seed)?;
    let solve = eps_solve(cfg, cell, hom, eps, Some(spectra.spec_eps.eigenvalues[0]), opts)?;
    let flux = flux_table(eps, &spectra.spec_eps, Grid::from(hom.grid), cfg.k_eigen).at(Stage::Flux)?;
    Ok(EpsWork { spectra, solve, flux })
}

/// Runs every stage and writes all artifacts into `cfg.output_dir`.
pub fn run_pipeline(cfg: &Config, opts: RunOptions) -> StageResult<RunSummary> {
    let start = Instant::now();
    cfg.validate().at(Stage::Config)?;
    fs::create_dir_all(&cfg.output_dir).map_err(Error::from).at(Stage::Report)?;

    let cell = cell_stage(cfg)?;
    write_cell_outputs(cfg, &cell, opts.dump_fields)?;
    let hom = hom_stage(cfg, &cell, cfg.k_eigen, cfg.seed)?;

    let work: Vec<EpsWork> =
        cfg.epsilons.par_iter().map(|&eps| eps_work(cfg, &cell, &hom, eps, opts)).collect::<StageResult<_>>()?;

    let mut summaries = Vec::new();
    let mut all_gaps = Vec::new();
    let mut all_flux = Vec::new();
    for w in &work {
        let eps = w.spectra.epsilon;
        write_csv(&spectrum_path(cfg, eps), spectrum_rows(&w.spectra, &hom)).at(Stage::Report)?;
        write_solution_outputs(cfg, &hom, &w.solve, opts.dump_fields)?;
        let (spec_ref, l0p_ref, m_ref) = w.spectra.reference(&hom, &cell.report);
        let gaps = gap_table(eps, &w.spectra.spec_eps, spec_ref, cfg.k_eigen);
        let first = first_eig_record(eps, &w.spectra.spec_eps, &w.spectra.spec_eps_prime, l0p_ref, m_ref);
        let gaps_raw = gap_table(eps, &w.spectra.spec_eps, &hom.spec_hom, cfg.k_eigen);
        let first_raw =
            first_eig_record(eps, &w.spectra.spec_eps, &w.spectra.spec_eps_prime, hom.lambda0_prime_1, cell.solution.m_w_chi_w);
        all_gaps.extend(gaps.iter().copied());
        all_flux.extend(w.flux.iter().copied());
        let eig_residual_max = w
            .spectra
            .spec_eps
            .residuals
            .iter()
            .chain(&w.spectra.spec_eps_prime.residuals)
            .fold(0.0f64, |m, r| m.max(*r));
        let matched = w.spectra.matched.as_ref();
        summaries.push(EpsilonSummary {
            solution: w.solve.record.clone(),
            reference_cell_grid_n: matched.map(|m| m.cell_grid_n),
            reference_a_hat: matched.map_or(cell.solution.a_hat, |m| m.a_hat),
            reference_m_w_chi_w: m_ref,
            first_eig: first,
            gaps,
            first_eig_raw: first_raw,
            gaps_raw,
            flux: w.flux.clone(),
            eig_residual_max,
        });
    }
    write_csv(&cfg.output_dir.join("gaps.csv"), all_gaps.iter().copied()).at(Stage::Report)?;
    write_csv(&cfg.output_dir.join("flux.csv"), all_flux.iter().copied()).at(Stage::Report)?;

    let mut series: Vec<(String, Vec<(f64, f64)>)> = vec![
        ("h1_expansion".into(), summaries.iter().map(|s| (s.solution.epsilon, s.solution.h1_expansion)).collect()),
        ("l2_gap".into(), summaries.iter().map(|s| (s.solution.epsilon, s.solution.expansion.difference_l2)).collect()),
    ];
    for k in 1..=cfg.k_eigen.min(5) {
        series.push((
            format!("eig_gap_k{k}"),
            summaries.iter().map(|s| (s.solution.epsilon, s.gaps[k - 1].gap)).collect(),
        ));
    }
    series.push(("thm21_d8".into(), summaries.iter().map(|s| (s.first_eig.epsilon, s.first_eig.d8)).collect()));
    series.push(("phi_supnorm".into(), summaries.iter().map(|s| (s.solution.epsilon, s.solution.phi_supnorm[0])).collect()));
    for k in 1..=cfg.k_eigen.min(5) {
        series.push((
            format!("eig_gap_raw_k{k}"),
            summaries.iter().map(|s| (s.solution.epsilon, s.gaps_raw[k - 1].gap)).collect(),
        ));
    }
    series.push(("thm21_d8_raw".into(), summaries.iter().map(|s| (s.first_eig_raw.epsilon, s.first_eig_raw.d8)).collect()));
    let (fits, skipped) = fit_rates(&series)?;
    let rows = fits.iter().map(|r| RateRow { quantity: r.quantity.clone(), slope: r.slope, intercept: r.intercept, r2: r.r2 });
    write_csv(&cfg.output_dir.join("rates.csv"), rows).at(Stage::Report)?;
    if cfg.emit_svg {
        atomic_write(&cfg.output_dir.join("rates.svg"), rates_svg(&fits).as_bytes()).at(Stage::Report)?;
    }

    let epsilon_1 = summaries
        .iter()
        .filter(|s| s.solution.coercivity.coercive)
        .map(|s| s.solution.epsilon)
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.min(e))));
    let summary = RunSummary {
        config: cfg.clone(),
        cell: cell.report.clone(),
        lambda0_prime_1: hom.lambda0_prime_1,
        hom_eigenvalues: hom.spec_hom.eigenvalues.clone(),
        hom_prime_eigenvalues: hom.spec_hom_prime.eigenvalues.clone(),
        flux_summary: summarize_flux(&all_flux),
        flux_caveat: SQUARE_DOMAIN_CAVEAT,
        epsilons: summaries,
        rates: fits,
        skipped_rates: skipped,
        epsilon_1,
        seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&cfg.output_dir.join("summary.json"), &summary).at(Stage::Report)?;
    Ok(summary)
}

/// The homogenized problem's analytic first eigenvalue when `Â = I`:
/// `2π² + M(Wχ_w)`.
pub fn identity_first_eig_target(m_w_chi_w: f64) -> f64 {
    2.0 * PI * PI + m_w_chi_w
}

// ---------------------------------------------------------------------------
// file output

/// Writes `<path>.partial` and renames it onto `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> crate::error::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut partial = path.as_os_str().to_owned();
    partial.push(".partial");
    let partial = PathBuf::from(partial);
    fs::write(&partial, bytes)?;
    fs::rename(&partial, path)?;
    Ok(())
}

/// CSV with a header row, `,` separators and LF line endings.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> crate::error::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    atomic_write(path, &bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> crate::error::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let stages = [Stage::Config, Stage::Cell, Stage::Solve, Stage::Eigs, Stage::Expansion, Stage::Rates, Stage::Flux, Stage::Report];
        let mut codes: Vec<i32> = stages.iter().map(|s| s.exit_code()).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), stages.len());
        assert!(codes.iter().all(|c| *c != 0 && *c != 1));
    }

    #[test]
    fn labels() {
        assert_eq!(epsilon_label(0.25), "0.25");
        assert_eq!(epsilon_label(1.0 / 16.0), "0.0625");
        assert_eq!(epsilon_label(1.0), "1");
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        write_csv(&p, vec![SpectrumRow { tag: "eps".into(), k: 1, lambda: 0.5 }]).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text, "tag,k,lambda\neps,1,0.5\n");
        assert!(!dir.path().join("x.csv.partial").exists());
        assert_eq!(read_spectrum_csv(&p).unwrap()[0].lambda, 0.5);
    }

    #[test]
    fn skipped_rates_do_not_fail() {
        let series = vec![
            ("a".to_string(), vec![(0.25, 0.25), (0.125, 0.125), (0.0625, 0.0625)]),
            ("b".to_string(), vec![(0.25, 0.0), (0.125, 0.0), (0.0625, 0.0)]),
        ];
        let (fits, skipped) = fit_rates(&series).unwrap();
        assert_eq!(fits.len(), 1);
        assert_eq!(skipped[0].quantity, "b");
        let svg = rates_svg(&fits);
        assert!(svg.starts_with("<svg") && svg.contains("slope 1.000"));
    }

    #[test]
    fn matched_reference_needs_whole_cells() {
        assert_eq!(matched_cell_n(0.25, 256), Some(64));
        assert_eq!(matched_cell_n(1.0 / 16.0, 256), Some(16));
        assert_eq!(matched_cell_n(0.3, 256), None);
        assert_eq!(matched_cell_n(1.0 / 32.0, 256), None);
    }
}
