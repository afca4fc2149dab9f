use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homlab::pipeline::{
    self, cell_stage, eps_solve, eps_spectra, gaps_from_rows, hom_stage, read_spectrum_csv, spectrum_path,
    spectrum_rows, write_cell_outputs, write_csv, write_solution_outputs, RunOptions, Stage, StageError,
    StageResult,
};
use homlab::{Config, Error};

#[derive(Parser)]
#[command(name = "homlab", version, about = "Periodic homogenization laboratory on the unit square")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Key-value configuration file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the cell problems and write cell_solution.json.
    Cell {
        #[command(flatten)]
        common: Common,
        /// Also write nodal correctors to cell_fields.csv.
        #[arg(long)]
        dump_fields: bool,
    },
    /// Solve the oscillating and homogenized problems at one epsilon.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: f64,
        /// Also write nodal fields to fields_E.csv.
        #[arg(long)]
        dump_fields: bool,
        /// Proceed even when the first eigenvalue is not positive.
        #[arg(long)]
        allow_noncoercive: bool,
    },
    /// Compute the four spectra at one epsilon and write spectrum_E.csv.
    Eigs {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epsilon: f64,
        /// Number of eigenvalues (defaults to k_eigen).
        #[arg(long)]
        k: Option<usize>,
        /// Seed of the random start block (defaults to the config seed).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge spectra of every configured epsilon into gaps.csv.
    Gaps {
        #[command(flatten)]
        common: Common,
    },
    /// Run the sweep and write rates.csv.
    Rates {
        #[command(flatten)]
        common: Common,
    },
    /// Compute eigenfunction boundary fluxes and write flux.csv.
    Flux {
        #[command(flatten)]
        common: Common,
    },
    /// Full pipeline: every artifact plus summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dump_fields: bool,
        #[arg(long)]
        allow_noncoercive: bool,
    },
}

fn load(common: &Common) -> StageResult<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::from_file(p),
        None => Ok(Config::default()),
    }
    .map_err(|source| StageError { stage: Stage::Config, source })?;
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| StageError { stage: Stage::Report, source: e.into() })?;
    Ok(cfg)
}

/// Config for a single-epsilon subcommand: that epsilon must satisfy the
/// resolution rule on its own.
fn with_epsilon(mut cfg: Config, eps: f64) -> StageResult<Config> {
    cfg.epsilons = vec![eps];
    cfg.validate().map_err(|source| StageError { stage: Stage::Config, source })?;
    Ok(cfg)
}

fn report_err(stage: Stage) -> impl Fn(Error) -> StageError {
    move |source| StageError { stage, source }
}

fn run(cli: Cli) -> StageResult<()> {
    match cli.command {
        Command::Cell { common, dump_fields } => {
            let cfg = load(&common)?;
            let cell = cell_stage(&cfg)?;
            write_cell_outputs(&cfg, &cell, dump_fields)?;
            let a = cell.report.a_hat;
            println!("A_hat = [[{}, {}], [{}, {}]]", a[0][0], a[0][1], a[1][0], a[1][1]);
            println!("M(W chi_w) = {}", cell.report.m_w_chi_w);
        }
        Command::Solve { common, epsilon, dump_fields, allow_noncoercive } => {
            let cfg = with_epsilon(load(&common)?, epsilon)?;
            let cell = cell_stage(&cfg)?;
            let hom = hom_stage(&cfg, &cell, 1, cfg.seed)?;
            let opts = RunOptions { allow_noncoercive, dump_fields };
            let out = eps_solve(&cfg, &cell, &hom, epsilon, None, opts)?;
            write_solution_outputs(&cfg, &hom, &out, dump_fields)?;
            let r = &out.record;
            println!(
                "epsilon {}: |w|_H1/|f| = {:.6e}, |u_eps - u_0|_L2 = {:.6e}, lambda_eps_1 = {:.6}",
                epsilon, r.h1_expansion, r.expansion.difference_l2, r.coercivity.lambda_eps_1
            );
        }
        Command::Eigs { common, epsilon, k, seed } => {
            let cfg = with_epsilon(load(&common)?, epsilon)?;
            let k = k.unwrap_or(cfg.k_eigen);
            let seed = seed.unwrap_or(cfg.seed);
            let cell = cell_stage(&cfg)?;
            let hom = hom_stage(&cfg, &cell, k, seed)?;
            let spectra = eps_spectra(&cfg, &cell.model, epsilon, k, seed)?;
            let rows = spectrum_rows(&spectra, &hom);
            write_csv(&spectrum_path(&cfg, epsilon), rows.iter().cloned()).map_err(report_err(Stage::Report))?;
            for r in rows {
                println!("{:<10} {:>2} {:.10}", r.tag, r.k, r.lambda);
            }
        }
        Command::Gaps { common } => {
            let cfg = load(&common)?;
            let mut gaps = Vec::new();
            let mut state = None;
            for &eps in &cfg.epsilons {
                let path = spectrum_path(&cfg, eps);
                let rows = if path.exists() {
                    read_spectrum_csv(&path).map_err(report_err(Stage::Report))?
                } else {
                    if state.is_none() {
                        let cell = cell_stage(&cfg)?;
                        let hom = hom_stage(&cfg, &cell, cfg.k_eigen, cfg.seed)?;
                        state = Some((cell, hom));
                    }
                    let (cell, hom) = state.as_ref().expect("initialized above");
                    let spectra = eps_spectra(&cfg, &cell.model, eps, cfg.k_eigen, cfg.seed)?;
                    let rows = spectrum_rows(&spectra, hom);
                    write_csv(&path, rows.iter().cloned()).map_err(report_err(Stage::Report))?;
                    rows
                };
                gaps.extend(gaps_from_rows(eps, &rows, cfg.k_eigen));
            }
            write_csv(&cfg.output_dir.join("gaps.csv"), gaps.iter().copied()).map_err(report_err(Stage::Report))?;
            for g in gaps {
                println!("eps {} k {}: gap {:.3e}, normalized {:.3e}", g.epsilon, g.k, g.gap, g.normalized_const);
            }
        }
        Command::Rates { common } => {
            let cfg = load(&common)?;
            let summary = pipeline::run_pipeline(&cfg, RunOptions::default())?;
            for r in &summary.rates {
                println!("{:<14} slope {:.4}  r2 {:.4}", r.quantity, r.slope, r.r2);
            }
        }
        Command::Flux { common } => {
            let cfg = load(&common)?;
            let cell = cell_stage(&cfg)?;
            let mut records = Vec::new();
            for &eps in &cfg.epsilons {
                let spectra = eps_spectra(&cfg, &cell.model, eps, cfg.k_eigen, cfg.seed)?;
                let grid = homlab::fem::DirichletGrid::new(cfg.domain_grid_n);
                records.extend(
                    homlab::analysis::flux_table(eps, &spectra.spec_eps, grid.into(), cfg.k_eigen)
                        .map_err(report_err(Stage::Flux))?,
                );
            }
            write_csv(&cfg.output_dir.join("flux.csv"), records.iter().copied()).map_err(report_err(Stage::Report))?;
            println!("note: {}", homlab::analysis::SQUARE_DOMAIN_CAVEAT);
            for r in records {
                println!("eps {} k {}: flux/lambda {:.4}, flux/(lambda(1+eps lambda)) {:.4}", r.epsilon, r.k, r.ratio_lower, r.ratio_upper);
            }
        }
        Command::Run { common, dump_fields, allow_noncoercive } => {
            let cfg = load(&common)?;
            let summary = pipeline::run_pipeline(&cfg, RunOptions { allow_noncoercive, dump_fields })?;
            for r in &summary.rates {
                println!("{:<14} slope {:.4}  r2 {:.4}", r.quantity, r.slope, r.r2);
            }
            for s in &summary.skipped_rates {
                println!("{:<14} skipped: {}", s.quantity, s.reason);
            }
            println!("note: {}", summary.flux_caveat);
            println!("wrote {} in {:.1} s", cfg.output_dir.display(), summary.seconds);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("homlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
