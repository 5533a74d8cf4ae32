use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use porochem::error::Error;
use porochem::scenarios::{run_pattern, steady_state_time, PatternRunSpec};
use porochem::solver::NewtonOptions;
use porochem::verification::{
    convergence_study_spatial, convergence_study_temporal, SpatialStudy, TemporalStudy,
};
use porochem_cli::check::run_self_checks;
use porochem_cli::config::{parse_config, RunConfig};
use porochem_cli::output::{write_csv_table, write_vtk};

#[derive(Parser)]
#[command(
    name = "porochem",
    about = "Coupled poroelasticity / reaction-diffusion solver",
    arg_required_else_help = true
)]
struct Cli {
    /// Plain-text key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh-refinement convergence study with the manufactured solution.
    ConvergeSpace {
        /// Number of uniform refinement levels (including the base mesh).
        #[arg(long)]
        refinements: Option<usize>,
    },
    /// Time-step convergence study on a fixed mesh.
    ConvergeTime {
        /// Comma-separated list of time steps.
        #[arg(long, value_delimiter = ',')]
        dt_list: Option<Vec<f64>>,
    },
    /// Pattern-formation run on the rectangular slab.
    Pattern {
        /// Seed of the initial concentration perturbation.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// One transient of the configured problem; writes the final state.
    SingleRun {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the built-in oracle/property checks and exit nonzero on failure.
    Check,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })?;
            parse_config(&text)
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn print_rates(label: &str, param: &[f64], columns: &[(&str, Vec<f64>)]) {
    println!("{label}:");
    for (name, col) in columns {
        let mut rates = String::new();
        for i in 0..col.len().saturating_sub(1) {
            let r = (col[i] / col[i + 1]).ln() / (param[i] / param[i + 1]).ln();
            rates.push_str(&format!(" {r:.3}"));
        }
        println!("  {name}: errors {col:?} rates{rates}");
    }
}

fn pattern_spec(cfg: &RunConfig, seed: Option<u64>) -> PatternRunSpec {
    PatternRunSpec {
        nx: cfg.nx,
        ny: cfg.ny,
        gamma: cfg.params.gamma,
        tau: cfg.params.tau,
        traction_amplitude: cfg.traction_amplitude,
        traction_omega: cfg.traction_omega,
        dt: cfg.dt,
        t_final: cfg.t_final,
        seed: seed.unwrap_or(cfg.seed),
        snapshot_times: cfg.snapshot_times.clone(),
        newton: NewtonOptions {
            tol: cfg.newton_tol,
            ..NewtonOptions::default()
        },
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let cfg = load_config(cli.config.as_deref())?;
    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));

    match cli.command {
        Command::ConvergeSpace { refinements } => {
            ensure_dir(&out_dir)?;
            let study = SpatialStudy {
                base_divisions: cfg.nx,
                levels: refinements.unwrap_or(cfg.refinements),
                dt: cfg.dt,
                t_final: cfg.t_final,
            };
            let opts = NewtonOptions {
                tol: cfg.newton_tol,
                ..NewtonOptions::default()
            };
            let table = convergence_study_spatial(&cfg.params, &study, &opts)?;
            let path = out_dir.join("space_errors.csv");
            write_csv_table(&table, &path)?;
            let cols = ["u_h1", "psi_l2", "p_h1", "w1_h1", "w2_h1"].map(|n| {
                (
                    n,
                    table
                        .rows
                        .iter()
                        .map(|r| r.get(n).expect("known column"))
                        .collect::<Vec<f64>>(),
                )
            });
            print_rates("spatial study", &table.param, &cols);
            println!("wrote {}", path.display());
        }
        Command::ConvergeTime { dt_list } => {
            ensure_dir(&out_dir)?;
            let study = TemporalStudy {
                divisions: cfg.nx.max(2),
                dt_list: dt_list.unwrap_or_else(|| cfg.dt_list.clone()),
                t_final: cfg.t_final,
            };
            let opts = NewtonOptions {
                tol: cfg.newton_tol,
                ..NewtonOptions::default()
            };
            let table = convergence_study_temporal(&cfg.params, &study, &opts)?;
            let path = out_dir.join("time_errors.csv");
            write_csv_table(&table, &path)?;
            let cols = ["u", "p", "psi", "w1", "w2"].map(|n| {
                (
                    n,
                    table
                        .rows
                        .iter()
                        .map(|r| r.get(n).expect("known column"))
                        .collect::<Vec<f64>>(),
                )
            });
            print_rates("temporal study", &table.param, &cols);
            println!("wrote {}", path.display());
        }
        Command::Pattern { seed } => {
            ensure_dir(&out_dir)?;
            let spec = pattern_spec(&cfg, seed);
            let run = run_pattern(&spec)?;
            let path = out_dir.join("variation.csv");
            write_csv_table(&run.series, &path)?;
            for (t, state) in &run.snapshots {
                let p = out_dir.join(format!("snapshot_t{t}.vtk"));
                write_vtk(&run.mesh, state, &p)?;
            }
            if let Some(e) = run.failure {
                eprintln!("pattern run aborted early: {e}");
                return Ok(false);
            }
            let threshold = 1e-4 * run.series.values.first().copied().unwrap_or(0.0);
            match steady_state_time(&run.series, threshold) {
                Some(t) => println!("steady state reached at t = {t}"),
                None => println!("no steady state before t = {}", spec.t_final),
            }
            println!("min concentration seen: {:.3e}", run.min_concentration);
            println!("wrote {}", path.display());
        }
        Command::SingleRun { seed } => {
            ensure_dir(&out_dir)?;
            let mut spec = pattern_spec(&cfg, seed);
            if spec.snapshot_times.is_empty() {
                spec.snapshot_times = vec![cfg.t_final];
            }
            let run = run_pattern(&spec)?;
            if let Some(e) = run.failure {
                eprintln!("run aborted early: {e}");
                return Ok(false);
            }
            for (t, state) in &run.snapshots {
                let p = out_dir.join(format!("state_t{t}.vtk"));
                write_vtk(&run.mesh, state, &p)?;
                println!("wrote {}", p.display());
            }
        }
        Command::Check => {
            let outcomes = run_self_checks();
            let mut all_ok = true;
            for o in &outcomes {
                println!(
                    "{}: {} ({})",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.detail
                );
                all_ok &= o.passed;
            }
            return Ok(all_ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
