mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use eit_cem::experiments::{self, SweepReport};
use eit_cem::{
    assemble_cem, assemble_shunt, electrode_currents, CemSolver, FESolution, ForwardModel, Mesh, ShuntSolver,
    SolverOptions,
};

use config::{parse_levels, BetaArg, ConfigError, ModelKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "eitcem",
    version,
    about = "Complete electrode model forward solves and convergence sweeps"
)]
struct Cli {
    /// TOML file with [geometry] [model] [sweep] [output] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides output.dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the configured mesh and write it in text form.
    Mesh,
    /// Solve one forward problem and write potentials and voltages.
    Solve {
        /// Contact impedance, or `shunt` for perfect contacts.
        #[arg(long)]
        beta: Option<BetaArg>,
    },
    /// Run a contact-impedance (z) or mesh-size (h) sweep.
    Sweep {
        kind: SweepKindArg,
        /// Contact model of an h-sweep: a positive number or `shunt`.
        #[arg(long)]
        beta: Option<BetaArg>,
        /// Inclusive refinement levels of an h-sweep, e.g. `1..5`.
        #[arg(long, value_parser = parse_level_range)]
        levels: Option<Levels>,
    },
}

#[derive(Debug, Clone)]
struct Levels(Vec<usize>);

fn parse_level_range(s: &str) -> Result<Levels, String> {
    parse_levels(s).map(Levels)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepKindArg {
    Z,
    H,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for configuration errors, 3 for numerical failures, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<eit_cem::Error>() {
            return match e {
                eit_cem::Error::Config(_) | eit_cem::Error::Domain(_) | eit_cem::Error::SizeMismatch { .. } => 2,
                eit_cem::Error::Numerical { .. } | eit_cem::Error::SweepPoint { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(config::config_error("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match cli.command {
        Command::Mesh => cmd_mesh(&cfg),
        Command::Solve { beta } => {
            if let Some(b) = beta {
                cfg.apply_beta(b);
            }
            cmd_solve(&cfg)
        }
        Command::Sweep { kind, beta, levels } => {
            if let Some(b) = beta {
                cfg.apply_beta(b);
            }
            if let Some(l) = levels {
                cfg.sweep.levels = l.0;
            }
            match kind {
                SweepKindArg::Z => {
                    if beta.is_some() {
                        eprintln!("warning: --beta has no effect on a z-sweep");
                    }
                    cmd_sweep_z(&cfg)
                }
                SweepKindArg::H => cmd_sweep_h(&cfg),
            }
        }
    }
}

fn out_dir(cfg: &RunConfig) -> anyhow::Result<&Path> {
    let dir = cfg.output_dir();
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn write(path: PathBuf, content: &str) -> anyhow::Result<()> {
    std::fs::write(&path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn provenance(command: &str, cfg: &RunConfig, extra: &str) -> String {
    let o = SolverOptions::default();
    format!(
        "command = {command}\ntool = {} {}\nsolver rel_tol = {:e} backward_tol = {:e} direct_limit = {}\n{extra}\n# run configuration\n{}",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        o.rel_tol,
        o.backward_tol,
        o.direct_limit,
        cfg.to_toml()
    )
}

fn build_mesh(cfg: &RunConfig) -> anyhow::Result<Mesh> {
    Ok(cfg.geometry().graded_mesh()?)
}

fn mesh_stats(mesh: &Mesh) -> String {
    format!(
        "V T B = {} {} {}\nh_interior = {:.6e}\nh_boundary = {:.6e}\nh_max = {:.6e}",
        mesh.n_vertices(),
        mesh.n_triangles(),
        mesh.boundary_edges().len(),
        mesh.h_interior(),
        mesh.h_boundary(),
        mesh.h_max()
    )
}

fn cmd_mesh(cfg: &RunConfig) -> anyhow::Result<()> {
    let mesh = build_mesh(cfg)?;
    let dir = out_dir(cfg)?;
    write(dir.join("mesh.txt"), &mesh.to_text())?;
    let stats = mesh_stats(&mesh);
    write(dir.join("provenance.txt"), &provenance("mesh", cfg, &stats))?;
    println!("{stats}");
    Ok(())
}

fn solution_csv(mesh: &Mesh, solution: &FESolution) -> (String, String) {
    let mut u = String::from("vertex,x,y,value\n");
    for (i, (p, v)) in mesh.vertices().iter().zip(&solution.nodal).enumerate() {
        let _ = writeln!(u, "{i},{},{},{v:e}", p[0], p[1]);
    }
    let mut voltages = String::from("electrode,voltage\n");
    for (m, v) in solution.voltages.iter().enumerate() {
        let _ = writeln!(voltages, "{},{v:e}", m + 1);
    }
    (u, voltages)
}

fn cmd_solve(cfg: &RunConfig) -> anyhow::Result<()> {
    let mesh = build_mesh(cfg)?;
    let sigma = cfg.conductivity().field(&mesh)?;
    let currents = cfg.current()?.currents(cfg.geometry.n_electrodes)?;
    let opts = SolverOptions::default();
    let dir = out_dir(cfg)?;

    let (solution, recovered) = match cfg.model.kind {
        ModelKind::Cem => {
            let layout = cfg.layout()?;
            let system = assemble_cem(&mesh, &sigma, &layout)?;
            let solution = CemSolver::new(&system, opts)?.solve_currents(&currents)?;
            let recovered = electrode_currents(&solution, &mesh, &layout)?;
            (solution, Some(recovered))
        }
        ModelKind::Shunt => {
            if cfg.has_impedances() {
                eprintln!("warning: contact impedances are ignored by the shunt model");
            }
            let system = assemble_shunt(&mesh, &sigma, cfg.geometry.n_electrodes)?;
            (ShuntSolver::new(&system, opts)?.solve_currents(&currents)?, None)
        }
    };
    let (u, voltages) = solution_csv(&mesh, &solution);
    write(dir.join("u.csv"), &u)?;
    write(dir.join("voltages.csv"), &voltages)?;
    write(
        dir.join("provenance.txt"),
        &provenance("solve", cfg, &mesh_stats(&mesh)),
    )?;

    println!("{}", mesh_stats(&mesh));
    for (m, v) in solution.voltages.iter().enumerate() {
        println!("U[{}] = {v:.12e}", m + 1);
    }
    if let Some(recovered) = recovered {
        for (m, (i_hat, i)) in recovered.iter().zip(&currents).enumerate() {
            println!("I[{}] = {i_hat:.12e} (applied {i:.12e})", m + 1);
        }
    }
    Ok(())
}

fn fmt_fit(fit: Option<&eit_cem::SlopeFit>) -> String {
    fit.map_or_else(|| "n/a".to_string(), |f| format!("{:.4}", f.slope))
}

fn report_sweep(cfg: &RunConfig, report: &SweepReport, stem: &str) -> anyhow::Result<()> {
    let dir = out_dir(cfg)?;
    let paths = experiments::write_report(report, dir, stem)?;
    let prov_path = dir.join(format!("{stem}.provenance.txt"));
    let prov = format!(
        "{}\n{}",
        experiments::provenance_text(report),
        provenance(&format!("sweep {stem}"), cfg, "")
    );
    write(prov_path, &prov)?;

    for r in &report.rows {
        print!(
            "{:.6e}  h1 {:.6e}  combined {:.6e}  l2 {:.6e}  rmap {:.6e}",
            r.param, r.h1, r.combined, r.l2, r.rmap
        );
        if let Some(k) = r.kappa {
            print!("  kappa {k:.6e}");
        }
        println!();
    }
    let f = &report.fits;
    println!(
        "slopes: h1 {}  combined {}  l2 {}  rmap {}",
        fmt_fit(f.h1.as_ref()),
        fmt_fit(f.combined.as_ref()),
        fmt_fit(f.l2.as_ref()),
        fmt_fit(f.rmap.as_ref())
    );
    if report.rows.iter().any(|r| r.kappa.is_some()) {
        println!("slope: kappa {}", fmt_fit(f.kappa.as_ref()));
    }
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_sweep_z(cfg: &RunConfig) -> anyhow::Result<()> {
    let sweep = cfg.sweep_config()?;
    let report = experiments::sweep_z(&sweep)?;
    report_sweep(cfg, &report, "zsweep")
}

fn cmd_sweep_h(cfg: &RunConfig) -> anyhow::Result<()> {
    let sweep = cfg.sweep_config()?;
    let report = experiments::sweep_h(&sweep, cfg.h_model()?)?;
    report_sweep(cfg, &report, "hsweep")
}
