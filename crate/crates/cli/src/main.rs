use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use critflow::acceptance::{AcceptanceOptions, Suite};
use critflow::mesh::io::save_mesh;
use critflow::pipeline::{self, build_mesh, preset, ProblemConfig, PRESETS};

#[derive(Parser)]
#[command(name = "critflow", version, about = "Solve div(rho grad u) = 0 on domains with holes and audit the critical points of u")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleName {
    /// Piecewise-constant radial coefficient against its closed form.
    Radial,
    /// Coefficient jumping across y = 0 against ln r / ln 0.05.
    Halfplane,
    /// Pullback under z^2 with anti-conformal and shear controls.
    Invariance,
    /// Double odd reflection of a right-angle corner solve.
    Reflection,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh, solve, analyze and write the configured artifacts.
    Run {
        config: PathBuf,
        /// Directory that relative output paths resolve against.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Override the mesh size.
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Generate the mesh of a configuration and save it.
    Mesh {
        config: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        h: Option<f64>,
    },
    /// Run the acceptance criteria.
    Accept {
        /// Use h = 0.005 for the experiment criteria.
        #[arg(long)]
        paper_scale: bool,
        /// Run only these criteria.
        #[arg(long = "only", value_name = "ID")]
        only: Vec<u8>,
        #[arg(long)]
        solver_tol: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Run one closed-form or transformation check.
    Oracle {
        #[arg(value_enum)]
        name: OracleName,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// List the bundled experiment configurations or write them as JSON.
    Presets {
        #[arg(long)]
        write: Option<PathBuf>,
        #[arg(long, default_value_t = 0.02)]
        h: f64,
    },
}

fn threads() -> Result<usize> {
    match std::env::var("CRITFLOW_THREADS") {
        Ok(v) => {
            let n: usize = v.trim().parse().with_context(|| format!("CRITFLOW_THREADS must be a positive integer, got {v:?}"))?;
            if n == 0 {
                bail!("CRITFLOW_THREADS must be at least 1");
            }
            Ok(n)
        }
        Err(_) => Ok(1),
    }
}

fn load(config: &PathBuf, h: Option<f64>) -> Result<ProblemConfig> {
    let cfg = ProblemConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    let cfg = match h {
        Some(h) => cfg.with_h(h),
        None => cfg,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { config, out_dir, h, format } => {
            let cfg = load(&config, h)?;
            let out = pipeline::run(&cfg, &out_dir, threads()?)?;
            match format {
                Format::Text => print!("{}", out.report.to_text()),
                Format::Json => print!("{}", out.report.to_json()),
            }
            Ok(out.report.exit_code() as u8)
        }
        Command::Mesh { config, output, h } => {
            let cfg = load(&config, h)?;
            let mesh = build_mesh(&cfg)?;
            save_mesh(&mesh, &output).with_context(|| format!("writing {}", output.display()))?;
            println!(
                "{} vertices, {} triangles, {} boundary edges -> {}",
                mesh.vertices().len(),
                mesh.triangles().len(),
                mesh.boundary_edges().len(),
                output.display()
            );
            Ok(0)
        }
        Command::Accept { paper_scale, only, solver_tol, format } => {
            let mut opts = if paper_scale { AcceptanceOptions::paper_scale() } else { AcceptanceOptions::default() };
            opts.threads = threads()?;
            if let Some(t) = solver_tol {
                opts.solver_tol = t;
            }
            let mut suite = Suite::new(opts);
            let results = if only.is_empty() {
                suite.run_all()
            } else {
                only.iter().map(|&id| suite.run_one(id).with_context(|| format!("no criterion {id}"))).collect::<Result<Vec<_>>>()?
            };
            match format {
                Format::Text => {
                    for r in &results {
                        println!("{r}");
                    }
                    let passed = results.iter().filter(|r| r.pass).count();
                    println!("{passed}/{} criteria passed", results.len());
                }
                Format::Json => println!("{}", serde_json::to_string_pretty(&results)?),
            }
            Ok(if results.iter().all(|r| r.pass) { 0 } else { 2 })
        }
        Command::Oracle { name, h, format } => {
            let mut opts = AcceptanceOptions { threads: threads()?, ..AcceptanceOptions::default() };
            if let Some(h) = h {
                opts.radial_h = h;
                opts.h = h;
            }
            let id = match name {
                OracleName::Radial => 1,
                OracleName::Halfplane => 2,
                OracleName::Invariance => 9,
                OracleName::Reflection => 10,
            };
            let r = Suite::new(opts).run_one(id).expect("known criterion");
            match format {
                Format::Text => println!("{r}"),
                Format::Json => println!("{}", serde_json::to_string_pretty(&r)?),
            }
            Ok(if r.pass { 0 } else { 2 })
        }
        Command::Presets { write, h } => {
            for name in PRESETS {
                let cfg = preset(name, h).expect("listed preset");
                match &write {
                    Some(dir) => {
                        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                        let path = dir.join(format!("{name}.json"));
                        std::fs::write(&path, cfg.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
                        println!("{}", path.display());
                    }
                    None => println!("{name:28} {}", cfg.description.as_deref().unwrap_or("")),
                }
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
