use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hm_galerkin::experiments::{self, basis_table, cz_study};
use hm_galerkin::yudovich::{osgood_test, GrowthFunction};
use hm_galerkin::{Geometry, HmError, Result, RunConfig};

/// Spectral Galerkin experiments for the Hasegawa-Mima equation with a
/// possibly vanishing background density.
///
/// Config files are INI-style with sections [run] (seed), [geometry]
/// (kind = disk|square, size), [basis] (n_modes), [density] (profile =
/// none|power_law|gaussian|constant, alpha, sigma, c, eta, delta,
/// truncate, boundary_levels), [initial] (preset =
/// zero|single_mode|random_band|file, mode, amplitude, mu_min, mu_max,
/// w_norm, file, smooth_eps), [model] (eps), [integrator] (scheme =
/// if_rk4|rk4, dt, t_end, sample_every), [monitors] (p_list, linf,
/// weak_residual) and [output] (dir, snapshots, tensor_dump).
#[derive(Parser)]
#[command(name = "hm-galerkin", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random presets (overrides [run] seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and write monitors, snapshots and a manifest.
    Run(Common),
    /// Repeat a run at increasing mode counts.
    ConvergeN {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "12,24,48")]
        n_list: Vec<usize>,
    },
    /// Repeat a run for decreasing dissipation.
    EpsSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.03,0.01,0.003")]
        eps_list: Vec<f64>,
    },
    /// Repeat a run for decreasing density regularisation.
    DeltaSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001,0.0001")]
        delta_list: Vec<f64>,
    },
    /// Compare runs from perturbed initial data against an Osgood envelope.
    Twin {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.001,0.0001")]
        scales: Vec<f64>,
        /// Growth function: const, log, power:B or table:FILE.
        #[arg(long, default_value = "const")]
        theta: String,
    },
    /// Osgood divergence test for a growth function (JSON on stdout).
    Osgood {
        /// Growth function: const, log, power:B or table:FILE.
        #[arg(long, default_value = "const")]
        theta: String,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calderón-Zygmund ratio study over random spectral fields.
    Cz {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "disk")]
        geometry: String,
        #[arg(long, default_value_t = 1.0)]
        size: f64,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
        p_list: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Print the basis table as CSV.
    BasisTable {
        #[arg(long, default_value = "disk")]
        geometry: String,
        #[arg(long, default_value_t = 1.0)]
        size: f64,
        #[arg(long, default_value_t = 64)]
        n: usize,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn geometry(kind: &str, size: f64) -> Result<Geometry> {
    match kind {
        "disk" => Geometry::disk(size),
        "square" => Geometry::square(size),
        other => Err(HmError::Usage(format!("unknown geometry '{other}'"))),
    }
}

fn setup(common: &Common) -> Result<RunConfig> {
    if let Some(t) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| HmError::Usage(e.to_string()))?;
    }
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &common.out {
        cfg.output.dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = setup(&common)?;
            let r = experiments::run(&cfg)?;
            log::info!("run finished: {} steps", r.manifest.steps_taken);
            println!("{}", cfg.output.dir.join("manifest.json").display());
            Ok(())
        }
        Command::ConvergeN { common, n_list } => {
            let cfg = setup(&common)?;
            print_json(&experiments::converge_n(&cfg, &n_list, true)?)
        }
        Command::EpsSweep { common, eps_list } => {
            let cfg = setup(&common)?;
            print_json(&experiments::eps_sweep(&cfg, &eps_list, true)?)
        }
        Command::DeltaSweep { common, delta_list } => {
            let cfg = setup(&common)?;
            print_json(&experiments::delta_sweep(&cfg, &delta_list, true)?)
        }
        Command::Twin { common, scales, theta } => {
            let cfg = setup(&common)?;
            let theta = GrowthFunction::parse(&theta)?;
            print_json(&experiments::twin(&cfg, &scales, &theta, true)?)
        }
        Command::Osgood { theta, out } => {
            let report = osgood_test(&GrowthFunction::parse(&theta)?)?;
            if let Some(p) = out {
                let text = serde_json::to_string_pretty(&report)?;
                std::fs::write(&p, text + "\n").map_err(|e| HmError::Io { path: p, source: e })?;
            }
            print_json(&report)
        }
        Command::Cz {
            common,
            geometry: kind,
            size,
            n,
            p_list,
            trials,
        } => {
            let cfg = setup(&common)?;
            let report = cz_study(geometry(&kind, size)?, n, &p_list, trials, cfg.seed)?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir).map_err(|e| HmError::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                let p = dir.join("report.json");
                let text = serde_json::to_string_pretty(&report)?;
                std::fs::write(&p, text + "\n").map_err(|e| HmError::Io { path: p, source: e })?;
            }
            print_json(&report)
        }
        Command::BasisTable {
            geometry: kind,
            size,
            n,
            out,
        } => {
            let csv = basis_table(geometry(&kind, size)?, n, out.as_ref())?;
            if out.is_none() {
                print!("{csv}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HmError::Usage(_) | HmError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
