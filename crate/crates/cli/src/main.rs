use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::info;

use vlc_pscom::benchmarks::Scheme;
use vlc_pscom::config::{load_config, NetworkConfig};
use vlc_pscom::geometry::floor_channel_map;
use vlc_pscom::harness::{self, PointStatus, SweepSpec};
use vlc_pscom::oracle::oracle_solve;
use vlc_pscom::plot::emit_plot;

/// Energy-efficiency optimizer for semantic-compression VLC downlinks.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration.
    Solve {
        config: PathBuf,
        /// Overrides the scheme in the config.
        #[arg(long)]
        scheme: Option<Scheme>,
    },
    /// Sweep one config field over a list of values.
    Sweep {
        config: PathBuf,
        /// Dotted path such as `optical.semi_angle`.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Scheme tags; all four when omitted.
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<Scheme>,
    },
    /// Export the aggregate floor gain as CSV.
    ChannelMap {
        config: PathBuf,
        /// Grid step in metres.
        #[arg(long, default_value_t = 0.1)]
        resolution: f64,
    },
    /// Brute-force grid optimum of a one-user, one- or two-LED config.
    Oracle { config: PathBuf },
    /// Run the user-placement scenarios over the LED voltage sweep.
    Scenarios { config: PathBuf },
    /// Render a sweep CSV as SVG.
    Plot {
        csv: PathBuf,
        /// Defaults to the CSV path with an `.svg` extension.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Horizontal axis label; defaults to the CSV's `param` column.
        #[arg(long)]
        x_label: Option<String>,
    },
}

fn config(path: &Path) -> anyhow::Result<NetworkConfig> {
    load_config(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Solve { config: path, scheme } => {
            let cfg = config(&path)?;
            let scheme = scheme.unwrap_or(cfg.scheme);
            let point = harness::run_point(&cfg, "", 0.0, scheme);
            let dir = harness::save_solve(&cli.out, &cfg, &point)?;
            match (&point.solution, point.status) {
                (Some(s), status) => {
                    let r = &s.report;
                    println!("scheme            {scheme}");
                    println!("status            {}", status.tag());
                    println!("energy efficiency {:.6} bit/Hz/J", r.energy_efficiency);
                    println!("sum eff. rate     {:.6} bit/s/Hz", r.sum_effective_rate());
                    println!("power (W)         total {:.4}  comp {:.4}  ac {:.4}  dc {:.4}", r.p_total(), r.p_comp, r.p_ac, r.p_dc);
                    println!("dc bias (A)       {:.6}", s.design.dc_bias);
                    println!("ratios            {:?}", s.design.rho);
                    println!("outer iterations  {}", s.trace.outer_iterations());
                    println!("output            {}", dir.display());
                }
                (None, _) => {
                    let msg = point.message.clone().unwrap_or_default();
                    if point.status == PointStatus::Infeasible {
                        return Err(vlc_pscom::Error::Infeasible { binding: scheme.to_string(), detail: msg }.into());
                    }
                    bail!("{msg}");
                }
            }
        }
        Command::Sweep { config: path, param, values, schemes } => {
            let cfg = config(&path)?;
            let schemes = if schemes.is_empty() { Scheme::ALL.to_vec() } else { schemes };
            let spec = SweepSpec { param, values, schemes };
            let rows = harness::run_sweep(&cfg, &spec)?;
            let dir = harness::save_sweep(&cli.out, &cfg, &spec, &rows)?;
            let failed = rows.iter().filter(|r| r.solution.is_none()).count();
            println!("{} rows ({failed} without a solution) written to {}", rows.len(), dir.join("sweep.csv").display());
        }
        Command::ChannelMap { config: path, resolution } => {
            let cfg = config(&path)?;
            let map = floor_channel_map(&cfg.scene, &cfg.optical, resolution)?;
            let dir = harness::prepare_run_dir(&cli.out, &cfg, &format!("channel-map {resolution}"))?;
            let file = dir.join("channel_map.csv");
            map.save_csv(&file)?;
            let ((xa, ya, max), (xi, yi, min)) = (map.max(), map.min());
            println!("aggregate gain (sum over LEDs)");
            println!("max {max:.6e} at ({xa:.2}, {ya:.2})");
            println!("min {min:.6e} at ({xi:.2}, {yi:.2})");
            println!("max/min {:.4}", map.dynamic_range());
            println!("written to {}", file.display());
        }
        Command::Oracle { config: path } => {
            let cfg = config(&path)?;
            let out = oracle_solve(&cfg.problem()?)?;
            println!("grid points       {} ({} feasible)", out.grid_points, out.feasible_points);
            println!("energy efficiency {:.6} bit/Hz/J", out.report.energy_efficiency);
            println!("beams             {:?}", out.design.beams);
            println!("dc bias (A)       {:.6}", out.design.dc_bias);
            println!("common rates      {:?}", out.design.common_rates);
            println!("ratio             {:?}", out.design.rho);
        }
        Command::Scenarios { config: path } => {
            let cfg = config(&path)?;
            let rows = harness::run_scenarios(&cfg)?;
            let dir = harness::save_scenarios(&cli.out, &cfg, &rows)?;
            println!("{} rows written to {}", rows.len(), dir.join("sweep.csv").display());
        }
        Command::Plot { csv, output, x_label } => {
            let text = std::fs::read_to_string(&csv).with_context(|| format!("reading {}", csv.display()))?;
            let label = match x_label {
                Some(l) => l,
                None => first_param(&text).unwrap_or_else(|| "value".into()),
            };
            let svg = emit_plot(&text, &label)?;
            let target = output.unwrap_or_else(|| csv.with_extension("svg"));
            std::fs::write(&target, svg).with_context(|| format!("writing {}", target.display()))?;
            info!("plot written to {}", target.display());
            println!("{}", target.display());
        }
    }
    Ok(())
}

fn first_param(csv_text: &str) -> Option<String> {
    let mut lines = csv_text.lines();
    let header: Vec<&str> = lines.next()?.split(',').collect();
    let i = header.iter().position(|h| *h == "param")?;
    lines.next()?.split(',').nth(i).filter(|s| !s.is_empty()).map(str::to_string)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e.chain().any(|c| c.downcast_ref::<vlc_pscom::Error>().is_some_and(|v| v.is_infeasible_config()));
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}
