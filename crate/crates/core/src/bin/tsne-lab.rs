use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use tsne_lab::bandwidth::{calibrate_profile, BandwidthProfile};
use tsne_lab::continuum::{continuum_energy, GridMap};
use tsne_lab::density::{Dataset, Density};
use tsne_lab::energy::{decompose, Embedding, Variant};
use tsne_lab::experiments::{Experiment, SweepConfig};
use tsne_lab::optimize::{gradcheck, minimize_discrete, GradTarget, OptimizerConfig};
use tsne_lab::quadrature::QuadratureGrid;
use tsne_lab::smooth_map::SmoothMap;

#[derive(Parser)]
#[command(name = "tsne-lab", version, about = "tSNE energies, bandwidths and large-sample experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a seeded sample from a density.
    Sample {
        #[arg(long)]
        density: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate per-point bandwidths against the target κ·n·h^d.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        h: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Energy decomposition of an embedding.
    Energy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long, default_value = "classic")]
        variant: Variant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continuum energy of a smooth map (JSON) or grid map (CSV).
    Continuum {
        #[arg(long)]
        density: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        kappa: f64,
        /// Quadrature nodes per axis, e.g. `64,64`.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize the classic or rescaled energy.
    Embed {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        profile: PathBuf,
        #[arg(long, default_value = "classic")]
        variant: Variant,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_embedding: PathBuf,
        #[arg(long)]
        out_trace: PathBuf,
    },
    /// Run an experiment sweep.
    Exp {
        experiment: Experiment,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        #[arg(long, value_parser = parse_target)]
        target: GradTarget,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
}

fn parse_target(s: &str) -> Result<GradTarget, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("expected discrete-classic, discrete-rescaled or gridmap, got '{s}'"))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Sample { density, n, seed, out } => {
            let density: Density = read_json(&density)?;
            density.sample(n, seed)?.write_csv(create(&out)?)?;
        }
        Command::Calibrate { data, kappa, h, tol, out } => {
            let data = Dataset::read_csv(open(&data)?)?;
            calibrate_profile(&data, kappa, h, tol)?.write_csv(create(&out)?)?;
        }
        Command::Energy {
            data,
            profile,
            embedding,
            variant,
            out,
        } => {
            let data = Dataset::read_csv(open(&data)?)?;
            let profile = BandwidthProfile::read_csv(open(&profile)?)?;
            let emb = Embedding::read_csv(open(&embedding)?)?;
            let mut breakdown = decompose(&data, &profile, &emb)?;
            if variant == Variant::Classic {
                breakdown.rescaled_total = None;
            }
            write_json(&out, &breakdown)?;
        }
        Command::Continuum {
            density,
            map,
            kappa,
            grid,
            out,
        } => {
            let density: Density = read_json(&density)?;
            let is_csv = map.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
            let energy = if is_csv {
                let gm = GridMap::read_csv(open(&map)?)?;
                if let Some(g) = &grid {
                    if g.as_slice() != gm.grid().counts() {
                        bail!("--grid {g:?} does not match the grid map's {:?}", gm.grid().counts());
                    }
                }
                continuum_energy(&density, &gm, kappa, gm.grid())?
            } else {
                let smooth: SmoothMap = read_json(&map)?;
                let quad = match grid {
                    Some(g) => QuadratureGrid::new(density.domain(), &g)?,
                    None => QuadratureGrid::default_for(density.domain())?,
                };
                continuum_energy(&density, &smooth, kappa, &quad)?
            };
            write_json(&out, &energy)?;
        }
        Command::Embed {
            data,
            profile,
            variant,
            config,
            out_embedding,
            out_trace,
        } => {
            let data = Dataset::read_csv(open(&data)?)?;
            let profile = BandwidthProfile::read_csv(open(&profile)?)?;
            let config: OptimizerConfig = match config {
                Some(path) => read_json(&path)?,
                None => OptimizerConfig::default(),
            };
            let (emb, trace) = minimize_discrete(&data, &profile, variant, &config)?;
            emb.write_csv(create(&out_embedding)?)?;
            trace.write_csv(create(&out_trace)?)?;
        }
        Command::Exp {
            experiment,
            config,
            out_dir,
        } => {
            let config: SweepConfig = read_json(&config)?;
            let result = experiment.run(&config)?;
            let paths = result.write_outputs(&config, &out_dir)?;
            let mut stdout = std::io::stdout().lock();
            for p in [&paths.csv, &paths.svg, &paths.meta] {
                writeln!(stdout, "{}", p.display())?;
            }
        }
        Command::Gradcheck { target, seed, step } => {
            let report = gradcheck(target, seed, step)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passed {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
