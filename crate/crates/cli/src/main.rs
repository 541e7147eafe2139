use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use spde2d::field_io::{load_field, save_field, write_time_slice_csv};
use spde2d::harness::{cross_section_dump, estimate_field, run_monte_carlo, Axis, ExperimentConfig};
use spde2d::increments::{asymptotic_mean, expected_squared_increment_series, expected_z, write_z_csv, squared_increment_field};
use spde2d::reconstruction::{approx_coordinates, write_path_csv, DEFAULT_MODES};
use spde2d::simulator::{simulate_field, InitialCondition};
use spde2d::{NoiseKind, RngSeed};

#[derive(Parser)]
#[command(name = "spde2d", version, about = "Simulate and estimate 2-D parabolic SPDEs driven by damped noise")]
struct Cli {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-field overrides.
#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment config; unspecified fields use the desk-scale default.
    #[arg(long)]
    config: Option<PathBuf>,
    /// q1, q2-known-mu0 or q2-unknown-mu0.
    #[arg(long)]
    kind: Option<NoiseKind>,
    #[arg(long)]
    replications: Option<usize>,
    /// Time steps N.
    #[arg(long = "grid-n")]
    grid_n: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Spectral cutoff K.
    #[arg(long = "trunc-k")]
    trunc_k: Option<u32>,
    /// Spectral cutoff L.
    #[arg(long = "trunc-l")]
    trunc_l: Option<u32>,
    /// Coarse time points n for the volatility stage.
    #[arg(long = "time-n")]
    time_n: Option<usize>,
    /// Coarse space grid along both axes.
    #[arg(long)]
    mbar: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.kind {
            c.kind = v;
        }
        if let Some(v) = self.replications {
            c.replications = v;
        }
        if let Some(v) = self.grid_n {
            c.grid.n = v;
        }
        if let Some(v) = self.m1 {
            c.grid.m1 = v;
        }
        if let Some(v) = self.m2 {
            c.grid.m2 = v;
        }
        if let Some(v) = self.trunc_k {
            c.truncation.k = v;
        }
        if let Some(v) = self.trunc_l {
            c.truncation.l = v;
        }
        if let Some(v) = self.time_n {
            c.thinning.n = v;
        }
        if let Some(v) = self.mbar {
            c.thinning.mbar1 = v;
            c.thinning.mbar2 = v;
        }
        if let Some(v) = self.delta {
            c.thinning.delta = v;
        }
        if let Some(s) = seed {
            c.seed = RngSeed(s);
        }
        c.prepare()?;
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one field and write it as a binary dump with a JSON sidecar.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Replication index whose derived seed is used.
        #[arg(long, default_value_t = 0)]
        rep: u64,
        /// Also write the spatial slice at this time index as CSV.
        #[arg(long)]
        slice: Option<usize>,
    },
    /// Run the estimation pipeline on a stored field.
    Estimate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        field: PathBuf,
    },
    /// Monte Carlo summary over the configured replications.
    Mc {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Exact expected squared increments and their asymptotic mean.
    Oracle {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0.5)]
        y: f64,
        #[arg(long, default_value_t = 0.5)]
        z: f64,
        /// Time resolutions for the rate table.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64,128")]
        n_list: Vec<usize>,
    },
    /// Dump a slice of a field for plotting.
    CrossSection {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Stored field; simulated from the config when absent.
        #[arg(long)]
        field: Option<PathBuf>,
        /// t, y or z.
        #[arg(long, default_value = "t")]
        axis: Axis,
        #[arg(long, default_value_t = 0.5)]
        level: f64,
    },
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    let path = dir.join(name);
    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn simulate(c: &ExperimentConfig, rep: u64) -> Result<spde2d::simulator::FieldSample> {
    let p = &c.params;
    Ok(simulate_field(p, c.kind, &c.grid, &c.truncation, &InitialCondition::zero(), c.seed.replication(rep))?)
}

fn run(cli: Cli) -> Result<()> {
    let out = &cli.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match cli.command {
        Command::Simulate { cfg, rep, slice } => {
            let c = cfg.resolve(cli.seed)?;
            let field = simulate(&c, rep)?;
            save_field(&out.join("field.bin"), &field)?;
            if let Some(i) = slice {
                write_time_slice_csv(create(out, &format!("slice_{i}.csv"))?, &field, i)?;
            }
            write(out, "config.toml", &c.to_toml_string())?;
        }
        Command::Estimate { cfg, field } => {
            let c = cfg.resolve(cli.seed)?;
            let f = load_field(&field).with_context(|| format!("loading {}", field.display()))?;
            let prep = c.prepare()?;
            let p = &c.params;
            let est = estimate_field(&f, c.kind, p.alpha(), p.mu0(), &prep.space, &prep.time, &c.contrast)?;
            let z = squared_increment_field(&f, &prep.space, p.alpha())?;
            write_z_csv(create(out, "z.csv")?, &z, &prep.space)?;
            let paths = approx_coordinates(&f, &DEFAULT_MODES, est.fit.kappa_hat, est.fit.eta_hat, &prep.time)?;
            for path in &paths {
                write_path_csv(create(out, &format!("path_{}_{}.csv", path.mode.k, path.mode.l))?, path)?;
            }
            write(out, "estimate.json", &serde_json::to_string_pretty(&est)?)?;
            if let Some(failure) = est.failure {
                println!("plug-in failure: {failure}");
            }
        }
        Command::Mc { cfg } => {
            let c = cfg.resolve(cli.seed)?;
            let table = run_monte_carlo(&c, cli.threads)?;
            write(out, "summary.csv", &table.to_csv())?;
            write(out, "summary.json", &table.to_json())?;
            print!("{}", table.to_csv());
        }
        Command::Oracle { cfg, y, z, n_list } => {
            let c = cfg.resolve(cli.seed)?;
            let p = &c.params;
            let series = expected_squared_increment_series(p, c.kind, c.grid.n, y, z, &c.truncation);
            let mut text = String::from("i,expected_squared_increment\n");
            for (i, v) in series.iter().enumerate() {
                text.push_str(&format!("{},{v}\n", i + 1));
            }
            write(out, "oracle_increments.csv", &text)?;
            let limit = asymptotic_mean(p, c.kind, y, z);
            let mut text = String::from("n,expected_z,asymptotic_mean,gap\n");
            for &n in &n_list {
                let e = expected_z(p, c.kind, n, y, z, &c.truncation);
                text.push_str(&format!("{n},{e},{limit},{}\n", (e - limit).abs()));
            }
            write(out, "oracle_rates.csv", &text)?;
            print!("{text}");
        }
        Command::CrossSection { cfg, field, axis, level } => {
            let c = cfg.resolve(cli.seed)?;
            let f = match field {
                Some(path) => load_field(&path).with_context(|| format!("loading {}", path.display()))?,
                None => simulate(&c, 0)?,
            };
            let cs = cross_section_dump(&f, axis, level)?;
            cs.write_csv(create(out, "cross_section.csv")?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.chain().any(|c| {
                matches!(
                    c.downcast_ref::<spde2d::Error>(),
                    Some(spde2d::Error::Config(_) | spde2d::Error::InvalidParameter(_) | spde2d::Error::EmptyThinning { .. })
                )
            });
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
