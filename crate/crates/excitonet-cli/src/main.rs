//! Command-line front end for ensemble campaigns and analyses.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use excitonet::campaign::{
    binned_tau_table, coherence_fractions, run_campaign_to_dir, sweep_correlation, BinRow,
    CampaignConfig, RunOptions, DEFAULT_BIN_WIDTH, DEFAULT_HIGH_CUT, DEFAULT_LOW_CUT,
    DEFAULT_MIN_BIN_COUNT,
};
use excitonet::network::{sample_geometry, DEFAULT_MIN_SEPARATION};
use excitonet::records::{read_records, NetworkRecord, SUPPORTED_ORDERS};
use excitonet::seeding;
use excitonet::stats::pearson;
use excitonet::twoexc::validate_single_excitation;

#[derive(Parser)]
#[command(
    name = "excitonet",
    version,
    about = "Stationary transport and coherence statistics for disordered excitation networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigOverrides {
    /// Campaign config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigOverrides {
    fn load(&self) -> anyhow::Result<CampaignConfig> {
        let mut cfg = CampaignConfig::load(&self.config)
            .with_context(|| format!("loading {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample one network geometry and emit it as JSON.
    Gen {
        /// Number of sites (input and output poles included).
        #[arg(long)]
        sites: usize,
        /// Geometry seed.
        #[arg(long)]
        seed: u64,
        /// Minimum pairwise site separation.
        #[arg(long, default_value_t = DEFAULT_MIN_SEPARATION)]
        min_separation: f64,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a campaign: solve every network and write records.csv plus
    /// metadata.json.
    Run {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Output directory (overrides the config's output_path).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Skip witness evaluation.
        #[arg(long)]
        skip_tau: bool,
        /// Evaluate the witness on a deterministic random subset with
        /// this probability.
        #[arg(long)]
        tau_subsample: Option<f64>,
    },
    /// Correlation between stationary and transient efficiency over a
    /// grid of recombination rates and weight widths.
    Sweep {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Recombination rates, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        gamma_rec: Vec<f64>,
        /// Transient weight widths, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        t_weight: Vec<f64>,
        /// Output CSV file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bin witness scores by stationary efficiency and summarize a
    /// records file.
    Analyze {
        /// Records CSV produced by `run`.
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BIN_WIDTH)]
        bin_width: f64,
        /// Bins below this population are merged into the trailing bin.
        #[arg(long, default_value_t = DEFAULT_MIN_BIN_COUNT)]
        min_bin_count: usize,
        /// Output directory for bins_tau<K>.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fraction of networks whose witness score clears a threshold, in
    /// the low- and high-efficiency subsets.
    Fractions {
        /// Records CSV produced by `run`.
        #[arg(long)]
        records: PathBuf,
        /// Witness order.
        #[arg(long)]
        k: usize,
        /// Score threshold.
        #[arg(long)]
        threshold: f64,
        #[arg(long, default_value_t = DEFAULT_LOW_CUT)]
        low_cut: f64,
        #[arg(long, default_value_t = DEFAULT_HIGH_CUT)]
        high_cut: f64,
    },
    /// Compare single- against two-excitation stationary weights over a
    /// seeded ensemble.
    Validate2exc {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Number of networks to check.
        #[arg(long, default_value_t = 100)]
        networks: u64,
        /// Output CSV file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_text(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn bins_csv(rows: &[BinRow]) -> String {
    let mut text = String::from("bin_center,bin_width,n,mean_tau,sigma,se_mean,se_sigma\n");
    for row in rows {
        let se_sigma = row.se_sigma.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            row.center, row.width, row.n, row.mean_tau, row.sigma, row.se_mean, se_sigma
        ));
    }
    text
}

fn clean_pairs(records: &[NetworkRecord]) -> (Vec<f64>, Vec<f64>) {
    let mut e_t = Vec::new();
    let mut e_s = Vec::new();
    for r in records {
        if !r.is_failed() {
            e_t.push(r.e_t);
            e_s.push(r.e_s);
        }
    }
    (e_t, e_s)
}

fn cmd_gen(
    sites: usize,
    seed: u64,
    min_separation: f64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let geometry = sample_geometry(sites, seed, min_separation)?;
    let mut json = geometry.to_json_string()?;
    json.push('\n');
    write_text(out.as_deref(), &json)
}

fn cmd_run(
    overrides: ConfigOverrides,
    out: Option<PathBuf>,
    skip_tau: bool,
    tau_subsample: Option<f64>,
) -> anyhow::Result<()> {
    let cfg = overrides.load()?;
    let dir = match out.or_else(|| cfg.output_path.as_ref().map(PathBuf::from)) {
        Some(dir) => dir,
        None => bail!("no output directory: pass --out or set output_path in the config"),
    };
    if cfg.rates.truncation_suspect() {
        eprintln!(
            "warning: gamma_in {} >= gamma_out {}; the single-excitation \
             truncation may be inaccurate (see validate2exc)",
            cfg.rates.gamma_in, cfg.rates.gamma_out
        );
    }
    let opts = RunOptions {
        skip_tau,
        tau_subsample,
    };
    let output = run_campaign_to_dir(&cfg, &opts, &dir)?;
    println!(
        "wrote {} records ({} failed) to {} in {:.1}s",
        output.metadata.n_records,
        output.metadata.n_failed,
        dir.display(),
        output.metadata.wall_seconds
    );
    Ok(())
}

fn cmd_sweep(
    overrides: ConfigOverrides,
    gamma_rec: Vec<f64>,
    t_weight: Vec<f64>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let cfg = overrides.load()?;
    let rows = sweep_correlation(&cfg, &gamma_rec, &t_weight)?;
    let mut text = String::from("gamma_rec,gamma_rec_inv,t_weight,kappa,n_networks_used\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.gamma_rec, row.gamma_rec_inv, row.t_weight, row.kappa, row.n_networks_used
        ));
    }
    write_text(out.as_deref(), &text)
}

fn cmd_analyze(
    records_path: PathBuf,
    bin_width: f64,
    min_bin_count: usize,
    out: PathBuf,
) -> anyhow::Result<()> {
    let records = read_records(&records_path)
        .with_context(|| format!("reading {}", records_path.display()))?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let (e_t, e_s) = clean_pairs(&records);
    if e_t.len() < 2 {
        bail!("need at least 2 clean records, got {}", e_t.len());
    }
    let kappa = pearson(&e_t, &e_s)?;

    let mut tau_counts = BTreeMap::new();
    let mut binned_orders = Vec::new();
    for k in SUPPORTED_ORDERS {
        let count = records
            .iter()
            .filter(|r| !r.is_failed() && r.tau.contains_key(&(k as u32)))
            .count();
        tau_counts.insert(k.to_string(), count);
        if count >= 2 {
            let rows = binned_tau_table(&records, k, bin_width, min_bin_count)?;
            let path = out.join(format!("bins_tau{k}.csv"));
            std::fs::write(&path, bins_csv(&rows))
                .with_context(|| format!("writing {}", path.display()))?;
            binned_orders.push(k);
        }
    }

    let n_failed = records.iter().filter(|r| r.is_failed()).count();
    let summary = serde_json::json!({
        "n_records": records.len(),
        "n_failed": n_failed,
        "n_clean": e_t.len(),
        "kappa": kappa,
        "bin_width": bin_width,
        "min_bin_count": min_bin_count,
        "tau_counts": tau_counts,
        "binned_orders": binned_orders,
    });
    let path = out.join("summary.json");
    std::fs::write(&path, format!("{:#}\n", summary))
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "kappa = {kappa:.4} over {} networks; analysis in {}",
        e_t.len(),
        out.display()
    );
    Ok(())
}

fn cmd_fractions(
    records_path: PathBuf,
    k: usize,
    threshold: f64,
    low_cut: f64,
    high_cut: f64,
) -> anyhow::Result<()> {
    let records = read_records(&records_path)
        .with_context(|| format!("reading {}", records_path.display()))?;
    let report = coherence_fractions(&records, k, threshold, low_cut, high_cut)?;
    let json = serde_json::to_string_pretty(&report)?;
    println!("{json}");
    Ok(())
}

fn cmd_validate2exc(
    overrides: ConfigOverrides,
    networks: u64,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let cfg = overrides.load()?;
    let mut text = String::from("index,seed,weight_1exc,weight_2exc,ratio,degenerate\n");
    let mut max_ratio = 0.0f64;
    for index in 0..networks {
        let seed = seeding::substream(cfg.master_seed, index);
        let geometry = sample_geometry(cfg.n_sites, seed, cfg.min_separation)?;
        let check = validate_single_excitation(&geometry, &cfg.rates)?;
        max_ratio = max_ratio.max(check.ratio);
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            index,
            seed,
            check.one_excitation_weight,
            check.two_excitation_weight,
            check.ratio,
            check.degenerate
        ));
    }
    write_text(out.as_deref(), &text)?;
    let mut err = std::io::stderr();
    let _ = writeln!(err, "max double/single weight ratio: {max_ratio:e}");
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Gen {
            sites,
            seed,
            min_separation,
            out,
        } => cmd_gen(sites, seed, min_separation, out),
        Command::Run {
            overrides,
            out,
            skip_tau,
            tau_subsample,
        } => cmd_run(overrides, out, skip_tau, tau_subsample),
        Command::Sweep {
            overrides,
            gamma_rec,
            t_weight,
            out,
        } => cmd_sweep(overrides, gamma_rec, t_weight, out),
        Command::Analyze {
            records,
            bin_width,
            min_bin_count,
            out,
        } => cmd_analyze(records, bin_width, min_bin_count, out),
        Command::Fractions {
            records,
            k,
            threshold,
            low_cut,
            high_cut,
        } => cmd_fractions(records, k, threshold, low_cut, high_cut),
        Command::Validate2exc {
            overrides,
            networks,
            out,
        } => cmd_validate2exc(overrides, networks, out),
    }
}
