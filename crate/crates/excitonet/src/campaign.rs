//! Ensemble campaigns: seeded generation, per-network evaluation,
//! deterministic parallel execution, and derived analyses.
//!
//! Every network is a pure function of `(master_seed, index)` plus the
//! campaign config, so the sorted record set is independent of worker
//! count and scheduling. Workers stream finished records to a `.part`
//! file for inspection during long runs; the finalization pass writes
//! the sorted canonical file and removes the partial one.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::lindblad::{
    build_jump_operators, build_liouvillian, fluxes, stationary_efficiency, steady_state,
};
use crate::network::{coupling_matrix, sample_geometry, RateSet};
use crate::records::{write_records, NetworkRecord, SUPPORTED_ORDERS};
use crate::seeding;
use crate::stats::{bin_by_efficiency, bin_stats, pearson, Moments};
use crate::transient::TransientPropagator;
use crate::witness::{project_single_excitation, tau, WitnessConfig};
use crate::Result;

/// Default efficiency bin width for analyses.
pub const DEFAULT_BIN_WIDTH: f64 = 0.01;
/// Default minimum bin population before trailing windows are merged.
pub const DEFAULT_MIN_BIN_COUNT: usize = 50;
/// Default low-efficiency cut for coherence fractions.
pub const DEFAULT_LOW_CUT: f64 = 0.05;
/// Default high-efficiency cut for coherence fractions.
pub const DEFAULT_HIGH_CUT: f64 = 0.15;

fn default_t_weight() -> f64 {
    crate::network::direct_transfer_time() / 40.0
}

fn default_k_list() -> Vec<usize> {
    vec![2, 3, 4]
}

fn default_bin_width() -> f64 {
    DEFAULT_BIN_WIDTH
}

fn default_min_separation() -> f64 {
    crate::network::DEFAULT_MIN_SEPARATION
}

fn default_workers() -> usize {
    1
}

fn default_restarts() -> usize {
    32
}

fn default_max_iters() -> usize {
    2000
}

fn default_tol() -> f64 {
    1e-8
}

/// Witness optimizer settings as they appear in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessSettings {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub calibration_seed: u64,
    /// Precomputed scales keyed by order ("2", "3", "4"); orders absent
    /// here are calibrated at campaign start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_values: Option<BTreeMap<String, f64>>,
}

impl Default for WitnessSettings {
    fn default() -> Self {
        WitnessSettings {
            restarts: default_restarts(),
            max_iters: default_max_iters(),
            tol: default_tol(),
            calibration_seed: 0,
            b_values: None,
        }
    }
}

impl WitnessSettings {
    /// Materializes the runtime config, seeding the calibration cache
    /// with any explicit values for the given site count.
    pub fn to_witness_config(&self, n_sites: usize) -> Result<WitnessConfig> {
        let mut cfg = WitnessConfig {
            restarts: self.restarts,
            max_iters: self.max_iters,
            tol: self.tol,
            calibration_seed: self.calibration_seed,
            ..WitnessConfig::default()
        };
        if cfg.restarts == 0 {
            return Err(Error::Config("witness.restarts must be at least 1".into()));
        }
        if !(cfg.tol > 0.0) {
            return Err(Error::Config("witness.tol must be positive".into()));
        }
        if let Some(values) = &self.b_values {
            for (key, &b) in values {
                let k: usize = key
                    .parse()
                    .map_err(|_| Error::Config(format!("witness.b_values key {key:?}")))?;
                if !(b > 0.0) {
                    return Err(Error::Config(format!("witness.b_values[{key}] = {b}")));
                }
                cfg.b_cache.insert((k, n_sites), b);
            }
        }
        Ok(cfg)
    }
}

/// Full campaign description as read from a JSON config file. Unknown
/// keys are rejected; omitted keys take the documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub n_sites: usize,
    pub n_networks: u64,
    pub master_seed: u64,
    pub rates: RateSet,
    #[serde(default = "default_t_weight")]
    pub t_weight: f64,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub witness: WitnessSettings,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Output directory for `records.csv` and `metadata.json`; may be
    /// overridden on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl CampaignConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: CampaignConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sites < 2 {
            return Err(Error::TooFewSites {
                min: 2,
                got: self.n_sites,
            });
        }
        if self.n_networks == 0 {
            return Err(Error::Config("n_networks must be at least 1".into()));
        }
        self.rates.validate()?;
        if !(self.rates.gamma_in > 0.0) {
            return Err(Error::Config(
                "campaigns need gamma_in > 0 to define efficiencies".into(),
            ));
        }
        if !(self.t_weight > 0.0) {
            return Err(Error::NonPositive {
                name: "t_weight",
                value: self.t_weight,
            });
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::NonPositive {
                name: "bin_width",
                value: self.bin_width,
            });
        }
        if self.min_separation < 0.0 {
            return Err(Error::Negative {
                name: "min_separation",
                value: self.min_separation,
            });
        }
        for &k in &self.k_list {
            if !SUPPORTED_ORDERS.contains(&k) {
                return Err(Error::UnsupportedWitnessOrder { k });
            }
            if k > self.n_sites {
                return Err(Error::WitnessOrderOutOfRange { k, n: self.n_sites });
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization, recorded in run
    /// metadata so record files can be traced to an exact config.
    pub fn sha256(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let mut hex = String::with_capacity(64);
        for byte in digest {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

/// Runtime switches that are deliberately not part of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Skip witness evaluation entirely (fast correlation-only runs).
    pub skip_tau: bool,
    /// Evaluate the witness only on a deterministic pseudo-random subset
    /// of networks with this acceptance probability.
    pub tau_subsample: Option<f64>,
}

impl RunOptions {
    fn validate(&self) -> Result<()> {
        if let Some(p) = self.tau_subsample {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!(
                    "tau_subsample must be in (0, 1], got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Run summary persisted as `metadata.json` next to the records.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub version: String,
    pub config: CampaignConfig,
    pub config_sha256: String,
    pub n_records: u64,
    pub n_failed: u64,
    pub failure_fraction: f64,
    /// True when the pump rate is not small against the sink rate and
    /// the single-excitation truncation deserves scrutiny.
    pub truncation_warning: bool,
    /// Calibrated witness scales actually used, keyed by order.
    pub b_values: BTreeMap<String, f64>,
    pub skip_tau: bool,
    pub tau_subsample: Option<f64>,
    pub workers: usize,
    pub wall_seconds: f64,
}

/// In-memory result of a campaign run.
#[derive(Debug)]
pub struct CampaignOutput {
    /// Records sorted by network index.
    pub records: Vec<NetworkRecord>,
    pub metadata: RunMetadata,
}

fn steady_failure_flag(e: &Error) -> &'static str {
    match e {
        Error::ResidualTooLarge { .. } => "steady_residual",
        Error::DegenerateKernel { .. } => "steady_degenerate",
        Error::NotPositive { .. } => "steady_not_positive",
        Error::TraceDefect { .. } => "steady_trace",
        Error::SingularSystem(_) => "steady_singular",
        _ => "steady_failed",
    }
}

/// Evaluates one network of the ensemble. Pure in `(cfg, witness_cfg,
/// opts, index)`; never panics on solver failure, recording flags
/// instead.
pub fn evaluate_network(
    cfg: &CampaignConfig,
    witness_cfg: &WitnessConfig,
    opts: &RunOptions,
    index: u64,
) -> NetworkRecord {
    let seed = seeding::substream(cfg.master_seed, index);
    let geometry = match sample_geometry(cfg.n_sites, seed, cfg.min_separation) {
        Ok(g) => g,
        Err(_) => return NetworkRecord::failed(index, seed, "geometry_failed"),
    };
    let h = match coupling_matrix(&geometry) {
        Ok(h) => h,
        Err(_) => return NetworkRecord::failed(index, seed, "degenerate_geometry"),
    };
    let jumps = match build_jump_operators(cfg.n_sites, &cfg.rates) {
        Ok(j) => j,
        Err(_) => return NetworkRecord::failed(index, seed, "jump_build_failed"),
    };
    let liouvillian = match build_liouvillian(&h, jumps) {
        Ok(l) => l,
        Err(_) => return NetworkRecord::failed(index, seed, "liouvillian_failed"),
    };
    let rho = match steady_state(&liouvillian) {
        Ok(rho) => rho,
        Err(e) => return NetworkRecord::failed(index, seed, steady_failure_flag(&e)),
    };
    let flux = fluxes(&rho, &cfg.rates);
    let e_s = match stationary_efficiency(&rho, &cfg.rates) {
        Ok(e) => e,
        Err(_) => return NetworkRecord::failed(index, seed, "efficiency_failed"),
    };
    let propagator = TransientPropagator::new(&h);
    let e_t = match propagator.efficiency(cfg.t_weight) {
        Ok(e) => e,
        Err(_) => return NetworkRecord::failed(index, seed, "transient_failed"),
    };

    let mut flags = Vec::new();
    let mut tau_map = BTreeMap::new();
    let tau_selected = match opts.tau_subsample {
        _ if opts.skip_tau || cfg.k_list.is_empty() => false,
        None => true,
        Some(p) => seeding::unit_uniform(seeding::derive(seed, seeding::PURPOSE_SUBSAMPLE)) < p,
    };
    if tau_selected {
        match project_single_excitation(&rho) {
            Ok(projected) => {
                for &k in &cfg.k_list {
                    let tau_seed = seeding::derive(seed, seeding::PURPOSE_TAU_BASE + k as u64);
                    match tau(&projected, k, witness_cfg, tau_seed) {
                        Ok(result) => {
                            tau_map.insert(k as u32, result.value);
                            if !result.converged {
                                flags.push(format!("tau{k}_unconverged"));
                            }
                        }
                        Err(_) => flags.push(format!("tau{k}_failed")),
                    }
                }
                // Hierarchy sanity: a deeper witness firing while a
                // shallower one stays non-positive is worth flagging.
                let orders: Vec<u32> = tau_map.keys().copied().collect();
                'outer: for (i, &lo) in orders.iter().enumerate() {
                    for &hi in &orders[i + 1..] {
                        if tau_map[&hi] > 0.0 && tau_map[&lo] <= 0.0 {
                            flags.push("tau_hierarchy".to_string());
                            break 'outer;
                        }
                    }
                }
            }
            Err(_) => flags.push("weight_floor".to_string()),
        }
    }

    NetworkRecord {
        index,
        seed,
        e_s,
        e_t,
        j_in: flux.j_in,
        j_rec: flux.j_rec,
        j_out: flux.j_out,
        tau: tau_map,
        weight_1exc: rho.excited_weight(),
        flags,
    }
}

/// Calibrates witness scales for every configured order, returning the
/// shared runtime witness config and the scales used.
fn prepare_witness(
    cfg: &CampaignConfig,
    opts: &RunOptions,
) -> Result<(WitnessConfig, BTreeMap<String, f64>)> {
    let mut witness_cfg = cfg.witness.to_witness_config(cfg.n_sites)?;
    let mut used = BTreeMap::new();
    if !opts.skip_tau {
        for &k in &cfg.k_list {
            let b = witness_cfg.calibrate(k, cfg.n_sites)?;
            used.insert(k.to_string(), b);
        }
    }
    Ok((witness_cfg, used))
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs the campaign in memory. `stream` receives each finished record
/// line in completion order (for partial-progress files); pass `None`
/// to skip streaming.
fn run_campaign_inner(
    cfg: &CampaignConfig,
    opts: &RunOptions,
    stream: Option<&Mutex<std::io::BufWriter<std::fs::File>>>,
) -> Result<CampaignOutput> {
    use rayon::prelude::*;

    cfg.validate()?;
    opts.validate()?;
    let started = Instant::now();
    let (witness_cfg, b_values) = prepare_witness(cfg, opts)?;
    let pool = build_pool(cfg.workers)?;

    let records: Vec<NetworkRecord> = pool.install(|| {
        (0..cfg.n_networks)
            .into_par_iter()
            .map(|index| {
                let record = evaluate_network(cfg, &witness_cfg, opts, index);
                if let Some(sink) = stream {
                    if let Ok(line) = record.to_csv_line() {
                        let mut guard = sink.lock().expect("stream writer poisoned");
                        let _ = writeln!(guard, "{line}");
                    }
                }
                record
            })
            .collect()
    });

    // Parallel collect preserves index order; make the contract explicit.
    debug_assert!(records.windows(2).all(|w| w[0].index < w[1].index));

    let n_failed = records.iter().filter(|r| r.is_failed()).count() as u64;
    let failure_fraction = n_failed as f64 / cfg.n_networks as f64;
    if failure_fraction > 0.01 {
        return Err(Error::TooManyFailures {
            failed: n_failed,
            total: cfg.n_networks,
            percent: 100.0 * failure_fraction,
        });
    }

    let metadata = RunMetadata {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        config_sha256: cfg.sha256(),
        n_records: records.len() as u64,
        n_failed,
        failure_fraction,
        truncation_warning: cfg.rates.truncation_suspect(),
        b_values,
        skip_tau: opts.skip_tau,
        tau_subsample: opts.tau_subsample,
        workers: cfg.workers.max(1),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(CampaignOutput { records, metadata })
}

/// Runs a campaign entirely in memory.
pub fn run_campaign(cfg: &CampaignConfig, opts: &RunOptions) -> Result<CampaignOutput> {
    run_campaign_inner(cfg, opts, None)
}

/// Runs a campaign and persists `records.csv` (sorted) plus
/// `metadata.json` into `dir`, streaming completion-ordered lines to
/// `records.csv.part` while running.
pub fn run_campaign_to_dir(
    cfg: &CampaignConfig,
    opts: &RunOptions,
    dir: impl AsRef<Path>,
) -> Result<CampaignOutput> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let part_path = dir.join("records.csv.part");
    let part_file = std::fs::File::create(&part_path)
        .map_err(|e| Error::io(part_path.display().to_string(), e))?;
    let stream = Mutex::new(std::io::BufWriter::new(part_file));

    let output = run_campaign_inner(cfg, opts, Some(&stream))?;
    drop(stream);

    write_records(dir.join("records.csv"), &output.records)?;
    let metadata_json = serde_json::to_string_pretty(&output.metadata)?;
    let metadata_path = dir.join("metadata.json");
    std::fs::write(&metadata_path, metadata_json)
        .map_err(|e| Error::io(metadata_path.display().to_string(), e))?;
    let _ = std::fs::remove_file(&part_path);
    Ok(output)
}

/// One grid point of a rate/time sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub gamma_rec: f64,
    pub gamma_rec_inv: f64,
    pub t_weight: f64,
    /// Correlation between stationary and transient efficiency over the
    /// ensemble.
    pub kappa: f64,
    pub n_networks_used: u64,
}

/// Correlation between stationary and transient efficiency over a grid
/// of recombination rates and weight widths, on the same seeded
/// ensemble. Geometries and transient spectra are computed once per
/// network and reused across the grid.
pub fn sweep_correlation(
    cfg: &CampaignConfig,
    gamma_recs: &[f64],
    t_weights: &[f64],
) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;

    cfg.validate()?;
    if gamma_recs.is_empty() || t_weights.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    for &g in gamma_recs {
        if !(g > 0.0) {
            return Err(Error::NonPositive {
                name: "gamma_rec",
                value: g,
            });
        }
    }
    for &t in t_weights {
        if !(t > 0.0) {
            return Err(Error::NonPositive {
                name: "t_weight",
                value: t,
            });
        }
    }
    let pool = build_pool(cfg.workers)?;

    // Per network: e_t for every width and e_s for every rate; NaN marks
    // failures, which are dropped pairwise at the correlation step.
    let per_network: Vec<(Vec<f64>, Vec<f64>)> = pool.install(|| {
        (0..cfg.n_networks)
            .into_par_iter()
            .map(|index| {
                let seed = seeding::substream(cfg.master_seed, index);
                let nan_row = || {
                    (
                        vec![f64::NAN; t_weights.len()],
                        vec![f64::NAN; gamma_recs.len()],
                    )
                };
                let Ok(geometry) = sample_geometry(cfg.n_sites, seed, cfg.min_separation) else {
                    return nan_row();
                };
                let Ok(h) = coupling_matrix(&geometry) else {
                    return nan_row();
                };
                let propagator = TransientPropagator::new(&h);
                let e_ts: Vec<f64> = t_weights
                    .iter()
                    .map(|&t| propagator.efficiency(t).unwrap_or(f64::NAN))
                    .collect();
                let e_ss: Vec<f64> = gamma_recs
                    .iter()
                    .map(|&gamma_rec| {
                        let rates = RateSet {
                            gamma_rec,
                            ..cfg.rates
                        };
                        let Ok(jumps) = build_jump_operators(cfg.n_sites, &rates) else {
                            return f64::NAN;
                        };
                        let Ok(l) = build_liouvillian(&h, jumps) else {
                            return f64::NAN;
                        };
                        let Ok(rho) = steady_state(&l) else {
                            return f64::NAN;
                        };
                        stationary_efficiency(&rho, &rates).unwrap_or(f64::NAN)
                    })
                    .collect();
                (e_ts, e_ss)
            })
            .collect()
    });

    let mut rows = Vec::with_capacity(gamma_recs.len() * t_weights.len());
    for (gi, &gamma_rec) in gamma_recs.iter().enumerate() {
        for (ti, &t_weight) in t_weights.iter().enumerate() {
            let mut xs = Vec::with_capacity(per_network.len());
            let mut ys = Vec::with_capacity(per_network.len());
            for (e_ts, e_ss) in &per_network {
                let (x, y) = (e_ss[gi], e_ts[ti]);
                if x.is_finite() && y.is_finite() {
                    xs.push(x);
                    ys.push(y);
                }
            }
            let kappa = pearson(&ys, &xs)?;
            rows.push(SweepRow {
                gamma_rec,
                gamma_rec_inv: 1.0 / gamma_rec,
                t_weight,
                kappa,
                n_networks_used: xs.len() as u64,
            });
        }
    }
    Ok(rows)
}

/// One row of a binned witness table.
#[derive(Debug, Clone, Serialize)]
pub struct BinRow {
    pub center: f64,
    pub width: f64,
    pub n: u64,
    pub mean_tau: f64,
    pub sigma: f64,
    pub se_mean: f64,
    /// Undefined (omitted) when the bin is constant.
    pub se_sigma: Option<f64>,
}

impl BinRow {
    fn from_moments(center: f64, width: f64, m: &Moments) -> Self {
        BinRow {
            center,
            width,
            n: m.n as u64,
            mean_tau: m.mean,
            sigma: m.sigma,
            se_mean: m.se_mean,
            se_sigma: m.se_sigma,
        }
    }
}

/// Bins records by stationary efficiency and aggregates the witness
/// score of one order per bin. Records without that score are excluded;
/// bins left with fewer than two members are dropped (moments are
/// undefined there).
pub fn binned_tau_table(
    records: &[NetworkRecord],
    k: usize,
    bin_width: f64,
    min_count: usize,
) -> Result<Vec<BinRow>> {
    let mut e_s = Vec::new();
    let mut tau_k = Vec::new();
    for r in records {
        if r.is_failed() {
            continue;
        }
        if let Some(&t) = r.tau.get(&(k as u32)) {
            e_s.push(r.e_s);
            tau_k.push(t);
        }
    }
    if e_s.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let bins = bin_by_efficiency(&e_s, bin_width, min_count)?;
    let mut rows = Vec::with_capacity(bins.len());
    for bin in &bins {
        if bin.members.len() < 2 {
            continue;
        }
        let values: Vec<f64> = bin.members.iter().map(|&i| tau_k[i]).collect();
        let moments = bin_stats(&values)?;
        rows.push(BinRow::from_moments(bin.center(), bin.width(), &moments));
    }
    Ok(rows)
}

/// Share of networks whose witness score of order `k` reaches
/// `threshold`, among the low- and high-efficiency subsets. A fraction
/// is `None` when its subset is empty; the counts say which.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FractionsReport {
    pub k: u32,
    pub threshold: f64,
    pub low_cut: f64,
    pub high_cut: f64,
    pub n_low: u64,
    pub low_fraction: Option<f64>,
    pub n_high: u64,
    pub high_fraction: Option<f64>,
}

/// Computes [`FractionsReport`] over records that carry the requested
/// witness order. An empty subset is a result, not an error; only a
/// record set with no order-`k` scores at all (wrong `k` for the file)
/// errors.
pub fn coherence_fractions(
    records: &[NetworkRecord],
    k: usize,
    threshold: f64,
    low_cut: f64,
    high_cut: f64,
) -> Result<FractionsReport> {
    let mut n_scored = 0u64;
    let mut n_low = 0u64;
    let mut hit_low = 0u64;
    let mut n_high = 0u64;
    let mut hit_high = 0u64;
    for r in records {
        if r.is_failed() {
            continue;
        }
        let Some(&t) = r.tau.get(&(k as u32)) else {
            continue;
        };
        n_scored += 1;
        if r.e_s <= low_cut {
            n_low += 1;
            if t >= threshold {
                hit_low += 1;
            }
        }
        if r.e_s >= high_cut {
            n_high += 1;
            if t >= threshold {
                hit_high += 1;
            }
        }
    }
    if n_scored == 0 {
        return Err(Error::NoWitnessScores { k });
    }
    let fraction = |hits: u64, n: u64| (n > 0).then(|| hits as f64 / n as f64);
    Ok(FractionsReport {
        k: k as u32,
        threshold,
        low_cut,
        high_cut,
        n_low,
        low_fraction: fraction(hit_low, n_low),
        n_high,
        high_fraction: fraction(hit_high, n_high),
    })
}
