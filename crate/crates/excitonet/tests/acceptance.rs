//! Acceptance gate: one test per headline reproduction target, each
//! emitting a single PASS or FAIL line (run with `-- --nocapture` to
//! see PASS lines; FAIL lines surface in panic messages).
//!
//! Default scales keep the whole gate to about ten minutes. The
//! ignored `full_*` variant reruns the fraction target at the scale
//! the headline figures quote; allow twenty minutes for it.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use excitonet::campaign::{
    binned_tau_table, coherence_fractions, run_campaign, sweep_correlation, CampaignConfig,
    CampaignOutput, RunOptions, SweepRow, WitnessSettings,
};
use excitonet::lindblad::{
    build_jump_operators, build_liouvillian, fluxes, stationary_efficiency, steady_state, vectorize,
};
use excitonet::network::{coupling_matrix, sample_geometry, RateSet};
use excitonet::optim::random_angle_start;
use excitonet::records::{write_records, NetworkRecord};
use excitonet::seeding::substream;
use excitonet::stats::{bin_by_efficiency, kendall_tau, pearson};
use excitonet::transient::{transient_efficiency, transient_efficiency_quadrature};
use excitonet::twoexc::validate_single_excitation;
use excitonet::witness::{tau, w_state, witness_raw, BlochPairSet, ProjectedState, WitnessConfig};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C64 = Complex<f64>;

const MASTER_SEED: u64 = 1;
const T_NARROW: f64 = PI / 80.0;
const LIFETIME_GRID: [f64; 3] = [0.03, 0.05, 0.1];

fn canonical_rates(gamma_deph: f64) -> RateSet {
    RateSet::new(2e-4, 20.0, 20.0, gamma_deph).unwrap()
}

fn config(n_networks: u64, gamma_deph: f64, k_list: Vec<usize>) -> CampaignConfig {
    CampaignConfig {
        n_sites: 7,
        n_networks,
        master_seed: MASTER_SEED,
        rates: canonical_rates(gamma_deph),
        t_weight: T_NARROW,
        k_list,
        witness: WitnessSettings::default(),
        bin_width: 0.01,
        min_separation: 1e-3,
        output_path: None,
        workers: 1,
    }
}

/// 10^4 networks, efficiencies only; backs the correlation criterion.
fn efficiency_ensemble() -> &'static CampaignOutput {
    static CELL: OnceLock<CampaignOutput> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = config(10_000, 0.0, vec![]);
        let opts = RunOptions {
            skip_tau: true,
            tau_subsample: None,
        };
        run_campaign(&cfg, &opts).expect("efficiency ensemble")
    })
}

/// Correlation over the lifetime grid at both weight windows, one
/// shared ensemble; backs the plateau and shift criteria.
fn lifetime_sweep() -> &'static Vec<SweepRow> {
    static CELL: OnceLock<Vec<SweepRow>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = config(10_000, 0.0, vec![]);
        let gamma_recs: Vec<f64> = LIFETIME_GRID.iter().map(|inv| 1.0 / inv).collect();
        sweep_correlation(&cfg, &gamma_recs, &[T_NARROW, 2.0 * T_NARROW]).expect("sweep")
    })
}

/// 2x10^3 networks with the witness evaluated at orders 2..4; backs
/// the fraction, scarcity, and dephasing baselines.
fn witness_smoke() -> &'static (CampaignOutput, Duration) {
    static CELL: OnceLock<(CampaignOutput, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = config(2_000, 0.0, vec![2, 3, 4]);
        let opts = RunOptions::default();
        let started = Instant::now();
        let out = run_campaign(&cfg, &opts).expect("witness smoke ensemble");
        (out, started.elapsed())
    })
}

/// Same ensemble rerun under strong dephasing, orders 2 and 3.
fn dephased_smoke() -> &'static CampaignOutput {
    static CELL: OnceLock<CampaignOutput> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = config(2_000, 10.0, vec![2, 3]);
        run_campaign(&cfg, &RunOptions::default()).expect("dephased ensemble")
    })
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

#[test]
fn c1_transient_predicts_stationary_efficiency() {
    let out = efficiency_ensemble();
    let (e_t, e_s) = clean_pairs(&out.records);
    assert!(e_t.len() >= 10_000 - out.metadata.n_failed as usize);
    let kappa = pearson(&e_t, &e_s).unwrap();
    let line = format!(
        "correlation(E_t, E_s) = {kappa:.4} over {} networks (target 0.97 +/- 0.03)",
        e_t.len()
    );
    assert!(
        (0.94..=1.0).contains(&kappa),
        "FAIL c1_transient_predicts_stationary_efficiency: {line}"
    );
    println!("PASS c1_transient_predicts_stationary_efficiency: {line}");
}

/// Rows for one weight window, ordered by increasing lifetime.
fn sweep_rows_at(t: f64) -> Vec<&'static SweepRow> {
    let mut rows: Vec<&SweepRow> = lifetime_sweep()
        .iter()
        .filter(|r| r.t_weight == t)
        .collect();
    rows.sort_by(|a, b| a.gamma_rec_inv.total_cmp(&b.gamma_rec_inv));
    assert_eq!(rows.len(), LIFETIME_GRID.len());
    rows
}

fn argmax_kappa(rows: &[&SweepRow]) -> usize {
    rows.iter()
        .enumerate()
        .max_by(|a, b| a.1.kappa.total_cmp(&b.1.kappa))
        .unwrap()
        .0
}

#[test]
fn c2_correlation_plateau_over_lifetime_grid() {
    let rows = sweep_rows_at(T_NARROW);
    let kappas: Vec<f64> = rows.iter().map(|r| r.kappa).collect();
    let all_high = kappas.iter().all(|&k| k > 0.9);
    let argmax = argmax_kappa(&rows);
    let line = format!(
        "kappa over lifetimes {LIFETIME_GRID:?} = {kappas:.4?}, max at 1/gamma_rec = {}",
        LIFETIME_GRID[argmax]
    );
    assert!(
        all_high && argmax == 1,
        "FAIL c2_correlation_plateau_over_lifetime_grid: {line}"
    );
    println!("PASS c2_correlation_plateau_over_lifetime_grid: {line}");
}

#[test]
fn c3_plateau_peak_never_shifts_left_when_window_doubles() {
    let narrow = argmax_kappa(&sweep_rows_at(T_NARROW));
    let doubled = argmax_kappa(&sweep_rows_at(2.0 * T_NARROW));
    let line = format!(
        "argmax lifetime: {} (T = pi/80) -> {} (T = pi/40) on grid {LIFETIME_GRID:?}",
        LIFETIME_GRID[narrow], LIFETIME_GRID[doubled]
    );
    assert!(
        doubled >= narrow,
        "FAIL c3_plateau_peak_never_shifts_left_when_window_doubles: {line}"
    );
    println!("PASS c3_plateau_peak_never_shifts_left_when_window_doubles: {line}");
}

fn fractions_line(records: &[NetworkRecord], low_band: (f64, f64)) -> Result<String, String> {
    let report = coherence_fractions(records, 3, 0.5, 0.05, 0.15).map_err(|e| e.to_string())?;
    let side = |fraction: Option<f64>, n: u64, cut: &str| match fraction {
        Some(f) => format!(
            "tau3 >= 0.5 for {:.1}% of {n} networks with {cut}",
            100.0 * f
        ),
        None => {
            let max_e_s = records
                .iter()
                .filter(|r| !r.is_failed())
                .map(|r| r.e_s)
                .fold(f64::NEG_INFINITY, f64::max);
            format!("no networks with {cut} (max observed E_s = {max_e_s:.4})")
        }
    };
    let line = format!(
        "{} (target {:.0}%..{:.0}%); {} (target >= 90%)",
        side(report.low_fraction, report.n_low, "E_s <= 0.05"),
        100.0 * low_band.0,
        100.0 * low_band.1,
        side(report.high_fraction, report.n_high, "E_s >= 0.15"),
    );
    let low_ok = report
        .low_fraction
        .is_some_and(|f| (low_band.0..=low_band.1).contains(&f));
    let high_ok = report.high_fraction.is_some_and(|f| f >= 0.9);
    if low_ok && high_ok {
        Ok(line)
    } else {
        Err(line)
    }
}

#[test]
fn c4_three_site_coherence_fractions_smoke() {
    let (out, elapsed) = witness_smoke();
    assert!(
        *elapsed < Duration::from_secs(30 * 60),
        "smoke ensemble exceeded its runtime budget: {elapsed:?}"
    );
    // Smoke tolerance: 46% +/- 15 percentage points on the low side.
    match fractions_line(&out.records, (0.31, 0.61)) {
        Ok(line) => println!("PASS c4_three_site_coherence_fractions_smoke: {line}"),
        Err(line) => panic!("FAIL c4_three_site_coherence_fractions_smoke: {line}"),
    }
}

/// Full-scale variant of the fraction criterion: 2x10^4 networks and
/// the quoted +/- 10 point tolerance.
#[test]
#[ignore]
fn full_three_site_coherence_fractions() {
    let cfg = config(20_000, 0.0, vec![2, 3, 4]);
    let out = run_campaign(&cfg, &RunOptions::default()).expect("full ensemble");
    match fractions_line(&out.records, (0.36, 0.56)) {
        Ok(line) => println!("PASS full_three_site_coherence_fractions: {line}"),
        Err(line) => panic!("FAIL full_three_site_coherence_fractions: {line}"),
    }
}

#[test]
fn c5_dephasing_preserves_coherence_trend() {
    let base = &witness_smoke().0;
    let deph = dephased_smoke();

    let max_e_s = |records: &[NetworkRecord]| {
        records
            .iter()
            .filter(|r| !r.is_failed())
            .map(|r| r.e_s)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let max_base = max_e_s(&base.records);
    let max_deph = max_e_s(&deph.records);

    let mut legs = Vec::new();
    if max_deph >= max_base {
        legs.push(format!(
            "max E_s did not decrease ({max_base:.4} -> {max_deph:.4})"
        ));
    }
    let mut trend = |k: usize| match binned_tau_table(&deph.records, k, 0.01, 50) {
        Ok(rows) if rows.len() >= 2 => {
            let centers: Vec<f64> = rows.iter().map(|r| r.center).collect();
            let means: Vec<f64> = rows.iter().map(|r| r.mean_tau).collect();
            let tau_trend = kendall_tau(&centers, &means).unwrap();
            if tau_trend < 0.6 {
                legs.push(format!(
                    "tau{k} bin means not increasing (kendall {tau_trend:.2}, means {means:.4?})"
                ));
            }
        }
        Ok(rows) => legs.push(format!("tau{k}: only {} usable bin(s)", rows.len())),
        Err(e) => legs.push(format!("tau{k} binning failed: {e}")),
    };
    trend(2);
    trend(3);

    let line = format!(
        "max E_s {max_base:.4} -> {max_deph:.4} under dephasing; \
         bin-mean trends checked for tau2 and tau3"
    );
    assert!(
        legs.is_empty(),
        "FAIL c5_dephasing_preserves_coherence_trend: {}",
        legs.join("; ")
    );
    println!("PASS c5_dephasing_preserves_coherence_trend: {line}");
}

#[test]
fn c6_four_site_coherence_stays_scarce() {
    let out = &witness_smoke().0;
    let mut e_s = Vec::new();
    let mut tau4 = Vec::new();
    for r in &out.records {
        if r.is_failed() {
            continue;
        }
        if let Some(&t) = r.tau.get(&4) {
            e_s.push(r.e_s);
            tau4.push(t);
        }
    }
    let bins = bin_by_efficiency(&e_s, 0.01, 50).unwrap();
    let mut worst = 0.0f64;
    for bin in &bins {
        let hits = bin.members.iter().filter(|&&i| tau4[i] > 0.1).count();
        worst = worst.max(hits as f64 / bin.members.len() as f64);
    }
    let line = format!(
        "worst per-bin fraction with tau4 > 0.1 is {:.2}% over {} bins (limit 5%)",
        100.0 * worst,
        bins.len()
    );
    assert!(
        worst < 0.05,
        "FAIL c6_four_site_coherence_stays_scarce: {line}"
    );
    println!("PASS c6_four_site_coherence_stays_scarce: {line}");
}

fn random_hermitian_unit_trace(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let mut m = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
        }
    }
    let herm = (&m + m.adjoint()).scale(0.5);
    let trace = herm.trace();
    &herm - DMatrix::identity(dim, dim).scale((trace.re - 1.0) / dim as f64)
}

#[test]
fn c7_property_suite() {
    let rates = canonical_rates(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures: Vec<String> = Vec::new();

    // Generator annihilates the trace and preserves Hermiticity.
    for i in 0..20u64 {
        let geometry = sample_geometry(7, substream(40, i), 1e-3).unwrap();
        let h = coupling_matrix(&geometry).unwrap();
        let probe_rates =
            RateSet::new(2e-4, 20.0, 20.0, if i % 2 == 0 { 0.0 } else { 10.0 }).unwrap();
        let jumps = build_jump_operators(7, &probe_rates).unwrap();
        let lv = build_liouvillian(&h, jumps).unwrap();
        let rho = random_hermitian_unit_trace(8, &mut rng);
        let image = lv.apply(&rho);
        let trace_defect = image.trace().norm();
        let herm_defect = (&image - image.adjoint()).norm() / image.norm().max(1.0);
        if trace_defect > 1e-12 {
            failures.push(format!("trace annihilation defect {trace_defect:.2e}"));
        }
        if herm_defect > 1e-12 {
            failures.push(format!("hermiticity defect {herm_defect:.2e}"));
        }
    }

    // Steady-state quality, flux balance, and efficiency ranges.
    for i in 0..50u64 {
        let seed = substream(41, i);
        let geometry = sample_geometry(7, seed, 1e-3).unwrap();
        let h = coupling_matrix(&geometry).unwrap();
        let jumps = build_jump_operators(7, &rates).unwrap();
        let lv = build_liouvillian(&h, jumps).unwrap();
        let rho = match steady_state(&lv) {
            Ok(r) => r,
            Err(e) => {
                failures.push(format!("steady solve failed on seed {seed}: {e}"));
                continue;
            }
        };
        let residual = lv.residual_norm(&rho.matrix);
        if residual > 1e-10 {
            failures.push(format!("steady residual {residual:.2e}"));
        }
        let trace_defect = (rho.trace().re - 1.0).abs();
        if trace_defect > 1e-10 {
            failures.push(format!("steady trace defect {trace_defect:.2e}"));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -1e-10 {
            failures.push(format!("steady negativity {min_eig:.2e}"));
        }
        let flux = fluxes(&rho, &rates);
        let imbalance = (flux.j_in - flux.j_rec - flux.j_out).abs();
        if imbalance > 1e-10 {
            failures.push(format!("flux imbalance {imbalance:.2e}"));
        }
        let e_s = stationary_efficiency(&rho, &rates).unwrap();
        let e_t = transient_efficiency(&h, T_NARROW).unwrap();
        if !(0.0..=1.0).contains(&e_s) || !(0.0..=1.0).contains(&e_t) {
            failures.push(format!("efficiency out of range: E_s {e_s}, E_t {e_t}"));
        }
    }

    // Two-pole network: closed-form weighted transfer.
    let two_site = sample_geometry(2, 9, 0.0).unwrap();
    let h2 = coupling_matrix(&two_site).unwrap();
    for t in [PI / 80.0, PI / 40.0, 0.3, 1.0] {
        let got = transient_efficiency(&h2, t).unwrap();
        let want = 2.0 * t * t / (1.0 + 4.0 * t * t);
        if (got - want).abs() > 1e-10 {
            failures.push(format!(
                "two-site closed form off by {:.2e} at T = {t}",
                (got - want).abs()
            ));
        }
    }

    // Spectral form against adaptive quadrature.
    for i in 0..100u64 {
        let geometry = sample_geometry(7, substream(42, i), 1e-3).unwrap();
        let h = coupling_matrix(&geometry).unwrap();
        let closed = transient_efficiency(&h, T_NARROW).unwrap();
        let quad = transient_efficiency_quadrature(&h, T_NARROW, 1e-10).unwrap();
        if (closed - quad).abs() > 1e-8 {
            failures.push(format!(
                "quadrature mismatch {:.2e} on geometry {i}",
                (closed - quad).abs()
            ));
        }
    }

    // Witness normalization on the calibration states.
    let mut wcfg = WitnessConfig::default();
    for k in [2usize, 3, 4] {
        wcfg.calibrate(k, 7).unwrap();
        let anchor = w_state(k, 7).unwrap();
        let value = tau(&anchor, k, &wcfg, 1234 + k as u64).unwrap().value;
        if (value - 1.0).abs() > 1e-6 {
            failures.push(format!("tau{k} on its anchor state = {value:.8}"));
        }
    }

    // Witness soundness: no incoherent state ever scores positive.
    let mut worst_raw = f64::NEG_INFINITY;
    for s in 0..1000 {
        let mut diag = DMatrix::<C64>::zeros(7, 7);
        let mut total = 0.0;
        for i in 0..7 {
            let w = rng.gen::<f64>();
            diag[(i, i)] = C64::new(w, 0.0);
            total += w;
        }
        let state = ProjectedState::new(diag.scale(1.0 / total), 1.0).unwrap();
        let params = BlochPairSet::from_flat(&random_angle_start(7, &mut rng));
        let k = 2 + (s % 3);
        let raw = witness_raw(&state, &params, k).unwrap();
        worst_raw = worst_raw.max(raw);
    }
    // Second axis: one fixed diagonal state against many parameter sets.
    let mut diag = DMatrix::<C64>::zeros(7, 7);
    for i in 0..7 {
        diag[(i, i)] = C64::new(1.0 / 7.0, 0.0);
    }
    let uniform = ProjectedState::new(diag, 1.0).unwrap();
    for s in 0..1000 {
        let params = BlochPairSet::from_flat(&random_angle_start(7, &mut rng));
        let raw = witness_raw(&uniform, &params, 2 + (s % 3)).unwrap();
        worst_raw = worst_raw.max(raw);
    }
    if worst_raw > 1e-14 {
        failures.push(format!("incoherent state scored {worst_raw:.2e}"));
    }

    // Truncation safety: the two-excitation sector stays negligible.
    for i in 0..100u64 {
        let geometry = sample_geometry(7, substream(43, i), 1e-3).unwrap();
        let check = validate_single_excitation(&geometry, &rates).unwrap();
        if check.ratio >= 1e-3 || check.degenerate {
            failures.push(format!(
                "two-excitation weight ratio {:.2e} on geometry {i}",
                check.ratio
            ));
        }
    }

    assert!(
        failures.is_empty(),
        "FAIL c7_property_suite: {} violation(s): {}",
        failures.len(),
        failures.join("; ")
    );
    println!("PASS c7_property_suite: zero violations across all property families");
}

#[test]
fn c8_record_files_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for workers in [1usize, 8] {
        let mut cfg = config(200, 0.0, vec![2, 3]);
        cfg.workers = workers;
        let opts = RunOptions {
            skip_tau: false,
            tau_subsample: Some(0.25),
        };
        let out = run_campaign(&cfg, &opts).unwrap();
        let path = dir.path().join(format!("records_{workers}.csv"));
        write_records(&path, &out.records).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    let line = format!(
        "sorted record files byte-identical across 1 and 8 workers ({} bytes)",
        bytes[0].len()
    );
    assert!(
        bytes[0] == bytes[1],
        "FAIL c8_record_files_identical_across_worker_counts: files differ"
    );
    println!("PASS c8_record_files_identical_across_worker_counts: {line}");
}

// Keep the vectorization helper exercised from the public surface so the
// suite fails loudly if the row-major convention ever changes.
#[test]
fn vectorization_convention_is_row_major() {
    let mut m = DMatrix::<C64>::zeros(2, 2);
    m[(0, 1)] = C64::new(3.0, 0.0);
    let v = vectorize(&m);
    assert_eq!(v[1], C64::new(3.0, 0.0));
}
