//! Multi-start Nelder-Mead maximizer used by the coherence witness.
//!
//! The objective is smooth but multimodal in the 2N product-state angles,
//! so a derivative-free local simplex search with randomized restarts is
//! used. Each restart is an independent simplex run; within one restart
//! the simplex is rebuilt around the incumbent whenever it collapses with
//! iteration budget to spare, stopping once a collapse brings no further
//! improvement. That recovers most of the reliability of a far larger
//! restart count at small cost.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result of one multi-start maximization.
#[derive(Debug, Clone)]
pub struct OptimOutcome {
    /// Best point found across all restarts.
    pub point: Vec<f64>,
    /// Objective value at `point`.
    pub value: f64,
    /// True when every restart settled below tolerance within its
    /// iteration budget; false means at least one hit the cap and the
    /// result is a best-found value.
    pub converged: bool,
    /// Total objective evaluations spent.
    pub evaluations: u64,
}

/// Standard Nelder-Mead coefficients (reflection, expansion,
/// contraction, shrink).
const ALPHA: f64 = 1.0;
const GAMMA: f64 = 2.0;
const RHO: f64 = 0.5;
const SIGMA: f64 = 0.5;

fn eval_neg<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], evals: &mut u64) -> f64 {
    *evals += 1;
    -f(x)
}

fn build_simplex<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    around: &[f64],
    edge: f64,
    evals: &mut u64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dim = around.len();
    let mut simplex = Vec::with_capacity(dim + 1);
    simplex.push(around.to_vec());
    for k in 0..dim {
        let mut v = around.to_vec();
        v[k] += edge;
        simplex.push(v);
    }
    let values = simplex.iter().map(|v| eval_neg(f, v, evals)).collect();
    (simplex, values)
}

/// One simplex run from `start`, maximizing `f`. Internally minimizes
/// `-f`. Returns (point, value, converged, evaluations).
fn nelder_mead_single<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    start: &[f64],
    scale: f64,
    tol: f64,
    max_iters: usize,
) -> (Vec<f64>, f64, bool, u64) {
    let dim = start.len();
    let mut evals = 0u64;
    let (mut simplex, mut values) = build_simplex(f, start, scale, &mut evals);
    let mut iters = 0usize;
    let mut converged = false;
    let mut rebuild_edge = scale * 0.1;
    let mut last_collapse_best = f64::INFINITY;

    loop {
        let mut order: Vec<usize> = (0..=dim).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[dim] - values[0];
        if spread.abs() <= tol {
            if values[0] >= last_collapse_best - tol || iters >= max_iters {
                // No progress since the previous collapse, or budget
                // exhausted at a converged simplex.
                converged = true;
                break;
            }
            last_collapse_best = values[0];
            let around = simplex[0].clone();
            let rebuilt = build_simplex(f, &around, rebuild_edge, &mut evals);
            simplex = rebuilt.0;
            values = rebuilt.1;
            rebuild_edge *= 0.3;
            continue;
        }
        if iters >= max_iters {
            break;
        }
        iters += 1;

        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; dim];
        for v in simplex.iter().take(dim) {
            for (c, x) in centroid.iter_mut().zip(v.iter()) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= dim as f64;
        }

        let worst = values[dim];
        let second_worst = values[dim - 1];
        let best = values[0];

        let reflect: Vec<f64> = centroid
            .iter()
            .zip(simplex[dim].iter())
            .map(|(c, w)| c + ALPHA * (c - w))
            .collect();
        let f_reflect = eval_neg(f, &reflect, &mut evals);

        if f_reflect < best {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(simplex[dim].iter())
                .map(|(c, w)| c + GAMMA * ALPHA * (c - w))
                .collect();
            let f_expand = eval_neg(f, &expand, &mut evals);
            if f_expand < f_reflect {
                simplex[dim] = expand;
                values[dim] = f_expand;
            } else {
                simplex[dim] = reflect;
                values[dim] = f_reflect;
            }
        } else if f_reflect < second_worst {
            simplex[dim] = reflect;
            values[dim] = f_reflect;
        } else {
            let contract: Vec<f64> = if f_reflect < worst {
                centroid
                    .iter()
                    .zip(reflect.iter())
                    .map(|(c, r)| c + RHO * (r - c))
                    .collect()
            } else {
                centroid
                    .iter()
                    .zip(simplex[dim].iter())
                    .map(|(c, w)| c + RHO * (w - c))
                    .collect()
            };
            let f_contract = eval_neg(f, &contract, &mut evals);
            if f_contract < worst.min(f_reflect) {
                simplex[dim] = contract;
                values[dim] = f_contract;
            } else {
                for k in 1..=dim {
                    let shrunk: Vec<f64> = simplex[0]
                        .iter()
                        .zip(simplex[k].iter())
                        .map(|(b, v)| b + SIGMA * (v - b))
                        .collect();
                    values[k] = eval_neg(f, &shrunk, &mut evals);
                    simplex[k] = shrunk;
                }
            }
        }
    }

    let mut best_idx = 0;
    for k in 1..=dim {
        if values[k] < values[best_idx] {
            best_idx = k;
        }
    }
    let point = simplex.swap_remove(best_idx);
    let value = -values[best_idx];
    (point, value, converged, evals)
}

/// Maximizes `f` over `dim` coordinates with one deterministic start and
/// `restarts - 1` random starts drawn from `sample_start`.
///
/// Restart `r` uses an RNG seeded from `(seed, r)` alone, so the best
/// value over the first `k` restarts is a deterministic, non-decreasing
/// function of `k`.
#[allow(clippy::too_many_arguments)]
pub fn multi_start_maximize<F, S>(
    mut f: F,
    deterministic_start: &[f64],
    mut sample_start: S,
    restarts: usize,
    tol: f64,
    max_iters: usize,
    scale: f64,
    seed: u64,
) -> OptimOutcome
where
    F: FnMut(&[f64]) -> f64,
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
{
    assert!(restarts >= 1, "need at least one restart");
    let mut best_point = Vec::new();
    let mut best_value = f64::NEG_INFINITY;
    let mut all_converged = true;
    let mut evaluations = 0u64;
    for r in 0..restarts {
        let start = if r == 0 {
            deterministic_start.to_vec()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(crate::seeding::derive(seed, r as u64));
            sample_start(&mut rng)
        };
        let (point, value, converged, evals) =
            nelder_mead_single(&mut f, &start, scale, tol, max_iters);
        evaluations += evals;
        all_converged &= converged;
        if value > best_value {
            best_value = value;
            best_point = point;
        }
    }
    OptimOutcome {
        point: best_point,
        value: best_value,
        converged: all_converged,
        evaluations,
    }
}

/// Uniform random angles: `theta` in `[0, pi]`, `phi` in `[0, 2 pi)`,
/// packed as `[thetas..., phis...]`.
pub fn random_angle_start(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut x = vec![0.0; 2 * n];
    for t in x.iter_mut().take(n) {
        *t = rng.gen::<f64>() * std::f64::consts::PI;
    }
    for p in x.iter_mut().skip(n) {
        *p = rng.gen::<f64>() * std::f64::consts::TAU;
    }
    x
}
