//! Orchestrated numerical certification: every exact identity and every
//! statistical bound the crate relies on, evaluated into machine-readable
//! pass/fail reports.
//!
//! The exact suite is deterministic and seed-independent. The stochastic
//! suite accepts at three standard errors (normal approximation for
//! proportions and means) and is bit-reproducible from its master seed,
//! independent of the worker count: every aggregate is either an exact
//! integer merge or a fixed-order fold. A failed check is recorded, never
//! fatal; callers decide what to do with failures.

use crate::chain::{
    build_kernel, kernel_row, row_band, step_sample, ChainParams, StateDistribution,
};
use crate::combinatorics::{exp_moment_hypergeom, hyper_vs_binom_tv, shifted_binom_tv, KahanSum};
use crate::couplings::{
    contraction_estimate, decomposed_run, four_phase_batch, monotone_step, remark_gap_hitting,
    tau_couple_survival, CoupledPair, DecomposedState, StopOutcome,
};
use crate::exact;
use crate::mixing::{self, StartPolicy};
use crate::rng::{derive_seed, par_count, par_histogram};
use crate::spectral::{
    conditional_mean, conditional_variance, doob_bound, martingale_value, EigenPair,
};
use crate::{Error, Result};
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

/// How a statistic is compared against its target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
}

/// Outcome record of one verification check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub n: u32,
    pub k: u32,
    pub statistic: f64,
    pub bound: f64,
    pub direction: Direction,
    pub tolerance: f64,
    pub passed: bool,
    /// 0 for exact (non-statistical) checks.
    pub replicas: u64,
    /// 0 for exact checks.
    pub seed: u64,
}

impl CheckReport {
    fn le(name: &str, params: (u32, u32), statistic: f64, bound: f64, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            n: params.0,
            k: params.1,
            statistic,
            bound,
            direction: Direction::Le,
            tolerance,
            passed: statistic <= bound + tolerance,
            replicas: 0,
            seed: 0,
        }
    }

    fn eq(name: &str, params: (u32, u32), statistic: f64, bound: f64, tolerance: f64) -> Self {
        CheckReport {
            name: name.to_string(),
            n: params.0,
            k: params.1,
            statistic,
            bound,
            direction: Direction::Eq,
            tolerance,
            passed: (statistic - bound).abs() <= tolerance,
            replicas: 0,
            seed: 0,
        }
    }

    fn with_replicas(mut self, replicas: u64, seed: u64) -> Self {
        self.replicas = replicas;
        self.seed = seed;
        self
    }
}

/// True iff any report failed.
pub fn any_failed(reports: &[CheckReport]) -> bool {
    reports.iter().any(|r| !r.passed)
}

/// Worst value together with the parameters that attained it; merges are
/// order-free (ties broken towards the lexicographically smaller witness).
#[derive(Clone, Copy, Debug)]
struct Worst {
    value: f64,
    at: (u32, u32),
}

impl Worst {
    fn seed() -> Self {
        Worst {
            value: f64::NEG_INFINITY,
            at: (0, 0),
        }
    }

    fn update(&mut self, value: f64, at: (u32, u32)) {
        if value > self.value || (value == self.value && at < self.at) {
            self.value = value;
            self.at = at;
        }
    }

    fn merge(mut self, other: Worst) -> Self {
        self.update(other.value, other.at);
        self
    }
}

fn plain_banded_step(kernel: &crate::chain::BandedKernel, src: &[f64], dst: &mut [f64]) {
    dst.fill(0.0);
    for (i, &w) in src.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let (lo, row) = kernel.row(i as u32);
        let lo = lo as usize;
        for (idx, &p) in row.iter().enumerate() {
            dst[lo + idx] += w * p;
        }
    }
}

/// Per-(n, k) statistics of the exact sweep.
#[derive(Clone, Copy, Debug)]
struct SweepStats {
    row_sum: Worst,
    detailed_balance: Worst,
    oracle: Worst,
    entrywise: Worst,
    entrywise_large: Worst,
    eigen1: Worst,
    eigen2: Worst,
    mean_dev: Worst,
    var_dev: Worst,
    martingale: Worst,
}

impl SweepStats {
    fn seed() -> Self {
        SweepStats {
            row_sum: Worst::seed(),
            detailed_balance: Worst::seed(),
            oracle: Worst::seed(),
            entrywise: Worst::seed(),
            entrywise_large: Worst::seed(),
            eigen1: Worst::seed(),
            eigen2: Worst::seed(),
            mean_dev: Worst::seed(),
            var_dev: Worst::seed(),
            martingale: Worst::seed(),
        }
    }

    fn merge(self, o: SweepStats) -> Self {
        SweepStats {
            row_sum: self.row_sum.merge(o.row_sum),
            detailed_balance: self.detailed_balance.merge(o.detailed_balance),
            oracle: self.oracle.merge(o.oracle),
            entrywise: self.entrywise.merge(o.entrywise),
            entrywise_large: self.entrywise_large.merge(o.entrywise_large),
            eigen1: self.eigen1.merge(o.eigen1),
            eigen2: self.eigen2.merge(o.eigen2),
            mean_dev: self.mean_dev.merge(o.mean_dev),
            var_dev: self.var_dev.merge(o.var_dev),
            martingale: self.martingale.merge(o.martingale),
        }
    }
}

const MOMENT_HORIZON: u64 = 200;

fn sweep_pair(n: u32, k: u32) -> Result<SweepStats> {
    let params = ChainParams::new(n, k)?;
    let at = (n, k);
    let mut stats = SweepStats::seed();
    let kernel = build_kernel(params)?;
    // The 1e-12 row-sum and reversibility claims are pinned to n <= 60;
    // larger kernels are governed by the build gates (1e-9 row sums before
    // renormalization, 1e-12 detailed balance), which building just enforced.
    if n <= 60 {
        stats.row_sum.update(kernel.row_sum_deviation(), at);
        stats
            .detailed_balance
            .update(kernel.detailed_balance_deviation(), at);
    }

    // Entrywise agreement of the assembled rows with the direct log-space
    // transition probability; exhaustive at small n, spot rows above.
    let rows_to_check: Vec<u32> = if n <= 24 {
        (0..=n).collect()
    } else {
        vec![0, n / 4, n / 2, n]
    };
    for &i in &rows_to_check {
        let (lo, hi) = row_band(params, i);
        for j in lo..=hi {
            let direct = crate::chain::transition_prob(params, i, j)?;
            let dev = (kernel.prob(i, j) - direct).abs();
            // The two routes share the log-factorial table; their residual
            // disagreement is a few ulps of the log magnitudes, which grow
            // with n. Track the n <= 60 scale separately.
            if n <= 60 {
                stats.entrywise.update(dev, at);
            } else {
                stats.entrywise_large.update(dev, at);
            }
        }
    }

    // Rational ground truth for tiny chains.
    if n <= 12 {
        let oracle = exact::kernel(n as u64, k as u64);
        for i in 0..=n {
            for j in 0..=n {
                let want = oracle[i as usize][j as usize].to_f64().unwrap();
                stats.oracle.update((kernel.prob(i, j) - want).abs(), at);
            }
        }
    }

    // The closed-form eigenfunctions and the moment formulas only apply on
    // the k <= n/2 side (the complement covers the rest).
    if n >= 2 && 2 * k <= n {
        for index in 1..=2u8 {
            let pair = EigenPair::new(params, index)?;
            let defect = pair.defect(&kernel);
            if index == 1 {
                stats.eigen1.update(defect, at);
            } else {
                stats.eigen2.update(defect, at);
            }
        }

        let mut src = vec![0.0f64; n as usize + 1];
        let mut dst = vec![0.0f64; n as usize + 1];
        for x0 in [0, n / 4, n / 2] {
            src.fill(0.0);
            src[x0 as usize] = 1.0;
            for t in 1..=MOMENT_HORIZON {
                plain_banded_step(&kernel, &src, &mut dst);
                std::mem::swap(&mut src, &mut dst);
                let dist = StateDistribution::from_weights(n, src.clone())?;
                let rel = |got: f64, want: f64| {
                    if want.abs() < 1e-9 {
                        (got - want).abs()
                    } else {
                        (got - want).abs() / want.abs()
                    }
                };
                stats
                    .mean_dev
                    .update(rel(dist.mean(), conditional_mean(params, t, x0)), at);
                stats.var_dev.update(
                    rel(dist.variance(), conditional_variance(params, t, x0)),
                    at,
                );
            }
        }

        // Martingale identity, restricted to swap sizes where the normalizer
        // keeps the rescaled values within a few multiples of f1.
        if k > 0 && 5 * k <= n {
            for t in [0u64, 1, 3] {
                let next: Vec<f64> = (0..=n)
                    .map(|x| martingale_value(params, t + 1, x).unwrap())
                    .collect();
                let pnext = kernel.apply_to_function(&next);
                for x in 0..=n {
                    let now = martingale_value(params, t, x).unwrap();
                    stats.martingale.update((pnext[x as usize] - now).abs(), at);
                }
            }
        }
    }
    Ok(stats)
}

/// Runs every exact (non-statistical) invariant: kernel certificates and
/// oracle agreement up to n_max, the spectral identities and moment formulas
/// on the same grid, the stationary moments, complement symmetry, the tiny
/// hand-checked chain, and the exact total-variation lemmas. Deterministic;
/// `tolerance` is the acceptance bound for the checks whose tolerance the
/// contracts leave open (the stationary moments), every other bound is fixed.
pub fn run_exact_suite(n_max: u32, tolerance: f64) -> Result<Vec<CheckReport>> {
    if n_max > 300 {
        return Err(Error::invalid(
            "n_max",
            "exact suite is sized for n_max <= 300",
        ));
    }
    if n_max < 2 {
        return Err(Error::invalid("n_max", "need n_max >= 2"));
    }
    let mut reports = Vec::new();

    // Kernel sweep over every (n, k), all statistics gathered in one pass.
    let pairs: Vec<(u32, u32)> = (1..=n_max)
        .flat_map(|n| (0..=n).map(move |k| (n, k)))
        .collect();
    let stats = pairs
        .par_iter()
        .map(|&(n, k)| sweep_pair(n, k))
        .try_reduce(SweepStats::seed, |a, b| Ok(a.merge(b)))?;

    let rep = |name: &str, w: Worst, bound: f64| CheckReport::le(name, w.at, w.value, bound, 0.0);
    reports.push(rep("kernel_row_sums", stats.row_sum, 1e-12));
    reports.push(rep(
        "kernel_detailed_balance",
        stats.detailed_balance,
        1e-12,
    ));
    reports.push(rep("kernel_vs_rational_oracle", stats.oracle, 1e-13));
    reports.push(rep("kernel_vs_transition_prob", stats.entrywise, 1e-13));
    if stats.entrywise_large.value > f64::NEG_INFINITY {
        reports.push(rep(
            "kernel_vs_transition_prob_large",
            stats.entrywise_large,
            1e-12,
        ));
    }
    reports.push(rep("eigen_identity_f1", stats.eigen1, 1e-10));
    reports.push(rep("eigen_identity_f2", stats.eigen2, 1e-10));
    reports.push(rep("moment_mean_propagation", stats.mean_dev, 1e-9));
    reports.push(rep("moment_variance_propagation", stats.var_dev, 1e-9));
    reports.push(rep("martingale_identity", stats.martingale, 1e-10));

    // Stationary moments against the closed forms.
    let mut worst_pi = Worst::seed();
    for n in 2..=200u32 {
        let pi = StateDistribution::stationary(n);
        let nf = n as f64;
        let want_var = nf * nf / (4.0 * (2.0 * nf - 1.0));
        worst_pi.update((pi.mean() - nf / 2.0).abs() / (nf / 2.0), (n, 0));
        worst_pi.update((pi.variance() - want_var).abs() / want_var, (n, 0));
    }
    reports.push(CheckReport::le(
        "stationary_moments",
        worst_pi.at,
        worst_pi.value,
        tolerance,
        0.0,
    ));

    // Complement symmetry of d(t) profiles.
    let mut worst_comp = Worst::seed();
    for n in [8u32, 16, 24, 40] {
        if n > n_max {
            continue;
        }
        for k in 1..n / 2 {
            let times: Vec<u64> = (0..=50).collect();
            let a = mixing::profile(
                &build_kernel(ChainParams::new(n, k)?)?,
                StartPolicy::Extremes,
                &times,
            )?;
            let b = mixing::profile(
                &build_kernel(ChainParams::new(n, n - k)?)?,
                StartPolicy::Extremes,
                &times,
            )?;
            for (x, y) in a.distances.iter().zip(&b.distances) {
                worst_comp.update((x - y).abs(), (n, k));
            }
        }
    }
    reports.push(CheckReport::le(
        "complement_symmetry",
        worst_comp.at,
        worst_comp.value,
        1e-10,
        0.0,
    ));

    // The tiny chain whose distances are hand computable: d(0) = 5/6,
    // one step from the middle gives 1/6, t_mix(1/4) = 2.
    {
        let kernel = build_kernel(ChainParams::new(2, 1)?)?;
        let mut dev: f64 = (mixing::distance_from(&kernel, 0, 0)? - 5.0 / 6.0).abs();
        dev = dev.max((mixing::distance_from(&kernel, 0, 1)? - 1.0 / 3.0).abs());
        dev = dev.max((mixing::distance_from(&kernel, 1, 1)? - 1.0 / 6.0).abs());
        let tmix = mixing::mixing_time(&kernel, 0.25, StartPolicy::AllStates)?;
        dev = dev.max((tmix as f64 - 2.0).abs());
        reports.push(CheckReport::le("tiny_chain_exact", (2, 1), dev, 1e-14, 0.0));
    }

    // Sampling with/without replacement: TV(Hyper, Bin) <= 4r/N on the full
    // grid N <= 500, K <= N, r <= N/2.
    {
        let worst = (1..=500u64)
            .into_par_iter()
            .map(|pop| {
                let mut w = Worst::seed();
                for successes in 0..=pop {
                    for draws in 0..=pop / 2 {
                        let r = hyper_vs_binom_tv(pop, successes, draws).expect("valid");
                        w.update(r.tv - r.bound, (pop as u32, successes as u32));
                    }
                }
                w
            })
            .reduce(Worst::seed, Worst::merge);
        reports.push(CheckReport::le(
            "hyper_binom_tv_bound",
            worst.at,
            worst.value,
            0.0,
            0.0,
        ));
    }

    // Crossing-point identity for shifted binomials, |g| <= sqrt(k).
    {
        let worst = (1..=2000u64)
            .into_par_iter()
            .map(|k| {
                let mut w = Worst::seed();
                let gmax = (k as f64).sqrt() as i64;
                for g in -gmax..=gmax {
                    let r = shifted_binom_tv(k, g);
                    w.update(
                        (r.tv - r.crossing_mass).abs(),
                        (k as u32, g.unsigned_abs() as u32),
                    );
                }
                w
            })
            .reduce(Worst::seed, Worst::merge);
        reports.push(CheckReport::le(
            "shifted_binom_crossing",
            worst.at,
            worst.value,
            1e-14,
            0.0,
        ));
    }

    // The TV of a k^(1/4) shift dies along a geometric k-ladder. The
    // asserted ladder steps by factors of 16 so that k^(1/4) is an exact
    // integer at every rung; on the finer factor-4 ladder the floor of
    // k^(1/4) repeats a value while sqrt(k) doubles, and the exact TV then
    // ticks up (~1.3e-3 between 2^6 and 2^8), so that ladder is reported
    // informationally rather than asserted.
    {
        // k = 2^(4e), so k^(1/4) = 2^e exactly.
        let tvs: Vec<f64> = (1..=4u32)
            .map(|e| shifted_binom_tv(1u64 << (4 * e), 1i64 << e).tv)
            .collect();
        let mut worst_step = f64::NEG_INFINITY;
        for w in tvs.windows(2) {
            worst_step = worst_step.max(w[1] - w[0]);
        }
        reports.push(CheckReport::le(
            "shifted_binom_ladder_monotone",
            (1 << 16, 16),
            worst_step,
            0.0,
            0.0,
        ));
        reports.push(CheckReport::le(
            "shifted_binom_ladder_final",
            (1 << 16, 16),
            *tvs.last().unwrap(),
            0.06,
            0.0,
        ));
        let fine: Vec<f64> = (2..=8)
            .map(|e| {
                let k = 1u64 << (2 * e);
                shifted_binom_tv(k, (k as f64).powf(0.25) as i64).tv
            })
            .collect();
        let mut fine_step = f64::NEG_INFINITY;
        for w in fine.windows(2) {
            fine_step = fine_step.max(w[1] - w[0]);
        }
        // Informational: tolerance 1 records the factor-4 ladder's worst
        // consecutive increase without gating the suite.
        reports.push(CheckReport::le(
            "shifted_binom_ladder_step2_info",
            (1 << 16, 16),
            fine_step,
            0.0,
            1.0,
        ));
    }

    // Sub-Gaussian bound on the centered hypergeometric MGF with the
    // standard constant 8, swept over N <= 400, r <= N/10, |h| <= 1.
    {
        let hs = [-1.0, -0.75, -0.5, -0.25, -0.1, 0.1, 0.25, 0.5, 0.75, 1.0];
        let worst = (2..=400u64)
            .into_par_iter()
            .map(|pop| {
                let mut w = Worst::seed();
                for draws in 1..=pop / 10 {
                    for &h in &hs {
                        let e = exp_moment_hypergeom(pop, pop / 2, draws, h).expect("valid");
                        let ratio = e.ln() / (h * h * draws as f64 / 8.0);
                        w.update(ratio, (pop as u32, draws as u32));
                    }
                }
                w
            })
            .reduce(Worst::seed, Worst::merge);
        reports.push(CheckReport::le(
            "mgf_hoeffding_8",
            worst.at,
            worst.value,
            1.0,
            1e-9,
        ));
    }

    Ok(reports)
}

/// The default parameter grid of the stochastic suite.
pub fn default_stochastic_grid() -> Vec<ChainParams> {
    [(100, 10), (400, 10), (1000, 25), (2000, 50)]
        .into_iter()
        .map(|(n, k)| ChainParams::new(n, k).unwrap())
        .collect()
}

// Fixed salts so every check draws from its own stream family.
const SALT_CONTRACTION: u64 = 1;
const SALT_MONOTONE: u64 = 2;
const SALT_MARGINAL: u64 = 3;
const SALT_STEP_MARGINAL: u64 = 4;
const SALT_DECOMPOSED: u64 = 5;
const SALT_SURVIVAL: u64 = 6;
const SALT_DOOB_POINT: u64 = 7;
const SALT_DOOB_SUP: u64 = 8;
const SALT_HITTING: u64 = 9;
const SALT_CHEBYSHEV: u64 = 10;
const SALT_REMARK: u64 = 11;
const SALT_FOUR_PHASE: u64 = 12;

fn binom_se(p: f64, reps: u64) -> f64 {
    (p * (1.0 - p) / reps as f64).sqrt()
}

/// Empirical one-step law TV against an exact kernel row.
fn marginal_tv(
    params: ChainParams,
    from: u32,
    reps: u64,
    seed: u64,
    sampler: impl Fn(&mut rand_chacha::ChaCha8Rng) -> u32 + Sync,
) -> f64 {
    let kernel_row = {
        let mut row = kernel_row(params, from);
        let mut sum = KahanSum::new();
        for &p in &row {
            sum.add(p);
        }
        let total = sum.total();
        for p in &mut row {
            *p /= total;
        }
        row
    };
    let (lo, _) = row_band(params, from);
    let hist = par_histogram(seed, reps, params.n as usize + 1, |_, rng| {
        sampler(rng) as usize
    });
    let mut acc = KahanSum::new();
    for (j, &count) in hist.iter().enumerate() {
        let empirical = count as f64 / reps as f64;
        let exact_p = if (j as u32) >= lo && j < lo as usize + kernel_row.len() {
            kernel_row[j - lo as usize]
        } else {
            0.0
        };
        acc.add((empirical - exact_p).abs());
    }
    0.5 * acc.total()
}

/// Runs every statistical invariant at three-sigma acceptance.
///
/// `reps` sizes the one-step distributional checks (10^6 by default);
/// path-level checks run at reps/10 and reps/100, floored at 10^4 and 5x10^3
/// respectively, so the suite stays within a desk-scale runtime. Every
/// result is bit-reproducible from (grid, reps, seed) regardless of the
/// worker count.
pub fn run_stochastic_suite(
    grid: &[ChainParams],
    reps: u64,
    seed: u64,
) -> Result<Vec<CheckReport>> {
    if reps < 10_000 {
        return Err(Error::invalid(
            "reps",
            "stochastic suite needs reps >= 10^4",
        ));
    }
    if grid.is_empty() {
        return Err(Error::invalid("grid", "empty parameter grid"));
    }
    let paths10 = (reps / 10).max(10_000);
    let paths100 = (reps / 100).max(5_000);
    let mut reports = Vec::new();

    // One-step contraction at gap one: mean within 3 sigma of the formula.
    {
        let params = ChainParams::new(100, 10)?;
        let s = derive_seed(seed, SALT_CONTRACTION);
        let est = contraction_estimate(params, params.n / 2, reps, s)?;
        reports.push(
            CheckReport::eq(
                "contraction_gap1",
                (100, 10),
                est.mean,
                est.target,
                3.0 * est.std_error,
            )
            .with_replicas(reps, s),
        );
    }

    // Monotone coupling: no gap growth over >= 10^7 coupled steps. The step
    // itself hard-asserts; this drives it across the grid from the extreme
    // gap and counts violations seen from outside.
    {
        let s = derive_seed(seed, SALT_MONOTONE);
        let path_len = 1000u64;
        let per_config = (10_000_000 / (grid.len() as u64 * path_len)).max(1);
        let mut violations = 0u64;
        let mut steps = 0u64;
        for (idx, &params) in grid.iter().enumerate() {
            violations += par_count(derive_seed(s, idx as u64), per_config, |_, rng| {
                let mut pair = CoupledPair::new(0, params.n);
                let mut seen = false;
                for _ in 0..path_len {
                    let before = pair.gap();
                    pair = monotone_step(pair, params, rng);
                    seen |= pair.gap() > before;
                }
                seen
            });
            steps += per_config * path_len;
        }
        let worst = grid[grid.len() - 1];
        reports.push(
            CheckReport::le(
                "monotone_no_violation",
                (worst.n, worst.k),
                violations as f64,
                0.0,
                0.0,
            )
            .with_replicas(steps, s),
        );
    }

    // Coupled marginals follow the exact kernel rows.
    {
        let params = ChainParams::new(100, 10)?;
        let s = derive_seed(seed, SALT_MARGINAL);
        let mut worst = f64::NEG_INFINITY;
        for (idx, &(x, y)) in [(30u32, 70u32), (50, 50), (75, 25)].iter().enumerate() {
            let sx = derive_seed(s, 2 * idx as u64);
            let sy = derive_seed(s, 2 * idx as u64 + 1);
            let tv_x = marginal_tv(params, x, reps, sx, |rng| {
                monotone_step(CoupledPair::new(x, y), params, rng).x
            });
            let tv_y = marginal_tv(params, y, reps, sy, |rng| {
                monotone_step(CoupledPair::new(x, y), params, rng).y
            });
            worst = worst.max(tv_x).max(tv_y);
        }
        reports.push(
            CheckReport::le("monotone_marginal_tv", (100, 10), worst, 0.005, 0.0)
                .with_replicas(reps, s),
        );
    }

    // Direct single-step sampler against its row.
    {
        let params = ChainParams::new(100, 10)?;
        let s = derive_seed(seed, SALT_STEP_MARGINAL);
        let tv = marginal_tv(params, 30, reps, s, |rng| {
            step_sample(params, 30, rng).expect("valid state")
        });
        reports.push(
            CheckReport::le("step_sample_marginal", (100, 10), tv, 0.005, 0.0)
                .with_replicas(reps, s),
        );
    }

    // The decomposed chain agrees with the macro law at micro-time 2kt.
    {
        let params = ChainParams::new(100, 10)?;
        let kernel = build_kernel(params)?;
        let x0 = 30u32;
        for (idx, t) in [1u64, 2, 5].into_iter().enumerate() {
            let s = derive_seed(derive_seed(seed, SALT_DECOMPOSED), idx as u64);
            let mut law = StateDistribution::delta(params.n, x0);
            for _ in 0..t {
                law = crate::chain::evolve(&kernel, &law)?;
            }
            let hist = par_histogram(s, reps, params.n as usize + 1, |_, rng| {
                decomposed_run(params, x0, t, rng).expect("valid") as usize
            });
            let mut acc = KahanSum::new();
            for (j, &count) in hist.iter().enumerate() {
                acc.add((count as f64 / reps as f64 - law.prob(j as u32)).abs());
            }
            reports.push(
                CheckReport::le(
                    &format!("decomposed_equality_t{t}"),
                    (100, 10),
                    0.5 * acc.total(),
                    0.005,
                    0.0,
                )
                .with_replicas(reps, s),
            );
        }
    }

    // Coupling-time survival never exceeds the path-coupling bound.
    {
        let params = ChainParams::new(100, 10)?;
        let s = derive_seed(seed, SALT_SURVIVAL);
        let curve = tau_couple_survival(params, CoupledPair::new(75, 25), 5.0, 60, paths10, s)?;
        let mut worst_margin = f64::NEG_INFINITY;
        for i in 0..curve.times.len() {
            let slack = 3.0 * binom_se(curve.empirical[i], paths10);
            worst_margin = worst_margin.max(curve.empirical[i] - slack - curve.bound[i]);
        }
        reports.push(
            CheckReport::le(
                "tau_couple_survival_bound",
                (100, 10),
                worst_margin,
                0.0,
                0.0,
            )
            .with_replicas(paths10, s),
        );
    }

    // Maximal-inequality exceedance at a single time and over a window.
    {
        let params = ChainParams::new(100, 5)?;
        let t_star = mixing::t_star(params);
        let r = 3.0 * (params.n as f64).sqrt();
        let s = derive_seed(seed, SALT_DOOB_POINT);
        let bound = doob_bound(params, t_star, t_star, r, 0)?;
        let hits = par_count(s, paths10, |_, rng| {
            let mut x = 0u32;
            for _ in 0..t_star {
                x = step_sample(params, x, rng).expect("valid");
            }
            (x as f64 - 50.0).abs() > r
        });
        let emp = hits as f64 / paths10 as f64;
        reports.push(
            CheckReport::le(
                "doob_exceedance_point",
                (100, 5),
                emp,
                bound,
                3.0 * binom_se(emp, paths10),
            )
            .with_replicas(paths10, s),
        );

        let (t1, t2) = (t_star, t_star + 10);
        let r_sup = 6.0 * (params.n as f64).sqrt();
        let s2 = derive_seed(seed, SALT_DOOB_SUP);
        let bound_sup = doob_bound(params, t1, t2, r_sup, 0)?;
        let hits_sup = par_count(s2, paths10, |_, rng| {
            let mut x = 0u32;
            let mut exceeded = false;
            for t in 1..=t2 {
                x = step_sample(params, x, rng).expect("valid");
                if t >= t1 && (x as f64 - 50.0).abs() > r_sup {
                    exceeded = true;
                }
            }
            exceeded
        });
        let emp_sup = hits_sup as f64 / paths10 as f64;
        reports.push(
            CheckReport::le(
                "doob_exceedance_window",
                (100, 5),
                emp_sup,
                bound_sup,
                3.0 * binom_se(emp_sup, paths10),
            )
            .with_replicas(paths10, s2),
        );
    }

    // Matched-walk hitting bound 4 z0 / (sigma sqrt(u)) on every grid entry.
    for (idx, &params) in grid.iter().enumerate() {
        let s = derive_seed(derive_seed(seed, SALT_HITTING), idx as u64);
        let root = (params.n as f64).sqrt().ceil() as u32;
        let (x0, y0) = (params.n / 2 + root, params.n / 2 - root);
        let z0 = (x0 - y0) as f64;
        // Simulate far enough for the bound to leave the vacuous region.
        let u_cap_f = (8.0 * z0 / 0.5f64.sqrt()).powi(2);
        let mut u_cap = 1u64;
        while (u_cap as f64) < u_cap_f {
            u_cap *= 2;
        }
        let outcomes: Vec<(StopOutcome, f64)> = crate::rng::par_collect(s, paths100, |_, rng| {
            let mut x = DecomposedState::new(params, x0).expect("valid");
            let mut y = DecomposedState::new(params, y0).expect("valid");
            let mut var_floor = f64::INFINITY;
            let macro_period = 2 * params.k as u64;
            let mut s_time = 0u64;
            loop {
                if x.red_left() == y.red_left()
                    || x.red_right_available() == y.red_right_available()
                {
                    return (StopOutcome::Hit(s_time), var_floor);
                }
                let off_band =
                    |v: u32| 4 * v as i64 > 3 * params.n as i64 || (4 * v as i64) < params.n as i64;
                if s_time.is_multiple_of(macro_period)
                    && (off_band(x.red_left()) || off_band(y.red_left()))
                {
                    return (StopOutcome::BandExit(s_time), var_floor);
                }
                if s_time == u_cap {
                    return (StopOutcome::Censored(s_time), var_floor);
                }
                let (_, var) =
                    crate::couplings::drift_variance_check(&x, &y).expect("shared clock");
                var_floor = var_floor.min(var);
                x.step(rng);
                y.step(rng);
                s_time += 1;
            }
        });
        let sigma = outcomes
            .iter()
            .map(|&(_, v)| v)
            .fold(f64::INFINITY, f64::min)
            .sqrt();
        let mut worst_margin = f64::NEG_INFINITY;
        let mut u = 32u64;
        while u <= u_cap {
            if u as f64 > 12.0 / (sigma * sigma) {
                let surviving = outcomes
                    .iter()
                    .filter(|&&(o, _)| {
                        o.time() > u || matches!(o, StopOutcome::Censored(t) if t >= u)
                    })
                    .count() as u64;
                let emp = surviving as f64 / paths100 as f64;
                let bound = 4.0 * z0 / (sigma * (u as f64).sqrt());
                worst_margin = worst_margin.max(emp - 3.0 * binom_se(emp, paths100) - bound);
            }
            u *= 2;
        }
        reports.push(
            CheckReport::le(
                &format!("hitting_lemma_n{}_k{}", params.n, params.k),
                (params.n, params.k),
                worst_margin,
                0.0,
                0.0,
            )
            .with_replicas(paths100, s),
        );
    }

    // Chebyshev window at the cutoff time.
    {
        let params = ChainParams::new(100, 10)?;
        let t_star = mixing::t_star(params);
        let r = 3.0 * (params.n as f64).sqrt();
        let bound =
            params.n as f64 / ((r - (params.n as f64).sqrt()) * (r - (params.n as f64).sqrt()));
        let s = derive_seed(seed, SALT_CHEBYSHEV);
        let hits = par_count(s, paths10, |_, rng| {
            let mut x = 0u32;
            for _ in 0..t_star {
                x = step_sample(params, x, rng).expect("valid");
            }
            (x as f64 - 50.0).abs() > r
        });
        let emp = hits as f64 / paths10 as f64;
        reports.push(
            CheckReport::le(
                "chebyshev_window",
                (100, 10),
                emp,
                bound,
                3.0 * binom_se(emp, paths10),
            )
            .with_replicas(paths10, s),
        );
    }

    // Gap hitting probability decays with the budget. The budgets straddle
    // the typical hitting time (the gap drifts from 190 down through the 4k
    // threshold around t ~ (n/2k) ln(gap/4k) ~ 77 here), so the two survival
    // points differ decisively.
    {
        let params = ChainParams::new(1000, 10)?;
        let root = 3.0 * (params.n as f64).sqrt();
        let (x0, y0) = (
            (params.n as f64 / 2.0 + root) as u32,
            (params.n as f64 / 2.0 - root) as u32,
        );
        let s = derive_seed(seed, SALT_REMARK);
        let scale = params.n as u64 / (2 * params.k as u64);
        let (u_lo, u_hi) = (scale, 4 * scale);
        let outcomes = remark_gap_hitting(params, x0, y0, u_hi + 1, paths100, s)?;
        let survive = |u: u64| {
            outcomes
                .iter()
                .filter(|o| !o.is_hit() || o.time() > u)
                .count() as f64
                / paths100 as f64
        };
        let (p_lo, p_hi) = (survive(u_lo), survive(u_hi));
        let diff = p_lo - p_hi;
        let sigma = binom_se(diff.max(0.0), paths100);
        reports.push(
            CheckReport::le(
                "remark_hitting_decay",
                (1000, 10),
                p_hi + 3.0 * sigma - p_lo,
                0.0,
                0.0,
            )
            .with_replicas(paths100, s),
        );
    }

    // Four-phase pipeline: censored fraction at most 10 percent.
    {
        let params = ChainParams::new(2000, 20)?;
        let s = derive_seed(seed, SALT_FOUR_PHASE);
        let records = four_phase_batch(params, 0, 4.0, paths100, s)?;
        let censored = records.iter().filter(|r| r.censored_phase() != 0).count();
        let frac = censored as f64 / records.len() as f64;
        reports.push(
            CheckReport::le("four_phase_uncensored", (2000, 20), frac, 0.1, 0.0)
                .with_replicas(paths100, s),
        );
    }

    Ok(reports)
}

/// Default (N, K, r) grid for the MGF constant probe.
pub fn default_mgf_grid() -> Vec<(u64, u64, u64)> {
    let mut grid = Vec::new();
    for pop in [50u64, 100, 200, 400] {
        for draws in [pop / 20, pop / 10] {
            grid.push((pop, pop / 2, draws.max(1)));
        }
    }
    grid
}

/// Default h grid for the MGF constant probe.
pub fn default_h_grid() -> Vec<f64> {
    vec![-1.0, -0.5, -0.25, -0.1, 0.1, 0.25, 0.5, 1.0]
}

/// Probes the best sub-Gaussian constant of the centered hypergeometric MGF:
/// the largest c with E exp(h(H - EH)) <= exp(h^2 r / c) across the grid.
/// Asserts that c >= 8 holds; the c >= 16 flag is reported, not asserted
/// (the informational reports always pass).
pub fn mgf_constant_probe(grid: &[(u64, u64, u64)], h_grid: &[f64]) -> Result<Vec<CheckReport>> {
    if grid.is_empty() || h_grid.is_empty() {
        return Err(Error::invalid("grid", "empty MGF probe grid"));
    }
    let mut worst_ratio = Worst::seed();
    let mut min_c = f64::INFINITY;
    let mut min_c_at = (0u32, 0u32);
    for &(pop, successes, draws) in grid {
        if draws > pop / 10 {
            return Err(Error::invalid("grid", "MGF probe needs r <= N/10"));
        }
        for &h in h_grid {
            if h == 0.0 {
                continue;
            }
            let e = exp_moment_hypergeom(pop, successes, draws, h)?;
            let log_e = e.ln();
            let ratio = log_e / (h * h * draws as f64 / 8.0);
            worst_ratio.update(ratio, (pop as u32, draws as u32));
            // Largest valid constant at this grid point.
            let c_star = if log_e > 0.0 {
                h * h * draws as f64 / log_e
            } else {
                f64::INFINITY
            };
            if c_star < min_c {
                min_c = c_star;
                min_c_at = (pop as u32, draws as u32);
            }
        }
    }
    let mut reports = vec![CheckReport::le(
        "mgf_hoeffding_8",
        worst_ratio.at,
        worst_ratio.value,
        1.0,
        1e-9,
    )];
    reports.push(CheckReport::eq(
        "mgf_measured_constant",
        min_c_at,
        min_c,
        min_c,
        0.0,
    ));
    // Informational flag: 1 when the strict claim c >= 16 held on the grid.
    // Tolerance 1 keeps this a report rather than an assertion.
    reports.push(CheckReport::eq(
        "mgf_constant_16_flag",
        min_c_at,
        if min_c >= 16.0 { 1.0 } else { 0.0 },
        1.0,
        1.0,
    ));
    Ok(reports)
}

/// Serializes reports to the canonical JSON array.
pub fn reports_to_json(reports: &[CheckReport]) -> String {
    serde_json::to_string_pretty(reports).expect("reports serialize")
}
