//! Numerically robust binomial and hypergeometric primitives, exact discrete
//! total-variation distance, and deterministic samplers.
//!
//! All probabilities are computed in log space through a cached table of
//! log-factorials (Stirling's series beyond the table), so quantities like
//! C(65536, 32768) that overflow binary64 stay representable. Zero probability
//! is encoded as a negative-infinity [`LogWeight`], never as NaN.

use crate::{Error, Result};
use rand::Rng;

/// Log-factorials are tabulated up to this argument; Stirling's series covers
/// the rest. 2^17 comfortably spans every desk-scale parameter set.
const LN_FACT_TABLE_LEN: usize = 1 << 17;

fn ln_fact_table() -> &'static [f64] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = vec![0.0f64; LN_FACT_TABLE_LEN];
        // Factorials are exact in u128 up to 34!; their logs are then correct
        // to the last rounding.
        let mut exact: u128 = 1;
        let mut m = 1usize;
        while m < table.len() {
            match exact.checked_mul(m as u128) {
                Some(next) => {
                    exact = next;
                    table[m] = (exact as f64).ln();
                    m += 1;
                }
                None => break,
            }
        }
        // Beyond the exact range, compensated prefix sums of ln(i) keep the
        // accumulated error at a few ulps of the value.
        let mut sum = table[m - 1];
        let mut comp = 0.0f64;
        for (i, slot) in table.iter_mut().enumerate().skip(m) {
            let y = (i as f64).ln() - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            *slot = sum;
        }
        table
    })
}

/// Stirling series for ln Gamma(x), accurate to well below 1e-15 relative for
/// the arguments it is used on (x > 2^17).
fn stirling_ln_gamma(x: f64) -> f64 {
    const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    (x - 0.5) * x.ln() - x
        + HALF_LN_TWO_PI
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0))
}

/// ln(m!).
pub fn ln_factorial(m: u64) -> f64 {
    let table = ln_fact_table();
    match table.get(m as usize) {
        Some(&v) => v,
        None => stirling_ln_gamma(m as f64 + 1.0),
    }
}

/// ln C(m, r) as a bare float; negative infinity encodes a zero binomial.
#[inline]
pub(crate) fn lb(m: u64, r: i64) -> f64 {
    if r < 0 || r as u64 > m {
        return f64::NEG_INFINITY;
    }
    let r = r as u64;
    ln_factorial(m) - ln_factorial(r) - ln_factorial(m - r)
}

/// Natural log of a nonnegative quantity; negative infinity encodes zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogWeight {
    pub value: f64,
}

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight {
        value: f64::NEG_INFINITY,
    };
    pub const ONE: LogWeight = LogWeight { value: 0.0 };

    pub fn new(value: f64) -> Self {
        debug_assert!(!value.is_nan());
        LogWeight { value }
    }

    /// The encoded quantity itself (0 for the zero encoding).
    pub fn exp(self) -> f64 {
        self.value.exp()
    }

    pub fn is_zero(self) -> bool {
        self.value == f64::NEG_INFINITY
    }
}

impl std::ops::Add for LogWeight {
    type Output = LogWeight;
    /// Product of the encoded quantities.
    fn add(self, rhs: LogWeight) -> LogWeight {
        LogWeight::new(self.value + rhs.value)
    }
}

impl std::ops::Sub for LogWeight {
    type Output = LogWeight;
    /// Quotient of the encoded quantities. The divisor must be nonzero.
    fn sub(self, rhs: LogWeight) -> LogWeight {
        debug_assert!(!rhs.is_zero(), "division by a zero LogWeight");
        LogWeight::new(self.value - rhs.value)
    }
}

/// ln C(m, r); the zero encoding when r < 0 or r > m.
pub fn log_binomial(m: u64, r: i64) -> LogWeight {
    LogWeight { value: lb(m, r) }
}

/// Compensated (Kahan) accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn total(self) -> f64 {
        self.sum
    }
}

fn check_hyper_params(population: u64, successes: u64, draws: u64) -> Result<()> {
    if successes > population {
        return Err(Error::invalid(
            "successes",
            format!("K = {successes} exceeds population N = {population}"),
        ));
    }
    if draws > population {
        return Err(Error::invalid(
            "draws",
            format!("r = {draws} exceeds population N = {population}"),
        ));
    }
    Ok(())
}

/// Support of Hyper(N, K, r): [max(0, r + K - N), min(K, r)].
fn hyper_support(population: u64, successes: u64, draws: u64) -> (u64, u64) {
    let lo = (draws + successes).saturating_sub(population);
    let hi = successes.min(draws);
    (lo, hi)
}

fn hyper_log_pmf(population: u64, successes: u64, draws: u64, j: i64) -> f64 {
    lb(successes, j) + lb(population - successes, draws as i64 - j) - lb(population, draws as i64)
}

/// P(Hyper(N, K, r) = j) = C(K, j) C(N-K, r-j) / C(N, r); zero off-support.
pub fn hypergeometric_pmf(population: u64, successes: u64, draws: u64, j: i64) -> Result<f64> {
    check_hyper_params(population, successes, draws)?;
    let (lo, hi) = hyper_support(population, successes, draws);
    if j < lo as i64 || j > hi as i64 {
        return Ok(0.0);
    }
    Ok(hyper_log_pmf(population, successes, draws, j).exp())
}

/// P(Bin(trials, p) = j) = C(trials, j) p^j (1-p)^(trials-j).
pub fn binomial_pmf(trials: u64, p: f64, j: i64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "binomial p must lie in [0, 1]");
    if j < 0 || j as u64 > trials {
        return 0.0;
    }
    if p == 0.0 {
        return if j == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if j as u64 == trials { 1.0 } else { 0.0 };
    }
    let j_u = j as u64;
    (lb(trials, j) + j as f64 * p.ln() + (trials - j_u) as f64 * (1.0 - p).ln()).exp()
}

/// Inverse-CDF draw from a unimodal pmf, walking outward from the mode.
///
/// `ratio_up(j)` must return p(j+1)/p(j) for j inside the support. Any fixed
/// walk order realizes an exact partition of [0, 1) into intervals of the
/// point masses, so the draw is exactly distributed and deterministic given
/// the random source.
fn sample_unimodal<R: Rng + ?Sized>(
    rng: &mut R,
    support_lo: i64,
    support_hi: i64,
    mode: i64,
    pmf_mode: f64,
    mut ratio_up: impl FnMut(i64) -> f64,
) -> i64 {
    debug_assert!((support_lo..=support_hi).contains(&mode));
    let u: f64 = rng.random();
    let mut acc = pmf_mode;
    if u < acc {
        return mode;
    }
    let (mut lo, mut hi) = (mode, mode);
    let (mut p_lo, mut p_hi) = (pmf_mode, pmf_mode);
    loop {
        let mut advanced = false;
        if hi < support_hi {
            p_hi *= ratio_up(hi);
            hi += 1;
            acc += p_hi;
            if u < acc {
                return hi;
            }
            advanced = true;
        }
        if lo > support_lo {
            p_lo /= ratio_up(lo - 1);
            lo -= 1;
            acc += p_lo;
            if u < acc {
                return lo;
            }
            advanced = true;
        }
        if !advanced {
            // u fell into the sliver left by rounding; assign it to the
            // heavier endpoint.
            return if p_hi >= p_lo { hi } else { lo };
        }
    }
}

/// Draw from Hyper(N, K, r); inverse CDF walked outward from the mode.
pub fn hypergeometric_sample<R: Rng + ?Sized>(
    population: u64,
    successes: u64,
    draws: u64,
    rng: &mut R,
) -> Result<u64> {
    check_hyper_params(population, successes, draws)?;
    let (lo, hi) = hyper_support(population, successes, draws);
    if lo == hi {
        return Ok(lo);
    }
    let mode_num = (draws as u128 + 1) * (successes as u128 + 1);
    let mode = ((mode_num / (population as u128 + 2)) as u64).clamp(lo, hi) as i64;
    let pmf_mode = hyper_log_pmf(population, successes, draws, mode).exp();
    let (n_f, k_f, r_f) = (population as f64, successes as f64, draws as f64);
    let j = sample_unimodal(rng, lo as i64, hi as i64, mode, pmf_mode, |j| {
        let j = j as f64;
        ((k_f - j) * (r_f - j)) / ((j + 1.0) * (n_f - k_f - r_f + j + 1.0))
    });
    Ok(j as u64)
}

/// Draw from Bin(trials, p); inverse CDF walked outward from the mode.
pub fn binomial_sample<R: Rng + ?Sized>(trials: u64, p: f64, rng: &mut R) -> u64 {
    assert!((0.0..=1.0).contains(&p), "binomial p must lie in [0, 1]");
    if trials == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return trials;
    }
    let mode = (((trials + 1) as f64 * p) as u64).min(trials) as i64;
    let pmf_mode = binomial_pmf(trials, p, mode);
    let odds = p / (1.0 - p);
    let m_f = trials as f64;
    let j = sample_unimodal(rng, 0, trials as i64, mode, pmf_mode, |j| {
        let j = j as f64;
        (m_f - j) / (j + 1.0) * odds
    });
    j as u64
}

/// A finitely supported probability mass function on the integers.
///
/// `offset` is the first support point; `weights[i]` is the mass at
/// `offset + i`. Weights are nonnegative and sum to 1 within 1e-12.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretePmf {
    offset: i64,
    weights: Vec<f64>,
}

impl DiscretePmf {
    /// Validates nonnegativity and normalization (within 1e-12).
    pub fn new(offset: i64, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("weights", "empty support"));
        }
        let mut sum = KahanSum::new();
        for &w in &weights {
            if w.is_nan() || w < 0.0 {
                return Err(Error::invalid("weights", format!("negative weight {w}")));
            }
            sum.add(w);
        }
        if (sum.total() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(
                "weights",
                format!("weights sum to {:.17e}", sum.total()),
            ));
        }
        Ok(DiscretePmf { offset, weights })
    }

    /// Point mass at `at`.
    pub fn delta(at: i64) -> Self {
        DiscretePmf {
            offset: at,
            weights: vec![1.0],
        }
    }

    /// The law of Hyper(N, K, r).
    pub fn hypergeometric(population: u64, successes: u64, draws: u64) -> Result<Self> {
        check_hyper_params(population, successes, draws)?;
        let (lo, hi) = hyper_support(population, successes, draws);
        let mut weights = Vec::with_capacity((hi - lo + 1) as usize);
        let mut sum = KahanSum::new();
        for j in lo..=hi {
            let w = hyper_log_pmf(population, successes, draws, j as i64).exp();
            sum.add(w);
            weights.push(w);
        }
        let total = sum.total();
        for w in &mut weights {
            *w /= total;
        }
        Ok(DiscretePmf {
            offset: lo as i64,
            weights,
        })
    }

    /// The law of Bin(trials, p).
    pub fn binomial(trials: u64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(
                "p",
                format!("probability {p} not in [0, 1]"),
            ));
        }
        let mut weights = Vec::with_capacity(trials as usize + 1);
        let mut sum = KahanSum::new();
        for j in 0..=trials {
            let w = binomial_pmf(trials, p, j as i64);
            sum.add(w);
            weights.push(w);
        }
        let total = sum.total();
        for w in &mut weights {
            *w /= total;
        }
        Ok(DiscretePmf { offset: 0, weights })
    }

    /// The law of X + g when X follows `self`.
    pub fn shifted(&self, g: i64) -> Self {
        DiscretePmf {
            offset: self.offset + g,
            weights: self.weights.clone(),
        }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Mass at x (zero off-support).
    pub fn prob(&self, x: i64) -> f64 {
        let idx = x - self.offset;
        if idx < 0 {
            return 0.0;
        }
        self.weights.get(idx as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        let mut sum = KahanSum::new();
        for (i, &w) in self.weights.iter().enumerate() {
            sum.add((self.offset + i as i64) as f64 * w);
        }
        sum.total()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let mut sum = KahanSum::new();
        for (i, &w) in self.weights.iter().enumerate() {
            let d = (self.offset + i as i64) as f64 - mean;
            sum.add(d * d * w);
        }
        sum.total()
    }

    /// Total-variation distance to `other`: half the L1 distance over the
    /// union of supports, aligned by integer index.
    pub fn tv(&self, other: &DiscretePmf) -> f64 {
        let lo = self.offset.min(other.offset);
        let hi = (self.offset + self.weights.len() as i64)
            .max(other.offset + other.weights.len() as i64);
        let mut sum = KahanSum::new();
        for x in lo..hi {
            sum.add((self.prob(x) - other.prob(x)).abs());
        }
        (0.5 * sum.total()).min(1.0)
    }
}

/// Total-variation distance between two pmfs.
pub fn tv(p: &DiscretePmf, q: &DiscretePmf) -> f64 {
    p.tv(q)
}

/// Exact TV between Hyper(N, K, r) and Bin(r, K/N), next to the sampling
/// with/without replacement comparison bound 4r/N.
#[derive(Clone, Copy, Debug)]
pub struct HyperVsBinomTv {
    pub tv: f64,
    pub bound: f64,
}

/// Exact TV(Hyper(N, K, r), Bin(r, K/N)) with the 4r/N bound alongside.
///
/// The two pmfs are generated by ratio recurrences anchored at their modes,
/// which keeps the full-grid sweeps (N up to 500) fast; accumulated relative
/// error stays below ~r epsilon.
pub fn hyper_vs_binom_tv(population: u64, successes: u64, draws: u64) -> Result<HyperVsBinomTv> {
    check_hyper_params(population, successes, draws)?;
    let bound = 4.0 * draws as f64 / population as f64;
    if draws == 0 {
        return Ok(HyperVsBinomTv { tv: 0.0, bound });
    }
    let r = draws as usize;
    let (n_f, k_f, r_f) = (population as f64, successes as f64, draws as f64);

    // Hypergeometric pmf over 0..=r by mode-anchored ratio walk.
    let mut hyper = vec![0.0f64; r + 1];
    {
        let (lo, hi) = hyper_support(population, successes, draws);
        let mode_num = (draws as u128 + 1) * (successes as u128 + 1);
        let mode = ((mode_num / (population as u128 + 2)) as u64).clamp(lo, hi);
        hyper[mode as usize] = hyper_log_pmf(population, successes, draws, mode as i64).exp();
        let ratio_up = |j: f64| ((k_f - j) * (r_f - j)) / ((j + 1.0) * (n_f - k_f - r_f + j + 1.0));
        for j in mode..hi {
            hyper[j as usize + 1] = hyper[j as usize] * ratio_up(j as f64);
        }
        for j in (lo + 1..=mode).rev() {
            hyper[j as usize - 1] = hyper[j as usize] / ratio_up(j as f64 - 1.0);
        }
    }

    // Bin(r, K/N) pmf over 0..=r, same scheme.
    let mut binom = vec![0.0f64; r + 1];
    {
        let p = k_f / n_f;
        if p == 0.0 {
            binom[0] = 1.0;
        } else if p == 1.0 {
            binom[r] = 1.0;
        } else {
            let mode = (((draws + 1) as f64 * p) as u64).min(draws);
            binom[mode as usize] = binomial_pmf(draws, p, mode as i64);
            let odds = p / (1.0 - p);
            let ratio_up = |j: f64| (r_f - j) / (j + 1.0) * odds;
            for j in mode as usize..r {
                binom[j + 1] = binom[j] * ratio_up(j as f64);
            }
            for j in (1..=mode as usize).rev() {
                binom[j - 1] = binom[j] / ratio_up(j as f64 - 1.0);
            }
        }
    }

    let mut sum = KahanSum::new();
    for j in 0..=r {
        sum.add((hyper[j] - binom[j]).abs());
    }
    Ok(HyperVsBinomTv {
        tv: (0.5 * sum.total()).min(1.0),
        bound,
    })
}

/// Exact TV between Bin(k, 1/2) and its integer shift, with the crossing
/// point of the two unimodal laws.
#[derive(Clone, Copy, Debug)]
pub struct ShiftedBinomTv {
    pub tv: f64,
    /// x* such that pmf(x) >= shifted pmf(x) iff x <= x* (for the |g| shift).
    pub crossing: i64,
    /// P(x* - |g| < Bin(k, 1/2) <= x*), equal to tv up to rounding.
    pub crossing_mass: f64,
}

/// TV(Bin(k, 1/2), g + Bin(k, 1/2)) by direct pmf summation.
///
/// The distance is symmetric in the sign of g; the crossing point refers to
/// the |g| comparison. The crossing-point identity
/// tv = P(x* - |g| < Bin(k, 1/2) <= x*) is asserted on every call.
pub fn shifted_binom_tv(k: u64, g: i64) -> ShiftedBinomTv {
    assert!(k >= 1, "shifted_binom_tv requires k >= 1");
    let g = g.unsigned_abs().min(k + 1) as i64;
    if g == 0 {
        return ShiftedBinomTv {
            tv: 0.0,
            crossing: k as i64,
            crossing_mass: 0.0,
        };
    }
    // Bin(k, 1/2) pmf by a ratio walk anchored at the central mode: the
    // rounding then drifts smoothly in x and cancels between the two
    // summation routes below, which direct per-entry exponentials (with
    // their erratic per-entry rounding) would not.
    let pmf: Vec<f64> = {
        let center = (k / 2) as usize;
        let mut v = vec![0.0f64; k as usize + 1];
        v[center] = (lb(k, center as i64) - k as f64 * std::f64::consts::LN_2).exp();
        for x in center..k as usize {
            v[x + 1] = v[x] * (k as usize - x) as f64 / (x + 1) as f64;
        }
        for x in (1..=center).rev() {
            v[x - 1] = v[x] * x as f64 / (k as usize - x + 1) as f64;
        }
        v
    };
    let mass = |x: i64| -> f64 {
        if (0..=k as i64).contains(&x) {
            pmf[x as usize]
        } else {
            0.0
        }
    };

    let mut sum = KahanSum::new();
    for x in 0..=k as i64 + g {
        sum.add((mass(x) - mass(x - g)).abs());
    }
    // Rounding can overshoot the exact value by an ulp; TV never exceeds 1.
    let tv = (0.5 * sum.total()).min(1.0);

    let crossing = (k as i64 + g) / 2;
    let mut window = KahanSum::new();
    for x in (crossing - g + 1)..=crossing {
        window.add(mass(x));
    }
    let window_mass = window.total().min(1.0);
    assert!(
        (tv - window_mass).abs() <= 1e-12,
        "crossing-point identity violated: tv = {tv:.17e}, window = {window_mass:.17e}"
    );
    ShiftedBinomTv {
        tv,
        crossing,
        crossing_mass: window_mass,
    }
}

/// E exp(h (H - EH)) for H ~ Hyper(N, K, r), by exact summation over the
/// support with log-space accumulation to guard against overflow.
pub fn exp_moment_hypergeom(population: u64, successes: u64, draws: u64, h: f64) -> Result<f64> {
    check_hyper_params(population, successes, draws)?;
    let (lo, hi) = hyper_support(population, successes, draws);
    let mean = draws as f64 * successes as f64 / population as f64;
    let log_pmf: Vec<f64> = (lo..=hi)
        .map(|j| hyper_log_pmf(population, successes, draws, j as i64))
        .collect();
    let log_sum_exp = |terms: &dyn Fn(usize) -> f64| -> f64 {
        let mut max_term = f64::NEG_INFINITY;
        for idx in 0..log_pmf.len() {
            max_term = max_term.max(terms(idx));
        }
        let mut sum = KahanSum::new();
        for idx in 0..log_pmf.len() {
            sum.add((terms(idx) - max_term).exp());
        }
        max_term + sum.total().ln()
    };
    // Normalizing by the pmf's own mass cancels the correlated log-space
    // rounding of the shared C(N, r) term.
    let numer = log_sum_exp(&|idx| log_pmf[idx] + h * ((lo + idx as u64) as f64 - mean));
    let denom = log_sum_exp(&|idx| log_pmf[idx]);
    Ok((numer - denom).exp())
}
