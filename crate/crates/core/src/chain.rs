//! The urn transition kernel, its stationary law, distribution evolution and
//! single-step simulation.
//!
//! One step removes a uniform k-subset from each urn and swaps them, so the
//! red count in the left urn moves from i to j = i - a + b where a is the
//! number of red balls leaving and b the number arriving. Entries with
//! |i - j| > k are structurally zero, and only the band is stored: O(nk)
//! memory and evolution cost, which keeps n in the thousands tractable.

use crate::combinatorics::{lb, KahanSum};
use crate::{Error, Result};
use rand::Rng;
use rayon::prelude::*;

/// The pair (n, k): urn size and swap size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChainParams {
    pub n: u32,
    pub k: u32,
}

impl ChainParams {
    pub fn new(n: u32, k: u32) -> Result<Self> {
        if n < 1 {
            return Err(Error::invalid("n", "urn size must be at least 1"));
        }
        if k > n {
            return Err(Error::invalid(
                "k",
                format!("swap size {k} exceeds n = {n}"),
            ));
        }
        Ok(ChainParams { n, k })
    }

    /// The complement chain (n, n-k): swapping k-subsets in one chain is
    /// swapping their complements in the other, so mixing behavior coincides.
    pub fn complement(self) -> Self {
        ChainParams {
            n: self.n,
            k: self.n - self.k,
        }
    }

    /// Swap-size normalization k <= n/2 used by the analysis routines.
    pub fn normalized(self) -> Self {
        if 2 * self.k > self.n {
            self.complement()
        } else {
            self
        }
    }

    /// Ergodic iff 0 < k < n: k = 0 is the identity chain and k = n the
    /// deterministic full swap (period 2 from non-symmetric starts).
    pub fn is_ergodic(self) -> bool {
        self.k > 0 && self.k < self.n
    }

    /// Validates that x is a state of this chain.
    pub fn check_state(self, name: &'static str, x: u32) -> Result<()> {
        if x > self.n {
            return Err(Error::invalid(
                name,
                format!("state {x} outside 0..={}", self.n),
            ));
        }
        Ok(())
    }
}

/// See [`ChainParams::complement`].
pub fn complement_params(params: ChainParams) -> ChainParams {
    params.complement()
}

/// Band of structurally nonzero columns of row i: [max(0, i-k), min(n, i+k)].
pub(crate) fn row_band(params: ChainParams, i: u32) -> (u32, u32) {
    (i.saturating_sub(params.k), (i + params.k).min(params.n))
}

/// Hypergeometric pmf vector over its support, each entry from log-binomials.
fn hyper_pmf_vec(population: u64, successes: u64, draws: u64) -> (i64, Vec<f64>) {
    let lo = (draws + successes).saturating_sub(population) as i64;
    let hi = successes.min(draws) as i64;
    let log_denom = lb(population, draws as i64);
    let weights = (lo..=hi)
        .map(|j| {
            (lb(successes, j) + lb(population - successes, draws as i64 - j) - log_denom).exp()
        })
        .collect();
    (lo, weights)
}

/// One raw kernel row over its band, as the convolution of the law of red
/// balls leaving (a ~ Hyper(n, i, k)) with the law of red balls arriving
/// (b ~ Hyper(n, n-i, k)): row[j] = sum_a P(a) P(b = j - i + a).
pub(crate) fn kernel_row(params: ChainParams, i: u32) -> Vec<f64> {
    let (n, k) = (params.n as u64, params.k as u64);
    let (band_lo, band_hi) = row_band(params, i);
    let mut row = vec![0.0f64; (band_hi - band_lo + 1) as usize];
    let (a_lo, out_pmf) = hyper_pmf_vec(n, i as u64, k);
    let (b_lo, in_pmf) = hyper_pmf_vec(n, n - i as u64, k);
    for (ai, &pa) in out_pmf.iter().enumerate() {
        let a = a_lo + ai as i64;
        let base = i as i64 - a + b_lo - band_lo as i64;
        for (bi, &pb) in in_pmf.iter().enumerate() {
            row[(base + bi as i64) as usize] += pa * pb;
        }
    }
    row
}

/// P(i, j): the double-binomial sum over the number a of red balls removed
/// from the left urn, accumulated in linear space as exp(log-term - max
/// log-term) with compensated summation. Exactly zero when |i - j| > k.
pub fn transition_prob(params: ChainParams, i: u32, j: u32) -> Result<f64> {
    params.check_state("i", i)?;
    params.check_state("j", j)?;
    let (n, k) = (params.n as i64, params.k as i64);
    let (i, j) = (i as i64, j as i64);
    let lo = [0, k - (n - i), i - j, k - j].into_iter().max().unwrap();
    let hi = [i, k, n - j, k + i - j].into_iter().min().unwrap();
    if lo > hi {
        return Ok(0.0);
    }
    let log_denom = 2.0 * lb(n as u64, k);
    let log_term = |a: i64| -> f64 {
        lb(i as u64, a)
            + lb((n - i) as u64, k - a)
            + lb((n - i) as u64, j - i + a)
            + lb(i as u64, k + i - j - a)
            - log_denom
    };
    let mut max_term = f64::NEG_INFINITY;
    for a in lo..=hi {
        max_term = max_term.max(log_term(a));
    }
    if max_term == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let mut sum = KahanSum::new();
    for a in lo..=hi {
        sum.add((log_term(a) - max_term).exp());
    }
    Ok(max_term.exp() * sum.total())
}

/// Probability vector over the states 0..=n.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDistribution {
    n: u32,
    weights: Vec<f64>,
}

impl StateDistribution {
    /// Point mass at x.
    pub fn delta(n: u32, x: u32) -> Self {
        assert!(x <= n);
        let mut weights = vec![0.0; n as usize + 1];
        weights[x as usize] = 1.0;
        StateDistribution { n, weights }
    }

    /// The stationary law pi_n(j) = C(n, j) C(n, n-j) / C(2n, n).
    pub fn stationary(n: u32) -> Self {
        let n64 = n as u64;
        let log_denom = lb(2 * n64, n64 as i64);
        let mut weights: Vec<f64> = (0..=n64)
            .map(|j| (2.0 * lb(n64, j as i64) - log_denom).exp())
            .collect();
        let mut sum = KahanSum::new();
        for &w in &weights {
            sum.add(w);
        }
        let total = sum.total();
        for w in &mut weights {
            *w /= total;
        }
        StateDistribution { n, weights }
    }

    pub fn from_weights(n: u32, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n as usize + 1 {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: weights.len(),
            });
        }
        // Long evolutions drift before the renormalization cadence kicks in,
        // so this is a tripwire, not the 1e-12 invariant.
        debug_assert!(weights.iter().all(|w| *w >= 0.0));
        debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        Ok(StateDistribution { n, weights })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn prob(&self, x: u32) -> f64 {
        self.weights[x as usize]
    }

    pub fn mean(&self) -> f64 {
        let mut sum = KahanSum::new();
        for (x, &w) in self.weights.iter().enumerate() {
            sum.add(x as f64 * w);
        }
        sum.total()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let mut sum = KahanSum::new();
        for (x, &w) in self.weights.iter().enumerate() {
            let d = x as f64 - mean;
            sum.add(d * d * w);
        }
        sum.total()
    }

    /// |sum of weights - 1|.
    pub fn normalization_drift(&self) -> f64 {
        let mut sum = KahanSum::new();
        for &w in &self.weights {
            sum.add(w);
        }
        (sum.total() - 1.0).abs()
    }

    pub fn renormalize(&mut self) {
        let mut sum = KahanSum::new();
        for &w in &self.weights {
            sum.add(w);
        }
        let total = sum.total();
        for w in &mut self.weights {
            *w /= total;
        }
    }

    /// Total-variation distance to another law on the same state space.
    pub fn tv(&self, other: &StateDistribution) -> f64 {
        assert_eq!(self.n, other.n, "state spaces differ");
        let mut sum = KahanSum::new();
        for (a, b) in self.weights.iter().zip(&other.weights) {
            sum.add((a - b).abs());
        }
        (0.5 * sum.total()).min(1.0)
    }
}

/// The transition kernel stored on its band, row-stochastic and reversible
/// with respect to the stationary law; both facts are certified at build
/// time (row sums to 1e-9 before renormalization, detailed balance to 1e-12).
#[derive(Clone, Debug)]
pub struct BandedKernel {
    params: ChainParams,
    rows: Vec<Vec<f64>>,
    row_sum_deviation: f64,
    detailed_balance_deviation: f64,
}

impl BandedKernel {
    pub fn build(params: ChainParams) -> Result<Self> {
        let n = params.n;
        let mut rows: Vec<Vec<f64>> = (0..=n)
            .into_par_iter()
            .map(|i| kernel_row(params, i))
            .collect();
        let mut row_sum_deviation = 0.0f64;
        for (i, row) in rows.iter_mut().enumerate() {
            let mut sum = KahanSum::new();
            for &p in row.iter() {
                sum.add(p);
            }
            let total = sum.total();
            let dev = (total - 1.0).abs();
            if dev > 1e-9 {
                return Err(Error::RowSumDeviation {
                    row: i as u32,
                    sum: total,
                });
            }
            row_sum_deviation = row_sum_deviation.max(dev);
            for p in row.iter_mut() {
                *p /= total;
            }
        }
        let kernel = BandedKernel {
            params,
            rows,
            row_sum_deviation,
            detailed_balance_deviation: 0.0,
        };
        let pi = StateDistribution::stationary(n);
        let mut max_dev = 0.0f64;
        for i in 0..=n {
            let (lo, hi) = row_band(params, i);
            for j in lo..=hi.min(i) {
                let lhs = pi.prob(i) * kernel.prob(i, j);
                let rhs = pi.prob(j) * kernel.prob(j, i);
                let dev = (lhs - rhs).abs();
                if dev > 1e-12 {
                    return Err(Error::DetailedBalanceViolation {
                        i,
                        j,
                        deviation: dev,
                    });
                }
                max_dev = max_dev.max(dev);
            }
        }
        Ok(BandedKernel {
            detailed_balance_deviation: max_dev,
            ..kernel
        })
    }

    pub fn params(&self) -> ChainParams {
        self.params
    }

    pub fn n(&self) -> u32 {
        self.params.n
    }

    /// Worst |row sum - 1| observed before renormalization.
    pub fn row_sum_deviation(&self) -> f64 {
        self.row_sum_deviation
    }

    /// Worst |pi(i) P(i,j) - pi(j) P(j,i)| over the band.
    pub fn detailed_balance_deviation(&self) -> f64 {
        self.detailed_balance_deviation
    }

    /// Row i as (first column of the band, band entries).
    pub fn row(&self, i: u32) -> (u32, &[f64]) {
        (row_band(self.params, i).0, &self.rows[i as usize])
    }

    /// P(i, j); zero outside the band.
    pub fn prob(&self, i: u32, j: u32) -> f64 {
        let (lo, hi) = row_band(self.params, i);
        if j < lo || j > hi {
            return 0.0;
        }
        self.rows[i as usize][(j - lo) as usize]
    }

    /// (Pf)(i) = sum_j P(i, j) f(j) for a function on the states.
    pub fn apply_to_function(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.params.n as usize + 1);
        (0..=self.params.n)
            .map(|i| {
                let (lo, row) = self.row(i);
                let mut sum = KahanSum::new();
                for (idx, &p) in row.iter().enumerate() {
                    sum.add(p * f[lo as usize + idx]);
                }
                sum.total()
            })
            .collect()
    }
}

/// Builds the banded kernel, certifying row sums and detailed balance.
pub fn build_kernel(params: ChainParams) -> Result<BandedKernel> {
    BandedKernel::build(params)
}

/// The stationary law as a distribution.
pub fn stationary(n: u32) -> StateDistribution {
    StateDistribution::stationary(n)
}

/// One banded kernel-vector product with compensated accumulation.
pub fn evolve(kernel: &BandedKernel, dist: &StateDistribution) -> Result<StateDistribution> {
    if dist.n() != kernel.n() {
        return Err(Error::DimensionMismatch {
            expected: kernel.n(),
            got: dist.weights().len(),
        });
    }
    let n = kernel.n() as usize;
    let mut out = vec![0.0f64; n + 1];
    let mut comp = vec![0.0f64; n + 1];
    for i in 0..=n {
        let w = dist.weights()[i];
        if w == 0.0 {
            continue;
        }
        let (lo, row) = kernel.row(i as u32);
        let lo = lo as usize;
        for (idx, &p) in row.iter().enumerate() {
            let j = lo + idx;
            let y = w * p - comp[j];
            let t = out[j] + y;
            comp[j] = (t - out[j]) - y;
            out[j] = t;
        }
    }
    StateDistribution::from_weights(kernel.n(), out)
}

/// One step of the chain from state x: x + H1 - H2 where H1 ~ Hyper(n, n-x, k)
/// red balls arrive and H2 ~ Hyper(n, x, k) red balls leave, independently.
pub fn step_sample<R: Rng + ?Sized>(params: ChainParams, x: u32, rng: &mut R) -> Result<u32> {
    params.check_state("x", x)?;
    let (n, k) = (params.n as u64, params.k as u64);
    let arriving = crate::combinatorics::hypergeometric_sample(n, n - x as u64, k, rng)?;
    let leaving = crate::combinatorics::hypergeometric_sample(n, x as u64, k, rng)?;
    Ok((x as i64 + arriving as i64 - leaving as i64) as u32)
}

/// Deterministic sample from the stationary law (it is Hyper(2n, n, n)).
pub fn stationary_sample<R: Rng + ?Sized>(n: u32, rng: &mut R) -> u32 {
    crate::combinatorics::hypergeometric_sample(2 * n as u64, n as u64, n as u64, rng)
        .expect("valid parameters") as u32
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact;
    use num_traits::ToPrimitive;

    #[test]
    fn transition_prob_tiny_by_enumeration() {
        let p = ChainParams::new(2, 1).unwrap();
        assert!((transition_prob(p, 1, 0).unwrap() - 0.25).abs() < 1e-15);
        assert!((transition_prob(p, 1, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!((transition_prob(p, 1, 2).unwrap() - 0.25).abs() < 1e-15);
        assert!((transition_prob(p, 0, 1).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_swap_is_deterministic() {
        for n in 1..=9u32 {
            let p = ChainParams::new(n, n).unwrap();
            for i in 0..=n {
                assert!((transition_prob(p, i, n - i).unwrap() - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn out_of_band_is_zero_and_bad_states_rejected() {
        let p = ChainParams::new(10, 2).unwrap();
        assert_eq!(transition_prob(p, 1, 5).unwrap(), 0.0);
        assert_eq!(transition_prob(p, 9, 3).unwrap(), 0.0);
        assert!(transition_prob(p, 11, 3).is_err());
    }

    #[test]
    fn kernel_matches_rational_oracle() {
        for n in 1..=8u32 {
            for k in 0..=n {
                let params = ChainParams::new(n, k).unwrap();
                let kernel = build_kernel(params).unwrap();
                let oracle = exact::kernel(n as u64, k as u64);
                for i in 0..=n {
                    for j in 0..=n {
                        let want = oracle[i as usize][j as usize].to_f64().unwrap();
                        let got = kernel.prob(i, j);
                        assert!(
                            (want - got).abs() <= 1e-13,
                            "n={n} k={k} ({i},{j}): {want} vs {got}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn build_certifies_rows_and_reversibility() {
        for &(n, k) in &[(12u32, 3u32), (12, 0), (40, 11), (60, 60)] {
            let kernel = build_kernel(ChainParams::new(n, k).unwrap()).unwrap();
            assert!(kernel.row_sum_deviation() <= 1e-12);
            assert!(kernel.detailed_balance_deviation() <= 1e-12);
        }
    }

    #[test]
    fn identity_kernel_at_k0() {
        let kernel = build_kernel(ChainParams::new(9, 0).unwrap()).unwrap();
        for i in 0..=9 {
            assert_eq!(kernel.prob(i, i), 1.0);
        }
        let d = StateDistribution::delta(9, 4);
        assert_eq!(evolve(&kernel, &d).unwrap(), d);
    }

    #[test]
    fn stationary_moments_match_closed_forms() {
        for n in 5..=200u32 {
            let pi = stationary(n);
            let nf = n as f64;
            assert!((pi.mean() - nf / 2.0).abs() <= 1e-9, "n={n}");
            let want_var = nf * nf / (4.0 * (2.0 * nf - 1.0));
            assert!(
                ((pi.variance() - want_var) / want_var).abs() <= 1e-10,
                "n={n}"
            );
            assert!(pi.normalization_drift() <= 1e-12);
        }
    }

    #[test]
    fn stationary_tiny_values() {
        let pi = stationary(1);
        assert!((pi.prob(0) - 0.5).abs() < 1e-15);
        let pi2 = stationary(2);
        assert!((pi2.prob(0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((pi2.prob(1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn evolve_preserves_stationarity() {
        let params = ChainParams::new(30, 7).unwrap();
        let kernel = build_kernel(params).unwrap();
        let pi = stationary(30);
        let next = evolve(&kernel, &pi).unwrap();
        assert!(pi.tv(&next) <= 1e-12);
        assert!(next.normalization_drift() <= 1e-12);
    }

    #[test]
    fn evolve_reads_rows_off_delta() {
        let params = ChainParams::new(2, 1).unwrap();
        let kernel = build_kernel(params).unwrap();
        let next = evolve(&kernel, &StateDistribution::delta(2, 0)).unwrap();
        assert_eq!(next.weights(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn complement_is_involution() {
        let p = ChainParams::new(10, 3).unwrap();
        assert_eq!(complement_params(p), ChainParams::new(10, 7).unwrap());
        assert_eq!(complement_params(complement_params(p)), p);
        assert_eq!(ChainParams::new(10, 7).unwrap().normalized().k, 3);
    }

    #[test]
    fn step_sample_degenerate_cases() {
        let mut rng = crate::rng::replica_rng(5, 0);
        let frozen = ChainParams::new(20, 0).unwrap();
        assert_eq!(step_sample(frozen, 13, &mut rng).unwrap(), 13);
        let forced = ChainParams::new(20, 1).unwrap();
        assert_eq!(step_sample(forced, 0, &mut rng).unwrap(), 1);
    }

    #[test]
    fn step_sample_marginal_matches_row_smoke() {
        let params = ChainParams::new(100, 10).unwrap();
        let kernel = build_kernel(params).unwrap();
        let mut rng = crate::rng::replica_rng(99, 0);
        let reps = 200_000u64;
        let mut counts = vec![0u64; 101];
        for _ in 0..reps {
            counts[step_sample(params, 30, &mut rng).unwrap() as usize] += 1;
        }
        let mut dist = 0.0;
        for (j, &c) in counts.iter().enumerate() {
            dist += (c as f64 / reps as f64 - kernel.prob(30, j as u32)).abs();
        }
        assert!(dist / 2.0 < 0.012, "tv = {}", dist / 2.0);
    }
}
