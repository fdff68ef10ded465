//! Big-integer rational oracle for small chains.
//!
//! Everything here is exact arithmetic over arbitrary-precision rationals:
//! ground truth for the floating-point kernel, the stationary law, and the
//! one-step coupling contraction. Intended for populations up to a couple of
//! dozen balls; beyond that the float paths are the only practical route.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// C(m, r) as an exact integer (zero when r is out of range).
pub fn binomial(m: u64, r: i64) -> BigInt {
    if r < 0 || r as u64 > m {
        return BigInt::zero();
    }
    let r = (r as u64).min(m - r as u64);
    let mut acc = BigInt::one();
    for i in 0..r {
        acc = acc * BigInt::from(m - i) / BigInt::from(i + 1);
    }
    acc
}

fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

/// Exact hypergeometric mass C(K, j) C(N-K, r-j) / C(N, r).
pub fn hypergeometric_pmf(population: u64, successes: u64, draws: u64, j: i64) -> BigRational {
    assert!(successes <= population && draws <= population);
    let num = binomial(successes, j) * binomial(population - successes, draws as i64 - j);
    ratio(num, binomial(population, draws as i64))
}

/// Exact transition probability of the urn chain: the state moves from i to
/// j = i - a + b where a red balls leave the left urn and b arrive from the
/// right urn, summed over all feasible a.
pub fn transition_prob(n: u64, k: u64, i: u64, j: u64) -> BigRational {
    assert!(i <= n && j <= n && k <= n);
    let denom = binomial(n, k as i64) * binomial(n, k as i64);
    let mut num = BigInt::zero();
    // Feasibility of all four binomials:
    //   C(i, a)          needs 0 <= a <= i,
    //   C(n-i, k-a)      needs k-(n-i) <= a <= k,
    //   C(n-i, j-i+a)    needs i-j <= a <= n-j,
    //   C(i, k+i-j-a)    needs k-j <= a <= k+i-j.
    let lo = [
        0,
        k as i64 - (n - i) as i64,
        i as i64 - j as i64,
        k as i64 - j as i64,
    ]
    .into_iter()
    .max()
    .unwrap();
    let hi = [
        i as i64,
        k as i64,
        n as i64 - j as i64,
        k as i64 + i as i64 - j as i64,
    ]
    .into_iter()
    .min()
    .unwrap();
    for a in lo..=hi {
        num += binomial(i, a)
            * binomial(n - i, k as i64 - a)
            * binomial(n - i, j as i64 - i as i64 + a)
            * binomial(i, k as i64 - j as i64 + i as i64 - a);
    }
    ratio(num, denom)
}

/// Exact stationary law: pi(j) = C(n, j)^2 / C(2n, n).
pub fn stationary(n: u64) -> Vec<BigRational> {
    let denom = binomial(2 * n, n as i64);
    (0..=n)
        .map(|j| ratio(binomial(n, j as i64) * binomial(n, j as i64), denom.clone()))
        .collect()
}

/// Exact full kernel as dense rows.
pub fn kernel(n: u64, k: u64) -> Vec<Vec<BigRational>> {
    (0..=n)
        .map(|i| (0..=n).map(|j| transition_prob(n, k, i, j)).collect())
        .collect()
}

/// Exact TV distance between two rational probability vectors.
pub fn tv(p: &[BigRational], q: &[BigRational]) -> BigRational {
    assert_eq!(p.len(), q.len());
    let mut acc = BigRational::zero();
    for (a, b) in p.iter().zip(q) {
        acc += (a - b).abs();
    }
    acc / BigRational::from(BigInt::from(2))
}

/// Exact expected next gap of the shared-subset coupling started from the
/// gap-one pair (lo, lo + 1), by exhaustive enumeration of the joint cell
/// counts of the two shared k-subsets.
///
/// The left-urn subset splits over cells of sizes (lo, 1, n-lo-1): common
/// reds, the single disputed position, and the rest. The right-urn subset
/// splits over (n-lo-1, 1, lo). The next gap is |1 - v - w| where v and w are
/// the disputed-cell counts.
pub fn gap_one_contraction_mean(n: u64, k: u64, lo: u64) -> BigRational {
    assert!(lo < n && k <= n);
    let choose_k = binomial(n, k as i64);
    let mut mean = BigRational::zero();
    // Joint law of (u, v): C(lo, u) C(1, v) C(n-lo-1, k-u-v) / C(n, k).
    for v in 0..=1i64 {
        let mut p_v = BigRational::zero();
        for u in 0..=k as i64 {
            let cells = binomial(lo, u) * binomial(1, v) * binomial(n - lo - 1, k as i64 - u - v);
            p_v += ratio(cells, choose_k.clone());
        }
        // Joint law of (c, w): C(n-lo-1, c) C(1, w) C(lo, k-c-w) / C(n, k).
        for w in 0..=1i64 {
            let mut p_w = BigRational::zero();
            for c in 0..=k as i64 {
                let cells =
                    binomial(n - lo - 1, c) * binomial(1, w) * binomial(lo, k as i64 - c - w);
                p_w += ratio(cells, choose_k.clone());
            }
            let gap = BigRational::from(BigInt::from((1 - v - w).abs()));
            mean += p_v.clone() * p_w * gap;
        }
    }
    mean
}

/// 1 - 2k(n-k)/n^2 as an exact rational.
pub fn gap_one_contraction_target(n: u64, k: u64) -> BigRational {
    let n2 = BigInt::from(n) * BigInt::from(n);
    BigRational::one() - ratio(BigInt::from(2 * k) * BigInt::from(n - k), n2)
}
