//! The linear and quadratic eigenfunctions of the kernel, the closed-form
//! conditional moments they induce, the associated martingale transform, and
//! the explicit maximal-inequality bound built from them.
//!
//! Only these two eigenfunctions are needed anywhere in the crate; the full
//! eigenbasis is deliberately out of scope.

use crate::chain::{BandedKernel, ChainParams};
use crate::{Error, Result};

/// f1(x) = 1 - 2x/n, an eigenfunction with eigenvalue f1(k).
pub fn f1(n: u32, x: u32) -> f64 {
    debug_assert!(x <= n);
    1.0 - 2.0 * x as f64 / n as f64
}

/// f2(x) = 1 - 2(2n-1)x/n^2 + 2(2n-1)x(x-1)/(n^2(n-1)), an eigenfunction
/// with eigenvalue f2(k). Requires n >= 2.
pub fn f2(n: u32, x: u32) -> f64 {
    debug_assert!(n >= 2 && x <= n);
    let (nf, xf) = (n as f64, x as f64);
    let c = 2.0 * (2.0 * nf - 1.0) / (nf * nf);
    1.0 - c * xf + c * xf * (xf - 1.0) / (nf - 1.0)
}

/// The eigenvalue paired with f1: lambda_1 = f1(k).
pub fn lambda1(params: ChainParams) -> f64 {
    f1(params.n, params.k)
}

/// The eigenvalue paired with f2: lambda_2 = f2(k).
pub fn lambda2(params: ChainParams) -> f64 {
    f2(params.n, params.k)
}

/// One closed-form eigenfunction tabulated on the state space.
#[derive(Clone, Debug)]
pub struct EigenPair {
    /// 1 or 2.
    pub index: u8,
    /// f_index(k).
    pub eigenvalue: f64,
    /// f_index(x) for x in 0..=n.
    pub values: Vec<f64>,
}

impl EigenPair {
    pub fn new(params: ChainParams, index: u8) -> Result<Self> {
        let f: fn(u32, u32) -> f64 = match index {
            1 => f1,
            2 => {
                if params.n < 2 {
                    return Err(Error::invalid("n", "f2 requires n >= 2"));
                }
                f2
            }
            _ => return Err(Error::invalid("index", "only eigenfunctions 1 and 2 exist")),
        };
        Ok(EigenPair {
            index,
            eigenvalue: f(params.n, params.k),
            values: (0..=params.n).map(|x| f(params.n, x)).collect(),
        })
    }

    /// max_x |(P f)(x) - lambda f(x)| under the exact kernel.
    pub fn defect(&self, kernel: &BandedKernel) -> f64 {
        let pf = kernel.apply_to_function(&self.values);
        pf.iter()
            .zip(&self.values)
            .map(|(a, f)| (a - self.eigenvalue * f).abs())
            .fold(0.0, f64::max)
    }
}

/// base^t computed as exp(t ln |base|) with the sign parity tracked exactly;
/// 0^0 = 1. Avoids pow drift over thousands of steps and keeps alternating
/// signs for base < 0 (the k > n/2 regime) exact.
pub fn signed_pow(base: f64, t: u64) -> f64 {
    if t == 0 {
        return 1.0;
    }
    if base == 0.0 {
        return 0.0;
    }
    let magnitude = (t as f64 * base.abs().ln()).exp();
    if base < 0.0 && t % 2 == 1 {
        -magnitude
    } else {
        magnitude
    }
}

/// E(X_t | X_0 = x0) = n/2 - (1 - 2k/n)^t (n/2 - x0).
pub fn conditional_mean(params: ChainParams, t: u64, x0: u32) -> f64 {
    let n = params.n as f64;
    let shrink = signed_pow(lambda1(params), t);
    n / 2.0 - shrink * (n / 2.0 - x0 as f64)
}

/// Var(X_t | X_0 = x0) =
///   n^2/(4(2n-1)) + (n^2(n-1)/(2(2n-1))) f2(k)^t f2(x0)
///   - (n^2/4) (1 - 2k/n)^(2t) (1 - 2x0/n)^2.
pub fn conditional_variance(params: ChainParams, t: u64, x0: u32) -> f64 {
    let n = params.n as f64;
    let stationary_term = n * n / (4.0 * (2.0 * n - 1.0));
    let quad = n * n * (n - 1.0) / (2.0 * (2.0 * n - 1.0))
        * signed_pow(lambda2(params), t)
        * f2(params.n, x0);
    let lin = signed_pow(lambda1(params), t);
    let sq = n * n / 4.0 * lin * lin * f1(params.n, x0) * f1(params.n, x0);
    stationary_term + quad - sq
}

/// M_t evaluated at state x: f1(x) / (1 - 2k/n)^t. The normalizer vanishes
/// when 2k = n, which is rejected.
pub fn martingale_value(params: ChainParams, t: u64, x: u32) -> Result<f64> {
    if 2 * params.k == params.n {
        return Err(Error::DegenerateNormalizer);
    }
    Ok(f1(params.n, x) / signed_pow(lambda1(params), t))
}

/// The fully explicit maximal-inequality chain bounding
/// P(max over t in [t1, t2] of |X_t - n/2| > r | X_0 = x0):
///
///   (n^2 / r^2) (1 - 2k/n)^(-2(t2 - t1)) E(f1(X_{t2})^2 | X_0)
///
/// with E(f1(X_{t2})^2 | X_0) = 1/(2n-1) + ((2n-2)/(2n-1)) f2(k)^{t2} f2(x0).
/// No hidden constants; the bound may exceed 1, in which case it is vacuous.
pub fn doob_bound(params: ChainParams, t1: u64, t2: u64, r: f64, x0: u32) -> Result<f64> {
    if t1 > t2 {
        return Err(Error::invalid("t1", format!("t1 = {t1} exceeds t2 = {t2}")));
    }
    if !r.is_finite() || r <= 0.0 {
        return Err(Error::invalid(
            "r",
            format!("level r = {r} must be positive and finite"),
        ));
    }
    if 2 * params.k == params.n {
        return Err(Error::DegenerateNormalizer);
    }
    params.check_state("x0", x0)?;
    let n = params.n as f64;
    let lam = lambda1(params).abs();
    let prefactor = (n * n / (r * r)) * (-2.0 * (t2 - t1) as f64 * lam.ln()).exp();
    let ef1_sq = 1.0 / (2.0 * n - 1.0)
        + (2.0 * n - 2.0) / (2.0 * n - 1.0) * signed_pow(lambda2(params), t2) * f2(params.n, x0);
    Ok((prefactor * ef1_sq).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_kernel, StateDistribution};

    #[test]
    fn f1_f2_values() {
        assert_eq!(f1(10, 0), 1.0);
        assert_eq!(f1(10, 5), 0.0);
        assert!((f2(2, 1) - (-0.5)).abs() < 1e-15);
        assert_eq!(f2(7, 0), 1.0);
    }

    #[test]
    fn square_identity_links_f1_and_f2() {
        // f1(x)^2 = 1/(2n-1) + ((2n-2)/(2n-1)) f2(x) on every state.
        for n in 2..=500u32 {
            let nf = n as f64;
            for x in 0..=n {
                let lhs = f1(n, x) * f1(n, x);
                let rhs = 1.0 / (2.0 * nf - 1.0) + (2.0 * nf - 2.0) / (2.0 * nf - 1.0) * f2(n, x);
                assert!((lhs - rhs).abs() <= 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn signed_pow_parity_and_degenerate() {
        assert_eq!(signed_pow(0.0, 0), 1.0);
        assert_eq!(signed_pow(0.0, 3), 0.0);
        assert!((signed_pow(-0.5, 3) + 0.125).abs() < 1e-16);
        assert!((signed_pow(-0.5, 4) - 0.0625).abs() < 1e-16);
        assert!((signed_pow(0.9, 1000) - 0.9f64.powi(1000)).abs() < 1e-18);
    }

    #[test]
    fn eigen_defect_small_grid() {
        for &(n, k) in &[(2u32, 1u32), (17, 4), (40, 13), (60, 30), (35, 30)] {
            let params = ChainParams::new(n, k).unwrap();
            let kernel = build_kernel(params).unwrap();
            for index in 1..=2u8 {
                let pair = EigenPair::new(params, index).unwrap();
                let defect = pair.defect(&kernel);
                assert!(defect <= 1e-10, "n={n} k={k} f{index}: defect {defect:e}");
            }
        }
    }

    #[test]
    fn conditional_mean_examples() {
        let params = ChainParams::new(100, 25).unwrap();
        assert_eq!(conditional_mean(params, 0, 7), 7.0);
        assert_eq!(conditional_mean(params, 12, 50), 50.0);
        // One exact kernel step from 0.
        assert!((conditional_mean(params, 1, 0) - 25.0).abs() < 1e-12);
        let kernel = build_kernel(params).unwrap();
        let one = crate::chain::evolve(&kernel, &StateDistribution::delta(100, 0)).unwrap();
        assert!((one.mean() - 25.0).abs() < 1e-12);
    }

    #[test]
    fn conditional_variance_examples() {
        let params = ChainParams::new(2, 1).unwrap();
        assert!(conditional_variance(params, 0, 1).abs() < 1e-14);
        // Row (1/4, 1/2, 1/4) has variance 1/2.
        assert!((conditional_variance(params, 1, 1) - 0.5).abs() < 1e-14);
        // Large-t limit is the stationary variance.
        let p2 = ChainParams::new(50, 9).unwrap();
        let limit = 2500.0 / (4.0 * 99.0);
        assert!((conditional_variance(p2, 100_000, 3) - limit).abs() < 1e-10);
    }

    #[test]
    fn martingale_identity_under_kernel() {
        for &(n, k) in &[(12u32, 3u32), (30, 4), (30, 25)] {
            let params = ChainParams::new(n, k).unwrap();
            let kernel = build_kernel(params).unwrap();
            for t in [0u64, 1, 5, 17] {
                let next: Vec<f64> = (0..=n)
                    .map(|x| martingale_value(params, t + 1, x).unwrap())
                    .collect();
                let pnext = kernel.apply_to_function(&next);
                for x in 0..=n {
                    let now = martingale_value(params, t, x).unwrap();
                    assert!(
                        (pnext[x as usize] - now).abs() <= 1e-10,
                        "n={n} k={k} t={t} x={x}"
                    );
                }
            }
        }
    }

    #[test]
    fn martingale_rejects_balanced_swap() {
        let params = ChainParams::new(10, 5).unwrap();
        assert!(martingale_value(params, 1, 3).is_err());
        assert!(doob_bound(params, 0, 1, 2.0, 3).is_err());
    }

    #[test]
    fn doob_bound_shape() {
        let params = ChainParams::new(100, 5).unwrap();
        let b = doob_bound(params, 10, 20, 30.0, 0).unwrap();
        assert!(b >= 0.0);
        // Lowering t1 with t2 fixed inflates the exponential prefactor.
        let wider = doob_bound(params, 5, 20, 30.0, 0).unwrap();
        assert!(wider >= b);
        assert!(doob_bound(params, 20, 10, 30.0, 0).is_err());
        assert!(doob_bound(params, 0, 1, 0.0, 0).is_err());
    }

    #[test]
    fn eigenvalue_t0_conventions() {
        let params = ChainParams::new(8, 4).unwrap();
        // 2k = n: lambda1 = 0, but t = 0 powers are still 1.
        assert_eq!(conditional_mean(params, 0, 2), 2.0);
        assert_eq!(signed_pow(lambda1(params), 0), 1.0);
    }
}
