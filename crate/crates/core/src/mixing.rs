//! Exact total-variation mixing profiles d(t), mixing times t_mix(eps),
//! cutoff profile scans and upper-bound diagnostics, all computed by banded
//! evolution of exact laws.
//!
//! Worst-case distances maximize over starting states. Computing all n+1
//! starts costs O(n^2 k t), so large-n scans default to the two extreme
//! starts; the agreement of the two policies is validated exhaustively at
//! small n by [`extremes_vs_all_states_gap`].

use crate::chain::{build_kernel, evolve, BandedKernel, ChainParams, StateDistribution};
use crate::{Error, Result};
use rayon::prelude::*;

/// Which starting states a worst-case distance maximizes over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartPolicy {
    /// x0 in {0, n}.
    Extremes,
    /// Every x0 in 0..=n.
    AllStates,
}

impl std::fmt::Display for StartPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StartPolicy::Extremes => write!(f, "extremes"),
            StartPolicy::AllStates => write!(f, "all-states"),
        }
    }
}

/// The laws of the chain from a set of starts, evolved in lockstep.
struct Ensemble<'a> {
    kernel: &'a BandedKernel,
    pi: StateDistribution,
    dists: Vec<StateDistribution>,
    steps_since_renorm: u32,
}

impl<'a> Ensemble<'a> {
    fn new(kernel: &'a BandedKernel, policy: StartPolicy) -> Self {
        let n = kernel.n();
        let starts: Vec<u32> = match policy {
            StartPolicy::Extremes => {
                if n == 0 {
                    vec![0]
                } else {
                    vec![0, n]
                }
            }
            StartPolicy::AllStates => (0..=n).collect(),
        };
        Ensemble {
            kernel,
            pi: StateDistribution::stationary(n),
            dists: starts
                .into_iter()
                .map(|x| StateDistribution::delta(n, x))
                .collect(),
            steps_since_renorm: 0,
        }
    }

    fn snapshot(&self) -> Vec<StateDistribution> {
        self.dists.clone()
    }

    fn restore(&mut self, dists: Vec<StateDistribution>) {
        self.dists = dists;
    }

    fn step(&mut self) -> Result<()> {
        for d in &mut self.dists {
            *d = evolve(self.kernel, d)?;
        }
        self.steps_since_renorm += 1;
        if self.steps_since_renorm >= 64 {
            self.steps_since_renorm = 0;
            for d in &mut self.dists {
                if d.normalization_drift() > 1e-12 {
                    d.renormalize();
                }
            }
        }
        Ok(())
    }

    fn advance(&mut self, steps: u64) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    fn worst_tv(&self) -> f64 {
        self.dists
            .iter()
            .map(|d| d.tv(&self.pi))
            .fold(0.0, f64::max)
    }
}

/// TV(delta_x0 P^t, pi), by t banded evolutions.
pub fn distance_from(kernel: &BandedKernel, x0: u32, t: u64) -> Result<f64> {
    kernel.params().check_state("x0", x0)?;
    let mut dist = StateDistribution::delta(kernel.n(), x0);
    let pi = StateDistribution::stationary(kernel.n());
    for _ in 0..t {
        dist = evolve(kernel, &dist)?;
    }
    Ok(dist.tv(&pi))
}

/// d(t) under the given start policy.
pub fn worst_distance(kernel: &BandedKernel, t: u64, policy: StartPolicy) -> Result<f64> {
    let mut ens = Ensemble::new(kernel, policy);
    ens.advance(t)?;
    Ok(ens.worst_tv())
}

/// A d(t) curve sampled at chosen times.
#[derive(Clone, Debug)]
pub struct MixingProfile {
    pub params: ChainParams,
    pub policy: StartPolicy,
    pub times: Vec<u64>,
    pub distances: Vec<f64>,
}

/// Evaluates d(t) at every requested time (deduplicated, ascending).
pub fn profile(kernel: &BandedKernel, policy: StartPolicy, times: &[u64]) -> Result<MixingProfile> {
    let mut times: Vec<u64> = times.to_vec();
    times.sort_unstable();
    times.dedup();
    let mut ens = Ensemble::new(kernel, policy);
    let mut distances = Vec::with_capacity(times.len());
    let mut now = 0u64;
    for &t in &times {
        ens.advance(t - now)?;
        now = t;
        distances.push(ens.worst_tv());
    }
    Ok(MixingProfile {
        params: kernel.params(),
        policy,
        times,
        distances,
    })
}

/// ceil((n / 4k) ln n), the cutoff time scale. Swap sizes above n/2 are
/// normalized through the complement chain first.
pub fn t_star(params: ChainParams) -> u64 {
    let p = params.normalized();
    let (n, k) = (p.n as f64, p.k as f64);
    (n / (4.0 * k) * n.ln()).ceil() as u64
}

/// ceil((n / 2k) ln(n / eps)), the coupling upper bound on t_mix(eps);
/// normalized to k <= n/2 like [`t_star`].
pub fn nw_upper_bound(params: ChainParams, eps: f64) -> u64 {
    let p = params.normalized();
    let (n, k) = (p.n as f64, p.k as f64);
    (n / (2.0 * k) * (n / eps).ln()).ceil() as u64
}

/// Least t with d(t) <= eps, found by doubling then bisection re-using the
/// lower-bracket laws (d is non-increasing in t under a fixed kernel).
pub fn mixing_time(kernel: &BandedKernel, eps: f64, policy: StartPolicy) -> Result<u64> {
    let params = kernel.params();
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(Error::invalid("eps", format!("{eps} outside (0, 1)")));
    }
    if !params.is_ergodic() {
        return Err(Error::NonErgodic {
            n: params.n,
            k: params.k,
        });
    }
    let mut ens = Ensemble::new(kernel, policy);
    if ens.worst_tv() <= eps {
        return Ok(0);
    }
    let limit = 4 * nw_upper_bound(params, eps) + 64;
    // Doubling to bracket: d(lo) > eps throughout, cursor tracks the
    // ensemble's current time.
    let mut lo = 0u64;
    let mut lo_state = ens.snapshot();
    let mut cursor = 0u64;
    let mut hi = 1u64;
    loop {
        ens.advance(hi - cursor)?;
        cursor = hi;
        if ens.worst_tv() <= eps {
            break;
        }
        lo = hi;
        lo_state = ens.snapshot();
        hi *= 2;
        if hi > limit {
            return Err(Error::NoConvergence { limit });
        }
    }
    // Bisection on (lo, hi]: d(lo) > eps, d(hi) <= eps.
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        ens.restore(lo_state.clone());
        ens.advance(mid - lo)?;
        if ens.worst_tv() <= eps {
            hi = mid;
        } else {
            lo = mid;
            lo_state = ens.snapshot();
        }
    }
    Ok(hi)
}

/// One cutoff-scan ladder entry.
#[derive(Clone, Copy, Debug)]
pub struct CutoffScanRecord {
    pub n: u32,
    pub k: u32,
    pub eps: f64,
    pub t_mix: u64,
    /// ceil((n/4k) ln n).
    pub t_star: u64,
    /// t_mix * 4k / (n ln n); tends to 1 under cutoff.
    pub ratio: f64,
    /// ceil((n/2k) ln(n/eps)).
    pub nw_upper: u64,
    /// Whether t_mix respects the coupling upper bound.
    pub nw_ok: bool,
}

/// Exact d at the scaled times ceil(c (n/4k) ln n) for each multiplier c,
/// with the extremes policy.
pub fn cutoff_profile(params: ChainParams, multipliers: &[f64]) -> Result<Vec<(f64, f64)>> {
    if !params.is_ergodic() {
        return Err(Error::NonErgodic {
            n: params.n,
            k: params.k,
        });
    }
    let p = params.normalized();
    let scale = p.n as f64 / (4.0 * p.k as f64) * (p.n as f64).ln();
    let kernel = build_kernel(p)?;
    let times: Vec<u64> = multipliers
        .iter()
        .map(|&c| {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::invalid("multipliers", format!("bad entry {c}")));
            }
            Ok((c * scale).ceil() as u64)
        })
        .collect::<Result<_>>()?;
    let prof = profile(&kernel, StartPolicy::Extremes, &times)?;
    Ok(multipliers
        .iter()
        .zip(times)
        .map(|(&c, t)| {
            let idx = prof.times.binary_search(&t).expect("time present");
            (c, prof.distances[idx])
        })
        .collect())
}

/// Runs the cutoff diagnostic over a parameter ladder (entries evaluated
/// concurrently, reported in ladder order) with the extremes policy.
pub fn window_diagnostic(ladder: &[ChainParams], eps: f64) -> Result<Vec<CutoffScanRecord>> {
    ladder
        .par_iter()
        .map(|&params| {
            let p = params.normalized();
            let kernel = build_kernel(p)?;
            let t_mix = mixing_time(&kernel, eps, StartPolicy::Extremes)?;
            let ts = t_star(p);
            let nw = nw_upper_bound(p, eps);
            let (n, k) = (p.n as f64, p.k as f64);
            Ok(CutoffScanRecord {
                n: params.n,
                k: params.k,
                eps,
                t_mix,
                t_star: ts,
                ratio: t_mix as f64 * 4.0 * k / (n * n.ln()),
                nw_upper: nw,
                nw_ok: t_mix <= nw,
            })
        })
        .collect()
}

/// max over t <= t_mix(eps) of (all-states d(t) - extremes d(t)); zero means
/// the extreme starts attain the worst case on the whole window.
pub fn extremes_vs_all_states_gap(kernel: &BandedKernel, eps: f64) -> Result<f64> {
    let t_end = mixing_time(kernel, eps, StartPolicy::AllStates)?;
    let mut all = Ensemble::new(kernel, StartPolicy::AllStates);
    let mut ext = Ensemble::new(kernel, StartPolicy::Extremes);
    let mut gap = 0.0f64;
    for _ in 0..=t_end {
        gap = gap.max(all.worst_tv() - ext.worst_tv());
        all.step()?;
        ext.step()?;
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(n: u32, k: u32) -> BandedKernel {
        build_kernel(ChainParams::new(n, k).unwrap()).unwrap()
    }

    #[test]
    fn tiny_chain_distances_by_hand() {
        let kern = kernel(2, 1);
        // TV(delta_0, pi) = 1 - pi(0) = 5/6.
        assert!((distance_from(&kern, 0, 0).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        // One step from 0 lands on state 1 surely; TV((0,1,0), pi) = 1/3.
        assert!((distance_from(&kern, 0, 1).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        // From the middle state one step gives (1/4, 1/2, 1/4); TV = 1/6.
        assert!((distance_from(&kern, 1, 1).unwrap() - 1.0 / 6.0).abs() < 1e-14);
        // Two steps from an extreme reach (1/4, 1/2, 1/4) as well.
        assert!((distance_from(&kern, 0, 2).unwrap() - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn tiny_chain_mixing_time() {
        let kern = kernel(2, 1);
        // d(0) = 5/6, d(1) = 1/3, d(2) = 1/6: first t at or below 1/4 is 2.
        assert_eq!(mixing_time(&kern, 0.25, StartPolicy::AllStates).unwrap(), 2);
        assert_eq!(mixing_time(&kern, 0.25, StartPolicy::Extremes).unwrap(), 2);
        // eps at or above d(0) mixes immediately.
        assert_eq!(mixing_time(&kern, 0.9, StartPolicy::AllStates).unwrap(), 0);
    }

    #[test]
    fn worst_distance_t0_is_one_minus_pi0() {
        for n in [2u32, 5, 17] {
            let kern = kernel(n, 1);
            let pi0 = StateDistribution::stationary(n).prob(0);
            let d0 = worst_distance(&kern, 0, StartPolicy::AllStates).unwrap();
            assert!((d0 - (1.0 - pi0)).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn distances_non_increasing() {
        for &(n, k) in &[(12u32, 1u32), (30, 7), (30, 28)] {
            let kern = kernel(n, k);
            for policy in [StartPolicy::Extremes, StartPolicy::AllStates] {
                let times: Vec<u64> = (0..=40).collect();
                let prof = profile(&kern, policy, &times).unwrap();
                for w in prof.distances.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "n={n} k={k} {policy}");
                }
            }
        }
    }

    #[test]
    fn complement_symmetry_of_profiles() {
        let times: Vec<u64> = (0..=50).collect();
        let a = profile(&kernel(40, 3), StartPolicy::Extremes, &times).unwrap();
        let b = profile(&kernel(40, 37), StartPolicy::Extremes, &times).unwrap();
        for (x, y) in a.distances.iter().zip(&b.distances) {
            assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn non_ergodic_rejected() {
        assert!(matches!(
            mixing_time(&kernel(6, 0), 0.25, StartPolicy::Extremes),
            Err(Error::NonErgodic { .. })
        ));
        assert!(matches!(
            mixing_time(&kernel(6, 6), 0.25, StartPolicy::Extremes),
            Err(Error::NonErgodic { .. })
        ));
        assert!(mixing_time(&kernel(6, 2), 1.5, StartPolicy::Extremes).is_err());
    }

    #[test]
    fn mixing_time_is_exact_threshold() {
        // Brute-force comparison on a moderate chain.
        let kern = kernel(25, 4);
        for eps in [0.5, 0.25, 0.1, 0.01] {
            let t = mixing_time(&kern, eps, StartPolicy::AllStates).unwrap();
            assert!(worst_distance(&kern, t, StartPolicy::AllStates).unwrap() <= eps);
            if t > 0 {
                assert!(worst_distance(&kern, t - 1, StartPolicy::AllStates).unwrap() > eps);
            }
        }
    }

    #[test]
    fn nw_bound_holds_on_small_grid() {
        for &(n, k) in &[(20u32, 1u32), (30, 3), (40, 9), (60, 25)] {
            let kern = kernel(n, k);
            let t = mixing_time(&kern, 0.25, StartPolicy::AllStates).unwrap();
            assert!(
                t <= nw_upper_bound(ChainParams::new(n, k).unwrap(), 0.25),
                "n={n} k={k}"
            );
        }
    }

    #[test]
    fn extremes_attain_worst_case_small() {
        for &(n, k) in &[(12u32, 2u32), (25, 6), (40, 11)] {
            let kern = kernel(n, k);
            let gap = extremes_vs_all_states_gap(&kern, 0.01).unwrap();
            assert!(gap <= 1e-12, "n={n} k={k}: gap {gap:e}");
        }
    }

    #[test]
    fn cutoff_profile_monotone_in_multiplier() {
        let params = ChainParams::new(400, 5).unwrap();
        let points = cutoff_profile(params, &[0.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(points.len(), 4);
        assert!(points[0].1 > 0.9); // d(0) near 1
        assert!(points[1].1 > points[3].1);
    }

    #[test]
    fn window_diagnostic_ladder_fields() {
        let ladder = [
            ChainParams::new(60, 5).unwrap(),
            ChainParams::new(120, 5).unwrap(),
        ];
        let recs = window_diagnostic(&ladder, 0.25).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(r.nw_ok, "n={} k={}", r.n, r.k);
            assert!(r.ratio > 0.0);
            assert_eq!(r.t_star, t_star(ChainParams::new(r.n, r.k).unwrap()));
        }
    }
}
