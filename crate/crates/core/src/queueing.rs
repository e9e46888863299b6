//! Steady-state formulas for the M/M/1/K queue and the M/M/1 analogues.
//!
//! Rates are per unit time, `lambda` is the offered arrival rate and `mu` the
//! service rate. Every function is total for `lambda >= 0`, `mu > 0`, `K >= 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Utilization band around 1 inside which the `rho = 1` limit branch is used.
pub const RHO_ONE_TOLERANCE: f64 = 1e-9;

/// Absolute tolerance of [`min_lead_time`] in time units.
pub const LEAD_TIME_BISECTION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct QueueMetrics<T = f64> {
    /// Offered utilization `lambda / mu`.
    pub rho: T,
    /// Probability an arrival finds the system full.
    pub p_block: T,
    /// Admitted (and served) rate `lambda (1 - p_block)`.
    pub lambda_eff: T,
    /// Time-average number of jobs in system.
    pub l_s: T,
    /// Mean sojourn of admitted jobs.
    pub w: T,
    /// Probability an admitted job finishes within the quoted lead time.
    pub ontime: T,
}

impl<T: Scalar> QueueMetrics<T> {
    pub fn mm1k(lambda: T, mu: T, capacity: u32, lead_time: T) -> Self {
        let p_block = mm1k_blocking(lambda, mu, capacity);
        let lambda_eff = lambda * (T::one() - p_block);
        let l_s = mm1k_mean_number(lambda, mu, capacity);
        let w = if lambda_eff > T::zero() {
            l_s / lambda_eff
        } else {
            T::one() / mu
        };
        Self {
            rho: lambda / mu,
            p_block,
            lambda_eff,
            l_s,
            w,
            ontime: mm1k_ontime_prob(lambda, mu, capacity, lead_time),
        }
    }
}

fn near_one<T: Scalar>(rho: T) -> bool {
    (rho - T::one()).abs() <= T::lit(RHO_ONE_TOLERANCE)
}

/// Stationary distribution `P_0 .. P_K` of the M/M/1/K birth-death chain.
///
/// For `rho > 1` the geometric weights are computed from `1/rho` so that
/// large `K` does not overflow.
pub fn stationary_distribution<T: Scalar>(lambda: T, mu: T, capacity: u32) -> Vec<T> {
    let k = capacity as usize;
    let rho = lambda / mu;
    if near_one(rho) {
        return vec![T::one() / T::from_usize_lossy(k + 1); k + 1];
    }
    if rho <= T::one() {
        // P_j = rho^j (1 - rho) / (1 - rho^{K+1})
        let norm = (T::one() - rho) / (T::one() - rho.powi(k as i32 + 1));
        let mut out = Vec::with_capacity(k + 1);
        let mut w = norm;
        for _ in 0..=k {
            out.push(w);
            w = w * rho;
        }
        out
    } else {
        // P_j = sigma^{K-j} (1 - sigma) / (1 - sigma^{K+1}), sigma = 1/rho
        let sigma = mu / lambda;
        let norm = (T::one() - sigma) / (T::one() - sigma.powi(k as i32 + 1));
        let mut out = vec![T::zero(); k + 1];
        let mut w = norm;
        for j in (0..=k).rev() {
            out[j] = w;
            w = w * sigma;
        }
        out
    }
}

/// Blocking probability `P_K`.
pub fn mm1k_blocking<T: Scalar>(lambda: T, mu: T, capacity: u32) -> T {
    let k = capacity as i32;
    let rho = lambda / mu;
    if near_one(rho) {
        return T::one() / T::from_usize_lossy(capacity as usize + 1);
    }
    if rho <= T::one() {
        (T::one() - rho) / (T::one() - rho.powi(k + 1)) * rho.powi(k)
    } else {
        let sigma = T::one() / rho;
        (T::one() - sigma) / (T::one() - sigma.powi(k + 1))
    }
}

/// Expected number in system `L_s`; `K/2` in the `rho = 1` limit.
pub fn mm1k_mean_number<T: Scalar>(lambda: T, mu: T, capacity: u32) -> T {
    let k = capacity as i32;
    let kp1 = T::from_usize_lossy(capacity as usize + 1);
    let rho = lambda / mu;
    if near_one(rho) {
        return T::from_usize_lossy(capacity as usize) / T::lit(2.0);
    }
    let first = rho / (T::one() - rho);
    // (K+1) rho^{K+1} / (1 - rho^{K+1}), rewritten in 1/rho above saturation
    let second = if rho <= T::one() {
        let r = rho.powi(k + 1);
        kp1 * r / (T::one() - r)
    } else {
        let s = (T::one() / rho).powi(k + 1);
        kp1 / (s - T::one())
    };
    first - second
}

/// Throughput `lambda (1 - P_K)`.
pub fn mm1k_throughput<T: Scalar>(lambda: T, mu: T, capacity: u32) -> T {
    lambda * (T::one() - mm1k_blocking(lambda, mu, capacity))
}

/// Mean sojourn `L_s / lambda_eff` of admitted jobs.
pub fn mm1k_mean_sojourn<T: Scalar>(lambda: T, mu: T, capacity: u32) -> Result<T> {
    if !(lambda > T::zero()) {
        return Err(Error::UndefinedSojourn);
    }
    Ok(mm1k_mean_number(lambda, mu, capacity) / mm1k_throughput(lambda, mu, capacity))
}

/// Survival `P(Erlang(k+1, 1) > x)` for `k = 0 .. n-1`, by running products
/// of `x^i / i!`.
pub fn erlang_survivals<T: Scalar>(x: T, n: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n);
    let mut term = (-x).exp();
    let mut cumulative = T::zero();
    for k in 0..n {
        if k > 0 {
            term = term * x / T::from_usize_lossy(k);
        }
        cumulative = cumulative + term;
        out.push(cumulative.min(T::one()));
    }
    out
}

/// Arrival-state weights `P_k / (1 - P_K)` for `k = 0 .. K-1`: the
/// distribution of jobs found ahead by an admitted arrival.
pub fn admitted_weights<T: Scalar>(lambda: T, mu: T, capacity: u32) -> Vec<T> {
    let mut probs = stationary_distribution(lambda, mu, capacity);
    let blocked = probs.pop().unwrap_or_else(T::zero);
    let admitted = T::one() - blocked;
    probs.iter_mut().for_each(|p| *p = *p / admitted);
    probs
}

/// Late probability for precomputed admitted weights at `x = mu l`.
pub(crate) fn late_prob_from_weights<T: Scalar>(weights: &[T], x: T) -> T {
    // same running product as `erlang_survivals`, without the allocation
    let mut term = (-x).exp();
    let mut survival = T::zero();
    let mut late = T::zero();
    for (k, &w) in weights.iter().enumerate() {
        if k > 0 {
            term = term * x / T::from_usize_lossy(k);
        }
        survival = survival + term;
        late = late + survival.min(T::one()) * w;
    }
    late.max(T::zero()).min(T::one())
}

/// Probability that an admitted job waits longer than `lead_time`.
///
/// A job admitted with `k` jobs ahead of it has an Erlang(k+1, mu) sojourn;
/// the arrival sees `k` with probability `P_k / (1 - P_K)`.
pub fn mm1k_late_prob<T: Scalar>(lambda: T, mu: T, capacity: u32, lead_time: T) -> T {
    late_prob_from_weights(&admitted_weights(lambda, mu, capacity), mu * lead_time)
}

/// `P(W <= l)` for an admitted job.
pub fn mm1k_ontime_prob<T: Scalar>(lambda: T, mu: T, capacity: u32, lead_time: T) -> T {
    T::one() - mm1k_late_prob(lambda, mu, capacity, lead_time)
}

/// Smallest quoted lead time whose on-time probability reaches `service_level`,
/// found by bisection on the monotone map `l -> P(W <= l)`.
pub fn min_lead_time<T: Scalar>(lambda: T, mu: T, capacity: u32, service_level: T) -> T {
    min_lead_time_from_weights(&admitted_weights(lambda, mu, capacity), mu, service_level)
}

pub(crate) fn min_lead_time_from_weights<T: Scalar>(weights: &[T], mu: T, service_level: T) -> T {
    if service_level <= T::zero() {
        return T::zero();
    }
    let meets = |l: T| T::one() - late_prob_from_weights(weights, mu * l) >= service_level;
    let mut hi = T::one() / mu;
    let mut guard = 0;
    while !meets(hi) && guard < 200 {
        hi = hi * T::lit(2.0);
        guard += 1;
    }
    let mut lo = T::zero();
    let tol = T::lit(LEAD_TIME_BISECTION_TOL).max(hi * T::epsilon() * T::lit(4.0));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        if meets(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn check_stable<T: Scalar>(lambda: T, mu: T) -> Result<()> {
    if lambda >= mu {
        Err(Error::UnstableQueue {
            lambda: lambda.as_f64(),
            mu: mu.as_f64(),
        })
    } else {
        Ok(())
    }
}

/// M/M/1 on-time probability `1 - e^{-(mu - lambda) l}`.
pub fn mm1_ontime_prob<T: Scalar>(lambda: T, mu: T, lead_time: T) -> Result<T> {
    check_stable(lambda, mu)?;
    Ok(T::one() - (-(mu - lambda) * lead_time).exp())
}

/// M/M/1 mean number in system `rho / (1 - rho)`.
pub fn mm1_mean_number<T: Scalar>(lambda: T, mu: T) -> Result<T> {
    check_stable(lambda, mu)?;
    let rho = lambda / mu;
    Ok(rho / (T::one() - rho))
}

/// M/M/1 mean sojourn `1 / (mu - lambda)`.
pub fn mm1_mean_sojourn<T: Scalar>(lambda: T, mu: T) -> Result<T> {
    check_stable(lambda, mu)?;
    Ok(T::one() / (mu - lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn blocking_examples() {
        assert_eq!(mm1k_blocking(10.0, 10.0, 1), 0.5);
        assert_relative_eq!(mm1k_blocking(5.0, 10.0, 1), 1.0 / 3.0, epsilon = 1e-15);
        for k in [1, 3, 50] {
            assert_eq!(mm1k_blocking(0.0, 10.0, k), 0.0);
        }
    }

    #[test]
    fn mean_number_examples() {
        assert_eq!(mm1k_mean_number(10.0, 10.0, 1), 0.5);
        assert_relative_eq!(mm1k_mean_number(5.0, 10.0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(mm1k_mean_number(5.0, 10.0, 50), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn throughput_examples() {
        assert_relative_eq!(mm1k_throughput(5.0, 10.0, 1), 10.0 / 3.0, epsilon = 1e-14);
        assert_eq!(mm1k_throughput(0.0, 10.0, 1), 0.0);
        assert_relative_eq!(mm1k_throughput(1e9, 10.0, 1), 10.0, epsilon = 1e-6);
    }

    #[test]
    fn sojourn_examples() {
        assert_relative_eq!(mm1k_mean_sojourn(5.0, 10.0, 1).unwrap(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(mm1k_mean_sojourn(5.0, 10.0, 50).unwrap(), 0.2, epsilon = 1e-12);
        assert_relative_eq!(mm1k_mean_sojourn(1e-9, 10.0, 7).unwrap(), 0.1, epsilon = 1e-8);
        assert!(matches!(mm1k_mean_sojourn(0.0, 10.0, 1), Err(Error::UndefinedSojourn)));
    }

    #[test]
    fn single_slot_sojourn_is_service_time() {
        for lambda in [0.1, 1.0, 9.9, 10.0, 37.0] {
            assert_relative_eq!(mm1k_mean_sojourn(lambda, 10.0, 1).unwrap(), 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn ontime_single_slot_is_exponential() {
        for (lambda, l) in [(0.5f64, 0.1f64), (5.0, 0.3), (20.0, 0.05)] {
            assert_relative_eq!(
                mm1k_ontime_prob(lambda, 10.0f64, 1, l),
                1.0 - (-10.0 * l).exp(),
                epsilon = 1e-15
            );
        }
        assert_eq!(mm1k_ontime_prob(5.0, 10.0, 4, 0.0), 0.0);
    }

    #[test]
    fn ontime_k3_hand_computed() {
        // rho = 1/2, K = 3: P = (8, 4, 2, 1)/15, admitted weights (8, 4, 2)/14
        let x: f64 = 3.0;
        let e = (-x).exp();
        let s0 = e;
        let s1 = e * (1.0 + x);
        let s2 = e * (1.0 + x + x * x / 2.0);
        let late = (8.0 * s0 + 4.0 * s1 + 2.0 * s2) / 14.0;
        assert_relative_eq!(mm1k_ontime_prob(5.0, 10.0, 3, 0.3), 1.0 - late, epsilon = 1e-14);
    }

    #[test]
    fn mm1_examples() {
        assert_relative_eq!(mm1_ontime_prob(0.0, 10.0, 0.2).unwrap(), 1.0 - (-2.0f64).exp());
        assert_eq!(mm1_ontime_prob(3.0, 10.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(mm1_ontime_prob(5.0, 10.0, 0.6).unwrap(), 0.950_212_931_632_136, epsilon = 1e-12);
        assert!(matches!(mm1_ontime_prob(10.0, 10.0, 1.0), Err(Error::UnstableQueue { .. })));
    }

    #[test]
    fn rho_one_continuity() {
        for k in [1, 2, 5, 20] {
            let half = k as f64 / 2.0;
            for rho in [1.0 - 1e-6, 1.0 + 1e-6] {
                assert!((mm1k_mean_number(rho * 10.0, 10.0, k) - half).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn saturated_large_k_does_not_overflow() {
        let p = stationary_distribution(70.0f64, 10.0, 500);
        assert!(p.iter().all(|v| v.is_finite()));
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let l = mm1k_mean_number(70.0f64, 10.0, 500);
        assert!(l.is_finite() && l > 498.0 && l < 500.0);
        let late = mm1k_late_prob(70.0f64, 10.0, 500, 10.0);
        assert!(late.is_finite());
    }

    #[test]
    fn min_lead_time_hits_target() {
        let s = 0.95;
        let l = min_lead_time(5.0, 10.0, 1, s);
        assert_relative_eq!(l, 20.0f64.ln() / 10.0, epsilon = 1e-9);
        for k in [2, 5, 20] {
            let l = min_lead_time(8.0, 10.0, k, s);
            assert!(mm1k_ontime_prob(8.0, 10.0, k, l) >= s);
            assert!(mm1k_ontime_prob(8.0, 10.0, k, l - 1e-9) < s);
        }
        assert_eq!(min_lead_time(5.0, 10.0, 3, 0.0), 0.0);
    }

    #[test]
    fn f32_matches_f64() {
        let a = mm1k_mean_number(7.0f32, 10.0, 5);
        let b = mm1k_mean_number(7.0f64, 10.0, 5);
        assert!((a as f64 - b).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ontime_monotone_in_lead_time(lambda in 0.0..30.0f64, k in 1u32..30, l in 0.0..2.0f64, dl in 0.0..1.0f64) {
                let a = mm1k_ontime_prob(lambda, 10.0, k, l);
                let b = mm1k_ontime_prob(lambda, 10.0, k, l + dl);
                prop_assert!(b >= a - 1e-15);
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(mm1k_ontime_prob(lambda, 10.0, k, 1e3) > 1.0 - 1e-12);
            }

            #[test]
            fn metric_invariants(lambda in 0.0..50.0f64, mu in 0.5..20.0f64, k in 1u32..60) {
                let m = QueueMetrics::mm1k(lambda, mu, k, 0.3);
                prop_assert!(m.p_block >= 0.0 && m.p_block < 1.0);
                prop_assert!(m.lambda_eff <= lambda + 1e-12);
                prop_assert!(m.l_s >= -1e-12);
                prop_assert!((0.0..=1.0).contains(&m.ontime));
            }
        }
    }
}
