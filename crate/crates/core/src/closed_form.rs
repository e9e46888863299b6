//! Exact optimal policies for the single-slot rejection system (K = 1).
//!
//! With the demand constraint binding, price is eliminated and the profit
//! becomes a concave function of the demand rate whose stationary point is
//! the positive root of `lambda^2 + 2 mu lambda - C = 0`, where `C` collects
//! the market and cost constants. Without holding and penalty costs the
//! service constraint always binds. With them, the quote is stretched past
//! the imposed level whenever the critical level `1 - b2 / (b1 c)` exceeds it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, Policy};
use crate::scalar::Scalar;

/// Lead time used when demand ignores lead time (`b2 = 0`): long enough that
/// `e^{-mu l} <= 1e-12`.
const PENALTY_ELIMINATION: f64 = 1e-12;

/// Which force determines the optimal quoted lead time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// The imposed service level is attained with equality.
    ServiceBinding,
    /// The lateness penalty pushes the quote beyond the imposed level.
    PenaltyBinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Solution<T = f64> {
    pub policy: Policy<T>,
    pub profit: T,
    pub feasible: bool,
    pub service_level_attained: T,
    pub branch: Branch,
    /// Named intermediates of the solve (`z`, `s_c`, `x`, `discriminant`, ...).
    pub diagnostics: BTreeMap<String, T>,
}

impl<T: Scalar> Solution<T> {
    /// Zero-activity answer for an instance with no profitable point:
    /// price at cost, minimal service-compliant quote, no demand.
    pub fn infeasible(params: &MarketParams<T>) -> Self {
        let z = params.service_factor();
        let mut diagnostics = BTreeMap::new();
        diagnostics.insert("z".to_string(), z);
        Self {
            policy: Policy::new(params.unit_cost, z / params.service_rate, T::zero()),
            profit: T::zero(),
            feasible: false,
            service_level_attained: params.service_level,
            branch: Branch::ServiceBinding,
            diagnostics,
        }
    }

    pub fn diagnostic(&self, name: &str) -> Option<T> {
        self.diagnostics.get(name).copied()
    }
}

/// Profit rate of a single-slot policy.
///
/// Without costs: `lambda mu (p - m) / (mu + lambda)`. With costs the holding
/// term `F lambda / (mu + lambda)` and the penalty term
/// `c lambda_eff e^{-mu l} / mu` are subtracted.
pub fn objective_mm11<T: Scalar>(policy: &Policy<T>, params: &MarketParams<T>, costs_on: bool) -> T {
    let lambda = policy.arrival_rate;
    let mu = params.service_rate;
    let throughput = lambda * mu / (mu + lambda);
    let revenue = throughput * (policy.price - params.unit_cost);
    if !costs_on {
        return revenue;
    }
    let holding = params.holding_cost * lambda / (mu + lambda);
    let penalty = params.penalty_rate * throughput * (-mu * policy.lead_time).exp() / mu;
    revenue - holding - penalty
}

/// Derivative numerator of the cost-free reduced profit at `lambda`:
/// `mu b1 (a mu - b2 z - m mu b1 - 2 lambda mu - lambda^2)`.
pub fn no_cost_stationarity_residual<T: Scalar>(lambda: T, params: &MarketParams<T>) -> T {
    let mu = params.service_rate;
    let b1 = params.price_sensitivity;
    let z = params.service_factor();
    mu * b1
        * (params.market_potential * mu
            - params.lead_time_sensitivity * z
            - params.unit_cost * mu * b1
            - T::lit(2.0) * lambda * mu
            - lambda * lambda)
}

/// Derivative numerator (in `lambda`) of the reduced profit with costs at
/// `(lambda, l)`: `mu (C(l) - 2 mu lambda - lambda^2)`.
pub fn cost_stationarity_residual<T: Scalar>(lambda: T, lead_time: T, params: &MarketParams<T>) -> T {
    let mu = params.service_rate;
    mu * (params.cost_margin(lead_time) - T::lit(2.0) * mu * lambda - lambda * lambda)
}

fn require_single_slot<T: Scalar>(params: &MarketParams<T>) -> Result<()> {
    params.validate()?;
    if params.capacity != 1 {
        return Err(Error::UnsupportedCapacity(params.capacity));
    }
    Ok(())
}

/// Roots `-mu -/+ sqrt(radicand)` of the first-order condition.
fn stationary_roots<T: Scalar>(mu: T, radicand: T) -> (T, T) {
    assert!(
        radicand >= T::zero(),
        "negative radicand {radicand} on a feasible instance"
    );
    let root = radicand.sqrt();
    (-mu - root, -mu + root)
}

/// Optimal single-slot policy without holding and penalty costs.
pub fn solve_p1<T: Scalar>(params: &MarketParams<T>) -> Result<Solution<T>> {
    require_single_slot(params)?;
    if !params.feasible_no_costs() {
        return Ok(Solution::infeasible(params));
    }
    let mu = params.service_rate;
    let z = params.service_factor();
    let lead_time = z / mu;
    let radicand = mu * mu + params.market_potential * mu
        - params.lead_time_sensitivity * z
        - params.unit_cost * mu * params.price_sensitivity;
    let (lambda_neg, lambda_pos) = stationary_roots(mu, radicand);
    debug_assert!(lambda_neg <= T::zero());
    let arrival_rate = lambda_pos.max(T::zero());
    let price = params.price_unchecked(arrival_rate, lead_time).max(T::zero());
    let policy = Policy::new(price, lead_time, arrival_rate);
    let profit = objective_mm11(&policy, params, false);

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("z".to_string(), z);
    diagnostics.insert("discriminant".to_string(), T::lit(4.0) * radicand);
    diagnostics.insert("lambda_negative_root".to_string(), lambda_neg);
    Ok(Solution {
        policy,
        profit,
        feasible: true,
        service_level_attained: params.service_level,
        branch: Branch::ServiceBinding,
        diagnostics,
    })
}

/// `s_c = 1 - b2 / (b1 c)`; may be negative, in which case the imposed level
/// always binds.
pub fn critical_service_level<T: Scalar>(params: &MarketParams<T>) -> Result<T> {
    if !(params.penalty_rate > T::zero()) {
        return Err(Error::UndefinedCriticalLevel);
    }
    Ok(T::one() - params.lead_time_sensitivity / (params.price_sensitivity * params.penalty_rate))
}

/// Optimal single-slot policy with holding and lateness penalty costs.
pub fn solve_p2<T: Scalar>(params: &MarketParams<T>) -> Result<Solution<T>> {
    require_single_slot(params)?;
    let mu = params.service_rate;
    let z = params.service_factor();
    let service_x = T::one() / (T::one() - params.service_level);
    let critical = critical_service_level(params).ok();

    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("z".to_string(), z);

    let (lead_time, branch, attained) = match critical {
        // no penalty: nothing pushes the quote past the imposed level
        None => (z / mu, Branch::ServiceBinding, params.service_level),
        Some(s_c) => {
            diagnostics.insert("s_c".to_string(), s_c);
            if params.lead_time_sensitivity > T::zero() {
                let penalty_x = params.price_sensitivity * params.penalty_rate
                    / params.lead_time_sensitivity;
                let x = service_x.max(penalty_x);
                diagnostics.insert("x".to_string(), x);
                let branch = if s_c > params.service_level {
                    Branch::PenaltyBinding
                } else {
                    Branch::ServiceBinding
                };
                (x.ln() / mu, branch, params.service_level.max(s_c))
            } else {
                // lead time is free in demand: quote until the penalty vanishes
                let elim = -T::lit(PENALTY_ELIMINATION).ln();
                let (exponent, branch) = if elim > z {
                    (elim, Branch::PenaltyBinding)
                } else {
                    (z, Branch::ServiceBinding)
                };
                let l = exponent / mu;
                (l, branch, T::one() - (-exponent).exp())
            }
        }
    };

    if !params.feasible_with_costs(lead_time) {
        let mut sol = Solution::infeasible(params);
        sol.diagnostics.extend(diagnostics);
        return Ok(sol);
    }

    let radicand = mu * mu + params.cost_margin(lead_time);
    let (lambda_neg, lambda_pos) = stationary_roots(mu, radicand);
    debug_assert!(lambda_neg <= T::zero());
    let arrival_rate = lambda_pos.max(T::zero());
    let price = params.price_unchecked(arrival_rate, lead_time).max(T::zero());
    let penalty = params.penalty_rate * (-mu * lead_time).exp();
    let profit = arrival_rate
        * (price * mu - params.unit_cost * mu - params.holding_cost - penalty)
        / (mu + arrival_rate);

    diagnostics.insert("discriminant".to_string(), T::lit(4.0) * radicand);
    diagnostics.insert("lambda_negative_root".to_string(), lambda_neg);
    Ok(Solution {
        policy: Policy::new(price, lead_time, arrival_rate),
        profit,
        feasible: true,
        service_level_attained: attained,
        branch,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> MarketParams {
        MarketParams::<f64>::base_case(30.0, 20.0)
    }

    #[test]
    fn p1_base_case() {
        let sol = solve_p1(&base()).unwrap();
        assert!(sol.feasible);
        assert!((sol.policy.arrival_rate - 1.8357).abs() < 1e-4);
        assert!((sol.policy.lead_time - 0.29957).abs() < 1e-5);
        assert!((sol.policy.price - 5.5432).abs() < 1e-4);
        assert!((sol.profit - 0.8425).abs() < 1e-4);
        assert_eq!(sol.service_level_attained, 0.95);
        assert_eq!(sol.branch, Branch::ServiceBinding);
        assert!(sol.diagnostic("lambda_negative_root").unwrap() < 0.0);
    }

    #[test]
    fn p1_infeasible_returns_null_policy() {
        let mut p = base();
        p.unit_cost = 6.01;
        let sol = solve_p1(&p).unwrap();
        assert!(!sol.feasible);
        assert_eq!(sol.profit, 0.0);
        assert_eq!(sol.policy.arrival_rate, 0.0);
        assert_eq!(sol.policy.price, 6.01);
    }

    #[test]
    fn p1_zero_service_level() {
        let mut p = base();
        p.service_level = 0.0;
        let sol = solve_p1(&p).unwrap();
        assert_eq!(sol.policy.lead_time, 0.0);
        let lambda = 200.0f64.sqrt() - 10.0;
        assert_relative_eq!(sol.policy.arrival_rate, lambda, epsilon = 1e-12);
        assert_relative_eq!(sol.policy.price, (30.0 - lambda) / 4.0, epsilon = 1e-12);
        assert!(sol.profit > 0.0);
    }

    #[test]
    fn rejects_other_capacities() {
        let p = base().with_capacity(2);
        assert!(matches!(solve_p1(&p), Err(Error::UnsupportedCapacity(2))));
        assert!(matches!(solve_p2(&p), Err(Error::UnsupportedCapacity(2))));
    }

    #[test]
    fn objective_examples() {
        let p = base();
        let v = objective_mm11(&Policy::new(5.5432, 0.29957, 1.8357), &p, false);
        assert!((v - 0.8425).abs() < 1e-3);
        assert_eq!(objective_mm11(&Policy::new(9.0, 0.3, 0.0), &p, true), 0.0);
        let p = MarketParams::<f64>::base_case(50.0, 10.0);
        let v = objective_mm11(&Policy::new(9.5073, 0.29957, 8.975), &p, true);
        assert!((v - 20.137).abs() < 2e-3, "{v}");
    }

    #[test]
    fn critical_level_examples() {
        let mut p = base();
        assert_relative_eq!(critical_service_level(&p).unwrap(), 0.5);
        p.lead_time_sensitivity = 2.0;
        assert_relative_eq!(critical_service_level(&p).unwrap(), 0.95);
        p.lead_time_sensitivity = 0.0;
        assert_eq!(critical_service_level(&p).unwrap(), 1.0);
        p.penalty_rate = 0.0;
        assert!(matches!(critical_service_level(&p), Err(Error::UndefinedCriticalLevel)));
    }

    #[test]
    fn p2_service_binding_example() {
        let sol = solve_p2(&MarketParams::<f64>::base_case(50.0, 10.0)).unwrap();
        assert!(sol.feasible);
        assert_eq!(sol.branch, Branch::ServiceBinding);
        assert_relative_eq!(sol.diagnostic("s_c").unwrap(), 0.75);
        assert_relative_eq!(sol.policy.lead_time, 20.0f64.ln() / 10.0, epsilon = 1e-14);
        assert!((sol.policy.arrival_rate - 8.975).abs() < 1e-3);
        assert!((sol.policy.price - 9.5073).abs() < 1e-4);
        assert!((sol.profit - 20.137).abs() < 1e-3);
    }

    #[test]
    fn p2_penalty_binding_example() {
        let sol = solve_p2(&MarketParams::<f64>::base_case(50.0, 1.0)).unwrap();
        assert_eq!(sol.branch, Branch::PenaltyBinding);
        assert_relative_eq!(sol.policy.lead_time, 40.0f64.ln() / 10.0, epsilon = 1e-14);
        assert_relative_eq!(sol.service_level_attained, 0.975, epsilon = 1e-14);
        let achieved = 1.0 - (-10.0 * sol.policy.lead_time).exp();
        assert_relative_eq!(achieved, 0.975, epsilon = 1e-12);
    }

    #[test]
    fn p2_without_costs_equals_p1() {
        for (a, b2) in [(30.0, 20.0), (50.0, 10.0), (70.0, 5.0)] {
            let p = MarketParams::<f64>::base_case(a, b2).without_costs();
            let s1 = solve_p1(&p).unwrap();
            let s2 = solve_p2(&p).unwrap();
            assert!((s1.profit - s2.profit).abs() <= 1e-10);
            assert!((s1.policy.arrival_rate - s2.policy.arrival_rate).abs() <= 1e-10);
            assert!((s1.policy.price - s2.policy.price).abs() <= 1e-10);
            assert_eq!(s1.policy.lead_time, s2.policy.lead_time);
        }
    }

    #[test]
    fn p2_lead_time_insensitive_demand() {
        let p = MarketParams::<f64>::base_case(50.0, 0.0);
        let sol = solve_p2(&p).unwrap();
        assert!(sol.feasible);
        assert_eq!(sol.branch, Branch::PenaltyBinding);
        assert_relative_eq!(10.0 * (-10.0 * sol.policy.lead_time).exp(), 1e-11, max_relative = 1e-9);
        // profit continuous as b2 -> 0
        let near = solve_p2(&MarketParams::<f64>::base_case(50.0, 1e-9)).unwrap();
        assert!((near.profit - sol.profit).abs() < 1e-6);
    }

    #[test]
    fn p2_infeasible() {
        let mut p = MarketParams::<f64>::base_case(30.0, 20.0);
        p.unit_cost = 7.0;
        let sol = solve_p2(&p).unwrap();
        assert!(!sol.feasible);
        assert_eq!(sol.profit, 0.0);
    }

    #[test]
    fn stationarity_residuals_vanish() {
        let p = base();
        let s = solve_p1(&p).unwrap();
        assert!(no_cost_stationarity_residual(s.policy.arrival_rate, &p).abs() < 1e-8);
        let p = MarketParams::<f64>::base_case(50.0, 1.0);
        let s = solve_p2(&p).unwrap();
        assert!(cost_stationarity_residual(s.policy.arrival_rate, s.policy.lead_time, &p).abs() < 1e-8);
    }

    #[test]
    fn f32_solutions_track_f64() {
        let p32: MarketParams<f32> = MarketParams::base_case(50.0, 10.0);
        let p64: MarketParams<f64> = MarketParams::<f64>::base_case(50.0, 10.0);
        let a = solve_p2(&p32).unwrap();
        let b = solve_p2(&p64).unwrap();
        assert!((a.profit as f64 - b.profit).abs() < 1e-3 * b.profit);
    }

    #[test]
    fn profit_monotone_on_grid() {
        let mut prev_f = f64::INFINITY;
        for f in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let mut p = MarketParams::<f64>::base_case(50.0, 10.0);
            p.holding_cost = f;
            let v = solve_p2(&p).unwrap().profit;
            assert!(v <= prev_f + 1e-12);
            prev_f = v;
        }
        let mut prev_c = f64::INFINITY;
        for c in [0.0, 1.0, 5.0, 10.0, 50.0, 200.0] {
            let mut p = MarketParams::<f64>::base_case(50.0, 10.0);
            p.penalty_rate = c;
            let v = solve_p2(&p).unwrap().profit;
            assert!(v <= prev_c + 1e-12);
            prev_c = v;
        }
        let mut prev_a = f64::NEG_INFINITY;
        for a in [20.0, 30.0, 40.0, 60.0, 90.0] {
            let v = solve_p2(&MarketParams::<f64>::base_case(a, 10.0)).unwrap().profit;
            assert!(v >= prev_a - 1e-12);
            prev_a = v;
        }
    }
}
