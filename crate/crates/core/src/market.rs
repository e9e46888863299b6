//! Exogenous market parameters, the linear demand law and the feasibility
//! gates for the single-slot (K = 1) problems.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute slack used when checking feasibility inequalities.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Exogenous constants of the make-to-order firm and its market.
///
/// Serialized as a flat JSON object with the keys `a, b1, b2, mu, m, s, F, c, K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Scalar")]
pub struct MarketParams<T = f64> {
    /// Market potential: demand at zero price and zero lead time.
    #[serde(rename = "a")]
    pub market_potential: T,
    /// Demand lost per currency unit of price.
    #[serde(rename = "b1")]
    pub price_sensitivity: T,
    /// Demand lost per time unit of quoted lead time.
    #[serde(rename = "b2")]
    pub lead_time_sensitivity: T,
    /// Mean service rate (production capacity).
    #[serde(rename = "mu")]
    pub service_rate: T,
    /// Unit direct variable cost.
    #[serde(rename = "m")]
    pub unit_cost: T,
    /// Minimum probability that a job meets its quoted lead time.
    #[serde(rename = "s")]
    pub service_level: T,
    /// Holding cost per job per unit time in the system.
    #[serde(rename = "F")]
    pub holding_cost: T,
    /// Penalty per job per unit time of lateness.
    #[serde(rename = "c")]
    pub penalty_rate: T,
    /// Maximum number of jobs in the system, including the one in service.
    #[serde(rename = "K")]
    pub capacity: u32,
}

/// A decision triple: price, quoted lead time and demand (arrival) rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Policy<T = f64> {
    pub price: T,
    pub lead_time: T,
    pub arrival_rate: T,
}

impl<T: Scalar> Policy<T> {
    pub fn new(price: T, lead_time: T, arrival_rate: T) -> Self {
        Self {
            price,
            lead_time,
            arrival_rate,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Policy<U> {
        Policy {
            price: U::lit(self.price.as_f64()),
            lead_time: U::lit(self.lead_time.as_f64()),
            arrival_rate: U::lit(self.arrival_rate.as_f64()),
        }
    }

    pub fn is_non_negative(&self) -> bool {
        self.price >= T::zero() && self.lead_time >= T::zero() && self.arrival_rate >= T::zero()
    }
}

impl<T: Scalar> MarketParams<T> {
    /// Comparison base case used throughout: `b1 = 4, mu = 10, s = 0.95, m = 5,
    /// F = 2, c = 10, K = 1`, with the given market potential and lead-time
    /// sensitivity.
    pub fn base_case(market_potential: T, lead_time_sensitivity: T) -> Self {
        Self {
            market_potential,
            price_sensitivity: T::lit(4.0),
            lead_time_sensitivity,
            service_rate: T::lit(10.0),
            unit_cost: T::lit(5.0),
            service_level: T::lit(0.95),
            holding_cost: T::lit(2.0),
            penalty_rate: T::lit(10.0),
            capacity: 1,
        }
    }

    /// Same parameters with holding and penalty costs removed.
    pub fn without_costs(mut self) -> Self {
        self.holding_cost = T::zero();
        self.penalty_rate = T::zero();
        self
    }

    pub fn with_capacity(mut self, capacity: u32) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn cast<U: Scalar>(&self) -> MarketParams<U> {
        MarketParams {
            market_potential: U::lit(self.market_potential.as_f64()),
            price_sensitivity: U::lit(self.price_sensitivity.as_f64()),
            lead_time_sensitivity: U::lit(self.lead_time_sensitivity.as_f64()),
            service_rate: U::lit(self.service_rate.as_f64()),
            unit_cost: U::lit(self.unit_cost.as_f64()),
            service_level: U::lit(self.service_level.as_f64()),
            holding_cost: U::lit(self.holding_cost.as_f64()),
            penalty_rate: U::lit(self.penalty_rate.as_f64()),
            capacity: self.capacity,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let zero = T::zero();
        let mut problems = Vec::new();
        if !(self.market_potential > zero) {
            problems.push("a must be > 0");
        }
        if !(self.price_sensitivity > zero) {
            problems.push("b1 must be > 0");
        }
        if !(self.lead_time_sensitivity >= zero) {
            problems.push("b2 must be >= 0");
        }
        if !(self.service_rate > zero) {
            problems.push("mu must be > 0");
        }
        if !(self.unit_cost >= zero) {
            problems.push("m must be >= 0");
        }
        if !(self.service_level >= zero && self.service_level < T::one()) {
            problems.push("s must lie in [0, 1)");
        }
        if !(self.holding_cost >= zero) {
            problems.push("F must be >= 0");
        }
        if !(self.penalty_rate >= zero) {
            problems.push("c must be >= 0");
        }
        if self.capacity < 1 {
            problems.push("K must be >= 1");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }

    /// `z = ln(1 / (1 - s))`, the service-rate-scaled minimum lead time for a
    /// single-slot system.
    pub fn service_factor(&self) -> T {
        -(-self.service_level).ln_1p()
    }

    /// Linear demand `a - b1 p - b2 l`, clamped at zero.
    pub fn expected_demand(&self, price: T, lead_time: T) -> T {
        let raw = self.market_potential
            - self.price_sensitivity * price
            - self.lead_time_sensitivity * lead_time;
        raw.max(T::zero())
    }

    /// Price at which demand equals `arrival_rate` for the given lead time.
    pub fn inverse_price(&self, arrival_rate: T, lead_time: T) -> Result<T> {
        let p = self.price_unchecked(arrival_rate, lead_time);
        if p < -T::lit(FEASIBILITY_SLACK) {
            return Err(Error::InfeasiblePrice(p.as_f64()));
        }
        Ok(p.max(T::zero()))
    }

    /// `(a - b2 l - lambda) / b1` without the sign check.
    pub(crate) fn price_unchecked(&self, arrival_rate: T, lead_time: T) -> T {
        (self.market_potential - self.lead_time_sensitivity * lead_time - arrival_rate)
            / self.price_sensitivity
    }

    /// Whether some demand rate yields non-negative profit when holding and
    /// penalty costs are absent.
    pub fn feasible_no_costs(&self) -> bool {
        let z = self.service_factor();
        let mu = self.service_rate;
        let max_margin_price = (self.market_potential * mu - self.lead_time_sensitivity * z)
            / (mu * self.price_sensitivity);
        max_margin_price - self.unit_cost >= -T::lit(FEASIBILITY_SLACK)
    }

    /// Feasibility of the single-slot problem with costs at lead time `lead_time`.
    pub fn feasible_with_costs(&self, lead_time: T) -> bool {
        let slack = -T::lit(FEASIBILITY_SLACK);
        let price_ok = (self.market_potential - self.lead_time_sensitivity * lead_time)
            / self.price_sensitivity
            - self.unit_cost
            >= slack;
        price_ok && self.cost_margin(lead_time) >= slack
    }

    /// `a mu - mu b2 l - mu m b1 - F b1 - c b1 e^{-mu l}`: the constant term of
    /// the first-order condition in the demand rate.
    pub(crate) fn cost_margin(&self, lead_time: T) -> T {
        let mu = self.service_rate;
        let b1 = self.price_sensitivity;
        self.market_potential * mu
            - mu * self.lead_time_sensitivity * lead_time
            - mu * self.unit_cost * b1
            - self.holding_cost * b1
            - self.penalty_rate * b1 * (-mu * lead_time).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> MarketParams {
        MarketParams::base_case(30.0, 20.0)
    }

    #[test]
    fn demand_at_base_optimum() {
        let d = base().expected_demand(5.5432, 0.29957);
        assert!((d - 1.8357).abs() < 1e-3, "{d}");
    }

    #[test]
    fn demand_intercept_and_zero() {
        let p = base();
        assert_eq!(p.expected_demand(0.0, 0.0), 30.0);
        assert_eq!(p.expected_demand(30.0 / 4.0, 0.0), 0.0);
        assert_eq!(p.expected_demand(100.0, 5.0), 0.0);
    }

    #[test]
    fn inverse_price_examples() {
        let p = base();
        let price = p.inverse_price(1.8357, 0.29957).unwrap();
        assert!((price - 5.5432).abs() < 1e-3, "{price}");
        assert_eq!(p.inverse_price(0.0, 0.0).unwrap(), 7.5);
        assert_eq!(p.inverse_price(30.0 - 20.0 * 0.5, 0.5).unwrap(), 0.0);
        assert!(matches!(
            p.inverse_price(31.0, 0.0),
            Err(Error::InfeasiblePrice(_))
        ));
    }

    #[test]
    fn prop1_gate() {
        assert!(base().feasible_no_costs());
        let mut p = base();
        p.unit_cost = 6.01;
        assert!(!p.feasible_no_costs());
        p.unit_cost = 1e9;
        assert!(!p.feasible_no_costs());
        // threshold (300 - 20 z) / 40
        let threshold = (300.0 - 20.0 * (20.0f64).ln()) / 40.0;
        assert_relative_eq!(threshold, 6.00215, epsilon = 1e-4);
    }

    #[test]
    fn prop3_gate() {
        let p = MarketParams::base_case(50.0, 10.0);
        assert!(p.feasible_with_costs(0.29957));
        assert_relative_eq!(p.cost_margin(0.29957), 260.04, epsilon = 1e-2);

        let p = MarketParams::base_case(30.0, 20.0);
        assert!(!p.feasible_with_costs(1.5));

        let p = MarketParams::base_case(30.0, 20.0).without_costs();
        assert!(p.feasible_with_costs(0.2));
    }

    #[test]
    fn service_factor_is_log_ratio() {
        assert_relative_eq!(base().service_factor(), 20.0f64.ln(), epsilon = 1e-14);
        let mut p = base();
        p.service_level = 0.0;
        assert_eq!(p.service_factor(), 0.0);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut p = base();
        assert!(p.validate().is_ok());
        p.price_sensitivity = 0.0;
        p.service_level = 1.0;
        p.capacity = 0;
        let msg = p.validate().unwrap_err().to_string();
        assert!(msg.contains("b1") && msg.contains("s must") && msg.contains("K"));
    }

    #[test]
    fn json_field_names() {
        let json = serde_json::to_value(base()).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["F", "K", "a", "b1", "b2", "c", "m", "mu", "s"]);
        let bad = r#"{"a":1,"b1":1,"b2":1,"mu":1,"m":1,"s":0.5,"F":0,"c":0,"K":1,"x":2}"#;
        assert!(serde_json::from_str::<MarketParams>(bad).is_err());
    }

    #[test]
    fn works_in_f32() {
        let p: MarketParams<f32> = MarketParams::base_case(30.0, 20.0);
        assert!(p.feasible_no_costs());
        assert!((p.service_factor() - 2.9957).abs() < 1e-4);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = MarketParams> {
            (1.0..100.0f64, 0.1..10.0f64, 0.0..30.0f64, 0.5..20.0f64, 0.0..10.0f64, 0.0..0.99f64)
                .prop_map(|(a, b1, b2, mu, m, s)| MarketParams {
                    market_potential: a,
                    price_sensitivity: b1,
                    lead_time_sensitivity: b2,
                    service_rate: mu,
                    unit_cost: m,
                    service_level: s,
                    holding_cost: 0.0,
                    penalty_rate: 0.0,
                    capacity: 1,
                })
        }

        proptest! {
            #[test]
            fn demand_non_increasing(p in params(), price in 0.0..20.0f64, l in 0.0..2.0f64, dp in 0.0..5.0f64, dl in 0.0..1.0f64) {
                prop_assert!(p.expected_demand(price + dp, l) <= p.expected_demand(price, l));
                prop_assert!(p.expected_demand(price, l + dl) <= p.expected_demand(price, l));
            }

            #[test]
            fn inverse_round_trips(p in params(), price in 0.0..20.0f64, l in 0.0..2.0f64) {
                let demand = p.market_potential - p.price_sensitivity * price - p.lead_time_sensitivity * l;
                prop_assume!(demand > 0.0);
                let back = p.inverse_price(p.expected_demand(price, l), l).unwrap();
                prop_assert!((back - price).abs() <= 1e-9 * price.abs().max(1.0));
            }

            #[test]
            fn prop1_monotone(p in params(), dm in 0.0..5.0f64, da in 0.0..20.0f64) {
                if !p.feasible_no_costs() {
                    let mut q = p;
                    q.unit_cost += dm;
                    prop_assert!(!q.feasible_no_costs());
                    let mut q = p;
                    q.market_potential = (q.market_potential - da).max(1e-3);
                    prop_assert!(!q.feasible_no_costs());
                }
            }
        }
    }
}
