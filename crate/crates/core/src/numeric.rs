//! Numerical solvers: the general M/M/1/K problem, the accept-all M/M/1
//! baselines, and a brute-force grid oracle used to certify closed forms.
//!
//! The solvers take the demand constraint as binding, so a policy is fixed by
//! `(lambda, l)` and the price follows from the demand law. The search runs
//! over `lambda` and the slack `l - l_min(lambda)` above the shortest
//! service-compliant quote, which keeps the service-binding frontier on the
//! grid. A coarse grid spanning the whole feasible box is followed by
//! shrinking local grids around the incumbent.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{objective_mm11, Branch, Solution};
use crate::error::Result;
use crate::market::{MarketParams, Policy};
use crate::queueing::{self, QueueMetrics};
use crate::scalar::Scalar;

/// Largest admissible M/M/1 arrival rate is `mu - STABILITY_MARGIN`.
pub const STABILITY_MARGIN: f64 = 1e-6;

/// Slack below which the service constraint is reported as binding.
const BINDING_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SolverConfig<T = f64> {
    /// Coarse grid intervals along the demand rate.
    pub grid_lambda: usize,
    /// Coarse grid intervals along the lead-time slack.
    pub grid_lead_time: usize,
    pub refine_iterations: usize,
    /// Factor applied to the local step each refinement round.
    pub refine_shrink: T,
    /// Stop refining once a round gains less than this and the demand-rate
    /// step is below it too.
    pub tolerance: T,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            grid_lambda: 400,
            grid_lead_time: 400,
            refine_iterations: 12,
            refine_shrink: T::lit(0.25),
            tolerance: T::lit(1e-9),
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.grid_lambda > 0
            && self.grid_lead_time > 0
            && self.refine_shrink > T::zero()
            && self.refine_shrink < T::one()
            && self.tolerance > T::zero();
        if ok {
            Ok(())
        } else {
            Err(crate::Error::InvalidParams(format!("invalid solver config {self:?}")))
        }
    }
}

/// Profit rate of an M/M/1/K policy: throughput margin minus holding cost on
/// the mean number in system minus the lateness penalty `c lambda_eff P(W > l) W`.
pub fn profit_p0<T: Scalar>(policy: &Policy<T>, params: &MarketParams<T>) -> T {
    let lambda = policy.arrival_rate;
    if !(lambda > T::zero()) {
        return T::zero();
    }
    let q = QueueMetrics::mm1k(lambda, params.service_rate, params.capacity, policy.lead_time);
    let late = T::one() - q.ontime;
    q.lambda_eff * (policy.price - params.unit_cost)
        - q.l_s * params.holding_cost
        - params.penalty_rate * q.lambda_eff * late * q.w
}

/// Profit rate of an accept-all M/M/1 policy; `None` when unstable.
pub fn profit_mm1<T: Scalar>(policy: &Policy<T>, params: &MarketParams<T>, costs_on: bool) -> Option<T> {
    let lambda = policy.arrival_rate;
    let gap = params.service_rate - lambda;
    if !(gap > T::zero()) {
        return None;
    }
    let revenue = lambda * (policy.price - params.unit_cost);
    if !costs_on {
        return Some(revenue);
    }
    let holding = params.holding_cost * lambda / gap;
    let penalty = params.penalty_rate * lambda * (-gap * policy.lead_time).exp() / gap;
    Some(revenue - holding - penalty)
}

/// A point of the search space with its profit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<T> {
    pub lambda: T,
    pub lead_time: T,
    /// `lead_time - l_min(lambda)`.
    pub slack: T,
    pub profit: T,
}

/// Higher profit wins; ties go to the smaller demand rate, then the shorter quote.
fn pick<T: Scalar>(a: Option<Candidate<T>>, b: Option<Candidate<T>>) -> Option<Candidate<T>> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            let a_wins = a.profit > b.profit
                || (a.profit == b.profit
                    && (a.lambda < b.lambda || (a.lambda == b.lambda && a.lead_time <= b.lead_time)));
            Some(if a_wins { a } else { b })
        }
    }
}

/// Outcome of a two-phase search, with the incumbent profit after the coarse
/// phase and after each refinement round.
#[derive(Debug, Clone)]
pub struct SearchTrace<T> {
    pub best: Candidate<T>,
    pub history: Vec<T>,
    pub evaluations: usize,
}

/// A profit surface over `(lambda, l)` with a per-lambda feasible lead-time
/// interval `[l_min, l_min + span]`.
pub(crate) trait Landscape<T: Scalar>: Sync {
    type Row: Send;

    fn lambda_max(&self) -> T;

    /// Per-lambda precomputation; `None` when `lambda` is inadmissible.
    fn row(&self, lambda: T) -> Option<Self::Row>;

    /// `(l_min, span)` of the row.
    fn lead_time_range(&self, row: &Self::Row) -> (T, T);

    /// Profit at lead time `l`; `None` when the implied price is negative.
    fn profit(&self, row: &Self::Row, lead_time: T) -> Option<T>;

    fn service_level(&self, row: &Self::Row, lead_time: T) -> T;
}

fn lead_time_cap<T: Scalar>(params: &MarketParams<T>, l_min: T, horizon: T) -> T {
    if params.lead_time_sensitivity > T::zero() {
        (params.market_potential / params.lead_time_sensitivity - l_min).max(T::zero())
    } else {
        horizon
    }
}

struct MmkLandscape<'a, T> {
    params: &'a MarketParams<T>,
}

struct MmkRow<T> {
    lambda: T,
    lambda_eff: T,
    l_s: T,
    w: T,
    weights: Vec<T>,
    l_min: T,
    span: T,
}

impl<T: Scalar> Landscape<T> for MmkLandscape<'_, T> {
    type Row = MmkRow<T>;

    fn lambda_max(&self) -> T {
        self.params.market_potential
    }

    fn row(&self, lambda: T) -> Option<MmkRow<T>> {
        let p = self.params;
        let mu = p.service_rate;
        let q = QueueMetrics::mm1k(lambda, mu, p.capacity, T::zero());
        let weights = queueing::admitted_weights(lambda, mu, p.capacity);
        let l_min = queueing::min_lead_time_from_weights(&weights, mu, p.service_level);
        let horizon = T::from_usize_lossy(p.capacity as usize + 40) / mu;
        Some(MmkRow {
            lambda,
            lambda_eff: q.lambda_eff,
            l_s: q.l_s,
            w: q.w,
            weights,
            l_min,
            span: lead_time_cap(p, l_min, horizon),
        })
    }

    fn lead_time_range(&self, row: &MmkRow<T>) -> (T, T) {
        (row.l_min, row.span)
    }

    fn profit(&self, row: &MmkRow<T>, lead_time: T) -> Option<T> {
        let p = self.params;
        let price = p.price_unchecked(row.lambda, lead_time);
        if price < T::zero() {
            return None;
        }
        if !(row.lambda > T::zero()) {
            return Some(T::zero());
        }
        let late = queueing::late_prob_from_weights(&row.weights, p.service_rate * lead_time);
        Some(
            row.lambda_eff * (price - p.unit_cost)
                - row.l_s * p.holding_cost
                - p.penalty_rate * row.lambda_eff * late * row.w,
        )
    }

    fn service_level(&self, row: &MmkRow<T>, lead_time: T) -> T {
        T::one() - queueing::late_prob_from_weights(&row.weights, self.params.service_rate * lead_time)
    }
}

struct Mm1Landscape<'a, T> {
    params: &'a MarketParams<T>,
    costs_on: bool,
}

struct Mm1Row<T> {
    lambda: T,
    l_min: T,
    span: T,
}

impl<T: Scalar> Landscape<T> for Mm1Landscape<'_, T> {
    type Row = Mm1Row<T>;

    fn lambda_max(&self) -> T {
        let p = self.params;
        p.market_potential.min(p.service_rate - T::lit(STABILITY_MARGIN))
    }

    fn row(&self, lambda: T) -> Option<Mm1Row<T>> {
        let p = self.params;
        let gap = p.service_rate - lambda;
        if gap < T::lit(STABILITY_MARGIN) * (T::one() - T::lit(1e-9)) {
            return None;
        }
        let l_min = p.service_factor() / gap;
        // without costs the service constraint is taken as binding
        let span = if self.costs_on {
            lead_time_cap(p, l_min, T::lit(40.0) / gap)
        } else {
            T::zero()
        };
        Some(Mm1Row { lambda, l_min, span })
    }

    fn lead_time_range(&self, row: &Mm1Row<T>) -> (T, T) {
        (row.l_min, row.span)
    }

    fn profit(&self, row: &Mm1Row<T>, lead_time: T) -> Option<T> {
        let p = self.params;
        let price = p.price_unchecked(row.lambda, lead_time);
        if price < T::zero() {
            return None;
        }
        profit_mm1(&Policy::new(price, lead_time, row.lambda), p, self.costs_on)
    }

    fn service_level(&self, row: &Mm1Row<T>, lead_time: T) -> T {
        T::one() - (-(self.params.service_rate - row.lambda) * lead_time).exp()
    }
}

fn evaluate_row<T: Scalar, L: Landscape<T>>(
    land: &L,
    row: &L::Row,
    lambda: T,
    slacks: impl Iterator<Item = T>,
) -> (Option<Candidate<T>>, usize) {
    let (l_min, _) = land.lead_time_range(row);
    let mut best = None;
    let mut count = 0;
    for slack in slacks {
        count += 1;
        let lead_time = l_min + slack;
        let cand = land.profit(row, lead_time).map(|profit| Candidate {
            lambda,
            lead_time,
            slack,
            profit,
        });
        best = pick(best, cand);
    }
    (best, count)
}

pub(crate) fn two_phase_search<T: Scalar, L: Landscape<T>>(
    land: &L,
    config: &SolverConfig<T>,
) -> Option<SearchTrace<T>> {
    let lambda_max = land.lambda_max();
    if !(lambda_max >= T::zero()) {
        return None;
    }
    let n_lambda = config.grid_lambda;
    let n_slack = config.grid_lead_time;
    let mut step_lambda = lambda_max / T::from_usize_lossy(n_lambda);

    let (coarse, mut evaluations) = (0..=n_lambda)
        .into_par_iter()
        .map(|i| {
            let lambda = if i == n_lambda {
                lambda_max
            } else {
                step_lambda * T::from_usize_lossy(i)
            };
            match land.row(lambda) {
                None => (None, 0),
                Some(row) => {
                    let (_, span) = land.lead_time_range(&row);
                    let n = if span > T::zero() { n_slack } else { 0 };
                    let step = if n > 0 { span / T::from_usize_lossy(n) } else { T::zero() };
                    let slacks = (0..=n).map(move |j| {
                        if j == n {
                            span
                        } else {
                            step * T::from_usize_lossy(j)
                        }
                    });
                    evaluate_row(land, &row, lambda, slacks)
                }
            }
        })
        .reduce(|| (None, 0), |(a, na), (b, nb)| (pick(a, b), na + nb));

    let mut best = coarse?;
    let mut history = vec![best.profit];
    let mut step_slack = land
        .row(best.lambda)
        .map(|row| land.lead_time_range(&row).1 / T::from_usize_lossy(n_slack))
        .unwrap_or_else(T::zero);

    let reach = (T::one() / config.refine_shrink).ceil().to_i64().unwrap_or(4).max(1);
    for _ in 0..config.refine_iterations {
        step_lambda = step_lambda * config.refine_shrink;
        step_slack = step_slack * config.refine_shrink;
        let before = best.profit;
        let center = best;
        for i in -reach..=reach {
            let lambda = (center.lambda + step_lambda * T::lit(i as f64))
                .max(T::zero())
                .min(lambda_max);
            let Some(row) = land.row(lambda) else { continue };
            let (_, span) = land.lead_time_range(&row);
            let slacks = (-reach..=reach).map(|j| {
                (center.slack + step_slack * T::lit(j as f64)).max(T::zero()).min(span)
            });
            let (local, n) = evaluate_row(land, &row, lambda, slacks);
            evaluations += n;
            best = pick(Some(best), local).unwrap_or(best);
        }
        history.push(best.profit);
        if best.profit - before < config.tolerance && step_lambda < config.tolerance {
            break;
        }
    }
    Some(SearchTrace {
        best,
        history,
        evaluations,
    })
}

fn solution_from_search<T: Scalar, L: Landscape<T>>(
    land: &L,
    params: &MarketParams<T>,
    trace: Option<SearchTrace<T>>,
) -> Solution<T> {
    let Some(trace) = trace else {
        return Solution::infeasible(params);
    };
    let best = trace.best;
    if !(best.lambda > T::zero() && best.profit >= T::zero()) {
        return Solution::infeasible(params);
    }
    let row = land.row(best.lambda).expect("incumbent row is admissible");
    let (l_min, _) = land.lead_time_range(&row);
    let price = params.price_unchecked(best.lambda, best.lead_time).max(T::zero());
    let branch = if best.slack <= T::lit(BINDING_SLACK) {
        Branch::ServiceBinding
    } else {
        Branch::PenaltyBinding
    };
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("z".to_string(), params.service_factor());
    diagnostics.insert("l_min".to_string(), l_min);
    diagnostics.insert("slack".to_string(), best.slack);
    diagnostics.insert("evaluations".to_string(), T::from_usize_lossy(trace.evaluations));
    diagnostics.insert(
        "refine_rounds".to_string(),
        T::from_usize_lossy(trace.history.len() - 1),
    );
    Solution {
        policy: Policy::new(price, best.lead_time, best.lambda),
        profit: best.profit,
        feasible: true,
        service_level_attained: land.service_level(&row, best.lead_time),
        branch,
        diagnostics,
    }
}

/// Search trace of the general M/M/1/K problem, exposed for diagnostics.
pub fn search_p0<T: Scalar>(params: &MarketParams<T>, config: &SolverConfig<T>) -> Result<Option<SearchTrace<T>>> {
    params.validate()?;
    config.validate()?;
    Ok(two_phase_search(&MmkLandscape { params }, config))
}

/// Maximizes the M/M/1/K profit over `(lambda, l)` subject to the service
/// constraint on the admitted-job sojourn distribution.
pub fn solve_p0_numeric<T: Scalar>(params: &MarketParams<T>, config: &SolverConfig<T>) -> Result<Solution<T>> {
    params.validate()?;
    config.validate()?;
    let land = MmkLandscape { params };
    let trace = two_phase_search(&land, config);
    Ok(solution_from_search(&land, params, trace))
}

/// Optimal accept-all (M/M/1) policy.
///
/// Without costs the profit `lambda (p - m)` is maximized along the binding
/// service frontier `l = z / (mu - lambda)`. With costs the holding term
/// `F lambda / (mu - lambda)` and the penalty `c lambda e^{-(mu - lambda) l} / (mu - lambda)`
/// are subtracted and the quote is searched above that frontier.
pub fn solve_mm1_baseline<T: Scalar>(
    params: &MarketParams<T>,
    costs_on: bool,
    config: &SolverConfig<T>,
) -> Result<Solution<T>> {
    params.validate()?;
    config.validate()?;
    let land = Mm1Landscape { params, costs_on };
    let trace = two_phase_search(&land, config);
    Ok(solution_from_search(&land, params, trace))
}

/// Model whose profit surface the brute-force oracle scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleModel {
    Mm11NoCosts,
    Mm11Costs,
    Mm1k,
    Mm1,
}

/// Exhaustive scan of the raw `(lambda, l)` box at `resolution` intervals per
/// axis, checking every constraint pointwise, then ten fixed rounds of local
/// refinement around the incumbent. `Mm1k` and `Mm1` use the cost
/// coefficients present in `params`.
pub fn brute_force_oracle<T: Scalar>(
    params: &MarketParams<T>,
    model: OracleModel,
    resolution: usize,
) -> Solution<T> {
    const STAGES: usize = 10;
    const SHRINK: f64 = 0.25;
    const REACH: i64 = 4;

    let mu = params.service_rate;
    let s = params.service_level;
    let lambda_hi = match model {
        OracleModel::Mm1 => params.market_potential.min(mu - T::lit(STABILITY_MARGIN)),
        _ => params.market_potential,
    };
    let l_hi = if params.lead_time_sensitivity > T::zero() {
        params.market_potential / params.lead_time_sensitivity
    } else {
        T::from_usize_lossy(params.capacity as usize + 40) / mu * T::lit(10.0)
    };

    let evaluate = |lambda: T, lead_time: T| -> Option<(T, T)> {
        let price = params.price_unchecked(lambda, lead_time);
        if price < T::zero() || lambda < T::zero() || lead_time < T::zero() {
            return None;
        }
        let policy = Policy::new(price, lead_time, lambda);
        let (ontime, profit) = match model {
            OracleModel::Mm11NoCosts | OracleModel::Mm11Costs => (
                T::one() - (-mu * lead_time).exp(),
                objective_mm11(&policy, params, model == OracleModel::Mm11Costs),
            ),
            OracleModel::Mm1k => (
                queueing::mm1k_ontime_prob(lambda, mu, params.capacity, lead_time),
                profit_p0(&policy, params),
            ),
            OracleModel::Mm1 => (
                queueing::mm1_ontime_prob(lambda, mu, lead_time).ok()?,
                profit_mm1(&policy, params, true)?,
            ),
        };
        (ontime >= s).then_some((profit, ontime))
    };
    let scan = |lambda: T, lead_time: T| {
        evaluate(lambda, lead_time).map(|(profit, _)| Candidate {
            lambda,
            lead_time,
            slack: T::zero(),
            profit,
        })
    };

    let n = resolution.max(1);
    let mut h_lambda = lambda_hi / T::from_usize_lossy(n);
    let mut h_l = l_hi / T::from_usize_lossy(n);
    let coarse = (0..=n)
        .into_par_iter()
        .map(|i| {
            let lambda = h_lambda * T::from_usize_lossy(i);
            (0..=n)
                .map(|j| scan(lambda, h_l * T::from_usize_lossy(j)))
                .fold(None, pick)
        })
        .reduce(|| None, pick);

    let Some(mut best) = coarse else {
        return Solution::infeasible(params);
    };
    for _ in 0..STAGES {
        h_lambda = h_lambda * T::lit(SHRINK);
        h_l = h_l * T::lit(SHRINK);
        let center = best;
        for i in -REACH..=REACH {
            for j in -REACH..=REACH {
                let lambda = (center.lambda + h_lambda * T::lit(i as f64)).min(lambda_hi);
                let lead_time = (center.lead_time + h_l * T::lit(j as f64)).min(l_hi);
                best = pick(Some(best), scan(lambda, lead_time)).unwrap_or(best);
            }
        }
    }

    if !(best.lambda > T::zero() && best.profit >= T::zero()) {
        return Solution::infeasible(params);
    }
    let (_, ontime) = evaluate(best.lambda, best.lead_time).expect("incumbent is feasible");
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("z".to_string(), params.service_factor());
    diagnostics.insert("resolution".to_string(), T::from_usize_lossy(n));
    Solution {
        policy: Policy::new(
            params.price_unchecked(best.lambda, best.lead_time),
            best.lead_time,
            best.lambda,
        ),
        profit: best.profit,
        feasible: true,
        service_level_attained: ontime,
        branch: if ontime - s <= T::lit(1e-6) {
            Branch::ServiceBinding
        } else {
            Branch::PenaltyBinding
        },
        diagnostics,
    }
}
