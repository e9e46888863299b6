//! Self-certification suite run by `mto-quote validate`: closed forms against
//! the brute-force oracle, queueing formulas against a direct solve of the
//! birth-death balance equations, numeric solvers against closed forms, and
//! simulation against analytics.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::closed_form::{
    cost_stationarity_residual, no_cost_stationarity_residual, objective_mm11, solve_p1, solve_p2,
};
use crate::market::{MarketParams, Policy};
use crate::numeric::{brute_force_oracle, profit_p0, solve_p0_numeric, OracleModel, SolverConfig};
use crate::queueing;
use crate::sim;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyOptions {
    /// Random instances per closed-form check.
    pub instances: usize,
    pub oracle_resolution: usize,
    /// Target arrivals per simulated policy.
    pub sim_arrivals: f64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            instances: 100,
            oracle_resolution: 200,
            sim_arrivals: 1e6,
            seed: 2016,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificationReport {
    pub properties: Vec<PropertyResult>,
    pub pass: bool,
}

/// Draws a random parameter set; callers filter for feasibility.
pub fn random_instance<R: Rng>(rng: &mut R, costs: bool) -> MarketParams {
    MarketParams {
        market_potential: rng.random_range(20.0..80.0),
        price_sensitivity: rng.random_range(1.0..8.0),
        lead_time_sensitivity: rng.random_range(0.5..25.0),
        service_rate: rng.random_range(2.0..20.0),
        unit_cost: rng.random_range(0.0..5.0),
        service_level: rng.random_range(0.5..0.99),
        holding_cost: if costs { rng.random_range(0.0..5.0) } else { 0.0 },
        penalty_rate: if costs { rng.random_range(0.0..30.0) } else { 0.0 },
        capacity: 1,
    }
}

/// Draws until `n` instances pass `keep`.
pub fn feasible_instances(
    seed: u64,
    n: usize,
    costs: bool,
    keep: impl Fn(&MarketParams) -> bool,
) -> Vec<MarketParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = random_instance(&mut rng, costs);
        if keep(&p) {
            out.push(p);
        }
    }
    out
}

/// Stationary distribution of the M/M/1/K chain from the generator matrix,
/// with one balance equation replaced by normalization.
pub fn balance_equation_distribution(lambda: f64, mu: f64, capacity: u32) -> Vec<f64> {
    let n = capacity as usize + 1;
    // rows of Q^T: (Q^T pi)_j = 0
    let mut a = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        if j > 0 {
            a[(j, j - 1)] += lambda;
            a[(j - 1, j - 1)] -= lambda;
        }
        if j + 1 < n {
            a[(j, j + 1)] += mu;
            a[(j + 1, j + 1)] -= mu;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = a.lu().solve(&rhs).expect("irreducible chain");
    sol.iter().copied().collect()
}

fn record(out: &mut Vec<PropertyResult>, name: &str, pass: bool, detail: String) {
    out.push(PropertyResult {
        name: name.to_string(),
        pass,
        detail,
    });
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn pure_rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn run_certification(opts: &CertifyOptions) -> CertificationReport {
    let mut props = Vec::new();

    let p1_set = feasible_instances(opts.seed, opts.instances, false, |p| p.feasible_no_costs());
    let mut worst = 0.0f64;
    let mut worst_resid = 0.0f64;
    for p in &p1_set {
        let cf = solve_p1(p).expect("valid instance");
        let or = brute_force_oracle(p, OracleModel::Mm11NoCosts, opts.oracle_resolution);
        worst = worst.max(rel_err(or.profit, cf.profit));
        worst_resid = worst_resid.max(no_cost_stationarity_residual(cf.policy.arrival_rate, p).abs());
    }
    record(&mut props, "p1_matches_oracle", worst <= 1e-4, format!("max relative gap {worst:.3e}"));
    record(&mut props, "p1_stationarity", worst_resid <= 1e-8, format!("max residual {worst_resid:.3e}"));

    let p2_set = feasible_instances(opts.seed + 1, opts.instances, true, |p| {
        solve_p2(p).map(|s| s.feasible).unwrap_or(false)
    });
    let mut worst = 0.0f64;
    let mut worst_resid = 0.0f64;
    for p in &p2_set {
        let cf = solve_p2(p).expect("valid instance");
        let or = brute_force_oracle(p, OracleModel::Mm11Costs, opts.oracle_resolution);
        worst = worst.max(rel_err(or.profit, cf.profit));
        worst_resid = worst_resid.max(
            cost_stationarity_residual(cf.policy.arrival_rate, cf.policy.lead_time, p).abs(),
        );
    }
    record(&mut props, "p2_matches_oracle", worst <= 1e-4, format!("max relative gap {worst:.3e}"));
    record(&mut props, "p2_stationarity", worst_resid <= 1e-8, format!("max residual {worst_resid:.3e}"));

    let mut branch_ok = true;
    for b2 in [0.5, 1.0, 1.5, 1.9, 2.1, 3.0, 10.0, 20.0] {
        let p: MarketParams = MarketParams::base_case(50.0, b2);
        let s = solve_p2(&p).expect("valid instance");
        let attained = 1.0 - (-p.service_rate * s.policy.lead_time).exp();
        let target = if b2 < 2.0 { 1.0 - b2 / 40.0 } else { 0.95 };
        branch_ok &= (attained - target).abs() <= 1e-10;
    }
    record(&mut props, "service_level_dichotomy", branch_ok, "b2 around b1 c (1 - s) = 2".into());

    let mut worst = 0.0f64;
    for k in [1u32, 2, 5, 20, 200] {
        for lambda in [0.5, 3.0, 9.0, 10.0, 12.0, 30.0] {
            let mu = 10.0;
            let pi = balance_equation_distribution(lambda, mu, k);
            let l_s: f64 = pi.iter().enumerate().map(|(i, p)| i as f64 * p).sum();
            let p_k = pi[k as usize];
            worst = worst
                .max((queueing::mm1k_blocking(lambda, mu, k) - p_k).abs())
                .max((queueing::mm1k_mean_number(lambda, mu, k) - l_s).abs())
                .max((queueing::mm1k_throughput(lambda, mu, k) - lambda * (1.0 - p_k)).abs());
        }
    }
    record(&mut props, "queueing_balance_equations", worst <= 1e-10, format!("max abs gap {worst:.3e}"));

    let mut worst = 0.0f64;
    for lambda in [1.0, 5.0, 8.0, 9.0] {
        let mu = 10.0;
        let l = queueing::mm1k_mean_number(lambda, mu, 200);
        let w = queueing::mm1k_mean_sojourn(lambda, mu, 200).expect("positive rate");
        worst = worst
            .max(pure_rel_err(l, queueing::mm1_mean_number(lambda, mu).expect("stable")))
            .max(pure_rel_err(w, queueing::mm1_mean_sojourn(lambda, mu).expect("stable")));
    }
    record(&mut props, "large_capacity_limit", worst <= 1e-6, format!("max relative gap {worst:.3e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 2);
    let base: MarketParams = MarketParams::base_case(50.0, 10.0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let pol = Policy::new(rng.random_range(0.0..15.0), rng.random_range(0.0..1.0), rng.random_range(0.0..30.0));
        worst = worst.max(rel_err(profit_p0(&pol, &base), objective_mm11(&pol, &base, true)));
    }
    record(&mut props, "k1_objective_reduction", worst <= 1e-12, format!("max scaled gap {worst:.3e}"));

    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for (a, b2) in [(30.0, 20.0), (50.0, 10.0), (50.0, 1.0), (70.0, 5.0)] {
        let p: MarketParams = MarketParams::base_case(a, b2);
        let num = solve_p0_numeric(&p, &cfg).expect("valid instance");
        worst = worst.max(rel_err(num.profit, solve_p2(&p).expect("valid").profit));
        let bare = p.without_costs();
        let num = solve_p0_numeric(&bare, &cfg).expect("valid instance");
        worst = worst.max(rel_err(num.profit, solve_p1(&bare).expect("valid").profit));
    }
    record(&mut props, "numeric_matches_closed_form", worst <= 1e-3, format!("max relative gap {worst:.3e}"));

    let mut sim_ok = true;
    let mut failed = Vec::new();
    for (i, (k, lambda, l)) in [(1u32, 5.0, 0.3), (1, 12.0, 0.2), (3, 5.0, 0.3), (3, 9.0, 0.5), (10, 8.0, 0.8)]
        .into_iter()
        .enumerate()
    {
        let p = base.with_capacity(k);
        let pol = Policy::new(9.0, l, lambda);
        let horizon = opts.sim_arrivals / lambda / (1.0 - sim::WARMUP_FRACTION);
        let report = sim::simulate(&pol, &p, horizon, opts.seed + 10 + i as u64).expect("valid");
        let verdict = sim::validate(&report, &p, &pol);
        if !verdict.pass {
            sim_ok = false;
            failed.extend(
                verdict
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| format!("K={k} lambda={lambda}: {}", c.metric)),
            );
        }
    }
    record(
        &mut props,
        "simulation_agrees",
        sim_ok,
        if failed.is_empty() { "all metrics within 3 sigma".into() } else { failed.join(", ") },
    );

    let pass = props.iter().all(|p| p.pass);
    CertificationReport {
        properties: props,
        pass,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balance_solution_sums_to_one() {
        let pi = balance_equation_distribution(7.0, 10.0, 5);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let direct = queueing::stationary_distribution(7.0, 10.0, 5);
        for (a, b) in pi.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quick_certification_passes() {
        let opts = CertifyOptions {
            instances: 5,
            oracle_resolution: 150,
            sim_arrivals: 2e5,
            seed: 9,
        };
        let report = run_certification(&opts);
        assert!(report.pass, "{report:#?}");
    }
}
