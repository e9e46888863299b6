//! Discrete-event simulation of the M/M/1/K queue under a fixed policy.
//!
//! Arrivals and services draw from two separate ChaCha streams of the same
//! seed (stream 0 for interarrival gaps, stream 1 for service times, drawn
//! at service start), so a run is bit-reproducible. The first 5% of the
//! horizon is discarded; the rest is cut into equal-length batches and
//! confidence half-widths come from the spread of the batch values.
//!
//! Job statistics (sojourn, lateness) are attributed to the batch in which
//! the job arrived. The simulator works in `f64` whatever the caller's scalar.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::market::{MarketParams, Policy};
use crate::numeric::profit_p0;
use crate::queueing;
use crate::scalar::Scalar;

pub const WARMUP_FRACTION: f64 = 0.05;
pub const DEFAULT_BATCHES: usize = 20;

/// Point estimate with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
    /// Standard error from batch means.
    pub std_error: f64,
}

impl Estimate {
    pub fn overlaps(&self, other: &Estimate) -> bool {
        (self.mean - other.mean).abs() <= self.half_width + other.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    /// Arrivals after warm-up.
    pub n_arrivals: u64,
    pub n_blocked: u64,
    /// Post-warm-up admitted jobs that completed before the horizon.
    pub n_served: u64,
    /// Post-warm-up admitted jobs still in the system at the horizon.
    pub in_system_at_end: u64,
    pub est_block_prob: Estimate,
    pub est_mean_number: Estimate,
    pub est_throughput: Estimate,
    pub est_ontime: Estimate,
    pub est_mean_sojourn: Estimate,
    /// Profit with the lateness penalty charged as `c lambda_eff P(W > l) W`.
    pub est_profit_objective_form: Estimate,
    /// Profit with the lateness penalty charged on the mean of `(W - l)+`.
    pub est_profit_exact_lateness: Estimate,
    pub seed: u64,
    pub horizon: f64,
    pub batches: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Batch {
    area: f64,
    arrivals: u64,
    blocked: u64,
    admitted: u64,
    served: u64,
    sojourn: f64,
    late: u64,
    lateness: f64,
}

struct Job {
    arrival: f64,
    /// Batch index for post-warm-up arrivals.
    batch: Option<usize>,
}

struct Clock {
    warmup: f64,
    batch_len: f64,
    batches: usize,
}

impl Clock {
    fn index(&self, t: f64) -> Option<usize> {
        if t < self.warmup {
            return None;
        }
        Some((((t - self.warmup) / self.batch_len) as usize).min(self.batches - 1))
    }

    /// Adds `n * dt` over `[t0, t1)` to the batches it overlaps.
    fn accumulate(&self, acc: &mut [Batch], t0: f64, t1: f64, n: usize) {
        if n == 0 || t1 <= self.warmup {
            return;
        }
        let mut t = t0.max(self.warmup);
        while t < t1 {
            let i = self.index(t).expect("post warm-up");
            let end = if i + 1 == self.batches {
                t1
            } else {
                (self.warmup + (i + 1) as f64 * self.batch_len).min(t1)
            };
            acc[i].area += n as f64 * (end - t);
            if end <= t {
                break;
            }
            t = end;
        }
    }
}

/// Simulates the M/M/1/K queue for `horizon` time units under `policy`.
pub fn simulate<T: Scalar>(
    policy: &Policy<T>,
    params: &MarketParams<T>,
    horizon: f64,
    seed: u64,
) -> Result<SimReport> {
    simulate_batched(policy, params, horizon, seed, DEFAULT_BATCHES)
}

pub fn simulate_batched<T: Scalar>(
    policy: &Policy<T>,
    params: &MarketParams<T>,
    horizon: f64,
    seed: u64,
    batches: usize,
) -> Result<SimReport> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidHorizon(horizon));
    }
    params.validate()?;
    if batches < 2 {
        return Err(Error::InvalidParams("at least two batches required".into()));
    }
    let policy: Policy<f64> = policy.cast();
    let params: MarketParams<f64> = params.cast();
    if !(policy.arrival_rate > 0.0) {
        return Err(Error::ZeroArrivalRate);
    }
    let capacity = params.capacity as usize;
    let lead_time = policy.lead_time;

    let mut arrival_rng = ChaCha8Rng::seed_from_u64(seed);
    arrival_rng.set_stream(0);
    let mut service_rng = ChaCha8Rng::seed_from_u64(seed);
    service_rng.set_stream(1);
    let gaps = Exp::new(policy.arrival_rate).expect("positive rate");
    let services = Exp::new(params.service_rate).expect("positive rate");

    let warmup = WARMUP_FRACTION * horizon;
    let clock = Clock {
        warmup,
        batch_len: (horizon - warmup) / batches as f64,
        batches,
    };
    let mut acc = vec![Batch::default(); batches];
    let mut queue: VecDeque<Job> = VecDeque::with_capacity(capacity);

    let mut now = 0.0;
    let mut next_arrival = gaps.sample(&mut arrival_rng);
    let mut next_departure = f64::INFINITY;

    loop {
        let t = next_arrival.min(next_departure);
        if t > horizon {
            break;
        }
        clock.accumulate(&mut acc, now, t, queue.len());
        now = t;
        if next_arrival <= next_departure {
            let batch = clock.index(now);
            if let Some(i) = batch {
                acc[i].arrivals += 1;
            }
            if queue.len() >= capacity {
                if let Some(i) = batch {
                    acc[i].blocked += 1;
                }
            } else {
                if let Some(i) = batch {
                    acc[i].admitted += 1;
                }
                if queue.is_empty() {
                    next_departure = now + services.sample(&mut service_rng);
                }
                queue.push_back(Job { arrival: now, batch });
            }
            next_arrival = now + gaps.sample(&mut arrival_rng);
        } else {
            let job = queue.pop_front().expect("departure from non-empty system");
            if let Some(i) = job.batch {
                let sojourn = now - job.arrival;
                let b = &mut acc[i];
                b.served += 1;
                b.sojourn += sojourn;
                if sojourn > lead_time {
                    b.late += 1;
                    b.lateness += sojourn - lead_time;
                }
            }
            next_departure = if queue.is_empty() {
                f64::INFINITY
            } else {
                now + services.sample(&mut service_rng)
            };
        }
    }
    clock.accumulate(&mut acc, now, horizon, queue.len());

    let total = acc.iter().fold(Batch::default(), |mut s, b| {
        s.area += b.area;
        s.arrivals += b.arrivals;
        s.blocked += b.blocked;
        s.admitted += b.admitted;
        s.served += b.served;
        s.sojourn += b.sojourn;
        s.late += b.late;
        s.lateness += b.lateness;
        s
    });
    let in_system_at_end = queue.iter().filter(|j| j.batch.is_some()).count() as u64;

    let window = horizon - warmup;
    let margin = policy.price - params.unit_cost;
    let f = params.holding_cost;
    let c = params.penalty_rate;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };

    let block_of = |b: &Batch, len: f64| {
        let _ = len;
        ratio(b.blocked as f64, b.arrivals as f64)
    };
    let number_of = |b: &Batch, len: f64| b.area / len;
    let throughput_of = |b: &Batch, len: f64| b.admitted as f64 / len;
    let ontime_of = |b: &Batch, _: f64| 1.0 - ratio(b.late as f64, b.served as f64);
    let sojourn_of = |b: &Batch, _: f64| ratio(b.sojourn, b.served as f64);
    let objective_of = |b: &Batch, len: f64| {
        let thr = throughput_of(b, len);
        let late = ratio(b.late as f64, b.served as f64);
        thr * margin - f * number_of(b, len) - c * thr * late * sojourn_of(b, len)
    };
    let exact_of = |b: &Batch, len: f64| {
        let thr = throughput_of(b, len);
        thr * margin - f * number_of(b, len) - c * thr * ratio(b.lateness, b.served as f64)
    };

    let t_crit = StudentsT::new(0.0, 1.0, (batches - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let estimate = |metric: &dyn Fn(&Batch, f64) -> f64| {
        let values: Vec<f64> = acc.iter().map(|b| metric(b, clock.batch_len)).collect();
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (n - 1.0);
        let std_error = (var / n).sqrt();
        Estimate {
            mean: metric(&total, window),
            half_width: t_crit * std_error,
            std_error,
        }
    };

    Ok(SimReport {
        n_arrivals: total.arrivals,
        n_blocked: total.blocked,
        n_served: total.served,
        in_system_at_end,
        est_block_prob: estimate(&block_of),
        est_mean_number: estimate(&number_of),
        est_throughput: estimate(&throughput_of),
        est_ontime: estimate(&ontime_of),
        est_mean_sojourn: estimate(&sojourn_of),
        est_profit_objective_form: estimate(&objective_of),
        est_profit_exact_lateness: estimate(&exact_of),
        seed,
        horizon,
        batches,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCheck {
    pub metric: String,
    pub analytic: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// Allowed absolute deviation (three standard errors).
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationVerdict {
    pub checks: Vec<MetricCheck>,
    pub pass: bool,
}

impl ValidationVerdict {
    pub fn check(&self, metric: &str) -> Option<&MetricCheck> {
        self.checks.iter().find(|c| c.metric == metric)
    }
}

/// Compares a simulation report against the analytic M/M/1/K values at 3σ.
///
/// Also checks Little's law on the estimates and, for `K = 1`, that the two
/// lateness-penalty estimators have overlapping confidence intervals.
pub fn validate<T: Scalar>(report: &SimReport, params: &MarketParams<T>, policy: &Policy<T>) -> ValidationVerdict {
    let params: MarketParams<f64> = params.cast();
    let policy: Policy<f64> = policy.cast();
    let lambda = policy.arrival_rate;
    let mu = params.service_rate;
    let k = params.capacity;

    let mut checks = Vec::new();
    let mut against = |metric: &str, analytic: f64, est: &Estimate| {
        let tolerance = 3.0 * est.std_error;
        checks.push(MetricCheck {
            metric: metric.to_string(),
            analytic,
            estimate: est.mean,
            std_error: est.std_error,
            tolerance,
            pass: (est.mean - analytic).abs() <= tolerance,
        });
    };
    against("block_prob", queueing::mm1k_blocking(lambda, mu, k), &report.est_block_prob);
    against("mean_number", queueing::mm1k_mean_number(lambda, mu, k), &report.est_mean_number);
    against("throughput", queueing::mm1k_throughput(lambda, mu, k), &report.est_throughput);
    against(
        "ontime",
        queueing::mm1k_ontime_prob(lambda, mu, k, policy.lead_time),
        &report.est_ontime,
    );
    against(
        "mean_sojourn",
        queueing::mm1k_mean_sojourn(lambda, mu, k).unwrap_or(f64::NAN),
        &report.est_mean_sojourn,
    );
    against("profit_objective_form", profit_p0(&policy, &params), &report.est_profit_objective_form);

    // Little's law: L = lambda_eff W, error propagated from both estimates
    let little_lhs = report.est_mean_number.mean;
    let little_rhs = report.est_throughput.mean * report.est_mean_sojourn.mean;
    let little_se = (report.est_mean_number.std_error.powi(2)
        + (report.est_mean_sojourn.mean * report.est_throughput.std_error).powi(2)
        + (report.est_throughput.mean * report.est_mean_sojourn.std_error).powi(2))
    .sqrt();
    checks.push(MetricCheck {
        metric: "littles_law".to_string(),
        analytic: little_rhs,
        estimate: little_lhs,
        std_error: little_se,
        tolerance: 3.0 * little_se,
        pass: (little_lhs - little_rhs).abs() <= 3.0 * little_se,
    });

    if k == 1 {
        let a = &report.est_profit_objective_form;
        let b = &report.est_profit_exact_lateness;
        checks.push(MetricCheck {
            metric: "lateness_forms_agree".to_string(),
            analytic: a.mean,
            estimate: b.mean,
            std_error: a.std_error.hypot(b.std_error),
            tolerance: a.half_width + b.half_width,
            pass: a.overlaps(b),
        });
    }

    let pass = checks.iter().all(|c| c.pass);
    ValidationVerdict { checks, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_slot() -> (MarketParams, Policy) {
        (MarketParams::<f64>::base_case(50.0, 10.0), Policy::new(9.0, 0.3, 5.0))
    }

    #[test]
    fn rejects_bad_inputs() {
        let (p, pol) = single_slot();
        assert!(matches!(simulate(&pol, &p, 0.0, 1), Err(Error::InvalidHorizon(_))));
        assert!(matches!(simulate(&pol, &p, -3.0, 1), Err(Error::InvalidHorizon(_))));
        let idle = Policy::new(9.0, 0.3, 0.0);
        assert!(matches!(simulate(&idle, &p, 10.0, 1), Err(Error::ZeroArrivalRate)));
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let (p, pol) = single_slot();
        let a = simulate(&pol, &p, 2_000.0, 42).unwrap();
        let b = simulate(&pol, &p, 2_000.0, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&pol, &p, 2_000.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn counting_identities() {
        let (mut p, pol) = single_slot();
        p.capacity = 3;
        let r = simulate(&pol, &p, 5_000.0, 7).unwrap();
        assert_eq!(r.n_arrivals, r.n_blocked + r.n_served + r.in_system_at_end);
        assert_eq!(r.est_block_prob.mean * r.n_arrivals as f64, r.n_blocked as f64);
    }

    #[test]
    fn single_slot_matches_analytics() {
        let (p, pol) = single_slot();
        let r = simulate(&pol, &p, 1e5 / 5.0 * 10.0, 11).unwrap();
        let v = validate(&r, &p, &pol);
        assert!(v.pass, "{v:#?}");
        let soj = v.check("mean_sojourn").unwrap();
        assert!((soj.analytic - 0.1).abs() < 1e-15);
        assert!(v.check("lateness_forms_agree").unwrap().pass);
    }

    #[test]
    fn corrupted_analytics_fail() {
        let (p, pol) = single_slot();
        let r = simulate(&pol, &p, 2e4, 5).unwrap();
        let mut wrong = p;
        wrong.service_rate = 12.0;
        let v = validate(&r, &wrong, &pol);
        assert!(!v.pass);
        assert!(!v.check("block_prob").unwrap().pass);
    }

    #[test]
    fn accepts_f32_inputs() {
        let p: MarketParams<f32> = MarketParams::base_case(50.0, 10.0);
        let pol = Policy::new(9.0f32, 0.3, 5.0);
        let r = simulate(&pol, &p, 1_000.0, 3).unwrap();
        assert!(r.n_arrivals > 0);
    }
}
