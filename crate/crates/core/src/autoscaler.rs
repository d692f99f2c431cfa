//! Prediction-driven vertical scaling simulator: query rate to CPU demand
//! through a profiling curve, allocation from forecasts, a utilization
//! latency law, and budget/SLO accounting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{ar_fit, ar_forecast, naive_forecast, DEFAULT_AR_ORDER, DEFAULT_DIFFERENCING};
use crate::error::{Error, Result};
use crate::fusion::ModelBundle;
use crate::series::TimeSeries;

pub const DEFAULT_BASE_RT_MS: f64 = 40.0;
pub const DEFAULT_SLO_THRESHOLDS_MS: [f64; 2] = [200.0, 250.0];
/// Floor on `1 - rho` in the latency law.
pub const RT_EPSILON: f64 = 1e-3;
pub const RHO_CAP: f64 = 0.999;
/// Relative budget agreement required after normalization.
pub const BUDGET_TOLERANCE: f64 = 0.005;

/// Monotone piecewise-linear map from query rate to CPU milli-cores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilingCurve {
    /// `(qps, cpu_milli)` with strictly increasing qps and non-decreasing cpu.
    pub knots: Vec<(f64, f64)>,
}

/// Isotonic (pool-adjacent-violators) fit, then piecewise-linear knots.
/// Samples sharing a qps value are averaged first.
pub fn fit_profile(samples: &[(f64, f64)]) -> Result<ProfilingCurve> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: samples.len(),
        });
    }
    if samples.iter().any(|(q, c)| !q.is_finite() || !c.is_finite()) {
        return Err(Error::InvalidSeries("non-finite profiling sample".into()));
    }
    if let Some(&(q, _)) = samples.iter().find(|(q, _)| *q < 0.0) {
        return Err(Error::NegativeQps(q));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // (qps, mean cpu, weight)
    let mut points: Vec<(f64, f64, f64)> = Vec::new();
    for (q, c) in sorted {
        match points.last_mut() {
            Some(last) if last.0 == q => {
                last.1 = (last.1 * last.2 + c) / (last.2 + 1.0);
                last.2 += 1.0;
            }
            _ => points.push((q, c, 1.0)),
        }
    }
    if points.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            actual: points.len(),
        });
    }

    // blocks of (value, weight, count)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new();
    for &(_, c, w) in &points {
        blocks.push((c, w, 1));
        while blocks.len() >= 2 && blocks[blocks.len() - 2].0 > blocks[blocks.len() - 1].0 {
            let (v2, w2, n2) = blocks.pop().expect("two blocks");
            let (v1, w1, n1) = blocks.pop().expect("two blocks");
            blocks.push(((v1 * w1 + v2 * w2) / (w1 + w2), w1 + w2, n1 + n2));
        }
    }
    let fitted = blocks.iter().flat_map(|&(v, _, n)| std::iter::repeat(v).take(n));
    Ok(ProfilingCurve {
        knots: points.iter().zip(fitted).map(|(p, v)| (p.0, v)).collect(),
    })
}

impl ProfilingCurve {
    pub fn validate(&self) -> Result<()> {
        let ok = self.knots.len() >= 2
            && self.knots.iter().all(|(q, c)| q.is_finite() && c.is_finite())
            && self.knots.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "profiling curve needs >= 2 knots, increasing qps, non-decreasing cpu".into(),
            ))
        }
    }
}

/// Flat below the first knot, linear through the last segment above the last.
pub fn qps_to_cpu(curve: &ProfilingCurve, qps: f64) -> Result<f64> {
    if qps < 0.0 || qps.is_nan() {
        return Err(Error::NegativeQps(qps));
    }
    let k = &curve.knots;
    if qps <= k[0].0 {
        return Ok(k[0].1);
    }
    let i = k.partition_point(|&(q, _)| q < qps).clamp(1, k.len() - 1);
    let ((q0, c0), (q1, c1)) = (k[i - 1], k[i]);
    if qps == q1 {
        return Ok(c1);
    }
    Ok(c0 + (c1 - c0) * (qps - q0) / (q1 - q0))
}

/// `base_rt / max(eps, 1 - rho)` with `rho = min(demand / alloc, RHO_CAP)`.
pub fn response_time(demand_milli: f64, alloc_milli: f64, base_rt_ms: f64) -> Result<f64> {
    if !(alloc_milli > 0.0) {
        return Err(Error::ZeroAllocation(alloc_milli));
    }
    let rho = (demand_milli.max(0.0) / alloc_milli).min(RHO_CAP);
    Ok(base_rt_ms / (1.0 - rho).max(RT_EPSILON))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingPolicy {
    /// Seconds between forecasts.
    pub prediction_cycle: u64,
    /// Seconds between allocation changes; must equal the trace interval.
    pub actuation_tick: u64,
    pub headroom_fraction: f64,
    pub min_alloc: f64,
    pub max_alloc: f64,
}

impl Default for ScalingPolicy {
    fn default() -> Self {
        Self {
            prediction_cycle: 720,
            actuation_tick: 15,
            headroom_fraction: 0.10,
            min_alloc: 100.0,
            max_alloc: 4000.0,
        }
    }
}

impl ScalingPolicy {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.actuation_tick == 0 || self.prediction_cycle == 0 || self.prediction_cycle % self.actuation_tick != 0 {
            return bad("actuation_tick must be positive and divide prediction_cycle");
        }
        if !(self.headroom_fraction >= 0.0) {
            return bad("headroom_fraction must be >= 0");
        }
        if !(self.min_alloc > 0.0 && self.min_alloc <= self.max_alloc && self.max_alloc.is_finite()) {
            return bad("need 0 < min_alloc <= max_alloc");
        }
        Ok(())
    }

    pub fn ticks_per_cycle(&self) -> usize {
        (self.prediction_cycle / self.actuation_tick) as usize
    }

    pub fn clamp(&self, alloc: f64) -> f64 {
        alloc.clamp(self.min_alloc, self.max_alloc)
    }
}

/// Source of the next cycle's query-rate forecast.
#[derive(Debug, Clone)]
pub enum Forecaster {
    /// Reads the true future.
    Oracle,
    Naive,
    Arima {
        order: usize,
        differencing: usize,
        /// Trailing points used for each per-cycle fit.
        fit_window: usize,
    },
    Bundle(Box<ModelBundle>),
}

impl Forecaster {
    pub fn arima() -> Self {
        Forecaster::Arima {
            order: DEFAULT_AR_ORDER,
            differencing: DEFAULT_DIFFERENCING,
            fit_window: 576,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Forecaster::Oracle => "oracle",
            Forecaster::Naive => "naive",
            Forecaster::Arima { .. } => "arima",
            Forecaster::Bundle(_) => "temposcale",
        }
    }

    fn forecast(&self, history: &[f64], future: &[f64], steps: usize) -> Result<Vec<f64>> {
        let out = match self {
            Forecaster::Oracle => future[..steps].to_vec(),
            Forecaster::Naive => naive_forecast(history, steps)?,
            Forecaster::Arima {
                order,
                differencing,
                fit_window,
            } => {
                let fit_on = &history[history.len().saturating_sub(*fit_window)..];
                let model = ar_fit(fit_on, *order, *differencing)?;
                ar_forecast(&model, history, steps)?
            }
            Forecaster::Bundle(bundle) => {
                let h = bundle.history_len();
                if history.len() < h {
                    return Err(Error::InsufficientHistory {
                        needed: h,
                        actual: history.len(),
                    });
                }
                let stats = bundle.stats;
                let window: Vec<f64> = history[history.len() - h..].iter().map(|&v| stats.normalize(v)).collect();
                let pred = bundle.predict_normalized(&[&window])?;
                let pred: Vec<f64> = pred[0].iter().map(|&z| stats.denormalize(z)).collect();
                (0..steps).map(|k| pred[k.min(pred.len() - 1)]).collect()
            }
        };
        if out.len() != steps || out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Forecaster(format!("{} produced an invalid forecast", self.name())));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSetup {
    pub curve: ProfilingCurve,
    pub policy: ScalingPolicy,
    pub base_rt_ms: f64,
    pub slo_thresholds_ms: Vec<f64>,
    /// Leading trace points used only as forecast history.
    pub warmup_ticks: usize,
}

impl Default for SimulationSetup {
    fn default() -> Self {
        Self {
            curve: demo_profile(),
            policy: ScalingPolicy::default(),
            base_rt_ms: DEFAULT_BASE_RT_MS,
            slo_thresholds_ms: DEFAULT_SLO_THRESHOLDS_MS.to_vec(),
            warmup_ticks: 192,
        }
    }
}

/// Roughly linear CPU profile used when no measured profile is supplied.
pub fn demo_profile() -> ProfilingCurve {
    ProfilingCurve {
        knots: vec![(0.0, 50.0), (100.0, 500.0), (200.0, 1000.0), (400.0, 2200.0)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub time: i64,
    pub qps: f64,
    pub demand_milli: f64,
    pub alloc_milli: f64,
    pub response_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SloViolation {
    pub threshold_ms: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub forecaster: String,
    pub per_tick: Vec<TickRecord>,
    pub avg_rt: f64,
    /// Nearest-rank 99th percentile.
    pub p99_rt: f64,
    pub max_rt: f64,
    pub slo_violation: Vec<SloViolation>,
    /// Milli-core seconds: sum of allocation times tick length.
    pub cpu_budget: f64,
    /// Milli-core seconds actually consumed: min(demand, allocation).
    pub cpu_usage: f64,
    /// Cycles where the forecaster failed and persistence was used.
    pub fallback_cycles: usize,
    /// Factor applied by budget normalization, 1 when not normalized.
    pub budget_scale: f64,
}

impl SimulationReport {
    pub fn violation_rate(&self, threshold_ms: f64) -> Option<f64> {
        self.slo_violation
            .iter()
            .find(|v| v.threshold_ms == threshold_ms)
            .map(|v| v.rate)
    }

    /// Aggregate rows as `(label, value)`.
    pub fn summary_rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("Average Response Time (ms)".to_string(), self.avg_rt),
            ("P99 Response Time (ms)".to_string(), self.p99_rt),
            ("Max Response Time (ms)".to_string(), self.max_rt),
        ];
        let mut slo = self.slo_violation.clone();
        slo.sort_by(|a, b| b.threshold_ms.total_cmp(&a.threshold_ms));
        for v in slo {
            rows.push((format!("SLO ({} ms) Violation", v.threshold_ms), v.rate));
        }
        rows.push(("CPU Budget (m·s)".to_string(), self.cpu_budget));
        rows.push(("CPU Usage (m·s)".to_string(), self.cpu_usage));
        rows
    }
}

/// Allocation schedule produced by one forecaster over the simulated ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub forecaster: String,
    pub alloc: Vec<f64>,
    pub fallback_cycles: usize,
}

fn check_setup(trace: &TimeSeries, setup: &SimulationSetup) -> Result<()> {
    setup.policy.validate()?;
    setup.curve.validate()?;
    if !(setup.base_rt_ms > 0.0) || setup.slo_thresholds_ms.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::InvalidConfig("base_rt_ms and SLO thresholds must be positive".into()));
    }
    if trace.interval() as u64 != setup.policy.actuation_tick {
        return Err(Error::InvalidConfig(format!(
            "trace interval {} s differs from the actuation tick {} s",
            trace.interval(),
            setup.policy.actuation_tick
        )));
    }
    if let Some(&q) = trace.values().iter().find(|&&q| q < 0.0) {
        return Err(Error::NegativeQps(q));
    }
    let needed = setup.warmup_ticks.max(1) + setup.policy.ticks_per_cycle();
    if trace.len() < needed {
        return Err(Error::SeriesTooShort {
            needed,
            actual: trace.len(),
        });
    }
    Ok(())
}

fn first_tick(setup: &SimulationSetup) -> usize {
    setup.warmup_ticks.max(1)
}

/// Runs the forecaster once per cycle on the trailing history and turns its
/// query-rate forecast into clamped allocations for every tick of the cycle.
pub fn plan_allocations(trace: &TimeSeries, forecaster: &Forecaster, setup: &SimulationSetup) -> Result<AllocationPlan> {
    check_setup(trace, setup)?;
    let q = trace.values();
    let per_cycle = setup.policy.ticks_per_cycle();
    let start = first_tick(setup);
    let mut alloc = Vec::with_capacity(q.len() - start);
    let mut fallback_cycles = 0;
    let mut t = start;
    while t < q.len() {
        let steps = per_cycle.min(q.len() - t);
        let history = &q[..t];
        let forecast = match forecaster.forecast(history, &q[t..], steps) {
            Ok(f) => f,
            Err(e) => {
                log::warn!("cycle at tick {t}: {e}; using persistence");
                fallback_cycles += 1;
                naive_forecast(history, steps)?
            }
        };
        for qps in forecast {
            let demand = qps_to_cpu(&setup.curve, qps.max(0.0))?;
            alloc.push(setup.policy.clamp(demand * (1.0 + setup.policy.headroom_fraction)));
        }
        t += steps;
    }
    Ok(AllocationPlan {
        forecaster: forecaster.name().to_string(),
        alloc,
        fallback_cycles,
    })
}

/// Replays an allocation schedule against the true trace.
pub fn replay(trace: &TimeSeries, plan: &AllocationPlan, budget_scale: f64, setup: &SimulationSetup) -> Result<SimulationReport> {
    check_setup(trace, setup)?;
    let start = first_tick(setup);
    let q = trace.values();
    if plan.alloc.len() != q.len() - start {
        return Err(Error::ShapeMismatch(format!(
            "{} allocations for {} simulated ticks",
            plan.alloc.len(),
            q.len() - start
        )));
    }
    let dt = setup.policy.actuation_tick as f64;
    let mut per_tick = Vec::with_capacity(plan.alloc.len());
    for (k, &alloc) in plan.alloc.iter().enumerate() {
        let i = start + k;
        let demand = qps_to_cpu(&setup.curve, q[i])?.max(0.0);
        per_tick.push(TickRecord {
            time: trace.time_at(i),
            qps: q[i],
            demand_milli: demand,
            alloc_milli: alloc,
            response_ms: response_time(demand, alloc, setup.base_rt_ms)?,
        });
    }
    let n = per_tick.len() as f64;
    let mut rts: Vec<f64> = per_tick.iter().map(|r| r.response_ms).collect();
    let avg_rt = rts.iter().sum::<f64>() / n;
    rts.sort_by(f64::total_cmp);
    let rank = ((0.99 * n).ceil() as usize).clamp(1, rts.len());
    let slo_violation = setup
        .slo_thresholds_ms
        .iter()
        .map(|&thr| SloViolation {
            threshold_ms: thr,
            rate: per_tick.iter().filter(|r| r.response_ms > thr).count() as f64 / n,
        })
        .collect();
    Ok(SimulationReport {
        forecaster: plan.forecaster.clone(),
        avg_rt,
        p99_rt: rts[rank - 1],
        max_rt: rts[rts.len() - 1],
        slo_violation,
        cpu_budget: schedule_budget(&plan.alloc, dt),
        cpu_usage: per_tick.iter().map(|r| r.demand_milli.min(r.alloc_milli) * dt).sum(),
        fallback_cycles: plan.fallback_cycles,
        budget_scale,
        per_tick,
    })
}

pub fn simulate(trace: &TimeSeries, forecaster: &Forecaster, setup: &SimulationSetup) -> Result<SimulationReport> {
    let plan = plan_allocations(trace, forecaster, setup)?;
    replay(trace, &plan, 1.0, setup)
}

/// Sum of allocation times tick length, accumulated in tick order.
pub fn schedule_budget(alloc: &[f64], tick_s: f64) -> f64 {
    alloc.iter().map(|a| a * tick_s).sum()
}

/// Scales every schedule by one factor each so its budget matches the first
/// (reference) schedule within `BUDGET_TOLERANCE`, clamping to the policy
/// bounds. When clamping moves the budget outside tolerance the factor is
/// refined by bisection. Returns the scaled schedules and their factors.
pub fn normalize_budget(schedules: &[Vec<f64>], policy: &ScalingPolicy) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    policy.validate()?;
    if schedules.len() < 2 {
        return Err(Error::InvalidConfig("budget normalization needs at least 2 schedules".into()));
    }
    let dt = policy.actuation_tick as f64;
    let len = schedules[0].len();
    if schedules.iter().any(|s| s.len() != len) {
        return Err(Error::ShapeMismatch("schedules differ in length".into()));
    }
    for (index, s) in schedules.iter().enumerate() {
        if !(schedule_budget(s, dt) > 0.0) {
            return Err(Error::ZeroBudget { index });
        }
    }
    let scaled_budget = |s: &[f64], f: f64| -> f64 { s.iter().map(|a| policy.clamp(a * f) * dt).sum() };
    let target = scaled_budget(&schedules[0], 1.0);
    let within = |b: f64| (b - target).abs() <= BUDGET_TOLERANCE * target;

    let mut out = Vec::with_capacity(schedules.len());
    let mut factors = Vec::with_capacity(schedules.len());
    for (index, s) in schedules.iter().enumerate() {
        let mut f = target / schedule_budget(s, dt);
        if !within(scaled_budget(s, f)) {
            let (mut lo, mut hi) = (0.0, f);
            while scaled_budget(s, hi) < target {
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::BudgetUnreachable { index });
                }
            }
            if scaled_budget(s, lo) > target * (1.0 + BUDGET_TOLERANCE) {
                return Err(Error::BudgetUnreachable { index });
            }
            for _ in 0..200 {
                f = 0.5 * (lo + hi);
                let b = scaled_budget(s, f);
                if within(b) {
                    break;
                }
                if b < target {
                    lo = f;
                } else {
                    hi = f;
                }
            }
            if !within(scaled_budget(s, f)) {
                return Err(Error::BudgetUnreachable { index });
            }
        }
        out.push(s.iter().map(|a| policy.clamp(a * f)).collect());
        factors.push(f);
    }
    Ok((out, factors))
}

/// Plans every forecaster in parallel, normalizes all budgets to the first
/// forecaster's, and replays each schedule.
pub fn simulate_normalized(
    trace: &TimeSeries,
    forecasters: &[Forecaster],
    setup: &SimulationSetup,
) -> Result<Vec<SimulationReport>> {
    let plans: Vec<AllocationPlan> = forecasters
        .par_iter()
        .map(|f| plan_allocations(trace, f, setup))
        .collect::<Result<_>>()?;
    let schedules: Vec<Vec<f64>> = plans.iter().map(|p| p.alloc.clone()).collect();
    let (scaled, factors) = normalize_budget(&schedules, &setup.policy)?;
    plans
        .into_par_iter()
        .zip(scaled)
        .zip(factors)
        .map(|((plan, alloc), factor)| replay(trace, &AllocationPlan { alloc, ..plan }, factor, setup))
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::synthetic::{bursty_qps, BurstyConfig};

    fn curve() -> ProfilingCurve {
        fit_profile(&[(0.0, 100.0), (10.0, 200.0), (30.0, 600.0)]).unwrap()
    }

    fn trace(values: Vec<f64>) -> TimeSeries {
        TimeSeries::new(0, 15, values).unwrap()
    }

    fn small_setup() -> SimulationSetup {
        SimulationSetup {
            policy: ScalingPolicy {
                prediction_cycle: 60,
                ..ScalingPolicy::default()
            },
            warmup_ticks: 8,
            ..SimulationSetup::default()
        }
    }

    #[test]
    fn profile_identities() {
        let c = curve();
        assert_eq!(c.knots, vec![(0.0, 100.0), (10.0, 200.0), (30.0, 600.0)]);
        assert_eq!(qps_to_cpu(&c, 10.0).unwrap(), 200.0);
        assert_eq!(qps_to_cpu(&c, 20.0).unwrap(), 400.0);
        assert_eq!(qps_to_cpu(&c, 40.0).unwrap(), 800.0);
        let shifted = fit_profile(&[(5.0, 70.0), (10.0, 90.0)]).unwrap();
        assert_eq!(qps_to_cpu(&shifted, 0.0).unwrap(), 70.0);
        assert!(matches!(qps_to_cpu(&c, -1.0), Err(Error::NegativeQps(_))));
    }

    #[test]
    fn pav_pools_violators() {
        let c = fit_profile(&[(10.0, 50.0), (20.0, 40.0)]).unwrap();
        assert_eq!(c.knots, vec![(10.0, 45.0), (20.0, 45.0)]);
        let c = fit_profile(&[(1.0, 1.0), (2.0, 5.0), (3.0, 2.0), (4.0, 3.0), (5.0, 9.0)]).unwrap();
        let fitted: Vec<f64> = c.knots.iter().map(|k| k.1).collect();
        assert_eq!(fitted, vec![1.0, 10.0 / 3.0, 10.0 / 3.0, 10.0 / 3.0, 9.0]);
        assert!(fit_profile(&[(1.0, 1.0)]).is_err());
        assert!(fit_profile(&[(1.0, 1.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn latency_law() {
        assert_eq!(response_time(0.0, 500.0, 40.0).unwrap(), 40.0);
        assert!((response_time(250.0, 500.0, 40.0).unwrap() - 80.0).abs() < 1e-12);
        assert!((response_time(999.0, 1000.0, 40.0).unwrap() - 40_000.0).abs() < 1e-6);
        assert!((response_time(5000.0, 1000.0, 40.0).unwrap() - 40_000.0).abs() < 1e-6);
        assert!(matches!(response_time(1.0, 0.0, 40.0), Err(Error::ZeroAllocation(_))));
    }

    #[test]
    fn policy_checks() {
        assert!(ScalingPolicy::default().validate().is_ok());
        assert_eq!(ScalingPolicy::default().ticks_per_cycle(), 48);
        let bad = ScalingPolicy { prediction_cycle: 100, ..ScalingPolicy::default() };
        assert!(bad.validate().is_err());
        let bad = ScalingPolicy { min_alloc: 5000.0, ..ScalingPolicy::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_load_trace() {
        let setup = SimulationSetup {
            curve: fit_profile(&[(0.0, 0.0), (10.0, 100.0)]).unwrap(),
            ..small_setup()
        };
        let r = simulate(&trace(vec![0.0; 40]), &Forecaster::Naive, &setup).unwrap();
        assert_eq!(r.avg_rt, setup.base_rt_ms);
        assert_eq!(r.cpu_usage, 0.0);
        assert!(r.slo_violation.iter().all(|v| v.rate == 0.0));
    }

    #[test]
    fn oracle_with_headroom_bounds_utilization() {
        let setup = small_setup();
        let q = bursty_qps(&BurstyConfig { len: 400, ..BurstyConfig::default() }, 3);
        let r = simulate(&trace(q), &Forecaster::Oracle, &setup).unwrap();
        let h = setup.policy.headroom_fraction;
        for t in r.per_tick.iter().filter(|t| t.demand_milli <= setup.policy.max_alloc / (1.0 + h)) {
            assert!(t.demand_milli / t.alloc_milli <= 1.0 / (1.0 + h) + 1e-12);
        }
    }

    #[test]
    fn failing_forecaster_falls_back_per_cycle() {
        let mut setup = small_setup();
        setup.warmup_ticks = 4;
        let q = bursty_qps(&BurstyConfig { len: 40, ..BurstyConfig::default() }, 1);
        let arima = Forecaster::Arima { order: 8, differencing: 1, fit_window: 100 };
        let r = simulate(&trace(q.clone()), &arima, &setup).unwrap();
        let naive = simulate(&trace(q), &Forecaster::Naive, &setup).unwrap();
        assert!(r.fallback_cycles >= 1);
        assert_eq!(r.per_tick[0], naive.per_tick[0]);
    }

    #[test]
    fn simulate_rejects_bad_inputs() {
        let setup = small_setup();
        assert!(matches!(simulate(&trace(vec![1.0; 5]), &Forecaster::Naive, &setup), Err(Error::SeriesTooShort { .. })));
        let mut q = vec![1.0; 40];
        q[3] = -1.0;
        assert!(matches!(simulate(&trace(q), &Forecaster::Naive, &setup), Err(Error::NegativeQps(_))));
        let wrong_tick = TimeSeries::new(0, 60, vec![1.0; 40]).unwrap();
        assert!(simulate(&wrong_tick, &Forecaster::Naive, &setup).is_err());
    }

    #[test]
    fn normalization_examples() {
        let p = ScalingPolicy { min_alloc: 1.0, max_alloc: 1e9, ..ScalingPolicy::default() };
        let a = vec![100.0, 200.0, 300.0];
        let (_, f) = normalize_budget(&[a.clone(), a.clone()], &p).unwrap();
        assert_eq!(f, vec![1.0, 1.0]);
        let double: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
        let (s, f) = normalize_budget(&[a.clone(), double], &p).unwrap();
        assert_eq!(f, vec![1.0, 0.5]);
        assert_eq!(s[1], a);
        assert!(matches!(normalize_budget(&[a.clone(), vec![0.0; 3]], &p), Err(Error::ZeroBudget { index: 1 })));
        assert!(normalize_budget(&[a], &p).is_err());
    }

    #[test]
    fn normalization_refines_through_clamping() {
        let p = ScalingPolicy { min_alloc: 100.0, max_alloc: 1000.0, ..ScalingPolicy::default() };
        let reference = vec![900.0, 900.0, 900.0, 900.0];
        let peaky = vec![100.0, 100.0, 100.0, 1000.0];
        let (s, f) = normalize_budget(&[reference.clone(), peaky], &p).unwrap();
        let target = schedule_budget(&reference, 15.0);
        let got = schedule_budget(&s[1], 15.0);
        assert!((got - target).abs() <= BUDGET_TOLERANCE * target, "{got} vs {target}");
        assert!(f[1] > 0.0);
        let sparse = vec![0.5, 0.0, 0.0, 0.0];
        assert!(matches!(
            normalize_budget(&[reference, sparse], &p),
            Err(Error::BudgetUnreachable { index: 1 })
        ));
    }

    #[test]
    fn normalized_simulation_conserves_budget() {
        let setup = small_setup();
        let q = bursty_qps(&BurstyConfig { len: 300, ..BurstyConfig::default() }, 5);
        let reports = simulate_normalized(&trace(q), &[Forecaster::Oracle, Forecaster::Naive], &setup).unwrap();
        let dt = setup.policy.actuation_tick as f64;
        for r in &reports {
            let alloc: Vec<f64> = r.per_tick.iter().map(|t| t.alloc_milli).collect();
            assert_eq!(r.cpu_budget, schedule_budget(&alloc, dt));
            assert!(r.cpu_usage <= r.cpu_budget);
        }
        let (a, b) = (reports[0].cpu_budget, reports[1].cpu_budget);
        assert!((a - b).abs() <= BUDGET_TOLERANCE * a);
        assert_eq!(reports[0].budget_scale, 1.0);
    }

    #[test]
    fn summary_rows_are_labelled() {
        let q = bursty_qps(&BurstyConfig { len: 100, ..BurstyConfig::default() }, 2);
        let r = simulate(&trace(q), &Forecaster::Naive, &small_setup()).unwrap();
        let labels: Vec<String> = r.summary_rows().into_iter().map(|r| r.0).collect();
        assert!(labels.contains(&"SLO (200 ms) Violation".to_string()));
        assert!(labels.contains(&"CPU Budget (m·s)".to_string()));
        assert_eq!(r.violation_rate(250.0), Some(r.slo_violation[1].rate));
    }

    fn brute_force(curve: &ProfilingCurve, q: f64) -> f64 {
        let k = &curve.knots;
        if q <= k[0].0 {
            return k[0].1;
        }
        for w in k.windows(2) {
            if q >= w[0].0 && q <= w[1].0 {
                return w[0].1 + (w[1].1 - w[0].1) * (q - w[0].0) / (w[1].0 - w[0].0);
            }
        }
        let (a, b) = (k[k.len() - 2], k[k.len() - 1]);
        b.1 + (b.1 - a.1) * (q - b.0) / (b.0 - a.0)
    }

    fn samples() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0f64..500.0, 0.0f64..4000.0), 2..20)
    }

    proptest! {
        #[test]
        fn profile_is_monotone_and_matches_segment_search(s in samples(), q in 0.0f64..800.0, dq in 0.0f64..50.0) {
            prop_assume!(s.iter().any(|p| p.0 != s[0].0));
            let c = fit_profile(&s).unwrap();
            c.validate().unwrap();
            let (a, b) = (qps_to_cpu(&c, q).unwrap(), qps_to_cpu(&c, q + dq).unwrap());
            prop_assert!(b >= a - 1e-9);
            let want = brute_force(&c, q);
            prop_assert!((a - want).abs() <= 1e-9 * want.abs().max(1.0));
        }

        #[test]
        fn latency_monotonicity(d in 0.0f64..5000.0, dd in 0.0f64..500.0, a in 1.0f64..5000.0, da in 0.0f64..500.0) {
            let r = response_time(d, a, 40.0).unwrap();
            prop_assert!(response_time(d + dd, a, 40.0).unwrap() >= r);
            prop_assert!(response_time(d, a + da, 40.0).unwrap() <= r);
        }

        #[test]
        fn report_invariants_and_determinism(seed in 0u64..200, bump in 0.0f64..300.0) {
            let setup = small_setup();
            let q = bursty_qps(&BurstyConfig { len: 120, ..BurstyConfig::default() }, seed);
            let t = trace(q);
            let r = simulate(&t, &Forecaster::Naive, &setup).unwrap();
            prop_assert_eq!(&r, &simulate(&t, &Forecaster::Naive, &setup).unwrap());
            prop_assert!(r.cpu_usage <= r.cpu_budget);
            prop_assert!(r.p99_rt <= r.max_rt && r.avg_rt <= r.max_rt);
            for v in &r.slo_violation {
                prop_assert!((0.0..=1.0).contains(&v.rate));
            }
            let plan = plan_allocations(&t, &Forecaster::Naive, &setup).unwrap();
            let higher = AllocationPlan { alloc: plan.alloc.iter().map(|a| a + bump).collect(), ..plan.clone() };
            let (lo, hi) = (replay(&t, &plan, 1.0, &setup).unwrap(), replay(&t, &higher, 1.0, &setup).unwrap());
            for (x, y) in lo.per_tick.iter().zip(&hi.per_tick) {
                prop_assert!(y.response_ms <= x.response_ms);
            }
        }
    }
}
