//! Time and money budgets: throughput profiling, fixed-price plans, and
//! spot-price plans simulated hour by hour.

use std::io::{Read, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::coding::CodeBook;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::knn::{accuracy, classify, maintain_state, KnnQuery};

const EPS: f64 = 1e-9;

/// Cost and quality of the result produced at one depth during profiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthCost {
    pub depth: usize,
    pub scanned: usize,
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfiledResult {
    pub depth: usize,
    pub quality: f64,
    /// Share of the profiling run's scanned nodes spent on this result.
    pub time_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputProfile {
    pub nodes_per_second: f64,
    pub results: Vec<ProfiledResult>,
}

impl ThroughputProfile {
    pub fn read_json<R: Read>(input: R) -> Result<Self> {
        let p: Self = serde_json::from_reader(input)?;
        if !(p.nodes_per_second > 0.0) {
            return Err(Error::invalid("profile throughput must be positive"));
        }
        Ok(p)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

pub fn calibrate(costs: &[DepthCost], elapsed: Duration) -> Result<ThroughputProfile> {
    if costs.is_empty() {
        return Err(Error::invalid("profiling needs at least one result"));
    }
    let secs = elapsed.as_secs_f64();
    if secs <= 0.0 {
        return Err(Error::ClockResolution);
    }
    let total: usize = costs.iter().map(|c| c.scanned).sum();
    Ok(ThroughputProfile {
        nodes_per_second: total as f64 / secs,
        results: costs
            .iter()
            .map(|c| ProfiledResult {
                depth: c.depth,
                quality: c.quality,
                time_fraction: if total == 0 {
                    0.0
                } else {
                    c.scanned as f64 / total as f64
                },
            })
            .collect(),
    })
}

/// Times sequential refinement through every code for each sample point.
pub fn profile_knn(
    book: &CodeBook,
    sample: &LabeledDataset,
    k: usize,
) -> Result<ThroughputProfile> {
    if sample.is_empty() {
        return Err(Error::invalid("profiling needs at least one sample query"));
    }
    let codes = book.codes();
    let mut scanned = vec![0usize; codes.len()];
    let mut predicted = vec![Vec::with_capacity(sample.len()); codes.len()];
    let start = Instant::now();
    for p in sample.points() {
        let q = KnnQuery::new(&p.features, k);
        let mut state = None;
        for (j, code) in codes.iter().enumerate() {
            let r = classify(book, code, &q, state.as_ref())?;
            scanned[j] += r.scanned;
            predicted[j].push(r.predicted);
            state = Some(maintain_state(book, code, &q, &r));
        }
    }
    let elapsed = start.elapsed();
    let actual: Vec<_> = sample.points().iter().map(|p| p.label).collect();
    let costs = codes
        .iter()
        .zip(scanned)
        .zip(&predicted)
        .map(|((code, s), pred)| {
            Ok(DepthCost {
                depth: code.depth,
                scanned: s,
                quality: accuracy(pred, &actual)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    calibrate(&costs, elapsed)
}

/// Nodes processable within `seconds`.
pub fn length_budget(seconds: f64, profile: &ThroughputProfile) -> usize {
    if seconds <= 0.0 {
        return 0;
    }
    (seconds * profile.nodes_per_second + EPS).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub fixed: f64,
    /// Spot price for each hour of the day.
    pub spot: [f64; 24],
}

impl PriceSchedule {
    pub fn new(fixed: f64, spot: [f64; 24]) -> Result<Self> {
        if !(fixed > 0.0) || spot.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("prices must be positive and finite"));
        }
        Ok(Self { fixed, spot })
    }

    /// Reads `hour,price` rows for hours 0 to 23.
    pub fn read_spot_csv<R: Read>(fixed: f64, input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let mut spot = [f64::NAN; 24];
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |message: &str| Error::Parse {
                line,
                message: message.to_string(),
            };
            let hour: usize = rec
                .get(0)
                .and_then(|h| h.parse().ok())
                .ok_or_else(|| bad("bad hour"))?;
            let price: f64 = rec
                .get(1)
                .and_then(|p| p.parse().ok())
                .ok_or_else(|| bad("bad price"))?;
            if hour >= 24 {
                return Err(bad("hour must lie in 0..=23"));
            }
            if !spot[hour].is_nan() {
                return Err(bad("hour listed twice"));
            }
            spot[hour] = price;
        }
        if let Some(h) = spot.iter().position(|p| p.is_nan()) {
            return Err(Error::invalid(format!("spot schedule misses hour {h}")));
        }
        Self::new(fixed, spot)
    }

    /// Distinct spot prices, ascending.
    pub fn levels(&self) -> Vec<f64> {
        let mut v = self.spot.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    /// Largest level not above `price`.
    fn snap_down(&self, price: f64) -> Option<f64> {
        self.levels().into_iter().rev().find(|&l| l <= price + EPS)
    }

    fn available(&self, hour: usize, bid: f64) -> bool {
        self.spot[hour % 24] <= bid + EPS
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Availability {
    pub hours: Vec<usize>,
    pub per_day: usize,
}

/// Hours of the day whose spot price the bid covers.
pub fn spot_availability(schedule: &PriceSchedule, bid: f64) -> Availability {
    let hours: Vec<usize> = (0..24).filter(|&h| schedule.available(h, bid)).collect();
    Availability {
        per_day: hours.len(),
        hours,
    }
}

/// A completed run's quality and the cumulative execution hours to reach it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedResult {
    pub quality: f64,
    pub cumulative_hours: f64,
}

/// Reads `quality,cumulative_hours` rows with a header.
pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<PlannedResult>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let num = |c: usize| -> Result<f64> {
            rec.get(c)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("column {} is not a number", c + 1),
                })
        };
        out.push(PlannedResult {
            quality: num(0)?,
            cumulative_hours: num(1)?,
        });
    }
    check_results(&out)?;
    Ok(out)
}

fn check_results(results: &[PlannedResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::invalid("no results to plan over"));
    }
    if results.iter().any(|r| !(r.cumulative_hours > 0.0)) {
        return Err(Error::invalid("execution hours must be positive"));
    }
    if results
        .windows(2)
        .any(|w| w[1].cumulative_hours < w[0].cumulative_hours)
    {
        return Err(Error::invalid(
            "results must be ordered by cumulative execution hours",
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "kebab-case")]
pub enum PlanQuery {
    MaxQualityWithinBudget {
        budget: f64,
    },
    MinInvestmentForQuality {
        quality: f64,
        budget: Option<f64>,
    },
    /// Spot only: cheapest bid finishing the target result by the deadline.
    MinBidForDeadline {
        quality: Option<f64>,
    },
    /// Continue while each step's elasticity stays at or above `floor`.
    ElasticityConstrained {
        floor: f64,
        budget: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotOptions {
    pub deadline_hours: f64,
    /// Bid for the first result in elasticity-constrained mode; defaults to
    /// the highest schedule price.
    pub initial_bid: Option<f64>,
    /// Charge per suspend/resume cycle.
    pub overhead_per_cycle: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Fixed,
    Spot,
}

/// One result in a multi-step (elasticity-constrained) plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    /// 1-based result index.
    pub result: usize,
    pub quality: f64,
    pub price: f64,
    pub incremental_hours: f64,
    pub incremental_investment: f64,
    pub investment: f64,
    /// Elasticity of this step, absent for the first result.
    pub elasticity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanAnswer {
    pub scheme: Scheme,
    pub feasible: bool,
    /// The constraint that made the query infeasible or stopped a multi-step plan.
    pub binding: Option<String>,
    /// 1-based index of the chosen result.
    pub result: Option<usize>,
    pub quality: Option<f64>,
    pub price: Option<f64>,
    pub investment: Option<f64>,
    pub execution_hours: Option<f64>,
    /// Hours charged: execution hours under fixed pricing, granted hours
    /// before the deadline under spot pricing.
    pub billed_hours: Option<f64>,
    pub suspended_hours: Option<f64>,
    pub elapsed_hours: Option<f64>,
    pub hours_per_day: Option<usize>,
    pub steps: Vec<PlanStep>,
}

impl PlanAnswer {
    fn infeasible(scheme: Scheme, binding: impl Into<String>) -> Self {
        Self {
            scheme,
            feasible: false,
            binding: Some(binding.into()),
            result: None,
            quality: None,
            price: None,
            investment: None,
            execution_hours: None,
            billed_hours: None,
            suspended_hours: None,
            elapsed_hours: None,
            hours_per_day: None,
            steps: Vec::new(),
        }
    }

    fn fixed(results: &[PlannedResult], j: usize, price: f64) -> Self {
        let et = results[j].cumulative_hours;
        Self {
            scheme: Scheme::Fixed,
            feasible: true,
            binding: None,
            result: Some(j + 1),
            quality: Some(results[j].quality),
            price: Some(price),
            investment: Some(et * price),
            execution_hours: Some(et),
            billed_hours: Some(et),
            suspended_hours: Some(0.0),
            elapsed_hours: Some(et),
            hours_per_day: Some(24),
            steps: Vec::new(),
        }
    }
}

fn first_reaching(results: &[PlannedResult], quality: f64) -> Option<usize> {
    results.iter().position(|r| r.quality + EPS >= quality)
}

fn pct(base: f64, next: f64) -> f64 {
    (next - base) / base
}

/// Answers a query under constant hourly pricing.
pub fn fixed_plan(results: &[PlannedResult], price: f64, query: &PlanQuery) -> Result<PlanAnswer> {
    check_results(results)?;
    if !(price > 0.0) {
        return Err(Error::invalid("the fixed price must be positive"));
    }
    let cost = |j: usize| results[j].cumulative_hours * price;
    Ok(match *query {
        PlanQuery::MaxQualityWithinBudget { budget } => {
            // quality need not be monotone, so scan every affordable result
            let best = (0..results.len())
                .filter(|&j| cost(j) <= budget + EPS)
                .max_by(|&a, &b| {
                    results[a]
                        .quality
                        .total_cmp(&results[b].quality)
                        .then(b.cmp(&a))
                });
            match best {
                Some(j) => PlanAnswer::fixed(results, j, price),
                None => PlanAnswer::infeasible(Scheme::Fixed, "budget"),
            }
        }
        PlanQuery::MinInvestmentForQuality { quality, budget } => {
            match first_reaching(results, quality) {
                None => PlanAnswer::infeasible(Scheme::Fixed, "quality"),
                Some(j) if budget.is_some_and(|b| cost(j) > b + EPS) => {
                    PlanAnswer::infeasible(Scheme::Fixed, "budget")
                }
                Some(j) => PlanAnswer::fixed(results, j, price),
            }
        }
        PlanQuery::MinBidForDeadline { .. } => {
            return Err(Error::invalid(
                "a bid is only meaningful under spot pricing",
            ))
        }
        PlanQuery::ElasticityConstrained { floor, budget } => {
            if budget.is_some_and(|b| cost(0) > b + EPS) {
                return Ok(PlanAnswer::infeasible(Scheme::Fixed, "budget"));
            }
            let mut steps = vec![PlanStep {
                result: 1,
                quality: results[0].quality,
                price,
                incremental_hours: results[0].cumulative_hours,
                incremental_investment: cost(0),
                investment: cost(0),
                elasticity: None,
            }];
            let mut j = 0;
            let mut binding = None;
            while j + 1 < results.len() {
                let e = pct(results[j].quality, results[j + 1].quality) / pct(cost(j), cost(j + 1));
                if !(e + EPS >= floor) {
                    binding = Some("elasticity".to_string());
                    break;
                }
                if budget.is_some_and(|b| cost(j + 1) > b + EPS) {
                    binding = Some("budget".to_string());
                    break;
                }
                j += 1;
                steps.push(PlanStep {
                    result: j + 1,
                    quality: results[j].quality,
                    price,
                    incremental_hours: results[j].cumulative_hours
                        - results[j - 1].cumulative_hours,
                    incremental_investment: cost(j) - cost(j - 1),
                    investment: cost(j),
                    elasticity: Some(e),
                });
            }
            let mut a = PlanAnswer::fixed(results, j, price);
            a.binding = binding;
            a.steps = steps;
            a
        }
    })
}

/// Outcome of running `work` hours at `bid` starting at time `start`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimRun {
    pub end: f64,
    /// Resumptions after a suspension.
    pub cycles: usize,
}

/// Hour-by-hour simulation; `None` when the bid never grants access.
pub fn simulate(schedule: &PriceSchedule, bid: f64, start: f64, work: f64) -> Option<SimRun> {
    if spot_availability(schedule, bid).per_day == 0 {
        return None;
    }
    let mut t = start;
    let mut left = work;
    let mut cycles = 0;
    let mut was_running = true;
    while left > EPS {
        let hour = t.floor();
        if schedule.available(hour as usize, bid) {
            if !was_running {
                cycles += 1;
            }
            was_running = true;
            let run = (hour + 1.0 - t).min(left);
            left -= run;
            t += run;
        } else {
            was_running = false;
            t = hour + 1.0;
        }
    }
    Some(SimRun { end: t, cycles })
}

/// Granted hours that start before `deadline`.
fn granted_hours(schedule: &PriceSchedule, bid: f64, deadline: f64) -> usize {
    (0..deadline.ceil() as usize)
        .filter(|&h| schedule.available(h, bid))
        .count()
}

/// Cheapest level whose simulated run finishes `work` by the deadline.
fn min_bid(schedule: &PriceSchedule, work: f64, deadline: f64) -> Option<(f64, SimRun)> {
    schedule.levels().into_iter().find_map(|bid| {
        simulate(schedule, bid, 0.0, work)
            .filter(|run| run.end <= deadline + EPS)
            .map(|run| (bid, run))
    })
}

fn spot_answer(
    schedule: &PriceSchedule,
    results: &[PlannedResult],
    j: usize,
    bid: f64,
    run: SimRun,
    opts: &SpotOptions,
) -> PlanAnswer {
    let et = results[j].cumulative_hours;
    let billed = granted_hours(schedule, bid, opts.deadline_hours) as f64;
    PlanAnswer {
        scheme: Scheme::Spot,
        feasible: true,
        binding: None,
        result: Some(j + 1),
        quality: Some(results[j].quality),
        price: Some(bid),
        investment: Some(billed * bid + run.cycles as f64 * opts.overhead_per_cycle),
        execution_hours: Some(et),
        billed_hours: Some(billed),
        suspended_hours: Some(run.end - et),
        elapsed_hours: Some(run.end),
        hours_per_day: Some(spot_availability(schedule, bid).per_day),
        steps: Vec::new(),
    }
}

fn deadline_miss(schedule: &PriceSchedule, work: f64) -> PlanAnswer {
    let best = simulate(
        schedule,
        schedule.levels().last().copied().unwrap_or(0.0),
        0.0,
        work,
    );
    let mut a = PlanAnswer::infeasible(Scheme::Spot, "deadline");
    a.elapsed_hours = best.map(|r| r.end);
    a.execution_hours = Some(work);
    a
}

/// Answers a query under hourly spot pricing, simulated from hour 0.
pub fn spot_plan(
    results: &[PlannedResult],
    schedule: &PriceSchedule,
    query: &PlanQuery,
    opts: &SpotOptions,
) -> Result<PlanAnswer> {
    check_results(results)?;
    if !(opts.deadline_hours > 0.0) {
        return Err(Error::invalid("the deadline must be positive"));
    }
    let for_result = |j: usize, budget: Option<f64>| -> PlanAnswer {
        match min_bid(schedule, results[j].cumulative_hours, opts.deadline_hours) {
            None => deadline_miss(schedule, results[j].cumulative_hours),
            Some((bid, run)) => {
                let a = spot_answer(schedule, results, j, bid, run, opts);
                if budget.is_some_and(|b| a.investment.unwrap_or(0.0) > b + EPS) {
                    let mut over = PlanAnswer::infeasible(Scheme::Spot, "budget");
                    over.investment = a.investment;
                    over
                } else {
                    a
                }
            }
        }
    };
    Ok(match *query {
        PlanQuery::MaxQualityWithinBudget { budget } => {
            let mut order: Vec<usize> = (0..results.len()).collect();
            order.sort_by(|&a, &b| {
                results[b]
                    .quality
                    .total_cmp(&results[a].quality)
                    .then(a.cmp(&b))
            });
            order
                .into_iter()
                .map(|j| for_result(j, Some(budget)))
                .find(|a| a.feasible)
                .unwrap_or_else(|| PlanAnswer::infeasible(Scheme::Spot, "budget"))
        }
        PlanQuery::MinInvestmentForQuality { quality, budget } => {
            match first_reaching(results, quality) {
                None => PlanAnswer::infeasible(Scheme::Spot, "quality"),
                Some(j) => for_result(j, budget),
            }
        }
        PlanQuery::MinBidForDeadline { quality } => {
            let target = match quality {
                Some(q) => first_reaching(results, q),
                None => Some(results.len() - 1),
            };
            match target {
                None => PlanAnswer::infeasible(Scheme::Spot, "quality"),
                Some(j) => for_result(j, None),
            }
        }
        PlanQuery::ElasticityConstrained { floor, budget } => {
            elastic_spot(results, schedule, floor, budget, opts)?
        }
    })
}

/// Each further result is bought at the highest level whose incremental
/// investment keeps the step's elasticity at the floor.
fn elastic_spot(
    results: &[PlannedResult],
    schedule: &PriceSchedule,
    floor: f64,
    budget: Option<f64>,
    opts: &SpotOptions,
) -> Result<PlanAnswer> {
    if !(floor > 0.0) {
        return Err(Error::invalid("the elasticity floor must be positive"));
    }
    let levels = schedule.levels();
    let top = *levels.last().expect("24 prices");
    let first_bid = match opts.initial_bid {
        Some(b) => schedule
            .snap_down(b)
            .ok_or_else(|| Error::invalid(format!("initial bid {b} is below every spot price")))?,
        None => top,
    };
    let mut bid = first_bid;
    let mut investment = results[0].cumulative_hours * bid;
    let Some(mut run) = simulate(schedule, bid, 0.0, results[0].cumulative_hours) else {
        return Ok(PlanAnswer::infeasible(Scheme::Spot, "bid"));
    };
    if run.end > opts.deadline_hours + EPS {
        return Ok(deadline_miss(schedule, results[0].cumulative_hours));
    }
    if budget.is_some_and(|b| investment > b + EPS) {
        return Ok(PlanAnswer::infeasible(Scheme::Spot, "budget"));
    }
    let mut cycles = run.cycles;
    let mut steps = vec![PlanStep {
        result: 1,
        quality: results[0].quality,
        price: bid,
        incremental_hours: results[0].cumulative_hours,
        incremental_investment: investment,
        investment,
        elasticity: None,
    }];
    let mut binding = None;
    let mut j = 0;
    while j + 1 < results.len() {
        let hours = results[j + 1].cumulative_hours - results[j].cumulative_hours;
        let allowed = investment * pct(results[j].quality, results[j + 1].quality) / floor;
        let Some(next_bid) = schedule.snap_down((allowed / hours).min(top)) else {
            binding = Some("elasticity".to_string());
            break;
        };
        let Some(next_run) = simulate(schedule, next_bid, run.end, hours) else {
            binding = Some("bid".to_string());
            break;
        };
        let delta = hours * next_bid;
        if next_run.end > opts.deadline_hours + EPS {
            binding = Some("deadline".to_string());
            break;
        }
        if budget.is_some_and(|b| investment + delta > b + EPS) {
            binding = Some("budget".to_string());
            break;
        }
        let e = pct(results[j].quality, results[j + 1].quality) / (delta / investment);
        investment += delta;
        bid = next_bid;
        run = next_run;
        cycles += next_run.cycles;
        j += 1;
        steps.push(PlanStep {
            result: j + 1,
            quality: results[j].quality,
            price: bid,
            incremental_hours: hours,
            incremental_investment: delta,
            investment,
            elasticity: Some(e),
        });
    }
    let et = results[j].cumulative_hours;
    Ok(PlanAnswer {
        scheme: Scheme::Spot,
        feasible: true,
        binding,
        result: Some(j + 1),
        quality: Some(results[j].quality),
        price: Some(bid),
        investment: Some(investment + cycles as f64 * opts.overhead_per_cycle),
        execution_hours: Some(et),
        billed_hours: Some(et),
        suspended_hours: Some(run.end - et),
        elapsed_hours: Some(run.end),
        hours_per_day: Some(spot_availability(schedule, bid).per_day),
        steps,
    })
}

pub const PLAN_CSV_HEADER: &str =
    "scheme,feasible,binding,result,quality,price,investment,execution_hours,billed_hours,suspended_hours,elapsed_hours";

pub fn write_plan_csv<W: Write>(answers: &[PlanAnswer], mut out: W) -> Result<()> {
    let num = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    writeln!(out, "{PLAN_CSV_HEADER}")?;
    for a in answers {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            match a.scheme {
                Scheme::Fixed => "fixed",
                Scheme::Spot => "spot",
            },
            a.feasible,
            a.binding.as_deref().unwrap_or(""),
            a.result.map_or_else(String::new, |r| r.to_string()),
            num(a.quality),
            num(a.price),
            num(a.investment),
            num(a.execution_hours),
            num(a.billed_hours),
            num(a.suspended_hours),
            num(a.elapsed_hours)
        )?;
    }
    Ok(())
}
