use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Args, ValueEnum};
use serde::Serialize;

use elastic_core::planner::{
    fixed_plan, read_results_csv, spot_plan, write_plan_csv, PlanAnswer, PlanQuery, PriceSchedule,
    Scheme, SpotOptions,
};

use crate::output::{open, render, Context};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeChoice {
    Fixed,
    Spot,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryKind {
    /// Best quality whose investment fits --budget.
    MaxQuality,
    /// Cheapest way to reach --quality, optionally within --budget.
    MinInvestment,
    /// Spot only: lowest bid finishing --quality (default: the last result)
    /// by the deadline.
    MinBid,
    /// Keep refining while each step's elasticity is at least --floor.
    Elasticity,
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    /// `quality,cumulative_hours` CSV, one row per result in order.
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeChoice::Both)]
    pub scheme: SchemeChoice,
    #[arg(long, value_enum)]
    pub query: QueryKind,
    /// Dollars per hour under fixed pricing.
    #[arg(long, default_value_t = 0.5)]
    pub fixed_price: f64,
    /// `hour,price` CSV for hours 0-23 (spot and both schemes).
    #[arg(long)]
    pub spot: Option<PathBuf>,
    #[arg(long)]
    pub budget: Option<f64>,
    #[arg(long)]
    pub quality: Option<f64>,
    /// Minimum elasticity per step for --query elasticity.
    #[arg(long)]
    pub floor: Option<f64>,
    #[arg(long, default_value_t = 48.0)]
    pub deadline_hours: f64,
    /// Spot bid for the first result of an elasticity plan; defaults to the
    /// highest schedule price.
    #[arg(long)]
    pub initial_bid: Option<f64>,
    /// Charge per suspend/resume cycle.
    #[arg(long, default_value_t = 0.0)]
    pub overhead: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-result steps of multi-step plans.
    #[arg(long)]
    pub steps_out: Option<PathBuf>,
}

fn query(a: &PlanArgs) -> anyhow::Result<PlanQuery> {
    Ok(match a.query {
        QueryKind::MaxQuality => PlanQuery::MaxQualityWithinBudget {
            budget: a.budget.context("--query max-quality needs --budget")?,
        },
        QueryKind::MinInvestment => PlanQuery::MinInvestmentForQuality {
            quality: a
                .quality
                .context("--query min-investment needs --quality")?,
            budget: a.budget,
        },
        QueryKind::MinBid => PlanQuery::MinBidForDeadline { quality: a.quality },
        QueryKind::Elasticity => PlanQuery::ElasticityConstrained {
            floor: a.floor.context("--query elasticity needs --floor")?,
            budget: a.budget,
        },
    })
}

fn steps_csv(answers: &[PlanAnswer]) -> String {
    let num = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    let mut s = String::from("scheme,result,quality,price,incremental_hours,incremental_investment,investment,elasticity\n");
    for a in answers {
        let scheme = match a.scheme {
            Scheme::Fixed => "fixed",
            Scheme::Spot => "spot",
        };
        for st in &a.steps {
            s.push_str(&format!(
                "{scheme},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
                st.result,
                st.quality,
                st.price,
                st.incremental_hours,
                st.incremental_investment,
                st.investment,
                num(st.elasticity)
            ));
        }
    }
    s
}

pub fn run(a: &PlanArgs, ctx: &Context) -> anyhow::Result<()> {
    let results = read_results_csv(open(&a.results)?)
        .with_context(|| format!("reading {}", a.results.display()))?;
    let q = query(a)?;
    let mut answers = Vec::new();
    if a.scheme != SchemeChoice::Spot {
        answers.push(fixed_plan(&results, a.fixed_price, &q)?);
    }
    if a.scheme != SchemeChoice::Fixed {
        let path = a.spot.as_deref().context("spot planning needs --spot")?;
        let schedule = PriceSchedule::read_spot_csv(a.fixed_price, open(path)?)
            .with_context(|| format!("reading {}", path.display()))?;
        let opts = SpotOptions {
            deadline_hours: a.deadline_hours,
            initial_bid: a.initial_bid,
            overhead_per_cycle: a.overhead,
        };
        answers.push(spot_plan(&results, &schedule, &q, &opts)?);
    }
    let extra: Vec<String> = answers
        .iter()
        .filter_map(|ans| {
            ans.hours_per_day
                .map(|h| format!("spot hours per day at the chosen bid: {h}"))
        })
        .collect();
    if let Some(path) = &a.steps_out {
        ctx.emit(Some(path), &[], steps_csv(&answers).as_bytes())?;
    }
    ctx.emit(
        a.out.as_deref(),
        &extra,
        &render(|b| write_plan_csv(&answers, b))?,
    )
}
