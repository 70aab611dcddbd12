//! Line-delimited JSON records and plain-text tables.

use std::fmt::Write as _;
use std::io::Write;

use l2h_core::deployment::{RoutingDecision, UsageLedger};
use l2h_core::metrics::{BranchRow, MetricsReport};
use l2h_core::training::{StageClock, StepRecord};
use serde::Serialize;

use crate::experiment::{BrrOutcome, PointResult};

#[derive(Debug, Serialize)]
pub struct StepLine {
    pub step: usize,
    pub epoch: usize,
    pub l1: f64,
    pub l2: f64,
    pub l_s: f64,
    pub server_stage_ns: u64,
    pub rejector_stage_ns: u64,
    pub refreshed: bool,
}

impl From<&StepRecord> for StepLine {
    fn from(r: &StepRecord) -> Self {
        StepLine {
            step: r.step,
            epoch: r.epoch,
            l1: r.l1,
            l2: r.l2,
            l_s: r.l_s,
            server_stage_ns: r.server_stage_ns,
            rejector_stage_ns: r.rejector_stage_ns,
            refreshed: r.refreshed,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct DecisionLine {
    pub index: usize,
    pub route: &'static str,
    pub fallback_flag: bool,
    /// 1-based.
    pub label: usize,
    pub cost_delta: f64,
}

impl From<&RoutingDecision> for DecisionLine {
    fn from(d: &RoutingDecision) -> Self {
        DecisionLine {
            index: d.index,
            route: d.route.as_str(),
            fallback_flag: d.fallback,
            label: d.label.one_based(),
            cost_delta: d.cost_delta,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LedgerLine {
    pub total_queries: u64,
    pub remote_queries: u64,
    pub remote_errors: u64,
    pub accumulated_cost: f64,
    pub remote_fraction: f64,
}

impl From<&UsageLedger> for LedgerLine {
    fn from(l: &UsageLedger) -> Self {
        LedgerLine {
            total_queries: l.total_queries,
            remote_queries: l.remote_queries,
            remote_errors: l.remote_errors,
            accumulated_cost: l.accumulated_cost,
            remote_fraction: l.remote_fraction(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BranchLine {
    pub route: &'static str,
    pub count: usize,
    pub ratio: f64,
    pub client_accuracy: Option<f64>,
    pub server_accuracy: Option<f64>,
    pub difference: Option<f64>,
}

impl From<&BranchRow> for BranchLine {
    fn from(b: &BranchRow) -> Self {
        BranchLine {
            route: b.route.as_str(),
            count: b.count,
            ratio: b.ratio,
            client_accuracy: b.client_accuracy,
            server_accuracy: b.server_accuracy,
            difference: b.difference,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct ClassLine {
    pub label: usize,
    pub count: usize,
    pub reject_rate: f64,
    pub client_accuracy: f64,
    pub joint_accuracy: f64,
}

#[derive(Debug, Serialize)]
pub struct ReportLine {
    pub n: usize,
    pub joint_accuracy: f64,
    pub client_only_accuracy: f64,
    pub server_only_accuracy: f64,
    pub reject_ratio: f64,
    pub mean_generalized_loss: f64,
    pub branches: Vec<BranchLine>,
    pub per_class: Vec<ClassLine>,
    pub ledger: LedgerLine,
}

impl From<&MetricsReport> for ReportLine {
    fn from(r: &MetricsReport) -> Self {
        ReportLine {
            n: r.n,
            joint_accuracy: r.joint_accuracy,
            client_only_accuracy: r.client_only_accuracy,
            server_only_accuracy: r.server_only_accuracy,
            reject_ratio: r.reject_ratio,
            mean_generalized_loss: r.mean_generalized_loss,
            branches: r.branches.iter().map(BranchLine::from).collect(),
            per_class: r
                .per_class
                .iter()
                .map(|c| ClassLine {
                    label: c.label.one_based(),
                    count: c.count,
                    reject_rate: c.reject_rate,
                    client_accuracy: c.client_accuracy,
                    joint_accuracy: c.joint_accuracy,
                })
                .collect(),
            ledger: LedgerLine::from(&r.ledger),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepLine {
    pub seed: u64,
    pub c_e: f64,
    pub c_1: f64,
    pub algo: String,
    pub final_mean_ls: f64,
    pub report: ReportLine,
}

impl SweepLine {
    pub fn new(seed: u64, p: &PointResult) -> Self {
        SweepLine {
            seed,
            c_e: p.costs.c_e,
            c_1: p.costs.c_1,
            algo: p.algo.name(),
            final_mean_ls: p.final_ls,
            report: ReportLine::from(&p.report),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BrrLine {
    pub q: f64,
    pub q1: f64,
    pub mode: &'static str,
    pub pass_probability: f64,
    pub realized_remote_fraction: f64,
    pub accuracy: f64,
    pub baseline_remote_fraction: f64,
    pub baseline_accuracy: f64,
}

impl From<&BrrOutcome> for BrrLine {
    fn from(o: &BrrOutcome) -> Self {
        BrrLine {
            q: o.q,
            q1: o.q1,
            mode: match o.mode {
                l2h_core::deployment::BrrMode::Under => "under",
                l2h_core::deployment::BrrMode::Over => "over",
            },
            pass_probability: o.pass_probability,
            realized_remote_fraction: o.realized,
            accuracy: o.accuracy,
            baseline_remote_fraction: o.baseline_realized,
            baseline_accuracy: o.baseline_accuracy,
        }
    }
}

/// One JSON object per line.
pub fn write_lines<T: Serialize>(
    out: &mut impl Write,
    items: impl IntoIterator<Item = T>,
) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut *out, &item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |v| format!("{:.1}", 100.0 * v))
}

/// Contrastive table: one row per branch, percentages to one decimal.
pub fn report_table(r: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "n={}  joint={:.1}%  client-only={:.1}%  server-only={:.1}%  reject={:.1}%  mean-loss={:.4}",
        r.n,
        100.0 * r.joint_accuracy,
        100.0 * r.client_only_accuracy,
        100.0 * r.server_only_accuracy,
        100.0 * r.reject_ratio,
        r.mean_generalized_loss
    );
    let _ = writeln!(
        s,
        "{:<8}{:>8}{:>10}{:>10}{:>8}{:>8}",
        "branch", "count", "ratio%", "client%", "server%", "diff"
    );
    for b in &r.branches {
        let _ = writeln!(
            s,
            "{:<8}{:>8}{:>10.1}{:>10}{:>8}{:>8}",
            b.route.as_str(),
            b.count,
            100.0 * b.ratio,
            pct(b.client_accuracy),
            pct(b.server_accuracy),
            pct(b.difference)
        );
    }
    let _ = writeln!(
        s,
        "{:<8}{:>8}{:>10}{:>10}{:>8}",
        "class", "count", "reject%", "client%", "joint%"
    );
    for c in &r.per_class {
        let _ = writeln!(
            s,
            "{:<8}{:>8}{:>10.1}{:>10.1}{:>8.1}",
            c.label.one_based(),
            c.count,
            100.0 * c.reject_rate,
            100.0 * c.client_accuracy,
            100.0 * c.joint_accuracy
        );
    }
    let l = &r.ledger;
    let _ = writeln!(
        s,
        "ledger: {} queries, {} remote, {} remote errors, cost {:.4}",
        l.total_queries, l.remote_queries, l.remote_errors, l.accumulated_cost
    );
    s
}

/// Monotonic wall clock for training stage timings.
#[derive(Debug)]
pub struct WallClock(std::time::Instant);

impl Default for WallClock {
    fn default() -> Self {
        WallClock(std::time::Instant::now())
    }
}

impl StageClock for WallClock {
    fn now_ns(&mut self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}
