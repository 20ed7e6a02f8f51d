//! Plain-text result tables.

use std::fmt::Write;

use super::experiments::{AdaptationReport, LambdaPoint, LodoReport};
use super::metrics::MetricsReport;

fn pct(v: f64) -> String {
    format!("{:5.1}", 100.0 * v)
}

fn header(out: &mut String, first: &str, width: usize) {
    let _ = writeln!(
        out,
        "{first:<width$} | {:^17} | {:^17} | {:^25}",
        "Changing lane", "Turning", "All manoeuvres"
    );
    let _ = writeln!(
        out,
        "{:<width$} | {:>5} {:>5} {:>5} | {:>5} {:>5} {:>5} | {:>5} {:>5} {:>5} {:>7}",
        "", "P", "R", "F1", "P", "R", "F1", "P", "R", "F1", "TTP(s)"
    );
    let _ = writeln!(out, "{}", "-".repeat(width + 70));
}

fn row(out: &mut String, name: &str, m: &MetricsReport, width: usize) {
    let _ = writeln!(
        out,
        "{name:<width$} | {} {} {} | {} {} {} | {} {} {} {:>7.2}",
        pct(m.lane_change.precision),
        pct(m.lane_change.recall),
        pct(m.lane_change.f1),
        pct(m.turn.precision),
        pct(m.turn.recall),
        pct(m.turn.f1),
        pct(m.precision),
        pct(m.recall),
        pct(m.f1),
        m.mean_ttp
    );
}

/// One-row table for a single evaluation.
pub fn metrics_table(name: &str, m: &MetricsReport) -> String {
    let width = name.len().max(10);
    let mut out = String::new();
    header(&mut out, "Model", width);
    row(&mut out, name, m, width);
    out
}

/// The three adaptation conditions, one row each.
pub fn adaptation_table(r: &AdaptationReport) -> String {
    let width = 22;
    let mut out = String::new();
    header(&mut out, "Condition", width);
    for c in &r.conditions {
        row(&mut out, c.condition.label(), &c.metrics, width);
    }
    out
}

/// Per-driver F1 for each condition, then the driver means.
pub fn lodo_table(r: &LodoReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} | {:>13} {:>8} {:>13}", "Held out", "No adaptation", "DA-RNN", "DA-RNN + FT");
    let _ = writeln!(out, "{}", "-".repeat(52));
    for d in &r.drivers {
        let f = |i: usize| pct(d.report.conditions[i].metrics.f1);
        let _ = writeln!(out, "{:<12} | {:>13} {:>8} {:>13}", d.driver, f(0), f(1), f(2));
    }
    let _ = writeln!(out, "{}", "-".repeat(52));
    let _ = writeln!(out, "{:<9} | {:>5} {:>5} {:>5} {:>7}", "Mean", "P", "R", "F1", "TTP(s)");
    for m in &r.mean {
        let _ = writeln!(
            out,
            "{:<9} | {} {} {} {:>7.2}  {}",
            "",
            pct(m.precision),
            pct(m.recall),
            pct(m.f1),
            m.mean_ttp,
            m.condition.label()
        );
    }
    out
}

pub fn lambda_table(points: &[LambdaPoint]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>7} | {:>5} {:>7}", "lambda", "F1", "TTP(s)");
    let _ = writeln!(out, "{}", "-".repeat(23));
    for p in points {
        let _ = writeln!(out, "{:>7.3} | {} {:>7.2}", p.lambda, pct(p.f1), p.mean_ttp);
    }
    out
}
