//! Columnar result files: `#`-prefixed metadata, one header row, then
//! comma-separated values.

use std::fmt::Write as _;

use crate::admittance::SimTrace;
use crate::policy::{PoseDistribution, StreamingReport, DIMS, DIM_NAMES};

fn metadata(s: &mut String, kind: &str, extra: &[(&str, String)]) {
    writeln!(s, "# format: gplfd-{kind} v1").unwrap();
    for (k, v) in extra {
        writeln!(s, "# {k}: {v}").unwrap();
    }
}

fn header(s: &mut String, first: &[&str], groups: &[&str]) {
    let mut cols: Vec<String> = first.iter().map(|c| c.to_string()).collect();
    for g in groups {
        cols.extend(DIM_NAMES.iter().map(|d| format!("{g}_{d}")));
    }
    writeln!(s, "{}", cols.join(",")).unwrap();
}

fn row(s: &mut String, lead: &[String], groups: &[&[f64; DIMS]]) {
    let mut cells: Vec<String> = lead.to_vec();
    for g in groups {
        cells.extend(g.iter().map(f64::to_string));
    }
    writeln!(s, "{}", cells.join(",")).unwrap();
}

/// Mean and variance of every query point.
pub fn prediction_table(pred: &[PoseDistribution], kind: &str) -> String {
    let mut s = String::new();
    metadata(&mut s, kind, &[]);
    header(&mut s, &["t", "extrapolated"], &["mean", "var"]);
    for p in pred {
        row(&mut s, &[p.t.to_string(), u8::from(p.extrapolated).to_string()], &[&p.mean, &p.var]);
    }
    s
}

pub fn trace_table(trace: &SimTrace) -> String {
    let mut s = String::new();
    let stable = trace.stability.iter().map(|r| r.satisfied.to_string()).collect::<Vec<_>>().join(" ");
    let bound = trace.stability.iter().map(|r| r.sigma_rate_bound.to_string()).collect::<Vec<_>>().join(" ");
    let observed = trace.stability.iter().map(|r| r.observed_max_sigma_rate.to_string()).collect::<Vec<_>>().join(" ");
    metadata(
        &mut s,
        "trace",
        &[("sigma_rate_bound", bound), ("max_sigma_rate", observed), ("stability_satisfied", stable)],
    );
    header(&mut s, &["t", "energy"], &["e", "de", "sigma", "k", "d", "f"]);
    for i in 0..trace.len() {
        row(
            &mut s,
            &[trace.t[i].to_string(), trace.energy[i].to_string()],
            &[&trace.error[i], &trace.rate[i], &trace.sigma[i], &trace.stiffness[i], &trace.damping[i], &trace.force[i]],
        );
    }
    s
}

/// Per-dimension mean squared prediction error of both policies.
pub fn mse_table(report: &StreamingReport) -> String {
    let mut s = String::new();
    metadata(&mut s, "mse", &[("points", report.stamps.len().to_string())]);
    writeln!(s, "dimension,static,adaptive").unwrap();
    for d in 0..DIMS {
        writeln!(s, "{},{},{}", DIM_NAMES[d], report.static_mse[d], report.adaptive_mse[d]).unwrap();
    }
    writeln!(s, "mean,{},{}", report.mean_static_mse(), report.mean_adaptive_mse()).unwrap();
    s
}

/// Static and adaptive predictions of the streaming experiment, per time.
pub fn streaming_table(report: &StreamingReport) -> String {
    let mut s = String::new();
    metadata(&mut s, "streaming", &[]);
    header(&mut s, &["t"], &["static_mean", "static_var", "adaptive_mean", "adaptive_var"]);
    for ((t, a), b) in report.stamps.iter().zip(&report.static_prediction).zip(&report.adaptive_prediction) {
        row(&mut s, &[t.to_string()], &[&a.mean, &a.var, &b.mean, &b.var]);
    }
    s
}
