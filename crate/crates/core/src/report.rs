//! Machine-readable outputs. Every CSV starts with a `# schema:` comment line
//! and every JSON document carries a `schema` field.

use serde_json::{json, Value};

use crate::analysis::Analysis;
use crate::fluid::bounds::BoundsReport;
use crate::fluid::constants::FluidConstants;
use crate::fluid::trajectory::FluidTrajectory;
use crate::sim::engine::{LogRecord, RunMetrics};
use crate::sim::sweep::{ScaleSummary, SweepTable};

pub const ANALYSIS: &str = "subopt.analysis/1";
pub const FLUID: &str = "subopt.fluid/1";
pub const TRAJECTORY: &str = "subopt.trajectory/1";
pub const RUN: &str = "subopt.run/1";
pub const RUN_LOG: &str = "subopt.runlog/1";
pub const SWEEP: &str = "subopt.sweep/1";
pub const SWEEP_SUMMARY: &str = "subopt.sweep_summary/1";
pub const PLOT: &str = "subopt.plot/1";
pub const NETWORK: &str = "subopt.network/1";

/// Builds a CSV with the schema comment, a header row and records.
fn csv_with_schema<I>(schema: &str, header: &[&str], records: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut wtr = csv::Writer::from_writer(format!("# schema: {schema}\n").into_bytes());
    wtr.write_record(header).expect("writing to memory");
    for rec in records {
        wtr.write_record(&rec).expect("writing to memory");
    }
    String::from_utf8(wtr.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Strips the leading `# schema:` line so the rest parses as plain CSV.
pub fn csv_body(text: &str) -> &str {
    match text.strip_prefix("# schema:") {
        Some(rest) => rest.split_once('\n').map_or("", |(_, body)| body),
        None => text,
    }
}

pub fn analysis_json(a: &Analysis) -> Value {
    let v = &a.verdict;
    json!({
        "schema": ANALYSIS,
        "network": a.spec,
        "allocation": a.alloc,
        "verdict": v.verdict,
        "m_max": v.m_max,
        "witness": v.witness_path.as_ref().map(|p| json!({
            "label": p.label(),
            "kind": p.kind,
            "weight": p.weight,
        })),
        "paths": v.all_paths.iter().map(|p| json!({
            "label": p.label(),
            "kind": p.kind,
            "weight": p.weight,
            "edges": p.edges,
        })).collect::<Vec<_>>(),
        "sigma_opt": v.sigma_opt,
    })
}

pub fn fluid_json(
    constants: &FluidConstants,
    traj: &FluidTrajectory,
    report: &BoundsReport,
) -> Value {
    json!({
        "schema": FLUID,
        "constants": constants,
        "trajectory": traj,
        "bounds": report,
        "passed": report.passed(),
        "constants_suspect": report.constants_suspect(),
    })
}

/// One row per `stride`-th sample, always keeping the last.
pub fn trajectory_csv(traj: &FluidTrajectory, stride: usize) -> String {
    let Some(first) = traj.samples.first() else {
        return csv_with_schema(TRAJECTORY, &["t"], std::iter::empty());
    };
    let (ni, nj) = (first.x.len(), first.z.len());
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=ni).map(|i| format!("X{i}")));
    header.extend((1..=ni).map(|i| format!("Y{i}")));
    header.extend((1..=nj).map(|j| format!("Z{j}")));
    header.extend(["eY".into(), "phase".into(), "k".into()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let stride = stride.max(1);
    let last = traj.samples.len() - 1;
    let rows = traj
        .samples
        .iter()
        .enumerate()
        .filter(|(k, _)| k % stride == 0 || *k == last)
        .map(|(_, s)| {
            let mut r = vec![s.t.to_string()];
            r.extend(s.x.iter().map(f64::to_string));
            r.extend(s.y.iter().map(f64::to_string));
            r.extend(s.z.iter().map(f64::to_string));
            r.push(s.y.iter().sum::<f64>().to_string());
            r.push(s.phase.as_str().into());
            r.push(s.k.to_string());
            r
        });
    csv_with_schema(TRAJECTORY, &header, rows)
}

const RUN_HEADER: [&str; 18] = [
    "n",
    "seed",
    "horizon",
    "t_end",
    "busy_time",
    "busy_fraction",
    "sup_x_dev",
    "rho",
    "scaled_sup_dev",
    "sup_w_scaled",
    "K",
    "holds",
    "tau_tilde",
    "sigma",
    "event_count",
    "drain_events",
    "hold_events",
    "post_tau_events",
];

fn run_record(m: &RunMetrics) -> Vec<String> {
    vec![
        m.n.to_string(),
        m.seed.to_string(),
        m.horizon.to_string(),
        m.t_end.to_string(),
        m.busy_time.to_string(),
        m.busy_fraction.to_string(),
        m.sup_x_dev.to_string(),
        m.rho.to_string(),
        m.scaled_sup_dev.to_string(),
        m.sup_w_scaled.to_string(),
        m.k.to_string(),
        m.holds.to_string(),
        opt(m.tau_tilde),
        opt(m.sigma),
        m.event_count.to_string(),
        m.drain_events.to_string(),
        m.hold_events.to_string(),
        m.post_tau_events.to_string(),
    ]
}

pub fn run_metrics_csv(runs: &[RunMetrics]) -> String {
    csv_with_schema(RUN, &RUN_HEADER, runs.iter().map(run_record))
}

pub fn run_json(m: &RunMetrics, error: Option<&str>) -> Value {
    json!({ "schema": RUN, "metrics": m, "error": error })
}

pub fn run_log_csv(log: &[LogRecord]) -> String {
    csv_with_schema(
        RUN_LOG,
        &["index", "t", "event", "phase", "eY", "dev"],
        log.iter().map(|r| {
            vec![
                r.index.to_string(),
                r.t.to_string(),
                r.kind.label(),
                r.phase.as_str().into(),
                r.queued.to_string(),
                r.deviation.to_string(),
            ]
        }),
    )
}

pub fn sweep_csv(table: &SweepTable) -> String {
    csv_with_schema(
        SWEEP,
        &[
            "n",
            "rep",
            "seed",
            "busy_fraction",
            "scaled_sup_dev",
            "K",
            "tau_fired",
            "sigma_fired",
            "sup_w_scaled",
            "error",
        ],
        table.rows.iter().map(|r| {
            let m = r.metrics.as_ref();
            let field = |f: fn(&RunMetrics) -> String| m.map(f).unwrap_or_default();
            vec![
                r.n.to_string(),
                r.rep.to_string(),
                r.seed.to_string(),
                field(|m| m.busy_fraction.to_string()),
                field(|m| m.scaled_sup_dev.to_string()),
                field(|m| m.k.to_string()),
                field(|m| m.tau_fired().to_string()),
                field(|m| m.sigma_fired().to_string()),
                field(|m| m.sup_w_scaled.to_string()),
                r.error.clone().unwrap_or_default(),
            ]
        }),
    )
}

pub fn sweep_summary_json(table: &SweepTable) -> Value {
    json!({
        "schema": SWEEP_SUMMARY,
        "config": table.config,
        "summaries": table.summaries,
    })
}

/// `n` against the busy-fraction quartiles, for any plotting tool.
pub fn plot_csv(summaries: &[ScaleSummary]) -> String {
    csv_with_schema(
        PLOT,
        &[
            "n",
            "busy_q1",
            "busy_median",
            "busy_q3",
            "dev_q1",
            "dev_median",
            "dev_q3",
            "fired_fraction",
            "w_p95",
            "w_p95_partial",
            "completed",
            "errors",
        ],
        summaries.iter().map(|s| {
            vec![
                s.n.to_string(),
                s.busy_fraction.q1.to_string(),
                s.busy_fraction.median.to_string(),
                s.busy_fraction.q3.to_string(),
                s.scaled_sup_dev.q1.to_string(),
                s.scaled_sup_dev.median.to_string(),
                s.scaled_sup_dev.q3.to_string(),
                s.fired_fraction.to_string(),
                s.w_p95.to_string(),
                s.w_p95_partial.to_string(),
                s.completed.to_string(),
                s.errors.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_line_and_quoting() {
        let text = csv_with_schema("x/1", &["a", "b"], [vec!["1".into(), "p, q".into()]]);
        assert!(text.starts_with("# schema: x/1\n"));
        assert!(text.contains("\"p, q\""));
        assert_eq!(csv_body(&text), "a,b\n1,\"p, q\"\n");
    }
}
