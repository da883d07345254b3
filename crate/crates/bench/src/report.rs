//! Scene x agent comparison tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::rows::{ResultRow, Split};

/// One cell of the comparison: an agent's median over seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scene: String,
    pub flow: String,
    pub split: Split,
    pub agent: String,
    pub seeds: usize,
    pub cost_wt_hours: f64,
    pub stop_time_hours: f64,
    /// Lowest cost in its (scene, flow, split) line.
    pub best: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub table: String,
    pub rows: Vec<ReportRow>,
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

/// Agents in a stable order: baselines first, then learners, then others
/// alphabetically.
fn agent_rank(name: &str) -> (usize, String) {
    const ORDER: [&str; 10] = [
        "random",
        "fixed",
        "auction",
        "marl_s",
        "marl_g",
        "egu_rl",
        "wo_usd",
        "wo_ege",
        "wo_ew",
        "egu_rl_ac",
    ];
    let idx = ORDER.iter().position(|&a| a == name).unwrap_or(ORDER.len());
    (idx, name.to_string())
}

pub fn build_report(rows: &[ResultRow]) -> Result<Report> {
    if rows.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    type Key = (String, String, Split);
    let mut cells: BTreeMap<Key, BTreeMap<(usize, String), (Vec<f64>, Vec<f64>)>> = BTreeMap::new();
    let mut agents = BTreeSet::new();
    for r in rows {
        let rank = agent_rank(&r.agent);
        agents.insert(rank.clone());
        let cell = cells
            .entry((r.scene.clone(), r.flow.clone(), r.split))
            .or_default()
            .entry(rank)
            .or_default();
        cell.0.push(r.cost_wt_hours);
        cell.1.push(r.stop_time_hours);
    }

    let mut out = Vec::new();
    let mut table = String::new();
    let _ = write!(table, "{:<10} {:<6} {:<7}", "scene", "flow", "split");
    for (_, a) in &agents {
        let _ = write!(table, " {a:>14}");
    }
    table.push('\n');
    for ((scene, flow, split), by_agent) in cells {
        let mut line_rows: Vec<ReportRow> = by_agent
            .into_iter()
            .map(|((_, agent), (mut cost, mut stop))| ReportRow {
                scene: scene.clone(),
                flow: flow.clone(),
                split,
                agent,
                seeds: cost.len(),
                cost_wt_hours: median(&mut cost),
                stop_time_hours: median(&mut stop),
                best: false,
            })
            .collect();
        let min = line_rows
            .iter()
            .map(|r| r.cost_wt_hours)
            .fold(f64::INFINITY, f64::min);
        for r in &mut line_rows {
            r.best = r.cost_wt_hours == min;
        }
        let _ = write!(table, "{scene:<10} {flow:<6} {:<7}", split.to_string());
        for (_, a) in &agents {
            match line_rows.iter().find(|r| &r.agent == a) {
                Some(r) => {
                    let mark = if r.best { "*" } else { " " };
                    let _ = write!(table, " {:>13.3}{mark}", r.cost_wt_hours);
                }
                None => {
                    let _ = write!(table, " {:>14}", "-");
                }
            }
        }
        table.push('\n');
        out.extend(line_rows);
    }
    table.push_str("cost_wt in hours, median over seeds; * marks the best agent per line\n");
    Ok(Report { table, rows: out })
}
