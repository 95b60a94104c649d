//! Tables and plot data built from result sets.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Result};
use bbrl_core::protocol::{
    frontier_grid, observed_bounds, CiRule, ResultSet, TimeFeature, Z_ALPHA_95,
};

use crate::format::write_text;

pub const SUMMARY_COLUMNS: [&str; 4] = [
    "Agent",
    "Offline time",
    "Mean online time (per decision)",
    "Score",
];

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    /// One row per configuration instead of the best per algorithm.
    pub all_configs: bool,
    pub latex: bool,
    pub rule: CiRule,
    pub z_alpha: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            all_configs: false,
            latex: false,
            rule: CiRule::Standard,
            z_alpha: Z_ALPHA_95,
        }
    }
}

/// Rounded human-readable duration, e.g. `~12 ms` or `~1.5 s`.
pub fn format_duration(d: Duration) -> String {
    let ns = d.as_nanos() as f64;
    let units = [
        (3600e9, "h"),
        (60e9, "m"),
        (1e9, "s"),
        (1e6, "ms"),
        (1e3, "µs"),
    ];
    let (value, unit) = units
        .iter()
        .find(|(scale, _)| ns >= *scale)
        .map(|&(scale, unit)| (ns / scale, unit))
        .unwrap_or((ns, "ns"));
    if value < 10.0 && unit != "ns" {
        let v = format!("{value:.1}");
        format!("~{} {unit}", v.trim_end_matches(".0"))
    } else {
        format!("~{value:.0} {unit}")
    }
}

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub label: String,
    pub offline: Duration,
    pub online: Duration,
    pub mean: f64,
    pub half_width: f64,
}

impl SummaryRow {
    pub fn cells(&self) -> [String; 4] {
        [
            self.label.clone(),
            format_duration(self.offline),
            format_duration(self.online),
            format!("{:.2} ± {:.2}", self.mean, self.half_width),
        ]
    }
}

/// Indices of the rows to show: every set, or the highest-scoring
/// configuration of each algorithm. Sorted by decreasing mean score.
pub fn summary_indices(results: &[ResultSet], all_configs: bool) -> Vec<usize> {
    let mut picked: Vec<usize> = if all_configs {
        (0..results.len()).collect()
    } else {
        let mut best: Vec<usize> = Vec::new();
        for (i, r) in results.iter().enumerate() {
            match best
                .iter_mut()
                .find(|j| results[**j].config.algorithm() == r.config.algorithm())
            {
                Some(j) if r.mean_score() > results[*j].mean_score() => *j = i,
                Some(_) => {}
                None => best.push(i),
            }
        }
        best
    };
    picked.sort_by(|&a, &b| {
        results[b]
            .mean_score()
            .total_cmp(&results[a].mean_score())
            .then(a.cmp(&b))
    });
    picked
}

pub fn summary_rows(results: &[ResultSet], options: &ReportOptions) -> Result<Vec<SummaryRow>> {
    summary_indices(results, options.all_configs)
        .into_iter()
        .map(|i| {
            let r = &results[i];
            let s = r.score(options.rule)?;
            Ok(SummaryRow {
                label: r.label.clone(),
                offline: r.time(TimeFeature::Offline),
                online: r.time(TimeFeature::MeanOnline),
                mean: s.mean,
                half_width: s.half_width,
            })
        })
        .collect()
}

fn tsv_cell(s: &str) -> String {
    s.replace(['\t', '\n'], " ")
}

pub fn summary_tsv(rows: &[SummaryRow]) -> String {
    let mut out = SUMMARY_COLUMNS.join("\t");
    out.push('\n');
    for row in rows {
        let cells = row.cells().map(|c| tsv_cell(&c));
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

pub fn summary_text(rows: &[SummaryRow]) -> String {
    let table: Vec<[String; 4]> = std::iter::once(SUMMARY_COLUMNS.map(str::to_string))
        .chain(rows.iter().map(SummaryRow::cells))
        .collect();
    let mut widths = [0usize; 4];
    for line in &table {
        for (w, cell) in widths.iter_mut().zip(line) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let render = |line: &[String; 4], out: &mut String| {
        let cells: Vec<String> = line
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
    };
    render(&table[0], &mut out);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for line in &table[1..] {
        render(line, &mut out);
    }
    out
}

fn latex_escape(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        match c {
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            'µ' => out.push_str("$\\mu$"),
            '±' => out.push_str("$\\pm$"),
            '~' => out.push_str("$\\sim$"),
            _ => out.push(c),
        }
    }
    out
}

pub fn summary_latex(rows: &[SummaryRow]) -> String {
    let mut out = String::from("\\begin{tabular}{lrrr}\n\\hline\n");
    let head: Vec<String> = SUMMARY_COLUMNS.iter().map(|c| latex_escape(c)).collect();
    let _ = writeln!(out, "{} \\\\\n\\hline", head.join(" & "));
    for row in rows {
        let cells: Vec<String> = row.cells().iter().map(|c| latex_escape(c)).collect();
        let _ = writeln!(out, "{} \\\\", cells.join(" & "));
    }
    out.push_str("\\hline\n\\end{tabular}\n");
    out
}

/// One row per configuration: time feature (ns), mean score and half-width.
pub fn scatter_tsv(results: &[ResultSet], feature: TimeFeature, rule: CiRule) -> Result<String> {
    let column = match feature {
        TimeFeature::Offline => "offline_ns",
        TimeFeature::MeanOnline => "mean_online_ns",
        TimeFeature::MaxOnline => "max_online_ns",
    };
    let mut out = format!("algorithm\tagent\t{column}\tscore\thalf_width\n");
    for r in results {
        let s = r.score(rule)?;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.config.algorithm().tag(),
            tsv_cell(&r.label),
            r.time(feature).as_nanos(),
            s.mean,
            s.half_width
        );
    }
    Ok(out)
}

/// Best agents for every pair of observed time bounds.
pub fn frontier_tsv(results: &[ResultSet], z_alpha: f64) -> Result<String> {
    let (off, on) = observed_bounds(results);
    let grid = frontier_grid(results, &off, &on, z_alpha)?;
    let mut out = String::from("offline_bound_ns\tonline_bound_ns\tbest_agents\n");
    for (i, k1) in off.iter().enumerate() {
        for (j, k2) in on.iter().enumerate() {
            let labels: Vec<String> = grid[i][j]
                .iter()
                .map(|&a| tsv_cell(&results[a].label))
                .collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                k1.as_nanos(),
                k2.as_nanos(),
                labels.join("; ")
            );
        }
    }
    Ok(out)
}

/// All report files as `(file name, contents)`.
pub fn build(results: &[ResultSet], options: &ReportOptions) -> Result<Vec<(String, String)>> {
    if results.is_empty() {
        bail!("no results to export");
    }
    if let Some(r) = results.iter().find(|r| r.records.is_empty()) {
        bail!("result set {:?} holds no trajectories", r.label);
    }
    let n = results[0].records.len();
    if let Some(r) = results.iter().find(|r| r.records.len() != n) {
        bail!(
            "result sets differ in size ({} has {}, {} has {n}); they must come from one experiment",
            r.label,
            r.records.len(),
            results[0].label
        );
    }
    let rows = summary_rows(results, options)?;
    let mut files = vec![
        ("summary.tsv".to_string(), summary_tsv(&rows)),
        ("summary.txt".to_string(), summary_text(&rows)),
    ];
    if options.latex {
        files.push(("summary.tex".to_string(), summary_latex(&rows)));
    }
    files.push((
        "scatter_offline.tsv".to_string(),
        scatter_tsv(results, TimeFeature::Offline, options.rule)?,
    ));
    files.push((
        "scatter_online.tsv".to_string(),
        scatter_tsv(results, TimeFeature::MeanOnline, options.rule)?,
    ));
    files.push((
        "frontier.tsv".to_string(),
        frontier_tsv(results, options.z_alpha)?,
    ));
    Ok(files)
}

/// Builds every file first, then writes them into `dir`.
pub fn export(results: &[ResultSet], options: &ReportOptions, dir: &Path) -> Result<Vec<String>> {
    let files = build(results, options)?;
    for (name, text) in &files {
        write_text(&dir.join(name), text, false)?;
    }
    Ok(files.into_iter().map(|(name, _)| name).collect())
}
