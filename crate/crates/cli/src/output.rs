//! Result serialization: a comma-separated observable table and a
//! structured JSON tree, both deterministic byte-for-byte for a given
//! (config, seed) so outputs can be diffed across runs and worker counts.

use collapse_core::observables::EnsembleSummary;
use collapse_core::units::UnitSystem;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::runner::{RunOutput, TrajectoryRecord};

/// Output format selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Comma-separated observable series with a unit header.
    Table,
    /// Structured JSON document with config echo and summary.
    Tree,
}

fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

fn opt(value: Option<f64>) -> String {
    value.map(fmt).unwrap_or_default()
}

/// Renders the ensemble observable series as a comma-separated table.
/// Header comments carry the run identity and the unit conventions; the
/// column row names one unit per column. Columns without data (e.g. lobe
/// masses for a single-packet run) are left empty.
pub fn render_table(config: &ExperimentConfig, summary: &EnsembleSummary) -> String {
    let units = UnitSystem::default();
    let mut out = String::new();
    out.push_str("# collapse-sim observable series\n");
    out.push_str(&format!(
        "# model = {}; trajectories = {}; master_seed = {}\n",
        config.model.name(),
        summary.n_trajectories,
        config.master_seed
    ));
    out.push_str(
        "# natural units: hbar = m0 = r_c = 1; lengths in r_c, times in m0 r_c^2 / hbar\n",
    );
    out.push_str(&format!(
        "# CGS anchors: hbar = {:e} erg s, m0 = {:e} g, r_c = {:e} cm; \
         one time unit = {:.12e} s\n",
        collapse_core::units::HBAR_CGS,
        collapse_core::units::M0_CGS,
        collapse_core::units::R_C_CGS,
        units.time_unit_s()
    ));
    out.push_str(
        "time_natural,mean_x_natural,mean_var_x_natural,median_var_x_natural,\
         mass_left,mass_right,coherence_abs,coherence_stderr\n",
    );
    for (i, &t) in summary.sample_times.iter().enumerate() {
        let masses = summary.mean_lobe_masses.as_ref().map(|m| m[i]);
        let row = [
            fmt(t),
            fmt(summary.mean_x[i]),
            fmt(summary.mean_var_x[i]),
            fmt(summary.median_var_x[i]),
            opt(masses.map(|m| m.0)),
            opt(masses.map(|m| m.1)),
            opt(summary.coherence_abs.as_ref().map(|c| c[i])),
            opt(summary.coherence_stderr.as_ref().map(|c| c[i])),
        ];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct GeneratorDoc {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct UnitsDoc {
    system: &'static str,
    hbar_erg_s: f64,
    m0_g: f64,
    r_c_cm: f64,
    time_unit_s: f64,
    /// Trajectory k is seeded by SHA-256(le64(master_seed) || le64(k)).
    seed_derivation: &'static str,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    sample_times: &'a [f64],
    n_trajectories: usize,
    mean_x: &'a [f64],
    mean_var_x: &'a [f64],
    median_var_x: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_lobe_masses: Option<&'a [(f64, f64)]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coherence_abs: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coherence_stderr: Option<&'a [f64]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome_counts: Option<(usize, usize)>,
    mean_jump_count: f64,
}

#[derive(Serialize)]
struct TreeDoc<'a> {
    format_version: u32,
    generator: GeneratorDoc,
    units: UnitsDoc,
    config: &'a ExperimentConfig,
    summary: SummaryDoc<'a>,
    trajectories: &'a [TrajectoryRecord],
}

/// Renders the structured tree document: format version, unit block,
/// config echo, ensemble summary, and per-trajectory records.
pub fn render_tree(config: &ExperimentConfig, output: &RunOutput) -> String {
    let units = UnitSystem::default();
    let summary = &output.summary;
    let doc = TreeDoc {
        format_version: 1,
        generator: GeneratorDoc {
            name: "collapse-sim",
            version: env!("CARGO_PKG_VERSION"),
        },
        units: UnitsDoc {
            system: "natural (hbar = m0 = r_c = 1)",
            hbar_erg_s: collapse_core::units::HBAR_CGS,
            m0_g: collapse_core::units::M0_CGS,
            r_c_cm: collapse_core::units::R_C_CGS,
            time_unit_s: units.time_unit_s(),
            seed_derivation: "chacha8(sha256(le64(master_seed) || le64(k)))",
        },
        config,
        summary: SummaryDoc {
            sample_times: &summary.sample_times,
            n_trajectories: summary.n_trajectories,
            mean_x: &summary.mean_x,
            mean_var_x: &summary.mean_var_x,
            median_var_x: &summary.median_var_x,
            mean_lobe_masses: summary.mean_lobe_masses.as_deref(),
            coherence_abs: summary.coherence_abs.as_deref(),
            coherence_stderr: summary.coherence_stderr.as_deref(),
            outcome_counts: summary.outcome_counts,
            mean_jump_count: summary.mean_jump_count,
        },
        trajectories: &output.records,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("tree document serializes");
    text.push('\n');
    text
}

/// Renders the run result in the requested format.
pub fn render(config: &ExperimentConfig, output: &RunOutput, format: Format) -> String {
    match format {
        Format::Table => render_table(config, &output.summary),
        Format::Tree => render_tree(config, output),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::load_config;
    use crate::runner::run_experiment;

    fn small_run() -> (ExperimentConfig, RunOutput) {
        let config = load_config(
            r#"
model = "grw"
master_seed = 5
n_trajectories = 3
t_final = 0.4
dt = 0.01
sample_times = [0.0, 0.2, 0.4]

[grid]
n_sites = 64
dx = 0.5
x_min = -16.0

[initial_state]
kind = "cat"
centers = [-5.0, 5.0]
sigma = 1.0
weights = [0.6, 0.8]

[collapse]
lambda_rate = 2.0
r_c = 1.0
"#,
        )
        .unwrap();
        let output = run_experiment(&config, 2).unwrap();
        (config, output)
    }

    #[test]
    fn table_has_header_units_and_one_row_per_sample_time() {
        let (config, output) = small_run();
        let table = render_table(&config, &output.summary);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with('#'));
        assert!(table.contains("natural units"));
        assert!(table.contains("time_natural,mean_x_natural"));
        let data_rows = lines.iter().filter(|l| !l.starts_with('#')).count();
        assert_eq!(data_rows, 1 + 3);
    }

    #[test]
    fn tree_echoes_the_config_and_stamps_the_format() {
        let (config, output) = small_run();
        let tree = render_tree(&config, &output);
        let doc: serde_json::Value = serde_json::from_str(&tree).unwrap();
        assert_eq!(doc["format_version"], 1);
        assert_eq!(doc["config"]["model"], "grw");
        assert_eq!(doc["config"]["master_seed"], 5);
        assert_eq!(doc["summary"]["n_trajectories"], 3);
        assert_eq!(
            doc["trajectories"].as_array().map(|a| a.len()),
            Some(3)
        );
        assert!(doc["units"]["time_unit_s"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let (config, output) = small_run();
        let again = run_experiment(&config, 7).unwrap();
        assert_eq!(
            render(&config, &output, Format::Tree),
            render(&config, &again, Format::Tree)
        );
        assert_eq!(
            render(&config, &output, Format::Table),
            render(&config, &again, Format::Table)
        );
    }
}
