//! Grid execution: one seeded chain per (algorithm, topology, SNR, seed)
//! cell, each evaluated against the task's validation set or its exact
//! posterior and persisted under the output directory.
//!
//! Layout written by [`run_grid`]:
//!
//! ```text
//! <out_dir>/results.csv                      one row per cell
//! <out_dir>/cells/<cell>/report.json         full record incl. per-agent stats
//! <out_dir>/cells/<cell>/agent_<k>.csv       samples, when dump_chains is set
//! ```
//!
//! Cells run in parallel but are collected in a fixed order and contain no
//! timestamps, so `results.csv` is byte-identical across reruns and thread
//! counts.

use std::path::Path;
use std::time::Instant;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::metrics::{classifier_metrics, posterior_moment_error, EvaluationReport};
use crate::models::{
    exact_posterior, generate_synthetic_task, Dataset, GaussianPosterior, ModelSpec,
    SyntheticTask, TaskKind,
};
use crate::samplers::{run_chain, Algorithm, ChainSetup, LinkBudget};
use crate::topology::{
    build_mixing_matrix, build_topology, spectral_mixing_weight, Topology, TopologyKind,
};

use super::config::{ExperimentConfig, TRANSMIT_POWER};

/// Name of the per-grid result table inside the output directory.
pub const RESULTS_FILE: &str = "results.csv";

/// Topology label recorded for the centralized baseline, which runs on a
/// single agent holding the pooled data.
pub const CENTRALIZED: &str = "centralized";

/// Evaluation of one agent's own samples, recorded next to the pooled
/// report to make consensus failures visible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentDiagnostics {
    pub agent: usize,
    pub accuracy: Option<f64>,
    pub ece: Option<f64>,
    pub mean_err: Option<f64>,
    pub cov_err: Option<f64>,
    pub samples: usize,
}

/// Everything known about one executed cell. `report` is absent when the
/// run failed; the failure itself is kept in `error` so a bad cell shows up
/// in the results instead of aborting the sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub topology: String,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
    pub duration_secs: f64,
    pub report: Option<EvaluationReport>,
    pub per_agent: Vec<AgentDiagnostics>,
    pub error: Option<String>,
}

type Cell = (Algorithm, Option<TopologyKind>, Option<f64>, u64);

/// The cell list in its fixed execution-and-output order: algorithms,
/// then topologies, then SNRs, then seeds. Ignored axes are collapsed,
/// matching [`ExperimentConfig::cell_count`].
fn enumerate_cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let snr_axis = cfg.snr_axis();
    let no_snr = [None];
    let mut cells = Vec::with_capacity(cfg.cell_count());
    for &alg in &cfg.algorithms {
        let topologies: Vec<Option<TopologyKind>> = if alg == Algorithm::Sgld {
            vec![None]
        } else {
            cfg.topologies.iter().copied().map(Some).collect()
        };
        let snrs: &[Option<f64>] = if alg.uses_channel() { &snr_axis } else { &no_snr };
        for &topo in &topologies {
            for &snr in snrs {
                for &seed in &cfg.seeds {
                    cells.push((alg, topo, snr, seed));
                }
            }
        }
    }
    cells
}

fn topology_label(topo: Option<TopologyKind>) -> String {
    topo.map_or_else(|| CENTRALIZED.to_string(), |t| t.as_str().to_string())
}

fn cell_dir_name(alg: Algorithm, topo_label: &str, snr: Option<f64>, seed: u64) -> String {
    let snr_label = snr.map_or_else(|| "na".to_string(), |s| s.to_string());
    format!("{}_{}_snr{}_seed{}", alg.as_str(), topo_label, snr_label, seed)
}

/// Runs every cell of the grid, persists results under `out_dir`, and
/// returns the records in cell order. Individual cell failures are
/// recorded, not propagated; only configuration and IO problems abort.
pub fn run_grid(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<RunRecord>> {
    let task = generate_synthetic_task(cfg.data_seed, &cfg.task)?;
    let oracle = match task.spec.kind {
        TaskKind::ConjugateGaussian { .. } => {
            Some(exact_posterior(&task.spec, &Dataset::pooled(&task.agent_data)?)?)
        }
        _ => None,
    };
    let pooled_shard = if cfg.algorithms.contains(&Algorithm::Sgld) {
        Some(Dataset::pooled(&task.agent_data)?)
    } else {
        None
    };

    let cells = enumerate_cells(cfg);
    std::fs::create_dir_all(out_dir.join("cells"))?;
    let config_hash = cfg.config_hash();

    let records = cells
        .par_iter()
        .map(|&(alg, topo, snr, seed)| {
            execute_cell(
                cfg,
                &task,
                oracle.as_ref(),
                pooled_shard.as_ref(),
                &config_hash,
                out_dir,
                (alg, topo, snr, seed),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    write_results_csv(&records, &out_dir.join(RESULTS_FILE))?;
    Ok(records)
}

/// Appends one row per record to a fresh `results.csv`. Failed cells keep
/// their grid coordinates and leave every metric field empty.
fn write_results_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(EvaluationReport::csv_header())?;
    for record in records {
        let row = match &record.report {
            Some(report) => report.csv_record(),
            None => vec![
                record.algorithm.clone(),
                record.topology.clone(),
                record.snr_db.map(|s| s.to_string()).unwrap_or_default(),
                record.seed.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ],
        };
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn execute_cell(
    cfg: &ExperimentConfig,
    task: &SyntheticTask,
    oracle: Option<&GaussianPosterior>,
    pooled_shard: Option<&Dataset>,
    config_hash: &str,
    out_dir: &Path,
    (alg, topo, snr, seed): Cell,
) -> Result<RunRecord> {
    let started = Instant::now();
    let outcome = run_cell(cfg, task, oracle, pooled_shard, alg, topo, snr, seed);
    let duration_secs = started.elapsed().as_secs_f64();

    let topo_label = topology_label(topo);
    let (report, per_agent, samples, error) = match outcome {
        Ok(cell) => (Some(cell.report), cell.per_agent, Some(cell.samples), None),
        Err(e) => (None, Vec::new(), None, Some(e.to_string())),
    };
    let record = RunRecord {
        algorithm: alg.as_str().to_string(),
        topology: topo_label.clone(),
        snr_db: snr,
        seed,
        config_hash: config_hash.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_secs,
        report,
        per_agent,
        error,
    };

    let cell_dir = out_dir.join("cells").join(cell_dir_name(alg, &topo_label, snr, seed));
    std::fs::create_dir_all(&cell_dir)?;
    let mut json = serde_json::to_string_pretty(&record)?;
    json.push('\n');
    std::fs::write(cell_dir.join("report.json"), json)?;

    if cfg.dump_chains {
        if let Some(samples) = &samples {
            for (k, chain) in samples.iter().enumerate() {
                write_sample_csv(&cell_dir.join(format!("agent_{k}.csv")), chain)?;
            }
        }
    }
    Ok(record)
}

fn write_sample_csv(path: &Path, samples: &[Array1<f64>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let dim = samples.first().map_or(0, Array1::len);
    writer.write_record((0..dim).map(|i| format!("coord_{i}")))?;
    for sample in samples {
        writer.write_record(sample.iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

struct CellOutput {
    report: EvaluationReport,
    per_agent: Vec<AgentDiagnostics>,
    /// Per agent, the samples the evaluation used.
    samples: Vec<Vec<Array1<f64>>>,
}

/// Whatever subset of the metrics applies to this task: classifier scores
/// when there is a validation set, moment errors when there is an exact
/// posterior and enough samples to form a covariance.
fn evaluate(
    spec: &ModelSpec,
    samples: &[Array1<f64>],
    validation: &Dataset,
    oracle: Option<&GaussianPosterior>,
    bins: usize,
) -> Result<(Option<f64>, Option<f64>, Option<f64>, Option<f64>)> {
    let (accuracy, ece) = if validation.is_empty() {
        (None, None)
    } else {
        let (a, e) = classifier_metrics(spec, samples, validation, bins)?;
        (Some(a), Some(e))
    };
    let (mean_err, cov_err) = match oracle {
        Some(oracle) if samples.len() >= 2 => {
            let (m, c) = posterior_moment_error(samples, oracle)?;
            (Some(m), Some(c))
        }
        _ => (None, None),
    };
    Ok((accuracy, ece, mean_err, cov_err))
}

fn run_cell(
    cfg: &ExperimentConfig,
    task: &SyntheticTask,
    oracle: Option<&GaussianPosterior>,
    pooled_shard: Option<&Dataset>,
    alg: Algorithm,
    topo: Option<TopologyKind>,
    snr: Option<f64>,
    seed: u64,
) -> Result<CellOutput> {
    let spec = &task.spec;
    let (topology, mixing, shards) = match topo {
        None => {
            let t = Topology::new(1, &[])?;
            let mixing = build_mixing_matrix(&t, 0.0)?;
            let shard = pooled_shard
                .ok_or_else(|| Error::Internal("centralized cell without a pooled shard".into()))?;
            (t, mixing, vec![shard.clone()])
        }
        Some(kind) => {
            let t = build_topology(kind, cfg.task.n_agents)?;
            let w = spectral_mixing_weight(&t.laplacian())?;
            let mixing = build_mixing_matrix(&t, w)?;
            (t, mixing, task.agent_data.clone())
        }
    };
    let channel = match snr {
        Some(db) => Some(ChannelParams::from_snr_db(TRANSMIT_POWER, db, spec.dimension())?),
        None => None,
    };
    let sampler_config = cfg.sampler_config(alg);
    let chain = run_chain(&ChainSetup {
        seed,
        spec,
        agent_data: &shards,
        topology: &topology,
        mixing: &mixing,
        config: &sampler_config,
        channel: channel.as_ref(),
        value_bits: cfg.value_bits,
        link_budget: LinkBudget::SinrLimited,
    })?;

    // Samplers pool their retained draws into one ensemble; the descent
    // algorithms contribute one point estimate per agent.
    let samples: Vec<Vec<Array1<f64>>> = (0..topology.n_agents())
        .map(|k| {
            if alg.is_sampler() {
                chain.retained(k).to_vec()
            } else {
                vec![chain.iterate(k).clone()]
            }
        })
        .collect();
    let pooled: Vec<Array1<f64>> = samples.iter().flatten().cloned().collect();

    let (accuracy, ece, mean_err, cov_err) =
        evaluate(spec, &pooled, &task.validation, oracle, cfg.calibration_bins)?;
    let per_agent = samples
        .iter()
        .enumerate()
        .map(|(k, own)| {
            let (accuracy, ece, mean_err, cov_err) =
                evaluate(spec, own, &task.validation, oracle, cfg.calibration_bins)?;
            Ok(AgentDiagnostics { agent: k, accuracy, ece, mean_err, cov_err, samples: own.len() })
        })
        .collect::<Result<Vec<_>>>()?;

    let report = EvaluationReport {
        algorithm: alg.as_str().to_string(),
        topology: topology_label(topo),
        snr_db: snr,
        seed,
        accuracy,
        ece,
        mean_err,
        cov_err,
        retained_samples: pooled.len(),
    };
    report.validate()?;
    Ok(CellOutput { report, per_agent, samples })
}

#[cfg(test)]
mod tests {
    use super::super::config::parse_config;
    use super::*;

    fn grid_fixture(extra: &str) -> ExperimentConfig {
        let text = format!(
            "\
[task]
kind = conjugate-gaussian
input_dim = 2
per_class_per_agent = 4
data_seed = 3

{extra}
"
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn sweep_covers_the_grid_and_reruns_are_byte_identical() {
        let cfg = grid_fixture(
            "\
[grid]
algorithms = cd-dsgld, q-dsgd
topologies = full, ring, star
snr_db = 0, 5, 10, 20
seeds = 1, 2, 3

[sampler]
rounds = 5
burn_in = 2
",
        );
        assert_eq!(cfg.cell_count(), 72);

        let dir = tempfile::tempdir().unwrap();
        let records = run_grid(&cfg, dir.path()).unwrap();
        assert_eq!(records.len(), 72);
        assert!(records.iter().all(|r| r.error.is_none() && r.report.is_some()));

        let csv = std::fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
        assert_eq!(csv.lines().count(), 73);

        let first = records.first().unwrap();
        let report = first.report.as_ref().unwrap();
        assert_eq!(report.retained_samples, 3 * 5);
        assert!(report.mean_err.is_some() && report.cov_err.is_some());
        assert!(report.accuracy.is_none() && report.ece.is_none());
        assert_eq!(first.per_agent.len(), 5);
        assert!(dir
            .path()
            .join("cells/cd-dsgld_full_snr0_seed1/report.json")
            .is_file());

        let rerun_dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        pool.install(|| run_grid(&cfg, rerun_dir.path()).unwrap());
        let rerun_csv = std::fs::read_to_string(rerun_dir.path().join(RESULTS_FILE)).unwrap();
        assert_eq!(csv, rerun_csv);
    }

    #[test]
    fn ignored_axes_are_collapsed_per_algorithm() {
        let cfg = grid_fixture(
            "\
[grid]
algorithms = sgld, dsgld, cd-dsgld
topologies = full, ring
snr_db = 10, 20
seeds = 1

[sampler]
rounds = 4
burn_in = 1
",
        );
        // sgld: 1 cell, dsgld: 2 topologies, cd-dsgld: 2 x 2.
        assert_eq!(cfg.cell_count(), 7);
        let dir = tempfile::tempdir().unwrap();
        let records = run_grid(&cfg, dir.path()).unwrap();
        let coords: Vec<(String, String, Option<f64>)> = records
            .iter()
            .map(|r| (r.algorithm.clone(), r.topology.clone(), r.snr_db))
            .collect();
        assert_eq!(
            coords,
            vec![
                ("sgld".into(), CENTRALIZED.into(), None),
                ("dsgld".into(), "full".into(), None),
                ("dsgld".into(), "ring".into(), None),
                ("cd-dsgld".into(), "full".into(), Some(10.0)),
                ("cd-dsgld".into(), "full".into(), Some(20.0)),
                ("cd-dsgld".into(), "ring".into(), Some(10.0)),
                ("cd-dsgld".into(), "ring".into(), Some(20.0)),
            ]
        );
        // The centralized baseline pools the shards onto one agent.
        assert_eq!(records[0].per_agent.len(), 1);
        assert_eq!(records[0].report.as_ref().unwrap().retained_samples, 3);
    }

    #[test]
    fn a_diverging_cell_is_recorded_without_aborting_the_sweep() {
        let cfg = grid_fixture(
            "\
[grid]
algorithms = sgld, dsgld
seeds = 1

[sampler]
step_size = 0.15
rounds = 400
burn_in = 399
",
        );
        let dir = tempfile::tempdir().unwrap();
        let records = run_grid(&cfg, dir.path()).unwrap();
        assert_eq!(records.len(), 2);

        // The pooled run sees all 20 examples plus a full-weight prior,
        // so its curvature exceeds 2 / step_size and the chain blows up;
        // each distributed agent only holds 4 examples and stays stable.
        let sgld = &records[0];
        assert_eq!(sgld.algorithm, "sgld");
        assert!(sgld.report.is_none());
        assert!(sgld.error.as_deref().unwrap().contains("diverged"));

        let dsgld = &records[1];
        assert!(dsgld.error.is_none());
        assert!(dsgld.report.as_ref().unwrap().mean_err.is_some());

        let csv = std::fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
        let failed_row = csv.lines().nth(1).unwrap();
        assert_eq!(failed_row, "sgld,centralized,,1,,,,,");

        let report_json = std::fs::read_to_string(
            dir.path().join("cells/sgld_centralized_snrna_seed1/report.json"),
        )
        .unwrap();
        assert!(report_json.contains("diverged"));
    }

    #[test]
    fn descent_cells_report_one_point_estimate_per_agent() {
        let cfg = grid_fixture(
            "\
[grid]
algorithms = dsgd
seeds = 9

[sampler]
rounds = 10
burn_in = 9
",
        );
        let dir = tempfile::tempdir().unwrap();
        let records = run_grid(&cfg, dir.path()).unwrap();
        let record = &records[0];
        let report = record.report.as_ref().unwrap();
        assert_eq!(report.retained_samples, 5);
        assert!(report.mean_err.is_some());
        for diag in &record.per_agent {
            assert_eq!(diag.samples, 1);
            // A single point estimate has no covariance to compare.
            assert!(diag.mean_err.is_none() && diag.cov_err.is_none());
        }
    }

    #[test]
    fn classifier_cells_report_accuracy_and_calibration() {
        let text = "\
[task]
kind = logistic
input_dim = 2
per_class_per_agent = 3
validation_examples = 40
data_seed = 5

[grid]
algorithms = dsgld
seeds = 2

[sampler]
rounds = 30
burn_in = 20
";
        let cfg = parse_config(text).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let records = run_grid(&cfg, dir.path()).unwrap();
        let report = records[0].report.as_ref().unwrap();
        let accuracy = report.accuracy.unwrap();
        let ece = report.ece.unwrap();
        assert!((0.0..=1.0).contains(&accuracy));
        assert!((0.0..=1.0).contains(&ece));
        assert!(report.mean_err.is_none() && report.cov_err.is_none());
        assert_eq!(report.retained_samples, 10 * 5);
    }

    #[test]
    fn chain_dumps_have_one_row_per_sample() {
        let cfg = grid_fixture(
            "\
[grid]
algorithms = dsgld
seeds = 4

[sampler]
rounds = 6
burn_in = 3

[output]
dump_chains = true
",
        );
        let dir = tempfile::tempdir().unwrap();
        run_grid(&cfg, dir.path()).unwrap();
        let cell = dir.path().join("cells/dsgld_full_snrna_seed4");
        for k in 0..5 {
            let dump = std::fs::read_to_string(cell.join(format!("agent_{k}.csv"))).unwrap();
            let mut lines = dump.lines();
            assert_eq!(lines.next().unwrap(), "coord_0,coord_1");
            assert_eq!(lines.count(), 3);
        }
    }
}
