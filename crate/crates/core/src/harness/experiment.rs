use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::evaluate_auc;
use super::nemenyi::{nemenyi_test, Alpha, AucTable, NemenyiResult};
use super::train::{train_model, MetricsReport};
use crate::corpus::{build_qs_matrix, filter_multi_skill, load_interactions, split_train_test, write_id_maps, InteractionLog};
use crate::error::{KtError, Result};
use crate::model::{GraphInputs, KtModel};
use crate::params::NamedMatrix;
use crate::skillgraph::{write_difficulty_csv, write_ss_csv};

/// Parameters of a trained model plus the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub parameters: Vec<NamedMatrix>,
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let text = read_existing(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        if ck.config.hash() != ck.config_hash {
            return Err(KtError::Validation(format!(
                "checkpoint {} was written by a different config",
                path.display()
            )));
        }
        Ok(ck)
    }

    /// Rebuilds the model on `inputs` with the stored parameters.
    pub fn restore(&self, inputs: Arc<GraphInputs>) -> Result<KtModel> {
        let mut model = KtModel::new(self.config.model.clone(), inputs, self.config.seed)?;
        model.store.restore(&self.parameters)?;
        Ok(model)
    }
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub model: KtModel,
    pub train: InteractionLog,
    pub test: InteractionLog,
}

fn read_existing(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => KtError::MissingFile(path.to_path_buf()),
        _ => KtError::io(path, e),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| KtError::io(path, e))
}

/// The configured log, multi-skill filtered if asked.
pub fn load_dataset(config: &ExperimentConfig) -> Result<InteractionLog> {
    let log = load_interactions(&config.log_path, &config.qs_path).map_err(KtError::at("load"))?;
    if config.multi_skill_only {
        filter_multi_skill(&log).map_err(KtError::at("filter"))
    } else {
        Ok(log)
    }
}

/// Graph features for `log`, with difficulty taken from `train` only.
pub fn graph_inputs(config: &ExperimentConfig, log: &InteractionLog, train: &InteractionLog) -> Result<GraphInputs> {
    let qs = build_qs_matrix(log);
    GraphInputs::prepare(&qs, train, config.model.neighbor_cap, config.seed)
}

/// Split, graph build, training and test evaluation on an in-memory log.
pub fn run_on_log(config: &ExperimentConfig, log: &InteractionLog) -> Result<RunOutput> {
    config.validate().map_err(KtError::at("config"))?;
    let (train, test) = split_train_test(log, config.split_ratio, config.seed).map_err(KtError::at("split"))?;
    let inputs = Arc::new(graph_inputs(config, log, &train).map_err(KtError::at("graph"))?);
    let outcome = train_model(config, inputs, &train).map_err(KtError::at("train"))?;
    let test_auc = evaluate_auc(&outcome.model, &test).map_err(KtError::at("evaluate"))?;
    let report = MetricsReport {
        name: config.name.clone(),
        variant: config.model.variant,
        seed: config.seed,
        config_hash: config.hash(),
        test_auc,
        best_epoch: outcome.best_epoch,
        epochs: outcome.epochs,
        wall_clock_secs: outcome.wall_clock_secs,
        n_train_students: train.n_students(),
        n_test_students: test.n_students(),
        n_parameters: outcome.model.store.n_scalars(),
    };
    Ok(RunOutput {
        report,
        model: outcome.model,
        train,
        test,
    })
}

/// Writes `metrics.json`, `auc_table.csv` and `checkpoint.json` into the
/// config's output directory.
pub fn write_run(config: &ExperimentConfig, run: &RunOutput) -> Result<()> {
    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|e| KtError::io(dir, e))?;
    write_json(&run.report, &dir.join("metrics.json"))?;
    AucTable {
        models: vec![run.report.variant.to_string()],
        datasets: vec![run.report.name.clone()],
        values: vec![vec![run.report.test_auc]],
    }
    .write_csv(&dir.join("auc_table.csv"))?;
    let ck = Checkpoint {
        config_hash: config.hash(),
        config: config.clone(),
        parameters: run.model.store.snapshot(),
    };
    write_json(&ck, &dir.join("checkpoint.json"))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsReport> {
    let log = load_dataset(config)?;
    let run = run_on_log(config, &log)?;
    write_run(config, &run).map_err(KtError::at("write"))?;
    Ok(run.report)
}

pub fn read_metrics(path: &Path) -> Result<MetricsReport> {
    Ok(serde_json::from_str(&read_existing(path)?)?)
}

pub fn write_metrics(report: &MetricsReport, path: &Path) -> Result<()> {
    write_json(report, path)
}

/// Models × datasets table from run reports; repeated seeds are averaged.
pub fn auc_table_from_reports(reports: &[MetricsReport]) -> Result<AucTable> {
    let mut cells: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    let mut models = Vec::new();
    let mut datasets = Vec::new();
    for r in reports {
        let m = r.variant.to_string();
        if !models.contains(&m) {
            models.push(m.clone());
        }
        if !datasets.contains(&r.name) {
            datasets.push(r.name.clone());
        }
        let e = cells.entry((m, r.name.clone())).or_insert((0.0, 0));
        e.0 += r.test_auc;
        e.1 += 1;
    }
    let values = models
        .iter()
        .map(|m| {
            datasets
                .iter()
                .map(|d| match cells.get(&(m.clone(), d.clone())) {
                    Some(&(sum, n)) => Ok(sum / n as f64),
                    None => Err(KtError::Validation(format!("no run of {m} on {d}"))),
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(AucTable {
        models,
        datasets,
        values,
    })
}

/// Ranks the models in `table` and writes `auc_table.csv`, `nemenyi.csv`
/// and `cd.svg` into `out_dir`.
pub fn compare_table(table: &AucTable, alpha: Alpha, out_dir: &Path) -> Result<NemenyiResult> {
    let result = nemenyi_test(table, alpha)?;
    fs::create_dir_all(out_dir).map_err(|e| KtError::io(out_dir, e))?;
    table.write_csv(&out_dir.join("auc_table.csv"))?;
    result.write_csv(&out_dir.join("nemenyi.csv"))?;
    let svg = out_dir.join("cd.svg");
    fs::write(&svg, result.to_svg()).map_err(|e| KtError::io(&svg, e))?;
    Ok(result)
}

pub fn compare_runs(paths: &[PathBuf], alpha: Alpha, out_dir: &Path) -> Result<NemenyiResult> {
    let reports = paths
        .iter()
        .map(|p| read_metrics(p))
        .collect::<Result<Vec<_>>>()
        .map_err(KtError::at("load"))?;
    let table = auc_table_from_reports(&reports).map_err(KtError::at("table"))?;
    compare_table(&table, alpha, out_dir).map_err(KtError::at("nemenyi"))
}

/// Writes the derived graph features: `ss.csv`, `difficulty.csv`,
/// `modes.csv` and the id maps.
pub fn write_report(config: &ExperimentConfig, out_dir: &Path) -> Result<GraphInputs> {
    let log = load_dataset(config)?;
    let (train, _) = split_train_test(&log, config.split_ratio, config.seed).map_err(KtError::at("split"))?;
    let inputs = graph_inputs(config, &log, &train).map_err(KtError::at("graph"))?;
    let write = || -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| KtError::io(out_dir, e))?;
        write_ss_csv(&inputs.graph, &out_dir.join("ss.csv"))?;
        write_difficulty_csv(&inputs.difficulty, &out_dir.join("difficulty.csv"))?;
        inputs.modes.write_csv(&log.ids().questions, &out_dir.join("modes.csv"))?;
        write_id_maps(&log, out_dir)
    };
    write().map_err(KtError::at("write"))?;
    Ok(inputs)
}
