//! Multi-initialization studies, metrics and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::build::{Experiment, Seeds};
use super::config::ExperimentConfig;
use super::io::{cell, csv_error, sha256_hex, write_field_bin};
use crate::eki::{
    run_inversion, EkiControls, Ensemble, IterationRecord, Monitor, StopReason, UpsilonRule,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::forward::{ForwardModel, ObservationModel, Parameterization};
use crate::grid::Field;
use crate::rng::member_stream;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub relative_error: f64,
    pub data_misfit: f64,
}

/// Relative `L²` error of `mean` against `truth` and the whitened misfit of
/// the mean forward output.
pub fn compute_metrics(
    mean: &Field,
    truth: &Field,
    obs: &ObservationModel,
    outputs: &[Vec<f64>],
) -> Result<Metrics> {
    let norm = truth.l2_norm();
    if !(norm > 0.0) {
        return Err(Error::param(
            "truth",
            "relative error needs a truth with nonzero norm",
        ));
    }
    if mean.layout() != truth.layout() || mean.values().len() != truth.values().len() {
        return Err(Error::DimensionMismatch {
            context: "metric fields",
            expected: truth.values().len(),
            found: mean.values().len(),
        });
    }
    let wbar = average(outputs);
    Ok(Metrics {
        relative_error: mean.l2_distance(truth) / norm,
        data_misfit: obs.misfit(&wbar),
    })
}

fn average(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut m = vec![0.0; rows.first().map_or(0, Vec::len)];
    for r in rows {
        for (a, b) in m.iter_mut().zip(r) {
            *a += b;
        }
    }
    let n = rows.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

fn mean_field(fields: &[Field]) -> Result<Field> {
    let rows: Vec<Vec<f64>> = fields.iter().map(|f| f.values().to_vec()).collect();
    Field::new(*fields[0].domain(), fields[0].layout(), average(&rows))
}

/// Ensemble mean of the reported field (`u` or `log κ`).
pub fn ensemble_mean_field(model: &ForwardModel, ensemble: &Ensemble, exec: Exec) -> Result<Field> {
    let fields = exec.try_map(ensemble.len(), |j| model.reported_field(ensemble.member(j)))?;
    mean_field(&fields)
}

/// Ensemble mean of the length-scale field for field-valued hierarchies.
pub fn ensemble_mean_length_scale(
    model: &ForwardModel,
    ensemble: &Ensemble,
    exec: Exec,
) -> Result<Option<Field>> {
    let Parameterization::Single(p) = &model.param else {
        return Ok(None);
    };
    let ells = exec.try_map(ensemble.len(), |j| p.length_scale(ensemble.member(j)))?;
    let ells: Option<Vec<Field>> = ells.into_iter().collect();
    ells.map(|e| mean_field(&e)).transpose()
}

/// Records relative error, mean hyperparameters and the mean field of
/// every iterate.
struct Tracker<'a> {
    exp: &'a Experiment,
    exec: Exec,
    means: Vec<Field>,
}

impl Monitor for Tracker<'_> {
    fn observe(
        &mut self,
        ensemble: &Ensemble,
        outputs: &[Vec<f64>],
        record: &mut IterationRecord,
    ) -> Result<()> {
        let model = &self.exp.model;
        let mean = ensemble_mean_field(model, ensemble, self.exec)?;
        let m = compute_metrics(&mean, &self.exp.truth.field, &self.exp.obs, outputs)?;
        record.rel_error = Some(m.relative_error);
        let hypers = self
            .exec
            .try_map(ensemble.len(), |j| model.param.hypers(ensemble.member(j)))?;
        record.hypers = average(&hypers);
        self.means.push(mean);
        Ok(())
    }
}

pub fn controls_from(config: &ExperimentConfig, seed: u64, exec: Exec) -> EkiControls {
    let e = &config.eki;
    EkiControls {
        rho: e.rho.unwrap(),
        zeta: e.zeta.unwrap(),
        upsilon0: e.upsilon0.unwrap(),
        max_iter: e.max_iter.unwrap(),
        max_doublings: e.max_doublings.unwrap(),
        perturb: e.perturb.unwrap(),
        upsilon_mode: e.upsilon_mode.unwrap(),
        rule: UpsilonRule::Doubling,
        seed,
        exec,
        record_wall_time: config.run.record_wall_time.unwrap(),
    }
}

/// Initial ensemble of initialization `i`, one counter-based stream per member.
pub fn initial_ensemble(exp: &Experiment, init_seed: u64, exec: Exec) -> Result<Ensemble> {
    let j = exp.config.eki.n_ensemble.unwrap();
    let members = exec.try_map(j, |m| {
        exp.model
            .sample(&mut member_stream(init_seed, "prior", 0, m))
    })?;
    Ensemble::new(members)
}

#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub index: usize,
    pub seed: u64,
    pub stop: StopReason,
    pub records: Vec<IterationRecord>,
    pub diagnostic: Option<String>,
    /// Mean reported field of every iterate.
    pub means: Vec<Field>,
    pub length_scale: Option<Field>,
}

impl InitOutcome {
    pub fn final_record(&self) -> Option<&IterationRecord> {
        self.records.last()
    }
}

pub fn run_initialization(exp: &Experiment, index: usize, exec: Exec) -> InitOutcome {
    let seed = exp.seeds.initialization(index);
    let mut tracker = Tracker {
        exp,
        exec,
        means: Vec::new(),
    };
    let result = initial_ensemble(exp, seed, exec).and_then(|ens| {
        let controls = controls_from(&exp.config, Seeds::perturbation(seed), exec);
        run_inversion(ens, &exp.model, &exp.obs, &controls, &mut tracker)
    });
    match result {
        Ok(inv) => {
            let length_scale =
                ensemble_mean_length_scale(&exp.model, &inv.ensemble, exec).unwrap_or(None);
            InitOutcome {
                index,
                seed,
                stop: inv.stop,
                records: inv.records,
                diagnostic: inv.diagnostic,
                means: tracker.means,
                length_scale,
            }
        }
        Err(e) => InitOutcome {
            index,
            seed,
            stop: StopReason::Aborted,
            records: Vec::new(),
            diagnostic: Some(e.to_string()),
            means: tracker.means,
            length_scale: None,
        },
    }
}

/// Iterates stored as snapshots: first, last and evenly spaced in between.
pub fn snapshot_schedule(last: usize, count: usize) -> Vec<usize> {
    if count == 0 {
        return vec![];
    }
    if count == 1 || last == 0 {
        return vec![last];
    }
    let mut s: Vec<usize> = (0..count)
        .map(|k| ((k * last) as f64 / (count - 1) as f64).round() as usize)
        .collect();
    s.dedup();
    s
}

/// Derived seeds span all of `u64`, beyond TOML's integer range, so the
/// manifest stores them as hex strings.
mod hex_seed {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{v:#018x}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        let s = String::deserialize(d)?;
        let digits = s
            .strip_prefix("0x")
            .ok_or_else(|| D::Error::custom("seed must start with 0x"))?;
        u64::from_str_radix(digits, 16).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSummary {
    pub index: usize,
    #[serde(with = "hex_seed")]
    pub seed: u64,
    #[serde(with = "hex_seed")]
    pub perturbation_seed: u64,
    pub stop: String,
    pub iterations: usize,
    pub final_misfit: Option<f64>,
    pub final_rel_error: Option<f64>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub master_seed: u64,
    #[serde(with = "hex_seed")]
    pub truth_seed: u64,
    #[serde(with = "hex_seed")]
    pub noise_seed: u64,
    pub noise_level: f64,
    pub stopping_threshold: f64,
    pub initializations: Vec<InitSummary>,
    pub files: Vec<FileEntry>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Reads either an experiment config or a previous run manifest and
/// returns the resolved config.
pub fn load_run_input(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    let mut config = if table.contains_key("version") && table.contains_key("config") {
        RunManifest::load(path)?.config
    } else {
        ExperimentConfig::from_toml_str(&text)?
    };
    config.resolve()?;
    Ok(config)
}

fn write_iterations(path: &Path, outcome: &InitOutcome, names: &[String]) -> Result<()> {
    let col = |p: &str| names.iter().position(|n| n.starts_with(p));
    let (ia, it) = (col("alpha"), col("tau"));
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record([
        "iter",
        "misfit",
        "rel_error",
        "upsilon",
        "alpha_mean",
        "tau_mean",
        "wall_ms",
    ])
    .map_err(csv_error)?;
    for r in &outcome.records {
        let h = |i: Option<usize>| i.and_then(|i| r.hypers.get(i).copied());
        w.write_record([
            r.iter.to_string(),
            cell(Some(r.misfit)),
            cell(r.rel_error),
            cell(r.upsilon),
            cell(h(ia)),
            cell(h(it)),
            cell(r.wall_ms),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_hypers(path: &Path, outcome: &InitOutcome, names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    let mut header = vec!["iter".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for r in &outcome.records {
        let mut row = vec![r.iter.to_string()];
        row.extend(r.hypers.iter().map(|v| cell(Some(*v))));
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_data(path: &Path, exp: &Experiment) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["index", "x1", "x2", "y"])
        .map_err(csv_error)?;
    for (k, (f, y)) in exp.obs.functionals.iter().zip(&exp.obs.y).enumerate() {
        let c = f.center();
        w.write_record([
            k.to_string(),
            cell(Some(c[0])),
            cell(Some(c[1])),
            cell(Some(*y)),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn write_outcome(
    dir: &Path,
    outcome: &InitOutcome,
    names: &[String],
    snapshots: usize,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_iterations(&dir.join("iterations.csv"), outcome, names)?;
    if !names.is_empty() {
        write_hypers(&dir.join("hyper.csv"), outcome, names)?;
    }
    if let Some(last) = outcome.means.last() {
        write_field_bin(&dir.join("mean_field.bin"), last)?;
        let snap = dir.join("snapshots");
        fs::create_dir_all(&snap)?;
        for k in snapshot_schedule(outcome.means.len() - 1, snapshots) {
            write_field_bin(&snap.join(format!("iter_{k:03}.bin")), &outcome.means[k])?;
        }
    }
    if let Some(ell) = &outcome.length_scale {
        write_field_bin(&dir.join("length_scale.bin"), ell)?;
    }
    Ok(())
}

fn inventory(root: &Path) -> Result<Vec<FileEntry>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else if p
                .file_name()
                .is_some_and(|n| n != "manifest.toml" && n != "summary.csv")
            {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, root, &mut files)?;
    files.sort();
    files
        .iter()
        .map(|p| {
            Ok(FileEntry {
                path: p
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .replace('\\', "/"),
                sha256: sha256_hex(p)?,
            })
        })
        .collect()
}

/// Runs all initializations and writes every output file plus the manifest.
pub fn run_experiment(config: &ExperimentConfig, exec: Exec) -> Result<RunManifest> {
    let exp = Experiment::build(config)?;
    let out = config.run.out_dir.clone().unwrap();
    fs::create_dir_all(&out)?;
    write_field_bin(&out.join("truth.bin"), &exp.truth.field)?;
    write_data(&out.join("data.csv"), &exp)?;
    let names = exp.model.param.hyper_names();
    let n = config.run.n_initializations.unwrap();
    let outcomes = exec.map(n, |i| run_initialization(&exp, i, exec));
    for o in &outcomes {
        write_outcome(
            &out.join(format!("init_{:02}", o.index)),
            o,
            &names,
            config.run.snapshots.unwrap(),
        )?;
    }
    let initializations = outcomes
        .iter()
        .map(|o| InitSummary {
            index: o.index,
            seed: o.seed,
            perturbation_seed: Seeds::perturbation(o.seed),
            stop: o.stop.as_str().to_string(),
            iterations: o.records.len().saturating_sub(1),
            final_misfit: o.final_record().map(|r| r.misfit),
            final_rel_error: o.final_record().and_then(|r| r.rel_error),
            diagnostic: o.diagnostic.clone(),
        })
        .collect();
    let manifest = RunManifest {
        version: VERSION.to_string(),
        master_seed: exp.seeds.master,
        truth_seed: exp.seeds.truth,
        noise_seed: exp.seeds.noise,
        noise_level: exp.obs.noise_level,
        stopping_threshold: config.eki.zeta.unwrap() * exp.obs.noise_level,
        initializations,
        files: inventory(&out)?,
        config: config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out.join("manifest.toml"), text)?;
    Ok(manifest)
}
