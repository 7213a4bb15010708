//! Declarative experiments: a TOML file describes which networks to train,
//! how to deploy them and what to report. See `configs/` for annotated presets.
//!
//! Trained networks are cached under `<output_dir>/nets/<key>.otap`, where the
//! key hashes everything that influences training (shape, loss, training
//! hyperparameters, data subset, seed). A cached network is bit-identical to
//! a freshly trained one, so downstream numbers never depend on the cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{calibrate, run_baseline};
use crate::dataset::{load_fashion_mnist, Dataset, Samples, Split, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::ota_sim::{deploy, evaluate, from_db, realization_channels, to_db, write_results, ResultRow};
use crate::params_io;
use crate::precoder::write_objective_trace;
use crate::prototype_net::{NetParams, NetShape};
use crate::training::{
    estimate_covariances, mean_received_power, net_accuracy, train, write_training_log, LossConfig, LossKind,
    TrainConfig,
};

/// Bumped whenever training numerics change, so stale cached networks are not reused.
pub const CACHE_REVISION: u32 = 2;

/// Environment variable that overrides `data.root`.
pub const DATA_ENV: &str = "MIMO_OTA_DATA";

/// Identifier of the build that produced a result row.
pub fn build_id() -> String {
    format!("{}+{}", env!("CARGO_PKG_VERSION"), env!("MIMO_OTA_GIT_REV"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Accuracy against received power for both losses over a λ grid.
    LossCompare,
    /// The same trade-off for several hop counts, with noiseless upper bounds.
    HopsSweep,
    /// Over-the-air deployment against the SVD+MMSE baseline.
    BaselineCompare,
    /// Block networks of different `(M, J)` against the dense network.
    MultiblockCompare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub deployment: DeploymentConfig,
    #[serde(default)]
    pub hops_sweep: Option<HopsSweepConfig>,
    #[serde(default)]
    pub baseline: Option<BaselineConfig>,
    #[serde(default)]
    pub multiblock: Option<MultiblockConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding the four Fashion-MNIST IDX files (optionally gzipped).
    pub root: PathBuf,
    /// Use only the first this-many training images.
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data/fashion-mnist"),
            train_subset: None,
            test_subset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hops: usize,
    pub antennas: usize,
    pub blocks: usize,
    pub noise_variance: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hops: 2,
            antennas: 49,
            blocks: 1,
            noise_variance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub losses: Vec<LossKind>,
    pub lambdas: Vec<f64>,
    /// Evaluate on the test split every this many epochs for the training log (0: last epoch only).
    pub eval_every: usize,
    /// Also train every network at σ² = 0 and evaluate it at the configured noise.
    pub include_noiseless_training: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 32,
            learning_rate: 5e-4,
            losses: vec![LossKind::L1, LossKind::L2],
            lambdas: vec![0.0, 0.01, 0.1],
            eval_every: 1,
            include_noiseless_training: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    pub lambda1: Vec<f64>,
    pub realizations: usize,
    pub noise_draws: usize,
    /// Write solver objective traces for realization 0.
    pub write_traces: bool,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            lambda1: vec![0.0, 0.1],
            realizations: 10,
            noise_draws: 1,
            write_traces: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopsSweepConfig {
    pub hops: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    /// Transmit power scales `10 log10 ρ`.
    pub power_db: Vec<f64>,
    /// Training images used to calibrate the relay normalisers.
    #[serde(default = "default_calibration_samples")]
    pub calibration_samples: usize,
}

fn default_calibration_samples() -> usize {
    2000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockVariant {
    pub antennas: usize,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiblockConfig {
    pub variants: Vec<BlockVariant>,
}

/// Parses a config without validating it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

fn supported_width(m: usize) -> bool {
    crate::dataset::PoolingLayout::for_width(m).is_ok()
}

impl ExperimentConfig {
    /// Every problem found, each naming the offending field. Empty means valid.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut d = Vec::new();
        let net = &self.network;
        if !(net.noise_variance >= 0.0) || !net.noise_variance.is_finite() {
            d.push(format!("network.noise_variance: must be >= 0, got {}", net.noise_variance));
        }
        if net.antennas == 0 || net.blocks == 0 {
            d.push("network.antennas/network.blocks: must be positive".into());
        } else if !supported_width(net.antennas * net.blocks) {
            d.push(format!(
                "network.antennas*blocks: input width {} cannot be produced by pooling a 28x28 image",
                net.antennas * net.blocks
            ));
        }
        let t = &self.training;
        if t.epochs == 0 {
            d.push("training.epochs: must be positive".into());
        }
        if t.batch_size == 0 {
            d.push("training.batch_size: must be positive".into());
        }
        if !(t.learning_rate > 0.0) {
            d.push(format!("training.learning_rate: must be positive, got {}", t.learning_rate));
        }
        if t.losses.is_empty() {
            d.push("training.losses: must not be empty".into());
        }
        if t.lambdas.is_empty() {
            d.push("training.lambdas: must not be empty".into());
        }
        if let Some(bad) = t.lambdas.iter().find(|l| !(**l >= 0.0)) {
            d.push(format!("training.lambdas: values must be >= 0, got {bad}"));
        }
        let dep = &self.deployment;
        if dep.lambda1.is_empty() {
            d.push("deployment.lambda1: must not be empty".into());
        }
        if let Some(bad) = dep.lambda1.iter().find(|l| !(**l >= 0.0)) {
            d.push(format!("deployment.lambda1: values must be >= 0, got {bad}"));
        }
        if dep.realizations == 0 {
            d.push("deployment.realizations: must be positive".into());
        }
        if dep.noise_draws == 0 {
            d.push("deployment.noise_draws: must be positive".into());
        }
        if matches!(self.data.train_subset, Some(0)) || matches!(self.data.test_subset, Some(0)) {
            d.push("data.train_subset/test_subset: must be positive when given".into());
        }
        match self.kind {
            ExperimentKind::LossCompare => {}
            ExperimentKind::HopsSweep => match &self.hops_sweep {
                None => d.push("hops_sweep: section required for kind = \"hops-sweep\"".into()),
                Some(h) if h.hops.is_empty() => d.push("hops_sweep.hops: must not be empty".into()),
                Some(_) => {}
            },
            ExperimentKind::BaselineCompare => {
                if net.hops == 0 {
                    d.push("network.hops: baseline comparison needs at least one hop".into());
                }
                if net.blocks != 1 {
                    d.push("network.blocks: baseline comparison uses the dense network (blocks = 1)".into());
                }
                match &self.baseline {
                    None => d.push("baseline: section required for kind = \"baseline-compare\"".into()),
                    Some(b) => {
                        if b.power_db.is_empty() {
                            d.push("baseline.power_db: must not be empty".into());
                        }
                        if b.calibration_samples == 0 {
                            d.push("baseline.calibration_samples: must be positive".into());
                        }
                    }
                }
            }
            ExperimentKind::MultiblockCompare => match &self.multiblock {
                None => d.push("multiblock: section required for kind = \"multiblock-compare\"".into()),
                Some(m) if m.variants.is_empty() => d.push("multiblock.variants: must not be empty".into()),
                Some(m) => {
                    for v in &m.variants {
                        if v.antennas == 0 || v.blocks == 0 || !supported_width(v.antennas * v.blocks) {
                            d.push(format!(
                                "multiblock.variants: antennas = {}, blocks = {} gives an unsupported width",
                                v.antennas, v.blocks
                            ));
                        }
                    }
                }
            },
        }
        d
    }

    /// Dataset directory after applying the environment override.
    pub fn data_root(&self) -> PathBuf {
        std::env::var_os(DATA_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| self.data.root.clone())
    }

    /// Schema diagnostics plus a check that the dataset files are present.
    pub fn validate(&self) -> Vec<String> {
        let mut d = self.diagnostics();
        let root = self.data_root();
        for split in [Split::Train, Split::Test] {
            let (images, labels) = split.file_names();
            for name in [images, labels] {
                let plain = root.join(&name);
                let gz = root.join(format!("{name}.gz"));
                if !plain.is_file() && !gz.is_file() {
                    d.push(format!("data.root: {} not found (or .gz)", plain.display()));
                }
            }
        }
        d
    }

    /// Identifies the experiment; output and data locations do not contribute.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.data.root = PathBuf::new();
        short_hash(&serde_json::to_vec(&c).expect("config serialises"))
    }
}

fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Everything that determines a trained network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetSpec {
    pub hops: usize,
    pub antennas: usize,
    pub blocks: usize,
    pub loss: LossKind,
    pub lambda: f64,
    pub train_noise_variance: f64,
}

impl NetSpec {
    pub fn shape(&self) -> NetShape {
        NetShape {
            hops: self.hops,
            block_width: self.antennas,
            blocks: self.blocks,
            classes: NUM_CLASSES,
        }
    }

    pub fn width(&self) -> usize {
        self.antennas * self.blocks
    }

    fn label(&self) -> String {
        format!(
            "loss={};N={};M={};J={};train_sigma2={}",
            self.loss, self.hops, self.antennas, self.blocks, self.train_noise_variance
        )
    }
}

#[derive(Serialize)]
struct CacheKey<'a> {
    spec: &'a NetSpec,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    train_subset: Option<usize>,
    seed: u64,
    format: u32,
    revision: u32,
}

/// Grouped mean and standard deviation over realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub lambda: Option<f64>,
    pub lambda1: Option<f64>,
    pub sigma2: f64,
    pub count: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    #[serde(rename = "Pt_dB_mean")]
    pub pt_db_mean: Option<f64>,
    #[serde(rename = "Pr_dB_mean")]
    pub pr_db_mean: Option<f64>,
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let scheme = r.notes.split(";seed=").next().unwrap_or("").to_string();
        let key = (
            scheme,
            format!("{:?}", r.lambda),
            format!("{:?}", r.lambda1),
            format!("{}", r.sigma2),
        );
        groups.entry(key).or_default().push(r);
    }
    let mean = |xs: Vec<f64>| -> Option<f64> {
        if xs.is_empty() {
            None
        } else {
            Some(xs.iter().sum::<f64>() / xs.len() as f64)
        }
    };
    // Preserve first-appearance order for readability.
    let mut out: Vec<(usize, SummaryRow)> = groups
        .into_values()
        .map(|g| {
            let first = rows.iter().position(|r| std::ptr::eq(r, g[0])).unwrap_or(0);
            let accs: Vec<f64> = g.iter().map(|r| r.accuracy).collect();
            let (am, asd) = crate::ota_sim::mean_std(&accs);
            (
                first,
                SummaryRow {
                    scheme: g[0].notes.split(";seed=").next().unwrap_or("").to_string(),
                    lambda: g[0].lambda,
                    lambda1: g[0].lambda1,
                    sigma2: g[0].sigma2,
                    count: g.len(),
                    accuracy_mean: am,
                    accuracy_std: asd,
                    pt_db_mean: mean(g.iter().filter_map(|r| r.pt_db).collect()),
                    pr_db_mean: mean(g.iter().filter_map(|r| r.pr_db).collect()),
                },
            )
        })
        .collect();
    out.sort_by_key(|(i, _)| *i);
    out.into_iter().map(|(_, s)| s).collect()
}

/// Executes an experiment config; holds the loaded data and the network cache location.
pub struct Runner {
    cfg: ExperimentConfig,
    config_hash: String,
    out: PathBuf,
    train_raw: Dataset,
    test_raw: Dataset,
    encoded: BTreeMap<usize, Arc<(Samples, Samples)>>,
    pub verbose: bool,
}

impl Runner {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let diagnostics = cfg.diagnostics();
        if !diagnostics.is_empty() {
            return Err(Error::Config(diagnostics.join("; ")));
        }
        let root = cfg.data_root();
        let mut train_raw = load_fashion_mnist(&root, Split::Train)?;
        let mut test_raw = load_fashion_mnist(&root, Split::Test)?;
        if let Some(n) = cfg.data.train_subset {
            train_raw = train_raw.head(n);
        }
        if let Some(n) = cfg.data.test_subset {
            test_raw = test_raw.head(n);
        }
        Ok(Self {
            config_hash: cfg.hash(),
            out: cfg.output_dir.clone(),
            cfg,
            train_raw,
            test_raw,
            encoded: BTreeMap::new(),
            verbose: false,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Encoded `(train, test)` sets for input width `width`, computed once.
    pub fn samples(&mut self, width: usize) -> Result<Arc<(Samples, Samples)>> {
        if !self.encoded.contains_key(&width) {
            let pair = (self.train_raw.encode(width)?, self.test_raw.encode(width)?);
            self.encoded.insert(width, Arc::new(pair));
        }
        Ok(Arc::clone(&self.encoded[&width]))
    }

    fn train_config(&self, noise_variance: f64) -> TrainConfig {
        let t = &self.cfg.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            noise_variance,
            seed: self.cfg.seed,
            eval_every: t.eval_every,
            ..TrainConfig::default()
        }
    }

    fn cache_key(&self, spec: &NetSpec) -> String {
        let key = CacheKey {
            spec,
            epochs: self.cfg.training.epochs,
            batch_size: self.cfg.training.batch_size,
            learning_rate: self.cfg.training.learning_rate,
            train_subset: self.cfg.data.train_subset,
            seed: self.cfg.seed,
            format: params_io::VERSION,
            revision: CACHE_REVISION,
        };
        short_hash(&serde_json::to_vec(&key).expect("cache key serialises"))
    }

    /// Loads the network for `spec` from the cache or trains and stores it.
    pub fn obtain_net(&mut self, spec: &NetSpec) -> Result<NetParams> {
        let key = self.cache_key(spec);
        let nets = self.out.join("nets");
        let path = nets.join(format!("{key}.otap"));
        if path.is_file() {
            self.log(format!("cached network {key} ({})", spec.label()));
            return params_io::load(&path);
        }
        std::fs::create_dir_all(&nets)?;
        self.log(format!("training network {key} ({}, lambda={})", spec.label(), spec.lambda));
        let data = self.samples(spec.width())?;
        let (train_set, test_set) = (&data.0, &data.1);
        let outcome = train(
            train_set,
            Some(test_set),
            spec.shape(),
            &self.train_config(spec.train_noise_variance),
            &LossConfig::new(spec.loss, spec.lambda)?,
        )?;
        write_training_log(&nets.join(format!("{key}.log.csv")), &outcome.log)?;
        params_io::save(&outcome.params, &path)?;
        Ok(outcome.params)
    }

    fn notes(&self, scheme: &str, extra: &str) -> String {
        let mut s = format!("scheme={scheme}");
        if !extra.is_empty() {
            s.push(';');
            s.push_str(extra);
        }
        format!("{s};seed={};config={};build={}", self.cfg.seed, self.config_hash, build_id())
    }

    fn dense_spec(&self, hops: usize, loss: LossKind, lambda: f64, train_noise: f64) -> NetSpec {
        NetSpec {
            hops,
            antennas: self.cfg.network.antennas,
            blocks: self.cfg.network.blocks,
            loss,
            lambda,
            train_noise_variance: train_noise,
        }
    }

    /// Every network the experiment needs.
    pub fn required_nets(&self) -> Vec<NetSpec> {
        let c = &self.cfg;
        let sigma2 = c.network.noise_variance;
        let primary = c.training.losses[0];
        let mut specs = Vec::new();
        match c.kind {
            ExperimentKind::LossCompare => {
                for &loss in &c.training.losses {
                    for &lambda in &c.training.lambdas {
                        specs.push(self.dense_spec(c.network.hops, loss, lambda, sigma2));
                        if c.training.include_noiseless_training {
                            specs.push(self.dense_spec(c.network.hops, loss, lambda, 0.0));
                        }
                    }
                }
            }
            ExperimentKind::HopsSweep => {
                for &n in &c.hops_sweep.as_ref().expect("validated").hops {
                    for &lambda in &c.training.lambdas {
                        specs.push(self.dense_spec(n, primary, lambda, sigma2));
                    }
                    specs.push(self.dense_spec(n, primary, 0.0, 0.0));
                }
            }
            ExperimentKind::BaselineCompare => {
                for &lambda in &c.training.lambdas {
                    specs.push(self.dense_spec(c.network.hops, primary, lambda, sigma2));
                }
                specs.push(self.dense_spec(0, primary, 0.0, 0.0));
                specs.push(self.dense_spec(c.network.hops, primary, 0.0, 0.0));
            }
            ExperimentKind::MultiblockCompare => {
                for v in &c.multiblock.as_ref().expect("validated").variants {
                    for &lambda in &c.training.lambdas {
                        specs.push(NetSpec {
                            hops: c.network.hops,
                            antennas: v.antennas,
                            blocks: v.blocks,
                            loss: primary,
                            lambda,
                            train_noise_variance: sigma2,
                        });
                    }
                }
            }
        }
        specs
    }

    /// Trains (or loads) every required network without evaluating anything.
    pub fn train_only(&mut self) -> Result<Vec<NetParams>> {
        self.required_nets().iter().map(|s| self.obtain_net(s)).collect()
    }

    /// Prototype-network accuracy at the configured noise plus noiseless received power.
    fn network_row(&mut self, net: &NetParams, spec: &NetSpec, scheme: &str) -> Result<ResultRow> {
        let data = self.samples(spec.width())?;
        let test = &data.1;
        let sigma2 = self.cfg.network.noise_variance;
        let accuracy = net_accuracy(net, test, sigma2, self.cfg.seed, self.cfg.deployment.noise_draws)?;
        let pr = mean_received_power(net, test)?;
        Ok(ResultRow {
            lambda: Some(spec.lambda),
            lambda1: None,
            realization: None,
            sigma2,
            accuracy,
            pt_db: None,
            pr_db: Some(to_db(pr)),
            notes: self.notes(scheme, &spec.label()),
        })
    }

    fn upper_bound_row(&mut self, net: &NetParams, spec: &NetSpec, scheme: &str) -> Result<ResultRow> {
        let data = self.samples(spec.width())?;
        let test = &data.1;
        let accuracy = net_accuracy(net, test, 0.0, self.cfg.seed, 1)?;
        Ok(ResultRow {
            lambda: Some(spec.lambda),
            lambda1: None,
            realization: None,
            sigma2: 0.0,
            accuracy,
            pt_db: None,
            pr_db: None,
            notes: self.notes(scheme, &spec.label()),
        })
    }

    /// Fits precoders for every `(realization, λ₁)` and evaluates over the air.
    fn deployment_rows(&mut self, net: &NetParams, spec: &NetSpec, tag: &str) -> Result<Vec<ResultRow>> {
        let data = self.samples(spec.width())?;
        let (train_set, test) = (&data.0, &data.1);
        let sigma2 = self.cfg.network.noise_variance;
        let dep_cfg = self.cfg.deployment.clone();
        let covariances = estimate_covariances(net, train_set)?;
        let pr_db = to_db(mean_received_power(net, test)?);
        let mut rows = Vec::new();
        for r in 0..dep_cfg.realizations {
            let ch = realization_channels(self.cfg.seed, r, net.shape.hops, net.shape.block_width, sigma2)?;
            for &lambda1 in &dep_cfg.lambda1 {
                self.log(format!("deploying {tag} realization {r} lambda1={lambda1}"));
                let dep = deploy(net, &ch, lambda1, &covariances)?;
                if dep_cfg.write_traces && r == 0 {
                    let dir = self.out.join("traces");
                    std::fs::create_dir_all(&dir)?;
                    for (i, hop) in dep.solutions.iter().enumerate() {
                        for (j, sol) in hop.iter().enumerate() {
                            let name = format!("{tag}-lambda1_{lambda1}-hop{}-block{}.csv", i + 1, j + 1);
                            write_objective_trace(&dir.join(name), &sol.objective_trace)?;
                        }
                    }
                }
                let eval = evaluate(&dep, &ch, test, dep_cfg.noise_draws, self.cfg.seed, r)?;
                let mut extra = spec.label();
                if !dep.all_converged() {
                    extra.push_str(";solver=not-converged");
                }
                rows.push(ResultRow {
                    lambda: Some(spec.lambda),
                    lambda1: Some(lambda1),
                    realization: Some(r),
                    sigma2,
                    accuracy: eval.accuracy,
                    pt_db: Some(eval.tx_power_db()),
                    pr_db: Some(pr_db),
                    notes: self.notes("proposed", &extra),
                });
            }
        }
        Ok(rows)
    }

    fn baseline_rows(&mut self, net0: &NetParams, hops: usize) -> Result<Vec<ResultRow>> {
        let base = self.cfg.baseline.clone().expect("validated");
        let sigma2 = self.cfg.network.noise_variance;
        let data = self.samples(net0.shape.width())?;
        let (train_set, test) = (&data.0, &data.1);
        let calibration_set = train_set.head(base.calibration_samples);
        let mut rows = Vec::new();
        for r in 0..self.cfg.deployment.realizations {
            let ch = realization_channels(self.cfg.seed, r, hops, net0.shape.width(), sigma2)?;
            for &p_db in &base.power_db {
                self.log(format!("baseline realization {r} power {p_db} dB"));
                let rho = from_db(p_db);
                let cal = calibrate(net0, &ch, rho, &calibration_set, self.cfg.seed)?;
                let eval = run_baseline(net0, &ch, rho, &cal, test, self.cfg.deployment.noise_draws, self.cfg.seed, r)?;
                rows.push(ResultRow {
                    lambda: None,
                    lambda1: None,
                    realization: Some(r),
                    sigma2,
                    accuracy: eval.accuracy,
                    pt_db: Some(eval.tx_power_db()),
                    pr_db: None,
                    notes: self.notes("baseline", &format!("N={hops};power_scale_dB={p_db};power_control=sqrt-rho-scaling")),
                });
            }
        }
        Ok(rows)
    }

    /// Runs the experiment and writes `results.csv` and `summary.json`.
    pub fn run(&mut self) -> Result<Vec<ResultRow>> {
        std::fs::create_dir_all(&self.out)?;
        let c = self.cfg.clone();
        let sigma2 = c.network.noise_variance;
        let primary = c.training.losses[0];
        let mut rows = Vec::new();
        match c.kind {
            ExperimentKind::LossCompare => {
                for &loss in &c.training.losses {
                    for &lambda in &c.training.lambdas {
                        let spec = self.dense_spec(c.network.hops, loss, lambda, sigma2);
                        let net = self.obtain_net(&spec)?;
                        rows.push(self.network_row(&net, &spec, "prototype")?);
                        if c.training.include_noiseless_training {
                            let spec = self.dense_spec(c.network.hops, loss, lambda, 0.0);
                            let net = self.obtain_net(&spec)?;
                            rows.push(self.network_row(&net, &spec, "prototype-noiseless-training")?);
                        }
                    }
                }
            }
            ExperimentKind::HopsSweep => {
                for &n in &c.hops_sweep.as_ref().expect("validated").hops {
                    for &lambda in &c.training.lambdas {
                        let spec = self.dense_spec(n, primary, lambda, sigma2);
                        let net = self.obtain_net(&spec)?;
                        rows.push(self.network_row(&net, &spec, "prototype")?);
                    }
                    let spec = self.dense_spec(n, primary, 0.0, 0.0);
                    let net = self.obtain_net(&spec)?;
                    rows.push(self.upper_bound_row(&net, &spec, &format!("upper-bound-N{n}"))?);
                }
            }
            ExperimentKind::BaselineCompare => {
                let n = c.network.hops;
                for &lambda in &c.training.lambdas {
                    let spec = self.dense_spec(n, primary, lambda, sigma2);
                    let net = self.obtain_net(&spec)?;
                    let tag = format!("lambda_{lambda}");
                    rows.extend(self.deployment_rows(&net, &spec, &tag)?);
                }
                let spec0 = self.dense_spec(0, primary, 0.0, 0.0);
                let net0 = self.obtain_net(&spec0)?;
                rows.extend(self.baseline_rows(&net0, n)?);
                rows.push(self.upper_bound_row(&net0, &spec0, "upper-bound-N0")?);
                let spec_n = self.dense_spec(n, primary, 0.0, 0.0);
                let net_n = self.obtain_net(&spec_n)?;
                rows.push(self.upper_bound_row(&net_n, &spec_n, &format!("upper-bound-N{n}"))?);
            }
            ExperimentKind::MultiblockCompare => {
                for spec in self.required_nets() {
                    let net = self.obtain_net(&spec)?;
                    rows.push(self.network_row(&net, &spec, "multiblock")?);
                }
            }
        }
        self.write_outputs(&rows)?;
        Ok(rows)
    }

    /// Evaluates a given network: its own accuracy, then over-the-air deployment when it has hops.
    pub fn eval_only(&mut self, net: &NetParams) -> Result<Vec<ResultRow>> {
        std::fs::create_dir_all(&self.out)?;
        if net.shape.classes != NUM_CLASSES {
            return Err(Error::InvalidArgument(format!("network has {} classes", net.shape.classes)));
        }
        let spec = NetSpec {
            hops: net.shape.hops,
            antennas: net.shape.block_width,
            blocks: net.shape.blocks,
            loss: self.cfg.training.losses[0],
            lambda: f64::NAN,
            train_noise_variance: f64::NAN,
        };
        let mut row = self.network_row(net, &spec, "prototype")?;
        row.lambda = None;
        row.notes = self.notes("prototype", "source=params-file");
        let mut rows = vec![row];
        if net.shape.hops > 0 {
            for mut r in self.deployment_rows(net, &spec, "params")? {
                r.lambda = None;
                r.notes = r.notes.replacen(&spec.label(), "source=params-file", 1);
                rows.push(r);
            }
        }
        self.write_outputs(&rows)?;
        Ok(rows)
    }

    fn write_outputs(&self, rows: &[ResultRow]) -> Result<()> {
        write_results(&self.out.join("results.csv"), rows)?;
        let summary = serde_json::json!({
            "kind": self.cfg.kind,
            "seed": self.cfg.seed,
            "config_hash": self.config_hash,
            "build": build_id(),
            "groups": summarize(rows),
        });
        std::fs::write(self.out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
kind = "loss-compare"
output_dir = "runs/test"
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.network.antennas, 49);
        assert_eq!(cfg.training.batch_size, 32);
        assert!(cfg.diagnostics().is_empty());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let err = parse_config("kind = \"loss-compare\"\noutput_dir = \"x\"\n[network]\nantenas = 4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("antenas") && msg.contains("line 4"), "{msg}");
    }

    #[test]
    fn range_errors_name_the_field() {
        let cfg = parse_config(&format!("{MINIMAL}[network]\nhops = 2\nantennas = 49\nblocks = 1\nnoise_variance = -0.1\n")).unwrap();
        let d = cfg.diagnostics();
        assert_eq!(d.len(), 1);
        assert!(d[0].starts_with("network.noise_variance"));
    }

    #[test]
    fn kind_sections_are_required() {
        let cfg = parse_config("kind = \"hops-sweep\"\noutput_dir = \"x\"\n").unwrap();
        assert!(cfg.diagnostics().iter().any(|d| d.starts_with("hops_sweep")));
        let cfg = parse_config("kind = \"multiblock-compare\"\noutput_dir = \"x\"\n[multiblock]\nvariants = [{ antennas = 7, blocks = 5 }]\n").unwrap();
        assert!(cfg.diagnostics().iter().any(|d| d.starts_with("multiblock.variants")));
    }

    #[test]
    fn missing_dataset_is_reported() {
        let mut cfg = parse_config(MINIMAL).unwrap();
        cfg.data.root = PathBuf::from("/nonexistent/fashion");
        if std::env::var_os(DATA_ENV).is_none() {
            assert!(cfg.validate().iter().any(|d| d.starts_with("data.root")));
        }
    }

    #[test]
    fn summary_groups_realizations() {
        let row = |r: usize, acc: f64| ResultRow {
            lambda: Some(0.1),
            lambda1: Some(0.0),
            realization: Some(r),
            sigma2: 0.1,
            accuracy: acc,
            pt_db: Some(1.0),
            pr_db: None,
            notes: "scheme=proposed;seed=1;config=x;build=y".into(),
        };
        let s = summarize(&[row(0, 0.5), row(1, 0.7)]);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].count, 2);
        assert!((s[0].accuracy_mean - 0.6).abs() < 1e-12);
        assert_eq!(s[0].scheme, "scheme=proposed");
    }
}
