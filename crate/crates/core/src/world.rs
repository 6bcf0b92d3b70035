//! Service-area geometry, experiment configuration and device placement.
//!
//! Configuration is a JSON document. Every key is optional; omitted keys take
//! the defaults below. Powers and gains are given in dB (keys ending in `_db`)
//! and are stored linear after loading.
//!
//! ```json
//! {
//!   "area_width": 800.0, "area_height": 800.0,
//!   "devices_per_community": [6, 6],
//!   "uav_altitude": 60.0, "uav_speed": 20.0,
//!   "total_budget": 40000.0, "round_budget": 800.0,
//!   "steps_per_round": 20, "max_served_per_step": 3,
//!   "snr_threshold": 10.0, "cov_period": 4, "fairness_weight": 1.5,
//!   "rng_seed": 1, "uav_start": [400.0, 400.0],
//!   "propagation": { "beta_los_db": -5.0, "beta_nlos_db": -15.0, ... },
//!   "tasks": [ { "name": "hard", "num_classes": 10, ... }, ... ],
//!   "training": { "prox_mu": 0.1, "learning_rate": 0.01, ... },
//!   "optimizer": { "tol": 1e-6, "max_inner": 30, ... },
//!   "baselines": { "hover_round_seconds": 5.0, ... },
//!   "per_fit": { "grid_points": 256 }
//! }
//! ```
//!
//! See `docs/config.md` in the repository for the full key list.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{PropagationFile, PropagationParams};
use crate::error::{Error, Result};

/// Horizontal position in meters. Serialised as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Point at fraction `t` of the way from `self` to `other`.
    pub fn lerp(&self, other: &Position, t: f64) -> Position {
        Position::new(
            self.x + t * (other.x - self.x),
            self.y + t * (other.y - self.y),
        )
    }
}

impl From<[f64; 2]> for Position {
    fn from(v: [f64; 2]) -> Self {
        Position::new(v[0], v[1])
    }
}

impl From<Position> for [f64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Synthetic classification task owned by one community.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Distance between class centroids and the origin, in units of the
    /// within-class standard deviation. Smaller is harder.
    pub separation: f64,
    /// Training samples generated per class, split over the owning devices.
    pub train_per_class: usize,
    /// Validation samples per owned label on each device.
    pub val_per_label: usize,
    pub labels_per_device: usize,
    /// Give every device samples of every class instead of the label skew.
    pub iid: bool,
    /// Hidden tanh units; 0 selects multinomial logistic regression.
    pub hidden_units: usize,
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self {
            name: "task".into(),
            num_classes: 10,
            feature_dim: 16,
            separation: 2.0,
            train_per_class: 96,
            val_per_label: 24,
            labels_per_device: 2,
            iid: false,
            hidden_units: 0,
        }
    }
}

impl TaskSpec {
    pub fn easy() -> Self {
        Self {
            name: "easy".into(),
            separation: 3.0,
            ..Self::default()
        }
    }

    pub fn hard() -> Self {
        Self {
            name: "hard".into(),
            separation: 1.2,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub prox_mu: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            prox_mu: 0.1,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            epochs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub tol: f64,
    /// Sequential convex iterations per trajectory phase.
    pub max_inner: usize,
    /// Alternating scheduling/trajectory iterations.
    pub max_outer: usize,
    /// Maximum waypoint displacement per convex iteration, meters.
    pub trust_radius: f64,
    /// Lower clamp on horizontal distance inside linearisations, meters.
    pub min_distance: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_inner: 30,
            max_outer: 10,
            trust_radius: 50.0,
            min_distance: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Duration of a static hover round; its distance equivalent is
    /// `uav_speed * hover_round_seconds`.
    pub hover_round_seconds: f64,
    pub rect_margin: f64,
    pub rect_points: usize,
    /// Floor on the distance charged for a mobile round, meters. `None`
    /// charges the hover-round equivalent.
    pub min_round_cost: Option<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hover_round_seconds: 5.0,
            rect_margin: 100.0,
            rect_points: 8,
            min_round_cost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerFitConfig {
    pub grid_points: usize,
    /// Largest horizontal distance sampled; defaults to the area diagonal.
    pub max_distance: Option<f64>,
}

impl Default for PerFitConfig {
    fn default() -> Self {
        Self {
            grid_points: 256,
            max_distance: None,
        }
    }
}

/// On-disk form of the configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    area_width: f64,
    area_height: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_communities: Option<usize>,
    devices_per_community: Vec<usize>,
    uav_altitude: f64,
    uav_speed: f64,
    total_budget: f64,
    round_budget: f64,
    steps_per_round: usize,
    max_served_per_step: usize,
    snr_threshold: f64,
    cov_period: usize,
    fairness_weight: f64,
    rng_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    uav_start: Option<Position>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_rounds: Option<usize>,
    propagation: PropagationFile,
    tasks: Vec<TaskSpec>,
    training: TrainingConfig,
    optimizer: OptimizerConfig,
    baselines: BaselineConfig,
    per_fit: PerFitConfig,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            area_width: 800.0,
            area_height: 800.0,
            num_communities: None,
            devices_per_community: vec![6, 6],
            uav_altitude: 60.0,
            uav_speed: 20.0,
            total_budget: 40_000.0,
            round_budget: 800.0,
            steps_per_round: 20,
            max_served_per_step: 3,
            snr_threshold: 10.0,
            cov_period: 4,
            fairness_weight: 1.5,
            rng_seed: 1,
            uav_start: None,
            max_rounds: None,
            propagation: PropagationFile::default(),
            tasks: vec![TaskSpec::hard(), TaskSpec::easy()],
            training: TrainingConfig::default(),
            optimizer: OptimizerConfig::default(),
            baselines: BaselineConfig::default(),
            per_fit: PerFitConfig::default(),
        }
    }
}

/// Validated experiment configuration. All units SI, all ratios linear.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub area_width: f64,
    pub area_height: f64,
    pub devices_per_community: Vec<usize>,
    pub uav_altitude: f64,
    pub uav_speed: f64,
    pub total_budget: f64,
    pub round_budget: f64,
    pub steps_per_round: usize,
    pub max_served_per_step: usize,
    pub cov_period: usize,
    pub fairness_weight: f64,
    pub rng_seed: u64,
    pub uav_start: Position,
    pub max_rounds: Option<usize>,
    /// Radio constants, including the SNR threshold.
    pub propagation: PropagationParams,
    pub tasks: Vec<TaskSpec>,
    pub training: TrainingConfig,
    pub optimizer: OptimizerConfig,
    pub baselines: BaselineConfig,
    pub per_fit: PerFitConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self::from_file(ConfigFile::default()).expect("default config is valid")
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(key, format!("must be finite and > 0, got {v}")))
    }
}

fn at_least_one(key: &str, v: usize) -> Result<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(Error::invalid(key, "must be >= 1"))
    }
}

impl ServiceConfig {
    fn from_file(f: ConfigFile) -> Result<Self> {
        positive("area_width", f.area_width)?;
        positive("area_height", f.area_height)?;
        positive("uav_altitude", f.uav_altitude)?;
        positive("uav_speed", f.uav_speed)?;
        positive("total_budget", f.total_budget)?;
        positive("round_budget", f.round_budget)?;
        if f.round_budget > f.total_budget {
            return Err(Error::invalid(
                "round_budget",
                format!(
                    "round budget {} exceeds total budget {}",
                    f.round_budget, f.total_budget
                ),
            ));
        }
        at_least_one("steps_per_round", f.steps_per_round)?;
        at_least_one("max_served_per_step", f.max_served_per_step)?;
        at_least_one("cov_period", f.cov_period)?;
        if !(f.fairness_weight.is_finite() && f.fairness_weight > 1.0) {
            return Err(Error::invalid(
                "fairness_weight",
                format!("must exceed 1, got {}", f.fairness_weight),
            ));
        }
        positive("snr_threshold", f.snr_threshold)?;

        if f.devices_per_community.is_empty() {
            return Err(Error::invalid(
                "devices_per_community",
                "at least one community required",
            ));
        }
        if let Some(c) = f.num_communities {
            if c != f.devices_per_community.len() {
                return Err(Error::invalid(
                    "num_communities",
                    format!(
                        "{c} communities but devices_per_community has {} entries",
                        f.devices_per_community.len()
                    ),
                ));
            }
        }
        if f.devices_per_community.contains(&0) {
            return Err(Error::invalid(
                "devices_per_community",
                "every community needs at least one device",
            ));
        }
        if f.tasks.len() != f.devices_per_community.len() {
            return Err(Error::invalid(
                "tasks",
                format!(
                    "{} task definitions for {} communities",
                    f.tasks.len(),
                    f.devices_per_community.len()
                ),
            ));
        }
        for (i, t) in f.tasks.iter().enumerate() {
            let key = |k: &str| format!("tasks[{i}].{k}");
            if t.num_classes < 2 {
                return Err(Error::invalid(key("num_classes"), "must be >= 2"));
            }
            at_least_one(&key("feature_dim"), t.feature_dim)?;
            positive(&key("separation"), t.separation)?;
            at_least_one(&key("train_per_class"), t.train_per_class)?;
            at_least_one(&key("val_per_label"), t.val_per_label)?;
            at_least_one(&key("labels_per_device"), t.labels_per_device)?;
            if t.labels_per_device > t.num_classes {
                return Err(Error::invalid(
                    key("labels_per_device"),
                    format!(
                        "{} labels per device but only {} classes",
                        t.labels_per_device, t.num_classes
                    ),
                ));
            }
        }

        let tr = &f.training;
        if !(tr.prox_mu.is_finite() && tr.prox_mu >= 0.0) {
            return Err(Error::invalid("training.prox_mu", "must be >= 0"));
        }
        positive("training.learning_rate", tr.learning_rate)?;
        if !(0.0..1.0).contains(&tr.momentum) {
            return Err(Error::invalid("training.momentum", "must lie in [0, 1)"));
        }
        at_least_one("training.batch_size", tr.batch_size)?;
        at_least_one("training.epochs", tr.epochs)?;

        let op = &f.optimizer;
        positive("optimizer.tol", op.tol)?;
        positive("optimizer.trust_radius", op.trust_radius)?;
        positive("optimizer.min_distance", op.min_distance)?;
        at_least_one("optimizer.max_outer", op.max_outer)?;

        let bl = &f.baselines;
        positive("baselines.hover_round_seconds", bl.hover_round_seconds)?;
        if !(bl.rect_margin.is_finite()
            && bl.rect_margin >= 0.0
            && 2.0 * bl.rect_margin < f.area_width.min(f.area_height))
        {
            return Err(Error::invalid(
                "baselines.rect_margin",
                "must be >= 0 and leave a non-empty rectangle",
            ));
        }
        if bl.rect_points < 2 {
            return Err(Error::invalid("baselines.rect_points", "must be >= 2"));
        }
        if let Some(c) = bl.min_round_cost {
            if !(c.is_finite() && c > 0.0 && c <= f.round_budget) {
                return Err(Error::invalid(
                    "baselines.min_round_cost",
                    "must be > 0 and <= round_budget",
                ));
            }
        }
        if f.per_fit.grid_points < 20 {
            return Err(Error::invalid("per_fit.grid_points", "must be >= 20"));
        }
        if let Some(d) = f.per_fit.max_distance {
            positive("per_fit.max_distance", d)?;
        }

        let start = f
            .uav_start
            .unwrap_or(Position::new(f.area_width / 2.0, f.area_height / 2.0));
        if !(start.is_finite()
            && (0.0..=f.area_width).contains(&start.x)
            && (0.0..=f.area_height).contains(&start.y))
        {
            return Err(Error::invalid("uav_start", "must lie inside the area"));
        }
        if f.max_rounds == Some(0) {
            return Err(Error::invalid("max_rounds", "must be >= 1 when given"));
        }

        let propagation = f.propagation.to_params(f.snr_threshold)?;

        Ok(Self {
            area_width: f.area_width,
            area_height: f.area_height,
            devices_per_community: f.devices_per_community,
            uav_altitude: f.uav_altitude,
            uav_speed: f.uav_speed,
            total_budget: f.total_budget,
            round_budget: f.round_budget,
            steps_per_round: f.steps_per_round,
            max_served_per_step: f.max_served_per_step,
            cov_period: f.cov_period,
            fairness_weight: f.fairness_weight,
            rng_seed: f.rng_seed,
            uav_start: start,
            max_rounds: f.max_rounds,
            propagation,
            tasks: f.tasks,
            training: f.training,
            optimizer: f.optimizer,
            baselines: f.baselines,
            per_fit: f.per_fit,
        })
    }

    fn to_file(&self) -> ConfigFile {
        ConfigFile {
            area_width: self.area_width,
            area_height: self.area_height,
            num_communities: None,
            devices_per_community: self.devices_per_community.clone(),
            uav_altitude: self.uav_altitude,
            uav_speed: self.uav_speed,
            total_budget: self.total_budget,
            round_budget: self.round_budget,
            steps_per_round: self.steps_per_round,
            max_served_per_step: self.max_served_per_step,
            snr_threshold: self.propagation.snr_threshold,
            cov_period: self.cov_period,
            fairness_weight: self.fairness_weight,
            rng_seed: self.rng_seed,
            uav_start: Some(self.uav_start),
            max_rounds: self.max_rounds,
            propagation: PropagationFile::from_params(&self.propagation),
            tasks: self.tasks.clone(),
            training: self.training.clone(),
            optimizer: self.optimizer.clone(),
            baselines: self.baselines.clone(),
            per_fit: self.per_fit.clone(),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ConfigFile = serde_json::from_str(s)?;
        Self::from_file(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_string().as_bytes()))
    }

    pub fn num_communities(&self) -> usize {
        self.devices_per_community.len()
    }

    pub fn num_devices(&self) -> usize {
        self.devices_per_community.iter().sum()
    }

    pub fn area_diagonal(&self) -> f64 {
        self.area_width.hypot(self.area_height)
    }

    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.area_width).contains(&p.x) && (0.0..=self.area_height).contains(&p.y)
    }

    /// Distance charged for one static hover round.
    pub fn hover_round_cost(&self) -> f64 {
        self.uav_speed * self.baselines.hover_round_seconds
    }

    /// Smallest distance charged for a mobile round.
    pub fn min_round_cost(&self) -> f64 {
        self.baselines
            .min_round_cost
            .unwrap_or_else(|| self.hover_round_cost().min(self.round_budget))
    }

    /// Upper bound on the number of full-budget rounds.
    pub fn full_round_ceiling(&self) -> usize {
        (self.total_budget / self.round_budget).floor() as usize
    }
}

/// Reads and validates a JSON config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ServiceConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ServiceConfig::from_json_str(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviceState {
    pub id: usize,
    pub community: usize,
    pub pos: Position,
    /// Share of the community's training data, p_k.
    pub weight: f64,
    /// Last validation accuracy the UAV received from this device.
    pub reported_accuracy: f64,
    /// Scheduled and successfully uploaded in the previous round.
    pub participated_last_round: bool,
}

/// Draws device positions uniformly over the area. Devices are numbered
/// community by community. Weights start uniform within each community until
/// [`assign_weights`] sees the dataset sizes.
pub fn place_devices<R: Rng + ?Sized>(cfg: &ServiceConfig, rng: &mut R) -> Vec<DeviceState> {
    let mut devices = Vec::with_capacity(cfg.num_devices());
    for (c, &count) in cfg.devices_per_community.iter().enumerate() {
        let chance = 1.0 / cfg.tasks[c].num_classes as f64;
        for _ in 0..count {
            let x = rng.random_range(0.0..=cfg.area_width);
            let y = rng.random_range(0.0..=cfg.area_height);
            devices.push(DeviceState {
                id: devices.len(),
                community: c,
                pos: Position::new(x, y),
                weight: 1.0 / count as f64,
                reported_accuracy: chance,
                participated_last_round: true,
            });
        }
    }
    devices
}

/// Sets p_k = |D_k| / sum of |D_i| over the device's community.
pub fn assign_weights(devices: &mut [DeviceState], dataset_sizes: &[usize]) {
    assert_eq!(devices.len(), dataset_sizes.len());
    let communities = devices.iter().map(|d| d.community).max().map_or(0, |c| c + 1);
    let mut totals = vec![0usize; communities];
    for (d, &n) in devices.iter().zip(dataset_sizes) {
        totals[d.community] += n;
    }
    for (d, &n) in devices.iter_mut().zip(dataset_sizes) {
        d.weight = n as f64 / totals[d.community] as f64;
    }
}

/// Mean device position.
pub fn barycenter(devices: &[DeviceState]) -> Option<Position> {
    if devices.is_empty() {
        return None;
    }
    let n = devices.len() as f64;
    let (sx, sy) = devices
        .iter()
        .fold((0.0, 0.0), |(sx, sy), d| (sx + d.pos.x, sy + d.pos.y));
    Some(Position::new(sx / n, sy / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn defaults_match_reference_scenario() {
        let cfg = ServiceConfig::default();
        assert_eq!(cfg.uav_altitude, 60.0);
        assert_eq!(cfg.total_budget, 40_000.0);
        assert_eq!(cfg.round_budget, 800.0);
        assert_eq!(cfg.max_served_per_step, 3);
        assert_eq!(cfg.propagation.snr_threshold, 10.0);
        assert_eq!(cfg.cov_period, 4);
        assert_eq!(cfg.fairness_weight, 1.5);
        assert_eq!(cfg.full_round_ceiling(), 50);
        assert_eq!(cfg.hover_round_cost(), 100.0);
        assert_eq!(cfg.uav_start, Position::new(400.0, 400.0));
    }

    #[test]
    fn budget_keys_accepted() {
        let cfg =
            ServiceConfig::from_json_str(r#"{"round_budget": 800, "total_budget": 40000}"#).unwrap();
        assert_eq!(cfg.full_round_ceiling(), 50);
    }

    #[test]
    fn fairness_weight_must_exceed_one() {
        let err = ServiceConfig::from_json_str(r#"{"fairness_weight": 1.0}"#).unwrap_err();
        match err {
            Error::InvalidConfig { key, .. } => assert_eq!(key, "fairness_weight"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn round_budget_above_total_rejected() {
        let err = ServiceConfig::from_json_str(r#"{"round_budget": 900, "total_budget": 800}"#)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref key, .. } if key == "round_budget"));
    }

    #[test]
    fn unknown_key_is_schema_error() {
        let err = ServiceConfig::from_json_str(r#"{"area_widht": 10}"#).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn task_count_must_match_communities() {
        let err = ServiceConfig::from_json_str(r#"{"devices_per_community": [3, 3, 3]}"#)
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref key, .. } if key == "tasks"));
    }

    #[test]
    fn omitted_steps_default_and_round_trip() {
        let cfg = ServiceConfig::from_json_str(r#"{"area_width": 500, "area_height": 700}"#)
            .unwrap();
        assert_eq!(cfg.steps_per_round, 20);
        let again = ServiceConfig::from_json_str(&cfg.to_json_string()).unwrap();
        assert_eq!(again.steps_per_round, 20);
        assert_eq!(again.area_width, 500.0);
        assert_eq!(again.uav_start, Position::new(250.0, 350.0));
        let (a, b) = (&cfg.propagation, &again.propagation);
        for (x, y) in [
            (a.beta_los, b.beta_los),
            (a.beta_nlos, b.beta_nlos),
            (a.tx_power, b.tx_power),
            (a.noise, b.noise),
        ] {
            assert!(((x - y) / x).abs() < 1e-12, "{x} vs {y}");
        }
        // second round trip is a fixed point
        assert_eq!(again.to_json_string(), ServiceConfig::from_json_str(&again.to_json_string()).unwrap().to_json_string());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_config("/definitely/not/here.json").unwrap_err();
        assert!(err.to_string().contains("/definitely/not/here.json"));
    }

    #[test]
    fn placement_counts_and_bounds() {
        let cfg = ServiceConfig::default();
        let devs = place_devices(&cfg, &mut stream(3, Stream::Placement, &[]));
        assert_eq!(devs.len(), 12);
        assert_eq!(devs.iter().filter(|d| d.community == 0).count(), 6);
        assert!(devs.iter().all(|d| cfg.contains(&d.pos)));
        assert!(devs.iter().enumerate().all(|(i, d)| d.id == i));
    }

    #[test]
    fn placement_is_seeded() {
        let cfg = ServiceConfig::default();
        let a = place_devices(&cfg, &mut stream(11, Stream::Placement, &[]));
        let b = place_devices(&cfg, &mut stream(11, Stream::Placement, &[]));
        let c = place_devices(&cfg, &mut stream(12, Stream::Placement, &[]));
        assert_eq!(a, b);
        assert!(a.iter().zip(&c).any(|(x, y)| x.pos != y.pos));
    }

    #[test]
    fn weights_sum_to_one_per_community() {
        let cfg = ServiceConfig::default();
        let mut devs = place_devices(&cfg, &mut stream(1, Stream::Placement, &[]));
        let sizes: Vec<usize> = (0..devs.len()).map(|i| 10 + 7 * i).collect();
        assign_weights(&mut devs, &sizes);
        for c in 0..2 {
            let s: f64 = devs.iter().filter(|d| d.community == c).map(|d| d.weight).sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
