//! The mission loop: communication rounds under a distance budget, the
//! trajectory strategies compared in the experiments, metrics and
//! Monte-Carlo sweeps.

mod metrics;
mod montecarlo;
mod routes;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use metrics::{parse_csv, MetricsLog, MetricsRow, RunSummary, CSV_HEADER};
pub use montecarlo::{monte_carlo, summarize, CommunityStats, McResult, McSummary, StrategySummary};
pub use routes::RectRoute;

use crate::channel::{distance_grid, fit_logistic_per, sample_uplink, LogisticPerFit, Segment};
use crate::error::{Error, Result};
use crate::learning::{
    aggregate, importance, local_train_fedprox, make_synthetic_tasks, update_cov, validation_accuracy,
    CommunityState, LocalUpdate, ModelParams, ModelShape, SyntheticTasks, TrainOptions,
};
use crate::rng::{stream, Stream};
use crate::scheduling::{solve_schedule, Assignment, ScheduleMatrix};
use crate::trajectory::{alternating_optimize, RoundProblem, Trajectory};
use crate::world::{assign_weights, barycenter, place_devices, DeviceState, Position, ServiceConfig};

const BUDGET_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Alternating trajectory/scheduling optimisation with CoV-aware weights.
    Optimized,
    /// Same optimiser, importance weights without the CoV factor.
    #[value(name = "no_cov")]
    NoCov,
    /// Static hover at the device barycenter.
    Barycenter,
    /// Fixed loop around an inset rectangle.
    Rectangular,
    /// Every device participates and every uplink succeeds.
    Ideal,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Optimized,
        Strategy::NoCov,
        Strategy::Barycenter,
        Strategy::Rectangular,
        Strategy::Ideal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Optimized => "optimized",
            Strategy::NoCov => "no_cov",
            Strategy::Barycenter => "barycenter",
            Strategy::Rectangular => "rectangular",
            Strategy::Ideal => "ideal",
        }
    }

    /// Smallest remaining budget that still pays for a round.
    pub fn round_cost_floor(self, cfg: &ServiceConfig) -> f64 {
        match self {
            Strategy::Optimized | Strategy::NoCov => cfg.min_round_cost(),
            Strategy::Barycenter => cfg.hover_round_cost(),
            Strategy::Rectangular | Strategy::Ideal => cfg.round_budget,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Logistic PER fit over the configured distance grid.
pub fn per_fit_for(cfg: &ServiceConfig) -> Result<LogisticPerFit> {
    let max = cfg.per_fit.max_distance.unwrap_or_else(|| cfg.area_diagonal());
    fit_logistic_per(&cfg.propagation, cfg.uav_altitude, &distance_grid(max, cfg.per_fit.grid_points))
}

/// Everything that depends on the seed but not on the strategy: device
/// placement, datasets, initial models. Shared by all strategies of a seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub devices: Vec<DeviceState>,
    pub tasks: SyntheticTasks,
    pub initial_models: Vec<ModelParams>,
    pub fit: LogisticPerFit,
}

impl Scenario {
    pub fn build(cfg: &ServiceConfig, seed: u64) -> Result<Self> {
        let mut devices = place_devices(cfg, &mut stream(seed, Stream::Placement, &[]));
        let tasks = make_synthetic_tasks(&cfg.tasks, &devices, &mut stream(seed, Stream::Data, &[]))?;
        assign_weights(&mut devices, &tasks.train_sizes());
        let initial_models = cfg
            .tasks
            .iter()
            .enumerate()
            .map(|(c, t)| {
                let shape = ModelShape {
                    inputs: t.feature_dim,
                    hidden: t.hidden_units,
                    classes: t.num_classes,
                };
                ModelParams::init(shape, &mut stream(seed, Stream::ModelInit, &[c as u64]))
            })
            .collect();
        Ok(Self {
            seed,
            devices,
            tasks,
            initial_models,
            fit: per_fit_for(cfg)?,
        })
    }
}

/// The plan flown in one round, as dumped for plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanRecord {
    pub round: usize,
    pub start: Position,
    pub waypoints: Vec<Position>,
    pub schedule: Vec<Assignment>,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceOutcome {
    pub step: Option<usize>,
    pub success: bool,
    pub segment: Option<Segment>,
    pub snr: Option<f64>,
    /// Accuracy of the broadcast model, computed if the device was scheduled.
    pub accuracy: Option<f64>,
}

impl DeviceOutcome {
    pub fn scheduled(&self) -> bool {
        self.step.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityOutcome {
    pub scheduled: usize,
    pub received: usize,
    pub accuracy: f64,
    pub cov: f64,
    pub model_changed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    pub plan: PlanRecord,
    pub devices: Vec<DeviceOutcome>,
    pub communities: Vec<CommunityOutcome>,
    pub distance: f64,
    pub cum_distance: f64,
}

pub struct MissionState<'a> {
    cfg: &'a ServiceConfig,
    scenario: &'a Scenario,
    pub devices: Vec<DeviceState>,
    pub communities: Vec<CommunityState>,
    /// Member slot of each device inside its community.
    slot: Vec<usize>,
    pub uav: Position,
    pub remaining: f64,
    pub distance: f64,
    pub round: usize,
    route: RectRoute,
    route_pos: f64,
}

impl<'a> MissionState<'a> {
    pub fn new(cfg: &'a ServiceConfig, scenario: &'a Scenario) -> Self {
        let devices = scenario.devices.clone();
        let mut slot = vec![0; devices.len()];
        let communities = (0..cfg.num_communities())
            .map(|c| {
                let members: Vec<usize> = devices.iter().filter(|d| d.community == c).map(|d| d.id).collect();
                for (i, &m) in members.iter().enumerate() {
                    slot[m] = i;
                }
                CommunityState::new(
                    c,
                    members,
                    scenario.initial_models[c].clone(),
                    cfg.cov_period,
                    cfg.tasks[c].num_classes,
                )
            })
            .collect();
        Self {
            cfg,
            scenario,
            devices,
            communities,
            slot,
            uav: cfg.uav_start,
            remaining: cfg.total_budget,
            distance: 0.0,
            round: 0,
            route: RectRoute::from_config(cfg),
            route_pos: 0.0,
        }
    }

    pub fn can_afford(&self, strategy: Strategy) -> bool {
        self.remaining + BUDGET_EPS >= strategy.round_cost_floor(self.cfg)
    }

    /// Importance weight per device; `with_cov` keeps the community CoV.
    pub fn importance_weights(&self, with_cov: bool) -> Vec<f64> {
        self.devices
            .iter()
            .map(|d| {
                let psi = if with_cov { self.communities[d.community].psi } else { 1.0 };
                importance(d.weight, psi, self.cfg.fairness_weight, d.participated_last_round)
            })
            .collect()
    }

    fn positions(&self) -> Vec<Position> {
        self.devices.iter().map(|d| d.pos).collect()
    }

    fn plan(&self, strategy: Strategy, round: usize) -> Result<(PlanRecord, Trajectory, Option<ScheduleMatrix>)> {
        let cfg = self.cfg;
        let n = cfg.steps_per_round;
        let positions = self.positions();
        let delta = self.importance_weights(strategy != Strategy::NoCov);
        let problem = RoundProblem {
            devices: &positions,
            delta: &delta,
            fit: &self.scenario.fit,
            altitude: cfg.uav_altitude,
            max_length: cfg.round_budget.min(self.remaining),
            steps: n,
            max_per_step: cfg.max_served_per_step,
            optimizer: &cfg.optimizer,
        };
        let fixed = |traj: Trajectory| -> Result<(f64, Vec<f64>, Trajectory, Option<ScheduleMatrix>)> {
            let (s, v) = solve_schedule(&problem.rewards(&traj)?, problem.max_per_step);
            Ok((v, vec![v], traj, Some(s)))
        };
        let (objective, trace, traj, sched) = match strategy {
            Strategy::Optimized | Strategy::NoCov => {
                let p = alternating_optimize(self.uav, &problem)?;
                (p.objective, p.objective_trace, p.trajectory, Some(p.schedule))
            }
            Strategy::Barycenter => {
                let at = barycenter(&self.devices).unwrap_or(self.uav);
                fixed(Trajectory::stationary(at, n))?
            }
            Strategy::Rectangular => {
                let wps = self.route.arc(self.route_pos, cfg.round_budget, n);
                fixed(Trajectory {
                    start: wps[0],
                    waypoints: wps,
                })?
            }
            Strategy::Ideal => (0.0, Vec::new(), Trajectory::stationary(self.uav, n), None),
        };
        let record = PlanRecord {
            round,
            start: traj.start,
            waypoints: traj.waypoints.clone(),
            schedule: sched.as_ref().map(ScheduleMatrix::assignments).unwrap_or_default(),
            objective,
            objective_trace: trace,
        };
        Ok((record, traj, sched))
    }

    /// One communication round: plan, broadcast, local training on the
    /// scheduled devices, uplink during the flight, aggregation, CoV
    /// bookkeeping and budget accounting.
    pub fn run_round(&mut self, strategy: Strategy) -> Result<RoundOutcome> {
        let cfg = self.cfg;
        let floor = strategy.round_cost_floor(cfg);
        if !self.can_afford(strategy) {
            return Err(Error::BudgetExhausted {
                remaining: self.remaining,
                needed: floor,
            });
        }
        let round = self.round + 1;
        let seed = self.scenario.seed;
        let (record, traj, sched) = self.plan(strategy, round)?;
        let opts = TrainOptions::from(&cfg.training);

        let mut outcomes = Vec::with_capacity(self.devices.len());
        let mut updates: Vec<Vec<(LocalUpdate, f64)>> = vec![Vec::new(); self.communities.len()];
        for d in &self.devices {
            let step = match &sched {
                Some(s) => s.step_of(d.id),
                None => Some(0),
            };
            let Some(step) = step else {
                outcomes.push(DeviceOutcome {
                    step: None,
                    success: false,
                    segment: None,
                    snr: None,
                    accuracy: None,
                });
                continue;
            };
            let data = &self.scenario.tasks.data[d.id];
            let global = &self.communities[d.community].model;
            let accuracy = validation_accuracy(global, &data.val)?;
            let mut rng = stream(seed, Stream::Training, &[round as u64, d.id as u64]);
            let params = local_train_fedprox(global, global, &data.train, &opts, &mut rng)?;
            let (success, segment, snr) = if sched.is_some() {
                let mut rng = stream(seed, Stream::Uplink, &[round as u64, d.id as u64]);
                let up = sample_uplink(&traj.waypoints[step], &d.pos, cfg.uav_altitude, &cfg.propagation, &mut rng);
                (up.success, Some(up.segment), Some(up.snr))
            } else {
                (true, None, None)
            };
            if success {
                updates[d.community].push((
                    LocalUpdate {
                        device: d.id,
                        params,
                        accuracy,
                    },
                    d.weight,
                ));
            }
            outcomes.push(DeviceOutcome {
                step: Some(step),
                success,
                segment,
                snr,
                accuracy: Some(accuracy),
            });
        }

        let mut changed = vec![false; self.communities.len()];
        for (c, ups) in updates.iter().enumerate() {
            if ups.is_empty() {
                continue;
            }
            let (list, weights): (Vec<LocalUpdate>, Vec<f64>) = ups.iter().cloned().unzip();
            self.communities[c].model = aggregate(&list, &weights)?;
            changed[c] = true;
        }

        for (d, o) in self.devices.iter_mut().zip(&outcomes) {
            let community = &mut self.communities[d.community];
            let i = self.slot[d.id];
            d.participated_last_round = o.success;
            let value = match o.accuracy.filter(|_| o.success) {
                Some(a) => {
                    d.reported_accuracy = a;
                    a
                }
                None => community.latest()[i],
            };
            community.record(i, value);
        }
        if round % cfg.cov_period == 0 {
            for c in 0..self.communities.len() {
                let weights: Vec<f64> = self.communities[c].members.iter().map(|&m| self.devices[m].weight).collect();
                self.communities[c].psi = update_cov(&self.communities[c], &weights)?;
            }
        }

        let cost = match strategy {
            Strategy::Optimized | Strategy::NoCov => traj.length().max(floor),
            Strategy::Barycenter => cfg.hover_round_cost(),
            Strategy::Rectangular | Strategy::Ideal => cfg.round_budget,
        }
        .min(self.remaining);
        self.remaining -= cost;
        self.distance += cost;
        match strategy {
            Strategy::Rectangular => self.route_pos += cfg.round_budget,
            Strategy::Ideal => {}
            _ => self.uav = traj.end(),
        }
        self.round = round;

        let mut communities = Vec::with_capacity(self.communities.len());
        for (c, cs) in self.communities.iter().enumerate() {
            let mut acc = 0.0;
            for &m in &cs.members {
                acc += self.devices[m].weight * validation_accuracy(&cs.model, &self.scenario.tasks.data[m].val)?;
            }
            let members = || cs.members.iter().map(|&m| &outcomes[m]);
            communities.push(CommunityOutcome {
                scheduled: members().filter(|o| o.scheduled()).count(),
                received: members().filter(|o| o.success).count(),
                accuracy: acc,
                cov: cs.psi,
                model_changed: changed[c],
            });
        }
        Ok(RoundOutcome {
            round,
            plan: record,
            devices: outcomes,
            communities,
            distance: cost,
            cum_distance: self.distance,
        })
    }
}

/// Device and area context for a plan dump.
#[derive(Debug, Clone, Serialize)]
pub struct PlanDump {
    pub strategy: Strategy,
    pub seed: u64,
    pub area: [f64; 2],
    pub altitude: f64,
    pub devices: Vec<DeviceState>,
    pub rounds: Vec<PlanRecord>,
}

/// Runs rounds until the budget (or `max_rounds`) runs out. Plans are kept
/// when `capture_plans` is set.
pub fn run_scenario(
    cfg: &ServiceConfig,
    scenario: &Scenario,
    strategy: Strategy,
    capture_plans: bool,
) -> Result<(MetricsLog, Option<PlanDump>)> {
    let mut state = MissionState::new(cfg, scenario);
    let mut log = MetricsLog {
        seed: scenario.seed,
        strategy,
        config_hash: cfg.hash(),
        num_communities: cfg.num_communities(),
        rows: Vec::new(),
    };
    let mut plans = Vec::new();
    while state.can_afford(strategy) && cfg.max_rounds.map_or(true, |m| state.round < m) {
        let out = state.run_round(strategy)?;
        for (c, co) in out.communities.iter().enumerate() {
            log.rows.push(MetricsRow {
                round: out.round,
                community: c,
                mean_val_acc: co.accuracy,
                cov: co.cov,
                scheduled: co.scheduled,
                succeeded: co.received,
                cum_distance: out.cum_distance,
            });
        }
        if capture_plans {
            plans.push(out.plan);
        }
    }
    let dump = capture_plans.then(|| PlanDump {
        strategy,
        seed: scenario.seed,
        area: [cfg.area_width, cfg.area_height],
        altitude: cfg.uav_altitude,
        devices: scenario.devices.clone(),
        rounds: plans,
    });
    Ok((log, dump))
}

pub fn run_mission(cfg: &ServiceConfig, strategy: Strategy, seed: u64) -> Result<MetricsLog> {
    let scenario = Scenario::build(cfg, seed)?;
    Ok(run_scenario(cfg, &scenario, strategy, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::TaskSpec;

    fn small_cfg() -> ServiceConfig {
        let mut cfg = ServiceConfig::default();
        cfg.devices_per_community = vec![4, 4];
        cfg.steps_per_round = 6;
        cfg.max_rounds = Some(3);
        cfg.tasks = vec![
            TaskSpec {
                train_per_class: 24,
                val_per_label: 8,
                ..TaskSpec::hard()
            },
            TaskSpec {
                train_per_class: 24,
                val_per_label: 8,
                ..TaskSpec::easy()
            },
        ];
        cfg
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            let json = serde_json::to_string(&s).unwrap();
            assert_eq!(json, format!("\"{}\"", s.as_str()));
            let v = <Strategy as clap::ValueEnum>::from_str(s.as_str(), false).unwrap();
            assert_eq!(v, s);
        }
    }

    #[test]
    fn ideal_round_uses_everyone() {
        let cfg = small_cfg();
        let sc = Scenario::build(&cfg, 5).unwrap();
        let mut st = MissionState::new(&cfg, &sc);
        let out = st.run_round(Strategy::Ideal).unwrap();
        assert!(out.devices.iter().all(|d| d.scheduled() && d.success));
        assert!(out.communities.iter().all(|c| c.received == 4 && c.model_changed));
        assert_eq!(out.distance, cfg.round_budget);
    }

    #[test]
    fn failed_uplinks_leave_models_unchanged() {
        let mut cfg = small_cfg();
        let sc = Scenario::build(&cfg, 6).unwrap();
        // no SNR can reach this threshold
        cfg.propagation.snr_threshold = 1e30;
        let mut st = MissionState::new(&cfg, &sc);
        let before: Vec<ModelParams> = st.communities.iter().map(|c| c.model.clone()).collect();
        let out = st.run_round(Strategy::Barycenter).unwrap();
        assert!(out.devices.iter().all(|d| !d.success));
        for (c, m) in st.communities.iter().zip(&before) {
            assert_eq!(&c.model, m);
        }
        assert!(st.devices.iter().all(|d| !d.participated_last_round));
        let with = st.importance_weights(true);
        for (d, w) in st.devices.iter().zip(&with) {
            let psi = st.communities[d.community].psi;
            assert!((w - d.weight * psi * cfg.fairness_weight).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_a_round_scales_importance_by_lambda() {
        let cfg = small_cfg();
        let sc = Scenario::build(&cfg, 8).unwrap();
        let mut st = MissionState::new(&cfg, &sc);
        st.devices[0].participated_last_round = true;
        let a = st.importance_weights(true)[0];
        st.devices[0].participated_last_round = false;
        let b = st.importance_weights(true)[0];
        assert!(b > a);
        assert!((b - a * cfg.fairness_weight).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_community_keeps_its_model() {
        let cfg = small_cfg();
        let mut sc = Scenario::build(&cfg, 9).unwrap();
        // community 0 right under the barycenter, community 1 split 100 km apart
        for d in &mut sc.devices {
            d.pos = match (d.community, d.id % 2) {
                (0, _) => Position::new(400.0, 400.0),
                (_, 0) => Position::new(-49_600.0, 400.0),
                _ => Position::new(50_400.0, 400.0),
            };
        }
        let mut st = MissionState::new(&cfg, &sc);
        let before = st.communities.iter().map(|c| c.model.clone()).collect::<Vec<_>>();
        let out = st.run_round(Strategy::Barycenter).unwrap();
        assert_eq!(out.communities[0].received, 4);
        assert_eq!(out.communities[1].received, 0);
        assert_ne!(st.communities[0].model, before[0]);
        assert_eq!(st.communities[1].model, before[1]);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small_cfg();
        let a = run_mission(&cfg, Strategy::Optimized, 3).unwrap();
        let b = run_mission(&cfg, Strategy::Optimized, 3).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.rounds(), 3);
    }

    #[test]
    fn budget_stops_the_loop() {
        let mut cfg = small_cfg();
        cfg.max_rounds = None;
        cfg.total_budget = 2_000.0;
        let log = run_mission(&cfg, Strategy::Rectangular, 1).unwrap();
        assert_eq!(log.rounds(), 2);
        assert_eq!(log.total_distance(), 1600.0);
    }
}
