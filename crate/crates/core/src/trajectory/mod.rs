//! Per-round UAV path planning.
//!
//! A round plan is built by [`graph_init`] and then refined by alternating
//! between the exact scheduling solver and [`sca_trajectory`] until the
//! surrogate objective stops improving.

mod greedy;
mod sca;

use serde::Serialize;

pub use greedy::{graph_init, resample_path};
pub use sca::{distance_tangent, elevation_tangent, exp_tangent, sca_trajectory, ScaOutcome};

use crate::channel::{elevation_angle, LogisticPerFit};
use crate::error::{Error, Result};
use crate::scheduling::{build_rewards, solve_schedule, RewardMatrix, ScheduleMatrix};
use crate::world::{OptimizerConfig, Position};

/// Slack allowed on the path-length budget.
pub const LENGTH_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub start: Position,
    /// N waypoints; the first equals `start`.
    pub waypoints: Vec<Position>,
}

impl Trajectory {
    pub fn stationary(start: Position, steps: usize) -> Self {
        Self {
            start,
            waypoints: vec![start; steps.max(1)],
        }
    }

    pub fn steps(&self) -> usize {
        self.waypoints.len()
    }

    pub fn length(&self) -> f64 {
        path_length(&self.waypoints)
    }

    pub fn end(&self) -> Position {
        *self.waypoints.last().unwrap_or(&self.start)
    }

    pub fn is_feasible(&self, max_length: f64) -> bool {
        self.waypoints.first() == Some(&self.start)
            && self.length() <= max_length + LENGTH_TOL
            && self.waypoints.iter().all(Position::is_finite)
    }

    /// Shrinks the path about its start so that it fits in `max_length`.
    pub(crate) fn retract(&mut self, max_length: f64) {
        let len = self.length();
        if len > max_length {
            let t = if len > 0.0 { max_length.max(0.0) / len } else { 0.0 };
            let s = self.start;
            for w in &mut self.waypoints {
                *w = s.lerp(w, t);
            }
        }
        if let Some(w) = self.waypoints.first_mut() {
            *w = self.start;
        }
    }
}

pub(crate) fn path_length(points: &[Position]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Everything a round planner needs besides the start position.
#[derive(Debug, Clone, Copy)]
pub struct RoundProblem<'a> {
    pub devices: &'a [Position],
    /// Importance weight per device.
    pub delta: &'a [f64],
    pub fit: &'a LogisticPerFit,
    pub altitude: f64,
    pub max_length: f64,
    pub steps: usize,
    pub max_per_step: usize,
    pub optimizer: &'a OptimizerConfig,
}

impl RoundProblem<'_> {
    fn check(&self) -> Result<()> {
        if self.devices.len() != self.delta.len() {
            return Err(Error::Shape(format!(
                "{} importance weights for {} devices",
                self.delta.len(),
                self.devices.len()
            )));
        }
        if self.steps == 0 || self.max_per_step == 0 {
            return Err(Error::Shape("steps and per-step capacity must be >= 1".into()));
        }
        if !(self.max_length >= 0.0) {
            return Err(Error::Shape(format!("round budget {} < 0", self.max_length)));
        }
        Ok(())
    }

    /// Reward of serving device `k` from `w`.
    pub fn reward(&self, w: &Position, k: usize) -> f64 {
        let theta = elevation_angle(w, self.altitude, &self.devices[k]);
        (1.0 - self.fit.approx_per(theta)) * self.delta[k]
    }

    pub fn rewards(&self, traj: &Trajectory) -> Result<RewardMatrix> {
        build_rewards(&traj.waypoints, self.devices, self.delta, self.fit, self.altitude)
    }
}

/// Surrogate objective sum over scheduled (n, k) of (1 - q~_k[n]) delta_k.
pub fn evaluate_true_objective(traj: &Trajectory, sched: &ScheduleMatrix, problem: &RoundProblem) -> f64 {
    sched
        .assignments()
        .iter()
        .map(|a| problem.reward(&traj.waypoints[a.step], a.device))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub trajectory: Trajectory,
    pub schedule: ScheduleMatrix,
    pub objective: f64,
    /// Objective after the initial schedule and after every phase.
    pub objective_trace: Vec<f64>,
    /// Solver failures that were absorbed by keeping the incumbent.
    pub diagnostics: Vec<String>,
}

/// Greedy initial path, then schedule and trajectory phases in turn until
/// an outer iteration gains less than `tol`.
pub fn alternating_optimize(start: Position, problem: &RoundProblem) -> Result<RoundPlan> {
    problem.check()?;
    let opt = problem.optimizer;
    let mut traj = graph_init(start, problem);
    let (mut sched, mut value) = solve_schedule(&problem.rewards(&traj)?, problem.max_per_step);
    let mut trace = vec![value];
    let mut diagnostics = Vec::new();
    for _ in 0..opt.max_outer {
        let sca = sca_trajectory(&sched, &traj, problem)?;
        diagnostics.extend(sca.diagnostic);
        trace.push(sca.objective);
        let (next_sched, next_value) = solve_schedule(&problem.rewards(&sca.trajectory)?, problem.max_per_step);
        trace.push(next_value);
        let gain = next_value - value;
        traj = sca.trajectory;
        sched = next_sched;
        value = next_value;
        if gain < opt.tol {
            break;
        }
    }
    let objective = evaluate_true_objective(&traj, &sched, problem);
    Ok(RoundPlan {
        trajectory: traj,
        schedule: sched,
        objective,
        objective_trace: trace,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use crate::scheduling::Assignment;
    use rand::Rng;

    pub(super) fn test_fit() -> LogisticPerFit {
        LogisticPerFit::from_coefficients(0.15, -6.0)
    }

    fn random_devices(rng: &mut impl Rng, k: usize) -> (Vec<Position>, Vec<f64>) {
        let devs = (0..k)
            .map(|_| Position::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0)))
            .collect();
        let delta = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        (devs, delta)
    }

    #[test]
    fn objective_examples() {
        let fit = test_fit();
        let opt = OptimizerConfig::default();
        let devs = [Position::new(10.0, 20.0), Position::new(400.0, 0.0)];
        let delta = [0.7, 0.2];
        let p = RoundProblem {
            devices: &devs,
            delta: &delta,
            fit: &fit,
            altitude: 60.0,
            max_length: 800.0,
            steps: 3,
            max_per_step: 1,
            optimizer: &opt,
        };
        let t = Trajectory {
            start: devs[0],
            waypoints: vec![devs[0], Position::new(200.0, 10.0), Position::new(390.0, 5.0)],
        };
        assert_eq!(evaluate_true_objective(&t, &ScheduleMatrix::empty(3, 2), &p), 0.0);
        let one = ScheduleMatrix::from_assignments(3, 2, &[Assignment { step: 0, device: 0 }]);
        let expect = (1.0 - fit.approx_per(90.0)) * 0.7;
        assert!((evaluate_true_objective(&t, &one, &p) - expect).abs() < 1e-15);

        let two = ScheduleMatrix::from_assignments(
            3,
            2,
            &[Assignment { step: 0, device: 0 }, Assignment { step: 2, device: 1 }],
        );
        let mut naive = 0.0;
        for n in 0..3 {
            for k in 0..2 {
                let h = t.waypoints[n].distance(&devs[k]);
                let q = 1.0 / (1.0 + (0.15 * 60f64.atan2(h).to_degrees() - 6.0).exp());
                naive += two.get(n, k) * (1.0 - q) * delta[k];
            }
        }
        assert!((evaluate_true_objective(&t, &two, &p) - naive).abs() < 1e-14);
    }

    #[test]
    fn no_devices_stays_put() {
        let fit = test_fit();
        let opt = OptimizerConfig::default();
        let p = RoundProblem {
            devices: &[],
            delta: &[],
            fit: &fit,
            altitude: 60.0,
            max_length: 800.0,
            steps: 5,
            max_per_step: 2,
            optimizer: &opt,
        };
        let s = Position::new(3.0, 4.0);
        let plan = alternating_optimize(s, &p).unwrap();
        assert_eq!(plan.objective, 0.0);
        assert!(plan.trajectory.waypoints.iter().all(|w| *w == s));
    }

    #[test]
    fn single_device_single_step() {
        let fit = test_fit();
        let opt = OptimizerConfig::default();
        let devs = [Position::new(500.0, 0.0)];
        let p = RoundProblem {
            devices: &devs,
            delta: &[1.0],
            fit: &fit,
            altitude: 60.0,
            max_length: 300.0,
            steps: 1,
            max_per_step: 1,
            optimizer: &opt,
        };
        let plan = alternating_optimize(Position::new(0.0, 0.0), &p).unwrap();
        assert_eq!(plan.schedule.num_scheduled(), 1);
        assert!(plan.trajectory.is_feasible(300.0));
    }

    #[test]
    fn alternating_trace_is_monotone() {
        let fit = test_fit();
        let opt = OptimizerConfig::default();
        let mut rng = stream(21, Stream::Placement, &[]);
        for _ in 0..20 {
            let k = rng.random_range(2..10);
            let (devs, delta) = random_devices(&mut rng, k);
            let p = RoundProblem {
                devices: &devs,
                delta: &delta,
                fit: &fit,
                altitude: 60.0,
                max_length: rng.random_range(100.0..900.0),
                steps: rng.random_range(2..8),
                max_per_step: rng.random_range(1..4),
                optimizer: &opt,
            };
            let start = Position::new(rng.random_range(0.0..1000.0), rng.random_range(0.0..1000.0));
            let plan = alternating_optimize(start, &p).unwrap();
            for w in plan.objective_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-6, "{:?}", plan.objective_trace);
            }
            assert!(plan.trajectory.is_feasible(p.max_length));
            assert_eq!(plan.trajectory.waypoints[0], start);
            plan.schedule.check_feasible(p.max_per_step).unwrap();
            let again = evaluate_true_objective(&plan.trajectory, &plan.schedule, &p);
            assert!((plan.objective - again).abs() < 1e-9);
            assert!(plan.objective_trace.len() <= 1 + 2 * opt.max_outer);
        }
    }
}
