//! Device scheduling for a fixed trajectory.
//!
//! Each step can serve at most K̄ devices and each device is served at most
//! once per round. The relaxed LP over this polytope has integral optima, so
//! it is solved exactly as a max-weight b-matching on the step/device
//! bipartite graph with successive shortest paths.

use serde::Serialize;

use crate::channel::{elevation_angle, LogisticPerFit};
use crate::error::{Error, Result};
use crate::world::Position;

const FEAS_TOL: f64 = 1e-9;

/// R[n][k] = (1 - q̃_k[n]) δ_k, row-major over steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardMatrix {
    steps: usize,
    devices: usize,
    values: Vec<f64>,
}

impl RewardMatrix {
    pub fn new(steps: usize, devices: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != steps * devices {
            return Err(Error::Shape(format!(
                "{} rewards for a {steps}x{devices} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Shape(format!("reward {v} is not finite and >= 0")));
        }
        Ok(Self { steps, devices, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let devices = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != devices) {
            return Err(Error::Shape("ragged reward rows".into()));
        }
        Self::new(rows.len(), devices, rows.concat())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.devices + k]
    }

    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(self.steps, self.devices, self.values.iter().map(|v| v * t).collect())
    }
}

/// ω[n][k] in [0, 1], row-major over steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleMatrix {
    steps: usize,
    devices: usize,
    values: Vec<f64>,
}

/// One (step, device) assignment of a binary schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Assignment {
    pub step: usize,
    pub device: usize,
}

impl ScheduleMatrix {
    pub fn empty(steps: usize, devices: usize) -> Self {
        Self {
            steps,
            devices,
            values: vec![0.0; steps * devices],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let devices = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != devices) {
            return Err(Error::Shape("ragged schedule rows".into()));
        }
        Ok(Self {
            steps: rows.len(),
            devices,
            values: rows.concat(),
        })
    }

    pub fn from_assignments(steps: usize, devices: usize, pairs: &[Assignment]) -> Self {
        let mut s = Self::empty(steps, devices);
        for a in pairs {
            s.set(a.step, a.device, 1.0);
        }
        s
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.devices + k]
    }

    pub fn set(&mut self, n: usize, k: usize, v: f64) {
        self.values[n * self.devices + k] = v;
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Scheduled pairs in (step, device) order.
    pub fn assignments(&self) -> Vec<Assignment> {
        let mut out = Vec::new();
        for n in 0..self.steps {
            for k in 0..self.devices {
                if self.get(n, k) > 0.5 {
                    out.push(Assignment { step: n, device: k });
                }
            }
        }
        out
    }

    /// Step at which device `k` is served, if any.
    pub fn step_of(&self, k: usize) -> Option<usize> {
        (0..self.steps).find(|&n| self.get(n, k) > 0.5)
    }

    pub fn num_scheduled(&self) -> usize {
        self.values.iter().filter(|&&v| v > 0.5).count()
    }

    pub fn check_feasible(&self, max_per_step: usize) -> Result<()> {
        if let Some(v) = self.values.iter().find(|v| !(**v >= -FEAS_TOL && **v <= 1.0 + FEAS_TOL)) {
            return Err(Error::InfeasibleSchedule(format!("entry {v} outside [0, 1]")));
        }
        for n in 0..self.steps {
            let row: f64 = (0..self.devices).map(|k| self.get(n, k)).sum();
            if row > max_per_step as f64 + FEAS_TOL {
                return Err(Error::InfeasibleSchedule(format!(
                    "step {n} serves {row} devices, capacity {max_per_step}"
                )));
            }
        }
        for k in 0..self.devices {
            let col: f64 = (0..self.steps).map(|n| self.get(n, k)).sum();
            if col > 1.0 + FEAS_TOL {
                return Err(Error::InfeasibleSchedule(format!("device {k} served {col} times")));
            }
        }
        Ok(())
    }

    pub fn objective(&self, r: &RewardMatrix) -> f64 {
        self.values.iter().zip(&r.values).map(|(w, r)| w * r).sum()
    }
}

/// Reward of serving each device at each waypoint under the logistic PER
/// approximation.
pub fn build_rewards(
    waypoints: &[Position],
    devices: &[Position],
    delta: &[f64],
    fit: &LogisticPerFit,
    altitude: f64,
) -> Result<RewardMatrix> {
    if delta.len() != devices.len() {
        return Err(Error::Shape(format!(
            "{} importance weights for {} devices",
            delta.len(),
            devices.len()
        )));
    }
    let mut values = Vec::with_capacity(waypoints.len() * devices.len());
    for w in waypoints {
        for (d, &dk) in devices.iter().zip(delta) {
            let q = fit.approx_per(elevation_angle(w, altitude, d));
            values.push((1.0 - q) * dk);
        }
    }
    RewardMatrix::new(waypoints.len(), devices.len(), values)
}

struct Edge {
    to: usize,
    cap: i64,
    cost: f64,
}

/// Min-cost flow on a small graph via Bellman-Ford shortest paths; stops as
/// soon as no negative-cost augmenting path remains.
struct FlowGraph {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl FlowGraph {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: vec![Vec::new(); nodes],
        }
    }

    fn add_edge(&mut self, from: usize, to: usize, cap: i64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.adj[from].push(id);
        self.edges.push(Edge { to: from, cap: 0, cost: -cost });
        self.adj[to].push(id + 1);
        id
    }

    fn min_cost_flow(&mut self, s: usize, t: usize) {
        let n = self.adj.len();
        loop {
            let mut dist = vec![f64::INFINITY; n];
            let mut prev: Vec<Option<usize>> = vec![None; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if dist[u] == f64::INFINITY {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let edge = &self.edges[e];
                        let nd = dist[u] + edge.cost;
                        if edge.cap > 0 && nd < dist[edge.to] - 1e-15 {
                            dist[edge.to] = nd;
                            prev[edge.to] = Some(e);
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !(dist[t] < -1e-12) {
                return;
            }
            let mut push = i64::MAX;
            let mut v = t;
            while let Some(e) = prev[v] {
                push = push.min(self.edges[e].cap);
                v = self.edges[e ^ 1].to;
            }
            let mut v = t;
            while let Some(e) = prev[v] {
                self.edges[e].cap -= push;
                self.edges[e ^ 1].cap += push;
                v = self.edges[e ^ 1].to;
            }
        }
    }
}

fn solve_masked(r: &RewardMatrix, max_per_step: usize, allowed: impl Fn(usize, usize) -> bool) -> ScheduleMatrix {
    let (steps, devices) = (r.steps, r.devices);
    let source = steps + devices;
    let sink = source + 1;
    let mut g = FlowGraph::new(sink + 1);
    for n in 0..steps {
        g.add_edge(source, n, max_per_step as i64, 0.0);
    }
    let mut pair_edges = Vec::new();
    for n in 0..steps {
        for k in 0..devices {
            let v = r.get(n, k);
            if v > 0.0 && allowed(n, k) {
                pair_edges.push((n, k, g.add_edge(n, steps + k, 1, -v)));
            }
        }
    }
    for k in 0..devices {
        g.add_edge(steps + k, sink, 1, 0.0);
    }
    g.min_cost_flow(source, sink);
    let mut out = ScheduleMatrix::empty(steps, devices);
    for (n, k, e) in pair_edges {
        if g.edges[e].cap == 0 {
            out.set(n, k, 1.0);
        }
    }
    out
}

/// Optimal schedule and its value. The returned schedule is binary.
pub fn solve_schedule(r: &RewardMatrix, max_per_step: usize) -> (ScheduleMatrix, f64) {
    let s = solve_masked(r, max_per_step, |_, _| true);
    let v = s.objective(r);
    (s, v)
}

/// Turns a feasible relaxed schedule into a binary one whose value under `r`
/// is at least that of `omega`. Binary input is returned unchanged.
pub fn round_schedule(omega: &ScheduleMatrix, r: &RewardMatrix, max_per_step: usize) -> Result<ScheduleMatrix> {
    if omega.steps != r.steps || omega.devices != r.devices {
        return Err(Error::Shape(format!(
            "schedule is {}x{}, rewards {}x{}",
            omega.steps, omega.devices, r.steps, r.devices
        )));
    }
    omega.check_feasible(max_per_step)?;
    if omega.is_binary() {
        return Ok(omega.clone());
    }
    Ok(solve_masked(r, max_per_step, |n, k| omega.get(n, k) > 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive search over every device-to-step assignment.
    fn brute_force(r: &RewardMatrix, kbar: usize) -> f64 {
        let (n, k) = (r.steps(), r.devices());
        let mut choice = vec![0usize; k];
        let mut best: f64 = 0.0;
        loop {
            let mut load = vec![0usize; n];
            let mut ok = true;
            let mut val = 0.0;
            for (dev, &c) in choice.iter().enumerate() {
                if c > 0 {
                    load[c - 1] += 1;
                    ok &= load[c - 1] <= kbar;
                    val += r.get(c - 1, dev);
                }
            }
            if ok {
                best = best.max(val);
            }
            let mut i = 0;
            loop {
                if i == k {
                    return best;
                }
                choice[i] += 1;
                if choice[i] <= n {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn random_rewards(rng: &mut impl Rng, n: usize, k: usize) -> RewardMatrix {
        let vals = (0..n * k)
            .map(|_| if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        RewardMatrix::new(n, k, vals).unwrap()
    }

    #[test]
    fn two_step_example() {
        let r = RewardMatrix::from_rows(&[vec![0.9, 0.5, 0.1], vec![0.2, 0.8, 0.3]]).unwrap();
        let (s, v) = solve_schedule(&r, 1);
        assert!((v - 1.7).abs() < 1e-12);
        assert_eq!(
            s.assignments(),
            vec![Assignment { step: 0, device: 0 }, Assignment { step: 1, device: 1 }]
        );
        assert!((brute_force(&r, 1) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn capacity_slack_schedules_everyone() {
        let r = RewardMatrix::from_rows(&[vec![0.3, 0.2, 0.9, 0.05]]).unwrap();
        let (s, v) = solve_schedule(&r, 4);
        assert_eq!(s.num_scheduled(), 4);
        assert!((v - 1.45).abs() < 1e-12);
    }

    #[test]
    fn zero_rewards_give_zero() {
        let r = RewardMatrix::new(3, 4, vec![0.0; 12]).unwrap();
        let (s, v) = solve_schedule(&r, 2);
        assert_eq!(v, 0.0);
        s.check_feasible(2).unwrap();
    }

    #[test]
    fn rejects_negative_rewards() {
        assert!(RewardMatrix::new(1, 2, vec![0.1, -0.1]).is_err());
        assert!(RewardMatrix::new(1, 2, vec![0.1, f64::NAN]).is_err());
    }

    #[test]
    fn matches_exhaustive_optimum() {
        let mut rng = stream(11, Stream::Placement, &[]);
        for _ in 0..200 {
            let n = rng.random_range(1..=4);
            let k = rng.random_range(1..=7);
            let kbar = rng.random_range(1..=3);
            let r = random_rewards(&mut rng, n, k);
            let (s, v) = solve_schedule(&r, kbar);
            s.check_feasible(kbar).unwrap();
            assert!(s.is_binary());
            let oracle = brute_force(&r, kbar);
            assert!((v - oracle).abs() < 1e-9, "{v} vs {oracle}");
        }
    }

    #[test]
    fn rounding_matches_exhaustive_optimum() {
        let mut rng = stream(12, Stream::Placement, &[]);
        for _ in 0..50 {
            let r = random_rewards(&mut rng, 4, 6);
            // uniform fractional point: feasible, full support
            let omega = ScheduleMatrix::from_rows(&vec![vec![0.25; 6]; 4]).unwrap();
            omega.check_feasible(2).unwrap();
            let b = round_schedule(&omega, &r, 2).unwrap();
            assert!(b.is_binary());
            b.check_feasible(2).unwrap();
            assert!((b.objective(&r) - brute_force(&r, 2)).abs() < 1e-9);
        }
    }

    #[test]
    fn rounding_degenerate_tie() {
        let r = RewardMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let omega = ScheduleMatrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let b = round_schedule(&omega, &r, 1).unwrap();
        assert!(b.is_binary());
        assert!((b.objective(&r) - omega.objective(&r)).abs() < 1e-12);
        assert!((b.objective(&r) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rounding_keeps_binary_and_rejects_infeasible() {
        let r = RewardMatrix::from_rows(&[vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap();
        let omega = ScheduleMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(round_schedule(&omega, &r, 1).unwrap(), omega);
        let bad = ScheduleMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(round_schedule(&bad, &r, 1), Err(Error::InfeasibleSchedule(_))));
    }

    #[test]
    fn rewards_match_double_loop() {
        let mut rng = stream(13, Stream::Placement, &[]);
        let fit = LogisticPerFit::from_coefficients(0.12, -4.0);
        let wps: Vec<Position> = (0..5)
            .map(|_| Position::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)))
            .collect();
        let devs: Vec<Position> = (0..4)
            .map(|_| Position::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)))
            .collect();
        let delta = [0.3, 0.0, 1.2, 0.7];
        let r = build_rewards(&wps, &devs, &delta, &fit, 60.0).unwrap();
        for n in 0..5 {
            for k in 0..4 {
                let h = wps[n].distance(&devs[k]);
                let theta = (60.0f64).atan2(h).to_degrees();
                let q = 1.0 / (1.0 + (0.12 * theta - 4.0).exp());
                assert!((r.get(n, k) - (1.0 - q) * delta[k]).abs() < 1e-15);
            }
        }
        assert!((0..5).all(|n| r.get(n, 1) == 0.0));
    }

    #[test]
    fn overhead_is_row_maximum() {
        let fit = LogisticPerFit::from_coefficients(0.12, -4.0);
        let dev = Position::new(100.0, 100.0);
        let wps = [Position::new(300.0, 0.0), dev, Position::new(120.0, 90.0)];
        let r = build_rewards(&wps, &[dev], &[0.5], &fit, 60.0).unwrap();
        let expect = (1.0 - fit.approx_per(90.0)) * 0.5;
        assert!((r.get(1, 0) - expect).abs() < 1e-15);
        assert!(r.get(0, 0) < expect && r.get(2, 0) < expect);
    }

    proptest! {
        #[test]
        fn scaling_rewards_scales_value(vals in proptest::collection::vec(0.0f64..1.0, 12), t in 0.01f64..100.0, kbar in 1usize..3) {
            let r = RewardMatrix::new(3, 4, vals).unwrap();
            let (s1, v1) = solve_schedule(&r, kbar);
            let (s2, v2) = solve_schedule(&r.scaled(t).unwrap(), kbar);
            prop_assert!((v2 - t * v1).abs() <= 1e-9 * (1.0 + t * v1));
            // the schedule found for scaled rewards is optimal for the originals
            prop_assert!((s2.objective(&r) - v1).abs() <= 1e-9 * (1.0 + v1));
            prop_assert!((s1.objective(&r) - v1).abs() <= 1e-12);
        }
    }
}
