use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, NonnegativeConeT, SecondOrderConeT, SolverStatus,
    SupportedConeT,
};

use super::{evaluate_true_objective, RoundProblem, Trajectory};
use crate::channel::elevation_from_distance;
use crate::error::Result;
use crate::scheduling::ScheduleMatrix;
use crate::world::Position;

const DEG: f64 = 180.0 / std::f64::consts::PI;
const SHRINKS: usize = 4;

/// exp(b1 theta + b2) and its slope at `theta0`.
pub fn exp_tangent(b1: f64, b2: f64, theta0: f64) -> (f64, f64) {
    let e = (b1 * theta0 + b2).exp();
    (e, b1 * e)
}

/// Elevation angle arctan(H / r) in degrees and its slope in r at `r0`.
pub fn elevation_tangent(altitude: f64, r0: f64) -> (f64, f64) {
    let slope = -DEG * altitude / (r0 * r0 + altitude * altitude);
    (elevation_from_distance(altitude, r0), slope)
}

/// |v - u| and its gradient in v at `v0`; the gradient is zero at `u`.
pub fn distance_tangent(v0: &Position, u: &Position) -> (f64, [f64; 2]) {
    let r = v0.distance(u);
    if r > 0.0 {
        (r, [(v0.x - u.x) / r, (v0.y - u.y) / r])
    } else {
        (0.0, [0.0, 0.0])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaOutcome {
    pub trajectory: Trajectory,
    pub objective: f64,
    /// Objective of every accepted iterate, starting with the input.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

/// Sparse constraint rows `A x + s = b` grouped by cone.
#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl Rows {
    fn row(&mut self, entries: &[(usize, f64)], b: f64) {
        let r = self.b.len();
        for &(j, v) in entries {
            if v != 0.0 {
                self.i.push(r);
                self.j.push(j);
                self.v.push(v);
            }
        }
        self.b.push(b);
    }

    fn nonneg(&mut self, entries: &[(usize, f64)], b: f64) {
        self.row(entries, b);
        self.cones.push(NonnegativeConeT(1));
    }

    fn soc(&mut self, rows: &[(&[(usize, f64)], f64)]) {
        for (e, b) in rows {
            self.row(e, *b);
        }
        self.cones.push(SecondOrderConeT(rows.len()));
    }
}

struct Pair {
    step: usize,
    device: usize,
    weight: f64,
}

/// One convex subproblem around `inc`. Variables: displacement d_n of each
/// free waypoint, segment lengths s_j, and per scheduled pair the scaled
/// slack sigma (S = S0 sigma), the elevation theta, the distance r and the
/// epigraph tau of 1 / (1 + S).
fn solve_subproblem(inc: &Trajectory, pairs: &[Pair], problem: &RoundProblem, radius: f64) -> std::result::Result<Trajectory, String> {
    let n = inc.steps();
    let free = n - 1;
    let seg0 = 2 * free;
    let pair0 = seg0 + free;
    let nvar = pair0 + 4 * pairs.len();
    let d = |w: usize, c: usize| 2 * (w - 1) + c;
    let h = problem.altitude;
    let (b1, b2) = (problem.fit.b1, problem.fit.b2);
    let wp = &inc.waypoints;

    let mut rows = Rows::default();
    let mut q = vec![0.0; nvar];

    // |v_{j+1} - v_j| <= s_j
    for j in 0..free {
        let mut ex: Vec<(usize, f64)> = vec![(d(j + 1, 0), -1.0)];
        let mut ey: Vec<(usize, f64)> = vec![(d(j + 1, 1), -1.0)];
        if j > 0 {
            ex.push((d(j, 0), 1.0));
            ey.push((d(j, 1), 1.0));
        }
        rows.soc(&[
            (&[(seg0 + j, -1.0)], 0.0),
            (&ex, wp[j + 1].x - wp[j].x),
            (&ey, wp[j + 1].y - wp[j].y),
        ]);
    }
    let total: Vec<(usize, f64)> = (0..free).map(|j| (seg0 + j, 1.0)).collect();
    rows.nonneg(&total, problem.max_length);
    for w in 1..n {
        rows.soc(&[(&[], radius), (&[(d(w, 0), -1.0)], 0.0), (&[(d(w, 1), -1.0)], 0.0)]);
    }

    for (p, pair) in pairs.iter().enumerate() {
        let (sigma, theta, r, tau) = (pair0 + 4 * p, pair0 + 4 * p + 1, pair0 + 4 * p + 2, pair0 + 4 * p + 3);
        let u = problem.devices[pair.device];
        let v0 = wp[pair.step];
        let r0 = v0.distance(&u).max(problem.optimizer.min_distance);
        let (theta0, slope) = elevation_tangent(h, r0);
        let (s0, _) = exp_tangent(b1, b2, theta0);

        // r >= |v - u|
        let w = pair.step;
        rows.soc(&[
            (&[(r, -1.0)], 0.0),
            (&[(d(w, 0), -1.0)], v0.x - u.x),
            (&[(d(w, 1), -1.0)], v0.y - u.y),
        ]);
        // theta <= arctan(H / r0) + slope (r - r0)
        rows.nonneg(&[(theta, 1.0), (r, -slope)], theta0 - slope * r0);
        // S0 sigma <= S0 (1 + b1 (theta - theta0))
        rows.nonneg(&[(sigma, 1.0), (theta, -b1)], 1.0 - b1 * theta0);
        rows.nonneg(&[(sigma, -1.0)], 0.0);
        // tau (a + b sigma) >= 1 with (1 + S) = (1 + S0)(a + b sigma)
        let a = 1.0 / (1.0 + s0);
        let bb = s0 / (1.0 + s0);
        rows.soc(&[
            (&[(tau, -1.0), (sigma, -bb)], a),
            (&[], 2.0),
            (&[(tau, -1.0), (sigma, bb)], -a),
        ]);
        q[tau] = pair.weight / (1.0 + s0);
    }

    let m = rows.b.len();
    let a_mat = CscMatrix::new_from_triplets(m, nvar, rows.i, rows.j, rows.v);
    let p_mat = CscMatrix::zeros((nvar, nvar));
    let settings = DefaultSettings {
        verbose: false,
        ..DefaultSettings::default()
    };
    let mut solver = DefaultSolver::new(&p_mat, &q, &a_mat, &rows.b, &rows.cones, settings)
        .map_err(|e| format!("subproblem setup failed: {e}"))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        s => return Err(format!("subproblem solver stopped with status {s:?}")),
    }
    let x = &solver.solution.x;
    let mut out = inc.clone();
    for w in 1..n {
        out.waypoints[w] = Position::new(wp[w].x + x[d(w, 0)], wp[w].y + x[d(w, 1)]);
    }
    if !out.waypoints.iter().all(Position::is_finite) {
        return Err("subproblem returned non-finite waypoints".into());
    }
    Ok(out)
}

/// Sequential convex refinement of the waypoints for a fixed schedule.
///
/// Each iteration replaces exp(b1 theta + b2) and arctan(H / r) by their
/// tangents at the incumbent, which bound them from below, and solves the
/// resulting second-order cone program inside a trust region. A candidate
/// is kept only if the exact objective does not drop; otherwise the trust
/// radius is halved. Solver failures end the loop and keep the incumbent.
pub fn sca_trajectory(sched: &ScheduleMatrix, init: &Trajectory, problem: &RoundProblem) -> Result<ScaOutcome> {
    let opt = problem.optimizer;
    let mut inc = init.clone();
    inc.retract(problem.max_length);
    let mut f = evaluate_true_objective(&inc, sched, problem);
    let mut trace = vec![f];
    let pairs: Vec<Pair> = sched
        .assignments()
        .into_iter()
        .filter(|a| a.step > 0 && problem.delta[a.device] > 0.0)
        .map(|a| Pair {
            step: a.step,
            device: a.device,
            weight: problem.delta[a.device],
        })
        .collect();
    let mut diagnostic = None;
    let mut iterations = 0;
    if pairs.is_empty() || inc.steps() < 2 {
        return Ok(ScaOutcome {
            trajectory: inc,
            objective: f,
            trace,
            iterations,
            diagnostic,
        });
    }
    'outer: for _ in 0..opt.max_inner {
        iterations += 1;
        let mut radius = opt.trust_radius;
        let mut accepted = None;
        for _ in 0..SHRINKS {
            match solve_subproblem(&inc, &pairs, problem, radius) {
                Ok(mut cand) => {
                    cand.retract(problem.max_length);
                    let g = evaluate_true_objective(&cand, sched, problem);
                    if g >= f {
                        accepted = Some((cand, g));
                        break;
                    }
                    radius *= 0.5;
                }
                Err(msg) => {
                    diagnostic = Some(msg);
                    break 'outer;
                }
            }
        }
        let Some((cand, g)) = accepted else { break };
        let gain = g - f;
        inc = cand;
        f = g;
        trace.push(f);
        if gain < opt.tol {
            break;
        }
    }
    Ok(ScaOutcome {
        trajectory: inc,
        objective: f,
        trace,
        iterations,
        diagnostic,
    })
}
