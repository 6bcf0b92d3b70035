use std::cmp::Ordering;

use super::{path_length, RoundProblem, Trajectory};
use crate::world::Position;

/// Sum of the `cap` largest positive rewards at `w` over devices not yet
/// counted, with the devices that make it up.
fn marginal(problem: &RoundProblem, w: &Position, counted: &[bool]) -> (f64, Vec<usize>) {
    let mut r: Vec<(f64, usize)> = (0..problem.devices.len())
        .filter(|&k| !counted[k])
        .map(|k| (problem.reward(w, k), k))
        .filter(|(v, _)| *v > 0.0)
        .collect();
    r.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    r.truncate(problem.max_per_step);
    (r.iter().map(|(v, _)| v).sum(), r.into_iter().map(|(_, k)| k).collect())
}

/// Greedy walk over device-overhead nodes: from the current node, move to
/// the affordable node with the best marginal reward per metre (ties: the
/// nearer, then the lower index). Every device is credited at most once.
/// The visited path is resampled to `problem.steps` waypoints.
pub fn graph_init(start: Position, problem: &RoundProblem) -> Trajectory {
    let k = problem.devices.len();
    let mut counted = vec![false; k];
    let mut visited = vec![false; k];
    for j in marginal(problem, &start, &counted).1 {
        counted[j] = true;
    }
    let mut path = vec![start];
    let mut here = start;
    let mut left = problem.max_length;
    loop {
        let mut best: Option<(f64, f64, usize, Vec<usize>)> = None;
        for j in (0..k).filter(|&j| !visited[j]) {
            let node = problem.devices[j];
            let d = here.distance(&node);
            if d > left {
                continue;
            }
            let (gain, served) = marginal(problem, &node, &counted);
            if gain <= 0.0 {
                continue;
            }
            let ratio = if d > 0.0 { gain / d } else { f64::INFINITY };
            let better = match &best {
                None => true,
                Some((br, bd, _, _)) => match ratio.partial_cmp(br) {
                    Some(Ordering::Greater) => true,
                    Some(Ordering::Equal) => d < *bd,
                    _ => false,
                },
            };
            if better {
                best = Some((ratio, d, j, served));
            }
        }
        let Some((_, d, j, served)) = best else { break };
        visited[j] = true;
        for s in served {
            counted[s] = true;
        }
        left -= d;
        here = problem.devices[j];
        path.push(here);
    }
    Trajectory {
        start,
        waypoints: resample_path(&path, problem.steps),
    }
}

/// Exactly `n` points along the polyline, starting at its first vertex.
/// Vertices are kept when they fit; the spare points are spread over the
/// segments in proportion to their length. Longer paths are sampled at
/// equal arc length.
pub fn resample_path(path: &[Position], n: usize) -> Vec<Position> {
    let n = n.max(1);
    let Some(&first) = path.first() else {
        return Vec::new();
    };
    let total = path_length(path);
    if total <= 0.0 {
        return vec![first; n];
    }
    if path.len() <= n {
        let segs: Vec<f64> = path.windows(2).map(|w| w[0].distance(&w[1])).collect();
        let spare = n - path.len();
        let quotas: Vec<f64> = segs.iter().map(|l| spare as f64 * l / total).collect();
        let mut extra: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..segs.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - extra[a] as f64;
            let rb = quotas[b] - extra[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let short = spare - extra.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            extra[i] += 1;
        }
        let mut out = Vec::with_capacity(n);
        out.push(first);
        for (i, w) in path.windows(2).enumerate() {
            let m = extra[i] + 1;
            for j in 1..=m {
                out.push(w[0].lerp(&w[1], j as f64 / m as f64));
            }
        }
        return out;
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    let mut acc = 0.0;
    for i in 0..n {
        let target = if n > 1 { total * i as f64 / (n - 1) as f64 } else { 0.0 };
        loop {
            let l = path[seg].distance(&path[seg + 1]);
            if acc + l >= target || seg + 2 == path.len() {
                let t = if l > 0.0 { ((target - acc) / l).clamp(0.0, 1.0) } else { 0.0 };
                out.push(path[seg].lerp(&path[seg + 1], t));
                break;
            }
            acc += l;
            seg += 1;
        }
    }
    out
}
