//! Offline optimum: the earliest completion time of a server that knows every
//! request in advance, respects release times and returns to the origin.
//!
//! Service follows the recurrence
//! `T_i = max(T_{i-1} + d(prev, a_i), t_i)` (plus `d(a_i, b_i)` for a ride),
//! i.e. the server may only wait at the point it is about to serve. Since the
//! right-hand side is monotone in `T_{i-1}`, keeping the earliest time per
//! (served set, last request) state is exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, ProblemKind, Request};
use crate::metric::{MetricSpace, Point};

pub const DEFAULT_DP_CAP: usize = 15;
pub const BRUTE_FORCE_CAP: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("{n} requests exceed the {method} cap of {cap}")]
    CapExceeded { n: usize, cap: usize, method: &'static str },
    #[error("line sweep optimum needs a line OLTSP instance")]
    NotLineTsp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    Dp,
    BruteForce,
    LineSweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub completion_time: f64,
    pub order: Vec<usize>,
    pub method: OptMethod,
}

/// Completion time of serving `requests` (indexed by position in the slice)
/// in the order `order` under the release-time recurrence.
pub fn replay(space: &MetricSpace, kind: ProblemKind, requests: &[Request], order: &[usize]) -> f64 {
    let mut at = space.origin();
    let mut t = 0.0f64;
    for &i in order {
        let r = &requests[i];
        t = (t + space.dist(at, r.pickup)).max(r.arrival);
        at = r.pickup;
        if kind == ProblemKind::Oldarp {
            t += space.dist(at, r.end());
            at = r.end();
        }
    }
    t + space.dist(at, space.origin())
}

fn ids(requests: &[Request], order: &[usize]) -> Vec<usize> {
    order.iter().map(|&i| requests[i].id).collect()
}

/// Subset dynamic program over (served set, last request).
pub fn opt_dp(instance: &Instance) -> Result<OptResult, OptError> {
    opt_dp_capped(instance, DEFAULT_DP_CAP)
}

pub fn opt_dp_capped(instance: &Instance, cap: usize) -> Result<OptResult, OptError> {
    let reqs = instance.requests();
    let n = reqs.len();
    if n > cap {
        return Err(OptError::CapExceeded { n, cap, method: "subset DP" });
    }
    if n == 0 {
        return Ok(OptResult { completion_time: 0.0, order: vec![], method: OptMethod::Dp });
    }
    let space = &instance.space;
    let kind = instance.kind;
    let origin = space.origin();
    let end = |r: &Request| if kind == ProblemKind::Oldarp { r.end() } else { r.pickup };
    let ride: Vec<f64> = reqs.iter().map(|r| space.dist(r.pickup, end(r))).collect();
    let leg: Vec<Vec<f64>> = reqs
        .iter()
        .map(|from| reqs.iter().map(|to| space.dist(end(from), to.pickup)).collect())
        .collect();
    let full = (1usize << n) - 1;
    let mut time = vec![f64::INFINITY; (full + 1) * n];
    let mut pred = vec![usize::MAX; (full + 1) * n];
    for (j, r) in reqs.iter().enumerate() {
        time[(1 << j) * n + j] = space.dist(origin, r.pickup).max(r.arrival) + ride[j];
    }
    for mask in 1..=full {
        for l in 0..n {
            let t = time[mask * n + l];
            if mask & (1 << l) == 0 || !t.is_finite() {
                continue;
            }
            for j in 0..n {
                if mask & (1 << j) != 0 {
                    continue;
                }
                let next = mask | 1 << j;
                let cand = (t + leg[l][j]).max(reqs[j].arrival) + ride[j];
                if cand < time[next * n + j] {
                    time[next * n + j] = cand;
                    pred[next * n + j] = l;
                }
            }
        }
    }
    let (mut last, best) = (0..n)
        .map(|l| (l, time[full * n + l] + space.dist(end(&reqs[l]), origin)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("n > 0");
    let mut order = Vec::with_capacity(n);
    let mut mask = full;
    loop {
        order.push(last);
        let p = pred[mask * n + last];
        mask &= !(1 << last);
        if p == usize::MAX {
            break;
        }
        last = p;
    }
    order.reverse();
    debug_assert!((replay(space, kind, reqs, &order) - best).abs() <= 1e-9 * best.max(1.0));
    Ok(OptResult { completion_time: best, order: ids(reqs, &order), method: OptMethod::Dp })
}

/// Full permutation enumeration; test oracle for [`opt_dp`].
pub fn opt_bruteforce(instance: &Instance) -> Result<OptResult, OptError> {
    let reqs = instance.requests();
    let n = reqs.len();
    if n > BRUTE_FORCE_CAP {
        return Err(OptError::CapExceeded { n, cap: BRUTE_FORCE_CAP, method: "brute force" });
    }
    let mut best = (f64::INFINITY, Vec::new());
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p| {
        let c = replay(&instance.space, instance.kind, reqs, p);
        if c < best.0 {
            best = (c, p.to_vec());
        }
    });
    Ok(OptResult { completion_time: best.0, order: ids(reqs, &best.1), method: OptMethod::BruteForce })
}

fn permute(p: &mut [usize], k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == p.len() {
        visit(p);
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permute(p, k + 1, visit);
        p.swap(k, i);
    }
}

/// Exact optimum for OLTSP on the line, any size.
///
/// Read backwards in time, a route ending at the origin at time `C` is a walk
/// from the origin that must first-visit each position `x` by `C - t_x`; on
/// the line such a walk only turns at new extremes, so feasibility of `C` is
/// an O(n^2) DP over (right points covered, left points covered, side). The
/// smallest feasible `C` is bracketed by bisection and the service order it
/// yields is replayed forward to get the exact completion time.
pub fn opt_line(instance: &Instance) -> Result<OptResult, OptError> {
    if !(matches!(instance.space, MetricSpace::Line) && instance.kind == ProblemKind::Oltsp) {
        return Err(OptError::NotLineTsp);
    }
    let reqs = instance.requests();
    if reqs.is_empty() {
        return Ok(OptResult { completion_time: 0.0, order: vec![], method: OptMethod::LineSweep });
    }
    let sweep = LineSweep::new(reqs);
    let max_release = reqs.iter().map(|r| r.arrival).fold(0.0, f64::max);
    let reach = sweep.right.last().map_or(0.0, |p| p.x) + sweep.left.last().map_or(0.0, |p| p.x);
    let mut lo = max_release.max(2.0 * sweep.right.last().map_or(0.0, |p| p.x)).max(2.0 * sweep.left.last().map_or(0.0, |p| p.x));
    let mut hi = max_release + 2.0 * reach;
    let path = if let Some(path) = sweep.feasible(lo) {
        path
    } else {
        for _ in 0..200 {
            let mid = lo + (hi - lo) / 2.0;
            if mid <= lo || mid >= hi {
                break;
            }
            if sweep.feasible(mid).is_some() {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        sweep.feasible(hi).expect("upper bracket stays feasible")
    };
    let mut order: Vec<usize> = path
        .iter()
        .rev()
        .flat_map(|&(right, k)| {
            let group = if right { &sweep.right[k] } else { &sweep.left[k] };
            group.members.iter().copied()
        })
        .collect();
    order.extend(sweep.at_origin.iter().copied());
    let completion_time = replay(&instance.space, instance.kind, reqs, &order);
    Ok(OptResult { completion_time, order: ids(reqs, &order), method: OptMethod::LineSweep })
}

struct Position {
    /// distance from the origin
    x: f64,
    latest_release: f64,
    members: Vec<usize>,
}

struct LineSweep {
    right: Vec<Position>,
    left: Vec<Position>,
    at_origin: Vec<usize>,
    origin_release: f64,
}

impl LineSweep {
    fn new(reqs: &[Request]) -> Self {
        let mut right: Vec<Position> = Vec::new();
        let mut left: Vec<Position> = Vec::new();
        let mut at_origin = Vec::new();
        let mut origin_release = 0.0f64;
        let mut by_coord: Vec<(f64, usize)> = reqs
            .iter()
            .enumerate()
            .map(|(i, r)| match r.pickup {
                Point::Line(x) => (x, i),
                _ => unreachable!("line instance"),
            })
            .collect();
        by_coord.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(reqs[a.1].id.cmp(&reqs[b.1].id)));
        for (x, i) in by_coord {
            let side = if x > 0.0 {
                &mut right
            } else if x < 0.0 {
                &mut left
            } else {
                at_origin.push(i);
                origin_release = origin_release.max(reqs[i].arrival);
                continue;
            };
            match side.last_mut() {
                Some(p) if p.x == x.abs() => {
                    p.latest_release = p.latest_release.max(reqs[i].arrival);
                    p.members.push(i);
                }
                _ => side.push(Position { x: x.abs(), latest_release: reqs[i].arrival, members: vec![i] }),
            }
        }
        LineSweep { right, left, at_origin, origin_release }
    }

    /// Reverse-time walk meeting every deadline `c - release`, as the list of
    /// (is_right, position index) first visits; `None` if `c` is infeasible.
    fn feasible(&self, c: f64) -> Option<Vec<(bool, usize)>> {
        if self.origin_release > c {
            return None;
        }
        let (nr, nl) = (self.right.len(), self.left.len());
        let idx = |i: usize, j: usize, s: usize| (i * (nl + 1) + j) * 2 + s;
        let mut best = vec![f64::INFINITY; (nr + 1) * (nl + 1) * 2];
        let mut from = vec![usize::MAX; best.len()];
        best[idx(0, 0, 0)] = 0.0;
        best[idx(0, 0, 1)] = 0.0;
        // signed position of a state's current end
        let pos = |i: usize, j: usize, s: usize| -> f64 {
            match s {
                0 if i > 0 => self.right[i - 1].x,
                1 if j > 0 => -self.left[j - 1].x,
                _ => 0.0,
            }
        };
        for total in 0..(nr + nl) {
            for i in 0..=nr.min(total) {
                let j = total - i;
                if j > nl {
                    continue;
                }
                for s in 0..2 {
                    let t = best[idx(i, j, s)];
                    if !t.is_finite() {
                        continue;
                    }
                    let p = pos(i, j, s);
                    if i < nr {
                        let target = &self.right[i];
                        let arrive = t + (target.x - p);
                        if arrive <= c - target.latest_release && arrive < best[idx(i + 1, j, 0)] {
                            best[idx(i + 1, j, 0)] = arrive;
                            from[idx(i + 1, j, 0)] = idx(i, j, s);
                        }
                    }
                    if j < nl {
                        let target = &self.left[j];
                        let arrive = t + (p + target.x);
                        if arrive <= c - target.latest_release && arrive < best[idx(i, j + 1, 1)] {
                            best[idx(i, j + 1, 1)] = arrive;
                            from[idx(i, j + 1, 1)] = idx(i, j, s);
                        }
                    }
                }
            }
        }
        let end = (0..2)
            .map(|s| idx(nr, nl, s))
            .filter(|&k| best[k] + pos(nr, nl, k % 2).abs() <= c)
            .min_by(|&a, &b| best[a].total_cmp(&best[b]))?;
        let mut path = Vec::with_capacity(nr + nl);
        let mut k = end;
        while from[k] != usize::MAX {
            let s = k % 2;
            let ij = k / 2;
            let (i, j) = (ij / (nl + 1), ij % (nl + 1));
            path.push(if s == 0 { (true, i - 1) } else { (false, j - 1) });
            k = from[k];
        }
        path.reverse();
        Some(path)
    }
}

/// Offline optimum with the best available exact method: subset DP up to its
/// cap, the line sweep for larger line OLTSP instances.
pub fn optimum(instance: &Instance) -> Result<OptResult, OptError> {
    match opt_dp(instance) {
        Err(e @ OptError::CapExceeded { .. }) => {
            if matches!(instance.space, MetricSpace::Line) && instance.kind == ProblemKind::Oltsp {
                opt_line(instance)
            } else {
                Err(e)
            }
        }
        other => other,
    }
}
