//! Origin-rooted closed routes over a set of already released requests.
//!
//! A schedule ignores release times: everything it covers is already known
//! when it is built, so it is a pure metric route. Dial-a-ride schedules use
//! capacity one (each ride is completed before the next pickup).

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{ProblemKind, Request};
use crate::metric::{MetricSpace, Point};

pub const DEFAULT_EXACT_CAP: usize = 15;
pub const DEFAULT_MATCHING_CAP: usize = 16;

const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("route order is not a permutation of the request set")]
    NotPermutation,
    #[error("exact schedule over {n} requests exceeds the cap of {cap}; use the christofides solver")]
    CapExceeded { n: usize, cap: usize },
    #[error("christofides has no approximation guarantee for dial-a-ride schedules")]
    ChristofidesDarp,
    #[error("{odd} odd-degree MST vertices exceed the matching cap of {cap}")]
    MatchingCapExceeded { odd: usize, cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    Christofides,
    NearestNeighbor,
}

impl SolverKind {
    /// Worst-case factor of the route length over the optimal route.
    pub fn rho_guarantee(self) -> Option<f64> {
        match self {
            SolverKind::Exact => Some(1.0),
            SolverKind::Christofides => Some(1.5),
            SolverKind::NearestNeighbor => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Exact => "exact",
            SolverKind::Christofides => "christofides",
            SolverKind::NearestNeighbor => "nearest_neighbor",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exact" => Ok(SolverKind::Exact),
            "christofides" => Ok(SolverKind::Christofides),
            "nearest_neighbor" | "nn" => Ok(SolverKind::NearestNeighbor),
            other => Err(format!("unknown solver {other:?} (expected exact|christofides|nearest_neighbor)")),
        }
    }
}

/// A closed route from the origin through a request set and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRoute {
    /// Request ids in service order.
    pub order: Vec<usize>,
    pub length: f64,
    pub solver: SolverKind,
    pub rho_guarantee: Option<f64>,
}

impl ScheduleRoute {
    fn empty(solver: SolverKind) -> Self {
        ScheduleRoute { order: Vec::new(), length: 0.0, solver, rho_guarantee: solver.rho_guarantee() }
    }
}

/// Walk cost of serving `requests` in the id order `order`, starting and
/// ending at the origin.
pub fn route_length(
    space: &MetricSpace,
    requests: &[Request],
    order: &[usize],
    kind: ProblemKind,
) -> Result<f64, ScheduleError> {
    if order.len() != requests.len() {
        return Err(ScheduleError::NotPermutation);
    }
    let mut seen = vec![false; requests.len()];
    let mut at = space.origin();
    let mut total = 0.0;
    for id in order {
        let idx = requests.iter().position(|r| r.id == *id).ok_or(ScheduleError::NotPermutation)?;
        if std::mem::replace(&mut seen[idx], true) {
            return Err(ScheduleError::NotPermutation);
        }
        let r = &requests[idx];
        total += space.dist(at, r.pickup);
        at = r.pickup;
        if kind == ProblemKind::Oldarp {
            let b = r.dropoff.unwrap_or(r.pickup);
            total += space.dist(at, b);
            at = b;
        }
    }
    Ok(total + space.dist(at, space.origin()))
}

fn sorted_by_id(requests: &[Request]) -> Vec<Request> {
    let mut v = requests.to_vec();
    v.sort_by_key(|r| r.id);
    v
}

fn finish(
    space: &MetricSpace,
    requests: &[Request],
    order: Vec<usize>,
    kind: ProblemKind,
    solver: SolverKind,
) -> ScheduleRoute {
    let length = route_length(space, requests, &order, kind).expect("solver emits a permutation");
    ScheduleRoute { order, length, solver, rho_guarantee: solver.rho_guarantee() }
}

/// Minimum-length route by subset dynamic programming over
/// (visited set, last request). Among equal-length routes the lexicographically
/// smallest id sequence wins.
///
/// Line OLTSP sets above the cap fall back to the closed-form sweep (right
/// extreme, then left extreme), which is also optimal.
pub fn solve_exact(
    space: &MetricSpace,
    requests: &[Request],
    kind: ProblemKind,
    cap: usize,
) -> Result<ScheduleRoute, ScheduleError> {
    let m = requests.len();
    if m == 0 {
        return Ok(ScheduleRoute::empty(SolverKind::Exact));
    }
    if m > cap {
        if matches!(space, MetricSpace::Line) && kind == ProblemKind::Oltsp {
            return Ok(finish(space, requests, line_sweep_order(requests), kind, SolverKind::Exact));
        }
        return Err(ScheduleError::CapExceeded { n: m, cap });
    }
    let reqs = sorted_by_id(requests);
    let origin = space.origin();
    let ends: Vec<Point> = reqs
        .iter()
        .map(|r| if kind == ProblemKind::Oldarp { r.end() } else { r.pickup })
        .collect();
    let ride: Vec<f64> = reqs.iter().zip(&ends).map(|(r, e)| space.dist(r.pickup, *e)).collect();
    // leg[l][j]: from the end of l (l == m is the origin) to pickup j
    let leg: Vec<Vec<f64>> = ends
        .iter()
        .chain(std::iter::once(&origin))
        .map(|&from| reqs.iter().map(|r| space.dist(from, r.pickup)).collect())
        .collect();
    let home: Vec<f64> = ends.iter().map(|&e| space.dist(e, origin)).collect();

    let full = (1usize << m) - 1;
    let stride = m + 1;
    // togo[mask * stride + l]: cheapest completion having served `mask`, standing at end of l
    let mut togo = vec![f64::INFINITY; (full + 1) * stride];
    for l in 0..m {
        togo[full * stride + l] = home[l];
    }
    for mask in (0..full).rev() {
        let lasts: Box<dyn Iterator<Item = usize>> = if mask == 0 {
            Box::new(std::iter::once(m))
        } else {
            Box::new((0..m).filter(move |l| mask & (1 << l) != 0))
        };
        for l in lasts {
            let mut best = f64::INFINITY;
            for j in 0..m {
                if mask & (1 << j) == 0 {
                    let c = leg[l][j] + ride[j] + togo[(mask | 1 << j) * stride + j];
                    if c < best {
                        best = c;
                    }
                }
            }
            togo[mask * stride + l] = best;
        }
    }

    let mut order = Vec::with_capacity(m);
    let (mut mask, mut at) = (0usize, m);
    while mask != full {
        let target = togo[mask * stride + at];
        let tol = TIE_TOL * target.abs().max(1.0);
        let j = (0..m)
            .filter(|j| mask & (1 << j) == 0)
            .find(|&j| leg[at][j] + ride[j] + togo[(mask | 1 << j) * stride + j] <= target + tol)
            .expect("an optimal successor exists");
        order.push(reqs[j].id);
        mask |= 1 << j;
        at = j;
    }
    Ok(finish(space, requests, order, kind, SolverKind::Exact))
}

fn line_sweep_order(requests: &[Request]) -> Vec<usize> {
    let coord = |r: &Request| match r.pickup {
        Point::Line(x) => x,
        _ => unreachable!("line sweep on a non-line point"),
    };
    let mut right: Vec<&Request> = requests.iter().filter(|r| coord(r) >= 0.0).collect();
    let mut left: Vec<&Request> = requests.iter().filter(|r| coord(r) < 0.0).collect();
    right.sort_by(|a, b| coord(a).total_cmp(&coord(b)).then(a.id.cmp(&b.id)));
    left.sort_by(|a, b| coord(b).total_cmp(&coord(a)).then(a.id.cmp(&b.id)));
    right.into_iter().chain(left).map(|r| r.id).collect()
}

/// Christofides' heuristic on origin plus pickups: Prim MST, exact
/// minimum-weight perfect matching of the odd-degree vertices, Euler circuit,
/// shortcut from the origin.
pub fn solve_christofides(
    space: &MetricSpace,
    requests: &[Request],
    kind: ProblemKind,
    matching_cap: usize,
) -> Result<ScheduleRoute, ScheduleError> {
    if kind == ProblemKind::Oldarp {
        return Err(ScheduleError::ChristofidesDarp);
    }
    if requests.is_empty() {
        return Ok(ScheduleRoute::empty(SolverKind::Christofides));
    }
    let reqs = sorted_by_id(requests);
    let nodes: Vec<Point> = std::iter::once(space.origin()).chain(reqs.iter().map(|r| r.pickup)).collect();
    let v = nodes.len();
    let d: Vec<Vec<f64>> = nodes.iter().map(|&p| nodes.iter().map(|&q| space.dist(p, q)).collect()).collect();

    let mut edges = prim_mst(&d);
    let mut degree = vec![0usize; v];
    for &(a, b) in &edges {
        degree[a] += 1;
        degree[b] += 1;
    }
    let odd: Vec<usize> = (0..v).filter(|&i| degree[i] % 2 == 1).collect();
    if odd.len() > matching_cap {
        return Err(ScheduleError::MatchingCapExceeded { odd: odd.len(), cap: matching_cap });
    }
    edges.extend(min_weight_perfect_matching(&odd, &d));

    let circuit = euler_circuit(v, &edges, 0);
    let mut visited = vec![false; v];
    let order = circuit
        .into_iter()
        .filter(|&node| node != 0 && !std::mem::replace(&mut visited[node], true))
        .map(|node| reqs[node - 1].id)
        .collect();
    Ok(finish(space, requests, order, kind, SolverKind::Christofides))
}

fn prim_mst(d: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let v = d.len();
    let mut in_tree = vec![false; v];
    let mut best = vec![f64::INFINITY; v];
    let mut parent = vec![usize::MAX; v];
    best[0] = 0.0;
    let mut edges = Vec::with_capacity(v.saturating_sub(1));
    for _ in 0..v {
        let u = (0..v)
            .filter(|&i| !in_tree[i])
            .min_by(|&a, &b| best[a].total_cmp(&best[b]).then(a.cmp(&b)))
            .expect("vertex left");
        in_tree[u] = true;
        if parent[u] != usize::MAX {
            edges.push((parent[u], u));
        }
        for w in 0..v {
            if !in_tree[w] && d[u][w] < best[w] {
                best[w] = d[u][w];
                parent[w] = u;
            }
        }
    }
    edges
}

/// Exact minimum-weight perfect matching on an even vertex set by DP over
/// subsets: the lowest unmatched vertex is paired with every candidate.
pub fn min_weight_perfect_matching(vertices: &[usize], d: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let k = vertices.len();
    assert!(k.is_multiple_of(2), "perfect matching needs an even vertex count");
    if k == 0 {
        return Vec::new();
    }
    let full = (1usize << k) - 1;
    let mut cost = vec![f64::INFINITY; full + 1];
    let mut pick = vec![usize::MAX; full + 1];
    cost[full] = 0.0;
    for mask in (0..full).rev() {
        let i = (!mask).trailing_zeros() as usize;
        if i >= k {
            continue;
        }
        for j in (i + 1)..k {
            if mask & (1 << j) == 0 {
                let next = mask | 1 << i | 1 << j;
                let c = d[vertices[i]][vertices[j]] + cost[next];
                if c < cost[mask] {
                    cost[mask] = c;
                    pick[mask] = j;
                }
            }
        }
    }
    let mut pairs = Vec::with_capacity(k / 2);
    let mut mask = 0;
    while mask != full {
        let i = (!mask).trailing_zeros() as usize;
        let j = pick[mask];
        pairs.push((vertices[i], vertices[j]));
        mask |= 1 << i | 1 << j;
    }
    pairs
}

/// Hierholzer's algorithm on a connected multigraph with all degrees even.
fn euler_circuit(v: usize, edges: &[(usize, usize)], start: usize) -> Vec<usize> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); v];
    for (e, &(a, b)) in edges.iter().enumerate() {
        adj[a].push((b, e));
        adj[b].push((a, e));
    }
    let mut used = vec![false; edges.len()];
    let mut cursor = vec![0usize; v];
    let mut stack = vec![start];
    let mut circuit = Vec::with_capacity(edges.len() + 1);
    while let Some(&u) = stack.last() {
        while cursor[u] < adj[u].len() && used[adj[u][cursor[u]].1] {
            cursor[u] += 1;
        }
        if cursor[u] == adj[u].len() {
            circuit.push(u);
            stack.pop();
        } else {
            let (w, e) = adj[u][cursor[u]];
            used[e] = true;
            stack.push(w);
        }
    }
    circuit.reverse();
    circuit
}

/// Greedy walk to the nearest unserved pickup (ties to the smallest id).
pub fn solve_nearest_neighbor(space: &MetricSpace, requests: &[Request], kind: ProblemKind) -> ScheduleRoute {
    let mut left = sorted_by_id(requests);
    let mut at = space.origin();
    let mut order = Vec::with_capacity(left.len());
    while !left.is_empty() {
        let (idx, _) = left
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| space.dist(at, a.pickup).total_cmp(&space.dist(at, b.pickup)))
            .expect("nonempty");
        let r = left.remove(idx);
        at = if kind == ProblemKind::Oldarp { r.end() } else { r.pickup };
        order.push(r.id);
    }
    finish(space, requests, order, kind, SolverKind::NearestNeighbor)
}

/// Memoizing schedule builder bound to one space and one request universe
/// (request ids must identify requests uniquely across calls).
#[derive(Debug)]
pub struct Planner {
    space: MetricSpace,
    kind: ProblemKind,
    solver: SolverKind,
    exact_cap: usize,
    matching_cap: usize,
    cache: RefCell<HashMap<Vec<usize>, Rc<ScheduleRoute>>>,
}

impl Planner {
    pub fn new(space: MetricSpace, kind: ProblemKind, solver: SolverKind) -> Self {
        Planner {
            space,
            kind,
            solver,
            exact_cap: DEFAULT_EXACT_CAP,
            matching_cap: DEFAULT_MATCHING_CAP,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn with_caps(mut self, exact_cap: usize, matching_cap: usize) -> Self {
        self.exact_cap = exact_cap;
        self.matching_cap = matching_cap;
        self
    }

    pub fn space(&self) -> &MetricSpace {
        &self.space
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn solver(&self) -> SolverKind {
        self.solver
    }

    pub fn plan(&self, requests: &[Request]) -> Result<Rc<ScheduleRoute>, ScheduleError> {
        let mut key: Vec<usize> = requests.iter().map(|r| r.id).collect();
        key.sort_unstable();
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(Rc::clone(hit));
        }
        let route = Rc::new(match self.solver {
            SolverKind::Exact => solve_exact(&self.space, requests, self.kind, self.exact_cap)?,
            SolverKind::Christofides => {
                solve_christofides(&self.space, requests, self.kind, self.matching_cap)?
            }
            SolverKind::NearestNeighbor => solve_nearest_neighbor(&self.space, requests, self.kind),
        });
        self.cache.borrow_mut().insert(key, Rc::clone(&route));
        Ok(route)
    }
}
