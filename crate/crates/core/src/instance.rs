//! Requests, instances, generators, the JSON file format and the adaptive
//! lower-bound adversary.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::metric::{floyd_warshall, validate_metric, MetricError, MetricSpace, Point};

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("missing field {field} at request {index}")]
    MissingField { field: &'static str, index: usize },
    #[error("bad field {field} at request {index}: {reason}")]
    BadField { field: &'static str, index: usize, reason: String },
    #[error("bad instance header: {0}")]
    Header(String),
    #[error("request {index}: dropoff presence disagrees with problem kind {kind}")]
    DropoffMismatch { index: usize, kind: ProblemKind },
    #[error("duplicate request id {0}")]
    DuplicateId(usize),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Oltsp,
    Oldarp,
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProblemKind::Oltsp => "oltsp",
            ProblemKind::Oldarp => "oldarp",
        })
    }
}

impl std::str::FromStr for ProblemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oltsp" => Ok(ProblemKind::Oltsp),
            "oldarp" => Ok(ProblemKind::Oldarp),
            other => Err(format!("unknown problem kind {other:?} (expected oltsp|oldarp)")),
        }
    }
}

/// One online demand: released at `arrival`, served at `pickup`, and for
/// dial-a-ride carried on to `dropoff`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub id: usize,
    pub arrival: f64,
    pub pickup: Point,
    pub dropoff: Option<Point>,
}

impl Request {
    /// Where the server stands once this request is fully served.
    #[inline]
    pub fn end(&self) -> Point {
        self.dropoff.unwrap_or(self.pickup)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub space: MetricSpace,
    pub kind: ProblemKind,
    requests: Vec<Request>,
}

impl Instance {
    /// Builds an instance, sorting requests by `(arrival, id)` and checking
    /// every invariant.
    pub fn new(
        space: MetricSpace,
        kind: ProblemKind,
        mut requests: Vec<Request>,
    ) -> Result<Self, InstanceError> {
        for (index, r) in requests.iter().enumerate() {
            if !(r.arrival.is_finite() && r.arrival >= 0.0) {
                return Err(InstanceError::BadField {
                    field: "arrival_time",
                    index,
                    reason: format!("{} is not a finite nonnegative time", r.arrival),
                });
            }
            space.check(r.pickup)?;
            match (kind, r.dropoff) {
                (ProblemKind::Oltsp, None) => {}
                (ProblemKind::Oldarp, Some(b)) => space.check(b)?,
                _ => return Err(InstanceError::DropoffMismatch { index, kind }),
            }
        }
        requests.sort_by(|a, b| a.arrival.total_cmp(&b.arrival).then(a.id.cmp(&b.id)));
        let mut ids: Vec<usize> = requests.iter().map(|r| r.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(InstanceError::DuplicateId(w[0]));
        }
        Ok(Instance { space, kind, requests })
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    /// Release time of the last request (`0` for an empty instance).
    pub fn last_arrival(&self) -> f64 {
        self.requests.last().map_or(0.0, |r| r.arrival)
    }

    pub fn to_json(&self) -> Value {
        let mut space = Map::new();
        space.insert("kind".into(), json!(self.space.kind_name()));
        if let MetricSpace::Explicit(m) = &self.space {
            space.insert("matrix".into(), json!(m.rows()));
            space.insert("origin".into(), json!(m.origin()));
        }
        let requests: Vec<Value> = self
            .requests
            .iter()
            .map(|r| {
                json!({
                    "id": r.id,
                    "t": r.arrival,
                    "a": point_json(r.pickup),
                    "b": r.dropoff.map_or(Value::Null, point_json),
                })
            })
            .collect();
        json!({ "problem": self.kind, "space": space, "requests": requests })
    }

    pub fn from_json(value: &Value) -> Result<Self, InstanceError> {
        let obj = value.as_object().ok_or_else(|| InstanceError::Header("top level is not an object".into()))?;
        let kind: ProblemKind = obj
            .get("problem")
            .and_then(Value::as_str)
            .ok_or_else(|| InstanceError::Header("missing field problem".into()))?
            .parse()
            .map_err(InstanceError::Header)?;
        let space_obj = obj
            .get("space")
            .and_then(Value::as_object)
            .ok_or_else(|| InstanceError::Header("missing field space".into()))?;
        let space = match space_obj.get("kind").and_then(Value::as_str) {
            Some("line") => MetricSpace::Line,
            Some("plane") => MetricSpace::Plane,
            Some("explicit") => {
                let rows = space_obj
                    .get("matrix")
                    .and_then(Value::as_array)
                    .ok_or_else(|| InstanceError::Header("explicit space without matrix".into()))?;
                let matrix = rows
                    .iter()
                    .map(|row| {
                        row.as_array()
                            .and_then(|cells| cells.iter().map(Value::as_f64).collect::<Option<Vec<_>>>())
                            .ok_or_else(|| InstanceError::Header("matrix rows must be arrays of numbers".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let origin = match space_obj.get("origin") {
                    None | Some(Value::Null) => 0,
                    Some(v) => v
                        .as_u64()
                        .ok_or_else(|| InstanceError::Header("origin must be a nonnegative integer".into()))?
                        as usize,
                };
                validate_metric(matrix, origin)?
            }
            Some(other) => return Err(InstanceError::Header(format!("unknown space kind {other:?}"))),
            None => return Err(InstanceError::Header("missing field space.kind".into())),
        };
        let items = obj
            .get("requests")
            .and_then(Value::as_array)
            .ok_or_else(|| InstanceError::Header("missing field requests".into()))?;
        let mut requests = Vec::with_capacity(items.len());
        for (index, item) in items.iter().enumerate() {
            let field = |key: &str, name: &'static str| {
                item.get(key).ok_or(InstanceError::MissingField { field: name, index })
            };
            let id = field("id", "id")?
                .as_u64()
                .ok_or_else(|| bad("id", index, "expected a nonnegative integer"))? as usize;
            let arrival = field("t", "arrival_time")?
                .as_f64()
                .ok_or_else(|| bad("arrival_time", index, "expected a number"))?;
            let pickup = parse_point(&space, field("a", "pickup")?, "pickup", index)?;
            let dropoff = match item.get("b") {
                None | Some(Value::Null) => None,
                Some(v) => Some(parse_point(&space, v, "dropoff", index)?),
            };
            requests.push(Request { id, arrival, pickup, dropoff });
        }
        Instance::new(space, kind, requests)
    }
}

fn bad(field: &'static str, index: usize, reason: &str) -> InstanceError {
    InstanceError::BadField { field, index, reason: reason.to_string() }
}

fn point_json(p: Point) -> Value {
    match p {
        Point::Line(x) => json!([x]),
        Point::Plane(x, y) => json!([x, y]),
        Point::Node(i) => json!(i),
    }
}

fn parse_point(space: &MetricSpace, v: &Value, field: &'static str, index: usize) -> Result<Point, InstanceError> {
    let coords = || -> Option<Vec<f64>> { v.as_array()?.iter().map(Value::as_f64).collect() };
    match space {
        MetricSpace::Line => match coords().as_deref() {
            Some([x]) => Ok(Point::Line(*x)),
            _ => Err(bad(field, index, "expected [x] on the line")),
        },
        MetricSpace::Plane => match coords().as_deref() {
            Some([x, y]) => Ok(Point::Plane(*x, *y)),
            _ => Err(bad(field, index, "expected [x, y] in the plane")),
        },
        MetricSpace::Explicit(_) => v
            .as_u64()
            .map(|i| Point::Node(i as usize))
            .ok_or_else(|| bad(field, index, "expected a node index")),
    }
}

pub fn write_instance(instance: &Instance, path: &Path) -> Result<(), InstanceError> {
    let mut text = serde_json::to_string_pretty(&instance.to_json())?;
    text.push('\n');
    fs::write(path, text).map_err(|source| InstanceError::Io { path: path.display().to_string(), source })
}

pub fn read_instance(path: &Path) -> Result<Instance, InstanceError> {
    let text = fs::read_to_string(path)
        .map_err(|source| InstanceError::Io { path: path.display().to_string(), source })?;
    let value: Value = serde_json::from_str(&text)?;
    Instance::from_json(&value)
}

/// Uniform random instance: arrival times i.i.d. on `[0, horizon]`, positions
/// uniform on `[-1, 1]` (line), the unit box `[0, 1]^2` (plane) or the nodes of
/// an explicit matrix. Deterministic per seed.
pub fn generate_uniform(
    seed: u64,
    n: usize,
    space: &MetricSpace,
    horizon: f64,
    kind: ProblemKind,
) -> Result<Instance, InstanceError> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(InstanceError::Param(format!("horizon must be positive, got {horizon}")));
    }
    if let MetricSpace::Explicit(m) = space {
        if m.size() == 0 && n > 0 {
            return Err(InstanceError::Param("explicit space has no nodes".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| match space {
        MetricSpace::Line => Point::Line(rng.gen_range(-1.0..=1.0)),
        MetricSpace::Plane => Point::Plane(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)),
        MetricSpace::Explicit(m) => Point::Node(rng.gen_range(0..m.size())),
    };
    let mut drafts: Vec<(f64, Point, Option<Point>)> = (0..n)
        .map(|_| {
            let t = rng.gen_range(0.0..=horizon);
            let a = point(&mut rng);
            let b = match kind {
                ProblemKind::Oltsp => None,
                ProblemKind::Oldarp => Some(point(&mut rng)),
            };
            (t, a, b)
        })
        .collect();
    drafts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let requests = drafts
        .into_iter()
        .enumerate()
        .map(|(id, (arrival, pickup, dropoff))| Request { id, arrival, pickup, dropoff })
        .collect();
    Instance::new(space.clone(), kind, requests)
}

/// Random explicit metric: shortest-path closure of a connected random graph
/// (a spanning path plus extra random edges) with weights in `[0.1, 1]`.
pub fn random_graph_metric(seed: u64, nodes: usize) -> MetricSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = vec![vec![f64::INFINITY; nodes]; nodes];
    let connect = |m: &mut Vec<Vec<f64>>, i: usize, j: usize, w: f64| {
        m[i][j] = m[i][j].min(w);
        m[j][i] = m[i][j];
    };
    for i in 1..nodes {
        let w = rng.gen_range(0.1..=1.0);
        connect(&mut m, i - 1, i, w);
    }
    for _ in 0..nodes * 2 {
        let i = rng.gen_range(0..nodes);
        let j = rng.gen_range(0..nodes);
        if i != j {
            let w = rng.gen_range(0.1..=1.0);
            connect(&mut m, i, j, w);
        }
    }
    validate_metric(floyd_warshall(m), 0).expect("shortest-path closure is a metric")
}

/// Which branch of the lower-bound construction a first-start time selects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum AdversaryCase {
    /// `0 <= t1 < 1`.
    Early,
    /// `1 <= t1 < 2` with the containing slot `h`; `analyzed` is false when
    /// `t1` falls in the upper half of the slot.
    Middle { h: usize, analyzed: bool },
    /// `t1 >= 2`.
    Late,
}

impl AdversaryCase {
    pub fn number(&self) -> u8 {
        match self {
            AdversaryCase::Early => 1,
            AdversaryCase::Middle { .. } => 2,
            AdversaryCase::Late => 3,
        }
    }

    pub fn analyzed(&self) -> bool {
        !matches!(self, AdversaryCase::Middle { analyzed: false, .. })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("adversary already finished")]
    Finished,
    #[error("first-start observation must be a finite nonnegative time, got {0}")]
    BadObservation(f64),
    #[error("k must be positive")]
    ZeroK,
}

/// Adaptive adversary on the line: streams `x_0 = (1, 0)` and
/// `x_i = (1 - i eps, 1 + i eps)` for `i = 1..=k` with `eps = 1/k`, then
/// reacts to the observed first-schedule start `t1` with one final request.
#[derive(Debug, Clone)]
pub struct AdaptiveAdversary {
    k: usize,
    epsilon: f64,
    released_so_far: Vec<Request>,
    finished: bool,
    case: Option<AdversaryCase>,
}

impl AdaptiveAdversary {
    pub fn new(k: usize) -> Result<Self, AdversaryError> {
        if k == 0 {
            return Err(AdversaryError::ZeroK);
        }
        Ok(AdaptiveAdversary {
            k,
            epsilon: 1.0 / k as f64,
            released_so_far: Vec::with_capacity(k + 2),
            finished: false,
            case: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn case(&self) -> Option<AdversaryCase> {
        self.case
    }

    pub fn released(&self) -> &[Request] {
        &self.released_so_far
    }

    fn scripted(&self, i: usize) -> Request {
        let step = i as f64 * self.epsilon;
        let (pos, t) = if i == 0 { (1.0, 0.0) } else { (1.0 - step, 1.0 + step) };
        Request { id: i, arrival: t, pickup: Point::Line(pos), dropoff: None }
    }

    /// The `k + 1` scripted requests in release order.
    pub fn scripted_requests(&self) -> Vec<Request> {
        (0..=self.k).map(|i| self.scripted(i)).collect()
    }

    /// The scripted prefix as a line OLTSP instance.
    pub fn scripted_instance(&self) -> Instance {
        Instance::new(MetricSpace::Line, ProblemKind::Oltsp, self.scripted_requests())
            .expect("scripted requests are valid")
    }

    /// Classifies a first-start time into the three branches.
    pub fn classify(&self, t1: f64) -> AdversaryCase {
        if t1 < 1.0 {
            return AdversaryCase::Early;
        }
        if t1 >= 2.0 {
            return AdversaryCase::Late;
        }
        let eps = self.epsilon;
        let h = (0..self.k)
            .rev()
            .find(|&h| 1.0 + h as f64 * eps <= t1)
            .unwrap_or(0);
        let analyzed = t1 < 1.0 + h as f64 * eps + eps / 2.0;
        AdversaryCase::Middle { h, analyzed }
    }

    /// Without an observation, returns the next scripted request (or `None`
    /// once all `k + 1` are out). With the first-start observation `t1`,
    /// returns the single reactive request and finishes.
    pub fn adversary_next(&mut self, observation: Option<f64>) -> Result<Option<Request>, AdversaryError> {
        if self.finished {
            return Err(AdversaryError::Finished);
        }
        let Some(t1) = observation else {
            let i = self.released_so_far.len();
            if i > self.k {
                return Ok(None);
            }
            let r = self.scripted(i);
            self.released_so_far.push(r);
            return Ok(Some(r));
        };
        if !(t1.is_finite() && t1 >= 0.0) {
            return Err(AdversaryError::BadObservation(t1));
        }
        let case = self.classify(t1);
        let eps = self.epsilon;
        let (pos, t) = match case {
            AdversaryCase::Early => (1.0, 1.0),
            AdversaryCase::Middle { h, .. } => {
                let off = (h as f64 + 0.5) * eps;
                (1.0 - off, 1.0 + off)
            }
            // any 0 <= delta <= 1 off the scripted grid works; eps/2 is
            AdversaryCase::Late => (1.0 - eps / 2.0, 1.0 + eps / 2.0),
        };
        let killer = Request { id: self.k + 1, arrival: t, pickup: Point::Line(pos), dropoff: None };
        self.released_so_far.push(killer);
        self.case = Some(case);
        self.finished = true;
        Ok(Some(killer))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_generation() {
        let inst = generate_uniform(1, 0, &MetricSpace::Line, 1.0, ProblemKind::Oltsp).unwrap();
        assert!(inst.is_empty());
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate_uniform(7, 5, &MetricSpace::Line, 4.0, ProblemKind::Oltsp).unwrap();
        let b = generate_uniform(7, 5, &MetricSpace::Line, 4.0, ProblemKind::Oltsp).unwrap();
        let c = generate_uniform(8, 5, &MetricSpace::Line, 4.0, ProblemKind::Oltsp).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.requests().windows(2).all(|w| w[0].arrival <= w[1].arrival));
    }

    #[test]
    fn bad_horizon_rejected() {
        assert!(generate_uniform(1, 3, &MetricSpace::Plane, 0.0, ProblemKind::Oltsp).is_err());
    }

    #[test]
    fn missing_arrival_is_named() {
        let v: Value = serde_json::from_str(
            r#"{"problem":"oltsp","space":{"kind":"line"},"requests":[{"id":0,"a":[1.0],"b":null}]}"#,
        )
        .unwrap();
        let err = Instance::from_json(&v).unwrap_err();
        assert_eq!(err.to_string(), "missing field arrival_time at request 0");
    }

    #[test]
    fn oldarp_without_dropoff_rejected() {
        let v: Value = serde_json::from_str(
            r#"{"problem":"oldarp","space":{"kind":"line"},"requests":[
                {"id":0,"t":0.0,"a":[1.0],"b":[2.0]},
                {"id":1,"t":1.0,"a":[1.0],"b":null}]}"#,
        )
        .unwrap();
        assert!(matches!(
            Instance::from_json(&v),
            Err(InstanceError::DropoffMismatch { index: 1, .. })
        ));
    }

    #[test]
    fn explicit_round_trip() {
        let space = random_graph_metric(3, 5);
        let inst = generate_uniform(2, 6, &space, 3.0, ProblemKind::Oldarp).unwrap();
        let back = Instance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, back);
    }

    #[test]
    fn adversary_streams_then_reacts() {
        let mut adv = AdaptiveAdversary::new(4).unwrap();
        let mut times = vec![];
        while let Some(r) = adv.adversary_next(None).unwrap() {
            times.push(r.arrival);
        }
        assert_eq!(times, vec![0.0, 1.25, 1.5, 1.75, 2.0]);
        let killer = adv.adversary_next(Some(0.5)).unwrap().unwrap();
        assert_eq!((killer.pickup, killer.arrival), (Point::Line(1.0), 1.0));
        assert_eq!(adv.adversary_next(Some(0.5)), Err(AdversaryError::Finished));
    }

    #[test]
    fn adversary_killers() {
        let mut adv = AdaptiveAdversary::new(4).unwrap();
        let r = adv.adversary_next(Some(2.5)).unwrap().unwrap();
        assert_eq!((r.pickup, r.arrival), (Point::Line(0.875), 1.125));
        assert_eq!(adv.case(), Some(AdversaryCase::Late));

        let mut adv = AdaptiveAdversary::new(4).unwrap();
        let r = adv.adversary_next(Some(1.3)).unwrap().unwrap();
        assert_eq!((r.pickup, r.arrival), (Point::Line(0.625), 1.375));
        assert_eq!(adv.case(), Some(AdversaryCase::Middle { h: 1, analyzed: true }));

        let adv = AdaptiveAdversary::new(4).unwrap();
        assert_eq!(adv.classify(1.4), AdversaryCase::Middle { h: 1, analyzed: false });
        assert_eq!(adv.classify(1.0), AdversaryCase::Middle { h: 0, analyzed: true });
        assert_eq!(adv.classify(1.999), AdversaryCase::Middle { h: 3, analyzed: false });
    }
}
