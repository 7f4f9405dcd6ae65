//! Metric spaces the server moves in.
//!
//! The server has unit speed, so a distance is also a travel time. Positions
//! strictly between two service points are never represented: every
//! algorithm here only makes decisions while parked at the origin.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

/// Slack allowed when validating the triangle inequality of a matrix.
pub const TRIANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("point {point} does not belong to a {space} space")]
    VariantMismatch { point: String, space: &'static str },
    #[error("node index {index} out of range for a {size}-node matrix")]
    NodeOutOfRange { index: usize, size: usize },
    #[error("coordinate is not finite: {0}")]
    NonFinite(f64),
    #[error("matrix is not square: row {row} has {len} entries, expected {expected}")]
    NotSquare { row: usize, len: usize, expected: usize },
    #[error("negative entry d({i},{j}) = {value}")]
    Negative { i: usize, j: usize, value: f64 },
    #[error("nonzero diagonal d({i},{i}) = {value}")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("asymmetric entries d({i},{j}) = {a} but d({j},{i}) = {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("triangle inequality violated on triple ({i},{j},{k}): d({i},{k}) = {direct} > d({i},{j}) + d({j},{k}) = {via}")]
    Triangle { i: usize, j: usize, k: usize, direct: f64, via: f64 },
    #[error("origin index {origin} out of range for a {size}-node matrix")]
    OriginOutOfRange { origin: usize, size: usize },
    #[error("bad matrix file: {0}")]
    Parse(String),
}

/// A position in one of the supported spaces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Point {
    Line(f64),
    Plane(f64, f64),
    Node(usize),
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Line(x) => write!(f, "{x}"),
            Point::Plane(x, y) => write!(f, "({x}, {y})"),
            Point::Node(i) => write!(f, "#{i}"),
        }
    }
}

/// A validated symmetric distance matrix with a distinguished origin node.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    size: usize,
    entries: Arc<[f64]>,
    origin: usize,
}

impl DistanceMatrix {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.size.max(1)).take(self.size).map(<[f64]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricSpace {
    Line,
    Plane,
    Explicit(DistanceMatrix),
}

impl MetricSpace {
    pub fn kind_name(&self) -> &'static str {
        match self {
            MetricSpace::Line => "line",
            MetricSpace::Plane => "plane",
            MetricSpace::Explicit(_) => "explicit",
        }
    }

    pub fn origin(&self) -> Point {
        match self {
            MetricSpace::Line => Point::Line(0.0),
            MetricSpace::Plane => Point::Plane(0.0, 0.0),
            MetricSpace::Explicit(m) => Point::Node(m.origin),
        }
    }

    /// Checks that `p` is a well-formed point of this space.
    pub fn check(&self, p: Point) -> Result<(), MetricError> {
        match (self, p) {
            (MetricSpace::Line, Point::Line(x)) => finite(x),
            (MetricSpace::Plane, Point::Plane(x, y)) => finite(x).and_then(|_| finite(y)),
            (MetricSpace::Explicit(m), Point::Node(i)) => {
                if i < m.size {
                    Ok(())
                } else {
                    Err(MetricError::NodeOutOfRange { index: i, size: m.size })
                }
            }
            (space, p) => Err(MetricError::VariantMismatch {
                point: p.to_string(),
                space: space.kind_name(),
            }),
        }
    }

    /// Shortest distance between two points of this space.
    pub fn distance(&self, p: Point, q: Point) -> Result<f64, MetricError> {
        self.check(p)?;
        self.check(q)?;
        Ok(self.dist(p, q))
    }

    /// Unchecked distance for hot loops; points must already be validated.
    #[inline]
    pub fn dist(&self, p: Point, q: Point) -> f64 {
        match (self, p, q) {
            (MetricSpace::Line, Point::Line(a), Point::Line(b)) => (a - b).abs(),
            (MetricSpace::Plane, Point::Plane(ax, ay), Point::Plane(bx, by)) => {
                (ax - bx).hypot(ay - by)
            }
            (MetricSpace::Explicit(m), Point::Node(i), Point::Node(j)) => m.get(i, j),
            _ => panic!("distance between {p} and {q} in a {} space", self.kind_name()),
        }
    }

    /// Loads an explicit space from a square CSV matrix. The origin is node 0
    /// unless overridden.
    pub fn from_csv_file(path: &Path, origin: usize) -> Result<Self, MetricError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MetricError::Parse(format!("{}: {e}", path.display())))?;
        let matrix = parse_csv_matrix(&text)?;
        validate_metric(matrix, origin)
    }
}

fn finite(x: f64) -> Result<(), MetricError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(MetricError::NonFinite(x))
    }
}

pub fn parse_csv_matrix(text: &str) -> Result<Vec<Vec<f64>>, MetricError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(lineno, line)| {
            line.split(',')
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|e| {
                        MetricError::Parse(format!("line {}: {:?}: {e}", lineno + 1, cell.trim()))
                    })
                })
                .collect()
        })
        .collect()
}

/// Validates a square matrix as a metric and wraps it as an explicit space.
///
/// Checks run in order (shape, sign, diagonal, symmetry, triangle) and the
/// error names the first offending entry or triple.
pub fn validate_metric(matrix: Vec<Vec<f64>>, origin: usize) -> Result<MetricSpace, MetricError> {
    let n = matrix.len();
    for (row, r) in matrix.iter().enumerate() {
        if r.len() != n {
            return Err(MetricError::NotSquare { row, len: r.len(), expected: n });
        }
    }
    if n > 0 && origin >= n {
        return Err(MetricError::OriginOutOfRange { origin, size: n });
    }
    for i in 0..n {
        for j in 0..n {
            let v = matrix[i][j];
            if !v.is_finite() {
                return Err(MetricError::NonFinite(v));
            }
            if v < 0.0 {
                return Err(MetricError::Negative { i, j, value: v });
            }
        }
    }
    for (i, row) in matrix.iter().enumerate() {
        if row[i] != 0.0 {
            return Err(MetricError::NonzeroDiagonal { i, value: row[i] });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if matrix[i][j] != matrix[j][i] {
                return Err(MetricError::Asymmetric { i, j, a: matrix[i][j], b: matrix[j][i] });
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let direct = matrix[i][k];
                let via = matrix[i][j] + matrix[j][k];
                if direct > via + TRIANGLE_TOL {
                    return Err(MetricError::Triangle { i, j, k, direct, via });
                }
            }
        }
    }
    let entries: Arc<[f64]> = matrix.into_iter().flatten().collect();
    Ok(MetricSpace::Explicit(DistanceMatrix { size: n, entries, origin }))
}

/// Shortest-path closure of a weighted graph given as a square matrix where
/// `f64::INFINITY` marks a missing edge.
pub fn floyd_warshall(mut m: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = m.len();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = m[i][k] + m[k][j];
                if via < m[i][j] {
                    m[i][j] = via;
                }
            }
        }
    }
    // closure can leave last-ulp asymmetry; mirror the lower triangle
    for i in 0..n {
        for j in 0..i {
            let v = m[i][j].min(m[j][i]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_node() -> MetricSpace {
        validate_metric(vec![vec![0.0, 2.0, 3.0], vec![2.0, 0.0, 2.0], vec![3.0, 2.0, 0.0]], 0)
            .unwrap()
    }

    #[test]
    fn line_and_plane_distances() {
        assert_eq!(MetricSpace::Line.distance(Point::Line(0.0), Point::Line(1.0)), Ok(1.0));
        assert_eq!(
            MetricSpace::Plane.distance(Point::Plane(0.0, 0.0), Point::Plane(3.0, 4.0)),
            Ok(5.0)
        );
    }

    #[test]
    fn explicit_lookup() {
        let s = three_node();
        assert_eq!(s.distance(Point::Node(0), Point::Node(2)), Ok(3.0));
        assert_eq!(s.origin(), Point::Node(0));
    }

    #[test]
    fn mismatch_and_range_errors() {
        let s = three_node();
        assert!(matches!(
            s.distance(Point::Line(0.0), Point::Node(1)),
            Err(MetricError::VariantMismatch { .. })
        ));
        assert_eq!(
            s.distance(Point::Node(0), Point::Node(3)),
            Err(MetricError::NodeOutOfRange { index: 3, size: 3 })
        );
        assert!(MetricSpace::Line.distance(Point::Line(f64::NAN), Point::Line(0.0)).is_err());
    }

    #[test]
    fn zero_matrix_is_a_metric() {
        assert!(validate_metric(vec![vec![0.0; 4]; 4], 0).is_ok());
    }

    #[test]
    fn triangle_violation_names_triple() {
        let m = vec![vec![0.0, 2.0, 10.0], vec![2.0, 0.0, 2.0], vec![10.0, 2.0, 0.0]];
        match validate_metric(m, 0) {
            Err(MetricError::Triangle { i, j, k, .. }) => assert_eq!((i, j, k), (0, 1, 2)),
            other => panic!("expected triangle error, got {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(
            validate_metric(vec![vec![0.0, 1.0], vec![2.0, 0.0]], 0),
            Err(MetricError::Asymmetric { .. })
        ));
        assert!(matches!(
            validate_metric(vec![vec![1.0, 1.0], vec![1.0, 0.0]], 0),
            Err(MetricError::NonzeroDiagonal { .. })
        ));
        assert!(matches!(
            validate_metric(vec![vec![0.0, -1.0], vec![-1.0, 0.0]], 0),
            Err(MetricError::Negative { .. })
        ));
        assert!(matches!(
            validate_metric(vec![vec![0.0, 1.0], vec![1.0]], 0),
            Err(MetricError::NotSquare { .. })
        ));
    }

    #[test]
    fn csv_matrix_parses() {
        let m = parse_csv_matrix("0, 1\n1, 0\n").unwrap();
        assert_eq!(m, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(parse_csv_matrix("0,x\n").is_err());
    }
}
