use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Result, TrackError, Vec3};

/// On-disk template: `points` is `M x 3` in meters, `edges` is `E x 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateFile {
    pub points: Vec<[f64; 3]>,
    pub edges: Vec<[usize; 2]>,
}

/// The tracked node graph with geodesic distances frozen at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformableTemplate {
    points: Vec<Vec3>,
    edges: Vec<(usize, usize)>,
    geodesic: DMatrix<f64>,
}

impl DeformableTemplate {
    /// Validates the graph and computes geodesics on the given configuration.
    ///
    /// Edges are normalized to `i < j`. Self-loops, out-of-range indices and
    /// duplicate edges are rejected.
    pub fn new(points: Vec<Vec3>, edges: Vec<(usize, usize)>) -> Result<Self> {
        if points.is_empty() {
            return Err(TrackError::InvalidTemplate("template has no points".into()));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(TrackError::NonFinite("template points"));
        }
        let m = points.len();
        let mut seen = BTreeSet::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for &(a, b) in &edges {
            if a >= m || b >= m {
                return Err(TrackError::InvalidTemplate(format!(
                    "edge ({a}, {b}) references a node outside [0, {m})"
                )));
            }
            if a == b {
                return Err(TrackError::InvalidTemplate(format!(
                    "self-loop on node {a}"
                )));
            }
            let e = (a.min(b), a.max(b));
            if !seen.insert(e) {
                return Err(TrackError::InvalidTemplate(format!(
                    "duplicate edge ({}, {})",
                    e.0, e.1
                )));
            }
            normalized.push(e);
        }
        let geodesic = compute_geodesics(&points, &normalized)?;
        Ok(Self {
            points,
            edges: normalized,
            geodesic,
        })
    }

    pub fn from_file(file: &TemplateFile) -> Result<Self> {
        Self::new(
            file.points
                .iter()
                .map(|p| Vec3::new(p[0], p[1], p[2]))
                .collect(),
            file.edges.iter().map(|e| (e[0], e[1])).collect(),
        )
    }

    pub fn to_file(&self) -> TemplateFile {
        TemplateFile {
            points: self.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    /// A straight chain of `num_nodes` nodes from `start` to `end`.
    pub fn rope(num_nodes: usize, start: Vec3, end: Vec3) -> Result<Self> {
        if num_nodes < 2 {
            return Err(TrackError::param(
                "num_nodes",
                "a rope needs at least 2 nodes",
            ));
        }
        let points = (0..num_nodes)
            .map(|i| start + (end - start) * (i as f64 / (num_nodes - 1) as f64))
            .collect();
        let edges = (0..num_nodes - 1).map(|i| (i, i + 1)).collect();
        Self::new(points, edges)
    }

    /// A `width x height` grid in the plane through `origin` spanned by `u`
    /// and `v`, with nodes at `origin + i*spacing*u + j*spacing*v`. Node
    /// index is `j * width + i`. Edges are the horizontal and vertical grid
    /// links.
    pub fn cloth(
        width: usize,
        height: usize,
        spacing: f64,
        origin: Vec3,
        u: Vec3,
        v: Vec3,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(TrackError::param("grid", "cloth grid must be at least 2x2"));
        }
        let mut points = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                points.push(origin + u * (i as f64 * spacing) + v * (j as f64 * spacing));
            }
        }
        let mut edges = Vec::new();
        for j in 0..height {
            for i in 0..width {
                let n = j * width + i;
                if i + 1 < width {
                    edges.push((n, n + 1));
                }
                if j + 1 < height {
                    edges.push((n, n + width));
                }
            }
        }
        Self::new(points, edges)
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn geodesic(&self) -> &DMatrix<f64> {
        &self.geodesic
    }

    pub fn num_nodes(&self) -> usize {
        self.points.len()
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Visit {
    dist: f64,
    node: usize,
}

impl Eq for Visit {}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest paths over the edge graph, weighted by the Euclidean
/// edge lengths of `points`. One Dijkstra run per source.
pub fn compute_geodesics(points: &[Vec3], edges: &[(usize, usize)]) -> Result<DMatrix<f64>> {
    let m = points.len();
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for &(a, b) in edges {
        if a >= m || b >= m {
            return Err(TrackError::InvalidTemplate(format!(
                "edge ({a}, {b}) references a node outside [0, {m})"
            )));
        }
        let len = (points[a] - points[b]).norm();
        adjacency[a].push((b, len));
        adjacency[b].push((a, len));
    }

    let mut out = DMatrix::from_element(m, m, f64::INFINITY);
    let mut heap = BinaryHeap::new();
    for source in 0..m {
        let mut dist = vec![f64::INFINITY; m];
        dist[source] = 0.0;
        heap.push(Visit {
            dist: 0.0,
            node: source,
        });
        while let Some(Visit { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(next, len) in &adjacency[node] {
                let nd = d + len;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(Visit {
                        dist: nd,
                        node: next,
                    });
                }
            }
        }
        if source == 0 {
            let orphaned: Vec<usize> = (0..m).filter(|&i| dist[i].is_infinite()).collect();
            if !orphaned.is_empty() {
                return Err(TrackError::DisconnectedGraph { orphaned });
            }
        }
        for (j, d) in dist.into_iter().enumerate() {
            out[(source, j)] = d;
        }
    }
    // Dijkstra from i and from j can differ in the last bit.
    for i in 0..m {
        for j in (i + 1)..m {
            let d = out[(i, j)].min(out[(j, i)]);
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    Ok(out)
}
