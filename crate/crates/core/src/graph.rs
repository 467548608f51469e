//! Region adjacency graphs and the `.gra` neighbourhood file format.
//!
//! File layout: the first line holds the number of regions `S`; then each
//! region takes three lines, its label, its neighbour count, and the
//! space-separated 0-based indices of its neighbours (an empty line when the
//! count is zero).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    labels: Vec<String>,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    /// Build a graph, checking symmetry, ranges and the absence of self loops.
    pub fn new(labels: Vec<String>, neighbors: Vec<Vec<usize>>) -> Result<Self> {
        let s = labels.len();
        if neighbors.len() != s {
            return Err(Error::Adjacency(format!(
                "{} labels but {} neighbour lists",
                s,
                neighbors.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Adjacency(format!("duplicate region label {}", w[0])));
        }
        let mut neighbors = neighbors;
        for (r, list) in neighbors.iter_mut().enumerate() {
            for &n in list.iter() {
                if n >= s {
                    return Err(Error::Adjacency(format!(
                        "region {} lists neighbour index {} but there are only {} regions",
                        labels[r], n, s
                    )));
                }
                if n == r {
                    return Err(Error::Adjacency(format!(
                        "region {} is listed as its own neighbour",
                        labels[r]
                    )));
                }
            }
            list.sort_unstable();
            if list.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Adjacency(format!(
                    "region {} lists a neighbour twice",
                    labels[r]
                )));
            }
        }
        for (r, list) in neighbors.iter().enumerate() {
            for &n in list {
                if neighbors[n].binary_search(&r).is_err() {
                    return Err(Error::Adjacency(format!(
                        "asymmetric adjacency: {} lists {} but not vice versa",
                        labels[r], labels[n]
                    )));
                }
            }
        }
        Ok(AdjacencyGraph { labels, neighbors })
    }

    /// Build from an undirected edge list.
    pub fn from_edges(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); labels.len()];
        for &(a, b) in edges {
            if a >= labels.len() || b >= labels.len() {
                return Err(Error::Adjacency(format!("edge ({a}, {b}) out of range")));
            }
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
            }
            if !neighbors[b].contains(&a) {
                neighbors[b].push(a);
            }
        }
        Self::new(labels, neighbors)
    }

    /// Rook-adjacency lattice with `rows * cols` cells labelled `R0, R1, ...`
    /// in row-major order.
    pub fn lattice(rows: usize, cols: usize) -> Self {
        let labels = (0..rows * cols).map(|i| format!("R{i}")).collect();
        let mut edges = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    edges.push((i, i + 1));
                }
                if r + 1 < rows {
                    edges.push((i, i + cols));
                }
            }
        }
        Self::from_edges(labels, &edges).expect("lattice edges are valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn neighbors(&self, region: usize) -> &[usize] {
        &self.neighbors[region]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Number of connected components.
    pub fn components(&self) -> usize {
        let s = self.len();
        let mut seen = vec![false; s];
        let mut count = 0;
        for start in 0..s {
            if seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(v) = stack.pop() {
                for &n in &self.neighbors[v] {
                    if !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        count
    }

    pub fn parse_gra(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut lineno = 0usize;
        let mut next = |what: &str| -> Result<String> {
            lineno += 1;
            lines
                .next()
                .map(|l| l.trim().to_string())
                .ok_or_else(|| Error::Adjacency(format!("line {lineno}: missing {what}")))
        };
        let first = next("region count")?;
        let s: usize = first
            .parse()
            .map_err(|_| Error::Adjacency(format!("line 1: bad region count {first:?}")))?;
        let mut labels = Vec::with_capacity(s);
        let mut neighbors = Vec::with_capacity(s);
        for _ in 0..s {
            let label = next("region label")?;
            if label.is_empty() {
                return Err(Error::Adjacency("empty region label".into()));
            }
            let count_line = next("neighbour count")?;
            let count: usize = count_line.parse().map_err(|_| {
                Error::Adjacency(format!("bad neighbour count {count_line:?} for {label}"))
            })?;
            let idx_line = next("neighbour list")?;
            let idx = idx_line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<usize>().map_err(|_| {
                        Error::Adjacency(format!("bad neighbour index {tok:?} for {label}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if idx.len() != count {
                return Err(Error::Adjacency(format!(
                    "region {label} declares {count} neighbours but lists {}",
                    idx.len()
                )));
            }
            labels.push(label);
            neighbors.push(idx);
        }
        Self::new(labels, neighbors)
    }

    pub fn to_gra(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{}", self.len()).unwrap();
        for (label, list) in self.labels.iter().zip(&self.neighbors) {
            writeln!(out, "{label}").unwrap();
            writeln!(out, "{}", list.len()).unwrap();
            let idx: Vec<String> = list.iter().map(|n| n.to_string()).collect();
            writeln!(out, "{}", idx.join(" ")).unwrap();
        }
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse_gra(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(&path, self.to_gra()).map_err(|e| Error::io(&path, e))
    }
}

/// A graph together with region centroids, used by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMap {
    pub graph: AdjacencyGraph,
    pub centroids: Vec<(f64, f64)>,
}

impl SpatialMap {
    /// Rook lattice with centroids scaled linearly onto `[-extent, extent]^2`.
    pub fn lattice(rows: usize, cols: usize, extent: f64) -> Self {
        let graph = AdjacencyGraph::lattice(rows, cols);
        let scale = |k: usize, n: usize| {
            if n <= 1 {
                0.0
            } else {
                -extent + 2.0 * extent * k as f64 / (n - 1) as f64
            }
        };
        let centroids = (0..rows * cols)
            .map(|i| (scale(i % cols, cols), scale(i / cols, rows)))
            .collect();
        SpatialMap { graph, centroids }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| ((b'A' + i as u8) as char).to_string()).collect()
    }

    #[test]
    fn gra_round_trip() {
        let g = AdjacencyGraph::from_edges(labels(4), &[(0, 1), (1, 2)]).unwrap();
        let text = g.to_gra();
        assert_eq!(text, "4\nA\n1\n1\nB\n2\n0 2\nC\n1\n1\nD\n0\n\n");
        assert_eq!(AdjacencyGraph::parse_gra(&text).unwrap(), g);
    }

    #[test]
    fn rejects_asymmetric_file() {
        let text = "2\nA\n1\n1\nB\n0\n\n";
        let err = AdjacencyGraph::parse_gra(text).unwrap_err();
        assert!(err.to_string().contains("asymmetric"), "{err}");
    }

    #[test]
    fn rejects_self_loop_and_count_mismatch() {
        assert!(AdjacencyGraph::parse_gra("1\nA\n1\n0\n").is_err());
        assert!(AdjacencyGraph::parse_gra("2\nA\n2\n1\nB\n1\n0\n").is_err());
        assert!(AdjacencyGraph::parse_gra("2\nA\n1\n1\n").is_err());
    }

    #[test]
    fn lattice_components_and_degrees() {
        let g = AdjacencyGraph::lattice(3, 3);
        assert_eq!(g.components(), 1);
        let degrees: Vec<usize> = (0..9).map(|i| g.neighbors(i).len()).collect();
        assert_eq!(degrees, vec![2, 3, 2, 3, 4, 3, 2, 3, 2]);
        let two = AdjacencyGraph::from_edges(labels(4), &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(two.components(), 2);
    }

    #[test]
    fn lattice_centroids_span_extent() {
        let m = SpatialMap::lattice(8, 8, 3.0);
        assert_eq!(m.centroids[0], (-3.0, -3.0));
        assert_eq!(m.centroids[63], (3.0, 3.0));
        assert_eq!(m.centroids[7], (3.0, -3.0));
    }
}
