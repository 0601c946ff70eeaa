//! Coarse-grained plexus topology.
//!
//! The plexus is tiled into square regions of `cell_size` micrometers. Each
//! region is a node of a `width x height` grid graph, lattice edges join
//! horizontal and vertical neighbors, and each unit cell of the grid may carry
//! one of its two diagonals. At most one diagonal per cell keeps the graph
//! planar.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub type NodeId = usize;
pub type EdgeId = usize;

/// Default linear size of one coarse-grained region, in micrometers.
pub const DEFAULT_CELL_SIZE_UM: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Lattice,
    Diagonal,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Lattice => "lattice",
            EdgeKind::Diagonal => "diagonal",
        }
    }
}

/// How node coordinates relate to the physical device footprint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtentConvention {
    /// Nodes sit on the grid points; a `w`-node side spans `(w - 1) * cell_size`.
    #[default]
    NodePitch,
    /// Each node owns a full cell; a `w`-node side spans `w * cell_size`.
    CellFootprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub index: NodeId,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub index: EdgeId,
    pub node_a: NodeId,
    pub node_b: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlexusGraph {
    width: usize,
    height: usize,
    cell_size: f64,
    convention: ExtentConvention,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    // CSR adjacency: neighbors of node n are adj[adj_start[n]..adj_start[n + 1]]
    adj_start: Vec<usize>,
    adj: Vec<(NodeId, EdgeId)>,
}

impl PlexusGraph {
    /// Builds a grid with random non-overlapping diagonals.
    ///
    /// Every unit cell independently receives a diagonal with probability
    /// `diagonal_fraction`; the orientation is then chosen uniformly. Two
    /// draws are consumed per cell regardless of the outcome, so the
    /// orientation of a given cell does not depend on the fraction.
    pub fn build_grid(
        width: usize,
        height: usize,
        cell_size: f64,
        diagonal_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::build_grid_with(width, height, cell_size, diagonal_fraction, seed, ExtentConvention::NodePitch)
    }

    pub fn build_grid_with(
        width: usize,
        height: usize,
        cell_size: f64,
        diagonal_fraction: f64,
        seed: u64,
        convention: ExtentConvention,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::invalid_arg(format!(
                "grid dimensions must be at least 2x2, got {width}x{height}"
            )));
        }
        if !(0.0..=1.0).contains(&diagonal_fraction) {
            return Err(Error::invalid_arg(format!(
                "diagonal_fraction must lie in [0, 1], got {diagonal_fraction}"
            )));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::invalid_arg(format!("cell_size must be positive, got {cell_size}")));
        }

        let offset = match convention {
            ExtentConvention::NodePitch => 0.0,
            ExtentConvention::CellFootprint => 0.5 * cell_size,
        };
        let nodes: Vec<Node> = (0..width * height)
            .map(|index| Node {
                index,
                x: (index % width) as f64 * cell_size + offset,
                y: (index / width) as f64 * cell_size + offset,
            })
            .collect();

        let id = |col: usize, row: usize| row * width + col;
        let mut pairs: Vec<(NodeId, NodeId, EdgeKind)> = Vec::new();
        for row in 0..height {
            for col in 0..width {
                if col + 1 < width {
                    pairs.push((id(col, row), id(col + 1, row), EdgeKind::Lattice));
                }
                if row + 1 < height {
                    pairs.push((id(col, row), id(col, row + 1), EdgeKind::Lattice));
                }
            }
        }
        let mut rng = rng::stream(seed, Stream::Diagonals);
        for row in 0..height - 1 {
            for col in 0..width - 1 {
                let present = rng.gen::<f64>() < diagonal_fraction;
                let rising = rng.gen_bool(0.5);
                if present {
                    let (a, b) = if rising {
                        (id(col, row), id(col + 1, row + 1))
                    } else {
                        (id(col + 1, row), id(col, row + 1))
                    };
                    pairs.push((a.min(b), a.max(b), EdgeKind::Diagonal));
                }
            }
        }
        let edges: Vec<Edge> = pairs
            .into_iter()
            .enumerate()
            .map(|(index, (node_a, node_b, kind))| Edge {
                index,
                node_a,
                node_b,
                kind,
            })
            .collect();

        let n = nodes.len();
        let mut degree = vec![0usize; n];
        for e in &edges {
            degree[e.node_a] += 1;
            degree[e.node_b] += 1;
        }
        let mut adj_start = vec![0usize; n + 1];
        for i in 0..n {
            adj_start[i + 1] = adj_start[i] + degree[i];
        }
        let mut fill = adj_start.clone();
        let mut adj = vec![(0, 0); adj_start[n]];
        for e in &edges {
            adj[fill[e.node_a]] = (e.node_b, e.index);
            fill[e.node_a] += 1;
            adj[fill[e.node_b]] = (e.node_a, e.index);
            fill[e.node_b] += 1;
        }

        Ok(PlexusGraph {
            width,
            height,
            cell_size,
            convention,
            nodes,
            edges,
            adj_start,
            adj,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn diagonal_count(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Diagonal).count()
    }

    /// Physical side lengths `(x, y)` in micrometers under the configured convention.
    pub fn extent(&self) -> (f64, f64) {
        match self.convention {
            ExtentConvention::NodePitch => (
                (self.width - 1) as f64 * self.cell_size,
                (self.height - 1) as f64 * self.cell_size,
            ),
            ExtentConvention::CellFootprint => {
                (self.width as f64 * self.cell_size, self.height as f64 * self.cell_size)
            }
        }
    }

    /// Row-major node index counted from the lower-left corner.
    pub fn node_at(&self, col: usize, row: usize) -> Result<NodeId> {
        if col >= self.width || row >= self.height {
            return Err(Error::invalid_arg(format!(
                "position ({col}, {row}) outside {}x{} grid",
                self.width, self.height
            )));
        }
        Ok(row * self.width + col)
    }

    /// Inverse of [`node_at`](Self::node_at).
    pub fn position(&self, node: NodeId) -> (usize, usize) {
        (node % self.width, node / self.width)
    }

    /// `(neighbor, edge)` pairs incident to `node`.
    pub fn neighbors(&self, node: NodeId) -> &[(NodeId, EdgeId)] {
        &self.adj[self.adj_start[node]..self.adj_start[node + 1]]
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.adj_start[node + 1] - self.adj_start[node]
    }

    /// Hop distances from `source`; `usize::MAX` marks unreachable nodes.
    pub fn hop_distances(&self, source: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(n) = queue.pop_front() {
            for &(m, _) in self.neighbors(n) {
                if dist[m] == usize::MAX {
                    dist[m] = dist[n] + 1;
                    queue.push_back(m);
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.hop_distances(0).iter().all(|&d| d != usize::MAX)
    }

    /// Plain-text dump: a node block (`index,x_um,y_um`) then an edge block
    /// (`index,node_a,node_b,kind`), each introduced by its header line.
    pub fn export_text(&self) -> String {
        let mut out = String::with_capacity(32 * (self.nodes.len() + self.edges.len()));
        out.push_str("# nodes\nindex,x_um,y_um\n");
        for n in &self.nodes {
            let _ = writeln!(out, "{},{},{}", n.index, n.x, n.y);
        }
        out.push_str("# edges\nindex,node_a,node_b,kind\n");
        for e in &self.edges {
            let _ = writeln!(out, "{},{},{},{}", e.index, e.node_a, e.node_b, e.kind.as_str());
        }
        out
    }
}
