//! Uniform structured quadrilateral meshes.
//!
//! Nodes are numbered row-major, `id = j * (nx + 1) + i` for grid indices
//! `(i, j)`. Point location clamps to the rectangle within
//! [`BOUNDARY_TOLERANCE`] so that interface points sitting exactly on a
//! donor's edge are never rejected for roundoff.

use crate::error::{Error, Result};

/// Tolerance used when deciding whether a point lies on or inside a rectangle.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// A 2D point `(x, y)`.
pub type Point = [f64; 2];

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Result<Self> {
        if !(x0.is_finite() && x1.is_finite() && y0.is_finite() && y1.is_finite()) {
            return Err(Error::InvalidInput("rectangle bounds must be finite".into()));
        }
        if !(x0 < x1 && y0 < y1) {
            return Err(Error::InvalidInput(format!(
                "degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Rect { x0, x1, y0, y1 })
    }

    pub fn unit_square() -> Self {
        Rect {
            x0: 0.0,
            x1: 1.0,
            y0: 0.0,
            y1: 1.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Closed containment with the boundary tolerance.
    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 - BOUNDARY_TOLERANCE
            && p[0] <= self.x1 + BOUNDARY_TOLERANCE
            && p[1] >= self.y0 - BOUNDARY_TOLERANCE
            && p[1] <= self.y1 + BOUNDARY_TOLERANCE
    }

    /// Signed distance from `p` to the nearest edge; positive strictly inside.
    pub fn interior_distance(&self, p: Point) -> f64 {
        (p[0] - self.x0)
            .min(self.x1 - p[0])
            .min(p[1] - self.y0)
            .min(self.y1 - p[1])
    }

    /// True when `p` lies on the rectangle's boundary (within tolerance).
    pub fn on_boundary(&self, p: Point) -> bool {
        self.contains(p) && self.interior_distance(p) <= BOUNDARY_TOLERANCE
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains([other.x0, other.y0]) && self.contains([other.x1, other.y1])
    }
}

/// Result of locating a point: the owning cell and local coordinates in it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellLocation {
    pub cell: (usize, usize),
    pub xi: f64,
    pub eta: f64,
}

/// Uniform rectangular Q1 mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh {
    rect: Rect,
    nx: usize,
    ny: usize,
}

impl StructuredMesh {
    pub fn new(rect: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput(format!(
                "cell counts must be positive, got nx={nx}, ny={ny}"
            )));
        }
        Ok(StructuredMesh { rect, nx, ny })
    }

    pub fn rect(&self) -> &Rect {
        &self.rect
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.rect.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.rect.height() / self.ny as f64
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn grid_index(&self, id: usize) -> (usize, usize) {
        (id % (self.nx + 1), id / (self.nx + 1))
    }

    pub fn node_coords(&self, id: usize) -> Point {
        let (i, j) = self.grid_index(id);
        [
            self.rect.x0 + i as f64 * self.hx(),
            self.rect.y0 + j as f64 * self.hy(),
        ]
    }

    pub fn is_boundary_node(&self, id: usize) -> bool {
        let (i, j) = self.grid_index(id);
        i == 0 || i == self.nx || j == 0 || j == self.ny
    }

    /// Boundary node ids in increasing order.
    pub fn boundary_node_ids(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&id| self.is_boundary_node(id))
            .collect()
    }

    /// Interior node ids in increasing order.
    pub fn interior_node_ids(&self) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&id| !self.is_boundary_node(id))
            .collect()
    }

    /// Corner node ids of cell `(ci, cj)` in counterclockwise order starting
    /// at the lower-left corner.
    pub fn cell_nodes(&self, ci: usize, cj: usize) -> [usize; 4] {
        let n0 = self.node_id(ci, cj);
        [n0, n0 + 1, n0 + self.nx + 2, n0 + self.nx + 1]
    }

    pub fn locate_point(&self, p: Point) -> Result<CellLocation> {
        if !self.rect.contains(p) {
            return Err(Error::OutOfDomain { x: p[0], y: p[1] });
        }
        let (ci, xi) = locate_axis(p[0], self.rect.x0, self.hx(), self.nx);
        let (cj, eta) = locate_axis(p[1], self.rect.y0, self.hy(), self.ny);
        Ok(CellLocation {
            cell: (ci, cj),
            xi,
            eta,
        })
    }

    /// Bilinear interpolation weights of `p` against the four cell corners.
    pub fn interpolation_stencil(&self, p: Point) -> Result<([usize; 4], [f64; 4])> {
        let loc = self.locate_point(p)?;
        let nodes = self.cell_nodes(loc.cell.0, loc.cell.1);
        let (xi, eta) = (loc.xi, loc.eta);
        let weights = [
            (1.0 - xi) * (1.0 - eta),
            xi * (1.0 - eta),
            xi * eta,
            (1.0 - xi) * eta,
        ];
        Ok((nodes, weights))
    }

    pub fn interpolate(&self, nodal_field: &[f64], points: &[Point]) -> Result<Vec<f64>> {
        if nodal_field.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                context: "interpolate",
                expected: self.num_nodes(),
                got: nodal_field.len(),
            });
        }
        points
            .iter()
            .map(|&p| {
                let (nodes, w) = self.interpolation_stencil(p)?;
                Ok(nodes
                    .iter()
                    .zip(w.iter())
                    .map(|(&n, &wk)| wk * nodal_field[n])
                    .sum())
            })
            .collect()
    }
}

fn locate_axis(coord: f64, origin: f64, h: f64, n: usize) -> (usize, f64) {
    let s = ((coord - origin) / h).clamp(0.0, n as f64);
    let mut cell = s.floor() as usize;
    if cell >= n {
        cell = n - 1;
    }
    let local = (s - cell as f64).clamp(0.0, 1.0);
    (cell, local)
}
