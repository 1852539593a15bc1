//! Dense voxel occupancy grids built fresh from each sensing cycle.

use nalgebra::Vector3;

use super::world::PointCloud;
use crate::num::{finite3, norm3, real, Real};
use crate::{Error, Result};

/// Integer cell index.
pub type Cell = Vector3<i32>;

/// Dense boolean occupancy grid over a lattice of cubic cells.
///
/// Cells are half-open cubes: a point maps to `floor((point - origin) /
/// resolution)`, so a point exactly on a boundary belongs to the upper cell.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid<R: Real> {
    origin: Vector3<R>,
    resolution: R,
    dims: [usize; 3],
    occ: Vec<bool>,
    /// Radius this grid was inflated by; zero for raw sensing grids.
    inflation_radius: R,
    /// Points discarded by [`voxelize`] for falling outside the grid.
    dropped_points: usize,
}

impl<R: Real> VoxelGrid<R> {
    pub fn new(origin: Vector3<R>, resolution: R, dims: [usize; 3]) -> Result<Self> {
        if !finite3(&origin) {
            return Err(Error::NonFinite { what: "grid origin" });
        }
        if !(resolution.is_finite() && resolution > R::zero()) {
            return Err(Error::invalid("grid.resolution", "must be finite and > 0"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("grid.dims", "every dimension must be >= 1"));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|n| n.checked_mul(dims[2]))
            .ok_or_else(|| Error::invalid("grid.dims", "cell count overflows"))?;
        Ok(VoxelGrid {
            origin,
            resolution,
            dims,
            occ: vec![false; n],
            inflation_radius: R::zero(),
            dropped_points: 0,
        })
    }

    pub fn origin(&self) -> Vector3<R> {
        self.origin
    }

    pub fn resolution(&self) -> R {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn inflation_radius(&self) -> R {
        self.inflation_radius
    }

    pub fn dropped_points(&self) -> usize {
        self.dropped_points
    }

    fn linear(&self, c: &Cell) -> Option<usize> {
        if !self.in_bounds(c) {
            return None;
        }
        let (x, y, z) = (c.x as usize, c.y as usize, c.z as usize);
        Some(x + self.dims[0] * (y + self.dims[1] * z))
    }

    pub fn in_bounds(&self, c: &Cell) -> bool {
        (0..3).all(|i| c[i] >= 0 && (c[i] as usize) < self.dims[i])
    }

    /// Occupancy of an in-bounds cell; out-of-bounds reads are `false`.
    pub fn occupied(&self, c: &Cell) -> bool {
        self.linear(c).map_or(false, |i| self.occ[i])
    }

    /// True when the cell is out of bounds or occupied (used by planners).
    pub fn blocked(&self, c: &Cell) -> bool {
        self.linear(c).map_or(true, |i| self.occ[i])
    }

    pub fn set_occupied(&mut self, c: &Cell) {
        if let Some(i) = self.linear(c) {
            self.occ[i] = true;
        }
    }

    /// Maps a world point onto the lattice (possibly out of bounds).
    pub fn world_to_cell(&self, q: &Vector3<R>) -> Cell {
        Cell::new(
            ((q.x - self.origin.x) / self.resolution)
                .floor()
                .to_i32()
                .unwrap_or(i32::MAX),
            ((q.y - self.origin.y) / self.resolution)
                .floor()
                .to_i32()
                .unwrap_or(i32::MAX),
            ((q.z - self.origin.z) / self.resolution)
                .floor()
                .to_i32()
                .unwrap_or(i32::MAX),
        )
    }

    /// World coordinates of a cell's center.
    pub fn cell_center(&self, c: &Cell) -> Vector3<R> {
        let half = real::<R>(0.5);
        Vector3::new(
            self.origin.x + (real::<R>(c.x as f64) + half) * self.resolution,
            self.origin.y + (real::<R>(c.y as f64) + half) * self.resolution,
            self.origin.z + (real::<R>(c.z as f64) + half) * self.resolution,
        )
    }

    /// Iterates occupied cells in x-fastest lattice order.
    pub fn occupied_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let (nx, ny) = (self.dims[0], self.dims[1]);
        self.occ.iter().enumerate().filter_map(move |(i, &o)| {
            o.then(|| {
                let x = i % nx;
                let y = (i / nx) % ny;
                let z = i / (nx * ny);
                Cell::new(x as i32, y as i32, z as i32)
            })
        })
    }

    pub fn count_occupied(&self) -> usize {
        self.occ.iter().filter(|&&o| o).count()
    }
}

/// Buckets a point cloud into a fresh occupancy grid. Points outside the
/// grid are dropped silently but counted in [`VoxelGrid::dropped_points`].
pub fn voxelize<R: Real>(
    cloud: &PointCloud<R>,
    origin: Vector3<R>,
    resolution: R,
    dims: [usize; 3],
) -> Result<VoxelGrid<R>> {
    let mut grid = VoxelGrid::new(origin, resolution, dims)?;
    for p in &cloud.points {
        if !finite3(p) {
            return Err(Error::NonFinite { what: "point cloud" });
        }
        let c = grid.world_to_cell(p);
        if grid.in_bounds(&c) {
            grid.set_occupied(&c);
        } else {
            grid.dropped_points += 1;
        }
    }
    Ok(grid)
}

/// Dilates occupancy: an output cell is occupied iff some input-occupied
/// cell center lies within `radius + resolution/2` of its center. Output
/// occupancy is always a superset of the input's.
pub fn inflate<R: Real>(grid: &VoxelGrid<R>, radius: R) -> Result<VoxelGrid<R>> {
    if !(radius.is_finite() && radius >= R::zero()) {
        return Err(Error::invalid("inflation radius", "must be finite and >= 0"));
    }
    // Threshold in cell units, with a sliver of slack so mathematically
    // exact boundary offsets stay included despite rounding.
    let thr = radius / grid.resolution + real::<R>(0.5) + real::<R>(1e-9);
    let thr_sq = thr * thr;
    let reach = thr.floor().to_i32().unwrap_or(0);
    let mut ball = Vec::new();
    for dz in -reach..=reach {
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let n = (dx * dx + dy * dy + dz * dz) as f64;
                if real::<R>(n) <= thr_sq {
                    ball.push(Cell::new(dx, dy, dz));
                }
            }
        }
    }
    let mut out = grid.clone();
    out.inflation_radius = radius;
    for c in grid.occupied_cells() {
        for d in &ball {
            out.set_occupied(&(c + d));
        }
    }
    Ok(out)
}

/// Returns the centers of occupied cells within `horizon_radius` of
/// `position`, nearest first (ties broken by lexicographic cell index),
/// truncated to at most `cap` points.
///
/// Collision costs are evaluated against raw sensing grids, so call this on
/// the grid before inflation.
pub fn obstacle_set<R: Real>(
    grid: &VoxelGrid<R>,
    position: &Vector3<R>,
    horizon_radius: R,
    cap: usize,
) -> Result<Vec<Vector3<R>>> {
    if !finite3(position) {
        return Err(Error::NonFinite { what: "query position" });
    }
    if !(horizon_radius.is_finite() && horizon_radius > R::zero()) {
        return Err(Error::invalid("horizon radius", "must be finite and > 0"));
    }
    if cap == 0 {
        return Err(Error::invalid("obstacle cap", "must be >= 1"));
    }
    let mut hits: Vec<(R, Cell, Vector3<R>)> = grid
        .occupied_cells()
        .filter_map(|c| {
            let center = grid.cell_center(&c);
            let d = norm3(&(center - position));
            (d <= horizon_radius).then_some((d, c, center))
        })
        .collect();
    hits.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("distances are finite")
            .then_with(|| (a.1.x, a.1.y, a.1.z).cmp(&(b.1.x, b.1.y, b.1.z)))
    });
    hits.truncate(cap);
    Ok(hits.into_iter().map(|(_, _, center)| center).collect())
}
