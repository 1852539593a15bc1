//! 26-connected grid pathfinding.
//!
//! [`plan_jps`] runs jump point search: A* over canonical move orderings
//! where straight and diagonal rays are "jumped" through open space and only
//! cells that are adjacent to obstacles or walls (or that shield a
//! subordinate jump) become search nodes. Diagonal moves never cut corners:
//! a move is legal only if every axis projection of it is free.
//!
//! [`plan_astar`] is a deliberately plain 26-neighbor A* over the same move
//! legality. It serves as the correctness oracle for JPS and as a fallback
//! planner; [`plan_dijkstra`] is the same search with the heuristic off.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::Vector3;

use crate::mapping::{Cell, VoxelGrid};
use crate::num::{real, Real};
use crate::{Error, Result};

/// Grid path between two cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPath<R: Real> {
    /// Full step sequence, start to goal; consecutive cells are 26-neighbors.
    pub cells: Vec<Cell>,
    /// Sum of Euclidean center-to-center step lengths, in meters.
    pub cost: R,
    /// Search nodes expanded (effort diagnostic).
    pub expanded: usize,
}

/// Maps a cell path to the world coordinates of its cell centers.
pub fn to_world<R: Real>(path: &CellPath<R>, grid: &VoxelGrid<R>) -> Vec<Vector3<R>> {
    path.cells.iter().map(|c| grid.cell_center(c)).collect()
}

const DIR_NONE: u8 = 26;
/// Tie tolerance in cell units for treating two arrival costs as equal.
const TIE_EPS: f64 = 1e-9;

struct Geometry {
    /// All 26 unit moves in lexicographic component order.
    dirs: [Cell; 26],
    /// Step length per direction, in cell units.
    len: [f64; 26],
    /// Cells a move sweeps past: every proper nonempty axis projection.
    /// All of them must be free for the move to be legal.
    cuts: Vec<Vec<Cell>>,
    /// Canonical continuations of a direction: itself plus every projection
    /// dropping one or more of its axes (same signs).
    canon: Vec<Vec<u8>>,
    /// `canon` without the direction itself (sub-probes during jumps).
    canon_strict: Vec<Vec<u8>>,
}

fn axis_projections(d: &Cell) -> Vec<Cell> {
    let axes: Vec<usize> = (0..3).filter(|&i| d[i] != 0).collect();
    let mut subs = Vec::new();
    for mask in 1u32..(1 << axes.len()) {
        let mut s = Cell::zeros();
        for (bit, &axis) in axes.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                s[axis] = d[axis];
            }
        }
        subs.push(s);
    }
    subs
}

impl Geometry {
    fn new() -> Self {
        let mut dirs = [Cell::zeros(); 26];
        let mut k = 0;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if dx == 0 && dy == 0 && dz == 0 {
                        continue;
                    }
                    dirs[k] = Cell::new(dx, dy, dz);
                    k += 1;
                }
            }
        }
        let index_of = |c: &Cell| dirs.iter().position(|d| d == c).unwrap() as u8;
        let mut len = [0.0; 26];
        let mut cuts = Vec::with_capacity(26);
        let mut canon = Vec::with_capacity(26);
        let mut canon_strict = Vec::with_capacity(26);
        for d in &dirs {
            let axes = (0..3).filter(|&i| d[i] != 0).count();
            len[index_of(d) as usize] = (axes as f64).sqrt();
            let subs = axis_projections(d);
            let full = index_of(d);
            let mut c: Vec<u8> = subs.iter().map(|s| index_of(s)).collect();
            c.sort_unstable();
            let strict: Vec<u8> = c.iter().copied().filter(|&i| i != full).collect();
            cuts.push(subs.into_iter().filter(|s| s != d).collect());
            canon.push(c);
            canon_strict.push(strict);
        }
        Geometry {
            dirs,
            len,
            cuts,
            canon,
            canon_strict,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    f: f64,
    g: f64,
    cell: Cell,
    dir: u8,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Reversed so the max-heap pops the smallest key; ties broken by g,
    // then lexicographic cell, then direction, for determinism.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| {
                (other.cell.x, other.cell.y, other.cell.z).cmp(&(
                    self.cell.x,
                    self.cell.y,
                    self.cell.z,
                ))
            })
            .then_with(|| other.dir.cmp(&self.dir))
    }
}

/// Exact free-space distance for 26-connected moves, in cell units.
fn heuristic(a: &Cell, b: &Cell) -> f64 {
    let mut d = [
        (a.x - b.x).abs() as f64,
        (a.y - b.y).abs() as f64,
        (a.z - b.z).abs() as f64,
    ];
    d.sort_by(f64::total_cmp);
    let (lo, mid, hi) = (d[0], d[1], d[2]);
    (hi - mid) + (mid - lo) * std::f64::consts::SQRT_2 + lo * 3.0f64.sqrt()
}

struct Searcher<'a, R: Real> {
    grid: &'a VoxelGrid<R>,
    geo: Geometry,
    goal: Cell,
    dims: [usize; 3],
}

impl<'a, R: Real> Searcher<'a, R> {
    fn idx(&self, c: &Cell) -> usize {
        c.x as usize + self.dims[0] * (c.y as usize + self.dims[1] * c.z as usize)
    }

    fn move_ok(&self, from: &Cell, di: u8) -> bool {
        let d = &self.geo.dirs[di as usize];
        if self.grid.blocked(&(from + d)) {
            return false;
        }
        self.geo.cuts[di as usize]
            .iter()
            .all(|cut| !self.grid.blocked(&(from + cut)))
    }

    /// A cell is dirty when anything in its 26-neighborhood is blocked
    /// (including the grid boundary). Dirty cells are expanded with the full
    /// move set; clean cells only continue their canonical ordering.
    fn dirty(&self, c: &Cell) -> bool {
        self.geo.dirs.iter().any(|d| self.grid.blocked(&(c + d)))
    }

    /// Slides from `from` along direction `di` through clean cells. Returns
    /// the first cell that must become a search node (goal, dirty cell, or a
    /// clean cell from which a subordinate probe reaches one) and the number
    /// of steps taken.
    fn jump(&self, from: &Cell, di: u8) -> Option<(Cell, usize)> {
        let d = self.geo.dirs[di as usize];
        let mut cur = *from;
        let mut steps = 0;
        loop {
            if !self.move_ok(&cur, di) {
                return None;
            }
            cur += d;
            steps += 1;
            if cur == self.goal || self.dirty(&cur) {
                return Some((cur, steps));
            }
            for &sub in &self.geo.canon_strict[di as usize] {
                if self.jump(&cur, sub).is_some() {
                    return Some((cur, steps));
                }
            }
        }
    }

    /// Expanded cells lying on the edge of free space, for no-path reports.
    fn frontier(&self, touched: impl Iterator<Item = usize>) -> Vec<[i32; 3]> {
        let (nx, ny) = (self.dims[0], self.dims[1]);
        let mut cells: Vec<[i32; 3]> = touched
            .map(|i| {
                Cell::new(
                    (i % nx) as i32,
                    ((i / nx) % ny) as i32,
                    (i / (nx * ny)) as i32,
                )
            })
            .filter(|c| self.geo.dirs.iter().any(|d| self.grid.blocked(&(c + d))))
            .map(|c| [c.x, c.y, c.z])
            .collect();
        cells.sort_unstable();
        cells
    }
}

fn check_endpoints<R: Real>(grid: &VoxelGrid<R>, start: &Cell, goal: &Cell) -> Result<()> {
    for (which, c) in [("start", start), ("goal", goal)] {
        if grid.blocked(c) {
            return Err(Error::BadEndpoint {
                which,
                cell: [c.x, c.y, c.z],
            });
        }
    }
    Ok(())
}

fn trivial_path<R: Real>(start: Cell) -> CellPath<R> {
    CellPath {
        cells: vec![start],
        cost: R::zero(),
        expanded: 0,
    }
}

fn path_from_cells<R: Real>(grid: &VoxelGrid<R>, cells: Vec<Cell>, expanded: usize) -> CellPath<R> {
    let mut cost = R::zero();
    for w in cells.windows(2) {
        let d = w[1] - w[0];
        let axes = (d.x * d.x + d.y * d.y + d.z * d.z) as f64;
        cost += real::<R>(axes.sqrt()) * grid.resolution();
    }
    CellPath {
        cells,
        cost,
        expanded,
    }
}

/// Jump point search from `start` to `goal` over the (inflated) grid.
///
/// Returns the cheapest 26-connected path with jump segments expanded back
/// into unit steps. Errors: [`Error::BadEndpoint`] for blocked endpoints,
/// [`Error::NoPath`] (carrying the searched frontier) when unreachable.
pub fn plan_jps<R: Real>(grid: &VoxelGrid<R>, start: Cell, goal: Cell) -> Result<CellPath<R>> {
    check_endpoints(grid, &start, &goal)?;
    if start == goal {
        return Ok(trivial_path(start));
    }
    let s = Searcher {
        grid,
        geo: Geometry::new(),
        goal,
        dims: grid.dims(),
    };
    let n = s.dims[0] * s.dims[1] * s.dims[2];
    let mut best_g = vec![f64::INFINITY; n];
    let mut done_dirs = vec![0u32; n];
    let mut parent: HashMap<(usize, u8), (usize, u8)> = HashMap::new();
    let mut heap = BinaryHeap::new();
    let start_idx = s.idx(&start);
    best_g[start_idx] = 0.0;
    heap.push(Node {
        f: heuristic(&start, &goal),
        g: 0.0,
        cell: start,
        dir: DIR_NONE,
    });
    let mut expanded = 0usize;
    const ALL_DIRS: u32 = (1 << 27) - 1;

    while let Some(node) = heap.pop() {
        let idx = s.idx(&node.cell);
        if node.g > best_g[idx] + TIE_EPS {
            continue; // Stale entry.
        }
        if done_dirs[idx] & (1 << node.dir) != 0 {
            continue; // This arrival direction already expanded.
        }
        expanded += 1;
        if node.cell == goal {
            // Walk parent states back to the start, expanding each jump
            // segment into unit steps.
            let mut rev = vec![node.cell];
            let mut state = (idx, node.dir);
            while state.1 != DIR_NONE {
                let (pidx, pdir) = parent[&state];
                let d = s.geo.dirs[state.1 as usize];
                let here = *rev.last().unwrap();
                let from = Cell::new(
                    (pidx % s.dims[0]) as i32,
                    ((pidx / s.dims[0]) % s.dims[1]) as i32,
                    (pidx / (s.dims[0] * s.dims[1])) as i32,
                );
                let mut c = here;
                while c != from {
                    c -= d;
                    rev.push(c);
                }
                state = (pidx, pdir);
            }
            rev.reverse();
            return Ok(path_from_cells(grid, rev, expanded));
        }
        let full = node.dir == DIR_NONE || s.dirty(&node.cell);
        if full {
            // Successors are independent of the arrival direction here.
            done_dirs[idx] = ALL_DIRS;
        } else {
            done_dirs[idx] |= 1 << node.dir;
        }
        let dir_list: &[u8] = if full {
            const ALL: [u8; 26] = [
                0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22,
                23, 24, 25,
            ];
            &ALL
        } else {
            &s.geo.canon[node.dir as usize]
        };
        for &di in dir_list {
            if let Some((jcell, steps)) = s.jump(&node.cell, di) {
                let ng = node.g + steps as f64 * s.geo.len[di as usize];
                let jidx = s.idx(&jcell);
                if ng < best_g[jidx] - TIE_EPS {
                    best_g[jidx] = ng;
                    done_dirs[jidx] = 0; // Strictly better arrival: reopen.
                } else if ng < best_g[jidx] {
                    best_g[jidx] = ng;
                }
                if ng <= best_g[jidx] + TIE_EPS && done_dirs[jidx] & (1 << di) == 0 {
                    parent.insert((jidx, di), (idx, node.dir));
                    heap.push(Node {
                        f: ng + heuristic(&jcell, &goal),
                        g: ng,
                        cell: jcell,
                        dir: di,
                    });
                }
            }
        }
    }
    Err(Error::NoPath {
        frontier: s.frontier(
            (0..n).filter(|&i| done_dirs[i] != 0),
        ),
    })
}

/// Plain 26-neighbor A* over the same move legality as [`plan_jps`];
/// correctness oracle and fallback planner.
pub fn plan_astar<R: Real>(grid: &VoxelGrid<R>, start: Cell, goal: Cell) -> Result<CellPath<R>> {
    search_plain(grid, start, goal, true)
}

/// [`plan_astar`] with the heuristic disabled (uniform-cost search).
pub fn plan_dijkstra<R: Real>(grid: &VoxelGrid<R>, start: Cell, goal: Cell) -> Result<CellPath<R>> {
    search_plain(grid, start, goal, false)
}

fn search_plain<R: Real>(
    grid: &VoxelGrid<R>,
    start: Cell,
    goal: Cell,
    use_heuristic: bool,
) -> Result<CellPath<R>> {
    check_endpoints(grid, &start, &goal)?;
    if start == goal {
        return Ok(trivial_path(start));
    }
    let s = Searcher {
        grid,
        geo: Geometry::new(),
        goal,
        dims: grid.dims(),
    };
    let h = |c: &Cell| {
        if use_heuristic {
            heuristic(c, &goal)
        } else {
            0.0
        }
    };
    let n = s.dims[0] * s.dims[1] * s.dims[2];
    let mut best_g = vec![f64::INFINITY; n];
    let mut closed = vec![false; n];
    let mut parent: Vec<u32> = vec![u32::MAX; n];
    let mut heap = BinaryHeap::new();
    let start_idx = s.idx(&start);
    best_g[start_idx] = 0.0;
    heap.push(Node {
        f: h(&start),
        g: 0.0,
        cell: start,
        dir: DIR_NONE,
    });
    let mut expanded = 0usize;

    while let Some(node) = heap.pop() {
        let idx = s.idx(&node.cell);
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        expanded += 1;
        if node.cell == goal {
            let mut rev = vec![node.cell];
            let mut i = idx;
            while parent[i] != u32::MAX {
                i = parent[i] as usize;
                rev.push(Cell::new(
                    (i % s.dims[0]) as i32,
                    ((i / s.dims[0]) % s.dims[1]) as i32,
                    (i / (s.dims[0] * s.dims[1])) as i32,
                ));
            }
            rev.reverse();
            return Ok(path_from_cells(grid, rev, expanded));
        }
        for di in 0..26u8 {
            if !s.move_ok(&node.cell, di) {
                continue;
            }
            let nb = node.cell + s.geo.dirs[di as usize];
            let nidx = s.idx(&nb);
            if closed[nidx] {
                continue;
            }
            let ng = node.g + s.geo.len[di as usize];
            if ng < best_g[nidx] {
                best_g[nidx] = ng;
                parent[nidx] = idx as u32;
                heap.push(Node {
                    f: ng + h(&nb),
                    g: ng,
                    cell: nb,
                    dir: di,
                });
            }
        }
    }
    Err(Error::NoPath {
        frontier: s.frontier((0..n).filter(|&i| closed[i])),
    })
}
