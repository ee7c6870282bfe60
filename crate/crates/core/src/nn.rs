//! Nearest-neighbor digraph and the geometry statistics `Q`, `R`, `Q_k`.
//!
//! Ties in distance are broken toward the smallest point index, so the
//! digraph is a deterministic function of the coordinates. The grid search
//! reproduces the exhaustive search bit for bit: both compare the same
//! squared distances under the same `(distance, index)` ordering.

use serde::{Deserialize, Serialize};

use crate::error::{NnctError, Result};
use crate::exec::Execution;
use crate::points::LabeledPointSet;

/// Below this size the exhaustive search is used by [`SearchMethod::Auto`].
pub const EXHAUSTIVE_CUTOFF: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMethod {
    #[default]
    Auto,
    Exhaustive,
    Grid,
}

/// Nearest-neighbor relation of a planar point set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NnDigraph {
    nn_index: Vec<usize>,
    in_degree: Vec<usize>,
    /// `q_k[k]` is the number of points that are the nearest neighbor of
    /// exactly `k` other points.
    q_k: Vec<usize>,
    q: u64,
    r: u64,
}

impl NnDigraph {
    pub fn build(points: &LabeledPointSet) -> Result<Self> {
        Self::from_coords(points.coords(), SearchMethod::Auto, Execution::default())
    }

    pub fn build_with(points: &LabeledPointSet, method: SearchMethod, exec: Execution) -> Result<Self> {
        Self::from_coords(points.coords(), method, exec)
    }

    pub fn from_coords(coords: &[[f64; 2]], method: SearchMethod, exec: Execution) -> Result<Self> {
        let n = coords.len();
        if n < 2 {
            return Err(NnctError::InsufficientPoints { required: 2, got: n });
        }
        let nn_index = match method {
            SearchMethod::Exhaustive => exhaustive_nn(coords, exec),
            SearchMethod::Grid => grid_nn(coords, exec),
            SearchMethod::Auto if n < EXHAUSTIVE_CUTOFF => exhaustive_nn(coords, exec),
            SearchMethod::Auto => grid_nn(coords, exec),
        };
        Ok(Self::from_nn_index(nn_index))
    }

    /// Derive in-degrees, `Q_k`, `Q` and `R` from a nearest-neighbor map.
    pub fn from_nn_index(nn_index: Vec<usize>) -> Self {
        let n = nn_index.len();
        let mut in_degree = vec![0usize; n];
        for &j in &nn_index {
            in_degree[j] += 1;
        }
        let max_deg = in_degree.iter().copied().max().unwrap_or(0);
        let mut q_k = vec![0usize; max_deg + 1];
        for &d in &in_degree {
            q_k[d] += 1;
        }
        let q = q_k
            .iter()
            .enumerate()
            .map(|(k, &c)| (k as u64) * (k as u64).saturating_sub(1) * c as u64)
            .sum();
        let r = (0..n).filter(|&i| nn_index[nn_index[i]] == i).count() as u64;
        NnDigraph {
            nn_index,
            in_degree,
            q_k,
            q,
            r,
        }
    }

    pub fn len(&self) -> usize {
        self.nn_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nn_index.is_empty()
    }

    pub fn nn_index(&self) -> &[usize] {
        &self.nn_index
    }

    pub fn in_degree(&self) -> &[usize] {
        &self.in_degree
    }

    /// Histogram of in-degrees, indexed by in-degree.
    pub fn q_k(&self) -> &[usize] {
        &self.q_k
    }

    /// Number of ordered pairs of distinct points sharing a nearest neighbor,
    /// `sum_k k (k - 1) Q_k`.
    pub fn q(&self) -> u64 {
        self.q
    }

    /// Twice the number of reflexive (mutual) nearest-neighbor pairs.
    pub fn r(&self) -> u64 {
        self.r
    }
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

#[inline]
fn closer(d: f64, j: usize, best_d: f64, best_j: usize) -> bool {
    d < best_d || (d == best_d && j < best_j)
}

/// O(n^2) reference search.
pub fn exhaustive_nn(coords: &[[f64; 2]], exec: Execution) -> Vec<usize> {
    let n = coords.len();
    exec.map_indexed(n, |i| {
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, &c) in coords.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = dist2(coords[i], c);
            if closer(d, j, best.0, best.1) {
                best = (d, j);
            }
        }
        best.1
    })
}

/// Bucket-grid search with expanding Chebyshev rings.
pub fn grid_nn(coords: &[[f64; 2]], exec: Execution) -> Vec<usize> {
    let grid = Grid::new(coords);
    exec.map_indexed(coords.len(), |i| grid.nearest(coords, i))
}

struct Grid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    /// Cell `c` holds `items[start[c]..start[c + 1]]`.
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Grid {
    fn new(coords: &[[f64; 2]]) -> Self {
        let n = coords.len();
        let (x0, y0, x1, y1) = coords.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), p| (a.min(p[0]), b.min(p[1]), c.max(p[0]), d.max(p[1])),
        );
        let (w, h) = (x1 - x0, y1 - y0);
        let mut cell = (w * h / n as f64).sqrt();
        let span = w.max(h);
        if !(cell > span / n as f64) {
            cell = span / n as f64;
        }
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        let dim = |extent: f64| ((extent / cell).floor() as usize + 1).clamp(1, 4 * n + 1);
        let (nx, ny) = (dim(w), dim(h));
        let mut grid = Grid {
            x0,
            y0,
            cell,
            nx,
            ny,
            start: vec![0; nx * ny + 1],
            items: vec![0; n],
        };
        let cells: Vec<usize> = coords.iter().map(|&p| grid.cell_of(p)).collect();
        for &c in &cells {
            grid.start[c + 1] += 1;
        }
        for c in 0..nx * ny {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        for (i, &c) in cells.iter().enumerate() {
            grid.items[fill[c]] = i;
            fill[c] += 1;
        }
        grid
    }

    fn cell_xy(&self, p: [f64; 2]) -> (usize, usize) {
        let cx = (((p[0] - self.x0) / self.cell).floor().max(0.0) as usize).min(self.nx - 1);
        let cy = (((p[1] - self.y0) / self.cell).floor().max(0.0) as usize).min(self.ny - 1);
        (cx, cy)
    }

    fn cell_of(&self, p: [f64; 2]) -> usize {
        let (cx, cy) = self.cell_xy(p);
        cy * self.nx + cx
    }

    fn scan(&self, coords: &[[f64; 2]], i: usize, cx: usize, cy: usize, best: &mut (f64, usize)) {
        let c = cy * self.nx + cx;
        for &j in &self.items[self.start[c]..self.start[c + 1]] {
            if j == i {
                continue;
            }
            let d = dist2(coords[i], coords[j]);
            if closer(d, j, best.0, best.1) {
                *best = (d, j);
            }
        }
    }

    fn nearest(&self, coords: &[[f64; 2]], i: usize) -> usize {
        let (cx, cy) = self.cell_xy(coords[i]);
        let (cx, cy) = (cx as isize, cy as isize);
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        let max_ring = nx.max(ny);
        let mut best = (f64::INFINITY, usize::MAX);
        for ring in 0..=max_ring {
            for dy in -ring..=ring {
                let y = cy + dy;
                if y < 0 || y >= ny {
                    continue;
                }
                let step = if dy.abs() == ring { 1 } else { 2 * ring.max(1) };
                let mut dx = -ring;
                while dx <= ring {
                    let x = cx + dx;
                    if x >= 0 && x < nx {
                        self.scan(coords, i, x as usize, y as usize, &mut best);
                    }
                    dx += step;
                }
            }
            // Points outside rings 0..=ring are at least `ring` whole cells
            // away. Strict inequality keeps equidistant candidates in play.
            let bound = ring as f64 * self.cell * (1.0 - 1e-9);
            if best.1 != usize::MAX && best.0.sqrt() < bound {
                break;
            }
        }
        best.1
    }
}

/// Mean and population standard deviation of nearest-neighbor distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnDistanceSummary {
    pub mean: f64,
    pub sd: f64,
}

pub fn nn_distances(points: &LabeledPointSet, graph: &NnDigraph) -> Result<NnDistanceSummary> {
    if graph.len() != points.len() {
        return Err(NnctError::Consistency(format!(
            "graph has {} points, point set has {}",
            graph.len(),
            points.len()
        )));
    }
    let coords = points.coords();
    let d: Vec<f64> = graph
        .nn_index()
        .iter()
        .enumerate()
        .map(|(i, &j)| dist2(coords[i], coords[j]).sqrt())
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok(NnDistanceSummary { mean, sd: var.sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(xs: &[f64]) -> Vec<[f64; 2]> {
        xs.iter().map(|&x| [x, 0.0]).collect()
    }

    #[test]
    fn symmetric_pair() {
        let g = NnDigraph::from_coords(&line(&[0.0, 1.0]), SearchMethod::Auto, Execution::Sequential).unwrap();
        assert_eq!(g.nn_index(), &[1, 0]);
        assert_eq!((g.q(), g.r()), (0, 2));
    }

    #[test]
    fn collinear_three_points() {
        for method in [SearchMethod::Exhaustive, SearchMethod::Grid] {
            let g = NnDigraph::from_coords(&line(&[0.0, 1.0, 3.0]), method, Execution::Sequential).unwrap();
            assert_eq!(g.nn_index(), &[1, 0, 1]);
            assert_eq!(g.in_degree(), &[1, 2, 0]);
            assert_eq!(g.q_k()[2], 1);
            assert_eq!(g.q(), 2);
            assert_eq!(g.r(), 2);
        }
    }

    #[test]
    fn ties_break_to_smallest_index() {
        // Point 1 is equidistant from 0 and 2.
        let g = NnDigraph::from_coords(&line(&[0.0, 1.0, 2.0]), SearchMethod::Grid, Execution::Sequential).unwrap();
        assert_eq!(g.nn_index(), &[1, 0, 1]);
        // Unit square corners: every point has two neighbors at distance 1.
        let sq = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let a = NnDigraph::from_coords(&sq, SearchMethod::Exhaustive, Execution::Sequential).unwrap();
        let b = NnDigraph::from_coords(&sq, SearchMethod::Grid, Execution::Sequential).unwrap();
        assert_eq!(a.nn_index(), &[1, 0, 0, 1]);
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            NnDigraph::from_coords(&line(&[0.0]), SearchMethod::Auto, Execution::Sequential),
            Err(NnctError::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn distance_summary() {
        let p = LabeledPointSet::from_label_strings(line(&[0.0, 1.0]), &["a", "b"]).unwrap();
        let g = NnDigraph::build(&p).unwrap();
        let s = nn_distances(&p, &g).unwrap();
        assert_eq!((s.mean, s.sd), (1.0, 0.0));

        let p = LabeledPointSet::from_label_strings(line(&[0.0, 1.0, 3.0]), &["a", "a", "b"]).unwrap();
        let g = NnDigraph::build(&p).unwrap();
        let s = nn_distances(&p, &g).unwrap();
        assert!((s.mean - 4.0 / 3.0).abs() < 1e-15);
        // Population sd of (1, 1, 2).
        assert!((s.sd - (2.0f64 / 9.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_layouts_use_grid_safely() {
        let horizontal: Vec<[f64; 2]> = (0..200).map(|i| [i as f64 * 0.37, 5.0]).collect();
        let a = exhaustive_nn(&horizontal, Execution::Sequential);
        let b = grid_nn(&horizontal, Execution::Sequential);
        assert_eq!(a, b);
        let lattice: Vec<[f64; 2]> = (0..400).map(|i| [(i % 20) as f64, (i / 20) as f64]).collect();
        assert_eq!(
            exhaustive_nn(&lattice, Execution::Sequential),
            grid_nn(&lattice, Execution::Sequential)
        );
    }

    fn coords_strategy() -> impl Strategy<Value = Vec<[f64; 2]>> {
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 2..150)
            .prop_map(|v| v.into_iter().map(|(x, y)| [x, y]).collect())
    }

    proptest! {
        #[test]
        fn grid_matches_exhaustive(coords in coords_strategy()) {
            let a = NnDigraph::from_coords(&coords, SearchMethod::Exhaustive, Execution::Sequential).unwrap();
            let b = NnDigraph::from_coords(&coords, SearchMethod::Grid, Execution::Parallel).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn graph_invariants(coords in coords_strategy()) {
            let g = NnDigraph::from_coords(&coords, SearchMethod::Auto, Execution::Sequential).unwrap();
            let n = coords.len();
            prop_assert!(g.nn_index().iter().enumerate().all(|(i, &j)| i != j));
            prop_assert_eq!(g.in_degree().iter().sum::<usize>(), n);
            prop_assert_eq!(g.r() % 2, 0);
            prop_assert!(g.r() as usize <= n);
            // Planar, generic positions: in-degree never exceeds 6.
            prop_assert!(g.q_k().len() <= 7);
            let q6: u64 = 2 * g.q_k().iter().enumerate().skip(2)
                .map(|(k, &c)| (k * (k - 1) / 2) as u64 * c as u64).sum::<u64>();
            prop_assert_eq!(g.q(), q6);
        }

        #[test]
        fn scale_and_translation_invariant(coords in coords_strategy(), s in 0.01f64..100.0, tx in -50.0f64..50.0, ty in -50.0f64..50.0) {
            let g = NnDigraph::from_coords(&coords, SearchMethod::Auto, Execution::Sequential).unwrap();
            // Power-of-two scale with zero translation is exact; the general
            // affine map is exact on the relation whenever no near-ties exist.
            let moved: Vec<[f64; 2]> = coords.iter().map(|p| [p[0] * 4.0, p[1] * 4.0]).collect();
            let h = NnDigraph::from_coords(&moved, SearchMethod::Auto, Execution::Sequential).unwrap();
            prop_assert_eq!(&g, &h);
            let moved: Vec<[f64; 2]> = coords.iter().map(|p| [p[0] * s + tx, p[1] * s + ty]).collect();
            let h = NnDigraph::from_coords(&moved, SearchMethod::Auto, Execution::Sequential).unwrap();
            let near_tie = (0..coords.len()).any(|i| {
                let mut d: Vec<f64> = (0..coords.len()).filter(|&j| j != i).map(|j| dist2(coords[i], coords[j])).collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d.len() > 1 && (d[1] - d[0]) <= 1e-9 * d[1]
            });
            if !near_tie {
                prop_assert_eq!(g.nn_index(), h.nn_index());
                prop_assert_eq!((g.q(), g.r()), (h.q(), h.r()));
            }
        }
    }
}
