use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{Mlp, Real};

use super::field::{require_planar, DistanceField, FieldKind, GridSpec};
use super::metric::{metric_batch, Smoothing};

/// Forward neighbor offsets stored per node: east, north, north-east, north-west.
const FORWARD: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

/// 8-connected grid graph whose edge weights are latent velocities at edge midpoints.
#[derive(Clone, Debug)]
pub struct GridGraph {
    grid: GridSpec,
    /// `weights[node][k]` is the weight of the edge to `node + FORWARD[k]`, or NaN if absent.
    weights: Vec<[f64; 4]>,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl GridGraph {
    pub fn build<T: Real>(decoder: &Mlp<T>, grid: &GridSpec, smoothing: Option<&Smoothing>) -> Result<Self> {
        grid.validate()?;
        require_planar(decoder)?;
        let (nx, ny) = (grid.nx, grid.ny);
        let (hx, hy) = (grid.dx(), grid.dy());
        // Metrics on the half-step lattice cover every edge midpoint.
        let (mx, my) = (2 * nx - 1, 2 * ny - 1);
        let half = Array2::from_shape_fn((mx * my, 2), |(i, c)| {
            let (px, py) = (i % mx, i / mx);
            T::lit(if c == 0 {
                grid.x_range[0] + px as f64 * 0.5 * hx
            } else {
                grid.y_range[0] + py as f64 * 0.5 * hy
            })
        });
        let needed: Vec<usize> = (0..mx * my).filter(|i| (i % mx) % 2 == 1 || (i / mx) % 2 == 1).collect();
        let pts = half.select(ndarray::Axis(0), &needed);
        let metrics = metric_batch(decoder, pts.view(), smoothing)?;
        let mut lookup = vec![usize::MAX; mx * my];
        for (k, &i) in needed.iter().enumerate() {
            lookup[i] = k;
        }

        let mut weights = vec![[f64::NAN; 4]; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                for (k, &(ox, oy)) in FORWARD.iter().enumerate() {
                    let (jx, jy) = (ix as isize + ox, iy as isize + oy);
                    if jx < 0 || jx >= nx as isize || jy >= ny as isize {
                        continue;
                    }
                    let hidx = (2 * iy as isize + oy) as usize * mx + (2 * ix as isize + ox) as usize;
                    let g = metrics[lookup[hidx]].matrix();
                    let d = [T::lit(ox as f64 * hx), T::lit(oy as f64 * hy)];
                    let q = d[0] * d[0] * g[[0, 0]] + T::lit(2.0) * d[0] * d[1] * g[[0, 1]] + d[1] * d[1] * g[[1, 1]];
                    let q = q.as_f64();
                    if q < -super::metric::NEGATIVE_TOLERANCE || q.is_nan() {
                        return Err(Error::BrokenMetric(format!("squared edge velocity {q}")));
                    }
                    weights[grid.index(ix, iy)][k] = q.max(0.0).sqrt();
                }
            }
        }
        Ok(Self { grid: *grid, weights })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Neighbors of `node` with their edge weights.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (ix, iy) = self.grid.coords(node);
        let (nx, ny) = (self.grid.nx as isize, self.grid.ny as isize);
        FORWARD.iter().enumerate().flat_map(move |(k, &(ox, oy))| {
            let fwd = (ix as isize + ox, iy as isize + oy);
            let bwd = (ix as isize - ox, iy as isize - oy);
            let mut out = [None, None];
            if fwd.0 >= 0 && fwd.0 < nx && fwd.1 < ny {
                let j = self.grid.index(fwd.0 as usize, fwd.1 as usize);
                out[0] = Some((j, self.weights[node][k]));
            }
            if bwd.0 >= 0 && bwd.0 < nx && bwd.1 >= 0 {
                let j = self.grid.index(bwd.0 as usize, bwd.1 as usize);
                out[1] = Some((j, self.weights[j][k]));
            }
            out.into_iter().flatten()
        })
    }

    /// Shortest-path distances from `source_node` to every node.
    pub fn distances_from_node(&self, source_node: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.grid.len()];
        let mut heap = BinaryHeap::new();
        dist[source_node] = 0.0;
        heap.push(Entry { dist: 0.0, node: source_node });
        while let Some(Entry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for (j, w) in self.neighbors(node) {
                let nd = d + w;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry { dist: nd, node: j });
                }
            }
        }
        dist
    }

    pub fn distance_field(&self, source: [f64; 2]) -> Result<DistanceField> {
        if !self.grid.contains(source) {
            return Err(Error::InvalidConfig(format!("source {source:?} lies outside the grid window")));
        }
        let values = self.distances_from_node(self.grid.nearest(source));
        DistanceField::new(self.grid, FieldKind::GraphDistance, Some(source), values)
    }

    /// Shortest-path length between the grid nodes nearest to `a` and `b`.
    pub fn distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d = self.distances_from_node(self.grid.nearest(a));
        d[self.grid.nearest(b)]
    }
}

pub fn graph_distance_field<T: Real>(
    decoder: &Mlp<T>,
    grid: &GridSpec,
    source: [f64; 2],
    smoothing: Option<&Smoothing>,
) -> Result<DistanceField> {
    GridGraph::build(decoder, grid, smoothing)?.distance_field(source)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, Layer, LayerSpec};
    use ndarray::Array1;
    use petgraph::algo::dijkstra;
    use petgraph::graph::UnGraph;
    use rand::{Rng, SeedableRng};

    fn identity() -> Mlp<f64> {
        Mlp::new(2, vec![Layer::new(Array2::eye(2), Array1::zeros(2), Activation::Linear, false).unwrap()]).unwrap()
    }

    fn octile(dx: f64, dy: f64) -> f64 {
        let (a, b) = (dx.abs().max(dy.abs()), dx.abs().min(dy.abs()));
        (a - b) + b * std::f64::consts::SQRT_2
    }

    #[test]
    fn identity_gives_octile_distance() {
        let grid = GridSpec::square(-1.0, 1.0, 21).unwrap();
        let f = graph_distance_field(&identity(), &grid, [0.0, 0.0], None).unwrap();
        let s = grid.node(grid.nearest([0.0, 0.0]));
        assert_eq!(f.values[grid.nearest([0.0, 0.0])], 0.0);
        for (i, v) in f.values.iter().enumerate() {
            let p = grid.node(i);
            assert!((v - octile(p[0] - s[0], p[1] - s[1])).abs() < 1e-12);
        }
        assert!(graph_distance_field(&identity(), &grid, [3.0, 0.0], None).is_err());
    }

    #[test]
    fn matches_independent_shortest_path() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let dec = Mlp::init(2, &[LayerSpec::dense(12, Activation::Tanh), LayerSpec::dense(5, Activation::Softplus)], &mut rng).unwrap();
        let grid = GridSpec::new([-2.0, 1.5], [-1.0, 2.0], 13, 9).unwrap();
        let graph = GridGraph::build(&dec, &grid, None).unwrap();
        let source = grid.nearest([0.2, 0.3]);
        let ours = graph.distances_from_node(source);

        // Independent graph: edge weights evaluated directly at each midpoint.
        let mut g = UnGraph::<(), f64>::new_undirected();
        let nodes: Vec<_> = (0..grid.len()).map(|_| g.add_node(())).collect();
        for i in 0..grid.len() {
            let (ix, iy) = grid.coords(i);
            for (ox, oy) in [(1isize, 0isize), (0, 1), (1, 1), (-1, 1)] {
                let (jx, jy) = (ix as isize + ox, iy as isize + oy);
                if jx < 0 || jx >= grid.nx as isize || jy >= grid.ny as isize {
                    continue;
                }
                let j = grid.index(jx as usize, jy as usize);
                let (a, b) = (grid.node(i), grid.node(j));
                let mid = ndarray::array![(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                let dir = ndarray::array![b[0] - a[0], b[1] - a[1]];
                let w = crate::riemann::velocity(&dec, mid.view(), dir.view(), None).unwrap();
                g.add_edge(nodes[i], nodes[j], w);
            }
        }
        let oracle = dijkstra(&g, nodes[source], None, |e| *e.weight());
        for i in 0..grid.len() {
            assert!((ours[i] - oracle[&nodes[i]]).abs() < 1e-10 * (1.0 + ours[i]));
        }

        // Triangle inequality on random triples via per-source runs.
        for _ in 0..20 {
            let (a, b, c) = (rng.random_range(0..grid.len()), rng.random_range(0..grid.len()), rng.random_range(0..grid.len()));
            let da = graph.distances_from_node(a);
            let db = graph.distances_from_node(b);
            assert!(da[c] <= da[b] + db[c] + 1e-12);
        }
    }
}
