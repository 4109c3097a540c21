//! Point-region quadtree over a 2-D layout, stored as an index arena.

use crate::matrix::Matrix;

const NONE: u32 = u32::MAX;
/// Cells narrower than this fraction of the root stop splitting and keep
/// every point they receive.
const MIN_WIDTH_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone)]
struct Node {
    center: [f64; 2],
    half_width: f64,
    mass: f64,
    com: [f64; 2],
    children: [u32; 4],
    points: Vec<usize>,
}

impl Node {
    fn new(center: [f64; 2], half_width: f64) -> Self {
        Self {
            center,
            half_width,
            mass: 0.0,
            com: [0.0; 2],
            children: [NONE; 4],
            points: Vec::new(),
        }
    }

    fn is_leaf(&self) -> bool {
        self.children[0] == NONE
    }

    fn quadrant(&self, p: [f64; 2]) -> usize {
        usize::from(p[0] > self.center[0]) + 2 * usize::from(p[1] > self.center[1])
    }
}

#[derive(Debug, Clone)]
pub struct QuadTree<'a> {
    nodes: Vec<Node>,
    layout: &'a Matrix,
    min_width: f64,
}

fn point(layout: &Matrix, i: usize) -> [f64; 2] {
    let r = layout.row(i);
    [r[0], r[1]]
}

impl<'a> QuadTree<'a> {
    pub fn build(layout: &'a Matrix) -> Self {
        let n = layout.rows();
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for i in 0..n {
            let p = point(layout, i);
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let half_width = (0.5 * (hi[0] - lo[0]).max(hi[1] - lo[1])).max(1e-12) * (1.0 + 1e-9);
        let mut tree = Self {
            nodes: vec![Node::new(center, half_width)],
            layout,
            min_width: half_width * MIN_WIDTH_FRACTION,
        };
        for i in 0..n {
            tree.insert(i);
        }
        tree
    }

    fn insert(&mut self, i: usize) {
        let p = point(self.layout, i);
        let mut node = 0;
        loop {
            let nd = &mut self.nodes[node];
            let m = nd.mass;
            nd.com = [(nd.com[0] * m + p[0]) / (m + 1.0), (nd.com[1] * m + p[1]) / (m + 1.0)];
            nd.mass = m + 1.0;
            if nd.is_leaf() {
                let coincident = nd.points.first().is_some_and(|&j| point(self.layout, j) == p);
                if nd.points.is_empty() || coincident || nd.half_width < self.min_width {
                    nd.points.push(i);
                    return;
                }
                self.split(node);
            }
            let q = self.nodes[node].quadrant(p);
            node = self.nodes[node].children[q] as usize;
        }
    }

    fn split(&mut self, node: usize) {
        let (c, h) = (self.nodes[node].center, self.nodes[node].half_width / 2.0);
        for q in 0..4 {
            let center = [
                c[0] + if q & 1 == 1 { h } else { -h },
                c[1] + if q & 2 == 2 { h } else { -h },
            ];
            self.nodes[node].children[q] = self.nodes.len() as u32;
            self.nodes.push(Node::new(center, h));
        }
        let points = std::mem::take(&mut self.nodes[node].points);
        for j in points {
            let p = point(self.layout, j);
            let child = self.nodes[node].children[self.nodes[node].quadrant(p)] as usize;
            let ch = &mut self.nodes[child];
            let m = ch.mass;
            ch.com = [(ch.com[0] * m + p[0]) / (m + 1.0), (ch.com[1] * m + p[1]) / (m + 1.0)];
            ch.mass = m + 1.0;
            ch.points.push(j);
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.nodes[0].mass
    }

    /// Repulsive force numerator `Σ_j q_ij² (y_i - y_j)` for point `i` and
    /// its share `Σ_j q_ij` of the normalization, with `q = 1 / (1 + d²)`.
    /// A cell is summarized by its center of mass when its half-width over the
    /// distance to that center is below `theta`.
    pub fn repulsion(&self, i: usize, theta: f64) -> ([f64; 2], f64) {
        let y = point(self.layout, i);
        let mut force = [0.0; 2];
        let mut z = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let nd = &self.nodes[node];
            if nd.mass == 0.0 {
                continue;
            }
            if nd.is_leaf() {
                for &j in &nd.points {
                    if j == i {
                        continue;
                    }
                    let pj = point(self.layout, j);
                    let (dx, dy) = (y[0] - pj[0], y[1] - pj[1]);
                    let q = 1.0 / (1.0 + dx * dx + dy * dy);
                    z += q;
                    force[0] += q * q * dx;
                    force[1] += q * q * dy;
                }
                continue;
            }
            let (dx, dy) = (y[0] - nd.com[0], y[1] - nd.com[1]);
            let d2 = dx * dx + dy * dy;
            if theta > 0.0 && nd.half_width < theta * d2.sqrt() {
                let q = 1.0 / (1.0 + d2);
                z += nd.mass * q;
                force[0] += nd.mass * q * q * dx;
                force[1] += nd.mass * q * q * dy;
            } else {
                stack.extend(nd.children.iter().rev().map(|&c| c as usize));
            }
        }
        (force, z)
    }
}
