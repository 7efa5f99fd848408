//! Point-region quadtree for Barnes-Hut estimates of the repulsive forces.

const MAX_DEPTH: usize = 48;

#[derive(Clone, Debug)]
struct Cell {
    com: [f64; 2],
    count: u32,
    /// Side length of the cell's square.
    width: f64,
    /// Index of the first of four children, or 0 for a leaf.
    children: u32,
    /// Range into `QuadTree::order` for leaves.
    start: u32,
    end: u32,
}

pub(crate) struct QuadTree<'a> {
    points: &'a [[f64; 2]],
    cells: Vec<Cell>,
    order: Vec<u32>,
}

/// Sum of `w = 1 / (1 + d^2)` and of `w^2 (y_i - y_j)` over `j != i`.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Repulsion {
    pub z: f64,
    pub force: [f64; 2],
}

impl<'a> QuadTree<'a> {
    pub fn build(points: &'a [[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let width = (hi[0] - lo[0]).max(hi[1] - lo[1]) * (1.0 + 1e-9) + f64::MIN_POSITIVE;
        let center = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
        let mut tree = QuadTree {
            points,
            cells: Vec::with_capacity(2 * points.len() + 1),
            order: (0..points.len() as u32).collect(),
        };
        tree.cells.push(tree.leaf(0, points.len(), width));
        tree.split(0, center, 0);
        tree
    }

    fn leaf(&self, start: usize, end: usize, width: f64) -> Cell {
        let mut com = [0.0; 2];
        for &i in &self.order[start..end] {
            let p = self.points[i as usize];
            com[0] += p[0];
            com[1] += p[1];
        }
        let count = end - start;
        if count > 0 {
            com[0] /= count as f64;
            com[1] /= count as f64;
        }
        Cell {
            com,
            count: count as u32,
            width,
            children: 0,
            start: start as u32,
            end: end as u32,
        }
    }

    fn split(&mut self, cell: usize, center: [f64; 2], depth: usize) {
        let (start, end, width) = {
            let c = &self.cells[cell];
            (c.start as usize, c.end as usize, c.width)
        };
        if end - start <= 1 || depth >= MAX_DEPTH {
            return;
        }
        let points = self.points;
        let quadrant = |i: u32| {
            let p = points[i as usize];
            (p[0] >= center[0]) as usize + 2 * (p[1] >= center[1]) as usize
        };
        let slice = &mut self.order[start..end];
        slice.sort_by_key(|&i| quadrant(i));
        let mut bounds = [start; 5];
        for (q, b) in bounds.iter_mut().enumerate().skip(1) {
            *b = start + slice.partition_point(|&i| quadrant(i) < q);
        }
        let first = self.cells.len();
        self.cells[cell].children = first as u32;
        let half = 0.5 * width;
        for q in 0..4 {
            let c = self.leaf(bounds[q], bounds[q + 1], half);
            self.cells.push(c);
        }
        for q in 0..4 {
            let offset = [if q & 1 == 1 { 0.25 } else { -0.25 }, if q & 2 == 2 { 0.25 } else { -0.25 }];
            let child_center = [center[0] + offset[0] * width, center[1] + offset[1] * width];
            self.split(first + q, child_center, depth + 1);
        }
    }

    /// Repulsion on point `i`; a cell is summarized by its center of mass when
    /// `width < theta * distance`. `stack` is caller-provided scratch.
    pub fn repulsion(&self, i: usize, theta: f64, stack: &mut Vec<u32>) -> Repulsion {
        let yi = self.points[i];
        let theta2 = theta * theta;
        let mut acc = Repulsion::default();
        let mut add = |count: f64, dx: f64, dy: f64| {
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            acc.z += count * w;
            acc.force[0] += count * w * w * dx;
            acc.force[1] += count * w * w * dy;
        };
        stack.clear();
        stack.push(0);
        while let Some(c) = stack.pop() {
            let cell = &self.cells[c as usize];
            if cell.count == 0 {
                continue;
            }
            if cell.children == 0 {
                for &j in &self.order[cell.start as usize..cell.end as usize] {
                    if j as usize != i {
                        let p = self.points[j as usize];
                        add(1.0, yi[0] - p[0], yi[1] - p[1]);
                    }
                }
                continue;
            }
            let (dx, dy) = (yi[0] - cell.com[0], yi[1] - cell.com[1]);
            if cell.width * cell.width < theta2 * (dx * dx + dy * dy) {
                add(cell.count as f64, dx, dy);
            } else {
                // Reverse push keeps the visiting order 0..4.
                for q in (0..4).rev() {
                    stack.push(cell.children + q);
                }
            }
        }
        acc
    }
}
