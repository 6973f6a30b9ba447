//! Fixed-radius neighbour search on a uniform hash grid.

use crate::sim::Point;

/// Points bucketed into square cells of side at least `reach`, so every pair
/// within `reach` lies in the same or an adjacent cell.
pub(crate) struct PairIndex<'a> {
    points: &'a [Point],
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    members: Vec<usize>,
}

const MAX_CELLS_PER_AXIS: usize = 2048;

impl<'a> PairIndex<'a> {
    pub fn new(points: &'a [Point], reach: f64) -> Self {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            y0 = y0.min(p.y);
            y1 = y1.max(p.y);
        }
        if points.is_empty() {
            (x0, x1, y0, y1) = (0.0, 0.0, 0.0, 0.0);
        }
        let span = (x1 - x0).max(y1 - y0);
        let cell = reach.max(span / MAX_CELLS_PER_AXIS as f64).max(f64::MIN_POSITIVE);
        let nx = ((x1 - x0) / cell) as usize + 1;
        let ny = ((y1 - y0) / cell) as usize + 1;

        let mut cell_of = Vec::with_capacity(points.len());
        let mut counts = vec![0usize; nx * ny + 1];
        for p in points {
            let c = Self::cell_index(p, x0, y0, cell, nx, ny);
            counts[c + 1] += 1;
            cell_of.push(c);
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut members = vec![0usize; points.len()];
        for (i, &c) in cell_of.iter().enumerate() {
            members[fill[c]] = i;
            fill[c] += 1;
        }
        Self { points, x0, y0, cell, nx, ny, starts: counts, members }
    }

    fn cell_index(p: &Point, x0: f64, y0: f64, cell: f64, nx: usize, ny: usize) -> usize {
        let cx = (((p.x - x0) / cell) as usize).min(nx - 1);
        let cy = (((p.y - y0) / cell) as usize).min(ny - 1);
        cy * nx + cx
    }

    /// Calls `f(j, d)` for every `j != i` with `d = |x_j - x_i| <= reach`.
    /// The order of `j` is unspecified.
    pub fn for_each_neighbor(&self, i: usize, reach: f64, mut f: impl FnMut(usize, f64)) {
        let p = self.points[i];
        let c = Self::cell_index(&p, self.x0, self.y0, self.cell, self.nx, self.ny);
        let (cx, cy) = (c % self.nx, c / self.nx);
        for yy in cy.saturating_sub(1)..=(cy + 1).min(self.ny - 1) {
            for xx in cx.saturating_sub(1)..=(cx + 1).min(self.nx - 1) {
                let cell = yy * self.nx + xx;
                for &j in &self.members[self.starts[cell]..self.starts[cell + 1]] {
                    if j == i {
                        continue;
                    }
                    let d = distance(&p, &self.points[j]);
                    if d <= reach {
                        f(j, d);
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn distance(a: &Point, b: &Point) -> f64 {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    (dx * dx + dy * dy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededStream;

    #[test]
    fn finds_exactly_the_brute_force_neighbours() {
        let mut rng = SeededStream::new(3, 0).rng();
        let pts: Vec<Point> = (0..300).map(|_| Point::new(rng.uniform() * 5.0, rng.uniform() * 2.0)).collect();
        for reach in [0.01, 0.2, 0.7, 10.0] {
            let index = PairIndex::new(&pts, reach);
            for i in (0..pts.len()).step_by(7) {
                let mut got = Vec::new();
                index.for_each_neighbor(i, reach, |j, _| got.push(j));
                got.sort_unstable();
                let want: Vec<usize> =
                    (0..pts.len()).filter(|&j| j != i && distance(&pts[i], &pts[j]) <= reach).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn coincident_points() {
        let pts = vec![Point::new(1.0, 1.0); 3];
        let index = PairIndex::new(&pts, 0.1);
        let mut n = 0;
        index.for_each_neighbor(0, 0.1, |_, d| {
            assert_eq!(d, 0.0);
            n += 1
        });
        assert_eq!(n, 2);
    }
}
