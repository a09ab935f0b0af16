//! Independent reference implementations used to cross-check the simulator
//! and the preprocessing.

use stressnet::sim::DamageFrame;

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

fn neighbours(r: usize, c: usize, rows: usize, cols: usize) -> impl Iterator<Item = (usize, usize)> {
    (-1i64..=1)
        .flat_map(|dr| (-1i64..=1).map(move |dc| (dr, dc)))
        .filter(|&d| d != (0, 0))
        .map(move |(dr, dc)| (r as i64 + dr, c as i64 + dc))
        .filter(move |&(rr, cc)| rr >= 0 && cc >= 0 && rr < rows as i64 && cc < cols as i64)
        .map(|(rr, cc)| (rr as usize, cc as usize))
}

/// Union-find labelling of 8-connected damaged pixels; returns the label of
/// every pixel (`None` when intact).
fn label(frame: &DamageFrame) -> Vec<Option<usize>> {
    let (rows, cols) = (frame.rows(), frame.cols());
    let mut uf = UnionFind::new(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            if !frame.get(r, c) {
                continue;
            }
            for (rr, cc) in neighbours(r, c, rows, cols) {
                if frame.get(rr, cc) {
                    uf.union(r * cols + c, rr * cols + cc);
                }
            }
        }
    }
    (0..rows * cols)
        .map(|i| frame.get(i / cols, i % cols).then(|| uf.find(i)))
        .collect()
}

/// True when one 8-connected component touches both the left and right edge.
pub fn spans(frame: &DamageFrame) -> bool {
    let cols = frame.cols();
    let labels = label(frame);
    let left: Vec<usize> = (0..frame.rows()).filter_map(|r| labels[r * cols]).collect();
    (0..frame.rows())
        .filter_map(|r| labels[r * cols + cols - 1])
        .any(|l| left.contains(&l))
}

/// Pixel count of every 8-connected component.
pub fn component_sizes(frame: &DamageFrame) -> Vec<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for l in label(frame).into_iter().flatten() {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    counts.into_values().collect()
}

/// Strict local maxima at indices `from..len-1`.
pub fn local_maxima(series: &[f64], from: usize) -> usize {
    (from.max(1)..series.len().saturating_sub(1))
        .filter(|&i| series[i] > series[i - 1] && series[i] > series[i + 1])
        .count()
}

/// Max over each `factor x factor` block, computed pixel by pixel.
pub fn block_max(frame: &DamageFrame, factor: usize) -> Vec<bool> {
    let (rows, cols) = (frame.rows() / factor, frame.cols() / factor);
    let mut out = vec![false; rows * cols];
    for r in 0..frame.rows() {
        for c in 0..frame.cols() {
            if frame.get(r, c) {
                out[(r / factor) * cols + c / factor] = true;
            }
        }
    }
    out
}
