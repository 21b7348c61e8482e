//! Two-pass connected-component labelling of non-edge pixels.

use crate::error::{Error, Result};
use crate::types::Grid;

use super::canny::EdgeMap;

/// Component id per pixel; edge pixels carry [`EDGE`].
pub type SuperpixelLabels = Grid<i32>;

pub const EDGE: i32 = -1;

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new() -> Self {
        DisjointSet { parent: Vec::new() }
    }

    fn make(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Labels 4- or 8-connected regions of non-edge pixels.
///
/// Ids are dense and numbered in raster order of each component's first pixel.
pub fn connected_components(edges: &EdgeMap, connectivity: u8) -> Result<SuperpixelLabels> {
    let back: &[(isize, isize)] = match connectivity {
        4 => &[(-1, 0), (0, -1)],
        8 => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
        c => return Err(Error::Invalid(format!("connectivity must be 4 or 8, got {c}"))),
    };
    let (h, w) = (edges.height(), edges.width());
    let is_edge = edges.as_slice();
    let mut provisional = vec![usize::MAX; h * w];
    let mut sets = DisjointSet::new();
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            if is_edge[p] {
                continue;
            }
            let mut label = usize::MAX;
            for &(di, dj) in back {
                let (y, x) = (i as isize + di, j as isize + dj);
                if y < 0 || x < 0 || x as usize >= w {
                    continue;
                }
                let q = y as usize * w + x as usize;
                if is_edge[q] {
                    continue;
                }
                if label == usize::MAX {
                    label = provisional[q];
                } else {
                    sets.union(label, provisional[q]);
                }
            }
            provisional[p] = if label == usize::MAX { sets.make() } else { label };
        }
    }
    let mut dense = vec![-1i32; sets.parent.len()];
    let mut next = 0;
    let mut out = vec![EDGE; h * w];
    for p in 0..h * w {
        if is_edge[p] {
            continue;
        }
        let root = sets.find(provisional[p]);
        if dense[root] < 0 {
            dense[root] = next;
            next += 1;
        }
        out[p] = dense[root];
    }
    Grid::from_vec(h, w, out)
}
