//! Exact k-nearest-neighbor k-d tree over `K`-dimensional points.
//!
//! Supports incremental insertion. Insertion does not rebalance; the tree is rebuilt with
//! median splits once its size doubles since the last build. Query results are ordered by
//! `(squared distance, insertion id)` and are identical to a brute-force scan with the same
//! ordering.

use std::cmp::Ordering;

use crate::scalar::Real;

#[derive(Debug, Clone)]
struct Node {
    entry: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct KdTree<T: Real, const K: usize, V> {
    points: Vec<[T; K]>,
    values: Vec<V>,
    nodes: Vec<Node>,
    root: Option<usize>,
    size_at_build: usize,
    rebuilds: usize,
}

/// One query hit. `id` is the insertion index of the entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<'a, T, V> {
    pub id: usize,
    pub value: &'a V,
    pub distance_squared: T,
}

impl<T: Real, const K: usize, V> Default for KdTree<T, K, V> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn dist2<T: Real, const K: usize>(a: &[T; K], b: &[T; K]) -> T {
    let mut acc = T::zero();
    for i in 0..K {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

fn cmp_hit<T: Real>(a: (T, usize), b: (T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1))
}

impl<T: Real, const K: usize, V> KdTree<T, K, V> {
    const MIN_REBUILD: usize = 8;

    pub fn new() -> Self {
        assert!(K > 0, "k-d tree needs at least one dimension");
        Self {
            points: Vec::new(),
            values: Vec::new(),
            nodes: Vec::new(),
            root: None,
            size_at_build: 0,
            rebuilds: 0,
        }
    }

    /// Balanced tree over the given entries, ids in iteration order.
    pub fn build(entries: impl IntoIterator<Item = ([T; K], V)>) -> Self {
        let mut tree = Self::new();
        for (p, v) in entries {
            tree.points.push(p);
            tree.values.push(v);
        }
        tree.rebuild();
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of full rebuilds performed so far.
    pub fn rebuild_count(&self) -> usize {
        self.rebuilds
    }

    pub fn point(&self, id: usize) -> &[T; K] {
        &self.points[id]
    }

    pub fn value(&self, id: usize) -> &V {
        &self.values[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[T; K], &V)> {
        self.points
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (p, v))| (i, p, v))
    }

    /// Inserts and returns the entry's id.
    pub fn insert(&mut self, point: [T; K], value: V) -> usize {
        let id = self.points.len();
        self.points.push(point);
        self.values.push(value);

        if id + 1 >= Self::MIN_REBUILD && id + 1 >= 2 * self.size_at_build {
            self.rebuild();
            return id;
        }

        let node_id = self.nodes.len();
        let mut axis = 0;
        match self.root {
            None => self.root = Some(node_id),
            Some(mut cur) => loop {
                let node = &self.nodes[cur];
                let go_left = point[node.axis] < self.points[node.entry][node.axis];
                axis = (node.axis + 1) % K;
                let slot = if go_left {
                    &mut self.nodes[cur].left
                } else {
                    &mut self.nodes[cur].right
                };
                match *slot {
                    Some(next) => cur = next,
                    None => {
                        *slot = Some(node_id);
                        break;
                    }
                }
            },
        }
        self.nodes.push(Node {
            entry: id,
            axis,
            left: None,
            right: None,
        });
        id
    }

    fn rebuild(&mut self) {
        self.nodes.clear();
        let mut ids: Vec<usize> = (0..self.points.len()).collect();
        self.root = self.build_range(&mut ids, 0);
        self.size_at_build = self.points.len();
        self.rebuilds += 1;
    }

    fn build_range(&mut self, ids: &mut [usize], depth: usize) -> Option<usize> {
        if ids.is_empty() {
            return None;
        }
        let axis = depth % K;
        let points = &self.points;
        ids.sort_unstable_by(|&a, &b| cmp_hit((points[a][axis], a), (points[b][axis], b)));
        let mid = ids.len() / 2;
        let node_id = self.nodes.len();
        self.nodes.push(Node {
            entry: ids[mid],
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = ids.split_at_mut(mid);
        let left = self.build_range(lo, depth + 1);
        let right = self.build_range(&mut rest[1..], depth + 1);
        self.nodes[node_id].left = left;
        self.nodes[node_id].right = right;
        Some(node_id)
    }

    /// The `k` nearest entries, ascending by `(distance², id)`.
    pub fn nearest(&self, query: &[T; K], k: usize) -> Vec<Neighbor<'_, T, V>> {
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        if k > 0 {
            if let Some(root) = self.root {
                self.search(root, query, k, &mut best);
            }
        }
        best.into_iter()
            .map(|(d2, id)| Neighbor {
                id,
                value: &self.values[id],
                distance_squared: d2,
            })
            .collect()
    }

    pub fn nearest_one(&self, query: &[T; K]) -> Option<Neighbor<'_, T, V>> {
        self.nearest(query, 1).into_iter().next()
    }

    fn search(&self, node_id: usize, query: &[T; K], k: usize, best: &mut Vec<(T, usize)>) {
        let node = &self.nodes[node_id];
        let p = &self.points[node.entry];
        let hit = (dist2(query, p), node.entry);
        if best.len() < k || cmp_hit(hit, best[best.len() - 1]) == Ordering::Less {
            let pos = best.partition_point(|&b| cmp_hit(b, hit) == Ordering::Less);
            best.insert(pos, hit);
            best.truncate(k);
        }
        let diff = query[node.axis] - p[node.axis];
        let (near, far) = if diff < T::zero() {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, query, k, best);
        }
        if let Some(f) = far {
            if best.len() < k || diff * diff <= best[best.len() - 1].0 {
                self.search(f, query, k, best);
            }
        }
    }

    /// Linear-scan reference with the same ordering as [`KdTree::nearest`].
    pub fn nearest_brute_force(&self, query: &[T; K], k: usize) -> Vec<Neighbor<'_, T, V>> {
        let mut all: Vec<(T, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(id, p)| (dist2(query, p), id))
            .collect();
        all.sort_by(|a, b| cmp_hit(*a, *b));
        all.truncate(k);
        all.into_iter()
            .map(|(d2, id)| Neighbor {
                id,
                value: &self.values[id],
                distance_squared: d2,
            })
            .collect()
    }
}
