/// Complete binary tree of partial sums over a power-of-two number of leaves.
///
/// Node 1 is the root; node `k` has children `2k` and `2k+1`; leaf `i` is
/// node `capacity + i`. Internal nodes are always recomputed from their
/// children, so each equals the sum of its children exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    capacity: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    /// Tree with at least `min_capacity` leaves, all zero.
    pub fn new(min_capacity: usize) -> Self {
        let capacity = min_capacity.max(1).next_power_of_two();
        SumTree { capacity, nodes: vec![0.0; 2 * capacity] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.capacity + leaf]
    }

    pub fn set(&mut self, leaf: usize, value: f64) {
        assert!(value >= 0.0 && value.is_finite(), "leaf value must be finite and non-negative, got {value}");
        let mut k = self.capacity + leaf;
        self.nodes[k] = value;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Leaf whose cumulative interval contains `u` (`0 <= u < total`).
    /// Never returns a zero-valued leaf while the total is positive.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.capacity {
            let (l, r) = (self.nodes[2 * k], self.nodes[2 * k + 1]);
            if (u < l && l > 0.0) || r <= 0.0 {
                k *= 2;
            } else {
                u -= l;
                k = 2 * k + 1;
            }
        }
        k - self.capacity
    }

    /// Checks every internal node against its children.
    pub fn is_consistent(&self) -> bool {
        (1..self.capacity).all(|k| self.nodes[k] == self.nodes[2 * k] + self.nodes[2 * k + 1])
    }

    pub fn leaves(&self) -> &[f64] {
        &self.nodes[self.capacity..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_rounds_up() {
        assert_eq!(SumTree::new(5).capacity(), 8);
        assert_eq!(SumTree::new(8).capacity(), 8);
        assert_eq!(SumTree::new(0).capacity(), 1);
    }

    #[test]
    fn find_walks_cumulative_intervals() {
        let mut t = SumTree::new(4);
        for (i, v) in [1.0, 0.0, 2.0, 3.0].into_iter().enumerate() {
            t.set(i, v);
        }
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.find(0.5), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        assert_eq!(t.find(3.0), 3);
        // Past the end (rounding) still lands on a positive leaf.
        assert_eq!(t.find(6.5), 3);
        assert!(t.is_consistent());
    }
}
