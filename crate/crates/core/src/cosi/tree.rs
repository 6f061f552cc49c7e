use std::ops::Range;

use super::CosiError;

pub const DEFAULT_BRANCHING: usize = 8;

/// Complete `b`-ary tree laid out as an array heap over roster positions.
///
/// Position 0 is the leader. The children of `i` are `b*i + 1 ..= b*i + b`
/// (clipped to the roster), and the parent of `i > 0` is `(i - 1) / b`.
/// A flat topology is the special case `b = n - 1`: the leader talks to
/// everyone directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CommTree {
    size: usize,
    branching: usize,
}

pub fn build_tree(size: usize, branching: usize) -> Result<CommTree, CosiError> {
    if size == 0 {
        return Err(CosiError::EmptyRoster);
    }
    if branching < 2 {
        return Err(CosiError::InvalidBranching(branching));
    }
    Ok(CommTree { size, branching })
}

impl CommTree {
    /// Star topology rooted at the leader.
    pub fn flat(size: usize) -> Result<Self, CosiError> {
        build_tree(size, size.saturating_sub(1).max(2))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn branching(&self) -> usize {
        self.branching
    }

    pub fn is_flat(&self) -> bool {
        self.branching + 1 >= self.size
    }

    pub fn parent(&self, pos: usize) -> Option<usize> {
        (pos > 0 && pos < self.size).then(|| (pos - 1) / self.branching)
    }

    pub fn children(&self, pos: usize) -> Range<usize> {
        let first = pos.saturating_mul(self.branching).saturating_add(1);
        let last = first.saturating_add(self.branching);
        first.min(self.size)..last.min(self.size)
    }

    pub fn is_leaf(&self, pos: usize) -> bool {
        self.children(pos).is_empty()
    }

    /// Hops from the root.
    pub fn depth_of(&self, mut pos: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parent(pos) {
            pos = p;
            d += 1;
        }
        d
    }

    /// Height of the tree: `ceil(log_b(n*(b-1) + 1)) - 1`.
    pub fn depth(&self) -> usize {
        // smallest d with (b^(d+1) - 1) / (b - 1) >= n, i.e. the first d whose
        // full tree holds the roster
        let b = self.branching as u128;
        let n = self.size as u128;
        let mut capacity = 1u128;
        let mut level = 1u128;
        let mut d = 0;
        while capacity < n {
            level *= b;
            capacity += level;
            d += 1;
        }
        d
    }

    /// Positions in the subtree rooted at `pos`, in breadth-first order.
    pub fn subtree(&self, pos: usize) -> Vec<usize> {
        let mut out = Vec::new();
        if pos >= self.size {
            return out;
        }
        let mut level = pos..pos + 1;
        while !level.is_empty() {
            out.extend(level.clone());
            let next_start = self.children(level.start).start;
            let next_end = self.children(level.end - 1).end;
            level = next_start..next_end.max(next_start);
        }
        out
    }

    /// Positions visited walking from `pos` up to the root, inclusive.
    pub fn path_to_root(&self, mut pos: usize) -> Vec<usize> {
        let mut out = vec![pos];
        while let Some(p) = self.parent(pos) {
            out.push(p);
            pos = p;
        }
        out
    }
}
