//! Fixed-length node subsets, the common currency of samples, pools and
//! partitions. The text form is one character per node, node 0 first.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeSet(FixedBitSet);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BitstringError {
    #[error("invalid character {ch:?} at position {pos}")]
    BadChar { pos: usize, ch: char },
    #[error("bitstring has length {found}, expected {expected}")]
    Length { expected: usize, found: usize },
}

impl NodeSet {
    pub fn empty(n: usize) -> Self {
        NodeSet(FixedBitSet::with_capacity(n))
    }

    pub fn full(n: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(n);
        bits.insert_range(..);
        NodeSet(bits)
    }

    pub fn singleton(n: usize, node: usize) -> Self {
        let mut s = Self::empty(n);
        s.insert(node);
        s
    }

    pub fn from_nodes(n: usize, nodes: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::empty(n);
        for v in nodes {
            s.insert(v);
        }
        s
    }

    /// Builds a set from the low `n` bits of `mask`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        Self::from_nodes(n, (0..n.min(64)).filter(|&i| mask >> i & 1 == 1))
    }

    /// Number of nodes in the universe, not the number selected.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_clear()
    }

    pub fn weight(&self) -> usize {
        self.0.count_ones(..)
    }

    pub fn contains(&self, node: usize) -> bool {
        self.0.contains(node)
    }

    pub fn insert(&mut self, node: usize) {
        self.0.insert(node);
    }

    pub fn remove(&mut self, node: usize) {
        self.0.set(node, false);
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.ones()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.minimum()
    }

    pub fn is_disjoint(&self, other: &NodeSet) -> bool {
        self.0.is_disjoint(&other.0)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn intersection_count(&self, other: &NodeSet) -> usize {
        self.0.intersection_count(&other.0)
    }

    pub fn union_with(&mut self, other: &NodeSet) {
        self.0.union_with(&other.0);
    }

    pub fn difference_with(&mut self, other: &NodeSet) {
        self.0.difference_with(&other.0);
    }

    pub fn bits(&self) -> &FixedBitSet {
        &self.0
    }

    pub fn to_bitstring(&self) -> String {
        (0..self.len()).map(|i| if self.contains(i) { '1' } else { '0' }).collect()
    }

    pub fn parse_with_len(s: &str, n: usize) -> Result<Self, BitstringError> {
        let set: NodeSet = s.parse()?;
        if set.len() != n {
            return Err(BitstringError::Length { expected: n, found: set.len() });
        }
        Ok(set)
    }
}

impl FromStr for NodeSet {
    type Err = BitstringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = NodeSet::empty(s.chars().count());
        for (pos, ch) in s.chars().enumerate() {
            match ch {
                '0' => {}
                '1' => set.insert(pos),
                _ => return Err(BitstringError::BadChar { pos, ch }),
            }
        }
        Ok(set)
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_bitstring())
    }
}

/// Lexicographic order of the bitstring text ('1' > '0', node 0 first).
impl Ord for NodeSet {
    fn cmp(&self, other: &Self) -> Ordering {
        let n = self.len().min(other.len());
        for i in 0..n {
            match (self.contains(i), other.contains(i)) {
                (true, false) => return Ordering::Greater,
                (false, true) => return Ordering::Less,
                _ => {}
            }
        }
        self.len().cmp(&other.len())
    }
}

impl PartialOrd for NodeSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_form_puts_node_zero_first() {
        let s = NodeSet::from_nodes(5, [0, 3]);
        assert_eq!(s.to_string(), "10010");
        assert_eq!("10010".parse::<NodeSet>().unwrap(), s);
        assert_eq!(s.weight(), 2);
    }

    #[test]
    fn rejects_garbage() {
        assert_eq!("10x".parse::<NodeSet>(), Err(BitstringError::BadChar { pos: 2, ch: 'x' }));
        assert!(matches!(NodeSet::parse_with_len("101", 4), Err(BitstringError::Length { .. })));
    }

    #[test]
    fn ordering_matches_string_order() {
        let mut sets: Vec<NodeSet> = ["0110", "1000", "0001", "1100"].iter().map(|s| s.parse().unwrap()).collect();
        sets.sort();
        let text: Vec<String> = sets.iter().map(|s| s.to_string()).collect();
        assert_eq!(text, ["0001", "0110", "1000", "1100"]);
    }
}
