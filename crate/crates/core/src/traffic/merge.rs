use serde::{Deserialize, Serialize};

use super::{MemoryRequest, TrafficError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arbitration {
    #[default]
    RoundRobin,
    FixedPriority,
}

/// Multi-level arbitration tree. `fanouts` runs from the root down: `[3, 8]`
/// is three groups of eight leaves, and leaf `g * 8 + c` is core `c` of
/// group `g`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeTreeSpec {
    pub leaves: u32,
    pub fanouts: Vec<u32>,
    #[serde(default)]
    pub arbitration: Arbitration,
}

impl MergeTreeSpec {
    pub fn new(fanouts: Vec<u32>) -> Self {
        let leaves = fanouts.iter().product();
        MergeTreeSpec { leaves, fanouts, arbitration: Arbitration::RoundRobin }
    }

    /// Two-level tree with groups of eight where possible, else flat.
    pub fn with_leaves(leaves: u32) -> Self {
        if leaves > 8 && leaves % 8 == 0 {
            Self::new(vec![leaves / 8, 8])
        } else if leaves <= 1 {
            Self::new(vec![])
        } else {
            Self::new(vec![leaves])
        }
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if self.leaves == 0 {
            return Err(TrafficError::InvalidTree("leaves must be >= 1".into()));
        }
        if self.fanouts.contains(&0) {
            return Err(TrafficError::InvalidTree("fanouts must be >= 1".into()));
        }
        let product: u64 = self.fanouts.iter().map(|&f| f as u64).product();
        if product != self.leaves as u64 {
            return Err(TrafficError::InvalidTree(format!(
                "product of fanouts {:?} is {product}, expected leaves = {}",
                self.fanouts, self.leaves
            )));
        }
        Ok(())
    }
}

enum Node {
    Leaf { index: usize, cursor: usize },
    Inner { children: Vec<Node>, next: usize },
}

impl Node {
    fn build(fanouts: &[u32], first_leaf: &mut usize) -> Node {
        match fanouts.split_first() {
            None => {
                let index = *first_leaf;
                *first_leaf += 1;
                Node::Leaf { index, cursor: 0 }
            }
            Some((&fan, rest)) => {
                let children = (0..fan).map(|_| Node::build(rest, first_leaf)).collect();
                Node::Inner { children, next: 0 }
            }
        }
    }

    fn pull(&mut self, sources: &[Vec<MemoryRequest>], arb: Arbitration) -> Option<MemoryRequest> {
        match self {
            Node::Leaf { index, cursor } => {
                let req = sources[*index].get(*cursor).copied()?;
                *cursor += 1;
                Some(req)
            }
            Node::Inner { children, next } => loop {
                if children.is_empty() {
                    return None;
                }
                let i = match arb {
                    Arbitration::RoundRobin => *next % children.len(),
                    Arbitration::FixedPriority => 0,
                };
                match children[i].pull(sources, arb) {
                    Some(req) => {
                        *next = (i + 1) % children.len();
                        return Some(req);
                    }
                    // An exhausted child stays exhausted; the next sibling
                    // slides into slot i.
                    None => {
                        children.remove(i);
                        *next = i;
                    }
                }
            },
        }
    }
}

/// Interleave per-source lists through the arbitration tree. Each node takes
/// one request from its next non-empty child in turn. Output `seq` is the
/// emission index.
pub fn merge(tree: &MergeTreeSpec, sources: &[Vec<MemoryRequest>]) -> Result<Vec<MemoryRequest>, TrafficError> {
    tree.validate()?;
    if sources.len() != tree.leaves as usize {
        return Err(TrafficError::LeafCount { expected: tree.leaves as usize, actual: sources.len() });
    }
    let total = sources.iter().map(Vec::len).sum();
    let mut root = Node::build(&tree.fanouts, &mut 0);
    let mut out = Vec::with_capacity(total);
    while let Some(mut req) = root.pull(sources, tree.arbitration) {
        req.seq = out.len() as u64;
        out.push(req);
    }
    debug_assert_eq!(out.len(), total);
    Ok(out)
}
