//! Online suffix automaton over an arbitrary ordered alphabet.

use alloc::vec;
use alloc::vec::Vec;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node<T> {
    len: usize,
    link: usize,
    // Sorted by symbol; out-degree is small for price states.
    next: Vec<(T, usize)>,
}

impl<T: Ord + Copy> Node<T> {
    fn get(&self, c: T) -> Option<usize> {
        self.next
            .binary_search_by(|&(s, _)| s.cmp(&c))
            .ok()
            .map(|i| self.next[i].1)
    }

    fn set(&mut self, c: T, to: usize) {
        match self.next.binary_search_by(|&(s, _)| s.cmp(&c)) {
            Ok(i) => self.next[i].1 = to,
            Err(i) => self.next.insert(i, (c, to)),
        }
    }
}

/// A clone created while extending: strings of `from` no longer than
/// `len(into)` now belong to `into`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Split {
    pub from: usize,
    pub into: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SuffixAutomaton<T> {
    nodes: Vec<Node<T>>,
    last: usize,
}

impl<T: Ord + Copy> SuffixAutomaton<T> {
    pub const ROOT: usize = 0;

    pub fn with_capacity(n: usize) -> Self {
        let mut nodes = Vec::with_capacity(2 * n + 1);
        nodes.push(Node {
            len: 0,
            link: NONE,
            next: vec![],
        });
        SuffixAutomaton { nodes, last: 0 }
    }

    pub fn len_of(&self, v: usize) -> usize {
        self.nodes[v].len
    }

    /// Suffix link; the root links to itself for convenience.
    pub fn link_of(&self, v: usize) -> usize {
        match self.nodes[v].link {
            NONE => Self::ROOT,
            l => l,
        }
    }

    pub fn step(&self, v: usize, c: T) -> Option<usize> {
        self.nodes[v].get(c)
    }

    /// Appends one symbol to the indexed text.
    pub fn extend(&mut self, c: T) -> Option<Split> {
        let cur = self.nodes.len();
        self.nodes.push(Node {
            len: self.nodes[self.last].len + 1,
            link: NONE,
            next: vec![],
        });
        let mut p = self.last;
        while p != NONE && self.nodes[p].get(c).is_none() {
            self.nodes[p].set(c, cur);
            p = self.nodes[p].link;
        }
        let mut split = None;
        if p == NONE {
            self.nodes[cur].link = Self::ROOT;
        } else {
            let q = self.nodes[p].get(c).unwrap_or(NONE);
            if self.nodes[p].len + 1 == self.nodes[q].len {
                self.nodes[cur].link = q;
            } else {
                let clone = self.nodes.len();
                let node = Node {
                    len: self.nodes[p].len + 1,
                    link: self.nodes[q].link,
                    next: self.nodes[q].next.clone(),
                };
                self.nodes.push(node);
                while p != NONE && self.nodes[p].get(c) == Some(q) {
                    self.nodes[p].set(c, clone);
                    p = self.nodes[p].link;
                }
                self.nodes[q].link = clone;
                self.nodes[cur].link = clone;
                split = Some(Split {
                    from: q,
                    into: clone,
                });
            }
        }
        self.last = cur;
        split
    }

    #[cfg(test)]
    pub fn contains(&self, pattern: &[T]) -> bool {
        let mut v = Self::ROOT;
        for &c in pattern {
            match self.step(v, c) {
                Some(u) => v = u,
                None => return false,
            }
        }
        true
    }
}
