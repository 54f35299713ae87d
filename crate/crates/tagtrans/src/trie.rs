//! Word trie used to split concatenated genre words ("poprock") into the
//! known words they are made of.
//!
//! Nodes live in a flat arena indexed by `u32`; children are kept in a
//! `BTreeMap` so traversal order is deterministic and any alphabet works.
//! The trie records its insertion order, which makes a build reproducible
//! and inspectable.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: BTreeMap<char, u32>,
    word: bool,
}

#[derive(Debug, Clone)]
pub struct Trie {
    nodes: Vec<TrieNode>,
    insertions: Vec<String>,
}

impl Default for Trie {
    fn default() -> Self {
        Self::new()
    }
}

impl Trie {
    pub fn new() -> Self {
        Trie {
            nodes: vec![TrieNode::default()],
            insertions: Vec::new(),
        }
    }

    /// Insert a word. Returns `false` if it was already present; new words
    /// are appended to the insertion log.
    pub fn insert(&mut self, word: &str) -> bool {
        debug_assert!(!word.is_empty(), "empty words cannot be trie entries");
        let mut node = 0usize;
        for c in word.chars() {
            let next = match self.nodes[node].children.get(&c) {
                Some(&n) => n as usize,
                None => {
                    let n = self.nodes.len() as u32;
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(c, n);
                    n as usize
                }
            };
            node = next;
        }
        if self.nodes[node].word {
            return false;
        }
        self.nodes[node].word = true;
        self.insertions.push(word.to_string());
        true
    }

    pub fn contains(&self, word: &str) -> bool {
        let mut node = 0usize;
        for c in word.chars() {
            match self.nodes[node].children.get(&c) {
                Some(&n) => node = n as usize,
                None => return false,
            }
        }
        self.nodes[node].word
    }

    /// Number of words stored.
    pub fn len(&self) -> usize {
        self.insertions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insertions.is_empty()
    }

    /// Words in the order they were inserted.
    pub fn insertions(&self) -> &[String] {
        &self.insertions
    }

    /// Split `token` into a sequence of trie words covering it completely.
    ///
    /// At each position the longest matching word is tried first; on a dead
    /// end the search backtracks to the next-longest match. Positions that
    /// provably cannot be covered are memoized, so the walk stays linear in
    /// practice. Returns `None` when no full cover exists.
    pub fn tokenize(&self, token: &str) -> Option<Vec<String>> {
        let chars: Vec<char> = token.chars().collect();
        if chars.is_empty() {
            return None;
        }
        let mut dead = vec![false; chars.len()];
        let mut out = Vec::new();
        if self.cover(&chars, 0, &mut dead, &mut out) {
            Some(out)
        } else {
            None
        }
    }

    fn cover(&self, chars: &[char], pos: usize, dead: &mut [bool], out: &mut Vec<String>) -> bool {
        if pos == chars.len() {
            return true;
        }
        if dead[pos] {
            return false;
        }
        // End positions (exclusive) of every trie word starting at `pos`.
        let mut ends = Vec::new();
        let mut node = 0usize;
        for (i, &c) in chars.iter().enumerate().skip(pos) {
            match self.nodes[node].children.get(&c) {
                Some(&n) => {
                    node = n as usize;
                    if self.nodes[node].word {
                        ends.push(i + 1);
                    }
                }
                None => break,
            }
        }
        for &end in ends.iter().rev() {
            out.push(chars[pos..end].iter().collect());
            if self.cover(chars, end, dead, out) {
                return true;
            }
            out.pop();
        }
        dead[pos] = true;
        false
    }
}
