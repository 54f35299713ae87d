//! The aggregate genre graph: tag systems joined through a shared
//! normalized layer.
//!
//! Ingesting a tag system adds a source-root node connected to one
//! original-tag node per tag. Each original tag links to its normalized
//! form: multi-word tags link to a composed-genre node (labelled by the
//! canonical key) which in turn links to one word node per distinct word;
//! single-word tags link straight to their word node. Word nodes are
//! *concept genres* when the word also occurs as a complete single-word
//! normalized tag in some ingested system, and plain *concepts* otherwise;
//! the classification is re-evaluated on every ingest because it depends on
//! global knowledge.
//!
//! Relation edges (subgenre/origin/derivative) keep their direction as an
//! attribute; traversal treats all edges as undirected.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::normalize::Normalizer;
use crate::tagsystem::{RelationKind, TagSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKind {
    SourceRoot,
    OriginalTag,
    ComposedGenre,
    Concept,
    ConceptGenre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    Membership,
    NormalizationLink,
    CompositionLink,
    Relation(RelationKind),
}

impl EdgeKind {
    fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Membership => "membership",
            EdgeKind::NormalizationLink => "normalization",
            EdgeKind::CompositionLink => "composition",
            EdgeKind::Relation(k) => k.as_str(),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "membership" => Some(EdgeKind::Membership),
            "normalization" => Some(EdgeKind::NormalizationLink),
            "composition" => Some(EdgeKind::CompositionLink),
            other => RelationKind::parse(other).map(EdgeKind::Relation),
        }
    }

    /// Whether traversal may ignore the stored endpoint order.
    fn is_symmetric(self) -> bool {
        !matches!(
            self,
            EdgeKind::Relation(RelationKind::Subgenre)
                | EdgeKind::Relation(RelationKind::Origin)
                | EdgeKind::Relation(RelationKind::Derivative)
        )
    }
}

/// Coarse edge classes used as traversal filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    Membership,
    Normalization,
    Composition,
    Relation,
}

impl EdgeKind {
    fn class(self) -> EdgeClass {
        match self {
            EdgeKind::Membership => EdgeClass::Membership,
            EdgeKind::NormalizationLink => EdgeClass::Normalization,
            EdgeKind::CompositionLink => EdgeClass::Composition,
            EdgeKind::Relation(_) => EdgeClass::Relation,
        }
    }
}

pub const NORMALIZED_OWNER: &str = "normalized";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub kind: NodeKind,
    /// Raw tag text, canonical key, word, or system name depending on kind.
    pub label: String,
    /// Owning system name, or "normalized" for the shared layer.
    pub owner: String,
}

/// Index layers: nodes are identified by (layer, owner, label). Concept and
/// concept-genre share a layer because an upgrade keeps the node identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Layer {
    Root,
    Original,
    Composed,
    Word,
}

impl NodeKind {
    fn layer(self) -> Layer {
        match self {
            NodeKind::SourceRoot => Layer::Root,
            NodeKind::OriginalTag => Layer::Original,
            NodeKind::ComposedGenre => Layer::Composed,
            NodeKind::Concept | NodeKind::ConceptGenre => Layer::Word,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct GenreGraph {
    nodes: Vec<GraphNode>,
    index: BTreeMap<(Layer, String, String), u32>,
    edges: BTreeSet<(u32, EdgeKind, u32)>,
    systems: BTreeSet<String>,
    /// word -> number of single-word normalized tags seen with that word.
    standalone: BTreeMap<String, usize>,
}

impl GenreGraph {
    pub fn new() -> Self {
        GenreGraph::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: u32) -> Result<&GraphNode> {
        self.nodes
            .get(id as usize)
            .ok_or_else(|| Error::UnknownNode(format!("node #{id}")))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u32, &GraphNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (i as u32, n))
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, EdgeKind, u32)> + '_ {
        self.edges.iter().copied()
    }

    pub fn systems(&self) -> impl Iterator<Item = &str> {
        self.systems.iter().map(String::as_str)
    }

    pub fn find_root(&self, system: &str) -> Option<u32> {
        self.index
            .get(&(Layer::Root, system.to_string(), system.to_string()))
            .copied()
    }

    pub fn find_original(&self, system: &str, tag: &str) -> Option<u32> {
        self.index
            .get(&(Layer::Original, system.to_string(), tag.to_string()))
            .copied()
    }

    pub fn find_composed(&self, canonical_key: &str) -> Option<u32> {
        self.index
            .get(&(
                Layer::Composed,
                NORMALIZED_OWNER.to_string(),
                canonical_key.to_string(),
            ))
            .copied()
    }

    pub fn find_word(&self, word: &str) -> Option<u32> {
        self.index
            .get(&(Layer::Word, NORMALIZED_OWNER.to_string(), word.to_string()))
            .copied()
    }

    fn intern(&mut self, kind: NodeKind, owner: &str, label: &str) -> u32 {
        let key = (kind.layer(), owner.to_string(), label.to_string());
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.nodes.len() as u32;
        self.nodes.push(GraphNode {
            kind,
            label: label.to_string(),
            owner: owner.to_string(),
        });
        self.index.insert(key, id);
        id
    }

    fn add_edge(&mut self, a: u32, kind: EdgeKind, b: u32) {
        if kind.is_symmetric() {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            self.edges.insert((lo, kind, hi));
        } else {
            self.edges.insert((a, kind, b));
        }
    }

    /// Ingest a tag system: root, original tags, relations, and the
    /// normalized layer. Word classifications are refreshed afterwards.
    pub fn add_tag_system(&mut self, system: &TagSystem, normalizer: &Normalizer) -> Result<()> {
        if self.systems.contains(system.name()) {
            return Err(Error::DuplicateSystem(system.name().to_string()));
        }
        self.systems.insert(system.name().to_string());
        let root = self.intern(NodeKind::SourceRoot, system.name(), system.name());
        for tag in system.tags() {
            let original = self.intern(NodeKind::OriginalTag, system.name(), tag.as_str());
            self.add_edge(root, EdgeKind::Membership, original);
            let form = normalizer.normalize_tag(tag.as_str())?;
            if form.tokens().len() == 1 {
                let word = &form.tokens()[0];
                let node = self.intern(NodeKind::Concept, NORMALIZED_OWNER, word);
                self.add_edge(original, EdgeKind::NormalizationLink, node);
                *self.standalone.entry(word.clone()).or_insert(0) += 1;
            } else {
                let composed = self.intern(
                    NodeKind::ComposedGenre,
                    NORMALIZED_OWNER,
                    form.canonical_key(),
                );
                self.add_edge(original, EdgeKind::NormalizationLink, composed);
                for word in form.word_set() {
                    let node = self.intern(NodeKind::Concept, NORMALIZED_OWNER, word);
                    self.add_edge(composed, EdgeKind::CompositionLink, node);
                }
            }
        }
        for (from, kind, to) in system.relations() {
            let a = self
                .find_original(system.name(), from)
                .expect("relation endpoints are tags of the system");
            let b = self
                .find_original(system.name(), to)
                .expect("relation endpoints are tags of the system");
            self.add_edge(a, EdgeKind::Relation(kind), b);
        }
        self.reclassify_words();
        Ok(())
    }

    fn reclassify_words(&mut self) {
        for node in &mut self.nodes {
            if node.kind == NodeKind::Concept || node.kind == NodeKind::ConceptGenre {
                node.kind = if self.standalone.get(&node.label).copied().unwrap_or(0) > 0 {
                    NodeKind::ConceptGenre
                } else {
                    NodeKind::Concept
                };
            }
        }
    }

    /// Whether `word` is a concept genre (also a standalone tag somewhere)
    /// or a plain concept.
    pub fn classify_word(&self, word: &str) -> Result<NodeKind> {
        let id = self
            .find_word(word)
            .ok_or_else(|| Error::UnknownWord(word.to_string()))?;
        Ok(self.nodes[id as usize].kind)
    }

    /// Nodes adjacent to `node` via edges whose class is in `filter`.
    pub fn neighbors(&self, node: u32, filter: &[EdgeClass]) -> Result<BTreeSet<u32>> {
        if node as usize >= self.nodes.len() {
            return Err(Error::UnknownNode(format!("node #{node}")));
        }
        let mut out = BTreeSet::new();
        for &(a, kind, b) in &self.edges {
            if !filter.contains(&kind.class()) {
                continue;
            }
            if a == node {
                out.insert(b);
            } else if b == node {
                out.insert(a);
            }
        }
        Ok(out)
    }

    /// Serialize to a line-oriented text form; `load` is the exact inverse.
    pub fn dump(&self) -> String {
        let mut sections: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (id, node) in self.nodes() {
            let (section, line) = match node.kind {
                NodeKind::SourceRoot => ("SOURCE-ROOTS", format!("{id}\t{}", node.owner)),
                NodeKind::OriginalTag => (
                    "ORIGINAL-TAGS",
                    format!("{id}\t{}\t{}", node.owner, node.label),
                ),
                NodeKind::ComposedGenre => ("COMPOSED-GENRES", format!("{id}\t{}", node.label)),
                NodeKind::Concept => ("CONCEPTS", format!("{id}\t{}", node.label)),
                NodeKind::ConceptGenre => ("CONCEPT-GENRES", format!("{id}\t{}", node.label)),
            };
            sections.entry(section).or_default().push(line);
        }
        let mut out = String::new();
        for section in [
            "SOURCE-ROOTS",
            "ORIGINAL-TAGS",
            "COMPOSED-GENRES",
            "CONCEPTS",
            "CONCEPT-GENRES",
        ] {
            out.push_str(section);
            out.push('\n');
            for line in sections.remove(section).unwrap_or_default() {
                out.push_str(&line);
                out.push('\n');
            }
        }
        out.push_str("EDGES\n");
        for &(a, kind, b) in &self.edges {
            out.push_str(&format!("{a}\t{}\t{b}\n", kind.as_str()));
        }
        out
    }

    pub fn load(text: &str, path: &str) -> Result<Self> {
        let mut graph = GenreGraph::new();
        let mut pending: Vec<(usize, u32, GraphNode)> = Vec::new();
        let mut edge_lines: Vec<(usize, u32, EdgeKind, u32)> = Vec::new();
        let mut section: Option<&str> = None;
        for (ln, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let "SOURCE-ROOTS" | "ORIGINAL-TAGS" | "COMPOSED-GENRES" | "CONCEPTS"
            | "CONCEPT-GENRES" | "EDGES" = line.trim()
            {
                section = Some(match line.trim() {
                    "SOURCE-ROOTS" => "roots",
                    "ORIGINAL-TAGS" => "originals",
                    "COMPOSED-GENRES" => "composed",
                    "CONCEPTS" => "concepts",
                    "CONCEPT-GENRES" => "concept-genres",
                    _ => "edges",
                });
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let want = |n: usize| -> Result<()> {
                if fields.len() == n {
                    Ok(())
                } else {
                    Err(Error::parse(
                        path,
                        ln + 1,
                        format!("expected {n} tab-separated fields"),
                    ))
                }
            };
            let parse_id = |s: &str| -> Result<u32> {
                s.parse()
                    .map_err(|_| Error::parse(path, ln + 1, format!("bad node id {s:?}")))
            };
            match section {
                None => {
                    return Err(Error::parse(
                        path,
                        ln + 1,
                        "expected a section header first",
                    ))
                }
                Some("roots") => {
                    want(2)?;
                    let id = parse_id(fields[0])?;
                    pending.push((
                        ln + 1,
                        id,
                        GraphNode {
                            kind: NodeKind::SourceRoot,
                            label: fields[1].to_string(),
                            owner: fields[1].to_string(),
                        },
                    ));
                }
                Some("originals") => {
                    want(3)?;
                    let id = parse_id(fields[0])?;
                    pending.push((
                        ln + 1,
                        id,
                        GraphNode {
                            kind: NodeKind::OriginalTag,
                            label: fields[2].to_string(),
                            owner: fields[1].to_string(),
                        },
                    ));
                }
                Some(kind @ ("composed" | "concepts" | "concept-genres")) => {
                    want(2)?;
                    let id = parse_id(fields[0])?;
                    let node_kind = match kind {
                        "composed" => NodeKind::ComposedGenre,
                        "concepts" => NodeKind::Concept,
                        _ => NodeKind::ConceptGenre,
                    };
                    pending.push((
                        ln + 1,
                        id,
                        GraphNode {
                            kind: node_kind,
                            label: fields[1].to_string(),
                            owner: NORMALIZED_OWNER.to_string(),
                        },
                    ));
                }
                Some(_) => {
                    want(3)?;
                    let a = parse_id(fields[0])?;
                    let b = parse_id(fields[2])?;
                    let kind = EdgeKind::parse(fields[1]).ok_or_else(|| {
                        Error::parse(path, ln + 1, format!("unknown edge kind {:?}", fields[1]))
                    })?;
                    edge_lines.push((ln + 1, a, kind, b));
                }
            }
        }
        pending.sort_by_key(|(_, id, _)| *id);
        for (expected, (ln, id, node)) in pending.into_iter().enumerate() {
            if id as usize != expected {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("node ids must be dense; expected {expected}, found {id}"),
                ));
            }
            let key = (node.kind.layer(), node.owner.clone(), node.label.clone());
            if graph.index.insert(key, id).is_some() {
                return Err(Error::parse(path, ln, "duplicate node"));
            }
            if node.kind == NodeKind::SourceRoot {
                graph.systems.insert(node.owner.clone());
            }
            if node.kind == NodeKind::ConceptGenre {
                graph.standalone.insert(node.label.clone(), 1);
            }
            graph.nodes.push(node);
        }
        for (ln, a, kind, b) in edge_lines {
            for id in [a, b] {
                if id as usize >= graph.nodes.len() {
                    return Err(Error::parse(
                        path,
                        ln,
                        format!("edge references unknown node {id}"),
                    ));
                }
            }
            graph.add_edge(a, kind, b);
        }
        Ok(graph)
    }
}
