//! A tag system: the vocabulary and relations of one tagging source.
//!
//! Systems load from a line-oriented text file with two sections:
//!
//! ```text
//! TAGS
//! rock
//! stoner
//! RELATIONS
//! stoner<TAB>subgenre<TAB>rock
//! ```
//!
//! A relation `a<TAB>subgenre<TAB>b` reads "a is a subgenre of b" (b is the
//! parent). `alias` relations are symmetric and are stored in both
//! directions; `origin` and `derivative` keep the direction as written.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normalize::RawTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationKind {
    Subgenre,
    Alias,
    Origin,
    Derivative,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Subgenre => "subgenre",
            RelationKind::Alias => "alias",
            RelationKind::Origin => "origin",
            RelationKind::Derivative => "derivative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "subgenre" => Some(RelationKind::Subgenre),
            "alias" => Some(RelationKind::Alias),
            "origin" => Some(RelationKind::Origin),
            "derivative" => Some(RelationKind::Derivative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TagSystem {
    name: String,
    tags: BTreeSet<RawTag>,
    relations: BTreeSet<(String, RelationKind, String)>,
}

impl TagSystem {
    pub fn new(name: &str) -> Self {
        TagSystem {
            name: name.to_string(),
            tags: BTreeSet::new(),
            relations: BTreeSet::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn add_tag(&mut self, tag: &str) -> Result<()> {
        self.tags.insert(RawTag::new(tag)?);
        Ok(())
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        RawTag::new(tag).is_ok_and(|t| self.tags.contains(&t))
    }

    /// Add a relation between two existing tags. Alias relations are stored
    /// symmetrically.
    pub fn add_relation(&mut self, from: &str, kind: RelationKind, to: &str) -> Result<()> {
        for t in [from, to] {
            if !self.has_tag(t) {
                return Err(Error::Config(format!(
                    "relation endpoint {t:?} is not a tag of system {:?}",
                    self.name
                )));
            }
        }
        let from = from.trim().to_string();
        let to = to.trim().to_string();
        if kind == RelationKind::Alias {
            self.relations.insert((to.clone(), kind, from.clone()));
        }
        self.relations.insert((from, kind, to));
        Ok(())
    }

    /// Tags in sorted order.
    pub fn tags(&self) -> impl Iterator<Item = &RawTag> {
        self.tags.iter()
    }

    pub fn tag_count(&self) -> usize {
        self.tags.len()
    }

    pub fn relations(&self) -> impl Iterator<Item = (&str, RelationKind, &str)> {
        self.relations
            .iter()
            .map(|(f, k, t)| (f.as_str(), *k, t.as_str()))
    }

    /// Parents of `tag`: the `to` side of its subgenre relations.
    pub fn parents_of(&self, tag: &str) -> Vec<&str> {
        self.relations
            .iter()
            .filter(|(f, k, _)| f == tag && *k == RelationKind::Subgenre)
            .map(|(_, _, t)| t.as_str())
            .collect()
    }

    /// Tags related to `tag`: parents, children, and aliases.
    pub fn related_of(&self, tag: &str) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for (f, k, t) in self.relations.iter() {
            match k {
                RelationKind::Subgenre | RelationKind::Alias => {
                    if f == tag {
                        out.insert(t.as_str());
                    }
                    if t == tag {
                        out.insert(f.as_str());
                    }
                }
                _ => {}
            }
        }
        out.remove(tag);
        out
    }

    pub fn parse(name: &str, text: &str, path: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Tags,
            Relations,
        }
        let mut sys = TagSystem::new(name);
        let mut section = Section::None;
        // Relations are checked after all tags are read so the file order
        // inside each section does not matter.
        let mut pending: Vec<(usize, String, RelationKind, String)> = Vec::new();
        for (ln, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match line.trim() {
                "TAGS" => {
                    section = Section::Tags;
                    continue;
                }
                "RELATIONS" => {
                    section = Section::Relations;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::None => {
                    return Err(Error::parse(path, ln + 1, "expected a TAGS section first"));
                }
                Section::Tags => {
                    sys.add_tag(line)
                        .map_err(|_| Error::parse(path, ln + 1, "tag is empty after trimming"))?;
                }
                Section::Relations => {
                    let mut parts = line.split('\t');
                    let (from, kind, to) =
                        match (parts.next(), parts.next(), parts.next(), parts.next()) {
                            (Some(f), Some(k), Some(t), None) => (f, k, t),
                            _ => {
                                return Err(Error::parse(
                                    path,
                                    ln + 1,
                                    "expected from<TAB>kind<TAB>to",
                                ));
                            }
                        };
                    let kind = RelationKind::parse(kind.trim()).ok_or_else(|| {
                        Error::parse(path, ln + 1, format!("unknown relation kind {kind:?}"))
                    })?;
                    pending.push((ln + 1, from.trim().to_string(), kind, to.trim().to_string()));
                }
            }
        }
        for (ln, from, kind, to) in pending {
            sys.add_relation(&from, kind, &to)
                .map_err(|e| Error::parse(path, ln, e.to_string()))?;
        }
        Ok(sys)
    }

    /// Load from a file; the system is named after the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Config(format!("no usable file name in {}", path.display())))?
            .to_string();
        let text = crate::util::read_to_string(path)?;
        Self::parse(&name, &text, &path.display().to_string())
    }

    /// Serialize in the same format `parse` accepts.
    pub fn dump(&self) -> String {
        let mut out = String::from("TAGS\n");
        for t in &self.tags {
            out.push_str(t.as_str());
            out.push('\n');
        }
        out.push_str("RELATIONS\n");
        for (f, k, t) in &self.relations {
            out.push_str(&format!("{f}\t{}\t{t}\n", k.as_str()));
        }
        out
    }
}

/// The tags of a system as owned strings, in sorted order.
pub(crate) fn sorted_tag_strings(sys: &TagSystem) -> Vec<String> {
    sys.tags().map(|t| t.as_str().to_string()).collect()
}
