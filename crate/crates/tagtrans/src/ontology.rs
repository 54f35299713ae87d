//! The pivot ontology: a universal genre graph both tag systems map into.
//!
//! The file format has three sections:
//!
//! ```text
//! GENRES
//! Rock_music
//! Punk_rock
//! Acid_house
//! Acid_(electronic_music)
//! Warehouse_music
//! ALIASES
//! Acid_house<TAB>Acid_(electronic_music)<TAB>Warehouse_music
//! EDGES
//! Punk_rock<TAB>subgenre<TAB>Rock_music
//! ```
//!
//! Each ALIASES line lists one alias group; groups sharing a label merge.
//! Edges connect groups, with the same direction convention as tag systems
//! (`a subgenre b` means b is the parent). Parallel edges of different
//! kinds between the same pair of groups are kept, but degree computations
//! treat the graph as simple.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tagsystem::RelationKind;

#[derive(Debug, Clone)]
pub struct PivotOntology {
    labels: Vec<String>,
    index: BTreeMap<String, u32>,
    group_of: Vec<u32>,
    groups: Vec<Vec<u32>>,
    edges: BTreeSet<(u32, RelationKind, u32)>,
}

impl PivotOntology {
    /// An ontology with no genres at all. Parsing rejects empty files —
    /// this exists for callers that need the type without pivot data,
    /// e.g. building a splitting trie from tag systems alone.
    pub fn empty() -> Self {
        PivotOntology {
            labels: Vec::new(),
            index: BTreeMap::new(),
            group_of: Vec::new(),
            groups: Vec::new(),
            edges: BTreeSet::new(),
        }
    }

    pub fn label_count(&self) -> usize {
        self.labels.len()
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn label(&self, idx: u32) -> &str {
        &self.labels[idx as usize]
    }

    pub fn label_index(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    /// Alias group of a label.
    pub fn group_of(&self, label_idx: u32) -> u32 {
        self.group_of[label_idx as usize]
    }

    /// Label indices belonging to a group, sorted.
    pub fn members(&self, group: u32) -> &[u32] {
        &self.groups[group as usize]
    }

    /// Lexicographically smallest label of a group.
    pub fn representative(&self, group: u32) -> &str {
        self.label(self.groups[group as usize][0])
    }

    pub fn group_edges(&self) -> impl Iterator<Item = (u32, RelationKind, u32)> + '_ {
        self.edges.iter().copied()
    }

    /// Groups connected to `group` by an edge in either direction, any kind.
    pub fn adjacent(&self, group: u32) -> BTreeSet<u32> {
        let mut out = BTreeSet::new();
        for &(f, _, t) in &self.edges {
            if f == group {
                out.insert(t);
            }
            if t == group {
                out.insert(f);
            }
        }
        out
    }

    /// Subgenre in-degree of `group` in the simple digraph induced by
    /// `candidates`: the number of distinct candidate groups with a subgenre
    /// edge into `group`. Origin and derivative edges do not count toward
    /// centrality (they still count as neighbors for score propagation).
    pub fn in_degree_within(&self, group: u32, candidates: &BTreeSet<u32>) -> usize {
        let mut sources = BTreeSet::new();
        for &(f, k, t) in &self.edges {
            if k == RelationKind::Subgenre && t == group && f != group && candidates.contains(&f) {
                sources.insert(f);
            }
        }
        sources.len()
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Genres,
            Aliases,
            Edges,
        }
        let mut declared: BTreeSet<String> = BTreeSet::new();
        let mut alias_pairs: Vec<(String, String)> = Vec::new();
        let mut edge_lines: Vec<(usize, String, RelationKind, String)> = Vec::new();
        let mut section = Section::None;
        for (ln, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            match line.trim() {
                "GENRES" => {
                    section = Section::Genres;
                    continue;
                }
                "ALIASES" => {
                    section = Section::Aliases;
                    continue;
                }
                "EDGES" => {
                    section = Section::Edges;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::None => {
                    return Err(Error::parse(
                        path,
                        ln + 1,
                        "expected a GENRES section first",
                    ));
                }
                Section::Genres => {
                    let label = line.trim().to_string();
                    if !declared.insert(label.clone()) {
                        return Err(Error::parse(
                            path,
                            ln + 1,
                            format!("duplicate genre {label:?}"),
                        ));
                    }
                }
                Section::Aliases => {
                    let members: Vec<&str> = line.split('\t').map(str::trim).collect();
                    if members.len() < 2 {
                        return Err(Error::parse(
                            path,
                            ln + 1,
                            "an alias group needs at least two tab-separated labels",
                        ));
                    }
                    for l in &members {
                        if !declared.contains(*l) {
                            return Err(Error::parse(
                                path,
                                ln + 1,
                                format!("undeclared genre {l:?}"),
                            ));
                        }
                    }
                    if members.iter().collect::<BTreeSet<_>>().len() != members.len() {
                        return Err(Error::parse(path, ln + 1, "alias group repeats a label"));
                    }
                    for pair in members.windows(2) {
                        alias_pairs.push((pair[0].to_string(), pair[1].to_string()));
                    }
                }
                Section::Edges => {
                    let mut parts = line.split('\t');
                    let (f, k, t) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                        (Some(f), Some(k), Some(t), None) => (f.trim(), k, t.trim()),
                        _ => {
                            return Err(Error::parse(
                                path,
                                ln + 1,
                                "expected from<TAB>kind<TAB>to",
                            ));
                        }
                    };
                    let kind = RelationKind::parse(k.trim()).ok_or_else(|| {
                        Error::parse(path, ln + 1, format!("unknown relation kind {k:?}"))
                    })?;
                    if kind == RelationKind::Alias {
                        return Err(Error::parse(
                            path,
                            ln + 1,
                            "alias pairs belong in the ALIASES section",
                        ));
                    }
                    for l in [f, t] {
                        if !declared.contains(l) {
                            return Err(Error::parse(
                                path,
                                ln + 1,
                                format!("undeclared genre {l:?}"),
                            ));
                        }
                    }
                    edge_lines.push((ln + 1, f.to_string(), kind, t.to_string()));
                }
            }
        }
        if declared.is_empty() {
            return Err(Error::Config(format!(
                "{path}: ontology declares no genres"
            )));
        }

        let labels: Vec<String> = declared.into_iter().collect();
        let index: BTreeMap<String, u32> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i as u32))
            .collect();

        // Union-find over label indices for alias grouping.
        let mut parent: Vec<u32> = (0..labels.len() as u32).collect();
        fn find(parent: &mut [u32], mut x: u32) -> u32 {
            while parent[x as usize] != x {
                parent[x as usize] = parent[parent[x as usize] as usize];
                x = parent[x as usize];
            }
            x
        }
        for (a, b) in &alias_pairs {
            let (ra, rb) = (find(&mut parent, index[a]), find(&mut parent, index[b]));
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent[hi as usize] = lo;
            }
        }
        let mut root_to_group: BTreeMap<u32, u32> = BTreeMap::new();
        let mut groups: Vec<Vec<u32>> = Vec::new();
        let mut group_of = vec![0u32; labels.len()];
        for i in 0..labels.len() as u32 {
            let root = find(&mut parent, i);
            let gid = *root_to_group.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                (groups.len() - 1) as u32
            });
            groups[gid as usize].push(i);
            group_of[i as usize] = gid;
        }

        let mut edges = BTreeSet::new();
        for (ln, f, kind, t) in edge_lines {
            let (gf, gt) = (group_of[index[&f] as usize], group_of[index[&t] as usize]);
            if gf == gt {
                return Err(Error::parse(
                    path,
                    ln,
                    format!("edge {f:?} -> {t:?} connects a genre group to itself"),
                ));
            }
            edges.insert((gf, kind, gt));
        }

        Ok(PivotOntology {
            labels,
            index,
            group_of,
            groups,
            edges,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::util::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// View the ontology as a tag system, for aggregation into the genre
    /// graph: labels become tags, alias groups become chained alias
    /// relations, and group edges become relations between representatives.
    pub fn as_tag_system(&self, name: &str) -> crate::tagsystem::TagSystem {
        let mut sys = crate::tagsystem::TagSystem::new(name);
        for l in &self.labels {
            sys.add_tag(l).expect("ontology labels are non-empty");
        }
        for members in &self.groups {
            let rep = self.label(members[0]);
            for &m in &members[1..] {
                sys.add_relation(rep, RelationKind::Alias, self.label(m))
                    .expect("alias members are declared labels");
            }
        }
        for &(f, k, t) in &self.edges {
            sys.add_relation(self.representative(f), k, self.representative(t))
                .expect("edge endpoints are declared labels");
        }
        sys
    }

    /// Serialize in the same format `parse` accepts.
    pub fn dump(&self) -> String {
        let mut out = String::from("GENRES\n");
        for l in &self.labels {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str("ALIASES\n");
        for members in &self.groups {
            if members.len() < 2 {
                continue;
            }
            let line: Vec<&str> = members
                .iter()
                .map(|&m| self.labels[m as usize].as_str())
                .collect();
            out.push_str(&line.join("\t"));
            out.push('\n');
        }
        out.push_str("EDGES\n");
        for &(f, k, t) in &self.edges {
            out.push_str(&format!(
                "{}\t{}\t{}\n",
                self.representative(f),
                k.as_str(),
                self.representative(t)
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "GENRES\nRock_music\nPunk_rock\nArt_rock\nAcid_house\nAcid_(electronic_music)\nWarehouse_music\nHouse_music\nElectronic_music\nALIASES\nAcid_house\tAcid_(electronic_music)\nAcid_house\tWarehouse_music\nEDGES\nPunk_rock\tsubgenre\tRock_music\nArt_rock\tsubgenre\tRock_music\nAcid_house\tsubgenre\tHouse_music\nHouse_music\torigin\tElectronic_music\n";

    #[test]
    fn groups_chain_through_shared_labels() {
        let ont = PivotOntology::parse(SAMPLE, "ont.txt").unwrap();
        assert_eq!(ont.label_count(), 8);
        assert_eq!(ont.group_count(), 6);
        let acid = ont.label_index("Acid_house").unwrap();
        let warehouse = ont.label_index("Warehouse_music").unwrap();
        let electronic = ont.label_index("Acid_(electronic_music)").unwrap();
        assert_eq!(ont.group_of(acid), ont.group_of(warehouse));
        assert_eq!(ont.group_of(acid), ont.group_of(electronic));
        assert_eq!(ont.members(ont.group_of(acid)).len(), 3);
    }

    #[test]
    fn in_degree_counts_distinct_candidate_sources() {
        let ont = PivotOntology::parse(SAMPLE, "ont.txt").unwrap();
        let rock = ont.group_of(ont.label_index("Rock_music").unwrap());
        let punk = ont.group_of(ont.label_index("Punk_rock").unwrap());
        let art = ont.group_of(ont.label_index("Art_rock").unwrap());
        let all: BTreeSet<u32> = [rock, punk, art].into_iter().collect();
        assert_eq!(ont.in_degree_within(rock, &all), 2);
        assert_eq!(ont.in_degree_within(punk, &all), 0);
        let only_punk: BTreeSet<u32> = [rock, punk].into_iter().collect();
        assert_eq!(ont.in_degree_within(rock, &only_punk), 1);
    }

    #[test]
    fn in_degree_ignores_origin_edges() {
        let ont = PivotOntology::parse(SAMPLE, "ont.txt").unwrap();
        let house = ont.group_of(ont.label_index("House_music").unwrap());
        let electronic = ont.group_of(ont.label_index("Electronic_music").unwrap());
        let acid = ont.group_of(ont.label_index("Acid_house").unwrap());
        let all: BTreeSet<u32> = [house, electronic, acid].into_iter().collect();
        // House gains in-degree from its subgenre; Electronic's only incoming
        // edge is an origin edge, which counts for adjacency but not degree.
        assert_eq!(ont.in_degree_within(house, &all), 1);
        assert_eq!(ont.in_degree_within(electronic, &all), 0);
        assert!(ont.adjacent(electronic).contains(&house));
    }

    #[test]
    fn adjacency_is_undirected() {
        let ont = PivotOntology::parse(SAMPLE, "ont.txt").unwrap();
        let rock = ont.group_of(ont.label_index("Rock_music").unwrap());
        let punk = ont.group_of(ont.label_index("Punk_rock").unwrap());
        assert!(ont.adjacent(rock).contains(&punk));
        assert!(ont.adjacent(punk).contains(&rock));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(PivotOntology::parse("EDGES\n", "t").is_err());
        assert!(PivotOntology::parse("GENRES\nA\nA\n", "t").is_err());
        assert!(PivotOntology::parse("GENRES\nA\nB\nEDGES\nA\talias\tB\n", "t").is_err());
        assert!(
            PivotOntology::parse("GENRES\nA\nB\nALIASES\nA\tB\nEDGES\nA\tsubgenre\tB\n", "t")
                .is_err()
        );
        assert!(PivotOntology::parse("GENRES\nA\nALIASES\nA\tA\n", "t").is_err());
    }

    #[test]
    fn dump_round_trips() {
        let ont = PivotOntology::parse(SAMPLE, "ont.txt").unwrap();
        let dumped = ont.dump();
        let back = PivotOntology::parse(&dumped, "ont.txt").unwrap();
        assert_eq!(back.dump(), dumped);
    }
}
