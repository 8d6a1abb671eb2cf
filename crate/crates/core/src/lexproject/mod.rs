//! Lexical resources (semantic networks and association tables) and their
//! projection to raw text corpora for embedding training.

mod association;
mod wordnet;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use association::parse_association_table;
pub use wordnet::{parse_wordnet_dir, relation_name};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub source: String,
    pub relation: String,
    pub target: String,
}

impl Edge {
    pub fn new(source: impl Into<String>, relation: impl Into<String>, target: impl Into<String>) -> Self {
        Edge {
            source: source.into(),
            relation: relation.into(),
            target: target.into(),
        }
    }
}

/// Graph of lemmas joined by labeled relations.
///
/// Edges are kept sorted and unique; self-loops are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SemanticNetwork {
    nodes: BTreeSet<String>,
    edges: Vec<Edge>,
}

impl SemanticNetwork {
    pub fn new(nodes: impl IntoIterator<Item = String>, edges: impl IntoIterator<Item = Edge>) -> Self {
        let mut nodes: BTreeSet<String> = nodes.into_iter().collect();
        let mut edges: Vec<Edge> = edges.into_iter().filter(|e| e.source != e.target).collect();
        edges.sort();
        edges.dedup();
        for e in &edges {
            if !nodes.contains(&e.source) {
                nodes.insert(e.source.clone());
            }
            if !nodes.contains(&e.target) {
                nodes.insert(e.target.clone());
            }
        }
        SemanticNetwork { nodes, edges }
    }

    pub fn nodes(&self) -> &BTreeSet<String> {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Cue word mapped to its ordered free-association responses.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AssociationTable {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl AssociationTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSource {
    Network,
    Association,
    Text,
}

/// One line per node or cue: the unit itself followed by its related units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectedCorpus {
    pub lines: Vec<Vec<String>>,
    pub source: CorpusSource,
}

impl ProjectedCorpus {
    pub fn token_count(&self) -> usize {
        self.lines.iter().map(Vec::len).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for line in &self.lines {
            writeln!(w, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a whitespace-tokenized corpus, one context unit per line.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let toks: Vec<String> = line.split_whitespace().map(str::to_string).collect();
            if !toks.is_empty() {
                lines.push(toks);
            }
        }
        if lines.is_empty() {
            return Err(Error::EmptyInput(path.display().to_string()));
        }
        Ok(ProjectedCorpus {
            lines,
            source: CorpusSource::Text,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkFormat {
    WordnetDb,
    EdgeTsv,
}

impl FromStr for NetworkFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wordnet_db" | "wordnet" => Ok(NetworkFormat::WordnetDb),
            "edge_tsv" | "tsv" => Ok(NetworkFormat::EdgeTsv),
            other => Err(format!("unknown network format {other:?}")),
        }
    }
}

pub fn parse_semantic_network(path: &Path, format: NetworkFormat) -> Result<SemanticNetwork> {
    match format {
        NetworkFormat::WordnetDb => parse_wordnet_dir(path),
        NetworkFormat::EdgeTsv => parse_edge_tsv(path),
    }
}

/// Rows `lemma<TAB>relation<TAB>lemma`; blank lines are skipped.
pub fn parse_edge_tsv(path: &Path) -> Result<SemanticNetwork> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut edges = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
            return Err(Error::parse(
                path,
                i + 1,
                format!(
                    "expected lemma<TAB>relation<TAB>lemma, found {} column(s)",
                    fields.len()
                ),
            ));
        }
        edges.push(Edge::new(fields[0].trim(), fields[1].trim(), fields[2].trim()));
    }
    if edges.is_empty() {
        return Err(Error::EmptyInput(path.display().to_string()));
    }
    Ok(SemanticNetwork::new(Vec::new(), edges))
}

pub fn write_edge_tsv(n: &SemanticNetwork, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in &n.edges {
        writeln!(w, "{}\t{}\t{}", e.source, e.relation, e.target).map_err(|err| Error::io(path, err))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Each node followed by every neighbor reached through an outgoing or
/// incoming edge, ordered by `(relation, lemma)`.
pub fn project_network(n: &SemanticNetwork) -> ProjectedCorpus {
    let mut neighbors: BTreeMap<&str, BTreeSet<(&str, &str)>> =
        n.nodes.iter().map(|node| (node.as_str(), BTreeSet::new())).collect();
    for e in &n.edges {
        neighbors
            .get_mut(e.source.as_str())
            .expect("edge endpoints are nodes")
            .insert((e.relation.as_str(), e.target.as_str()));
        neighbors
            .get_mut(e.target.as_str())
            .expect("edge endpoints are nodes")
            .insert((e.relation.as_str(), e.source.as_str()));
    }
    let lines = neighbors
        .into_iter()
        .map(|(node, rel)| {
            std::iter::once(node.to_string())
                .chain(rel.into_iter().map(|(_, lemma)| lemma.to_string()))
                .collect()
        })
        .collect();
    ProjectedCorpus {
        lines,
        source: CorpusSource::Network,
    }
}

/// Each cue followed by its full ordered response sequence.
pub fn project_associations(t: &AssociationTable) -> ProjectedCorpus {
    let lines = t
        .entries
        .iter()
        .map(|(cue, responses)| std::iter::once(cue.clone()).chain(responses.iter().cloned()).collect())
        .collect();
    ProjectedCorpus {
        lines,
        source: CorpusSource::Association,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn net(edges: &[(&str, &str, &str)]) -> SemanticNetwork {
        SemanticNetwork::new(Vec::new(), edges.iter().map(|&(a, r, b)| Edge::new(a, r, b)))
    }

    #[test]
    fn edge_tsv_parses() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.tsv");
        std::fs::write(&p, "dog\thypernym\tcanine\ndog\tmember\tpuppy\n").unwrap();
        let n = parse_semantic_network(&p, NetworkFormat::EdgeTsv).unwrap();
        assert_eq!(n.nodes().len(), 3);
        assert_eq!(n.edges().len(), 2);

        std::fs::write(&p, "dog\thypernym\tcanine\ndog\tpuppy\n").unwrap();
        assert!(matches!(parse_edge_tsv(&p), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn network_projection_rules() {
        let n = net(&[("dog", "hypernym", "canine"), ("dog", "member", "puppy")]);
        let c = project_network(&n);
        assert_eq!(c.to_text(), "canine dog\ndog canine puppy\npuppy dog\n");

        let n = SemanticNetwork::new(vec!["qux".to_string()], Vec::new());
        assert_eq!(project_network(&n).to_text(), "qux\n");

        let n = net(&[("a", "rel", "b")]);
        assert_eq!(project_network(&n).to_text(), "a b\nb a\n");
        let n = net(&[("a", "rel", "b"), ("b", "rel", "a")]);
        assert_eq!(project_network(&n).to_text(), "a b\nb a\n");
    }

    #[test]
    fn association_projection_rules() {
        let mut t = AssociationTable::default();
        t.entries
            .insert("bread".into(), vec!["butter".into(), "food".into(), "toast".into()]);
        t.entries.insert("lonely".into(), Vec::new());
        t.entries
            .insert("big".into(), (0..100).map(|i| format!("r{i}")).collect());
        let c = project_associations(&t);
        assert_eq!(c.lines.len(), 3);
        assert_eq!(c.lines[0].len(), 101);
        assert_eq!(c.lines[1].join(" "), "bread butter food toast");
        assert_eq!(c.lines[2], vec!["lonely"]);
    }

    #[test]
    fn self_loops_and_duplicates_dropped() {
        let n = net(&[("a", "r", "a"), ("a", "r", "b"), ("a", "r", "b")]);
        assert_eq!(n.edges().len(), 1);
    }

    fn arb_network() -> impl Strategy<Value = SemanticNetwork> {
        proptest::collection::vec(("[a-f]{1,2}", "(hyp|ant|mer)", "[a-f]{1,2}"), 1..30)
            .prop_map(|rows| SemanticNetwork::new(Vec::new(), rows.into_iter().map(|(a, r, b)| Edge::new(a, r, b))))
    }

    proptest! {
        #[test]
        fn edge_tsv_round_trip(n in arb_network()) {
            prop_assume!(!n.edges().is_empty());
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("n.tsv");
            write_edge_tsv(&n, &p).unwrap();
            prop_assert_eq!(parse_edge_tsv(&p).unwrap(), n);
        }

        #[test]
        fn projection_line_per_node(n in arb_network()) {
            let c = project_network(&n);
            prop_assert_eq!(c.lines.len(), n.nodes().len());
            for (line, node) in c.lines.iter().zip(n.nodes()) {
                prop_assert_eq!(&line[0], node);
            }
            prop_assert_eq!(c.to_text(), project_network(&n.clone()).to_text());
        }
    }
}
