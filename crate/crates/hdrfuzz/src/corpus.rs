//! The tree of retained test inputs, the alternating selection policy, and
//! on-disk persistence.
//!
//! Nodes are retained either for new coverage or for lowered headroom; the
//! selector alternates strictly between those two origin classes, walking
//! each class round-robin in creation order. Duplicate payloads (by content
//! hash) are never stored twice.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mutation::{CorpusStats, NodeFitness, SpliceSource};
use crate::rng::Rng;

/// Why a node was retained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    #[serde(rename = "seed")]
    Seed,
    #[serde(rename = "coverage")]
    CoverageRetained,
    #[serde(rename = "headroom")]
    HeadroomRetained,
}

impl Origin {
    fn as_str(&self) -> &'static str {
        match self {
            Origin::Seed => "seed",
            Origin::CoverageRetained => "coverage",
            Origin::HeadroomRetained => "headroom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestInput {
    pub id: u64,
    pub data: Vec<u8>,
    pub parent: Option<u64>,
    pub origin: Origin,
    pub depth: u32,
    /// Monotonic creation counter (equals insertion order).
    pub created_at: u64,
    /// Coverage breadth of the retention run, when one happened.
    pub breadth: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AddOutcome {
    Added(u64),
    /// An identical payload already lives in the tree.
    Duplicate,
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("unknown parent node {0}")]
    UnknownParent(u64),
    #[error("corpus io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest malformed: {0}")]
    Manifest(String),
    #[error("manifest references parent {parent} before it exists (node {id})")]
    DanglingParent { id: u64, parent: u64 },
    #[error("payload of node {id} does not match its recorded sha256")]
    HashMismatch { id: u64 },
}

/// The tree of retained inputs plus the two rotation cursors.
#[derive(Clone, Debug)]
pub struct CorpusTree {
    nodes: Vec<TestInput>,
    children: HashMap<u64, Vec<u64>>,
    seen_hashes: HashSet<[u8; 32]>,
    coverage_class: Vec<u64>,
    headroom_class: Vec<u64>,
    cursor_coverage: usize,
    cursor_headroom: usize,
    /// Which class the next selection asks for.
    want_headroom: bool,
    sum_len: u64,
    sum_breadth: u64,
    breadth_count: u64,
}

fn content_hash(data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(data);
    h.finalize().into()
}

impl CorpusTree {
    /// A tree holding just the seed root.
    pub fn new(seed: Vec<u8>, breadth: Option<u32>) -> Self {
        let mut seen_hashes = HashSet::new();
        seen_hashes.insert(content_hash(&seed));
        let root = TestInput {
            id: 0,
            data: seed,
            parent: None,
            origin: Origin::Seed,
            depth: 0,
            created_at: 0,
            breadth,
        };
        let sum_len = root.data.len() as u64;
        let (sum_breadth, breadth_count) = match breadth {
            Some(b) => (b as u64, 1),
            None => (0, 0),
        };
        CorpusTree {
            nodes: vec![root],
            children: HashMap::new(),
            seen_hashes,
            coverage_class: Vec::new(),
            headroom_class: Vec::new(),
            cursor_coverage: 0,
            cursor_headroom: 0,
            want_headroom: false,
            sum_len,
            sum_breadth,
            breadth_count,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&TestInput> {
        self.nodes.get(id as usize)
    }

    pub fn root(&self) -> &TestInput {
        &self.nodes[0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TestInput> {
        self.nodes.iter()
    }

    pub fn children_of(&self, id: u64) -> &[u64] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn count_by_origin(&self, origin: Origin) -> usize {
        match origin {
            Origin::Seed => 1,
            Origin::CoverageRetained => self.coverage_class.len(),
            Origin::HeadroomRetained => self.headroom_class.len(),
        }
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            mean_len: self.sum_len as f64 / self.nodes.len() as f64,
            mean_breadth: if self.breadth_count > 0 {
                self.sum_breadth as f64 / self.breadth_count as f64
            } else {
                1.0
            },
        }
    }

    pub fn fitness_of(&self, id: u64) -> NodeFitness {
        let n = &self.nodes[id as usize];
        NodeFitness {
            depth: n.depth,
            len: n.data.len(),
            breadth: n.breadth,
        }
    }

    /// Appends a child of `parent` unless an identical payload already exists.
    pub fn add_child(
        &mut self,
        parent: u64,
        data: Vec<u8>,
        origin: Origin,
        breadth: Option<u32>,
    ) -> Result<AddOutcome, CorpusError> {
        debug_assert_ne!(origin, Origin::Seed, "only the root is a seed");
        let parent_depth = match self.get(parent) {
            Some(p) => p.depth,
            None => return Err(CorpusError::UnknownParent(parent)),
        };
        let hash = content_hash(&data);
        if !self.seen_hashes.insert(hash) {
            return Ok(AddOutcome::Duplicate);
        }
        let id = self.nodes.len() as u64;
        self.sum_len += data.len() as u64;
        if let Some(b) = breadth {
            self.sum_breadth += b as u64;
            self.breadth_count += 1;
        }
        self.nodes.push(TestInput {
            id,
            data,
            parent: Some(parent),
            origin,
            depth: parent_depth + 1,
            created_at: id,
            breadth,
        });
        self.children.entry(parent).or_default().push(id);
        match origin {
            Origin::CoverageRetained => self.coverage_class.push(id),
            Origin::HeadroomRetained => self.headroom_class.push(id),
            Origin::Seed => unreachable!(),
        }
        Ok(AddOutcome::Added(id))
    }

    /// Selects the next input to fuzz: strict alternation between the
    /// coverage-retained and headroom-retained classes, round-robin inside a
    /// class, falling back to the other class when the requested one is
    /// empty and to the seed root when both are.
    pub fn select_next_h(&mut self) -> &TestInput {
        let want_headroom = self.want_headroom;
        self.want_headroom = !self.want_headroom;
        let id = if want_headroom {
            self.next_from_headroom().or_else(|| self.next_from_coverage())
        } else {
            self.next_from_coverage().or_else(|| self.next_from_headroom())
        };
        match id {
            Some(id) => &self.nodes[id as usize],
            None => self.root(),
        }
    }

    fn next_from_coverage(&mut self) -> Option<u64> {
        if self.coverage_class.is_empty() {
            return None;
        }
        let id = self.coverage_class[self.cursor_coverage % self.coverage_class.len()];
        self.cursor_coverage = (self.cursor_coverage + 1) % self.coverage_class.len();
        Some(id)
    }

    fn next_from_headroom(&mut self) -> Option<u64> {
        if self.headroom_class.is_empty() {
            return None;
        }
        let id = self.headroom_class[self.cursor_headroom % self.headroom_class.len()];
        self.cursor_headroom = (self.cursor_headroom + 1) % self.headroom_class.len();
        Some(id)
    }
}

impl SpliceSource for CorpusTree {
    fn pick_payload(&self, rng: &mut Rng) -> Option<&[u8]> {
        if self.nodes.len() < 2 {
            return None;
        }
        let id = rng.below(self.nodes.len() as u64);
        Some(&self.nodes[id as usize].data)
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: u64,
    parent: Option<u64>,
    origin: Origin,
    sha256: String,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    inputs: Vec<ManifestEntry>,
}

/// Writes one payload file per input plus `manifest.json`.
pub fn persist(tree: &CorpusTree, dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(tree.len());
    for node in tree.nodes() {
        let name = format!("{}_{}.bin", node.id, node.origin.as_str());
        fs::write(dir.join(name), &node.data)?;
        entries.push(ManifestEntry {
            id: node.id,
            parent: node.parent,
            origin: node.origin,
            sha256: hex::encode(content_hash(&node.data)),
        });
    }
    let manifest = Manifest { inputs: entries };
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    f.write_all(serde_json::to_string_pretty(&manifest).expect("manifest is serializable").as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Rebuilds a tree from a persisted directory.
pub fn load(dir: &Path) -> Result<CorpusTree, CorpusError> {
    let text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CorpusError::Manifest(e.to_string()))?;
    let mut entries = manifest.inputs;
    entries.sort_by_key(|e| e.id);
    let mut tree: Option<CorpusTree> = None;
    for entry in entries {
        let name = format!("{}_{}.bin", entry.id, entry.origin.as_str());
        let data = fs::read(dir.join(name))?;
        if hex::encode(content_hash(&data)) != entry.sha256 {
            return Err(CorpusError::HashMismatch { id: entry.id });
        }
        match (&mut tree, entry.parent, entry.origin) {
            (None, None, Origin::Seed) => {
                if entry.id != 0 {
                    return Err(CorpusError::Manifest(format!(
                        "root must have id 0, found {}",
                        entry.id
                    )));
                }
                tree = Some(CorpusTree::new(data, None));
            }
            (None, _, _) => {
                return Err(CorpusError::Manifest(
                    "first manifest entry must be the seed root".into(),
                ));
            }
            (Some(t), Some(parent), origin) => {
                if t.get(parent).is_none() {
                    return Err(CorpusError::DanglingParent {
                        id: entry.id,
                        parent,
                    });
                }
                match t.add_child(parent, data, origin, None) {
                    Ok(AddOutcome::Added(id)) if id == entry.id => {}
                    Ok(AddOutcome::Added(id)) => {
                        return Err(CorpusError::Manifest(format!(
                            "ids not dense: expected {id}, manifest says {}",
                            entry.id
                        )));
                    }
                    Ok(AddOutcome::Duplicate) => {
                        return Err(CorpusError::Manifest(format!(
                            "duplicate payload at node {}",
                            entry.id
                        )));
                    }
                    Err(e) => return Err(e),
                }
            }
            (Some(_), None, _) => {
                return Err(CorpusError::Manifest(format!(
                    "non-root node {} lacks a parent",
                    entry.id
                )));
            }
        }
    }
    tree.ok_or_else(|| CorpusError::Manifest("manifest holds no inputs".into()))
}
