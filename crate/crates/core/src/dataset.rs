//! Graph collections and their JSONL storage format.
//!
//! One JSON object per line: `{"n": 5, "edges": [[0, 1], [1, 2]]}`. Node
//! indices are 0-based. Paths ending in `.gz` are gzip-compressed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    ErdosRenyi { count: usize, nodes: usize, p: f64, seed: u64 },
    BarabasiAlbert { count: usize, nodes: usize, m: usize, seed: u64 },
    File(PathBuf),
    InMemory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<Graph>,
    pub split: Split,
    pub source: Source,
}

impl Dataset {
    pub fn new(graphs: Vec<Graph>, split: Split) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::InvalidArgument("dataset must contain at least one graph".into()));
        }
        Ok(Dataset { graphs, split, source: Source::InMemory })
    }

    /// `count` ER graphs; graph `i` uses seed `seed + i`.
    pub fn erdos_renyi(count: usize, nodes: usize, p: f64, seed: u64, split: Split) -> Result<Self> {
        let graphs = (0..count as u64)
            .map(|i| Graph::erdos_renyi(nodes, p, seed.wrapping_add(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut d = Dataset::new(graphs, split)?;
        d.source = Source::ErdosRenyi { count, nodes, p, seed };
        Ok(d)
    }

    /// `count` BA graphs; graph `i` uses seed `seed + i`.
    pub fn barabasi_albert(count: usize, nodes: usize, m: usize, seed: u64, split: Split) -> Result<Self> {
        let graphs = (0..count as u64)
            .map(|i| Graph::barabasi_albert(nodes, m, seed.wrapping_add(i)))
            .collect::<Result<Vec<_>>>()?;
        let mut d = Dataset::new(graphs, split)?;
        d.source = Source::BarabasiAlbert { count, nodes, m, seed };
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path)?;
    let mut out: Box<dyn Write> = if is_gz(path) {
        Box::new(BufWriter::new(GzEncoder::new(file, Compression::default())))
    } else {
        Box::new(BufWriter::new(file))
    };
    for g in &d.graphs {
        serde_json::to_writer(&mut out, g)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let reader: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    let graphs = parse_records(BufReader::new(reader), path)?;
    if graphs.is_empty() {
        return Err(Error::Parse { path: path.into(), line: 0, msg: "no graph records".into() });
    }
    Ok(Dataset { graphs, split, source: Source::File(path.into()) })
}

fn parse_records(reader: impl BufRead, path: &Path) -> Result<Vec<Graph>> {
    let mut graphs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { path: path.into(), line: idx + 1, msg };
        let record: GraphRecord = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        let g = Graph::try_from(record).map_err(|e| err(e.to_string()))?;
        graphs.push(g);
    }
    Ok(graphs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_plain_and_gz() {
        let d = Dataset::erdos_renyi(10, 12, 0.3, 5, Split::Train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for name in ["d.jsonl", "d.jsonl.gz"] {
            let p = dir.path().join(name);
            save_dataset(&d, &p).unwrap();
            let back = load_dataset(&p, Split::Train).unwrap();
            assert_eq!(back.graphs, d.graphs);
        }
    }

    #[test]
    fn self_loop_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"n\":3,\"edges\":[[0,1]]}\n{\"n\":6,\"edges\":[[5,5]]}\n").unwrap();
        match load_dataset(&p, Split::Test) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("self-loop"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_n_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"edges\":[[0,1]]}\n").unwrap();
        assert!(matches!(load_dataset(&p, Split::Test), Err(Error::Parse { line: 1, .. })));
    }
}
