//! Matrix file formats.
//!
//! * CSV: UTF-8 with a header row and the integer row id in the first column.
//! * Binary: `GDMX`, a version byte, rows and columns as `u64` little endian,
//!   then row-major `f32` little endian values.
//! * Sidecar CSV: `id,label[,phase]`, joined to the matrix by row id.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset, GroundTruth, Tree};

pub const BINARY_MAGIC: &[u8; 4] = b"GDMX";
pub const BINARY_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Binary,
}

impl std::str::FromStr for Format {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "binary" | "gdmx" => Ok(Format::Binary),
            other => Err(DataError::InvalidConfig(format!(
                "unknown format {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadOptions {
    /// Reject any entry other than 0 or 1.
    pub strict_binary: bool,
    pub sidecar: Option<PathBuf>,
    /// Tree CSV; sidecar labels are then read as generating node indices.
    pub tree: Option<PathBuf>,
}

fn check_strict(v: f64, line: u64, col: usize) -> Result<(), DataError> {
    if v == 0.0 || v == 1.0 {
        Ok(())
    } else {
        Err(DataError::Parse {
            line,
            msg: format!("entry {v} in column {col} is not 0 or 1"),
        })
    }
}

pub fn write_csv<W: Write>(w: W, data: &Dataset) -> Result<(), DataError> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["id".to_string()];
    header.extend((0..data.dim()).map(|j| format!("x{j}")));
    wr.write_record(&header)?;
    let mut rec = Vec::with_capacity(data.dim() + 1);
    for (id, row) in data.ids.iter().zip(data.x.outer_iter()) {
        rec.clear();
        rec.push(id.to_string());
        // `Display` for f64 prints the shortest string that parses back exactly.
        rec.extend(row.iter().map(|v| v.to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R, strict_binary: bool) -> Result<Dataset, DataError> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let width = rd.headers()?.len();
    if width < 1 {
        return Err(DataError::Parse {
            line: 1,
            msg: "empty header".into(),
        });
    }
    let dim = width - 1;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let perr = |msg: String| DataError::Parse { line, msg };
        if rec.len() != width {
            return Err(perr(format!(
                "expected {width} fields, found {}",
                rec.len()
            )));
        }
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| perr(format!("row id {:?}: {e}", &rec[0])))?;
        ids.push(id);
        for (j, field) in rec.iter().skip(1).enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|e| perr(format!("column {j} value {field:?}: {e}")))?;
            if !v.is_finite() {
                return Err(perr(format!("column {j} is not finite")));
            }
            if strict_binary {
                check_strict(v, line, j)?;
            }
            values.push(v);
        }
    }
    let x = Array2::from_shape_vec((ids.len(), dim), values).expect("row widths checked");
    Ok(Dataset {
        x,
        ids,
        labels: None,
        phases: None,
        truth: None,
    })
}

/// Values are stored as `f32`, so non-`f32` inputs are rounded.
pub fn write_binary<W: Write>(mut w: W, x: &Array2<f64>) -> Result<(), DataError> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&[BINARY_VERSION])?;
    w.write_all(&(x.nrows() as u64).to_le_bytes())?;
    w.write_all(&(x.ncols() as u64).to_le_bytes())?;
    for v in x.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R, strict_binary: bool) -> Result<Dataset, DataError> {
    let mut head = [0u8; 21];
    r.read_exact(&mut head)
        .map_err(|_| DataError::Format("truncated header".into()))?;
    if &head[..4] != BINARY_MAGIC {
        return Err(DataError::Format("bad magic bytes".into()));
    }
    if head[4] != BINARY_VERSION {
        return Err(DataError::Format(format!(
            "unsupported version {}",
            head[4]
        )));
    }
    let rows = u64::from_le_bytes(head[5..13].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[13..21].try_into().unwrap()) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| DataError::Format("dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != len * 4 {
        return Err(DataError::Format(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            len * 4,
            bytes.len()
        )));
    }
    let mut values = Vec::with_capacity(len);
    for (k, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
        let (row, col) = (k / cols.max(1), k % cols.max(1));
        if !v.is_finite() {
            return Err(DataError::Parse {
                line: row as u64 + 1,
                msg: format!("column {col} is not finite"),
            });
        }
        if strict_binary {
            check_strict(v, row as u64 + 1, col)?;
        }
        values.push(v);
    }
    let x = Array2::from_shape_vec((rows, cols), values).expect("length checked");
    Ok(Dataset::from_matrix(x))
}

/// Labels and optional phases keyed by row id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub entries: HashMap<usize, (String, Option<f64>)>,
    pub has_phase: bool,
}

pub fn read_sidecar<R: Read>(r: R) -> Result<Sidecar, DataError> {
    let mut rd = csv::ReaderBuilder::new().flexible(true).from_reader(r);
    let has_phase = match rd.headers()?.len() {
        2 => false,
        3 => true,
        n => {
            return Err(DataError::Parse {
                line: 1,
                msg: format!("sidecar header must be id,label[,phase], found {n} columns"),
            })
        }
    };
    let width = if has_phase { 3 } else { 2 };
    let mut entries = HashMap::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let perr = |msg: String| DataError::Parse { line, msg };
        if rec.len() != width {
            return Err(perr(format!(
                "expected {width} fields, found {}",
                rec.len()
            )));
        }
        let id: usize = rec[0]
            .trim()
            .parse()
            .map_err(|e| perr(format!("row id {:?}: {e}", &rec[0])))?;
        let phase = if has_phase {
            let p: f64 = rec[2]
                .trim()
                .parse()
                .map_err(|e| perr(format!("phase {:?}: {e}", &rec[2])))?;
            if !(0.0..1.0).contains(&p) {
                return Err(perr(format!("phase {p} outside [0, 1)")));
            }
            Some(p)
        } else {
            None
        };
        if entries.insert(id, (rec[1].to_string(), phase)).is_some() {
            return Err(perr(format!("duplicate id {id}")));
        }
    }
    Ok(Sidecar { entries, has_phase })
}

pub fn write_sidecar<W: Write>(w: W, data: &Dataset) -> Result<(), DataError> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| DataError::InvalidConfig("dataset has no labels".into()))?;
    let mut wr = csv::Writer::from_writer(w);
    if let Some(phases) = &data.phases {
        wr.write_record(["id", "label", "phase"])?;
        for ((id, l), p) in data.ids.iter().zip(labels).zip(phases) {
            wr.write_record([id.to_string(), l.clone(), p.to_string()])?;
        }
    } else {
        wr.write_record(["id", "label"])?;
        for (id, l) in data.ids.iter().zip(labels) {
            wr.write_record([id.to_string(), l.clone()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

impl Dataset {
    /// Attaches sidecar labels (and phases) by row id. Every row id must be
    /// present and every sidecar id must name a row.
    pub fn join_sidecar(&mut self, side: &Sidecar) -> Result<(), DataError> {
        let mut labels = Vec::with_capacity(self.len());
        let mut phases = Vec::with_capacity(self.len());
        for id in &self.ids {
            let (l, p) = side
                .entries
                .get(id)
                .ok_or_else(|| DataError::Join(format!("row id {id} missing from sidecar")))?;
            labels.push(l.clone());
            if let Some(p) = p {
                phases.push(*p);
            }
        }
        if side.entries.len() != self.len() {
            let known: std::collections::HashSet<_> = self.ids.iter().collect();
            let mut extra: Vec<_> = side.entries.keys().filter(|k| !known.contains(k)).collect();
            extra.sort_unstable();
            return Err(DataError::Join(format!(
                "sidecar id {} has no matrix row",
                extra.first().map_or("?".into(), |k| k.to_string())
            )));
        }
        self.labels = Some(labels);
        self.phases = side.has_phase.then_some(phases);
        Ok(())
    }

    /// Rebuilds the tree oracle from labels that hold generating node indices.
    pub fn attach_tree(&mut self, tree: Tree) -> Result<(), DataError> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| DataError::Join("tree needs a sidecar of node labels".into()))?;
        let mut nodes = Vec::with_capacity(labels.len());
        for (id, l) in self.ids.iter().zip(labels) {
            let node: usize = l.trim().parse().map_err(|_| {
                DataError::Join(format!("row id {id}: label {l:?} is not a node index"))
            })?;
            if node >= tree.len() {
                return Err(DataError::Join(format!(
                    "row id {id}: node {node} not in a tree of {} nodes",
                    tree.len()
                )));
            }
            nodes.push(node);
        }
        self.truth = Some(GroundTruth::Tree {
            tree: Arc::new(tree),
            nodes,
        });
        Ok(())
    }
}

/// Loads a matrix and joins the optional sidecar and tree.
pub fn load_dataset(path: &Path, format: Format, opts: &LoadOptions) -> Result<Dataset, DataError> {
    let file = BufReader::new(File::open(path)?);
    let mut data = match format {
        Format::Csv => read_csv(file, opts.strict_binary)?,
        Format::Binary => read_binary(file, opts.strict_binary)?,
    };
    if let Some(side) = &opts.sidecar {
        let side = read_sidecar(BufReader::new(File::open(side)?))?;
        data.join_sidecar(&side)?;
    }
    if let Some(tree) = &opts.tree {
        let tree = Tree::read_csv(BufReader::new(File::open(tree)?))?;
        data.attach_tree(tree)?;
    }
    Ok(data)
}

/// Writes `x` in the given format.
pub fn save_matrix(path: &Path, format: Format, data: &Dataset) -> Result<(), DataError> {
    let w = BufWriter::new(File::create(path)?);
    match format {
        Format::Csv => write_csv(w, data),
        Format::Binary => write_binary(w, &data.x),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_is_exact() {
        let x = array![[0.1, -2.5e-300], [1.0 / 3.0, 7.0], [f64::MAX, -0.0]];
        let d = Dataset::from_matrix(x.clone());
        let mut buf = Vec::new();
        write_csv(&mut buf, &d).unwrap();
        let back = read_csv(&buf[..], false).unwrap();
        assert_eq!(back.ids, vec![0, 1, 2]);
        for (a, b) in x.iter().zip(back.x.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn strict_binary_rejects_two() {
        let text = "id,a,b\n0,0,1\n1,2,0\n";
        match read_csv(text.as_bytes(), true) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(read_csv(text.as_bytes(), false).is_ok());
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "id,a\n0,1.5\n1,abc\n";
        match read_csv(text.as_bytes(), false) {
            Err(DataError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let short = "id,a,b\n0,1\n";
        assert!(matches!(
            read_csv(short.as_bytes(), false),
            Err(DataError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn binary_round_trip() {
        let x = array![[0.0, 1.0, 0.0], [1.0, 1.0, 0.5]];
        let mut buf = Vec::new();
        write_binary(&mut buf, &x).unwrap();
        assert_eq!(&buf[..4], b"GDMX");
        assert_eq!(buf.len(), 21 + 6 * 4);
        assert_eq!(read_binary(&buf[..], false).unwrap().x, x);
        assert!(matches!(
            read_binary(&buf[..], true),
            Err(DataError::Parse { line: 2, .. })
        ));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            read_binary(&bad[..], false),
            Err(DataError::Format(_))
        ));
        assert!(matches!(
            read_binary(&buf[..buf.len() - 1], false),
            Err(DataError::Format(_))
        ));
    }

    #[test]
    fn sidecar_join() {
        let mut d = Dataset::from_matrix(array![[0.0], [1.0]]);
        let side = read_sidecar("id,label,phase\n1,b,0.5\n0,a,0.25\n".as_bytes()).unwrap();
        d.join_sidecar(&side).unwrap();
        assert_eq!(d.labels.as_deref().unwrap(), ["a", "b"]);
        assert_eq!(d.phases.as_deref().unwrap(), [0.25, 0.5]);

        let missing = read_sidecar("id,label\n0,a\n".as_bytes()).unwrap();
        match d.join_sidecar(&missing) {
            Err(DataError::Join(msg)) => assert!(msg.contains("row id 1"), "{msg}"),
            other => panic!("{other:?}"),
        }
        assert!(read_sidecar("id,label,phase\n0,a,1.0\n".as_bytes()).is_err());
    }

    #[test]
    fn tree_and_sidecar_rebuild_oracle() {
        let cfg = super::super::BranchingConfig {
            depth: 3,
            siblings: 2,
            dim: 2,
            ..Default::default()
        };
        let (tree, data) = super::super::generate_branching_diffusion(&cfg).unwrap();
        let mut side = Vec::new();
        write_sidecar(&mut side, &data).unwrap();
        let mut tbuf = Vec::new();
        tree.write_csv(&mut tbuf).unwrap();

        let mut d = Dataset::from_matrix(data.x.clone());
        d.join_sidecar(&read_sidecar(&side[..]).unwrap()).unwrap();
        d.attach_tree(Tree::read_csv(&tbuf[..]).unwrap()).unwrap();
        let (a, b) = (
            data.oracle(super::super::OracleKind::Hops).unwrap(),
            d.oracle(super::super::OracleKind::Hops).unwrap(),
        );
        for i in 0..d.len() {
            for j in 0..d.len() {
                assert_eq!(a.distance(i, j), b.distance(i, j));
            }
        }
    }
}
