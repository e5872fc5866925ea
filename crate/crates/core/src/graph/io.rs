//! Interchange directory format.
//!
//! ```text
//! meta.json      {"n":…,"d":…,"num_classes":…,"name":…}
//! features.csv   header f0,…,f{d-1}; n rows of d floats, row index = node id
//! labels.csv     header id,label; rows in node order
//! edges.csv      header src,dst; src < dst, sorted, no duplicates
//! split.json     {"train":[…],"test":[…]}
//! ```
//!
//! Floats are written in shortest round-trip form, so save → load is
//! bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitSpec};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n: usize,
    pub d: usize,
    pub num_classes: usize,
    pub name: String,
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(Graph, SplitSpec)> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = serde_json::from_str(&read(&meta_path)?)
        .map_err(|e| Error::parse(&meta_path, e.line() as u64, e.to_string()))?;

    let features = read_features(&dir.join("features.csv"), &meta)?;
    let labels = read_labels(&dir.join("labels.csv"), &meta)?;
    let edges = read_edges(&dir.join("edges.csv"), meta.n)?;
    let graph = Graph::new(meta.name.clone(), features, labels, meta.num_classes, edges)?;

    let split_path = dir.join("split.json");
    let raw: SplitSpec = serde_json::from_str(&read(&split_path)?)
        .map_err(|e| Error::parse(&split_path, e.line() as u64, e.to_string()))?;
    let split = SplitSpec::new(meta.n, raw.train, raw.test)
        .map_err(|e| Error::parse(&split_path, 1, e.to_string()))?;
    Ok((graph, split))
}

pub fn save_dataset(dir: impl AsRef<Path>, g: &Graph, split: &SplitSpec) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = DatasetMeta {
        n: g.n(),
        d: g.feature_dim(),
        num_classes: g.num_classes(),
        name: g.name().to_string(),
    };
    write(&dir.join("meta.json"), &serde_json::to_string(&meta)?)?;

    let d = g.feature_dim();
    let mut out = String::new();
    let header: Vec<String> = (0..d).map(|k| format!("f{k}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..g.n() {
        for (k, x) in g.features().row(i).iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            write!(out, "{x:?}").expect("string write");
        }
        out.push('\n');
    }
    write(&dir.join("features.csv"), &out)?;

    let mut out = String::from("id,label\n");
    for (i, y) in g.labels().iter().enumerate() {
        writeln!(out, "{i},{y}").expect("string write");
    }
    write(&dir.join("labels.csv"), &out)?;

    let mut out = String::from("src,dst\n");
    for (u, v) in g.edges() {
        writeln!(out, "{u},{v}").expect("string write");
    }
    write(&dir.join("edges.csv"), &out)?;

    write(&dir.join("split.json"), &serde_json::to_string(split)?)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Iterates data rows of a headered CSV as `(line, fields)`.
fn rows(path: &Path) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        out.push((line, rec));
    }
    Ok(out)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(PathBuf::from(path), io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

fn field<T: FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, k: usize) -> Result<T> {
    let raw = rec
        .get(k)
        .ok_or_else(|| Error::parse(path, line, format!("missing column {k}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("cannot parse {raw:?}")))
}

fn read_features(path: &Path, meta: &DatasetMeta) -> Result<Matrix> {
    let rows = rows(path)?;
    if rows.len() != meta.n {
        return Err(Error::parse(
            path,
            rows.last().map_or(1, |r| r.0),
            format!("{} feature rows, meta says n={}", rows.len(), meta.n),
        ));
    }
    let mut data = Vec::with_capacity(meta.n * meta.d);
    for (line, rec) in &rows {
        if rec.len() != meta.d {
            return Err(Error::parse(
                path,
                *line,
                format!("{} columns, meta says d={}", rec.len(), meta.d),
            ));
        }
        for k in 0..meta.d {
            let x: f64 = field(path, *line, rec, k)?;
            if !x.is_finite() {
                return Err(Error::parse(path, *line, "non-finite feature"));
            }
            data.push(x);
        }
    }
    Matrix::from_vec(meta.n, meta.d, data)
}

fn read_labels(path: &Path, meta: &DatasetMeta) -> Result<Vec<usize>> {
    let rows = rows(path)?;
    if rows.len() != meta.n {
        return Err(Error::parse(
            path,
            rows.last().map_or(1, |r| r.0),
            format!("{} label rows, meta says n={}", rows.len(), meta.n),
        ));
    }
    let mut labels = Vec::with_capacity(meta.n);
    for (i, (line, rec)) in rows.iter().enumerate() {
        if rec.len() != 2 {
            return Err(Error::parse(path, *line, "expected `id,label`"));
        }
        let id: usize = field(path, *line, rec, 0)?;
        let y: usize = field(path, *line, rec, 1)?;
        if id != i {
            return Err(Error::parse(
                path,
                *line,
                format!("expected id {i}, found {id}"),
            ));
        }
        if y >= meta.num_classes {
            return Err(Error::parse(
                path,
                *line,
                format!("label {y} >= num_classes {}", meta.num_classes),
            ));
        }
        labels.push(y);
    }
    Ok(labels)
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (line, rec) in rows(path)? {
        if rec.len() != 2 {
            return Err(Error::parse(path, line, "expected `src,dst`"));
        }
        let u: usize = field(path, line, &rec, 0)?;
        let v: usize = field(path, line, &rec, 1)?;
        if u == v {
            return Err(Error::parse(path, line, format!("self-loop on {u}")));
        }
        if u > v {
            return Err(Error::parse(path, line, "src must be < dst"));
        }
        if v >= n {
            return Err(Error::parse(path, line, format!("node {v} >= n={n}")));
        }
        if let Some(&last) = edges.last() {
            if last == (u, v) {
                return Err(Error::parse(
                    path,
                    line,
                    format!("duplicate edge ({u}, {v})"),
                ));
            }
            if last > (u, v) {
                return Err(Error::parse(path, line, "edges are not sorted"));
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_sbm, split_train_test};

    fn tiny() -> (Graph, SplitSpec) {
        let f = Matrix::from_rows(&[
            vec![0.1, -2.5],
            vec![1.0 / 3.0, 7e-300],
            vec![f64::MAX, -0.0],
        ])
        .unwrap();
        let g = Graph::new("tiny", f, vec![1, 0, 1], 2, vec![(0, 2), (0, 1)]).unwrap();
        let s = split_train_test(3, 0.5, 0).unwrap();
        (g, s)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (g, s) = tiny();
        save_dataset(dir.path(), &g, &s).unwrap();
        let (g2, s2) = load_dataset(dir.path()).unwrap();
        assert_eq!(s, s2);
        assert_eq!(g.edges(), g2.edges());
        let bits = |m: &Matrix| m.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.features()), bits(g2.features()));
        assert_eq!(g, g2);

        let (g, s) = gen_sbm(3, 10, 0.5, 0.05, 6, 4).unwrap();
        save_dataset(dir.path(), &g, &s).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), (g, s));
    }

    #[test]
    fn empty_edge_file_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let f = Matrix::zeros(3, 1);
        let g = Graph::new("e", f, vec![0; 3], 1, vec![]).unwrap();
        let s = SplitSpec::new(3, vec![0, 1], vec![2]).unwrap();
        save_dataset(dir.path(), &g, &s).unwrap();
        let (g2, _) = load_dataset(dir.path()).unwrap();
        assert_eq!(g2.num_edges(), 0);
        assert_eq!(g2.csr().row_ptr(), &[0, 0, 0, 0]);
    }

    fn corrupt(file: &str, contents: &str) -> Error {
        let dir = tempfile::tempdir().unwrap();
        let (g, s) = tiny();
        save_dataset(dir.path(), &g, &s).unwrap();
        fs::write(dir.path().join(file), contents).unwrap();
        load_dataset(dir.path()).unwrap_err()
    }

    fn assert_parse_at(err: Error, file: &str, want_line: u64) {
        match err {
            Error::Parse { file: f, line, .. } => {
                assert!(f.ends_with(file), "{f:?}");
                assert_eq!(line, want_line);
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn errors_name_file_and_line() {
        assert_parse_at(corrupt("edges.csv", "src,dst\n0,1\n0,1\n"), "edges.csv", 3);
        assert_parse_at(corrupt("edges.csv", "src,dst\n0,1\n1,1\n"), "edges.csv", 3);
        assert_parse_at(
            corrupt("labels.csv", "id,label\n0,1\n1,5\n2,0\n"),
            "labels.csv",
            3,
        );
        assert_parse_at(
            corrupt("features.csv", "f0,f1\n1,2\n1,x\n3,4\n"),
            "features.csv",
            3,
        );
        assert_parse_at(corrupt("edges.csv", "src,dst\n0,2\n0,1\n"), "edges.csv", 3);
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let (g, s) = tiny();
        save_dataset(dir.path(), &g, &s).unwrap();
        fs::remove_file(dir.path().join("labels.csv")).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Io { .. })));
    }
}
