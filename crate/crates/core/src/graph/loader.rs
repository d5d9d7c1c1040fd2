use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// On-disk dataset manifest. Paths are resolved relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_features: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_edges: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(path, lineno, "expected \"u<TAB>v\""));
        };
        let a: usize = a
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id {a:?}")))?;
        let b: usize = b
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad node id {b:?}")))?;
        if a >= n || b >= n {
            return Err(Error::parse(path, lineno, format!("node id out of range [0, {n})")));
        }
        if a == b {
            return Err(Error::parse(path, lineno, "self-loop"));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(Error::parse(path, lineno, format!("duplicate edge ({a}, {b})")));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

fn parse_features<T: Real>(path: &Path, n: usize) -> Result<Array2<T>> {
    let x = read_matrix_csv(path)?;
    if x.nrows() != n {
        return Err(Error::parse(
            path,
            x.nrows(),
            format!("{} feature rows, manifest declares {n} nodes", x.nrows()),
        ));
    }
    Ok(x)
}

/// Reads a headerless CSV of finite reals with a consistent row width.
pub fn read_matrix_csv<T: Real>(path: impl AsRef<Path>) -> Result<Array2<T>> {
    let path = path.as_ref();
    let text = read(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(path, lineno, "non-finite value"));
            }
            data.push(T::of(v));
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(f) if f != w => {
                return Err(Error::parse(path, lineno, format!("row has {w} values, expected {f}")))
            }
            _ => {}
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, width.unwrap_or(0)), data).map_err(|e| Error::Dimension(e.to_string()))
}

fn parse_labels(path: &Path, n: usize, k: usize) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut labels = Vec::with_capacity(n);
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let y: usize = t
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad label {t:?}")))?;
        if y >= k {
            return Err(Error::parse(path, lineno, format!("label out of range: {y} with {k} classes")));
        }
        labels.push(y);
    }
    if labels.len() != n {
        return Err(Error::parse(
            path,
            labels.len(),
            format!("{} labels, manifest declares {n} nodes", labels.len()),
        ));
    }
    Ok(labels)
}

/// Loads a graph from a JSON manifest.
pub fn load_graph<T: Real>(manifest_path: impl AsRef<Path>) -> Result<Graph<T>> {
    let manifest_path = manifest_path.as_ref();
    let manifest: Manifest = serde_json::from_str(&read(manifest_path)?).map_err(|e| Error::Parse {
        path: manifest_path.into(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let n = manifest.num_nodes;
    let k = manifest.num_classes;
    let edges_path = base.join(&manifest.edges);
    let edges = parse_edges(&edges_path, n)?;
    let features_path = base.join(&manifest.features);
    let features = parse_features::<T>(&features_path, n)?;
    let labels = parse_labels(&base.join(&manifest.labels), n, k)?;
    if let Some(f) = manifest.num_features {
        if f != features.ncols() {
            return Err(Error::parse(&features_path, 1, format!("{} features, manifest declares {f}", features.ncols())));
        }
    }
    if let Some(e) = manifest.num_edges {
        if e != edges.len() {
            return Err(Error::parse(&edges_path, edges.len(), format!("{} edges, manifest declares {e}", edges.len())));
        }
    }
    Graph::new(n, edges, features, labels, k)
}

/// Writes `graph` as `<dir>/<name>.json` plus edge, feature and label files.
/// Returns the manifest path.
pub fn write_graph<T: Real>(graph: &Graph<T>, dir: impl AsRef<Path>, name: &str) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        format!("{name}.edges.tsv"),
        format!("{name}.features.csv"),
        format!("{name}.labels.txt"),
    ];
    let write = |file: &str, body: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(file);
        let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(f);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    };
    write(&files[0], &|w| {
        for &(a, b) in graph.edges() {
            writeln!(w, "{a}\t{b}")?;
        }
        Ok(())
    })?;
    write(&files[1], &|w| {
        for row in graph.features().rows() {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b",")?;
                }
                first = false;
                write!(w, "{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write(&files[2], &|w| {
        for y in graph.labels() {
            writeln!(w, "{y}")?;
        }
        Ok(())
    })?;
    let manifest = Manifest {
        num_nodes: graph.num_nodes(),
        num_classes: graph.num_classes(),
        edges: files[0].clone().into(),
        features: files[1].clone().into(),
        labels: files[2].clone().into(),
        num_features: Some(graph.num_features()),
        num_edges: Some(graph.num_edges()),
    };
    let path = dir.join(format!("{name}.json"));
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
