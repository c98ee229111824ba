//! Attributed graphs: data model, on-disk layout, GCN propagation matrix and
//! synthetic outlier injection.
//!
//! On disk a graph is a directory holding
//!
//! - `edges.tsv`: one `u<TAB>v` pair per line, 0-indexed;
//! - `features.csv`: one row of comma-separated floats per node;
//! - `labels.csv` (optional): one `0`/`1` per node, `1` marking an outlier.
//!
//! Edges are undirected and unweighted. Reversed and repeated pairs collapse
//! to one edge and self-loops are dropped; both are counted and logged.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::tensor::Matrix;
use crate::sparse::CsrMatrix;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    features: Matrix,
    /// Undirected edges as `(u, v)` with `u < v`, sorted and unique.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    labels: Option<Vec<u8>>,
}

/// What was discarded while building the edge set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCleanup {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl AttributedGraph {
    pub fn new(
        features: Matrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<u8>>,
    ) -> Result<Self> {
        Self::build(features, edges, labels).map(|(g, _)| g)
    }

    /// Like [`AttributedGraph::new`], also reporting dropped self-loops and
    /// duplicate pairs.
    pub fn build(
        features: Matrix,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Option<Vec<u8>>,
    ) -> Result<(Self, EdgeCleanup)> {
        let n = features.rows();
        let mut cleanup = EdgeCleanup::default();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidArgument(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                cleanup.self_loops += 1;
                continue;
            }
            if !set.insert((u.min(v), u.max(v))) {
                cleanup.duplicates += 1;
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
            if let Some(bad) = l.iter().find(|&&x| x > 1) {
                return Err(Error::InvalidArgument(format!(
                    "label value {bad} outside {{0,1}}"
                )));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok((
            AttributedGraph {
                features,
                edges,
                neighbors,
                labels,
            },
            cleanup,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn outlier_ratio(&self) -> Option<f64> {
        let l = self.labels.as_ref()?;
        let pos = l.iter().filter(|&&x| x == 1).count();
        Some(pos as f64 / l.len().max(1) as f64)
    }

    /// The same graph with labels removed. Training and detection only ever
    /// see graphs passed through this.
    pub fn without_labels(&self) -> Self {
        AttributedGraph {
            labels: None,
            ..self.clone()
        }
    }

    pub fn with_labels(mut self, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != self.num_nodes() || labels.iter().any(|&x| x > 1) {
            return Err(Error::InvalidArgument("labels must be n values in {0,1}".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Dense 0/1 adjacency. Quadratic in memory; meant for small graphs and
    /// tests.
    pub fn dense_adjacency(&self) -> Matrix {
        let n = self.num_nodes();
        let mut a = Matrix::zeros(n, n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Per-dimension standardisation to zero mean and unit variance over
    /// nodes. Constant dimensions become zero.
    pub fn standardize_features(&mut self) {
        let n = self.num_nodes();
        if n == 0 {
            return;
        }
        let means = self.features.col_means();
        let mut vars = vec![0.0; self.feature_dim()];
        for row in self.features.iter_rows() {
            for (j, v) in row.iter().enumerate() {
                let d = v - means[j];
                vars[j] += d * d;
            }
        }
        let stds: Vec<f64> = vars.iter().map(|v| (v / n as f64).sqrt()).collect();
        for i in 0..n {
            let row = self.features.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = if stds[j] > 1e-12 {
                    (*v - means[j]) / stds[j]
                } else {
                    0.0
                };
            }
        }
    }

    /// Relabels nodes: node `v` of `self` becomes node `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        if perm.len() != n {
            return Err(Error::InvalidArgument("permutation length".into()));
        }
        let mut inverse = vec![usize::MAX; n];
        for (v, &p) in perm.iter().enumerate() {
            if p >= n || inverse[p] != usize::MAX {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            inverse[p] = v;
        }
        let features = self.features.select_rows(&inverse);
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        let labels = self
            .labels
            .as_ref()
            .map(|l| inverse.iter().map(|&v| l[v]).collect());
        Self::new(features, edges.collect::<Vec<_>>(), labels)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub standardize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { standardize: true }
    }
}

/// Loads a graph directory with feature standardisation on.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<AttributedGraph> {
    load_graph_with(dir, LoadOptions::default())
}

pub fn load_graph_with(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<AttributedGraph> {
    let dir = dir.as_ref();
    let features = read_features(&dir.join(FEATURES_FILE))?;
    let n = features.rows();
    let edges = read_edges(&dir.join(EDGES_FILE), n)?;
    let labels_path = dir.join(LABELS_FILE);
    let labels = if labels_path.exists() {
        Some(read_labels(&labels_path, n)?)
    } else {
        None
    };
    let (mut g, cleanup) = AttributedGraph::build(features, edges, labels)?;
    if cleanup.self_loops > 0 || cleanup.duplicates > 0 {
        log::warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            dir.display(),
            cleanup.self_loops,
            cleanup.duplicates
        );
    }
    if opts.standardize {
        g.standardize_features();
    }
    Ok(g)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_features(path: &Path) -> Result<Matrix> {
    let text = read_to_string(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let start = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad float `{field}`")))?;
            data.push(v);
        }
        let w = data.len() - start;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("ragged row: {w} values, expected {expected}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    Matrix::from_vec(rows, width.unwrap_or(0), data)
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let field = it
                .next()
                .ok_or_else(|| parse_err(path, lineno + 1, "expected `u<TAB>v`"))?;
            field
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad node index `{field}`")))
        };
        let (u, v) = (next()?, next()?);
        if u >= n || v >= n {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("edge ({u}, {v}) out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<u8>> {
    let text = read_to_string(path)?;
    let mut labels = Vec::with_capacity(n);
    for (lineno, line) in text.lines().enumerate() {
        match line.trim() {
            "" => continue,
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => {
                return Err(parse_err(
                    path,
                    lineno + 1,
                    format!("label `{other}` outside {{0,1}}"),
                ))
            }
        }
    }
    if labels.len() != n {
        return Err(parse_err(
            path,
            labels.len(),
            format!("{} labels for {n} nodes", labels.len()),
        ));
    }
    Ok(labels)
}

/// Writes the directory layout read by [`load_graph`]. Floats use Rust's
/// shortest round-trip formatting, so reloading without standardisation is
/// exact.
pub fn save_graph(dir: impl AsRef<Path>, g: &AttributedGraph) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut edges = String::new();
    for &(u, v) in g.edges() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write_file(&dir.join(EDGES_FILE), edges.as_bytes())?;

    let mut feats = String::new();
    for row in g.features().iter_rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        feats.push_str(&line.join(","));
        feats.push('\n');
    }
    write_file(&dir.join(FEATURES_FILE), feats.as_bytes())?;

    if let Some(labels) = g.labels() {
        let mut s = String::with_capacity(labels.len() * 2);
        for l in labels {
            s.push_str(if *l == 1 { "1\n" } else { "0\n" });
        }
        write_file(&dir.join(LABELS_FILE), s.as_bytes())?;
    }
    Ok(())
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency(CsrMatrix);

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &CsrMatrix {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.n_rows()
    }

    pub fn spmm(&self, dense: &Matrix) -> Matrix {
        self.0.spmm(dense)
    }

    pub fn to_dense(&self) -> Matrix {
        self.0.to_dense()
    }
}

pub fn normalize_adjacency(g: &AttributedGraph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let deg: Vec<f64> = (0..n).map(|v| (g.degree(v) + 1) as f64).collect();
    // 1/√(d_u d_v) in one rounding, exact whenever the product is a square
    let weight = |u: usize, v: usize| 1.0 / (deg[u] * deg[v]).sqrt();
    let rows = (0..n)
        .map(|v| {
            let mut row: Vec<(usize, f64)> = g.neighbors(v).iter().map(|&u| (u, weight(v, u))).collect();
            let pos = row.partition_point(|&(u, _)| u < v);
            row.insert(pos, (v, 1.0 / deg[v]));
            row
        })
        .collect();
    NormalizedAdjacency(CsrMatrix::from_rows(n, rows))
}

/// Parameters for [`inject_outliers`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutlierSpec {
    /// Number of injected cliques.
    pub n_struct: usize,
    /// Number of contextual (feature-swapped) outliers.
    pub n_ctx: usize,
    pub clique_size: usize,
    /// Candidates drawn per contextual outlier; the farthest one donates its
    /// features.
    pub swap_pool: usize,
    pub seed: u64,
}

impl Default for OutlierSpec {
    fn default() -> Self {
        OutlierSpec {
            n_struct: 0,
            n_ctx: 0,
            clique_size: 10,
            swap_pool: 50,
            seed: 0,
        }
    }
}

/// Injects structural outliers (fully connected cliques over randomly chosen
/// nodes) and contextual outliers (feature rows replaced by the farthest of
/// `swap_pool` random candidates). Outlier sets are disjoint and labelled 1;
/// all other labels are reset to 0.
pub fn inject_outliers(g: &AttributedGraph, spec: &OutlierSpec) -> Result<AttributedGraph> {
    let n = g.num_nodes();
    if spec.clique_size < 2 {
        return Err(Error::InvalidArgument(format!(
            "clique size {} < 2",
            spec.clique_size
        )));
    }
    let n_struct_nodes = spec
        .n_struct
        .checked_mul(spec.clique_size)
        .ok_or_else(|| Error::InvalidArgument("outlier count overflow".into()))?;
    let total = n_struct_nodes + spec.n_ctx;
    if total > n {
        return Err(Error::InvalidArgument(format!(
            "{} structural + {} contextual outliers exceed {n} nodes",
            n_struct_nodes, spec.n_ctx
        )));
    }
    if spec.n_ctx > 0 && spec.swap_pool == 0 {
        return Err(Error::InvalidArgument("swap pool must be >= 1".into()));
    }
    if total == 0 {
        return g.clone().with_labels(vec![0; n]);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chosen = index::sample(&mut rng, n, total).into_vec();
    let (struct_nodes, ctx_nodes) = chosen.split_at(n_struct_nodes);

    let mut edges = g.edges().to_vec();
    for clique in struct_nodes.chunks(spec.clique_size) {
        for (i, &u) in clique.iter().enumerate() {
            for &v in &clique[i + 1..] {
                edges.push((u, v));
            }
        }
    }

    let original = g.features();
    let mut features = original.clone();
    let pool = spec.swap_pool.min(n);
    for &v in ctx_nodes {
        let candidates = index::sample(&mut rng, n, pool);
        let x = original.row(v);
        let mut best = (f64::NEG_INFINITY, v);
        for c in candidates.iter() {
            let d: f64 = original
                .row(c)
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d > best.0 {
                best = (d, c);
            }
        }
        let donor = original.row(best.1).to_vec();
        features.row_mut(v).copy_from_slice(&donor);
    }

    let mut labels = vec![0u8; n];
    for &v in &chosen {
        labels[v] = 1;
    }
    AttributedGraph::new(features, edges, Some(labels))
}

/// Parameters for a community-structured base graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub nodes: usize,
    pub dim: usize,
    pub communities: usize,
    pub avg_degree: f64,
    /// Fraction of edges drawn inside a community.
    pub intra_fraction: f64,
    /// Standard deviation of community centroids relative to unit feature noise.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            nodes: 1000,
            dim: 16,
            communities: 5,
            avg_degree: 6.0,
            intra_fraction: 0.9,
            separation: 1.5,
            seed: 0,
        }
    }
}

/// An unlabelled planted-partition graph whose node features are noisy copies
/// of per-community centroids.
pub fn synthetic_graph(spec: &SyntheticSpec) -> Result<AttributedGraph> {
    if spec.nodes == 0 || spec.dim == 0 || spec.communities == 0 {
        return Err(Error::InvalidArgument(
            "nodes, dim and communities must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.intra_fraction) || spec.avg_degree < 0.0 {
        return Err(Error::InvalidArgument("bad degree parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.nodes;
    let community: Vec<usize> = (0..n).map(|v| v % spec.communities).collect();
    let mut members = vec![Vec::new(); spec.communities];
    for (v, &c) in community.iter().enumerate() {
        members[c].push(v);
    }

    let centroids = Matrix::from_fn(spec.communities, spec.dim, |_, _| {
        spec.separation * rng.sample::<f64, _>(StandardNormal)
    });
    let features = Matrix::from_fn(n, spec.dim, |v, j| {
        centroids.get(community[v], j) + rng.sample::<f64, _>(StandardNormal)
    });

    let target = ((n as f64 * spec.avg_degree) / 2.0).round() as usize;
    let mut edges = Vec::with_capacity(target);
    if n > 1 {
        for _ in 0..target {
            let u = rng.random_range(0..n);
            let group = &members[community[u]];
            let v = if group.len() > 1 && rng.random::<f64>() < spec.intra_fraction {
                group[rng.random_range(0..group.len())]
            } else {
                rng.random_range(0..n)
            };
            if u != v {
                edges.push((u, v));
            }
        }
    }
    AttributedGraph::new(features, edges, None)
}
