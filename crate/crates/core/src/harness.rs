//! Experiment grid over depths, classifier sizes and seeds, with CSV reports and
//! rank correlation of bounds against empirical gaps.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bounds::{evaluate_bounds, BoundOptions, BoundReport};
use crate::classifier::{margins, select_gamma, train_classifier, MlpTrainConfig};
use crate::encoders::{encode, EncoderConfig, EncoderKind};
use crate::error::{Error, Result};
use crate::graph::{build_normalized_adjacency, derive_seed, load_graph, sample_split, Graph, SbmSpec, SparseMatrix, Split};
use crate::ot::OtOptions;
use crate::spectral::{depth_constants, SpectralSummary};
use crate::stats::spearman;

/// Where the graph comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Manifest(PathBuf),
    Sbm(SbmSpec),
}

impl GraphSource {
    pub fn load(&self) -> Result<Graph<f64>> {
        match self {
            GraphSource::Manifest(p) => load_graph(p),
            GraphSource::Sbm(spec) => spec.generate(),
        }
    }
}

fn default_depths() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32]
}

/// A run matrix. Missing JSON fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub graph: GraphSource,
    pub encoder: EncoderKind,
    pub depths: Vec<usize>,
    pub clf_layers: Vec<usize>,
    pub seeds: Vec<u64>,
    pub train_fraction: f64,
    pub gamma_quantile: f64,
    /// Fixed margin threshold; overrides `gamma_quantile` when set.
    pub gamma: Option<f64>,
    pub percentile: f64,
    pub classwise_percentile: Option<f64>,
    pub permutations: usize,
    pub delta: f64,
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub oracle_labels: bool,
    pub workers: usize,
    pub ot: OtOptions,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            graph: GraphSource::Sbm(SbmSpec {
                blocks: vec![50, 50],
                p_in: 0.1,
                p_out: 0.02,
                feature_dim: 8,
                feature_shift: 1.0,
                seed: 0,
            }),
            encoder: EncoderKind::Sgc,
            depths: default_depths(),
            clf_layers: vec![1, 2, 4],
            seeds: vec![0],
            train_fraction: 0.3,
            gamma_quantile: 0.5,
            gamma: None,
            percentile: 0.9,
            classwise_percentile: None,
            permutations: 4,
            delta: 0.05,
            hidden: 64,
            epochs: 500,
            lr: 0.01,
            oracle_labels: true,
            workers: 1,
            ot: OtOptions::default(),
            output: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.depths.is_empty() {
            return bad("depth list is empty");
        }
        if self.clf_layers.is_empty() {
            return bad("classifier layer list is empty");
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty");
        }
        if let Some(l) = self.clf_layers.iter().find(|l| ![1, 2, 4].contains(*l)) {
            return Err(Error::InvalidArgument(format!("classifier layers must be 1, 2 or 4, got {l}")));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must be in (0, 1)");
        }
        if !(self.gamma_quantile > 0.0 && self.gamma_quantile < 1.0) {
            return bad("gamma_quantile must be in (0, 1)");
        }
        if self.gamma.is_some_and(|g| !(g > 0.0)) {
            return bad("gamma must be positive");
        }
        for p in std::iter::once(self.percentile).chain(self.classwise_percentile) {
            if !(p > 0.0 && p <= 1.0) {
                return bad("percentiles must be in (0, 1]");
            }
        }
        if self.permutations == 0 {
            return bad("permutations must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must be in (0, 1)");
        }
        if self.hidden == 0 {
            return bad("hidden width must be positive");
        }
        Ok(())
    }

    fn bound_options(&self, permutation_seed: u64) -> BoundOptions {
        BoundOptions {
            percentile: self.percentile,
            classwise_percentile: self.classwise_percentile,
            permutations: self.permutations,
            delta: self.delta,
            permutation_seed,
            oracle_labels: self.oracle_labels,
            ot: self.ot.clone(),
        }
    }
}

/// Seeds for one grid point. The split and the sampled permutations depend only on
/// the run seed, so every depth and classifier of a seed sees the same split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub split: u64,
    pub encoder: u64,
    pub classifier: u64,
    pub permutations: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64, depth: usize, clf_layers: usize) -> Self {
        Self {
            split: derive_seed(seed, &[0]),
            encoder: derive_seed(seed, &[1, depth as u64]),
            classifier: derive_seed(seed, &[2, depth as u64, clf_layers as u64]),
            permutations: derive_seed(seed, &[3]),
        }
    }
}

/// One CSV row. Column names and order are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: String,
    pub encoder: EncoderKind,
    pub depth: usize,
    pub clf_layers: usize,
    pub seed: u64,
    pub gamma: f64,
    #[serde(rename = "R_u")]
    pub r_u: f64,
    #[serde(rename = "R_m_gamma")]
    pub r_m_gamma: f64,
    pub gap: f64,
    #[serde(rename = "M_global")]
    pub m_global: f64,
    #[serde(rename = "W_global")]
    pub w_global: f64,
    pub bound_global: f64,
    pub bound_classwise: Option<f64>,
    pub bound_classwise_approx: f64,
    pub eps_delta: f64,
    pub proportion_term: Option<f64>,
    pub rho_perp: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    pub beta: Option<f64>,
    pub vacuous: bool,
    pub degenerate_split_count: usize,
    pub gap_zero_one: f64,
}

pub const REPORT_COLUMNS: [&str; 23] = [
    "run_id",
    "encoder",
    "depth",
    "clf_layers",
    "seed",
    "gamma",
    "R_u",
    "R_m_gamma",
    "gap",
    "M_global",
    "W_global",
    "bound_global",
    "bound_classwise",
    "bound_classwise_approx",
    "eps_delta",
    "proportion_term",
    "rho_perp",
    "C1",
    "C2",
    "beta",
    "vacuous",
    "degenerate_split_count",
    "gap_zero_one",
];

impl ReportRow {
    /// Numeric column by CSV name; `gap` is the margin gap `R_u - R_m_gamma`.
    pub fn field(&self, name: &str) -> Option<f64> {
        Some(match name {
            "gamma" => self.gamma,
            "R_u" => self.r_u,
            "R_m_gamma" => self.r_m_gamma,
            "gap" => self.gap,
            "M_global" => self.m_global,
            "W_global" => self.w_global,
            "bound_global" => self.bound_global,
            "bound_classwise" => self.bound_classwise?,
            "bound_classwise_approx" => self.bound_classwise_approx,
            "eps_delta" => self.eps_delta,
            "proportion_term" => self.proportion_term?,
            "rho_perp" => self.rho_perp,
            "C1" => self.c1,
            "C2" => self.c2,
            "beta" => self.beta?,
            "gap_zero_one" => self.gap_zero_one,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub row: ReportRow,
    pub report: BoundReport,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub run_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct Experiment {
    /// Sorted by `(depth, clf_layers, seed)`.
    pub records: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
}

impl Experiment {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.records.iter().map(|r| r.row.clone()).collect()
    }
}

pub fn run_id(encoder: EncoderKind, depth: usize, clf_layers: usize, seed: u64) -> String {
    format!("{encoder}-d{depth}-l{clf_layers}-s{seed}")
}

struct Shared<'a> {
    g: &'a Graph<f64>,
    adj: &'a SparseMatrix<f64>,
    spectral: &'a SpectralSummary<f64>,
    cfg: &'a RunConfig,
}

/// Runs every `(depth, clf_layers, seed)` grid point. Failing points are collected
/// in [`Experiment::failures`] and the rest of the grid continues.
pub fn run_experiment(cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let g = cfg.graph.load()?;
    run_experiment_on(&g, cfg)
}

pub fn run_experiment_on(g: &Graph<f64>, cfg: &RunConfig) -> Result<Experiment> {
    cfg.validate()?;
    let adj = build_normalized_adjacency(g);
    let spectral = depth_constants(&adj, g.features().view())?;
    let shared = Shared { g, adj: &adj, spectral: &spectral, cfg };

    let mut depths = cfg.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut layers = cfg.clf_layers.clone();
    layers.sort_unstable();
    layers.dedup();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    // one job per (seed, depth): the embeddings are shared by every classifier size
    let jobs: Vec<(u64, usize)> = seeds.iter().flat_map(|&s| depths.iter().map(move |&d| (s, d))).collect();

    let next = AtomicUsize::new(0);
    let sink = Mutex::new(Experiment::default());
    let workers = cfg.workers.clamp(1, jobs.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(seed, depth)) = jobs.get(k) else { break };
                let results = run_job(&shared, seed, depth, &layers);
                let mut out = sink.lock().expect("result sink poisoned");
                for r in results {
                    match r {
                        Ok(rec) => out.records.push(rec),
                        Err(f) => out.failures.push(f),
                    }
                }
            });
        }
    });
    let mut exp = sink.into_inner().expect("result sink poisoned");
    exp.records
        .sort_by_key(|r| (r.row.depth, r.row.clf_layers, r.row.seed));
    exp.failures.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    for f in &exp.failures {
        log::warn!("run {} failed: {}", f.run_id, f.message);
    }
    Ok(exp)
}

fn run_job(sh: &Shared, seed: u64, depth: usize, layers: &[usize]) -> Vec<Result<RunRecord, RunFailure>> {
    let cfg = sh.cfg;
    let fail = |l: usize, e: Error| RunFailure {
        run_id: run_id(cfg.encoder, depth, l, seed),
        message: e.to_string(),
    };
    let base = RunSeeds::derive(seed, depth, 0);
    let prepared = (|| -> Result<_> {
        let split = sample_split(sh.g.num_nodes(), cfg.train_fraction, base.split)?;
        let enc_cfg = EncoderConfig {
            kind: cfg.encoder,
            hidden: cfg.hidden,
            epochs: cfg.epochs,
            lr: cfg.lr,
            seed: base.encoder,
        };
        let enc = encode(sh.g, sh.adj, &split, depth, &enc_cfg)?;
        Ok((split, enc))
    })();
    let (split, enc) = match prepared {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return layers
                .iter()
                .map(|&l| Err(fail(l, Error::InvalidArgument(msg.clone()))))
                .collect();
        }
    };
    layers
        .iter()
        .map(|&l| {
            let start = Instant::now();
            run_point(sh, seed, depth, l, &split, &enc).map_err(|e| fail(l, e)).map(|(row, report)| {
                let wall_time = start.elapsed();
                log::info!("{} done in {:.1?}", row.run_id, wall_time);
                RunRecord { row, report, wall_time }
            })
        })
        .collect()
}

fn run_point(
    sh: &Shared,
    seed: u64,
    depth: usize,
    clf_layers: usize,
    split: &Split,
    enc: &crate::encoders::Encoded<f64>,
) -> Result<(ReportRow, BoundReport)> {
    let cfg = sh.cfg;
    let seeds = RunSeeds::derive(seed, depth, clf_layers);
    let z = enc.embeddings.z.view();
    let labels = sh.g.labels();
    let z_train = z.select(ndarray::Axis(0), &split.train);
    let y_train: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let clf_cfg = MlpTrainConfig {
        layers: clf_layers,
        hidden: cfg.hidden,
        epochs: cfg.epochs,
        lr: cfg.lr,
        seed: seeds.classifier,
    };
    let clf = train_classifier(z_train.view(), &y_train, sh.g.num_classes(), &clf_cfg)?;
    let table = margins(&clf, z, labels)?;
    let gamma = match cfg.gamma {
        Some(g) => g,
        None => select_gamma(&table, split, cfg.gamma_quantile)?,
    };
    let report = evaluate_bounds(z, &table, labels, split, gamma, &cfg.bound_options(seeds.permutations))?;
    let row = ReportRow {
        run_id: run_id(cfg.encoder, depth, clf_layers, seed),
        encoder: cfg.encoder,
        depth,
        clf_layers,
        seed,
        gamma,
        r_u: report.r_u,
        r_m_gamma: report.r_m_gamma,
        gap: report.empirical_gap,
        m_global: report.m_global,
        w_global: report.w_global,
        bound_global: report.bound_global,
        bound_classwise: report.bound_classwise,
        bound_classwise_approx: report.bound_classwise_approx,
        eps_delta: report.eps_delta,
        proportion_term: report.proportion_term,
        rho_perp: sh.spectral.rho_perp,
        c1: sh.spectral.c1,
        c2: sh.spectral.c2,
        beta: enc.beta,
        vacuous: report.vacuous,
        degenerate_split_count: report.degenerate_split_count,
        gap_zero_one: report.gap_zero_one,
    };
    Ok((row, report))
}

/// Spearman correlation of a bound column against the gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub field: String,
    /// `None` when either side is constant.
    pub rho: Option<f64>,
    pub used: usize,
    /// Rows dropped because the bound was missing or not finite.
    pub excluded: usize,
}

pub fn correlate(rows: &[ReportRow], bound_field: &str) -> Result<Correlation> {
    if !REPORT_COLUMNS.contains(&bound_field) || !is_numeric(bound_field) {
        return Err(Error::InvalidArgument(format!("unknown numeric column {bound_field:?}")));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut excluded = 0;
    for r in rows {
        match (r.field(bound_field), r.gap) {
            (Some(b), gap) if b.is_finite() && gap.is_finite() => {
                xs.push(b);
                ys.push(gap);
            }
            _ => excluded += 1,
        }
    }
    if excluded > 0 {
        log::info!("{bound_field}: excluded {excluded} rows with missing or non-finite values");
    }
    if xs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{bound_field}: fewer than two usable rows ({} usable, {excluded} excluded)",
            xs.len()
        )));
    }
    Ok(Correlation {
        field: bound_field.to_string(),
        rho: spearman(&xs, &ys),
        used: xs.len(),
        excluded,
    })
}

fn is_numeric(name: &str) -> bool {
    !matches!(name, "run_id" | "encoder" | "depth" | "clf_layers" | "seed" | "vacuous" | "degenerate_split_count")
}

/// Writes the CSV report and a `<stem>.config.json` sidecar holding `cfg`. Returns the sidecar path.
pub fn emit_report(rows: &[ReportRow], path: &Path, cfg: &RunConfig) -> Result<PathBuf> {
    write_rows(rows, path)?;
    let sidecar = path.with_extension("config.json");
    let json = serde_json::to_string_pretty(cfg)?;
    std::fs::write(&sidecar, json + "\n").map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}

pub fn write_rows(rows: &[ReportRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_rows_to(rows, file)
}

pub fn write_rows_to<W: std::io::Write>(rows: &[ReportRow], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(REPORT_COLUMNS)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ReportRow>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_rows_from(file)
}

pub fn read_rows_from<R: std::io::Read>(r: R) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(REPORT_COLUMNS.iter().copied()) {
        return Err(Error::InvalidArgument(format!("unexpected CSV header: {headers:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(i: usize, bound: f64, gap: f64) -> ReportRow {
        ReportRow {
            run_id: format!("r{i}"),
            encoder: EncoderKind::Sgc,
            depth: i,
            clf_layers: 1,
            seed: 0,
            gamma: 0.5,
            r_u: 0.1,
            r_m_gamma: 0.05,
            gap,
            m_global: 1.0,
            w_global: 0.2,
            bound_global: bound,
            bound_classwise: None,
            bound_classwise_approx: 0.3,
            eps_delta: 0.1,
            proportion_term: Some(0.01),
            rho_perp: 0.9,
            c1: 1.0,
            c2: 2.0,
            beta: None,
            vacuous: bound.is_infinite(),
            degenerate_split_count: 0,
            gap_zero_one: 0.05,
        }
    }

    #[test]
    fn header_only_and_round_trip() {
        let mut buf = Vec::new();
        write_rows_to(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), REPORT_COLUMNS.join(",") + "\n");
        assert!(read_rows_from(buf.as_slice()).unwrap().is_empty());

        let rows = vec![row(1, 0.1 + 0.2, 1e-7), row(2, f64::INFINITY, -0.25)];
        let mut buf = Vec::new();
        write_rows_to(&rows, &mut buf).unwrap();
        let back = read_rows_from(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn correlation_filters_vacuous() {
        let mut rows: Vec<_> = (0..18).map(|i| row(i, i as f64, i as f64 * 0.1)).collect();
        rows[5].bound_global = f64::INFINITY;
        let c = correlate(&rows, "bound_global").unwrap();
        assert_eq!((c.used, c.excluded), (17, 1));
        assert_eq!(c.rho, Some(1.0));
        assert_eq!(correlate(&rows, "gap").unwrap().rho, Some(1.0));
        assert!(correlate(&rows, "bound_classwise").is_err());
        assert!(correlate(&rows, "nope").is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        assert!(RunConfig { seeds: vec![], ..Default::default() }.validate().is_err());
        assert!(RunConfig { clf_layers: vec![3], ..Default::default() }.validate().is_err());
        assert!(RunConfig { train_fraction: 1.0, ..Default::default() }.validate().is_err());
        let json = r#"{"graph": {"manifest": "data/cora.json"}, "depths": [1, 2]}"#;
        let cfg: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.graph, GraphSource::Manifest("data/cora.json".into()));
        assert_eq!(cfg.permutations, 4);
    }

    #[test]
    fn small_grid_runs() {
        let cfg = RunConfig {
            graph: GraphSource::Sbm(SbmSpec {
                blocks: vec![15, 15],
                p_in: 0.3,
                p_out: 0.05,
                feature_dim: 4,
                feature_shift: 1.5,
                seed: 2,
            }),
            depths: vec![2, 1],
            clf_layers: vec![1, 2],
            seeds: vec![5],
            epochs: 50,
            ..Default::default()
        };
        let exp = run_experiment(&cfg).unwrap();
        assert!(exp.failures.is_empty(), "{:?}", exp.failures);
        let ids: Vec<_> = exp.records.iter().map(|r| r.row.run_id.as_str()).collect();
        assert_eq!(ids, ["sgc-d1-l1-s5", "sgc-d1-l2-s5", "sgc-d2-l1-s5", "sgc-d2-l2-s5"]);
        let again = run_experiment(&RunConfig { depths: vec![1, 2], clf_layers: vec![2, 1], ..cfg }).unwrap();
        assert_eq!(again.rows(), exp.rows());
    }
}
