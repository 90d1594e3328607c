//! Experiment sweeps over (m, k, G, seed) cells.
//!
//! A sweep fits one basis at the largest requested `k`, crops it once per
//! port count `m`, and truncates per cell. Each cell measures a stratified
//! training subsample and the test split, trains the one-vs-one RBF SVM on
//! the noisy training coefficients and scores it on the noisy test
//! coefficients. All randomness in a cell derives from the cell seed, so the
//! output is a pure function of the spec.
//!
//! # Spec file
//!
//! Flat `key = value` lines; `#` starts a comment; lists are comma
//! separated.
//!
//! ```text
//! dataset    = mnist            # mnist | cifar10
//! data_dir   = data/mnist
//! k          = 1, 2, 5, 10, 15, 20, 30, 50
//! m          = full             # port counts, or "full"
//! g          = 1, 10, inf       # squeezing gains; "inf" is noiseless
//! n_s        = 10
//! seeds      = 1, 2, 3
//! classifier = svm              # svm | export-only
//! subsample  = 10000            # training images per cell (0 = all)
//! test_limit = 0                # test images per cell (0 = all)
//! convention = quadrature       # quadrature | realpart
//! c          = 1.0
//! tol        = 0.001
//! max_passes = 200
//! split_seed = 0
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use crate::dataset::{self, stratified_subsample, DatasetKind, DatasetSplit, ImageRecord};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::pca::{fit_pca, PcaBasis};
use crate::quantum::{measure_records, Gain, NoiseConvention, PortCount, SensingConfig};
use crate::recon::export_for_neural;
use crate::svm::{accuracy, gamma_scale, train_multiclass_with_classes, SvmParams};

const RESULTS_FILE: &str = "results.csv";
const TIMINGS_FILE: &str = "timings.csv";
const PARTIAL_FILE: &str = "partial.csv";
const RESULT_COLUMNS: &str = "dataset,k,m,G,n_S,seed,metric,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classifier {
    Svm,
    ExportOnly,
}

impl fmt::Display for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classifier::Svm => "svm",
            Classifier::ExportOnly => "export-only",
        })
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "svm" => Ok(Classifier::Svm),
            "export-only" | "export_only" => Ok(Classifier::ExportOnly),
            other => Err(Error::Parameter(format!("unknown classifier '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub k_values: Vec<usize>,
    pub m_values: Vec<PortCount>,
    pub gains: Vec<Gain>,
    pub n_s: f64,
    pub seeds: Vec<u64>,
    pub classifier: Classifier,
    /// Training images per cell; 0 keeps the whole training split.
    pub subsample: usize,
    /// Test images per cell; 0 keeps the whole test split.
    pub test_limit: usize,
    pub convention: NoiseConvention,
    pub c: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub split_seed: u64,
}

impl SweepSpec {
    pub fn new(dataset: DatasetKind, k_values: Vec<usize>, gains: Vec<Gain>, n_s: f64) -> Self {
        Self {
            dataset,
            data_dir: None,
            k_values,
            m_values: vec![PortCount::Full],
            gains,
            n_s,
            seeds: vec![1, 2, 3],
            classifier: Classifier::Svm,
            subsample: 10_000,
            test_limit: 0,
            convention: NoiseConvention::Quadrature,
            c: 1.0,
            tol: 1e-3,
            max_passes: 200,
            split_seed: 0,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Spec {
                line: no + 1,
                message: format!("expected 'key = value', found '{line}'"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            if kv
                .insert(key.clone(), (no + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::Spec {
                    line: no + 1,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }

        fn field<T: FromStr>(
            kv: &BTreeMap<String, (usize, String)>,
            key: &str,
        ) -> Result<Option<T>> {
            kv.get(key)
                .map(|(line, v)| {
                    v.parse::<T>().map_err(|_| Error::Spec {
                        line: *line,
                        message: format!("invalid value '{v}' for '{key}'"),
                    })
                })
                .transpose()
        }
        fn list<T: FromStr>(
            kv: &BTreeMap<String, (usize, String)>,
            key: &str,
        ) -> Result<Option<Vec<T>>> {
            kv.get(key)
                .map(|(line, v)| {
                    v.split(',')
                        .map(|item| {
                            item.trim().parse::<T>().map_err(|_| Error::Spec {
                                line: *line,
                                message: format!("invalid list item '{}' for '{key}'", item.trim()),
                            })
                        })
                        .collect()
                })
                .transpose()
        }
        let required = |key: &str| Error::Spec {
            line: 0,
            message: format!("missing required key '{key}'"),
        };

        const KNOWN: &[&str] = &[
            "dataset",
            "data_dir",
            "k",
            "m",
            "g",
            "n_s",
            "seeds",
            "classifier",
            "subsample",
            "test_limit",
            "convention",
            "c",
            "tol",
            "max_passes",
            "split_seed",
        ];
        if let Some((key, (line, _))) = kv.iter().find(|(k, _)| !KNOWN.contains(&k.as_str())) {
            return Err(Error::Spec {
                line: *line,
                message: format!("unknown key '{key}'"),
            });
        }

        let mut spec = SweepSpec::new(
            field(&kv, "dataset")?.ok_or_else(|| required("dataset"))?,
            list(&kv, "k")?.ok_or_else(|| required("k"))?,
            list(&kv, "g")?.ok_or_else(|| required("g"))?,
            field(&kv, "n_s")?.ok_or_else(|| required("n_s"))?,
        );
        spec.data_dir = field::<String>(&kv, "data_dir")?.map(PathBuf::from);
        if let Some(m) = list(&kv, "m")? {
            spec.m_values = m;
        }
        if let Some(s) = list(&kv, "seeds")? {
            spec.seeds = s;
        }
        if let Some(c) = field(&kv, "classifier")? {
            spec.classifier = c;
        }
        if let Some(v) = field(&kv, "subsample")? {
            spec.subsample = v;
        }
        if let Some(v) = field(&kv, "test_limit")? {
            spec.test_limit = v;
        }
        if let Some(v) = field(&kv, "convention")? {
            spec.convention = v;
        }
        if let Some(v) = field(&kv, "c")? {
            spec.c = v;
        }
        if let Some(v) = field(&kv, "tol")? {
            spec.tol = v;
        }
        if let Some(v) = field(&kv, "max_passes")? {
            spec.max_passes = v;
        }
        if let Some(v) = field(&kv, "split_seed")? {
            spec.split_seed = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dataset.dim();
        let bad = |message: String| Err(Error::Spec { line: 0, message });
        if self.k_values.is_empty()
            || self.m_values.is_empty()
            || self.gains.is_empty()
            || self.seeds.is_empty()
        {
            return bad("k, m, g and seeds must be non-empty".into());
        }
        if let Some(k) = self.k_values.iter().find(|&&k| k == 0 || k > d) {
            return bad(format!("k = {k} outside 1..={d}"));
        }
        if let Some(m) = self
            .m_values
            .iter()
            .find(|m| m.resolve(d) == 0 || m.resolve(d) > d)
        {
            return bad(format!("m = {m} outside 1..={d}"));
        }
        if !(self.n_s >= 0.0) || !self.n_s.is_finite() {
            return bad(format!("invalid n_s {}", self.n_s));
        }
        for g in &self.gains {
            g.validate()?;
        }
        Ok(())
    }

    /// Canonical rendering; comments and key order in the source file do
    /// not affect it.
    pub fn canonical(&self) -> String {
        let join = |items: Vec<String>| items.join(", ");
        let mut s = String::new();
        s += &format!("dataset = {}\n", self.dataset);
        if let Some(dir) = &self.data_dir {
            s += &format!("data_dir = {}\n", dir.display());
        }
        s += &format!(
            "k = {}\n",
            join(self.k_values.iter().map(|v| v.to_string()).collect())
        );
        s += &format!(
            "m = {}\n",
            join(self.m_values.iter().map(|v| v.to_string()).collect())
        );
        s += &format!(
            "g = {}\n",
            join(self.gains.iter().map(|v| v.to_string()).collect())
        );
        s += &format!("n_s = {:?}\n", self.n_s);
        s += &format!(
            "seeds = {}\n",
            join(self.seeds.iter().map(|v| v.to_string()).collect())
        );
        s += &format!("classifier = {}\n", self.classifier);
        s += &format!("subsample = {}\n", self.subsample);
        s += &format!("test_limit = {}\n", self.test_limit);
        s += &format!("convention = {}\n", self.convention);
        s += &format!("c = {:?}\n", self.c);
        s += &format!("tol = {:?}\n", self.tol);
        s += &format!("max_passes = {}\n", self.max_passes);
        s += &format!("split_seed = {}\n", self.split_seed);
        s
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.canonical().as_bytes())[..16].to_string()
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &m in &self.m_values {
            for &k in &self.k_values {
                for &gain in &self.gains {
                    for &seed in &self.seeds {
                        cells.push(Cell { k, m, gain, seed });
                    }
                }
            }
        }
        cells
    }

    /// Read the dataset directory named by `data_dir` and split it.
    pub fn load_data(&self) -> Result<DatasetSplit> {
        let dir = self
            .data_dir
            .as_ref()
            .ok_or_else(|| Error::Parameter("spec has no data_dir".into()))?;
        dataset::ingest(self.dataset, dir, self.n_s, self.split_seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub k: usize,
    pub m: PortCount,
    pub gain: Gain,
    pub seed: u64,
}

impl Cell {
    fn key(&self) -> String {
        format!(
            "k={},m={},G={},seed={}",
            self.k, self.m, self.gain, self.seed
        )
    }

    fn wrap(&self, e: Error) -> Error {
        Error::Cell {
            k: self.k,
            m: self.m.to_string(),
            gain: self.gain.to_string(),
            seed: self.seed,
            source: Box::new(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub dataset: DatasetKind,
    pub k: usize,
    pub m: PortCount,
    pub gain: Gain,
    pub n_s: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
    pub wall_time_s: f64,
}

impl SweepRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{:?},{},{},{:?}",
            self.dataset, self.k, self.m, self.gain, self.n_s, self.seed, self.metric, self.value
        )
    }

    fn parse_line(line: &str, wall_time_s: f64) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(Error::Format(format!(
                "result row has {} fields: '{line}'",
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad number '{s}' in result row")))
        };
        Ok(Self {
            dataset: f[0].parse()?,
            k: f[1]
                .parse()
                .map_err(|_| Error::Format(format!("bad k '{}'", f[1])))?,
            m: f[2].parse()?,
            gain: f[3].parse()?,
            n_s: num(f[4])?,
            seed: f[5]
                .parse()
                .map_err(|_| Error::Format(format!("bad seed '{}'", f[5])))?,
            metric: f[6].to_string(),
            value: num(f[7])?,
            wall_time_s,
        })
    }

    fn cell(&self) -> Cell {
        Cell {
            k: self.k,
            m: self.m,
            gain: self.gain,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec_digest: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Deterministic results table; wall times live in a separate file.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# spec_digest={}\n{RESULT_COLUMNS}\n", self.spec_digest);
        for r in &self.rows {
            s += &r.csv_line();
            s.push('\n');
        }
        s
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("dataset,k,m,G,seed,wall_time_s\n");
        let mut last: Option<String> = None;
        for r in &self.rows {
            let key = r.cell().key();
            if last.as_deref() != Some(&key) {
                s += &format!(
                    "{},{},{},{},{},{:.3}\n",
                    r.dataset, r.k, r.m, r.gain, r.seed, r.wall_time_s
                );
                last = Some(key);
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut spec_digest = String::new();
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(d) = rest.trim().strip_prefix("spec_digest=") {
                    spec_digest = d.to_string();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !header_seen {
                if line != RESULT_COLUMNS {
                    return Err(Error::Format(format!("unexpected results header '{line}'")));
                }
                header_seen = true;
                continue;
            }
            rows.push(SweepRow::parse_line(line, 0.0)?);
        }
        Ok(Self { spec_digest, rows })
    }

    pub fn values(&self, metric: &str, k: usize, m: PortCount, gain: Gain) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.metric == metric && r.k == k && r.m == m && r.gain == gain)
            .map(|r| r.value)
            .collect()
    }

    pub fn mean(&self, metric: &str, k: usize, m: PortCount, gain: Gain) -> Option<f64> {
        let v = self.values(metric, k, m, gain);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Mix a seed with a domain tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SUBSAMPLE_TAG: u64 = 0x5355_4253;

#[derive(Debug, Default)]
pub struct RunOptions<'a> {
    /// Output directory for resume markers and exported measurements.
    pub out_dir: Option<&'a Path>,
    /// A basis already fit on the training split with at least max(k) components.
    pub basis: Option<&'a PcaBasis>,
}

/// Run every cell of `spec` against an ingested split.
pub fn run_sweep(
    spec: &SweepSpec,
    split: &DatasetSplit,
    opts: &RunOptions<'_>,
) -> Result<SweepResult> {
    spec.validate()?;
    let digest = spec.digest();
    let d = split
        .train
        .first()
        .map(ImageRecord::dim)
        .ok_or_else(|| Error::Data("empty training split".into()))?;
    if d != spec.dataset.dim() {
        return Err(Error::Dimension(format!(
            "split has dimension {d}, {} expects {}",
            spec.dataset,
            spec.dataset.dim()
        )));
    }
    let k_max = *spec.k_values.iter().max().expect("validated non-empty");

    let fitted;
    let full = match opts.basis {
        Some(b) if b.k() >= k_max && !b.is_cropped() => b,
        Some(_) => {
            return Err(Error::Parameter(format!(
                "cached basis must be uncropped with at least {k_max} components"
            )))
        }
        None => {
            fitted = fit_pca(&split.train, k_max)?;
            &fitted
        }
    };
    let full = full.truncate(k_max)?;

    let mut done: HashMap<String, Vec<SweepRow>> = HashMap::new();
    let partial_path = opts.out_dir.map(|dir| dir.join(PARTIAL_FILE));
    if let Some(path) = &partial_path {
        done = read_partial(path, &digest)?;
        if done.is_empty() {
            fs::write(path, format!("# spec_digest={digest}\n"))?;
        } else {
            log::info!("resuming sweep: {} cells already complete", done.len());
        }
    }

    let test: &[ImageRecord] = if spec.test_limit > 0 && spec.test_limit < split.test.len() {
        &split.test[..spec.test_limit]
    } else {
        &split.test
    };
    let train_labels: Vec<u8> = split.train.iter().map(|r| r.label).collect();

    let mut cropped: HashMap<usize, PcaBasis> = HashMap::new();
    let mut rows = Vec::new();
    for cell in spec.cells() {
        if let Some(prev) = done.remove(&cell.key()) {
            rows.extend(prev);
            continue;
        }
        let m = cell.m.resolve(d);
        if !cropped.contains_key(&m) {
            let b = if m >= d { full.clone() } else { full.crop(m)? };
            cropped.insert(m, b);
        }
        let started = Instant::now();
        let metrics = run_cell(
            spec,
            &cell,
            &cropped[&m],
            &full,
            split,
            test,
            &train_labels,
            opts,
        )
        .map_err(|e| cell.wrap(e))?;
        let wall_time_s = started.elapsed().as_secs_f64();
        log::info!("cell {} done in {wall_time_s:.1}s: {metrics:?}", cell.key());

        let cell_rows: Vec<SweepRow> = metrics
            .into_iter()
            .map(|(metric, value)| SweepRow {
                dataset: spec.dataset,
                k: cell.k,
                m: cell.m,
                gain: cell.gain,
                n_s: spec.n_s,
                seed: cell.seed,
                metric: metric.to_string(),
                value,
                wall_time_s,
            })
            .collect();
        if let Some(path) = &partial_path {
            append_partial(path, &cell, &cell_rows)?;
        }
        rows.extend(cell_rows);
    }

    let result = SweepResult {
        spec_digest: digest,
        rows,
    };
    if let Some(dir) = opts.out_dir {
        fs::write(dir.join(RESULTS_FILE), result.to_csv())?;
        fs::write(dir.join(TIMINGS_FILE), result.timings_csv())?;
        if let Some(path) = &partial_path {
            fs::remove_file(path)?;
        }
    }
    Ok(result)
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    spec: &SweepSpec,
    cell: &Cell,
    cropped: &PcaBasis,
    full: &PcaBasis,
    split: &DatasetSplit,
    test: &[ImageRecord],
    train_labels: &[u8],
    opts: &RunOptions<'_>,
) -> Result<Vec<(&'static str, f64)>> {
    let basis = cropped.truncate(cell.k)?;
    let config = SensingConfig {
        k: cell.k,
        m: cell.m,
        gain: cell.gain,
        n_s: spec.n_s,
        convention: spec.convention,
        seed: cell.seed,
    };
    let picked = if spec.subsample == 0 {
        (0..split.train.len()).collect()
    } else {
        stratified_subsample(
            train_labels,
            spec.subsample,
            derive_seed(cell.seed, SUBSAMPLE_TAG),
        )
    };
    let train: Vec<ImageRecord> = picked.iter().map(|&i| split.train[i].clone()).collect();

    let train_set = measure_records(&basis, &train, &config)?;
    let test_set = measure_records(&basis, test, &config)?;
    let explained = full.explained_variance(cell.k)?;

    match spec.classifier {
        Classifier::Svm => {
            let gamma = gamma_scale(&train_set.features)?;
            let params = SvmParams {
                c: spec.c,
                tol: spec.tol,
                max_passes: spec.max_passes,
                ..SvmParams::new(gamma)
            };
            let classes: Vec<u8> = (0..dataset::NUM_CLASSES).collect();
            let model = train_multiclass_with_classes(
                &train_set.features,
                &train_set.labels,
                &classes,
                &params,
            )?;
            let predicted = model.predict_batch(&test_set.features)?;
            Ok(vec![
                ("accuracy", accuracy(&predicted, &test_set.labels)),
                ("explained_variance", explained),
                ("gamma", gamma),
                ("support_vectors", model.support_vector_count() as f64),
            ])
        }
        Classifier::ExportOnly => {
            let dir = opts
                .out_dir
                .ok_or_else(|| {
                    Error::Parameter("export-only sweeps need an output directory".into())
                })?
                .join("cells")
                .join(format!(
                    "k{}_m{}_G{}_s{}",
                    cell.k, cell.m, cell.gain, cell.seed
                ));
            fs::create_dir_all(&dir)?;
            export_for_neural(
                &train_set,
                &train,
                &dir.join("train.measure"),
                &dir.join("train.truth"),
            )?;
            export_for_neural(
                &test_set,
                test,
                &dir.join("test.measure"),
                &dir.join("test.truth"),
            )?;
            Ok(vec![
                ("exported_train", train_set.len() as f64),
                ("exported_test", test_set.len() as f64),
                ("explained_variance", explained),
            ])
        }
    }
}

fn read_partial(path: &Path, digest: &str) -> Result<HashMap<String, Vec<SweepRow>>> {
    let mut done = HashMap::new();
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(done);
    };
    let mut lines = text.lines();
    if lines.next() != Some(&format!("# spec_digest={digest}")) {
        log::warn!("ignoring {} written for a different spec", path.display());
        return Ok(done);
    }
    let mut pending = Vec::new();
    for line in lines {
        if let Some(key) = line.strip_prefix("# done ") {
            done.insert(key.to_string(), std::mem::take(&mut pending));
        } else if let Some((row, wall)) = line.rsplit_once(',') {
            let wall: f64 = wall.parse().unwrap_or(0.0);
            pending.push(SweepRow::parse_line(row, wall)?);
        }
    }
    Ok(done)
}

fn append_partial(path: &Path, cell: &Cell, rows: &[SweepRow]) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text += &format!("{},{:?}\n", r.csv_line(), r.wall_time_s);
    }
    text += &format!("# done {}\n", cell.key());
    let mut f = OpenOptions::new().append(true).open(path)?;
    f.write_all(text.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    K,
    M,
    G,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "k" => Ok(Axis::K),
            "m" => Ok(Axis::M),
            "g" => Ok(Axis::G),
            other => Err(Error::Axis(format!("unknown axis '{other}'"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::K => "k",
            Axis::M => "m",
            Axis::G => "g",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub x: String,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// One curve: a metric along an axis with every other coordinate fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub metric: String,
    pub series: String,
    pub points: Vec<CurvePoint>,
}

fn axis_value(row: &SweepRow, axis: Axis) -> (f64, String) {
    match axis {
        Axis::K => (row.k as f64, row.k.to_string()),
        Axis::M => match row.m {
            PortCount::Full => (f64::INFINITY, "full".into()),
            PortCount::Ports(m) => (m as f64, m.to_string()),
        },
        Axis::G => (row.gain.order_key(), row.gain.to_string()),
    }
}

fn series_label(row: &SweepRow, axis: Axis) -> String {
    let mut parts = Vec::new();
    if axis != Axis::M {
        parts.push(format!("m={}", row.m));
    }
    if axis != Axis::K {
        parts.push(format!("k={}", row.k));
    }
    if axis != Axis::G {
        parts.push(format!("G={}", row.gain));
    }
    parts.join(";")
}

/// Seed-averaged curves along `axis`, one series per remaining coordinate
/// combination (in particular one per gain for the k and m axes).
pub fn emit_curves(result: &SweepResult, axis: Axis) -> Result<Vec<CurveSeries>> {
    let mut distinct: Vec<(f64, String)> =
        result.rows.iter().map(|r| axis_value(r, axis)).collect();
    distinct.sort_by(|a, b| a.0.total_cmp(&b.0));
    distinct.dedup_by(|a, b| a.1 == b.1);
    if distinct.len() < 2 {
        return Err(Error::Axis(format!(
            "axis {axis} has {} distinct value(s); need at least 2",
            distinct.len()
        )));
    }

    // (metric, series) -> axis label -> (order key, values)
    let mut groups: BTreeMap<(String, String), BTreeMap<String, (f64, Vec<f64>)>> = BTreeMap::new();
    let mut series_order: Vec<(String, String)> = Vec::new();
    for row in &result.rows {
        let key = (row.metric.clone(), series_label(row, axis));
        if !groups.contains_key(&key) {
            series_order.push(key.clone());
        }
        let (order, label) = axis_value(row, axis);
        groups
            .entry(key)
            .or_default()
            .entry(label)
            .or_insert((order, Vec::new()))
            .1
            .push(row.value);
    }

    Ok(series_order
        .into_iter()
        .map(|key| {
            let mut points: Vec<(f64, CurvePoint)> = groups[&key]
                .iter()
                .map(|(label, (order, values))| {
                    let n = values.len();
                    let mean = values.iter().sum::<f64>() / n as f64;
                    let stderr = if n > 1 {
                        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                            / (n - 1) as f64;
                        (var / n as f64).sqrt()
                    } else {
                        0.0
                    };
                    (
                        *order,
                        CurvePoint {
                            x: label.clone(),
                            mean,
                            stderr,
                            n,
                        },
                    )
                })
                .collect();
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            CurveSeries {
                metric: key.0,
                series: key.1,
                points: points.into_iter().map(|p| p.1).collect(),
            }
        })
        .collect())
}

pub fn curves_csv(curves: &[CurveSeries], axis: Axis) -> String {
    let mut s = format!("metric,series,{axis},mean,stderr,n\n");
    for c in curves {
        for p in &c.points {
            s += &format!(
                "{},{},{},{:?},{:?},{}\n",
                c.metric, c.series, p.x, p.mean, p.stderr, p.n
            );
        }
    }
    s
}

/// Write `curves_<axis>.csv` into `out_dir`.
pub fn write_curves(result: &SweepResult, axis: Axis, out_dir: &Path) -> Result<PathBuf> {
    let curves = emit_curves(result, axis)?;
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join(format!("curves_{axis}.csv"));
    fs::write(&path, curves_csv(&curves, axis))?;
    Ok(path)
}

pub fn read_results(dir: &Path) -> Result<SweepResult> {
    SweepResult::from_csv(&fs::read_to_string(dir.join(RESULTS_FILE))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = "\
# k sweep
dataset = mnist
data_dir = data/mnist
k = 1, 20, 30
m = full, 100
g = 1, 10, inf   # classical, quantum, noiseless
n_s = 10
";

    #[test]
    fn parse_spec_with_defaults() {
        let spec = SweepSpec::parse(SPEC).unwrap();
        assert_eq!(spec.k_values, vec![1, 20, 30]);
        assert_eq!(spec.m_values, vec![PortCount::Full, PortCount::Ports(100)]);
        assert_eq!(
            spec.gains,
            vec![Gain::Finite(1.0), Gain::Finite(10.0), Gain::Infinite]
        );
        assert_eq!(spec.seeds, vec![1, 2, 3]);
        assert_eq!(spec.subsample, 10_000);
        assert_eq!(spec.classifier, Classifier::Svm);
        assert_eq!(spec.cells().len(), 3 * 2 * 3 * 3);
        assert_eq!(SweepSpec::parse(&spec.canonical()).unwrap(), spec);
    }

    #[test]
    fn spec_errors() {
        assert!(matches!(
            SweepSpec::parse("dataset = mnist\n"),
            Err(Error::Spec { .. })
        ));
        let bad = SPEC.replace("k = 1, 20, 30", "k = 1, 900");
        assert!(SweepSpec::parse(&bad).is_err());
        let bad = format!("{SPEC}colour = blue\n");
        assert!(matches!(
            SweepSpec::parse(&bad),
            Err(Error::Spec { line: 8, .. })
        ));
        let bad = format!("{SPEC}n_s = 3\n");
        assert!(SweepSpec::parse(&bad).is_err());
        let bad = SPEC.replace("g = 1, 10", "g = 0.5, 10");
        assert!(SweepSpec::parse(&bad).is_err());
    }

    fn row(k: usize, gain: Gain, seed: u64, value: f64) -> SweepRow {
        SweepRow {
            dataset: DatasetKind::Mnist,
            k,
            m: PortCount::Full,
            gain,
            n_s: 10.0,
            seed,
            metric: "accuracy".into(),
            value,
            wall_time_s: 1.5,
        }
    }

    #[test]
    fn curves_average_over_seeds() {
        let result = SweepResult {
            spec_digest: "x".into(),
            rows: vec![
                row(5, Gain::Finite(1.0), 1, 0.5),
                row(5, Gain::Finite(1.0), 2, 0.7),
                row(2, Gain::Finite(1.0), 1, 0.25),
                row(5, Gain::Infinite, 1, 0.9),
                row(2, Gain::Infinite, 1, 0.8),
            ],
        };
        let curves = emit_curves(&result, Axis::K).unwrap();
        assert_eq!(curves.len(), 2);
        let c = &curves[0];
        assert_eq!(c.series, "m=full;G=1");
        assert_eq!(c.points[0].x, "2");
        assert_eq!(c.points[0].stderr, 0.0);
        assert_eq!(c.points[1].mean, (0.5 + 0.7) / 2.0);
        assert!((c.points[1].stderr - 0.1).abs() < 1e-12);

        let g = emit_curves(&result, Axis::G).unwrap();
        assert_eq!(g[0].points.last().unwrap().x, "inf");
        assert!(matches!(emit_curves(&result, Axis::M), Err(Error::Axis(_))));
    }

    #[test]
    fn results_csv_roundtrip() {
        let result = SweepResult {
            spec_digest: "abc".into(),
            rows: vec![
                row(5, Gain::Finite(10.0), 1, 0.123_456_789),
                row(5, Gain::Infinite, 1, 1e-7),
            ],
        };
        let text = result.to_csv();
        assert!(text.starts_with("# spec_digest=abc\n"));
        let back = SweepResult::from_csv(&text).unwrap();
        assert_eq!(back.rows.len(), 2);
        assert_eq!(back.rows[0].value, 0.123_456_789);
        assert_eq!(back.rows[1].gain, Gain::Infinite);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, SUBSAMPLE_TAG), derive_seed(2, SUBSAMPLE_TAG));
        assert_ne!(derive_seed(1, SUBSAMPLE_TAG), 1);
    }
}
