//! Chunked observation streams and simulation benchmarks.
//!
//! Files are delimited text with one observation per row; the reader
//! materializes `chunk_size` rows at a time, so the working set is
//! `O(chunk_size * p)` regardless of the total row count. In-memory data
//! goes through the same chunking so a file-backed fit and a memory-backed
//! fit see identical chunk boundaries (and therefore identical shuffle
//! orders) for the same configuration.
//!
//! Random number use is split by stream so draws never interleave:
//! simulators draw from stream [`STREAM_SIMULATE`], the fit loop's shuffles
//! from stream [`STREAM_SHUFFLE`]. The generator is ChaCha8 seeded with the
//! user seed, so every output is reproducible from `(seed, parameters)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Observation;

/// RNG stream id for data simulation.
pub const STREAM_SIMULATE: u64 = 1;
/// RNG stream id for within-chunk shuffling.
pub const STREAM_SHUFFLE: u64 = 2;

/// Generator used by the simulators.
pub fn simulation_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SIMULATE);
    rng
}

/// Generator used by the fit loop for shuffling.
pub fn shuffle_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_SHUFFLE);
    rng
}

/// Which column holds the outcome. `None` reads every column as a
/// covariate with the outcome fixed at zero, for prediction-only inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    Index(usize),
    None,
}

#[derive(Debug)]
enum DataOrigin {
    File(PathBuf),
    Memory(Vec<Observation>),
}

/// A re-openable source of observation chunks.
#[derive(Debug)]
pub struct StreamSource {
    origin: DataOrigin,
    chunk_size: usize,
    has_header: bool,
    response: ResponseColumn,
    delimiter: u8,
    high_water: AtomicUsize,
}

pub const DEFAULT_CHUNK_SIZE: usize = 10_000;

impl StreamSource {
    /// Headered, comma-delimited file with the outcome selected by
    /// `response`.
    pub fn file(path: impl Into<PathBuf>, response: ResponseColumn) -> Self {
        Self {
            origin: DataOrigin::File(path.into()),
            chunk_size: DEFAULT_CHUNK_SIZE,
            has_header: true,
            response,
            delimiter: b',',
            high_water: AtomicUsize::new(0),
        }
    }

    /// Already-parsed observations, chunked exactly like a file would be.
    pub fn memory(observations: Vec<Observation>) -> Self {
        Self {
            origin: DataOrigin::Memory(observations),
            chunk_size: DEFAULT_CHUNK_SIZE,
            has_header: true,
            response: ResponseColumn::Name("y".into()),
            delimiter: b',',
            high_water: AtomicUsize::new(0),
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Result<Self> {
        if chunk_size == 0 {
            return Err(Error::InvalidConfig("chunk size must be at least 1".into()));
        }
        self.chunk_size = chunk_size;
        Ok(self)
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = delimiter;
        self
    }

    pub fn with_header(mut self, has_header: bool) -> Self {
        self.has_header = has_header;
        self
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    /// Largest number of rows ever materialized at once by readers of this
    /// source; stays bounded by `chunk_size`.
    pub fn high_water_rows(&self) -> usize {
        self.high_water.load(Ordering::Relaxed)
    }

    /// Opens one pass over the data, yielding chunks in deterministic
    /// order. Each call starts from the beginning.
    pub fn stream_chunks(&self) -> Result<Chunks<'_>> {
        self.stream_chunks_sized(self.chunk_size)
    }

    /// Covariate dimension, read from the first row.
    pub fn peek_dim(&self) -> Result<usize> {
        let mut chunks = self.stream_chunks_sized(1)?;
        match chunks.next() {
            Some(Ok(chunk)) => Ok(chunk[0].dim()),
            Some(Err(e)) => Err(e),
            None => Err(Error::InvalidInput("empty data stream".into())),
        }
    }

    fn stream_chunks_sized(&self, chunk_size: usize) -> Result<Chunks<'_>> {
        let inner = match &self.origin {
            DataOrigin::Memory(data) => ChunksInner::Memory { data, pos: 0 },
            DataOrigin::File(path) => {
                let file = File::open(path).map_err(|e| {
                    Error::InvalidInput(format!("cannot open {}: {e}", path.display()))
                })?;
                let mut reader = csv::ReaderBuilder::new()
                    .has_headers(self.has_header)
                    .delimiter(self.delimiter)
                    .from_reader(file);
                let layout = resolve_layout(&mut reader, self.has_header, &self.response)?;
                ChunksInner::File {
                    reader: Box::new(reader),
                    layout,
                    done: false,
                }
            }
        };
        Ok(Chunks {
            inner,
            chunk_size,
            high_water: &self.high_water,
        })
    }

    /// One streaming pass accumulating the statistics the lambda grid
    /// needs: row count and the score at zero, `sum_n x_nj * y_n`.
    pub fn summarize(&self) -> Result<DataSummary> {
        let mut n_rows = 0usize;
        let mut score: Option<Array1<f64>> = None;
        for chunk in self.stream_chunks()? {
            for obs in chunk? {
                let score = score.get_or_insert_with(|| Array1::zeros(obs.dim()));
                if score.len() != obs.dim() {
                    return Err(Error::Schema(format!(
                        "row dimension changed from {} to {}",
                        score.len(),
                        obs.dim()
                    )));
                }
                for (s, xj) in score.iter_mut().zip(obs.x.iter()) {
                    *s += xj * obs.y;
                }
                n_rows += 1;
            }
        }
        let score = score.ok_or_else(|| Error::InvalidInput("empty data stream".into()))?;
        Ok(DataSummary {
            dim: score.len(),
            n_rows,
            score_at_zero: score,
        })
    }
}

/// Streaming summary used to build penalty grids.
#[derive(Debug, Clone)]
pub struct DataSummary {
    pub n_rows: usize,
    pub dim: usize,
    /// `sum_n x_nj * y_n` per covariate.
    pub score_at_zero: Array1<f64>,
}

struct FileLayout {
    /// Covariate columns in file order.
    x_indices: Vec<usize>,
    y_index: Option<usize>,
    arity: usize,
}

fn resolve_layout(
    reader: &mut csv::Reader<File>,
    has_header: bool,
    response: &ResponseColumn,
) -> Result<FileLayout> {
    let (arity, y_index) = if has_header {
        let headers = reader
            .headers()
            .map_err(|e| Error::Schema(format!("cannot read header row: {e}")))?;
        let arity = headers.len();
        let y_index = match response {
            ResponseColumn::Name(name) => Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Schema(format!("response column '{name}' not found")))?,
            ),
            ResponseColumn::Index(i) => Some(*i),
            ResponseColumn::None => None,
        };
        (arity, y_index)
    } else {
        match response {
            ResponseColumn::Name(name) => {
                return Err(Error::Schema(format!(
                    "response column '{name}' requested by name but the file has no header"
                )))
            }
            // Arity resolved at the first row.
            ResponseColumn::Index(i) => (0, Some(*i)),
            ResponseColumn::None => (0, None),
        }
    };
    if let Some(y) = y_index {
        if arity > 0 && y >= arity {
            return Err(Error::Schema(format!(
                "response index {y} out of range for {arity} columns"
            )));
        }
    }
    let x_indices = if arity > 0 {
        (0..arity).filter(|&j| Some(j) != y_index).collect()
    } else {
        Vec::new()
    };
    Ok(FileLayout {
        x_indices,
        y_index,
        arity,
    })
}

enum ChunksInner<'a> {
    File {
        reader: Box<csv::Reader<File>>,
        layout: FileLayout,
        done: bool,
    },
    Memory {
        data: &'a [Observation],
        pos: usize,
    },
}

/// Iterator over observation chunks for one pass.
pub struct Chunks<'a> {
    inner: ChunksInner<'a>,
    chunk_size: usize,
    high_water: &'a AtomicUsize,
}

impl Iterator for Chunks<'_> {
    type Item = Result<Vec<Observation>>;

    fn next(&mut self) -> Option<Self::Item> {
        let chunk = match &mut self.inner {
            ChunksInner::Memory { data, pos } => {
                if *pos >= data.len() {
                    return None;
                }
                let end = (*pos + self.chunk_size).min(data.len());
                let chunk = data[*pos..end].to_vec();
                *pos = end;
                chunk
            }
            ChunksInner::File {
                reader,
                layout,
                done,
            } => {
                if *done {
                    return None;
                }
                let mut chunk = Vec::with_capacity(self.chunk_size.min(1024));
                let mut record = csv::StringRecord::new();
                while chunk.len() < self.chunk_size {
                    let line = reader.position().line();
                    match reader.read_record(&mut record) {
                        Ok(false) => {
                            *done = true;
                            break;
                        }
                        Ok(true) => match parse_record(&record, layout, line) {
                            Ok(obs) => chunk.push(obs),
                            Err(e) => return Some(Err(e)),
                        },
                        Err(e) => {
                            return Some(Err(match e.kind() {
                                csv::ErrorKind::UnequalLengths {
                                    expected_len, len, ..
                                } => Error::Schema(format!(
                                    "line {line}: row has {len} fields, expected {expected_len}"
                                )),
                                _ => Error::Parse {
                                    line,
                                    message: e.to_string(),
                                },
                            }))
                        }
                    }
                }
                if chunk.is_empty() {
                    return None;
                }
                chunk
            }
        };
        self.high_water.fetch_max(chunk.len(), Ordering::Relaxed);
        Some(Ok(chunk))
    }
}

fn parse_record(
    record: &csv::StringRecord,
    layout: &mut FileLayout,
    line: u64,
) -> Result<Observation> {
    // Headerless files resolve their arity at the first row.
    if layout.arity == 0 {
        let arity = record.len();
        if let Some(y) = layout.y_index {
            if y >= arity {
                return Err(Error::Schema(format!(
                    "response index {y} out of range for {arity} columns"
                )));
            }
        }
        layout.arity = arity;
        layout.x_indices = (0..arity).filter(|&j| Some(j) != layout.y_index).collect();
    }
    if record.len() != layout.arity {
        return Err(Error::Schema(format!(
            "line {line}: row has {} fields, expected {}",
            record.len(),
            layout.arity
        )));
    }
    let parse = |j: usize| -> Result<f64> {
        let field = record.get(j).unwrap_or("");
        field.trim().parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("field {} ('{field}') is not a number", j + 1),
        })
    };
    let y = match layout.y_index {
        Some(j) => parse(j)?,
        None => 0.0,
    };
    let mut x = Array1::zeros(layout.x_indices.len());
    for (slot, &j) in layout.x_indices.iter().enumerate() {
        x[slot] = parse(j)?;
    }
    Observation::new(x, y).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })
}

/// A simulated benchmark: observations plus the ground truth they were
/// generated from.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub observations: Vec<Observation>,
    pub theta_star: Array1<f64>,
    /// The noise multiplier `k`; only the correlated-design generator
    /// calibrates one.
    pub noise_scale: Option<f64>,
}

impl SimulatedDataset {
    /// Wraps the observations as an in-memory stream source.
    pub fn source(&self) -> StreamSource {
        StreamSource::memory(self.observations.clone())
    }
}

/// Correlated-design linear benchmark. The truth has alternating signs
/// with exponentially decaying magnitude, every covariate pair shares
/// correlation `rho` (through the shared-factor construction
/// `x_j = sqrt(rho) z0 + sqrt(1-rho) z_j`), and the noise multiplier `k`
/// is calibrated analytically so that `Var(x.theta*) / k^2 = snr`:
/// the equicorrelated design gives
/// `Var(x.theta*) = (1-rho)||theta*||^2 + rho (sum_j theta*_j)^2`.
pub fn simulate_lasso(
    n: usize,
    p: usize,
    rho: f64,
    snr: f64,
    seed: u64,
) -> Result<SimulatedDataset> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput(format!(
            "need n >= 1 and p >= 1, got n={n}, p={p}"
        )));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!(
            "design correlation must lie in [0, 1), got {rho}"
        )));
    }
    if snr <= 0.0 || !snr.is_finite() {
        return Err(Error::InvalidInput(format!(
            "signal-to-noise ratio must be positive, got {snr}"
        )));
    }

    let theta_star = Array1::from_iter(
        (1..=p).map(|j| (-1f64).powi(j as i32) * (-2.0 * (j as f64 - 1.0) / 20.0).exp()),
    );
    let sum: f64 = theta_star.sum();
    let norm2: f64 = theta_star.dot(&theta_star);
    let var_signal = (1.0 - rho) * norm2 + rho * sum * sum;
    let k = (var_signal / snr).sqrt();

    let mut rng = simulation_rng(seed);
    let sqrt_rho = rho.sqrt();
    let sqrt_rest = (1.0 - rho).sqrt();
    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        let shared: f64 = StandardNormal.sample(&mut rng);
        let x = Array1::from_iter((0..p).map(|_| {
            let own: f64 = StandardNormal.sample(&mut rng);
            sqrt_rho * shared + sqrt_rest * own
        }));
        let noise: f64 = StandardNormal.sample(&mut rng);
        let y = x.dot(&theta_star) + k * noise;
        observations.push(Observation { x, y });
    }
    Ok(SimulatedDataset {
        observations,
        theta_star,
        noise_scale: Some(k),
    })
}

/// Contaminated-normal robust-regression benchmark: design entries are
/// i.i.d. `N(0, 1/n)`, the truth is a random direction rescaled to norm
/// `6 sqrt(p)`, and the noise is standard normal with probability 0.95 and
/// a point mass at 10 otherwise.
pub fn simulate_huber(n: usize, p: usize, seed: u64) -> Result<SimulatedDataset> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput(format!(
            "need n >= 1 and p >= 1, got n={n}, p={p}"
        )));
    }
    let mut rng = simulation_rng(seed);
    let sd = (1.0 / n as f64).sqrt();

    let mut direction: Array1<f64>;
    loop {
        direction = Array1::from_iter((0..p).map(|_| -> f64 { StandardNormal.sample(&mut rng) }));
        let norm = direction.dot(&direction).sqrt();
        if norm > 0.0 {
            let scale = 6.0 * (p as f64).sqrt() / norm;
            direction.mapv_inplace(|g| g * scale);
            break;
        }
    }
    let theta_star = direction;

    let mut observations = Vec::with_capacity(n);
    for _ in 0..n {
        let x = Array1::from_iter((0..p).map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        }));
        let contaminate: f64 = rng.gen();
        let noise = if contaminate < 0.05 {
            10.0
        } else {
            StandardNormal.sample(&mut rng)
        };
        let y = x.dot(&theta_star) + noise;
        observations.push(Observation { x, y });
    }
    Ok(SimulatedDataset {
        observations,
        theta_star,
        noise_scale: None,
    })
}

/// Rescales every covariate column to zero mean and unit sample variance.
/// Constant columns are centered only. Opt-in: silent standardization
/// would change the estimand.
pub fn standardize_columns(observations: &mut [Observation]) {
    if observations.is_empty() {
        return;
    }
    let n = observations.len();
    let p = observations[0].dim();
    for j in 0..p {
        let mean = observations.iter().map(|o| o.x[j]).sum::<f64>() / n as f64;
        let ss = observations
            .iter()
            .map(|o| {
                let d = o.x[j] - mean;
                d * d
            })
            .sum::<f64>();
        let sd = if n > 1 {
            (ss / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        for obs in observations.iter_mut() {
            obs.x[j] -= mean;
            if sd > 0.0 {
                obs.x[j] /= sd;
            }
        }
    }
}

/// Writes observations as headered delimited text, covariates `x1..xp`
/// then `y`. Floats are written in shortest round-trip form, so reading
/// the file back reproduces the exact same numbers.
pub fn write_dataset(path: &Path, observations: &[Observation], delimiter: u8) -> Result<()> {
    let file = File::create(path)?;
    let mut out = BufWriter::new(file);
    let delim = delimiter as char;
    let p = observations.first().map(|o| o.dim()).unwrap_or(0);
    let header: Vec<String> = (1..=p)
        .map(|j| format!("x{j}"))
        .chain(std::iter::once("y".to_string()))
        .collect();
    writeln!(out, "{}", header.join(&delim.to_string()))?;
    for obs in observations {
        for v in obs.x.iter() {
            write!(out, "{v}{delim}")?;
        }
        writeln!(out, "{}", obs.y)?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar metadata written next to simulated datasets.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SimulationMeta {
    pub generator: String,
    pub n: usize,
    pub p: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr: Option<f64>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise_scale: Option<f64>,
    #[serde(default)]
    pub standardized: bool,
    pub theta_star: Vec<f64>,
}

/// `<data path>.meta.json`.
pub fn sidecar_path(data_path: &Path) -> PathBuf {
    let mut name = data_path.as_os_str().to_os_string();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_sidecar(data_path: &Path, meta: &SimulationMeta) -> Result<()> {
    let file = File::create(sidecar_path(data_path))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, meta)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_sidecar(data_path: &Path) -> Result<SimulationMeta> {
    let file = File::open(sidecar_path(data_path))?;
    Ok(serde_json::from_reader(file)?)
}
