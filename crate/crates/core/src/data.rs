//! Labeled feature datasets: persistence, pair differencing and a synthetic
//! multi-source generator with per-source domain shift.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, Matrix};
use crate::seed::{self, KEY_SYNTH_CLASSES, KEY_SYNTH_TEST, KEY_SYNTH_TRAIN};

pub const MAGIC: &[u8; 4] = b"CLF1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 24;

/// Labeled feature vectors with a uniform dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    n_classes: usize,
    features: Matrix,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        n_classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if dim == 0 || n_classes == 0 {
            return Err(Error::Shape("dataset needs positive dim and class count".into()));
        }
        if labels.is_empty() {
            return Err(Error::Shape("dataset must hold at least one sample".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} feature values for {} samples of dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        crate::nn::check_labels(&labels, n_classes)?;
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                location: format!("feature {} of sample {}", k % dim, k / dim),
                value: features[k],
            });
        }
        let features = Matrix::from_vec(labels.len(), dim, features)?;
        Ok(Dataset {
            name: name.into(),
            n_classes,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows at `indices`, in that order, as a training batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        let dim = self.dim();
        let mut feats = Vec::with_capacity(indices.len() * dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            feats.extend_from_slice(self.feature(i));
            labels.push(self.labels[i]);
        }
        Batch::from_rows(dim, feats, labels)
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Dataset> {
        let b = self.batch(indices)?;
        Dataset::new(
            name,
            self.dim(),
            self.n_classes,
            b.features().as_slice().to_vec(),
            b.labels().to_vec(),
        )
    }

    /// Concatenation in argument order.
    pub fn concat(name: impl Into<String>, parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Stream("nothing to concatenate".into()))?;
        let (dim, c) = (first.dim(), first.n_classes);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim() != dim || p.n_classes != c {
                return Err(Error::Shape(format!(
                    "cannot concatenate {} (dim {}, {} classes) with dim {dim}, {c} classes",
                    p.name,
                    p.dim(),
                    p.n_classes
                )));
            }
            feats.extend_from_slice(p.features.as_slice());
            labels.extend_from_slice(&p.labels);
        }
        Dataset::new(name, dim, c, feats, labels)
    }
}

/// Element-wise `doc - live`, the differential representation of a pair.
pub fn pair_difference(doc: &[f64], live: &[f64]) -> Result<Vec<f64>> {
    if doc.len() != live.len() {
        return Err(Error::Shape(format!(
            "pair features have dims {} and {}",
            doc.len(),
            live.len()
        )));
    }
    Ok(doc.iter().zip(live).map(|(a, b)| a - b).collect())
}

/// Storage width of feature values in the binary format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FloatWidth {
    F32,
    #[default]
    F64,
}

impl FloatWidth {
    fn bytes(self) -> u32 {
        match self {
            FloatWidth::F32 => 4,
            FloatWidth::F64 => 8,
        }
    }
}

/// Serializes to the `CLF1` binary layout: magic, then little-endian `u32`
/// version, n, d, C and float width in bytes, then `n` records of `d` floats
/// followed by a `u32` label.
pub fn encode_dataset(ds: &Dataset, width: FloatWidth) -> Vec<u8> {
    let d = ds.dim();
    let rec = d * width.bytes() as usize + 4;
    let mut out = Vec::with_capacity(HEADER_LEN as usize + ds.len() * rec);
    out.extend_from_slice(MAGIC);
    for v in [
        FORMAT_VERSION,
        ds.len() as u32,
        d as u32,
        ds.n_classes as u32,
        width.bytes(),
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (row, &label) in ds.features.iter_rows().zip(&ds.labels) {
        for &x in row {
            match width {
                FloatWidth::F32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
                FloatWidth::F64 => out.extend_from_slice(&x.to_le_bytes()),
            }
        }
        out.extend_from_slice(&(label as u32).to_le_bytes());
    }
    out
}

fn format_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(format_err(
                self.pos as u64,
                format!("truncated while reading {what}"),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn decode_dataset(name: impl Into<String>, bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(format_err(0, "bad magic, expected CLF1"));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let n = r.u32("sample count")? as usize;
    let d = r.u32("dimension")? as usize;
    let c = r.u32("class count")? as usize;
    let width = match r.u32("float width")? {
        4 => FloatWidth::F32,
        8 => FloatWidth::F64,
        w => return Err(format_err(20, format!("float width must be 4 or 8, got {w}"))),
    };
    if n == 0 {
        return Err(format_err(8, "dataset declares zero samples"));
    }
    if d == 0 {
        return Err(format_err(12, "dataset declares zero dimension"));
    }
    if c == 0 {
        return Err(format_err(16, "dataset declares zero classes"));
    }
    let mut features = Vec::with_capacity(n.saturating_mul(d).min(1 << 24));
    let mut labels = Vec::with_capacity(n.min(1 << 20));
    for i in 0..n {
        let start = r.pos as u64;
        for k in 0..d {
            let at = r.pos as u64;
            let x = match width {
                FloatWidth::F32 => {
                    f32::from_le_bytes(r.take(4, "feature")?.try_into().expect("4 bytes")) as f64
                }
                FloatWidth::F64 => {
                    f64::from_le_bytes(r.take(8, "feature")?.try_into().expect("8 bytes"))
                }
            };
            if !x.is_finite() {
                return Err(format_err(at, format!("record {i}: feature {k} is not finite")));
            }
            features.push(x);
        }
        let label = r.u32("label")? as usize;
        if label >= c {
            return Err(format_err(
                start,
                format!("record {i}: label {label} out of range for {c} classes"),
            ));
        }
        labels.push(label);
    }
    if r.pos != bytes.len() {
        return Err(format_err(
            r.pos as u64,
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    Dataset::new(name, d, c, features, labels)
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a dataset; `.csv` files use the CSV layout, anything else the binary one.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    if is_csv(path) {
        return load_csv(path, None);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(stem(path), &bytes)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    save_dataset_with(ds, path, FloatWidth::F64)
}

pub fn save_dataset_with(ds: &Dataset, path: impl AsRef<Path>, width: FloatWidth) -> Result<()> {
    let path = path.as_ref();
    if is_csv(path) {
        return save_csv(ds, path);
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_dataset(ds, width))
        .map_err(|e| Error::io(path, e))
}

/// CSV with header `f0,..,f{d-1},label`. The class count defaults to
/// `max(label) + 1`.
pub fn load_csv(path: impl AsRef<Path>, n_classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let d = headers.len().saturating_sub(1);
    let well_formed = d > 0
        && headers.get(d) == Some("label")
        && headers
            .iter()
            .take(d)
            .enumerate()
            .all(|(i, h)| h == format!("f{i}"));
    if !well_formed {
        return Err(format_err(0, "csv header must be f0,..,f{d-1},label"));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte());
        if rec.len() != d + 1 {
            return Err(format_err(offset, format!("record {i}: expected {} fields", d + 1)));
        }
        for field in rec.iter().take(d) {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(offset, format!("record {i}: bad number {field:?}")))?;
            features.push(x);
        }
        let label: usize = rec[d]
            .trim()
            .parse()
            .map_err(|_| format_err(offset, format!("record {i}: bad label {:?}", &rec[d])))?;
        if let Some(c) = n_classes {
            if label >= c {
                return Err(format_err(
                    offset,
                    format!("record {i}: label {label} out of range for {c} classes"),
                ));
            }
        }
        labels.push(label);
    }
    let c = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    Dataset::new(stem(path), d, c, features, labels)
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    let mut header: Vec<String> = (0..ds.dim()).map(|i| format!("f{i}")).collect();
    header.push("label".into());
    w.write_record(&header)?;
    for (row, label) in ds.features.iter_rows().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path.as_ref(), e))
}

/// Synthetic stand-in for several feature datasets that share a label space
/// but differ by a per-source shift of each class cluster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSourceSpec {
    pub n_sources: usize,
    pub n_classes: usize,
    pub dim: usize,
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    /// Norm of each global class mean.
    pub class_separation: f64,
    /// Norm of the per-source, per-class mean offset.
    pub shift: f64,
    /// Within-class isotropic standard deviation.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSourceSpec {
    fn default() -> Self {
        SynthSourceSpec {
            n_sources: 4,
            n_classes: 2,
            dim: 16,
            samples_per_class: 250,
            test_samples_per_class: 250,
            class_separation: 2.0,
            shift: 2.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SourceSet {
    pub sources: Vec<Dataset>,
    pub test: Dataset,
}

impl SynthSourceSpec {
    fn validate(&self) -> Result<()> {
        if self.n_sources == 0
            || self.n_classes == 0
            || self.samples_per_class == 0
            || self.test_samples_per_class == 0
        {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        if self.dim < 2 {
            return Err(Error::Config("synthetic dim must be at least 2".into()));
        }
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !(finite_nonneg(self.class_separation) && finite_nonneg(self.shift) && finite_nonneg(self.noise)) {
            return Err(Error::Config(
                "separation, shift and noise must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn gaussian_vec<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform direction on the sphere scaled to `norm`.
fn random_direction<R: Rng>(rng: &mut R, dim: usize, norm: f64) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, dim);
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-12 {
            return v.into_iter().map(|x| x * norm / len).collect();
        }
    }
}

fn draw_source<R: Rng>(
    rng: &mut R,
    spec: &SynthSourceSpec,
    class_means: &[Vec<f64>],
    per_class: usize,
    name: String,
) -> Result<Dataset> {
    let offsets: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| random_direction(rng, spec.dim, spec.shift))
        .collect();
    let mut features = Vec::with_capacity(spec.n_classes * per_class * spec.dim);
    let mut labels = Vec::with_capacity(spec.n_classes * per_class);
    for (c, (mean, off)) in class_means.iter().zip(&offsets).enumerate() {
        for _ in 0..per_class {
            for (m, o) in mean.iter().zip(off) {
                let z: f64 = StandardNormal.sample(rng);
                features.push(m + o + spec.noise * z);
            }
            labels.push(c);
        }
    }
    Dataset::new(name, spec.dim, spec.n_classes, features, labels)
}

/// Draws `n_sources` training datasets and a held-out test set whose class
/// offsets come from an independent random stream.
pub fn synth_sources(spec: &SynthSourceSpec) -> Result<SourceSet> {
    spec.validate()?;
    let mut class_rng = seed::rng(seed::derive_seed(spec.seed, &[KEY_SYNTH_CLASSES]));
    let class_means: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| random_direction(&mut class_rng, spec.dim, spec.class_separation))
        .collect();
    let sources = (0..spec.n_sources)
        .map(|s| {
            let mut rng = seed::rng(seed::derive_seed(spec.seed, &[KEY_SYNTH_TRAIN, s as u64]));
            draw_source(&mut rng, spec, &class_means, spec.samples_per_class, format!("source_{s}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut test_rng = seed::rng(seed::derive_seed(spec.seed, &[KEY_SYNTH_TEST]));
    let test = draw_source(
        &mut test_rng,
        spec,
        &class_means,
        spec.test_samples_per_class,
        "test".into(),
    )?;
    Ok(SourceSet { sources, test })
}
