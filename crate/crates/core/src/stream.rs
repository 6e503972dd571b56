//! Experience streams: ordered, variable-size training chunks drawn from one
//! or more source datasets, all evaluated against one fixed test set.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed::{self, KEY_STREAM};

pub const SIZE_MIN: usize = 50;
pub const SIZE_MAX: usize = 500;
pub const SIZE_STEP: usize = 50;
/// Remainder chunks smaller than this are dropped.
pub const MIN_CHUNK: usize = 2;
pub const DEFAULT_ZIPF_EXPONENT: f64 = 1.0;
const MAX_SOURCES_FOR_ORDERS: usize = 8;

/// `{50, 100, ..., 500}` ascending.
pub fn candidate_sizes() -> Vec<usize> {
    (SIZE_MIN..=SIZE_MAX).step_by(SIZE_STEP).collect()
}

fn check_fixed_size(s: usize) -> Result<()> {
    if (SIZE_MIN..=SIZE_MAX).contains(&s) && s.is_multiple_of(SIZE_STEP) {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "fixed chunk size must be one of {SIZE_MIN}..={SIZE_MAX} step {SIZE_STEP}, got {s}"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeMode {
    Fixed(usize),
    /// Rank 1 is the smallest size.
    ZipfSmall,
    /// Rank 1 is the largest size.
    ZipfLarge,
}

impl fmt::Display for SizeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SizeMode::Fixed(s) => write!(f, "fixed:{s}"),
            SizeMode::ZipfSmall => f.write_str("zipf-small"),
            SizeMode::ZipfLarge => f.write_str("zipf-large"),
        }
    }
}

impl FromStr for SizeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zipf-small" | "zipf_small" | "small" => Ok(SizeMode::ZipfSmall),
            "zipf-large" | "zipf_large" | "large" => Ok(SizeMode::ZipfLarge),
            _ => {
                let size = s
                    .strip_prefix("fixed:")
                    .and_then(|v| v.parse::<usize>().ok())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "schedule must be fixed:<size>, zipf-small or zipf-large, got {s:?}"
                        ))
                    })?;
                check_fixed_size(size)?;
                Ok(SizeMode::Fixed(size))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSchedule {
    pub mode: SizeMode,
    pub zipf_exponent: f64,
}

impl SizeSchedule {
    pub fn fixed(size: usize) -> Self {
        SizeSchedule {
            mode: SizeMode::Fixed(size),
            zipf_exponent: DEFAULT_ZIPF_EXPONENT,
        }
    }

    pub fn zipf_small() -> Self {
        SizeSchedule {
            mode: SizeMode::ZipfSmall,
            zipf_exponent: DEFAULT_ZIPF_EXPONENT,
        }
    }

    pub fn zipf_large() -> Self {
        SizeSchedule {
            mode: SizeMode::ZipfLarge,
            zipf_exponent: DEFAULT_ZIPF_EXPONENT,
        }
    }

    /// Chunk sizes for a source of `total` samples.
    pub fn chunk_sizes(&self, total: usize, rng: &mut seed::Rng) -> Result<Vec<usize>> {
        match self.mode {
            SizeMode::Fixed(s) => fixed_sizes(s, total),
            _ => {
                let sampler = ZipfSizeSampler::new(self)?;
                sampler.chunk_sizes(total, rng)
            }
        }
    }
}

/// Draws chunk sizes with `P(rank k) ∝ 1 / k^a` over the ten candidate sizes.
#[derive(Clone, Debug)]
pub struct ZipfSizeSampler {
    by_rank: Vec<usize>,
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl ZipfSizeSampler {
    pub fn new(schedule: &SizeSchedule) -> Result<Self> {
        let a = schedule.zipf_exponent;
        if !(a.is_finite() && a >= 0.0) {
            return Err(Error::Config(format!(
                "zipf exponent must be finite and non-negative, got {a}"
            )));
        }
        let mut by_rank = candidate_sizes();
        match schedule.mode {
            SizeMode::ZipfSmall => {}
            SizeMode::ZipfLarge => by_rank.reverse(),
            SizeMode::Fixed(_) => {
                return Err(Error::Config("zipf sampler needs a zipf schedule".into()))
            }
        }
        let weights: Vec<f64> = (1..=by_rank.len()).map(|k| (k as f64).powf(-a)).collect();
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::Config(format!("zipf weights: {e}")))?;
        Ok(ZipfSizeSampler {
            by_rank,
            weights,
            index,
        })
    }

    /// Size with rank `k` (1-based).
    pub fn size_of_rank(&self, k: usize) -> usize {
        self.by_rank[k - 1]
    }

    /// Normalized probability of each rank.
    pub fn rank_probabilities(&self) -> Vec<f64> {
        let z: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / z).collect()
    }

    pub fn sample_rank<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.index.sample(rng) + 1
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.by_rank[self.index.sample(rng)]
    }

    fn chunk_sizes(&self, total: usize, rng: &mut seed::Rng) -> Result<Vec<usize>> {
        if total < SIZE_MIN {
            return Err(Error::Stream(format!(
                "{total} samples cannot fill a chunk of at least {SIZE_MIN}"
            )));
        }
        let mut sizes = Vec::new();
        let mut used = 0;
        while used < total {
            let s = self.sample(rng);
            if used + s > total {
                let rest = total - used;
                if rest >= MIN_CHUNK {
                    sizes.push(rest);
                }
                break;
            }
            sizes.push(s);
            used += s;
        }
        Ok(sizes)
    }
}

/// Zipf-distributed chunk sizes covering `total` samples. The last chunk is
/// truncated to the remainder and dropped when shorter than [`MIN_CHUNK`].
pub fn sample_zipf_sizes(schedule: &SizeSchedule, total: usize, seed: u64) -> Result<Vec<usize>> {
    ZipfSizeSampler::new(schedule)?.chunk_sizes(total, &mut seed::rng(seed))
}

/// `floor(total / s)` chunks of size `s` plus the remainder (same drop rule).
pub fn fixed_sizes(s: usize, total: usize) -> Result<Vec<usize>> {
    check_fixed_size(s)?;
    let mut sizes = vec![s; total / s];
    let rest = total % s;
    if rest >= MIN_CHUNK {
        sizes.push(rest);
    }
    Ok(sizes)
}

/// One chunk of training data.
#[derive(Clone, Debug, PartialEq)]
pub struct Experience {
    /// 1-based position in the stream.
    pub index: usize,
    /// Index of the originating source dataset.
    pub source_id: usize,
    pub data: Dataset,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRemainder {
    pub source_id: usize,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperienceStream {
    pub experiences: Vec<Experience>,
    pub test_set: Dataset,
    pub order: Vec<usize>,
    pub dropped: Vec<DroppedRemainder>,
}

impl ExperienceStream {
    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }

    /// All training chunks concatenated in stream order.
    pub fn union(&self) -> Result<Dataset> {
        let parts: Vec<&Dataset> = self.experiences.iter().map(|e| &e.data).collect();
        Dataset::concat("union", &parts)
    }
}

fn row_key(row: &[f64]) -> Vec<u64> {
    // canonicalize signed zero so 0.0 and -0.0 count as the same point
    row.iter().map(|v| (v + 0.0).to_bits()).collect()
}

fn check_order(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::Config(format!(
            "order {order:?} must be a permutation of {n} sources"
        )));
    }
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Config(format!(
                "order {order:?} must be a permutation of {n} sources"
            )));
        }
    }
    Ok(())
}

/// Cuts every source into chunks and lays them out source by source in
/// `order`. Each source is shuffled with its own seed derived from `seed` and
/// its index, then chunked per `schedule`.
pub fn build_stream(
    sources: &[Dataset],
    order: &[usize],
    schedule: &SizeSchedule,
    test_set: &Dataset,
    seed: u64,
) -> Result<ExperienceStream> {
    if sources.is_empty() {
        return Err(Error::Stream("no source datasets".into()));
    }
    check_order(order, sources.len())?;
    for s in sources {
        if s.dim() != test_set.dim() || s.n_classes() != test_set.n_classes() {
            return Err(Error::Shape(format!(
                "source {} (dim {}, {} classes) does not match test set (dim {}, {} classes)",
                s.name,
                s.dim(),
                s.n_classes(),
                test_set.dim(),
                test_set.n_classes()
            )));
        }
    }
    let test_rows: HashSet<Vec<u64>> = test_set.features().iter_rows().map(row_key).collect();
    for s in sources {
        if let Some(i) = s
            .features()
            .iter_rows()
            .position(|r| test_rows.contains(&row_key(r)))
        {
            return Err(Error::Integrity(format!(
                "sample {i} of source {} also appears in the test set",
                s.name
            )));
        }
    }

    let mut experiences = Vec::new();
    let mut dropped = Vec::new();
    for &sid in order {
        let src = &sources[sid];
        let mut rng = seed::rng(seed::derive_seed(seed, &[KEY_STREAM, sid as u64]));
        let mut idx: Vec<usize> = (0..src.len()).collect();
        idx.shuffle(&mut rng);
        let sizes = schedule.chunk_sizes(src.len(), &mut rng)?;
        let mut start = 0;
        for size in sizes {
            let index = experiences.len() + 1;
            let data = src.subset(format!("{}#{index}", src.name), &idx[start..start + size])?;
            experiences.push(Experience {
                index,
                source_id: sid,
                data,
            });
            start += size;
        }
        if start < src.len() {
            dropped.push(DroppedRemainder {
                source_id: sid,
                count: src.len() - start,
            });
        }
    }
    if experiences.is_empty() {
        return Err(Error::Stream("schedule produced no experiences".into()));
    }
    Ok(ExperienceStream {
        experiences,
        test_set: test_set.clone(),
        order: order.to_vec(),
        dropped,
    })
}

/// All permutations of `0..n` in lexicographic order.
pub fn enumerate_orders(n: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 || n > MAX_SOURCES_FOR_ORDERS {
        return Err(Error::Config(format!(
            "can enumerate orders for 1..={MAX_SOURCES_FOR_ORDERS} sources, got {n}"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = vec![perm.clone()];
    while next_permutation(&mut perm) {
        out.push(perm.clone());
    }
    Ok(out)
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = p.windows(2).rposition(|w| w[0] < w[1]) else {
        return false;
    };
    let j = p.iter().rposition(|&x| x > p[i]).expect("pivot has a successor");
    p.swap(i, j);
    p[i + 1..].reverse();
    true
}
