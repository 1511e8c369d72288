//! Positive/negative appearance memory banks.
//!
//! Each bank keeps a bounded set of unit-norm embeddings under a novelty
//! gate (no two entries more similar than `1 - novelty_epsilon`) and a
//! deterministic closest-pair eviction policy. The [`score`] function is
//! the memory-conditioned term a tracker maximizes when choosing among
//! candidate regions: similarity to the positive bank minus (scaled)
//! similarity to the negative bank.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MemoryError {
    #[error("entry polarity {entry:?} does not match bank polarity {bank:?}")]
    PolarityMismatch { entry: Polarity, bank: Polarity },
    #[error("embedding dimension {got} does not match bank dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("embedding must be unit-norm within {tolerance}, norm was {norm}")]
    NotUnitNorm { norm: f64, tolerance: f64 },
    #[error("embedding must be finite and non-zero")]
    InvalidEmbedding,
    #[error("bank capacity must be positive")]
    ZeroCapacity,
    #[error("novelty epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

const NORM_TOLERANCE: f64 = 1e-9;

/// A single stored embedding with its frame of origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub embedding: Vec<f64>,
    pub frame: usize,
    pub polarity: Polarity,
}

impl MemoryEntry {
    /// Builds an entry, requiring the embedding to already be unit-norm.
    pub fn new(embedding: Vec<f64>, frame: usize, polarity: Polarity) -> Result<Self, MemoryError> {
        let norm = l2_norm(&embedding);
        if !norm.is_finite() || norm == 0.0 {
            return Err(MemoryError::InvalidEmbedding);
        }
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(MemoryError::NotUnitNorm {
                norm,
                tolerance: NORM_TOLERANCE,
            });
        }
        Ok(MemoryEntry {
            embedding,
            frame,
            polarity,
        })
    }

    /// Builds an entry, normalizing the embedding first. Use this for
    /// embeddings that were quantized or histogram-derived.
    pub fn normalized(
        mut embedding: Vec<f64>,
        frame: usize,
        polarity: Polarity,
    ) -> Result<Self, MemoryError> {
        let norm = l2_norm(&embedding);
        if !norm.is_finite() || norm == 0.0 {
            return Err(MemoryError::InvalidEmbedding);
        }
        for v in &mut embedding {
            *v /= norm;
        }
        Ok(MemoryEntry {
            embedding,
            frame,
            polarity,
        })
    }
}

/// Outcome of a bank insertion.
#[derive(Debug, Clone, PartialEq)]
pub enum InsertOutcome {
    Added,
    /// The candidate was too close to the bank's content to keep: either it
    /// failed the novelty gate outright, or it lost the eviction contest at
    /// capacity (it was the older member of the closest pair).
    RejectedNotNovel,
    AddedWithEviction(MemoryEntry),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryBank {
    polarity: Polarity,
    capacity: usize,
    novelty_epsilon: f64,
    dim: usize,
    entries: Vec<MemoryEntry>,
}

impl MemoryBank {
    pub const DEFAULT_CAPACITY: usize = 16;
    pub const DEFAULT_NOVELTY_EPSILON: f64 = 0.1;

    pub fn new(
        polarity: Polarity,
        capacity: usize,
        novelty_epsilon: f64,
        dim: usize,
    ) -> Result<Self, MemoryError> {
        if capacity == 0 {
            return Err(MemoryError::ZeroCapacity);
        }
        if !(novelty_epsilon > 0.0 && novelty_epsilon < 1.0) {
            return Err(MemoryError::BadEpsilon(novelty_epsilon));
        }
        Ok(MemoryBank {
            polarity,
            capacity,
            novelty_epsilon,
            dim,
            entries: Vec::new(),
        })
    }

    pub fn with_defaults(polarity: Polarity, dim: usize) -> Self {
        Self::new(
            polarity,
            Self::DEFAULT_CAPACITY,
            Self::DEFAULT_NOVELTY_EPSILON,
            dim,
        )
        .expect("default parameters are valid")
    }

    pub fn polarity(&self) -> Polarity {
        self.polarity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    /// Highest cosine similarity between `embedding` and any entry; 0 for an
    /// empty bank.
    pub fn max_similarity(&self, embedding: &[f64]) -> Result<f64, MemoryError> {
        if embedding.len() != self.dim {
            return Err(MemoryError::DimensionMismatch {
                got: embedding.len(),
                expected: self.dim,
            });
        }
        Ok(self
            .entries
            .iter()
            .map(|e| dot(&e.embedding, embedding))
            .fold(0.0f64, f64::max))
    }

    /// Inserts under the novelty gate and, at capacity, the closest-pair
    /// eviction policy:
    ///
    /// 1. If the candidate's similarity to any entry exceeds
    ///    `1 - novelty_epsilon`, it is rejected and the bank is unchanged.
    /// 2. Below capacity it is simply added.
    /// 3. At capacity, the closest pair among the entries plus the candidate
    ///    is found (ties prefer the pair containing the lowest frame, then
    ///    the earliest pair in scan order) and the older member of that pair
    ///    (lower frame, then earlier position; the candidate counts as last)
    ///    is evicted. If the victim is the candidate itself, the bank is
    ///    unchanged and the insert reports `RejectedNotNovel`.
    pub fn insert(&mut self, entry: MemoryEntry) -> Result<InsertOutcome, MemoryError> {
        if entry.polarity != self.polarity {
            return Err(MemoryError::PolarityMismatch {
                entry: entry.polarity,
                bank: self.polarity,
            });
        }
        if entry.embedding.len() != self.dim {
            return Err(MemoryError::DimensionMismatch {
                got: entry.embedding.len(),
                expected: self.dim,
            });
        }

        let novelty_cut = 1.0 - self.novelty_epsilon;
        if self
            .entries
            .iter()
            .any(|e| dot(&e.embedding, &entry.embedding) > novelty_cut)
        {
            return Ok(InsertOutcome::RejectedNotNovel);
        }

        if self.entries.len() < self.capacity {
            self.entries.push(entry);
            return Ok(InsertOutcome::Added);
        }

        // Hypothetically append the candidate and locate the closest pair.
        let candidate_index = self.entries.len();
        let sim_with = |i: usize, j: usize| -> f64 {
            let a = if i == candidate_index {
                &entry.embedding
            } else {
                &self.entries[i].embedding
            };
            let b = if j == candidate_index {
                &entry.embedding
            } else {
                &self.entries[j].embedding
            };
            dot(a, b)
        };
        let frame_of = |i: usize| -> usize {
            if i == candidate_index {
                entry.frame
            } else {
                self.entries[i].frame
            }
        };

        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..=candidate_index {
            for j in (i + 1)..=candidate_index {
                let s = sim_with(i, j);
                let better = match best {
                    None => true,
                    Some((bi, bj, bs)) => {
                        if s != bs {
                            s > bs
                        } else {
                            let min_frame = frame_of(i).min(frame_of(j));
                            let best_min_frame = frame_of(bi).min(frame_of(bj));
                            min_frame < best_min_frame
                        }
                    }
                };
                if better {
                    best = Some((i, j, s));
                }
            }
        }
        let (i, j, _) = best.expect("bank at capacity has at least one pair");

        // Older member: lower frame, ties broken by earlier list position
        // (the candidate sits last).
        let victim = {
            let (fi, fj) = (frame_of(i), frame_of(j));
            if fi < fj {
                i
            } else if fj < fi {
                j
            } else {
                i.min(j)
            }
        };

        if victim == candidate_index {
            return Ok(InsertOutcome::RejectedNotNovel);
        }
        let evicted = self.entries.remove(victim);
        self.entries.push(entry);
        Ok(InsertOutcome::AddedWithEviction(evicted))
    }

    /// Debug check of the bank invariants; used by tests.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.entries.len() > self.capacity {
            return Err(format!(
                "bank holds {} entries over capacity {}",
                self.entries.len(),
                self.capacity
            ));
        }
        let cut = 1.0 - self.novelty_epsilon;
        for i in 0..self.entries.len() {
            for j in (i + 1)..self.entries.len() {
                let s = dot(&self.entries[i].embedding, &self.entries[j].embedding);
                if s > cut + 1e-12 {
                    return Err(format!("entries {i} and {j} violate novelty: sim {s}"));
                }
            }
        }
        Ok(())
    }
}

/// Memory-conditioned score of a candidate embedding:
/// `maxsim(candidate, positive) - lambda * maxsim(candidate, negative)`.
/// An empty bank contributes 0 for its term.
pub fn score(
    candidate: &[f64],
    positive: &MemoryBank,
    negative: &MemoryBank,
    lambda: f64,
) -> Result<f64, MemoryError> {
    Ok(positive.max_similarity(candidate)? - lambda * negative.max_similarity(candidate)?)
}

/// Session-level memory parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub capacity: usize,
    pub novelty_epsilon: f64,
    /// Weight of the negative term in [`score`].
    pub lambda: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            capacity: MemoryBank::DEFAULT_CAPACITY,
            novelty_epsilon: MemoryBank::DEFAULT_NOVELTY_EPSILON,
            lambda: 1.0,
        }
    }
}

/// The positive/negative bank pair owned by one evaluation session.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankPair {
    pub positive: MemoryBank,
    pub negative: MemoryBank,
    pub lambda: f64,
}

impl BankPair {
    pub fn new(cfg: &MemoryConfig, dim: usize) -> Result<Self, MemoryError> {
        Ok(BankPair {
            positive: MemoryBank::new(Polarity::Positive, cfg.capacity, cfg.novelty_epsilon, dim)?,
            negative: MemoryBank::new(Polarity::Negative, cfg.capacity, cfg.novelty_epsilon, dim)?,
            lambda: cfg.lambda,
        })
    }

    pub fn bank_mut(&mut self, polarity: Polarity) -> &mut MemoryBank {
        match polarity {
            Polarity::Positive => &mut self.positive,
            Polarity::Negative => &mut self.negative,
        }
    }

    /// Normalizes and inserts an embedding observed at `frame`.
    pub fn remember(
        &mut self,
        polarity: Polarity,
        embedding: &[f64],
        frame: usize,
    ) -> Result<InsertOutcome, MemoryError> {
        let entry = MemoryEntry::normalized(embedding.to_vec(), frame, polarity)?;
        self.bank_mut(polarity).insert(entry)
    }

    pub fn score(&self, candidate: &[f64]) -> Result<f64, MemoryError> {
        score(candidate, &self.positive, &self.negative, self.lambda)
    }
}

/// L2-normalized 512-bin RGB color histogram (8x8x8) of a box crop over raw
/// RGB8 pixel data. This is the embedding definition for real-image mode;
/// adapters that have pixel access can reproduce it exactly.
pub fn rgb_histogram_embedding(
    pixels: &[u8],
    width: usize,
    height: usize,
    crop: &crate::geometry::BoundingBox,
) -> Result<Vec<f64>, MemoryError> {
    if pixels.len() != width * height * 3 {
        return Err(MemoryError::InvalidEmbedding);
    }
    let x0 = crop.x.max(0.0) as usize;
    let y0 = crop.y.max(0.0) as usize;
    let x1 = ((crop.x + crop.w).ceil() as usize).min(width);
    let y1 = ((crop.y + crop.h).ceil() as usize).min(height);
    let mut hist = vec![0.0f64; 512];
    for y in y0..y1 {
        for x in x0..x1 {
            let p = (y * width + x) * 3;
            let r = (pixels[p] >> 5) as usize;
            let g = (pixels[p + 1] >> 5) as usize;
            let b = (pixels[p + 2] >> 5) as usize;
            hist[(r << 6) | (g << 3) | b] += 1.0;
        }
    }
    let norm = l2_norm(&hist);
    if norm == 0.0 {
        return Err(MemoryError::InvalidEmbedding);
    }
    for v in &mut hist {
        *v /= norm;
    }
    Ok(hist)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
