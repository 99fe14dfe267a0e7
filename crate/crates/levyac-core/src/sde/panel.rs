use alloc::vec;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
#[allow(unused_imports)]
use num_traits::Float;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::grid::TimeGrid;
use crate::rng::{self, tags};
use crate::{Error, Result};

use super::measure::{LevyMeasureSpec, MarkSpec};

/// Brownian increments for a batch: `m` paths, `steps` intervals, `dim`
/// coordinates, each increment `N(0, dt)`. Path `j` draws from the keyed
/// substream `(NOISE, j)` of `seed`, so panels are reproducible and
/// independent of how paths are scheduled.
#[derive(Debug)]
pub struct NoisePanel {
    m: usize,
    steps: usize,
    dim: usize,
    seed: u64,
    data: Vec<f64>,
}

impl NoisePanel {
    pub fn sample(grid: &TimeGrid, m: usize, dim: usize, seed: u64) -> Result<Self> {
        if m == 0 || dim == 0 {
            return Err(Error::InvalidArgument("noise panel needs m >= 1 and dim >= 1"));
        }
        let steps = grid.steps();
        let scale = grid.dt().sqrt();
        let mut data = vec![0.0f64; m * steps * dim];
        for j in 0..m {
            let mut stream = rng::stream(seed, &[tags::NOISE, j as u64]);
            for value in &mut data[j * steps * dim..(j + 1) * steps * dim] {
                let z: f64 = StandardNormal.sample(&mut stream);
                *value = scale * z;
            }
        }
        Ok(NoisePanel {
            m,
            steps,
            dim,
            seed,
            data,
        })
    }

    /// Assembles a panel from explicit increments laid out as
    /// `(j * steps + n) * dim`. Intended for tests and replaying recorded
    /// scenarios.
    pub fn from_values(m: usize, steps: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if m == 0 || dim == 0 {
            return Err(Error::InvalidArgument("noise panel needs m >= 1 and dim >= 1"));
        }
        if values.len() != m * steps * dim {
            return Err(Error::InvalidArgument("values must have m * steps * dim entries"));
        }
        Ok(NoisePanel {
            m,
            steps,
            dim,
            seed: 0,
            data: values,
        })
    }

    /// Increment vector of path `j` over `[t_n, t_{n+1})`.
    pub fn dw(&self, j: usize, n: usize) -> &[f64] {
        let base = (j * self.steps + n) * self.dim;
        &self.data[base..base + self.dim]
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }
}

#[derive(Debug)]
enum MarkData {
    /// All jumps of the source share one mark vector.
    Fixed(Vec<f64>),
    /// Chronological per-jump marks; `offsets[i]` is the first jump index of
    /// flat interval `i = j * steps + n`, with a closing sentinel.
    Listed { offsets: Vec<u32>, flat: Vec<f64> },
}

#[derive(Debug)]
struct SourceDraws {
    counts: Vec<u32>,
    mark_dim: usize,
    marks: MarkData,
}

/// Realized jumps for a batch: per source, per path, per interval a count
/// and the chronological list of marks. Path `j` of source `k` draws from
/// the keyed substream `(JUMP, j, k)` of `seed`.
#[derive(Debug)]
pub struct JumpPanel {
    m: usize,
    steps: usize,
    seed: u64,
    sources: Vec<SourceDraws>,
}

impl JumpPanel {
    pub fn sample(measure: &LevyMeasureSpec, grid: &TimeGrid, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("jump panel needs m >= 1"));
        }
        measure.validate()?;
        let steps = grid.steps();
        let dt = grid.dt();
        let mut sources = Vec::new();
        match measure {
            LevyMeasureSpec::Native(list) => {
                for (k, source) in list.iter().enumerate() {
                    let mark_dim = source.mark_dim();
                    let mut counts = vec![0u32; m * steps];
                    let lambda_dt = source.intensity() * dt;
                    let law = if lambda_dt > 0.0 {
                        Some(Poisson::new(lambda_dt).map_err(|_| {
                            Error::InvalidArgument("jump intensity must be finite and >= 0")
                        })?)
                    } else {
                        None
                    };
                    let mut marks = match source.mark() {
                        MarkSpec::Fixed(z) => MarkData::Fixed(z.clone()),
                        MarkSpec::Sampler { .. } => MarkData::Listed {
                            offsets: Vec::with_capacity(m * steps + 1),
                            flat: Vec::new(),
                        },
                    };
                    for j in 0..m {
                        let mut stream = rng::stream(seed, &[tags::JUMP, j as u64, k as u64]);
                        for n in 0..steps {
                            let count = match &law {
                                Some(p) => p.sample(&mut stream) as u32,
                                None => 0,
                            };
                            counts[j * steps + n] = count;
                            if let (MarkSpec::Sampler { draw, .. }, MarkData::Listed { offsets, flat }) =
                                (source.mark(), &mut marks)
                            {
                                offsets.push((flat.len() / mark_dim) as u32);
                                for _ in 0..count {
                                    let z = draw(&mut stream);
                                    if z.len() != mark_dim {
                                        return Err(Error::InvalidArgument(
                                            "mark sampler returned wrong dimension",
                                        ));
                                    }
                                    flat.extend_from_slice(&z);
                                }
                            }
                        }
                    }
                    if let MarkData::Listed { offsets, flat } = &mut marks {
                        offsets.push((flat.len() / mark_dim) as u32);
                    }
                    sources.push(SourceDraws {
                        counts,
                        mark_dim,
                        marks,
                    });
                }
            }
            LevyMeasureSpec::External(ext) => {
                let sampler = ext
                    .sampler
                    .as_ref()
                    .ok_or(Error::UnsupportedMeasure("external measure without sampler"))?;
                let mark_dim = ext.mark_dim;
                let mut counts = vec![0u32; m * steps];
                let mut offsets = Vec::with_capacity(m * steps + 1);
                let mut flat = Vec::new();
                for j in 0..m {
                    let mut stream = rng::stream(seed, &[tags::JUMP, j as u64, 0]);
                    for n in 0..steps {
                        offsets.push((flat.len() / mark_dim) as u32);
                        let drawn = sampler(&mut stream, dt);
                        counts[j * steps + n] = drawn.len() as u32;
                        for z in drawn {
                            if z.len() != mark_dim {
                                return Err(Error::InvalidArgument(
                                    "interval sampler returned wrong mark dimension",
                                ));
                            }
                            flat.extend_from_slice(&z);
                        }
                    }
                }
                offsets.push((flat.len() / mark_dim) as u32);
                sources.push(SourceDraws {
                    counts,
                    mark_dim,
                    marks: MarkData::Listed { offsets, flat },
                });
            }
        }
        Ok(JumpPanel {
            m,
            steps,
            seed,
            sources,
        })
    }

    /// Assembles a panel from explicit counts, with every jump of source `k`
    /// carrying `fixed_marks[k]`. Intended for tests and replaying recorded
    /// scenarios.
    pub fn from_counts(
        m: usize,
        steps: usize,
        counts: Vec<Vec<u32>>,
        fixed_marks: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if counts.len() != fixed_marks.len() {
            return Err(Error::InvalidArgument("one mark vector per source required"));
        }
        let mut sources = Vec::new();
        for (per_source, mark) in counts.into_iter().zip(fixed_marks) {
            if per_source.len() != m * steps {
                return Err(Error::InvalidArgument("counts must have m * steps entries"));
            }
            if mark.is_empty() {
                return Err(Error::InvalidArgument("mark dimension must be >= 1"));
            }
            sources.push(SourceDraws {
                counts: per_source,
                mark_dim: mark.len(),
                marks: MarkData::Fixed(mark),
            });
        }
        Ok(JumpPanel {
            m,
            steps,
            seed: 0,
            sources,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn mark_dim(&self, k: usize) -> usize {
        self.sources[k].mark_dim
    }

    /// Jump count of source `k` on interval `n` of path `j`.
    pub fn count(&self, k: usize, j: usize, n: usize) -> u32 {
        self.sources[k].counts[j * self.steps + n]
    }

    /// Chronological marks of source `k` on interval `n` of path `j`.
    pub fn marks(&self, k: usize, j: usize, n: usize) -> MarkIter<'_> {
        let source = &self.sources[k];
        let i = j * self.steps + n;
        match &source.marks {
            MarkData::Fixed(z) => MarkIter {
                fixed: Some(z),
                flat: &[],
                dim: source.mark_dim,
                left: source.counts[i] as usize,
            },
            MarkData::Listed { offsets, flat } => {
                let lo = offsets[i] as usize * source.mark_dim;
                let hi = offsets[i + 1] as usize * source.mark_dim;
                MarkIter {
                    fixed: None,
                    flat: &flat[lo..hi],
                    dim: source.mark_dim,
                    left: source.counts[i] as usize,
                }
            }
        }
    }
}

/// Iterator over the marks of one interval.
pub struct MarkIter<'a> {
    fixed: Option<&'a [f64]>,
    flat: &'a [f64],
    dim: usize,
    left: usize,
}

impl<'a> Iterator for MarkIter<'a> {
    type Item = &'a [f64];

    fn next(&mut self) -> Option<&'a [f64]> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        match self.fixed {
            Some(z) => Some(z),
            None => {
                let (head, rest) = self.flat.split_at(self.dim);
                self.flat = rest;
                Some(head)
            }
        }
    }
}
