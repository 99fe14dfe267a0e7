use alloc::boxed::Box;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Draws one jump mark.
pub type MarkSampler = Box<dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Send + Sync>;

/// Draws all marks for one interval of length `dt` (chronological order).
pub type IntervalSampler = Box<dyn Fn(&mut ChaCha8Rng, f64) -> Vec<Vec<f64>> + Send + Sync>;

/// Evaluates `integral of G(x, z, u) nu(dz)` for the dynamics' jump map.
pub type CompensatorIntegral = Box<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Mark law of a compound-Poisson source.
pub enum MarkSpec {
    /// Every jump carries the same mark vector.
    Fixed(Vec<f64>),
    /// Marks drawn independently per jump.
    Sampler { dim: usize, draw: MarkSampler },
}

/// One compound-Poisson source with intensity `lambda >= 0`.
pub struct CompoundPoissonSource {
    intensity: f64,
    mark: MarkSpec,
}

impl CompoundPoissonSource {
    pub fn new(intensity: f64, mark: MarkSpec) -> Result<Self> {
        if !intensity.is_finite() || intensity < 0.0 {
            return Err(Error::InvalidArgument("jump intensity must be finite and >= 0"));
        }
        let dim = match &mark {
            MarkSpec::Fixed(z) => z.len(),
            MarkSpec::Sampler { dim, .. } => *dim,
        };
        if dim == 0 {
            return Err(Error::InvalidArgument("mark dimension must be >= 1"));
        }
        Ok(CompoundPoissonSource { intensity, mark })
    }

    /// Source with a single fixed mark vector.
    pub fn fixed(intensity: f64, mark: Vec<f64>) -> Result<Self> {
        Self::new(intensity, MarkSpec::Fixed(mark))
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn mark(&self) -> &MarkSpec {
        &self.mark
    }

    pub fn mark_dim(&self) -> usize {
        match &self.mark {
            MarkSpec::Fixed(z) => z.len(),
            MarkSpec::Sampler { dim, .. } => *dim,
        }
    }

    pub fn fixed_mark(&self) -> Option<&[f64]> {
        match &self.mark {
            MarkSpec::Fixed(z) => Some(z),
            MarkSpec::Sampler { .. } => None,
        }
    }
}

/// Jump measure delegated to caller-supplied callbacks. `sampler` produces
/// the interval mark lists and `compensator` supplies
/// `integral of G(x, z, u) nu(dz)`; both are required for simulation.
pub struct ExternalMeasure {
    pub mark_dim: usize,
    pub sampler: Option<IntervalSampler>,
    pub compensator: Option<CompensatorIntegral>,
}

/// Jump-measure description of a [`super::ControlledDynamics`].
pub enum LevyMeasureSpec {
    /// Finite list of compound-Poisson sources.
    Native(Vec<CompoundPoissonSource>),
    /// Externally sampled measure with matching compensator callback.
    External(ExternalMeasure),
}

impl LevyMeasureSpec {
    /// No jumps at all; simulation reduces to the diffusion part.
    pub fn none() -> Self {
        LevyMeasureSpec::Native(Vec::new())
    }

    /// Number of sources the jump panel will carry (an external measure is
    /// treated as a single source).
    pub fn num_sources(&self) -> usize {
        match self {
            LevyMeasureSpec::Native(sources) => sources.len(),
            LevyMeasureSpec::External(_) => 1,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            LevyMeasureSpec::Native(_) => Ok(()),
            LevyMeasureSpec::External(ext) => {
                if ext.sampler.is_none() || ext.compensator.is_none() {
                    Err(Error::UnsupportedMeasure(
                        "external measure needs both a sampler and a compensator integral",
                    ))
                } else if ext.mark_dim == 0 {
                    Err(Error::InvalidArgument("mark dimension must be >= 1"))
                } else {
                    Ok(())
                }
            }
        }
    }
}
