//! Synthetic spectra: a sloped continuum, Gaussian line profiles, and white noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::spectrum::{Spectrum, SpectrumError, SpectrumParts, Survey, Task, TaskLabel};

pub const GRID_LO: f64 = 3900.0;
pub const GRID_HI: f64 = 9000.0;
pub const GRID_STEP: f64 = 2.0;

/// A Gaussian feature. `depth` is a fraction of the local continuum; positive
/// values are emission, negative values absorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub center: f64,
    pub sigma: f64,
    pub depth: f64,
}

impl Line {
    pub const fn new(center: f64, sigma: f64, depth: f64) -> Self {
        Line { center, sigma, depth }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub id: String,
    pub survey: Survey,
    pub level: f64,
    /// Fractional continuum change per 1000 Å, relative to the grid start.
    pub slope: f64,
    pub lines: Vec<Line>,
    /// Noise standard deviation as a fraction of `level`.
    pub noise: f64,
    pub seed: u64,
    pub label: Option<TaskLabel>,
    pub ra_deg: Option<f64>,
    pub dec_deg: Option<f64>,
}

impl SyntheticSpec {
    pub fn new(id: impl Into<String>, seed: u64) -> Self {
        SyntheticSpec {
            id: id.into(),
            survey: Survey::Synthetic,
            level: 100.0,
            slope: 0.0,
            lines: Vec::new(),
            noise: 0.01,
            seed,
            label: None,
            ra_deg: None,
            dec_deg: None,
        }
    }

    pub fn generate(&self) -> Result<Spectrum, SpectrumError> {
        let n = ((GRID_HI - GRID_LO) / GRID_STEP) as usize + 1;
        let wavelength: Vec<f64> = (0..n).map(|i| GRID_LO + GRID_STEP * i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, (self.noise * self.level).abs())
            .map_err(|e| SpectrumError::MalformedFile(e.to_string()))?;
        let flux = wavelength
            .iter()
            .map(|&l| {
                let continuum = self.level * (1.0 + self.slope * (l - GRID_LO) / 1000.0);
                let profile: f64 = self
                    .lines
                    .iter()
                    .map(|line| {
                        let z = (l - line.center) / line.sigma;
                        line.depth * (-0.5 * z * z).exp()
                    })
                    .sum();
                continuum * (1.0 + profile) + noise.sample(&mut rng)
            })
            .collect();
        Spectrum::new(SpectrumParts {
            id: self.id.clone(),
            survey: self.survey,
            wavelength,
            flux,
            label: self.label,
            snr: None,
            ra_deg: self.ra_deg,
            dec_deg: self.dec_deg,
        })
    }
}

/// Continuum slope typical of the class: hot objects fall toward the red.
pub fn task_slope(task: Task) -> f64 {
    match task {
        Task::Cv | Task::Wd | Task::O | Task::B => -0.12,
        Task::A => -0.08,
        Task::Cs | Task::Ss | Task::Mg => 0.25,
    }
}

/// Characteristic features of a positive member, scaled by `strength`.
pub fn task_lines(task: Task, strength: f64) -> Vec<Line> {
    let s = strength;
    match task {
        Task::Cv => vec![
            Line::new(6563.0, 18.0, 1.2 * s),
            Line::new(4861.0, 14.0, 0.9 * s),
            Line::new(5876.0, 12.0, 0.35 * s),
            Line::new(4686.0, 12.0, 0.4 * s),
        ],
        Task::Cs => vec![
            Line::new(4737.0, 35.0, -0.45 * s),
            Line::new(5165.0, 40.0, -0.55 * s),
            Line::new(5636.0, 40.0, -0.4 * s),
        ],
        Task::Ss => vec![
            Line::new(6474.0, 30.0, -0.5 * s),
            Line::new(5551.0, 25.0, -0.3 * s),
        ],
        Task::Mg => vec![
            Line::new(6159.0, 35.0, -0.4 * s),
            Line::new(7054.0, 45.0, -0.55 * s),
            Line::new(7589.0, 40.0, -0.45 * s),
        ],
        Task::Wd => vec![
            Line::new(4861.0, 55.0, -0.6 * s),
            Line::new(4340.0, 45.0, -0.55 * s),
            Line::new(6563.0, 60.0, -0.45 * s),
        ],
        Task::O => vec![
            Line::new(4541.0, 6.0, -0.25 * s),
            Line::new(4686.0, 6.0, -0.3 * s),
        ],
        Task::B => vec![
            Line::new(4471.0, 8.0, -0.3 * s),
            Line::new(4026.0, 8.0, -0.25 * s),
            Line::new(4861.0, 12.0, -0.2 * s),
        ],
        Task::A => vec![
            Line::new(4861.0, 20.0, -0.5 * s),
            Line::new(4340.0, 18.0, -0.45 * s),
            Line::new(6563.0, 22.0, -0.45 * s),
        ],
    }
}

/// Feature and reference windows used to measure a task's signature line.
/// The first range covers the strongest feature, the second a nearby
/// line-free stretch of continuum.
pub fn signature_windows(task: Task) -> (f64, f64, f64, f64) {
    match task {
        Task::Cv => (6543.0, 6583.0, 6700.0, 6800.0),
        Task::Cs => (5125.0, 5205.0, 5300.0, 5400.0),
        Task::Ss => (6444.0, 6504.0, 6600.0, 6700.0),
        Task::Mg => (7014.0, 7094.0, 7250.0, 7350.0),
        Task::Wd => (4811.0, 4911.0, 5100.0, 5200.0),
        Task::O => (4681.0, 4691.0, 4750.0, 4800.0),
        Task::B => (4466.0, 4476.0, 4550.0, 4600.0),
        Task::A => (4841.0, 4881.0, 5100.0, 5200.0),
    }
}

/// Builds a spectrum of class `task` whose signature feature has the given
/// strength (1 is a textbook member, 0 is a featureless continuum).
pub fn task_spectrum(
    id: impl Into<String>,
    task: Task,
    strength: f64,
    is_positive: bool,
    seed: u64,
) -> Result<Spectrum, SpectrumError> {
    let mut spec = SyntheticSpec::new(id, seed);
    spec.slope = task_slope(task);
    spec.lines = task_lines(task, strength);
    spec.label = Some(TaskLabel { task, is_positive });
    spec.generate()
}
