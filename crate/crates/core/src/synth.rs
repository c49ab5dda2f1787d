//! Seeded synthetic episode generator.
//!
//! Stands in for simulator output at desk scale: each channel follows its
//! baseline through the normal stage, ramps linearly to `baseline +
//! fault_shift` across the transient stage, holds the shifted level while
//! faulty, and carries Gaussian noise throughout. Noise comes from a
//! ChaCha8 stream seeded per episode, so the same spec reproduces the same
//! samples bit for bit on one platform, and reimplementations can match
//! moments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::model::{Episode, EventType, Sample, Source, Stage, WINDOW_LEN};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SynthError {
    #[error("baselines, noise_sd and fault_shift must share one length")]
    ChannelMismatch,
    #[error("episode must be at least {WINDOW_LEN} seconds long")]
    TooShort,
    #[error("noise_sd entries must be non-negative")]
    NegativeNoise,
}

/// Recipe for one synthetic episode.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub event: EventType,
    pub normal_len: usize,
    pub transient_len: usize,
    pub faulty_len: usize,
    /// Per-channel quiescent level.
    pub baselines: Vec<f64>,
    /// Per-channel Gaussian noise standard deviation.
    pub noise_sd: Vec<f64>,
    /// Per-channel additive offset reached at faulty onset.
    pub fault_shift: Vec<f64>,
    pub seed: u64,
}

impl SynthSpec {
    /// Default desk-scale recipe for one event: a 10-minute episode with
    /// pressure- and temperature-scaled channels whose fault shifts dwarf
    /// the noise.
    pub fn for_event(event: EventType) -> SynthSpec {
        SynthSpec {
            event,
            normal_len: 300,
            transient_len: 120,
            faulty_len: 180,
            baselines: vec![2.0e7, 80.0, 1.5e7, 5.0e6, 40.0],
            noise_sd: vec![2.0e5, 0.8, 1.5e5, 5.0e4, 0.4],
            fault_shift: vec![-4.0e6, -12.0, 3.0e6, -1.0e6, -8.0],
            seed: 0,
        }
    }

    pub fn total_len(&self) -> usize {
        self.normal_len + self.transient_len + self.faulty_len
    }

    fn check(&self) -> Result<(), SynthError> {
        let f = self.baselines.len();
        if self.noise_sd.len() != f || self.fault_shift.len() != f {
            return Err(SynthError::ChannelMismatch);
        }
        if self.total_len() < WINDOW_LEN {
            return Err(SynthError::TooShort);
        }
        if self.noise_sd.iter().any(|&s| s < 0.0) {
            return Err(SynthError::NegativeNoise);
        }
        Ok(())
    }
}

/// Default channel names match the ingestion module's default column
/// mapping so generated CSV files load back without configuration.
pub fn default_channel_names() -> Vec<String> {
    ["P1", "T1", "P2", "P3", "T2"].iter().map(|s| s.to_string()).collect()
}

/// Ramp value at second `t`: 0 while normal, `shift * i/(L+1)` at the i-th
/// transient second (1-based), and `shift` once faulty. Mirrors the
/// probability interpolation so signal and target move together.
fn ramp_fraction(t: usize, normal: usize, transient: usize) -> f64 {
    if t < normal {
        0.0
    } else if t < normal + transient {
        (t - normal + 1) as f64 / (transient + 1) as f64
    } else {
        1.0
    }
}

/// Generate one episode from a spec. Deterministic given the spec.
pub fn generate_episode(spec: &SynthSpec, id: &str) -> Result<Episode, SynthError> {
    spec.check()?;
    let f = spec.baselines.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise: Vec<Option<Normal<f64>>> = spec
        .noise_sd
        .iter()
        .map(|&sd| if sd > 0.0 { Some(Normal::new(0.0, sd).unwrap()) } else { None })
        .collect();
    let has_event = spec.transient_len + spec.faulty_len > 0;
    let total = spec.total_len();
    let mut samples = Vec::with_capacity(total);
    for t in 0..total {
        let fraction = ramp_fraction(t, spec.normal_len, spec.transient_len);
        let mut channels = Vec::with_capacity(f);
        for (c, dist) in noise.iter().enumerate() {
            let mut v = spec.baselines[c] + fraction * spec.fault_shift[c];
            if let Some(dist) = dist {
                v += dist.sample(&mut rng);
            }
            channels.push(v);
        }
        let stage = if t < spec.normal_len {
            Stage::Normal
        } else if t < spec.normal_len + spec.transient_len {
            Stage::Transient(spec.event)
        } else {
            Stage::Faulty(spec.event)
        };
        samples.push(Sample::new(t as i64, channels, stage));
    }
    Ok(Episode {
        id: id.to_string(),
        source: Source::Synthetic,
        event: if has_event { Some(spec.event) } else { None },
        samples,
        channel_names: default_channel_names()
            .into_iter()
            .take(f)
            .chain((5..f).map(|i| format!("C{}", i + 1)))
            .collect(),
    })
}

/// Generate a dataset: one episode per event spec plus `normals`
/// pure-normal episodes. Per-episode seeds are `master_seed + index` with
/// event episodes first; normal episodes reuse the specs round-robin with
/// the whole duration relabeled normal, so changing the master seed changes
/// the noise but never the stage boundaries.
pub fn generate_dataset(
    specs: &[SynthSpec],
    normals: usize,
    master_seed: u64,
) -> Result<Vec<Episode>, SynthError> {
    let mut episodes = Vec::with_capacity(specs.len() + normals);
    for (i, spec) in specs.iter().enumerate() {
        let mut s = spec.clone();
        s.seed = master_seed.wrapping_add(i as u64);
        let id = format!("synth-ev{}-{:04}", spec.event.code(), i);
        episodes.push(generate_episode(&s, &id)?);
    }
    for j in 0..normals {
        let template = &specs[j % specs.len()];
        let spec = SynthSpec {
            event: template.event,
            normal_len: template.total_len(),
            transient_len: 0,
            faulty_len: 0,
            baselines: template.baselines.clone(),
            noise_sd: template.noise_sd.clone(),
            fault_shift: vec![0.0; template.baselines.len()],
            seed: master_seed.wrapping_add((specs.len() + j) as u64),
        };
        let id = format!("synth-normal-{j:04}");
        episodes.push(generate_episode(&spec, &id)?);
    }
    Ok(episodes)
}
