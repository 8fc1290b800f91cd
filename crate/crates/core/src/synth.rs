//! Calibrated synthetic corpora.
//!
//! Sample sizes are lognormal per design, with `(mu, sigma)` moment-matched
//! to a target mean and median. Each metric score thresholds a latent value
//!
//! ```text
//! t = s * u + sqrt(1 - s^2) * e,   s = strength * loading(design, metric),  e ~ N(0, 1)
//! ```
//!
//! where `u` is the record's log sample size standardised within its design
//! (or over the design mixture, see [`LatentScale`]). Terciles of `t` map to the low/middle/high score levels, so a
//! higher score goes with a larger study (expert participants score low and
//! need fewer people; heterogeneous groups score high and need more). A score
//! is finally replaced by a uniformly random level with the flip probability.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset, DesignType, Metric, Provenance, Scores, StudyRecord};
use crate::rng::{rng_for, Stream};

/// Upper tercile point of the standard normal, `Phi^-1(2/3)`.
const TERCILE: f64 = 0.430_727_299_295_457_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignDistribution {
    pub target_mean: f64,
    pub target_median: f64,
    /// Location of log sample size.
    pub mu: f64,
    /// Scale of log sample size.
    pub sigma: f64,
}

impl DesignDistribution {
    /// Moment-matches a lognormal: median = exp(mu), mean = exp(mu + sigma^2 / 2).
    pub fn from_mean_median(mean: f64, median: f64) -> Result<Self, DataError> {
        if !(median > 0.0 && mean > median) {
            return Err(DataError::InvalidConfig(format!(
                "lognormal calibration needs mean > median > 0 (mean {mean}, median {median})"
            )));
        }
        Ok(Self {
            target_mean: mean,
            target_median: median,
            mu: median.ln(),
            sigma: (2.0 * (mean / median).ln()).sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub designs: BTreeMap<DesignType, DesignDistribution>,
    /// Monotone signal strength in [0, 1].
    pub signal_strength: f64,
    /// Probability in [0, 0.5] of replacing a score with a random level.
    pub flip_probability: f64,
    pub per_design: usize,
    pub seed: u64,
    /// Low, middle and high score levels.
    pub levels: [u32; 3],
    /// How strongly each metric tracks the latent study size within each
    /// design, in [0, 1].
    pub loadings: BTreeMap<DesignType, BTreeMap<Metric, f64>>,
    pub latent: LatentScale,
}

/// Reference frame for the standardised log sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentScale {
    /// Standardised within the study's own design.
    Design,
    /// Standardised over the equal-weight mixture of all designs.
    Mixture,
}

/// Per-design (mean, median) sample sizes after trimming in the reference corpus.
pub const REFERENCE_MEAN_MEDIAN: [(DesignType, f64, f64); 5] = [
    (DesignType::EthnographicResearch, 32.4, 20.0),
    (DesignType::GroundedTheory, 26.7, 25.0),
    (DesignType::CaseStudy, 27.1, 10.0),
    (DesignType::Phenomenology, 18.0, 13.5),
    (DesignType::NarrativeResearch, 14.6, 12.0),
];

/// Loading of a metric outside its design's emphasised set.
const BACKGROUND_LOADING: f64 = 0.1;

/// Metrics each design leans on, with their loadings. Information power
/// carries full weight everywhere.
fn emphasis(design: DesignType) -> &'static [(Metric, f64)] {
    use Metric::*;
    match design {
        DesignType::Phenomenology => &[(ParticipantOriginality, 0.9), (InterviewDuration, 0.9), (Homogeneity, 0.8)],
        DesignType::EthnographicResearch => &[(ObservationDuration, 0.95), (ResearchScope, 0.9), (DataVariety, 0.9)],
        DesignType::GroundedTheory => &[(InterviewCount, 0.95), (ResearchScope, 0.9), (DataQuality, 0.8)],
        DesignType::CaseStudy => &[(DataVariety, 0.95), (Homogeneity, 0.9), (ResearchScope, 0.8)],
        DesignType::NarrativeResearch => {
            &[(InterviewDuration, 0.95), (ParticipantOriginality, 0.9), (ResearcherCompetence, 0.8)]
        }
    }
}

pub fn default_loading(design: DesignType, metric: Metric) -> f64 {
    if metric == Metric::InformationPower {
        return 1.0;
    }
    emphasis(design)
        .iter()
        .find(|(m, _)| *m == metric)
        .map_or(BACKGROUND_LOADING, |(_, l)| *l)
}

impl GeneratorConfig {
    /// Configuration calibrated to the reference per-design sample-size moments.
    pub fn calibrated(per_design: usize, signal_strength: f64, flip_probability: f64, seed: u64) -> Self {
        let designs = REFERENCE_MEAN_MEDIAN
            .iter()
            .map(|&(d, mean, median)| {
                (
                    d,
                    DesignDistribution::from_mean_median(mean, median)
                        .expect("reference moments have mean > median"),
                )
            })
            .collect();
        Self {
            designs,
            signal_strength,
            flip_probability,
            per_design,
            seed,
            levels: [15, 20, 25],
            loadings: DesignType::ALL
                .into_iter()
                .map(|d| (d, Metric::ALL.into_iter().map(|m| (m, default_loading(d, m))).collect()))
                .collect(),
            latent: LatentScale::Design,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |msg: String| Err(DataError::InvalidConfig(msg));
        if self.per_design < 1 {
            return bad("record count per design must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad(format!("signal strength {} outside [0, 1]", self.signal_strength));
        }
        if !(0.0..=0.5).contains(&self.flip_probability) {
            return bad(format!(
                "flip probability {} outside [0, 0.5]",
                self.flip_probability
            ));
        }
        for d in DesignType::ALL {
            match self.designs.get(&d) {
                None => return bad(format!("no distribution for design {d}")),
                Some(dist) if !(dist.sigma > 0.0 && dist.sigma.is_finite() && dist.mu.is_finite()) => {
                    return bad(format!("design {d}: sigma must be positive and finite"))
                }
                Some(_) => {}
            }
        }
        for d in DesignType::ALL {
            for m in Metric::ALL {
                match self.loadings.get(&d).and_then(|l| l.get(&m)) {
                    Some(l) if (0.0..=1.0).contains(l) => {}
                    _ => return bad(format!("loading for {d}/{m} missing or outside [0, 1]")),
                }
            }
        }
        if !(self.levels[0] < self.levels[1] && self.levels[1] < self.levels[2]) {
            return bad("score levels must be strictly increasing".into());
        }
        Ok(())
    }

    /// Mean and standard deviation of log sample size over the equal-weight
    /// design mixture; used to standardise the latent.
    pub fn latent_standardization(&self) -> (f64, f64) {
        let k = self.designs.len() as f64;
        let center = self.designs.values().map(|d| d.mu).sum::<f64>() / k;
        let within = self.designs.values().map(|d| d.sigma * d.sigma).sum::<f64>() / k;
        let between = self
            .designs
            .values()
            .map(|d| (d.mu - center).powi(2))
            .sum::<f64>()
            / k;
        (center, (within + between).sqrt())
    }
}

/// Score level for a latent value: low below the lower tercile, high above the upper.
pub fn level_for(latent: f64, levels: [u32; 3]) -> u32 {
    if latent <= -TERCILE {
        levels[0]
    } else if latent > TERCILE {
        levels[2]
    } else {
        levels[1]
    }
}

/// Generates `per_design` records for each design, designs in declaration
/// order. Deterministic in the configuration.
pub fn synthesize_dataset(cfg: &GeneratorConfig) -> Result<Dataset, DataError> {
    cfg.validate()?;
    let (center, scale) = cfg.latent_standardization();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut records = Vec::with_capacity(cfg.per_design * DesignType::ALL.len());
    for (ordinal, design) in DesignType::ALL.into_iter().enumerate() {
        let dist = cfg.designs[&design];
        let log_size = Normal::new(dist.mu, dist.sigma).expect("validated sigma");
        let loadings = &cfg.loadings[&design];
        let mut rng = rng_for(cfg.seed, Stream::Synth, ordinal as u64);
        for _ in 0..cfg.per_design {
            let z: f64 = log_size.sample(&mut rng);
            let sample_size = z.exp().round().clamp(1.0, f64::from(u32::MAX)) as u32;
            let u = match cfg.latent {
                LatentScale::Design => (f64::from(sample_size).ln() - dist.mu) / dist.sigma,
                LatentScale::Mixture => (f64::from(sample_size).ln() - center) / scale,
            };
            let mut scores = Scores::uniform(0);
            for m in Metric::ALL {
                let s = cfg.signal_strength * loadings[&m];
                let noise: f64 = std_normal.sample(&mut rng);
                let latent = s * u + (1.0 - s * s).max(0.0).sqrt() * noise;
                let flip: f64 = rng.random();
                let replacement = cfg.levels[rng.random_range(0..3)];
                scores[m] = if flip < cfg.flip_probability {
                    replacement
                } else {
                    level_for(latent, cfg.levels)
                };
            }
            records.push(StudyRecord {
                design,
                scores,
                sample_size,
            });
        }
    }
    Ok(Dataset::new(records, Provenance::Synthetic))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_matching() {
        let d = DesignDistribution::from_mean_median(32.4, 20.0).unwrap();
        assert!((d.mu.exp() - 20.0).abs() < 1e-12);
        assert!(((d.mu + d.sigma * d.sigma / 2.0).exp() - 32.4).abs() < 1e-9);
        assert!(DesignDistribution::from_mean_median(10.0, 12.0).is_err());
    }

    #[test]
    fn validation_bounds() {
        let mut cfg = GeneratorConfig::calibrated(10, 0.8, 0.1, 1);
        assert!(cfg.validate().is_ok());
        cfg.flip_probability = 0.6;
        assert!(cfg.validate().is_err());
        cfg.flip_probability = 0.5;
        assert!(cfg.validate().is_ok());
        cfg.per_design = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = GeneratorConfig::calibrated(10, 0.8, 0.1, 1);
        cfg.designs.get_mut(&DesignType::CaseStudy).unwrap().sigma = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn levels_are_terciles() {
        let lv = [15, 20, 25];
        assert_eq!(level_for(-1.0, lv), 15);
        assert_eq!(level_for(0.0, lv), 20);
        assert_eq!(level_for(1.0, lv), 25);
    }

    #[test]
    fn counts_and_determinism() {
        let cfg = GeneratorConfig::calibrated(30, 0.8, 0.1, 42);
        let a = synthesize_dataset(&cfg).unwrap();
        let b = synthesize_dataset(&cfg).unwrap();
        assert_eq!(a.len(), 150);
        assert_eq!(a, b);
        assert!(a.records.iter().all(|r| r.sample_size >= 1));
    }

    #[test]
    fn loadings_emphasise_three_metrics_per_design() {
        for d in DesignType::ALL {
            assert_eq!(default_loading(d, Metric::InformationPower), 1.0);
            let strong = Metric::ALL
                .into_iter()
                .filter(|&m| m != Metric::InformationPower && default_loading(d, m) > BACKGROUND_LOADING)
                .count();
            assert_eq!(strong, 3, "{d}");
        }
    }

    #[test]
    fn noiseless_information_power_is_a_step_function_within_design() {
        let cfg = GeneratorConfig::calibrated(300, 1.0, 0.0, 3);
        let ds = synthesize_dataset(&cfg).unwrap();
        for idx in ds.indices_by_design().values() {
            let mut pairs: Vec<(u32, u32)> = idx
                .iter()
                .map(|&i| {
                    let r = &ds.records[i];
                    (r.sample_size, r.scores[Metric::InformationPower])
                })
                .collect();
            pairs.sort_unstable();
            assert!(pairs.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}
