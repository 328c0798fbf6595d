//! Pipeline options from an optional JSON file, overridden by flags.

use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;

use confsel_core::matching::DistanceKind;
use confsel_core::{Dataset, Error, EstimatorKind, PipelineConfig};

#[derive(Args, Debug, Default)]
pub struct PipelineFlags {
    /// JSON file with pipeline settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Odd window width for Cochran's Q (presets 3, 5, 7).
    #[arg(long)]
    window: Option<usize>,
    /// Benchmark orbit (default: the last).
    #[arg(long)]
    benchmark: Option<usize>,
    /// Only select orbits with |standardized difference| below this.
    #[arg(long)]
    band: Option<f64>,
    /// Randomization draws.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `dr` (doubly robust standardization) or `ols`.
    #[arg(long)]
    estimator: Option<String>,
    /// Covariate labels forced to the front of the ordering.
    #[arg(long, value_delimiter = ',')]
    pin_high: Option<Vec<String>>,
    /// Covariate labels forced to the back of the ordering.
    #[arg(long, value_delimiter = ',')]
    pin_low: Option<Vec<String>>,
    /// Randomization seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Warn when an inverse probability weight exceeds this.
    #[arg(long)]
    weight_warn: Option<f64>,
    /// `abs_logit_ps` or `abs_ps`.
    #[arg(long)]
    distance: Option<DistanceKind>,
    #[arg(long)]
    max_controls_per_treated: Option<usize>,
    #[arg(long)]
    max_treated_per_control: Option<usize>,
}

/// File form of the pipeline settings; covariates are named by label.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    window_width: Option<usize>,
    benchmark_orbit: Option<usize>,
    band: Option<f64>,
    draws: Option<usize>,
    alpha: Option<f64>,
    estimator: Option<String>,
    pinned_high: Option<Vec<String>>,
    pinned_low: Option<Vec<String>>,
    seed: Option<u64>,
    weight_warn: Option<f64>,
    distance: Option<DistanceKind>,
    max_controls_per_treated: Option<usize>,
    max_treated_per_control: Option<usize>,
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, Error> {
    match s {
        "dr" | "doubly_robust_standardization" => Ok(EstimatorKind::DoublyRobustStandardization),
        "ols" | "ols_linear" => Ok(EstimatorKind::OlsLinear),
        other => Err(Error::InvalidInput(format!("unknown estimator `{other}` (dr, ols)"))),
    }
}

/// Column indices of the named covariates.
pub fn resolve_labels(data: &Dataset, names: &[String]) -> Result<Vec<usize>, Error> {
    names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|name| {
            data.labels()
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| Error::InvalidInput(format!("unknown covariate `{name}`")))
        })
        .collect()
}

impl PipelineFlags {
    fn merged(&self) -> Result<FileConfig, Error> {
        let mut f: FileConfig = match &self.config {
            Some(path) => serde_json::from_reader(std::fs::File::open(path)?)?,
            None => FileConfig::default(),
        };
        macro_rules! flag {
            ($flag:ident => $field:ident) => {
                if let Some(v) = &self.$flag {
                    f.$field = Some(v.clone());
                }
            };
        }
        flag!(window => window_width);
        flag!(benchmark => benchmark_orbit);
        flag!(band => band);
        flag!(draws => draws);
        flag!(alpha => alpha);
        flag!(estimator => estimator);
        flag!(pin_high => pinned_high);
        flag!(pin_low => pinned_low);
        flag!(seed => seed);
        flag!(weight_warn => weight_warn);
        flag!(distance => distance);
        flag!(max_controls_per_treated => max_controls_per_treated);
        flag!(max_treated_per_control => max_treated_per_control);
        Ok(f)
    }

    fn apply(f: FileConfig, mut c: PipelineConfig) -> Result<PipelineConfig, Error> {
        if let Some(v) = f.window_width {
            c.window_width = v;
        }
        if f.benchmark_orbit.is_some() {
            c.benchmark_orbit = f.benchmark_orbit;
        }
        if f.band.is_some() {
            c.band = f.band;
        }
        if let Some(v) = f.draws {
            c.draws = v;
        }
        if let Some(v) = f.alpha {
            c.alpha = v;
        }
        if let Some(v) = &f.estimator {
            c.estimator = parse_estimator(v)?;
        }
        if let Some(v) = f.seed {
            c.seed = v;
        }
        if let Some(v) = f.weight_warn {
            c.weight_warn = v;
        }
        if let Some(v) = f.distance {
            c.matching.distance = v;
        }
        if f.max_controls_per_treated.is_some() {
            c.matching.max_controls_per_treated = f.max_controls_per_treated;
        }
        if f.max_treated_per_control.is_some() {
            c.matching.max_treated_per_control = f.max_treated_per_control;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn resolve(&self, data: &Dataset) -> Result<PipelineConfig, Error> {
        let f = self.merged()?;
        let pinned_high = f.pinned_high.clone();
        let pinned_low = f.pinned_low.clone();
        let mut c = Self::apply(f, PipelineConfig::default())?;
        if let Some(names) = pinned_high {
            c.pinned_high = resolve_labels(data, &names)?;
        }
        if let Some(names) = pinned_low {
            c.pinned_low = resolve_labels(data, &names)?;
        }
        Ok(c)
    }

    /// Seed and alpha after merging the file with the flags.
    pub fn seed_and_alpha(&self) -> Result<(Option<u64>, Option<f64>), Error> {
        let f = self.merged()?;
        Ok((f.seed, f.alpha))
    }

    /// Settings for simulated data, where pins are meaningless.
    pub fn resolve_simulation(&self, base: PipelineConfig) -> Result<PipelineConfig, Error> {
        let f = self.merged()?;
        if f.pinned_high.is_some() || f.pinned_low.is_some() {
            return Err(Error::InvalidInput("pinned covariates are not supported for simulations".into()));
        }
        Self::apply(f, base)
    }
}
