//! Run configuration: model parameters, classifier settings and flags, read
//! from `key = value` files with command-line overrides.

use std::path::Path;

use crate::contrast::ContrastParams;
use crate::error::{Error, Result};
use crate::kv::{parse_bool, parse_key_values, parse_num, parse_override};
use crate::motion::PipelineParams;
use crate::mushroom::ClassifierParams;

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub pipeline: PipelineParams,
    pub contrast: ContrastParams,
    pub classifier: ClassifierParams,
    pub contrast_pathway: bool,
    /// Score undecided traces as detections during evaluation.
    pub include_undecided: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineParams::default(),
            contrast: ContrastParams::default(),
            classifier: ClassifierParams::default(),
            contrast_pathway: true,
            include_undecided: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "sigma1",
    "n1",
    "tau1",
    "n2",
    "tau2",
    "alpha1",
    "n3",
    "tau3",
    "n4",
    "tau4",
    "n5",
    "tau5",
    "A",
    "B",
    "e",
    "rho",
    "sigma2",
    "sigma3",
    "eta",
    "alpha2",
    "beta",
    "gamma",
    "m",
    "match_radius",
    "max_gap",
    "nms_radius",
    "contrast_pathway",
    "min_trace_len",
    "include_undecided",
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (k, v) in parse_key_values(text)? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = parse_override(o.as_ref())?;
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.pipeline;
        let c = &mut self.classifier;
        let f = |v: &str| parse_num::<f64>(key, v);
        let n = |v: &str| parse_num::<u32>(key, v);
        match key {
            "sigma1" => p.sigma1 = f(value)?,
            "n1" => p.lmc_fast.order = n(value)?,
            "tau1" => p.lmc_fast.tau = f(value)?,
            "n2" => p.lmc_slow.order = n(value)?,
            "tau2" => p.lmc_slow.tau = f(value)?,
            "alpha1" => p.alpha1 = n(value)?,
            "n3" => p.mi1.order = n(value)?,
            "tau3" => p.mi1.tau = f(value)?,
            "n4" => p.tm1_fast.order = n(value)?,
            "tau4" => p.tm1_fast.tau = f(value)?,
            "n5" => p.tm1_slow.order = n(value)?,
            "tau5" => p.tm1_slow.tau = f(value)?,
            "A" => p.inhibition.a = f(value)?,
            "B" => p.inhibition.b = f(value)?,
            "e" => p.inhibition.e = f(value)?,
            "rho" => p.inhibition.rho = f(value)?,
            "sigma2" => p.inhibition.sigma2 = f(value)?,
            "sigma3" => p.inhibition.sigma3 = f(value)?,
            "eta" => self.contrast.eta = f(value)?,
            "alpha2" => self.contrast.alpha2 = f(value)?,
            "beta" => p.beta = Some(f(value)?),
            "gamma" => c.gamma = f(value)?,
            "m" => c.samples = parse_num(key, value)?,
            "match_radius" => c.match_radius = f(value)?,
            "max_gap" => c.max_gap = parse_num(key, value)?,
            "nms_radius" => c.nms_radius = f(value)?,
            "min_trace_len" => c.min_trace_len = parse_num(key, value)?,
            "contrast_pathway" => self.contrast_pathway = parse_bool(key, value)?,
            "include_undecided" => self.include_undecided = parse_bool(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown config key {key:?}; known keys: {}",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Checks every parameter group, reporting failures as config errors.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        };
        self.pipeline.validate().map_err(as_config)?;
        self.contrast.validate().map_err(as_config)?;
        self.classifier.validate().map_err(as_config)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::GammaSpec;

    #[test]
    fn defaults_are_table_values() {
        let c = RunConfig::default();
        let p = &c.pipeline;
        assert_eq!(p.sigma1, 1.0);
        assert_eq!(p.lmc_fast, GammaSpec::new(2, 3.0));
        assert_eq!(p.lmc_slow, GammaSpec::new(6, 9.0));
        assert_eq!(p.alpha1, 3);
        assert_eq!(p.mi1, GammaSpec::new(3, 15.0));
        assert_eq!(p.tm1_fast, GammaSpec::new(5, 25.0));
        assert_eq!(p.tm1_slow, GammaSpec::new(8, 40.0));
        let i = p.inhibition;
        assert_eq!(
            (i.a, i.b, i.sigma2, i.sigma3, i.e, i.rho),
            (1.0, 3.0, 1.5, 3.0, 1.0, 0.0)
        );
        assert_eq!((c.contrast.eta, c.contrast.alpha2), (1.5, 3.0));
        assert_eq!(c.classifier.gamma, 10.0);
        assert!(c.contrast_pathway);
        assert!(p.beta.is_none());
    }

    #[test]
    fn every_key_settable() {
        let mut c = RunConfig::default();
        for k in CONFIG_KEYS {
            let v = match *k {
                "contrast_pathway" | "include_undecided" => "false",
                _ => "7",
            };
            c.set(k, v).unwrap();
        }
        assert_eq!(c.pipeline.lmc_slow.tau, 7.0);
        assert_eq!(c.pipeline.beta, Some(7.0));
        assert_eq!(c.classifier.samples, 7);
        assert!(!c.contrast_pathway);
    }

    #[test]
    fn parse_and_override() {
        let mut c = RunConfig::parse("beta = 2.5\ncontrast_pathway = off\n").unwrap();
        assert_eq!(c.pipeline.beta, Some(2.5));
        assert!(!c.contrast_pathway);
        c.apply_overrides(&["beta=4", "m = 400"]).unwrap();
        assert_eq!(c.pipeline.beta, Some(4.0));
        assert_eq!(c.classifier.samples, 400);
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("beta = x"), Err(Error::Config(_))));
        let bad = RunConfig::parse("sigma3 = 1").unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
