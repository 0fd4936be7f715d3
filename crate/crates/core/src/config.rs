//! Plain-text `key = value` configuration covering every pipeline knob.
//!
//! Blank lines and `#` comments are ignored; keys not listed in
//! [`PipelineConfig::KEYS`] are rejected and missing keys keep their
//! defaults.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::cascade::CascadeParams;
use crate::costvolume::{Aggregation, AggregationConfig, SgmPaths};
use crate::features::FeatureConfig;
use crate::pseudolabel::{AreaFilterConfig, DEFAULT_T_AREA, DEFAULT_T_PIXEL};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub cascade: CascadeParams,
    pub features: FeatureConfig,
    pub t_pixel: f64,
    pub t_area: f64,
    pub area: AreaFilterConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cascade: CascadeParams::default(),
            features: FeatureConfig::default(),
            t_pixel: DEFAULT_T_PIXEL,
            t_area: DEFAULT_T_AREA,
            area: AreaFilterConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "d_max",
        "planes_stage2",
        "planes_stage1",
        "alpha_3",
        "alpha_2",
        "beta_3",
        "beta_2",
        "aggregation",
        "box_radius",
        "tau",
        "sgm_p1",
        "sgm_p2",
        "census_radius",
        "groups",
        "gradients",
        "t_pixel",
        "t_area",
        "area_radius",
        "area_sigma_color",
        "area_sigma_disp",
        "area_m",
        "area_s",
    ];

    pub fn validate(&self) -> Result<()> {
        self.cascade.validate()?;
        self.features.validate()?;
        self.area.validate()?;
        if [self.t_pixel, self.t_area]
            .iter()
            .any(|t| t.is_nan() || *t < 0.0)
        {
            return Err(Error::InvalidParameter("thresholds must be >= 0".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let cfg_err = |message: String| Error::Config { line, message };
        let float = || -> Result<f64> {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| cfg_err(format!("{key}: expected a number, got {value:?}")))
        };
        let int = || -> Result<usize> {
            value
                .parse::<usize>()
                .map_err(|_| cfg_err(format!("{key}: expected an integer, got {value:?}")))
        };
        let agg = &mut self.cascade.aggregation;
        match key {
            "d_max" => self.cascade.d_max = int()?,
            "planes_stage2" => self.cascade.planes_stage2 = int()?,
            "planes_stage1" => self.cascade.planes_stage1 = int()?,
            "alpha_3" => self.cascade.alpha[0] = float()?,
            "alpha_2" => self.cascade.alpha[1] = float()?,
            "beta_3" => self.cascade.beta[0] = float()?,
            "beta_2" => self.cascade.beta[1] = float()?,
            "aggregation" => {
                let (p1, p2) = penalties(agg);
                agg.method = match value {
                    "sgm4" => Aggregation::Sgm {
                        p1,
                        p2,
                        paths: SgmPaths::Four,
                    },
                    "sgm2" => Aggregation::Sgm {
                        p1,
                        p2,
                        paths: SgmPaths::Horizontal,
                    },
                    "box" => Aggregation::Box {
                        radius: box_radius(agg),
                    },
                    _ => {
                        return Err(cfg_err(format!(
                            "aggregation: expected sgm4, sgm2 or box, got {value:?}"
                        )))
                    }
                }
            }
            "box_radius" => {
                let r = int()?;
                match &mut agg.method {
                    Aggregation::Box { radius } => *radius = r,
                    Aggregation::Sgm { .. } => {
                        return Err(cfg_err("box_radius set but aggregation is not box".into()))
                    }
                }
            }
            "tau" => agg.temperature = float()?,
            "sgm_p1" | "sgm_p2" => {
                let v = float()?;
                match &mut agg.method {
                    Aggregation::Sgm { p1, p2, .. } => {
                        if key == "sgm_p1" {
                            *p1 = v
                        } else {
                            *p2 = v
                        }
                    }
                    Aggregation::Box { .. } => {
                        return Err(cfg_err(format!("{key} set but aggregation is box")))
                    }
                }
            }
            "census_radius" => self.features.census_radius = int()?,
            "groups" => self.features.group_count = int()?,
            "gradients" => {
                self.features.include_gradients = value.parse().map_err(|_| {
                    cfg_err(format!("gradients: expected true or false, got {value:?}"))
                })?
            }
            "t_pixel" => self.t_pixel = float()?,
            "t_area" => self.t_area = float()?,
            "area_radius" => self.area.radius = int()?,
            "area_sigma_color" => self.area.sigma_color = float()?,
            "area_sigma_disp" => self.area.sigma_disparity = float()?,
            "area_m" => self.area.midpoint = float()?,
            "area_s" => self.area.slope = float()?,
            _ => return Err(cfg_err(format!("unknown key {key:?}"))),
        }
        Ok(())
    }
}

fn penalties(agg: &AggregationConfig) -> (f64, f64) {
    match agg.method {
        Aggregation::Sgm { p1, p2, .. } => (p1, p2),
        Aggregation::Box { .. } => match AggregationConfig::default().method {
            Aggregation::Sgm { p1, p2, .. } => (p1, p2),
            Aggregation::Box { .. } => unreachable!(),
        },
    }
}

fn box_radius(agg: &AggregationConfig) -> usize {
    match agg.method {
        Aggregation::Box { radius } => radius,
        Aggregation::Sgm { .. } => 2,
    }
}

impl FromStr for PipelineConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        // `aggregation` first, so penalties and radius land on the right variant
        let mut entries: Vec<(usize, &str, &str)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (k, v) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                message: format!("expected `key = value`, got {content:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if seen.contains(&k) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key {k:?}"),
                });
            }
            seen.push(k);
            entries.push((line, k, v));
        }
        entries.sort_by_key(|&(_, k, _)| k != "aggregation");
        for (line, k, v) in entries {
            cfg.set(k, v, line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl std::fmt::Display for PipelineConfig {
    /// Every key, one per line, in [`Self::KEYS`] order. Floats use the
    /// shortest round-tripping form, so parsing the output is lossless.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let c = &self.cascade;
        let agg = &c.aggregation;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("d_max", c.d_max.to_string());
        kv("planes_stage2", c.planes_stage2.to_string());
        kv("planes_stage1", c.planes_stage1.to_string());
        kv("alpha_3", c.alpha[0].to_string());
        kv("alpha_2", c.alpha[1].to_string());
        kv("beta_3", c.beta[0].to_string());
        kv("beta_2", c.beta[1].to_string());
        match agg.method {
            Aggregation::Sgm { p1, p2, paths } => {
                let name = match paths {
                    SgmPaths::Four => "sgm4",
                    SgmPaths::Horizontal => "sgm2",
                };
                kv("aggregation", name.into());
                kv("sgm_p1", p1.to_string());
                kv("sgm_p2", p2.to_string());
            }
            Aggregation::Box { radius } => {
                kv("aggregation", "box".into());
                kv("box_radius", radius.to_string());
            }
        }
        kv("tau", agg.temperature.to_string());
        kv("census_radius", self.features.census_radius.to_string());
        kv("groups", self.features.group_count.to_string());
        kv("gradients", self.features.include_gradients.to_string());
        kv("t_pixel", self.t_pixel.to_string());
        kv("t_area", self.t_area.to_string());
        kv("area_radius", self.area.radius.to_string());
        kv("area_sigma_color", self.area.sigma_color.to_string());
        kv("area_sigma_disp", self.area.sigma_disparity.to_string());
        kv("area_m", self.area.midpoint.to_string());
        kv("area_s", self.area.slope.to_string());
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(
            "".parse::<PipelineConfig>().unwrap(),
            PipelineConfig::default()
        );
        assert_eq!(
            "# nothing\n\n".parse::<PipelineConfig>().unwrap(),
            PipelineConfig::default()
        );
        let d = PipelineConfig::default();
        assert_eq!(
            (
                d.cascade.d_max,
                d.cascade.planes_stage2,
                d.cascade.planes_stage1
            ),
            (256, 16, 12)
        );
        assert_eq!((d.t_pixel, d.t_area), (0.9, 0.2));
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg: PipelineConfig = "d_max = 64  # small\nalpha_3=0.5\nsgm_p1 = 0.01\nt_area = 1"
            .parse()
            .unwrap();
        assert_eq!(cfg.cascade.d_max, 64);
        assert_eq!(cfg.cascade.alpha, [0.5, 0.0]);
        assert_eq!(cfg.t_area, 1.0);
        assert!(
            matches!(cfg.cascade.aggregation.method, Aggregation::Sgm { p1, .. } if p1 == 0.01)
        );
    }

    #[test]
    fn rejects_bad_input() {
        let err = "d_max = 64\nfoo = 1".parse::<PipelineConfig>().unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!("d_max 64".parse::<PipelineConfig>().is_err());
        assert!("d_max = 63".parse::<PipelineConfig>().is_err());
        assert!("tau = abc".parse::<PipelineConfig>().is_err());
        assert!("tau = 1\ntau = 2".parse::<PipelineConfig>().is_err());
        assert!("sgm_p1 = 0.5\nsgm_p2 = 0.1"
            .parse::<PipelineConfig>()
            .is_err());
        assert!("aggregation = box\nsgm_p1 = 0.1"
            .parse::<PipelineConfig>()
            .is_err());
    }

    #[test]
    fn box_aggregation_in_any_order() {
        let cfg: PipelineConfig = "box_radius = 4\naggregation = box".parse().unwrap();
        assert_eq!(
            cfg.cascade.aggregation.method,
            Aggregation::Box { radius: 4 }
        );
        let back: PipelineConfig = cfg.to_string().parse().unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_key_is_written() {
        let text = PipelineConfig::default().to_string();
        for k in PipelineConfig::KEYS {
            if *k == "box_radius" {
                continue;
            }
            assert!(text.contains(&format!("{k} = ")), "{k}");
        }
    }

    proptest! {
        #[test]
        fn round_trip(a3 in -1.0f64..3.0, b2 in 0.0f64..4.0, tau in 0.01f64..2.0, p1 in 0.0f64..0.5, extra in 0.0f64..0.5, m in -2.0f64..3.0, horizontal in any::<bool>()) {
            let mut cfg = PipelineConfig::default();
            cfg.cascade.alpha[0] = a3;
            cfg.cascade.beta[1] = b2;
            cfg.cascade.aggregation = AggregationConfig {
                method: Aggregation::Sgm { p1, p2: p1 + extra, paths: if horizontal { SgmPaths::Horizontal } else { SgmPaths::Four } },
                temperature: tau,
            };
            cfg.area.midpoint = m;
            let back: PipelineConfig = cfg.to_string().parse().unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
