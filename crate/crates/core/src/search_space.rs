//! Hyperparameter domains, sampling, and the unit-cube transform used by TPE.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Domain of a single scalar hyperparameter.
///
/// `IntUniform` is inclusive on both ends. Integer values are carried as `f64`
/// holding an integral value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ParamDomain {
    #[serde(rename = "loguniform")]
    LogUniform { lo: f64, hi: f64 },
    #[serde(rename = "uniform")]
    Uniform { lo: f64, hi: f64 },
    #[serde(rename = "int")]
    IntUniform { lo: i64, hi: i64 },
}

impl ParamDomain {
    pub fn log_uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = ParamDomain::LogUniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let d = ParamDomain::Uniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn int_uniform(lo: i64, hi: i64) -> Result<Self> {
        let d = ParamDomain::IntUniform { lo, hi };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ParamDomain::LogUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || lo >= hi {
                    return Err(Error::InvalidDomain(format!(
                        "loguniform needs 0 < lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            ParamDomain::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                    return Err(Error::InvalidDomain(format!(
                        "uniform needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            ParamDomain::IntUniform { lo, hi } => {
                if lo >= hi {
                    return Err(Error::InvalidDomain(format!(
                        "int needs lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bounds as reals.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            ParamDomain::LogUniform { lo, hi } | ParamDomain::Uniform { lo, hi } => (lo, hi),
            ParamDomain::IntUniform { lo, hi } => (lo as f64, hi as f64),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let (lo, hi) = self.bounds();
        let in_range = v.is_finite() && lo <= v && v <= hi;
        match self {
            ParamDomain::IntUniform { .. } => in_range && v.fract() == 0.0,
            _ => in_range,
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self, ParamDomain::IntUniform { .. })
    }

    /// Maps a domain value into [0, 1].
    pub fn to_unit(&self, v: f64) -> Result<f64> {
        let (lo, hi) = self.bounds();
        if !(v.is_finite() && lo <= v && v <= hi) {
            return Err(Error::OutOfDomain { value: v, lo, hi });
        }
        let u = match *self {
            ParamDomain::LogUniform { lo, hi } => (v.ln() - lo.ln()) / (hi.ln() - lo.ln()),
            ParamDomain::Uniform { lo, hi } => (v - lo) / (hi - lo),
            ParamDomain::IntUniform { lo, hi } => (v - lo as f64) / (hi - lo) as f64,
        };
        Ok(u.clamp(0.0, 1.0))
    }

    /// Inverse of [`to_unit`](Self::to_unit). Integer domains round half-up.
    pub fn from_unit(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfDomain {
                value: u,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let v = match *self {
            ParamDomain::LogUniform { lo, hi } => {
                if u == 0.0 {
                    lo
                } else if u == 1.0 {
                    hi
                } else {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp().clamp(lo, hi)
                }
            }
            ParamDomain::Uniform { lo, hi } => (lo + u * (hi - lo)).clamp(lo, hi),
            ParamDomain::IntUniform { lo, hi } => {
                let x = lo as f64 + u * (hi - lo) as f64;
                (x + 0.5).floor().clamp(lo as f64, hi as f64)
            }
        };
        Ok(v)
    }

    /// Maps a uniform draw `u ∈ [0, 1)` to a sample of the domain.
    ///
    /// Continuous domains reuse the unit transform (so log-uniform draws are
    /// uniform in log space); integers split [0, 1) into `hi − lo + 1` equal
    /// cells so every value is equally likely.
    pub fn value_from_draw(&self, u: f64) -> f64 {
        match *self {
            ParamDomain::IntUniform { lo, hi } => {
                let span = (hi - lo + 1) as f64;
                (lo as f64 + (u * span).floor()).min(hi as f64)
            }
            _ => self
                .from_unit(u.clamp(0.0, 1.0))
                .expect("clamped draw is in [0, 1]"),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.value_from_draw(rng.random::<f64>())
    }
}

/// One named dimension of a search space, in the config-file layout
/// `{name, type, lo, hi}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub domain: ParamDomain,
}

/// Ordered list of named domains. The order fixes the vector layout used by
/// the TPE sampler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ParamSpec>", into = "Vec<ParamSpec>")]
pub struct SearchSpace {
    params: Vec<ParamSpec>,
}

impl TryFrom<Vec<ParamSpec>> for SearchSpace {
    type Error = Error;

    fn try_from(params: Vec<ParamSpec>) -> Result<Self> {
        SearchSpace::new(params)
    }
}

impl From<SearchSpace> for Vec<ParamSpec> {
    fn from(space: SearchSpace) -> Self {
        space.params
    }
}

impl SearchSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::InvalidSpace("no dimensions".into()));
        }
        for (i, p) in params.iter().enumerate() {
            if p.name.is_empty() {
                return Err(Error::InvalidSpace(format!("dimension {i} has an empty name")));
            }
            if params[..i].iter().any(|q| q.name == p.name) {
                return Err(Error::InvalidSpace(format!("duplicate name `{}`", p.name)));
            }
            p.domain.validate()?;
        }
        Ok(SearchSpace { params })
    }

    pub fn from_domains<S: Into<String>>(dims: impl IntoIterator<Item = (S, ParamDomain)>) -> Result<Self> {
        Self::new(
            dims.into_iter()
                .map(|(name, domain)| ParamSpec {
                    name: name.into(),
                    domain,
                })
                .collect(),
        )
    }

    /// Learning rate `l`, weight decay `w`, momentum complement `m` (trainers
    /// use momentum `1 − m`) and batch size `b`.
    pub fn default_space() -> Self {
        Self::from_domains([
            ("l", ParamDomain::LogUniform { lo: 1e-6, hi: 10.0 }),
            ("w", ParamDomain::LogUniform { lo: 1e-6, hi: 10.0 }),
            ("m", ParamDomain::LogUniform { lo: 1e-6, hi: 1.0 }),
            ("b", ParamDomain::IntUniform { lo: 16, hi: 256 }),
        ])
        .expect("default space is valid")
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    pub fn domain(&self, name: &str) -> Option<&ParamDomain> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.domain)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, origin: impl Into<String>) -> Config {
        Config {
            values: self
                .params
                .iter()
                .map(|p| (p.name.clone(), p.domain.sample(rng)))
                .collect(),
            origin: origin.into(),
        }
    }

    /// Checks that `config` has exactly one in-domain value per dimension.
    pub fn validate_config(&self, config: &Config) -> Result<()> {
        for p in &self.params {
            let v = config
                .get(&p.name)
                .ok_or_else(|| Error::MissingDimension(p.name.clone()))?;
            if !p.domain.contains(v) {
                let (lo, hi) = p.domain.bounds();
                return Err(Error::OutOfDomain { value: v, lo, hi });
            }
        }
        if config.values.len() != self.params.len() {
            return Err(Error::InvalidSpace(format!(
                "config has {} values for a {}-dimensional space",
                config.values.len(),
                self.params.len()
            )));
        }
        Ok(())
    }

    pub fn to_unit_vec(&self, config: &Config) -> Result<Vec<f64>> {
        self.params
            .iter()
            .map(|p| {
                let v = config
                    .get(&p.name)
                    .ok_or_else(|| Error::MissingDimension(p.name.clone()))?;
                p.domain.to_unit(v)
            })
            .collect()
    }

    pub fn config_from_unit(&self, unit: &[f64], origin: impl Into<String>) -> Result<Config> {
        if unit.len() != self.params.len() {
            return Err(Error::InvalidSpace(format!(
                "unit vector has {} entries for a {}-dimensional space",
                unit.len(),
                self.params.len()
            )));
        }
        let values = self
            .params
            .iter()
            .zip(unit)
            .map(|(p, &u)| Ok((p.name.clone(), p.domain.from_unit(u)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Config {
            values,
            origin: origin.into(),
        })
    }
}

/// One point of a search space plus a tag recording where it came from
/// (e.g. `random`, `tpe`).
///
/// Values serialize as 17-significant-digit decimal strings so that logs
/// replay bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    #[serde(with = "exact_values")]
    pub values: Vec<(String, f64)>,
    pub origin: String,
}

impl Config {
    pub fn new<S: Into<String>>(values: impl IntoIterator<Item = (S, f64)>, origin: impl Into<String>) -> Self {
        Config {
            values: values.into_iter().map(|(k, v)| (k.into(), v)).collect(),
            origin: origin.into(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }

    pub fn require(&self, name: &str) -> Result<f64> {
        self.get(name)
            .ok_or_else(|| Error::MissingDimension(name.to_string()))
    }
}

/// Formats `v` with 17 significant digits, enough to round-trip any `f64`.
pub fn format_exact(v: f64) -> String {
    format!("{v:.16e}")
}

mod exact_values {
    use std::fmt;

    use serde::de::{MapAccess, Visitor};
    use serde::ser::SerializeMap;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[(String, f64)], s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(values.len()))?;
        for (k, v) in values {
            map.serialize_entry(k, &super::format_exact(*v))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(String, f64)>, D::Error> {
        struct Ordered;

        impl<'de> Visitor<'de> for Ordered {
            type Value = Vec<(String, f64)>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of parameter name to decimal string")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, String>()? {
                    let x: f64 = v
                        .parse()
                        .map_err(|_| serde::de::Error::custom(format!("bad number `{v}` for `{k}`")))?;
                    out.push((k, x));
                }
                Ok(out)
            }
        }

        d.deserialize_map(Ordered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding;

    const LR: ParamDomain = ParamDomain::LogUniform { lo: 1e-6, hi: 10.0 };

    #[test]
    fn default_space_covers_baseline() {
        let space = SearchSpace::default_space();
        assert_eq!(space.domain("l"), Some(&LR));
        assert_eq!(space.domain("w"), Some(&LR));
        // momentum 0.9 is stored as m = 1 - 0.9
        assert!(space.domain("m").unwrap().contains(1.0 - 0.9));
        assert!(space.domain("b").unwrap().contains(128.0));
        assert!(space.domain("l").unwrap().contains(0.1));
        assert!(space.domain("w").unwrap().contains(5e-4));
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(ParamDomain::log_uniform(0.1, 0.1).is_err());
        assert!(ParamDomain::log_uniform(0.0, 1.0).is_err());
        assert!(ParamDomain::uniform(2.0, 1.0).is_err());
        assert!(ParamDomain::int_uniform(3, 3).is_err());
        assert!(ParamDomain::uniform(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = SearchSpace::from_domains([("a", LR), ("a", LR)]);
        assert!(matches!(r, Err(Error::InvalidSpace(_))));
    }

    #[test]
    fn uniform_midpoint_draw() {
        let d = ParamDomain::uniform(0.0, 1.0).unwrap();
        assert_eq!(d.value_from_draw(0.5), 0.5);
    }

    #[test]
    fn unit_transform_endpoints() {
        assert_eq!(LR.to_unit(1e-6).unwrap(), 0.0);
        assert_eq!(LR.to_unit(10.0).unwrap(), 1.0);
        let mid = LR.to_unit(10f64.powf(-2.5)).unwrap();
        assert!((mid - 0.5).abs() < 1e-12, "{mid}");
        assert!(LR.to_unit(20.0).is_err());
        assert!(LR.from_unit(1.5).is_err());
    }

    #[test]
    fn int_inverse_rounds_half_up() {
        let d = ParamDomain::int_uniform(0, 10).unwrap();
        assert_eq!(d.from_unit(0.25).unwrap(), 3.0); // 2.5 -> 3
        assert_eq!(d.from_unit(0.24).unwrap(), 2.0);
        assert_eq!(d.value_from_draw(0.999_999), 10.0);
        assert_eq!(d.value_from_draw(0.0), 0.0);
    }

    #[test]
    fn log_uniform_median_near_geometric_midpoint() {
        let mut rng = seeding::rng(11);
        let mut logs: Vec<f64> = (0..10_000)
            .map(|_| {
                let v = LR.sample(&mut rng);
                assert!((1e-6..=10.0).contains(&v));
                v.log10()
            })
            .collect();
        logs.sort_by(f64::total_cmp);
        let median = 0.5 * (logs[4999] + logs[5000]);
        // log10 range is 7 decades; the median's standard error is ~0.035.
        assert!((median - (-2.5)).abs() < 0.15, "median log10 = {median}");
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let space = SearchSpace::default_space();
        let a: Vec<Config> = {
            let mut r = seeding::rng(5);
            (0..20).map(|_| space.sample(&mut r, "random")).collect()
        };
        let b: Vec<Config> = {
            let mut r = seeding::rng(5);
            (0..20).map(|_| space.sample(&mut r, "random")).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn config_json_is_bit_exact_and_ordered() {
        let c = Config::new([("l", 0.1), ("w", 1.0 / 3.0), ("b", 128.0)], "random");
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"l\":\"1.0000000000000001e-1\""), "{s}");
        let back: Config = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.values[2].0, "b");
    }

    #[test]
    fn space_config_file_layout() {
        let json = r#"[{"name":"l","type":"loguniform","lo":1e-6,"hi":10},
                       {"name":"b","type":"int","lo":16,"hi":256},
                       {"name":"x","type":"uniform","lo":0,"hi":1}]"#;
        let space: SearchSpace = serde_json::from_str(json).unwrap();
        assert_eq!(space.len(), 3);
        assert_eq!(space.domain("b"), Some(&ParamDomain::IntUniform { lo: 16, hi: 256 }));
        let bad = r#"[{"name":"l","type":"loguniform","lo":0,"hi":10}]"#;
        assert!(serde_json::from_str::<SearchSpace>(bad).is_err());
    }

    #[test]
    fn validate_config_reports_missing_dimension() {
        let space = SearchSpace::default_space();
        let c = Config::new([("l", 0.1), ("w", 1e-3), ("m", 0.1)], "manual");
        assert!(matches!(space.validate_config(&c), Err(Error::MissingDimension(n)) if n == "b"));
    }
}
