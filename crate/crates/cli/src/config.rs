//! `key=value` run configuration, shared by config files, `--set` and the flags.

use std::collections::BTreeMap;

use fixdecomp_core::harness::{ModelConfig, ModelSpec};
use fixdecomp_core::{Penalty, SolverConfig};

pub const KEYS: [&str; 15] =
    ["model", "mu", "beta", "kappa", "gamma", "J", "Z", "y1", "y2", "r1", "r2", "epsilon", "max_iters", "seed", "reps"];

/// Validated settings; `None` means "use the command default".
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: Option<String>,
    pub mu: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<u8>,
    pub gamma: Option<f64>,
    pub j: Option<u32>,
    pub z: Option<u32>,
    pub y1: Option<f64>,
    pub y2: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.trim().parse().map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn finite(key: &str, value: &str) -> Result<f64, String> {
    let v: f64 = parse(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{key} must be finite, got {value}"))
    }
}

impl RunConfig {
    /// Parses `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn parse_text(text: &str) -> Result<Self, String> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.set_pair(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` pair.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), String> {
        let (key, value) = pair.split_once('=').ok_or_else(|| format!("expected key=value, got {pair:?}"))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "model" => self.model = Some(value.to_string()),
            "mu" => self.mu = Some(finite(key, value)?),
            "beta" => self.beta = Some(finite(key, value)?),
            "kappa" => {
                let k: u8 = parse(key, value)?;
                Penalty::from_kappa(k).map_err(|e| e.to_string())?;
                self.kappa = Some(k);
            }
            "gamma" => self.gamma = Some(finite(key, value)?),
            "J" => self.j = Some(parse(key, value)?),
            "Z" => self.z = Some(parse(key, value)?),
            "y1" => self.y1 = Some(finite(key, value)?),
            "y2" => self.y2 = Some(finite(key, value)?),
            "r1" => self.r1 = Some(finite(key, value)?),
            "r2" => self.r2 = Some(finite(key, value)?),
            "epsilon" => self.epsilon = Some(finite(key, value)?),
            "max_iters" => self.max_iters = Some(parse(key, value)?),
            "seed" => self.seed = Some(parse(key, value)?),
            "reps" => {
                let r: usize = parse(key, value)?;
                if r == 0 {
                    return Err("reps must be at least 1".into());
                }
                self.reps = Some(r);
            }
            other => return Err(format!("unknown key {other:?}; expected one of {}", KEYS.join(", "))),
        }
        Ok(())
    }

    /// Fields set in `other` replace those of `self`.
    pub fn overlay(mut self, other: &Self) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(model, mu, beta, kappa, gamma, j, z, y1, y2, r1, r2, epsilon, max_iters, seed, reps);
        self
    }

    /// The set keys and their values, in canonical order.
    pub fn pairs(&self) -> BTreeMap<&'static str, String> {
        let mut out = BTreeMap::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.insert(k, v);
            }
        };
        put("model", self.model.clone());
        put("mu", self.mu.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("kappa", self.kappa.map(|v| v.to_string()));
        put("gamma", self.gamma.map(|v| v.to_string()));
        put("J", self.j.map(|v| v.to_string()));
        put("Z", self.z.map(|v| v.to_string()));
        put("y1", self.y1.map(|v| v.to_string()));
        put("y2", self.y2.map(|v| v.to_string()));
        put("r1", self.r1.map(|v| v.to_string()));
        put("r2", self.r2.map(|v| v.to_string()));
        put("epsilon", self.epsilon.map(|v| v.to_string()));
        put("max_iters", self.max_iters.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("reps", self.reps.map(|v| v.to_string()));
        out
    }

    /// Builds the model, filling unset values from `defaults`. Parameters that do not
    /// belong to the chosen model are rejected.
    pub fn model_config(&self, defaults: &Defaults) -> Result<ModelConfig, String> {
        let model = self.model.as_deref().ok_or("no model given (--model or model=...)")?;
        let mu = self.mu.unwrap_or_else(|| defaults.mu(model));
        let allowed: &[&str] = match model {
            "tvl2" | "hilbert" => &["mu"],
            "m2" => &["mu", "y1", "y2"],
            "m3" => &["mu", "r1", "r2"],
            "lsr" => &["gamma", "J", "Z"],
            other => return Err(format!("unknown model {other:?}; expected tvl2, m2, m3, hilbert or lsr")),
        };
        let given = [
            ("mu", self.mu.is_some()),
            ("y1", self.y1.is_some()),
            ("y2", self.y2.is_some()),
            ("r1", self.r1.is_some()),
            ("r2", self.r2.is_some()),
            ("gamma", self.gamma.is_some()),
            ("J", self.j.is_some()),
            ("Z", self.z.is_some()),
        ];
        if let Some((name, _)) = given.iter().find(|(name, set)| *set && !allowed.contains(name)) {
            return Err(format!("parameter {name} does not apply to model {model}"));
        }
        let spec = match model {
            "tvl2" => ModelSpec::TvL2 { mu },
            "m2" => ModelSpec::Model2 { mu, y1: self.y1.unwrap_or(defaults.y.0), y2: self.y2.unwrap_or(defaults.y.1) },
            "m3" => ModelSpec::Model3 { mu, r1: self.r1.unwrap_or(defaults.r.0), r2: self.r2.unwrap_or(defaults.r.1) },
            "hilbert" => ModelSpec::TvHilbert { mu, mask: None },
            _ => ModelSpec::Lsr {
                gamma: self.gamma.unwrap_or(defaults.gamma),
                j: self.j.unwrap_or(defaults.j),
                z: self.z.unwrap_or(defaults.z),
            },
        };
        let kappa = self.kappa.unwrap_or(if model == "lsr" { defaults.lsr_kappa } else { defaults.kappa });
        let penalty = Penalty::from_kappa(kappa).map_err(|e| e.to_string())?;
        Ok(ModelConfig::new(spec, self.beta.unwrap_or(defaults.beta), penalty))
    }

    pub fn solver_config(&self) -> Result<SolverConfig, String> {
        let d = SolverConfig::default();
        SolverConfig::new(self.epsilon.unwrap_or(d.epsilon), self.max_iters.unwrap_or(d.max_iters))
            .map_err(|e| e.to_string())
    }
}

/// Per-command defaults for unset parameters.
#[derive(Clone, Debug)]
pub struct Defaults {
    pub mu: f64,
    pub hilbert_mu: f64,
    pub tvl2_mu: f64,
    pub beta: f64,
    pub kappa: u8,
    pub lsr_kappa: u8,
    pub y: (f64, f64),
    pub r: (f64, f64),
    pub gamma: f64,
    pub j: u32,
    pub z: u32,
}

impl Defaults {
    /// Denoising: the cameraman setting.
    pub fn denoise() -> Self {
        Self {
            mu: 0.054,
            hilbert_mu: 0.054,
            tvl2_mu: 0.054,
            beta: 0.1,
            kappa: 2,
            lsr_kappa: 2,
            y: (-0.07, 0.014),
            r: (0.7408, 1.3499),
            gamma: 1.2,
            j: 3,
            z: 3,
        }
    }

    /// Cartoon-texture decomposition.
    pub fn decompose() -> Self {
        Self { mu: 0.054, hilbert_mu: 0.125, tvl2_mu: 0.02, beta: 1.0, kappa: 2, lsr_kappa: 1, ..Self::denoise() }
    }

    fn mu(&self, model: &str) -> f64 {
        match model {
            "tvl2" => self.tvl2_mu,
            "hilbert" => self.hilbert_mu,
            _ => self.mu,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_files_with_comments() {
        let cfg = RunConfig::parse_text("# denoise\nmodel = m3\nmu=0.05\n\nr1=0.7\nreps=3\nJ=2\n").unwrap();
        assert_eq!(cfg.model.as_deref(), Some("m3"));
        assert_eq!(cfg.mu, Some(0.05));
        assert_eq!(cfg.r1, Some(0.7));
        assert_eq!(cfg.reps, Some(3));
        assert_eq!(cfg.j, Some(2));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_types() {
        assert!(RunConfig::parse_text("lambda=3").unwrap_err().contains("unknown key"));
        assert!(RunConfig::parse_text("mu=abc").is_err());
        assert!(RunConfig::parse_text("kappa=3").is_err());
        assert!(RunConfig::parse_text("J=1.5").is_err());
        assert!(RunConfig::parse_text("reps=0").is_err());
        assert!(RunConfig::parse_text("mu=inf").is_err());
        assert!(RunConfig::parse_text("seed=-1").is_err());
        assert!(RunConfig::parse_text("novalue").is_err());
    }

    #[test]
    fn overlay_prefers_the_later_source() {
        let base = RunConfig::parse_text("model=tvl2\nmu=1\nbeta=2").unwrap();
        let top = RunConfig::parse_text("mu=3").unwrap();
        let merged = base.overlay(&top);
        assert_eq!((merged.mu, merged.beta), (Some(3.0), Some(2.0)));
    }

    #[test]
    fn model_defaults_and_foreign_parameters() {
        let cfg = RunConfig::parse_text("model=lsr").unwrap();
        let m = cfg.model_config(&Defaults::decompose()).unwrap();
        assert_eq!(m.params(), "gamma=1.2 J=3 Z=3 beta=1 kappa=1");
        let cfg = RunConfig::parse_text("model=tvl2").unwrap();
        assert_eq!(cfg.model_config(&Defaults::denoise()).unwrap().params(), "mu=0.054 beta=0.1 kappa=2");
        let cfg = RunConfig::parse_text("model=tvl2\ny1=0.1").unwrap();
        assert!(cfg.model_config(&Defaults::denoise()).is_err());
        let cfg = RunConfig::parse_text("model=nope").unwrap();
        assert!(cfg.model_config(&Defaults::denoise()).unwrap_err().contains("unknown model"));
        assert!(RunConfig::default().model_config(&Defaults::denoise()).is_err());
    }

    #[test]
    fn pairs_round_trip_through_text() {
        let cfg = RunConfig::parse_text("model=m2\nmu=0.1\ny1=-0.07\ny2=0.014\nseed=7\nreps=2\nepsilon=1e-6").unwrap();
        let text: String = cfg.pairs().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        assert_eq!(RunConfig::parse_text(&text).unwrap(), cfg);
    }
}
