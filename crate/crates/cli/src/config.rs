//! Run configuration.
//!
//! The file format is one `key = value` pair per line. Blank lines and lines
//! starting with `#` are ignored, and a key may appear only once. Lists are
//! comma separated; integer lists also accept `a..b` for the half-open range
//! `a, a+1, …, b−1`. Infinite indices are written `inf`.
//!
//! | key              | value                                   | default          |
//! |------------------|-----------------------------------------|------------------|
//! | `command`        | must match the subcommand if present    | –                |
//! | `n`              | mesh list                               | `8`              |
//! | `L`              | killing box list (even)                 | `2`              |
//! | `L-max`          | simulation box side (even)              | `2`              |
//! | `d`              | `1` or `2`                              | `2`              |
//! | `phi`            | `gaussian`, `rademacher`, `uniform`     | `gaussian`       |
//! | `seeds`          | environment seeds                       | required         |
//! | `alpha`          | regularity                              | `0.8`            |
//! | `epsilon`        | regularity loss                         | `0.05`           |
//! | `p`, `q`         | integrability indices                   | `inf`            |
//! | `T`              | horizon                                 | `0.25`           |
//! | `dt`             | solver step                             | `0.001`          |
//! | `replicas`       | particle runs per environment           | `100`            |
//! | `replica-seed`   | seed of the first run                   | `0`              |
//! | `population-cap` | explosion threshold                     | `1000000`        |
//! | `times`          | output times in `[0, T]`                | `0, T/2, T`      |
//! | `R`              | mass levels for the tail test           | `1, 2, 4, 8`     |
//! | `zero-env`       | replace `ξ_e` by zero in `solve`        | `false`          |
//! | `output-dir`     | output root                             | `out`            |
//! | `env-dir`        | environment archives                    | `<output-dir>/env` |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use krsbm::environment::NoiseDistribution;
use krsbm::LatticeSpec;
use sha2::{Digest, Sha256};

const KEYS: &[&str] = &[
    "command",
    "n",
    "L",
    "L-max",
    "d",
    "phi",
    "seeds",
    "alpha",
    "epsilon",
    "p",
    "q",
    "T",
    "dt",
    "replicas",
    "replica-seed",
    "population-cap",
    "times",
    "R",
    "zero-env",
    "output-dir",
    "env-dir",
];

// locations, not content: excluded from the hash
const LOCATION_KEYS: &[&str] = &["output-dir", "env-dir"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenEnv,
    Solve,
    Simulate,
    Verify,
    Survey,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenEnv => "gen-env",
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Survey => "survey",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Command::GenEnv, Command::Solve, Command::Simulate, Command::Verify, Command::Survey]
            .into_iter()
            .find(|c| c.name() == s)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub ns: Vec<usize>,
    pub ls: Vec<usize>,
    pub l_max: usize,
    pub d: usize,
    pub phi: NoiseDistribution,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub epsilon: f64,
    pub p: f64,
    pub q: f64,
    pub horizon: f64,
    pub dt: f64,
    pub replicas: usize,
    pub replica_seed: u64,
    pub population_cap: usize,
    pub times: Vec<f64>,
    pub r_grid: Vec<f64>,
    pub zero_env: bool,
    pub output_dir: PathBuf,
    pub env_dir: PathBuf,
}

/// Raw `key = value` pairs before defaults are applied.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigSource {
    entries: BTreeMap<String, String>,
}

impl ConfigSource {
    pub fn parse(text: &str) -> Result<Self> {
        let mut src = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{line}`", i + 1))?;
            let key = k.trim();
            if !KEYS.contains(&key) {
                bail!("line {}: unknown key `{key}`", i + 1);
            }
            if src.entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                bail!("line {}: duplicate key `{key}`", i + 1);
            }
        }
        Ok(src)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    /// Sets a key, replacing any value from the file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            bail!("unknown key `{key}`");
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64> {
    let v = match s.trim() {
        "inf" => f64::INFINITY,
        t => t.parse().map_err(|_| anyhow!("`{key}`: not a number: `{t}`"))?,
    };
    if v.is_nan() {
        bail!("`{key}`: NaN is not allowed");
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| anyhow!("`{key}`: not a nonnegative integer: `{}`", s.trim()))
}

fn parse_int_list(key: &str, s: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b): (u64, u64) = (parse_int(key, a)?, parse_int(key, b)?);
            if a >= b {
                bail!("`{key}`: empty range `{part}`");
            }
            out.extend(a..b);
        } else {
            out.push(parse_int(key, part)?);
        }
    }
    if out.is_empty() {
        bail!("`{key}`: empty list");
    }
    Ok(out)
}

fn parse_usize_list(key: &str, s: &str) -> Result<Vec<usize>> {
    Ok(parse_int_list(key, s)?.into_iter().map(|v| v as usize).collect())
}

fn parse_f64_list(key: &str, s: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| parse_f64(key, p))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        bail!("`{key}`: empty list");
    }
    Ok(out)
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Resolves defaults and validates. `command` is the subcommand that was
    /// invoked; a `command` key in the source must agree with it.
    pub fn resolve(command: Command, src: &ConfigSource) -> Result<Self> {
        if let Some(c) = src.get("command") {
            let given = Command::parse(c).ok_or_else(|| anyhow!("`command`: unknown command `{c}`"))?;
            if given != command {
                bail!("config is for `{given}` but `{command}` was invoked");
            }
        }
        let f = |key: &str, default: f64| src.get(key).map_or(Ok(default), |s| parse_f64(key, s));
        let horizon = f("T", 0.25)?;
        let output_dir = PathBuf::from(src.get("output-dir").unwrap_or("out"));
        let cfg = Self {
            command,
            ns: src.get("n").map_or(Ok(vec![8]), |s| parse_usize_list("n", s))?,
            ls: src.get("L").map_or(Ok(vec![2]), |s| parse_usize_list("L", s))?,
            l_max: src.get("L-max").map_or(Ok(2), |s| parse_int("L-max", s))?,
            d: src.get("d").map_or(Ok(2), |s| parse_int("d", s))?,
            phi: match src.get("phi") {
                None => NoiseDistribution::Gaussian,
                Some(s) => NoiseDistribution::parse(s).ok_or_else(|| anyhow!("`phi`: unknown distribution `{s}`"))?,
            },
            seeds: parse_int_list("seeds", src.get("seeds").ok_or_else(|| anyhow!("`seeds` must be given explicitly"))?)?,
            alpha: f("alpha", 0.8)?,
            epsilon: f("epsilon", 0.05)?,
            p: f("p", f64::INFINITY)?,
            q: f("q", f64::INFINITY)?,
            horizon,
            dt: f("dt", 1e-3)?,
            replicas: src.get("replicas").map_or(Ok(100), |s| parse_int("replicas", s))?,
            replica_seed: src.get("replica-seed").map_or(Ok(0), |s| parse_int("replica-seed", s))?,
            population_cap: src.get("population-cap").map_or(Ok(1_000_000), |s| parse_int("population-cap", s))?,
            times: src.get("times").map_or(Ok(vec![0.0, horizon / 2.0, horizon]), |s| parse_f64_list("times", s))?,
            r_grid: src.get("R").map_or(Ok(vec![1.0, 2.0, 4.0, 8.0]), |s| parse_f64_list("R", s))?,
            zero_env: match src.get("zero-env") {
                None | Some("false") => false,
                Some("true") => true,
                Some(s) => bail!("`zero-env`: expected true or false, got `{s}`"),
            },
            env_dir: src.get("env-dir").map_or_else(|| output_dir.join("env"), PathBuf::from),
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !matches!(self.d, 1 | 2) {
            bail!("`d` must be 1 or 2, got {}", self.d);
        }
        if self.l_max == 0 || self.l_max % 2 != 0 {
            bail!("`L-max` must be a positive even integer, got {}", self.l_max);
        }
        for &l in &self.ls {
            if l == 0 || l % 2 != 0 {
                bail!("`L` entries must be positive even integers, got {l}");
            }
            if l > self.l_max {
                bail!("`L` entry {l} exceeds `L-max` = {}", self.l_max);
            }
        }
        for &n in &self.ns {
            LatticeSpec::new(n, self.l_max, self.d).with_context(|| format!("`n` = {n}"))?;
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bail!("`T` must be positive and finite, got {}", self.horizon);
        }
        if !(self.dt > 0.0 && self.dt <= self.horizon) {
            bail!("`dt` must lie in (0, T], got {}", self.dt);
        }
        if !(self.p >= 1.0 && self.q >= 1.0) {
            bail!("`p` and `q` must be at least 1");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite() && self.alpha.is_finite()) {
            bail!("`alpha` must be finite and `epsilon` finite and nonnegative");
        }
        if self.replicas == 0 {
            bail!("`replicas` must be positive");
        }
        if self.population_cap == 0 {
            bail!("`population-cap` must be positive");
        }
        if let Some(t) = self.times.iter().find(|t| !(**t >= 0.0 && **t <= self.horizon)) {
            bail!("`times` entry {t} outside [0, T]");
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            bail!("`times` must be strictly increasing");
        }
        if self.r_grid.len() < 2 || self.r_grid.windows(2).any(|w| w[1] <= w[0]) {
            bail!("`R` must hold at least two strictly increasing levels");
        }
        Ok(())
    }

    /// Seeds of the particle runs.
    pub fn replica_seeds(&self) -> Vec<u64> {
        (0..self.replicas as u64).map(|r| self.replica_seed + r).collect()
    }

    /// Every key with its resolved value, sorted by key.
    pub fn resolved(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("command", self.command.to_string());
        m.insert("n", join(&self.ns));
        m.insert("L", join(&self.ls));
        m.insert("L-max", self.l_max.to_string());
        m.insert("d", self.d.to_string());
        m.insert("phi", self.phi.to_string());
        m.insert("seeds", join(&self.seeds));
        m.insert("alpha", fmt_f64(self.alpha));
        m.insert("epsilon", fmt_f64(self.epsilon));
        m.insert("p", fmt_f64(self.p));
        m.insert("q", fmt_f64(self.q));
        m.insert("T", fmt_f64(self.horizon));
        m.insert("dt", fmt_f64(self.dt));
        m.insert("replicas", self.replicas.to_string());
        m.insert("replica-seed", self.replica_seed.to_string());
        m.insert("population-cap", self.population_cap.to_string());
        m.insert("times", self.times.iter().map(|t| fmt_f64(*t)).collect::<Vec<_>>().join(","));
        m.insert("R", self.r_grid.iter().map(|t| fmt_f64(*t)).collect::<Vec<_>>().join(","));
        m.insert("zero-env", self.zero_env.to_string());
        m.insert("output-dir", self.output_dir.display().to_string());
        m.insert("env-dir", self.env_dir.display().to_string());
        m
    }

    /// Config file text that resolves back to this configuration.
    pub fn canonical_text(&self) -> String {
        self.resolved().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of the canonical text without the location keys.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.resolved() {
            if !LOCATION_KEYS.contains(&k) {
                h.update(format!("{k} = {v}\n").as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_ranges() {
        let src = ConfigSource::parse("# comment\nseeds = 1..4, 10\n\nn = 8,16\n").unwrap();
        let cfg = RunConfig::resolve(Command::Survey, &src).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2, 3, 10]);
        assert_eq!(cfg.ns, vec![8, 16]);
        assert_eq!(cfg.times, vec![0.0, 0.125, 0.25]);
        assert_eq!(cfg.env_dir, PathBuf::from("out/env"));
        assert!(cfg.p.is_infinite());
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            "seeds = 1\nL = 4\n",
            "seeds = 1\nL = 3\nL-max = 4\n",
            "seeds = 1\nd = 3\n",
            "n = 8\n",
            "seeds = 1\nfoo = 2\n",
            "seeds = 1\nseeds = 2\n",
            "seeds = 1\ndt = 0\n",
            "seeds = 1\ntimes = 0.5\n",
            "seeds = 1\nR = 4,2\n",
            "seeds = 1\ncommand = verify\n",
            "seeds = 5..5\n",
            "seeds = 1\np = 0.5\n",
        ];
        for text in bad {
            let r = ConfigSource::parse(text).and_then(|s| RunConfig::resolve(Command::Survey, &s));
            assert!(r.is_err(), "accepted:\n{text}");
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let src = ConfigSource::parse("seeds = 3\np = 2\nphi = uniform\nL = 2,4\nL-max = 4\n").unwrap();
        let cfg = RunConfig::resolve(Command::Verify, &src).unwrap();
        let again = RunConfig::resolve(Command::Verify, &ConfigSource::parse(&cfg.canonical_text()).unwrap()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        let mut moved = src.clone();
        moved.set("output-dir", "elsewhere").unwrap();
        assert_eq!(RunConfig::resolve(Command::Verify, &moved).unwrap().hash(), cfg.hash());
        let mut changed = src;
        changed.set("dt", "0.002").unwrap();
        assert_ne!(RunConfig::resolve(Command::Verify, &changed).unwrap().hash(), cfg.hash());
    }
}
