//! Random environment: i.i.d. site noise `ξ^n = n^{d/2} Φ`, the auxiliary
//! field `X` solving `−Δ X = χ(D) ξ`, the renormalized resonant product and
//! the statistics of the positive part.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, resonant, BesovParams};
use crate::error::{Error, Result};
use crate::lattice::{Field, Flavor, LatticeSpec, MAX_DIM};
use crate::spectral::{self, renormalization_constant, MultiplierSpec};

/// Law of the site variable `Φ`; each has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NoiseDistribution {
    Gaussian,
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    Uniform,
}

impl NoiseDistribution {
    pub fn name(self) -> &'static str {
        match self {
            NoiseDistribution::Gaussian => "gaussian",
            NoiseDistribution::Rademacher => "rademacher",
            NoiseDistribution::Uniform => "uniform",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Some(NoiseDistribution::Gaussian),
            "rademacher" => Some(NoiseDistribution::Rademacher),
            "uniform" => Some(NoiseDistribution::Uniform),
            _ => None,
        }
    }

    /// `E Φ_+`.
    pub fn positive_part_mean(self) -> f64 {
        match self {
            NoiseDistribution::Gaussian => 1.0 / (2.0 * PI).sqrt(),
            NoiseDistribution::Rademacher => 0.5,
            NoiseDistribution::Uniform => 3f64.sqrt() / 4.0,
        }
    }

    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseDistribution::Gaussian => rng.sample(StandardNormal),
            NoiseDistribution::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            NoiseDistribution::Uniform => {
                let a = 3f64.sqrt();
                rng.random_range(-a..a)
            }
        }
    }
}

impl fmt::Display for NoiseDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub seed: u64,
    pub spec: LatticeSpec,
}

impl NoiseSpec {
    pub fn new(spec: LatticeSpec, distribution: NoiseDistribution, seed: u64) -> Self {
        Self {
            distribution,
            seed,
            spec,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    pub spec: NoiseSpec,
    pub xi: Field,
}

impl NoiseRealization {
    pub fn lattice(&self) -> &LatticeSpec {
        self.xi.spec()
    }
}

/// Stream id for a site: injective in `(n, z)` for `n < 2^22`, `|z_a| < 2^20`.
fn site_stream(n: usize, z: [i64; MAX_DIM]) -> u64 {
    const OFF: i64 = 1 << 20;
    const MASK: u64 = (1 << 21) - 1;
    let a = ((z[0] + OFF) as u64) & MASK;
    let b = ((z[1] + OFF) as u64) & MASK;
    ((n as u64) << 42) | (a << 21) | b
}

/// Draws `ξ^n(x) = n^{d/2} Φ_x`. Each site reads its own stream keyed by
/// `(n, lattice point)`, so the value at a point does not depend on the box
/// it is sampled in.
pub fn sample_noise(spec: &NoiseSpec) -> NoiseRealization {
    let lat = spec.spec;
    let scale = (lat.n() as f64).powf(lat.d() as f64 / 2.0);
    let xi = Field::from_fn(lat, |s, _| {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(site_stream(lat.n(), lat.lattice_point(s)));
        scale * spec.distribution.draw(&mut rng)
    });
    NoiseRealization { spec: *spec, xi }
}

/// Solves `−Δ^n X = χ(D) ξ` in the cosine basis; the zero mode is set to 0.
pub fn build_x(xi: &Field) -> Field {
    let spec = *xi.spec();
    let cutoff = MultiplierSpec::cutoff();
    let (n, d) = (spec.n(), spec.d());
    let mut full = spectral::forward_full(xi, Flavor::Neumann);
    spectral::apply_symbol_to_full(&mut full, &spec, |k| {
        let c = cutoff.eval(k);
        if c == 0.0 {
            0.0
        } else {
            c / -spectral::lattice_symbol(n, d, k)
        }
    });
    spectral::inverse_full(spec, Flavor::Neumann, full)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedEnvironment {
    pub noise: NoiseRealization,
    pub x: Field,
    /// `X ⊙ ξ − κ_n`; present in `d = 2` only.
    pub resonant_renormalized: Option<Field>,
    pub kappa_n: f64,
    pub c_n: f64,
    pub nu: f64,
}

/// Builds `X`, `κ_n`, `c_n = κ_n 1_{d=2}`, the renormalized resonant product and `ν = E Φ_+`.
pub fn enhance(noise: NoiseRealization) -> Result<EnhancedEnvironment> {
    let spec = *noise.lattice();
    let x = build_x(&noise.xi);
    let nu = noise.spec.distribution.positive_part_mean();
    if spec.d() == 1 {
        return Ok(EnhancedEnvironment {
            noise,
            x,
            resonant_renormalized: None,
            kappa_n: 0.0,
            c_n: 0.0,
            nu,
        });
    }
    let kappa_n = renormalization_constant(&spec, &MultiplierSpec::cutoff())?;
    let res = resonant(&x, Flavor::Neumann, &noise.xi, Flavor::Neumann)?.map(|v| v - kappa_n);
    Ok(EnhancedEnvironment {
        noise,
        x,
        resonant_renormalized: Some(res),
        kappa_n,
        c_n: kappa_n,
        nu,
    })
}

impl EnhancedEnvironment {
    pub fn spec(&self) -> &LatticeSpec {
        self.noise.lattice()
    }

    pub fn xi(&self) -> &Field {
        &self.noise.xi
    }

    /// `X ⊙ ξ` before subtracting `κ_n`.
    pub fn resonant_unrenormalized(&self) -> Option<Field> {
        self.resonant_renormalized
            .as_ref()
            .map(|r| r.map(|v| v + self.kappa_n))
    }

    /// `ξ_e = ξ − c_n`.
    pub fn effective_potential(&self) -> Field {
        self.noise.xi.map(|v| v - self.c_n)
    }

    /// `ξ_e` restricted to a smaller centered box with the same `n` and `d`,
    /// keeping this environment's `c_n`.
    pub fn effective_potential_on(&self, target: &LatticeSpec) -> Result<Field> {
        restrict_to_box(&self.effective_potential(), target)
    }
}

/// Restriction of a centered-box field to a smaller centered box.
pub fn restrict_to_box(u: &Field, target: &LatticeSpec) -> Result<Field> {
    let src = u.spec();
    if target.n() != src.n() || target.d() != src.d() || target.l() > src.l() || !target.centered() || !src.centered() {
        return Err(Error::LatticeMismatch {
            left: src.to_string(),
            right: target.to_string(),
        });
    }
    let mut out = Field::zeros(*target);
    for s in target.sites() {
        let idx = src
            .index_of_point(target.lattice_point(s))
            .expect("smaller centered box is contained in the larger one");
        out.values_mut()[s] = u.get(idx);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivePartStatistics {
    /// `n^{-d/2} ξ_+`.
    pub positive_part: Field,
    pub mean_positive: f64,
    pub se_positive: f64,
    /// Spatial mean of `n^{-d/2} |ξ|`.
    pub mean_abs: f64,
    pub se_abs: f64,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

pub fn positive_part_statistics(noise: &NoiseRealization) -> PositivePartStatistics {
    let spec = noise.lattice();
    let scale = (spec.n() as f64).powf(-(spec.d() as f64) / 2.0);
    let positive_part = noise.xi.map(|v| scale * v.max(0.0));
    let abs: Vec<f64> = noise.xi.values().iter().map(|v| scale * v.abs()).collect();
    let (mean_positive, se_positive) = mean_and_se(positive_part.values());
    let (mean_abs, se_abs) = mean_and_se(&abs);
    PositivePartStatistics {
        positive_part,
        mean_positive,
        se_positive,
        mean_abs,
        se_abs,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyConfig {
    pub ns: Vec<usize>,
    pub l: usize,
    pub d: usize,
    pub distribution: NoiseDistribution,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub epsilon: f64,
    /// Integrability indices of the extra `B^{α−2}_{p,q}` and `B^α_{p,q}`
    /// rows; no extra rows when both are infinite.
    pub p: f64,
    pub q: f64,
}

/// One norm report row: `quantity,n,L,alpha,p,q,flavor,value,seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub quantity: String,
    pub n: usize,
    pub l: usize,
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub flavor: Flavor,
    pub value: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurveyReport {
    pub rows: Vec<NormRecord>,
    pub warnings: Vec<String>,
}

impl SurveyReport {
    pub fn values(&self, quantity: &str, n: usize) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.quantity == quantity && r.n == n)
            .map(|r| r.value)
            .collect()
    }

    pub fn median(&self, quantity: &str, n: usize) -> Option<f64> {
        let mut v = self.values(quantity, n);
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.total_cmp(b));
        let m = v.len() / 2;
        Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
    }
}

/// Admissible regularity window for `α`: `(1, 3/2)` in `d = 1`, `(2/3, 1)` in `d = 2`.
pub fn alpha_window(d: usize) -> (f64, f64) {
    if d == 1 {
        (1.0, 1.5)
    } else {
        (2.0 / 3.0, 1.0)
    }
}

fn survey_one(cfg: &SurveyConfig, n: usize, seed: u64) -> Result<Vec<NormRecord>> {
    let spec = LatticeSpec::new(n, cfg.l, cfg.d)?;
    let noise = sample_noise(&NoiseSpec::new(spec, cfg.distribution, seed));
    let stats = positive_part_statistics(&noise);
    let env = enhance(noise)?;
    let a = cfg.alpha;
    let row = |quantity: &str, params: BesovParams, value: f64| NormRecord {
        quantity: quantity.to_string(),
        n,
        l: cfg.l,
        alpha: params.alpha,
        p: params.p,
        q: params.q,
        flavor: params.flavor,
        value,
        seed,
    };
    let mut rows = Vec::new();
    let p = BesovParams::holder(a - 2.0, Flavor::Neumann);
    rows.push(row("xi", p, besov_norm(env.xi(), &p)?));
    let p = BesovParams::holder(-cfg.epsilon, Flavor::Neumann);
    rows.push(row("xi_plus", p, besov_norm(&stats.positive_part, &p)?));
    let l2 = BesovParams::new(0.0, 2.0, 2.0, Flavor::Neumann)?;
    rows.push(row("xi_plus_l2", l2, stats.positive_part.lp_norm(Flavor::Neumann, 2.0)));
    let p = BesovParams::holder(a, Flavor::Neumann);
    rows.push(row("x", p, besov_norm(&env.x, &p)?));
    if cfg.p.is_finite() || cfg.q.is_finite() {
        let p = BesovParams::new(a - 2.0, cfg.p, cfg.q, Flavor::Neumann)?;
        rows.push(row("xi_pq", p, besov_norm(env.xi(), &p)?));
        let p = BesovParams::new(a, cfg.p, cfg.q, Flavor::Neumann)?;
        rows.push(row("x_pq", p, besov_norm(&env.x, &p)?));
    }
    if let Some(res) = &env.resonant_renormalized {
        let p = BesovParams::holder(2.0 * a - 2.0, Flavor::Neumann);
        rows.push(row("resonant", p, besov_norm(res, &p)?));
        let raw = env.resonant_unrenormalized().expect("d = 2");
        rows.push(row("resonant_raw", p, besov_norm(&raw, &p)?));
    }
    Ok(rows)
}

/// Norms of the enhanced noise over every `(n, seed)` pair. Rows come out
/// sorted by `(n, seed)` regardless of scheduling.
pub fn lemma_norm_survey(cfg: &SurveyConfig) -> Result<SurveyReport> {
    let mut warnings = Vec::new();
    let (lo, hi) = alpha_window(cfg.d);
    if !(cfg.alpha > lo && cfg.alpha < hi) {
        warnings.push(format!(
            "alpha = {} lies outside ({lo}, {hi}) for d = {}",
            cfg.alpha, cfg.d
        ));
    }
    let jobs: Vec<(usize, u64)> = cfg
        .ns
        .iter()
        .flat_map(|&n| cfg.seeds.iter().map(move |&s| (n, s)))
        .collect();
    let parts: Vec<Vec<NormRecord>> = jobs
        .par_iter()
        .map(|&(n, s)| survey_one(cfg, n, s))
        .collect::<Result<_>>()?;
    Ok(SurveyReport {
        rows: parts.into_iter().flatten().collect(),
        warnings,
    })
}
