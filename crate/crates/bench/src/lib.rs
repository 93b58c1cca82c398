//! Fixtures shared by the benchmarks in `benches/`.

use krsbm::environment::{enhance, sample_noise, NoiseDistribution, NoiseSpec};
use krsbm::{Field, LatticeSpec};

pub fn spec(n: usize, d: usize) -> LatticeSpec {
    LatticeSpec::new(n, 2, d).expect("valid lattice")
}

/// Renormalized Gaussian potential on the box of side 2.
pub fn potential(n: usize, d: usize, seed: u64) -> Field {
    let noise = sample_noise(&NoiseSpec::new(spec(n, d), NoiseDistribution::Gaussian, seed));
    enhance(noise).expect("enhance").effective_potential()
}

/// Product bump vanishing on the boundary.
pub fn bump(spec: LatticeSpec) -> Field {
    let half = spec.l() as f64 / 2.0;
    let mut f = Field::from_fn(spec, |_, x| (0..spec.d()).map(|a| 1.0 - (x[a] / half).powi(2)).product());
    f.zero_boundary();
    f
}
