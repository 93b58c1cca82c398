use std::f64::consts::PI;

use krsbm::besov::{paraproduct, resonant};
use krsbm::spectral::{apply_laplacian, forward_transform, fourier_multiplier, inverse_transform, MultiplierSpec};
use krsbm::{Field, Flavor, LatticeSpec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(spec: LatticeSpec, flavor: Flavor, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = Field::from_fn(spec, |_, _| rng.random_range(-1.0..1.0));
    if flavor == Flavor::Dirichlet {
        f.zero_boundary();
    }
    f
}

// basis value written out from scratch: N^{-d/2} prod a_K trig(2 pi K x / N)
fn mode(spec: &LatticeSpec, flavor: Flavor, k: [i64; 2], site: usize) -> f64 {
    let big_n = 2.0 * spec.l() as f64;
    let m = spec.m() as i64;
    let idx = spec.multi_index(site);
    let mut v = big_n.powf(-(spec.d() as f64) / 2.0);
    for a in 0..spec.d() {
        let x = idx[a] as f64 / spec.n() as f64;
        let arg = 2.0 * PI * k[a] as f64 * x / big_n;
        v *= match flavor {
            Flavor::Dirichlet => 2.0 * arg.sin(),
            Flavor::Neumann if k[a] == 0 || k[a] == m => 2f64.sqrt() * arg.cos(),
            Flavor::Neumann => 2.0 * arg.cos(),
        };
    }
    v
}

#[test]
fn transform_matches_gram_solve() {
    for d in [1, 2] {
        let spec = LatticeSpec::new(4, 2, d).unwrap();
        for flavor in [Flavor::Dirichlet, Flavor::Neumann] {
            let u = random_field(spec, flavor, 11 + d as u64);
            let c = forward_transform(&u, flavor);
            let keys = c.indices();
            let rows: Vec<usize> = spec
                .sites()
                .filter(|&s| flavor == Flavor::Neumann || !spec.is_boundary(s))
                .collect();
            assert_eq!(rows.len(), keys.len());
            let b = DMatrix::from_fn(rows.len(), keys.len(), |i, j| mode(&spec, flavor, keys[j].k(), rows[i]));
            let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|&s| u.get(s)));
            let sol = b.lu().solve(&rhs).unwrap();
            for (a, b) in sol.iter().zip(c.coeffs()) {
                assert!((a - b).abs() < 1e-10, "{flavor} d={d}: {a} vs {b}");
            }
            let back = inverse_transform(&c);
            for s in spec.sites() {
                assert!((back.get(s) - u.get(s)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn spectral_laplacian_matches_stencil() {
    for seed in 0..20u64 {
        let d = 1 + (seed % 2) as usize;
        let spec = LatticeSpec::new(8, 2, d).unwrap();
        for flavor in [Flavor::Dirichlet, Flavor::Neumann] {
            let u = random_field(spec, flavor, seed);
            let spectral = fourier_multiplier(&MultiplierSpec::laplacian(&spec), &u, flavor).unwrap();
            let stencil = apply_laplacian(&u, flavor);
            let scale = stencil.sup_norm().max(1.0);
            assert!(spectral.sub(&stencil).unwrap().sup_norm() < 1e-10 * scale);
        }
    }
}

#[test]
fn odd_symbol_is_rejected() {
    let spec = LatticeSpec::new(4, 2, 1).unwrap();
    let u = random_field(spec, Flavor::Neumann, 1);
    let odd = MultiplierSpec::new("odd", |k| k[0]);
    assert!(fourier_multiplier(&odd, &u, Flavor::Neumann).is_err());
}

fn flavor_strategy() -> impl Strategy<Value = Flavor> {
    prop_oneof![Just(Flavor::Dirichlet), Just(Flavor::Neumann)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip(seed in any::<u64>(), d in 1usize..=2, n in prop_oneof![Just(2usize), Just(4), Just(8)], flavor in flavor_strategy()) {
        let spec = LatticeSpec::new(n, 2, d).unwrap();
        let u = random_field(spec, flavor, seed);
        let back = inverse_transform(&forward_transform(&u, flavor));
        prop_assert!(back.sub(&u).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn parseval(seed in any::<u64>(), d in 1usize..=2, flavor in flavor_strategy()) {
        let spec = LatticeSpec::new(4, 2, d).unwrap();
        let u = random_field(spec, flavor, seed);
        let c = forward_transform(&u, flavor);
        let energy: f64 = c.coeffs().iter().map(|x| x * x).sum();
        let inner = u.inner(&u).unwrap();
        prop_assert!((energy - inner).abs() < 1e-10 * inner.max(1.0));
    }

    #[test]
    fn multipliers_commute(seed in any::<u64>(), a in 0.1f64..3.0, b in 0.1f64..3.0, flavor in flavor_strategy()) {
        let spec = LatticeSpec::new(8, 2, 2).unwrap();
        let u = random_field(spec, flavor, seed);
        let s1 = MultiplierSpec::new("gauss", move |k| (-a * (k[0] * k[0] + k[1] * k[1])).exp());
        let s2 = MultiplierSpec::new("bessel", move |k| 1.0 / (1.0 + b * (k[0] * k[0] + k[1] * k[1])));
        let prod = MultiplierSpec::new("product", move |k| {
            let r = k[0] * k[0] + k[1] * k[1];
            (-a * r).exp() / (1.0 + b * r)
        });
        let ab = fourier_multiplier(&s2, &fourier_multiplier(&s1, &u, flavor).unwrap(), flavor).unwrap();
        let ba = fourier_multiplier(&s1, &fourier_multiplier(&s2, &u, flavor).unwrap(), flavor).unwrap();
        let joint = fourier_multiplier(&prod, &u, flavor).unwrap();
        prop_assert!(ab.sub(&ba).unwrap().sup_norm() < 1e-12);
        prop_assert!(ab.sub(&joint).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn bony_decomposition(seed in any::<u64>(), d in 1usize..=2, fphi in flavor_strategy(), fpsi in flavor_strategy()) {
        let spec = LatticeSpec::new(8, 2, d).unwrap();
        let phi = random_field(spec, fphi, seed);
        let psi = random_field(spec, fpsi, seed ^ 0x9e37);
        let sum = paraproduct(&phi, fphi, &psi, fpsi).unwrap()
            .add(&paraproduct(&psi, fpsi, &phi, fphi).unwrap()).unwrap()
            .add(&resonant(&phi, fphi, &psi, fpsi).unwrap()).unwrap();
        let direct = phi.mul(&psi).unwrap();
        prop_assert!(sum.sub(&direct).unwrap().sup_norm() < 1e-10);
    }
}
