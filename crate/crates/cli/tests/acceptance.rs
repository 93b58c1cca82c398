//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p krsbm-cli --test acceptance -- --nocapture` to see
//! the measured values.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use krsbm::besov::{paraproduct, resonant, DyadicPartition};
use krsbm::environment::{
    enhance, lemma_norm_survey, positive_part_statistics, sample_noise, NoiseDistribution, NoiseSpec, SurveyConfig,
};
use krsbm::lattice::extension;
use krsbm::pam::{
    principal_eigenpair, semigroup_apply, solve_linear_pam, DenseSemigroup, PamProblem, PowerIterationOptions,
};
use krsbm::spectral::{
    apply_laplacian, basis_field, forward_transform, fourier_multiplier, index_set, inverse_transform,
    laplacian_symbol, renormalization_constant, torus_multiplier, MultiplierSpec,
};
use krsbm::verify::{
    test_laplace_functional, test_martingale_qv, test_mass_tail, test_moment_duality, test_ordering_replicas,
    DualitySetup, TestReport, SE_MULTIPLE,
};
use krsbm::{Field, Flavor, LatticeSpec, TorusField};
use krsbm_cli::{run, Command, ConfigSource, RunConfig};

const ALGEBRA_TOL: f64 = 1e-10;
const LAPLACIAN_TOL: f64 = 1e-10;
const KAPPA_SPREAD: f64 = 0.10;
const KAPPA_BOX_CONSTANT: f64 = 5.0;
const SURVEY_FLATNESS: f64 = 2.0;
const SOLVER_TOL: f64 = 1e-4;
const ORDER_RATIO: (f64, f64) = (3.5, 4.5);
const EIGENVALUE_TOL: f64 = 1e-6;
const ALIGNMENT_TOL: f64 = 1e-8;

static SERIAL: Mutex<()> = Mutex::new(());

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    start: Instant,
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32, name: &'static str, budget_secs: Option<u64>) -> Self {
        Self {
            id,
            name,
            budget: budget_secs.map(Duration::from_secs),
            start: Instant::now(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, detail: impl Into<String>, ok: bool) {
        self.checks.push((detail.into(), ok));
    }

    fn report(&mut self, r: &TestReport, label: &str) {
        let detail = if r.exact {
            format!("{label} {}: {} vs {} (exact)", r.name, r.statistic, r.reference)
        } else {
            format!(
                "{label} {}: {:.6} vs {:.6}, |diff| {:.3e} <= {SE_MULTIPLE}*se = {:.3e}, replicas {}, exploded {}",
                r.name,
                r.statistic,
                r.reference,
                (r.statistic - r.reference).abs(),
                SE_MULTIPLE * r.standard_error,
                r.replicas,
                r.exploded
            )
        };
        self.check(detail, r.pass);
    }

    fn finish(mut self) {
        let elapsed = self.start.elapsed();
        if let Some(b) = self.budget {
            self.check(format!("elapsed {:.2?} < budget {:?}", elapsed, b), elapsed < b);
        } else {
            self.check(format!("elapsed {:.2?}", elapsed), true);
        }
        let pass = self.checks.iter().all(|c| c.1);
        println!("criterion {} {}: {}", self.id, self.name, if pass { "PASS" } else { "FAIL" });
        for (d, ok) in &self.checks {
            println!("    [{}] {d}", if *ok { "ok" } else { "FAIL" });
        }
        assert!(pass, "criterion {} failed", self.id);
    }
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Uniform values in `[−√3, √3]`, sampled through the site streams.
fn random_field(spec: LatticeSpec, flavor: Flavor, seed: u64) -> Field {
    let scale = (spec.n() as f64).powf(-(spec.d() as f64) / 2.0);
    let mut f = sample_noise(&NoiseSpec::new(spec, NoiseDistribution::Uniform, seed)).xi.scale(scale);
    if flavor == Flavor::Dirichlet {
        f.zero_boundary();
    }
    f
}

fn torus_diff(a: &TorusField, b: &TorusField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn bump(spec: LatticeSpec) -> Field {
    let half = spec.l() as f64 / 2.0;
    let mut f = Field::from_fn(spec, |_, x| (0..spec.d()).map(|a| 1.0 - (x[a] / half).powi(2)).product());
    f.zero_boundary();
    f
}

fn effective_potential(n: usize, l: usize, d: usize, seed: u64) -> Field {
    let spec = LatticeSpec::new(n, l, d).unwrap();
    enhance(sample_noise(&NoiseSpec::new(spec, NoiseDistribution::Gaussian, seed)))
        .unwrap()
        .effective_potential()
}

#[test]
fn criterion_01_exact_algebra() {
    let _g = lock();
    let mut c = Criterion::new(1, "exact algebra", Some(1));
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut bump_worst = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    let mut boundary_exact = true;
    let gauss = MultiplierSpec::new("gauss", |k| (-(k[0] * k[0] + k[1] * k[1])).exp());
    for d in [1, 2] {
        for n in [4, 8] {
            let spec = LatticeSpec::new(n, 2, d).unwrap();
            for seed in 0..4u64 {
                let u = random_field(spec, Flavor::Dirichlet, 4 * seed);
                let v = random_field(spec, Flavor::Dirichlet, 4 * seed + 1);
                let a = random_field(spec, Flavor::Neumann, 4 * seed + 2);
                let b = random_field(spec, Flavor::Neumann, 4 * seed + 3);
                let (eu, ev) = (extension(&u, Flavor::Dirichlet), extension(&v, Flavor::Dirichlet));
                let (ea, eb) = (extension(&a, Flavor::Neumann), extension(&b, Flavor::Neumann));
                let odd_even = torus_diff(&eu.mul(&ea).unwrap(), &extension(&u.mul(&a).unwrap(), Flavor::Dirichlet));
                let even_even = torus_diff(&ea.mul(&eb).unwrap(), &extension(&a.mul(&b).unwrap(), Flavor::Neumann));
                let odd_odd = torus_diff(&eu.mul(&ev).unwrap(), &extension(&u.mul(&v).unwrap(), Flavor::Neumann));
                bump_worst("extension products", odd_even.max(even_even).max(odd_odd));
                for (f, flavor) in [(&u, Flavor::Dirichlet), (&a, Flavor::Neumann)] {
                    for sym in [&gauss, &MultiplierSpec::cutoff()] {
                        let inside = fourier_multiplier(sym, f, flavor).unwrap();
                        let outside = torus_multiplier(sym, &extension(f, flavor));
                        bump_worst("extension/multiplier commutation", torus_diff(&extension(&inside, flavor), &outside));
                        if flavor == Flavor::Dirichlet {
                            boundary_exact &= inside.vanishes_on_boundary();
                        }
                    }
                    let blocks = DyadicPartition::new(&spec).blocks(f, flavor).unwrap();
                    let mut sum = Field::zeros(spec);
                    for blk in &blocks {
                        sum.add_scaled(1.0, blk).unwrap();
                    }
                    bump_worst("Littlewood-Paley resummation", sum.sub(f).unwrap().sup_norm());
                }
                for (phi, fp, psi, fq) in [
                    (&u, Flavor::Dirichlet, &a, Flavor::Neumann),
                    (&a, Flavor::Neumann, &b, Flavor::Neumann),
                    (&u, Flavor::Dirichlet, &v, Flavor::Dirichlet),
                ] {
                    let sum = paraproduct(phi, fp, psi, fq)
                        .unwrap()
                        .add(&paraproduct(psi, fq, phi, fp).unwrap())
                        .unwrap()
                        .add(&resonant(phi, fp, psi, fq).unwrap())
                        .unwrap();
                    bump_worst("Bony decomposition", sum.sub(&phi.mul(psi).unwrap()).unwrap().sup_norm());
                }
                let back = inverse_transform(&forward_transform(&u, Flavor::Dirichlet));
                boundary_exact &= back.vanishes_on_boundary();
            }
        }
        for n in [2, 4, 8] {
            let spec = LatticeSpec::new(n, 2, d).unwrap();
            for flavor in [Flavor::Dirichlet, Flavor::Neumann] {
                let basis: Vec<Field> = index_set(&spec, flavor).iter().map(|k| basis_field(&spec, k)).collect();
                let mut err: f64 = 0.0;
                for (i, x) in basis.iter().enumerate() {
                    if flavor == Flavor::Dirichlet {
                        boundary_exact &= x.vanishes_on_boundary();
                    }
                    for (j, y) in basis.iter().enumerate().skip(i) {
                        let target = if i == j { 1.0 } else { 0.0 };
                        err = err.max((x.inner(y).unwrap() - target).abs());
                    }
                }
                bump_worst("basis orthonormality", err);
            }
        }
    }
    let spec = LatticeSpec::new(8, 2, 2).unwrap();
    let evolved = semigroup_apply(&effective_potential(8, 2, 2, 1), 0.05, &bump(spec), 1e-3).unwrap();
    boundary_exact &= evolved.vanishes_on_boundary();
    for (k, v) in worst {
        c.check(format!("{k}: max error {v:.3e} <= {ALGEBRA_TOL:e}"), v <= ALGEBRA_TOL);
    }
    c.check("Dirichlet fields vanish exactly on the boundary", boundary_exact);
    c.finish();
}

#[test]
fn criterion_02_laplacian_consistency() {
    let _g = lock();
    let mut c = Criterion::new(2, "Laplacian consistency", Some(1));
    let mut stencil_err: f64 = 0.0;
    for i in 0..20u64 {
        let d = 1 + (i % 2) as usize;
        let spec = LatticeSpec::new(8, 2, d).unwrap();
        for flavor in [Flavor::Dirichlet, Flavor::Neumann] {
            let u = random_field(spec, flavor, 100 + i);
            let spectral = fourier_multiplier(&MultiplierSpec::laplacian(&spec), &u, flavor).unwrap();
            stencil_err = stencil_err.max(spectral.sub(&apply_laplacian(&u, flavor)).unwrap().sup_norm());
        }
    }
    c.check(format!("stencil vs spectral, 20 fields: {stencil_err:.3e} <= {LAPLACIAN_TOL:e}"), stencil_err <= LAPLACIAN_TOL);
    let mut eig_err: f64 = 0.0;
    for d in [1, 2] {
        let spec = LatticeSpec::new(8, 2, d).unwrap();
        for flavor in [Flavor::Dirichlet, Flavor::Neumann] {
            for k in index_set(&spec, flavor) {
                let e = basis_field(&spec, &k);
                let lhs = apply_laplacian(&e, flavor);
                let rhs = e.scale(laplacian_symbol(&k, &spec));
                eig_err = eig_err.max(lhs.sub(&rhs).unwrap().sup_norm());
            }
        }
    }
    c.check(format!("eigen-relation over all modes: {eig_err:.3e} <= {LAPLACIAN_TOL:e}"), eig_err <= LAPLACIAN_TOL);
    c.finish();
}

#[test]
fn criterion_03_kappa_log_growth() {
    let _g = lock();
    let mut c = Criterion::new(3, "renormalization constant growth", Some(10));
    let ns = [16usize, 32, 64, 128];
    let kappa = |n: usize, l: usize| renormalization_constant(&LatticeSpec::new(n, l, 2).unwrap(), &MultiplierSpec::cutoff()).unwrap();
    let k2: Vec<f64> = ns.iter().map(|&n| kappa(n, 2)).collect();
    let diffs: Vec<f64> = k2.windows(2).map(|w| w[1] - w[0]).collect();
    let (lo, hi) = diffs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    c.check(format!("kappa(L=2) = {k2:.5?}"), true);
    c.check(format!("differences {diffs:.5?} positive"), lo > 0.0);
    c.check(format!("spread (max-min)/min = {:.4} <= {KAPPA_SPREAD}", (hi - lo) / lo), hi - lo <= KAPPA_SPREAD * lo);
    // torus side of the larger box
    let big_n = 2.0 * 4.0;
    for (&n, &a) in ns.iter().zip(&k2) {
        let b = kappa(n, 4);
        let gap = (a - b).abs();
        c.check(
            format!("n={n}: |kappa(L=2) - kappa(L=4)| = {gap:.3e} <= {KAPPA_BOX_CONSTANT}/N = {:.3}", KAPPA_BOX_CONSTANT / big_n),
            gap <= KAPPA_BOX_CONSTANT / big_n,
        );
    }
    c.finish();
}

#[test]
fn criterion_04_stochastic_estimates_survey() {
    let _g = lock();
    let mut c = Criterion::new(4, "stochastic estimates survey", None);
    let ns = vec![8usize, 16, 32];
    let rep = lemma_norm_survey(&SurveyConfig {
        ns: ns.clone(),
        l: 2,
        d: 2,
        distribution: NoiseDistribution::Gaussian,
        seeds: (1..=50).collect(),
        alpha: 0.8,
        epsilon: 0.05,
        p: f64::INFINITY,
        q: f64::INFINITY,
    })
    .unwrap();
    c.check(format!("no survey warnings {:?}", rep.warnings), rep.warnings.is_empty());
    for q in ["xi", "x", "resonant"] {
        let med: Vec<f64> = ns.iter().map(|&n| rep.median(q, n).unwrap()).collect();
        let ratio = med.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / med.iter().cloned().fold(f64::INFINITY, f64::min);
        c.check(format!("{q}: medians {med:.4?}, max/min {ratio:.3} <= {SURVEY_FLATNESS}"), ratio <= SURVEY_FLATNESS);
    }
    let raw: Vec<f64> = ns.iter().map(|&n| rep.median("resonant_raw", n).unwrap()).collect();
    c.check(format!("unrenormalized resonant medians {raw:.4?} strictly increasing"), raw.windows(2).all(|w| w[1] > w[0]));
    c.finish();
}

#[test]
fn criterion_05_nu_identification() {
    let _g = lock();
    let mut c = Criterion::new(5, "positive-part mean", Some(10));
    let spec = LatticeSpec::new(64, 8, 2).unwrap();
    let noise = sample_noise(&NoiseSpec::new(spec, NoiseDistribution::Gaussian, 1));
    let st = positive_part_statistics(&noise);
    let nu = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let d1 = (st.mean_positive - nu).abs();
    c.check(
        format!("mean of positive part {:.6} vs {nu:.6}: {d1:.3e} <= 3 se = {:.3e}", st.mean_positive, 3.0 * st.se_positive),
        d1 <= 3.0 * st.se_positive,
    );
    let d2 = (st.mean_abs - 2.0 * nu).abs();
    c.check(
        format!("mean of absolute value {:.6} vs {:.6}: {d2:.3e} <= 3 se = {:.3e}", st.mean_abs, 2.0 * nu, 3.0 * st.se_abs),
        d2 <= 3.0 * st.se_abs,
    );
    c.finish();
}

#[test]
fn criterion_06_solver_oracle() {
    let _g = lock();
    let mut c = Criterion::new(6, "splitting vs dense exponential", Some(30));
    let spec = LatticeSpec::new(8, 2, 2).unwrap();
    let k = index_set(&spec, Flavor::Dirichlet)[0];
    let mode = basis_field(&spec, &k);
    let w0 = mode.scale(1.0 / mode.sup_norm());
    let (t, dt) = (0.1, 1e-3);
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for seed in 1..=20u64 {
        let pot = effective_potential(8, 2, 2, seed);
        let exact = DenseSemigroup::new(&pot).unwrap().apply(t, &w0);
        let err = |h: f64| {
            let traj = solve_linear_pam(&PamProblem::new(pot.clone(), w0.clone(), t, h)).unwrap();
            traj.last().sub(&exact).unwrap().sup_norm()
        };
        let (e1, e2) = (err(dt), err(dt / 2.0));
        worst = worst.max(e1);
        ratios.push(e1 / e2);
    }
    c.check(format!("worst sup difference over 20 environments {worst:.3e} <= {SOLVER_TOL:e}"), worst <= SOLVER_TOL);
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    c.check(
        format!("dt -> dt/2 error ratios in [{lo:.4}, {hi:.4}] within [{}, {}]", ORDER_RATIO.0, ORDER_RATIO.1),
        lo >= ORDER_RATIO.0 && hi <= ORDER_RATIO.1,
    );
    c.finish();
}

#[test]
fn criterion_07_principal_eigenpair() {
    let _g = lock();
    let mut c = Criterion::new(7, "principal eigenpair", Some(30));
    for seed in 1..=3u64 {
        let pot = effective_potential(8, 2, 2, seed);
        let (lambda, e) = DenseSemigroup::new(&pot).unwrap().principal();
        let ep = principal_eigenpair(&pot, &PowerIterationOptions::default()).unwrap();
        let gap = (ep.lambda - lambda).abs();
        c.check(format!("seed {seed}: lambda {:.9} vs dense {lambda:.9}, |diff| {gap:.3e} <= {EIGENVALUE_TOL:e}", ep.lambda), gap <= EIGENVALUE_TOL);
        let cos = ep.efunc.inner(&e).unwrap() / (ep.efunc.inner(&ep.efunc).unwrap() * e.inner(&e).unwrap()).sqrt();
        c.check(format!("seed {seed}: 1 - cosine {:.3e} <= {ALIGNMENT_TOL:e}", 1.0 - cos), cos >= 1.0 - ALIGNMENT_TOL);
        let spec = *pot.spec();
        let positive = spec.sites().filter(|&s| !spec.is_boundary(s)).all(|s| ep.efunc.get(s) > 0.0);
        c.check(
            format!("seed {seed}: positive on the interior, min {:.4e}, residual {:.3e}, {} iterations", ep.min_interior, ep.residual, ep.iterations),
            positive,
        );
    }
    c.finish();
}

fn duality_setups() -> Vec<(&'static str, DualitySetup)> {
    vec![
        ("d=1 n=32", DualitySetup::new(effective_potential(32, 2, 1, 1), 2, (0..2000).collect())),
        ("d=2 n=16", DualitySetup::new(effective_potential(16, 2, 2, 1), 2, (0..2000).collect())),
    ]
}

#[test]
fn criterion_08_moment_duality() {
    let _g = lock();
    let mut c = Criterion::new(8, "moment duality", None);
    for (label, setup) in duality_setups() {
        let phi = bump(setup.box_spec().unwrap());
        let r = test_moment_duality(&setup, 0.25, &phi).unwrap();
        c.report(&r, label);
    }
    c.finish();
}

#[test]
fn criterion_09_martingale_suite() {
    let _g = lock();
    let mut c = Criterion::new(9, "martingale suite", None);
    let t = 0.25;
    for (label, setup) in duality_setups() {
        let phi = bump(setup.box_spec().unwrap());
        let qv = test_martingale_qv(&setup, t, &phi).unwrap();
        c.report(&qv.mean, label);
        c.report(&qv.quadratic_variation, label);
        for r in test_laplace_functional(&setup, t, &phi, &[0.0, t / 2.0, t]).unwrap() {
            c.report(&r, label);
        }
    }
    c.finish();
}

#[test]
fn criterion_10_coupling_order() {
    let _g = lock();
    let mut c = Criterion::new(10, "coupling order and mass tail", None);
    let (d, horizon) = (1, 1.0);
    let times: Vec<f64> = (0..=8).map(|i| i as f64 * horizon / 8.0).collect();
    for n in [16usize, 32] {
        let setup = DualitySetup::new(effective_potential(n, 8, d, 1), 6, (0..1000).collect());
        let ord = test_ordering_replicas(&setup, horizon, &[2, 4, 6], &times).unwrap();
        c.check(format!("n={n}: ordering violations {} over {} runs (exact)", ord.statistic, ord.replicas), ord.pass);
        let tail = test_mass_tail(&setup, horizon, &[1.0, 2.0, 4.0, 8.0]).unwrap();
        let at = |r: f64| tail.tail[tail.r_grid.iter().position(|x| *x == r).unwrap()];
        c.check(
            format!("n={n}: tail {:?} nonincreasing, tail(8) = {} < tail(2) = {}", tail.tail, at(8.0), at(2.0)),
            tail.report.pass && at(8.0) < at(2.0),
        );
    }
    c.finish();
}

fn pipeline(dir: &Path) {
    let text = "n = 8\nseeds = 1,2\nd = 2\nL = 2\nL-max = 4\nT = 0.1\ndt = 0.001\nreplicas = 20\ntimes = 0,0.05,0.1\n";
    for command in [Command::GenEnv, Command::Solve, Command::Simulate, Command::Verify, Command::Survey] {
        let mut src = ConfigSource::parse(text).unwrap();
        src.set("output-dir", dir.display().to_string()).unwrap();
        run(&RunConfig::resolve(command, &src).unwrap()).unwrap();
    }
}

fn data_files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                if !rel.starts_with("manifest-") {
                    out.insert(rel, std::fs::read(&p).unwrap());
                }
            }
        }
    }
    out
}

#[test]
fn criterion_11_reproducibility() {
    let _g = lock();
    let mut c = Criterion::new(11, "reproducibility", Some(60));
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    let (fa, fb) = (data_files(a.path()), data_files(b.path()));
    c.check(format!("{} data files in each run", fa.len()), !fa.is_empty() && fa.keys().eq(fb.keys()));
    let differing: Vec<&String> = fa.iter().filter(|(k, v)| fb.get(*k) != Some(v)).map(|(k, _)| k).collect();
    c.check(format!("byte-identical outputs, {} differ {differing:?}", differing.len()), differing.is_empty());
    for command in ["gen-env", "solve", "simulate", "verify", "survey"] {
        let load = |d: &Path| krsbm_cli::RunManifest::load(&d.join(format!("manifest-{command}.json"))).unwrap();
        let (ma, mb) = (load(a.path()), load(b.path()));
        let same = ma.config_hash == mb.config_hash && ma.outputs == mb.outputs && ma.derived == mb.derived;
        c.check(format!("{command} manifest: hash and inventory agree"), same);
    }
    c.finish();
}
