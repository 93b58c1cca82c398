//! Discrete parabolic Anderson model with Dirichlet boundary:
//! `∂_t w = Δ^n w + ξ_e w + f` on the box, `w = 0` on its boundary.
//!
//! The production scheme is Strang splitting (half potential, exact spectral
//! heat step, half potential). [`DenseSemigroup`] diagonalizes the interior
//! generator and gives `e^{tH}` exactly for small lattices.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::lattice::{Field, Flavor, LatticeSpec};
use crate::spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Splitting,
    DenseExponential,
}

/// Time-dependent source term `f(t)`.
#[derive(Clone)]
pub enum Forcing {
    None,
    Constant(Field),
    Schedule(Arc<dyn Fn(f64) -> Field + Send + Sync>),
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::None => f.write_str("None"),
            Forcing::Constant(_) => f.write_str("Constant(..)"),
            Forcing::Schedule(_) => f.write_str("Schedule(..)"),
        }
    }
}

impl Forcing {
    fn at(&self, t: f64) -> Option<Field> {
        match self {
            Forcing::None => None,
            Forcing::Constant(f) => Some(f.clone()),
            Forcing::Schedule(g) => Some(g(t)),
        }
    }
}

/// Dense diagonalization is refused above this many interior sites.
pub const DENSE_MAX_SITES: usize = 4096;

#[derive(Debug, Clone)]
pub struct PamProblem {
    /// `ξ_e` on the box.
    pub potential: Field,
    pub w0: Field,
    pub forcing: Forcing,
    pub horizon: f64,
    pub dt: f64,
    pub scheme: Scheme,
    /// Keep every `record_every`-th step (the final state is always kept).
    pub record_every: usize,
}

impl PamProblem {
    pub fn new(potential: Field, w0: Field, horizon: f64, dt: f64) -> Self {
        Self {
            potential,
            w0,
            forcing: Forcing::None,
            horizon,
            dt,
            scheme: Scheme::Splitting,
            record_every: 1,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_record_every(mut self, k: usize) -> Self {
        self.record_every = k.max(1);
        self
    }

    fn validate(&self) -> Result<usize> {
        self.potential.spec().check_same(self.w0.spec())?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !self.w0.vanishes_on_boundary() {
            return Err(Error::InvalidArgument(
                "initial condition must vanish on the boundary".into(),
            ));
        }
        Ok(num_steps(self.horizon, self.dt))
    }
}

/// Number of steps of size at most `dt` covering `[0, t]`.
fn num_steps(t: f64, dt: f64) -> usize {
    ((t / dt) - 1e-9).ceil().max(1.0) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
}

impl Trajectory {
    pub fn last(&self) -> &Field {
        self.states.last().expect("trajectory is never empty")
    }

    /// State at the stored time closest to `t`.
    pub fn nearest(&self, t: f64) -> &Field {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .expect("trajectory is never empty");
        &self.states[i]
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.states.iter().map(Field::sup_norm).collect()
    }
}

/// One Strang step `e^{hV/2} e^{hΔ} e^{hV/2}` of fixed size `h`.
#[derive(Debug, Clone)]
pub struct SplitPropagator {
    spec: LatticeSpec,
    h: f64,
    half_potential: Vec<f64>,
    heat: Vec<f64>,
}

impl SplitPropagator {
    pub fn new(potential: &Field, h: f64) -> Self {
        let spec = *potential.spec();
        let half_potential = potential.values().iter().map(|v| (0.5 * h * v).exp()).collect();
        let mut heat = vec![1.0; spec.num_sites()];
        spectral::apply_symbol_to_full(&mut heat, &spec, |k| {
            (h * spectral::lattice_symbol(spec.n(), spec.d(), k)).exp()
        });
        Self {
            spec,
            h,
            half_potential,
            heat,
        }
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    fn scale_potential(&self, w: &mut Field) {
        for (v, e) in w.values_mut().iter_mut().zip(&self.half_potential) {
            *v *= e;
        }
    }

    fn heat(&self, w: &Field) -> Field {
        let mut full = spectral::forward_full(w, Flavor::Dirichlet);
        for (c, e) in full.iter_mut().zip(&self.heat) {
            *c *= e;
        }
        let mut out = spectral::inverse_full(self.spec, Flavor::Dirichlet, full);
        out.zero_boundary();
        out
    }

    pub fn step(&self, w: &Field) -> Field {
        let mut u = w.clone();
        self.scale_potential(&mut u);
        let mut u = self.heat(&u);
        self.scale_potential(&mut u);
        u
    }
}

/// `e^{tH}` on the interior sites via a symmetric eigendecomposition of
/// `H = Δ^n + diag(ξ_e)`.
#[derive(Debug, Clone)]
pub struct DenseSemigroup {
    spec: LatticeSpec,
    interior: Vec<usize>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl DenseSemigroup {
    pub fn new(potential: &Field) -> Result<Self> {
        let spec = *potential.spec();
        let interior: Vec<usize> = spec.sites().filter(|&s| !spec.is_boundary(s)).collect();
        if interior.len() > DENSE_MAX_SITES {
            return Err(Error::InvalidArgument(format!(
                "dense generator limited to {DENSE_MAX_SITES} interior sites, got {}",
                interior.len()
            )));
        }
        let h = dense_generator(potential, &interior);
        let eig = SymmetricEigen::new(h);
        Ok(Self {
            spec,
            interior,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    fn to_vec(&self, u: &Field) -> DVector<f64> {
        DVector::from_iterator(self.interior.len(), self.interior.iter().map(|&s| u.get(s)))
    }

    fn to_field(&self, v: &DVector<f64>) -> Field {
        let mut out = Field::zeros(self.spec);
        for (&s, x) in self.interior.iter().zip(v.iter()) {
            out.values_mut()[s] = *x;
        }
        out
    }

    /// `e^{tH} u` restricted to the interior; boundary values of `u` are ignored.
    pub fn apply(&self, t: f64, u: &Field) -> Field {
        let v = self.to_vec(u);
        let mut c = self.eigenvectors.tr_mul(&v);
        for (ci, l) in c.iter_mut().zip(self.eigenvalues.iter()) {
            *ci *= (t * l).exp();
        }
        self.to_field(&(&self.eigenvectors * c))
    }

    /// Largest eigenvalue and its eigenvector, normalized in the lattice
    /// inner product and made positive.
    pub fn principal(&self) -> (f64, Field) {
        let (i, lambda) = self
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, l)| (i, *l))
            .expect("non-empty interior");
        let v = self.eigenvectors.column(i).into_owned();
        (lambda, normalize_positive(self.to_field(&v)))
    }
}

/// Interior matrix of `Δ^n + diag(potential)` with zero boundary values.
pub fn dense_generator(potential: &Field, interior: &[usize]) -> DMatrix<f64> {
    let spec = potential.spec();
    let n2 = (spec.n() * spec.n()) as f64;
    let pos: std::collections::HashMap<usize, usize> =
        interior.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let mut h = DMatrix::zeros(interior.len(), interior.len());
    for (i, &s) in interior.iter().enumerate() {
        h[(i, i)] = -2.0 * spec.d() as f64 * n2 + potential.get(s);
        for t in spec.neighbors(s) {
            if let Some(&j) = pos.get(&t) {
                h[(i, j)] = n2;
            }
        }
    }
    h
}

/// `H u = Δ^n u + ξ_e u` with `u` extended by zero.
pub fn apply_hamiltonian(potential: &Field, u: &Field) -> Result<Field> {
    let mut v = u.clone();
    v.zero_boundary();
    let mut out = spectral::apply_laplacian(&v, Flavor::Dirichlet).add(&potential.mul(&v)?)?;
    out.zero_boundary();
    Ok(out)
}

fn normalize_positive(mut u: Field) -> Field {
    let norm = u.inner(&u).expect("same lattice").sqrt();
    let sign = if u.values().iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    u.values_mut().iter_mut().for_each(|v| *v *= sign / norm);
    u
}

fn add_forcing(
    w: &mut Field,
    forcing: &Forcing,
    t: f64,
    h: f64,
    half: &dyn Fn(&Field) -> Field,
) -> Result<()> {
    if let Some(mut f) = forcing.at(t + 0.5 * h) {
        f.zero_boundary();
        w.add_scaled(h, &half(&f))?;
    }
    Ok(())
}

/// Solves the linear problem on `[0, T]`. States are exactly zero on the boundary.
pub fn solve_linear_pam(problem: &PamProblem) -> Result<Trajectory> {
    let steps = problem.validate()?;
    let h = problem.horizon / steps as f64;
    let mut w = problem.w0.clone();
    let mut times = vec![0.0];
    let mut states = vec![w.clone()];
    let mut record = |i: usize, w: &Field| {
        if i % problem.record_every == 0 || i == steps {
            times.push(i as f64 * h);
            states.push(w.clone());
        }
    };
    match problem.scheme {
        Scheme::Splitting => {
            let full = SplitPropagator::new(&problem.potential, h);
            let half = SplitPropagator::new(&problem.potential, 0.5 * h);
            for i in 1..=steps {
                let t = (i - 1) as f64 * h;
                let mut next = full.step(&w);
                add_forcing(&mut next, &problem.forcing, t, h, &|f| half.step(f))?;
                w = next;
                record(i, &w);
            }
        }
        Scheme::DenseExponential => {
            let dense = DenseSemigroup::new(&problem.potential)?;
            for i in 1..=steps {
                let t = (i - 1) as f64 * h;
                let mut next = dense.apply(h, &w);
                add_forcing(&mut next, &problem.forcing, t, h, &|f| dense.apply(0.5 * h, f))?;
                w = next;
                record(i, &w);
            }
        }
    }
    Ok(Trajectory { times, states })
}

/// `T_t φ = e^{tH} φ` by splitting with steps of size at most `dt`.
pub fn semigroup_apply(potential: &Field, t: f64, phi: &Field, dt: f64) -> Result<Field> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        potential.spec().check_same(phi.spec())?;
        let mut out = phi.clone();
        out.zero_boundary();
        return Ok(out);
    }
    let mut w0 = phi.clone();
    w0.zero_boundary();
    let traj = solve_linear_pam(&PamProblem::new(potential.clone(), w0, t, dt).with_record_every(usize::MAX))?;
    Ok(traj.last().clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    /// Rayleigh quotient `⟨e, He⟩` of the converged iterate.
    pub lambda: f64,
    /// `log(‖T_δ e‖/‖e‖)/δ` at the last iteration.
    pub lambda_growth: f64,
    pub efunc: Field,
    /// `‖H e − λ e‖₂` with `e` unit-normalized.
    pub residual: f64,
    pub iterations: usize,
    pub min_interior: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationOptions {
    /// Shift `δ` of the iterated operator `T_δ`.
    pub delta: f64,
    /// Splitting substep used to apply `T_δ`.
    pub substep: f64,
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            delta: 0.1,
            substep: 1e-4,
            tol: 1e-10,
            max_iterations: 2000,
        }
    }
}

/// Principal eigenpair of `H = Δ^n + ξ_e` by power iteration on `T_δ`
/// started from the constant interior field.
pub fn principal_eigenpair(potential: &Field, opts: &PowerIterationOptions) -> Result<EigenPair> {
    if !(opts.delta > 0.0 && opts.substep > 0.0) {
        return Err(Error::InvalidArgument("delta and substep must be positive".into()));
    }
    let spec = *potential.spec();
    let steps = num_steps(opts.delta, opts.substep);
    let prop = SplitPropagator::new(potential, opts.delta / steps as f64);
    let mut e = Field::constant(spec, 1.0);
    e.zero_boundary();
    let mut e = normalize_positive(e);
    let rayleigh = |e: &Field| -> Result<(f64, f64)> {
        let he = apply_hamiltonian(potential, e)?;
        let lambda = e.inner(&he)?;
        let r = he.sub(&e.scale(lambda))?;
        Ok((lambda, r.inner(&r)?.sqrt()))
    };
    let (mut lambda, mut residual) = rayleigh(&e)?;
    for it in 1..=opts.max_iterations {
        let mut next = e.clone();
        for _ in 0..steps {
            next = prop.step(&next);
        }
        let growth = next.inner(&next)?.sqrt();
        let next = normalize_positive(next);
        let (l, r) = rayleigh(&next)?;
        let change = (l - lambda).abs();
        e = next;
        lambda = l;
        residual = r;
        if change <= opts.tol * lambda.abs().max(1.0) {
            let min_interior = spec
                .sites()
                .filter(|&s| !spec.is_boundary(s))
                .map(|s| e.get(s))
                .fold(f64::INFINITY, f64::min);
            return Ok(EigenPair {
                lambda,
                lambda_growth: growth.ln() / opts.delta,
                efunc: e,
                residual,
                iterations: it,
                min_interior,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        residual,
    })
}

/// Coefficient of the quadratic sink in the dual equation.
#[derive(Debug, Clone, PartialEq)]
pub enum Nonlinearity {
    Uniform(f64),
    Site(Field),
}

impl Nonlinearity {
    fn coefficients(&self, spec: &LatticeSpec) -> Result<Vec<f64>> {
        match self {
            Nonlinearity::Uniform(nu) => {
                if *nu < 0.0 {
                    return Err(Error::InvalidArgument(format!("nonlinearity must be nonnegative, got {nu}")));
                }
                Ok(vec![*nu; spec.num_sites()])
            }
            Nonlinearity::Site(f) => {
                spec.check_same(f.spec())?;
                if f.values().iter().any(|v| *v < 0.0) {
                    return Err(Error::InvalidArgument("site nonlinearity must be nonnegative".into()));
                }
                Ok(f.values().to_vec())
            }
        }
    }
}

fn sink(phi: &mut Field, nu: &[f64], h: f64) {
    for (v, c) in phi.values_mut().iter_mut().zip(nu) {
        *v = (*v / (1.0 + c * *v * h)).max(0.0);
    }
}

/// Solution of `∂φ = Hφ − ν φ²` on `[0, t]`, stored at every step.
///
/// Each step is the Strang composition of the exact quadratic sink
/// `φ ↦ φ/(1 + νφh/2)` around one linear splitting step.
pub fn solve_dual_fkpp_path(
    potential: &Field,
    phi0: &Field,
    nonlinearity: &Nonlinearity,
    t: f64,
    dt: f64,
) -> Result<Trajectory> {
    potential.spec().check_same(phi0.spec())?;
    if phi0.values().iter().any(|v| *v < 0.0) {
        return Err(Error::InvalidArgument("dual initial condition must be nonnegative".into()));
    }
    if !phi0.vanishes_on_boundary() {
        return Err(Error::InvalidArgument("dual initial condition must vanish on the boundary".into()));
    }
    if t < 0.0 || !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("need t ≥ 0 and dt > 0, got t={t} dt={dt}")));
    }
    let nu = nonlinearity.coefficients(potential.spec())?;
    let mut phi = phi0.clone();
    let mut times = vec![0.0];
    let mut states = vec![phi.clone()];
    if t == 0.0 {
        return Ok(Trajectory { times, states });
    }
    let steps = num_steps(t, dt);
    let h = t / steps as f64;
    let prop = SplitPropagator::new(potential, h);
    for i in 1..=steps {
        sink(&mut phi, &nu, 0.5 * h);
        phi = prop.step(&phi);
        for v in phi.values_mut() {
            *v = v.max(0.0);
        }
        sink(&mut phi, &nu, 0.5 * h);
        times.push(i as f64 * h);
        states.push(phi.clone());
    }
    Ok(Trajectory { times, states })
}

/// `U_t φ0`, the time-`t` value of [`solve_dual_fkpp_path`].
pub fn solve_dual_fkpp(
    potential: &Field,
    phi0: &Field,
    nonlinearity: &Nonlinearity,
    t: f64,
    dt: f64,
) -> Result<Field> {
    Ok(solve_dual_fkpp_path(potential, phi0, nonlinearity, t, dt)?.last().clone())
}
