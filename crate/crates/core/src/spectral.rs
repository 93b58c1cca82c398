//! Sine/cosine bases on the box, Fourier multipliers, the lattice Laplacian
//! and the renormalization constant.
//!
//! Frequencies are stored as integers `K` with `k = K/N`. Along each axis the
//! Dirichlet index set is `K ∈ {1, …, M−1}` and the Neumann index set is
//! `K ∈ {0, …, M}`. The Dirichlet Nyquist mode `K = M` vanishes identically
//! on the lattice and is left out; the Neumann Nyquist mode carries an extra
//! `2^{-1/2}` so that the cosine basis stays orthonormal.
//!
//! Transforms go through the periodic FFT of the reflected line of length
//! `2M`, one axis at a time.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{Field, Flavor, LatticeSpec, TorusField, MAX_DIM};

/// Frequency multi-index `K` (frequency `K/N`) in a flavor's index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DualIndex {
    k: [i64; MAX_DIM],
    flavor: Flavor,
}

impl DualIndex {
    pub fn new(spec: &LatticeSpec, k: [i64; MAX_DIM], flavor: Flavor) -> Result<Self> {
        let m = spec.m() as i64;
        let ok = (0..MAX_DIM).all(|a| {
            if a >= spec.d() {
                return k[a] == 0;
            }
            match flavor {
                Flavor::Dirichlet => (1..m).contains(&k[a]),
                Flavor::Neumann => (0..=m).contains(&k[a]),
            }
        });
        if ok {
            Ok(Self { k, flavor })
        } else {
            Err(Error::IndexOutOfSet {
                index: k[..spec.d()].to_vec(),
                flavor: flavor.name(),
            })
        }
    }

    pub fn k(&self) -> [i64; MAX_DIM] {
        self.k
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    /// `k = K/N`.
    pub fn frequency(&self, spec: &LatticeSpec) -> [f64; MAX_DIM] {
        let n = spec.torus_side() as f64;
        [self.k[0] as f64 / n, self.k[1] as f64 / n]
    }
}

/// Per-axis range of the flavor's index set.
fn axis_range(spec: &LatticeSpec, flavor: Flavor) -> std::ops::RangeInclusive<usize> {
    match flavor {
        Flavor::Dirichlet => 1..=spec.m() - 1,
        Flavor::Neumann => 0..=spec.m(),
    }
}

/// `|A^n_flavor|`.
pub fn index_set_len(spec: &LatticeSpec, flavor: Flavor) -> usize {
    let r = axis_range(spec, flavor);
    (r.end() + 1 - r.start()).pow(spec.d() as u32)
}

/// Index set of the flavor, row-major.
pub fn index_set(spec: &LatticeSpec, flavor: Flavor) -> Vec<DualIndex> {
    let r = axis_range(spec, flavor);
    let mut out = Vec::with_capacity(index_set_len(spec, flavor));
    if spec.d() == 1 {
        for a in r {
            out.push(DualIndex {
                k: [a as i64, 0],
                flavor,
            });
        }
    } else {
        for a in r.clone() {
            for b in r.clone() {
                out.push(DualIndex {
                    k: [a as i64, b as i64],
                    flavor,
                });
            }
        }
    }
    out
}

/// Coefficients `⟨u, l_k⟩` over the flavor's index set, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumCoeffs {
    spec: LatticeSpec,
    flavor: Flavor,
    coeffs: Vec<f64>,
}

impl SpectrumCoeffs {
    pub fn new(spec: LatticeSpec, flavor: Flavor, coeffs: Vec<f64>) -> Result<Self> {
        let len = index_set_len(&spec, flavor);
        if coeffs.len() != len {
            return Err(Error::InvalidArgument(format!(
                "{flavor} spectrum on {spec} has {len} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            spec,
            flavor,
            coeffs,
        })
    }

    pub fn zeros(spec: LatticeSpec, flavor: Flavor) -> Self {
        Self {
            coeffs: vec![0.0; index_set_len(&spec, flavor)],
            spec,
            flavor,
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn indices(&self) -> Vec<DualIndex> {
        index_set(&self.spec, self.flavor)
    }

    fn position(&self, k: &DualIndex) -> usize {
        let r = axis_range(&self.spec, self.flavor);
        let side = r.end() + 1 - r.start();
        let off = *r.start() as i64;
        match self.spec.d() {
            1 => (k.k[0] - off) as usize,
            _ => (k.k[0] - off) as usize * side + (k.k[1] - off) as usize,
        }
    }

    pub fn get(&self, k: &DualIndex) -> f64 {
        self.coeffs[self.position(k)]
    }

    pub fn set(&mut self, k: &DualIndex, v: f64) {
        let p = self.position(k);
        self.coeffs[p] = v;
    }

    /// Expands to the full `(M+1)^d` frequency grid, zero outside the index set.
    fn to_full(&self) -> Vec<f64> {
        let mut full = vec![0.0; self.spec.num_sites()];
        for (k, &c) in self.indices().iter().zip(&self.coeffs) {
            full[self.spec.index([k.k[0] as usize, k.k[1] as usize])] = c;
        }
        full
    }

    fn from_full(spec: LatticeSpec, flavor: Flavor, full: &[f64]) -> Self {
        let coeffs = index_set(&spec, flavor)
            .iter()
            .map(|k| full[spec.index([k.k[0] as usize, k.k[1] as usize])])
            .collect();
        Self {
            spec,
            flavor,
            coeffs,
        }
    }
}

/// Per-axis amplitude of a basis function: `2` for sines and interior
/// cosines, `√2` for the constant and Nyquist cosines.
fn amplitude(flavor: Flavor, k: i64, m: i64) -> f64 {
    match flavor {
        Flavor::Neumann if k == 0 || k == m => std::f64::consts::SQRT_2,
        _ => 2.0,
    }
}

/// `d_k(x) = N^{-d/2} ∏ 2 sin(2π k_i x_i)` at corner coordinates `x`.
pub fn dirichlet_basis_eval(spec: &LatticeSpec, k: &DualIndex, x: [f64; MAX_DIM]) -> Result<f64> {
    if k.flavor != Flavor::Dirichlet {
        return Err(Error::InvalidArgument("expected a Dirichlet index".into()));
    }
    DualIndex::new(spec, k.k, Flavor::Dirichlet)?;
    Ok(basis_eval(spec, k, x))
}

/// `n_k(x) = N^{-d/2} ∏ a_{k_i} cos(2π k_i x_i)` at corner coordinates `x`.
pub fn neumann_basis_eval(spec: &LatticeSpec, k: &DualIndex, x: [f64; MAX_DIM]) -> Result<f64> {
    if k.flavor != Flavor::Neumann {
        return Err(Error::InvalidArgument("expected a Neumann index".into()));
    }
    DualIndex::new(spec, k.k, Flavor::Neumann)?;
    Ok(basis_eval(spec, k, x))
}

pub(crate) fn basis_eval(spec: &LatticeSpec, k: &DualIndex, x: [f64; MAX_DIM]) -> f64 {
    let big_n = spec.torus_side() as f64;
    let m = spec.m() as i64;
    let freq = k.frequency(spec);
    let mut v = big_n.powf(-(spec.d() as f64) / 2.0);
    for a in 0..spec.d() {
        let arg = 2.0 * PI * freq[a] * x[a];
        v *= amplitude(k.flavor, k.k[a], m)
            * match k.flavor {
                Flavor::Dirichlet => arg.sin(),
                Flavor::Neumann => arg.cos(),
            };
    }
    v
}

/// A basis function sampled on the box; sine modes are set to exactly zero
/// on the boundary.
pub fn basis_field(spec: &LatticeSpec, k: &DualIndex) -> Field {
    let mut f = Field::from_fn(*spec, |s, _| basis_eval(spec, k, spec.corner_position(s)));
    if k.flavor() == Flavor::Dirichlet {
        f.zero_boundary();
    }
    f
}

thread_local! {
    static FFTS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

fn fft_plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    FFTS.with(|cache| {
        cache
            .borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

/// In place: `y_K = Σ_{i=1}^{M-1} x_i sin(πKi/M)` for `K = 0..=M`.
fn sine_sum(line: &mut [f64], buf: &mut Vec<Complex<f64>>) {
    let m = line.len() - 1;
    if m < 2 {
        line.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    buf.clear();
    buf.resize(2 * m, Complex::new(0.0, 0.0));
    for i in 1..m {
        buf[i].re = line[i];
        buf[2 * m - i].re = -line[i];
    }
    fft_plan(2 * m, false).process(buf);
    for (k, v) in line.iter_mut().enumerate() {
        *v = -0.5 * buf[k].im;
    }
    line[0] = 0.0;
    line[m] = 0.0;
}

/// In place: `y_K = Σ_{i=0}^{M} ω_i x_i cos(πKi/M)` with end weights `1/2`.
fn cosine_sum(line: &mut [f64], buf: &mut Vec<Complex<f64>>) {
    let m = line.len() - 1;
    if m == 0 {
        line[0] *= 0.5;
        return;
    }
    buf.clear();
    buf.resize(2 * m, Complex::new(0.0, 0.0));
    for i in 0..=m {
        buf[i].re = line[i];
    }
    for i in 1..m {
        buf[2 * m - i].re = line[i];
    }
    fft_plan(2 * m, false).process(buf);
    for (k, v) in line.iter_mut().enumerate() {
        *v = 0.5 * buf[k].re;
    }
}

/// Applies a 1-d line operation along every axis of an `(M+1)^d` array.
fn along_axes(data: &mut [f64], side: usize, d: usize, mut op: impl FnMut(&mut [f64])) {
    if d == 1 {
        op(data);
        return;
    }
    for row in data.chunks_mut(side) {
        op(row);
    }
    let mut col = vec![0.0; side];
    for c in 0..side {
        for r in 0..side {
            col[r] = data[r * side + c];
        }
        op(&mut col);
        for r in 0..side {
            data[r * side + c] = col[r];
        }
    }
}

/// Coefficients `⟨u, l_k⟩` over the flavor's index set. Boundary values of
/// `u` do not enter the Dirichlet transform.
pub fn forward_transform(u: &Field, flavor: Flavor) -> SpectrumCoeffs {
    let spec = *u.spec();
    let full = forward_full(u, flavor);
    SpectrumCoeffs::from_full(spec, flavor, &full)
}

/// Forward transform on the full `(M+1)^d` frequency grid.
pub(crate) fn forward_full(u: &Field, flavor: Flavor) -> Vec<f64> {
    let spec = *u.spec();
    let m = spec.m();
    let scale = 1.0 / (spec.n() as f64 * (spec.torus_side() as f64).sqrt());
    let mut data = u.values().to_vec();
    let mut buf = Vec::new();
    along_axes(&mut data, m + 1, spec.d(), |line| match flavor {
        Flavor::Dirichlet => {
            sine_sum(line, &mut buf);
            line.iter_mut().for_each(|v| *v *= 2.0 * scale);
        }
        Flavor::Neumann => {
            cosine_sum(line, &mut buf);
            for (k, v) in line.iter_mut().enumerate() {
                *v *= amplitude(flavor, k as i64, m as i64) * scale;
            }
        }
    });
    data
}

/// Synthesis `Σ_k c_k l_k`.
pub fn inverse_transform(c: &SpectrumCoeffs) -> Field {
    let full = c.to_full();
    inverse_full(c.spec, c.flavor, full)
}

pub(crate) fn inverse_full(spec: LatticeSpec, flavor: Flavor, mut data: Vec<f64>) -> Field {
    let m = spec.m();
    let scale = 1.0 / (spec.torus_side() as f64).sqrt();
    let mut buf = Vec::new();
    along_axes(&mut data, m + 1, spec.d(), |line| match flavor {
        Flavor::Dirichlet => {
            line[0] = 0.0;
            line[m] = 0.0;
            sine_sum(line, &mut buf);
            line.iter_mut().for_each(|v| *v *= 2.0 * scale);
        }
        Flavor::Neumann => {
            // cosine_sum applies ω_K, so divide it out first
            for (k, v) in line.iter_mut().enumerate() {
                let w = if k == 0 || k == m { 0.5 } else { 1.0 };
                *v *= amplitude(flavor, k as i64, m as i64) / w;
            }
            cosine_sum(line, &mut buf);
            line.iter_mut().for_each(|v| *v *= scale);
        }
    });
    Field::from_values(spec, data).expect("transform preserves length")
}

type Symbol = dyn Fn([f64; MAX_DIM]) -> f64 + Send + Sync;

/// An even real symbol `σ(k)` on the dual torus, `k` in units of `1/N`·integer.
#[derive(Clone)]
pub struct MultiplierSpec {
    name: String,
    symbol: Arc<Symbol>,
}

impl fmt::Debug for MultiplierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiplierSpec").field("name", &self.name).finish()
    }
}

impl MultiplierSpec {
    pub fn new(
        name: impl Into<String>,
        symbol: impl Fn([f64; MAX_DIM]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            symbol: Arc::new(symbol),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, k: [f64; MAX_DIM]) -> f64 {
        (self.symbol)(k)
    }

    pub fn identity() -> Self {
        Self::new("identity", |_| 1.0)
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    /// `l^n(k) = Σ_j 2n²(cos(2π k_j/n) − 1)`.
    pub fn laplacian(spec: &LatticeSpec) -> Self {
        let (n, d) = (spec.n(), spec.d());
        Self::new("laplacian", move |k| lattice_symbol(n, d, k))
    }

    /// Radial cut-off: `0` for `|k| ≤ 1/4`, `1` for `|k| ≥ 1/2`, C² quintic
    /// blend in between. Kills the zero mode.
    pub fn cutoff() -> Self {
        Self::new("chi", |k| {
            let r = (k[0] * k[0] + k[1] * k[1]).sqrt();
            smooth_step((r - 0.25) / 0.25)
        })
    }

    /// Checks `σ(q∘k) = σ(k)` for every sign vector `q` and every frequency
    /// of the flavor's index set.
    pub fn check_even(&self, spec: &LatticeSpec, flavor: Flavor) -> Result<()> {
        for k in index_set(spec, flavor) {
            let f = k.frequency(spec);
            let base = self.eval(f);
            for q in 1..(1usize << spec.d()) {
                let mut g = f;
                for (a, ga) in g.iter_mut().enumerate().take(spec.d()) {
                    if q >> a & 1 == 1 {
                        *ga = -*ga;
                    }
                }
                let v = self.eval(g);
                if (v - base).abs() > 1e-12 * base.abs().max(1.0) {
                    return Err(Error::NonEvenSymbol(self.name.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Quintic smoothstep: `0` below `0`, `1` above `1`, C² in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}

pub(crate) fn lattice_symbol(n: usize, d: usize, k: [f64; MAX_DIM]) -> f64 {
    let n = n as f64;
    (0..d)
        .map(|j| 2.0 * n * n * ((2.0 * PI * k[j] / n).cos() - 1.0))
        .sum()
}

/// Eigenvalue `l^n(k) ≤ 0` of the Dirichlet/Neumann lattice Laplacian on `l_k`.
pub fn laplacian_symbol(k: &DualIndex, spec: &LatticeSpec) -> f64 {
    lattice_symbol(spec.n(), spec.d(), k.frequency(spec))
}

/// Applies a symbol on the full frequency grid; the caller guarantees evenness.
pub(crate) fn apply_symbol_unchecked(symbol: &MultiplierSpec, u: &Field, flavor: Flavor) -> Field {
    let spec = *u.spec();
    let mut full = forward_full(u, flavor);
    apply_symbol_to_full(&mut full, &spec, |k| symbol.eval(k));
    inverse_full(spec, flavor, full)
}

pub(crate) fn apply_symbol_to_full(
    full: &mut [f64],
    spec: &LatticeSpec,
    symbol: impl Fn([f64; MAX_DIM]) -> f64,
) {
    let big_n = spec.torus_side() as f64;
    for (s, c) in full.iter_mut().enumerate() {
        if *c == 0.0 {
            continue;
        }
        let i = spec.multi_index(s);
        *c *= symbol([i[0] as f64 / big_n, i[1] as f64 / big_n]);
    }
}

/// `σ(D)u = Σ_k σ(k) ⟨u, l_k⟩ l_k`.
pub fn fourier_multiplier(symbol: &MultiplierSpec, u: &Field, flavor: Flavor) -> Result<Field> {
    symbol.check_even(u.spec(), flavor)?;
    Ok(apply_symbol_unchecked(symbol, u, flavor))
}

/// Periodic multiplier `F^{-1}(σ F v)` on the torus.
pub fn torus_multiplier(symbol: &MultiplierSpec, v: &TorusField) -> TorusField {
    let spec = *v.spec();
    let p = spec.torus_len();
    let big_m = spec.m() as i64;
    let big_n = spec.torus_side() as f64;
    let mut data: Vec<Complex<f64>> = v.values().iter().map(|&x| Complex::new(x, 0.0)).collect();
    let fwd = fft_plan(p, false);
    let inv = fft_plan(p, true);
    let complex_axes = |data: &mut [Complex<f64>], plan: &Arc<dyn Fft<f64>>| {
        if spec.d() == 1 {
            plan.process(data);
            return;
        }
        for row in data.chunks_mut(p) {
            plan.process(row);
        }
        let mut col = vec![Complex::new(0.0, 0.0); p];
        for c in 0..p {
            for r in 0..p {
                col[r] = data[r * p + c];
            }
            plan.process(&mut col);
            for r in 0..p {
                data[r * p + c] = col[r];
            }
        }
    };
    complex_axes(&mut data, &fwd);
    let freq = |m: usize| {
        let k = m as i64;
        (if k <= big_m { k } else { k - 2 * big_m }) as f64 / big_n
    };
    for (t, z) in data.iter_mut().enumerate() {
        let m = spec.torus_multi_index(t);
        *z *= symbol.eval([freq(m[0]), if spec.d() > 1 { freq(m[1]) } else { 0.0 }]);
    }
    complex_axes(&mut data, &inv);
    let norm = 1.0 / spec.num_torus_sites() as f64;
    TorusField::from_values(spec, data.iter().map(|z| z.re * norm).collect())
        .expect("length preserved")
}

/// Stencil Laplacian `(Δ^n Π u)|_Λ` with `Π` the flavor's extension.
pub fn apply_laplacian(u: &Field, flavor: Flavor) -> Field {
    crate::lattice::restrict(&crate::lattice::extension(u, flavor).laplacian())
}

/// `κ_n = N^{-d} Σ_{k ∈ Ξ_n} χ(k) / l̃^n(k)` with `l̃^n = −l^n ≥ 0`; `d = 2` only.
pub fn renormalization_constant(spec: &LatticeSpec, cutoff: &MultiplierSpec) -> Result<f64> {
    if spec.d() != 2 {
        return Err(Error::InvalidArgument(format!(
            "renormalization constant is defined for d = 2, got d = {}",
            spec.d()
        )));
    }
    if cutoff.eval([0.0, 0.0]) != 0.0 {
        return Err(Error::InvalidArgument(format!(
            "cut-off `{}` must vanish at the zero mode",
            cutoff.name()
        )));
    }
    let m = spec.m() as i64;
    let big_n = spec.torus_side() as f64;
    let mut sum = 0.0;
    for a in (-m + 1)..=m {
        let mut row = 0.0;
        for b in (-m + 1)..=m {
            let k = [a as f64 / big_n, b as f64 / big_n];
            let c = cutoff.eval(k);
            if c != 0.0 {
                row += c / -lattice_symbol(spec.n(), 2, k);
            }
        }
        sum += row;
    }
    Ok(sum / (big_n * big_n))
}
