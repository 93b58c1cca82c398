//! Box lattices, their periodic doubling, and the reflection extensions
//! that encode Dirichlet and Neumann boundary conditions.
//!
//! A box `Λ_n` with side `L` and mesh `1/n` has `M + 1 = L·n + 1` sites per
//! axis, indexed by `i ∈ {0, …, M}` (corner coordinate `i/n`). The torus
//! `Θ_n` has side `N = 2L`, i.e. `2M` sites per axis, indexed by
//! `m ∈ {0, …, 2M − 1}`; torus site `m` sits at corner coordinate `m/n`
//! for `m ≤ M` and `(m − 2M)/n` otherwise. The box embeds at `m = i` and
//! its mirror image at `m = 2M − i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported dimension.
pub const MAX_DIM: usize = 2;

/// Multi-index with unused trailing axes set to zero.
pub type MultiIndex = [usize; MAX_DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Flavor {
    Dirichlet,
    Neumann,
}

impl Flavor {
    pub fn name(self) -> &'static str {
        match self {
            Flavor::Dirichlet => "dirichlet",
            Flavor::Neumann => "neumann",
        }
    }

    pub fn parse(s: &str) -> Option<Flavor> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dirichlet" | "d" => Some(Flavor::Dirichlet),
            "neumann" | "n" => Some(Flavor::Neumann),
            _ => None,
        }
    }

    /// Flavor of a pointwise product, following `Π_o(uw) = Π_o u · Π_e w`.
    pub fn product(self, other: Flavor) -> Flavor {
        if self == other {
            Flavor::Neumann
        } else {
            Flavor::Dirichlet
        }
    }
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Geometry of `Λ_n` (box of side `L`, mesh `1/n`, dimension `d`) and of the
/// doubled torus `Θ_n` of side `N = 2L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSpec {
    n: usize,
    l: usize,
    d: usize,
    centered: bool,
}

impl LatticeSpec {
    /// Centered box `[-L/2, L/2]^d`.
    pub fn new(n: usize, l: usize, d: usize) -> Result<Self> {
        Self::build(n, l, d, true)
    }

    /// Corner box `[0, L]^d`.
    pub fn corner(n: usize, l: usize, d: usize) -> Result<Self> {
        Self::build(n, l, d, false)
    }

    fn build(n: usize, l: usize, d: usize, centered: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidLattice("mesh parameter n must be positive".into()));
        }
        if l == 0 || l % 2 != 0 {
            return Err(Error::InvalidLattice(format!(
                "box side L must be a positive even integer, got {l}"
            )));
        }
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::InvalidLattice(format!("dimension must be 1 or 2, got {d}")));
        }
        Ok(Self { n, l, d, centered })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn centered(&self) -> bool {
        self.centered
    }

    /// Torus side `N = 2L`.
    pub fn torus_side(&self) -> usize {
        2 * self.l
    }

    /// `M = L·n`: the last box index along each axis.
    pub fn m(&self) -> usize {
        self.l * self.n
    }

    pub fn side_len(&self) -> usize {
        self.m() + 1
    }

    pub fn torus_len(&self) -> usize {
        2 * self.m()
    }

    /// `|Λ_n| = (Ln + 1)^d`.
    pub fn num_sites(&self) -> usize {
        self.side_len().pow(self.d as u32)
    }

    /// `|Θ_n| = (Nn)^d`.
    pub fn num_torus_sites(&self) -> usize {
        self.torus_len().pow(self.d as u32)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        Self::build(n, self.l, self.d, self.centered)
    }

    pub fn with_l(&self, l: usize) -> Result<Self> {
        Self::build(self.n, l, self.d, self.centered)
    }

    pub fn sites(&self) -> std::ops::Range<usize> {
        0..self.num_sites()
    }

    pub fn index(&self, i: MultiIndex) -> usize {
        let s = self.side_len();
        match self.d {
            1 => i[0],
            _ => i[0] * s + i[1],
        }
    }

    pub fn multi_index(&self, idx: usize) -> MultiIndex {
        let s = self.side_len();
        match self.d {
            1 => [idx, 0],
            _ => [idx / s, idx % s],
        }
    }

    /// Corner coordinates `i/n`, used by all basis formulas.
    pub fn corner_position(&self, idx: usize) -> [f64; MAX_DIM] {
        let i = self.multi_index(idx);
        let n = self.n as f64;
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.d {
            x[a] = i[a] as f64 / n;
        }
        x
    }

    /// Integer lattice point `n·x` in physical (shifted if centered) coordinates.
    pub fn lattice_point(&self, idx: usize) -> [i64; MAX_DIM] {
        let i = self.multi_index(idx);
        let shift = if self.centered { (self.m() / 2) as i64 } else { 0 };
        let mut z = [0i64; MAX_DIM];
        for a in 0..self.d {
            z[a] = i[a] as i64 - shift;
        }
        z
    }

    /// Physical coordinates of a site.
    pub fn position(&self, idx: usize) -> [f64; MAX_DIM] {
        let z = self.lattice_point(idx);
        let n = self.n as f64;
        [z[0] as f64 / n, z[1] as f64 / n]
    }

    pub fn index_of_point(&self, z: [i64; MAX_DIM]) -> Option<usize> {
        let shift = if self.centered { (self.m() / 2) as i64 } else { 0 };
        let mut i = [0usize; MAX_DIM];
        for a in 0..MAX_DIM {
            if a >= self.d {
                if z[a] != 0 {
                    return None;
                }
                continue;
            }
            let v = z[a] + shift;
            if v < 0 || v > self.m() as i64 {
                return None;
            }
            i[a] = v as usize;
        }
        Some(self.index(i))
    }

    /// Site at the physical origin (the box centre when centered).
    pub fn origin(&self) -> Option<usize> {
        self.index_of_point([0, 0])
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let i = self.multi_index(idx);
        let m = self.m();
        (0..self.d).any(|a| i[a] == 0 || i[a] == m)
    }

    /// Trapezoidal weight `∏_a (1/2 if i_a ∈ {0, M} else 1)`. With it,
    /// `n^{-d} Σ_Λ ω u w = 2^{-d} ⟨Π u, Π w⟩_{L²(Θ_n)}` for either extension.
    pub fn weight(&self, idx: usize) -> f64 {
        let i = self.multi_index(idx);
        let m = self.m();
        (0..self.d)
            .map(|a| if i[a] == 0 || i[a] == m { 0.5 } else { 1.0 })
            .product()
    }

    /// Nearest neighbours inside the box.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let i = self.multi_index(idx);
        let m = self.m();
        (0..self.d).flat_map(move |a| {
            let mut out = [None, None];
            if i[a] > 0 {
                let mut j = i;
                j[a] -= 1;
                out[0] = Some(self.index(j));
            }
            if i[a] < m {
                let mut j = i;
                j[a] += 1;
                out[1] = Some(self.index(j));
            }
            out.into_iter().flatten()
        })
    }

    pub fn torus_index(&self, m: MultiIndex) -> usize {
        let s = self.torus_len();
        match self.d {
            1 => m[0],
            _ => m[0] * s + m[1],
        }
    }

    pub fn torus_multi_index(&self, idx: usize) -> MultiIndex {
        let s = self.torus_len();
        match self.d {
            1 => [idx, 0],
            _ => [idx / s, idx % s],
        }
    }

    pub(crate) fn check_same(&self, other: &LatticeSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::LatticeMismatch {
                left: self.to_string(),
                right: other.to_string(),
            })
        }
    }
}

impl fmt::Display for LatticeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "n={} L={} d={}{}",
            self.n,
            self.l,
            self.d,
            if self.centered { "" } else { " (corner)" }
        )
    }
}

/// All sites of `Λ_n` with at least one coordinate on the box boundary.
pub fn boundary_sites(spec: &LatticeSpec) -> Vec<usize> {
    spec.sites().filter(|&s| spec.is_boundary(s)).collect()
}

/// Real function on the box `Λ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: LatticeSpec,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(spec: LatticeSpec) -> Self {
        Self {
            values: vec![0.0; spec.num_sites()],
            spec,
        }
    }

    pub fn constant(spec: LatticeSpec, c: f64) -> Self {
        Self {
            values: vec![c; spec.num_sites()],
            spec,
        }
    }

    pub fn from_values(spec: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_sites() {
            return Err(Error::InvalidArgument(format!(
                "field on {spec} needs {} values, got {}",
                spec.num_sites(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value at site {pos}")));
        }
        Ok(Self { spec, values })
    }

    /// Builds a field from a function of the site index and physical position.
    pub fn from_fn(spec: LatticeSpec, mut f: impl FnMut(usize, [f64; MAX_DIM]) -> f64) -> Self {
        let values = spec.sites().map(|s| f(s, spec.position(s))).collect();
        Self { spec, values }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.spec.check_same(&other.spec)?;
        Ok(Field {
            spec: self.spec,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn add_scaled(&mut self, c: f64, other: &Field) -> Result<()> {
        self.spec.check_same(&other.spec)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    /// Sets boundary values to zero.
    pub fn zero_boundary(&mut self) {
        for s in self.spec.sites() {
            if self.spec.is_boundary(s) {
                self.values[s] = 0.0;
            }
        }
    }

    pub fn vanishes_on_boundary(&self) -> bool {
        self.spec
            .sites()
            .all(|s| !self.spec.is_boundary(s) || self.values[s] == 0.0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `⟨u, w⟩ = n^{-d} Σ_Λ ω(x) u(x) w(x)`, under which both the sine and the
    /// cosine bases are orthonormal.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.spec.check_same(&other.spec)?;
        let scale = (self.spec.n as f64).powi(-(self.spec.d as i32));
        let s: f64 = self
            .spec
            .sites()
            .map(|i| self.spec.weight(i) * self.values[i] * other.values[i])
            .sum();
        Ok(scale * s)
    }

    /// `‖Π u‖_{L^p(Θ_n)}` with the normalized counting measure `n^{-d} Σ_Θ`,
    /// `Π` being the odd (Dirichlet) or even (Neumann) extension. Computed on
    /// the box: each box site appears `2^d ω(x)` times on the torus, and the
    /// odd extension is zero at boundary sites.
    pub fn lp_norm(&self, flavor: Flavor, p: f64) -> f64 {
        let spec = &self.spec;
        let value = |s: usize| {
            if flavor == Flavor::Dirichlet && spec.is_boundary(s) {
                0.0
            } else {
                self.values[s].abs()
            }
        };
        if p.is_infinite() {
            return spec.sites().map(value).fold(0.0, f64::max);
        }
        let mult = (1usize << spec.d) as f64;
        let scale = (spec.n as f64).powi(-(spec.d as i32));
        let s: f64 = spec
            .sites()
            .map(|i| mult * spec.weight(i) * value(i).powf(p))
            .sum();
        (scale * s).powf(1.0 / p)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Real function on the torus `Θ_n`; index arithmetic is modular.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusField {
    spec: LatticeSpec,
    values: Vec<f64>,
}

impl TorusField {
    pub fn zeros(spec: LatticeSpec) -> Self {
        Self {
            values: vec![0.0; spec.num_torus_sites()],
            spec,
        }
    }

    pub fn from_values(spec: LatticeSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.num_torus_sites() {
            return Err(Error::InvalidArgument(format!(
                "torus field on {spec} needs {} values, got {}",
                spec.num_torus_sites(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Value at a (possibly out-of-range) integer torus coordinate.
    pub fn at(&self, m: [i64; MAX_DIM]) -> f64 {
        let p = self.spec.torus_len() as i64;
        let mut w = [0usize; MAX_DIM];
        for a in 0..self.spec.d {
            w[a] = m[a].rem_euclid(p) as usize;
        }
        self.values[self.spec.torus_index(w)]
    }

    pub fn mul(&self, other: &TorusField) -> Result<TorusField> {
        self.spec.check_same(&other.spec)?;
        Ok(TorusField {
            spec: self.spec,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    /// Periodic lattice Laplacian `n² Σ_{|y−x|=1/n} (ψ(y) − ψ(x))`.
    pub fn laplacian(&self) -> TorusField {
        let spec = self.spec;
        let n2 = (spec.n as f64).powi(2);
        let p = spec.torus_len();
        let values = (0..spec.num_torus_sites())
            .map(|t| {
                let m = spec.torus_multi_index(t);
                let centre = self.values[t];
                let mut acc = 0.0;
                for a in 0..spec.d {
                    let mut up = m;
                    up[a] = (m[a] + 1) % p;
                    let mut down = m;
                    down[a] = (m[a] + p - 1) % p;
                    acc += self.values[spec.torus_index(up)] + self.values[spec.torus_index(down)]
                        - 2.0 * centre;
                }
                n2 * acc
            })
            .collect();
        TorusField { spec, values }
    }
}

/// Box index and sign of the torus coordinate `m` along one axis under the
/// odd reflection; `None` at the reflection-fixed points `0` and `M`.
fn fold_odd(m: usize, big_m: usize) -> Option<(usize, f64)> {
    if m == 0 || m == big_m {
        None
    } else if m < big_m {
        Some((m, 1.0))
    } else {
        Some((2 * big_m - m, -1.0))
    }
}

fn fold_even(m: usize, big_m: usize) -> usize {
    if m <= big_m {
        m
    } else {
        2 * big_m - m
    }
}

/// `Π_o u(q∘x) = ∏q · u(x)`; zero at every reflection-fixed coordinate.
pub fn odd_extension(u: &Field) -> TorusField {
    let spec = u.spec;
    let big_m = spec.m();
    let values = (0..spec.num_torus_sites())
        .map(|t| {
            let m = spec.torus_multi_index(t);
            let mut i = [0usize; MAX_DIM];
            let mut sign = 1.0;
            for a in 0..spec.d {
                match fold_odd(m[a], big_m) {
                    Some((ia, sa)) => {
                        i[a] = ia;
                        sign *= sa;
                    }
                    None => return 0.0,
                }
            }
            sign * u.values[spec.index(i)]
        })
        .collect();
    TorusField { spec, values }
}

/// `Π_e u(q∘x) = u(x)`.
pub fn even_extension(u: &Field) -> TorusField {
    let spec = u.spec;
    let big_m = spec.m();
    let values = (0..spec.num_torus_sites())
        .map(|t| {
            let m = spec.torus_multi_index(t);
            let mut i = [0usize; MAX_DIM];
            for a in 0..spec.d {
                i[a] = fold_even(m[a], big_m);
            }
            u.values[spec.index(i)]
        })
        .collect();
    TorusField { spec, values }
}

pub fn extension(u: &Field, flavor: Flavor) -> TorusField {
    match flavor {
        Flavor::Dirichlet => odd_extension(u),
        Flavor::Neumann => even_extension(u),
    }
}

/// Reads a torus field off at the embedded box sites `m = i`.
pub fn restrict(v: &TorusField) -> Field {
    let spec = v.spec;
    let values = spec
        .sites()
        .map(|s| v.values[spec.torus_index(spec.multi_index(s))])
        .collect();
    Field { spec, values }
}
