//! Littlewood-Paley analysis on the box: dyadic blocks, paraproduct and
//! resonant product, Besov norms through the odd/even extension, the
//! trigonometric extension to finer grids, and time-weighted norms.

use crate::error::{Error, Result};
use crate::lattice::{Field, Flavor, LatticeSpec, MAX_DIM};
use crate::spectral::{self, smooth_step, MultiplierSpec};

/// `φ_0`: `1` on `|k| ≤ 1/2`, `0` on `|k| ≥ 1`.
fn bump(r: f64) -> f64 {
    1.0 - smooth_step((r - 0.5) / 0.5)
}

fn radius(k: [f64; MAX_DIM]) -> f64 {
    (k[0] * k[0] + k[1] * k[1]).sqrt()
}

/// Dyadic partition of unity `ρ_{-1}, …, ρ_{j_n}` on the dual torus of a lattice.
///
/// `ρ_{-1} = φ_0`, `ρ_j(k) = φ_0(2^{-j-1}k) − φ_0(2^{-j}k)` (supported in
/// `2^{j-1} ≤ |k| ≤ 2^{j+1}`), and the tail block `ρ_{j_n} = 1 − φ_0(2^{-j_n}k)`
/// collects everything above. `j_n` is the first index whose support leaves
/// the open box `(−n/2, n/2)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyadicPartition {
    spec: LatticeSpec,
    tail: i32,
}

impl DyadicPartition {
    pub fn new(spec: &LatticeSpec) -> Self {
        let half = spec.n() as f64 / 2.0;
        let mut j = -1i32;
        while 2f64.powi(j + 1) < half {
            j += 1;
        }
        Self {
            spec: *spec,
            tail: j,
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    /// `j_n`.
    pub fn tail_index(&self) -> i32 {
        self.tail
    }

    pub fn block_indices(&self) -> std::ops::RangeInclusive<i32> {
        -1..=self.tail
    }

    pub fn num_blocks(&self) -> usize {
        (self.tail + 2) as usize
    }

    /// `ρ_j(k)`; zero outside `−1 ≤ j ≤ j_n`.
    pub fn weight(&self, j: i32, k: [f64; MAX_DIM]) -> f64 {
        block_weight(j, self.tail, radius(k))
    }

    pub fn multiplier(&self, j: i32) -> MultiplierSpec {
        let tail = self.tail;
        MultiplierSpec::new(format!("rho_{j}"), move |k| block_weight(j, tail, radius(k)))
    }

    fn check(&self, j: i32) -> Result<()> {
        if (-1..=self.tail).contains(&j) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "block index {j} outside [-1, {}]",
                self.tail
            )))
        }
    }

    /// All blocks `Δ_{-1}u, …, Δ_{j_n}u` from one forward transform.
    pub fn blocks(&self, u: &Field, flavor: Flavor) -> Result<Vec<Field>> {
        self.spec.check_same(u.spec())?;
        let full = spectral::forward_full(u, flavor);
        Ok(self
            .block_indices()
            .map(|j| {
                let mut c = full.clone();
                spectral::apply_symbol_to_full(&mut c, &self.spec, |k| self.weight(j, k));
                spectral::inverse_full(self.spec, flavor, c)
            })
            .collect())
    }
}

fn block_weight(j: i32, tail: i32, r: f64) -> f64 {
    if j < -1 || j > tail {
        0.0
    } else if j == tail {
        1.0 - bump(r / 2f64.powi(j))
    } else if j == -1 {
        bump(r)
    } else {
        bump(r / 2f64.powi(j + 1)) - bump(r / 2f64.powi(j))
    }
}

/// Builds the dyadic partition for a lattice.
pub fn build_partition(spec: &LatticeSpec) -> DyadicPartition {
    DyadicPartition::new(spec)
}

/// `Δ_j u` in the given flavor.
pub fn lp_block(j: i32, u: &Field, flavor: Flavor) -> Result<Field> {
    let part = DyadicPartition::new(u.spec());
    part.check(j)?;
    Ok(spectral::apply_symbol_unchecked(&part.multiplier(j), u, flavor))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesovParams {
    pub alpha: f64,
    pub p: f64,
    pub q: f64,
    pub flavor: Flavor,
}

impl BesovParams {
    pub fn new(alpha: f64, p: f64, q: f64, flavor: Flavor) -> Result<Self> {
        if !(p >= 1.0 && q >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "integrability indices must be in [1, inf], got p={p} q={q}"
            )));
        }
        Ok(Self { alpha, p, q, flavor })
    }

    /// Hölder-Besov `C^α = B^α_{∞,∞}`.
    pub fn holder(alpha: f64, flavor: Flavor) -> Self {
        Self {
            alpha,
            p: f64::INFINITY,
            q: f64::INFINITY,
            flavor,
        }
    }
}

fn lq(values: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        values.fold(0.0, f64::max)
    } else {
        values.map(|v| v.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// `‖(2^{αj} ‖Δ_j Π u‖_{L^p(Θ_n)})_j‖_{ℓ^q(j ≤ j_n)}`.
pub fn besov_norm(u: &Field, params: &BesovParams) -> Result<f64> {
    let part = DyadicPartition::new(u.spec());
    let blocks = part.blocks(u, params.flavor)?;
    Ok(besov_norm_from_blocks(&blocks, params))
}

/// Besov norm from precomputed blocks `Δ_{-1}, …, Δ_{j_n}`.
pub fn besov_norm_from_blocks(blocks: &[Field], params: &BesovParams) -> f64 {
    lq(
        blocks.iter().enumerate().map(|(i, b)| {
            let j = i as i32 - 1;
            2f64.powf(params.alpha * j as f64) * b.lp_norm(params.flavor, params.p)
        }),
        params.q,
    )
}

fn check_pair(phi: &Field, psi: &Field) -> Result<()> {
    phi.spec().check_same(psi.spec())
}

/// Sums `Δ_i φ · Δ_j ψ` over block pairs selected by `keep(i, j)`.
fn block_product_sum(
    phi: &Field,
    phi_flavor: Flavor,
    psi: &Field,
    psi_flavor: Flavor,
    keep: impl Fn(i32, i32) -> bool,
) -> Result<Field> {
    check_pair(phi, psi)?;
    let part = DyadicPartition::new(phi.spec());
    let a = part.blocks(phi, phi_flavor)?;
    let b = part.blocks(psi, psi_flavor)?;
    let mut out = Field::zeros(*phi.spec());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            if keep(i as i32 - 1, j as i32 - 1) {
                for ((o, x), y) in out.values_mut().iter_mut().zip(ai.values()).zip(bj.values()) {
                    *o += x * y;
                }
            }
        }
    }
    Ok(out)
}

/// `φ ⩻ ψ = Σ_j Σ_{i ≤ j−2} Δ_i φ Δ_j ψ`; the result has flavor
/// `phi_flavor.product(psi_flavor)`.
pub fn paraproduct(phi: &Field, phi_flavor: Flavor, psi: &Field, psi_flavor: Flavor) -> Result<Field> {
    block_product_sum(phi, phi_flavor, psi, psi_flavor, |i, j| i <= j - 2)
}

/// `φ ⊙ ψ = Σ_{|i−j| ≤ 1} Δ_i φ Δ_j ψ`.
pub fn resonant(phi: &Field, phi_flavor: Flavor, psi: &Field, psi_flavor: Flavor) -> Result<Field> {
    block_product_sum(phi, phi_flavor, psi, psi_flavor, |i, j| (i - j).abs() <= 1)
}

/// Trigonometric extension `E^n(Π u)` restricted to the box and sampled on
/// the `m`-times refined lattice.
pub fn extension_operator(u: &Field, flavor: Flavor, refinement: usize) -> Result<Field> {
    if refinement == 0 {
        return Err(Error::InvalidArgument("refinement must be at least 1".into()));
    }
    let spec = *u.spec();
    let fine = spec.with_n(spec.n() * refinement)?;
    let coeffs = spectral::forward_full(u, flavor);
    let big_m = spec.m() as i64;
    let side = spec.side_len();
    let fine_side = fine.side_len();
    let big_n = spec.torus_side() as f64;
    let amp0 = (big_n).powf(-0.5);
    // basis[x][k]: one-dimensional factor of l_k at fine point x
    let basis: Vec<f64> = (0..fine_side)
        .flat_map(|x| {
            let pos = x as f64 / fine.n() as f64;
            (0..side).map(move |k| {
                let arg = 2.0 * std::f64::consts::PI * k as f64 / big_n * pos;
                let kk = k as i64;
                match flavor {
                    Flavor::Dirichlet => {
                        if kk == 0 || kk == big_m {
                            0.0
                        } else {
                            amp0 * 2.0 * arg.sin()
                        }
                    }
                    Flavor::Neumann => {
                        let a = if kk == 0 || kk == big_m {
                            std::f64::consts::SQRT_2
                        } else {
                            2.0
                        };
                        amp0 * a * arg.cos()
                    }
                }
            })
        })
        .collect();
    let values = if spec.d() == 1 {
        (0..fine_side)
            .map(|x| (0..side).map(|k| basis[x * side + k] * coeffs[k]).sum())
            .collect()
    } else {
        // contract the second axis, then the first
        let mut half = vec![0.0; side * fine_side];
        for k0 in 0..side {
            for x1 in 0..fine_side {
                half[k0 * fine_side + x1] = (0..side)
                    .map(|k1| basis[x1 * side + k1] * coeffs[k0 * side + k1])
                    .sum();
            }
        }
        let mut out = vec![0.0; fine_side * fine_side];
        for x0 in 0..fine_side {
            for x1 in 0..fine_side {
                out[x0 * fine_side + x1] = (0..side)
                    .map(|k0| basis[x0 * side + k0] * half[k0 * fine_side + x1])
                    .sum();
            }
        }
        out
    };
    let mut field = Field::from_values(fine, values)?;
    if flavor == Flavor::Dirichlet {
        field.zero_boundary();
    }
    Ok(field)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWeightedNormParams {
    pub gamma: f64,
    pub horizon: f64,
    pub inner: BesovParams,
}

impl TimeWeightedNormParams {
    pub fn new(gamma: f64, horizon: f64, inner: BesovParams) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!("time weight must lie in [0, 1), got {gamma}")));
        }
        Ok(Self { gamma, horizon, inner })
    }
}

fn grid_points<'a>(
    times: &'a [f64],
    states: &'a [Field],
    horizon: f64,
) -> Result<Vec<(f64, &'a Field)>> {
    if times.is_empty() || times.len() != states.len() {
        return Err(Error::InvalidArgument(
            "trajectory must be non-empty with one state per time".into(),
        ));
    }
    Ok(times
        .iter()
        .copied()
        .zip(states)
        .filter(|(t, _)| *t <= horizon)
        .collect())
}

/// `sup_{t ≤ T} t^γ ‖u(t)‖_{B^α_{p,q}}` over the stored grid.
pub fn time_weighted_norm(
    times: &[f64],
    states: &[Field],
    params: &TimeWeightedNormParams,
) -> Result<f64> {
    let pts = grid_points(times, states, params.horizon)?;
    let mut sup: f64 = 0.0;
    for (t, u) in pts {
        let w = if params.gamma == 0.0 { 1.0 } else { t.powf(params.gamma) };
        if w == 0.0 {
            continue;
        }
        sup = sup.max(w * besov_norm(u, &params.inner)?);
    }
    Ok(sup)
}

/// The time-weighted norm plus the grid Hölder term
/// `sup_{s<t} s^γ ‖u(t) − u(s)‖_{L^p} / (t − s)^{α/2}`.
pub fn time_weighted_holder_norm(
    times: &[f64],
    states: &[Field],
    params: &TimeWeightedNormParams,
) -> Result<f64> {
    let base = time_weighted_norm(times, states, params)?;
    let pts = grid_points(times, states, params.horizon)?;
    let expo = params.inner.alpha / 2.0;
    let mut incr: f64 = 0.0;
    for (a, (s, us)) in pts.iter().enumerate() {
        let w = if params.gamma == 0.0 { 1.0 } else { s.powf(params.gamma) };
        if w == 0.0 {
            continue;
        }
        for (t, ut) in &pts[a + 1..] {
            if t <= s {
                continue;
            }
            let diff = ut.sub(us)?.lp_norm(params.inner.flavor, params.inner.p);
            incr = incr.max(w * diff / (t - s).powf(expo));
        }
    }
    Ok(base + incr)
}
