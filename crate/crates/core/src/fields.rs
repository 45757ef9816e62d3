//! Monochromatic fields on uniform Cartesian grids.
//!
//! Amplitudes follow `F(r, t) = Re[F(r) e^{−iωt}]`. Primed-space fields are
//! described analytically (see [`VectorSource`], [`ScalarSource`]) and moved
//! to physical grids with [`transform_potential`] / [`transform_scalar`].
//! The vector potential is a covector: `A'_i = Σ_j J^j_i A_j`.
//!
//! Difference operators are second-order central differences. Points whose
//! stencil is incomplete (grid boundary, masked neighbour) come back masked;
//! there are no one-sided stencils. An axis with a single sample is treated
//! as an invariant direction (zero derivative).

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::coordmaps::{CoordinateMap, JacobianData, Point3};
use crate::error::{Error, Result};
use crate::media::TensorField;
use crate::{CVec3, C64};

pub const DEFAULT_POINT_CAP: usize = 16_000_000;

/// Uniform Cartesian sample grid; x varies fastest in linear indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    origin: Point3,
    spacing: [f64; 3],
    counts: [usize; 3],
}

impl Grid {
    pub fn new(origin: Point3, spacing: [f64; 3], counts: [usize; 3]) -> Result<Self> {
        Self::with_cap(origin, spacing, counts, DEFAULT_POINT_CAP)
    }

    pub fn with_cap(
        origin: Point3,
        spacing: [f64; 3],
        counts: [usize; 3],
        cap: usize,
    ) -> Result<Self> {
        if spacing.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::invalid(format!("grid spacing must be > 0, got {spacing:?}")));
        }
        if counts.contains(&0) {
            return Err(Error::invalid("grid counts must be >= 1"));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid origin must be finite"));
        }
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .filter(|&n| n <= cap)
            .ok_or_else(|| Error::invalid(format!("grid {counts:?} exceeds the {cap}-point cap")))?;
        debug_assert!(total >= 1);
        Ok(Self {
            origin,
            spacing,
            counts,
        })
    }

    /// Cell-centred samples of the box `[lo, hi]`. A single-sample axis sits
    /// at the midpoint and gets spacing `hi − lo` (or 1 when degenerate).
    pub fn cell_centered(lo: Point3, hi: Point3, counts: [usize; 3]) -> Result<Self> {
        let mut spacing = [1.0; 3];
        let mut origin = Point3::zeros();
        for a in 0..3 {
            if counts[a] == 0 {
                return Err(Error::invalid("grid counts must be >= 1"));
            }
            let width = hi[a] - lo[a];
            if width < 0.0 || (counts[a] > 1 && width <= 0.0) {
                return Err(Error::invalid(format!("empty extent on axis {a}")));
            }
            spacing[a] = if width > 0.0 { width / counts[a] as f64 } else { 1.0 };
            origin[a] = lo[a] + 0.5 * spacing[a];
            if width == 0.0 {
                origin[a] = lo[a];
            }
        }
        Self::new(origin, spacing, counts)
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }
    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }
    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }
    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.counts[0] * (j + self.counts[1] * k)
    }

    pub fn ijk(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.counts[0];
        let rest = idx / self.counts[0];
        [i, rest % self.counts[1], rest / self.counts[1]]
    }

    pub fn point(&self, idx: usize) -> Point3 {
        let c = self.ijk(idx);
        Point3::new(
            self.origin.x + c[0] as f64 * self.spacing[0],
            self.origin.y + c[1] as f64 * self.spacing[1],
            self.origin.z + c[2] as f64 * self.spacing[2],
        )
    }

    /// Linear index of the neighbour `step` cells away along `axis`.
    pub fn neighbor(&self, idx: usize, axis: usize, step: isize) -> Option<usize> {
        let mut c = self.ijk(idx);
        let moved = c[axis] as isize + step;
        if moved < 0 || moved >= self.counts[axis] as isize {
            return None;
        }
        c[axis] = moved as usize;
        Some(self.index(c[0], c[1], c[2]))
    }

    /// Grid index closest to `p`, if `p` lies within half a cell of the grid.
    pub fn nearest(&self, p: &Point3) -> Option<usize> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let t = ((p[a] - self.origin[a]) / self.spacing[a]).round();
            if t < 0.0 || t >= self.counts[a] as f64 {
                return None;
            }
            c[a] = t as usize;
        }
        Some(self.index(c[0], c[1], c[2]))
    }

    // Axes that carry derivatives.
    fn active_axes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..3).filter(|&a| self.counts[a] > 1)
    }
}

/// Which physical quantity a vector field holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    A,
    E,
    B,
    D,
    H,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexScalarField {
    pub grid: Grid,
    pub values: Vec<C64>,
    pub omega: f64,
    /// `true` marks a point excluded from norms and renders.
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVectorField {
    pub grid: Grid,
    pub values: Vec<CVec3>,
    pub omega: f64,
    pub role: FieldRole,
    pub mask: Vec<bool>,
}

impl ComplexScalarField {
    pub fn zeros(grid: Grid, omega: f64) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![C64::new(0.0, 0.0); n],
            omega,
            mask: vec![false; n],
        }
    }

    /// Root-mean-square magnitude over unmasked points accepted by `region`.
    pub fn rms(&self, region: Option<&dyn Fn(&Point3) -> bool>) -> f64 {
        let (sum, n) = self
            .values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(i, (_, m))| !**m && region.map_or(true, |f| f(&self.grid.point(*i))))
            .fold((0.0, 0usize), |(s, n), (_, (v, _))| (s + v.norm_sqr(), n + 1));
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }
}

impl ComplexVectorField {
    pub fn zeros(grid: Grid, omega: f64, role: FieldRole) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![CVec3::zeros(); n],
            omega,
            role,
            mask: vec![false; n],
        }
    }

    pub fn rms(&self, region: Option<&dyn Fn(&Point3) -> bool>) -> f64 {
        let (sum, n) = self
            .values
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter(|(i, (_, m))| !**m && region.map_or(true, |f| f(&self.grid.point(*i))))
            .fold((0.0, 0usize), |(s, n), (_, (v, _))| (s + v.norm_squared(), n + 1));
        if n == 0 {
            0.0
        } else {
            (sum / n as f64).sqrt()
        }
    }
}

/// `ε₀`, `c` and `ħ`. Natural units (all 1) unless SI is requested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub eps0: f64,
    pub c: f64,
    pub hbar: f64,
}

impl PhysicalConstants {
    pub const fn natural() -> Self {
        Self {
            eps0: 1.0,
            c: 1.0,
            hbar: 1.0,
        }
    }

    pub const fn si() -> Self {
        Self {
            eps0: 8.854_187_812_8e-12,
            c: 299_792_458.0,
            hbar: 1.054_571_817e-34,
        }
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::natural()
    }
}

/// An analytic vector field that can be evaluated anywhere.
pub trait VectorSource: Sync {
    fn value_at(&self, p: &Point3) -> CVec3;
    fn omega(&self) -> f64;
}

/// An analytic scalar field that can be evaluated anywhere.
pub trait ScalarSource: Sync {
    fn value_at(&self, p: &Point3) -> C64;
    fn omega(&self) -> f64;
    /// Points where the field is singular; the nearest sample gets masked.
    fn singular_points(&self) -> Vec<Point3> {
        Vec::new()
    }
}

/// `A(r) = amp · pol · e^{ik·r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWave {
    pub k: Vector3<f64>,
    pub pol: CVec3,
    pub amp: C64,
    pub omega: f64,
}

/// Transverse plane wave in a uniform background, with `ω = c|k|/√(ε'μ')`.
pub fn plane_wave(
    k: Vector3<f64>,
    pol: CVec3,
    amp: C64,
    eps_prime: f64,
    mu_prime: f64,
    constants: &PhysicalConstants,
) -> Result<PlaneWave> {
    let kn = k.norm();
    if !(kn > 0.0 && kn.is_finite()) {
        return Err(Error::invalid("wave vector must be non-zero and finite"));
    }
    let index_sq = eps_prime * mu_prime;
    if !(index_sq > 0.0 && index_sq.is_finite()) {
        return Err(Error::invalid(format!(
            "background needs eps'·mu' > 0 for propagating waves, got {index_sq}"
        )));
    }
    let pn = pol.norm();
    if pn == 0.0 {
        return Err(Error::invalid("polarization must be non-zero"));
    }
    let dot = pol.x * k.x + pol.y * k.y + pol.z * k.z;
    let ratio = dot.norm() / (pn * kn);
    if ratio > 1e-12 {
        return Err(Error::NonTransversePolarization(ratio));
    }
    Ok(PlaneWave {
        k,
        pol,
        amp,
        omega: constants.c * kn / index_sq.sqrt(),
    })
}

impl PlaneWave {
    /// Builds a plane wave with an explicit frequency and no transversality
    /// check (used to inject deliberately longitudinal or detuned fields).
    pub fn unchecked(k: Vector3<f64>, pol: CVec3, amp: C64, omega: f64) -> Self {
        Self { k, pol, amp, omega }
    }

    fn phase(&self, p: &Point3) -> C64 {
        C64::new(0.0, self.k.dot(p)).exp()
    }

    /// `∇ × A = i k × A`.
    pub fn curl_at(&self, p: &Point3) -> CVec3 {
        let kc = self.k.map(|v| C64::new(v, 0.0));
        kc.cross(&self.pol) * (C64::i() * self.amp * self.phase(p))
    }

    /// `∇·(s A) = i s (k·pol) amp e^{ik·r}` for a constant scalar `s`.
    pub fn divergence_at(&self, p: &Point3, scale: f64) -> C64 {
        let dot = self.pol.x * self.k.x + self.pol.y * self.k.y + self.pol.z * self.k.z;
        C64::i() * scale * dot * self.amp * self.phase(p)
    }

    pub fn sample(&self, grid: &Grid) -> ComplexVectorField {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|i| self.value_at(&grid.point(i)))
            .collect();
        ComplexVectorField {
            grid: grid.clone(),
            values,
            omega: self.omega,
            role: FieldRole::A,
            mask: vec![false; grid.len()],
        }
    }
}

impl VectorSource for PlaneWave {
    fn value_at(&self, p: &Point3) -> CVec3 {
        self.pol * (self.amp * self.phase(p))
    }
    fn omega(&self) -> f64 {
        self.omega
    }
}

/// Scalar outgoing spherical wave `e^{ikR}/(4πR)`; `ω = k` in natural units.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalWave {
    pub source: Point3,
    pub k: f64,
}

impl SphericalWave {
    pub fn new(source: Point3, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::invalid(format!("wavenumber must be > 0, got {k}")));
        }
        Ok(Self { source, k })
    }
}

impl ScalarSource for SphericalWave {
    fn value_at(&self, p: &Point3) -> C64 {
        let r = (p - self.source).norm();
        C64::new(0.0, self.k * r).exp() / (4.0 * PI * r)
    }
    fn omega(&self) -> f64 {
        self.k
    }
    fn singular_points(&self) -> Vec<Point3> {
        vec![self.source]
    }
}

/// Samples the spherical wave on `grid`. The grid point nearest the source
/// is flagged and zeroed.
pub fn spherical_wave_scalar(source: Point3, k: f64, grid: &Grid) -> Result<ComplexScalarField> {
    let wave = SphericalWave::new(source, k)?;
    Ok(sample_scalar(&wave, grid))
}

/// Samples any scalar source on `grid`, masking the samples nearest its
/// singular points.
pub fn sample_scalar(src: &dyn ScalarSource, grid: &Grid) -> ComplexScalarField {
    let mut field = ComplexScalarField::zeros(grid.clone(), src.omega());
    field.values = (0..grid.len())
        .into_par_iter()
        .map(|i| src.value_at(&grid.point(i)))
        .collect();
    for s in src.singular_points() {
        if let Some(i) = grid.nearest(&s) {
            field.mask[i] = true;
        }
    }
    scrub_masked(&mut field.values, &field.mask);
    field
}

fn scrub_masked(values: &mut [C64], mask: &[bool]) {
    for (v, m) in values.iter_mut().zip(mask) {
        if *m || !v.re.is_finite() || !v.im.is_finite() {
            *v = C64::new(0.0, 0.0);
        }
    }
}

/// Direction of a transport through a coordinate map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Primed field in, physical grid out.
    ToPhysical,
    /// Physical field in, primed grid out.
    ToPrimed,
}

/// Moves a vector potential through `map` onto `grid`.
///
/// `ToPhysical`: `A(x) = J⁻ᵀ A'(x'(x))`. `ToPrimed`: `A'(x') = Jᵀ A(x)` at the
/// first preimage of `x'`. Points without an image are zeroed and masked.
pub fn transform_potential(
    src: &dyn VectorSource,
    map: &CoordinateMap,
    grid: &Grid,
    direction: Direction,
) -> Result<ComplexVectorField> {
    let mut out = ComplexVectorField::zeros(grid.clone(), src.omega(), FieldRole::A);
    if *map == CoordinateMap::Identity {
        out.values = (0..grid.len())
            .into_par_iter()
            .map(|i| src.value_at(&grid.point(i)))
            .collect();
        return Ok(out);
    }
    let samples: Vec<Option<CVec3>> = (0..grid.len())
        .into_par_iter()
        .map(|i| -> Result<Option<CVec3>> {
            let p = grid.point(i);
            match direction {
                Direction::ToPhysical => {
                    let Some(pp) = map.map_point(&p) else {
                        return Ok(None);
                    };
                    let jac = map.jacobian(&p)?;
                    Ok(Some(apply_real(&jac.j_inv.transpose(), &src.value_at(&pp))))
                }
                Direction::ToPrimed => {
                    let Some(x) = map.preimages(&p).into_iter().next() else {
                        return Ok(None);
                    };
                    let jac = map.jacobian(&x)?;
                    Ok(Some(apply_real(&jac.j.transpose(), &src.value_at(&x))))
                }
            }
        })
        .collect::<Result<_>>()?;
    for (i, s) in samples.into_iter().enumerate() {
        match s {
            Some(v) => out.values[i] = v,
            None => out.mask[i] = true,
        }
    }
    Ok(out)
}

/// Transports a scalar by composition: `φ(x) = φ'(x'(x))` (or the reverse).
/// Samples nearest to every image of a source singularity are masked.
pub fn transform_scalar(
    src: &dyn ScalarSource,
    map: &CoordinateMap,
    grid: &Grid,
    direction: Direction,
) -> ComplexScalarField {
    let mut out = ComplexScalarField::zeros(grid.clone(), src.omega());
    let samples: Vec<Option<C64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            let q = match direction {
                Direction::ToPhysical => map.map_point(&p),
                Direction::ToPrimed => map.preimages(&p).into_iter().next(),
            };
            q.map(|q| src.value_at(&q))
        })
        .collect();
    for (i, s) in samples.into_iter().enumerate() {
        match s {
            Some(v) => out.values[i] = v,
            None => out.mask[i] = true,
        }
    }
    for s in src.singular_points() {
        let images = match direction {
            Direction::ToPhysical => map.preimages(&s),
            Direction::ToPrimed => map.map_point(&s).into_iter().collect(),
        };
        for img in images {
            if let Some(i) = grid.nearest(&img) {
                out.mask[i] = true;
            }
        }
    }
    scrub_masked(&mut out.values, &out.mask);
    out
}

fn apply_real(m: &Matrix3<f64>, v: &CVec3) -> CVec3 {
    CVec3::from_fn(|r, _| (0..3).map(|c| v[c] * m[(r, c)]).sum())
}

/// Jacobian data sampled on a grid; `None` where the map has no image or
/// the point sits on an interface.
#[derive(Debug, Clone)]
pub struct JacobianField {
    pub grid: Grid,
    pub data: Vec<Option<JacobianData>>,
}

impl JacobianField {
    pub fn from_map(map: &CoordinateMap, grid: &Grid) -> Self {
        let data = (0..grid.len())
            .into_par_iter()
            .map(|i| map.jacobian(&grid.point(i)).ok())
            .collect();
        Self {
            grid: grid.clone(),
            data,
        }
    }
}

// Central difference of a per-point quantity along `axis`. `None` when the
// stencil leaves the grid or touches a point where `f` is undefined.
fn central<T, F>(grid: &Grid, idx: usize, axis: usize, f: F) -> Option<T>
where
    F: Fn(usize) -> Option<T>,
    T: std::ops::Sub<Output = T> + std::ops::Mul<C64, Output = T>,
{
    let fwd = f(grid.neighbor(idx, axis, 1)?)?;
    let bwd = f(grid.neighbor(idx, axis, -1)?)?;
    Some((fwd - bwd) * C64::new(0.5 / grid.spacing[axis], 0.0))
}

fn curl_at<F>(grid: &Grid, idx: usize, f: F) -> Option<CVec3>
where
    F: Fn(usize) -> Option<CVec3> + Copy,
{
    // d[a][c] = ∂_a F_c
    let mut d = [[C64::new(0.0, 0.0); 3]; 3];
    for a in grid.active_axes() {
        let diff = central(grid, idx, a, f)?;
        for c in 0..3 {
            d[a][c] = diff[c];
        }
    }
    Some(CVec3::new(
        d[1][2] - d[2][1],
        d[2][0] - d[0][2],
        d[0][1] - d[1][0],
    ))
}

/// Central-difference Cartesian curl; masked where the stencil is incomplete.
pub fn cartesian_curl(field: &ComplexVectorField) -> ComplexVectorField {
    let grid = &field.grid;
    let get = |i: usize| (!field.mask[i]).then(|| field.values[i]);
    let samples: Vec<Option<CVec3>> = (0..grid.len())
        .into_par_iter()
        .map(|i| if field.mask[i] { None } else { curl_at(grid, i, get) })
        .collect();
    let role = match field.role {
        FieldRole::A => FieldRole::B,
        r => r,
    };
    collect_vector(grid, field.omega, role, samples)
}

fn collect_vector(
    grid: &Grid,
    omega: f64,
    role: FieldRole,
    samples: Vec<Option<CVec3>>,
) -> ComplexVectorField {
    let mut out = ComplexVectorField::zeros(grid.clone(), omega, role);
    for (i, s) in samples.into_iter().enumerate() {
        match s {
            Some(v) => out.values[i] = v,
            None => out.mask[i] = true,
        }
    }
    out
}

/// `(1/√γ) Σ_ij ∂_i(√γ γ^ij ε' A_j)` by central differences.
///
/// For a transported potential this equals `∇'·(ε' A')` at the primed image,
/// so it vanishes for transverse primed fields up to O(h²).
pub fn covariant_divergence(
    field: &ComplexVectorField,
    jac: &JacobianField,
    eps_prime: f64,
) -> Result<ComplexScalarField> {
    if field.grid != jac.grid {
        return Err(Error::GridMismatch);
    }
    let grid = &field.grid;
    let flux = |q: usize, axis: usize| -> Option<C64> {
        if field.mask[q] {
            return None;
        }
        let jd = jac.data[q].as_ref()?;
        let w = jd.sqrt_gamma() * eps_prime;
        Some((0..3).map(|j| field.values[q][j] * (w * jd.gamma_upper[(axis, j)])).sum())
    };
    let samples: Vec<Option<C64>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            if field.mask[p] {
                return None;
            }
            let jd = jac.data[p].as_ref()?;
            let mut div = C64::new(0.0, 0.0);
            for a in grid.active_axes() {
                div += central(grid, p, a, |q| flux(q, a))?;
            }
            Some(div / jd.sqrt_gamma())
        })
        .collect();
    let mut out = ComplexScalarField::zeros(grid.clone(), field.omega);
    for (i, s) in samples.into_iter().enumerate() {
        match s {
            Some(v) => out.values[i] = v,
            None => out.mask[i] = true,
        }
    }
    Ok(out)
}

/// `(curl F)^i = ±(1/√γ) Σ_jl [ijl] ∂_j F_l` with the per-point sign of
/// `det J`. Reduces to the Cartesian curl where `J = I`.
pub fn covariant_curl(field: &ComplexVectorField, jac: &JacobianField) -> Result<ComplexVectorField> {
    if field.grid != jac.grid {
        return Err(Error::GridMismatch);
    }
    let grid = &field.grid;
    let get = |i: usize| (!field.mask[i]).then(|| field.values[i]);
    let samples: Vec<Option<CVec3>> = (0..grid.len())
        .into_par_iter()
        .map(|p| {
            if field.mask[p] {
                return None;
            }
            let jd = jac.data[p].as_ref()?;
            let c = curl_at(grid, p, get)?;
            Some(c * C64::new(jd.sign / jd.sqrt_gamma(), 0.0))
        })
        .collect();
    Ok(collect_vector(grid, field.omega, FieldRole::B, samples))
}

/// Relative residual of `∇×(μ⁻¹∇×A) − (ω²/c²) ε A` over interior points.
///
/// Both curls are central differences, so the stencil reaches two cells.
/// Points without tensors (hidden region, interfaces) are masked; `region`
/// restricts the norm further. The result is
/// `‖residual‖₂ / ‖(ω²/c²) ε A‖₂` over the points that survive.
pub fn maxwell_residual(
    a: &ComplexVectorField,
    tensors: &TensorField,
    omega: f64,
    constants: &PhysicalConstants,
    region: Option<&(dyn Fn(&Point3) -> bool + Sync)>,
) -> Result<f64> {
    if a.grid != tensors.grid {
        return Err(Error::GridMismatch);
    }
    let grid = &a.grid;
    let mu_inv: Vec<Option<Matrix3<f64>>> = tensors
        .cells
        .par_iter()
        .enumerate()
        .map(|(i, t)| match t {
            None => Ok(None),
            Some(t) => t
                .mu_inverse()
                .filter(|m| m.iter().all(|v| v.is_finite()))
                .map(Some)
                .ok_or(Error::SingularTensor(i)),
        })
        .collect::<Result<_>>()?;
    let b = cartesian_curl(a);
    let mut h = b.clone();
    h.role = FieldRole::H;
    for i in 0..grid.len() {
        match (&mu_inv[i], h.mask[i]) {
            (Some(m), false) => h.values[i] = apply_real(m, &b.values[i]),
            _ => h.mask[i] = true,
        }
    }
    let curl_h = cartesian_curl(&h);
    let k2 = omega * omega / (constants.c * constants.c);
    let (num, den) = (0..grid.len())
        .into_par_iter()
        .filter_map(|i| {
            if curl_h.mask[i] || a.mask[i] {
                return None;
            }
            let t = tensors.cells[i].as_ref()?;
            if let Some(f) = region {
                if !f(&grid.point(i)) {
                    return None;
                }
            }
            let source = apply_real(&t.eps, &a.values[i]) * C64::new(k2, 0.0);
            let r = curl_h.values[i] - source;
            Some((r.norm_squared(), source.norm_squared()))
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
    if den == 0.0 {
        return Err(Error::invalid("residual region contains no usable points"));
    }
    Ok((num / den).sqrt())
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV dump `x,y,z,re,im`, x fastest.
pub fn write_scalar_csv<W: Write>(mut w: W, field: &ComplexScalarField) -> io::Result<()> {
    writeln!(w, "x,y,z,re,im")?;
    for (i, v) in field.values.iter().enumerate() {
        let p = field.grid.point(i);
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt17(p.x),
            fmt17(p.y),
            fmt17(p.z),
            fmt17(v.re),
            fmt17(v.im)
        )?;
    }
    Ok(())
}

/// CSV dump `x,y,z,reAx,imAx,reAy,imAy,reAz,imAz,mask`, x fastest.
pub fn write_vector_csv<W: Write>(mut w: W, field: &ComplexVectorField) -> io::Result<()> {
    writeln!(w, "x,y,z,reAx,imAx,reAy,imAy,reAz,imAz,mask")?;
    for (i, v) in field.values.iter().enumerate() {
        let p = field.grid.point(i);
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            fmt17(p.x),
            fmt17(p.y),
            fmt17(p.z),
            fmt17(v.x.re),
            fmt17(v.x.im),
            fmt17(v.y.re),
            fmt17(v.y.im),
            fmt17(v.z.re),
            fmt17(v.z.im),
            u8::from(field.mask[i])
        )?;
    }
    Ok(())
}

pub(crate) fn format_f64(v: f64) -> String {
    fmt17(v)
}
