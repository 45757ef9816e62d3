//! Classical mode algebra of the quantized field.
//!
//! Modes are compared with the conserved sesquilinear product
//!
//! ```text
//! (A₁, A₂) = −(i/ħ) ∫ (A₁*·D₂ − A₂·D₁*) dV,   D = ε₀ ε E,  E = iω A
//! ```
//!
//! There are no operators here: orthonormality of a mode set,
//! `(A_j, A_k) = δ_jk` and `(A_j*, A_k) = 0`, is the whole numerical content
//! of the Bose commutators, and `a_k = (A_k, A)` recovers the amplitudes of a
//! classical field `A = Σ (a_k A_k + a_k* A_k*)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::fields::{ComplexVectorField, FieldRole, Grid, PhysicalConstants};
use crate::media::TensorField;
use crate::{CVec3, C64};

/// A stationary mode `A(r) e^{−iωt}`. Conjugate modes carry `A*` and evolve
/// with `e^{+iωt}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub a: ComplexVectorField,
    pub omega: f64,
    pub label: i64,
    pub conjugate: bool,
}

/// A classical field snapshot: potential and electric field on one grid.
/// Both are needed because `E` is not `iωA` for a superposition.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub a: ComplexVectorField,
    pub e: ComplexVectorField,
}

impl Mode {
    pub fn new(a: ComplexVectorField, omega: f64, label: i64) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::NonPositiveFrequency(omega));
        }
        Ok(Self {
            a,
            omega,
            label,
            conjugate: false,
        })
    }

    /// Unit-norm plane-wave mode of a periodic box filled with a uniform
    /// `ε'`, `μ'` background. `n` counts wavelengths per box side; sides are
    /// `counts·spacing` of `grid`. Axes with a single sample must have `n = 0`.
    pub fn box_mode(
        grid: &Grid,
        n: [i32; 3],
        pol: CVec3,
        eps_prime: f64,
        mu_prime: f64,
        constants: &PhysicalConstants,
        label: i64,
    ) -> Result<Self> {
        let counts = grid.counts();
        let spacing = grid.spacing();
        let mut k = Vector3::zeros();
        for a in 0..3 {
            if counts[a] == 1 && n[a] != 0 {
                return Err(Error::invalid("box mode varies along a single-sample axis"));
            }
            k[a] = 2.0 * PI * n[a] as f64 / (counts[a] as f64 * spacing[a]);
        }
        let pn = pol.norm();
        if pn == 0.0 {
            return Err(Error::invalid("polarization must be non-zero"));
        }
        let wave = crate::fields::plane_wave(
            k,
            pol / C64::new(pn, 0.0),
            C64::new(1.0, 0.0),
            eps_prime,
            mu_prime,
            constants,
        )?;
        let volume = grid.cell_volume() * grid.len() as f64;
        let amp = (constants.hbar / (2.0 * constants.eps0 * eps_prime * wave.omega * volume)).sqrt();
        let mut field = wave.sample(grid);
        for v in &mut field.values {
            *v *= C64::new(amp, 0.0);
        }
        Mode::new(field, wave.omega, label)
    }

    /// Signed frequency: `−ω` for a conjugate mode.
    pub fn frequency(&self) -> f64 {
        if self.conjugate {
            -self.omega
        } else {
            self.omega
        }
    }

    pub fn conjugated(&self) -> Mode {
        let mut m = self.clone();
        for v in &mut m.a.values {
            *v = v.map(|c| c.conj());
        }
        m.conjugate = !self.conjugate;
        m
    }

    /// The mode at time `t`: `A e^{−iω t}` with the signed frequency.
    pub fn evolved(&self, t: f64) -> Mode {
        let phase = C64::new(0.0, -self.frequency() * t).exp();
        let mut m = self.clone();
        for v in &mut m.a.values {
            *v *= phase;
        }
        m
    }

    pub fn state(&self) -> FieldState {
        let factor = C64::new(0.0, self.frequency());
        let mut e = self.a.clone();
        e.role = FieldRole::E;
        for v in &mut e.values {
            *v *= factor;
        }
        FieldState { a: self.a.clone(), e }
    }

    /// Rescales to unit norm; returns the norm before scaling.
    pub fn normalize(&mut self, tensors: &TensorField, constants: &PhysicalConstants) -> Result<f64> {
        let s = self.state();
        let norm = scalar_product(&s, &s, tensors, constants)?.re;
        if !(norm > 0.0) {
            return Err(Error::invalid(format!("mode has non-positive norm {norm}")));
        }
        let f = C64::new(1.0 / norm.sqrt(), 0.0);
        for v in &mut self.a.values {
            *v *= f;
        }
        Ok(norm)
    }
}

impl FieldState {
    /// `Σ (c_k A_k + c_k* A_k*)` and the matching electric field.
    pub fn synthesize(terms: &[(C64, &Mode)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::invalid("empty superposition"))?
            .1;
        let grid = first.a.grid.clone();
        let mut a = ComplexVectorField::zeros(grid.clone(), first.omega, FieldRole::A);
        let mut e = ComplexVectorField::zeros(grid, first.omega, FieldRole::E);
        for (c, m) in terms {
            if m.a.grid != a.grid {
                return Err(Error::GridMismatch);
            }
            let s = m.state();
            for i in 0..a.values.len() {
                let (av, ev) = (s.a.values[i], s.e.values[i]);
                a.values[i] += av * *c + av.map(|z| z.conj()) * c.conj();
                e.values[i] += ev * *c + ev.map(|z| z.conj()) * c.conj();
                a.mask[i] |= s.a.mask[i];
                e.mask[i] |= s.a.mask[i];
            }
        }
        Ok(Self { a, e })
    }

    fn l2(&self) -> f64 {
        self.a
            .values
            .iter()
            .chain(&self.e.values)
            .map(|v| v.norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

fn check_grids(a: &Grid, b: &Grid, tensors: &TensorField) -> Result<()> {
    if a != b || a != &tensors.grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn apply_real(m: &Matrix3<f64>, v: &CVec3) -> CVec3 {
    CVec3::from_fn(|r, _| (0..3).map(|c| v[c] * m[(r, c)]).sum())
}

fn dot(a: &CVec3, b: &CVec3) -> C64 {
    a.x * b.x + a.y * b.y + a.z * b.z
}

/// `−(i/ħ) ∫ (A₁*·D₂ − A₂·D₁*) dV`, midpoint rule over points that carry a
/// tensor and are unmasked in both states.
pub fn scalar_product(
    s1: &FieldState,
    s2: &FieldState,
    tensors: &TensorField,
    constants: &PhysicalConstants,
) -> Result<C64> {
    check_grids(&s1.a.grid, &s2.a.grid, tensors)?;
    let dv = tensors.grid.cell_volume();
    let sum: C64 = (0..tensors.grid.len())
        .into_par_iter()
        .filter_map(|i| {
            if s1.a.mask[i] || s2.a.mask[i] {
                return None;
            }
            let t = tensors.cells[i].as_ref()?;
            let d2 = apply_real(&t.eps, &s2.e.values[i]);
            let d1 = apply_real(&t.eps, &s1.e.values[i]);
            let a1c = s1.a.values[i].map(|z| z.conj());
            let d1c = d1.map(|z| z.conj());
            Some(dot(&a1c, &d2) - dot(&s2.a.values[i], &d1c))
        })
        .sum();
    Ok(sum * C64::new(0.0, -constants.eps0 * dv / constants.hbar))
}

pub fn mode_product(
    m1: &Mode,
    m2: &Mode,
    tensors: &TensorField,
    constants: &PhysicalConstants,
) -> Result<C64> {
    scalar_product(&m1.state(), &m2.state(), tensors, constants)
}

/// `max_t |(m₁(t), m₂(t)) − (m₁(0), m₂(0))|` under analytic phase evolution.
pub fn scalar_product_drift(
    m1: &Mode,
    m2: &Mode,
    times: &[f64],
    tensors: &TensorField,
    constants: &PhysicalConstants,
) -> Result<f64> {
    let base = mode_product(m1, m2, tensors, constants)?;
    times.iter().try_fold(0.0f64, |worst, &t| {
        let now = mode_product(&m1.evolved(t), &m2.evolved(t), tensors, constants)?;
        Ok(worst.max((now - base).norm()))
    })
}

/// Gram matrices `G_jk = (A_j, A_k)` and `G*_jk = (A_j*, A_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub g: DMatrix<C64>,
    pub gstar: DMatrix<C64>,
    pub max_off_diag: f64,
    pub max_diag_err: f64,
    pub max_gstar: f64,
}

impl GramReport {
    /// `G = I` and `G* = 0` within `tol`: the Bose-commutator surrogate.
    pub fn is_orthonormal(&self, tol: f64) -> bool {
        self.worst() <= tol
    }

    pub fn worst(&self) -> f64 {
        self.max_off_diag.max(self.max_diag_err).max(self.max_gstar)
    }
}

pub fn gram_matrix(
    modes: &[Mode],
    tensors: &TensorField,
    constants: &PhysicalConstants,
) -> Result<GramReport> {
    if modes.is_empty() {
        return Err(Error::invalid("gram matrix needs at least one mode"));
    }
    let states: Vec<FieldState> = modes.iter().map(Mode::state).collect();
    let conj_states: Vec<FieldState> = modes.iter().map(|m| m.conjugated().state()).collect();
    let n = modes.len();
    let entries: Vec<(C64, C64)> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (j, k) = (idx / n, idx % n);
            Ok((
                scalar_product(&states[j], &states[k], tensors, constants)?,
                scalar_product(&conj_states[j], &states[k], tensors, constants)?,
            ))
        })
        .collect::<Result<_>>()?;
    let g = DMatrix::from_fn(n, n, |j, k| entries[j * n + k].0);
    let gstar = DMatrix::from_fn(n, n, |j, k| entries[j * n + k].1);
    let mut max_off_diag = 0.0f64;
    let mut max_diag_err = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            if j == k {
                max_diag_err = max_diag_err.max((g[(j, k)] - C64::new(1.0, 0.0)).norm());
            } else {
                max_off_diag = max_off_diag.max(g[(j, k)].norm());
            }
        }
    }
    let max_gstar = gstar.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    Ok(GramReport {
        g,
        gstar,
        max_off_diag,
        max_diag_err,
        max_gstar,
    })
}

/// Mode amplitudes of a classical field.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionCoefficients {
    pub labels: Vec<i64>,
    pub coeffs: Vec<C64>,
    /// `‖state − Σ (a_k A_k + c.c.)‖ / ‖state‖` over A and E samples.
    pub reconstruction_residual: f64,
}

/// `a_k = (A_k, A)` for an orthonormal mode set.
pub fn expand_field(
    state: &FieldState,
    modes: &[Mode],
    tensors: &TensorField,
    constants: &PhysicalConstants,
    gram_tol: f64,
) -> Result<ExpansionCoefficients> {
    let report = gram_matrix(modes, tensors, constants)?;
    if !report.is_orthonormal(gram_tol) {
        return Err(Error::NonOrthonormalBasis(report.worst(), gram_tol));
    }
    let coeffs: Vec<C64> = modes
        .iter()
        .map(|m| scalar_product(&m.state(), state, tensors, constants))
        .collect::<Result<_>>()?;
    let terms: Vec<(C64, &Mode)> = coeffs.iter().copied().zip(modes.iter()).collect();
    let rebuilt = FieldState::synthesize(&terms)?;
    let mut diff = state.clone();
    for i in 0..diff.a.values.len() {
        diff.a.values[i] -= rebuilt.a.values[i];
        diff.e.values[i] -= rebuilt.e.values[i];
    }
    let norm = state.l2();
    let reconstruction_residual = if norm > 0.0 { diff.l2() / norm } else { diff.l2() };
    Ok(ExpansionCoefficients {
        labels: modes.iter().map(|m| m.label).collect(),
        coeffs,
        reconstruction_residual,
    })
}

/// How `B = ∇×A` is formed for the energy functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurlScheme {
    /// FFT derivative on a periodic grid; exact for grid-resolved plane waves.
    Spectral,
    /// Second-order central differences with periodic wrap.
    PeriodicCentral,
}

fn periodic_curl(field: &[CVec3], grid: &Grid, scheme: CurlScheme) -> Vec<CVec3> {
    let n = grid.len();
    // d[a][c] = ∂_a F_c
    let mut d: Vec<[[C64; 3]; 3]> = vec![[[C64::new(0.0, 0.0); 3]; 3]; n];
    for a in 0..3 {
        if grid.counts()[a] == 1 {
            continue;
        }
        for c in 0..3 {
            let comp: Vec<C64> = field.iter().map(|v| v[c]).collect();
            let deriv = match scheme {
                CurlScheme::Spectral => spectral_derivative(&comp, grid, a),
                CurlScheme::PeriodicCentral => central_periodic_derivative(&comp, grid, a),
            };
            for (i, v) in deriv.into_iter().enumerate() {
                d[i][a][c] = v;
            }
        }
    }
    d.iter()
        .map(|d| CVec3::new(d[1][2] - d[2][1], d[2][0] - d[0][2], d[0][1] - d[1][0]))
        .collect()
}

fn axis_lines(grid: &Grid, axis: usize) -> Vec<Vec<usize>> {
    let counts = grid.counts();
    let mut lines = Vec::new();
    for idx in 0..grid.len() {
        if grid.ijk(idx)[axis] != 0 {
            continue;
        }
        let mut line = Vec::with_capacity(counts[axis]);
        let mut cur = idx;
        line.push(cur);
        for _ in 1..counts[axis] {
            cur = grid.neighbor(cur, axis, 1).expect("within axis length");
            line.push(cur);
        }
        lines.push(line);
    }
    lines
}

fn spectral_derivative(values: &[C64], grid: &Grid, axis: usize) -> Vec<C64> {
    let len = grid.counts()[axis];
    let period = len as f64 * grid.spacing()[axis];
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut out = vec![C64::new(0.0, 0.0); values.len()];
    for line in axis_lines(grid, axis) {
        let mut buf: Vec<C64> = line.iter().map(|&i| values[i]).collect();
        fwd.process(&mut buf);
        for (m, v) in buf.iter_mut().enumerate() {
            let wave = if 2 * m < len {
                m as f64
            } else if 2 * m == len {
                0.0
            } else {
                m as f64 - len as f64
            };
            *v *= C64::new(0.0, 2.0 * PI * wave / period);
        }
        inv.process(&mut buf);
        for (k, &i) in line.iter().enumerate() {
            out[i] = buf[k] / len as f64;
        }
    }
    out
}

fn central_periodic_derivative(values: &[C64], grid: &Grid, axis: usize) -> Vec<C64> {
    let len = grid.counts()[axis] as isize;
    let h = grid.spacing()[axis];
    (0..values.len())
        .map(|i| {
            let pos = grid.ijk(i)[axis] as isize;
            let fwd = grid
                .neighbor(i, axis, if pos + 1 < len { 1 } else { 1 - len })
                .expect("wrapped index");
            let bwd = grid
                .neighbor(i, axis, if pos > 0 { -1 } else { len - 1 })
                .expect("wrapped index");
            (values[fwd] - values[bwd]) / (2.0 * h)
        })
        .collect()
}

// Physical field is Σ (c A + c* A*); fold conjugate modes onto their
// positive-frequency partner.
fn positive_terms(terms: &[(C64, &Mode)]) -> Vec<(C64, Mode)> {
    terms
        .iter()
        .map(|(c, m)| {
            if m.conjugate {
                (c.conj(), m.conjugated())
            } else {
                (*c, (*m).clone())
            }
        })
        .collect()
}

fn tensor_pair(tensors: &TensorField, i: usize) -> Result<Option<(Matrix3<f64>, Matrix3<f64>)>> {
    match &tensors.cells[i] {
        None => Ok(None),
        Some(t) => {
            let mu_inv = t.mu_inverse().ok_or(Error::SingularTensor(i))?;
            Ok(Some((t.eps, mu_inv)))
        }
    }
}

/// Time-averaged `½∫(E·D + B·H) dV` of the real field `Σ (c_k A_k + c.c.)`.
///
/// Terms are grouped by frequency; cross terms between different
/// frequencies average out over time.
pub fn energy_integral(
    terms: &[(C64, &Mode)],
    tensors: &TensorField,
    constants: &PhysicalConstants,
    scheme: CurlScheme,
) -> Result<f64> {
    let terms = positive_terms(terms);
    let mut groups: Vec<(f64, Vec<CVec3>)> = Vec::new();
    for (c, m) in &terms {
        check_grids(&m.a.grid, &tensors.grid, tensors)?;
        let slot = match groups
            .iter()
            .position(|(w, _)| (w - m.omega).abs() <= 1e-12 * m.omega)
        {
            Some(p) => p,
            None => {
                groups.push((m.omega, vec![CVec3::zeros(); tensors.grid.len()]));
                groups.len() - 1
            }
        };
        for (acc, v) in groups[slot].1.iter_mut().zip(&m.a.values) {
            *acc += v * *c;
        }
    }
    let grid = &tensors.grid;
    let dv = grid.cell_volume();
    let mut total = 0.0;
    for (omega, a) in &groups {
        let b = periodic_curl(a, grid, scheme);
        for i in 0..grid.len() {
            let Some((eps, mu_inv)) = tensor_pair(tensors, i)? else {
                continue;
            };
            let av = a[i];
            let electric = dot(&av.map(|z| z.conj()), &apply_real(&eps, &av)).re * omega * omega;
            let magnetic = dot(&b[i].map(|z| z.conj()), &apply_real(&mu_inv, &b[i])).re
                * constants.c
                * constants.c;
            total += (electric + magnetic) * dv;
        }
    }
    Ok(constants.eps0 * total)
}

/// Instantaneous `½∫(E·D + B·H) dV` at time `t` for the real field
/// `Σ (c_k A_k e^{−iω_k t} + c.c.)`.
pub fn instantaneous_energy(
    terms: &[(C64, &Mode)],
    t: f64,
    tensors: &TensorField,
    constants: &PhysicalConstants,
    scheme: CurlScheme,
) -> Result<f64> {
    let terms = positive_terms(terms);
    let grid = &tensors.grid;
    let n = grid.len();
    let mut a_real = vec![CVec3::zeros(); n];
    let mut e_real = vec![Vector3::<f64>::zeros(); n];
    for (c, m) in &terms {
        check_grids(&m.a.grid, grid, tensors)?;
        let phase = *c * C64::new(0.0, -m.omega * t).exp();
        for i in 0..n {
            let z = m.a.values[i] * phase;
            // real part of (z + z*) = 2 Re z; E = −∂A/∂t = 2 Re(iω z)
            a_real[i] += z.map(|v| C64::new(2.0 * v.re, 0.0));
            e_real[i] += z.map(|v| 2.0 * (C64::i() * m.omega * v).re);
        }
    }
    let b = periodic_curl(&a_real, grid, scheme);
    let dv = grid.cell_volume();
    let mut total = 0.0;
    for i in 0..n {
        let Some((eps, mu_inv)) = tensor_pair(tensors, i)? else {
            continue;
        };
        let bre = b[i].map(|z| z.re);
        total += e_real[i].dot(&(eps * e_real[i])) * constants.eps0
            + bre.dot(&(mu_inv * bre)) * constants.eps0 * constants.c * constants.c;
    }
    Ok(0.5 * total * dv)
}

/// `Σ ħω_k / 2` over an explicit, finite list.
pub fn zero_point_sum(frequencies: &[f64], constants: &PhysicalConstants) -> Result<f64> {
    frequencies.iter().try_fold(0.0, |acc, &w| {
        if w > 0.0 && w.is_finite() {
            Ok(acc + 0.5 * constants.hbar * w)
        } else {
            Err(Error::NonPositiveFrequency(w))
        }
    })
}

/// Frequencies of all periodic-box modes with `0 < |k| ≤ k_cutoff`, two
/// polarizations each. `lengths` holds one side length per periodic axis.
pub fn box_mode_frequencies(
    lengths: &[f64],
    k_cutoff: f64,
    eps_prime: f64,
    mu_prime: f64,
    constants: &PhysicalConstants,
) -> Result<Vec<f64>> {
    if lengths.is_empty() || lengths.len() > 3 || lengths.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::invalid("box needs 1 to 3 positive side lengths"));
    }
    if !(eps_prime * mu_prime > 0.0) {
        return Err(Error::invalid("background must have eps'·mu' > 0"));
    }
    let speed = constants.c / (eps_prime * mu_prime).sqrt();
    let bounds: Vec<i64> = lengths
        .iter()
        .map(|l| (k_cutoff * l / (2.0 * PI)).floor() as i64)
        .collect();
    let mut out = Vec::new();
    let mut idx = bounds.iter().map(|b| -b).collect::<Vec<_>>();
    loop {
        let k2: f64 = idx
            .iter()
            .zip(lengths)
            .map(|(n, l)| (2.0 * PI * *n as f64 / l).powi(2))
            .sum();
        if k2 > 0.0 && k2 <= k_cutoff * k_cutoff {
            let w = speed * k2.sqrt();
            out.extend([w, w]);
        }
        let mut axis = 0;
        loop {
            if axis == idx.len() {
                out.sort_by(f64::total_cmp);
                return Ok(out);
            }
            idx[axis] += 1;
            if idx[axis] > bounds[axis] {
                idx[axis] = -bounds[axis];
                axis += 1;
            } else {
                break;
            }
        }
    }
}
