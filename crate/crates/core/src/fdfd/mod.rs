//! Two-dimensional frequency-domain solver for TM waves (`E_z`, `H_x`, `H_y`)
//! in z-invariant anisotropic media.
//!
//! Discretizes `∇·(T ∇E_z) + (ω/c)² ε_z E_z = 0` with `T = μ₂/det μ₂` on a
//! node grid. `E_z` lives on nodes, `T` on cell-face midpoints (where the
//! staggered `H` components sit), giving a 9-point stencil when `T` has an
//! off-diagonal part. Open boundaries use a complex coordinate stretch; plane
//! waves enter through a total-field/scattered-field rectangle.

pub mod banded;
pub mod sparse;

use nalgebra::Matrix2;
use rayon::prelude::*;

use crate::coordmaps::{CoordinateMap, Point3};
use crate::error::{Error, Result};
use crate::fields::{
    transform_scalar, ComplexScalarField, Direction, Grid, PhysicalConstants, ScalarSource,
};
use crate::media::{material_tensors, MaterialTensors, TensorField};
use crate::C64;

pub use banded::BandLu;
pub use sparse::{bicgstab, gmres, CsrMatrix, Ilu0, KrylovResult};

/// Smallest accepted grid side, in nodes.
pub const MIN_NODES: usize = 16;
pub const MIN_PML_CELLS: usize = 8;
/// `Auto` solves switch from the direct to the Krylov path above this size.
pub const DIRECT_LIMIT: usize = 10_000;
/// Allowed magnitude of the entries coupling the z axis to the plane.
pub const CROSS_TOL: f64 = 1e-12;
pub const MU_DET_TOL: f64 = 1e-14;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Splits a z-invariant tensor pair into the TM quantities `(ε_zz, μ_xy block)`.
pub fn reduce_tensors_2d(t: &MaterialTensors) -> Result<(f64, Matrix2<f64>)> {
    let cross = [t.eps[(0, 2)], t.eps[(1, 2)], t.eps[(2, 0)], t.eps[(2, 1)]]
        .into_iter()
        .chain([t.mu[(0, 2)], t.mu[(1, 2)], t.mu[(2, 0)], t.mu[(2, 1)]])
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if !(cross <= CROSS_TOL) {
        return Err(Error::NotZInvariant(cross));
    }
    Ok((t.eps[(2, 2)], t.mu.fixed_view::<2, 2>(0, 0).into_owned()))
}

/// Pointwise [`reduce_tensors_2d`] over a tensor field; points without a
/// tensor stay `None`.
pub fn reduce_tensor_field(field: &TensorField) -> Result<Vec<Option<(f64, Matrix2<f64>)>>> {
    field
        .cells
        .iter()
        .map(|c| c.as_ref().map(reduce_tensors_2d).transpose())
        .collect()
}

/// Outer closure of the computational box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    /// Absorbing layer of `cells` nodes outside the physical box, quadratic
    /// conductivity grading, normal-incidence reflection target `reflection`.
    /// The outermost ring is held at zero.
    Pml { cells: usize, reflection: f64 },
    /// The box `[lo, hi)` repeats.
    Periodic,
}

impl Default for Boundary {
    fn default() -> Self {
        Boundary::Pml {
            cells: 10,
            reflection: 1e-6,
        }
    }
}

/// Axis-aligned rectangle, closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.lo[0] && x <= self.hi[0] && y >= self.lo[1] && y <= self.hi[1]
    }
}

/// Plane wave injected on the boundary of the total-field rectangle `tf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWaveSource {
    /// Unit propagation direction in the plane.
    pub direction: [f64; 2],
    pub amplitude: C64,
    pub tf: Rect,
}

/// Line current at the node nearest `position`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSource {
    pub position: [f64; 2],
    pub amplitude: C64,
}

/// Physical box and node spacing. Square cells only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub spacing: f64,
}

impl Domain {
    /// `[−half, half]²`.
    pub fn square(half: f64, spacing: f64) -> Self {
        Self {
            lo: [-half, -half],
            hi: [half, half],
            spacing,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-9 * self.spacing;
        x >= self.lo[0] - tol && x <= self.hi[0] + tol && y >= self.lo[1] - tol && y <= self.hi[1] + tol
    }
}

/// Medium seen at one sample point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MediumSample {
    /// Not part of the computation: the field is held at zero and no flux
    /// crosses into it.
    Hidden,
    Material { eps_z: f64, mu: Matrix2<f64> },
}

/// Medium function accepted by [`TmProblem::new`].
pub type Medium<'a> = dyn Fn(&Point3) -> Result<MediumSample> + Sync + 'a;

/// Uniform isotropic medium.
pub fn uniform_medium(eps: f64, mu: f64) -> impl Fn(&Point3) -> Result<MediumSample> + Sync {
    move |_| {
        Ok(MediumSample::Material {
            eps_z: eps,
            mu: Matrix2::identity() * mu,
        })
    }
}

/// Transformation medium of a z-invariant map. Points without an image are
/// hidden; points on an interface take the tensor of the first neighbouring
/// side found (a step of 1e-9 along +x, −x, +y, −y) and are hidden when any
/// side has no image.
pub fn map_medium<'a>(
    map: &'a CoordinateMap,
    eps_prime: f64,
    mu_prime: f64,
) -> impl Fn(&Point3) -> Result<MediumSample> + Sync + 'a {
    move |p| {
        let reduce = |jac| -> Result<MediumSample> {
            let (eps_z, mu) = reduce_tensors_2d(&material_tensors(&jac, eps_prime, mu_prime)?)?;
            Ok(MediumSample::Material { eps_z, mu })
        };
        match map.jacobian(p) {
            Ok(jac) => reduce(jac),
            Err(Error::Undefined) => Ok(MediumSample::Hidden),
            Err(Error::Interface(_)) => {
                let step = 1e-9 * p.norm().max(1.0);
                let mut found = None;
                for (axis, sign) in [(0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)] {
                    let mut q = *p;
                    q[axis] += sign * step;
                    match map.jacobian(&q) {
                        Ok(jac) => {
                            found.get_or_insert(jac);
                        }
                        Err(Error::Undefined) => return Ok(MediumSample::Hidden),
                        Err(Error::Interface(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
                found.map_or(Ok(MediumSample::Hidden), reduce)
            }
            Err(e) => Err(e),
        }
    }
}

/// A discretized TM scattering problem.
#[derive(Debug, Clone)]
pub struct TmProblem {
    /// Node grid, including absorbing layers; `counts[2] == 1`.
    pub grid: Grid,
    pub domain: Domain,
    pub boundary: Boundary,
    pub omega: f64,
    pub c: f64,
    /// Background the incident wave travels in.
    pub eps_bg: f64,
    pub mu_bg: f64,
    /// `ε_z` per node (unused where hidden).
    pub eps_z: Vec<f64>,
    /// In-plane μ at the face between node `n` and its +x neighbour.
    pub mu_x: Vec<Option<Matrix2<f64>>>,
    /// In-plane μ at the face between node `n` and its +y neighbour.
    pub mu_y: Vec<Option<Matrix2<f64>>>,
    pub hidden: Vec<bool>,
    pub plane_wave: Option<PlaneWaveSource>,
    pub sources: Vec<PointSource>,
}

impl TmProblem {
    /// Samples `medium` at nodes and face midpoints of `domain`.
    pub fn new(
        domain: Domain,
        boundary: Boundary,
        omega: f64,
        constants: &PhysicalConstants,
        background: (f64, f64),
        medium: &Medium<'_>,
    ) -> Result<Self> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::NonPositiveFrequency(omega));
        }
        if !(background.0 * background.1 > 0.0) {
            return Err(Error::invalid("incident background needs eps·mu > 0"));
        }
        let h = domain.spacing;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("grid spacing must be > 0"));
        }
        let mut counts = [0usize; 3];
        let mut origin = Point3::zeros();
        for a in 0..2 {
            let cells = (domain.hi[a] - domain.lo[a]) / h;
            if !(cells > 0.0) || (cells - cells.round()).abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "box side {} is not a whole number of cells of {h}",
                    domain.hi[a] - domain.lo[a]
                )));
            }
            let cells = cells.round() as usize;
            (counts[a], origin[a]) = match boundary {
                Boundary::Pml { cells: pml, .. } => (cells + 1 + 2 * pml, domain.lo[a] - pml as f64 * h),
                Boundary::Periodic => (cells, domain.lo[a]),
            };
            if counts[a] < MIN_NODES {
                return Err(Error::invalid(format!(
                    "grid side of {} nodes is below the minimum {MIN_NODES}",
                    counts[a]
                )));
            }
        }
        counts[2] = 1;
        if let Boundary::Pml { cells, reflection } = boundary {
            if cells < MIN_PML_CELLS {
                return Err(Error::invalid(format!(
                    "absorbing layer of {cells} cells is thinner than {MIN_PML_CELLS}"
                )));
            }
            if !(reflection > 0.0 && reflection < 1.0) {
                return Err(Error::invalid("absorbing-layer reflection must be in (0, 1)"));
            }
        }
        let grid = Grid::new(origin, [h, h, 1.0], counts)?;
        let n = grid.len();
        let nodes: Vec<MediumSample> = (0..n)
            .into_par_iter()
            .map(|i| medium(&grid.point(i)))
            .collect::<Result<_>>()?;
        let face = |axis: usize| -> Result<Vec<Option<Matrix2<f64>>>> {
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut p = grid.point(i);
                    p[axis] += 0.5 * h;
                    Ok(match medium(&p)? {
                        MediumSample::Hidden => None,
                        MediumSample::Material { mu, .. } => Some(mu),
                    })
                })
                .collect()
        };
        let mu_x = face(0)?;
        let mu_y = face(1)?;
        let mut eps_z = vec![0.0; n];
        let mut hidden = vec![false; n];
        for (i, s) in nodes.into_iter().enumerate() {
            match s {
                MediumSample::Hidden => hidden[i] = true,
                MediumSample::Material { eps_z: e, .. } => eps_z[i] = e,
            }
        }
        Ok(Self {
            grid,
            domain,
            boundary,
            omega,
            c: constants.c,
            eps_bg: background.0,
            mu_bg: background.1,
            eps_z,
            mu_x,
            mu_y,
            hidden,
            plane_wave: None,
            sources: Vec::new(),
        })
    }

    /// Problem for the transformation medium of `map` in an `ε'`, `μ'`
    /// background.
    pub fn from_map(
        domain: Domain,
        boundary: Boundary,
        omega: f64,
        constants: &PhysicalConstants,
        map: &CoordinateMap,
        eps_prime: f64,
        mu_prime: f64,
    ) -> Result<Self> {
        if !map.is_z_invariant() {
            return Err(Error::NotZInvariant(f64::NAN));
        }
        let medium = map_medium(map, eps_prime, mu_prime);
        Self::new(domain, boundary, omega, constants, (eps_prime, mu_prime), &medium)
    }

    pub fn with_plane_wave(mut self, source: PlaneWaveSource) -> Result<Self> {
        let [dx, dy] = source.direction;
        let len = dx.hypot(dy);
        if !(len > 0.0) {
            return Err(Error::invalid("plane-wave direction must be non-zero"));
        }
        self.plane_wave = Some(PlaneWaveSource {
            direction: [dx / len, dy / len],
            ..source
        });
        Ok(self)
    }

    pub fn with_point_source(mut self, source: PointSource) -> Self {
        self.sources.push(source);
        self
    }

    /// Free-space wavenumber of the background, `ω√(ε μ)/c`.
    pub fn k0(&self) -> f64 {
        self.omega * (self.eps_bg * self.mu_bg).sqrt() / self.c
    }

    /// Wavenumber along `direction` that the 5-point background stencil
    /// propagates without error.
    pub fn numerical_wavenumber(&self, direction: [f64; 2]) -> Result<f64> {
        let h = self.domain.spacing;
        let target = (self.k0() * h).powi(2);
        let f = |k: f64| {
            2.0 * (1.0 - (k * direction[0] * h).cos()) + 2.0 * (1.0 - (k * direction[1] * h).cos())
                - target
        };
        // f increases on [0, π/h] for a unit direction
        let (mut lo, mut hi) = (0.0, std::f64::consts::PI / h);
        if f(hi) < 0.0 {
            return Err(Error::invalid("grid too coarse for the incident wave"));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn discrete_plane_wave(&self) -> Result<Option<DiscretePlaneWave>> {
        let Some(pw) = self.plane_wave else {
            return Ok(None);
        };
        let k = self.numerical_wavenumber(pw.direction)?;
        Ok(Some(DiscretePlaneWave {
            k: [k * pw.direction[0], k * pw.direction[1]],
            amplitude: pw.amplitude,
            omega: self.omega,
        }))
    }

    /// The injected plane wave sampled on every node.
    pub fn incident_field(&self) -> Result<ComplexScalarField> {
        let wave = self
            .discrete_plane_wave()?
            .ok_or_else(|| Error::invalid("problem has no plane-wave source"))?;
        let mut f = ComplexScalarField::zeros(self.grid.clone(), self.omega);
        f.values = (0..self.grid.len())
            .map(|i| wave.value_at(&self.grid.point(i)))
            .collect();
        Ok(f)
    }

    /// The injected plane wave carried through `map`: the field the
    /// transformation predicts in physical space.
    pub fn transported_incident(&self, map: &CoordinateMap) -> Result<ComplexScalarField> {
        let wave = self
            .discrete_plane_wave()?
            .ok_or_else(|| Error::invalid("problem has no plane-wave source"))?;
        Ok(transform_scalar(&wave, map, &self.grid, Direction::ToPhysical))
    }

    /// Whether node `idx` lies in the physical box (not in an absorbing layer).
    pub fn in_physical(&self, idx: usize) -> bool {
        let p = self.grid.point(idx);
        self.domain.contains(p.x, p.y)
    }

    fn stretch(&self, axis: usize, coord: f64) -> C64 {
        let Boundary::Pml { cells, reflection } = self.boundary else {
            return C64::new(1.0, 0.0);
        };
        let depth = cells as f64 * self.domain.spacing;
        let d = (self.domain.lo[axis] - coord)
            .max(coord - self.domain.hi[axis])
            .max(0.0);
        let sigma_max = 3.0 * self.c * (1.0 / reflection).ln() / (2.0 * depth);
        C64::new(1.0, sigma_max * (d / depth).powi(2) / self.omega)
    }

    fn node(&self, i: isize, j: isize) -> Option<usize> {
        let [nx, ny, _] = self.grid.counts();
        let (nx, ny) = (nx as isize, ny as isize);
        let (i, j) = match self.boundary {
            Boundary::Periodic => (i.rem_euclid(nx), j.rem_euclid(ny)),
            Boundary::Pml { .. } => {
                if i < 0 || j < 0 || i >= nx || j >= ny {
                    return None;
                }
                (i, j)
            }
        };
        Some(self.grid.index(i as usize, j as usize, 0))
    }

    fn is_unknown(&self, idx: usize) -> bool {
        if self.hidden[idx] {
            return false;
        }
        match self.boundary {
            Boundary::Periodic => true,
            Boundary::Pml { .. } => {
                let [i, j, _] = self.grid.ijk(idx);
                let [nx, ny, _] = self.grid.counts();
                i > 0 && j > 0 && i + 1 < nx && j + 1 < ny
            }
        }
    }

    // Row of the operator at node (i, j) over node indices.
    fn row(&self, i: isize, j: isize) -> Result<Vec<(usize, C64)>> {
        let h = self.domain.spacing;
        let here = self.node(i, j).expect("row node exists");
        let mut out: Vec<(usize, C64)> = Vec::with_capacity(9);
        let push = |out: &mut Vec<(usize, C64)>, di: isize, dj: isize, v: C64| {
            if let Some(n) = self.node(i + di, j + dj) {
                out.push((n, v));
            }
        };
        // axis 0: faces (i−1 | i) and (i | i+1); axis 1 likewise. The flux
        // through face (a | a+1) along `axis`:
        //   T_nn (u[a+1] − u[a])/h + T_nt (Σ tangential differences)/(4h).
        for axis in 0..2 {
            for (sgn, back) in [(1.0, 0isize), (-1.0, -1isize)] {
                let (fi, fj) = if axis == 0 { (i + back, j) } else { (i, j + back) };
                // (normal step, tangential step) → (di, dj)
                let at = |n: isize, t: isize| -> (isize, isize) {
                    if axis == 0 {
                        (fi + n, fj + t)
                    } else {
                        (fi + t, fj + n)
                    }
                };
                let stencil = [at(0, 0), at(1, 0), at(0, 1), at(0, -1), at(1, 1), at(1, -1)];
                let nodes: Option<Vec<usize>> = stencil.iter().map(|&(a, b)| self.node(a, b)).collect();
                let Some(nodes) = nodes else { continue };
                if nodes.iter().any(|&n| self.hidden[n]) {
                    continue;
                }
                let face_node = nodes[0];
                let mu = if axis == 0 { self.mu_x[face_node] } else { self.mu_y[face_node] };
                let Some(mu) = mu else { continue };
                let det = mu.determinant();
                if !(det.abs() >= MU_DET_TOL) {
                    let p = self.grid.point(face_node);
                    return Err(Error::SingularMu(format!(
                        "det {det:e} at face of node ({}, {})",
                        p.x, p.y
                    )));
                }
                let t = mu / det;
                let p = self.grid.point(face_node);
                let (mid_n, mid_t) = if axis == 0 { (p.x + 0.5 * h, p.y) } else { (p.y + 0.5 * h, p.x) };
                let other = 1 - axis;
                let s_n = self.stretch(axis, mid_n);
                let s_t = self.stretch(other, mid_t);
                let t_nn = C64::new(t[(axis, axis)], 0.0) * s_t / s_n;
                let t_nt = C64::new(t[(0, 1)], 0.0);
                let c = sgn / (h * h);
                let d = |(a, b): (isize, isize)| (a - i, b - j);
                let (di, dj) = d(at(1, 0));
                push(&mut out, di, dj, t_nn * c);
                let (di, dj) = d(at(0, 0));
                push(&mut out, di, dj, -t_nn * c);
                for (n, tt, w) in [(0, 1, 1.0), (0, -1, -1.0), (1, 1, 1.0), (1, -1, -1.0)] {
                    let (di, dj) = d(at(n, tt));
                    push(&mut out, di, dj, t_nt * (c * w / 4.0));
                }
            }
        }
        let p = self.grid.point(here);
        let k2 = (self.omega / self.c).powi(2);
        out.push((
            here,
            self.stretch(0, p.x) * self.stretch(1, p.y) * (k2 * self.eps_z[here]),
        ));
        Ok(out)
    }
}

/// Plane wave with the discrete wavenumber, as a field source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretePlaneWave {
    pub k: [f64; 2],
    pub amplitude: C64,
    pub omega: f64,
}

impl ScalarSource for DiscretePlaneWave {
    fn value_at(&self, p: &Point3) -> C64 {
        self.amplitude * C64::new(0.0, self.k[0] * p.x + self.k[1] * p.y).exp()
    }

    fn omega(&self) -> f64 {
        self.omega
    }
}

/// Assembled linear system over the free nodes.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<C64>,
    pub grid: Grid,
    pub omega: f64,
    /// Node index of each unknown.
    pub unknowns: Vec<usize>,
    /// Incident field on scattered-field nodes, zero elsewhere; adding it
    /// to the solution gives the total field.
    pub scattered_offset: Vec<C64>,
    /// Hidden nodes.
    pub mask: Vec<bool>,
}

impl SparseSystem {
    pub fn dimension(&self) -> usize {
        self.unknowns.len()
    }

    /// Restriction of a node field to the unknowns.
    pub fn gather(&self, node_values: &[C64]) -> Vec<C64> {
        self.unknowns.iter().map(|&n| node_values[n]).collect()
    }
}

/// Builds the discrete operator and right-hand side.
pub fn assemble_tm(problem: &TmProblem) -> Result<SparseSystem> {
    let grid = &problem.grid;
    let n = grid.len();
    let unknowns: Vec<usize> = (0..n).filter(|&i| problem.is_unknown(i)).collect();
    let mut slot = vec![usize::MAX; n];
    for (u, &node) in unknowns.iter().enumerate() {
        slot[node] = u;
    }
    let wave = problem.discrete_plane_wave()?;
    // Q = 1 on scattered-field nodes
    let scattered: Vec<bool> = match problem.plane_wave {
        Some(pw) => (0..n)
            .map(|i| {
                let p = grid.point(i);
                !pw.tf.contains(p.x, p.y)
            })
            .collect(),
        None => vec![false; n],
    };
    let mut sf_incident = vec![ZERO; n];
    if let Some(w) = wave {
        for (i, v) in sf_incident.iter_mut().enumerate() {
            if scattered[i] {
                *v = w.value_at(&grid.point(i));
            }
        }
    }
    let h = problem.domain.spacing;
    let point_rhs: Vec<(usize, C64)> = problem
        .sources
        .iter()
        .map(|s| {
            grid.nearest(&Point3::new(s.position[0], s.position[1], grid.origin().z))
                .map(|i| (i, -s.amplitude / (h * h)))
                .ok_or_else(|| Error::invalid("point source outside the grid"))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(Vec<(usize, C64)>, C64)> = unknowns
        .par_iter()
        .map(|&node| {
            let [i, j, _] = grid.ijk(node);
            let entries = problem.row(i as isize, j as isize)?;
            let mut b = ZERO;
            if let Some(w) = wave {
                // b = Q (A u_inc) − A (Q u_inc)
                for &(col, a) in &entries {
                    if scattered[node] {
                        b += a * w.value_at(&grid.point(col));
                    }
                    b -= a * sf_incident[col];
                }
            }
            for &(src, amp) in &point_rhs {
                if src == node {
                    b += amp;
                }
            }
            let kept = entries
                .into_iter()
                .filter(|(col, _)| slot[*col] != usize::MAX)
                .map(|(col, a)| (slot[col], a))
                .collect();
            Ok((kept, b))
        })
        .collect::<Result<_>>()?;
    let (entries, rhs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok(SparseSystem {
        matrix: CsrMatrix::from_rows(unknowns.len(), entries),
        rhs,
        grid: grid.clone(),
        omega: problem.omega,
        unknowns,
        scattered_offset: sf_incident,
        mask: problem.hidden.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMethod {
    /// Direct up to [`DIRECT_LIMIT`] unknowns, GMRES above.
    #[default]
    Auto,
    /// Band LU with partial pivoting.
    Direct,
    /// ILU(0)-preconditioned BiCGSTAB.
    Bicgstab,
    /// ILU(0)-preconditioned restarted GMRES.
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolveMethod,
    /// Krylov subspace size between GMRES restarts.
    pub restart: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            method: SolveMethod::Auto,
            restart: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Total field on every node; hidden nodes are masked and zero.
    pub ez: ComplexScalarField,
    pub iterations: usize,
    pub relative_residual: f64,
    /// The path actually taken (never `Auto`).
    pub method: SolveMethod,
}

/// Solves the system; iterations are 0 for the direct path.
pub fn solve(system: &SparseSystem, options: &SolveOptions) -> Result<Solution> {
    if !(options.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be > 0, got {}", options.tol)));
    }
    let a = &system.matrix;
    let method = match options.method {
        SolveMethod::Auto if a.n <= DIRECT_LIMIT => SolveMethod::Direct,
        SolveMethod::Auto => SolveMethod::Gmres,
        m => m,
    };
    let bnorm = sparse::norm(&system.rhs);
    let (x, iterations, rel) = if method == SolveMethod::Direct {
        let lu = BandLu::factor(a).ok_or_else(|| Error::invalid("singular system"))?;
        let x = lu.solve(&system.rhs);
        let ax = a.mul(&x);
        let r: Vec<C64> = system.rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
        let rel = if bnorm > 0.0 { sparse::norm(&r) / bnorm } else { sparse::norm(&r) };
        (x, 0, rel)
    } else {
        let ilu = Ilu0::new(a);
        let res = if method == SolveMethod::Gmres {
            gmres(a, &system.rhs, ilu.as_ref(), options.tol, options.max_iter, options.restart)
        } else {
            bicgstab(a, &system.rhs, ilu.as_ref(), options.tol, options.max_iter)
        };
        if !res.converged {
            return Err(Error::NoConvergence {
                iterations: res.iterations,
                residual: res.relative_residual,
            });
        }
        (res.x, res.iterations, res.relative_residual)
    };
    if !(rel <= options.tol) {
        return Err(Error::NoConvergence {
            iterations,
            residual: rel,
        });
    }
    let mut ez = ComplexScalarField::zeros(system.grid.clone(), system.omega);
    for (u, &node) in system.unknowns.iter().enumerate() {
        ez.values[node] = x[u];
    }
    for (i, v) in ez.values.iter_mut().enumerate() {
        *v += system.scattered_offset[i];
        if system.mask[i] {
            *v = ZERO;
        }
    }
    ez.mask = system.mask.clone();
    Ok(Solution {
        ez,
        iterations,
        relative_residual: rel,
        method,
    })
}

/// Annulus `r_inner < |x − center| < r_outer` occupied by a cloak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloakRegion {
    pub center: [f64; 2],
    pub r_inner: f64,
    pub r_outer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringMetrics {
    /// `‖E_z − E_inc‖/‖E_inc‖` over physical nodes outside `r_outer`.
    pub external_scatter_norm: f64,
    /// `‖E_z‖/‖E_inc‖` over physical nodes inside `r_inner`.
    pub interior_leak_norm: f64,
    /// `‖E_z − E_map‖/‖E_map‖` over physical nodes where both are defined.
    pub mapped_field_error: f64,
}

/// Compares a solution with the incident wave and with `analytic`, the
/// field the transformation predicts. Only nodes of the physical box count.
pub fn scattering_metrics(
    sol: &Solution,
    problem: &TmProblem,
    region: &CloakRegion,
    analytic: &ComplexScalarField,
) -> Result<ScatteringMetrics> {
    if sol.ez.grid != problem.grid || analytic.grid != problem.grid {
        return Err(Error::GridMismatch);
    }
    let inc = problem.incident_field()?;
    let mut ext = (0.0, 0.0);
    let mut leak = (0.0, 0.0);
    let mut mapped = (0.0, 0.0);
    for i in 0..problem.grid.len() {
        if !problem.in_physical(i) {
            continue;
        }
        let p = problem.grid.point(i);
        let r = (p.x - region.center[0]).hypot(p.y - region.center[1]);
        let (u, ui) = (sol.ez.values[i], inc.values[i]);
        if r > region.r_outer {
            ext.0 += (u - ui).norm_sqr();
            ext.1 += ui.norm_sqr();
        }
        if r < region.r_inner {
            leak.0 += u.norm_sqr();
            leak.1 += ui.norm_sqr();
        }
        if !sol.ez.mask[i] && !analytic.mask[i] {
            mapped.0 += (u - analytic.values[i]).norm_sqr();
            mapped.1 += analytic.values[i].norm_sqr();
        }
    }
    let ratio = |(num, den): (f64, f64)| if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok(ScatteringMetrics {
        external_scatter_norm: ratio(ext),
        interior_leak_norm: ratio(leak),
        mapped_field_error: ratio(mapped),
    })
}
