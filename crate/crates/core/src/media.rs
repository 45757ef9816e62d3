//! Material tensors of spatial transformation media.
//!
//! Two independent constructions are provided: directly from the Jacobian,
//! `ε = J Jᵀ/det J · ε'`, and from the induced metric,
//! `ε^ij = ±√γ γ^ij ε'`, `(μ⁻¹)_ij = ±γ_ij/(√γ μ')`. They must agree.

use std::io::{self, Write};

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::coordmaps::{CoordinateMap, JacobianData};
use crate::error::{Error, Result};
use crate::fields::{format_f64, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Handedness {
    Right,
    Left,
}

impl Handedness {
    pub fn from_sign(sign: f64) -> Self {
        if sign < 0.0 {
            Handedness::Left
        } else {
            Handedness::Right
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Handedness::Right => "right",
            Handedness::Left => "left",
        }
    }
}

/// Relative permittivity and permeability at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTensors {
    pub eps: Matrix3<f64>,
    pub mu: Matrix3<f64>,
    pub eps_prime: f64,
    pub mu_prime: f64,
    pub handedness: Handedness,
}

impl MaterialTensors {
    /// Isotropic background `ε' I`, `μ' I`.
    pub fn uniform(eps_prime: f64, mu_prime: f64) -> Self {
        Self {
            eps: Matrix3::identity() * eps_prime,
            mu: Matrix3::identity() * mu_prime,
            eps_prime,
            mu_prime,
            handedness: Handedness::Right,
        }
    }

    pub fn mu_inverse(&self) -> Option<Matrix3<f64>> {
        self.mu.try_inverse()
    }
}

fn check_background(eps_prime: f64, mu_prime: f64) -> Result<()> {
    if eps_prime == 0.0 || mu_prime == 0.0 || !eps_prime.is_finite() || !mu_prime.is_finite() {
        return Err(Error::invalid(format!(
            "background eps'={eps_prime}, mu'={mu_prime} must be finite and non-zero"
        )));
    }
    Ok(())
}

/// `ε = J Jᵀ/det J · ε'`, `μ = J Jᵀ/det J · μ'`.
pub fn material_tensors(jac: &JacobianData, eps_prime: f64, mu_prime: f64) -> Result<MaterialTensors> {
    check_background(eps_prime, mu_prime)?;
    if !(jac.det_j.abs() >= 1e-14) {
        return Err(Error::SingularJacobian(jac.det_j));
    }
    let geometric = jac.j * jac.j.transpose() / jac.det_j;
    Ok(MaterialTensors {
        eps: geometric * eps_prime,
        mu: geometric * mu_prime,
        eps_prime,
        mu_prime,
        handedness: Handedness::from_sign(jac.det_j),
    })
}

/// Metric route: `ε^ij = ±√γ γ^ij ε'` and `μ = [±γ_ij/(√γ μ')]⁻¹`, with
/// `γ^ij` standing in for `(γ_ij)⁻¹`.
pub fn material_tensors_metric(
    jac: &JacobianData,
    eps_prime: f64,
    mu_prime: f64,
) -> Result<MaterialTensors> {
    check_background(eps_prime, mu_prime)?;
    if !(jac.gamma.is_finite() && jac.gamma > 0.0) {
        return Err(Error::SingularMetric(jac.gamma));
    }
    let root = jac.gamma.sqrt();
    let eps = jac.gamma_upper * (jac.sign * root * eps_prime);
    // μ⁻¹ = ±γ_ij/(√γ μ'); inverting through γ^ij avoids a 3×3 inverse that
    // loses digits next to degenerate surfaces such as the cloak's inner rim
    let mu = jac.gamma_upper * (jac.sign * root * mu_prime);
    Ok(MaterialTensors {
        eps,
        mu,
        eps_prime,
        mu_prime,
        handedness: Handedness::from_sign(jac.sign),
    })
}

/// Eigenvalues of a symmetric 3×3 matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let sym = (m + m.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let mut out = [ev[0], ev[1], ev[2]];
    out.sort_by(f64::total_cmp);
    out
}

/// Max-abs difference scaled by the larger matrix (floored at 1).
pub fn relative_difference(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() / scale
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn push(&mut self, name: &'static str, measured: f64, tolerance: f64, passed: bool) {
        self.checks.push(Check {
            name,
            passed,
            measured,
            tolerance,
        });
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }
}

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const IMPEDANCE_TOL: f64 = 1e-12;
pub const DETERMINANT_TOL: f64 = 1e-12;

/// Structural checks on a tensor pair against the Jacobian it came from.
pub fn validate_tensors(t: &MaterialTensors, jac: &JacobianData) -> ValidationReport {
    let mut report = ValidationReport::default();

    let asym_eps = relative_difference(&t.eps, &t.eps.transpose());
    report.push("eps_symmetric", asym_eps, SYMMETRY_TOL, asym_eps <= SYMMETRY_TOL);
    let asym_mu = relative_difference(&t.mu, &t.mu.transpose());
    report.push("mu_symmetric", asym_mu, SYMMETRY_TOL, asym_mu <= SYMMETRY_TOL);

    let mismatch = relative_difference(&(t.eps / t.eps_prime), &(t.mu / t.mu_prime));
    report.push("impedance_match", mismatch, IMPEDANCE_TOL, mismatch <= IMPEDANCE_TOL);

    let expected = Handedness::from_sign(jac.det_j);
    report.push(
        "handedness",
        jac.det_j,
        0.0,
        expected == t.handedness,
    );

    // With ε' > 0 every eigenvalue of ε carries the sign of det J.
    let ev = symmetric_eigenvalues(&t.eps);
    let orientation = if t.eps_prime > 0.0 { 1.0 } else { -1.0 };
    let (measured, ok) = match t.handedness {
        Handedness::Right => (ev[0] * orientation, ev.iter().all(|v| v * orientation > 0.0)),
        Handedness::Left => (ev[2] * orientation, ev.iter().all(|v| v * orientation < 0.0)),
    };
    report.push("eigenvalue_sign", measured, 0.0, ok);

    // rounding in a 3×3 determinant grows with the condition number
    let det_expected = t.eps_prime.powi(3) / jac.det_j;
    let (lo, hi) = ev.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    let kappa = (hi / lo).max(1.0);
    let det_err = ((t.eps.determinant() - det_expected) / det_expected).abs() / kappa;
    report.push("determinant", det_err, DETERMINANT_TOL, det_err <= DETERMINANT_TOL);

    report
}

/// Material tensors sampled on a grid. `None` marks points with no tensor
/// (hidden region of a cloak, map interfaces).
#[derive(Debug, Clone)]
pub struct TensorField {
    pub grid: Grid,
    pub cells: Vec<Option<MaterialTensors>>,
}

impl TensorField {
    pub fn uniform(grid: &Grid, eps_prime: f64, mu_prime: f64) -> Self {
        Self {
            grid: grid.clone(),
            cells: vec![Some(MaterialTensors::uniform(eps_prime, mu_prime)); grid.len()],
        }
    }

    /// Tensors of the transformation medium of `map` at every grid point.
    pub fn from_map(map: &CoordinateMap, grid: &Grid, eps_prime: f64, mu_prime: f64) -> Result<Self> {
        check_background(eps_prime, mu_prime)?;
        let cells = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                map.jacobian(&grid.point(i))
                    .ok()
                    .and_then(|j| material_tensors(&j, eps_prime, mu_prime).ok())
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            cells,
        })
    }
}

/// Tensor export: header
/// `x,y,z,exx,exy,exz,eyy,eyz,ezz,mxx,mxy,mxz,myy,myz,mzz,handedness`,
/// x fastest. Points without a tensor are written as `nan` with handedness
/// `none`.
pub fn write_tensor_csv<W: Write>(mut w: W, field: &TensorField) -> io::Result<()> {
    writeln!(
        w,
        "x,y,z,exx,exy,exz,eyy,eyz,ezz,mxx,mxy,mxz,myy,myz,mzz,handedness"
    )?;
    const UPPER: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];
    for (i, cell) in field.cells.iter().enumerate() {
        let p = field.grid.point(i);
        let mut row = vec![format_f64(p.x), format_f64(p.y), format_f64(p.z)];
        match cell {
            Some(t) => {
                row.extend(UPPER.iter().map(|&ij| format_f64(t.eps[ij])));
                row.extend(UPPER.iter().map(|&ij| format_f64(t.mu[ij])));
                row.push(t.handedness.as_str().to_string());
            }
            None => {
                row.extend(std::iter::repeat("nan".to_string()).take(12));
                row.push("none".to_string());
            }
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}
