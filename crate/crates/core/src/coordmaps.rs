//! Coordinate maps between physical space `x` and transformed space `x'`.
//!
//! Every map is stored in closed form in the physical → primed direction
//! ([`CoordinateMap::map_point`]), which is the direction fields are queried
//! in. The reverse direction ([`CoordinateMap::preimages`]) may be
//! multi-valued (the lens folds space onto itself) or partially undefined.
//!
//! Jacobians follow the convention `J^i_j = ∂x^i/∂x'^j`, evaluated at the
//! primed image of a physical point.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// A point in physical or primed space (dimensionless device units).
pub type Point3 = Vector3<f64>;

/// Half-width of the band around a map kink inside which
/// [`CoordinateMap::jacobian`] reports [`Error::Interface`].
pub const INTERFACE_TOL: f64 = 1e-12;

/// Symmetry axis of a cylindrical map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Axis {
    X,
    Y,
    #[default]
    Z,
}

impl Axis {
    // Cyclic permutation taking Cartesian components to (u, v, w) with w
    // along the axis; cyclic so the local frame keeps its handedness.
    fn perm(self) -> [usize; 3] {
        match self {
            Axis::X => [1, 2, 0],
            Axis::Y => [2, 0, 1],
            Axis::Z => [0, 1, 2],
        }
    }

    fn to_local(self, p: &Point3) -> Point3 {
        let [a, b, c] = self.perm();
        Point3::new(p[a], p[b], p[c])
    }

    fn from_local(self, q: &Point3) -> Point3 {
        let perm = self.perm();
        let mut p = Point3::zeros();
        for (l, &g) in perm.iter().enumerate() {
            p[g] = q[l];
        }
        p
    }

    fn matrix_from_local(self, m: &Matrix3<f64>) -> Matrix3<f64> {
        let perm = self.perm();
        let mut out = Matrix3::zeros();
        for r in 0..3 {
            for c in 0..3 {
                out[(perm[r], perm[c])] = m[(r, c)];
            }
        }
        out
    }
}

/// A transformation between physical and primed coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordinateMap {
    Identity,
    /// Cylindrical cloak: `r = R1 + r'(R2 − R1)/R2` for `r' < R2`, identity
    /// outside. Physical points with `r < R1` have no primed image.
    CylindricalCloak { r1: f64, r2: f64, axis: Axis },
    /// Folded slab along x: `x' = x` (x<0), `−x` (0≤x≤b), `x − 2b` (x>b).
    LensSlab { b: f64 },
    /// Spherical radial map `x' = s(r²)·x` with `s(t) = Σ c_n tⁿ`.
    ///
    /// Requires `c_0 > 0` and `c_n ≥ 0`, which keeps `r·s(r²)` strictly
    /// increasing and the map globally invertible.
    RadialPolynomial { coeffs: Vec<f64> },
    /// `x' = M x + t`.
    Affine { matrix: Matrix3<f64>, offset: Vector3<f64> },
    /// Stages applied in order in the physical → primed direction.
    Composed(Vec<CoordinateMap>),
}

/// Jacobian and induced metric at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianData {
    /// `∂x^i/∂x'^j`
    pub j: Matrix3<f64>,
    /// `∂x'^i/∂x^j`, the inverse of `j`.
    pub j_inv: Matrix3<f64>,
    pub det_j: f64,
    /// `sgn(det J)`; negative for orientation-reversing (left-handed) maps.
    pub sign: f64,
    /// `γ^ij = Σ_l ∂x^i/∂x'^l ∂x^j/∂x'^l`
    pub gamma_upper: Matrix3<f64>,
    /// `γ_ij = Σ_l ∂x'^l/∂x^i ∂x'^l/∂x^j`
    pub gamma_lower: Matrix3<f64>,
    /// `det(γ_ij)`
    pub gamma: f64,
}

impl JacobianData {
    /// Builds the metric data from `J` and its inverse, both supplied by the
    /// caller (analytic maps know both in closed form).
    pub fn from_parts(j: Matrix3<f64>, j_inv: Matrix3<f64>) -> Result<Self> {
        let det_j = j.determinant();
        if !det_j.is_finite() || det_j.abs() < 1e-300 {
            return Err(Error::SingularJacobian(det_j));
        }
        let gamma_upper = j * j.transpose();
        let gamma_lower = j_inv.transpose() * j_inv;
        // det(γ_ij) = det(J⁻¹)²; the squared form keeps the conditioning of J⁻¹
        let gamma = j_inv.determinant().powi(2);
        Ok(Self {
            j,
            j_inv,
            det_j,
            sign: det_j.signum(),
            gamma_upper,
            gamma_lower,
            gamma,
        })
    }

    pub fn from_matrix(j: Matrix3<f64>) -> Result<Self> {
        let j_inv = j
            .try_inverse()
            .ok_or(Error::SingularJacobian(j.determinant()))?;
        Self::from_parts(j, j_inv)
    }

    pub fn identity() -> Self {
        Self::from_parts(Matrix3::identity(), Matrix3::identity()).expect("identity is regular")
    }

    pub fn sqrt_gamma(&self) -> f64 {
        self.gamma.sqrt()
    }
}

impl CoordinateMap {
    pub fn cylindrical_cloak(r1: f64, r2: f64) -> Result<Self> {
        let m = CoordinateMap::CylindricalCloak {
            r1,
            r2,
            axis: Axis::Z,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn lens_slab(b: f64) -> Result<Self> {
        let m = CoordinateMap::LensSlab { b };
        m.validate()?;
        Ok(m)
    }

    pub fn radial_polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let m = CoordinateMap::RadialPolynomial { coeffs };
        m.validate()?;
        Ok(m)
    }

    pub fn affine(matrix: Matrix3<f64>, offset: Vector3<f64>) -> Result<Self> {
        let m = CoordinateMap::Affine { matrix, offset };
        m.validate()?;
        Ok(m)
    }

    pub fn composed(stages: Vec<CoordinateMap>) -> Result<Self> {
        let m = CoordinateMap::Composed(stages);
        m.validate()?;
        Ok(m)
    }

    /// Checks the parameter invariants of every map kind.
    pub fn validate(&self) -> Result<()> {
        match self {
            CoordinateMap::Identity => Ok(()),
            CoordinateMap::CylindricalCloak { r1, r2, .. } => {
                if r1.is_finite() && r2.is_finite() && 0.0 < *r1 && r1 < r2 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!(
                        "cylindrical cloak needs 0 < R1 < R2, got R1={r1}, R2={r2}"
                    )))
                }
            }
            CoordinateMap::LensSlab { b } => {
                if b.is_finite() && *b > 0.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("lens slab needs b > 0, got {b}")))
                }
            }
            CoordinateMap::RadialPolynomial { coeffs } => {
                let ok = !coeffs.is_empty()
                    && coeffs[0] > 0.0
                    && coeffs.iter().all(|c| c.is_finite() && *c >= 0.0);
                if ok {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "radial polynomial needs c0 > 0 and non-negative finite coefficients",
                    ))
                }
            }
            CoordinateMap::Affine { matrix, offset } => {
                let det = matrix.determinant();
                if matrix.iter().chain(offset.iter()).all(|v| v.is_finite())
                    && det.abs() > 1e-14
                {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("affine map must be invertible (det {det})")))
                }
            }
            CoordinateMap::Composed(stages) => stages.iter().try_for_each(|s| s.validate()),
        }
    }

    /// True when the map leaves z untouched and does not mix it with x, y.
    pub fn is_z_invariant(&self) -> bool {
        match self {
            CoordinateMap::Identity | CoordinateMap::LensSlab { .. } => true,
            CoordinateMap::CylindricalCloak { axis, .. } => *axis == Axis::Z,
            CoordinateMap::RadialPolynomial { .. } => false,
            CoordinateMap::Affine { matrix, .. } => {
                matrix[(0, 2)] == 0.0
                    && matrix[(1, 2)] == 0.0
                    && matrix[(2, 0)] == 0.0
                    && matrix[(2, 1)] == 0.0
                    && matrix[(2, 2)] == 1.0
            }
            CoordinateMap::Composed(stages) => stages.iter().all(|s| s.is_z_invariant()),
        }
    }

    /// Physical → primed. `None` when the point has no primed image (the
    /// hidden region `r < R1` of the cloak).
    pub fn map_point(&self, p: &Point3) -> Option<Point3> {
        match self {
            CoordinateMap::Identity => Some(*p),
            CoordinateMap::CylindricalCloak { r1, r2, axis } => {
                let q = axis.to_local(p);
                let r = q.x.hypot(q.y);
                if r < *r1 {
                    return None;
                }
                if r >= *r2 {
                    return Some(*p);
                }
                let rp = (r - r1) * r2 / (r2 - r1);
                let s = rp / r;
                Some(axis.from_local(&Point3::new(q.x * s, q.y * s, q.z)))
            }
            CoordinateMap::LensSlab { b } => {
                let x = p.x;
                let xp = if x < 0.0 {
                    x
                } else if x <= *b {
                    -x
                } else {
                    x - 2.0 * b
                };
                Some(Point3::new(xp, p.y, p.z))
            }
            CoordinateMap::RadialPolynomial { coeffs } => {
                Some(p * poly(coeffs, p.norm_squared()))
            }
            CoordinateMap::Affine { matrix, offset } => Some(matrix * p + offset),
            CoordinateMap::Composed(stages) => stages
                .iter()
                .try_fold(*p, |acc, s| s.map_point(&acc)),
        }
    }

    /// Primed → physical: every physical point whose image is `pp`.
    ///
    /// Lens results are sorted by x. The cloak's primed origin is the image
    /// of the whole circle `r = R1` and returns an empty list.
    pub fn preimages(&self, pp: &Point3) -> Vec<Point3> {
        match self {
            CoordinateMap::Identity => vec![*pp],
            CoordinateMap::CylindricalCloak { r1, r2, axis } => {
                let q = axis.to_local(pp);
                let rp = q.x.hypot(q.y);
                if rp >= *r2 {
                    return vec![*pp];
                }
                if rp == 0.0 {
                    return Vec::new();
                }
                let r = r1 + rp * (r2 - r1) / r2;
                let s = r / rp;
                vec![axis.from_local(&Point3::new(q.x * s, q.y * s, q.z))]
            }
            CoordinateMap::LensSlab { b } => {
                let xp = pp.x;
                let mut xs = Vec::with_capacity(3);
                if xp < 0.0 {
                    xs.push(xp);
                }
                if -b <= xp && xp <= 0.0 {
                    xs.push(-xp);
                }
                if xp > -b {
                    xs.push(xp + 2.0 * b);
                }
                xs.into_iter()
                    .map(|x| Point3::new(x, pp.y, pp.z))
                    .collect()
            }
            CoordinateMap::RadialPolynomial { coeffs } => {
                let rp = pp.norm();
                if rp == 0.0 {
                    return vec![Point3::zeros()];
                }
                let r = invert_radial(coeffs, rp);
                vec![pp * (r / rp)]
            }
            CoordinateMap::Affine { matrix, offset } => match matrix.try_inverse() {
                Some(inv) => vec![inv * (pp - offset)],
                None => Vec::new(),
            },
            CoordinateMap::Composed(stages) => {
                let mut pts = vec![*pp];
                for stage in stages.iter().rev() {
                    pts = pts.iter().flat_map(|p| stage.preimages(p)).collect();
                }
                pts.sort_by(|a, b| {
                    a.x.total_cmp(&b.x)
                        .then(a.y.total_cmp(&b.y))
                        .then(a.z.total_cmp(&b.z))
                });
                pts
            }
        }
    }

    /// Analytic Jacobian at the physical point `p`.
    pub fn jacobian(&self, p: &Point3) -> Result<JacobianData> {
        let (j, k) = self.jacobian_pair(p)?;
        JacobianData::from_parts(j, k)
    }

    // Returns (∂x/∂x', ∂x'/∂x) at physical p.
    fn jacobian_pair(&self, p: &Point3) -> Result<(Matrix3<f64>, Matrix3<f64>)> {
        match self {
            CoordinateMap::Identity => Ok((Matrix3::identity(), Matrix3::identity())),
            CoordinateMap::CylindricalCloak { r1, r2, axis } => {
                let q = axis.to_local(p);
                let r = q.x.hypot(q.y);
                if (r - r1).abs() <= INTERFACE_TOL {
                    return Err(Error::Interface("cloak inner radius"));
                }
                if (r - r2).abs() <= INTERFACE_TOL {
                    return Err(Error::Interface("cloak outer radius"));
                }
                if r < *r1 {
                    return Err(Error::Undefined);
                }
                if r > *r2 {
                    return Ok((Matrix3::identity(), Matrix3::identity()));
                }
                let rp = (r - r1) * r2 / (r2 - r1);
                let radial = (r2 - r1) / r2;
                let azimuthal = r / rp;
                let n = Vector3::new(q.x / r, q.y / r, 0.0);
                let t = Vector3::new(-q.y / r, q.x / r, 0.0);
                let e = Vector3::z();
                let nn = n * n.transpose();
                let tt = t * t.transpose();
                let ee = e * e.transpose();
                let j = nn * radial + tt * azimuthal + ee;
                let k = nn / radial + tt / azimuthal + ee;
                Ok((axis.matrix_from_local(&j), axis.matrix_from_local(&k)))
            }
            CoordinateMap::LensSlab { b } => {
                let x = p.x;
                if x.abs() <= INTERFACE_TOL {
                    return Err(Error::Interface("lens front face x = 0"));
                }
                if (x - b).abs() <= INTERFACE_TOL {
                    return Err(Error::Interface("lens back face x = b"));
                }
                let d = if x > 0.0 && x < *b { -1.0 } else { 1.0 };
                let m = Matrix3::from_diagonal(&Vector3::new(d, 1.0, 1.0));
                Ok((m, m))
            }
            CoordinateMap::RadialPolynomial { coeffs } => {
                // x' = s x with s = s(r²); ∂x'/∂x = s I + q x xᵀ, q = 2 s'(r²).
                let t = p.norm_squared();
                let s = poly(coeffs, t);
                let q = 2.0 * poly_derivative(coeffs, t);
                let xx = p * p.transpose();
                let k = Matrix3::identity() * s + xx * q;
                // Sherman–Morrison: (sI + q x xᵀ)⁻¹ = I/s − q x xᵀ / (s (s + q r²)).
                let j = Matrix3::identity() / s - xx * (q / (s * (s + q * t)));
                Ok((j, k))
            }
            CoordinateMap::Affine { matrix, .. } => {
                let inv = matrix
                    .try_inverse()
                    .ok_or(Error::SingularJacobian(matrix.determinant()))?;
                Ok((inv, *matrix))
            }
            CoordinateMap::Composed(stages) => {
                let mut j = Matrix3::identity();
                let mut k = Matrix3::identity();
                let mut x = *p;
                for stage in stages {
                    let (js, ks) = stage.jacobian_pair(&x)?;
                    j *= js;
                    k = ks * k;
                    x = stage.map_point(&x).ok_or(Error::Undefined)?;
                }
                Ok((j, k))
            }
        }
    }
}

/// Central-difference estimate of the Jacobian at physical `p`.
///
/// Differentiates the single-valued physical → primed direction and inverts,
/// so it stays well defined for folded maps. Truncation error is O(h²).
pub fn jacobian_fd(map: &CoordinateMap, p: &Point3, h: f64) -> Result<JacobianData> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut k = Matrix3::zeros();
    for c in 0..3 {
        let mut dp = Point3::zeros();
        dp[c] = h;
        let fwd = map.map_point(&(p + dp)).ok_or(Error::Undefined)?;
        let bwd = map.map_point(&(p - dp)).ok_or(Error::Undefined)?;
        k.set_column(c, &((fwd - bwd) / (2.0 * h)));
    }
    let j = k
        .try_inverse()
        .ok_or(Error::SingularJacobian(k.determinant()))?;
    JacobianData::from_parts(j, k)
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn poly_derivative(coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (n, c)| acc * t + n as f64 * c)
}

// Solves r·s(r²) = rp for r ≥ 0. The left side is increasing with slope
// ≥ c0, so the root lies in [0, rp/c0]; safeguarded Newton.
fn invert_radial(coeffs: &[f64], rp: f64) -> f64 {
    let f = |r: f64| r * poly(coeffs, r * r) - rp;
    let df = |r: f64| {
        let t = r * r;
        poly(coeffs, t) + 2.0 * t * poly_derivative(coeffs, t)
    };
    let (mut lo, mut hi) = (0.0, rp / coeffs[0]);
    let mut r = 0.5 * hi;
    for _ in 0..200 {
        let v = f(r);
        if v < 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        let newton = r - v / df(r);
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - r).abs() <= 2.0 * f64::EPSILON * r {
            return next;
        }
        r = next;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &Point3, b: &Point3, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn lens_maps_far_side_back_by_two_b() {
        let lens = CoordinateMap::lens_slab(1.0).unwrap();
        let out = lens.map_point(&Point3::new(1.5, 0.0, 0.0)).unwrap();
        assert_eq!(out, Point3::new(-0.5, 0.0, 0.0));
    }

    #[test]
    fn identity_is_identity() {
        let p = Point3::new(0.3, -2.0, 7.0);
        assert_eq!(CoordinateMap::Identity.map_point(&p), Some(p));
        let jac = CoordinateMap::Identity.jacobian(&p).unwrap();
        assert_eq!(jac.j, Matrix3::identity());
        assert_eq!(jac.det_j, 1.0);
        assert_eq!(jac.gamma_upper, Matrix3::identity());
        assert_eq!(jac.gamma, 1.0);
    }

    #[test]
    fn cloak_compresses_annulus() {
        let cloak = CoordinateMap::cylindrical_cloak(0.5, 1.0).unwrap();
        let out = cloak.map_point(&Point3::new(0.75, 0.0, 0.0)).unwrap();
        assert!(close(&out, &Point3::new(0.5, 0.0, 0.0), 1e-15));
        assert_eq!(cloak.map_point(&Point3::new(0.25, 0.0, 0.0)), None);
    }

    #[test]
    fn lens_preimages_are_triple_inside_imaging_range() {
        let lens = CoordinateMap::lens_slab(1.0).unwrap();
        let pts = lens.preimages(&Point3::new(-0.5, 0.0, 0.0));
        let xs: Vec<f64> = pts.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![-0.5, 0.5, 1.5]);
        let pts = lens.preimages(&Point3::new(-3.0, 0.0, 0.0));
        assert_eq!(pts, vec![Point3::new(-3.0, 0.0, 0.0)]);
    }

    #[test]
    fn cloak_preimage_outside_is_identity() {
        let cloak = CoordinateMap::cylindrical_cloak(0.5, 1.0).unwrap();
        let p = Point3::new(2.0, 0.0, 0.0);
        assert_eq!(cloak.preimages(&p), vec![p]);
        assert!(cloak.preimages(&Point3::zeros()).is_empty());
    }

    #[test]
    fn lens_interior_jacobian_is_reflection() {
        let lens = CoordinateMap::lens_slab(1.0).unwrap();
        let jac = lens.jacobian(&Point3::new(0.5, 0.0, 0.0)).unwrap();
        assert_eq!(jac.j, Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0)));
        assert_eq!(jac.det_j, -1.0);
        assert_eq!(jac.sign, -1.0);
    }

    #[test]
    fn cloak_jacobian_in_local_frame() {
        let cloak = CoordinateMap::cylindrical_cloak(0.5, 1.0).unwrap();
        let jac = cloak.jacobian(&Point3::new(0.75, 0.0, 0.0)).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(0.5, 1.5, 1.0));
        assert!((jac.j - expected).amax() < 1e-15);
        assert!((jac.det_j - 0.75).abs() < 1e-15);
    }

    #[test]
    fn kinks_raise_interface_errors() {
        let lens = CoordinateMap::lens_slab(1.0).unwrap();
        for x in [0.0, 1.0, 1e-13] {
            assert!(matches!(
                lens.jacobian(&Point3::new(x, 0.2, 0.0)),
                Err(Error::Interface(_))
            ));
        }
        let cloak = CoordinateMap::cylindrical_cloak(0.5, 1.0).unwrap();
        for r in [0.5, 1.0] {
            assert!(matches!(
                cloak.jacobian(&Point3::new(0.0, r, 0.0)),
                Err(Error::Interface(_))
            ));
        }
        assert_eq!(
            cloak.jacobian(&Point3::new(0.1, 0.1, 0.0)),
            Err(Error::Undefined)
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CoordinateMap::cylindrical_cloak(1.0, 0.5).is_err());
        assert!(CoordinateMap::cylindrical_cloak(0.0, 0.5).is_err());
        assert!(CoordinateMap::lens_slab(0.0).is_err());
        assert!(CoordinateMap::lens_slab(f64::NAN).is_err());
        assert!(CoordinateMap::radial_polynomial(vec![]).is_err());
        assert!(CoordinateMap::radial_polynomial(vec![1.0, -0.1]).is_err());
        assert!(CoordinateMap::affine(Matrix3::zeros(), Vector3::zeros()).is_err());
    }

    #[test]
    fn fd_jacobian_exact_for_piecewise_linear_maps() {
        let jac = jacobian_fd(&CoordinateMap::Identity, &Point3::new(1.0, 2.0, 3.0), 1e-3).unwrap();
        assert!((jac.j - Matrix3::identity()).amax() < 1e-9);
        let lens = CoordinateMap::lens_slab(1.0).unwrap();
        let jac = jacobian_fd(&lens, &Point3::new(0.5, 0.0, 0.0), 1e-4).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0));
        assert!((jac.j - expected).amax() < 1e-10);
    }

    #[test]
    fn fd_stencil_leaving_domain_is_undefined() {
        let cloak = CoordinateMap::cylindrical_cloak(0.5, 1.0).unwrap();
        let r = jacobian_fd(&cloak, &Point3::new(0.50001, 0.0, 0.0), 1e-3);
        assert_eq!(r, Err(Error::Undefined));
        assert!(jacobian_fd(&cloak, &Point3::new(0.7, 0.0, 0.0), 0.0).is_err());
    }

    #[test]
    fn cloak_about_x_axis_keeps_x_fixed() {
        let cloak = CoordinateMap::CylindricalCloak {
            r1: 0.5,
            r2: 1.0,
            axis: Axis::X,
        };
        let p = Point3::new(3.0, 0.0, 0.75);
        let out = cloak.map_point(&p).unwrap();
        assert!(close(&out, &Point3::new(3.0, 0.0, 0.5), 1e-15));
        let jac = cloak.jacobian(&p).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(1.0, 1.5, 0.5));
        assert!((jac.j - expected).amax() < 1e-15);
    }

    #[test]
    fn radial_polynomial_inverse_round_trips() {
        let m = CoordinateMap::radial_polynomial(vec![0.8, 0.3, 0.05]).unwrap();
        let p = Point3::new(0.4, -1.2, 0.9);
        let pp = m.map_point(&p).unwrap();
        let back = m.preimages(&pp);
        assert_eq!(back.len(), 1);
        assert!(close(&back[0], &p, 1e-13));
    }
}
