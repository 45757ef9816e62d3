//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transmedia::coordmaps::{jacobian_fd, CoordinateMap, Point3};
use transmedia::fdfd::{
    assemble_tm, scattering_metrics, solve, uniform_medium, Boundary, CloakRegion, Domain, MediumSample,
    PlaneWaveSource, Rect, SolveOptions, TmProblem,
};
use transmedia::fields::{
    covariant_divergence, maxwell_residual, plane_wave, spherical_wave_scalar, transform_potential,
    transform_scalar, Direction, Grid, JacobianField, PhysicalConstants, PlaneWave, SphericalWave,
};
use transmedia::media::{
    material_tensors, material_tensors_metric, relative_difference, Handedness, MaterialTensors, TensorField,
};
use transmedia::modes::{
    energy_integral, gram_matrix, instantaneous_energy, scalar_product_drift, CurlScheme, Mode,
};
use transmedia::{CVec3, C64};
use transmedia_cli::commands::build_problem;
use transmedia_cli::RunConfig;

const NAT: PhysicalConstants = PhysicalConstants::natural();

type Check = Result<String, String>;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn cloak() -> CoordinateMap {
    CoordinateMap::cylindrical_cloak(0.5, 1.0).unwrap()
}

fn random_affine(rng: &mut ChaCha8Rng, flip: bool) -> CoordinateMap {
    loop {
        let mut m: Matrix3<f64> = Matrix3::from_fn(|r, c| if r == c { 1.0 } else { 0.0 } + rng.random_range(-0.4..0.4));
        if flip {
            m.column_mut(0).neg_mut();
        }
        if m.determinant().abs() > 0.2 {
            let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            return CoordinateMap::affine(m, t).unwrap();
        }
    }
}

fn random_radial(rng: &mut ChaCha8Rng) -> CoordinateMap {
    let coeffs = vec![rng.random_range(0.5..2.0), rng.random_range(0.0..0.5), rng.random_range(0.0..0.1)];
    CoordinateMap::radial_polynomial(coeffs).unwrap()
}

fn random_map(rng: &mut ChaCha8Rng, kind: usize) -> CoordinateMap {
    match kind {
        0 => CoordinateMap::Identity,
        1 => {
            let r1 = rng.random_range(0.2..1.0);
            CoordinateMap::cylindrical_cloak(r1, r1 + rng.random_range(0.2..1.0)).unwrap()
        }
        2 => CoordinateMap::lens_slab(rng.random_range(0.3..2.0)).unwrap(),
        3 => random_radial(rng),
        4 => {
            let flip = rng.random_bool(0.5);
            random_affine(rng, flip)
        }
        _ => CoordinateMap::composed(vec![random_affine(rng, false), random_radial(rng)]).unwrap(),
    }
}

fn random_point(rng: &mut ChaCha8Rng, half: f64) -> Point3 {
    Point3::new(rng.random_range(-half..half), rng.random_range(-half..half), rng.random_range(-half..half))
}

fn tensor_routes() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut samples = Vec::new();
    while samples.len() < 1000 {
        let map = random_map(&mut rng, samples.len() % 6);
        let p = random_point(&mut rng, 2.5);
        if let Ok(jac) = map.jacobian(&p) {
            samples.push((jac, rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)));
        }
    }
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (jac, eps, mu) in &samples {
        let a = material_tensors(jac, *eps, *mu).map_err(|e| e.to_string())?;
        let b = material_tensors_metric(jac, *eps, *mu).map_err(|e| e.to_string())?;
        worst = worst.max(relative_difference(&a.eps, &b.eps)).max(relative_difference(&a.mu, &b.mu));
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-12 && secs < 1.0, format!("worst {worst:.2e} over 1000 samples in {secs:.3} s"))
}

fn lens_medium() -> Check {
    let map = CoordinateMap::lens_slab(1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let p = Point3::new(rng.random_range(1e-3..1.0 - 1e-3), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0));
        let jac = map.jacobian(&p).map_err(|e| e.to_string())?;
        if jac.det_j != -1.0 {
            return Err(format!("det J = {} at {p:?}", jac.det_j));
        }
        for t in [material_tensors(&jac, 1.0, 1.0), material_tensors_metric(&jac, 1.0, 1.0)] {
            let t = t.map_err(|e| e.to_string())?;
            if t.handedness != Handedness::Left {
                return Err(format!("right-handed at {p:?}"));
            }
            worst = worst.max((t.eps + Matrix3::identity()).amax()).max((t.mu + Matrix3::identity()).amax());
        }
    }
    ensure(worst <= 1e-12, format!("max |ε + I|, |μ + I| = {worst:.2e} on 500 points, det J = -1, left-handed"))
}

fn fd_order(map: &CoordinateMap, p: &Point3, h: f64) -> Option<f64> {
    let exact = map.jacobian(p).ok()?.j;
    let e1 = (jacobian_fd(map, p, h).ok()?.j - exact).amax();
    let e2 = (jacobian_fd(map, p, h / 2.0).ok()?.j - exact).amax();
    Some((e1 / e2).log2())
}

fn jacobian_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut lo, mut hi, mut n) = (f64::INFINITY, 0.0f64, 0);
    let smooth: Vec<(&str, CoordinateMap, fn(&mut ChaCha8Rng) -> Point3)> = vec![
        ("cloak", cloak(), |rng| {
            let (r, phi) = (rng.random_range(0.6..0.95), rng.random_range(0.0..2.0 * PI));
            Point3::new(r * phi.cos(), r * phi.sin(), rng.random_range(-1.0..1.0))
        }),
        ("radial", CoordinateMap::radial_polynomial(vec![1.0, 0.3, 0.05]).unwrap(), |rng| random_point(rng, 1.0)),
        (
            "composed",
            CoordinateMap::composed(vec![
                CoordinateMap::affine(Matrix3::new(1.1, 0.2, 0.0, -0.1, 0.9, 0.3, 0.0, 0.1, 1.0), Vector3::new(0.2, -0.1, 0.0))
                    .unwrap(),
                CoordinateMap::radial_polynomial(vec![0.8, 0.4, 0.02]).unwrap(),
            ])
            .unwrap(),
            |rng| random_point(rng, 1.0),
        ),
    ];
    for (name, map, draw) in &smooth {
        for _ in 0..20 {
            let p = draw(&mut rng);
            let o = fd_order(map, &p, 0.02).ok_or(format!("{name}: no Jacobian at {p:?}"))?;
            if !(1.8..=2.2).contains(&o) {
                return Err(format!("{name}: order {o:.3} at {p:?}"));
            }
            (lo, hi, n) = (lo.min(o), hi.max(o), n + 1);
        }
    }
    // piecewise-linear maps: central differences are exact off the kinks
    let mut linear = 0.0f64;
    for map in [CoordinateMap::Identity, CoordinateMap::lens_slab(1.0).unwrap(), random_affine(&mut rng, true)] {
        for p in [Point3::new(-0.5, 0.2, 0.0), Point3::new(0.4, 0.1, 0.3), Point3::new(1.7, -0.3, 0.2)] {
            let exact = map.jacobian(&p).map_err(|e| e.to_string())?.j;
            linear = linear.max((jacobian_fd(&map, &p, 1e-3).map_err(|e| e.to_string())?.j - exact).amax());
        }
    }
    ensure(
        linear < 1e-10,
        format!("order in [{lo:.3}, {hi:.3}] on {n} smooth points; linear maps exact to {linear:.1e}"),
    )
}

fn square(half: f64, n: usize) -> Grid {
    Grid::cell_centered(Point3::new(-half, -half, 0.0), Point3::new(half, half, 0.0), [n, n, 1]).unwrap()
}

fn in_plane_wave() -> PlaneWave {
    let k = Vector3::new(0.6, 0.8, 0.0) * (2.0 * PI);
    plane_wave(k, CVec3::new(c(-0.8), c(0.6), c(0.0)), c(1.0), 1.0, 1.0, &NAT).unwrap()
}

fn z_wave() -> PlaneWave {
    plane_wave(Vector3::new(2.0 * PI, 0.0, 0.0), CVec3::new(c(0.0), c(0.0), c(1.0)), c(1.0), 1.0, 1.0, &NAT).unwrap()
}

fn identity_region() -> Check {
    let grid = square(3.0, 121);
    let map = cloak();
    let mut worst = 0.0f64;
    let mut interior = 0;
    for wave in [in_plane_wave(), z_wave()] {
        let primed = wave.sample(&grid);
        let a = transform_potential(&wave, &map, &grid, Direction::ToPhysical).map_err(|e| e.to_string())?;
        for i in 0..grid.len() {
            let p = grid.point(i);
            let r = p.x.hypot(p.y);
            if r > 1.0 {
                worst = worst.max((a.values[i] - primed.values[i]).norm() / primed.values[i].norm());
            } else if r < 0.5 {
                if !a.mask[i] || a.values[i] != CVec3::zeros() {
                    return Err(format!("unmasked interior point {p:?}"));
                }
                interior += 1;
            }
        }
    }
    let src = Point3::new(-1.5, 0.0, 0.0);
    let s = spherical_wave_scalar(src, 2.0 * PI, &grid).map_err(|e| e.to_string())?;
    let phys = transform_scalar(&SphericalWave::new(src, 2.0 * PI).unwrap(), &map, &grid, Direction::ToPhysical);
    for i in 0..grid.len() {
        let p = grid.point(i);
        let r = p.x.hypot(p.y);
        if r > 1.0 {
            worst = worst.max((phys.values[i] - s.values[i]).norm() / s.values[i].norm());
        } else if r < 0.5 && !(phys.mask[i] && phys.values[i] == c(0.0)) {
            return Err(format!("unmasked interior point {p:?}"));
        }
    }
    ensure(worst <= 1e-12, format!("outside R2 relative {worst:.1e}; {interior} interior samples masked"))
}

fn cloak_region(p: &Point3) -> bool {
    let r = p.x.hypot(p.y);
    r > 0.6 && (r - 1.0).abs() > 0.05
}

fn covariance_residuals() -> Check {
    let wave = in_plane_wave();
    let map = cloak();
    let mut gauge = Vec::new();
    let mut maxwell = Vec::new();
    for n in [128, 256, 512] {
        let grid = square(1.5, n);
        let a = transform_potential(&wave, &map, &grid, Direction::ToPhysical).map_err(|e| e.to_string())?;
        let div = covariant_divergence(&a, &JacobianField::from_map(&map, &grid), 1.0).map_err(|e| e.to_string())?;
        let (sum, count) = (0..grid.len())
            .filter(|&i| !div.mask[i] && cloak_region(&grid.point(i)))
            .fold((0.0, 0), |(s, n), i| (s + div.values[i].norm_sqr(), n + 1));
        gauge.push((sum / count as f64).sqrt() / wave.k.norm());
        let tensors = TensorField::from_map(&map, &grid, 1.0, 1.0).map_err(|e| e.to_string())?;
        maxwell.push(maxwell_residual(&a, &tensors, wave.omega, &NAT, Some(&cloak_region)).map_err(|e| e.to_string())?);
    }
    let orders = |e: &[f64]| [(e[0] / e[1]).log2(), (e[1] / e[2]).log2()];
    let (og, om) = (orders(&gauge), orders(&maxwell));
    let ok = og.iter().chain(&om).all(|o| (1.8..=2.2).contains(o));
    ensure(
        ok,
        format!(
            "gauge orders {:.3}, {:.3} (final {:.1e}); Maxwell orders {:.3}, {:.3} (final {:.1e})",
            og[0], og[1], gauge[2], om[0], om[1], maxwell[2]
        ),
    )
}

fn box_modes() -> (TensorField, Vec<Mode>) {
    let grid = Grid::new(Point3::zeros(), [0.25; 3], [8, 8, 8]).unwrap();
    let pol = |x: f64, y: f64, z: f64| CVec3::new(c(x), c(y), c(z));
    let specs = [
        ([1, 0, 0], pol(0.0, 1.0, 0.0)),
        ([-1, 0, 0], pol(0.0, 1.0, 0.0)),
        ([0, 1, 0], pol(0.0, 0.0, 1.0)),
        ([0, -1, 0], pol(1.0, 0.0, 0.0)),
        ([0, 0, 1], pol(1.0, 0.0, 0.0)),
        ([0, 0, -1], pol(0.0, 1.0, 0.0)),
        ([1, 1, 0], pol(0.0, 0.0, 1.0)),
        ([0, 1, 1], pol(1.0, 0.0, 0.0)),
    ];
    let modes = specs
        .iter()
        .enumerate()
        .map(|(i, (n, p))| Mode::box_mode(&grid, *n, *p, 1.0, 1.0, &NAT, i as i64).unwrap())
        .collect();
    (TensorField::uniform(&grid, 1.0, 1.0), modes)
}

fn mode_layer() -> Check {
    let (t, modes) = box_modes();
    let gram = gram_matrix(&modes, &t, &NAT).map_err(|e| e.to_string())?;
    let slowest = modes.iter().map(|m| m.omega).fold(f64::INFINITY, f64::min);
    let times: Vec<f64> = (1..=200).map(|i| i as f64 * 10.0 * 2.0 * PI / slowest / 200.0).collect();
    let mut drift = 0.0f64;
    for j in 0..modes.len() {
        for k in 0..modes.len() {
            for a in [modes[j].clone(), modes[j].conjugated()] {
                drift = drift.max(scalar_product_drift(&a, &modes[k], &times, &t, &NAT).map_err(|e| e.to_string())?);
            }
        }
    }
    // counter-propagating pair coupled only through an antisymmetric y–z block
    let grid = t.grid.clone();
    let m1 = Mode::box_mode(&grid, [1, 0, 0], CVec3::new(c(0.0), c(1.0), c(0.0)), 1.0, 1.0, &NAT, 0).unwrap();
    let m2 = Mode::box_mode(&grid, [-1, 0, 0], CVec3::new(c(0.0), c(0.0), c(1.0)), 1.0, 1.0, &NAT, 1).unwrap();
    let mut eps = Matrix3::identity();
    eps[(1, 2)] = 0.1;
    eps[(2, 1)] = -0.1;
    let cell = MaterialTensors {
        eps,
        mu: Matrix3::identity(),
        eps_prime: 1.0,
        mu_prime: 1.0,
        handedness: Handedness::Right,
    };
    let broken = TensorField {
        grid: grid.clone(),
        cells: vec![Some(cell); grid.len()],
    };
    let period = 2.0 * PI / m1.omega;
    let times: Vec<f64> = (1..=100).map(|i| i as f64 * period / 10.0).collect();
    let counter = scalar_product_drift(&m1.conjugated(), &m2, &times, &broken, &NAT).map_err(|e| e.to_string())?;
    let ok = gram.max_diag_err <= 1e-8 && gram.max_off_diag <= 1e-8 && gram.max_gstar <= 1e-8 && drift <= 1e-8 && counter > 1e-3;
    ensure(
        ok,
        format!(
            "|G - I| {:.1e}, |Gstar| {:.1e}, drift {drift:.1e} over 10 periods, asymmetric-ε drift {counter:.2e}",
            gram.max_diag_err.max(gram.max_off_diag),
            gram.max_gstar
        ),
    )
}

fn energy() -> Check {
    let (t, modes) = box_modes();
    let mut worst = 0.0f64;
    for m in &modes {
        let one = [(c(1.0), m)];
        let e = energy_integral(&one, &t, &NAT, CurlScheme::Spectral).map_err(|e| e.to_string())?;
        // time average of the instantaneous density over one period
        let samples = 12;
        let avg = (0..samples)
            .map(|s| {
                let time = s as f64 * 2.0 * PI / m.omega / samples as f64;
                instantaneous_energy(&one, time, &t, &NAT, CurlScheme::Spectral).unwrap()
            })
            .sum::<f64>()
            / samples as f64;
        let quantum = NAT.hbar * m.omega;
        worst = worst.max((e / quantum - 1.0).abs()).max((avg / quantum - 1.0).abs());
    }
    ensure(worst <= 1e-6, format!("max |E/(ħω) - 1| = {worst:.1e} over 8 modes"))
}

fn fdfd_control() -> Check {
    let pml = Boundary::Pml {
        cells: 10,
        reflection: 1e-6,
    };
    let wave = |tf: f64| PlaneWaveSource {
        direction: [0.6, 0.8],
        amplitude: c(1.0),
        tf: Rect {
            lo: [-tf, -tf],
            hi: [tf, tf],
        },
    };
    let vac = TmProblem::new(Domain::square(1.0, 2.0 / 64.0), pml, 4.0 * PI, &NAT, (1.0, 1.0), &uniform_medium(1.0, 1.0))
        .and_then(|p| p.with_plane_wave(wave(0.6)))
        .map_err(|e| e.to_string())?;
    let sol = solve(&assemble_tm(&vac).map_err(|e| e.to_string())?, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let inc = vac.incident_field().map_err(|e| e.to_string())?;
    let tf = vac.plane_wave.unwrap().tf;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..vac.grid.len() {
        let p = vac.grid.point(i);
        if tf.contains(p.x, p.y) {
            num += (sol.ez.values[i] - inc.values[i]).norm_sqr();
            den += inc.values[i].norm_sqr();
        }
    }
    let vacuum_err = (num / den).sqrt();

    let disc = |p: &Point3| {
        Ok(MediumSample::Material {
            eps_z: if p.x.hypot(p.y) < 0.5 { 50.0 } else { 1.0 },
            mu: Matrix2::identity(),
        })
    };
    let mut pw = wave(1.5);
    pw.direction = [1.0, 0.0];
    let dp = TmProblem::new(Domain::square(2.0, 0.05), pml, PI, &NAT, (1.0, 1.0), &disc)
        .and_then(|p| p.with_plane_wave(pw))
        .map_err(|e| e.to_string())?;
    let sol = solve(&assemble_tm(&dp).map_err(|e| e.to_string())?, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let region = CloakRegion {
        center: [0.0, 0.0],
        r_inner: 0.5,
        r_outer: 1.0,
    };
    let inc = dp.incident_field().map_err(|e| e.to_string())?;
    let scatter = scattering_metrics(&sol, &dp, &region, &inc).map_err(|e| e.to_string())?.external_scatter_norm;
    ensure(
        vacuum_err <= 1e-5 && (0.1..10.0).contains(&scatter),
        format!("vacuum total-field error {vacuum_err:.1e}; ε = 50 disc external scatter {scatter:.3}"),
    )
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn cloak_solve(ppw: f64) -> Result<(f64, f64, f64, usize), String> {
    let text = std::fs::read_to_string(root().join("configs/cloak.json")).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::from_json(&text).map_err(|e| e.to_string())?;
    cfg.solve.cells_per_wavelength = ppw;
    let (problem, map) = build_problem(&cfg).map_err(|e| format!("{e:?}"))?;
    let system = assemble_tm(&problem).map_err(|e| e.to_string())?;
    let sol = solve(&system, &SolveOptions::default()).map_err(|e| e.to_string())?;
    let region = CloakRegion {
        center: [0.0, 0.0],
        r_inner: 0.5,
        r_outer: 1.0,
    };
    let analytic = problem.transported_incident(&map).map_err(|e| e.to_string())?;
    let m = scattering_metrics(&sol, &problem, &region, &analytic).map_err(|e| e.to_string())?;
    Ok((m.external_scatter_norm, m.mapped_field_error, m.interior_leak_norm, system.dimension()))
}

fn cloak_validation() -> Check {
    let (s1, e1, l1, n1) = cloak_solve(80.0)?;
    let (s2, e2, l2, n2) = cloak_solve(160.0)?;
    let ok = s1 <= 0.05 && s2 <= 0.05 && s2 < s1 && e2 < e1 && l1 == 0.0 && l2 == 0.0;
    ensure(
        ok,
        format!(
            "80 ppw ({n1} unknowns): scatter {s1:.4}, mapped error {e1:.4}; \
             160 ppw ({n2} unknowns): scatter {s2:.4}, mapped error {e2:.4}"
        ),
    )
}

fn figure_goldens() -> Check {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut files = 0;
    for name in ["cloak", "lens", "lens_outside"] {
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            let status = Command::new(env!("CARGO_BIN_EXE_transmedia"))
                .args(["wave", "--config"])
                .arg(root().join(format!("configs/{name}.json")))
                .args(["--grid", "40", "--out"])
                .arg(dir.path())
                .env_remove(transmedia_cli::config::OUT_DIR_ENV)
                .output()
                .map_err(|e| e.to_string())?
                .status;
            if !status.success() {
                return Err(format!("{name}: wave exited with {status}"));
            }
            for stem in ["wave_primed", "wave_physical"] {
                for ext in ["pgm", "csv"] {
                    let file = format!("{stem}.{ext}");
                    let got = std::fs::read(dir.path().join(&file)).map_err(|e| e.to_string())?;
                    let want = std::fs::read(golden.join(name).join(&file)).map_err(|e| e.to_string())?;
                    if got != want {
                        return Err(format!("{name}/{file} differs from its golden"));
                    }
                    files += 1;
                }
            }
        }
    }
    Ok(format!("{files} rasters from cloak, lens and lens_outside match their goldens byte for byte"))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("tensor construction equivalence", tensor_routes),
        ("lens medium", lens_medium),
        ("Jacobian oracle", jacobian_oracle),
        ("identity-region exactness", identity_region),
        ("covariance residual", covariance_residuals),
        ("mode layer", mode_layer),
        ("energy correspondence", energy),
        ("FDFD control", fdfd_control),
        ("FDFD cloak validation", cloak_validation),
        ("figure reproduction", figure_goldens),
    ];
    let total = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name} [{secs:.1} s]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} [{secs:.1} s]: {detail}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1} s",
        criteria.len() - failed,
        criteria.len(),
        total.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
