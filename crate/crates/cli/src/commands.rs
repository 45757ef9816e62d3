//! Subcommand bodies.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;
use transmedia::coordmaps::{CoordinateMap, Point3};
use transmedia::fdfd::{
    assemble_tm, scattering_metrics, solve, Boundary, CloakRegion, Domain, PlaneWaveSource,
    Rect, SolveMethod, SolveOptions, TmProblem,
};
use transmedia::fields::{
    covariant_divergence, maxwell_residual, plane_wave, spherical_wave_scalar,
    transform_scalar, ComplexVectorField, Direction, FieldRole, Grid, JacobianField, PhysicalConstants,
    SphericalWave, VectorSource,
};
use transmedia::media::{
    material_tensors, material_tensors_metric, relative_difference, validate_tensors, write_tensor_csv,
    TensorField, ValidationReport,
};
use transmedia::modes::{energy_integral, expand_field, gram_matrix, CurlScheme, FieldState, GramReport, Mode};
use transmedia::{CVec3, C64};

use crate::config::{ModesConfig, RunConfig, SolverChoice, SourceConfig};
use crate::render::render_raster;
use crate::CliError;

/// Agreement required between the two tensor constructions.
pub const ROUTE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    Tensor,
    Wave,
    Validate,
    Modes,
    Solve,
}

pub fn dispatch(which: Which, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    match which {
        Which::Tensor => tensor(cfg, out),
        Which::Wave => wave(cfg, out),
        Which::Validate => validate(cfg, out),
        Which::Modes => modes(cfg, out),
        Which::Solve => solve_cmd(cfg, out),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Failed(format!("{}: {e}", path.display()))
}

fn tensor(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let map = cfg.map.build()?;
    let grid = cfg.grid.build()?;
    let field = TensorField::from_map(&map, &grid, cfg.background.eps, cfg.background.mu)?;
    let path = out.join("tensors.csv");
    let mut w = create(&path)?;
    write_tensor_csv(&mut w, &field)
        .and_then(|_| w.flush())
        .map_err(io_at(&path))?;
    let missing = field.cells.iter().filter(|c| c.is_none()).count();
    println!(
        "tensor: {} points ({missing} without tensor) -> {}",
        grid.len(),
        path.display()
    );
    Ok(())
}

fn wave(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let map = cfg.map.build()?;
    let grid = cfg.grid.build()?;
    let Some(SourceConfig::Spherical { position, k }) = cfg.source.clone() else {
        return Err(CliError::Config("`wave` needs a `source` entry".into()));
    };
    let source = Point3::from(position);
    let primed = spherical_wave_scalar(source, k, &grid)?;
    let physical = transform_scalar(&SphericalWave::new(source, k)?, &map, &grid, Direction::ToPhysical);
    let mut bytes = render_raster(&primed, out, "wave_primed")?;
    bytes += render_raster(&physical, out, "wave_physical")?;
    println!(
        "wave: {}x{} rasters, {bytes} bytes -> {}",
        grid.counts()[0],
        grid.counts()[1],
        out.display()
    );
    Ok(())
}

/// Distance from `p` to the nearest kink of `map` (0 inside a cloak's hidden
/// disc), infinite for smooth maps. Cylindrical maps are taken about z.
pub fn interface_distance(map: &CoordinateMap, p: &Point3) -> f64 {
    match map {
        CoordinateMap::CylindricalCloak { r1, r2, .. } => {
            let r = p.x.hypot(p.y);
            if r < *r1 {
                0.0
            } else {
                (r - r1).min((r - r2).abs())
            }
        }
        CoordinateMap::LensSlab { b } => p.x.abs().min((p.x - b).abs()),
        _ => f64::INFINITY,
    }
}

// Physical-space potential with nodes that sit exactly on an interface
// masked; the residual region excludes them anyway.
fn transport_off_interfaces(
    wave: &dyn VectorSource,
    map: &CoordinateMap,
    grid: &Grid,
) -> Result<ComplexVectorField, CliError> {
    let mut a = ComplexVectorField::zeros(grid.clone(), wave.omega(), FieldRole::A);
    for i in 0..grid.len() {
        let p = grid.point(i);
        let (Some(pp), Ok(jac)) = (map.map_point(&p), map.jacobian(&p)) else {
            a.mask[i] = true;
            continue;
        };
        let v = wave.value_at(&pp);
        let m = jac.j_inv.transpose();
        a.values[i] = CVec3::from_fn(|r, _| (0..3).map(|c| v[c] * m[(r, c)]).sum());
    }
    Ok(a)
}

// Folds per-point reports into one entry per check: worst measured value for
// toleranced checks, number of failing points for sign checks.
fn merge_reports(reports: &[ValidationReport]) -> ValidationReport {
    let mut merged = ValidationReport::default();
    let Some(first) = reports.first() else {
        return merged;
    };
    for (slot, proto) in first.checks.iter().enumerate() {
        let column = reports.iter().filter_map(|r| r.checks.get(slot));
        let passed = column.clone().all(|c| c.passed);
        let measured = if proto.tolerance > 0.0 {
            column.fold(0.0f64, |m, c| m.max(c.measured))
        } else {
            column.filter(|c| !c.passed).count() as f64
        };
        merged.push(proto.name, measured, proto.tolerance, passed);
    }
    merged
}

fn build_modes(cfg: &ModesConfig, eps: f64, mu: f64, c: &PhysicalConstants) -> Result<(Grid, Vec<Mode>), CliError> {
    let grid = Grid::cell_centered(Point3::zeros(), Point3::from(cfg.box_size), cfg.counts)?;
    let modes = cfg
        .modes
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let pol = CVec3::new(m.pol[0].into(), m.pol[1].into(), m.pol[2].into());
            Mode::box_mode(&grid, m.n, pol, eps, mu, c, i as i64)
                .map_err(|e| CliError::Config(format!("modes.modes[{i}]: {e}")))
        })
        .collect::<Result<_, _>>()?;
    Ok((grid, modes))
}

fn validate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let map = cfg.map.build()?;
    let grid = cfg.grid.build()?;
    let (eps, mu) = (cfg.background.eps, cfg.background.mu);
    let constants = cfg.constants.constants();
    let mut report = ValidationReport::default();

    let mut per_point = Vec::new();
    let mut route = 0.0f64;
    for i in 0..grid.len() {
        let Ok(jac) = map.jacobian(&grid.point(i)) else {
            continue;
        };
        let direct = material_tensors(&jac, eps, mu)?;
        let metric = material_tensors_metric(&jac, eps, mu)?;
        route = route
            .max(relative_difference(&direct.eps, &metric.eps))
            .max(relative_difference(&direct.mu, &metric.mu));
        per_point.push(validate_tensors(&direct, &jac));
    }
    report.extend(merge_reports(&per_point));
    report.push("route_equivalence", route, ROUTE_TOL, route <= ROUTE_TOL);

    let (mode_grid, modes) = build_modes(&cfg.modes, eps, mu, &constants)?;
    let gram = gram_matrix(&modes, &TensorField::uniform(&mode_grid, eps, mu), &constants)?;
    let tol = cfg.tolerances.gram_tol;
    report.push("gram_orthonormality", gram.worst(), tol, gram.is_orthonormal(tol));

    let v = &cfg.validate;
    let pol = CVec3::new(v.pol[0].into(), v.pol[1].into(), v.pol[2].into());
    let wave = plane_wave(Vector3::from(v.k), pol, C64::new(1.0, 0.0), eps, mu, &constants)
        .map_err(|e| CliError::Config(format!("validate: {e}")))?;
    let a = transport_off_interfaces(&wave, &map, &grid)?;
    let tensors = TensorField::from_map(&map, &grid, eps, mu)?;
    let margin = v.interface_margin;
    let region = |p: &Point3| interface_distance(&map, p) > margin;
    let residual = maxwell_residual(&a, &tensors, wave.omega, &constants, Some(&region))?;
    report.push("maxwell_residual", residual, v.residual_tol, residual <= v.residual_tol);
    let div = covariant_divergence(&a, &JacobianField::from_map(&map, &grid), eps)?;
    let (sum, n) = (0..grid.len())
        .filter(|&i| !div.mask[i] && region(&grid.point(i)))
        .fold((0.0, 0usize), |(s, n), i| (s + div.values[i].norm_sqr(), n + 1));
    let gauge = if n > 0 {
        (sum / n as f64).sqrt() / (eps.abs() * wave.k.norm())
    } else {
        0.0
    };
    report.push("covariant_gauge", gauge, v.residual_tol, gauge <= v.residual_tol);

    let path = out.join("validation.txt");
    let mut w = create(&path)?;
    for c in &report.checks {
        let line = format!(
            "{:<20} {:<4} measured={:.6e} tolerance={:.3e}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.measured,
            c.tolerance
        );
        writeln!(w, "{line}").map_err(io_at(&path))?;
        println!("{line}");
    }
    w.flush().map_err(io_at(&path))?;
    if report.passed() {
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().iter().map(|c| c.name).collect();
        Err(CliError::Failed(format!("validation failed: {}", names.join(", "))))
    }
}

fn write_gram(path: &Path, gram: &GramReport) -> Result<(), CliError> {
    let mut w = create(path)?;
    let io = io_at(path);
    writeln!(w, "j,k,re_g,im_g,re_gstar,im_gstar").map_err(&io)?;
    for j in 0..gram.g.nrows() {
        for k in 0..gram.g.ncols() {
            let (g, s) = (gram.g[(j, k)], gram.gstar[(j, k)]);
            writeln!(w, "{j},{k},{:.16e},{:.16e},{:.16e},{:.16e}", g.re, g.im, s.re, s.im).map_err(&io)?;
        }
    }
    w.flush().map_err(&io)
}

fn modes(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let constants = cfg.constants.constants();
    let (eps, mu) = (cfg.background.eps, cfg.background.mu);
    let (grid, modes) = build_modes(&cfg.modes, eps, mu, &constants)?;
    let tensors = TensorField::uniform(&grid, eps, mu);
    let gram = gram_matrix(&modes, &tensors, &constants)?;
    write_gram(&out.join("gram.csv"), &gram)?;

    let amps: Vec<C64> = (0..modes.len())
        .map(|i| {
            let [re, im] = cfg.modes.coefficients.get(i).copied().unwrap_or([0.0, 0.0]);
            C64::new(re, im)
        })
        .collect();
    let terms: Vec<(C64, &Mode)> = amps.iter().copied().zip(&modes).collect();
    let state = FieldState::synthesize(&terms)?;
    let path = out.join("modes.txt");
    let mut summary = create(&path)?;
    let io = io_at(&path);
    writeln!(
        summary,
        "max_diag_err={:.6e} max_off_diag={:.6e} max_gstar={:.6e}",
        gram.max_diag_err, gram.max_off_diag, gram.max_gstar
    )
    .map_err(&io)?;
    let mut failed = Vec::new();
    if gram.max_diag_err > cfg.tolerances.quad_tol {
        failed.push("mode normalization");
    }
    match expand_field(&state, &modes, &tensors, &constants, cfg.tolerances.gram_tol) {
        Ok(coeffs) => {
            let cpath = out.join("coefficients.csv");
            let mut w = create(&cpath)?;
            let cio = io_at(&cpath);
            writeln!(w, "label,re_in,im_in,re_out,im_out").map_err(&cio)?;
            for ((label, a_in), a_out) in coeffs.labels.iter().zip(&amps).zip(&coeffs.coeffs) {
                writeln!(w, "{label},{:.16e},{:.16e},{:.16e},{:.16e}", a_in.re, a_in.im, a_out.re, a_out.im)
                    .map_err(&cio)?;
            }
            w.flush().map_err(&cio)?;
            writeln!(summary, "reconstruction_residual={:.6e}", coeffs.reconstruction_residual).map_err(&io)?;
        }
        Err(e) => {
            writeln!(summary, "expansion: {e}").map_err(&io)?;
            failed.push("gram orthonormality");
        }
    }
    for m in &modes {
        let energy = energy_integral(&[(C64::new(1.0, 0.0), m)], &tensors, &constants, CurlScheme::Spectral)?;
        writeln!(
            summary,
            "mode {} omega={:.16e} energy/(hbar*omega)={:.16e}",
            m.label,
            m.omega,
            energy / (constants.hbar * m.omega)
        )
        .map_err(&io)?;
    }
    summary.flush().map_err(&io)?;
    println!(
        "modes: {} modes, Gram worst deviation {:.3e} -> {}",
        modes.len(),
        gram.worst(),
        out.display()
    );
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("mode checks failed: {}", failed.join(", "))))
    }
}

#[derive(Debug, Serialize)]
struct MetricsReport {
    external_scatter_norm: f64,
    interior_leak_norm: f64,
    mapped_field_error: f64,
    iterations: usize,
    relative_residual: f64,
    unknowns: usize,
    solver: &'static str,
}

/// Builds the scattering problem described by `cfg`.
pub fn build_problem(cfg: &RunConfig) -> Result<(TmProblem, CoordinateMap), CliError> {
    let map = cfg.map.build()?;
    let constants = cfg.constants.constants();
    let s = &cfg.solve;
    let h = s.wavelength / s.cells_per_wavelength;
    let omega = 2.0 * std::f64::consts::PI * constants.c / s.wavelength;
    let problem = TmProblem::from_map(
        Domain::square(s.half_width, h),
        Boundary::Pml {
            cells: s.pml_cells,
            reflection: s.pml_reflection,
        },
        omega,
        &constants,
        &map,
        cfg.background.eps,
        cfg.background.mu,
    )?
    .with_plane_wave(PlaneWaveSource {
        direction: s.direction,
        amplitude: C64::new(1.0, 0.0),
        tf: Rect {
            lo: [-s.tf_half_width; 2],
            hi: [s.tf_half_width; 2],
        },
    })?;
    Ok((problem, map))
}

fn solve_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let (problem, map) = build_problem(cfg)?;
    let system = assemble_tm(&problem)?;
    let s = &cfg.solve;
    let options = SolveOptions {
        tol: cfg.tolerances.solver,
        max_iter: s.max_iter,
        method: match s.solver {
            SolverChoice::Auto => SolveMethod::Auto,
            SolverChoice::Direct => SolveMethod::Direct,
            SolverChoice::Bicgstab => SolveMethod::Bicgstab,
            SolverChoice::Gmres => SolveMethod::Gmres,
        },
        restart: s.restart,
    };
    let sol = solve(&system, &options)?;
    let region = match map {
        CoordinateMap::CylindricalCloak { r1, r2, .. } => CloakRegion {
            center: [0.0, 0.0],
            r_inner: r1,
            r_outer: r2,
        },
        _ => CloakRegion {
            center: [0.0, 0.0],
            r_inner: 0.0,
            r_outer: 0.0,
        },
    };
    let analytic = problem.transported_incident(&map)?;
    let m = scattering_metrics(&sol, &problem, &region, &analytic)?;
    render_raster(&sol.ez, out, "ez")?;
    let report = MetricsReport {
        external_scatter_norm: m.external_scatter_norm,
        interior_leak_norm: m.interior_leak_norm,
        mapped_field_error: m.mapped_field_error,
        iterations: sol.iterations,
        relative_residual: sol.relative_residual,
        unknowns: system.dimension(),
        solver: match sol.method {
            SolveMethod::Direct => "direct",
            SolveMethod::Bicgstab => "bicgstab",
            SolveMethod::Gmres | SolveMethod::Auto => "gmres",
        },
    };
    let text = serde_json::to_string_pretty(&report).expect("metrics serialize");
    let path = out.join("metrics.json");
    std::fs::write(&path, format!("{text}\n")).map_err(io_at(&path))?;
    println!("{text}");
    Ok(())
}
