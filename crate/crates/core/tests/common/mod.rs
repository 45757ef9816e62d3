#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use transmedia::coordmaps::{CoordinateMap, Point3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cloak() -> CoordinateMap {
    CoordinateMap::cylindrical_cloak(0.5, 1.0).unwrap()
}

pub fn lens() -> CoordinateMap {
    CoordinateMap::lens_slab(1.0).unwrap()
}

pub fn random_point(rng: &mut impl Rng, half: f64) -> Point3 {
    Point3::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

/// A well-conditioned random affine map; `flip` forces det < 0.
pub fn random_affine(rng: &mut impl Rng, flip: bool) -> CoordinateMap {
    loop {
        let m = Matrix3::from_fn(|r, c| {
            let base: f64 = if r == c { 1.0 } else { 0.0 };
            base + rng.random_range(-0.4..0.4)
        });
        let m = if flip {
            m * Matrix3::from_diagonal(&Vector3::new(-1.0, 1.0, 1.0))
        } else {
            m
        };
        if m.determinant().abs() > 0.2 {
            let t = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            return CoordinateMap::affine(m, t).unwrap();
        }
    }
}

pub fn random_radial(rng: &mut impl Rng) -> CoordinateMap {
    CoordinateMap::radial_polynomial(vec![
        rng.random_range(0.5..2.0),
        rng.random_range(0.0..0.5),
        rng.random_range(0.0..0.1),
    ])
    .unwrap()
}

/// One of every built-in map kind, with random parameters.
pub fn random_map(rng: &mut impl Rng) -> CoordinateMap {
    match rng.random_range(0..6) {
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

