//! Grayscale raster export of planar scalar fields.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use transmedia::fields::{write_scalar_csv, ComplexScalarField};

/// Gray level of zero field and of masked pixels.
pub const NEUTRAL: u8 = 128;

/// 8-bit raster; row 0 is the top (largest y).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    /// Maps `Re(field)` linearly onto `[1, 255]`, clipped at ±3 × the RMS of
    /// `Re` over unmasked finite points. Masked points render neutral.
    pub fn from_field(field: &ComplexScalarField) -> io::Result<Self> {
        let [nx, ny, nz] = field.grid.counts();
        if nz != 1 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "raster needs a single z layer",
            ));
        }
        let usable = |i: usize| !field.mask[i] && field.values[i].re.is_finite();
        let (sum, n) = (0..field.values.len())
            .filter(|&i| usable(i))
            .fold((0.0, 0usize), |(s, n), i| (s + field.values[i].re.powi(2), n + 1));
        let rms = if n > 0 { (sum / n as f64).sqrt() } else { 0.0 };
        let clip = 3.0 * rms;
        let mut pixels = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            let j = ny - 1 - row;
            for i in 0..nx {
                let idx = field.grid.index(i, j, 0);
                let level = if !usable(idx) || clip == 0.0 {
                    NEUTRAL
                } else {
                    let t = (field.values[idx].re / clip).clamp(-1.0, 1.0);
                    (f64::from(NEUTRAL) + 127.0 * t).round() as u8
                };
                pixels.push(level);
            }
        }
        Ok(Self {
            width: nx,
            height: ny,
            pixels,
        })
    }

    /// Binary PGM (`P5`).
    pub fn write_pgm<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }
}

fn with_path<T>(path: &Path, r: io::Result<T>) -> io::Result<T> {
    r.map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Writes `<stem>.pgm` and `<stem>.csv` into `dir`; returns bytes written.
pub fn render_raster(field: &ComplexScalarField, dir: &Path, stem: &str) -> io::Result<u64> {
    let raster = Raster::from_field(field)?;
    let pgm = dir.join(format!("{stem}.pgm"));
    let csv = dir.join(format!("{stem}.csv"));
    let mut w = BufWriter::new(with_path(&pgm, File::create(&pgm))?);
    with_path(&pgm, raster.write_pgm(&mut w).and_then(|_| w.flush()))?;
    let mut w = BufWriter::new(with_path(&csv, File::create(&csv))?);
    with_path(&csv, write_scalar_csv(&mut w, field).and_then(|_| w.flush()))?;
    let size = |p: &Path| with_path(p, std::fs::metadata(p)).map(|m| m.len());
    Ok(size(&pgm)? + size(&csv)?)
}
