//! Discrete coded-exposure measurement operator: shifted binary masks,
//! temporal integration, additive noise, and the matrix-free H / H^T pair.
//!
//! With per-frame masks `Phi_k` the noiseless snapshot is
//! `Y = sum_k Phi_k .* Z_k`; vectorized, `H = [diag(vec(Phi_1)), ...,
//! diag(vec(Phi_nt))]` acting on `x = vec([Z_1, ..., Z_nt])`.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::video::VideoCube;

/// Stored oversized binary transmission pattern.
#[derive(Debug, Clone)]
pub struct MaskPattern {
    pub data: Array2<u8>,
}

impl MaskPattern {
    pub fn new(data: Array2<u8>) -> Result<Self> {
        if data.iter().any(|&v| v > 1) {
            return Err(Error::param("mask pattern must be strictly binary"));
        }
        Ok(MaskPattern { data })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// Integer mask offsets (r_k, s_k), one per frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftSchedule {
    pub offsets: Vec<(usize, usize)>,
}

impl ShiftSchedule {
    /// One pixel horizontally per frame: (0, k) for k = 0..n_t-1.
    pub fn horizontal_unit(nt: usize) -> Self {
        ShiftSchedule { offsets: (0..nt).map(|k| (0, k)).collect() }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// The n_t cropped sensor-sized binary codes.
#[derive(Debug, Clone)]
pub struct MaskStack {
    pub masks: Vec<Array2<u8>>,
}

impl MaskStack {
    pub fn nt(&self) -> usize {
        self.masks.len()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.masks[0].dim()
    }

    pub fn all_ones(nx: usize, ny: usize, nt: usize) -> Self {
        MaskStack { masks: vec![Array2::ones((nx, ny)); nt] }
    }
}

/// One coded snapshot.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub data: Array2<f64>,
    /// Standard deviation of the simulated noise, if any.
    pub noise_sigma: f64,
}

impl Measurement {
    pub fn to_flat(&self) -> Vec<f64> {
        let (nx, ny) = self.data.dim();
        let mut v = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                v.push(self.data[[i, j]]);
            }
        }
        v
    }

    pub fn from_flat(v: &[f64], nx: usize, ny: usize) -> Result<Self> {
        if v.len() != nx * ny {
            return Err(Error::dim(format!(
                "measurement vector length {} != {nx}x{ny}",
                v.len()
            )));
        }
        let mut data = Array2::zeros((nx, ny));
        let mut idx = 0;
        for j in 0..ny {
            for i in 0..nx {
                data[[i, j]] = v[idx];
                idx += 1;
            }
        }
        Ok(Measurement { data, noise_sigma: 0.0 })
    }
}

/// Additive measurement noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    Gaussian { sigma: f64, seed: u64 },
}

impl NoiseModel {
    pub fn sigma(&self) -> f64 {
        match self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma, .. } => *sigma,
        }
    }
}

/// Draw an i.i.d. Bernoulli(density) binary pattern; deterministic per seed.
pub fn gen_mask(mx: usize, my: usize, density: f64, seed: u64) -> Result<MaskPattern> {
    if !(density > 0.0 && density < 1.0) {
        return Err(Error::param(format!("mask density {density} must lie in (0, 1)")));
    }
    if mx == 0 || my == 0 {
        return Err(Error::param("mask dims must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // row-major draw order fixes the pattern for a given seed
    let mut data = Array2::zeros((mx, my));
    for i in 0..mx {
        for j in 0..my {
            data[[i, j]] = u8::from(rng.gen::<f64>() < density);
        }
    }
    MaskPattern::new(data)
}

/// Crop the sensor window of the stored pattern at every scheduled offset.
/// `wrap` selects circular indexing instead of rejecting out-of-bounds windows.
pub fn build_mask_stack(
    p: &MaskPattern,
    s: &ShiftSchedule,
    nx: usize,
    ny: usize,
    wrap: bool,
) -> Result<MaskStack> {
    let (mx, my) = p.dims();
    let mut masks = Vec::with_capacity(s.len());
    for (k, &(r, sv)) in s.offsets.iter().enumerate() {
        if !wrap && (r + nx > mx || sv + ny > my) {
            return Err(Error::Schedule {
                frame: k,
                reason: format!(
                    "window ({nx}x{ny}) at offset ({r}, {sv}) exceeds mask extent ({mx}x{my})"
                ),
            });
        }
        let m = Array2::from_shape_fn((nx, ny), |(i, j)| {
            if wrap {
                p.data[[(i + r) % mx, (j + sv) % my]]
            } else {
                p.data[[i + r, j + sv]]
            }
        });
        masks.push(m);
    }
    if masks.is_empty() {
        return Err(Error::param("shift schedule is empty"));
    }
    Ok(MaskStack { masks })
}

/// Modulate, integrate over time, and optionally add Gaussian noise.
pub fn forward_measure(z: &VideoCube, m: &MaskStack, noise: &NoiseModel) -> Result<Measurement> {
    let (nx, ny, nt) = z.data.dim();
    if m.nt() != nt || m.dims() != (nx, ny) {
        return Err(Error::dim(format!(
            "cube ({nx}, {ny}, {nt}) incompatible with mask stack {:?} x {}",
            m.dims(),
            m.nt()
        )));
    }
    let mut y = Array2::zeros((nx, ny));
    for k in 0..nt {
        let mask = &m.masks[k];
        for j in 0..ny {
            for i in 0..nx {
                y[[i, j]] += mask[[i, j]] as f64 * z.data[[i, j, k]];
            }
        }
    }
    let sigma = noise.sigma();
    if let NoiseModel::Gaussian { sigma, seed } = noise {
        if *sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let dist = Normal::new(0.0, *sigma).map_err(|_| Error::param("bad noise sigma"))?;
            for j in 0..ny {
                for i in 0..nx {
                    y[[i, j]] += dist.sample(&mut rng);
                }
            }
        }
    }
    Ok(Measurement { data: y, noise_sigma: sigma })
}

/// Matrix-free `y = H x` on the flat cube vector.
pub fn apply_h(x: &[f64], m: &MaskStack) -> Result<Vec<f64>> {
    let (nx, ny) = m.dims();
    let nt = m.nt();
    let npix = nx * ny;
    if x.len() != npix * nt {
        return Err(Error::dim(format!("x length {} != {npix} * {nt}", x.len())));
    }
    let mut y = vec![0.0; npix];
    for (k, mask) in m.masks.iter().enumerate() {
        let block = &x[k * npix..(k + 1) * npix];
        let mut p = 0;
        for j in 0..ny {
            for i in 0..nx {
                y[p] += mask[[i, j]] as f64 * block[p];
                p += 1;
            }
        }
    }
    Ok(y)
}

/// Matrix-free `x = H^T y`; block k is `Phi_k .* Y`.
pub fn apply_h_adjoint(y: &[f64], m: &MaskStack) -> Result<Vec<f64>> {
    let (nx, ny) = m.dims();
    let nt = m.nt();
    let npix = nx * ny;
    if y.len() != npix {
        return Err(Error::dim(format!("y length {} != {npix}", y.len())));
    }
    let mut x = vec![0.0; npix * nt];
    for (k, mask) in m.masks.iter().enumerate() {
        let block = &mut x[k * npix..(k + 1) * npix];
        let mut p = 0;
        for j in 0..ny {
            for i in 0..nx {
                block[p] = mask[[i, j]] as f64 * y[p];
                p += 1;
            }
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Read a mask pattern from an 8-bit grayscale PNG (0 -> block, 255 -> pass,
/// threshold 128) or an ASCII 0/1 matrix, one row per line.
pub fn read_mask(path: &Path) -> Result<MaskPattern> {
    let is_png = path.extension().map(|e| e == "png").unwrap_or(false);
    if is_png {
        let img = image::open(path)
            .map_err(|e| Error::Image { path: path.to_path_buf(), source: e })?
            .to_luma8();
        let (w, h) = img.dimensions();
        let data = Array2::from_shape_fn((h as usize, w as usize), |(i, j)| {
            u8::from(img.get_pixel(j as u32, i as u32)[0] >= 128)
        });
        MaskPattern::new(data)
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let rows: Vec<Vec<u8>> = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .flat_map(|tok| tok.chars())
                    .map(|c| match c {
                        '0' => Ok(0),
                        '1' => Ok(1),
                        other => Err(Error::Ingestion {
                            path: path.to_path_buf(),
                            reason: format!("unexpected mask character `{other}`"),
                        }),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mx = rows.len();
        let my = rows.first().map(|r| r.len()).unwrap_or(0);
        if mx == 0 || my == 0 || rows.iter().any(|r| r.len() != my) {
            return Err(Error::Ingestion {
                path: path.to_path_buf(),
                reason: "mask rows empty or ragged".into(),
            });
        }
        let data = Array2::from_shape_fn((mx, my), |(i, j)| rows[i][j]);
        MaskPattern::new(data)
    }
}

pub fn write_mask_png(path: &Path, p: &MaskPattern) -> Result<()> {
    let (mx, my) = p.dims();
    let mut img = image::GrayImage::new(my as u32, mx as u32);
    for i in 0..mx {
        for j in 0..my {
            img.put_pixel(j as u32, i as u32, image::Luma([p.data[[i, j]] * 255]));
        }
    }
    img.save(path).map_err(|e| Error::Image { path: path.to_path_buf(), source: e })
}

/// Schedule file: CSV lines `k,r,s`, k ascending from 0.
pub fn read_schedule(path: &Path) -> Result<ShiftSchedule> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut offsets = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('k') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Ingestion {
                path: path.to_path_buf(),
                reason: format!("line {}: expected `k,r,s`", lineno + 1),
            });
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Ingestion {
                path: path.to_path_buf(),
                reason: format!("line {}: `{s}` is not a nonnegative integer", lineno + 1),
            })
        };
        let k = parse(fields[0])?;
        if k != offsets.len() {
            return Err(Error::Ingestion {
                path: path.to_path_buf(),
                reason: format!("line {}: frame index {k} out of order", lineno + 1),
            });
        }
        offsets.push((parse(fields[1])?, parse(fields[2])?));
    }
    if offsets.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: "schedule holds no entries".into(),
        });
    }
    Ok(ShiftSchedule { offsets })
}

pub fn write_schedule(path: &Path, s: &ShiftSchedule) -> Result<()> {
    let mut out = String::from("k,r,s\n");
    for (k, (r, sv)) in s.offsets.iter().enumerate() {
        out.push_str(&format!("{k},{r},{sv}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
