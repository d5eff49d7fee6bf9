//! Video containers, frame ingestion, and PSNR metrics.
//!
//! The latent signal is an `n_x x n_y x n_t` cube of normalized intensities.
//! Throughout the workspace a cube vectorizes with the row index fastest,
//! then columns, then frames: `flat = i + n_x * (j + n_y * k)`.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// One gray-scale video cube, dims `(n_x, n_y, n_t)`, values normalized to [0, 1]
/// after ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoCube {
    pub data: Array3<f64>,
}

impl VideoCube {
    pub fn new(data: Array3<f64>) -> Self {
        VideoCube { data }
    }

    pub fn zeros(nx: usize, ny: usize, nt: usize) -> Self {
        VideoCube { data: Array3::zeros((nx, ny, nt)) }
    }

    pub fn nx(&self) -> usize {
        self.data.dim().0
    }

    pub fn ny(&self) -> usize {
        self.data.dim().1
    }

    pub fn nt(&self) -> usize {
        self.data.dim().2
    }

    /// Flatten in the shared vectorization order (i fastest, frames concatenated).
    pub fn to_flat(&self) -> Vec<f64> {
        let (nx, ny, nt) = self.data.dim();
        let mut v = Vec::with_capacity(nx * ny * nt);
        for k in 0..nt {
            for j in 0..ny {
                for i in 0..nx {
                    v.push(self.data[[i, j, k]]);
                }
            }
        }
        v
    }

    /// Inverse of [`VideoCube::to_flat`].
    pub fn from_flat(v: &[f64], nx: usize, ny: usize, nt: usize) -> Result<Self> {
        if v.len() != nx * ny * nt {
            return Err(Error::dim(format!(
                "flat vector has length {}, expected {}x{}x{} = {}",
                v.len(),
                nx,
                ny,
                nt,
                nx * ny * nt
            )));
        }
        let mut cube = Array3::zeros((nx, ny, nt));
        let mut idx = 0;
        for k in 0..nt {
            for j in 0..ny {
                for i in 0..nx {
                    cube[[i, j, k]] = v[idx];
                    idx += 1;
                }
            }
        }
        Ok(VideoCube { data: cube })
    }

    pub fn frame(&self, k: usize) -> Array2<f64> {
        let (nx, ny, _) = self.data.dim();
        Array2::from_shape_fn((nx, ny), |(i, j)| self.data[[i, j, k]])
    }

    pub fn clamp_unit(&mut self) {
        self.data.mapv_inplace(|v| v.clamp(0.0, 1.0));
    }
}

/// Three channel cubes of identical dims.
#[derive(Debug, Clone)]
pub struct ColorVideo {
    pub r: VideoCube,
    pub g: VideoCube,
    pub b: VideoCube,
}

impl ColorVideo {
    pub fn new(r: VideoCube, g: VideoCube, b: VideoCube) -> Result<Self> {
        if r.data.dim() != g.data.dim() || r.data.dim() != b.data.dim() {
            return Err(Error::dim("color channels must share dims"));
        }
        Ok(ColorVideo { r, g, b })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.r.data.dim()
    }
}

/// Bayer 2x2 cell layouts; the letter order reads cell positions
/// (0,0), (0,1), (1,0), (1,1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BayerLayout {
    #[default]
    Rggb,
    Bggr,
    Grbg,
    Gbrg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BayerChannel {
    R,
    G,
    B,
}

impl BayerLayout {
    /// Channel sampled at pixel (i, j).
    pub fn channel_at(&self, i: usize, j: usize) -> BayerChannel {
        let cell = (i % 2, j % 2);
        let letters = match self {
            BayerLayout::Rggb => [BayerChannel::R, BayerChannel::G, BayerChannel::G, BayerChannel::B],
            BayerLayout::Bggr => [BayerChannel::B, BayerChannel::G, BayerChannel::G, BayerChannel::R],
            BayerLayout::Grbg => [BayerChannel::G, BayerChannel::R, BayerChannel::B, BayerChannel::G],
            BayerLayout::Gbrg => [BayerChannel::G, BayerChannel::B, BayerChannel::R, BayerChannel::G],
        };
        letters[(cell.0 << 1) | cell.1]
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rggb" => Ok(BayerLayout::Rggb),
            "bggr" => Ok(BayerLayout::Bggr),
            "grbg" => Ok(BayerLayout::Grbg),
            "gbrg" => Ok(BayerLayout::Gbrg),
            other => Err(Error::param(format!("unknown Bayer layout `{other}`"))),
        }
    }
}

/// Single Bayer-mosaicked frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MosaicImage {
    pub data: Array2<f64>,
    pub layout: BayerLayout,
}

impl MosaicImage {
    pub fn new(data: Array2<f64>, layout: BayerLayout) -> Result<Self> {
        let (nx, ny) = data.dim();
        if nx % 2 != 0 || ny % 2 != 0 {
            return Err(Error::dim(format!("mosaic dims ({nx}, {ny}) must be even")));
        }
        Ok(MosaicImage { data, layout })
    }
}

/// Per-frame and mean PSNR in dB. Identical frames carry `f64::INFINITY`.
#[derive(Debug, Clone)]
pub struct PsnrReport {
    pub per_frame: Vec<f64>,
    pub mean: f64,
    pub peak: f64,
}

impl PsnrReport {
    /// CSV with header `frame,psnr_db`; infinite entries render as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,psnr_db\n");
        for (k, p) in self.per_frame.iter().enumerate() {
            if p.is_infinite() {
                out.push_str(&format!("{k},inf\n"));
            } else {
                out.push_str(&format!("{k},{p:.6}\n"));
            }
        }
        out
    }
}

/// Per-frame `10 log10(peak^2 / MSE)`.
pub fn psnr(a: &VideoCube, b: &VideoCube, peak: f64) -> Result<PsnrReport> {
    if a.data.dim() != b.data.dim() {
        return Err(Error::dim(format!(
            "psnr inputs differ: {:?} vs {:?}",
            a.data.dim(),
            b.data.dim()
        )));
    }
    if peak <= 0.0 {
        return Err(Error::param("psnr peak must be positive"));
    }
    let (nx, ny, nt) = a.data.dim();
    let npix = (nx * ny) as f64;
    let mut per_frame = Vec::with_capacity(nt);
    for k in 0..nt {
        let mut mse = 0.0;
        for j in 0..ny {
            for i in 0..nx {
                let d = a.data[[i, j, k]] - b.data[[i, j, k]];
                mse += d * d;
            }
        }
        mse /= npix;
        if mse == 0.0 {
            per_frame.push(f64::INFINITY);
        } else {
            per_frame.push(10.0 * (peak * peak / mse).log10());
        }
    }
    let finite: Vec<f64> = per_frame.iter().copied().filter(|p| p.is_finite()).collect();
    let mean = if finite.is_empty() {
        f64::INFINITY
    } else {
        finite.iter().sum::<f64>() / finite.len() as f64
    };
    Ok(PsnrReport { per_frame, mean, peak })
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

/// Load a video either from a directory of numbered 8-bit RGB PNG frames or
/// from the raw float container (`CACTI <n_x> <n_y> <n_t> <channels>` header).
pub fn load_video(path: &Path, normalize: bool) -> Result<ColorVideo> {
    if path.is_dir() {
        load_png_frames(path, normalize)
    } else {
        let cubes = read_float_container(path)?;
        match cubes.len() {
            1 => {
                let g = cubes.into_iter().next().unwrap();
                ColorVideo::new(g.clone(), g.clone(), g)
            }
            3 => {
                let mut it = cubes.into_iter();
                ColorVideo::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
            }
            n => Err(Error::Ingestion {
                path: path.to_path_buf(),
                reason: format!("container has {n} channels, expected 1 or 3"),
            }),
        }
    }
}

fn load_png_frames(dir: &Path, normalize: bool) -> Result<ColorVideo> {
    let mut frames: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "png").unwrap_or(false))
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(Error::Ingestion {
            path: dir.to_path_buf(),
            reason: "no PNG frames found".into(),
        });
    }
    let scale = if normalize { 1.0 / 255.0 } else { 1.0 };
    let mut dims: Option<(usize, usize)> = None;
    let mut channels: [Vec<Array2<f64>>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for f in &frames {
        let img = image::open(f)
            .map_err(|e| Error::Image { path: f.clone(), source: e })?
            .to_rgb8();
        // image uses (width, height); rows map to i, columns to j
        let (w, h) = img.dimensions();
        let (nx, ny) = (h as usize, w as usize);
        match dims {
            None => dims = Some((nx, ny)),
            Some(d) if d != (nx, ny) => {
                return Err(Error::Ingestion {
                    path: f.clone(),
                    reason: format!("frame dims ({nx}, {ny}) differ from first frame {d:?}"),
                })
            }
            _ => {}
        }
        for c in 0..3 {
            let plane = Array2::from_shape_fn((nx, ny), |(i, j)| {
                img.get_pixel(j as u32, i as u32)[c] as f64 * scale
            });
            channels[c].push(plane);
        }
    }
    let (nx, ny) = dims.unwrap();
    let nt = frames.len();
    let mut cubes = channels.iter().map(|planes| {
        let mut cube = Array3::zeros((nx, ny, nt));
        for (k, p) in planes.iter().enumerate() {
            for j in 0..ny {
                for i in 0..nx {
                    cube[[i, j, k]] = p[[i, j]];
                }
            }
        }
        VideoCube::new(cube)
    });
    ColorVideo::new(cubes.next().unwrap(), cubes.next().unwrap(), cubes.next().unwrap())
}

// ---------------------------------------------------------------------------
// Raw float container
// ---------------------------------------------------------------------------

/// Read the raw container: one ASCII header line `CACTI <n_x> <n_y> <n_t> <channels>`
/// followed by little-endian f32 samples, channel-major, each channel in the
/// shared vectorization order.
pub fn read_float_container(path: &Path) -> Result<Vec<VideoCube>> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let nl = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Ingestion {
        path: path.to_path_buf(),
        reason: "missing header line".into(),
    })?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Ingestion {
        path: path.to_path_buf(),
        reason: "header is not ASCII".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != "CACTI" {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!("bad header `{header}`, expected `CACTI nx ny nt channels`"),
        });
    }
    let parse = |s: &str, name: &str| -> Result<usize> {
        s.parse().map_err(|_| Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!("header field {name} = `{s}` is not an integer"),
        })
    };
    let nx = parse(fields[1], "n_x")?;
    let ny = parse(fields[2], "n_y")?;
    let nt = parse(fields[3], "n_t")?;
    let nc = parse(fields[4], "channels")?;
    let n = nx * ny * nt;
    let payload = &bytes[nl + 1..];
    if payload.len() != n * nc * 4 {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!("payload holds {} bytes, expected {}", payload.len(), n * nc * 4),
        });
    }
    let mut cubes = Vec::with_capacity(nc);
    for c in 0..nc {
        let mut flat = Vec::with_capacity(n);
        for s in 0..n {
            let off = (c * n + s) * 4;
            let v = f32::from_le_bytes([
                payload[off],
                payload[off + 1],
                payload[off + 2],
                payload[off + 3],
            ]);
            flat.push(v as f64);
        }
        cubes.push(VideoCube::from_flat(&flat, nx, ny, nt)?);
    }
    Ok(cubes)
}

/// Write the raw container described at [`read_float_container`].
pub fn write_float_container(path: &Path, cubes: &[VideoCube]) -> Result<()> {
    let first = cubes.first().ok_or_else(|| Error::param("no channels to write"))?;
    let (nx, ny, nt) = first.data.dim();
    for c in cubes {
        if c.data.dim() != (nx, ny, nt) {
            return Err(Error::dim("container channels must share dims"));
        }
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "CACTI {nx} {ny} {nt} {}", cubes.len()).map_err(|e| Error::io(path, e))?;
    for c in cubes {
        for v in c.to_flat() {
            w.write_all(&(v as f32).to_le_bytes()).map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Write each frame of a color video as `frame_XXX.png` under `dir`.
pub fn write_png_frames(dir: &Path, cv: &ColorVideo) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (nx, ny, nt) = cv.dims();
    for k in 0..nt {
        let mut img = image::RgbImage::new(ny as u32, nx as u32);
        for j in 0..ny {
            for i in 0..nx {
                let px = |c: &VideoCube| (c.data[[i, j, k]].clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel(j as u32, i as u32, image::Rgb([px(&cv.r), px(&cv.g), px(&cv.b)]));
            }
        }
        let path = dir.join(format!("frame_{k:03}.png"));
        img.save(&path).map_err(|e| Error::Image { path, source: e })?;
    }
    Ok(())
}
