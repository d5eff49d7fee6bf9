//! Bayer mosaicing, channel splitting, and bilinear demosaicing.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::video::{BayerChannel, BayerLayout, ColorVideo, MosaicImage, VideoCube};

/// The four quarter-resolution channel images of a mosaic, in the order
/// R, G1, G2, B. G1 is the green sharing a row with R.
#[derive(Debug, Clone)]
pub struct BayerChannels {
    pub r: Array2<f64>,
    pub g1: Array2<f64>,
    pub g2: Array2<f64>,
    pub b: Array2<f64>,
    pub layout: BayerLayout,
}

/// Cell offsets (di, dj) of R, G1, G2, B inside the 2x2 tile.
pub fn cell_offsets(layout: BayerLayout) -> [(usize, usize); 4] {
    match layout {
        BayerLayout::Rggb => [(0, 0), (0, 1), (1, 0), (1, 1)],
        BayerLayout::Bggr => [(1, 1), (1, 0), (0, 1), (0, 0)],
        BayerLayout::Grbg => [(0, 1), (0, 0), (1, 1), (1, 0)],
        BayerLayout::Gbrg => [(1, 0), (1, 1), (0, 0), (0, 1)],
    }
}

/// Sample one frame of a color video onto a Bayer mosaic.
pub fn rgb_to_bayer(cv: &ColorVideo, layout: BayerLayout) -> Result<Vec<MosaicImage>> {
    let (nx, ny, nt) = cv.dims();
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::dim(format!("Bayer sampling needs even dims, got ({nx}, {ny})")));
    }
    let mut out = Vec::with_capacity(nt);
    for k in 0..nt {
        let data = Array2::from_shape_fn((nx, ny), |(i, j)| match layout.channel_at(i, j) {
            BayerChannel::R => cv.r.data[[i, j, k]],
            BayerChannel::G => cv.g.data[[i, j, k]],
            BayerChannel::B => cv.b.data[[i, j, k]],
        });
        out.push(MosaicImage::new(data, layout)?);
    }
    Ok(out)
}

/// Split a mosaic into its four subsampled channel grids.
pub fn split_bayer(m: &MosaicImage) -> Result<BayerChannels> {
    let (nx, ny) = m.data.dim();
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::dim(format!("mosaic dims ({nx}, {ny}) must be even")));
    }
    let offs = cell_offsets(m.layout);
    let sub = |&(di, dj): &(usize, usize)| {
        Array2::from_shape_fn((nx / 2, ny / 2), |(i, j)| m.data[[2 * i + di, 2 * j + dj]])
    };
    Ok(BayerChannels {
        r: sub(&offs[0]),
        g1: sub(&offs[1]),
        g2: sub(&offs[2]),
        b: sub(&offs[3]),
        layout: m.layout,
    })
}

/// Reassemble a mosaic from its four channel grids; exact inverse of
/// [`split_bayer`].
pub fn merge_bayer(ch: &BayerChannels) -> Result<MosaicImage> {
    let (hx, hy) = ch.r.dim();
    for (name, a) in [("g1", &ch.g1), ("g2", &ch.g2), ("b", &ch.b)] {
        if a.dim() != (hx, hy) {
            return Err(Error::dim(format!("channel {name} dims differ from r")));
        }
    }
    let offs = cell_offsets(ch.layout);
    let mut data = Array2::zeros((2 * hx, 2 * hy));
    for (plane, &(di, dj)) in [&ch.r, &ch.g1, &ch.g2, &ch.b].iter().zip(offs.iter()) {
        for i in 0..hx {
            for j in 0..hy {
                data[[2 * i + di, 2 * j + dj]] = plane[[i, j]];
            }
        }
    }
    MosaicImage::new(data, ch.layout)
}

/// Bilinear demosaic with edge replication. Returns (R, G, B) planes of the
/// same dims as the mosaic.
pub fn demosaic(m: &MosaicImage) -> Result<[Array2<f64>; 3]> {
    let (nx, ny) = m.data.dim();
    if nx % 2 != 0 || ny % 2 != 0 {
        return Err(Error::dim(format!("mosaic dims ({nx}, {ny}) must be even")));
    }
    let at = |i: isize, j: isize| -> f64 {
        let ci = i.clamp(0, nx as isize - 1) as usize;
        let cj = j.clamp(0, ny as isize - 1) as usize;
        m.data[[ci, cj]]
    };
    let horiz = |i: isize, j: isize| (at(i, j - 1) + at(i, j + 1)) / 2.0;
    let vert = |i: isize, j: isize| (at(i - 1, j) + at(i + 1, j)) / 2.0;
    let cross = |i: isize, j: isize| (at(i - 1, j) + at(i + 1, j) + at(i, j - 1) + at(i, j + 1)) / 4.0;
    let diag = |i: isize, j: isize| {
        (at(i - 1, j - 1) + at(i - 1, j + 1) + at(i + 1, j - 1) + at(i + 1, j + 1)) / 4.0
    };

    let mut r = Array2::zeros((nx, ny));
    let mut g = Array2::zeros((nx, ny));
    let mut b = Array2::zeros((nx, ny));
    for i in 0..nx {
        for j in 0..ny {
            let (si, sj) = (i as isize, j as isize);
            match m.layout.channel_at(i, j) {
                BayerChannel::R => {
                    r[[i, j]] = m.data[[i, j]];
                    g[[i, j]] = cross(si, sj);
                    b[[i, j]] = diag(si, sj);
                }
                BayerChannel::B => {
                    b[[i, j]] = m.data[[i, j]];
                    g[[i, j]] = cross(si, sj);
                    r[[i, j]] = diag(si, sj);
                }
                BayerChannel::G => {
                    g[[i, j]] = m.data[[i, j]];
                    // the row neighbor decides which channel lies horizontally
                    let row_ch = m.layout.channel_at(i, j + 1);
                    match row_ch {
                        BayerChannel::R => {
                            r[[i, j]] = horiz(si, sj);
                            b[[i, j]] = vert(si, sj);
                        }
                        _ => {
                            b[[i, j]] = horiz(si, sj);
                            r[[i, j]] = vert(si, sj);
                        }
                    }
                }
            }
        }
    }
    Ok([r, g, b])
}

/// Demosaic every frame of a mosaicked sequence back into a color video.
pub fn demosaic_video(mosaics: &[MosaicImage]) -> Result<ColorVideo> {
    let first = mosaics.first().ok_or_else(|| Error::param("no mosaic frames"))?;
    let (nx, ny) = first.data.dim();
    let nt = mosaics.len();
    let mut r = VideoCube::zeros(nx, ny, nt);
    let mut g = VideoCube::zeros(nx, ny, nt);
    let mut b = VideoCube::zeros(nx, ny, nt);
    for (k, m) in mosaics.iter().enumerate() {
        let [pr, pg, pb] = demosaic(m)?;
        for j in 0..ny {
            for i in 0..nx {
                r.data[[i, j, k]] = pr[[i, j]];
                g.data[[i, j, k]] = pg[[i, j]];
                b.data[[i, j, k]] = pb[[i, j]];
            }
        }
    }
    ColorVideo::new(r, g, b)
}
