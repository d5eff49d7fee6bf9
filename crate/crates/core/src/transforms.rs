//! Orthonormal 1D bases (DCT-II and Daubechies wavelets with periodic
//! boundaries) and their separable 3D composition.
//!
//! Every basis here is exactly orthonormal on its dyadic length, so the
//! 3D coefficient vector preserves energy and the Kronecker-product action
//! is realized axis by axis without forming any dense operator.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::video::VideoCube;

/// 8-tap Daubechies low-pass filter (four vanishing moments).
const DAUB_8TAP: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

/// 16-tap Daubechies low-pass filter (eight vanishing moments).
const DAUB_16TAP: [f64; 16] = [
    0.054_415_842_243_081_61,
    0.312_871_590_914_465_9,
    0.675_630_736_298_012_8,
    0.585_354_683_654_869_1,
    -0.015_829_105_256_023_893,
    -0.284_015_542_962_428_1,
    0.000_472_484_573_997_972_5,
    0.128_747_426_620_186,
    -0.017_369_301_002_022_11,
    -0.044_088_253_931_064_72,
    0.013_981_027_917_015_516,
    0.008_746_094_047_015_655,
    -0.004_870_352_993_010_66,
    -0.000_391_740_372_995_977,
    0.000_675_449_405_998_556_8,
    -0.000_117_476_784_002_281_92,
];

/// Which filter length realizes the "Daubechies-8" name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaveletVariant {
    /// 8 taps, i.e. db4 in vanishing-moment naming.
    #[default]
    EightTap,
    /// 16 taps, db8 in vanishing-moment naming.
    SixteenTap,
}

impl WaveletVariant {
    fn taps(&self) -> &'static [f64] {
        match self {
            WaveletVariant::EightTap => &DAUB_8TAP,
            WaveletVariant::SixteenTap => &DAUB_16TAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BasisKind {
    Dct { matrix: Array2<f64> },
    Wavelet { levels: usize, variant: WaveletVariant },
}

/// One orthonormal 1D transform of fixed length.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1D {
    n: usize,
    kind: BasisKind,
}

impl Basis1D {
    /// Orthonormal DCT-II of length n.
    pub fn dct(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("basis length must be at least 1"));
        }
        let nf = n as f64;
        let matrix = Array2::from_shape_fn((n, n), |(m, i)| {
            let scale = if m == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            scale * (PI * (2.0 * i as f64 + 1.0) * m as f64 / (2.0 * nf)).cos()
        });
        Ok(Basis1D { n, kind: BasisKind::Dct { matrix } })
    }

    /// Periodic orthonormal Daubechies decomposition with `levels` stages.
    pub fn wavelet(n: usize, levels: usize, variant: WaveletVariant) -> Result<Self> {
        if n == 0 {
            return Err(Error::dim("basis length must be at least 1"));
        }
        if levels == 0 {
            return Err(Error::param("wavelet level count must be at least 1"));
        }
        if n % (1 << levels) != 0 {
            return Err(Error::dim(format!(
                "length {n} is not divisible by 2^{levels}"
            )));
        }
        Ok(Basis1D { n, kind: BasisKind::Wavelet { levels, variant } })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn is_wavelet(&self) -> bool {
        matches!(self.kind, BasisKind::Wavelet { .. })
    }

    pub fn levels(&self) -> usize {
        match &self.kind {
            BasisKind::Wavelet { levels, .. } => *levels,
            BasisKind::Dct { .. } => 0,
        }
    }

    /// Analysis: coefficients of `v`. Wavelet output is ordered
    /// `[scaling | detail level L | ... | detail level 1]`.
    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n {
            return Err(Error::dim(format!("vector length {} != basis length {}", v.len(), self.n)));
        }
        match &self.kind {
            BasisKind::Dct { matrix } => Ok(mat_vec(matrix, v, false)),
            BasisKind::Wavelet { levels, variant } => {
                let h = variant.taps();
                let mut out = v.to_vec();
                let mut len = self.n;
                for _ in 0..*levels {
                    dwt_step(&mut out[..len], h);
                    len /= 2;
                }
                Ok(out)
            }
        }
    }

    /// Synthesis: exact inverse of [`Basis1D::forward`].
    pub fn inverse(&self, c: &[f64]) -> Result<Vec<f64>> {
        if c.len() != self.n {
            return Err(Error::dim(format!("vector length {} != basis length {}", c.len(), self.n)));
        }
        match &self.kind {
            BasisKind::Dct { matrix } => Ok(mat_vec(matrix, c, true)),
            BasisKind::Wavelet { levels, variant } => {
                let h = variant.taps();
                let mut out = c.to_vec();
                let mut len = self.n >> (*levels - 1);
                for _ in 0..*levels {
                    idwt_step(&mut out[..len], h);
                    len *= 2;
                }
                Ok(out)
            }
        }
    }

    /// Dense synthesis matrix; column i is `inverse(e_i)`.
    pub fn synthesis_matrix(&self) -> Array2<f64> {
        let n = self.n;
        let mut mat = Array2::zeros((n, n));
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            let col = self.inverse(&e).expect("length is fixed");
            e[i] = 0.0;
            for (p, &v) in col.iter().enumerate() {
                mat[[p, i]] = v;
            }
        }
        mat
    }

    /// Dense analysis matrix; row m holds the m-th basis functional.
    pub fn analysis_matrix(&self) -> Array2<f64> {
        self.synthesis_matrix().reversed_axes().to_owned()
    }
}

/// One periodic analysis stage on `buf`, in place:
/// first half becomes the approximation, second half the detail.
fn dwt_step(buf: &mut [f64], h: &[f64]) {
    let len = buf.len();
    let half = len / 2;
    let mut out = vec![0.0; len];
    for i in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (m, &hm) in h.iter().enumerate() {
            let x = buf[(2 * i + m) % len];
            // quadrature mirror: g[m] = (-1)^m h[taps-1-m]
            let gm = if m % 2 == 0 { h[h.len() - 1 - m] } else { -h[h.len() - 1 - m] };
            a += hm * x;
            d += gm * x;
        }
        out[i] = a;
        out[half + i] = d;
    }
    buf.copy_from_slice(&out);
}

/// Transpose of [`dwt_step`].
fn idwt_step(buf: &mut [f64], h: &[f64]) {
    let len = buf.len();
    let half = len / 2;
    let mut out = vec![0.0; len];
    for i in 0..half {
        let a = buf[i];
        let d = buf[half + i];
        for (m, &hm) in h.iter().enumerate() {
            let gm = if m % 2 == 0 { h[h.len() - 1 - m] } else { -h[h.len() - 1 - m] };
            out[(2 * i + m) % len] += hm * a + gm * d;
        }
    }
    buf.copy_from_slice(&out);
}

fn mat_vec(mat: &Array2<f64>, v: &[f64], transpose: bool) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    for m in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += if transpose { mat[[i, m]] } else { mat[[m, i]] } * v[i];
        }
        out[m] = s;
    }
    out
}

/// Separable 3D transform: one [`Basis1D`] per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform3D {
    pub basis_x: Basis1D,
    pub basis_y: Basis1D,
    pub basis_t: Basis1D,
}

impl Transform3D {
    pub fn new(basis_x: Basis1D, basis_y: Basis1D, basis_t: Basis1D) -> Self {
        Transform3D { basis_x, basis_y, basis_t }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.basis_x.len(), self.basis_y.len(), self.basis_t.len())
    }

    pub fn coeff_len(&self) -> usize {
        self.basis_x.len() * self.basis_y.len() * self.basis_t.len()
    }

    /// Coefficients of a cube in the shared vectorization order.
    pub fn forward(&self, z: &VideoCube) -> Result<Vec<f64>> {
        let cube = self.apply_axes(z, false)?;
        Ok(cube.to_flat())
    }

    /// Cube reconstructed from coefficients.
    pub fn inverse(&self, theta: &[f64]) -> Result<VideoCube> {
        let (nx, ny, nt) = self.dims();
        let cube = VideoCube::from_flat(theta, nx, ny, nt)?;
        self.apply_axes(&cube, true)
    }

    fn apply_axes(&self, z: &VideoCube, inverse: bool) -> Result<VideoCube> {
        let (nx, ny, nt) = self.dims();
        if z.data.dim() != (nx, ny, nt) {
            return Err(Error::dim(format!(
                "cube dims {:?} incompatible with transform dims {:?}",
                z.data.dim(),
                (nx, ny, nt)
            )));
        }
        let mut cube = z.data.clone();
        let apply = |basis: &Basis1D, v: &[f64]| -> Result<Vec<f64>> {
            if inverse {
                basis.inverse(v)
            } else {
                basis.forward(v)
            }
        };
        // x axis
        let mut lane = vec![0.0; nx];
        for k in 0..nt {
            for j in 0..ny {
                for i in 0..nx {
                    lane[i] = cube[[i, j, k]];
                }
                let t = apply(&self.basis_x, &lane)?;
                for i in 0..nx {
                    cube[[i, j, k]] = t[i];
                }
            }
        }
        // y axis
        let mut lane = vec![0.0; ny];
        for k in 0..nt {
            for i in 0..nx {
                for j in 0..ny {
                    lane[j] = cube[[i, j, k]];
                }
                let t = apply(&self.basis_y, &lane)?;
                for j in 0..ny {
                    cube[[i, j, k]] = t[j];
                }
            }
        }
        // t axis
        let mut lane = vec![0.0; nt];
        for j in 0..ny {
            for i in 0..nx {
                for k in 0..nt {
                    lane[k] = cube[[i, j, k]];
                }
                let t = apply(&self.basis_t, &lane)?;
                for k in 0..nt {
                    cube[[i, j, k]] = t[k];
                }
            }
        }
        Ok(VideoCube::new(cube))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn dct_constant_vector() {
        let b = Basis1D::dct(4).unwrap();
        let c = b.forward(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12);
        for v in &c[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn dct_parseval_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..17).map(|_| rng.gen::<f64>() - 0.5).collect();
        let b = Basis1D::dct(17).unwrap();
        let c = b.forward(&v).unwrap();
        assert!((norm(&c) - norm(&v)).abs() < 1e-12);
        let back = b.inverse(&c).unwrap();
        for (a, bb) in v.iter().zip(&back) {
            assert!((a - bb).abs() < 1e-12);
        }
    }

    #[test]
    fn dct_empty_errors() {
        assert!(Basis1D::dct(0).is_err());
    }

    #[test]
    fn wavelet_constant_has_zero_details() {
        for variant in [WaveletVariant::EightTap, WaveletVariant::SixteenTap] {
            let b = Basis1D::wavelet(32, 3, variant).unwrap();
            let c = b.forward(&vec![1.0; 32]).unwrap();
            for v in &c[4..] {
                assert!(v.abs() < 1e-10, "detail {v} nonzero for {variant:?}");
            }
        }
    }

    #[test]
    fn wavelet_parseval_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for variant in [WaveletVariant::EightTap, WaveletVariant::SixteenTap] {
            let v: Vec<f64> = (0..32).map(|_| rng.gen::<f64>() - 0.5).collect();
            let b = Basis1D::wavelet(32, 3, variant).unwrap();
            let c = b.forward(&v).unwrap();
            assert!((norm(&c) - norm(&v)).abs() < 1e-10);
            let back = b.inverse(&c).unwrap();
            for (a, bb) in v.iter().zip(&back) {
                assert!((a - bb).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn wavelet_indivisible_length_errors() {
        assert!(Basis1D::wavelet(12, 3, WaveletVariant::EightTap).is_err());
    }

    #[test]
    fn bases_orthonormal_dense() {
        let bases = [
            Basis1D::dct(16).unwrap(),
            Basis1D::dct(1).unwrap(),
            Basis1D::wavelet(16, 2, WaveletVariant::EightTap).unwrap(),
            Basis1D::wavelet(64, 3, WaveletVariant::SixteenTap).unwrap(),
        ];
        for b in &bases {
            let s = b.synthesis_matrix();
            let n = b.len();
            for i in 0..n {
                for j in 0..n {
                    let dot: f64 = (0..n).map(|p| s[[p, i]] * s[[p, j]]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10, "gram[{i},{j}] = {dot}");
                }
            }
        }
    }

    #[test]
    fn transform3d_zero_and_parseval() {
        let t = Transform3D::new(
            Basis1D::wavelet(8, 2, WaveletVariant::EightTap).unwrap(),
            Basis1D::wavelet(8, 2, WaveletVariant::EightTap).unwrap(),
            Basis1D::dct(4).unwrap(),
        );
        let z = VideoCube::zeros(8, 8, 4);
        assert!(t.forward(&z).unwrap().iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = VideoCube::new(Array3::from_shape_fn((8, 8, 4), |_| rng.gen::<f64>() - 0.5));
        let theta = t.forward(&z).unwrap();
        let zn = norm(&z.to_flat());
        assert!((norm(&theta) - zn).abs() < 1e-10 * zn.max(1.0));
        let back = t.inverse(&theta).unwrap();
        for (a, b) in z.to_flat().iter().zip(back.to_flat()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn transform3d_matches_dense_kronecker() {
        // explicit Kronecker action at 4x4x4 against the separable path
        let t = Transform3D::new(
            Basis1D::wavelet(4, 1, WaveletVariant::EightTap).unwrap(),
            Basis1D::dct(4).unwrap(),
            Basis1D::dct(4).unwrap(),
        );
        let ax = t.basis_x.analysis_matrix();
        let ay = t.basis_y.analysis_matrix();
        let at = t.basis_t.analysis_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = VideoCube::new(Array3::from_shape_fn((4, 4, 4), |_| rng.gen::<f64>() - 0.5));
        let x = z.to_flat();
        // kron(At, Ay, Ax): row (ix,iy,kt), column (px,py,pk)
        let mut dense = vec![0.0; 64];
        for kt in 0..4 {
            for iy in 0..4 {
                for ix in 0..4 {
                    let row = ix + 4 * (iy + 4 * kt);
                    let mut s = 0.0;
                    for pk in 0..4 {
                        for py in 0..4 {
                            for px in 0..4 {
                                let col = px + 4 * (py + 4 * pk);
                                s += at[[kt, pk]] * ay[[iy, py]] * ax[[ix, px]] * x[col];
                            }
                        }
                    }
                    dense[row] = s;
                }
            }
        }
        let theta = t.forward(&z).unwrap();
        for (a, b) in theta.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
