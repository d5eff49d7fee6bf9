//! Matrix-free sensing operators with per-column access.
//!
//! The coordinate-ascent solver needs, besides `apply`/`apply_adjoint`, cheap
//! access to single operator columns: their squared norms, inner products with
//! the residual, and rank-one residual updates. `Psi = H (F_t x F_y x F_x)` is
//! never materialized; its columns are separable products of one synthesis
//! column per axis against the mask-modulated temporal profile.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::forward::{apply_h, apply_h_adjoint, MaskStack};
use crate::transforms::Transform3D;
use crate::video::VideoCube;

/// Linear operator interface used by the inversion.
pub trait CsOperator {
    /// Number of columns (coefficients).
    fn dim_in(&self) -> usize;
    /// Number of rows (measurement pixels).
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>>;
    /// `||column_i||^2`.
    fn col_sq_norm(&self, i: usize) -> f64;
    /// `<column_i, r>`.
    fn col_dot(&self, i: usize, r: &[f64]) -> f64;
    /// `r += a * column_i`.
    fn col_axpy(&self, i: usize, a: f64, r: &mut [f64]);
}

// ---------------------------------------------------------------------------
// Dense operator (small problems and oracles)
// ---------------------------------------------------------------------------

/// Explicit dense matrix operator.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    mat: Array2<f64>,
    col_norms_sq: Vec<f64>,
}

impl DenseOperator {
    pub fn new(mat: Array2<f64>) -> Self {
        let (m, n) = mat.dim();
        let col_norms_sq = (0..n)
            .map(|c| (0..m).map(|r| mat[[r, c]] * mat[[r, c]]).sum())
            .collect();
        DenseOperator { mat, col_norms_sq }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.mat
    }
}

impl CsOperator for DenseOperator {
    fn dim_in(&self) -> usize {
        self.mat.dim().1
    }

    fn dim_out(&self) -> usize {
        self.mat.dim().0
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = self.mat.dim();
        if x.len() != n {
            return Err(Error::dim(format!("x length {} != {n}", x.len())));
        }
        let mut y = vec![0.0; m];
        for r in 0..m {
            let mut s = 0.0;
            for c in 0..n {
                s += self.mat[[r, c]] * x[c];
            }
            y[r] = s;
        }
        Ok(y)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let (m, n) = self.mat.dim();
        if y.len() != m {
            return Err(Error::dim(format!("y length {} != {m}", y.len())));
        }
        let mut x = vec![0.0; n];
        for c in 0..n {
            let mut s = 0.0;
            for r in 0..m {
                s += self.mat[[r, c]] * y[r];
            }
            x[c] = s;
        }
        Ok(x)
    }

    fn col_sq_norm(&self, i: usize) -> f64 {
        self.col_norms_sq[i]
    }

    fn col_dot(&self, i: usize, r: &[f64]) -> f64 {
        (0..self.mat.dim().0).map(|p| self.mat[[p, i]] * r[p]).sum()
    }

    fn col_axpy(&self, i: usize, a: f64, r: &mut [f64]) {
        for p in 0..self.mat.dim().0 {
            r[p] += a * self.mat[[p, i]];
        }
    }
}

// ---------------------------------------------------------------------------
// Psi = H * (inverse 3D transform)
// ---------------------------------------------------------------------------

/// Dense per-axis synthesis columns with recorded supports.
struct AxisColumns {
    /// `cols[c][p]`: entry p of synthesis column c.
    cols: Vec<Vec<f64>>,
    /// Indices where each column is numerically nonzero.
    support: Vec<Vec<usize>>,
}

impl AxisColumns {
    fn build(mat: &Array2<f64>) -> Self {
        let (n, ncols) = mat.dim();
        let mut cols = Vec::with_capacity(ncols);
        let mut support = Vec::with_capacity(ncols);
        for c in 0..ncols {
            let col: Vec<f64> = (0..n).map(|p| mat[[p, c]]).collect();
            let nz: Vec<usize> =
                (0..n).filter(|&p| col[p].abs() > 1e-14).collect();
            cols.push(col);
            support.push(nz);
        }
        AxisColumns { cols, support }
    }
}

/// The projected operator applied matrix-free, with cached column geometry.
pub struct PsiOperator {
    masks: MaskStack,
    transform: Transform3D,
    ax: AxisColumns,
    ay: AxisColumns,
    /// Per temporal coefficient kt: the mask-modulated temporal profile
    /// `ct[kt][p] = sum_k Phi_k[p] * Bt[k, kt]`, flat in pixel order.
    ct: Vec<Vec<f64>>,
    col_norms_sq: Vec<f64>,
    nx: usize,
    ny: usize,
    nt: usize,
}

impl PsiOperator {
    pub fn new(masks: MaskStack, transform: Transform3D) -> Result<Self> {
        let (nx, ny, nt) = transform.dims();
        if masks.dims() != (nx, ny) || masks.nt() != nt {
            return Err(Error::dim(format!(
                "mask stack {:?} x {} incompatible with transform dims {:?}",
                masks.dims(),
                masks.nt(),
                (nx, ny, nt)
            )));
        }
        let bx = transform.basis_x.synthesis_matrix();
        let by = transform.basis_y.synthesis_matrix();
        let bt = transform.basis_t.synthesis_matrix();
        let ax = AxisColumns::build(&bx);
        let ay = AxisColumns::build(&by);

        let npix = nx * ny;
        let mut ct = vec![vec![0.0; npix]; nt];
        for kt in 0..nt {
            let profile = &mut ct[kt];
            for (k, mask) in masks.masks.iter().enumerate() {
                let w = bt[[k, kt]];
                if w == 0.0 {
                    continue;
                }
                let mut p = 0;
                for j in 0..ny {
                    for i in 0..nx {
                        profile[p] += mask[[i, j]] as f64 * w;
                        p += 1;
                    }
                }
            }
        }

        // ||psi_(ix,iy,kt)||^2 = sum_p bx[px,ix]^2 by[py,iy]^2 ct[kt][p]^2,
        // separable in the spatial axes
        let mut col_norms_sq = vec![0.0; npix * nt];
        for kt in 0..nt {
            // u[ix][py] = sum_px bx2[px][ix] * ct2[px][py]
            let mut u = vec![vec![0.0; ny]; nx];
            for (ix, urow) in u.iter_mut().enumerate() {
                let col = &ax.cols[ix];
                for py in 0..ny {
                    let mut s = 0.0;
                    for px in 0..nx {
                        let c = ct[kt][px + nx * py];
                        s += col[px] * col[px] * c * c;
                    }
                    urow[py] = s;
                }
            }
            for iy in 0..ny {
                let coly = &ay.cols[iy];
                for (ix, urow) in u.iter().enumerate() {
                    let mut s = 0.0;
                    for py in 0..ny {
                        s += coly[py] * coly[py] * urow[py];
                    }
                    col_norms_sq[ix + nx * (iy + ny * kt)] = s;
                }
            }
        }

        Ok(PsiOperator { masks, transform, ax, ay, ct, col_norms_sq, nx, ny, nt })
    }

    pub fn transform(&self) -> &Transform3D {
        &self.transform
    }

    pub fn masks(&self) -> &MaskStack {
        &self.masks
    }

    pub fn col_sq_norms(&self) -> &[f64] {
        &self.col_norms_sq
    }

    fn decode(&self, i: usize) -> (usize, usize, usize) {
        let ix = i % self.nx;
        let iy = (i / self.nx) % self.ny;
        let kt = i / (self.nx * self.ny);
        (ix, iy, kt)
    }
}

impl CsOperator for PsiOperator {
    fn dim_in(&self) -> usize {
        self.nx * self.ny * self.nt
    }

    fn dim_out(&self) -> usize {
        self.nx * self.ny
    }

    fn apply(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let cube = self.transform.inverse(theta)?;
        apply_h(&cube.to_flat(), &self.masks)
    }

    fn apply_adjoint(&self, y: &[f64]) -> Result<Vec<f64>> {
        let x = apply_h_adjoint(y, &self.masks)?;
        let cube = VideoCube::from_flat(&x, self.nx, self.ny, self.nt)?;
        self.transform.forward(&cube)
    }

    fn col_sq_norm(&self, i: usize) -> f64 {
        self.col_norms_sq[i]
    }

    fn col_dot(&self, i: usize, r: &[f64]) -> f64 {
        let (ix, iy, kt) = self.decode(i);
        let colx = &self.ax.cols[ix];
        let coly = &self.ay.cols[iy];
        let profile = &self.ct[kt];
        let mut s = 0.0;
        for &py in &self.ay.support[iy] {
            let vy = coly[py];
            let base = self.nx * py;
            let mut sx = 0.0;
            for &px in &self.ax.support[ix] {
                sx += colx[px] * profile[base + px] * r[base + px];
            }
            s += vy * sx;
        }
        s
    }

    fn col_axpy(&self, i: usize, a: f64, r: &mut [f64]) {
        let (ix, iy, kt) = self.decode(i);
        let colx = &self.ax.cols[ix];
        let coly = &self.ay.cols[iy];
        let profile = &self.ct[kt];
        for &py in &self.ay.support[iy] {
            let w = a * coly[py];
            let base = self.nx * py;
            for &px in &self.ax.support[ix] {
                r[base + px] += w * colx[px] * profile[base + px];
            }
        }
    }
}

/// `apply_Psi` composition as a free function.
pub fn apply_psi(theta: &[f64], masks: &MaskStack, t: &Transform3D) -> Result<Vec<f64>> {
    let cube = t.inverse(theta)?;
    apply_h(&cube.to_flat(), masks)
}

/// Adjoint composition `transform_forward . H^T`.
pub fn apply_psi_adjoint(y: &[f64], masks: &MaskStack, t: &Transform3D) -> Result<Vec<f64>> {
    let (nx, ny, nt) = t.dims();
    let x = apply_h_adjoint(y, masks)?;
    t.forward(&VideoCube::from_flat(&x, nx, ny, nt)?)
}

/// All `||Psi e_i||^2` without touching a dense Psi.
pub fn psi_column_sq_norms(masks: &MaskStack, t: &Transform3D) -> Result<Vec<f64>> {
    Ok(PsiOperator::new(masks.clone(), t.clone())?.col_sq_norms().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{build_mask_stack, forward_measure, gen_mask, NoiseModel, ShiftSchedule};
    use crate::transforms::{Basis1D, WaveletVariant};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_setup(nx: usize, ny: usize, nt: usize, seed: u64) -> PsiOperator {
        let p = gen_mask(nx + 2, ny + nt + 2, 0.5, seed).unwrap();
        let m = build_mask_stack(&p, &ShiftSchedule::horizontal_unit(nt), nx, ny, false).unwrap();
        let t = Transform3D::new(
            Basis1D::wavelet(nx, 1, WaveletVariant::EightTap).unwrap(),
            Basis1D::wavelet(ny, 1, WaveletVariant::EightTap).unwrap(),
            Basis1D::dct(nt).unwrap(),
        );
        PsiOperator::new(m, t).unwrap()
    }

    #[test]
    fn psi_matches_forward_measure_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let op = toy_setup(8, 8, 4, 77);
        let z = VideoCube::new(Array3::from_shape_fn((8, 8, 4), |_| rng.gen::<f64>()));
        let theta = op.transform().forward(&z).unwrap();
        let via_psi = op.apply(&theta).unwrap();
        let direct = forward_measure(&z, op.masks(), &NoiseModel::None).unwrap().to_flat();
        for (a, b) in via_psi.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn psi_zero_input() {
        let op = toy_setup(4, 4, 2, 5);
        let y = op.apply(&vec![0.0; 32]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psi_adjoint_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let op = toy_setup(8, 8, 4, 78);
        for _ in 0..100 {
            let x: Vec<f64> = (0..op.dim_in()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..op.dim_out()).map(|_| rng.gen::<f64>() - 0.5).collect();
            let hx = op.apply(&x).unwrap();
            let hty = op.apply_adjoint(&y).unwrap();
            let lhs: f64 = hx.iter().zip(&y).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&hty).map(|(a, b)| a * b).sum();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((lhs - rhs).abs() <= 1e-10 * nx * ny);
        }
    }

    #[test]
    fn column_geometry_matches_explicit_columns() {
        let op = toy_setup(4, 4, 2, 9);
        let n = op.dim_in();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let r: Vec<f64> = (0..op.dim_out()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut e = vec![0.0; n];
        for i in 0..n {
            e[i] = 1.0;
            let col = op.apply(&e).unwrap();
            e[i] = 0.0;
            let explicit_norm: f64 = col.iter().map(|v| v * v).sum();
            let rel = (op.col_sq_norm(i) - explicit_norm).abs() / explicit_norm.max(1e-300);
            assert!(rel <= 1e-10 || explicit_norm < 1e-12, "column {i}: rel {rel}");
            assert!(op.col_sq_norm(i) >= 0.0);

            let explicit_dot: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum();
            assert!((op.col_dot(i, &r) - explicit_dot).abs() < 1e-10);

            let mut r2 = r.clone();
            op.col_axpy(i, 0.37, &mut r2);
            for (p, (&want_base, &c)) in r.iter().zip(&col).enumerate() {
                assert!((r2[p] - (want_base + 0.37 * c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn all_ones_masks_nt1_columns_unit() {
        // orthonormal transform with identity measurement keeps columns at norm 1
        let m = MaskStack::all_ones(8, 8, 1);
        let t = Transform3D::new(
            Basis1D::wavelet(8, 2, WaveletVariant::EightTap).unwrap(),
            Basis1D::dct(8).unwrap(),
            Basis1D::dct(1).unwrap(),
        );
        let op = PsiOperator::new(m, t).unwrap();
        for i in 0..op.dim_in() {
            assert!((op.col_sq_norm(i) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dense_operator_adjoint_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mat = Array2::from_shape_fn((5, 7), |_| rng.gen::<f64>() - 0.5);
        let op = DenseOperator::new(mat);
        let x: Vec<f64> = (0..7).map(|_| rng.gen::<f64>()).collect();
        let y: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
        let lhs: f64 = op.apply(&x).unwrap().iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(op.apply_adjoint(&y).unwrap()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
