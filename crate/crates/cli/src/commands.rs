//! Pipeline commands: simulate, invert, evaluate, demo.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::{Array2, Array3};

use cacti_core::bayer::{cell_offsets, demosaic_video, merge_bayer, split_bayer, rgb_to_bayer};
use cacti_core::forward::{
    build_mask_stack, forward_measure, gen_mask, read_mask, read_schedule, write_mask_png,
    write_schedule,
};
use cacti_core::operator::PsiOperator;
use cacti_core::transforms::{Basis1D, Transform3D, WaveletVariant};
use cacti_core::tree::{build_tree, TreeIndex, TreeLayout};
use cacti_core::vb::{
    backprojection, reconstruct, run_inference, trace_to_csv, HyperParams, InferenceOptions,
    SweepDiag,
};
use cacti_core::video::{
    load_video, psnr, read_float_container, write_float_container, write_png_frames, ColorVideo,
    MosaicImage, PsnrReport, VideoCube,
};
use cacti_core::{Error, MaskPattern, MaskStack, NoiseModel, ShiftSchedule};

use crate::config::{ColorMode, RunConfig};

/// Demo grid presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoSize {
    Tiny,
    Small,
}

impl DemoSize {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tiny" => Ok(DemoSize::Tiny),
            "small" => Ok(DemoSize::Small),
            other => anyhow::bail!("demo size must be `tiny` or `small`, got `{other}`"),
        }
    }

    fn dims(self, nt: usize) -> (usize, usize, usize) {
        match self {
            DemoSize::Tiny => (32, 32, nt),
            DemoSize::Small => (64, 64, nt),
        }
    }
}

/// Deterministic synthetic test sequence: a dark background with one bright
/// and one dim square stepping in opposite diagonal directions.
pub fn moving_pattern(nx: usize, ny: usize, nt: usize) -> VideoCube {
    let s = (nx / 4).max(2);
    let mut data = Array3::from_elem((nx, ny, nt), 0.15);
    for k in 0..nt {
        let r1 = (1 + k).min(nx.saturating_sub(s));
        let c1 = (1 + k).min(ny.saturating_sub(s));
        for i in r1..(r1 + s).min(nx) {
            for j in c1..(c1 + s).min(ny) {
                data[[i, j, k]] = 0.85;
            }
        }
        let r2 = nx.saturating_sub(s + 1 + k);
        let c2 = (1 + 2 * k).min(ny.saturating_sub(1));
        for i in r2..(r2 + s).min(nx) {
            for j in c2..(c2 + s).min(ny) {
                data[[i, j, k]] = 0.5;
            }
        }
    }
    VideoCube::new(data)
}

fn make_basis(name: &str, n: usize, levels: usize) -> cacti_core::Result<Basis1D> {
    match name {
        "dct" => Basis1D::dct(n),
        "db8" => Basis1D::wavelet(n, levels, WaveletVariant::EightTap),
        other => Err(Error::param(format!("unknown basis `{other}`"))),
    }
}

/// Per-axis bases plus the matching tree layout for the configured dims.
pub fn build_problem(
    nx: usize,
    ny: usize,
    nt: usize,
    cfg: &RunConfig,
) -> cacti_core::Result<(Transform3D, TreeIndex)> {
    let bx = make_basis(&cfg.basis_x, nx, cfg.levels)?;
    let by = make_basis(&cfg.basis_y, ny, cfg.levels)?;
    let bt = make_basis(&cfg.basis_t, nt, cfg.levels)?;
    let layout = match (cfg.basis_x.as_str(), cfg.basis_t.as_str()) {
        ("db8", "dct") => TreeLayout::hybrid((nx, ny, nt), cfg.levels)?,
        ("db8", "db8") => TreeLayout::wavelet3d((nx, ny, nt), cfg.levels)?,
        ("dct", "dct") => TreeLayout::dct_block((nx, ny, nt), cfg.levels)?,
        (x, t) => return Err(Error::param(format!("unsupported basis combination ({x}, {t})"))),
    };
    Ok((Transform3D::new(bx, by, bt), build_tree(layout)?))
}

/// Restrict a sensor-resolution mask stack to one Bayer cell position.
fn subsample_masks(full: &MaskStack, off: (usize, usize)) -> MaskStack {
    let (nx, ny) = full.dims();
    let masks = full
        .masks
        .iter()
        .map(|m| Array2::from_shape_fn((nx / 2, ny / 2), |(i, j)| m[[2 * i + off.0, 2 * j + off.1]]))
        .collect();
    MaskStack { masks }
}

fn gray_of(cv: &ColorVideo) -> VideoCube {
    let mut data = cv.r.data.clone();
    data += &cv.g.data;
    data += &cv.b.data;
    data.mapv_inplace(|v| v / 3.0);
    VideoCube::new(data)
}

fn take_frames(c: &VideoCube, nt: usize) -> cacti_core::Result<VideoCube> {
    let (nx, ny, have) = c.data.dim();
    if have < nt {
        return Err(Error::dim(format!("video holds {have} frames, need {nt}")));
    }
    let mut data = Array3::zeros((nx, ny, nt));
    data.assign(&c.data.slice(ndarray::s![.., .., ..nt]));
    Ok(VideoCube::new(data))
}

/// Resolve the mask pattern: read from the configured path, or generate a
/// Bernoulli pattern just large enough for the schedule.
fn resolve_pattern(
    cfg: &RunConfig,
    nx: usize,
    ny: usize,
    schedule: &ShiftSchedule,
) -> cacti_core::Result<MaskPattern> {
    if let Some(path) = &cfg.mask {
        return read_mask(path);
    }
    let max_r = schedule.offsets.iter().map(|o| o.0).max().unwrap_or(0);
    let max_s = schedule.offsets.iter().map(|o| o.1).max().unwrap_or(0);
    gen_mask(nx + max_r, ny + max_s, cfg.mask_density, cfg.seed)
}

fn resolve_schedule(cfg: &RunConfig) -> cacti_core::Result<ShiftSchedule> {
    match &cfg.schedule {
        Some(path) => read_schedule(path),
        None => Ok(ShiftSchedule::horizontal_unit(cfg.nt)),
    }
}

fn noise_for(cfg: &RunConfig, channel: u64) -> NoiseModel {
    if cfg.noise_sigma > 0.0 {
        NoiseModel::Gaussian { sigma: cfg.noise_sigma, seed: cfg.seed.wrapping_add(channel) }
    } else {
        NoiseModel::None
    }
}

/// Simulate coded snapshots from the configured input video. Writes the mask
/// pattern, schedule, measurement container, and ground truth under `out`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let video_path = cfg
        .video
        .as_ref()
        .ok_or_else(|| anyhow::anyhow!("simulate needs an input video (`--video` or `video =`)"))?;
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output dir {}", cfg.out.display()))?;

    let cv = load_video(video_path, true)?;
    let (nx, ny, _) = cv.dims();
    let schedule = resolve_schedule(cfg)?;
    let pattern = resolve_pattern(cfg, nx, ny, &schedule)?;
    let stack = build_mask_stack(&pattern, &schedule, nx, ny, cfg.wrap)?;

    write_mask_png(&cfg.out.join("mask.png"), &pattern)?;
    write_schedule(&cfg.out.join("schedule.csv"), &schedule)?;

    match cfg.color {
        ColorMode::Mono => {
            let truth = take_frames(&gray_of(&cv), cfg.nt)?;
            let m = forward_measure(&truth, &stack, &noise_for(cfg, 0))?;
            let meas = VideoCube::from_flat(&m.to_flat(), nx, ny, 1)?;
            write_float_container(&cfg.out.join("measurement.fc"), &[meas])?;
            write_float_container(&cfg.out.join("truth.fc"), &[truth])?;
        }
        ColorMode::Bayer => {
            let truth_rgb = ColorVideo::new(
                take_frames(&cv.r, cfg.nt)?,
                take_frames(&cv.g, cfg.nt)?,
                take_frames(&cv.b, cfg.nt)?,
            )?;
            let mosaics = rgb_to_bayer(&truth_rgb, cfg.bayer_layout)?;
            let mut mosaic_cube = Array3::zeros((nx, ny, cfg.nt));
            for (k, m) in mosaics.iter().enumerate() {
                mosaic_cube.slice_mut(ndarray::s![.., .., k]).assign(&m.data);
            }
            let mut meas_channels = Vec::with_capacity(4);
            for (ci, off) in cell_offsets(cfg.bayer_layout).into_iter().enumerate() {
                let sub_stack = subsample_masks(&stack, off);
                let mut chan = Array3::zeros((nx / 2, ny / 2, cfg.nt));
                for (k, m) in mosaics.iter().enumerate() {
                    let ch = split_bayer(m)?;
                    let plane = [&ch.r, &ch.g1, &ch.g2, &ch.b][ci];
                    chan.slice_mut(ndarray::s![.., .., k]).assign(plane);
                }
                let m = forward_measure(&VideoCube::new(chan), &sub_stack, &noise_for(cfg, ci as u64))?;
                meas_channels.push(VideoCube::from_flat(&m.to_flat(), nx / 2, ny / 2, 1)?);
            }
            write_float_container(&cfg.out.join("measurement.fc"), &meas_channels)?;
            write_float_container(&cfg.out.join("truth.fc"), &[VideoCube::new(mosaic_cube)])?;
            write_float_container(
                &cfg.out.join("truth_rgb.fc"),
                &[truth_rgb.r, truth_rgb.g, truth_rgb.b],
            )?;
        }
    }
    Ok(())
}

/// One channel inversion; returns the clamped reconstruction, the sweep
/// trace, and the clamped backprojection baseline.
fn invert_channel(
    y_cube: &VideoCube,
    masks: MaskStack,
    cfg: &RunConfig,
    seed: u64,
) -> cacti_core::Result<(VideoCube, Vec<SweepDiag>, VideoCube)> {
    let (nx, ny, _) = y_cube.data.dim();
    let (transform, tree) = build_problem(nx, ny, cfg.nt, cfg)?;
    let op = PsiOperator::new(masks, transform)?;
    let hyper = HyperParams::from_level_counts(tree.level_counts());
    let opts = InferenceOptions {
        max_sweeps: cfg.max_sweeps,
        tolerance: cfg.tolerance,
        seed,
        trace: true,
        tau_mode: cfg.tau_update,
        ..Default::default()
    };
    let y = y_cube.to_flat();
    let bp_theta = backprojection(&y, &op)?;
    let baseline = reconstruct(&bp_theta, op.transform(), true)?;
    let res = run_inference(&y, &op, &tree, &hyper, &opts)?;
    let recon = reconstruct(&res.theta, op.transform(), true)?;
    Ok((recon, res.trace, baseline))
}

/// Outcome of `cmd_invert`, kept for the demo's baseline comparison.
pub struct InvertOutcome {
    pub baseline: Vec<VideoCube>,
}

fn mask_path(cfg: &RunConfig) -> PathBuf {
    cfg.mask.clone().unwrap_or_else(|| cfg.out.join("mask.png"))
}

/// Invert the measurement container under `out` and write reconstruction,
/// PNG frames, and per-sweep diagnostics.
pub fn cmd_invert(cfg: &RunConfig) -> Result<InvertOutcome> {
    cfg.validate()?;
    let channels = read_float_container(&cfg.out.join("measurement.fc"))?;
    let pattern = read_mask(&mask_path(cfg))?;
    let schedule = match &cfg.schedule {
        Some(p) => read_schedule(p)?,
        None => read_schedule(&cfg.out.join("schedule.csv"))?,
    };
    if schedule.len() != cfg.nt {
        return Err(Error::dim(format!(
            "schedule holds {} offsets, nt = {}",
            schedule.len(),
            cfg.nt
        ))
        .into());
    }

    match cfg.color {
        ColorMode::Mono => {
            let [meas]: [VideoCube; 1] = <[_; 1]>::try_from(channels)
                .map_err(|v: Vec<_>| Error::dim(format!("expected 1 channel, got {}", v.len())))?;
            let (nx, ny, _) = meas.data.dim();
            let stack = build_mask_stack(&pattern, &schedule, nx, ny, cfg.wrap)?;
            let (recon, trace, baseline) = invert_channel(&meas, stack, cfg, cfg.seed)?;
            write_float_container(&cfg.out.join("recon.fc"), std::slice::from_ref(&recon))?;
            fs::write(cfg.out.join("trace.csv"), trace_to_csv(&trace))
                .map_err(|e| Error::io(cfg.out.join("trace.csv"), e))?;
            let gray = ColorVideo::new(recon.clone(), recon.clone(), recon.clone())?;
            write_png_frames(&cfg.out.join("frames"), &gray)?;
            if cfg.trace {
                print!("{}", trace_to_csv(&trace));
            }
            Ok(InvertOutcome { baseline: vec![baseline] })
        }
        ColorMode::Bayer => {
            if channels.len() != 4 {
                return Err(Error::dim(format!("expected 4 channels, got {}", channels.len())).into());
            }
            let (qx, qy, _) = channels[0].data.dim();
            let (nx, ny) = (2 * qx, 2 * qy);
            let stack = build_mask_stack(&pattern, &schedule, nx, ny, cfg.wrap)?;
            let offs = cell_offsets(cfg.bayer_layout);
            let mut slots: Vec<cacti_core::Result<_>> = Vec::new();
            std::thread::scope(|scope| {
                let handles: Vec<_> = channels
                    .iter()
                    .zip(offs.iter())
                    .enumerate()
                    .map(|(ci, (meas, off))| {
                        let sub = subsample_masks(&stack, *off);
                        let cfg = cfg.clone();
                        scope.spawn(move || {
                            invert_channel(meas, sub, &cfg, cfg.seed.wrapping_add(ci as u64))
                        })
                    })
                    .collect();
                slots = handles.into_iter().map(|h| h.join().expect("channel job panicked")).collect();
            });
            let mut recons = Vec::new();
            let mut baselines = Vec::new();
            for (name, slot) in ["r", "g1", "g2", "b"].iter().zip(slots) {
                let (recon, trace, baseline) = slot?;
                let path = cfg.out.join(format!("trace_{name}.csv"));
                fs::write(&path, trace_to_csv(&trace)).map_err(|e| Error::io(path, e))?;
                if cfg.trace {
                    print!("{}", trace_to_csv(&trace));
                }
                recons.push(recon);
                baselines.push(baseline);
            }
            let merge_rgb = |quarters: &[VideoCube]| -> cacti_core::Result<ColorVideo> {
                let mut mosaics = Vec::with_capacity(cfg.nt);
                for k in 0..cfg.nt {
                    let mut ch = split_bayer(&MosaicImage::new(
                        Array2::zeros((nx, ny)),
                        cfg.bayer_layout,
                    )?)?;
                    ch.r = quarters[0].frame(k);
                    ch.g1 = quarters[1].frame(k);
                    ch.g2 = quarters[2].frame(k);
                    ch.b = quarters[3].frame(k);
                    mosaics.push(merge_bayer(&ch)?);
                }
                demosaic_video(&mosaics)
            };
            let rgb = merge_rgb(&recons)?;
            let rgb_base = merge_rgb(&baselines)?;
            write_float_container(
                &cfg.out.join("recon.fc"),
                &[rgb.r.clone(), rgb.g.clone(), rgb.b.clone()],
            )?;
            write_png_frames(&cfg.out.join("frames"), &rgb)?;
            Ok(InvertOutcome { baseline: vec![rgb_base.r, rgb_base.g, rgb_base.b] })
        }
    }
}

/// Average per-frame PSNR across matching container channels.
pub fn container_psnr(recon: &[VideoCube], truth: &[VideoCube], peak: f64) -> cacti_core::Result<PsnrReport> {
    if recon.len() != truth.len() {
        return Err(Error::dim(format!(
            "channel count mismatch: {} vs {}",
            recon.len(),
            truth.len()
        )));
    }
    let mut per_frame: Option<Vec<f64>> = None;
    for (a, b) in recon.iter().zip(truth) {
        let rep = psnr(a, b, peak)?;
        match &mut per_frame {
            None => per_frame = Some(rep.per_frame),
            Some(acc) => {
                for (x, y) in acc.iter_mut().zip(&rep.per_frame) {
                    *x += y;
                }
            }
        }
    }
    let mut per_frame = per_frame.ok_or_else(|| Error::param("empty containers"))?;
    let n = recon.len() as f64;
    for v in &mut per_frame {
        *v /= n;
    }
    let mean = per_frame.iter().sum::<f64>() / per_frame.len() as f64;
    Ok(PsnrReport { per_frame, mean, peak })
}

/// Compare two float containers frame by frame; writes `psnr.csv` under
/// `out` and returns the report.
pub fn cmd_evaluate(recon: &Path, truth: &Path, peak: f64, out: &Path) -> Result<PsnrReport> {
    let a = read_float_container(recon)?;
    let b = read_float_container(truth)?;
    let rep = container_psnr(&a, &b, peak)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("psnr.csv");
    fs::write(&path, rep.to_csv()).map_err(|e| Error::io(path, e))?;
    Ok(rep)
}

/// Full synthetic pipeline at a preset size: simulate, invert, evaluate, and
/// report the mean PSNR next to the backprojection baseline.
pub fn cmd_demo(cfg: &RunConfig, size: DemoSize) -> Result<()> {
    let (nx, ny, nt) = size.dims(cfg.nt);
    let mut cfg = cfg.clone();
    fs::create_dir_all(&cfg.out)
        .with_context(|| format!("cannot create output dir {}", cfg.out.display()))?;
    let truth = moving_pattern(nx, ny, nt);
    let input = cfg.out.join("input.fc");
    write_float_container(&input, std::slice::from_ref(&truth))?;
    cfg.video = Some(input);
    cfg.color = ColorMode::Mono;
    cfg.nt = nt;

    cmd_simulate(&cfg)?;
    let outcome = cmd_invert(&cfg)?;
    let rep = cmd_evaluate(&cfg.out.join("recon.fc"), &cfg.out.join("truth.fc"), cfg.peak, &cfg.out)?;
    let base = container_psnr(&outcome.baseline, std::slice::from_ref(&truth), cfg.peak)?;
    println!("mean PSNR: {:.4} dB", rep.mean);
    println!("backprojection baseline: {:.4} dB", base.mean);
    Ok(())
}
