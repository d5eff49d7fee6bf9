//! Spike-and-slab hidden-Markov-tree model and its mean-field variational
//! coordinate-ascent inversion.
//!
//! The generative model on the transform coefficients is
//! `theta = z .* w` with `w_i ~ N(0, 1/alpha_l)`, `z_i ~ Bernoulli(pi_{i,l})`,
//! `y ~ N(Psi theta, I/alpha_0)`. Activation probabilities follow the tree:
//! levels 0 and 1 carry their own Beta-distributed rates, deeper levels
//! switch between a parent-on and a parent-off rate. Per-level slab
//! precisions grow multiplicatively, `alpha_l = prod_{j<=l} tau_j`.
//!
//! Every posterior update below is the standard conjugate mean-field step
//! under the fully factorized posterior with q(theta_i) parameterized by
//! (q_i, mu_i, p_i):
//! * coefficient: precision `p_i = <a0>||psi_i||^2 + <alpha_l>`, mean
//!   `mu_i = <a0><psi_i, r_-i>/p_i`, activation
//!   `q_i = sigmoid(logit pi + (ln alpha_l - ln p_i)/2 + p_i mu_i^2 / 2)`;
//! * noise: Gamma posterior mean over the expected squared residual;
//! * rates: Beta posterior means over soft activation counts;
//! * tau: the printed cumulative form by default, the standard
//!   multiplicative-gamma step behind [`TauUpdateMode::Mgp`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::operator::CsOperator;
use crate::transforms::Transform3D;
use crate::tree::TreeIndex;
use crate::video::VideoCube;

const PROB_EPS: f64 = 1e-12;

/// Gamma and Beta hyperparameters, the Beta rows populated from level counts.
#[derive(Debug, Clone)]
pub struct HyperParams {
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub d0: f64,
    /// Level-0 rate prior; `f0 = 0` pins the scaling coefficients on.
    pub e0: f64,
    pub f0: f64,
    /// Level-1 rate prior.
    pub e1: f64,
    pub f1: f64,
    /// Parent-off and parent-on rate priors, indexed by level (valid from 2).
    pub ep0: Vec<f64>,
    pub fp0: Vec<f64>,
    pub ep1: Vec<f64>,
    pub fp1: Vec<f64>,
}

impl HyperParams {
    /// The default table: `a0 = b0 = c0 = d0 = 1e-6`, `e0 = 1, f0 = 0`,
    /// `e1 = 0.9 N_1, f1 = 0.1 N_1`, `ep0 = N_l/N, fp0 = (N-1) N_l / N`,
    /// `ep1 = fp1 = 0.5 N_l`.
    pub fn from_level_counts(level_counts: &[usize]) -> Self {
        let n: usize = level_counts.iter().sum();
        let nf = n as f64;
        let levels = level_counts.len();
        let n1 = level_counts.get(1).copied().unwrap_or(0) as f64;
        let mut ep0 = vec![0.0; levels];
        let mut fp0 = vec![0.0; levels];
        let mut ep1 = vec![0.0; levels];
        let mut fp1 = vec![0.0; levels];
        for l in 2..levels {
            let nl = level_counts[l] as f64;
            ep0[l] = nl / nf;
            fp0[l] = (nf - 1.0) * nl / nf;
            ep1[l] = 0.5 * nl;
            fp1[l] = 0.5 * nl;
        }
        HyperParams {
            a0: 1e-6,
            b0: 1e-6,
            c0: 1e-6,
            d0: 1e-6,
            e0: 1.0,
            f0: 0.0,
            e1: 0.9 * n1,
            f1: 0.1 * n1,
            ep0,
            fp0,
            ep1,
            fp1,
        }
    }

    /// Whether level 0 is deterministically active (improper Beta(e, 0)).
    pub fn level0_pinned(&self) -> bool {
        self.f0 == 0.0
    }
}

/// Posterior Beta parameters and mean for one activation rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPosterior {
    pub e: f64,
    pub f: f64,
}

impl BetaPosterior {
    pub fn mean(&self) -> f64 {
        if self.e + self.f == 0.0 {
            0.5
        } else {
            self.e / (self.e + self.f)
        }
    }
}

/// Which reading of the per-level precision update runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TauUpdateMode {
    /// Cumulative sums over levels `j <= l`, as printed.
    #[default]
    Verbatim,
    /// Standard multiplicative-gamma step: sums over `j >= l`, each term
    /// weighted by the precision product with tau_l removed.
    Mgp,
}

/// Solver options.
#[derive(Debug, Clone)]
pub struct InferenceOptions {
    pub max_sweeps: usize,
    /// Relative l2 change of `<theta>` that counts as converged.
    pub tolerance: f64,
    pub seed: u64,
    pub trace: bool,
    pub tau_mode: TauUpdateMode,
    /// Disable the conjugate hyperparameter updates (oracle comparisons).
    pub update_noise: bool,
    pub update_tau: bool,
    pub update_pi: bool,
    /// Freeze the noise precision at this value instead of learning it.
    pub fixed_noise_precision: Option<f64>,
    /// Initial per-level tau (defaults to all ones).
    pub init_tau: Option<Vec<f64>>,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            max_sweeps: 200,
            tolerance: 1e-4,
            seed: 0,
            trace: false,
            tau_mode: TauUpdateMode::Verbatim,
            update_noise: true,
            update_tau: true,
            update_pi: true,
            fixed_noise_precision: None,
            init_tau: None,
        }
    }
}

/// Posterior moments tracked per coefficient plus the shared precisions,
/// rates, and the incrementally maintained residual `r = y - Psi <theta>`.
#[derive(Debug, Clone)]
pub struct VBState {
    pub mu: Vec<f64>,
    /// Conditional slab moment `<w^2 | z = 1> = mu^2 + 1/p`.
    pub w2: Vec<f64>,
    pub q: Vec<f64>,
    pub alpha0: f64,
    pub tau: Vec<f64>,
    /// Running products `alpha_l = prod_{j<=l} tau_j`.
    pub alpha: Vec<f64>,
    pub pi0: BetaPosterior,
    pub pi1: BetaPosterior,
    pub pip0: Vec<BetaPosterior>,
    pub pip1: Vec<BetaPosterior>,
    pub residual: Vec<f64>,
    pub sweep: usize,
}

impl VBState {
    pub fn theta(&self) -> Vec<f64> {
        self.mu.iter().zip(&self.q).map(|(m, q)| m * q).collect()
    }

    /// Posterior variance of `theta_i = z_i w_i`.
    pub fn theta_var(&self, i: usize) -> f64 {
        self.q[i] * self.w2[i] - (self.q[i] * self.mu[i]).powi(2)
    }

    pub fn active_count(&self) -> f64 {
        self.q.iter().sum()
    }

    pub fn residual_norm(&self) -> f64 {
        self.residual.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// One line of per-sweep diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct SweepDiag {
    pub sweep: usize,
    pub residual_norm: f64,
    pub active_count: f64,
    pub alpha0: f64,
}

/// CSV `sweep,residual_norm,active_count,alpha0`.
pub fn trace_to_csv(trace: &[SweepDiag]) -> String {
    let mut out = String::from("sweep,residual_norm,active_count,alpha0\n");
    for d in trace {
        out.push_str(&format!(
            "{},{:.12e},{:.6},{:.12e}\n",
            d.sweep, d.residual_norm, d.active_count, d.alpha0
        ));
    }
    out
}

/// Converged output.
pub struct InferenceResult {
    pub theta: Vec<f64>,
    pub state: VBState,
    pub trace: Vec<SweepDiag>,
    pub converged: bool,
    pub sweeps: usize,
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Expected prior log-odds of activation for coefficient i, or `None` when
/// the level-0 rate is pinned at one.
fn prior_logit(state: &VBState, tree: &TreeIndex, hyper: &HyperParams, i: usize) -> Option<f64> {
    match tree.level_unchecked(i) {
        0 => {
            if hyper.level0_pinned() {
                None
            } else {
                Some(logit(state.pi0.mean()))
            }
        }
        1 => Some(logit(state.pi1.mean())),
        l => {
            let q_pa = tree
                .parent_unchecked(i)
                .map(|p| state.q[p])
                .unwrap_or(1.0);
            let on = logit(state.pip1[l].mean());
            let off = logit(state.pip0[l].mean());
            Some(q_pa * on + (1.0 - q_pa) * off)
        }
    }
}

/// Backprojection `Psi^T y` scaled by column energies; the zero-iteration
/// reconstruction used both for initialization and as the baseline.
pub fn backprojection(y: &[f64], op: &dyn CsOperator) -> Result<Vec<f64>> {
    let mut theta = op.apply_adjoint(y)?;
    for (i, t) in theta.iter_mut().enumerate() {
        let cn = op.col_sq_norm(i);
        if cn > 1e-300 {
            *t /= cn;
        } else {
            *t = 0.0;
        }
    }
    Ok(theta)
}

/// Initialize the posterior state from the backprojection of `y`.
pub fn init_state(
    y: &[f64],
    op: &dyn CsOperator,
    tree: &TreeIndex,
    hyper: &HyperParams,
    opts: &InferenceOptions,
) -> Result<VBState> {
    let n = op.dim_in();
    let m = op.dim_out();
    if y.len() != m {
        return Err(Error::dim(format!("y length {} != operator rows {m}", y.len())));
    }
    if tree.len() != n {
        return Err(Error::dim(format!("tree size {} != operator columns {n}", tree.len())));
    }
    let levels = tree.max_level() + 1;

    let mu = backprojection(y, op)?;
    let w2: Vec<f64> = mu.iter().map(|v| v * v).collect();

    let tau = match &opts.init_tau {
        Some(t) => {
            if t.len() != levels {
                return Err(Error::param(format!(
                    "init_tau holds {} levels, tree has {levels}",
                    t.len()
                )));
            }
            t.clone()
        }
        None => vec![1.0; levels],
    };
    let alpha = prefix_products(&tau);

    let pi0 = BetaPosterior { e: hyper.e0, f: hyper.f0 };
    let pi1 = BetaPosterior { e: hyper.e1, f: hyper.f1 };
    let pip0: Vec<BetaPosterior> = (0..levels)
        .map(|l| BetaPosterior { e: hyper.ep0.get(l).copied().unwrap_or(0.0), f: hyper.fp0.get(l).copied().unwrap_or(0.0) })
        .collect();
    let pip1: Vec<BetaPosterior> = (0..levels)
        .map(|l| BetaPosterior { e: hyper.ep1.get(l).copied().unwrap_or(0.0), f: hyper.fp1.get(l).copied().unwrap_or(0.0) })
        .collect();

    let mut state = VBState {
        mu,
        w2,
        q: vec![0.0; n],
        alpha0: if hyper.b0 > 0.0 { hyper.a0 / hyper.b0 } else { 1.0 },
        tau,
        alpha,
        pi0,
        pi1,
        pip0,
        pip1,
        residual: Vec::new(),
        sweep: 0,
    };

    // prior activation means, coarse-to-fine so parents are set first
    for &i in &tree.coarse_to_fine() {
        state.q[i] = match tree.level_unchecked(i) {
            0 => {
                if hyper.level0_pinned() {
                    1.0
                } else {
                    state.pi0.mean()
                }
            }
            1 => state.pi1.mean(),
            l => {
                let q_pa = tree.parent_unchecked(i).map(|p| state.q[p]).unwrap_or(1.0);
                q_pa * state.pip1[l].mean() + (1.0 - q_pa) * state.pip0[l].mean()
            }
        };
    }

    let fitted = op.apply(&state.theta())?;
    state.residual = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();

    match opts.fixed_noise_precision {
        Some(a0) => state.alpha0 = a0,
        None => update_alpha0(&mut state, op, hyper),
    }
    Ok(state)
}

fn prefix_products(tau: &[f64]) -> Vec<f64> {
    let mut alpha = Vec::with_capacity(tau.len());
    let mut prod = 1.0;
    for &t in tau {
        prod *= t;
        alpha.push(prod);
    }
    alpha
}

/// Coordinate update of `(mu_i, w2_i, q_i)` with incremental residual upkeep.
pub fn update_coefficient(
    state: &mut VBState,
    op: &dyn CsOperator,
    tree: &TreeIndex,
    hyper: &HyperParams,
    i: usize,
) -> Result<()> {
    let lvl = tree.level_unchecked(i);
    let alpha_l = state.alpha[lvl];
    let cn = op.col_sq_norm(i);
    let c_old = state.q[i] * state.mu[i];
    // <psi_i, r_-i> with the residual currently excluding nothing
    let dot = op.col_dot(i, &state.residual) + c_old * cn;
    let p = state.alpha0 * cn + alpha_l;
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::Numerical {
            sweep: state.sweep,
            reason: format!("coefficient {i}: nonpositive posterior precision {p}"),
        });
    }
    let mu = state.alpha0 * dot / p;
    let q = match prior_logit(state, tree, hyper, i) {
        None => 1.0,
        Some(lp) => sigmoid(lp + 0.5 * (alpha_l.ln() - p.ln()) + 0.5 * p * mu * mu),
    };
    state.mu[i] = mu;
    state.w2[i] = mu * mu + 1.0 / p;
    state.q[i] = q;
    let c_new = q * mu;
    if c_new != c_old {
        op.col_axpy(i, c_old - c_new, &mut state.residual);
    }
    Ok(())
}

/// Conjugate noise-precision update over the expected squared residual.
pub fn update_alpha0(state: &mut VBState, op: &dyn CsOperator, hyper: &HyperParams) {
    let m = op.dim_out() as f64;
    let mut expected_sq = state.residual.iter().map(|v| v * v).sum::<f64>();
    for i in 0..op.dim_in() {
        expected_sq += op.col_sq_norm(i) * state.theta_var(i);
    }
    state.alpha0 = (hyper.a0 + 0.5 * m) / (hyper.b0 + 0.5 * expected_sq);
}

/// Per-level slab-precision update; refreshes the `alpha` products.
///
/// `<w^2>` mixes the data-informed slab posterior with the untouched prior
/// slab: `q (mu^2 + 1/p) + (1 - q) / alpha_l`. The second term matters — a
/// switched-off coefficient still carries a slab variable distributed as its
/// prior, and dropping it lets tau grow without bound on sparse problems.
pub fn update_tau(state: &mut VBState, tree: &TreeIndex, hyper: &HyperParams, mode: TauUpdateMode) {
    let levels = state.tau.len();
    let counts = tree.level_counts();
    // per-level sums of <w^2>
    let mut w2_sum = vec![0.0; levels];
    for i in 0..tree.len() {
        let l = tree.level_unchecked(i);
        let q = state.q[i];
        w2_sum[l] += q * state.w2[i] + (1.0 - q) / state.alpha[l];
    }
    match mode {
        TauUpdateMode::Verbatim => {
            let mut cum_n = 0.0;
            let mut cum_w2 = 0.0;
            for l in 0..levels {
                cum_n += counts[l] as f64;
                cum_w2 += w2_sum[l];
                state.tau[l] = (hyper.c0 + 0.5 * cum_n) / (hyper.d0 + 0.5 * cum_w2);
            }
        }
        TauUpdateMode::Mgp => {
            for l in 0..levels {
                let shape: f64 =
                    hyper.c0 + 0.5 * counts[l..].iter().map(|&c| c as f64).sum::<f64>();
                let mut rate = hyper.d0;
                let alpha = prefix_products(&state.tau);
                for j in l..levels {
                    rate += 0.5 * (alpha[j] / state.tau[l]) * w2_sum[j];
                }
                state.tau[l] = shape / rate;
            }
        }
    }
    state.alpha = prefix_products(&state.tau);
}

/// Beta posterior updates of every activation rate from soft counts.
pub fn update_pi(state: &mut VBState, tree: &TreeIndex, hyper: &HyperParams) {
    let levels = state.tau.len();
    let mut on0 = 0.0;
    let mut n0 = 0.0;
    let mut on1 = 0.0;
    let mut n1 = 0.0;
    let mut on_p1 = vec![0.0; levels];
    let mut w_p1 = vec![0.0; levels];
    let mut on_p0 = vec![0.0; levels];
    let mut w_p0 = vec![0.0; levels];
    for i in 0..tree.len() {
        let q = state.q[i];
        match tree.level_unchecked(i) {
            0 => {
                on0 += q;
                n0 += 1.0;
            }
            1 => {
                on1 += q;
                n1 += 1.0;
            }
            l => {
                let q_pa = tree.parent_unchecked(i).map(|p| state.q[p]).unwrap_or(1.0);
                on_p1[l] += q_pa * q;
                w_p1[l] += q_pa;
                on_p0[l] += (1.0 - q_pa) * q;
                w_p0[l] += 1.0 - q_pa;
            }
        }
    }
    if !hyper.level0_pinned() {
        state.pi0 = BetaPosterior { e: hyper.e0 + on0, f: hyper.f0 + (n0 - on0) };
    }
    state.pi1 = BetaPosterior { e: hyper.e1 + on1, f: hyper.f1 + (n1 - on1) };
    for l in 2..levels {
        state.pip1[l] = BetaPosterior {
            e: hyper.ep1[l] + on_p1[l],
            f: hyper.fp1[l] + (w_p1[l] - on_p1[l]),
        };
        state.pip0[l] = BetaPosterior {
            e: hyper.ep0[l] + on_p0[l],
            f: hyper.fp0[l] + (w_p0[l] - on_p0[l]),
        };
    }
}

/// Full coordinate-ascent inversion.
pub fn run_inference(
    y: &[f64],
    op: &dyn CsOperator,
    tree: &TreeIndex,
    hyper: &HyperParams,
    opts: &InferenceOptions,
) -> Result<InferenceResult> {
    let mut state = init_state(y, op, tree, hyper, opts)?;
    let order = tree.coarse_to_fine();
    let mut theta_prev = state.theta();
    let mut trace = Vec::new();
    let mut converged = false;

    for sweep in 1..=opts.max_sweeps {
        state.sweep = sweep;
        for &i in &order {
            update_coefficient(&mut state, op, tree, hyper, i)?;
        }
        if opts.update_noise && opts.fixed_noise_precision.is_none() {
            update_alpha0(&mut state, op, hyper);
        }
        if opts.update_tau {
            update_tau(&mut state, tree, hyper, opts.tau_mode);
        }
        if opts.update_pi {
            update_pi(&mut state, tree, hyper);
        }

        let theta = state.theta();
        if theta.iter().any(|v| !v.is_finite())
            || state.residual.iter().any(|v| !v.is_finite())
            || !state.alpha0.is_finite()
        {
            return Err(Error::Numerical {
                sweep,
                reason: "non-finite value in posterior state".into(),
            });
        }

        trace.push(SweepDiag {
            sweep,
            residual_norm: state.residual_norm(),
            active_count: state.active_count(),
            alpha0: state.alpha0,
        });

        let diff: f64 = theta
            .iter()
            .zip(&theta_prev)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let base: f64 = theta_prev.iter().map(|v| v * v).sum::<f64>().sqrt();
        theta_prev = theta;
        if diff <= opts.tolerance * base.max(1e-12) {
            converged = true;
            break;
        }
    }

    let sweeps = state.sweep;
    Ok(InferenceResult { theta: state.theta(), state, trace, converged, sweeps })
}

/// Inverse-transform the posterior mean coefficients back to a cube.
pub fn reconstruct(theta: &[f64], transform: &Transform3D, clamp: bool) -> Result<VideoCube> {
    let mut cube = transform.inverse(theta)?;
    if clamp {
        cube.clamp_unit();
    }
    Ok(cube)
}

/// A draw from the generative model: tree-persistent support, level-decaying
/// slab magnitudes.
#[derive(Debug, Clone)]
pub struct PriorSample {
    pub theta: Vec<f64>,
    pub support: Vec<bool>,
}

/// Sample `theta* = z .* w` top-down over the tree. `tau` supplies the
/// per-level precision factors; `pi1`, `pip1`, `pip0` the activation rates.
pub fn sample_prior(
    tree: &TreeIndex,
    tau: &[f64],
    pi1: f64,
    pip1: f64,
    pip0: f64,
    seed: u64,
) -> Result<PriorSample> {
    let levels = tree.max_level() + 1;
    if tau.len() != levels {
        return Err(Error::param(format!("tau holds {} levels, tree has {levels}", tau.len())));
    }
    let alpha = prefix_products(tau);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = tree.len();
    let mut support = vec![false; n];
    let mut theta = vec![0.0; n];
    for &i in &tree.coarse_to_fine() {
        let lvl = tree.level_unchecked(i);
        let pi = match lvl {
            0 => 1.0,
            1 => pi1,
            _ => {
                let parent_on = tree.parent_unchecked(i).map(|p| support[p]).unwrap_or(true);
                if parent_on {
                    pip1
                } else {
                    pip0
                }
            }
        };
        let z = rng.gen::<f64>() < pi;
        support[i] = z;
        if z {
            let sd = (1.0 / alpha[lvl]).sqrt();
            let dist = Normal::new(0.0, sd).map_err(|_| Error::param("bad tau"))?;
            theta[i] = dist.sample(&mut rng);
        }
    }
    Ok(PriorSample { theta, support })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DenseOperator;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_opts() -> InferenceOptions {
        InferenceOptions::default()
    }

    #[test]
    fn hyper_defaults_match_table() {
        let counts = [1usize, 7, 56, 448];
        let h = HyperParams::from_level_counts(&counts);
        let n: usize = counts.iter().sum();
        assert_eq!(h.a0, 1e-6);
        assert_eq!(h.b0, 1e-6);
        assert_eq!(h.c0, 1e-6);
        assert_eq!(h.d0, 1e-6);
        assert_eq!(h.e0, 1.0);
        assert_eq!(h.f0, 0.0);
        assert!(h.level0_pinned());
        assert_eq!(h.e1, 0.9 * 7.0);
        assert_eq!(h.f1, 0.1 * 7.0);
        for l in 2..4 {
            let nl = counts[l] as f64;
            assert_eq!(h.ep0[l], nl / n as f64);
            assert_eq!(h.fp0[l], (n as f64 - 1.0) * nl / n as f64);
            assert_eq!(h.ep1[l], 0.5 * nl);
            assert_eq!(h.fp1[l], 0.5 * nl);
        }
    }

    #[test]
    fn init_zero_measurement() {
        let op = DenseOperator::new(Array2::from_shape_fn((4, 4), |(r, c)| {
            if r == c {
                1.0
            } else {
                0.0
            }
        }));
        let tree = TreeIndex::flat(4);
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let state = init_state(&[0.0; 4], &op, &tree, &hyper, &default_opts()).unwrap();
        assert!(state.theta().iter().all(|&v| v == 0.0));
        assert!(state.residual.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_level0_pinned_q_one() {
        use crate::forward::MaskStack;
        use crate::transforms::{Basis1D, WaveletVariant};
        use crate::operator::PsiOperator;
        use crate::tree::{build_tree, TreeLayout};
        let t = Transform3D::new(
            Basis1D::wavelet(8, 2, WaveletVariant::EightTap).unwrap(),
            Basis1D::wavelet(8, 2, WaveletVariant::EightTap).unwrap(),
            Basis1D::dct(4).unwrap(),
        );
        let op = PsiOperator::new(MaskStack::all_ones(8, 8, 4), t).unwrap();
        let tree = build_tree(TreeLayout::hybrid((8, 8, 4), 2).unwrap()).unwrap();
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let y = vec![0.5; 64];
        let state = init_state(&y, &op, &tree, &hyper, &default_opts()).unwrap();
        for i in 0..tree.len() {
            if tree.level_unchecked(i) == 0 {
                assert_eq!(state.q[i], 1.0);
            }
        }
    }

    #[test]
    fn single_coefficient_matches_exact_two_hypothesis_posterior() {
        // N = 1, scalar Psi, fixed pi = 0.5 and fixed precisions: the mean-field
        // update is the exact Bayes posterior over z in {0, 1}
        let psi = 0.8;
        let y = 0.9;
        let alpha0 = 25.0;
        let alpha = 4.0;
        let pi = 0.5;

        let op = DenseOperator::new(Array2::from_elem((1, 1), psi));
        let tree = TreeIndex::flat(1);
        let mut hyper = HyperParams::from_level_counts(tree.level_counts());
        hyper.e1 = pi;
        hyper.f1 = 1.0 - pi;
        let opts = InferenceOptions {
            update_noise: false,
            update_tau: false,
            update_pi: false,
            fixed_noise_precision: Some(alpha0),
            init_tau: Some(vec![1.0, alpha]),
            tolerance: 1e-12,
            ..default_opts()
        };
        let res = run_inference(&[y], &op, &tree, &hyper, &opts).unwrap();

        // exact: z = 1 evidence N(y; 0, 1/a0 + psi^2/alpha), z = 0 evidence N(y; 0, 1/a0)
        let var1 = 1.0 / alpha0 + psi * psi / alpha;
        let var0 = 1.0 / alpha0;
        let ev = |var: f64| (-0.5 * y * y / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let q_exact = pi * ev(var1) / (pi * ev(var1) + (1.0 - pi) * ev(var0));
        let p = alpha0 * psi * psi + alpha;
        let mu_exact = alpha0 * psi * y / p;

        assert!((res.state.q[0] - q_exact).abs() < 1e-10, "q {} vs {}", res.state.q[0], q_exact);
        assert!((res.state.mu[0] - mu_exact).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_measurement_keeps_mu_zero() {
        // psi_0 orthogonal to y: mu = 0 and q = sigmoid(logit pi - ln(p/alpha)/2)
        let mat = Array2::from_shape_fn((2, 1), |(r, _)| if r == 0 { 1.0 } else { 0.0 });
        let op = DenseOperator::new(mat);
        let tree = TreeIndex::flat(1);
        let mut hyper = HyperParams::from_level_counts(tree.level_counts());
        hyper.e1 = 0.5;
        hyper.f1 = 0.5;
        let opts = InferenceOptions {
            update_noise: false,
            update_tau: false,
            update_pi: false,
            fixed_noise_precision: Some(10.0),
            ..default_opts()
        };
        let y = vec![0.0, 3.0];
        let mut state = init_state(&y, &op, &tree, &hyper, &opts).unwrap();
        update_coefficient(&mut state, &op, &tree, &hyper, 0).unwrap();
        assert_eq!(state.mu[0], 0.0);
        let p: f64 = 10.0 + 1.0;
        let expect_q = sigmoid(logit(0.5) + 0.5 * (1.0f64.ln() - p.ln()));
        assert!((state.q[0] - expect_q).abs() < 1e-12);
    }

    #[test]
    fn huge_slab_precision_shrinks_w2() {
        let op = DenseOperator::new(Array2::from_elem((1, 1), 1.0));
        let tree = TreeIndex::flat(1);
        let mut hyper = HyperParams::from_level_counts(tree.level_counts());
        hyper.e1 = 0.5;
        hyper.f1 = 0.5;
        let opts = InferenceOptions {
            update_noise: false,
            update_tau: false,
            update_pi: false,
            fixed_noise_precision: Some(1.0),
            init_tau: Some(vec![1.0, 1e12]),
            ..default_opts()
        };
        let mut state = init_state(&[5.0], &op, &tree, &hyper, &opts).unwrap();
        update_coefficient(&mut state, &op, &tree, &hyper, 0).unwrap();
        assert!(state.w2[0] < 1e-10);
    }

    #[test]
    fn alpha0_formula_hand_case() {
        let op = DenseOperator::new(Array2::zeros((2, 1)));
        let tree = TreeIndex::flat(1);
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let mut state = init_state(&[0.0, 0.0], &op, &tree, &hyper, &default_opts()).unwrap();
        state.residual = vec![1.0, 1.0]; // ||r||^2 = 2, zero column norms
        update_alpha0(&mut state, &op, &hyper);
        assert!((state.alpha0 - (1e-6 + 1.0) / (1e-6 + 1.0)).abs() < 1e-5);
    }

    #[test]
    fn alpha0_zero_residual_limit() {
        let op = DenseOperator::new(Array2::zeros((4, 1)));
        let tree = TreeIndex::flat(1);
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let mut state = init_state(&[0.0; 4], &op, &tree, &hyper, &default_opts()).unwrap();
        update_alpha0(&mut state, &op, &hyper);
        let want = (1e-6 + 2.0) / 1e-6;
        assert!((state.alpha0 - want).abs() / want < 1e-12);
        assert!(state.alpha0.is_finite());
    }

    #[test]
    fn alpha0_scales_inverse_square() {
        // scaling y (and the fit residual) by c rescales alpha0 by ~c^-2
        let op = DenseOperator::new(Array2::zeros((64, 1)));
        let tree = TreeIndex::flat(1);
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let mut state = init_state(&vec![0.0; 64], &op, &tree, &hyper, &default_opts()).unwrap();
        state.residual = vec![1.0; 64];
        update_alpha0(&mut state, &op, &hyper);
        let a1 = state.alpha0;
        state.residual = vec![3.0; 64];
        update_alpha0(&mut state, &op, &hyper);
        let a2 = state.alpha0;
        assert!((a1 / a2 - 9.0).abs() < 1e-3);
    }

    #[test]
    fn tau_verbatim_hand_case() {
        // 8 coefficients on one level with sum <w^2> = 2: the cumulative
        // formula reduces to (c0 + 4) / (d0 + 1)
        let tree = TreeIndex::flat(8);
        let op = DenseOperator::new(Array2::zeros((1, 8)));
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let mut state = init_state(&[0.0], &op, &tree, &hyper, &default_opts()).unwrap();
        for v in state.w2.iter_mut() {
            *v = 0.25;
        }
        state.q.fill(1.0); // fully on: <w^2> reduces to w2
        update_tau(&mut state, &tree, &hyper, TauUpdateMode::Verbatim);
        let want = (1e-6 + 4.0) / (1e-6 + 1.0);
        assert!((state.tau[1] - want).abs() < 1e-10, "tau {} vs {want}", state.tau[1]);
    }

    #[test]
    fn tau_empty_data_limit_and_monotonicity() {
        let tree = TreeIndex::flat(8);
        let op = DenseOperator::new(Array2::zeros((1, 8)));
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let mut state = init_state(&[0.0], &op, &tree, &hyper, &default_opts()).unwrap();
        for v in state.w2.iter_mut() {
            *v = 0.0;
        }
        state.q.fill(1.0);
        update_tau(&mut state, &tree, &hyper, TauUpdateMode::Verbatim);
        assert!((state.tau[1] - (1e-6 + 4.0) / 1e-6).abs() / state.tau[1] < 1e-10);

        let mut last = f64::INFINITY;
        for w in [0.1, 0.5, 2.0, 10.0] {
            for v in state.w2.iter_mut() {
                *v = w;
            }
            update_tau(&mut state, &tree, &hyper, TauUpdateMode::Verbatim);
            assert!(state.tau[1] < last);
            last = state.tau[1];
        }
    }

    #[test]
    fn pi_update_counts() {
        use crate::tree::{build_tree, TreeLayout};
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 3).unwrap()).unwrap();
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let op = DenseOperator::new(Array2::zeros((1, tree.len())));
        let mut state = init_state(&[0.0], &op, &tree, &hyper, &default_opts()).unwrap();
        // all coefficients on
        for v in state.q.iter_mut() {
            *v = 1.0;
        }
        update_pi(&mut state, &tree, &hyper);
        for l in 2..=3 {
            let c = tree.level_counts()[l] as f64;
            let want = (hyper.ep1[l] + c) / (hyper.ep1[l] + hyper.fp1[l] + c);
            assert!((state.pip1[l].mean() - want).abs() < 1e-12);
            // no parent-off mass: prior mean retained
            let prior = hyper.ep0[l] / (hyper.ep0[l] + hyper.fp0[l]);
            assert!((state.pip0[l].mean() - prior).abs() < 1e-12);
            assert!(state.pip1[l].mean() >= 0.0 && state.pip1[l].mean() <= 1.0);
        }
        // pinned level-0 rate stays at one
        assert!(hyper.level0_pinned());
        assert_eq!(state.pi0.mean(), 1.0);
    }

    #[test]
    fn pi_no_data_keeps_prior_mean() {
        use crate::tree::{build_tree, TreeLayout};
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 2).unwrap()).unwrap();
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let op = DenseOperator::new(Array2::zeros((1, tree.len())));
        let mut state = init_state(&[0.0], &op, &tree, &hyper, &default_opts()).unwrap();
        for v in state.q.iter_mut() {
            *v = 0.0;
        }
        // parents all off: parent-on rate sees no mass, mean stays 0.5
        update_pi(&mut state, &tree, &hyper);
        assert!((state.pip1[2].mean() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_measurement_converges_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let mat = Array2::from_shape_fn((10, 6), |_| rng.gen::<f64>() - 0.5);
        let op = DenseOperator::new(mat);
        let tree = TreeIndex::flat(6);
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let res = run_inference(&vec![0.0; 10], &op, &tree, &hyper, &default_opts()).unwrap();
        assert!(res.theta.iter().all(|&v| v.abs() < 1e-8));
    }

    #[test]
    fn determinism_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mat = Array2::from_shape_fn((12, 8), |_| rng.gen::<f64>() - 0.5);
        let y: Vec<f64> = (0..12).map(|_| rng.gen::<f64>()).collect();
        let op = DenseOperator::new(mat);
        let tree = TreeIndex::flat(8);
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let opts = InferenceOptions { trace: true, ..default_opts() };
        let a = run_inference(&y, &op, &tree, &hyper, &opts).unwrap();
        let b = run_inference(&y, &op, &tree, &hyper, &opts).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(trace_to_csv(&a.trace), trace_to_csv(&b.trace));
    }

    #[test]
    fn residual_bookkeeping_stays_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mat = Array2::from_shape_fn((16, 12), |_| rng.gen::<f64>() - 0.5);
        let y: Vec<f64> = (0..16).map(|_| rng.gen::<f64>()).collect();
        let op = DenseOperator::new(mat);
        let tree = TreeIndex::flat(12);
        let hyper = HyperParams::from_level_counts(tree.level_counts());
        let res = run_inference(&y, &op, &tree, &hyper, &default_opts()).unwrap();
        let fitted = op.apply(&res.theta).unwrap();
        let drift: f64 = res
            .state
            .residual
            .iter()
            .zip(y.iter().zip(&fitted))
            .map(|(r, (yy, f))| (r - (yy - f)).powi(2))
            .sum::<f64>()
            .sqrt();
        let yn: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(drift <= 1e-8 * yn, "drift {drift}");
        for &q in &res.state.q {
            assert!((0.0..=1.0).contains(&q));
        }
        assert!(res.state.alpha0 > 0.0);
        assert!(res.state.tau.iter().all(|&t| t > 0.0));
        assert!(res.state.alpha.iter().all(|&a| a > 0.0));
    }

    #[test]
    fn prior_sample_is_tree_persistent() {
        use crate::tree::{build_tree, TreeLayout};
        let tree = build_tree(TreeLayout::wavelet3d((8, 8, 8), 3).unwrap()).unwrap();
        let s = sample_prior(&tree, &[1.0, 2.0, 2.0, 2.0], 0.9, 0.5, 0.0, 7).unwrap();
        // pip0 = 0: support strictly nested below level 1
        for i in 0..tree.len() {
            if tree.level_unchecked(i) >= 2 && s.support[i] {
                let p = tree.parent_unchecked(i).unwrap();
                assert!(s.support[p], "active node {i} with inactive parent");
            }
        }
        // level-decaying magnitudes on average
        let a = sample_prior(&tree, &[1.0, 4.0, 4.0, 4.0], 1.0, 1.0, 1.0, 8).unwrap();
        let mut level_mean = vec![(0.0, 0.0); 4];
        for i in 0..tree.len() {
            let l = tree.level_unchecked(i);
            level_mean[l].0 += a.theta[i] * a.theta[i];
            level_mean[l].1 += 1.0;
        }
        let m1 = level_mean[1].0 / level_mean[1].1;
        let m3 = level_mean[3].0 / level_mean[3].1;
        assert!(m3 < m1);
    }
}
