//! Finite-difference validation of every analytic gradient.
//!
//! Each check draws seeded random instances, compares the analytic gradient
//! with central differences component by component and reports the worst
//! relative error `|a − f| / max(|a|, |f|, 1e-3·max|a|)`. Targets are offset
//! from the restored images by at least 0.05 so no L1 kink lies within the
//! difference step.

use rand::Rng as _;

use crate::blur::BlurKernel;
use crate::dataset::Sample;
use crate::deconv::{deconv_step, DeconvPlan};
use crate::error::Result;
use crate::fcnn::{fcnn_backward, random_chain, DenoiserWeights};
use crate::field::RealField;
use crate::hyper::{grad_wrt_gamma, grad_wrt_z, loss_hyper, HyperGradientWorkspace, HyperProblem};
use crate::fcnn::l1_subgradient;
use crate::pipeline::{Domain, InitialGuide};
use crate::rng::{substream, Rng};

/// Tolerance for the deconvolution gradients.
pub const HYPER_TOLERANCE: f64 = 1e-5;
/// Tolerance for the denoiser gradients.
pub const FCNN_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub components: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    pub checks: Vec<CheckResult>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn max_error(&self) -> f64 {
        self.checks.iter().fold(0.0, |m, c| m.max(c.max_rel_error))
    }
}

struct Worst {
    scale: f64,
    pairs: Vec<(f64, f64)>,
}

impl Worst {
    fn new() -> Self {
        Self { scale: 0.0, pairs: Vec::new() }
    }

    fn push(&mut self, analytic: f64, numeric: f64) {
        self.scale = self.scale.max(analytic.abs());
        self.pairs.push((analytic, numeric));
    }

    fn finish(self, name: &str, tolerance: f64) -> CheckResult {
        let floor = 1e-3 * self.scale;
        let max_rel_error = self
            .pairs
            .iter()
            .map(|&(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(floor).max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        CheckResult { name: name.to_string(), max_rel_error, tolerance, components: self.pairs.len() }
    }
}

fn central(f: impl Fn(f64) -> Result<f64>, x: f64, step: f64) -> Result<f64> {
    Ok((f(x + step)? - f(x - step)?) / (2.0 * step))
}

fn field(r: &mut Rng, h: usize, w: usize, lo: f64, hi: f64) -> RealField {
    RealField::from_fn(h, w, |_, _| r.random_range(lo..hi))
}

fn random_kernel(r: &mut Rng, size: usize) -> Result<BlurKernel> {
    let side = [1, 3, 5].into_iter().filter(|&s| s <= size).max().unwrap_or(1);
    let side = if side > 1 && r.random_bool(0.5) { side - 2 } else { side };
    let taps = (0..side * side).map(|_| r.random_range(0.0..1.0)).collect();
    BlurKernel::normalized(side, side, taps)
}

/// Offsets `x` by at least 0.05 in a random direction per pixel.
fn target_near(r: &mut Rng, x: &RealField) -> RealField {
    RealField::from_fn(x.height(), x.width(), |i, j| {
        let m = r.random_range(0.05..0.5);
        if r.random_bool(0.5) {
            x[(i, j)] + m
        } else {
            x[(i, j)] - m
        }
    })
}

struct Instance {
    plan: DeconvPlan,
    y: RealField,
    zh: RealField,
    zw: RealField,
    gamma: f64,
    target: RealField,
}

fn instance(seed: u64, index: u64, size: usize) -> Result<Instance> {
    let mut r = substream(seed, index);
    let k = random_kernel(&mut r, size)?;
    let plan = DeconvPlan::new(&k, size, size)?;
    let y = field(&mut r, size, size, 0.0, 1.0);
    let zh = field(&mut r, size, size, -0.3, 0.3);
    let zw = field(&mut r, size, size, -0.3, 0.3);
    let gamma = r.random_range(-1.0f64..2.0).exp2().powf(3.0);
    let x = deconv_step(&y, &plan, &zh, &zw, gamma)?;
    let target = target_near(&mut r, &x);
    Ok(Instance { plan, y, zh, zw, gamma, target })
}

/// Checks the guide and `γ` gradients of single deconvolution modules on
/// `instances` random `size × size` problems.
pub fn check_deconv(seed: u64, size: usize, instances: usize) -> Result<Vec<CheckResult>> {
    let mut wz = Worst::new();
    let mut wg = Worst::new();
    for n in 0..instances {
        let inst = instance(seed, n as u64, size)?;
        let loss = |zh: &RealField, zw: &RealField, gamma: f64| -> Result<f64> {
            loss_hyper(&deconv_step(&inst.y, &inst.plan, zh, zw, gamma)?, &inst.target, 1)
        };
        let x = deconv_step(&inst.y, &inst.plan, &inst.zh, &inst.zw, inst.gamma)?;
        let delta = l1_subgradient(&x, &inst.target, 1)?;
        let (ah, aw) = grad_wrt_z(&inst.plan, inst.gamma, &delta)?;
        for p in 0..size * size {
            let fh = central(
                |v| {
                    let mut z = inst.zh.clone();
                    z.data_mut()[p] = v;
                    loss(&z, &inst.zw, inst.gamma)
                },
                inst.zh.data()[p],
                1e-6,
            )?;
            wz.push(ah.data()[p], fh);
            let fw = central(
                |v| {
                    let mut z = inst.zw.clone();
                    z.data_mut()[p] = v;
                    loss(&inst.zh, &z, inst.gamma)
                },
                inst.zw.data()[p],
                1e-6,
            )?;
            wz.push(aw.data()[p], fw);
        }
        let d = inst.plan.data_spectrum(&inst.y)?;
        let e = inst.plan.guide_spectrum(&inst.zh, &inst.zw)?;
        let ws = HyperGradientWorkspace::new(&inst.plan, &d, Some(&e), &delta)?;
        let fg = central(|g| loss(&inst.zh, &inst.zw, g), inst.gamma, inst.gamma * 1e-5)?;
        wg.push(grad_wrt_gamma(&ws, inst.gamma), fg);
    }
    Ok(vec![wz.finish("deconv dL/dz", HYPER_TOLERANCE), wg.finish("deconv dL/dgamma", HYPER_TOLERANCE)])
}

/// Checks parameter and input gradients of small random chains, and of a
/// sampled subset of the full six-layer network's parameters.
pub fn check_fcnn(seed: u64, size: usize, instances: usize) -> Result<Vec<CheckResult>> {
    let mut wparam = Worst::new();
    let mut winput = Worst::new();
    for n in 0..instances {
        let mut r = substream(seed, 0x00FC_0000 + n as u64);
        let net = if n % 4 == 3 {
            DenoiserWeights::xavier(r.random())
        } else {
            random_chain(3 + n % 3, 2 + n % 3, 0.5, r.random())
        };
        let g = field(&mut r, size, size, -1.0, 1.0);
        let up = field(&mut r, size, size, -1.0, 1.0);
        let (grads, gin) = fcnn_backward(&net, &g, &up)?;
        let functional = |w: &DenoiserWeights, g: &RealField| -> Result<f64> { Ok(w.forward(g)?.dot(&up)) };
        // Sample at most 40 parameters per network.
        let layer_sizes: Vec<(usize, usize)> =
            net.layers().iter().map(|l| (l.weights.len(), l.bias.len())).collect();
        let total: usize = layer_sizes.iter().map(|(a, b)| a + b).sum();
        let picks: Vec<usize> =
            if total <= 40 { (0..total).collect() } else { (0..40).map(|_| r.random_range(0..total)).collect() };
        for pick in picks {
            let (mut l, mut rest) = (0, pick);
            while rest >= layer_sizes[l].0 + layer_sizes[l].1 {
                rest -= layer_sizes[l].0 + layer_sizes[l].1;
                l += 1;
            }
            let is_bias = rest >= layer_sizes[l].0;
            let idx = if is_bias { rest - layer_sizes[l].0 } else { rest };
            let get = |w: &DenoiserWeights| {
                let layer = &w.layers()[l];
                if is_bias { layer.bias[idx] } else { layer.weights[idx] }
            };
            let analytic = if is_bias { grads.layers[l].bias[idx] } else { grads.layers[l].weights[idx] };
            let numeric = central(
                |v| {
                    let mut w = net.clone();
                    let layer = &mut w.layers_mut()[l];
                    if is_bias {
                        layer.bias[idx] = v;
                    } else {
                        layer.weights[idx] = v;
                    }
                    functional(&w, &g)
                },
                get(&net),
                1e-6,
            )?;
            wparam.push(analytic, numeric);
        }
        for p in 0..size * size {
            let numeric = central(
                |v| {
                    let mut x = g.clone();
                    x.data_mut()[p] = v;
                    functional(&net, &x)
                },
                g.data()[p],
                1e-6,
            )?;
            winput.push(gin.data()[p], numeric);
        }
    }
    Ok(vec![wparam.finish("fcnn dL/dtheta", FCNN_TOLERANCE), winput.finish("fcnn dL/dinput", FCNN_TOLERANCE)])
}

/// Checks the `γ` gradient of whole multi-stage pipelines, including the
/// path through the frozen denoisers, in both domains.
pub fn check_chain(seed: u64, size: usize, instances: usize) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for domain in [Domain::Gradient, Domain::Intensity] {
        let mut worst = Worst::new();
        for n in 0..instances {
            let mut r = substream(seed, 0x00C4_0000 + n as u64);
            let stages: Vec<DenoiserWeights> =
                (0..2).map(|_| random_chain(3, 3, 0.4, r.random())).collect();
            let guide = if n % 2 == 0 { InitialGuide::Zero } else { InitialGuide::Observed };
            let problem = HyperProblem { stages: &stages, domain, initial_guide: guide };
            let k = random_kernel(&mut r, size)?;
            let plan = DeconvPlan::new(&k, size, size)?;
            let y = field(&mut r, size, size, 0.0, 1.0);
            let mut gammas: Vec<f64> = (0..3).map(|_| r.random_range(1.0..100.0)).collect();
            gammas.sort_by(|a, b| b.total_cmp(a));
            let x = problem.restore(&y, &plan, &gammas)?;
            let clean = target_near(&mut r, &x);
            let samples = [Sample { clean, kernel: k, blurred: y, sigma: 0.0, seed: 0 }];
            let plans = [plan];
            let (_, grad) = problem.loss_and_grad(&samples, &plans, &[0], &gammas)?;
            for t in 0..gammas.len() {
                let numeric = central(
                    |v| {
                        let mut g = gammas.clone();
                        g[t] = v;
                        problem.loss(&samples, &plans, &g)
                    },
                    gammas[t],
                    gammas[t] * 1e-5,
                )?;
                worst.push(grad[t], numeric);
            }
        }
        let name = match domain {
            Domain::Gradient => "pipeline dL/dgamma (gradient domain)",
            Domain::Intensity => "pipeline dL/dgamma (intensity domain)",
        };
        out.push(worst.finish(name, HYPER_TOLERANCE));
    }
    Ok(out)
}

/// The full suite on `size × size` problems.
pub fn run_gradcheck(seed: u64, size: usize, instances: usize) -> Result<GradCheckReport> {
    let mut checks = check_deconv(seed, size, instances)?;
    checks.extend(check_fcnn(seed, size.max(crate::fcnn::MIN_INPUT), instances)?);
    checks.extend(check_chain(seed, size.max(crate::fcnn::MIN_INPUT), instances)?);
    Ok(GradCheckReport { checks })
}
