//! End-to-end training of the per-stage deconvolution weights `γ` with the
//! denoisers frozen.
//!
//! Each deconvolution computes `x = F⁻¹((γD + E) / (γG + H + ε))`. Its
//! backward pass gives the gradient with respect to the guides,
//! `Δz_l = F⁻¹(F(p_l)·F(Δx) / (γG + H + ε))`, and with respect to `γ`,
//! `Δγ = ⟨Re F⁻¹((D·H − E·G) / (γG + H + ε)²), Δx⟩`. The guard `ε` is left out
//! of the numerator; its exact contribution `ε·D/(γG + H + ε)²` is below
//! `1e-12·|D|/γ²`. Earlier stages are reached through the input gradient of
//! the denoiser and the adjoint of the gradient operator.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::dataset::Sample;
use crate::deconv::{check_gamma, DeconvPlan, GradientOperators, EPSILON};
use crate::error::{shape_err, Error, Result};
use crate::fcnn::{l1_subgradient, DenoiserWeights, Tape};
use crate::field::{fft2, ifft2_real_part, FrequencyField, GradientField, Image, RealField};
use crate::pipeline::{initial_guide_spectrum, Domain, InitialGuide, PipelineConfig};
use crate::rng::substream;

/// Smallest `γ` kept after an update.
pub const GAMMA_FLOOR: f64 = 1e-6;

/// Range of random initial `γ`.
pub const INIT_RANGE: (f64, f64) = (10.0, 1e4);

/// `(1/N)·Σ|x − x0|`.
pub fn loss_hyper(x: &Image, x0: &Image, n: usize) -> Result<f64> {
    if !x.same_dims(x0) {
        return shape_err(format!("{}x{} vs {}x{}", x.height(), x.width(), x0.height(), x0.width()));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(x.data().iter().zip(x0.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64)
}

/// Adjoint of one deconvolution with respect to its guides.
pub fn grad_wrt_z(plan: &DeconvPlan, gamma: f64, delta_x: &RealField) -> Result<(GradientField, GradientField)> {
    check_gamma(gamma)?;
    plan.check(delta_x, "delta_x")?;
    let fdx = fft2(delta_x)?;
    let den = plan.denominator(gamma);
    let scaled: Vec<_> = fdx.data().iter().zip(&den).map(|(f, d)| f / d).collect();
    let (ph, pw) = plan.gradient_otfs();
    let (h, w) = plan.dims();
    let side = |p: &FrequencyField| -> Result<GradientField> {
        let data = p.data().iter().zip(&scaled).map(|(a, b)| a * b).collect();
        Ok(ifft2_real_part(&FrequencyField::new(h, w, data)?))
    };
    Ok((side(ph)?, side(pw)?))
}

/// Everything [`grad_wrt_gamma`] needs about one deconvolution.
#[derive(Clone, Debug)]
pub struct HyperGradientWorkspace<'a> {
    /// `conj(F(k))·F(y)`.
    pub d: &'a FrequencyField,
    /// `Σ_l conj(F(p_l))·F(z_l)`; `None` for zero guides.
    pub e: Option<&'a FrequencyField>,
    /// `|F(k)|²`.
    pub g: &'a [f64],
    /// `Σ_l |F(p_l)|²`.
    pub h: &'a [f64],
    pub delta_x: &'a RealField,
}

impl<'a> HyperGradientWorkspace<'a> {
    pub fn new(
        plan: &'a DeconvPlan,
        d: &'a FrequencyField,
        e: Option<&'a FrequencyField>,
        delta_x: &'a RealField,
    ) -> Result<Self> {
        plan.check(delta_x, "delta_x")?;
        let dims = plan.dims();
        if d.dims() != dims || e.is_some_and(|e| e.dims() != dims) {
            return shape_err("workspace spectra do not match the plan".to_string());
        }
        Ok(Self { d, e, g: plan.kernel_power(), h: plan.grad_power(), delta_x })
    }
}

/// Derivative of `⟨Δx, x(γ)⟩` at `γ`.
pub fn grad_wrt_gamma(ws: &HyperGradientWorkspace<'_>, gamma: f64) -> f64 {
    let (h, w) = ws.delta_x.dims();
    let data = (0..h * w)
        .map(|n| {
            let den = gamma * ws.g[n] + ws.h[n] + EPSILON;
            let num = match ws.e {
                Some(e) => ws.d.data()[n] * ws.h[n] - e.data()[n] * ws.g[n],
                None => ws.d.data()[n] * ws.h[n],
            };
            num / (den * den)
        })
        .collect();
    let dx_dgamma = ifft2_real_part(&FrequencyField::new(h, w, data).expect("workspace dims"));
    dx_dgamma.dot(ws.delta_x)
}

/// The part of a pipeline that `γ` is trained through.
#[derive(Clone, Copy, Debug)]
pub struct HyperProblem<'a> {
    pub stages: &'a [DenoiserWeights],
    pub domain: Domain,
    pub initial_guide: InitialGuide,
}

enum StageTape {
    Gradient { h: Tape, w: Tape },
    Intensity(Tape),
}

struct Trace {
    d: FrequencyField,
    e0: Option<FrequencyField>,
    guides: Vec<FrequencyField>,
    tapes: Vec<StageTape>,
    output: Image,
}

impl<'a> HyperProblem<'a> {
    pub fn from_config(cfg: &'a PipelineConfig) -> Self {
        Self { stages: &cfg.stages, domain: cfg.domain, initial_guide: cfg.initial_guide }
    }

    fn check(&self, gammas: &[f64]) -> Result<()> {
        if gammas.len() != self.stages.len() + 1 {
            return Err(Error::Param(format!(
                "{} gammas for {} stages plus the initial deconvolution",
                gammas.len(),
                self.stages.len()
            )));
        }
        gammas.iter().try_for_each(|&g| check_gamma(g))
    }

    fn trace(&self, y: &Image, plan: &DeconvPlan, gammas: &[f64]) -> Result<Trace> {
        let d = plan.data_spectrum(y)?;
        let e0 = initial_guide_spectrum(y, plan, self.initial_guide)?;
        let mut x = plan.solve(&d, e0.as_ref(), gammas[0])?;
        let mut guides = Vec::with_capacity(self.stages.len());
        let mut tapes = Vec::with_capacity(self.stages.len());
        for (w, &gamma) in self.stages.iter().zip(&gammas[1..]) {
            let (zh, zw, tape) = match self.domain {
                Domain::Gradient => {
                    let (gh, gw) = GradientOperators::apply(&x);
                    let th = w.forward_tape(&gh)?;
                    let tw = w.forward_tape(&gw.transpose())?;
                    (th.output().clone(), tw.output().transpose(), StageTape::Gradient { h: th, w: tw })
                }
                Domain::Intensity => {
                    let t = w.forward_tape(&x)?;
                    let (zh, zw) = GradientOperators::apply(t.output());
                    (zh, zw, StageTape::Intensity(t))
                }
            };
            let e = plan.guide_spectrum(&zh, &zw)?;
            x = plan.solve(&d, Some(&e), gamma)?;
            guides.push(e);
            tapes.push(tape);
        }
        Ok(Trace { d, e0, guides, tapes, output: x })
    }

    /// Final restoration for `gammas = [γ0, γ1, …, γT]`.
    pub fn restore(&self, y: &Image, plan: &DeconvPlan, gammas: &[f64]) -> Result<Image> {
        self.check(gammas)?;
        Ok(self.trace(y, plan, gammas)?.output)
    }

    /// Gradient of `⟨Δx, x^T⟩` with respect to every `γ`.
    fn backward(&self, plan: &DeconvPlan, trace: &Trace, gammas: &[f64], delta: RealField) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; gammas.len()];
        let mut delta = delta;
        for t in (0..self.stages.len()).rev() {
            let gamma = gammas[t + 1];
            let ws = HyperGradientWorkspace::new(plan, &trace.d, Some(&trace.guides[t]), &delta)?;
            grads[t + 1] = grad_wrt_gamma(&ws, gamma);
            let (dzh, dzw) = grad_wrt_z(plan, gamma, &delta)?;
            let w = &self.stages[t];
            delta = match &trace.tapes[t] {
                StageTape::Gradient { h, w: tw } => {
                    let dgh = w.input_gradient(h, &dzh)?;
                    let dgw = w.input_gradient(tw, &dzw.transpose())?.transpose();
                    GradientOperators::adjoint(&dgh, &dgw)?
                }
                StageTape::Intensity(tape) => w.input_gradient(tape, &GradientOperators::adjoint(&dzh, &dzw)?)?,
            };
        }
        let ws = HyperGradientWorkspace::new(plan, &trace.d, trace.e0.as_ref(), &delta)?;
        grads[0] = grad_wrt_gamma(&ws, gammas[0]);
        Ok(grads)
    }

    /// Loss `(1/N)·Σ_i |x_i − clean_i|` over `batch` and its gradient with respect
    /// to `gammas`.
    pub fn loss_and_grad(
        &self,
        samples: &[Sample],
        plans: &[DeconvPlan],
        batch: &[usize],
        gammas: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        self.check(gammas)?;
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = batch.len();
        let parts = batch
            .par_iter()
            .map(|&i| {
                let s = &samples[i];
                let trace = self.trace(&s.blurred, &plans[i], gammas)?;
                let loss = loss_hyper(&trace.output, &s.clean, n)?;
                let delta = l1_subgradient(&trace.output, &s.clean, n)?;
                Ok((loss, self.backward(&plans[i], &trace, gammas, delta)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut loss = 0.0;
        let mut grad = vec![0.0; gammas.len()];
        for (l, g) in parts {
            loss += l;
            grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        Ok((loss, grad))
    }

    /// Loss for each candidate final `γ` in `grid`, all earlier `γ` fixed to
    /// `fixed`. The last guide does not depend on the final `γ`, so the
    /// denoisers run once per sample.
    pub fn loss_over_last(&self, samples: &[Sample], plans: &[DeconvPlan], fixed: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let Some(&probe) = grid.first() else { return Ok(Vec::new()) };
        grid.iter().try_for_each(|&g| check_gamma(g))?;
        let mut gammas = fixed.to_vec();
        gammas.push(probe);
        self.check(&gammas)?;
        let n = samples.len();
        let parts = samples
            .par_iter()
            .zip(plans)
            .map(|(s, p)| {
                let trace = self.trace(&s.blurred, p, &gammas)?;
                let guide = trace.guides.last().or(trace.e0.as_ref());
                grid.iter()
                    .map(|&g| loss_hyper(&p.solve(&trace.d, guide, g)?, &s.clean, n))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![0.0; grid.len()];
        for part in parts {
            out.iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
        Ok(out)
    }

    pub fn loss(&self, samples: &[Sample], plans: &[DeconvPlan], gammas: &[f64]) -> Result<f64> {
        self.check(gammas)?;
        if samples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = samples.len();
        let parts = samples
            .par_iter()
            .zip(plans)
            .map(|(s, p)| loss_hyper(&self.trace(&s.blurred, p, gammas)?.output, &s.clean, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.into_iter().sum())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperTrainConfig {
    /// Learning rate of the last stage's `γ`.
    pub lr_last: f64,
    /// Learning rate of every other `γ`, including `γ0`.
    pub lr_other: f64,
    pub momentum: f64,
    pub iterations: usize,
    pub seed: u64,
    pub monotone_projection: bool,
    pub restarts: usize,
    /// Samples per step; `None` uses the whole set.
    pub batch_size: Option<usize>,
}

impl Default for HyperTrainConfig {
    fn default() -> Self {
        Self {
            lr_last: 10.0,
            lr_other: 1e4,
            momentum: 0.95,
            iterations: 100,
            seed: 0,
            monotone_projection: true,
            restarts: 1,
            batch_size: None,
        }
    }
}

impl HyperTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_last > 0.0) || !(self.lr_other > 0.0) {
            return Err(Error::Param("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Param(format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.restarts == 0 {
            return Err(Error::Param("at least one restart is needed".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Param("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Least-squares projection onto non-increasing sequences (pool adjacent
/// violators).
pub fn project_non_increasing(v: &mut [f64]) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v.iter() {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if a >= b {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    let mut i = 0;
    for (m, n) in blocks {
        v[i..i + n].iter_mut().for_each(|x| *x = m);
        i += n;
    }
}

/// Random initial `γ`, log-uniform and sorted so later stages are smaller.
pub fn random_gammas(seed: u64, restart: usize, count: usize) -> Vec<f64> {
    let mut rng = substream(seed, 0x4859_0000 + restart as u64);
    let (lo, hi) = (INIT_RANGE.0.ln(), INIT_RANGE.1.ln());
    let mut g: Vec<f64> = (0..count).map(|_| rng.random_range(lo..hi).exp()).collect();
    g.sort_by(|a, b| b.total_cmp(a));
    g
}

#[derive(Clone, Debug, PartialEq)]
pub struct RestartResult {
    pub initial: Vec<f64>,
    pub gammas: Vec<f64>,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperOutcome {
    /// `[γ0, γ1, …, γT]` of the best restart.
    pub gammas: Vec<f64>,
    pub loss: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartResult>,
    /// `(iteration, batch loss)` of the best restart.
    pub loss_log: Vec<(usize, f64)>,
}

fn train_once(
    problem: &HyperProblem<'_>,
    samples: &[Sample],
    plans: &[DeconvPlan],
    cfg: &HyperTrainConfig,
    restart: usize,
    init: Vec<f64>,
) -> Result<(Vec<f64>, Vec<(usize, f64)>)> {
    let count = init.len();
    let mut gammas = init;
    let mut velocity = vec![0.0; count];
    let batch_size = cfg.batch_size.unwrap_or(samples.len()).min(samples.len());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut shuffle = substream(cfg.seed, 0x4842_0000 + restart as u64);
    let mut cursor = samples.len();
    let mut log = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let batch: Vec<usize> = if batch_size == samples.len() {
            order.clone()
        } else {
            if cursor + batch_size > order.len() {
                order.shuffle(&mut shuffle);
                cursor = 0;
            }
            cursor += batch_size;
            order[cursor - batch_size..cursor].to_vec()
        };
        let (loss, grad) = problem.loss_and_grad(samples, plans, &batch, &gammas)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("hyper-parameter gradient"));
        }
        log.push((it, loss));
        for (t, (g, v)) in gammas.iter_mut().zip(velocity.iter_mut()).enumerate() {
            let lr = if t + 1 == count { cfg.lr_last } else { cfg.lr_other };
            *v = cfg.momentum * *v - lr * grad[t];
            *g += *v;
        }
        if cfg.monotone_projection {
            project_non_increasing(&mut gammas);
        }
        for g in gammas.iter_mut() {
            if *g < GAMMA_FLOOR {
                log::warn!("gamma {g} clamped to {GAMMA_FLOOR} at iteration {it}");
                *g = GAMMA_FLOOR;
            }
        }
    }
    Ok((gammas, log))
}

/// Trains `[γ0, …, γT]` for the frozen denoisers of `problem`. Restart 0
/// starts from `init` when given; the others start from [`random_gammas`].
/// The restart with the lowest full-set loss wins, ties going to the earlier.
pub fn train_hyper(
    problem: &HyperProblem<'_>,
    samples: &[Sample],
    cfg: &HyperTrainConfig,
    init: Option<&[f64]>,
) -> Result<HyperOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let count = problem.stages.len() + 1;
    if let Some(init) = init {
        problem.check(init)?;
    }
    let plans = samples
        .iter()
        .map(|s| DeconvPlan::new(&s.kernel, s.blurred.height(), s.blurred.width()))
        .collect::<Result<Vec<_>>>()?;
    let mut restarts: Vec<RestartResult> = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(usize, Vec<(usize, f64)>)> = None;
    for r in 0..cfg.restarts {
        let start = match (r, init) {
            (0, Some(init)) => init.to_vec(),
            _ => random_gammas(cfg.seed, r, count),
        };
        let (gammas, log) = train_once(problem, samples, &plans, cfg, r, start.clone())?;
        let loss = problem.loss(samples, &plans, &gammas)?;
        log::info!("restart {r}: loss {loss:.6} gammas {gammas:?}");
        if best.as_ref().is_none_or(|(b, _)| loss < restarts[*b].loss) {
            best = Some((r, log));
        }
        restarts.push(RestartResult { initial: start, gammas, loss });
    }
    let (best_restart, loss_log) = best.expect("at least one restart");
    Ok(HyperOutcome {
        gammas: restarts[best_restart].gammas.clone(),
        loss: restarts[best_restart].loss,
        best_restart,
        restarts,
        loss_log,
    })
}

/// Builds deconvolution plans for every sample.
pub fn plans_for(samples: &[Sample]) -> Result<Vec<DeconvPlan>> {
    samples
        .par_iter()
        .map(|s| DeconvPlan::new(&s.kernel, s.blurred.height(), s.blurred.width()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blur::BlurKernel;
    use crate::deconv::{deconv_step, grad_extract};
    use crate::rng::seeded;

    fn random_field(r: &mut crate::rng::Rng, h: usize, w: usize) -> RealField {
        RealField::from_fn(h, w, |_, _| r.random_range(-1.0..1.0))
    }

    #[test]
    fn loss_values() {
        let a = RealField::filled(4, 4, 0.5);
        assert_eq!(loss_hyper(&a, &a, 1).unwrap(), 0.0);
        let b = RealField::filled(4, 4, 0.7);
        assert!((loss_hyper(&b, &a, 1).unwrap() - 3.2).abs() < 1e-12);
        assert!(loss_hyper(&a, &RealField::zeros(4, 5), 1).is_err());
    }

    #[test]
    fn zero_delta_gives_zero_gradients() {
        let k = BlurKernel::gaussian(3, 0.8).unwrap();
        let plan = DeconvPlan::new(&k, 6, 6).unwrap();
        let zero = RealField::zeros(6, 6);
        let (a, b) = grad_wrt_z(&plan, 3.0, &zero).unwrap();
        assert_eq!(a.max_abs() + b.max_abs(), 0.0);
        let d = plan.data_spectrum(&RealField::filled(6, 6, 0.3)).unwrap();
        let ws = HyperGradientWorkspace::new(&plan, &d, None, &zero).unwrap();
        assert_eq!(grad_wrt_gamma(&ws, 3.0), 0.0);
    }

    #[test]
    fn z_adjoint_identity() {
        let mut r = seeded(11);
        let k = BlurKernel::gaussian(3, 1.0).unwrap();
        let plan = DeconvPlan::new(&k, 6, 6).unwrap();
        let zero = RealField::zeros(6, 6);
        for _ in 0..10 {
            let gamma = r.random_range(0.5..50.0);
            let (dzh, dzw) = (random_field(&mut r, 6, 6), random_field(&mut r, 6, 6));
            let dx_out = random_field(&mut r, 6, 6);
            // deconv_step is linear in z for y = 0.
            let dx = deconv_step(&zero, &plan, &dzh, &dzw, gamma).unwrap();
            let (ah, aw) = grad_wrt_z(&plan, gamma, &dx_out).unwrap();
            let lhs = ah.dot(&dzh) + aw.dot(&dzw);
            let rhs = dx_out.dot(&dx);
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn identity_kernel_gamma_gradient_vanishes() {
        let mut r = seeded(2);
        let y = RealField::from_fn(6, 6, |_, _| r.random_range(0.0..1.0));
        let plan = DeconvPlan::new(&BlurKernel::identity(), 6, 6).unwrap();
        let (gh, gw) = grad_extract(&y);
        let d = plan.data_spectrum(&y).unwrap();
        let e = plan.guide_spectrum(&gh, &gw).unwrap();
        let delta = random_field(&mut r, 6, 6);
        let ws = HyperGradientWorkspace::new(&plan, &d, Some(&e), &delta).unwrap();
        for gamma in [1.0, 10.0, 1000.0] {
            assert!(grad_wrt_gamma(&ws, gamma).abs() <= 1e-12);
        }
    }

    #[test]
    fn projection_is_monotone_and_idempotent() {
        let mut v = vec![5.0, 7.0, 3.0, 4.0, 1.0];
        project_non_increasing(&mut v);
        assert_eq!(v, vec![6.0, 6.0, 3.5, 3.5, 1.0]);
        let w = v.clone();
        project_non_increasing(&mut v);
        assert_eq!(v, w);
        let mut already = vec![9.0, 4.0, 4.0, 1.0];
        project_non_increasing(&mut already);
        assert_eq!(already, vec![9.0, 4.0, 4.0, 1.0]);
    }

    #[test]
    fn random_init_is_sorted_and_in_range() {
        for r in 0..5 {
            let g = random_gammas(3, r, 4);
            assert!(g.windows(2).all(|w| w[0] >= w[1]));
            assert!(g.iter().all(|&x| (INIT_RANGE.0..=INIT_RANGE.1).contains(&x)));
            assert_eq!(g, random_gammas(3, r, 4));
        }
        assert_ne!(random_gammas(3, 0, 4), random_gammas(3, 1, 4));
    }

    #[test]
    fn config_validation() {
        assert!(HyperTrainConfig::default().validate().is_ok());
        let bad = HyperTrainConfig { lr_last: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = HyperTrainConfig { restarts: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let p = HyperProblem { stages: &[], domain: Domain::Gradient, initial_guide: InitialGuide::Zero };
        assert!(matches!(
            train_hyper(&p, &[], &HyperTrainConfig::default(), None),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn last_gamma_sweep_matches_full_loss() {
        let mut r = seeded(5);
        let samples: Vec<Sample> = (0..3)
            .map(|i| {
                let clean = RealField::from_fn(12, 12, |_, _| r.random_range(0.0..1.0));
                let k = BlurKernel::gaussian(3, 0.9).unwrap();
                Sample::observe(clean, k, 0.01, i).unwrap()
            })
            .collect();
        let plans = plans_for(&samples).unwrap();
        let stages = vec![crate::fcnn::random_chain(3, 2, 0.3, 9)];
        for domain in [Domain::Gradient, Domain::Intensity] {
            let p = HyperProblem { stages: &stages, domain, initial_guide: InitialGuide::Zero };
            let grid = [5.0, 40.0, 300.0];
            let sweep = p.loss_over_last(&samples, &plans, &[500.0], &grid).unwrap();
            for (&g, &l) in grid.iter().zip(&sweep) {
                assert_eq!(l, p.loss(&samples, &plans, &[500.0, g]).unwrap());
            }
        }
    }
}
