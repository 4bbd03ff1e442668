use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;

use idcv_core::blur::{generate_kernel, SynthesisConfig};
use idcv_core::dataset::{load_samples, synthesize_dataset, Sample, SynthSpec};
use idcv_core::fcnn::{train_denoiser, DenoiserWeights, LossKind, TrainConfig};
use idcv_core::gradcheck::{run_gradcheck, FCNN_TOLERANCE};
use idcv_core::hyper::{plans_for, train_hyper, HyperProblem, HyperTrainConfig};
use idcv_core::io::{
    load_weights, read_image, read_kernel, read_manifest, save_weights, write_image, write_kernel, StageWeights,
    WeightArchive,
};
use idcv_core::metrics::MetricReport;
use idcv_core::pipeline::{run_pipeline, InitialGuide, PipelineConfig};
use idcv_core::recipe::{self, Corpus, Experiment, RecipeConfig};
use idcv_core::rng::derive_seed;
use idcv_core::scene::generate_scene;
use idcv_core::{blur_synthesize, Boundary};

use crate::run::{manifest_path, RunManifest, Touched};
use crate::*;

pub fn dispatch(cmd: &Command, threads: Option<usize>) -> Result<ExitCode> {
    let mut touched = Touched::default();
    let (code, out) = match cmd {
        Command::Scenes(a) => (scenes(a, &mut touched)?, Some(a.out.clone())),
        Command::Synth(a) => (synth(a, &mut touched)?, Some(a.out.clone())),
        Command::KernelGen(a) => (kernel_gen(a, &mut touched)?, Some(a.out.clone())),
        Command::Blur(a) => (blur(a, &mut touched)?, Some(a.out.clone())),
        Command::Deblur(a) => (deblur(a, &mut touched)?, Some(a.out.clone())),
        Command::TrainDenoiser(a) => (train_denoiser_cmd(a, &mut touched)?, Some(a.out.clone())),
        Command::TrainHyper(a) => (train_hyper_cmd(a, &mut touched)?, Some(a.out.clone())),
        Command::Eval(a) => (eval(a, &mut touched)?, Some(a.out.clone())),
        Command::Ablate(a) => (ablate(a, &mut touched)?, Some(a.out.clone())),
        Command::Gradcheck(a) => (gradcheck(a, &mut touched)?, a.out.clone()),
        Command::Replay(a) => return replay(a, threads),
    };
    if let Some(out) = out {
        let path = manifest_path(&out);
        RunManifest::new(cmd, threads, &touched)?.write(&path)?;
        log::info!("run manifest {}", path.display());
    }
    Ok(code)
}

fn replay(a: &ReplayArgs, threads: Option<usize>) -> Result<ExitCode> {
    let m = RunManifest::read(&a.manifest)?;
    ensure!(!matches!(m.command, Command::Replay(_)), "a replay manifest cannot be replayed");
    log::info!("replaying {} from {}", m.subcommand, a.manifest.display());
    let code = dispatch(&m.command, threads)?;
    if a.check {
        let bad = m.mismatches()?;
        if !bad.is_empty() {
            for p in &bad {
                eprintln!("differs: {}", p.display());
            }
            return Ok(ExitCode::FAILURE);
        }
        println!("all {} outputs identical", m.outputs.len());
    }
    Ok(code)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn check_noise(sigma: f64) -> Result<()> {
    ensure!(sigma >= 0.0 && sigma.is_finite(), "noise level {sigma} must be a non-negative number");
    if !idcv_core::io::manifest::STANDARD_SIGMAS.contains(&sigma) {
        log::warn!("noise level {sigma} is not one of the standard levels 0.01, 0.03, 0.05");
    }
    Ok(())
}

fn scenes(a: &ScenesArgs, t: &mut Touched) -> Result<ExitCode> {
    ensure!(a.count > 0, "--count must be at least 1");
    ensure!(a.size >= 16, "--size must be at least 16");
    fs::create_dir_all(&a.out)?;
    let paths: Vec<PathBuf> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let img = generate_scene(derive_seed(a.seed, i as u64), a.size, a.size);
            let p = a.out.join(format!("{i:05}.pgm"));
            write_image(&p, &img)?;
            Ok(p)
        })
        .collect::<Result<_>>()?;
    paths.into_iter().for_each(|p| t.output(p));
    Ok(ExitCode::SUCCESS)
}

fn synth(a: &SynthArgs, t: &mut Touched) -> Result<ExitCode> {
    check_noise(a.noise)?;
    ensure!(a.count > 0, "--count must be at least 1");
    let mut files: Vec<PathBuf> = fs::read_dir(&a.clean_dir)
        .with_context(|| format!("reading {}", a.clean_dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")));
    files.sort();
    ensure!(!files.is_empty(), "no .pgm images in {}", a.clean_dir.display());
    let clean = files.iter().map(read_image).collect::<idcv_core::Result<Vec<_>>>()?;
    let spec = SynthSpec {
        kernels_per_image: a.count,
        sigma: a.noise,
        patch: a.patch,
        kernel_sizes: (a.kernel_min, a.kernel_max),
        seed: a.seed,
    };
    let m = synthesize_dataset(&clean, &spec, &a.out)?;
    files.into_iter().for_each(|p| t.input(p));
    for (e, entry) in m.entries.iter().enumerate() {
        t.output(a.out.join(&entry.clean));
        t.output(a.out.join(&entry.kernel));
        t.output(a.out.join(format!("blurred/{e:05}.pgm")));
    }
    t.output(a.out.join("manifest.tsv"));
    println!("{} entries in {}", m.len(), a.out.join("manifest.tsv").display());
    Ok(ExitCode::SUCCESS)
}

fn kernel_gen(a: &KernelGenArgs, t: &mut Touched) -> Result<ExitCode> {
    let k = generate_kernel(a.seed, a.size)?;
    create_parent(&a.out)?;
    write_kernel(&a.out, &k)?;
    t.output(&a.out);
    Ok(ExitCode::SUCCESS)
}

fn blur(a: &BlurArgs, t: &mut Touched) -> Result<ExitCode> {
    check_noise(a.noise)?;
    let x = read_image(&a.input)?;
    let k = read_kernel(&a.kernel)?;
    let boundary = match a.boundary {
        BoundaryArg::Circular => Boundary::Circular,
        BoundaryArg::ReplicateTaper => Boundary::ReplicateTaper,
    };
    let y = blur_synthesize(&x, &k, &SynthesisConfig { noise_sigma: a.noise, seed: a.seed, boundary })?;
    create_parent(&a.out)?;
    write_image(&a.out, &y)?;
    t.input(&a.input);
    t.input(&a.kernel);
    t.output(&a.out);
    Ok(ExitCode::SUCCESS)
}

fn deblur(a: &DeblurArgs, t: &mut Touched) -> Result<ExitCode> {
    let y = read_image(&a.input)?;
    let k = read_kernel(&a.kernel)?;
    let archive = load_weights(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let mut cfg = PipelineConfig::from_archive(&archive);
    if let Some(n) = a.iterations {
        cfg = cfg.truncated(n)?;
    }
    cfg.domain = a.domain.into();
    cfg.initial_guide = match a.initial_guide {
        GuideArg::Zero => InitialGuide::Zero,
        GuideArg::Observed => InitialGuide::Observed,
    };
    cfg.dump_intermediates = a.dump_intermediate.is_some();
    let out = run_pipeline(&y, &k, &cfg)?;
    create_parent(&a.out)?;
    write_image(&a.out, &out.image)?;
    for p in [&a.input, &a.kernel, &a.weights] {
        t.input(p);
    }
    t.output(&a.out);
    if let Some(dir) = &a.dump_intermediate {
        fs::create_dir_all(dir)?;
        for (s, img) in out.intermediates.iter().enumerate() {
            let p = dir.join(format!("stage_{s}.pgm"));
            write_image(&p, img)?;
            t.output(p);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_dataset(path: &Path, t: &mut Touched) -> Result<Vec<Sample>> {
    let entries = read_manifest(path).with_context(|| format!("reading {}", path.display()))?;
    t.input(path);
    for e in &entries {
        t.input(&e.clean);
        t.input(&e.kernel);
    }
    Ok(load_samples(&entries)?)
}

fn loss_kind(l: LossArg) -> LossKind {
    match l {
        LossArg::L1 => LossKind::L1,
        LossArg::L2 => LossKind::L2,
    }
}

fn write_log(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<PathBuf> {
    let mut log_path = path.as_os_str().to_owned();
    log_path.push(".log");
    let mut text = format!("{header}\n");
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(&log_path, text)?;
    Ok(log_path.into())
}

fn train_denoiser_cmd(a: &TrainDenoiserArgs, t: &mut Touched) -> Result<ExitCode> {
    ensure!(a.stage >= 1, "--stage must be at least 1");
    let samples = load_dataset(&a.data, t)?;
    let plans = plans_for(&samples)?;
    let domain = a.domain.into();
    let (mut stages, mut gammas): (Vec<DenoiserWeights>, Vec<f64>) = match &a.prev_weights {
        Some(p) => {
            ensure!(a.gamma0.is_none(), "--gamma0 conflicts with --prev-weights, which fixes it");
            let prev = load_weights(p).with_context(|| format!("loading {}", p.display()))?;
            t.input(p);
            ensure!(
                prev.stages.len() == a.stage - 1,
                "stage {} needs {} previous stages, {} has {}",
                a.stage,
                a.stage - 1,
                p.display(),
                prev.stages.len()
            );
            let g = std::iter::once(prev.gamma0).chain(prev.stages.iter().map(|s| s.gamma)).collect();
            (prev.stages.into_iter().map(|s| s.denoiser).collect(), g)
        }
        None => {
            ensure!(a.stage == 1, "stage {} needs --prev-weights", a.stage);
            let g0 = match a.gamma0 {
                Some(g) => g,
                None => {
                    let p = HyperProblem { stages: &[], domain, initial_guide: InitialGuide::Zero };
                    let (g, loss) = recipe::grid_search(&p, &samples, &plans, &[], &RecipeConfig::default().gamma_grid)?;
                    log::info!("grid-searched gamma0 {g} (loss {loss})");
                    g
                }
            };
            (Vec::new(), vec![g0])
        }
    };
    let problem = HyperProblem { stages: &stages, domain, initial_guide: InitialGuide::Zero };
    let inputs = samples
        .par_iter()
        .zip(&plans)
        .map(|(s, p)| problem.restore(&s.blurred, p, &gammas))
        .collect::<idcv_core::Result<Vec<_>>>()?;
    let pairs = recipe::stage_pairs(&samples, &inputs, domain);
    let cfg = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        batch_size: a.batch,
        iterations: a.iters,
        seed: a.seed,
        loss: loss_kind(a.loss),
        crop: a.crop,
        bias_lr_scale: a.bias_lr_scale,
    };
    let out = train_denoiser(a.stage, &pairs, &cfg, None)?;
    stages.push(out.weights);
    let gamma = match a.gamma {
        Some(g) => g,
        None => {
            let cap = *gammas.last().expect("gamma0");
            let grid: Vec<f64> = RecipeConfig::default().gamma_grid.into_iter().filter(|&g| g <= cap).collect();
            let grid = if grid.is_empty() { vec![cap] } else { grid };
            let p = HyperProblem { stages: &stages, domain, initial_guide: InitialGuide::Zero };
            let (g, loss) = recipe::grid_search(&p, &samples, &plans, &gammas, &grid)?;
            log::info!("grid-searched gamma{} {g} (loss {loss})", a.stage);
            g
        }
    };
    gammas.push(gamma);
    let archive = WeightArchive {
        gamma0: gammas[0],
        stages: stages.into_iter().zip(&gammas[1..]).map(|(denoiser, &gamma)| StageWeights { denoiser, gamma }).collect(),
    };
    create_parent(&a.out)?;
    save_weights(&a.out, &archive)?;
    t.output(&a.out);
    let log = write_log(&a.out, "iteration\tloss", out.loss_log.iter().enumerate().map(|(i, l)| format!("{i}\t{l}")))?;
    t.output(log);
    Ok(ExitCode::SUCCESS)
}

fn train_hyper_cmd(a: &TrainHyperArgs, t: &mut Touched) -> Result<ExitCode> {
    let samples = load_dataset(&a.data, t)?;
    let archive = load_weights(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    t.input(&a.weights);
    let stages: Vec<DenoiserWeights> = archive.stages.iter().map(|s| s.denoiser.clone()).collect();
    let problem = HyperProblem { stages: &stages, domain: a.domain.into(), initial_guide: InitialGuide::Zero };
    let cfg = HyperTrainConfig {
        lr_last: a.lr_last,
        lr_other: a.lr_other,
        momentum: a.momentum,
        iterations: a.iters,
        seed: a.seed,
        monotone_projection: !a.no_monotone,
        restarts: a.restarts,
        batch_size: a.batch,
    };
    let init: Vec<f64> = std::iter::once(archive.gamma0).chain(archive.gammas()).collect();
    let out = train_hyper(&problem, &samples, &cfg, Some(&init))?;
    for (r, res) in out.restarts.iter().enumerate() {
        log::info!("restart {r}: {:?} -> {:?}, loss {}", res.initial, res.gammas, res.loss);
    }
    let trained = WeightArchive {
        gamma0: out.gammas[0],
        stages: archive
            .stages
            .into_iter()
            .zip(&out.gammas[1..])
            .map(|(s, &gamma)| StageWeights { denoiser: s.denoiser, gamma })
            .collect(),
    };
    create_parent(&a.out)?;
    save_weights(&a.out, &trained)?;
    t.output(&a.out);
    let mut rows: Vec<String> = out.restarts.iter().enumerate().map(|(r, res)| format!("# restart {r}\tloss {}", res.loss)).collect();
    rows.extend(out.loss_log.iter().map(|(i, l)| format!("{i}\t{l}")));
    t.output(write_log(&a.out, "iteration\tloss", rows)?);
    println!("gammas {:?} loss {} (restart {})", out.gammas, out.loss, out.best_restart);
    Ok(ExitCode::SUCCESS)
}

fn eval(a: &EvalArgs, t: &mut Touched) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.pairs).with_context(|| format!("reading {}", a.pairs.display()))?;
    let base = a.pairs.parent().unwrap_or(Path::new(""));
    let pairs = idcv_core::io::manifest::parse_pairs(&text)?;
    ensure!(!pairs.is_empty(), "no pairs in {}", a.pairs.display());
    t.input(&a.pairs);
    let mut report = MetricReport::default();
    for (name, r, x) in pairs {
        let (r, x) = (base.join(r), base.join(x));
        report.push(name, &read_image(&r)?, &read_image(&x)?).with_context(|| format!("comparing {} and {}", r.display(), x.display()))?;
        t.input(r);
        t.input(x);
    }
    create_parent(&a.out)?;
    fs::write(&a.out, report.to_tsv())?;
    t.output(&a.out);
    println!("mean psnr {:.4} dB, ssim {:.4}", report.mean_psnr(), report.mean_ssim());
    Ok(ExitCode::SUCCESS)
}

fn ablate(a: &AblateArgs, t: &mut Touched) -> Result<ExitCode> {
    ensure!(a.stages >= 1, "--stages must be at least 1");
    let mut cfg = RecipeConfig { seed: a.seed, stages: a.stages, ..RecipeConfig::default() };
    if let Some(n) = a.iters {
        cfg.denoiser.iterations = n;
        cfg.intensity_denoiser.iterations = n;
    }
    if let Some(n) = a.hyper_iters {
        cfg.hyper.iterations = n;
    }
    let corpus = match &a.data {
        None => recipe::build_corpus(&cfg)?,
        Some(data) => {
            let mut train = load_dataset(data, t)?;
            let test = match &a.test {
                Some(p) => load_dataset(p, t)?,
                None => {
                    ensure!(a.holdout > 0 && a.holdout < train.len(), "--holdout {} leaves no training or test entries", a.holdout);
                    train.split_off(train.len() - a.holdout)
                }
            };
            Corpus { train, test }
        }
    };
    let experiments: Vec<Experiment> = match a.experiment {
        ExperimentArg::Domain => vec![Experiment::Domain],
        ExperimentArg::Loss => vec![Experiment::Loss],
        ExperimentArg::Iterations => vec![Experiment::Iterations],
        ExperimentArg::All => Experiment::ALL.to_vec(),
    };
    let report = recipe::run_experiments(&corpus, &cfg, &experiments)?;
    create_parent(&a.out)?;
    fs::write(&a.out, report.to_tsv())?;
    t.output(&a.out);
    if let Some(dir) = &a.weights_dir {
        fs::create_dir_all(dir)?;
        for (name, p) in &report.pipelines {
            let path = dir.join(format!("{name}.bin"));
            save_weights(&path, &p.config.to_archive())?;
            t.output(path);
        }
    }
    print!("{}", report.to_tsv());
    log::info!("ablation took {:.1}s", report.seconds);
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: &GradcheckArgs, t: &mut Touched) -> Result<ExitCode> {
    ensure!(a.size >= 2 && a.instances >= 1, "--size must be at least 2 and --instances at least 1");
    let report = run_gradcheck(a.seed, a.size, a.instances)?;
    let mut text = String::from("check\tmax_rel_error\ttolerance\tstatus\n");
    for c in &report.checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        writeln!(text, "{}\t{:e}\t{:e}\t{status}", c.name, c.max_rel_error, c.tolerance)?;
    }
    print!("{text}");
    let max = report.max_error();
    println!("max relative error {max:e}");
    if let Some(out) = &a.out {
        create_parent(out)?;
        fs::write(out, &text)?;
        t.output(out);
    }
    if !(max <= FCNN_TOLERANCE) {
        bail!("gradient check failed: max relative error {max:e} exceeds {FCNN_TOLERANCE:e}");
    }
    Ok(ExitCode::SUCCESS)
}
