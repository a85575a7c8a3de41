use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use waveshape::conditioning::{
    interpolate_latent, invert, EncoderSpec, InvertOptions, LatentCode, Model, ModelBuild, RefineConfig,
};
use waveshape::diffusion::rng::derive_seed;
use waveshape::diffusion::{default_subset, sample, NoiseSchedule, ScheduleParams};
use waveshape::io::{read_mask, read_pyramid, read_volume, write_mask, write_pyramid, write_volume};
use waveshape::manipulation::{
    boundary_discontinuity, manipulate, naive_mix_baseline, resolve_mask, ManipulationMode, ManipulationPlan, PlanFile,
};
use waveshape::metrics::{
    novelty_report, sample_surface, set_metrics, BaseMetric, PointSet, RetrievalMetric, SetMetrics,
};
use waveshape::tsdf::{read_obj, sample_tsdf, TriangleMesh};
use waveshape::wavelet::{
    compactness_report, pyramid_decompose, pyramid_reconstruct, reconstruct_truncated, FilterBank, LevelTable,
};

use crate::run::{ensure_dir, file_digest, verify_model, write_json, CliError, CliResult, RunManifest};
use crate::shapes::{coarse_to_shape, load_source, load_tsdf, obj_files, write_shape};
use crate::{Command, ModelArgs, NoveltyMetric, ScheduleArgs};

pub fn dispatch(cmd: Command, args: &[String]) -> CliResult<()> {
    match cmd {
        Command::Prepare {
            scene,
            obj,
            res,
            levels,
            bank,
            out,
        } => prepare(args, scene.or(obj).unwrap(), res, levels, &bank, &out),
        Command::Decompose {
            input,
            levels,
            bank,
            out,
        } => decompose(args, &input, levels, &bank, &out),
        Command::Reconstruct { input, out } => reconstruct(args, &input, &out),
        Command::ReconstructTruncated { input, source, out } => {
            reconstruct_truncated_cmd(args, &input, source.as_deref(), &out)
        }
        Command::BuildModel {
            inputs,
            res,
            levels,
            bank,
            tau,
            latent_len,
            pool,
            encoder_seed,
            schedule,
            out,
        } => {
            let cfg = ModelBuild {
                levels,
                bank: FilterBank::by_name(&bank)?,
                encoder: EncoderSpec::PoolProject {
                    seed: encoder_seed,
                    pool: [pool; 3],
                    latent_len,
                },
                tau,
                schedule: schedule_params(&schedule),
            };
            build_model(args, &inputs, res, &cfg, encoder_seed, &out)
        }
        Command::Generate {
            model,
            seed,
            count,
            ddim_steps,
            out,
        } => generate(args, &model, seed, count, ddim_steps, &out),
        Command::Invert {
            input,
            model,
            no_refine,
            iters,
            lr,
            seed,
            ddim_steps,
            out,
        } => {
            let refine = (!no_refine).then_some(RefineConfig {
                iters,
                lr,
                seed,
                force_finite_differences: false,
            });
            invert_cmd(args, &input, &model, refine, seed, ddim_steps, &out)
        }
        Command::Interpolate {
            model,
            za,
            zb,
            steps,
            seed,
            ddim_steps,
            out,
        } => interpolate(args, &model, &za, &zb, steps, seed, ddim_steps, &out),
        Command::Manipulate {
            plan,
            model_digest,
            out,
        } => manipulate_cmd(args, &plan, model_digest.as_deref(), &out),
        Command::Eval {
            generated,
            reference,
            points,
            seed,
            no_emd,
            out,
        } => eval(args, &generated, &reference, points, seed, no_emd, &out),
        Command::Novelty {
            generated,
            train,
            k,
            metric,
            points,
            seed,
            out,
        } => {
            let metric = match metric {
                NoveltyMetric::Lfd => RetrievalMetric::Lfd,
                NoveltyMetric::Cd => RetrievalMetric::Chamfer { samples: points, seed },
            };
            novelty(args, &generated, &train, k, metric, seed, &out)
        }
        Command::Schedule { schedule, out } => {
            let run = RunManifest::new("schedule", args);
            ensure_dir(&out)?;
            let sched = NoiseSchedule::from_params(schedule_params(&schedule))?;
            std::fs::write(out.join("schedule.csv"), sched.to_csv())?;
            run.finish(&out)
        }
    }
}

fn schedule_params(s: &ScheduleArgs) -> ScheduleParams {
    ScheduleParams {
        steps: s.steps,
        beta_start: s.beta_start,
        beta_end: s.beta_end,
    }
}

fn subset(model: &Model, ddim_steps: Option<usize>) -> CliResult<Option<Vec<usize>>> {
    Ok(match ddim_steps {
        Some(m) => Some(default_subset(model.schedule.steps(), m)?),
        None => None,
    })
}

fn open_model(m: &ModelArgs, run: &mut RunManifest) -> CliResult<Model> {
    run.model_digest = Some(verify_model(&m.model, m.model_digest.as_deref())?);
    Ok(Model::load(&m.model)?)
}

fn prepare(args: &[String], input: PathBuf, res: usize, levels: usize, bank: &str, out: &Path) -> CliResult<()> {
    let mut run = RunManifest::new("prepare", args);
    run.input(&input)?;
    let bank = FilterBank::by_name(bank)?;
    let tsdf = sample_tsdf(&load_source(&input)?, res)?;
    let p = pyramid_decompose(&tsdf, levels, &bank)?;
    let truncated = reconstruct_truncated(p.coarse(), p.detail(levels), &LevelTable::of(&p))?;
    let report = compactness_report(&p, &tsdf, &truncated)?;
    ensure_dir(out)?;
    write_volume(out.join("tsdf.wsv"), &tsdf)?;
    write_pyramid(out.join("pyramid.wsp"), &p)?;
    write_json(&out.join("compactness.json"), &report)?;
    run.finish(out)
}

fn decompose(args: &[String], input: &Path, levels: usize, bank: &str, out: &Path) -> CliResult<()> {
    let mut run = RunManifest::new("decompose", args);
    run.input(input)?;
    let v = read_volume(input)?;
    let p = pyramid_decompose(&v, levels, &FilterBank::by_name(bank)?)?;
    ensure_dir(out)?;
    write_pyramid(out.join("pyramid.wsp"), &p)?;
    run.finish(out)
}

fn reconstruct(args: &[String], input: &Path, out: &Path) -> CliResult<()> {
    let mut run = RunManifest::new("reconstruct", args);
    run.input(input)?;
    let v = pyramid_reconstruct(&read_pyramid(input)?)?;
    ensure_dir(out)?;
    write_volume(out.join("tsdf.wsv"), &v)?;
    run.finish(out)
}

fn reconstruct_truncated_cmd(args: &[String], input: &Path, source: Option<&Path>, out: &Path) -> CliResult<()> {
    let mut run = RunManifest::new("reconstruct-truncated", args);
    run.input(input)?;
    let p = read_pyramid(input)?;
    let source = match source {
        Some(s) => {
            run.input(s)?;
            read_volume(s)?
        }
        None => pyramid_reconstruct(&p)?,
    };
    let truncated = reconstruct_truncated(p.coarse(), p.detail(p.levels()), &LevelTable::of(&p))?;
    let report = compactness_report(&p, &source, &truncated)?;
    ensure_dir(out)?;
    write_volume(out.join("truncated.wsv"), &truncated)?;
    write_json(&out.join("report.json"), &report)?;
    run.finish(out)
}

fn build_model(
    args: &[String],
    inputs: &[PathBuf],
    res: usize,
    cfg: &ModelBuild,
    encoder_seed: u64,
    out: &Path,
) -> CliResult<()> {
    let mut run = RunManifest::new("build-model", args);
    run.seeds.push(encoder_seed);
    for i in inputs {
        run.input(i)?;
    }
    let tsdfs = inputs
        .par_iter()
        .map(|p| load_tsdf(p, res))
        .collect::<CliResult<Vec<_>>>()?;
    let model = Model::build(&tsdfs, cfg)?;
    ensure_dir(out)?;
    model.save(out)?;
    run.finish(out)
}

fn generate(
    args: &[String],
    m: &ModelArgs,
    seed: u64,
    count: usize,
    ddim_steps: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    if count == 0 {
        return Err(CliError::validation("--count must be positive"));
    }
    let mut run = RunManifest::new("generate", args);
    run.seeds.push(seed);
    let model = open_model(m, &mut run)?;
    let steps = subset(&model, ddim_steps)?;
    let dims = model.table.coarse_dims();
    let shapes = (0..count)
        .into_par_iter()
        .map(|k| {
            let c0 = sample(
                &model.oracle,
                &model.schedule,
                dims,
                derive_seed(seed, k as u64),
                None,
                steps.as_deref(),
            )?;
            let (_, mesh) = coarse_to_shape(&model, &c0)?;
            Ok((c0, mesh))
        })
        .collect::<CliResult<Vec<_>>>()?;
    ensure_dir(out)?;
    for (k, (c0, mesh)) in shapes.iter().enumerate() {
        write_shape(out, &format!("shape_{k:03}"), c0, mesh)?;
    }
    run.finish(out)
}

fn invert_cmd(
    args: &[String],
    input: &Path,
    m: &ModelArgs,
    refine: Option<RefineConfig>,
    seed: u64,
    ddim_steps: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    let mut run = RunManifest::new("invert", args);
    run.seeds.push(seed);
    run.input(input)?;
    let model = open_model(m, &mut run)?;
    let tsdf = load_tsdf(input, model.manifest.resolution)?;
    let p = pyramid_decompose(&tsdf, model.table.levels(), &model.table.bank)?;
    let opts = InvertOptions {
        refine,
        seed,
        step_subset: subset(&model, ddim_steps)?,
    };
    let inv = invert(p.coarse(), &model.encoder, &model.oracle, &model.schedule, &opts)?;
    let (_, mesh) = coarse_to_shape(&model, &inv.volume)?;
    ensure_dir(out)?;
    inv.z.write_json(out.join("z.json"))?;
    let mut csv = String::from("iter,loss\n");
    for (i, l) in inv.trace.iter().enumerate() {
        writeln!(csv, "{i},{l:e}").unwrap();
    }
    std::fs::write(out.join("loss_trace.csv"), csv)?;
    write_shape(out, "shape", &inv.volume, &mesh)?;
    run.finish(out)
}

#[allow(clippy::too_many_arguments)]
fn interpolate(
    args: &[String],
    m: &ModelArgs,
    za: &Path,
    zb: &Path,
    steps: usize,
    seed: u64,
    ddim_steps: Option<usize>,
    out: &Path,
) -> CliResult<()> {
    if steps < 2 {
        return Err(CliError::validation("--steps must be at least 2"));
    }
    let mut run = RunManifest::new("interpolate", args);
    run.seeds.push(seed);
    run.input(za)?;
    run.input(zb)?;
    let model = open_model(m, &mut run)?;
    let (a, b) = (LatentCode::read_json(za)?, LatentCode::read_json(zb)?);
    let sub = subset(&model, ddim_steps)?;
    let dims = model.table.coarse_dims();
    // Every frame shares the seed so only the code changes along the path.
    let frames = (0..steps)
        .into_par_iter()
        .map(|i| {
            let z = interpolate_latent(&a, &b, i as f64 / (steps - 1) as f64)?;
            let c0 = sample(&model.oracle, &model.schedule, dims, seed, Some(&z), sub.as_deref())?;
            let (_, mesh) = coarse_to_shape(&model, &c0)?;
            Ok((c0, mesh))
        })
        .collect::<CliResult<Vec<_>>>()?;
    ensure_dir(out)?;
    for (i, (c0, mesh)) in frames.iter().enumerate() {
        write_shape(out, &format!("frame_{i:03}"), c0, mesh)?;
    }
    run.finish(out)
}

#[derive(Serialize)]
struct Comparison {
    mode: ManipulationMode,
    masked_voxels: usize,
    result_boundary_discontinuity: f64,
    baseline_boundary_discontinuity: Option<f64>,
}

fn manipulate_cmd(args: &[String], plan_path: &Path, digest: Option<&str>, out: &Path) -> CliResult<()> {
    let mut run = RunManifest::new("manipulate", args);
    run.input(plan_path)?;
    let (plan, base) = PlanFile::load(plan_path)?;
    run.seeds.push(plan.seed);
    let model_path = base.join(&plan.model);
    run.model_digest = Some(verify_model(&model_path, digest)?);
    let model = Model::load(&model_path)?;
    let za_path = base.join(&plan.z_a);
    run.input(&za_path)?;
    let za = LatentCode::read_json(&za_path)?;
    let zb = match &plan.z_b {
        Some(p) => {
            let p = base.join(p);
            run.input(&p)?;
            Some(LatentCode::read_json(&p)?)
        }
        None => None,
    };
    let mask_path = base.join(&plan.mask);
    run.input(&mask_path)?;
    let mask = resolve_mask(&read_mask(&mask_path)?, &model.table)?;
    let dims = model.table.coarse_dims();
    let mp = ManipulationPlan {
        mode: plan.mode.clone(),
        mask: mask.clone(),
        delta_t: plan.delta_t,
        harmonize_repeats: plan.repeats,
    };
    let (den, sched) = (&model.oracle, &model.schedule);
    let result = manipulate(&za, zb.as_ref(), &mp, den, sched, dims, plan.seed)?;
    let (_, mesh) = coarse_to_shape(&model, &result)?;
    ensure_dir(out)?;
    write_shape(out, "result", &result, &mesh)?;
    write_mask(out.join("mask.coarse.wsv"), &mask)?;

    // Baseline: independent plain samples of A and of chain B's code, mixed
    // by the mask after the fact.
    let b_code = match &plan.mode {
        ManipulationMode::Replacement => Some(require_zb(&zb)?.clone()),
        ManipulationMode::PartInterpolation { alphas } => {
            Some(interpolate_latent(&za, require_zb(&zb)?, *alphas.last().unwrap())?)
        }
        ManipulationMode::Regeneration => None,
        ManipulationMode::WholeInterpolation { .. } => None,
    };
    let baseline_bd = if matches!(plan.mode, ManipulationMode::WholeInterpolation { .. }) {
        None
    } else {
        let a = sample(den, sched, dims, plan.seed, Some(&za), None)?;
        let b = sample(den, sched, dims, plan.seed, b_code.as_ref(), None)?;
        let baseline = naive_mix_baseline(&a, &b, &mask)?;
        let (_, bmesh) = coarse_to_shape(&model, &baseline)?;
        write_shape(out, "baseline", &baseline, &bmesh)?;
        Some(boundary_discontinuity(&baseline, &mask)?)
    };
    let comparison = Comparison {
        mode: plan.mode.clone(),
        masked_voxels: mask.count(),
        result_boundary_discontinuity: boundary_discontinuity(&result, &mask)?,
        baseline_boundary_discontinuity: baseline_bd,
    };
    write_json(&out.join("comparison.json"), &comparison)?;
    run.finish(out)
}

fn require_zb(zb: &Option<LatentCode>) -> CliResult<&LatentCode> {
    zb.as_ref()
        .ok_or_else(|| CliError::validation("this mode needs z_b in the plan"))
}

fn load_meshes(files: &[PathBuf]) -> CliResult<Vec<TriangleMesh>> {
    files.par_iter().map(|f| Ok(read_obj(f)?)).collect()
}

/// Surface samples of every mesh; the k-th mesh of a list uses the k-th
/// derived seed, so identical lists give identical samples.
fn sample_all(meshes: &[TriangleMesh], points: usize, seed: u64) -> CliResult<Vec<PointSet>> {
    meshes
        .par_iter()
        .enumerate()
        .map(|(k, m)| Ok(sample_surface(m, points, derive_seed(seed, k as u64))?))
        .collect()
}

#[derive(Serialize)]
struct Conventions {
    chamfer: &'static str,
    emd: &'static str,
    points_per_shape: usize,
    mmd: &'static str,
    nna: &'static str,
}

#[derive(Serialize)]
struct FileDigest {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct EvalReport {
    conventions: Conventions,
    seed: u64,
    generated: Vec<FileDigest>,
    reference: Vec<FileDigest>,
    chamfer: SetMetrics,
    emd: Option<SetMetrics>,
}

fn digests(files: &[PathBuf]) -> CliResult<Vec<FileDigest>> {
    files
        .iter()
        .map(|f| {
            Ok(FileDigest {
                name: f.file_name().unwrap().to_string_lossy().into_owned(),
                sha256: file_digest(f)?,
            })
        })
        .collect()
}

fn eval(
    args: &[String],
    generated: &Path,
    reference: &Path,
    points: usize,
    seed: u64,
    no_emd: bool,
    out: &Path,
) -> CliResult<()> {
    let mut run = RunManifest::new("eval", args);
    run.seeds.push(seed);
    let (gf, rf) = (obj_files(generated)?, obj_files(reference)?);
    let g = sample_all(&load_meshes(&gf)?, points, seed)?;
    let r = sample_all(&load_meshes(&rf)?, points, seed)?;
    let report = EvalReport {
        conventions: Conventions {
            chamfer: "sum of mean squared nearest-neighbor distances in both directions",
            emd: "mean matched Euclidean distance under an optimal bijection",
            points_per_shape: points,
            mmd: "mean over reference shapes of the distance to the closest generated shape",
            nna: "leave-one-out 1-NN accuracy over the union, generated listed first, ties to the lower index",
        },
        seed,
        generated: digests(&gf)?,
        reference: digests(&rf)?,
        chamfer: set_metrics(&g, &r, BaseMetric::Chamfer)?,
        emd: if no_emd {
            None
        } else {
            Some(set_metrics(&g, &r, BaseMetric::Emd)?)
        },
    };
    ensure_dir(out)?;
    write_json(&out.join("metrics.json"), &report)?;
    run.finish(out)
}

fn novelty(
    args: &[String],
    generated: &Path,
    train: &Path,
    k: usize,
    metric: RetrievalMetric,
    seed: u64,
    out: &Path,
) -> CliResult<()> {
    if k == 0 {
        return Err(CliError::validation("--k must be positive"));
    }
    let mut run = RunManifest::new("novelty", args);
    run.seeds.push(seed);
    let (gf, tf) = (obj_files(generated)?, obj_files(train)?);
    let report = novelty_report(&load_meshes(&gf)?, &load_meshes(&tf)?, k, metric)?;
    #[derive(Serialize)]
    struct Named<'a> {
        generated: Vec<FileDigest>,
        train: Vec<FileDigest>,
        #[serde(flatten)]
        report: &'a waveshape::metrics::NoveltyReport,
    }
    ensure_dir(out)?;
    write_json(
        &out.join("novelty.json"),
        &Named {
            generated: digests(&gf)?,
            train: digests(&tf)?,
            report: &report,
        },
    )?;
    run.finish(out)
}
