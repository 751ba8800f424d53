use std::path::{Path, PathBuf};

use intrinsic_core::bilateral::{solve, solver_param_search, BilateralParams};
use intrinsic_core::data::{
    encode_pfm, encode_png, generate_dataset, load_image, load_judgement_scenes, load_manifest,
    load_real_groups, load_real_truth, load_synthetic, save_image, to_rgb, GenerateSpec, Manifest,
    MondrianConfig,
};
use intrinsic_core::image::{retexture, rgb_to_grayscale, ImageF};
use intrinsic_core::metrics::{evaluate, Decomposer, EvalData, NetDecomposer, OracleDecomposer};
use intrinsic_core::network::IntrinsicNet;
use intrinsic_core::train::{LogEntry, TrainLog, Trainer};
use intrinsic_core::write_atomic;
use serde_json::{json, Value};

use crate::args::{
    DecomposeArgs, EvalArgs, GenerateArgs, InitArgs, RetextureArgs, Stage, TrainArgs, TuneArgs,
};
use crate::error::CliError;

pub struct Ctx {
    pub quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::io(format!("{}: {e}", dir.display())))?;
    }
    write_atomic(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_vec_pretty(value).expect("json serializes");
    text.push(b'\n');
    write_file(path, &text)
}

fn load_net(path: &Path) -> Result<IntrinsicNet, CliError> {
    Ok(IntrinsicNet::load(path)?)
}

fn load_rgb(path: &Path) -> Result<ImageF, CliError> {
    Ok(to_rgb(&load_image(path)?))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

/// Divides by the maximum so the brightest value maps to white.
fn preview(img: &ImageF) -> ImageF {
    let max = img.max_value();
    if max > 0.0 && max.is_finite() {
        img.map(|v| v / max)
    } else {
        img.clone()
    }
}

fn decompose_image(
    net: &IntrinsicNet,
    input: &ImageF,
    filter: Option<&BilateralParams>,
) -> Result<(ImageF, ImageF), CliError> {
    let (r, s) = net.decompose(input)?;
    let r = match filter {
        Some(params) => solve(input, &r, params)?,
        None => r,
    };
    Ok((r, s))
}

pub fn decompose(ctx: &Ctx, args: &DecomposeArgs) -> Result<(), CliError> {
    let params = args.solver.params();
    params.validate()?;
    let net = load_net(&args.checkpoint)?;
    let input = load_rgb(&args.input)?;
    let filter = (!args.no_bilateral).then_some(&params);
    let (r, s) = decompose_image(&net, &input, filter)?;
    // encode everything before touching the output directory
    let outputs = [
        ("reflectance.pfm", encode_pfm(&r)?),
        ("shading.pfm", encode_pfm(&s)?),
        ("reflectance.png", encode_png(&preview(&r))?),
        ("shading.png", encode_png(&preview(&s))?),
    ];
    for (name, bytes) in &outputs {
        write_file(&args.out_dir.join(name), bytes)?;
    }
    ctx.note(format!(
        "wrote reflectance and shading to {}",
        args.out_dir.display()
    ));
    Ok(())
}

pub fn train(ctx: &Ctx, args: &TrainArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&args.manifest)?;
    let runs_stage2 = matches!(args.stage, Stage::Two | Stage::Both);
    if args.stage == Stage::Two && args.init.is_none() && !args.cold_start {
        return Err(CliError::config(
            "stage 2 needs a stage-1 checkpoint (--init) or an explicit --cold-start",
        ));
    }
    if manifest.synthetic_scenes.is_empty() {
        return Err(CliError::config(
            "training needs a non-empty 'synthetic_scenes' section in the manifest",
        ));
    }
    let mut flags = args.train.clone();
    if runs_stage2 && manifest.real_scenes.is_empty() {
        if !args.allow_synthetic_only {
            return Err(CliError::config(
                "stage 2 needs a non-empty 'real_scenes' section in the manifest (or --allow-synthetic-only)",
            ));
        }
        flags.stage2_real = 0;
    }
    let config = flags.config(args.solver.params(), !args.no_bilateral);
    let net = match &args.init {
        Some(path) => load_net(path)?,
        None => {
            let cfg = args.net.config();
            cfg.validate()?;
            IntrinsicNet::new(cfg)?
        }
    };
    let synthetic = load_synthetic(&manifest)?;
    let groups = if runs_stage2 {
        load_real_groups(&manifest)?
    } else {
        Vec::new()
    };
    let min_dim = synthetic
        .iter()
        .map(|t| t.input.width().min(t.input.height()))
        .chain(groups.iter().map(|g| g.width().min(g.height())))
        .min();
    config.validate(net.config().multiple(), min_dim)?;

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".log.jsonl"));
    let mut trainer = Trainer::new(net, config);
    let mut log = TrainLog::default();
    let report = |e: &LogEntry| {
        if !ctx.quiet && (e.iter.is_multiple_of(100) || e.iter == 1) {
            match e.e_real {
                Some(r) => eprintln!(
                    "iter {:6}  e_syn {:.6}  e_real {:.6}  total {:.6}",
                    e.iter, e.e_syn, r, e.total
                ),
                None => eprintln!(
                    "iter {:6}  e_syn {:.6}  total {:.6}",
                    e.iter, e.e_syn, e.total
                ),
            }
        }
    };
    if matches!(args.stage, Stage::One | Stage::Both) {
        ctx.note("stage 1");
        let part = trainer.run_stage1(&synthetic, report)?;
        log.entries.extend(part.entries);
    }
    if runs_stage2 {
        ctx.note("stage 2");
        let part = trainer.run_stage2(&synthetic, &groups, report)?;
        log.entries.extend(part.entries);
        log.skipped += part.skipped;
        if part.skipped > 0 {
            ctx.note(format!(
                "skipped {} stage-2 batches after solver failures",
                part.skipped
            ));
        }
    }
    let mut text = Vec::new();
    log.write_jsonl(&mut text).expect("in-memory write");
    write_file(&args.out, &trainer.net.to_bytes())?;
    write_file(&log_path, &text)?;
    ctx.note(format!(
        "wrote {} and {}",
        args.out.display(),
        log_path.display()
    ));
    Ok(())
}

fn oracle_from_manifest(m: &Manifest) -> Result<OracleDecomposer, CliError> {
    let mut oracle = OracleDecomposer::new();
    for (entry, t) in m.synthetic_scenes.iter().zip(load_synthetic(m)?) {
        oracle.insert(&entry.id, 0, t.reflectance, t.shading);
    }
    for (entry, truth) in m.real_scenes.iter().zip(load_real_truth(m)?) {
        let truth = truth.ok_or_else(|| {
            CliError::config(format!(
                "oracle needs reflectance and shading paths for real scene {}",
                entry.id
            ))
        })?;
        for (k, s) in truth.shadings.into_iter().enumerate() {
            oracle.insert(&entry.id, k, truth.reflectance.clone(), s);
        }
    }
    for scene in load_judgement_scenes(m)? {
        let r = scene.reflectance.ok_or_else(|| {
            CliError::config(format!(
                "oracle needs a reflectance path for judgement scene {}",
                scene.id
            ))
        })?;
        let s = ImageF::filled(r.width(), r.height(), 1, 1.0);
        oracle.insert(&scene.id, 0, r, s);
    }
    Ok(oracle)
}

pub fn eval(ctx: &Ctx, args: &EvalArgs) -> Result<(), CliError> {
    let config = args.metric_config();
    config.validate()?;
    let params = args.solver.params();
    params.validate()?;
    let manifest = load_manifest(&args.manifest)?;
    let synthetic: Vec<(String, _)> = manifest
        .synthetic_scenes
        .iter()
        .map(|e| e.id.clone())
        .zip(load_synthetic(&manifest)?)
        .collect();
    let real = load_real_groups(&manifest)?;
    let judgements = load_judgement_scenes(&manifest)?;
    let data = EvalData {
        synthetic: &synthetic,
        real: &real,
        judgements: &judgements,
    };
    data.check(&args.metrics)?;
    let (loaded, oracle, net_decomposer);
    let decomposer: &dyn Decomposer = if args.oracle {
        oracle = oracle_from_manifest(&manifest)?;
        &oracle
    } else {
        let path = args
            .checkpoint
            .as_ref()
            .expect("clap requires --checkpoint");
        loaded = load_net(path)?;
        net_decomposer = NetDecomposer {
            net: &loaded,
            filter: (!args.no_bilateral).then_some(params),
        };
        &net_decomposer
    };
    let report = evaluate(decomposer, data, &args.metrics, &config)?;
    write_json(&args.report, &report)?;
    for (m, summary) in &report {
        println!(
            "{m}: mean {:.6} median {:.6} ({} values)",
            summary.mean,
            summary.median,
            summary.per_scene.len()
        );
    }
    ctx.note(format!("wrote {}", args.report.display()));
    Ok(())
}

pub fn generate(ctx: &Ctx, args: &GenerateArgs) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::config("--count must be at least 1"));
    }
    if !(2..=8).contains(&args.images_per_group) {
        return Err(CliError::config("--images-per-group must lie in [2, 8]"));
    }
    if args.width == 0 || args.height == 0 || args.regions == 0 {
        return Err(CliError::config(
            "--width, --height and --regions must be positive",
        ));
    }
    let spec = GenerateSpec {
        kinds: args.kind.clone(),
        count: args.count,
        seed: args.seed,
        mondrian: MondrianConfig {
            width: args.width,
            height: args.height,
            n_regions: args.regions,
            ..MondrianConfig::default()
        },
        images_per_group: args.images_per_group,
        judgement_pairs: args.judgement_pairs,
        delta: args.delta,
    };
    let manifest = generate_dataset(&spec, &args.out_dir)?;
    ctx.note(format!(
        "wrote {} synthetic, {} real and {} judgement scenes to {}",
        manifest.synthetic_scenes.len(),
        manifest.real_scenes.len(),
        manifest.judgement_scenes.len(),
        args.out_dir.display()
    ));
    Ok(())
}

pub fn retexture_cmd(ctx: &Ctx, args: &RetextureArgs) -> Result<(), CliError> {
    let params = args.solver.params();
    params.validate()?;
    let net = load_net(&args.checkpoint)?;
    let input = load_rgb(&args.input)?;
    let texture = load_rgb(&args.texture)?;
    let mask = load_image(&args.mask)?;
    let mask = if mask.channels() == 3 {
        rgb_to_grayscale(&mask)?
    } else {
        mask
    };
    let filter = (!args.no_bilateral).then_some(&params);
    let (_, shading) = decompose_image(&net, &input, filter)?;
    let out = retexture(&texture, &shading, &mask, &input)?;
    save_image(&out, &args.out)?;
    ctx.note(format!("wrote {}", args.out.display()));
    Ok(())
}

/// Expands a grid file: either a list of (partial) parameter objects, or an
/// object mapping field names to value lists whose cartesian product is taken.
pub fn parse_grid(value: &Value) -> Result<Vec<BilateralParams>, CliError> {
    let bad = |e: serde_json::Error| CliError::config(format!("invalid grid: {e}"));
    let objects: Vec<Value> = match value {
        Value::Array(items) => items.clone(),
        Value::Object(fields) => {
            let mut combos = vec![serde_json::Map::new()];
            for (name, values) in fields {
                let values = match values {
                    Value::Array(v) if !v.is_empty() => v.clone(),
                    Value::Array(_) => {
                        return Err(CliError::config(format!("grid field '{name}' is empty")))
                    }
                    single => vec![single.clone()],
                };
                combos = combos
                    .into_iter()
                    .flat_map(|c| {
                        values.iter().map(move |v| {
                            let mut c = c.clone();
                            c.insert(name.clone(), v.clone());
                            c
                        })
                    })
                    .collect();
            }
            combos.into_iter().map(Value::Object).collect()
        }
        _ => return Err(CliError::config("grid must be a JSON array or object")),
    };
    if objects.is_empty() {
        return Err(CliError::config("grid has no candidates"));
    }
    let params = objects
        .into_iter()
        .map(|o| serde_json::from_value::<BilateralParams>(o).map_err(bad))
        .collect::<Result<Vec<_>, _>>()?;
    for p in &params {
        p.validate()?;
    }
    Ok(params)
}

pub fn tune(ctx: &Ctx, args: &TuneArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.grid)
        .map_err(|e| CliError::io(format!("{}: {e}", args.grid.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", args.grid.display())))?;
    let candidates = parse_grid(&value)?;
    let manifest = load_manifest(&args.manifest)?;
    let scenes = load_judgement_scenes(&manifest)?;
    if scenes.is_empty() {
        return Err(CliError::config(
            "tune needs a non-empty 'judgement_scenes' section in the manifest",
        ));
    }
    let net = load_net(&args.checkpoint)?;
    let mut reflectances = Vec::new();
    for scene in &scenes {
        reflectances.push(net.decompose(&scene.image)?.0);
    }
    let guides: Vec<ImageF> = scenes.iter().map(|s| s.image.clone()).collect();
    let sets: Vec<_> = scenes.iter().map(|s| s.judgements.clone()).collect();
    let outcome = solver_param_search(&candidates, &reflectances, &guides, &sets, args.whdr_delta)?;
    let table: Vec<Value> = candidates
        .iter()
        .zip(&outcome.table)
        .enumerate()
        .map(|(i, (p, w))| json!({ "index": i, "params": p, "mean_whdr": w }))
        .collect();
    let table_path = args
        .table
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out, ".table.json"));
    write_json(&table_path, &table)?;
    write_json(&args.out, &outcome.best)?;
    println!(
        "best candidate {} of {}: mean WHDR {:.6}",
        outcome.best_index,
        candidates.len(),
        outcome.table[outcome.best_index]
    );
    ctx.note(format!(
        "wrote {} and {}",
        args.out.display(),
        table_path.display()
    ));
    Ok(())
}

pub fn init(ctx: &Ctx, args: &InitArgs) -> Result<(), CliError> {
    let cfg = args.net.config();
    cfg.validate()?;
    let net = if args.passthrough {
        IntrinsicNet::baseline_passthrough(cfg)?
    } else {
        IntrinsicNet::new(cfg)?
    };
    write_file(&args.out, &net.to_bytes())?;
    ctx.note(format!(
        "wrote {} ({} parameters)",
        args.out.display(),
        net.param_count()
    ));
    Ok(())
}
