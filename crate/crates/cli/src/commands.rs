use rayon::prelude::*;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use isac_ident::dataset::{
    generate_dataset_with_stats, generate_frames, load_samples, split_by_sequence, to_radar_frame, write_candidates,
    write_samples, CandidateRow, DatasetSplit, Frame, Mode,
};
use isac_ident::detect::detect_objects;
use isac_ident::identify::{
    estimate_offset, fit_linreg_angle, fit_lookup, predict_all, restore, DnnSolver, Sample, Solver, SolverKind,
};
use isac_ident::nn::{read_checkpoint, write_checkpoint, write_sidecar, Sidecar};
use isac_ident::radar::{read_cube, synthesize_frame, write_cube};
use isac_ident::rng::{derive_seed, stream};
use isac_ident::scene::SceneObject;

use crate::config::RunConfig;
use crate::manifest::{write_atomic, RunManifest, MANIFEST_FILE};
use crate::{Cli, CliError, Command, Common};

pub const SAMPLES_FILE: &str = "samples.csv";
pub const CANDIDATES_FILE: &str = "candidates.csv";
pub const FRAMES_FILE: &str = "frames.json";
pub const CUBES_DIR: &str = "cubes";
pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const PARAMS_FILE: &str = "params.json";
pub const MODEL_FILE: &str = "model.isnn";
pub const SIDECAR_FILE: &str = "model.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const REPORT_FILE: &str = "report.csv";
pub const CURVES_FILE: &str = "curves.csv";

type Outputs = Vec<String>;

pub fn dispatch(cmd: Command, args: &[String]) -> Result<(), CliError> {
    match cmd {
        Command::Replay { manifest, out } => replay(&manifest, &out),
        cmd => {
            let cfg = resolve_config(&cmd)?;
            execute(cmd, args, cfg)
        }
    }
}

fn common(cmd: &Command) -> Option<&Common> {
    match cmd {
        Command::Simulate { common, .. }
        | Command::Frames { common, .. }
        | Command::Detect { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Report { common, .. } => Some(common),
        Command::Replay { .. } => None,
    }
}

fn common_mut(cmd: &mut Command) -> Option<&mut Common> {
    match cmd {
        Command::Simulate { common, .. }
        | Command::Frames { common, .. }
        | Command::Detect { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Report { common, .. } => Some(common),
        Command::Replay { .. } => None,
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Simulate { .. } => "simulate",
        Command::Frames { .. } => "frames",
        Command::Detect { .. } => "detect",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Report { .. } => "report",
        Command::Replay { .. } => "replay",
    }
}

/// `eval` without `--config` or `--seed` reuses the configuration of the
/// training run, so it sees the same split.
fn resolve_config(cmd: &Command) -> Result<RunConfig, CliError> {
    let c = common(cmd).expect("replay handled by caller");
    if let Command::Eval { model, .. } = cmd {
        if c.config.is_none() && c.seed.is_none() {
            return Ok(RunManifest::read(&model.join(MANIFEST_FILE))?.config);
        }
    }
    RunConfig::load(c.config.as_deref(), c.seed)
}

fn inputs(cmd: &Command) -> Vec<String> {
    let show = |p: &Path| p.display().to_string();
    match cmd {
        Command::Detect { cubes, .. } => vec![show(cubes)],
        Command::Train { data, .. } | Command::Report { data, .. } => vec![show(data)],
        Command::Eval { data, model, .. } => vec![show(data), show(model)],
        _ => Vec::new(),
    }
}

fn execute(cmd: Command, args: &[String], cfg: RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let out = common(&cmd).expect("replay handled by caller").out.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))?;
    let mut manifest = RunManifest::new(command_name(&cmd), args, &cfg, inputs(&cmd));
    manifest.write(&out)?;

    let outputs = match &cmd {
        Command::Simulate { mode, .. } => simulate(&cfg, *mode, &out)?,
        Command::Frames { limit, .. } => frames(&cfg, *limit, &out)?,
        Command::Detect { cubes, .. } => detect(&cfg, cubes, &out)?,
        Command::Train { data, solver, .. } => train(&cfg, data, solver, &out)?,
        Command::Eval {
            data, model, solver, ..
        } => eval(&cfg, data, model, solver, &out)?,
        Command::Report { data, .. } => report(&cfg, data, &out)?,
        Command::Replay { .. } => unreachable!(),
    };

    manifest.outputs = outputs;
    manifest.complete = true;
    manifest.wall_clock_s = Some(start.elapsed().as_secs_f64());
    manifest.write(&out)
}

fn save(out: &Path, name: &str, bytes: &[u8], outputs: &mut Outputs) -> Result<(), CliError> {
    write_atomic(&out.join(name), bytes)?;
    outputs.push(name.to_string());
    Ok(())
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| CliError::data(e.to_string()))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn lib_err(path: &Path) -> impl Fn(isac_ident::Error) -> CliError + '_ {
    move |e| {
        let mut c = CliError::from(e);
        c.message = format!("{}: {}", path.display(), c.message);
        c
    }
}

fn simulate(cfg: &RunConfig, mode: Mode, out: &Path) -> Result<Outputs, CliError> {
    let (samples, stats) = generate_dataset_with_stats(&cfg.scenario, mode)?;
    let mut buf = Vec::new();
    write_samples(&samples, &mut buf)?;
    let mut outputs = Vec::new();
    save(out, SAMPLES_FILE, &buf, &mut outputs)?;
    println!(
        "frames {} samples {} dropped {}",
        stats.n_frames, stats.n_samples, stats.n_dropped
    );
    Ok(outputs)
}

#[derive(serde::Serialize)]
struct FrameRecord<'a> {
    file: String,
    #[serde(flatten)]
    frame: &'a Frame,
    /// Objects as the radar sees them, after the mounting rotation.
    radar_objects: Vec<SceneObject>,
}

fn frames(cfg: &RunConfig, limit: Option<usize>, out: &Path) -> Result<Outputs, CliError> {
    let sc = &cfg.scenario;
    let mut all = generate_frames(sc)?;
    if let Some(n) = limit {
        all.truncate(n);
    }
    fs::create_dir_all(out.join(CUBES_DIR)).map_err(|e| CliError::data(e.to_string()))?;
    let records = all
        .par_iter()
        .map(|f| {
            let radar_objects: Vec<SceneObject> =
                f.objects.iter().map(|o| to_radar_frame(o, sc.misalignment_deg)).collect();
            let seed = derive_seed(sc.seed, stream::FRAME + f.sample_id);
            let cube = synthesize_frame(&radar_objects, &sc.radar, seed)?;
            let mut buf = Vec::new();
            write_cube(&cube, &mut buf)?;
            let file = format!("{CUBES_DIR}/frame_{:06}.rcub", f.sample_id);
            write_atomic(&out.join(&file), &buf)?;
            Ok(FrameRecord {
                file,
                frame: f,
                radar_objects,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut outputs: Outputs = records.iter().map(|r| r.file.clone()).collect();
    save(out, FRAMES_FILE, &to_json(&records)?, &mut outputs)?;
    println!("frames {}", records.len());
    Ok(outputs)
}

/// Sample id from a `frame_000123.rcub` file name.
fn frame_id(path: &Path) -> Option<u64> {
    path.file_stem()?.to_str()?.strip_prefix("frame_")?.parse().ok()
}

fn detect(cfg: &RunConfig, cubes: &Path, out: &Path) -> Result<Outputs, CliError> {
    let entries =
        fs::read_dir(cubes).map_err(|e| CliError::usage(format!("cannot read {}: {e}", cubes.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rcub"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::data(format!("no .rcub files in {}", cubes.display())));
    }
    let sc = &cfg.scenario;
    let rows = paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let f = fs::File::open(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            let cube = read_cube(std::io::BufReader::new(f), &sc.radar).map_err(lib_err(p))?;
            let cands = detect_objects(&cube, &sc.detect).map_err(lib_err(p))?;
            let id = frame_id(p).unwrap_or(i as u64);
            Ok(cands
                .iter()
                .enumerate()
                .map(|(k, c)| CandidateRow {
                    sample_id: id,
                    k,
                    range_m: c.range_m,
                    angle_deg: c.angle_deg,
                    vel_mps: c.velocity_mps,
                    power: c.power,
                    n_points: c.n_points,
                })
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, CliError>>()?
        .concat();
    let mut buf = Vec::new();
    write_candidates(&rows, &mut buf)?;
    let mut outputs = Vec::new();
    save(out, CANDIDATES_FILE, &buf, &mut outputs)?;
    println!("cubes {} candidates {}", paths.len(), rows.len());
    Ok(outputs)
}

fn pointing(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    Ok(cfg.scenario.comm.codebook()?.pointing_angles)
}

/// Loads a dataset and checks it against the configured codebook.
fn load_data(path: &Path, n_beams: usize) -> Result<Vec<Sample>, CliError> {
    let samples = load_samples(path).map_err(lib_err(path))?;
    if samples.is_empty() {
        return Err(CliError::data(format!("{}: no samples", path.display())));
    }
    for s in &samples {
        s.validate(n_beams).map_err(lib_err(path))?;
    }
    Ok(samples)
}

fn load_split(cfg: &RunConfig, data: &Path, n_beams: usize) -> Result<DatasetSplit, CliError> {
    let samples = load_data(data, n_beams)?;
    Ok(split_by_sequence(&samples, cfg.train.split_ratio, cfg.seed())?)
}

fn parse_solvers(spec: &str) -> Result<Vec<SolverKind>, CliError> {
    if spec == "all" {
        return Ok(SolverKind::ALL.to_vec());
    }
    let mut kinds = Vec::new();
    for name in spec.split(',') {
        let k: SolverKind = name.trim().parse()?;
        if !kinds.contains(&k) {
            kinds.push(k);
        }
    }
    Ok(kinds)
}

/// Writes `accuracy.csv` and `predictions.csv` for fitted solvers.
fn score(
    solvers: &[Box<dyn Solver>],
    split: &DatasetSplit,
    out: &Path,
    outputs: &mut Outputs,
) -> Result<(), CliError> {
    let mut acc = String::from("solver,accuracy,n_correct,n_test,n_train\n");
    let mut preds = String::from("solver,sample_id,sequence_id,predicted,label,correct\n");
    for s in solvers {
        let p = predict_all(s.as_ref(), &split.test)?;
        let mut hits = 0;
        for (k, t) in p.iter().zip(&split.test) {
            let ok = *k == t.label;
            hits += ok as usize;
            let _ = writeln!(preds, "{},{},{},{k},{},{}", s.kind(), t.sample_id, t.sequence_id, t.label, ok as u8);
        }
        let n = split.test.len();
        let a = hits as f64 / n as f64;
        let _ = writeln!(acc, "{},{a},{hits},{n},{}", s.kind(), split.train.len());
        println!("{:<13} {a:.4}", s.kind().as_str());
    }
    save(out, ACCURACY_FILE, acc.as_bytes(), outputs)?;
    save(out, PREDICTIONS_FILE, preds.as_bytes(), outputs)
}

fn train(cfg: &RunConfig, data: &Path, solver: &str, out: &Path) -> Result<Outputs, CliError> {
    let kinds = parse_solvers(solver)?;
    let pointing = pointing(cfg)?;
    let split = load_split(cfg, data, pointing.len())?;
    let mut outputs = Vec::new();
    let mut solvers: Vec<Box<dyn Solver>> = Vec::new();
    let mut params = serde_json::Map::new();
    for kind in kinds {
        let s: Box<dyn Solver> = if kind == SolverKind::Dnn {
            let mut d = DnnSolver::new(pointing.len(), cfg.train.dnn.clone());
            d.fit(&split.train)?;
            write_dnn(&d, cfg, out, &mut outputs)?;
            Box::new(d)
        } else {
            let mut s = kind.build(&pointing, &cfg.train.dnn);
            s.fit(&split.train)?;
            s
        };
        params.insert(kind.to_string(), s.params_json());
        solvers.push(s);
    }
    save(out, PARAMS_FILE, &to_json(&params)?, &mut outputs)?;
    score(&solvers, &split, out, &mut outputs)?;
    Ok(outputs)
}

fn write_dnn(d: &DnnSolver, cfg: &RunConfig, out: &Path, outputs: &mut Outputs) -> Result<(), CliError> {
    let model = d.model.as_ref().expect("fitted");
    let report = d.report.as_ref().expect("fitted");
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf)?;
    save(out, MODEL_FILE, &buf, outputs)?;

    let training = serde_json::json!({
        "hyper": d.hyper,
        "split_ratio": cfg.train.split_ratio,
        "n_rows": report.n_rows,
        "final_loss": report.epoch_loss.last(),
    });
    let mut buf = Vec::new();
    write_sidecar(&Sidecar::new(model, training), &mut buf)?;
    save(out, SIDECAR_FILE, &buf, outputs)?;

    let mut loss = String::from("epoch,loss\n");
    for (e, l) in report.epoch_loss.iter().enumerate() {
        let _ = writeln!(loss, "{},{l}", e + 1);
    }
    save(out, LOSS_FILE, loss.as_bytes(), outputs)
}

fn eval(cfg: &RunConfig, data: &Path, model_dir: &Path, solver: &str, out: &Path) -> Result<Outputs, CliError> {
    let pointing = pointing(cfg)?;
    let params_path = model_dir.join(PARAMS_FILE);
    let text = fs::read_to_string(&params_path)
        .map_err(|e| CliError::data(format!("{}: {e}", params_path.display())))?;
    let params: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", params_path.display())))?;
    let kinds = if solver == "all" {
        SolverKind::ALL
            .into_iter()
            .filter(|k| params.contains_key(k.as_str()))
            .collect()
    } else {
        parse_solvers(solver)?
    };

    let mut solvers = Vec::new();
    for kind in kinds {
        let p = params
            .get(kind.as_str())
            .ok_or_else(|| CliError::data(format!("{}: no parameters for '{kind}'", params_path.display())))?;
        let model = if kind == SolverKind::Dnn {
            let path = model_dir.join(MODEL_FILE);
            let f = fs::File::open(&path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
            let m = read_checkpoint(std::io::BufReader::new(f)).map_err(lib_err(&path))?;
            if m.norm.n_beams != pointing.len() {
                return Err(CliError::data(format!(
                    "{}: model expects {} beams, config has {}",
                    path.display(),
                    m.norm.n_beams,
                    pointing.len()
                )));
            }
            Some(m)
        } else {
            None
        };
        solvers.push(restore(kind, &pointing, p, model).map_err(lib_err(&params_path))?);
    }
    if solvers.is_empty() {
        return Err(CliError::data(format!("{}: no solvers", params_path.display())));
    }
    let split = load_split(cfg, data, pointing.len())?;
    let mut outputs = Vec::new();
    score(&solvers, &split, out, &mut outputs)?;
    Ok(outputs)
}

/// Scatter of the optimal beam's pointing angle against the user's radar
/// angle, and the beam-to-angle maps of the offset, linear and lookup fits.
/// The fits use every sample, since this is a view of the data.
fn report(cfg: &RunConfig, data: &Path, out: &Path) -> Result<Outputs, CliError> {
    let pointing = pointing(cfg)?;
    let samples = load_data(data, pointing.len())?;
    let offset = estimate_offset(&samples, &pointing)?;
    let lin = fit_linreg_angle(&samples, &pointing)?;
    let table = fit_lookup(&samples, &pointing)?;

    let mut scatter = String::from("sample_id,sequence_id,beam,beam_angle_deg,target_angle_deg\n");
    for s in &samples {
        let _ = writeln!(
            scatter,
            "{},{},{},{},{}",
            s.sample_id,
            s.sequence_id,
            s.beam,
            pointing[s.beam],
            s.target().angle_deg
        );
    }
    let mut curves = String::from("beam,beam_angle_deg,offset_deg,linreg_deg,lookup_deg,lookup_count\n");
    for (b, phi) in pointing.iter().enumerate() {
        let _ = writeln!(
            curves,
            "{b},{phi},{},{},{},{}",
            phi + offset,
            lin.intercept + lin.slope * phi,
            table.angle_deg[b],
            table.count[b]
        );
    }
    let mut outputs = Vec::new();
    save(out, REPORT_FILE, scatter.as_bytes(), &mut outputs)?;
    save(out, CURVES_FILE, curves.as_bytes(), &mut outputs)?;
    println!(
        "samples {} offset {offset:.3} deg, linear fit {:.3} + {:.4} x",
        samples.len(),
        lin.intercept,
        lin.slope
    );
    Ok(outputs)
}

/// `args` with the value of `--out` replaced.
fn replace_out(args: &[String], out: &Path) -> Vec<String> {
    let out = out.display().to_string();
    let mut res = Vec::with_capacity(args.len());
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out" {
            res.push(a.clone());
            it.next();
            res.push(out.clone());
        } else if a.starts_with("--out=") {
            res.push(format!("--out={out}"));
        } else {
            res.push(a.clone());
        }
    }
    res
}

/// Re-runs the recorded command with its configuration snapshot and
/// compares every recorded output byte for byte.
fn replay(manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    use clap::Parser;

    let m = RunManifest::read(manifest_path)?;
    if !m.complete {
        return Err(CliError::data(format!("{}: run did not complete", manifest_path.display())));
    }
    let orig_dir = manifest_path.parent().unwrap_or(Path::new("."));
    if fs::canonicalize(orig_dir).ok() == fs::canonicalize(out).ok() {
        return Err(CliError::usage("replay output directory must differ from the original"));
    }
    let args = replace_out(&m.args, out);
    let argv = std::iter::once("isac-ident".to_string()).chain(args.iter().cloned());
    let mut cmd = Cli::try_parse_from(argv)
        .map_err(|e| CliError::data(format!("{}: bad recorded arguments: {e}", manifest_path.display())))?
        .command;
    match common_mut(&mut cmd) {
        Some(c) => c.out = out.to_path_buf(),
        None => return Err(CliError::data("cannot replay a replay")),
    }
    execute(cmd, &args, m.config.clone())?;

    let mut differ = Vec::new();
    for name in &m.outputs {
        let a = fs::read(orig_dir.join(name)).map_err(|e| CliError::data(format!("{name}: {e}")))?;
        let b = fs::read(out.join(name)).map_err(|e| CliError::data(format!("{name}: {e}")))?;
        if a != b {
            differ.push(name.as_str());
        }
    }
    if !differ.is_empty() {
        return Err(CliError::data(format!("outputs differ: {}", differ.join(", "))));
    }
    println!("replay matched {} outputs", m.outputs.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_flag_is_replaced_in_both_forms() {
        let args: Vec<String> = ["train", "--out", "a", "--data", "d", "--out=b"].map(String::from).to_vec();
        assert_eq!(
            replace_out(&args, Path::new("z")),
            ["train", "--out", "z", "--data", "d", "--out=z"].map(String::from).to_vec()
        );
    }

    #[test]
    fn frame_ids_come_from_file_names() {
        assert_eq!(frame_id(Path::new("x/frame_000123.rcub")), Some(123));
        assert_eq!(frame_id(Path::new("x/other.rcub")), None);
    }

    #[test]
    fn solver_lists() {
        assert_eq!(parse_solvers("all").unwrap().len(), 5);
        assert_eq!(
            parse_solvers("dnn,offset,dnn").unwrap(),
            vec![SolverKind::Dnn, SolverKind::Offset]
        );
        assert_eq!(parse_solvers("knn").unwrap_err().code, 2);
    }
}
