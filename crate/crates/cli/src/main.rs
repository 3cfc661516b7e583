mod args;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::Parser;
use serde_json::{json, Value};
use stepwise_core::association::{extract_associations, AssociationConfig, AssociationResult};
use stepwise_core::bda::{bda, bda_matching};
use stepwise_core::fixtures;
use stepwise_core::frames::{FrameDir, FrameSource};
use stepwise_core::fsm::{compile, has_errors, scaffold_from_workflow, simulate, validate, Severity, TaskFsm, TaskPackage, PACKAGE_FILE};
use stepwise_core::labeling::dedupe::DEFAULT_DEDUPE_THRESHOLD;
use stepwise_core::labeling::detector::serve_plugin;
use stepwise_core::labeling::{
    augment, dedupe_frames, export_dataset, import_dataset, mine_negatives, propagate_labels, train_baseline, AugmentOp,
    Detector, ExportOptions, LabelProject, PropagationParams, Sample, TemplateDetectorModel,
};
use stepwise_core::segmentation::segment_trace;
use stepwise_core::trace::{parse_trace, trace_to_string, DetectionFrame};
use stepwise_core::workflow::{load_workflow, save_workflow};
use stepwise_core::{BoundingBox, SegmentationConfig, StepSegment, Workflow};
use stepwise_runtime::{DetectorBinding, ServiceConfig};

use args::*;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let format = cli.format;
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            if format == Format::Json {
                eprintln!("{}", json!({"error": chain.join(": ")}));
            } else {
                eprintln!("error: {}", chain.join(": "));
            }
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_trace(path: &Path) -> Result<Vec<DetectionFrame>> {
    let text = String::from_utf8(read(path)?).with_context(|| format!("{} is not UTF-8", path.display()))?;
    parse_trace(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_workflow(path: &Path) -> Result<Workflow> {
    load_workflow(&read(path)?).with_context(|| format!("loading {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn pretty(value: &impl serde::Serialize) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// Document to `out`, or to stdout when there is no `out`.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<bool> {
    match out {
        Some(p) => {
            write(p, bytes)?;
            Ok(true)
        }
        None => {
            io::stdout().write_all(bytes)?;
            Ok(false)
        }
    }
}

struct Reporter(Format);

impl Reporter {
    fn report(&self, text: impl AsRef<str>, value: Value) {
        match self.0 {
            Format::Text => println!("{}", text.as_ref()),
            Format::Json => println!("{value}"),
        }
    }
}

fn segmentation_config(path: Option<&Path>) -> Result<SegmentationConfig> {
    let config = match path {
        Some(p) => read_json(p)?,
        None => SegmentationConfig::default(),
    };
    config.validate()?;
    Ok(config)
}

fn read_segments(path: &Path) -> Result<Vec<StepSegment>> {
    let value: Value = read_json(path)?;
    if value.is_array() {
        Ok(serde_json::from_value(value)?)
    } else {
        Ok(read_workflow(path)?.segments())
    }
}

fn read_boxes(path: &Path) -> Result<Vec<BoundingBox>> {
    read_json(path)
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).with_context(|| format!("decoding {}", path.display()))
}

fn named_associations(result: &AssociationResult) -> Value {
    let map: serde_json::Map<String, Value> = result
        .step_associations
        .iter()
        .map(|(step, ids)| {
            (
                step.to_string(),
                ids.iter().map(|i| Value::from(result.dictionary.name(*i))).collect(),
            )
        })
        .collect();
    Value::Object(map)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let rep = Reporter(cli.format);
    let seed = cli.seed;
    match cli.command {
        Command::Segment(a) => {
            let trace = read_trace(&a.trace)?;
            let config = segmentation_config(cli.config.as_deref())?;
            let run = segment_trace(&trace, &config)?;
            let id = a.workflow_id.unwrap_or_else(|| {
                a.trace
                    .file_stem()
                    .map_or("workflow".into(), |s| s.to_string_lossy().into_owned())
            });
            let w = Workflow::from_segments(&id, &a.video_ref, a.fps, &run.segments);
            if emit(a.out.as_deref(), &save_workflow(&w)?)? {
                let spans: Vec<String> = run.segments.iter().map(|s| format!("[{}, {}]", s.start_frame, s.end_frame)).collect();
                rep.report(
                    format!("{} steps: {}", run.segments.len(), spans.join(" ")),
                    json!({"steps": run.segments.len(), "segments": run.segments}),
                );
            }
        }
        Command::Bda(a) => {
            let detected = read_segments(&a.detected)?;
            let manual = read_segments(&a.manual)?;
            let score = bda(&detected, &manual);
            rep.report(
                format!("{score}"),
                json!({"bda": score, "matching": bda_matching(&detected, &manual)}),
            );
        }
        Command::Associate(a) => {
            let trace = read_trace(&a.trace)?;
            let w = read_workflow(&a.workflow)?;
            let config: AssociationConfig = match &a.association_config {
                Some(p) => read_json(p)?,
                None => AssociationConfig::default(),
            };
            let frames = a.frames_dir.as_ref().map(FrameDir::new);
            let result = extract_associations(
                &trace,
                &w.segments(),
                &config,
                frames.as_ref().map(|f| f as &dyn FrameSource),
            )?;
            let next = w.with_associations(&result);
            if emit(a.out.as_deref(), &save_workflow(&next)?)? {
                let lines: Vec<String> = next
                    .steps
                    .iter()
                    .map(|s| format!("step {}: {}", s.step_id, s.objects.join(", ")))
                    .collect();
                rep.report(lines.join("\n"), json!({"step_associations": named_associations(&result)}));
            }
        }
        Command::Workflow(cmd) => {
            let (out, next) = match cmd {
                WorkflowCommand::Split { workflow, frame, out } => {
                    let w = read_workflow(&workflow)?;
                    (out, w.split_step(frame)?)
                }
                WorkflowCommand::Merge { workflow, step, out } => {
                    let w = read_workflow(&workflow)?;
                    (out, w.merge_steps(step)?)
                }
                WorkflowCommand::Objects {
                    workflow,
                    step,
                    add,
                    remove,
                    completion,
                    out,
                } => {
                    let w = read_workflow(&workflow)?;
                    let mut next = w.edit_objects(step, &add, &remove)?;
                    if completion.is_some() {
                        let revision = next.revision;
                        next = next.set_completion_object(step, completion)?;
                        next.revision = revision;
                    }
                    (out, next)
                }
            };
            if emit(out.as_deref(), &save_workflow(&next)?)? {
                rep.report(
                    format!("revision {}: {} steps", next.revision, next.steps.len()),
                    json!({"revision": next.revision, "steps": next.steps.len()}),
                );
            }
        }
        Command::Dataset(cmd) => dataset(cmd, &rep, seed)?,
        Command::Detector(cmd) => detector(cmd, &rep)?,
        Command::Fsm(cmd) => return fsm(cmd, &rep),
        Command::Serve(a) => {
            let detector = match (a.detector_plugin, a.detector_model) {
                (Some(cmd), _) => DetectorBinding::Plugin(cmd),
                (None, Some(model)) => DetectorBinding::Template(model),
                (None, None) => DetectorBinding::None,
            };
            let config = ServiceConfig {
                bind_addr: a.bind,
                package_dir: a.package_dir,
                max_tokens: a.max_tokens,
                detector,
            };
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .with_writer(io::stderr)
                .init();
            tokio::runtime::Runtime::new()?.block_on(stepwise_runtime::serve(config))?;
        }
        Command::Fixtures(a) => write_fixtures(&a.out_dir, seed, &rep)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn save_project(path: &Path, p: &LabelProject) -> Result<()> {
    write(path, &pretty(p))
}

fn dataset(cmd: DatasetCommand, rep: &Reporter, seed: u64) -> Result<()> {
    match cmd {
        DatasetCommand::Init {
            project,
            project_id,
            video_ref,
            frame_count,
            classes,
        } => {
            let classes: Vec<&str> = classes.iter().map(String::as_str).collect();
            let p = LabelProject::new(&project_id, &video_ref, frame_count, &classes);
            save_project(&project, &p)?;
            rep.report(format!("created {}", project.display()), json!({"project": p.project_id}));
        }
        DatasetCommand::Relabel { project, frame, boxes } => {
            let p: LabelProject = read_json(&project)?;
            let next = p.relabel_keyframe(frame, read_boxes(&boxes)?)?;
            save_project(&project, &next)?;
            rep.report(
                format!("keyframe {frame} set; revision {}", next.revision),
                json!({"revision": next.revision}),
            );
        }
        DatasetCommand::Propagate {
            project,
            frames_dir,
            from,
            until,
            search_radius,
            stop_threshold,
        } => {
            let p: LabelProject = read_json(&project)?;
            let params = PropagationParams {
                search_radius,
                stop_threshold,
            };
            let (next, written) = propagate_labels(&p, from, until, &FrameDir::new(&frames_dir), &params)?;
            save_project(&project, &next)?;
            rep.report(
                format!("propagated {} frames", written.len()),
                json!({"written": written.keys().collect::<Vec<_>>()}),
            );
        }
        DatasetCommand::Dedupe {
            project,
            frames_dir,
            threshold,
        } => {
            let p: LabelProject = read_json(&project)?;
            let frames = FrameDir::new(&frames_dir);
            let labeled: Vec<u32> = p.labeled_frames().keys().copied().collect();
            let images = labeled
                .iter()
                .map(|&f| frames.frame(f).ok_or_else(|| anyhow!("no image for frame {f} in {}", frames_dir.display())))
                .collect::<Result<Vec<_>>>()?;
            let threshold = threshold.unwrap_or(DEFAULT_DEDUPE_THRESHOLD);
            let kept: Vec<u32> = dedupe_frames(&images, threshold).into_iter().map(|i| labeled[i]).collect();
            let list: Vec<String> = kept.iter().map(u32::to_string).collect();
            rep.report(
                format!("kept {} of {}: {}", kept.len(), labeled.len(), list.join(" ")),
                json!({"kept": kept, "threshold": threshold}),
            );
        }
        DatasetCommand::Augment {
            image,
            boxes,
            ops,
            out_dir,
        } => {
            let ops = ops
                .iter()
                .map(|s| {
                    let s = s.trim();
                    let spec = if matches!(s, "color_jitter" | "distort") {
                        format!("{s}:{seed}")
                    } else {
                        s.to_string()
                    };
                    spec.parse::<AugmentOp>()
                })
                .collect::<Result<Vec<_>, _>>()?;
            let sample = Sample {
                image: open_image(&image)?,
                boxes: read_boxes(&boxes)?,
            };
            let samples = augment(&sample, &ops)?;
            fs::create_dir_all(&out_dir)?;
            let mut index = Vec::new();
            for (i, s) in samples.iter().enumerate() {
                let name = format!("sample_{i:03}.png");
                s.image.save(out_dir.join(&name))?;
                index.push(json!({"image_ref": name, "boxes": s.boxes}));
            }
            write(&out_dir.join("samples.json"), &pretty(&index))?;
            rep.report(format!("wrote {} samples", samples.len()), json!({"samples": samples.len()}));
        }
        DatasetCommand::Negatives {
            image,
            boxes,
            count,
            width,
            height,
            out_dir,
        } => {
            let img = open_image(&image)?;
            let crops = mine_negatives(&img, &read_boxes(&boxes)?, count, (width, height), seed)?;
            fs::create_dir_all(&out_dir)?;
            for (i, c) in crops.crops.iter().enumerate() {
                c.save(out_dir.join(format!("negative_{i:03}.png")))?;
            }
            write(&out_dir.join("negatives.json"), &pretty(&crops.boxes))?;
            if crops.exhausted {
                eprintln!("warning: only {} of {count} background crops fit", crops.boxes.len());
            }
            rep.report(
                format!("wrote {} negatives", crops.boxes.len()),
                json!({"negatives": crops.boxes, "exhausted": crops.exhausted}),
            );
        }
        DatasetCommand::Export {
            project,
            frames_dir,
            out_dir,
            dedupe,
            negatives_per_image,
            negative_size,
            train_fraction,
        } => {
            let p: LabelProject = read_json(&project)?;
            let options = ExportOptions {
                dedupe_threshold: dedupe,
                negatives_per_image,
                negative_size: (negative_size, negative_size),
                train_fraction,
                seed,
            };
            let ds = export_dataset(&p, &FrameDir::new(&frames_dir), &out_dir, &options)?;
            rep.report(
                format!(
                    "exported {} images ({} train, {} validation), {} negatives",
                    ds.images.len(),
                    ds.split.train.len(),
                    ds.split.validation.len(),
                    ds.negatives.len()
                ),
                json!({"images": ds.images.len(), "negatives": ds.negatives.len()}),
            );
        }
    }
    Ok(())
}

fn detector(cmd: DetectorCommand, rep: &Reporter) -> Result<()> {
    match cmd {
        DetectorCommand::Train { dataset, out, threshold } => {
            let ds = import_dataset(&dataset)?;
            let model = train_baseline(&ds, &dataset, threshold)?;
            write(&out, &model.to_json())?;
            let counts: Vec<String> = model.classes.iter().map(|(c, t)| format!("{c}: {}", t.len())).collect();
            rep.report(format!("templates {}", counts.join(", ")), json!({"classes": model.classes.keys().collect::<Vec<_>>()}));
        }
        DetectorCommand::Detect { model, image } => {
            let m = TemplateDetectorModel::load(&model)?;
            let boxes = m.detect(&open_image(&image)?)?;
            match rep.0 {
                Format::Json => println!("{}", serde_json::to_string(&boxes)?),
                Format::Text => {
                    for b in &boxes {
                        println!(
                            "{} {:.3} [{}, {}, {}, {}]",
                            b.label.as_deref().unwrap_or("?"),
                            b.score.unwrap_or(1.0),
                            b.x_min,
                            b.y_min,
                            b.x_max,
                            b.y_max
                        );
                    }
                }
            }
        }
        DetectorCommand::Plugin { model } => {
            let m = TemplateDetectorModel::load(&model)?;
            let stdin = io::stdin();
            serve_plugin(&m, stdin.lock(), io::stdout().lock())?;
        }
    }
    Ok(())
}

fn load_package(path: &Path) -> Result<TaskPackage> {
    let file = if path.is_dir() { path.join(PACKAGE_FILE) } else { path.to_path_buf() };
    TaskPackage::from_bytes(&read(&file)?).with_context(|| format!("loading {}", file.display()))
}

fn fsm(cmd: FsmCommand, rep: &Reporter) -> Result<ExitCode> {
    match cmd {
        FsmCommand::Scaffold { workflow, out } => {
            let fsm = scaffold_from_workflow(&read_workflow(&workflow)?)?;
            if emit(out.as_deref(), &fsm.to_json())? {
                rep.report(
                    format!("{} states, {} transitions", fsm.states.len(), fsm.transitions.len()),
                    json!({"states": fsm.states.len(), "transitions": fsm.transitions.len()}),
                );
            }
        }
        FsmCommand::Validate { fsm } => {
            let doc = TaskFsm::from_json(&read(&fsm)?)?;
            let diags = validate(&doc);
            let lines: Vec<String> = diags
                .iter()
                .map(|d| {
                    let sev = if d.severity == Severity::Error { "error" } else { "warning" };
                    format!("{sev}[{}]: {}", d.code, d.message)
                })
                .collect();
            let text = if lines.is_empty() { "ok".to_string() } else { lines.join("\n") };
            rep.report(text, json!({"ok": !has_errors(&diags), "diagnostics": diags}));
            if has_errors(&diags) {
                return Ok(ExitCode::from(1));
            }
        }
        FsmCommand::Compile { fsm, out } => {
            let doc = TaskFsm::from_json(&read(&fsm)?)?;
            let pkg = match compile(&doc) {
                Ok(p) => p,
                Err(stepwise_core::fsm::FsmError::Invalid(diags)) => {
                    for d in diags.iter().filter(|d| d.severity == Severity::Error) {
                        eprintln!("error[{}]: {}", d.code, d.message);
                    }
                    bail!("compile refused: {} validation error(s)", diags.iter().filter(|d| d.severity == Severity::Error).count());
                }
                Err(e) => return Err(e.into()),
            };
            pkg.write_dir(&out)?;
            rep.report(
                format!("{} -> {} (sha256 {})", doc.name, out.join(PACKAGE_FILE).display(), pkg.checksum),
                json!({"package": out.join(PACKAGE_FILE), "checksum": pkg.checksum}),
            );
        }
        FsmCommand::Simulate { package, trace } => {
            let pkg = load_package(&package)?;
            let tl = simulate(&pkg, &read_trace(&trace)?)?;
            match rep.0 {
                Format::Json => println!("{}", serde_json::to_string(&tl)?),
                Format::Text => {
                    for e in &tl.entries {
                        println!("{:>6} {} -> {}: {}", e.frame_index, e.from_state, e.state_id, e.guidance.speech);
                    }
                    println!("final state {}{}", tl.final_state, if tl.terminal { " (done)" } else { "" });
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn write_fixtures(dir: &Path, seed: u64, rep: &Reporter) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut written: Vec<PathBuf> = Vec::new();
    let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        write(&p, bytes)?;
        written.push(p);
        Ok(())
    };

    let steps = fixtures::step_trace_fixture(seed);
    put("step_trace.jsonl", trace_to_string(&steps.trace).as_bytes())?;
    let manual = Workflow::from_segments("step-manual", "step_trace", 30.0, &steps.manual);
    put("step_manual.json", &save_workflow(&manual)?)?;

    let world = fixtures::random_association_world(seed);
    put("association_trace.jsonl", trace_to_string(&world.trace).as_bytes())?;
    let assoc_wf = Workflow::from_segments("association", "association_trace", 30.0, &world.segments);
    put("association_workflow.json", &save_workflow(&assoc_wf)?)?;

    put("sandwich_fsm.json", &fixtures::sandwich_fsm().to_json())?;
    for case in fixtures::SandwichCase::ALL {
        put(&format!("sandwich_case{}.jsonl", case.number()), trace_to_string(&case.trace()).as_bytes())?;
    }

    let (frames, truth) = fixtures::translating_square_video(16, 2, seed);
    let frame_dir = FrameDir::new(dir.join("square_frames"));
    fs::create_dir_all(dir.join("square_frames"))?;
    for (i, f) in frames.iter().enumerate() {
        f.save(frame_dir.path(i as u32))?;
    }
    put("square_keyframe.json", &pretty(&vec![truth[0].clone().with_label("square")]))?;
    put("square_truth.json", &pretty(&truth))?;

    let names: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
    rep.report(
        format!("{}\n{}", names.join("\n"), dir.join("square_frames").display()),
        json!({"files": names, "frames_dir": dir.join("square_frames")}),
    );
    Ok(())
}
