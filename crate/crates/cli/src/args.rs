use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "stepwise", version, about = "Author step-by-step task guidance from first-person recordings")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON file of segmentation settings (window_size, threshold, min_step_frames, min_roi_area).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Report format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a detection trace into working steps; writes a workflow.
    Segment(SegmentArgs),
    /// Boundary detection accuracy of a detected segmentation against a manual one.
    Bda(BdaArgs),
    /// Fill a workflow's object lists from the objects handled in a trace.
    Associate(AssociateArgs),
    /// Edit a workflow document.
    #[command(subcommand)]
    Workflow(WorkflowCommand),
    /// Build detector training data.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train or run the template baseline detector.
    #[command(subcommand)]
    Detector(DetectorCommand),
    /// Author, check, compile and replay task state machines.
    #[command(subcommand)]
    Fsm(FsmCommand),
    /// Run the streaming runtime and authoring API.
    Serve(ServeArgs),
    /// Write the bundled synthetic inputs to a directory.
    Fixtures(FixturesArgs),
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    /// Detection trace, one JSON frame per line.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Defaults to the trace file stem.
    #[arg(long)]
    pub workflow_id: Option<String>,
    #[arg(long, default_value = "")]
    pub video_ref: String,
    #[arg(long, default_value_t = 30.0)]
    pub fps: f64,
}

#[derive(Debug, Args)]
pub struct BdaArgs {
    /// Workflow JSON or a JSON list of segments.
    #[arg(long)]
    pub detected: PathBuf,
    #[arg(long)]
    pub manual: PathBuf,
}

#[derive(Debug, Args)]
pub struct AssociateArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub workflow: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory of frame_NNNNNN.png images for colour features; without it
    /// object boxes must carry embedded features.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
    /// JSON file of association settings.
    #[arg(long)]
    pub association_config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum WorkflowCommand {
    /// Split the step containing FRAME; FRAME starts the new step.
    Split {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        frame: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge a step with the one after it.
    Merge {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add or remove objects of a step and optionally set its completion object.
    Objects {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        step: usize,
        #[arg(long, value_delimiter = ',')]
        add: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        remove: Vec<String>,
        #[arg(long)]
        completion: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Create an empty label project.
    Init {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        project_id: String,
        #[arg(long, default_value = "")]
        video_ref: String,
        #[arg(long)]
        frame_count: u32,
        #[arg(long, value_delimiter = ',', required = true)]
        classes: Vec<String>,
    },
    /// Set the manual boxes of a keyframe.
    Relabel {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        frame: u32,
        /// JSON list of labeled boxes.
        #[arg(long)]
        boxes: PathBuf,
    },
    /// Track a keyframe's boxes forward.
    Propagate {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        frames_dir: PathBuf,
        #[arg(long)]
        from: u32,
        #[arg(long)]
        until: u32,
        #[arg(long, default_value_t = 16)]
        search_radius: i32,
        #[arg(long, default_value_t = 0.6)]
        stop_threshold: f64,
    },
    /// Indices of labeled frames kept after near-duplicate removal.
    Dedupe {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        frames_dir: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Augmented copies of one labeled image.
    Augment {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        /// hflip, rotate90, color_jitter[:seed], distort[:seed]
        #[arg(long, value_delimiter = ',', required = true)]
        ops: Vec<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Background crops that avoid every positive box.
    Negatives {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        boxes: PathBuf,
        #[arg(long, default_value_t = 4)]
        count: usize,
        #[arg(long, default_value_t = 32)]
        width: u32,
        #[arg(long, default_value_t = 32)]
        height: u32,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write the project as a dataset directory.
    Export {
        #[arg(long)]
        project: PathBuf,
        #[arg(long)]
        frames_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        dedupe: Option<f64>,
        #[arg(long, default_value_t = 2)]
        negatives_per_image: usize,
        #[arg(long, default_value_t = 32)]
        negative_size: u32,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum DetectorCommand {
    /// Build a template model from an exported dataset.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
    },
    /// Detect objects in one image.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
    /// Serve a model over the JSON-lines plugin protocol on stdin/stdout.
    Plugin {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum FsmCommand {
    /// Linear state machine from a workflow's completion objects.
    Scaffold {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Structural diagnostics; exits 1 when there are errors.
    Validate {
        #[arg(long)]
        fsm: PathBuf,
    },
    /// Compile to a package directory.
    Compile {
        #[arg(long)]
        fsm: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a detection trace through a package.
    Simulate {
        /// Package directory (or package.json file).
        #[arg(long)]
        package: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "BIND_ADDR", default_value = stepwise_runtime::config::DEFAULT_BIND_ADDR)]
    pub bind: String,
    #[arg(long, env = "PACKAGE_DIR")]
    pub package_dir: Option<PathBuf>,
    #[arg(long, env = "MAX_TOKENS", default_value_t = stepwise_runtime::DEFAULT_MAX_TOKENS, value_parser = clap::value_parser!(u32).range(1..))]
    pub max_tokens: u32,
    /// Command line of a JSON-lines detector plugin.
    #[arg(long, env = "DETECTOR_PLUGIN", conflicts_with = "detector_model")]
    pub detector_plugin: Option<String>,
    /// Template model run in-process on raw frames.
    #[arg(long)]
    pub detector_model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixturesArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
}
