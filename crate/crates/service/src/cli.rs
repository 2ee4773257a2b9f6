//! `geoctl` command line.

use std::io::Write;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use geoctl_core::camera::IntrinsicsJson;
use geoctl_core::curation::{filter_clips, ClipRecord, FilterConfig, FilterRule};
use geoctl_core::io::{load_scene, save_scene};
use geoctl_core::metrics::{evaluate_files, Alignment, EvalOptions, DEFAULT_UNMATCHED_PENALTY};
use geoctl_core::packing::{save_gt4d, StrideConfig};
use geoctl_core::{Error, RenderMode};

use crate::api::LabelMap;
use crate::error::{ServiceError, ServiceResult};
use crate::ops::{build_scene_from_inputs, export_sequence, pack_mask_dir, parse_strides, SceneInputs};
use crate::session::SessionStore;

#[derive(Debug, Parser)]
#[command(name = "geoctl", version, about = "Geometric control scenes: build, render, pack, filter, evaluate and serve")]
pub struct Cli {
    /// Print errors to stderr as a JSON object.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    CameraOnly,
    ObjectOnly,
    Joint,
}

impl From<ModeArg> for RenderMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::CameraOnly => RenderMode::CameraOnly,
            ModeArg::ObjectOnly => RenderMode::ObjectOnly,
            ModeArg::Joint => RenderMode::Joint,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignArg {
    None,
    Sim3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalOutput {
    Json,
    Table,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a scene directory from a first frame, its depth and instance masks.
    Init {
        /// RGB PNG.
        image: PathBuf,
        /// Metric depth PFM; non-positive or non-finite pixels are invalid.
        depth: PathBuf,
        /// Instance-id PNG, 0 = background.
        masks: PathBuf,
        /// Intrinsics JSON `{fx, fy, cx, cy, width, height}`.
        intrinsics: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Labels JSON keyed by instance id, e.g. `{"1": "person"}`.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Camera track JSON (list of `{"R": [9], "t": [3]}`); the first pose
        /// anchors the back-projection.
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Frame count of a static identity camera when `--poses` is absent.
        #[arg(long)]
        frames: Option<usize>,
        /// Keyframes JSON: list of `{"object_id", "keys": [{frame, mu, sigma}]}`.
        #[arg(long)]
        keyframes: Option<PathBuf>,
    },
    /// Render and export the control-map sequence of a scene.
    Render {
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "joint")]
        mode: ModeArg,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fold `mask_*.png` frames onto the latent grid and write a `.gt4d` tensor.
    Pack {
        mask_dir: PathBuf,
        /// Temporal, height and width strides.
        #[arg(long, default_value = "4,8,8", value_parser = parse_strides)]
        strides: StrideConfig,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// RotErr, TransErr and ObjMC between two evaluation manifests.
    Eval {
        gt: PathBuf,
        pred: PathBuf,
        /// Cost of an unmatched object, in meters.
        #[arg(long, default_value_t = DEFAULT_UNMATCHED_PENALTY)]
        lambda: f64,
        #[arg(long, value_enum, default_value = "none")]
        align: AlignArg,
        #[arg(long, value_enum, default_value = "both")]
        output: EvalOutput,
    },
    /// Apply the clip quality filters to a JSON list of clip records.
    Filter {
        records: PathBuf,
        /// TOML thresholds; missing keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Serve the `/v1` HTTP API on localhost.
    Serve {
        /// Scene directory opened as the first session.
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 8787)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
}

#[derive(Debug, Serialize)]
struct VerdictJson {
    clip_id: String,
    accepted: bool,
    reasons: Vec<FilterRule>,
}

fn read(path: &Path) -> ServiceResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| {
        Error::Io {
            path: path.to_owned(),
            source: e,
        }
        .into()
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> ServiceResult<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Error::Parse {
            path: path.to_owned(),
            reason: e.to_string(),
        }
        .into()
    })
}

fn write(path: &Path, bytes: &[u8]) -> ServiceResult<()> {
    std::fs::write(path, bytes).map_err(|e| {
        Error::Io {
            path: path.to_owned(),
            source: e,
        }
        .into()
    })
}

pub fn run(cli: Cli) -> ServiceResult<()> {
    match cli.command {
        Command::Init {
            image,
            depth,
            masks,
            intrinsics,
            out,
            labels,
            poses,
            frames,
            keyframes,
        } => {
            let inputs = SceneInputs {
                image: read(&image)?,
                depth: read(&depth)?,
                masks: read(&masks)?,
                intrinsics: read_json::<IntrinsicsJson>(&intrinsics)?,
                labels: labels.as_deref().map(read_json::<LabelMap>).transpose()?.unwrap_or_default(),
                poses: poses.as_deref().map(read_json).transpose()?,
                frames,
                keyframes: keyframes.as_deref().map(read_json).transpose()?.unwrap_or_default(),
            };
            let scene = build_scene_from_inputs(&inputs).map_err(|e| match e {
                ServiceError::Unprocessable { field, message } => {
                    let path = match field.split(['.', '[']).next().unwrap_or_default() {
                        "image" => image.clone(),
                        "depth" => depth.clone(),
                        "masks" => masks.clone(),
                        "intrinsics" => intrinsics.clone(),
                        "poses" => poses.clone().unwrap_or_default(),
                        "keyframes" => keyframes.clone().unwrap_or_default(),
                        _ => PathBuf::from(format!("--{field}")),
                    };
                    ServiceError::Core(Error::Parse {
                        path,
                        reason: format!("{field}: {message}"),
                    })
                }
                other => other,
            })?;
            save_scene(&scene, &out)?;
            println!(
                "{}: {} frames, {} background points, {} objects",
                out.display(),
                scene.frame_count(),
                scene.background().len(),
                scene.objects().len()
            );
            Ok(())
        }
        Command::Render { scene, mode, out } => {
            let state = load_scene(&scene)?;
            let paths = export_sequence(&state, mode.into(), &out)?;
            println!("wrote {} files for {} frames to {}", paths.len(), state.frame_count(), out.display());
            Ok(())
        }
        Command::Pack { mask_dir, strides, out } => {
            let packed = pack_mask_dir(&mask_dir, &strides)?;
            save_gt4d(&out, &packed.tensor)?;
            let d = packed.tensor.dims();
            println!("{}: {}x{}x{}x{}", out.display(), d[0], d[1], d[2], d[3]);
            Ok(())
        }
        Command::Eval {
            gt,
            pred,
            lambda,
            align,
            output,
        } => {
            if !(lambda.is_finite() && lambda >= 0.0) {
                return Err(Error::Invalid("--lambda must be finite and non-negative".into()).into());
            }
            let opts = EvalOptions {
                penalty: lambda,
                align: match align {
                    AlignArg::None => Alignment::None,
                    AlignArg::Sim3 => Alignment::Sim3,
                },
            };
            let report = evaluate_files(&gt, &pred, &opts)?;
            let mut stdout = std::io::stdout().lock();
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            let text = match output {
                EvalOutput::Json => format!("{json}\n"),
                EvalOutput::Table => report.to_table(),
                EvalOutput::Both => format!("{json}\n\n{}", report.to_table()),
            };
            let _ = stdout.write_all(text.as_bytes());
            Ok(())
        }
        Command::Filter { records, config, out } => {
            let cfg = match &config {
                Some(p) => FilterConfig::load(p)?,
                None => FilterConfig::default(),
            };
            let recs: Vec<ClipRecord> = read_json(&records)?;
            for r in &recs {
                r.validate().map_err(|e| {
                    ServiceError::Core(Error::Parse {
                        path: records.clone(),
                        reason: e.to_string(),
                    })
                })?;
            }
            let verdicts: Vec<VerdictJson> = recs
                .iter()
                .zip(filter_clips(&recs, &cfg))
                .map(|(r, v)| VerdictJson {
                    clip_id: r.clip_id.clone(),
                    accepted: v.accepted,
                    reasons: v.reasons,
                })
                .collect();
            let accepted = verdicts.iter().filter(|v| v.accepted).count();
            let text = serde_json::to_string_pretty(&verdicts).expect("verdicts serialize");
            write(&out, text.as_bytes())?;
            println!("{accepted}/{} clips accepted, verdicts in {}", verdicts.len(), out.display());
            Ok(())
        }
        Command::Serve { scene, port, host } => {
            let store = Arc::new(SessionStore::default());
            if let Some(dir) = &scene {
                let state = load_scene(dir)?;
                let id = store.insert(state);
                println!("scene {} opened as {id}", dir.display());
            }
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| ServiceError::Internal(e.to_string()))?;
            println!("listening on http://{addr}/v1");
            rt.block_on(crate::http::serve(store, addr)).map_err(|e| {
                ServiceError::Core(Error::Io {
                    path: PathBuf::from(addr.to_string()),
                    source: e,
                })
            })
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> i32 {
    let args: Vec<_> = args.into_iter().collect();
    let json = args.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            if json && e.use_stderr() {
                let body = crate::error::ErrorBody {
                    error: "usage".into(),
                    message: e.kind().to_string(),
                    field: None,
                    current_revision: None,
                };
                eprintln!("{}", serde_json::to_string(&body).expect("error body serializes"));
                return crate::error::exit_code("usage");
            }
            let _ = e.print();
            return if e.use_stderr() { crate::error::exit_code("usage") } else { 0 };
        }
    };
    let json = cli.json;
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            if json {
                eprintln!("{}", serde_json::to_string(&e.body()).expect("error body serializes"));
            } else {
                eprintln!("error: {e}");
            }
            e.exit_code()
        }
    }
}
