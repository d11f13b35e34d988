use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use facemorph::pipeline::{load_training_dir, localize, run_pipeline, Models, PipelineConfig};
use facemorph::shaperegress::{train_shape_model_with_history, LandmarkFile};
use facemorph::{BoundingBox, Error, FeatureVector, Image, LandmarkSet};

#[derive(Parser)]
#[command(name = "facemorph", version, about = "Facial landmark morphometrics for two cohorts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare two cohort directories and write the report files.
    Analyze {
        #[arg(long)]
        cohort_a: PathBuf,
        #[arg(long)]
        cohort_b: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// External face box `x,y,w,h` applied to every image.
        #[arg(long)]
        bbox: Option<BoundingBox>,
        /// Use landmark files only; never decode images.
        #[arg(long)]
        landmarks_only: bool,
        /// Output directory; falls back to `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a landmark regression model from images with landmark files.
    TrainShape {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize landmarks on one image and write them with its features.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        bbox: Option<BoundingBox>,
    },
}

#[derive(Serialize)]
struct Extracted<'a> {
    #[serde(flatten)]
    file: LandmarkFile,
    features: Option<&'a FeatureVector>,
}

fn load_config(path: Option<&Path>) -> facemorph::Result<PipelineConfig> {
    // A bad config is a usage problem, not a data problem.
    match path {
        Some(p) => PipelineConfig::load(p).map_err(|e| match e {
            Error::InvalidArgument(_) => e,
            e => Error::InvalidArgument(e.to_string()),
        }),
        None => Ok(PipelineConfig::default()),
    }
}

fn run(cli: Cli) -> facemorph::Result<()> {
    match cli.command {
        Command::Analyze {
            cohort_a,
            cohort_b,
            config,
            bbox,
            landmarks_only,
            out,
        } => {
            let mut config = load_config(config.as_deref())?;
            config.bbox = bbox.or(config.bbox);
            config.landmarks_only |= landmarks_only;
            let out = out
                .or_else(|| config.output_dir.clone())
                .ok_or_else(|| Error::InvalidArgument("no output directory: pass --out or set output_dir".into()))?;
            let (report, manifest) = run_pipeline(&cohort_a, &cohort_b, &config, &out)?;
            let failed = manifest.failures().count();
            println!(
                "{} inputs, {} failed; report written to {}",
                manifest.records.len(),
                failed,
                out.display()
            );
            for f in &report.features {
                match f.test {
                    Some(t) => println!("{:<10} t = {:>9.4}  df = {:>7.2}  p = {:.4e}", f.feature, t.t, t.df, t.p),
                    None => println!("{:<10} {}", f.feature, f.error.as_deref().unwrap_or("no test")),
                }
            }
            Ok(())
        }
        Command::TrainShape { data, config, out } => {
            let config = load_config(config.as_deref())?;
            let samples = load_training_dir(&data)?;
            let trained = train_shape_model_with_history(&samples, &config.shape_training)?;
            trained.model.save(&out)?;
            println!(
                "trained on {} samples; loss {:.3e} -> {:.3e}",
                samples.len(),
                trained.stage_losses[0],
                trained.stage_losses.last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::Extract {
            image,
            out,
            config,
            bbox,
        } => {
            let mut config = load_config(config.as_deref())?;
            config.bbox = bbox.or(config.bbox);
            let models = Models::load(&config)?;
            let img = Image::open(&image)?;
            let localized = localize(&img, &config, &models, None)?;
            let features = facemorph::morphometrics::extract_features(&localized.landmarks, &config.landmark_map);
            if let Err(e) = &features {
                log::warn!("{}: features unavailable: {e}", image.display());
            }
            write_extracted(&out, &localized.landmarks, localized.bbox, features.as_ref().ok())
        }
    }
}

fn write_extracted(
    out: &Path,
    lm: &LandmarkSet,
    bbox: Option<BoundingBox>,
    features: Option<&FeatureVector>,
) -> facemorph::Result<()> {
    let doc = Extracted {
        file: LandmarkFile::new(lm, bbox),
        features,
    };
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Error::Json {
        path: out.to_path_buf(),
        source: e,
    })?;
    std::fs::write(out, text + "\n").map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
