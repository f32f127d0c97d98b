//! `spvlad`: generate synthetic data, train, encode, predict, evaluate and
//! compare encoding settings.
//!
//! Exit status is 0 on success, 1 for usage errors, 2 for data errors and 3
//! for internal errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spvlad::{
    ablate, ablation_table, evaluate, generate_synthetic_dataset, load_manifest,
    read_descriptor_file, train_pipeline, write_code_file, DatasetManifest, Error, ModelBundle,
    PipelineConfig, Setting, SyntheticSpec,
};

#[derive(Parser)]
#[command(name = "spvlad", version, about = "Spatial-pyramid VLAD image classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic dataset and its manifest.
    Generate(GenerateArgs),
    /// Fit PCA, codebook and SVM on the manifest's train split.
    Train(TrainArgs),
    /// Encode one descriptor file into a code file.
    Encode(EncodeArgs),
    /// Print the predicted label of one descriptor file.
    Predict(PredictArgs),
    /// Score a bundle on the manifest's test split.
    Evaluate(EvaluateArgs),
    /// Train and evaluate several settings and print a comparison table.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory for descriptor files and manifest.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 20)]
    images_per_class: usize,
    #[arg(long, default_value_t = 50)]
    regions: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Make two class pairs distinguishable only by region position.
    #[arg(long)]
    spatial_signal: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 320)]
    width: u32,
    #[arg(long, default_value_t = 240)]
    height: u32,
    #[arg(long, default_value_t = 0.675)]
    train_fraction: f64,
}

/// Dataset selection shared by commands that read a manifest.
#[derive(Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Reassign train/test per class with this train fraction instead of
    /// using the manifest's splits.
    #[arg(long)]
    resplit: Option<f64>,
    #[arg(long, default_value_t = 42, requires = "resplit")]
    resplit_seed: u64,
}

impl ManifestArgs {
    fn load(&self) -> spvlad::Result<DatasetManifest> {
        let manifest = load_manifest(&self.manifest)?;
        match self.resplit {
            Some(f) => manifest.resplit(f, self.resplit_seed),
            None => Ok(manifest),
        }
    }
}

/// JSON config file plus per-field overrides.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    setting: Option<Setting>,
    #[arg(long)]
    pca_dim: Option<usize>,
    #[arg(long)]
    pca_sample_cap: Option<usize>,
    #[arg(long)]
    whiten: bool,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    kmeans_max_iters: Option<usize>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    region_cap: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> spvlad::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.setting {
            cfg.setting = v;
        }
        if let Some(v) = self.pca_dim {
            cfg.pca_output_dim = v;
        }
        if let Some(v) = self.pca_sample_cap {
            cfg.pca_sample_cap = v;
        }
        if self.whiten {
            cfg.pca_whiten = true;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.kmeans_max_iters {
            cfg.kmeans_max_iters = v;
        }
        if let Some(v) = self.svm_c {
            cfg.svm_c = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.region_cap {
            cfg.region_cap = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: ManifestArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Bundle file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    descriptors: PathBuf,
    /// Code file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    descriptors: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[command(flatten)]
    data: ManifestArgs,
    /// Also write the full-precision JSON report here.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: ManifestArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Settings to compare, in order.
    #[arg(long, value_delimiter = ',', default_values_t = Setting::ALL)]
    settings: Vec<Setting>,
    /// Directory for one bundle and one JSON report per setting.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> spvlad::Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(command: Command) -> spvlad::Result<()> {
    match command {
        Command::Generate(a) => {
            let spec = SyntheticSpec {
                classes: a.classes,
                images_per_class: a.images_per_class,
                regions_per_image: a.regions,
                dim: a.dim,
                spatial_signal: a.spatial_signal,
                seed: a.seed,
                image_width: a.width,
                image_height: a.height,
                train_fraction: a.train_fraction,
            };
            let manifest = generate_synthetic_dataset(&spec, &a.out)?;
            println!(
                "wrote {} descriptor files, {} classes, to {}",
                manifest.entries().len(),
                manifest.labels().len(),
                a.out.display()
            );
        }
        Command::Train(a) => {
            let cfg = a.config.resolve()?;
            let manifest = a.data.load()?;
            let bundle = train_pipeline(&manifest, &cfg)?;
            bundle.write(&a.out)?;
            println!(
                "trained {} bundle: {} classes, code length {}",
                bundle.setting(),
                bundle.svm().classes().len(),
                bundle.feature_dim()
            );
        }
        Command::Encode(a) => {
            let bundle = ModelBundle::read(&a.bundle)?;
            let set = read_descriptor_file(&a.descriptors)?;
            let code: Vec<f32> = bundle.encode(&set)?.iter().map(|&v| v as f32).collect();
            write_code_file(&code, &a.out)?;
        }
        Command::Predict(a) => {
            let bundle = ModelBundle::read(&a.bundle)?;
            let set = read_descriptor_file(&a.descriptors)?;
            println!("{}", bundle.predict(&set)?);
        }
        Command::Evaluate(a) => {
            let bundle = ModelBundle::read(&a.bundle)?;
            let manifest = a.data.load()?;
            let report = evaluate(&bundle, &manifest)?;
            print!("{}", report.to_text());
            if let Some(path) = &a.json {
                write_file(path, &report.to_json())?;
            }
        }
        Command::Ablate(a) => {
            if a.settings.is_empty() {
                return Err(Error::InvalidParameter("no settings given".into()));
            }
            let cfg = a.config.resolve()?;
            let manifest = a.data.load()?;
            let runs = ablate(&manifest, &cfg, &a.settings)?;
            for run in &runs {
                println!("{}", run.report.to_text());
            }
            print!("{}", ablation_table(&runs));
            if let Some(dir) = &a.out_dir {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                for run in &runs {
                    run.bundle.write(dir.join(format!("{}.vldb", run.setting)))?;
                    write_file(
                        &dir.join(format!("{}.json", run.setting)),
                        &run.report.to_json(),
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() {
                1
            } else if e.is_internal() {
                3
            } else {
                2
            })
        }
    }
}
