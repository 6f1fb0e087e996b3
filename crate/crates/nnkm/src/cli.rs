//! The `nnkm` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nnk_core::{
    accuracy, classify, code_batch, export_atoms, fit, fit_per_class, ClassifierModel, CodingConfig, DeadAtomPolicy,
    Dictionary, FeatureMatrix, FitConfig, FitReport, KernelSpec, Mat,
};
use serde_json::{json, Value};

use crate::bench::{self, BenchConfig, ScalingConfig};
use crate::dataio::{self, Standardizer, SynthSpec};
use crate::error::DataError;
use crate::format::{self, Model, ModelBundle};

#[derive(Debug, Parser)]
#[command(name = "nnkm", version, about = "Kernel dictionary learning with non-negative sparse codes")]
pub struct Cli {
    /// Base seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core, 1 runs sequentially.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// `gaussian:sigma=<f>`, `cosine` or `linear`. Models carry their own kernel.
    #[arg(long, global = true, default_value = "gaussian:sigma=1")]
    pub kernel: KernelSpec,
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Print a machine-readable summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DeadAtoms {
    Reseed,
    Drop,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the concentric-arcs dataset as train.csv and test.csv.
    Synth {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 600)]
        train: usize,
        #[arg(long, default_value_t = 200)]
        test: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Radial gap between consecutive arcs.
        #[arg(long, default_value_t = 0.6)]
        offset: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn a dictionary, or one per class, and save it.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        atoms: usize,
        #[arg(long, default_value_t = 5)]
        sparsity: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long)]
        per_class: bool,
        /// Standardize features with training statistics, stored in the model.
        #[arg(long)]
        standardize: bool,
        #[arg(long, value_enum, default_value_t = DeadAtoms::Reseed)]
        dead_atoms: DeadAtoms,
        #[arg(long)]
        model: PathBuf,
    },
    /// Sparse-code samples against a saved dictionary.
    Code {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Class dictionary to use with a per-class model.
        #[arg(long)]
        class: Option<u32>,
        /// Overrides the sparsity stored in the model.
        #[arg(long)]
        sparsity: Option<usize>,
        /// Write an N×M table instead of `sample,atom,weight` triples.
        #[arg(long)]
        dense: bool,
    },
    /// Label samples by smallest reconstruction error.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report accuracy against the data's `label` column.
        #[arg(long)]
        labels: bool,
        #[arg(long)]
        sparsity: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and timing sweep over dictionary sizes, or a coding-time scaling run.
    Bench {
        /// Labeled training data (or the whole set when `--test` is absent).
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        test_fraction: f64,
        #[arg(long, value_delimiter = ',', default_value = "10,20,50")]
        atoms_grid: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        sparsity: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
        #[arg(long)]
        standardize: bool,
        /// Skip the sparsity-1 baseline runs.
        #[arg(long)]
        no_baseline: bool,
        /// Time coding at these query counts instead of sweeping atoms.
        #[arg(long, value_delimiter = ',')]
        scaling: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write each atom's input-space image, one per row.
    ExportAtoms {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        class: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<nnk_core::Error> for CliError {
    fn from(e: nnk_core::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(e) if e.is_numerical() => 4,
            CliError::Data(_) => 3,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nnkm: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    if cli.threads != 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    let ctx = Ctx { cli, parallel: cli.threads != 1 };
    match &cli.command {
        Command::Synth { classes, train, test, noise, offset, out } => {
            ctx.synth(SynthSpec {
                classes: *classes,
                n_train: *train,
                n_test: *test,
                noise_sigma: *noise,
                offset: *offset,
                seed: cli.seed,
            }, out)
        }
        Command::Fit { data, atoms, sparsity, iters, per_class, standardize, dead_atoms, model } => {
            ctx.fit(data, *atoms, *sparsity, *iters, *per_class, *standardize, *dead_atoms, model)
        }
        Command::Code { model, data, out, class, sparsity, dense } => {
            ctx.code(model, data, out, *class, *sparsity, *dense)
        }
        Command::Classify { model, data, labels, sparsity, out } => ctx.classify(model, data, *labels, *sparsity, out),
        Command::Bench { scaling: Some(sizes), out, sparsity, .. } => ctx.scaling(sizes, *sparsity, out),
        Command::Bench {
            data, test, test_fraction, atoms_grid, sparsity, iters, repeats, standardize, no_baseline, out, ..
        } => {
            let data = data.as_deref().ok_or_else(|| CliError::Usage("bench needs --data or --scaling".into()))?;
            let cfg = BenchConfig {
                atoms_grid: atoms_grid.clone(),
                sparsity: *sparsity,
                iters: *iters,
                repeats: *repeats,
                seed: cli.seed,
                kernel: cli.kernel,
                baseline: !no_baseline,
                parallel: ctx.parallel,
            };
            ctx.bench(data, test.as_deref(), *test_fraction, *standardize, &cfg, out)
        }
        Command::ExportAtoms { model, class, out } => ctx.export_atoms(model, *class, out),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    parallel: bool,
}

impl Ctx<'_> {
    fn resolved(&self, command: &str, extra: Value) -> Value {
        let mut v = json!({
            "tool": "nnkm",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "seed": self.cli.seed,
            "threads": self.cli.threads,
            "kernel": self.cli.kernel.to_string(),
        });
        if let (Value::Object(base), Value::Object(more)) = (&mut v, extra) {
            base.extend(more);
        }
        v
    }

    fn say(&self, text: impl AsRef<str>) {
        if !self.cli.quiet && !self.cli.json {
            println!("{}", text.as_ref());
        }
    }

    fn emit(&self, summary: &Value) {
        if self.cli.json {
            println!("{summary}");
        }
    }

    fn synth(&self, spec: SynthSpec, out: &Path) -> CliResult<()> {
        let (train, test) = dataio::make_synthetic(&spec)?;
        fs::create_dir_all(out).map_err(|e| DataError::io(out, e))?;
        let config = self.resolved(
            "synth",
            json!({"classes": spec.classes, "train": spec.n_train, "test": spec.n_test,
                   "noise": spec.noise_sigma, "offset": spec.offset}),
        );
        let pre = config.to_string();
        dataio::write_csv(&out.join("train.csv"), &train, Some(&pre))?;
        dataio::write_csv(&out.join("test.csv"), &test, Some(&pre))?;
        self.say(format!("wrote {} train and {} test samples to {}", train.len(), test.len(), out.display()));
        self.emit(&json!({"config": config, "train": train.len(), "test": test.len()}));
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn fit(
        &self,
        data: &Path,
        atoms: usize,
        sparsity: usize,
        iters: usize,
        per_class: bool,
        standardize: bool,
        dead_atoms: DeadAtoms,
        model_path: &Path,
    ) -> CliResult<()> {
        let raw = load_data(data)?;
        let (train, standardizer) = if standardize {
            let s = Standardizer::fit(&raw)?;
            (s.apply(&raw)?, Some(s))
        } else {
            (raw, None)
        };
        let mut cfg = FitConfig::new(atoms, sparsity).with_seed(self.cli.seed).with_max_iters(iters);
        cfg.dead_atom_policy = match dead_atoms {
            DeadAtoms::Reseed => DeadAtomPolicy::ReseedWorst,
            DeadAtoms::Drop => DeadAtomPolicy::Drop,
        };
        cfg.parallel = self.parallel;
        let config = self.resolved(
            "fit",
            json!({"data": data.display().to_string(), "atoms": atoms, "sparsity": sparsity, "iters": iters,
                   "per_class": per_class, "standardize": standardize,
                   "dead_atoms": format!("{dead_atoms:?}").to_lowercase()}),
        );
        let kernel = self.cli.kernel;
        let (model, reports, names): (Model, Vec<FitReport>, Vec<String>) = if per_class {
            let (m, r) = fit_per_class(&train, &kernel, &cfg)?;
            let names = m.class_ids().iter().map(|c| format!("class {c}")).collect();
            (Model::Classifier(m), r, names)
        } else {
            let (d, r) = fit(&train, &kernel, &cfg)?;
            (Model::Dictionary(d), vec![r], vec!["dictionary".into()])
        };
        for (name, r) in names.iter().zip(&reports) {
            for (i, obj) in r.objective_per_iter.iter().enumerate() {
                let dead = if r.had_dead_atoms(i + 1) { "  (dead atoms reseeded)" } else { "" };
                self.say(format!("{name} iter {:>3} objective {obj:.10e}{dead}", i + 1));
            }
            let stop = r.stop_reason.map_or_else(|| "stopped".to_string(), |s| format!("{s:?}"));
            self.say(format!("{name}: {stop} after {} iterations", r.iterations()));
        }
        let bundle = ModelBundle { model, standardizer, config: config.clone() };
        format::save_model(&bundle, model_path)?;
        self.say(format!("model written to {}", model_path.display()));
        let traces: Vec<Value> = names
            .iter()
            .zip(&reports)
            .map(|(n, r)| json!({"name": n, "objective": r.objective_per_iter, "stop": r.stop_reason.map(|s| format!("{s:?}")),
                                 "dead_atom_events": r.dead_atom_events}))
            .collect();
        self.emit(&json!({"config": config, "model": model_path.display().to_string(), "fits": traces}));
        Ok(())
    }

    fn code(
        &self,
        model_path: &Path,
        data: &Path,
        out: &Path,
        class: Option<u32>,
        sparsity: Option<usize>,
        dense: bool,
    ) -> CliResult<()> {
        let bundle = format::load_model(model_path)?;
        let queries = prepare(load_data(data)?, &bundle)?;
        let dict = pick_dictionary(&bundle.model, class)?;
        let k = sparsity.unwrap_or(dict.meta().sparsity);
        let coding = CodingConfig::new(k).with_parallel(self.parallel);
        let codes = code_batch(&queries, dict, &coding).into_iter().collect::<nnk_core::Result<Vec<_>>>()?;
        let config = self.resolved(
            "code",
            json!({"model": model_path.display().to_string(), "data": data.display().to_string(),
                   "model_kernel": dict.kernel().to_string(), "class": class, "sparsity": k, "dense": dense}),
        );
        let pre = config.to_string();
        if dense {
            dataio::write_dense_codes_csv(out, &codes, dict.atom_count(), Some(&pre))?;
        } else {
            dataio::write_codes_csv(out, &codes, Some(&pre))?;
        }
        self.say(format!("coded {} samples into {}", codes.len(), out.display()));
        self.emit(&json!({"config": config, "samples": codes.len(), "out": out.display().to_string()}));
        Ok(())
    }

    fn classify(&self, model_path: &Path, data: &Path, labels: bool, sparsity: Option<usize>, out: &Path) -> CliResult<()> {
        let bundle = format::load_model(model_path)?;
        let queries = prepare(load_data(data)?, &bundle)?;
        let single;
        let model: &ClassifierModel = match &bundle.model {
            Model::Classifier(m) => m,
            Model::Dictionary(d) => {
                single = ClassifierModel::new(vec![d.clone()], vec![0])?;
                &single
            }
        };
        let k = sparsity.unwrap_or(model.sparsity());
        let result = classify(&queries, model, &CodingConfig::new(k).with_parallel(self.parallel))?;
        let config = self.resolved(
            "classify",
            json!({"model": model_path.display().to_string(), "data": data.display().to_string(),
                   "model_kernel": model.kernel().to_string(), "sparsity": k, "class_ids": model.class_ids()}),
        );
        dataio::write_predictions_csv(out, &result, Some(&config.to_string()))?;
        let acc = if labels {
            let truth = queries
                .labels()
                .ok_or_else(|| CliError::Usage(format!("{} has no `label` column", data.display())))?;
            let a = accuracy(&result.labels, truth)?;
            self.say(format!("accuracy {a:.4} on {} samples", truth.len()));
            Some(a)
        } else {
            None
        };
        self.say(format!("predictions written to {}", out.display()));
        self.emit(&json!({"config": config, "samples": result.labels.len(), "accuracy": acc}));
        Ok(())
    }

    fn bench(
        &self,
        data: &Path,
        test: Option<&Path>,
        test_fraction: f64,
        standardize: bool,
        cfg: &BenchConfig,
        out: &Path,
    ) -> CliResult<()> {
        let all = load_data(data)?;
        let (train, test_set) = match test {
            Some(t) => (all, load_data(t)?),
            None => bench::stratified_split(&all, test_fraction, self.cli.seed)?,
        };
        let (train, test_set) = if standardize {
            let s = Standardizer::fit(&train)?;
            (s.apply(&train)?, s.apply(&test_set)?)
        } else {
            (train, test_set)
        };
        fs::create_dir_all(out).map_err(|e| DataError::io(out, e))?;
        let config = self.resolved(
            "bench",
            json!({"data": data.display().to_string(), "test": test.map(|t| t.display().to_string()),
                   "test_fraction": if test.is_some() { None } else { Some(test_fraction) },
                   "standardize": standardize, "bench": cfg, "repeat_seed": "seed + repeat"}),
        );
        let rows = bench::run_bench(&train, &test_set, cfg)?;
        let summary = bench::summarize(&rows);
        bench::write_rows_csv(&out.join("bench.csv"), &rows, Some(&config.to_string()))?;
        let doc = json!({"config": config, "summary": summary});
        let path = out.join("summary.json");
        fs::write(&path, serde_json::to_string_pretty(&doc).map_err(DataError::from)?)
            .map_err(|e| DataError::io(&path, e))?;
        for s in &summary {
            let wins = s.repeats_at_least_baseline.map(|w| format!("  >= baseline on {w}/{}", s.runs)).unwrap_or_default();
            self.say(format!(
                "{:<8} atoms {:>4}  accuracy {:.4} ± {:.4}  train {:.3}s  test {:.3}s{wins}",
                s.method.to_string(),
                s.atoms,
                s.accuracy.mean,
                s.accuracy.std,
                s.train_s.mean,
                s.test_s.mean
            ));
        }
        self.emit(&doc);
        Ok(())
    }

    fn scaling(&self, sizes: &[usize], sparsity: usize, out: &Path) -> CliResult<()> {
        if sizes.len() < 2 {
            return Err(CliError::Usage("--scaling needs at least two sizes".into()));
        }
        let cfg = ScalingConfig { sparsity, seed: self.cli.seed, ..ScalingConfig::default() };
        let points = bench::coding_scaling(sizes, &cfg)?;
        let slope = bench::loglog_slope(&points);
        fs::create_dir_all(out).map_err(|e| DataError::io(out, e))?;
        let config = self.resolved("bench-scaling", json!({"scaling": cfg, "sizes": sizes}));
        let doc = json!({"config": config, "points": points, "loglog_slope": slope});
        let path = out.join("scaling.json");
        fs::write(&path, serde_json::to_string_pretty(&doc).map_err(DataError::from)?)
            .map_err(|e| DataError::io(&path, e))?;
        for p in &points {
            self.say(format!("N {:>7}  coding {:.4}s", p.n, p.seconds));
        }
        self.say(format!("log-log slope {slope:.3}"));
        self.emit(&doc);
        Ok(())
    }

    fn export_atoms(&self, model_path: &Path, class: Option<u32>, out: &Path) -> CliResult<()> {
        let bundle = format::load_model(model_path)?;
        let dict = pick_dictionary(&bundle.model, class)?;
        let atoms = export_atoms(dict);
        let config = self.resolved("export-atoms", json!({"model": model_path.display().to_string(), "class": class}));
        dataio::write_matrix_csv(out, &atoms.transpose(), "x", Some(&config.to_string()))?;
        self.say(format!("{} atoms written to {}", atoms.cols(), out.display()));
        self.emit(&json!({"config": config, "atoms": atoms.cols()}));
        Ok(())
    }
}

/// `.nnkm` matrix files hold one sample per row; anything else is read as CSV.
pub fn load_data(path: &Path) -> crate::Result<FeatureMatrix> {
    if path.extension().is_some_and(|e| e == "nnkm") {
        let m: Mat = format::load_matrix(path)?;
        Ok(FeatureMatrix::new(m.transpose(), None)?)
    } else {
        dataio::load_csv_auto(path)
    }
}

fn prepare(data: FeatureMatrix, bundle: &ModelBundle) -> crate::Result<FeatureMatrix> {
    match &bundle.standardizer {
        Some(s) => s.apply(&data),
        None => Ok(data),
    }
}

fn pick_dictionary(model: &Model, class: Option<u32>) -> CliResult<&Dictionary> {
    match (model, class) {
        (Model::Dictionary(d), None) => Ok(d),
        (Model::Dictionary(_), Some(_)) => Err(CliError::Usage("--class given for a single-dictionary model".into())),
        (Model::Classifier(m), Some(c)) => m
            .class_ids()
            .iter()
            .position(|&id| id == c)
            .map(|i| &m.dictionaries()[i])
            .ok_or_else(|| CliError::Usage(format!("model has no class {c}"))),
        (Model::Classifier(m), None) if m.dictionaries().len() == 1 => Ok(&m.dictionaries()[0]),
        (Model::Classifier(_), None) => Err(CliError::Usage("per-class model: choose one with --class".into())),
    }
}
