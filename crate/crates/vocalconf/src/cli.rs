//! `vocalconf <verb>` dispatch.
//!
//! Exit codes: 0 on success, 1 for invalid input, 2 when a stage fails on
//! valid input. Errors go to stderr as `error kind=<kind>: <message>`.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vocalconf_core::annotation::{build_rater_matrix, dawid_skene, derive_consensus_dataset, icc_2k};
use vocalconf_core::calibration::fit_temperature;
use vocalconf_core::evaluation::{classification_metrics, leakage_audit, make_fold_plan, run_cv, Arm, CvOutcome, EvalError, FoldArtifacts, FoldPlan};
use vocalconf_core::hybrid::{predict, train_hybrid, Source};
use vocalconf_core::pseudo::{generate_pseudo_labels, train_labeller};

use crate::annotations::{read_annotations, write_rater_matrix};
use crate::checkpoint::{load_hybrid, load_labeller, save_hybrid, save_labeller};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::feature_store::{ingest_external, write_feature_store};
use crate::fixture::{write_fixture, FixtureSpec};
use crate::manifest::DatasetManifest;
use crate::pipeline::{canonical_clip, extract_all, provenance, Stores};
use crate::report::{summary_table, write_reports};
use crate::tables::{read_labels, read_logits, read_pseudo_set, write_consensus, write_probabilities, write_pseudo_set};
use crate::{json, server, wav};

#[derive(Parser)]
#[command(name = "vocalconf", version, about = "Semi-supervised speech-confidence pipeline")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FoldArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    fold: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Verb {
    /// Resample, normalize and denoise every clip into canonical WAVs.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write the feature store, from audio or from external CSVs.
    Extract {
        #[arg(long, required_unless_present = "prosodic")]
        manifest: Option<PathBuf>,
        /// External `id` + 88 prosodic columns; needs --aux and --out.
        #[arg(long, requires_all = ["aux", "out"], conflicts_with = "manifest")]
        prosodic: Option<PathBuf>,
        #[arg(long)]
        aux: Option<PathBuf>,
        /// Defaults to the manifest's feature store.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit a temperature on `id,z_0..,label` logits and print probabilities.
    Calibrate {
        #[arg(long)]
        logits: PathBuf,
    },
    /// ICC and Dawid-Skene consensus from an annotation JSONL.
    Aggregate {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Stratified k-fold plan over the labelled clips.
    Foldplan {
        #[arg(long, required_unless_present = "manifest")]
        labels: Option<PathBuf>,
        #[arg(long, conflicts_with = "labels")]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Defaults to the manifest's fold plan path.
        #[arg(long, required_unless_present = "manifest")]
        out: Option<PathBuf>,
        /// Recorded in the plan; not part of the checksum. Defaults to now.
        #[arg(long)]
        created_at: Option<String>,
    },
    /// Train the feature-vector labeller on one fold's training clips.
    TrainLabeller {
        #[command(flatten)]
        fold: FoldArgs,
        #[arg(long)]
        out: PathBuf,
        /// Training report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Pseudo-label the pool with a trained labeller.
    Pseudo {
        #[command(flatten)]
        fold: FoldArgs,
        #[arg(long)]
        labeller: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the hybrid model on one fold and score its test clips.
    TrainHybrid {
        #[command(flatten)]
        fold: FoldArgs,
        /// Pseudo-label CSV from `pseudo`.
        #[arg(long)]
        pseudo: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full cross-validation over the configured arms.
    Cv {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated; overrides the config.
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<Arm>>,
        /// Overrides the config `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rebuild CSV and SVG reports from a `cv.json`.
    Report {
        #[arg(long)]
        cv: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the leakage audit on recorded fold artifacts.
    Audit {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, required_unless_present = "artifacts")]
        cv: Option<PathBuf>,
        /// JSON list of fold artifacts.
        #[arg(long, conflicts_with = "cv")]
        artifacts: Option<PathBuf>,
    },
    /// Serve the annotation API.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        /// Defaults to the manifest's annotation store.
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
    },
    /// Write a small synthetic dataset with a manifest and run.cfg.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 40)]
        pool_per_class: usize,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write a five-second WAV per clip.
        #[arg(long)]
        audio: bool,
    },
}

/// Parses `args` (program name first), runs the verb and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 1 } else { 0 };
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage: {first}");
            eprint!("{rendered}");
            return 1;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match dispatch(cli.verb) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error kind={}: {e}", e.kind());
            if let Error::Eval(EvalError::AuditFailed(report)) = &e {
                eprint!("{report}");
            }
            e.exit_code()
        }
    }
}

fn config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Stores, verified plan and config shared by the per-fold verbs.
struct FoldContext {
    stores: Stores,
    plan: FoldPlan,
    cfg: RunConfig,
}

impl FoldContext {
    fn load(args: &FoldArgs) -> Result<Self> {
        let cfg = config(&args.common)?;
        let manifest = DatasetManifest::load(&args.manifest)?;
        let plan = json::read_fold_plan(&manifest.fold_plan)?;
        if args.fold >= plan.k {
            return Err(Error::Usage(format!("fold {} out of range for a {}-fold plan", args.fold, plan.k)));
        }
        let stores = Stores::load(&manifest, &cfg)?;
        Ok(Self { stores, plan, cfg })
    }

    fn pool_ids(&self) -> BTreeSet<String> {
        let all_gt = self.plan.all_ids();
        self.stores
            .pool_ids
            .iter()
            .filter(|id| {
                let present = self.stores.features.contains_key(*id) && self.stores.embeddings.contains_key(*id);
                if !present {
                    log::warn!("pool clip `{id}` is missing from a store; skipped");
                }
                present && !all_gt.contains(*id)
            })
            .cloned()
            .collect()
    }
}

fn dispatch(verb: Verb) -> Result<()> {
    match verb {
        Verb::Preprocess { manifest, out, common } => {
            let cfg = config(&common)?;
            let manifest = DatasetManifest::load(manifest)?;
            create_dir(&out)?;
            for c in &manifest.clips {
                let clip = canonical_clip(&c.audio, &c.id, &cfg)?;
                wav::write_clip(out.join(format!("{}.wav", c.id)), &clip)?;
            }
            println!("wrote {} canonical clips to {}", manifest.clips.len(), out.display());
        }
        Verb::Extract { manifest, prosodic, aux, out, common } => {
            let (vectors, out) = match (manifest, prosodic) {
                (_, Some(prosodic)) => {
                    let aux = aux.ok_or_else(|| Error::Usage("--prosodic needs --aux".into()))?;
                    let out = out.ok_or_else(|| Error::Usage("--prosodic needs --out".into()))?;
                    (ingest_external(prosodic, aux)?, out)
                }
                (Some(path), None) => {
                    let cfg = config(&common)?;
                    let manifest = DatasetManifest::load(path)?;
                    let out = out.unwrap_or_else(|| manifest.feature_store.clone());
                    (extract_all(&manifest, &cfg)?, out)
                }
                (None, None) => return Err(Error::Usage("extract needs --manifest or --prosodic".into())),
            };
            write_feature_store(&out, &vectors)?;
            println!("wrote {} feature vectors to {}", vectors.len(), out.display());
        }
        Verb::Calibrate { logits } => {
            let table = read_logits(&logits)?;
            let model = fit_temperature(&table.logits, &table.labels)?;
            let probs = model.apply(&table.logits)?;
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "# temperature = {:?}", model.temperature).map_err(|e| Error::io("<stdout>", e))?;
            write_probabilities(&mut stdout, &table.ids, &probs)?;
        }
        Verb::Aggregate { annotations, out, common } => {
            let cfg = config(&common)?;
            let records = read_annotations(&annotations)?;
            let matrix = build_rater_matrix(&records);
            create_dir(&out)?;
            write_rater_matrix(out.join("rater_matrix.csv"), &matrix)?;
            let icc = icc_2k(&matrix)?;
            json::write(out.join("icc.json"), &icc)?;
            let ds = dawid_skene(&matrix, cfg.ds_max_iters, cfg.ds_tol)?;
            json::write(out.join("consensus.json"), &ds)?;
            let items = derive_consensus_dataset(&ds);
            write_consensus(out.join("consensus.csv"), &items)?;
            let ambiguous = items.iter().filter(|c| c.ambiguous).count();
            println!(
                "ICC(2,k) = {:.4} [{:.4}, {:.4}] over {} clips x {} raters",
                icc.icc_average, icc.ci95_low, icc.ci95_high, icc.n_used, icc.raters
            );
            println!("consensus: {} clips, {ambiguous} ambiguous, EM converged = {} after {} iterations", items.len(), ds.converged, ds.iterations);
        }
        Verb::Foldplan { labels, manifest, k, seed, out, created_at } => {
            let (labels, out) = match (labels, manifest) {
                (Some(labels), _) => (read_labels(labels)?, out.ok_or_else(|| Error::Usage("--labels needs --out".into()))?),
                (None, Some(path)) => {
                    let manifest = DatasetManifest::load(path)?;
                    let out = out.unwrap_or_else(|| manifest.fold_plan.clone());
                    (crate::pipeline::labels(&manifest, &RunConfig::default())?, out)
                }
                (None, None) => return Err(Error::Usage("foldplan needs --labels or --manifest".into())),
            };
            let created_at = created_at.unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
            let plan = make_fold_plan(&labels, k, seed, created_at)?;
            json::write_fold_plan(&out, &plan)?;
            println!("checksum {}", plan.checksum);
        }
        Verb::TrainLabeller { fold, out, report } => {
            let ctx = FoldContext::load(&fold)?;
            let norm = ctx.stores.fold_normalizer(&ctx.plan, fold.fold)?;
            let train = ctx.plan.train_ids(fold.fold);
            let features = ctx.stores.normalized(&norm, &train)?;
            let labels: Vec<_> = train.iter().map(|id| ctx.stores.labels[id]).collect();
            let (labeller, rep) = train_labeller(&features, &labels, &ctx.plan.test_ids(fold.fold), &ctx.cfg.cv.labeller)?;
            save_labeller(&out, &labeller)?;
            if let Some(path) = report {
                json::write(path, &rep)?;
            }
            println!("labeller {} (T = {:.4}, {} training clips)", labeller.checkpoint_hash(), labeller.calibration.temperature, train.len());
        }
        Verb::Pseudo { fold, labeller, tau, out } => {
            let mut ctx = FoldContext::load(&fold)?;
            if let Some(tau) = tau {
                ctx.cfg.cv.pseudo.tau = tau;
            }
            let labeller = load_labeller(&labeller)?;
            let norm = ctx.stores.fold_normalizer(&ctx.plan, fold.fold)?;
            if norm.fingerprint() != labeller.normalizer_fingerprint {
                return Err(Error::Usage(format!("labeller was not trained on fold {}'s normalizer", fold.fold)));
            }
            let pool = ctx.stores.normalized(&norm, &ctx.pool_ids())?;
            let set = generate_pseudo_labels(&labeller, &pool, &ctx.plan.all_ids(), fold.fold, &ctx.cfg.cv.pseudo)?;
            write_pseudo_set(&out, &set)?;
            let h = set.class_histogram();
            println!("kept {} of {} pool clips (low {}, medium {}, high {})", set.retained, set.pool_size, h[0], h[1], h[2]);
        }
        Verb::TrainHybrid { fold, pseudo, out } => {
            let ctx = FoldContext::load(&fold)?;
            let norm = ctx.stores.fold_normalizer(&ctx.plan, fold.fold)?;
            let gt_label = |id: &str| ctx.stores.labels.get(id).copied();
            let gt = ctx.stores.samples(&norm, &ctx.plan.train_ids(fold.fold), gt_label, Source::GroundTruth)?;
            let pseudo = match pseudo {
                Some(path) => {
                    let set = read_pseudo_set(&path)?;
                    if set.fold != fold.fold {
                        return Err(Error::Usage(format!("pseudo set is for fold {}, not fold {}", set.fold, fold.fold)));
                    }
                    let labels: std::collections::BTreeMap<_, _> = set.samples.iter().map(|s| (s.clip_id.clone(), s.label)).collect();
                    ctx.stores.samples(&norm, &set.ids(), |id| labels.get(id).copied(), Source::Pseudo)?
                }
                None => Vec::new(),
            };
            let test_ids = ctx.plan.test_ids(fold.fold);
            let (model, _) = train_hybrid(&gt, &pseudo, &test_ids, &ctx.cfg.cv.hybrid)?;
            save_hybrid(&out, &model)?;
            let test = ctx.stores.samples(&norm, &test_ids, gt_label, Source::GroundTruth)?;
            let pred = predict(&load_hybrid(&out)?, &test)?;
            let truth: Vec<_> = test.iter().map(|s| s.label).collect();
            let metrics = classification_metrics(&pred.labels, &truth)?;
            print!("{}", json::to_string(&metrics));
        }
        Verb::Cv { config: path, arms, out, seed } => {
            let mut cfg = RunConfig::load(&path)?;
            if let Some(seed) = seed {
                cfg.set_seed(seed);
            }
            if let Some(arms) = arms {
                cfg.arms = arms;
            }
            if let Some(out) = out {
                cfg.out_dir = Some(out);
            }
            cfg.validate()?;
            let manifest_path = cfg.manifest.clone().ok_or_else(|| Error::Usage("config has no `manifest` key".into()))?;
            let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("cv_out"));
            let manifest = DatasetManifest::load(manifest_path)?;
            let plan = json::read_fold_plan(&manifest.fold_plan)?;
            if plan.k != cfg.k {
                log::warn!("config k = {} but the fold plan has {} folds; using the plan", cfg.k, plan.k);
            }
            let stores = Stores::load(&manifest, &cfg)?;
            let data = stores.cv_data()?;
            let outcome = run_cv(&plan, &data, &cfg.arms, &cfg.cv)?;
            write_reports(&out_dir, &outcome)?;
            json::write(out_dir.join("provenance.json"), &provenance(&manifest, &cfg, &plan)?)?;
            let resolved = out_dir.join("resolved.cfg");
            std::fs::write(&resolved, cfg.to_text()).map_err(|e| Error::io(&resolved, e))?;
            print!("{}", summary_table(&outcome.summaries));
            println!("audit {} ({} checks)", if outcome.audit.passed() { "PASS" } else { "FAIL" }, outcome.audit.checks.len());
        }
        Verb::Report { cv, out } => {
            let outcome: CvOutcome = json::read(&cv)?;
            write_reports(&out, &outcome)?;
            print!("{}", summary_table(&outcome.summaries));
        }
        Verb::Audit { plan, cv, artifacts } => {
            let plan = json::read_fold_plan(&plan)?;
            let artifacts: Vec<FoldArtifacts> = match (cv, artifacts) {
                (Some(cv), _) => json::read::<CvOutcome>(&cv)?.artifacts,
                (None, Some(a)) => json::read(&a)?,
                (None, None) => return Err(Error::Usage("audit needs --cv or --artifacts".into())),
            };
            let report = leakage_audit(&plan, &artifacts);
            if !report.passed() {
                return Err(EvalError::AuditFailed(Box::new(report)).into());
            }
            print!("{report}");
            println!("audit PASS ({} checks)", report.checks.len());
        }
        Verb::Serve { manifest, annotations, bind } => {
            let manifest = DatasetManifest::load(manifest)?;
            let store = annotations.unwrap_or_else(|| manifest.annotations.clone());
            let state = server::AppState::new(&manifest, store)?;
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("<runtime>", e))?;
            rt.block_on(server::serve(state, bind)).map_err(|e| Error::io(bind.to_string(), e))?;
        }
        Verb::Fixture { out, per_class, pool_per_class, k, seed, audio } => {
            let spec = FixtureSpec { per_class, pool_per_class, k, seed, audio };
            let manifest = write_fixture(&out, &spec)?;
            println!("wrote {}", manifest.display());
        }
    }
    Ok(())
}
