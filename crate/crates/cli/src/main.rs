use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Axis;
use odxu_core::dec::DecModel;
use odxu_core::gbdt::{train, TreeEnsemble};
use odxu_core::metrics::{classification_report, write_roc_csv, EvalFrame, roc_curve};
use odxu_core::nn::Autoencoder;
use odxu_core::payload::{extract_capture, label_packets, resample, LabelRule, LabelTable, PayloadDataset, ResamplePlan};
use odxu_core::pipeline::{
    self, background_rows, evaluate, partition, run_misclassification, run_osr, stratified_split, write_grid_csv, Model, ModelKind,
    PipelineConfig, Prepared, RunManifest, ScenarioConfig, SourceModels, TransferRunner, UqOutcome,
};
use odxu_core::uq::{build_meta_dataset, score_with, train_metamodel, write_scores_csv, MetaVariant, UqMethod};

mod error;
use error::CliError;

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "odxu", version, about = "Payload-byte intrusion detection with uncertainty estimates")]
struct Cli {
    /// Pipeline configuration (JSON). Missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for models, reports and manifests.
    #[arg(long, default_value = "odxu-out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Strip a pcap capture to labeled 1500-byte payload rows.
    Extract {
        #[arg(long = "in")]
        input: PathBuf,
        /// CSV, or the binary form when the extension is `.bin`.
        #[arg(long = "out")]
        output: PathBuf,
        /// JSON list of labeling rules; unmatched packets are benign.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Scale class counts by per-class multipliers.
    Resample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long = "out")]
        output: PathBuf,
        /// CLASS=MULTIPLIER, repeatable.
        #[arg(long = "rate", value_parser = parse_rate)]
        rates: Vec<(String, f64)>,
    },
    /// Train the autoencoder and clustering model on DEC-Train.
    TrainDec(DataArgs),
    /// Train the boosted-tree classifier on encoded classifier-train rows.
    TrainClf(DataArgs),
    /// Train metamodels on the classifier's errors over classifier-test rows.
    TrainMeta {
        #[command(flatten)]
        data: DataArgs,
        /// prob, shap or ig; all three when omitted.
        #[arg(long)]
        variant: Vec<String>,
    },
    /// Score a labeled dataset with saved models.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// Metamodel variant whose certainty feeds competence.
        #[arg(long)]
        meta: Option<String>,
    },
    /// Transfer saved source models to a target corpus.
    Transfer {
        /// Directory with ae.bin, dec.bin, gbdt.bin and classes.json.
        #[arg(long)]
        source_models: Option<PathBuf>,
        /// Train source models on this corpus instead.
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        target: PathBuf,
        /// Case 1 to 6.
        #[arg(long, conflicts_with = "grid")]
        case: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        portion: f64,
        /// Every case at every configured portion.
        #[arg(long)]
        grid: bool,
    },
    /// Open-set recognition with one class held out of all training.
    Osr {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        unknown: String,
    },
    /// Misclassification detection on metamodel-test rows.
    Misclf {
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Args, Debug)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// Where saved models are read from; defaults to the output directory.
    #[arg(long)]
    models: Option<PathBuf>,
}

fn parse_rate(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.rsplit_once('=').ok_or("expected CLASS=MULTIPLIER")?;
    let v: f64 = v.parse().map_err(|e| format!("bad multiplier {v:?}: {e}"))?;
    Ok((k.to_string(), v))
}

fn main() -> ExitCode {
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
            eprintln!("odxu: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest_path(&self, task: &str) -> PathBuf {
        self.path(&format!("{task}.manifest.json"))
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    let ctx = Ctx { cfg, out: cli.out };
    match cli.cmd {
        Cmd::Extract { input, output, rules } => extract(&input, &output, rules.as_deref()),
        Cmd::Resample { input, output, rates } => {
            let data = PayloadDataset::load(&input)?;
            let plan = rates.into_iter().fold(ResamplePlan::default(), |p, (k, v)| p.with(&k, v));
            let out = resample(&data, &plan, ctx.cfg.seed)?;
            out.save(&output)?;
            println!("{} rows -> {} rows", data.len(), out.len());
            Ok(())
        }
        Cmd::TrainDec(a) => train_dec_cmd(&ctx, &a),
        Cmd::TrainClf(a) => train_clf_cmd(&ctx, &a),
        Cmd::TrainMeta { data, variant } => train_meta_cmd(&ctx, &data, &variant),
        Cmd::Eval { data, meta } => eval_cmd(&ctx, &data, meta.as_deref()),
        Cmd::Transfer {
            source_models,
            source,
            target,
            case,
            portion,
            grid,
        } => transfer_cmd(&ctx, source_models, source, &target, case, portion, grid),
        Cmd::Osr { data, unknown } => {
            let d = PayloadDataset::load(&data)?;
            let out = run_osr(&d, &unknown, &ctx.cfg)?;
            write_uq(&ctx, "osr", out)
        }
        Cmd::Misclf { data } => {
            let d = PayloadDataset::load(&data)?;
            let out = run_misclassification(&d, &ctx.cfg)?;
            write_uq(&ctx, "misclf", out)
        }
    }
}

fn extract(input: &Path, output: &Path, rules: Option<&Path>) -> Result<()> {
    let rules: Vec<LabelRule> = match rules {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?).map_err(odxu_core::Error::from)?,
        None => Vec::new(),
    };
    let (payloads, stats) = extract_capture(std::io::BufReader::new(File::open(input)?))?;
    let mut table = LabelTable::new();
    let rows = label_packets(payloads, &rules, &mut table);
    let data = PayloadDataset::new(rows, table);
    data.save(output)?;
    println!(
        "{} packets, {} rows written, {} without payload, {} unsupported",
        stats.packets, stats.emitted, stats.empty, stats.unsupported
    );
    Ok(())
}

fn models_dir<'a>(ctx: &'a Ctx, a: &'a DataArgs) -> &'a Path {
    a.models.as_deref().unwrap_or(&ctx.out)
}

fn load_classes(dir: &Path) -> Result<Vec<String>> {
    let p = dir.join("classes.json");
    let buf = std::fs::read(&p).map_err(|e| CliError::Missing(p.display().to_string(), e))?;
    Ok(serde_json::from_slice(&buf).map_err(odxu_core::Error::from)?)
}

fn load_model(dir: &Path, kind: ModelKind, file: &str) -> Result<Model> {
    let p = dir.join(file);
    if !p.exists() {
        return Err(CliError::Missing(p.display().to_string(), std::io::ErrorKind::NotFound.into()));
    }
    Ok(pipeline::load(kind, &p)?)
}

fn load_dec(dir: &Path) -> Result<DecModel> {
    match load_model(dir, ModelKind::Dec, "dec.bin")? {
        Model::Dec(m) => Ok(m),
        _ => unreachable!(),
    }
}

fn load_gbdt(dir: &Path) -> Result<TreeEnsemble> {
    match load_model(dir, ModelKind::Gbdt, "gbdt.bin")? {
        Model::Gbdt(m) => Ok(m),
        _ => unreachable!(),
    }
}

fn load_ae(dir: &Path) -> Result<Autoencoder> {
    match load_model(dir, ModelKind::Autoencoder, "ae.bin")? {
        Model::Autoencoder(m) => Ok(m),
        _ => unreachable!(),
    }
}

fn save_model(m: &mut RunManifest, ctx: &Ctx, name: &str, model: &Model) -> Result<()> {
    m.write_artifact(name, &ctx.path(name), &model.to_bytes())?;
    Ok(())
}

fn save_json(m: &mut RunManifest, ctx: &Ctx, name: &str, v: &impl serde::Serialize) -> Result<()> {
    let bytes = serde_json::to_vec_pretty(v).map_err(odxu_core::Error::from)?;
    m.write_artifact(name, &ctx.path(name), &bytes)?;
    Ok(())
}

fn finish(m: RunManifest, ctx: &Ctx, task: &str) -> Result<()> {
    m.save(&ctx.manifest_path(task))?;
    println!("{}", serde_json::to_string_pretty(&m.metrics).map_err(odxu_core::Error::from)?);
    Ok(())
}

fn train_dec_cmd(ctx: &Ctx, a: &DataArgs) -> Result<()> {
    use odxu_core::dec::train_dec;
    use odxu_core::nn::train_autoencoder;
    let data = PayloadDataset::load(&a.data)?;
    let prep = Prepared::from_dataset(&data, &[])?;
    let parts = partition(&prep.y, ctx.cfg.seed)?;
    let mut m = RunManifest::new("train-dec", &ctx.cfg)?;
    m.datasets.insert("input".into(), data.digest());
    m.record_partition("dec_train", &parts.dec_train, &prep.row_hashes, true);
    let (x, y) = prep.rows(&parts.dec_train);
    let (ae_cfg, cl) = (&ctx.cfg.autoencoder, &ctx.cfg.cluster);
    let (ae, ae_trace) = m.timed("autoencoder", || train_autoencoder(x.view(), &ae_cfg.spec, &ae_cfg.train, &ae_cfg.stop))?;
    let (dec, dec_trace) = m.timed("cluster", || train_dec(&ae, x.view(), &y, prep.class_count(), &cl.train, &cl.stop))?;
    m.metrics.insert("autoencoder_epochs".into(), ae_trace.epochs() as f64);
    m.metrics.insert("cluster_epochs".into(), dec_trace.epochs() as f64);
    m.metrics.insert("autoencoder_valid_loss".into(), *ae_trace.valid.last().unwrap_or(&f64::NAN));
    m.metrics.insert("cluster_valid_loss".into(), *dec_trace.valid.last().unwrap_or(&f64::NAN));
    save_model(&mut m, ctx, "ae.bin", &Model::Autoencoder(ae))?;
    save_model(&mut m, ctx, "dec.bin", &Model::Dec(dec))?;
    save_json(&mut m, ctx, "classes.json", &prep.classes)?;
    finish(m, ctx, "train-dec")
}

fn train_clf_cmd(ctx: &Ctx, a: &DataArgs) -> Result<()> {
    let dir = models_dir(ctx, a);
    let data = PayloadDataset::load(&a.data)?;
    let classes = load_classes(dir)?;
    let dec = load_dec(dir)?;
    let prep = Prepared::with_classes(&data, &classes, false)?;
    let parts = partition(&prep.y, ctx.cfg.seed)?;
    let mut m = RunManifest::new("train-clf", &ctx.cfg)?;
    m.datasets.insert("input".into(), data.digest());
    parts.record(&mut m, &prep.row_hashes);
    let z = dec.transform(prep.x.view())?;
    let (zt, yt) = (z.select(Axis(0), &parts.xgb_train), labels(&prep, &parts.xgb_train));
    let clf = m.timed("classifier", || train(zt.view(), &yt, prep.class_count(), &ctx.cfg.classifier))?;
    let ze = z.select(Axis(0), &parts.xgb_test);
    m.metrics = evaluate(&clf, ze.view(), &labels(&prep, &parts.xgb_test), prep.class_index(&ctx.cfg.benign)?)?;
    save_model(&mut m, ctx, "gbdt.bin", &Model::Gbdt(clf))?;
    if dir != ctx.out {
        save_json(&mut m, ctx, "classes.json", &classes)?;
    }
    finish(m, ctx, "train-clf")
}

fn labels(prep: &Prepared, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| prep.y[i]).collect()
}

fn parse_variant(s: &str) -> Result<MetaVariant> {
    MetaVariant::ALL
        .into_iter()
        .find(|v| v.name() == s)
        .ok_or_else(|| CliError::Usage(format!("unknown metamodel variant {s:?}; expected prob, shap or ig")))
}

fn train_meta_cmd(ctx: &Ctx, a: &DataArgs, variants: &[String]) -> Result<()> {
    let variants: Vec<MetaVariant> = if variants.is_empty() {
        MetaVariant::ALL.to_vec()
    } else {
        variants.iter().map(|s| parse_variant(s)).collect::<Result<_>>()?
    };
    let dir = models_dir(ctx, a);
    let data = PayloadDataset::load(&a.data)?;
    let classes = load_classes(dir)?;
    let (dec, clf) = (load_dec(dir)?, load_gbdt(dir)?);
    let prep = Prepared::with_classes(&data, &classes, false)?;
    let parts = partition(&prep.y, ctx.cfg.seed)?;
    let mc = &ctx.cfg.metamodel;
    let mut m = RunManifest::new("train-meta", &ctx.cfg)?;
    m.datasets.insert("input".into(), data.digest());
    let z = dec.transform(prep.x.select(Axis(0), &parts.xgb_test).view())?;
    let y = labels(&prep, &parts.xgb_test);
    let seed = mc.params.seed;
    let base = build_meta_dataset(&clf, z.view(), &y, MetaVariant::Prob, mc.ratio, seed, None)?;
    let split = stratified_split(&base.y, &[1.0 - mc.test_fraction, mc.test_fraction], seed.wrapping_add(1))?;
    let train_src: Vec<usize> = split[0].iter().map(|&r| base.source_rows[r]).collect();
    let bg_rows = background_rows(&train_src, mc.background_rows, seed);
    let bg = z.select(Axis(0), &bg_rows);
    for v in variants {
        let md = build_meta_dataset(&clf, z.view(), &y, v, mc.ratio, seed, (v == MetaVariant::Shap).then(|| bg.view()))?;
        let train_md = md.subset(&split[0]);
        let mm = m.timed(&format!("metamodel_{}", v.name()), || train_metamodel(&train_md, &mc.params))?;
        let test_md = md.subset(&split[1]);
        let z_meta = mm.certainty_augmented(test_md.x.view())?;
        let unc: Vec<f64> = z_meta.iter().map(|c| 1.0 - c).collect();
        let pos: Vec<bool> = test_md.y.iter().map(|&l| l == 1).collect();
        if let Ok(auc) = odxu_core::metrics::auroc(&unc, &pos) {
            m.metrics.insert(format!("meta_{}_auroc", v.name()), auc);
        }
        let csv_path = ctx.path(&format!("meta_{}.csv", v.name()));
        let mut buf = Vec::new();
        md.write_csv(&mut buf)?;
        m.write_artifact(&format!("meta_{}.csv", v.name()), &csv_path, &buf)?;
        save_model(&mut m, ctx, &format!("meta_{}.bin", v.name()), &Model::Metamodel(mm))?;
    }
    finish(m, ctx, "train-meta")
}

fn eval_cmd(ctx: &Ctx, a: &DataArgs, meta: Option<&str>) -> Result<()> {
    let dir = models_dir(ctx, a);
    let data = PayloadDataset::load(&a.data)?;
    let classes = load_classes(dir)?;
    let (dec, clf) = (load_dec(dir)?, load_gbdt(dir)?);
    let prep = Prepared::with_classes(&data, &classes, false)?;
    let benign = prep.class_index(&ctx.cfg.benign)?;
    let mut m = RunManifest::new("eval", &ctx.cfg)?;
    m.datasets.insert("input".into(), data.digest());
    let z = dec.transform(prep.x.view())?;
    let pred = clf.predict(z.view())?;
    let mut scores: Vec<(UqMethod, Vec<f64>)> = Vec::new();
    for method in [UqMethod::Confidence, UqMethod::Entropy] {
        scores.push((method, score_with(method, &clf, z.view(), None)?));
    }
    let certainty: Vec<f64> = match meta {
        Some(v) => {
            let v = parse_variant(v)?;
            let mm = match load_model(dir, ModelKind::Metamodel, &format!("meta_{}.bin", v.name()))? {
                Model::Metamodel(mm) => mm,
                _ => unreachable!(),
            };
            let method = UqMethod::ALL.into_iter().find(|u| u.variant() == Some(v)).unwrap();
            let s = score_with(method, &clf, z.view(), Some(&mm))?;
            let c = s.iter().map(|u| 1.0 - u).collect();
            scores.push((method, s));
            c
        }
        None => scores[0].1.iter().map(|u| 1.0 - u).collect(),
    };
    let frame = EvalFrame::new(prep.y.clone(), pred.clone(), benign)?.with_certainty(certainty)?;
    m.metrics = classification_report(&frame);
    let wrong: Vec<bool> = pred.iter().zip(&prep.y).map(|(p, t)| p != t).collect();
    if let Ok(roc) = roc_curve(&scores[0].1, &wrong) {
        let mut buf = Vec::new();
        write_roc_csv(&roc, &mut buf)?;
        m.write_artifact("eval_roc.csv", &ctx.path("eval_roc.csv"), &buf)?;
    }
    let mut buf = Vec::new();
    write_scores_csv(&scores, Some(&prep.y), &mut buf)?;
    m.write_artifact("eval_scores.csv", &ctx.path("eval_scores.csv"), &buf)?;
    let report = m.metrics.clone();
    save_json(&mut m, ctx, "eval_metrics.json", &report)?;
    finish(m, ctx, "eval")
}

fn transfer_cmd(
    ctx: &Ctx,
    source_models: Option<PathBuf>,
    source: Option<PathBuf>,
    target: &Path,
    case: Option<usize>,
    portion: f64,
    grid: bool,
) -> Result<()> {
    let single = match (grid, case) {
        (true, _) => None,
        (false, Some(n)) => Some(ScenarioConfig::case(n, portion).map_err(|e| CliError::Usage(e.to_string()))?),
        (false, None) => return Err(CliError::Usage("transfer needs --case N or --grid".into())),
    };
    let src = match (source_models, source) {
        (Some(dir), None) => SourceModels {
            classes: load_classes(&dir)?,
            ae: load_ae(&dir)?,
            dec: load_dec(&dir)?,
            clf: load_gbdt(&dir)?,
        },
        (None, Some(path)) => {
            let data = PayloadDataset::load(&path)?;
            pipeline::fit_pipeline(&data, &ctx.cfg)?.model.into()
        }
        _ => return Err(CliError::Usage("give exactly one of --source-models or --source".into())),
    };
    let target = PayloadDataset::load(target)?;
    let mut runner = TransferRunner::new(&src, &target, &ctx.cfg)?;
    let Some(sc) = single else {
        let cells = runner.grid(&ctx.cfg.transfer.portions)?;
        let path = ctx.path("transfer_grid.csv");
        std::fs::create_dir_all(&ctx.out)?;
        write_grid_csv(&cells, BufWriter::new(File::create(&path)?))?;
        let mut out = Vec::new();
        write_grid_csv(&cells, &mut out)?;
        print!("{}", String::from_utf8_lossy(&out));
        return Ok(());
    };
    let r = runner.run(&sc)?;
    let task = format!("transfer-case{}", r.case.unwrap_or(0));
    finish(r.manifest, ctx, &task)
}

fn write_uq(ctx: &Ctx, task: &str, out: UqOutcome) -> Result<()> {
    let mut m = out.manifest;
    let report: BTreeMap<String, _> = out.methods.iter().map(|(k, v)| (k.name().to_string(), *v)).collect();
    save_json(&mut m, ctx, &format!("{task}_report.json"), &report)?;
    let y: Vec<usize> = out.labels.iter().map(|&b| usize::from(b)).collect();
    let mut buf = Vec::new();
    write_scores_csv(&out.scores, Some(&y), &mut buf)?;
    m.write_artifact(&format!("{task}_scores.csv"), &ctx.path(&format!("{task}_scores.csv")), &buf)?;
    for (method, s) in &out.scores {
        let mut buf = Vec::new();
        write_roc_csv(&roc_curve(s, &out.labels)?, &mut buf)?;
        let name = format!("{task}_roc_{}.csv", method.name());
        m.write_artifact(&name, &ctx.path(&name), &buf)?;
    }
    for (v, mm) in &out.metamodels {
        save_model(&mut m, ctx, &format!("{task}_meta_{}.bin", v.name()), &Model::Metamodel(mm.clone()))?;
    }
    finish(m, ctx, task)
}
