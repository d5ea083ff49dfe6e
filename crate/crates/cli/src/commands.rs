use std::path::Path;

use anyhow::{bail, Context as _, Result};
use hsgcn::corpus::{
    build_graph, k_core_filter, load_interactions, Delimiter, LoadOptions, SourceInfo, SplitDataset,
    SplitStrategy,
};
use hsgcn::eval::{bench_retrieval, evaluate, HitRatioKind};
use hsgcn::hamming::{top_k_scan, CodeFile, PackedCodes};
use hsgcn::model::export_codes;
use hsgcn::training::{
    finite_difference_check, random_instance, resample_away_from_kinks, GradCheckConfig, GradCheckReport,
    LossConfig, Trainer,
};
use hsgcn::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Precision, CONFIG_FILE};
use crate::{BenchArgs, Context, EvalArgs, ExportArgs, GradcheckArgs, PrepareArgs, RecommendArgs, TrainArgs};

pub const SPLIT_DIR: &str = "split";
pub const CHECKPOINT_FILE: &str = "checkpoint.hsck";
pub const REPORT_FILE: &str = "train_report.tsv";
pub const TIMING_FILE: &str = "train_timing.tsv";
pub const CODES_FILE: &str = "codes.hsgc";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const BENCH_FILE: &str = "bench.tsv";

fn write(path: &Path, text: &str) -> Result<()> {
    hsgcn::io::write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn load_split(dir: &Path) -> Result<SplitDataset> {
    let (split, _) = SplitDataset::read(dir).with_context(|| format!("reading split from {}", dir.display()))?;
    Ok(split)
}

pub fn prepare(ctx: &mut Context, a: &PrepareArgs) -> Result<()> {
    let cfg = &mut ctx.config;
    if let Some(p) = &a.data {
        cfg.data.path = Some(p.clone());
    }
    if a.format.is_some() {
        cfg.data.format = a.format.clone();
    }
    if a.threshold.is_some() {
        cfg.data.threshold = a.threshold;
    }
    if let Some(k) = a.k_core {
        cfg.data.k_core = k;
    }
    if let Some(v) = a.test_frac {
        cfg.split.test_frac = v;
    }
    if let Some(v) = a.valid_frac {
        cfg.split.valid_frac_of_train = v;
    }
    if let Some(v) = a.split_seed {
        cfg.split.seed = v;
    }
    if a.per_user {
        cfg.split.strategy = SplitStrategy::PerUser;
    }
    let path = cfg.data.path.clone().context("no dataset given (use --data or [data] path)")?;
    let delimiter = match &cfg.data.format {
        Some(f) => f.parse::<Delimiter>()?,
        None => Delimiter::from_path(&path),
    };
    let opts = LoadOptions {
        delimiter: Some(delimiter),
        threshold: cfg.data.threshold,
        has_header: None,
    };
    let raw = load_interactions(&path, &opts)?;
    let ds = if cfg.data.k_core > 1 {
        k_core_filter(&raw, cfg.data.k_core)
    } else {
        raw.clone()
    };
    if ds.is_empty() {
        bail!("no interactions left after {}-core filtering", cfg.data.k_core);
    }
    let split = SplitDataset::new(&ds, cfg.split)?;
    let source = SourceInfo {
        path: path.display().to_string(),
        format: format!("{delimiter:?}").to_lowercase(),
        threshold: cfg.data.threshold,
        k_core: cfg.data.k_core,
    };
    std::fs::create_dir_all(&ctx.out)?;
    let manifest = split.write(&ctx.out.join(SPLIT_DIR), Some(source))?;
    ctx.config.save(&ctx.out.join(CONFIG_FILE))?;

    let graph = build_graph(&split.train);
    println!("loaded       {} interactions ({} users, {} items)", raw.len(), raw.num_users(), raw.num_items());
    println!("users        {}", ds.num_users());
    println!("items        {}", ds.num_items());
    println!("interactions {}", ds.len());
    println!("density      {:.2}%", ds.density() * 100.0);
    println!(
        "split        train {} / validation {} / test {} ({} moved to train)",
        manifest.num_train,
        manifest.num_validation,
        manifest.num_test,
        manifest.moves.len()
    );
    println!("graph        {} nodes, {} edges", graph.num_nodes(), graph.num_edges());
    println!("wrote        {}", ctx.out.join(SPLIT_DIR).display());
    Ok(())
}

fn apply_train_args(ctx: &mut Context, a: &TrainArgs) {
    let c = &mut ctx.config;
    let t = &mut c.train;
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value {
                $field = v;
            }
        };
    }
    set!(t.width, a.width);
    set!(t.layers, a.layers);
    set!(t.beta.initial, a.beta_initial);
    set!(t.beta.factor, a.beta_factor);
    set!(t.beta.every, a.beta_every);
    set!(t.beta.max, a.beta_max);
    set!(t.adam.lr, a.lr);
    set!(t.loss.lambda1, a.lambda1);
    set!(t.loss.lambda2, a.lambda2);
    set!(t.loss.alpha, a.alpha);
    set!(t.loss.negatives_per_positive, a.negatives);
    set!(t.batch_size, a.batch_size);
    set!(t.patience, a.patience);
    set!(t.max_epochs, a.max_epochs);
    set!(t.valid_k, a.valid_k);
    set!(t.seed, a.seed);
    set!(c.precision, a.precision);
    if a.no_initial_rank {
        t.loss.use_initial_rank = false;
    }
    if a.no_final_rank {
        t.loss.use_final_rank = false;
    }
    set!(t.dropout.node_ratio, a.node_dropout);
    set!(t.dropout.bit_ratio, a.bit_dropout);
    if a.node_dropout.is_some_and(|p| p > 0.0) || a.bit_dropout.is_some_and(|p| p > 0.0) {
        t.dropout.enabled = true;
    }
}

pub fn train(ctx: &mut Context, a: &TrainArgs) -> Result<()> {
    apply_train_args(ctx, a);
    ctx.config.validate()?;
    if a.gradcheck {
        let layers = ctx.config.train.layers;
        let report = run_gradcheck(8, 8, 8, layers, &ctx.config.train.loss, 1e-5, ctx.config.train.seed)?;
        print_gradcheck(&report);
        if !report.passed(1e-4) {
            bail!("gradient check failed: max relative error {:.3e}", report.max_rel_error);
        }
    }
    let split = load_split(&ctx.out.join(SPLIT_DIR))?;
    match ctx.config.precision {
        Precision::F32 => train_with::<f32>(ctx, &split, a.resume),
        Precision::F64 => train_with::<f64>(ctx, &split, a.resume),
    }
}

fn train_with<T: Scalar>(ctx: &Context, split: &SplitDataset, resume: bool) -> Result<()> {
    let cfg = ctx.config.train.clone();
    let ckpt = ctx.out.join(CHECKPOINT_FILE);
    let mut trainer = if resume {
        let mut t = Trainer::<T>::load_checkpoint(split, cfg.clone(), &ckpt)
            .with_context(|| format!("resuming from {}", ckpt.display()))?;
        t.set_max_epochs(cfg.max_epochs);
        eprintln!("resumed after epoch {}", t.epochs_done());
        t
    } else {
        Trainer::<T>::new(split, cfg)?
    };
    ctx.config.save(&ctx.out.join(CONFIG_FILE))?;
    let report_path = ctx.out.join(REPORT_FILE);
    let timing_path = ctx.out.join(TIMING_FILE);
    trainer.run(|t| {
        let r = t.report().epochs.last().expect("epoch just ran");
        eprintln!(
            "epoch {:>4}  beta {:>7.3}  loss {:>12.4}  valid HR@{} {}",
            r.epoch,
            r.beta,
            r.loss.total,
            t.config().valid_k,
            r.valid_hr.map_or("NA".to_string(), |v| format!("{v:.4}"))
        );
        t.save_checkpoint(&ckpt)?;
        write(&report_path, &t.report().to_tsv()).map_err(|e| hsgcn::Error::Format(e.to_string()))?;
        write(&timing_path, &t.report().timing_tsv()).map_err(|e| hsgcn::Error::Format(e.to_string()))?;
        Ok(())
    })?;
    let report = trainer.report();
    println!(
        "finished after {} epochs ({}), best epoch {}",
        report.epochs.len(),
        report.stop_reason.map_or("unknown", |s| s.as_str()),
        report.best_epoch.map_or("none".to_string(), |b| b.to_string())
    );
    println!("wrote {}", report_path.display());
    Ok(())
}

pub fn export(ctx: &Context, a: &ExportArgs) -> Result<()> {
    let split = load_split(&ctx.out.join(SPLIT_DIR))?;
    let ckpt = a.checkpoint.clone().unwrap_or_else(|| ctx.out.join(CHECKPOINT_FILE));
    let output = a.output.clone().unwrap_or_else(|| ctx.out.join(CODES_FILE));
    let file = match ctx.config.precision {
        Precision::F32 => export_with::<f32>(ctx, &split, &ckpt)?,
        Precision::F64 => export_with::<f64>(ctx, &split, &ckpt)?,
    };
    file.save(&output)?;
    println!(
        "wrote {} ({} users, {} items, {} bits)",
        output.display(),
        file.num_users,
        file.num_items,
        file.width()
    );
    Ok(())
}

fn export_with<T: Scalar>(ctx: &Context, split: &SplitDataset, ckpt: &Path) -> Result<CodeFile> {
    let t = Trainer::<T>::load_checkpoint(split, ctx.config.train.clone(), ckpt)
        .with_context(|| format!("loading {}", ckpt.display()))?;
    let params = t.best_params()?;
    Ok(export_codes(&params, t.graph(), split.ids())?)
}

fn load_matching(codes: &Path, split_dir: &Path) -> Result<(CodeFile, SplitDataset)> {
    let file = CodeFile::load(codes).with_context(|| format!("loading {}", codes.display()))?;
    let split = load_split(split_dir)?;
    if file.ids != *split.ids() {
        bail!(
            "{} was not exported for the split in {}",
            codes.display(),
            split_dir.display()
        );
    }
    Ok((file, split))
}

pub fn eval(ctx: &mut Context, a: &EvalArgs) -> Result<()> {
    let codes = a.codes.clone().unwrap_or_else(|| ctx.out.join(CODES_FILE));
    let split_dir = a.split.clone().unwrap_or_else(|| ctx.out.join(SPLIT_DIR));
    let opts = &mut ctx.config.eval;
    if let Some(ks) = &a.ks {
        opts.ks = ks.clone();
    }
    if a.any_hit {
        opts.hr_kind = HitRatioKind::AnyHit;
    }
    if a.no_groups {
        opts.groups = false;
    }
    let (file, split) = load_matching(&codes, &split_dir)?;
    let report = evaluate(&file.codes, &split, &ctx.config.eval)?;
    print!("{}", report.to_table());
    let path = ctx.out.join(METRICS_FILE);
    write(&path, &report.to_tsv())?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn recommend(ctx: &Context, a: &RecommendArgs) -> Result<()> {
    let codes = a.codes.clone().unwrap_or_else(|| ctx.out.join(CODES_FILE));
    let split_dir = a.split.clone().unwrap_or_else(|| ctx.out.join(SPLIT_DIR));
    let (file, split) = load_matching(&codes, &split_dir)?;
    let user = file
        .ids
        .users
        .dense(&a.user)
        .ok_or_else(|| hsgcn::Error::UnknownId(a.user.clone()))?;
    let seen = &split.train.items_by_user()[user as usize];
    let top = top_k_scan(file.item_view(), file.user_code(user), a.k, seen)?;
    println!("rank\titem\tscore");
    for (rank, (item, score)) in top.iter().enumerate() {
        println!("{}\t{}\t{}", rank + 1, file.ids.items.external(*item), score);
    }
    Ok(())
}

fn random_codes(rows: usize, width: usize, rng: &mut ChaCha8Rng) -> Result<PackedCodes> {
    let signs: Vec<i8> = (0..rows * width).map(|_| if rng.gen_bool(0.5) { 1 } else { -1 }).collect();
    Ok(PackedCodes::from_signs(rows, width, &signs)?)
}

pub fn bench(ctx: &Context, a: &BenchArgs) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (items, queries) = match a.synthetic_items {
        Some(m) => (random_codes(m, a.width, &mut rng)?, random_codes(a.queries, a.width, &mut rng)?),
        None => {
            let path = a.codes.clone().unwrap_or_else(|| ctx.out.join(CODES_FILE));
            let file = CodeFile::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let view = file.item_view();
            let words: Vec<u64> = (0..view.rows()).flat_map(|r| view.row(r).iter().copied()).collect();
            let items = PackedCodes::from_words(view.rows(), view.width(), words)?;
            if file.num_users == 0 {
                bail!("code file has no users to use as queries");
            }
            let q: Vec<u64> = (0..a.queries)
                .flat_map(|i| file.user_code((i % file.num_users) as u32).iter().copied())
                .collect();
            (items, PackedCodes::from_words(a.queries, file.width(), q)?)
        }
    };
    let dense = items.to_dense::<f32>();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
    let report = pool.install(|| bench_retrieval(&items, &dense, &queries, a.k))?;
    print!("{}", report.to_table());
    std::fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join(BENCH_FILE);
    write(&path, &report.to_tsv())?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run_gradcheck(
    users: usize,
    items: usize,
    width: usize,
    layers: usize,
    loss: &LossConfig,
    epsilon: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let (params, graph, batch) = random_instance(users, items, width, layers, loss.negatives_per_positive, seed)?;
    let cfg = GradCheckConfig {
        epsilon,
        seed,
        ..GradCheckConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let params = resample_away_from_kinks(&params, &graph, &batch, loss, &cfg, 1.0, 100, &mut rng)?;
    Ok(finite_difference_check(&params, &graph, &batch, loss, &cfg)?)
}

fn print_gradcheck(r: &GradCheckReport) {
    println!(
        "gradient check: max relative error {:.3e} over {} coordinates ({} skipped near kinks, margin {:.2e})",
        r.max_rel_error, r.checked, r.skipped, r.kink_margin
    );
}

pub fn gradcheck(ctx: &Context, a: &GradcheckArgs) -> Result<()> {
    let layers = a.layers.unwrap_or(ctx.config.train.layers);
    let report = run_gradcheck(a.users, a.items, a.width, layers, &ctx.config.train.loss, a.epsilon, a.seed)?;
    print_gradcheck(&report);
    if !report.passed(a.tolerance) {
        bail!("gradient check failed (tolerance {:.1e})", a.tolerance);
    }
    println!("passed (tolerance {:.1e})", a.tolerance);
    Ok(())
}
