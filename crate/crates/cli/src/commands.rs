use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use romdecipher::channel::{
    load_prior, EditOp, EmissionParams, LanguageProfile, OpTable, Restrictions,
};
use romdecipher::corpus::{
    self, generate_synthetic, preprocess, restrict_to, Side, SyntheticChannel,
};
use romdecipher::decode_eval::{evaluate, Decoder, DEFAULT_DECODE_PRUNE};
use romdecipher::ngram::{self, NgramModel, DEFAULT_K};
use romdecipher::training::{train_supervised, train_unsupervised, TrainConfig, TrainEvent};
use romdecipher::Error;

use crate::config::{existing, required_path, FileConfig, RunRecord};
use crate::failure::{Context, Failure, Outcome};
use crate::{DecodeArgs, EvalArgs, InspectArgs, Mode, SynthArgs, TrainArgs, TrainLmArgs};

pub const MODEL_FILE: &str = "model.tsv";
pub const LOG_FILE: &str = "train.log.jsonl";

pub fn lm_file(dir: &Path, order: usize) -> PathBuf {
    dir.join(format!("lm.{order}.txt"))
}

fn trace_file(dir: &Path, restart: usize) -> PathBuf {
    dir.join(format!("trace.{restart}.tsv"))
}

/// Writes `path` in one go through a buffered writer.
fn write_to(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<(), Error>) -> Outcome {
    let mut out = BufWriter::new(File::create(path).with(path.display())?);
    body(&mut out).with(path.display())?;
    out.flush().with(path.display())
}

/// Standard output when `path` is `None`.
fn write_or_stdout(
    path: Option<&Path>,
    body: impl FnOnce(&mut dyn Write) -> Result<(), Error>,
) -> Outcome {
    match path {
        Some(p) => write_to(p, body),
        None => {
            let stdout = std::io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            body(&mut out)?;
            Ok(out.flush()?)
        }
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).with(path.display())
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir).with(dir.display())
}

fn read_lm(path: &Path) -> Outcome<NgramModel> {
    let file = File::open(path).with(path.display())?;
    Ok(NgramModel::read(
        BufReader::new(file),
        &path.display().to_string(),
    )?)
}

fn read_model(path: &Path) -> Outcome<EmissionParams> {
    let file = File::open(path).with(path.display())?;
    Ok(EmissionParams::read(
        BufReader::new(file),
        &path.display().to_string(),
    )?)
}

/// Preprocessed sentences restricted to `alphabet`, empty ones dropped.
fn sentences(path: &Path, side: Side, alphabet: &[char]) -> Outcome<Vec<String>> {
    let loaded = corpus::read_monolingual(path, side).with(path.display())?;
    let out: Vec<String> = loaded
        .items
        .iter()
        .map(|s| restrict_to(&s.text, alphabet))
        .filter(|s| !s.is_empty())
        .collect();
    if out.is_empty() {
        return Err(Failure::from(Error::EmptyCorpus).context(path.display()));
    }
    Ok(out)
}

fn check_orders(orders: &[usize]) -> Outcome {
    match orders
        .iter()
        .find(|o| !(ngram::MIN_ORDER..=ngram::MAX_ORDER).contains(*o))
    {
        Some(o) => Err(Failure::config(format!(
            "order {o} is outside {}..={}",
            ngram::MIN_ORDER,
            ngram::MAX_ORDER
        ))),
        None if orders.is_empty() => Err(Failure::config("no orders given")),
        None => Ok(()),
    }
}

pub fn train_lm(file: &FileConfig, a: TrainLmArgs) -> Outcome {
    let profile = file.profile(a.language.as_deref())?;
    let orders = match a.orders {
        Some(o) => o,
        None => file.train_config(&profile)?.orders,
    };
    check_orders(&orders)?;
    let k = a.k.or(file.k).unwrap_or(DEFAULT_K);
    if !(k > 0.0 && k.is_finite()) {
        return Err(Failure::config(format!(
            "Witten-Bell constant {k} must be positive"
        )));
    }
    let corpus_path = required_path(&a.corpus, &file.lm_corpus, "corpus", "lm_corpus")?;
    let out_dir = a
        .out_dir
        .or_else(|| file.lm_dir.clone())
        .ok_or_else(|| Failure::config("missing --out-dir (or `lm_dir` in the config file)"))?;
    let text = sentences(&corpus_path, Side::Original, &profile.source_alphabet)?;
    create_dir(&out_dir)?;
    for &order in &orders {
        let model = ngram::train_lm(&text, order, &profile.source_alphabet, k)?;
        let path = lm_file(&out_dir, order);
        write_to(&path, |w| model.write(w))?;
        eprintln!(
            "order {order}: {} histories, {} entries -> {}",
            model.num_states(),
            model.num_entries(),
            path.display()
        );
    }
    Ok(())
}

/// Append-only JSON-lines log plus one TSV trace per restart, written as
/// events arrive so a long run can be followed.
struct RunLog {
    dir: PathBuf,
    log: File,
    traces: Vec<Option<BufWriter<File>>>,
    error: Option<Failure>,
}

impl RunLog {
    fn open(dir: &Path) -> Outcome<RunLog> {
        let path = dir.join(LOG_FILE);
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .with(path.display())?;
        Ok(RunLog {
            dir: dir.to_path_buf(),
            log,
            traces: Vec::new(),
            error: None,
        })
    }

    fn record<T: serde::Serialize>(&mut self, value: &T) {
        let line = serde_json::to_string(value).expect("log records serialize") + "\n";
        if let Err(e) = self.log.write_all(line.as_bytes()) {
            self.error.get_or_insert(Failure::from(e).context(LOG_FILE));
        }
    }

    fn trace(&mut self, restart: usize, header: &str, row: String) {
        if self.traces.len() <= restart {
            self.traces.resize_with(restart + 1, || None);
        }
        let path = trace_file(&self.dir, restart);
        let result = (|| -> std::io::Result<()> {
            if self.traces[restart].is_none() {
                let mut w = BufWriter::new(File::create(&path)?);
                writeln!(w, "{header}")?;
                self.traces[restart] = Some(w);
            }
            let w = self.traces[restart].as_mut().expect("opened above");
            writeln!(w, "{row}")?;
            w.flush()
        })();
        if let Err(e) = result {
            self.error
                .get_or_insert(Failure::from(e).context(path.display()));
        }
    }

    fn event(&mut self, e: &TrainEvent) {
        self.record(e);
        match *e {
            TrainEvent::Batch {
                restart,
                batch,
                stage,
                order,
                sentences,
                skipped,
                loglik,
                emission_arcs,
            } => self.trace(
                restart,
                "batch\tstage\torder\tsentences\tskipped\tloglik\temission_arcs",
                format!(
                    "{batch}\t{stage}\t{order}\t{sentences}\t{skipped}\t{loglik}\t{emission_arcs}"
                ),
            ),
            TrainEvent::Iteration {
                iteration,
                pairs,
                skipped,
                loglik,
                objective,
            } => self.trace(
                0,
                "iteration\tpairs\tskipped\tloglik\tobjective",
                format!("{iteration}\t{pairs}\t{skipped}\t{loglik}\t{objective}"),
            ),
            _ => {}
        }
    }

    fn finish(self) -> Outcome {
        match self.error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn train_settings(
    file: &FileConfig,
    a: &TrainArgs,
    profile: &LanguageProfile,
) -> Outcome<TrainConfig> {
    let mut c = file.train_config(profile)?;
    if let Some(v) = a.restarts {
        c.restarts = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.delay {
        c.delay = v;
    }
    if let Some(v) = &a.orders {
        c.orders = v.clone();
    }
    if let Some(v) = a.batch_size {
        c.batch_size = v;
    }
    if let Some(v) = a.batches_per_stage {
        c.batches_per_stage = v;
    }
    c.validate()?;
    Ok(c)
}

pub fn train(file: &FileConfig, a: TrainArgs) -> Outcome {
    let profile = file.profile(a.language.as_deref())?;
    let config = train_settings(file, &a, &profile)?;
    let data = match a.mode {
        Mode::Unsupervised => required_path(&a.train, &file.train_corpus, "train", "train_corpus")?,
        Mode::Supervised => required_path(&a.parallel, &file.parallel, "parallel", "parallel")?,
    };
    let lm_dir = required_path(&a.lm_dir, &file.lm_dir, "lm-dir", "lm_dir")?;
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| file.out_dir.clone())
        .ok_or_else(|| Failure::config("missing --out-dir (or `out_dir` in the config file)"))?;
    let prior_kind = a
        .prior
        .clone()
        .or_else(|| file.prior.clone())
        .unwrap_or_else(|| "combined".into());
    let prior_files: Vec<PathBuf> = if a.prior_files.is_empty() {
        file.prior_files.clone()
    } else {
        a.prior_files.clone()
    };
    let prior_files = prior_files
        .into_iter()
        .map(existing)
        .collect::<Outcome<Vec<_>>>()?;
    let (source, latin) = (&profile.source_alphabet, &profile.latin_alphabet);
    let mut prior = profile.builtin_prior(&prior_kind)?;
    if !prior_files.is_empty() {
        prior = prior.merge(load_prior(&prior_files, source, latin)?);
    }
    let mode = match a.mode {
        Mode::Unsupervised => "unsupervised",
        Mode::Supervised => "supervised",
    };
    // Inputs are read before anything is written.
    enum Data {
        Latin(Vec<String>, Vec<NgramModel>),
        Pairs(Vec<(String, String)>, NgramModel),
    }
    let input = match a.mode {
        Mode::Unsupervised => {
            let text = sentences(&data, Side::Latin, latin)?;
            let mut orders = config.orders.clone();
            orders.sort_unstable();
            orders.dedup();
            let lms = orders
                .iter()
                .map(|&o| read_lm(&existing(lm_file(&lm_dir, o))?))
                .collect::<Outcome<Vec<_>>>()?;
            Data::Latin(text, lms)
        }
        Mode::Supervised => {
            let loaded = corpus::load_parallel(&data).with(data.display())?;
            let pairs: Vec<(String, String)> = loaded
                .items
                .iter()
                .map(|p| {
                    (
                        restrict_to(&p.original, source),
                        restrict_to(&p.latin, latin),
                    )
                })
                .filter(|(o, l)| !o.is_empty() && !l.is_empty())
                .collect();
            if pairs.is_empty() {
                return Err(Failure::from(Error::EmptyCorpus).context(data.display()));
            }
            let order = *config.orders.iter().max().expect("validated schedule");
            Data::Pairs(pairs, read_lm(&existing(lm_file(&lm_dir, order))?)?)
        }
    };

    create_dir(&out_dir)?;
    let table = Arc::new(OpTable::new(source, latin, Some(&Restrictions::default())));
    let mut log = RunLog::open(&out_dir)?;
    log.record(&RunRecord {
        event: "run",
        mode,
        language: &profile.name,
        source_alphabet: source.iter().collect(),
        latin_alphabet: latin.iter().collect(),
        prior: &prior_kind,
        prior_files: &prior_files,
        data: &data,
        lm_dir: &lm_dir,
        config: &config,
    });
    let params = match input {
        Data::Latin(text, lms) => {
            let (runs, best) =
                train_unsupervised(&text, &lms, table, &prior, &config, &mut |e| log.event(e))?;
            for (r, run) in runs.iter().enumerate() {
                eprintln!(
                    "restart {r} (seed {}): final-stage mean loglik {:.4}, {} sentences without a path{}",
                    run.seed,
                    run.final_stage_loglik,
                    run.final_stage_skipped,
                    if r == best { " [selected]" } else { "" }
                );
            }
            runs.into_iter().nth(best).expect("selected run").params
        }
        Data::Pairs(pairs, lm) => {
            let out = train_supervised(&pairs, &lm, table, &prior, &config, &mut |e| log.event(e))?;
            eprintln!(
                "supervised: {} iterations, {} pairs excluded, final objective {:.4}",
                out.objective.len(),
                out.excluded,
                out.objective.last().copied().unwrap_or(f64::NAN)
            );
            out.params
        }
    };
    let model = out_dir.join(MODEL_FILE);
    write_to(&model, |w| params.write(w))?;
    log.record(&serde_json::json!({ "event": "done", "model": model }));
    log.finish()?;
    eprintln!("model -> {}", model.display());
    Ok(())
}

pub fn decode(file: &FileConfig, a: DecodeArgs) -> Outcome {
    let profile = file.profile(a.language.as_deref())?;
    let settings = file.train_config(&profile)?;
    let delay = a.delay.unwrap_or(settings.delay);
    if delay == 0 {
        return Err(Failure::config("delay limit must be at least 1"));
    }
    let model_path = required_path(&a.model, &file.model, "model", "model")?;
    let lm_path = match &a.lm {
        Some(p) => existing(p.clone())?,
        None => {
            let dir = required_path(&a.lm_dir, &file.lm_dir, "lm", "lm_dir")?;
            let order = *settings
                .orders
                .iter()
                .max()
                .ok_or_else(|| Failure::config("no orders given"))?;
            existing(lm_file(&dir, order))?
        }
    };
    let input = existing(a.input.clone())?;
    let prune = if a.no_prune {
        None
    } else {
        Some(a.prune.unwrap_or(DEFAULT_DECODE_PRUNE))
    };

    let params = read_model(&model_path)?;
    let lm = read_lm(&lm_path)?;
    let decoder = Decoder::new(&lm, &params, delay, prune)?;
    let latin = params.table().latin();
    let lines: Vec<String> = read_text(&input)?
        .lines()
        .map(|l| restrict_to(&preprocess(l, Side::Latin), latin))
        .collect();
    let mut failed = 0;
    let mut out = Vec::with_capacity(lines.len());
    for (i, r) in decoder.decode_all(&lines).into_iter().enumerate() {
        match r {
            Ok(d) => out.push(d.source),
            Err(Error::NoPath) => {
                failed += 1;
                eprintln!("line {}: no decoding", i + 1);
                out.push(String::new());
            }
            Err(e) => {
                return Err(Failure::from(e).context(format!("{}:{}", input.display(), i + 1)))
            }
        }
    }
    write_or_stdout(a.output.as_deref(), |w| {
        for s in &out {
            writeln!(w, "{s}")?;
        }
        Ok(())
    })?;
    eprintln!("decoded {} sentences, {failed} without a path", out.len());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Outcome {
    let norm = |path: &Path| -> Outcome<Vec<String>> {
        Ok(read_text(path)?
            .lines()
            .map(|l| preprocess(l, Side::Original))
            .collect())
    };
    let hyps = norm(&existing(a.hyp.clone())?)?;
    let refs = norm(&existing(a.reference.clone())?)?;
    if hyps.len() != refs.len() {
        return Err(Failure::data(format!(
            "{} has {} lines but {} has {}",
            a.hyp.display(),
            hyps.len(),
            a.reference.display(),
            refs.len()
        )));
    }
    let hyps: Vec<Option<&str>> = hyps.iter().map(|h| Some(h.as_str())).collect();
    let report = evaluate(&hyps, &refs);
    if report.totals().1 == 0 {
        return Err(Failure::from(Error::EmptyReference).context(a.reference.display()));
    }
    write_or_stdout(a.report.as_deref(), |w| report.write_tsv(w))?;
    if let Some(p) = &a.confusion {
        write_to(p, |w| report.confusion.write_tsv(w))?;
    }
    eprintln!("{}", report.summary());
    Ok(())
}

pub fn synth(a: SynthArgs) -> Outcome {
    let channel_path = existing(a.channel.clone())?;
    let mut channel = SyntheticChannel::parse(
        &channel_path.display().to_string(),
        &read_text(&channel_path)?,
    )?;
    if let Some(seed) = a.seed {
        channel = SyntheticChannel::new(
            channel.rows().clone(),
            channel.insertion_rate(),
            channel.deletion_rate(),
            seed,
        )?;
    }
    let corpus_path = existing(a.corpus.clone())?;
    let originals: Vec<String> = corpus::read_monolingual(&corpus_path, Side::Original)
        .with(corpus_path.display())?
        .items
        .into_iter()
        .map(|s| s.text)
        .collect();
    let (latin, gold) =
        generate_synthetic(&originals, &channel, a.n).with(corpus_path.display())?;
    create_dir(&a.out_dir)?;
    let lines = |xs: &[String]| {
        let xs = xs.to_vec();
        move |w: &mut dyn Write| -> Result<(), Error> {
            for x in &xs {
                writeln!(w, "{x}")?;
            }
            Ok(())
        }
    };
    let pairs: Vec<corpus::Pair> = latin
        .iter()
        .zip(&gold)
        .map(|(l, o)| corpus::Pair {
            latin: l.clone(),
            original: o.clone(),
        })
        .collect();
    write_to(&a.out_dir.join("parallel.tsv"), |w| {
        corpus::write_parallel(&pairs, w)
    })?;
    write_to(&a.out_dir.join("latin.txt"), lines(&latin))?;
    write_to(&a.out_dir.join("gold.txt"), lines(&gold))?;
    eprintln!("{} sentences -> {}", latin.len(), a.out_dir.display());
    Ok(())
}

fn show(c: char) -> String {
    if c == ' ' {
        "<sp>".into()
    } else {
        c.to_string()
    }
}

pub fn inspect(a: InspectArgs) -> Outcome {
    let mut out = String::new();
    if let Some(path) = &a.lm {
        let m = read_lm(&existing(path.clone())?)?;
        out += &format!("order\t{}\n", m.order());
        out += &format!("alphabet\t{}\n", m.alphabet().len());
        out += &format!("histories\t{}\n", m.num_states());
        out += &format!("entries\t{}\n", m.num_entries());
    } else if let Some(path) = &a.model {
        let p = read_model(&existing(path.clone())?)?;
        let t = p.table();
        out += &format!("source symbols\t{}\n", t.source().len());
        out += &format!("latin symbols\t{}\n", t.latin().len());
        out += &format!("operations\t{}\n", t.len());
        out += &format!(
            "insertions\t{}\n",
            if p.insertions_enabled() {
                "enabled"
            } else {
                "disabled"
            }
        );
        if let Some(v) = p.frozen_deletion() {
            out += &format!("frozen deletion\t{v}\n");
        }
        for &o in t.source() {
            let mut row: Vec<(f64, String)> = t
                .ops()
                .iter()
                .enumerate()
                .filter_map(|(id, op)| match *op {
                    EditOp::Sub(s, l) if s == o => Some((p.probs()[id], show(l))),
                    EditOp::Del(s) if s == o => Some((p.probs()[id], "<del>".into())),
                    _ => None,
                })
                .collect();
            row.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
            let best: Vec<String> = row
                .iter()
                .take(a.top)
                .map(|(q, l)| format!("{l}:{q:.4}"))
                .collect();
            out += &format!("{}\t{}\n", show(o), best.join(" "));
        }
    }
    print!("{out}");
    Ok(())
}
