use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::Arc;

use romdecipher::channel::{EditOp, EmissionParams, OpTable};
use romdecipher::ngram::{score_wfsa, source_symbols, to_wfsa, NgramModel};

const SOURCE: &str = "абвгде";
const LATIN: &str = "abvgde";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_romdecipher"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert_eq!(
        code(&out),
        0,
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// A toy language over six letters, its cipher channel, a prior and a
/// config file in a fresh directory.
struct Toy {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
}

impl Toy {
    fn new() -> Toy {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().to_path_buf();
        let letters: Vec<char> = SOURCE.chars().collect();
        // Deterministic pseudo-random words and sentences.
        let mut state = 7u64;
        let mut next = |n: usize| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as usize) % n
        };
        let words: Vec<String> = (0..30)
            .map(|_| {
                (0..1 + next(5))
                    .map(|_| letters[next(letters.len())])
                    .collect()
            })
            .collect();
        let corpus: Vec<String> = (0..2000)
            .map(|_| {
                let n = 2 + next(5);
                (0..n)
                    .map(|_| words[next(words.len()).min(next(words.len()))].clone())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        fs::write(dir.join("orig.txt"), corpus.join("\n") + "\n").unwrap();
        let pairs: String = SOURCE
            .chars()
            .zip(LATIN.chars())
            .map(|(o, l)| format!("{o}\t{l}\n"))
            .collect();
        fs::write(
            dir.join("chan.tsv"),
            format!("@seed\t5\n{pairs}<sp>\t<sp>\n"),
        )
        .unwrap();
        fs::write(dir.join("prior.tsv"), pairs).unwrap();
        fs::write(
            dir.join("cfg.toml"),
            format!(
                "source_alphabet = \"{SOURCE} \"\nlatin_alphabet = \"{LATIN} \"\nprior = \"none\"\n\
                 prior_files = [\"prior.tsv\"]\nlm_dir = \"lm\"\n\n[train]\norders = [2, 3]\n\
                 batches_per_stage = 15\n"
            ),
        )
        .unwrap();
        Toy { _tmp: tmp, dir }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.dir.join(p)
    }

    fn ok(&self, args: &[&str]) -> Output {
        ok(&self.dir, args)
    }

    fn code(&self, args: &[&str]) -> i32 {
        code(&run(&self.dir, args))
    }

    fn read(&self, p: &str) -> Vec<u8> {
        fs::read(self.path(p)).unwrap()
    }

    fn prepare(&self) {
        self.ok(&["--config", "cfg.toml", "train-lm", "--corpus", "orig.txt"]);
        self.ok(&[
            "synth",
            "--corpus",
            "orig.txt",
            "--channel",
            "chan.tsv",
            "--n",
            "200",
            "--out-dir",
            "syn",
        ]);
    }
}

#[test]
fn help_and_version_succeed() {
    let dir = std::env::temp_dir();
    for args in [&["--help"][..], &["--version"], &["train", "--help"]] {
        ok(&dir, args);
    }
}

#[test]
fn usage_errors_exit_with_one() {
    let toy = Toy::new();
    assert_eq!(toy.code(&[]), 1);
    assert_eq!(toy.code(&["frobnicate"]), 1);
    assert_eq!(toy.code(&["decode", "--bogus"]), 1);
    assert_eq!(toy.code(&["--config", "missing.toml", "train-lm"]), 1);
    fs::write(toy.path("bad.toml"), "langauge = \"russian\"\n").unwrap();
    assert_eq!(
        toy.code(&["--config", "bad.toml", "train-lm", "--corpus", "orig.txt"]),
        1
    );
    assert_eq!(
        toy.code(&["train-lm", "--corpus", "nope.txt", "--out-dir", "lm"]),
        1
    );
    assert_eq!(
        toy.code(&[
            "--threads",
            "0",
            "eval",
            "--hyp",
            "orig.txt",
            "--ref",
            "orig.txt"
        ]),
        1
    );
}

#[test]
fn order_outside_the_supported_range_is_a_config_error() {
    let toy = Toy::new();
    for orders in ["7", "1", "2,9"] {
        assert_eq!(
            toy.code(&[
                "--config", "cfg.toml", "train-lm", "--corpus", "orig.txt", "--orders", orders
            ]),
            1
        );
    }
    assert!(!toy.path("lm").exists());
}

#[test]
fn language_models_are_loadable_and_reproducible() {
    let toy = Toy::new();
    let args = [
        "--config", "cfg.toml", "train-lm", "--corpus", "orig.txt", "--orders", "2,3,4",
    ];
    toy.ok(&args);
    let first: Vec<Vec<u8>> = (2..=4)
        .map(|o| toy.read(&format!("lm/lm.{o}.txt")))
        .collect();
    toy.ok(&args);
    for o in 2..=4 {
        assert_eq!(
            toy.read(&format!("lm/lm.{o}.txt")),
            first[o - 2],
            "order {o}"
        );
    }
    let m = NgramModel::read(&first[0][..], "lm.2.txt").unwrap();
    assert_eq!(m.order(), 2);
    let wfsa = to_wfsa(&m, &source_symbols(m.alphabet())).unwrap();
    for s in ["аб", "вг де", "ее е"] {
        let (direct, machine) = (m.score(s), score_wfsa(&wfsa, s).unwrap());
        assert!(
            (direct - machine).abs() <= 1e-8 * direct.abs(),
            "{s}: {direct} vs {machine}"
        );
    }
    let mut again = Vec::new();
    m.write(&mut again).unwrap();
    assert_eq!(again, first[0]);
}

#[test]
fn supervised_training_needs_parallel_data() {
    let toy = Toy::new();
    toy.prepare();
    let args = [
        "--config",
        "cfg.toml",
        "train",
        "--mode",
        "supervised",
        "--out-dir",
        "run",
    ];
    assert_eq!(toy.code(&args), 1);
    assert!(!toy.path("run").exists());
}

#[test]
fn supervised_training_writes_a_model() {
    let toy = Toy::new();
    toy.prepare();
    toy.ok(&[
        "--config",
        "cfg.toml",
        "train",
        "--mode",
        "supervised",
        "--parallel",
        "syn/parallel.tsv",
        "--out-dir",
        "run",
    ]);
    let trace = String::from_utf8(toy.read("run/trace.0.tsv")).unwrap();
    assert!(trace.starts_with("iteration\t"));
    let params = EmissionParams::read(&toy.read("run/model.tsv")[..], "model").unwrap();
    for (o, l) in SOURCE.chars().zip(LATIN.chars()) {
        assert!(params.prob_of(EditOp::Sub(o, l)) > 0.9, "{o}→{l}");
    }
}

#[test]
fn hopeless_supervised_data_is_a_training_failure() {
    let toy = Toy::new();
    toy.prepare();
    fs::write(toy.path("far.tsv"), "a\tабвгде\nb\tвгдеаб\n").unwrap();
    let args = [
        "--config",
        "cfg.toml",
        "train",
        "--mode",
        "supervised",
        "--parallel",
        "far.tsv",
        "--out-dir",
        "run",
    ];
    assert_eq!(toy.code(&args), 3);
}

#[test]
fn each_restart_leaves_a_trace_and_one_model_is_kept() {
    let toy = Toy::new();
    toy.prepare();
    toy.ok(&[
        "--config",
        "cfg.toml",
        "train",
        "--train",
        "syn/latin.txt",
        "--out-dir",
        "run",
        "--restarts",
        "5",
    ]);
    let mut names: Vec<String> = fs::read_dir(toy.path("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "model.tsv",
            "trace.0.tsv",
            "trace.1.tsv",
            "trace.2.tsv",
            "trace.3.tsv",
            "trace.4.tsv",
            "train.log.jsonl"
        ]
    );
    let log = String::from_utf8(toy.read("run/train.log.jsonl")).unwrap();
    let events: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(events[0]["event"], "run");
    assert_eq!(events.iter().filter(|e| e["event"] == "restart").count(), 5);
    assert_eq!(
        events.iter().filter(|e| e["event"] == "selected").count(),
        1
    );
    assert_eq!(events.last().unwrap()["event"], "done");
    // Every batch event has a matching trace row.
    for r in 0..5 {
        let rows = String::from_utf8(toy.read(&format!("run/trace.{r}.tsv")))
            .unwrap()
            .lines()
            .count()
            - 1;
        let batches = events
            .iter()
            .filter(|e| e["event"] == "batch" && e["restart"] == r)
            .count();
        assert_eq!(rows, batches);
    }
}

#[test]
fn training_is_deterministic_and_the_log_appends() {
    let toy = Toy::new();
    toy.prepare();
    let args = [
        "--config",
        "cfg.toml",
        "--threads",
        "1",
        "train",
        "--train",
        "syn/latin.txt",
        "--out-dir",
        "run",
        "--seed",
        "3",
    ];
    toy.ok(&args);
    let (model, trace, log) = (
        toy.read("run/model.tsv"),
        toy.read("run/trace.0.tsv"),
        toy.read("run/train.log.jsonl"),
    );
    toy.ok(&args);
    assert_eq!(toy.read("run/model.tsv"), model);
    assert_eq!(toy.read("run/trace.0.tsv"), trace);
    assert_eq!(toy.read("run/train.log.jsonl"), [log.clone(), log].concat());
}

#[test]
fn model_files_round_trip_byte_for_byte() {
    let toy = Toy::new();
    toy.prepare();
    toy.ok(&[
        "--config",
        "cfg.toml",
        "train",
        "--train",
        "syn/latin.txt",
        "--out-dir",
        "run",
    ]);
    let saved = toy.read("run/model.tsv");
    let mut again = Vec::new();
    EmissionParams::read(&saved[..], "model")
        .unwrap()
        .write(&mut again)
        .unwrap();
    assert_eq!(again, saved);
}

#[test]
fn synthetic_cipher_is_recovered_end_to_end() {
    let toy = Toy::new();
    toy.prepare();
    toy.ok(&[
        "--config",
        "cfg.toml",
        "train",
        "--train",
        "syn/latin.txt",
        "--out-dir",
        "run",
        "--restarts",
        "2",
    ]);
    toy.ok(&[
        "--config",
        "cfg.toml",
        "decode",
        "--model",
        "run/model.tsv",
        "--input",
        "syn/latin.txt",
        "--output",
        "dec.txt",
    ]);
    let out = toy.ok(&[
        "eval",
        "--hyp",
        "dec.txt",
        "--ref",
        "syn/gold.txt",
        "--report",
        "report.tsv",
    ]);
    let summary = String::from_utf8(out.stderr).unwrap();
    let cer: f64 = summary
        .split_whitespace()
        .find_map(|f| f.strip_prefix("corpus_cer="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(cer < 0.05, "{summary}");
}

#[test]
fn identity_model_decodes_input_verbatim() {
    let toy = Toy::new();
    let alphabet = format!("{LATIN} ");
    fs::write(
        toy.path("latin.toml"),
        format!("source_alphabet = \"{alphabet}\"\nlatin_alphabet = \"{alphabet}\"\n[train]\ndelay = 2\n"),
    )
    .unwrap();
    let text: String = String::from_utf8(toy.read("orig.txt"))
        .unwrap()
        .chars()
        .map(|c| {
            SOURCE
                .chars()
                .position(|o| o == c)
                .map_or(c, |i| LATIN.chars().nth(i).unwrap())
        })
        .collect();
    fs::write(toy.path("latin_corpus.txt"), text).unwrap();
    toy.ok(&[
        "--config",
        "latin.toml",
        "train-lm",
        "--corpus",
        "latin_corpus.txt",
        "--orders",
        "3",
        "--out-dir",
        "lm",
    ]);
    let symbols: Vec<char> = alphabet.chars().collect();
    let table = Arc::new(OpTable::new(&symbols, &symbols, None));
    let probs = table
        .ops()
        .iter()
        .map(|op| match *op {
            EditOp::Sub(o, l) if o == l => 1.0,
            EditOp::NoInsert => 1.0,
            _ => 0.0,
        })
        .collect();
    let params = EmissionParams::from_probs(table, probs).unwrap();
    let mut model = Vec::new();
    params.write(&mut model).unwrap();
    fs::write(toy.path("identity.tsv"), model).unwrap();
    fs::write(toy.path("in.txt"), "ab vg\nde\neee aab\n").unwrap();
    let out = toy.ok(&[
        "--config",
        "latin.toml",
        "decode",
        "--model",
        "identity.tsv",
        "--lm",
        "lm/lm.3.txt",
        "--input",
        "in.txt",
    ]);
    // Runs of three squash to two during preprocessing.
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        "ab vg\nde\nee aab\n"
    );
}

#[test]
fn eval_of_identical_files_is_perfect_and_consistent() {
    let toy = Toy::new();
    let out = toy.ok(&[
        "eval",
        "--hyp",
        "orig.txt",
        "--ref",
        "orig.txt",
        "--confusion",
        "conf.tsv",
    ]);
    let report = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    let summary = lines.last().unwrap();
    assert!(
        summary.starts_with("# corpus_cer=0.000000 distance=0 "),
        "{summary}"
    );
    let (mut distance, mut chars) = (0usize, 0usize);
    for row in &lines[1..lines.len() - 1] {
        let cols: Vec<&str> = row.split('\t').collect();
        distance += cols[3].parse::<usize>().unwrap();
        chars += cols[2].chars().count();
    }
    assert_eq!(distance, 0);
    assert!(summary.contains(&format!("ref_chars={chars} ")));
    assert!(toy.path("conf.tsv").exists());
}

#[test]
fn eval_totals_match_the_rows() {
    let toy = Toy::new();
    fs::write(toy.path("hyp.txt"), "абв\n\nгде\n").unwrap();
    // The last reference squashes to four characters.
    fs::write(toy.path("ref.txt"), "абг\nде\nгдеее\n").unwrap();
    let report = String::from_utf8(
        toy.ok(&["eval", "--hyp", "hyp.txt", "--ref", "ref.txt"])
            .stdout,
    )
    .unwrap();
    assert!(
        report.contains("\n# corpus_cer=0.444444 distance=4 ref_chars=9 sentences=3 "),
        "{report}"
    );
}

#[test]
fn data_errors_exit_with_two() {
    let toy = Toy::new();
    fs::write(toy.path("short.txt"), "аб\n").unwrap();
    assert_eq!(
        toy.code(&["eval", "--hyp", "short.txt", "--ref", "orig.txt"]),
        2
    );
    fs::write(toy.path("empty.txt"), "\n\n").unwrap();
    assert_eq!(
        toy.code(&["eval", "--hyp", "empty.txt", "--ref", "empty.txt"]),
        2
    );
    fs::write(toy.path("junk.txt"), "order\t3\nnot a model line\n").unwrap();
    assert_eq!(toy.code(&["inspect-model", "--lm", "junk.txt"]), 2);
    assert_eq!(
        toy.code(&[
            "--config",
            "cfg.toml",
            "train-lm",
            "--corpus",
            "empty.txt",
            "--out-dir",
            "lm"
        ]),
        2
    );
}

#[test]
fn inspect_summarizes_both_model_kinds() {
    let toy = Toy::new();
    toy.prepare();
    let lm = String::from_utf8(toy.ok(&["inspect-model", "--lm", "lm/lm.2.txt"]).stdout).unwrap();
    assert!(lm.starts_with("order\t2\n"));
    toy.ok(&[
        "--config",
        "cfg.toml",
        "train",
        "--train",
        "syn/latin.txt",
        "--out-dir",
        "run",
    ]);
    let model = String::from_utf8(
        toy.ok(&["inspect-model", "--model", "run/model.tsv", "--top", "1"])
            .stdout,
    )
    .unwrap();
    assert!(model.contains("\nа\ta:"), "{model}");
}
