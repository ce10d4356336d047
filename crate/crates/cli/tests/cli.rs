use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sentiment_core::embedding::{separated_clusters, synthetic_store};

fn core_fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn sentiment(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sentiment")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = sentiment(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    sentiment(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_store(path: &Path, seed: u64, per_class: &[usize]) {
    let mut specs = separated_clusters(8, per_class.len(), 1, 8.0);
    for (spec, &n) in specs.iter_mut().zip(per_class) {
        spec.count = n;
    }
    synthetic_store(seed, 8, &specs).unwrap().write(path).unwrap();
}

#[test]
fn prepare_then_encode() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("prep");
    let stdout = ok(&[
        "prepare", "--dataset", "fixture", "--scheme", "three", "--in", s(&core_fixture("reviews.tsv")), "--out", s(&out),
        "--seed", "1",
    ]);
    assert!(stdout.contains("records.rejected = 2"), "{stdout}");
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert_eq!(manifest, stdout);
    assert!(manifest.contains("train.count = 12"));
    assert_eq!(fs::read_to_string(out.join("test.tsv")).unwrap().lines().count(), 7);

    let encoded = dir.path().join("encoded.tsv");
    ok(&[
        "encode", "--vocab", s(&core_fixture("vocab.txt")), "--max-len", "16", "--in", s(&out.join("train.tsv")), "--out",
        s(&encoded),
    ]);
    let text = fs::read_to_string(&encoded).unwrap();
    assert_eq!(text.lines().count(), 12);
    for line in text.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[2].split(' ').count(), 16);
        assert_eq!(fields[3].split(' ').count(), 16);
    }
}

#[test]
fn train_predict_aggregate_report() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.emb"), dir.path().join("test.emb"));
    write_store(&train, 1, &[400, 400]);
    write_store(&test, 2, &[30, 30]);
    let params = dir.path().join("head.params");
    let stdout = ok(&[
        "train", "--preset", "fine-grained", "--store", s(&train), "--out", s(&params), "--hidden", "16", "--seed", "3",
    ]);
    assert!(stdout.contains("train.epochs = 15"), "{stdout}");
    let labels = dir.path().join("labels.tsv");
    ok(&["predict", "--params", s(&params), "--store", s(&test), "--out", s(&labels)]);
    assert_eq!(fs::read_to_string(&labels).unwrap().lines().count(), 60);

    let agg = ok(&["aggregate", "--scheme", "binary", "--labels", s(&labels)]);
    assert!(agg.starts_with("verdict = Neutral\n"), "{agg}");
    assert!(agg.contains("total = 60"));
    let strict = ok(&["aggregate", "--scheme", "binary", "--labels", s(&labels), "--thresholds", "base=1.1"]);
    assert!(strict.contains("thresholds = neu=0.85,base=1.1,sub=1.5"), "{strict}");

    let kv = dir.path().join("report.kv");
    let text = ok(&["report", "--scheme", "binary", "--labels", s(&labels), "--out", s(&kv)]);
    assert!(text.contains("Original OP"), "{text}");
    let kv = fs::read_to_string(&kv).unwrap();
    assert!(kv.contains("total = 60"));
    let accuracy: f64 = kv.lines().find_map(|l| l.strip_prefix("accuracy = ")).unwrap().parse().unwrap();
    assert!(accuracy >= 95.0, "{kv}");
}

#[test]
fn balance_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("imbalanced.emb");
    write_store(&store, 4, &[12, 40]);
    let out = dir.path().join("balanced.emb");
    let stdout = ok(&["balance", "--method", "smote", "--in", s(&store), "--out", s(&out), "--seed", "2"]);
    assert!(stdout.contains("records.synthetic = 28"), "{stdout}");
    assert_eq!(sentiment_core::embedding::load_store(&out).unwrap().len(), 80);

    let reviews = dir.path().join("reviews.tsv");
    fs::write(&reviews, "a\t1\tA good story.\nb\t1\tGreat music.\nc\t1\tFunny film.\nd\t0\tA boring tale.\n").unwrap();
    let augmented = dir.path().join("augmented.tsv");
    let table = core_fixture("word_vectors.txt");
    let args = [
        "balance", "--method", "nlpaug", "--in", s(&reviews), "--out", s(&augmented), "--seed", "2", "--table",
        s(&table), "--rate", "1",
    ];
    ok(&args);
    let text = fs::read_to_string(&augmented).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("d~aug1\t0\tA dull account."), "{text}");
    assert!(text.contains("d~aug2\t0\t"));
    assert_eq!(code(&args[..args.len() - 4]), 1, "nlpaug without a table");
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.conf");
    fs::write(
        &config,
        "dataset.name = synthetic\nscheme = three\npreset = fine-grained\nseed = 9\nhead.hidden = 8\nhead.lr = 0.01\n\
         head.epochs = 6\nsynthetic.dim = 6\nsynthetic.per_class = 60\nsynthetic.test_per_class = 20\nsynthetic.separation = 8\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a.kv"), dir.path().join("b.kv"));
    let text_a = ok(&["run", "--config", s(&config), "--out", s(&a)]);
    let text_b = ok(&["run", "--config", s(&config), "--out", s(&b)]);
    assert_eq!(text_a, text_b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let kv = fs::read_to_string(&a).unwrap();
    assert!(kv.contains("original_op = Neutral\n") && kv.contains("computed_op = Neutral\n"), "{kv}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.emb");
    assert_eq!(code(&[]), 1);
    assert_eq!(code(&["train", "--store", "x"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["aggregate", "--scheme", "seven", "--labels", "x"]), 1);
    assert_eq!(code(&["train", "--preset", "huge", "--store", s(&missing), "--out", "p"]), 1);
    assert_eq!(code(&["train", "--preset", "binary", "--store", s(&missing), "--out", "p"]), 2);

    let labels = dir.path().join("labels.tsv");
    fs::write(&labels, "a\t0\nb\t1\n").unwrap();
    assert_eq!(code(&["aggregate", "--scheme", "binary", "--labels", s(&labels), "--thresholds", "base=0.5"]), 1);
    assert_eq!(code(&["report", "--scheme", "binary", "--labels", s(&labels)]), 1);
    fs::write(&labels, "a\t0\nb\t7\n").unwrap();
    assert_eq!(code(&["aggregate", "--scheme", "binary", "--labels", s(&labels)]), 2);

    let config = dir.path().join("bad.conf");
    fs::write(&config, "scheme = binary\nhead.layers = 2\n").unwrap();
    assert_eq!(code(&["run", "--config", s(&config)]), 1);
    fs::write(&config, "scheme = binary\nhead.epochs = 0\ndataset.source = store\nembedding.train = /nope\nembedding.test = /nope\n")
        .unwrap();
    assert_eq!(code(&["run", "--config", s(&config)]), 2);
}

#[test]
fn divergent_training_exits_with_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("diverge.conf");
    fs::write(
        &config,
        "scheme = binary\npreset = fine-grained\nhead.lr = 1e300\nhead.hidden = 4\nhead.epochs = 3\n\
         synthetic.dim = 4\nsynthetic.per_class = 20\nsynthetic.test_per_class = 5\nsynthetic.separation = 1e30\n",
    )
    .unwrap();
    assert_eq!(code(&["run", "--config", s(&config)]), 3);
}
