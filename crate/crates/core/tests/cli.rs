use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_foldtree");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Two noisy Gaussian classes plus a categorical column.
fn write_training_csv(path: &Path) {
    let mut s = String::from("a,b,colour,y\n");
    for i in 0..200 {
        let cls = i % 2;
        let a = (i as f64 * 0.37).sin() + 2.0 * cls as f64;
        let b = (i as f64 * 1.13).cos();
        let colour = ["red", "green", "blue"][i % 3];
        let a = if i % 17 == 0 { "NA".to_string() } else { format!("{a}") };
        s += &format!("{a},{b},{colour},{}\n", if cls == 1 { "yes" } else { "no" });
    }
    std::fs::write(path, s).unwrap();
}

fn p(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

#[test]
fn train_then_predict_reproduces_training_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model, out) = (p(&dir, "train.csv"), p(&dir, "m.json"), p(&dir, "pred.csv"));
    write_training_csv(Path::new(&data));

    let t = run(&["train", "--data", &data, "--target", "y", "--method", "foldtree", "--seed", "7", "--out", &model]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let text = stdout(&t);
    for key in ["leaves:", "depth:", "training accuracy:", "splits:"] {
        assert!(text.contains(key), "missing {key} in {text}");
    }
    let train_acc: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("training accuracy:"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();

    let pr = run(&["predict", "--model", &model, "--data", &data, "--out", &out, "--probs"]);
    assert!(pr.status.success(), "{}", String::from_utf8_lossy(&pr.stderr));
    let acc: f64 = stdout(&pr)
        .lines()
        .find_map(|l| l.strip_prefix("accuracy:"))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((acc - train_acc).abs() < 1e-6, "{acc} vs {train_acc}");

    let mut rdr = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["predicted_y", "prob_no", "prob_yes"]);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let sum: f64 = rec.iter().skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-10);
        assert!(["no", "yes"].contains(&&rec[0]));
        rows += 1;
    }
    assert_eq!(rows, 200);
}

#[test]
fn training_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(&dir, "train.csv");
    write_training_csv(Path::new(&data));
    let models: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let m = p(&dir, &format!("m{i}.json"));
            let o = run(&["train", "--data", &data, "--target", "y", "--seed", "3", "--out", &m]);
            assert!(o.status.success());
            std::fs::read(m).unwrap()
        })
        .collect();
    assert_eq!(models[0], models[1]);
}

#[test]
fn imputation_policies_coincide_without_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(&dir, "train.csv");
    write_training_csv(Path::new(&data));
    let complete = std::fs::read_to_string(&data).unwrap().replace("NA,", "0.5,");
    std::fs::write(&data, complete).unwrap();
    let read = |policy: &str| {
        let m = p(&dir, &format!("{policy}.json"));
        let o = run(&["train", "--data", &data, "--target", "y", "--imputation", policy, "--out", &m]);
        assert!(o.status.success());
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(m).unwrap()).unwrap();
        v["nodes"].clone()
    };
    assert_eq!(read("node"), read("root"));
}

#[test]
fn unseen_level_still_predicts() {
    let dir = tempfile::tempdir().unwrap();
    let (data, model, test, out) = (p(&dir, "train.csv"), p(&dir, "m.json"), p(&dir, "test.csv"), p(&dir, "o.csv"));
    write_training_csv(Path::new(&data));
    assert!(run(&["train", "--data", &data, "--target", "y", "--out", &model]).status.success());
    std::fs::write(&test, "a,b,colour\n0.1,0.2,purple\n2.5,-0.3,red\n,0.0,\n").unwrap();
    let o = run(&["predict", "--model", &model, "--data", &test, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 4);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(&dir, "train.csv");
    write_training_csv(Path::new(&data));
    let m = p(&dir, "m.json");

    assert_eq!(run(&["bench", "nosuch"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--data", &data]).status.code(), Some(2));
    assert_eq!(
        run(&["train", "--data", &data, "--target", "y", "--prestop-p", "1.5", "--out", &m]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&["train", "--data", &p(&dir, "absent.csv"), "--target", "y", "--out", &m]).status.code(),
        Some(4)
    );
    assert_eq!(
        run(&["train", "--data", &data, "--target", "nope", "--out", &m]).status.code(),
        Some(3)
    );

    assert!(run(&["train", "--data", &data, "--target", "y", "--out", &m]).status.success());
    let text = std::fs::read_to_string(&m).unwrap().replace("\"version\":1", "\"version\":2");
    let bad = p(&dir, "bad.json");
    std::fs::write(&bad, text).unwrap();
    let o = run(&["predict", "--model", &bad, "--data", &data, "--out", &p(&dir, "o.csv")]);
    assert_eq!(o.status.code(), Some(3));

    let wrong = p(&dir, "wrong.csv");
    std::fs::write(&wrong, "a,c,colour\n1,2,red\n").unwrap();
    let o = run(&["predict", "--model", &m, "--data", &wrong, "--out", &p(&dir, "o.csv")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains('b'));
}

#[test]
fn bench_reports_requested_methods() {
    let o = run(&["bench", "split_strength_demo", "--methods", "ldatree,foldtree,plurality", "--cv", "5", "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for m in ["ldatree", "foldtree", "plurality"] {
        assert!(text.lines().any(|l| l.starts_with(m)), "{text}");
    }
    assert!(!text.contains("axis_gini"));

    let o = run(&["bench", "dominant_class", "--methods", "plurality", "--json", "--seed", "2"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["results"].as_array().unwrap().len(), 1);
}

#[test]
fn bench_dump_is_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let dump = p(&dir, "d.csv");
    let o = run(&["bench", "dominant_class", "--methods", "plurality", "--dump-csv", &dump]);
    assert!(o.status.success());
    let m = p(&dir, "m.json");
    let t = run(&["train", "--data", &dump, "--target", "y", "--stopping", "prestop", "--out", &m]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
}
