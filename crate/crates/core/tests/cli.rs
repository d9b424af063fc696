use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn webcolor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_webcolor"))
        .args(args)
        .env_remove("WEBCOLOR_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) {
    let out = webcolor(args);
    assert!(
        out.status.success(),
        "webcolor {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    names
}

#[test]
fn corpus_train_generate_evaluate() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    ok(&["gen-corpus", "--out", &p("corpus"), "--pages", "50", "--max-elements", "15", "--seed", "1"]);
    let test_pages = json_files(&tmp.path().join("corpus/test"));
    assert_eq!(test_pages.len(), 5);

    ok(&[
        "train", "--model", "cvae", "--corpus", &p("corpus"), "--out", &p("cvae.ckpt"), "--iters", "3", "--batch",
        "4", "--preset", "toy", "--log", &p("train.jsonl"), "-q",
    ]);
    let log = fs::read_to_string(tmp.path().join("train.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);

    ok(&[
        "generate", "--ckpt", &p("cvae.ckpt"), "--pages", &p("corpus/test"), "--out", &p("many"), "--strategy",
        "prior", "--variations", "20", "--select", "3",
    ]);
    assert_eq!(json_files(&tmp.path().join("many")).len(), 3 * test_pages.len());
    ok(&["render", "--pages", &p("many"), "--out", &p("many_png")]);
    assert_eq!(fs::read_dir(tmp.path().join("many_png")).unwrap().count(), 3 * test_pages.len());

    ok(&["generate", "--ckpt", &p("cvae.ckpt"), "--pages", &p("corpus/test"), "--out", &p("gen")]);
    assert_eq!(json_files(&tmp.path().join("gen")), test_pages);

    ok(&["evaluate", "--pred-dir", &p("gen"), "--gt-dir", &p("corpus/test"), "--out", &p("report.json")]);
    let report = fs::read_to_string(tmp.path().join("report.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&report).unwrap();
    for group in ["accuracy", "macro_f", "fcd", "contrast"] {
        assert!(value.get(group).is_some(), "missing {group} in {report}");
    }
    let order: Vec<usize> = ["\"accuracy\"", "\"macro_f\"", "\"fcd\"", "\"contrast\""]
        .iter()
        .map(|k| report.find(k).unwrap())
        .collect();
    assert!(order.windows(2).all(|w| w[0] < w[1]), "{report}");
}

#[test]
fn stats_render_and_audit() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    ok(&["gen-corpus", "--out", &p("corpus"), "--pages", "20", "--max-elements", "10", "--seed", "2"]);
    ok(&["stats", "--fit", "--corpus", &p("corpus"), "--table", &p("table.json")]);
    ok(&["stats", "--mode", "--table", &p("table.json"), "--pages", &p("corpus/test"), "--out", &p("mode")]);
    ok(&["stats", "--sample", "--table", &p("table.json"), "--pages", &p("corpus/test"), "--out", &p("sample")]);
    let n = json_files(&tmp.path().join("corpus/test")).len();
    assert_eq!(json_files(&tmp.path().join("mode")).len(), n);
    assert_eq!(json_files(&tmp.path().join("sample")).len(), n);

    ok(&["render", "--pages", &p("corpus/test"), "--out", &p("png")]);
    let pngs = fs::read_dir(tmp.path().join("png")).unwrap().count();
    assert_eq!(pngs, n);

    ok(&["audit", "--pages", &p("corpus/test"), "--out", &p("audit.json")]);
    let audit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("audit.json")).unwrap()).unwrap();
    assert_eq!(audit["pages"].as_array().unwrap().len(), n);
}

#[test]
fn bad_invocations_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c").to_string_lossy().into_owned();
    assert_eq!(webcolor(&["gen-corpus", "--out", &out, "--grammar", "bogus"]).status.code(), Some(1));
    assert_eq!(webcolor(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(webcolor(&["--help"]).status.code(), Some(0));
    let missing = tmp.path().join("missing").to_string_lossy().into_owned();
    let code = webcolor(&["audit", "--pages", &missing, "--out", &out]).status.code();
    assert_eq!(code, Some(2));
}
