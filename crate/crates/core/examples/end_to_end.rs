//! The whole file-based pipeline through the command-line entry point:
//! generate, search, resolve, evaluate both files and compare.

use std::path::Path;

fn tpas(args: &[&str]) {
    let argv: Vec<String> = std::iter::once("tpas").chain(args.iter().copied()).map(String::from).collect();
    let code = tpas::cli::run(&argv, &mut std::io::stdout(), &mut std::io::stderr());
    assert_eq!(code, 0, "{args:?}");
}

fn main() {
    let dir = std::env::temp_dir().join("tpas-end-to-end");
    let p = |name: &str| Path::new(&dir).join(name).to_string_lossy().into_owned();
    tpas(&["gen-synth", "--seed", "7", "--out", &p("data")]);
    tpas(&["validate", "--manifest", &p("data")]);
    tpas(&["search", "--manifest", &p("data"), "--k", "10", "--out", &p("ranked.tsv")]);
    tpas(&["resolve", "--input", &p("ranked.tsv"), "--out", &p("resolved.tsv"), "--audit", &p("audit.tsv")]);
    tpas(&["eval", "--ranked", &p("ranked.tsv"), "--manifest", &p("data"), "--ks", "1,5,10", "--out", &p("before.toml")]);
    tpas(&["eval", "--ranked", &p("resolved.tsv"), "--manifest", &p("data"), "--ks", "1,5,10", "--out", &p("after.toml")]);
    tpas(&["report", "--before", &p("before.toml"), "--after", &p("after.toml"), "--before-label", "top-k", "--after-label", "resolved"]);
}
