use std::process::Command;

fn mbansec(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mbansec")).args(args).output().expect("binary runs")
}

#[test]
fn exit_codes_from_the_binary() {
    assert_eq!(mbansec(&["vectors"]).status.code(), Some(0));
    let o = mbansec(&["bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(mbansec(&["simulate", "missing.scn"]).status.code(), Some(2));
    assert_eq!(mbansec(&["attack", "--help"]).status.code(), Some(0));
}

#[test]
fn simulate_output_is_byte_identical() {
    let a = mbansec(&["simulate", "pancreas.scn", "--profile", "baseline", "--seed", "7"]);
    let b = mbansec(&["simulate", "pancreas.scn", "--profile", "baseline", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}
