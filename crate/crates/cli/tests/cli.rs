use std::path::Path;
use std::process::{Command, Output};

fn isac_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isac-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn frame_round_trip() {
    let enc = isac_sim(&["frame", "encode", "--user-id", "0x5A3C1", "--timestamp", "77"]);
    assert!(enc.status.success());
    let text = stdout(&enc);
    let hex = field(&text, "hex");
    assert_eq!(hex.len(), 10);
    assert!(hex.chars().all(|c| c.is_ascii_hexdigit()));

    let dec = isac_sim(&["frame", "decode", hex]);
    assert!(dec.status.success());
    let back = stdout(&dec);
    for key in ["user_id", "timestamp", "preamble"] {
        assert_eq!(field(&text, key), field(&back, key));
    }
    assert_eq!(field(&back, "crc"), "ok");
}

#[test]
fn response_frame_round_trip() {
    let enc = isac_sim(&["frame", "encode", "--response", "--user-id", "4242", "--permission", "--height", "18.3"]);
    assert!(enc.status.success());
    let text = stdout(&enc);
    let dec = isac_sim(&["frame", "decode", "--response", field(&text, "hex")]);
    let back = stdout(&dec);
    assert_eq!(field(&back, "height_m"), "18.3");
    assert_eq!(field(&back, "permission"), "true");
    assert_eq!(field(&back, "user_id"), field(&text, "user_id"));
}

#[test]
fn corrupted_frame_has_distinct_exit_code() {
    let text = stdout(&isac_sim(&["frame", "encode", "--user-id", "1"]));
    let hex = field(&text, "hex");
    let first = hex.chars().next().unwrap();
    let flipped = if first == '0' { '1' } else { '0' };
    let corrupted = format!("{flipped}{}", &hex[1..]);
    let o = isac_sim(&["frame", "decode", &corrupted]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("CRC"));

    assert_eq!(isac_sim(&["frame", "decode", "XYZ"]).status.code(), Some(2));
}

#[test]
fn usage_and_validation_exit_codes() {
    assert_eq!(isac_sim(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(isac_sim(&["localize", "--trials", "abc"]).status.code(), Some(1));
    assert_eq!(isac_sim(&["isac-sr", "--trials", "10", "--threshold-list", "0"]).status.code(), Some(2));
    assert_eq!(isac_sim(&["beam-pattern", "--resolution", "0"]).status.code(), Some(2));
    assert_eq!(isac_sim(&["ber", "--bits", "10"]).status.code(), Some(2));
    assert!(isac_sim(&["--help"]).status.success());
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "ris1_center = [0.0, 0.0, 0.0]\n").unwrap();
    let o = isac_sim(&["--config", path.to_str().unwrap(), "localize", "--trials", "10"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ris1_center"));

    let missing = isac_sim(&["--config", "/nonexistent/scenario.toml", "localize"]);
    assert_eq!(missing.status.code(), Some(2));
}

fn run_to_file(dir: &Path, name: &str, args: &[&str]) -> String {
    let out = dir.join(name);
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out", out.to_str().unwrap()]);
    let o = isac_sim(&full);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn sweeps_are_deterministic_and_have_stable_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 5] = [
        ("isac.csv", &["--seed", "3", "isac-sr", "--trials", "300", "--snr-list", "10,20"]),
        ("loc.csv", &["--seed", "3", "localize", "--trials", "300", "--snr-list", "20", "--threshold-list", "1.5"]),
        ("beam.csv", &["beam-pattern", "--resolution", "5"]),
        ("vis.csv", &["--seed", "3", "visibility", "--resolution", "5"]),
        ("ber.csv", &["--seed", "3", "ber", "--bits", "20000", "--snr-list", "0,2,4,6"]),
    ];
    for (name, args) in cases {
        let a = run_to_file(dir.path(), name, args);
        let b = run_to_file(dir.path(), &format!("again-{name}"), args);
        assert_eq!(a, b, "{name} differs between runs");
    }
    let header = |name: &str| {
        std::fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(
        header("isac.csv"),
        "snr_db,threshold_m,n_trials,sr_sens,sr_isac_sim,sr_isac_analytic,ber_sim,ber_theory,ci_low,ci_high"
    );
    assert_eq!(header("beam.csv"), "x,y,gain_db_wide,gain_db_directive");
    assert_eq!(header("vis.csv"), "x,y,rx_power_dbm");
    assert_eq!(
        header("ber.csv"),
        "scheme,ebn0_db,gamma,bits,errors,ber_sim,ber_theory_published,ber_theory_standard"
    );
    assert!(header("loc.csv").starts_with("snr_db,n_trials,threshold_m,sr_sens"));
}

#[test]
fn ber_curve_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_to_file(
        dir.path(),
        "ber.csv",
        &["ber", "--scheme", "bpsk", "--bits", "200000", "--snr-list", "0,2,4,6,8"],
    );
    let ber: Vec<f64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(5).unwrap().parse().unwrap())
        .collect();
    assert_eq!(ber.len(), 5);
    assert!(ber.windows(2).all(|w| w[1] < w[0]), "{ber:?}");
}

#[test]
fn isac_sr_meets_twenty_db_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = run_to_file(
        dir.path(),
        "isac.csv",
        &["isac-sr", "--trials", "5000", "--snr-list", "20", "--threshold-list", "1.5"],
    );
    let row: Vec<f64> = csv.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(row[3] > 0.98, "sr_sens {}", row[3]);
}
