use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = "\
# small world for fast runs
world.grid_w = 12
world.grid_h = 12
world.img_w = 8
world.img_h = 8
world.blobs = 4
encoder.latent = 4
encoder.epochs = 2
loop.iterations = 48
loop.eval_every = 16
loop.testset_size = 10
memory.batches = 1
";

fn curio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_curio")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = curio(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn config(dir: &Path, extra: &str) -> String {
    let path = dir.join("tiny.txt");
    std::fs::write(&path, format!("{TINY}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

#[test]
fn run_writes_all_logs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(&["run", "--config", &cfg, "--seed", "3", "--out", out.to_str().unwrap()]);
    }
    for f in ["explore.csv", "mse.csv", "goals.csv", "lp.csv", "memory.csv", "config.txt", "forward.nn", "inverse.nn"] {
        assert_eq!(read(&a, f), read(&b, f), "{f} differs");
    }
    let explore = String::from_utf8(read(&a, "explore.csv")).unwrap();
    assert!(explore.starts_with("iteration,goal_id,was_random,cmd_x,cmd_y,exec_x,exec_y,pe,lp_selected\n"));
    assert_eq!(explore.lines().count(), 49);
    let mse = String::from_utf8(read(&a, "mse.csv")).unwrap();
    assert_eq!(mse.lines().count(), 1 + 48 / 16);
    let lp = String::from_utf8(read(&a, "lp.csv")).unwrap();
    assert!(lp.starts_with("iteration,selected_goal,lp_0,"));
    let memory = String::from_utf8(read(&a, "memory.csv")).unwrap();
    assert!(memory.starts_with("iteration,occupancy,replaced_count,forced,diversity\n"));
    assert!(String::from_utf8(read(&a, "config.txt")).unwrap().contains("loop.seed = 3"));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let out = tmp.path().join("r");
    ok(&[
        "run", "--config", &cfg, "--iterations", "32", "--mem-batches", "0", "--p-em", "0.01", "--out",
        out.to_str().unwrap(),
    ]);
    let snapshot = String::from_utf8(read(&out, "config.txt")).unwrap();
    assert!(snapshot.contains("loop.iterations = 32"));
    assert!(snapshot.contains("memory.batches = 0"));
    assert!(snapshot.contains("memory.p_em = 0.01"));
    let memory = String::from_utf8(read(&out, "memory.csv")).unwrap();
    assert!(memory.lines().skip(1).all(|l| l.split(',').nth(1) == Some("0")));
}

#[test]
fn grid_is_independent_of_parallelism_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "grid.mem_batches = 0, 1\ngrid.p_em = 0.1\n");
    let one = tmp.path().join("p1");
    let three = tmp.path().join("p3");
    ok(&["grid", "--config", &cfg, "--runs", "2", "--parallelism", "1", "--out", one.to_str().unwrap()]);
    ok(&["grid", "--config", &cfg, "--runs", "2", "--parallelism", "3", "--out", three.to_str().unwrap()]);
    for f in ["aggregate/summary.csv", "aggregate/mem0_pem0.1.csv", "aggregate/mem1_pem0.1.csv", "mem1_pem0.1/run1/explore.csv"] {
        assert_eq!(read(&one, f), read(&three, f), "{f} differs");
    }

    let rep = tmp.path().join("report");
    let rep2 = tmp.path().join("report2");
    let stdout = ok(&["report", "--in", one.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert!(stdout.contains("4 runs"));
    ok(&["report", "--in", one.to_str().unwrap(), "--out", rep2.to_str().unwrap()]);
    let mut svgs = 0;
    for entry in std::fs::read_dir(&rep).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        assert_eq!(read(&rep, &name), read(&rep2, &name), "{name} not reproducible");
        if name.ends_with(".svg") {
            svgs += 1;
            assert!(rep.join(name.replace(".svg", ".csv")).is_file(), "{name} has no csv");
        }
    }
    // 2 cells x 2 metrics, 2 comparisons, 4 runs x 3 charts
    assert_eq!(svgs, 4 + 2 + 12);
    let compare = std::fs::read_to_string(rep.join("compare_fwd_mse.svg")).unwrap();
    assert_eq!(compare.matches("fill-opacity=\"0.2\"").count(), 2);
}

#[test]
fn pretrain_writes_loadable_encoder() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "");
    let out = tmp.path().join("enc");
    ok(&["pretrain", "--config", &cfg, "--world-seed", "4", "--epochs", "3", "--latent", "4", "--out", out.to_str().unwrap()]);
    for f in ["world.bin", "encoder.nn", "decoder.nn", "autoencoder.txt", "pretrain.txt"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert_eq!(&read(&out, "world.bin")[..9], b"CURIOWLD1");
    assert_eq!(&read(&out, "encoder.nn")[..8], b"CURIONN1");
    let run_out = tmp.path().join("run");
    let cfg2 = config(
        tmp.path(),
        &format!("encoder.path = {}\nworld.dataset = {}\n", out.display(), out.join("world.bin").display()),
    );
    ok(&["run", "--config", &cfg2, "--out", run_out.to_str().unwrap()]);
    assert!(run_out.join("mse.csv").is_file());
}

#[test]
fn gradcheck_passes() {
    let stdout = ok(&["gradcheck", "--latent", "8"]);
    assert!(stdout.contains("latent 8"));
}

#[test]
fn errors_exit_nonzero_with_message() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "loop.iteratons = 5\n").unwrap();
    let out = curio(&["run", "--config", bad.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("loop.iteratons"));
    let out = curio(&["run", "--config", tmp.path().join("missing.txt").to_str().unwrap(), "--out", "x"]);
    assert!(!out.status.success());
    let out = curio(&["report", "--in", tmp.path().to_str().unwrap(), "--out", tmp.path().join("r").to_str().unwrap()]);
    assert!(!out.status.success());
}
