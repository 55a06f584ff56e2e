use std::path::Path;
use std::process::{Command, Output};

use rtr_core::harness::{EXIT_CONFIG, EXIT_OK};
use rtr_core::sim::{Bounds, Landmark, WorldModel};

fn rtr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtr")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Two landmark rows along a 20 m straight.
fn write_config(dir: &Path) -> String {
    let mut world = WorldModel::empty(Bounds {
        min: [-30.0, -30.0],
        max: [60.0, 30.0],
    });
    for i in 0..20 {
        for (k, y) in [-6.0, 7.0].iter().enumerate() {
            world.landmarks.push(Landmark {
                position: [-8.0 + 2.5 * i as f64 + k as f64, y + (i % 3) as f64 * 0.5],
                reflectivity: 0.8,
            });
        }
    }
    let world_path = dir.join("world.toml");
    std::fs::write(&world_path, world.to_toml_string()).unwrap();
    let cfg = format!(
        "world_file = {:?}\nwaypoints = [[0.0, 0.0], [20.0, 0.0]]\nideal_sensor = true\noutput_dir = {:?}\n",
        world_path.display().to_string(),
        dir.join("out").display().to_string()
    );
    let cfg_path = dir.join("run.toml");
    std::fs::write(&cfg_path, cfg).unwrap();
    cfg_path.display().to_string()
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(code(&rtr(&["--help"])), EXIT_OK);
}

#[test]
fn bad_configuration_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = rtr(&["teach", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_CONFIG, "{}", String::from_utf8_lossy(&out.stderr));
    let out = rtr(&["teach", "--scenario", "nowhere", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_CONFIG);
    assert_eq!(code(&rtr(&["report", dir.path().to_str().unwrap()])), EXIT_CONFIG);
    assert_eq!(code(&rtr(&["teach", "--bogus-flag"])), EXIT_CONFIG);
}

#[test]
fn teach_repeat_report_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = rtr(&["teach", "--config", &cfg]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    let out = rtr(&["repeat", "--config", &cfg]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stdout));
    let json = dir.path().join("table.json");
    let out = rtr(&["report", dir.path().join("out").to_str().unwrap(), "--json", json.to_str().unwrap()]);
    assert_eq!(code(&out), EXIT_OK);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().count() == 2 && text.contains("ideal"), "{text}");
    let table: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 1);
}
