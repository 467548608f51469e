use std::path::Path;
use std::process::Command;

use jointpam::cli::Manifest;
use jointpam::data::{LongitudinalDataset, SurvivalDataset};
use jointpam::ped::AugmentedDataset;
use jointpam::sampler::ChainOutput;
use jointpam::simulate::TruthRecord;

fn jointpam(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_jointpam"))
        .args(args)
        .output()
        .expect("binary runs");
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn simulate_fit_summarize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    assert_eq!(jointpam(&["simulate", "--out", s(&data), "--seed", "4", "--setting", "3"]), 0);
    let surv = SurvivalDataset::read_csv(data.join("surv.csv")).unwrap();
    let long = LongitudinalDataset::read_csv(data.join("long.csv")).unwrap();
    assert_eq!(surv.len(), 200);
    long.check_against(&surv).unwrap();
    let truth = TruthRecord::read(data.join("truth.json")).unwrap();
    assert_eq!(truth.geo_predictor, "eta_l");
    assert!(long.covariates.get("region").is_some());

    let cfg = dir.path().join("model.cfg");
    std::fs::write(
        &cfg,
        "[eta_l]\nlinear(x_l1)\npspline(x_l2, knots=8)\nmrf(region, map=data/grid.gra)\n\
         [eta_ls]\nlinear(x_ls1)\nlinear(time)\nrandom_intercept()\n\
         [eta_s]\nbaseline_pspline(knots=8)\nlinear(x_s1)\n",
    )
    .unwrap();

    let ped = dir.path().join("ped");
    assert_eq!(jointpam(&["augment", "--config", s(&cfg), "--data", s(&data), "--out", s(&ped)]), 0);
    let aug = AugmentedDataset::read_csv(ped.join("ped.csv")).unwrap();
    for (i, (id, t, d)) in aug.collapse().into_iter().enumerate() {
        assert_eq!(id, surv.id[i]);
        assert!((t - surv.time[i]).abs() < 1e-10);
        assert_eq!(d, surv.delta[i]);
    }

    let fit = dir.path().join("fit");
    let args = [
        "fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&fit), "--iterations", "1000", "--burnin", "100",
        "--thin", "9", "--seed", "3",
    ];
    assert_eq!(jointpam(&args), 0);
    let draws = ChainOutput::read_draws_csv(fit.join("draws.csv")).unwrap();
    assert_eq!(draws.len(), 100);
    assert!(draws.index_of("alpha").is_some());
    let trace = csv_rows(&fit.join("trace.csv"));
    assert_eq!(trace.len(), 1000);
    let sidecars: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fit.join("acceptance.json")).unwrap()).unwrap();
    assert_eq!(sidecars[0]["seed"], 3);

    assert_eq!(
        jointpam(&["summarize", "--fit", s(&fit), "--truth", s(&data.join("truth.json"))]),
        0
    );
    let summary = csv_rows(&fit.join("summary.csv"));
    assert_eq!(summary.len(), draws.names.len());
    for row in &summary {
        let lo: f64 = row[2].parse().unwrap();
        let hi: f64 = row[3].parse().unwrap();
        assert!(lo <= hi);
    }
    let metrics = csv_rows(&fit.join("metrics.csv"));
    assert!(metrics.iter().any(|r| &r[0] == "alpha"));
    assert!(metrics.iter().any(|r| &r[0] == "l.mrf_region"));
    for r in &metrics {
        assert!(r[1].parse::<f64>().unwrap() >= 0.0);
    }

    // one manifest per output directory, listing what was written
    for d in [&data, &ped, &fit] {
        let m = Manifest::read(d.join("manifest.json")).unwrap();
        for f in &m.outputs {
            assert!(d.join(f).exists(), "{f} listed but missing");
        }
    }
    let m = Manifest::read(fit.join("manifest.json")).unwrap();
    assert_eq!(m.command, "summarize");
}

#[test]
fn identical_seeds_give_identical_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for d in [&a, &b] {
        assert_eq!(jointpam(&["simulate", "--out", s(d), "--seed", "9"]), 0);
    }
    for f in ["long.csv", "surv.csv", "truth.json", "grid.gra"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let mut ma = Manifest::read(a.join("manifest.json")).unwrap();
    let mut mb = Manifest::read(b.join("manifest.json")).unwrap();
    ma.elapsed_seconds = 0.0;
    mb.elapsed_seconds = 0.0;
    assert_eq!(ma, mb);
}

#[test]
fn benchmark_writes_rows_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim.toml");
    std::fs::write(&sim, "n = 40\n").unwrap();
    let out = dir.path().join("bench");
    let args = [
        "benchmark", "--config", s(&sim), "--setting", "1", "--replications", "2", "--workers", "1", "--out", s(&out),
        "--iterations", "300", "--burnin", "100", "--thin", "2",
    ];
    assert_eq!(jointpam(&args), 0);
    let rows = csv_rows(&out.join("metrics.csv"));
    assert!(rows.iter().all(|r| &r[0] == "1"));
    let alpha: Vec<_> = rows.iter().filter(|r| &r[2] == "alpha").collect();
    assert_eq!(alpha.len(), 2);
    let boxplot = csv_rows(&out.join("boxplot.csv"));
    assert!(boxplot.iter().any(|r| &r[2] == "coverage" && &r[3] == "ls.mrf_region"));
    for r in 0..2 {
        assert!(out.join(format!("rep{r:03}")).join("metrics.csv").exists());
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    // unknown flag
    assert_eq!(jointpam(&["fit", "--bogus"]), 2);
    // malformed simulation settings
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n = \"many\"\n").unwrap();
    assert_eq!(jointpam(&["simulate", "--config", s(&bad), "--out", s(&missing)]), 2);
    assert_eq!(jointpam(&["simulate", "--setting", "7", "--out", s(&missing)]), 2);
    // malformed model config
    let cfg = dir.path().join("model.cfg");
    std::fs::write(&cfg, "[eta_q]\nlinear(x)\n").unwrap();
    assert_eq!(jointpam(&["fit", "--config", s(&cfg), "--data", s(&missing), "--out", s(&missing)]), 2);
    // missing data files
    std::fs::write(&cfg, "[eta_s]\nbaseline_pspline()\n").unwrap();
    assert_eq!(jointpam(&["fit", "--config", s(&cfg), "--data", s(&missing), "--out", s(&missing)]), 3);
}
