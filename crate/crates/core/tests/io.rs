use std::path::{Path, PathBuf};

use proptest::prelude::*;
use tempfile::TempDir;

use spice_core::io::{
    self, load_config, parse_features, parse_responses, read_csv, read_draws, read_manifest, read_truth,
    write_csv, CalibrationConfig,
};
use spice_core::model::ItemFamily;
use spice_core::simgen::{generate, SimBlock, SimSpec, WeightScheme};
use spice_core::Error;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn validation_message(r: Result<impl std::fmt::Debug, Error>) -> String {
    match r {
        Err(Error::Validation(m)) => m,
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn parses_a_small_file() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "r.csv", "person_id,item_id,response\np1,i1,1\np1,i2,0\np2,i1, 1\n");
    let parsed = parse_responses(&p).unwrap();
    assert_eq!(parsed.records.len(), 3);
    assert_eq!(parsed.person_ids, ["p1", "p2"]);
    assert_eq!(parsed.item_ids, ["i1", "i2"]);
    assert_eq!((parsed.records[2].person, parsed.records[2].item, parsed.records[2].value), (1, 0, 1.0));
    assert_eq!(parsed.person_weights, [1.0, 1.0]);
}

#[test]
fn weights_are_normalized_over_positive_entries() {
    let dir = TempDir::new().unwrap();
    let p = write(
        dir.path(),
        "r.csv",
        "person_id,item_id,response,weight\na,x,1,2\nb,x,0,0\nc,x,1,2\na,y,0,2\n",
    );
    assert_eq!(parse_responses(&p).unwrap().person_weights, [1.0, 0.0, 1.0]);
    let p = write(dir.path(), "s.csv", "person_id,item_id,response,weight\na,x,1,1\nb,x,0,3\n");
    assert_eq!(parse_responses(&p).unwrap().person_weights, [0.5, 1.5]);
}

#[test]
fn malformed_rows_are_reported_by_number() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("person_id,item_id,response\na,x,1\nb,x,0\na,x,1\n", "row 3"),
        ("person_id,item_id,response\na,x,1\nb,x,yes\n", "row 2"),
        ("person_id,item_id,response,weight\na,x,1,1\nb,x,0,-1\n", "row 2"),
        ("person_id,item_id,response,weight\na,x,1,1\na,y,0,2\n", "row 2"),
        ("person_id,item_id,response\na,,1\n", "row 1"),
    ];
    for (i, (text, row)) in cases.iter().enumerate() {
        let p = write(dir.path(), &format!("bad{i}.csv"), text);
        let msg = validation_message(parse_responses(&p));
        assert!(msg.contains(row), "case {i}: {msg}");
        assert!(msg.contains(&format!("bad{i}.csv")), "case {i}: {msg}");
    }
    let p = write(dir.path(), "nocol.csv", "person_id,item,response\na,x,1\n");
    assert!(validation_message(parse_responses(&p)).contains("item_id"));
    let p = write(dir.path(), "empty.csv", "person_id,item_id,response\n");
    validation_message(parse_responses(&p));
    assert!(matches!(parse_responses(&dir.path().join("absent.csv")), Err(Error::Io { .. })));
}

#[test]
fn features_are_aligned_and_checked() {
    let dir = TempDir::new().unwrap();
    let ids: Vec<String> = (0..5).map(|i| format!("i{i}")).collect();
    let (x, names) = parse_features(None, &ids, true).unwrap();
    assert_eq!((x.nrows(), x.ncols()), (5, 1));
    assert!(x.iter().all(|v| *v == 1.0));
    assert_eq!(names, ["intercept"]);

    // rows in a different order from the unit list
    let text = "id,x1,x2\ni4,4,0.5\ni0,0,1\ni1,1,0\ni2,2,-1\ni3,3,2\n";
    let p = write(dir.path(), "f.csv", text);
    let (x, names) = parse_features(Some(&p), &ids, true).unwrap();
    assert_eq!((x.nrows(), x.ncols()), (5, 3));
    assert_eq!(names, ["intercept", "x1", "x2"]);
    assert_eq!(x.row(4).iter().copied().collect::<Vec<_>>(), [1.0, 4.0, 0.5]);

    let dup = write(dir.path(), "dup.csv", "id,x1,x2\ni0,0,0\ni1,1,1\ni2,2,2\ni3,3,3\ni4,4,4\n");
    let msg = validation_message(parse_features(Some(&dup), &ids, true));
    assert!(msg.contains("x2"), "{msg}");
    let missing = write(dir.path(), "miss.csv", "id,x1\ni0,0\ni1,1\ni2,2\ni3,3\n");
    validation_message(parse_features(Some(&missing), &ids, true));
    let twice = write(dir.path(), "twice.csv", "id,x1\ni0,0\ni0,1\ni2,2\ni3,3\ni4,4\n");
    validation_message(parse_features(Some(&twice), &ids, true));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn parse_write_parse_round_trips(
        rows in proptest::collection::btree_map((0u8..12, 0u8..9), (-1e6f64..1e6, 0u8..2), 1..60),
        weighted in any::<bool>(),
    ) {
        let dir = TempDir::new().unwrap();
        // one weight per person
        let header: Vec<String> = ["person_id", "item_id", "response", "weight"].iter().map(|s| s.to_string()).collect();
        let header = if weighted { header } else { header[..3].to_vec() };
        let body = rows.iter().map(|(&(p, i), &(v, _))| {
            let mut r = vec![format!("p{p}"), format!("item {i}"), format!("{v}")];
            if weighted {
                r.push(format!("{}", 0.25 + p as f64));
            }
            r
        });
        let first = dir.path().join("a.csv");
        write_csv(&first, &header, body).unwrap();
        let a = parse_responses(&first).unwrap();

        let again = a.records.iter().map(|r| {
            let mut row = vec![a.person_ids[r.person].clone(), a.item_ids[r.item].clone(), format!("{}", r.value)];
            if weighted {
                row.push(format!("{}", a.person_weights[r.person]));
            }
            row
        });
        let second = dir.path().join("b.csv");
        write_csv(&second, &header, again).unwrap();
        let b = parse_responses(&second).unwrap();
        prop_assert_eq!(&a.records, &b.records);
        prop_assert_eq!(&a.person_ids, &b.person_ids);
        prop_assert_eq!(&a.item_ids, &b.item_ids);
        for (x, y) in a.person_weights.iter().zip(&b.person_weights) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for (r, (&(p, i), &(v, _))) in a.records.iter().zip(&rows) {
            prop_assert_eq!(&a.person_ids[r.person], &format!("p{p}"));
            prop_assert_eq!(&a.item_ids[r.item], &format!("item {i}"));
            prop_assert_eq!(r.value, v);
        }
    }
}

fn sim_spec() -> SimSpec {
    SimSpec {
        seed: 5,
        responses_per_person: 6,
        popularity_skew: 0.5,
        weights: WeightScheme::Uniform { low: 0.5, high: 1.5 },
        person_blocks: vec![SimBlock {
            b: Some(vec![vec![0.0]]),
            s: Some(vec![1.0]),
            fixed: true,
            ..SimBlock::person(0, 80, 1)
        }],
        item_blocks: vec![
            SimBlock {
                features: 1,
                ..SimBlock::items(1, 12, ItemFamily::TwoPl)
            },
            SimBlock::items(2, 6, ItemFamily::Gpcm(3)),
        ],
    }
}

fn simulated(dir: &Path) -> PathBuf {
    let spec = sim_spec();
    io::write_simulation(dir, &spec, &generate(&spec).unwrap()).unwrap();
    let path = dir.join("calibrate.toml");
    let mut config = CalibrationConfig::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap();
    config.sampler.m1 = 20;
    config.sampler.m2 = 40;
    config.sampler.m3 = 40;
    config.sampler.m4 = 100;
    config.sampler.thin = 10;
    config.sampler.chains = 2;
    config.sampler.seed = 77;
    std::fs::write(&path, config.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn simulated_data_calibrates_and_diagnoses() {
    let dir = TempDir::new().unwrap();
    let config = simulated(dir.path());
    let loaded = load_config(&config).unwrap();
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    assert_eq!(loaded.problem.item_blocks.len(), 2);
    let out = dir.path().join("run");
    let outcome = io::calibrate(&loaded, &out, &|_| {}).unwrap();

    let manifest = read_manifest(&out).unwrap();
    assert_eq!(manifest.seed, 77);
    assert_eq!(manifest.config, loaded.config);
    let names = outcome.output.layout.names().to_vec();
    assert_eq!(names.len(), loaded.problem.free_parameter_count());
    assert_eq!(manifest.parameters, names.len());
    for c in 0..2 {
        let draws = read_draws(&out.join(io::draws_file(c)), &names).unwrap();
        assert_eq!(draws.len(), 10);
        assert_eq!(draws, outcome.output.chains[c].draws);
    }
    assert!(read_draws(&out.join(io::draws_file(0)), &names[1..]).is_err());

    // every free parameter has a true value under the same name
    let truth = read_truth(&dir.path().join("truth.csv")).unwrap();
    for n in &names {
        assert!(truth.iter().any(|(t, _)| t == n), "{n} missing from truth");
    }

    let (header, rows) = read_csv(&out.join(io::SUMMARY)).unwrap();
    assert_eq!(header, ["parameter", "mean", "sd", "acceptance", "rhat"]);
    assert_eq!(rows.len(), names.len());
    let fit = io::read_fit(&out.join(io::FIT)).unwrap();
    assert_eq!(fit.waic, -2.0 * fit.elpd);
    assert!(fit.ppp.values().all(|p| (0.0..=1.0).contains(p)));
    assert!(fit.ppp.keys().any(|k| k.starts_with("low_score_item_mean")));

    io::diagnose(&out).unwrap();
    let original = std::fs::read(out.join(io::SUMMARY)).unwrap();
    let recomputed = std::fs::read(out.join(io::DIAGNOSE_DIR).join(io::SUMMARY)).unwrap();
    assert_eq!(original, recomputed);
    let ppc = std::fs::read(out.join(io::PPC)).unwrap();
    assert_eq!(ppc, std::fs::read(out.join(io::DIAGNOSE_DIR).join(io::PPC)).unwrap());
}

#[test]
fn config_round_trips_through_toml() {
    let dir = TempDir::new().unwrap();
    let path = simulated(dir.path());
    let config = CalibrationConfig::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let again = CalibrationConfig::from_toml(&config.to_toml().unwrap()).unwrap();
    assert_eq!(config, again);
    let bad = format!("{}\nunknown_key = 1\n", config.to_toml().unwrap());
    validation_message(CalibrationConfig::from_toml(&bad));
}

#[test]
fn free_person_scale_is_flagged() {
    let dir = TempDir::new().unwrap();
    let path = simulated(dir.path());
    let mut config = CalibrationConfig::from_toml(&std::fs::read_to_string(&path).unwrap()).unwrap();
    config.person_blocks[0].fixed.s.clear();
    let loaded = io::resolve(config, &path).unwrap();
    assert!(loaded.warnings.iter().any(|w| w.contains("not identified")));
}

#[test]
fn unwritable_output_is_caught_before_sampling() {
    let dir = TempDir::new().unwrap();
    let file = write(dir.path(), "plain", "x");
    assert!(matches!(io::preflight(&file.join("sub")), Err(Error::Io { .. })));
    io::preflight(&dir.path().join("new/nested")).unwrap();
}
