use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use cumstream::copula::{GenConfig, StreamGenerator};
use cumstream::data::DataBatch;
use cumstream::stream::{run, StreamConfig};
use cumstream::symten::SymTensor;
use cumstream_cli::csvio::CsvBatches;
use cumstream_cli::datagen::write_stream;
use cumstream_cli::process::{dump_file_name, process_stream, CumulantDump};

fn cumstream(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_cumstream"))
        .args(args)
        .env("CUMSTREAM_WORKERS", "1")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let mut input = child.stdin.take().unwrap();
        if let Some(text) = stdin {
            input.write_all(text.as_bytes()).unwrap();
        }
    }
    child.wait_with_output().unwrap()
}

fn schema() -> jsonschema::Validator {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

#[test]
fn toy_csv_from_stdin() {
    let out = cumstream(&["process", "--n", "1", "-d", "2", "--window", "4", "--update", "2"], Some("1\n2\n3\n4\n5\n6\n"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["norm_c1"], 2.5);
    assert_eq!(lines[0]["norm_c2"], 1.25);
    assert_eq!(lines[1]["norm_c1"], 4.5);
    assert_eq!(lines[1]["norm_c2"], 1.25);
}

#[test]
fn exit_codes() {
    let usage = cumstream(&["process", "--n", "1", "--window", "4", "--update", "5"], Some(""));
    assert_eq!(usage.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&usage.stderr).contains("usage error"));
    assert_eq!(cumstream(&["process", "--window", "4"], None).status.code(), Some(1));
    assert_eq!(cumstream(&["frobnicate"], None).status.code(), Some(1));
    assert_eq!(cumstream(&["--help"], None).status.code(), Some(0));

    let bad = cumstream(&["process", "--n", "2", "--window", "2", "--update", "1"], Some("1,2\n3\n"));
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
    let missing = cumstream(&["process", "--n", "1", "--window", "2", "--update", "1", "--input", "/nonexistent/x.csv"], None);
    assert_eq!(missing.status.code(), Some(2));
    let short = cumstream(&["process", "--n", "1", "--window", "4", "--update", "1"], Some("1\n2\n"));
    assert_eq!(short.status.code(), Some(2));
}

#[test]
fn workers_variable_must_be_a_count() {
    let out = Command::new(env!("CARGO_BIN_EXE_cumstream"))
        .args(["process", "--n", "1", "--window", "2", "--update", "1"])
        .env("CUMSTREAM_WORKERS", "many")
        .stdin(Stdio::null())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn datagen_writes_expected_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = cumstream(
            &["datagen", "--n", "3", "--window", "50", "--update", "10", "--windows", "4", "--seed", "9", "--output", path.to_str().unwrap()],
            None,
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        path
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 50 + 3 * 10);
    assert!(text.lines().all(|l| l.split(',').count() == 3));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let sidecar: GenConfig = serde_json::from_str(&std::fs::read_to_string(a.with_extension("config.json")).unwrap()).unwrap();
    assert_eq!((sidecar.n, sidecar.t, sidecar.t_up, sidecar.w_max, sidecar.seed), (3, 50, 10, 4, 9));
    assert_eq!(sidecar.copula_dof, 10.0);

    let missing_seed = cumstream(&["datagen", "--n", "3", "--window", "50", "--update", "10", "--windows", "4", "--output", "x.csv"], None);
    assert_eq!(missing_seed.status.code(), Some(1));
}

#[test]
fn reports_parse_against_schema_and_dumps_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("s.csv");
    let generator = StreamGenerator::new(GenConfig::new(3, 200, 50, 4, 1)).unwrap();
    write_stream(&generator, &csv, true).unwrap();
    let reports = dir.path().join("r.jsonl");
    let dumps = dir.path().join("dumps");
    let manifest = dir.path().join("m.json");
    let out = cumstream(
        &[
            "process", "--input", csv.to_str().unwrap(), "--header", "--n", "3", "-d", "4", "--window", "200", "--update", "50",
            "--block", "2", "--output", reports.to_str().unwrap(), "--dump-cumulants", dumps.to_str().unwrap(),
            "--manifest", manifest.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let validator = schema();
    let text = std::fs::read_to_string(&reports).unwrap();
    assert_eq!(text.lines().count(), 4);
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(validator.is_valid(&v), "{line}");
    }
    assert!(!validator.is_valid(&serde_json::json!({"window_index": 1})));

    let dump: CumulantDump = serde_json::from_str(&std::fs::read_to_string(dumps.join(dump_file_name(4))).unwrap()).unwrap();
    assert_eq!(dump.window_index, 4);
    let tensors: Vec<SymTensor> = dump.tensors.iter().map(|d| SymTensor::from_dump(d).unwrap()).collect();
    let window = {
        let all = CsvBatches::new(std::fs::File::open(&csv).unwrap(), true, 3, 350, 1).next().unwrap().unwrap();
        all.slice_rows(150, 350).unwrap()
    };
    let want = cumstream::cumulants::cumulant_series(&window, 4, 2).unwrap();
    for (a, b) in tensors.iter().zip(want.tensors()) {
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }

    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(m["windows"], 4);
    assert_eq!(m["rows_processed"], 350);
    assert_eq!(m["workers"], 1);
    assert_eq!(m["timings"].as_array().unwrap().len(), 4);
    assert!(m["frequency_hz"].as_f64().unwrap().is_finite());
}

#[test]
fn process_matches_library_run() {
    let generator = StreamGenerator::new(GenConfig::new(4, 300, 60, 6, 2)).unwrap();
    let batches: Vec<DataBatch> = generator.experiment_stream().collect();
    let mut csv = Vec::new();
    {
        let mut sink = cumstream_cli::csvio::CsvSink::new(&mut csv, None).unwrap();
        for b in &batches {
            sink.write_batch(b).unwrap();
        }
        sink.finish().unwrap();
    }
    let cfg = StreamConfig::new(4, 4, 300, 60, 3).unwrap();
    let mut via_cli = Vec::new();
    process_stream(cfg, csv.as_slice(), false, &mut via_cli, None).unwrap();
    let mut via_lib = String::new();
    run(cfg, batches.into_iter().map(Ok::<_, String>), |r, _| {
        via_lib.push_str(&r.to_json_line());
        via_lib.push('\n');
        Ok(())
    })
    .unwrap();
    assert_eq!(String::from_utf8(via_cli).unwrap(), via_lib);
}

#[test]
fn copula_stream_raises_nu4_until_window_is_replaced() {
    // 20 updates replace the Gaussian window completely
    let (n, t, t_up, w_max) = (8, 20_000, 1_000, 31);
    let generator = StreamGenerator::new(GenConfig::new(n, t, t_up, w_max, 5)).unwrap();
    let cfg = StreamConfig::new(n, 4, t, t_up, 2).unwrap();
    let mut nu4 = Vec::new();
    run(cfg, generator.experiment_stream().map(Ok::<_, String>), |r, _| {
        nu4.push(r.nu[&4]);
        Ok(())
    })
    .unwrap();
    assert_eq!(nu4.len(), w_max);
    let noise = nu4[0];
    for w in 5..=20 {
        assert!(nu4[w] + 2.0 * noise > nu4[w - 5], "window {}: {:?}", w + 1, &nu4[..=w]);
    }
    assert!(nu4[20] > 3.0 * noise, "{nu4:?}");
    let plateau = &nu4[20..];
    let mean = plateau.iter().sum::<f64>() / plateau.len() as f64;
    assert!(plateau.iter().all(|v| (v - mean).abs() < 2.0 * noise), "{plateau:?}");
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let generator = StreamGenerator::new(GenConfig::new(7, 2_000, 200, 5, 3)).unwrap();
    let mut csv = Vec::new();
    {
        let mut sink = cumstream_cli::csvio::CsvSink::new(&mut csv, None).unwrap();
        for b in generator.experiment_stream() {
            sink.write_batch(&b).unwrap();
        }
        sink.finish().unwrap();
    }
    let cfg = StreamConfig::new(7, 4, 2_000, 200, 3).unwrap();
    let reports = |workers| {
        cumstream_cli::with_workers(workers, || {
            let mut out = Vec::new();
            process_stream(cfg, csv.as_slice(), false, &mut out, None).unwrap();
            out
        })
        .unwrap()
    };
    assert_eq!(reports(1), reports(4));
}
