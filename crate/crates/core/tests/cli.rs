use std::path::Path;
use std::process::{Command, Output};

fn pgtune(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pgtune"))
        .current_dir(dir)
        .env_remove("PGTUNE_CONFIG")
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

const SCENARIO: &str = "alpha_us=100\nbeta_us_per_byte=0.01\ngamma_us_per_byte=0\njitter_fraction=0\nnprocs=8\n\
collectives=allgather\nmsizes=1,100,10000\nnmpiruns=2\ndefault_alg.bcast=binomial\ndefault_alg.gather=binomial\n";

#[test]
fn full_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("scenario.conf"), SCENARIO).unwrap();

    let out = pgtune(
        d,
        &["--config", "scenario.conf", "bench", "-o", "bench.csv"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = pgtune(
        d,
        &["--config", "scenario.conf", "tune", "--input", "bench.csv"],
    );
    assert_eq!(code(&out), 0);
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(
        summary.contains("MPI_Allgather on 8 processes: 2 of 3 sizes violated"),
        "{summary}"
    );
    assert!(d.join("profiles/MPI_Allgather.8.profile").exists());

    let out = pgtune(d, &["--config", "scenario.conf", "run", "-o", "run.csv"]);
    assert_eq!(code(&out), 0);
    let run = std::fs::read_to_string(d.join("run.csv")).unwrap();
    assert!(run.contains("\n# MPI_Allgather 100 allgather_as_allreduce\n"));
    assert!(run.contains("\n# MPI_Allgather 10000 Default\n"));

    let out = pgtune(
        d,
        &[
            "report",
            "--default",
            "bench.csv",
            "--input",
            "run.csv",
            "-o",
            "report.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let report = std::fs::read_to_string(d.join("report.csv")).unwrap();
    assert!(report.starts_with("collective,msize,nprocs,function,source,relative,"));
    assert!(report.contains("MPI_Allgather,10000,8,MPI_Allgather,run.csv,1.000000,"));

    // Starved arenas: the allreduce mock-up no longer fits anywhere.
    let out = pgtune(
        d,
        &[
            "--config",
            "scenario.conf",
            "--set",
            "size_msg_buffer_bytes=0",
            "run",
        ],
    );
    assert_eq!(code(&out), 0);
    let run = String::from_utf8(out.stdout).unwrap();
    assert!(run.contains("\n# MPI_Allgather 100 Default\n"));
    assert!(run.contains("\n# msg_buffer_bytes=0\n"));
}

#[test]
fn pinned_modules_and_config_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("env.conf"), SCENARIO).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pgtune"))
        .current_dir(d)
        .env("PGTUNE_CONFIG", "env.conf")
        .args([
            "--set",
            "msizes=8",
            "bench",
            "--module=allgather:alg=allgather_as_gather_bcast",
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.contains("# nprocs=8\n"));
    let functions: std::collections::BTreeSet<&str> = csv
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("function,"))
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(
        functions.into_iter().collect::<Vec<_>>(),
        ["MPI_Allgather", "allgather_as_gather_bcast"]
    );
}

#[test]
fn report_against_itself_is_all_ones() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = pgtune(
        d,
        &[
            "--set",
            "nprocs=3",
            "--set",
            "collectives=reduce",
            "--set",
            "msizes=4,64",
            "bench",
            "-o",
            "b.csv",
        ],
    );
    assert_eq!(code(&out), 0);
    let out = pgtune(d, &["report", "--default", "b.csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text
        .lines()
        .skip(1)
        .filter(|l| l.contains(",MPI_Reduce,"))
        .collect();
    assert_eq!(rows.len(), 2);
    assert!(
        rows.iter().all(|r| r.split(',').nth(5) == Some("1.000000")),
        "{text}"
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let unknown_mockup = pgtune(d, &["bench", "--module=scatter:alg=nope"]);
    assert_eq!(code(&unknown_mockup), 2);
    let err = String::from_utf8(unknown_mockup.stderr).unwrap();
    assert!(
        err.contains("scatter_as_bcast, scatter_as_scatterv"),
        "{err}"
    );

    assert_eq!(
        code(&pgtune(
            d,
            &["bench", "--module=sactter:alg=scatter_as_bcast"]
        )),
        2
    );
    assert_eq!(code(&pgtune(d, &["--set", "colour=blue", "run"])), 2);
    assert_eq!(code(&pgtune(d, &["--config", "missing.conf", "run"])), 2);
    assert_eq!(code(&pgtune(d, &["frobnicate"])), 2);

    std::fs::write(
        d.join("bad.csv"),
        "function,msize_bytes,nprocs,mpirun_idx,rep_idx,latency_us\nMPI_Bcast,8,4,0,0,soon\n",
    )
    .unwrap();
    let out = pgtune(d, &["tune", "--input", "bad.csv"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("bad.csv: line 2"));

    std::fs::write(
        d.join("mock.csv"),
        "function,msize_bytes,nprocs,mpirun_idx,rep_idx,latency_us\nscatter_as_bcast,8,4,0,0,1.0\n",
    )
    .unwrap();
    assert_eq!(code(&pgtune(d, &["tune", "--input", "mock.csv"])), 3);
    std::fs::write(
        d.join("def.csv"),
        "function,msize_bytes,nprocs,mpirun_idx,rep_idx,latency_us\nMPI_Scatter,16,4,0,0,1.0\n",
    )
    .unwrap();
    assert_eq!(
        code(&pgtune(
            d,
            &["report", "--default", "def.csv", "--input", "mock.csv"]
        )),
        3
    );

    std::fs::write(d.join("none.csv"), "function,msize_bytes,nprocs,mpirun_idx,rep_idx,latency_us\nMPI_Scatter,8,4,0,0,1.0\nscatter_as_bcast,8,4,0,0,1.0\n").unwrap();
    let out = pgtune(d, &["tune", "--input", "none.csv"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "no violations\n");
    assert!(!d.join("profiles").exists());
}
