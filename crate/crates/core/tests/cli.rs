use std::process::{Command, Output};

fn fibrig(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fibrig")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(fibrig(&["--help"]).status.code(), Some(0));
    let o = fibrig(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    let o = fibrig(&["converge", "--eps", "one"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--eps"));
    let o = fibrig(&["geometry", "--alpha", "0.7"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alpha"));
    let o = fibrig(&["verify", "--only", "13"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--only"));
}

#[test]
fn fixed_length_lists() {
    let o = fibrig(&["phi-report", "--eps", "1/8", "--region", "0,0,0.5,0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = fibrig(&["geometry", "--omega", "-1,-1,1,1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = fibrig(&["lemma31", "--L", "1,2", "--fields", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--L"));
    assert!(stderr(&o).contains("expected 3"));
}

#[test]
fn criterion_failure_exits_one() {
    let o = fibrig(&["converge", "--preset", "twist", "--eps", "1/8,1/16"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("[FAIL]"));
}

#[test]
fn geometry_reports_layout() {
    let o = fibrig(&["geometry", "--eps", "1/8"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_object());
}

#[test]
fn converge_twist_rate() {
    let o = fibrig(&["converge", "--preset", "twist"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut pts = Vec::new();
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if &rec[1] == "lp_error" {
            let eps: fibrig::geometry::Eps = rec[0].parse().unwrap();
            pts.push((eps.value(), rec[2].parse::<f64>().unwrap()));
        }
    }
    assert_eq!(pts.len(), 3);
    let fit = fibrig::report::fit_rate(&pts).unwrap();
    assert!(fit.slope >= 0.9, "slope {}", fit.slope);
}

#[test]
fn lemma31_csv() {
    let o = fibrig(&["lemma31", "--fields", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_reader(o.stdout.as_slice());
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let ratio: f64 = rec[3].parse().unwrap();
        assert!(ratio >= 1.0 - 1e-9, "{} ratio {ratio}", &rec[0]);
        n += 1;
    }
    assert!(n >= 4);
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for i in 0..2 {
        let obj = dir.path().join(format!("demo{i}.obj"));
        let o = fibrig(&["--out", obj.to_str().unwrap(), "demo", "paraboloid", "--export", "obj", "--fibers", "3"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let csv = dir.path().join(format!("approx{i}.csv"));
        let o = fibrig(&["--out", csv.to_str().unwrap(), "approximate", "--preset", "shear", "--eps", "1/8,1/16,1/32", "--translations", "8"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        files.push((std::fs::read(obj).unwrap(), std::fs::read(csv).unwrap()));
    }
    assert_eq!(files[0], files[1]);
    let obj = String::from_utf8(files[0].0.clone()).unwrap();
    assert!(obj.lines().any(|l| l.starts_with("v ")));
    assert!(obj.lines().any(|l| l.starts_with("f ")));
    assert!(obj.lines().any(|l| l.starts_with("l ")));
}

#[test]
fn export_mesh_vtk() {
    let o = fibrig(&["export-mesh", "--bending", "2", "--eps", "1/8", "--format", "vtk", "--res", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.starts_with("# vtk DataFile"));
    assert!(s.contains("POLYGONS"));
    assert!(s.contains("displacement"));
}

#[test]
fn verify_subset_json() {
    let o = fibrig(&["verify", "--only", "4,11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let ids: Vec<u64> = v["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![4, 11]);
}
