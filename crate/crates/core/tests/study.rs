use lodwave::leapfrog::Variant;
use lodwave::study::{run_convergence_study, write_error_csv, ErrorTable, ExampleSpec, ExperimentConfig};

fn config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ExampleSpec::Example2, vec![1, 2, 3], 6, vec![1, 2]);
    cfg.final_time = 0.5;
    cfg.variants = vec![Variant::Lod, Variant::LodSimplified];
    cfg
}

/// CSV without the wall-clock column.
fn csv_without_seconds(table: &ErrorTable) -> String {
    let mut out = Vec::new();
    write_error_csv(table, &mut out).unwrap();
    String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| {
            let mut cols: Vec<&str> = l.split(',').collect();
            cols.remove(5);
            cols.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn identical_configs_give_identical_tables() {
    let a = run_convergence_study(&config()).unwrap();
    let mut cfg = config();
    cfg.jobs = 3;
    let b = run_convergence_study(&cfg).unwrap();
    assert_eq!(a.failures(), 0);
    assert_eq!(csv_without_seconds(&a), csv_without_seconds(&b));
}

#[test]
fn cached_correctors_reproduce_fresh_rows() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.cache_dir = Some(dir.path().to_path_buf());
    std::env::remove_var("LODWAVE_CACHE_DIR");
    let fresh = run_convergence_study(&cfg).unwrap();
    let cached = run_convergence_study(&cfg).unwrap();
    assert!(cached.rows.iter().all(|r| r.cache_hit));
    assert!(cached.reference.cache_hit);
    for (f, c) in fresh.rows.iter().zip(&cached.rows) {
        let (f, c) = (f.error.unwrap(), c.error.unwrap());
        assert!((f - c).abs() <= 1e-12 * f.max(1.0), "{f} vs {c}");
    }
}

#[test]
fn lod_variants_converge_on_example2() {
    let table = run_convergence_study(&config()).unwrap();
    for variant in [Variant::Lod, Variant::LodSimplified] {
        let e: Vec<f64> = table.series(variant, Some(2)).iter().map(|r| r.error.unwrap()).collect();
        assert!(e[2] < e[1] && e[1] < e[0], "{variant:?}: {e:?}");
    }
    // Both mass matrices give close errors.
    for (a, b) in table.series(Variant::Lod, Some(2)).iter().zip(table.series(Variant::LodSimplified, Some(2))) {
        let (a, b) = (a.error.unwrap(), b.error.unwrap());
        assert!((a - b).abs() <= 0.25 * a.min(b), "{a} vs {b}");
    }
}

#[test]
fn standard_fem_is_worse_than_lod_on_rough_coefficient() {
    let mut cfg = config();
    cfg.ell = lodwave::study::Layers::One(2);
    cfg.variants = vec![Variant::Lod, Variant::StandardFem];
    let table = run_convergence_study(&cfg).unwrap();
    let lod = table.series(Variant::Lod, Some(2)).last().unwrap().error.unwrap();
    let fem = table.series(Variant::StandardFem, None).last().unwrap().error.unwrap();
    assert!(lod < fem, "lod {lod} vs fem {fem}");
}
