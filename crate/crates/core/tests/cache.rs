use std::process::Command;

fn oracle_count(cache: &std::path::Path) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_pirogov"))
        .args(["oracle", "count", "--model", "potts-contour", "--box", "6x6", "--z", "0.1"])
        .env("PIROGOV_CACHE_DIR", cache)
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

fn entries(dir: &std::path::Path) -> Vec<std::path::PathBuf> {
    std::fs::read_dir(dir).map(|d| d.map(|e| e.unwrap().path()).collect()).unwrap_or_default()
}

#[test]
fn oracle_results_are_cached_and_reused() {
    let dir = std::env::temp_dir().join(format!("pirogov-cache-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();

    let first = oracle_count(&dir);
    let files = entries(&dir);
    assert_eq!(files.len(), 1, "{files:?}");
    let name = files[0].file_name().unwrap().to_string_lossy().into_owned();
    assert!(name.starts_with("spin-") && name.ends_with(".json"));
    let stamp = std::fs::metadata(&files[0]).unwrap().modified().unwrap();

    let second = oracle_count(&dir);
    assert_eq!(first, second);
    assert_eq!(entries(&dir), files);
    assert_eq!(std::fs::metadata(&files[0]).unwrap().modified().unwrap(), stamp);

    // a corrupt entry is recomputed rather than trusted
    std::fs::write(&files[0], "not json").unwrap();
    assert_eq!(oracle_count(&dir), first);
    assert_ne!(std::fs::read_to_string(&files[0]).unwrap(), "not json");

    std::fs::remove_dir_all(&dir).ok();
}
