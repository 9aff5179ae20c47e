use std::path::Path;

use bgmatte::harness::{data_root, DATA_ROOT_ENV};

// Mutates the process environment, so it lives alone in this binary.
#[test]
fn env_var_overrides_manifest_directory() {
    let manifest = Path::new("/data/set/manifest.json");
    std::env::remove_var(DATA_ROOT_ENV);
    assert_eq!(data_root(manifest), Path::new("/data/set"));
    std::env::set_var(DATA_ROOT_ENV, "/elsewhere");
    assert_eq!(data_root(manifest), Path::new("/elsewhere"));
    std::env::set_var(DATA_ROOT_ENV, "");
    assert_eq!(data_root(manifest), Path::new("/data/set"));
    std::env::remove_var(DATA_ROOT_ENV);
}
