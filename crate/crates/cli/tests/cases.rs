//! The JSON files under `cases/` are the built-in constructors, serialized.
//! Run with `OLC_SIM_BLESS=1` to regenerate them.

use std::path::PathBuf;

use olc_sim::cases::{builtin, BUILTIN};
use olc_sim::scenario::{load_scenario, parse_scenario, to_json, write_scenario};

fn case_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases")
}

#[test]
fn golden_files_match_builtins() {
    let bless = std::env::var_os("OLC_SIM_BLESS").is_some();
    for name in BUILTIN {
        let path = case_dir().join(format!("{name}.json"));
        let file = builtin(name).unwrap();
        if bless {
            write_scenario(&path, &file).unwrap();
        }
        let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, to_json(&file), "{name}.json is stale; rerun with OLC_SIM_BLESS=1");
        assert_eq!(parse_scenario(&text, name).unwrap(), file);
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(loaded.name, *name);
    }
}
