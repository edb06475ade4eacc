use std::path::Path;
use std::process::Command;

fn header() -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/sare.h")).unwrap()
}

#[test]
fn header_declares_the_api() {
    let h = header();
    for decl in [
        "typedef struct SareEngine SareEngine;",
        "typedef struct SarePrediction SarePrediction;",
        "SARE_STATUS_DIMENSION_MISMATCH = 3",
        "SARE_ROUTE_SYSTEM2_FALLBACK = 2",
        "sare_engine_open(const char *kb_dir, const char *backend, struct SareEngine **out)",
        "const char *sare_prediction_label(const struct SarePrediction *pred)",
        "double sare_uncertainty_penalty(uint64_t total_n, uint64_t n_c)",
        "const char *sare_last_error(void)",
    ] {
        assert!(h.contains(decl), "missing {decl}");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I"])
            .arg(&dir)
            .arg(dir.join("sare.h"))
            .status();
        match status {
            Ok(s) => assert!(s.success(), "{compiler} rejected sare.h"),
            Err(e) => eprintln!("skipping {compiler}: {e}"),
        }
    }
}
