//! Regenerates the replay bundle under `tests/fixtures/bundle`.
//!
//!     cargo run -p cotpack-core --example make_fixture

#[path = "../tests/support/mod.rs"]
mod support;

fn main() {
    let dir = support::bundle_dir();
    std::fs::create_dir_all(&dir).expect("create bundle dir");
    let n = support::write_bundle(&dir);
    println!("wrote {n} replay entries to {}", dir.display());
}
