//! Regenerates the checked-in fact fixtures from their builders.
//! A unit test asserts the checked-in files match this output byte-for-byte.

use std::path::Path;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for (name, fb) in reasm::testutil::all_fixtures() {
        let dir = root.join(name);
        reasm::facts::io::dump_facts(&fb, &dir).unwrap();
        println!("wrote {}", dir.display());
    }
}
