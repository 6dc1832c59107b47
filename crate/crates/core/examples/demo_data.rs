//! Writes the bundled synthetic fixtures to a directory, ready for the
//! CLI: a raw GPS track CSV, a Foursquare-style check-in TSV, and the
//! preprocessed periodic benchmark dataset.
//!
//! Usage: `cargo run --release -p nextpoi --example demo_data -- <dir>`

use std::path::PathBuf;

use nextpoi::fixtures;

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| PathBuf::from("demo-data"));
    std::fs::create_dir_all(&dir).expect("create output directory");

    let gps = dir.join("gps.csv");
    std::fs::write(&gps, fixtures::write_gps_csv(&fixtures::gps_fixture())).unwrap();

    let tsv = dir.join("checkins.tsv");
    std::fs::write(&tsv, fixtures::checkin_tsv_fixture()).unwrap();

    let periodic = dir.join("periodic.json");
    fixtures::periodic_checkin_dataset(7).save(&periodic).unwrap();

    println!("wrote {}", gps.display());
    println!("wrote {}", tsv.display());
    println!("wrote {}", periodic.display());
}
