//! Regenerates the bundled three-stock tick fixture.
//!
//! ```sh
//! cargo run -p tickbound --example make_fixture -- crates/tickbound/fixtures/ticks
//! ```

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use chrono::DateTime;
use tickbound_core::series::filter_series;
use tickbound_core::synth::RandomWalk;
use tickbound_core::{Price, QuantizationScheme};

const DAYS: usize = 3;
const TICKS_PER_DAY: usize = 1500;

fn main() {
    let dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "fixtures/ticks".into()),
    );
    fs::create_dir_all(&dir).expect("create fixture directory");
    let stocks = [
        ("000001", 1860, 11),
        ("600000", 980, 12),
        ("300750", 2500, 13),
    ];
    for (code, start, seed) in stocks {
        let walk = RandomWalk {
            start: Price(start),
            ..RandomWalk::default()
        };
        let series = walk.series(code, DAYS, TICKS_PER_DAY, seed);
        let coarse = QuantizationScheme::fixed_interval(Price(5)).unwrap();
        assert!(
            filter_series(&series, &coarse, 1000, 10).is_keep(),
            "{code}: seed {seed} does not span ten states at T=0.05"
        );
        let mut out = fs::File::create(dir.join(format!("{code}.csv"))).unwrap();
        writeln!(out, "code,time,last_price,volume").unwrap();
        for (i, &(ts, p)) in series.points().iter().enumerate() {
            let time = DateTime::from_timestamp(ts, 0).unwrap().naive_utc();
            let volume = 100 * ((i * 7919) % 50 + 1);
            writeln!(
                out,
                "{code},{},{p},{volume}",
                time.format("%Y-%m-%d %H:%M:%S")
            )
            .unwrap();
        }
    }
}
