#![no_main]

use adaptive_reach::io::tables::{read_provenance, read_rows, trials_from_rows, PointRow, TrialRow};
use libfuzzer_sys::fuzz_target;

// Input: a trials table and a trajectories table separated by a NUL byte.
fuzz_target!(|data: &[u8]| {
    let (a, b) = match data.iter().position(|&c| c == 0) {
        Some(k) => (&data[..k], &data[k + 1..]),
        None => (data, &[][..]),
    };
    let _ = read_provenance(&String::from_utf8_lossy(a));
    let rows = read_rows::<_, TrialRow>(a);
    let points = read_rows::<_, PointRow>(b);
    if let (Ok(rows), Ok(points)) = (rows, points) {
        let _ = trials_from_rows(&rows, &points);
    }
});
