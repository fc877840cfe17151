//! Bring-up time for 10, 15 and 20 planes of 22 satellites with a 1 ms
//! cost per backend operation.

use std::time::Duration;

use orbitemu::backends::{LatencyModel, RecordingBackend};
use orbitemu::bench::{bench_bringup, write_bringup_csv, DEFAULT_SIZES};

fn main() -> orbitemu::Result<()> {
    let rows = bench_bringup(&DEFAULT_SIZES, 4, || {
        Ok(RecordingBackend::new(LatencyModel::constant(Duration::from_millis(1))))
    })?;
    write_bringup_csv(&rows, std::io::stdout())?;
    Ok(())
}
