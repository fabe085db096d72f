#![no_main]

use courtside::decode::{decode, DecodeConfig};
use courtside::io::read_fieldset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(fields) = read_fieldset(data) else { return };
    // Keep iterations fast on large grids.
    if fields.grid().pixel_count() > 128 * 128 {
        return;
    }
    let _ = decode(&fields, &DecodeConfig::default());
});
