#![no_main]

use courtside::io::{read_fieldset, write_fieldset};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(fields) = read_fieldset(data) else { return };
    // Blocks may arrive in any order, so compare the canonical form.
    let canonical = write_fieldset(&fields);
    let reread = read_fieldset(&canonical).expect("canonical bytes must parse");
    assert_eq!(write_fieldset(&reread), canonical);
});
