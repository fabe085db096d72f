#![no_main]

use courtside::io::parse_scene;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|text: &str| {
    let Ok(doc) = parse_scene(text) else { return };
    // Validation may reject the document but must not panic.
    let _ = doc.to_scene();
});
