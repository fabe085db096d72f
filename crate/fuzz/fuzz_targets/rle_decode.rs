#![no_main]

use courtside::io::{decode_rle, encode_rle};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let pixel_count = u16::from_le_bytes([data[0], data[1]]) as usize;
    let runs: Vec<[u32; 2]> = data[2..]
        .chunks_exact(4)
        .map(|c| [u16::from_le_bytes([c[0], c[1]]) as u32, u16::from_le_bytes([c[2], c[3]]) as u32])
        .collect();
    if let Ok(pixels) = decode_rle(&runs, pixel_count) {
        assert_eq!(encode_rle(&pixels), runs);
    }
});
