//! Run-length encoding of pixel sets over row-major pixel order.
//!
//! A run is `[start, length]`. Runs are strictly increasing, non-empty and
//! separated by at least one pixel, so every pixel set has exactly one
//! encoding.

use crate::error::{Error, Result};

/// Encodes sorted unique pixel indices. Unsorted input is sorted first.
pub fn encode_rle(pixels: &[u32]) -> Vec<[u32; 2]> {
    let mut sorted;
    let pixels = if pixels.windows(2).all(|w| w[0] < w[1]) {
        pixels
    } else {
        sorted = pixels.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        &sorted
    };
    let mut runs: Vec<[u32; 2]> = Vec::new();
    for &p in pixels {
        match runs.last_mut() {
            Some(run) if run[0] as u64 + run[1] as u64 == p as u64 => run[1] += 1,
            _ => runs.push([p, 1]),
        }
    }
    runs
}

/// Decodes runs into sorted unique pixel indices, checking every run against
/// a grid of `pixel_count` pixels.
pub fn decode_rle(runs: &[[u32; 2]], pixel_count: usize) -> Result<Vec<u32>> {
    let mut out = Vec::new();
    let mut next_free: u64 = 0;
    for (i, &[start, len]) in runs.iter().enumerate() {
        if len == 0 {
            return Err(Error::schema(format!("run {i} is empty")));
        }
        let (start, end) = (start as u64, start as u64 + len as u64);
        if i > 0 && start <= next_free {
            return Err(Error::schema(format!("run {i} overlaps, touches or precedes run {}", i - 1)));
        }
        if end > pixel_count as u64 {
            return Err(Error::schema(format!("run {i} ends at pixel {end}, grid has {pixel_count}")));
        }
        out.extend(start as u32..end as u32);
        next_free = end;
    }
    Ok(out)
}
