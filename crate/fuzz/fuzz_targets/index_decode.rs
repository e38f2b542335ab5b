#![no_main]

use libfuzzer_sys::fuzz_target;
use sparseloco::index_codec::{read_naive, BitReader, EnumerativeCodec};

// First four bytes pick (C, k); the rest is the bitstream.
fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let c = (u16::from_le_bytes([data[0], data[1]]) as usize % 4096) + 1;
    let k = (u16::from_le_bytes([data[2], data[3]]) as usize % c) + 1;
    let body = &data[4..];
    if let Ok(set) = read_naive(&mut BitReader::from_bytes(body), c, k) {
        assert_eq!(set.k(), k);
        assert!(set.indices().windows(2).all(|w| w[0] < w[1]));
    }
    let codec = EnumerativeCodec::new(c, k).expect("valid shape");
    if let Ok(set) = codec.read(&mut BitReader::from_bytes(body)) {
        assert_eq!(set.k(), k);
        assert!(set.indices().iter().all(|&i| (i as usize) < c));
        let rank = codec.rank(&set).expect("decoded set ranks");
        assert_eq!(codec.unrank(&rank).expect("rank in range"), set);
    }
});
