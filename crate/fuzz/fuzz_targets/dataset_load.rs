#![no_main]

use libfuzzer_sys::fuzz_target;
use sparseloco::data::{decode_dataset, encode_dataset};

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = decode_dataset(data) {
        assert_eq!(ds.data.inputs.len(), ds.data.len() * ds.data.input_dim);
        assert_eq!(decode_dataset(&encode_dataset(&ds)).expect("re-encoded dataset decodes"), ds);
    }
});
